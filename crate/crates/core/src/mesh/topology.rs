use std::collections::HashMap;

use super::IndexedMesh;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopologyReport {
    /// Vertices referenced by at least one triangle.
    pub vertices: usize,
    pub isolated_vertices: usize,
    pub edges: usize,
    pub faces: usize,
    pub components: usize,
    /// Edges used by exactly one triangle.
    pub boundary_edges: usize,
    /// Edges used by more than two triangles.
    pub nonmanifold_edges: usize,
    /// Two-triangle edges traversed in the same direction by both triangles.
    pub misoriented_edges: usize,
    /// Every edge is shared by exactly two triangles.
    pub watertight: bool,
    /// No edge has more than two triangles and every vertex's triangles form
    /// one edge-connected fan.
    pub manifold: bool,
}

impl TopologyReport {
    pub fn euler_characteristic(&self) -> i64 {
        self.vertices as i64 - self.edges as i64 + self.faces as i64
    }

    /// Total genus, defined for closed orientable manifolds only.
    pub fn genus(&self) -> Option<i64> {
        if !(self.watertight && self.manifold && self.misoriented_edges == 0) {
            return None;
        }
        let twice = 2 * self.components as i64 - self.euler_characteristic();
        (twice >= 0 && twice % 2 == 0).then_some(twice / 2)
    }
}

struct DisjointSet(Vec<usize>);

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self((0..n).collect())
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.0[i] != i {
            self.0[i] = self.0[self.0[i]];
            i = self.0[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

pub fn analyze_topology(mesh: &IndexedMesh) -> TopologyReport {
    let nv = mesh.vertices.len();
    // Per undirected edge: use count and net direction (+1 low->high).
    let mut edges: HashMap<(u32, u32), (usize, i64)> = HashMap::new();
    let mut referenced = vec![false; nv];
    let mut sets = DisjointSet::new(nv);
    let mut fans: Vec<Vec<(u32, u32)>> = vec![Vec::new(); nv];

    for &t in &mesh.triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            let e = edges.entry((a.min(b), a.max(b))).or_default();
            e.0 += 1;
            e.1 += if a < b { 1 } else { -1 };
            referenced[a as usize] = true;
            sets.union(a as usize, b as usize);
            fans[a as usize].push((b, t[(k + 2) % 3]));
        }
    }

    let (mut boundary, mut nonmanifold, mut misoriented) = (0, 0, 0);
    for &(count, net) in edges.values() {
        match count {
            1 => boundary += 1,
            2 if net != 0 => misoriented += 1,
            2 => {}
            _ => nonmanifold += 1,
        }
    }

    let vertices = referenced.iter().filter(|&&r| r).count();
    let mut roots: Vec<usize> = (0..nv)
        .filter(|&v| referenced[v])
        .map(|v| sets.find(v))
        .collect();
    roots.sort_unstable();
    roots.dedup();

    let fans_connected = fans.iter().all(|fan| fan_is_connected(fan));

    TopologyReport {
        vertices,
        isolated_vertices: nv - vertices,
        edges: edges.len(),
        faces: mesh.triangles.len(),
        components: roots.len(),
        boundary_edges: boundary,
        nonmanifold_edges: nonmanifold,
        misoriented_edges: misoriented,
        watertight: boundary == 0 && nonmanifold == 0,
        manifold: nonmanifold == 0 && fans_connected,
    }
}

/// Whether the triangles around one vertex, given as their opposite edges,
/// are connected through shared edges at that vertex.
fn fan_is_connected(fan: &[(u32, u32)]) -> bool {
    if fan.len() <= 1 {
        return true;
    }
    let mut ids: HashMap<u32, usize> = HashMap::new();
    for &(a, b) in fan {
        let n = ids.len();
        ids.entry(a).or_insert(n);
        let n = ids.len();
        ids.entry(b).or_insert(n);
    }
    let mut sets = DisjointSet::new(ids.len());
    for &(a, b) in fan {
        sets.union(ids[&a], ids[&b]);
    }
    (0..ids.len()).all(|i| sets.find(i) == 0)
}
