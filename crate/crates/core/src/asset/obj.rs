use std::fmt::Write;

use super::AssetError;
use crate::mesh::{IndexedMesh, Vertex};

pub const MTL_FILE_NAME: &str = "material.mtl";
const MATERIAL_NAME: &str = "default";

fn num(v: f64) -> String {
    let s = format!("{v:.6}");
    if s == "-0.000000" {
        "0.000000".into()
    } else {
        s
    }
}

fn object_name(name: &str) -> String {
    let cleaned: String = name
        .chars()
        .map(|c| if c.is_ascii_graphic() { c } else { '_' })
        .collect();
    if cleaned.is_empty() {
        "mesh".into()
    } else {
        cleaned
    }
}

/// Single white Lambertian material referenced by every exported mesh.
pub fn default_mtl() -> String {
    format!(
        "# meshforge MTL\nnewmtl {MATERIAL_NAME}\nKa 0.000000 0.000000 0.000000\nKd 1.000000 1.000000 1.000000\nKs 0.000000 0.000000 0.000000\nd 1.000000\nillum 1\n"
    )
}

/// Writes `mesh` as ASCII OBJ text with `v x y z r g b` vertex colors and one
/// normal per vertex. Returns the OBJ and MTL documents.
pub fn export_obj(mesh: &IndexedMesh, name: &str) -> Result<(String, String), AssetError> {
    if mesh.triangles.is_empty() {
        return Err(AssetError::EmptyMesh);
    }
    let mut out = String::new();
    out.push_str("# meshforge OBJ\n");
    let _ = writeln!(out, "mtllib {MTL_FILE_NAME}");
    let _ = writeln!(out, "o {}", object_name(name));
    for v in &mesh.vertices {
        let [x, y, z] = v.position.map(num);
        let [r, g, b] = v.color.map(num);
        let _ = writeln!(out, "v {x} {y} {z} {r} {g} {b}");
    }
    for (i, v) in mesh.vertices.iter().enumerate() {
        let [x, y, z] = v.normal.ok_or(AssetError::MissingNormals(i))?.map(num);
        let _ = writeln!(out, "vn {x} {y} {z}");
    }
    let _ = writeln!(out, "usemtl {MATERIAL_NAME}");
    for t in &mesh.triangles {
        let [a, b, c] = t.map(|i| i + 1);
        let _ = writeln!(out, "f {a}//{a} {b}//{b} {c}//{c}");
    }
    Ok((out, default_mtl()))
}

fn parse_floats(line: usize, fields: &[&str]) -> Result<Vec<f64>, AssetError> {
    fields
        .iter()
        .map(|f| {
            f.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| AssetError::ParseError {
                    line,
                    reason: format!("bad number `{f}`"),
                })
        })
        .collect()
}

/// Resolves a 1-based (or negative, relative) OBJ index against `count`.
fn resolve(line: usize, raw: &str, count: usize) -> Result<usize, AssetError> {
    let index: i64 = raw.parse().map_err(|_| AssetError::ParseError {
        line,
        reason: format!("bad index `{raw}`"),
    })?;
    let resolved = match index {
        i if i > 0 => i - 1,
        i if i < 0 => count as i64 + i,
        _ => -1,
    };
    if resolved < 0 || resolved >= count as i64 {
        return Err(AssetError::IndexOutOfRange { line, index });
    }
    Ok(resolved as usize)
}

/// Parses `v`, `vn` and `f` records; other statements are ignored. Faces
/// with more than three corners are fan-triangulated from their first corner.
/// Vertices without colors are white; a vertex takes the first normal any
/// face assigns to it.
pub fn import_obj(text: &str) -> Result<IndexedMesh, AssetError> {
    let mut vertices: Vec<Vertex> = Vec::new();
    let mut normals: Vec<[f64; 3]> = Vec::new();
    let mut triangles = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        let mut fields = content.split_whitespace();
        let Some(keyword) = fields.next() else {
            continue;
        };
        let rest: Vec<&str> = fields.collect();
        match keyword {
            "v" => {
                let vals = parse_floats(line, &rest)?;
                let color = match vals.len() {
                    3 => [1.0; 3],
                    6 => [vals[3], vals[4], vals[5]],
                    n => {
                        return Err(AssetError::ParseError {
                            line,
                            reason: format!("vertex has {n} values, expected 3 or 6"),
                        })
                    }
                };
                vertices.push(Vertex::new([vals[0], vals[1], vals[2]], color));
            }
            "vn" => {
                let vals = parse_floats(line, &rest)?;
                if vals.len() != 3 {
                    return Err(AssetError::ParseError {
                        line,
                        reason: format!("normal has {} values, expected 3", vals.len()),
                    });
                }
                normals.push([vals[0], vals[1], vals[2]]);
            }
            "f" => {
                if rest.len() < 3 {
                    return Err(AssetError::ParseError {
                        line,
                        reason: format!("face has {} corners", rest.len()),
                    });
                }
                let mut corners = Vec::with_capacity(rest.len());
                for corner in &rest {
                    let parts: Vec<&str> = corner.split('/').collect();
                    if parts.len() > 3 {
                        return Err(AssetError::ParseError {
                            line,
                            reason: format!("malformed face corner `{corner}`"),
                        });
                    }
                    let v = resolve(line, parts[0], vertices.len())?;
                    if let Some(n) = parts.get(2).filter(|s| !s.is_empty()) {
                        let n = resolve(line, n, normals.len())?;
                        vertices[v].normal.get_or_insert(normals[n]);
                    }
                    corners.push(v as u32);
                }
                for k in 1..corners.len() - 1 {
                    triangles.push([corners[0], corners[k], corners[k + 1]]);
                }
            }
            _ => {}
        }
    }
    Ok(IndexedMesh {
        vertices,
        triangles,
    })
}
