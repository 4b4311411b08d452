//! Binary container for a triplane and its decoder heads.
//!
//! Layout (all integers u32 LE, all payloads f32 LE):
//!
//! ```text
//! magic "MFTW" | version | R | C
//! XY plane (R*R*C) | XZ plane | YZ plane
//! per head in order sdf, color, flex:
//!   layer count (2)
//!   per layer: inputs | outputs | weights (outputs*inputs, row-major) | bias (outputs)
//! ```

use std::io::{Read, Write};

use super::{DecoderHeads, Mlp, ReconError, Triplane};
use crate::recon::Plane;

pub const WEIGHTS_MAGIC: [u8; 4] = *b"MFTW";
pub const WEIGHTS_VERSION: u32 = 1;

/// Anything bigger is treated as a corrupt header rather than allocated.
const MAX_DIMENSION: u32 = 1 << 14;

pub fn write_weights<W: Write>(
    mut out: W,
    tp: &Triplane,
    heads: &DecoderHeads,
) -> Result<(), ReconError> {
    out.write_all(&WEIGHTS_MAGIC)?;
    for v in [WEIGHTS_VERSION, tp.resolution() as u32, tp.channels() as u32] {
        out.write_all(&v.to_le_bytes())?;
    }
    for plane in Plane::ALL {
        write_f32s(&mut out, tp.plane(plane))?;
    }
    for head in [&heads.sdf, &heads.color, &heads.flex] {
        out.write_all(&2u32.to_le_bytes())?;
        let dims = [
            (head.inputs(), head.hidden()),
            (head.hidden(), head.outputs()),
        ];
        for ((w, b), (i, o)) in head.layers().into_iter().zip(dims) {
            out.write_all(&(i as u32).to_le_bytes())?;
            out.write_all(&(o as u32).to_le_bytes())?;
            write_f32s(&mut out, w)?;
            write_f32s(&mut out, b)?;
        }
    }
    Ok(())
}

fn write_f32s<W: Write>(out: &mut W, values: &[f32]) -> std::io::Result<()> {
    for v in values {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn u32(&mut self, what: &str) -> Result<u32, ReconError> {
        let mut b = [0u8; 4];
        self.inner
            .read_exact(&mut b)
            .map_err(|_| ReconError::WeightsFormat(format!("truncated while reading {what}")))?;
        Ok(u32::from_le_bytes(b))
    }

    fn dim(&mut self, what: &str) -> Result<usize, ReconError> {
        let v = self.u32(what)?;
        if v == 0 || v > MAX_DIMENSION {
            return Err(ReconError::WeightsFormat(format!("{what} = {v} out of range")));
        }
        Ok(v as usize)
    }

    fn f32s(&mut self, count: usize, what: &str) -> Result<Vec<f32>, ReconError> {
        let mut bytes = vec![0u8; count * 4];
        self.inner
            .read_exact(&mut bytes)
            .map_err(|_| ReconError::WeightsFormat(format!("truncated while reading {what}")))?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }
}

pub fn read_weights<R: Read>(input: R) -> Result<(Triplane, DecoderHeads), ReconError> {
    let mut r = Reader { inner: input };
    let mut magic = [0u8; 4];
    r.inner
        .read_exact(&mut magic)
        .map_err(|_| ReconError::WeightsFormat("missing magic".into()))?;
    if magic != WEIGHTS_MAGIC {
        return Err(ReconError::WeightsFormat(format!("bad magic {magic:?}")));
    }
    let version = r.u32("version")?;
    if version != WEIGHTS_VERSION {
        return Err(ReconError::WeightsFormat(format!("unsupported version {version}")));
    }
    let res = r.dim("resolution")?;
    let ch = r.dim("channels")?;
    let plane_len = res
        .checked_mul(res)
        .and_then(|v| v.checked_mul(ch))
        .ok_or_else(|| ReconError::WeightsFormat("plane size overflow".into()))?;
    let planes = [
        r.f32s(plane_len, "XY plane")?,
        r.f32s(plane_len, "XZ plane")?,
        r.f32s(plane_len, "YZ plane")?,
    ];
    let tp = Triplane::new(res, ch, planes)?;

    let mut heads = Vec::with_capacity(3);
    for name in ["sdf", "color", "flex"] {
        let layers = r.u32("layer count")?;
        if layers != 2 {
            return Err(ReconError::WeightsFormat(format!(
                "{name} head has {layers} layers, expected 2"
            )));
        }
        let in1 = r.dim("layer inputs")?;
        let hidden = r.dim("layer outputs")?;
        let w1 = r.f32s(in1 * hidden, "weights")?;
        let b1 = r.f32s(hidden, "bias")?;
        let in2 = r.dim("layer inputs")?;
        let out = r.dim("layer outputs")?;
        if in2 != hidden {
            return Err(ReconError::WeightsFormat(format!(
                "{name} head layers do not chain ({hidden} -> {in2})"
            )));
        }
        let w2 = r.f32s(hidden * out, "weights")?;
        let b2 = r.f32s(out, "bias")?;
        heads.push(Mlp::new(in1, hidden, out, w1, b1, w2, b2)?);
    }
    let flex = heads.pop().unwrap();
    let color = heads.pop().unwrap();
    let sdf = heads.pop().unwrap();
    let heads = DecoderHeads::new(sdf, color, flex)?;
    if heads.input_width() != ch {
        return Err(ReconError::WeightsFormat(format!(
            "heads take {} inputs but planes have {ch} channels",
            heads.input_width()
        )));
    }
    let mut trailing = [0u8; 1];
    if r.inner.read(&mut trailing)? != 0 {
        return Err(ReconError::WeightsFormat("trailing bytes after flex head".into()));
    }
    Ok((tp, heads))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let tp = Triplane::random(6, 5, 1).unwrap();
        let heads = DecoderHeads::random(5, 7, 2);
        let mut buf = Vec::new();
        write_weights(&mut buf, &tp, &heads).unwrap();
        assert_eq!(&buf[..4], b"MFTW");
        let (tp2, heads2) = read_weights(buf.as_slice()).unwrap();
        assert_eq!(tp, tp2);
        assert_eq!(heads, heads2);
    }

    #[test]
    fn rejects_corruption() {
        let tp = Triplane::random(3, 2, 1).unwrap();
        let heads = DecoderHeads::random(2, 3, 2);
        let mut buf = Vec::new();
        write_weights(&mut buf, &tp, &heads).unwrap();

        let mut bad_magic = buf.clone();
        bad_magic[0] = b'X';
        assert!(matches!(read_weights(bad_magic.as_slice()), Err(ReconError::WeightsFormat(_))));

        let mut bad_version = buf.clone();
        bad_version[4] = 9;
        assert!(matches!(read_weights(bad_version.as_slice()), Err(ReconError::WeightsFormat(_))));

        let truncated = &buf[..buf.len() - 3];
        assert!(matches!(read_weights(truncated), Err(ReconError::WeightsFormat(_))));

        let mut trailing = buf.clone();
        trailing.push(0);
        assert!(matches!(read_weights(trailing.as_slice()), Err(ReconError::WeightsFormat(_))));
    }
}
