//! `CSAF` sequence files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! b"CSAF"  u32 version  u32 T  u32 C  u32 H  u32 W
//! f32 × (T·C·H·W)   frame maps, frame-major then row-major C×H×W
//! f32 × T           ground-truth quality labels
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::sequence::SequenceBatch;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const CSAF_MAGIC: &[u8; 4] = b"CSAF";
pub const CSAF_VERSION: u32 = 1;

pub fn write_csaf<W: Write>(mut out: W, seq: &SequenceBatch) -> Result<()> {
    let shape = seq.map_shape();
    let &[c, h, w] = shape else {
        return Err(Error::Format(format!("frame maps must be C×H×W, got {shape:?}")));
    };
    if seq.quality.len() != seq.frames.len() {
        return Err(Error::Format(format!(
            "{} frames but {} quality labels",
            seq.frames.len(),
            seq.quality.len()
        )));
    }
    out.write_all(CSAF_MAGIC)?;
    for v in [CSAF_VERSION, dim(seq.frames.len())?, dim(c)?, dim(h)?, dim(w)?] {
        out.write_all(&v.to_le_bytes())?;
    }
    for frame in &seq.frames {
        if frame.shape() != shape {
            return Err(Error::dim("write_csaf", shape, frame.shape()));
        }
        for &v in frame.data() {
            out.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    for &q in &seq.quality {
        out.write_all(&(q as f32).to_le_bytes())?;
    }
    Ok(())
}

fn dim(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Format(format!("dimension {n} does not fit in u32")))
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    input.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f32s<R: Read>(input: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; n * 4];
    input.read_exact(&mut bytes).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format("truncated CSAF payload".into()),
        _ => Error::Io(e),
    })?;
    Ok(bytes
        .chunks_exact(4)
        .map(|b| f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])))
        .collect())
}

/// Reads one sequence. The identity is not stored in the file and comes back
/// as `identity`.
pub fn read_csaf<R: Read>(mut input: R, identity: u32) -> Result<SequenceBatch> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != CSAF_MAGIC {
        return Err(Error::Format(format!("bad CSAF magic {magic:?}")));
    }
    let version = read_u32(&mut input)?;
    if version != CSAF_VERSION {
        return Err(Error::Format(format!("unsupported CSAF version {version}")));
    }
    let [t, c, h, w] = [0; 4].map(|_| read_u32(&mut input).map(|v| v as usize));
    let (t, c, h, w) = (t?, c?, h?, w?);
    if t == 0 || c == 0 || h == 0 || w == 0 {
        return Err(Error::Format(format!("empty CSAF dimensions {t}×{c}×{h}×{w}")));
    }
    let frame_len = c * h * w;
    let mut frames = Vec::with_capacity(t);
    for _ in 0..t {
        frames.push(Tensor::new(vec![c, h, w], read_f32s(&mut input, frame_len)?)?);
    }
    let quality = read_f32s(&mut input, t)?;
    let mut rest = [0u8; 1];
    if input.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after CSAF payload".into()));
    }
    Ok(SequenceBatch {
        identity,
        frames,
        quality,
    })
}

pub fn save_csaf(path: &Path, seq: &SequenceBatch) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_csaf(&mut out, seq)?;
    out.flush()?;
    Ok(())
}

pub fn load_csaf(path: &Path, identity: u32) -> Result<SequenceBatch> {
    read_csaf(BufReader::new(File::open(path)?), identity)
}
