//! `CSAH` checkpoints and the head config that accompanies them.
//!
//! Layout, all little-endian:
//!
//! ```text
//! b"CSAH"  u32 version
//! repeated until EOF:
//!   u32 name_len  name (UTF-8)  u32 rank  u32 × rank dims  f64 × Π dims
//! ```
//!
//! The checkpoint stores tensors only. Method, class count and
//! hyperparameters live in a flat TOML file next to it (same stem, `.toml`).

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ParamStore, Tensor};

use super::head::{HeadParams, Hyper, Method};

pub const CSAH_MAGIC: &[u8; 4] = b"CSAH";
pub const CSAH_VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(mut out: W, params: &ParamStore) -> Result<()> {
    out.write_all(CSAH_MAGIC)?;
    out.write_all(&CSAH_VERSION.to_le_bytes())?;
    for (name, t) in params.iter() {
        let u32_of = |n: usize| {
            u32::try_from(n).map_err(|_| Error::Format(format!("`{name}`: {n} does not fit in u32")))
        };
        out.write_all(&u32_of(name.len())?.to_le_bytes())?;
        out.write_all(name.as_bytes())?;
        out.write_all(&u32_of(t.rank())?.to_le_bytes())?;
        for &d in t.shape() {
            out.write_all(&u32_of(d)?.to_le_bytes())?;
        }
        for &v in t.data() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn truncated(e: std::io::Error) -> Error {
    match e.kind() {
        ErrorKind::UnexpectedEof => Error::Format("truncated CSAH block".into()),
        _ => Error::Io(e),
    }
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    input.read_exact(&mut buf).map_err(truncated)?;
    Ok(u32::from_le_bytes(buf))
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<ParamStore> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic).map_err(truncated)?;
    if &magic != CSAH_MAGIC {
        return Err(Error::Format(format!("bad CSAH magic {magic:?}")));
    }
    let version = read_u32(&mut input)?;
    if version != CSAH_VERSION {
        return Err(Error::Format(format!("unsupported CSAH version {version}")));
    }
    let mut store = ParamStore::new();
    loop {
        // a clean EOF is only allowed between blocks
        let mut len_buf = [0u8; 4];
        let got = read_full(&mut input, &mut len_buf)?;
        if got == 0 {
            break;
        }
        if got < 4 {
            return Err(Error::Format("truncated CSAH block header".into()));
        }
        let name_len = u32::from_le_bytes(len_buf) as usize;
        let mut name = vec![0u8; name_len];
        input.read_exact(&mut name).map_err(truncated)?;
        let name = String::from_utf8(name).map_err(|_| Error::Format("parameter name is not UTF-8".into()))?;
        if store.contains(&name) {
            return Err(Error::Format(format!("duplicate parameter `{name}`")));
        }
        let rank = read_u32(&mut input)? as usize;
        let shape = (0..rank)
            .map(|_| read_u32(&mut input).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let count: usize = shape.iter().product();
        let mut bytes = vec![0u8; count * 8];
        input.read_exact(&mut bytes).map_err(truncated)?;
        let data = bytes
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        let tensor = Tensor::new(shape, data).map_err(|e| Error::Format(format!("`{name}`: {e}")))?;
        store.insert(name, tensor);
    }
    Ok(store)
}

fn read_full<R: Read>(input: &mut R, buf: &mut [u8]) -> Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match input.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(filled)
}

pub fn save_checkpoint(path: &Path, params: &ParamStore) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut out, params)?;
    out.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ParamStore> {
    read_checkpoint(BufReader::new(File::open(path)?))
}

/// Everything about a head except its tensors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub method: Method,
    pub classes: usize,
    #[serde(flatten)]
    pub hyper: Hyper,
}

impl HeadConfig {
    pub fn of(head: &HeadParams) -> Result<Self> {
        Ok(Self {
            method: head.method,
            classes: head.classes()?,
            hyper: head.hyper,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(format!("cannot serialize head config: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("bad head config: {e}")))
    }
}

/// Path of the config file belonging to checkpoint `path`.
pub fn config_path(path: &Path) -> PathBuf {
    path.with_extension("toml")
}

/// Writes the checkpoint at `path` and its config beside it.
pub fn save_head(path: &Path, head: &HeadParams) -> Result<()> {
    save_checkpoint(path, &head.store)?;
    fs::write(config_path(path), HeadConfig::of(head)?.to_toml()?)?;
    Ok(())
}

pub fn load_head(path: &Path) -> Result<HeadParams> {
    let config = HeadConfig::from_toml(&fs::read_to_string(config_path(path))?)?;
    let head = HeadParams {
        hyper: config.hyper,
        method: config.method,
        store: load_checkpoint(path)?,
    };
    head.check()?;
    if head.classes()? != config.classes {
        return Err(Error::Config(format!(
            "config says {} classes but the classifier has {}",
            config.classes,
            head.classes()?
        )));
    }
    Ok(head)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_block_layout() {
        let mut store = ParamStore::new();
        store.insert("ab", Tensor::matrix(1, 2, vec![1.5, -2.0]).unwrap());
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &store).unwrap();
        let mut expected = b"CSAH".to_vec();
        for v in [1u32, 2] {
            expected.extend(v.to_le_bytes());
        }
        expected.extend(b"ab");
        for v in [2u32, 1, 2] {
            expected.extend(v.to_le_bytes());
        }
        expected.extend(1.5f64.to_le_bytes());
        expected.extend((-2.0f64).to_le_bytes());
        assert_eq!(bytes, expected);
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for method in Method::ALL {
            let head = HeadParams::init(Hyper::default(), method, 7, 11).unwrap();
            let mut bytes = Vec::new();
            write_checkpoint(&mut bytes, &head.store).unwrap();
            let back = read_checkpoint(bytes.as_slice()).unwrap();
            assert_eq!(back, head.store);
        }
    }

    #[test]
    fn malformed_checkpoints() {
        let head = HeadParams::init(Hyper::default(), Method::Qan, 3, 0).unwrap();
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &head.store).unwrap();
        assert!(matches!(read_checkpoint(&bytes[..bytes.len() - 1]), Err(Error::Format(_))));
        assert!(matches!(read_checkpoint(&bytes[..2]), Err(Error::Format(_))));
        let mut bad = bytes.clone();
        bad[3] = b'X';
        assert!(matches!(read_checkpoint(bad.as_slice()), Err(Error::Format(_))));
        assert!(read_checkpoint(&bytes[..8]).unwrap().is_empty());
    }

    #[test]
    fn config_uses_flat_keys() {
        let head = HeadParams::init(Hyper::default(), Method::CsaNet, 30, 0).unwrap();
        let text = HeadConfig::of(&head).unwrap().to_toml().unwrap();
        for key in ["method = \"csa_net\"", "C = 64", "T = 8", "margin = 0.25", "lr_decay_every = 60"] {
            assert!(text.contains(key), "{key} missing from\n{text}");
        }
        assert_eq!(HeadConfig::from_toml(&text).unwrap(), HeadConfig::of(&head).unwrap());
    }

    #[test]
    fn head_save_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("head.csah");
        let head = HeadParams::init(Hyper::default(), Method::CscaV, 4, 2).unwrap();
        save_head(&path, &head).unwrap();
        assert_eq!(load_head(&path).unwrap(), head);
    }
}
