//! Binary checkpoint format, all integers and values little-endian:
//!
//! ```text
//! "GLSS" | u32 version | u32 n | n bytes of JSON config | u32 count |
//! count × ( u32 name_len | name | u32 rank | rank × u32 dim | f32 values )
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::config::GlassConfig;
use crate::model::glass::Glass;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"GLSS";
pub const VERSION: u32 = 1;

// Upper bounds that keep a corrupt header from triggering huge allocations.
const MAX_RANK: usize = 8;
const MAX_NAME: usize = 1 << 12;

pub fn encode_checkpoint(model: &Glass) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let cfg = serde_json::to_vec(model.config()).expect("config serializes");
    out.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
    out.extend_from_slice(&cfg);
    out.extend_from_slice(&(model.store().len() as u32).to_le_bytes());
    for (_, p) in model.store().iter() {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.extend_from_slice(&(p.value.rank() as u32).to_le_bytes());
        for &d in p.value.dims() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in p.value.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Format {
            offset: self.pos,
            message: message.into(),
        })
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        match self.bytes.get(self.pos..self.pos.saturating_add(n)) {
            Some(s) => {
                self.pos += n;
                Ok(s)
            }
            None => self.err(format!("truncated while reading {what}")),
        }
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Glass> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        r.pos = 0;
        return r.err("bad magic");
    }
    let version = r.u32("version")?;
    if version != VERSION as usize {
        r.pos -= 4;
        return r.err(format!("unsupported version {version}"));
    }
    let n = r.u32("config length")?;
    let cfg_at = r.pos;
    let cfg: GlassConfig = serde_json::from_slice(r.take(n, "config")?).map_err(|e| Error::Format {
        offset: cfg_at,
        message: format!("config: {e}"),
    })?;
    if let Err(e) = cfg.validate() {
        r.pos = cfg_at;
        return r.err(e.to_string());
    }
    let count = r.u32("parameter count")?;
    let mut values = Vec::new();
    for _ in 0..count {
        let name_len = r.u32("name length")?;
        if name_len > MAX_NAME {
            return r.err(format!("name length {name_len}"));
        }
        let name = match std::str::from_utf8(r.take(name_len, "name")?) {
            Ok(s) => s.to_string(),
            Err(_) => return r.err("name is not UTF-8"),
        };
        let rank = r.u32("rank")?;
        if rank > MAX_RANK {
            return r.err(format!("rank {rank}"));
        }
        let dims = (0..rank).map(|_| r.u32("dims")).collect::<Result<Vec<_>>>()?;
        let len = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .filter(|&l| l.checked_mul(4).is_some_and(|b| b <= bytes.len()));
        let Some(len) = len else {
            return r.err(format!("parameter `{name}` dims {dims:?} exceed file size"));
        };
        let data = r
            .take(len * 4, "values")?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        values.push((name, Tensor::new(dims, data)?));
    }
    if r.pos != bytes.len() {
        return r.err("trailing bytes");
    }
    let end = r.pos;
    Glass::with_values(cfg, values).map_err(|e| match e {
        Error::Format { message, .. } => Error::Format { offset: end, message },
        other => other,
    })
}

pub fn save_checkpoint(model: &Glass, path: &Path) -> Result<()> {
    fs::write(path, encode_checkpoint(model))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Glass> {
    decode_checkpoint(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> Glass {
        let cfg = GlassConfig {
            input_frames: 30,
            output_frames: 30,
            model_dim: 8,
            heads: 2,
            enc_layers: 1,
            dec_layers: 1,
            ..GlassConfig::small()
        };
        Glass::new(cfg, 4).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = model();
        let back = decode_checkpoint(&encode_checkpoint(&m)).unwrap();
        assert_eq!(back.config(), m.config());
        for ((_, a), (_, b)) in m.store().iter().zip(back.store().iter()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.value, b.value);
        }
    }

    #[test]
    fn corrupt_headers_rejected() {
        let bytes = encode_checkpoint(&model());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_checkpoint(&bad), Err(Error::Format { offset: 0, .. })));
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(decode_checkpoint(&bad), Err(Error::Format { offset: 4, .. })));
        let cut = &bytes[..bytes.len() - 3];
        assert!(matches!(decode_checkpoint(cut), Err(Error::Format { .. })));
        assert!(matches!(decode_checkpoint(b"GL"), Err(Error::Format { .. })));
    }
}
