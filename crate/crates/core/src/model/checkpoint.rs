//! Binary checkpoint format.
//!
//! ```text
//! "MNBCKP01"                                   8 bytes
//! n_layers, n_heads, d_embed, vocab_k, seq_len u32 LE each
//! init_seed low word, init_seed high word      u32 LE each
//! optimizer step                               u64 LE
//! exposure count                               u64 LE
//! per tensor, in canonical order:
//!   name length                                u16 LE
//!   name                                       UTF-8
//!   element count                              u64 LE
//!   values                                     f32 LE
//! ```
//!
//! Canonical order: `tok_emb`, `pos_emb`, then for each layer `i`
//! `layers.{i}.ln1.gain`, `.ln1.bias`, `.attn.qkv.weight`, `.attn.qkv.bias`,
//! `.attn.out.weight`, `.attn.out.bias`, `.ln2.gain`, `.ln2.bias`,
//! `.mlp.fc.weight`, `.mlp.fc.bias`, `.mlp.proj.weight`, `.mlp.proj.bias`,
//! then `ln_f.gain`, `ln_f.bias`, `head.weight`, `head.bias`.
//! Matrices are row-major `in x out`.

use std::path::Path;

use super::config::ModelConfig;
use super::params::{tensor_names, Parameters};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"MNBCKP01";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: Parameters<f32>,
    pub step: u64,
    pub exposures: u64,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn encode(&self) -> Result<Vec<u8>> {
        let cfg = &self.params.config;
        let mut out = Vec::with_capacity(64 + 4 * self.params.num_params());
        out.extend_from_slice(MAGIC);
        for (v, what) in [
            (cfg.n_layers, "n_layers"),
            (cfg.n_heads, "n_heads"),
            (cfg.d_embed, "d_embed"),
            (cfg.vocab_k, "vocab_k"),
            (cfg.seq_len, "seq_len"),
        ] {
            let v = u32::try_from(v).map_err(|_| bad(format!("{what} {v} exceeds u32")))?;
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(cfg.init_seed as u32).to_le_bytes());
        out.extend_from_slice(&((cfg.init_seed >> 32) as u32).to_le_bytes());
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&self.exposures.to_le_bytes());
        for (name, t) in self.params.names().iter().zip(self.params.tensors()) {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.len() as u64).to_le_bytes());
            for &x in t {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(bad("bad magic"));
        }
        let mut f = [0u32; 7];
        for v in &mut f {
            *v = r.u32()?;
        }
        let config = ModelConfig {
            n_layers: f[0] as usize,
            n_heads: f[1] as usize,
            d_embed: f[2] as usize,
            vocab_k: f[3] as usize,
            seq_len: f[4] as usize,
            init_seed: u64::from(f[5]) | (u64::from(f[6]) << 32),
        };
        config.validate()?;
        let step = r.u64()?;
        let exposures = r.u64()?;
        let names = tensor_names(&config);
        let mut tensors = Vec::with_capacity(names.len());
        for want in &names {
            let len = usize::from(r.u16()?);
            let name = std::str::from_utf8(r.take(len)?).map_err(|_| bad("tensor name is not UTF-8"))?;
            if name != want {
                return Err(bad(format!("expected tensor {want}, found {name}")));
            }
            let count = usize::try_from(r.u64()?).map_err(|_| bad("element count overflows"))?;
            let raw = r.take(count.checked_mul(4).ok_or_else(|| bad("element count overflows"))?)?;
            tensors.push(
                raw.chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect(),
            );
        }
        if r.pos != bytes.len() {
            return Err(bad(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        let params = Parameters::from_tensors(config, tensors)?;
        Ok(Self { params, step, exposures })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| bad("truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
