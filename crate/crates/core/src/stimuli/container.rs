//! Paletted dataset container.
//!
//! ```text
//! "MNBTOK01"                      8 bytes
//! count, height, width, k         u32 LE each
//! per image:
//!   id length                     u16 LE
//!   id                            UTF-8
//!   tokens                        height*width u16 LE, row-major
//! ```

use std::path::Path;

use super::palette::PalettedImage;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"MNBTOK01";

/// A paletted image with its stimulus id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NamedImage {
    pub id: String,
    pub image: PalettedImage,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenDataset {
    pub height: usize,
    pub width: usize,
    pub k: usize,
    pub images: Vec<NamedImage>,
}

impl TokenDataset {
    pub fn new(height: usize, width: usize, k: usize, images: Vec<NamedImage>) -> Result<Self> {
        for n in &images {
            if n.image.height != height || n.image.width != width {
                return Err(Error::Shape(format!(
                    "image {} is {}x{}, dataset is {height}x{width}",
                    n.id, n.image.height, n.image.width
                )));
            }
            n.image.check_vocab(k)?;
        }
        Ok(Self {
            height,
            width,
            k,
            images,
        })
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let to_u32 = |v: usize, what: &str| {
            u32::try_from(v).map_err(|_| Error::Container(format!("{what} {v} exceeds u32")))
        };
        let mut out = Vec::with_capacity(24 + self.images.len() * (8 + 2 * self.height * self.width));
        out.extend_from_slice(MAGIC);
        for (v, what) in [
            (self.images.len(), "count"),
            (self.height, "height"),
            (self.width, "width"),
            (self.k, "k"),
        ] {
            out.extend_from_slice(&to_u32(v, what)?.to_le_bytes());
        }
        for n in &self.images {
            let id = n.id.as_bytes();
            let len = u16::try_from(id.len())
                .map_err(|_| Error::Container(format!("id {} longer than 65535 bytes", n.id)))?;
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(id);
            for &t in &n.image.tokens {
                out.extend_from_slice(&t.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8], palette_id: &str) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(8)? != MAGIC {
            return Err(Error::Container("bad magic".into()));
        }
        let count = cur.u32()? as usize;
        let height = cur.u32()? as usize;
        let width = cur.u32()? as usize;
        let k = cur.u32()? as usize;
        let mut images = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let len = usize::from(cur.u16()?);
            let id = std::str::from_utf8(cur.take(len)?)
                .map_err(|_| Error::Container("id is not UTF-8".into()))?
                .to_string();
            let raw = cur.take(2 * height * width)?;
            let tokens = raw.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect();
            let image = PalettedImage::new(height, width, tokens, palette_id)?;
            images.push(NamedImage { id, image });
        }
        if cur.pos != bytes.len() {
            return Err(Error::Container(format!("{} trailing bytes", bytes.len() - cur.pos)));
        }
        Self::new(height, width, k, images)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, palette_id: &str) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes, palette_id)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Container("truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn layout_is_bit_exact() {
        let img = PalettedImage::new(1, 2, vec![1, 258], "p").unwrap();
        let ds = TokenDataset::new(1, 2, 300, vec![NamedImage { id: "ab".into(), image: img }]).unwrap();
        let bytes = ds.encode().unwrap();
        let mut expect = b"MNBTOK01".to_vec();
        expect.extend([1, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 44, 1, 0, 0]);
        expect.extend([2, 0, b'a', b'b', 1, 0, 2, 1]);
        assert_eq!(bytes, expect);
    }

    #[test]
    fn rejects_truncation_and_bad_magic() {
        let img = PalettedImage::new(2, 2, vec![0, 1, 2, 3], "p").unwrap();
        let ds = TokenDataset::new(2, 2, 4, vec![NamedImage { id: "x".into(), image: img }]).unwrap();
        let bytes = ds.encode().unwrap();
        assert!(TokenDataset::decode(&bytes[..bytes.len() - 1], "p").is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(TokenDataset::decode(&bad, "p").is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(TokenDataset::decode(&extra, "p").is_err());
    }

    #[test]
    fn rejects_out_of_vocab_tokens() {
        let img = PalettedImage::new(1, 1, vec![9], "p").unwrap();
        assert!(TokenDataset::new(1, 1, 4, vec![NamedImage { id: "x".into(), image: img }]).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(h in 1usize..6, w in 1usize..6, n in 0usize..5, seed in any::<u64>()) {
            let k = 512;
            let images: Vec<NamedImage> = (0..n)
                .map(|i| {
                    let tokens = (0..h * w)
                        .map(|j| (crate::rng::derive(seed, (i * 100 + j) as u64) % k as u64) as u16)
                        .collect();
                    NamedImage { id: format!("img-{i}-é"), image: PalettedImage::new(h, w, tokens, "p").unwrap() }
                })
                .collect();
            let ds = TokenDataset::new(h, w, k, images).unwrap();
            let back = TokenDataset::decode(&ds.encode().unwrap(), "p").unwrap();
            prop_assert_eq!(back, ds);
        }
    }
}
