use crate::error::{Error, Result};

/// 8-bit RGB image, row-major, channels interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawImage {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl RawImage {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width * 3 {
            return Err(Error::Shape(format!(
                "raw image {height}x{width}x3 needs {} bytes, got {}",
                height * width * 3,
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, rgb: [u8; 3]) -> Self {
        let data = rgb.iter().copied().cycle().take(height * width * 3).collect();
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, y: usize, x: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn pixels(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]])
    }

    pub fn into_rgb_image(self) -> image::RgbImage {
        image::RgbImage::from_raw(self.width as u32, self.height as u32, self.data)
            .expect("length checked at construction")
    }
}

/// Per-axis overlap table for box-filter downscaling.
///
/// Coordinates are scaled so both grids are integral: source cell `s` spans
/// `[s*dst, (s+1)*dst)` and destination cell `d` spans `[d*src, (d+1)*src)`.
fn overlaps(src: usize, dst: usize) -> Vec<Vec<(usize, u64)>> {
    (0..dst)
        .map(|d| {
            let lo = d * src;
            let hi = (d + 1) * src;
            let first = lo / dst;
            let last = (hi - 1) / dst;
            (first..=last)
                .filter_map(|s| {
                    let a = lo.max(s * dst);
                    let b = hi.min((s + 1) * dst);
                    (b > a).then(|| (s, (b - a) as u64))
                })
                .collect()
        })
        .collect()
}

/// Area-weighted downscale. Each output channel is the exact rational mean of
/// the covered source area, rounded half away from zero.
pub fn resize(img: &RawImage, target_h: usize, target_w: usize) -> Result<RawImage> {
    let err = |reason| Error::Resize {
        from_h: img.height,
        from_w: img.width,
        to_h: target_h,
        to_w: target_w,
        reason,
    };
    if target_h == 0 || target_w == 0 {
        return Err(err("zero target dimension"));
    }
    if target_h > img.height || target_w > img.width {
        return Err(err("upscaling is not supported"));
    }
    if target_h == img.height && target_w == img.width {
        return Ok(img.clone());
    }

    let rows = overlaps(img.height, target_h);
    let cols = overlaps(img.width, target_w);
    // Total weight of one output cell in scaled units.
    let denom = (img.height * img.width) as u64;

    let mut out = Vec::with_capacity(target_h * target_w * 3);
    for row in &rows {
        for col in &cols {
            let mut acc = [0u64; 3];
            for &(sy, wy) in row {
                for &(sx, wx) in col {
                    let w = wy * wx;
                    let p = img.pixel(sy, sx);
                    for c in 0..3 {
                        acc[c] += w * u64::from(p[c]);
                    }
                }
            }
            for a in acc {
                // round(a / denom), halves away from zero (all values are non-negative)
                out.push(((2 * a + denom) / (2 * denom)) as u8);
            }
        }
    }
    RawImage::new(target_h, target_w, out)
}
