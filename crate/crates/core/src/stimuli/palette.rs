use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::image::RawImage;
use crate::error::{Error, Result};
use crate::rng;

/// A k-entry RGB color dictionary produced by k-means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Palette {
    pub k: usize,
    pub fit_seed: u64,
    pub fit_corpus_id: String,
    pub centroids: Vec<[f64; 3]>,
}

/// A grid of palette indices, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PalettedImage {
    pub height: usize,
    pub width: usize,
    pub tokens: Vec<u16>,
    pub palette_id: String,
}

impl PalettedImage {
    pub fn new(height: usize, width: usize, tokens: Vec<u16>, palette_id: impl Into<String>) -> Result<Self> {
        if tokens.len() != height * width {
            return Err(Error::Shape(format!(
                "paletted image {height}x{width} needs {} tokens, got {}",
                height * width,
                tokens.len()
            )));
        }
        Ok(Self {
            height,
            width,
            tokens,
            palette_id: palette_id.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn check_vocab(&self, k: usize) -> Result<()> {
        match self.tokens.iter().position(|&t| usize::from(t) >= k) {
            Some(position) => Err(Error::TokenOutOfRange {
                token: usize::from(self.tokens[position]),
                position,
                vocab: k,
            }),
            None => Ok(()),
        }
    }
}

/// Result of a k-means fit: the palette plus the per-iteration quantization
/// error (mean squared distance to the assigned centroid).
#[derive(Debug, Clone)]
pub struct PaletteFit {
    pub palette: Palette,
    pub error_trace: Vec<f64>,
    pub iterations: usize,
}

fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d0 = a[0] - b[0];
    let d1 = a[1] - b[1];
    let d2 = a[2] - b[2];
    d0 * d0 + d1 * d1 + d2 * d2
}

fn to_f64(p: [u8; 3]) -> [f64; 3] {
    [f64::from(p[0]), f64::from(p[1]), f64::from(p[2])]
}

/// Index of the nearest centroid; ties resolve to the lowest index.
pub fn nearest(centroids: &[[f64; 3]], p: [f64; 3]) -> (usize, f64) {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, &c) in centroids.iter().enumerate() {
        let d = dist2(c, p);
        if d < best_d {
            best = j;
            best_d = d;
        }
    }
    (best, best_d)
}

/// Seeded k-means++ followed by Lloyd iterations.
///
/// The pixel multiset is collapsed to sorted distinct colors with counts,
/// so the result depends only on the multiset, not on pixel order.
pub fn fit_palette(pixels: &[[u8; 3]], k: usize, max_iters: usize, seed: u64) -> Result<PaletteFit> {
    fit_palette_for(pixels, k, max_iters, seed, "")
}

pub fn fit_palette_for(
    pixels: &[[u8; 3]],
    k: usize,
    max_iters: usize,
    seed: u64,
    corpus_id: &str,
) -> Result<PaletteFit> {
    if k == 0 {
        return Err(Error::InvalidArgument("palette size k must be at least 1".into()));
    }
    if max_iters == 0 {
        return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
    }
    if pixels.len() < k {
        return Err(Error::TooFewPixels {
            k,
            pixels: pixels.len(),
        });
    }

    let mut counts: BTreeMap<[u8; 3], u64> = BTreeMap::new();
    for &p in pixels {
        *counts.entry(p).or_default() += 1;
    }
    if counts.len() < k {
        return Err(Error::TooFewColors {
            k,
            distinct: counts.len(),
        });
    }
    let colors: Vec<[f64; 3]> = counts.keys().map(|&c| to_f64(c)).collect();
    let weights: Vec<f64> = counts.values().map(|&w| w as f64).collect();
    let total_weight: f64 = weights.iter().sum();

    let mut centroids = init_plus_plus(&colors, &weights, k, seed);
    let mut assign = vec![usize::MAX; colors.len()];
    let mut error_trace = Vec::new();
    let mut iterations = 0;

    loop {
        // assignment
        let mut changed = false;
        let mut sq = vec![0.0f64; colors.len()];
        let mut err = 0.0;
        for (i, &c) in colors.iter().enumerate() {
            let (j, d) = nearest(&centroids, c);
            if assign[i] != j {
                assign[i] = j;
                changed = true;
            }
            sq[i] = d;
            err += weights[i] * d;
        }
        error_trace.push(err / total_weight);
        if !changed || iterations == max_iters {
            break;
        }
        iterations += 1;

        // update; sums run in color order so the reduction is deterministic
        let mut sums = vec![[0.0f64; 3]; k];
        let mut mass = vec![0.0f64; k];
        for (i, &c) in colors.iter().enumerate() {
            let j = assign[i];
            for ch in 0..3 {
                sums[j][ch] += weights[i] * c[ch];
            }
            mass[j] += weights[i];
        }
        for j in 0..k {
            if mass[j] > 0.0 {
                centroids[j] = [sums[j][0] / mass[j], sums[j][1] / mass[j], sums[j][2] / mass[j]];
            }
        }
        // empty clusters take the color farthest from its current centroid
        for j in 0..k {
            if mass[j] == 0.0 {
                let far = (0..colors.len())
                    .max_by(|&a, &b| sq[a].total_cmp(&sq[b]).then(b.cmp(&a)))
                    .expect("non-empty colors");
                centroids[j] = colors[far];
                sq[far] = 0.0;
            }
        }
    }

    Ok(PaletteFit {
        palette: Palette {
            k,
            fit_seed: seed,
            fit_corpus_id: corpus_id.to_string(),
            centroids,
        },
        error_trace,
        iterations,
    })
}

fn init_plus_plus(colors: &[[f64; 3]], weights: &[f64], k: usize, seed: u64) -> Vec<[f64; 3]> {
    let mut rng = rng::seeded(seed);
    let pick = |rng: &mut rng::Rng, w: &[f64]| -> usize {
        let total: f64 = w.iter().sum();
        let mut r = rng.random::<f64>() * total;
        let mut last = 0;
        for (i, &wi) in w.iter().enumerate() {
            if wi <= 0.0 {
                continue;
            }
            last = i;
            if r < wi {
                return i;
            }
            r -= wi;
        }
        last
    };

    let mut centroids = Vec::with_capacity(k);
    let first = pick(&mut rng, weights);
    centroids.push(colors[first]);
    let mut d2: Vec<f64> = colors.iter().map(|&c| dist2(c, colors[first])).collect();
    while centroids.len() < k {
        let w: Vec<f64> = d2.iter().zip(weights).map(|(d, w)| d * w).collect();
        // at least k distinct colors, so some distance is positive here
        let next = pick(&mut rng, &w);
        let c = colors[next];
        centroids.push(c);
        for (i, &col) in colors.iter().enumerate() {
            d2[i] = d2[i].min(dist2(col, c));
        }
    }
    centroids
}

/// Map each pixel to its nearest centroid (squared RGB distance, lowest index on ties).
pub fn quantize(img: &RawImage, palette: &Palette, palette_id: &str) -> Result<PalettedImage> {
    if palette.centroids.is_empty() {
        return Err(Error::EmptyPalette);
    }
    let mut cache: BTreeMap<[u8; 3], u16> = BTreeMap::new();
    let tokens = img
        .pixels()
        .map(|p| {
            *cache
                .entry(p)
                .or_insert_with(|| nearest(&palette.centroids, to_f64(p)).0 as u16)
        })
        .collect();
    PalettedImage::new(img.height(), img.width(), tokens, palette_id)
}

/// Render tokens through their centroid colors (rounded to 8 bits).
pub fn render(img: &PalettedImage, palette: &Palette) -> Result<RawImage> {
    img.check_vocab(palette.centroids.len())?;
    let mut data = Vec::with_capacity(img.len() * 3);
    for &t in &img.tokens {
        let c = palette.centroids[usize::from(t)];
        data.extend(c.iter().map(|v| v.round().clamp(0.0, 255.0) as u8));
    }
    RawImage::new(img.height, img.width, data)
}

impl Palette {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.centroids.len() != self.k {
            return Err(Error::InvalidArgument(format!(
                "palette declares k={} but holds {} centroids",
                self.k,
                self.centroids.len()
            )));
        }
        for c in &self.centroids {
            if c.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 255.0) {
                return Err(Error::InvalidArgument(format!("centroid {c:?} outside [0, 255]")));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json("palette", e))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let p: Palette = serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?;
        p.validate()?;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::RngCore;

    fn random_pixels(n: usize, seed: u64) -> Vec<[u8; 3]> {
        let mut rng = rng::seeded(seed);
        (0..n)
            .map(|_| {
                let v = rng.next_u32();
                [v as u8, (v >> 8) as u8, (v >> 16) as u8]
            })
            .collect()
    }

    fn palette_of(centroids: Vec<[f64; 3]>) -> Palette {
        Palette {
            k: centroids.len(),
            fit_seed: 0,
            fit_corpus_id: "test".into(),
            centroids,
        }
    }

    #[test]
    fn two_point_masses() {
        let mut px = vec![[0, 0, 0]; 10];
        px.extend(vec![[255, 255, 255]; 10]);
        let fit = fit_palette(&px, 2, 10, 3).unwrap();
        let mut c = fit.palette.centroids.clone();
        c.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(c, vec![[0.0; 3], [255.0; 3]]);
        assert_eq!(*fit.error_trace.last().unwrap(), 0.0);
    }

    #[test]
    fn single_cluster_is_mean() {
        let px = random_pixels(500, 9);
        let fit = fit_palette(&px, 1, 20, 1).unwrap();
        let n = px.len() as f64;
        for ch in 0..3 {
            let mean = px.iter().map(|p| f64::from(p[ch])).sum::<f64>() / n;
            assert!((fit.palette.centroids[0][ch] - mean).abs() < 1e-9);
        }
    }

    #[test]
    fn error_paths() {
        assert!(matches!(fit_palette(&[[0, 0, 0]], 2, 5, 0), Err(Error::TooFewPixels { .. })));
        assert!(fit_palette(&[[0, 0, 0]], 0, 5, 0).is_err());
        assert!(matches!(
            fit_palette(&[[1, 1, 1]; 5], 2, 5, 0),
            Err(Error::TooFewColors { .. })
        ));
    }

    #[test]
    fn deterministic_and_order_free() {
        let px = random_pixels(2000, 4);
        let a = fit_palette(&px, 16, 30, 11).unwrap();
        let b = fit_palette(&px, 16, 30, 11).unwrap();
        assert_eq!(a.palette, b.palette);
        let mut rev = px.clone();
        rev.reverse();
        let c = fit_palette(&rev, 16, 30, 11).unwrap();
        assert_eq!(a.palette, c.palette);
    }

    #[test]
    fn clustered_data_gets_distinct_centroids() {
        // 8 tight clusters with k=8: repair must keep all centroids distinct
        let mut px = Vec::new();
        for c in 0..8u8 {
            for d in 0..20u8 {
                px.push([c * 30 + d % 3, c * 30, 200 - c * 20 + d % 2]);
            }
        }
        let fit = fit_palette(&px, 8, 50, 5).unwrap();
        let cs = &fit.palette.centroids;
        for i in 0..cs.len() {
            for j in i + 1..cs.len() {
                assert_ne!(cs[i], cs[j]);
            }
        }
    }

    #[test]
    fn quantize_exact_centroid_pixels() {
        let pal = palette_of(vec![[0.0; 3], [10.0, 20.0, 30.0], [200.0, 100.0, 50.0]]);
        let img = RawImage::filled(4, 4, [10, 20, 30]);
        let q = quantize(&img, &pal, "p").unwrap();
        assert!(q.tokens.iter().all(|&t| t == 1));
    }

    #[test]
    fn quantize_tie_goes_to_lowest_index() {
        let mut cs = vec![[250.0; 3]; 8];
        cs[3] = [0.0, 0.0, 0.0];
        cs[7] = [20.0, 0.0, 0.0];
        let pal = palette_of(cs);
        let img = RawImage::filled(1, 1, [10, 0, 0]);
        assert_eq!(quantize(&img, &pal, "p").unwrap().tokens, vec![3]);
    }

    #[test]
    fn quantize_empty_palette() {
        let pal = palette_of(vec![]);
        assert!(matches!(
            quantize(&RawImage::filled(1, 1, [0; 3]), &pal, "p"),
            Err(Error::EmptyPalette)
        ));
    }

    #[test]
    fn quantize_matches_exhaustive_scan() {
        for seed in 0..8 {
            let px = random_pixels(256, 100 + seed);
            let data: Vec<u8> = px.iter().flatten().copied().collect();
            let img = RawImage::new(16, 16, data).unwrap();
            let cents: Vec<[f64; 3]> = random_pixels(16, 200 + seed).into_iter().map(to_f64).collect();
            let pal = palette_of(cents.clone());
            let q = quantize(&img, &pal, "p").unwrap();
            for (i, p) in px.iter().enumerate() {
                let p = to_f64(*p);
                // oracle: full scan, keep the first minimum
                let mut best = (0usize, f64::MAX);
                for (j, c) in cents.iter().enumerate() {
                    let d = (0..3).map(|ch| (p[ch] - c[ch]).powi(2)).sum::<f64>();
                    if d < best.1 {
                        best = (j, d);
                    }
                }
                assert_eq!(usize::from(q.tokens[i]), best.0);
            }
        }
    }

    #[test]
    fn json_round_trip_is_exact() {
        let px = random_pixels(3000, 8);
        let fit = fit_palette(&px, 12, 25, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("palette.json");
        fit.palette.save(&path).unwrap();
        assert_eq!(Palette::load(&path).unwrap(), fit.palette);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn kmeans_error_non_increasing(seed in 0u64..1000, k in 1usize..12) {
            let px = random_pixels(400, seed);
            let fit = fit_palette(&px, k, 40, seed).unwrap();
            for w in fit.error_trace.windows(2) {
                prop_assert!(w[1] <= w[0], "{:?}", fit.error_trace);
            }
            prop_assert!(fit.palette.validate().is_ok());
        }

        #[test]
        fn quantize_is_idempotent_and_nearest(seed in 0u64..1000) {
            let px = random_pixels(64, seed);
            let fit = fit_palette(&px, 6, 20, seed).unwrap();
            let data: Vec<u8> = px.iter().flatten().copied().collect();
            let img = RawImage::new(8, 8, data).unwrap();
            let q = quantize(&img, &fit.palette, "p").unwrap();
            for (i, p) in px.iter().enumerate() {
                let p = to_f64(*p);
                let mine = dist2(p, fit.palette.centroids[usize::from(q.tokens[i])]);
                for c in &fit.palette.centroids {
                    prop_assert!(mine <= dist2(p, *c));
                }
            }
            // idempotence on an 8-bit-exact palette: render, re-quantize, same tokens
            let rounded = palette_of(
                fit.palette.centroids.iter().map(|c| c.map(|v| v.round())).collect(),
            );
            let mut seen = rounded.centroids.clone();
            seen.sort_by(|a, b| a.partial_cmp(b).unwrap());
            seen.dedup();
            prop_assume!(seen.len() == rounded.k);
            let q = quantize(&img, &rounded, "p").unwrap();
            let q2 = quantize(&render(&q, &rounded).unwrap(), &rounded, "p").unwrap();
            prop_assert_eq!(q.tokens, q2.tokens);
        }
    }
}
