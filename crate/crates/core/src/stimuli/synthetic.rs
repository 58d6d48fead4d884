//! Procedural stimuli for desk-scale runs.
//!
//! Mosaics tile the image with a `g x g` grid of blocks (`g*g == k`) whose
//! colors are a permutation of the whole palette, so every mosaic has the
//! same token histogram and only the arrangement distinguishes images.
//! Object pools derive category / object / state variants from a base
//! arrangement by swapping block colors.

use rand::seq::SliceRandom;
use rand::Rng as _;

use super::dataset::{Role, StimulusMeta, StimulusRecord};
use super::palette::PalettedImage;
use crate::error::{Error, Result};
use crate::rng;

pub const MOSAIC_PALETTE_ID: &str = "mosaic";

fn grid_for(side: usize, k: usize) -> Result<usize> {
    let g = (k as f64).sqrt().round() as usize;
    if g == 0 || g * g != k || !side.is_multiple_of(g) || k > usize::from(u16::MAX) + 1 {
        return Err(Error::InvalidArgument(format!(
            "mosaic needs k to be a perfect square whose root divides the side (k={k}, side={side})"
        )));
    }
    Ok(g)
}

fn render_blocks(blocks: &[u16], g: usize, side: usize, palette_id: &str) -> Result<PalettedImage> {
    let cell = side / g;
    let tokens = (0..side * side)
        .map(|i| {
            let (y, x) = (i / side, i % side);
            blocks[(y / cell) * g + x / cell]
        })
        .collect();
    PalettedImage::new(side, side, tokens, palette_id)
}

/// `n` mosaics with independent random block permutations.
pub fn mosaic_set(n: usize, side: usize, k: usize, seed: u64) -> Result<Vec<PalettedImage>> {
    let g = grid_for(side, k)?;
    let mut rng = rng::seeded(seed);
    (0..n)
        .map(|_| {
            let mut blocks: Vec<u16> = (0..k as u16).collect();
            blocks.shuffle(&mut rng);
            render_blocks(&blocks, g, side, MOSAIC_PALETTE_ID)
        })
        .collect()
}

/// Shape of a synthetic category / object / state pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolSpec {
    pub study_categories: usize,
    pub objects_per_category: usize,
    pub states_per_object: usize,
    /// Categories reserved for novel foils (role `novel-foil-pool`).
    pub novel_categories: usize,
    pub novel_objects_per_category: usize,
    pub side: usize,
    pub k: usize,
    pub seed: u64,
}

impl PoolSpec {
    /// A pool large enough for the full Brady design (2500 study items, 300 trials).
    pub fn brady_scale(side: usize, k: usize, seed: u64) -> Self {
        Self {
            study_categories: 200,
            objects_per_category: 8,
            states_per_object: 2,
            novel_categories: 20,
            novel_objects_per_category: 10,
            side,
            k,
            seed,
        }
    }

    /// A pool large enough for the full Konkle design (40 categories per level).
    pub fn konkle_scale(side: usize, k: usize, seed: u64) -> Self {
        Self {
            study_categories: 240,
            objects_per_category: 17,
            states_per_object: 1,
            novel_categories: 0,
            novel_objects_per_category: 0,
            side,
            k,
            seed,
        }
    }
}

fn swap_blocks(blocks: &mut [u16], swaps: usize, rng: &mut rng::Rng) {
    for _ in 0..swaps {
        let a = rng.random_range(0..blocks.len());
        let mut b = rng.random_range(0..blocks.len() - 1);
        if b >= a {
            b += 1;
        }
        blocks.swap(a, b);
    }
}

/// Generate a metadata-rich mosaic pool. Exemplars of a category share most
/// of the base arrangement; states of an object differ by one swap.
pub fn object_pool(spec: &PoolSpec) -> Result<Vec<StimulusRecord>> {
    let g = grid_for(spec.side, spec.k)?;
    if spec.k < 2 {
        return Err(Error::InvalidArgument("object pool needs k >= 2".into()));
    }
    let mut rng = rng::seeded(spec.seed);
    let mut out = Vec::new();
    let groups = [
        (Role::StudyPool, "c", spec.study_categories, spec.objects_per_category, spec.states_per_object),
        (Role::NovelFoilPool, "n", spec.novel_categories, spec.novel_objects_per_category, 1),
    ];
    for (role, prefix, cats, objs, states) in groups {
        for c in 0..cats {
            let mut base: Vec<u16> = (0..spec.k as u16).collect();
            base.shuffle(&mut rng);
            for o in 0..objs {
                let mut object = base.clone();
                swap_blocks(&mut object, 3, &mut rng);
                for s in 0..states {
                    let mut state = object.clone();
                    if s > 0 {
                        swap_blocks(&mut state, 1, &mut rng);
                    }
                    let meta = StimulusMeta {
                        id: format!("{prefix}{c:03}-o{o:02}-s{s}"),
                        category: format!("{prefix}{c:03}"),
                        object_id: format!("o{o:02}"),
                        state_id: format!("s{s}"),
                        role,
                    };
                    let image = render_blocks(&state, g, spec.side, MOSAIC_PALETTE_ID)?;
                    out.push(StimulusRecord { meta, image });
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stimuli::dataset::check_unique;

    #[test]
    fn mosaic_histograms_are_flat() {
        let set = mosaic_set(10, 16, 16, 3).unwrap();
        for img in &set {
            let mut counts = [0usize; 16];
            for &t in &img.tokens {
                counts[usize::from(t)] += 1;
            }
            assert!(counts.iter().all(|&c| c == 16));
        }
        assert_ne!(set[0], set[1]);
    }

    #[test]
    fn mosaic_rejects_bad_shapes() {
        assert!(mosaic_set(1, 16, 15, 0).is_err());
        assert!(mosaic_set(1, 10, 16, 0).is_err());
    }

    #[test]
    fn pool_metadata_is_unique() {
        let pool = object_pool(&PoolSpec::brady_scale(8, 16, 1)).unwrap();
        assert_eq!(pool.len(), 200 * 8 * 2 + 20 * 10);
        check_unique(pool.iter().map(|r| &r.meta)).unwrap();
    }
}
