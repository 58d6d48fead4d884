use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::json;

use super::common::{
    hash_file, hash_outputs, load_stimuli, synthetic_palette, Manifest, OutputLock, Source, CONTAINER_NAME, PALETTE_NAME,
    STIMULI_NAME,
};
use super::config::{RunConfig, Settings};
use crate::error::{Error, Result};
use crate::stimuli::dataset::save_metadata;
use crate::stimuli::palette::fit_palette_for;
use crate::stimuli::{load_dataset, quantize, resize, NamedImage, Palette, Role, StimulusMeta, TokenDataset};

enum Input {
    Images {
        manifest: PathBuf,
        size: usize,
        k: usize,
        palette: Option<PathBuf>,
        fit_all: bool,
        max_iters: usize,
        palette_seed: u64,
    },
    Generated(Source),
}

/// Build a token container, palette and stimulus metadata in `out_dir`.
pub fn prepare(cfg: &RunConfig) -> Result<PathBuf> {
    let mut s = Settings::new(cfg);
    let out_dir = s.required::<String>("out_dir").map(PathBuf::from);
    let seed: u64 = s.value("seed", 0);
    let kind: String = s.value("stimuli", "images".to_string());
    let input = if kind == "images" {
        let manifest = s.required::<String>("manifest").map(PathBuf::from);
        let size = s.value("size", 64usize);
        let k = s.value("k", 512usize);
        let palette = s.path("palette");
        let fit_corpus: String = s.value("fit_corpus", "study".to_string());
        if fit_corpus != "study" && fit_corpus != "all" {
            s.error(format!("fit_corpus: expected study or all, got {fit_corpus:?}"));
        }
        let max_iters = s.value("kmeans.max_iters", 100usize);
        let palette_seed = s.value("palette.seed", seed);
        if size == 0 || k == 0 || max_iters == 0 {
            s.error("size, k and kmeans.max_iters must be positive");
        }
        manifest.map(|manifest| Input::Images {
            manifest,
            size,
            k,
            palette,
            fit_all: fit_corpus == "all",
            max_iters,
            palette_seed,
        })
    } else {
        Source::from_settings(&mut s, 2500, 300).and_then(|src| match src {
            Source::Prepared(_) => None,
            other => Some(Input::Generated(other)),
        })
    };
    let config = s.finish()?;
    let (out_dir, input) = (out_dir.expect("validated"), input.expect("validated"));
    let _lock = OutputLock::acquire(&out_dir)?;

    let mut inputs = std::collections::BTreeMap::new();
    let (dataset, metas, palette, derived) = match input {
        Input::Images {
            manifest,
            size,
            k,
            palette,
            fit_all,
            max_iters,
            palette_seed,
        } => {
            inputs.insert("manifest".to_string(), hash_file(&manifest)?);
            let records = load_dataset(&manifest)?;
            let resized: Vec<_> = records
                .par_iter()
                .map(|r| resize(&r.image, size, size))
                .collect::<Result<_>>()?;
            let (palette, iterations) = match palette {
                Some(path) => {
                    inputs.insert("palette".to_string(), hash_file(&path)?);
                    let p = Palette::load(&path)?;
                    if p.k != k {
                        return Err(Error::VocabMismatch { palette: p.k, model: k });
                    }
                    (p, 0)
                }
                None => {
                    let pixels: Vec<[u8; 3]> = records
                        .iter()
                        .zip(&resized)
                        .filter(|(r, _)| fit_all || r.meta.role == Role::StudyPool)
                        .flat_map(|(_, img)| img.pixels())
                        .collect();
                    let corpus = if fit_all { "all" } else { "study" };
                    let fit = fit_palette_for(&pixels, k, max_iters, palette_seed, corpus)?;
                    (fit.palette, fit.iterations)
                }
            };
            palette.save(&out_dir.join(PALETTE_NAME))?;
            let palette_id = format!("sha256:{}", &hash_file(&out_dir.join(PALETTE_NAME))?[..16]);
            let images = records
                .par_iter()
                .zip(&resized)
                .map(|(r, img)| {
                    Ok(NamedImage {
                        id: r.meta.id.clone(),
                        image: quantize(img, &palette, &palette_id)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let metas: Vec<StimulusMeta> = records.into_iter().map(|r| r.meta).collect();
            let ds = TokenDataset::new(size, size, k, images)?;
            (ds, metas, palette, json!({ "kmeans_iterations": iterations, "palette_seed": palette_seed }))
        }
        Input::Generated(src) => {
            let st = load_stimuli(&src, seed)?;
            let palette = synthetic_palette(st.k, seed, "synthetic");
            palette.save(&out_dir.join(PALETTE_NAME))?;
            let ds = TokenDataset::new(st.side_h, st.side_w, st.k, st.images)?;
            (ds, st.metas, palette, json!({ "generator_seed": seed }))
        }
    };
    debug_assert_eq!(palette.k, dataset.k);

    let container = out_dir.join(CONTAINER_NAME);
    dataset.save(&container)?;
    save_metadata(&out_dir.join(STIMULI_NAME), &metas)?;
    let outputs = hash_outputs(
        &out_dir,
        &[container, out_dir.join(PALETTE_NAME), out_dir.join(STIMULI_NAME)],
    )?;
    Manifest {
        command: "prepare",
        crate_version: env!("CARGO_PKG_VERSION"),
        config: &config,
        derived: json!({
            "n_images": dataset.images.len(),
            "height": dataset.height,
            "width": dataset.width,
            "k": dataset.k,
            "details": derived,
        }),
        inputs,
        outputs,
    }
    .write(&out_dir)?;
    Ok(out_dir)
}

/// Paths written by [`prepare`] inside `dir`.
pub fn prepared_files(dir: &Path) -> [PathBuf; 3] {
    [dir.join(CONTAINER_NAME), dir.join(PALETTE_NAME), dir.join(STIMULI_NAME)]
}
