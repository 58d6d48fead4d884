use std::collections::BTreeMap;
use std::path::PathBuf;

use rayon::prelude::*;
use serde_json::json;

use super::common::{hash_file, hash_outputs, Manifest, OutputLock};
use super::config::{RunConfig, Settings};
use crate::error::{Error, Result};
use crate::model::{sample as sample_image, Checkpoint};
use crate::rng;
use crate::stimuli::{render, Palette, PalettedImage};

pub const SAMPLES_NAME: &str = "samples.png";

/// Draw images from a checkpoint and tile them, rendered through a palette,
/// into `samples.png`. Sample `i` uses the stream `derive(seed, i)`.
pub fn sample(cfg: &RunConfig) -> Result<PathBuf> {
    let mut s = Settings::new(cfg);
    let out_dir = s.required::<String>("out_dir").map(PathBuf::from);
    let checkpoint = s.required::<String>("checkpoint").map(PathBuf::from);
    let palette = s.required::<String>("palette").map(PathBuf::from);
    let seed: u64 = s.value("seed", 0);
    let n: usize = s.value("n", 16);
    let temperature: f64 = s.value("temperature", 1.0);
    let height: Option<usize> = s.optional("height");
    let width: Option<usize> = s.optional("width");
    if n == 0 {
        s.error("n: must be at least 1");
    }
    if !temperature.is_finite() || temperature < 0.0 {
        s.error("temperature: must be a finite value >= 0");
    }
    let config = s.finish()?;
    let (out_dir, ckpt_path, palette_path) = (
        out_dir.expect("validated"),
        checkpoint.expect("validated"),
        palette.expect("validated"),
    );
    let _lock = OutputLock::acquire(&out_dir)?;

    let ck = Checkpoint::load(&ckpt_path)?;
    let pal = Palette::load(&palette_path)?;
    let mc = ck.params.config;
    if pal.k != mc.vocab_k {
        return Err(Error::VocabMismatch {
            palette: pal.k,
            model: mc.vocab_k,
        });
    }
    let (h, w) = match (height, width) {
        (Some(h), Some(w)) => (h, w),
        (Some(h), None) => (h, mc.seq_len / h.max(1)),
        (None, Some(w)) => (mc.seq_len / w.max(1), w),
        (None, None) => {
            let side = (mc.seq_len as f64).sqrt().round() as usize;
            (side, mc.seq_len / side.max(1))
        }
    };
    if h * w != mc.seq_len {
        return Err(Error::Shape(format!(
            "{h}x{w} does not cover the model's {} positions",
            mc.seq_len
        )));
    }
    let palette_id = format!("sha256:{}", &hash_file(&palette_path)?[..16]);
    let images: Vec<PalettedImage> = (0..n as u64)
        .into_par_iter()
        .map(|i| sample_image(&ck.params, h, w, temperature, rng::derive(seed, i), &palette_id))
        .collect::<Result<_>>()?;
    let cols = (n as f64).sqrt().ceil() as usize;
    let rows = n.div_ceil(cols);
    let mut grid = image::RgbImage::from_pixel((cols * w) as u32, (rows * h) as u32, image::Rgb([255, 255, 255]));
    for (i, img) in images.iter().enumerate() {
        let tile = render(img, &pal)?.into_rgb_image();
        image::imageops::replace(&mut grid, &tile, ((i % cols) * w) as i64, ((i / cols) * h) as i64);
    }
    let png = out_dir.join(SAMPLES_NAME);
    grid.save(&png)?;

    let mut inputs = BTreeMap::new();
    inputs.insert("checkpoint".to_string(), hash_file(&ckpt_path)?);
    inputs.insert("palette".to_string(), hash_file(&palette_path)?);
    Manifest {
        command: "sample",
        crate_version: env!("CARGO_PKG_VERSION"),
        config: &config,
        derived: json!({
            "height": h,
            "width": w,
            "grid_columns": cols,
            "tokens": images.iter().map(|i| &i.tokens).collect::<Vec<_>>(),
        }),
        inputs,
        outputs: hash_outputs(&out_dir, &[png])?,
    }
    .write(&out_dir)?;
    Ok(out_dir)
}
