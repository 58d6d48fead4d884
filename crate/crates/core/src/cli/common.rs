use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::Settings;
use crate::error::{Error, Result};
use crate::experiments::ImageStore;
use crate::model::ModelConfig;
use crate::rng;
use crate::stimuli::synthetic::{mosaic_set, object_pool, PoolSpec};
use crate::stimuli::{generate_noise_set, NamedImage, Palette, PalettedImage, Role, StimulusMeta, TokenDataset};

pub const LOCK_NAME: &str = ".mnb.lock";
pub const CONTAINER_NAME: &str = "tokens.mnbt";
pub const PALETTE_NAME: &str = "palette.json";
pub const STIMULI_NAME: &str = "stimuli.json";
pub const MANIFEST_NAME: &str = "manifest.json";

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(out_dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        let path = out_dir.join(LOCK_NAME);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Self { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked(out_dir.to_path_buf())),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn hash_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path).map_err(|e| Error::io(path, e))?))
}

/// Replay record written next to every command's outputs.
#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub command: &'a str,
    pub crate_version: &'static str,
    /// Every resolved setting; feeding this table back replays the command.
    pub config: &'a BTreeMap<String, String>,
    pub derived: serde_json::Value,
    /// SHA-256 of each input and output file, keyed by role or relative path.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

impl Manifest<'_> {
    pub fn write(&self, out_dir: &Path) -> Result<PathBuf> {
        let path = out_dir.join(MANIFEST_NAME);
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json("manifest", e))?;
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

/// Hash each output file relative to `out_dir`.
pub fn hash_outputs(out_dir: &Path, files: &[PathBuf]) -> Result<BTreeMap<String, String>> {
    files
        .iter()
        .map(|f| {
            let rel = f.strip_prefix(out_dir).unwrap_or(f).to_string_lossy().replace('\\', "/");
            Ok((rel, hash_file(f)?))
        })
        .collect()
}

pub fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Where a command's images come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Source {
    /// Output directory of `prepare`.
    Prepared(PathBuf),
    /// Uniform i.i.d. tokens.
    Noise { side: usize, k: usize, n_study: usize, n_foils: usize },
    /// Random block permutations.
    Mosaic { side: usize, k: usize, n_study: usize, n_foils: usize },
    /// Category / object / state mosaic pool at Brady or Konkle scale.
    Pool { side: usize, k: usize, konkle: bool },
}

impl Source {
    /// Read the `stimuli` family of keys.
    pub fn from_settings(s: &mut Settings<'_>, default_n_study: usize, default_n_foils: usize) -> Option<Source> {
        let kind: String = s.value("stimuli", "prepared".to_string());
        match kind.as_str() {
            "prepared" => s.required::<String>("data_dir").map(|d| Source::Prepared(PathBuf::from(d))),
            "noise" | "mosaic" => {
                let side = s.value("stimuli.side", if kind == "noise" { 64usize } else { 16 });
                let k = s.value("stimuli.k", if kind == "noise" { 512usize } else { 16 });
                let n_study = s.value("stimuli.n_study", default_n_study);
                let n_foils = s.value("stimuli.n_foils", default_n_foils);
                Some(if kind == "noise" {
                    Source::Noise { side, k, n_study, n_foils }
                } else {
                    Source::Mosaic { side, k, n_study, n_foils }
                })
            }
            "pool" => {
                let side = s.value("stimuli.side", 16usize);
                let k = s.value("stimuli.k", 16usize);
                let scale: String = s.value("stimuli.scale", "brady".to_string());
                if scale != "brady" && scale != "konkle" {
                    s.error(format!("stimuli.scale: expected brady or konkle, got {scale:?}"));
                }
                Some(Source::Pool {
                    side,
                    k,
                    konkle: scale == "konkle",
                })
            }
            other => {
                s.error(format!("stimuli: expected prepared, noise, mosaic or pool, got {other:?}"));
                None
            }
        }
    }

    /// Whether different seeds yield different images.
    pub fn is_generated(&self) -> bool {
        !matches!(self, Source::Prepared(_))
    }
}

/// Images with their metadata, ready for training and sessions.
#[derive(Debug, Clone)]
pub struct Stimuli {
    pub metas: Vec<StimulusMeta>,
    pub images: Vec<NamedImage>,
    pub side_h: usize,
    pub side_w: usize,
    pub k: usize,
    pub palette: Option<Palette>,
    /// SHA-256 of the token container holding exactly these images.
    pub dataset_hash: String,
}

impl Stimuli {
    pub fn store(&self) -> ImageStore {
        self.images.iter().cloned().collect()
    }

    pub fn ids_with_role(&self, role: Role) -> Vec<String> {
        self.metas.iter().filter(|m| m.role == role).map(|m| m.id.clone()).collect()
    }

    pub fn seq_len(&self) -> usize {
        self.side_h * self.side_w
    }
}

fn flat_metas(images: &[PalettedImage], n_study: usize) -> (Vec<StimulusMeta>, Vec<NamedImage>) {
    let mut metas = Vec::with_capacity(images.len());
    let mut named = Vec::with_capacity(images.len());
    for (i, img) in images.iter().enumerate() {
        let (id, role) = if i < n_study {
            (format!("study-{i:05}"), Role::StudyPool)
        } else {
            (format!("foil-{:05}", i - n_study), Role::NovelFoilPool)
        };
        metas.push(StimulusMeta {
            id: id.clone(),
            category: id.clone(),
            object_id: "o0".into(),
            state_id: "s0".into(),
            role,
        });
        named.push(NamedImage { id, image: img.clone() });
    }
    (metas, named)
}

/// Deterministic stand-in palette for generated token images: colors spread
/// over the RGB cube by a seeded draw.
pub fn synthetic_palette(k: usize, seed: u64, corpus_id: &str) -> Palette {
    use rand::Rng as _;
    let mut r = rng::seeded(seed);
    let centroids = (0..k)
        .map(|_| [0; 3].map(|_: u8| f64::from(r.random::<u8>())))
        .collect();
    Palette {
        k,
        fit_seed: seed,
        fit_corpus_id: corpus_id.to_string(),
        centroids,
    }
}

pub fn load_stimuli(source: &Source, seed: u64) -> Result<Stimuli> {
    let (metas, images, h, w, k, palette) = match source {
        Source::Prepared(dir) => {
            let palette = Palette::load(&dir.join(PALETTE_NAME))?;
            let palette_id = format!("sha256:{}", &hash_file(&dir.join(PALETTE_NAME))?[..16]);
            let ds = TokenDataset::load(&dir.join(CONTAINER_NAME), &palette_id)?;
            let metas = crate::stimuli::dataset::load_metadata(&dir.join(STIMULI_NAME))?;
            if ds.k != palette.k {
                return Err(Error::VocabMismatch {
                    palette: palette.k,
                    model: ds.k,
                });
            }
            (metas, ds.images, ds.height, ds.width, ds.k, Some(palette))
        }
        &Source::Noise { side, k, n_study, n_foils } => {
            let imgs = generate_noise_set(n_study + n_foils, side, side, k, seed)?;
            let (m, n) = flat_metas(&imgs, n_study);
            (m, n, side, side, k, None)
        }
        &Source::Mosaic { side, k, n_study, n_foils } => {
            let imgs = mosaic_set(n_study + n_foils, side, k, seed)?;
            let (m, n) = flat_metas(&imgs, n_study);
            (m, n, side, side, k, None)
        }
        &Source::Pool { side, k, konkle } => {
            let spec = if konkle {
                PoolSpec::konkle_scale(side, k, seed)
            } else {
                PoolSpec::brady_scale(side, k, seed)
            };
            let records = object_pool(&spec)?;
            let metas = records.iter().map(|r| r.meta.clone()).collect();
            let named = records
                .into_iter()
                .map(|r| NamedImage {
                    id: r.meta.id,
                    image: r.image,
                })
                .collect();
            (metas, named, side, side, k, None)
        }
    };
    crate::stimuli::dataset::check_unique(metas.iter())?;
    let ds = TokenDataset::new(h, w, k, images)?;
    let dataset_hash = sha256_hex(&ds.encode()?);
    let ids: std::collections::HashSet<&str> = ds.images.iter().map(|n| n.id.as_str()).collect();
    if let Some(m) = metas.iter().find(|m| !ids.contains(m.id.as_str())) {
        return Err(Error::UnknownId(m.id.clone()));
    }
    Ok(Stimuli {
        metas,
        images: ds.images,
        side_h: h,
        side_w: w,
        k,
        palette,
        dataset_hash,
    })
}

/// Model architecture keys. Vocabulary and sequence length come from the data.
pub fn model_settings(s: &mut Settings<'_>) -> (usize, usize, usize, Option<u64>) {
    let preset: String = s.value("model.preset", "tiny".to_string());
    let (l, h, d) = match preset.as_str() {
        "tiny" => (2, 2, 64),
        "igpt-s" => {
            let c = ModelConfig::igpt_s(0);
            (c.n_layers, c.n_heads, c.d_embed)
        }
        "igpt-mini" => {
            let c = ModelConfig::igpt_mini(0);
            (c.n_layers, c.n_heads, c.d_embed)
        }
        other => {
            s.error(format!("model.preset: expected tiny, igpt-s or igpt-mini, got {other:?}"));
            (2, 2, 64)
        }
    };
    (
        s.value("model.n_layers", l),
        s.value("model.n_heads", h),
        s.value("model.d_embed", d),
        s.optional("model.init_seed"),
    )
}
