use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::image::RawImage;
use super::palette::PalettedImage;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Role {
    #[serde(rename = "study-pool")]
    StudyPool,
    #[serde(rename = "novel-foil-pool")]
    NovelFoilPool,
}

/// Metadata that places an image in the category / object / state hierarchy.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StimulusMeta {
    pub id: String,
    pub category: String,
    pub object_id: String,
    pub state_id: String,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StimulusRecord<I = PalettedImage> {
    pub meta: StimulusMeta,
    pub image: I,
}

/// One manifest entry; `path` is relative to the manifest file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub category: String,
    pub object_id: String,
    pub state_id: String,
    pub role: Role,
    pub path: PathBuf,
}

impl ManifestEntry {
    pub fn meta(&self) -> StimulusMeta {
        StimulusMeta {
            id: self.id.clone(),
            category: self.category.clone(),
            object_id: self.object_id.clone(),
            state_id: self.state_id.clone(),
            role: self.role,
        }
    }
}

pub fn read_manifest(manifest_path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Manifest {
        path: manifest_path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Reject duplicate (category, object_id, state_id) triples and duplicate ids.
pub fn check_unique<'a>(metas: impl IntoIterator<Item = &'a StimulusMeta>) -> Result<()> {
    let mut triples: HashMap<(&str, &str, &str), &str> = HashMap::new();
    let mut ids: HashMap<&str, ()> = HashMap::new();
    for m in metas {
        let key = (m.category.as_str(), m.object_id.as_str(), m.state_id.as_str());
        if let Some(first) = triples.insert(key, m.id.as_str()) {
            return Err(Error::DuplicateTriple {
                first: first.to_string(),
                second: m.id.clone(),
            });
        }
        if ids.insert(m.id.as_str(), ()).is_some() {
            return Err(Error::Manifest {
                path: PathBuf::new(),
                reason: format!("duplicate id {}", m.id),
            });
        }
    }
    Ok(())
}

fn decode(id: &str, path: &Path) -> Result<RawImage> {
    use image::ImageFormat;

    if !path.exists() {
        return Err(Error::MissingImage {
            id: id.to_string(),
            path: path.to_path_buf(),
        });
    }
    let decode_err = |reason: String| Error::Decode {
        id: id.to_string(),
        path: path.to_path_buf(),
        reason,
    };
    let reader = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    match reader.format() {
        Some(ImageFormat::Png) | Some(ImageFormat::Jpeg) => {}
        other => return Err(decode_err(format!("unsupported format {other:?}"))),
    }
    let img = reader.decode().map_err(|e| decode_err(e.to_string()))?;
    let channels = img.color().channel_count();
    if channels != 3 {
        return Err(Error::ChannelCount {
            id: id.to_string(),
            found: channels,
        });
    }
    let rgb = img.into_rgb8();
    let (w, h) = rgb.dimensions();
    RawImage::new(h as usize, w as usize, rgb.into_raw())
}

/// Load a JSON manifest and decode every referenced image, preserving order.
pub fn load_dataset(manifest_path: &Path) -> Result<Vec<StimulusRecord<RawImage>>> {
    let entries = read_manifest(manifest_path)?;
    let metas: Vec<StimulusMeta> = entries.iter().map(ManifestEntry::meta).collect();
    check_unique(&metas)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    entries
        .iter()
        .zip(metas)
        .map(|(e, meta)| {
            let image = decode(&e.id, &base.join(&e.path))?;
            Ok(StimulusRecord { meta, image })
        })
        .collect()
}

/// Sidecar JSON listing stimulus metadata for a prepared container.
pub fn save_metadata(path: &Path, metas: &[StimulusMeta]) -> Result<()> {
    let text = serde_json::to_string_pretty(metas).map_err(|e| Error::json("metadata", e))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_metadata(path: &Path) -> Result<Vec<StimulusMeta>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let metas: Vec<StimulusMeta> =
        serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?;
    check_unique(&metas)?;
    Ok(metas)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn write_png(path: &Path, w: u32, h: u32) {
        let img = image::RgbImage::from_fn(w, h, |x, y| image::Rgb([x as u8, y as u8, 7]));
        img.save(path).unwrap();
    }

    fn entry(id: &str, cat: &str, obj: &str, state: &str, path: &str) -> serde_json::Value {
        json!({"id": id, "category": cat, "object_id": obj, "state_id": state, "role": "study-pool", "path": path})
    }

    #[test]
    fn empty_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("m.json");
        std::fs::write(&m, "[]").unwrap();
        assert!(load_dataset(&m).unwrap().is_empty());
    }

    #[test]
    fn single_png() {
        let dir = tempfile::tempdir().unwrap();
        write_png(&dir.path().join("a.png"), 256, 256);
        let m = dir.path().join("m.json");
        std::fs::write(&m, json!([entry("a", "cup", "o1", "s1", "a.png")]).to_string()).unwrap();
        let recs = load_dataset(&m).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!((recs[0].image.height(), recs[0].image.width()), (256, 256));
        assert_eq!(recs[0].image.pixel(3, 5), [5, 3, 7]);
    }

    #[test]
    fn duplicate_triple_names_both() {
        let dir = tempfile::tempdir().unwrap();
        write_png(&dir.path().join("a.png"), 4, 4);
        let m = dir.path().join("m.json");
        let v = json!([entry("first", "cup", "o1", "s1", "a.png"), entry("second", "cup", "o1", "s1", "a.png")]);
        std::fs::write(&m, v.to_string()).unwrap();
        match load_dataset(&m) {
            Err(Error::DuplicateTriple { first, second }) => {
                assert_eq!((first.as_str(), second.as_str()), ("first", "second"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_and_bad_channel_files() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("m.json");
        std::fs::write(&m, json!([entry("gone", "c", "o", "s", "nope.png")]).to_string()).unwrap();
        assert!(matches!(load_dataset(&m), Err(Error::MissingImage { id, .. }) if id == "gone"));

        let gray = image::GrayImage::from_pixel(4, 4, image::Luma([9]));
        gray.save(dir.path().join("g.png")).unwrap();
        std::fs::write(&m, json!([entry("g", "c", "o", "s", "g.png")]).to_string()).unwrap();
        assert!(matches!(load_dataset(&m), Err(Error::ChannelCount { found: 1, .. })));

        std::fs::write(dir.path().join("junk.png"), b"not an image").unwrap();
        std::fs::write(&m, json!([entry("j", "c", "o", "s", "junk.png")]).to_string()).unwrap();
        assert!(matches!(load_dataset(&m), Err(Error::Decode { id, .. }) if id == "j"));
    }
}
