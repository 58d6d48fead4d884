//! Quantize a small folder of generated PNGs through the `prepare` command.
//!
//! Writes the images, a JSON manifest and the prepared token container under a
//! temporary directory, then prints the container summary.

use mnb::cli::{dispatch, RunConfig};
use mnb::stimuli::TokenDataset;

fn main() -> mnb::Result<()> {
    let dir = std::env::temp_dir().join(format!("mnb-prepare-{}", std::process::id()));
    let raw = dir.join("raw");
    std::fs::create_dir_all(&raw).map_err(|e| mnb::Error::io(&raw, e))?;
    let mut entries = Vec::new();
    for i in 0..12u32 {
        let img = image::RgbImage::from_fn(32, 32, |x, y| {
            image::Rgb([(x * 8 + i * 20) as u8, (y * 8) as u8, ((x ^ y) * 4 + i * 7) as u8])
        });
        let path = raw.join(format!("img{i}.png"));
        img.save(&path)?;
        let role = if i < 8 { "study-pool" } else { "novel-foil-pool" };
        entries.push(serde_json::json!({
            "id": format!("img{i}"),
            "path": format!("raw/img{i}.png"),
            "category": format!("cat{}", i % 4),
            "object_id": format!("obj{i}"),
            "state_id": "s0",
            "role": role,
        }));
    }
    let manifest_path = dir.join("manifest.json");
    std::fs::write(&manifest_path, serde_json::Value::from(entries).to_string()).map_err(|e| mnb::Error::io(&manifest_path, e))?;

    let mut cfg = RunConfig::new();
    cfg.set("manifest", manifest_path.display().to_string())?;
    cfg.set("size", "16")?;
    cfg.set("k", "16")?;
    cfg.set("out_dir", dir.join("prepared").display().to_string())?;
    let out = dispatch("prepare", &cfg)?;
    let palette = std::fs::read(out.join("palette.json")).map_err(|e| mnb::Error::io(&out, e))?;
    let id = format!("sha256:{}", &mnb::cli::common::sha256_hex(&palette)[..16]);
    let ds = TokenDataset::load(&out.join("tokens.mnbt"), &id)?;
    println!(
        "prepared {} images of {}x{} over k={} in {}",
        ds.images.len(),
        ds.height,
        ds.width,
        ds.k,
        out.display()
    );
    Ok(())
}
