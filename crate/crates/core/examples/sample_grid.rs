//! Briefly pretrain a small model on mosaics, then draw a grid of samples at
//! two temperatures through the `pretrain` and `sample` commands.

use mnb::cli::{dispatch, RunConfig};

fn main() -> mnb::Result<()> {
    let dir = std::env::temp_dir().join(format!("mnb-sample-{}", std::process::id()));
    let pre = RunConfig::parse(&format!(
        "stimuli = mosaic\nstimuli.side = 8\nstimuli.k = 16\nstimuli.n_study = 64\nstimuli.n_foils = 0\n\
         model.n_layers = 1\nmodel.d_embed = 32\ntrain.epochs = 20\ntrain.batch_size = 16\nadam.lr = 0.003\n\
         out_dir = {}\n",
        dir.join("pretrain").display()
    ))?;
    let trained = dispatch("pretrain", &pre)?;
    let palette = dir.join("palette.json");
    mnb::cli::common::synthetic_palette(16, 0, "synthetic").save(&palette)?;
    for t in ["0", "1"] {
        let mut cfg = RunConfig::new();
        cfg.set("checkpoint", trained.join("pretrained.ckpt").display().to_string())?;
        cfg.set("palette", palette.display().to_string())?;
        cfg.set("temperature", t)?;
        cfg.set("n", "9")?;
        cfg.set("out_dir", dir.join(format!("samples-t{t}")).display().to_string())?;
        let out = dispatch("sample", &cfg)?;
        println!("temperature {t}: {}", out.join("samples.png").display());
    }
    Ok(())
}
