//! A small exposure sweep: train a tiny model on mosaics and watch study loss
//! fall while 2AFC accuracy against unseen mosaics rises.

use mnb::experiments::{build_paired, exposure_sweep, Design, ImageStore};
use mnb::model::{init_model, nll_many, ModelConfig};
use mnb::stimuli::synthetic::mosaic_set;
use mnb::trainer::{AdamHyper, TrainPlan};

fn main() -> mnb::Result<()> {
    let images = mosaic_set(40, 8, 16, 7)?;
    let mut store = ImageStore::new();
    let (study, foils): (Vec<String>, Vec<String>) = ((0..20).map(|i| format!("s{i}")).collect(), (0..20).map(|i| format!("f{i}")).collect());
    for (id, img) in study.iter().chain(&foils).zip(images) {
        store.insert(id.clone(), img);
    }
    let exp = build_paired(Design::Paired, &study, &foils, 20, 1)?;
    let mut params = init_model(ModelConfig {
        n_layers: 1,
        n_heads: 2,
        d_embed: 32,
        vocab_k: 16,
        seq_len: 64,
        init_seed: 3,
    })?;
    let plan = TrainPlan {
        batch_size: 8,
        n_exposures: 60,
        shuffle_seed: 11,
        eval_points: vec![0, 1, 5, 20, 60],
    };
    let study_images: Vec<_> = study.iter().map(|id| store.get(id)).collect::<mnb::Result<_>>()?;
    let hyper = AdamHyper { lr: 2e-3, ..AdamHyper::default() };
    exposure_sweep(&mut params, &exp, &store, &plan, hyper, 0, |snap, result| {
        let fit = nll_many(snap.params, &study_images)?;
        let mean = fit.iter().map(|n| n.per_pixel).sum::<f64>() / fit.len() as f64;
        println!(
            "exposures={:3} study_loss={mean:.4} nats/pixel accuracy={:.2}",
            snap.exposures,
            result.overall_accuracy()
        );
        Ok(())
    })?;
    Ok(())
}
