use std::collections::BTreeMap;
use std::path::PathBuf;

use serde_json::json;

use super::common::{hash_outputs, load_stimuli, model_settings, Manifest, OutputLock, Source};
use super::config::{RunConfig, Settings};
use crate::error::Result;
use crate::model::{init_model, Checkpoint, ModelConfig};
use crate::rng;
use crate::trainer::{pretrain as pretrain_corpus, write_loss_trace, AdamHyper, AdamState};

pub const PRETRAINED_NAME: &str = "pretrained.ckpt";

/// Train a fresh model on every image of a corpus and save the result as a
/// checkpoint usable through the `pretrained` key of `run`.
pub fn pretrain(cfg: &RunConfig) -> Result<PathBuf> {
    let mut s = Settings::new(cfg);
    let out_dir = s.required::<String>("out_dir").map(PathBuf::from);
    let seed: u64 = s.value("seed", 0);
    let source = Source::from_settings(&mut s, 2500, 0);
    let (n_layers, n_heads, d_embed, init_seed) = model_settings(&mut s);
    let epochs: u64 = s.value("train.epochs", 15);
    let batch_size: usize = s.value("train.batch_size", 32);
    let report_every: u64 = s.value("train.report_every", 50);
    let d = AdamHyper::default();
    let hyper = AdamHyper {
        lr: s.value("adam.lr", d.lr),
        beta1: s.value("adam.beta1", d.beta1),
        beta2: s.value("adam.beta2", d.beta2),
        eps: s.value("adam.eps", d.eps),
    };
    if let Err(e) = hyper.validate() {
        s.error(e.to_string());
    }
    if batch_size == 0 {
        s.error("train.batch_size: must be at least 1");
    }
    let config = s.finish()?;
    let (out_dir, source) = (out_dir.expect("validated"), source.expect("validated"));
    let _lock = OutputLock::acquire(&out_dir)?;

    let data_seed = rng::derive_str(seed, "data/pretrain");
    let stimuli = load_stimuli(&source, data_seed)?;
    let init_seed = init_seed.unwrap_or_else(|| rng::derive_str(seed, "init"));
    let shuffle_seed = rng::derive_str(seed, "shuffle");
    let mut params = init_model(ModelConfig {
        n_layers,
        n_heads,
        d_embed,
        vocab_k: stimuli.k,
        seq_len: stimuli.seq_len(),
        init_seed,
    })?;
    let mut state = AdamState::new(&params, hyper);
    let outcome = pretrain_corpus(
        &mut params,
        &stimuli.images,
        epochs,
        batch_size,
        shuffle_seed,
        &mut state,
        report_every,
    )?;

    let ckpt = out_dir.join(PRETRAINED_NAME);
    Checkpoint {
        params,
        step: state.step,
        exposures: epochs,
    }
    .save(&ckpt)?;
    let loss = out_dir.join("loss.csv");
    write_loss_trace(&loss, &outcome.loss_trace)?;
    let mut inputs = BTreeMap::new();
    inputs.insert("dataset".to_string(), stimuli.dataset_hash.clone());
    Manifest {
        command: "pretrain",
        crate_version: env!("CARGO_PKG_VERSION"),
        config: &config,
        derived: json!({
            "n_images": stimuli.images.len(),
            "init_seed": init_seed,
            "shuffle_seed": shuffle_seed,
            "data_seed": data_seed,
            "optimizer_steps": state.step,
            "forward_passes": outcome.ledger.total(),
            "final_nats_per_pixel": outcome.loss_trace.last().map(|r| r.nats_per_pixel),
        }),
        inputs,
        outputs: hash_outputs(&out_dir, &[ckpt, loss])?,
    }
    .write(&out_dir)?;
    Ok(out_dir)
}
