use std::collections::BTreeMap;
use std::path::PathBuf;

use serde_json::json;

use super::common::{hash_file, hash_outputs, load_stimuli, model_settings, Manifest, OutputLock, Source, Stimuli};
use super::config::{RunConfig, Settings};
use crate::error::{Error, Result};
use crate::experiments::{
    build_brady, build_konkle, build_paired, check_relations, exposure_sweep, write_results, Design, Experiment, ResultRow,
};
use crate::model::{init_model, nll_many, Checkpoint, ModelConfig, Parameters};
use crate::rng;
use crate::stimuli::Role;
use crate::trainer::{write_loss_trace, AdamHyper, TrainPlan};

pub const RESULTS_NAME: &str = "results.csv";
pub const FIT_NAME: &str = "study_fit.csv";

/// Seeds for one (set version, run seed) cell, all derived from the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSeeds {
    pub data: u64,
    pub build: u64,
    pub init: u64,
    pub shuffle: u64,
}

pub fn run_seeds(seed: u64, set_version: &str, run_seed: u64) -> RunSeeds {
    let cell = rng::derive(seed, run_seed);
    RunSeeds {
        data: rng::derive_str(seed, &format!("data/{set_version}")),
        build: rng::derive_str(seed, &format!("build/{set_version}")),
        init: rng::derive_str(cell, "init"),
        shuffle: rng::derive_str(cell, "shuffle"),
    }
}

struct DesignParams {
    design: Design,
    n_study: usize,
    trials_per_condition: usize,
    categories_per_level: usize,
    n_trials: usize,
}

struct RunSpec {
    out_dir: PathBuf,
    seed: u64,
    source: Source,
    design: DesignParams,
    pinned: Option<PathBuf>,
    pretrained: Option<PathBuf>,
    arch: (usize, usize, usize, Option<u64>),
    plan: (usize, u64, Vec<u64>),
    hyper: AdamHyper,
    set_versions: Vec<String>,
    run_seeds: Vec<u64>,
    save_checkpoints: bool,
    study_fit: bool,
}

fn read_spec(cfg: &RunConfig) -> Result<(RunSpec, BTreeMap<String, String>)> {
    let mut s = Settings::new(cfg);
    let out_dir = s.required::<String>("out_dir").map(PathBuf::from);
    let seed: u64 = s.value("seed", 0);
    let design = s.required::<String>("design").and_then(|d| match d.parse::<Design>() {
        Ok(d) => Some(d),
        Err(e) => {
            s.error(format!("design: {e}"));
            None
        }
    });
    let source = Source::from_settings(&mut s, 2500, 300);
    let design = design.map(|design| DesignParams {
        design,
        n_study: if design == Design::Brady { s.value("design.n_study", 2500usize) } else { 0 },
        trials_per_condition: match design {
            Design::Brady => s.value("design.trials_per_condition", 100usize),
            Design::Konkle => s.value("design.trials_per_condition", 40usize),
            _ => 0,
        },
        categories_per_level: if design == Design::Konkle { s.value("design.categories_per_level", 40usize) } else { 0 },
        n_trials: if matches!(design, Design::Noise | Design::Paired) { s.value("design.n_trials", 300usize) } else { 0 },
    });
    let pinned = s.path("experiment");
    let pretrained = s.path("pretrained");
    let arch = if pretrained.is_some() {
        let l = s.optional::<usize>("model.n_layers");
        let h = s.optional::<usize>("model.n_heads");
        let d = s.optional::<usize>("model.d_embed");
        if l.is_some() || h.is_some() || d.is_some() || cfg.get("model.preset").is_some() {
            s.error("model.* keys cannot be combined with pretrained; the checkpoint fixes the architecture");
        }
        (0, 0, 0, None)
    } else {
        model_settings(&mut s)
    };
    let eval_points: Vec<u64> = s.list("train.eval_points", &[1, 2, 5, 10, 20]);
    let n_exposures = s.value("train.n_exposures", eval_points.last().copied().unwrap_or(0));
    let batch_size = s.value("train.batch_size", 32usize);
    let d = AdamHyper::default();
    let hyper = AdamHyper {
        lr: s.value("adam.lr", d.lr),
        beta1: s.value("adam.beta1", d.beta1),
        beta2: s.value("adam.beta2", d.beta2),
        eps: s.value("adam.eps", d.eps),
    };
    if hyper.validate().is_err() {
        s.error(format!("adam: invalid hyperparameters {hyper:?}"));
    }
    let plan = TrainPlan {
        batch_size,
        n_exposures,
        shuffle_seed: 0,
        eval_points: eval_points.clone(),
    };
    if let Err(e) = plan.validate() {
        s.error(e.to_string());
    }
    if eval_points.is_empty() {
        s.error("train.eval_points: must not be empty");
    }
    let set_versions: Vec<String> = s.list("runs.set_versions", &["A".to_string(), "B".to_string()]);
    let run_seeds: Vec<u64> = s.list("runs.seeds", &[0, 1]);
    if set_versions.is_empty() || run_seeds.is_empty() {
        s.error("runs.set_versions and runs.seeds must each list at least one value");
    }
    let mut unique = set_versions.clone();
    unique.sort();
    unique.dedup();
    if unique.len() != set_versions.len() {
        s.error("runs.set_versions: duplicate labels");
    }
    if pinned.is_some() && set_versions.len() != 1 {
        s.error("experiment: a pinned experiment file needs exactly one set version");
    }
    let save_checkpoints = s.value("save_checkpoints", true);
    let study_fit = s.value("eval.study_fit", true);
    let config = s.finish()?;
    Ok((
        RunSpec {
            out_dir: out_dir.expect("validated"),
            seed,
            source: source.expect("validated"),
            design: design.expect("validated"),
            pinned,
            pretrained,
            arch,
            plan: (batch_size, n_exposures, eval_points),
            hyper,
            set_versions,
            run_seeds,
            save_checkpoints,
            study_fit,
        },
        config,
    ))
}

fn build_experiment(spec: &RunSpec, stimuli: &Stimuli, build_seed: u64) -> Result<Experiment> {
    let d = &spec.design;
    match d.design {
        Design::Brady => build_brady(&stimuli.metas, d.n_study, d.trials_per_condition, build_seed),
        Design::Konkle => build_konkle(&stimuli.metas, d.categories_per_level, d.trials_per_condition, build_seed),
        Design::Noise | Design::Paired => build_paired(
            d.design,
            &stimuli.ids_with_role(Role::StudyPool),
            &stimuli.ids_with_role(Role::NovelFoilPool),
            d.n_trials,
            build_seed,
        ),
    }
}

fn initial_params(spec: &RunSpec, stimuli: &Stimuli, init_seed: u64) -> Result<(Parameters<f32>, Option<u64>)> {
    if let Some(path) = &spec.pretrained {
        let ck = Checkpoint::load(path)?;
        let cfg = ck.params.config;
        if cfg.vocab_k != stimuli.k {
            return Err(Error::VocabMismatch {
                palette: stimuli.k,
                model: cfg.vocab_k,
            });
        }
        if cfg.seq_len != stimuli.seq_len() {
            return Err(Error::Shape(format!(
                "checkpoint seq_len {} does not match {}x{} stimuli",
                cfg.seq_len, stimuli.side_h, stimuli.side_w
            )));
        }
        return Ok((ck.params, None));
    }
    let (n_layers, n_heads, d_embed, fixed) = spec.arch;
    let init_seed = fixed.unwrap_or(init_seed);
    let cfg = ModelConfig {
        n_layers,
        n_heads,
        d_embed,
        vocab_k: stimuli.k,
        seq_len: stimuli.seq_len(),
        init_seed,
    };
    Ok((init_model(cfg)?, Some(init_seed)))
}

/// Train and evaluate every (set version, run seed) cell, writing checkpoints,
/// loss traces, experiment files, `results.csv` and `manifest.json`.
pub fn run(cfg: &RunConfig) -> Result<PathBuf> {
    let (spec, config) = read_spec(cfg)?;
    let out = spec.out_dir.clone();
    let _lock = OutputLock::acquire(&out)?;

    let mut inputs = BTreeMap::new();
    if let Some(p) = &spec.pretrained {
        inputs.insert("pretrained".to_string(), hash_file(p)?);
    }
    if let Some(p) = &spec.pinned {
        inputs.insert("experiment".to_string(), hash_file(p)?);
    }
    let (batch_size, n_exposures, eval_points) = spec.plan.clone();
    let mut rows: Vec<ResultRow> = Vec::new();
    let mut files = Vec::new();
    let mut fit_lines = vec!["set_version,run_seed,exposures,study_nats_per_pixel".to_string()];
    let mut cells = Vec::new();
    let mut shared: Option<Stimuli> = None;

    for version in &spec.set_versions {
        let seeds0 = run_seeds(spec.seed, version, 0);
        let stimuli = match (&shared, spec.source.is_generated()) {
            (Some(st), false) => st.clone(),
            _ => {
                let st = load_stimuli(&spec.source, seeds0.data)?;
                if !spec.source.is_generated() {
                    shared = Some(st.clone());
                }
                st
            }
        };
        inputs.insert(format!("dataset/{version}"), stimuli.dataset_hash.clone());

        let exp = match &spec.pinned {
            Some(p) => {
                let e = Experiment::load(p)?;
                if e.design != spec.design.design {
                    return Err(Error::Config(vec![format!(
                        "experiment file has design {}, config says {}",
                        e.design, spec.design.design
                    )]));
                }
                e.with_version(version.clone())
            }
            None => build_experiment(&spec, &stimuli, seeds0.build)?.with_version(version.clone()),
        };
        if let Err(problems) = check_relations(&exp, &stimuli.metas) {
            return Err(Error::InvalidArgument(format!("experiment fails relation checks: {}", problems.join("; "))));
        }
        let exp_path = out.join("experiments").join(format!("{version}.json"));
        std::fs::create_dir_all(exp_path.parent().expect("parent")).map_err(|e| Error::io(&out, e))?;
        exp.save(&exp_path)?;
        files.push(exp_path);
        let store = stimuli.store();
        let study_images: Vec<_> = exp.study.iter().map(|id| store.get(id)).collect::<Result<_>>()?;

        for &run_seed in &spec.run_seeds {
            let seeds = run_seeds(spec.seed, version, run_seed);
            let (mut params, init_seed) = initial_params(&spec, &stimuli, seeds.init)?;
            let plan = TrainPlan {
                batch_size,
                n_exposures,
                shuffle_seed: seeds.shuffle,
                eval_points: eval_points.clone(),
            };
            let cell_dir = out.join("runs").join(format!("{version}-{run_seed}"));
            std::fs::create_dir_all(&cell_dir).map_err(|e| Error::io(&cell_dir, e))?;
            let mut saved = Vec::new();
            let sweep = exposure_sweep(&mut params, &exp, &store, &plan, spec.hyper, run_seed, |snap, _| {
                if spec.save_checkpoints {
                    let path = cell_dir.join(format!("exposures-{:05}.ckpt", snap.exposures));
                    snap.to_checkpoint().save(&path)?;
                    saved.push(path);
                }
                if spec.study_fit {
                    let scores = nll_many(snap.params, &study_images)?;
                    let mean = scores.iter().map(|n| n.per_pixel).sum::<f64>() / scores.len() as f64;
                    fit_lines.push(format!("{version},{run_seed},{},{mean}", snap.exposures));
                }
                Ok(())
            })?;
            let loss_path = cell_dir.join("loss.csv");
            write_loss_trace(&loss_path, &sweep.loss_trace)?;
            files.extend(saved);
            files.push(loss_path);
            for r in &sweep.results {
                rows.extend(r.rows());
            }
            cells.push(json!({
                "set_version": version,
                "run_seed": run_seed,
                "build_seed": exp.build_seed,
                "data_seed": seeds.data,
                "init_seed": init_seed,
                "shuffle_seed": seeds.shuffle,
                "training_forward_passes": sweep.ledger.total(),
            }));
        }
    }

    let results = out.join(RESULTS_NAME);
    write_results(&results, &rows)?;
    files.push(results);
    if spec.study_fit {
        let fit = out.join(FIT_NAME);
        std::fs::write(&fit, fit_lines.join("\n") + "\n").map_err(|e| Error::io(&fit, e))?;
        files.push(fit);
    }
    Manifest {
        command: "run",
        crate_version: env!("CARGO_PKG_VERSION"),
        config: &config,
        derived: json!({
            "design": spec.design.design.as_str(),
            "adam": spec.hyper,
            "batch_size": batch_size,
            "n_exposures": n_exposures,
            "eval_points": eval_points,
            "cells": cells,
        }),
        inputs,
        outputs: hash_outputs(&out, &files)?,
    }
    .write(&out)?;
    Ok(out)
}
