//! Adam training with exact exposure accounting.
//!
//! One exposure of an image is one training forward pass of it; one epoch over
//! a set exposes every image exactly once.

mod adam;

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamHyper, AdamState};

use crate::error::{Error, Result};
use crate::model::{loss_and_gradients, Checkpoint, Parameters};
use crate::rng;
use crate::stimuli::{NamedImage, PalettedImage};

pub const LOSS_TRACE_HEADER: &str = "phase,epoch,step,exposures,nats_per_pixel";

/// Per-image training forward-pass counts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExposureLedger {
    counts: BTreeMap<String, u64>,
    total: u64,
}

impl ExposureLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, id: &str) {
        *self.counts.entry(id.to_string()).or_insert(0) += 1;
        self.total += 1;
    }

    pub fn count(&self, id: &str) -> u64 {
        self.counts.get(id).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn counts(&self) -> &BTreeMap<String, u64> {
        &self.counts
    }

    /// Smallest and largest count over `ids`.
    pub fn min_max<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> Option<(u64, u64)> {
        ids.into_iter().map(|id| self.count(id)).fold(None, |acc, c| match acc {
            None => Some((c, c)),
            Some((lo, hi)) => Some((lo.min(c), hi.max(c))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainPlan {
    pub batch_size: usize,
    pub n_exposures: u64,
    pub shuffle_seed: u64,
    /// Strictly increasing exposure counts at which to checkpoint.
    pub eval_points: Vec<u64>,
}

impl TrainPlan {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.batch_size == 0 {
            problems.push("batch_size must be at least 1".to_string());
        }
        if self.eval_points.windows(2).any(|w| w[0] >= w[1]) {
            problems.push(format!("eval_points {:?} must be strictly increasing", self.eval_points));
        }
        if let Some(&bad) = self.eval_points.iter().find(|&&e| e > self.n_exposures) {
            problems.push(format!("eval_point {bad} exceeds n_exposures {}", self.n_exposures));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Plan(problems.join("; ")))
        }
    }
}

/// Parameters as they stand at an exposure boundary.
#[derive(Debug, Clone, Copy)]
pub struct Snapshot<'a> {
    pub params: &'a Parameters<f32>,
    pub step: u64,
    pub exposures: u64,
}

impl Snapshot<'_> {
    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            params: self.params.clone(),
            step: self.step,
            exposures: self.exposures,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub phase: String,
    pub epoch: u64,
    pub step: u64,
    pub exposures: u64,
    pub nats_per_pixel: f64,
}

pub fn write_loss_trace(path: &Path, records: &[LossRecord]) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "{LOSS_TRACE_HEADER}").expect("write to Vec");
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.phase, r.epoch, r.step, r.exposures, r.nats_per_pixel
        )
        .expect("write to Vec");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn check_ids(images: &[NamedImage]) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for n in images {
        if !seen.insert(n.id.as_str()) {
            return Err(Error::InvalidArgument(format!("duplicate training id {}", n.id)));
        }
    }
    Ok(())
}

struct EpochRunner<'a> {
    phase: &'a str,
    images: &'a [NamedImage],
    batch_size: usize,
    shuffle_seed: u64,
    /// Optimizer steps between loss records; 0 records once per epoch.
    report_every: u64,
}

impl EpochRunner<'_> {
    /// Train for one epoch (0-based index `epoch`), appending loss records.
    fn run(
        &self,
        epoch: u64,
        params: &mut Parameters<f32>,
        state: &mut AdamState,
        ledger: &mut ExposureLedger,
        trace: &mut Vec<LossRecord>,
    ) -> Result<()> {
        let mut order: Vec<usize> = (0..self.images.len()).collect();
        order.shuffle(&mut rng::seeded(rng::derive(self.shuffle_seed, epoch)));

        let (mut sum, mut count) = (0.0, 0usize);
        let n_batches = order.len().div_ceil(self.batch_size);
        for (b, chunk) in order.chunks(self.batch_size).enumerate() {
            let batch: Vec<&PalettedImage> = chunk.iter().map(|&i| &self.images[i].image).collect();
            let (loss, grads) = loss_and_gradients(params, &batch)?;
            for &i in chunk {
                ledger.record(&self.images[i].id);
            }
            adam_step(params, &grads, state)?;
            sum += loss * chunk.len() as f64;
            count += chunk.len();
            let last = b + 1 == n_batches;
            let due = self.report_every > 0 && state.step.is_multiple_of(self.report_every);
            if due || (last && count > 0) {
                trace.push(LossRecord {
                    phase: self.phase.to_string(),
                    epoch: epoch + 1,
                    step: state.step,
                    exposures: if last { epoch + 1 } else { epoch },
                    nats_per_pixel: sum / count as f64,
                });
                sum = 0.0;
                count = 0;
            }
        }
        Ok(())
    }
}

/// Study-phase training. `on_eval` receives the parameters whenever every
/// study image has just reached an exposure count in `plan.eval_points`
/// (exposure 0 is reported before any update). Returns the per-epoch loss
/// trace, each entry being the mean pre-update batch loss over the epoch.
pub fn train_exposures(
    params: &mut Parameters<f32>,
    study: &[NamedImage],
    plan: &TrainPlan,
    state: &mut AdamState,
    ledger: &mut ExposureLedger,
    mut on_eval: impl FnMut(Snapshot<'_>) -> Result<()>,
) -> Result<Vec<LossRecord>> {
    plan.validate()?;
    if study.is_empty() {
        return Err(Error::InvalidArgument("study set is empty".into()));
    }
    check_ids(study)?;
    let runner = EpochRunner {
        phase: "study",
        images: study,
        batch_size: plan.batch_size,
        shuffle_seed: plan.shuffle_seed,
        report_every: 0,
    };
    let mut trace = Vec::new();
    let mut emit = |params: &Parameters<f32>, step: u64, exposures: u64| {
        if plan.eval_points.binary_search(&exposures).is_ok() {
            on_eval(Snapshot {
                params,
                step,
                exposures,
            })
        } else {
            Ok(())
        }
    };
    emit(params, state.step, 0)?;
    for epoch in 0..plan.n_exposures {
        runner.run(epoch, params, state, ledger, &mut trace)?;
        emit(params, state.step, epoch + 1)?;
    }
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainOutcome {
    /// Pretraining forward passes, kept apart from any study-phase ledger.
    pub ledger: ExposureLedger,
    pub loss_trace: Vec<LossRecord>,
}

/// Corpus pretraining with the same mechanics as the study phase. A loss
/// record is emitted every `report_every` optimizer steps and at the end of
/// each epoch.
pub fn pretrain(
    params: &mut Parameters<f32>,
    corpus: &[NamedImage],
    epochs: u64,
    batch_size: usize,
    shuffle_seed: u64,
    state: &mut AdamState,
    report_every: u64,
) -> Result<PretrainOutcome> {
    if corpus.is_empty() {
        return Err(Error::InvalidArgument("pretraining corpus is empty".into()));
    }
    if batch_size == 0 {
        return Err(Error::Plan("batch_size must be at least 1".into()));
    }
    check_ids(corpus)?;
    let runner = EpochRunner {
        phase: "pretrain",
        images: corpus,
        batch_size,
        shuffle_seed,
        report_every,
    };
    let mut ledger = ExposureLedger::new();
    let mut loss_trace = Vec::new();
    for epoch in 0..epochs {
        runner.run(epoch, params, state, &mut ledger, &mut loss_trace)?;
    }
    Ok(PretrainOutcome { ledger, loss_trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_model, nll, ModelConfig};
    use crate::stimuli::synthetic::mosaic_set;

    fn toy_model(seed: u64) -> Parameters<f32> {
        init_model(ModelConfig {
            n_layers: 1,
            n_heads: 1,
            d_embed: 8,
            vocab_k: 4,
            seq_len: 4,
            init_seed: seed,
        })
        .unwrap()
    }

    fn named(images: Vec<PalettedImage>) -> Vec<NamedImage> {
        images
            .into_iter()
            .enumerate()
            .map(|(i, image)| NamedImage {
                id: format!("img{i:04}"),
                image,
            })
            .collect()
    }

    fn tiny_set(n: usize, seed: u64) -> Vec<NamedImage> {
        named(mosaic_set(n, 2, 4, seed).unwrap())
    }

    #[test]
    fn one_epoch_of_2500_in_batches_of_32() {
        let mut p = toy_model(0);
        let study = tiny_set(2500, 1);
        let plan = TrainPlan {
            batch_size: 32,
            n_exposures: 1,
            shuffle_seed: 4,
            eval_points: vec![1],
        };
        let mut state = AdamState::new(&p, AdamHyper::default());
        let mut ledger = ExposureLedger::new();
        let mut seen = Vec::new();
        train_exposures(&mut p, &study, &plan, &mut state, &mut ledger, |s| {
            seen.push((s.step, s.exposures));
            Ok(())
        })
        .unwrap();
        assert_eq!(state.step, 79);
        assert_eq!(seen, vec![(79, 1)]);
        assert_eq!(ledger.total(), 2500);
        assert_eq!(ledger.min_max(study.iter().map(|n| n.id.as_str())), Some((1, 1)));
    }

    #[test]
    fn exposure_counts_are_exact_after_k_epochs() {
        let mut p = toy_model(0);
        let study = tiny_set(37, 2);
        let plan = TrainPlan {
            batch_size: 8,
            n_exposures: 3,
            shuffle_seed: 1,
            eval_points: vec![0, 2, 3],
        };
        let mut state = AdamState::new(&p, AdamHyper::default());
        let mut ledger = ExposureLedger::new();
        let mut seen = Vec::new();
        let trace = train_exposures(&mut p, &study, &plan, &mut state, &mut ledger, |s| {
            seen.push(s.exposures);
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, vec![0, 2, 3]);
        assert_eq!(ledger.min_max(study.iter().map(|n| n.id.as_str())), Some((3, 3)));
        assert_eq!(trace.len(), 3);
        assert_eq!(state.step, 15);
    }

    #[test]
    fn zero_exposures_is_a_no_op() {
        let p0 = toy_model(0);
        let mut p = p0.clone();
        let plan = TrainPlan {
            batch_size: 4,
            n_exposures: 0,
            shuffle_seed: 0,
            eval_points: vec![0],
        };
        let mut state = AdamState::new(&p, AdamHyper::default());
        let mut ledger = ExposureLedger::new();
        let mut calls = 0;
        train_exposures(&mut p, &tiny_set(5, 0), &plan, &mut state, &mut ledger, |_| {
            calls += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(p, p0);
        assert_eq!((calls, state.step, ledger.total()), (1, 0, 0));

        let out = pretrain(&mut p, &tiny_set(5, 0), 0, 4, 0, &mut state, 1).unwrap();
        assert_eq!(p, p0);
        assert!(out.loss_trace.is_empty());
    }

    #[test]
    fn plan_and_input_errors() {
        let mut p = toy_model(0);
        let mut state = AdamState::new(&p, AdamHyper::default());
        let mut ledger = ExposureLedger::new();
        let bad = TrainPlan {
            batch_size: 4,
            n_exposures: 2,
            shuffle_seed: 0,
            eval_points: vec![1, 3],
        };
        let r = train_exposures(&mut p, &tiny_set(3, 0), &bad, &mut state, &mut ledger, |_| Ok(()));
        assert!(matches!(r, Err(Error::Plan(_))));
        let good = TrainPlan {
            eval_points: vec![1],
            ..bad
        };
        let r = train_exposures(&mut p, &[], &good, &mut state, &mut ledger, |_| Ok(()));
        assert!(r.is_err());
        let mut dup = tiny_set(2, 0);
        dup[1].id = dup[0].id.clone();
        let r = train_exposures(&mut p, &dup, &good, &mut state, &mut ledger, |_| Ok(()));
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
        assert!(TrainPlan { batch_size: 0, ..good }.validate().is_err());
    }

    #[test]
    fn identical_seeds_give_identical_checkpoints() {
        let study = tiny_set(20, 3);
        let plan = TrainPlan {
            batch_size: 6,
            n_exposures: 4,
            shuffle_seed: 8,
            eval_points: vec![1, 4],
        };
        let run = || {
            let mut p = toy_model(5);
            let mut state = AdamState::new(&p, AdamHyper::default());
            let mut ledger = ExposureLedger::new();
            let mut cks = Vec::new();
            train_exposures(&mut p, &study, &plan, &mut state, &mut ledger, |s| {
                cks.push(s.to_checkpoint().encode().unwrap());
                Ok(())
            })
            .unwrap();
            cks
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn pretraining_lowers_loss() {
        let cfg = ModelConfig {
            n_layers: 1,
            n_heads: 2,
            d_embed: 16,
            vocab_k: 4,
            seq_len: 16,
            init_seed: 1,
        };
        let mut p = init_model(cfg).unwrap();
        let corpus = named(mosaic_set(200, 4, 4, 6).unwrap());
        let mean = |p: &Parameters<f32>| {
            corpus.iter().map(|n| nll(p, &n.image).unwrap().per_pixel).sum::<f64>() / corpus.len() as f64
        };
        let before = mean(&p);
        let mut state = AdamState::new(&p, AdamHyper::default());
        let out = pretrain(&mut p, &corpus, 15, 32, 2, &mut state, 5).unwrap();
        assert!(mean(&p) < before);
        assert_eq!(out.ledger.total(), 15 * 200);
        let first = out.loss_trace.first().unwrap().nats_per_pixel;
        let last = out.loss_trace.last().unwrap().nats_per_pixel;
        assert!(last < first);
        assert!(out.loss_trace.iter().all(|r| r.phase == "pretrain"));
    }

    #[test]
    fn single_image_is_memorized_in_500_steps() {
        let cfg = ModelConfig {
            n_layers: 1,
            n_heads: 2,
            d_embed: 128,
            vocab_k: 16,
            seq_len: 256,
            init_seed: 0,
        };
        let mut p = init_model(cfg).unwrap();
        let img = mosaic_set(1, 16, 16, 12).unwrap().remove(0);
        let mut state = AdamState::new(&p, AdamHyper::default());
        for _ in 0..500 {
            let (_, g) = loss_and_gradients(&p, &[&img]).unwrap();
            adam_step(&mut p, &g, &mut state).unwrap();
        }
        let got = nll(&p, &img).unwrap().per_pixel;
        assert!(got < 0.01, "{got} nats/pixel");
    }

    #[test]
    fn loss_trace_csv_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("loss.csv");
        let rec = LossRecord {
            phase: "study".into(),
            epoch: 1,
            step: 2,
            exposures: 1,
            nats_per_pixel: 0.5,
        };
        write_loss_trace(&path, &[rec]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "phase,epoch,step,exposures,nats_per_pixel\nstudy,1,2,1,0.5\n");
    }
}
