//! Two-alternative forced-choice sessions and exposure sweeps.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::design::{Condition, Design, Experiment, TestTrial};
use crate::error::{Error, Result};
use crate::model::{nll, Parameters};
use crate::rng;
use crate::stimuli::{NamedImage, PalettedImage};
use crate::trainer::{train_exposures, AdamHyper, AdamState, ExposureLedger, LossRecord, Snapshot, TrainPlan};

pub const RESULTS_HEADER: [&str; 9] = [
    "design",
    "set_version",
    "run_seed",
    "exposures",
    "condition",
    "n_trials",
    "n_correct",
    "accuracy",
    "ties",
];

/// Images addressable by stimulus id.
#[derive(Debug, Clone, Default)]
pub struct ImageStore {
    images: HashMap<String, PalettedImage>,
}

impl ImageStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: impl Into<String>, image: PalettedImage) {
        self.images.insert(id.into(), image);
    }

    pub fn get(&self, id: &str) -> Result<&PalettedImage> {
        self.images.get(id).ok_or_else(|| Error::UnknownId(id.to_string()))
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// The study list as training input, in experiment order.
    pub fn named(&self, ids: &[String]) -> Result<Vec<NamedImage>> {
        ids.iter()
            .map(|id| {
                Ok(NamedImage {
                    id: id.clone(),
                    image: self.get(id)?.clone(),
                })
            })
            .collect()
    }
}

impl FromIterator<NamedImage> for ImageStore {
    fn from_iter<I: IntoIterator<Item = NamedImage>>(iter: I) -> Self {
        Self {
            images: iter.into_iter().map(|n| (n.id, n.image)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Choice {
    Study,
    Foil,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceOutcome {
    pub trial: TestTrial,
    pub nll_study: f64,
    pub nll_foil: f64,
    pub choice: Choice,
    pub correct: bool,
    pub tie: bool,
}

/// The lower-NLL image is the one judged seen; exact ties fall to a fair coin
/// seeded by `trial_seed`.
pub fn decide(nll_study: f64, nll_foil: f64, trial_seed: u64) -> (Choice, bool) {
    if nll_study < nll_foil {
        (Choice::Study, false)
    } else if nll_foil < nll_study {
        (Choice::Foil, false)
    } else {
        let heads: bool = rng::seeded(trial_seed).random();
        (if heads { Choice::Study } else { Choice::Foil }, true)
    }
}

pub fn outcome(trial: &TestTrial, nll_study: f64, nll_foil: f64) -> ChoiceOutcome {
    let (choice, tie) = decide(nll_study, nll_foil, trial.trial_seed);
    ChoiceOutcome {
        trial: trial.clone(),
        nll_study,
        nll_foil,
        choice,
        correct: choice == Choice::Study,
        tie,
    }
}

pub fn run_trial(params: &Parameters<f32>, trial: &TestTrial, images: &ImageStore) -> Result<ChoiceOutcome> {
    let s = nll(params, images.get(&trial.study_id)?)?.total;
    let f = nll(params, images.get(&trial.foil_id)?)?.total;
    Ok(outcome(trial, s, f))
}

/// Every trial of a session, in trial order. Each distinct image is scored
/// once; scoring runs in parallel and never mutates the parameters.
pub fn run_trials(params: &Parameters<f32>, exp: &Experiment, images: &ImageStore) -> Result<Vec<ChoiceOutcome>> {
    let mut ids: Vec<&str> = exp
        .trials
        .iter()
        .flat_map(|t| [t.study_id.as_str(), t.foil_id.as_str()])
        .collect();
    ids.sort_unstable();
    ids.dedup();
    let scored: Vec<f64> = ids
        .par_iter()
        .map(|id| Ok(nll(params, images.get(id)?)?.total))
        .collect::<Result<_>>()?;
    let table: HashMap<&str, f64> = ids.into_iter().zip(scored).collect();
    Ok(exp
        .trials
        .iter()
        .map(|t| outcome(t, table[t.study_id.as_str()], table[t.foil_id.as_str()]))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub condition: Condition,
    pub n_trials: usize,
    pub n_correct: usize,
    pub accuracy: f64,
    pub ties: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub design: Design,
    pub set_version: String,
    pub run_seed: u64,
    pub exposures: u64,
    /// Conditions with at least one trial, in design order.
    pub conditions: Vec<ConditionResult>,
}

impl RunResult {
    pub fn condition(&self, c: Condition) -> Option<&ConditionResult> {
        self.conditions.iter().find(|r| r.condition == c)
    }

    /// Accuracy pooled over every trial of the session.
    pub fn overall_accuracy(&self) -> f64 {
        let n: usize = self.conditions.iter().map(|c| c.n_trials).sum();
        let k: usize = self.conditions.iter().map(|c| c.n_correct).sum();
        if n == 0 {
            0.0
        } else {
            k as f64 / n as f64
        }
    }

    pub fn rows(&self) -> Vec<ResultRow> {
        self.conditions
            .iter()
            .map(|c| ResultRow {
                design: self.design,
                set_version: self.set_version.clone(),
                run_seed: self.run_seed,
                exposures: self.exposures,
                condition: c.condition,
                n_trials: c.n_trials,
                n_correct: c.n_correct,
                accuracy: c.accuracy,
                ties: c.ties,
            })
            .collect()
    }
}

pub fn summarize(exp: &Experiment, outcomes: &[ChoiceOutcome], run_seed: u64, exposures: u64) -> RunResult {
    let mut tally: BTreeMap<Condition, (usize, usize, usize)> = BTreeMap::new();
    for o in outcomes {
        let e = tally.entry(o.trial.condition).or_default();
        e.0 += 1;
        e.1 += usize::from(o.correct);
        e.2 += usize::from(o.tie);
    }
    let conditions = exp
        .design
        .conditions()
        .iter()
        .filter_map(|c| tally.get(c).map(|&(n, k, t)| (c, n, k, t)))
        .map(|(&condition, n_trials, n_correct, ties)| ConditionResult {
            condition,
            n_trials,
            n_correct,
            accuracy: n_correct as f64 / n_trials as f64,
            ties,
        })
        .collect();
    RunResult {
        design: exp.design,
        set_version: exp.set_version.clone(),
        run_seed,
        exposures,
        conditions,
    }
}

pub fn run_session(params: &Parameters<f32>, exp: &Experiment, images: &ImageStore, run_seed: u64, exposures: u64) -> Result<RunResult> {
    let outcomes = run_trials(params, exp, images)?;
    Ok(summarize(exp, &outcomes, run_seed, exposures))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub results: Vec<RunResult>,
    pub loss_trace: Vec<LossRecord>,
    pub ledger: ExposureLedger,
}

/// Train on the experiment's study set and run a session at every eval point.
///
/// `on_checkpoint` sees each evaluated snapshot, e.g. to persist it. Session
/// scoring is evaluation only and never touches the exposure ledger.
pub fn exposure_sweep(
    params: &mut Parameters<f32>,
    exp: &Experiment,
    images: &ImageStore,
    plan: &TrainPlan,
    hyper: AdamHyper,
    run_seed: u64,
    mut on_checkpoint: impl FnMut(Snapshot<'_>, &RunResult) -> Result<()>,
) -> Result<SweepOutcome> {
    if plan.eval_points.is_empty() {
        return Err(Error::Plan("eval_points must not be empty".into()));
    }
    hyper.validate()?;
    let study = images.named(&exp.study)?;
    let mut state = AdamState::new(params, hyper);
    let mut ledger = ExposureLedger::new();
    let mut results = Vec::new();
    let loss_trace = train_exposures(params, &study, plan, &mut state, &mut ledger, |snap| {
        let result = run_session(snap.params, exp, images, run_seed, snap.exposures)?;
        on_checkpoint(snap, &result)?;
        results.push(result);
        Ok(())
    })?;
    Ok(SweepOutcome {
        results,
        loss_trace,
        ledger,
    })
}

/// One line of a results CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub design: Design,
    pub set_version: String,
    pub run_seed: u64,
    pub exposures: u64,
    pub condition: Condition,
    pub n_trials: usize,
    pub n_correct: usize,
    pub accuracy: f64,
    pub ties: usize,
}

pub fn write_results(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    if rows.is_empty() {
        w.write_record(RESULTS_HEADER)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::CsvSchema {
            path: path.to_path_buf(),
            reason: format!("{other:?}"),
        },
    }
}

/// Read a results CSV, rejecting any header other than the documented one.
pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_io(path, e))?;
    let header = r.headers().map_err(|e| csv_io(path, e))?.clone();
    if header.iter().ne(RESULTS_HEADER) {
        return Err(Error::CsvSchema {
            path: path.to_path_buf(),
            reason: format!("header {:?} does not match {:?}", header.iter().collect::<Vec<_>>(), RESULTS_HEADER),
        });
    }
    r.deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| Error::CsvSchema {
                path: path.to_path_buf(),
                reason: format!("row {}: {e}", i + 2),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::design::build_paired;
    use crate::model::{init_model, ModelConfig};
    use crate::stimuli::generate_noise_set;
    use proptest::prelude::*;

    fn trial(seed: u64) -> TestTrial {
        TestTrial {
            study_id: "s".into(),
            foil_id: "f".into(),
            condition: Condition::Noise,
            trial_seed: seed,
        }
    }

    #[test]
    fn decision_rule() {
        let o = outcome(&trial(0), 10.0, 12.0);
        assert_eq!((o.choice, o.correct, o.tie), (Choice::Study, true, false));
        let o = outcome(&trial(0), 12.0, 10.0);
        assert_eq!((o.choice, o.correct, o.tie), (Choice::Foil, false, false));
    }

    #[test]
    fn ties_follow_the_trial_seed_only() {
        let mut heads = 0;
        for seed in 0..200 {
            let a = outcome(&trial(seed), 5.0, 5.0);
            let b = outcome(&trial(seed), 7.5, 7.5);
            assert!(a.tie && b.tie);
            assert_eq!(a.choice, b.choice);
            heads += usize::from(a.correct);
        }
        assert!((60..=140).contains(&heads));
    }

    proptest! {
        #[test]
        fn swapping_flips_non_tie_choices(s in 0.0f64..1e4, f in 0.0f64..1e4, seed in any::<u64>()) {
            prop_assume!(s != f);
            let a = outcome(&trial(seed), s, f);
            let b = outcome(&trial(seed), f, s);
            prop_assert_ne!(a.choice, b.choice);
            prop_assert_ne!(a.correct, b.correct);
        }
    }

    fn noise_session(n: usize) -> (Parameters<f32>, Experiment, ImageStore) {
        let cfg = ModelConfig {
            n_layers: 1,
            n_heads: 2,
            d_embed: 16,
            vocab_k: 16,
            seq_len: 64,
            init_seed: 3,
        };
        let params = init_model(cfg).unwrap();
        let imgs = generate_noise_set(2 * n, 8, 8, 16, 4).unwrap();
        let mut store = ImageStore::new();
        let mut study = Vec::new();
        let mut foils = Vec::new();
        for (i, img) in imgs.into_iter().enumerate() {
            let id = if i < n { format!("s{i}") } else { format!("f{i}") };
            if i < n {
                study.push(id.clone());
            } else {
                foils.push(id.clone());
            }
            store.insert(id, img);
        }
        let exp = build_paired(Design::Noise, &study, &foils, n, 1).unwrap().with_version("A");
        (params, exp, store)
    }

    #[test]
    fn session_is_pure_and_matches_per_trial_scoring() {
        let (params, exp, store) = noise_session(40);
        let before = params.clone();
        let a = run_trials(&params, &exp, &store).unwrap();
        let b = run_trials(&params, &exp, &store).unwrap();
        assert_eq!(a, b);
        assert_eq!(params, before);
        for (o, t) in a.iter().zip(&exp.trials) {
            assert_eq!(o, &run_trial(&params, t, &store).unwrap());
        }
        let res = summarize(&exp, &a, 7, 0);
        let c = res.condition(Condition::Noise).unwrap();
        assert_eq!(c.n_trials, 40);
        assert_eq!(c.n_correct, a.iter().filter(|o| o.correct).count());
        assert!((0.0..=1.0).contains(&c.accuracy));
    }

    #[test]
    fn trial_order_does_not_matter() {
        let (params, exp, store) = noise_session(20);
        let mut rev = exp.clone();
        rev.trials.reverse();
        let a = run_session(&params, &exp, &store, 0, 0).unwrap();
        let b = run_session(&params, &rev, &store, 0, 0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn constant_likelihood_model_is_at_chance() {
        let (mut params, mut exp, store) = noise_session(10);
        params.head_weight.iter_mut().for_each(|w| *w = 0.0);
        // reuse the ten images across 300 trials with fresh seeds
        let base = exp.trials.clone();
        exp.trials = (0..300)
            .map(|i| TestTrial {
                trial_seed: rng::derive(99, i as u64),
                ..base[i % base.len()].clone()
            })
            .collect();
        let outs = run_trials(&params, &exp, &store).unwrap();
        assert!(outs.iter().all(|o| o.tie));
        let acc = outs.iter().filter(|o| o.correct).count() as f64 / 300.0;
        assert!((0.40..=0.60).contains(&acc), "{acc}");
    }

    #[test]
    fn unknown_ids_are_reported() {
        let (params, mut exp, store) = noise_session(3);
        exp.trials[0].foil_id = "missing".into();
        assert!(matches!(run_trials(&params, &exp, &store), Err(Error::UnknownId(id)) if id == "missing"));
    }

    #[test]
    fn sweep_evaluates_at_each_point_without_ledgering_evaluation() {
        let (mut params, exp, store) = noise_session(12);
        let plan = TrainPlan {
            batch_size: 5,
            n_exposures: 2,
            shuffle_seed: 3,
            eval_points: vec![0, 2],
        };
        let mut seen = Vec::new();
        let out = exposure_sweep(&mut params, &exp, &store, &plan, AdamHyper::default(), 4, |s, r| {
            seen.push((s.exposures, r.exposures));
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, vec![(0, 0), (2, 2)]);
        assert_eq!(out.results.len(), 2);
        assert_eq!(out.ledger.total(), 24);
        let empty = TrainPlan {
            eval_points: vec![],
            ..plan
        };
        assert!(exposure_sweep(&mut params, &exp, &store, &empty, AdamHyper::default(), 4, |_, _| Ok(())).is_err());
    }

    #[test]
    fn results_csv_round_trip_and_schema() {
        let (params, exp, store) = noise_session(6);
        let rows = run_session(&params, &exp, &store, 11, 0).unwrap().rows();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("results.csv");
        write_results(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("design,set_version,run_seed,exposures,condition,n_trials,n_correct,accuracy,ties\nnoise,A,11,0,noise,6,"));
        assert_eq!(read_results(&path).unwrap(), rows);

        let bad = dir.path().join("bad.csv");
        std::fs::write(&bad, "design,accuracy\nnoise,0.5\n").unwrap();
        assert!(matches!(read_results(&bad), Err(Error::CsvSchema { .. })));
        write_results(&bad, &[]).unwrap();
        assert!(read_results(&bad).unwrap().is_empty());
    }
}
