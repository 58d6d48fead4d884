//! Mean and standard error over repeated runs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::design::{Condition, Design};
use super::session::ResultRow;
use crate::error::{Error, Result};

/// Mean and standard error of the mean (sample standard deviation with an
/// `n - 1` denominator, divided by `sqrt(n)`). A single value has s.e.m. 0.
pub fn mean_sem(xs: &[f64]) -> Result<(f64, f64)> {
    if xs.is_empty() {
        return Err(Error::EmptyGroup("no values".into()));
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return Ok((mean, 0.0));
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub design: Design,
    pub condition: Condition,
    pub exposures: u64,
    pub n_runs: usize,
    pub mean_accuracy: f64,
    pub sem: f64,
    pub single_run: bool,
}

pub const AGGREGATE_HEADER: [&str; 7] = ["design", "condition", "exposures", "n_runs", "mean_accuracy", "sem", "single_run"];

/// Group rows by (design, condition, exposures) and summarize each group's
/// accuracies across runs.
pub fn aggregate_runs(rows: &[ResultRow]) -> Result<Vec<Aggregate>> {
    if rows.is_empty() {
        return Err(Error::EmptyGroup("no result rows".into()));
    }
    let mut groups: BTreeMap<(Design, Condition, u64), Vec<f64>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.design, r.condition, r.exposures)).or_default().push(r.accuracy);
    }
    groups
        .into_iter()
        .map(|((design, condition, exposures), accs)| {
            let (mean_accuracy, sem) = mean_sem(&accs)?;
            Ok(Aggregate {
                design,
                condition,
                exposures,
                n_runs: accs.len(),
                mean_accuracy,
                sem,
                single_run: accs.len() == 1,
            })
        })
        .collect()
}

pub fn write_aggregates(path: &std::path::Path, aggs: &[Aggregate]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if aggs.is_empty() {
        w.write_record(AGGREGATE_HEADER)?;
    }
    for a in aggs {
        w.serialize(a)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(cond: Condition, exposures: u64, run_seed: u64, accuracy: f64) -> ResultRow {
        ResultRow {
            design: Design::Brady,
            set_version: "A".into(),
            run_seed,
            exposures,
            condition: cond,
            n_trials: 100,
            n_correct: (accuracy * 100.0).round() as usize,
            accuracy,
            ties: 0,
        }
    }

    #[test]
    fn two_points() {
        let (m, s) = mean_sem(&[0.8, 0.9]).unwrap();
        assert!((m - 0.85).abs() < 1e-12);
        assert!((s - 0.05).abs() < 1e-12);
    }

    #[test]
    fn four_runs() {
        let (m, s) = mean_sem(&[0.80, 0.85, 0.82, 0.87]).unwrap();
        assert!((m - 0.835).abs() < 1e-12);
        // sum of squared deviations is 0.0029
        assert!((s - (0.0029f64 / 3.0 / 4.0).sqrt()).abs() < 1e-12);
        assert!((s - 0.0155).abs() < 1e-4);
    }

    #[test]
    fn single_run_is_flagged() {
        let aggs = aggregate_runs(&[row(Condition::Novel, 1, 0, 0.7)]).unwrap();
        assert_eq!(aggs.len(), 1);
        assert_eq!((aggs[0].mean_accuracy, aggs[0].sem, aggs[0].single_run), (0.7, 0.0, true));
        assert!(matches!(aggregate_runs(&[]), Err(Error::EmptyGroup(_))));
        assert!(mean_sem(&[]).is_err());
    }

    #[test]
    fn groups_by_condition_and_exposure() {
        let rows = vec![
            row(Condition::State, 1, 0, 0.6),
            row(Condition::Novel, 1, 0, 0.8),
            row(Condition::Novel, 1, 1, 0.9),
            row(Condition::Novel, 2, 0, 1.0),
        ];
        let aggs = aggregate_runs(&rows).unwrap();
        let keys: Vec<_> = aggs.iter().map(|a| (a.condition, a.exposures, a.n_runs)).collect();
        assert_eq!(
            keys,
            vec![(Condition::Novel, 1, 2), (Condition::Novel, 2, 1), (Condition::State, 1, 1)]
        );
    }

    /// Welford's streaming variance as an independent formulation.
    fn welford(xs: &[f64]) -> (f64, f64) {
        let (mut mean, mut m2) = (0.0, 0.0);
        for (i, &x) in xs.iter().enumerate() {
            let d = x - mean;
            mean += d / (i + 1) as f64;
            m2 += d * (x - mean);
        }
        let n = xs.len() as f64;
        let sem = if xs.len() > 1 { (m2 / (n - 1.0) / n).sqrt() } else { 0.0 };
        (mean, sem)
    }

    proptest! {
        #[test]
        fn matches_welford(xs in prop::collection::vec(0.0f64..1.0, 1..40)) {
            let (m, s) = mean_sem(&xs).unwrap();
            let (wm, ws) = welford(&xs);
            prop_assert!((m - wm).abs() < 1e-12);
            prop_assert!((s - ws).abs() < 1e-12);
        }
    }
}
