//! Aggregate hand-written per-run results into means with s.e.m. and render
//! the figure with a human benchmark overlay.

use mnb::cli::{dispatch, RunConfig};
use mnb::experiments::{write_results, Condition, Design, ResultRow};

fn main() -> mnb::Result<()> {
    let dir = std::env::temp_dir().join(format!("mnb-report-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| mnb::Error::io(&dir, e))?;
    let mut rows = Vec::new();
    for (run_seed, accs) in [[0.62, 0.80, 0.86], [0.58, 0.84, 0.90], [0.66, 0.82, 0.88]].iter().enumerate() {
        for (&exposures, &accuracy) in [1u64, 5, 10].iter().zip(accs) {
            rows.push(ResultRow {
                design: Design::Brady,
                set_version: "A".into(),
                run_seed: run_seed as u64,
                exposures,
                condition: Condition::Novel,
                n_trials: 100,
                n_correct: (accuracy * 100.0_f64).round() as usize,
                accuracy,
                ties: 0,
            });
        }
    }
    let results = dir.join("results.csv");
    write_results(&results, &rows)?;
    let mut cfg = RunConfig::new();
    cfg.set("results", results.display().to_string())?;
    cfg.set("overlay.novel", "0.925")?;
    cfg.set("out_dir", dir.join("report").display().to_string())?;
    let out = dispatch("report", &cfg)?;
    let text = std::fs::read_to_string(out.join("aggregate.csv")).map_err(|e| mnb::Error::io(&out, e))?;
    print!("{text}");
    println!("figure: {}", out.join("report.svg").display());
    Ok(())
}
