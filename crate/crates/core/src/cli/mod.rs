//! Command implementations behind the `mnb` binary.
//!
//! Every command reads a [`RunConfig`], holds an exclusive lock on its output
//! directory while running, and finishes by writing `manifest.json`, whose
//! `config` table replays the command when passed back as `--config`.

pub mod common;
pub mod config;
pub mod prepare;
pub mod pretrain;
pub mod report;
pub mod run;
pub mod sample;

use std::path::PathBuf;

pub use config::{RunConfig, Settings};

use crate::error::{Error, Result};

pub const VERBS: [&str; 5] = ["prepare", "pretrain", "run", "report", "sample"];

/// Run `verb` and return its output directory.
pub fn dispatch(verb: &str, cfg: &RunConfig) -> Result<PathBuf> {
    match verb {
        "prepare" => prepare::prepare(cfg),
        "pretrain" => pretrain::pretrain(cfg),
        "run" => run::run(cfg),
        "report" => report::report(cfg),
        "sample" => sample::sample(cfg),
        other => Err(Error::InvalidArgument(format!("unknown command {other:?}"))),
    }
}

/// One-line JSON error record printed by the binary on failure.
pub fn error_line(e: &Error) -> String {
    serde_json::json!({ "error": e.kind(), "message": e.to_string() }).to_string()
}

/// One-line JSON success record.
pub fn ok_line(verb: &str, out_dir: &std::path::Path) -> String {
    serde_json::json!({ "ok": verb, "out_dir": out_dir.display().to_string() }).to_string()
}
