//! Run every training mode on the same seeds from one JSON config, then
//! summarise the results directory.
//!
//!     cargo run --release --example experiment_report -- out/modes

use std::path::PathBuf;

use pes_lab::harness::{render_markdown, report, run_experiment, ExperimentConfig, Mode};

const CONFIG: &str = r#"{
  "version": 1,
  "name": "modes",
  "dataset": {"kind": "blobs", "n": 1500, "n_test": 1000, "d": 16, "k": 3, "separation": 4.5},
  "noise": {"kind": "pairflip", "rate": 0.3},
  "architecture": {"hidden": [64, 64, 64, 64], "part_boundaries": [2]},
  "pes": {"stage_epochs": [30, 7]},
  "semi": {"total_epochs": 10},
  "seeds": [1, 2, 3],
  "output_dir": "unused"
}"#;

fn main() -> pes_lab::Result<()> {
    let out: PathBuf = match std::env::args().nth(1) {
        Some(p) => p.into(),
        None => tempfile::tempdir()?.keep(),
    };
    let base = ExperimentConfig::from_json(CONFIG)?;
    for mode in [Mode::BaselineEs, Mode::Pes, Mode::PesConfident, Mode::PesSemi] {
        let cfg = ExperimentConfig { mode, output_dir: out.join(mode.as_str()), ..base.clone() };
        let results = run_experiment(&cfg, true)?;
        let secs: f64 = results.iter().map(|r| r.wall_clock_seconds).sum();
        println!("{:<14} {} seeds in {secs:.1}s", mode.as_str(), results.len());
    }
    let summary = report(&out)?;
    println!("\n{}", render_markdown(&summary.conditions));
    println!("summary.md and summary.csv written to {}", out.display());
    Ok(())
}
