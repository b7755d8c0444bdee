//! Sweep the second-stage budget T2 through the experiment harness. Every
//! value gets its own run logs; sweep.csv and sweep.svg summarise them.
//!
//!     cargo run --release --example stage_sweep -- out/sweep

use std::path::PathBuf;

use pes_lab::harness::{sweep, DatasetSpec, ExperimentConfig};
use pes_lab::model::Architecture;
use pes_lab::noise::{NoiseKind, NoiseSpec};
use serde_json::json;

fn main() -> pes_lab::Result<()> {
    let out: PathBuf = match std::env::args().nth(1) {
        Some(p) => p.into(),
        None => tempfile::tempdir()?.keep(),
    };
    let mut cfg = ExperimentConfig::new(NoiseSpec::new(NoiseKind::SymmetricExcl, 0.4), &out);
    cfg.name = "t2".into();
    cfg.dataset = DatasetSpec::Blobs { n: 2000, n_test: 1000, d: 16, k: 3, separation: 4.5 };
    cfg.architecture = Architecture::new(vec![64; 4], vec![2]);
    cfg.pes.stage_epochs = vec![30, 7];
    cfg.seeds = vec![1, 2, 3];

    let values: Vec<_> = [0, 3, 7, 15, 30].iter().map(|v| json!(v)).collect();
    for row in sweep(&cfg, "pes.stage_epochs.1", &values, true)? {
        println!(
            "T2 = {:>2}: {:.4} ± {:.4}{}",
            row.value,
            row.mean.unwrap_or(f64::NAN),
            row.std.unwrap_or(f64::NAN),
            if row.is_best { "  best" } else { "" }
        );
    }
    println!("results in {}", out.display());
    Ok(())
}
