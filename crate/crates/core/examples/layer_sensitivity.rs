//! Layer-wise noise sensitivity: after e epochs on noisy labels, freeze
//! layers 1..=l, retrain the rest on clean labels and record test accuracy.
//! Writes the curves as CSV and SVG into the directory given as the first
//! argument (default: a fresh temporary directory).
//!
//!     cargo run --release --example layer_sensitivity -- out/profile

use std::path::PathBuf;

use pes_lab::data::BlobModel;
use pes_lab::model::Architecture;
use pes_lab::noise::{NoiseKind, NoiseSpec};
use pes_lab::numerics::SeededRng;
use pes_lab::profiler::{curves_svg, sensitivity_profile, write_curves_csv, ProbeConfig};

fn main() -> pes_lab::Result<()> {
    let out: PathBuf = match std::env::args().nth(1) {
        Some(p) => p.into(),
        None => tempfile::tempdir()?.keep(),
    };
    std::fs::create_dir_all(&out)?;

    let mut rng = SeededRng::new(21);
    let blobs = BlobModel::new(16, 3, 4.5)?;
    let train = blobs.sample(2000, &mut rng)?;
    let test = blobs.sample(1000, &mut rng)?;
    let noisy = NoiseSpec::new(NoiseKind::SymmetricExcl, 0.5).apply(&train, &mut rng)?;
    let train = train.with_noisy_labels(noisy)?;

    let arch = Architecture::default();
    let mut probe = ProbeConfig::for_architecture(&arch, vec![0, 5, 10, 20, 40], vec![1, 2]);
    probe.clean_retrain_epochs = 15;
    let (_, curves) = sensitivity_profile(&arch, &train, &test, &probe)?;

    for c in &curves {
        let means: Vec<String> = c.means.iter().map(|m| format!("{m:.3}")).collect();
        println!("layer {}: peak epoch {:>2}, drop to end {:.4}  [{}]", c.layer, c.peak_epoch, c.drop_to_end(), means.join(" "));
    }
    write_curves_csv(&curves, std::fs::File::create(out.join("curves.csv"))?)?;
    std::fs::write(out.join("curves.svg"), curves_svg(&curves))?;
    println!("wrote {}", out.display());
    Ok(())
}
