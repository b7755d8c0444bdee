//! Corrupt a clean blob dataset with each noise family and compare the
//! requested rate with the realised flip fraction.
//!
//!     cargo run --example noise_generators

use pes_lab::data::make_blobs;
use pes_lab::noise::{flip_fraction, symmetric_matrix, NoiseKind, NoiseSpec};
use pes_lab::numerics::SeededRng;

fn main() -> pes_lab::Result<()> {
    let mut rng = SeededRng::new(7);
    let data = make_blobs(20_000, 8, 5, 3.0, &mut rng)?;

    let t = symmetric_matrix(5, 0.4, false)?;
    println!("symmetric (exclusive) transition matrix, rate 0.4:");
    for i in 0..5 {
        let row: Vec<String> = t.row(i).iter().map(|p| format!("{p:.3}")).collect();
        println!("  [{}]", row.join(" "));
    }

    let specs = [
        NoiseSpec::new(NoiseKind::SymmetricIncl, 0.5),
        NoiseSpec::new(NoiseKind::SymmetricExcl, 0.5),
        NoiseSpec::new(NoiseKind::Pairflip, 0.45),
        NoiseSpec::new(NoiseKind::Instance, 0.4),
    ];
    println!("\n{:<16} {:>6} {:>9}", "kind", "rate", "flipped");
    for spec in specs {
        let noisy = spec.apply(&data, &mut rng)?;
        // The inclusive family redraws the true class with probability rate/k.
        println!("{:<16} {:>6.2} {:>9.4}", format!("{:?}", spec.kind), spec.rate, flip_fraction(&data.clean_labels, &noisy));
    }
    Ok(())
}
