//! Progressive early stopping against plain early stopping on blobs with 40%
//! symmetric noise. Both runs start from the same data and weights.
//!
//!     cargo run --release --example pes_vs_early_stopping

use pes_lab::data::BlobModel;
use pes_lab::model::Architecture;
use pes_lab::noise::{NoiseKind, NoiseSpec};
use pes_lab::numerics::SeededRng;
use pes_lab::pes::{train_pes, PesSchedule};

fn main() -> pes_lab::Result<()> {
    let mut rng = SeededRng::new(1);
    let blobs = BlobModel::new(16, 3, 4.5)?;
    let train = blobs.sample(3000, &mut rng)?;
    let test = blobs.sample(1000, &mut rng)?;
    let noisy = NoiseSpec::new(NoiseKind::SymmetricExcl, 0.4).apply(&train, &mut rng)?;
    let (train, val) = train.with_noisy_labels(noisy)?.split(0.1, &mut rng)?;

    // Layers 1-2 form the first part, everything above it the second.
    let arch = Architecture::new(vec![64; 4], vec![2]);
    let net = arch.build(16, 3, &mut SeededRng::new(2))?;

    let early = PesSchedule::with_defaults(vec![30], 128, 3)?;
    let (es, _) = train_pes(net.with_partition(&[])?, &train, Some(&val), &early)?;

    let schedule = PesSchedule::with_defaults(vec![30, 7], 128, 3)?;
    let (pes, reports) = train_pes(net, &train, Some(&val), &schedule)?;
    for r in &reports {
        let last = r.train_loss.last().copied().unwrap_or(f64::NAN);
        println!("stage {}: {} epochs, final train loss {last:.4}, reinitialised {}", r.stage, r.epochs_run, r.reinitialized);
    }

    let acc = |n: &pes_lab::model::PartitionedNetwork| n.accuracy(&test.features, &test.clean_labels);
    println!("early stopping test accuracy {:.4}", acc(&es)?);
    println!("progressive    test accuracy {:.4}", acc(&pes)?);
    Ok(())
}
