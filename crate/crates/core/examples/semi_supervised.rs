//! Treat the non-confident examples as unlabelled and continue with
//! MixMatch-style training, printing the per-epoch history.
//!
//!     cargo run --release --example semi_supervised

use pes_lab::confident::{extract_confident, Augmenter};
use pes_lab::data::BlobModel;
use pes_lab::model::Architecture;
use pes_lab::noise::{NoiseKind, NoiseSpec};
use pes_lab::numerics::SeededRng;
use pes_lab::pes::{train_pes, PesSchedule};
use pes_lab::semi::{train_semi, SemiConfig};

fn main() -> pes_lab::Result<()> {
    let mut rng = SeededRng::new(11);
    let blobs = BlobModel::new(16, 3, 4.5)?;
    let train = blobs.sample(3000, &mut rng)?;
    let test = blobs.sample(1000, &mut rng)?;
    let noisy = NoiseSpec::new(NoiseKind::SymmetricExcl, 0.5).apply(&train, &mut rng)?;
    let train = train.with_noisy_labels(noisy)?;

    let net = Architecture::new(vec![64; 4], vec![2]).build(16, 3, &mut SeededRng::new(12))?;
    let (mut net, _) = train_pes(net, &train, None, &PesSchedule::with_defaults(vec![30, 7], 128, 13)?)?;
    println!("after PES: test accuracy {:.4}", net.accuracy(&test.features, &test.clean_labels)?);

    let augmenter = Augmenter::jitter_for(&train, 0.1);
    let split = extract_confident(&net, &train, &augmenter, &mut rng)?;
    let config = SemiConfig { total_epochs: 12, ramp_epochs: 8, ..SemiConfig::default() };
    let history = train_semi(&mut net, &split, &train, &config, &augmenter, Some(&test), &mut rng)?;

    println!("{:>5} {:>9} {:>8} {:>8} {:>8} {:>6} {:>8}", "epoch", "labelled", "L_x", "L_u", "prior", "λ_u", "test");
    for e in &history {
        println!(
            "{:>5} {:>9} {:>8.4} {:>8.4} {:>8.4} {:>6.2} {:>8.4}",
            e.epoch,
            e.labeled,
            e.labeled_loss,
            e.unlabeled_loss,
            e.prior_penalty,
            e.lambda_u,
            e.test_accuracy.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
