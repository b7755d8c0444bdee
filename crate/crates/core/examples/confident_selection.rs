//! Select confident examples with an augmentation-averaged prediction, score
//! the selection against the clean labels, then fine-tune on it with class
//! weights.
//!
//!     cargo run --release --example confident_selection

use pes_lab::confident::{class_weights, extract_confident, label_metrics, train_weighted, Augmenter, ClassWeighting};
use pes_lab::data::BlobModel;
use pes_lab::model::{Architecture, OptimizerConfig};
use pes_lab::noise::{NoiseKind, NoiseSpec};
use pes_lab::numerics::SeededRng;
use pes_lab::pes::{train_pes, PesSchedule};

fn main() -> pes_lab::Result<()> {
    let mut rng = SeededRng::new(5);
    let blobs = BlobModel::new(16, 3, 4.5)?;
    let train = blobs.sample(3000, &mut rng)?;
    let test = blobs.sample(1000, &mut rng)?;
    let noisy = NoiseSpec::new(NoiseKind::SymmetricExcl, 0.5).apply(&train, &mut rng)?;
    let train = train.with_noisy_labels(noisy)?;

    let net = Architecture::new(vec![64; 4], vec![2]).build(16, 3, &mut SeededRng::new(6))?;
    let (mut net, _) = train_pes(net, &train, None, &PesSchedule::with_defaults(vec![30, 7], 128, 7)?)?;

    let augmenter = Augmenter::jitter_for(&train, 0.1);
    let split = extract_confident(&net, &train, &augmenter, &mut rng)?;
    let m = label_metrics(&split, &train.noisy_labels, &train.clean_labels);
    println!(
        "{} of {} examples kept; precision {:.4}, recall {:.4}",
        split.labeled.len(),
        train.len(),
        m.precision.unwrap_or(f64::NAN),
        m.recall.unwrap_or(f64::NAN)
    );
    println!("confident examples per noisy class: {:?}", split.class_counts);

    let before = net.accuracy(&test.features, &test.clean_labels)?;
    let weights = class_weights(&split, ClassWeighting::Proportional)?;
    train_weighted(&mut net, &train, &split, &weights, 20, OptimizerConfig::adam(1e-3), 128, 8)?;
    let after = net.accuracy(&test.features, &test.clean_labels)?;
    println!("test accuracy {before:.4} -> {after:.4} after weighted fine-tuning");
    Ok(())
}
