//! Load an IDX image/label pair (the MNIST file format) with a stratified
//! subset. Pass real files as arguments, or let the example write a small
//! synthetic pair.
//!
//!     cargo run --example idx_images -- train-images-idx3-ubyte train-labels-idx1-ubyte

use pes_lab::data::{encode_idx_images, encode_idx_labels, load_idx, IdxImages};
use pes_lab::numerics::SeededRng;

fn main() -> pes_lab::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let dir = tempfile::tempdir()?;
    let (images, labels) = if let [img, lab] = &args[..] {
        (img.into(), lab.into())
    } else {
        let n = 2000;
        let mut rng = SeededRng::new(41);
        let labels: Vec<u8> = (0..n).map(|_| rng.below(10) as u8).collect();
        let pixels = labels.iter().flat_map(|&l| (0..784).map(move |p| if p % 10 == l as usize { 255 } else { 0 })).collect();
        let (img, lab) = (dir.path().join("images"), dir.path().join("labels"));
        std::fs::write(&img, encode_idx_images(&IdxImages { count: n, rows: 28, cols: 28, pixels }))?;
        std::fs::write(&lab, encode_idx_labels(&labels))?;
        (img, lab)
    };

    let full = load_idx(&images, &labels, None, &mut SeededRng::new(1))?;
    let subset = load_idx(&images, &labels, Some(1000), &mut SeededRng::new(1))?;
    println!("{} images of dimension {}, {} classes", full.len(), full.dim(), full.num_classes);
    println!("full counts   {:?}", full.class_counts(&full.clean_labels));
    println!("subset counts {:?}", subset.class_counts(&subset.clean_labels));
    Ok(())
}
