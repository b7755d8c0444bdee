//! Freeze, reinitialise and checkpoint a partitioned network. Checkpoints are
//! JSON and restore every parameter bit for bit.
//!
//!     cargo run --example checkpoints

use pes_lab::model::{Architecture, PartitionedNetwork};
use pes_lab::numerics::SeededRng;

fn main() -> pes_lab::Result<()> {
    let mut rng = SeededRng::new(31);
    let mut net = Architecture::default().build(16, 3, &mut rng)?;
    println!("{} layers in {} parts", net.num_layers(), net.num_parts());
    for p in 1..=net.num_parts() {
        let r = net.part_layers(p);
        println!("  part {p}: layers {}..={}", r.start + 1, r.end);
    }

    let before = net.part_checksums();
    net.set_frozen(1);
    let touched = net.reinit_parts(2, &mut rng)?;
    let after = net.part_checksums();
    println!("re-initialised layers {}..={}; frozen parts {:?}", touched.start + 1, touched.end, net.frozen_parts());
    for (p, (b, a)) in before.iter().zip(&after).enumerate() {
        println!("  part {}: {}", p + 1, if a == b { "unchanged" } else { "new weights" });
    }

    let path = tempfile::NamedTempFile::new()?.into_temp_path();
    net.save(&path)?;
    let restored = PartitionedNetwork::load(&path)?;
    assert_eq!(restored.part_checksums(), net.part_checksums());
    assert_eq!(restored.frozen_parts(), net.frozen_parts());
    println!("checkpoint of {} bytes restored exactly", std::fs::metadata(&path)?.len());
    Ok(())
}
