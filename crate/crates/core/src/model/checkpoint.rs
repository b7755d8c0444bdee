use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{DenseLayer, PartitionedNetwork};
use crate::error::{bail, Result};

const FORMAT: &str = "pes-lab/network";
const VERSION: u32 = 1;

/// On-disk network document. Floats are written in shortest round-trip form,
/// so save/load reproduces every parameter bit for bit.
#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    part_boundaries: Vec<usize>,
    frozen: Vec<bool>,
    layers: Vec<DenseLayer>,
}

impl PartitionedNetwork {
    pub fn to_json(&self) -> Result<String> {
        let doc = Checkpoint {
            format: FORMAT.into(),
            version: VERSION,
            part_boundaries: self.part_boundaries().to_vec(),
            frozen: self.frozen_parts().to_vec(),
            layers: self.layers().to_vec(),
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Checkpoint = serde_json::from_str(text)?;
        if doc.format != FORMAT || doc.version != VERSION {
            bail!(Config, "unsupported checkpoint {}/v{}", doc.format, doc.version);
        }
        let mut net = PartitionedNetwork::from_layers(doc.layers, &doc.part_boundaries)?;
        net.set_frozen_flags(&doc.frozen)?;
        Ok(net)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
