use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::AdamMoments;
use crate::error::{Error, Result};
use crate::scene::GaussianField;

/// Field, optimizer moments and iteration counter. Floats are written in
/// shortest round-trip decimal form, so reloading is bit-exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub iteration: usize,
    pub field: GaussianField,
    pub adam: AdamMoments,
    pub config_hash: String,
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serialization cannot fail")
    }

    pub fn from_json(src: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(src).map_err(|e| Error::from_json(e, src))?;
        let n = ck.field.len();
        if ck.adam.m.len() != n || ck.adam.v.len() != n {
            return Err(Error::Parse {
                offset: src.len(),
                message: format!("moment arrays must have {n} entries"),
            });
        }
        Ok(ck)
    }
}

/// Writes through a sibling temporary file so a failed write never leaves a
/// truncated checkpoint behind.
pub fn save_checkpoint(ck: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, ck.to_json())?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let src = std::fs::read_to_string(path)?;
    Checkpoint::from_json(&src)
}
