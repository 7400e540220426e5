//! JSON checkpoints: config, flat parameters and a format version.
//!
//! Floats are written in shortest round-trip form, so a save/load cycle is
//! bit-exact.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FieldConfig, FieldModel};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: FieldConfig,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn from_model(model: &FieldModel) -> Self {
        Self {
            format_version: CHECKPOINT_FORMAT_VERSION,
            config: model.config().clone(),
            params: model.params().to_vec(),
        }
    }

    pub fn into_model(self) -> Result<FieldModel> {
        if self.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint format_version {}",
                self.format_version
            )));
        }
        FieldModel::from_params(self.config, self.params)
    }
}

pub fn save_checkpoint(model: &FieldModel, path: &Path) -> Result<()> {
    let json = serde_json::to_string(&Checkpoint::from_model(model))?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<FieldModel> {
    let text = std::fs::read_to_string(path)?;
    let ckpt: Checkpoint = serde_json::from_str(&text)?;
    ckpt.into_model()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{init_field, FieldMode};

    #[test]
    fn round_trip_is_bit_exact() {
        let mut cfg = FieldConfig::mlp(2, 17);
        cfg.mode = FieldMode::Direct;
        cfg.hidden_widths = vec![16, 8];
        let model = init_field(cfg).unwrap();
        let dir = std::env::temp_dir().join(format!("distmarch-ckpt-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.json");
        save_checkpoint(&model, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        let a: Vec<u64> = model.params().iter().map(|p| p.to_bits()).collect();
        let b: Vec<u64> = back.params().iter().map(|p| p.to_bits()).collect();
        assert_eq!(a, b);
        assert_eq!(model.config(), back.config());
        std::fs::remove_dir_all(dir).ok();
    }

    #[test]
    fn wrong_version_rejected() {
        let model = init_field(FieldConfig::mlp(1, 0)).unwrap();
        let mut ckpt = Checkpoint::from_model(&model);
        ckpt.format_version = 99;
        assert!(matches!(ckpt.into_model(), Err(Error::Config(_))));
    }
}
