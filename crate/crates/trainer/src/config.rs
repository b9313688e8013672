//! Training configuration, read from TOML.
//!
//! ```toml
//! model = "2D-All-Mag"      # {2D|3D}-{All|Single}-{Mag|Comp|MagPhs}
//! # base_channels = 28      # optional size overrides
//! # depth = 5
//! # dropout = 0.0
//! epochs = 200
//! lr = 3e-4
//! lr_drop_epoch = 100       # lr / lr_drop_factor after this epoch
//! lr_drop_factor = 10.0
//! batch_size = 16
//! phase_in_loss = false     # MagPhs only: also penalise the phase channels
//! seed = 0
//!
//! [augment]
//! rotate = true             # k * 90 degrees
//! flip = true               # horizontal and vertical
//! ```
//!
//! Every key is optional; missing keys take the defaults above.

use std::path::Path;

use serde::{Deserialize, Serialize};
use smsnet_unet::ModelConfig;

use crate::{Result, TrainError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Augment {
    pub rotate: bool,
    pub flip: bool,
}

impl Default for Augment {
    fn default() -> Self {
        Augment {
            rotate: true,
            flip: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub model: String,
    pub base_channels: Option<usize>,
    pub depth: Option<usize>,
    pub dropout: Option<f64>,
    pub epochs: usize,
    pub lr: f64,
    pub lr_drop_epoch: usize,
    pub lr_drop_factor: f64,
    pub batch_size: usize,
    pub phase_in_loss: bool,
    pub seed: u64,
    pub augment: Augment,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: "2D-All-Mag".into(),
            base_channels: None,
            depth: None,
            dropout: None,
            epochs: 200,
            lr: 3e-4,
            lr_drop_epoch: 100,
            lr_drop_factor: 10.0,
            batch_size: 16,
            phase_in_loss: false,
            seed: 0,
            augment: Augment::default(),
        }
    }
}

impl TrainConfig {
    /// Short schedule for a workstation: 20 epochs, drop after 10.
    pub fn desk() -> Self {
        TrainConfig {
            epochs: 20,
            lr_drop_epoch: 10,
            ..Self::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: TrainConfig = toml::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| TrainError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        let mut m: ModelConfig = self.model.parse()?;
        if let Some(c) = self.base_channels {
            m.base_channels = c;
        }
        if let Some(d) = self.depth {
            m.depth = d;
        }
        if let Some(p) = self.dropout {
            m.dropout = p;
        }
        m.validate()?;
        Ok(m)
    }

    /// Learning rate in (1-based) `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        if epoch > self.lr_drop_epoch {
            self.lr / self.lr_drop_factor
        } else {
            self.lr
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(TrainError::Config(m));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr {} must be positive", self.lr));
        }
        if !(self.lr_drop_factor >= 1.0 && self.lr_drop_factor.is_finite()) {
            return bad(format!("lr_drop_factor {} must be at least 1", self.lr_drop_factor));
        }
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2 for batch normalisation".into());
        }
        self.model_config()?;
        Ok(())
    }
}
