use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Result, UnetError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dim {
    #[serde(rename = "2D")]
    D2,
    #[serde(rename = "3D")]
    D3,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DataMode {
    Mag,
    MagPhs,
    Comp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SliceMode {
    All,
    Single,
}

impl fmt::Display for Dim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dim::D2 => "2D",
            Dim::D3 => "3D",
        })
    }
}

impl fmt::Display for DataMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DataMode::Mag => "Mag",
            DataMode::MagPhs => "MagPhs",
            DataMode::Comp => "Comp",
        })
    }
}

impl fmt::Display for SliceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SliceMode::All => "All",
            SliceMode::Single => "Single",
        })
    }
}

/// One of the twelve model variants plus its size knobs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub dim: Dim,
    pub data_mode: DataMode,
    pub slice_mode: SliceMode,
    pub base_channels: usize,
    /// Number of resolution levels.
    pub depth: usize,
    pub sms_factor: usize,
    /// Dropout probability after the bottleneck unit; 0 disables it.
    #[serde(default)]
    pub dropout: f64,
}

impl ModelConfig {
    /// Variant with the default base channels (2D real 28, 3D real 16,
    /// 2D complex 20, 3D complex 11), depth 5 and SMS factor 2.
    pub fn new(dim: Dim, data_mode: DataMode, slice_mode: SliceMode) -> Self {
        ModelConfig {
            dim,
            data_mode,
            slice_mode,
            base_channels: default_base_channels(dim, data_mode),
            depth: 5,
            sms_factor: 2,
            dropout: 0.0,
        }
    }

    /// All twelve variants in reporting order.
    pub fn all() -> Vec<ModelConfig> {
        let mut out = Vec::with_capacity(12);
        for slice in [SliceMode::All, SliceMode::Single] {
            for dim in [Dim::D2, Dim::D3] {
                for data in [DataMode::Mag, DataMode::Comp, DataMode::MagPhs] {
                    out.push(ModelConfig::new(dim, data, slice));
                }
            }
        }
        out
    }

    /// `{2D|3D}-{All|Single}-{Mag|Comp|MagPhs}`.
    pub fn name(&self) -> String {
        format!("{}-{}-{}", self.dim, self.slice_mode, self.data_mode)
    }

    pub fn is_complex(&self) -> bool {
        self.data_mode == DataMode::Comp
    }

    /// Images per sample: every SMS slice for `All`, one for `Single`.
    pub fn slices_per_sample(&self) -> usize {
        match self.slice_mode {
            SliceMode::All => self.sms_factor,
            SliceMode::Single => 1,
        }
    }

    /// Channels of one image under this data mode.
    fn channels_per_slice(&self) -> usize {
        match self.data_mode {
            DataMode::Mag | DataMode::Comp => 1,
            DataMode::MagPhs => 2,
        }
    }

    /// Network input channels (complex channels for `Comp`).
    pub fn input_channels(&self) -> usize {
        match self.dim {
            Dim::D2 => self.slices_per_sample() * self.channels_per_slice(),
            Dim::D3 => self.channels_per_slice(),
        }
    }

    /// Extent of the slice axis for 3D models.
    pub fn slice_planes(&self) -> Option<usize> {
        (self.dim == Dim::D3).then(|| self.slices_per_sample())
    }

    /// Network input shape for a batch of `h x w` images.
    pub fn input_shape(&self, batch: usize, h: usize, w: usize) -> Vec<usize> {
        let mut d = vec![batch, self.input_channels()];
        d.extend(self.slice_planes());
        d.extend([h, w]);
        d
    }

    /// Channels at encoder level `k`.
    pub fn level_channels(&self, k: usize) -> usize {
        self.base_channels << k
    }

    /// In-plane extents must be multiples of this; inputs are padded.
    pub fn size_multiple(&self) -> usize {
        1 << (self.depth - 1)
    }

    /// Check invariants; returns non-fatal warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        if self.base_channels == 0 {
            return Err(UnetError::Config("base_channels must be at least 1".into()));
        }
        if self.depth < 2 {
            return Err(UnetError::Config("depth must be at least 2".into()));
        }
        if self.depth > 16 {
            return Err(UnetError::Config(format!("depth {} is unreasonably large", self.depth)));
        }
        if self.sms_factor == 0 {
            return Err(UnetError::Config("sms_factor must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(UnetError::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        let mut warnings = Vec::new();
        if let Some(planes) = self.slice_planes() {
            if planes < 2 {
                warnings.push(format!(
                    "{}: slice axis has {planes} plane; 3D convolutions degenerate to 2D",
                    self.name()
                ));
            }
        }
        Ok(warnings)
    }
}

pub fn default_base_channels(dim: Dim, data_mode: DataMode) -> usize {
    match (dim, data_mode) {
        (Dim::D2, DataMode::Comp) => 20,
        (Dim::D2, _) => 28,
        (Dim::D3, DataMode::Comp) => 11,
        (Dim::D3, _) => 16,
    }
}

impl FromStr for ModelConfig {
    type Err = UnetError;

    /// Parse a variant name such as `2D-All-Comp` (case-insensitive; `Abs`
    /// is accepted for `Mag`).
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<String> = s.trim().split('-').map(|p| p.to_ascii_lowercase()).collect();
        let bad = || UnetError::Config(format!("unknown model name {s:?}; expected e.g. 2D-All-Mag"));
        let [d, sl, m] = parts.as_slice() else {
            return Err(bad());
        };
        let dim = match d.as_str() {
            "2d" => Dim::D2,
            "3d" => Dim::D3,
            _ => return Err(bad()),
        };
        let slice = match sl.as_str() {
            "all" => SliceMode::All,
            "single" => SliceMode::Single,
            _ => return Err(bad()),
        };
        let data = match m.as_str() {
            "mag" | "abs" => DataMode::Mag,
            "magphs" => DataMode::MagPhs,
            "comp" => DataMode::Comp,
            _ => return Err(bad()),
        };
        Ok(ModelConfig::new(dim, data, slice))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        let all = ModelConfig::all();
        assert_eq!(all.len(), 12);
        assert_eq!(all[0].name(), "2D-All-Mag");
        assert_eq!(all[1].name(), "2D-All-Comp");
        assert_eq!(all[11].name(), "3D-Single-MagPhs");
        for c in &all {
            assert_eq!(&c.name().parse::<ModelConfig>().unwrap(), c);
        }
        assert_eq!("2d-all-abs".parse::<ModelConfig>().unwrap().data_mode, DataMode::Mag);
        assert!("4D-All-Mag".parse::<ModelConfig>().is_err());
    }

    #[test]
    fn channel_layouts() {
        let c = |s: &str| s.parse::<ModelConfig>().unwrap();
        assert_eq!(c("2D-All-Mag").input_channels(), 2);
        assert_eq!(c("2D-All-MagPhs").input_channels(), 4);
        assert_eq!(c("2D-All-Comp").input_channels(), 2);
        assert_eq!(c("2D-Single-MagPhs").input_channels(), 2);
        assert_eq!(c("3D-All-Mag").input_shape(3, 8, 8), vec![3, 1, 2, 8, 8]);
        assert_eq!(c("3D-All-MagPhs").input_channels(), 2);
        assert_eq!(c("3D-All-Comp").base_channels, 11);
        assert_eq!(c("3D-Single-Comp").slice_planes(), Some(1));
    }

    #[test]
    fn validation() {
        let mut c: ModelConfig = "3D-Single-Mag".parse().unwrap();
        assert_eq!(c.validate().unwrap().len(), 1);
        assert!("3D-All-Mag".parse::<ModelConfig>().unwrap().validate().unwrap().is_empty());
        c.depth = 1;
        assert!(c.validate().is_err());
        c.depth = 5;
        c.base_channels = 0;
        assert!(c.validate().is_err());
    }
}
