//! Map export: raw tensor files and 8-bit PNG renderings.

use std::path::Path;

use image::{Rgb, RgbImage};
use smsnet_tensor::{io, Tensor};

use crate::maps::MapSet;
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MapKind {
    Md,
    Fa,
    Ha,
    E2a,
}

impl MapKind {
    pub const ALL: [MapKind; 4] = [MapKind::Md, MapKind::Fa, MapKind::Ha, MapKind::E2a];

    pub fn name(self) -> &'static str {
        match self {
            MapKind::Md => "md",
            MapKind::Fa => "fa",
            MapKind::Ha => "ha",
            MapKind::E2a => "e2a",
        }
    }

    /// Fixed display range.
    pub fn range(self) -> (f64, f64) {
        match self {
            MapKind::Md => (0.0, 3e-3),
            MapKind::Fa => (0.0, 1.0),
            MapKind::Ha | MapKind::E2a => (-90.0, 90.0),
        }
    }

    pub fn values(self, maps: &MapSet) -> &[f64] {
        match self {
            MapKind::Md => &maps.md,
            MapKind::Fa => &maps.fa,
            MapKind::Ha => &maps.ha,
            MapKind::E2a => &maps.e2a,
        }
    }
}

/// Hue wheel, so that -90° and +90° (the same axis) share a colour.
fn cyclic(t: f64) -> [u8; 3] {
    let h = t.rem_euclid(1.0) * 6.0;
    let x = 1.0 - (h % 2.0 - 1.0).abs();
    let (r, g, b) = match h as u32 {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    [r, g, b].map(|c: f64| (c * 255.0).round() as u8)
}

/// Render one map; NaN voxels are black.
pub fn render(kind: MapKind, maps: &MapSet) -> RgbImage {
    let (lo, hi) = kind.range();
    let values = kind.values(maps);
    RgbImage::from_fn(maps.width as u32, maps.height as u32, |x, y| {
        let v = values[y as usize * maps.width + x as usize];
        if !v.is_finite() {
            return Rgb([0, 0, 0]);
        }
        let t = ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
        match kind {
            MapKind::Ha | MapKind::E2a => Rgb(cyclic(t)),
            _ => {
                let g = (t * 255.0).round() as u8;
                Rgb([g, g, g])
            }
        }
    })
}

/// Write `<stem>_<map>.cdti` and `<stem>_<map>.png` for all four maps.
pub fn export_maps(dir: &Path, stem: &str, maps: &MapSet) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(smsnet_tensor::TensorError::from)?;
    for kind in MapKind::ALL {
        let t = Tensor::real([maps.height, maps.width], kind.values(maps).to_vec())?;
        io::save(&dir.join(format!("{stem}_{}.cdti", kind.name())), &t)?;
        render(kind, maps).save(dir.join(format!("{stem}_{}.png", kind.name())))?;
    }
    Ok(())
}
