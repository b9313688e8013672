//! Annular left-ventricle phantom with a transmural fibre helix.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use smsnet_dti::{simulate_signals, DiffusionProtocol};
use smsnet_tensor::Tensor;

use crate::{Result, SimError};

/// Shape and microstructure of one heart. Slice 0 is basal; the outer radius
/// shrinks linearly by `taper` towards the last (apical) slice while the wall
/// thickness stays constant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeartGeometry {
    pub height: usize,
    pub width: usize,
    pub slices: usize,
    /// Annulus centre `(x, y)` in pixels (x along columns).
    pub center: [f64; 2],
    pub outer_radius: f64,
    pub wall: f64,
    pub taper: f64,
    /// Helix angle at the endocardium and epicardium, degrees.
    pub ha_endo: f64,
    pub ha_epi: f64,
    /// Sheetlet angle, degrees, constant over the heart.
    pub e2a: f64,
    /// Diffusivities, descending, mm²/s.
    pub eigenvalues: [f64; 3],
    pub s0: f64,
}

impl HeartGeometry {
    /// Centred heart with mid-range proportions.
    pub fn new(height: usize, width: usize, slices: usize) -> Self {
        let s = height.min(width) as f64;
        HeartGeometry {
            height,
            width,
            slices,
            center: [(width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0],
            outer_radius: 0.37 * s,
            wall: 0.15 * s,
            taper: 0.15,
            ha_endo: 60.0,
            ha_epi: -60.0,
            e2a: 0.0,
            eigenvalues: [1.2e-3, 0.6e-3, 0.4e-3],
            s0: 1.0,
        }
    }

    /// Per-heart variation in position, size, taper and sheetlet angle.
    pub fn random<R: Rng + ?Sized>(height: usize, width: usize, slices: usize, rng: &mut R) -> Self {
        let mut g = Self::new(height, width, slices);
        let s = height.min(width) as f64;
        g.center[0] += rng.random_range(-0.04..=0.04) * s;
        g.center[1] += rng.random_range(-0.04..=0.04) * s;
        g.outer_radius = rng.random_range(0.34..=0.40) * s;
        g.wall = rng.random_range(0.13..=0.17) * s;
        g.taper = rng.random_range(0.10..=0.25);
        g.e2a = rng.random_range(-40.0..=40.0);
        g
    }

    /// `(inner, outer)` radii of slice `z`.
    pub fn radii(&self, z: usize) -> (f64, f64) {
        let t = if self.slices > 1 {
            z as f64 / (self.slices - 1) as f64
        } else {
            0.0
        };
        let outer = self.outer_radius * (1.0 - self.taper * t);
        (outer - self.wall, outer)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SimError::Parameter(m));
        if self.height < 4 || self.width < 4 || self.slices == 0 {
            return bad(format!("{}x{} image with {} slices", self.height, self.width, self.slices));
        }
        if !(0.0..1.0).contains(&self.taper) {
            return bad(format!("taper {} outside [0, 1)", self.taper));
        }
        let (inner, _) = self.radii(self.slices - 1);
        let (_, outer) = self.radii(0);
        if self.wall <= 0.0 || inner < 1.0 {
            return bad(format!("annulus inner radius {inner:.2} must exceed 1 pixel and the wall be positive"));
        }
        let [cx, cy] = self.center;
        let room = cx.min(cy).min(self.width as f64 - 1.0 - cx).min(self.height as f64 - 1.0 - cy);
        if outer > room {
            return bad(format!("outer radius {outer:.2} leaves the {}x{} image", self.height, self.width));
        }
        let [l1, l2, l3] = self.eigenvalues;
        if !(l1 >= l2 && l2 >= l3 && l3 > 0.0) {
            return bad(format!("eigenvalues {:?} must be positive and descending", self.eigenvalues));
        }
        if self.s0 <= 0.0 {
            return bad(format!("s0 {} must be positive", self.s0));
        }
        Ok(())
    }

    /// Prescribed helix angle at fractional wall depth (0 endo, 1 epi).
    pub fn helix_at(&self, depth: f64) -> f64 {
        self.ha_endo + (self.ha_epi - self.ha_endo) * depth
    }
}

#[derive(Clone, Debug)]
pub struct PhantomSlice {
    pub mask: Vec<bool>,
    /// `[xx, yy, zz, xy, xz, yz]` per voxel, zero outside the mask.
    pub tensors: Vec<[f64; 6]>,
    /// Fractional wall depth per voxel, NaN outside the mask.
    pub depth: Vec<f64>,
    /// Complex diffusion-weighted images `[acquisitions, height, width]`.
    pub images: Tensor,
}

#[derive(Clone, Debug)]
pub struct Phantom {
    pub geometry: HeartGeometry,
    pub slices: Vec<PhantomSlice>,
}

/// Diffusion tensor with the primary axis at helix angle `ha` in the
/// circumferential-longitudinal plane and the secondary axis at `e2a` from
/// the radial direction.
fn fibre_tensor(radial: [f64; 3], ha: f64, e2a: f64, l: [f64; 3]) -> [f64; 6] {
    let (ha, e2a) = (ha.to_radians(), e2a.to_radians());
    // circumferential = long x radial
    let c = [-radial[1], radial[0], 0.0];
    let e1 = [0, 1, 2].map(|k| ha.cos() * c[k] + ha.sin() * [0.0, 0.0, 1.0][k]);
    let rx = [
        radial[1] * e1[2] - radial[2] * e1[1],
        radial[2] * e1[0] - radial[0] * e1[2],
        radial[0] * e1[1] - radial[1] * e1[0],
    ];
    let e2 = [0, 1, 2].map(|k| e2a.cos() * radial[k] + e2a.sin() * rx[k]);
    let e3 = [
        e1[1] * e2[2] - e1[2] * e2[1],
        e1[2] * e2[0] - e1[0] * e2[2],
        e1[0] * e2[1] - e1[1] * e2[0],
    ];
    let e = [e1, e2, e3];
    let m = |r: usize, q: usize| (0..3).map(|k| l[k] * e[k][r] * e[k][q]).sum::<f64>();
    [m(0, 0), m(1, 1), m(2, 2), m(0, 1), m(0, 2), m(1, 2)]
}

/// Random smooth phase: a second-order polynomial in normalised coordinates.
fn phase_field<R: Rng + ?Sized>(height: usize, width: usize, rng: &mut R) -> Vec<f64> {
    let c0 = rng.random_range(-PI..PI);
    let lin: [f64; 2] = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
    let quad: [f64; 3] = [0, 1, 2].map(|_| rng.random_range(-0.5..0.5));
    let norm = |i: usize, n: usize| if n > 1 { 2.0 * i as f64 / (n - 1) as f64 - 1.0 } else { 0.0 };
    let mut out = Vec::with_capacity(height * width);
    for r in 0..height {
        let y = norm(r, height);
        for q in 0..width {
            let x = norm(q, width);
            out.push(c0 + lin[0] * x + lin[1] * y + quad[0] * x * x + quad[1] * x * y + quad[2] * y * y);
        }
    }
    out
}

/// Noise-free complex DWIs of every slice of one heart.
pub fn generate_phantom(seed: u64, geometry: &HeartGeometry, protocol: &DiffusionProtocol) -> Result<Phantom> {
    geometry.validate()?;
    protocol.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w) = (geometry.height, geometry.width);
    let n_acq = protocol.len();
    let l = geometry.eigenvalues;
    let mut slices = Vec::with_capacity(geometry.slices);
    for z in 0..geometry.slices {
        let (inner, outer) = geometry.radii(z);
        let mut mask = vec![false; h * w];
        let mut depth = vec![f64::NAN; h * w];
        let mut tensors = vec![[0.0; 6]; h * w];
        for (i, t) in tensors.iter_mut().enumerate() {
            let dx = (i % w) as f64 - geometry.center[0];
            let dy = (i / w) as f64 - geometry.center[1];
            let r = dx.hypot(dy);
            if r < inner || r > outer {
                continue;
            }
            mask[i] = true;
            depth[i] = (r - inner) / (outer - inner);
            *t = fibre_tensor([dx / r, dy / r, 0.0], geometry.helix_at(depth[i]), geometry.e2a, l);
        }
        let signals: Vec<Option<Vec<f64>>> = (0..h * w)
            .map(|i| mask[i].then(|| simulate_signals(&tensors[i], geometry.s0, protocol)))
            .collect();
        let mut re = vec![0.0; n_acq * h * w];
        let mut im = vec![0.0; n_acq * h * w];
        for k in 0..n_acq {
            let phase = phase_field(h, w, &mut rng);
            for (i, s) in signals.iter().enumerate() {
                if let Some(s) = s {
                    re[k * h * w + i] = s[k] * phase[i].cos();
                    im[k * h * w + i] = s[k] * phase[i].sin();
                }
            }
        }
        slices.push(PhantomSlice {
            mask,
            tensors,
            depth,
            images: Tensor::complex([n_acq, h, w], re, im)?,
        });
    }
    Ok(Phantom {
        geometry: geometry.clone(),
        slices,
    })
}
