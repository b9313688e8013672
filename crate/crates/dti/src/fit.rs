use nalgebra::{DMatrix, DVector};

use crate::eigen::to_matrix;
use crate::protocol::DiffusionProtocol;
use crate::{DtiError, Result};

/// Per-voxel diffusion tensors `[xx, yy, zz, xy, xz, yz]` (mm²/s) of one
/// `height × width` slice.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorField {
    pub height: usize,
    pub width: usize,
    pub tensors: Vec<[f64; 6]>,
    pub s0: Vec<f64>,
    pub valid: Vec<bool>,
}

impl TensorField {
    /// Field from known tensors; every voxel valid.
    pub fn from_tensors(height: usize, width: usize, tensors: Vec<[f64; 6]>) -> Result<Self> {
        if tensors.len() != height * width {
            return Err(DtiError::Shape(format!(
                "{} tensors for a {height}x{width} slice",
                tensors.len()
            )));
        }
        let n = tensors.len();
        Ok(TensorField {
            height,
            width,
            tensors,
            s0: vec![1.0; n],
            valid: vec![true; n],
        })
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }
}

/// `S0 exp(-b gᵀ D g)` for every acquisition of `protocol`.
pub fn simulate_signals(d: &[f64; 6], s0: f64, protocol: &DiffusionProtocol) -> Vec<f64> {
    let m = to_matrix(d);
    protocol
        .bvalues
        .iter()
        .zip(&protocol.directions)
        .map(|(&b, g)| {
            let q: f64 = (0..3)
                .flat_map(|r| (0..3).map(move |c| (r, c)))
                .map(|(r, c)| g[r] * m[r][c] * g[c])
                .sum();
            s0 * (-b * q).exp()
        })
        .collect()
}

/// Log-linear least-squares fit of `ln S = ln S0 - b gᵀ D g`.
///
/// `images[k]` is the magnitude image of acquisition `k` (row-major,
/// `height × width`). Voxels with a non-positive or non-finite signal are
/// flagged invalid.
pub fn fit_tensors(
    images: &[&[f64]],
    height: usize,
    width: usize,
    protocol: &DiffusionProtocol,
) -> Result<TensorField> {
    protocol.validate()?;
    if images.len() != protocol.len() {
        return Err(DtiError::Shape(format!(
            "{} images for a {}-acquisition protocol",
            images.len(),
            protocol.len()
        )));
    }
    let n = height * width;
    if let Some(bad) = images.iter().find(|im| im.len() != n) {
        return Err(DtiError::Shape(format!(
            "image of {} voxels, expected {height}x{width}",
            bad.len()
        )));
    }
    let design = protocol.design();
    let pinv: DMatrix<f64> = design
        .pseudo_inverse(1e-12)
        .map_err(|e| DtiError::Protocol(e.to_string()))?;

    let mut tensors = vec![[0.0; 6]; n];
    let mut s0 = vec![0.0; n];
    let mut valid = vec![false; n];
    let mut y = DVector::zeros(protocol.len());
    for v in 0..n {
        if images.iter().any(|im| !(im[v] > 0.0 && im[v].is_finite())) {
            continue;
        }
        for (k, im) in images.iter().enumerate() {
            y[k] = im[v].ln();
        }
        let x = &pinv * &y;
        tensors[v] = [x[1], x[2], x[3], x[4], x[5], x[6]];
        s0[v] = x[0].exp();
        valid[v] = tensors[v].iter().all(|c| c.is_finite());
    }
    Ok(TensorField {
        height,
        width,
        tensors,
        s0,
        valid,
    })
}
