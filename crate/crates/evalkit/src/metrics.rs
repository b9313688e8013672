//! Per-image and per-map error metrics.
//!
//! Image metrics take `[height, width]` tensors; complex images are compared
//! through their magnitudes. Map metrics take flat slices plus a tissue mask
//! and skip voxels where either map is non-finite.

use smsnet_tensor::Tensor;

use crate::{EvalError, Result};

fn magnitudes(op: &str, x: &Tensor, y: &Tensor) -> Result<(Vec<f64>, Vec<f64>)> {
    if x.dims() != y.dims() {
        return Err(EvalError::Shape(format!(
            "{op}: {:?} vs {:?}",
            x.dims(),
            y.dims()
        )));
    }
    let m = |t: &Tensor| {
        if t.is_real() {
            t.re().to_vec()
        } else {
            t.magnitude().re().to_vec()
        }
    };
    Ok((m(x), m(y)))
}

fn check_mask(op: &str, n: usize, mask: Option<&[bool]>) -> Result<()> {
    match mask {
        Some(m) if m.len() != n => Err(EvalError::Shape(format!(
            "{op}: mask of {} voxels for {n} values",
            m.len()
        ))),
        _ => Ok(()),
    }
}

/// Mean of `|x| - |y|` in absolute value over the (masked) elements.
///
/// Real inputs are compared directly, so signed real images keep their sign.
pub fn mae(x: &Tensor, y: &Tensor, mask: Option<&[bool]>) -> Result<f64> {
    let (a, b) = magnitudes("mae", x, y)?;
    check_mask("mae", a.len(), mask)?;
    let (mut sum, mut n) = (0.0, 0usize);
    for i in 0..a.len() {
        if mask.is_none_or(|m| m[i]) {
            sum += (a[i] - b[i]).abs();
            n += 1;
        }
    }
    if n == 0 {
        return Err(EvalError::Undefined("mae"));
    }
    Ok(sum / n as f64)
}

/// `10 log10(MAX^2 / MSE)` with `MAX` the largest target magnitude.
/// Identical images give `+inf`.
pub fn psnr(x: &Tensor, target: &Tensor) -> Result<f64> {
    let (a, b) = magnitudes("psnr", x, target)?;
    if a.is_empty() {
        return Err(EvalError::Undefined("psnr"));
    }
    let mse = a.iter().zip(&b).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / a.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    let max = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(10.0 * (max * max / mse).log10())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsimParams {
    /// Side of the square uniform window.
    pub window: usize,
    /// Dynamic range `L` in `c1 = (0.01 L)^2`, `c2 = (0.03 L)^2`.
    pub data_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        SsimParams {
            window: 7,
            data_range: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ssim {
    pub value: f64,
    /// Window actually used, `(rows, cols)`.
    pub window: (usize, usize),
    /// Set when the image was smaller than the requested window.
    pub shrunk: bool,
}

/// Mean SSIM over every fully contained window (stride 1), with population
/// moments inside each window.
pub fn ssim(x: &Tensor, y: &Tensor, params: &SsimParams) -> Result<Ssim> {
    let (a, b) = magnitudes("ssim", x, y)?;
    let &[h, w] = x.dims() else {
        return Err(EvalError::Shape(format!("ssim needs a 2D image, got {:?}", x.dims())));
    };
    if h == 0 || w == 0 || params.window == 0 {
        return Err(EvalError::Undefined("ssim"));
    }
    let (wh, ww) = (params.window.min(h), params.window.min(w));
    let shrunk = wh < params.window || ww < params.window;
    let c1 = (0.01 * params.data_range).powi(2);
    let c2 = (0.03 * params.data_range).powi(2);
    let taps = (wh * ww) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for r0 in 0..=h - wh {
        for q0 in 0..=w - ww {
            let (mut sa, mut sb) = (0.0, 0.0);
            for r in r0..r0 + wh {
                for q in q0..q0 + ww {
                    sa += a[r * w + q];
                    sb += b[r * w + q];
                }
            }
            let (ma, mb) = (sa / taps, sb / taps);
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for r in r0..r0 + wh {
                for q in q0..q0 + ww {
                    let (da, db) = (a[r * w + q] - ma, b[r * w + q] - mb);
                    va += da * da;
                    vb += db * db;
                    cov += da * db;
                }
            }
            let (va, vb, cov) = (va / taps, vb / taps, cov / taps);
            total += (2.0 * ma * mb + c1) * (2.0 * cov + c2)
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    Ok(Ssim {
        value: total / count as f64,
        window: (wh, ww),
        shrunk,
    })
}

fn map_mean(
    op: &'static str,
    x: &[f64],
    y: &[f64],
    mask: &[bool],
    err: impl Fn(f64, f64) -> f64,
) -> Result<f64> {
    if x.len() != y.len() {
        return Err(EvalError::Shape(format!("{op}: {} vs {} voxels", x.len(), y.len())));
    }
    check_mask(op, x.len(), Some(mask))?;
    let (mut sum, mut n) = (0.0, 0usize);
    for i in 0..x.len() {
        if mask[i] && x[i].is_finite() && y[i].is_finite() {
            sum += err(x[i], y[i]);
            n += 1;
        }
    }
    if n == 0 {
        return Err(EvalError::Undefined(op));
    }
    Ok(sum / n as f64)
}

/// Mean absolute angle error for axial angle maps in degrees: differences of
/// 90° or more wrap to `180 - |d|`.
pub fn maae(x: &[f64], y: &[f64], mask: &[bool]) -> Result<f64> {
    map_mean("maae", x, y, mask, |a, b| {
        // axes are 180°-periodic; the reduction is a no-op for in-range inputs
        let d = (a - b).abs().rem_euclid(180.0);
        if d < 90.0 {
            d
        } else {
            180.0 - d
        }
    })
}

/// Mean absolute error of a scalar map over the mask.
pub fn map_mae(x: &[f64], y: &[f64], mask: &[bool]) -> Result<f64> {
    map_mean("map_mae", x, y, mask, |a, b| (a - b).abs())
}
