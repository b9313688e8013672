//! Linear interslice leakage between simultaneously excited slices.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use smsnet_tensor::Tensor;

use crate::{Result, SimError};

/// Leakage coefficient: constant, or one value per in-plane pixel
/// (broadcast over leading axes such as the acquisition index).
#[derive(Clone, Debug, PartialEq)]
pub enum Alpha {
    Scalar(f64),
    Field(Vec<f64>),
}

impl Alpha {
    fn at(&self, px: usize) -> f64 {
        match self {
            Alpha::Scalar(a) => *a,
            Alpha::Field(f) => f[px],
        }
    }

    fn max_abs(&self) -> f64 {
        match self {
            Alpha::Scalar(a) => a.abs(),
            Alpha::Field(f) => f.iter().fold(0.0f64, |m, v| m.max(v.abs())),
        }
    }

    /// The same scalar for every ordered pair of `n` slices.
    pub fn uniform(n: usize, a: f64) -> Vec<Vec<Alpha>> {
        vec![vec![Alpha::Scalar(a); n]; n]
    }
}

#[derive(Clone, Debug)]
pub struct SmsPair {
    pub corrupted: Vec<Tensor>,
    pub clean: Vec<Tensor>,
    pub sigma: f64,
}

/// `corrupted_i = clean_i + sum_{j != i} alpha[i][j] clean_j + n_i`, with
/// `n_i` complex Gaussian noise of standard deviation `sigma` in each of the
/// real and imaginary parts. Slices share one shape of rank >= 2; fields cover
/// the trailing two axes. The diagonal of `alpha` is ignored.
pub fn apply_sms_leakage<R: Rng + ?Sized>(
    clean: &[Tensor],
    alpha: &[Vec<Alpha>],
    sigma: f64,
    rng: &mut R,
) -> Result<SmsPair> {
    let n = clean.len();
    if n == 0 {
        return Err(SimError::Parameter("empty slice group".into()));
    }
    let dims = clean[0].dims().to_vec();
    if dims.len() < 2 || clean.iter().any(|c| c.dims() != dims.as_slice()) {
        return Err(SimError::Parameter("slices of a group must share one shape of rank >= 2".into()));
    }
    if alpha.len() != n || alpha.iter().any(|row| row.len() != n) {
        return Err(SimError::Parameter(format!("alpha must be {n}x{n}")));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(SimError::Parameter(format!("noise sigma {sigma}")));
    }
    let plane = dims[dims.len() - 2] * dims[dims.len() - 1];
    for (i, row) in alpha.iter().enumerate() {
        for (j, a) in row.iter().enumerate() {
            if i == j {
                continue;
            }
            if let Alpha::Field(f) = a {
                if f.len() != plane {
                    return Err(SimError::Parameter(format!(
                        "alpha field of {} values for {plane}-pixel slices",
                        f.len()
                    )));
                }
            }
            let m = a.max_abs();
            if !(m < 1.0) {
                return Err(SimError::Parameter(format!(
                    "leakage |alpha| = {m} must stay below 1"
                )));
            }
        }
    }
    let numel = clean[0].numel();
    let parts: Vec<(&[f64], Vec<f64>)> = clean.iter().map(|c| (c.re(), c.im_or_zeros())).collect();
    let mut corrupted = Vec::with_capacity(n);
    for i in 0..n {
        let mut re = parts[i].0.to_vec();
        let mut im = parts[i].1.clone();
        for (j, (jr, ji)) in parts.iter().enumerate() {
            if i == j {
                continue;
            }
            let a = &alpha[i][j];
            for e in 0..numel {
                let k = a.at(e % plane);
                re[e] += k * jr[e];
                im[e] += k * ji[e];
            }
        }
        if sigma > 0.0 {
            for e in 0..numel {
                re[e] += sigma * rng.sample::<f64, _>(StandardNormal);
                im[e] += sigma * rng.sample::<f64, _>(StandardNormal);
            }
        }
        corrupted.push(Tensor::complex(dims.clone(), re, im)?);
    }
    Ok(SmsPair {
        corrupted,
        clean: clean.to_vec(),
        sigma,
    })
}

/// Low-frequency random field spanning exactly `[lo, hi]`: a sum of three
/// plane waves of at most one cycle across the image, rescaled.
pub fn smooth_field<R: Rng + ?Sized>(height: usize, width: usize, lo: f64, hi: f64, rng: &mut R) -> Vec<f64> {
    let waves: Vec<[f64; 4]> = (0..3)
        .map(|_| {
            [
                rng.random_range(0.3..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(0.0..2.0 * PI),
            ]
        })
        .collect();
    let mut f: Vec<f64> = (0..height * width)
        .map(|i| {
            let y = (i / width) as f64 / height as f64;
            let x = (i % width) as f64 / width as f64;
            waves
                .iter()
                .map(|[a, fx, fy, ph]| a * (2.0 * PI * (fx * x + fy * y) + ph).cos())
                .sum()
        })
        .collect();
    let (min, max) = f.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    let span = max - min;
    for v in &mut f {
        let t = if span > 0.0 { (*v - min) / span } else { 0.5 };
        *v = lo + (hi - lo) * t;
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn scalar_mix_of_constant_slices() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = Tensor::full([2, 2], 1.0);
        let b = Tensor::full([2, 2], 2.0);
        let p = apply_sms_leakage(&[a, b], &Alpha::uniform(2, 0.3), 0.0, &mut rng).unwrap();
        assert!(p.corrupted[0].re().iter().all(|v| (v - 1.6).abs() < 1e-15));
        assert!(p.corrupted[1].re().iter().all(|v| (v - 2.3).abs() < 1e-15));
    }

    #[test]
    fn strong_leakage_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = vec![Tensor::zeros([2, 2]); 2];
        assert!(apply_sms_leakage(&s, &Alpha::uniform(2, 1.0), 0.0, &mut rng).is_err());
        assert!(apply_sms_leakage(&s, &Alpha::uniform(2, -1.5), 0.0, &mut rng).is_err());
        // the diagonal is not a leakage term
        let mut a = Alpha::uniform(2, 0.1);
        a[0][0] = Alpha::Scalar(5.0);
        assert!(apply_sms_leakage(&s, &a, 0.0, &mut rng).is_ok());
    }

    #[test]
    fn field_spans_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = smooth_field(16, 20, 0.05, 0.35, &mut rng);
        let min = f.iter().cloned().fold(f64::MAX, f64::min);
        let max = f.iter().cloned().fold(f64::MIN, f64::max);
        assert!((min - 0.05).abs() < 1e-12 && (max - 0.35).abs() < 1e-12);
    }
}
