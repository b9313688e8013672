use nalgebra::DMatrix;

use crate::{DtiError, Result};

/// b-values (s/mm²) and unit gradient directions, one per acquisition.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionProtocol {
    pub bvalues: Vec<f64>,
    pub directions: Vec<[f64; 3]>,
}

/// b-values at or below this count as unweighted.
pub const B0_THRESHOLD: f64 = 1.0;

impl DiffusionProtocol {
    pub fn new(bvalues: Vec<f64>, directions: Vec<[f64; 3]>) -> Result<Self> {
        let p = DiffusionProtocol { bvalues, directions };
        p.validate()?;
        Ok(p)
    }

    /// One b=0 image followed by `n` near-uniform directions on the
    /// hemisphere at `b`.
    pub fn hemisphere(n: usize, b: f64) -> Result<Self> {
        let mut bvalues = vec![0.0];
        let mut directions = vec![[0.0, 0.0, 1.0]];
        bvalues.extend(std::iter::repeat_n(b, n));
        directions.extend(fibonacci_hemisphere(n));
        Self::new(bvalues, directions)
    }

    pub fn len(&self) -> usize {
        self.bvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bvalues.is_empty()
    }

    /// Rows `[1, -b gx², -b gy², -b gz², -2b gx gy, -2b gx gz, -2b gy gz]` of
    /// the log-linear model.
    pub(crate) fn design(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.len(), 7, |k, j| {
            let b = self.bvalues[k];
            let [x, y, z] = self.directions[k];
            match j {
                0 => 1.0,
                1 => -b * x * x,
                2 => -b * y * y,
                3 => -b * z * z,
                4 => -2.0 * b * x * y,
                5 => -2.0 * b * x * z,
                _ => -2.0 * b * y * z,
            }
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.bvalues.len() != self.directions.len() {
            return Err(DtiError::Protocol(format!(
                "{} b-values for {} directions",
                self.bvalues.len(),
                self.directions.len()
            )));
        }
        if let Some(b) = self.bvalues.iter().find(|b| !b.is_finite() || **b < 0.0) {
            return Err(DtiError::Protocol(format!("invalid b-value {b}")));
        }
        if !self.bvalues.iter().any(|&b| b <= B0_THRESHOLD) {
            return Err(DtiError::Protocol("no b≈0 acquisition".into()));
        }
        for d in &self.directions {
            let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            if (n - 1.0).abs() > 1e-9 {
                return Err(DtiError::Protocol(format!("direction {d:?} has norm {n}")));
            }
        }
        let sv = self.design().singular_values();
        let max = sv.max();
        if self.len() < 7 || sv.min() <= max * 1e-10 {
            return Err(DtiError::Protocol(
                "design matrix is rank deficient; need a b≈0 image and at least 6 non-collinear directions".into(),
            ));
        }
        Ok(())
    }
}

/// `n` unit vectors spread over the upper hemisphere (golden-angle spiral).
pub fn fibonacci_hemisphere(n: usize) -> Vec<[f64; 3]> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            [r * phi.cos(), r * phi.sin(), z]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hemisphere_protocol_is_valid() {
        let p = DiffusionProtocol::hemisphere(11, 1000.0).unwrap();
        assert_eq!(p.len(), 12);
        assert!(p.directions.iter().all(|d| d[2] > 0.0));
    }

    #[test]
    fn collinear_directions_are_rejected() {
        let d = [1.0, 0.0, 0.0];
        let err = DiffusionProtocol::new(vec![0.0; 1].into_iter().chain([1000.0; 7]).collect(), vec![d; 8]);
        assert!(matches!(err, Err(DtiError::Protocol(_))));
    }

    #[test]
    fn missing_b0_or_bad_norm_is_rejected() {
        let dirs = fibonacci_hemisphere(7);
        assert!(DiffusionProtocol::new(vec![1000.0; 7], dirs.clone()).is_err());
        let mut bad = dirs;
        bad[0] = [1.0, 1.0, 0.0];
        let mut b = vec![0.0];
        b.extend([1000.0; 6]);
        assert!(DiffusionProtocol::new(b, bad).is_err());
    }
}
