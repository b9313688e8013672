//! Central finite-difference checks of analytic gradients.

use crate::{Graph, ParamId, Result, Tensor, Var};

/// One scalar degree of freedom: element `index` of parameter `param`, real or
/// imaginary part.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Coord {
    pub param: usize,
    pub index: usize,
    pub imag: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct GradCheck {
    pub step: f64,
    pub rel_tol: f64,
    /// Denominator floor so that vanishing gradients are compared absolutely.
    pub abs_floor: f64,
    /// Additional floor as a fraction of the largest analytic gradient
    /// component: central differences carry roundoff of order
    /// `eps |loss| / step`, which swamps components far below the gradient's
    /// overall scale.
    pub scale_floor: f64,
}

impl Default for GradCheck {
    fn default() -> Self {
        GradCheck {
            step: 1e-6,
            rel_tol: 1e-5,
            abs_floor: 1e-8,
            scale_floor: 1e-3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Mismatch {
    pub coord: Coord,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub failures: Vec<Mismatch>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Every degree of freedom of `params` (imaginary parts only for complex ones).
pub fn all_coords(params: &[Tensor]) -> Vec<Coord> {
    let mut out = Vec::new();
    for (p, t) in params.iter().enumerate() {
        for index in 0..t.numel() {
            out.push(Coord {
                param: p,
                index,
                imag: false,
            });
            if !t.is_real() {
                out.push(Coord {
                    param: p,
                    index,
                    imag: true,
                });
            }
        }
    }
    out
}

fn perturbed(t: &Tensor, index: usize, imag: bool, delta: f64) -> Tensor {
    let (shape, mut re, mut im) = t.clone().into_parts();
    if imag {
        im.as_mut().expect("imaginary coordinate of a real tensor")[index] += delta;
    } else {
        re[index] += delta;
    }
    Tensor::from_parts(shape, re, im).expect("same shape")
}

impl GradCheck {
    /// Compare the gradient of `loss_fn` from [`Graph::backward`] against
    /// central differences at each coordinate in `coords`.
    ///
    /// `loss_fn` receives one bound parameter per entry of `params`
    /// (registered as `ParamId(i)`) and must return a real scalar.
    pub fn run<F>(&self, params: &[Tensor], coords: &[Coord], loss_fn: F) -> Result<GradCheckReport>
    where
        F: for<'g> Fn(&'g Graph, &[Var<'g>]) -> Result<Var<'g>>,
    {
        let eval = |values: &[Tensor]| -> Result<f64> {
            let g = Graph::new();
            let vars: Vec<Var<'_>> = values
                .iter()
                .enumerate()
                .map(|(i, t)| g.param(ParamId(i), t.clone()))
                .collect();
            Ok(loss_fn(&g, &vars)?.value().item().re)
        };

        let grads = {
            let g = Graph::new();
            let vars: Vec<Var<'_>> = params
                .iter()
                .enumerate()
                .map(|(i, t)| g.param(ParamId(i), t.clone()))
                .collect();
            let loss = loss_fn(&g, &vars)?;
            g.backward(loss)?
        };

        let scale = grads
            .iter()
            .map(|(_, p)| p.d_re.max_abs().max(p.d_im.max_abs()))
            .fold(0.0, f64::max);
        let floor = self.abs_floor.max(self.scale_floor * scale);
        let mut report = GradCheckReport::default();
        for &coord in coords {
            let analytic = match grads.get(ParamId(coord.param)) {
                Some(pair) => {
                    let t = if coord.imag { &pair.d_im } else { &pair.d_re };
                    t.re()[coord.index]
                }
                None => 0.0,
            };
            let mut values = params.to_vec();
            let base = &params[coord.param];
            values[coord.param] = perturbed(base, coord.index, coord.imag, self.step);
            let plus = eval(&values)?;
            values[coord.param] = perturbed(base, coord.index, coord.imag, -self.step);
            let minus = eval(&values)?;
            let numeric = (plus - minus) / (2.0 * self.step);
            let denom = analytic.abs().max(numeric.abs()).max(floor);
            let rel_error = (analytic - numeric).abs() / denom;
            report.checked += 1;
            report.max_rel_error = report.max_rel_error.max(rel_error);
            if !(rel_error < self.rel_tol) {
                report.failures.push(Mismatch {
                    coord,
                    analytic,
                    numeric,
                    rel_error,
                });
            }
        }
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(rng: &mut ChaCha8Rng, dims: &[usize], complex: bool) -> Tensor {
        let n: usize = dims.iter().product();
        let re = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let im = complex.then(|| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect());
        Tensor::from_parts(dims.to_vec().into(), re, im).unwrap()
    }

    #[test]
    fn elementwise_ops_pass_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let check = GradCheck::default();
        for _ in 0..10 {
            let a = random_tensor(&mut rng, &[2, 3], true);
            let b = random_tensor(&mut rng, &[1, 3], true);
            let r = random_tensor(&mut rng, &[2, 1], false);
            let params = vec![a, b, r];
            let coords = all_coords(&params);
            let report = check
                .run(&params, &coords, |_, v| {
                    let prod = v[0].mul(v[1])?;
                    let shifted = prod.add(v[2])?.sub(v[1])?;
                    let c = shifted.conj().scale_complex(Complex64::new(0.3, -1.2)).scale(0.7);
                    Ok(c.magnitude().sum().add(c.abs2().mean())?)
                })
                .unwrap();
            assert!(report.passed(), "{:?}", report.failures);
        }
    }

    #[test]
    fn structural_ops_pass_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random_tensor(&mut rng, &[2, 2, 3], true);
        let b = random_tensor(&mut rng, &[2, 1, 3], false);
        let params = vec![a, b];
        let coords = all_coords(&params);
        let report = GradCheck::default()
            .run(&params, &coords, |_, v| {
                let c = Var::concat(&[v[0], v[1]], 1)?;
                let p = c.pad(&[(0, 0), (1, 2), (0, 1)])?;
                let n = p.narrow(1, 1, 2)?.reshape([2, 8])?;
                Ok(n.abs2().sum())
            })
            .unwrap();
        assert!(report.passed(), "{:?}", report.failures);
    }

    #[test]
    fn detects_a_slightly_wrong_backward() {
        let params = vec![Tensor::real([3], vec![0.5, -1.0, 2.0]).unwrap()];
        let coords = all_coords(&params);
        let report = GradCheck::default()
            .run(&params, &coords, |g, v| {
                let x = v[0];
                // d/dx x^2 reported as 2.0001 x
                let y = g.record(
                    "bad_square",
                    x.value().mul(&x.value())?,
                    &[x],
                    Box::new(move |gr, _| Ok(vec![Some(gr.mul(&x_value_scaled())?)])),
                );
                Ok(y.sum())
            });
        fn x_value_scaled() -> Tensor {
            Tensor::real([3], vec![0.5, -1.0, 2.0]).unwrap().scale(2.0001)
        }
        assert!(!report.unwrap().passed());
    }
}
