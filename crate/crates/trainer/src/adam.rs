//! Adam with bias correction. Real and imaginary parts of a complex
//! parameter are updated as independent real parameters.

use smsnet_tensor::{Gradients, ParamId, Tensor};

use crate::{Result, TrainError};

#[derive(Clone, Debug)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    /// First and second moments per parameter, `re` then `im` planes.
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

fn planes(t: &Tensor) -> Vec<f64> {
    let mut p = t.re().to_vec();
    if let Some(im) = t.im() {
        p.extend_from_slice(im);
    }
    p
}

impl Adam {
    pub fn new(params: &[Tensor]) -> Self {
        Self::with_betas(params, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(params: &[Tensor], beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; planes(p).len()]).collect();
        Adam {
            beta1,
            beta2,
            eps,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn moments(&self, param: usize) -> (&[f64], &[f64]) {
        (&self.m[param], &self.v[param])
    }

    /// One update of every parameter; a parameter without a gradient is
    /// treated as having a zero gradient. Non-finite gradients abort the
    /// step before anything is modified.
    pub fn step(&mut self, params: &mut [Tensor], grads: &Gradients, lr: f64) -> Result<()> {
        if params.len() != self.m.len() {
            return Err(TrainError::Config("optimizer state does not match the parameters".into()));
        }
        for (id, g) in grads.iter() {
            if !g.all_finite() {
                return Err(TrainError::Numerical(format!("non-finite gradient for parameter {}", id.0)));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (i, p) in params.iter_mut().enumerate() {
            let n = p.numel();
            let g: Vec<f64> = match grads.get(ParamId(i)) {
                Some(g) => {
                    let mut v = g.d_re.re().to_vec();
                    if !p.is_real() {
                        v.extend_from_slice(g.d_im.re());
                    }
                    v
                }
                None => vec![0.0; self.m[i].len()],
            };
            let mut values = planes(p);
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for k in 0..values.len() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                let mh = m[k] / c1;
                let vh = v[k] / c2;
                values[k] -= lr * mh / (vh.sqrt() + self.eps);
            }
            let im = (!p.is_real()).then(|| values.split_off(n));
            *p = Tensor::from_parts(p.shape().clone(), values, im)?;
        }
        Ok(())
    }
}
