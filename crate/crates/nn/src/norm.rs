//! Batch normalisation over every axis except the channel axis.
//!
//! For complex activations the variance is `E|z - mu|^2`, so the
//! normalised value `(z - mu) / sqrt(V + eps)` has unit mean squared modulus.
//! The affine part `gamma * zhat + beta` is complex whenever `gamma` or `beta`
//! is complex-flagged.

use smsnet_tensor::{Result, Shape, Tensor, TensorError, Var};

pub const DEFAULT_EPS: f64 = 1e-5;
pub const DEFAULT_MOMENTUM: f64 = 0.1;

/// Per-channel batch mean (complex for complex input) and biased variance.
#[derive(Clone, Debug)]
pub struct BatchStats {
    pub mean: Tensor,
    pub var: Vec<f64>,
}

/// Running estimates used in evaluation mode.
#[derive(Clone, Debug)]
pub struct RunningStats {
    pub mean: Tensor,
    pub var: Tensor,
}

impl RunningStats {
    pub fn new(channels: usize, complex: bool) -> Self {
        RunningStats {
            mean: if complex {
                Tensor::zeros_complex([channels])
            } else {
                Tensor::zeros([channels])
            },
            var: Tensor::full([channels], 1.0),
        }
    }

    /// `running = (1 - momentum) running + momentum batch`.
    pub fn update(&mut self, batch: &BatchStats, momentum: f64) -> Result<()> {
        let keep = 1.0 - momentum;
        let bm = if self.mean.is_real() {
            batch.mean.real_part()
        } else {
            batch.mean.to_complex()
        };
        self.mean = self.mean.scale(keep).add(&bm.scale(momentum))?;
        let bv = Tensor::real(self.var.shape().clone(), batch.var.clone())?;
        self.var = self.var.scale(keep).add(&bv.scale(momentum))?;
        Ok(())
    }
}

pub enum Mode<'a> {
    Train,
    Eval(&'a RunningStats),
}

struct Layout {
    batch: usize,
    channels: usize,
    px: usize,
}

impl Layout {
    fn count(&self) -> usize {
        self.batch * self.px
    }

    fn channel_iter(&self, c: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.batch).flat_map(move |b| {
            let base = (b * self.channels + c) * self.px;
            base..base + self.px
        })
    }
}

fn layout(x: &Tensor, gamma: &Tensor, beta: &Tensor) -> Result<Layout> {
    let dims = x.dims();
    if dims.len() < 2 {
        return Err(TensorError::InvalidShape {
            op: "batch_norm",
            reason: format!("input {} has no channel axis", x.shape()),
        });
    }
    let channels = dims[1];
    for p in [gamma, beta] {
        if p.dims() != [channels] {
            return Err(TensorError::ShapeMismatch {
                op: "batch_norm",
                lhs: p.shape().clone(),
                rhs: Shape::from([channels]),
            });
        }
    }
    Ok(Layout {
        batch: dims[0],
        channels,
        px: dims[2..].iter().product(),
    })
}

/// Normalise `x` (`[batch, channel, ..]`) and apply the affine transform.
///
/// In training mode the batch statistics are returned so the caller can
/// update its running estimates.
pub fn batch_norm<'g>(
    x: Var<'g>,
    gamma: Var<'g>,
    beta: Var<'g>,
    mode: Mode<'_>,
    eps: f64,
) -> Result<(Var<'g>, Option<BatchStats>)> {
    let v = x.value();
    let gv = gamma.value();
    let bv = beta.value();
    let lay = layout(&v, &gv, &bv)?;
    if matches!(mode, Mode::Train) && lay.count() < 2 {
        return Err(TensorError::Contract(
            "batch_norm training needs more than one value per channel".into(),
        ));
    }
    let n = v.numel();
    let re = v.re();
    let im = v.im_or_zeros();
    let complex_in = !v.is_real();

    let mut mean_re = vec![0.0; lay.channels];
    let mut mean_im = vec![0.0; lay.channels];
    let mut var = vec![0.0; lay.channels];
    let mut inv_std = vec![0.0; lay.channels];
    match &mode {
        Mode::Train => {
            let cnt = lay.count() as f64;
            for c in 0..lay.channels {
                let (mut sr, mut si) = (0.0, 0.0);
                for i in lay.channel_iter(c) {
                    sr += re[i];
                    si += im[i];
                }
                let (mr, mi) = (sr / cnt, si / cnt);
                let mut s2 = 0.0;
                for i in lay.channel_iter(c) {
                    s2 += (re[i] - mr).powi(2) + (im[i] - mi).powi(2);
                }
                mean_re[c] = mr;
                mean_im[c] = mi;
                var[c] = s2 / cnt;
            }
        }
        Mode::Eval(rs) => {
            if rs.mean.dims() != [lay.channels] || rs.var.dims() != [lay.channels] {
                return Err(TensorError::ShapeMismatch {
                    op: "batch_norm",
                    lhs: rs.mean.shape().clone(),
                    rhs: Shape::from([lay.channels]),
                });
            }
            mean_re.copy_from_slice(rs.mean.re());
            mean_im = rs.mean.im_or_zeros();
            var.copy_from_slice(rs.var.re());
        }
    }
    for c in 0..lay.channels {
        inv_std[c] = 1.0 / (var[c] + eps).sqrt();
    }

    let mut zr = vec![0.0; n];
    let mut zi = vec![0.0; n];
    for c in 0..lay.channels {
        for i in lay.channel_iter(c) {
            zr[i] = (re[i] - mean_re[c]) * inv_std[c];
            zi[i] = (im[i] - mean_im[c]) * inv_std[c];
        }
    }
    let complex_out = complex_in || !gv.is_real() || !bv.is_real();
    let (gr, gi) = (gv.re().to_vec(), gv.im_or_zeros());
    let (br, bi) = (bv.re(), bv.im_or_zeros());
    let mut yr = vec![0.0; n];
    let mut yi = vec![0.0; n];
    for c in 0..lay.channels {
        for i in lay.channel_iter(c) {
            yr[i] = gr[c] * zr[i] - gi[c] * zi[i] + br[c];
            yi[i] = gr[c] * zi[i] + gi[c] * zr[i] + bi[c];
        }
    }
    let out = Tensor::from_parts(v.shape().clone(), yr, complex_out.then_some(yi))?;

    let stats = matches!(mode, Mode::Train).then(|| BatchStats {
        mean: if complex_in {
            Tensor::complex([lay.channels], mean_re.clone(), mean_im.clone()).expect("channel shape")
        } else {
            Tensor::real([lay.channels], mean_re.clone()).expect("channel shape")
        },
        var: var.clone(),
    });

    let training = matches!(mode, Mode::Train);
    let x_shape = v.shape().clone();
    let p_shape = gv.shape().clone();
    let var_node = x.graph().record(
        "batch_norm",
        out,
        &[x, gamma, beta],
        Box::new(move |g, needs| {
            let hr_in = g.re();
            let hi_in = g.im_or_zeros();
            let mut dgr = vec![0.0; lay.channels];
            let mut dgi = vec![0.0; lay.channels];
            let mut dbr = vec![0.0; lay.channels];
            let mut dbi = vec![0.0; lay.channels];
            let mut dxr = vec![0.0; n];
            let mut dxi = vec![0.0; n];
            for c in 0..lay.channels {
                let cnt = lay.count() as f64;
                // H = conj(gamma) G is the adjoint of zhat
                let (mut mh_r, mut mh_i, mut dot) = (0.0, 0.0, 0.0);
                for i in lay.channel_iter(c) {
                    let (a, b) = (hr_in[i], hi_in[i]);
                    dbr[c] += a;
                    dbi[c] += b;
                    // G conj(zhat)
                    dgr[c] += a * zr[i] + b * zi[i];
                    dgi[c] += b * zr[i] - a * zi[i];
                    let hr = gr[c] * a + gi[c] * b;
                    let hi = gr[c] * b - gi[c] * a;
                    mh_r += hr;
                    mh_i += hi;
                    dot += hr * zr[i] + hi * zi[i];
                }
                mh_r /= cnt;
                mh_i /= cnt;
                dot /= cnt;
                let s = inv_std[c];
                for i in lay.channel_iter(c) {
                    let (a, b) = (hr_in[i], hi_in[i]);
                    let hr = gr[c] * a + gi[c] * b;
                    let hi = gr[c] * b - gi[c] * a;
                    if training {
                        dxr[i] = s * (hr - mh_r - zr[i] * dot);
                        dxi[i] = s * (hi - mh_i - zi[i] * dot);
                    } else {
                        dxr[i] = s * hr;
                        dxi[i] = s * hi;
                    }
                }
            }
            Ok(vec![
                needs[0]
                    .then(|| Tensor::from_parts(x_shape.clone(), dxr, Some(dxi)))
                    .transpose()?,
                needs[1]
                    .then(|| Tensor::from_parts(p_shape.clone(), dgr, Some(dgi)))
                    .transpose()?,
                needs[2]
                    .then(|| Tensor::from_parts(p_shape.clone(), dbr, Some(dbi)))
                    .transpose()?,
            ])
        }),
    );
    Ok((var_node, stats))
}
