//! Window pooling over the trailing spatial dims of `[batch, channel, ..]`.

use smsnet_tensor::{Result, Shape, Tensor, TensorError, Var};

/// Non-overlapping-by-default pooling window.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoolSpec {
    pub kernel: Vec<usize>,
    pub stride: Vec<usize>,
}

impl PoolSpec {
    /// Window equal to stride.
    pub fn new(kernel: &[usize]) -> Self {
        PoolSpec {
            kernel: kernel.to_vec(),
            stride: kernel.to_vec(),
        }
    }
}

struct Windows {
    out_shape: Shape,
    /// Flat input indices of every window, `taps` per output element.
    index: Vec<usize>,
    taps: usize,
}

fn windows(op: &'static str, dims: &[usize], spec: &PoolSpec) -> Result<Windows> {
    let nsp = spec.kernel.len();
    if dims.len() != nsp + 2 || spec.stride.len() != nsp || nsp == 0 {
        return Err(TensorError::InvalidShape {
            op,
            reason: format!("input {:?} with a {}-d window", dims, nsp),
        });
    }
    let spatial = &dims[2..];
    let mut out_sp = Vec::with_capacity(nsp);
    for ((&n, &k), &s) in spatial.iter().zip(&spec.kernel).zip(&spec.stride) {
        if k == 0 || s == 0 || n < k {
            return Err(TensorError::InvalidShape {
                op,
                reason: format!("window {k} stride {s} on extent {n}"),
            });
        }
        out_sp.push((n - k) / s + 1);
    }
    let in_strides = Shape::from(spatial).strides();
    let in_px: usize = spatial.iter().product();
    let out_px: usize = out_sp.iter().product();
    let out_strides = Shape::from(out_sp.as_slice()).strides();
    let taps: usize = spec.kernel.iter().product();
    let tap_strides = Shape::from(spec.kernel.as_slice()).strides();
    let planes = dims[0] * dims[1];

    let mut index = Vec::with_capacity(planes * out_px * taps);
    for p in 0..planes {
        for o in 0..out_px {
            for t in 0..taps {
                let mut flat = p * in_px;
                for d in 0..nsp {
                    let od = (o / out_strides[d]) % out_sp[d];
                    let td = (t / tap_strides[d]) % spec.kernel[d];
                    flat += (od * spec.stride[d] + td) * in_strides[d];
                }
                index.push(flat);
            }
        }
    }
    let mut out = vec![dims[0], dims[1]];
    out.extend(out_sp);
    Ok(Windows {
        out_shape: Shape::new(out),
        index,
        taps,
    })
}

/// Gather the selected input element per window; gradients scatter back.
fn select<'g>(x: Var<'g>, kind: &'static str, shape: Shape, picks: Vec<usize>) -> Result<Var<'g>> {
    let v = x.value();
    let re = picks.iter().map(|&i| v.re()[i]).collect();
    let im = v.im().map(|im| picks.iter().map(|&i| im[i]).collect());
    let out = Tensor::from_parts(shape, re, im)?;
    let in_shape = v.shape().clone();
    let complex = !v.is_real();
    Ok(x.graph().record(
        kind,
        out,
        &[x],
        Box::new(move |g, _| {
            let n = in_shape.numel();
            let mut dr = vec![0.0; n];
            let mut di = complex.then(|| vec![0.0; n]);
            let gi = g.im();
            for (o, &i) in picks.iter().enumerate() {
                dr[i] += g.re()[o];
                if let (Some(di), Some(gi)) = (di.as_mut(), gi) {
                    di[i] += gi[o];
                }
            }
            Ok(vec![Some(Tensor::from_parts(in_shape.clone(), dr, di)?)])
        }),
    ))
}

/// Max of a real-flagged input per window (first maximum wins).
pub fn max_pool<'g>(x: Var<'g>, spec: &PoolSpec) -> Result<Var<'g>> {
    let v = x.value();
    if !v.is_real() {
        return Err(TensorError::Contract(
            "max_pool needs real input; use magnitude_max_pool".into(),
        ));
    }
    let w = windows("max_pool", v.dims(), spec)?;
    let re = v.re();
    let picks = w
        .index
        .chunks(w.taps)
        .map(|win| {
            win.iter()
                .copied()
                .fold(win[0], |best, i| if re[i] > re[best] { i } else { best })
        })
        .collect();
    select(x, "max_pool", w.out_shape, picks)
}

/// Element of largest modulus per window, phase kept (first maximum wins).
pub fn magnitude_max_pool<'g>(x: Var<'g>, spec: &PoolSpec) -> Result<Var<'g>> {
    let v = x.value();
    let w = windows("magnitude_max_pool", v.dims(), spec)?;
    let re = v.re();
    let im = v.im_or_zeros();
    let mag2 = |i: usize| re[i] * re[i] + im[i] * im[i];
    let picks = w
        .index
        .chunks(w.taps)
        .map(|win| {
            win.iter()
                .copied()
                .fold(win[0], |best, i| if mag2(i) > mag2(best) { i } else { best })
        })
        .collect();
    select(x, "magnitude_max_pool", w.out_shape, picks)
}

/// Window mean; linear, so complex inputs average per plane.
pub fn avg_pool<'g>(x: Var<'g>, spec: &PoolSpec) -> Result<Var<'g>> {
    let v = x.value();
    let w = windows("avg_pool", v.dims(), spec)?;
    let scale = 1.0 / w.taps as f64;
    let mean = |plane: &[f64]| -> Vec<f64> {
        w.index
            .chunks(w.taps)
            .map(|win| win.iter().map(|&i| plane[i]).sum::<f64>() * scale)
            .collect()
    };
    let out = Tensor::from_parts(w.out_shape.clone(), mean(v.re()), v.im().map(mean))?;
    let in_shape = v.shape().clone();
    let complex = !v.is_real();
    let (index, taps) = (w.index, w.taps);
    Ok(x.graph().record(
        "avg_pool",
        out,
        &[x],
        Box::new(move |g, _| {
            let n = in_shape.numel();
            let spread = |plane: &[f64]| {
                let mut d = vec![0.0; n];
                for (o, win) in index.chunks(taps).enumerate() {
                    for &i in win {
                        d[i] += plane[o] * scale;
                    }
                }
                d
            };
            let dr = spread(g.re());
            let di = complex.then(|| spread(&g.im_or_zeros()));
            Ok(vec![Some(Tensor::from_parts(in_shape.clone(), dr, di)?)])
        }),
    ))
}
