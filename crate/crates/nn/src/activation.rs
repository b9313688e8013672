//! Pointwise nonlinearities.

use smsnet_tensor::{Result, Tensor, TensorError, Var};

/// Apply `f` to each real plane independently; `df` is its derivative.
fn split_pointwise<'g>(
    x: Var<'g>,
    kind: &'static str,
    f: fn(f64) -> f64,
    df: fn(f64) -> f64,
) -> Result<Var<'g>> {
    let v = x.value();
    let out = Tensor::from_parts(
        v.shape().clone(),
        v.re().iter().map(|&a| f(a)).collect(),
        v.im().map(|b| b.iter().map(|&b| f(b)).collect()),
    )?;
    Ok(x.graph().record(
        kind,
        out,
        &[x],
        Box::new(move |g, _| {
            let re = g.re().iter().zip(v.re()).map(|(g, &a)| g * df(a)).collect();
            let im = v.im().map(|b| {
                let gi = g.im_or_zeros();
                gi.iter().zip(b).map(|(g, &b)| g * df(b)).collect()
            });
            Ok(vec![Some(Tensor::from_parts(v.shape().clone(), re, im)?)])
        }),
    ))
}

fn relu_f(a: f64) -> f64 {
    a.max(0.0)
}

fn relu_df(a: f64) -> f64 {
    if a > 0.0 {
        1.0
    } else {
        0.0
    }
}

fn sigmoid_f(a: f64) -> f64 {
    1.0 / (1.0 + (-a).exp())
}

fn sigmoid_df(a: f64) -> f64 {
    let s = sigmoid_f(a);
    s * (1.0 - s)
}

/// `max(0, x)`; complex inputs are rectified per plane.
pub fn relu(x: Var<'_>) -> Result<Var<'_>> {
    split_pointwise(x, "relu", relu_f, relu_df)
}

/// Logistic sigmoid of a real-flagged input.
pub fn sigmoid(x: Var<'_>) -> Result<Var<'_>> {
    if !x.is_real() {
        return Err(TensorError::Contract(
            "sigmoid is real-valued; use split_sigmoid for complex input".into(),
        ));
    }
    split_pointwise(x, "sigmoid", sigmoid_f, sigmoid_df)
}

/// `sigmoid(a) + i sigmoid(b)`.
pub fn split_sigmoid(x: Var<'_>) -> Result<Var<'_>> {
    split_pointwise(x, "split_sigmoid", sigmoid_f, sigmoid_df)
}

/// Modulus ReLU: `relu(|z| + b) z / |z|` with a real bias per channel
/// (`x` is `[batch, channel, ..]`, `bias` is `[channel]`). Zero maps to zero.
pub fn mod_relu<'g>(x: Var<'g>, bias: Var<'g>) -> Result<Var<'g>> {
    let v = x.value();
    let bv = bias.value();
    let dims = v.dims().to_vec();
    if dims.len() < 2 || bv.dims() != [dims[1]] || !bv.is_real() {
        return Err(TensorError::InvalidShape {
            op: "mod_relu",
            reason: format!("input {} needs a real bias of shape [{}]", v.shape(), dims.get(1).copied().unwrap_or(0)),
        });
    }
    let channels = dims[1];
    let px: usize = dims[2..].iter().product();
    let channel = move |i: usize| (i / px) % channels;

    let re = v.re().to_vec();
    let im = v.im_or_zeros();
    let b = bv.re().to_vec();
    let n = v.numel();
    let (shape, is_real) = (v.shape().clone(), v.is_real());
    let mut out_re = vec![0.0; n];
    let mut out_im = vec![0.0; n];
    for i in 0..n {
        let r = re[i].hypot(im[i]);
        let m = r + b[channel(i)];
        if r > 0.0 && m > 0.0 {
            let s = m / r;
            out_re[i] = s * re[i];
            out_im[i] = s * im[i];
        }
    }
    let out = Tensor::from_parts(shape.clone(), out_re, (!is_real).then_some(out_im))?;
    let b_shape = bv.shape().clone();
    Ok(x.graph().record(
        "mod_relu",
        out,
        &[x, bias],
        Box::new(move |g, needs| {
            let gr = g.re();
            let gi = g.im_or_zeros();
            let mut dx_re = vec![0.0; n];
            let mut dx_im = vec![0.0; n];
            let mut db = vec![0.0; channels];
            for i in 0..n {
                let r = re[i].hypot(im[i]);
                let bc = b[channel(i)];
                if !(r > 0.0 && r + bc > 0.0) {
                    continue;
                }
                let (ur, ui) = (re[i] / r, im[i] / r);
                let hu = gr[i] * ur + gi[i] * ui;
                let k = 1.0 + bc / r;
                dx_re[i] = k * gr[i] - (bc / r) * hu * ur;
                dx_im[i] = k * gi[i] - (bc / r) * hu * ui;
                db[channel(i)] += hu;
            }
            Ok(vec![
                needs[0]
                    .then(|| Tensor::from_parts(shape.clone(), dx_re, Some(dx_im)))
                    .transpose()?,
                needs[1].then(|| Tensor::real(b_shape.clone(), db)).transpose()?,
            ])
        }),
    ))
}
