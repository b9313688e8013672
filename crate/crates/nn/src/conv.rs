//! Real and complex convolution and transpose convolution.
//!
//! A complex kernel `w_r + i w_i` is stored as one complex tensor whose real
//! plane is `w_r` and imaginary plane is `w_i`. Complex layers are assembled
//! from real passes:
//!
//! * convolution: `c_r(a) - c_i(b) + i (c_i(a) + c_r(b))`
//! * transpose convolution: `tc_r(a) + tc_i(b) + i (tc_i(a) - tc_r(b))`
//!
//! The transpose-convolution sign pattern is applied exactly as written above.
//! It is not the conjugate of the convolution pattern: it equals the standard
//! complex transpose convolution applied to `conj(a + ib)`, so an identity
//! kernel conjugates its input.

use smsnet_tensor::{Result, Shape, Tensor, TensorError, Var};

use crate::kernels::{self, Geometry};

/// Channel counts, kernel extents, stride and zero padding of a convolution.
///
/// `kernel`, `stride` and `padding` have one entry per spatial dimension.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: Vec<usize>,
    pub stride: Vec<usize>,
    pub padding: Vec<usize>,
}

impl ConvSpec {
    /// Stride 1 with "same" zero padding (`k / 2` per side; odd kernels).
    pub fn same(in_channels: usize, out_channels: usize, kernel: &[usize]) -> Self {
        ConvSpec {
            in_channels,
            out_channels,
            kernel: kernel.to_vec(),
            stride: vec![1; kernel.len()],
            padding: kernel.iter().map(|k| k / 2).collect(),
        }
    }

    pub fn spatial_dims(&self) -> usize {
        self.kernel.len()
    }

    pub fn taps(&self) -> usize {
        self.kernel.iter().product()
    }

    fn validate(&self) -> Result<()> {
        let n = self.kernel.len();
        if !(1..=3).contains(&n) || self.stride.len() != n || self.padding.len() != n {
            return Err(TensorError::InvalidShape {
                op: "conv",
                reason: format!(
                    "kernel/stride/padding ranks {}/{}/{} must agree and be 1..=3",
                    n,
                    self.stride.len(),
                    self.padding.len()
                ),
            });
        }
        if self.kernel.contains(&0) || self.stride.contains(&0) {
            return Err(TensorError::InvalidShape {
                op: "conv",
                reason: "zero kernel extent or stride".into(),
            });
        }
        Ok(())
    }

    /// `floor((in + 2 pad - kernel) / stride) + 1` per spatial dim.
    pub fn output_extent(&self, input: &[usize]) -> Result<Vec<usize>> {
        self.validate()?;
        if input.len() != self.kernel.len() {
            return Err(TensorError::InvalidShape {
                op: "conv",
                reason: format!("{} spatial dims for a {}-d kernel", input.len(), self.kernel.len()),
            });
        }
        input
            .iter()
            .zip(&self.kernel)
            .zip(self.stride.iter().zip(&self.padding))
            .map(|((&i, &k), (&s, &p))| {
                let padded = i + 2 * p;
                if padded < k {
                    Err(TensorError::InvalidShape {
                        op: "conv",
                        reason: format!("kernel {k} larger than padded extent {padded}"),
                    })
                } else {
                    Ok((padded - k) / s + 1)
                }
            })
            .collect()
    }

    /// `(in - 1) stride - 2 pad + kernel` per spatial dim.
    pub fn transpose_output_extent(&self, input: &[usize]) -> Result<Vec<usize>> {
        self.validate()?;
        if input.len() != self.kernel.len() {
            return Err(TensorError::InvalidShape {
                op: "transpose_conv",
                reason: format!("{} spatial dims for a {}-d kernel", input.len(), self.kernel.len()),
            });
        }
        input
            .iter()
            .zip(&self.kernel)
            .zip(self.stride.iter().zip(&self.padding))
            .map(|((&i, &k), (&s, &p))| {
                let full = (i.max(1) - 1) * s + k;
                if i == 0 || full <= 2 * p {
                    Err(TensorError::InvalidShape {
                        op: "transpose_conv",
                        reason: format!("non-positive output extent for input {i}"),
                    })
                } else {
                    Ok(full - 2 * p)
                }
            })
            .collect()
    }

    /// Weight shape `[out, in, kernel..]` of a convolution.
    pub fn weight_shape(&self) -> Shape {
        let mut d = vec![self.out_channels, self.in_channels];
        d.extend_from_slice(&self.kernel);
        Shape::new(d)
    }

    /// Weight shape `[in, out, kernel..]` of a transpose convolution.
    pub fn transpose_weight_shape(&self) -> Shape {
        let mut d = vec![self.in_channels, self.out_channels];
        d.extend_from_slice(&self.kernel);
        Shape::new(d)
    }
}

/// Real and imaginary weight planes of a complex kernel.
#[derive(Clone, Debug)]
pub struct ComplexKernel {
    pub w_r: Tensor,
    pub w_i: Tensor,
}

impl ComplexKernel {
    pub fn new(w_r: Tensor, w_i: Tensor) -> Result<Self> {
        if w_r.shape() != w_i.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "complex_kernel",
                lhs: w_r.shape().clone(),
                rhs: w_i.shape().clone(),
            });
        }
        Ok(ComplexKernel {
            w_r: w_r.real_part(),
            w_i: w_i.real_part(),
        })
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::complex(
            self.w_r.shape().clone(),
            self.w_r.re().to_vec(),
            self.w_i.re().to_vec(),
        )
        .expect("planes share a shape")
    }

    pub fn from_tensor(t: &Tensor) -> Self {
        ComplexKernel {
            w_r: t.real_part(),
            w_i: t.imag_part(),
        }
    }
}

fn pad3(v: &[usize], fill: usize) -> [usize; 3] {
    let mut out = [fill; 3];
    out[3 - v.len()..].copy_from_slice(v);
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Direction {
    Forward,
    Transpose,
}

/// Shared machinery: `geo` always describes the underlying forward
/// convolution. For a transpose convolution its input space is the layer's
/// output space.
struct Layer {
    dir: Direction,
    geo: Geometry,
    conj_input: bool,
}

impl Layer {
    fn apply(&self, x: &[f64], w: &[f64], alpha: f64, out: &mut [f64]) {
        match self.dir {
            Direction::Forward => kernels::forward(&self.geo, x, w, alpha, out),
            Direction::Transpose => kernels::backward_data(&self.geo, x, w, alpha, out),
        }
    }

    fn adjoint(&self, g: &[f64], w: &[f64], alpha: f64, out: &mut [f64]) {
        match self.dir {
            Direction::Forward => kernels::backward_data(&self.geo, g, w, alpha, out),
            Direction::Transpose => kernels::forward(&self.geo, g, w, alpha, out),
        }
    }

    fn weight_grad(&self, x: &[f64], g: &[f64], alpha: f64, dw: &mut [f64]) {
        match self.dir {
            Direction::Forward => kernels::backward_weight(&self.geo, x, g, alpha, dw),
            Direction::Transpose => kernels::backward_weight(&self.geo, g, x, alpha, dw),
        }
    }

    fn x_len(&self) -> usize {
        match self.dir {
            Direction::Forward => self.geo.input_len(),
            Direction::Transpose => self.geo.output_len(),
        }
    }

    fn y_len(&self) -> usize {
        match self.dir {
            Direction::Forward => self.geo.output_len(),
            Direction::Transpose => self.geo.input_len(),
        }
    }

    fn y_channels(&self) -> usize {
        match self.dir {
            Direction::Forward => self.geo.cout,
            Direction::Transpose => self.geo.cin,
        }
    }

    fn y_px(&self) -> usize {
        match self.dir {
            Direction::Forward => self.geo.out_px(),
            Direction::Transpose => self.geo.in_px(),
        }
    }
}

fn negated(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| -x).collect()
}

fn add_bias(out: &mut [f64], bias: &[f64], channels: usize, px: usize) {
    for (i, chunk) in out.chunks_mut(px).enumerate() {
        let b = bias[i % channels];
        for v in chunk {
            *v += b;
        }
    }
}

fn bias_grad(g: &[f64], channels: usize, px: usize) -> Vec<f64> {
    let mut out = vec![0.0; channels];
    for (i, chunk) in g.chunks(px).enumerate() {
        out[i % channels] += chunk.iter().sum::<f64>();
    }
    out
}

fn record<'g>(
    layer: Layer,
    kind: &'static str,
    out_shape: Shape,
    x: Var<'g>,
    w: Var<'g>,
    bias: Option<Var<'g>>,
) -> Result<Var<'g>> {
    let xv = x.value();
    let wv = w.value();
    let bv = bias.map(|b| b.value());

    let a = xv.re().to_vec();
    // b' = b, or -b when the input enters conjugated
    let bp: Option<Vec<f64>> = xv
        .im()
        .map(|b| if layer.conj_input { negated(b) } else { b.to_vec() });
    let wr = wv.re();
    let wi = wv.im();

    let n = layer.y_len();
    let mut re = vec![0.0; n];
    layer.apply(&a, wr, 1.0, &mut re);
    if let (Some(b), Some(wi)) = (&bp, wi) {
        layer.apply(b, wi, -1.0, &mut re);
    }
    let complex_out = bp.is_some() || wi.is_some() || bv.as_ref().is_some_and(|b| !b.is_real());
    let mut im = complex_out.then(|| vec![0.0; n]);
    if let Some(im) = im.as_mut() {
        if let Some(wi) = wi {
            layer.apply(&a, wi, 1.0, im);
        }
        if let Some(b) = &bp {
            layer.apply(b, wr, 1.0, im);
        }
    }
    if let Some(bv) = &bv {
        add_bias(&mut re, bv.re(), layer.y_channels(), layer.y_px());
        if let (Some(im), Some(bi)) = (im.as_mut(), bv.im()) {
            add_bias(im, bi, layer.y_channels(), layer.y_px());
        }
    }
    let out = Tensor::from_parts(out_shape, re, im)?;

    let x_shape = xv.shape().clone();
    let x_real = xv.is_real();
    let w_shape = wv.shape().clone();
    let b_shape = bv.as_ref().map(|b| b.shape().clone());
    let wr = wr.to_vec();
    let wi = wi.map(|w| w.to_vec());
    let mut parents = vec![x, w];
    parents.extend(bias);

    Ok(x.graph().record(
        kind,
        out,
        &parents,
        Box::new(move |g, needs| {
            let gr = g.re();
            let gi = g.im();
            let mut grads = Vec::with_capacity(3);

            // input: da = A*(gr, wr) + A*(gi, wi); db' = -A*(gr, wi) + A*(gi, wr)
            grads.push(if needs[0] {
                let m = layer.x_len();
                let mut da = vec![0.0; m];
                layer.adjoint(gr, &wr, 1.0, &mut da);
                if let (Some(gi), Some(wi)) = (gi, &wi) {
                    layer.adjoint(gi, wi, 1.0, &mut da);
                }
                let db = (!x_real).then(|| {
                    let mut db = vec![0.0; m];
                    if let Some(wi) = &wi {
                        layer.adjoint(gr, wi, -1.0, &mut db);
                    }
                    if let Some(gi) = gi {
                        layer.adjoint(gi, &wr, 1.0, &mut db);
                    }
                    if layer.conj_input {
                        db.iter_mut().for_each(|v| *v = -*v);
                    }
                    db
                });
                Some(Tensor::from_parts(x_shape.clone(), da, db)?)
            } else {
                None
            });

            // weight: dwr = W(a, gr) + W(b', gi); dwi = -W(b', gr) + W(a, gi)
            grads.push(if needs[1] {
                let m = w_shape.numel();
                let mut dwr = vec![0.0; m];
                layer.weight_grad(&a, gr, 1.0, &mut dwr);
                if let (Some(b), Some(gi)) = (&bp, gi) {
                    layer.weight_grad(b, gi, 1.0, &mut dwr);
                }
                let dwi = wi.is_some().then(|| {
                    let mut dwi = vec![0.0; m];
                    if let Some(b) = &bp {
                        layer.weight_grad(b, gr, -1.0, &mut dwi);
                    }
                    if let Some(gi) = gi {
                        layer.weight_grad(&a, gi, 1.0, &mut dwi);
                    }
                    dwi
                });
                Some(Tensor::from_parts(w_shape.clone(), dwr, dwi)?)
            } else {
                None
            });

            if let Some(b_shape) = &b_shape {
                grads.push(if needs[2] {
                    let (c, px) = (layer.y_channels(), layer.y_px());
                    let dr = bias_grad(gr, c, px);
                    let di = gi.map(|gi| bias_grad(gi, c, px));
                    Some(Tensor::from_parts(b_shape.clone(), dr, di)?)
                } else {
                    None
                });
            }
            Ok(grads)
        }),
    ))
}

fn check_input(op: &'static str, x: &Tensor, spec: &ConvSpec, channels: usize) -> Result<()> {
    let nsp = spec.spatial_dims();
    if x.shape().rank() != nsp + 2 {
        return Err(TensorError::InvalidShape {
            op,
            reason: format!(
                "input {} must be [batch, channel, {} spatial dims]",
                x.shape(),
                nsp
            ),
        });
    }
    if x.dims()[1] != channels {
        return Err(TensorError::InvalidShape {
            op,
            reason: format!("input has {} channels, layer expects {}", x.dims()[1], channels),
        });
    }
    Ok(())
}

fn check_weight(op: &'static str, w: &Tensor, expected: &Shape, bias: Option<&Tensor>, out: usize) -> Result<()> {
    if w.shape() != expected {
        return Err(TensorError::ShapeMismatch {
            op,
            lhs: w.shape().clone(),
            rhs: expected.clone(),
        });
    }
    if let Some(b) = bias {
        if b.dims() != [out] {
            return Err(TensorError::ShapeMismatch {
                op,
                lhs: b.shape().clone(),
                rhs: Shape::from([out]),
            });
        }
    }
    Ok(())
}

/// Convolution `[batch, in, spatial..] -> [batch, out, spatial'..]`.
///
/// Real when input, weight and bias are all real-flagged; otherwise the
/// complex product `(w_r + i w_i)(a + ib)` is applied in every window.
pub fn conv<'g>(x: Var<'g>, w: Var<'g>, bias: Option<Var<'g>>, spec: &ConvSpec) -> Result<Var<'g>> {
    let xv = x.value();
    check_input("conv", &xv, spec, spec.in_channels)?;
    check_weight(
        "conv",
        &w.value(),
        &spec.weight_shape(),
        bias.map(|b| b.value()).as_ref(),
        spec.out_channels,
    )?;
    let spatial = &xv.dims()[2..];
    let out_sp = spec.output_extent(spatial)?;
    let geo = Geometry {
        batch: xv.dims()[0],
        cin: spec.in_channels,
        cout: spec.out_channels,
        input: pad3(spatial, 1),
        output: pad3(&out_sp, 1),
        kernel: pad3(&spec.kernel, 1),
        stride: pad3(&spec.stride, 1),
        pad: pad3(&spec.padding, 0),
    };
    let mut dims = vec![geo.batch, spec.out_channels];
    dims.extend(out_sp);
    let layer = Layer {
        dir: Direction::Forward,
        geo,
        conj_input: false,
    };
    record(layer, "conv", Shape::new(dims), x, w, bias)
}

/// Transpose convolution `[batch, in, spatial..] -> [batch, out, spatial'..]`
/// with weight `[in, out, kernel..]`.
///
/// Complex inputs follow `tc_r(a) + tc_i(b) + i (tc_i(a) - tc_r(b))`.
pub fn transpose_conv<'g>(
    x: Var<'g>,
    w: Var<'g>,
    bias: Option<Var<'g>>,
    spec: &ConvSpec,
) -> Result<Var<'g>> {
    let xv = x.value();
    check_input("transpose_conv", &xv, spec, spec.in_channels)?;
    check_weight(
        "transpose_conv",
        &w.value(),
        &spec.transpose_weight_shape(),
        bias.map(|b| b.value()).as_ref(),
        spec.out_channels,
    )?;
    let spatial = &xv.dims()[2..];
    let out_sp = spec.transpose_output_extent(spatial)?;
    // underlying forward convolution maps the output space back to the input space
    let geo = Geometry {
        batch: xv.dims()[0],
        cin: spec.out_channels,
        cout: spec.in_channels,
        input: pad3(&out_sp, 1),
        output: pad3(spatial, 1),
        kernel: pad3(&spec.kernel, 1),
        stride: pad3(&spec.stride, 1),
        pad: pad3(&spec.padding, 0),
    };
    let mut dims = vec![geo.batch, spec.out_channels];
    dims.extend(out_sp);
    let layer = Layer {
        dir: Direction::Transpose,
        geo,
        conj_input: true,
    };
    record(layer, "transpose_conv", Shape::new(dims), x, w, bias)
}

/// Value-level complex convolution without bias.
pub fn complex_conv(x: &Tensor, k: &ComplexKernel, spec: &ConvSpec) -> Result<Tensor> {
    let g = smsnet_tensor::Graph::new();
    let out = conv(g.constant(x.clone()), g.constant(k.to_tensor()), None, spec)?;
    Ok(out.value())
}

/// Value-level complex transpose convolution without bias.
pub fn complex_transpose_conv(x: &Tensor, k: &ComplexKernel, spec: &ConvSpec) -> Result<Tensor> {
    let g = smsnet_tensor::Graph::new();
    let out = transpose_conv(g.constant(x.clone()), g.constant(k.to_tensor()), None, spec)?;
    Ok(out.value())
}
