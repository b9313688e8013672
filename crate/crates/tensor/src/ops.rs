//! Differentiable elementwise and structural operations.

use num_complex::Complex64;

use crate::{Result, Shape, Tensor, TensorError, Var};

/// Real-flag an adjoint when the value it belongs to is real.
fn match_flag(g: Tensor, like_real: bool) -> Tensor {
    if like_real && !g.is_real() {
        g.real_part()
    } else {
        g
    }
}

impl<'g> Var<'g> {
    pub fn add(self, other: Var<'g>) -> Result<Var<'g>> {
        let (a, b) = (self.value(), other.value());
        let out = a.add(&b)?;
        let (sa, sb) = (a.shape().clone(), b.shape().clone());
        Ok(self.graph().record(
            "add",
            out,
            &[self, other],
            Box::new(move |g, needs| {
                Ok(vec![
                    needs[0].then(|| g.sum_to_shape(&sa)).transpose()?,
                    needs[1].then(|| g.sum_to_shape(&sb)).transpose()?,
                ])
            }),
        ))
    }

    pub fn sub(self, other: Var<'g>) -> Result<Var<'g>> {
        let (a, b) = (self.value(), other.value());
        let out = a.sub(&b)?;
        let (sa, sb) = (a.shape().clone(), b.shape().clone());
        Ok(self.graph().record(
            "sub",
            out,
            &[self, other],
            Box::new(move |g, needs| {
                Ok(vec![
                    needs[0].then(|| g.sum_to_shape(&sa)).transpose()?,
                    needs[1]
                        .then(|| g.sum_to_shape(&sb).map(|t| t.scale(-1.0)))
                        .transpose()?,
                ])
            }),
        ))
    }

    /// Elementwise complex product with broadcasting.
    pub fn mul(self, other: Var<'g>) -> Result<Var<'g>> {
        let (a, b) = (self.value(), other.value());
        let out = a.mul(&b)?;
        Ok(self.graph().record(
            "mul",
            out,
            &[self, other],
            Box::new(move |g, needs| {
                let ga = if needs[0] {
                    Some(g.mul_conj(&b)?.sum_to_shape(a.shape())?)
                } else {
                    None
                };
                let gb = if needs[1] {
                    Some(g.mul_conj(&a)?.sum_to_shape(b.shape())?)
                } else {
                    None
                };
                Ok(vec![ga, gb])
            }),
        ))
    }

    /// Multiply by a real constant.
    pub fn scale(self, s: f64) -> Var<'g> {
        let out = self.value().scale(s);
        self.graph().record(
            "scale",
            out,
            &[self],
            Box::new(move |g, _| Ok(vec![Some(g.scale(s))])),
        )
    }

    /// Multiply by a complex constant.
    pub fn scale_complex(self, c: Complex64) -> Var<'g> {
        let real_in = self.is_real();
        let out = self.value().scale_complex(c);
        self.graph().record(
            "scale_complex",
            out,
            &[self],
            Box::new(move |g, _| Ok(vec![Some(match_flag(g.scale_complex(c.conj()), real_in))])),
        )
    }

    pub fn conj(self) -> Var<'g> {
        let out = self.value().conj();
        self.graph().record(
            "conj",
            out,
            &[self],
            Box::new(move |g, _| Ok(vec![Some(g.conj())])),
        )
    }

    /// Elementwise magnitude `sqrt(a^2 + b^2)`; the gradient at 0 is taken as 0.
    pub fn magnitude(self) -> Var<'g> {
        let x = self.value();
        let out = x.magnitude();
        let mag = out.clone();
        self.graph().record(
            "magnitude",
            out,
            &[self],
            Box::new(move |g, _| {
                let n = x.numel();
                let gr = g.re();
                let mut re = vec![0.0; n];
                let mut im = x.im().map(|_| vec![0.0; n]);
                for i in 0..n {
                    let m = mag.re()[i];
                    if m > 0.0 {
                        let s = gr[i] / m;
                        re[i] = s * x.re()[i];
                        if let (Some(im), Some(xi)) = (im.as_mut(), x.im()) {
                            im[i] = s * xi[i];
                        }
                    }
                }
                Ok(vec![Some(Tensor::from_parts(x.shape().clone(), re, im)?)])
            }),
        )
    }

    /// Elementwise squared magnitude `a^2 + b^2`.
    pub fn abs2(self) -> Var<'g> {
        let x = self.value();
        let n = x.numel();
        let out: Vec<f64> = (0..n).map(|i| x.get(i).norm_sqr()).collect();
        let out = Tensor::real(x.shape().clone(), out).expect("same shape");
        self.graph().record(
            "abs2",
            out,
            &[self],
            Box::new(move |g, _| {
                // d/da = 2a g, d/db = 2b g
                let s = g.real_part();
                Ok(vec![Some(x.mul(&s)?.scale(2.0))])
            }),
        )
    }

    /// Elementwise square `z * z`.
    pub fn square(self) -> Result<Var<'g>> {
        self.mul(self)
    }

    /// Sum of all elements, as a rank-0 tensor.
    pub fn sum(self) -> Var<'g> {
        let x = self.value();
        let s = x.sum();
        let out = if x.is_real() {
            Tensor::scalar(s.re)
        } else {
            Tensor::complex(Shape::scalar(), vec![s.re], vec![s.im]).expect("scalar")
        };
        let shape = x.shape().clone();
        self.graph().record(
            "sum",
            out,
            &[self],
            Box::new(move |g, _| {
                let z = g.item();
                let re = vec![z.re; shape.numel()];
                let im = (!g.is_real()).then(|| vec![z.im; shape.numel()]);
                Ok(vec![Some(Tensor::from_parts(shape.clone(), re, im)?)])
            }),
        )
    }

    /// Mean of all elements, as a rank-0 tensor.
    pub fn mean(self) -> Var<'g> {
        let n = self.value().numel().max(1);
        self.sum().scale(1.0 / n as f64)
    }

    pub fn reshape(self, shape: impl Into<Shape>) -> Result<Var<'g>> {
        let x = self.value();
        let out = x.reshape(shape)?;
        let orig = x.shape().clone();
        Ok(self.graph().record(
            "reshape",
            out,
            &[self],
            Box::new(move |g, _| Ok(vec![Some(g.reshape(orig.clone())?)])),
        ))
    }

    /// Slice `len` entries starting at `start` along `axis`.
    pub fn narrow(self, axis: usize, start: usize, len: usize) -> Result<Var<'g>> {
        let x = self.value();
        let out = narrow_value(&x, axis, start, len)?;
        let shape = x.shape().clone();
        Ok(self.graph().record(
            "narrow",
            out,
            &[self],
            Box::new(move |g, _| {
                let mut pads = vec![(0, 0); shape.rank()];
                pads[axis] = (start, shape.dim(axis) - start - len);
                Ok(vec![Some(pad_value(g, &pads)?)])
            }),
        ))
    }

    /// Zero-pad each axis by `(before, after)`.
    pub fn pad(self, pads: &[(usize, usize)]) -> Result<Var<'g>> {
        let x = self.value();
        let out = pad_value(&x, pads)?;
        let pads = pads.to_vec();
        let shape = x.shape().clone();
        Ok(self.graph().record(
            "pad",
            out,
            &[self],
            Box::new(move |g, _| {
                let mut t = g.clone();
                for (axis, &(before, _)) in pads.iter().enumerate() {
                    t = narrow_value(&t, axis, before, shape.dim(axis))?;
                }
                Ok(vec![Some(t)])
            }),
        ))
    }

    /// Concatenate along `axis`. Inputs must agree on every other extent.
    pub fn concat(vars: &[Var<'g>], axis: usize) -> Result<Var<'g>> {
        let first = vars.first().ok_or_else(|| TensorError::InvalidShape {
            op: "concat",
            reason: "no inputs".into(),
        })?;
        let values: Vec<Tensor> = vars.iter().map(|v| v.value()).collect();
        let out = concat_values(&values, axis)?;
        let extents: Vec<usize> = values.iter().map(|v| v.dims()[axis]).collect();
        let flags: Vec<bool> = values.iter().map(|v| v.is_real()).collect();
        Ok(first.graph().record(
            "concat",
            out,
            vars,
            Box::new(move |g, needs| {
                let mut start = 0;
                let mut grads = Vec::with_capacity(extents.len());
                for (i, &len) in extents.iter().enumerate() {
                    grads.push(if needs[i] {
                        Some(match_flag(narrow_value(g, axis, start, len)?, flags[i]))
                    } else {
                        None
                    });
                    start += len;
                }
                Ok(grads)
            }),
        ))
    }
}

/// `[outer, axis, inner]` factorisation of a shape around `axis`.
fn split_at_axis(shape: &Shape, axis: usize) -> (usize, usize, usize) {
    let d = shape.dims();
    (
        d[..axis].iter().product(),
        d[axis],
        d[axis + 1..].iter().product(),
    )
}

pub fn narrow_value(x: &Tensor, axis: usize, start: usize, len: usize) -> Result<Tensor> {
    if axis >= x.shape().rank() || start + len > x.dims()[axis] {
        return Err(TensorError::InvalidShape {
            op: "narrow",
            reason: format!("range {start}..{} on axis {axis} of {}", start + len, x.shape()),
        });
    }
    let (outer, extent, inner) = split_at_axis(x.shape(), axis);
    let take = |src: &[f64]| {
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * extent + start) * inner;
            out.extend_from_slice(&src[base..base + len * inner]);
        }
        out
    };
    let mut dims = x.dims().to_vec();
    dims[axis] = len;
    Tensor::from_parts(Shape::new(dims), take(x.re()), x.im().map(take))
}

pub fn pad_value(x: &Tensor, pads: &[(usize, usize)]) -> Result<Tensor> {
    if pads.len() != x.shape().rank() {
        return Err(TensorError::InvalidShape {
            op: "pad",
            reason: format!("{} pad pairs for rank {}", pads.len(), x.shape().rank()),
        });
    }
    let mut t = x.clone();
    for (axis, &(before, after)) in pads.iter().enumerate() {
        if before == 0 && after == 0 {
            continue;
        }
        let (outer, extent, inner) = split_at_axis(t.shape(), axis);
        let new_extent = extent + before + after;
        let put = |src: &[f64]| {
            let mut out = vec![0.0; outer * new_extent * inner];
            for o in 0..outer {
                let dst = (o * new_extent + before) * inner;
                let s = o * extent * inner;
                out[dst..dst + extent * inner].copy_from_slice(&src[s..s + extent * inner]);
            }
            out
        };
        let mut dims = t.dims().to_vec();
        dims[axis] = new_extent;
        t = Tensor::from_parts(Shape::new(dims), put(t.re()), t.im().map(put))?;
    }
    Ok(t)
}

pub fn concat_values(values: &[Tensor], axis: usize) -> Result<Tensor> {
    let first = &values[0];
    let rank = first.shape().rank();
    if axis >= rank {
        return Err(TensorError::InvalidShape {
            op: "concat",
            reason: format!("axis {axis} out of range for rank {rank}"),
        });
    }
    for v in values {
        let ok = v.shape().rank() == rank
            && (0..rank).all(|a| a == axis || v.dims()[a] == first.dims()[a]);
        if !ok {
            return Err(TensorError::ShapeMismatch {
                op: "concat",
                lhs: first.shape().clone(),
                rhs: v.shape().clone(),
            });
        }
    }
    let any_complex = values.iter().any(|v| !v.is_real());
    let total: usize = values.iter().map(|v| v.dims()[axis]).sum();
    let (outer, _, inner) = split_at_axis(first.shape(), axis);
    let mut re = Vec::with_capacity(outer * total * inner);
    let mut im = Vec::with_capacity(if any_complex { outer * total * inner } else { 0 });
    for o in 0..outer {
        for v in values {
            let chunk = v.dims()[axis] * inner;
            re.extend_from_slice(&v.re()[o * chunk..(o + 1) * chunk]);
            if any_complex {
                match v.im() {
                    Some(vi) => im.extend_from_slice(&vi[o * chunk..(o + 1) * chunk]),
                    None => im.extend(std::iter::repeat_n(0.0, chunk)),
                }
            }
        }
    }
    let mut dims = first.dims().to_vec();
    dims[axis] = total;
    Tensor::from_parts(Shape::new(dims), re, any_complex.then_some(im))
}
