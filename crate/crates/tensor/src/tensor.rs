use std::sync::Arc;

use num_complex::Complex64;

use crate::shape::for_each_broadcast;
use crate::{Result, Shape, TensorError};

/// Immutable dense N-d array of complex scalars stored as planar real and
/// imaginary buffers.
///
/// A tensor without an imaginary buffer is flagged *real*: its imaginary part
/// is identically zero and real-only kernels may be used on it. Buffers are
/// reference counted, so clones and reshapes are cheap.
#[derive(Clone, Debug)]
pub struct Tensor {
    shape: Shape,
    re: Arc<Vec<f64>>,
    im: Option<Arc<Vec<f64>>>,
}

impl Tensor {
    pub fn real(shape: impl Into<Shape>, data: Vec<f64>) -> Result<Self> {
        Self::from_parts(shape.into(), data, None)
    }

    pub fn complex(shape: impl Into<Shape>, re: Vec<f64>, im: Vec<f64>) -> Result<Self> {
        Self::from_parts(shape.into(), re, Some(im))
    }

    pub fn from_parts(shape: Shape, re: Vec<f64>, im: Option<Vec<f64>>) -> Result<Self> {
        let expected = shape.numel();
        if re.len() != expected {
            return Err(TensorError::DataLength {
                shape,
                len: re.len(),
                expected,
            });
        }
        if let Some(im) = &im {
            if im.len() != expected {
                return Err(TensorError::DataLength {
                    shape,
                    len: im.len(),
                    expected,
                });
            }
        }
        Ok(Tensor {
            shape,
            re: Arc::new(re),
            im: im.map(Arc::new),
        })
    }

    pub fn from_complex(shape: impl Into<Shape>, values: &[Complex64]) -> Result<Self> {
        let re = values.iter().map(|z| z.re).collect();
        let im = values.iter().map(|z| z.im).collect();
        Self::complex(shape, re, im)
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: Shape::scalar(),
            re: Arc::new(vec![value]),
            im: None,
        }
    }

    pub fn zeros(shape: impl Into<Shape>) -> Self {
        let shape = shape.into();
        let n = shape.numel();
        Tensor {
            shape,
            re: Arc::new(vec![0.0; n]),
            im: None,
        }
    }

    pub fn zeros_complex(shape: impl Into<Shape>) -> Self {
        let shape = shape.into();
        let n = shape.numel();
        Tensor {
            shape,
            re: Arc::new(vec![0.0; n]),
            im: Some(Arc::new(vec![0.0; n])),
        }
    }

    /// Zeros with the same shape and real/complex flag.
    pub fn zeros_like(other: &Tensor) -> Self {
        if other.is_real() {
            Self::zeros(other.shape.clone())
        } else {
            Self::zeros_complex(other.shape.clone())
        }
    }

    pub fn full(shape: impl Into<Shape>, value: f64) -> Self {
        let shape = shape.into();
        let n = shape.numel();
        Tensor {
            shape,
            re: Arc::new(vec![value; n]),
            im: None,
        }
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
    }

    pub fn numel(&self) -> usize {
        self.re.len()
    }

    pub fn is_real(&self) -> bool {
        self.im.is_none()
    }

    pub fn re(&self) -> &[f64] {
        &self.re
    }

    pub fn im(&self) -> Option<&[f64]> {
        self.im.as_deref().map(|v| v.as_slice())
    }

    /// Imaginary buffer, materialising zeros for real tensors.
    pub fn im_or_zeros(&self) -> Vec<f64> {
        match &self.im {
            Some(im) => im.to_vec(),
            None => vec![0.0; self.numel()],
        }
    }

    pub fn get(&self, i: usize) -> Complex64 {
        Complex64::new(self.re[i], self.im.as_ref().map_or(0.0, |im| im[i]))
    }

    pub fn to_complex_vec(&self) -> Vec<Complex64> {
        (0..self.numel()).map(|i| self.get(i)).collect()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Complex64 {
        assert_eq!(self.numel(), 1, "item() on tensor of shape {}", self.shape);
        self.get(0)
    }

    pub fn into_parts(self) -> (Shape, Vec<f64>, Option<Vec<f64>>) {
        let re = Arc::try_unwrap(self.re).unwrap_or_else(|a| (*a).clone());
        let im = self
            .im
            .map(|im| Arc::try_unwrap(im).unwrap_or_else(|a| (*a).clone()));
        (self.shape, re, im)
    }

    /// Same values, flagged complex.
    pub fn to_complex(&self) -> Tensor {
        match self.im {
            Some(_) => self.clone(),
            None => Tensor {
                shape: self.shape.clone(),
                re: self.re.clone(),
                im: Some(Arc::new(vec![0.0; self.numel()])),
            },
        }
    }

    pub fn real_part(&self) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            re: self.re.clone(),
            im: None,
        }
    }

    pub fn imag_part(&self) -> Tensor {
        match &self.im {
            Some(im) => Tensor {
                shape: self.shape.clone(),
                re: im.clone(),
                im: None,
            },
            None => Tensor::zeros(self.shape.clone()),
        }
    }

    /// True when the imaginary part is identically zero (or absent).
    pub fn has_zero_imag(&self) -> bool {
        self.im().is_none_or(|im| im.iter().all(|&v| v == 0.0))
    }

    pub fn reshape(&self, shape: impl Into<Shape>) -> Result<Tensor> {
        let shape = shape.into();
        if shape.numel() != self.numel() {
            return Err(TensorError::InvalidShape {
                op: "reshape",
                reason: format!("cannot view {} as {}", self.shape, shape),
            });
        }
        Ok(Tensor {
            shape,
            re: self.re.clone(),
            im: self.im.clone(),
        })
    }

    pub fn map_real(&self, f: impl Fn(f64) -> f64) -> Tensor {
        let re = self.re.iter().map(|&v| f(v)).collect();
        Tensor {
            shape: self.shape.clone(),
            re: Arc::new(re),
            im: self.im.as_ref().map(|im| Arc::new(im.iter().map(|&v| f(v)).collect())),
        }
    }

    fn zip(
        &self,
        other: &Tensor,
        real: impl Fn(f64, f64) -> f64,
        cplx: impl Fn(Complex64, Complex64) -> Complex64,
    ) -> Result<Tensor> {
        let out_shape = self.shape.broadcast(&other.shape)?;
        let n = out_shape.numel();
        let same = self.shape == other.shape;
        if self.is_real() && other.is_real() {
            let mut re = vec![0.0; n];
            if same {
                for (o, (a, b)) in re.iter_mut().zip(self.re.iter().zip(other.re.iter())) {
                    *o = real(*a, *b);
                }
            } else {
                for_each_broadcast(&out_shape, &self.shape, &other.shape, |o, l, r| {
                    re[o] = real(self.re[l], other.re[r]);
                });
            }
            return Tensor::from_parts(out_shape, re, None);
        }
        let mut re = vec![0.0; n];
        let mut im = vec![0.0; n];
        let mut put = |o: usize, z: Complex64| {
            re[o] = z.re;
            im[o] = z.im;
        };
        if same {
            for o in 0..n {
                put(o, cplx(self.get(o), other.get(o)));
            }
        } else {
            for_each_broadcast(&out_shape, &self.shape, &other.shape, |o, l, r| {
                put(o, cplx(self.get(l), other.get(r)));
            });
        }
        Tensor::from_parts(out_shape, re, Some(im))
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip(other, |a, b| a + b, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip(other, |a, b| a - b, |a, b| a - b)
    }

    /// Elementwise complex product.
    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.zip(other, |a, b| a * b, |a, b| a * b)
    }

    /// Elementwise `self * conj(other)`.
    pub fn mul_conj(&self, other: &Tensor) -> Result<Tensor> {
        self.zip(other, |a, b| a * b, |a, b| a * b.conj())
    }

    pub fn scale(&self, s: f64) -> Tensor {
        self.map_real(|v| v * s)
    }

    pub fn scale_complex(&self, c: Complex64) -> Tensor {
        if c.im == 0.0 {
            return self.scale(c.re);
        }
        let n = self.numel();
        let mut re = vec![0.0; n];
        let mut im = vec![0.0; n];
        for i in 0..n {
            let z = self.get(i) * c;
            re[i] = z.re;
            im[i] = z.im;
        }
        Tensor::from_parts(self.shape.clone(), re, Some(im)).expect("same shape")
    }

    pub fn conj(&self) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            re: self.re.clone(),
            im: self
                .im
                .as_ref()
                .map(|im| Arc::new(im.iter().map(|v| -v).collect())),
        }
    }

    /// Elementwise |z|, real-flagged.
    pub fn magnitude(&self) -> Tensor {
        let re = match &self.im {
            None => self.re.iter().map(|v| v.abs()).collect(),
            Some(im) => self
                .re
                .iter()
                .zip(im.iter())
                .map(|(a, b)| a.hypot(*b))
                .collect(),
        };
        Tensor::from_parts(self.shape.clone(), re, None).expect("same shape")
    }

    /// Elementwise phase angle, real-flagged.
    pub fn phase(&self) -> Tensor {
        let re = (0..self.numel()).map(|i| self.get(i).arg()).collect();
        Tensor::from_parts(self.shape.clone(), re, None).expect("same shape")
    }

    pub fn sum(&self) -> Complex64 {
        let re: f64 = self.re.iter().sum();
        let im: f64 = self.im.as_ref().map_or(0.0, |im| im.iter().sum());
        Complex64::new(re, im)
    }

    /// Sum-reduce a broadcast result back to `target` (which must broadcast to `self`).
    pub fn sum_to_shape(&self, target: &Shape) -> Result<Tensor> {
        if &self.shape == target {
            return Ok(self.clone());
        }
        let check = target.broadcast(&self.shape)?;
        if check != self.shape {
            return Err(TensorError::ShapeMismatch {
                op: "sum_to_shape",
                lhs: self.shape.clone(),
                rhs: target.clone(),
            });
        }
        let n = target.numel();
        let mut re = vec![0.0; n];
        let mut im = self.im.as_ref().map(|_| vec![0.0; n]);
        for_each_broadcast(&self.shape, target, &self.shape, |o, t, _| {
            re[t] += self.re[o];
            if let (Some(acc), Some(src)) = (im.as_mut(), self.im.as_ref()) {
                acc[t] += src[o];
            }
        });
        Tensor::from_parts(target.clone(), re, im)
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape);
        (0..self.numel())
            .map(|i| (self.get(i) - other.get(i)).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        (0..self.numel())
            .map(|i| self.get(i).norm())
            .fold(0.0, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.re.iter().all(|v| v.is_finite())
            && self.im().is_none_or(|im| im.iter().all(|v| v.is_finite()))
    }

    /// Bitwise equality of shape, flag and every stored value.
    pub fn bit_eq(&self, other: &Tensor) -> bool {
        fn bits(v: &[f64]) -> impl Iterator<Item = u64> + '_ {
            v.iter().map(|x| x.to_bits())
        }
        self.shape == other.shape
            && bits(&self.re).eq(bits(&other.re))
            && match (self.im(), other.im()) {
                (None, None) => true,
                (Some(a), Some(b)) => bits(a).eq(bits(b)),
                _ => false,
            }
    }
}
