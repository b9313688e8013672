use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smsnet_nn::{
    batch_norm, complex_dropout, conv, magnitude_max_pool, max_pool, mod_relu, relu,
    transpose_conv, BatchStats, ConvSpec, Mode, PoolSpec, RunningStats,
};
use smsnet_nn::norm::{DEFAULT_EPS, DEFAULT_MOMENTUM};
use smsnet_tensor::{Graph, ParamId, Tensor, Var};

use crate::config::{Dim, ModelConfig};
use crate::{Result, UnetError};

/// A named learnable tensor.
#[derive(Clone, Debug)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
}

/// Indices into the parameter list for one conv → BN → activation unit.
#[derive(Clone, Debug)]
struct Unit {
    spec: ConvSpec,
    w: usize,
    b: usize,
    gamma: usize,
    beta: usize,
    /// modReLU bias (complex models only).
    act: Option<usize>,
    bn: usize,
}

#[derive(Clone, Debug)]
struct Up {
    spec: ConvSpec,
    w: usize,
    b: usize,
}

/// U-Net with one conv unit per level, max-pool downsampling, transpose-conv
/// upsampling, concatenated skips and a residual 1×1 output layer.
#[derive(Clone, Debug)]
pub struct Network {
    config: ModelConfig,
    params: Vec<Param>,
    running: Vec<RunningStats>,
    encoder: Vec<Unit>,
    ups: Vec<Up>,
    decoder: Vec<Unit>,
    out: Up,
    pool: PoolSpec,
}

/// Output of a forward pass.
pub struct Forward<'g> {
    pub prediction: Var<'g>,
    /// Batch statistics per normalisation layer (training mode only).
    pub batch_stats: Vec<BatchStats>,
}

struct Builder<'a, R: Rng + ?Sized> {
    params: Vec<Param>,
    running: Vec<RunningStats>,
    complex: bool,
    rng: &'a mut R,
}

impl<R: Rng + ?Sized> Builder<'_, R> {
    fn push(&mut self, name: String, value: Tensor) -> usize {
        self.params.push(Param { name, value });
        self.params.len() - 1
    }

    /// Uniform fan-in initialisation: real weights in `±sqrt(6/fan_in)`;
    /// complex real and imaginary parts each in `±sqrt(3/fan_in)` so that
    /// `E|w|^2` matches the real case.
    fn weight(&mut self, name: String, dims: Vec<usize>, fan_in: usize) -> usize {
        let n: usize = dims.iter().product();
        let fan_in = fan_in.max(1) as f64;
        let value = if self.complex {
            let bound = (3.0 / fan_in).sqrt();
            let re = (0..n).map(|_| self.rng.random_range(-bound..=bound)).collect();
            let im = (0..n).map(|_| self.rng.random_range(-bound..=bound)).collect();
            Tensor::complex(dims, re, im)
        } else {
            let bound = (6.0 / fan_in).sqrt();
            Tensor::real(dims, (0..n).map(|_| self.rng.random_range(-bound..=bound)).collect())
        };
        self.push(name, value.expect("dims match data"))
    }

    fn filled(&mut self, name: String, len: usize, value: f64) -> usize {
        let t = if self.complex {
            Tensor::full([len], value).to_complex()
        } else {
            Tensor::full([len], value)
        };
        self.push(name, t)
    }

    fn unit(&mut self, name: &str, spec: ConvSpec) -> Unit {
        let c = spec.out_channels;
        let fan_in = spec.in_channels * spec.taps();
        let w = self.weight(format!("{name}.conv.w"), spec.weight_shape().dims().to_vec(), fan_in);
        let b = self.filled(format!("{name}.conv.b"), c, 0.0);
        let gamma = self.filled(format!("{name}.bn.gamma"), c, 1.0);
        let beta = self.filled(format!("{name}.bn.beta"), c, 0.0);
        let act = self
            .complex
            .then(|| self.push(format!("{name}.act.b"), Tensor::zeros([c])));
        self.running.push(RunningStats::new(c, self.complex));
        Unit {
            spec,
            w,
            b,
            gamma,
            beta,
            act,
            bn: self.running.len() - 1,
        }
    }

    fn up(&mut self, name: &str, spec: ConvSpec) -> Up {
        let stride: usize = spec.stride.iter().product();
        let fan_in = spec.in_channels * spec.taps() / stride;
        let w = self.weight(
            format!("{name}.w"),
            spec.transpose_weight_shape().dims().to_vec(),
            fan_in,
        );
        let b = self.filled(format!("{name}.b"), spec.out_channels, 0.0);
        Up { spec, w, b }
    }
}

impl Network {
    /// Build and initialise a network. The output layer starts at zero, so
    /// the freshly built model is the identity map.
    pub fn build<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let kernel: Vec<usize> = match config.dim {
            Dim::D2 => vec![3, 3],
            Dim::D3 => vec![3, 3, 3],
        };
        let point = vec![1; kernel.len()];
        // the short slice axis is never resampled
        let (pool, up_kernel, up_stride, up_pad) = match config.dim {
            Dim::D2 => (PoolSpec::new(&[2, 2]), vec![2, 2], vec![2, 2], vec![0, 0]),
            Dim::D3 => (
                PoolSpec::new(&[1, 2, 2]),
                vec![3, 2, 2],
                vec![1, 2, 2],
                vec![1, 0, 0],
            ),
        };
        let mut b = Builder {
            params: Vec::new(),
            running: Vec::new(),
            complex: config.is_complex(),
            rng,
        };
        let cin = config.input_channels();
        let ch = |k: usize| config.level_channels(k);

        let mut encoder = Vec::with_capacity(config.depth);
        for k in 0..config.depth {
            let from = if k == 0 { cin } else { ch(k - 1) };
            encoder.push(b.unit(&format!("enc{k}"), ConvSpec::same(from, ch(k), &kernel)));
        }
        let mut ups = Vec::new();
        let mut decoder = Vec::new();
        for k in (0..config.depth - 1).rev() {
            let spec = ConvSpec {
                in_channels: ch(k + 1),
                out_channels: ch(k),
                kernel: up_kernel.clone(),
                stride: up_stride.clone(),
                padding: up_pad.clone(),
            };
            ups.push(b.up(&format!("up{k}"), spec));
            decoder.push(b.unit(&format!("dec{k}"), ConvSpec::same(2 * ch(k), ch(k), &kernel)));
        }
        let out_spec = ConvSpec::same(ch(0), cin, &point);
        let out_w = b.push(
            "out.w".into(),
            zeros_like_mode(out_spec.weight_shape().dims(), config.is_complex()),
        );
        let out_b = b.filled("out.b".into(), cin, 0.0);
        let out = Up {
            spec: out_spec,
            w: out_w,
            b: out_b,
        };
        Ok(Network {
            config: config.clone(),
            params: b.params,
            running: b.running,
            encoder,
            ups,
            decoder,
            out,
            pool,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn param_values(&self) -> Vec<Tensor> {
        self.params.iter().map(|p| p.value.clone()).collect()
    }

    /// Replace every parameter value; shapes and real/complex flags must match.
    pub fn set_param_values(&mut self, values: Vec<Tensor>) -> Result<()> {
        if values.len() != self.params.len() {
            return Err(UnetError::Config(format!(
                "{} parameter values for {} parameters",
                values.len(),
                self.params.len()
            )));
        }
        for (p, v) in self.params.iter().zip(&values) {
            if p.value.shape() != v.shape() || p.value.is_real() != v.is_real() {
                return Err(UnetError::Config(format!(
                    "parameter {} expects shape {} ({}), got {} ({})",
                    p.name,
                    p.value.shape(),
                    flag(&p.value),
                    v.shape(),
                    flag(v)
                )));
            }
        }
        for (p, v) in self.params.iter_mut().zip(values) {
            p.value = v;
        }
        Ok(())
    }

    pub fn running_stats(&self) -> &[RunningStats] {
        &self.running
    }

    pub fn set_running_stats(&mut self, stats: Vec<RunningStats>) -> Result<()> {
        if stats.len() != self.running.len()
            || stats
                .iter()
                .zip(&self.running)
                .any(|(a, b)| a.mean.shape() != b.mean.shape() || a.mean.is_real() != b.mean.is_real())
        {
            return Err(UnetError::Config("running statistics do not match the network".into()));
        }
        self.running = stats;
        Ok(())
    }

    /// Fold batch statistics from a training step into the running estimates.
    pub fn update_running_stats(&mut self, batch: &[BatchStats]) -> Result<()> {
        if batch.len() != self.running.len() {
            return Err(UnetError::Config("batch statistics do not match the network".into()));
        }
        for (r, b) in self.running.iter_mut().zip(batch) {
            r.update(b, DEFAULT_MOMENTUM)?;
        }
        Ok(())
    }

    /// Learnable real scalars; complex entries count twice.
    pub fn count_parameters(&self) -> usize {
        self.params
            .iter()
            .map(|p| p.value.numel() * if p.value.is_real() { 1 } else { 2 })
            .sum()
    }

    /// Register every parameter on `g` as `ParamId(index)`.
    pub fn bind<'g>(&self, g: &'g Graph) -> Vec<Var<'g>> {
        self.params
            .iter()
            .enumerate()
            .map(|(i, p)| g.param(ParamId(i), p.value.clone()))
            .collect()
    }

    /// Register every parameter as a constant (inference).
    pub fn bind_constants<'g>(&self, g: &'g Graph) -> Vec<Var<'g>> {
        self.params.iter().map(|p| g.constant(p.value.clone())).collect()
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let c = &self.config;
        let dims = x.dims();
        let rank = if c.dim == Dim::D2 { 4 } else { 5 };
        let ok = dims.len() == rank
            && dims[1] == c.input_channels()
            && (c.dim == Dim::D2 || Some(dims[2]) == c.slice_planes())
            && dims[0] > 0
            && dims[rank - 2] > 0
            && dims[rank - 1] > 0;
        if !ok {
            return Err(UnetError::Shape(format!(
                "{} expects input {:?} (batch, h, w free), got {:?}",
                c.name(),
                c.input_shape(0, 0, 0),
                dims
            )));
        }
        if c.is_complex() == x.is_real() {
            return Err(UnetError::Shape(format!(
                "{} expects {} input, got {}",
                c.name(),
                if c.is_complex() { "complex" } else { "real" },
                flag(x)
            )));
        }
        Ok(())
    }

    fn unit<'g>(
        &self,
        p: &[Var<'g>],
        u: &Unit,
        x: Var<'g>,
        train: bool,
        stats: &mut Vec<BatchStats>,
    ) -> Result<Var<'g>> {
        let h = conv(x, p[u.w], Some(p[u.b]), &u.spec)?;
        let mode = if train {
            Mode::Train
        } else {
            Mode::Eval(&self.running[u.bn])
        };
        let (h, s) = batch_norm(h, p[u.gamma], p[u.beta], mode, DEFAULT_EPS)?;
        stats.extend(s);
        Ok(match u.act {
            Some(a) => mod_relu(h, p[a])?,
            None => relu(h)?,
        })
    }

    /// `prediction = x + correction(x)`. In-plane extents that are not a
    /// multiple of `2^(depth-1)` are zero-padded symmetrically and cropped.
    ///
    /// `params` must come from [`Network::bind`] or
    /// [`Network::bind_constants`]. `rng` drives dropout in training mode.
    pub fn forward<'g>(
        &self,
        params: &[Var<'g>],
        x: Var<'g>,
        train: bool,
        rng: &mut dyn RngCore,
    ) -> Result<Forward<'g>> {
        if params.len() != self.params.len() {
            return Err(UnetError::Config("parameter binding does not match the network".into()));
        }
        let xv = x.value();
        self.check_input(&xv)?;
        let rank = xv.shape().rank();
        let m = self.config.size_multiple();
        let mut pads = vec![(0, 0); rank];
        for (axis, pad) in pads.iter_mut().enumerate().skip(rank - 2) {
            let n = xv.dims()[axis];
            let extra = n.div_ceil(m) * m - n;
            *pad = (extra / 2, extra - extra / 2);
        }
        let padded = pads.iter().any(|&(a, b)| a + b > 0);
        let input = if padded { x.pad(&pads)? } else { x };

        let mut stats = Vec::with_capacity(self.running.len());
        let mut skips = Vec::with_capacity(self.config.depth);
        let mut h = input;
        for (k, u) in self.encoder.iter().enumerate() {
            if k > 0 {
                h = if self.config.is_complex() {
                    magnitude_max_pool(h, &self.pool)?
                } else {
                    max_pool(h, &self.pool)?
                };
            }
            h = self.unit(params, u, h, train, &mut stats)?;
            skips.push(h);
        }
        if self.config.dropout > 0.0 {
            h = complex_dropout(h, self.config.dropout, train, rng)?;
        }
        // decoder stats follow encoder stats in `running` order
        for (i, (up, u)) in self.ups.iter().zip(&self.decoder).enumerate() {
            let level = self.config.depth - 2 - i;
            let t = transpose_conv(h, params[up.w], Some(params[up.b]), &up.spec)?;
            h = Var::concat(&[skips[level], t], 1)?;
            h = self.unit(params, u, h, train, &mut stats)?;
        }
        let mut correction = conv(h, params[self.out.w], Some(params[self.out.b]), &self.out.spec)?;
        if padded {
            for (axis, &(before, _)) in pads.iter().enumerate().skip(rank - 2) {
                correction = correction.narrow(axis, before, xv.dims()[axis])?;
            }
        }
        Ok(Forward {
            prediction: x.add(correction)?,
            batch_stats: stats,
        })
    }

    /// Evaluation-mode prediction without gradient tracking.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        let g = Graph::new();
        let p = self.bind_constants(&g);
        // dropout is inactive in evaluation mode; the generator is never drawn from
        let mut unused = ChaCha8Rng::seed_from_u64(0);
        Ok(self.forward(&p, g.constant(x.clone()), false, &mut unused)?.prediction.value())
    }
}

fn zeros_like_mode(dims: &[usize], complex: bool) -> Tensor {
    if complex {
        Tensor::zeros_complex(dims.to_vec())
    } else {
        Tensor::zeros(dims.to_vec())
    }
}

fn flag(t: &Tensor) -> &'static str {
    if t.is_real() {
        "real"
    } else {
        "complex"
    }
}

/// Parameter count of a freshly built network for `config`.
pub fn count_parameters(config: &ModelConfig) -> Result<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    Ok(Network::build(config, &mut rng)?.count_parameters())
}
