//! Sample preparation: magnitude normalisation, 90° augmentation and the
//! encoding of complex slice groups into network inputs for each variant.

use rand::Rng;
use smsnet_nn::{l1, magnitude_loss, Norm};
use smsnet_sim::Sample;
use smsnet_tensor::ops::concat_values;
use smsnet_tensor::{Complex64, Tensor, Var};
use smsnet_unet::{DataMode, Dim, ModelConfig, SliceMode};

use crate::Result;

/// Divide both groups by the largest corrupted magnitude so the input lies in
/// `[0, 1]`; returns the scale, or `None` for an all-zero input.
pub fn normalize(sample: &Sample) -> Option<(Sample, f64)> {
    let scale = sample.corrupted.magnitude().max_abs();
    if !(scale > 0.0 && scale.is_finite()) {
        return None;
    }
    let k = 1.0 / scale;
    Some((
        Sample {
            corrupted: sample.corrupted.scale(k),
            clean: sample.clean.scale(k),
            ..sample.clone()
        },
        scale,
    ))
}

pub fn denormalize(t: &Tensor, scale: f64) -> Tensor {
    t.scale(scale)
}

/// Rotation by `quarter_turns * 90°` followed by optional flips, acting on
/// the last two axes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Augmentation {
    pub quarter_turns: u8,
    pub flip_h: bool,
    pub flip_v: bool,
}

impl Augmentation {
    pub fn draw<R: Rng + ?Sized>(rng: &mut R, rotate: bool, flip: bool) -> Self {
        // draws are made unconditionally so switches do not shift the stream
        let k = rng.random_range(0..4u8);
        let (h, v) = (rng.random::<bool>(), rng.random::<bool>());
        Augmentation {
            quarter_turns: if rotate { k } else { 0 },
            flip_h: flip && h,
            flip_v: flip && v,
        }
    }

    pub fn apply(&self, t: &Tensor) -> Tensor {
        let mut out = t.clone();
        for _ in 0..self.quarter_turns % 4 {
            out = rot90(&out);
        }
        if self.flip_h {
            out = flip(&out, true);
        }
        if self.flip_v {
            out = flip(&out, false);
        }
        out
    }

    pub fn apply_sample(&self, s: &Sample) -> Sample {
        Sample {
            corrupted: self.apply(&s.corrupted),
            clean: self.apply(&s.clean),
            ..s.clone()
        }
    }
}

fn planes(t: &Tensor) -> (usize, usize, usize) {
    let d = t.dims();
    let (h, w) = (d[d.len() - 2], d[d.len() - 1]);
    (t.numel() / (h * w), h, w)
}

fn remap(t: &Tensor, dims: Vec<usize>, src: impl Fn(usize, usize) -> usize) -> Tensor {
    let (n, h, w) = planes(t);
    let (oh, ow) = (dims[dims.len() - 2], dims[dims.len() - 1]);
    let gather = |plane: &[f64]| {
        let mut out = Vec::with_capacity(plane.len());
        for p in 0..n {
            for r in 0..oh {
                for c in 0..ow {
                    out.push(plane[p * h * w + src(r, c)]);
                }
            }
        }
        out
    };
    Tensor::from_parts(dims.into(), gather(t.re()), t.im().map(gather)).expect("same element count")
}

/// Counter-clockwise quarter turn of the trailing `[h, w]` plane.
pub fn rot90(t: &Tensor) -> Tensor {
    let (_, _, w) = planes(t);
    let mut dims = t.dims().to_vec();
    let r = dims.len();
    dims.swap(r - 2, r - 1);
    // out[r][c] = in[c][w - 1 - r], out is w x h
    remap(t, dims, |r, c| c * w + (w - 1 - r))
}

/// Mirror columns (`horizontal`) or rows.
pub fn flip(t: &Tensor, horizontal: bool) -> Tensor {
    let (_, h, w) = planes(t);
    let dims = t.dims().to_vec();
    if horizontal {
        remap(t, dims, |r, c| r * w + (w - 1 - c))
    } else {
        remap(t, dims, |r, c| (h - 1 - r) * w + c)
    }
}

/// Which slices of a group one network item covers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ItemSlices(pub Vec<usize>);

/// Encodes slice groups for one model variant and decodes its outputs.
#[derive(Clone, Debug)]
pub struct Codec {
    pub config: ModelConfig,
    pub phase_in_loss: bool,
}

fn complex_planes(t: &Tensor, slices: &[usize]) -> Vec<Vec<Complex64>> {
    let (_, h, w) = planes(t);
    let px = h * w;
    let v = t.to_complex_vec();
    slices.iter().map(|&s| v[s * px..(s + 1) * px].to_vec()).collect()
}

impl Codec {
    pub fn new(config: &ModelConfig, phase_in_loss: bool) -> Self {
        Codec {
            config: config.clone(),
            phase_in_loss,
        }
    }

    /// Slice subsets fed to the network for an `sms`-slice group.
    pub fn items(&self, sms: usize) -> Vec<ItemSlices> {
        match self.config.slice_mode {
            SliceMode::All => vec![ItemSlices((0..sms).collect())],
            SliceMode::Single => (0..sms).map(|s| ItemSlices(vec![s])).collect(),
        }
    }

    /// `[sms, h, w]` complex group -> one batch entry (leading axis 1).
    pub fn encode(&self, group: &Tensor, item: &ItemSlices) -> Result<Tensor> {
        let (_, h, w) = planes(group);
        let z = complex_planes(group, &item.0);
        let cfg = &self.config;
        // channel-major list of planes, each h*w
        let mut re_planes: Vec<Vec<f64>> = Vec::new();
        let mut im_planes: Vec<Vec<f64>> = Vec::new();
        let per_slice: Vec<Vec<(Vec<f64>, Vec<f64>)>> = z
            .iter()
            .map(|p| match cfg.data_mode {
                DataMode::Mag => vec![(p.iter().map(|c| c.norm()).collect(), vec![])],
                DataMode::MagPhs => vec![
                    (p.iter().map(|c| c.norm()).collect(), vec![]),
                    (p.iter().map(|c| c.arg()).collect(), vec![]),
                ],
                DataMode::Comp => vec![(p.iter().map(|c| c.re).collect(), p.iter().map(|c| c.im).collect())],
            })
            .collect();
        let cps = per_slice[0].len();
        match cfg.dim {
            Dim::D2 => {
                for s in &per_slice {
                    for (re, im) in s {
                        re_planes.push(re.clone());
                        im_planes.push(im.clone());
                    }
                }
            }
            Dim::D3 => {
                for c in 0..cps {
                    for s in &per_slice {
                        re_planes.push(s[c].0.clone());
                        im_planes.push(s[c].1.clone());
                    }
                }
            }
        }
        let dims = cfg.input_shape(1, h, w);
        let re = re_planes.concat();
        let t = if cfg.is_complex() {
            Tensor::complex(dims, re, im_planes.concat())?
        } else {
            Tensor::real(dims, re)?
        };
        Ok(t)
    }

    /// Predicted magnitude images of the item's slices, each `[h, w]`.
    pub fn decode_magnitudes(&self, out: &Tensor, item: &ItemSlices) -> Result<Vec<Tensor>> {
        let d = out.dims();
        let (h, w) = (d[d.len() - 2], d[d.len() - 1]);
        let px = h * w;
        let n = item.0.len();
        let cps = if self.config.data_mode == DataMode::MagPhs { 2 } else { 1 };
        let mag = if out.is_real() { out.clone() } else { out.magnitude() };
        (0..n)
            .map(|s| {
                // magnitude channel of slice s
                let plane = match self.config.dim {
                    Dim::D2 => s * cps,
                    Dim::D3 => s,
                };
                let v = mag.re()[plane * px..(plane + 1) * px].to_vec();
                Ok(Tensor::real([h, w], v)?)
            })
            .collect()
    }

    /// Channel planes holding magnitudes (excluding phase planes).
    fn magnitude_channels(&self, n_slices: usize) -> Vec<usize> {
        match (self.config.data_mode, self.config.dim) {
            (DataMode::MagPhs, Dim::D2) => (0..n_slices).map(|s| 2 * s).collect(),
            (DataMode::MagPhs, Dim::D3) => vec![0],
            _ => vec![],
        }
    }

    /// L1 on magnitudes: plain L1 for magnitude inputs, the modulus error for
    /// complex outputs, and magnitude channels only for MagPhs unless phase
    /// is switched in.
    pub fn loss<'g>(&self, pred: Var<'g>, target: Var<'g>, n_slices: usize) -> Result<Var<'g>> {
        Ok(match self.config.data_mode {
            DataMode::Mag => l1(pred, target)?,
            DataMode::Comp => magnitude_loss(pred, target, Norm::L1)?,
            DataMode::MagPhs if self.phase_in_loss => l1(pred, target)?,
            DataMode::MagPhs => {
                let chans = self.magnitude_channels(n_slices);
                let k = chans.len() as f64;
                let mut total: Option<Var<'g>> = None;
                for c in chans {
                    let term = l1(pred.narrow(1, c, 1)?, target.narrow(1, c, 1)?)?;
                    total = Some(match total {
                        None => term,
                        Some(t) => t.add(term)?,
                    });
                }
                total.expect("at least one magnitude channel").scale(1.0 / k)
            }
        })
    }
}

/// Stack batch entries (each with leading axis 1).
pub fn stack(items: &[Tensor]) -> Result<Tensor> {
    Ok(concat_values(items, 0)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample(vals: Vec<Complex64>, dims: [usize; 3]) -> Sample {
        let t = Tensor::from_complex(dims, &vals).unwrap();
        Sample {
            heart: 0,
            group: 0,
            acquisition: 0,
            corrupted: t.clone(),
            clean: t.scale(0.5),
        }
    }

    #[test]
    fn normalisation_scales_magnitude_and_keeps_phase() {
        let v = vec![Complex64::new(0.0, 4.0), Complex64::new(1.0, -1.0)];
        let s = sample(v.clone(), [1, 1, 2]);
        let (n, k) = normalize(&s).unwrap();
        assert_eq!(k, 4.0);
        assert_eq!(n.corrupted.magnitude().max_abs(), 1.0);
        for (a, b) in n.corrupted.to_complex_vec().iter().zip(&v) {
            assert!((a.arg() - b.arg()).abs() < 1e-15);
        }
        assert!(denormalize(&n.corrupted, k).max_abs_diff(&s.corrupted) < 1e-14);
        let zero = sample(vec![Complex64::new(0.0, 0.0); 2], [1, 1, 2]);
        assert!(normalize(&zero).is_none());
    }

    #[test]
    fn augmentation_group_laws() {
        let t = Tensor::real([2, 2, 3], (0..12).map(f64::from).collect()).unwrap();
        let r = rot90(&t);
        assert_eq!(r.dims(), &[2, 3, 2]);
        // top-left after a ccw turn is the old top-right
        assert_eq!(r.re()[0], 2.0);
        let four = (0..4).fold(t.clone(), |a, _| rot90(&a));
        assert!(four.bit_eq(&t));
        assert!(flip(&flip(&t, true), true).bit_eq(&t));
        assert!(flip(&flip(&t, false), false).bit_eq(&t));
        assert!(Augmentation::default().apply(&t).bit_eq(&t));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = Augmentation::draw(&mut rng, false, false);
        assert_eq!(a, Augmentation::default());
    }

    #[test]
    fn encodings_match_model_inputs() {
        let vals: Vec<Complex64> = (0..8).map(|i| Complex64::from_polar(1.0 + i as f64, 0.1 * i as f64)).collect();
        let group = Tensor::from_complex([2, 2, 2], &vals).unwrap();
        for cfg in ModelConfig::all() {
            let codec = Codec::new(&cfg, false);
            for item in codec.items(2) {
                let x = codec.encode(&group, &item).unwrap();
                assert_eq!(x.dims(), cfg.input_shape(1, 2, 2).as_slice(), "{}", cfg.name());
                assert_eq!(x.is_real(), !cfg.is_complex());
                let mags = codec.decode_magnitudes(&x, &item).unwrap();
                for (m, &s) in mags.iter().zip(&item.0) {
                    for p in 0..4 {
                        assert!((m.re()[p] - vals[s * 4 + p].norm()).abs() < 1e-12, "{}", cfg.name());
                    }
                }
            }
        }
    }
}
