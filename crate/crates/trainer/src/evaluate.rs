//! Test-split evaluation: inference, de-normalisation, DTI fitting and the
//! seven image and map metrics per slice.

use std::path::Path;

use smsnet_dti::{compute_maps, fit_tensors, DiffusionProtocol, MapSet};
use smsnet_eval::{maae, mae, map_mae, psnr, ssim, Metric, RunMetrics, SliceMetrics, SsimParams};
use smsnet_sim::{Dataset, GroupData, Split};
use smsnet_tensor::Tensor;
use smsnet_unet::{checkpoint, Network};

use crate::data::{denormalize, normalize, stack, Codec};
use crate::Result;

/// Scanner long axis; slices are stacked along z.
pub const LONG_AXIS: [f64; 3] = [0.0, 0.0, 1.0];

/// Magnitude images of one slice, one per acquisition, on the acquired
/// scale, with the normalisation scale of each acquisition.
#[derive(Clone, Debug)]
pub struct SliceImages {
    pub id: String,
    pub mask: Vec<bool>,
    pub height: usize,
    pub width: usize,
    pub images: Vec<Tensor>,
    pub scales: Vec<f64>,
}

impl SliceImages {
    pub fn maps(&self, protocol: &DiffusionProtocol) -> Result<MapSet> {
        let planes: Vec<&[f64]> = self.images.iter().map(|t| t.re()).collect();
        let field = fit_tensors(&planes, self.height, self.width, protocol)?;
        Ok(compute_maps(&field, &self.mask, LONG_AXIS)?)
    }
}

/// Predicted, clean and corrupted magnitudes of every slice of a group.
#[derive(Clone, Debug)]
pub struct GroupImages {
    pub predicted: Vec<SliceImages>,
    pub clean: Vec<SliceImages>,
    pub corrupted: Vec<SliceImages>,
}

pub fn slice_id(heart: usize, slice: usize) -> String {
    format!("h{heart:02}-z{slice:02}")
}

fn magnitude_planes(t: &Tensor) -> Result<Vec<Tensor>> {
    let d = t.dims();
    let (h, w) = (d[d.len() - 2], d[d.len() - 1]);
    let m = t.magnitude();
    Ok(m.re()
        .chunks(h * w)
        .map(|p| Tensor::real([h, w], p.to_vec()))
        .collect::<std::result::Result<_, _>>()?)
}

/// Runs the network over every acquisition of `group`.
pub fn predict_group(net: &Network, codec: &Codec, group: &GroupData, batch: usize) -> Result<GroupImages> {
    let d = group.corrupted.dims();
    let (n_acq, sms, h, w) = (d[0], d[1], d[2], d[3]);
    let mk = |s: usize| SliceImages {
        id: slice_id(group.heart, group.slices[s]),
        mask: group.mask_of(s),
        height: h,
        width: w,
        images: Vec::with_capacity(n_acq),
        scales: Vec::with_capacity(n_acq),
    };
    let mut out = GroupImages {
        predicted: (0..sms).map(mk).collect(),
        clean: (0..sms).map(mk).collect(),
        corrupted: (0..sms).map(mk).collect(),
    };
    let items = codec.items(sms);
    let mut predicted: Vec<Vec<Option<Tensor>>> = vec![vec![None; sms]; n_acq];
    let mut jobs = Vec::new();
    for a in 0..n_acq {
        let sample = group.sample(a)?;
        for (s, (c, x)) in magnitude_planes(&sample.clean)?
            .into_iter()
            .zip(magnitude_planes(&sample.corrupted)?)
            .enumerate()
        {
            out.clean[s].images.push(c);
            out.corrupted[s].images.push(x);
        }
        match normalize(&sample) {
            Some((norm, scale)) => {
                for item in &items {
                    jobs.push((a, scale, item.clone(), codec.encode(&norm.corrupted, item)?));
                }
                for s in 0..sms {
                    for set in [&mut out.predicted[s], &mut out.clean[s], &mut out.corrupted[s]] {
                        set.scales.push(scale);
                    }
                }
            }
            None => {
                // nothing to correct: the prediction is the (zero) input
                for s in 0..sms {
                    predicted[a][s] = Some(Tensor::zeros([h, w]));
                    for set in [&mut out.predicted[s], &mut out.clean[s], &mut out.corrupted[s]] {
                        set.scales.push(1.0);
                    }
                }
            }
        }
    }
    for chunk in jobs.chunks(batch.max(1)) {
        let inputs: Vec<Tensor> = chunk.iter().map(|j| j.3.clone()).collect();
        let y = net.predict(&stack(&inputs)?)?;
        let per = y.numel() / chunk.len();
        for (k, (a, scale, item, x)) in chunk.iter().enumerate() {
            let one = Tensor::from_parts(
                x.shape().clone(),
                y.re()[k * per..(k + 1) * per].to_vec(),
                y.im().map(|im| im[k * per..(k + 1) * per].to_vec()),
            )?;
            for (s, m) in item.0.iter().zip(codec.decode_magnitudes(&one, item)?) {
                predicted[*a][*s] = Some(denormalize(&m, *scale));
            }
        }
    }
    for row in predicted {
        for (s, p) in row.into_iter().enumerate() {
            out.predicted[s].images.push(p.expect("every slice is predicted"));
        }
    }
    Ok(out)
}

fn or_nan<T>(r: smsnet_eval::Result<T>, f: impl Fn(T) -> f64) -> f64 {
    r.map(f).unwrap_or(f64::NAN)
}

/// The seven metrics of `x` against the reference `y`. Image metrics are
/// averaged over acquisitions on the normalised scale; map metrics compare
/// tensors fitted to all acquisitions inside the mask.
pub fn score_slice(x: &SliceImages, y: &SliceImages, protocol: &DiffusionProtocol) -> Result<SliceMetrics> {
    let mut m = SliceMetrics::new(x.id.clone());
    let n = x.images.len().max(1) as f64;
    let (mut e, mut p, mut s) = (0.0, 0.0, 0.0);
    let params = SsimParams::default();
    for ((a, b), &k) in x.images.iter().zip(&y.images).zip(&y.scales) {
        let (a, b) = (a.scale(1.0 / k), b.scale(1.0 / k));
        e += mae(&a, &b, None)?;
        p += or_nan(psnr(&a, &b), |v| v);
        s += or_nan(ssim(&a, &b, &params), |v| v.value);
    }
    m.set(Metric::Mae, e / n);
    m.set(Metric::Psnr, p / n);
    m.set(Metric::Ssim, s / n);
    match (x.maps(protocol), y.maps(protocol)) {
        (Ok(mx), Ok(my)) => {
            let mask = &y.mask;
            m.set(Metric::Ha, or_nan(maae(&mx.ha, &my.ha, mask), |v| v));
            m.set(Metric::E2a, or_nan(maae(&mx.e2a, &my.e2a, mask), |v| v));
            m.set(Metric::Md, or_nan(map_mae(&mx.md, &my.md, mask), |v| v));
            m.set(Metric::Fa, or_nan(map_mae(&mx.fa, &my.fa, mask), |v| v));
        }
        _ => {
            for k in [Metric::Ha, Metric::E2a, Metric::Md, Metric::Fa] {
                m.set(k, f64::NAN);
            }
        }
    }
    Ok(m)
}

/// Scores of a model and of the identity baseline on one split.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub model: RunMetrics,
    pub baseline: RunMetrics,
}

pub fn evaluate(net: &Network, codec: &Codec, dataset: &Dataset, split: Split, batch: usize) -> Result<Evaluation> {
    let protocol = dataset.protocol()?;
    let (mut model, mut baseline) = (Vec::new(), Vec::new());
    for group in dataset.groups(split)? {
        let g = predict_group(net, codec, &group, batch)?;
        for s in 0..g.clean.len() {
            model.push(score_slice(&g.predicted[s], &g.clean[s], &protocol)?);
            baseline.push(score_slice(&g.corrupted[s], &g.clean[s], &protocol)?);
        }
    }
    let name = net.config().name();
    Ok(Evaluation {
        model: RunMetrics::new(name, model),
        baseline: RunMetrics::new("Input (uncorrected)", baseline),
    })
}

/// Loads a checkpoint directory and evaluates it.
pub fn evaluate_checkpoint(dir: &Path, dataset: &Dataset, split: Split, phase_in_loss: bool) -> Result<Evaluation> {
    let (net, _) = checkpoint::load(dir)?;
    let codec = Codec::new(net.config(), phase_in_loss);
    evaluate(&net, &codec, dataset, split, 16)
}
