//! The training loop: seeded shuffling, augmentation, Adam with a step
//! learning-rate drop, per-epoch validation and best-epoch checkpointing.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use smsnet_sim::{Dataset, Sample, Split};
use smsnet_tensor::{Graph, Tensor};
use smsnet_unet::{checkpoint, Network};

use crate::adam::Adam;
use crate::config::TrainConfig;
use crate::data::{normalize, stack, Augmentation, Codec, ItemSlices};
use crate::{Result, TrainError};

pub const LOG_FILE: &str = "log.csv";
pub const CONFIG_FILE: &str = "config.toml";
pub const BEST: &str = "checkpoints/best";
pub const LAST: &str = "checkpoints/last";

// independent streams drawn from one seed
const STREAM_INIT: u64 = 0;
const STREAM_SHUFFLE: u64 = 1;
const STREAM_DROPOUT: u64 = 2;

pub(crate) fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_mae: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub model: String,
    pub parameters: usize,
    pub epochs: Vec<EpochLog>,
    /// 1-based epoch with the lowest validation MAE.
    pub best_epoch: usize,
    pub best_val_mae: f64,
    /// Validation MAE of the identity model (output = input).
    pub baseline_val_mae: f64,
    pub checkpoint: PathBuf,
}

impl RunRecord {
    pub fn seconds_per_epoch(&self) -> f64 {
        self.epochs.iter().map(|e| e.seconds).sum::<f64>() / self.epochs.len().max(1) as f64
    }
}

/// A normalised training pair.
struct Pair {
    corrupted: Tensor,
    clean: Tensor,
}

fn prepared(samples: Vec<Sample>) -> Vec<Pair> {
    // all-zero groups carry nothing to learn and are skipped
    samples
        .iter()
        .filter_map(normalize)
        .map(|(s, _)| Pair {
            corrupted: s.corrupted,
            clean: s.clean,
        })
        .collect()
}

/// Mean absolute magnitude error between predicted and clean slices of a
/// split, and the same for the identity model.
pub fn validation_mae(net: &Network, codec: &Codec, samples: &[Sample], batch: usize) -> Result<(f64, f64)> {
    let pairs = prepared(samples.to_vec());
    let mut jobs: Vec<(usize, ItemSlices)> = Vec::new();
    for (i, p) in pairs.iter().enumerate() {
        for item in codec.items(p.corrupted.dims()[0]) {
            jobs.push((i, item));
        }
    }
    let (mut err, mut base, mut n) = (0.0, 0.0, 0usize);
    for chunk in jobs.chunks(batch.max(1)) {
        let inputs = chunk
            .iter()
            .map(|(i, item)| codec.encode(&pairs[*i].corrupted, item))
            .collect::<Result<Vec<_>>>()?;
        let out = net.predict(&stack(&inputs)?)?;
        let per = out.numel() / chunk.len();
        for (k, (i, item)) in chunk.iter().enumerate() {
            let one = Tensor::from_parts(
                inputs[k].shape().clone(),
                out.re()[k * per..(k + 1) * per].to_vec(),
                out.im().map(|im| im[k * per..(k + 1) * per].to_vec()),
            )?;
            let pred = codec.decode_magnitudes(&one, item)?;
            let clean = codec.decode_magnitudes(&codec.encode(&pairs[*i].clean, item)?, item)?;
            let input = codec.decode_magnitudes(&inputs[k], item)?;
            for ((p, c), x) in pred.iter().zip(&clean).zip(&input) {
                for ((a, b), z) in p.re().iter().zip(c.re()).zip(x.re()) {
                    err += (a - b).abs();
                    base += (z - b).abs();
                }
                n += c.numel();
            }
        }
    }
    if n == 0 {
        return Err(TrainError::Config("validation split is empty".into()));
    }
    Ok((err / n as f64, base / n as f64))
}

fn write_log(path: &Path, epochs: &[EpochLog]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "lr", "train_loss", "val_mae", "seconds"])?;
    for e in epochs {
        w.write_record([
            e.epoch.to_string(),
            e.lr.to_string(),
            e.train_loss.to_string(),
            e.val_mae.to_string(),
            format!("{:.3}", e.seconds),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Trains `config` on the dataset's training split, writing
/// `config.toml`, `log.csv` and `checkpoints/{best,last}` under `run_dir`.
pub fn train(dataset: &Dataset, config: &TrainConfig, run_dir: &Path) -> Result<RunRecord> {
    train_with(dataset, config, run_dir, |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_with(
    dataset: &Dataset,
    config: &TrainConfig,
    run_dir: &Path,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<RunRecord> {
    config.validate()?;
    let model = config.model_config()?;
    let sms = dataset.manifest.params.sms_factor;
    if model.sms_factor != sms {
        return Err(TrainError::Config(format!(
            "model expects SMS factor {}, dataset has {sms}",
            model.sms_factor
        )));
    }
    fs::create_dir_all(run_dir.join("checkpoints"))?;
    fs::write(run_dir.join(CONFIG_FILE), config.to_toml())?;

    let codec = Codec::new(&model, config.phase_in_loss);
    let train_pairs = prepared(dataset.samples(Split::Train)?);
    let val_samples = dataset.samples(Split::Val)?;
    if train_pairs.is_empty() || val_samples.is_empty() {
        return Err(TrainError::Config("training and validation splits must be non-empty".into()));
    }

    let mut net = Network::build(&model, &mut rng(config.seed, STREAM_INIT))?;
    let mut values = net.param_values();
    let mut adam = Adam::new(&values);
    let mut shuffle = rng(config.seed, STREAM_SHUFFLE);
    let mut dropout = rng(config.seed, STREAM_DROPOUT);

    let mut jobs: Vec<(usize, ItemSlices)> = Vec::new();
    for (i, p) in train_pairs.iter().enumerate() {
        for item in codec.items(p.corrupted.dims()[0]) {
            jobs.push((i, item));
        }
    }

    let (_, baseline) = validation_mae(&net, &codec, &val_samples, config.batch_size)?;
    let mut epochs = Vec::with_capacity(config.epochs);
    let (mut best_epoch, mut best_mae) = (0, f64::INFINITY);
    for epoch in 1..=config.epochs {
        let start = Instant::now();
        let lr = config.lr_at(epoch);
        jobs.shuffle(&mut shuffle);
        let (mut loss_sum, mut steps) = (0.0, 0usize);
        for chunk in jobs.chunks(config.batch_size) {
            // batch normalisation needs two items
            if chunk.len() < 2 {
                continue;
            }
            let mut inputs = Vec::with_capacity(chunk.len());
            let mut targets = Vec::with_capacity(chunk.len());
            for (i, item) in chunk {
                let aug = Augmentation::draw(&mut shuffle, config.augment.rotate, config.augment.flip);
                let p = &train_pairs[*i];
                inputs.push(codec.encode(&aug.apply(&p.corrupted), item)?);
                targets.push(codec.encode(&aug.apply(&p.clean), item)?);
            }
            let g = Graph::new();
            let params = net.bind(&g);
            let x = g.constant(stack(&inputs)?);
            let y = g.constant(stack(&targets)?);
            let fwd = net.forward(&params, x, true, &mut dropout)?;
            let loss = codec.loss(fwd.prediction, y, chunk[0].1 .0.len())?;
            let l = loss.value().item().re;
            if !l.is_finite() {
                return Err(TrainError::Numerical(format!(
                    "loss became {l} in epoch {epoch}; last good weights are in {}",
                    run_dir.join(LAST).display()
                )));
            }
            let grads = g.backward(loss)?;
            adam.step(&mut values, &grads, lr).map_err(|e| match e {
                TrainError::Numerical(m) => TrainError::Numerical(format!("{m} in epoch {epoch}")),
                e => e,
            })?;
            net.set_param_values(values.clone())?;
            net.update_running_stats(&fwd.batch_stats)?;
            loss_sum += l;
            steps += 1;
        }
        let (val_mae, _) = validation_mae(&net, &codec, &val_samples, config.batch_size)?;
        if !val_mae.is_finite() {
            return Err(TrainError::Numerical(format!("validation MAE became {val_mae} in epoch {epoch}")));
        }
        let log = EpochLog {
            epoch,
            lr,
            train_loss: loss_sum / steps.max(1) as f64,
            val_mae,
            seconds: start.elapsed().as_secs_f64(),
        };
        if val_mae < best_mae {
            best_mae = val_mae;
            best_epoch = epoch;
            checkpoint::save(&run_dir.join(BEST), &net, epoch, val_mae)?;
        }
        checkpoint::save(&run_dir.join(LAST), &net, epoch, val_mae)?;
        on_epoch(&log);
        epochs.push(log);
        write_log(&run_dir.join(LOG_FILE), &epochs)?;
    }
    Ok(RunRecord {
        model: model.name(),
        parameters: net.count_parameters(),
        epochs,
        best_epoch,
        best_val_mae: best_mae,
        baseline_val_mae: baseline,
        checkpoint: run_dir.join(BEST),
    })
}
