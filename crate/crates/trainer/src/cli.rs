//! Command-line interface of the `smsnet` binary.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use smsnet_dti::export::export_maps;
use smsnet_eval::MetricReport;
use smsnet_sim::{build_dataset, Dataset, DatasetParams, Split};
use smsnet_unet::{checkpoint, ModelConfig};

use crate::compare::{compare, run_report, REPORT_FILE};
use crate::config::TrainConfig;
use crate::data::Codec;
use crate::evaluate::{evaluate, predict_group};
use crate::train::train_with;
use crate::{Result, TrainError};

#[derive(Debug, Parser)]
#[command(name = "smsnet", about = "Leakage-artefact removal for SMS cardiac DTI", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a dataset of phantom hearts with interslice leakage.
    Generate(GenerateArgs),
    /// Train one model; writes runs/<name>/{config.toml, checkpoints/, log.csv, report.md}.
    Train(TrainArgs),
    /// Score a checkpoint on a dataset split.
    Evaluate(EvaluateArgs),
    /// Train and evaluate every model variant and write the ranked table.
    Compare(CompareArgs),
    /// Write MD/FA/HA/E2A maps (PNG and tensor files) of a checkpoint's predictions.
    ExportMaps(ExportArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Small 3-heart 32x32 preset.
    #[arg(long)]
    pub smoke: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub hearts: Option<usize>,
    /// In-plane size (square).
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub slices: Option<usize>,
    #[arg(long)]
    pub sms: Option<usize>,
    #[arg(long)]
    pub directions: Option<usize>,
    #[arg(long)]
    pub bvalue: Option<f64>,
    #[arg(long)]
    pub alpha_min: Option<f64>,
    #[arg(long)]
    pub alpha_max: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
}

/// Overrides of [`TrainConfig`] fields; unset flags keep the file or default value.
#[derive(Debug, Args, Default)]
pub struct ConfigArgs {
    /// TOML config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Workstation preset: 20 epochs with the lr drop after 10.
    #[arg(long)]
    pub desk: bool,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub base_channels: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub lr_drop_epoch: Option<usize>,
    #[arg(long)]
    pub lr_drop_factor: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub phase_in_loss: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub no_rotate: bool,
    #[arg(long)]
    pub no_flip: bool,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<TrainConfig> {
        let mut c = match (&self.config, self.desk) {
            (Some(p), _) => TrainConfig::load(p)?,
            (None, true) => TrainConfig::desk(),
            (None, false) => TrainConfig::default(),
        };
        if self.config.is_some() && self.desk {
            let d = TrainConfig::desk();
            c.epochs = d.epochs;
            c.lr_drop_epoch = d.lr_drop_epoch;
        }
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = self.$f.clone() { c.$f = v; })*};
        }
        set!(model, epochs, lr, lr_drop_epoch, lr_drop_factor, batch_size, seed);
        if self.base_channels.is_some() {
            c.base_channels = self.base_channels;
        }
        if self.depth.is_some() {
            c.depth = self.depth;
        }
        if self.dropout.is_some() {
            c.dropout = self.dropout;
        }
        c.phase_in_loss |= self.phase_in_loss;
        c.augment.rotate &= !self.no_rotate;
        c.augment.flip &= !self.no_flip;
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "runs")]
    pub runs: PathBuf,
    /// Run name; defaults to the model name.
    #[arg(long)]
    pub name: Option<String>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "test", value_parser = parse_split)]
    pub split: Split,
    /// Markdown output; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-slice metrics CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "runs/compare")]
    pub out: PathBuf,
    /// Comma-separated subset of model names; all twelve by default.
    #[arg(long, value_delimiter = ',')]
    pub models: Vec<String>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "test", value_parser = parse_split)]
    pub split: Split,
}

fn parse_split(s: &str) -> std::result::Result<Split, String> {
    match s {
        "train" => Ok(Split::Train),
        "val" => Ok(Split::Val),
        "test" => Ok(Split::Test),
        _ => Err(format!("unknown split {s:?} (train, val or test)")),
    }
}

fn open(dir: &Path) -> Result<Dataset> {
    Dataset::open(dir).map_err(|e| TrainError::Config(format!("cannot open dataset: {e}")))
}

fn load_checkpoint(dir: &Path) -> Result<(smsnet_unet::Network, Codec)> {
    let (net, _) = checkpoint::load(dir).map_err(|e| TrainError::Config(format!("cannot load checkpoint: {e}")))?;
    // the phase switch only affects training
    let codec = Codec::new(net.config(), false);
    Ok((net, codec))
}

fn generate(a: &GenerateArgs) -> Result<()> {
    let mut p = if a.smoke { DatasetParams::smoke() } else { DatasetParams::default() };
    macro_rules! set {
        ($($arg:ident => $f:ident),*) => {$(if let Some(v) = a.$arg { p.$f = v; })*};
    }
    set!(seed => seed, hearts => hearts, slices => slices_per_heart, sms => sms_factor,
         directions => directions, bvalue => bvalue, alpha_min => alpha_min,
         alpha_max => alpha_max, sigma => sigma);
    if let Some(s) = a.size {
        p.height = s;
        p.width = s;
    }
    let m = build_dataset(&a.out, &p)?;
    println!(
        "wrote {} hearts ({} acquisitions per slice group) to {}",
        m.hearts.len(),
        m.acquisitions,
        a.out.display()
    );
    Ok(())
}

fn run_train(a: &TrainArgs) -> Result<()> {
    let config = a.config.resolve()?;
    let dataset = open(&a.data)?;
    let name = a.name.clone().unwrap_or_else(|| config.model.clone());
    let dir = a.runs.join(&name);
    let record = train_with(&dataset, &config, &dir, |e| {
        println!(
            "epoch {:>3}  lr {:.1e}  loss {:.6}  val MAE {:.6}  {:.1}s",
            e.epoch, e.lr, e.train_loss, e.val_mae, e.seconds
        );
    })?;
    let (net, codec) = load_checkpoint(&record.checkpoint)?;
    let eval = evaluate(&net, &codec, &dataset, Split::Test, config.batch_size)?;
    fs::write(dir.join(REPORT_FILE), run_report(&record, &eval))?;
    println!(
        "best epoch {} (val MAE {:.6}, identity {:.6}); report in {}",
        record.best_epoch,
        record.best_val_mae,
        record.baseline_val_mae,
        dir.join(REPORT_FILE).display()
    );
    Ok(())
}

fn run_evaluate(a: &EvaluateArgs) -> Result<()> {
    let dataset = open(&a.data)?;
    let (net, codec) = load_checkpoint(&a.checkpoint)?;
    let eval = evaluate(&net, &codec, &dataset, a.split, 16)?;
    let report = MetricReport {
        runs: vec![eval.model],
        baseline: Some(eval.baseline),
        extra_columns: vec![],
    };
    let md = report.to_markdown();
    match &a.out {
        Some(p) => fs::write(p, md)?,
        None => print!("{md}"),
    }
    if let Some(p) = &a.csv {
        report.write_csv(fs::File::create(p)?)?;
    }
    Ok(())
}

fn run_compare(a: &CompareArgs) -> Result<()> {
    let config = a.config.resolve()?;
    let dataset = open(&a.data)?;
    let models = if a.models.is_empty() {
        ModelConfig::all()
    } else {
        a.models
            .iter()
            .map(|m| m.parse::<ModelConfig>().map_err(TrainError::from))
            .collect::<Result<Vec<_>>>()?
    };
    let cmp = compare(&dataset, &config, &models, &a.out, |name| println!("== {name}"))?;
    for o in &cmp.outcomes {
        if let Some(e) = &o.error {
            eprintln!("{} failed: {e}", o.name);
        }
    }
    println!("report in {}", a.out.join(REPORT_FILE).display());
    Ok(())
}

fn run_export(a: &ExportArgs) -> Result<()> {
    let dataset = open(&a.data)?;
    let (net, codec) = load_checkpoint(&a.checkpoint)?;
    let protocol = dataset.protocol()?;
    let mut n = 0;
    for group in dataset.groups(a.split)? {
        let g = predict_group(&net, &codec, &group, 16)?;
        for s in 0..g.clean.len() {
            for (tag, images) in [("pred", &g.predicted[s]), ("clean", &g.clean[s]), ("input", &g.corrupted[s])] {
                export_maps(&a.out, &format!("{}_{tag}", images.id), &images.maps(&protocol)?)?;
            }
            n += 1;
        }
    }
    println!("wrote maps of {n} slices to {}", a.out.display());
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Generate(a) => generate(a),
        Command::Train(a) => run_train(a),
        Command::Evaluate(a) => run_evaluate(a),
        Command::Compare(a) => run_compare(a),
        Command::ExportMaps(a) => run_export(a),
    }
}

/// Parses the process arguments, runs the command and returns the exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
