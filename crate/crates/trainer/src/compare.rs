//! Trains and evaluates a list of model variants on one dataset and writes
//! the ranked comparison.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use smsnet_eval::{MetricReport, RunMetrics};
use smsnet_sim::{Dataset, Split};
use smsnet_unet::{checkpoint, ModelConfig};

use crate::config::TrainConfig;
use crate::data::Codec;
use crate::evaluate::{evaluate, Evaluation};
use crate::train::{train, RunRecord};
use crate::Result;

pub const REPORT_FILE: &str = "report.md";

/// Outcome of one variant.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub name: String,
    pub run_dir: PathBuf,
    pub record: Option<RunRecord>,
    pub evaluation: Option<Evaluation>,
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct Comparison {
    pub outcomes: Vec<RunOutcome>,
    pub report: MetricReport,
}

impl Comparison {
    pub fn seconds_per_epoch(&self, name: &str) -> Option<f64> {
        self.outcomes
            .iter()
            .find(|o| o.name == name)
            .and_then(|o| o.record.as_ref())
            .map(RunRecord::seconds_per_epoch)
    }
}

/// Markdown report of one run: the model row under the identity baseline.
pub fn run_report(record: &RunRecord, eval: &Evaluation) -> String {
    let report = MetricReport {
        runs: vec![eval.model.clone()],
        baseline: Some(eval.baseline.clone()),
        extra_columns: vec![],
    };
    let mut out = format!("# {}\n\n", record.model);
    let _ = writeln!(out, "- parameters: {}", record.parameters);
    let _ = writeln!(
        out,
        "- best epoch: {} (validation MAE {:.6}, identity {:.6})",
        record.best_epoch, record.best_val_mae, record.baseline_val_mae
    );
    let _ = writeln!(out, "- seconds per epoch: {:.2}\n", record.seconds_per_epoch());
    out.push_str("Test split, median [IQR] over slices:\n\n");
    out.push_str(&report.to_markdown());
    out
}

/// Trains `base` with its model replaced by each of `models`, evaluates the
/// best checkpoint on the test split and writes `report.md`, `metrics.csv`,
/// `pvalues.csv` and `timing.csv` under `root`. A failing variant is noted
/// in the report and does not stop the others.
pub fn compare(
    dataset: &Dataset,
    base: &TrainConfig,
    models: &[ModelConfig],
    root: &Path,
    mut progress: impl FnMut(&str),
) -> Result<Comparison> {
    fs::create_dir_all(root)?;
    let mut outcomes = Vec::with_capacity(models.len());
    for m in models {
        let name = m.name();
        progress(&name);
        let config = TrainConfig {
            model: name.clone(),
            ..base.clone()
        };
        let run_dir = root.join(&name);
        let result = train(dataset, &config, &run_dir).and_then(|record| {
            let (net, _) = checkpoint::load(&record.checkpoint)?;
            let codec = Codec::new(net.config(), config.phase_in_loss);
            let eval = evaluate(&net, &codec, dataset, Split::Test, config.batch_size)?;
            fs::write(run_dir.join(REPORT_FILE), run_report(&record, &eval))?;
            Ok((record, eval))
        });
        outcomes.push(match result {
            Ok((record, eval)) => RunOutcome {
                name,
                run_dir,
                record: Some(record),
                evaluation: Some(eval),
                error: None,
            },
            Err(e) => RunOutcome {
                name,
                run_dir,
                record: None,
                evaluation: None,
                error: Some(e.to_string()),
            },
        });
    }

    let mut runs = Vec::with_capacity(outcomes.len());
    let mut baseline = None;
    for o in &outcomes {
        let mut r = match (&o.evaluation, &o.error) {
            (Some(e), _) => {
                baseline.get_or_insert_with(|| e.baseline.clone());
                e.model.clone()
            }
            (None, err) => RunMetrics::failed(&o.name, err.clone().unwrap_or_default()),
        };
        r.extra = match &o.record {
            Some(rec) => vec![rec.parameters.to_string(), format!("{:.2}", rec.seconds_per_epoch())],
            None => vec![String::new(), String::new()],
        };
        runs.push(r);
    }
    if let Some(b) = baseline.as_mut() {
        b.extra = vec![String::new(), String::new()];
    }
    let report = MetricReport {
        runs,
        baseline,
        extra_columns: vec!["Params".into(), "s/epoch".into()],
    };

    let mut md = String::from("# Model comparison\n\nTest split, median [IQR] over slices. ");
    md.push_str("Best per column in bold, second underlined.\n\n");
    md.push_str(&report.to_markdown());
    md.push_str("\n## Training time\n\n| Model | s/epoch | relative to 2D-All-Mag |\n|---|---|---|\n");
    let reference = outcomes
        .iter()
        .find(|o| o.name == "2D-All-Mag")
        .and_then(|o| o.record.as_ref())
        .map(RunRecord::seconds_per_epoch);
    for o in &outcomes {
        match &o.record {
            Some(r) => {
                let s = r.seconds_per_epoch();
                let rel = reference.map(|t| format!("{:.2}x", s / t)).unwrap_or_else(|| "n/a".into());
                let _ = writeln!(md, "| {} | {s:.2} | {rel} |", o.name);
            }
            None => {
                let _ = writeln!(md, "| {} | failed | |", o.name);
            }
        }
    }
    fs::write(root.join(REPORT_FILE), md)?;
    report.write_csv(fs::File::create(root.join("metrics.csv"))?)?;
    report.write_p_values_csv(fs::File::create(root.join("pvalues.csv"))?)?;
    let mut w = csv::Writer::from_path(root.join("timing.csv"))?;
    w.write_record(["run", "epoch", "seconds"])?;
    for o in &outcomes {
        for e in o.record.iter().flat_map(|r| &r.epochs) {
            w.write_record([o.name.clone(), e.epoch.to_string(), format!("{:.3}", e.seconds)])?;
        }
    }
    w.flush()?;
    Ok(Comparison { outcomes, report })
}
