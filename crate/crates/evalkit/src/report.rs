//! Per-slice metric storage, `median [iqr]` tables and pairwise tests.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use crate::stats::{aggregate, wilcoxon_signed_rank, Summary};
use crate::Result;

/// The seven reported columns: four DTI-map errors then three image metrics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    Ha,
    E2a,
    Md,
    Fa,
    Mae,
    Psnr,
    Ssim,
}

impl Metric {
    pub const ALL: [Metric; 7] = [
        Metric::Ha,
        Metric::E2a,
        Metric::Md,
        Metric::Fa,
        Metric::Mae,
        Metric::Psnr,
        Metric::Ssim,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Metric::Ha => "ha",
            Metric::E2a => "e2a",
            Metric::Md => "md",
            Metric::Fa => "fa",
            Metric::Mae => "mae",
            Metric::Psnr => "psnr",
            Metric::Ssim => "ssim",
        }
    }

    pub fn header(self) -> &'static str {
        match self {
            Metric::Ha => "HA (°)",
            Metric::E2a => "E2A (°)",
            Metric::Md => "MD ×10⁵",
            Metric::Fa => "FA ×10²",
            Metric::Mae => "MAE ×10³",
            Metric::Psnr => "PSNR (dB)",
            Metric::Ssim => "SSIM",
        }
    }

    /// Display scale; stored values are unscaled.
    pub fn scale(self) -> f64 {
        match self {
            Metric::Md => 1e5,
            Metric::Fa => 1e2,
            Metric::Mae => 1e3,
            _ => 1.0,
        }
    }

    pub fn lower_is_better(self) -> bool {
        !matches!(self, Metric::Psnr | Metric::Ssim)
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// One test slice; NaN marks a metric that was undefined for it.
#[derive(Clone, Debug, PartialEq)]
pub struct SliceMetrics {
    pub slice: String,
    pub values: [f64; 7],
}

impl SliceMetrics {
    pub fn new(slice: impl Into<String>) -> Self {
        SliceMetrics {
            slice: slice.into(),
            values: [f64::NAN; 7],
        }
    }

    pub fn get(&self, m: Metric) -> f64 {
        self.values[m.index()]
    }

    pub fn set(&mut self, m: Metric, v: f64) {
        self.values[m.index()] = v;
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunMetrics {
    pub name: String,
    pub slices: Vec<SliceMetrics>,
    /// Set when the run did not produce results; shown instead of numbers.
    pub failure: Option<String>,
    /// Free-form trailing cells matching [`MetricReport::extra_columns`].
    pub extra: Vec<String>,
}

impl RunMetrics {
    pub fn new(name: impl Into<String>, mut slices: Vec<SliceMetrics>) -> Self {
        slices.sort_by(|a, b| a.slice.cmp(&b.slice));
        RunMetrics {
            name: name.into(),
            slices,
            ..Default::default()
        }
    }

    pub fn failed(name: impl Into<String>, reason: impl Into<String>) -> Self {
        RunMetrics {
            name: name.into(),
            failure: Some(reason.into()),
            ..Default::default()
        }
    }

    /// Per-slice values in slice-id order.
    pub fn column(&self, m: Metric) -> Vec<f64> {
        let mut s: Vec<&SliceMetrics> = self.slices.iter().collect();
        s.sort_by(|a, b| a.slice.cmp(&b.slice));
        s.iter().map(|s| s.get(m)).collect()
    }

    pub fn summary(&self, m: Metric) -> Option<Summary> {
        if self.failure.is_some() {
            return None;
        }
        aggregate(&self.column(m)).ok()
    }

    fn by_slice(&self, m: Metric) -> BTreeMap<&str, f64> {
        self.slices
            .iter()
            .filter(|s| !s.get(m).is_nan())
            .map(|s| (s.slice.as_str(), s.get(m)))
            .collect()
    }
}

/// Signed-rank p-value of two runs on one metric, paired by slice id.
pub fn paired_p_value(a: &RunMetrics, b: &RunMetrics, m: Metric) -> Option<f64> {
    let (ma, mb) = (a.by_slice(m), b.by_slice(m));
    let (xs, ys): (Vec<f64>, Vec<f64>) = ma
        .iter()
        .filter_map(|(k, x)| mb.get(k).map(|y| (*x, *y)))
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .unzip();
    wilcoxon_signed_rank(&xs, &ys).ok().map(|w| w.p_value)
}

#[derive(Clone, Debug, Default)]
pub struct MetricReport {
    pub runs: Vec<RunMetrics>,
    /// Uncorrected input scored against the target.
    pub baseline: Option<RunMetrics>,
    pub extra_columns: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Mark {
    None,
    Best,
    Second,
}

fn format_value(m: Metric, v: f64) -> String {
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    match m {
        Metric::Ssim => format!("{v:.3}"),
        _ => format!("{v:.2}"),
    }
}

pub fn format_summary(m: Metric, s: &Summary) -> String {
    let k = m.scale();
    let iqr = if s.iqr().is_nan() { 0.0 } else { s.iqr() * k };
    format!("{} [{}]", format_value(m, s.median * k), format_value(m, iqr))
}

impl MetricReport {
    /// Best and second-best run index per metric (by median; baseline and
    /// failed runs excluded). Ties share the mark.
    fn marks(&self) -> Vec<[Mark; 7]> {
        let mut out = vec![[Mark::None; 7]; self.runs.len()];
        for m in Metric::ALL {
            let mut meds: Vec<f64> = self
                .runs
                .iter()
                .filter_map(|r| r.summary(m).map(|s| s.median))
                .collect();
            meds.sort_by(f64::total_cmp);
            meds.dedup();
            if !m.lower_is_better() {
                meds.reverse();
            }
            for (i, r) in self.runs.iter().enumerate() {
                if let Some(s) = r.summary(m) {
                    if meds.first() == Some(&s.median) {
                        out[i][m.index()] = Mark::Best;
                    } else if meds.get(1) == Some(&s.median) {
                        out[i][m.index()] = Mark::Second;
                    }
                }
            }
        }
        out
    }

    /// Index of the best run for `m`, if any run has a value.
    pub fn best(&self, m: Metric) -> Option<usize> {
        let marks = self.marks();
        (0..self.runs.len()).find(|&i| marks[i][m.index()] == Mark::Best)
    }

    fn header(&self) -> String {
        let mut h = String::from("| Model |");
        for m in Metric::ALL {
            let _ = write!(h, " {} |", m.header());
        }
        for e in &self.extra_columns {
            let _ = write!(h, " {e} |");
        }
        h.push('\n');
        h.push_str(&"|---".repeat(1 + Metric::ALL.len() + self.extra_columns.len()));
        h.push_str("|\n");
        h
    }

    fn row(&self, r: &RunMetrics, marks: Option<&[Mark; 7]>) -> String {
        let mut line = format!("| {} |", r.name);
        if let Some(f) = &r.failure {
            let _ = write!(line, " failed: {f} |");
            line.push_str(&" |".repeat(Metric::ALL.len() - 1));
        } else {
            for m in Metric::ALL {
                let cell = match r.summary(m) {
                    None => "n/a".to_string(),
                    Some(s) => {
                        let text = format_summary(m, &s);
                        match marks.map(|k| k[m.index()]) {
                            Some(Mark::Best) => format!("**{text}**"),
                            Some(Mark::Second) => format!("<u>{text}</u>"),
                            _ => text,
                        }
                    }
                };
                let _ = write!(line, " {cell} |");
            }
        }
        for i in 0..self.extra_columns.len() {
            let _ = write!(line, " {} |", r.extra.get(i).map(String::as_str).unwrap_or(""));
        }
        line.push('\n');
        line
    }

    /// `median [iqr]` table with best in bold and second-best underlined,
    /// followed by signed-rank p-values of every run against the best one.
    pub fn to_markdown(&self) -> String {
        let marks = self.marks();
        let mut out = self.header();
        if let Some(b) = &self.baseline {
            out.push_str(&self.row(b, None));
        }
        for (r, k) in self.runs.iter().zip(&marks) {
            out.push_str(&self.row(r, Some(k)));
        }
        if self.runs.len() > 1 {
            out.push_str("\nWilcoxon signed-rank p-values against the best run per column:\n\n");
            out.push_str("| Model |");
            for m in Metric::ALL {
                let _ = write!(out, " {} |", m.header());
            }
            out.push('\n');
            out.push_str(&"|---".repeat(1 + Metric::ALL.len()));
            out.push_str("|\n");
            for (i, r) in self.runs.iter().enumerate() {
                let _ = write!(out, "| {} |", r.name);
                for m in Metric::ALL {
                    let cell = match self.best(m) {
                        Some(b) if b == i => "best".to_string(),
                        Some(b) => paired_p_value(r, &self.runs[b], m)
                            .map(|p| format!("{p:.4}"))
                            .unwrap_or_else(|| "n/a".into()),
                        None => "n/a".into(),
                    };
                    let _ = write!(out, " {cell} |");
                }
                out.push('\n');
            }
        }
        out
    }

    /// One row per run, slice and metric, unscaled.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["run", "slice", "metric", "value"])?;
        for r in self.baseline.iter().chain(&self.runs) {
            for s in &r.slices {
                for m in Metric::ALL {
                    csv.write_record([&r.name, &s.slice, m.key(), &s.get(m).to_string()])?;
                }
            }
        }
        csv.flush()?;
        Ok(())
    }

    /// Every unordered pair of runs on every metric.
    pub fn write_p_values_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["metric", "run_a", "run_b", "p_value"])?;
        for m in Metric::ALL {
            for i in 0..self.runs.len() {
                for j in i + 1..self.runs.len() {
                    let p = paired_p_value(&self.runs[i], &self.runs[j], m)
                        .map(|p| p.to_string())
                        .unwrap_or_default();
                    csv.write_record([m.key(), &self.runs[i].name, &self.runs[j].name, &p])?;
                }
            }
        }
        csv.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(name: &str, mae: &[f64]) -> RunMetrics {
        let slices = mae
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let mut s = SliceMetrics::new(format!("s{i}"));
                s.set(Metric::Mae, v);
                s.set(Metric::Ssim, 1.0 - v);
                s
            })
            .collect();
        RunMetrics::new(name, slices)
    }

    #[test]
    fn marks_follow_metric_direction() {
        let report = MetricReport {
            runs: vec![
                run("a", &[0.003, 0.004, 0.005]),
                run("b", &[0.001, 0.002, 0.003]),
                run("c", &[0.002, 0.003, 0.004]),
                RunMetrics::failed("d", "diverged"),
            ],
            baseline: Some(run("Input", &[0.01, 0.02, 0.03])),
            extra_columns: vec![],
        };
        let md = report.to_markdown();
        let line = |name: &str| md.lines().find(|l| l.starts_with(&format!("| {name} |"))).unwrap().to_string();
        assert!(line("b").contains("**2.00 [1.00]**"));
        assert!(line("c").contains("<u>3.00 [1.00]</u>"));
        assert!(line("b").contains("**0.998 [0.001]**"));
        assert!(!line("Input").contains("**"));
        assert!(line("d").contains("failed: diverged"));
        assert_eq!(report.best(Metric::Mae), Some(1));
    }

    #[test]
    fn csv_has_one_row_per_slice_and_metric() {
        let report = MetricReport {
            runs: vec![run("a", &[0.1, 0.2])],
            ..Default::default()
        };
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 2 * 7);
    }
}
