//! Median [IQR] aggregation and the paired Wilcoxon signed-rank test.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::{EvalError, Result};

/// Largest sample size for which the null distribution is enumerated.
pub const EXACT_LIMIT: usize = 20;

/// Quantile of sorted data by linear interpolation between order statistics
/// (position `q (n - 1)`).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        return sorted[lo];
    }
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    /// Number of values aggregated (NaNs are dropped).
    pub n: usize,
}

impl Summary {
    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }
}

/// Median and quartiles of the finite-or-infinite values; NaN entries mark
/// slices where the metric was undefined and are skipped.
pub fn aggregate(values: &[f64]) -> Result<Summary> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return Err(EvalError::Undefined("aggregate"));
    }
    v.sort_by(f64::total_cmp);
    Ok(Summary {
        median: quantile(&v, 0.5),
        q1: quantile(&v, 0.25),
        q3: quantile(&v, 0.75),
        n: v.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Wilcoxon {
    /// Sum of ranks of the positive differences.
    pub w_plus: f64,
    /// Non-zero differences used.
    pub n: usize,
    pub p_value: f64,
    pub exact: bool,
}

/// Average ranks (1-based) of `|d|`, ties sharing the mean rank.
fn ranks(abs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..abs.len()).collect();
    order.sort_by(|&i, &j| abs[i].total_cmp(&abs[j]));
    let mut r = vec![0.0; abs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && abs[order[j + 1]] == abs[order[i]] {
            j += 1;
        }
        let mean = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            r[k] = mean;
        }
        i = j + 1;
    }
    r
}

/// Null distribution of `2 W+` under random signs: entry `s` is the
/// probability that twice the positive rank sum equals `s`.
/// Ranks must be multiples of 1/2 (true for average ranks).
pub fn exact_distribution(ranks: &[f64]) -> Vec<f64> {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut dist = vec![0.0; total + 1];
    dist[0] = 1.0;
    for &r in &doubled {
        for s in (0..=total).rev() {
            let with = if s >= r { dist[s - r] } else { 0.0 };
            dist[s] = 0.5 * (dist[s] + with);
        }
    }
    dist
}

/// Two-sided signed-rank test on paired samples.
///
/// Zero differences are dropped. All-zero input gives `p = 1`; between one
/// and four non-zero differences is an error. Up to [`EXACT_LIMIT`] pairs the
/// null distribution is enumerated, otherwise a normal approximation with tie
/// and continuity corrections is used.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<Wilcoxon> {
    if a.len() != b.len() {
        return Err(EvalError::Shape(format!("wilcoxon: {} vs {} samples", a.len(), b.len())));
    }
    let d: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|d| *d != 0.0 && !d.is_nan())
        .collect();
    let n = d.len();
    if n == 0 {
        return Ok(Wilcoxon {
            w_plus: 0.0,
            n,
            p_value: 1.0,
            exact: true,
        });
    }
    if n < 5 {
        return Err(EvalError::TooFewPairs(n));
    }
    let abs: Vec<f64> = d.iter().map(|d| d.abs()).collect();
    let r = ranks(&abs);
    let w_plus: f64 = d.iter().zip(&r).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let (p_value, exact) = if n <= EXACT_LIMIT {
        let dist = exact_distribution(&r);
        let w2 = (2.0 * w_plus).round() as usize;
        let lower: f64 = dist[..=w2].iter().sum();
        let upper: f64 = dist[w2..].iter().sum();
        ((2.0 * lower.min(upper)).min(1.0), true)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let mut ties = 0.0;
        let mut sorted = r.clone();
        sorted.sort_by(f64::total_cmp);
        for group in sorted.chunk_by(|x, y| x == y) {
            let t = group.len() as f64;
            ties += t * t * t - t;
        }
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - ties / 48.0;
        let z = ((w_plus - mean).abs() - 0.5).max(0.0) / var.sqrt();
        let normal = Normal::standard();
        ((2.0 * normal.sf(z)).min(1.0), false)
    };
    Ok(Wilcoxon {
        w_plus,
        n,
        p_value,
        exact,
    })
}
