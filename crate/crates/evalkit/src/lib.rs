//! Image and DTI-map error metrics, per-slice aggregation and paired
//! significance testing.

mod error;
pub mod metrics;
pub mod report;
pub mod stats;

pub use error::{EvalError, Result};
pub use metrics::{maae, mae, map_mae, psnr, ssim, Ssim, SsimParams};
pub use report::{Metric, MetricReport, RunMetrics, SliceMetrics};
pub use stats::{aggregate, quantile, wilcoxon_signed_rank, Summary, Wilcoxon};
