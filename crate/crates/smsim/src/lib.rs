//! Synthetic cardiac DTI data with simultaneous multi-slice leakage.
//!
//! A phantom heart is a stack of myocardial annuli whose fibre orientation
//! follows a transmural helix. Slices acquired together are mixed linearly in
//! the complex domain and corrupted with Gaussian noise; whole hearts are
//! assigned to train/validation/test splits.

pub mod dataset;
mod error;
pub mod leakage;
pub mod phantom;

pub use dataset::{build_dataset, Dataset, DatasetManifest, DatasetParams, GroupData, Sample, Split};
pub use error::{Result, SimError};
pub use leakage::{apply_sms_leakage, smooth_field, Alpha, SmsPair};
pub use phantom::{generate_phantom, HeartGeometry, Phantom, PhantomSlice};
