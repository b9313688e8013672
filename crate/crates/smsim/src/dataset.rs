//! Dataset generation, persistence and loading.
//!
//! Layout of a dataset directory:
//!
//! ```text
//! manifest.json
//! h00/g0_corrupted.cdti   [acquisitions, sms, height, width] complex
//! h00/g0_clean.cdti       same shape, leakage- and noise-free
//! h00/g0_mask.cdti        [sms, height, width], 1 on myocardium
//! h00/g0_tensors.cdti     [sms, 6, height, width] ground-truth tensors
//! h00/g0_alpha.cdti       [sms, sms, height, width] leakage coefficients
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use smsnet_dti::DiffusionProtocol;
use smsnet_tensor::{io, Tensor};

use crate::leakage::{apply_sms_leakage, smooth_field, Alpha};
use crate::phantom::{generate_phantom, HeartGeometry};
use crate::{Result, SimError};

const MANIFEST: &str = "manifest.json";
const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetParams {
    pub seed: u64,
    pub hearts: usize,
    pub height: usize,
    pub width: usize,
    pub slices_per_heart: usize,
    pub sms_factor: usize,
    /// Diffusion-weighted directions on top of one b=0 image.
    pub directions: usize,
    pub bvalue: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub sigma: f64,
    /// Train, validation and test fractions of the hearts.
    pub splits: [f64; 3],
    /// Slice separation as a fraction of slice thickness; metadata only,
    /// the leakage strength is carried by alpha.
    pub distance_factor: f64,
}

impl Default for DatasetParams {
    fn default() -> Self {
        DatasetParams {
            seed: 0,
            hearts: 8,
            height: 48,
            width: 48,
            slices_per_heart: 10,
            sms_factor: 2,
            directions: 11,
            bvalue: 1000.0,
            alpha_min: 0.05,
            alpha_max: 0.35,
            sigma: 0.02,
            splits: [0.75, 0.125, 0.125],
            distance_factor: 4.0,
        }
    }
}

impl DatasetParams {
    /// Three 32x32 hearts, one per split: enough to exercise every model.
    pub fn smoke() -> Self {
        DatasetParams {
            hearts: 3,
            height: 32,
            width: 32,
            splits: [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
            ..Self::default()
        }
    }

    pub fn protocol(&self) -> Result<DiffusionProtocol> {
        Ok(DiffusionProtocol::hemisphere(self.directions, self.bvalue)?)
    }

    pub fn groups_per_heart(&self) -> usize {
        self.slices_per_heart / self.sms_factor.max(1)
    }

    /// Slices excited together in group `g`: evenly spaced through the heart.
    pub fn group_slices(&self, g: usize) -> Vec<usize> {
        let step = self.groups_per_heart();
        (0..self.sms_factor).map(|k| g + k * step).collect()
    }

    /// Hearts per split, `[train, val, test]`.
    pub fn split_counts(&self) -> Result<[usize; 3]> {
        let total: f64 = self.splits.iter().sum();
        if self.splits.iter().any(|f| !(*f >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(SimError::Split(format!("fractions {:?} must be non-negative and sum to 1", self.splits)));
        }
        let want = |f: f64| if f > 0.0 { ((f * self.hearts as f64).round() as usize).max(1) } else { 0 };
        let (val, test) = (want(self.splits[1]), want(self.splits[2]));
        let train = self.hearts.checked_sub(val + test).unwrap_or(0);
        let needed = self.splits.iter().filter(|f| **f > 0.0).count();
        if (self.splits[0] > 0.0 && train == 0) || val + test + train != self.hearts {
            return Err(SimError::Split(format!(
                "{} hearts cannot fill {needed} non-empty splits {:?}",
                self.hearts, self.splits
            )));
        }
        Ok([train, val, test])
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SimError::Parameter(m));
        if self.sms_factor < 1 || self.slices_per_heart == 0 || self.slices_per_heart % self.sms_factor != 0 {
            return bad(format!(
                "{} slices per heart are not a multiple of sms factor {}",
                self.slices_per_heart, self.sms_factor
            ));
        }
        if !(0.0 <= self.alpha_min && self.alpha_min <= self.alpha_max && self.alpha_max < 1.0) {
            return bad(format!("alpha range [{}, {}] must lie in [0, 1)", self.alpha_min, self.alpha_max));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad(format!("noise sigma {}", self.sigma));
        }
        self.protocol()?;
        self.split_counts()?;
        HeartGeometry::new(self.height, self.width, self.slices_per_heart).validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupEntry {
    pub id: usize,
    /// Slice positions within the heart, one per excited slice.
    pub slices: Vec<usize>,
    pub corrupted: String,
    pub clean: String,
    pub mask: String,
    pub tensors: String,
    pub alpha: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeartEntry {
    pub id: usize,
    pub split: Split,
    pub geometry: HeartGeometry,
    pub groups: Vec<GroupEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub params: DatasetParams,
    pub acquisitions: usize,
    pub bvalues: Vec<f64>,
    pub directions: Vec<[f64; 3]>,
    pub hearts: Vec<HeartEntry>,
}

impl DatasetManifest {
    pub fn hearts_in(&self, split: Split) -> impl Iterator<Item = &HeartEntry> {
        self.hearts.iter().filter(move |h| h.split == split)
    }
}

/// Per-heart RNG stream, independent of generation order.
fn heart_rng(seed: u64, heart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(heart as u64 + 1);
    rng
}

/// Stack `[a, h, w]` slices into `[a, n, h, w]`.
fn interleave(slices: &[Tensor]) -> Result<Tensor> {
    let d = slices[0].dims();
    let (a, px) = (d[0], d[1] * d[2]);
    let n = slices.len();
    let mut re = vec![0.0; a * n * px];
    let mut im = vec![0.0; a * n * px];
    for (s, t) in slices.iter().enumerate() {
        let ti = t.im_or_zeros();
        for k in 0..a {
            let dst = (k * n + s) * px;
            re[dst..dst + px].copy_from_slice(&t.re()[k * px..(k + 1) * px]);
            im[dst..dst + px].copy_from_slice(&ti[k * px..(k + 1) * px]);
        }
    }
    Ok(Tensor::complex([a, n, d[1], d[2]], re, im)?)
}

/// Generate every heart, corrupt every slice group, write files and manifest.
/// The directory is created if needed; existing dataset files are replaced.
pub fn build_dataset(dir: impl AsRef<Path>, params: &DatasetParams) -> Result<DatasetManifest> {
    params.validate()?;
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let protocol = params.protocol()?;
    let [n_train, n_val, _] = params.split_counts()?;
    let mut order: Vec<usize> = (0..params.hearts).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(params.seed));
    let mut split = vec![Split::Test; params.hearts];
    for (rank, &h) in order.iter().enumerate() {
        split[h] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }

    let (h, w, sms) = (params.height, params.width, params.sms_factor);
    let mut hearts = Vec::with_capacity(params.hearts);
    for heart in 0..params.hearts {
        let mut rng = heart_rng(params.seed, heart);
        let geometry = HeartGeometry::random(h, w, params.slices_per_heart, &mut rng);
        let phantom = generate_phantom(rng.random(), &geometry, &protocol)?;
        let sub = format!("h{heart:02}");
        fs::create_dir_all(dir.join(&sub))?;
        let mut groups = Vec::new();
        for g in 0..params.groups_per_heart() {
            let slices = params.group_slices(g);
            let clean: Vec<Tensor> = slices.iter().map(|&z| phantom.slices[z].images.clone()).collect();
            let mut alpha = vec![vec![Alpha::Scalar(0.0); sms]; sms];
            let mut alpha_planes = vec![0.0; sms * sms * h * w];
            for i in 0..sms {
                for j in (0..sms).filter(|&j| j != i) {
                    let f = smooth_field(h, w, params.alpha_min, params.alpha_max, &mut rng);
                    alpha_planes[(i * sms + j) * h * w..(i * sms + j + 1) * h * w].copy_from_slice(&f);
                    alpha[i][j] = Alpha::Field(f);
                }
            }
            let pair = apply_sms_leakage(&clean, &alpha, params.sigma, &mut rng)?;
            let mask: Vec<f64> = slices
                .iter()
                .flat_map(|&z| phantom.slices[z].mask.iter().map(|&m| if m { 1.0 } else { 0.0 }))
                .collect();
            let mut tensors = vec![0.0; sms * 6 * h * w];
            for (s, &z) in slices.iter().enumerate() {
                for (i, d) in phantom.slices[z].tensors.iter().enumerate() {
                    for c in 0..6 {
                        tensors[(s * 6 + c) * h * w + i] = d[c];
                    }
                }
            }
            let entry = GroupEntry {
                id: g,
                slices,
                corrupted: format!("{sub}/g{g}_corrupted.cdti"),
                clean: format!("{sub}/g{g}_clean.cdti"),
                mask: format!("{sub}/g{g}_mask.cdti"),
                tensors: format!("{sub}/g{g}_tensors.cdti"),
                alpha: format!("{sub}/g{g}_alpha.cdti"),
            };
            io::save(dir.join(&entry.corrupted), &interleave(&pair.corrupted)?)?;
            io::save(dir.join(&entry.clean), &interleave(&pair.clean)?)?;
            io::save(dir.join(&entry.mask), &Tensor::real([sms, h, w], mask)?)?;
            io::save(dir.join(&entry.tensors), &Tensor::real([sms, 6, h, w], tensors)?)?;
            io::save(dir.join(&entry.alpha), &Tensor::real([sms, sms, h, w], alpha_planes)?)?;
            groups.push(entry);
        }
        hearts.push(HeartEntry {
            id: heart,
            split: split[heart],
            geometry,
            groups,
        });
    }
    let manifest = DatasetManifest {
        version: FORMAT_VERSION,
        params: params.clone(),
        acquisitions: protocol.len(),
        bvalues: protocol.bvalues.clone(),
        directions: protocol.directions.clone(),
        hearts,
    };
    fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// One network input/target pair: every slice of a group at one acquisition,
/// `[sms, height, width]` complex.
#[derive(Clone, Debug)]
pub struct Sample {
    pub heart: usize,
    pub group: usize,
    pub acquisition: usize,
    pub corrupted: Tensor,
    pub clean: Tensor,
}

/// A slice group with all acquisitions and ground truth.
#[derive(Clone, Debug)]
pub struct GroupData {
    pub heart: usize,
    pub group: usize,
    pub slices: Vec<usize>,
    /// `[acquisitions, sms, height, width]`.
    pub corrupted: Tensor,
    pub clean: Tensor,
    /// `[sms, height, width]`.
    pub mask: Tensor,
    /// `[sms, 6, height, width]`.
    pub tensors: Tensor,
}

fn take(t: &Tensor, start: usize, len: usize, dims: Vec<usize>) -> Result<Tensor> {
    let re = t.re()[start..start + len].to_vec();
    let im = t.im().map(|im| im[start..start + len].to_vec());
    Ok(Tensor::from_parts(dims.into(), re, im)?)
}

impl GroupData {
    pub fn acquisitions(&self) -> usize {
        self.corrupted.dims()[0]
    }

    fn sms(&self) -> usize {
        self.corrupted.dims()[1]
    }

    fn plane(&self) -> (usize, usize) {
        let d = self.corrupted.dims();
        (d[2], d[3])
    }

    pub fn sample(&self, acquisition: usize) -> Result<Sample> {
        let (h, w) = self.plane();
        let n = self.sms() * h * w;
        let dims = vec![self.sms(), h, w];
        Ok(Sample {
            heart: self.heart,
            group: self.group,
            acquisition,
            corrupted: take(&self.corrupted, acquisition * n, n, dims.clone())?,
            clean: take(&self.clean, acquisition * n, n, dims)?,
        })
    }

    pub fn mask_of(&self, slice: usize) -> Vec<bool> {
        let (h, w) = self.plane();
        self.mask.re()[slice * h * w..(slice + 1) * h * w].iter().map(|&v| v > 0.5).collect()
    }

    pub fn tensors_of(&self, slice: usize) -> Vec<[f64; 6]> {
        let (h, w) = self.plane();
        let px = h * w;
        let t = self.tensors.re();
        (0..px)
            .map(|i| std::array::from_fn(|c| t[(slice * 6 + c) * px + i]))
            .collect()
    }
}

/// A dataset on disk.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: DatasetManifest,
}

impl Dataset {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let root = dir.as_ref().to_path_buf();
        let text = fs::read_to_string(root.join(MANIFEST))
            .map_err(|e| SimError::Dataset(format!("{}: {e}", root.join(MANIFEST).display())))?;
        let manifest: DatasetManifest = serde_json::from_str(&text)?;
        if manifest.version != FORMAT_VERSION {
            return Err(SimError::Dataset(format!("unsupported format version {}", manifest.version)));
        }
        Ok(Dataset { root, manifest })
    }

    pub fn protocol(&self) -> Result<DiffusionProtocol> {
        self.manifest.params.protocol()
    }

    pub fn load_group(&self, heart: &HeartEntry, group: &GroupEntry) -> Result<GroupData> {
        let load = |p: &str| io::load(self.root.join(p));
        let g = GroupData {
            heart: heart.id,
            group: group.id,
            slices: group.slices.clone(),
            corrupted: load(&group.corrupted)?,
            clean: load(&group.clean)?,
            mask: load(&group.mask)?,
            tensors: load(&group.tensors)?,
        };
        let p = &self.manifest.params;
        let want = [self.manifest.acquisitions, p.sms_factor, p.height, p.width];
        if g.corrupted.dims() != want || g.clean.dims() != want {
            return Err(SimError::Dataset(format!("{} has shape {:?}, expected {want:?}", group.corrupted, g.corrupted.dims())));
        }
        Ok(g)
    }

    pub fn groups(&self, split: Split) -> Result<Vec<GroupData>> {
        let mut out = Vec::new();
        for h in self.manifest.hearts_in(split) {
            for g in &h.groups {
                out.push(self.load_group(h, g)?);
            }
        }
        Ok(out)
    }

    /// Every (group, acquisition) pair of a split, in manifest order.
    pub fn samples(&self, split: Split) -> Result<Vec<Sample>> {
        let mut out = Vec::new();
        for g in self.groups(split)? {
            for a in 0..g.acquisitions() {
                out.push(g.sample(a)?);
            }
        }
        Ok(out)
    }
}
