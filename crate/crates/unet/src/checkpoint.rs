//! Checkpoint directories: `manifest.json` plus one tensor file per
//! parameter and per normalisation buffer.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use smsnet_nn::RunningStats;
use smsnet_tensor::io;

use crate::config::ModelConfig;
use crate::network::Network;
use crate::{Result, UnetError};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub config: ModelConfig,
    pub epoch: usize,
    pub val_mae: f64,
    pub params: Vec<String>,
    pub buffers: usize,
}

fn file_name(param: &str) -> String {
    format!("{param}.cdti")
}

/// Write `net` into `dir` (created if missing), replacing earlier contents.
pub fn save(dir: &Path, net: &Network, epoch: usize, val_mae: f64) -> Result<()> {
    fs::create_dir_all(dir)?;
    for p in net.params() {
        io::save(&dir.join(file_name(&p.name)), &p.value)?;
    }
    for (i, r) in net.running_stats().iter().enumerate() {
        io::save(&dir.join(format!("bn{i}.mean.cdti")), &r.mean)?;
        io::save(&dir.join(format!("bn{i}.var.cdti")), &r.var)?;
    }
    let manifest = Manifest {
        config: net.config().clone(),
        epoch,
        val_mae,
        params: net.params().iter().map(|p| p.name.clone()).collect(),
        buffers: net.running_stats().len(),
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    Ok(serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?)
}

/// Rebuild the network described by the manifest and load its tensors.
pub fn load(dir: &Path) -> Result<(Network, Manifest)> {
    let manifest = read_manifest(dir)?;
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    let mut net = Network::build(&manifest.config, &mut rng)?;
    let expected: Vec<&str> = net.params().iter().map(|p| p.name.as_str()).collect();
    if expected != manifest.params.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(UnetError::Checkpoint(format!(
            "{}: parameter list does not match a {} network",
            dir.display(),
            manifest.config.name()
        )));
    }
    let values = manifest
        .params
        .iter()
        .map(|name| io::load(&dir.join(file_name(name))))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    net.set_param_values(values)?;
    let stats = (0..manifest.buffers)
        .map(|i| {
            Ok(RunningStats {
                mean: io::load(&dir.join(format!("bn{i}.mean.cdti")))?,
                var: io::load(&dir.join(format!("bn{i}.var.cdti")))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    net.set_running_stats(stats)?;
    Ok((net, manifest))
}
