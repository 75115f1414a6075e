//! The JSON run configuration and its content-addressed output directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use hierenc::kernels::KernelSpec;

/// `{command, kernel, n | n_list, variant, rank, eps, seed, out, …}`.
/// Unknown fields are rejected with a pointer to the offending field.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_list: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    // command-specific extras
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diag: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_list: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

impl RunConfig {
    /// Hex prefix of the SHA-256 of the canonical config JSON; the run's
    /// output directory is named by it so identical configs land in the
    /// same place.
    pub fn content_hash(&self) -> String {
        let canon = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&canon);
        digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
    }

    /// `out/<hash>/`, created on demand.
    pub fn out_dir(&self) -> std::io::Result<PathBuf> {
        let base = self
            .out
            .clone()
            .unwrap_or_else(|| Path::new("runs").to_path_buf());
        let dir = base.join(self.content_hash());
        std::fs::create_dir_all(&dir)?;
        Ok(dir)
    }
}

/// All floats in emitted artifacts carry 17 significant digits.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}
