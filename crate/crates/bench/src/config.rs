//! Experiment configuration, JSON-file backed with snake_case keys.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{BenchError, Result};

/// Solution methods the sweep can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Laker,
    Jacobi,
    Gd,
    Reference,
    Gprt,
}

impl Method {
    pub fn all() -> Vec<Method> {
        vec![
            Method::Laker,
            Method::Jacobi,
            Method::Gd,
            Method::Reference,
            Method::Gprt,
        ]
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Laker => "laker",
            Method::Jacobi => "jacobi",
            Method::Gd => "gd",
            Method::Reference => "reference",
            Method::Gprt => "gprt",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "laker" => Ok(Method::Laker),
            "jacobi" => Ok(Method::Jacobi),
            "gd" => Ok(Method::Gd),
            "reference" => Ok(Method::Reference),
            "gprt" => Ok(Method::Gprt),
            other => Err(BenchError::Config(format!(
                "unknown method '{other}' (expected laker|jacobi|gd|reference|gprt)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingSection {
    pub d_e: usize,
    pub length_scale: f64,
    pub target_mean_affinity: f64,
}

impl Default for EmbeddingSection {
    fn default() -> Self {
        let d: laker_core::kernel::EmbeddingConfig<f64> = Default::default();
        Self {
            d_e: d.d_e,
            length_scale: d.length_scale,
            target_mean_affinity: d.target_mean_affinity,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct FieldSection {
    pub transmitter_count: usize,
    pub power_min: f64,
    pub power_max: f64,
    pub path_loss_exponent: f64,
    pub sigma_shadow: f64,
    pub shadow_length: f64,
}

impl Default for FieldSection {
    fn default() -> Self {
        let d: laker_core::cartography::FieldConfig<f64> = Default::default();
        Self {
            transmitter_count: d.transmitter_count,
            power_min: d.power_min,
            power_max: d.power_max,
            path_loss_exponent: d.path_loss_exponent,
            sigma_shadow: d.sigma_shadow,
            shadow_length: d.shadow_length,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct GprtSection {
    pub rq_alpha: f64,
    pub length_scale: f64,
    pub noise_var: f64,
}

impl Default for GprtSection {
    fn default() -> Self {
        let d: laker_core::cartography::GprtConfig<f64> = Default::default();
        Self {
            rq_alpha: d.rq_alpha,
            length_scale: d.length_scale,
            noise_var: d.noise_var,
        }
    }
}

/// The full sweep configuration; every field has the benchmark default and
/// JSON files may override any subset.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub sizes: Vec<usize>,
    pub lambda: f64,
    pub gamma: f64,
    pub seeds: Vec<u64>,
    pub methods: Vec<Method>,
    pub output_dir: PathBuf,
    pub pcg_tol: f64,
    pub target_tol: f64,
    pub gd_budget: usize,
    pub noise_std: f64,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub embedding: EmbeddingSection,
    pub field: FieldSection,
    pub gprt: GprtSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            sizes: vec![50, 200, 500, 1000, 2000],
            lambda: 1e-2,
            gamma: 1e-1,
            seeds: vec![0, 1, 2, 3, 4],
            methods: Method::all(),
            output_dir: PathBuf::from("results"),
            pcg_tol: 1e-10,
            target_tol: 1e-3,
            gd_budget: 2000,
            noise_std: 1.5,
            grid_rows: 45,
            grid_cols: 45,
            embedding: EmbeddingSection::default(),
            field: FieldSection::default(),
            gprt: GprtSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| BenchError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() {
            return Err(BenchError::Config("sizes must be nonempty".into()));
        }
        if self.sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(BenchError::Config(
                "sizes must be strictly ascending".into(),
            ));
        }
        if self.seeds.is_empty() {
            return Err(BenchError::Config("seeds must be nonempty".into()));
        }
        if !(self.lambda > 0.0) || !(self.gamma >= 0.0) {
            return Err(BenchError::Config("lambda > 0 and gamma >= 0".into()));
        }
        if !(self.pcg_tol > 0.0 && self.pcg_tol < 1.0)
            || !(self.target_tol > 0.0 && self.target_tol < 1.0)
        {
            return Err(BenchError::Config("tolerances must lie in (0,1)".into()));
        }
        if self.gd_budget == 0 {
            return Err(BenchError::Config("gd_budget must be >= 1".into()));
        }
        if self.grid_rows < 2 || self.grid_cols < 2 {
            return Err(BenchError::Config("grid must be at least 2x2".into()));
        }
        Ok(())
    }
}
