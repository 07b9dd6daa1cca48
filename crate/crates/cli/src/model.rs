//! The JSON model file written by `fit` and read by `eval` and `roc`.

use mrf_core::graphmodel::ModelDoc;
use mrf_core::ParamVector;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const FORMAT: &str = "mrf-model";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Variational likelihood with tree-reweighted message passing
    Trw,
    /// Nonparametric score matching
    Quasr,
    /// Gaussian score matching
    Gauss,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub lambda: f64,
    pub iterations: usize,
    pub objective: f64,
    pub model: ModelDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub method: Method,
    pub d: usize,
    pub m1: usize,
    pub m2: usize,
    /// Candidate edges the fits are laid out on.
    pub edges: Vec<[usize; 2]>,
    pub seed: u64,
    pub grid: usize,
    /// Edge appearance probabilities aligned with `edges` (variational fits).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<f64>>,
    /// Affine map applied to data before Gaussian fitting: `(x − center) / scale`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<Vec<f64>>,
    pub fits: Vec<FitRecord>,
    /// Index into `fits` chosen on held-out data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holdout_scores: Option<Vec<Option<f64>>>,
}

impl ModelFile {
    pub fn validate(&self) -> Result<()> {
        if self.format != FORMAT || self.version != VERSION {
            return Err(CliError::Usage(format!(
                "not a {FORMAT} v{VERSION} file (found {} v{})",
                self.format, self.version
            )));
        }
        for (k, f) in self.fits.iter().enumerate() {
            if f.model.d != self.d {
                return Err(CliError::Usage(format!("fit {k} has d = {}, file says {}", f.model.d, self.d)));
            }
        }
        if let Some(s) = self.selected {
            if s >= self.fits.len() {
                return Err(CliError::Usage(format!("selected index {s} out of range")));
            }
        }
        Ok(())
    }

    pub fn params(&self) -> Result<Vec<(f64, ParamVector)>> {
        self.fits
            .iter()
            .map(|f| Ok((f.lambda, ParamVector::from_doc(&f.model)?)))
            .collect()
    }
}
