//! Versioned JSON form of a fitted mixture.
//!
//! ```json
//! {
//!   "format": "foodgmm-mixture",
//!   "version": 1,
//!   "parameterization": "EEV",
//!   "d": 2,
//!   "k": 3,
//!   "weights": [0.3, 0.3, 0.4],
//!   "means": [[0.0, 1.0], [2.0, 3.0], [4.0, 5.0]],
//!   "covariances": [[1.0, 0.0, 0.0, 1.0], ...],
//!   "seed": 42,
//!   "config": { "tol": 1e-8, "max_iter": 500, "n_restarts": 5, "seed": 42, "cov_floor": null },
//!   "cov_floor": 3.1e-6,
//!   "loglik": -1234.5,
//!   "converged": true,
//!   "features": { "names": ["distance_miles"], "scaling": "none", "center": [0.0], "scale": [1.0] }
//! }
//! ```
//!
//! Covariances are stored row-major, one flat array of `d·d` values per
//! component. `features` is optional and records how the rows were built.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{FitConfig, FitResult, MixtureModel, Parameterization};
use crate::error::{Error, Result};

pub const MODEL_FORMAT: &str = "foodgmm-mixture";
pub const MODEL_VERSION: u32 = 1;

/// Feature construction recorded alongside a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDescriptor {
    pub names: Vec<String>,
    pub scaling: String,
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format: String,
    pub version: u32,
    pub parameterization: Parameterization,
    pub d: usize,
    pub k: usize,
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub covariances: Vec<Vec<f64>>,
    pub seed: u64,
    pub config: FitConfig,
    #[serde(default)]
    pub cov_floor: Option<f64>,
    #[serde(default)]
    pub loglik: Option<f64>,
    #[serde(default)]
    pub converged: Option<bool>,
    #[serde(default)]
    pub features: Option<FeatureDescriptor>,
}

impl ModelDocument {
    pub fn from_model(model: &MixtureModel, config: &FitConfig) -> Self {
        let d = model.d();
        Self {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            parameterization: model.parameterization(),
            d,
            k: model.k(),
            weights: model.weights().to_vec(),
            means: model.means().to_vec(),
            covariances: model
                .covariances()
                .iter()
                .map(|c| (0..d * d).map(|i| c[(i / d, i % d)]).collect())
                .collect(),
            seed: config.seed,
            config: config.clone(),
            cov_floor: None,
            loglik: None,
            converged: None,
            features: None,
        }
    }

    pub fn from_fit(fit: &FitResult, config: &FitConfig) -> Self {
        Self {
            cov_floor: Some(fit.cov_floor),
            loglik: Some(fit.loglik()),
            converged: Some(fit.converged),
            ..Self::from_model(&fit.model, config)
        }
    }

    pub fn to_model(&self) -> Result<MixtureModel> {
        if self.version != MODEL_VERSION {
            return Err(Error::UnsupportedVersion(self.version));
        }
        if self.format != MODEL_FORMAT {
            return Err(Error::InvalidArgument(format!("unknown model format `{}`", self.format)));
        }
        if self.weights.len() != self.k || self.means.len() != self.k || self.covariances.len() != self.k {
            return Err(Error::InvalidArgument("component arrays disagree with k".into()));
        }
        let d = self.d;
        let covariances = self
            .covariances
            .iter()
            .map(|c| {
                if c.len() != d * d {
                    return Err(Error::DimensionMismatch {
                        expected: d * d,
                        actual: c.len(),
                    });
                }
                Ok(DMatrix::from_row_slice(d, d, c))
            })
            .collect::<Result<Vec<_>>>()?;
        if self.means.iter().any(|m| m.len() != d) {
            return Err(Error::InvalidArgument("mean length disagrees with d".into()));
        }
        MixtureModel::new(
            self.parameterization,
            self.weights.clone(),
            self.means.clone(),
            covariances,
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
