//! Gaussian mixtures over the parsimonious covariance family, fit by EM.
//!
//! Covariances follow the volume/shape/orientation decomposition
//! `Σ_k = λ_k D_k A_k D_kᵀ`. Each three-letter model name gives, in order,
//! whether volume, shape and orientation are shared across components
//! (`E`), free per component (`V`) or fixed to the identity (`I`). In one
//! dimension only volume remains, leaving the two models `E` and `V`.
//!
//! Density work happens in log space on Cholesky factors. Every updated
//! covariance receives a ridge `ε·I` so that no component can collapse.

mod density;
mod fit;
mod init;
mod mstep;
mod serialize;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::RowMatrix;

pub use density::{e_step, log_density, predict, ComponentCache, EStep, Prediction};
pub use fit::{default_cov_floor, fit};
pub use init::{init_kmeanspp, KMeansInit};
pub use mstep::{m_step, MStep};
pub use serialize::{FeatureDescriptor, ModelDocument, MODEL_FORMAT, MODEL_VERSION};

/// Covariance structure shared by all components of a mixture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Parameterization {
    /// One dimension, equal variance.
    E,
    /// One dimension, variable variance.
    V,
    EII,
    VII,
    EEI,
    VVI,
    EEE,
    EEV,
    VVV,
}

impl Parameterization {
    /// The seven multivariate models, in order of increasing flexibility.
    pub const MULTIVARIATE: [Parameterization; 7] = [
        Parameterization::EII,
        Parameterization::VII,
        Parameterization::EEI,
        Parameterization::VVI,
        Parameterization::EEE,
        Parameterization::EEV,
        Parameterization::VVV,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Parameterization::E => "E",
            Parameterization::V => "V",
            Parameterization::EII => "EII",
            Parameterization::VII => "VII",
            Parameterization::EEI => "EEI",
            Parameterization::VVI => "VVI",
            Parameterization::EEE => "EEE",
            Parameterization::EEV => "EEV",
            Parameterization::VVV => "VVV",
        }
    }

    pub fn is_univariate(self) -> bool {
        matches!(self, Parameterization::E | Parameterization::V)
    }

    pub fn is_legal(self, d: usize) -> bool {
        match d {
            0 => false,
            1 => self.is_univariate(),
            _ => !self.is_univariate(),
        }
    }

    pub fn check_legal(self, d: usize) -> Result<()> {
        if self.is_legal(d) {
            Ok(())
        } else {
            Err(Error::IllegalParameterization {
                model: self.name().to_string(),
                d,
            })
        }
    }

    /// The model to use at dimension `d`: multivariate names collapse to
    /// their volume letter when `d = 1`. Returns `None` when no equivalent
    /// exists (`E`/`V` requested for `d ≥ 2`).
    pub fn for_dimension(self, d: usize) -> Option<Parameterization> {
        if self.is_legal(d) {
            return Some(self);
        }
        if d == 1 {
            return Some(if self.equal_volume() {
                Parameterization::E
            } else {
                Parameterization::V
            });
        }
        None
    }

    pub fn equal_volume(self) -> bool {
        matches!(
            self,
            Parameterization::E
                | Parameterization::EII
                | Parameterization::EEI
                | Parameterization::EEE
                | Parameterization::EEV
        )
    }
}

impl fmt::Display for Parameterization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Parameterization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_uppercase().as_str() {
            "E" => Parameterization::E,
            "V" => Parameterization::V,
            "EII" => Parameterization::EII,
            "VII" => Parameterization::VII,
            "EEI" => Parameterization::EEI,
            "VVI" => Parameterization::VVI,
            "EEE" => Parameterization::EEE,
            "EEV" => Parameterization::EEV,
            "VVV" => Parameterization::VVV,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown parameterization `{other}`"
                )))
            }
        })
    }
}

/// Number of free parameters of a `k`-component mixture in `d` dimensions.
pub fn n_free_params(model: Parameterization, k: usize, d: usize) -> Result<usize> {
    model.check_legal(d)?;
    if k == 0 {
        return Err(Error::InvalidArgument("K must be at least 1".into()));
    }
    let cov = match model {
        Parameterization::E => 1,
        Parameterization::V => k,
        Parameterization::EII => 1,
        Parameterization::VII => k,
        Parameterization::EEI => d,
        Parameterization::VVI => k * d,
        Parameterization::EEE => d * (d + 1) / 2,
        Parameterization::EEV => 1 + (d - 1) + k * d * (d - 1) / 2,
        Parameterization::VVV => k * d * (d + 1) / 2,
    };
    Ok((k - 1) + k * d + cov)
}

/// A fitted or hand-built Gaussian mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureModel {
    parameterization: Parameterization,
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    covariances: Vec<DMatrix<f64>>,
}

impl MixtureModel {
    /// Validates shapes, the weight simplex and positive definiteness.
    /// Structural constraints of the parameterization are not re-checked.
    pub fn new(
        parameterization: Parameterization,
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        covariances: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let k = weights.len();
        if k == 0 {
            return Err(Error::InvalidArgument("mixture needs at least one component".into()));
        }
        if means.len() != k || covariances.len() != k {
            return Err(Error::InvalidArgument(format!(
                "component count mismatch: {} weights, {} means, {} covariances",
                k,
                means.len(),
                covariances.len()
            )));
        }
        let d = means[0].len();
        parameterization.check_legal(d)?;
        for (mu, cov) in means.iter().zip(&covariances) {
            if mu.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: mu.len(),
                });
            }
            if cov.nrows() != d || cov.ncols() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: cov.nrows(),
                });
            }
            if mu.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument("non-finite model parameter".into()));
            }
            if cov.clone().cholesky().is_none() {
                return Err(Error::Numerical("covariance is not positive definite".into()));
            }
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidArgument("weights must be finite and non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("weights sum to {total}, not 1")));
        }
        Ok(Self {
            parameterization,
            weights,
            means,
            covariances,
        })
    }

    pub(crate) fn from_parts_unchecked(
        parameterization: Parameterization,
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        covariances: Vec<DMatrix<f64>>,
    ) -> Self {
        Self {
            parameterization,
            weights,
            means,
            covariances,
        }
    }

    pub fn parameterization(&self) -> Parameterization {
        self.parameterization
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn d(&self) -> usize {
        self.means[0].len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn covariances(&self) -> &[DMatrix<f64>] {
        &self.covariances
    }

    pub fn n_free_params(&self) -> usize {
        n_free_params(self.parameterization, self.k(), self.d())
            .expect("model parameterization was validated at construction")
    }

    /// Same mixture with components reordered so that new component `i` is
    /// old component `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            parameterization: self.parameterization,
            weights: order.iter().map(|&i| self.weights[i]).collect(),
            means: order.iter().map(|&i| self.means[i].clone()).collect(),
            covariances: order.iter().map(|&i| self.covariances[i].clone()).collect(),
        }
    }
}

/// EM settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Stop when the relative change in log-likelihood falls below this.
    pub tol: f64,
    pub max_iter: usize,
    pub n_restarts: usize,
    pub seed: u64,
    /// Ridge added to every covariance. `None` uses [`default_cov_floor`].
    pub cov_floor: Option<f64>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 500,
            n_restarts: 5,
            seed: 0,
            cov_floor: None,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        if self.n_restarts == 0 {
            return Err(Error::InvalidArgument("n_restarts must be at least 1".into()));
        }
        if let Some(eps) = self.cov_floor {
            if !(eps.is_finite() && eps > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "cov_floor must be positive, got {eps}"
                )));
            }
        }
        Ok(())
    }
}

/// Outcome of [`fit`].
#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: MixtureModel,
    /// n × K posterior membership probabilities under `model`.
    pub responsibilities: RowMatrix,
    /// Log-likelihood at each E-step; the last entry belongs to `model`.
    pub loglik_trace: Vec<f64>,
    pub hard_assignments: Vec<usize>,
    pub converged: bool,
    pub iterations: usize,
    /// Ridge that was added to every covariance.
    pub cov_floor: f64,
    /// Index of the winning restart.
    pub restart: usize,
    /// Number of empty-component reseeds during the winning run.
    pub reseeds: usize,
    pub n_obs: usize,
}

impl FitResult {
    pub fn loglik(&self) -> f64 {
        *self.loglik_trace.last().expect("trace holds at least one E-step")
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_param_examples() {
        assert_eq!(n_free_params(Parameterization::EII, 4, 2).unwrap(), 12);
        assert_eq!(n_free_params(Parameterization::EEV, 4, 2).unwrap(), 17);
        assert_eq!(n_free_params(Parameterization::VVV, 4, 2).unwrap(), 23);
        assert_eq!(n_free_params(Parameterization::E, 4, 1).unwrap(), 3 + 4 + 1);
        assert_eq!(n_free_params(Parameterization::V, 4, 1).unwrap(), 3 + 4 + 4);
    }

    #[test]
    fn illegal_combinations_rejected() {
        assert!(n_free_params(Parameterization::EEV, 2, 1).is_err());
        assert!(n_free_params(Parameterization::E, 2, 2).is_err());
        assert!(n_free_params(Parameterization::VVV, 0, 2).is_err());
    }

    #[test]
    fn dimension_collapse() {
        assert_eq!(Parameterization::EEV.for_dimension(1), Some(Parameterization::E));
        assert_eq!(Parameterization::VVV.for_dimension(1), Some(Parameterization::V));
        assert_eq!(Parameterization::VII.for_dimension(1), Some(Parameterization::V));
        assert_eq!(Parameterization::EEV.for_dimension(3), Some(Parameterization::EEV));
        assert_eq!(Parameterization::E.for_dimension(2), None);
    }

    #[test]
    fn names_round_trip() {
        for p in Parameterization::MULTIVARIATE.iter().chain(&[Parameterization::E, Parameterization::V]) {
            assert_eq!(p.name().parse::<Parameterization>().unwrap(), *p);
        }
        assert!("XYZ".parse::<Parameterization>().is_err());
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
    }

    #[test]
    fn model_validation() {
        let eye = DMatrix::<f64>::identity(1, 1);
        assert!(MixtureModel::new(Parameterization::E, vec![0.6, 0.3], vec![vec![0.0], vec![1.0]], vec![eye.clone(), eye.clone()]).is_err());
        assert!(MixtureModel::new(Parameterization::EEV, vec![1.0], vec![vec![0.0]], vec![eye.clone()]).is_err());
        let bad = DMatrix::from_row_slice(1, 1, &[-1.0]);
        assert!(MixtureModel::new(Parameterization::E, vec![1.0], vec![vec![0.0]], vec![bad]).is_err());
    }
}
