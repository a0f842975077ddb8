use rayon::prelude::*;

use super::density::e_step;
use super::init::init_kmeanspp;
use super::mstep::{m_step, MStep};
use super::{argmax, FitConfig, FitResult, MixtureModel, Parameterization};
use crate::error::{Error, Result};
use crate::matrix::RowMatrix;
use crate::rng::derive_seed;

/// Relative ridge factor applied to the mean diagonal of the data covariance.
pub const COV_FLOOR_FACTOR: f64 = 1e-6;

/// `1e-6 ×` the mean of the diagonal of the (population) data covariance.
/// Fails on data whose rows are all identical.
pub fn default_cov_floor(data: &RowMatrix) -> Result<f64> {
    let (n, d) = (data.rows(), data.cols());
    if n == 0 {
        return Err(Error::InvalidArgument("empty data".into()));
    }
    let mut trace = 0.0;
    for c in 0..d {
        let mean = data.iter_rows().map(|r| r[c]).sum::<f64>() / n as f64;
        trace += data.iter_rows().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / n as f64;
    }
    if !(trace > 0.0) {
        return Err(Error::DegenerateData("all observations are identical".into()));
    }
    Ok(COV_FLOOR_FACTOR * trace / d as f64)
}

fn assemble(
    model: Parameterization,
    step: MStep,
    reseed_at: impl Fn(usize, usize) -> Vec<f64>,
    n: usize,
) -> (MixtureModel, usize) {
    let MStep {
        mut weights,
        mut means,
        covariances,
        dead,
    } = step;
    for (slot, &j) in dead.iter().enumerate() {
        means[j] = reseed_at(j, slot);
        weights[j] = 1.0 / n as f64;
    }
    if !dead.is_empty() {
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
    }
    (
        MixtureModel::from_parts_unchecked(model, weights, means, covariances),
        dead.len(),
    )
}

fn run_em(
    data: &RowMatrix,
    k: usize,
    model: Parameterization,
    cov_floor: f64,
    config: &FitConfig,
    seed: u64,
    restart: usize,
) -> Result<FitResult> {
    let n = data.rows();
    let init = init_kmeanspp(data, k, seed)?;
    let mut onehot = RowMatrix::zeros(n, k);
    for (i, &a) in init.assignments.iter().enumerate() {
        onehot.row_mut(i)[a] = 1.0;
    }
    let step = m_step(data, &onehot, model, cov_floor)?;
    let (mut current, mut reseeds) = assemble(model, step, |j, _| init.centers[j].clone(), n);

    let mut trace = Vec::new();
    let mut converged = false;
    let estep = loop {
        let estep = e_step(&current, data)?;
        if !estep.loglik.is_finite() {
            return Err(Error::Numerical(format!(
                "log-likelihood became {} at iteration {}",
                estep.loglik,
                trace.len() + 1
            )));
        }
        trace.push(estep.loglik);
        if let [.., prev, last] = trace[..] {
            if (last - prev).abs() < config.tol * last.abs() {
                converged = true;
                break estep;
            }
        }
        if trace.len() >= config.max_iter {
            break estep;
        }
        let step = m_step(data, &estep.responsibilities, model, cov_floor)?;
        let lowest = if step.dead.is_empty() {
            Vec::new()
        } else {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| {
                estep.log_densities[a]
                    .total_cmp(&estep.log_densities[b])
                    .then(a.cmp(&b))
            });
            idx.truncate(step.dead.len());
            idx
        };
        let (next, dead) = assemble(model, step, |_, slot| data.row(lowest[slot]).to_vec(), n);
        reseeds += dead;
        current = next;
    };

    let hard_assignments = estep.responsibilities.iter_rows().map(argmax).collect();
    Ok(FitResult {
        model: current,
        responsibilities: estep.responsibilities,
        iterations: trace.len(),
        loglik_trace: trace,
        hard_assignments,
        converged,
        cov_floor,
        restart,
        reseeds,
        n_obs: n,
    })
}

/// Fits a `k`-component mixture by EM, keeping the best of
/// `config.n_restarts` k-means++ initializations.
///
/// Restart `r` is seeded with `derive_seed(config.seed, r)`; restarts run in
/// parallel but the winner (highest final log-likelihood, lowest restart
/// index on ties) does not depend on scheduling.
pub fn fit(
    data: &RowMatrix,
    k: usize,
    model: Parameterization,
    config: &FitConfig,
) -> Result<FitResult> {
    config.validate()?;
    let (n, d) = (data.rows(), data.cols());
    model.check_legal(d)?;
    if k == 0 {
        return Err(Error::InvalidArgument("K must be at least 1".into()));
    }
    if n <= k {
        return Err(Error::TooFewRows { n, k });
    }
    if data.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("data contains non-finite values".into()));
    }
    let cov_floor = match config.cov_floor {
        Some(eps) => {
            default_cov_floor(data)?;
            eps
        }
        None => default_cov_floor(data)?,
    };

    let runs: Vec<Result<FitResult>> = (0..config.n_restarts)
        .into_par_iter()
        .map(|r| run_em(data, k, model, cov_floor, config, derive_seed(config.seed, r as u64), r))
        .collect();

    let mut best: Option<FitResult> = None;
    let mut first_err = None;
    for run in runs {
        match run {
            Ok(fit) => {
                if best.as_ref().is_none_or(|b| fit.loglik() > b.loglik()) {
                    best = Some(fit);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_err.expect("at least one restart ran"))
}
