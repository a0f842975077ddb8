use std::f64::consts::PI;

use rayon::prelude::*;

use super::{argmax, MixtureModel};
use crate::error::{Error, Result};
use crate::matrix::RowMatrix;

/// Rows per parallel work unit. Partial sums are combined in chunk order, so
/// results do not depend on the number of worker threads.
pub(crate) const ROW_CHUNK: usize = 2048;

const UNDERFLOW: f64 = -746.0;

/// Per-component constants for evaluating `ln(w_k) + ln N(x; μ_k, Σ_k)`.
#[derive(Debug, Clone)]
pub struct ComponentCache {
    mean: Vec<f64>,
    /// Lower Cholesky factor of Σ_k, row-major.
    chol: Vec<f64>,
    /// `ln w_k − ½(d ln 2π + ln|Σ_k|)`.
    log_coef: f64,
}

impl ComponentCache {
    pub fn for_model(model: &MixtureModel) -> Result<Vec<ComponentCache>> {
        let d = model.d();
        model
            .covariances()
            .iter()
            .zip(model.means())
            .zip(model.weights())
            .map(|((cov, mean), &w)| {
                let chol = cov
                    .clone()
                    .cholesky()
                    .ok_or_else(|| Error::Numerical("covariance lost positive definiteness".into()))?;
                let l = chol.l();
                let mut flat = vec![0.0; d * d];
                let mut log_det = 0.0;
                for i in 0..d {
                    for j in 0..=i {
                        flat[i * d + j] = l[(i, j)];
                    }
                    log_det += 2.0 * l[(i, i)].ln();
                }
                Ok(ComponentCache {
                    mean: mean.clone(),
                    chol: flat,
                    log_coef: w.ln() - 0.5 * (d as f64 * (2.0 * PI).ln() + log_det),
                })
            })
            .collect()
    }

    /// Weighted log density of `x` under this component.
    #[inline]
    pub fn log_term(&self, x: &[f64], scratch: &mut [f64]) -> f64 {
        let d = self.mean.len();
        let mut quad = 0.0;
        for i in 0..d {
            let mut s = x[i] - self.mean[i];
            let row = &self.chol[i * d..i * d + i];
            for (lij, yj) in row.iter().zip(scratch.iter()) {
                s -= lij * yj;
            }
            let yi = s / self.chol[i * d + i];
            scratch[i] = yi;
            quad += yi * yi;
        }
        self.log_coef - 0.5 * quad
    }
}

/// Fills `out` with normalized responsibilities and returns the log mixture
/// density of `x`.
#[inline]
fn posterior_row(caches: &[ComponentCache], x: &[f64], out: &mut [f64], scratch: &mut [f64]) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for (o, c) in out.iter_mut().zip(caches) {
        *o = c.log_term(x, scratch);
        if *o > max {
            max = *o;
        }
    }
    let mut sum = 0.0;
    for o in out.iter_mut() {
        *o = (*o - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
    max + sum.ln()
}

/// E-step over a chunk of one-dimensional rows.
fn univariate_chunk(caches: &[ComponentCache], xs: &[f64], resp: &mut [f64], log_dens: &mut [f64]) -> f64 {
    let k = caches.len();
    let mu: Vec<f64> = caches.iter().map(|c| c.mean[0]).collect();
    let inv_sd: Vec<f64> = caches.iter().map(|c| 1.0 / c.chol[0]).collect();
    let coef: Vec<f64> = caches.iter().map(|c| c.log_coef).collect();
    let mut acc = 0.0;
    for ((&x, r), ld) in xs.iter().zip(resp.chunks_exact_mut(k)).zip(log_dens.iter_mut()) {
        let mut max = f64::NEG_INFINITY;
        for j in 0..k {
            let z = (x - mu[j]) * inv_sd[j];
            let v = coef[j] - 0.5 * z * z;
            r[j] = v;
            max = max.max(v);
        }
        let mut sum = 0.0;
        for v in r.iter_mut() {
            let t = *v - max;
            // exp underflows to exactly zero below this point
            *v = if t < UNDERFLOW { 0.0 } else { t.exp() };
            sum += *v;
        }
        let inv = 1.0 / sum;
        for v in r.iter_mut() {
            *v *= inv;
        }
        *ld = max + sum.ln();
        acc += *ld;
    }
    acc
}

fn check_dim(model: &MixtureModel, d: usize) -> Result<()> {
    if d != model.d() {
        return Err(Error::DimensionMismatch {
            expected: model.d(),
            actual: d,
        });
    }
    Ok(())
}

/// `ln Σ_k w_k N(x; μ_k, Σ_k)` evaluated with log-sum-exp.
pub fn log_density(model: &MixtureModel, x: &[f64]) -> Result<f64> {
    check_dim(model, x.len())?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite observation".into()));
    }
    let caches = ComponentCache::for_model(model)?;
    let mut out = vec![0.0; model.k()];
    let mut scratch = vec![0.0; model.d()];
    Ok(posterior_row(&caches, x, &mut out, &mut scratch))
}

/// Output of [`e_step`].
#[derive(Debug, Clone)]
pub struct EStep {
    pub responsibilities: RowMatrix,
    pub loglik: f64,
    /// Log mixture density of each row.
    pub log_densities: Vec<f64>,
}

/// Posterior membership probabilities and the total log-likelihood.
pub fn e_step(model: &MixtureModel, data: &RowMatrix) -> Result<EStep> {
    check_dim(model, data.cols())?;
    let caches = ComponentCache::for_model(model)?;
    let (n, d, k) = (data.rows(), data.cols(), model.k());
    let mut resp = RowMatrix::zeros(n, k);
    let mut log_densities = vec![0.0; n];

    let partials: Vec<f64> = resp
        .as_mut_slice()
        .par_chunks_mut(ROW_CHUNK * k)
        .zip(data.as_slice().par_chunks(ROW_CHUNK * d))
        .zip(log_densities.par_chunks_mut(ROW_CHUNK))
        .map(|((r_chunk, x_chunk), ld_chunk)| {
            if d == 1 {
                return univariate_chunk(&caches, x_chunk, r_chunk, ld_chunk);
            }
            let mut scratch = vec![0.0; d];
            let mut acc = 0.0;
            for ((r, x), ld) in r_chunk
                .chunks_exact_mut(k)
                .zip(x_chunk.chunks_exact(d))
                .zip(ld_chunk.iter_mut())
            {
                *ld = posterior_row(&caches, x, r, &mut scratch);
                acc += *ld;
            }
            acc
        })
        .collect();

    let loglik = partials.iter().sum();
    Ok(EStep {
        responsibilities: resp,
        loglik,
        log_densities,
    })
}

/// Hard assignments and posteriors for (possibly new) rows.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub assignments: Vec<usize>,
    pub responsibilities: RowMatrix,
}

pub fn predict(model: &MixtureModel, data: &RowMatrix) -> Result<Prediction> {
    let e = e_step(model, data)?;
    let assignments = e.responsibilities.iter_rows().map(argmax).collect();
    Ok(Prediction {
        assignments,
        responsibilities: e.responsibilities,
    })
}
