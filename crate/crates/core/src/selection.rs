//! Choosing the covariance model and component count.
//!
//! BIC is used in its "larger is better" form, `2·lnL − m·ln n`. Silhouette
//! scores are computed on a stratified subsample because the exact score is
//! quadratic in the number of rows.

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::RowMatrix;
use crate::mixture::{fit, n_free_params, FitConfig, FitResult, MixtureModel, Parameterization};
use crate::rng::{derive_seed, rng_from_seed};

/// Default number of rows scored by [`silhouette_sampled`].
pub const DEFAULT_SILHOUETTE_SAMPLE: usize = 10_000;

/// `2·lnL − m·ln n`.
pub fn bic_value(loglik: f64, n_params: usize, n_obs: usize) -> f64 {
    2.0 * loglik - n_params as f64 * (n_obs as f64).ln()
}

pub fn bic(fit: &FitResult) -> Result<f64> {
    let ll = fit.loglik();
    if !ll.is_finite() {
        return Err(Error::Numerical(format!("log-likelihood is {ll}")));
    }
    Ok(bic_value(ll, fit.model.n_free_params(), fit.n_obs))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionRow {
    pub model: Parameterization,
    pub k: usize,
    pub bic: f64,
    pub loglik: f64,
    pub n_params: usize,
    pub converged: bool,
    pub iterations: usize,
    pub silhouette: Option<f64>,
    /// Set when the fit itself failed; such rows carry a NaN BIC.
    pub error: Option<String>,
    #[serde(skip)]
    pub fitted: Option<MixtureModel>,
}

/// One row per evaluated (model, K) pair plus the winning row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionTable {
    pub rows: Vec<SelectionRow>,
    /// Index of the best converged row, if any row converged.
    pub best: Option<usize>,
    /// Requested model name and the model actually fitted at this dimension.
    pub model_mapping: Vec<(Parameterization, Parameterization)>,
    pub n_obs: usize,
    pub d: usize,
}

impl SelectionTable {
    /// Picks the converged row with maximal BIC; ties go to smaller K and
    /// then to fewer free parameters.
    pub fn from_rows(
        rows: Vec<SelectionRow>,
        model_mapping: Vec<(Parameterization, Parameterization)>,
        n_obs: usize,
        d: usize,
    ) -> Self {
        let best = best_row(&rows);
        Self {
            rows,
            best,
            model_mapping,
            n_obs,
            d,
        }
    }

    pub fn best_row(&self) -> Option<&SelectionRow> {
        self.best.map(|i| &self.rows[i])
    }

    /// CSV with columns `model,K,bic,converged,silhouette`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["model", "K", "bic", "converged", "silhouette"])?;
        for r in &self.rows {
            w.write_record([
                r.model.name().to_string(),
                r.k.to_string(),
                r.bic.to_string(),
                r.converged.to_string(),
                r.silhouette.map(|s| s.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn best_row(rows: &[SelectionRow]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, r) in rows.iter().enumerate() {
        if !r.converged || !r.bic.is_finite() {
            continue;
        }
        let better = match best {
            None => true,
            Some(b) => {
                let cur = &rows[b];
                r.bic > cur.bic
                    || (r.bic == cur.bic
                        && (r.k < cur.k || (r.k == cur.k && r.n_params < cur.n_params)))
            }
        };
        if better {
            best = Some(i);
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct GridConfig {
    pub fit: FitConfig,
    /// Silhouette subsample size; `None` skips silhouettes.
    pub silhouette_sample: Option<usize>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            fit: FitConfig::default(),
            silhouette_sample: Some(DEFAULT_SILHOUETTE_SAMPLE),
        }
    }
}

/// Maps requested models onto their equivalents at dimension `d`, dropping
/// duplicates after the mapping.
pub fn resolve_models(
    requested: &[Parameterization],
    d: usize,
) -> (Vec<Parameterization>, Vec<(Parameterization, Parameterization)>) {
    let mut effective = Vec::new();
    let mut mapping = Vec::new();
    for &p in requested {
        if let Some(e) = p.for_dimension(d) {
            mapping.push((p, e));
            if !effective.contains(&e) {
                effective.push(e);
            }
        }
    }
    (effective, mapping)
}

fn cell_seed(master: u64, model: Parameterization, k: usize) -> u64 {
    derive_seed(master, ((model as u64) << 32) | k as u64)
}

/// Fits every legal (model, K) pair and tabulates BIC and silhouette.
///
/// Each cell fits with its own seed derived from `config.fit.seed`, the
/// model and K, so the table does not depend on evaluation order.
pub fn grid_search(
    data: &RowMatrix,
    k_range: &[usize],
    models: &[Parameterization],
    config: &GridConfig,
) -> Result<SelectionTable> {
    config.fit.validate()?;
    let (n, d) = (data.rows(), data.cols());
    if k_range.is_empty() {
        return Err(Error::InvalidArgument("empty K range".into()));
    }
    if let Some(&k) = k_range.iter().find(|&&k| k == 0 || k >= n) {
        return Err(Error::InvalidArgument(format!("K = {k} is outside 1..{n}")));
    }
    let (effective, mapping) = resolve_models(models, d);
    if effective.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no requested parameterization is legal for d = {d}"
        )));
    }

    let cells: Vec<(Parameterization, usize)> = effective
        .iter()
        .flat_map(|&m| k_range.iter().map(move |&k| (m, k)))
        .collect();

    let rows: Vec<SelectionRow> = cells
        .par_iter()
        .map(|&(model, k)| {
            let seed = cell_seed(config.fit.seed, model, k);
            let cfg = FitConfig {
                seed,
                ..config.fit.clone()
            };
            let n_params = n_free_params(model, k, d).expect("model resolved for this dimension");
            match fit(data, k, model, &cfg) {
                Ok(f) => {
                    let silhouette = match config.silhouette_sample {
                        Some(m) if k > 1 => {
                            silhouette_sampled(data, &f.hard_assignments, m, derive_seed(seed, 1)).ok()
                        }
                        _ => None,
                    };
                    let bic = bic(&f).unwrap_or(f64::NAN);
                    SelectionRow {
                        model,
                        k,
                        bic,
                        loglik: f.loglik(),
                        n_params,
                        converged: f.converged,
                        iterations: f.iterations,
                        silhouette,
                        error: None,
                        fitted: Some(f.model),
                    }
                }
                Err(e) => SelectionRow {
                    model,
                    k,
                    bic: f64::NAN,
                    loglik: f64::NAN,
                    n_params,
                    converged: false,
                    iterations: 0,
                    silhouette: None,
                    error: Some(e.to_string()),
                    fitted: None,
                },
            }
        })
        .collect();

    Ok(SelectionTable::from_rows(rows, mapping, n, d))
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Per-row silhouette values `(b − a) / max(a, b)` over all rows.
/// Members of singleton clusters score 0.
pub fn silhouette_samples(data: &RowMatrix, labels: &[usize]) -> Result<Vec<f64>> {
    let n = data.rows();
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: labels.len(),
        });
    }
    // dense relabel in order of first label value
    let distinct: BTreeMap<usize, usize> = labels
        .iter()
        .copied()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, l)| (l, i))
        .collect();
    let c = distinct.len();
    if c < 2 {
        return Err(Error::InvalidArgument(
            "silhouette needs at least two clusters".into(),
        ));
    }
    let dense: Vec<usize> = labels.iter().map(|l| distinct[l]).collect();
    let mut sizes = vec![0usize; c];
    for &l in &dense {
        sizes[l] += 1;
    }

    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let own = dense[i];
            if sizes[own] == 1 {
                return 0.0;
            }
            let xi = data.row(i);
            let mut sums = vec![0.0; c];
            for (j, xj) in data.iter_rows().enumerate() {
                sums[dense[j]] += euclidean(xi, xj);
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..c)
                .filter(|&l| l != own)
                .map(|l| sums[l] / sizes[l] as f64)
                .fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            if denom > 0.0 {
                (b - a) / denom
            } else {
                0.0
            }
        })
        .collect())
}

/// Mean silhouette over all rows.
pub fn silhouette_exact(data: &RowMatrix, labels: &[usize]) -> Result<f64> {
    let s = silhouette_samples(data, labels)?;
    Ok(s.iter().sum::<f64>() / s.len() as f64)
}

/// Rows drawn per cluster: proportional to cluster size (largest remainder),
/// at least one per cluster, never more than the cluster holds.
fn stratified_allocation(sizes: &[usize], sample_size: usize) -> Vec<usize> {
    let n: usize = sizes.iter().sum();
    let quotas: Vec<f64> = sizes
        .iter()
        .map(|&s| sample_size as f64 * s as f64 / n as f64)
        .collect();
    let mut alloc: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut remaining = sample_size.saturating_sub(alloc.iter().sum());
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &j in &order {
        if remaining == 0 {
            break;
        }
        alloc[j] += 1;
        remaining -= 1;
    }
    alloc
        .iter()
        .zip(sizes)
        .map(|(&a, &s)| a.max(1).min(s))
        .collect()
}

/// Average silhouette on a stratified random subsample of `sample_size`
/// rows, with distances taken among the sampled rows. Exact when the data
/// has no more than `sample_size` rows.
pub fn silhouette_sampled(
    data: &RowMatrix,
    labels: &[usize],
    sample_size: usize,
    seed: u64,
) -> Result<f64> {
    let n = data.rows();
    if sample_size < 2 {
        return Err(Error::InvalidArgument("silhouette sample size must be at least 2".into()));
    }
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: labels.len(),
        });
    }
    if n <= sample_size {
        return silhouette_exact(data, labels);
    }

    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        members.entry(l).or_default().push(i);
    }
    if members.len() < 2 {
        return Err(Error::InvalidArgument(
            "silhouette needs at least two clusters".into(),
        ));
    }
    let sizes: Vec<usize> = members.values().map(Vec::len).collect();
    let alloc = stratified_allocation(&sizes, sample_size);

    let mut rng = rng_from_seed(seed);
    let mut picked = Vec::with_capacity(sample_size + members.len());
    for (mut idx, take) in members.into_values().zip(alloc) {
        // partial Fisher-Yates
        for t in 0..take {
            let j = rng.random_range(t..idx.len());
            idx.swap(t, j);
        }
        picked.extend_from_slice(&idx[..take]);
    }
    picked.sort_unstable();

    let sub = data.select_rows(&picked);
    let sub_labels: Vec<usize> = picked.iter().map(|&i| labels[i]).collect();
    silhouette_exact(&sub, &sub_labels)
}

fn comb2(v: usize) -> f64 {
    let v = v as f64;
    v * (v - 1.0) / 2.0
}

/// Adjusted Rand index from the pair-counting contingency table.
pub fn adjusted_rand_index(labels_a: &[usize], labels_b: &[usize]) -> Result<f64> {
    if labels_a.len() != labels_b.len() {
        return Err(Error::DimensionMismatch {
            expected: labels_a.len(),
            actual: labels_b.len(),
        });
    }
    let n = labels_a.len();
    if n < 2 {
        return Err(Error::InvalidArgument("ARI needs at least two items".into()));
    }
    let mut left: BTreeMap<usize, usize> = BTreeMap::new();
    let mut right: BTreeMap<usize, usize> = BTreeMap::new();
    let mut joint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (&a, &b) in labels_a.iter().zip(labels_b) {
        *left.entry(a).or_default() += 1;
        *right.entry(b).or_default() += 1;
        *joint.entry((a, b)).or_default() += 1;
    }
    let index: f64 = joint.values().map(|&c| comb2(c)).sum();
    let sum_a: f64 = left.values().map(|&c| comb2(c)).sum();
    let sum_b: f64 = right.values().map(|&c| comb2(c)).sum();
    let expected = sum_a * sum_b / comb2(n);
    let max_index = 0.5 * (sum_a + sum_b);
    let denom = max_index - expected;
    if denom == 0.0 {
        return Ok(1.0);
    }
    Ok((index - expected) / denom)
}
