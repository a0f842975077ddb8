use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use super::density::ROW_CHUNK;
use super::Parameterization;
use crate::error::{Error, Result};
use crate::matrix::RowMatrix;

/// Parameters produced by one maximization step.
#[derive(Debug, Clone)]
pub struct MStep {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub covariances: Vec<DMatrix<f64>>,
    /// Components whose responsibility mass fell below `10·ε_mach·n`. Their
    /// mean is a placeholder (the global mean) and their covariance is the
    /// pooled or averaged value over live components; callers reseed them.
    pub dead: Vec<usize>,
}

struct Moments {
    mass: Vec<f64>,
    sums: Vec<f64>,
}

fn first_moments(data: &RowMatrix, resp: &RowMatrix) -> Moments {
    let (d, k) = (data.cols(), resp.cols());
    let partials: Vec<Moments> = data
        .as_slice()
        .par_chunks(ROW_CHUNK * d)
        .zip(resp.as_slice().par_chunks(ROW_CHUNK * k))
        .map(|(xs, rs)| {
            let mut m = Moments {
                mass: vec![0.0; k],
                sums: vec![0.0; k * d],
            };
            for (x, r) in xs.chunks_exact(d).zip(rs.chunks_exact(k)) {
                for (j, &rj) in r.iter().enumerate() {
                    m.mass[j] += rj;
                    for (s, xi) in m.sums[j * d..(j + 1) * d].iter_mut().zip(x) {
                        *s += rj * xi;
                    }
                }
            }
            m
        })
        .collect();
    let mut total = Moments {
        mass: vec![0.0; k],
        sums: vec![0.0; k * d],
    };
    for p in partials {
        total.mass.iter_mut().zip(&p.mass).for_each(|(a, b)| *a += b);
        total.sums.iter_mut().zip(&p.sums).for_each(|(a, b)| *a += b);
    }
    total
}

/// Responsibility-weighted scatter `Σ_i r_ik (x_i − μ_k)(x_i − μ_k)ᵀ` for
/// every component, as row-major d×d blocks.
fn scatter(data: &RowMatrix, resp: &RowMatrix, means: &[Vec<f64>]) -> Vec<DMatrix<f64>> {
    let (d, k) = (data.cols(), resp.cols());
    let partials: Vec<Vec<f64>> = data
        .as_slice()
        .par_chunks(ROW_CHUNK * d)
        .zip(resp.as_slice().par_chunks(ROW_CHUNK * k))
        .map(|(xs, rs)| {
            let mut acc = vec![0.0; k * d * d];
            if d == 1 {
                for (&x, r) in xs.iter().zip(rs.chunks_exact(k)) {
                    for ((a, &rj), m) in acc.iter_mut().zip(r).zip(means) {
                        let dv = x - m[0];
                        *a += rj * dv * dv;
                    }
                }
                return acc;
            }
            let mut dev = vec![0.0; d];
            for (x, r) in xs.chunks_exact(d).zip(rs.chunks_exact(k)) {
                for (j, &rj) in r.iter().enumerate() {
                    if rj == 0.0 {
                        continue;
                    }
                    for ((dv, xi), mi) in dev.iter_mut().zip(x).zip(&means[j]) {
                        *dv = xi - mi;
                    }
                    let block = &mut acc[j * d * d..(j + 1) * d * d];
                    for a in 0..d {
                        let ra = rj * dev[a];
                        for b in 0..=a {
                            block[a * d + b] += ra * dev[b];
                        }
                    }
                }
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; k * d * d];
    for p in partials {
        total.iter_mut().zip(&p).for_each(|(a, b)| *a += b);
    }
    (0..k)
        .map(|j| {
            let block = &total[j * d * d..(j + 1) * d * d];
            DMatrix::from_fn(d, d, |a, b| if a >= b { block[a * d + b] } else { block[b * d + a] })
        })
        .collect()
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

fn with_ridge(m: DMatrix<f64>, eps: f64) -> DMatrix<f64> {
    let d = m.nrows();
    symmetrize(m) + DMatrix::<f64>::identity(d, d) * eps
}

fn diag_matrix(values: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_column_slice(values))
}

/// Eigen-decomposition with eigenvalues sorted in decreasing order and
/// eigenvector columns permuted to match.
fn sorted_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let d = m.nrows();
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let vectors = DMatrix::from_fn(d, d, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Closed-form maximization of the expected complete-data log-likelihood
/// under the covariance constraints of `model`, plus a ridge of `cov_floor`.
pub fn m_step(
    data: &RowMatrix,
    resp: &RowMatrix,
    model: Parameterization,
    cov_floor: f64,
) -> Result<MStep> {
    let (n, d, k) = (data.rows(), data.cols(), resp.cols());
    model.check_legal(d)?;
    if resp.rows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: resp.rows(),
        });
    }
    if n == 0 {
        return Err(Error::InvalidArgument("m_step needs at least one row".into()));
    }

    let moments = first_moments(data, resp);
    let dead_threshold = 10.0 * f64::EPSILON * n as f64;
    let dead: Vec<usize> = (0..k).filter(|&j| moments.mass[j] < dead_threshold).collect();
    let live: Vec<usize> = (0..k).filter(|j| !dead.contains(j)).collect();
    if live.is_empty() {
        return Err(Error::Numerical("every component lost its responsibility mass".into()));
    }

    let total_mass: f64 = moments.mass.iter().sum();
    let weights: Vec<f64> = moments.mass.iter().map(|m| m / total_mass).collect();

    let global_mean: Vec<f64> = (0..d)
        .map(|c| data.iter_rows().map(|r| r[c]).sum::<f64>() / n as f64)
        .collect();
    let means: Vec<Vec<f64>> = (0..k)
        .map(|j| {
            if dead.contains(&j) {
                global_mean.clone()
            } else {
                moments.sums[j * d..(j + 1) * d]
                    .iter()
                    .map(|s| s / moments.mass[j])
                    .collect()
            }
        })
        .collect();

    let scatters = scatter(data, resp, &means);
    let live_mass: f64 = live.iter().map(|&j| moments.mass[j]).sum();
    let pooled = || {
        let mut w = DMatrix::<f64>::zeros(d, d);
        for &j in &live {
            w += &scatters[j];
        }
        w
    };
    let per_live = |f: &dyn Fn(usize) -> DMatrix<f64>| -> Vec<Option<DMatrix<f64>>> {
        (0..k)
            .map(|j| if dead.contains(&j) { None } else { Some(f(j)) })
            .collect()
    };
    // Dead components of variable-volume models take the average of the
    // live components' matrices.
    let fill_dead = |mut covs: Vec<Option<DMatrix<f64>>>| -> Vec<DMatrix<f64>> {
        let mut avg = DMatrix::<f64>::zeros(d, d);
        for c in covs.iter().flatten() {
            avg += c;
        }
        avg /= live.len() as f64;
        covs.iter_mut()
            .map(|c| c.take().unwrap_or_else(|| avg.clone()))
            .collect()
    };

    let covariances: Vec<DMatrix<f64>> = match model {
        Parameterization::E | Parameterization::EEE => {
            let shared = with_ridge(pooled() / live_mass, cov_floor);
            vec![shared; k]
        }
        Parameterization::V | Parameterization::VVV => fill_dead(per_live(&|j| {
            with_ridge(scatters[j].clone() / moments.mass[j], cov_floor)
        })),
        Parameterization::EII => {
            let lambda = pooled().trace() / (live_mass * d as f64);
            let shared = DMatrix::<f64>::identity(d, d) * (lambda + cov_floor);
            vec![shared; k]
        }
        Parameterization::VII => fill_dead(per_live(&|j| {
            let lambda = scatters[j].trace() / (moments.mass[j] * d as f64);
            DMatrix::<f64>::identity(d, d) * (lambda + cov_floor)
        })),
        Parameterization::EEI => {
            let w = pooled();
            let diag: Vec<f64> = (0..d).map(|a| w[(a, a)] / live_mass + cov_floor).collect();
            vec![diag_matrix(&diag); k]
        }
        Parameterization::VVI => fill_dead(per_live(&|j| {
            let diag: Vec<f64> = (0..d)
                .map(|a| scatters[j][(a, a)] / moments.mass[j] + cov_floor)
                .collect();
            diag_matrix(&diag)
        })),
        Parameterization::EEV => {
            let decomps: Vec<Option<(Vec<f64>, DMatrix<f64>)>> = (0..k)
                .map(|j| {
                    if dead.contains(&j) {
                        None
                    } else {
                        Some(sorted_eigen(&scatters[j]))
                    }
                })
                .collect();
            let mut shape = vec![0.0; d];
            for (vals, _) in decomps.iter().flatten() {
                shape.iter_mut().zip(vals).for_each(|(s, v)| *s += v);
            }
            shape.iter_mut().for_each(|s| *s /= live_mass);
            let core = diag_matrix(&shape);
            decomps
                .into_iter()
                .map(|dec| match dec {
                    Some((_, vecs)) => with_ridge(&vecs * &core * vecs.transpose(), cov_floor),
                    None => with_ridge(core.clone(), cov_floor),
                })
                .collect()
        }
    };

    Ok(MStep {
        weights,
        means,
        covariances,
        dead,
    })
}
