use rand::Rng as _;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::RowMatrix;
use crate::rng::rng_from_seed;

const LLOYD_ITERS: usize = 10;

/// Starting point for EM.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansInit {
    pub centers: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest_center(x: &[f64], centers: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centers.iter().enumerate() {
        let d = sq_dist(x, c);
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    best
}

/// k-means++ seeding followed by up to ten Lloyd iterations.
///
/// The first center is a uniformly drawn row; each further center is drawn
/// with probability proportional to its squared distance from the nearest
/// chosen center, so centers are always distinct points.
pub fn init_kmeanspp(data: &RowMatrix, k: usize, seed: u64) -> Result<KMeansInit> {
    let n = data.rows();
    if k == 0 {
        return Err(Error::InvalidArgument("K must be at least 1".into()));
    }
    if n < k {
        return Err(Error::TooFewRows { n, k });
    }
    let mut rng = rng_from_seed(seed);

    let first = rng.random_range(0..n);
    let mut centers = vec![data.row(first).to_vec()];
    let mut d2: Vec<f64> = data.iter_rows().map(|x| sq_dist(x, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        if !(total > 0.0) {
            return Err(Error::DegenerateData(format!(
                "fewer than {k} distinct points"
            )));
        }
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, &w) in d2.iter().enumerate() {
            if w > 0.0 {
                acc += w;
                pick = Some(i);
                if acc > target {
                    break;
                }
            }
        }
        let pick = pick.expect("positive total implies a positive weight");
        let c = data.row(pick).to_vec();
        d2.iter_mut()
            .zip(data.iter_rows())
            .for_each(|(w, x)| *w = w.min(sq_dist(x, &c)));
        centers.push(c);
    }

    let d = data.cols();
    let mut assignments: Vec<usize> = Vec::new();
    for _ in 0..LLOYD_ITERS {
        let next: Vec<usize> = data
            .as_slice()
            .par_chunks(d)
            .map(|x| nearest_center(x, &centers))
            .collect();
        if next == assignments {
            break;
        }
        assignments = next;
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (x, &a) in data.iter_rows().zip(&assignments) {
            counts[a] += 1;
            sums[a].iter_mut().zip(x).for_each(|(s, v)| *s += v);
        }
        for j in 0..k {
            // an empty cluster keeps its previous center
            if counts[j] > 0 {
                centers[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
    }
    assignments = data
        .as_slice()
        .par_chunks(d)
        .map(|x| nearest_center(x, &centers))
        .collect();

    Ok(KMeansInit {
        centers,
        assignments,
    })
}
