//! Independent reference computations for the integration tests.
//!
//! Nothing here calls into the library's numerics: densities use explicit
//! inverses and direct summation in double-double arithmetic, silhouette and
//! ARI are the textbook quadratic definitions, and great-circle distances use
//! the spherical law of cosines.
#![allow(dead_code)]

use std::collections::BTreeMap;

use twofloat::TwoFloat;

pub const R_MILES: f64 = 3958.7613;

fn tf(x: f64) -> TwoFloat {
    TwoFloat::from(x)
}

/// Posterior membership probabilities and log mixture density of `x`,
/// evaluated by direct summation of `w_k N(x; μ_k, Σ_k)` in double-double
/// precision. Supports d ∈ {1, 2}.
pub fn posterior_oracle(weights: &[f64], means: &[Vec<f64>], covs: &[Vec<Vec<f64>>], x: &[f64]) -> (Vec<f64>, f64) {
    let d = x.len();
    assert!(d == 1 || d == 2, "oracle supports d <= 2");
    let two_pi = TwoFloat::from(2.0) * twofloat::consts::PI;
    let terms: Vec<TwoFloat> = weights
        .iter()
        .zip(means)
        .zip(covs)
        .map(|((&w, mu), s)| {
            let (det, quad) = if d == 1 {
                let v = tf(s[0][0]);
                let dx = tf(x[0]) - tf(mu[0]);
                (v, dx * dx / v)
            } else {
                let (a, b, c) = (tf(s[0][0]), tf(s[0][1]), tf(s[1][1]));
                let det = a * c - b * b;
                let (u, v) = (tf(x[0]) - tf(mu[0]), tf(x[1]) - tf(mu[1]));
                // explicit 2x2 inverse
                let quad = (c * u * u - TwoFloat::from(2.0) * b * u * v + a * v * v) / det;
                (det, quad)
            };
            let norm = if d == 1 { two_pi.sqrt() } else { two_pi };
            tf(w) * (-(quad / TwoFloat::from(2.0))).exp() / (norm * det.sqrt())
        })
        .collect();
    let total = terms.iter().fold(TwoFloat::from(0.0), |acc, &t| acc + t);
    let post = terms.iter().map(|&t| f64::from(t / total)).collect();
    // ln(hi + lo) = ln(hi) + ln(1 + lo/hi), with lo/hi below 1e-16
    let log_density = total.hi().ln() + total.lo() / total.hi();
    (post, log_density)
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += (a[i] - b[i]) * (a[i] - b[i]);
    }
    s.sqrt()
}

/// Per-point silhouette by the quadratic definition. Singleton members
/// score 0, as does a point whose `a` and `b` are both zero.
pub fn silhouette_oracle(points: &[Vec<f64>], labels: &[usize]) -> Vec<f64> {
    let n = points.len();
    let mut out = vec![0.0; n];
    for i in 0..n {
        let mut sums: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
        for j in 0..n {
            if i == j {
                continue;
            }
            let e = sums.entry(labels[j]).or_insert((0.0, 0));
            e.0 += euclid(&points[i], &points[j]);
            e.1 += 1;
        }
        let own = match sums.get(&labels[i]) {
            Some(&(s, c)) if c > 0 => s / c as f64,
            _ => continue,
        };
        let other = sums
            .iter()
            .filter(|(l, _)| **l != labels[i])
            .map(|(_, &(s, c))| s / c as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = own.max(other);
        out[i] = if denom > 0.0 { (other - own) / denom } else { 0.0 };
    }
    out
}

/// Adjusted Rand index from explicit pair counts.
pub fn ari_oracle(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    let (mut both, mut only_a, mut only_b, mut neither) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            match (a[i] == a[j], b[i] == b[j]) {
                (true, true) => both += 1.0,
                (true, false) => only_a += 1.0,
                (false, true) => only_b += 1.0,
                (false, false) => neither += 1.0,
            }
        }
    }
    let pairs: f64 = both + only_a + only_b + neither;
    let same_a = both + only_a;
    let same_b = both + only_b;
    let expected = same_a * same_b / pairs;
    let max = 0.5 * (same_a + same_b);
    if max == expected {
        return 1.0;
    }
    (both - expected) / (max - expected)
}

/// Free-parameter count of a mixture, assembled from the volume / shape /
/// orientation letters of the model name.
pub fn free_params_oracle(name: &str, k: usize, d: usize) -> usize {
    let base = (k - 1) + k * d;
    if d == 1 {
        return base + if name == "E" { 1 } else { k };
    }
    let letters: Vec<char> = name.chars().collect();
    let per = |c: char, shared: usize, varying: usize| match c {
        'E' => shared,
        'V' => varying,
        _ => 0,
    };
    let rot = d * (d - 1) / 2;
    base + per(letters[0], 1, k) + per(letters[1], d - 1, k * (d - 1)) + per(letters[2], rot, k * rot)
}

/// Great-circle distance by the spherical law of cosines.
pub fn law_of_cosines_miles(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dl = (lon2 - lon1).to_radians();
    let c = p1.sin() * p2.sin() + p1.cos() * p2.cos() * dl.cos();
    R_MILES * c.clamp(-1.0, 1.0).acos()
}

/// Draws from a 1-D Gaussian mixture; returns values and component labels.
pub fn mixture_1d(weights: &[f64], means: &[f64], sds: &[f64], n: usize, seed: u64) -> (Vec<f64>, Vec<usize>) {
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = foodgmm::rng::rng_from_seed(seed);
    let mut xs = Vec::with_capacity(n);
    let mut zs = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.random();
        let mut c = 0;
        let mut acc = weights[0];
        while u >= acc && c + 1 < weights.len() {
            c += 1;
            acc += weights[c];
        }
        let g: f64 = StandardNormal.sample(&mut rng);
        xs.push(means[c] + sds[c] * g);
        zs.push(c);
    }
    (xs, zs)
}

/// Rows of 2-D data from three equally weighted components sharing the
/// eigenvalues {4, 1} with independent uniformly random orientations.
/// Returns the rows (flattened) and labels.
pub fn eev_data(n: usize, seed: u64) -> (Vec<f64>, Vec<usize>) {
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = foodgmm::rng::rng_from_seed(seed);
    let centres = [[0.0, 0.0], [9.0, 0.0], [4.5, 8.0]];
    let angles: Vec<f64> = (0..3).map(|_| std::f64::consts::PI * rng.random::<f64>()).collect();
    let mut rows = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % 3;
        let (s, co) = angles[c].sin_cos();
        let a: f64 = StandardNormal.sample(&mut rng);
        let b: f64 = StandardNormal.sample(&mut rng);
        // scale by sqrt of eigenvalues, then rotate
        let (u, v) = (2.0 * a, b);
        rows.push(centres[c][0] + co * u - s * v);
        rows.push(centres[c][1] + s * u + co * v);
        labels.push(c);
    }
    (rows, labels)
}
