mod common;

use foodgmm::mixture::{FitConfig, Parameterization};
use foodgmm::rng::rng_from_seed;
use foodgmm::selection::*;
use foodgmm::RowMatrix;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn clustered(n: usize, d: usize, k: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = rng_from_seed(seed);
    let mut pts = Vec::new();
    let mut labels = Vec::new();
    for i in 0..n {
        let c = i % k;
        let p: Vec<f64> = (0..d)
            .map(|j| {
                let z: f64 = StandardNormal.sample(&mut rng);
                3.0 * ((c * (j + 1)) % k) as f64 + z
            })
            .collect();
        pts.push(p);
        labels.push(if rng.random::<f64>() < 0.1 { rng.random_range(0..k) } else { c });
    }
    (pts, labels)
}

#[test]
fn exact_silhouette_matches_quadratic_oracle() {
    for (d, k, seed) in [(1, 2, 1), (2, 3, 2), (3, 4, 3), (2, 5, 4)] {
        let (pts, labels) = clustered(200, d, k, seed);
        let data = RowMatrix::from_rows(&pts).unwrap();
        let got = silhouette_samples(&data, &labels).unwrap();
        let want = common::silhouette_oracle(&pts, &labels);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() <= 1e-12, "{g} vs {w}");
        }
        let avg = want.iter().sum::<f64>() / 200.0;
        assert!((silhouette_exact(&data, &labels).unwrap() - avg).abs() <= 1e-12);
    }
}

#[test]
fn sampled_silhouette_at_full_size_is_exact() {
    let (pts, labels) = clustered(300, 2, 3, 9);
    let data = RowMatrix::from_rows(&pts).unwrap();
    let exact = silhouette_exact(&data, &labels).unwrap();
    assert_eq!(silhouette_sampled(&data, &labels, 300, 1).unwrap(), exact);
    assert_eq!(silhouette_sampled(&data, &labels, 10_000, 1).unwrap(), exact);
}

#[test]
fn sampled_silhouette_is_close_on_large_data() {
    let (pts, labels) = clustered(3_000, 1, 3, 5);
    let data = RowMatrix::from_rows(&pts).unwrap();
    let exact = silhouette_exact(&data, &labels).unwrap();
    let sampled = silhouette_sampled(&data, &labels, 600, 2).unwrap();
    assert!((exact - sampled).abs() < 0.05, "{exact} vs {sampled}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn silhouette_values_are_bounded(seed in any::<u64>(), k in 2usize..5) {
        let (pts, labels) = clustered(60, 2, k, seed);
        prop_assume!(labels.iter().any(|&l| l != labels[0]));
        let s = silhouette_samples(&RowMatrix::from_rows(&pts).unwrap(), &labels).unwrap();
        prop_assert!(s.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn ari_matches_pair_count_oracle(a in prop::collection::vec(0usize..4, 2..80), seed in any::<u64>()) {
        let mut rng = rng_from_seed(seed);
        let b: Vec<usize> = a.iter().map(|&x| if rng.random::<f64>() < 0.3 { rng.random_range(0..4) } else { x }).collect();
        let got = adjusted_rand_index(&a, &b).unwrap();
        let want = common::ari_oracle(&a, &b);
        prop_assert!((got - want).abs() < 1e-12, "{} vs {}", got, want);
    }

    #[test]
    fn ari_ignores_relabeling(a in prop::collection::vec(0usize..5, 2..80), shift in 1usize..5) {
        let b: Vec<usize> = a.iter().map(|&x| (x + shift) % 5 + 10).collect();
        prop_assert!((adjusted_rand_index(&a, &b).unwrap() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn ari_of_constant_labeling_is_zero() {
    let a = vec![0usize; 10];
    let b = vec![0, 1, 0, 1, 2, 2, 0, 1, 2, 0];
    assert_eq!(adjusted_rand_index(&a, &b).unwrap(), 0.0);
}

fn four_component(seed: u64) -> (RowMatrix, Vec<usize>) {
    let (xs, z) = common::mixture_1d(&[0.25; 4], &[0.42, 1.45, 4.63, 19.47], &[0.05, 0.1, 0.3, 0.8], 2_000, seed);
    (RowMatrix::column(xs), z)
}

#[test]
fn grid_search_recovers_four_components() {
    let (data, _) = four_component(31);
    let cfg = GridConfig {
        fit: FitConfig {
            seed: 31,
            ..FitConfig::default()
        },
        silhouette_sample: None,
    };
    let ks: Vec<usize> = (1..=9).collect();
    let t = grid_search(&data, &ks, &[Parameterization::E, Parameterization::V], &cfg).unwrap();
    assert_eq!(t.best_row().unwrap().k, 4);
}

#[test]
fn grid_search_is_deterministic_and_maps_models() {
    let (data, _) = four_component(2);
    let cfg = GridConfig {
        fit: FitConfig {
            seed: 5,
            n_restarts: 2,
            ..FitConfig::default()
        },
        silhouette_sample: Some(500),
    };
    let models = [Parameterization::EEV, Parameterization::VVV, Parameterization::EII];
    let a = grid_search(&data, &[2, 3, 4], &models, &cfg).unwrap();
    let b = grid_search(&data, &[2, 3, 4], &models, &cfg).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    // EEV and EII collapse to E, VVV to V
    let fitted: Vec<Parameterization> = a.rows.iter().map(|r| r.model).collect();
    assert!(fitted.iter().all(|m| matches!(m, Parameterization::E | Parameterization::V)));
    assert_eq!(a.rows.len(), 6);
    assert_eq!(a.model_mapping.len(), 3);
}

#[test]
fn constant_shift_keeps_the_winner() {
    let (data, _) = four_component(4);
    let cfg = GridConfig {
        fit: FitConfig {
            n_restarts: 2,
            ..FitConfig::default()
        },
        silhouette_sample: None,
    };
    let t = grid_search(&data, &[2, 3, 4, 5], &[Parameterization::V], &cfg).unwrap();
    // adding c to every log-density adds 2·n·c to every BIC
    let shifted: Vec<SelectionRow> = t
        .rows
        .iter()
        .cloned()
        .map(|mut r| {
            r.loglik += 2_000.0 * 7.5;
            r.bic = bic_value(r.loglik, r.n_params, 2_000);
            r
        })
        .collect();
    let s = SelectionTable::from_rows(shifted, t.model_mapping.clone(), 2_000, 1);
    assert_eq!(s.best, t.best);
    for (a, b) in s.rows.iter().zip(&t.rows) {
        assert!((a.bic - b.bic - 2.0 * 2_000.0 * 7.5).abs() < 1e-6);
    }
}

#[test]
fn eev_data_prefers_eev() {
    let mut wins = 0;
    for seed in 0..3 {
        let (rows, _) = common::eev_data(5_000, 500 + seed);
        let data = RowMatrix::new(5_000, 2, rows).unwrap();
        let cfg = GridConfig {
            fit: FitConfig {
                seed,
                ..FitConfig::default()
            },
            silhouette_sample: None,
        };
        let models = [Parameterization::EEE, Parameterization::EEV, Parameterization::VVV];
        let t = grid_search(&data, &[3], &models, &cfg).unwrap();
        if t.best_row().unwrap().model == Parameterization::EEV {
            wins += 1;
        }
    }
    assert!(wins >= 2, "{wins}/3");
}
