#![allow(dead_code)]

use hmmr_core::ensemble::{random_model, EnsembleKind};
use hmmr_core::*;
use nalgebra::{DMatrix, DVector};

pub fn tol() -> Tolerances {
    Tolerances::default()
}

pub fn hmm(k: usize, d: usize, phi: &[usize], rows: &[f64]) -> Hmm {
    Hmm::new(DMatrix::from_row_slice(k, k, rows), ObservationMap::new(d, phi.to_vec()).unwrap()).unwrap()
}

pub fn dense(k: usize, d: usize, seed: u64) -> Model {
    random_model(EnsembleKind::Dense, k, d, seed).unwrap()
}

pub fn dense_hmm(k: usize, d: usize, seed: u64) -> Hmm {
    match dense(k, d, seed) {
        Model::Hmm(h) => h,
        Model::Quasi(_) => unreachable!(),
    }
}

/// A chain that is not reversible in time: `P(1, 2, 2) != P(2, 2, 1)`, so a
/// mix-up of past and future orderings changes tensor entries.
pub fn asymmetric() -> Hmm {
    hmm(
        3,
        2,
        &[1, 2, 2],
        &[
            0.1, 0.7, 0.1, //
            0.8, 0.1, 0.2, //
            0.1, 0.2, 0.7,
        ],
    )
}

/// Every word of length `len` over `1..=d` in index order.
pub fn words(d: usize, len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|w| {
                (1..=d).map(move |u| {
                    let mut v = w.clone();
                    v.push(u);
                    v
                })
            })
            .collect();
    }
    out
}

/// `e^T I_{u_t} Q ... Q I_{u_s} rho` by explicit matrix products.
pub fn brute_probability<R: Realization>(model: &R, chronological: &[usize]) -> f64 {
    let rho = model.initial_vector(&tol()).unwrap();
    let obs = model.observation_map();
    let q = model.transition();
    let mut v: DVector<f64> = rho;
    for (t, &u) in chronological.iter().enumerate() {
        if t > 0 {
            v = q * v;
        }
        v = selector(obs, u).unwrap() * v;
    }
    v.sum()
}

/// Integration tests have no `lib.rs` next to them, so regressions are not
/// persisted to source files.
pub fn cases(n: u32) -> proptest::test_runner::Config {
    proptest::test_runner::Config {
        failure_persistence: None,
        ..proptest::test_runner::Config::with_cases(n)
    }
}
