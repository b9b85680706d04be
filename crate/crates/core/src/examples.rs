//! The Fox–Rubin family: a binary-output chain on `m + 1` states whose
//! reachable space has dimension four for every `m`, together with its
//! published closed-form reduced system.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{max_abs, max_abs_vec, max_principal_angle, numerical_rank_of, pinv};
use crate::model::{observation_matrix, Hmm, ObservationMap, Tolerances};
use crate::subspace::reachable_basis;

/// Entries whose printed and recomputed values differ by more than this are
/// listed as discrepancies.
pub const DISCREPANCY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FoxRubinParams {
    pub m: usize,
    pub lambda: f64,
}

impl FoxRubinParams {
    pub fn new(m: usize, lambda: f64) -> Result<Self> {
        if m < 3 {
            return Err(Error::InvalidParams(format!("m = {m}, need m >= 3")));
        }
        if !(lambda > 0.0 && lambda <= 0.5) {
            return Err(Error::InvalidParams(format!("lambda = {lambda}, need 0 < lambda <= 0.5")));
        }
        Ok(Self { m, lambda })
    }

    pub fn alpha(&self) -> f64 {
        2.0 * PI / self.m as f64
    }

    pub fn k(&self) -> usize {
        self.m + 1
    }

    fn d_factor(&self) -> f64 {
        let (l, c) = (self.lambda, self.alpha().cos());
        1.0 - 2.0 * l * c + l * l
    }
}

pub fn fox_rubin(params: FoxRubinParams) -> Result<Hmm> {
    let FoxRubinParams { m, lambda } = FoxRubinParams::new(params.m, params.lambda)?;
    let k = m + 1;
    let lm = lambda.powi(m as i32);
    let mut q = DMatrix::zeros(k, k);
    let mut first = 0.0;
    for i in 1..m {
        let v = lambda.powi(i as i32) * (i as f64 * PI / m as f64).sin().powi(2) / (1.0 - lm);
        q[(i, 0)] = v;
        first += v;
    }
    q[(0, 0)] = 1.0 - first;
    q[(0, 1)] = 1.0 - lm;
    q[(m, 1)] = lm;
    for i in 1..m {
        q[(i, i + 1)] = 1.0;
    }
    let mut phi = vec![2; k];
    phi[0] = 1;
    Hmm::new(q, ObservationMap::new(2, phi)?)
}

/// The published reachable basis: `p_0`, `p_1` and the real and imaginary
/// parts of `p_2`, each scaled to unit column sum.
pub fn published_reachable_basis(params: FoxRubinParams) -> DMatrix<f64> {
    let (m, l) = (params.m, params.lambda);
    let alpha = params.alpha();
    let (c, s) = (alpha.cos(), alpha.sin());
    let lm = l.powi(m as i32);
    let dd = params.d_factor();
    let scale = [
        1.0,
        (1.0 - lm) / (1.0 - l),
        (1.0 - lm) * (1.0 - l * c) / dd,
        l * (1.0 - lm) * s / dd,
    ];
    let mut t = DMatrix::zeros(m + 1, 4);
    t[(0, 0)] = 1.0;
    for i in 0..m {
        let li = l.powi(i as i32);
        let a = i as f64 * alpha;
        t[(i + 1, 1)] = li;
        t[(i + 1, 2)] = li * a.cos();
        t[(i + 1, 3)] = li * a.sin();
    }
    for (j, sc) in scale.iter().enumerate() {
        t.column_mut(j).unscale_mut(*sc);
    }
    t
}

#[derive(Debug, Clone, PartialEq)]
pub struct PublishedReducedSystem {
    pub q_hat: DMatrix<f64>,
    pub o_hat: DMatrix<f64>,
    /// Scaled so that its entries sum to one.
    pub rho_hat: DVector<f64>,
}

/// The published `Q_R`, `O_R` and `rho_R`, transcribed as printed.
pub fn published_reduced_system(params: FoxRubinParams) -> PublishedReducedSystem {
    let l = params.lambda;
    let alpha = params.alpha();
    let (c, s) = (alpha.cos(), alpha.sin());
    let dd = params.d_factor();
    let lc = l * c;
    let eta = 2.0 - 3.0 * l - 3.0 * lc + l * l + 5.0 * l * l * c - 2.0 * l.powi(3);
    let l2s2 = l * l * s * s;
    #[rustfmt::skip]
    let q_hat = DMatrix::from_row_slice(4, 4, &[
        eta, 1.0 - l, dd / (1.0 - lc), 0.0,
        l / (2.0 * (1.0 - l)), l, 0.0, 0.0,
        lc * (lc - 1.0) / (2.0 * dd), 0.0, lc, 1.0 - lc,
        l2s2 / (2.0 * dd), 0.0, -l2s2 / (1.0 - lc), lc,
    ]);
    #[rustfmt::skip]
    let o_hat = DMatrix::from_row_slice(2, 4, &[
        1.0, 0.0, 0.0, 0.0,
        0.0, 1.0, 1.0, 1.0,
    ]);
    let unscaled = DVector::from_vec(vec![
        1.0,
        l / (2.0 * (1.0 - l).powi(2)),
        l * (c - l) * (lc - 1.0) / (2.0 * dd * dd),
        l2s2 / (2.0 * dd * dd),
    ]);
    let rho_hat = &unscaled / unscaled.sum();
    PublishedReducedSystem { q_hat, o_hat, rho_hat }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntryDiscrepancy {
    pub row: usize,
    pub col: usize,
    pub printed: f64,
    pub recomputed: f64,
    pub delta: f64,
}

/// Audit of the published reduced system against the defining relations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PublishedCheck {
    pub params: FoxRubinParams,
    pub k: usize,
    pub dim_reachable: usize,
    pub basis_rank: usize,
    /// `max |e^T T_R - e_R^T|` for the published basis.
    pub e_hat_residual: f64,
    /// `max |O T_R - O_R|` with the published `O_R`.
    pub o_hat_residual: f64,
    /// Largest principal angle between the published and computed spans.
    pub span_angle: f64,
    /// `max |Q T_R - T_R Q_R|` with `Q_R = T_R^+ Q T_R`.
    pub algorithmic_residual: f64,
    /// The same relation with the published `Q_R`.
    pub printed_residual: f64,
    pub q_hat_printed: Vec<Vec<f64>>,
    pub q_hat_recomputed: Vec<Vec<f64>>,
    pub q_hat_discrepancies: Vec<EntryDiscrepancy>,
    /// `T_R^+ rho`, the reduced stationary vector the basis implies.
    pub rho_hat_recomputed: Vec<f64>,
    pub rho_hat_discrepancies: Vec<EntryDiscrepancy>,
    /// `max |Q_R rho_R - rho_R|` with both printed.
    pub printed_rho_fixed_point: f64,
    /// `max |Q_R rho_R - rho_R|` with the recomputed `Q_R` and printed `rho_R`.
    pub recomputed_rho_fixed_point: f64,
}

impl PublishedCheck {
    /// The checks that must hold regardless of printing errors.
    pub fn defining_relations_hold(&self, tol: &Tolerances) -> bool {
        self.dim_reachable == 4
            && self.basis_rank == 4
            && self.e_hat_residual <= 1e-12
            && self.o_hat_residual <= 1e-12
            && self.algorithmic_residual <= tol.res
            && self.span_angle <= 1e-8
    }
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn discrepancies<'a>(
    printed: impl Iterator<Item = ((usize, usize), f64)>,
    recomputed: impl Fn(usize, usize) -> f64 + 'a,
) -> Vec<EntryDiscrepancy> {
    printed
        .filter_map(|((row, col), p)| {
            let r = recomputed(row, col);
            ((p - r).abs() > DISCREPANCY_TOL).then_some(EntryDiscrepancy {
                row,
                col,
                printed: p,
                recomputed: r,
                delta: p - r,
            })
        })
        .collect()
}

pub fn published_check(params: FoxRubinParams, tol: &Tolerances) -> Result<PublishedCheck> {
    let hmm = fox_rubin(params)?;
    let q = hmm.q();
    let o = observation_matrix(hmm.obs());
    let t = published_reachable_basis(params);
    let printed = published_reduced_system(params);
    let algorithmic = reachable_basis(&hmm, tol)?;

    let t_pinv = pinv(&t, tol.rank_factor);
    let q_hat = &t_pinv * q * &t;
    let qt = q * &t;
    let rho = hmm.stationary(tol)?.rho;
    let rho_hat = &t_pinv * &rho;

    let col_sums = DVector::from_iterator(4, t.column_iter().map(|c| c.sum()));
    let q_disc = discrepancies(
        (0..4).flat_map(|i| (0..4).map(move |j| (i, j))).map(|(i, j)| ((i, j), printed.q_hat[(i, j)])),
        |i, j| q_hat[(i, j)],
    );
    let rho_disc = discrepancies(
        (0..4).map(|i| ((i, 0), printed.rho_hat[i])),
        |i, _| rho_hat[i],
    );

    Ok(PublishedCheck {
        params,
        k: params.k(),
        dim_reachable: algorithmic.dim(),
        basis_rank: numerical_rank_of(&t, tol.rank_factor),
        e_hat_residual: max_abs_vec(&col_sums.map(|x| x - 1.0)),
        o_hat_residual: max_abs(&(&o * &t - &printed.o_hat)),
        span_angle: max_principal_angle(&t, &algorithmic.t, tol.rank_factor),
        algorithmic_residual: max_abs(&(&qt - &t * &q_hat)),
        printed_residual: max_abs(&(&qt - &t * &printed.q_hat)),
        q_hat_printed: rows(&printed.q_hat),
        q_hat_recomputed: rows(&q_hat),
        q_hat_discrepancies: q_disc,
        rho_hat_recomputed: rho_hat.iter().copied().collect(),
        rho_hat_discrepancies: rho_disc,
        printed_rho_fixed_point: max_abs_vec(&(&printed.q_hat * &printed.rho_hat - &printed.rho_hat)),
        recomputed_rho_fixed_point: max_abs_vec(&(&q_hat * &printed.rho_hat - &printed.rho_hat)),
    })
}
