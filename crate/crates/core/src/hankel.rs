//! Truncated generalized Hankel matrices, their `Theta^T Gamma` factorization
//! and numerical rank.
//!
//! Block `(i, j)` has rows indexed by the past `(u_0, u_{-1}, ..., u_{-(i-1)})`
//! (newest symbol most significant) and columns by the future
//! `(u_1, ..., u_j)`; its entries are probabilities of the joined word.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{partial_pivoted_qr, singular_values};
use crate::model::{mask_in_place, Realization, Tolerances};
use crate::subspace::{ambiguity, Warning};
use crate::tensor::{chronological_table, reverse_digits, DEFAULT_BUDGET_BYTES};

/// Matrices up to this size get a full SVD; larger ones go through a
/// truncated pivoted QR first.
const FULL_SVD_LIMIT: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct HankelTruncation {
    pub depth: usize,
    pub d: usize,
    pub h: DMatrix<f64>,
    /// `offsets[i]` is the first row (and column) of block index `i`.
    offsets: Vec<usize>,
}

impl HankelTruncation {
    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    /// Block `H^(ij)`, of shape `d^i x d^j`.
    pub fn block(&self, i: usize, j: usize) -> DMatrix<f64> {
        let rows = self.d.pow(i as u32);
        let cols = self.d.pow(j as u32);
        self.h
            .view((self.offsets[i], self.offsets[j]), (rows, cols))
            .into_owned()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaGamma {
    pub depth: usize,
    /// `k x sum_i d^i`; block `i` holds `I_{u_0} Q ... Q I_{u_{-(i-1)}} rho`.
    pub theta: DMatrix<f64>,
    /// `k x sum_j d^j`; block `j` holds `(e^T I_{u_j} Q ... I_{u_1} Q)^T`.
    pub gamma: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankReport {
    pub rank: usize,
    /// Leading singular values, nonincreasing.
    pub singular_values: Vec<f64>,
    pub threshold: f64,
    /// Upper bound on every singular value not listed (zero for a full SVD).
    pub tail_bound: f64,
    /// `sigma_rank / sigma_{rank+1}` (the latter bounded by `tail_bound`), if
    /// there is a next singular value.
    pub gap: Option<f64>,
    pub warnings: Vec<Warning>,
}

fn block_offsets(d: usize, depth: usize) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(depth + 2);
    let mut acc = 0;
    for i in 0..=depth {
        offsets.push(acc);
        acc += d.pow(i as u32);
    }
    offsets.push(acc);
    offsets
}

fn check_size(d: usize, depth: usize) -> Result<usize> {
    let size = (0..=depth as u32)
        .try_fold(0u128, |acc, i| (d as u128).checked_pow(i).map(|p| acc + p))
        .ok_or(Error::SizeExceeded {
            required: u128::MAX,
            budget: DEFAULT_BUDGET_BYTES,
        })?;
    let table = (d as u128).checked_pow(2 * depth as u32).unwrap_or(u128::MAX);
    let required = size
        .saturating_mul(size)
        .saturating_add(table)
        .saturating_mul(8);
    if required > DEFAULT_BUDGET_BYTES {
        return Err(Error::SizeExceeded {
            required,
            budget: DEFAULT_BUDGET_BYTES,
        });
    }
    Ok(size as usize)
}

/// Hankel truncation with blocks `(i, j)`, `0 <= i, j <= depth`, filled from
/// exact word probabilities.
pub fn build_hankel<R: Realization + ?Sized>(model: &R, depth: usize, tol: &Tolerances) -> Result<HankelTruncation> {
    if depth == 0 {
        return Err(Error::InvalidParams("Hankel depth must be at least 1".into()));
    }
    let obs = model.observation_map();
    let d = obs.d();
    let size = check_size(d, depth)?;
    let rho = model.initial_vector(tol)?;
    let tables: Vec<Vec<f64>> = (0..=2 * depth)
        .map(|len| chronological_table(model.transition(), obs, &rho, len))
        .collect();
    let offsets = block_offsets(d, depth);
    let mut h = DMatrix::zeros(size, size);
    for i in 0..=depth {
        let rows = d.pow(i as u32);
        for j in 0..=depth {
            let cols = d.pow(j as u32);
            let table = &tables[i + j];
            for r in 0..rows {
                let past = reverse_digits(r, d, i);
                for c in 0..cols {
                    h[(offsets[i] + r, offsets[j] + c)] = table[past * cols + c];
                }
            }
        }
    }
    Ok(HankelTruncation { depth, d, h, offsets })
}

/// `Theta` and `Gamma` with `H = Theta^T Gamma`, built by depth recursion.
pub fn theta_gamma<R: Realization + ?Sized>(model: &R, depth: usize, tol: &Tolerances) -> Result<ThetaGamma> {
    let obs = model.observation_map();
    let (d, k) = (obs.d(), obs.k());
    let size = check_size(d, depth)?;
    let q = model.transition();
    let qt = q.transpose();
    let rho = model.initial_vector(tol)?;

    let mut theta = DMatrix::zeros(k, size);
    let mut gamma = DMatrix::zeros(k, size);
    theta.set_column(0, &rho);
    gamma.set_column(0, &DVector::from_element(k, 1.0));

    let mut past: Vec<DVector<f64>> = vec![rho.clone()];
    let mut future: Vec<DVector<f64>> = vec![DVector::from_element(k, 1.0)];
    let mut offset = 1;
    for level in 1..=depth {
        let mut next_past = Vec::with_capacity(past.len() * d);
        let mut next_future = Vec::with_capacity(future.len() * d);
        for u in 1..=d {
            for p in &past {
                // The first block applies I_u to rho directly.
                let mut v = if level == 1 { p.clone() } else { q * p };
                mask_in_place(&mut v, obs, u);
                next_past.push(v);
            }
            for f in &future {
                let mut v = f.clone();
                mask_in_place(&mut v, obs, u);
                next_future.push(&qt * v);
            }
        }
        for (c, v) in next_past.iter().enumerate() {
            theta.set_column(offset + c, v);
        }
        for (c, v) in next_future.iter().enumerate() {
            gamma.set_column(offset + c, v);
        }
        offset += next_past.len();
        past = next_past;
        future = next_future;
    }
    Ok(ThetaGamma { depth, theta, gamma })
}

/// Number of singular values above `max(dims) * eps * sigma_max *
/// tol.rank_factor`, with the spectrum gap for auditing.
pub fn numerical_rank(h: &DMatrix<f64>, tol: &Tolerances) -> RankReport {
    let (m, n) = h.shape();
    let (spectrum, tail_bound) = if m.min(n) <= FULL_SVD_LIMIT {
        (singular_values(h), 0.0)
    } else {
        let stop = |top: f64| tol.rank_threshold(m, n, top) / 10.0;
        let (rows, resid) = partial_pivoted_qr(h, stop);
        (singular_values(&rows), resid)
    };
    rank_from_spectrum(spectrum, tail_bound, m, n, tol)
}

fn rank_from_spectrum(spectrum: Vec<f64>, tail_bound: f64, m: usize, n: usize, tol: &Tolerances) -> RankReport {
    let top = spectrum.first().copied().unwrap_or(0.0);
    let threshold = tol.rank_threshold(m, n, top);
    let rank = spectrum.iter().filter(|&&s| s > threshold).count();
    let next = spectrum.get(rank).copied().unwrap_or(0.0).max(tail_bound);
    let has_next = rank < m.min(n);
    let gap = if rank > 0 && has_next {
        Some(if next > 0.0 { spectrum[rank - 1] / next } else { f64::INFINITY })
    } else {
        None
    };
    let mut warnings = Vec::new();
    if let Some(w) = ambiguity("Hankel truncation", &spectrum, threshold) {
        warnings.push(w);
    }
    if let Some(g) = gap {
        if g < 10.0 && warnings.is_empty() {
            warnings.push(Warning::ToleranceAmbiguous {
                context: "Hankel truncation gap".into(),
                threshold,
                spectrum: spectrum.clone(),
            });
        }
    }
    RankReport {
        rank,
        singular_values: spectrum,
        threshold,
        tail_bound,
        gap,
        warnings,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;
    use crate::model::{Hmm, ObservationMap};

    #[test]
    fn offsets_follow_block_sizes() {
        assert_eq!(block_offsets(2, 3), vec![0, 1, 3, 7, 15]);
        assert_eq!(block_offsets(1, 3), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn unary_alphabet_is_all_ones() {
        let tol = Tolerances::default();
        let q = DMatrix::from_row_slice(3, 3, &[0.2, 0.5, 0.1, 0.3, 0.25, 0.6, 0.5, 0.25, 0.3]);
        let hmm = Hmm::new(q, ObservationMap::new(1, vec![1, 1, 1]).unwrap()).unwrap();
        let h = build_hankel(&hmm, 3, &tol).unwrap();
        assert_eq!(h.h.shape(), (4, 4));
        assert!(max_abs(&h.h.map(|x| x - 1.0)) < 1e-13);
        assert_eq!(numerical_rank(&h.h, &tol).rank, 1);
    }

    #[test]
    fn truncated_and_full_spectra_agree() {
        let tol = Tolerances::default();
        let u = DMatrix::from_fn(300, 4, |i, j| (((i * 13 + j * 7) % 17) as f64 - 8.0) / 8.0);
        let v = DMatrix::from_fn(4, 300, |i, j| (((i * 3 + j * 11) % 19) as f64) / 19.0);
        let h = &u * &v;
        let fast = numerical_rank(&h, &tol);
        let full = rank_from_spectrum(singular_values(&h), 0.0, 300, 300, &tol);
        assert_eq!(fast.rank, 4);
        assert_eq!(full.rank, 4);
        for i in 0..4 {
            assert!((fast.singular_values[i] - full.singular_values[i]).abs() < 1e-9 * full.singular_values[0]);
        }
        assert!(fast.gap.unwrap() > 1e3);
    }
}
