//! The third-order string-probability tensor and its rank-one factorizations.
//!
//! `M` has shape `d^n x d^n x d`. Entry `(L(u_1..u_n), L(u_{-1}..u_{-n}), u_0)`
//! is the probability of the window `u_{-n} .. u_n`. The second index lists the
//! past newest-first: `u_{-1}` is its most significant digit.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{mask_in_place, observation_matrix, selected_transitions, ObservationMap, Realization, Tolerances};

/// Default memory budget for dense tensors (1 GiB).
pub const DEFAULT_BUDGET_BYTES: u128 = 1 << 30;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    n: usize,
    d: usize,
    values: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(n: usize, d: usize) -> Self {
        let side = d.pow(n as u32);
        Self {
            n,
            d,
            values: vec![0.0; side * side * d],
        }
    }

    pub fn from_values(n: usize, d: usize, values: Vec<f64>) -> Result<Self> {
        let side = d.pow(n as u32);
        if values.len() != side * side * d {
            return Err(Error::Dimension(format!(
                "{} values for a {side}x{side}x{d} tensor",
                values.len()
            )));
        }
        Ok(Self { n, d, values })
    }

    pub fn depth(&self) -> usize {
        self.n
    }

    pub fn alphabet(&self) -> usize {
        self.d
    }

    /// `(d^n, d^n, d)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        let side = self.d.pow(self.n as u32);
        (side, side, self.d)
    }

    fn offset(&self, future: usize, past: usize, now: usize) -> usize {
        let side = self.dims().0;
        (future * side + past) * self.d + now
    }

    /// Entry at 0-based `(future, past, now)` indices.
    pub fn get(&self, future: usize, past: usize, now: usize) -> f64 {
        self.values[self.offset(future, past, now)]
    }

    pub fn set(&mut self, future: usize, past: usize, now: usize, v: f64) {
        let o = self.offset(future, past, now);
        self.values[o] = v;
    }

    /// Row-major over `(future, past, now)`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Columns of `a`, `b`, `c` define `sum_i a_i ⊗ b_i ⊗ c_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorTriple {
    pub n: usize,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

impl FactorTriple {
    /// Number of rank-one components.
    pub fn r(&self) -> usize {
        self.a.ncols()
    }
}

/// 0-based position of a word `(u_1, ..., u_n)` in base-`d` order, `u_1`
/// most significant.
pub fn index_of(word: &[usize], d: usize) -> Result<usize> {
    word.iter().try_fold(0usize, |acc, &u| {
        if u == 0 || u > d {
            Err(Error::SymbolOutOfRange { symbol: u, d })
        } else {
            Ok(acc * d + (u - 1))
        }
    })
}

fn required_bytes(d: usize, len: u32) -> Option<u128> {
    (d as u128).checked_pow(len)?.checked_mul(8)
}

fn check_budget(d: usize, len: usize, budget: u128) -> Result<()> {
    match required_bytes(d, len as u32) {
        Some(required) if required <= budget => Ok(()),
        Some(required) => Err(Error::SizeExceeded { required, budget }),
        None => Err(Error::SizeExceeded {
            required: u128::MAX,
            budget,
        }),
    }
}

fn fill_subtree(q: &DMatrix<f64>, obs: &ObservationMap, state: &DVector<f64>, out: &mut [f64]) {
    if out.len() == 1 {
        out[0] = state.sum();
        return;
    }
    let d = obs.d();
    let chunk = out.len() / d;
    let advanced = q * state;
    for (i, part) in out.chunks_mut(chunk).enumerate() {
        let mut next = advanced.clone();
        mask_in_place(&mut next, obs, i + 1);
        fill_subtree(q, obs, &next, part);
    }
}

/// Probabilities of every word of length `len`, indexed by the base-`d`
/// number of the word read oldest symbol first.
pub(crate) fn chronological_table(q: &DMatrix<f64>, obs: &ObservationMap, rho: &DVector<f64>, len: usize) -> Vec<f64> {
    let d = obs.d();
    if len == 0 {
        return vec![rho.sum()];
    }
    let mut out = vec![0.0; d.pow(len as u32)];
    let chunk = out.len() / d;
    out.par_chunks_mut(chunk).enumerate().for_each(|(i, part)| {
        let mut v = rho.clone();
        mask_in_place(&mut v, obs, i + 1);
        fill_subtree(q, obs, &v, part);
    });
    out
}

pub(crate) fn reverse_digits(mut x: usize, d: usize, n: usize) -> usize {
    let mut out = 0;
    for _ in 0..n {
        out = out * d + x % d;
        x /= d;
    }
    out
}

/// The tensor of window probabilities at half-window `n`, under the default
/// memory budget.
pub fn build_tensor<R: Realization + ?Sized>(model: &R, n: usize, tol: &Tolerances) -> Result<Tensor3> {
    build_tensor_with_budget(model, n, DEFAULT_BUDGET_BYTES, tol)
}

pub fn build_tensor_with_budget<R: Realization + ?Sized>(
    model: &R,
    n: usize,
    budget: u128,
    tol: &Tolerances,
) -> Result<Tensor3> {
    if n == 0 {
        return Err(Error::InvalidParams("tensor depth must be at least 1".into()));
    }
    let obs = model.observation_map();
    let d = obs.d();
    check_budget(d, 2 * n + 1, budget)?;
    let rho = model.initial_vector(tol)?;
    let table = chronological_table(model.transition(), obs, &rho, 2 * n + 1);

    let side = d.pow(n as u32);
    let reversed: Vec<usize> = (0..side).map(|x| reverse_digits(x, d, n)).collect();
    let mut t = Tensor3::zeros(n, d);
    for (c, &p) in table.iter().enumerate() {
        let future = c % side;
        let now = (c / side) % d;
        let past = reversed[c / (side * d)];
        t.set(future, past, now, p);
    }
    Ok(t)
}

/// Factors `A`, `B`, `C = O` built by depth recursion:
/// `A_{j+1}[(u-1) d^j + p] = A_j[p] I_u Q` and
/// `B_{j+1}[(u-1) d^j + p] = B_j[p] (Q I_u)^T`, starting from `e^T` and `rho^T`.
pub fn build_factors<R: Realization + ?Sized>(model: &R, n: usize, tol: &Tolerances) -> Result<FactorTriple> {
    let obs = model.observation_map();
    let (d, k) = (obs.d(), obs.k());
    let rows = d
        .checked_pow(n as u32)
        .ok_or(Error::SizeExceeded { required: u128::MAX, budget: DEFAULT_BUDGET_BYTES })?;
    let required = 16u128 * rows as u128 * k.max(1) as u128;
    if required > DEFAULT_BUDGET_BYTES {
        return Err(Error::SizeExceeded {
            required,
            budget: DEFAULT_BUDGET_BYTES,
        });
    }
    let q = model.transition();
    let rho = model.initial_vector(tol)?;
    let forward = selected_transitions(q, obs);
    let backward: Vec<DMatrix<f64>> = (1..=d)
        .map(|u| {
            let mut m = q.clone();
            for j in 0..k {
                if obs.symbol_of(j) != u {
                    m.column_mut(j).fill(0.0);
                }
            }
            m.transpose()
        })
        .collect();

    let mut a = DMatrix::from_element(1, k, 1.0);
    let mut b = DMatrix::from_row_slice(1, k, rho.as_slice());
    for _ in 0..n {
        let len = a.nrows();
        let mut next_a = DMatrix::zeros(len * d, k);
        let mut next_b = DMatrix::zeros(len * d, k);
        for u in 0..d {
            next_a.rows_mut(u * len, len).copy_from(&(&a * &forward[u]));
            next_b.rows_mut(u * len, len).copy_from(&(&b * &backward[u]));
        }
        a = next_a;
        b = next_b;
    }
    Ok(FactorTriple {
        n,
        a,
        b,
        c: observation_matrix(obs),
    })
}

/// `T[p][q][s] = sum_i A[p][i] B[q][i] C[s][i]`.
pub fn compose(f: &FactorTriple) -> Result<Tensor3> {
    let d = f.c.nrows();
    let side = d
        .checked_pow(f.n as u32)
        .ok_or_else(|| Error::Dimension("factor depth overflows".into()))?;
    let r = f.r();
    if f.a.nrows() != side || f.b.nrows() != side || f.b.ncols() != r || f.c.ncols() != r {
        return Err(Error::Dimension(format!(
            "factors A {:?}, B {:?}, C {:?} inconsistent with depth {}",
            f.a.shape(),
            f.b.shape(),
            f.c.shape(),
            f.n
        )));
    }
    let mut t = Tensor3::zeros(f.n, d);
    if r == 0 {
        return Ok(t);
    }
    let bt = f.b.transpose();
    for s in 0..d {
        let mut scaled = f.a.clone();
        for i in 0..r {
            scaled.column_mut(i).scale_mut(f.c[(s, i)]);
        }
        let slice = scaled * &bt;
        for p in 0..side {
            for q in 0..side {
                t.set(p, q, s, slice[(p, q)]);
            }
        }
    }
    Ok(t)
}

/// `max |t1 - t2|` over all entries.
pub fn max_abs_diff(t1: &Tensor3, t2: &Tensor3) -> Result<f64> {
    if t1.n != t2.n || t1.d != t2.d {
        return Err(Error::Dimension(format!(
            "tensors of dims {:?} and {:?}",
            t1.dims(),
            t2.dims()
        )));
    }
    Ok(t1
        .values
        .iter()
        .zip(&t2.values)
        .fold(0.0, |acc, (x, y)| acc.max((x - y).abs())))
}
