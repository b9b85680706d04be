//! Reduced quasi-realizations from the reachable, null and effective spaces.
//!
//! Each reduction replaces `(Q, phi, rho)` by a smaller `(Q_hat, phi_hat,
//! rho_hat)` linked to the original through a transport matrix (`T_R`, `T_N`
//! or `T`). The defining identities are recomputed after every solve and
//! stored as named max-norm residuals; a residual above `tol.res` is an error.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{kernel_basis, max_abs, max_abs_vec, pinv};
use crate::model::{observation_matrix, ObservationMap, QuasiRealization, Realization, Tolerances};
use crate::subspace::{effective_basis, null_space_cobasis, reachable_basis, SymbolBlockedBasis, Warning};
use crate::tensor::build_factors;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReductionKind {
    Reachable,
    Null,
    Effective,
}

impl ReductionKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ReductionKind::Reachable => "reachable",
            ReductionKind::Null => "null",
            ReductionKind::Effective => "effective",
        }
    }
}

impl fmt::Display for ReductionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ReductionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reachable" => Ok(ReductionKind::Reachable),
            "null" => Ok(ReductionKind::Null),
            "effective" => Ok(ReductionKind::Effective),
            other => Err(Error::InvalidParams(format!("unknown reduction mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reduction {
    pub kind: ReductionKind,
    pub realization: QuasiRealization,
    /// `T_R` (`k x k_R`), `T_N` (`k_N x k`) or `T` (`k_eff x k_R`).
    pub transport: DMatrix<f64>,
    /// The reachable reduction an effective reduction was built on.
    pub base: Option<Box<Reduction>>,
    pub residuals: BTreeMap<String, f64>,
    /// The reduced order equals the original order (a change of basis).
    pub trivial: bool,
    pub warnings: Vec<Warning>,
}

impl Reduction {
    pub fn order(&self) -> usize {
        self.realization.k()
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.values().copied().fold(0.0, f64::max)
    }
}

fn ones(n: usize) -> DVector<f64> {
    DVector::from_element(n, 1.0)
}

fn check(residuals: &BTreeMap<String, f64>, tol: &Tolerances) -> Result<()> {
    let worst = residuals
        .iter()
        .filter(|(_, &v)| !(v <= tol.res))
        .max_by(|a, b| a.1.total_cmp(b.1));
    match worst {
        Some((name, &residual)) => Err(Error::ReductionInconsistent {
            identity: name.clone(),
            residual,
            tolerance: tol.res,
        }),
        None => Ok(()),
    }
}

/// `e^T Q = e^T`, `Q rho = rho`, `e^T rho = 1` for the reduced system.
fn stochastic_residuals(r: &QuasiRealization, out: &mut BTreeMap<String, f64>) {
    let q = r.q();
    let n = q.nrows();
    out.insert(
        "e^T Q_hat - e^T".into(),
        max_abs(&(ones(n).transpose() * q - ones(n).transpose())),
    );
    out.insert("Q_hat rho_hat - rho_hat".into(), max_abs_vec(&(q * r.rho() - r.rho())));
    out.insert("e^T rho_hat - 1".into(), (r.rho().sum() - 1.0).abs());
}

/// Largest entry of `t` outside the symbol pattern.
fn off_block(t: &DMatrix<f64>, row_symbol: &[usize], col_symbol: &[usize]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..t.nrows() {
        for j in 0..t.ncols() {
            if row_symbol[i] != col_symbol[j] {
                worst = worst.max(t[(i, j)].abs());
            }
        }
    }
    worst
}

fn reachable_residuals<R: Realization + ?Sized>(
    model: &R,
    t: &DMatrix<f64>,
    red: &QuasiRealization,
    tol: &Tolerances,
) -> Result<BTreeMap<String, f64>> {
    let q = model.transition();
    let rho = model.initial_vector(tol)?;
    let mut out = BTreeMap::new();
    out.insert("Q T_R - T_R Q_R".into(), max_abs(&(q * t - t * red.q())));
    out.insert("T_R rho_R - rho".into(), max_abs_vec(&(t * red.rho() - rho)));
    out.insert(
        "e^T T_R - e_R^T".into(),
        max_abs(&(ones(t.nrows()).transpose() * t - ones(t.ncols()).transpose())),
    );
    out.insert(
        "O T_R - O_R".into(),
        max_abs(&(observation_matrix(model.observation_map()) * t - observation_matrix(red.obs()))),
    );
    out.insert(
        "T_R block pattern".into(),
        off_block(t, model.observation_map().phi(), red.obs().phi()),
    );
    stochastic_residuals(red, &mut out);
    Ok(out)
}

fn null_residuals<R: Realization + ?Sized>(
    model: &R,
    t: &DMatrix<f64>,
    red: &QuasiRealization,
    tol: &Tolerances,
) -> Result<BTreeMap<String, f64>> {
    let q = model.transition();
    let rho = model.initial_vector(tol)?;
    let mut out = BTreeMap::new();
    out.insert("Q_N T_N - T_N Q".into(), max_abs(&(red.q() * t - t * q)));
    out.insert(
        "O_N T_N - O".into(),
        max_abs(&(observation_matrix(red.obs()) * t - observation_matrix(model.observation_map()))),
    );
    out.insert(
        "e_N^T T_N - e^T".into(),
        max_abs(&(ones(t.nrows()).transpose() * t - ones(t.ncols()).transpose())),
    );
    out.insert("rho_N - T_N rho".into(), max_abs_vec(&(red.rho() - t * rho)));
    out.insert(
        "T_N block pattern".into(),
        off_block(t, red.obs().phi(), model.observation_map().phi()),
    );
    stochastic_residuals(red, &mut out);
    Ok(out)
}

fn effective_residuals(
    base: &QuasiRealization,
    t: &DMatrix<f64>,
    red: &QuasiRealization,
    tol: &Tolerances,
) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    out.insert("Q_hat T - T Q_R".into(), max_abs(&(red.q() * t - t * base.q())));
    out.insert(
        "O_hat T - O_R".into(),
        max_abs(&(observation_matrix(red.obs()) * t - observation_matrix(base.obs()))),
    );
    out.insert(
        "e^T T - e_R^T".into(),
        max_abs(&(ones(t.nrows()).transpose() * t - ones(t.ncols()).transpose())),
    );
    out.insert("rho_hat - T rho_R".into(), max_abs_vec(&(red.rho() - t * base.rho())));
    let kernel = kernel_basis(t, tol.rank_factor);
    let inv = if kernel.ncols() == 0 {
        0.0
    } else {
        max_abs(&(t * base.q() * kernel))
    };
    out.insert("T Q_R ker T".into(), inv);
    out.insert("T block pattern".into(), off_block(t, red.obs().phi(), base.obs().phi()));
    stochastic_residuals(red, &mut out);
    out
}

/// Reduction onto the reachable subspace: `Q T_R = T_R Q_R`, `O_R = O T_R`,
/// `rho = T_R rho_R`.
pub fn reduce_reachable<R: Realization + ?Sized>(model: &R, tol: &Tolerances) -> Result<Reduction> {
    let t_r = reachable_basis(model, tol)?;
    let rho = model.initial_vector(tol)?;
    let t_pinv = pinv(&t_r.t, tol.rank_factor);
    let q_hat = &t_pinv * model.transition() * &t_r.t;
    let rho_hat = &t_pinv * rho;
    let obs = ObservationMap::new(model.d(), t_r.col_symbol.clone())?;
    let realization = QuasiRealization::from_parts(q_hat, obs, rho_hat, tol);
    let residuals = reachable_residuals(model, &t_r.t, &realization, tol)?;
    check(&residuals, tol)?;
    Ok(Reduction {
        kind: ReductionKind::Reachable,
        trivial: t_r.dim() == model.k(),
        realization,
        transport: t_r.t,
        base: None,
        residuals,
        warnings: Vec::new(),
    })
}

/// Reduction modulo the null space: `Q_N T_N = T_N Q`, `O_N T_N = O`,
/// `rho_N = T_N rho`.
pub fn reduce_null<R: Realization + ?Sized>(model: &R, tol: &Tolerances) -> Result<Reduction> {
    let t_n = null_space_cobasis(model, tol)?;
    let rho = model.initial_vector(tol)?;
    let t_pinv = pinv(&t_n.t, tol.rank_factor);
    let q_hat = &t_n.t * model.transition() * &t_pinv;
    let rho_hat = &t_n.t * rho;
    let obs = ObservationMap::new(model.d(), t_n.row_symbol.clone())?;
    let realization = QuasiRealization::from_parts(q_hat, obs, rho_hat, tol);
    let residuals = null_residuals(model, &t_n.t, &realization, tol)?;
    check(&residuals, tol)?;
    Ok(Reduction {
        kind: ReductionKind::Null,
        trivial: t_n.dim() == model.k(),
        realization,
        transport: t_n.t,
        base: None,
        residuals,
        warnings: Vec::new(),
    })
}

/// Reduction onto the effective space: the reachable reduction followed by a
/// null-space reduction of it through `T`, with `Q_hat T = T Q_R`,
/// `O_hat T = O_R`, `rho_hat = T rho_R`.
pub fn reduce_effective<R: Realization + ?Sized>(model: &R, tol: &Tolerances) -> Result<Reduction> {
    let base = reduce_reachable(model, tol)?;
    let t_n = null_space_cobasis(model, tol)?;
    let t_r = SymbolBlockedBasis {
        t: base.transport.clone(),
        col_symbol: base.realization.obs().phi().to_vec(),
    };
    let eff = effective_basis(&t_r, &t_n, base.realization.q(), tol)?;
    let t_pinv = pinv(&eff.t, tol.rank_factor);
    let q_hat = &eff.t * base.realization.q() * &t_pinv;
    let rho_hat = &eff.t * base.realization.rho();
    let obs = ObservationMap::new(model.d(), eff.row_symbol.clone())?;
    let realization = QuasiRealization::from_parts(q_hat, obs, rho_hat, tol);
    let residuals = effective_residuals(&base.realization, &eff.t, &realization, tol);
    check(&residuals, tol)?;
    Ok(Reduction {
        kind: ReductionKind::Effective,
        trivial: eff.dim() == model.k(),
        realization,
        transport: eff.t,
        base: Some(Box::new(base)),
        residuals,
        warnings: eff.warnings,
    })
}

/// Recomputes every defining identity of `red` against `model`. Effective
/// reductions also report their reachable stage under a `reachable/` prefix.
pub fn residual_report<R: Realization + ?Sized>(
    red: &Reduction,
    model: &R,
    tol: &Tolerances,
) -> Result<BTreeMap<String, f64>> {
    match red.kind {
        ReductionKind::Reachable => reachable_residuals(model, &red.transport, &red.realization, tol),
        ReductionKind::Null => null_residuals(model, &red.transport, &red.realization, tol),
        ReductionKind::Effective => {
            let base = red
                .base
                .as_ref()
                .ok_or_else(|| Error::InvalidParams("effective reduction without a reachable stage".into()))?;
            let mut out = effective_residuals(&base.realization, &red.transport, &red.realization, tol);
            for (name, v) in reachable_residuals(model, &base.transport, &base.realization, tol)? {
                out.insert(format!("reachable/{name}"), v);
            }
            Ok(out)
        }
    }
}

/// Residuals of the factor-level identities at depth `n`: `A T_R = A_R`,
/// `B = B_R T_R^T`, `C T_R = C_R` for reachable reductions, and the
/// corresponding null-space forms for null and effective reductions.
pub fn factor_residuals<R: Realization + ?Sized>(
    red: &Reduction,
    model: &R,
    n: usize,
    tol: &Tolerances,
) -> Result<BTreeMap<String, f64>> {
    let full = build_factors(model, n, tol)?;
    let reduced = build_factors(&red.realization, n, tol)?;
    let t = &red.transport;
    let mut out = BTreeMap::new();
    match red.kind {
        ReductionKind::Reachable => {
            out.insert("A T_R - A_R".into(), max_abs(&(&full.a * t - &reduced.a)));
            out.insert("B - B_R T_R^T".into(), max_abs(&(&full.b - &reduced.b * t.transpose())));
            out.insert("C T_R - C_R".into(), max_abs(&(&full.c * t - &reduced.c)));
        }
        ReductionKind::Null => {
            out.insert("A_N T_N - A".into(), max_abs(&(&reduced.a * t - &full.a)));
            out.insert("B_N - B T_N^T".into(), max_abs(&(&reduced.b - &full.b * t.transpose())));
            out.insert("C_N T_N - C".into(), max_abs(&(&reduced.c * t - &full.c)));
        }
        ReductionKind::Effective => {
            let base = red
                .base
                .as_ref()
                .ok_or_else(|| Error::InvalidParams("effective reduction without a reachable stage".into()))?;
            let mid = build_factors(&base.realization, n, tol)?;
            out.insert("A_hat T - A_R".into(), max_abs(&(&reduced.a * t - &mid.a)));
            out.insert("B_hat - B_R T^T".into(), max_abs(&(&reduced.b - &mid.b * t.transpose())));
            out.insert("C_hat T - C_R".into(), max_abs(&(&reduced.c * t - &mid.c)));
            for (name, v) in factor_residuals(base, model, n, tol)? {
                out.insert(format!("reachable/{name}"), v);
            }
        }
    }
    Ok(out)
}
