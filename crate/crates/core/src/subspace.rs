//! Reachable subspace, null space and effective space of a (quasi-)realization,
//! with symbol-blocked bases normalized to unit sums.
//!
//! Both the reachable subspace and the orthogonal complement of the null space
//! are computed by the same block closure: starting from per-symbol seeds,
//! repeatedly apply a step matrix (`Q` for the reachable subspace, `Q^T` for the
//! dual of the null space), split the result by symbol, and re-orthogonalize
//! each block with a column-pivoted QR until the dimension stops growing.
//! Because every block only ever holds vectors supported on the states of one
//! symbol, the resulting bases have exact zeros outside their block.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{kernel_basis, max_abs, orthonormal_span, pinv, pivoted_qr, singular_values};
use crate::model::{Realization, Tolerances};

/// Non-fatal numerical findings attached to results.
#[derive(Debug, Clone, PartialEq)]
pub enum Warning {
    /// A singular value lies within a factor of ten of the rank threshold.
    ToleranceAmbiguous {
        context: String,
        threshold: f64,
        spectrum: Vec<f64>,
    },
}

impl std::fmt::Display for Warning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Warning::ToleranceAmbiguous {
                context,
                threshold,
                spectrum,
            } => write!(
                f,
                "rank decision for {context} is ambiguous: threshold {threshold:e}, spectrum {spectrum:?}"
            ),
        }
    }
}

pub(crate) fn ambiguity(context: impl Into<String>, spectrum: &[f64], threshold: f64) -> Option<Warning> {
    let near = spectrum
        .iter()
        .any(|&s| s > threshold / 10.0 && s <= threshold * 10.0);
    near.then(|| Warning::ToleranceAmbiguous {
        context: context.into(),
        threshold,
        spectrum: spectrum.to_vec(),
    })
}

/// `k x k_R` basis whose column `j` is supported on the states emitting
/// `col_symbol[j]`, with every column summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolBlockedBasis {
    pub t: DMatrix<f64>,
    /// 1-based, nondecreasing.
    pub col_symbol: Vec<usize>,
}

/// `k_N x k` cobasis whose row `i` is supported on the states emitting
/// `row_symbol[i]`; the rows sum to `e^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolBlockedCobasis {
    pub t: DMatrix<f64>,
    /// 1-based, nondecreasing.
    pub row_symbol: Vec<usize>,
}

/// `k_eff x k_R` matrix with `ker T = ker T_N T_R` and `e_eff^T T = e_R^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveBasis {
    pub t: DMatrix<f64>,
    pub row_symbol: Vec<usize>,
    /// `max |T Q_R K|` over an orthonormal kernel basis `K` of `T`.
    pub invariance_residual: f64,
    /// `max |T_N T_R K|`, certifying `ker T ⊆ ker T_N T_R`.
    pub kernel_residual: f64,
    pub warnings: Vec<Warning>,
}

impl SymbolBlockedBasis {
    pub fn dim(&self) -> usize {
        self.t.ncols()
    }
}

impl SymbolBlockedCobasis {
    pub fn dim(&self) -> usize {
        self.t.nrows()
    }
}

impl EffectiveBasis {
    pub fn dim(&self) -> usize {
        self.t.nrows()
    }
}

/// Dimensions of the three spaces for one model.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceReport {
    pub k: usize,
    pub d: usize,
    pub dim_reachable: usize,
    pub dim_null: usize,
    /// `None` when some reachable block violates the unit-sum assumption.
    pub dim_effective: Option<usize>,
    /// Indexed by `symbol - 1`; empty blocks count as satisfied.
    pub unit_sum_ok: Vec<bool>,
    pub reachable: Option<SymbolBlockedBasis>,
    pub null: SymbolBlockedCobasis,
    pub effective: Option<EffectiveBasis>,
    pub warnings: Vec<Warning>,
}

impl SubspaceReport {
    pub fn assumption_holds(&self) -> bool {
        self.unit_sum_ok.iter().all(|&b| b)
    }

    /// `dim (V_R ∩ V_N) = k_R - rank(T_N T_R)`.
    pub fn dim_intersection(&self) -> Option<usize> {
        self.dim_effective.map(|e| self.dim_reachable - e)
    }
}

/// Smallest subspace containing `seeds` that is invariant under `step` and
/// under every selector `I_u`, returned as one orthonormal basis per symbol
/// (`k x r_u`, zero outside the block of `u`). Index `u - 1` holds symbol `u`.
pub fn block_closure<R: Realization + ?Sized>(
    model: &R,
    seeds: &[DVector<f64>],
    step: &DMatrix<f64>,
    tol: &Tolerances,
) -> Result<Vec<DMatrix<f64>>> {
    let obs = model.observation_map();
    let k = obs.k();
    let d = obs.d();
    let block_states: Vec<Vec<usize>> = (1..=d).map(|u| obs.states_of(u)).collect();
    let mut blocks: Vec<DMatrix<f64>> = vec![DMatrix::zeros(k, 0); d];
    let mut dim = 0usize;

    for _ in 0..=k + 1 {
        let current: Vec<DVector<f64>> = blocks
            .iter()
            .flat_map(|b| b.column_iter().map(|c| c.into_owned()).collect::<Vec<_>>())
            .collect();
        let stepped: Vec<DVector<f64>> = current.iter().map(|v| step * v).collect();

        let mut next = Vec::with_capacity(d);
        for states in &block_states {
            if states.is_empty() {
                next.push(DMatrix::zeros(k, 0));
                continue;
            }
            let cands: Vec<&DVector<f64>> = seeds.iter().chain(stepped.iter()).collect();
            let local = DMatrix::from_fn(states.len(), cands.len(), |i, j| cands[j][states[i]]);
            let span = orthonormal_span(&local, tol.rank_factor);
            let mut embedded = DMatrix::zeros(k, span.ncols());
            for (li, &s) in states.iter().enumerate() {
                embedded.row_mut(s).copy_from(&span.row(li));
            }
            next.push(embedded);
        }
        let next_dim: usize = next.iter().map(|b| b.ncols()).sum();
        blocks = next;
        if next_dim == dim {
            return Ok(blocks);
        }
        dim = next_dim;
    }
    Err(Error::ClosureDiverged(k + 2))
}

fn reachable_blocks<R: Realization + ?Sized>(model: &R, tol: &Tolerances) -> Result<Vec<DMatrix<f64>>> {
    let rho = model.initial_vector(tol)?;
    let obs = model.observation_map();
    let seeds: Vec<DVector<f64>> = (1..=obs.d())
        .map(|u| {
            let mut v = rho.clone();
            crate::model::mask_in_place(&mut v, obs, u);
            v
        })
        .collect();
    block_closure(model, &seeds, model.transition(), tol)
}

fn null_blocks<R: Realization + ?Sized>(model: &R, tol: &Tolerances) -> Result<Vec<DMatrix<f64>>> {
    let obs = model.observation_map();
    let seeds: Vec<DVector<f64>> = (1..=obs.d())
        .map(|u| DVector::from_fn(obs.k(), |i, _| if obs.symbol_of(i) == u { 1.0 } else { 0.0 }))
        .collect();
    block_closure(model, &seeds, &model.transition().transpose(), tol)
}

/// Largest `|e^T b|` over an orthonormal block basis; zero means the block
/// lies in `ker e^T`.
fn block_mass(block: &DMatrix<f64>) -> f64 {
    block.column_iter().map(|c| c.sum().abs()).fold(0.0, f64::max)
}

fn index_of_max_abs(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if v.abs() > values[best].abs() {
            best = i;
        }
    }
    best
}

/// Rescales a block basis to unit column sums. Columns whose sum is small
/// relative to the best-conditioned column get that column added first.
fn normalize_columns(block: &DMatrix<f64>, symbol: usize, tol: &Tolerances) -> Result<DMatrix<f64>> {
    let sums: Vec<f64> = block.column_iter().map(|c| c.sum()).collect();
    if sums.is_empty() {
        return Ok(block.clone());
    }
    let star = index_of_max_abs(&sums);
    if !(sums[star].abs() > tol.res) {
        return Err(Error::AssumptionViolated { symbol });
    }
    let reference = block.column(star).into_owned();
    let mut out = block.clone();
    for j in 0..out.ncols() {
        if j != star && sums[j].abs() < 0.5 * sums[star].abs() {
            let shifted = out.column(j) + &reference;
            out.set_column(j, &shifted);
        }
        let s = out.column(j).sum();
        out.column_mut(j).scale_mut(1.0 / s);
    }
    Ok(out)
}

/// Basis `T_R` of the reachable subspace with `T_R[i][j] = 0` unless
/// `phi(i) = col_symbol[j]`, and `e^T T_R = (1, ..., 1)`.
pub fn reachable_basis<R: Realization + ?Sized>(model: &R, tol: &Tolerances) -> Result<SymbolBlockedBasis> {
    let blocks = reachable_blocks(model, tol)?;
    normalized_reachable(model.k(), &blocks, tol)
}

fn normalized_reachable(k: usize, blocks: &[DMatrix<f64>], tol: &Tolerances) -> Result<SymbolBlockedBasis> {
    let mut cols: Vec<DVector<f64>> = Vec::new();
    let mut col_symbol = Vec::new();
    for (i, block) in blocks.iter().enumerate() {
        if block.ncols() == 0 {
            continue;
        }
        let normalized = normalize_columns(block, i + 1, tol)?;
        for c in normalized.column_iter() {
            cols.push(c.into_owned());
            col_symbol.push(i + 1);
        }
    }
    let t = if cols.is_empty() {
        DMatrix::zeros(k, 0)
    } else {
        DMatrix::from_columns(&cols)
    };
    Ok(SymbolBlockedBasis { t, col_symbol })
}

/// Cobasis `T_N` with `ker T_N = V_N`, `T_N[i][j] = 0` unless
/// `row_symbol[i] = phi(j)`, and rows summing to `e^T`.
pub fn null_space_cobasis<R: Realization + ?Sized>(model: &R, tol: &Tolerances) -> Result<SymbolBlockedCobasis> {
    let blocks = null_blocks(model, tol)?;
    let obs = model.observation_map();
    let mut rows: Vec<DVector<f64>> = Vec::new();
    let mut row_symbol = Vec::new();
    for (i, block) in blocks.iter().enumerate() {
        let u = i + 1;
        if block.ncols() == 0 {
            continue;
        }
        let target = DVector::from_fn(obs.k(), |s, _| if obs.symbol_of(s) == u { 1.0 } else { 0.0 });
        let coeffs: Vec<f64> = block.column_iter().map(|b| b.dot(&target)).collect();
        let star = index_of_max_abs(&coeffs);
        let mut first = target.clone();
        for (j, b) in block.column_iter().enumerate() {
            if j != star {
                first -= b;
            }
        }
        for (j, b) in block.column_iter().enumerate() {
            rows.push(if j == star { first.clone() } else { b.into_owned() });
            row_symbol.push(u);
        }
    }
    let t = if rows.is_empty() {
        DMatrix::zeros(0, obs.k())
    } else {
        DMatrix::from_columns(&rows).transpose()
    };
    Ok(SymbolBlockedCobasis { t, row_symbol })
}

/// Basis of the effective space built from independent rows of `T_N T_R`,
/// selected per symbol block and repaired so that its rows sum to `e_R^T`.
pub fn effective_basis(
    t_r: &SymbolBlockedBasis,
    t_n: &SymbolBlockedCobasis,
    q_hat_r: &DMatrix<f64>,
    tol: &Tolerances,
) -> Result<EffectiveBasis> {
    if t_n.t.ncols() != t_r.t.nrows() {
        return Err(Error::Dimension(format!(
            "T_N has {} columns but T_R has {} rows",
            t_n.t.ncols(),
            t_r.t.nrows()
        )));
    }
    let kr = t_r.dim();
    if q_hat_r.shape() != (kr, kr) {
        return Err(Error::Dimension(format!(
            "reduced transition is {:?}, expected {kr}x{kr}",
            q_hat_r.shape()
        )));
    }
    let product = &t_n.t * &t_r.t;
    let max_symbol = t_r
        .col_symbol
        .iter()
        .chain(t_n.row_symbol.iter())
        .copied()
        .max()
        .unwrap_or(0);

    let mut rows: Vec<DVector<f64>> = Vec::new();
    let mut row_symbol = Vec::new();
    let mut warnings = Vec::new();
    for u in 1..=max_symbol {
        let ri: Vec<usize> = (0..t_n.dim()).filter(|&i| t_n.row_symbol[i] == u).collect();
        let ci: Vec<usize> = (0..kr).filter(|&j| t_r.col_symbol[j] == u).collect();
        if ri.is_empty() || ci.is_empty() {
            continue;
        }
        let block = DMatrix::from_fn(ri.len(), ci.len(), |i, j| product[(ri[i], ci[j])]);
        let spectrum = singular_values(&block);
        let top = spectrum.first().copied().unwrap_or(0.0);
        let thr = tol.rank_threshold(block.nrows(), block.ncols(), top);
        let rank = spectrum.iter().filter(|&&s| s > thr).count();
        if let Some(w) = ambiguity(format!("T_N T_R block of symbol {u}"), &spectrum, thr) {
            warnings.push(w);
        }
        if rank == 0 {
            continue;
        }
        let qr = pivoted_qr(&block.transpose());
        let mut picked: Vec<usize> = qr.perm[..rank].to_vec();
        picked.sort_unstable();
        let selected = DMatrix::from_fn(rank, ci.len(), |i, j| block[(picked[i], j)]);

        let target = DVector::from_iterator(ci.len(), block.column_iter().map(|c| c.sum()));
        let coeffs = pinv(&selected.transpose(), tol.rank_factor) * &target;
        let star = index_of_max_abs(coeffs.as_slice());
        let mut first = target.clone();
        for i in 0..rank {
            if i != star {
                first -= selected.row(i).transpose();
            }
        }
        for i in 0..rank {
            let local = if i == star {
                first.clone()
            } else {
                selected.row(i).transpose()
            };
            let mut full = DVector::zeros(kr);
            for (lj, &j) in ci.iter().enumerate() {
                full[j] = local[lj];
            }
            rows.push(full);
            row_symbol.push(u);
        }
    }
    let t = if rows.is_empty() {
        DMatrix::zeros(0, kr)
    } else {
        DMatrix::from_columns(&rows).transpose()
    };

    let kernel = kernel_basis(&t, tol.rank_factor);
    let (invariance_residual, kernel_residual) = if kernel.ncols() == 0 {
        (0.0, 0.0)
    } else {
        (max_abs(&(&t * q_hat_r * &kernel)), max_abs(&(&product * &kernel)))
    };
    if invariance_residual > tol.res {
        return Err(Error::ReductionInconsistent {
            identity: "Q_R ker T ⊆ ker T".into(),
            residual: invariance_residual,
            tolerance: tol.res,
        });
    }
    if kernel_residual > tol.res {
        return Err(Error::ReductionInconsistent {
            identity: "ker T = ker T_N T_R".into(),
            residual: kernel_residual,
            tolerance: tol.res,
        });
    }
    Ok(EffectiveBasis {
        t,
        row_symbol,
        invariance_residual,
        kernel_residual,
        warnings,
    })
}

/// Runs the three constructions and reports their dimensions. A violated
/// unit-sum assumption is reported rather than raised.
pub fn analyze<R: Realization + ?Sized>(model: &R, tol: &Tolerances) -> Result<SubspaceReport> {
    let k = model.k();
    let d = model.d();
    let blocks = reachable_blocks(model, tol)?;
    let dim_reachable = blocks.iter().map(|b| b.ncols()).sum();
    let unit_sum_ok: Vec<bool> = blocks
        .iter()
        .map(|b| b.ncols() == 0 || block_mass(b) > tol.res)
        .collect();
    let null = null_space_cobasis(model, tol)?;
    let dim_null = k - null.dim();

    let mut warnings = Vec::new();
    let (reachable, effective) = if unit_sum_ok.iter().all(|&b| b) {
        let t_r = normalized_reachable(k, &blocks, tol)?;
        let q_hat_r = pinv(&t_r.t, tol.rank_factor) * model.transition() * &t_r.t;
        let eff = effective_basis(&t_r, &null, &q_hat_r, tol)?;
        warnings.extend(eff.warnings.iter().cloned());
        (Some(t_r), Some(eff))
    } else {
        (None, None)
    };
    Ok(SubspaceReport {
        k,
        d,
        dim_reachable,
        dim_null,
        dim_effective: effective.as_ref().map(|e| e.dim()),
        unit_sum_ok,
        reachable,
        null,
        effective,
        warnings,
    })
}
