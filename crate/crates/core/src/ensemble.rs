//! Seeded random model generators used as test ensembles.
//!
//! Every generator is a pure function of its seed (ChaCha20). Draws that
//! happen to give a chain whose eigenvalue 1 is not simple are discarded and
//! redrawn from the same stream.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::model::{Hmm, Model, ObservationMap, QuasiRealization, Tolerances};

const MAX_ATTEMPTS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EnsembleKind {
    /// All transition probabilities positive.
    Dense,
    /// At most three successors per state plus a cycle through all states.
    Sparse,
    /// One state duplicated with identical outgoing columns, giving a
    /// nontrivial null space.
    StateSplit,
    /// Two same-symbol states with proportional incoming rows, giving a
    /// proper reachable subspace.
    LumpedIncoming,
    /// A dense model perturbed by a rank-one term that keeps `e^T` and
    /// `rho` fixed and introduces negative entries.
    Quasi,
}

impl EnsembleKind {
    pub const ALL: [EnsembleKind; 5] = [
        EnsembleKind::Dense,
        EnsembleKind::Sparse,
        EnsembleKind::StateSplit,
        EnsembleKind::LumpedIncoming,
        EnsembleKind::Quasi,
    ];

    /// Smallest state count the generator supports for alphabet size `d`.
    pub fn min_states(self, d: usize) -> usize {
        match self {
            EnsembleKind::StateSplit | EnsembleKind::LumpedIncoming => (d + 1).max(3),
            _ => d.max(2),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub kind: EnsembleKind,
    pub seed: u64,
    pub model: Model,
}

fn surjective_phi(k: usize, d: usize, rng: &mut ChaCha20Rng) -> Vec<usize> {
    let mut phi: Vec<usize> = (1..=d).chain((d..k).map(|_| rng.random_range(1..=d))).collect();
    phi.shuffle(rng);
    phi
}

fn normalize_columns(q: &mut DMatrix<f64>) {
    for mut col in q.column_iter_mut() {
        let s = col.sum();
        col.unscale_mut(s);
    }
}

fn dense(k: usize, rng: &mut ChaCha20Rng) -> DMatrix<f64> {
    let mut q = DMatrix::from_fn(k, k, |_, _| rng.random_range(0.05..1.0));
    normalize_columns(&mut q);
    q
}

fn sparse(k: usize, rng: &mut ChaCha20Rng) -> DMatrix<f64> {
    let mut q = DMatrix::zeros(k, k);
    for j in 0..k {
        q[((j + 1) % k, j)] = rng.random_range(0.1..1.0);
        for _ in 0..rng.random_range(0..3) {
            let i = rng.random_range(0..k);
            q[(i, j)] += rng.random_range(0.1..1.0);
        }
    }
    normalize_columns(&mut q);
    q
}

fn state_split(k: usize, d: usize, rng: &mut ChaCha20Rng) -> (DMatrix<f64>, Vec<usize>) {
    let k0 = k - 1;
    let base = dense(k0, rng);
    let mut phi = surjective_phi(k0, d, rng);
    let j = rng.random_range(0..k0);
    let mut q = DMatrix::zeros(k, k);
    for c in 0..k0 {
        let a = rng.random_range(0.2..0.8);
        for r in 0..k0 {
            q[(r, c)] = base[(r, c)];
        }
        q[(j, c)] = a * base[(j, c)];
        q[(k0, c)] = (1.0 - a) * base[(j, c)];
    }
    let copy = q.column(j).into_owned();
    q.set_column(k0, &copy);
    phi.push(phi[j]);
    (q, phi)
}

fn lumped_incoming(k: usize, d: usize, rng: &mut ChaCha20Rng) -> (DMatrix<f64>, Vec<usize>) {
    let mut q = dense(k, rng);
    let mut phi = surjective_phi(k, d, rng);
    let j1 = rng.random_range(0..k);
    let j2 = (j1 + 1 + rng.random_range(0..k - 1)) % k;
    // Move j2 to j1's symbol, then re-cover whichever symbol j2 vacated.
    let vacated = phi[j2];
    phi[j2] = phi[j1];
    if !phi.contains(&vacated) {
        let free = (0..k).find(|&i| i != j1 && i != j2 && phi.iter().filter(|&&u| u == phi[i]).count() > 1);
        match free {
            Some(i) => phi[i] = vacated,
            None => phi[j2] = vacated,
        }
    }
    let beta = rng.random_range(0.3..3.0);
    let row = q.row(j1) * beta;
    q.set_row(j2, &row);
    normalize_columns(&mut q);
    (q, phi)
}

fn quasi(k: usize, rng: &mut ChaCha20Rng, tol: &Tolerances) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let q0 = dense(k, rng);
    let rho = Hmm::new(q0.clone(), ObservationMap::identity(k))?.stationary(tol)?.rho;
    let mut u = DVector::from_fn(k, |_, _| rng.random_range(-1.0..1.0));
    let mean = u.mean();
    u.add_scalar_mut(-mean);
    let mut v = DVector::from_fn(k, |_, _| rng.random_range(-1.0..1.0));
    let shift = v.dot(&rho);
    v.add_scalar_mut(-shift);
    let outer = &u * v.transpose();
    let scale = outer.amax();
    if scale == 0.0 {
        return Err(Error::InvalidModel("degenerate perturbation".into()));
    }
    let eps = rng.random_range(0.3..0.6) / scale;
    let q = q0 + outer * eps;
    if q.iter().all(|&x| x >= 0.0) {
        return Err(Error::InvalidModel("perturbation left Q nonnegative".into()));
    }
    Ok((q, rho))
}

fn attempt(kind: EnsembleKind, k: usize, d: usize, rng: &mut ChaCha20Rng, tol: &Tolerances) -> Result<Model> {
    let (q, phi) = match kind {
        EnsembleKind::Dense => (dense(k, rng), surjective_phi(k, d, rng)),
        EnsembleKind::Sparse => (sparse(k, rng), surjective_phi(k, d, rng)),
        EnsembleKind::StateSplit => state_split(k, d, rng),
        EnsembleKind::LumpedIncoming => lumped_incoming(k, d, rng),
        EnsembleKind::Quasi => {
            let (q, rho) = quasi(k, rng, tol)?;
            let obs = ObservationMap::new(d, surjective_phi(k, d, rng))?;
            // The perturbation may create a second unit eigenvalue.
            crate::model::stationary_distribution(&q, tol)?;
            return Ok(Model::Quasi(QuasiRealization::new(q, obs, rho, tol)?));
        }
    };
    let hmm = Hmm::with_tolerances(q, ObservationMap::new(d, phi)?, tol)?;
    let rho = hmm.stationary(tol)?;
    if !rho.warnings.is_empty() {
        return Err(Error::InvalidModel("stationary vector not positive".into()));
    }
    Ok(Model::Hmm(hmm))
}

/// One random model of the given kind with `k` states and `d` symbols.
pub fn random_model(kind: EnsembleKind, k: usize, d: usize, seed: u64) -> Result<Model> {
    if d == 0 || k < kind.min_states(d) {
        return Err(Error::InvalidParams(format!(
            "{kind:?} needs at least {} states for d = {d}, got {k}",
            kind.min_states(d)
        )));
    }
    let tol = Tolerances::default();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut last = None;
    for _ in 0..MAX_ATTEMPTS {
        match attempt(kind, k, d, &mut rng, &tol) {
            Ok(m) => return Ok(m),
            Err(e) => last = Some(e),
        }
    }
    Err(last.unwrap_or(Error::InvalidModel("no attempts".into())))
}

/// `count` models cycling through every kind, with `k <= max_k` and
/// `d <= max_d` drawn from a master seed.
pub fn standard_ensemble(count: usize, seed: u64, max_k: usize, max_d: usize) -> Result<Vec<Member>> {
    let mut master = ChaCha20Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let kind = EnsembleKind::ALL[i % EnsembleKind::ALL.len()];
        let d = master.random_range(1..=max_d);
        let lo = kind.min_states(d);
        if lo > max_k {
            return Err(Error::InvalidParams(format!("max_k = {max_k} too small for {kind:?}")));
        }
        let k = master.random_range(lo..=max_k);
        let member_seed = master.random::<u64>();
        out.push(Member {
            kind,
            seed: member_seed,
            model: random_model(kind, k, d, member_seed)?,
        });
    }
    Ok(out)
}
