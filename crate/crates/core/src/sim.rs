//! Seeded path sampling and empirical window frequencies.
//!
//! The generator is ChaCha20 (`rand_chacha::ChaCha20Rng`) seeded through
//! `SeedableRng::seed_from_u64`; each draw consumes one `f64` from
//! `Rng::random`, so a seed fixes the path on every platform.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{Hmm, Tolerances};
use crate::tensor::{reverse_digits, Tensor3};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathSample {
    /// 1-based emitted symbols.
    pub symbols: Vec<usize>,
    /// 0-based visited states.
    pub states: Vec<usize>,
    pub seed: u64,
    pub length: usize,
    pub d: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalTensor {
    pub tensor: Tensor3,
    /// Number of overlapping windows counted.
    pub windows: usize,
}

fn cumulative(p: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    p.map(|x| {
        acc += x.max(0.0);
        acc
    })
    .collect()
}

fn draw(cum: &[f64], rng: &mut ChaCha20Rng) -> usize {
    let total = *cum.last().unwrap_or(&0.0);
    let x = rng.random::<f64>() * total;
    cum.iter()
        .position(|&c| x < c)
        .unwrap_or_else(|| cum.iter().rposition(|&c| c > 0.0).unwrap_or(0))
}

fn stationary_start(hmm: &Hmm, tol: &Tolerances) -> Result<DVector<f64>> {
    Ok(hmm.stationary(tol)?.rho)
}

/// A path of `length` steps with `x_0` drawn from the stationary vector and
/// `x_{t+1}` drawn from column `x_t` of `Q`.
pub fn sample_path(hmm: &Hmm, length: usize, seed: u64, tol: &Tolerances) -> Result<PathSample> {
    let q: &DMatrix<f64> = hmm.q();
    if q.iter().any(|&x| x < 0.0) {
        return Err(Error::NotProper("sampling needs a nonnegative transition matrix".into()));
    }
    let rho = stationary_start(hmm, tol)?;
    let k = q.nrows();
    let columns: Vec<Vec<f64>> = (0..k).map(|j| cumulative(q.column(j).iter().copied())).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut states = Vec::with_capacity(length);
    if length > 0 {
        let mut x = draw(&cumulative(rho.iter().copied()), &mut rng);
        states.push(x);
        for _ in 1..length {
            x = draw(&columns[x], &mut rng);
            states.push(x);
        }
    }
    let obs = hmm.obs();
    let symbols = states.iter().map(|&x| obs.symbol_of(x)).collect();
    Ok(PathSample {
        symbols,
        states,
        seed,
        length,
        d: obs.d(),
    })
}

const COUNT_CHUNK: usize = 1 << 16;

/// Relative frequencies of all overlapping windows of length `2n + 1`,
/// indexed as in [`crate::tensor::build_tensor`].
pub fn empirical_tensor(path: &PathSample, n: usize) -> Result<EmpiricalTensor> {
    let window = 2 * n + 1;
    if n == 0 {
        return Err(Error::InvalidParams("tensor depth must be at least 1".into()));
    }
    if path.symbols.len() < window {
        return Err(Error::PathTooShort {
            length: path.symbols.len(),
            window,
        });
    }
    let d = path.d;
    let cells = d.pow(window as u32);
    let starts = path.symbols.len() - window + 1;
    let symbols = &path.symbols;

    // Each chunk of window starts is counted separately, then merged in order.
    let counts = (0..starts.div_ceil(COUNT_CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut local = vec![0u64; cells];
            let lo = c * COUNT_CHUNK;
            let hi = (lo + COUNT_CHUNK).min(starts);
            for s in lo..hi {
                let idx = symbols[s..s + window].iter().fold(0usize, |acc, &u| acc * d + (u - 1));
                local[idx] += 1;
            }
            local
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(vec![0u64; cells], |mut acc, local| {
            for (a, b) in acc.iter_mut().zip(local) {
                *a += b;
            }
            acc
        });

    let side = d.pow(n as u32);
    let mut t = Tensor3::zeros(n, d);
    let total = starts as f64;
    for (c, &count) in counts.iter().enumerate() {
        if count > 0 {
            let future = c % side;
            let now = (c / side) % d;
            let past = reverse_digits(c / (side * d), d, n);
            t.set(future, past, now, count as f64 / total);
        }
    }
    Ok(EmpiricalTensor { tensor: t, windows: starts })
}
