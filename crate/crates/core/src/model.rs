//! Core data types: observation maps, HMMs, quasi-realizations, words, and
//! the exact string probabilities they generate.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{max_abs_vec, rank_threshold};

/// Numerical tolerances shared across the crate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Entry and column-sum validation of input models.
    pub val: f64,
    /// Algebraic residuals (`Q rho = rho`, commutation identities, ...).
    pub res: f64,
    /// Multiplier in `max(dims) * eps * sigma_max * rank_factor`.
    pub rank_factor: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            val: 1e-9,
            res: 1e-10,
            rank_factor: 1e3,
        }
    }
}

impl Tolerances {
    pub fn rank_threshold(&self, rows: usize, cols: usize, sigma_max: f64) -> f64 {
        rank_threshold(rows, cols, sigma_max, self.rank_factor)
    }
}

/// Deterministic observation map `phi : {1..k} -> {1..d}`, stored 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ObservationMap {
    d: usize,
    phi: Vec<usize>,
}

impl ObservationMap {
    pub fn new(d: usize, phi: Vec<usize>) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidModel("alphabet size d must be positive".into()));
        }
        if let Some(&bad) = phi.iter().find(|&&s| s == 0 || s > d) {
            return Err(Error::SymbolOutOfRange { symbol: bad, d });
        }
        Ok(Self { d, phi })
    }

    /// `phi = (1, 2, ..., k)` over an alphabet of size `k`.
    pub fn identity(k: usize) -> Self {
        Self {
            d: k,
            phi: (1..=k).collect(),
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> usize {
        self.phi.len()
    }

    pub fn phi(&self) -> &[usize] {
        &self.phi
    }

    /// Symbol (1-based) emitted by the 0-based `state`.
    pub fn symbol_of(&self, state: usize) -> usize {
        self.phi[state]
    }

    /// 0-based states emitting symbol `u`.
    pub fn states_of(&self, u: usize) -> Vec<usize> {
        (0..self.phi.len()).filter(|&i| self.phi[i] == u).collect()
    }

    pub(crate) fn check_symbol(&self, u: usize) -> Result<()> {
        if u == 0 || u > self.d {
            Err(Error::SymbolOutOfRange { symbol: u, d: self.d })
        } else {
            Ok(())
        }
    }
}

/// The `d x k` 0/1 observation matrix: `O[i][j] = 1` iff `phi(j) = i`.
pub fn observation_matrix(obs: &ObservationMap) -> DMatrix<f64> {
    let mut o = DMatrix::zeros(obs.d(), obs.k());
    for (j, &u) in obs.phi().iter().enumerate() {
        o[(u - 1, j)] = 1.0;
    }
    o
}

/// The diagonal selector `I_u`.
pub fn selector(obs: &ObservationMap, u: usize) -> Result<DMatrix<f64>> {
    obs.check_symbol(u)?;
    let mut m = DMatrix::zeros(obs.k(), obs.k());
    for i in obs.states_of(u) {
        m[(i, i)] = 1.0;
    }
    Ok(m)
}

/// `I_u v` in place.
pub(crate) fn mask_in_place(v: &mut DVector<f64>, obs: &ObservationMap, u: usize) {
    for (i, x) in v.iter_mut().enumerate() {
        if obs.symbol_of(i) != u {
            *x = 0.0;
        }
    }
}

/// `I_u Q` for every symbol, in symbol order.
pub(crate) fn selected_transitions(q: &DMatrix<f64>, obs: &ObservationMap) -> Vec<DMatrix<f64>> {
    (1..=obs.d())
        .map(|u| {
            let mut m = q.clone();
            for i in 0..obs.k() {
                if obs.symbol_of(i) != u {
                    m.row_mut(i).fill(0.0);
                }
            }
            m
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NonFinite { row: usize, col: usize },
    NegativeEntry { row: usize, col: usize, value: f64 },
    ColumnSum { col: usize, sum: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonFinite { row, col } => write!(f, "non-finite entry ({row},{col})"),
            Violation::NegativeEntry { row, col, value } => {
                write!(f, "negative entry ({row},{col}) = {value}")
            }
            Violation::ColumnSum { col, sum } => write!(f, "column {col} sums to {sum}"),
        }
    }
}

/// Violations of the proper-HMM invariants. Indices are 1-based.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", parts.join("; "))
    }
}

fn check_square(q: &DMatrix<f64>, obs: &ObservationMap) -> Result<()> {
    if q.nrows() != q.ncols() {
        return Err(Error::Dimension(format!(
            "transition matrix is {}x{}, expected square",
            q.nrows(),
            q.ncols()
        )));
    }
    if q.nrows() != obs.k() {
        return Err(Error::Dimension(format!(
            "transition matrix has {} states but phi has {}",
            q.nrows(),
            obs.k()
        )));
    }
    Ok(())
}

/// Checks nonnegativity and column-stochasticity of `q` within `tol.val`.
pub fn validate_hmm(q: &DMatrix<f64>, obs: &ObservationMap, tol: &Tolerances) -> Result<ValidationReport> {
    check_square(q, obs)?;
    let mut violations = Vec::new();
    let k = q.nrows();
    for j in 0..k {
        for i in 0..k {
            let v = q[(i, j)];
            if !v.is_finite() {
                violations.push(Violation::NonFinite { row: i + 1, col: j + 1 });
            } else if v < -tol.val {
                violations.push(Violation::NegativeEntry {
                    row: i + 1,
                    col: j + 1,
                    value: v,
                });
            }
        }
        let sum: f64 = q.column(j).sum();
        if !((sum - 1.0).abs() <= tol.val) {
            violations.push(Violation::ColumnSum { col: j + 1, sum });
        }
    }
    Ok(ValidationReport { violations })
}

/// Right eigenvector of `Q` at eigenvalue one, normalized to `e^T rho = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryVector {
    pub rho: DVector<f64>,
    pub warnings: Vec<String>,
}

/// Stationary vector as the one-dimensional kernel of `Q - I`.
///
/// Kernel extraction (rather than power iteration) also handles periodic
/// chains. A kernel of dimension other than one is an error.
pub fn stationary_distribution(q: &DMatrix<f64>, tol: &Tolerances) -> Result<StationaryVector> {
    let k = q.nrows();
    if k == 0 || q.ncols() != k {
        return Err(Error::Dimension(format!("transition matrix is {}x{}", q.nrows(), q.ncols())));
    }
    for j in 0..k {
        let sum: f64 = q.column(j).sum();
        if !((sum - 1.0).abs() <= tol.val) {
            return Err(Error::InvalidModel(format!("column {} sums to {sum}", j + 1)));
        }
    }
    let shifted = q - DMatrix::<f64>::identity(k, k);
    let svd = shifted.svd(false, true);
    let s = &svd.singular_values;
    let top = s.iter().copied().fold(0.0, f64::max);
    let thr = tol.rank_threshold(k, k, top);
    let null: Vec<usize> = (0..s.len()).filter(|&i| !(s[i] > thr)).collect();
    if null.len() != 1 {
        return Err(Error::EigenvalueNotSimple {
            multiplicity: null.len(),
        });
    }
    let v: DVector<f64> = svd.v_t.expect("v_t requested").row(null[0]).transpose();
    let total = v.sum();
    if total.abs() <= tol.val * v.norm() {
        return Err(Error::InvalidModel(
            "eigenvector at eigenvalue 1 is orthogonal to e".into(),
        ));
    }
    let mut rho = v / total;
    let mut warnings = Vec::new();
    let proper = q.iter().all(|&x| x >= -tol.val);
    if proper {
        refine_stationary(q, &mut rho);
        if let Some((i, &x)) = rho.iter().enumerate().find(|(_, &x)| x < -tol.val) {
            warnings.push(format!(
                "stationary vector has negative entry {x} at state {}: non-unique or periodic chain",
                i + 1
            ));
        }
    }
    Ok(StationaryVector { rho, warnings })
}

const REFINE_STEPS: usize = 256;

/// Lazy power steps `rho <- (rho + Q rho) / 2` on a nonnegative `Q`.
///
/// The kernel vector is accurate only in absolute terms, so entries far below
/// the largest one can carry large relative errors that later get amplified
/// by the subspace closures. With `Q >= 0` each step is computed to full
/// relative accuracy per entry while the error components, which lie along
/// eigenvalues `(1 + mu) / 2` with `|mu| <= 1`, `mu != 1`, decay.
fn refine_stationary(q: &DMatrix<f64>, rho: &mut DVector<f64>) {
    for _ in 0..REFINE_STEPS {
        let next = (q * &*rho + &*rho) * 0.5;
        let total = next.sum();
        let next = next / total;
        let unchanged = next == *rho;
        *rho = next;
        if unchanged {
            break;
        }
    }
}

/// Anything with a transition-like matrix, an observation map and an
/// invariant initial vector: proper HMMs and quasi-realizations alike.
pub trait Realization {
    fn transition(&self) -> &DMatrix<f64>;
    fn observation_map(&self) -> &ObservationMap;
    /// The vector `rho` with `Q rho = rho`, `e^T rho = 1`.
    fn initial_vector(&self, tol: &Tolerances) -> Result<DVector<f64>>;

    fn k(&self) -> usize {
        self.transition().nrows()
    }

    fn d(&self) -> usize {
        self.observation_map().d()
    }
}

/// A proper HMM: nonnegative column-stochastic `Q` with a deterministic
/// observation map.
#[derive(Debug, Clone, PartialEq)]
pub struct Hmm {
    q: DMatrix<f64>,
    obs: ObservationMap,
}

impl Hmm {
    pub fn new(q: DMatrix<f64>, obs: ObservationMap) -> Result<Self> {
        Self::with_tolerances(q, obs, &Tolerances::default())
    }

    pub fn with_tolerances(q: DMatrix<f64>, obs: ObservationMap, tol: &Tolerances) -> Result<Self> {
        let report = validate_hmm(&q, &obs, tol)?;
        if !report.is_valid() {
            return Err(Error::InvalidModel(report.to_string()));
        }
        Ok(Self { q, obs })
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn obs(&self) -> &ObservationMap {
        &self.obs
    }

    pub fn stationary(&self, tol: &Tolerances) -> Result<StationaryVector> {
        stationary_distribution(&self.q, tol)
    }
}

impl Realization for Hmm {
    fn transition(&self) -> &DMatrix<f64> {
        &self.q
    }

    fn observation_map(&self) -> &ObservationMap {
        &self.obs
    }

    fn initial_vector(&self, tol: &Tolerances) -> Result<DVector<f64>> {
        Ok(self.stationary(tol)?.rho)
    }
}

/// `(Q, phi, rho)` with `e^T Q = e^T`, `Q rho = rho`, `e^T rho = 1`, where
/// entries may be negative.
#[derive(Debug, Clone, PartialEq)]
pub struct QuasiRealization {
    q: DMatrix<f64>,
    obs: ObservationMap,
    rho: DVector<f64>,
    is_proper: bool,
}

impl QuasiRealization {
    pub fn new(q: DMatrix<f64>, obs: ObservationMap, rho: DVector<f64>, tol: &Tolerances) -> Result<Self> {
        check_square(&q, &obs)?;
        let k = q.nrows();
        if rho.len() != k {
            return Err(Error::Dimension(format!("rho has length {}, expected {k}", rho.len())));
        }
        if q.iter().chain(rho.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidModel("non-finite entry".into()));
        }
        let col_sums = DVector::from_iterator(k, q.column_iter().map(|c| c.sum() - 1.0));
        let r = max_abs_vec(&col_sums);
        if r > tol.res {
            return Err(Error::InvalidModel(format!("column sums deviate from 1 by {r:e}")));
        }
        let r = max_abs_vec(&(&q * &rho - &rho));
        if r > tol.res {
            return Err(Error::InvalidModel(format!("Q rho = rho violated by {r:e}")));
        }
        let r = (rho.sum() - 1.0).abs();
        if r > tol.res {
            return Err(Error::InvalidModel(format!("e^T rho = 1 violated by {r:e}")));
        }
        let is_proper = q.iter().chain(rho.iter()).all(|&x| x >= -tol.val);
        Ok(Self { q, obs, rho, is_proper })
    }

    /// Assembles a realization without checking its invariants; callers verify
    /// them as residuals afterwards.
    pub(crate) fn from_parts(q: DMatrix<f64>, obs: ObservationMap, rho: DVector<f64>, tol: &Tolerances) -> Self {
        let is_proper = q.iter().chain(rho.iter()).all(|&x| x >= -tol.val);
        Self { q, obs, rho, is_proper }
    }

    /// Wraps a proper HMM together with its stationary vector.
    pub fn from_hmm(hmm: &Hmm, tol: &Tolerances) -> Result<Self> {
        let rho = hmm.stationary(tol)?.rho;
        Self::new(hmm.q.clone(), hmm.obs.clone(), rho, tol)
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn obs(&self) -> &ObservationMap {
        &self.obs
    }

    pub fn rho(&self) -> &DVector<f64> {
        &self.rho
    }

    pub fn is_proper(&self) -> bool {
        self.is_proper
    }
}

impl Realization for QuasiRealization {
    fn transition(&self) -> &DMatrix<f64> {
        &self.q
    }

    fn observation_map(&self) -> &ObservationMap {
        &self.obs
    }

    fn initial_vector(&self, _tol: &Tolerances) -> Result<DVector<f64>> {
        Ok(self.rho.clone())
    }
}

/// Either kind of realization, as read from a model file.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Hmm(Hmm),
    Quasi(QuasiRealization),
}

impl Model {
    pub fn as_hmm(&self) -> Option<&Hmm> {
        match self {
            Model::Hmm(h) => Some(h),
            Model::Quasi(_) => None,
        }
    }
}

impl Realization for Model {
    fn transition(&self) -> &DMatrix<f64> {
        match self {
            Model::Hmm(h) => h.transition(),
            Model::Quasi(q) => q.transition(),
        }
    }

    fn observation_map(&self) -> &ObservationMap {
        match self {
            Model::Hmm(h) => h.observation_map(),
            Model::Quasi(q) => q.observation_map(),
        }
    }

    fn initial_vector(&self, tol: &Tolerances) -> Result<DVector<f64>> {
        match self {
            Model::Hmm(h) => h.initial_vector(tol),
            Model::Quasi(q) => q.initial_vector(tol),
        }
    }
}

impl From<Hmm> for Model {
    fn from(h: Hmm) -> Self {
        Model::Hmm(h)
    }
}

impl From<QuasiRealization> for Model {
    fn from(q: QuasiRealization) -> Self {
        Model::Quasi(q)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// `(u_s, ..., u_t)` with `s < t`: oldest symbol first.
    Ascending,
    /// `(u_t, ..., u_s)`: newest symbol first.
    Descending,
}

/// A word over `{1..d}` with an explicit time orientation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Word {
    symbols: Vec<usize>,
    orientation: Orientation,
}

impl Word {
    pub fn ascending(symbols: Vec<usize>) -> Self {
        Self {
            symbols,
            orientation: Orientation::Ascending,
        }
    }

    pub fn descending(symbols: Vec<usize>) -> Self {
        Self {
            symbols,
            orientation: Orientation::Descending,
        }
    }

    pub fn empty() -> Self {
        Self::ascending(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[usize] {
        &self.symbols
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    /// Symbols oldest first.
    pub fn chronological(&self) -> Vec<usize> {
        match self.orientation {
            Orientation::Ascending => self.symbols.clone(),
            Orientation::Descending => self.symbols.iter().rev().copied().collect(),
        }
    }
}

/// `e^T I_{u_t} Q I_{u_{t-1}} ... Q I_{u_s} rho` for the word `(u_s, ..., u_t)`.
pub fn string_probability<R: Realization + ?Sized>(model: &R, w: &Word, tol: &Tolerances) -> Result<f64> {
    let obs = model.observation_map();
    for &u in w.symbols() {
        obs.check_symbol(u)?;
    }
    let rho = model.initial_vector(tol)?;
    Ok(chronological_probability(model.transition(), obs, &rho, &w.chronological()))
}

pub(crate) fn chronological_probability(
    q: &DMatrix<f64>,
    obs: &ObservationMap,
    rho: &DVector<f64>,
    word: &[usize],
) -> f64 {
    let mut v = rho.clone();
    for (t, &u) in word.iter().enumerate() {
        if t > 0 {
            v = q * v;
        }
        mask_in_place(&mut v, obs, u);
    }
    v.sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, data: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, data.len() / rows, data)
    }

    #[test]
    fn permutation_is_valid() {
        let obs = ObservationMap::new(2, vec![1, 2]).unwrap();
        let r = validate_hmm(&m(2, &[0.0, 1.0, 1.0, 0.0]), &obs, &Tolerances::default()).unwrap();
        assert!(r.is_valid());
    }

    #[test]
    fn column_sum_violation_is_named() {
        let obs = ObservationMap::new(2, vec![1, 2]).unwrap();
        let r = validate_hmm(&m(2, &[0.5, 0.5, 0.4, 0.5]), &obs, &Tolerances::default()).unwrap();
        assert_eq!(r.violations.len(), 1);
        match &r.violations[0] {
            Violation::ColumnSum { col, sum } => {
                assert_eq!(*col, 1);
                assert!((sum - 0.9).abs() < 1e-12);
            }
            v => panic!("unexpected {v:?}"),
        }
        assert!(r.to_string().starts_with("column 1 sums to 0.9"));
    }

    #[test]
    fn negative_entry_violation_is_named() {
        let obs = ObservationMap::new(2, vec![1, 2]).unwrap();
        let r = validate_hmm(&m(2, &[1.1, 0.0, -0.1, 1.0]), &obs, &Tolerances::default()).unwrap();
        assert_eq!(r.violations.len(), 1);
        assert!(matches!(r.violations[0], Violation::NegativeEntry { row: 2, col: 1, .. }));
    }

    #[test]
    fn dimension_mismatch_is_structural() {
        let obs = ObservationMap::new(2, vec![1, 2, 2]).unwrap();
        let err = validate_hmm(&m(2, &[0.0, 1.0, 1.0, 0.0]), &obs, &Tolerances::default()).unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
    }

    #[test]
    fn observation_map_rejects_out_of_range() {
        assert!(matches!(
            ObservationMap::new(2, vec![1, 3]),
            Err(Error::SymbolOutOfRange { symbol: 3, d: 2 })
        ));
        assert!(ObservationMap::new(2, vec![0]).is_err());
    }

    #[test]
    fn periodic_chain_stationary() {
        let s = stationary_distribution(&m(2, &[0.0, 1.0, 1.0, 0.0]), &Tolerances::default()).unwrap();
        assert!((s.rho[0] - 0.5).abs() < 1e-14 && (s.rho[1] - 0.5).abs() < 1e-14);
        assert!(s.warnings.is_empty());
    }

    #[test]
    fn identity_has_double_eigenvalue() {
        let err = stationary_distribution(&DMatrix::identity(2, 2), &Tolerances::default()).unwrap_err();
        assert_eq!(err, Error::EigenvalueNotSimple { multiplicity: 2 });
        assert_eq!(err.to_string(), "eigenvalue 1 not simple, multiplicity 2");
    }

    #[test]
    fn selectors() {
        let obs = ObservationMap::new(2, vec![1, 2, 2]).unwrap();
        assert_eq!(selector(&obs, 2).unwrap(), DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 1.0, 1.0])));
        assert_eq!(selector(&obs, 1).unwrap(), DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0, 0.0])));
        let sum = selector(&obs, 1).unwrap() + selector(&obs, 2).unwrap();
        assert_eq!(sum, DMatrix::identity(3, 3));
        assert!(selector(&obs, 3).is_err());
        assert!(selector(&obs, 0).is_err());
    }

    #[test]
    fn observation_matrices() {
        let o = observation_matrix(&ObservationMap::new(2, vec![1, 2, 2, 2]).unwrap());
        assert_eq!(o, m(2, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0]));
        assert_eq!(observation_matrix(&ObservationMap::new(1, vec![1]).unwrap()), m(1, &[1.0]));
        assert_eq!(
            observation_matrix(&ObservationMap::new(2, vec![2, 1]).unwrap()),
            m(2, &[0.0, 1.0, 1.0, 0.0])
        );
    }

    #[test]
    fn empty_and_unary_words() {
        let tol = Tolerances::default();
        let hmm = Hmm::new(m(3, &[0.2, 0.5, 0.1, 0.3, 0.25, 0.6, 0.5, 0.25, 0.3]), ObservationMap::new(1, vec![1, 1, 1]).unwrap()).unwrap();
        assert!((string_probability(&hmm, &Word::empty(), &tol).unwrap() - 1.0).abs() < 1e-14);
        for n in 1..6 {
            let p = string_probability(&hmm, &Word::ascending(vec![1; n]), &tol).unwrap();
            assert!((p - 1.0).abs() < 1e-13);
        }
        assert!(matches!(
            string_probability(&hmm, &Word::ascending(vec![2]), &tol),
            Err(Error::SymbolOutOfRange { .. })
        ));
    }

    #[test]
    fn descending_word_reverses_time() {
        let tol = Tolerances::default();
        let hmm = Hmm::new(m(2, &[0.9, 0.3, 0.1, 0.7]), ObservationMap::identity(2)).unwrap();
        let a = string_probability(&hmm, &Word::ascending(vec![1, 1, 2]), &tol).unwrap();
        let b = string_probability(&hmm, &Word::descending(vec![2, 1, 1]), &tol).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn quasi_realization_checks_invariants() {
        let tol = Tolerances::default();
        let obs = ObservationMap::new(2, vec![1, 2]).unwrap();
        let q = m(2, &[1.2, -0.4, -0.2, 1.4]);
        // kernel of Q - I: 0.2 a = 0.4 b, so rho = (2/3, 1/3)
        let rho = DVector::from_vec(vec![2.0 / 3.0, 1.0 / 3.0]);
        let qr = QuasiRealization::new(q.clone(), obs.clone(), rho, &tol).unwrap();
        assert!(!qr.is_proper());
        assert!(QuasiRealization::new(q, obs, DVector::from_vec(vec![0.5, 0.5]), &tol).is_err());
    }
}
