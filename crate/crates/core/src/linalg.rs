//! Dense linear-algebra helpers shared by the subspace, reduction and Hankel
//! code: a column-pivoted Householder QR, SVD-based rank decisions,
//! pseudoinverses, kernels and principal angles.
//!
//! Every rank decision in the crate goes through [`rank_threshold`] so that
//! subspace dimensions and Hankel ranks are decided by the same rule.

use nalgebra::{DMatrix, DVector, Dim, Matrix, Storage};

/// Singular values (or pivoted-QR diagonal magnitudes) below this are zero.
pub fn rank_threshold(rows: usize, cols: usize, sigma_max: f64, factor: f64) -> f64 {
    rows.max(cols) as f64 * f64::EPSILON * sigma_max * factor
}

/// Householder QR with column pivoting, `A P = Q R`.
#[derive(Debug, Clone)]
pub struct PivotedQr {
    /// Thin orthonormal factor, `m x min(m, n)`.
    pub q: DMatrix<f64>,
    /// Upper-trapezoidal factor, `min(m, n) x n`, columns in pivot order.
    pub r: DMatrix<f64>,
    /// `perm[j]` is the original index of the `j`-th pivoted column.
    pub perm: Vec<usize>,
}

impl PivotedQr {
    /// `|R_jj|`, nonincreasing up to rounding.
    pub fn diag_abs(&self) -> Vec<f64> {
        (0..self.r.nrows().min(self.r.ncols()))
            .map(|j| self.r[(j, j)].abs())
            .collect()
    }

    /// Numerical rank with the shared threshold relative to `|R_00|`.
    pub fn rank(&self, factor: f64) -> usize {
        let diag = self.diag_abs();
        let Some(&top) = diag.first() else { return 0 };
        if top == 0.0 {
            return 0;
        }
        let thr = rank_threshold(self.q.nrows(), self.r.ncols(), top, factor);
        diag.iter().take_while(|&&v| v > thr).count()
    }
}

/// Column-pivoted Householder QR. The pivot at each step is the remaining
/// column with the largest residual norm; ties go to the lowest index.
pub fn pivoted_qr(a: &DMatrix<f64>) -> PivotedQr {
    let (m, n) = a.shape();
    let kmax = m.min(n);
    let mut r = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut reflectors: Vec<DVector<f64>> = Vec::with_capacity(kmax);

    for j in 0..kmax {
        let mut best = j;
        let mut best_norm = -1.0;
        for p in j..n {
            let norm: f64 = (j..m).map(|i| r[(i, p)] * r[(i, p)]).sum();
            if norm > best_norm {
                best_norm = norm;
                best = p;
            }
        }
        if best != j {
            r.swap_columns(j, best);
            perm.swap(j, best);
        }

        let mut v = DVector::from_iterator(m - j, (j..m).map(|i| r[(i, j)]));
        let x_norm = v.norm();
        if x_norm == 0.0 {
            reflectors.push(DVector::zeros(m - j));
            continue;
        }
        let alpha = if v[0] >= 0.0 { -x_norm } else { x_norm };
        v[0] -= alpha;
        let v_norm = v.norm();
        if v_norm == 0.0 {
            reflectors.push(DVector::zeros(m - j));
            continue;
        }
        v /= v_norm;
        for c in j..n {
            let dot: f64 = (0..m - j).map(|i| v[i] * r[(j + i, c)]).sum();
            for i in 0..m - j {
                r[(j + i, c)] -= 2.0 * v[i] * dot;
            }
        }
        for i in j + 1..m {
            r[(i, j)] = 0.0;
        }
        reflectors.push(v);
    }

    let mut q = DMatrix::<f64>::zeros(m, kmax);
    for j in 0..kmax {
        q[(j, j)] = 1.0;
    }
    for (j, v) in reflectors.iter().enumerate().rev() {
        for c in 0..kmax {
            let dot: f64 = (0..m - j).map(|i| v[i] * q[(j + i, c)]).sum();
            if dot != 0.0 {
                for i in 0..m - j {
                    q[(j + i, c)] -= 2.0 * v[i] * dot;
                }
            }
        }
    }
    let r = r.rows(0, kmax).into_owned();
    PivotedQr { q, r, perm }
}

/// Leading rows of a column-pivoted QR of `a`, stopped as soon as the
/// Frobenius norm of the unreduced block falls to `stop(max_column_norm)` or
/// below.
///
/// Returns the computed rows of `R` and the Frobenius norm of the block left
/// over. Since `A P = Q [R; 0 S]`, the singular values of `A` differ from those
/// of the returned rows by at most that norm.
pub fn partial_pivoted_qr(a: &DMatrix<f64>, stop: impl Fn(f64) -> f64) -> (DMatrix<f64>, f64) {
    let (m, n) = a.shape();
    let kmax = m.min(n);
    let mut work = a.clone();
    let mut norms: Vec<f64> = (0..n).map(|c| work.column(c).norm_squared()).collect();
    let top = norms.iter().copied().fold(0.0, f64::max).sqrt();
    let limit = stop(top);
    let mut steps = 0;
    let mut residual = norms.iter().sum::<f64>().sqrt();
    while steps < kmax && residual > limit {
        let j = steps;
        let mut best = j;
        for p in j..n {
            if norms[p] > norms[best] {
                best = p;
            }
        }
        if best != j {
            work.swap_columns(j, best);
            norms.swap(j, best);
        }
        let mut v = DVector::from_iterator(m - j, (j..m).map(|i| work[(i, j)]));
        let x_norm = v.norm();
        if x_norm > 0.0 {
            let alpha = if v[0] >= 0.0 { -x_norm } else { x_norm };
            v[0] -= alpha;
            let v_norm = v.norm();
            if v_norm > 0.0 {
                v /= v_norm;
                for c in j..n {
                    let dot: f64 = (0..m - j).map(|i| v[i] * work[(j + i, c)]).sum();
                    if dot != 0.0 {
                        for i in 0..m - j {
                            work[(j + i, c)] -= 2.0 * v[i] * dot;
                        }
                    }
                }
            }
        }
        for i in j + 1..m {
            work[(i, j)] = 0.0;
        }
        steps += 1;
        for (c, norm) in norms.iter_mut().enumerate().skip(steps) {
            *norm = (steps..m).map(|i| work[(i, c)] * work[(i, c)]).sum();
        }
        residual = norms[steps..].iter().sum::<f64>().sqrt();
    }
    let residual = if steps >= kmax { 0.0 } else { residual };
    (work.rows(0, steps).into_owned(), residual)
}

/// Orthonormal basis of the column span of `a`, rank decided by pivoted QR.
pub fn orthonormal_span(a: &DMatrix<f64>, factor: f64) -> DMatrix<f64> {
    if a.ncols() == 0 || a.nrows() == 0 {
        return DMatrix::zeros(a.nrows(), 0);
    }
    let qr = pivoted_qr(a);
    let rank = qr.rank(factor);
    qr.q.columns(0, rank).into_owned()
}

/// Singular values in nonincreasing order.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = a.clone().singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Numerical rank by singular values with the shared threshold.
pub fn numerical_rank_of(a: &DMatrix<f64>, factor: f64) -> usize {
    let s = singular_values(a);
    let Some(&top) = s.first() else { return 0 };
    let thr = rank_threshold(a.nrows(), a.ncols(), top, factor);
    s.iter().filter(|&&v| v > thr).count()
}

/// Moore-Penrose pseudoinverse; singular values under the shared threshold are
/// dropped.
pub fn pinv(a: &DMatrix<f64>, factor: f64) -> DMatrix<f64> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return DMatrix::zeros(n, m);
    }
    let svd = a.clone().svd(true, true);
    let s = &svd.singular_values;
    let top = s.iter().copied().fold(0.0, f64::max);
    let thr = rank_threshold(m, n, top, factor);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let mut out = DMatrix::<f64>::zeros(n, m);
    for (i, &sv) in s.iter().enumerate() {
        if sv > thr {
            out += (v_t.row(i).transpose() / sv) * u.column(i).transpose();
        }
    }
    out
}

/// Orthonormal basis (`n x nullity`) of the right kernel of `a`.
pub fn kernel_basis(a: &DMatrix<f64>, factor: f64) -> DMatrix<f64> {
    let (m, n) = a.shape();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    // Pad to at least n rows so the SVD returns a full right factor.
    let padded = if m < n {
        let mut p = DMatrix::<f64>::zeros(n, n);
        p.rows_mut(0, m).copy_from(a);
        p
    } else {
        a.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let s = &svd.singular_values;
    let top = s.iter().copied().fold(0.0, f64::max);
    let thr = rank_threshold(m, n, top, factor);
    let cols: Vec<DVector<f64>> = (0..s.len())
        .filter(|&i| !(s[i] > thr))
        .map(|i| v_t.row(i).transpose())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Largest principal angle (radians) between the column spans of `a` and `b`.
/// Spans of different dimension are reported as `pi/2` apart.
pub fn max_principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>, factor: f64) -> f64 {
    let qa = orthonormal_span(a, factor);
    let qb = orthonormal_span(b, factor);
    if qa.ncols() != qb.ncols() {
        return std::f64::consts::FRAC_PI_2;
    }
    if qa.ncols() == 0 {
        return 0.0;
    }
    let overlap = qa.transpose() * &qb;
    let resid = &qb - &qa * &overlap;
    // atan2 of both the sine and the cosine stays accurate near 0 and pi/2.
    let sin = singular_values(&resid).first().copied().unwrap_or(0.0);
    let cos = singular_values(&overlap).last().copied().unwrap_or(0.0);
    sin.atan2(cos)
}

/// Largest absolute entry; a NaN anywhere gives infinity so that residual
/// checks fail instead of passing silently.
pub fn max_abs<R: Dim, C: Dim, S: Storage<f64, R, C>>(a: &Matrix<f64, R, C, S>) -> f64 {
    a.iter().fold(0.0, |acc: f64, v| if v.is_nan() { f64::INFINITY } else { acc.max(v.abs()) })
}

pub fn max_abs_vec(a: &DVector<f64>) -> f64 {
    max_abs(a)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pivoted_qr_reconstructs() {
        let a = DMatrix::from_row_slice(4, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 10.0, 0.5, -1.0, 2.0]);
        let qr = pivoted_qr(&a);
        let mut ap = DMatrix::zeros(4, 3);
        for (j, &p) in qr.perm.iter().enumerate() {
            ap.set_column(j, &a.column(p));
        }
        assert!(max_abs(&(&qr.q * &qr.r - ap)) < 1e-12);
        assert!(max_abs(&(qr.q.transpose() * &qr.q - DMatrix::identity(3, 3))) < 1e-12);
        let d = qr.diag_abs();
        assert!(d[0] >= d[1] && d[1] >= d[2]);
    }

    #[test]
    fn rank_of_duplicated_columns() {
        let a = DMatrix::from_row_slice(3, 4, &[1.0, 2.0, 1.0, 3.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0]);
        assert_eq!(pivoted_qr(&a).rank(1e3), 2);
        assert_eq!(numerical_rank_of(&a, 1e3), 2);
        assert_eq!(orthonormal_span(&a, 1e3).ncols(), 2);
        assert_eq!(kernel_basis(&a, 1e3).ncols(), 2);
    }

    #[test]
    fn pivot_ties_go_to_lowest_index() {
        let a = DMatrix::<f64>::identity(3, 3);
        assert_eq!(pivoted_qr(&a).perm, vec![0, 1, 2]);
    }

    #[test]
    fn partial_qr_preserves_leading_spectrum() {
        let u = DMatrix::from_fn(30, 3, |i, j| ((i * 7 + j * 3) % 11) as f64 - 5.0);
        let v = DMatrix::from_fn(3, 25, |i, j| ((i * 5 + j * 2) % 7) as f64 + 0.5);
        let a = &u * &v;
        let (rows, resid) = partial_pivoted_qr(&a, |top| 1e-12 * top);
        assert!(rows.nrows() <= 4);
        assert!(resid <= 1e-12 * 1e3);
        let full = singular_values(&a);
        let part = singular_values(&rows);
        for i in 0..3 {
            assert!((full[i] - part[i]).abs() < 1e-9 * full[0]);
        }
    }

    #[test]
    fn pinv_of_full_rank_is_inverse() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let p = pinv(&a, 1e3);
        assert!(max_abs(&(p * a - DMatrix::identity(2, 2))) < 1e-14);
    }

    #[test]
    fn angles_between_equal_spans_vanish() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let b = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 1.0, -1.0, 0.0, 0.0]);
        assert!(max_principal_angle(&a, &b, 1e3) < 1e-12);
        let c = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let ang = max_principal_angle(&a, &c, 1e3);
        assert!((ang - std::f64::consts::FRAC_PI_2).abs() < 1e-12, "{ang}");
    }
}
