//! Small dense kernels: column-pivoting Householder QR and SVD-based
//! orthonormal bases for the column space of a matrix.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// `A P = Q R` with `Q` orthogonal (m×m), `R` upper-trapezoidal and the
/// diagonal of `R` non-increasing in magnitude.
#[derive(Debug, Clone)]
pub struct ColPivQr {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    perm: Vec<usize>,
}

impl ColPivQr {
    pub fn new(a: &DMatrix<f64>) -> Self {
        let (m, n) = a.shape();
        let mut r = a.clone();
        let mut q = DMatrix::<f64>::identity(m, m);
        let mut perm: Vec<usize> = (0..n).collect();

        for k in 0..m.min(n) {
            let (pivot, pivot_norm) = (k..n)
                .map(|j| (j, r.view((k, j), (m - k, 1)).norm_squared()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pivot_norm <= 0.0 {
                break;
            }
            if pivot != k {
                r.swap_columns(k, pivot);
                perm.swap(k, pivot);
            }

            let x = r.view((k, k), (m - k, 1)).clone_owned();
            let x_norm = x.norm();
            let alpha = if x[0] >= 0.0 { -x_norm } else { x_norm };
            let mut v: DVector<f64> = x.column(0).into_owned();
            v[0] -= alpha;
            let v_norm = v.norm();
            if v_norm == 0.0 {
                continue;
            }
            v /= v_norm;

            {
                let mut tail = r.view_mut((k, k), (m - k, n - k));
                let w = tail.tr_mul(&v);
                tail.ger(-2.0, &v, &w, 1.0);
            }
            {
                let mut qcols = q.view_mut((0, k), (m, m - k));
                let w = &qcols * &v;
                qcols.ger(-2.0, &w, &v, 1.0);
            }
            r[(k, k)] = alpha;
            for i in k + 1..m {
                r[(i, k)] = 0.0;
            }
        }
        Self { q, r, perm }
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    /// Column `k` of `A P` is column `perm[k]` of `A`.
    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let (m, n) = self.r.shape();
        (0..m.min(n)).map(|k| self.r[(k, k)].abs()).collect()
    }

    /// Number of diagonal entries of `R` above `rel_tol · |R₀₀|`.
    pub fn rank(&self, rel_tol: f64) -> usize {
        let diag = self.diagonal();
        match diag.first() {
            Some(&lead) if lead > 0.0 => diag.iter().take_while(|d| **d > rel_tol * lead).count(),
            _ => 0,
        }
    }

    /// Orthonormal basis of the column space at the given rank.
    pub fn range_basis(&self, rank: usize) -> DMatrix<f64> {
        self.q.columns(0, rank).into_owned()
    }
}

/// Thin SVD `A = U Σ Vᵀ` with singular values sorted in decreasing order.
///
/// `u` is m×min(m,n) and `v_t` is min(m,n)×n, both with orthonormal
/// columns/rows. Singular vectors of (numerically) zero singular values are
/// an arbitrary orthonormal completion.
#[derive(Debug, Clone)]
pub struct SortedSvd {
    pub u: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub v_t: DMatrix<f64>,
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// One-sided Jacobi on a tall matrix: rotates column pairs of `w` until all
/// are mutually orthogonal, accumulating the rotations in `v`.
fn jacobi_tall(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (m, n) = a.shape();
    let mut w = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let tol = (m as f64).sqrt() * f64::EPSILON;
    // columns at round-off level relative to A are treated as zero
    let floor = (m.max(n) as f64 * f64::EPSILON * a.norm()).powi(2);
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = w.column(p).norm_squared();
                let beta = w.column(q).norm_squared();
                let gamma = w.column(p).dot(&w.column(q));
                if alpha <= floor || beta <= floor || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(&mut w, p, q, c, s);
                rotate_columns(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            return Ok((w, v));
        }
    }
    Err(Error::NumericalFailure("Jacobi SVD did not converge".into()))
}

fn rotate_columns(m: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    for i in 0..m.nrows() {
        let (xp, xq) = (m[(i, p)], m[(i, q)]);
        m[(i, p)] = c * xp - s * xq;
        m[(i, q)] = s * xp + c * xq;
    }
}

/// Removes from `v` its components along columns `0..c` of `q` (two passes)
/// and returns the remaining norm.
fn orthogonalize(q: &DMatrix<f64>, c: usize, v: &mut DVector<f64>) -> f64 {
    for _ in 0..2 {
        for i in 0..c {
            let proj = q.column(i).dot(v);
            v.axpy(-proj, &q.column(i), 1.0);
        }
    }
    v.norm()
}

/// Fills column `c` of `q` with a unit vector orthogonal to columns `0..c`.
fn complete_column(q: &mut DMatrix<f64>, c: usize) {
    for e in 0..q.nrows() {
        let mut v = DVector::<f64>::zeros(q.nrows());
        v[e] = 1.0;
        let n = orthogonalize(q, c, &mut v);
        if n > 0.5 {
            q.set_column(c, &(v / n));
            return;
        }
    }
}

pub fn sorted_svd(a: &DMatrix<f64>) -> Result<SortedSvd> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure("SVD input has non-finite entries".into()));
    }
    let (m, n) = a.shape();
    let wide = m < n;
    let tall = if wide { a.transpose() } else { a.clone() };
    let (w, v) = jacobi_tall(&tall)?;
    let k = tall.ncols();

    let mut order: Vec<(usize, f64)> = (0..k).map(|j| (j, w.column(j).norm())).collect();
    order.sort_by(|x, y| y.1.total_cmp(&x.1));
    let singular_values: Vec<f64> = order.iter().map(|(_, s)| *s).collect();
    // small columns lose orthogonality to round-off, so each one is
    // reorthogonalized; columns of negligible norm are completed instead
    let tol = f64::EPSILON * tall.nrows().max(k) as f64 * singular_values.first().copied().unwrap_or(0.0);
    let mut left = DMatrix::zeros(tall.nrows(), k);
    for (c, &(j, s)) in order.iter().enumerate() {
        let mut u = w.column(j) / s.max(f64::MIN_POSITIVE);
        if s > tol && orthogonalize(&left, c, &mut u) > 0.5 {
            left.set_column(c, &u.normalize());
        } else {
            complete_column(&mut left, c);
        }
    }
    let right = DMatrix::from_fn(k, k, |i, c| v[(i, order[c].0)]);

    // tall: A = left Σ rightᵀ; wide: Aᵀ = left Σ rightᵀ, so A = right Σ leftᵀ
    Ok(if wide {
        SortedSvd { u: right, singular_values, v_t: left.transpose() }
    } else {
        SortedSvd { u: left, singular_values, v_t: right.transpose() }
    })
}

/// Full spectrum of `A` over its row space: the `m` singular values of an
/// m×n matrix padded with zeros when `n < m`, sorted decreasingly.
pub fn left_spectrum(a: &DMatrix<f64>) -> Result<Vec<f64>> {
    let mut s = sorted_svd(a)?.singular_values;
    s.resize(a.nrows(), 0.0);
    Ok(s)
}

/// Count of values of `spectrum` at or below `rel_tol · max`.
pub fn count_small(spectrum: &[f64], rel_tol: f64) -> usize {
    let max = spectrum.iter().copied().fold(0.0, f64::max);
    spectrum.iter().filter(|s| **s <= rel_tol * max).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sample(m: usize, n: usize, seed: u64) -> DMatrix<f64> {
        let mut state = seed;
        DMatrix::from_fn(m, n, |_, _| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        })
    }

    #[test]
    fn reconstructs_permuted_input() {
        for (m, n) in [(6, 3), (4, 7), (10, 10), (1, 1)] {
            let a = sample(m, n, (m * 31 + n) as u64);
            let qr = ColPivQr::new(&a);
            let ap = DMatrix::from_fn(m, n, |i, j| a[(i, qr.permutation()[j])]);
            assert_relative_eq!(qr.q() * qr.r(), ap, epsilon = 1e-13);
            assert_relative_eq!(qr.q().transpose() * qr.q(), DMatrix::identity(m, m), epsilon = 1e-13);
            let diag = qr.diagonal();
            assert!(diag.windows(2).all(|w| w[0] >= w[1] - 1e-12));
        }
    }

    #[test]
    fn detects_rank_of_product() {
        let a = sample(8, 3, 5) * sample(3, 6, 9);
        let qr = ColPivQr::new(&a);
        assert_eq!(qr.rank(1e-10), 3);
        let basis = qr.range_basis(3);
        let residual = &a - &basis * (basis.transpose() * &a);
        assert!(residual.norm() < 1e-12);
    }

    #[test]
    fn zero_matrix_has_rank_zero() {
        let qr = ColPivQr::new(&DMatrix::zeros(4, 2));
        assert_eq!(qr.rank(1e-10), 0);
    }

    #[test]
    fn svd_reconstructs_tall_wide_and_deficient() {
        let cases = [sample(8, 6, 1), sample(3, 9, 2), sample(7, 2, 3) * sample(2, 5, 4), sample(1, 1, 5)];
        for a in cases {
            let svd = sorted_svd(&a).unwrap();
            let s = DMatrix::from_diagonal(&DVector::from_vec(svd.singular_values.clone()));
            assert_relative_eq!(&svd.u * s * &svd.v_t, a, epsilon = 1e-13);
            assert!(svd.singular_values.windows(2).all(|w| w[0] >= w[1]));
            let k = svd.singular_values.len();
            assert_relative_eq!(&svd.v_t * svd.v_t.transpose(), DMatrix::identity(k, k), epsilon = 1e-13);
        }
    }

    #[test]
    fn svd_singular_values_of_known_matrix() {
        // [[3, 0], [4, 5]] has singular values sqrt(45) and sqrt(5)
        let a = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 4.0, 5.0]);
        let s = sorted_svd(&a).unwrap().singular_values;
        assert_relative_eq!(s[0], 45f64.sqrt(), epsilon = 1e-14);
        assert_relative_eq!(s[1], 5f64.sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn spectrum_is_padded() {
        let a = sample(6, 2, 3);
        let s = left_spectrum(&a).unwrap();
        assert_eq!(s.len(), 6);
        assert_eq!(count_small(&s, 1e-9), 4);
    }
}
