//! Normalized 8-point estimation of the fundamental matrix.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::geometry::{FundamentalMatrix, Mat3, Vec2};
use crate::linalg::sorted_svd;

/// A second singular value of the design matrix below this fraction of the
/// largest means the solution is not unique.
pub const NULLSPACE_TOL: f64 = 1e-8;

/// Point matches `(x1, x2)` in pixels between two images.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCorrespondenceSet {
    pub matches: Vec<(Vec2, Vec2)>,
}

impl PointCorrespondenceSet {
    pub fn new(matches: Vec<(Vec2, Vec2)>) -> Self {
        Self { matches }
    }

    pub fn from_slices(x1: &[Vec2], x2: &[Vec2]) -> Result<Self> {
        if x1.len() != x2.len() {
            return Err(Error::InvalidInput(format!(
                "{} points in the first image but {} in the second",
                x1.len(),
                x2.len()
            )));
        }
        Ok(Self::new(x1.iter().copied().zip(x2.iter().copied()).collect()))
    }

    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }
}

/// Similarity moving the centroid to the origin with mean distance √2.
fn hartley_transform<'a>(points: impl Iterator<Item = &'a Vec2> + Clone) -> Result<Mat3> {
    let n = points.clone().count() as f64;
    let centroid = points.clone().fold(Vec2::zeros(), |acc, p| acc + p) / n;
    let mean_dist = points.map(|p| (p - centroid).norm()).sum::<f64>() / n;
    if !(mean_dist > 0.0) || !mean_dist.is_finite() {
        return Err(Error::DegenerateConfiguration("all points coincide".into()));
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;
    Ok(Mat3::new(s, 0.0, -s * centroid.x, 0.0, s, -s * centroid.y, 0.0, 0.0, 1.0))
}

/// Least-squares `F` over all correspondences with `x̃₂ᵀ F x̃₁ = 0`, rank 2
/// enforced, canonical scale and sign.
pub fn estimate_f_eight_point(pts: &PointCorrespondenceSet) -> Result<FundamentalMatrix> {
    let n = pts.len();
    if n < 8 {
        return Err(Error::InsufficientConstraints(format!(
            "8-point estimation needs at least 8 correspondences, got {n}"
        )));
    }
    if pts
        .matches
        .iter()
        .any(|(a, b)| !(a.iter().chain(b.iter()).all(|v| v.is_finite())))
    {
        return Err(Error::InvalidInput("non-finite point coordinate".into()));
    }
    let t1 = hartley_transform(pts.matches.iter().map(|(p, _)| p))?;
    let t2 = hartley_transform(pts.matches.iter().map(|(_, p)| p))?;

    // zero rows pad the 8-point case so the full right singular basis exists
    let mut design = DMatrix::<f64>::zeros(n.max(9), 9);
    for (row, (p1, p2)) in pts.matches.iter().enumerate() {
        let u = t1 * p1.push(1.0);
        let v = t2 * p2.push(1.0);
        for r in 0..3 {
            for c in 0..3 {
                design[(row, 3 * r + c)] = v[r] * u[c];
            }
        }
    }
    let svd = sorted_svd(&design)?;
    let s = &svd.singular_values;
    if s[7] <= NULLSPACE_TOL * s[0] {
        return Err(Error::DegenerateConfiguration(format!(
            "design matrix nullspace is more than one-dimensional (σ₈/σ₁ = {:e})",
            s[7] / s[0]
        )));
    }
    let f_row = svd.v_t.row(8);
    let f_norm = Mat3::from_row_slice(f_row.transpose().as_slice());

    let f_svd = sorted_svd(&DMatrix::from_column_slice(3, 3, f_norm.as_slice()))?;
    let s = &f_svd.singular_values;
    let mut rank2 = Mat3::zeros();
    for (k, sk) in s.iter().enumerate().take(2) {
        let u = f_svd.u.column(k);
        let v = f_svd.v_t.row(k);
        for r in 0..3 {
            for c in 0..3 {
                rank2[(r, c)] += sk * u[r] * v[c];
            }
        }
    }

    FundamentalMatrix::from_matrix(t2.transpose() * rank2 * t1)
}
