//! Camera models, two-view epipolar entities, and the per-pair constraint
//! vectors that tie local affine frames to epipolar geometry.
//!
//! A pair of views `(i, j)` is constrained by two 2-vectors `a` and `b`. For
//! the true frames `M_i`, `M_j` of a surface point seen in both views,
//! `M_jᵀ a + M_iᵀ b = 0`. In pixel coordinates `a` is the image-plane part of
//! the epipolar line `F x̃_i` and `b` that of `Fᵀ x̃_j`; for calibrated bearing
//! vectors the same constraint is expressed through `E` and the bearing
//! gradients.

use nalgebra::{DMatrix, Matrix2, Matrix2x3, Matrix3, Matrix3x2, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::linalg::sorted_svd;

pub type Vec2 = Vector2<f64>;
pub type Vec3 = Vector3<f64>;
pub type Mat2 = Matrix2<f64>;
pub type Mat3 = Matrix3<f64>;

/// Minimum |det| of a frame, and minimum norm of an unnormalized `(a, b)` row.
pub const DEGENERACY_EPS: f64 = 1e-12;

const ROTATION_TOL: f64 = 1e-10;

/// A feature point together with the 2×2 linear part of its local frame.
///
/// `m` maps plane-local tangent coordinates to pixel offsets around `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalAffineFrame {
    pub x: Vec2,
    pub m: Mat2,
}

impl LocalAffineFrame {
    pub fn new(x: Vec2, m: Mat2) -> Self {
        Self { x, m }
    }

    pub fn is_nonsingular(&self) -> bool {
        self.m.determinant().abs() > DEGENERACY_EPS
    }
}

/// Scale and orientation only, as produced by similarity-covariant detectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartialFrame {
    pub x: Vec2,
    pub sigma: f64,
    pub theta: f64,
}

impl PartialFrame {
    pub fn new(x: Vec2, sigma: f64, theta: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::NonPositiveScale(sigma));
        }
        Ok(Self { x, sigma, theta })
    }

    /// Closest scaled rotation to `m` in the Frobenius sense.
    pub fn from_affine(x: Vec2, m: &Mat2) -> Result<Self> {
        let c = 0.5 * (m[(0, 0)] + m[(1, 1)]);
        let s = 0.5 * (m[(1, 0)] - m[(0, 1)]);
        Self::new(x, c.hypot(s), s.atan2(c))
    }

    pub fn expand(&self) -> Result<LocalAffineFrame> {
        Ok(LocalAffineFrame::new(self.x, expand_partial_frame(self)?))
    }
}

/// `σ·R(θ)`, the full frame a scale/orientation pair stands in for.
pub fn expand_partial_frame(pf: &PartialFrame) -> Result<Mat2> {
    if !(pf.sigma > 0.0) {
        return Err(Error::NonPositiveScale(pf.sigma));
    }
    let (s, c) = pf.theta.sin_cos();
    Ok(Mat2::new(c, -s, s, c) * pf.sigma)
}

/// `A = M₂ M₁⁻¹`, the local affine transformation between two frames.
pub fn affine_from_laf_pair(m1: &Mat2, m2: &Mat2) -> Result<Mat2> {
    let det = m1.determinant();
    if det.abs() <= DEGENERACY_EPS || !det.is_finite() {
        return Err(Error::SingularFrame { det });
    }
    let inv = Mat2::new(m1[(1, 1)], -m1[(0, 1)], -m1[(1, 0)], m1[(0, 0)]) / det;
    Ok(m2 * inv)
}

/// Pinhole camera `P = K [R | t]` mapping world points to pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PinholeCamera {
    k: Mat3,
    k_inv: Mat3,
    r: Mat3,
    t: Vec3,
}

impl PinholeCamera {
    pub fn new(k: Mat3, r: Mat3, t: Vec3) -> Result<Self> {
        if k.iter().chain(r.iter()).chain(t.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidCamera("non-finite entry".into()));
        }
        if k[(1, 0)] != 0.0 || k[(2, 0)] != 0.0 || k[(2, 1)] != 0.0 {
            return Err(Error::InvalidCamera("intrinsics must be upper-triangular".into()));
        }
        if !(k[(0, 0)] > 0.0 && k[(1, 1)] > 0.0 && k[(2, 2)] > 0.0) {
            return Err(Error::InvalidCamera("intrinsic diagonal must be positive".into()));
        }
        let ortho = (r.transpose() * r - Mat3::identity()).amax();
        if ortho > ROTATION_TOL {
            return Err(Error::InvalidCamera(format!(
                "rotation is not orthonormal (max |RᵀR - I| = {ortho:e})"
            )));
        }
        let det = r.determinant();
        if (det - 1.0).abs() > ROTATION_TOL {
            return Err(Error::InvalidCamera(format!("rotation determinant is {det}")));
        }
        let k_inv = k
            .try_inverse()
            .ok_or_else(|| Error::InvalidCamera("intrinsics are singular".into()))?;
        Ok(Self { k, k_inv, r, t })
    }

    pub fn intrinsics(&self) -> &Mat3 {
        &self.k
    }

    pub fn intrinsics_inverse(&self) -> &Mat3 {
        &self.k_inv
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.r
    }

    pub fn translation(&self) -> &Vec3 {
        &self.t
    }

    /// Optical center `-Rᵀ t` in world coordinates.
    pub fn center(&self) -> Vec3 {
        -(self.r.transpose() * self.t)
    }

    pub fn to_camera(&self, world: &Vec3) -> Vec3 {
        self.r * world + self.t
    }

    pub fn depth(&self, world: &Vec3) -> f64 {
        self.to_camera(world).z
    }

    pub fn project(&self, world: &Vec3) -> Vec2 {
        let p = self.k * self.to_camera(world);
        Vec2::new(p.x / p.z, p.y / p.z)
    }

    /// Jacobian of [`project`](Self::project) with respect to the world point.
    pub fn projection_jacobian(&self, world: &Vec3) -> Matrix2x3<f64> {
        let kr = self.k * self.r;
        let p = kr * world + self.k * self.t;
        let inv_z = 1.0 / p.z;
        let d = Matrix2x3::new(
            inv_z,
            0.0,
            -p.x * inv_z * inv_z,
            0.0,
            inv_z,
            -p.y * inv_z * inv_z,
        );
        d * kr
    }
}

/// Fundamental matrix with the convention `x̃_jᵀ F x̃_i = 0` for a pair `(i, j)`.
///
/// Stored with unit Frobenius norm and its largest-magnitude entry positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FundamentalMatrix(Mat3);

/// Essential matrix with the convention `q_jᵀ E q_i = 0`, canonicalized like
/// [`FundamentalMatrix`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EssentialMatrix(Mat3);

fn canonicalize(m: &Mat3) -> Result<Mat3> {
    let norm = m.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::NumericalFailure(
            "epipolar matrix has zero or non-finite norm".into(),
        ));
    }
    let mut out = m / norm;
    let mut best = 0.0;
    let mut sign = 1.0;
    for r in 0..3 {
        for c in 0..3 {
            let v = out[(r, c)];
            if v.abs() > best {
                best = v.abs();
                sign = v.signum();
            }
        }
    }
    out *= sign;
    Ok(out)
}

/// Null vectors `(e_i, e_j)` with `M e_i = 0` and `Mᵀ e_j = 0`.
fn null_vectors(m: &Mat3) -> (Vec3, Vec3) {
    (right_null_vector(m), right_null_vector(&m.transpose()))
}

fn right_null_vector(m: &Mat3) -> Vec3 {
    let svd = sorted_svd(&DMatrix::from_column_slice(3, 3, m.as_slice()))
        .expect("canonical matrices are finite");
    svd.v_t.row(2).transpose().fixed_rows::<3>(0).into_owned()
}

impl FundamentalMatrix {
    /// Canonicalizes scale and sign; rank is left as given.
    pub fn from_matrix(m: Mat3) -> Result<Self> {
        canonicalize(&m).map(Self)
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(canonicalize(&self.0.transpose()).expect("canonical matrix has unit norm"))
    }

    /// Epipoles `(e_i, e_j)` in homogeneous pixel coordinates.
    pub fn epipoles(&self) -> (Vec3, Vec3) {
        null_vectors(&self.0)
    }

    /// `x̃_jᵀ F x̃_i` for pixel points `x_i`, `x_j`.
    pub fn epipolar_residual(&self, xi: &Vec2, xj: &Vec2) -> f64 {
        xj.push(1.0).dot(&(self.0 * xi.push(1.0)))
    }

    pub fn singular_values(&self) -> Vec3 {
        sorted_singular_values(&self.0)
    }
}

impl EssentialMatrix {
    pub fn from_matrix(m: Mat3) -> Result<Self> {
        canonicalize(&m).map(Self)
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    /// `K_j⁻ᵀ E K_i⁻¹`.
    pub fn to_fundamental(&self, ki: &PinholeCamera, kj: &PinholeCamera) -> Result<FundamentalMatrix> {
        FundamentalMatrix::from_matrix(
            kj.intrinsics_inverse().transpose() * self.0 * ki.intrinsics_inverse(),
        )
    }

    pub fn singular_values(&self) -> Vec3 {
        sorted_singular_values(&self.0)
    }
}

fn sorted_singular_values(m: &Mat3) -> Vec3 {
    let s = sorted_svd(&DMatrix::from_column_slice(3, 3, m.as_slice()))
        .expect("canonical matrices are finite")
        .singular_values;
    Vec3::new(s[0], s[1], s[2])
}

pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Essential matrix of the relative pose from `cam1` to `cam2`.
pub fn essential_from_poses(cam1: &PinholeCamera, cam2: &PinholeCamera) -> Result<EssentialMatrix> {
    let baseline = (cam2.center() - cam1.center()).norm();
    if baseline < DEGENERACY_EPS {
        return Err(Error::CoincidentCenters { baseline });
    }
    let r_rel = cam2.rotation() * cam1.rotation().transpose();
    let t_rel = cam2.translation() - r_rel * cam1.translation();
    EssentialMatrix::from_matrix(skew(&t_rel) * r_rel)
}

/// Fundamental matrix such that `x̃₂ᵀ F x̃₁ = 0` for projections of any world point.
pub fn fundamental_from_cameras(cam1: &PinholeCamera, cam2: &PinholeCamera) -> Result<FundamentalMatrix> {
    essential_from_poses(cam1, cam2)?.to_fundamental(cam1, cam2)
}

/// The `(a, b)` pair of one epipolar constraint between views `pair.0` and `pair.1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairEpipolarVectors {
    pub a: Vec2,
    pub b: Vec2,
    pub pair: (usize, usize),
}

impl PairEpipolarVectors {
    pub fn new(a: Vec2, b: Vec2) -> Self {
        Self { a, b, pair: (0, 1) }
    }

    pub fn with_pair(mut self, i: usize, j: usize) -> Self {
        self.pair = (i, j);
        self
    }

    /// Euclidean norm of the stacked 4-vector `(a, b)`.
    pub fn norm(&self) -> f64 {
        (self.a.norm_squared() + self.b.norm_squared()).sqrt()
    }

    pub fn scaled(mut self, s: f64) -> Self {
        self.a *= s;
        self.b *= s;
        self
    }

    pub fn normalized(self) -> Self {
        let n = self.norm();
        self.scaled(1.0 / n)
    }

    /// `a` and `b` stacked as one 4-vector.
    pub fn stacked(&self) -> nalgebra::Vector4<f64> {
        nalgebra::Vector4::new(self.a.x, self.a.y, self.b.x, self.b.y)
    }

    fn checked(self) -> Result<Self> {
        let norm = self.norm();
        if !(norm >= DEGENERACY_EPS) {
            return Err(Error::DegenerateConstraint { norm });
        }
        Ok(self)
    }
}

/// Unnormalized `a = I₂ₓ₃ F x̃₁`, `b = I₂ₓ₃ Fᵀ x̃₂`.
pub fn raw_epipolar_vectors_pinhole(f: &FundamentalMatrix, x1: &Vec2, x2: &Vec2) -> Result<PairEpipolarVectors> {
    let f = f.matrix();
    let a = (f * x1.push(1.0)).xy();
    let b = (f.transpose() * x2.push(1.0)).xy();
    PairEpipolarVectors::new(a, b).checked()
}

/// Constraint vectors in pixel coordinates, jointly scaled to unit norm.
pub fn epipolar_vectors_pinhole(f: &FundamentalMatrix, x1: &Vec2, x2: &Vec2) -> Result<PairEpipolarVectors> {
    raw_epipolar_vectors_pinhole(f, x1, x2).map(PairEpipolarVectors::normalized)
}

/// Unit bearing of a pixel and its derivative with respect to the pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BearingObservation {
    pub q: Vec3,
    pub dq: Matrix3x2<f64>,
}

pub fn bearing_and_gradient(cam: &PinholeCamera, x: &Vec2) -> BearingObservation {
    let k_inv = cam.intrinsics_inverse();
    let ray = k_inv * x.push(1.0);
    let len = ray.norm();
    let q = ray / len;
    // d(v/|v|) = (I - q qᵀ) dv / |v|, dv/dx = first two columns of K⁻¹
    let dray: Matrix3x2<f64> = k_inv.fixed_columns::<2>(0).into_owned();
    let dq = (Mat3::identity() - q * q.transpose()) * dray / len;
    BearingObservation { q, dq }
}

/// Unnormalized `a = ∇q₂ᵀ E q₁`, `b = ∇q₁ᵀ Eᵀ q₂`.
pub fn raw_epipolar_vectors_central(
    e: &EssentialMatrix,
    obs1: &BearingObservation,
    obs2: &BearingObservation,
) -> Result<PairEpipolarVectors> {
    let e = e.matrix();
    let a = obs2.dq.transpose() * (e * obs1.q);
    let b = obs1.dq.transpose() * (e.transpose() * obs2.q);
    PairEpipolarVectors::new(a, b).checked()
}

/// Constraint vectors for arbitrary central projection, jointly scaled to unit norm.
pub fn epipolar_vectors_central(
    e: &EssentialMatrix,
    obs1: &BearingObservation,
    obs2: &BearingObservation,
) -> Result<PairEpipolarVectors> {
    raw_epipolar_vectors_central(e, obs1, obs2).map(PairEpipolarVectors::normalized)
}

/// `M₂ᵀ a + M₁ᵀ b`; zero for frames consistent with the pair's geometry.
pub fn laf_pair_residual(ev: &PairEpipolarVectors, m1: &Mat2, m2: &Mat2) -> Vec2 {
    m2.transpose() * ev.a + m1.transpose() * ev.b
}
