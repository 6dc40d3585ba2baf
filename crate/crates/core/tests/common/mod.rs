//! Shared fixtures and independent reference computations for the
//! integration tests.

#![allow(dead_code)]

use laf_epipolar::synth::{add_noise, generate_scene, ground_truth_lafs, mix_seed, NoiseModel, SyntheticScene};
use laf_epipolar::{
    ConstraintModel, LocalAffineFrame, Mat2, MultiViewTrack, PairSet, PinholeCamera, RowScaling, Vec2, Vec3,
};
use nalgebra::{DMatrix, Matrix2x3};

pub fn scene(n_views: usize, seed: u64) -> SyntheticScene {
    generate_scene(n_views, mix_seed(&[0xC0FFEE, seed])).expect("scene generation")
}

pub fn noisy_frames(scene: &SyntheticScene, sigma: f64, seed: u64) -> Vec<LocalAffineFrame> {
    add_noise(&ground_truth_lafs(scene), NoiseModel::new(sigma).unwrap(), mix_seed(&[0xBEEF, seed]))
}

pub fn matrices(frames: &[LocalAffineFrame]) -> Vec<Mat2> {
    frames.iter().map(|f| f.m).collect()
}

/// Track whose constraints come from the true poses and true points, with
/// the given frame matrices: `B` is noise-free.
pub fn clean_track(scene: &SyntheticScene, m: &[Mat2]) -> MultiViewTrack {
    clean_track_with(scene, m, PairSet::All, ConstraintModel::Pixel, RowScaling::Unit)
}

pub fn clean_track_with(
    scene: &SyntheticScene,
    m: &[Mat2],
    pairs: PairSet,
    model: ConstraintModel,
    scaling: RowScaling,
) -> MultiViewTrack {
    let frames: Vec<LocalAffineFrame> = ground_truth_lafs(scene)
        .into_iter()
        .zip(m)
        .map(|(f, m)| LocalAffineFrame::new(f.x, *m))
        .collect();
    MultiViewTrack::from_cameras(frames, &scene.cameras, pairs, model, scaling).expect("clean track")
}

/// `π(X) = (K (R X + t))₀,₁ / (K (R X + t))₂` differentiated by hand.
pub fn pixel_jacobian(cam: &PinholeCamera, x: &Vec3) -> Matrix2x3<f64> {
    let p = cam.intrinsics() * (cam.rotation() * x + cam.translation());
    let dpi = Matrix2x3::new(1.0 / p.z, 0.0, -p.x / (p.z * p.z), 0.0, 1.0 / p.z, -p.y / (p.z * p.z));
    dpi * cam.intrinsics() * cam.rotation()
}

/// `[J_1; …; J_V]`: its columns span every frame stack induced by a 3D
/// tangent direction, i.e. the consistent frames.
pub fn jacobian_stack(scene: &SyntheticScene) -> DMatrix<f64> {
    let n = scene.n_views();
    let mut out = DMatrix::zeros(2 * n, 3);
    for (k, cam) in scene.cameras.iter().enumerate() {
        out.view_mut((2 * k, 0), (2, 3)).copy_from(&pixel_jacobian(cam, &scene.point));
    }
    out
}

/// Orthonormal basis of the column span by modified Gram-Schmidt with one
/// reorthogonalization pass. Columns must be independent.
pub fn gram_schmidt(a: &DMatrix<f64>) -> DMatrix<f64> {
    let mut q = a.clone();
    for j in 0..q.ncols() {
        for _ in 0..2 {
            for i in 0..j {
                let proj = q.column(i).dot(&q.column(j));
                let qi = q.column(i).into_owned();
                q.column_mut(j).axpy(-proj, &qi, 1.0);
            }
        }
        let n = q.column(j).norm();
        assert!(n > 1e-12, "dependent columns");
        q.column_mut(j).scale_mut(1.0 / n);
    }
    q
}

/// Orthogonal projection of `m` onto the column span of the orthonormal `q`.
pub fn project(q: &DMatrix<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
    q * (q.transpose() * m)
}

pub fn stack(m: &[Mat2]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(2 * m.len(), 2);
    for (k, mk) in m.iter().enumerate() {
        out.view_mut((2 * k, 0), (2, 2)).copy_from(mk);
    }
    out
}

/// Least-squares optimal frames computed from the known left nullspace
/// instead of from `B`.
pub fn reference_correction(scene: &SyntheticScene, m: &[Mat2]) -> DMatrix<f64> {
    project(&gram_schmidt(&jacobian_stack(scene)), &stack(m))
}

pub fn dehomogenize(v: &Vec3) -> Vec2 {
    Vec2::new(v.x / v.z, v.y / v.z)
}

/// Cosine between two matrices viewed as vectors, sign-insensitive.
pub fn abs_cosine<const R: usize, const C: usize>(
    a: &nalgebra::SMatrix<f64, R, C>,
    b: &nalgebra::SMatrix<f64, R, C>,
) -> f64 {
    a.dot(b).abs() / (a.norm() * b.norm())
}
