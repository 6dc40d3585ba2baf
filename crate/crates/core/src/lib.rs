//! Closed-form correction of multi-view local affine frames (LAFs) so that
//! they agree exactly with known epipolar geometry.
//!
//! Given one scene point observed in several views, each observation a
//! point `x_k` with a 2×2 frame `M̂_k`, [`solver::correct_track`] returns the
//! frames closest to the observations in the least-squares sense for which
//! every pairwise constraint `M_jᵀ a_ij + M_iᵀ b_ij = 0` holds. Scale and
//! orientation-only features enter as `σ·R(θ)` and come back as full frames.
//!
//! The [`synth`] module generates controlled synthetic scenes and runs the
//! noise-level × view-count benchmark; [`eight_point`] supplies the
//! estimated pairwise geometry for its noisy-geometry condition.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod eight_point;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod solver;
pub mod synth;

pub use error::{Error, Result};
pub use geometry::{
    affine_from_laf_pair, bearing_and_gradient, epipolar_vectors_central, epipolar_vectors_pinhole,
    essential_from_poses, expand_partial_frame, fundamental_from_cameras, laf_pair_residual,
    BearingObservation, EssentialMatrix, FundamentalMatrix, LocalAffineFrame, Mat2, Mat3,
    PairEpipolarVectors, PartialFrame, PinholeCamera, Vec2, Vec3,
};
pub use solver::{
    assemble, correct, correct_kkt, correct_qr, correct_svd, correct_track, ConstraintModel,
    ConstraintSystem, CorrectionResult, GeometrySource, MultiViewTrack, PairSet, RowScaling,
    SolvePath, Warning,
};
