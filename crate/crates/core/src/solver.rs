//! Least-squares correction of multi-view local affine frames.
//!
//! All frames of a track are stacked into `Ω` (2|V|×2, one 2×2 block per
//! view) and every pairwise constraint becomes one column of `B` (2|V|×|C|)
//! holding `b_ij` in block `i` and `a_ij` in block `j`, so that `Bᵀ Ω = 0`
//! exactly when all frames agree with the epipolar geometry. The optimal
//! frames closest to the observations are the orthogonal projection of `Ω̂`
//! onto the left-nullspace of `B`:
//!
//! ```text
//! Ω = Ω̂ - B (BᵀB)⁻¹ Bᵀ Ω̂
//! ```
//!
//! which is evaluated without forming the inverse, through a rank-revealing
//! QR of `B` ([`correct_qr`]), through its SVD keeping a fixed
//! three-dimensional nullspace ([`correct_svd`]), or by solving the full
//! Lagrangian system directly ([`correct_kkt`]). Each path factors a copy of
//! `B` with unit columns; residuals are reported against `B` as given.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::geometry::{
    bearing_and_gradient, epipolar_vectors_central, epipolar_vectors_pinhole, essential_from_poses,
    fundamental_from_cameras, raw_epipolar_vectors_central, raw_epipolar_vectors_pinhole,
    FundamentalMatrix, LocalAffineFrame, Mat2, PairEpipolarVectors, PinholeCamera,
};
use crate::linalg::{left_spectrum, sorted_svd, ColPivQr};

/// Relative cutoff on QR pivots and singular values when detecting rank.
pub const RANK_TOL: f64 = 1e-10;

/// Dimension of the left-nullspace of `B` for consistent geometry: the
/// frame stacks generated by one 3D direction per frame column.
pub const NULLSPACE_DIM: usize = 3;

/// Below this ratio between the last kept and first dropped singular value
/// the SVD path records a [`Warning::SmallSpectralGap`].
pub const MIN_SPECTRAL_GAP: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolvePath {
    Qr,
    Svd,
    Kkt,
}

impl fmt::Display for SolvePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolvePath::Qr => "qr",
            SolvePath::Svd => "svd",
            SolvePath::Kkt => "kkt",
        })
    }
}

impl FromStr for SolvePath {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "qr" => Ok(SolvePath::Qr),
            "svd" => Ok(SolvePath::Svd),
            "kkt" => Ok(SolvePath::Kkt),
            other => Err(Error::InvalidInput(format!("unknown solve path '{other}'"))),
        }
    }
}

/// Which view pairs receive a constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PairSet {
    /// Every unordered pair `(i, j)`, `i < j`.
    #[default]
    All,
    /// Consecutive views only: `(0, 1), (1, 2), ...`.
    Chain,
}

impl PairSet {
    pub fn pairs(&self, n_views: usize) -> Vec<(usize, usize)> {
        match self {
            PairSet::All => (0..n_views)
                .flat_map(|i| (i + 1..n_views).map(move |j| (i, j)))
                .collect(),
            PairSet::Chain => (1..n_views).map(|j| (j - 1, j)).collect(),
        }
    }
}

/// Whether constraint rows are rescaled to unit norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RowScaling {
    #[default]
    Unit,
    Raw,
}

/// How constraint vectors are computed from calibrated cameras.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConstraintModel {
    /// `F` in pixel coordinates.
    #[default]
    Pixel,
    /// `E` with bearing vectors and their gradients.
    Bearing,
}

/// Where the pairwise geometry came from; decides the default solve path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeometrySource {
    /// Derived from one consistent set of camera poses, so `B` is noise-free.
    PoseDerived,
    /// Independent pairwise estimates.
    Pairwise,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Warning {
    /// `B` has lower rank than the track's constraint structure implies.
    RankDeficient { rank: usize, expected: usize },
    /// The spectrum of `B` does not clearly separate the nullspace.
    SmallSpectralGap { ratio: f64 },
    /// A constraint at an epipole was left out of `B`.
    DroppedConstraint { pair: (usize, usize) },
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::RankDeficient { rank, expected } => {
                write!(f, "constraint matrix rank {rank} is below the expected {expected}")
            }
            Warning::SmallSpectralGap { ratio } => {
                write!(f, "nullspace spectral gap is only {ratio:.3}")
            }
            Warning::DroppedConstraint { pair } => {
                write!(f, "dropped degenerate constraint for pair ({}, {})", pair.0, pair.1)
            }
        }
    }
}

/// Observations of one scene point across several views with their
/// pairwise constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiViewTrack {
    frames: Vec<LocalAffineFrame>,
    constraints: Vec<PairEpipolarVectors>,
    source: GeometrySource,
    warnings: Vec<Warning>,
}

impl MultiViewTrack {
    pub fn new(
        frames: Vec<LocalAffineFrame>,
        constraints: Vec<PairEpipolarVectors>,
        source: GeometrySource,
    ) -> Result<Self> {
        validate(frames.len(), &constraints)?;
        Ok(Self {
            frames,
            constraints,
            source,
            warnings: Vec::new(),
        })
    }

    /// Builds constraints from pairwise fundamental matrices. `lookup(i, j)`
    /// returns `F` with `x̃_jᵀ F x̃_i = 0`; pairs without geometry are skipped
    /// and pairs at an epipole are dropped with a warning.
    pub fn from_fundamentals<L>(
        frames: Vec<LocalAffineFrame>,
        pairs: &[(usize, usize)],
        mut lookup: L,
        scaling: RowScaling,
    ) -> Result<Self>
    where
        L: FnMut(usize, usize) -> Option<FundamentalMatrix>,
    {
        let mut constraints = Vec::with_capacity(pairs.len());
        let mut warnings = Vec::new();
        for &(i, j) in pairs {
            check_pair(i, j, frames.len())?;
            let Some(f) = lookup(i, j) else { continue };
            let (xi, xj) = (&frames[i].x, &frames[j].x);
            let ev = match scaling {
                RowScaling::Unit => epipolar_vectors_pinhole(&f, xi, xj),
                RowScaling::Raw => raw_epipolar_vectors_pinhole(&f, xi, xj),
            };
            match ev {
                Ok(ev) => constraints.push(ev.with_pair(i, j)),
                Err(Error::DegenerateConstraint { .. }) => {
                    warnings.push(Warning::DroppedConstraint { pair: (i, j) })
                }
                Err(e) => return Err(e),
            }
        }
        let mut track = Self::new(frames, constraints, GeometrySource::Pairwise)?;
        track.warnings = warnings;
        Ok(track)
    }

    /// Builds noise-free constraints from calibrated camera poses.
    pub fn from_cameras(
        frames: Vec<LocalAffineFrame>,
        cameras: &[PinholeCamera],
        pair_set: PairSet,
        model: ConstraintModel,
        scaling: RowScaling,
    ) -> Result<Self> {
        if cameras.len() != frames.len() {
            return Err(Error::InvalidInput(format!(
                "{} frames but {} cameras",
                frames.len(),
                cameras.len()
            )));
        }
        let mut constraints = Vec::new();
        let mut warnings = Vec::new();
        for (i, j) in pair_set.pairs(frames.len()) {
            let ev = match model {
                ConstraintModel::Pixel => {
                    let f = fundamental_from_cameras(&cameras[i], &cameras[j])?;
                    let (xi, xj) = (&frames[i].x, &frames[j].x);
                    match scaling {
                        RowScaling::Unit => epipolar_vectors_pinhole(&f, xi, xj),
                        RowScaling::Raw => raw_epipolar_vectors_pinhole(&f, xi, xj),
                    }
                }
                ConstraintModel::Bearing => {
                    let e = essential_from_poses(&cameras[i], &cameras[j])?;
                    let oi = bearing_and_gradient(&cameras[i], &frames[i].x);
                    let oj = bearing_and_gradient(&cameras[j], &frames[j].x);
                    match scaling {
                        RowScaling::Unit => epipolar_vectors_central(&e, &oi, &oj),
                        RowScaling::Raw => raw_epipolar_vectors_central(&e, &oi, &oj),
                    }
                }
            };
            match ev {
                Ok(ev) => constraints.push(ev.with_pair(i, j)),
                Err(Error::DegenerateConstraint { .. }) => {
                    warnings.push(Warning::DroppedConstraint { pair: (i, j) })
                }
                Err(e) => return Err(e),
            }
        }
        let mut track = Self::new(frames, constraints, GeometrySource::PoseDerived)?;
        track.warnings = warnings;
        Ok(track)
    }

    pub fn n_views(&self) -> usize {
        self.frames.len()
    }

    pub fn frames(&self) -> &[LocalAffineFrame] {
        &self.frames
    }

    pub fn constraints(&self) -> &[PairEpipolarVectors] {
        &self.constraints
    }

    pub fn source(&self) -> GeometrySource {
        self.source
    }

    pub fn warnings(&self) -> &[Warning] {
        &self.warnings
    }

    /// QR for pose-derived geometry, SVD for independent pairwise estimates.
    pub fn default_path(&self) -> SolvePath {
        match self.source {
            GeometrySource::PoseDerived => SolvePath::Qr,
            GeometrySource::Pairwise => SolvePath::Svd,
        }
    }

    /// Same geometry with the linear parts of the frames replaced.
    pub fn with_frame_matrices(&self, matrices: &[Mat2]) -> Result<Self> {
        if matrices.len() != self.frames.len() {
            return Err(Error::InvalidInput(format!(
                "{} matrices for {} views",
                matrices.len(),
                self.frames.len()
            )));
        }
        let mut out = self.clone();
        for (frame, m) in out.frames.iter_mut().zip(matrices) {
            frame.m = *m;
        }
        Ok(out)
    }

    /// Largest `‖M_jᵀ a + M_iᵀ b‖` over all constraints.
    pub fn max_residual(&self) -> f64 {
        self.constraints
            .iter()
            .map(|ev| {
                let (i, j) = ev.pair;
                crate::geometry::laf_pair_residual(ev, &self.frames[i].m, &self.frames[j].m).norm()
            })
            .fold(0.0, f64::max)
    }
}

fn check_pair(i: usize, j: usize, n_views: usize) -> Result<()> {
    if i >= j || j >= n_views {
        return Err(Error::InvalidPairIndex { i, j, n_views });
    }
    Ok(())
}

fn validate(n_views: usize, constraints: &[PairEpipolarVectors]) -> Result<()> {
    if n_views < 2 {
        return Err(Error::InsufficientConstraints(format!(
            "a track needs at least 2 views, got {n_views}"
        )));
    }
    let mut seen = HashSet::with_capacity(constraints.len());
    for ev in constraints {
        let (i, j) = ev.pair;
        check_pair(i, j, n_views)?;
        if !seen.insert((i, j)) {
            return Err(Error::DuplicatePair { i, j });
        }
    }
    if constraints.is_empty() {
        return Err(Error::InsufficientConstraints("track has no usable pair constraints".into()));
    }
    Ok(())
}

/// The stacked linear system of one track.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSystem {
    /// 2|V|×|C|; column `c` holds `b` in block `i` and `a` in block `j` of pair `c`.
    pub b: DMatrix<f64>,
    /// 2|V|×2; block `k` is the observed frame matrix of view `k`.
    pub omega_hat: DMatrix<f64>,
    pub pairs: Vec<(usize, usize)>,
    pub n_views: usize,
}

pub fn assemble(track: &MultiViewTrack) -> Result<ConstraintSystem> {
    let n_views = track.n_views();
    validate(n_views, &track.constraints)?;
    let mut b = DMatrix::zeros(2 * n_views, track.constraints.len());
    for (c, ev) in track.constraints.iter().enumerate() {
        let (i, j) = ev.pair;
        b.view_mut((2 * i, c), (2, 1)).copy_from(&ev.b);
        b.view_mut((2 * j, c), (2, 1)).copy_from(&ev.a);
    }
    Ok(ConstraintSystem {
        b,
        omega_hat: stack_frames(track.frames.iter().map(|f| &f.m)),
        pairs: track.constraints.iter().map(|ev| ev.pair).collect(),
        n_views,
    })
}

pub fn stack_frames<'a>(frames: impl ExactSizeIterator<Item = &'a Mat2>) -> DMatrix<f64> {
    let mut omega = DMatrix::zeros(2 * frames.len(), 2);
    for (k, m) in frames.enumerate() {
        omega.view_mut((2 * k, 0), (2, 2)).copy_from(m);
    }
    omega
}

pub fn unstack_frames(omega: &DMatrix<f64>) -> Vec<Mat2> {
    (0..omega.nrows() / 2)
        .map(|k| omega.fixed_view::<2, 2>(2 * k, 0).into_owned())
        .collect()
}

impl ConstraintSystem {
    pub fn n_constraints(&self) -> usize {
        self.b.ncols()
    }

    /// Rank `B` should have when all constraints come from consistent geometry.
    pub fn expected_rank(&self) -> usize {
        (2 * self.n_views - NULLSPACE_DIM).min(self.n_constraints())
    }

    /// Largest per-constraint residual norm, i.e. the max row norm of `Bᵀ Ω`.
    pub fn max_residual(&self, omega: &DMatrix<f64>) -> f64 {
        let bt_omega = self.b.tr_mul(omega);
        bt_omega.row_iter().map(|r| r.norm()).fold(0.0, f64::max)
    }

    /// Singular values of `B` over its 2|V| rows, zero-padded, decreasing.
    pub fn spectrum(&self) -> Result<Vec<f64>> {
        left_spectrum(&self.b)
    }

    /// `B` with unit-norm columns and the norms divided out. The column span
    /// is unchanged, so every path factors this copy: the result then does
    /// not depend on how each constraint was scaled. Zero columns stay zero.
    fn equilibrated(&self) -> (DMatrix<f64>, Vec<f64>) {
        let mut b = self.b.clone();
        let norms: Vec<f64> = b.column_iter().map(|c| c.norm()).collect();
        for (mut col, n) in b.column_iter_mut().zip(&norms) {
            if *n > 0.0 {
                col /= *n;
            }
        }
        (b, norms)
    }

    /// Scales the constraint at column `c` by `s`.
    pub fn scale_constraint(&mut self, c: usize, s: f64) {
        self.b.column_mut(c).scale_mut(s);
    }

    fn finish(
        &self,
        omega: DMatrix<f64>,
        rank_used: usize,
        path: SolvePath,
        warnings: Vec<Warning>,
        multipliers: Option<DMatrix<f64>>,
    ) -> Result<CorrectionResult> {
        if omega.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure(format!("{path} path produced non-finite frames")));
        }
        Ok(CorrectionResult {
            residual_before: self.max_residual(&self.omega_hat),
            residual_after: self.max_residual(&omega),
            frobenius_change: (&omega - &self.omega_hat).norm_squared(),
            frames: unstack_frames(&omega),
            omega,
            rank_used,
            path,
            warnings,
            multipliers,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionResult {
    /// Corrected frame matrices, one per view.
    pub frames: Vec<Mat2>,
    /// Corrected frames stacked like [`ConstraintSystem::omega_hat`].
    pub omega: DMatrix<f64>,
    pub residual_before: f64,
    pub residual_after: f64,
    /// `Σ_k ‖M_k - M̂_k‖²_F`.
    pub frobenius_change: f64,
    pub rank_used: usize,
    pub path: SolvePath,
    pub warnings: Vec<Warning>,
    /// Lagrange multipliers (|C|×2, row `c` = `λ_cᵀ`) with the sign
    /// convention `Ω - B Λ = Ω̂`. Only the KKT path fills this.
    pub multipliers: Option<DMatrix<f64>>,
}

/// Projection through a column-pivoting Householder QR of `B`. Exact when
/// `B` is noise-free; with noisy `B` of full rank it removes too much.
pub fn correct_qr(cs: &ConstraintSystem) -> Result<CorrectionResult> {
    let qr = ColPivQr::new(&cs.equilibrated().0);
    let rank = qr.rank(RANK_TOL);
    let basis = qr.range_basis(rank);
    let omega = &cs.omega_hat - &basis * basis.tr_mul(&cs.omega_hat);
    let mut warnings = Vec::new();
    let expected = cs.expected_rank();
    if rank < expected {
        warnings.push(Warning::RankDeficient { rank, expected });
    }
    cs.finish(omega, rank, SolvePath::Qr, warnings, None)
}

/// Projection that keeps a three-dimensional left-nullspace of `B`: the
/// leading `2|V| - 3` left singular directions are removed. Robust to
/// independent noise in the pairwise geometry.
pub fn correct_svd(cs: &ConstraintSystem) -> Result<CorrectionResult> {
    let target = 2 * cs.n_views;
    let target = target.checked_sub(NULLSPACE_DIM).filter(|t| *t > 0).ok_or_else(|| {
        Error::InsufficientConstraints(format!("{} views leave no room for a nullspace", cs.n_views))
    })?;
    let svd = sorted_svd(&cs.equilibrated().0)?;
    let s = &svd.singular_values;
    let s_max = s.first().copied().unwrap_or(0.0);
    let numeric_rank = s.iter().filter(|v| **v > RANK_TOL * s_max).count();
    let keep = target.min(numeric_rank);

    let mut warnings = Vec::new();
    if keep < target {
        warnings.push(Warning::RankDeficient { rank: keep, expected: target });
    } else {
        let dropped = s.get(target).copied().unwrap_or(0.0);
        let ratio = s[target - 1] / dropped;
        if ratio < MIN_SPECTRAL_GAP {
            warnings.push(Warning::SmallSpectralGap { ratio });
        }
    }

    let basis = svd.u.columns(0, keep);
    let omega = &cs.omega_hat - basis * basis.tr_mul(&cs.omega_hat);
    cs.finish(omega, keep, SolvePath::Svd, warnings, None)
}

/// Solves the full system `[I B; Bᵀ 0] [Ω; Λ] = [Ω̂; 0]` by a minimum-norm
/// least-squares solve, tolerant of rank-deficient `B`.
pub fn correct_kkt(cs: &ConstraintSystem) -> Result<CorrectionResult> {
    let (b, norms) = cs.equilibrated();
    let rows = b.nrows();
    let n_c = cs.n_constraints();
    let n = rows + n_c;
    let mut kkt = DMatrix::zeros(n, n);
    kkt.view_mut((0, 0), (rows, rows)).fill_with_identity();
    kkt.view_mut((0, rows), (rows, n_c)).copy_from(&b);
    kkt.view_mut((rows, 0), (n_c, rows)).copy_from(&b.transpose());
    let mut rhs = DMatrix::zeros(n, 2);
    rhs.view_mut((0, 0), (rows, 2)).copy_from(&cs.omega_hat);

    let svd = sorted_svd(&kkt)?;
    let s_max = svd.singular_values[0];
    let cutoff = RANK_TOL * s_max;
    let ut_rhs = svd.u.tr_mul(&rhs);
    let mut scaled = DMatrix::zeros(n, 2);
    let mut kkt_rank = 0usize;
    for (k, &sk) in svd.singular_values.iter().enumerate() {
        if sk > cutoff {
            kkt_rank += 1;
            scaled.set_row(k, &(ut_rhs.row(k) / sk));
        }
    }
    let solution = svd.v_t.tr_mul(&scaled);
    let omega = solution.rows(0, rows).into_owned();
    // back to the caller's column scaling: B Λ = B_unit diag(norms)⁻¹ Λ
    let mut multipliers = -solution.rows(rows, n_c).into_owned();
    for (mut row, n) in multipliers.row_iter_mut().zip(&norms) {
        if *n > 0.0 {
            row /= *n;
        }
    }

    let rank = kkt_rank.saturating_sub(rows);
    let mut warnings = Vec::new();
    let expected = cs.expected_rank();
    if rank < expected {
        warnings.push(Warning::RankDeficient { rank, expected });
    }
    cs.finish(omega, rank, SolvePath::Kkt, warnings, Some(multipliers))
}

pub fn correct(cs: &ConstraintSystem, path: SolvePath) -> Result<CorrectionResult> {
    match path {
        SolvePath::Qr => correct_qr(cs),
        SolvePath::Svd => correct_svd(cs),
        SolvePath::Kkt => correct_kkt(cs),
    }
}

/// Assembles and solves one track; `None` picks the track's default path.
pub fn correct_track(track: &MultiViewTrack, path: Option<SolvePath>) -> Result<CorrectionResult> {
    let cs = assemble(track)?;
    let mut result = correct(&cs, path.unwrap_or_else(|| track.default_path()))?;
    if !track.warnings.is_empty() {
        let mut warnings = track.warnings.clone();
        warnings.append(&mut result.warnings);
        result.warnings = warnings;
    }
    Ok(result)
}
