//! Synthetic scenes with exact local affine frames, noise injection, the
//! frame error metric, and the noise-level × view-count benchmark grid.
//!
//! Cameras sit on a sphere of radius 5 around the origin and look at it. A
//! single oriented surface point lies within unit distance of the origin;
//! its exact frame in every view is the Jacobian of the projection restricted
//! to the tangent plane, so all pairwise constraints hold exactly.
//!
//! Trials are seeded from `(seed, trial)` only. The `N`-view scene of a trial
//! is a prefix of its `(N+1)`-view scene and noise draws are shared across
//! noise levels, so neighbouring grid cells are compared on common random
//! numbers.

use std::collections::HashMap;
use std::io::Write;
use std::time::Instant;

use nalgebra::{Matrix3x2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::eight_point::{estimate_f_eight_point, PointCorrespondenceSet};
use crate::error::{Error, Result};
use crate::geometry::{
    affine_from_laf_pair, FundamentalMatrix, LocalAffineFrame, Mat2, Mat3, PinholeCamera, Vec2, Vec3,
};
use crate::solver::{
    correct_track, ConstraintModel, MultiViewTrack, PairSet, RowScaling, SolvePath,
};

pub const SPHERE_RADIUS: f64 = 5.0;
pub const FOCAL_PX: f64 = 1000.0;
pub const PRINCIPAL_POINT: (f64, f64) = (500.0, 500.0);
pub const MAX_ATTEMPTS: usize = 100;
/// Steepest accepted viewing angle between a camera ray and the surface
/// plane's normal, in degrees.
pub const MAX_INCIDENCE_DEG: f64 = 80.0;
pub const DEFAULT_F_POINTS: usize = 50;
pub const DEFAULT_TRIALS: usize = 1000;

pub fn default_intrinsics() -> Mat3 {
    Mat3::new(
        FOCAL_PX,
        0.0,
        PRINCIPAL_POINT.0,
        0.0,
        FOCAL_PX,
        PRINCIPAL_POINT.1,
        0.0,
        0.0,
        1.0,
    )
}

/// SplitMix64 finalizer folded over `parts`.
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut h = 0x9E37_79B9_7F4A_7C15u64;
    for &p in parts {
        let mut z = h ^ p.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

const STREAM_NOISE: u64 = 1;
const STREAM_POINTS: u64 = 2;
const STREAM_POINT_NOISE: u64 = 3;

fn unit_vector<R: Rng>(rng: &mut R) -> Vec3 {
    loop {
        let v = Vec3::from_fn(|_, _| StandardNormal.sample(rng));
        let n = v.norm();
        if n > 1e-9 {
            return v / n;
        }
    }
}

fn point_in_unit_ball<R: Rng>(rng: &mut R) -> Vec3 {
    let r: f64 = rng.random::<f64>().cbrt();
    unit_vector(rng) * r
}

/// Camera at `center` whose principal axis passes through the origin, with
/// image x-axis perpendicular to `roll_hint`.
pub fn look_at_origin(center: Vec3, roll_hint: &Vec3, k: Mat3) -> Result<PinholeCamera> {
    let z = -center.normalize();
    let x = roll_hint.cross(&z);
    let xn = x.norm();
    if xn < 1e-6 {
        return Err(Error::InvalidCamera("roll hint parallel to viewing direction".into()));
    }
    let x = x / xn;
    let y = z.cross(&x);
    let r = Mat3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
    PinholeCamera::new(k, r, -(r * center))
}

fn random_camera<R: Rng>(rng: &mut R) -> PinholeCamera {
    let center = unit_vector(rng) * SPHERE_RADIUS;
    loop {
        if let Ok(cam) = look_at_origin(center, &unit_vector(rng), default_intrinsics()) {
            return cam;
        }
    }
}

/// Cameras, one oriented surface point, and the orthonormal tangent basis of its plane.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub cameras: Vec<PinholeCamera>,
    pub point: Vec3,
    pub normal: Vec3,
    pub tangent: (Vec3, Vec3),
}

impl SyntheticScene {
    pub fn n_views(&self) -> usize {
        self.cameras.len()
    }

    fn faces(&self, cam: &PinholeCamera) -> bool {
        self.normal.dot(&(cam.center() - self.point)) > 0.0
    }

    /// Positive depth everywhere, no view closer to edge-on than
    /// [`MAX_INCIDENCE_DEG`], and the front of the plane seen by at least two views.
    pub fn visible(&self) -> bool {
        self.cameras.iter().all(|c| c.depth(&self.point) > 0.0 && oblique_enough(c, &self.point, &self.normal))
            && self.cameras.iter().filter(|c| self.faces(c)).count() >= 2.min(self.cameras.len())
    }

    /// Same scene restricted to its first `n` cameras.
    pub fn truncated(&self, n: usize) -> Self {
        let mut out = self.clone();
        out.cameras.truncate(n);
        out
    }
}

fn oblique_enough(cam: &PinholeCamera, point: &Vec3, normal: &Vec3) -> bool {
    let ray = cam.center() - point;
    normal.dot(&ray).abs() >= MAX_INCIDENCE_DEG.to_radians().cos() * ray.norm()
}

/// Random scene with `n_views` cameras; deterministic in `rng_seed`.
pub fn generate_scene(n_views: usize, rng_seed: u64) -> Result<SyntheticScene> {
    if n_views < 2 {
        return Err(Error::InvalidInput(format!("a scene needs at least 2 views, got {n_views}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    for _ in 0..MAX_ATTEMPTS {
        let point = point_in_unit_ball(&mut rng);
        let mut cameras = vec![random_camera(&mut rng), random_camera(&mut rng)];
        // orient towards the first camera, resample until the second also sees the front
        let mut normal = None;
        for _ in 0..MAX_ATTEMPTS {
            let mut n = unit_vector(&mut rng);
            if n.dot(&(cameras[0].center() - point)) < 0.0 {
                n = -n;
            }
            if n.dot(&(cameras[1].center() - point)) > 0.0
                && cameras.iter().all(|c| oblique_enough(c, &point, &n))
            {
                normal = Some(n);
                break;
            }
        }
        let Some(normal) = normal else { continue };
        let t1 = loop {
            let t = normal.cross(&unit_vector(&mut rng));
            if t.norm() > 1e-6 {
                break t.normalize();
            }
        };
        let t2 = normal.cross(&t1);
        // cameras are drawn one at a time so a scene's first k views do not depend on n_views
        for _ in 2..n_views {
            match (0..MAX_ATTEMPTS)
                .map(|_| random_camera(&mut rng))
                .find(|c| oblique_enough(c, &point, &normal))
            {
                Some(cam) => cameras.push(cam),
                None => break,
            }
        }
        if cameras.len() < n_views {
            continue;
        }

        let scene = SyntheticScene { cameras, point, normal, tangent: (t1, t2) };
        if scene.visible() {
            return Ok(scene);
        }
    }
    Err(Error::VisibilityFailure { attempts: MAX_ATTEMPTS })
}

/// Exact frame of the scene point in every view: the projection Jacobian
/// applied to the tangent basis.
pub fn ground_truth_lafs(scene: &SyntheticScene) -> Vec<LocalAffineFrame> {
    let basis = Matrix3x2::from_columns(&[scene.tangent.0, scene.tangent.1]);
    scene
        .cameras
        .iter()
        .map(|cam| {
            LocalAffineFrame::new(
                cam.project(&scene.point),
                cam.projection_jacobian(&scene.point) * basis,
            )
        })
        .collect()
}

/// Isotropic Gaussian perturbation of point coordinates and frame entries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub sigma: f64,
}

impl NoiseModel {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidInput(format!("noise sigma must be >= 0, got {sigma}")));
        }
        Ok(Self { sigma })
    }
}

/// Perturbs `u, v, m00, m01, m10, m11` of every frame, view by view, with
/// independent `N(0, σ²)` draws.
pub fn add_noise(lafs: &[LocalAffineFrame], nm: NoiseModel, rng_seed: u64) -> Vec<LocalAffineFrame> {
    if nm.sigma == 0.0 {
        return lafs.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    lafs.iter()
        .map(|f| {
            let mut z = [0.0f64; 6];
            for v in &mut z {
                *v = StandardNormal.sample(&mut rng);
            }
            let s = nm.sigma;
            LocalAffineFrame::new(
                f.x + Vec2::new(z[0], z[1]) * s,
                f.m + Mat2::new(z[2], z[3], z[4], z[5]) * s,
            )
        })
        .collect()
}

/// Mean over views of `‖I - M_gt⁻¹ M_est‖_F`.
pub fn laf_error(gt: &[Mat2], est: &[Mat2]) -> Result<f64> {
    if gt.len() != est.len() || gt.is_empty() {
        return Err(Error::InvalidInput(format!(
            "frame lists differ in length ({} vs {}) or are empty",
            gt.len(),
            est.len()
        )));
    }
    let mut total = 0.0;
    for (g, e) in gt.iter().zip(est) {
        // M_gt⁻¹ M_est is the affine map taking M_gt to M_est
        let rel = affine_from_laf_pair(&g.transpose(), &e.transpose())?.transpose();
        total += (Mat2::identity() - rel).norm();
    }
    Ok(total / gt.len() as f64)
}

/// Which pairwise geometry feeds the corrected grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FMode {
    GroundTruth,
    EightPoint,
    Both,
}

impl FMode {
    fn ground_truth(self) -> bool {
        matches!(self, FMode::GroundTruth | FMode::Both)
    }

    fn eight_point(self) -> bool {
        matches!(self, FMode::EightPoint | FMode::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridKind {
    /// Error of the noisy input frames.
    Input,
    /// Corrected with geometry derived from the true poses.
    CorrectedGroundTruth,
    /// Corrected with 8-point estimates from the noisy points.
    CorrectedEightPoint,
}

impl GridKind {
    pub fn name(self) -> &'static str {
        match self {
            GridKind::Input => "input",
            GridKind::CorrectedGroundTruth => "corrected_gt",
            GridKind::CorrectedEightPoint => "corrected_8pt",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub sigmas: Vec<f64>,
    pub view_counts: Vec<usize>,
    pub trials: usize,
    pub f_mode: FMode,
    pub path: SolvePath,
    pub seed: u64,
    /// Correspondences per view pair for 8-point estimation.
    pub f_points: usize,
    /// How constraints are formed from the true poses in the ground-truth grid.
    pub model: ConstraintModel,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            sigmas: (0..=10).map(|i| i as f64 / 10.0).collect(),
            view_counts: (2..=10).collect(),
            trials: DEFAULT_TRIALS,
            f_mode: FMode::Both,
            path: SolvePath::Svd,
            seed: 0,
            f_points: DEFAULT_F_POINTS,
            model: ConstraintModel::Pixel,
        }
    }
}

impl GridConfig {
    /// Rejects empty axes, negative noise, fewer than 2 views, no trials, and
    /// too few 8-point correspondences.
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidInput("trials must be >= 1".into()));
        }
        if self.sigmas.is_empty() || self.view_counts.is_empty() {
            return Err(Error::InvalidInput("empty sigma or view axis".into()));
        }
        if let Some(s) = self.sigmas.iter().find(|s| !(**s >= 0.0) || !s.is_finite()) {
            return Err(Error::InvalidInput(format!("noise sigma must be >= 0, got {s}")));
        }
        if let Some(n) = self.view_counts.iter().find(|n| **n < 2) {
            return Err(Error::InvalidInput(format!("view count must be >= 2, got {n}")));
        }
        if self.f_mode.eight_point() && self.f_points < 8 {
            return Err(Error::InvalidInput("8-point estimation needs >= 8 points per pair".into()));
        }
        Ok(())
    }
}

/// Statistics of one (σ, N) cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellStats {
    pub mean: f64,
    /// Sample standard deviation of the per-trial error.
    pub std: f64,
    pub used: usize,
    pub excluded: usize,
    /// Mean wall-clock time of one track correction in microseconds.
    pub mean_time_us: Option<f64>,
}

impl CellStats {
    pub fn standard_error(&self) -> f64 {
        if self.used == 0 {
            f64::NAN
        } else {
            self.std / (self.used as f64).sqrt()
        }
    }

    fn from_samples(samples: &[Option<(f64, Option<f64>)>]) -> Self {
        let values: Vec<f64> = samples.iter().flatten().map(|(e, _)| *e).collect();
        let used = values.len();
        let excluded = samples.len() - used;
        let mean = if used == 0 { f64::NAN } else { values.iter().sum::<f64>() / used as f64 };
        let std = if used < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (used - 1) as f64).sqrt()
        };
        let times: Vec<f64> = samples.iter().flatten().filter_map(|(_, t)| *t).collect();
        let mean_time_us =
            (!times.is_empty()).then(|| times.iter().sum::<f64>() / times.len() as f64);
        Self { mean, std, used, excluded, mean_time_us }
    }
}

/// Mean frame error over a σ × view-count grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorGrid {
    pub kind: GridKind,
    pub sigmas: Vec<f64>,
    pub view_counts: Vec<usize>,
    pub trials: usize,
    /// Row-major: `cells[v * sigmas.len() + s]`.
    pub cells: Vec<CellStats>,
}

impl ErrorGrid {
    pub fn cell(&self, view_idx: usize, sigma_idx: usize) -> &CellStats {
        &self.cells[view_idx * self.sigmas.len() + sigma_idx]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridReport {
    pub input: ErrorGrid,
    pub corrected_gt: Option<ErrorGrid>,
    pub corrected_8pt: Option<ErrorGrid>,
}

impl GridReport {
    pub fn grids(&self) -> impl Iterator<Item = &ErrorGrid> {
        std::iter::once(&self.input)
            .chain(self.corrected_gt.as_ref())
            .chain(self.corrected_8pt.as_ref())
    }

    /// Writes one CSV row per (grid, N, σ) cell. The timing column is left
    /// empty unless `with_timing` is set, so untimed output is reproducible
    /// byte for byte.
    pub fn write_csv<W: Write>(&self, out: W, with_timing: bool) -> Result<()> {
        let io = |e: csv::Error| Error::InvalidInput(format!("csv write failed: {e}"));
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record([
            "sigma",
            "n_views",
            "grid",
            "mean_error",
            "std_error",
            "excluded_trials",
            "mean_correction_time_us",
        ])
        .map_err(io)?;
        for grid in self.grids() {
            for (vi, n) in grid.view_counts.iter().enumerate() {
                for (si, sigma) in grid.sigmas.iter().enumerate() {
                    let c = grid.cell(vi, si);
                    let time = match (with_timing, c.mean_time_us) {
                        (true, Some(t)) => format!("{t:.3}"),
                        _ => String::new(),
                    };
                    w.write_record([
                        sigma.to_string(),
                        n.to_string(),
                        grid.kind.name().to_string(),
                        c.mean.to_string(),
                        c.std.to_string(),
                        c.excluded.to_string(),
                        time,
                    ])
                    .map_err(io)?;
                }
            }
        }
        w.flush()
            .map_err(|e| Error::InvalidInput(format!("csv flush failed: {e}")))?;
        Ok(())
    }
}

type Sample = Option<(f64, Option<f64>)>;

#[derive(Debug, Clone, Copy)]
struct TrialOutcome {
    input: Sample,
    gt: Sample,
    eight: Sample,
}

/// Random points in the unit ball used for 8-point estimation.
fn estimation_points(n: usize, seed: u64) -> Vec<Vec3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| point_in_unit_ball(&mut rng)).collect()
}

/// Noisy projections of `points` per view, drawn view by view.
fn noisy_projections(scene: &SyntheticScene, points: &[Vec3], sigma: f64, seed: u64) -> Vec<Vec<Vec2>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    scene
        .cameras
        .iter()
        .map(|cam| {
            points
                .iter()
                .map(|p| {
                    let dx: f64 = StandardNormal.sample(&mut rng);
                    let dy: f64 = StandardNormal.sample(&mut rng);
                    cam.project(p) + Vec2::new(dx, dy) * sigma
                })
                .collect()
        })
        .collect()
}

fn timed_correction(
    gt: &[Mat2],
    build: impl FnOnce() -> Result<MultiViewTrack>,
    path: SolvePath,
) -> Sample {
    let start = Instant::now();
    let result = build().and_then(|track| correct_track(&track, Some(path)));
    let elapsed = start.elapsed().as_secs_f64() * 1e6;
    let result = result.ok()?;
    let err = laf_error(gt, &result.frames).ok()?;
    err.is_finite().then_some((err, Some(elapsed)))
}

fn run_trial(cfg: &GridConfig, n_views: usize, sigma: f64, trial: usize) -> TrialOutcome {
    let failed = TrialOutcome { input: None, gt: None, eight: None };
    let trial_seed = mix_seed(&[cfg.seed, trial as u64]);
    let Ok(scene) = generate_scene(n_views, trial_seed) else {
        return failed;
    };
    let truth = ground_truth_lafs(&scene);
    let gt_m: Vec<Mat2> = truth.iter().map(|f| f.m).collect();
    let noisy = add_noise(&truth, NoiseModel { sigma }, mix_seed(&[trial_seed, STREAM_NOISE]));
    let noisy_m: Vec<Mat2> = noisy.iter().map(|f| f.m).collect();

    let input = laf_error(&gt_m, &noisy_m).ok().filter(|e| e.is_finite()).map(|e| (e, None));
    if input.is_none() {
        return failed;
    }

    let gt = cfg.f_mode.ground_truth().then(|| {
        timed_correction(
            &gt_m,
            || {
                MultiViewTrack::from_cameras(
                    noisy.clone(),
                    &scene.cameras,
                    PairSet::All,
                    cfg.model,
                    RowScaling::Unit,
                )
            },
            cfg.path,
        )
    });

    let eight = cfg.f_mode.eight_point().then(|| {
        let points = estimation_points(cfg.f_points, mix_seed(&[trial_seed, STREAM_POINTS]));
        let obs = noisy_projections(&scene, &points, sigma, mix_seed(&[trial_seed, STREAM_POINT_NOISE]));
        let pairs = PairSet::All.pairs(n_views);
        let mut fs: HashMap<(usize, usize), FundamentalMatrix> = HashMap::new();
        for &(i, j) in &pairs {
            let set = PointCorrespondenceSet::from_slices(&obs[i], &obs[j]).ok()?;
            fs.insert((i, j), estimate_f_eight_point(&set).ok()?);
        }
        timed_correction(
            &gt_m,
            || {
                MultiViewTrack::from_fundamentals(
                    noisy.clone(),
                    &pairs,
                    |i, j| fs.get(&(i, j)).copied(),
                    RowScaling::Unit,
                )
            },
            cfg.path,
        )
    });

    TrialOutcome {
        input,
        gt: gt.flatten(),
        eight: eight.flatten(),
    }
}

/// Runs every trial of every cell. Trials run in parallel; results are
/// reduced in trial order, so the output does not depend on scheduling.
pub fn run_grid(cfg: &GridConfig) -> Result<GridReport> {
    cfg.validate()?;
    let mut input = Vec::new();
    let mut gt = Vec::new();
    let mut eight = Vec::new();
    for &n in &cfg.view_counts {
        for &sigma in &cfg.sigmas {
            let outcomes: Vec<TrialOutcome> = (0..cfg.trials)
                .into_par_iter()
                .map(|t| run_trial(cfg, n, sigma, t))
                .collect();
            let pick = |f: fn(&TrialOutcome) -> Sample| outcomes.iter().map(f).collect::<Vec<_>>();
            input.push(CellStats::from_samples(&pick(|o| o.input)));
            // a trial lost before correction counts as excluded in every grid
            gt.push(CellStats::from_samples(&pick(|o| o.gt)));
            eight.push(CellStats::from_samples(&pick(|o| o.eight)));
        }
    }
    let grid = |kind, cells| ErrorGrid {
        kind,
        sigmas: cfg.sigmas.clone(),
        view_counts: cfg.view_counts.clone(),
        trials: cfg.trials,
        cells,
    };
    Ok(GridReport {
        input: grid(GridKind::Input, input),
        corrected_gt: cfg.f_mode.ground_truth().then(|| grid(GridKind::CorrectedGroundTruth, gt)),
        corrected_8pt: cfg.f_mode.eight_point().then(|| grid(GridKind::CorrectedEightPoint, eight)),
    })
}

/// Tangent basis for a plane with normal `n` (used for hand-built scenes).
pub fn tangent_basis(n: &Vec3) -> (Vec3, Vec3) {
    let helper = if n.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let t1 = n.cross(&helper).normalize();
    (t1, n.cross(&t1))
}
