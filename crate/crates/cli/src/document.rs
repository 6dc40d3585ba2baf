//! The JSON track document read by `correct` and `validate`.
//!
//! ```json
//! {
//!   "cameras": [{"id": 0, "K": [[...], [...], [...]], "R": [[...], ...], "t": [0, 0, 5]}],
//!   "tracks": [{"observations": [
//!     {"view_id": 0, "x": 512.0, "y": 480.5, "M": [2.1, 0.3, -0.2, 1.9]},
//!     {"view_id": 1, "x": 430.2, "y": 501.0, "sigma": 2.0, "theta": 0.4}
//!   ]}]
//! }
//! ```
//!
//! Geometry comes either as calibrated `cameras` (`P = K [R | t]`) or as
//! pairwise `fundamentals` `{i, j, F}` with `x̃_jᵀ F x̃_i = 0` for views `i`
//! and `j`; a document must not mix the two. `M` is row-major. An
//! observation gives either `M` or a scale/orientation pair `sigma, theta`.
//! Corrected documents add per-track `residual_before`, `residual_after`,
//! `path` and `status`, and are accepted as input again.

use std::collections::{BTreeMap, HashMap};

use laf_epipolar::{
    FundamentalMatrix, LocalAffineFrame, Mat2, Mat3, MultiViewTrack, PairSet, PartialFrame, PinholeCamera,
    RowScaling, Vec2, Vec3,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub type ViewId = u64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cameras: Option<Vec<CameraEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fundamentals: Option<Vec<FundamentalEntry>>,
    pub tracks: Vec<TrackEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraEntry {
    pub id: ViewId,
    #[serde(rename = "K")]
    pub k: [[f64; 3]; 3],
    #[serde(rename = "R")]
    pub r: [[f64; 3]; 3],
    pub t: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FundamentalEntry {
    pub i: ViewId,
    pub j: ViewId,
    #[serde(rename = "F")]
    pub f: [[f64; 3]; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackEntry {
    pub observations: Vec<Observation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_before: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_after: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Observation {
    pub view_id: ViewId,
    pub x: f64,
    pub y: f64,
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub m: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
}

impl Observation {
    pub fn full(view_id: ViewId, frame: &LocalAffineFrame) -> Self {
        let mut obs = Self { view_id, x: frame.x.x, y: frame.x.y, m: None, sigma: None, theta: None };
        obs.set_matrix(&frame.m);
        obs
    }

    pub fn partial(view_id: ViewId, pf: &PartialFrame) -> Self {
        Self { view_id, x: pf.x.x, y: pf.x.y, m: None, sigma: Some(pf.sigma), theta: Some(pf.theta) }
    }

    /// Replaces whatever frame the observation had by a full matrix.
    pub fn set_matrix(&mut self, m: &Mat2) {
        self.m = Some([m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]]);
        self.sigma = None;
        self.theta = None;
    }

    fn frame(&self) -> std::result::Result<LocalAffineFrame, String> {
        let x = Vec2::new(self.x, self.y);
        if !x.iter().all(|v| v.is_finite()) {
            return Err("non-finite point".into());
        }
        match (self.m, self.sigma, self.theta) {
            (Some(m), None, None) => {
                if !m.iter().all(|v| v.is_finite()) {
                    return Err("non-finite entry in M".into());
                }
                Ok(LocalAffineFrame::new(x, Mat2::new(m[0], m[1], m[2], m[3])))
            }
            (None, Some(sigma), Some(theta)) => {
                if !theta.is_finite() {
                    return Err("non-finite theta".into());
                }
                PartialFrame::new(x, sigma, theta)
                    .and_then(|pf| pf.expand())
                    .map_err(|e| e.to_string())
            }
            (None, None, None) => Err("needs either M or sigma and theta".into()),
            (Some(_), _, _) => Err("gives both M and sigma/theta".into()),
            _ => Err("needs both sigma and theta".into()),
        }
    }
}

/// Pairwise geometry resolved from a document.
#[derive(Debug, Clone)]
pub enum Geometry {
    Cameras(HashMap<ViewId, PinholeCamera>),
    Fundamentals(HashMap<(ViewId, ViewId), FundamentalMatrix>),
}

impl Geometry {
    fn knows(&self, view: ViewId) -> bool {
        match self {
            Geometry::Cameras(cams) => cams.contains_key(&view),
            Geometry::Fundamentals(fs) => fs.keys().any(|&(i, j)| i == view || j == view),
        }
    }

    /// `F` with `x̃_bᵀ F x̃_a = 0`, from either orientation of the stored pair.
    fn fundamental(fs: &HashMap<(ViewId, ViewId), FundamentalMatrix>, a: ViewId, b: ViewId) -> Option<FundamentalMatrix> {
        fs.get(&(a, b)).copied().or_else(|| fs.get(&(b, a)).map(|f| f.transpose()))
    }
}

/// A schema-checked document: every track has resolvable views and
/// well-formed frames.
#[derive(Debug, Clone)]
pub struct ValidDocument {
    pub doc: TrackDocument,
    /// `None` only for a document without tracks.
    pub geometry: Option<Geometry>,
    frames: Vec<Vec<LocalAffineFrame>>,
}

fn mat3(rows: &[[f64; 3]; 3]) -> Mat3 {
    Mat3::from_fn(|r, c| rows[r][c])
}

fn json_error(e: serde_json::Error) -> CliError {
    let text = e.to_string();
    // serde_json appends its own position; report it once, up front
    let msg = text.rsplit_once(" at line ").map_or(text.as_str(), |(m, _)| m);
    let kind = match e.classify() {
        serde_json::error::Category::Data => "schema error",
        _ => "malformed JSON",
    };
    CliError::Schema(format!("{kind} at line {}, column {}: {msg}", e.line(), e.column()))
}

/// Parses and schema-checks a document.
pub fn parse_document(text: &str) -> Result<ValidDocument> {
    let doc: TrackDocument = serde_json::from_str(text).map_err(json_error)?;
    validate_document(doc)
}

pub fn validate_document(doc: TrackDocument) -> Result<ValidDocument> {
    let schema = |msg: String| CliError::Schema(msg);
    let geometry = match (&doc.cameras, &doc.fundamentals) {
        (Some(_), Some(_)) => {
            return Err(schema(
                "document mixes 'cameras' (poses) and 'fundamentals' (pairwise F); supply exactly one".into(),
            ))
        }
        (Some(cams), None) => {
            let mut out = HashMap::new();
            for (k, c) in cams.iter().enumerate() {
                let cam = PinholeCamera::new(mat3(&c.k), mat3(&c.r), Vec3::from(c.t))
                    .map_err(|e| schema(format!("cameras[{k}] (id {}): {e}", c.id)))?;
                if out.insert(c.id, cam).is_some() {
                    return Err(schema(format!("cameras[{k}]: duplicate camera id {}", c.id)));
                }
            }
            Some(Geometry::Cameras(out))
        }
        (None, Some(fs)) => {
            let mut out = HashMap::new();
            for (k, entry) in fs.iter().enumerate() {
                if entry.i == entry.j {
                    return Err(schema(format!("fundamentals[{k}]: pair ({0}, {0}) relates a view to itself", entry.i)));
                }
                let f = FundamentalMatrix::from_matrix(mat3(&entry.f))
                    .map_err(|e| schema(format!("fundamentals[{k}] ({}, {}): {e}", entry.i, entry.j)))?;
                if out.contains_key(&(entry.j, entry.i)) || out.insert((entry.i, entry.j), f).is_some() {
                    return Err(schema(format!("fundamentals[{k}]: pair ({}, {}) given twice", entry.i, entry.j)));
                }
            }
            Some(Geometry::Fundamentals(out))
        }
        (None, None) if doc.tracks.is_empty() => None,
        (None, None) => {
            return Err(schema("document has tracks but neither 'cameras' nor 'fundamentals'".into()))
        }
    };

    let mut frames = Vec::with_capacity(doc.tracks.len());
    for (t, track) in doc.tracks.iter().enumerate() {
        if track.observations.len() < 2 {
            return Err(schema(format!(
                "tracks[{t}]: needs at least 2 observations, has {}",
                track.observations.len()
            )));
        }
        let mut seen = BTreeMap::new();
        let mut track_frames = Vec::with_capacity(track.observations.len());
        for (o, obs) in track.observations.iter().enumerate() {
            let at = format!("tracks[{t}].observations[{o}]");
            // geometry is present whenever tracks are
            if !geometry.as_ref().is_some_and(|g| g.knows(obs.view_id)) {
                return Err(schema(format!("{at}: view_id {} does not resolve", obs.view_id)));
            }
            if let Some(prev) = seen.insert(obs.view_id, o) {
                return Err(schema(format!("{at}: view_id {} already observed at index {prev}", obs.view_id)));
            }
            track_frames.push(obs.frame().map_err(|e| schema(format!("{at}: {e}")))?);
        }
        frames.push(track_frames);
    }
    Ok(ValidDocument { doc, geometry, frames })
}

impl ValidDocument {
    pub fn n_tracks(&self) -> usize {
        self.frames.len()
    }

    /// Frames of track `t` as given, partial frames expanded to `σ·R(θ)`.
    pub fn frames(&self, t: usize) -> &[LocalAffineFrame] {
        &self.frames[t]
    }

    /// Constraints for every pair of observations in track `t` that has
    /// geometry. Failures here are numerical, not schema, problems.
    pub fn build_track(&self, t: usize, scaling: RowScaling) -> laf_epipolar::Result<MultiViewTrack> {
        let frames = self.frames[t].clone();
        let views: Vec<ViewId> = self.doc.tracks[t].observations.iter().map(|o| o.view_id).collect();
        let pairs = PairSet::All.pairs(views.len());
        match self.geometry.as_ref().expect("validated documents with tracks have geometry") {
            Geometry::Cameras(cams) => {
                let cameras: Vec<PinholeCamera> = views.iter().map(|v| cams[v]).collect();
                MultiViewTrack::from_cameras(
                    frames,
                    &cameras,
                    PairSet::All,
                    laf_epipolar::ConstraintModel::Pixel,
                    scaling,
                )
            }
            Geometry::Fundamentals(fs) => MultiViewTrack::from_fundamentals(
                frames,
                &pairs,
                |a, b| Geometry::fundamental(fs, views[a], views[b]),
                scaling,
            ),
        }
    }
}
