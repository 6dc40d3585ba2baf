#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use laf_epipolar::synth::{add_noise, generate_scene, ground_truth_lafs, tangent_basis, NoiseModel, SyntheticScene};
use laf_epipolar::{fundamental_from_cameras, LocalAffineFrame, Mat3, PartialFrame, PinholeCamera, Vec3};
use laf_epipolar_cli::document::{CameraEntry, FundamentalEntry, Observation, TrackDocument, TrackEntry};

pub fn rows(m: &Mat3) -> [[f64; 3]; 3] {
    std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)]))
}

pub fn camera_entries(cams: &[PinholeCamera]) -> Vec<CameraEntry> {
    cams.iter()
        .enumerate()
        .map(|(id, c)| CameraEntry {
            id: id as u64,
            k: rows(c.intrinsics()),
            r: rows(c.rotation()),
            t: (*c.translation()).into(),
        })
        .collect()
}

/// Pose-derived `F` for every view pair, every other pair stored reversed.
pub fn fundamental_entries(cams: &[PinholeCamera]) -> Vec<FundamentalEntry> {
    let mut out = Vec::new();
    for i in 0..cams.len() {
        for j in i + 1..cams.len() {
            let (a, b) = if (i + j) % 2 == 0 { (i, j) } else { (j, i) };
            let f = fundamental_from_cameras(&cams[a], &cams[b]).unwrap();
            out.push(FundamentalEntry { i: a as u64, j: b as u64, f: rows(f.matrix()) });
        }
    }
    out
}

/// Ground-truth frames of several surface points seen by one rig.
pub fn rig_tracks(n_views: usize, n_points: usize, seed: u64) -> (Vec<PinholeCamera>, Vec<Vec<LocalAffineFrame>>) {
    let base = generate_scene(n_views, seed).unwrap();
    let tracks = (0..n_points)
        .map(|p| {
            let k = p as f64;
            let point = Vec3::new(0.3 * (1.7 * k).sin(), 0.3 * (2.3 * k).cos(), 0.2 * (0.9 * k).sin());
            let normal = (base.normal + Vec3::new(0.1 * k.cos(), 0.1 * k.sin(), 0.05)).normalize();
            let scene = SyntheticScene { cameras: base.cameras.clone(), point, normal, tangent: tangent_basis(&normal) };
            ground_truth_lafs(&scene)
        })
        .collect();
    (base.cameras, tracks)
}

pub fn noisy(tracks: &[Vec<LocalAffineFrame>], sigma: f64, seed: u64) -> Vec<Vec<LocalAffineFrame>> {
    tracks
        .iter()
        .enumerate()
        .map(|(t, f)| add_noise(f, NoiseModel::new(sigma).unwrap(), seed + t as u64))
        .collect()
}

/// Noise on the frame matrices only, so pose-derived constraints stay exact.
pub fn noisy_matrices(tracks: &[Vec<LocalAffineFrame>], sigma: f64, seed: u64) -> Vec<Vec<LocalAffineFrame>> {
    noisy(tracks, sigma, seed)
        .into_iter()
        .zip(tracks)
        .map(|(n, t)| n.iter().zip(t).map(|(a, b)| LocalAffineFrame::new(b.x, a.m)).collect())
        .collect()
}

pub fn track_entry(observations: Vec<Observation>) -> TrackEntry {
    TrackEntry { observations, residual_before: None, residual_after: None, path: None, status: None, warnings: vec![] }
}

pub fn full_tracks(tracks: &[Vec<LocalAffineFrame>]) -> Vec<TrackEntry> {
    tracks
        .iter()
        .map(|t| track_entry(t.iter().enumerate().map(|(v, f)| Observation::full(v as u64, f)).collect()))
        .collect()
}

pub fn partial_tracks(tracks: &[Vec<LocalAffineFrame>]) -> Vec<TrackEntry> {
    tracks
        .iter()
        .map(|t| {
            track_entry(
                t.iter()
                    .enumerate()
                    .map(|(v, f)| Observation::partial(v as u64, &PartialFrame::from_affine(f.x, &f.m).unwrap()))
                    .collect(),
            )
        })
        .collect()
}

pub fn camera_doc(cams: &[PinholeCamera], tracks: Vec<TrackEntry>) -> TrackDocument {
    TrackDocument { cameras: Some(camera_entries(cams)), fundamentals: None, tracks }
}

pub fn write_doc(path: &Path, doc: &TrackDocument) {
    std::fs::write(path, serde_json::to_string_pretty(doc).unwrap()).unwrap();
}

pub fn read_doc(path: &Path) -> TrackDocument {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

pub fn lafcorr(args: &[&str]) -> Output {
    lafcorr_env(args, &[])
}

pub fn lafcorr_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_lafcorr"));
    cmd.args(args).env_remove(laf_epipolar_cli::THREADS_ENV);
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}
