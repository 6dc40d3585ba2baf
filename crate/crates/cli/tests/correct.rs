mod common;

use common::*;
use laf_epipolar::{Mat2, Mat3, PinholeCamera, Vec3};
use laf_epipolar_cli::document::TrackDocument;

fn matrix(obs: &laf_epipolar_cli::document::Observation) -> Mat2 {
    let m = obs.m.expect("full frame");
    Mat2::new(m[0], m[1], m[2], m[3])
}

fn correct(doc: &TrackDocument, extra: &[&str]) -> (std::process::Output, TrackDocument) {
    let dir = tempfile::tempdir().unwrap();
    let (input, output) = (dir.path().join("in.json"), dir.path().join("out.json"));
    write_doc(&input, doc);
    let mut args = vec!["correct", "--input", path_str(&input), "--output", path_str(&output)];
    args.extend_from_slice(extra);
    let o = lafcorr(&args);
    let out = if output.exists() { read_doc(&output) } else { doc.clone() };
    (o, out)
}

#[test]
fn feasible_frames_pass_through_unchanged() {
    let (cams, tracks) = rig_tracks(5, 4, 11);
    let doc = camera_doc(&cams, full_tracks(&tracks));
    let (o, out) = correct(&doc, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for (before, after) in doc.tracks.iter().zip(&out.tracks) {
        assert_eq!(after.status.as_deref(), Some("ok"));
        assert_eq!(after.path.as_deref(), Some("qr"));
        assert!(after.residual_before.unwrap() < 1e-9);
        assert!(after.residual_after.unwrap() < 1e-9);
        for (a, b) in before.observations.iter().zip(&after.observations) {
            assert!((matrix(a) - matrix(b)).norm() < 1e-10);
            assert_eq!((a.view_id, a.x, a.y), (b.view_id, b.x, b.y));
        }
    }
}

#[test]
fn corrected_documents_validate_as_feasible() {
    let (cams, tracks) = rig_tracks(6, 5, 12);
    let dir = tempfile::tempdir().unwrap();
    let (input, output) = (dir.path().join("in.json"), dir.path().join("out.json"));
    write_doc(&input, &camera_doc(&cams, full_tracks(&noisy(&tracks, 1.0, 3))));

    let before = lafcorr(&["validate", "--input", path_str(&input)]);
    assert_eq!(before.status.code(), Some(0));
    assert!(stdout(&before).contains("verdict: infeasible (5 of 5"), "{}", stdout(&before));

    let o = lafcorr(&["correct", "--input", path_str(&input), "--output", path_str(&output)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = read_doc(&output);
    for t in &out.tracks {
        assert!(t.residual_after.unwrap() < 1e-9);
        assert!(t.residual_before.unwrap() > 1e-4);
    }
    let after = lafcorr(&["validate", "--input", path_str(&output)]);
    assert_eq!(after.status.code(), Some(0));
    assert!(stdout(&after).contains("verdict: feasible"), "{}", stdout(&after));
}

#[test]
fn partial_frames_come_back_as_full_matrices() {
    let (cams, tracks) = rig_tracks(4, 3, 13);
    let doc = camera_doc(&cams, partial_tracks(&tracks));
    let (o, out) = correct(&doc, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for t in &out.tracks {
        assert!(t.residual_after.unwrap() < 1e-9);
        for obs in &t.observations {
            assert!(obs.m.is_some());
            assert!(obs.sigma.is_none() && obs.theta.is_none());
        }
    }
    let text = serde_json::to_string(&out).unwrap();
    assert!(!text.contains("sigma") && !text.contains("theta"));
}

#[test]
fn pairwise_geometry_defaults_to_the_svd_path() {
    let (cams, tracks) = rig_tracks(5, 3, 14);
    let frames = full_tracks(&noisy_matrices(&tracks, 0.5, 9));
    let pose_doc = camera_doc(&cams, frames.clone());
    let f_doc = TrackDocument { cameras: None, fundamentals: Some(fundamental_entries(&cams)), tracks: frames };
    let (o1, by_pose) = correct(&pose_doc, &[]);
    let (o2, by_f) = correct(&f_doc, &[]);
    assert_eq!((o1.status.code(), o2.status.code()), (Some(0), Some(0)), "{}", stderr(&o2));
    for (a, b) in by_pose.tracks.iter().zip(&by_f.tracks) {
        assert_eq!(b.path.as_deref(), Some("svd"));
        assert!(b.residual_after.unwrap() < 1e-9);
        // the same pose-derived geometry, reached through stored F matrices
        for (x, y) in a.observations.iter().zip(&b.observations) {
            assert!((matrix(x) - matrix(y)).norm() < 1e-8 * matrix(x).norm());
        }
    }
    let (o, forced) = correct(&f_doc, &["--path", "kkt"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(forced.tracks.iter().all(|t| t.path.as_deref() == Some("kkt")));
}

#[test]
fn row_normalization_changes_only_residual_units() {
    let (cams, tracks) = rig_tracks(4, 3, 15);
    let doc = camera_doc(&cams, full_tracks(&noisy(&tracks, 1.0, 4)));
    let (_, unit) = correct(&doc, &["--row-normalize", "on"]);
    let (o, raw) = correct(&doc, &["--row-normalize", "off"]);
    assert_eq!(o.status.code(), Some(0));
    for (a, b) in unit.tracks.iter().zip(&raw.tracks) {
        assert_ne!(a.residual_before, b.residual_before);
        for (x, y) in a.observations.iter().zip(&b.observations) {
            assert!((matrix(x) - matrix(y)).norm() < 1e-9 * matrix(x).norm());
        }
    }
}

#[test]
fn output_is_ordered_and_independent_of_thread_count() {
    let (cams, tracks) = rig_tracks(7, 40, 16);
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.json");
    write_doc(&input, &camera_doc(&cams, full_tracks(&noisy(&tracks, 0.7, 5))));
    let mut outputs = Vec::new();
    for threads in ["1", "3", "8"] {
        let output = dir.path().join(format!("out{threads}.json"));
        let o = lafcorr_env(
            &["correct", "--input", path_str(&input), "--output", path_str(&output)],
            &[("LAFC_THREADS", threads)],
        );
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        outputs.push(std::fs::read(&output).unwrap());
    }
    assert!(outputs.windows(2).all(|w| w[0] == w[1]));

    let bad = lafcorr_env(
        &["correct", "--input", path_str(&input), "--output", path_str(&dir.path().join("x.json"))],
        &[("LAFC_THREADS", "0")],
    );
    assert_eq!(bad.status.code(), Some(2));
    assert!(stderr(&bad).contains("LAFC_THREADS"));
}

#[test]
fn numerical_failures_exit_3_with_partial_output() {
    let (mut cams, tracks) = rig_tracks(3, 2, 17);
    // view 2 shares the center of view 0 with a different orientation
    let c0 = cams[0];
    let r = yaw(0.2) * c0.rotation();
    let t = -(r * c0.center());
    cams[2] = PinholeCamera::new(*c0.intrinsics(), r, t).unwrap();
    let mut entries = full_tracks(&tracks);
    entries[0].observations.truncate(2);
    entries[1].observations.remove(1);
    let doc = camera_doc(&cams, entries);
    let (o, out) = correct(&doc, &[]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("1 of 2 tracks failed"));
    assert_eq!(out.tracks[0].status.as_deref(), Some("ok"));
    let status = out.tracks[1].status.as_deref().unwrap();
    assert!(status.starts_with("failed:") && status.contains("coincide"), "{status}");
    assert!(out.tracks[1].residual_after.is_none());
    assert_eq!(out.tracks[1].observations, doc.tracks[1].observations);
}

fn yaw(angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

#[test]
fn mixed_geometry_is_rejected() {
    let (cams, tracks) = rig_tracks(3, 1, 18);
    let mut doc = camera_doc(&cams, full_tracks(&tracks));
    doc.fundamentals = Some(fundamental_entries(&cams));
    let (o, _) = correct(&doc, &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("cameras") && err.contains("fundamentals"), "{err}");
}

#[test]
fn malformed_json_reports_its_position() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.json");
    std::fs::write(&input, "{\n  \"tracks\": [\n    {\"observations\": [}\n  ]\n}\n").unwrap();
    let o = lafcorr(&["correct", "--input", path_str(&input), "--output", path_str(&dir.path().join("o.json"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("malformed JSON at line 3, column 23"), "{}", stderr(&o));
    assert!(!dir.path().join("o.json").exists());

    let o = lafcorr(&["correct", "--input", path_str(&dir.path().join("missing.json")), "--output", "x"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn camera_entries_round_trip() {
    let (cams, _) = rig_tracks(3, 1, 19);
    let doc = camera_doc(&cams, vec![]);
    let back: TrackDocument = serde_json::from_str(&serde_json::to_string(&doc).unwrap()).unwrap();
    for (c, e) in cams.iter().zip(back.cameras.unwrap()) {
        assert_eq!(Vec3::from(e.t), *c.translation());
    }
}
