//! Track documents: parsing, schema checks, and correction of every track
//! must fail with an error, never a panic. Accepted documents survive a
//! serialize/parse round trip unchanged.
//!
//!   cargo +nightly fuzz run track_document fuzz/corpus/track_document

#![no_main]

use laf_epipolar::{correct_track, RowScaling, SolvePath};
use laf_epipolar_cli::parse_document;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if data.len() > 1 << 16 {
        return;
    }
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(valid) = parse_document(text) else { return };

    let again = parse_document(&serde_json::to_string(&valid.doc).unwrap()).expect("accepted documents re-parse");
    assert_eq!(again.doc, valid.doc);

    for t in 0..valid.n_tracks().min(8) {
        for scaling in [RowScaling::Unit, RowScaling::Raw] {
            let Ok(track) = valid.build_track(t, scaling) else { continue };
            if track.n_views() > 12 {
                continue;
            }
            for path in [SolvePath::Qr, SolvePath::Svd, SolvePath::Kkt] {
                let _ = correct_track(&track, Some(path));
            }
        }
    }
});
