//! Benchmark range flags (`a`, `a..b`, `a..b:step`): errors, never panics,
//! and accepted ranges are bounded, finite and ascending.
//!
//!   cargo +nightly fuzz run range_spec fuzz/corpus/range_spec

#![no_main]

use laf_epipolar_cli::range::{parse_int_range, parse_real_range, MAX_RANGE_LEN};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(spec) = std::str::from_utf8(data) else { return };
    if let Ok(values) = parse_real_range(spec, "--sigmas") {
        assert!(!values.is_empty() && values.len() <= MAX_RANGE_LEN);
        assert!(values.iter().all(|v| v.is_finite()));
        assert!(values.windows(2).all(|w| w[0] <= w[1]));
    }
    if let Ok(values) = parse_int_range(spec, "--views") {
        assert!(!values.is_empty() && values.len() <= MAX_RANGE_LEN);
        assert!(values.windows(2).all(|w| w[0] < w[1]));
    }
});
