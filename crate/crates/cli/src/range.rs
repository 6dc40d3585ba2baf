//! Inclusive value ranges for benchmark flags: `a`, `a..b` or `a..b:step`.

use crate::error::{CliError, Result};

/// Upper bound on the number of values a range may expand to.
pub const MAX_RANGE_LEN: usize = 100_000;

/// Expanded values are rounded to this many decimals, so `0.0..1.0:0.1`
/// yields `0.3` rather than `0.30000000000000004`.
const DECIMALS: i32 = 9;

fn parse_f64(s: &str, flag: &str) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| CliError::Schema(format!("{flag}: '{s}' is not a number")))?;
    if !v.is_finite() {
        return Err(CliError::Schema(format!("{flag}: '{s}' is not finite")));
    }
    Ok(v)
}

fn parse_usize(s: &str, flag: &str) -> Result<usize> {
    s.trim()
        .parse()
        .map_err(|_| CliError::Schema(format!("{flag}: '{s}' is not a non-negative integer")))
}

fn split(spec: &str) -> (&str, Option<&str>, Option<&str>) {
    let (range, step) = match spec.split_once(':') {
        Some((r, s)) => (r, Some(s)),
        None => (spec, None),
    };
    match range.split_once("..") {
        Some((a, b)) => (a, Some(b), step),
        None => (range, None, step),
    }
}

/// Real values from `a` to `b` inclusive in steps of `step` (default: `b - a`).
pub fn parse_real_range(spec: &str, flag: &str) -> Result<Vec<f64>> {
    let (a, b, step) = split(spec);
    let start = parse_f64(a, flag)?;
    let Some(b) = b else {
        if step.is_some() {
            return Err(CliError::Schema(format!("{flag}: a step needs a range 'a..b:step'")));
        }
        return Ok(vec![start]);
    };
    let end = parse_f64(b, flag)?;
    if end < start {
        return Err(CliError::Schema(format!("{flag}: range end {end} is below its start {start}")));
    }
    let step = match step {
        Some(s) => parse_f64(s, flag)?,
        None if end == start => 1.0,
        None => end - start,
    };
    if !(step > 0.0) {
        return Err(CliError::Schema(format!("{flag}: step must be positive, got {step}")));
    }
    let span = (end - start) / step;
    // a step that lands within 1e-9 of the end includes it
    let count = (span + 1e-9).floor();
    if !count.is_finite() || count >= MAX_RANGE_LEN as f64 {
        return Err(CliError::Schema(format!("{flag}: range expands to more than {MAX_RANGE_LEN} values")));
    }
    let scale = 10f64.powi(DECIMALS);
    Ok((0..=count as usize)
        .map(|i| {
            let v = start + i as f64 * step;
            let rounded = (v * scale).round() / scale;
            if rounded.is_finite() { rounded } else { v }
        })
        .collect())
}

/// Integers from `a` to `b` inclusive in steps of `step` (default 1).
pub fn parse_int_range(spec: &str, flag: &str) -> Result<Vec<usize>> {
    let (a, b, step) = split(spec);
    let start = parse_usize(a, flag)?;
    let end = match b {
        Some(b) => parse_usize(b, flag)?,
        None if step.is_some() => {
            return Err(CliError::Schema(format!("{flag}: a step needs a range 'a..b:step'")));
        }
        None => start,
    };
    let step = step.map(|s| parse_usize(s, flag)).transpose()?.unwrap_or(1);
    if end < start {
        return Err(CliError::Schema(format!("{flag}: range end {end} is below its start {start}")));
    }
    if step == 0 {
        return Err(CliError::Schema(format!("{flag}: step must be positive")));
    }
    if (end - start) / step >= MAX_RANGE_LEN {
        return Err(CliError::Schema(format!("{flag}: range expands to more than {MAX_RANGE_LEN} values")));
    }
    Ok((start..=end).step_by(step).collect())
}
