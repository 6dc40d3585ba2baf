//! `lafcorr`: correct track files against epipolar geometry, check their
//! feasibility, and run the synthetic benchmark grid.
//!
//! Exit status: 0 on success, 1 on I/O failure, 2 on a malformed document
//! or bad flags, 3 when some track failed numerically (the output document
//! is still written, with a per-track status).

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod document;
pub mod error;
pub mod range;

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use laf_epipolar::synth::{run_grid, FMode, GridConfig, GridKind, GridReport};
use laf_epipolar::{correct_track, ConstraintModel, RowScaling, SolvePath};
use rayon::prelude::*;

pub use document::{parse_document, TrackDocument, ValidDocument};
pub use error::{CliError, Result};

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "LAFC_THREADS";

#[derive(Debug, Parser)]
#[command(name = "lafcorr", version, about = "Multi-view LAF correction against epipolar geometry")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Correct every track of a document and write the corrected document.
    Correct(CorrectArgs),
    /// Run the synthetic noise × view-count benchmark and write its CSV.
    Bench(BenchArgs),
    /// Report per-track constraint residuals without modifying frames.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PathArg {
    Qr,
    Svd,
    Kkt,
}

impl From<PathArg> for SolvePath {
    fn from(p: PathArg) -> Self {
        match p {
            PathArg::Qr => SolvePath::Qr,
            PathArg::Svd => SolvePath::Svd,
            PathArg::Kkt => SolvePath::Kkt,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FModeArg {
    Gt,
    #[value(name = "8pt")]
    EightPoint,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    /// `F` with pixel coordinates.
    Pixel,
    /// `E` with bearing vectors.
    Bearing,
}

#[derive(Debug, clap::Args)]
pub struct CorrectArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Solve path; defaults to qr for camera poses and svd for pairwise F.
    #[arg(long, value_enum)]
    pub path: Option<PathArg>,
    /// Scale each constraint to unit norm. The solver is invariant to this;
    /// it only changes the units of the reported residuals.
    #[arg(long, value_enum, default_value = "on")]
    pub row_normalize: Switch,
}

#[derive(Debug, clap::Args)]
pub struct BenchArgs {
    /// Noise levels in pixels, `a..b:step`.
    #[arg(long, default_value = "0.0..1.0:0.1")]
    pub sigmas: String,
    /// View counts, `a..b`.
    #[arg(long, default_value = "2..10")]
    pub views: String,
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    #[arg(long, value_enum, default_value = "both")]
    pub f_mode: FModeArg,
    #[arg(long, value_enum, default_value = "svd")]
    pub path: PathArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Correspondences per view pair for the 8-point estimate.
    #[arg(long, default_value_t = laf_epipolar::synth::DEFAULT_F_POINTS)]
    pub f_points: usize,
    /// Constraint form for the ground-truth geometry grid.
    #[arg(long, value_enum, default_value = "pixel")]
    pub model: ModelArg,
    #[arg(long)]
    pub csv: PathBuf,
    /// Fill the timing column; timed CSVs are not reproducible byte for byte.
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, clap::Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Largest residual still counted as feasible.
    #[arg(long, default_value_t = 1e-6)]
    pub threshold: f64,
}

/// Thread count from [`THREADS_ENV`]; `None` means available parallelism.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Schema(format!("{THREADS_ENV} must be a positive integer, got '{v}'"))),
        },
    }
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Correct(args) => cmd_correct(args, out),
        Command::Bench(args) => cmd_bench(args, out),
        Command::Validate(args) => cmd_validate(args, out),
    }
}

fn read_document(path: &PathBuf) -> Result<ValidDocument> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    parse_document(&text)
}

fn say(out: &mut dyn Write, line: std::fmt::Arguments) -> Result<()> {
    writeln!(out, "{line}").map_err(|e| CliError::io("writing to stdout", e))
}

pub fn cmd_correct(args: &CorrectArgs, out: &mut dyn Write) -> Result<()> {
    let valid = read_document(&args.input)?;
    let scaling = match args.row_normalize {
        Switch::On => RowScaling::Unit,
        Switch::Off => RowScaling::Raw,
    };
    let path = args.path.map(SolvePath::from);
    // collect keeps input order whatever the schedule
    let results: Vec<_> = (0..valid.n_tracks())
        .into_par_iter()
        .map(|t| valid.build_track(t, scaling).and_then(|track| correct_track(&track, path)))
        .collect();

    let mut doc = valid.doc.clone();
    let mut failed = 0;
    for (track, result) in doc.tracks.iter_mut().zip(&results) {
        match result {
            Ok(r) => {
                for (obs, m) in track.observations.iter_mut().zip(&r.frames) {
                    obs.set_matrix(m);
                }
                track.residual_before = Some(r.residual_before);
                track.residual_after = Some(r.residual_after);
                track.path = Some(r.path.to_string());
                track.status = Some("ok".into());
                track.warnings = r.warnings.iter().map(|w| w.to_string()).collect();
            }
            Err(e) => {
                failed += 1;
                track.residual_before = None;
                track.residual_after = None;
                track.path = None;
                track.status = Some(format!("failed: {e}"));
                track.warnings.clear();
            }
        }
    }
    let text = serde_json::to_string_pretty(&doc).expect("documents serialize");
    fs::write(&args.output, text + "\n").map_err(|e| CliError::io(format!("writing {}", args.output.display()), e))?;
    let total = doc.tracks.len();
    say(out, format_args!("corrected {} of {total} tracks into {}", total - failed, args.output.display()))?;
    if failed > 0 {
        return Err(CliError::Numerical { failed, total });
    }
    Ok(())
}

pub fn cmd_validate(args: &ValidateArgs, out: &mut dyn Write) -> Result<()> {
    if !(args.threshold >= 0.0) {
        return Err(CliError::Schema(format!("--threshold must be non-negative, got {}", args.threshold)));
    }
    let valid = read_document(&args.input)?;
    if valid.n_tracks() == 0 {
        return say(out, format_args!("verdict: no tracks"));
    }
    let residuals: Vec<_> = (0..valid.n_tracks())
        .into_par_iter()
        .map(|t| valid.build_track(t, RowScaling::Unit).map(|track| track.max_residual()))
        .collect();
    let mut infeasible = 0;
    for (t, r) in residuals.iter().enumerate() {
        match r {
            Ok(r) if *r <= args.threshold => say(out, format_args!("track {t}: max residual {r:.3e} feasible"))?,
            Ok(r) => {
                infeasible += 1;
                say(out, format_args!("track {t}: max residual {r:.3e} infeasible"))?
            }
            Err(e) => {
                infeasible += 1;
                say(out, format_args!("track {t}: error: {e}"))?
            }
        }
    }
    let total = residuals.len();
    if infeasible == 0 {
        say(out, format_args!("verdict: feasible ({total} tracks at or below {:e})", args.threshold))
    } else {
        say(out, format_args!("verdict: infeasible ({infeasible} of {total} tracks above {:e})", args.threshold))
    }
}

fn mean_time_at(grid: Option<&laf_epipolar::synth::ErrorGrid>, views: usize) -> Option<f64> {
    let grid = grid?;
    let vi = grid.view_counts.iter().position(|&n| n == views)?;
    let times: Vec<f64> = (0..grid.sigmas.len()).filter_map(|si| grid.cell(vi, si).mean_time_us).collect();
    (!times.is_empty()).then(|| times.iter().sum::<f64>() / times.len() as f64)
}

fn bench_config(args: &BenchArgs) -> Result<GridConfig> {
    let sigmas = range::parse_real_range(&args.sigmas, "--sigmas")?;
    let view_counts = range::parse_int_range(&args.views, "--views")?;
    let f_mode = match args.f_mode {
        FModeArg::Gt => FMode::GroundTruth,
        FModeArg::EightPoint => FMode::EightPoint,
        FModeArg::Both => FMode::Both,
    };
    let cfg = GridConfig {
        sigmas,
        view_counts,
        trials: args.trials,
        f_mode,
        path: args.path.into(),
        seed: args.seed,
        f_points: args.f_points,
        model: match args.model {
            ModelArg::Pixel => ConstraintModel::Pixel,
            ModelArg::Bearing => ConstraintModel::Bearing,
        },
    };
    cfg.validate().map_err(|e| CliError::Schema(e.to_string()))?;
    Ok(cfg)
}

pub fn cmd_bench(args: &BenchArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = bench_config(args)?;
    let report: GridReport = run_grid(&cfg).map_err(|e| CliError::Computation(e.to_string()))?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv, args.timing).map_err(|e| CliError::Computation(e.to_string()))?;
    fs::write(&args.csv, csv).map_err(|e| CliError::io(format!("writing {}", args.csv.display()), e))?;

    let time = |kind: GridKind| {
        let grid = report.grids().find(|g| g.kind == kind);
        mean_time_at(grid, 5).map(|t| format!("{:.4} ms", t / 1e3))
    };
    let timings: Vec<String> = [GridKind::CorrectedGroundTruth, GridKind::CorrectedEightPoint]
        .into_iter()
        .filter_map(|k| time(k).map(|t| format!("{} {t}", k.name())))
        .collect();
    let timing = if timings.is_empty() { "n/a (no 5-view cells)".to_string() } else { timings.join(", ") };
    say(out, format_args!(
        "wrote {}: {} grids, {} view counts x {} noise levels, {} trials per cell, path {}; mean 5-view correction time: {timing}",
        args.csv.display(),
        report.grids().count(),
        cfg.view_counts.len(),
        cfg.sigmas.len(),
        cfg.trials,
        cfg.path,
    ))
}
