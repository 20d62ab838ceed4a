//! Command implementations behind the `curve-spde` binary.
//!
//! Numbers are written as `{:.16e}` (17 significant digits, exact round
//! trip). An optional first line `# generated_unix=... runtime_secs=...` is
//! the only content that varies between identical runs; `timestamp = false`
//! drops it.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::experiments::{
    spacetime_convergence, temporal_convergence, vanish_probability, ErrorTable, StudyMode,
};
use crate::geometry::{CurvePath, Mesh};
use crate::noise::{BrownianLattice, NoiseForcing};
use crate::ritz::{ritz_convergence_report, RitzReport, SmoothFn};
use crate::stepper::{run_path, PathNoise, Trajectory};
use crate::{Error, Result};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "CURVE_SPDE_OUT";
const DEFAULT_OUT_DIR: &str = "curve-spde-out";

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_SCHEMA: i32 = 2;
pub const EXIT_BLOWUP: i32 = 3;

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Json(_) => EXIT_SCHEMA,
        Error::BlowUp { .. } => EXIT_BLOWUP,
        _ => EXIT_FAILURE,
    }
}

#[derive(Debug, Clone, Default)]
pub struct OutputOptions {
    /// Overrides `output.dir` of the config and the environment default.
    pub out_dir: Option<PathBuf>,
    /// Emit the `# generated_unix=...` line.
    pub timestamp: bool,
}

impl OutputOptions {
    /// `--out`, then `output.dir`, then `$CURVE_SPDE_OUT`, then `./curve-spde-out`.
    pub fn resolve_dir(&self, cfg: Option<&RunConfig>) -> PathBuf {
        self.out_dir
            .clone()
            .or_else(|| cfg.and_then(|c| c.output.dir.clone()))
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }

    fn stamp(&self, out: &mut String, runtime_secs: f64) {
        if self.timestamp {
            let now = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs());
            let _ = writeln!(out, "# generated_unix={now} runtime_secs={runtime_secs:.3}");
        }
    }
}

/// Scientific notation with 17 significant digits; empty for `None`.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}

/// Files written by [`cmd_run`].
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub manifest: PathBuf,
    pub files: Vec<PathBuf>,
}

fn snapshot_csv(traj: &Trajectory, index: usize, mesh: &Mesh) -> String {
    let snap = &traj.snapshots[index];
    let mut s = String::from("node_index,x,c\n");
    for (i, v) in snap.field.values().iter().enumerate() {
        let _ = writeln!(s, "{},{},{}", i + 1, fmt_num(mesh.node(i)), fmt_num(*v));
    }
    s
}

fn diagnostics_csv(traj: &Trajectory) -> String {
    let mut s = String::from("step,time,weighted_mass,l2_norm\n");
    for d in &traj.diagnostics {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            d.step,
            fmt_num(d.time),
            fmt_num(d.weighted_mass),
            fmt_num(d.l2_norm)
        );
    }
    s
}

/// Run paths `0..S` and write, per path, one CSV per snapshot time
/// (`node_index,x,c`; `node_index` is the one-based vertex) and a
/// diagnostics CSV, plus `manifest.csv` listing them.
pub fn cmd_run(cfg: &RunConfig, opts: &OutputOptions) -> Result<RunOutput> {
    let start = Instant::now();
    let dir = opts.resolve_dir(Some(cfg));
    let mesh = Mesh::uniform(cfg.grid.nodes)?;
    let physics = cfg.physics();
    let stepper = physics.stepper(cfg.grid.dt, cfg.grid.final_time)?;
    let noise = cfg.noise_settings();
    let spectrum = noise.spectrum_for(cfg.grid.nodes)?;
    let lattice = BrownianLattice::new(
        cfg.sampling.master_seed,
        cfg.sampling.samples,
        spectrum.modes,
        stepper.steps,
        cfg.grid.dt,
    )?;
    let forcing = NoiseForcing::new(lattice, spectrum, noise.sigma, 1, &mesh)?;
    let snapshots = &cfg.output.snapshots;

    let runs: Vec<Result<Trajectory>> = (0..cfg.sampling.samples)
        .into_par_iter()
        .map(|path| {
            run_path(
                &stepper,
                &physics.curve,
                &mesh,
                Some(PathNoise {
                    forcing: &forcing,
                    path,
                }),
                snapshots,
            )
        })
        .collect();
    let trajectories = runs.into_iter().collect::<Result<Vec<_>>>()?;

    let mut files = Vec::new();
    let mut manifest = String::new();
    let mut body = String::from("path,kind,step,time,file\n");
    for traj in &trajectories {
        for (j, snap) in traj.snapshots.iter().enumerate() {
            let name = format!("path{:04}_snapshot{:03}.csv", traj.path, j);
            files.push(write_file(&dir, &name, &snapshot_csv(traj, j, &mesh))?);
            let _ = writeln!(
                body,
                "{},snapshot,{},{},{}",
                traj.path,
                snap.step,
                fmt_num(snap.time),
                name
            );
        }
        let name = format!("path{:04}_diagnostics.csv", traj.path);
        files.push(write_file(&dir, &name, &diagnostics_csv(traj))?);
        let _ = writeln!(body, "{},diagnostics,,,{}", traj.path, name);
    }
    opts.stamp(&mut manifest, start.elapsed().as_secs_f64());
    manifest.push_str(&body);
    let manifest = write_file(&dir, "manifest.csv", &manifest)?;
    Ok(RunOutput { manifest, files })
}

/// `h,dt,E_S,eoc` with one row per rung. Dropped rungs keep their row with
/// empty `E_S`.
pub fn error_table_csv(table: &ErrorTable, opts: &OutputOptions) -> String {
    let mut s = String::new();
    opts.stamp(&mut s, table.meta.runtime_secs);
    let m = &table.meta;
    let _ = writeln!(
        s,
        "# mode={} master_seed={} S={} L={} reference_blowups={}",
        m.mode.name(),
        m.master_seed,
        m.samples,
        m.modes,
        m.reference_blowups
    );
    s.push_str("h,dt,E_S,eoc\n");
    for r in &table.rows {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            fmt_num(r.h),
            fmt_num(r.dt),
            fmt_opt(r.error),
            fmt_opt(r.eoc)
        );
    }
    s
}

/// Run the convergence study of the config and write `convergence_<mode>.csv`.
pub fn cmd_converge(
    cfg: &RunConfig,
    mode: Option<StudyMode>,
    opts: &OutputOptions,
) -> Result<(PathBuf, ErrorTable)> {
    let study = cfg.convergence_study(mode)?;
    let table = match study.mode {
        StudyMode::Temporal => temporal_convergence(&study)?,
        StudyMode::SpaceTime => spacetime_convergence(&study)?,
    };
    let dir = opts.resolve_dir(Some(cfg));
    let name = format!("convergence_{}.csv", study.mode.name());
    let path = write_file(&dir, &name, &error_table_csv(&table, opts))?;
    Ok((path, table))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VanishSummary {
    /// `null` when every path blew up.
    pub fraction: Option<f64>,
    #[serde(rename = "S")]
    pub samples: usize,
    pub threshold: f64,
    pub blowups: usize,
}

/// Estimate the extinction probability and write `vanish.json`.
pub fn cmd_vanish(cfg: &RunConfig, opts: &OutputOptions) -> Result<(PathBuf, VanishSummary)> {
    let report = vanish_probability(&cfg.vanish_study()?)?;
    let summary = VanishSummary {
        fraction: Some(report.fraction).filter(|f| f.is_finite()),
        samples: report.samples,
        threshold: report.threshold,
        blowups: report.blowups,
    };
    let dir = opts.resolve_dir(Some(cfg));
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    let path = write_file(&dir, "vanish.json", &text)?;
    Ok((path, summary))
}

/// Curve by CLI name.
pub fn curve_by_name(name: &str) -> Result<CurvePath> {
    match name {
        "circle" | "stationary_circle" => Ok(CurvePath::unit_circle()),
        "shrinking_circle" => Ok(CurvePath::ShrinkingCircle),
        "flower" => Ok(CurvePath::Flower),
        other => Err(Error::config(format!(
            "unknown curve {other:?} (expected circle, shrinking_circle or flower)"
        ))),
    }
}

pub fn ritz_csv(report: &RitzReport, opts: &OutputOptions, runtime_secs: f64) -> String {
    let mut s = String::new();
    opts.stamp(&mut s, runtime_secs);
    let _ = writeln!(
        s,
        "# l2_slope={} h1_slope={}",
        fmt_opt(report.l2_slope),
        fmt_opt(report.h1_slope)
    );
    s.push_str("N,h,l2_error,h1_error,condition\n");
    for r in &report.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.nodes,
            fmt_num(r.h),
            fmt_num(r.l2_error),
            fmt_num(r.h1_error),
            fmt_num(r.condition)
        );
    }
    s
}

/// Ritz projection errors of `z = sin(frequency · x)` on the named curve.
pub fn cmd_ritz(
    curve: &str,
    time: f64,
    levels: &[usize],
    frequency: f64,
    opts: &OutputOptions,
) -> Result<(String, RitzReport)> {
    let start = Instant::now();
    let curve = curve_by_name(curve)?;
    if !time.is_finite() || time < 0.0 {
        return Err(Error::config(format!("time must be >= 0, got {time}")));
    }
    let report = ritz_convergence_report(&SmoothFn::sine(frequency), &curve, time, levels)?;
    let csv = ritz_csv(&report, opts, start.elapsed().as_secs_f64());
    Ok((csv, report))
}
