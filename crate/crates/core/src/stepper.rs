//! The fully discrete semi-implicit Euler-Maruyama time loop.
//!
//! Each step solves
//!
//! ```text
//! (M^k + Δt D S^k) c^k = M^{k-1} c^{k-1} - Δt a(c^{k-1}, w^k) + Δt M^{k-1} r(c^{k-1}) + ξ^k
//! ```
//!
//! with `M`, `S` from the polygon at `t_k` / `t_{k-1}`, `a` the advection
//! load, and `ξ^k` the noise load built from the Brownian increments of step `k`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::assembly::{advection_load, assemble_mass, assemble_stiffness, reaction_load, CyclicTridiagonal};
use crate::geometry::{discretize_curve, interpolate_nodal, l2_norm, CurvePath, DiscreteCurve, FieldCoeffs, Mesh};
use crate::linalg::solve_spd_cyclic;
use crate::noise::NoiseForcing;
use crate::{Error, Result};

pub type ScalarMap = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type SpaceTimeMap = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Deterministic reaction term `r(c)`.
#[derive(Clone)]
pub enum Reaction {
    None,
    /// `rate · c`
    Linear { rate: f64 },
    /// `scale · c (1 - c)(c - root)`
    Bistable { scale: f64, root: f64 },
    Custom(ScalarMap),
}

impl Reaction {
    pub fn eval(&self, c: f64) -> f64 {
        match self {
            Reaction::None => 0.0,
            Reaction::Linear { rate } => rate * c,
            Reaction::Bistable { scale, root } => scale * c * (1.0 - c) * (c - root),
            Reaction::Custom(f) => f(c),
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, Reaction::None)
    }
}

impl fmt::Debug for Reaction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reaction::None => f.write_str("None"),
            Reaction::Linear { rate } => write!(f, "Linear {{ rate: {rate} }}"),
            Reaction::Bistable { scale, root } => {
                write!(f, "Bistable {{ scale: {scale}, root: {root} }}")
            }
            Reaction::Custom(_) => f.write_str("Custom"),
        }
    }
}

/// Tangential advection velocity `w_T(t, x)`.
///
/// Only the skew form `-⟨c w_T, φ_x⟩` is discretized; a `⟨c ∂_x w_T, φ⟩`
/// contribution has to be folded into the reaction by the caller.
#[derive(Clone)]
pub enum Advection {
    None,
    Constant { value: f64 },
    /// `amplitude · sin(frequency · x)`
    Sine { amplitude: f64, frequency: f64 },
    Custom(SpaceTimeMap),
}

impl Advection {
    pub fn eval(&self, t: f64, x: f64) -> f64 {
        match self {
            Advection::None => 0.0,
            Advection::Constant { value } => *value,
            Advection::Sine {
                amplitude,
                frequency,
            } => amplitude * (frequency * x).sin(),
            Advection::Custom(f) => f(t, x),
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, Advection::None)
    }
}

impl fmt::Debug for Advection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Advection::None => f.write_str("None"),
            Advection::Constant { value } => write!(f, "Constant {{ value: {value} }}"),
            Advection::Sine {
                amplitude,
                frequency,
            } => write!(f, "Sine {{ amplitude: {amplitude}, frequency: {frequency} }}"),
            Advection::Custom(_) => f.write_str("Custom"),
        }
    }
}

/// Initial data `c_0`, interpolated at the nodes.
#[derive(Clone)]
pub enum InitialCondition {
    Constant { value: f64 },
    /// `amplitude · exp(-sharpness/(4π²) · (x - center)²)` for `x ∈ [0, 2π)`.
    Gaussian {
        amplitude: f64,
        sharpness: f64,
        center: f64,
    },
    /// `amplitude · cos(frequency · x)`
    Cosine { amplitude: f64, frequency: f64 },
    Custom(ScalarMap),
}

impl InitialCondition {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            InitialCondition::Constant { value } => *value,
            InitialCondition::Gaussian {
                amplitude,
                sharpness,
                center,
            } => {
                let y = x.rem_euclid(2.0 * PI) - center;
                amplitude * (-sharpness / (4.0 * PI * PI) * y * y).exp()
            }
            InitialCondition::Cosine {
                amplitude,
                frequency,
            } => amplitude * (frequency * x).cos(),
            InitialCondition::Custom(f) => f(x),
        }
    }
}

impl fmt::Debug for InitialCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialCondition::Constant { value } => write!(f, "Constant({value})"),
            InitialCondition::Gaussian {
                amplitude,
                sharpness,
                center,
            } => write!(f, "Gaussian({amplitude}, {sharpness}, {center})"),
            InitialCondition::Cosine {
                amplitude,
                frequency,
            } => write!(f, "Cosine({amplitude}, {frequency})"),
            InitialCondition::Custom(_) => f.write_str("Custom"),
        }
    }
}

/// Time grid and deterministic physics of one run.
#[derive(Debug, Clone)]
pub struct StepperConfig {
    pub dt: f64,
    pub steps: usize,
    pub diffusion: f64,
    pub advection: Advection,
    pub reaction: Reaction,
    pub initial: InitialCondition,
}

impl StepperConfig {
    /// Requires `final_time / dt` to be an integer (to 1e-9 relative).
    pub fn new(
        dt: f64,
        final_time: f64,
        diffusion: f64,
        advection: Advection,
        reaction: Reaction,
        initial: InitialCondition,
    ) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::config(format!("dt must be > 0, got {dt}")));
        }
        if !(diffusion >= 0.0 && diffusion.is_finite()) {
            return Err(Error::config(format!("D must be >= 0, got {diffusion}")));
        }
        let steps = steps_for(final_time, dt)?;
        Ok(Self {
            dt,
            steps,
            diffusion,
            advection,
            reaction,
            initial,
        })
    }

    pub fn final_time(&self) -> f64 {
        self.steps as f64 * self.dt
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    /// Same physics on the time grid `dt`.
    pub fn with_dt(&self, dt: f64) -> Result<Self> {
        Self::new(
            dt,
            self.final_time(),
            self.diffusion,
            self.advection.clone(),
            self.reaction.clone(),
            self.initial.clone(),
        )
    }

    pub fn initial_field(&self, mesh: &Mesh) -> Result<FieldCoeffs> {
        interpolate_nodal(|x| self.initial.eval(x), mesh)
    }
}

/// Number of steps `M` with `M · dt = T`.
pub fn steps_for(final_time: f64, dt: f64) -> Result<usize> {
    if !(final_time > 0.0 && final_time.is_finite()) {
        return Err(Error::config(format!("T must be > 0, got {final_time}")));
    }
    let m = (final_time / dt).round();
    if m < 1.0 || ((m * dt) - final_time).abs() > 1e-9 * final_time {
        return Err(Error::config(format!(
            "T = {final_time} is not an integer multiple of dt = {dt}"
        )));
    }
    Ok(m as usize)
}

/// Noise of one sample path.
#[derive(Debug, Clone, Copy)]
pub struct PathNoise<'a> {
    pub forcing: &'a NoiseForcing,
    pub path: usize,
}

/// One step from `c^{k-1}` to `c^k`, assembling both time levels afresh.
pub fn step(
    c_prev: &FieldCoeffs,
    curve: &CurvePath,
    cfg: &StepperConfig,
    mesh: &Mesh,
    noise: Option<PathNoise<'_>>,
    k: usize,
) -> Result<FieldCoeffs> {
    if k == 0 {
        return Err(Error::config("step index k starts at 1"));
    }
    c_prev.check_len(mesh.len())?;
    let prev = LevelGeometry::new(curve, cfg.time(k - 1), mesh)?;
    let out = advance(&prev, c_prev, curve, cfg, mesh, noise, k)?;
    Ok(out.field)
}

/// Polygon and matrices of one time level.
struct LevelGeometry {
    curve: DiscreteCurve,
    mass: CyclicTridiagonal,
    stiffness: CyclicTridiagonal,
}

impl LevelGeometry {
    fn new(curve: &CurvePath, t: f64, mesh: &Mesh) -> Result<Self> {
        let dc = discretize_curve(curve, t, mesh)?;
        let mass = assemble_mass(&dc)?;
        let stiffness = assemble_stiffness(&dc, 1.0)?;
        Ok(Self {
            curve: dc,
            mass,
            stiffness,
        })
    }
}

struct Advanced {
    field: FieldCoeffs,
    level: LevelGeometry,
}

fn blow_up(path: usize, k: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite { .. } => Error::BlowUp { path, step: k },
        other => other,
    }
}

fn advance(
    prev: &LevelGeometry,
    c_prev: &FieldCoeffs,
    curve: &CurvePath,
    cfg: &StepperConfig,
    mesh: &Mesh,
    noise: Option<PathNoise<'_>>,
    k: usize,
) -> Result<Advanced> {
    let path = noise.map_or(0, |n| n.path);
    let t = cfg.time(k);
    let dt = cfg.dt;
    let level = LevelGeometry::new(curve, t, mesh)?;

    let mut rhs = prev.mass.mul_vec_unchecked(c_prev.values());

    if !cfg.advection.is_none() {
        let w = interpolate_nodal(|x| cfg.advection.eval(t, x), mesh)?;
        let a = advection_load(c_prev, &w, mesh)?;
        for (r, ai) in rhs.iter_mut().zip(a) {
            *r -= dt * ai;
        }
    }
    if !cfg.reaction.is_none() {
        let rl = reaction_load(c_prev, |c| cfg.reaction.eval(c), &prev.mass)
            .map_err(blow_up(path, k))?;
        for (r, ri) in rhs.iter_mut().zip(rl) {
            *r += dt * ri;
        }
    }
    if let Some(PathNoise { forcing, path }) = noise {
        if !forcing.is_silent() {
            let xi = forcing.noise_load(c_prev, path, k)?;
            for (r, x) in rhs.iter_mut().zip(xi) {
                *r += x;
            }
        }
    }

    let system = level.mass.add_scaled(dt * cfg.diffusion, &level.stiffness)?;
    let values = match solve_spd_cyclic(&system, &rhs) {
        Ok(v) => v,
        Err(_) if rhs.iter().any(|v| !v.is_finite()) => {
            return Err(Error::BlowUp { path, step: k })
        }
        Err(e) => return Err(e),
    };
    let field = FieldCoeffs::new(values).with_level(k);
    if field.first_non_finite().is_some() {
        return Err(Error::BlowUp { path, step: k });
    }
    Ok(Advanced { field, level })
}

/// Per-step record of the conserved quantity and the plain `L²` norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostics {
    pub step: usize,
    pub time: f64,
    pub weighted_mass: f64,
    pub l2_norm: f64,
}

/// The three quantities bounded by the discrete a-priori estimate.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyBudget {
    /// `max_k ‖c^k √|u^k_hx|‖²`
    pub sup_energy: f64,
    /// `Σ_k ‖(c^k - c^{k-1}) √|u^{k-1}_hx|‖²`
    pub increment_sum: f64,
    /// `Δt Σ_k ‖c^k_x / √|u^k_hx|‖²`
    pub gradient_sum: f64,
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub step: usize,
    pub time: f64,
    pub field: FieldCoeffs,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub path: usize,
    pub snapshots: Vec<Snapshot>,
    pub diagnostics: Vec<StepDiagnostics>,
    pub max_l2: f64,
    pub energy: EnergyBudget,
    pub final_field: FieldCoeffs,
}

fn snapshot_steps(times: &[f64], cfg: &StepperConfig) -> Result<Vec<usize>> {
    times
        .iter()
        .map(|&t| {
            let k = (t / cfg.dt).round();
            if !(k >= 0.0 && k as usize <= cfg.steps)
                || (k * cfg.dt - t).abs() > 1e-9 * t.abs().max(1.0)
            {
                return Err(Error::config(format!(
                    "snapshot time {t} is not on the time grid (dt = {}, T = {})",
                    cfg.dt,
                    cfg.final_time()
                )));
            }
            Ok(k as usize)
        })
        .collect()
}

fn check_noise_grid(noise: &PathNoise<'_>, cfg: &StepperConfig) -> Result<()> {
    let lat = noise.forcing.lattice();
    let p = noise.forcing.aggregation();
    if (p as f64 * lat.dt_ref - cfg.dt).abs() > 1e-9 * cfg.dt {
        return Err(Error::config(format!(
            "noise aggregation {p} x dt_ref {} does not match dt = {}",
            lat.dt_ref, cfg.dt
        )));
    }
    if cfg.steps * p > lat.fine_steps {
        return Err(Error::LatticeIndex(format!(
            "{} steps of {p} fine steps exceed the lattice length {}",
            cfg.steps, lat.fine_steps
        )));
    }
    Ok(())
}

/// Run one sample path over `k = 1..=M`.
pub fn run_path(
    cfg: &StepperConfig,
    curve: &CurvePath,
    mesh: &Mesh,
    noise: Option<PathNoise<'_>>,
    snapshot_times: &[f64],
) -> Result<Trajectory> {
    let snap_steps = snapshot_steps(snapshot_times, cfg)?;
    if let Some(n) = &noise {
        check_noise_grid(n, cfg)?;
    }
    let path = noise.map_or(0, |n| n.path);

    let mut c = cfg.initial_field(mesh)?;
    let mut level = LevelGeometry::new(curve, 0.0, mesh)?;
    let mut snapshots = Vec::new();
    let mut diagnostics = Vec::with_capacity(cfg.steps + 1);

    let record = |k: usize, c: &FieldCoeffs, lv: &LevelGeometry| -> Result<StepDiagnostics> {
        Ok(StepDiagnostics {
            step: k,
            time: cfg.time(k),
            weighted_mass: crate::geometry::weighted_mass(c, &lv.curve)?,
            l2_norm: l2_norm(c, mesh)?,
        })
    };

    let d0 = record(0, &c, &level)?;
    let mut max_l2 = d0.l2_norm;
    let mut energy = EnergyBudget {
        sup_energy: level.mass.quadratic_form(c.values())?,
        ..Default::default()
    };
    diagnostics.push(d0);
    for (i, _) in snap_steps.iter().enumerate().filter(|(_, &k)| k == 0) {
        snapshots.push((i, Snapshot { step: 0, time: 0.0, field: c.clone() }));
    }

    for k in 1..=cfg.steps {
        let next = advance(&level, &c, curve, cfg, mesh, noise, k)?;
        let diff: Vec<f64> = next
            .field
            .values()
            .iter()
            .zip(c.values())
            .map(|(a, b)| a - b)
            .collect();
        energy.increment_sum += level.mass.quadratic_form(&diff)?;
        energy.gradient_sum += cfg.dt * next.level.stiffness.quadratic_form(next.field.values())?;
        energy.sup_energy = energy
            .sup_energy
            .max(next.level.mass.quadratic_form(next.field.values())?);

        c = next.field;
        level = next.level;
        let d = record(k, &c, &level)?;
        max_l2 = max_l2.max(d.l2_norm);
        diagnostics.push(d);
        for (i, _) in snap_steps.iter().enumerate().filter(|(_, &s)| s == k) {
            snapshots.push((
                i,
                Snapshot {
                    step: k,
                    time: cfg.time(k),
                    field: c.clone(),
                },
            ));
        }
    }
    // keep the caller's ordering of snapshot times
    snapshots.sort_by_key(|(i, _)| *i);

    Ok(Trajectory {
        path,
        snapshots: snapshots.into_iter().map(|(_, s)| s).collect(),
        diagnostics,
        max_l2,
        energy,
        final_field: c,
    })
}

/// Final field of one path without per-step bookkeeping.
pub fn run_to_final(
    cfg: &StepperConfig,
    curve: &CurvePath,
    mesh: &Mesh,
    noise: Option<PathNoise<'_>>,
) -> Result<FieldCoeffs> {
    if let Some(n) = &noise {
        check_noise_grid(n, cfg)?;
    }
    let mut c = cfg.initial_field(mesh)?;
    let mut level = LevelGeometry::new(curve, 0.0, mesh)?;
    for k in 1..=cfg.steps {
        let next = advance(&level, &c, curve, cfg, mesh, noise, k)?;
        c = next.field;
        level = next.level;
    }
    Ok(c)
}
