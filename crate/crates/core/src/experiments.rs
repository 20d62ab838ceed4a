//! Strong-convergence studies, extinction probability and the a-priori
//! energy monitor.
//!
//! Path `s` always draws from lattice key `path = s`, in the reference run
//! and in every rung, so all resolutions see the same Brownian sample path.
//! Paths run in parallel; results are reduced in ascending path order.

use std::time::Instant;

use rayon::prelude::*;

use crate::geometry::{l2_norm, l2_norm_squared_unchecked, CurvePath, FieldCoeffs, Mesh};
use crate::noise::{BrownianLattice, NoiseForcing, NoiseSpectrum, SigmaSpec};
use crate::stepper::{
    run_path, run_to_final, steps_for, Advection, InitialCondition, PathNoise, Reaction,
    StepperConfig,
};
use crate::{Error, Result};

/// Fraction of blown-up paths above which a rung is dropped from a table.
pub const MAX_BLOWUP_FRACTION: f64 = 0.1;

/// Curve and deterministic coefficients of the problem.
#[derive(Debug, Clone)]
pub struct Physics {
    pub curve: CurvePath,
    pub diffusion: f64,
    pub advection: Advection,
    pub reaction: Reaction,
    pub initial: InitialCondition,
}

impl Physics {
    pub fn stepper(&self, dt: f64, final_time: f64) -> Result<StepperConfig> {
        StepperConfig::new(
            dt,
            final_time,
            self.diffusion,
            self.advection.clone(),
            self.reaction.clone(),
            self.initial.clone(),
        )
    }
}

/// Noise parameters; `modes = None` means `L = 2N + 1` of the finest mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSettings {
    pub b1: f64,
    pub rbar: f64,
    pub sigma: SigmaSpec,
    pub modes: Option<usize>,
}

impl NoiseSettings {
    pub fn spectrum_for(&self, finest_nodes: usize) -> Result<NoiseSpectrum> {
        let modes = self
            .modes
            .unwrap_or_else(|| NoiseSpectrum::auto_modes(finest_nodes));
        NoiseSpectrum::new(self.b1, self.rbar, modes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyMode {
    /// Fixed mesh, `Δt = p Δt_ref`.
    Temporal,
    /// `Δt = p Δt_ref` and `h = p h_ref` on nested meshes.
    SpaceTime,
}

impl StudyMode {
    pub fn name(&self) -> &'static str {
        match self {
            StudyMode::Temporal => "temporal",
            StudyMode::SpaceTime => "spacetime",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConvergenceStudy {
    pub physics: Physics,
    pub noise: NoiseSettings,
    pub n_ref: usize,
    pub dt_ref: f64,
    pub final_time: f64,
    pub samples: usize,
    pub master_seed: u64,
    /// Aggregation factors `p`, in table order (coarsest first, usually).
    pub ladder: Vec<usize>,
    pub mode: StudyMode,
}

impl ConvergenceStudy {
    fn validate(&self) -> Result<usize> {
        if self.samples == 0 {
            return Err(Error::config("S must be >= 1"));
        }
        if self.ladder.is_empty() {
            return Err(Error::config("ladder must contain at least one factor"));
        }
        let m_ref = steps_for(self.final_time, self.dt_ref)?;
        for &p in &self.ladder {
            if p == 0 || m_ref % p != 0 {
                return Err(Error::config(format!(
                    "factor {p} does not divide the {m_ref} reference steps"
                )));
            }
            if self.mode == StudyMode::SpaceTime && !self.n_ref.is_multiple_of(p) {
                return Err(Error::NonNested {
                    reference: self.n_ref,
                    coarse: self.n_ref / p.max(1),
                });
            }
            if self.mode == StudyMode::SpaceTime && self.n_ref / p < 3 {
                return Err(Error::TooFewNodes(self.n_ref / p));
            }
        }
        Ok(m_ref)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRow {
    pub factor: usize,
    pub h: f64,
    pub dt: f64,
    /// `None` when the rung was dropped for blow-ups.
    pub error: Option<f64>,
    pub eoc: Option<f64>,
    pub blowups: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableMeta {
    pub mode: StudyMode,
    pub master_seed: u64,
    pub samples: usize,
    pub modes: usize,
    pub reference_blowups: usize,
    pub runtime_secs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorTable {
    pub rows: Vec<ErrorRow>,
    pub meta: TableMeta,
}

/// `log(E_prev/E) / log(x_prev/x)`.
pub fn eoc(e_prev: f64, e: f64, x_prev: f64, x: f64) -> Option<f64> {
    if e_prev > 0.0 && e > 0.0 && x_prev != x {
        Some((e_prev / e).ln() / (x_prev / x).ln())
    } else {
        None
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    if xs.iter().chain(ys).any(|&v| !(v > 0.0 && v.is_finite())) {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}

impl ErrorTable {
    /// Fill the eoc column from the error column. The ratio uses `Δt` for
    /// temporal studies and `h` for space-time studies.
    pub fn recompute_eoc(&mut self) {
        let mode = self.meta.mode;
        let key = |r: &ErrorRow| match mode {
            StudyMode::Temporal => r.dt,
            StudyMode::SpaceTime => r.h,
        };
        let mut prev: Option<(f64, f64)> = None;
        for row in &mut self.rows {
            row.eoc = match (prev, row.error) {
                (Some((ep, xp)), Some(e)) => eoc(ep, e, xp, key(row)),
                _ => None,
            };
            prev = row.error.map(|e| (e, key(row)));
        }
    }

    pub fn eocs(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.eoc).collect()
    }

    pub fn mean_eoc(&self) -> Option<f64> {
        let e = self.eocs();
        if e.is_empty() {
            None
        } else {
            Some(e.iter().sum::<f64>() / e.len() as f64)
        }
    }

    /// Least-squares order over all retained rungs.
    pub fn fitted_eoc(&self) -> Option<f64> {
        let (xs, ys): (Vec<f64>, Vec<f64>) = self
            .rows
            .iter()
            .filter_map(|r| {
                let x = match self.meta.mode {
                    StudyMode::Temporal => r.dt,
                    StudyMode::SpaceTime => r.h,
                };
                r.error.map(|e| (x, e))
            })
            .unzip();
        loglog_slope(&xs, &ys)
    }

    /// Number of refinements (adjacent retained rungs, ordered coarse to
    /// fine) where the error does not decrease.
    pub fn inversions(&self) -> usize {
        let mut pts: Vec<(f64, f64)> = self
            .rows
            .iter()
            .filter_map(|r| r.error.map(|e| (r.dt, e)))
            .collect();
        pts.sort_by(|a, b| b.0.total_cmp(&a.0));
        pts.windows(2).filter(|w| w[1].1 >= w[0].1).count()
    }
}

/// `E_S = (1/S) Σ_s ‖c_s - c_ref,s‖_H`, the mean of per-path norms.
pub fn error_es(coarse: &[FieldCoeffs], reference: &[FieldCoeffs], ref_mesh: &Mesh) -> Result<f64> {
    if coarse.len() != reference.len() {
        return Err(Error::DimensionMismatch {
            expected: reference.len(),
            found: coarse.len(),
        });
    }
    if coarse.is_empty() {
        return Err(Error::config("E_S needs at least one path"));
    }
    let mut total = 0.0;
    for (c, r) in coarse.iter().zip(reference) {
        c.check_len(ref_mesh.len())?;
        r.check_len(ref_mesh.len())?;
        let d: Vec<f64> = c.values().iter().zip(r.values()).map(|(a, b)| a - b).collect();
        total += l2_norm_squared_unchecked(&d, ref_mesh.h()).sqrt();
    }
    Ok(total / coarse.len() as f64)
}

/// Linear interpolation from the mesh with `N_ref / p` nodes onto the
/// reference mesh. Coarse node `j` coincides with reference node `j p`.
pub fn prolongate(coarse: &FieldCoeffs, p: usize, ref_mesh: &Mesh) -> Result<FieldCoeffs> {
    let n_ref = ref_mesh.len();
    if p == 0 || !n_ref.is_multiple_of(p) || coarse.len() * p != n_ref {
        return Err(Error::NonNested {
            reference: n_ref,
            coarse: coarse.len(),
        });
    }
    let n = coarse.len();
    let c = coarse.values();
    // one-based coarse node j lives in slot j - 1; node 0 ≡ node n
    let at = |j: usize| c[(j + n - 1) % n];
    let values = (1..=n_ref)
        .map(|m| {
            let j = m / p;
            let r = m % p;
            if r == 0 {
                at(j)
            } else {
                let f = r as f64 / p as f64;
                (1.0 - f) * at(j) + f * at(j + 1)
            }
        })
        .collect();
    Ok(FieldCoeffs::new(values).with_level(coarse.level()))
}

type PathOutcome = std::result::Result<FieldCoeffs, usize>;

/// Final fields of paths `0..samples`; blow-ups become `Err(path)`.
fn final_fields(
    cfg: &StepperConfig,
    curve: &CurvePath,
    mesh: &Mesh,
    forcing: &NoiseForcing,
    samples: usize,
) -> Result<Vec<PathOutcome>> {
    let results: Vec<Result<FieldCoeffs>> = (0..samples)
        .into_par_iter()
        .map(|path| {
            run_to_final(
                cfg,
                curve,
                mesh,
                Some(PathNoise {
                    forcing,
                    path,
                }),
            )
        })
        .collect();
    results
        .into_iter()
        .enumerate()
        .map(|(s, r)| match r {
            Ok(f) => Ok(Ok(f)),
            Err(Error::BlowUp { .. }) => Ok(Err(s)),
            Err(e) => Err(e),
        })
        .collect()
}

fn run_study(study: &ConvergenceStudy) -> Result<ErrorTable> {
    let start = Instant::now();
    let m_ref = study.validate()?;
    let spectrum = study.noise.spectrum_for(study.n_ref)?;
    let lattice = BrownianLattice::new(
        study.master_seed,
        study.samples,
        spectrum.modes,
        m_ref,
        study.dt_ref,
    )?;
    let ref_mesh = Mesh::uniform(study.n_ref)?;
    let curve = &study.physics.curve;

    let ref_cfg = study.physics.stepper(study.dt_ref, study.final_time)?;
    let ref_forcing = NoiseForcing::new(lattice, spectrum, study.noise.sigma, 1, &ref_mesh)?;
    let reference = final_fields(&ref_cfg, curve, &ref_mesh, &ref_forcing, study.samples)?;
    let reference_blowups = reference.iter().filter(|r| r.is_err()).count();

    let mut rows = Vec::with_capacity(study.ladder.len());
    for &p in &study.ladder {
        let dt = p as f64 * study.dt_ref;
        let cfg = study.physics.stepper(dt, study.final_time)?;
        let mesh = match study.mode {
            StudyMode::Temporal => ref_mesh.clone(),
            StudyMode::SpaceTime => Mesh::uniform(study.n_ref / p)?,
        };
        let forcing = NoiseForcing::new(lattice, spectrum, study.noise.sigma, p, &mesh)?;
        let finals = final_fields(&cfg, curve, &mesh, &forcing, study.samples)?;
        let blowups = finals.iter().filter(|r| r.is_err()).count();

        let mut coarse = Vec::new();
        let mut refs = Vec::new();
        for (c, r) in finals.into_iter().zip(&reference) {
            if let (Ok(c), Ok(r)) = (c, r) {
                let c = match study.mode {
                    StudyMode::Temporal => c,
                    StudyMode::SpaceTime => prolongate(&c, p, &ref_mesh)?,
                };
                coarse.push(c);
                refs.push(r.clone());
            }
        }
        let dropped = blowups as f64 > MAX_BLOWUP_FRACTION * study.samples as f64;
        let error = if dropped || coarse.is_empty() {
            None
        } else {
            Some(error_es(&coarse, &refs, &ref_mesh)?)
        };
        rows.push(ErrorRow {
            factor: p,
            h: mesh.h(),
            dt,
            error,
            eoc: None,
            blowups,
        });
    }

    let mut table = ErrorTable {
        rows,
        meta: TableMeta {
            mode: study.mode,
            master_seed: study.master_seed,
            samples: study.samples,
            modes: spectrum.modes,
            reference_blowups,
            runtime_secs: start.elapsed().as_secs_f64(),
        },
    };
    table.recompute_eoc();
    Ok(table)
}

/// Fixed mesh, `Δt = p Δt_ref`, all rungs on the same Brownian paths.
pub fn temporal_convergence(study: &ConvergenceStudy) -> Result<ErrorTable> {
    if study.mode != StudyMode::Temporal {
        return Err(Error::config("temporal_convergence needs mode = temporal"));
    }
    run_study(study)
}

/// Nested meshes `N_ref / p` with `Δt = p Δt_ref`; the coarse runs keep the
/// reference truncation `L`.
pub fn spacetime_convergence(study: &ConvergenceStudy) -> Result<ErrorTable> {
    if study.mode != StudyMode::SpaceTime {
        return Err(Error::config("spacetime_convergence needs mode = spacetime"));
    }
    run_study(study)
}

#[derive(Debug, Clone)]
pub struct VanishStudy {
    pub physics: Physics,
    pub noise: NoiseSettings,
    pub nodes: usize,
    pub dt: f64,
    pub final_time: f64,
    pub samples: usize,
    pub master_seed: u64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VanishReport {
    /// Vanished paths over paths that did not blow up.
    pub fraction: f64,
    pub samples: usize,
    pub threshold: f64,
    pub blowups: usize,
    /// `‖c_h^M‖_H` per path, `None` for blow-ups.
    pub norms: Vec<Option<f64>>,
}

/// Fraction of paths whose final `L²` norm is at most `threshold`.
pub fn vanish_probability(study: &VanishStudy) -> Result<VanishReport> {
    if !(study.threshold > 0.0) {
        return Err(Error::config("threshold must be > 0"));
    }
    if study.samples == 0 {
        return Err(Error::config("S must be >= 1"));
    }
    let mesh = Mesh::uniform(study.nodes)?;
    let cfg = study.physics.stepper(study.dt, study.final_time)?;
    let spectrum = study.noise.spectrum_for(study.nodes)?;
    let lattice = BrownianLattice::new(
        study.master_seed,
        study.samples,
        spectrum.modes,
        cfg.steps,
        study.dt,
    )?;
    let forcing = NoiseForcing::new(lattice, spectrum, study.noise.sigma, 1, &mesh)?;
    let finals = final_fields(&cfg, &study.physics.curve, &mesh, &forcing, study.samples)?;
    let norms = finals
        .iter()
        .map(|f| match f {
            Ok(c) => l2_norm(c, &mesh).map(Some),
            Err(_) => Ok(None),
        })
        .collect::<Result<Vec<_>>>()?;
    let blowups = norms.iter().filter(|n| n.is_none()).count();
    let valid = study.samples - blowups;
    let vanished = norms
        .iter()
        .flatten()
        .filter(|&&n| n <= study.threshold)
        .count();
    let fraction = if valid == 0 {
        f64::NAN
    } else {
        vanished as f64 / valid as f64
    };
    Ok(VanishReport {
        fraction,
        samples: study.samples,
        threshold: study.threshold,
        blowups,
        norms,
    })
}

#[derive(Debug, Clone)]
pub struct AprioriStudy {
    pub physics: Physics,
    pub noise: NoiseSettings,
    pub nodes: usize,
    pub final_time: f64,
    /// Finest step; level `j` uses `factors[j] · dt_ref`.
    pub dt_ref: f64,
    /// Coarse to fine, e.g. `[4, 2, 1]`.
    pub factors: Vec<usize>,
    pub samples: usize,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AprioriLevel {
    pub dt: f64,
    pub mean_sup_energy: f64,
    pub mean_increment_sum: f64,
    pub mean_gradient_sum: f64,
    /// Sample mean of `‖c_h^M‖²_H`.
    pub mean_final_l2_sq: f64,
    pub blowups: usize,
}

impl AprioriLevel {
    fn quantities(&self) -> [f64; 4] {
        [
            self.mean_sup_energy,
            self.mean_increment_sum,
            self.mean_gradient_sum,
            self.mean_final_l2_sq,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AprioriReport {
    pub levels: Vec<AprioriLevel>,
    /// Finer-over-coarser ratios of the four monitored means, per refinement.
    pub ratios: Vec<[f64; 4]>,
    /// Largest growth ratio tolerated before a refinement is flagged.
    pub limit: f64,
    pub flagged: bool,
}

impl AprioriReport {
    pub fn max_ratio(&self) -> f64 {
        self.ratios
            .iter()
            .flat_map(|r| r.iter().copied())
            .fold(0.0, f64::max)
    }
}

pub const APRIORI_RATIO_LIMIT: f64 = 1.5;

fn growth(coarse: f64, fine: f64) -> f64 {
    if coarse == 0.0 {
        if fine == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        fine / coarse
    }
}

/// Sample means of the discrete a-priori energy terms across step sizes.
pub fn apriori_monitor(study: &AprioriStudy) -> Result<AprioriReport> {
    if study.factors.len() < 2 {
        return Err(Error::config("the a-priori monitor needs >= 2 levels"));
    }
    if study.samples == 0 {
        return Err(Error::config("S must be >= 1"));
    }
    let mesh = Mesh::uniform(study.nodes)?;
    let m_ref = steps_for(study.final_time, study.dt_ref)?;
    let spectrum = study.noise.spectrum_for(study.nodes)?;
    let lattice = BrownianLattice::new(
        study.master_seed,
        study.samples,
        spectrum.modes,
        m_ref,
        study.dt_ref,
    )?;

    let mut levels = Vec::with_capacity(study.factors.len());
    for &p in &study.factors {
        if p == 0 || m_ref % p != 0 {
            return Err(Error::config(format!(
                "factor {p} does not divide the {m_ref} reference steps"
            )));
        }
        let dt = p as f64 * study.dt_ref;
        let cfg = study.physics.stepper(dt, study.final_time)?;
        let forcing = NoiseForcing::new(lattice, spectrum, study.noise.sigma, p, &mesh)?;
        let runs: Vec<Result<_>> = (0..study.samples)
            .into_par_iter()
            .map(|path| {
                run_path(
                    &cfg,
                    &study.physics.curve,
                    &mesh,
                    Some(PathNoise {
                        forcing: &forcing,
                        path,
                    }),
                    &[],
                )
                .map(|t| {
                    let fin = t.diagnostics.last().map_or(0.0, |d| d.l2_norm);
                    (t.energy, fin * fin)
                })
            })
            .collect();
        let mut sums = [0.0; 4];
        let mut ok = 0usize;
        let mut blowups = 0usize;
        for r in runs {
            match r {
                Ok((e, fin)) => {
                    sums[0] += e.sup_energy;
                    sums[1] += e.increment_sum;
                    sums[2] += e.gradient_sum;
                    sums[3] += fin;
                    ok += 1;
                }
                Err(Error::BlowUp { .. }) => blowups += 1,
                Err(e) => return Err(e),
            }
        }
        let denom = ok.max(1) as f64;
        levels.push(AprioriLevel {
            dt,
            mean_sup_energy: sums[0] / denom,
            mean_increment_sum: sums[1] / denom,
            mean_gradient_sum: sums[2] / denom,
            mean_final_l2_sq: sums[3] / denom,
            blowups,
        });
    }

    let ratios: Vec<[f64; 4]> = levels
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0].quantities(), w[1].quantities());
            [
                growth(a[0], b[0]),
                growth(a[1], b[1]),
                growth(a[2], b[2]),
                growth(a[3], b[3]),
            ]
        })
        .collect();
    let flagged = ratios
        .iter()
        .flatten()
        .any(|&r| !(r <= APRIORI_RATIO_LIMIT));
    Ok(AprioriReport {
        levels,
        ratios,
        limit: APRIORI_RATIO_LIMIT,
        flagged,
    })
}
