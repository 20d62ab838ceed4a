//! JSON run configuration.
//!
//! Tagged sections use `{"kind": ..., "params": {...}}`; unknown kinds and
//! unknown fields are rejected when the document is parsed, range checks
//! happen in [`RunConfig::validate`].

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::experiments::{ConvergenceStudy, NoiseSettings, Physics, StudyMode, VanishStudy};
use crate::geometry::CurvePath;
use crate::noise::{NoiseSpectrum, SigmaSpec};
use crate::stepper::{Advection, InitialCondition, Reaction};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub curve: CurveConfig,
    pub physics: PhysicsConfig,
    pub noise: NoiseConfig,
    pub grid: GridConfig,
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vanish: Option<VanishConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case", deny_unknown_fields)]
pub enum CurveConfig {
    StationaryCircle { radius: f64 },
    ShrinkingCircle,
    Flower,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsConfig {
    #[serde(rename = "D")]
    pub diffusion: f64,
    pub reaction: ReactionConfig,
    pub advection: Option<AdvectionConfig>,
    pub initial: InitialConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReactionConfig {
    None,
    /// `rate · c`
    Linear { rate: f64 },
    /// `scale · c (1 - c)(c - root)`
    Bistable { scale: f64, root: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case", deny_unknown_fields)]
pub enum AdvectionConfig {
    Constant { value: f64 },
    /// `amplitude · sin(frequency · x)`
    Sine { amplitude: f64, frequency: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConfig {
    Constant { value: f64 },
    /// `amplitude · exp(-sharpness/(4π²) (x - center)²)`; `center` defaults to π.
    Gaussian {
        amplitude: f64,
        sharpness: f64,
        #[serde(default = "default_center")]
        center: f64,
    },
    /// `amplitude · cos(frequency · x)`
    Cosine { amplitude: f64, frequency: f64 },
}

fn default_center() -> f64 {
    PI
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SigmaConfig {
    Constant { sigma_bar: f64 },
    LogisticClip { sigma_bar: f64 },
    LinearClamp { sigma_bar: f64 },
}

impl From<SigmaConfig> for SigmaSpec {
    fn from(s: SigmaConfig) -> Self {
        match s {
            SigmaConfig::Constant { sigma_bar } => SigmaSpec::Constant { sigma_bar },
            SigmaConfig::LogisticClip { sigma_bar } => SigmaSpec::LogisticClip { sigma_bar },
            SigmaConfig::LinearClamp { sigma_bar } => SigmaSpec::LinearClamp { sigma_bar },
        }
    }
}

/// Noise truncation: a count, or `"auto"` for `2N + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ModesRaw", into = "ModesRaw")]
pub enum Modes {
    Auto,
    Count(usize),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ModesRaw {
    Count(usize),
    Text(String),
}

impl TryFrom<ModesRaw> for Modes {
    type Error = String;

    fn try_from(raw: ModesRaw) -> std::result::Result<Self, String> {
        match raw {
            ModesRaw::Count(n) => Ok(Modes::Count(n)),
            ModesRaw::Text(s) if s == "auto" => Ok(Modes::Auto),
            ModesRaw::Text(s) => Err(format!("L must be a positive integer or \"auto\", got {s:?}")),
        }
    }
}

impl From<Modes> for ModesRaw {
    fn from(m: Modes) -> Self {
        match m {
            Modes::Auto => ModesRaw::Text("auto".into()),
            Modes::Count(n) => ModesRaw::Count(n),
        }
    }
}

impl Modes {
    pub fn resolve(&self, n: usize) -> usize {
        match *self {
            Modes::Auto => NoiseSpectrum::auto_modes(n),
            Modes::Count(l) => l,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub b1: f64,
    pub rbar: f64,
    pub sigma: SigmaConfig,
    #[serde(rename = "L")]
    pub modes: Modes,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "N")]
    pub nodes: usize,
    pub dt: f64,
    #[serde(rename = "T")]
    pub final_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    #[serde(rename = "S")]
    pub samples: usize,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub snapshots: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeConfig {
    Temporal,
    Spacetime,
}

impl From<ModeConfig> for StudyMode {
    fn from(m: ModeConfig) -> Self {
        match m {
            ModeConfig::Temporal => StudyMode::Temporal,
            ModeConfig::Spacetime => StudyMode::SpaceTime,
        }
    }
}

/// Ladder of a convergence study. The reference run uses `grid.N`,
/// `grid.dt`, `grid.T` and `sampling`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<ModeConfig>,
    pub ladder: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VanishConfig {
    pub threshold: f64,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(format!("{name} must be a positive number, got {v}")))
    }
}

fn non_negative(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(format!("{name} must be >= 0, got {v}")))
    }
}

fn finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(format!("{name} must be finite, got {v}")))
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        match self.curve {
            CurveConfig::StationaryCircle { radius } => positive("curve radius", radius)?,
            CurveConfig::ShrinkingCircle | CurveConfig::Flower => {
                // both parametrizations degenerate at t = 3
                if self.grid.final_time >= 3.0 {
                    return Err(Error::config("the shrinking curves collapse at t = 3; T must be < 3"));
                }
            }
        }
        non_negative("D", self.physics.diffusion)?;
        match self.physics.reaction {
            ReactionConfig::None => {}
            ReactionConfig::Linear { rate } => finite("reaction rate", rate)?,
            ReactionConfig::Bistable { scale, root } => {
                finite("reaction scale", scale)?;
                finite("reaction root", root)?;
            }
        }
        match self.physics.advection {
            None => {}
            Some(AdvectionConfig::Constant { value }) => finite("advection value", value)?,
            Some(AdvectionConfig::Sine { amplitude, frequency }) => {
                finite("advection amplitude", amplitude)?;
                finite("advection frequency", frequency)?;
            }
        }
        match self.physics.initial {
            InitialConfig::Constant { value } => finite("initial value", value)?,
            InitialConfig::Gaussian { amplitude, sharpness, center } => {
                finite("initial amplitude", amplitude)?;
                non_negative("initial sharpness", sharpness)?;
                finite("initial center", center)?;
            }
            InitialConfig::Cosine { amplitude, frequency } => {
                finite("initial amplitude", amplitude)?;
                finite("initial frequency", frequency)?;
            }
        }
        non_negative("b1", self.noise.b1)?;
        positive("rbar", self.noise.rbar)?;
        non_negative("sigma_bar", SigmaSpec::from(self.noise.sigma).sigma_bar())?;
        if self.noise.modes == Modes::Count(0) {
            return Err(Error::config("L must be >= 1"));
        }
        if self.grid.nodes < 3 {
            return Err(Error::config(format!("N must be >= 3, got {}", self.grid.nodes)));
        }
        positive("dt", self.grid.dt)?;
        positive("T", self.grid.final_time)?;
        crate::stepper::steps_for(self.grid.final_time, self.grid.dt)?;
        if self.sampling.samples == 0 {
            return Err(Error::config("S must be >= 1"));
        }
        for &t in &self.output.snapshots {
            if !(t >= 0.0 && t <= self.grid.final_time * (1.0 + 1e-12)) {
                return Err(Error::config(format!("snapshot time {t} outside [0, T]")));
            }
        }
        if let Some(c) = &self.convergence {
            if c.ladder.is_empty() || c.ladder.contains(&0) {
                return Err(Error::config("convergence ladder needs factors >= 1"));
            }
        }
        if let Some(v) = &self.vanish {
            positive("vanish threshold", v.threshold)?;
        }
        Ok(())
    }

    pub fn curve_path(&self) -> CurvePath {
        match self.curve {
            CurveConfig::StationaryCircle { radius } => CurvePath::StationaryCircle { radius },
            CurveConfig::ShrinkingCircle => CurvePath::ShrinkingCircle,
            CurveConfig::Flower => CurvePath::Flower,
        }
    }

    pub fn physics(&self) -> Physics {
        let p = &self.physics;
        Physics {
            curve: self.curve_path(),
            diffusion: p.diffusion,
            advection: match p.advection {
                None => Advection::None,
                Some(AdvectionConfig::Constant { value }) => Advection::Constant { value },
                Some(AdvectionConfig::Sine { amplitude, frequency }) => {
                    Advection::Sine { amplitude, frequency }
                }
            },
            reaction: match p.reaction {
                ReactionConfig::None => Reaction::None,
                ReactionConfig::Linear { rate } => Reaction::Linear { rate },
                ReactionConfig::Bistable { scale, root } => Reaction::Bistable { scale, root },
            },
            initial: match p.initial {
                InitialConfig::Constant { value } => InitialCondition::Constant { value },
                InitialConfig::Gaussian { amplitude, sharpness, center } => {
                    InitialCondition::Gaussian { amplitude, sharpness, center }
                }
                InitialConfig::Cosine { amplitude, frequency } => {
                    InitialCondition::Cosine { amplitude, frequency }
                }
            },
        }
    }

    pub fn noise_settings(&self) -> NoiseSettings {
        NoiseSettings {
            b1: self.noise.b1,
            rbar: self.noise.rbar,
            sigma: self.noise.sigma.into(),
            modes: match self.noise.modes {
                Modes::Auto => None,
                Modes::Count(l) => Some(l),
            },
        }
    }

    /// Truncation `L` for the finest mesh `grid.N`.
    pub fn modes(&self) -> usize {
        self.noise.modes.resolve(self.grid.nodes)
    }

    /// The convergence study described by the `convergence` section;
    /// `mode` overrides the section's own mode.
    pub fn convergence_study(&self, mode: Option<StudyMode>) -> Result<ConvergenceStudy> {
        let c = self
            .convergence
            .as_ref()
            .ok_or_else(|| Error::config("config has no convergence section"))?;
        let mode = mode
            .or(c.mode.map(StudyMode::from))
            .ok_or_else(|| Error::config("convergence mode not given (config or --mode)"))?;
        Ok(ConvergenceStudy {
            physics: self.physics(),
            noise: self.noise_settings(),
            n_ref: self.grid.nodes,
            dt_ref: self.grid.dt,
            final_time: self.grid.final_time,
            samples: self.sampling.samples,
            master_seed: self.sampling.master_seed,
            ladder: c.ladder.clone(),
            mode,
        })
    }

    pub fn vanish_study(&self) -> Result<VanishStudy> {
        let v = self
            .vanish
            .ok_or_else(|| Error::config("config has no vanish section"))?;
        Ok(VanishStudy {
            physics: self.physics(),
            noise: self.noise_settings(),
            nodes: self.grid.nodes,
            dt: self.grid.dt,
            final_time: self.grid.final_time,
            samples: self.sampling.samples,
            master_seed: self.sampling.master_seed,
            threshold: v.threshold,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "curve": {"kind": "stationary_circle", "params": {"radius": 1.0}},
        "physics": {
            "D": 0.1,
            "reaction": {"kind": "none"},
            "advection": null,
            "initial": {"kind": "cosine", "params": {"amplitude": 1.0, "frequency": 1.0}}
        },
        "noise": {"b1": 0.0, "rbar": 1.0, "sigma": {"kind": "constant", "sigma_bar": 0.0}, "L": "auto"},
        "grid": {"N": 16, "dt": 0.01, "T": 0.1},
        "sampling": {"S": 1, "master_seed": 7}
    }"#;

    #[test]
    fn parses_minimal_document() {
        let cfg = RunConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.modes(), 33);
        assert_eq!(cfg.curve_path().name(), "stationary_circle");
        let back = RunConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unit_curve_kinds_accept_missing_params() {
        let text = MINIMAL.replace(
            r#"{"kind": "stationary_circle", "params": {"radius": 1.0}}"#,
            r#"{"kind": "flower"}"#,
        );
        assert_eq!(RunConfig::from_json(&text).unwrap().curve, CurveConfig::Flower);
    }

    #[test]
    fn rejects_unknown_kinds_and_fields() {
        let bad_kind = MINIMAL.replace("\"cosine\"", "\"square\"");
        assert!(matches!(RunConfig::from_json(&bad_kind), Err(Error::Json(_))));
        let bad_field = MINIMAL.replace("\"master_seed\": 7", "\"master_seed\": 7, \"x\": 1");
        assert!(matches!(RunConfig::from_json(&bad_field), Err(Error::Json(_))));
        let bad_modes = MINIMAL.replace("\"auto\"", "\"many\"");
        assert!(RunConfig::from_json(&bad_modes).is_err());
    }

    #[test]
    fn range_checks() {
        let bad_n = MINIMAL.replace("\"N\": 16", "\"N\": 2");
        assert!(matches!(RunConfig::from_json(&bad_n), Err(Error::Config(_))));
        let bad_grid = MINIMAL.replace("\"dt\": 0.01", "\"dt\": 0.03");
        assert!(matches!(RunConfig::from_json(&bad_grid), Err(Error::Config(_))));
        let bad_d = MINIMAL.replace("\"D\": 0.1", "\"D\": -1.0");
        assert!(matches!(RunConfig::from_json(&bad_d), Err(Error::Config(_))));
    }
}
