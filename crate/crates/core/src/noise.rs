//! Truncated Q-Wiener noise on the reference circle.
//!
//! The covariance eigenbasis is the periodic Fourier basis
//! `g_1 = 1/√(2π)`, `g_{2n} = sin(nx)/√π`, `g_{2n+1} = cos(nx)/√π` with
//! eigenvalues `b_1` (free) and `b_{2n} = b_{2n+1} = n^{-2r̄-1}`. The noise
//! operator acts diagonally, `B(c) g_l = σ(c) √b_l g_l`.
//!
//! Brownian increments come from a [`BrownianLattice`]: a stateless keyed
//! generator that maps `(master_seed, path, mode, fine_step)` to an
//! `N(0, Δt_ref)` draw. Coarse increments are exact sums of fine ones, which
//! couples runs at different step sizes, truncations and meshes pathwise.

use std::f64::consts::PI;

use crate::geometry::{FieldCoeffs, Mesh};
use crate::{Error, Result};

/// Eigenvalue sequence of the covariance operator, truncated at `modes`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpectrum {
    /// Eigenvalue of the constant mode.
    pub b1: f64,
    /// Decay rate `r̄ > 0`.
    pub rbar: f64,
    /// Truncation index `L`.
    pub modes: usize,
}

impl NoiseSpectrum {
    pub fn new(b1: f64, rbar: f64, modes: usize) -> Result<Self> {
        if !(b1 >= 0.0 && b1.is_finite()) {
            return Err(Error::config(format!("b1 must be >= 0, got {b1}")));
        }
        if !(rbar > 0.0 && rbar.is_finite()) {
            return Err(Error::config(format!("rbar must be > 0, got {rbar}")));
        }
        if modes == 0 {
            return Err(Error::config("noise truncation L must be >= 1"));
        }
        Ok(Self { b1, rbar, modes })
    }

    /// Default truncation `L = 2N + 1` for an `N`-node mesh.
    pub fn auto_modes(n: usize) -> usize {
        2 * n + 1
    }

    /// `Σ_{l ≤ L} b_l`.
    pub fn truncated_trace(&self) -> f64 {
        (1..=self.modes).map(|l| spectrum_coeff(l, self)).sum()
    }

    /// Partial tail `Σ_{L < l ≤ L + terms} b_l`.
    pub fn tail_mass(&self, terms: usize) -> f64 {
        (self.modes + 1..=self.modes + terms)
            .map(|l| spectrum_coeff(l, self))
            .sum()
    }

    /// Integral bound on the full tail: with `n₀` the frequency of mode
    /// `L + 1`, `Σ_{l > L} b_l ≤ 2 Σ_{n ≥ n₀} n^{-2r̄-1} ≤ 2 ∫_{n₀-1}^∞ x^{-2r̄-1} dx`.
    pub fn tail_integral_bound(&self) -> f64 {
        let n0 = mode_frequency(self.modes + 1);
        if n0 <= 1 {
            return f64::INFINITY;
        }
        let lower = (n0 - 1) as f64;
        lower.powf(-2.0 * self.rbar) / self.rbar
    }
}

/// Frequency `n` of mode `l`; zero for the constant mode.
pub fn mode_frequency(l: usize) -> usize {
    l / 2
}

/// `g_l(x)`.
pub fn basis_eval(l: usize, x: f64) -> Result<f64> {
    match l {
        0 => Err(Error::InvalidMode(0)),
        1 => Ok(1.0 / (2.0 * PI).sqrt()),
        _ => {
            let n = mode_frequency(l) as f64;
            let v = if l.is_multiple_of(2) {
                (n * x).sin()
            } else {
                (n * x).cos()
            };
            Ok(v / PI.sqrt())
        }
    }
}

/// `b_l`. Mode indices start at 1; `l = 0` yields 0.
pub fn spectrum_coeff(l: usize, spec: &NoiseSpectrum) -> f64 {
    match l {
        0 => 0.0,
        1 => spec.b1,
        _ => (mode_frequency(l) as f64).powf(-2.0 * spec.rbar - 1.0),
    }
}

/// `⟨g_l, φ_i⟩_H` on a uniform mesh, in closed form.
///
/// For `l = 2n` this is `(2/(n²h√π)) (1 - cos nh) sin(n x_i)`, written as
/// `4 sin²(nh/2)` to avoid cancellation when `nh` is small; `cos` replaces
/// `sin` for `l = 2n + 1`.
pub fn basis_hat_inner(l: usize, i: usize, mesh: &Mesh) -> Result<f64> {
    let h = mesh.h();
    match l {
        0 => Err(Error::InvalidMode(0)),
        1 => Ok(h / (2.0 * PI).sqrt()),
        _ => {
            let n = mode_frequency(l) as f64;
            let xi = mesh.node(i);
            let half = (0.5 * n * h).sin();
            let factor = 4.0 * half * half / (n * n * h * PI.sqrt());
            let trig = if l.is_multiple_of(2) {
                (n * xi).sin()
            } else {
                (n * xi).cos()
            };
            Ok(factor * trig)
        }
    }
}

/// Noise intensity `σ(c)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaSpec {
    /// `σ(c) = σ̄`.
    Constant { sigma_bar: f64 },
    /// `σ(c) = max{σ̄ c (1 - c), 0}`.
    LogisticClip { sigma_bar: f64 },
    /// `σ(c) = min{max{σ̄ c, 0}, 100}`.
    LinearClamp { sigma_bar: f64 },
}

impl SigmaSpec {
    pub fn sigma_bar(&self) -> f64 {
        match *self {
            SigmaSpec::Constant { sigma_bar }
            | SigmaSpec::LogisticClip { sigma_bar }
            | SigmaSpec::LinearClamp { sigma_bar } => sigma_bar,
        }
    }

    pub fn eval(&self, c: f64) -> f64 {
        match *self {
            SigmaSpec::Constant { sigma_bar } => sigma_bar,
            SigmaSpec::LogisticClip { sigma_bar } => (sigma_bar * c * (1.0 - c)).max(0.0),
            SigmaSpec::LinearClamp { sigma_bar } => (sigma_bar * c).clamp(0.0, 100.0),
        }
    }

    /// True when `σ ≡ 0`.
    pub fn is_zero(&self) -> bool {
        self.sigma_bar() == 0.0
    }
}

// Philox4x32 constants (Salmon et al., Random123).
const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

#[inline]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = a as u64 * b as u64;
    ((p >> 32) as u32, p as u32)
}

/// Philox4x32 with 10 rounds: a keyed bijection on 128-bit counters.
pub fn philox4x32_10(counter: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut c = counter;
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(PHILOX_W0);
            k[1] = k[1].wrapping_add(PHILOX_W1);
        }
        let (hi0, lo0) = mulhilo(PHILOX_M0, c[0]);
        let (hi1, lo1) = mulhilo(PHILOX_M1, c[2]);
        c = [hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0];
    }
    c
}

/// Uniform in the open interval `(0, 1)` from 53 random bits.
#[inline]
fn open_unit(hi: u32, lo: u32) -> f64 {
    let bits = ((hi as u64) << 32 | lo as u64) >> 11;
    (bits as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Keyed standard normal: Box-Muller on the Philox output for counter
/// `(step_lo, step_hi, mode, path)` under key `(seed_lo, seed_hi)`.
pub fn keyed_standard_normal(master_seed: u64, path: u32, mode: u32, fine_step: u64) -> f64 {
    let out = philox4x32_10(
        [fine_step as u32, (fine_step >> 32) as u32, mode, path],
        [master_seed as u32, (master_seed >> 32) as u32],
    );
    let u1 = open_unit(out[0], out[1]);
    let u2 = open_unit(out[2], out[3]);
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// Deterministic table of fine Brownian increments `Δβ_l` indexed by
/// `(path, mode, fine_step)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrownianLattice {
    pub master_seed: u64,
    pub paths: usize,
    pub max_modes: usize,
    pub fine_steps: usize,
    pub dt_ref: f64,
}

impl BrownianLattice {
    pub fn new(
        master_seed: u64,
        paths: usize,
        max_modes: usize,
        fine_steps: usize,
        dt_ref: f64,
    ) -> Result<Self> {
        if !(dt_ref > 0.0 && dt_ref.is_finite()) {
            return Err(Error::config(format!("dt_ref must be > 0, got {dt_ref}")));
        }
        if paths == 0 || max_modes == 0 || fine_steps == 0 {
            return Err(Error::config(
                "lattice needs at least one path, mode and step",
            ));
        }
        if paths > u32::MAX as usize || max_modes > u32::MAX as usize {
            return Err(Error::config("lattice dimensions exceed 32-bit counters"));
        }
        Ok(Self {
            master_seed,
            paths,
            max_modes,
            fine_steps,
            dt_ref,
        })
    }

    /// Fine increment over `[fine_step·Δt_ref, (fine_step+1)·Δt_ref]`.
    /// `mode` is one-based.
    pub fn fine_increment(&self, path: usize, mode: usize, fine_step: usize) -> Result<f64> {
        self.check(path, mode, fine_step + 1)?;
        Ok(self.fine_unchecked(path, mode, fine_step))
    }

    #[inline]
    fn fine_unchecked(&self, path: usize, mode: usize, fine_step: usize) -> f64 {
        self.dt_ref.sqrt()
            * keyed_standard_normal(self.master_seed, path as u32, mode as u32, fine_step as u64)
    }

    /// Increment over coarse step `coarse_step` (zero-based) of size `p·Δt_ref`:
    /// the exact sum of the `p` fine increments it covers.
    pub fn brownian_increment(
        &self,
        path: usize,
        mode: usize,
        coarse_step: usize,
        p: usize,
    ) -> Result<f64> {
        if p == 0 {
            return Err(Error::LatticeIndex("aggregation factor must be >= 1".into()));
        }
        self.check(path, mode, coarse_step * p + p)?;
        Ok(self.coarse_unchecked(path, mode, coarse_step, p))
    }

    #[inline]
    fn coarse_unchecked(&self, path: usize, mode: usize, coarse_step: usize, p: usize) -> f64 {
        let start = coarse_step * p;
        (start..start + p)
            .map(|s| self.fine_unchecked(path, mode, s))
            .sum()
    }

    /// All increments `Δβ_{l,k}` for `l = 1..=modes` of coarse step `coarse_step`.
    pub fn increments_into(
        &self,
        path: usize,
        modes: usize,
        coarse_step: usize,
        p: usize,
        out: &mut [f64],
    ) -> Result<()> {
        if p == 0 {
            return Err(Error::LatticeIndex("aggregation factor must be >= 1".into()));
        }
        if out.len() != modes {
            return Err(Error::DimensionMismatch {
                expected: modes,
                found: out.len(),
            });
        }
        self.check(path, modes, coarse_step * p + p)?;
        for (l, slot) in (1..=modes).zip(out.iter_mut()) {
            *slot = self.coarse_unchecked(path, l, coarse_step, p);
        }
        Ok(())
    }

    fn check(&self, path: usize, mode: usize, end_step: usize) -> Result<()> {
        if path >= self.paths {
            return Err(Error::LatticeIndex(format!(
                "path {path} >= {}",
                self.paths
            )));
        }
        if mode == 0 || mode > self.max_modes {
            return Err(Error::LatticeIndex(format!(
                "mode {mode} outside 1..={}",
                self.max_modes
            )));
        }
        if end_step > self.fine_steps {
            return Err(Error::LatticeIndex(format!(
                "fine step {end_step} > {}",
                self.fine_steps
            )));
        }
        Ok(())
    }
}

/// Everything the stepper needs to form the noise load of one path.
///
/// Holds the `L × N` table of `√b_l ⟨g_l, φ_i⟩`, computed once per mesh.
#[derive(Debug, Clone)]
pub struct NoiseForcing {
    lattice: BrownianLattice,
    spectrum: NoiseSpectrum,
    sigma: SigmaSpec,
    aggregation: usize,
    n: usize,
    table: Vec<f64>,
    silent: bool,
}

impl NoiseForcing {
    pub fn new(
        lattice: BrownianLattice,
        spectrum: NoiseSpectrum,
        sigma: SigmaSpec,
        aggregation: usize,
        mesh: &Mesh,
    ) -> Result<Self> {
        if spectrum.modes > lattice.max_modes {
            return Err(Error::LatticeIndex(format!(
                "spectrum uses {} modes, lattice has {}",
                spectrum.modes, lattice.max_modes
            )));
        }
        if aggregation == 0 {
            return Err(Error::LatticeIndex("aggregation factor must be >= 1".into()));
        }
        let n = mesh.len();
        let mut table = Vec::with_capacity(spectrum.modes * n);
        for l in 1..=spectrum.modes {
            let sb = spectrum_coeff(l, &spectrum).sqrt();
            for i in 0..n {
                table.push(sb * basis_hat_inner(l, i, mesh)?);
            }
        }
        let silent = sigma.is_zero() || table.iter().all(|&v| v == 0.0);
        Ok(Self {
            lattice,
            spectrum,
            sigma,
            aggregation,
            n,
            table,
            silent,
        })
    }

    pub fn lattice(&self) -> &BrownianLattice {
        &self.lattice
    }

    pub fn spectrum(&self) -> &NoiseSpectrum {
        &self.spectrum
    }

    pub fn sigma(&self) -> &SigmaSpec {
        &self.sigma
    }

    pub fn aggregation(&self) -> usize {
        self.aggregation
    }

    /// `√b_l ⟨g_l, φ_i⟩` for one-based `l`.
    pub fn table_entry(&self, l: usize, i: usize) -> f64 {
        self.table[(l - 1) * self.n + i]
    }

    /// True when the load is identically zero.
    pub fn is_silent(&self) -> bool {
        self.silent
    }

    /// Noise load of step `k ≥ 1` (zero-based coarse step `k - 1`):
    /// `Σ_l ⟨g_l, φ_i⟩ √b_l σ(c_i) Δβ_{l,k}`.
    pub fn noise_load(&self, c_prev: &FieldCoeffs, path: usize, k: usize) -> Result<Vec<f64>> {
        c_prev.check_len(self.n)?;
        if k == 0 {
            return Err(Error::LatticeIndex("time step index starts at 1".into()));
        }
        let mut out = vec![0.0; self.n];
        if self.silent {
            return Ok(out);
        }
        let mut increments = vec![0.0; self.spectrum.modes];
        self.lattice
            .increments_into(path, self.spectrum.modes, k - 1, self.aggregation, &mut increments)?;
        for (row, &db) in self.table.chunks_exact(self.n).zip(&increments) {
            for (o, &g) in out.iter_mut().zip(row) {
                *o += g * db;
            }
        }
        for (o, &c) in out.iter_mut().zip(c_prev.values()) {
            *o *= self.sigma.eval(c);
        }
        Ok(out)
    }
}

/// Free-function form of [`NoiseForcing::noise_load`].
pub fn noise_load(
    c_prev: &FieldCoeffs,
    lattice: &BrownianLattice,
    spectrum: &NoiseSpectrum,
    sigma: &SigmaSpec,
    k: usize,
    p: usize,
    path: usize,
    mesh: &Mesh,
) -> Result<Vec<f64>> {
    NoiseForcing::new(*lattice, *spectrum, *sigma, p, mesh)?.noise_load(c_prev, path, k)
}
