//! Geometric Ritz projection onto the piecewise-linear space.
//!
//! `R_h z` is the unique element of `S_h` with
//!
//! * `∫ R_h z ds = ∫ z ds`, and
//! * `⟨∂_s R_h z, ∂_s φ⟩_{L²(ds)} = ⟨∂_s z, ∂_s φ⟩_{L²(ds)}` for all hats `φ`,
//!
//! where `ds = |u_x(t, x)| dx` is the length element of the smooth curve.
//! All integrals use 5-point Gauss-Legendre per element; the kernel of the
//! stiffness form is removed with one Lagrange multiplier.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::experiments::loglog_slope;
use crate::geometry::{CurvePath, FieldCoeffs, Mesh};
use crate::quadrature::gauss5;
use crate::{Error, Result};

/// A periodic scalar function together with its derivative.
#[derive(Clone)]
pub struct SmoothFn {
    value: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    derivative: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl fmt::Debug for SmoothFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SmoothFn")
    }
}

impl SmoothFn {
    pub fn new(
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
        derivative: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            value: Arc::new(value),
            derivative: Arc::new(derivative),
        }
    }

    /// `sin(n x)`
    pub fn sine(n: f64) -> Self {
        Self::new(move |x| (n * x).sin(), move |x| n * (n * x).cos())
    }

    pub fn constant(c: f64) -> Self {
        Self::new(move |_| c, |_| 0.0)
    }

    /// The piecewise-linear function with the given nodal values.
    ///
    /// The derivative is the elementwise slope; it is only evaluated at
    /// element-interior quadrature points.
    pub fn from_field(field: &FieldCoeffs, mesh: &Mesh) -> Self {
        let f = field.clone();
        let m = mesh.clone();
        let values = field.values().to_vec();
        let h = mesh.h();
        let n = mesh.len();
        Self::new(
            move |x| f.eval(&m, x),
            move |x| {
                let cell = ((x.rem_euclid(2.0 * std::f64::consts::PI) / h).floor() as usize).min(n - 1);
                // element between one-based nodes `cell` and `cell + 1`
                let left = values[(cell + n - 1) % n];
                let right = values[cell % n];
                (right - left) / h
            },
        )
    }

    pub fn value(&self, x: f64) -> f64 {
        (self.value)(x)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        (self.derivative)(x)
    }
}

#[derive(Debug, Clone)]
pub struct RitzProjection {
    pub coeffs: FieldCoeffs,
    /// 2-norm condition number of the bordered system.
    pub condition: f64,
}

/// Left end of the element to the left of slot `e`.
fn element_start(e: usize, mesh: &Mesh) -> f64 {
    e as f64 * mesh.h()
}

/// Compute `R_h z` at time `t`.
pub fn ritz_project(z: &SmoothFn, curve: &CurvePath, t: f64, mesh: &Mesh) -> Result<RitzProjection> {
    let n = mesh.len();
    let h = mesh.h();
    let mut a = DMatrix::<f64>::zeros(n + 1, n + 1);
    let mut rhs = DVector::<f64>::zeros(n + 1);
    let mut mean_target = 0.0;

    for e in 0..n {
        let left = mesh.prev(e);
        let x0 = element_start(e, mesh);
        let mut inv_speed = 0.0;
        let mut grad = 0.0;
        let mut m_left = 0.0;
        let mut m_right = 0.0;
        for (s, x, w) in gauss5(x0, x0 + h) {
            let speed = curve.speed(t, x);
            if !(speed > 0.0 && speed.is_finite()) {
                return Err(Error::Singular(format!(
                    "length element {speed} at x = {x}"
                )));
            }
            let zx = z.derivative(x);
            let zv = z.value(x);
            if !(zx.is_finite() && zv.is_finite()) {
                return Err(Error::NonFinite {
                    what: "projected function",
                    index: e,
                });
            }
            inv_speed += w / speed;
            grad += w * zx / speed;
            m_left += w * (1.0 - s) * speed;
            m_right += w * s * speed;
            mean_target += w * zv * speed;
        }
        let k = inv_speed / (h * h);
        a[(e, e)] += k;
        a[(left, left)] += k;
        a[(e, left)] -= k;
        a[(left, e)] -= k;
        rhs[e] += grad / h;
        rhs[left] -= grad / h;
        a[(e, n)] += m_right;
        a[(n, e)] += m_right;
        a[(left, n)] += m_left;
        a[(n, left)] += m_left;
    }
    rhs[n] = mean_target;

    let sv = a.clone().singular_values();
    let smax = sv.max();
    let smin = sv.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };

    let sol = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("bordered Ritz system".into()))?;
    let coeffs: Vec<f64> = sol.iter().take(n).copied().collect();
    if let Some(i) = coeffs.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "Ritz coefficients",
            index: i,
        });
    }
    Ok(RitzProjection {
        coeffs: FieldCoeffs::new(coeffs),
        condition,
    })
}

/// Errors of a piecewise-linear approximation `coeffs` of `z` in the curve
/// norms: `(‖z - z_h‖_{L²(ds)}, ‖∂_s(z - z_h)‖_{L²(ds)})`.
///
/// Uses 5-point Gauss on four sub-intervals per element, a finer rule than
/// the one used to build the projection.
pub fn curve_errors(
    z: &SmoothFn,
    coeffs: &FieldCoeffs,
    curve: &CurvePath,
    t: f64,
    mesh: &Mesh,
) -> Result<(f64, f64)> {
    let n = mesh.len();
    coeffs.check_len(n)?;
    let h = mesh.h();
    let c = coeffs.values();
    let mut l2 = 0.0;
    let mut h1 = 0.0;
    for e in 0..n {
        let (cl, cr) = (c[mesh.prev(e)], c[e]);
        let slope = (cr - cl) / h;
        let x0 = element_start(e, mesh);
        for sub in 0..4 {
            let a = x0 + sub as f64 * h / 4.0;
            for (_, x, w) in gauss5(a, a + h / 4.0) {
                let s = (x - x0) / h;
                let speed = curve.speed(t, x);
                let ev = z.value(x) - (cl + s * (cr - cl));
                let ed = z.derivative(x) - slope;
                l2 += w * ev * ev * speed;
                h1 += w * ed * ed / speed;
            }
        }
    }
    Ok((l2.sqrt(), h1.sqrt()))
}

/// `(∫ z_h ds, ∫ z ds)` with the projection rule.
pub fn curve_means(
    z: &SmoothFn,
    coeffs: &FieldCoeffs,
    curve: &CurvePath,
    t: f64,
    mesh: &Mesh,
) -> Result<(f64, f64)> {
    let n = mesh.len();
    coeffs.check_len(n)?;
    let h = mesh.h();
    let c = coeffs.values();
    let (mut discrete, mut exact) = (0.0, 0.0);
    for e in 0..n {
        let (cl, cr) = (c[mesh.prev(e)], c[e]);
        let x0 = element_start(e, mesh);
        for (s, x, w) in gauss5(x0, x0 + h) {
            let speed = curve.speed(t, x);
            discrete += w * (cl + s * (cr - cl)) * speed;
            exact += w * z.value(x) * speed;
        }
    }
    Ok((discrete, exact))
}

/// Residual of Galerkin orthogonality against every hat:
/// `max_i |⟨∂_s(z - z_h), ∂_s φ_i⟩_{L²(ds)}|`, with the projection rule.
pub fn galerkin_residual(
    z: &SmoothFn,
    coeffs: &FieldCoeffs,
    curve: &CurvePath,
    t: f64,
    mesh: &Mesh,
) -> Result<f64> {
    let n = mesh.len();
    coeffs.check_len(n)?;
    let h = mesh.h();
    let c = coeffs.values();
    let mut r = vec![0.0; n];
    for e in 0..n {
        let left = mesh.prev(e);
        let slope = (c[e] - c[left]) / h;
        let x0 = element_start(e, mesh);
        let g: f64 = gauss5(x0, x0 + h)
            .map(|(_, x, w)| w * (z.derivative(x) - slope) / curve.speed(t, x))
            .sum::<f64>()
            / h;
        r[e] += g;
        r[left] -= g;
    }
    Ok(r.iter().fold(0.0, |m, v| m.max(v.abs())))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RitzRow {
    pub nodes: usize,
    pub h: f64,
    pub l2_error: f64,
    pub h1_error: f64,
    pub condition: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RitzReport {
    pub rows: Vec<RitzRow>,
    /// Least-squares slope of `log(L² error)` against `log h`; `None` when
    /// some error is at rounding level.
    pub l2_slope: Option<f64>,
    pub h1_slope: Option<f64>,
}

const ROUNDING_FLOOR: f64 = 1e-12;

pub fn ritz_convergence_report(
    z: &SmoothFn,
    curve: &CurvePath,
    t: f64,
    levels: &[usize],
) -> Result<RitzReport> {
    if levels.len() < 3 {
        return Err(Error::config("a convergence report needs at least 3 levels"));
    }
    if levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config("mesh levels must be strictly ascending"));
    }
    let rows = levels
        .iter()
        .map(|&n| {
            let mesh = Mesh::uniform(n)?;
            let proj = ritz_project(z, curve, t, &mesh)?;
            let (l2, h1) = curve_errors(z, &proj.coeffs, curve, t, &mesh)?;
            Ok(RitzRow {
                nodes: n,
                h: mesh.h(),
                l2_error: l2,
                h1_error: h1,
                condition: proj.condition,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let hs: Vec<f64> = rows.iter().map(|r| r.h).collect();
    let slope = |errs: Vec<f64>| {
        if errs.iter().any(|&e| e <= ROUNDING_FLOOR) {
            None
        } else {
            loglog_slope(&hs, &errs)
        }
    };
    let l2_slope = slope(rows.iter().map(|r| r.l2_error).collect());
    let h1_slope = slope(rows.iter().map(|r| r.h1_error).collect());
    Ok(RitzReport {
        rows,
        l2_slope,
        h1_slope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::interpolate_nodal;

    #[test]
    fn constants_are_fixed() {
        let mesh = Mesh::uniform(16).unwrap();
        let p = ritz_project(&SmoothFn::constant(2.5), &CurvePath::Flower, 0.5, &mesh).unwrap();
        for v in p.coeffs.values() {
            assert!((v - 2.5).abs() < 1e-12);
        }
        assert!(p.condition.is_finite());
    }

    #[test]
    fn idempotent_on_fe_space() {
        let mesh = Mesh::uniform(24).unwrap();
        let zh = interpolate_nodal(|x| (2.0 * x).cos() + 0.3 * x.sin(), &mesh).unwrap();
        let z = SmoothFn::from_field(&zh, &mesh);
        for curve in [CurvePath::unit_circle(), CurvePath::Flower] {
            let p = ritz_project(&z, &curve, 0.5, &mesh).unwrap();
            for (a, b) in p.coeffs.values().iter().zip(zh.values()) {
                assert!((a - b).abs() < 1e-10, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn sine_on_circle_is_nodally_close() {
        let mesh = Mesh::uniform(64).unwrap();
        let p = ritz_project(&SmoothFn::sine(1.0), &CurvePath::unit_circle(), 0.0, &mesh).unwrap();
        for (i, v) in p.coeffs.values().iter().enumerate() {
            assert!((v - mesh.node(i).sin()).abs() < 1e-3);
        }
    }

    #[test]
    fn report_rejects_bad_levels() {
        let z = SmoothFn::sine(1.0);
        let c = CurvePath::unit_circle();
        assert!(ritz_convergence_report(&z, &c, 0.0, &[8, 16]).is_err());
        assert!(ritz_convergence_report(&z, &c, 0.0, &[16, 8, 32]).is_err());
    }
}
