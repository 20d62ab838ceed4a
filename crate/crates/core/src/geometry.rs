//! Reference mesh on the unit circle, curve parametrizations and the
//! interpolated polygon.
//!
//! Nodes are `x_j = 2πj/N` for `j = 1..N`. Storage is zero-based: slot `i`
//! holds node `j = i + 1`, so slot `N - 1` is `x_N = 2π ≡ x_0`. Edge `i`
//! joins slots `i - 1` and `i` (cyclically); it is the element to the left of
//! node `i`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::{Error, Result};

const TWO_PI: f64 = 2.0 * PI;

/// Uniform periodic grid on `[0, 2π)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    n: usize,
    h: f64,
}

impl Mesh {
    pub fn uniform(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::TooFewNodes(n));
        }
        Ok(Self {
            n,
            h: TWO_PI / n as f64,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Position of storage slot `i`, i.e. `x_{i+1} = 2π(i+1)/N`.
    pub fn node(&self, i: usize) -> f64 {
        TWO_PI * ((i % self.n) + 1) as f64 / self.n as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    #[inline]
    pub fn next(&self, i: usize) -> usize {
        if i + 1 == self.n {
            0
        } else {
            i + 1
        }
    }

    #[inline]
    pub fn prev(&self, i: usize) -> usize {
        if i == 0 {
            self.n - 1
        } else {
            i - 1
        }
    }
}

/// Build the uniform mesh with `n` nodes.
pub fn build_uniform_mesh(n: usize) -> Result<Mesh> {
    Mesh::uniform(n)
}

pub type CurveMap = Arc<dyn Fn(f64, f64) -> [f64; 2] + Send + Sync>;

/// A time-dependent parametrization `u(t, x)` of a closed planar curve.
///
/// `tangent` is the spatial derivative `u_x`; it is only needed where the
/// smooth length element enters (Ritz projection). The polygon used by the
/// scheme only evaluates positions.
#[derive(Clone)]
pub enum CurvePath {
    StationaryCircle { radius: f64 },
    /// `(1 - t/3)(cos x, sin x)`
    ShrinkingCircle,
    /// `(1 - t/3) sin(3x) (cos x, sin x)`
    Flower,
    Custom { position: CurveMap, tangent: CurveMap },
}

impl fmt::Debug for CurvePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CurvePath::StationaryCircle { radius } => f
                .debug_struct("StationaryCircle")
                .field("radius", radius)
                .finish(),
            CurvePath::ShrinkingCircle => f.write_str("ShrinkingCircle"),
            CurvePath::Flower => f.write_str("Flower"),
            CurvePath::Custom { .. } => f.write_str("Custom"),
        }
    }
}

impl CurvePath {
    pub fn unit_circle() -> Self {
        CurvePath::StationaryCircle { radius: 1.0 }
    }

    pub fn custom(
        position: impl Fn(f64, f64) -> [f64; 2] + Send + Sync + 'static,
        tangent: impl Fn(f64, f64) -> [f64; 2] + Send + Sync + 'static,
    ) -> Self {
        CurvePath::Custom {
            position: Arc::new(position),
            tangent: Arc::new(tangent),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CurvePath::StationaryCircle { .. } => "stationary_circle",
            CurvePath::ShrinkingCircle => "shrinking_circle",
            CurvePath::Flower => "flower",
            CurvePath::Custom { .. } => "custom",
        }
    }

    pub fn position(&self, t: f64, x: f64) -> [f64; 2] {
        let (s, c) = x.sin_cos();
        match self {
            CurvePath::StationaryCircle { radius } => [radius * c, radius * s],
            CurvePath::ShrinkingCircle => {
                let a = shrink_factor(t);
                [a * c, a * s]
            }
            CurvePath::Flower => {
                let r = shrink_factor(t) * (3.0 * x).sin();
                [r * c, r * s]
            }
            CurvePath::Custom { position, .. } => position(t, x),
        }
    }

    /// `u_x(t, x)`.
    pub fn tangent(&self, t: f64, x: f64) -> [f64; 2] {
        let (s, c) = x.sin_cos();
        match self {
            CurvePath::StationaryCircle { radius } => [-radius * s, radius * c],
            CurvePath::ShrinkingCircle => {
                let a = shrink_factor(t);
                [-a * s, a * c]
            }
            CurvePath::Flower => {
                let a = shrink_factor(t);
                let (s3, c3) = (3.0 * x).sin_cos();
                [
                    a * (3.0 * c3 * c - s3 * s),
                    a * (3.0 * c3 * s + s3 * c),
                ]
            }
            CurvePath::Custom { tangent, .. } => tangent(t, x),
        }
    }

    /// Length element `|u_x(t, x)|`.
    pub fn speed(&self, t: f64, x: f64) -> f64 {
        let [a, b] = self.tangent(t, x);
        a.hypot(b)
    }
}

fn shrink_factor(t: f64) -> f64 {
    1.0 - t / 3.0
}

/// The interpolated polygon `I_h u(t, ·)` at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteCurve {
    t: f64,
    h: f64,
    vertices: Vec<[f64; 2]>,
    edge_lengths: Vec<f64>,
}

impl DiscreteCurve {
    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    /// `q[i]` is the chord length of edge `i` (slots `i-1` to `i`).
    pub fn edge_lengths(&self) -> &[f64] {
        &self.edge_lengths
    }

    /// Piecewise constant `|u_hx|` on edge `i`.
    pub fn length_element(&self, i: usize) -> f64 {
        self.edge_lengths[i] / self.h
    }

    pub fn perimeter(&self) -> f64 {
        self.edge_lengths.iter().sum()
    }

    /// Observed `(min, max)` of `q_j / h`.
    pub fn regularity_bounds(&self) -> (f64, f64) {
        self.edge_lengths
            .iter()
            .map(|q| q / self.h)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                (lo.min(r), hi.max(r))
            })
    }
}

/// Evaluate the curve at the mesh nodes and compute the polygon edge lengths.
pub fn discretize_curve(curve: &CurvePath, t: f64, mesh: &Mesh) -> Result<DiscreteCurve> {
    let n = mesh.len();
    let mut vertices = Vec::with_capacity(n);
    for i in 0..n {
        let p = curve.position(t, mesh.node(i));
        if !(p[0].is_finite() && p[1].is_finite()) {
            return Err(Error::NonFinite {
                what: "curve position",
                index: i,
            });
        }
        vertices.push(p);
    }
    let edge_lengths = (0..n)
        .map(|i| {
            let a = vertices[mesh.prev(i)];
            let b = vertices[i];
            (b[0] - a[0]).hypot(b[1] - a[1])
        })
        .collect();
    Ok(DiscreteCurve {
        t,
        h: mesh.h(),
        vertices,
        edge_lengths,
    })
}

/// Nodal coefficients of a piecewise-linear field at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldCoeffs {
    values: Vec<f64>,
    level: usize,
}

impl FieldCoeffs {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values, level: 0 }
    }

    pub fn zeros(n: usize) -> Self {
        Self::new(vec![0.0; n])
    }

    pub fn constant(n: usize, value: f64) -> Self {
        Self::new(vec![value; n])
    }

    pub fn with_level(mut self, level: usize) -> Self {
        self.level = level;
        self
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Index of the first non-finite coefficient, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.values.iter().position(|v| !v.is_finite())
    }

    /// Evaluate the piecewise-linear function at an arbitrary angle.
    pub fn eval(&self, mesh: &Mesh, x: f64) -> f64 {
        let n = mesh.len();
        let s = x.rem_euclid(TWO_PI) / mesh.h();
        let cell = (s.floor() as usize).min(n - 1);
        let frac = s - cell as f64;
        // position s lies between j = cell and j = cell + 1 (one-based nodes)
        let left = self.values[(cell + n - 1) % n];
        let right = self.values[cell % n];
        left + frac * (right - left)
    }

    pub(crate) fn check_len(&self, n: usize) -> Result<()> {
        if self.values.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: self.values.len(),
            });
        }
        Ok(())
    }
}

/// Nodal interpolant `I_h f`.
pub fn interpolate_nodal(f: impl Fn(f64) -> f64, mesh: &Mesh) -> Result<FieldCoeffs> {
    let values = mesh
        .nodes()
        .into_iter()
        .enumerate()
        .map(|(i, x)| {
            let v = f(x);
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::NonFinite {
                    what: "interpolated function",
                    index: i,
                })
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FieldCoeffs::new(values))
}

/// Exact `L²(S¹)` norm of the piecewise-linear function, unweighted.
pub fn l2_norm(c: &FieldCoeffs, mesh: &Mesh) -> Result<f64> {
    c.check_len(mesh.len())?;
    Ok(l2_norm_squared_unchecked(c.values(), mesh.h()).sqrt())
}

pub(crate) fn l2_norm_squared_unchecked(v: &[f64], h: f64) -> f64 {
    let n = v.len();
    let mut acc = 0.0;
    let mut a = v[n - 1];
    for &b in v {
        acc += a * a + a * b + b * b;
        a = b;
    }
    acc * h / 3.0
}

/// `⟨c_h |u_hx|, 1⟩`, the quantity conserved by the scheme when the
/// source terms vanish.
pub fn weighted_mass(c: &FieldCoeffs, dc: &DiscreteCurve) -> Result<f64> {
    c.check_len(dc.len())?;
    Ok(weighted_mass_unchecked(c.values(), dc.edge_lengths()))
}

pub(crate) fn weighted_mass_unchecked(c: &[f64], q: &[f64]) -> f64 {
    let n = c.len();
    (0..n)
        .map(|i| c[i] * 0.5 * (q[i] + q[(i + 1) % n]))
        .sum()
}
