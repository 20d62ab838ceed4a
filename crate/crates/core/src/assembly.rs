//! Mass and stiffness matrices of the interpolated polygon, and the explicit
//! load vectors of the time step.

use crate::geometry::{DiscreteCurve, FieldCoeffs, Mesh};
use crate::{Error, Result};

/// Symmetric cyclic tridiagonal matrix.
///
/// `off[j]` couples rows `j` and `j + 1 (mod n)`; in particular `off[n-1]`
/// is the corner entry coupling the last and first rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CyclicTridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl CyclicTridiagonal {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Result<Self> {
        if diag.len() != off.len() {
            return Err(Error::DimensionMismatch {
                expected: diag.len(),
                found: off.len(),
            });
        }
        if diag.len() < 3 {
            return Err(Error::TooFewNodes(diag.len()));
        }
        Ok(Self { diag, off })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            diag: vec![1.0; n],
            off: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// `self + alpha * other`.
    pub fn add_scaled(&self, alpha: f64, other: &CyclicTridiagonal) -> Result<Self> {
        if other.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: other.len(),
            });
        }
        let diag = self
            .diag
            .iter()
            .zip(&other.diag)
            .map(|(a, b)| a + alpha * b)
            .collect();
        let off = self
            .off
            .iter()
            .zip(&other.off)
            .map(|(a, b)| a + alpha * b)
            .collect();
        Ok(Self { diag, off })
    }

    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: v.len(),
            });
        }
        Ok(self.mul_vec_unchecked(v))
    }

    // Row i is evaluated as d_i v_i + (o_i v_{i+1} + o_{i-1} v_{i-1}); the
    // stiffness diagonal is built with the same association so that
    // constants are annihilated without rounding.
    pub(crate) fn mul_vec_unchecked(&self, v: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let ip = if i + 1 == n { 0 } else { i + 1 };
                let im = if i == 0 { n - 1 } else { i - 1 };
                self.diag[i] * v[i] + (self.off[i] * v[ip] + self.off[im] * v[im])
            })
            .collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.mul_vec_unchecked(&vec![1.0; self.len()])
    }

    /// `vᵀ A v`.
    pub fn quadratic_form(&self, v: &[f64]) -> Result<f64> {
        let av = self.mul_vec(v)?;
        Ok(av.iter().zip(v).map(|(a, b)| a * b).sum())
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            let j = (i + 1) % n;
            a[i][i] += self.diag[i];
            a[i][j] += self.off[i];
            a[j][i] += self.off[i];
        }
        a
    }
}

fn checked_edges(dc: &DiscreteCurve) -> Result<&[f64]> {
    let q = dc.edge_lengths();
    if let Some((index, &length)) = q
        .iter()
        .enumerate()
        .find(|(_, &l)| !(l > 0.0 && l.is_finite()))
    {
        return Err(Error::DegenerateEdge { index, length });
    }
    Ok(q)
}

/// `M_ij = ∫ φ_i φ_j |u_hx| dx`.
pub fn assemble_mass(dc: &DiscreteCurve) -> Result<CyclicTridiagonal> {
    let q = checked_edges(dc)?;
    let n = q.len();
    let diag = (0..n).map(|i| (q[i] + q[(i + 1) % n]) / 3.0).collect();
    let off = (0..n).map(|i| q[(i + 1) % n] / 6.0).collect();
    CyclicTridiagonal::new(diag, off)
}

/// `D · S` with `S_ij = ∫ φ_i' φ_j' / |u_hx| dx`.
pub fn assemble_stiffness(dc: &DiscreteCurve, diffusivity: f64) -> Result<CyclicTridiagonal> {
    if !(diffusivity >= 0.0 && diffusivity.is_finite()) {
        return Err(Error::config(format!(
            "diffusivity must be finite and non-negative, got {diffusivity}"
        )));
    }
    let q = checked_edges(dc)?;
    let n = q.len();
    let off: Vec<f64> = (0..n).map(|i| -diffusivity / q[(i + 1) % n]).collect();
    let diag = (0..n)
        .map(|i| {
            let im = if i == 0 { n - 1 } else { i - 1 };
            // 0.0 - x keeps the D = 0 diagonal at +0.0
            0.0 - (off[i] + off[im])
        })
        .collect();
    CyclicTridiagonal::new(diag, off)
}

/// `a_i = ⟨c_h w_Th, ∂_x φ_i⟩`, without the `-Δt` factor.
///
/// The integrand is quadratic on each element, so Simpson's rule is exact.
pub fn advection_load(c_prev: &FieldCoeffs, w_nodal: &FieldCoeffs, mesh: &Mesh) -> Result<Vec<f64>> {
    let n = mesh.len();
    c_prev.check_len(n)?;
    w_nodal.check_len(n)?;
    let c = c_prev.values();
    let w = w_nodal.values();
    let mut load = vec![0.0; n];
    for e in 0..n {
        let a = mesh.prev(e);
        let (ca, cb) = (c[a], c[e]);
        let (wa, wb) = (w[a], w[e]);
        let mid = 0.25 * (ca + cb) * (wa + wb);
        // (∫_e c w dx) / h
        let avg = (ca * wa + 4.0 * mid + cb * wb) / 6.0;
        load[e] += avg;
        load[a] -= avg;
    }
    Ok(load)
}

/// `M^{k-1} · r(c^{k-1})`, i.e. `I_h r(c_h)` tested against the hats with
/// the weighted mass matrix. The stepper multiplies by `Δt`.
pub fn reaction_load(
    c_prev: &FieldCoeffs,
    r: impl Fn(f64) -> f64,
    m_prev: &CyclicTridiagonal,
) -> Result<Vec<f64>> {
    c_prev.check_len(m_prev.len())?;
    let rc = c_prev
        .values()
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let v = r(c);
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::NonFinite {
                    what: "reaction term",
                    index: i,
                })
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(m_prev.mul_vec_unchecked(&rc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{discretize_curve, interpolate_nodal, CurvePath};

    fn circle4() -> DiscreteCurve {
        let m = Mesh::uniform(4).unwrap();
        discretize_curve(&CurvePath::unit_circle(), 0.0, &m).unwrap()
    }

    #[test]
    fn mass_on_square() {
        let m = assemble_mass(&circle4()).unwrap();
        for i in 0..4 {
            assert!((m.diag[i] - 2.0 * 2f64.sqrt() / 3.0).abs() < 1e-15);
            assert!((m.off[i] - 2f64.sqrt() / 6.0).abs() < 1e-15);
        }
        assert!((m.diag[0] - 0.942809).abs() < 1e-6);
        assert!((m.off[0] - 0.235702).abs() < 1e-6);
    }

    #[test]
    fn mass_row_sums_are_half_adjacent_edges() {
        let mesh = Mesh::uniform(17).unwrap();
        let dc = discretize_curve(&CurvePath::Flower, 0.4, &mesh).unwrap();
        let m = assemble_mass(&dc).unwrap();
        let q = dc.edge_lengths();
        for (i, s) in m.row_sums().iter().enumerate() {
            let expect = 0.5 * (q[i] + q[(i + 1) % 17]);
            assert!((s - expect).abs() < 1e-15 * expect.max(1.0));
        }
    }

    #[test]
    fn stiffness_on_square() {
        let s = assemble_stiffness(&circle4(), 1.0).unwrap();
        for i in 0..4 {
            assert!((s.diag[i] - 2f64.sqrt()).abs() < 1e-15);
            assert!((s.off[i] + 1.0 / 2f64.sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn stiffness_kills_constants_exactly() {
        for &n in &[5usize, 33, 128] {
            let mesh = Mesh::uniform(n).unwrap();
            let dc = discretize_curve(&CurvePath::Flower, 0.3, &mesh).unwrap();
            let s = assemble_stiffness(&dc, 0.05).unwrap();
            assert!(s.row_sums().iter().all(|&r| r == 0.0));
        }
    }

    #[test]
    fn zero_diffusivity_gives_zero_matrix() {
        let s = assemble_stiffness(&circle4(), 0.0).unwrap();
        assert!(s.diag.iter().chain(&s.off).all(|&v| v == 0.0));
        assert!(assemble_stiffness(&circle4(), -1.0).is_err());
    }

    #[test]
    fn degenerate_edge_rejected() {
        let mesh = Mesh::uniform(4).unwrap();
        let pinched = CurvePath::custom(
            |_, x| if x > 4.0 { [0.0, 0.0] } else { [x.cos(), x.sin()] },
            |_, _| [0.0, 0.0],
        );
        // nodes 3π/2 and 2π coincide
        let dc = discretize_curve(&pinched, 0.0, &mesh).unwrap();
        assert!(matches!(
            assemble_mass(&dc),
            Err(Error::DegenerateEdge { index: 3, .. })
        ));
        assert!(assemble_stiffness(&dc, 1.0).is_err());
    }

    #[test]
    fn advection_trivial_cases() {
        let mesh = Mesh::uniform(8).unwrap();
        let c = interpolate_nodal(|x| x.sin() + 2.0, &mesh).unwrap();
        let zero = FieldCoeffs::zeros(8);
        assert!(advection_load(&c, &zero, &mesh)
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
        let one = FieldCoeffs::constant(8, 1.0);
        let a = advection_load(&one, &one, &mesh).unwrap();
        assert!(a.iter().all(|v| v.abs() < 1e-15));
        assert!(advection_load(&c, &FieldCoeffs::zeros(7), &mesh).is_err());
    }

    #[test]
    fn reaction_examples() {
        let dc = discretize_curve(&CurvePath::Flower, 0.2, &Mesh::uniform(12).unwrap()).unwrap();
        let m = assemble_mass(&dc).unwrap();
        let one = FieldCoeffs::constant(12, 1.0);
        assert!(reaction_load(&one, |_| 0.0, &m)
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
        let lin = reaction_load(&one, |c| c, &m).unwrap();
        let q = dc.edge_lengths();
        for (i, v) in lin.iter().enumerate() {
            assert!((v - 0.5 * (q[i] + q[(i + 1) % 12])).abs() < 1e-15);
        }
        let cubic = reaction_load(&one, |c| c * (1.0 - c) * (c + 0.5), &m).unwrap();
        assert!(cubic.iter().all(|&v| v == 0.0));
        assert!(reaction_load(&one, |c| c / 0.0, &m).is_err());
    }
}
