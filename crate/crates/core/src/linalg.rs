//! Direct O(n) solve of symmetric positive-definite cyclic tridiagonal systems.
//!
//! With corner entry `a` and `w = (s, 0, …, 0, -a/s)`, the matrix
//! `T = A + w wᵀ` has no corner entries and is SPD whenever `A` is. Then
//! `A = T - w wᵀ` and
//!
//! ```text
//! A⁻¹ b = y + z (wᵀy) / (1 - wᵀz),   T y = b,  T z = w,
//! ```
//!
//! where `1 - wᵀ T⁻¹ w > 0` follows from `A` being positive definite.
//! Choosing `s = sqrt(|a|)` adds the same amount `|a|` to both modified
//! diagonal entries.

use crate::assembly::CyclicTridiagonal;
use crate::{Error, Result};

/// Solve `A x = b` for SPD cyclic tridiagonal `A`.
pub fn solve_spd_cyclic(a: &CyclicTridiagonal, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.len();
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: b.len(),
        });
    }
    if n < 3 {
        return Err(Error::TooFewNodes(n));
    }
    let corner = a.off[n - 1];
    let mut diag = a.diag.clone();
    let sub = &a.off[..n - 1];

    if corner == 0.0 {
        let factor = Ldl::factor(&diag, sub)?;
        let mut x = b.to_vec();
        factor.solve_in_place(&mut x);
        return Ok(x);
    }

    let s = corner.abs().sqrt();
    let w_last = -corner / s;
    diag[0] += s * s;
    diag[n - 1] += w_last * w_last;
    let factor = Ldl::factor(&diag, sub)?;

    let mut y = b.to_vec();
    factor.solve_in_place(&mut y);
    let mut z = vec![0.0; n];
    z[0] = s;
    z[n - 1] = w_last;
    factor.solve_in_place(&mut z);

    let wy = s * y[0] + w_last * y[n - 1];
    let wz = s * z[0] + w_last * z[n - 1];
    let denom = 1.0 - wz;
    // 1 - wᵀT⁻¹w is the last pivot of A; at rounding level A is singular
    if !(denom > 64.0 * f64::EPSILON) {
        return Err(Error::NonPositivePivot {
            row: n,
            pivot: denom,
        });
    }
    let gamma = wy / denom;
    for (yi, zi) in y.iter_mut().zip(&z) {
        *yi += gamma * zi;
    }
    Ok(y)
}

/// `T = L D Lᵀ` for a symmetric tridiagonal `T` with unit lower bidiagonal `L`.
struct Ldl {
    d: Vec<f64>,
    l: Vec<f64>,
}

impl Ldl {
    fn factor(diag: &[f64], sub: &[f64]) -> Result<Self> {
        let n = diag.len();
        let mut d = Vec::with_capacity(n);
        let mut l = Vec::with_capacity(n.saturating_sub(1));
        let mut prev = diag[0];
        if !(prev > 0.0) {
            return Err(Error::NonPositivePivot { row: 0, pivot: prev });
        }
        d.push(prev);
        for i in 1..n {
            let li = sub[i - 1] / prev;
            let di = diag[i] - li * sub[i - 1];
            if !(di > 0.0) {
                return Err(Error::NonPositivePivot { row: i, pivot: di });
            }
            l.push(li);
            d.push(di);
            prev = di;
        }
        Ok(Self { d, l })
    }

    fn solve_in_place(&self, x: &mut [f64]) {
        let n = x.len();
        for i in 1..n {
            x[i] -= self.l[i - 1] * x[i - 1];
        }
        for (xi, di) in x.iter_mut().zip(&self.d) {
            *xi /= di;
        }
        for i in (0..n - 1).rev() {
            x[i] -= self.l[i] * x[i + 1];
        }
    }
}
