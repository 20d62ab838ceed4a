//! Per-element Gauss-Legendre quadrature.

/// 5-point Gauss-Legendre nodes on `[-1, 1]`.
const NODES_5: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];

const WEIGHTS_5: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

/// Points and weights of the 5-point rule mapped to `[a, b]`.
///
/// Returned as `(local coordinate in [0, 1], physical point, weight)`.
pub fn gauss5(a: f64, b: f64) -> impl Iterator<Item = (f64, f64, f64)> {
    let half = 0.5 * (b - a);
    NODES_5.iter().zip(WEIGHTS_5.iter()).map(move |(&xi, &w)| {
        let s = 0.5 * (xi + 1.0);
        (s, a + s * (b - a), w * half)
    })
}

/// `∫_a^b f` with the 5-point rule.
pub fn integrate5(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    gauss5(a, b).map(|(_, x, w)| w * f(x)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_for_degree_nine() {
        let f = |x: f64| 3.0 * x.powi(9) - x.powi(4) + 2.0;
        let exact = |x: f64| 0.3 * x.powi(10) - x.powi(5) / 5.0 + 2.0 * x;
        let got = integrate5(-0.3, 1.7, f);
        assert!((got - (exact(1.7) - exact(-0.3))).abs() < 1e-13);
    }

    #[test]
    fn weights_sum_to_length() {
        let s: f64 = gauss5(2.0, 5.0).map(|(_, _, w)| w).sum();
        assert!((s - 3.0).abs() < 1e-14);
    }
}
