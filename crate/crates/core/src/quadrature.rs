//! Gauss–Legendre rules on intervals.

use std::f64::consts::PI;

/// A Gauss–Legendre rule on the reference interval [-1, 1].
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Computes the `n`-point rule by Newton iteration on the Legendre polynomial.
    ///
    /// The rule integrates polynomials of degree `2n - 1` exactly.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "a Gauss rule needs at least one point");
        let mut points = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Chebyshev-like initial guess for the i-th largest root.
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() <= 1e-16 * x.abs().max(1.0) {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            points[i] = -x;
            points[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            points[n / 2] = 0.0;
        }
        GaussLegendre { points, weights }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points and weights mapped affinely onto `[a, b]`.
    pub fn on_interval(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.points
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }
}

/// Evaluates `P_n(x)` and `P_n'(x)` by the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let dp = nf * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_two() {
        for n in 1..=12 {
            let g = GaussLegendre::new(n);
            let s: f64 = g.weights.iter().sum();
            assert!((s - 2.0).abs() < 1e-14, "n={n} sum={s}");
        }
    }

    #[test]
    fn six_points_exact_to_degree_eleven() {
        let g = GaussLegendre::new(6);
        for deg in 0..=11 {
            let approx: f64 = g
                .points
                .iter()
                .zip(&g.weights)
                .map(|(x, w)| w * x.powi(deg))
                .sum();
            let exact = if deg % 2 == 1 {
                0.0
            } else {
                2.0 / (deg as f64 + 1.0)
            };
            assert!((approx - exact).abs() < 1e-14, "deg={deg}");
        }
        // degree 12 is no longer exact
        let approx: f64 = g
            .points
            .iter()
            .zip(&g.weights)
            .map(|(x, w)| w * x.powi(12))
            .sum();
        assert!((approx - 2.0 / 13.0).abs() > 1e-8);
    }

    #[test]
    fn known_two_point_rule() {
        let g = GaussLegendre::new(2);
        assert!((g.points[1] - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!((g.weights[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mapped_interval() {
        let g = GaussLegendre::new(3);
        let s: f64 = g.on_interval(1.0, 3.0).map(|(x, w)| w * x * x).sum();
        assert!((s - 26.0 / 3.0).abs() < 1e-13);
    }
}
