//! Gauss–Legendre quadrature: fixed rules for element integrals and an
//! adaptive integrator for potentials without a closed form.

use crate::error::{CoreError, Result};

/// Nodes and weights of an `n`-point Gauss–Legendre rule on `[-1, 1]`.
///
/// Exact for polynomials of degree `2n - 1`. Nodes are found by Newton
/// iteration on the Legendre polynomial with the standard Chebyshev-based
/// initial guess; this is accurate to machine precision for the modest
/// orders used here.
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "quadrature order must be at least 1");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n {
            // initial guess: Chebyshev node
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            nodes[n - 1 - i] = x;
            weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        GaussRule { nodes, weights }
    }

    /// Integrate `f` over `[a, b]` with this rule.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }
}

/// Legendre polynomial `P_n(x)` and its derivative by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
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
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss point count used for `|u|^p`-type element integrals: `ceil((p+2)/2)`,
/// at least 3.
pub fn points_for_exponent(p: f64) -> usize {
    (((p + 2.0) / 2.0).ceil() as usize).max(3)
}

/// Adaptive integration of `f` over `[a, b]` to relative tolerance `rel_tol`.
///
/// Each subinterval is estimated with nested 7- and 15-point Gauss rules;
/// intervals whose discrepancy exceeds their share of the budget are
/// bisected. Errors out instead of silently returning a bad value when the
/// interval stack is exhausted.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let g7 = GaussRule::new(7);
    let g15 = GaussRule::new(15);
    let coarse = g7.integrate(a, b, |x| f(x));
    let fine = g15.integrate(a, b, |x| f(x));
    let scale = fine.abs().max(1e-300);
    let mut stack = vec![(a, b, coarse, fine)];
    let mut total = 0.0;
    let mut err_total = 0.0;
    let mut splits = 0usize;
    while let Some((lo, hi, c, fi)) = stack.pop() {
        let err = (fi - c).abs();
        let width_share = (hi - lo).abs() / (b - a).abs();
        if err <= rel_tol * scale * width_share || (hi - lo).abs() < 1e-14 * (b - a).abs() {
            total += fi;
            err_total += err;
            continue;
        }
        splits += 1;
        if splits > 20_000 {
            return Err(CoreError::QuadratureNonConvergence {
                requested: rel_tol,
                achieved: err_total / scale,
            });
        }
        let mid = 0.5 * (lo + hi);
        for (l, h) in [(lo, mid), (mid, hi)] {
            let c2 = g7.integrate(l, h, |x| f(x));
            let f2 = g15.integrate(l, h, |x| f(x));
            stack.push((l, h, c2, f2));
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rule_is_exact_for_polynomials() {
        // n-point rule integrates x^(2n-1) exactly
        for n in 1..=12 {
            let rule = GaussRule::new(n);
            let k = 2 * n - 1;
            let exact = (1.0 - (-1.0f64).powi(k as i32 + 1)) / (k as f64 + 1.0);
            let got = rule.integrate(-1.0, 1.0, |x| x.powi(k as i32));
            assert_relative_eq!(got, exact, epsilon = 1e-13);
        }
    }

    #[test]
    fn rule_weights_sum_to_interval() {
        for n in [1, 2, 3, 5, 8, 16, 32] {
            let rule = GaussRule::new(n);
            let s: f64 = rule.weights.iter().sum();
            assert_relative_eq!(s, 2.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn adaptive_handles_kinks() {
        // |x|^3 has a kink at 0; exact integral over [-1,2] is 1/4 + 4
        let f = |x: f64| x.abs().powi(3);
        let got = integrate_adaptive(&f, -1.0, 2.0, 1e-12).unwrap();
        assert_relative_eq!(got, 0.25 + 4.0, max_relative = 1e-11);
    }

    #[test]
    fn adaptive_matches_closed_form_power() {
        let p = 3.7;
        let f = |x: f64| x.abs().powf(p - 2.0) * x;
        let u = 1.9;
        let got = integrate_adaptive(&f, 0.0, u, 1e-12).unwrap();
        assert_relative_eq!(got, u.powf(p) / p, max_relative = 1e-10);
    }

    #[test]
    fn points_for_exponent_floors_at_three() {
        assert_eq!(points_for_exponent(2.0), 3);
        assert_eq!(points_for_exponent(3.0), 3);
        assert_eq!(points_for_exponent(4.0), 3);
        assert_eq!(points_for_exponent(5.0), 4);
        assert_eq!(points_for_exponent(10.0), 6);
    }
}
