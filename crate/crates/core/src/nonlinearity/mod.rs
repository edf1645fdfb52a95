//! Source and damping nonlinearities: evaluation, potentials, derivatives
//! for implicit solves, and sample-based validation of the structural
//! hypotheses they are supposed to satisfy.

mod validate;

pub use validate::{
    check_overdamping, default_epsilon0, validate_f1, validate_f2_f3, validate_q, QMode,
    SampleWindow, ValidationReport,
};

use crate::error::{CoreError, Result};
use crate::quadrature::integrate_adaptive;
use std::fmt;
use std::sync::Arc;

/// Relative tolerance of the quadrature fallback for potentials. Potentials
/// feed the energy functional whose sign decides set membership, so this
/// sits well below the classification tolerances.
pub const POTENTIAL_QUAD_TOL: f64 = 1e-10;

/// Signed power `|u|^(k-2) u`, the building block of every built-in kind.
#[inline]
pub fn signed_power(u: f64, k: f64) -> f64 {
    if u == 0.0 {
        return 0.0;
    }
    u.abs().powf(k - 2.0) * u
}

/// Derivative of `|v|^(k-2) v`, regularized near `v = 0` so Newton stays
/// finite for exponents below 2 (`|v|` is replaced by `sqrt(v^2 + delta^2)`
/// in the Jacobian only; residual evaluations stay exact).
#[inline]
pub fn signed_power_derivative(v: f64, k: f64, delta: f64) -> f64 {
    (k - 1.0) * (v * v + delta * delta).powf((k - 2.0) / 2.0)
}

/// A coefficient of `x`: constant, or a piecewise-constant table over
/// ascending breakpoints (`values` has one more entry than `breakpoints`).
#[derive(Debug, Clone)]
pub enum Coefficient {
    Constant(f64),
    Piecewise { breakpoints: Vec<f64>, values: Vec<f64> },
}

impl Coefficient {
    pub fn at(&self, x: f64) -> f64 {
        match self {
            Coefficient::Constant(c) => *c,
            Coefficient::Piecewise { breakpoints, values } => {
                let idx = breakpoints.partition_point(|b| *b <= x);
                values[idx]
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if let Coefficient::Piecewise { breakpoints, values } = self {
            if values.len() != breakpoints.len() + 1 {
                return Err(CoreError::InvalidArgument(
                    "piecewise coefficient needs one more value than breakpoints".into(),
                ));
            }
            if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
                return Err(CoreError::InvalidArgument(
                    "piecewise breakpoints must be strictly increasing".into(),
                ));
            }
        }
        Ok(())
    }
}

type XuFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
type TxvFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

/// The reaction term `f(x, u)`.
#[derive(Clone)]
pub enum SourceKind {
    /// `|u|^(p-2) u`
    Power,
    /// `a(x)|u|^(q-2)u + b(x)|u|^(p-2)u`
    F0 { q: f64, a: Coefficient, b: Coefficient },
    /// `sign * f1` with `f1(u) = u` for `|u| <= 1`, `|u|^(p-2)u` for `|u| >= 1`
    F1Capped { negated: bool },
    /// Named registration; optional analytic potential and u-derivative.
    Custom {
        name: String,
        eval: XuFn,
        potential: Option<XuFn>,
        derivative: Option<XuFn>,
    },
}

impl fmt::Debug for SourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SourceKind::Power => write!(f, "Power"),
            SourceKind::F0 { q, .. } => write!(f, "F0 {{ q: {q} }}"),
            SourceKind::F1Capped { negated } => write!(f, "F1Capped {{ negated: {negated} }}"),
            SourceKind::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

/// Reaction nonlinearity with growth exponent `p >= 2` and potential
/// `F(x, u)`, the `u`-antiderivative of `f` vanishing at 0.
#[derive(Debug, Clone)]
pub struct SourceTerm {
    pub kind: SourceKind,
    pub p: f64,
}

impl SourceTerm {
    pub fn power(p: f64) -> Result<Self> {
        Self::check_p(p)?;
        Ok(SourceTerm { kind: SourceKind::Power, p })
    }

    pub fn f0(p: f64, q: f64, a: Coefficient, b: Coefficient) -> Result<Self> {
        Self::check_p(p)?;
        if !(q >= 2.0 && q <= p) {
            return Err(CoreError::ExponentRange(format!(
                "f0 requires 2 <= q <= p; got q={q}, p={p}"
            )));
        }
        a.validate()?;
        b.validate()?;
        Ok(SourceTerm { kind: SourceKind::F0 { q, a, b }, p })
    }

    pub fn f1_capped(p: f64, negated: bool) -> Result<Self> {
        Self::check_p(p)?;
        Ok(SourceTerm { kind: SourceKind::F1Capped { negated }, p })
    }

    pub fn zero() -> Self {
        SourceTerm {
            kind: SourceKind::Custom {
                name: "zero".into(),
                eval: Arc::new(|_, _| 0.0),
                potential: Some(Arc::new(|_, _| 0.0)),
                derivative: Some(Arc::new(|_, _| 0.0)),
            },
            p: 2.0,
        }
    }

    pub fn custom(
        name: impl Into<String>,
        p: f64,
        eval: XuFn,
        potential: Option<XuFn>,
        derivative: Option<XuFn>,
    ) -> Result<Self> {
        Self::check_p(p)?;
        Ok(SourceTerm {
            kind: SourceKind::Custom { name: name.into(), eval, potential, derivative },
            p,
        })
    }

    fn check_p(p: f64) -> Result<()> {
        if !(p.is_finite() && p >= 2.0) {
            return Err(CoreError::ExponentRange(format!("source exponent p={p} must be >= 2")));
        }
        Ok(())
    }

    /// `f(x, u)`.
    pub fn eval(&self, x: f64, u: f64) -> Result<f64> {
        if !x.is_finite() || !u.is_finite() {
            return Err(CoreError::NonFinite(format!("eval_source(x={x}, u={u})")));
        }
        Ok(self.eval_unchecked(x, u))
    }

    #[inline]
    pub fn eval_unchecked(&self, x: f64, u: f64) -> f64 {
        match &self.kind {
            SourceKind::Power => signed_power(u, self.p),
            SourceKind::F0 { q, a, b } => {
                a.at(x) * signed_power(u, *q) + b.at(x) * signed_power(u, self.p)
            }
            SourceKind::F1Capped { negated } => {
                let v = if u.abs() <= 1.0 { u } else { signed_power(u, self.p) };
                if *negated {
                    -v
                } else {
                    v
                }
            }
            SourceKind::Custom { eval, .. } => eval(x, u),
        }
    }

    /// Potential `F(x, u)`: closed form for the built-in kinds, adaptive
    /// quadrature fallback for custom kinds without one.
    pub fn potential(&self, x: f64, u: f64) -> Result<f64> {
        if !x.is_finite() || !u.is_finite() {
            return Err(CoreError::NonFinite(format!("eval_potential(x={x}, u={u})")));
        }
        let p = self.p;
        match &self.kind {
            SourceKind::Power => Ok(u.abs().powf(p) / p),
            SourceKind::F0 { q, a, b } => {
                Ok(a.at(x) * u.abs().powf(*q) / q + b.at(x) * u.abs().powf(p) / p)
            }
            SourceKind::F1Capped { negated } => {
                let a = u.abs();
                let v = if a <= 1.0 { 0.5 * u * u } else { 0.5 + (a.powf(p) - 1.0) / p };
                Ok(if *negated { -v } else { v })
            }
            SourceKind::Custom { potential, eval, .. } => match potential {
                Some(fp) => Ok(fp(x, u)),
                None => {
                    if u == 0.0 {
                        return Ok(0.0);
                    }
                    integrate_adaptive(&|s| eval(x, s), 0.0, u, POTENTIAL_QUAD_TOL)
                }
            },
        }
    }

    /// `df/du`, used by the Newton Jacobian. Custom kinds without an
    /// analytic derivative use a central difference with step
    /// `1e-7 * (1 + |u|)`.
    pub fn derivative_u(&self, x: f64, u: f64) -> f64 {
        let p = self.p;
        match &self.kind {
            SourceKind::Power => (p - 1.0) * u.abs().powf(p - 2.0),
            SourceKind::F0 { q, a, b } => {
                a.at(x) * (q - 1.0) * u.abs().powf(q - 2.0)
                    + b.at(x) * (p - 1.0) * u.abs().powf(p - 2.0)
            }
            SourceKind::F1Capped { negated } => {
                let d = if u.abs() <= 1.0 { 1.0 } else { (p - 1.0) * u.abs().powf(p - 2.0) };
                if *negated {
                    -d
                } else {
                    d
                }
            }
            SourceKind::Custom { derivative, eval, .. } => match derivative {
                Some(df) => df(x, u),
                None => {
                    let h = 1e-7 * (1.0 + u.abs());
                    (eval(x, u + h) - eval(x, u - h)) / (2.0 * h)
                }
            },
        }
    }

    pub fn kind_name(&self) -> &str {
        match &self.kind {
            SourceKind::Power => "power",
            SourceKind::F0 { .. } => "f0",
            SourceKind::F1Capped { .. } => "f1_capped",
            SourceKind::Custom { name, .. } => name,
        }
    }
}

/// The dynamical boundary term `Q(t, x, v)`.
#[derive(Clone)]
pub enum DampingKind {
    /// `|v|^(m-2) v`
    Power,
    /// `a |v|^(mu-2)v + b |v|^(m-2)v` with `a, b >= 0`
    Q0 { a: f64, b: f64 },
    /// `(1 + t)^beta * (a |v|^(mu-2)v + b |v|^(m-2)v)`
    Q1Weighted { a: f64, b: f64, beta: f64 },
    /// `v + |v|^(m-2) v` (the refrigerated-body model)
    Physical,
    /// Named registration; optional analytic v-derivative.
    Custom { name: String, eval: TxvFn, derivative: Option<TxvFn> },
}

impl fmt::Debug for DampingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DampingKind::Power => write!(f, "Power"),
            DampingKind::Q0 { a, b } => write!(f, "Q0 {{ a: {a}, b: {b} }}"),
            DampingKind::Q1Weighted { a, b, beta } => {
                write!(f, "Q1Weighted {{ a: {a}, b: {b}, beta: {beta} }}")
            }
            DampingKind::Physical => write!(f, "Physical"),
            DampingKind::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

/// Boundary damping with growth exponent `m > 1` at infinity and `mu`
/// (`1 < mu <= m`) near zero.
#[derive(Debug, Clone)]
pub struct BoundaryDamping {
    pub kind: DampingKind,
    pub m: f64,
    pub mu: f64,
}

impl BoundaryDamping {
    pub fn power(m: f64) -> Result<Self> {
        Self::check_m(m)?;
        Ok(BoundaryDamping { kind: DampingKind::Power, m, mu: m })
    }

    pub fn q0(m: f64, mu: f64, a: f64, b: f64) -> Result<Self> {
        Self::check_m(m)?;
        Self::check_mu(m, mu)?;
        if a < 0.0 || b < 0.0 {
            return Err(CoreError::InvalidArgument("Q0 coefficients must be nonnegative".into()));
        }
        Ok(BoundaryDamping { kind: DampingKind::Q0 { a, b }, m, mu })
    }

    pub fn q1_weighted(m: f64, mu: f64, a: f64, b: f64, beta: f64) -> Result<Self> {
        Self::check_m(m)?;
        Self::check_mu(m, mu)?;
        if a < 0.0 || b < 0.0 {
            return Err(CoreError::InvalidArgument("Q1 coefficients must be nonnegative".into()));
        }
        Ok(BoundaryDamping { kind: DampingKind::Q1Weighted { a, b, beta }, m, mu })
    }

    /// `v + |v|^(m-2) v`; linear near zero, so `mu = 2`.
    pub fn physical(m: f64) -> Result<Self> {
        Self::check_m(m)?;
        Ok(BoundaryDamping { kind: DampingKind::Physical, m, mu: 2.0_f64.min(m) })
    }

    /// No boundary damping at all; turns the dynamic node into a plain
    /// Neumann point. Useful for scheme diagnostics, outside the theory.
    pub fn none() -> Self {
        BoundaryDamping {
            kind: DampingKind::Custom {
                name: "none".into(),
                eval: Arc::new(|_, _, _| 0.0),
                derivative: Some(Arc::new(|_, _, _| 0.0)),
            },
            m: 2.0,
            mu: 2.0,
        }
    }

    pub fn custom(
        name: impl Into<String>,
        m: f64,
        mu: f64,
        eval: TxvFn,
        derivative: Option<TxvFn>,
    ) -> Result<Self> {
        Self::check_m(m)?;
        Self::check_mu(m, mu)?;
        Ok(BoundaryDamping { kind: DampingKind::Custom { name: name.into(), eval, derivative }, m, mu })
    }

    fn check_m(m: f64) -> Result<()> {
        if !(m.is_finite() && m > 1.0) {
            return Err(CoreError::ExponentRange(format!("damping exponent m={m} must be > 1")));
        }
        Ok(())
    }

    fn check_mu(m: f64, mu: f64) -> Result<()> {
        if !(mu > 1.0 && mu <= m) {
            return Err(CoreError::ExponentRange(format!("requires 1 < mu <= m; got mu={mu}, m={m}")));
        }
        Ok(())
    }

    /// Time weight `d(t)`: `(1+t)^beta` for the weighted kind, 1 otherwise.
    pub fn weight(&self, t: f64) -> f64 {
        match &self.kind {
            DampingKind::Q1Weighted { beta, .. } => (1.0 + t).powf(*beta),
            _ => 1.0,
        }
    }

    pub fn weight_beta(&self) -> Option<f64> {
        match &self.kind {
            DampingKind::Q1Weighted { beta, .. } => Some(*beta),
            _ => None,
        }
    }

    /// `Q(t, x, v)`.
    #[inline]
    pub fn eval(&self, t: f64, x: f64, v: f64) -> f64 {
        match &self.kind {
            DampingKind::Power => signed_power(v, self.m),
            DampingKind::Q0 { a, b } => a * signed_power(v, self.mu) + b * signed_power(v, self.m),
            DampingKind::Q1Weighted { a, b, beta } => {
                (1.0 + t).powf(*beta) * (a * signed_power(v, self.mu) + b * signed_power(v, self.m))
            }
            DampingKind::Physical => v + signed_power(v, self.m),
            DampingKind::Custom { eval, .. } => eval(t, x, v),
        }
    }

    /// `dQ/dv` for the Newton Jacobian, regularized with `delta` near zero.
    /// Custom kinds without an analytic derivative use a central difference
    /// with step `1e-7 * (1 + |v|)`.
    pub fn derivative_v(&self, t: f64, x: f64, v: f64, delta: f64) -> f64 {
        match &self.kind {
            DampingKind::Power => signed_power_derivative(v, self.m, delta),
            DampingKind::Q0 { a, b } => {
                a * signed_power_derivative(v, self.mu, delta)
                    + b * signed_power_derivative(v, self.m, delta)
            }
            DampingKind::Q1Weighted { a, b, beta } => {
                (1.0 + t).powf(*beta)
                    * (a * signed_power_derivative(v, self.mu, delta)
                        + b * signed_power_derivative(v, self.m, delta))
            }
            DampingKind::Physical => 1.0 + signed_power_derivative(v, self.m, delta),
            DampingKind::Custom { eval, derivative, .. } => match derivative {
                Some(dq) => dq(t, x, v),
                None => {
                    let h = 1e-7 * (1.0 + v.abs());
                    (eval(t, x, v + h) - eval(t, x, v - h)) / (2.0 * h)
                }
            },
        }
    }

    pub fn kind_name(&self) -> &str {
        match &self.kind {
            DampingKind::Power => "power",
            DampingKind::Q0 { .. } => "q0",
            DampingKind::Q1Weighted { .. } => "q1_weighted",
            DampingKind::Physical => "physical",
            DampingKind::Custom { name, .. } => name,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn power_source_reference_values() {
        let f = SourceTerm::power(3.0).unwrap();
        assert_relative_eq!(f.eval(0.5, 2.0).unwrap(), 4.0);
        assert_eq!(f.eval(0.5, 0.0).unwrap(), 0.0);
        assert_relative_eq!(f.eval(0.5, -2.0).unwrap(), -4.0);
        assert!(f.eval(0.5, f64::NAN).is_err());
        assert!(f.eval(f64::INFINITY, 1.0).is_err());
    }

    #[test]
    fn f0_source_reference_value() {
        // a = -1, b = 1, q = 2, p = 4, u = 2 -> -2 + 8 = 6
        let f = SourceTerm::f0(4.0, 2.0, Coefficient::Constant(-1.0), Coefficient::Constant(1.0))
            .unwrap();
        assert_relative_eq!(f.eval(0.0, 2.0).unwrap(), 6.0);
    }

    #[test]
    fn f0_rejects_bad_q() {
        let c = || Coefficient::Constant(1.0);
        assert!(SourceTerm::f0(4.0, 1.5, c(), c()).is_err());
        assert!(SourceTerm::f0(4.0, 4.5, c(), c()).is_err());
    }

    #[test]
    fn potentials_match_closed_forms() {
        let f = SourceTerm::power(4.0).unwrap();
        assert_relative_eq!(f.potential(0.0, 2.0).unwrap(), 4.0);
        assert_eq!(f.potential(0.0, 0.0).unwrap(), 0.0);

        // f1 with p = 3 at u = 2: 1/2 + 7/3 = 17/6
        let f1 = SourceTerm::f1_capped(3.0, false).unwrap();
        assert_relative_eq!(f1.potential(0.0, 2.0).unwrap(), 17.0 / 6.0, epsilon = 1e-14);
        assert_relative_eq!(f1.potential(0.0, -2.0).unwrap(), 17.0 / 6.0, epsilon = 1e-14);
        assert_relative_eq!(f1.potential(0.0, 0.5).unwrap(), 0.125, epsilon = 1e-15);
    }

    #[test]
    fn quadrature_fallback_agrees_with_closed_forms() {
        // custom copy of the power kind without an analytic potential
        for p in [2.0, 3.0, 4.0, 5.5] {
            let f = SourceTerm::custom(
                "power_no_potential",
                p,
                Arc::new(move |_x, u| signed_power(u, p)),
                None,
                None,
            )
            .unwrap();
            for u in [-2.5, -1.0, -0.3, 0.0, 0.7, 1.0, 3.0] {
                let got = f.potential(0.0, u).unwrap();
                let exact = u.abs().powf(p) / p;
                assert_relative_eq!(got, exact, max_relative = 1e-9, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn exact_f3_identity_for_power() {
        // f u - (p - eps) F = (eps/p)|u|^p pointwise, to machine precision
        let p = 3.0;
        let eps = 0.1;
        let f = SourceTerm::power(p).unwrap();
        for u in [-4.0, -1.0, -0.01, 0.5, 2.0, 8.0] {
            let lhs = f.eval(0.0, u).unwrap() * u - (p - eps) * f.potential(0.0, u).unwrap();
            let rhs = eps / p * u.abs().powf(p);
            assert_relative_eq!(lhs, rhs, max_relative = 1e-13);
        }
    }

    #[test]
    fn damping_kinds_vanish_at_zero_and_follow_sign() {
        let qs = [
            BoundaryDamping::power(4.0).unwrap(),
            BoundaryDamping::physical(4.0).unwrap(),
            BoundaryDamping::q0(3.0, 2.0, 1.0, 2.0).unwrap(),
            BoundaryDamping::q1_weighted(3.0, 2.0, 1.0, 2.0, 0.5).unwrap(),
        ];
        for q in &qs {
            for t in [0.0, 1.0, 7.0] {
                assert_eq!(q.eval(t, 1.0, 0.0), 0.0, "{} at 0", q.kind_name());
                for v in [-3.0, -0.2, 0.4, 5.0] {
                    assert_eq!(q.eval(t, 1.0, v).signum(), v.signum(), "{}", q.kind_name());
                }
            }
        }
    }

    #[test]
    fn physical_damping_reference_value() {
        let q = BoundaryDamping::physical(4.0).unwrap();
        assert_relative_eq!(q.eval(0.0, 1.0, 2.0), 2.0 + 8.0);
        assert_eq!(q.mu, 2.0);
    }

    #[test]
    fn damping_derivative_matches_finite_difference() {
        let qs = [
            BoundaryDamping::power(3.0).unwrap(),
            BoundaryDamping::physical(2.5).unwrap(),
            BoundaryDamping::q1_weighted(3.0, 2.0, 0.5, 1.5, 1.0).unwrap(),
        ];
        for q in &qs {
            for v in [-1.7, -0.4, 0.3, 2.2] {
                let h = 1e-6;
                let fd = (q.eval(1.0, 1.0, v + h) - q.eval(1.0, 1.0, v - h)) / (2.0 * h);
                let an = q.derivative_v(1.0, 1.0, v, 1e-12);
                assert_relative_eq!(an, fd, max_relative = 1e-5);
            }
        }
    }

    #[test]
    fn sublinear_damping_jacobian_stays_finite_at_zero() {
        // m < 2 makes dQ/dv singular at v = 0 without the regularization
        let q = BoundaryDamping::power(1.5).unwrap();
        let d = q.derivative_v(0.0, 1.0, 0.0, 1e-12);
        assert!(d.is_finite());
        assert!(d > 0.0);
    }

    #[test]
    fn piecewise_coefficient_lookup() {
        let c = Coefficient::Piecewise { breakpoints: vec![0.5], values: vec![1.0, -2.0] };
        assert_eq!(c.at(0.2), 1.0);
        assert_eq!(c.at(0.5), -2.0);
        assert_eq!(c.at(0.9), -2.0);
    }
}
