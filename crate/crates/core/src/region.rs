//! Exponent arithmetic for the admissible `(p, m, n)` region: the critical
//! Sobolev exponent, the damping threshold `m0(p)`, the `s`-window used by
//! the blow-up rate argument, and the rate exponents themselves.

use crate::error::{CoreError, Result};
use serde::Serialize;

/// Critical Sobolev exponent `2*`: infinite for n = 1, 2.
///
/// A dedicated variant keeps "always admissible" exact instead of hiding it
/// behind a large float.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum CriticalExponent {
    Finite(f64),
    Infinite,
}

impl CriticalExponent {
    pub fn as_f64(&self) -> f64 {
        match self {
            CriticalExponent::Finite(v) => *v,
            CriticalExponent::Infinite => f64::INFINITY,
        }
    }
}

/// `2* = 2n/(n-2)` for n >= 3, infinite for n = 1, 2.
pub fn critical_exponent(n: u32) -> CriticalExponent {
    assert!(n >= 1, "spatial dimension must be at least 1");
    if n <= 2 {
        CriticalExponent::Infinite
    } else {
        CriticalExponent::Finite(2.0 * n as f64 / (n as f64 - 2.0))
    }
}

/// Largest admissible source exponent, `1 + 2*/2` (infinite for n <= 2).
pub fn p_max(n: u32) -> CriticalExponent {
    match critical_exponent(n) {
        CriticalExponent::Infinite => CriticalExponent::Infinite,
        CriticalExponent::Finite(two_star) => CriticalExponent::Finite(1.0 + two_star / 2.0),
    }
}

/// Local-theory admissibility `2 <= p <= 1 + 2*/2`.
pub fn p_admissible(p: f64, n: u32) -> bool {
    if !(p >= 2.0) {
        return false;
    }
    match p_max(n) {
        CriticalExponent::Infinite => true,
        CriticalExponent::Finite(pm) => p <= pm,
    }
}

/// Damping threshold `m0(p) = (2(n+1)p - 4(n-1)) / (n(p-2) + 4)`.
pub fn m0(p: f64, n: u32) -> f64 {
    let nf = n as f64;
    (2.0 * (nf + 1.0) * p - 4.0 * (nf - 1.0)) / (nf * (p - 2.0) + 4.0)
}

/// Supremum of `m0` over admissible p: the limit `2(n+1)/n` for n <= 2
/// (p unbounded), the value at `p_max` for n >= 3. `m0` is strictly
/// increasing in p, so the sup sits at the right endpoint.
pub fn sup_m0(n: u32) -> f64 {
    match p_max(n) {
        CriticalExponent::Infinite => 2.0 * (n as f64 + 1.0) / n as f64,
        CriticalExponent::Finite(pm) => m0(pm, n),
    }
}

/// Blow-up theorem hypotheses on the exponents: `p > 2`, `p` admissible,
/// `m < m0(p)` strictly. The structural hypothesis on the Dirichlet part of
/// the boundary is enforced by the mesh, not here.
pub fn blowup_admissible(p: f64, m: f64, n: u32) -> bool {
    p > 2.0 && m > 1.0 && p_admissible(p, n) && m < m0(p, n)
}

/// The window of auxiliary exponents `s` available to the blow-up rate
/// argument: `s_lo = max{1/2, n/2 - (n-1)/m}`,
/// `s_hi = min{1, 2/m, (p/m - 1)/(p/2 - 1)}`. Nonempty exactly on the
/// admissible region.
pub fn s_window(p: f64, m: f64, n: u32) -> Result<(f64, f64)> {
    if !blowup_admissible(p, m, n) {
        return Err(CoreError::ExponentRange(format!(
            "(p={p}, m={m}, n={n}) is outside the blow-up region"
        )));
    }
    let nf = n as f64;
    let s_lo = (0.5f64).max(nf / 2.0 - (nf - 1.0) / m);
    let s_hi = 1.0f64.min(2.0 / m).min((p / m - 1.0) / (p / 2.0 - 1.0));
    debug_assert!(s_lo < s_hi, "window must be nonempty on the admissible region");
    Ok((s_lo, s_hi))
}

/// Rate exponents for an `s` inside the window:
/// `alpha_bar = -[1 - s - p(1/m - s/2)]/p` and
/// `beta_bar = min(alpha_bar, 1/2 - 1/p)`.
pub fn rate_exponents(p: f64, m: f64, n: u32, s: f64) -> Result<(f64, f64)> {
    let (lo, hi) = s_window(p, m, n)?;
    if !(s > lo && s < hi) {
        return Err(CoreError::ExponentRange(format!(
            "s={s} outside the window ({lo}, {hi})"
        )));
    }
    let alpha_bar = -(1.0 - s - p * (1.0 / m - s / 2.0)) / p;
    let beta_bar = alpha_bar.min(0.5 - 1.0 / p);
    Ok((alpha_bar, beta_bar))
}

/// Midpoint of the s-window; the reproducible default for rate reporting.
pub fn default_s(p: f64, m: f64, n: u32) -> Result<f64> {
    let (lo, hi) = s_window(p, m, n)?;
    Ok(0.5 * (lo + hi))
}

/// One row of the admissibility grid.
#[derive(Debug, Clone, Serialize)]
pub struct RegionGridRow {
    pub p: f64,
    pub m: f64,
    pub p_admissible: bool,
    pub blowup_admissible: bool,
}

/// Sample the `(p, m)` rectangle at `resolution x resolution` points and tag
/// each with the admissibility flags. Consumed as plot-ready CSV.
pub fn emit_region_grid(
    n: u32,
    p_range: (f64, f64),
    m_range: (f64, f64),
    resolution: usize,
) -> Result<Vec<RegionGridRow>> {
    if resolution < 2 || p_range.1 <= p_range.0 || m_range.1 <= m_range.0 {
        return Err(CoreError::InvalidArgument(
            "grid needs resolution >= 2 and nonempty ranges".into(),
        ));
    }
    let mut rows = Vec::with_capacity(resolution * resolution);
    for i in 0..resolution {
        let p = p_range.0 + (p_range.1 - p_range.0) * i as f64 / (resolution - 1) as f64;
        for j in 0..resolution {
            let m = m_range.0 + (m_range.1 - m_range.0) * j as f64 / (resolution - 1) as f64;
            rows.push(RegionGridRow {
                p,
                m,
                p_admissible: p_admissible(p, n),
                blowup_admissible: blowup_admissible(p, m, n),
            });
        }
    }
    Ok(rows)
}
