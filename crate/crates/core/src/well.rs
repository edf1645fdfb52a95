//! Variational constants and stable/unstable set classification.
//!
//! `b1` is the best discrete constant in `||u||_p <= B1 ||grad u||_2` over
//! the Dirichlet-constrained P1 space, computed by gradient ascent on the
//! Rayleigh-type ratio in the gradient metric and cross-checked against an
//! independent Picard iteration on the Euler-Lagrange equation. Everything
//! else (`lambda1`, `E1`, the set classification) is exact arithmetic on
//! top of it. All constants are subspace approximations from below of their
//! continuum counterparts and are reported as such.

use crate::error::{CoreError, Result};
use crate::linalg::{axpy, norm2};
use crate::mesh::{
    assemble, element_integral, load_vector, lp_power_integral, norm_lp, AssembledOperators,
    FemField, Mesh1D,
};
use crate::nonlinearity::{signed_power, SourceKind, SourceTerm};
use crate::quadrature::points_for_exponent;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::sync::Arc;

/// `J(u) = 1/2 ||grad u||_2^2 - int F(., u)`. For the power source this is
/// the familiar `1/2 ||grad u||^2 - (1/p)||u||_p^p`.
pub fn j_functional(ops: &AssembledOperators, field: &FemField, f: &SourceTerm) -> Result<f64> {
    let grad_sq = ops.stiffness.quad_form(&field.coeffs, &field.coeffs);
    let potential = match f.kind {
        // closed form, same quadrature as the Lp norm
        SourceKind::Power => lp_power_integral(field, f.p) / f.p,
        _ => {
            let pts = points_for_exponent(f.p);
            let mut err = None;
            let val = element_integral(field, pts, |x, u| match f.potential(x, u) {
                Ok(v) => v,
                Err(e) => {
                    err = Some(e);
                    0.0
                }
            });
            if let Some(e) = err {
                return Err(e);
            }
            val
        }
    };
    Ok(0.5 * grad_sq - potential)
}

/// Nehari-type functional `K(u) = ||grad u||_2^2 - ||u||_p^p`.
pub fn k_functional(ops: &AssembledOperators, field: &FemField, p: f64) -> f64 {
    ops.stiffness.quad_form(&field.coeffs, &field.coeffs) - lp_power_integral(field, p)
}

/// Peak of `J` along the ray through `field`:
/// `max_{lambda>0} J(lambda u) = (1/2 - 1/p)(||grad u||_2 / ||u||_p)^{2p/(p-2)}`.
pub fn sup_lambda_j(ops: &AssembledOperators, field: &FemField, p: f64) -> Result<f64> {
    if p <= 2.0 {
        return Err(CoreError::ExponentRange(format!("sup_lambda_j needs p > 2, got {p}")));
    }
    let grad = ops.norm_grad_l2(field);
    let lp = norm_lp(field, p);
    if lp == 0.0 || grad == 0.0 {
        return Err(CoreError::InvalidArgument("sup_lambda_j needs a nonzero field".into()));
    }
    Ok((0.5 - 1.0 / p) * (grad / lp).powf(2.0 * p / (p - 2.0)))
}

/// Ascent options for the variational constants.
#[derive(Debug, Clone)]
pub struct AscentOptions {
    /// Random multi-starts in addition to the linear ramp.
    pub random_starts: usize,
    /// Relative objective-change threshold for convergence.
    pub tol: f64,
    /// Iteration budget per start.
    pub max_iter: usize,
    /// Relative multi-start spread above which the result is rejected.
    pub spread_limit: f64,
    /// Seed for the random starts.
    pub seed: u64,
    /// Cross-check the ascent against the Picard oracle on the same mesh.
    pub cross_check: bool,
}

impl Default for AscentOptions {
    fn default() -> Self {
        AscentOptions {
            random_starts: 5,
            tol: 1e-10,
            max_iter: 20_000,
            spread_limit: 1e-8,
            seed: 0x5eed,
            cross_check: true,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimizerDiagnostics {
    pub starts: usize,
    pub total_iterations: usize,
    pub best_start_iterations: usize,
    /// Relative spread of the per-start optima.
    pub multi_start_spread: f64,
    /// Relative disagreement with the Picard cross-check, when run.
    pub oracle_disagreement: Option<f64>,
}

/// Result of the `B1` maximization: the constant and the maximizing field
/// (normalized to `||grad u||_2 = 1`), which doubles as the canonical
/// unstable-set generator.
#[derive(Debug, Clone)]
pub struct B1Result {
    pub b1: f64,
    pub maximizer: FemField,
    pub diagnostics: OptimizerDiagnostics,
}

fn normalize_grad(ops: &AssembledOperators, u: &mut [f64]) -> f64 {
    u[0] = 0.0;
    let g = ops.stiffness.quad_form(u, u).max(0.0).sqrt();
    if g > 0.0 {
        for x in u.iter_mut() {
            *x /= g;
        }
    }
    g
}

fn field_from(ops: &AssembledOperators, coeffs: Vec<f64>) -> FemField {
    FemField { mesh: Arc::clone(&ops.mesh), coeffs, constrained: true }
}

/// Deterministic random constrained field (nodal coefficients in [-1, 1)).
pub fn random_constrained_field(mesh: &Arc<Mesh1D>, rng: &mut impl Rng) -> FemField {
    let mut coeffs: Vec<f64> = (0..mesh.n_nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    coeffs[0] = 0.0;
    FemField { mesh: Arc::clone(mesh), coeffs, constrained: true }
}

/// One ascent run for `B1` from a given start. Returns (ratio, maximizer
/// coefficients, iterations).
fn b1_ascent_single(
    ops: &AssembledOperators,
    p: f64,
    start: Vec<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<(f64, Vec<f64>, usize)> {
    let mut u = start;
    normalize_grad(ops, &mut u);
    let mut ratio = norm_lp(&field_from(ops, u.clone()), p);
    let mut flat_streak = 0usize;
    let mut iters = 0usize;
    while iters < max_iter {
        iters += 1;
        let fld = field_from(ops, u.clone());
        let lp = norm_lp(&fld, p);
        // gradient of ||u||_p at the current point, then preconditioned by
        // the stiffness so the step lives in the gradient metric
        let mut grad_n = load_vector(&fld, points_for_exponent(p), |_x, v| signed_power(v, p));
        let scale = lp.powf(1.0 - p);
        for g in grad_n.iter_mut() {
            *g *= scale;
        }
        grad_n[0] = 0.0;
        let mut w = ops.stiffness_constrained.solve(&grad_n)?;
        w[0] = 0.0;
        // tangent direction: A-orthogonal component along u vanishes
        // analytically; subtract ratio * u
        axpy(&mut w, -lp, &u);

        let mut alpha = 1.0;
        let mut improved = false;
        for _ in 0..40 {
            let mut trial = u.clone();
            axpy(&mut trial, alpha, &w);
            normalize_grad(ops, &mut trial);
            let r_trial = norm_lp(&field_from(ops, trial.clone()), p);
            if r_trial > ratio {
                let gain = (r_trial - ratio) / ratio.max(1e-300);
                u = trial;
                ratio = r_trial;
                improved = true;
                if gain < tol {
                    flat_streak += 1;
                } else {
                    flat_streak = 0;
                }
                break;
            }
            alpha *= 0.5;
        }
        if !improved {
            flat_streak += 3;
        }
        if flat_streak >= 3 {
            return Ok((ratio, u, iters));
        }
    }
    Err(CoreError::OptimizerStagnation(format!(
        "B1 ascent still improving after {max_iter} iterations (ratio {ratio:.12e})"
    )))
}

/// Independent oracle: Picard iteration on the Euler-Lagrange equation
/// `A u = mu |u|^{p-2} u`, renormalized in the gradient norm each sweep.
/// Shares only the assembly plumbing with the ascent route.
pub fn b1_picard_oracle(
    ops: &AssembledOperators,
    p: f64,
    tol: f64,
    max_iter: usize,
) -> Result<f64> {
    let n = ops.mesh.n_nodes();
    let mut u: Vec<f64> = ops.mesh.nodes.iter().map(|&x| x / ops.mesh.length).collect();
    normalize_grad(ops, &mut u);
    let mut ratio = norm_lp(&field_from(ops, u.clone()), p);
    for _ in 0..max_iter {
        let fld = field_from(ops, u.clone());
        let mut rhs = load_vector(&fld, points_for_exponent(p), |_x, v| signed_power(v, p));
        rhs[0] = 0.0;
        let mut next = ops.stiffness_constrained.solve(&rhs)?;
        normalize_grad(ops, &mut next);
        if norm2(&next) == 0.0 || next.len() != n {
            return Err(CoreError::OptimizerStagnation("Picard iterate degenerated".into()));
        }
        let r_next = norm_lp(&field_from(ops, next.clone()), p);
        let gain = (r_next - ratio).abs() / ratio.max(1e-300);
        u = next;
        ratio = r_next;
        if gain < tol {
            return Ok(ratio);
        }
    }
    Err(CoreError::OptimizerStagnation(format!(
        "Picard oracle did not settle in {max_iter} sweeps"
    )))
}

/// Maximize `||u||_p / ||grad u||_2` over the constrained space.
///
/// Multi-start (linear ramp plus seeded random fields); rejects the result
/// if the starts disagree beyond `spread_limit` instead of silently taking
/// the max, and optionally cross-checks against the Picard oracle.
///
/// `p = 2` is admitted here (the ratio becomes the classical Rayleigh
/// quotient and the sanity value `2/pi` on the unit interval applies) even
/// though the well constants themselves need `p > 2`.
pub fn compute_b1(ops: &AssembledOperators, p: f64, opts: &AscentOptions) -> Result<B1Result> {
    if !(p >= 2.0) {
        return Err(CoreError::ExponentRange(format!("compute_b1 needs p >= 2, got {p}")));
    }
    let mesh = &ops.mesh;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts: Vec<Vec<f64>> =
        vec![mesh.nodes.iter().map(|&x| x / mesh.length).collect()];
    for _ in 0..opts.random_starts {
        starts.push(random_constrained_field(mesh, &mut rng).coeffs);
    }

    let mut best: Option<(f64, Vec<f64>, usize)> = None;
    let mut worst_ratio = f64::INFINITY;
    let mut total_iters = 0usize;
    let n_starts = starts.len();
    for start in starts {
        let (ratio, u, iters) = b1_ascent_single(ops, p, start, opts.tol, opts.max_iter)?;
        total_iters += iters;
        worst_ratio = worst_ratio.min(ratio);
        if best.as_ref().map_or(true, |(r, _, _)| ratio > *r) {
            best = Some((ratio, u, iters));
        }
    }
    let (b1, coeffs, best_iters) = best.unwrap();
    let spread = (b1 - worst_ratio) / b1.max(1e-300);
    if spread > opts.spread_limit {
        return Err(CoreError::MultiStartDisagreement { spread, limit: opts.spread_limit });
    }

    let oracle_disagreement = if opts.cross_check {
        let oracle = b1_picard_oracle(ops, p, opts.tol, opts.max_iter)?;
        let dis = (oracle - b1).abs() / b1.max(1e-300);
        if dis > 1e-7 {
            return Err(CoreError::OptimizerStagnation(format!(
                "ascent ({b1:.12e}) and Picard oracle ({oracle:.12e}) disagree by {dis:.3e}"
            )));
        }
        Some(dis)
    } else {
        None
    };

    Ok(B1Result {
        b1,
        maximizer: field_from(ops, coeffs),
        diagnostics: OptimizerDiagnostics {
            starts: n_starts,
            total_iterations: total_iters,
            best_start_iterations: best_iters,
            multi_start_spread: spread,
            oracle_disagreement,
        },
    })
}

/// The variational constants tied to one mesh and one exponent.
#[derive(Debug, Clone, Serialize)]
pub struct WellConstants {
    pub p: f64,
    pub b1: f64,
    pub lambda1: f64,
    pub lambda1_tilde: f64,
    /// Mountain-pass level `E1 = (1/2 - 1/p) lambda1^2`; equals the depth
    /// `d` of the well.
    pub e1: f64,
    /// Generalized `D1` for a non-power source, when computed.
    pub d1: Option<f64>,
    pub mesh_fingerprint: u64,
    pub diagnostics: OptimizerDiagnostics,
}

impl WellConstants {
    /// Derive `lambda1`, `lambda1_tilde`, `E1` from `B1`.
    pub fn from_b1(b1: f64, p: f64, mesh_fingerprint: u64, diagnostics: OptimizerDiagnostics) -> Result<Self> {
        if !(p > 2.0) || !(b1 > 0.0) {
            return Err(CoreError::ExponentRange(format!(
                "well constants need p > 2 and B1 > 0; got p={p}, B1={b1}"
            )));
        }
        let lambda1 = b1.powf(-p / (p - 2.0));
        let lambda1_tilde = b1.powf(-2.0 / (p - 2.0));
        let e1 = (0.5 - 1.0 / p) * lambda1 * lambda1;
        Ok(WellConstants {
            p,
            b1,
            lambda1,
            lambda1_tilde,
            e1,
            d1: None,
            mesh_fingerprint,
            diagnostics,
        })
    }

    /// Generalized `(lambda1, E1)` from `D1`; infinite when `D1 <= 0`.
    pub fn generalized(&self) -> Option<(f64, f64)> {
        self.d1.map(|d1| {
            if d1 <= 0.0 {
                (f64::INFINITY, f64::INFINITY)
            } else {
                let p = self.p;
                let lambda1 = (p * d1).powf(-1.0 / (p - 2.0));
                (lambda1, (0.5 - 1.0 / p) * lambda1 * lambda1)
            }
        })
    }

    /// Classification thresholds for a power source (all three
    /// characterizations) or a general one (gradient characterization with
    /// the `D1`-based constants, which must have been computed).
    pub fn thresholds(&self, power_source: bool) -> Result<ClassifyThresholds> {
        if power_source {
            Ok(ClassifyThresholds {
                e1: self.e1,
                lambda1: self.lambda1,
                lambda1_tilde: Some(self.lambda1_tilde),
            })
        } else {
            let (lambda1, e1) = self.generalized().ok_or_else(|| {
                CoreError::InvalidArgument(
                    "classification of a general source needs the D1-based constants".into(),
                )
            })?;
            Ok(ClassifyThresholds { e1, lambda1, lambda1_tilde: None })
        }
    }

    /// Default classification tolerance.
    pub fn default_tol(&self) -> f64 {
        1e-6 * self.e1.max(self.lambda1 * self.lambda1)
    }
}

/// The numbers a membership verdict is measured against. For a power
/// source all three characterizations apply (`lambda1_tilde` present);
/// for a general source only the gradient one does. Infinite thresholds
/// (a general source with `D1 <= 0`) put every finite-energy field in the
/// stable set.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ClassifyThresholds {
    pub e1: f64,
    pub lambda1: f64,
    pub lambda1_tilde: Option<f64>,
}

/// Convenience: assemble, maximize, and package the constants for a mesh.
pub fn well_constants_for_mesh(mesh: &Arc<Mesh1D>, p: f64, opts: &AscentOptions) -> Result<(AssembledOperators, WellConstants, FemField)> {
    let ops = assemble(mesh);
    let b1 = compute_b1(&ops, p, opts)?;
    let wc = WellConstants::from_b1(b1.b1, p, mesh.fingerprint(), b1.diagnostics.clone())?;
    Ok((ops, wc, b1.maximizer))
}

/// Maximize the generalized ratio `int F(., u) / ||grad u||_2^p`.
///
/// The ratio is scale-invariant only for a p-homogeneous potential, so the
/// amplitude stays a genuine unknown: the ascent works on the full quotient
/// and interleaves golden-section sweeps along the scaling ray.
pub fn compute_d1(
    ops: &AssembledOperators,
    f: &SourceTerm,
    opts: &AscentOptions,
) -> Result<(f64, OptimizerDiagnostics)> {
    let p = f.p;
    if !(p > 2.0) {
        return Err(CoreError::ExponentRange(format!("compute_d1 needs p > 2, got {p}")));
    }
    let pts = points_for_exponent(p);
    let mesh = &ops.mesh;

    let ratio_of = |coeffs: &[f64]| -> Result<f64> {
        let fld = field_from(ops, coeffs.to_vec());
        let d = ops.stiffness.quad_form(coeffs, coeffs).max(0.0).sqrt();
        if d == 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        let mut err = None;
        let num = element_integral(&fld, pts, |x, u| match f.potential(x, u) {
            Ok(v) => v,
            Err(e) => {
                err = Some(e);
                0.0
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        Ok(num / d.powf(p))
    };

    let golden_scale = |coeffs: &mut Vec<f64>, current: f64| -> Result<f64> {
        // golden-section on log-amplitude around the current iterate; the
        // window is kept moderate so flat scaling directions (potentials
        // dominated by their critical part at infinity) terminate instead
        // of chasing an unattained supremum
        let (mut lo, mut hi) = (-3.0f64, 3.0f64);
        let phi = 0.5 * (5.0f64.sqrt() - 1.0);
        let eval = |s: f64, coeffs: &Vec<f64>| -> Result<f64> {
            let scaled: Vec<f64> = coeffs.iter().map(|c| c * s.exp()).collect();
            ratio_of(&scaled)
        };
        let mut s1 = hi - phi * (hi - lo);
        let mut s2 = lo + phi * (hi - lo);
        let mut f1 = eval(s1, coeffs)?;
        let mut f2 = eval(s2, coeffs)?;
        for _ in 0..80 {
            if f1 < f2 {
                lo = s1;
                s1 = s2;
                f1 = f2;
                s2 = lo + phi * (hi - lo);
                f2 = eval(s2, coeffs)?;
            } else {
                hi = s2;
                s2 = s1;
                f2 = f1;
                s1 = hi - phi * (hi - lo);
                f1 = eval(s1, coeffs)?;
            }
        }
        let s = 0.5 * (lo + hi);
        let best = eval(s, coeffs)?;
        if best > current {
            for c in coeffs.iter_mut() {
                *c *= s.exp();
            }
            Ok(best)
        } else {
            Ok(current)
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0xd1);
    let ramp: Vec<f64> = mesh.nodes.iter().map(|&x| x / mesh.length).collect();
    let mut starts: Vec<Vec<f64>> = vec![
        ramp.clone(),
        ramp.iter().map(|c| c * 0.25).collect(),
        ramp.iter().map(|c| c * 4.0).collect(),
    ];
    for _ in 0..opts.random_starts {
        starts.push(random_constrained_field(mesh, &mut rng).coeffs);
    }

    let mut best: f64 = f64::NEG_INFINITY;
    let mut worst = f64::INFINITY;
    let mut total_iters = 0usize;
    let mut best_iters = 0usize;
    let n_starts = starts.len();
    for mut u in starts {
        u[0] = 0.0;
        let mut g = ratio_of(&u)?;
        g = golden_scale(&mut u, g)?;
        let mut flat = 0usize;
        let mut iters = 0usize;
        while iters < opts.max_iter {
            iters += 1;
            let fld = field_from(ops, u.clone());
            let d_sq = ops.stiffness.quad_form(&u, &u).max(0.0);
            let d = d_sq.sqrt();
            if d == 0.0 {
                break;
            }
            let mut grad_p = load_vector(&fld, pts, |x, v| f.eval_unchecked(x, v));
            grad_p[0] = 0.0;
            let mut w = ops.stiffness_constrained.solve(&grad_p)?;
            w[0] = 0.0;
            let scale = d.powf(-p);
            let g_cur = ratio_of(&u)?;
            for (wi, ui) in w.iter_mut().zip(&u) {
                *wi = *wi * scale - p * g_cur * ui / d_sq;
            }
            let wn = norm2(&w);
            if wn == 0.0 {
                break;
            }
            let mut alpha = d / wn; // first trial step moves O(1) relative
            let mut improved = false;
            for _ in 0..40 {
                let mut trial = u.clone();
                axpy(&mut trial, alpha, &w);
                let g_trial = ratio_of(&trial)?;
                if g_trial > g {
                    let gain = (g_trial - g).abs() / g.abs().max(1e-12);
                    u = trial;
                    g = g_trial;
                    improved = true;
                    if gain < opts.tol {
                        flat += 1;
                    } else {
                        flat = 0;
                    }
                    break;
                }
                alpha *= 0.5;
            }
            if iters % 16 == 0 {
                g = golden_scale(&mut u, g)?;
            }
            if !improved {
                flat += 3;
            }
            if flat >= 3 {
                break;
            }
        }
        total_iters += iters;
        if g > best {
            best = g;
            best_iters = iters;
        }
        worst = worst.min(g);
    }

    // the zero-potential case lands exactly at 0 from the ramp starts
    if best == f64::NEG_INFINITY {
        best = 0.0;
    }
    let spread = if best.abs() > 1e-12 { (best - worst).abs() / best.abs() } else { 0.0 };
    Ok((
        best,
        OptimizerDiagnostics {
            starts: n_starts,
            total_iterations: total_iters,
            best_start_iterations: best_iters,
            multi_start_spread: spread,
            oracle_disagreement: None,
        },
    ))
}

/// Membership labels for the potential-well sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SetLabel {
    /// Stable set: global existence regime.
    Ws,
    /// Unstable set: blow-up regime (under the exponent hypotheses).
    Wu,
    /// Above the well level `E1`: the theory makes no claim.
    Neither,
    /// Within tolerance of a defining threshold.
    BoundaryAmbiguous,
}

/// Classification outcome, carrying all three characterizations.
#[derive(Debug, Clone, Serialize)]
pub struct MembershipVerdict {
    pub label: SetLabel,
    pub j: f64,
    pub k: f64,
    pub grad_norm: f64,
    pub lp_norm: f64,
    /// Via the sign of `K` (with `J < E1`).
    pub char_k: SetLabel,
    /// Via `||grad u||_2` against `lambda1`.
    pub char_grad: SetLabel,
    /// Via `||u||_p` against `lambda1_tilde`.
    pub char_lp: SetLabel,
    pub agreement: bool,
    /// Smallest distance to any defining threshold.
    pub margin: f64,
    pub tol: f64,
}

/// Classify from the scalar ingredients against explicit thresholds. A
/// present `lambda1_tilde` enables the `K` and `Lp` characterizations
/// (they are specific to `f = |u|^{p-2}u`).
pub fn classify_scalars(
    j: f64,
    k: f64,
    grad_norm: f64,
    lp_norm: f64,
    th: &ClassifyThresholds,
    tol: f64,
) -> MembershipVerdict {
    let below_e1 = j < th.e1;
    let is_zero = grad_norm == 0.0 && lp_norm == 0.0;

    let char_grad = if !below_e1 {
        SetLabel::Neither
    } else if grad_norm < th.lambda1 {
        SetLabel::Ws
    } else {
        SetLabel::Wu
    };
    let (char_k, char_lp) = if let Some(lambda1_tilde) = th.lambda1_tilde {
        let ck = if !below_e1 {
            SetLabel::Neither
        } else if k >= 0.0 && !(!is_zero && k == 0.0 && grad_norm >= th.lambda1) {
            // K = 0 with J < E1 forces u = 0 in exact arithmetic; keep the
            // nonzero roundoff case on the side the gradient norm indicates
            SetLabel::Ws
        } else {
            SetLabel::Wu
        };
        let cl = if !below_e1 {
            SetLabel::Neither
        } else if lp_norm < lambda1_tilde {
            SetLabel::Ws
        } else {
            SetLabel::Wu
        };
        (ck, cl)
    } else {
        (char_grad, char_grad)
    };

    // distance to the thresholds that could change the label: outside the
    // well only the level J = E1 discriminates; inside it the Ws/Wu split
    // adds the norm thresholds and (for the power source) the sign of K
    let mut margin = (j - th.e1).abs();
    if below_e1 {
        margin = margin.min((grad_norm - th.lambda1).abs());
        if let Some(lambda1_tilde) = th.lambda1_tilde {
            margin = margin.min((lp_norm - lambda1_tilde).abs());
            if !is_zero {
                // the zero field sits at K = 0 by definition of the stable
                // set, not on a threshold
                margin = margin.min(k.abs());
            }
        }
    }

    let agreement = char_k == char_grad && char_grad == char_lp;
    let label = if margin < tol {
        SetLabel::BoundaryAmbiguous
    } else {
        char_grad
    };
    MembershipVerdict {
        label,
        j,
        k,
        grad_norm,
        lp_norm,
        char_k,
        char_grad,
        char_lp,
        agreement,
        margin,
        tol,
    }
}

/// Classify a field against computed constants: all three
/// characterizations for the power source, the gradient one (with the
/// `D1`-based constants) otherwise. Errors if the constants were produced
/// on a different mesh or exponent.
pub fn classify(
    ops: &AssembledOperators,
    field: &FemField,
    wc: &WellConstants,
    f: &SourceTerm,
    tol: f64,
) -> Result<MembershipVerdict> {
    if ops.mesh.fingerprint() != wc.mesh_fingerprint {
        return Err(CoreError::MeshMismatch(
            "well constants were computed on a different mesh".into(),
        ));
    }
    if (f.p - wc.p).abs() > 0.0 {
        return Err(CoreError::MeshMismatch(format!(
            "well constants are for p = {}, source has p = {}",
            wc.p, f.p
        )));
    }
    let th = wc.thresholds(matches!(f.kind, SourceKind::Power))?;
    let j = j_functional(ops, field, f)?;
    let k = k_functional(ops, field, f.p);
    let grad = ops.norm_grad_l2(field);
    let lp = norm_lp(field, f.p);
    Ok(classify_scalars(j, k, grad, lp, &th, tol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Mesh1D;
    use approx::assert_relative_eq;

    fn setup(n: usize, p: f64) -> (AssembledOperators, WellConstants, FemField) {
        let mesh = Mesh1D::uniform(1.0, n).unwrap();
        well_constants_for_mesh(&mesh, p, &AscentOptions::default()).unwrap()
    }

    #[test]
    fn j_and_k_on_linear_ramp() {
        let mesh = Mesh1D::uniform(1.0, 200).unwrap();
        let ops = assemble(&mesh);
        let u = FemField::interpolate(&mesh, |x| x, true);
        let f4 = SourceTerm::power(4.0).unwrap();
        let f3 = SourceTerm::power(3.0).unwrap();
        assert_relative_eq!(j_functional(&ops, &u, &f4).unwrap(), 0.45, epsilon = 1e-12);
        assert_relative_eq!(j_functional(&ops, &u, &f3).unwrap(), 5.0 / 12.0, epsilon = 1e-12);
        assert_relative_eq!(k_functional(&ops, &u, 4.0), 0.8, epsilon = 1e-12);
        let zero = FemField::zeros(&mesh);
        assert_eq!(j_functional(&ops, &zero, &f4).unwrap(), 0.0);
        assert_eq!(k_functional(&ops, &zero, 4.0), 0.0);
        // large multiples drive K negative
        let big = FemField::interpolate(&mesh, |x| 3.0 * x, true);
        assert!(k_functional(&ops, &big, 4.0) < 0.0);
    }

    #[test]
    fn sup_lambda_j_reference_values() {
        let mesh = Mesh1D::uniform(1.0, 100).unwrap();
        let ops = assemble(&mesh);
        let u = FemField::interpolate(&mesh, |x| x, true);
        assert_relative_eq!(sup_lambda_j(&ops, &u, 4.0).unwrap(), 1.25, epsilon = 1e-12);
        let zero = FemField::zeros(&mesh);
        assert!(sup_lambda_j(&ops, &zero, 4.0).is_err());
        // scaling invariance of the ray
        let scaled = FemField::interpolate(&mesh, |x| -7.3 * x, true);
        assert_relative_eq!(
            sup_lambda_j(&ops, &scaled, 4.0).unwrap(),
            1.25,
            epsilon = 1e-10
        );
    }

    #[test]
    fn b1_p2_matches_eigenfunction_value() {
        // first mixed eigenfunction sin(pi x / 2) gives B1 = 2/pi at p = 2
        let mesh = Mesh1D::uniform(1.0, 200).unwrap();
        let ops = assemble(&mesh);
        let res = compute_b1(&ops, 2.0, &AscentOptions::default()).unwrap();
        assert_relative_eq!(res.b1, 2.0 / std::f64::consts::PI, max_relative = 1e-4);
    }

    #[test]
    fn b1_monotone_under_refinement() {
        let mesh = Mesh1D::uniform(1.0, 25).unwrap();
        let ops = assemble(&mesh);
        let coarse = compute_b1(&ops, 4.0, &AscentOptions::default()).unwrap();
        let fine_mesh = mesh.refined();
        let fine_ops = assemble(&fine_mesh);
        let fine = compute_b1(&fine_ops, 4.0, &AscentOptions::default()).unwrap();
        assert!(fine.b1 >= coarse.b1 - 1e-12, "sup over a larger subspace cannot shrink");
    }

    #[test]
    fn constants_identity_chain() {
        let (_, wc, _) = setup(60, 4.0);
        assert_relative_eq!(wc.lambda1_tilde, wc.b1 * wc.lambda1, max_relative = 1e-12);
        assert_relative_eq!(
            wc.e1,
            (0.5 - 1.0 / wc.p) * wc.b1.powf(-2.0 * wc.p / (wc.p - 2.0)),
            max_relative = 1e-12
        );
        // unit-base examples
        let diag = wc.diagnostics.clone();
        let w = WellConstants::from_b1(1.0, 4.0, 0, diag.clone()).unwrap();
        assert_eq!((w.lambda1, w.lambda1_tilde, w.e1), (1.0, 1.0, 0.25));
        let w = WellConstants::from_b1(1.0, 3.0, 0, diag).unwrap();
        assert_relative_eq!(w.e1, 1.0 / 6.0);
    }

    #[test]
    fn e1_lower_bounds_ray_peaks() {
        let (ops, wc, maximizer) = setup(80, 4.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut min_peak = f64::INFINITY;
        for _ in 0..300 {
            let u = random_constrained_field(&ops.mesh, &mut rng);
            min_peak = min_peak.min(sup_lambda_j(&ops, &u, 4.0).unwrap());
        }
        assert!(min_peak >= wc.e1 * (1.0 - 1e-6), "min peak {min_peak} vs E1 {}", wc.e1);
        // the maximizer ray attains the level
        let peak = sup_lambda_j(&ops, &maximizer, 4.0).unwrap();
        assert_relative_eq!(peak, wc.e1, max_relative = 1e-4);
    }

    #[test]
    fn d1_matches_power_identity() {
        let mesh = Mesh1D::uniform(1.0, 50).unwrap();
        let ops = assemble(&mesh);
        let f = SourceTerm::power(4.0).unwrap();
        let b1 = compute_b1(&ops, 4.0, &AscentOptions::default()).unwrap();
        let (d1, _) = compute_d1(&ops, &f, &AscentOptions::default()).unwrap();
        assert_relative_eq!(d1, b1.b1.powi(4) / 4.0, max_relative = 1e-6);
    }

    #[test]
    fn d1_zero_source() {
        let mesh = Mesh1D::uniform(1.0, 20).unwrap();
        let ops = assemble(&mesh);
        let f = SourceTerm::custom(
            "zero_p4",
            4.0,
            std::sync::Arc::new(|_, _| 0.0),
            Some(std::sync::Arc::new(|_, _| 0.0)),
            Some(std::sync::Arc::new(|_, _| 0.0)),
        )
        .unwrap();
        let (d1, _) = compute_d1(&ops, &f, &AscentOptions::default()).unwrap();
        assert_eq!(d1, 0.0);
        let mut wc = WellConstants::from_b1(1.0, 4.0, 0, dummy_diag()).unwrap();
        wc.d1 = Some(d1);
        let (l, e) = wc.generalized().unwrap();
        assert!(l.is_infinite() && e.is_infinite());
    }

    #[test]
    fn d1_strictly_below_power_value_with_negative_part() {
        use crate::nonlinearity::Coefficient;
        let mesh = Mesh1D::uniform(1.0, 50).unwrap();
        let ops = assemble(&mesh);
        let f = SourceTerm::f0(
            4.0,
            2.0,
            Coefficient::Constant(-1.0),
            Coefficient::Constant(1.0),
        )
        .unwrap();
        let b1 = compute_b1(&ops, 4.0, &AscentOptions::default()).unwrap();
        let (d1, _) = compute_d1(&ops, &f, &AscentOptions::default()).unwrap();
        let power_value = b1.b1.powi(4) / 4.0;
        assert!(d1 < power_value, "d1 = {d1} vs {power_value}");
        assert!(d1 > 0.8 * power_value, "d1 = {d1} far below {power_value}");
    }

    fn dummy_diag() -> OptimizerDiagnostics {
        OptimizerDiagnostics {
            starts: 0,
            total_iterations: 0,
            best_start_iterations: 0,
            multi_start_spread: 0.0,
            oracle_disagreement: None,
        }
    }

    #[test]
    fn classify_reference_cases() {
        let (ops, wc, maximizer) = setup(120, 4.0);
        let f = SourceTerm::power(4.0).unwrap();
        let tol = wc.default_tol();

        let zero = FemField::zeros(&ops.mesh);
        let v = classify(&ops, &zero, &wc, &f, tol).unwrap();
        assert_eq!(v.label, SetLabel::Ws);
        assert!(v.agreement);

        // scale the maximizer to 1.05 lambda1: past the peak, inside Wu
        let target = 1.05 * wc.lambda1;
        let coeffs: Vec<f64> = maximizer.coeffs.iter().map(|c| c * target).collect();
        let u = FemField::from_coeffs(&ops.mesh, coeffs, true).unwrap();
        let v = classify(&ops, &u, &wc, &f, tol).unwrap();
        assert_eq!(v.label, SetLabel::Wu, "J = {} vs E1 = {}", v.j, wc.e1);
        assert!(v.agreement);

        // the ramp has a strictly suboptimal ratio, so its ray peaks above
        // E1; scaled to the peak it sits outside the well: no claim
        let ramp = FemField::interpolate(&ops.mesh, |x| x, true);
        let peak = sup_lambda_j(&ops, &ramp, 4.0).unwrap();
        assert!(peak > wc.e1);
        let lambda_star = (1.0 / lp_power_integral(&ramp, 4.0)).powf(1.0 / 2.0);
        let coeffs: Vec<f64> = ramp.coeffs.iter().map(|c| c * lambda_star).collect();
        let u = FemField::from_coeffs(&ops.mesh, coeffs, true).unwrap();
        let v = classify(&ops, &u, &wc, &f, tol).unwrap();
        assert_eq!(v.label, SetLabel::Neither);
        assert!(v.j > wc.e1);

        // wrong mesh is rejected
        let other = Mesh1D::uniform(1.0, 37).unwrap();
        let other_ops = assemble(&other);
        let z2 = FemField::zeros(&other);
        assert!(classify(&other_ops, &z2, &wc, &f, tol).is_err());
    }

    #[test]
    fn stable_unstable_disjoint_on_clear_verdicts() {
        let (ops, wc, _) = setup(60, 3.0);
        let f = SourceTerm::power(3.0).unwrap();
        let tol = wc.default_tol();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let raw = random_constrained_field(&ops.mesh, &mut rng);
            let g = ops.norm_grad_l2(&raw);
            let target = rng.gen_range(0.2..2.0) * wc.lambda1;
            let coeffs: Vec<f64> = raw.coeffs.iter().map(|c| c * target / g).collect();
            let u = FemField::from_coeffs(&ops.mesh, coeffs, true).unwrap();
            let v = classify(&ops, &u, &wc, &f, tol).unwrap();
            if v.label != SetLabel::BoundaryAmbiguous {
                // a clear verdict is exactly one of Ws / Wu / Neither, and
                // the three characterizations agree
                assert!(v.agreement, "disagreement at margin {}", v.margin);
            }
        }
    }
}
