//! Fully implicit backward-Euler stepper for the semi-discrete system
//!
//! ```text
//! M (u+ - u)/tau + A u+ + e_N Q(t+, L, (u+_N - u_N)/tau) = load(t+, u+)
//! ```
//!
//! with the Dirichlet row pinned, `load = M g(t+)` in forced mode and the
//! consistent P1 load vector of `f(., u+)` in reaction mode. Both `Q` and
//! `f` sit inside the Newton residual; no splitting, so the discrete energy
//! balance mirrors the continuous identity up to first order in `tau` and
//! the monotone structure of `Q` survives discretization.
//!
//! The ledger records the energy functionals, dissipation and source-work
//! accumulators (left-rectangle in time, matching the scheme's own order),
//! and the running energy-identity residual.

use crate::error::{CoreError, Result};
use crate::linalg::{norm2, Tridiagonal};
use crate::mesh::{load_jacobian, load_vector, norm_lp, AssembledOperators, FemField};
use crate::nonlinearity::{BoundaryDamping, SourceTerm};
use crate::quadrature::points_for_exponent;
use serde::Serialize;
use std::sync::Arc;

pub type ForcingFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// What drives the equation: a prescribed interior forcing `g(t, x)` or the
/// reaction term `f(x, u)`.
#[derive(Clone)]
pub enum Mode {
    Forced(ForcingFn),
    Reaction(SourceTerm),
}

impl Mode {
    /// Exponent used for the ledger's `K` and `||u||_p` columns: the source
    /// exponent in reaction mode, 2 in forced mode (the `f = 0` reading).
    pub fn ledger_exponent(&self) -> f64 {
        match self {
            Mode::Forced(_) => 2.0,
            Mode::Reaction(f) => f.p,
        }
    }
}

/// Newton start for the implicit solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NewtonGuess {
    /// Start from the previous time level.
    Previous,
    /// Start from the linear extrapolation `2u - u_prev`.
    Extrapolated,
}

#[derive(Debug, Clone)]
pub struct StepOptions {
    /// Tolerance on the scaled Newton residual.
    pub newton_tol: f64,
    pub max_newton_iter: usize,
    pub tau_min: f64,
    pub tau_max: f64,
    /// Per-step relative growth of `||u||_p` the controller aims under.
    pub growth_cap: f64,
    /// Jacobian regularization of `|v|` near zero (residual stays exact).
    pub jac_delta: f64,
    pub guess: NewtonGuess,
}

impl Default for StepOptions {
    fn default() -> Self {
        StepOptions {
            newton_tol: 1e-11,
            max_newton_iter: 30,
            tau_min: 1e-12,
            tau_max: 0.1,
            growth_cap: 0.05,
            jac_delta: 1e-12,
            guess: NewtonGuess::Previous,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StepStatus {
    Accepted,
    /// Accepted after at least one tau halving.
    RetriedSmallerTau,
    NewtonFailure,
    TauUnderflow,
}

#[derive(Debug, Clone, Serialize)]
pub struct StepOutcome {
    pub status: StepStatus,
    pub newton_iterations: usize,
    pub residual_norm: f64,
    pub tau_used: f64,
}

/// Evolving state of one simulation.
#[derive(Debug, Clone)]
pub struct SimState {
    pub t: f64,
    pub field: FemField,
    pub prev_field: FemField,
    pub tau: f64,
    pub step_index: usize,
    /// Cumulative `int_0^t ||u_t||_2^2`.
    pub diss_interior: f64,
    /// Cumulative `int_0^t Q(., L, u_t(L)) u_t(L)`.
    pub diss_boundary: f64,
    /// Cumulative source work `int_0^t int (g or f) u_t`.
    pub source_work: f64,
}

/// One ledger row. The CSV surface carries the fixed column set; the extra
/// cumulative fields feed `energy_residual` and the blow-up fit.
#[derive(Debug, Clone, Serialize)]
pub struct LedgerRecord {
    pub t: f64,
    pub j: f64,
    pub k: f64,
    pub h: f64,
    pub norm_h1: f64,
    pub norm_grad: f64,
    pub norm_lp: f64,
    pub trace: f64,
    pub residual: f64,
    pub tau: f64,
    pub newton_iters: usize,
    pub grad_sq_half: f64,
    pub diss_interior: f64,
    pub diss_boundary: f64,
    pub source_work: f64,
    pub hprime: f64,
}

pub const LEDGER_CSV_HEADER: &str =
    "t,J,K,H,normH1,normGrad,normLp,trace,residual,tau,newton_iters";

#[derive(Debug, Clone, Serialize)]
pub struct EnergyLedger {
    /// Reference level for `H = E2 - J`; NaN columns when absent.
    pub e2: Option<f64>,
    /// Exponent behind the `K` and `normLp` columns.
    pub p: f64,
    pub records: Vec<LedgerRecord>,
}

impl EnergyLedger {
    pub fn csv_row(r: &LedgerRecord) -> String {
        format!(
            "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{}",
            r.t,
            r.j,
            r.k,
            r.h,
            r.norm_h1,
            r.norm_grad,
            r.norm_lp,
            r.trace,
            r.residual,
            r.tau,
            r.newton_iters
        )
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(LEDGER_CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&Self::csv_row(r));
            out.push('\n');
        }
        out
    }

    pub fn last(&self) -> &LedgerRecord {
        self.records.last().expect("ledger holds at least the initial record")
    }
}

/// Energy-identity residual `|1/2||grad u||^2 |_s^t + D|_s^t - W|_s^t|`
/// between two ledger rows, with the dissipation `D` and work `W` taken
/// from the same rectangle-rule accumulators the stepper maintains.
pub fn energy_residual(ledger: &EnergyLedger, s_index: usize, t_index: usize) -> Result<f64> {
    let n = ledger.records.len();
    if s_index >= n || t_index >= n || s_index > t_index {
        return Err(CoreError::InvalidArgument(format!(
            "ledger indices ({s_index}, {t_index}) out of range 0..{n}"
        )));
    }
    let a = &ledger.records[s_index];
    let b = &ledger.records[t_index];
    let lhs = (b.grad_sq_half - a.grad_sq_half)
        + (b.diss_interior - a.diss_interior)
        + (b.diss_boundary - a.diss_boundary);
    let rhs = b.source_work - a.source_work;
    Ok((lhs - rhs).abs())
}

/// A single simulation: owns operators, state, ledger and (optionally) the
/// full trajectory. Strictly sequential; distinct simulations only share
/// the immutable mesh.
pub struct Simulation {
    pub ops: AssembledOperators,
    pub mode: Mode,
    pub damping: BoundaryDamping,
    pub opts: StepOptions,
    pub state: SimState,
    pub ledger: EnergyLedger,
    pub initial_field: FemField,
    pub record_trajectory: bool,
    pub trajectory: Vec<FemField>,
}

impl Simulation {
    pub fn new(
        ops: AssembledOperators,
        u0: FemField,
        mode: Mode,
        damping: BoundaryDamping,
        tau0: f64,
        opts: StepOptions,
        e2: Option<f64>,
    ) -> Result<Self> {
        if !Arc::ptr_eq(&ops.mesh, &u0.mesh) && *ops.mesh != *u0.mesh {
            return Err(CoreError::MeshMismatch("initial field lives on a different mesh".into()));
        }
        if !u0.constrained || u0.coeffs[0] != 0.0 {
            return Err(CoreError::InvalidArgument(
                "initial field must be constrained at the Dirichlet node".into(),
            ));
        }
        if !(tau0 > 0.0) {
            return Err(CoreError::InvalidArgument(format!("tau0 = {tau0} must be positive")));
        }
        let p = mode.ledger_exponent();
        let state = SimState {
            t: 0.0,
            field: u0.clone(),
            prev_field: u0,
            tau: tau0,
            step_index: 0,
            diss_interior: 0.0,
            diss_boundary: 0.0,
            source_work: 0.0,
        };
        let initial_field = state.field.clone();
        let mut sim = Simulation {
            ops,
            mode,
            damping,
            opts,
            state,
            ledger: EnergyLedger { e2, p, records: Vec::new() },
            initial_field,
            record_trajectory: false,
            trajectory: Vec::new(),
        };
        let rec = sim.make_record(tau0, 0, 0.0)?;
        sim.ledger.records.push(rec);
        Ok(sim)
    }

    fn potential_integral(&self, field: &FemField) -> Result<f64> {
        match &self.mode {
            Mode::Forced(_) => Ok(0.0),
            Mode::Reaction(f) => {
                let pts = points_for_exponent(f.p);
                let mut err = None;
                let v = crate::mesh::element_integral(field, pts, |x, u| match f.potential(x, u) {
                    Ok(v) => v,
                    Err(e) => {
                        err = Some(e);
                        0.0
                    }
                });
                match err {
                    Some(e) => Err(e),
                    None => Ok(v),
                }
            }
        }
    }

    fn make_record(&self, tau: f64, newton_iters: usize, hprime: f64) -> Result<LedgerRecord> {
        let s = &self.state;
        let grad_sq = self.ops.stiffness.quad_form(&s.field.coeffs, &s.field.coeffs).max(0.0);
        let p = self.ledger.p;
        let lp = norm_lp(&s.field, p);
        let j = 0.5 * grad_sq - self.potential_integral(&s.field)?;
        let k = grad_sq - lp.powf(p);
        let h = self.ledger.e2.map_or(f64::NAN, |e2| e2 - j);
        let residual = if self.ledger.records.is_empty() {
            0.0
        } else {
            let first = &self.ledger.records[0];
            let lhs = (0.5 * grad_sq - first.grad_sq_half)
                + (s.diss_interior - first.diss_interior)
                + (s.diss_boundary - first.diss_boundary);
            (lhs - (s.source_work - first.source_work)).abs()
        };
        Ok(LedgerRecord {
            t: s.t,
            j,
            k,
            h,
            norm_h1: self.ops.norm_h1(&s.field),
            norm_grad: grad_sq.sqrt(),
            norm_lp: lp,
            trace: s.field.trace_gamma1(),
            residual,
            tau,
            newton_iters,
            grad_sq_half: 0.5 * grad_sq,
            diss_interior: s.diss_interior,
            diss_boundary: s.diss_boundary,
            source_work: s.source_work,
            hprime,
        })
    }

    /// Load vector at `t_next` for the current Newton iterate.
    fn assemble_load(&self, t_next: f64, iterate: &FemField) -> Vec<f64> {
        match &self.mode {
            Mode::Forced(g) => {
                let g_nodal: Vec<f64> =
                    self.ops.mesh.nodes.iter().map(|&x| g(t_next, x)).collect();
                self.ops.mass.matvec(&g_nodal)
            }
            Mode::Reaction(f) => {
                load_vector(iterate, 3, |x, u| f.eval_unchecked(x, u))
            }
        }
    }

    /// Residual of the implicit system at the iterate; row 0 pins the
    /// Dirichlet value.
    fn residual(&self, t_next: f64, tau: f64, iterate: &FemField) -> Vec<f64> {
        let n = self.ops.mesh.n_nodes();
        let u_old = &self.state.field.coeffs;
        let u_new = &iterate.coeffs;
        let diff: Vec<f64> = u_new.iter().zip(u_old).map(|(a, b)| (a - b) / tau).collect();
        let m_ut = self.ops.mass.matvec(&diff);
        let a_u = self.ops.stiffness.matvec(u_new);
        let load = self.assemble_load(t_next, iterate);
        let mut r: Vec<f64> = (0..n).map(|i| m_ut[i] + a_u[i] - load[i]).collect();
        let v_n = diff[n - 1];
        r[n - 1] += self.damping.eval(t_next, self.ops.mesh.length, v_n);
        r[0] = u_new[0];
        r
    }

    fn jacobian(&self, t_next: f64, tau: f64, iterate: &FemField) -> Tridiagonal {
        let n = self.ops.mesh.n_nodes();
        let mut jac = Tridiagonal::zeros(n);
        for i in 0..n {
            jac.diag[i] = self.ops.mass.diag[i] / tau + self.ops.stiffness.diag[i];
            if i + 1 < n {
                jac.sub[i] = self.ops.mass.sub[i] / tau + self.ops.stiffness.sub[i];
                jac.sup[i] = self.ops.mass.sup[i] / tau + self.ops.stiffness.sup[i];
            }
        }
        if let Mode::Reaction(f) = &self.mode {
            let df = load_jacobian(iterate, 3, |x, u| f.derivative_u(x, u));
            for i in 0..n {
                jac.diag[i] -= df.diag[i];
                if i + 1 < n {
                    jac.sub[i] -= df.sub[i];
                    jac.sup[i] -= df.sup[i];
                }
            }
        }
        let v_n = (iterate.coeffs[n - 1] - self.state.field.coeffs[n - 1]) / tau;
        jac.diag[n - 1] +=
            self.damping.derivative_v(t_next, self.ops.mesh.length, v_n, self.opts.jac_delta) / tau;
        jac.diag[0] = 1.0;
        jac.sup[0] = 0.0;
        jac.sub[0] = 0.0;
        jac
    }

    /// Newton solve of one backward-Euler step at step size `tau`.
    /// Returns the new field and iteration count, or the final residual
    /// norm on failure.
    fn try_step(&self, tau: f64) -> std::result::Result<(FemField, usize, f64), f64> {
        let t_next = self.state.t + tau;
        let mut iterate = match self.opts.guess {
            NewtonGuess::Previous => self.state.field.clone(),
            NewtonGuess::Extrapolated => {
                let coeffs: Vec<f64> = self
                    .state
                    .field
                    .coeffs
                    .iter()
                    .zip(&self.state.prev_field.coeffs)
                    .map(|(a, b)| 2.0 * a - b)
                    .collect();
                FemField { mesh: Arc::clone(&self.ops.mesh), coeffs, constrained: true }
            }
        };
        // scale reflecting the magnitude of the terms the residual balances
        let u = &self.state.field.coeffs;
        let scale = {
            let m_u = self.ops.mass.matvec(u);
            let a_u = self.ops.stiffness.matvec(u);
            (norm2(&m_u) / tau + norm2(&a_u)).max(1.0)
        };
        let mut r = self.residual(t_next, tau, &iterate);
        let mut r_norm = norm2(&r);
        for it in 0..self.opts.max_newton_iter {
            if r_norm <= self.opts.newton_tol * scale {
                return Ok((iterate, it, r_norm));
            }
            let jac = self.jacobian(t_next, tau, &iterate);
            let neg_r: Vec<f64> = r.iter().map(|x| -x).collect();
            let delta = match jac.solve(&neg_r) {
                Ok(d) => d,
                Err(_) => return Err(r_norm),
            };
            if delta.iter().any(|d| !d.is_finite()) {
                return Err(r_norm);
            }
            // backtracking on the residual norm
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..12 {
                let coeffs: Vec<f64> = iterate
                    .coeffs
                    .iter()
                    .zip(&delta)
                    .map(|(x, d)| x + alpha * d)
                    .collect();
                let trial = FemField {
                    mesh: Arc::clone(&self.ops.mesh),
                    coeffs,
                    constrained: true,
                };
                let r_trial = self.residual(t_next, tau, &trial);
                let r_trial_norm = norm2(&r_trial);
                if r_trial_norm.is_finite() && r_trial_norm < r_norm * (1.0 - 1e-4 * alpha) {
                    iterate = trial;
                    r = r_trial;
                    r_norm = r_trial_norm;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                return Err(r_norm);
            }
        }
        if r_norm <= self.opts.newton_tol * scale {
            return Ok((iterate, self.opts.max_newton_iter, r_norm));
        }
        Err(r_norm)
    }

    /// Advance one accepted step, halving `tau` on Newton failure. On
    /// success the state, accumulators and ledger advance; on
    /// `TauUnderflow` or `NewtonFailure` nothing moves.
    pub fn step(&mut self) -> Result<StepOutcome> {
        let mut tau = self.state.tau;
        let mut halved = false;
        loop {
            if tau < self.opts.tau_min {
                return Ok(StepOutcome {
                    status: StepStatus::TauUnderflow,
                    newton_iterations: 0,
                    residual_norm: f64::NAN,
                    tau_used: tau,
                });
            }
            match self.try_step(tau) {
                Ok((new_field, iters, r_norm)) => {
                    let n = self.ops.mesh.n_nodes();
                    let t_next = self.state.t + tau;
                    let u_t: Vec<f64> = new_field
                        .coeffs
                        .iter()
                        .zip(&self.state.field.coeffs)
                        .map(|(a, b)| (a - b) / tau)
                        .collect();
                    let diss_i = self.ops.mass.quad_form(&u_t, &u_t).max(0.0);
                    let v_n = u_t[n - 1];
                    let q_val = self.damping.eval(t_next, self.ops.mesh.length, v_n);
                    let diss_b = q_val * v_n;
                    let load = self.assemble_load(t_next, &new_field);
                    let work: f64 = load.iter().zip(&u_t).map(|(l, v)| l * v).sum();

                    self.state.prev_field =
                        std::mem::replace(&mut self.state.field, new_field);
                    self.state.t = t_next;
                    self.state.tau = tau;
                    self.state.step_index += 1;
                    self.state.diss_interior += tau * diss_i;
                    self.state.diss_boundary += tau * diss_b;
                    self.state.source_work += tau * work;

                    let hprime = diss_i + diss_b;
                    let rec = self.make_record(tau, iters, hprime)?;
                    self.ledger.records.push(rec);
                    if self.record_trajectory {
                        self.trajectory.push(self.state.field.clone());
                    }
                    return Ok(StepOutcome {
                        status: if halved {
                            StepStatus::RetriedSmallerTau
                        } else {
                            StepStatus::Accepted
                        },
                        newton_iterations: iters,
                        residual_norm: r_norm,
                        tau_used: tau,
                    });
                }
                Err(r_norm) => {
                    if tau * 0.5 < self.opts.tau_min {
                        return Ok(StepOutcome {
                            status: if r_norm.is_finite() {
                                StepStatus::TauUnderflow
                            } else {
                                StepStatus::NewtonFailure
                            },
                            newton_iterations: self.opts.max_newton_iter,
                            residual_norm: r_norm,
                            tau_used: tau,
                        });
                    }
                    tau *= 0.5;
                    halved = true;
                }
            }
        }
    }

    /// Post-step size controller: keep the per-step growth of `||u||_p`
    /// under `growth_cap` and the Newton effort under 2/3 of the budget.
    /// Returns the new `tau` and a flag raised when the controller is
    /// pinned at `tau_min` with growth still above the cap.
    pub fn adapt_tau(&mut self) -> (f64, bool) {
        let n = self.ledger.records.len();
        if n < 2 {
            return (self.state.tau, false);
        }
        let cur = &self.ledger.records[n - 1];
        let prev = &self.ledger.records[n - 2];
        let base = prev.norm_lp.max(1e-300);
        let growth = (cur.norm_lp - prev.norm_lp) / base;
        let mut factor = if growth > 0.0 { (self.opts.growth_cap / growth).min(2.0) } else { 2.0 };
        if cur.newton_iters * 3 > self.opts.max_newton_iter * 2 {
            factor = factor.min(0.5);
        }
        let tau_new = (self.state.tau * factor).clamp(self.opts.tau_min, self.opts.tau_max);
        let pinned = tau_new <= self.opts.tau_min && growth > self.opts.growth_cap;
        self.state.tau = tau_new;
        (tau_new, pinned)
    }

    /// Advance with fixed `tau` until `t_end` (within half a step).
    pub fn run_fixed_tau(&mut self, t_end: f64) -> Result<StepStatus> {
        while self.state.t < t_end - 0.5 * self.state.tau {
            let out = self.step()?;
            match out.status {
                StepStatus::Accepted | StepStatus::RetriedSmallerTau => {}
                other => return Ok(other),
            }
        }
        Ok(StepStatus::Accepted)
    }
}

/// Trajectory of a forced-mode run, the input of the stability check.
pub struct ForcedRun {
    pub times: Vec<f64>,
    pub initial: FemField,
    pub fields: Vec<FemField>,
    pub forcing: ForcingFn,
}

impl Simulation {
    /// Package a recorded forced-mode trajectory.
    pub fn into_forced_run(self) -> Result<ForcedRun> {
        let forcing = match &self.mode {
            Mode::Forced(g) => Arc::clone(g),
            Mode::Reaction(_) => {
                return Err(CoreError::InvalidArgument(
                    "stability check applies to forced-mode runs".into(),
                ))
            }
        };
        if !self.record_trajectory {
            return Err(CoreError::InvalidArgument("trajectory was not recorded".into()));
        }
        let times: Vec<f64> = self.ledger.records.iter().map(|r| r.t).collect();
        let u0 = self.initial_field;
        let mut fields = self.trajectory;
        fields.insert(0, u0.clone());
        if fields.len() != times.len() {
            return Err(CoreError::InvalidArgument(
                "trajectory length does not match the ledger".into(),
            ));
        }
        Ok(ForcedRun { times, initial: u0, fields, forcing })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HadamardReport {
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs / rhs`; NaN when both sides vanish (identical runs).
    pub ratio: f64,
    pub pass: bool,
    pub slack: f64,
}

/// Discrete check of the continuous-dependence estimate for the forced
/// problem: `sup_t ||u1 - u2||_{H1}^2` against
/// `2(1+T)(||u01 - u02||_{H1}^2 + ||g1 - g2||_{L2((0,T)xOmega)}^2)`,
/// accepted up to `slack` of discretization error.
pub fn check_hadamard_stability(
    ops: &AssembledOperators,
    run1: &ForcedRun,
    run2: &ForcedRun,
    slack: f64,
) -> Result<HadamardReport> {
    if run1.times.len() != run2.times.len()
        || run1
            .times
            .iter()
            .zip(&run2.times)
            .any(|(a, b)| (a - b).abs() > 1e-12 * (1.0 + a.abs()))
    {
        return Err(CoreError::MeshMismatch("runs use different time grids".into()));
    }
    if run1.fields[0].mesh.n_nodes() != run2.fields[0].mesh.n_nodes() {
        return Err(CoreError::MeshMismatch("runs use different meshes".into()));
    }
    let mut lhs: f64 = 0.0;
    for (f1, f2) in run1.fields.iter().zip(&run2.fields) {
        let diff: Vec<f64> = f1.coeffs.iter().zip(&f2.coeffs).map(|(a, b)| a - b).collect();
        let h1_sq = ops.mass.quad_form(&diff, &diff) + ops.stiffness.quad_form(&diff, &diff);
        lhs = lhs.max(h1_sq);
    }
    let d0: Vec<f64> = run1.initial.coeffs.iter().zip(&run2.initial.coeffs).map(|(a, b)| a - b).collect();
    let u0_sq = ops.mass.quad_form(&d0, &d0) + ops.stiffness.quad_form(&d0, &d0);

    // ||g1 - g2||^2 over (0,T) x Omega by the same rectangle rule the
    // stepper uses: value at the right endpoint of each step
    let mut g_sq = 0.0;
    for k in 1..run1.times.len() {
        let t = run1.times[k];
        let tau = run1.times[k] - run1.times[k - 1];
        let diff: Vec<f64> = ops
            .mesh
            .nodes
            .iter()
            .map(|&x| (run1.forcing)(t, x) - (run2.forcing)(t, x))
            .collect();
        g_sq += tau * ops.mass.quad_form(&diff, &diff);
    }
    let t_final = *run1.times.last().unwrap();
    let rhs = 2.0 * (1.0 + t_final) * (u0_sq + g_sq);
    let ratio = if rhs > 0.0 { lhs / rhs } else if lhs == 0.0 { 0.0 } else { f64::INFINITY };
    Ok(HadamardReport { lhs, rhs, ratio, pass: ratio <= 1.0 + slack, slack })
}
