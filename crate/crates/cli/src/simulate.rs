//! Reaction-mode simulation driver with blow-up detection and the fitted
//! ODE extrapolation of the blow-up time.

use crate::config::RunConfig;
use crate::profiles::{b1_maximizer_profile, plain_profile, well_setup};
use anyhow::Context;
use heatwell::mesh::{assemble, FemField};
use heatwell::region;
use heatwell::stepper::{
    EnergyLedger, Mode, Simulation, StepOptions, StepStatus,
};
use heatwell::well::{classify, MembershipVerdict, SetLabel, WellConstants};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind")]
pub enum RunStatus {
    GlobalUntilT,
    BlowupDetected { t: f64, reason: String },
    Inconclusive { reason: String },
}

pub struct RunArtifacts {
    pub ledger: EnergyLedger,
    pub status: RunStatus,
    pub constants: Option<WellConstants>,
    pub initial_verdict: Option<MembershipVerdict>,
    pub maximizer: Option<FemField>,
    pub final_field: FemField,
    pub trajectory: Option<Vec<FemField>>,
    pub e2: Option<f64>,
}

pub fn run_simulation(cfg: &RunConfig) -> anyhow::Result<RunArtifacts> {
    run_simulation_ext(cfg, false)
}

/// Run the reaction problem from a config. `record_trajectory` keeps every
/// accepted field (used by the dependence experiments).
pub fn run_simulation_ext(cfg: &RunConfig, record_trajectory: bool) -> anyhow::Result<RunArtifacts> {
    let mesh = cfg.mesh()?;
    let ops = assemble(&mesh);
    let source = cfg.source_term()?;
    let damping = cfg.damping_term()?;

    // potential-well setup where the theory applies; a non-power source
    // additionally needs the D1-based generalized constants
    let needs_well = cfg.p > 2.0 || cfg.profile == "b1-maximizer";
    let (constants, maximizer) = if needs_well {
        let (mut wc, maximizer) = well_setup(cfg, &ops)?;
        if cfg.source != "power" {
            let ascent = heatwell::well::AscentOptions {
                seed: cfg.seed,
                ..heatwell::well::AscentOptions::default()
            };
            let (d1, _) = heatwell::well::compute_d1(&ops, &source, &ascent)
                .context("computing D1 for the general source")?;
            wc.d1 = Some(d1);
        }
        (Some(wc), Some(maximizer))
    } else {
        (None, None)
    };

    let u0 = match plain_profile(cfg, &mesh)? {
        Some(f) => f,
        None => b1_maximizer_profile(
            cfg,
            &ops,
            constants.as_ref().expect("b1-maximizer profile forces well setup"),
            maximizer.as_ref().unwrap(),
        )?,
    };

    let initial_verdict = match &constants {
        Some(wc) => {
            let tol = cfg.classification_tol.unwrap_or_else(|| wc.default_tol());
            Some(classify(&ops, &u0, wc, &source, tol)?)
        }
        None => None,
    };

    // E2 policy: explicit value, else the midpoint of (J(u0), E1) whenever
    // the datum actually sits below the (finite) well level
    let e2 = cfg.e2.or_else(|| {
        let (wc, v) = (constants.as_ref()?, initial_verdict.as_ref()?);
        let th = wc.thresholds(cfg.source == "power").ok()?;
        (v.j < th.e1 && th.e1.is_finite()).then(|| 0.5 * (v.j + th.e1))
    });

    let opts = StepOptions {
        tau_min: cfg.tau_min,
        tau_max: cfg.tau_max,
        growth_cap: cfg.growth_cap,
        ..StepOptions::default()
    };
    let mut sim = Simulation::new(
        ops,
        u0,
        Mode::Reaction(source),
        damping,
        cfg.tau0,
        opts,
        e2,
    )
    .context("initializing the simulation")?;
    sim.record_trajectory = record_trajectory;

    let mut pinned_streak = 0usize;
    let status = loop {
        // land exactly on t_end: clamp the final step instead of
        // overshooting, so runs with different tau share the endpoint
        let remaining = cfg.t_end - sim.state.t;
        if remaining <= cfg.tau_min {
            break RunStatus::GlobalUntilT;
        }
        if sim.state.tau > remaining {
            sim.state.tau = remaining;
        }
        let out = sim.step()?;
        match out.status {
            StepStatus::Accepted | StepStatus::RetriedSmallerTau => {}
            StepStatus::TauUnderflow => {
                let rec = sim.ledger.last();
                let growing = sim.ledger.records.len() >= 2 && {
                    let prev = &sim.ledger.records[sim.ledger.records.len() - 2];
                    rec.norm_lp > prev.norm_lp
                };
                break if growing {
                    RunStatus::BlowupDetected {
                        t: sim.state.t,
                        reason: "tau underflow under norm growth".into(),
                    }
                } else {
                    RunStatus::Inconclusive { reason: "tau underflow without growth".into() }
                };
            }
            StepStatus::NewtonFailure => {
                anyhow::bail!(
                    "Newton failed at t = {} with tau = {} (residual {})",
                    sim.state.t,
                    out.tau_used,
                    out.residual_norm
                );
            }
        }
        let rec = sim.ledger.last();
        if rec.norm_h1 > cfg.blowup_threshold {
            break RunStatus::BlowupDetected {
                t: sim.state.t,
                reason: format!("H1 norm exceeded {:e}", cfg.blowup_threshold),
            };
        }
        if !cfg.fixed_tau {
            let (_, pinned) = sim.adapt_tau();
            pinned_streak = if pinned { pinned_streak + 1 } else { 0 };
            if pinned_streak >= 3 {
                break RunStatus::BlowupDetected {
                    t: sim.state.t,
                    reason: "growth cap persistently exceeded at tau_min".into(),
                };
            }
        }
    };

    Ok(RunArtifacts {
        status,
        constants,
        initial_verdict,
        maximizer,
        final_field: sim.state.field.clone(),
        trajectory: if record_trajectory { Some(std::mem::take(&mut sim.trajectory)) } else { None },
        e2,
        ledger: sim.ledger,
    })
}

/// Least-squares fit of `log H' = log C + (1 + beta) log H` on the tail of
/// a trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct BlowupFit {
    pub beta: f64,
    pub c: f64,
    pub t_max: f64,
    /// Spread of the per-point extrapolations over the tail window.
    pub t_max_window: (f64, f64),
    pub points: usize,
    pub window_start: f64,
    pub window_end: f64,
}

/// Fit the blow-up ODE on the tail: the last 30% of the records with
/// `H > 0` and `H' > 0`, at least 10 points.
pub fn fit_blowup_ode(times: &[f64], h: &[f64], hprime: &[f64]) -> Option<BlowupFit> {
    let idx: Vec<usize> = (0..times.len())
        .filter(|&i| h[i] > 0.0 && hprime[i] > 0.0 && h[i].is_finite() && hprime[i].is_finite())
        .collect();
    if idx.len() < 10 {
        return None;
    }
    let take = (idx.len() * 3 / 10).max(10).min(idx.len());
    let tail = &idx[idx.len() - take..];

    let xs: Vec<f64> = tail.iter().map(|&i| h[i].ln()).collect();
    let ys: Vec<f64> = tail.iter().map(|&i| hprime[i].ln()).collect();
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-30 {
        return None;
    }
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    let beta = slope - 1.0;
    let c = intercept.exp();
    if !(beta > 0.0) || !(c > 0.0) || !beta.is_finite() {
        return None;
    }
    // closed-form blow-up time of H' = C H^{1+beta} from each tail point;
    // their spread measures how well the ODE describes the data
    let mut t_lo = f64::INFINITY;
    let mut t_hi = f64::NEG_INFINITY;
    for &i in tail {
        let t_max_i = times[i] + h[i].powf(-beta) / (c * beta);
        t_lo = t_lo.min(t_max_i);
        t_hi = t_hi.max(t_max_i);
    }
    let last = *tail.last().unwrap();
    let t_max = times[last] + h[last].powf(-beta) / (c * beta);
    Some(BlowupFit {
        beta,
        c,
        t_max,
        t_max_window: (t_lo, t_hi),
        points: take,
        window_start: times[tail[0]],
        window_end: times[last],
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BlowupReport {
    pub status: RunStatus,
    pub detection_time: Option<f64>,
    pub fit: Option<BlowupFit>,
    /// Theoretical rate exponent at the window midpoint, for comparison.
    /// The theory bounds `H'` from below by `C H^{1 + beta_bar}`, so the
    /// fitted beta is reported against it without asserting equality.
    pub beta_bar_s: Option<f64>,
    pub s_used: Option<f64>,
    /// Set by refinement studies; a single run cannot judge its own
    /// stability.
    pub refinement_stable: Option<bool>,
}

/// Extrapolate the blow-up time from a finished run's ledger.
pub fn detect_and_extrapolate_blowup(
    ledger: &EnergyLedger,
    status: &RunStatus,
    p: f64,
    m: f64,
    n_dim: u32,
) -> BlowupReport {
    let times: Vec<f64> = ledger.records.iter().map(|r| r.t).collect();
    let h: Vec<f64> = ledger.records.iter().map(|r| r.h).collect();
    let hprime: Vec<f64> = ledger.records.iter().map(|r| r.hprime).collect();
    let fit = fit_blowup_ode(&times, &h, &hprime);
    let (beta_bar_s, s_used) = match region::default_s(p, m, n_dim) {
        Ok(s) => match region::rate_exponents(p, m, n_dim, s) {
            Ok((_, beta_bar)) => (Some(beta_bar), Some(s)),
            Err(_) => (None, None),
        },
        Err(_) => (None, None),
    };
    let detection_time = match status {
        RunStatus::BlowupDetected { t, .. } => Some(*t),
        _ => None,
    };
    let status = match (status, &fit) {
        (RunStatus::BlowupDetected { .. }, _) => status.clone(),
        (RunStatus::GlobalUntilT, _) => status.clone(),
        (RunStatus::Inconclusive { .. }, _) => status.clone(),
    };
    let report_status = if detection_time.is_none() && fit.is_none() {
        match status {
            RunStatus::GlobalUntilT => RunStatus::GlobalUntilT,
            other => other,
        }
    } else if detection_time.is_some() && fit.is_none() {
        RunStatus::Inconclusive { reason: "blow-up flagged but the tail does not fit the ODE".into() }
    } else {
        status
    };
    BlowupReport {
        status: report_status,
        detection_time,
        fit,
        beta_bar_s,
        s_used,
        refinement_stable: None,
    }
}

/// Label persistence along a trajectory, judged from the ledger scalars.
#[derive(Debug, Clone, Serialize)]
pub struct InvarianceOutcome {
    pub initial_label: SetLabel,
    pub snapshots: usize,
    pub violations: usize,
    pub ambiguous: usize,
    pub persistent: bool,
}

/// Re-classify every ledger row against the thresholds and check that the
/// initial label persists (boundary-ambiguous rows are excluded, matching
/// the numerical resolution of the strict set inequalities).
pub fn check_invariance(
    ledger: &EnergyLedger,
    th: &heatwell::well::ClassifyThresholds,
    tol: f64,
    initial: SetLabel,
) -> InvarianceOutcome {
    let mut violations = 0usize;
    let mut ambiguous = 0usize;
    for r in &ledger.records {
        let v = heatwell::well::classify_scalars(r.j, r.k, r.norm_grad, r.norm_lp, th, tol);
        match v.label {
            SetLabel::BoundaryAmbiguous => ambiguous += 1,
            l if l == initial => {}
            _ => violations += 1,
        }
    }
    InvarianceOutcome {
        initial_label: initial,
        snapshots: ledger.records.len(),
        violations,
        ambiguous,
        persistent: violations == 0,
    }
}
