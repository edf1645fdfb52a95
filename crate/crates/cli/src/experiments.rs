//! Theorem-level experiment suites: set invariance, continuous dependence,
//! and scheme self-convergence.

use crate::config::RunConfig;
use crate::simulate::{check_invariance, run_simulation_ext, InvarianceOutcome, RunStatus};
use anyhow::{bail, Context};
use heatwell::mesh::{assemble, AssembledOperators, FemField};
use heatwell::stepper::{
    check_hadamard_stability, energy_residual, ForcingFn, HadamardReport, Mode, Simulation,
    StepOptions, StepStatus,
};
use heatwell::well::SetLabel;
use serde::Serialize;
use std::sync::Arc;

/// Relative amplitudes (in units of `lambda1`) for the invariance grid:
/// five inside the well on each side of the maximizer ray.
pub const WS_AMPLITUDES: [f64; 5] = [0.3, 0.5, 0.7, 0.85, 0.95];
pub const WU_AMPLITUDES: [f64; 5] = [1.05, 1.15, 1.3, 1.5, 1.8];

#[derive(Debug, Clone, Serialize)]
pub struct InvariantRunSummary {
    pub amplitude_rel: f64,
    pub initial_label: SetLabel,
    pub status: RunStatus,
    /// Absent when the datum is outside the theorem's scope (label
    /// `Neither` or ambiguous): no invariance is claimed there.
    pub outcome: Option<InvarianceOutcome>,
}

#[derive(Debug, Clone, Serialize)]
pub struct InvariantSetsReport {
    pub runs: Vec<InvariantRunSummary>,
    pub in_scope_runs: usize,
    pub persistent_runs: usize,
    pub pass: bool,
}

/// Run the invariance grid: the `B1`-maximizer ray scaled through the well
/// on both sides, each trajectory re-classified snapshot by snapshot.
pub fn experiment_invariant_sets(base: &RunConfig) -> anyhow::Result<InvariantSetsReport> {
    if !(base.p > 2.0) {
        bail!("set invariance needs p > 2");
    }
    let mut runs = Vec::new();
    let mut in_scope = 0usize;
    let mut persistent = 0usize;
    for &amp in WS_AMPLITUDES.iter().chain(&WU_AMPLITUDES) {
        let mut cfg = base.clone();
        cfg.profile = "b1-maximizer".into();
        cfg.amplitude = amp;
        cfg.amplitude_relative = true;
        let art = run_simulation_ext(&cfg, false)
            .with_context(|| format!("invariance run at relative amplitude {amp}"))?;
        let wc = art.constants.as_ref().expect("p > 2 run carries constants");
        let verdict = art.initial_verdict.as_ref().expect("p > 2 run classifies u0");
        let tol = cfg.classification_tol.unwrap_or_else(|| wc.default_tol());
        let th = wc.thresholds(cfg.source == "power")?;
        let outcome = match verdict.label {
            SetLabel::Ws | SetLabel::Wu => {
                in_scope += 1;
                let o = check_invariance(&art.ledger, &th, tol, verdict.label);
                if o.persistent {
                    persistent += 1;
                }
                Some(o)
            }
            _ => None,
        };
        runs.push(InvariantRunSummary {
            amplitude_rel: amp,
            initial_label: verdict.label,
            status: art.status,
            outcome,
        });
    }
    Ok(InvariantSetsReport {
        pass: in_scope == persistent && in_scope > 0,
        runs,
        in_scope_runs: in_scope,
        persistent_runs: persistent,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DependenceReport {
    pub eps: f64,
    /// `sup_t ||u_pert - u||_{H1}` for perturbation sizes eps, eps/2, eps/4.
    pub sup_distances: [f64; 3],
    pub ratios: [f64; 2],
    pub ratios_in_band: bool,
    /// Fitted exponential-envelope rate `c` in
    /// `sup_t ||u_pert - u|| <= ||du0|| e^{c t}`.
    pub envelope_rate: f64,
    pub envelope_finite: bool,
    pub hadamard: Vec<HadamardReport>,
    pub pass: bool,
}

const RATIO_BAND: (f64, f64) = (1.6, 2.4);

fn h1_distance(ops: &AssembledOperators, a: &FemField, b: &FemField) -> f64 {
    let d: Vec<f64> = a.coeffs.iter().zip(&b.coeffs).map(|(x, y)| x - y).collect();
    (ops.mass.quad_form(&d, &d) + ops.stiffness.quad_form(&d, &d)).max(0.0).sqrt()
}

fn perturbation_profile(cfg: &RunConfig, mesh: &Arc<heatwell::mesh::Mesh1D>) -> FemField {
    let length = cfg.length;
    FemField::interpolate(mesh, |x| (std::f64::consts::PI * x / length).sin(), true)
}

/// Continuous dependence on the initial datum for the reaction problem:
/// run a perturbation ladder on a shared fixed time grid and check the
/// first-order decay of the distances plus a finite exponential envelope.
pub fn experiment_dependence(base: &RunConfig) -> anyhow::Result<DependenceReport> {
    let mut cfg = base.clone();
    cfg.fixed_tau = true;
    let mesh = cfg.mesh()?;
    let ops = assemble(&mesh);
    let bump = perturbation_profile(&cfg, &mesh);

    let base_art = run_simulation_ext(&cfg, true).context("base dependence run")?;
    if base_art.status != RunStatus::GlobalUntilT {
        bail!("dependence study needs a globally existing base run, got {:?}", base_art.status);
    }
    let base_traj = base_art.trajectory.as_ref().unwrap();
    let base_u0 = reconstruct_u0(&cfg, &base_art)?;

    let mut sup_distances = [0.0f64; 3];
    let mut envelope_rate = f64::NEG_INFINITY;
    for (i, scale) in [1.0, 0.5, 0.25].into_iter().enumerate() {
        let eps = cfg.perturbation_eps * scale;
        let mut pert_cfg = cfg.clone();
        pert_cfg.profile = "nodal-table".into();
        pert_cfg.nodal_table = base_u0
            .coeffs
            .iter()
            .zip(&bump.coeffs)
            .map(|(u, b)| u + eps * b)
            .collect();
        let pert = run_simulation_ext(&pert_cfg, true)
            .with_context(|| format!("perturbed run at eps = {eps}"))?;
        let pert_traj = pert.trajectory.as_ref().unwrap();
        if pert_traj.len() != base_traj.len() {
            bail!("perturbed run left the shared time grid");
        }
        let d0 = h1_distance(&ops, &reconstruct_u0(&pert_cfg, &pert)?, &base_u0);
        let mut sup = d0;
        for (k, (a, b)) in pert_traj.iter().zip(base_traj).enumerate() {
            let d = h1_distance(&ops, a, b);
            sup = sup.max(d);
            let t = pert.ledger.records[k + 1].t;
            if d > 0.0 && d0 > 0.0 && t > 0.0 {
                envelope_rate = envelope_rate.max((d / d0).ln() / t);
            }
        }
        sup_distances[i] = sup;
    }

    let ratios = [sup_distances[0] / sup_distances[1], sup_distances[1] / sup_distances[2]];
    let ratios_in_band =
        ratios.iter().all(|r| (RATIO_BAND.0..=RATIO_BAND.1).contains(r));
    let envelope_finite = envelope_rate.is_finite();
    Ok(DependenceReport {
        eps: cfg.perturbation_eps,
        sup_distances,
        ratios,
        ratios_in_band,
        envelope_rate,
        envelope_finite,
        hadamard: Vec::new(),
        pass: ratios_in_band && envelope_finite,
    })
}

fn reconstruct_u0(cfg: &RunConfig, art: &crate::simulate::RunArtifacts) -> anyhow::Result<FemField> {
    // the initial field is the first trajectory-independent state; rebuild
    // it the same way the driver did
    let mesh = cfg.mesh()?;
    match crate::profiles::plain_profile(cfg, &mesh)? {
        Some(f) => Ok(f),
        None => {
            let ops = assemble(&mesh);
            crate::profiles::b1_maximizer_profile(
                cfg,
                &ops,
                art.constants.as_ref().expect("maximizer profile carries constants"),
                art.maximizer.as_ref().expect("maximizer profile carries the field"),
            )
        }
    }
}

/// Forced-mode dependence ladder: same structure, plus the discrete
/// stability estimate on every rung.
pub fn experiment_dependence_forced(base: &RunConfig) -> anyhow::Result<DependenceReport> {
    let cfg = base.clone();
    let mesh = cfg.mesh()?;
    let ops = assemble(&mesh);
    let bump = perturbation_profile(&cfg, &mesh);
    let length = cfg.length;
    let pi = std::f64::consts::PI;
    // forcing from a profile stationary at the dynamic node
    let g: ForcingFn = Arc::new(move |t: f64, x: f64| {
        let s = (pi * x / length).sin();
        let phi = s * s;
        let phi_xx = 2.0 * (pi / length).powi(2) * (2.0 * pi * x / length).cos();
        (-t).exp() * (-phi - phi_xx)
    });

    let u0 = crate::profiles::plain_profile(&cfg, &mesh)?
        .ok_or_else(|| anyhow::anyhow!("forced dependence needs an analytic profile"))?;
    let damping = cfg.damping_term()?;
    let opts = StepOptions {
        tau_min: cfg.tau_min,
        tau_max: cfg.tau0,
        growth_cap: cfg.growth_cap,
        ..StepOptions::default()
    };
    let run = |field: FemField| -> anyhow::Result<heatwell::stepper::ForcedRun> {
        let mut sim = Simulation::new(
            assemble(&mesh),
            field,
            Mode::Forced(Arc::clone(&g)),
            damping.clone(),
            cfg.tau0,
            opts.clone(),
            None,
        )?;
        sim.record_trajectory = true;
        let status = sim.run_fixed_tau(cfg.t_end)?;
        if status != StepStatus::Accepted {
            bail!("forced run did not reach t_end: {status:?}");
        }
        Ok(sim.into_forced_run()?)
    };

    let base_run = run(u0.clone())?;
    let mut sup_distances = [0.0f64; 3];
    let mut envelope_rate = f64::NEG_INFINITY;
    let mut hadamard = Vec::new();
    for (i, scale) in [1.0, 0.5, 0.25].into_iter().enumerate() {
        let eps = cfg.perturbation_eps * scale;
        let coeffs: Vec<f64> =
            u0.coeffs.iter().zip(&bump.coeffs).map(|(u, b)| u + eps * b).collect();
        let pert_field = FemField::from_coeffs(&mesh, coeffs, true)?;
        let pert_run = run(pert_field)?;
        let d0 = h1_distance(&ops, &pert_run.initial, &base_run.initial);
        let mut sup = 0.0f64;
        for (k, (a, b)) in pert_run.fields.iter().zip(&base_run.fields).enumerate() {
            let d = h1_distance(&ops, a, b);
            sup = sup.max(d);
            let t = base_run.times[k];
            if d > 0.0 && d0 > 0.0 && t > 0.0 {
                envelope_rate = envelope_rate.max((d / d0).ln() / t);
            }
        }
        sup_distances[i] = sup;
        hadamard.push(check_hadamard_stability(&ops, &base_run, &pert_run, 0.1)?);
    }
    let ratios = [sup_distances[0] / sup_distances[1], sup_distances[1] / sup_distances[2]];
    let ratios_in_band = ratios.iter().all(|r| (RATIO_BAND.0..=RATIO_BAND.1).contains(r));
    let hadamard_pass = hadamard.iter().all(|h| h.pass);
    Ok(DependenceReport {
        eps: cfg.perturbation_eps,
        sup_distances,
        ratios,
        ratios_in_band,
        envelope_rate,
        envelope_finite: envelope_rate.is_finite(),
        pass: ratios_in_band && envelope_rate.is_finite() && hadamard_pass,
        hadamard,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub temporal_order: f64,
    pub spatial_order: f64,
    pub residual_ratio: f64,
    pub temporal_in_band: bool,
    pub spatial_in_band: bool,
    pub residual_in_band: bool,
    pub pass: bool,
}

/// Self-convergence study: Richardson triples in time (order ~1 for the
/// implicit Euler scheme) and space (order ~2 in L2 for P1), plus the
/// first-order halving of the energy-identity residual.
pub fn experiment_convergence(base: &RunConfig) -> anyhow::Result<ConvergenceReport> {
    if base.profile == "b1-maximizer" {
        bail!("convergence study needs a mesh-independent analytic profile");
    }
    let mut cfg = base.clone();
    cfg.fixed_tau = true;

    // temporal triple on the configured mesh
    let final_field = |cfg: &RunConfig| -> anyhow::Result<(FemField, f64)> {
        let art = run_simulation_ext(cfg, false)?;
        if art.status != RunStatus::GlobalUntilT {
            bail!("convergence run ended early: {:?}", art.status);
        }
        let n = art.ledger.records.len() - 1;
        let res = energy_residual(&art.ledger, 0, n)?;
        Ok((art.final_field, res))
    };
    let mut tau_cfg = cfg.clone();
    let (u_tau, res_tau) = final_field(&tau_cfg)?;
    tau_cfg.tau0 = cfg.tau0 / 2.0;
    let (u_tau2, res_tau2) = final_field(&tau_cfg)?;
    tau_cfg.tau0 = cfg.tau0 / 4.0;
    let (u_tau4, _) = final_field(&tau_cfg)?;

    let mesh = cfg.mesh()?;
    let ops = assemble(&mesh);
    let d12 = h1_l2only(&ops, &u_tau, &u_tau2);
    let d24 = h1_l2only(&ops, &u_tau2, &u_tau4);
    let temporal_order = (d12 / d24).log2();
    let residual_ratio = res_tau / res_tau2;

    // spatial triple at the finest tau on nested meshes
    let mut space_cfg = cfg.clone();
    space_cfg.tau0 = cfg.tau0 / 4.0;
    let run_n = |elements: usize| -> anyhow::Result<FemField> {
        let mut c = space_cfg.clone();
        c.elements = elements;
        if c.profile == "nodal-table" {
            bail!("spatial study needs an analytic profile");
        }
        let art = run_simulation_ext(&c, false)?;
        if art.status != RunStatus::GlobalUntilT {
            bail!("spatial run ended early: {:?}", art.status);
        }
        Ok(art.final_field)
    };
    let n0 = cfg.elements;
    let u_n = run_n(n0)?;
    let u_2n = run_n(2 * n0)?;
    let u_4n = run_n(4 * n0)?;
    let fine_mesh = u_4n.mesh.clone();
    let fine_ops = assemble(&fine_mesh);
    let u_n_fine = u_n.prolong(&u_2n.mesh)?.prolong(&fine_mesh)?;
    let u_2n_fine = u_2n.prolong(&fine_mesh)?;
    let e12 = h1_l2only(&fine_ops, &u_n_fine, &u_2n_fine);
    let e24 = h1_l2only(&fine_ops, &u_2n_fine, &u_4n);
    let spatial_order = (e12 / e24).log2();

    let temporal_in_band = (0.8..=1.2).contains(&temporal_order);
    let spatial_in_band = (1.7..=2.3).contains(&spatial_order);
    let residual_in_band = (1.7..=2.3).contains(&residual_ratio);
    Ok(ConvergenceReport {
        temporal_order,
        spatial_order,
        residual_ratio,
        temporal_in_band,
        spatial_in_band,
        residual_in_band,
        pass: temporal_in_band && spatial_in_band && residual_in_band,
    })
}

fn h1_l2only(ops: &AssembledOperators, a: &FemField, b: &FemField) -> f64 {
    let d: Vec<f64> = a.coeffs.iter().zip(&b.coeffs).map(|(x, y)| x - y).collect();
    ops.mass.quad_form(&d, &d).max(0.0).sqrt()
}
