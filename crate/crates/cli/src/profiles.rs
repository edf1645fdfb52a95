//! Named initial-datum profiles.

use crate::config::RunConfig;
use anyhow::{bail, Context};
use heatwell::mesh::{AssembledOperators, FemField, Mesh1D};
use heatwell::well::{compute_b1, AscentOptions, WellConstants};
use std::sync::Arc;

/// Profiles that do not need the variational machinery.
pub fn plain_profile(cfg: &RunConfig, mesh: &Arc<Mesh1D>) -> anyhow::Result<Option<FemField>> {
    let amp = cfg.amplitude;
    let length = cfg.length;
    let field = match cfg.profile.as_str() {
        "linear-ramp" => FemField::interpolate(mesh, |x| amp * x / length, true),
        "sine-bump" => FemField::interpolate(
            mesh,
            |x| amp * (std::f64::consts::PI * x / length).sin(),
            true,
        ),
        "nodal-table" => FemField::from_coeffs(mesh, cfg.nodal_table.clone(), true)?,
        "b1-maximizer" => return Ok(None),
        other => bail!("unknown profile {other:?}"),
    };
    Ok(Some(field))
}

/// The canonical unstable-set generator: the `B1` maximizer scaled to a
/// requested gradient norm (`amplitude`), or to `amplitude * lambda1` when
/// `amplitude_relative` is set. Along this ray the peak of `J` equals `E1`
/// exactly, so membership is controlled sharply by the scaling.
pub fn b1_maximizer_profile(
    cfg: &RunConfig,
    ops: &AssembledOperators,
    wc: &WellConstants,
    maximizer: &FemField,
) -> anyhow::Result<FemField> {
    let target = if cfg.amplitude_relative { cfg.amplitude * wc.lambda1 } else { cfg.amplitude };
    let g = ops.norm_grad_l2(maximizer);
    if g == 0.0 {
        bail!("degenerate maximizer");
    }
    let coeffs: Vec<f64> = maximizer.coeffs.iter().map(|c| c * target / g).collect();
    Ok(FemField::from_coeffs(&ops.mesh, coeffs, true)?)
}

/// Compute the well constants and maximizer for a config (requires p > 2).
pub fn well_setup(
    cfg: &RunConfig,
    ops: &AssembledOperators,
) -> anyhow::Result<(WellConstants, FemField)> {
    if !(cfg.p > 2.0) {
        bail!("potential-well constants need p > 2 (got p = {})", cfg.p);
    }
    let opts = AscentOptions { seed: cfg.seed, ..AscentOptions::default() };
    let res = compute_b1(ops, cfg.p, &opts).context("computing B1")?;
    let wc = WellConstants::from_b1(
        res.b1,
        cfg.p,
        ops.mesh.fingerprint(),
        res.diagnostics.clone(),
    )?;
    Ok((wc, res.maximizer))
}
