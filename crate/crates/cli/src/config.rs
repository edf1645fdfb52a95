//! Run configuration: a flat, typed key-value document (TOML on disk).
//! Unknown keys are rejected so a typo cannot silently fall back to a
//! default.

use anyhow::{bail, Context};
use heatwell::mesh::Mesh1D;
use heatwell::nonlinearity::{BoundaryDamping, Coefficient, SourceTerm};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;
use std::sync::Arc;

fn default_n_dim() -> u32 {
    1
}
fn default_tau_min() -> f64 {
    1e-12
}
fn default_tau_max() -> f64 {
    0.1
}
fn default_growth_cap() -> f64 {
    0.05
}
fn default_blowup_threshold() -> f64 {
    1e6
}
fn default_seed() -> u64 {
    42
}
fn default_output_dir() -> String {
    "out".into()
}
fn default_perturbation() -> f64 {
    1e-3
}

/// Flat run configuration. Field names are the config-file keys.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    // geometry
    pub length: f64,
    pub elements: usize,

    // exponents
    pub p: f64,
    pub m: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default = "default_n_dim")]
    pub n_dim: u32,

    // source nonlinearity
    pub source: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source_q: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source_a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source_b: Option<f64>,

    // boundary damping
    pub damping: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub damping_a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub damping_b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub damping_beta: Option<f64>,

    // initial datum
    pub profile: String,
    pub amplitude: f64,
    /// For the `b1-maximizer` profile: interpret `amplitude` as a multiple
    /// of `lambda1` instead of an absolute gradient norm.
    #[serde(default)]
    pub amplitude_relative: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub nodal_table: Vec<f64>,

    // time controls
    pub t_end: f64,
    pub tau0: f64,
    #[serde(default = "default_tau_min")]
    pub tau_min: f64,
    #[serde(default = "default_tau_max")]
    pub tau_max: f64,
    #[serde(default = "default_growth_cap")]
    pub growth_cap: f64,
    /// Disable the step-size controller (runs that must share time grids).
    #[serde(default)]
    pub fixed_tau: bool,

    // energy reference level: explicit value, or the midpoint policy
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classification_tol: Option<f64>,

    // blow-up declaration
    #[serde(default = "default_blowup_threshold")]
    pub blowup_threshold: f64,

    // experiment knobs
    #[serde(default = "default_perturbation")]
    pub perturbation_eps: f64,

    // outputs
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        let cfg: RunConfig = toml::from_str(text).context("parsing config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if !(self.length > 0.0) {
            bail!("length must be positive");
        }
        if self.elements < 2 {
            bail!("elements must be at least 2 (the mesh needs interior structure)");
        }
        if !(self.p >= 2.0) {
            bail!("p must be >= 2");
        }
        if !(self.m > 1.0) {
            bail!("m must be > 1");
        }
        if let Some(mu) = self.mu {
            if !(mu > 1.0 && mu <= self.m) {
                bail!("mu must satisfy 1 < mu <= m");
            }
        }
        if !(self.t_end > 0.0) {
            bail!("t_end must be positive");
        }
        if !(self.tau0 > 0.0 && self.tau0 <= self.tau_max) {
            bail!("tau0 must satisfy 0 < tau0 <= tau_max");
        }
        if !(self.tau_min > 0.0 && self.tau_min <= self.tau0) {
            bail!("tau_min must satisfy 0 < tau_min <= tau0");
        }
        if !self.amplitude.is_finite() {
            bail!("amplitude must be finite");
        }
        match self.source.as_str() {
            "power" | "zero" => {}
            "f0" => {
                if self.source_q.is_none() || self.source_a.is_none() || self.source_b.is_none() {
                    bail!("source = \"f0\" needs source_q, source_a, source_b");
                }
            }
            "f1_capped" | "f1_capped_negated" => {}
            other => bail!("unknown source kind {other:?} (custom kinds must be registered)"),
        }
        match self.damping.as_str() {
            "power" | "physical" | "none" => {}
            "q0" => {
                if self.damping_a.is_none() || self.damping_b.is_none() {
                    bail!("damping = \"q0\" needs damping_a, damping_b");
                }
            }
            "q1_weighted" => {
                if self.damping_a.is_none()
                    || self.damping_b.is_none()
                    || self.damping_beta.is_none()
                {
                    bail!("damping = \"q1_weighted\" needs damping_a, damping_b, damping_beta");
                }
            }
            other => bail!("unknown damping kind {other:?} (custom kinds must be registered)"),
        }
        match self.profile.as_str() {
            "linear-ramp" | "sine-bump" | "b1-maximizer" => {}
            "nodal-table" => {
                if self.nodal_table.len() != self.elements + 1 {
                    bail!(
                        "nodal-table needs {} values, got {}",
                        self.elements + 1,
                        self.nodal_table.len()
                    );
                }
                if self.nodal_table[0] != 0.0 {
                    bail!("nodal-table must vanish at the Dirichlet node");
                }
            }
            other => bail!("unknown profile {other:?}"),
        }
        Ok(())
    }

    pub fn mesh(&self) -> anyhow::Result<Arc<Mesh1D>> {
        Ok(Mesh1D::uniform(self.length, self.elements)?)
    }

    pub fn source_term(&self) -> anyhow::Result<SourceTerm> {
        let f = match self.source.as_str() {
            "power" => SourceTerm::power(self.p)?,
            "zero" => SourceTerm::zero(),
            "f0" => SourceTerm::f0(
                self.p,
                self.source_q.unwrap(),
                Coefficient::Constant(self.source_a.unwrap()),
                Coefficient::Constant(self.source_b.unwrap()),
            )?,
            "f1_capped" => SourceTerm::f1_capped(self.p, false)?,
            "f1_capped_negated" => SourceTerm::f1_capped(self.p, true)?,
            other => bail!("unknown source kind {other:?}"),
        };
        Ok(f)
    }

    pub fn damping_term(&self) -> anyhow::Result<BoundaryDamping> {
        let mu = self.mu.unwrap_or(self.m);
        let q = match self.damping.as_str() {
            "power" => BoundaryDamping::power(self.m)?,
            "physical" => BoundaryDamping::physical(self.m)?,
            "none" => BoundaryDamping::none(),
            "q0" => BoundaryDamping::q0(self.m, mu, self.damping_a.unwrap(), self.damping_b.unwrap())?,
            "q1_weighted" => BoundaryDamping::q1_weighted(
                self.m,
                mu,
                self.damping_a.unwrap(),
                self.damping_b.unwrap(),
                self.damping_beta.unwrap(),
            )?,
            other => bail!("unknown damping kind {other:?}"),
        };
        Ok(q)
    }

    /// Hex digest of the canonical serialized config; embedded in every
    /// report so outputs can be traced back to their inputs.
    pub fn fingerprint(&self) -> String {
        let canonical = toml::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const MINIMAL: &str = r#"
length = 1.0
elements = 50
p = 3.0
m = 2.0
source = "power"
damping = "power"
profile = "sine-bump"
amplitude = 0.1
t_end = 1.0
tau0 = 1e-3
"#;

    #[test]
    fn minimal_config_parses() {
        let cfg = RunConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.elements, 50);
        assert_eq!(cfg.n_dim, 1);
        assert_eq!(cfg.tau_max, 0.1);
        assert!(!cfg.fixed_tau);
        cfg.mesh().unwrap();
        cfg.source_term().unwrap();
        cfg.damping_term().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{MINIMAL}\nnot_a_key = 1\n");
        let err = RunConfig::from_toml(&text).unwrap_err();
        assert!(format!("{err:#}").contains("not_a_key"), "{err:#}");
    }

    #[test]
    fn invalid_values_are_rejected() {
        for (key, val) in [
            ("p", "1.5"),
            ("m", "0.9"),
            ("t_end", "0.0"),
            ("elements", "1"),
            ("profile", "\"squiggle\""),
            ("source", "\"exp\""),
        ] {
            let text = MINIMAL
                .lines()
                .map(|l| {
                    if l.starts_with(key) {
                        format!("{key} = {val}")
                    } else {
                        l.to_string()
                    }
                })
                .collect::<Vec<_>>()
                .join("\n");
            assert!(RunConfig::from_toml(&text).is_err(), "{key} = {val} accepted");
        }
    }

    #[test]
    fn f0_requires_its_parameters() {
        let text = MINIMAL.replace("source = \"power\"", "source = \"f0\"");
        assert!(RunConfig::from_toml(&text).is_err());
        let text = format!("{}\nsource_q = 2.0\nsource_a = -1.0\nsource_b = 1.0\n", text);
        let cfg = RunConfig::from_toml(&text).unwrap();
        cfg.source_term().unwrap();
    }

    #[test]
    fn fingerprint_is_stable_and_sensitive() {
        let a = RunConfig::from_toml(MINIMAL).unwrap();
        let b = RunConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        let c = RunConfig::from_toml(&MINIMAL.replace("0.1", "0.2")).unwrap();
        assert_ne!(a.fingerprint(), c.fingerprint());
    }
}
