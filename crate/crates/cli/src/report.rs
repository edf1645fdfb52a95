//! Report envelope and output writers. Every report embeds the config
//! fingerprint and the crate version so outputs are traceable; identical
//! config and seed reproduce byte-identical files.

use serde::Serialize;
use std::path::Path;

#[derive(Debug, Clone, Serialize)]
pub struct Report<T: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub config_fingerprint: String,
    pub seed: u64,
    pub body: T,
}

pub fn envelope<T: Serialize>(fingerprint: String, seed: u64, body: T) -> Report<T> {
    Report {
        tool: "heatwell",
        version: env!("CARGO_PKG_VERSION"),
        config_fingerprint: fingerprint,
        seed,
        body,
    }
}

pub fn write_json<T: Serialize>(path: &Path, report: &Report<T>) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let text = serde_json::to_string_pretty(report)?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn write_text(path: &Path, content: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, content)?;
    Ok(())
}

/// Field snapshot as (node coordinate, value) CSV.
pub fn field_csv(field: &heatwell::mesh::FemField) -> String {
    let mut out = String::from("x,u\n");
    for (x, u) in field.mesh.nodes.iter().zip(&field.coeffs) {
        out.push_str(&format!("{x:.17e},{u:.17e}\n"));
    }
    out
}

/// Region grid rows as plot-ready CSV.
pub fn region_csv(rows: &[heatwell::region::RegionGridRow]) -> String {
    let mut out = String::from("p,m,p_admissible,blowup_admissible\n");
    for r in rows {
        out.push_str(&format!(
            "{:.17e},{:.17e},{},{}\n",
            r.p, r.m, r.p_admissible as u8, r.blowup_admissible as u8
        ));
    }
    out
}
