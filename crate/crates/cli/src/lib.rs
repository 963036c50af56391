//! Config loading, result emission and exit-code policy for the `granulesim` binary.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use granulesim_core::config::Numerics;
use granulesim_core::simulation::Diagnostics;
use granulesim_core::{ContractionReport, Error, Mode, Profile, RunSummary, SimulationConfig};
use serde::{Deserialize, Serialize};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERICS: u8 = 3;
pub const EXIT_REGIME: u8 = 4;
pub const EXIT_VALIDATION: u8 = 5;

pub const RADIUS_HEADER: [&str; 6] = ["t", "R", "sigma_a", "sigma_d", "u_boundary", "regime"];

/// Exit code for a solver error.
pub fn exit_code(err: &Error) -> u8 {
    match err.root() {
        Error::Config(_) | Error::NoAttachingBiomass => EXIT_CONFIG,
        Error::RegimeExit { .. } => EXIT_REGIME,
        _ => EXIT_NUMERICS,
    }
}

/// Exit code for an arbitrary error chain: solver errors keep their own code,
/// anything else (unreadable or malformed config) counts as a config error.
pub fn exit_code_any(err: &anyhow::Error) -> u8 {
    err.chain()
        .find_map(|e| e.downcast_ref::<Error>())
        .map(exit_code)
        .unwrap_or(EXIT_CONFIG)
}

pub fn load_config(path: &Path) -> anyhow::Result<SimulationConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let cfg: SimulationConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    cfg.validate()
        .with_context(|| format!("validating {}", path.display()))?;
    Ok(cfg)
}

/// Column names of a profile file for `n` species and `m` substrates.
pub fn profile_header(n: usize, m: usize) -> Vec<String> {
    let mut h = vec!["t0".to_string(), "r".to_string()];
    h.extend((1..=n).map(|i| format!("f_{i}")));
    h.extend((1..=m).map(|j| format!("S_{j}")));
    h.extend((1..=n).map(|i| format!("Psi_{i}")));
    h
}

pub fn profile_file_name(t: f64) -> String {
    format!("profile_{t:.6}.csv")
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryFile {
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub exit_code: u8,
    pub mode: Mode,
    pub numerics: Numerics,
    pub final_time: Option<f64>,
    pub final_radius: Option<f64>,
    pub diagnostics: Diagnostics,
    pub contraction: Option<ContractionReport>,
    pub profiles: Vec<String>,
}

fn write_radius(path: &Path, summary: &RunSummary) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RADIUS_HEADER)?;
    for r in &summary.radius {
        w.write_record([
            r.t.to_string(),
            r.radius.to_string(),
            r.sigma_a.to_string(),
            r.sigma_d.to_string(),
            r.u_boundary.to_string(),
            r.regime.as_str().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_profile(path: &Path, p: &Profile) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(profile_header(p.f.width(), p.s.width()))?;
    for k in 0..p.r.len() {
        let mut rec = vec![p.t0[k].to_string(), p.r[k].to_string()];
        for row in [p.f.row(k), p.s.row(k), p.psi.row(k)] {
            rec.extend(row.iter().map(f64::to_string));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `radius.csv`, one `profile_<t>.csv` per snapshot and `summary.json`.
/// A failed run still gets its partial series plus the error in the summary.
pub fn write_outputs(dir: &Path, summary: &RunSummary, failure: Option<&Error>) -> anyhow::Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_radius(&dir.join("radius.csv"), summary)?;
    let mut names = Vec::new();
    for p in &summary.profiles {
        let name = profile_file_name(p.t);
        write_profile(&dir.join(&name), p)?;
        names.push(name);
    }
    let file = SummaryFile {
        status: if failure.is_some() { "failed" } else { "ok" }.into(),
        error: failure.map(|e| e.to_string()),
        exit_code: failure.map(exit_code).unwrap_or(EXIT_OK),
        mode: summary.mode,
        numerics: summary.numerics.clone(),
        final_time: summary.radius.last().map(|r| r.t),
        final_radius: summary.final_radius(),
        diagnostics: summary.diagnostics.clone(),
        contraction: summary.contraction.clone(),
        profiles: names,
    };
    let path = dir.join("summary.json");
    fs::write(&path, serde_json::to_string_pretty(&file)? + "\n")?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn headers() {
        assert_eq!(profile_header(2, 1).join(","), "t0,r,f_1,f_2,S_1,Psi_1,Psi_2");
        assert_eq!(RADIUS_HEADER.join(","), "t,R,sigma_a,sigma_d,u_boundary,regime");
        assert_eq!(profile_file_name(0.5), "profile_0.500000.csv");
    }

    #[test]
    fn exit_codes_follow_root_error() {
        let regime = Error::RegimeExit {
            time: 1.0,
            radius: 0.4,
            net_flux: -1e-3,
        };
        let wrapped = Error::AtStep {
            step: 3,
            time: 0.1,
            elapsed_ms: 0,
            source: Box::new(regime),
        };
        assert_eq!(exit_code(&wrapped), EXIT_REGIME);
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_CONFIG);
        let nc = Error::NonConvergence {
            solver: "picard",
            iterations: 1,
            residual_history: vec![],
        };
        assert_eq!(exit_code(&nc), EXIT_NUMERICS);
        assert_eq!(exit_code_any(&anyhow::anyhow!("bad toml")), EXIT_CONFIG);
        assert_eq!(exit_code_any(&anyhow::Error::new(nc).context("running")), EXIT_NUMERICS);
    }
}
