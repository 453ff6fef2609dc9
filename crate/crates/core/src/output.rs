//! Run artifacts: CSV snapshots, the stats report and the run manifest.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so every
//! value parses back to the identical `f64`. All files except
//! `manifest.json` depend only on the configuration and seed, which makes
//! their digests reproducible.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::engine::FrameStats;
use crate::error::Result;
use crate::field::axis_header;
use crate::scenarios::{ScenarioRun, Verdict};
use crate::trajectory::{PTrajectory, XTrajectory};

pub const MANIFEST: &str = "manifest.json";

/// One written file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OutputFile {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Everything needed to reproduce and audit a run.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    /// Effective configuration as TOML (JSON cannot hold infinite region
    /// bounds).
    pub config: String,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub passed: bool,
    pub verdicts: Vec<Verdict>,
    pub files: Vec<OutputFile>,
}

#[derive(Serialize)]
struct StatsReport<'a> {
    scenario: &'a str,
    seed: u64,
    passed: bool,
    verdicts: &'a [Verdict],
    diagnostics: &'a BTreeMap<String, f64>,
    energy_drift: f64,
    norm_drift: f64,
    frames: &'a [FrameStats],
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes `traj_id,t,p0[,p1],x0[,x1],status` for every recorded history.
pub fn write_epstein_histories(trajectories: &[PTrajectory], dof: usize, mut out: impl Write) -> Result<()> {
    writeln!(out, "traj_id,t,{}{}status", axis_header("p", dof), axis_header("x", dof))?;
    for t in trajectories {
        for r in t.history.iter().flatten() {
            write!(out, "{},{}", t.id, r.t)?;
            for v in r.p[..dof].iter().chain(&r.x[..dof]) {
                write!(out, ",{v}")?;
            }
            writeln!(out, ",{}", r.status.name())?;
        }
    }
    Ok(())
}

/// Writes `traj_id,t,x0[,x1],status` for every recorded history.
pub fn write_dbb_histories(trajectories: &[XTrajectory], dof: usize, mut out: impl Write) -> Result<()> {
    writeln!(out, "traj_id,t,{}status", axis_header("x", dof))?;
    for t in trajectories {
        for r in t.history.iter().flatten() {
            write!(out, "{},{}", t.id, r.t)?;
            for v in &r.x[..dof] {
                write!(out, ",{v}")?;
            }
            writeln!(out, ",{}", r.status.name())?;
        }
    }
    Ok(())
}

/// The stats report as pretty JSON with a fixed key order.
pub fn stats_json(run: &ScenarioRun) -> Result<String> {
    let report = StatsReport {
        scenario: &run.config.scenario,
        seed: run.config.seed,
        passed: run.passed(),
        verdicts: &run.verdicts,
        diagnostics: &run.diagnostics,
        energy_drift: run.output.energy_drift,
        norm_drift: run.output.norm_drift,
        frames: &run.output.frames,
    };
    Ok(serde_json::to_string_pretty(&report)?)
}

/// Renders every data file of a run, in a fixed order.
pub fn render(run: &ScenarioRun) -> Result<Vec<(String, Vec<u8>)>> {
    let dof = run.config.dof();
    let mut files = Vec::new();
    files.push(("config.toml".to_string(), run.config.to_toml()?.into_bytes()));
    if run.config.model.epstein() {
        let mut buf = Vec::new();
        write_epstein_histories(&run.output.epstein, dof, &mut buf)?;
        files.push(("trajectories.csv".into(), buf));
    }
    if run.config.model.dbb() {
        let mut buf = Vec::new();
        write_dbb_histories(&run.output.dbb, dof, &mut buf)?;
        files.push(("trajectories_dbb.csv".into(), buf));
    }
    let mut buf = Vec::new();
    run.output.psi_x.write_csv(&mut buf)?;
    files.push(("psi_x.csv".into(), buf));
    let mut buf = Vec::new();
    run.output.psi_p.write_csv(&mut buf)?;
    files.push(("psi_p.csv".into(), buf));
    let mut buf = Vec::new();
    run.output.fields.current.write_csv(&mut buf)?;
    files.push(("current.csv".into(), buf));
    if let Some(h) = &run.histogram {
        let mut buf = Vec::new();
        h.write_csv(&mut buf)?;
        files.push(("histogram.csv".into(), buf));
    }
    if let Some(h) = &run.histogram_dbb {
        let mut buf = Vec::new();
        h.write_csv(&mut buf)?;
        files.push(("histogram_dbb.csv".into(), buf));
    }
    let mut stats = stats_json(run)?.into_bytes();
    stats.push(b'\n');
    files.push(("stats.json".into(), stats));
    Ok(files)
}

/// Writes the data files and the manifest into `dir`, creating it if needed.
pub fn write_run(run: &ScenarioRun, dir: &Path, started_unix: f64, finished_unix: f64) -> Result<RunManifest> {
    fs::create_dir_all(dir)?;
    let mut inventory = Vec::new();
    for (name, bytes) in render(run)? {
        fs::write(dir.join(&name), &bytes)?;
        inventory.push(OutputFile {
            name,
            bytes: bytes.len() as u64,
            sha256: sha256_hex(&bytes),
        });
    }
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: run.config.seed,
        config: run.config.to_toml()?,
        started_unix,
        finished_unix,
        passed: run.passed(),
        verdicts: run.verdicts.clone(),
        files: inventory,
    };
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    fs::write(dir.join(MANIFEST), json)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn history_csv_round_trips_floats() {
        let mut t = PTrajectory::new(3, [0.1 + 0.2, 0.0], true);
        t.x = [1.0 / 3.0, 0.0];
        t.record(0.7);
        let mut buf = Vec::new();
        write_epstein_histories(&[t], 1, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("traj_id,t,p0,x0,status"));
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row[0], "3");
        assert_eq!(row[2].parse::<f64>().unwrap(), 0.1 + 0.2);
        assert_eq!(row[3].parse::<f64>().unwrap(), 1.0 / 3.0);
        assert_eq!(row[4], "active");
    }
}
