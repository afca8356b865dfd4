//! File formats: trajectory and event-log tables, certification reports,
//! sweep artifacts, and the run manifest.
//!
//! Trajectory table header:
//! `t,j,dist_A,V,L_x,L_etabar,grad_norm,envelope_thm1,envelope_prop`
//! with one row per sample. The `envelope_*` columns hold the global bound
//! and the applicable per-initialization bound when certification was
//! requested and are empty otherwise; `L_etabar` is empty while the agents
//! still disagree. Event log header: `j,t_j,tau_reset`. All floating-point
//! values are written with 17 significant digits, so parsing a table back
//! reproduces the exact bit patterns.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::analysis::{self, make_envelope, EnvelopeKind, EnvelopeSpec};
use crate::experiments::SweepOutput;
use crate::hybrid::{HybridTime, TimerPolicy};
use crate::objectives::ProblemInstance;
use crate::trajectory::HybridTrajectory;

pub const TRAJECTORY_HEADER: &str = "t,j,dist_A,V,L_x,L_etabar,grad_norm,envelope_thm1,envelope_prop";
pub const JUMPS_HEADER: &str = "j,t_j,tau_reset";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("schema mismatch: {0}")]
    Schema(String),
    #[error("analysis failed: {0}")]
    Analysis(#[from] analysis::AnalysisError),
}

/// 17 significant digits: enough to round-trip any f64 exactly.
pub fn fmt_g17(value: f64) -> String {
    format!("{value:.16e}")
}

fn fmt_opt(value: Option<f64>) -> String {
    value.map(fmt_g17).unwrap_or_default()
}

/// The pair of envelope columns exported alongside a certified trajectory:
/// the global bound plus the sharper bound matching the run's initialization.
pub struct ExportEnvelopes {
    pub global: EnvelopeSpec,
    pub by_init: EnvelopeSpec,
}

/// Build the export envelopes for a run, if the policy admits certification.
pub fn export_envelopes(
    inst: &ProblemInstance,
    policy: &TimerPolicy,
    agreement_init: bool,
) -> Option<ExportEnvelopes> {
    let global = make_envelope(EnvelopeKind::Thm1, inst, policy).ok()?;
    let kind = if agreement_init { EnvelopeKind::Prop1 } else { EnvelopeKind::Prop2 };
    let by_init = make_envelope(kind, inst, policy).ok()?;
    Some(ExportEnvelopes { global, by_init })
}

/// Write the trajectory table. Envelope columns are filled when `envelopes`
/// is provided; the initialization-specific column stays empty on rows it
/// does not claim to bound.
pub fn write_trajectory_csv(
    path: &Path,
    traj: &HybridTrajectory,
    inst: &ProblemInstance,
    envelopes: Option<&ExportEnvelopes>,
) -> Result<(), ReportError> {
    let mut out = String::new();
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    let d0 = traj
        .samples
        .first()
        .map(|s| analysis::set_distance(&s.state, inst))
        .unwrap_or(0.0);
    for sample in &traj.samples {
        let dist = analysis::set_distance(&sample.state, inst);
        let v = analysis::lyapunov_value(&sample.state, inst)?;
        let (env_global, env_init) = match envelopes {
            Some(pair) => {
                let global = pair.global.bound(sample.time.t, d0);
                let by_init = if pair.by_init.kind == EnvelopeKind::Prop2 && sample.time.j == 0 {
                    None
                } else {
                    Some(pair.by_init.bound(sample.time.t, d0))
                };
                (Some(global), by_init)
            }
            None => (None, None),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            fmt_g17(sample.time.t),
            sample.time.j,
            fmt_g17(dist),
            fmt_g17(v),
            fmt_g17(sample.objective_x),
            fmt_opt(sample.objective_eta.shared()),
            fmt_g17(sample.grad_norm),
            fmt_opt(env_global),
            fmt_opt(env_init),
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Write the event log.
pub fn write_jumps_csv(path: &Path, traj: &HybridTrajectory) -> Result<(), ReportError> {
    let mut out = String::new();
    out.push_str(JUMPS_HEADER);
    out.push('\n');
    for record in &traj.jumps {
        out.push_str(&format!(
            "{},{},{}\n",
            record.index,
            fmt_g17(record.t),
            fmt_g17(record.reset)
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

/// One parsed row of the trajectory table.
#[derive(Clone, Debug)]
pub struct TrajectoryRow {
    pub time: HybridTime,
    pub dist: f64,
    pub v: f64,
    pub l_x: f64,
    pub l_etabar: Option<f64>,
    pub grad_norm: f64,
    pub envelope_thm1: Option<f64>,
    pub envelope_prop: Option<f64>,
}

fn parse_field(s: &str, line: usize, name: &str) -> Result<f64, ReportError> {
    s.parse::<f64>()
        .map_err(|_| ReportError::Schema(format!("line {line}: bad {name} value `{s}`")))
}

fn parse_opt_field(s: &str, line: usize, name: &str) -> Result<Option<f64>, ReportError> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse_field(s, line, name).map(Some)
    }
}

/// Parse a trajectory table, verifying the schema.
pub fn read_trajectory_csv(path: &Path) -> Result<Vec<TrajectoryRow>, ReportError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| ReportError::Schema("empty file".into()))?;
    if header != TRAJECTORY_HEADER {
        return Err(ReportError::Schema(format!(
            "unexpected header `{header}`; expected `{TRAJECTORY_HEADER}`"
        )));
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(ReportError::Schema(format!(
                "line {i}: expected 9 fields, got {}",
                fields.len()
            )));
        }
        rows.push(TrajectoryRow {
            time: HybridTime::new(
                parse_field(fields[0], i, "t")?,
                fields[1]
                    .parse::<u64>()
                    .map_err(|_| ReportError::Schema(format!("line {i}: bad j value `{}`", fields[1])))?,
            ),
            dist: parse_field(fields[2], i, "dist_A")?,
            v: parse_field(fields[3], i, "V")?,
            l_x: parse_field(fields[4], i, "L_x")?,
            l_etabar: parse_opt_field(fields[5], i, "L_etabar")?,
            grad_norm: parse_field(fields[6], i, "grad_norm")?,
            envelope_thm1: parse_opt_field(fields[7], i, "envelope_thm1")?,
            envelope_prop: parse_opt_field(fields[8], i, "envelope_prop")?,
        });
    }
    Ok(rows)
}

/// Manifest written at the end of every command, atomically (write then
/// rename). Artifact paths are relative to the output directory.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub subcommand: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub outputs: Vec<String>,
    pub wall_clock_secs: f64,
    pub exit_status: i32,
}

impl RunManifest {
    pub fn write_atomic(&self, dir: &Path) -> Result<PathBuf, ReportError> {
        let tmp = dir.join(".manifest.json.tmp");
        let final_path = dir.join("manifest.json");
        let mut file = fs::File::create(&tmp)?;
        file.write_all(serde_json::to_string_pretty(self).expect("manifest serializes").as_bytes())?;
        file.write_all(b"\n")?;
        file.sync_all()?;
        fs::rename(&tmp, &final_path)?;
        Ok(final_path)
    }
}

/// Write all artifacts of a sweep: one trajectory and event-log table per
/// completed run, plus the summary. Returns the artifact names (relative to
/// `dir`) in a stable order.
pub fn write_sweep_artifacts(output: &SweepOutput, dir: &Path) -> Result<Vec<String>, ReportError> {
    fs::create_dir_all(dir)?;
    let mut names = Vec::new();
    for run in &output.runs {
        if let Some(traj) = &run.trajectory {
            let envelopes =
                export_envelopes(&run.instance, &run.policy, traj.meta.agreement_init);
            let traj_name = format!("{}.trajectory.csv", run.label);
            let jumps_name = format!("{}.jumps.csv", run.label);
            write_trajectory_csv(&dir.join(&traj_name), traj, &run.instance, envelopes.as_ref())?;
            write_jumps_csv(&dir.join(&jumps_name), traj)?;
            names.push(traj_name);
            names.push(jumps_name);
        }
    }
    let summary_name = "summary.json".to_string();
    fs::write(
        dir.join(&summary_name),
        serde_json::to_string_pretty(&output.summary).expect("summary serializes") + "\n",
    )?;
    names.push(summary_name);
    Ok(names)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hybrid::TimerPolicy;
    use crate::objectives::quadratic_from_eigenvalues;
    use crate::simulate::{simulate, SimConfig};
    use nalgebra::DVector;

    fn sample_run() -> (ProblemInstance, TimerPolicy, HybridTrajectory) {
        let inst = quadratic_from_eigenvalues(vec![2.0, 4.0], vec![1.0, 1.0]).unwrap();
        let policy = TimerPolicy::nominal(0.04, 0.2).unwrap();
        let mut config = SimConfig::new(2.0, DVector::zeros(2));
        config.sample_period = 0.05;
        let traj = simulate(&inst, &policy, &config).unwrap();
        (inst, policy, traj)
    }

    #[test]
    fn seventeen_digit_round_trip() {
        for v in [0.1, 1.0 / 3.0, 2.0f64.sqrt(), 1e-300, -3.5e200, 0.0] {
            let s = fmt_g17(v);
            let back: f64 = s.parse().unwrap();
            assert_eq!(v.to_bits(), back.to_bits(), "value {v} -> `{s}`");
        }
    }

    #[test]
    fn trajectory_csv_round_trips_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let (inst, policy, traj) = sample_run();
        let envelopes = export_envelopes(&inst, &policy, true).unwrap();
        let path = dir.path().join("trajectory.csv");
        write_trajectory_csv(&path, &traj, &inst, Some(&envelopes)).unwrap();

        let rows = read_trajectory_csv(&path).unwrap();
        assert_eq!(rows.len(), traj.samples.len());
        for (row, sample) in rows.iter().zip(&traj.samples) {
            assert_eq!(row.time.t.to_bits(), sample.time.t.to_bits());
            assert_eq!(row.time.j, sample.time.j);
            assert_eq!(row.l_x.to_bits(), sample.objective_x.to_bits());
            assert!(row.envelope_thm1.is_some());
            assert!(row.envelope_prop.is_some());
        }
    }

    #[test]
    fn uncertified_export_leaves_envelopes_empty() {
        let dir = tempfile::tempdir().unwrap();
        let (inst, _, traj) = sample_run();
        let path = dir.path().join("trajectory.csv");
        write_trajectory_csv(&path, &traj, &inst, None).unwrap();
        let rows = read_trajectory_csv(&path).unwrap();
        assert!(rows.iter().all(|r| r.envelope_thm1.is_none() && r.envelope_prop.is_none()));
    }

    #[test]
    fn schema_violations_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "wrong,header\n1,2\n").unwrap();
        assert!(matches!(read_trajectory_csv(&path), Err(ReportError::Schema(_))));

        fs::write(
            &path,
            format!("{TRAJECTORY_HEADER}\n0.0,0,not_a_number,0,0,0,0,,\n"),
        )
        .unwrap();
        assert!(matches!(read_trajectory_csv(&path), Err(ReportError::Schema(_))));
    }

    #[test]
    fn jumps_csv_format() {
        let dir = tempfile::tempdir().unwrap();
        let (_, _, traj) = sample_run();
        let path = dir.path().join("jumps.csv");
        write_jumps_csv(&path, &traj).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), JUMPS_HEADER);
        let first = lines.next().unwrap();
        assert!(first.starts_with("1,"));
        assert_eq!(text.lines().count(), 1 + traj.jump_count() as usize);
    }
}
