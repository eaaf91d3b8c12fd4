//! Trajectory CSV and JSON run reports.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use triflex_core::sim::DerivedSignals;
use triflex_core::{ConvergenceReport, Scenario, Trajectory};

pub const CSV_HEADER: [&str; 15] = [
    "t", "p1x", "p1y", "p2x", "p2y", "p3x", "p3y", "e1", "e2", "e3", "gamma", "cross", "speed1",
    "speed2", "speed3",
];

/// 17 significant digits: enough to reproduce any `f64` exactly.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

fn row(t: f64, s: &triflex_core::FormationState, d: &DerivedSignals) -> [f64; 15] {
    [
        t,
        s.p1.x,
        s.p1.y,
        s.p2.x,
        s.p2.y,
        s.p3.x,
        s.p3.y,
        d.errors.e1,
        d.errors.e2,
        d.errors.e3,
        d.gamma,
        d.cross,
        d.speeds[0],
        d.speeds[1],
        d.speeds[2],
    ]
}

pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CSV_HEADER)?;
    for ((t, s), d) in traj.times.iter().zip(&traj.states).zip(&traj.derived) {
        w.write_record(row(*t, s, d).map(fmt17))?;
    }
    w.flush()
}

/// Reads a trajectory CSV back into rows of numbers.
pub fn read_trajectory_csv(path: &Path) -> io::Result<Vec<[f64; 15]>> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("unexpected header {header:?}"),
        ));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let mut out = [0.0; 15];
        for (slot, field) in out.iter_mut().zip(rec.iter()) {
            *slot = field.parse().map_err(|e| {
                io::Error::new(io::ErrorKind::InvalidData, format!("{field:?}: {e}"))
            })?;
        }
        rows.push(out);
    }
    Ok(rows)
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Aborted,
}

#[derive(Debug, Serialize)]
pub struct RunReport<'a> {
    pub name: &'a str,
    pub scenario: &'a Scenario,
    pub status: RunStatus,
    pub samples: usize,
    pub trajectory_csv: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub abort_time: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub abort_cause: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceReport>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    fs::write(path, text + "\n")
}
