use std::f64::consts::{FRAC_PI_3, PI};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use num_complex::Complex64;
use triflex_core::analysis::{
    collinear_a, collinear_eigenvalues, jacobian_collinear, jacobian_rotated,
};
use triflex_core::dynamics::relative_vectors;
use triflex_core::geometry::unit;
use triflex_core::selftest::{self, check, Fault, PropertyResult};
use triflex_core::{
    is_hurwitz, simulate, ConvergenceReport, EigenTriple, FormationSpec, InitialCondition, Matrix3,
    Scenario, SimError, Trajectory,
};

use crate::output::{
    fmt17, read_trajectory_csv, write_json, write_trajectory_csv, RunReport, RunStatus,
};
use crate::scenario_file::{parse_scenario, DEFAULT_SPREAD};

/// Why a command did not succeed; each kind has a stable exit code.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Aborted(String),
    Selftest(Vec<String>),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Aborted(_) => 2,
            Failure::Selftest(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Aborted(m) => write!(f, "run aborted: {m}"),
            Failure::Selftest(names) => write!(f, "selftest failed: {}", names.join(", ")),
        }
    }
}

fn config(e: impl std::fmt::Display) -> Failure {
    Failure::Config(e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Figure {
    /// Positive bias: agents stop on a line with agent 2 in the middle.
    CollinearStationary,
    /// Negative bias: agents travel together on a line, errors settle at 2/3.
    CollinearMoving,
    /// Rotated bias: a 60 degree triangle.
    Triangle,
}

impl Figure {
    pub fn name(self) -> &'static str {
        match self {
            Figure::CollinearStationary => "collinear-stationary",
            Figure::CollinearMoving => "collinear-moving",
            Figure::Triangle => "triangle",
        }
    }

    pub fn scenario(self, seed: u64) -> Scenario {
        let (spec, horizon) = match self {
            Figure::CollinearStationary => {
                (FormationSpec::biased_collinear(30.0, 10.0, 1.0), 120.0)
            }
            Figure::CollinearMoving => (FormationSpec::biased_collinear(30.0, 10.0, -1.0), 600.0),
            Figure::Triangle => (FormationSpec::rotated(30.0, 10.0, FRAC_PI_3, 0.1), 3000.0),
        };
        Scenario::new(
            spec.expect("built-in parameters are valid"),
            InitialCondition::Random {
                spread: DEFAULT_SPREAD,
            },
        )
        .with_seed(seed)
        .with_horizon(horizon)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FaultArg {
    /// Negate the a3 partial of the rotated Jacobian.
    FlipA3Sign,
}

fn out_dir(out: Option<&Path>) -> Result<PathBuf, Failure> {
    let dir = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)
        .map_err(|e| config(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn summary(name: &str, traj: &Trajectory, rep: &ConvergenceReport) -> String {
    let e = rep.final_errors;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{name}: completed at t = {} s ({} samples)",
        rep.final_time,
        traj.len()
    );
    let _ = writeln!(
        s,
        "  errors        e1 = {:.3e}, e2 = {:.3e}, e3 = {:.3e}",
        e.e1, e.e2, e.e3
    );
    let _ = writeln!(
        s,
        "  angle         {:.6} deg (|cross| = {:.3e})",
        rep.final_gamma.to_degrees(),
        rep.collinearity_residual
    );
    let _ = writeln!(
        s,
        "  speeds        final [{:.3e}, {:.3e}, {:.3e}], steady [{:.6}, {:.6}, {:.6}]",
        rep.final_speeds[0],
        rep.final_speeds[1],
        rep.final_speeds[2],
        rep.steady_speeds[0],
        rep.steady_speeds[1],
        rep.steady_speeds[2]
    );
    if rep.steady_speed > 1e-6 {
        if let Some(z2) = traj
            .last_state()
            .and_then(|st| unit(relative_vectors(st).z2).ok())
        {
            let heading = rep.steady_velocity * (1.0 / rep.steady_speed);
            let _ = writeln!(s, "  heading       cos(v, z2) = {:.6}", heading.dot(z2));
        }
    }
    let _ = writeln!(s, "  min distance  {:.4}", rep.min_link_distance);
    let _ = write!(s, "  equilibrium   {:?}", rep.classified.kind);
    s
}

/// Simulates, writes `<stem>.csv` and `<stem>.json`, and prints a summary.
fn run_scenario(name: &str, sc: &Scenario, out: Option<&Path>) -> Result<(), Failure> {
    let dir = out_dir(out)?;
    let csv_path = dir.join(format!("{name}.csv"));
    let json_path = dir.join(format!("{name}.json"));
    let io = |e: std::io::Error| config(format!("writing output: {e}"));
    match simulate(sc) {
        Ok((traj, rep)) => {
            write_trajectory_csv(&csv_path, &traj).map_err(io)?;
            let report = RunReport {
                name,
                scenario: sc,
                status: RunStatus::Completed,
                samples: traj.len(),
                trajectory_csv: csv_path.clone(),
                abort_time: None,
                abort_cause: None,
                convergence: Some(rep),
            };
            write_json(&json_path, &report).map_err(io)?;
            println!("{}", summary(name, &traj, &rep));
            println!(
                "  wrote         {}, {}",
                csv_path.display(),
                json_path.display()
            );
            Ok(())
        }
        Err(SimError::Setup(e)) => Err(config(e)),
        Err(SimError::Aborted {
            time,
            cause,
            partial,
        }) => {
            write_trajectory_csv(&csv_path, &partial).map_err(io)?;
            let report = RunReport {
                name,
                scenario: sc,
                status: RunStatus::Aborted,
                samples: partial.len(),
                trajectory_csv: csv_path.clone(),
                abort_time: Some(time),
                abort_cause: Some(cause.to_string()),
                convergence: None,
            };
            write_json(&json_path, &report).map_err(io)?;
            eprintln!(
                "partial trajectory ({} samples) in {}",
                partial.len(),
                csv_path.display()
            );
            Err(Failure::Aborted(format!("t = {time}: {cause}")))
        }
    }
}

pub fn cmd_run(file: &Path, out: Option<&Path>) -> Result<(), Failure> {
    let text = fs::read_to_string(file).map_err(|e| config(format!("{}: {e}", file.display())))?;
    let sc = parse_scenario(&text).map_err(|e| config(format!("{}: {e}", file.display())))?;
    let stem = file.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    run_scenario(stem, &sc, out)
}

pub fn cmd_figure(figure: Figure, seed: u64, out: Option<&Path>) -> Result<(), Failure> {
    run_scenario(figure.name(), &figure.scenario(seed), out)
}

fn fmt_eig(z: Complex64) -> String {
    if z.im == 0.0 {
        format!("{:.6}", z.re)
    } else {
        format!(
            "{:.6} {} {:.6}i",
            z.re,
            if z.im < 0.0 { '-' } else { '+' },
            z.im.abs()
        )
    }
}

fn fmt_eigs(e: &EigenTriple) -> String {
    e.0.iter()
        .map(|z| fmt_eig(*z))
        .collect::<Vec<_>>()
        .join(", ")
}

fn fmt_matrix(m: &Matrix3) -> String {
    m.0.iter()
        .map(|r| format!("  [{:>12.6} {:>12.6} {:>12.6} ]", r[0], r[1], r[2]))
        .collect::<Vec<_>>()
        .join("\n")
}

fn check_params(d1: f64, d2: f64, theta: f64, c: f64) -> Result<(), Failure> {
    if !(d1.is_finite() && d1 > 0.0 && d2.is_finite() && d2 > 0.0) {
        return Err(config(format!(
            "d1 and d2 must be positive, got d1 = {d1}, d2 = {d2}"
        )));
    }
    if !(theta > -PI && theta < PI) {
        return Err(config(format!(
            "theta must lie strictly inside (-pi, pi), got {theta}"
        )));
    }
    if !c.is_finite() {
        return Err(config(format!("c must be finite, got {c}")));
    }
    Ok(())
}

/// Linearization at the target shape: collinear Jacobian for `theta = 0`, rotated otherwise.
fn target_jacobian(d1: f64, d2: f64, theta: f64, c: f64) -> Result<Matrix3, Failure> {
    if theta == 0.0 {
        Ok(jacobian_collinear(d1, d2, c))
    } else {
        jacobian_rotated(d1, d2, theta, c).map_err(config)
    }
}

pub fn cmd_analyze(d1: f64, d2: f64, theta: f64, c: f64) -> Result<(), Failure> {
    check_params(d1, d2, theta, c)?;
    let j = target_jacobian(d1, d2, theta, c)?;
    let rep = is_hurwitz(&j, 0.0);
    if theta == 0.0 {
        println!(
            "collinear target, a = (d1 + d2)/(d1 d2) = {:.6}",
            collinear_a(d1, d2)
        );
    } else {
        println!(
            "triangle target, theta = {:.6} rad ({:.4} deg)",
            theta,
            theta.to_degrees()
        );
    }
    println!("jacobian:\n{}", fmt_matrix(&j));
    println!("eigenvalues: {}", fmt_eigs(&rep.eigenvalues));
    if theta == 0.0 {
        println!(
            "closed form {{-1, -3, -2ca}}: {}",
            fmt_eigs(&collinear_eigenvalues(d1, d2, c))
        );
    }
    println!("max real part: {:.6e}", rep.max_real_part);
    println!("hurwitz: {}", rep.hurwitz);
    Ok(())
}

pub fn cmd_sweep_theta(
    d1: f64,
    d2: f64,
    c: f64,
    step: f64,
    margin: f64,
    out: Option<&Path>,
) -> Result<(), Failure> {
    check_params(d1, d2, 0.0, c)?;
    if !(step.is_finite() && step > 0.0 && step < PI) {
        return Err(config(format!("step must lie in (0, pi), got {step}")));
    }
    if !(margin.is_finite() && margin >= 0.0) {
        return Err(config(format!("margin must be non-negative, got {margin}")));
    }
    // |k step| < pi, keeping clear of the singular endpoint
    let k_max = ((PI - 1e-9) / step).floor() as i64;
    let mut csv = String::from("theta,max_real,hurwitz\n");
    let mut stable = 0;
    for k in -k_max..=k_max {
        let theta = k as f64 * step;
        let rep = is_hurwitz(&target_jacobian(d1, d2, theta, c)?, margin);
        stable += rep.hurwitz as usize;
        let _ = writeln!(
            csv,
            "{},{},{}",
            fmt17(theta),
            fmt17(rep.max_real_part),
            rep.hurwitz
        );
    }
    print!("{csv}");
    eprintln!(
        "{stable} of {} angles hurwitz (margin {margin})",
        2 * k_max + 1
    );
    if let Some(out) = out {
        let path = out_dir(Some(out))?.join("sweep-theta.csv");
        fs::write(&path, csv).map_err(|e| config(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

/// Writes a short run to CSV, reads it back and compares against the in-memory signals.
fn csv_round_trip() -> Result<(), String> {
    let sc = Figure::CollinearStationary.scenario(5).with_horizon(5.0);
    let (traj, _) = simulate(&sc).map_err(|e| e.to_string())?;
    let path = std::env::temp_dir().join(format!("triflex-selftest-{}.csv", std::process::id()));
    write_trajectory_csv(&path, &traj).map_err(|e| e.to_string())?;
    let rows = read_trajectory_csv(&path);
    let _ = fs::remove_file(&path);
    let rows = rows.map_err(|e| e.to_string())?;
    if rows.len() != traj.len() {
        return Err(format!("{} rows for {} samples", rows.len(), traj.len()));
    }
    for (i, r) in rows.iter().enumerate() {
        let d = &traj.derived[i];
        let s = traj.states[i].to_array();
        let want = [
            [traj.times[i]].as_slice(),
            &s,
            &[d.errors.e1, d.errors.e2, d.errors.e3, d.gamma, d.cross],
            &d.speeds,
        ]
        .concat();
        if r.as_slice() != want.as_slice() {
            return Err(format!("row {i} differs"));
        }
    }
    Ok(())
}

pub fn selftest_results(fault: Option<FaultArg>) -> Vec<PropertyResult> {
    let fault = match fault {
        Some(FaultArg::FlipA3Sign) => Fault::FlipA3Sign,
        None => Fault::None,
    };
    let mut results = selftest::run(fault);
    results.push(check("cli", "csv_round_trip", csv_round_trip));
    results
}

pub fn cmd_selftest(fault: Option<FaultArg>) -> Result<(), Failure> {
    let results = selftest_results(fault);
    for r in &results {
        println!("{}", r.line());
    }
    let failed: Vec<String> = results
        .iter()
        .filter(|r| !r.passed)
        .map(|r| format!("{}::{}", r.module, r.name))
        .collect();
    println!(
        "{} of {} properties passed",
        results.len() - failed.len(),
        results.len()
    );
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Selftest(failed))
    }
}
