//! Experiment dispatch: load a config, run the requested experiment, write
//! CSV artifacts plus a key=value summary, and report pass/fail through the
//! exit status.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::analysis::{classify_trichotomy, Regime};
use crate::config::{load_config, ExperimentConfig, ExperimentKind, MontecarloConfig};
use crate::control::mc_value;
use crate::domain::{Field, Grid};
use crate::ergodic::{slope_estimate_c, vanishing_discount, ErgodicPair};
use crate::error::{Error, Result};
use crate::evolve::{evolve, Trajectory};
use crate::oracle1d::{critical_c, exact_threshold, solve_ode_shooting};
use crate::scheme::BoundaryKind;
use crate::stationary::{solve_with, SolveOptions, SteadyOutcome};

/// Worst-first outcome of an experiment's internal assertions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Status {
    Pass,
    /// Methods disagree or a regime could not be certified; not a hard fail.
    Inconclusive,
    Fail,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Status::Pass => write!(f, "pass"),
            Status::Inconclusive => write!(f, "INCONCLUSIVE"),
            Status::Fail => write!(f, "FAILED"),
        }
    }
}

/// One titled block of the summary; entries keep insertion order.
#[derive(Debug, Clone, Default)]
pub struct Report {
    pub title: String,
    pub entries: Vec<(String, String)>,
}

impl Report {
    pub fn new(title: impl Into<String>) -> Self {
        Report { title: title.into(), entries: Vec::new() }
    }

    pub fn push(&mut self, key: &str, value: impl fmt::Display) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn push_f(&mut self, key: &str, value: f64) {
        self.entries.push((key.to_string(), fmt_float(value)));
    }

    fn status(&self) -> Option<Status> {
        self.entries.iter().rev().find(|(k, _)| k == "status").map(|(_, v)| match v.as_str() {
            "pass" => Status::Pass,
            "INCONCLUSIVE" => Status::Inconclusive,
            _ => Status::Fail,
        })
    }
}

/// Deterministic flat text: a headline status, then every non-empty report
/// as a `[title]` block of `key=value` lines.
pub fn emit_summary(reports: &[Report]) -> String {
    let worst =
        reports.iter().filter_map(Report::status).max().unwrap_or(Status::Pass);
    let mut out = format!("status={worst}\n");
    for report in reports.iter().filter(|r| !r.entries.is_empty()) {
        out.push('\n');
        out.push_str(&format!("[{}]\n", report.title));
        for (k, v) in &report.entries {
            out.push_str(&format!("{k}={v}\n"));
        }
    }
    out
}

/// Shortest round-trip decimal with a guaranteed '.' so CSV consumers see a
/// float; NaN and infinities spelled out.
pub fn fmt_float(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".to_string() } else { "-inf".to_string() }
    } else if v == v.trunc() && v.abs() < 1e16 {
        format!("{v:.1}")
    } else {
        format!("{v}")
    }
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut text = String::with_capacity(rows.len() * 32 + 64);
    text.push_str(&header.join(","));
    text.push('\n');
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        text.push_str(&row.join(","));
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn field_rows(u: &Field) -> (Vec<&'static str>, Vec<Vec<String>>) {
    let grid = u.grid.clone();
    let header: Vec<&'static str> =
        if grid.dim() == 1 { vec!["x", "u"] } else { vec!["x", "y", "u"] };
    let rows = (0..grid.len())
        .map(|node| {
            let x = grid.coords(node);
            let mut row: Vec<String> =
                (0..grid.dim()).map(|a| fmt_float(x[a])).collect();
            row.push(fmt_float(u[node]));
            row
        })
        .collect();
    (header, rows)
}

fn write_field_csv(path: &Path, u: &Field) -> Result<()> {
    let (header, rows) = field_rows(u);
    write_csv(path, &header, &rows)
}

fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    let rows: Vec<Vec<String>> = traj
        .times
        .iter()
        .zip(&traj.probe)
        .map(|(t, v)| vec![fmt_float(*t), fmt_float(*v)])
        .collect();
    write_csv(path, &["t", "probe"], &rows)
}

fn write_ladder_csv(path: &Path, pair: &ErgodicPair) -> Result<()> {
    let rows: Vec<Vec<String>> = pair
        .lambdas
        .iter()
        .zip(pair.u_at_xstar.iter().zip(&pair.c_estimates))
        .map(|(l, (u, c))| vec![fmt_float(*l), fmt_float(*u), fmt_float(*c)])
        .collect();
    write_csv(path, &["lambda", "u_at_probe", "level_estimate"], &rows)
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub output_dir: Option<PathBuf>,
    pub grid_scale: f64,
    pub seed: Option<u64>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { output_dir: None, grid_scale: 1.0, seed: None }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub status: Status,
    pub summary: String,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }
}

pub fn run_experiment(config_path: &Path, opts: &RunOptions) -> Result<RunOutcome> {
    let cfg = load_config(config_path)?;
    run_loaded(&cfg, opts)
}

pub fn run_loaded(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunOutcome> {
    cfg.validate()?;
    let seed = opts.seed.unwrap_or(cfg.seed);
    let dir = opts
        .output_dir
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| {
            Error::Config("output_dir: set it in the config or pass --output-dir".into())
        })?;
    std::fs::create_dir_all(&dir)?;
    let grid = cfg.build_grid(opts.grid_scale)?;

    let mut run = Report::new("run");
    run.push("experiment", cfg.kind.name());
    run.push("seed", seed);
    run.push_f("grid_scale", opts.grid_scale);
    run.push(
        "nodes",
        (0..grid.dim()).map(|a| grid.shape[a].to_string()).collect::<Vec<_>>().join("x"),
    );
    run.push(
        "spacing",
        (0..grid.dim()).map(|a| fmt_float(grid.spacing[a])).collect::<Vec<_>>().join("x"),
    );
    run.push_f("m", cfg.problem.m);
    run.push_f("lambda", cfg.problem.lambda);
    run.push(
        "boundary",
        match cfg.problem.boundary.kind() {
            BoundaryKind::RelaxedDirichlet => "relaxed",
            BoundaryKind::StateConstraint => "constrained",
        },
    );

    let mut reports = vec![run];
    let status = match cfg.kind {
        ExperimentKind::Evolve => run_evolve(cfg, &grid, &dir, &mut reports)?,
        ExperimentKind::Stationary => run_stationary(cfg, &grid, &dir, &mut reports)?,
        ExperimentKind::Ergodic => run_ergodic(cfg, &grid, &dir, &mut reports)?,
        ExperimentKind::Trichotomy => run_trichotomy(cfg, &grid, &dir, &mut reports)?,
        ExperimentKind::Threshold1d => run_threshold(cfg, &grid, &dir, &mut reports)?,
        ExperimentKind::Montecarlo => run_montecarlo(cfg, &grid, &dir, seed, &mut reports)?,
    };

    let summary = emit_summary(&reports);
    std::fs::write(dir.join("summary.txt"), &summary)?;
    Ok(RunOutcome { dir, status, summary })
}

fn run_evolve(
    cfg: &ExperimentConfig,
    grid: &Arc<Grid>,
    dir: &Path,
    reports: &mut Vec<Report>,
) -> Result<Status> {
    let e = cfg.evolve.clone().unwrap_or_default();
    let (problem, kind) = cfg.build_problem(grid)?;
    let traj = evolve(&problem, kind, e.t_end, e.sample_every)?;
    write_trajectory_csv(&dir.join("trajectory.csv"), &traj)?;
    write_field_csv(&dir.join("field.csv"), traj.final_field())?;

    let mut r = Report::new("evolve");
    r.push_f("t_end", traj.final_time());
    r.push("steps", traj.steps);
    r.push_f("final_probe", *traj.probe.last().expect("nonempty trajectory"));
    r.push_f("final_rate", traj.max_rate);
    r.push("status", Status::Pass);
    reports.push(r);
    Ok(Status::Pass)
}

fn run_stationary(
    cfg: &ExperimentConfig,
    grid: &Arc<Grid>,
    dir: &Path,
    reports: &mut Vec<Report>,
) -> Result<Status> {
    let s = cfg.stationary.clone().unwrap_or_default();
    let (problem, kind) = cfg.build_problem(grid)?;
    let result = solve_with(
        &problem,
        kind,
        SolveOptions { tol: s.tol, t_max: s.t_max, ..SolveOptions::default() },
    )?;
    write_field_csv(&dir.join("field.csv"), &result.field)?;

    let mut r = Report::new("stationary");
    r.push_f("tol", s.tol);
    r.push_f("t_max", s.t_max);
    r.push("steps", result.steps);
    r.push_f("t_final", result.t_final);
    r.push_f("max_interior_residual", result.max_interior_residual);
    let status = match result.outcome {
        SteadyOutcome::Converged => {
            r.push("outcome", "converged");
            Status::Pass
        }
        SteadyOutcome::TimedOut { probe_drift } => {
            r.push("outcome", "timed_out");
            r.push_f("probe_drift", probe_drift);
            Status::Fail
        }
        SteadyOutcome::Diverged { t } => {
            r.push("outcome", "diverged");
            r.push_f("t_diverged", t);
            Status::Fail
        }
    };
    r.push("status", status);
    reports.push(r);
    Ok(status)
}

fn run_ergodic(
    cfg: &ExperimentConfig,
    grid: &Arc<Grid>,
    dir: &Path,
    reports: &mut Vec<Report>,
) -> Result<Status> {
    let e = cfg.ergodic.clone().unwrap_or_default();
    let (problem, _) = cfg.build_problem(grid)?;
    let pair = vanishing_discount(&problem, &e.schedule(), e.cauchy_tol)?;
    write_ladder_csv(&dir.join("ladder.csv"), &pair)?;
    write_field_csv(&dir.join("profile.csv"), &pair.u_infinity)?;

    let traj = evolve(
        &problem,
        BoundaryKind::StateConstraint,
        e.slope_horizon,
        Some(e.slope_horizon / 120.0),
    )?;
    write_trajectory_csv(&dir.join("trajectory.csv"), &traj)?;
    let c_slope = slope_estimate_c(&traj, (0.5 * e.slope_horizon, e.slope_horizon))?;

    let gap = (pair.c - c_slope).abs();
    let allowed = e.agree_tol.max(e.agree_tol * pair.c.abs());
    let status = if !pair.converged {
        Status::Fail
    } else if gap > allowed {
        Status::Inconclusive
    } else {
        Status::Pass
    };

    let mut r = Report::new("ergodic");
    r.push_f("cauchy_tol", e.cauchy_tol);
    r.push_f("agree_tol", e.agree_tol);
    r.push_f("level_ladder", pair.c);
    r.push_f("level_slope", c_slope);
    r.push_f("method_gap", gap);
    r.push("ladder_converged", pair.converged);
    r.push("rungs", pair.lambdas.len());
    if status == Status::Inconclusive {
        r.push("note", "ladder and slope estimates disagree beyond tolerance");
    }
    r.push("status", status);
    reports.push(r);
    Ok(status)
}

fn expected_regime(target: f64, c_tol: f64) -> Regime {
    if target > c_tol {
        Regime::PositiveC
    } else if target < -c_tol {
        Regime::NegativeC
    } else {
        Regime::ZeroC
    }
}

fn regime_name(regime: Regime) -> &'static str {
    match regime {
        Regime::NegativeC => "negative",
        Regime::ZeroC => "neutral",
        Regime::PositiveC => "positive",
    }
}

fn run_trichotomy(
    cfg: &ExperimentConfig,
    grid: &Arc<Grid>,
    dir: &Path,
    reports: &mut Vec<Report>,
) -> Result<Status> {
    let t = cfg.trichotomy.clone().unwrap_or_default();
    let (base, _) = cfg.build_problem(grid)?;
    let schedule = crate::ergodic::default_lambda_schedule();
    let base_pair = vanishing_discount(&base, &schedule, 1e-2)?;
    write_ladder_csv(&dir.join("ladder.csv"), &base_pair)?;

    let mut r0 = Report::new("trichotomy");
    r0.push_f("base_level", base_pair.c);
    r0.push_f("horizon", t.horizon);
    r0.push_f("c_tol", t.c_tol);
    r0.push("targets", t.target_levels.len());
    reports.push(r0);

    let mut worst = Status::Pass;
    for (idx, &target) in t.target_levels.iter().enumerate() {
        let shift = base_pair.c - target;
        let mut shifted = base.clone();
        shifted.f = base.f.shifted(shift);
        let pair = vanishing_discount(&shifted, &schedule, 1e-2)?;
        let traj =
            evolve(&shifted, BoundaryKind::RelaxedDirichlet, t.horizon, Some(t.sample_every))?;
        write_trajectory_csv(&dir.join(format!("trajectory_{idx}.csv")), &traj)?;
        write_field_csv(&dir.join(format!("profile_{idx}.csv")), &pair.u_infinity)?;

        let mut r = Report::new(format!("regime_{idx}"));
        r.push_f("target_level", target);
        r.push_f("source_shift", shift);
        r.push_f("level", pair.c);
        let expected = expected_regime(target, t.c_tol);
        r.push("expected_regime", regime_name(expected));
        let status = match classify_trichotomy(&pair, &traj, t.c_tol) {
            Ok(rep) => {
                r.push("regime", regime_name(rep.regime));
                r.push_f("profile_distance", rep.profile_distance);
                r.push_f("tail_drift", rep.tail_drift);
                r.push_f("offset", rep.offset);
                r.push("lost_boundary", rep.lost_boundary);
                if rep.regime == expected {
                    Status::Pass
                } else {
                    r.push("note", "classified regime disagrees with the steered level");
                    Status::Inconclusive
                }
            }
            Err(Error::Inconclusive(why)) => {
                r.push("note", format!("inconclusive: {why}"));
                Status::Inconclusive
            }
            Err(other) => return Err(other),
        };
        r.push("status", status);
        reports.push(r);
        worst = worst.max(status);
    }
    Ok(worst)
}

fn run_threshold(
    cfg: &ExperimentConfig,
    grid: &Arc<Grid>,
    dir: &Path,
    reports: &mut Vec<Report>,
) -> Result<Status> {
    let t = cfg.threshold.clone().unwrap_or_default();
    let m = cfg.problem.m;
    let radius = 0.5 * grid.domain.extent(0);
    let c_star = critical_c(radius, m)?;
    let sharp = exact_threshold(radius, m)?;
    let (base, _) = cfg.build_problem(grid)?;

    // sweep in increasing order regardless of config order so the closure
    // check reads top to bottom
    let mut ratios = t.ratios.clone();
    ratios.sort_by(f64::total_cmp);

    let mut rows = Vec::new();
    let mut fd_solvable = Vec::new();
    let mut oracle_solvable = Vec::new();
    for &ratio in &ratios {
        let c_value = ratio * c_star;
        let oracle = solve_ode_shooting(c_value, radius, m)?;
        let mut problem = base.clone();
        problem.f = Field::constant(grid, -crate::scheme::pow_abs_m(c_value, m));
        let result = solve_with(
            &problem,
            BoundaryKind::RelaxedDirichlet,
            SolveOptions { t_max: t.t_max, ..SolveOptions::default() },
        )?;
        let (converged, drift) = match result.outcome {
            SteadyOutcome::Converged => (true, 0.0),
            SteadyOutcome::TimedOut { probe_drift } => (false, probe_drift),
            SteadyOutcome::Diverged { .. } => (false, f64::NEG_INFINITY),
        };
        fd_solvable.push(converged);
        oracle_solvable.push(oracle.exists);
        rows.push(vec![
            fmt_float(ratio),
            fmt_float(c_value),
            oracle.exists.to_string(),
            fmt_float(oracle.coverage_margin),
            converged.to_string(),
            fmt_float(drift),
            result.steps.to_string(),
        ]);
    }
    write_csv(
        &dir.join("threshold.csv"),
        &["ratio", "c_value", "oracle_exists", "oracle_margin", "fd_converged", "fd_drift", "fd_steps"],
        &rows,
    )?;

    // solvability must not reappear above a failure, and the grid must never
    // claim a solution the continuum rules out
    let downward_closed = |set: &[bool]| set.windows(2).all(|w| w[0] || !w[1]);
    let fd_closed = downward_closed(&fd_solvable);
    let oracle_closed = downward_closed(&oracle_solvable);
    let fd_within_oracle =
        fd_solvable.iter().zip(&oracle_solvable).all(|(fd, or)| !fd || *or);
    let status = if fd_closed && oracle_closed && fd_within_oracle {
        Status::Pass
    } else {
        Status::Fail
    };

    let mut r = Report::new("threshold1d");
    r.push_f("radius", radius);
    r.push_f("critical_c", c_star);
    r.push_f("sharp_threshold", sharp);
    r.push_f("t_max", t.t_max);
    r.push("points", ratios.len());
    r.push("fd_solvable", fd_solvable.iter().filter(|&&b| b).count());
    r.push("oracle_solvable", oracle_solvable.iter().filter(|&&b| b).count());
    r.push("fd_downward_closed", fd_closed);
    r.push("oracle_downward_closed", oracle_closed);
    r.push("fd_within_oracle", fd_within_oracle);
    r.push("status", status);
    reports.push(r);
    Ok(status)
}

fn run_montecarlo(
    cfg: &ExperimentConfig,
    grid: &Arc<Grid>,
    dir: &Path,
    seed: u64,
    reports: &mut Vec<Report>,
) -> Result<Status> {
    let mc: MontecarloConfig = cfg.montecarlo.clone().unwrap_or_default();
    let (problem, kind) = cfg.build_problem(grid)?;
    let traj = evolve(&problem, kind, mc.t_end, None)?;
    write_field_csv(&dir.join("field.csv"), traj.final_field())?;

    let probes: Vec<[f64; 2]> = if mc.probes.is_empty() {
        vec![grid.domain.center()]
    } else {
        mc.probes
            .iter()
            .map(|p| {
                let mut x = [0.0; 2];
                x[..p.len()].copy_from_slice(p);
                x
            })
            .collect()
    };

    let mut probe_rows = Vec::new();
    let mut path_rows = Vec::new();
    let mut status = Status::Pass;
    let mut worst_gap = 0.0f64;
    for (idx, &x) in probes.iter().enumerate() {
        let run = mc_value(
            &problem,
            &traj,
            x,
            mc.t_end,
            mc.paths,
            mc.dt,
            seed.wrapping_add(idx as u64),
        )?;
        let fd = traj.final_field().value_at(x);
        let gap = (run.mean - fd).abs();
        let allowed = 3.0 * run.stderr + mc.bias_tol;
        if gap > allowed {
            status = Status::Fail;
        }
        worst_gap = worst_gap.max(gap);
        let mut row: Vec<String> = vec![idx.to_string()];
        row.extend((0..grid.dim()).map(|a| fmt_float(x[a])));
        row.extend([
            fmt_float(run.mean),
            fmt_float(run.stderr),
            fmt_float(fd),
            fmt_float(gap),
            fmt_float(allowed),
            fmt_float(run.exit_fraction),
            run.capped.to_string(),
        ]);
        probe_rows.push(row);
        for (pidx, path) in run.paths.iter().enumerate() {
            path_rows.push(vec![
                idx.to_string(),
                pidx.to_string(),
                fmt_float(path.cost),
                path.exited.to_string(),
                fmt_float(path.exit_time),
            ]);
        }
    }

    let probe_header: Vec<&'static str> = if grid.dim() == 1 {
        vec!["probe", "x", "mc_mean", "mc_stderr", "grid_value", "gap", "allowed", "exit_fraction", "capped"]
    } else {
        vec!["probe", "x", "y", "mc_mean", "mc_stderr", "grid_value", "gap", "allowed", "exit_fraction", "capped"]
    };
    write_csv(&dir.join("probes.csv"), &probe_header, &probe_rows)?;
    write_csv(
        &dir.join("paths.csv"),
        &["probe", "path", "cost", "exited", "exit_time"],
        &path_rows,
    )?;

    let mut r = Report::new("montecarlo");
    r.push("paths", mc.paths);
    r.push_f("dt", mc.dt);
    r.push_f("t_end", mc.t_end);
    r.push_f("bias_tol", mc.bias_tol);
    r.push("probes", probes.len());
    r.push_f("worst_gap", worst_gap);
    r.push("status", status);
    reports.push(r);
    Ok(status)
}
