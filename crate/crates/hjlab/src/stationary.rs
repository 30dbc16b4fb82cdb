//! Steady states by pseudo-time marching: run the explicit scheme until the
//! rate `max |du/dt|` stays below tolerance, with an optional uniform-mode
//! extrapolation that collapses the slow `exp(-lambda t)` level drift of
//! discounted constrained solves.

use crate::domain::Field;
use crate::error::{Error, Result};
use crate::evolve::Stepper;
use crate::scheme::{max_interior_residual, BoundaryKind, ProblemSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SteadyOutcome {
    Converged,
    /// Still moving at `t_max`; carries the late-time level drift per unit time.
    TimedOut { probe_drift: f64 },
    Diverged { t: f64 },
}

#[derive(Debug, Clone)]
pub struct SteadyResult {
    pub field: Field,
    pub outcome: SteadyOutcome,
    pub steps: usize,
    pub t_final: f64,
    pub max_interior_residual: f64,
}

impl SteadyResult {
    /// Boundary trace of the settled field as `(node, value)` pairs.
    pub fn trace(&self) -> Vec<(usize, f64)> {
        let grid = self.field.grid.clone();
        grid.boundary_nodes().map(|n| (n, self.field[n])).collect()
    }

    pub fn converged(&self) -> bool {
        self.outcome == SteadyOutcome::Converged
    }
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Rate threshold: converged once `max |du/dt| <= tol` holds...
    pub tol: f64,
    /// ...for this many consecutive steps.
    pub sustain: usize,
    pub t_max: f64,
    /// Enable the uniform-mode jump (discounted constrained solves only).
    pub accelerate: bool,
    /// Start from this field instead of the problem's `u0`.
    pub init: Option<Field>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { tol: 1e-6, sustain: 50, t_max: 200.0, accelerate: true, init: None }
    }
}

/// Steps between acceleration checks (and between drift-probe samples).
const CHECK_EVERY: usize = 400;

/// Relative spread of per-node increments below which the increment field is
/// treated as a pure level mode.
const LEVEL_SPREAD_REL: f64 = 0.05;

pub fn solve_stationary(
    problem: &ProblemSpec,
    kind: BoundaryKind,
    tol: f64,
    t_max: f64,
) -> Result<SteadyResult> {
    solve_with(problem, kind, SolveOptions { tol, t_max, ..SolveOptions::default() })
}

/// Discounted constrained solve that must converge; any other outcome is an
/// error.
pub fn solve_discounted_state_constraint(problem: &ProblemSpec) -> Result<Field> {
    if problem.lambda <= 0.0 {
        return Err(Error::InvalidData(
            "discounted solve needs lambda > 0".into(),
        ));
    }
    let r = solve_with(problem, BoundaryKind::StateConstraint, SolveOptions::default())?;
    match r.outcome {
        SteadyOutcome::Converged => Ok(r.field),
        SteadyOutcome::TimedOut { probe_drift } => {
            Err(Error::TimedOut { t: r.t_final, drift: probe_drift })
        }
        SteadyOutcome::Diverged { t } => {
            Err(Error::Diverged { t, max_abs: r.field.max_abs() })
        }
    }
}

pub fn solve_with(
    problem: &ProblemSpec,
    kind: BoundaryKind,
    opts: SolveOptions,
) -> Result<SteadyResult> {
    let mut p = problem.clone();
    if let Some(init) = &opts.init {
        if init.grid != p.u0.grid {
            return Err(Error::InvalidData("warm start lives on a different grid".into()));
        }
        p.u0 = init.clone();
    }
    let lambda = p.lambda;
    let mut stepper = Stepper::new(p, kind)?;
    let probe_node = stepper.grid().center_node();
    let accelerate =
        opts.accelerate && lambda > 0.0 && kind == BoundaryKind::StateConstraint;

    let mut calm_steps = 0usize;
    let mut steps = 0usize;
    let mut probe_log: Vec<(f64, f64)> = vec![(0.0, stepper.field()[probe_node])];
    let mut prev_for_delta: Option<(Field, f64)> = None;

    let outcome = loop {
        if stepper.time() >= opts.t_max {
            probe_log.push((stepper.time(), stepper.field()[probe_node]));
            break SteadyOutcome::TimedOut { probe_drift: late_drift(&probe_log) };
        }
        let before_needed = accelerate && (steps + 1) % CHECK_EVERY == 0;
        if before_needed {
            prev_for_delta = Some((stepper.field().clone(), 0.0));
        }
        let info = match stepper.step(None) {
            Ok(info) => info,
            Err(Error::Diverged { t, .. }) => break SteadyOutcome::Diverged { t },
            Err(e) => return Err(e),
        };
        steps += 1;
        if let Some((_, dt_slot)) = prev_for_delta.as_mut() {
            if *dt_slot == 0.0 {
                *dt_slot = info.dt;
            }
        }

        if info.max_increment <= opts.tol * info.dt {
            calm_steps += 1;
            if calm_steps >= opts.sustain {
                break SteadyOutcome::Converged;
            }
        } else {
            calm_steps = 0;
        }

        if steps % CHECK_EVERY == 0 {
            probe_log.push((stepper.time(), stepper.field()[probe_node]));
            if let Some((prev, dt)) = prev_for_delta.take() {
                try_level_jump(&mut stepper, &prev, dt, lambda, &mut calm_steps)?;
            }
        }
    };

    let field = stepper.field().clone();
    let max_res = match outcome {
        SteadyOutcome::Diverged { .. } => f64::INFINITY,
        _ => max_interior_residual(&field, stepper.problem()),
    };
    Ok(SteadyResult {
        field,
        outcome,
        steps,
        t_final: stepper.time(),
        max_interior_residual: max_res,
    })
}

/// Level drift per unit time over the second half of the recorded probe.
fn late_drift(log: &[(f64, f64)]) -> f64 {
    let (t_end, p_end) = *log.last().expect("probe log nonempty");
    if t_end <= 0.0 {
        return 0.0;
    }
    let t_mid = 0.5 * t_end;
    let (t0, p0) = log
        .iter()
        .min_by(|a, b| {
            (a.0 - t_mid).abs().partial_cmp(&(b.0 - t_mid).abs()).expect("finite times")
        })
        .copied()
        .expect("probe log nonempty");
    if t_end - t0 <= 0.0 {
        return 0.0;
    }
    (p_end - p0) / (t_end - t0)
}

/// If the last step's increment field is a near-uniform level shift, the
/// state is `u* + z` with `z` decaying like `exp(-lambda t)`; jump straight
/// to the extrapolated limit. Exact for a pure level offset, and safe in
/// general because convergence is still judged on later raw steps.
fn try_level_jump(
    stepper: &mut Stepper,
    prev: &Field,
    dt: f64,
    lambda: f64,
    calm_steps: &mut usize,
) -> Result<()> {
    let n = prev.len();
    let mut deltas: Vec<f64> = (0..n)
        .map(|i| stepper.field()[i] - prev[i])
        .collect();
    deltas.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite increments"));
    let median = 0.5 * (deltas[(n - 1) / 2] + deltas[n / 2]);
    let spread = deltas[n - 1] - deltas[0];
    if median == 0.0 || spread > LEVEL_SPREAD_REL * median.abs() {
        return Ok(());
    }
    // z(t+dt) - z(t) = z (e^{-lambda dt} - 1), so the remaining offset is
    // -z = median / (1 - e^{-lambda dt})
    let denom = -(-lambda * dt).exp_m1();
    if denom <= 0.0 {
        return Ok(());
    }
    let jump = median / denom;
    let mut u = stepper.field().clone();
    for v in u.values.iter_mut() {
        *v += jump;
    }
    stepper.set_field(u)?;
    *calm_steps = 0;
    Ok(())
}
