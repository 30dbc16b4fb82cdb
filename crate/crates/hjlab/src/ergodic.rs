//! The critical (ergodic) level of the constrained problem via vanishing
//! discount: solve the discounted problem down a ladder of `lambda` values,
//! read off `c = lim -lambda u_lambda(x*)`, and keep the centered profile.

use crate::domain::Field;
use crate::error::{Error, Result};
use crate::evolve::{evolve, Trajectory};
use crate::scheme::{max_interior_residual, BoundaryKind, ProblemSpec};
use crate::stationary::{solve_with, SolveOptions, SteadyOutcome};

/// Discount ladder `2^-2, 2^-3, ..., 2^-10`.
pub fn default_lambda_schedule() -> Vec<f64> {
    (2..=10).map(|j| 0.5f64.powi(j)).collect()
}

#[derive(Debug, Clone)]
pub struct ErgodicPair {
    /// Critical level: the unique constant making the constrained steady
    /// problem solvable.
    pub c: f64,
    /// Limit profile, normalized to vanish at the probe node.
    pub u_infinity: Field,
    pub lambdas: Vec<f64>,
    /// Raw probe values `u_lambda(x*)` per rung.
    pub u_at_xstar: Vec<f64>,
    /// Level estimates `-lambda u_lambda(x*)` per rung.
    pub c_estimates: Vec<f64>,
    /// Whether the last two ladder increments fell below the requested
    /// tolerance.
    pub converged: bool,
    pub xstar: usize,
}

/// Vanishing-discount limit along `schedule`, warm-starting each rung from
/// the previous one. `richardson` applies one extrapolation step to the
/// final level estimate (assumes a halving schedule). `probe` picks the
/// normalization node; `None` means the node nearest the domain center.
pub fn vanishing_discount_with(
    problem: &ProblemSpec,
    schedule: &[f64],
    cauchy_tol: f64,
    richardson: bool,
    probe: Option<usize>,
) -> Result<ErgodicPair> {
    if schedule.len() < 2 {
        return Err(Error::InvalidData("discount schedule needs at least two rungs".into()));
    }
    if schedule.windows(2).any(|w| !(w[1] < w[0]) ) || schedule.iter().any(|&l| l <= 0.0) {
        return Err(Error::InvalidData(
            "discount schedule must be positive and strictly decreasing".into(),
        ));
    }
    let grid = problem.grid();
    let xstar = match probe {
        Some(node) => {
            if node >= grid.len() || grid.is_boundary(node) {
                return Err(Error::InvalidData("probe node must be interior".into()));
            }
            node
        }
        None => grid.center_node(),
    };
    let mut warm: Option<Field> = None;
    let mut lambdas = Vec::new();
    let mut u_at_xstar = Vec::new();
    let mut c_estimates = Vec::new();
    let mut last_field: Option<Field> = None;

    for &lambda in schedule {
        let mut p = problem.clone();
        p.lambda = lambda;
        let r = solve_with(
            &p,
            BoundaryKind::StateConstraint,
            SolveOptions { init: warm.take(), ..SolveOptions::default() },
        )?;
        match r.outcome {
            SteadyOutcome::Converged => {}
            SteadyOutcome::TimedOut { probe_drift } => {
                return Err(Error::TimedOut { t: r.t_final, drift: probe_drift });
            }
            SteadyOutcome::Diverged { t } => {
                return Err(Error::Diverged { t, max_abs: r.field.max_abs() });
            }
        }
        lambdas.push(lambda);
        u_at_xstar.push(r.field[xstar]);
        c_estimates.push(-lambda * r.field[xstar]);
        warm = Some(r.field.clone());
        last_field = Some(r.field);
    }

    let n = c_estimates.len();
    let inc_last = (c_estimates[n - 1] - c_estimates[n - 2]).abs();
    let inc_prev =
        if n >= 3 { (c_estimates[n - 2] - c_estimates[n - 3]).abs() } else { inc_last };
    let converged = inc_last <= cauchy_tol && inc_prev <= cauchy_tol;

    let mut c = c_estimates[n - 1];
    if richardson {
        // error is O(lambda) on a halving ladder
        c = 2.0 * c_estimates[n - 1] - c_estimates[n - 2];
    }

    let last = last_field.expect("at least one rung solved");
    let u_infinity = last.shifted(-last[xstar]);

    Ok(ErgodicPair { c, u_infinity, lambdas, u_at_xstar, c_estimates, converged, xstar })
}

pub fn vanishing_discount(
    problem: &ProblemSpec,
    schedule: &[f64],
    cauchy_tol: f64,
) -> Result<ErgodicPair> {
    vanishing_discount_with(problem, schedule, cauchy_tol, false, None)
}

/// Long-run growth estimate from a constrained evolution: fit the probe
/// series over `window = (t0, t1)` by least squares and return minus the
/// slope. The probe grows like `-c t + O(1)`, so this estimates `c`.
pub fn slope_estimate_c(traj: &Trajectory, window: (f64, f64)) -> Result<f64> {
    let pts: Vec<(f64, f64)> = traj
        .times
        .iter()
        .zip(&traj.probe)
        .filter(|(t, _)| window.0 <= **t && **t <= window.1)
        .map(|(t, v)| (*t, *v))
        .collect();
    if pts.len() < 10 {
        return Err(Error::InsufficientSamples { found: pts.len(), need: 10 });
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom <= 0.0 {
        return Err(Error::DegenerateFit("probe window has no time spread".into()));
    }
    Ok(-(n * sxy - sx * sy) / denom)
}

#[derive(Debug, Clone, Copy)]
pub struct CharacterizationCheck {
    /// Interior residual of the limit profile at the critical level.
    pub residual_at_level: f64,
    /// Observed drift of a constrained run at level `c - margin` (should be
    /// close to `-margin`: below the critical level the field sinks).
    pub perturbed_drift: f64,
    pub margin: f64,
}

/// Two-sided check that `(c, u_infinity)` is the critical pair:
/// the profile solves the constrained problem at level `c` (small interior
/// residual), and lowering the level by `margin` produces a run that drifts
/// down at rate about `margin`, so no steady state exists below `c`.
pub fn check_characterization(
    pair: &ErgodicPair,
    problem: &ProblemSpec,
    margin: f64,
    horizon: f64,
) -> Result<CharacterizationCheck> {
    if !(margin > 0.0) {
        return Err(Error::InvalidData(format!("margin must be positive, got {margin}")));
    }
    let mut at_level = problem.clone();
    at_level.lambda = 0.0;
    at_level.c_shift = pair.c;
    let residual_at_level = max_interior_residual(&pair.u_infinity, &at_level);

    let mut below = problem.clone();
    below.lambda = 0.0;
    below.c_shift = pair.c - margin;
    below.u0 = pair.u_infinity.clone();
    let traj = evolve(&below, BoundaryKind::StateConstraint, horizon, None)?;
    let c_eff = slope_estimate_c(&traj, (0.5 * horizon, horizon))?;
    // level estimate of the shifted problem should be near +margin, i.e.
    // the run drifts at about -margin
    let perturbed_drift = -c_eff;

    Ok(CharacterizationCheck { residual_at_level, perturbed_drift, margin })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_grid, Domain, Grid};
    use std::sync::Arc;

    fn interval_grid(n: usize) -> Arc<Grid> {
        Arc::new(build_grid(&Domain::interval(-1.0, 1.0).unwrap(), [n, 1]).unwrap())
    }

    fn zero_problem(n: usize) -> ProblemSpec {
        let g = interval_grid(n);
        let z = Field::constant(&g, 0.0);
        ProblemSpec::new(3.0, 0.0, z.clone(), z.clone(), z.clone()).unwrap()
    }

    /// The critical level of the zero-source constrained problem on [-1, 1]
    /// has the closed form -(I(3)/2)^{3/2} with I(3) = 2 pi / (3 sin(pi/3)),
    /// about -1.32968.
    #[test]
    fn ladder_reaches_known_critical_level() {
        let p = zero_problem(201);
        let pair = vanishing_discount(&p, &default_lambda_schedule(), 1e-2).unwrap();
        assert!(pair.converged);
        assert_eq!(pair.u_infinity[pair.xstar], 0.0);
        assert!(
            (pair.c + 1.3296795).abs() < 0.08,
            "critical level {} vs -1.3296795",
            pair.c
        );
        // rung increments shrink roughly geometrically
        let n = pair.c_estimates.len();
        let last = (pair.c_estimates[n - 1] - pair.c_estimates[n - 2]).abs();
        let first = (pair.c_estimates[1] - pair.c_estimates[0]).abs();
        assert!(last < 0.25 * first.max(1e-9));
    }

    #[test]
    fn level_shifts_with_source() {
        let g = interval_grid(101);
        let z = Field::constant(&g, 0.0);
        let s = 0.7;
        let schedule: Vec<f64> = (2..=6).map(|j| 0.5f64.powi(j)).collect();
        let p0 = ProblemSpec::new(3.0, 0.0, z.clone(), z.clone(), z.clone()).unwrap();
        let ps = ProblemSpec::new(3.0, 0.0, Field::constant(&g, s), z.clone(), z.clone()).unwrap();
        let c0 = vanishing_discount(&p0, &schedule, 1.0).unwrap().c;
        let cs = vanishing_discount(&ps, &schedule, 1.0).unwrap().c;
        assert!(
            (cs - (c0 - s)).abs() < 1e-3,
            "shift equivariance broken: c(f+s) = {cs}, c(f) - s = {}",
            c0 - s
        );
    }

    #[test]
    fn slope_and_ladder_agree() {
        let p = zero_problem(151);
        let schedule: Vec<f64> = (2..=8).map(|j| 0.5f64.powi(j)).collect();
        let c_ladder = vanishing_discount(&p, &schedule, 1.0).unwrap().c;
        let traj = evolve(&p, BoundaryKind::StateConstraint, 8.0, Some(0.05)).unwrap();
        let c_slope = slope_estimate_c(&traj, (4.0, 8.0)).unwrap();
        assert!(
            (c_ladder - c_slope).abs() < 0.1,
            "ladder {c_ladder} vs slope {c_slope}"
        );
    }

    #[test]
    fn insufficient_window_is_an_error() {
        let p = zero_problem(51);
        let traj = evolve(&p, BoundaryKind::StateConstraint, 2.0, Some(0.1)).unwrap();
        let err = slope_estimate_c(&traj, (1.99, 2.0)).unwrap_err();
        assert!(matches!(err, Error::InsufficientSamples { .. }));
    }

    #[test]
    fn characterization_of_the_pair() {
        let p = zero_problem(151);
        let pair = vanishing_discount(&p, &default_lambda_schedule(), 1e-2).unwrap();
        let check = check_characterization(&pair, &p, 0.25, 6.0).unwrap();
        assert!(
            check.residual_at_level < 0.01,
            "residual at level too big: {}",
            check.residual_at_level
        );
        assert!(
            check.perturbed_drift <= -0.5 * check.margin,
            "below-level run should sink at about -margin, drifted {}",
            check.perturbed_drift
        );
    }

    #[test]
    fn schedule_validation() {
        let p = zero_problem(31);
        assert!(vanishing_discount(&p, &[0.25], 1e-2).is_err());
        assert!(vanishing_discount(&p, &[0.25, 0.5], 1e-2).is_err());
        assert!(vanishing_discount(&p, &[0.25, -0.1], 1e-2).is_err());
    }
}
