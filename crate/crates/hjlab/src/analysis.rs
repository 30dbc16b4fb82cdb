//! Post-processing of solver output: boundary-layer exponent fits,
//! long-time regime classification, loss-of-boundary-data reports, the
//! sup-norm contraction check, and explicit barrier functions.

use crate::domain::{Field, Grid};
use crate::ergodic::{slope_estimate_c, ErgodicPair};
use crate::error::{Error, Result};
use crate::evolve::Trajectory;
use crate::scheme::{layer_exponent, BoundaryKind};
use crate::stationary::{solve_with, SolveOptions};

/// Distance from the settled profile at which classification evidence is
/// accepted.
pub const PROFILE_TOL: f64 = 5e-2;
/// Allowed oscillation of the recentred probe over the tail window.
pub const OSC_TOL: f64 = 0.1;
const MIN_FIT_POINTS: usize = 8;
const MIN_TAIL_SAMPLES: usize = 20;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Least-squares line through `points` as `(slope, intercept)`.
pub fn linear_fit(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 2 {
        return Err(Error::InsufficientSamples { found: points.len(), need: 2 });
    }
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    let var = sxx - sx * sx / n;
    if !(var > 1e-30) || !var.is_finite() {
        return Err(Error::DegenerateFit("no spread in abscissae".into()));
    }
    let slope = (sxy - sx * sy / n) / var;
    let intercept = (sy - slope * sx) / n;
    Ok((slope, intercept))
}

/// A power-law fit `|difference| ~ prefactor * d^exponent` together with the
/// log-log point cloud it was computed from.
#[derive(Clone, Debug)]
pub struct FitResult {
    pub exponent: f64,
    pub prefactor: f64,
    /// `(ln d, ln value)` pairs that entered the regression.
    pub points: Vec<(f64, f64)>,
}

/// Straight-in chain from a boundary node: walking `step` along `axis` moves
/// into the domain with the near face staying the closest one.
struct Chain {
    boundary: usize,
    axis: usize,
    step: i32,
}

fn inward_chains(grid: &Grid) -> Vec<Chain> {
    let mut out = Vec::new();
    for b in grid.boundary_nodes() {
        let mi = grid.multi_index(b);
        let mut extremal = Vec::new();
        for axis in 0..grid.dim() {
            if mi[axis] == 0 {
                extremal.push((axis, 1));
            } else if mi[axis] + 1 == grid.shape[axis] {
                extremal.push((axis, -1));
            }
        }
        // corners have no single inward normal; skip them
        if let [(axis, step)] = extremal[..] {
            out.push(Chain { boundary: b, axis, step });
        }
    }
    out
}

fn collect_chain_points(
    u: &Field,
    delta0: f64,
    increments: bool,
) -> Result<(Vec<(f64, f64)>, usize)> {
    let grid = u.grid.clone();
    if !(delta0 > 0.0) || delta0 >= grid.domain.min_extent() / 2.0 {
        return Err(Error::InvalidDelta { delta: delta0, max: grid.domain.min_extent() / 2.0 });
    }
    let scale = 1.0 + u.max_abs();
    let mut points = Vec::new();
    let mut flat = 0usize;
    for chain in inward_chains(&grid) {
        let h = grid.spacing[chain.axis];
        let mut node = chain.boundary;
        let mut prev = u[chain.boundary];
        for k in 1.. {
            node = match grid.neighbor(node, chain.axis, chain.step) {
                Some(n) => n,
                None => break,
            };
            let d = k as f64 * h;
            if d > delta0 * (1.0 + 1e-12) {
                break;
            }
            // another face has become the nearest one; the chain leaves the
            // collar of its own face for good
            if grid.boundary_distance(node) < d - 1e-9 * h {
                break;
            }
            // a one-sided difference is a midpoint quantity; log it at the
            // midpoint depth to avoid tilting the fit
            let (abscissa, value) = if increments {
                (d - 0.5 * h, (prev - u[node]).abs() / h)
            } else {
                (d, (u[chain.boundary] - u[node]).abs())
            };
            prev = u[node];
            if k < 3 {
                continue;
            }
            if value < 1e-13 * scale {
                flat += 1;
            } else {
                points.push((abscissa.ln(), value.ln()));
            }
        }
    }
    Ok((points, flat))
}

fn power_fit(u: &Field, delta0: f64, increments: bool) -> Result<FitResult> {
    let (points, flat) = collect_chain_points(u, delta0, increments)?;
    if points.len() < MIN_FIT_POINTS {
        if flat >= MIN_FIT_POINTS {
            return Err(Error::DegenerateFit("field is constant along inward chains".into()));
        }
        return Err(Error::InsufficientSamples { found: points.len(), need: MIN_FIT_POINTS });
    }
    let (slope, intercept) = linear_fit(&points)?;
    Ok(FitResult { exponent: slope, prefactor: intercept.exp(), points })
}

/// Fit `|u(boundary) - u(x)| ~ K d(x)^beta` over straight-in chains with
/// depth in `[3h, delta0]`, pooling all non-corner boundary nodes. Returns
/// the exponent `beta` and prefactor `K`.
pub fn holder_fit(u: &Field, delta0: f64) -> Result<FitResult> {
    power_fit(u, delta0, false)
}

/// Fit the one-sided difference quotient magnitude against distance,
/// `|u_k - u_{k-1}|/h ~ K d^q`, over the collar `(2h, delta0]`. Steep
/// boundary layers give `q` near the gradient blow-up rate.
pub fn blowup_fit(u: &Field, delta0: f64) -> Result<FitResult> {
    power_fit(u, delta0, true)
}

/// Where the settled trace sits below the prescribed data by more than a
/// tolerance: the discrete signature of losing the boundary condition.
#[derive(Clone, Debug)]
pub struct LossReport {
    /// boundary nodes with `g - u > tol`, with their deficits
    pub lost: Vec<(usize, f64)>,
    pub max_deficit: f64,
    pub boundary_count: usize,
    pub all_lost: bool,
}

impl LossReport {
    pub fn any_lost(&self) -> bool {
        !self.lost.is_empty()
    }
}

pub fn boundary_loss(u: &Field, g: &Field, tol: f64) -> Result<LossReport> {
    if !std::sync::Arc::ptr_eq(&u.grid, &g.grid) && u.grid.shape != g.grid.shape {
        return Err(Error::InvalidData("field and data live on different grids".into()));
    }
    let grid = u.grid.clone();
    let mut lost = Vec::new();
    let mut max_deficit = f64::NEG_INFINITY;
    let mut boundary_count = 0usize;
    for node in grid.boundary_nodes() {
        boundary_count += 1;
        let deficit = g[node] - u[node];
        max_deficit = max_deficit.max(deficit);
        if deficit > tol {
            lost.push((node, deficit));
        }
    }
    let all_lost = lost.len() == boundary_count;
    Ok(LossReport { lost, max_deficit, boundary_count, all_lost })
}

/// Outcome of the sup-norm stability check between two runs sharing a grid
/// and discount rate.
#[derive(Clone, Debug)]
pub struct ContractionReport {
    pub holds: bool,
    /// smallest `bound - observed` over all sample times (negative = violated)
    pub worst_margin: f64,
    pub worst_time: f64,
    pub source_gap: f64,
    pub data_gap: f64,
    pub initial_gap: f64,
}

/// Verify, at every recorded sample time, that
/// `sup (u1-u2)^+  <=  t sup(f1-f2)^+ + e^{-lambda t} sup(u01-u02)^+ + sup(g1-g2)^+ + slack`.
pub fn check_contraction(a: &Trajectory, b: &Trajectory, slack: f64) -> Result<ContractionReport> {
    let ga = a.grid();
    let gb = b.grid();
    if ga.shape != gb.shape || ga.domain.lo != gb.domain.lo || ga.domain.hi != gb.domain.hi {
        return Err(Error::InvalidData("runs live on different grids".into()));
    }
    if (a.problem.lambda - b.problem.lambda).abs() > 1e-12 {
        return Err(Error::InvalidData("contraction bound needs a common discount rate".into()));
    }
    if a.kind != b.kind {
        return Err(Error::InvalidData("runs use different boundary operators".into()));
    }
    if a.times.len() != b.times.len()
        || a.times
            .iter()
            .zip(&b.times)
            .any(|(ta, tb)| (ta - tb).abs() > 1e-9 * (1.0 + ta.abs()))
    {
        return Err(Error::InvalidData("runs were sampled at different times".into()));
    }
    let lambda = a.problem.lambda;
    let pos_gap = |x: &Field, y: &Field, nodes: &mut dyn Iterator<Item = usize>| -> f64 {
        nodes.map(|n| (x[n] - y[n]).max(0.0)).fold(0.0, f64::max)
    };
    // the shift constant enters exactly like the source
    let source_gap = ga
        .interior_nodes()
        .map(|n| {
            ((a.problem.f[n] + a.problem.c_shift) - (b.problem.f[n] + b.problem.c_shift)).max(0.0)
        })
        .fold(0.0, f64::max);
    let data_gap = pos_gap(&a.problem.g, &b.problem.g, &mut ga.boundary_nodes());
    let initial_gap = pos_gap(&a.problem.u0, &b.problem.u0, &mut (0..ga.len()));

    let mut worst_margin = f64::INFINITY;
    let mut worst_time = 0.0;
    for (i, &t) in a.times.iter().enumerate() {
        let observed = pos_gap(&a.frames[i], &b.frames[i], &mut (0..ga.len()));
        let bound = t * source_gap + (-lambda * t).exp() * initial_gap + data_gap + slack;
        let margin = bound - observed;
        if margin < worst_margin {
            worst_margin = margin;
            worst_time = t;
        }
    }
    Ok(ContractionReport {
        holds: worst_margin >= 0.0,
        worst_margin,
        worst_time,
        source_gap,
        data_gap,
        initial_gap,
    })
}

/// Explicit supersolution profile `-(M/alpha) d^alpha + K/lambda`.
pub fn barrier_value(d: f64, m_const: f64, k_const: f64, lambda: f64, alpha: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidData("barrier requires a positive discount rate".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidData("barrier exponent must lie in (0, 1)".into()));
    }
    if d < 0.0 {
        return Err(Error::InvalidData("distance must be nonnegative".into()));
    }
    Ok(-(m_const / alpha) * d.powf(alpha) + k_const / lambda)
}

/// Constants `(M, K)` making the profile above a supersolution on a box:
/// `M^{m-1} > (1-alpha) + delta0^2/alpha` handles the collar (the distance
/// function of a box is piecewise linear, so its curvature terms vanish),
/// and `K > M[(1-alpha) delta0^{alpha-2} + d_max^alpha/alpha] + 3 sup|f|`
/// handles the bulk. A 5% headroom keeps both inequalities strict.
pub fn barrier_constants(m: f64, delta0: f64, d_max: f64, f_sup: f64) -> Result<(f64, f64)> {
    if m <= 2.0 {
        return Err(Error::InvalidData("barrier profile requires m > 2".into()));
    }
    if !(delta0 > 0.0) || !(d_max >= delta0) || f_sup < 0.0 {
        return Err(Error::InvalidData("barrier constants need 0 < delta0 <= d_max".into()));
    }
    let alpha = layer_exponent(m);
    let margin = 1.05;
    let m_const = (margin * ((1.0 - alpha) + delta0 * delta0 / alpha)).powf(1.0 / (m - 1.0));
    let k_const = margin
        * (m_const * ((1.0 - alpha) * delta0.powf(alpha - 2.0) + d_max.powf(alpha) / alpha)
            + 3.0 * f_sup);
    Ok((m_const, k_const))
}

/// Long-time regime by the sign of the level constant.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    /// negative level: the evolution settles onto the stationary solution
    NegativeC,
    /// zero level: the evolution settles onto the ergodic profile plus a constant
    ZeroC,
    /// positive level: linear decrease at the level rate around the ergodic profile
    PositiveC,
}

#[derive(Clone, Debug)]
pub struct TrichotomyReport {
    pub regime: Regime,
    pub c: f64,
    /// sup distance between the (recentred) final frame and its attractor
    pub profile_distance: f64,
    /// least-squares level estimate over the tail window
    pub tail_drift: f64,
    /// additive constant absorbed by the attractor (0 for the stationary regime)
    pub offset: f64,
    /// whether the settled trace sits below the data somewhere
    pub lost_boundary: bool,
    pub c_tol: f64,
}

/// Decide which long-time regime a relaxed-Dirichlet evolution realized,
/// cross-checking the level constant from `pair` against the trajectory.
/// Contradictory evidence is an `Inconclusive` error, never a guess.
pub fn classify_trichotomy(
    pair: &ErgodicPair,
    traj: &Trajectory,
    c_tol: f64,
) -> Result<TrichotomyReport> {
    if traj.kind != BoundaryKind::RelaxedDirichlet {
        return Err(Error::InvalidData(
            "regime classification applies to relaxed Dirichlet evolutions".into(),
        ));
    }
    if traj.problem.lambda != 0.0 {
        return Err(Error::InvalidData("regime classification requires lambda = 0".into()));
    }
    if traj.grid().shape != pair.u_infinity.grid.shape {
        return Err(Error::InvalidData("trajectory and ergodic profile grids differ".into()));
    }
    let t_end = traj.final_time();
    let tail_start = t_end / 2.0;
    let tail_count = traj.times.iter().filter(|&&t| t >= tail_start).count();
    if tail_count < MIN_TAIL_SAMPLES {
        return Err(Error::InsufficientSamples { found: tail_count, need: MIN_TAIL_SAMPLES });
    }
    let c = pair.c;
    let final_field = traj.final_field();
    let grid = traj.grid().clone();
    let h_min = grid.spacing[..grid.dim()].iter().cloned().fold(f64::INFINITY, f64::min);
    let loss = boundary_loss(final_field, &traj.problem.g, 2.0 * h_min.sqrt())?;

    if c < -c_tol {
        // settle onto the stationary solution of the same problem
        let steady = solve_with(
            &traj.problem,
            BoundaryKind::RelaxedDirichlet,
            SolveOptions { init: Some(final_field.clone()), t_max: 100.0, ..SolveOptions::default() },
        )?;
        if !steady.converged() {
            return Err(Error::Inconclusive(
                "negative level but no stationary profile within the time budget".into(),
            ));
        }
        let profile_distance = final_field.linf_distance(&steady.field);
        let tail_drift = slope_estimate_c(traj, (tail_start, t_end))?;
        if profile_distance > PROFILE_TOL {
            return Err(Error::Inconclusive(format!(
                "negative level but final frame sits {profile_distance:.3} from the stationary profile",
            )));
        }
        if tail_drift.abs() > c_tol.max(OSC_TOL) {
            return Err(Error::Inconclusive(format!(
                "negative level but the probe still drifts at rate {tail_drift:.3}",
            )));
        }
        return Ok(TrichotomyReport {
            regime: Regime::NegativeC,
            c,
            profile_distance,
            tail_drift,
            offset: 0.0,
            lost_boundary: loss.any_lost(),
            c_tol,
        });
    }

    // recentre by +c t; for |c| <= tol this is the plain final frame
    let effective_c = if c > c_tol { c } else { 0.0 };
    let recentred: Vec<f64> = traj
        .times
        .iter()
        .zip(&traj.probe)
        .filter(|(t, _)| **t >= tail_start)
        .map(|(t, p)| p + effective_c * t)
        .collect();
    let osc = recentred.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - recentred.iter().cloned().fold(f64::INFINITY, f64::min);
    if osc > OSC_TOL {
        return Err(Error::Inconclusive(format!(
            "recentred probe oscillates by {osc:.3} over the tail window",
        )));
    }
    let diffs: Vec<f64> = (0..grid.len())
        .map(|n| final_field[n] + effective_c * t_end - pair.u_infinity[n])
        .collect();
    let offset = median(diffs.clone());
    let profile_distance =
        diffs.iter().map(|d| (d - offset).abs()).fold(0.0, f64::max);
    if profile_distance > PROFILE_TOL {
        return Err(Error::Inconclusive(format!(
            "final frame sits {profile_distance:.3} from the shifted ergodic profile",
        )));
    }
    let tail_drift = slope_estimate_c(traj, (tail_start, t_end))?;
    let regime = if c > c_tol { Regime::PositiveC } else { Regime::ZeroC };
    Ok(TrichotomyReport {
        regime,
        c,
        profile_distance,
        tail_drift,
        offset,
        lost_boundary: loss.any_lost(),
        c_tol,
    })
}
