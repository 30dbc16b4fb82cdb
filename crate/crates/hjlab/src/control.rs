//! Stochastic-control cross-check: the gradient term |Du|^m is the Legendre
//! transform of a power running cost, so marching Euler-Maruyama paths under
//! the induced feedback and accumulating that cost must reproduce the PDE
//! value at the start point.

use crate::domain::Field;
use crate::error::{Error, Result};
use crate::evolve::Trajectory;
use crate::scheme::ProblemSpec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Running cost dual to |p|^m: `L(a) = (m-1) m^{-m/(m-1)} |a|^{m/(m-1)}`.
pub fn running_cost(a: [f64; 2], m: f64) -> f64 {
    let norm = (a[0] * a[0] + a[1] * a[1]).sqrt();
    if norm == 0.0 {
        return 0.0;
    }
    (m - 1.0) * m.powf(-m / (m - 1.0)) * norm.powf(m / (m - 1.0))
}

/// Minimizer of `a . p + L(a)`: the feedback `a*(p) = -m |p|^{m-2} p`.
pub fn feedback_control(p: [f64; 2], m: f64) -> [f64; 2] {
    let norm = (p[0] * p[0] + p[1] * p[1]).sqrt();
    if norm == 0.0 {
        return [0.0, 0.0];
    }
    let scale = -m * norm.powf(m - 2.0);
    [scale * p[0], scale * p[1]]
}

/// Duality defect `a . p + L(a) + |p|^m`; nonnegative for every pair and
/// zero exactly at the feedback control.
pub fn legendre_gap(p: [f64; 2], a: [f64; 2], m: f64) -> f64 {
    let pn = (p[0] * p[0] + p[1] * p[1]).sqrt();
    a[0] * p[0] + a[1] * p[1] + running_cost(a, m) + pn.powf(m)
}

#[derive(Clone, Copy, Debug)]
pub struct PathOutcome {
    pub cost: f64,
    pub exited: bool,
    pub exit_time: f64,
    pub capped: bool,
}

/// Aggregate of a Monte Carlo value estimation run.
#[derive(Clone, Debug)]
pub struct ControlRun {
    pub mean: f64,
    pub stderr: f64,
    pub exit_fraction: f64,
    pub capped: usize,
    pub n_paths: usize,
    pub dt: f64,
    pub paths: Vec<PathOutcome>,
}

/// One-sided difference quotients live on staggered midpoints; interpolate
/// them at a continuous point, per axis.
fn gradient_at(frame: &Field, x: [f64; 2]) -> [f64; 2] {
    let grid = &frame.grid;
    let mut g = [0.0f64; 2];
    for a in 0..grid.dim() {
        let h = grid.spacing[a];
        // midpoint coordinates along `a` run from lo + h/2 in steps of h
        let rel = ((x[a] - grid.domain.lo[a]) / h - 0.5)
            .clamp(0.0, (grid.shape[a] - 2) as f64);
        let i = (rel.floor() as usize).min(grid.shape[a].saturating_sub(3).max(0));
        let frac = (rel - i as f64).clamp(0.0, 1.0);
        let other = 1 - a;
        let quot = |ia: usize, io: usize| -> f64 {
            let mut lo_idx = [0usize; 2];
            lo_idx[a] = ia;
            lo_idx[other] = io;
            let mut hi_idx = lo_idx;
            hi_idx[a] = ia + 1;
            (frame[grid.index(hi_idx)] - frame[grid.index(lo_idx)]) / h
        };
        if grid.dim() == 1 {
            let g0 = quot(i, 0);
            let g1 = quot((i + 1).min(grid.shape[a] - 2), 0);
            g[a] = g0 + frac * (g1 - g0);
        } else {
            let ho = grid.spacing[other];
            let rel_o = ((x[other] - grid.domain.lo[other]) / ho)
                .clamp(0.0, (grid.shape[other] - 1) as f64);
            let j = (rel_o.floor() as usize).min(grid.shape[other] - 2);
            let frac_o = rel_o - j as f64;
            let i1 = (i + 1).min(grid.shape[a] - 2);
            let g00 = quot(i, j);
            let g10 = quot(i1, j);
            let g01 = quot(i, j + 1);
            let g11 = quot(i1, j + 1);
            let lo = g00 + frac * (g10 - g00);
            let hi = g01 + frac * (g11 - g01);
            g[a] = lo + frac_o * (hi - lo);
        }
    }
    g
}

/// Index of the recorded frame whose time is nearest to `t`.
fn nearest_frame(traj: &Trajectory, t: f64) -> usize {
    match traj.times.binary_search_by(|probe| probe.total_cmp(&t)) {
        Ok(i) => i,
        Err(i) => {
            if i == 0 {
                0
            } else if i >= traj.times.len() {
                traj.times.len() - 1
            } else if (traj.times[i] - t).abs() < (t - traj.times[i - 1]).abs() {
                i
            } else {
                i - 1
            }
        }
    }
}

/// Estimate the value at `x` over horizon `t_end` by simulating controlled
/// diffusions `dX = a dt + sqrt(2) dB` with the feedback read off the
/// recorded solution, paying the running cost until exit or the horizon.
/// Fixed seed gives a bit-identical result: each path draws from its own
/// counter-derived stream and the reduction is sequential.
pub fn mc_value(
    problem: &ProblemSpec,
    snapshots: &Trajectory,
    x: [f64; 2],
    t_end: f64,
    n_paths: usize,
    dt: f64,
    seed: u64,
) -> Result<ControlRun> {
    let grid = problem.grid().clone();
    if grid.shape != snapshots.grid().shape {
        return Err(Error::InvalidData("snapshots live on a different grid".into()));
    }
    if !(t_end > 0.0) || !(dt > 0.0) || n_paths == 0 {
        return Err(Error::InvalidData("need positive horizon, step and path count".into()));
    }
    if snapshots.final_time() < t_end - 1e-9 {
        return Err(Error::InvalidData(format!(
            "snapshots cover [0, {:.3}] but the horizon is {t_end}",
            snapshots.final_time()
        )));
    }
    for a in 0..grid.dim() {
        let margin = 1e-9 * grid.spacing[a];
        if x[a] <= grid.domain.lo[a] + margin || x[a] >= grid.domain.hi[a] - margin {
            return Err(Error::InvalidData(format!(
                "start point {:?} is not interior along axis {a}",
                &x[..grid.dim()]
            )));
        }
    }
    let m = problem.m;
    let cap = (t_end / dt).ceil() as usize + 2;
    let mut paths = Vec::with_capacity(n_paths);
    let mut capped = 0usize;
    let mut exits = 0usize;

    for path in 0..n_paths {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path as u64);
        let mut pos = x;
        let mut t = 0.0f64;
        let mut cost = 0.0f64;
        let mut exited = false;
        let mut exit_time = f64::INFINITY;
        let mut steps = 0usize;

        while t < t_end - 1e-12 && steps < cap {
            steps += 1;
            let step_dt = dt.min(t_end - t);
            let frame = &snapshots.frames[nearest_frame(snapshots, t_end - t)];
            let grad = gradient_at(frame, pos);
            let a_ctrl = feedback_control(grad, m);
            let rate = problem.f.value_at(pos) + running_cost(a_ctrl, m);

            let mut next = pos;
            for axis in 0..grid.dim() {
                let noise: f64 = StandardNormal.sample(&mut rng);
                next[axis] += a_ctrl[axis] * step_dt + (2.0 * step_dt).sqrt() * noise;
            }
            // first boundary crossing along the straight segment
            let mut theta = 1.0f64;
            for axis in 0..grid.dim() {
                if next[axis] < grid.domain.lo[axis] {
                    theta = theta.min((grid.domain.lo[axis] - pos[axis]) / (next[axis] - pos[axis]));
                } else if next[axis] > grid.domain.hi[axis] {
                    theta = theta.min((grid.domain.hi[axis] - pos[axis]) / (next[axis] - pos[axis]));
                }
            }
            if theta < 1.0 {
                let mut hit = pos;
                for axis in 0..grid.dim() {
                    hit[axis] += theta * (next[axis] - pos[axis]);
                    hit[axis] = hit[axis].clamp(grid.domain.lo[axis], grid.domain.hi[axis]);
                }
                cost += theta * step_dt * rate + problem.g.value_at(hit);
                exited = true;
                exit_time = t + theta * step_dt;
                break;
            }
            cost += step_dt * rate;
            pos = next;
            t += step_dt;
        }
        let is_capped = !exited && t < t_end - 1e-12;
        if !exited {
            cost += problem.u0.value_at(pos);
        }
        if is_capped {
            capped += 1;
        }
        if exited {
            exits += 1;
        }
        paths.push(PathOutcome { cost, exited, exit_time, capped: is_capped });
    }

    let n = n_paths as f64;
    let mean = paths.iter().map(|p| p.cost).sum::<f64>() / n;
    let var = if n_paths > 1 {
        paths.iter().map(|p| (p.cost - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(ControlRun {
        mean,
        stderr: (var / n).sqrt(),
        exit_fraction: exits as f64 / n,
        capped,
        n_paths,
        dt,
        paths,
    })
}
