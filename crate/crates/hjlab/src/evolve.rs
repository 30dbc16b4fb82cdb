//! Explicit Euler time marching `du/dt = lap u - |grad u|^m - lambda u + f + c_shift`
//! with monotone spatial kernels and Jacobi-style boundary closures.

use crate::domain::{Field, Grid};
use crate::error::{Error, Result};
use crate::scheme::{pow_half_m, residual_and_slope, BoundaryClosure, BoundaryKind, ProblemSpec};
use std::sync::Arc;

/// Values above this are treated as numerical blow-up.
pub const DIVERGENCE_CAP: f64 = 1e6;

/// Safety factor applied to the formal stability limit.
const CFL_SAFETY: f64 = 0.5;

#[derive(Debug, Clone, Copy)]
pub struct StepInfo {
    pub t: f64,
    pub dt: f64,
    pub max_residual: f64,
    /// Largest |u_new - u_old| over the step.
    pub max_increment: f64,
}

/// One explicit step at a time, so callers can run two problems in lockstep
/// with a shared step size.
pub struct Stepper {
    problem: ProblemSpec,
    closure: BoundaryClosure,
    u: Field,
    t: f64,
    residuals: Vec<f64>,
    /// Largest squared upwind gradient norm from the last sweep.
    max_slope2: f64,
    max_residual: f64,
    swept: bool,
}

impl Stepper {
    pub fn new(problem: ProblemSpec, kind: BoundaryKind) -> Result<Self> {
        let grid = &problem.u0.grid;
        let closure = BoundaryClosure::new(grid, problem.m, kind)?;
        let u = problem.u0.clone();
        let n = grid.len();
        Ok(Stepper {
            problem,
            closure,
            u,
            t: 0.0,
            residuals: vec![0.0; n],
            max_slope2: 0.0,
            max_residual: 0.0,
            swept: false,
        })
    }

    pub fn field(&self) -> &Field {
        &self.u
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.u.grid
    }

    pub fn problem(&self) -> &ProblemSpec {
        &self.problem
    }

    /// Replace the current state (resets nothing else).
    pub fn set_field(&mut self, u: Field) -> Result<()> {
        if u.grid != self.u.grid {
            return Err(Error::InvalidData("state lives on a different grid".into()));
        }
        self.u = u;
        self.swept = false;
        Ok(())
    }

    fn sweep(&mut self) {
        let mut max_slope2 = 0.0f64;
        let mut max_res = 0.0f64;
        let grid = Arc::clone(&self.u.grid);
        for node in grid.interior_nodes() {
            let (r, s2) = residual_and_slope(&self.u, &self.problem, node);
            self.residuals[node] = r;
            max_slope2 = max_slope2.max(s2);
            max_res = max_res.max(r.abs());
        }
        self.max_slope2 = max_slope2;
        self.max_residual = max_res;
        self.swept = true;
    }

    /// Stable explicit step for the current state:
    /// `dt = safety / ( sum_a 2/h_a^2 + L_H + lambda )` with
    /// `L_H = m |a|^{m-1} sqrt(sum_a 1/h_a^2)` bounding the gradient
    /// Hamiltonian's dependence on the node's own value.
    pub fn cfl_timestep(&mut self) -> f64 {
        if !self.swept {
            self.sweep();
        }
        let grid = &self.u.grid;
        let p = &self.problem;
        let mut denom = p.lambda;
        let mut inv_h2 = 0.0;
        for axis in 0..grid.dim() {
            let h = grid.spacing[axis];
            denom += 2.0 / (h * h);
            inv_h2 += 1.0 / (h * h);
        }
        let lh = p.m * pow_half_m(self.max_slope2, p.m - 1.0) * inv_h2.sqrt();
        denom += lh;
        CFL_SAFETY / denom
    }

    /// Advance one step. `dt = None` uses the stability limit; an explicit
    /// `dt` must not exceed it.
    pub fn step(&mut self, dt: Option<f64>) -> Result<StepInfo> {
        if !self.swept {
            self.sweep();
        }
        let dt = dt.unwrap_or_else(|| self.cfl_timestep());
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::DegenerateTimestep(dt));
        }
        let grid = Arc::clone(&self.u.grid);
        let mut next = self.u.clone();
        let mut max_inc = 0.0f64;
        for node in grid.interior_nodes() {
            let v = self.u[node] - dt * self.residuals[node];
            max_inc = max_inc.max((v - self.u[node]).abs());
            next[node] = v;
        }
        for node in grid.boundary_nodes() {
            let v = self.closure.value(&self.u, &self.problem, node);
            max_inc = max_inc.max((v - self.u[node]).abs());
            next[node] = v;
        }
        self.t += dt;
        let info = StepInfo {
            t: self.t,
            dt,
            max_residual: self.max_residual,
            max_increment: max_inc,
        };
        self.u = next;
        self.swept = false;
        let worst = self.u.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !worst.is_finite() || worst > DIVERGENCE_CAP {
            return Err(Error::Diverged { t: self.t, max_abs: worst });
        }
        Ok(info)
    }
}

/// Time series of sampled fields from one evolution run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub problem: ProblemSpec,
    pub kind: BoundaryKind,
    pub times: Vec<f64>,
    pub frames: Vec<Field>,
    /// Field value at the probe node at each sample time.
    pub probe: Vec<f64>,
    pub probe_node: usize,
    pub steps: usize,
    /// Largest |du/dt| seen over any single step.
    pub max_rate: f64,
}

impl Trajectory {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.problem.f.grid
    }

    pub fn final_field(&self) -> &Field {
        self.frames.last().expect("trajectory has at least the initial frame")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory has at least the initial frame")
    }
}

/// March to `t_end`, sampling every `sample_every` time units (default:
/// `t_end / 200`). The initial state and the final state are always sampled.
pub fn evolve(
    problem: &ProblemSpec,
    kind: BoundaryKind,
    t_end: f64,
    sample_every: Option<f64>,
) -> Result<Trajectory> {
    if !(t_end.is_finite() && t_end > 0.0) {
        return Err(Error::InvalidData(format!("bad horizon t_end = {t_end}")));
    }
    let sample_every = sample_every.unwrap_or(t_end / 200.0);
    if !(sample_every > 0.0) {
        return Err(Error::InvalidData(format!("bad sampling interval {sample_every}")));
    }
    let mut stepper = Stepper::new(problem.clone(), kind)?;
    let probe_node = stepper.grid().center_node();

    let mut times = vec![0.0];
    let mut frames = vec![stepper.field().clone()];
    let mut probe = vec![stepper.field()[probe_node]];
    let mut next_sample = sample_every;
    let mut steps = 0usize;
    let mut max_rate = 0.0f64;

    while stepper.time() < t_end - 1e-12 {
        let dt_stable = stepper.cfl_timestep();
        let dt = dt_stable.min(t_end - stepper.time());
        let info = stepper.step(Some(dt))?;
        steps += 1;
        max_rate = max_rate.max(info.max_increment / info.dt);
        if stepper.time() >= next_sample - 1e-12 || stepper.time() >= t_end - 1e-12 {
            times.push(stepper.time());
            frames.push(stepper.field().clone());
            probe.push(stepper.field()[probe_node]);
            while next_sample <= stepper.time() + 1e-12 {
                next_sample += sample_every;
            }
        }
    }

    Ok(Trajectory {
        problem: problem.clone(),
        kind,
        times,
        frames,
        probe,
        probe_node,
        steps,
        max_rate,
    })
}

/// March two problems on the same grid in lockstep, each step taking the
/// smaller of the two stable timesteps, so both trajectories are sampled at
/// identical times. This is what nodewise cross-run comparisons need.
pub fn evolve_lockstep(
    p1: &ProblemSpec,
    p2: &ProblemSpec,
    kind: BoundaryKind,
    t_end: f64,
    sample_every: Option<f64>,
) -> Result<(Trajectory, Trajectory)> {
    if !(t_end.is_finite() && t_end > 0.0) {
        return Err(Error::InvalidData(format!("bad horizon t_end = {t_end}")));
    }
    if p1.grid().shape != p2.grid().shape || p1.grid().domain.lo != p2.grid().domain.lo {
        return Err(Error::InvalidData("lockstep runs need a common grid".into()));
    }
    let sample_every = sample_every.unwrap_or(t_end / 200.0);
    if !(sample_every > 0.0) {
        return Err(Error::InvalidData(format!("bad sampling interval {sample_every}")));
    }
    let mut s1 = Stepper::new(p1.clone(), kind)?;
    let mut s2 = Stepper::new(p2.clone(), kind)?;
    let probe_node = s1.grid().center_node();

    let mut times = vec![0.0];
    let mut frames1 = vec![s1.field().clone()];
    let mut frames2 = vec![s2.field().clone()];
    let mut probe1 = vec![s1.field()[probe_node]];
    let mut probe2 = vec![s2.field()[probe_node]];
    let mut next_sample = sample_every;
    let mut steps = 0usize;
    let mut max_rate = 0.0f64;

    while s1.time() < t_end - 1e-12 {
        let dt = s1.cfl_timestep().min(s2.cfl_timestep()).min(t_end - s1.time());
        let i1 = s1.step(Some(dt))?;
        let i2 = s2.step(Some(dt))?;
        steps += 1;
        max_rate = max_rate.max((i1.max_increment.max(i2.max_increment)) / dt);
        if s1.time() >= next_sample - 1e-12 || s1.time() >= t_end - 1e-12 {
            times.push(s1.time());
            frames1.push(s1.field().clone());
            frames2.push(s2.field().clone());
            probe1.push(s1.field()[probe_node]);
            probe2.push(s2.field()[probe_node]);
            while next_sample <= s1.time() + 1e-12 {
                next_sample += sample_every;
            }
        }
    }

    let t1 = Trajectory {
        problem: p1.clone(),
        kind,
        times: times.clone(),
        frames: frames1,
        probe: probe1,
        probe_node,
        steps,
        max_rate,
    };
    let t2 = Trajectory {
        problem: p2.clone(),
        kind,
        times,
        frames: frames2,
        probe: probe2,
        probe_node,
        steps,
        max_rate,
    };
    Ok((t1, t2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_grid, Domain};
    use std::f64::consts::PI;

    fn interval_grid(n: usize) -> Arc<Grid> {
        Arc::new(build_grid(&Domain::interval(-1.0, 1.0).unwrap(), [n, 1]).unwrap())
    }

    #[test]
    fn cfl_matches_hand_value_for_flat_field() {
        let g = Arc::new(build_grid(&Domain::interval(0.0, 2.0).unwrap(), [21, 1]).unwrap());
        assert!((g.spacing[0] - 0.1).abs() < 1e-15);
        let z = Field::constant(&g, 0.0);
        let p = ProblemSpec::new(3.0, 0.0, z.clone(), z.clone(), z.clone()).unwrap();
        let mut s = Stepper::new(p, BoundaryKind::RelaxedDirichlet).unwrap();
        // flat field: no gradient term, dt = 0.5 / (2 / h^2) = h^2 / 4
        assert!((s.cfl_timestep() - 0.0025).abs() < 1e-12);
    }

    #[test]
    fn dirichlet_decay_to_data() {
        let g = interval_grid(101);
        let u0 = Field::from_fn(&g, |x| -(PI * x[0] / 2.0).cos());
        let z = Field::constant(&g, 0.0);
        let p = ProblemSpec::new(3.0, 0.0, z.clone(), z.clone(), u0).unwrap();
        let traj = evolve(&p, BoundaryKind::RelaxedDirichlet, 2.0, None).unwrap();
        // heat decay rate (pi/2)^2; the gradient term only helps
        assert!(traj.final_field().max_abs() < 0.02);
        assert_eq!(traj.times.len(), traj.frames.len());
        assert_eq!(traj.times.len(), traj.probe.len());
        assert!(traj.times.len() >= 100);
    }

    #[test]
    fn rate_bounded_by_initial_data_scale() {
        let g = interval_grid(201);
        let u0 = Field::from_fn(&g, |x| 0.3 * (PI * x[0]).cos() + 0.3);
        let gdata = u0.clone();
        let f = Field::constant(&g, 0.2);
        let lambda = 0.4;
        let m = 3.0;
        let p = ProblemSpec::new(m, lambda, f.clone(), gdata, u0.clone()).unwrap();
        // sup-norm bound on the initial rate:
        // |lap u0| + |grad u0|^m + lambda |u0| + |f|
        let lap = 0.3 * PI * PI;
        let grad = (0.3 * PI).powf(m);
        let bound = lap + grad + lambda * 0.6 + 0.2 + 1.0;
        let traj = evolve(&p, BoundaryKind::RelaxedDirichlet, 0.5, None).unwrap();
        assert!(
            traj.max_rate <= 1.2 * bound,
            "rate {} exceeds scale bound {}",
            traj.max_rate,
            bound
        );
    }

    #[test]
    fn constrained_run_drifts_up_for_zero_source() {
        // with no source the constrained problem has a negative critical
        // level, so the field climbs at rate |c| once the layer forms
        let g = interval_grid(151);
        let z = Field::constant(&g, 0.0);
        let p = ProblemSpec::new(3.0, 0.0, z.clone(), z.clone(), z.clone()).unwrap();
        let traj = evolve(&p, BoundaryKind::StateConstraint, 6.0, Some(0.05)).unwrap();
        let burn: Vec<(f64, f64)> = traj
            .times
            .iter()
            .zip(&traj.probe)
            .filter(|(t, _)| **t >= 3.0)
            .map(|(t, v)| (*t, *v))
            .collect();
        let n = burn.len() as f64;
        let sx: f64 = burn.iter().map(|p| p.0).sum();
        let sy: f64 = burn.iter().map(|p| p.1).sum();
        let sxx: f64 = burn.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = burn.iter().map(|p| p.0 * p.1).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        assert!(
            (slope - 1.3297).abs() < 0.15,
            "drift {slope} vs expected +1.3297"
        );
    }

    #[test]
    fn divergence_is_reported() {
        let g = interval_grid(51);
        let z = Field::constant(&g, 0.0);
        let huge = Field::constant(&g, 2e6);
        let p = ProblemSpec::new(3.0, 0.0, z.clone(), z.clone(), huge).unwrap();
        let err = evolve(&p, BoundaryKind::StateConstraint, 1.0, None).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }));
    }

    #[test]
    fn lockstep_preserves_ordering_exactly() {
        let g = interval_grid(101);
        let f1 = Field::constant(&g, 0.0);
        let f2 = Field::constant(&g, 0.5);
        let u1 = Field::from_fn(&g, |x| -0.3 * (PI * x[0] / 2.0).cos());
        let u2 = Field::constant(&g, 0.0);
        let g1 = Field::constant(&g, 0.0);
        let g2 = Field::constant(&g, 0.2);
        let p1 = ProblemSpec::new(3.0, 0.5, f1, g1, u1).unwrap();
        let p2 = ProblemSpec::new(3.0, 0.5, f2, g2, u2).unwrap();
        let mut s1 = Stepper::new(p1, BoundaryKind::RelaxedDirichlet).unwrap();
        let mut s2 = Stepper::new(p2, BoundaryKind::RelaxedDirichlet).unwrap();
        for _ in 0..500 {
            let dt = s1.cfl_timestep().min(s2.cfl_timestep());
            s1.step(Some(dt)).unwrap();
            s2.step(Some(dt)).unwrap();
            let violation = s1
                .field()
                .values
                .iter()
                .zip(&s2.field().values)
                .map(|(a, b)| a - b)
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(violation <= 1e-12, "ordering violated by {violation}");
        }
    }
}
