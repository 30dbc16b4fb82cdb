//! Monotone finite-difference discretization of
//!
//! ```text
//!     lambda * u - lap(u) + |grad u|^m = f + c_shift
//! ```
//!
//! with upwind (Godunov / Rouy-Tourin) gradient terms and boundary closures
//! for relaxed Dirichlet data and state constraints.

use crate::domain::{Field, Grid};
use crate::error::{Error, Result};
use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

/// How the boundary nodes are closed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryKind {
    /// Boundary data that the solution may detach from (from below).
    RelaxedDirichlet,
    /// No boundary data; the solution is pinned only by the constraint.
    StateConstraint,
}

/// Coefficients and data of one problem instance.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub m: f64,
    pub lambda: f64,
    pub c_shift: f64,
    pub f: Field,
    pub g: Field,
    pub u0: Field,
}

impl ProblemSpec {
    pub fn new(m: f64, lambda: f64, f: Field, g: Field, u0: Field) -> Result<Self> {
        if !(m.is_finite() && m > 1.0) {
            return Err(Error::InvalidData(format!("gradient exponent m = {m}, need m > 1")));
        }
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::InvalidData(format!("discount lambda = {lambda}, need >= 0")));
        }
        for (name, field) in [("f", &f), ("g", &g), ("u0", &u0)] {
            if !field.is_finite() {
                return Err(Error::InvalidData(format!("field {name} has non-finite entries")));
            }
        }
        if f.grid != g.grid || f.grid != u0.grid {
            return Err(Error::InvalidData("fields live on different grids".into()));
        }
        Ok(ProblemSpec { m, lambda, c_shift: 0.0, f, g, u0 })
    }

    pub fn with_shift(mut self, c_shift: f64) -> Self {
        self.c_shift = c_shift;
        self
    }

    pub fn grid(&self) -> &Grid {
        &self.f.grid
    }

    /// Initial data must match the boundary data when it is meant to be
    /// attained classically at t = 0.
    pub fn check_boundary_compatibility(&self, tol: f64) -> Result<()> {
        let grid = self.grid();
        for node in grid.boundary_nodes() {
            let gap = (self.u0[node] - self.g[node]).abs();
            if gap > tol {
                return Err(Error::InvalidData(format!(
                    "u0 and g differ by {gap:.3e} at boundary node {node}"
                )));
            }
        }
        Ok(())
    }
}

/// `x^{m/2}` for `x >= 0`, with multiply/sqrt shortcuts for the common
/// exponents so the inner loops avoid `powf`.
#[inline]
pub fn pow_half_m(x: f64, m: f64) -> f64 {
    if m == 2.0 {
        x
    } else if m == 3.0 {
        x * x.sqrt()
    } else if m == 4.0 {
        x * x
    } else if m == 1.5 {
        (x * x.sqrt()).sqrt()
    } else if m == 2.5 {
        x * x.sqrt().sqrt()
    } else {
        x.powf(0.5 * m)
    }
}

/// `|a|^m` through the squared argument.
#[inline]
pub fn pow_abs_m(a: f64, m: f64) -> f64 {
    pow_half_m(a * a, m)
}

/// Godunov flux for the one-dimensional Hamiltonian `|p|^m` given the
/// backward and forward difference quotients at a node.
pub fn godunov_hamiltonian_1d(p_minus: f64, p_plus: f64, m: f64) -> f64 {
    let a = p_minus.max(-p_plus).max(0.0);
    pow_abs_m(a, m)
}

/// Upwind slope magnitudes per axis and the resulting Hamiltonian value
/// `( sum_a s_a^2 )^{m/2}` at an interior node.
pub fn grad_norm_monotone(u: &Field, node: usize, m: f64) -> f64 {
    let grid = &u.grid;
    debug_assert!(!grid.is_boundary(node));
    let mut s2 = 0.0;
    for axis in 0..grid.dim() {
        let h = grid.spacing[axis];
        let down = u[grid.neighbor(node, axis, -1).expect("interior node")];
        let up = u[grid.neighbor(node, axis, 1).expect("interior node")];
        let p_minus = (u[node] - down) / h;
        let p_plus = (up - u[node]) / h;
        let a = p_minus.max(-p_plus).max(0.0);
        s2 += a * a;
    }
    pow_half_m(s2, m)
}

/// Standard 2d+1 point Laplacian at an interior node.
pub fn discrete_laplacian(u: &Field, node: usize) -> f64 {
    let grid = &u.grid;
    debug_assert!(!grid.is_boundary(node));
    let mut lap = 0.0;
    for axis in 0..grid.dim() {
        let h = grid.spacing[axis];
        let down = u[grid.neighbor(node, axis, -1).expect("interior node")];
        let up = u[grid.neighbor(node, axis, 1).expect("interior node")];
        lap += (down - 2.0 * u[node] + up) / (h * h);
    }
    lap
}

/// Steady residual `lambda u - lap u + |grad u|^m - f - c_shift` at an
/// interior node, together with the squared Euclidean norm of the upwind
/// slopes there (used for time step control).
pub fn residual_and_slope(u: &Field, p: &ProblemSpec, node: usize) -> (f64, f64) {
    let grid = &u.grid;
    debug_assert!(!grid.is_boundary(node));
    let mut s2 = 0.0;
    let mut lap = 0.0;
    for axis in 0..grid.dim() {
        let h = grid.spacing[axis];
        let down = u[grid.neighbor(node, axis, -1).expect("interior node")];
        let up = u[grid.neighbor(node, axis, 1).expect("interior node")];
        let p_minus = (u[node] - down) / h;
        let p_plus = (up - u[node]) / h;
        let a = p_minus.max(-p_plus).max(0.0);
        s2 += a * a;
        lap += (down - 2.0 * u[node] + up) / (h * h);
    }
    let res = p.lambda * u[node] - lap + pow_half_m(s2, p.m) - p.f[node] - p.c_shift;
    (res, s2)
}

/// Interior residual written as `du/dt = -residual`; convenience wrapper.
pub fn pde_residual(u: &Field, p: &ProblemSpec, node: usize) -> f64 {
    residual_and_slope(u, p, node).0
}

/// Largest interior residual magnitude; the discrete measure of how far a
/// field is from solving the steady problem.
pub fn max_interior_residual(u: &Field, p: &ProblemSpec) -> f64 {
    u.grid
        .interior_nodes()
        .map(|n| pde_residual(u, p, n).abs())
        .fold(0.0, f64::max)
}

/// Boundary layer exponent `alpha = (m-2)/(m-1)` of the constrained problem.
pub fn layer_exponent(m: f64) -> f64 {
    (m - 2.0) / (m - 1.0)
}

/// Leading amplitude of the continuum boundary layer `g - B d^alpha`:
/// `B = (1-alpha)^{1/(m-1)} / alpha`.
pub fn layer_amplitude(m: f64) -> f64 {
    let alpha = layer_exponent(m);
    (1.0 - alpha).powf(1.0 / (m - 1.0)) / alpha
}

/// Steady increments of the pure discrete layer: `b_{k+1}^m + b_{k+1} = b_k`.
fn layer_cascade(beta1: f64, m: f64, len: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(len);
    let mut b = beta1;
    out.push(b);
    for _ in 1..len {
        let mut x = b.min(b.powf(1.0 / m));
        for _ in 0..60 {
            let fx = x + pow_abs_m(x, m) - b;
            let dfx = 1.0 + m * pow_abs_m(x, m - 1.0);
            let step = fx / dfx;
            x -= step;
            if step.abs() < 1e-16 * (1.0 + x.abs()) {
                break;
            }
        }
        out.push(x);
        b = x;
    }
    out
}

fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let (lx, ly) = (x.ln(), y.ln());
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// Worst deviation, over the standard collar windows, between the log-log
/// slopes of the cascade seeded at `beta1` and the continuum layer exponents.
fn cascade_fit_bias(beta1: f64, m: f64) -> f64 {
    let alpha = layer_exponent(m);
    let betas = layer_cascade(beta1, m, 128);
    let mut cum = Vec::with_capacity(betas.len());
    let mut s = 0.0;
    for &b in &betas {
        s += b;
        cum.push(s);
    }
    let ks: Vec<f64> = (1..=betas.len()).map(|k| k as f64).collect();
    // the increment beta_k = u_k - u_{k-1} is a midpoint quantity
    let ks_mid: Vec<f64> = (1..=betas.len()).map(|k| k as f64 - 0.5).collect();
    let mut worst = 0.0f64;
    for kmax in [50usize, 100] {
        let lo = 2; // first two layers excluded, window starts at k = 3
        let hi = kmax;
        worst = worst.max((log_log_slope(&ks[lo..hi], &cum[lo..hi]) - alpha).abs());
        worst = worst
            .max((log_log_slope(&ks_mid[lo..hi], &betas[lo..hi]) - (alpha - 1.0)).abs());
    }
    worst
}

/// Lift coefficient `kappa(m)` of the discrete state-constraint closure
/// `u[boundary] = u[inward] + kappa * h^alpha`, chosen so the resulting
/// discrete layer tracks the continuum profile `g - B d^alpha` as closely as
/// possible in both value and one-sided gradient over the fitting collar.
/// Only defined for m > 2 (below that the constrained layer is unbounded).
pub fn boundary_lift_coefficient(m: f64) -> f64 {
    assert!(m > 2.0, "state-constraint lift needs m > 2, got {m}");
    static CACHE: OnceLock<Mutex<HashMap<u64, f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(&v) = cache.lock().unwrap().get(&m.to_bits()) {
        return v;
    }
    // golden-section search for the bias minimum; the objective is smooth
    // and unimodal on this bracket
    let gr = 0.5 * (5.0f64.sqrt() - 1.0);
    let (mut a, mut b) = (0.05f64, 6.0f64);
    let (mut c, mut d) = (b - gr * (b - a), a + gr * (b - a));
    let (mut fc, mut fd) = (cascade_fit_bias(c, m), cascade_fit_bias(d, m));
    for _ in 0..80 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - gr * (b - a);
            fc = cascade_fit_bias(c, m);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + gr * (b - a);
            fd = cascade_fit_bias(d, m);
        }
    }
    let v = 0.5 * (a + b);
    cache.lock().unwrap().insert(m.to_bits(), v);
    v
}

/// Precomputed per-axis boundary lifts `kappa * h_axis^alpha`.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryClosure {
    pub kind: BoundaryKind,
    lift: [f64; 2],
}

impl BoundaryClosure {
    pub fn new(grid: &Grid, m: f64, kind: BoundaryKind) -> Result<Self> {
        if kind == BoundaryKind::StateConstraint && m <= 2.0 {
            return Err(Error::InvalidData(format!(
                "state constraints are only supported for m > 2 (constrained \
                 solutions are unbounded near the boundary otherwise); got m = {m}"
            )));
        }
        let mut lift = [f64::INFINITY; 2];
        if m > 2.0 {
            let kappa = boundary_lift_coefficient(m);
            let alpha = layer_exponent(m);
            for axis in 0..grid.dim() {
                lift[axis] = kappa * grid.spacing[axis].powf(alpha);
            }
        }
        Ok(BoundaryClosure { kind, lift })
    }

    /// Closure value for a boundary node, computed from the previous field.
    /// Relaxed Dirichlet caps at the data; the constrained branch floats one
    /// layer amplitude above the inward neighbor. For m <= 2 the float is
    /// infinite, which reduces the relaxed condition to classical Dirichlet.
    pub fn value(&self, u_old: &Field, p: &ProblemSpec, node: usize) -> f64 {
        let grid = &u_old.grid;
        debug_assert!(grid.is_boundary(node));
        let ij = grid.multi_index(node);
        let mut inner = ij;
        let mut lift = f64::INFINITY;
        for axis in 0..grid.dim() {
            if ij[axis] == 0 {
                inner[axis] = 1;
                lift = lift.min(self.lift[axis]);
            } else if ij[axis] == grid.shape[axis] - 1 {
                inner[axis] = grid.shape[axis] - 2;
                lift = lift.min(self.lift[axis]);
            }
        }
        let floated = if lift.is_finite() {
            u_old[grid.index(inner)] + lift
        } else {
            f64::INFINITY
        };
        match self.kind {
            BoundaryKind::RelaxedDirichlet => p.g[node].min(floated),
            BoundaryKind::StateConstraint => floated,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_grid, Domain};
    use proptest::prelude::*;
    use std::sync::Arc;

    fn grid_1d(n: usize) -> Arc<Grid> {
        Arc::new(build_grid(&Domain::interval(-1.0, 1.0).unwrap(), [n, 1]).unwrap())
    }

    fn grid_2d(n: usize) -> Arc<Grid> {
        let d = Domain::rectangle([-1.0, -1.0], [1.0, 1.0]).unwrap();
        Arc::new(build_grid(&d, [n, n]).unwrap())
    }

    /// Direct evaluation of the Godunov flux from its min/max definition.
    fn godunov_brute(p_minus: f64, p_plus: f64, m: f64) -> f64 {
        let h = |p: f64| p.abs().powf(m);
        let samples = 2001;
        let (lo, hi) = (p_minus.min(p_plus), p_minus.max(p_plus));
        let vals = (0..samples).map(|i| {
            let p = lo + (hi - lo) * i as f64 / (samples - 1) as f64;
            h(p)
        });
        if p_minus <= p_plus {
            // min over [p_minus, p_plus]; attained at an endpoint or at 0
            let mut best = h(p_minus).min(h(p_plus));
            if p_minus <= 0.0 && 0.0 <= p_plus {
                best = best.min(0.0);
            }
            best
        } else {
            vals.fold(0.0f64, f64::max)
        }
    }

    #[test]
    fn godunov_matches_definition() {
        assert!((godunov_hamiltonian_1d(2.0, -1.0, 3.0) - 8.0).abs() < 1e-14);
        assert_eq!(godunov_hamiltonian_1d(-1.0, 1.0, 3.0), 0.0);
        for &(pm, pp) in &[(0.5, 2.0), (-2.0, -0.5), (1.0, -3.0), (-0.3, 0.7), (2.0, 0.1)] {
            for &m in &[1.5, 2.0, 3.0, 4.0] {
                let got = godunov_hamiltonian_1d(pm, pp, m);
                let want = godunov_brute(pm, pp, m);
                assert!(
                    (got - want).abs() <= 1e-10 * (1.0 + want),
                    "pm={pm} pp={pp} m={m}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn grad_norm_plane_2d() {
        let g = grid_2d(9);
        let u = Field::from_fn(&g, |x| x[0] + 2.0 * x[1]);
        let node = g.index([4, 4]);
        assert!((grad_norm_monotone(&u, node, 2.0) - 5.0).abs() < 1e-12);
        assert!((grad_norm_monotone(&u, node, 3.0) - 5.0f64.powf(1.5)).abs() < 1e-12);
    }

    #[test]
    fn laplacian_of_quadratic() {
        let g = grid_1d(41);
        let u = Field::from_fn(&g, |x| x[0] * x[0]);
        for node in g.interior_nodes() {
            assert!((discrete_laplacian(&u, node) - 2.0).abs() < 1e-9);
        }
        let g2 = grid_2d(21);
        let u2 = Field::from_fn(&g2, |x| x[0] * x[0] + 3.0 * x[1] * x[1]);
        let node = g2.index([10, 7]);
        assert!((discrete_laplacian(&u2, node) - 8.0).abs() < 1e-8);
    }

    #[test]
    fn residual_shift_slope_is_minus_one() {
        let g = grid_1d(31);
        let u = Field::from_fn(&g, |x| (std::f64::consts::PI * x[0]).sin());
        let f = Field::constant(&g, 0.3);
        let p0 = ProblemSpec::new(3.0, 0.7, f.clone(), f.clone(), u.clone()).unwrap();
        let p1 = p0.clone().with_shift(2.5);
        for node in g.interior_nodes() {
            let r0 = pde_residual(&u, &p0, node);
            let r1 = pde_residual(&u, &p1, node);
            assert!((r1 - (r0 - 2.5)).abs() < 1e-12);
        }
    }

    #[test]
    fn lift_coefficients_frozen() {
        assert!((boundary_lift_coefficient(3.0) - 0.947192).abs() < 5e-4);
        assert!((boundary_lift_coefficient(2.5) - 1.230788).abs() < 5e-4);
        assert!((boundary_lift_coefficient(4.0) - 0.816629).abs() < 5e-4);
    }

    #[test]
    fn cascade_tail_reaches_continuum_amplitude() {
        for &m in &[2.5, 3.0, 4.0] {
            let alpha = layer_exponent(m);
            let bstar = layer_amplitude(m);
            let betas = layer_cascade(boundary_lift_coefficient(m), m, 4000);
            let k = 3000.0f64;
            let expect = bstar * (k.powf(alpha) - (k - 1.0).powf(alpha));
            let got = betas[2999];
            assert!(
                (got - expect).abs() < 0.05 * expect,
                "m={m}: tail {got} vs separatrix {expect}"
            );
        }
    }

    #[test]
    fn relaxed_closure_caps_at_data() {
        let g = grid_1d(21);
        let u = Field::constant(&g, 0.0);
        let f = Field::constant(&g, 0.0);
        let gdata = Field::constant(&g, 5.0);
        let p = ProblemSpec::new(3.0, 0.0, f, gdata, u.clone()).unwrap();
        let cl = BoundaryClosure::new(&g, 3.0, BoundaryKind::RelaxedDirichlet).unwrap();
        // float = 0 + kappa h^alpha << 5, so the relaxed value detaches
        let v = cl.value(&u, &p, 0);
        let lift = boundary_lift_coefficient(3.0) * g.spacing[0].sqrt();
        assert!((v - lift).abs() < 1e-12);
        // with low data the cap binds
        let p2 = ProblemSpec::new(3.0, 0.0, Field::constant(&g, 0.0), Field::constant(&g, -1.0), u.clone())
            .unwrap();
        assert_eq!(cl.value(&u, &p2, 0), -1.0);
    }

    #[test]
    fn subquadratic_relaxed_closure_is_classical() {
        let g = grid_1d(21);
        let u = Field::constant(&g, 0.0);
        let f = Field::constant(&g, 0.0);
        let gdata = Field::constant(&g, 7.0);
        let p = ProblemSpec::new(1.5, 0.0, f, gdata, u.clone()).unwrap();
        let cl = BoundaryClosure::new(&g, 1.5, BoundaryKind::RelaxedDirichlet).unwrap();
        assert_eq!(cl.value(&u, &p, 0), 7.0);
        assert!(BoundaryClosure::new(&g, 1.5, BoundaryKind::StateConstraint).is_err());
    }

    #[test]
    fn corner_closure_uses_diagonal_neighbor() {
        let g = grid_2d(11);
        let mut u = Field::constant(&g, 0.0);
        let diag = g.index([1, 1]);
        u[diag] = 3.0;
        let f = Field::constant(&g, 0.0);
        let p = ProblemSpec::new(3.0, 0.0, f.clone(), f.clone(), u.clone()).unwrap();
        let cl = BoundaryClosure::new(&g, 3.0, BoundaryKind::StateConstraint).unwrap();
        let corner = g.index([0, 0]);
        let lift = boundary_lift_coefficient(3.0) * g.spacing[0].sqrt();
        assert!((cl.value(&u, &p, corner) - (3.0 + lift)).abs() < 1e-12);
    }

    #[test]
    fn problem_validation() {
        let g = grid_1d(5);
        let z = Field::constant(&g, 0.0);
        assert!(ProblemSpec::new(1.0, 0.0, z.clone(), z.clone(), z.clone()).is_err());
        assert!(ProblemSpec::new(3.0, -0.1, z.clone(), z.clone(), z.clone()).is_err());
        assert!(ProblemSpec::new(3.0, 0.0, z.clone(), z.clone(), z.clone()).is_ok());
        let other = Arc::new(
            build_grid(&Domain::interval(0.0, 1.0).unwrap(), [5, 1]).unwrap(),
        );
        let w = Field::constant(&other, 0.0);
        assert!(ProblemSpec::new(3.0, 0.0, z.clone(), z.clone(), w).is_err());
    }

    proptest! {
        #[test]
        fn fast_pow_matches_powf(x in 0.0f64..9.0, mi in 0usize..5) {
            let m = [1.5, 2.0, 2.5, 3.0, 4.0][mi];
            let got = pow_abs_m(x, m);
            let want = x.powf(m);
            prop_assert!((got - want).abs() <= 1e-11 * (1.0 + want));
        }

        #[test]
        fn godunov_equals_rouy_tourin_1d(
            um in -3.0f64..3.0, uc in -3.0f64..3.0, up in -3.0f64..3.0, mi in 0usize..4
        ) {
            let m = [1.5, 2.0, 3.0, 4.0][mi];
            let g = grid_1d(5);
            let h = g.spacing[0];
            let mut u = Field::constant(&g, 0.0);
            u[1] = um; u[2] = uc; u[3] = up;
            let pm = (uc - um) / h;
            let pp = (up - uc) / h;
            let got = grad_norm_monotone(&u, 2, m);
            let want = godunov_hamiltonian_1d(pm, pp, m);
            prop_assert!((got - want).abs() <= 1e-10 * (1.0 + want));
        }

        /// Raising any neighbor never raises the residual: the scheme is
        /// monotone in the off-diagonal entries.
        #[test]
        fn residual_antitone_in_neighbors(
            vals in proptest::collection::vec(-2.0f64..2.0, 9),
            bump in 0.0f64..1.5,
            which in 0usize..4,
            mi in 0usize..4,
        ) {
            let m = [1.5, 2.0, 3.0, 4.0][mi];
            let g = grid_2d(3);
            let mut u = Field { grid: Arc::clone(&g), values: vals };
            let f = Field::constant(&g, 0.0);
            let p = ProblemSpec::new(m, 0.3, f.clone(), f.clone(), u.clone()).unwrap();
            let node = g.index([1, 1]);
            let r0 = pde_residual(&u, &p, node);
            let nb = [
                g.index([0, 1]), g.index([2, 1]),
                g.index([1, 0]), g.index([1, 2]),
            ][which];
            u[nb] += bump;
            let r1 = pde_residual(&u, &p, node);
            prop_assert!(r1 <= r0 + 1e-12);
        }

        /// The explicit update stays monotone in the node's own value under
        /// the advertised step bound.
        #[test]
        fn update_monotone_in_self(
            vals in proptest::collection::vec(-2.0f64..2.0, 9),
            bump in 0.0f64..1.0,
            mi in 0usize..4,
        ) {
            let m = [1.5, 2.0, 3.0, 4.0][mi];
            let g = grid_2d(3);
            let lambda = 0.5;
            let u = Field { grid: Arc::clone(&g), values: vals };
            let f = Field::constant(&g, 0.0);
            let p = ProblemSpec::new(m, lambda, f.clone(), f.clone(), u.clone()).unwrap();
            let node = g.index([1, 1]);
            let h = g.spacing[0];

            let (r_lo, s2_lo) = residual_and_slope(&u, &p, node);
            let mut u_hi = u.clone();
            u_hi[node] += bump;
            let (r_hi, s2_hi) = residual_and_slope(&u_hi, &p, node);

            // one step size valid for both fields:
            // dH/du_self <= m |a|^{m-1} sqrt(sum 1/h_a^2)
            let s2 = s2_lo.max(s2_hi);
            let lh = m * pow_half_m(s2, m - 1.0) * (2.0 / (h * h)).sqrt();
            let dt = 0.5 / (2.0 * 2.0 / (h * h) + lh + lambda);

            let v_lo = u[node] - dt * r_lo;
            let v_hi = u_hi[node] - dt * r_hi;
            prop_assert!(v_hi >= v_lo - 1e-12);
        }
    }
}
