//! TOML experiment configs: a domain block, three named data profiles, and
//! one optional section per experiment kind, validated into ready-to-run
//! problems with field-level error messages.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use crate::domain::{build_grid, Domain, Field, Grid};
use crate::error::{Error, Result};
use crate::scheme::{BoundaryKind, ProblemSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Evolve,
    Stationary,
    Ergodic,
    Trichotomy,
    Threshold1d,
    Montecarlo,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Evolve => "evolve",
            ExperimentKind::Stationary => "stationary",
            ExperimentKind::Ergodic => "ergodic",
            ExperimentKind::Trichotomy => "trichotomy",
            ExperimentKind::Threshold1d => "threshold1d",
            ExperimentKind::Montecarlo => "montecarlo",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub nodes: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryConfig {
    /// Dirichlet data enforced in the relaxed sense (the trace may detach
    /// below the data when gradients are superquadratic).
    Relaxed,
    /// State constraint: no data, the solution is pushed up at the walls.
    Constrained,
}

impl BoundaryConfig {
    pub fn kind(self) -> BoundaryKind {
        match self {
            BoundaryConfig::Relaxed => BoundaryKind::RelaxedDirichlet,
            BoundaryConfig::Constrained => BoundaryKind::StateConstraint,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    /// Gradient power; must exceed 1.
    pub m: f64,
    /// Discount rate; zero means undiscounted.
    #[serde(default)]
    pub lambda: f64,
    pub boundary: BoundaryConfig,
}

/// Named data profiles. Coordinates are rescaled per axis to `s in [-1, 1]`
/// so the same shape works on any box.
#[derive(Debug, Clone, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileConfig {
    #[default]
    Zero,
    Constant {
        value: f64,
    },
    /// `offset + amplitude * prod_a cos(frequency pi s_a)`
    Cosine {
        amplitude: f64,
        #[serde(default = "one")]
        frequency: f64,
        #[serde(default)]
        offset: f64,
    },
    /// `offset - depth * exp(-|x - center|^2 / (2 width^2))`, center in
    /// original coordinates (defaults to the domain center)
    GaussianWell {
        depth: f64,
        width: f64,
        #[serde(default)]
        center: Option<Vec<f64>>,
        #[serde(default)]
        offset: f64,
    },
    /// `base - dip * prod_a cos(pi s_a / 2)`: equals `base` on the boundary,
    /// dips to `base - dip` at the center
    Dipped {
        base: f64,
        dip: f64,
    },
    /// Explicit node values in row-major order; must match the (scaled) grid.
    Tabulated {
        values: Vec<f64>,
    },
}

fn one() -> f64 {
    1.0
}

impl ProfileConfig {
    pub fn realize(&self, grid: &Arc<Grid>, name: &str) -> Result<Field> {
        let domain = grid.domain.clone();
        let dim = domain.dim;
        let scaled = move |x: [f64; 2], a: usize| -> f64 {
            2.0 * (x[a] - domain.lo[a]) / domain.extent(a) - 1.0
        };
        match self {
            ProfileConfig::Zero => Ok(Field::constant(grid, 0.0)),
            ProfileConfig::Constant { value } => Ok(Field::constant(grid, *value)),
            ProfileConfig::Cosine { amplitude, frequency, offset } => {
                let (amp, freq, off) = (*amplitude, *frequency, *offset);
                Ok(Field::from_fn(grid, move |x| {
                    off + amp * (0..dim).map(|a| (freq * PI * scaled(x, a)).cos()).product::<f64>()
                }))
            }
            ProfileConfig::GaussianWell { depth, width, center, offset } => {
                if !(*width > 0.0) {
                    return Err(Error::Config(format!(
                        "{name}.width: must be positive, got {width}"
                    )));
                }
                let mut c = grid.domain.center();
                if let Some(given) = center {
                    if given.len() != dim {
                        return Err(Error::Config(format!(
                            "{name}.center: expected {dim} coordinates, got {}",
                            given.len()
                        )));
                    }
                    c[..dim].copy_from_slice(given);
                }
                let (depth, width, off) = (*depth, *width, *offset);
                Ok(Field::from_fn(grid, move |x| {
                    let r2: f64 = (0..dim).map(|a| (x[a] - c[a]) * (x[a] - c[a])).sum();
                    off - depth * (-r2 / (2.0 * width * width)).exp()
                }))
            }
            ProfileConfig::Dipped { base, dip } => {
                let (base, dip) = (*base, *dip);
                Ok(Field::from_fn(grid, move |x| {
                    base - dip * (0..dim).map(|a| (0.5 * PI * scaled(x, a)).cos()).product::<f64>()
                }))
            }
            ProfileConfig::Tabulated { values } => {
                if values.len() != grid.len() {
                    return Err(Error::Config(format!(
                        "{name}.values: expected {} entries for this grid, got {}",
                        grid.len(),
                        values.len()
                    )));
                }
                Ok(Field::from_fn_nodes(grid, |node, _| values[node]))
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveConfig {
    pub t_end: f64,
    #[serde(default)]
    pub sample_every: Option<f64>,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        EvolveConfig { t_end: 1.0, sample_every: None }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationaryConfig {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
}

fn default_tol() -> f64 {
    1e-6
}

fn default_t_max() -> f64 {
    200.0
}

impl Default for StationaryConfig {
    fn default() -> Self {
        StationaryConfig { tol: default_tol(), t_max: default_t_max() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErgodicConfig {
    /// Discount ladder runs over `2^-first_pow .. 2^-last_pow`.
    #[serde(default = "default_first_pow")]
    pub first_pow: u32,
    #[serde(default = "default_last_pow")]
    pub last_pow: u32,
    #[serde(default = "default_cauchy_tol")]
    pub cauchy_tol: f64,
    /// Horizon of the constrained evolution used for the slope cross-check.
    #[serde(default = "default_slope_horizon")]
    pub slope_horizon: f64,
    /// The two level estimates must agree within `max(tol, tol |c|)`.
    #[serde(default = "default_agree_tol")]
    pub agree_tol: f64,
}

fn default_first_pow() -> u32 {
    2
}

fn default_last_pow() -> u32 {
    10
}

fn default_cauchy_tol() -> f64 {
    1e-2
}

fn default_slope_horizon() -> f64 {
    12.0
}

fn default_agree_tol() -> f64 {
    0.05
}

impl Default for ErgodicConfig {
    fn default() -> Self {
        ErgodicConfig {
            first_pow: default_first_pow(),
            last_pow: default_last_pow(),
            cauchy_tol: default_cauchy_tol(),
            slope_horizon: default_slope_horizon(),
            agree_tol: default_agree_tol(),
        }
    }
}

impl ErgodicConfig {
    pub fn schedule(&self) -> Vec<f64> {
        (self.first_pow..=self.last_pow).map(|j| 0.5f64.powi(j as i32)).collect()
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrichotomyConfig {
    /// Critical levels to steer the source to (via constant shifts); one
    /// regime report per entry.
    #[serde(default = "default_levels")]
    pub target_levels: Vec<f64>,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_sample_every")]
    pub sample_every: f64,
    /// Levels within this of zero classify as the neutral regime.
    #[serde(default = "default_agree_tol")]
    pub c_tol: f64,
}

fn default_levels() -> Vec<f64> {
    vec![1.0, 0.0, -1.0]
}

fn default_horizon() -> f64 {
    20.0
}

fn default_sample_every() -> f64 {
    0.1
}

impl Default for TrichotomyConfig {
    fn default() -> Self {
        TrichotomyConfig {
            target_levels: default_levels(),
            horizon: default_horizon(),
            sample_every: default_sample_every(),
            c_tol: default_agree_tol(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdConfig {
    /// Sweep points as multiples of the necessary-bound constant `C*`.
    #[serde(default = "default_ratios")]
    pub ratios: Vec<f64>,
    #[serde(default = "default_threshold_t_max")]
    pub t_max: f64,
}

fn default_ratios() -> Vec<f64> {
    vec![0.3, 0.45, 0.55, 0.65, 0.8, 1.0, 1.2, 1.5]
}

fn default_threshold_t_max() -> f64 {
    40.0
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        ThresholdConfig { ratios: default_ratios(), t_max: default_threshold_t_max() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MontecarloConfig {
    #[serde(default = "default_mc_t_end")]
    pub t_end: f64,
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default = "default_mc_dt")]
    pub dt: f64,
    /// Interior sample points; defaults to the domain center.
    #[serde(default)]
    pub probes: Vec<Vec<f64>>,
    /// Systematic-bias allowance on top of three standard errors when
    /// comparing against the grid solution.
    #[serde(default = "default_bias_tol")]
    pub bias_tol: f64,
}

fn default_mc_t_end() -> f64 {
    1.0
}

fn default_paths() -> usize {
    10_000
}

fn default_mc_dt() -> f64 {
    1e-3
}

fn default_bias_tol() -> f64 {
    0.05
}

impl Default for MontecarloConfig {
    fn default() -> Self {
        MontecarloConfig {
            t_end: default_mc_t_end(),
            paths: default_paths(),
            dt: default_mc_dt(),
            probes: Vec::new(),
            bias_tol: default_bias_tol(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub domain: DomainConfig,
    pub problem: ProblemConfig,
    #[serde(default)]
    pub f: ProfileConfig,
    #[serde(default)]
    pub g: ProfileConfig,
    #[serde(default)]
    pub u0: ProfileConfig,
    #[serde(default)]
    pub evolve: Option<EvolveConfig>,
    #[serde(default)]
    pub stationary: Option<StationaryConfig>,
    #[serde(default)]
    pub ergodic: Option<ErgodicConfig>,
    #[serde(default)]
    pub trichotomy: Option<TrichotomyConfig>,
    #[serde(default)]
    pub threshold: Option<ThresholdConfig>,
    #[serde(default)]
    pub montecarlo: Option<MontecarloConfig>,
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    let cfg: ExperimentConfig = toml::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))?;
    cfg.validate()?;
    Ok(cfg)
}

impl ExperimentConfig {
    /// Semantic checks beyond what deserialization enforces; every message
    /// names the offending field.
    pub fn validate(&self) -> Result<()> {
        let d = &self.domain;
        if d.lo.is_empty() || d.lo.len() > 2 {
            return Err(Error::Config(format!(
                "domain.lo: expected 1 or 2 coordinates, got {}",
                d.lo.len()
            )));
        }
        if d.hi.len() != d.lo.len() {
            return Err(Error::Config(format!(
                "domain.hi: expected {} coordinates to match domain.lo, got {}",
                d.lo.len(),
                d.hi.len()
            )));
        }
        if d.nodes.len() != d.lo.len() {
            return Err(Error::Config(format!(
                "domain.nodes: expected {} entries to match domain.lo, got {}",
                d.lo.len(),
                d.nodes.len()
            )));
        }
        for a in 0..d.lo.len() {
            if !(d.lo[a] < d.hi[a]) || !d.lo[a].is_finite() || !d.hi[a].is_finite() {
                return Err(Error::Config(format!(
                    "domain.lo/hi: axis {a} needs lo < hi, got [{}, {}]",
                    d.lo[a], d.hi[a]
                )));
            }
            if d.nodes[a] < 3 {
                return Err(Error::Config(format!(
                    "domain.nodes: axis {a} needs at least 3 nodes, got {}",
                    d.nodes[a]
                )));
            }
        }
        if !(self.problem.m > 1.0) {
            return Err(Error::Config(format!(
                "problem.m: gradient power must exceed 1, got {}",
                self.problem.m
            )));
        }
        if !(self.problem.lambda >= 0.0) {
            return Err(Error::Config(format!(
                "problem.lambda: discount must be nonnegative, got {}",
                self.problem.lambda
            )));
        }
        if self.problem.boundary == BoundaryConfig::Constrained && self.problem.m <= 2.0 {
            return Err(Error::Config(format!(
                "problem.boundary: constrained runs need m > 2 (the constrained \
                 solution is unbounded at the walls otherwise), got m = {}",
                self.problem.m
            )));
        }
        match self.kind {
            ExperimentKind::Trichotomy => {
                if self.problem.lambda != 0.0 {
                    return Err(Error::Config(
                        "problem.lambda: trichotomy runs are undiscounted; set lambda = 0"
                            .into(),
                    ));
                }
                if self.problem.boundary != BoundaryConfig::Relaxed {
                    return Err(Error::Config(
                        "problem.boundary: trichotomy classifies relaxed runs; \
                         set boundary = \"relaxed\""
                            .into(),
                    ));
                }
                let t = self.trichotomy.clone().unwrap_or_default();
                if t.target_levels.is_empty() {
                    return Err(Error::Config(
                        "trichotomy.target_levels: need at least one level".into(),
                    ));
                }
                if !(t.horizon > 0.0) || !(t.sample_every > 0.0) {
                    return Err(Error::Config(
                        "trichotomy.horizon/sample_every: must be positive".into(),
                    ));
                }
            }
            ExperimentKind::Threshold1d => {
                if d.lo.len() != 1 {
                    return Err(Error::Config(
                        "domain: threshold sweeps are one-dimensional".into(),
                    ));
                }
                if self.problem.lambda != 0.0 {
                    return Err(Error::Config(
                        "problem.lambda: threshold sweeps are undiscounted; set lambda = 0"
                            .into(),
                    ));
                }
                let t = self.threshold.clone().unwrap_or_default();
                if t.ratios.is_empty() {
                    return Err(Error::Config("threshold.ratios: need at least one point".into()));
                }
                if t.ratios.iter().any(|&r| !(r > 0.0)) {
                    return Err(Error::Config("threshold.ratios: must be positive".into()));
                }
            }
            ExperimentKind::Montecarlo => {
                let mc = self.montecarlo.clone().unwrap_or_default();
                if !(mc.t_end > 0.0) || !(mc.dt > 0.0) || mc.paths == 0 {
                    return Err(Error::Config(
                        "montecarlo.t_end/dt/paths: must be positive".into(),
                    ));
                }
                for (i, probe) in mc.probes.iter().enumerate() {
                    if probe.len() != d.lo.len() {
                        return Err(Error::Config(format!(
                            "montecarlo.probes[{i}]: expected {} coordinates, got {}",
                            d.lo.len(),
                            probe.len()
                        )));
                    }
                    for a in 0..probe.len() {
                        if !(d.lo[a] < probe[a] && probe[a] < d.hi[a]) {
                            return Err(Error::Config(format!(
                                "montecarlo.probes[{i}]: coordinate {a} = {} is not \
                                 strictly inside [{}, {}]",
                                probe[a], d.lo[a], d.hi[a]
                            )));
                        }
                    }
                }
            }
            ExperimentKind::Evolve => {
                let e = self.evolve.clone().unwrap_or_default();
                if !(e.t_end > 0.0) {
                    return Err(Error::Config(format!(
                        "evolve.t_end: must be positive, got {}",
                        e.t_end
                    )));
                }
            }
            ExperimentKind::Stationary | ExperimentKind::Ergodic => {}
        }
        Ok(())
    }

    /// Node counts scaled per axis by `grid_scale` (endpoints preserved).
    pub fn build_grid(&self, grid_scale: f64) -> Result<Arc<Grid>> {
        if !(grid_scale > 0.0) || !grid_scale.is_finite() {
            return Err(Error::Config(format!(
                "--grid-scale: must be a positive number, got {grid_scale}"
            )));
        }
        let d = &self.domain;
        let domain = match d.lo.len() {
            1 => Domain::interval(d.lo[0], d.hi[0])?,
            _ => Domain::rectangle([d.lo[0], d.lo[1]], [d.hi[0], d.hi[1]])?,
        };
        let mut nodes = [1usize; 2];
        for a in 0..d.lo.len() {
            let scaled = ((d.nodes[a] - 1) as f64 * grid_scale).round() as usize + 1;
            if scaled < 3 {
                return Err(Error::Config(format!(
                    "--grid-scale: axis {a} drops below 3 nodes at scale {grid_scale}"
                )));
            }
            nodes[a] = scaled;
        }
        Ok(Arc::new(build_grid(&domain, nodes)?))
    }

    /// Realize the three data profiles on `grid` and assemble the problem.
    /// Initial/boundary data compatibility is enforced for relaxed
    /// time-dependent experiments before any compute happens.
    pub fn build_problem(&self, grid: &Arc<Grid>) -> Result<(ProblemSpec, BoundaryKind)> {
        let f = self.f.realize(grid, "f")?;
        let g = self.g.realize(grid, "g")?;
        let u0 = self.u0.realize(grid, "u0")?;
        let problem = ProblemSpec::new(self.problem.m, self.problem.lambda, f, g, u0)?;
        let kind = self.problem.boundary.kind();
        let time_dependent = matches!(
            self.kind,
            ExperimentKind::Evolve | ExperimentKind::Trichotomy | ExperimentKind::Montecarlo
        );
        if time_dependent && kind == BoundaryKind::RelaxedDirichlet {
            let scale = 1.0 + problem.g.max_abs().max(problem.u0.max_abs());
            problem.check_boundary_compatibility(1e-9 * scale).map_err(|e| {
                Error::Config(format!("u0/g: initial and boundary data are incompatible ({e})"))
            })?;
        }
        Ok((problem, kind))
    }
}
