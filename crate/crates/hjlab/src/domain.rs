//! Axis-aligned boxes in one or two dimensions, uniform grids on them, and
//! scalar fields stored flat in row-major order (x fastest).

use crate::error::{Error, Result};
use std::sync::Arc;

/// Closed box `[lo_0, hi_0] x ... x [lo_{d-1}, hi_{d-1}]`, d = 1 or 2.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    pub dim: usize,
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl Domain {
    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidData(format!("bad interval [{lo}, {hi}]")));
        }
        Ok(Domain { dim: 1, lo: [lo, 0.0], hi: [hi, 0.0] })
    }

    pub fn rectangle(lo: [f64; 2], hi: [f64; 2]) -> Result<Self> {
        for a in 0..2 {
            if !(lo[a].is_finite() && hi[a].is_finite() && lo[a] < hi[a]) {
                return Err(Error::InvalidData(format!(
                    "bad rectangle axis {a}: [{}, {}]",
                    lo[a], hi[a]
                )));
            }
        }
        Ok(Domain { dim: 2, lo, hi })
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    /// Length of the shortest axis.
    pub fn min_extent(&self) -> f64 {
        (0..self.dim).map(|a| self.extent(a)).fold(f64::INFINITY, f64::min)
    }

    pub fn center(&self) -> [f64; 2] {
        let mut c = [0.0; 2];
        for a in 0..self.dim {
            c[a] = 0.5 * (self.lo[a] + self.hi[a]);
        }
        c
    }
}

/// Uniform tensor grid. Node `(i, j)` lives at flat index `i + shape[0] * j`;
/// in one dimension `j` is always zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub domain: Domain,
    pub shape: [usize; 2],
    pub spacing: [f64; 2],
}

/// At least three nodes per axis so the interior is nonempty.
pub fn build_grid(domain: &Domain, nodes: [usize; 2]) -> Result<Grid> {
    let mut shape = [1usize; 2];
    let mut spacing = [0.0f64; 2];
    for a in 0..domain.dim {
        if nodes[a] < 3 {
            return Err(Error::NoInteriorNode(a));
        }
        shape[a] = nodes[a];
        spacing[a] = domain.extent(a) / (nodes[a] - 1) as f64;
    }
    Ok(Grid { domain: domain.clone(), shape, spacing })
}

impl Grid {
    pub fn dim(&self) -> usize {
        self.domain.dim
    }

    pub fn len(&self) -> usize {
        self.shape[0] * self.shape[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, ij: [usize; 2]) -> usize {
        ij[0] + self.shape[0] * ij[1]
    }

    pub fn multi_index(&self, node: usize) -> [usize; 2] {
        [node % self.shape[0], node / self.shape[0]]
    }

    pub fn coords(&self, node: usize) -> [f64; 2] {
        let ij = self.multi_index(node);
        let mut x = [0.0; 2];
        for a in 0..self.dim() {
            x[a] = self.domain.lo[a] + ij[a] as f64 * self.spacing[a];
        }
        x
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        let ij = self.multi_index(node);
        (0..self.dim()).any(|a| ij[a] == 0 || ij[a] == self.shape[a] - 1)
    }

    /// Neighbor one node over along `axis` (`side` = -1 or +1), if it exists.
    pub fn neighbor(&self, node: usize, axis: usize, side: i32) -> Option<usize> {
        let ij = self.multi_index(node);
        let i = ij[axis] as i64 + side as i64;
        if i < 0 || i >= self.shape[axis] as i64 {
            return None;
        }
        let mut out = ij;
        out[axis] = i as usize;
        Some(self.index(out))
    }

    /// Node nearest the domain center (ties broken toward lower indices).
    pub fn center_node(&self) -> usize {
        let c = self.domain.center();
        let mut ij = [0usize; 2];
        for a in 0..self.dim() {
            let t = (c[a] - self.domain.lo[a]) / self.spacing[a];
            ij[a] = (t.round() as usize).min(self.shape[a] - 1);
        }
        self.index(ij)
    }

    /// Distance to the boundary along grid lines: exactly `k * h` for a node
    /// `k` layers in (minimum over axes), and exactly zero on the boundary.
    pub fn boundary_distance(&self, node: usize) -> f64 {
        let ij = self.multi_index(node);
        (0..self.dim())
            .map(|a| ij[a].min(self.shape[a] - 1 - ij[a]) as f64 * self.spacing[a])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn interior_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&n| !self.is_boundary(n))
    }

    pub fn boundary_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&n| self.is_boundary(n))
    }
}

/// Field of per-node distances to the boundary.
pub fn distance_field(grid: &Arc<Grid>) -> Field {
    Field::from_fn_nodes(grid, |n, _| grid.boundary_distance(n))
}

/// Interior nodes within distance `delta` of the boundary (a collar).
/// `delta` must lie in `(0, min_extent / 2)`.
pub fn interior_band(grid: &Grid, delta: f64) -> Result<Vec<usize>> {
    let max = grid.domain.min_extent() / 2.0;
    if !(delta > 0.0 && delta < max) {
        return Err(Error::InvalidDelta { delta, max });
    }
    let band: Vec<usize> = grid
        .interior_nodes()
        .filter(|&n| grid.boundary_distance(n) <= delta)
        .collect();
    if band.is_empty() {
        return Err(Error::EmptyBand(delta));
    }
    Ok(band)
}

/// Scalar field on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub grid: Arc<Grid>,
    pub values: Vec<f64>,
}

impl Field {
    pub fn constant(grid: &Arc<Grid>, value: f64) -> Self {
        Field { grid: Arc::clone(grid), values: vec![value; grid.len()] }
    }

    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn([f64; 2]) -> f64) -> Self {
        Self::from_fn_nodes(grid, |_, x| f(x))
    }

    pub fn from_fn_nodes(grid: &Arc<Grid>, f: impl Fn(usize, [f64; 2]) -> f64) -> Self {
        let values = (0..grid.len()).map(|n| f(n, grid.coords(n))).collect();
        Field { grid: Arc::clone(grid), values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, &v| m.min(v))
    }

    /// Pointwise `self + s`.
    pub fn shifted(&self, s: f64) -> Field {
        Field {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().map(|v| v + s).collect(),
        }
    }

    /// Largest absolute difference against another field on the same grid.
    pub fn linf_distance(&self, other: &Field) -> f64 {
        debug_assert_eq!(self.len(), other.len());
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Multilinear interpolation at a point, clamped to the closed domain.
    pub fn value_at(&self, x: [f64; 2]) -> f64 {
        let grid = &self.grid;
        let mut idx = [0usize; 2];
        let mut frac = [0.0f64; 2];
        for a in 0..grid.dim() {
            let rel = ((x[a] - grid.domain.lo[a]) / grid.spacing[a])
                .clamp(0.0, (grid.shape[a] - 1) as f64);
            let i = (rel.floor() as usize).min(grid.shape[a] - 2);
            idx[a] = i;
            frac[a] = rel - i as f64;
        }
        if grid.dim() == 1 {
            let u0 = self[grid.index([idx[0], 0])];
            let u1 = self[grid.index([idx[0] + 1, 0])];
            return u0 + frac[0] * (u1 - u0);
        }
        let u00 = self[grid.index([idx[0], idx[1]])];
        let u10 = self[grid.index([idx[0] + 1, idx[1]])];
        let u01 = self[grid.index([idx[0], idx[1] + 1])];
        let u11 = self[grid.index([idx[0] + 1, idx[1] + 1])];
        let lo = u00 + frac[0] * (u10 - u00);
        let hi = u01 + frac[0] * (u11 - u01);
        lo + frac[1] * (hi - lo)
    }

    /// The same field sampled onto another grid over the same domain.
    pub fn resample(&self, target: &Arc<Grid>) -> Field {
        Field::from_fn(target, |x| self.value_at(x))
    }
}

impl std::ops::Index<usize> for Field {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

impl std::ops::IndexMut<usize> for Field {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.values[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_interval_grid(n: usize) -> Arc<Grid> {
        Arc::new(build_grid(&Domain::interval(-1.0, 1.0).unwrap(), [n, 1]).unwrap())
    }

    #[test]
    fn grid_indexing_round_trip() {
        let d = Domain::rectangle([-1.0, 0.0], [1.0, 3.0]).unwrap();
        let g = build_grid(&d, [11, 7]).unwrap();
        for node in 0..g.len() {
            assert_eq!(g.index(g.multi_index(node)), node);
        }
        assert_eq!(g.len(), 77);
        assert_eq!(g.spacing[0], 0.2);
        assert_eq!(g.spacing[1], 0.5);
    }

    #[test]
    fn boundary_and_interior_partition() {
        let d = Domain::rectangle([0.0, 0.0], [1.0, 1.0]).unwrap();
        let g = build_grid(&d, [5, 4]).unwrap();
        let nb = g.boundary_nodes().count();
        let ni = g.interior_nodes().count();
        assert_eq!(nb + ni, g.len());
        assert_eq!(nb, 2 * 5 + 2 * 4 - 4);
    }

    #[test]
    fn distance_is_exact_layer_multiple() {
        let g = unit_interval_grid(9);
        let h = g.spacing[0];
        let d = distance_field(&g);
        assert_eq!(d[0], 0.0);
        assert_eq!(d[8], 0.0);
        assert_eq!(d[1], h);
        assert_eq!(d[3], 3.0 * h);
        assert_eq!(d[4], 4.0 * h);
        assert_eq!(d[5], 3.0 * h);
    }

    #[test]
    fn distance_2d_is_min_over_axes() {
        let d = Domain::rectangle([0.0, 0.0], [2.0, 1.0]).unwrap();
        let g = Arc::new(build_grid(&d, [21, 11]).unwrap());
        let node = g.index([3, 5]);
        let expected = (3.0 * g.spacing[0]).min(5.0 * g.spacing[1]);
        assert!((g.boundary_distance(node) - expected).abs() < 1e-15);
    }

    #[test]
    fn center_node_is_nearest_center() {
        let g = unit_interval_grid(9);
        assert_eq!(g.center_node(), 4);
        assert_eq!(g.coords(4)[0], 0.0);
        let d = Domain::rectangle([0.0, 0.0], [1.0, 1.0]).unwrap();
        let g2 = build_grid(&d, [5, 5]).unwrap();
        assert_eq!(g2.center_node(), g2.index([2, 2]));
    }

    #[test]
    fn band_rejects_bad_width_and_finds_collar() {
        let g = unit_interval_grid(21);
        assert!(interior_band(&g, 0.0).is_err());
        assert!(interior_band(&g, 1.0).is_err());
        assert!(interior_band(&g, 0.01).is_err()); // narrower than one layer
        let band = interior_band(&g, 0.25).unwrap();
        let h = g.spacing[0];
        for &n in &band {
            let d = g.boundary_distance(n);
            assert!(d > 0.0 && d <= 0.25 + 1e-15);
        }
        assert_eq!(band.len(), 2 * (0.25 / h).floor() as usize);
    }

    #[test]
    fn neighbor_edges() {
        let g = unit_interval_grid(5);
        assert_eq!(g.neighbor(0, 0, -1), None);
        assert_eq!(g.neighbor(0, 0, 1), Some(1));
        assert_eq!(g.neighbor(4, 0, 1), None);
        assert_eq!(g.neighbor(2, 0, -1), Some(1));
    }

    proptest! {
        #[test]
        fn coords_match_affine_map(n in 3usize..200, i in 0usize..200) {
            let i = i.min(n - 1);
            let g = unit_interval_grid(n);
            let x = g.coords(i)[0];
            let expect = -1.0 + i as f64 * g.spacing[0];
            prop_assert_eq!(x, expect);
        }

        #[test]
        fn distance_symmetry(n in 3usize..120, k in 0usize..120) {
            let k = k.min(n - 1);
            let g = unit_interval_grid(n);
            let d = distance_field(&g);
            prop_assert_eq!(d[k], d[n - 1 - k]);
        }
    }
}
