//! Uniform cell-centered grids on boxes in one or two dimensions.

use serde::{Deserialize, Serialize};

use crate::quadrature::{dist_to_box, power_tail_outside};
use crate::{Error, Field, Result};

/// A point of `ℝ^d`, `d ≤ 2`; in one dimension the second coordinate is zero.
pub type Point = [f64; 2];

/// Spatial discretization of `Ω` plus the exterior annulus used for
/// zero-extension (Dirichlet) interactions.
///
/// Nodes are cell centers of a uniform tensor grid and carry the cell volume
/// as quadrature weight. Grids are immutable after construction.
#[derive(Clone, Debug)]
pub struct Grid {
    dim: usize,
    bounds: Vec<[f64; 2]>,
    components: Vec<Vec<[f64; 2]>>,
    n_per_axis: usize,
    spacing: Vec<f64>,
    nodes: Vec<Point>,
    weights: Vec<f64>,
    ext_radius: f64,
    ext_nodes: Vec<Point>,
    ext_weights: Vec<f64>,
}

/// Serializable summary of a grid, written as the header of snapshot files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub dim: usize,
    #[serde(rename = "box")]
    pub bounds: Vec<[f64; 2]>,
    pub n_per_axis: usize,
    pub ext_radius: f64,
}

impl Grid {
    /// Builds the uniform cell-center grid of `bounds` with `n_per_axis` cells per axis.
    ///
    /// The exterior annulus `{y ∉ Ω̄ : dist(y, Ω) ≤ ext_radius}` is covered by
    /// cells `ext_refine` times finer than the interior ones; cells whose center
    /// lies farther than `ext_radius` from the box are dropped.
    pub fn build(
        dim: usize,
        bounds: &[[f64; 2]],
        n_per_axis: usize,
        ext_radius: f64,
        ext_refine: usize,
    ) -> Result<Self> {
        let mut errors = Vec::new();
        if !(1..=2).contains(&dim) {
            errors.push(format!("grid.dim: must be 1 or 2, got {dim}"));
        }
        if bounds.len() != dim {
            errors.push(format!(
                "grid.box: expected {dim} intervals, got {}",
                bounds.len()
            ));
        }
        for (k, &[lo, hi]) in bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                errors.push(format!("grid.box[{k}]: degenerate interval [{lo}, {hi}]"));
            }
        }
        if n_per_axis < 2 {
            errors.push(format!("grid.n_per_axis: must be >= 2, got {n_per_axis}"));
        }
        if !(ext_radius >= 0.0 && ext_radius.is_finite()) {
            errors.push(format!("grid.ext_radius: must be finite and >= 0, got {ext_radius}"));
        }
        if ext_refine == 0 {
            errors.push("grid.ext_refine: must be >= 1".to_string());
        }
        if !errors.is_empty() {
            return Err(Error::Config(errors));
        }

        let spacing: Vec<f64> = bounds
            .iter()
            .map(|[lo, hi]| (hi - lo) / n_per_axis as f64)
            .collect();
        let axes: Vec<Vec<f64>> = bounds
            .iter()
            .zip(&spacing)
            .map(|(&[lo, _], &h)| (0..n_per_axis).map(|i| lo + (i as f64 + 0.5) * h).collect())
            .collect();
        let cell: f64 = spacing.iter().product();
        let nodes = tensor_points(&axes);
        let weights = vec![cell; nodes.len()];

        let (ext_nodes, ext_weights) = if ext_radius > 0.0 {
            exterior_cells(bounds, &spacing, ext_radius, ext_refine)
        } else {
            (Vec::new(), Vec::new())
        };

        Ok(Self {
            dim,
            bounds: bounds.to_vec(),
            components: vec![bounds.to_vec()],
            n_per_axis,
            spacing,
            nodes,
            weights,
            ext_radius,
            ext_nodes,
            ext_weights,
        })
    }

    /// Disjoint union of one-dimensional intervals sharing the same cell size.
    ///
    /// Used for domains that are not connected; such grids have no exterior
    /// annulus and only support regional kernels.
    pub fn union_1d(intervals: &[[f64; 2]], cells_per_unit: usize) -> Result<Self> {
        if intervals.is_empty() || cells_per_unit == 0 {
            return Err(Error::config("grid.components: need at least one interval"));
        }
        let h = 1.0 / cells_per_unit as f64;
        let mut nodes = Vec::new();
        let mut sorted = intervals.to_vec();
        sorted.sort_by(|a, b| a[0].total_cmp(&b[0]));
        for w in sorted.windows(2) {
            if w[1][0] <= w[0][1] {
                return Err(Error::config("grid.components: intervals must be disjoint"));
            }
        }
        for &[lo, hi] in &sorted {
            let cells = ((hi - lo) / h).round() as usize;
            if cells < 2 || ((hi - lo) / h - cells as f64).abs() > 1e-9 {
                return Err(Error::config(format!(
                    "grid.components: interval [{lo}, {hi}] is not a multiple (>= 2) of the cell size {h}"
                )));
            }
            nodes.extend((0..cells).map(|i| [lo + (i as f64 + 0.5) * h, 0.0]));
        }
        let bounds = vec![[sorted[0][0], sorted[sorted.len() - 1][1]]];
        Ok(Self {
            dim: 1,
            bounds,
            components: sorted.iter().map(|&c| vec![c]).collect(),
            n_per_axis: nodes.len(),
            spacing: vec![h],
            weights: vec![h; nodes.len()],
            nodes,
            ext_radius: 0.0,
            ext_nodes: Vec::new(),
            ext_weights: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Bounding box of `Ω` (the box itself for ordinary grids).
    pub fn bounds(&self) -> &[[f64; 2]] {
        &self.bounds
    }

    pub fn components(&self) -> &[Vec<[f64; 2]>] {
        &self.components
    }

    pub fn is_box(&self) -> bool {
        self.components.len() == 1
    }

    pub fn n_per_axis(&self) -> usize {
        self.n_per_axis
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_vector(&self) -> Field {
        Field::from_column_slice(&self.weights)
    }

    pub fn ext_radius(&self) -> f64 {
        self.ext_radius
    }

    pub fn ext_nodes(&self) -> &[Point] {
        &self.ext_nodes
    }

    pub fn ext_weights(&self) -> &[f64] {
        &self.ext_weights
    }

    /// `|Ω|`, the sum of the quadrature weights.
    pub fn volume(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn diameter(&self) -> f64 {
        self.bounds
            .iter()
            .map(|[lo, hi]| (hi - lo) * (hi - lo))
            .sum::<f64>()
            .sqrt()
    }

    /// Coordinates of node `i` as a slice of length `dim`.
    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i][..self.dim]
    }

    pub fn ext_node(&self, e: usize) -> &[f64] {
        &self.ext_nodes[e][..self.dim]
    }

    /// Euclidean distance between nodes `i` and `j`.
    pub fn pairwise_distance(&self, i: usize, j: usize) -> f64 {
        distance(self.node(i), self.node(j))
    }

    /// Distance from `p` to the boundary of the box (for points inside).
    pub fn dist_to_boundary(&self, p: &[f64]) -> f64 {
        p.iter()
            .zip(&self.bounds)
            .map(|(&x, &[lo, hi])| (x - lo).min(hi - x))
            .fold(f64::INFINITY, f64::min)
    }

    /// `∫_{dist(y,Ω) > ext_radius} |x − y|^{−d−α} dy`, the analytic remainder
    /// of an exterior power-law integral beyond the quadratured annulus.
    pub fn power_tail(&self, x: &[f64], alpha: f64) -> f64 {
        power_tail_outside(x, &self.bounds, self.ext_radius, alpha)
    }

    /// Weighted mean `𝔪(u) = |Ω|⁻¹ ∫_Ω u`.
    pub fn mass(&self, u: &Field) -> f64 {
        u.iter().zip(&self.weights).map(|(u, w)| u * w).sum::<f64>() / self.volume()
    }

    /// Weighted `L²(Ω)` norm.
    pub fn l2_norm(&self, u: &Field) -> f64 {
        u.iter()
            .zip(&self.weights)
            .map(|(u, w)| u * u * w)
            .sum::<f64>()
            .sqrt()
    }

    /// Samples `f` at the nodes.
    pub fn sample(&self, f: impl Fn(&[f64]) -> f64) -> Field {
        Field::from_iterator(self.len(), (0..self.len()).map(|i| f(self.node(i))))
    }

    /// Index of the tensor-grid node `(i, j)` (only meaningful for box grids).
    pub fn tensor_index(&self, idx: &[usize]) -> usize {
        match self.dim {
            1 => idx[0],
            _ => idx[0] + idx[1] * self.n_per_axis,
        }
    }

    pub fn meta(&self) -> GridMeta {
        GridMeta {
            dim: self.dim,
            bounds: self.bounds.clone(),
            n_per_axis: self.n_per_axis,
            ext_radius: self.ext_radius,
        }
    }

    /// Same box (or interval union) and exterior settings with `factor` times
    /// as many cells per axis.
    pub fn refined(&self, factor: usize, ext_refine: usize) -> Result<Self> {
        if !self.is_box() {
            let intervals: Vec<[f64; 2]> = self.components.iter().map(|c| c[0]).collect();
            let cells_per_unit = (1.0 / self.spacing[0]).round() as usize;
            return Grid::union_1d(&intervals, cells_per_unit * factor);
        }
        Grid::build(
            self.dim,
            &self.bounds,
            self.n_per_axis * factor,
            self.ext_radius,
            ext_refine,
        )
    }
}

pub(crate) fn distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

fn tensor_points(axes: &[Vec<f64>]) -> Vec<Point> {
    match axes.len() {
        1 => axes[0].iter().map(|&x| [x, 0.0]).collect(),
        _ => {
            let mut pts = Vec::with_capacity(axes[0].len() * axes[1].len());
            for &y in &axes[1] {
                for &x in &axes[0] {
                    pts.push([x, y]);
                }
            }
            pts
        }
    }
}

/// Cells of the exterior annulus. Along each axis the extension on either
/// side is split into `ceil(R / (h / refine))` equal cells; interior rows use
/// `refine` sub-cells per grid cell.
fn exterior_cells(
    bounds: &[[f64; 2]],
    spacing: &[f64],
    radius: f64,
    refine: usize,
) -> (Vec<Point>, Vec<f64>) {
    // (center, width, is_interior) per axis
    let axis_cells: Vec<Vec<(f64, f64, bool)>> = bounds
        .iter()
        .zip(spacing)
        .map(|(&[lo, hi], &h)| {
            let fine = h / refine as f64;
            let m = (radius / fine).ceil().max(1.0) as usize;
            let he = radius / m as f64;
            let inner = ((hi - lo) / fine).round() as usize;
            let mut cells = Vec::with_capacity(2 * m + inner);
            for k in (0..m).rev() {
                cells.push((lo - (k as f64 + 0.5) * he, he, false));
            }
            for k in 0..inner {
                cells.push((lo + (k as f64 + 0.5) * fine, fine, true));
            }
            for k in 0..m {
                cells.push((hi + (k as f64 + 0.5) * he, he, false));
            }
            cells
        })
        .collect();

    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    match bounds.len() {
        1 => {
            for &(x, w, inside) in &axis_cells[0] {
                if !inside {
                    nodes.push([x, 0.0]);
                    weights.push(w);
                }
            }
        }
        _ => {
            for &(y, wy, iny) in &axis_cells[1] {
                for &(x, wx, inx) in &axis_cells[0] {
                    if inx && iny {
                        continue;
                    }
                    let p = [x, y];
                    if dist_to_box(&p, bounds) <= radius {
                        nodes.push(p);
                        weights.push(wx * wy);
                    }
                }
            }
        }
    }
    (nodes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_cell_centers() {
        let g = Grid::build(1, &[[0.0, 1.0]], 4, 0.0, 1).unwrap();
        let xs: Vec<f64> = g.nodes().iter().map(|p| p[0]).collect();
        assert_eq!(xs, vec![0.125, 0.375, 0.625, 0.875]);
        assert!(g.weights().iter().all(|&w| w == 0.25));
        assert_eq!(g.volume(), 1.0);
    }

    #[test]
    fn two_dimensional_tensor_grid() {
        let g = Grid::build(2, &[[0.0, 1.0], [0.0, 1.0]], 3, 0.0, 1).unwrap();
        assert_eq!(g.len(), 9);
        assert!(g.weights().iter().all(|&w| (w - 1.0 / 9.0).abs() < 1e-15));
        let corner = g.pairwise_distance(0, 8);
        assert!((corner - 2f64.sqrt() * 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn pairwise_distance_basics() {
        let g = Grid::build(1, &[[0.0, 1.0]], 4, 0.0, 1).unwrap();
        assert_eq!(g.pairwise_distance(0, 1), 0.25);
        assert_eq!(g.pairwise_distance(2, 2), 0.0);
    }

    #[test]
    fn degenerate_box_is_a_configuration_error() {
        let err = Grid::build(1, &[[1.0, 1.0]], 4, 0.0, 1).unwrap_err();
        assert!(matches!(err, Error::Config(ref e) if e[0].contains("grid.box")));
        assert!(Grid::build(1, &[[0.0, 1.0]], 1, 0.0, 1).is_err());
        assert!(Grid::build(3, &[[0.0, 1.0]; 3], 4, 0.0, 1).is_err());
    }

    #[test]
    fn exterior_annulus_lies_outside_and_within_radius() {
        for dim in 1..=2 {
            let bounds = vec![[0.0, 1.0]; dim];
            let g = Grid::build(dim, &bounds, 8, 0.5, 2).unwrap();
            assert!(!g.ext_nodes().is_empty());
            for e in 0..g.ext_nodes().len() {
                let d = dist_to_box(g.ext_node(e), &bounds);
                assert!(d > 0.0 && d <= 0.5, "node {e} at distance {d}");
            }
        }
        // 1D annulus volume is exactly 2R
        let g = Grid::build(1, &[[0.0, 1.0]], 8, 0.5, 2).unwrap();
        assert!((g.ext_weights().iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn refinement_keeps_volume_and_halves_spacing() {
        let g = Grid::build(1, &[[-1.0, 2.0]], 6, 0.0, 1).unwrap();
        let f = g.refined(2, 1).unwrap();
        assert!((f.volume() - g.volume()).abs() < 1e-12 * g.volume());
        assert!((f.spacing()[0] - 0.5 * g.spacing()[0]).abs() < 1e-15);
    }

    #[test]
    fn union_grid_has_disjoint_components() {
        let g = Grid::union_1d(&[[0.0, 1.0], [2.0, 3.0]], 8).unwrap();
        assert_eq!(g.len(), 16);
        assert!((g.volume() - 2.0).abs() < 1e-14);
        assert!(Grid::union_1d(&[[0.0, 1.0], [0.5, 3.0]], 8).is_err());
    }
}
