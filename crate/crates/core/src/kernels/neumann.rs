//! Nested quadrature for the regional kernel of the fractional Neumann problem:
//!
//! `K(x,y) = |x−y|^{−d−2s} + ∫_{ℝ^d∖Ω} dz / (|x−z|^{d+2s} |y−z|^{d+2s} I(z))`,
//! `I(z) = ∫_Ω |z−η|^{−d−2s} dη`.

use crate::grid::{distance, Grid};
use crate::quadrature::{gauss_legendre, power_tail_outside};
use crate::Result;

/// Exterior quadrature nodes `z_k` with weights `c_k = ω_k / I(z_k)`, plus a
/// per-node cache of `|x_i − z_k|^{−d−2s}` when built for a grid.
#[derive(Clone, Debug)]
pub struct K3Quadrature {
    s: f64,
    dim: usize,
    bounds: Vec<[f64; 2]>,
    z: Vec<[f64; 2]>,
    c: Vec<f64>,
    /// 2D only: radius of the quadratured annulus and `|Ω|`.
    far: Option<(f64, f64)>,
    table: Vec<Vec<f64>>,
    nodes: Vec<[f64; 2]>,
}

impl K3Quadrature {
    /// Quadrature without a node cache, for pointwise evaluation.
    pub fn for_points(s: f64, bounds: &[[f64; 2]], resolution: usize) -> Self {
        match bounds.len() {
            1 => Self::one_dimensional(s, bounds[0], resolution),
            _ => {
                let diam = bounds
                    .iter()
                    .map(|[a, b]| (b - a) * (b - a))
                    .sum::<f64>()
                    .sqrt();
                let g = Grid::build(2, bounds, 32, diam, 2).expect("valid box");
                Self::two_dimensional(s, &g, resolution)
            }
        }
    }

    pub(crate) fn for_grid(
        s: f64,
        bounds: &[[f64; 2]],
        resolution: usize,
        grid: &Grid,
    ) -> Result<Self> {
        let mut q = match bounds.len() {
            1 => Self::one_dimensional(s, bounds[0], resolution),
            _ if grid.ext_radius() > 0.0 => Self::two_dimensional(s, grid, resolution),
            _ => {
                let g = Grid::build(2, bounds, grid.n_per_axis(), grid.diameter(), 2)?;
                Self::two_dimensional(s, &g, resolution)
            }
        };
        let p = q.dim as f64 + 2.0 * s;
        q.nodes = grid.nodes().to_vec();
        q.table = (0..grid.len())
            .map(|i| {
                let x = grid.node(i);
                q.z.iter()
                    .map(|z| distance(x, &z[..q.dim]).powf(-p))
                    .collect()
            })
            .collect();
        Ok(q)
    }

    fn one_dimensional(s: f64, [a, b]: [f64; 2], resolution: usize) -> Self {
        let len = b - a;
        let two_s = 2.0 * s;
        // I(z) at distance e^t from the nearest endpoint, written to avoid
        // cancellation far from the interval.
        let inner = |t: f64| -(-two_s * t).exp() * (-two_s * (len * (-t).exp()).ln_1p()).exp_m1() / two_s;
        let (gx, gw) = gauss_legendre(resolution.max(2));
        let t_lo = -40.0;
        let t_hi = (14.0 / s).max(40.0);
        let panels = (t_hi - t_lo).ceil() as usize;
        let width = (t_hi - t_lo) / panels as f64;
        let mut z = Vec::new();
        let mut c = Vec::new();
        let mut push = |t: f64, weight: f64| {
            let e = t.exp();
            let ci = weight * e / inner(t);
            z.push([b + e, 0.0]);
            c.push(ci);
            z.push([a - e, 0.0]);
            c.push(ci);
        };
        for p in 0..panels {
            let lo = t_lo + p as f64 * width;
            for (x, w) in gx.iter().zip(&gw) {
                push(lo + 0.5 * width * (x + 1.0), 0.5 * width * w);
            }
        }
        // The integrand decays like e^{−2st}: close the range analytically.
        push(t_hi, 1.0 / two_s);
        Self {
            s,
            dim: 1,
            bounds: vec![[a, b]],
            z,
            c,
            far: None,
            table: Vec::new(),
            nodes: Vec::new(),
        }
    }

    fn two_dimensional(s: f64, grid: &Grid, resolution: usize) -> Self {
        let p = 2.0 + 2.0 * s;
        let fine = Grid::build(
            2,
            grid.bounds(),
            grid.n_per_axis() * resolution.max(1),
            0.0,
            1,
        )
        .expect("valid box");
        let inner = |z: &[f64]| -> f64 {
            (0..fine.len())
                .map(|k| distance(z, fine.node(k)).powf(-p) * fine.weights()[k])
                .sum()
        };
        let z: Vec<[f64; 2]> = grid.ext_nodes().to_vec();
        let c = {
            use rayon::prelude::*;
            z.par_iter()
                .zip(grid.ext_weights().par_iter())
                .map(|(zk, &wk)| wk / inner(&zk[..]))
                .collect()
        };
        Self {
            s,
            dim: 2,
            bounds: grid.bounds().to_vec(),
            z,
            c,
            far: Some((grid.ext_radius(), grid.volume())),
            table: Vec::new(),
            nodes: Vec::new(),
        }
    }

    fn far_tail(&self, x: &[f64], y: &[f64]) -> f64 {
        match self.far {
            Some((radius, volume)) => {
                let mid = [0.5 * (x[0] + y[0]), 0.5 * (x[1] + y[1])];
                power_tail_outside(&mid, &self.bounds, radius, 2.0 * self.s) / volume
            }
            None => 0.0,
        }
    }

    /// Kernel value at two distinct points of `Ω` (without normalization).
    pub fn value(&self, x: &[f64], y: &[f64]) -> f64 {
        let p = self.dim as f64 + 2.0 * self.s;
        let nested: f64 = self
            .z
            .iter()
            .zip(&self.c)
            .map(|(z, c)| c * (distance(x, &z[..self.dim]) * distance(y, &z[..self.dim])).powf(-p))
            .sum();
        distance(x, y).powf(-p) + nested + self.far_tail(x, y)
    }

    /// Kernel value for cached grid nodes `i ≠ j` at distance `r`.
    pub(crate) fn value_at_nodes(&self, i: usize, j: usize, r: f64) -> f64 {
        let p = self.dim as f64 + 2.0 * self.s;
        let (a, b) = (&self.table[i], &self.table[j]);
        let nested: f64 = self
            .c
            .iter()
            .zip(a.iter().zip(b))
            .map(|(c, (pa, pb))| c * pa * pb)
            .sum();
        let (x, y) = (&self.nodes[i][..self.dim], &self.nodes[j][..self.dim]);
        r.powf(-p) + nested + self.far_tail(x, y)
    }
}
