//! Exterior extension making the nonlocal Neumann derivative vanish:
//! `ũ(x) = ∫_Ω u(y)|x−y|^{−d−2s} dy / ∫_Ω |x−y|^{−d−2s} dy`.

use crate::diagnostics::{Check, Report};
use crate::grid::Grid;
use crate::{Error, Field, Result};

fn weights_at(grid: &Grid, x: &[f64], s: f64) -> Vec<f64> {
    let p = grid.dim() as f64 + 2.0 * s;
    (0..grid.len())
        .map(|j| {
            let r = crate::grid::distance(x, grid.node(j));
            r.powf(-p) * grid.weights()[j]
        })
        .collect()
}

/// Extended values at the exterior nodes of `grid`.
pub fn neumann_extension(u: &Field, s: f64, grid: &Grid) -> Result<Field> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::config(format!("kernel.s: must lie in (0,1), got {s}")));
    }
    if u.len() != grid.len() {
        return Err(Error::Precondition("field length differs from the grid size".to_string()));
    }
    let values = (0..grid.ext_nodes().len()).map(|e| {
        let k = weights_at(grid, grid.ext_node(e), s);
        let num: f64 = k.iter().zip(u.iter()).map(|(k, u)| k * u).sum();
        num / k.iter().sum::<f64>()
    });
    Ok(Field::from_iterator(grid.ext_nodes().len(), values))
}

/// `Σ_j (ũ(x) − u(y_j)) |x − y_j|^{−d−2s} w_j` at every exterior node.
pub fn neumann_residuals(u: &Field, ext: &Field, s: f64, grid: &Grid) -> Vec<f64> {
    (0..grid.ext_nodes().len())
        .map(|e| {
            let k = weights_at(grid, grid.ext_node(e), s);
            k.iter().zip(u.iter()).map(|(k, u)| (ext[e] - u) * k).sum()
        })
        .collect()
}

/// Residual below `tol` at every exterior node and the extension within
/// `[min u, max u]`.
pub fn neumann_extension_check(u: &Field, s: f64, grid: &Grid, tol: f64) -> Result<Report> {
    let ext = neumann_extension(u, s, grid)?;
    let residual = neumann_residuals(u, &ext, s, grid)
        .into_iter()
        .map(f64::abs)
        .fold(0.0, f64::max);
    let (lo, hi) = (u.min(), u.max());
    let outside = ext
        .iter()
        .map(|v| (lo - v).max(v - hi).max(0.0))
        .fold(0.0, f64::max);
    let mut report = Report::new(format!("neumann extension s={s}"));
    report.push(Check::at_most("neumann_residual", residual, tol));
    report.push(Check::at_most("extension_in_range", outside, 0.0));
    Ok(report)
}
