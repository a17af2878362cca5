//! Distance between fractional runs and the classical (stencil) run as `s → 1`.

use rayon::prelude::*;

use crate::diagnostics::spectral::generalized_eigenvalues;
use crate::diagnostics::{Check, Report};
use crate::grid::Grid;
use crate::kernels::{KernelMatrix, KernelSpec, Mode, StencilClosure};
use crate::scheme::{Scheme, Trajectory};
use crate::{Field, Result};

#[derive(Clone, Debug)]
pub struct LocalLimitStudy {
    pub s_values: Vec<f64>,
    /// `max_n ‖u_n^{(s)} − u_n^{(local)}‖_{L²}` per `s`.
    pub distances: Vec<f64>,
    /// Stencil scale of the classical run.
    pub scale: f64,
    pub report: Report,
}

/// The `(1 − s)`-normalized global kernel with `q = 2`, plus the energy of
/// the singular near field `|x − y| < h/2` that nodal quadrature misses.
///
/// On that ball `u(y) − u(x) ≈ ∇u·(y − x)`, which contributes
/// `½|∇u|²·|S^{d−1}|(h/2)^{2−2s}/(2d)`; it is added as a scaled stencil.
pub fn normalized_kernel(grid: &Grid, s: f64) -> Result<KernelMatrix> {
    let spec = KernelSpec::power_global(s, 2.0).with_normalization(1.0 - s);
    let nodal = KernelMatrix::assemble(&spec, grid, Mode::Dirichlet)?;
    let rho = 0.5 * grid.spacing().iter().copied().fold(f64::INFINITY, f64::min);
    let near = near_field_scale(grid.dim(), s, rho);
    nodal.plus(&KernelMatrix::stencil(grid, near, StencilClosure::Dirichlet)?)
}

/// `|S^{d−1}| ρ^{2−2s} / (2d)`.
fn near_field_scale(dim: usize, s: f64, rho: f64) -> f64 {
    let sphere = if dim == 1 { 2.0 } else { 2.0 * std::f64::consts::PI };
    sphere * rho.powf(2.0 - 2.0 * s) / (2.0 * dim as f64)
}

/// Stencil scale of the `s → 1` limit of [`normalized_kernel`].
pub fn local_limit_scale(dim: usize) -> f64 {
    near_field_scale(dim, 1.0, 1.0)
}

/// Fitted constant: ratio of the smallest Dirichlet eigenvalues of the
/// normalized fractional form and of the stencil Laplacian.
pub fn fit_local_scale(grid: &Grid, s: f64) -> Result<f64> {
    let w = grid.weights_vector();
    let frac = normalized_kernel(grid, s)?;
    let local = KernelMatrix::stencil(grid, 1.0, StencilClosure::Dirichlet)?;
    let a = generalized_eigenvalues(&frac.quadratic_matrix(), &w, false)?[0];
    let b = generalized_eigenvalues(&local.quadratic_matrix(), &w, false)?[0];
    Ok(a / b)
}

fn max_distance(a: &Trajectory, b: &Trajectory, weights: &Field) -> f64 {
    a.u.iter()
        .zip(&b.u)
        .map(|(x, y)| {
            let d = x - y;
            d.component_mul(&d).dot(weights).sqrt()
        })
        .fold(0.0, f64::max)
}

/// Runs the scheme built by `make` once per `s` (with the normalized
/// fractional kernel) and once with its `s → 1` limit stencil; PASS iff the
/// distances decrease strictly as `s` grows.
pub fn local_limit_study<F>(grid: &Grid, u0: &Field, s_list: &[f64], make: F) -> Result<LocalLimitStudy>
where
    F: Fn(KernelMatrix) -> Result<Scheme> + Sync,
{
    let mut s_values = s_list.to_vec();
    s_values.sort_by(f64::total_cmp);
    let scale = local_limit_scale(grid.dim());
    let local = make(KernelMatrix::stencil(grid, scale, StencilClosure::Dirichlet)?)?.run(u0)?;
    let runs: Vec<Trajectory> = s_values
        .par_iter()
        .map(|&s| make(normalized_kernel(grid, s)?)?.run(u0))
        .collect::<Result<_>>()?;
    let weights = grid.weights_vector();
    let distances: Vec<f64> = runs.iter().map(|r| max_distance(r, &local, &weights)).collect();
    let mut report = Report::new("local limit");
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for w in distances.windows(2) {
        if !(w[1] < w[0] || (w[0] == 0.0 && w[1] == 0.0)) {
            ok = false;
            worst = worst.max(w[1] - w[0]);
        }
    }
    let mut check = Check::verdict("distance_decreases_in_s", ok, worst).with_value("scale", scale);
    for (s, d) in s_values.iter().zip(&distances) {
        check = check.with_value(&format!("d[s={s}]"), *d);
    }
    report.push(check);
    let classical = local.energies.windows(2).map(|e| e[1] - e[0]).fold(0.0, f64::max);
    report.push(Check::at_most("classical_run_descends", classical, 1e-12 * local.energies[0].abs().max(1.0)));
    report.push(Check::verdict(
        "distances_finite",
        distances.iter().all(|d| d.is_finite()),
        0.0,
    ));
    Ok(LocalLimitStudy {
        s_values,
        distances,
        scale,
        report,
    })
}
