//! Generalized eigenvalues of quadratic forms against the weighted `L²`
//! product: Poincaré constants and local-limit eigenvalue ratios.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::diagnostics::Check;
use crate::grid::Grid;
use crate::kernels::{KernelMatrix, KernelSpec, Mode, StencilClosure};
use crate::{Error, Field, Result};

/// Eigenvalues (ascending) of `A v = μ M v`, optionally on the complement of
/// constants.
pub fn generalized_eigenvalues(a: &DMatrix<f64>, weights: &Field, zero_mean: bool) -> Result<Vec<f64>> {
    if weights.iter().any(|w| !(*w > 0.0)) {
        return Err(Error::numerical("mass matrix is singular", f64::NAN));
    }
    let inv_sqrt = weights.map(|w| 1.0 / w.sqrt());
    let n = weights.len();
    let mut s = DMatrix::from_fn(n, n, |i, j| a[(i, j)] * inv_sqrt[i] * inv_sqrt[j]);
    s = 0.5 * (&s + s.transpose());
    let mut values: Vec<f64> = if zero_mean {
        // deflate the constant mode M^{1/2}𝟙 by pushing it to the top
        let v = weights.map(|w| w.sqrt());
        let v = &v / v.norm();
        let shift = s.trace().abs() + 1.0;
        let deflated = &s + shift * &v * v.transpose();
        let mut ev: Vec<f64> = SymmetricEigen::new(deflated).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev.pop();
        ev
    } else {
        SymmetricEigen::new(s).eigenvalues.iter().copied().collect()
    };
    values.sort_by(f64::total_cmp);
    Ok(values)
}

/// Poincaré constant `C = 1/μ_min` of the form `uᵀ A u` (`A` from `q = 2`)
/// against `‖u‖²_{L²}`, over zero-mean fields for regional and periodic
/// kernels. Returns `+∞` when the form is numerically singular.
pub fn poincare_constant(km: &KernelMatrix) -> Result<f64> {
    let zero_mean = km.mode() != Mode::Dirichlet;
    let ev = generalized_eigenvalues(&km.quadratic_matrix(), km.weights(), zero_mean)?;
    let (lo, hi) = (ev[0], ev[ev.len() - 1]);
    if lo <= 1e-11 * hi.abs().max(f64::MIN_POSITIVE) {
        Ok(f64::INFINITY)
    } else {
        Ok(1.0 / lo)
    }
}

/// Poincaré constants of `spec` on `grid` and on its `×2` refinement.
pub fn poincare_refinement(spec: &KernelSpec, grid: &Grid, mode: Mode) -> Result<(f64, f64)> {
    let coarse = poincare_constant(&KernelMatrix::assemble(spec, grid, mode)?)?;
    let fine_grid = grid.refined(2, 2)?;
    let fine = poincare_constant(&KernelMatrix::assemble(spec, &fine_grid, mode)?)?;
    Ok((coarse, fine))
}

/// `|C_fine/C_coarse − 1| ≤ tol`.
pub fn poincare_stability_check(coarse: f64, fine: f64, tol: f64) -> Check {
    let change = if coarse.is_finite() && fine.is_finite() {
        (fine / coarse - 1.0).abs()
    } else {
        f64::INFINITY
    };
    Check::at_most("poincare_stable_under_refinement", change, tol)
        .with_value("coarse", coarse)
        .with_value("fine", fine)
}

/// `C_fine ≥ factor · C_coarse`; a singular form (`C = ∞`) counts as blow-up.
pub fn poincare_blowup_check(coarse: f64, fine: f64, factor: f64) -> Check {
    let growth = if fine.is_infinite() { f64::INFINITY } else { fine / coarse };
    Check::at_least("poincare_blows_up_under_refinement", growth, factor)
        .with_value("coarse", coarse)
        .with_value("fine", fine)
}

/// Ratios `μ_k(fractional)/μ_k(local)` of the first `modes` Dirichlet
/// eigenvalues, fractional kernel normalized by `1 − s`.
pub fn local_eigen_ratios(grid: &Grid, s: f64, modes: usize) -> Result<Vec<f64>> {
    let spec = KernelSpec::power_global(s, 2.0).with_normalization(1.0 - s);
    let frac = KernelMatrix::assemble(&spec, grid, Mode::Dirichlet)?;
    let local = KernelMatrix::stencil(grid, 1.0, StencilClosure::Dirichlet)?;
    let w = grid.weights_vector();
    let a = generalized_eigenvalues(&frac.quadratic_matrix(), &w, false)?;
    let b = generalized_eigenvalues(&local.quadratic_matrix(), &w, false)?;
    Ok(a.iter().zip(&b).take(modes).map(|(x, y)| x / y).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neumann_stencil_poincare_matches_first_cosine() {
        let g = Grid::build(1, &[[0.0, 1.0]], 16, 0.0, 1).unwrap();
        let km = KernelMatrix::stencil(&g, 1.0, StencilClosure::Neumann).unwrap();
        let mut km = km;
        km = km.scaled(1.0);
        let h = 1.0 / 16.0;
        let mu1 = 4.0 / (h * h) * (std::f64::consts::PI / 32.0).sin().powi(2);
        let c = generalized_eigenvalues(&km.quadratic_matrix(), &g.weights_vector(), true).unwrap()[0];
        assert!((c - mu1).abs() < 1e-9 * mu1);
    }

    #[test]
    fn dirichlet_stencil_eigenvalue() {
        let g = Grid::build(1, &[[0.0, 1.0]], 20, 0.0, 1).unwrap();
        let km = KernelMatrix::stencil(&g, 1.0, StencilClosure::Dirichlet).unwrap();
        let ev = generalized_eigenvalues(&km.quadratic_matrix(), &g.weights_vector(), false).unwrap();
        // closure with a 3/h boundary diagonal: still close to π²
        assert!((ev[0] - std::f64::consts::PI.powi(2)).abs() < 0.05 * ev[0]);
    }

    #[test]
    fn disconnected_union_is_singular_below_the_gap() {
        let g = Grid::union_1d(&[[0.0, 1.0], [2.0, 3.0]], 8).unwrap();
        let short = KernelSpec::power_regional(0.5, 2.0).with_truncation(0.5);
        let km = KernelMatrix::assemble(&short, &g, Mode::Regional).unwrap();
        assert!(poincare_constant(&km).unwrap().is_infinite());
        let long = KernelSpec::power_regional(0.5, 2.0);
        let km = KernelMatrix::assemble(&long, &g, Mode::Regional).unwrap();
        assert!(poincare_constant(&km).unwrap().is_finite());
    }
}
