//! Spectral Neumann fractional Laplacian as a pair-weight matrix.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{KernelFamily, KernelMatrix, KernelSpec, Mode, StencilClosure};
use crate::grid::Grid;
use crate::{Error, Result};

/// Eigenpairs `(λ_k, ψ_k)` of the discrete Neumann Laplacian, ascending,
/// with `ψ_k` orthonormal in the weighted inner product.
pub(crate) fn neumann_eigenpairs(grid: &Grid) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let stencil = KernelMatrix::stencil(grid, 1.0, StencilClosure::Neumann)?;
    let w = grid.weights()[0];
    let strong = stencil.quadratic_matrix() / w;
    let eig = SymmetricEigen::new(strong);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(order.len(), order.iter().map(|&k| eig.eigenvalues[k].max(0.0)));
    let mut vectors = DMatrix::zeros(order.len(), order.len());
    for (col, &k) in order.iter().enumerate() {
        vectors.set_column(col, &(eig.eigenvectors.column(k) / w.sqrt()));
    }
    Ok((values, vectors))
}

/// Assembles `A = Σ_{k≥1} λ_k^s (Mψ_k)(Mψ_k)ᵀ` in dual form and returns the
/// pair weights `W_ij = −A_ij / 2` (the quadratic form of `W` then equals
/// `uᵀAu`); killing weights vanish.
pub fn spectral_assemble_k4(spec: &KernelSpec, grid: &Grid) -> Result<KernelMatrix> {
    let KernelFamily::SpectralNeumannK4 { s, eigen_count } = spec.family else {
        return Err(Error::config("kernel.family: expected spectral_neumann_k4"));
    };
    if !grid.is_box() {
        return Err(Error::config("spectral_neumann_k4 needs a tensor box grid"));
    }
    let n = grid.len();
    let count = eigen_count.unwrap_or(n - 1);
    if count == 0 || count > n - 1 {
        return Err(Error::config(format!(
            "kernel.eigen_count: must lie in 1..={} for this grid, got {count}",
            n - 1
        )));
    }
    let (values, vectors) = neumann_eigenpairs(grid)?;
    let w = grid.weights_vector();
    let mut a = DMatrix::zeros(n, n);
    for k in 1..=count {
        let mpsi = vectors.column(k).component_mul(&w);
        a += values[k].powf(s) * &mpsi * mpsi.transpose();
    }
    let scale = a.amax().max(f64::MIN_POSITIVE);
    let mut pair = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let v = -0.5 * spec.normalization * 0.5 * (a[(i, j)] + a[(j, i)]);
            if v < -1e-12 * scale {
                return Err(Error::config(format!(
                    "kernel.eigen_count: truncation to {count} eigenpairs gives negative pair weights; use more"
                )));
            }
            pair[(i, j)] = v.max(0.0);
        }
    }
    Ok(KernelMatrix::from_parts(
        pair,
        DVector::zeros(n),
        w,
        Mode::Regional,
        Some(spec.clone()),
        "spectral_neumann_k4",
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Grid {
        Grid::build(1, &[[0.0, 1.0]], n, 0.0, 1).unwrap()
    }

    #[test]
    fn constants_are_annihilated() {
        let g = grid(12);
        let km = spectral_assemble_k4(&KernelSpec::spectral_k4(0.4), &g).unwrap();
        let ones = DVector::from_element(12, 1.0);
        assert!((km.quadratic_matrix() * ones).amax() < 1e-10);
    }

    #[test]
    fn order_one_recovers_the_neumann_laplacian() {
        let g = grid(8);
        let mut spec = KernelSpec::spectral_k4(0.5);
        spec.family = KernelFamily::SpectralNeumannK4 { s: 1.0, eigen_count: None };
        let km = spectral_assemble_k4(&spec, &g).unwrap();
        let lap = KernelMatrix::stencil(&g, 1.0, StencilClosure::Neumann)
            .unwrap()
            .quadratic_matrix();
        assert!((km.quadratic_matrix() - lap).amax() < 1e-10);
    }

    #[test]
    fn lowest_nonzero_eigenvalue_is_the_fractional_power() {
        // Discrete Neumann eigenvalues of the 1D stencil: (4/h²) sin²(πk/(2n)).
        let n = 8;
        let g = grid(n);
        let km = spectral_assemble_k4(&KernelSpec::spectral_k4(0.5), &g).unwrap();
        let h = 1.0 / n as f64;
        let strong = km.quadratic_matrix() / h;
        let mut eig: Vec<f64> = SymmetricEigen::new(strong).eigenvalues.iter().copied().collect();
        eig.sort_by(f64::total_cmp);
        let lambda1 = 4.0 / (h * h) * (std::f64::consts::PI / (2.0 * n as f64)).sin().powi(2);
        assert!(eig[0].abs() < 1e-9);
        assert!((eig[1] - lambda1.sqrt()).abs() < 1e-9 * lambda1.sqrt());
    }

    #[test]
    fn too_many_eigenpairs_is_a_config_error() {
        let g = grid(6);
        let mut spec = KernelSpec::spectral_k4(0.5);
        spec.family = KernelFamily::SpectralNeumannK4 { s: 0.5, eigen_count: Some(6) };
        assert!(matches!(spectral_assemble_k4(&spec, &g), Err(Error::Config(_))));
    }
}
