//! Truncated lattice sums `Σ_{ν∈ℤ^d} |z − ν|^{−d−α}` with an analytic tail.

use crate::quadrature::power_tail_outside;

/// `Σ_{|ν|_∞ ≤ cutoff} |z − ν|^{−d−α}` plus the remainder beyond the cutoff.
///
/// In one dimension the remainder is the midpoint-rule (Euler–Maclaurin)
/// estimate `∫_{M+½}^∞ f + f′(M+½)/24` for each side; in two dimensions it is
/// the integral of `|z − y|^{−2−α}` outside the square of lattice cells.
/// `z` must not be a lattice point.
pub fn lattice_sum(z: &[f64], alpha: f64, cutoff: usize) -> f64 {
    let m = cutoff as i64;
    match z.len() {
        1 => {
            let p = 1.0 + alpha;
            let mut total = 0.0;
            for nu in -m..=m {
                total += (z[0] - nu as f64).abs().powf(-p);
            }
            let edge = m as f64 + 0.5;
            for side in [edge - z[0], edge + z[0]] {
                total += side.powf(-alpha) / alpha - p * side.powf(-p - 1.0) / 24.0;
            }
            total
        }
        _ => {
            let p = 2.0 + alpha;
            let mut total = 0.0;
            for a in -m..=m {
                let dx = z[0] - a as f64;
                for b in -m..=m {
                    let dy = z[1] - b as f64;
                    total += (dx * dx + dy * dy).powf(-0.5 * p);
                }
            }
            let edge = m as f64 + 0.5;
            let square = [[-edge, edge], [-edge, edge]];
            // midpoint-rule correction: Δ|x|^{−p} = p²|x|^{−p−2}
            total + power_tail_outside(z, &square, 0.0, alpha)
                - p * p / 24.0 * power_tail_outside(z, &square, 0.0, alpha + 2.0)
        }
    }
}

/// Lattice-sum values for every node offset of a uniform box grid, so that
/// assembly needs `(2n−1)^d` sums instead of one per pair.
pub(crate) struct OffsetTable {
    n: usize,
    dim: usize,
    values: Vec<f64>,
}

impl OffsetTable {
    pub(crate) fn new(dim: usize, n: usize, h: &[f64], alpha: f64, cutoff: usize) -> Self {
        use rayon::prelude::*;
        let span = 2 * n - 1;
        let count = if dim == 1 { span } else { span * span };
        let values = (0..count)
            .into_par_iter()
            .map(|k| {
                let (a, b) = (k % span, k / span);
                let dx = (a as f64 - (n - 1) as f64) * h[0];
                if dim == 1 {
                    if a == n - 1 {
                        0.0
                    } else {
                        lattice_sum(&[dx], alpha, cutoff)
                    }
                } else {
                    let dy = (b as f64 - (n - 1) as f64) * h[1];
                    if a == n - 1 && b == n - 1 {
                        0.0
                    } else {
                        lattice_sum(&[dx, dy], alpha, cutoff)
                    }
                }
            })
            .collect();
        Self { n, dim, values }
    }

    /// Value for nodes `i`, `j` of the tensor grid (row-major, first axis fastest).
    pub(crate) fn get(&self, i: usize, j: usize) -> f64 {
        let n = self.n;
        let span = 2 * n - 1;
        if self.dim == 1 {
            self.values[i + n - 1 - j]
        } else {
            let (ix, iy) = (i % n, i / n);
            let (jx, jy) = (j % n, j / n);
            self.values[(ix + n - 1 - jx) + (iy + n - 1 - jy) * span]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// ζ(3/2), independent reference constant.
    const ZETA_3_2: f64 = 2.612_375_348_685_488;

    #[test]
    fn half_offset_matches_hurwitz_closed_form() {
        // Σ_ν |½ − ν|^{−p} = 2(2^p − 1) ζ(p), here p = 1 + sq = 1.5.
        let exact = 2.0 * (2f64.powf(1.5) - 1.0) * ZETA_3_2;
        let v = lattice_sum(&[0.5], 0.5, 64);
        assert!((v - exact).abs() / exact < 1e-8, "{v} vs {exact}");
        let coarse = lattice_sum(&[0.5], 0.5, 8);
        assert!((coarse - exact).abs() / exact < 1e-5);
    }

    #[test]
    fn spec_example_with_cutoff_fifty() {
        // s = 0.25, q = 2: exponent 1.5, same closed form.
        let exact = 2.0 * (2f64.powf(1.5) - 1.0) * ZETA_3_2;
        assert!((lattice_sum(&[0.5], 0.5, 50) - exact).abs() < 1e-8);
    }

    #[test]
    fn sum_is_periodic_and_even() {
        let a = lattice_sum(&[0.3], 0.8, 32);
        let b = lattice_sum(&[-0.7], 0.8, 32);
        let c = lattice_sum(&[-0.3], 0.8, 32);
        assert!((a - b).abs() < 1e-9 * a);
        assert!((a - c).abs() < 1e-12 * a);
    }

    #[test]
    fn two_dimensional_tail_converges_in_cutoff() {
        let z = [0.25, 0.4];
        let a = lattice_sum(&z, 0.6, 16);
        let b = lattice_sum(&z, 0.6, 48);
        assert!((a - b).abs() / b < 1e-5, "{a} {b}");
    }
}
