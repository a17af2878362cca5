//! Small quadrature toolbox: Gauss–Legendre rules, composite panels and the
//! polar-coordinate tail integral of a power law outside a (rounded) box.

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1, "Gauss-Legendre order must be positive");
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    let m = order.div_ceil(2);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (order as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(order, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(order, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[order - 1 - i] = x;
        weights[i] = w;
        weights[order - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// A composite Gauss–Legendre rule: `panels` equal panels of `order` points on `[a, b]`.
#[derive(Clone, Debug)]
pub struct CompositeRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl CompositeRule {
    pub fn new(a: f64, b: f64, panels: usize, order: usize) -> Self {
        let (gx, gw) = gauss_legendre(order);
        let width = (b - a) / panels as f64;
        let mut nodes = Vec::with_capacity(panels * order);
        let mut weights = Vec::with_capacity(panels * order);
        for p in 0..panels {
            let lo = a + p as f64 * width;
            for (x, w) in gx.iter().zip(&gw) {
                nodes.push(lo + 0.5 * width * (x + 1.0));
                weights.push(0.5 * width * w);
            }
        }
        Self { nodes, weights }
    }

    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Euclidean distance from `p` to the axis-aligned box `bounds` (zero inside).
pub fn dist_to_box(p: &[f64], bounds: &[[f64; 2]]) -> f64 {
    p.iter()
        .zip(bounds)
        .map(|(&x, &[lo, hi])| {
            let e = (lo - x).max(x - hi).max(0.0);
            e * e
        })
        .sum::<f64>()
        .sqrt()
}

/// `∫_{dist(y, box) > radius} |x − y|^{−d−α} dy` for `x` inside the box.
///
/// In polar coordinates around `x` the integral equals `(1/α) ∫_{S^{d−1}} ρ(θ)^{−α} dθ`,
/// where `ρ(θ)` is the exit distance of the ray from the rounded box. The
/// one-dimensional case is exact; in two dimensions the angular integral uses
/// a composite Gauss–Legendre rule.
pub fn power_tail_outside(x: &[f64], bounds: &[[f64; 2]], radius: f64, alpha: f64) -> f64 {
    assert!(alpha > 0.0, "tail exponent must be positive");
    match x.len() {
        1 => {
            let [lo, hi] = bounds[0];
            let right = hi + radius - x[0];
            let left = x[0] - lo + radius;
            (right.powf(-alpha) + left.powf(-alpha)) / alpha
        }
        2 => {
            // The exit distance has kinks where the ray meets a corner of the
            // box or a junction between an edge and a rounded corner.
            let mut breaks = Vec::new();
            for &cx in &bounds[0] {
                for &cy in &bounds[1] {
                    let sx = if cx > x[0] { 1.0 } else { -1.0 };
                    let sy = if cy > x[1] { 1.0 } else { -1.0 };
                    for (ox, oy) in [(0.0, 0.0), (sx * radius, 0.0), (0.0, sy * radius)] {
                        let a = (cy + oy - x[1]).atan2(cx + ox - x[0]);
                        breaks.push(a.rem_euclid(2.0 * PI));
                    }
                }
            }
            breaks.push(0.0);
            breaks.push(2.0 * PI);
            breaks.sort_by(f64::total_cmp);
            breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
            breaks
                .windows(2)
                .map(|w| {
                    CompositeRule::new(w[0], w[1], 4, 10).integrate(|theta| {
                        let dir = [theta.cos(), theta.sin()];
                        exit_distance(x, &dir, bounds, radius).powf(-alpha)
                    })
                })
                .sum::<f64>()
                / alpha
        }
        d => panic!("unsupported dimension {d}"),
    }
}

fn exit_distance(x: &[f64], dir: &[f64; 2], bounds: &[[f64; 2]], radius: f64) -> f64 {
    let diam = bounds
        .iter()
        .map(|[lo, hi]| (hi - lo) * (hi - lo))
        .sum::<f64>()
        .sqrt();
    let mut lo = 0.0;
    let mut hi = diam + radius + 1.0;
    let at = |t: f64| [x[0] + t * dir[0], x[1] + t * dir[1]];
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if dist_to_box(&at(mid), bounds) > radius {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(6);
        let integral: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(10)).sum();
        assert!((integral - 2.0 / 11.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn composite_rule_handles_smooth_integrand() {
        let rule = CompositeRule::new(0.0, PI, 4, 8);
        assert!((rule.integrate(f64::sin) - 2.0).abs() < 1e-13);
    }

    #[test]
    fn one_dimensional_tail_is_exact() {
        let bounds = [[0.0, 1.0]];
        let tail = power_tail_outside(&[0.25], &bounds, 0.5, 1.0);
        assert!((tail - (1.0 / 1.25 + 1.0 / 0.75)).abs() < 1e-15);
    }

    #[test]
    fn two_dimensional_tail_matches_disc_for_a_centered_point() {
        // Far from the box the rounded box looks like a disc of radius R.
        let bounds = [[-1e-3, 1e-3], [-1e-3, 1e-3]];
        let tail = power_tail_outside(&[0.0, 0.0], &bounds, 10.0, 0.5);
        let disc = 2.0 * PI * 10f64.powf(-0.5) / 0.5;
        assert!((tail - disc).abs() / disc < 1e-3);
    }
}
