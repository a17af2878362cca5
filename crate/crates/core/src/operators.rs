//! The nonlinear interaction operator `𝔍` (energy, gradient, action) and the
//! linear operator `𝔏` defining the dual metric of the flow.
//!
//! Functionals are represented as dual vectors: a field `u` corresponds to
//! `M u`, `M = diag(weights)`, so `⟨f, v⟩ = Σ f_i v_i`.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, Dyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{Check, Report};
use crate::grid::Grid;
use crate::kernels::{KernelMatrix, Mode, StencilClosure};
use crate::potentials::ScalarFn;
use crate::quadrature::gauss_legendre;
use crate::{Dual, Error, Field, Result};

/// The odd nonlinearity `φ` of `𝔍` and its primitive `Φ`.
#[derive(Clone)]
pub enum PhiSpec {
    /// `φ(r) = |r|^{q−2} r`.
    Power { q: f64 },
    /// `φ(r) = ½|r|^{q−2} r`.
    HalfPower { q: f64 },
    Custom {
        name: String,
        phi: ScalarFn,
        lambda: f64,
        q: f64,
        strongly_monotone: bool,
        rule: Arc<(Vec<f64>, Vec<f64>)>,
    },
}

impl std::fmt::Debug for PhiSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PhiSpec::Power { q } => write!(f, "Power({q})"),
            PhiSpec::HalfPower { q } => write!(f, "HalfPower({q})"),
            PhiSpec::Custom { name, q, .. } => write!(f, "Custom({name}, q = {q})"),
        }
    }
}

impl PhiSpec {
    pub fn power(q: f64) -> Self {
        PhiSpec::Power { q }
    }

    pub fn custom(name: &str, phi: ScalarFn, lambda: f64, q: f64, strongly_monotone: bool) -> Self {
        PhiSpec::Custom {
            name: name.to_string(),
            phi,
            lambda,
            q,
            strongly_monotone,
            rule: Arc::new(gauss_legendre(20)),
        }
    }

    pub fn q(&self) -> f64 {
        match self {
            PhiSpec::Power { q } | PhiSpec::HalfPower { q } | PhiSpec::Custom { q, .. } => *q,
        }
    }

    /// Constant `Λ` of the growth and monotonicity bounds.
    pub fn ellipticity(&self) -> f64 {
        match self {
            PhiSpec::Power { q } => 2f64.powf(q - 2.0),
            PhiSpec::HalfPower { q } => 2f64.powf(q - 1.0),
            PhiSpec::Custom { lambda, .. } => *lambda,
        }
    }

    pub fn strongly_monotone(&self) -> bool {
        match self {
            PhiSpec::Power { .. } | PhiSpec::HalfPower { .. } => true,
            PhiSpec::Custom { strongly_monotone, .. } => *strongly_monotone,
        }
    }

    #[inline]
    pub fn phi(&self, r: f64) -> f64 {
        match self {
            PhiSpec::Power { q } => signed_power(r, *q),
            PhiSpec::HalfPower { q } => 0.5 * signed_power(r, *q),
            PhiSpec::Custom { phi, .. } => phi(r),
        }
    }

    /// `Φ(r) = ∫₀^r φ`.
    #[inline]
    pub fn big_phi(&self, r: f64) -> f64 {
        match self {
            PhiSpec::Power { q } => abs_power(r, *q) / q,
            PhiSpec::HalfPower { q } => 0.5 * abs_power(r, *q) / q,
            PhiSpec::Custom { phi, rule, .. } => {
                let (x, w) = rule.as_ref();
                x.iter()
                    .zip(w)
                    .map(|(x, w)| w * phi(0.5 * r * (x + 1.0)))
                    .sum::<f64>()
                    * 0.5
                    * r
            }
        }
    }

    /// Sampled growth and monotonicity bounds of `φ`.
    pub fn check(&self) -> Report {
        let mut report = Report::new(format!("phi {self:?}"));
        let q = self.q();
        let lambda = self.ellipticity();
        let r: Vec<f64> = (0..=400).map(|k| -4.0 + 0.02 * k as f64).collect();
        report.push(Check::at_most("phi_zero_at_origin", self.phi(0.0).abs(), 0.0));
        let mut growth: f64 = 0.0;
        for &x in &r {
            let p = self.phi(x) * x;
            let a = x.abs().powf(q);
            growth = growth.max(a / lambda - p).max(p - lambda * a);
        }
        report.push(Check::at_most("growth_bounds", growth, 1e-12));
        if self.strongly_monotone() {
            let mut mono: f64 = 0.0;
            for &a in &r {
                for &b in r.iter().step_by(3) {
                    let lhs = (self.phi(a) - self.phi(b)) * (a - b);
                    mono = mono.max((a - b).abs().powf(q) / lambda - lhs);
                }
            }
            report.push(Check::at_most("strong_monotonicity", mono, 1e-12));
        }
        report
    }
}

#[inline]
fn signed_power(r: f64, q: f64) -> f64 {
    if q == 2.0 {
        r
    } else if q == 4.0 {
        r * r * r
    } else {
        r.abs().powf(q - 2.0) * r
    }
}

#[inline]
fn abs_power(r: f64, q: f64) -> f64 {
    if q == 2.0 {
        r * r
    } else if q == 4.0 {
        (r * r) * (r * r)
    } else {
        r.abs().powf(q)
    }
}

const PARALLEL_ROWS: usize = 128;

/// `𝔉(u) = Σ_{i≠j} Φ(u_i − u_j) W_ij + Σ_i ½(Φ(u_i) + Φ(−u_i)) ω_i w_i`.
pub fn energy_f(km: &KernelMatrix, phi: &PhiSpec, u: &Field) -> f64 {
    let w = km.pair_weights();
    let n = u.len();
    let row = |i: usize| {
        let ui = u[i];
        let mut acc = 0.0;
        for j in 0..n {
            let wij = w[(i, j)];
            if wij != 0.0 {
                acc += phi.big_phi(ui - u[j]) * wij;
            }
        }
        acc + 0.5 * (phi.big_phi(ui) + phi.big_phi(-ui)) * km.killing()[i] * km.weights()[i]
    };
    // rows are summed in a fixed order so results do not depend on threading
    let rows: Vec<f64> = if n >= PARALLEL_ROWS {
        (0..n).into_par_iter().map(row).collect()
    } else {
        (0..n).map(row).collect()
    };
    rows.iter().sum()
}

/// First variation of [`energy_f`] as a dual vector.
pub fn grad_i(km: &KernelMatrix, phi: &PhiSpec, u: &Field) -> Dual {
    let w = km.pair_weights();
    let n = u.len();
    let symmetric = km.spec().map(|s| s.symmetric).unwrap_or(true);
    let row = |k: usize| {
        let uk = u[k];
        let mut acc = 0.0;
        for j in 0..n {
            let wkj = w[(k, j)];
            let wjk = w[(j, k)];
            if symmetric {
                if wkj != 0.0 {
                    let p = phi.phi(uk - u[j]);
                    acc += p * wkj - phi.phi(u[j] - uk) * wjk;
                }
            } else {
                if wkj != 0.0 {
                    acc += phi.phi(uk - u[j]) * wkj;
                }
                if wjk != 0.0 {
                    acc -= phi.phi(u[j] - uk) * wjk;
                }
            }
        }
        acc + 0.5 * (phi.phi(uk) - phi.phi(-uk)) * km.killing()[k] * km.weights()[k]
    };
    let values: Vec<f64> = if n >= PARALLEL_ROWS {
        (0..n).into_par_iter().map(row).collect()
    } else {
        (0..n).map(row).collect()
    };
    Dual::from_vec(values)
}

/// `⟨𝔍u, v⟩`.
pub fn action_i(km: &KernelMatrix, phi: &PhiSpec, u: &Field, v: &Field) -> f64 {
    grad_i(km, phi, u).dot(v)
}

/// Which linear operator `𝔏` is used.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OperatorKind {
    LaplacianDirichlet,
    FractionalDirichlet { sigma: f64 },
    IdentityRiesz,
    LaplacianNeumann,
    RegionalFractional { sigma: f64 },
    Sum { parts: Vec<OperatorKind> },
}

impl OperatorKind {
    /// Whether the operator annihilates constants (and needs conserved mode).
    pub fn annihilates_constants(&self) -> bool {
        match self {
            OperatorKind::LaplacianNeumann | OperatorKind::RegionalFractional { .. } => true,
            OperatorKind::Sum { parts } => parts.iter().all(OperatorKind::annihilates_constants),
            _ => false,
        }
    }
}

/// A symmetric operator `𝔏` on nodal fields, stored as the dual-form matrix
/// `A` (`𝔏u = A u`) together with its Cholesky factorization.
///
/// Mass-split operators annihilate constants; they are inverted on dual
/// vectors with zero sum through the augmented matrix `A + α w wᵀ`.
#[derive(Clone, Debug)]
pub struct OperatorL {
    kind: OperatorKind,
    matrix: DMatrix<f64>,
    weights: Field,
    mass_split: bool,
    factor: Cholesky<f64, Dyn>,
}

impl OperatorL {
    fn build(kind: OperatorKind, matrix: DMatrix<f64>, weights: Field, mass_split: bool) -> Result<Self> {
        let n = matrix.nrows();
        let system = if mass_split {
            let scale = matrix.trace() / (n as f64 * weights.norm_squared());
            &matrix + scale * &weights * weights.transpose()
        } else {
            matrix.clone()
        };
        let factor = Cholesky::new(system).ok_or_else(|| {
            Error::numerical(format!("operator {kind:?} is not positive definite"), f64::NAN)
        })?;
        Ok(Self {
            kind,
            matrix,
            weights,
            mass_split,
            factor,
        })
    }

    pub fn identity_riesz(grid: &Grid) -> Result<Self> {
        let w = grid.weights_vector();
        Self::build(OperatorKind::IdentityRiesz, DMatrix::from_diagonal(&w), w, false)
    }

    /// `−Δ` with homogeneous Dirichlet conditions, second-order stencil.
    pub fn laplacian_dirichlet(grid: &Grid) -> Result<Self> {
        let km = KernelMatrix::stencil(grid, 1.0, StencilClosure::Dirichlet)?;
        Self::build(OperatorKind::LaplacianDirichlet, km.quadratic_matrix(), grid.weights_vector(), false)
    }

    /// `−Δ` with homogeneous Neumann conditions (kernel = constants).
    pub fn laplacian_neumann(grid: &Grid) -> Result<Self> {
        let km = KernelMatrix::stencil(grid, 1.0, StencilClosure::Neumann)?;
        Self::build(OperatorKind::LaplacianNeumann, km.quadratic_matrix(), grid.weights_vector(), true)
    }

    /// Quadratic form `∬ (u(x)−u(y))(v(x)−v(y)) K` of a kernel with `q = 2`;
    /// Dirichlet kernels give an invertible operator, regional ones a
    /// mass-split one.
    pub fn fractional(km: &KernelMatrix, sigma: f64) -> Result<Self> {
        if let Some(spec) = km.spec() {
            if spec.q() != 2.0 {
                return Err(Error::config(format!(
                    "operator.kernel: fractional operators need q = 2, got {}",
                    spec.q()
                )));
            }
        }
        let (kind, split) = match km.mode() {
            Mode::Dirichlet => (OperatorKind::FractionalDirichlet { sigma }, false),
            Mode::Regional | Mode::Periodic => (OperatorKind::RegionalFractional { sigma }, true),
        };
        Self::build(kind, km.quadratic_matrix(), km.weights().clone(), split)
    }

    /// `𝔏₁ + 𝔏₂ + …`; mass-split iff every part is.
    pub fn sum(parts: &[OperatorL]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::config("operator.parts: a sum needs at least one part"))?;
        let mut matrix = first.matrix.clone();
        for p in &parts[1..] {
            if p.matrix.shape() != matrix.shape() {
                return Err(Error::config("operator.parts: parts live on different grids"));
            }
            matrix += &p.matrix;
        }
        let split = parts.iter().all(|p| p.mass_split);
        let kind = OperatorKind::Sum {
            parts: parts.iter().map(|p| p.kind.clone()).collect(),
        };
        Self::build(kind, matrix, first.weights.clone(), split)
    }

    pub fn kind(&self) -> &OperatorKind {
        &self.kind
    }

    pub fn mass_split(&self) -> bool {
        self.mass_split
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn weights(&self) -> &Field {
        &self.weights
    }

    /// `𝔏u` as a dual vector.
    pub fn apply(&self, u: &Field) -> Dual {
        &self.matrix * u
    }

    /// `B(u, v) = ⟨𝔏u, v⟩`.
    pub fn bilinear(&self, u: &Field, v: &Field) -> f64 {
        self.apply(u).dot(v)
    }

    /// Removes the constant-mode component of a dual vector (`Σ f = 0` after).
    pub fn project_dual(&self, f: &Dual) -> Dual {
        let total: f64 = f.sum();
        f - &self.weights * (total / self.weights.sum())
    }

    /// Solves `𝔏u = f`; mass-split operators need `Σ f = 0` and return the
    /// zero-mean solution.
    pub fn solve(&self, f: &Dual) -> Result<Field> {
        if f.len() != self.len() {
            return Err(Error::Precondition(format!(
                "right-hand side has {} entries, operator has {}",
                f.len(),
                self.len()
            )));
        }
        if self.mass_split {
            let total: f64 = f.sum();
            let norm = f.norm();
            if total.abs() > 1e-9 * norm.max(f64::MIN_POSITIVE) && norm > 0.0 {
                return Err(Error::Precondition(format!(
                    "mass-split operator needs a zero-sum right-hand side (sum = {total:.3e})"
                )));
            }
        }
        let u = self.factor.solve(f);
        if u.iter().any(|x| !x.is_finite()) {
            return Err(Error::numerical("operator solve produced non-finite values", f64::NAN));
        }
        Ok(u)
    }

    /// Dense `M 𝔏⁻¹ M` (on zero-mean fields for mass-split operators): the
    /// matrix of `u ↦ ‖M u‖²_{𝔏⁻¹}`.
    pub fn inverse_metric(&self) -> DMatrix<f64> {
        let m = DMatrix::from_diagonal(&self.weights);
        let inv_m = self.factor.solve(&m);
        &m * inv_m
    }

    /// `‖f‖_{𝔏⁻¹} = sqrt(⟨f, 𝔏⁻¹f⟩)`.
    pub fn dual_norm(&self, f: &Dual) -> Result<f64> {
        let u = self.solve(f)?;
        Ok(f.dot(&u).max(0.0).sqrt())
    }
}
