//! Interaction kernels, their assembled pair-weight matrices and the
//! admissibility checks (singularity and integrability) they must pass.

mod certify;
mod lattice;
mod neumann;
mod spectral;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::grid::{distance, Grid};
use crate::{Error, Field, Result};

pub use certify::{
    check_integrability, check_singularity, discrete_seminorm, k3_sandwich, lipschitz_energy_check,
    refinement_verdict, IntegrabilityReport, IntegrabilityScope, KernelReport, LipschitzReport,
    RefinementVerdict, SandwichReport, SingularityReport,
};
pub use lattice::lattice_sum;
pub use neumann::K3Quadrature;
pub use spectral::spectral_assemble_k4;

/// The kernel families supported by the solver.
///
/// Pure power laws are `|x − y|^{−d−sq}`; the `q` of the Neumann families is
/// fixed to 2.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelFamily {
    /// Fractional `q`-Laplacian on `ℝ^d` (zero extension outside `Ω`).
    PowerGlobal { s: f64, q: f64 },
    /// Regional fractional `q`-Laplacian (K1): same law restricted to `Ω × Ω`.
    PowerRegional { s: f64, q: f64 },
    /// `|x−y|^{−d−s₁q} + |x−y|^{−d−s₂q}`.
    SumPower { s1: f64, s2: f64, q: f64 },
    /// Order `s(x,y) ∈ [s0, s1]` varying smoothly along the first axis:
    /// `s = s0 + (s1 − s0)·½(1 + tanh(((x₁+y₁)/2 − center)/width))`.
    VariableOrder {
        s0: f64,
        s1: f64,
        q: f64,
        center: f64,
        width: f64,
    },
    /// Order `s_in` when both points lie in the box `region`, `s_out` otherwise.
    PiecewiseRegion {
        region: Vec<[f64; 2]>,
        s_in: f64,
        s_out: f64,
        q: f64,
    },
    /// Periodic lattice sum (K2) `Σ_{ν∈ℤ^d} |x − y − ν|^{−d−sq}` on the unit box.
    PeriodicLattice { s: f64, q: f64, cutoff: usize },
    /// Regional kernel of the fractional Neumann problem (K3) on `domain`.
    NeumannK3 {
        s: f64,
        resolution: usize,
        domain: Vec<[f64; 2]>,
    },
    /// Spectral Neumann fractional Laplacian (K4); assembled from the
    /// eigenpairs of the discrete Neumann Laplacian, `None` = all of them.
    SpectralNeumannK4 { s: f64, eigen_count: Option<usize> },
}

/// Default ellipticity constant declared by the spectral Neumann kernel.
pub const K4_ELLIPTICITY: f64 = 25.0;

/// How an assembled kernel treats the complement of `Ω`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Zero extension: interactions with the exterior become killing weights.
    Dirichlet,
    /// Interactions restricted to `Ω × Ω`.
    Regional,
    /// Regional on the unit box with the periodic lattice kernel.
    Periodic,
}

/// A kernel family with its normalization and structural constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    #[serde(flatten)]
    pub family: KernelFamily,
    /// Constant factor multiplying the kernel, e.g. `1 − s` for local limits.
    pub normalization: f64,
    /// Interaction radius `ϱ` of the singularity bound.
    pub rho: f64,
    /// Ellipticity constant `Λ ≥ 1`.
    pub ellipticity: f64,
    pub symmetric: bool,
    /// Optional hard cutoff: the kernel is multiplied by `χ_{|x−y| < cutoff}`.
    #[serde(default)]
    pub truncation: Option<f64>,
}

impl KernelSpec {
    pub fn new(family: KernelFamily) -> Self {
        Self {
            family,
            normalization: 1.0,
            rho: 1.0,
            ellipticity: 1.0,
            symmetric: true,
            truncation: None,
        }
    }

    pub fn power_global(s: f64, q: f64) -> Self {
        Self::new(KernelFamily::PowerGlobal { s, q })
    }

    pub fn power_regional(s: f64, q: f64) -> Self {
        Self::new(KernelFamily::PowerRegional { s, q })
    }

    pub fn periodic_lattice(s: f64, q: f64) -> Self {
        Self::new(KernelFamily::PeriodicLattice { s, q, cutoff: 64 })
    }

    pub fn neumann_k3(s: f64, domain: &[[f64; 2]]) -> Self {
        Self::new(KernelFamily::NeumannK3 {
            s,
            resolution: 8,
            domain: domain.to_vec(),
        })
    }

    /// K4 with `Λ = K4_ELLIPTICITY`: its pointwise lower constant stays well
    /// below one on boxes (about 0.08 to 0.2 in 1D, 0.045 in 2D).
    pub fn spectral_k4(s: f64) -> Self {
        Self::new(KernelFamily::SpectralNeumannK4 { s, eigen_count: None }).with_ellipticity(K4_ELLIPTICITY)
    }

    pub fn with_normalization(mut self, c: f64) -> Self {
        self.normalization = c;
        self
    }

    pub fn with_rho(mut self, rho: f64) -> Self {
        self.rho = rho;
        self
    }

    pub fn with_ellipticity(mut self, lambda: f64) -> Self {
        self.ellipticity = lambda;
        self
    }

    pub fn with_truncation(mut self, cutoff: f64) -> Self {
        self.truncation = Some(cutoff);
        self
    }

    /// Growth exponent `q` of the associated energy.
    pub fn q(&self) -> f64 {
        use KernelFamily::*;
        match &self.family {
            PowerGlobal { q, .. }
            | PowerRegional { q, .. }
            | SumPower { q, .. }
            | VariableOrder { q, .. }
            | PiecewiseRegion { q, .. }
            | PeriodicLattice { q, .. } => *q,
            NeumannK3 { .. } | SpectralNeumannK4 { .. } => 2.0,
        }
    }

    /// The order used when certifying `K(x,y)|x−y|^{d+sq} ≥ 1/Λ`: the largest
    /// `s` for which every summand or branch of the kernel satisfies the bound
    /// on `|x − y| ≤ 1`.
    pub fn certification_order(&self) -> f64 {
        use KernelFamily::*;
        match &self.family {
            PowerGlobal { s, .. }
            | PowerRegional { s, .. }
            | PeriodicLattice { s, .. }
            | NeumannK3 { s, .. }
            | SpectralNeumannK4 { s, .. } => *s,
            SumPower { s1, s2, .. } => s1.max(*s2),
            VariableOrder { s0, s1, .. } => s0.min(*s1),
            PiecewiseRegion { s_in, s_out, .. } => s_in.min(*s_out),
        }
    }

    /// Whether the family can be assembled in `mode`.
    pub fn supports_mode(&self, mode: Mode) -> bool {
        use KernelFamily::*;
        match (&self.family, mode) {
            (PowerGlobal { .. }, Mode::Dirichlet) => true,
            (PowerGlobal { .. }, _) => false,
            (PeriodicLattice { .. }, Mode::Regional | Mode::Periodic) => true,
            (_, Mode::Periodic) => false,
            (PowerRegional { .. } | NeumannK3 { .. } | SpectralNeumannK4 { .. }, Mode::Regional) => true,
            (PowerRegional { .. } | NeumannK3 { .. } | SpectralNeumannK4 { .. }, _) => false,
            (PeriodicLattice { .. }, Mode::Dirichlet) => false,
            (SumPower { .. } | VariableOrder { .. } | PiecewiseRegion { .. }, _) => true,
        }
    }

    /// Whether the family only makes sense as a regional kernel.
    pub fn is_regional_family(&self) -> bool {
        matches!(
            self.family,
            KernelFamily::PowerRegional { .. }
                | KernelFamily::PeriodicLattice { .. }
                | KernelFamily::NeumannK3 { .. }
                | KernelFamily::SpectralNeumannK4 { .. }
        )
    }

    pub fn validate(&self) -> Result<()> {
        use KernelFamily::*;
        let mut errors = Vec::new();
        let mut order = |name: &str, s: f64| {
            if !(s > 0.0 && s < 1.0) {
                errors.push(format!("kernel.{name}: must lie in (0,1), got {s}"));
            }
        };
        match &self.family {
            PowerGlobal { s, .. } | PowerRegional { s, .. } | PeriodicLattice { s, .. } => {
                order("s", *s)
            }
            NeumannK3 { s, .. } | SpectralNeumannK4 { s, .. } => order("s", *s),
            SumPower { s1, s2, .. } => {
                order("s1", *s1);
                order("s2", *s2);
            }
            VariableOrder { s0, s1, .. } => {
                order("s0", *s0);
                order("s1", *s1);
            }
            PiecewiseRegion { s_in, s_out, .. } => {
                order("s_in", *s_in);
                order("s_out", *s_out);
            }
        }
        let q = self.q();
        if !(q >= 2.0 && q.is_finite()) {
            errors.push(format!("kernel.q: must be >= 2, got {q}"));
        }
        match &self.family {
            VariableOrder { s0, s1, width, .. } => {
                if s0 > s1 {
                    errors.push("kernel.s0: must not exceed kernel.s1".into());
                }
                if !(*width > 0.0) {
                    errors.push(format!("kernel.width: must be positive, got {width}"));
                }
            }
            NeumannK3 { resolution, .. } if *resolution == 0 => {
                errors.push("kernel.resolution: must be >= 1".into());
            }
            PeriodicLattice { cutoff, .. } if *cutoff == 0 => {
                errors.push("kernel.cutoff: must be >= 1".into());
            }
            _ => {}
        }
        if !(self.rho > 0.0) {
            errors.push(format!("kernel.rho: must be positive, got {}", self.rho));
        }
        if !(self.ellipticity >= 1.0) {
            errors.push(format!(
                "kernel.ellipticity: must be >= 1, got {}",
                self.ellipticity
            ));
        }
        if !(self.normalization > 0.0 && self.normalization.is_finite()) {
            errors.push(format!(
                "kernel.normalization: must be positive, got {}",
                self.normalization
            ));
        }
        if let Some(c) = self.truncation {
            if !(c > 0.0) {
                errors.push(format!("kernel.truncation: must be positive, got {c}"));
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errors))
        }
    }

    /// Pointwise kernel value `K(x, y)` including the normalization factor.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let r = distance(x, y);
        if r == 0.0 {
            return Err(Error::Domain("kernel evaluated on the diagonal x = y".into()));
        }
        if let Some(c) = self.truncation {
            if r >= c {
                return Ok(0.0);
            }
        }
        let d = x.len() as f64;
        let q = self.q();
        use KernelFamily::*;
        let raw = match &self.family {
            PowerGlobal { s, .. } | PowerRegional { s, .. } => r.powf(-d - s * q),
            SumPower { s1, s2, .. } => r.powf(-d - s1 * q) + r.powf(-d - s2 * q),
            VariableOrder {
                s0,
                s1,
                center,
                width,
                ..
            } => {
                let mid = 0.5 * (x[0] + y[0]);
                let s = s0 + (s1 - s0) * 0.5 * (1.0 + ((mid - center) / width).tanh());
                r.powf(-d - s * q)
            }
            PiecewiseRegion {
                region, s_in, s_out, ..
            } => {
                let inside = |p: &[f64]| {
                    p.iter()
                        .zip(region)
                        .all(|(&c, &[lo, hi])| c >= lo && c <= hi)
                };
                let s = if inside(x) && inside(y) { s_in } else { s_out };
                r.powf(-d - s * q)
            }
            PeriodicLattice { s, cutoff, .. } => {
                let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
                lattice_sum(&diff, s * q, *cutoff)
            }
            NeumannK3 {
                s,
                resolution,
                domain,
            } => {
                if domain.len() != x.len() {
                    return Err(Error::config(
                        "kernel.domain: dimension does not match the evaluation points",
                    ));
                }
                K3Quadrature::for_points(*s, domain, *resolution).value(x, y)
            }
            SpectralNeumannK4 { .. } => {
                return Err(Error::Domain(
                    "the spectral Neumann kernel has no pointwise form; assemble it on a grid"
                        .into(),
                ))
            }
        };
        Ok(self.normalization * raw)
    }

    /// Exponents `α` and coefficients `c` such that, far from `Ω`, the kernel
    /// equals `Σ c |x−y|^{−d−α}` (used for the analytic exterior tail).
    fn far_field(&self) -> Option<Vec<f64>> {
        if self.truncation.is_some() {
            return Some(Vec::new());
        }
        let q = self.q();
        use KernelFamily::*;
        match &self.family {
            PowerGlobal { s, .. } | PowerRegional { s, .. } => Some(vec![s * q]),
            SumPower { s1, s2, .. } => Some(vec![s1 * q, s2 * q]),
            PiecewiseRegion { s_out, .. } => Some(vec![s_out * q]),
            _ => None,
        }
    }
}

/// Pair weights `W_ij ≈ K(x_i,x_j) w_i w_j` (zero diagonal) and killing
/// weights `ω_i ≈ ∫_{ℝ^d∖Ω} K(x_i,y) + K(y,x_i) dy` of a kernel on a grid.
#[derive(Clone, Debug)]
pub struct KernelMatrix {
    pair_weights: DMatrix<f64>,
    killing: DVector<f64>,
    weights: DVector<f64>,
    mode: Mode,
    spec: Option<KernelSpec>,
    label: String,
}

/// Boundary closure of the nearest-neighbour (local) interaction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StencilClosure {
    Dirichlet,
    Neumann,
}

impl KernelMatrix {
    /// Assembles `spec` on `grid` in the given mode.
    pub fn assemble(spec: &KernelSpec, grid: &Grid, mode: Mode) -> Result<Self> {
        spec.validate()?;
        check_mode(spec, grid, mode)?;
        if let KernelFamily::SpectralNeumannK4 { .. } = spec.family {
            return spectral_assemble_k4(spec, grid);
        }
        let n = grid.len();
        let w = grid.weights();
        let cached = match &spec.family {
            KernelFamily::NeumannK3 {
                s,
                resolution,
                domain,
            } => Cached::K3(K3Quadrature::for_grid(*s, domain, *resolution, grid)?),
            KernelFamily::PeriodicLattice { s, q, cutoff } => Cached::Lattice(
                lattice::OffsetTable::new(grid.dim(), grid.n_per_axis(), grid.spacing(), s * q, *cutoff),
            ),
            _ => Cached::None,
        };
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let xi = grid.node(i);
                (i + 1..n)
                    .map(|j| {
                        let xj = grid.node(j);
                        let r = distance(xi, xj);
                        let k = if spec.truncation.is_some_and(|c| r >= c) {
                            0.0
                        } else {
                            match &cached {
                                Cached::K3(table) => spec.normalization * table.value_at_nodes(i, j, r),
                                Cached::Lattice(table) => spec.normalization * table.get(i, j),
                                Cached::None => {
                                    let kij = spec.eval(xi, xj).expect("distinct nodes");
                                    if spec.symmetric {
                                        kij
                                    } else {
                                        0.5 * (kij + spec.eval(xj, xi).expect("distinct nodes"))
                                    }
                                }
                            }
                        };
                        k * w[i] * w[j]
                    })
                    .collect()
            })
            .collect();
        let mut pair = DMatrix::zeros(n, n);
        for (i, row) in rows.iter().enumerate() {
            for (off, &v) in row.iter().enumerate() {
                let j = i + 1 + off;
                pair[(i, j)] = v;
                pair[(j, i)] = v;
            }
        }
        if !spec.symmetric {
            // Non-symmetric kernels keep both orientations.
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        pair[(i, j)] =
                            spec.eval(grid.node(i), grid.node(j)).expect("distinct nodes") * w[i] * w[j];
                    }
                }
            }
        }

        let killing = if mode == Mode::Dirichlet {
            killing_weights(spec, grid)?
        } else {
            DVector::zeros(n)
        };
        Ok(Self {
            pair_weights: pair,
            killing,
            weights: grid.weights_vector(),
            mode,
            spec: Some(spec.clone()),
            label: family_label(&spec.family).to_string(),
        })
    }

    /// Nearest-neighbour weights reproducing the local energy `(scale/2)∫|∇u|²`
    /// with the standard second-order stencil (ghost-point closure at the
    /// boundary for `Dirichlet`).
    pub fn stencil(grid: &Grid, scale: f64, closure: StencilClosure) -> Result<Self> {
        if !grid.is_box() {
            return Err(Error::config("stencil operators need a box grid"));
        }
        let n = grid.len();
        let m = grid.n_per_axis();
        let mut pair = DMatrix::zeros(n, n);
        let mut killing = DVector::zeros(n);
        let w = grid.weights();
        let dim = grid.dim();
        let index = |i: usize, j: usize| grid.tensor_index(&[i, j]);
        let ys = if dim == 1 { 1 } else { m };
        for jy in 0..ys {
            for ix in 0..m {
                let k = index(ix, jy);
                for axis in 0..dim {
                    let h = grid.spacing()[axis];
                    let pos = if axis == 0 { ix } else { jy };
                    let coupling = scale * w[k] / (2.0 * h * h);
                    if pos + 1 < m {
                        let nb = if axis == 0 { index(ix + 1, jy) } else { index(ix, jy + 1) };
                        pair[(k, nb)] = coupling;
                        pair[(nb, k)] = coupling;
                    }
                    if closure == StencilClosure::Dirichlet {
                        let faces = usize::from(pos == 0) + usize::from(pos + 1 == m);
                        killing[k] += faces as f64 * 2.0 * scale / (h * h);
                    }
                }
            }
        }
        let (mode, label) = match closure {
            StencilClosure::Dirichlet => (Mode::Dirichlet, "stencil_dirichlet"),
            StencilClosure::Neumann => (Mode::Regional, "stencil_neumann"),
        };
        Ok(Self {
            pair_weights: pair,
            killing,
            weights: grid.weights_vector(),
            mode,
            spec: None,
            label: label.to_string(),
        })
    }

    pub(crate) fn from_parts(
        pair_weights: DMatrix<f64>,
        killing: DVector<f64>,
        weights: DVector<f64>,
        mode: Mode,
        spec: Option<KernelSpec>,
        label: &str,
    ) -> Self {
        Self {
            pair_weights,
            killing,
            weights,
            mode,
            spec,
            label: label.to_string(),
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn pair_weights(&self) -> &DMatrix<f64> {
        &self.pair_weights
    }

    pub fn killing(&self) -> &DVector<f64> {
        &self.killing
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn spec(&self) -> Option<&KernelSpec> {
        self.spec.as_ref()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// `max_ij |W_ij − W_ji|`.
    pub fn symmetry_defect(&self) -> f64 {
        let w = &self.pair_weights;
        let mut defect: f64 = 0.0;
        for i in 0..w.nrows() {
            for j in i + 1..w.ncols() {
                defect = defect.max((w[(i, j)] - w[(j, i)]).abs());
            }
        }
        defect
    }

    /// The same kernel multiplied by `c > 0`.
    /// Sum of two kernels assembled on the same grid and in the same mode.
    pub fn plus(&self, other: &KernelMatrix) -> Result<Self> {
        if self.len() != other.len() || self.mode != other.mode {
            return Err(Error::Precondition(format!(
                "cannot add kernels {} and {}: grid or mode differs",
                self.label, other.label
            )));
        }
        Ok(Self {
            pair_weights: &self.pair_weights + &other.pair_weights,
            killing: &self.killing + &other.killing,
            label: format!("{}+{}", self.label, other.label),
            ..self.clone()
        })
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            pair_weights: &self.pair_weights * c,
            killing: &self.killing * c,
            ..self.clone()
        }
    }

    /// Matrix of the quadratic form `∬_{Q(Ω)} |u(x) − u(y)|² K`, i.e. the
    /// Hessian of the `q = 2` energy with `Φ(r) = r²/2`: the graph Laplacian
    /// of `W + Wᵀ` plus the diagonal killing term `ω_i w_i`.
    pub fn quadratic_matrix(&self) -> DMatrix<f64> {
        let w = &self.pair_weights;
        let n = w.nrows();
        let mut a = -(w + w.transpose());
        for i in 0..n {
            let row: f64 = w.row(i).sum() + w.column(i).sum();
            a[(i, i)] = row + self.killing[i] * self.weights[i];
        }
        a
    }

    /// `‖u‖_{K,q}^q = Σ_{i≠j} |u_i − u_j|^q W_ij + Σ_i |u_i|^q ω_i w_i`.
    pub fn seminorm_pow(&self, u: &Field, q: f64) -> f64 {
        let n = self.len();
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                let wij = self.pair_weights[(i, j)];
                if wij != 0.0 {
                    total += (u[i] - u[j]).abs().powf(q) * wij;
                }
            }
            total += u[i].abs().powf(q) * self.killing[i] * self.weights[i];
        }
        total
    }
}

enum Cached {
    None,
    K3(K3Quadrature),
    Lattice(lattice::OffsetTable),
}

fn family_label(f: &KernelFamily) -> &'static str {
    use KernelFamily::*;
    match f {
        PowerGlobal { .. } => "power_global",
        PowerRegional { .. } => "power_regional",
        SumPower { .. } => "sum_power",
        VariableOrder { .. } => "variable_order",
        PiecewiseRegion { .. } => "piecewise_region",
        PeriodicLattice { .. } => "periodic_lattice",
        NeumannK3 { .. } => "neumann_k3",
        SpectralNeumannK4 { .. } => "spectral_neumann_k4",
    }
}

fn check_mode(spec: &KernelSpec, grid: &Grid, mode: Mode) -> Result<()> {
    use KernelFamily::*;
    let ok = spec.supports_mode(mode);
    if !ok {
        return Err(Error::config(format!(
            "kernel.mode: {mode:?} is incompatible with kernel.family = {}",
            family_label(&spec.family)
        )));
    }
    if mode == Mode::Dirichlet {
        if !grid.is_box() {
            return Err(Error::config(
                "kernel.mode: dirichlet kernels need a box grid with an exterior annulus",
            ));
        }
        if spec.far_field().is_none() && grid.ext_radius() <= 0.0 {
            return Err(Error::config(
                "grid.ext_radius: kernels without a power-law tail need a positive exterior radius",
            ));
        }
    }
    if let PeriodicLattice { .. } = spec.family {
        let unit = grid.is_box() && grid.bounds().iter().all(|&[lo, hi]| lo == 0.0 && hi == 1.0);
        if !unit {
            return Err(Error::config(
                "kernel.family: periodic_lattice requires grid.box = unit box",
            ));
        }
    }
    if let NeumannK3 { domain, .. } = &spec.family {
        if domain.as_slice() != grid.bounds() || !grid.is_box() {
            return Err(Error::config(
                "kernel.domain: neumann_k3 domain must equal the grid box",
            ));
        }
    }
    Ok(())
}

/// Killing weights by exterior-annulus quadrature plus the analytic tail of
/// the far-field power laws.
fn killing_weights(spec: &KernelSpec, grid: &Grid) -> Result<DVector<f64>> {
    let far = spec.far_field();
    let n = grid.len();
    let values: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = grid.node(i);
            let mut total = 0.0;
            for (e, &we) in grid.ext_weights().iter().enumerate() {
                let y = grid.ext_node(e);
                let k = spec.eval(xi, y).expect("exterior nodes are off the grid");
                let k = if spec.symmetric {
                    2.0 * k
                } else {
                    k + spec.eval(y, xi).expect("exterior nodes are off the grid")
                };
                total += k * we;
            }
            if let Some(exponents) = &far {
                for &alpha in exponents {
                    total += 2.0 * spec.normalization * grid.power_tail(xi, alpha);
                }
            }
            total
        })
        .collect();
    Ok(DVector::from_vec(values))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid1(n: usize) -> Grid {
        Grid::build(1, &[[0.0, 1.0]], n, 1.0, 2).unwrap()
    }

    #[test]
    fn regional_power_value() {
        let spec = KernelSpec::power_regional(0.5, 2.0);
        assert_eq!(spec.eval(&[0.25], &[0.75]).unwrap(), 4.0);
        assert!(matches!(spec.eval(&[0.3], &[0.3]), Err(Error::Domain(_))));
    }

    #[test]
    fn two_node_regional_matrix() {
        let g = Grid::build(1, &[[0.0, 1.0]], 2, 0.0, 1).unwrap();
        let km = KernelMatrix::assemble(&KernelSpec::power_regional(0.5, 2.0), &g, Mode::Regional)
            .unwrap();
        assert_eq!(km.pair_weights()[(0, 1)], 1.0);
        assert_eq!(km.pair_weights()[(1, 0)], 1.0);
        assert_eq!(km.pair_weights()[(0, 0)], 0.0);
        assert_eq!(km.killing().iter().sum::<f64>(), 0.0);
    }

    #[test]
    fn diagonal_is_excluded_for_every_family() {
        let g = grid1(8);
        let specs = [
            (KernelSpec::power_global(0.4, 2.0), Mode::Dirichlet),
            (KernelSpec::power_regional(0.4, 3.0), Mode::Regional),
            (KernelSpec::periodic_lattice(0.4, 2.0), Mode::Periodic),
            (KernelSpec::neumann_k3(0.4, &[[0.0, 1.0]]), Mode::Regional),
            (KernelSpec::spectral_k4(0.4), Mode::Regional),
            (
                KernelSpec::new(KernelFamily::SumPower { s1: 0.2, s2: 0.6, q: 2.0 }),
                Mode::Dirichlet,
            ),
        ];
        for (spec, mode) in specs {
            let km = KernelMatrix::assemble(&spec, &g, mode).unwrap();
            for i in 0..g.len() {
                assert_eq!(km.pair_weights()[(i, i)], 0.0, "{}", km.label());
            }
            assert!(km.pair_weights().iter().all(|&w| w >= 0.0), "{}", km.label());
            assert_eq!(km.symmetry_defect(), 0.0);
        }
    }

    #[test]
    fn incompatible_mode_is_rejected() {
        let g = grid1(4);
        let err = KernelMatrix::assemble(&KernelSpec::power_global(0.5, 2.0), &g, Mode::Regional)
            .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(
            KernelMatrix::assemble(&KernelSpec::power_regional(0.5, 2.0), &g, Mode::Dirichlet)
                .is_err()
        );
        let off_unit = Grid::build(1, &[[0.0, 2.0]], 4, 0.0, 1).unwrap();
        assert!(KernelMatrix::assemble(
            &KernelSpec::periodic_lattice(0.5, 2.0),
            &off_unit,
            Mode::Periodic
        )
        .is_err());
    }

    #[test]
    fn killing_weight_is_largest_next_to_the_boundary() {
        let g = grid1(16);
        let km = KernelMatrix::assemble(&KernelSpec::power_global(0.5, 2.0), &g, Mode::Dirichlet)
            .unwrap();
        let k = km.killing();
        assert!(k[0] > k[8] && k[15] > k[8]);
        assert!(k.iter().all(|&w| w > 0.0));
    }

    #[test]
    fn killing_weights_approach_the_exact_exterior_integral() {
        // ω(x) = 2 ∫_{ℝ∖(0,1)} |x−y|^{−2} dy = 2(1/x + 1/(1−x)) for s = 1/2, q = 2.
        let g = Grid::build(1, &[[0.0, 1.0]], 8, 1.0, 64).unwrap();
        let km = KernelMatrix::assemble(&KernelSpec::power_global(0.5, 2.0), &g, Mode::Dirichlet)
            .unwrap();
        let x = g.node(3)[0];
        let exact = 2.0 * (1.0 / x + 1.0 / (1.0 - x));
        assert!((km.killing()[3] - exact).abs() / exact < 5e-3);
    }

    #[test]
    fn stencil_reproduces_second_difference() {
        let g = Grid::build(1, &[[0.0, 1.0]], 4, 0.0, 1).unwrap();
        let km = KernelMatrix::stencil(&g, 1.0, StencilClosure::Dirichlet).unwrap();
        let a = km.quadratic_matrix();
        let h: f64 = 0.25;
        // interior column 2: w·(−1, 2, −1)/h² = (−1, 2, −1)/h
        assert!((a[(1, 2)] + 1.0 / h).abs() < 1e-12);
        assert!((a[(2, 2)] - 2.0 / h).abs() < 1e-12);
        assert!((a[(3, 2)] + 1.0 / h).abs() < 1e-12);
        // ghost-point closure at the boundary node
        assert!((a[(0, 0)] - 3.0 / h).abs() < 1e-12);
        let neu = KernelMatrix::stencil(&g, 1.0, StencilClosure::Neumann).unwrap();
        let ones = DVector::from_element(4, 1.0);
        assert!((neu.quadratic_matrix() * ones).amax() < 1e-12);
    }

    #[test]
    fn scaling_multiplies_weights_exactly() {
        let g = grid1(6);
        let km = KernelMatrix::assemble(&KernelSpec::power_global(0.3, 2.0), &g, Mode::Dirichlet)
            .unwrap();
        let c = 3.0;
        let direct = KernelMatrix::assemble(
            &KernelSpec::power_global(0.3, 2.0).with_normalization(c),
            &g,
            Mode::Dirichlet,
        )
        .unwrap();
        let scaled = km.scaled(c);
        for (a, b) in direct.pair_weights().iter().zip(scaled.pair_weights().iter()) {
            assert!((a - b).abs() <= 1e-14 * a.abs());
        }
        for (a, b) in direct.killing().iter().zip(scaled.killing().iter()) {
            assert!((a - b).abs() <= 1e-14 * a.abs());
        }
    }

    #[test]
    fn truncated_kernel_vanishes_beyond_cutoff() {
        let spec = KernelSpec::power_regional(0.5, 2.0).with_truncation(0.3);
        assert_eq!(spec.eval(&[0.0], &[0.5]).unwrap(), 0.0);
        assert!(spec.eval(&[0.0], &[0.2]).unwrap() > 0.0);
    }

    #[test]
    fn validation_reports_every_bad_field() {
        let mut spec = KernelSpec::power_global(1.5, 1.0);
        spec.ellipticity = 0.5;
        match spec.validate().unwrap_err() {
            Error::Config(errs) => assert_eq!(errs.len(), 3, "{errs:?}"),
            e => panic!("unexpected {e}"),
        }
    }
}
