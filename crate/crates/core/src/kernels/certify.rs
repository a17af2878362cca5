//! Admissibility checks: the singularity lower bound, integrability of the
//! renormalized kernel, finiteness of Lipschitz energies and the two-sided
//! estimate of the Neumann kernel.

use rayon::prelude::*;
use serde::Serialize;

use super::{lattice, KernelFamily, KernelMatrix, KernelSpec, Mode};
use crate::grid::{distance, Grid};
use crate::{Error, Result};

#[derive(Clone, Debug, Serialize)]
pub struct SingularityReport {
    /// Order `s` used in `K(x,y)|x−y|^{d+sq}`.
    pub order: f64,
    pub samples: usize,
    /// Minimum of `K(x,y)|x−y|^{d+sq}` over the sampled pairs with `|x−y| < ϱ`.
    pub margin: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Checks `K(x,y)|x−y|^{d+sq} ≥ 1/Λ` on up to `samples` node pairs closer than `ϱ`.
pub fn check_singularity(spec: &KernelSpec, grid: &Grid, samples: usize) -> Result<SingularityReport> {
    if samples == 0 {
        return Err(Error::Precondition("singularity check needs at least one sample".into()));
    }
    let n = grid.len();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .filter(|&(i, j)| grid.pairwise_distance(i, j) < spec.rho)
        .collect();
    let stride = (pairs.len() / samples).max(1);
    let chosen: Vec<(usize, usize)> = pairs.into_iter().step_by(stride).take(samples).collect();
    let assembled = match spec.family {
        KernelFamily::NeumannK3 { .. } | KernelFamily::SpectralNeumannK4 { .. } => {
            Some(KernelMatrix::assemble(spec, grid, Mode::Regional)?)
        }
        _ => None,
    };
    let d = grid.dim() as f64;
    let order = spec.certification_order();
    let exponent = d + order * spec.q();
    let w = grid.weights();
    let margin = chosen
        .par_iter()
        .map(|&(i, j)| {
            let r = grid.pairwise_distance(i, j);
            let k = match &assembled {
                Some(km) => km.pair_weights()[(i, j)] / (w[i] * w[j]),
                None => spec.eval(grid.node(i), grid.node(j)).expect("distinct nodes"),
            };
            k * r.powf(exponent)
        })
        .reduce(|| f64::INFINITY, f64::min);
    let threshold = 1.0 / spec.ellipticity - 1e-9;
    Ok(SingularityReport {
        order,
        samples: chosen.len(),
        margin,
        threshold,
        pass: !chosen.is_empty() && margin >= threshold,
    })
}

/// Which renormalized double integral an integrability check estimates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "scope")]
pub enum IntegrabilityScope {
    /// `∬_{Ω²} |x−y|^q K`.
    Regional,
    /// `∫_{Ω′}∫_Ω |x−y|^q K` with `Ω′ = {x : dist(x, ∂Ω) ≥ delta}`.
    Local { delta: f64 },
    /// `∬_{Q(Ω)} min{1, |x−y|^q} K` including the exterior of `Ω`.
    Dirichlet,
}

/// Convergence judgement of a sequence of estimates on refined grids.
#[derive(Clone, Debug, Serialize)]
pub struct RefinementVerdict {
    /// Geometric (Aitken) extrapolation of the last three estimates.
    pub extrapolated: f64,
    /// Ratio of the last two successive differences.
    pub ratio: f64,
    /// Relative change between the last two extrapolations.
    pub relative_change: f64,
    pub pass: bool,
}

/// Estimates converge when successive differences contract (`|ρ| < 1`) and
/// the extrapolated limits of the last two refinements agree to `1e−3`.
pub fn refinement_verdict(estimates: &[f64]) -> RefinementVerdict {
    let fail = RefinementVerdict {
        extrapolated: estimates.last().copied().unwrap_or(f64::NAN),
        ratio: f64::NAN,
        relative_change: f64::INFINITY,
        pass: false,
    };
    if estimates.len() < 4 || estimates.iter().any(|e| !e.is_finite()) {
        return fail;
    }
    let extrapolate = |e: &[f64]| -> (f64, f64) {
        let (a, b, c) = (e[0], e[1], e[2]);
        let (d1, d2) = (b - a, c - b);
        if d2 == 0.0 {
            return (c, 0.0);
        }
        if d1 == 0.0 {
            return (c, f64::INFINITY);
        }
        let rho = d2 / d1;
        (c + d2 * rho / (1.0 - rho), rho)
    };
    let k = estimates.len();
    let (x_prev, rho_prev) = extrapolate(&estimates[k - 4..k - 1]);
    let (x_last, rho) = extrapolate(&estimates[k - 3..]);
    let scale = x_last.abs().max(f64::MIN_POSITIVE);
    let relative_change = (x_last - x_prev).abs() / scale;
    let contracting = rho.abs() < 1.0 && rho_prev.abs() < 1.0;
    // A steady geometric rate well below one also certifies slow (low-order) convergence.
    let steady = rho > 0.0 && rho <= 0.9 && (rho - rho_prev).abs() < 0.05;
    RefinementVerdict {
        extrapolated: x_last,
        ratio: rho,
        relative_change,
        pass: contracting && (relative_change < 1e-3 || steady),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct IntegrabilityReport {
    pub scope: IntegrabilityScope,
    pub resolutions: Vec<usize>,
    pub estimates: Vec<f64>,
    #[serde(flatten)]
    pub verdict: RefinementVerdict,
}

/// Quadrature estimates of the renormalized kernel integral on `levels`
/// successive doublings of `grid`; divergence is reported, not raised.
pub fn check_integrability(
    spec: &KernelSpec,
    grid: &Grid,
    scope: IntegrabilityScope,
    levels: usize,
) -> Result<IntegrabilityReport> {
    spec.validate()?;
    if levels < 4 {
        return Err(Error::Precondition("integrability needs at least four refinement levels".into()));
    }
    let mut resolutions = Vec::new();
    let mut estimates = Vec::new();
    for level in 0..levels {
        let g = grid.refined(1 << level, 2)?;
        resolutions.push(g.n_per_axis());
        estimates.push(integral_estimate(spec, &g, scope)?);
    }
    let verdict = refinement_verdict(&estimates);
    Ok(IntegrabilityReport {
        scope,
        resolutions,
        estimates,
        verdict,
    })
}

/// Pointwise kernel on node pairs, using offset tables where the kernel is
/// translation invariant.
enum PairKernel<'a> {
    Offsets { table: Vec<f64>, n: usize, dim: usize },
    Lattice(lattice::OffsetTable, f64),
    Assembled(KernelMatrix),
    Direct(&'a KernelSpec),
}

impl PairKernel<'_> {
    fn build<'a>(spec: &'a KernelSpec, grid: &Grid) -> Result<PairKernel<'a>> {
        use KernelFamily::*;
        Ok(match &spec.family {
            PeriodicLattice { s, q, cutoff } => PairKernel::Lattice(
                lattice::OffsetTable::new(grid.dim(), grid.n_per_axis(), grid.spacing(), s * q, *cutoff),
                spec.normalization,
            ),
            NeumannK3 { .. } | SpectralNeumannK4 { .. } => {
                PairKernel::Assembled(KernelMatrix::assemble(spec, grid, Mode::Regional)?)
            }
            PowerGlobal { .. } | PowerRegional { .. } | SumPower { .. } if grid.is_box() => {
                let n = grid.n_per_axis();
                let span = 2 * n - 1;
                let dim = grid.dim();
                let h = grid.spacing().to_vec();
                let count = if dim == 1 { span } else { span * span };
                let table = (0..count)
                    .into_par_iter()
                    .map(|k| {
                        let (a, b) = (k % span, k / span);
                        let dx = (a as f64 - (n - 1) as f64) * h[0];
                        let offset = if dim == 1 {
                            vec![dx]
                        } else {
                            vec![dx, (b as f64 - (n - 1) as f64) * h[1]]
                        };
                        let origin = vec![0.0; dim];
                        if offset.iter().all(|&c| c == 0.0) {
                            0.0
                        } else {
                            spec.eval(&offset, &origin).expect("nonzero offset")
                        }
                    })
                    .collect();
                PairKernel::Offsets { table, n, dim }
            }
            _ => PairKernel::Direct(spec),
        })
    }

    fn get(&self, grid: &Grid, i: usize, j: usize) -> f64 {
        match self {
            PairKernel::Offsets { table, n, dim } => {
                let span = 2 * n - 1;
                if *dim == 1 {
                    table[i + n - 1 - j]
                } else {
                    let (ix, iy) = (i % n, i / n);
                    let (jx, jy) = (j % n, j / n);
                    table[(ix + n - 1 - jx) + (iy + n - 1 - jy) * span]
                }
            }
            PairKernel::Lattice(t, c) => c * t.get(i, j),
            PairKernel::Assembled(km) => {
                km.pair_weights()[(i, j)] / (grid.weights()[i] * grid.weights()[j])
            }
            PairKernel::Direct(spec) => spec.eval(grid.node(i), grid.node(j)).expect("distinct nodes"),
        }
    }
}

fn integral_estimate(spec: &KernelSpec, grid: &Grid, scope: IntegrabilityScope) -> Result<f64> {
    let q = spec.q();
    let kernel = PairKernel::build(spec, grid)?;
    let w = grid.weights();
    let n = grid.len();
    let weight = |r: f64| match scope {
        IntegrabilityScope::Dirichlet => r.powf(q).min(1.0),
        _ => r.powf(q),
    };
    let interior: f64 = (0..n)
        .into_par_iter()
        .filter(|&i| match scope {
            IntegrabilityScope::Local { delta } => grid.dist_to_boundary(grid.node(i)) >= delta,
            _ => true,
        })
        .map(|i| {
            let mut row = 0.0;
            for j in 0..n {
                if j != i {
                    let r = grid.pairwise_distance(i, j);
                    row += weight(r) * kernel.get(grid, i, j) * w[j];
                }
            }
            row * w[i]
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    if scope != IntegrabilityScope::Dirichlet {
        return Ok(interior);
    }
    let far = spec.far_field();
    let exterior: f64 = (0..n)
        .into_par_iter()
        .map(|i| {
            let x = grid.node(i);
            let mut row = 0.0;
            for (e, &we) in grid.ext_weights().iter().enumerate() {
                let y = grid.ext_node(e);
                let k = spec.eval(x, y).expect("exterior node") + spec.eval(y, x).expect("exterior node");
                row += weight(distance(x, y)) * k * we;
            }
            if let Some(exponents) = &far {
                for &alpha in exponents {
                    row += 2.0 * spec.normalization * grid.power_tail(x, alpha);
                }
            }
            row * w[i]
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    Ok(interior + exterior)
}

/// `∬_{Q(Ω)} |u(x) − u(y)|^q K` for `u` defined on all of `ℝ^d`, by pair,
/// exterior-annulus and analytic-tail quadrature; `far_value` is the value
/// `u` takes beyond the annulus.
pub fn discrete_seminorm(
    spec: &KernelSpec,
    grid: &Grid,
    u: &(dyn Fn(&[f64]) -> f64 + Sync),
    far_value: f64,
) -> Result<f64> {
    let q = spec.q();
    let kernel = PairKernel::build(spec, grid)?;
    let w = grid.weights();
    let n = grid.len();
    let values: Vec<f64> = (0..n).map(|i| u(grid.node(i))).collect();
    let interior: f64 = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut row = 0.0;
            for j in 0..n {
                if j != i {
                    let diff = (values[i] - values[j]).abs();
                    if diff > 0.0 {
                        row += diff.powf(q) * kernel.get(grid, i, j) * w[j];
                    }
                }
            }
            row * w[i]
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    let far = spec.far_field().unwrap_or_default();
    let exterior: f64 = (0..n)
        .into_par_iter()
        .map(|i| {
            let x = grid.node(i);
            let mut row = 0.0;
            for (e, &we) in grid.ext_weights().iter().enumerate() {
                let y = grid.ext_node(e);
                let diff = (values[i] - u(y)).abs();
                if diff > 0.0 {
                    let k = spec.eval(x, y).expect("exterior node") + spec.eval(y, x).expect("exterior node");
                    row += diff.powf(q) * k * we;
                }
            }
            let diff = (values[i] - far_value).abs();
            if diff > 0.0 {
                for &alpha in &far {
                    row += 2.0 * diff.powf(q) * spec.normalization * grid.power_tail(x, alpha);
                }
            }
            row * w[i]
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    Ok(interior + exterior)
}

#[derive(Clone, Debug, Serialize)]
pub struct LipschitzField {
    pub name: String,
    pub estimates: Vec<f64>,
    #[serde(flatten)]
    pub verdict: RefinementVerdict,
}

#[derive(Clone, Debug, Serialize)]
pub struct LipschitzReport {
    pub resolutions: Vec<usize>,
    pub fields: Vec<LipschitzField>,
    pub pass: bool,
}

/// Energies of bounded Lipschitz test fields on refined grids; PASS iff all
/// are finite and converge.
///
/// The fields are the coordinate functions clamped to `[−(R+1), R+1]`
/// (`R` bounding `Ω` and its annulus) and a hat function supported in `Ω`.
pub fn lipschitz_energy_check(spec: &KernelSpec, grid: &Grid, levels: usize) -> Result<LipschitzReport> {
    spec.validate()?;
    if spec.is_regional_family() {
        return Err(Error::Precondition("Lipschitz energy check needs a dirichlet kernel".into()));
    }
    if levels < 4 {
        return Err(Error::Precondition("Lipschitz check needs at least four refinement levels".into()));
    }
    let bounds = grid.bounds().to_vec();
    let reach = bounds
        .iter()
        .map(|[a, b]| a.abs().max(b.abs()))
        .fold(0.0, f64::max)
        + grid.ext_radius();
    let cap = reach + 1.0;
    let center: Vec<f64> = bounds.iter().map(|[a, b]| 0.5 * (a + b)).collect();
    let radius = bounds.iter().map(|[a, b]| 0.5 * (b - a)).fold(f64::INFINITY, f64::min);

    type TestField = (String, Box<dyn Fn(&[f64]) -> f64 + Sync>, f64);
    let mut fields: Vec<TestField> = (0..grid.dim())
        .map(|axis| {
            let f: Box<dyn Fn(&[f64]) -> f64 + Sync> = Box::new(move |x: &[f64]| x[axis].clamp(-cap, cap));
            (format!("clamped_coordinate_{axis}"), f, 0.0)
        })
        .collect();
    let hat_center = center.clone();
    fields.push((
        "hat".to_string(),
        Box::new(move |x: &[f64]| (1.0 - distance(x, &hat_center) / radius).max(0.0)),
        0.0,
    ));

    let mut resolutions = Vec::new();
    let mut estimates = vec![Vec::new(); fields.len()];
    for level in 0..levels {
        let g = grid.refined(1 << level, 2)?;
        resolutions.push(g.n_per_axis());
        for (k, (_, f, far)) in fields.iter().enumerate() {
            // Beyond the annulus the clamped coordinate is at most `cap` in modulus;
            // the midpoint value 0 keeps the tail contribution resolution independent.
            estimates[k].push(discrete_seminorm(spec, &g, f.as_ref(), *far)?);
        }
    }
    let fields: Vec<LipschitzField> = fields
        .into_iter()
        .zip(estimates)
        .map(|((name, _, _), estimates)| {
            let verdict = refinement_verdict(&estimates);
            LipschitzField {
                name,
                estimates,
                verdict,
            }
        })
        .collect();
    let pass = fields.iter().all(|f| f.verdict.pass);
    Ok(LipschitzReport {
        resolutions,
        fields,
        pass,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SandwichReport {
    /// `min K/g` and `max K/g` on the calibration grid.
    pub fitted_lower: f64,
    pub fitted_upper: f64,
    /// Extremes of `K/g` on the check grid.
    pub observed_lower: f64,
    pub observed_upper: f64,
    /// Slack applied to the fitted constants on the check grid.
    pub slack: f64,
    pub pairs: usize,
    pub pass: bool,
}

/// Reference profile `(1 + log⁻(d_{x,y}/|x−y|)) |x−y|^{−d−2s}` of the
/// two-sided Neumann kernel estimate, `d_{x,y} = min(dist(x,∂Ω), dist(y,∂Ω))`.
pub fn k3_reference(grid: &Grid, s: f64, x: &[f64], y: &[f64]) -> f64 {
    let r = distance(x, y);
    let dxy = grid.dist_to_boundary(x).min(grid.dist_to_boundary(y));
    let log_minus = (-(dxy / r).ln()).max(0.0);
    (1.0 + log_minus) * r.powf(-(grid.dim() as f64) - 2.0 * s)
}

fn ratio_extremes(spec: &KernelSpec, grid: &Grid, s: f64) -> Result<(f64, f64, usize)> {
    let km = KernelMatrix::assemble(spec, grid, Mode::Regional)?;
    let w = grid.weights();
    let n = grid.len();
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    let mut pairs = 0;
    for i in 0..n {
        for j in i + 1..n {
            let k = km.pair_weights()[(i, j)] / (w[i] * w[j]) / spec.normalization;
            let ratio = k / k3_reference(grid, s, grid.node(i), grid.node(j));
            lo = lo.min(ratio);
            hi = hi.max(ratio);
            pairs += 1;
        }
    }
    Ok((lo, hi, pairs))
}

/// Fits `c ≤ K/g ≤ C` on `fit_grid` and checks every pair of `check_grid`
/// against `[c/slack, slack·C]`.
pub fn k3_sandwich(spec: &KernelSpec, fit_grid: &Grid, check_grid: &Grid, slack: f64) -> Result<SandwichReport> {
    let KernelFamily::NeumannK3 { s, .. } = spec.family else {
        return Err(Error::config("kernel.family: sandwich check needs neumann_k3"));
    };
    let (fitted_lower, fitted_upper, _) = ratio_extremes(spec, fit_grid, s)?;
    let (observed_lower, observed_upper, pairs) = ratio_extremes(spec, check_grid, s)?;
    let pass = fitted_lower > 0.0
        && fitted_upper.is_finite()
        && observed_lower >= fitted_lower / slack
        && observed_upper <= fitted_upper * slack;
    Ok(SandwichReport {
        fitted_lower,
        fitted_upper,
        observed_lower,
        observed_upper,
        slack,
        pairs,
        pass,
    })
}

/// Certification summary printed by the `kernel-check` command.
#[derive(Clone, Debug, Serialize)]
pub struct KernelReport {
    pub family: String,
    pub singularity: SingularityReport,
    pub integrability: IntegrabilityReport,
    pub symmetry_defect: f64,
    pub pass: bool,
}

impl KernelReport {
    pub fn build(spec: &KernelSpec, grid: &Grid, mode: Mode, samples: usize, levels: usize) -> Result<Self> {
        let km = KernelMatrix::assemble(spec, grid, mode)?;
        let singularity = check_singularity(spec, grid, samples)?;
        let scope = match mode {
            Mode::Dirichlet => IntegrabilityScope::Dirichlet,
            Mode::Periodic => IntegrabilityScope::Local {
                delta: 0.25 * grid.bounds()[0][1].min(1.0),
            },
            Mode::Regional => IntegrabilityScope::Regional,
        };
        let integrability = check_integrability(spec, grid, scope, levels)?;
        let pass = singularity.pass && integrability.verdict.pass;
        Ok(Self {
            family: km.label().to_string(),
            singularity,
            integrability,
            symmetry_defect: km.symmetry_defect(),
            pass,
        })
    }
}
