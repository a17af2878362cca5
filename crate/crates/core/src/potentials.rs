//! Potentials `F = Γ + Π` with a convex, possibly singular part `Γ`, its
//! Moreau–Yosida regularization and the checks on both.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{Check, Report};
use crate::{Error, Result};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
/// `(r, λ) ↦ J_λ(r)`, the resolvent of a custom convex part.
pub type ProxFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Convex part `Γ ≥ 0` with `Γ(0) = 0`.
#[derive(Clone)]
pub enum ConvexPart {
    Zero,
    /// `z²/2`, linear `γ`.
    Quadratic,
    /// `z⁴/4`.
    Quartic,
    /// `(θ/2)((1+z)log(1+z) + (1−z)log(1−z))` on `[−1,1]`, `+∞` outside.
    Logarithmic { theta: f64 },
    /// Indicator of `[−1,1]`.
    Obstacle,
    Custom {
        name: String,
        value: ScalarFn,
        prox: ProxFn,
    },
}

impl fmt::Debug for ConvexPart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConvexPart::Zero => write!(f, "Zero"),
            ConvexPart::Quadratic => write!(f, "Quadratic"),
            ConvexPart::Quartic => write!(f, "Quartic"),
            ConvexPart::Logarithmic { theta } => write!(f, "Logarithmic {{ theta: {theta} }}"),
            ConvexPart::Obstacle => write!(f, "Obstacle"),
            ConvexPart::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

/// Lipschitz part `Π` with `π = Π′`, `π(0) = 0`.
#[derive(Clone)]
pub enum PiPart {
    Zero,
    /// `Π(r) = −κ r²/2`, `π(r) = −κ r`.
    Quadratic { kappa: f64 },
    Custom {
        value: ScalarFn,
        derivative: ScalarFn,
        lipschitz: f64,
    },
}

impl fmt::Debug for PiPart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PiPart::Zero => write!(f, "Zero"),
            PiPart::Quadratic { kappa } => write!(f, "Quadratic {{ kappa: {kappa} }}"),
            PiPart::Custom { lipschitz, .. } => write!(f, "Custom {{ lipschitz: {lipschitz} }}"),
        }
    }
}

/// Lower growth bound `F(r) ≥ −a1|r|^p − a2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Growth {
    pub a1: f64,
    pub a2: f64,
    pub p: f64,
}

/// Closed interval (possibly unbounded) or the empty set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Subdiff {
    Empty,
    Interval { lo: f64, hi: f64 },
}

impl Subdiff {
    pub fn point(v: f64) -> Self {
        Subdiff::Interval { lo: v, hi: v }
    }

    pub fn contains(&self, v: f64, tol: f64) -> bool {
        self.distance(v) <= tol
    }

    /// Distance from `v` to the set (`+∞` for the empty set).
    pub fn distance(&self, v: f64) -> f64 {
        match *self {
            Subdiff::Empty => f64::INFINITY,
            Subdiff::Interval { lo, hi } => (lo - v).max(v - hi).max(0.0),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Potential {
    pub gamma: ConvexPart,
    pub pi: PiPart,
    pub growth: Growth,
    pub name: String,
}

const ROOT_TOL: f64 = 1e-12;
const ROOT_MAX_ITER: usize = 200;

impl Potential {
    pub fn new(name: &str, gamma: ConvexPart, pi: PiPart, growth: Growth) -> Self {
        Self {
            gamma,
            pi,
            growth,
            name: name.to_string(),
        }
    }

    /// `F ≡ 0`.
    pub fn zero() -> Self {
        Self::new("zero", ConvexPart::Zero, PiPart::Zero, Growth { a1: 0.0, a2: 0.0, p: 1.0 })
    }

    /// `¼(1 − z²)² − ¼ = z⁴/4 − z²/2`.
    pub fn polynomial() -> Self {
        Self::new(
            "polynomial",
            ConvexPart::Quartic,
            PiPart::Quadratic { kappa: 1.0 },
            Growth { a1: 0.0, a2: 0.25, p: 1.0 },
        )
    }

    /// Logarithmic double well with `Π(z) = −(θ_c/2) z²`.
    pub fn logarithmic(theta: f64, theta_c: f64) -> Self {
        Self::new(
            "logarithmic",
            ConvexPart::Logarithmic { theta },
            PiPart::Quadratic { kappa: theta_c },
            Growth { a1: 0.0, a2: 0.5 * theta_c, p: 1.0 },
        )
    }

    /// Double obstacle `I_{[−1,1]}(z) − z²/2`.
    pub fn obstacle() -> Self {
        Self::new(
            "obstacle",
            ConvexPart::Obstacle,
            PiPart::Quadratic { kappa: 1.0 },
            Growth { a1: 0.0, a2: 0.5, p: 1.0 },
        )
    }

    /// `Γ = z⁴/4` alone.
    pub fn quartic() -> Self {
        Self::new("quartic", ConvexPart::Quartic, PiPart::Zero, Growth { a1: 0.0, a2: 0.0, p: 1.0 })
    }

    /// `Γ = z²/2` alone.
    pub fn linear() -> Self {
        Self::new("linear", ConvexPart::Quadratic, PiPart::Zero, Growth { a1: 0.0, a2: 0.0, p: 1.0 })
    }

    /// Built-in potential by name; `theta`/`theta_c` only matter for `logarithmic`.
    pub fn by_name(name: &str, theta: f64, theta_c: f64) -> Result<Self> {
        Ok(match name {
            "zero" => Self::zero(),
            "polynomial" | "pol" => Self::polynomial(),
            "logarithmic" | "log" => {
                if !(theta > 0.0 && theta < theta_c) {
                    return Err(Error::Config(vec![format!(
                        "potential.theta, potential.theta_c: need 0 < theta < theta_c, got {theta}, {theta_c}"
                    )]));
                }
                Self::logarithmic(theta, theta_c)
            }
            "obstacle" | "ob" => Self::obstacle(),
            "quartic" => Self::quartic(),
            "linear" => Self::linear(),
            other => {
                return Err(Error::config(format!(
                    "potential.name: unknown potential `{other}` (expected zero, polynomial, logarithmic, obstacle, quartic or linear)"
                )))
            }
        })
    }

    pub fn gamma(&self, r: f64) -> f64 {
        match &self.gamma {
            ConvexPart::Zero => 0.0,
            ConvexPart::Quadratic => 0.5 * r * r,
            ConvexPart::Quartic => 0.25 * r.powi(4),
            ConvexPart::Logarithmic { theta } => {
                let a = r.abs();
                if a > 1.0 {
                    f64::INFINITY
                } else if a == 1.0 {
                    theta * std::f64::consts::LN_2
                } else {
                    0.5 * theta * ((1.0 + r) * r.ln_1p() + (1.0 - r) * (-r).ln_1p())
                }
            }
            ConvexPart::Obstacle => {
                if r.abs() <= 1.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            ConvexPart::Custom { value, .. } => value(r),
        }
    }

    /// Closure of the effective domain of `Γ`.
    pub fn domain(&self) -> (f64, f64) {
        match self.gamma {
            ConvexPart::Logarithmic { .. } | ConvexPart::Obstacle => (-1.0, 1.0),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    /// Whether `m` lies in the interior of the domain of `γ`.
    pub fn in_interior(&self, m: f64) -> bool {
        let (lo, hi) = self.domain();
        m > lo && m < hi
    }

    pub fn pi_value(&self, r: f64) -> f64 {
        match &self.pi {
            PiPart::Zero => 0.0,
            PiPart::Quadratic { kappa } => -0.5 * kappa * r * r,
            PiPart::Custom { value, .. } => value(r),
        }
    }

    /// `π(r) = Π′(r)`.
    pub fn pi_prime(&self, r: f64) -> f64 {
        match &self.pi {
            PiPart::Zero => 0.0,
            PiPart::Quadratic { kappa } => -kappa * r,
            PiPart::Custom { derivative, .. } => derivative(r),
        }
    }

    /// Lipschitz constant `C_π`.
    pub fn c_pi(&self) -> f64 {
        match &self.pi {
            PiPart::Zero => 0.0,
            PiPart::Quadratic { kappa } => kappa.abs(),
            PiPart::Custom { lipschitz, .. } => *lipschitz,
        }
    }

    /// `F = Γ + Π`.
    pub fn value(&self, r: f64) -> f64 {
        self.gamma(r) + self.pi_value(r)
    }

    pub fn subdiff(&self, r: f64) -> Subdiff {
        match &self.gamma {
            ConvexPart::Zero => Subdiff::point(0.0),
            ConvexPart::Quadratic => Subdiff::point(r),
            ConvexPart::Quartic => Subdiff::point(r * r * r),
            ConvexPart::Logarithmic { theta } => {
                if r.abs() < 1.0 {
                    Subdiff::point(theta * r.atanh())
                } else {
                    Subdiff::Empty
                }
            }
            ConvexPart::Obstacle => {
                if r.abs() < 1.0 {
                    Subdiff::point(0.0)
                } else if r == 1.0 {
                    Subdiff::Interval { lo: 0.0, hi: f64::INFINITY }
                } else if r == -1.0 {
                    Subdiff::Interval { lo: f64::NEG_INFINITY, hi: 0.0 }
                } else {
                    Subdiff::Empty
                }
            }
            ConvexPart::Custom { value, .. } => {
                let v = value(r);
                if !v.is_finite() {
                    return Subdiff::Empty;
                }
                let h = 1e-6;
                let left = (v - value(r - h)) / h;
                let right = (value(r + h) - v) / h;
                Subdiff::Interval {
                    lo: if left.is_finite() { left } else { f64::NEG_INFINITY },
                    hi: if right.is_finite() { right } else { f64::INFINITY },
                }
            }
        }
    }

    /// Distance of `(z, v)` from the graph of `∂Γ`, measured vertically and
    /// horizontally (through the inverse graph); the smaller one is returned.
    pub fn graph_defect(&self, z: f64, v: f64) -> f64 {
        let vertical = self.subdiff(z).distance(v);
        let horizontal = match &self.gamma {
            ConvexPart::Zero => {
                if v == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            ConvexPart::Quadratic => (z - v).abs(),
            ConvexPart::Quartic => (z - v.cbrt()).abs(),
            ConvexPart::Logarithmic { theta } => (z - (v / theta).tanh()).abs(),
            ConvexPart::Obstacle => {
                let target = if v > 0.0 {
                    Subdiff::point(1.0)
                } else if v < 0.0 {
                    Subdiff::point(-1.0)
                } else {
                    Subdiff::Interval { lo: -1.0, hi: 1.0 }
                };
                target.distance(z)
            }
            ConvexPart::Custom { .. } => f64::INFINITY,
        };
        vertical.min(horizontal)
    }

    /// `J_λ(r) = (I + λ∂Γ)^{−1}(r)`.
    pub fn resolvent(&self, r: f64, lambda: f64) -> Result<f64> {
        match &self.gamma {
            ConvexPart::Zero => Ok(r),
            ConvexPart::Quadratic => Ok(r / (1.0 + lambda)),
            ConvexPart::Obstacle => Ok(r.clamp(-1.0, 1.0)),
            ConvexPart::Quartic => {
                let (lo, hi) = if r >= 0.0 { (0.0, r) } else { (r, 0.0) };
                monotone_root(|z| (z + lambda * z * z * z - r, 1.0 + 3.0 * lambda * z * z), lo, hi)
            }
            ConvexPart::Logarithmic { theta } => {
                if r == 0.0 {
                    return Ok(0.0);
                }
                let a = r.abs();
                let z = monotone_root(
                    |z| {
                        let g = if z >= 1.0 { f64::INFINITY } else { theta * z.atanh() };
                        (z + lambda * g - a, 1.0 + lambda * theta / (1.0 - z * z))
                    },
                    0.0,
                    a.min(1.0),
                )?;
                Ok(z.copysign(r))
            }
            ConvexPart::Custom { prox, .. } => {
                let z = prox(r, lambda);
                if z.is_finite() {
                    Ok(z)
                } else {
                    Err(Error::numerical("custom prox returned a non-finite value", f64::NAN))
                }
            }
        }
    }

    /// `Γ_λ` and friends at parameter `λ ∈ (0,1)`.
    pub fn regularize(&self, lambda: f64) -> Result<RegularizedPotential> {
        RegularizedPotential::new(self.clone(), lambda)
    }
}

/// Root of an increasing function `h` on `[lo, hi]` with `h(lo) ≤ 0 ≤ h(hi)`
/// by Newton steps safeguarded with bisection.
fn monotone_root(h: impl Fn(f64) -> (f64, f64), mut lo: f64, mut hi: f64) -> Result<f64> {
    if lo == hi {
        return Ok(lo);
    }
    let mut z = 0.5 * (lo + hi);
    let mut last_residual = f64::INFINITY;
    for _ in 0..ROOT_MAX_ITER {
        let (f, df) = h(z);
        if f == 0.0 {
            return Ok(z);
        }
        if f < 0.0 {
            lo = z;
        } else {
            hi = z;
        }
        let tol = ROOT_TOL.max(4.0 * f64::EPSILON * z.abs());
        if hi - lo <= tol {
            return Ok(0.5 * (lo + hi));
        }
        let newton = z - f / df;
        let progressing = f.abs() <= 0.5 * last_residual;
        last_residual = f.abs();
        if newton.is_finite() && newton > lo && newton < hi && progressing {
            if (newton - z).abs() <= tol {
                return Ok(newton);
            }
            z = newton;
        } else {
            z = 0.5 * (lo + hi);
        }
    }
    Err(Error::numerical("resolvent root-finder did not converge", hi - lo))
}

/// The potential at a fixed Moreau–Yosida parameter `λ`.
#[derive(Clone, Debug)]
pub struct RegularizedPotential {
    base: Potential,
    lambda: f64,
}

impl RegularizedPotential {
    pub fn new(base: Potential, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::config(format!("scheme.lambda: must lie in (0,1), got {lambda}")));
        }
        Ok(Self { base, lambda })
    }

    pub fn base(&self) -> &Potential {
        &self.base
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn resolvent(&self, r: f64) -> Result<f64> {
        self.base.resolvent(r, self.lambda)
    }

    /// `γ_λ(r) = (r − J_λ(r))/λ`.
    pub fn yosida(&self, r: f64) -> Result<f64> {
        Ok((r - self.resolvent(r)?) / self.lambda)
    }

    /// `Γ_λ(r) = Γ(J_λ r) + (λ/2)γ_λ(r)²`.
    pub fn moreau(&self, r: f64) -> Result<f64> {
        let j = self.resolvent(r)?;
        let y = (r - j) / self.lambda;
        Ok(self.base.gamma(j) + 0.5 * self.lambda * y * y)
    }

    /// `Γ_λ + Π`.
    pub fn value(&self, r: f64) -> Result<f64> {
        Ok(self.moreau(r)? + self.base.pi_value(r))
    }

    /// `prox_{tΓ_λ}(x) = x + t/(λ+t)·(J_{λ+t}(x) − x)`.
    pub fn prox(&self, x: f64, t: f64) -> Result<f64> {
        let j = self.base.resolvent(x, self.lambda + t)?;
        Ok(x + t / (self.lambda + t) * (j - x))
    }
}

/// Sample points for the invariant checks: 401 equispaced points on `[−4,4]`
/// plus points approaching `±1` from both sides.
pub fn sample_points() -> Vec<f64> {
    let mut r: Vec<f64> = (0..=400).map(|k| -4.0 + 0.02 * k as f64).collect();
    for k in 1..=12 {
        let e = 10f64.powi(-k);
        r.extend([1.0 - e, 1.0 + e, -1.0 + e, -1.0 - e]);
    }
    r.extend([1.0, -1.0, 0.0]);
    r
}

/// The invariant suite of `Γ_λ`, `J_λ`, `γ_λ` and of `Γ`, `π` themselves.
pub fn prox_suite(pot: &Potential, lambdas: &[f64]) -> Result<Report> {
    let mut report = Report::new(format!("potential {}", pot.name));
    let r = sample_points();
    let tol = 1e-9;

    let g0 = pot.gamma(0.0);
    report.push(Check::at_most("gamma_zero_at_origin", g0.abs(), 0.0));
    let min_gamma = r.iter().map(|&x| pot.gamma(x)).fold(f64::INFINITY, f64::min);
    report.push(Check::at_least("gamma_nonnegative", min_gamma, 0.0));
    let mut convexity: f64 = 0.0;
    for w in r.windows(3).step_by(1) {
        let (a, b) = (w[0], w[2]);
        let mid = pot.gamma(0.5 * (a + b));
        let chord = 0.5 * (pot.gamma(a) + pot.gamma(b));
        if mid.is_finite() && chord.is_finite() {
            convexity = convexity.max(mid - chord);
        } else if mid.is_infinite() && chord.is_finite() {
            convexity = f64::INFINITY;
        }
    }
    report.push(Check::at_most("gamma_midpoint_convex", convexity, tol));
    report.push(Check::at_most("pi_zero_at_origin", pot.pi_prime(0.0).abs(), 0.0));
    let mut pi_lip: f64 = 0.0;
    for (k, &a) in r.iter().enumerate() {
        for &b in &r[k + 1..] {
            if (a - b).abs() >= 1e-3 {
                pi_lip = pi_lip.max((pot.pi_prime(a) - pot.pi_prime(b)).abs() / (a - b).abs());
            }
        }
    }
    report.push(Check::at_most("pi_lipschitz", pi_lip, pot.c_pi() * (1.0 + 1e-9) + tol));
    let growth = r
        .iter()
        .map(|&x| -pot.growth.a1 * x.abs().powf(pot.growth.p) - pot.growth.a2 - pot.value(x))
        .fold(f64::NEG_INFINITY, f64::max);
    report.push(Check::at_most("growth_lower_bound", growth, tol));

    for &lambda in lambdas {
        let reg = pot.regularize(lambda)?;
        let tag = |name: &str| format!("{name}[lambda={lambda:e}]");
        let mut j = Vec::with_capacity(r.len());
        let mut y = Vec::with_capacity(r.len());
        let mut m = Vec::with_capacity(r.len());
        for &x in &r {
            j.push(reg.resolvent(x)?);
            y.push(reg.yosida(x)?);
            m.push(reg.moreau(x)?);
        }
        let mut identity: f64 = 0.0;
        let mut minimality: f64 = 0.0;
        let mut below: f64 = 0.0;
        let mut cap: f64 = 0.0;
        let mut pidgeon: f64 = 0.0;
        let mut inclusion: f64 = 0.0;
        let mut derivative: f64 = 0.0;
        for (k, &x) in r.iter().enumerate() {
            let direct = pot.gamma(j[k]) + 0.5 * lambda * y[k] * y[k];
            identity = identity.max((m[k] - direct).abs() / (1.0 + m[k].abs()));
            for z in [j[k] + 1e-3, j[k] - 1e-3, j[k] + 1e-6, j[k] - 1e-6, x, 0.0] {
                let candidate = pot.gamma(z) + (z - x) * (z - x) / (2.0 * lambda);
                minimality = minimality.max((m[k] - candidate) / (1.0 + m[k].abs()));
            }
            let g = pot.gamma(x);
            if g.is_finite() {
                below = below.max(m[k] - g);
            }
            cap = cap.max(m[k] - x * x / (2.0 * lambda) - g0.abs());
            pidgeon = pidgeon.max(
                m[k] + pot.pi_value(x) - g0.abs() - (0.5 * pot.c_pi() + 0.5 / lambda) * x * x,
            );
            inclusion = inclusion.max(pot.graph_defect(j[k], y[k]) / (1.0 + y[k].abs()));
            let h = 1e-6;
            let fd = (reg.moreau(x + h)? - reg.moreau(x - h)?) / (2.0 * h);
            derivative = derivative.max((fd - y[k]).abs() - (h / lambda + 1e-8 * (1.0 + y[k].abs())));
        }
        report.push(Check::at_most(&tag("moreau_identity"), identity, 1e-10));
        report.push(Check::at_most(&tag("moreau_minimality"), minimality, tol));
        report.push(Check::at_most(&tag("envelope_below_gamma"), below, tol));
        report.push(Check::at_most(&tag("quadratic_cap"), cap, tol));
        report.push(Check::at_most(&tag("pidgeon_cap"), pidgeon, tol));
        report.push(Check::at_most(&tag("yosida_in_subdifferential"), inclusion, tol));
        report.push(Check::at_most(&tag("envelope_derivative"), derivative, 0.0));

        let mut expansive: f64 = 0.0;
        let mut lipschitz: f64 = 0.0;
        let mut monotone: f64 = 0.0;
        for a in 0..r.len() {
            for b in (a + 1..r.len()).step_by(7) {
                let dr = (r[a] - r[b]).abs();
                expansive = expansive.max((j[a] - j[b]).abs() - dr);
                lipschitz = lipschitz.max((y[a] - y[b]).abs() - dr / lambda);
                monotone = monotone.max(-(y[a] - y[b]) * (r[a] - r[b]));
            }
        }
        report.push(Check::at_most(&tag("resolvent_nonexpansive"), expansive, tol));
        report.push(Check::at_most(&tag("yosida_lipschitz"), lipschitz, tol));
        report.push(Check::at_most(&tag("yosida_monotone"), monotone, tol));
    }
    Ok(report)
}

/// Fits `α` in `Γ_λ + Π ≥ −αλ^{1/2}r² − a₃|r|^p − β` with `a₃ = a1`,
/// `β = a2` from the growth hypothesis, for each `λ`; PASS iff every `α` is
/// finite and `α` does not grow as `λ` decreases.
pub fn verify_coercivity(pot: &Potential, lambdas: &[f64], r_samples: &[f64]) -> Result<Report> {
    let mut report = Report::new(format!("coercivity {}", pot.name));
    let Growth { a1, a2, p } = pot.growth;
    let mut sorted = lambdas.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut alphas = Vec::new();
    for &lambda in &sorted {
        let reg = pot.regularize(lambda)?;
        let mut alpha: f64 = 0.0;
        for &r in r_samples {
            let deficit = -reg.value(r)? - a1 * r.abs().powf(p) - a2;
            if deficit > 0.0 {
                alpha = alpha.max(if r == 0.0 {
                    f64::INFINITY
                } else {
                    deficit / (lambda.sqrt() * r * r)
                });
            }
        }
        alphas.push(alpha);
        report.push(
            Check::at_most(&format!("alpha_finite[lambda={lambda:e}]"), alpha, f64::MAX)
                .with_value("a3", a1)
                .with_value("beta", a2),
        );
    }
    if let (Some(&first), Some(&last)) = (alphas.first(), alphas.last()) {
        report.push(
            Check::at_most("alpha_bounded_as_lambda_decreases", last, 2.0 * first + 1e-9)
                .with_value("alpha_largest_lambda", first),
        );
    }
    Ok(report)
}

/// Pointwise convergence `Γ_λ → Γ` along a decreasing `λ` sweep.
///
/// Where `Γ(r) < ∞` the gap `Γ(r) − Γ_λ(r)` must shrink monotonically to
/// below `tol·max(1, Γ(r))`; where `Γ(r) = ∞`, `Γ_λ(r)` must increase along
/// the sweep and dominate `dist(r, D(Γ))²/(2λ)`, which exceeds any cap as
/// `λ → 0`. Samples far enough outside for `cap` to be reached at the
/// smallest `λ` must actually exceed it.
pub fn gamma_liminf_check(
    pot: &Potential,
    r_samples: &[f64],
    lambda_sweep: &[f64],
    tol: f64,
    cap: f64,
) -> Result<Report> {
    let mut report = Report::new(format!("gamma-liminf {}", pot.name));
    let mut sweep = lambda_sweep.to_vec();
    sweep.sort_by(|a, b| b.total_cmp(a));
    let regs: Vec<RegularizedPotential> = sweep.iter().map(|&l| pot.regularize(l)).collect::<Result<_>>()?;
    let mut worst_monotone: f64 = 0.0;
    let mut worst_final: f64 = 0.0;
    let mut worst_blowup: f64 = f64::NEG_INFINITY;
    let mut worst_cap: f64 = f64::NEG_INFINITY;
    let mut outside = false;
    let (dlo, dhi) = pot.domain();
    let lambda_min = *sweep.last().unwrap_or(&1.0);
    for &r in r_samples {
        let g = pot.gamma(r);
        let values: Vec<f64> = regs.iter().map(|reg| reg.moreau(r)).collect::<Result<_>>()?;
        if g.is_finite() {
            let gaps: Vec<f64> = values.iter().map(|v| g - v).collect();
            for w in gaps.windows(2) {
                worst_monotone = worst_monotone.max(w[1] - w[0] - 1e-12 * (1.0 + g.abs()));
            }
            let last = gaps.last().copied().unwrap_or(0.0);
            worst_final = worst_final.max(last / g.abs().max(1.0));
        } else {
            outside = true;
            let dist = (dlo - r).max(r - dhi).max(0.0);
            for (k, (&v, &l)) in values.iter().zip(&sweep).enumerate() {
                let bound = dist * dist / (2.0 * l);
                worst_blowup = worst_blowup.max((bound - v) / (1.0 + bound));
                if k > 0 {
                    worst_blowup = worst_blowup.max((values[k - 1] - v) / (1.0 + v.abs()));
                }
            }
            if dist * dist / (2.0 * lambda_min) > cap {
                worst_cap = worst_cap.max(cap - values[values.len() - 1]);
            }
        }
    }
    report.push(Check::at_most("gap_monotone", worst_monotone, 0.0));
    report.push(Check::at_most("gap_below_tolerance", worst_final, tol));
    if outside {
        report.push(Check::at_most("blow_up_outside_domain", worst_blowup, 1e-9));
        if worst_cap.is_finite() {
            report.push(Check::at_most("cap_exceeded", worst_cap, 0.0).with_value("cap", cap));
        }
    } else {
        report.push(Check::skipped("blow_up_outside_domain", "Γ finite at every sample"));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn built_in_values() {
        let ob = Potential::obstacle();
        assert_eq!(ob.gamma(0.5), 0.0);
        assert_eq!(ob.gamma(1.5), f64::INFINITY);
        assert_eq!(Potential::quartic().gamma(2.0), 4.0);
        assert_eq!(Potential::logarithmic(1.0, 3.0).gamma(0.0), 0.0);
        let log = Potential::logarithmic(0.8, 1.6);
        assert!((log.gamma(1.0) - 0.8 * 2f64.ln()).abs() < 1e-15);
        assert!((log.gamma(1.0 - 1e-12) - log.gamma(1.0)).abs() < 1e-9);
        assert_eq!(log.gamma(1.0 + 1e-12), f64::INFINITY);
    }

    #[test]
    fn polynomial_split_reproduces_the_double_well() {
        let p = Potential::polynomial();
        for r in [-2.0, -1.0, -0.3, 0.0, 0.7, 1.0, 3.0] {
            let f: f64 = 0.25 * (1.0 - r * r) * (1.0 - r * r) - 0.25;
            assert!((p.value(r) - f).abs() < 1e-12);
        }
        assert_eq!(p.value(1.0), -0.25);
    }

    #[test]
    fn resolvent_closed_forms() {
        let lin = Potential::linear();
        assert_eq!(lin.resolvent(1.0, 1.0).unwrap(), 0.5);
        let reg = lin.regularize(0.25).unwrap();
        assert!((reg.yosida(1.0).unwrap() - 0.8).abs() < 1e-12);
        for r in [-3.0, 0.2, 5.0] {
            assert!((reg.resolvent(r).unwrap() - r / 1.25).abs() < 1e-12);
            assert!((reg.moreau(r).unwrap() - r * r / (2.0 * 1.25)).abs() < 1e-12);
        }
        let ob = Potential::obstacle();
        assert_eq!(ob.resolvent(3.0, 0.7).unwrap(), 1.0);
        let reg = ob.regularize(0.5).unwrap();
        assert!((reg.yosida(2.0).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(reg.yosida(0.4).unwrap(), 0.0);
        assert!((reg.moreau(2.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quartic_resolvent_matches_bisection() {
        let reg = Potential::quartic().regularize(0.1).unwrap();
        let oracle = bisect(|z| z + 0.1 * z * z * z - 1.0, 0.0, 1.0);
        let j = reg.resolvent(1.0).unwrap();
        assert!((j - oracle).abs() < 1e-12);
        let moreau = reg.moreau(1.0).unwrap();
        let direct = 0.25 * oracle.powi(4) + (oracle - 1.0).powi(2) / 0.2;
        assert!((moreau - direct).abs() < 1e-12);
    }

    #[test]
    fn quartic_envelope_matches_dense_minimization() {
        let reg = Potential::quartic().regularize(0.1).unwrap();
        let objective = |z: f64| 0.25 * z.powi(4) + (z - 1.0).powi(2) / 0.2;
        let (mut lo, mut hi) = (-2.0, 2.0);
        let mut best = f64::INFINITY;
        for _ in 0..6 {
            let step = (hi - lo) / 2000.0;
            let (mut arg, mut val) = (lo, f64::INFINITY);
            for k in 0..=2000 {
                let z = lo + step * k as f64;
                let v = objective(z);
                if v < val {
                    val = v;
                    arg = z;
                }
            }
            best = val;
            lo = arg - 2.0 * step;
            hi = arg + 2.0 * step;
        }
        assert!((reg.moreau(1.0).unwrap() - best).abs() < 1e-12);
    }

    #[test]
    fn logarithmic_resolvent_solves_its_equation() {
        let pot = Potential::logarithmic(0.7, 1.5);
        for &lambda in &[0.1, 1e-3] {
            for r in [-3.0, -0.9, 0.01, 0.5, 0.99, 2.0] {
                let z = pot.resolvent(r, lambda).unwrap();
                let oracle = bisect(|z| z + lambda * 0.7 * z.atanh() - r, -1.0, 1.0);
                assert!((z - oracle).abs() < 1e-12, "r={r} λ={lambda}: {z} vs {oracle}");
            }
        }
        // far outside, J rounds to the endpoint
        let z = pot.resolvent(50.0, 1e-3).unwrap();
        assert!((1.0 - z).abs() <= 1e-12);
        assert!(pot.graph_defect(z, (50.0 - z) / 1e-3) < 1e-9);
    }

    #[test]
    fn subdifferential_intervals() {
        let ob = Potential::obstacle();
        assert_eq!(ob.subdiff(0.3), Subdiff::point(0.0));
        assert_eq!(ob.subdiff(1.0), Subdiff::Interval { lo: 0.0, hi: f64::INFINITY });
        assert_eq!(ob.subdiff(1.2), Subdiff::Empty);
        assert_eq!(Potential::quartic().subdiff(-1.0), Subdiff::point(-1.0));
        assert!(ob.subdiff(1.0).contains(1e9, 0.0));
    }

    #[test]
    fn prox_of_envelope_minimizes_its_objective() {
        let reg = Potential::quartic().regularize(0.05).unwrap();
        let (x, t) = (1.7, 0.3);
        let p = reg.prox(x, t).unwrap();
        let obj = |z: f64| t * reg.moreau(z).unwrap() + 0.5 * (z - x) * (z - x);
        for dz in [1e-4, -1e-4, 1e-2, -1e-2] {
            assert!(obj(p) <= obj(p + dz) + 1e-14);
        }
    }

    #[test]
    fn lambda_outside_unit_interval_is_rejected() {
        assert!(Potential::quartic().regularize(1.0).is_err());
        assert!(Potential::quartic().regularize(0.0).is_err());
    }

    #[test]
    fn suite_passes_for_built_ins() {
        for pot in [Potential::polynomial(), Potential::logarithmic(0.8, 1.6), Potential::obstacle()] {
            let report = prox_suite(&pot, &[1e-1, 1e-2, 1e-3]).unwrap();
            let failures: Vec<_> = report.failures().collect();
            assert!(failures.is_empty(), "{}: {failures:#?}", pot.name);
        }
    }

    #[test]
    fn coercivity_fit_is_bounded() {
        let samples: Vec<f64> = (0..=2000).map(|k| -10.0 + 0.01 * k as f64).collect();
        let r = verify_coercivity(&Potential::polynomial(), &[0.1, 0.01, 0.001], &samples).unwrap();
        assert!(r.passed(), "{r:#?}");
        let r = verify_coercivity(&Potential::quartic(), &[0.1, 0.01], &samples).unwrap();
        assert!(r.passed());
        assert_eq!(r.checks[0].values["value"], 0.0);
    }

    #[test]
    fn liminf_along_a_sweep() {
        let reg = Potential::obstacle().regularize(1e-4).unwrap();
        assert!(reg.moreau(2.0).unwrap() > 1e3);
        let sweep = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5];
        let samples = sample_points();
        for pot in [Potential::quartic(), Potential::obstacle(), Potential::logarithmic(0.8, 1.6)] {
            let r = gamma_liminf_check(&pot, &samples, &sweep, 1e-2, 1e3).unwrap();
            assert!(r.passed(), "{}: {r:#?}", pot.name);
        }
        let q = Potential::quartic();
        let mut prev = 0.0;
        for l in sweep {
            let v = q.regularize(l).unwrap().moreau(1.0).unwrap();
            assert!(v >= prev && v < 0.25);
            prev = v;
            assert_eq!(q.regularize(l).unwrap().moreau(0.0).unwrap(), 0.0);
        }
    }
}
