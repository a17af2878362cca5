//! Minimizing movements: each step minimizes
//! `(1/2τ)‖u − g‖²_{𝔏⁻¹} + 𝔉(u) + Σ w_i (Γ_λ(u_i) + Π(u_i))` over `u`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::kernels::{KernelMatrix, Mode};
use crate::operators::{energy_f, grad_i, OperatorL, PhiSpec};
use crate::potentials::{Potential, RegularizedPotential};
use crate::{Dual, Error, Field, Result};

/// Free evolution, or evolution on the slice of fields with mean `mass`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum MassMode {
    Free,
    Conserved { mass: f64 },
}

/// Relative size below which objective differences are treated as rounding.
const NOISE: f64 = 1e-12;

/// Settings of the forward–backward inner solver.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnerSettings {
    /// Bound on the weighted `L²` norm of the Euler–Lagrange residual.
    pub tol: f64,
    /// Bound on the relative energy change of the last iteration.
    pub energy_rtol: f64,
    pub max_iter: usize,
    /// Initial trial step of the backtracking search.
    pub step0: f64,
    /// Nesterov momentum with adaptive restart.
    pub accelerated: bool,
}

impl Default for InnerSettings {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            energy_rtol: 1e-12,
            max_iter: 50_000,
            step0: 1.0,
            accelerated: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SchemeConfig {
    pub horizon: f64,
    pub n_steps: usize,
    pub lambda: f64,
    pub phi: PhiSpec,
    pub kernel: KernelMatrix,
    pub operator: OperatorL,
    pub potential: Potential,
    pub mass_mode: MassMode,
    pub inner: InnerSettings,
}

impl SchemeConfig {
    pub fn tau(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }
}

/// The discrete solution `(u_n, w_n, ζ_n)` and per-step records.
/// Index 0 holds the initial datum; `w_0`, `ζ_0`'s step data are zero.
#[derive(Clone, Debug, Default)]
pub struct Trajectory {
    pub tau: f64,
    pub times: Vec<f64>,
    pub u: Vec<Field>,
    pub w: Vec<Field>,
    pub zeta: Vec<Field>,
    /// `ℰ^λ(u_n)`.
    pub energies: Vec<f64>,
    pub masses: Vec<f64>,
    pub el_residuals: Vec<f64>,
    /// `‖(u_n − u_{n−1})/τ‖_{𝔏⁻¹}`.
    pub dual_step_norms: Vec<f64>,
    pub iterations: Vec<usize>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn last(&self) -> Option<&Field> {
        self.u.last()
    }
}

/// Result of one inner minimization.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub u: Field,
    pub residual: f64,
    pub iterations: usize,
    /// `ℰ_g^λ(u)`.
    pub objective: f64,
    /// Last accepted step length.
    pub step: f64,
}

/// A validated configuration with the metric `M 𝔏⁻¹ M` precomputed.
#[derive(Clone, Debug)]
pub struct Scheme {
    cfg: SchemeConfig,
    reg: RegularizedPotential,
    metric: DMatrix<f64>,
    weights: Field,
    volume: f64,
}

struct Smooth {
    value: f64,
    grad: Dual,
}

impl Scheme {
    pub fn new(cfg: SchemeConfig) -> Result<Self> {
        let mut errors = Vec::new();
        if !(cfg.horizon > 0.0 && cfg.horizon.is_finite()) {
            errors.push(format!("scheme.T: must be positive, got {}", cfg.horizon));
        }
        if cfg.n_steps == 0 {
            errors.push("scheme.n_steps: must be at least 1".to_string());
        }
        if !(cfg.lambda > 0.0 && cfg.lambda < 1.0) {
            errors.push(format!("scheme.lambda: must lie in (0,1), got {}", cfg.lambda));
        }
        if cfg.kernel.len() != cfg.operator.len() {
            errors.push(format!(
                "kernel, operator: sizes differ ({} vs {})",
                cfg.kernel.len(),
                cfg.operator.len()
            ));
        }
        if !(cfg.inner.tol > 0.0) || cfg.inner.max_iter == 0 || !(cfg.inner.step0 > 0.0) {
            errors.push("scheme.tol, scheme.max_iter, scheme.step0: must be positive".to_string());
        }
        match cfg.mass_mode {
            MassMode::Conserved { mass } => {
                if !cfg.operator.mass_split() {
                    errors.push("scheme.mass_mode, operator.kind: conserved mode needs an operator annihilating constants".to_string());
                }
                if cfg.kernel.mode() == Mode::Dirichlet {
                    errors.push("scheme.mass_mode, kernel.mode: conserved mode needs a regional or periodic kernel".to_string());
                }
                if !cfg.potential.in_interior(mass) {
                    errors.push(format!(
                        "scheme.mass, potential.name: mass {mass} is not interior to the domain of the convex part"
                    ));
                }
            }
            MassMode::Free => {
                if cfg.operator.mass_split() {
                    errors.push("scheme.mass_mode, operator.kind: an operator annihilating constants needs conserved mode".to_string());
                }
            }
        }
        if !errors.is_empty() {
            return Err(Error::Config(errors));
        }
        let reg = cfg.potential.regularize(cfg.lambda)?;
        let metric = cfg.operator.inverse_metric();
        let weights = cfg.operator.weights().clone();
        let volume = weights.sum();
        Ok(Self {
            cfg,
            reg,
            metric,
            weights,
            volume,
        })
    }

    pub fn config(&self) -> &SchemeConfig {
        &self.cfg
    }

    pub fn tau(&self) -> f64 {
        self.cfg.tau()
    }

    pub fn regularized(&self) -> &RegularizedPotential {
        &self.reg
    }

    fn conserved(&self) -> bool {
        matches!(self.cfg.mass_mode, MassMode::Conserved { .. })
    }

    /// Weighted mean of a field.
    pub fn mass(&self, u: &Field) -> f64 {
        u.dot(&self.weights) / self.volume
    }

    /// `ℰ^λ(u) = 𝔉(u) + Σ w_i (Γ_λ + Π)(u_i)`.
    pub fn energy(&self, u: &Field) -> Result<f64> {
        let mut local = 0.0;
        for (x, w) in u.iter().zip(self.weights.iter()) {
            local += w * self.reg.value(*x)?;
        }
        Ok(energy_f(&self.cfg.kernel, &self.cfg.phi, u) + local)
    }

    /// `ℰ_g^λ(u)`.
    pub fn step_objective(&self, u: &Field, g: &Field) -> Result<f64> {
        let d = u - g;
        Ok(d.dot(&(&self.metric * &d)) / (2.0 * self.tau()) + self.energy(u)?)
    }

    /// `‖M(u − g)/τ‖_{𝔏⁻¹}`.
    pub fn dual_step_norm(&self, u: &Field, g: &Field) -> f64 {
        let d = u - g;
        d.dot(&(&self.metric * &d)).max(0.0).sqrt() / self.tau()
    }

    fn smooth(&self, u: &Field, g: &Field) -> Result<Smooth> {
        let tau = self.tau();
        let d = u - g;
        let gd = &self.metric * &d;
        let mut value = d.dot(&gd) / (2.0 * tau) + energy_f(&self.cfg.kernel, &self.cfg.phi, u);
        let mut grad = gd / tau + grad_i(&self.cfg.kernel, &self.cfg.phi, u);
        let pot = self.reg.base();
        let conserved = self.conserved();
        for i in 0..u.len() {
            let w = self.weights[i];
            let x = u[i];
            value += w * pot.pi_value(x);
            grad[i] += w * pot.pi_prime(x);
            if conserved {
                value += w * self.reg.moreau(x)?;
                grad[i] += w * self.reg.yosida(x)?;
            }
        }
        Ok(Smooth { value, grad })
    }

    fn nonsmooth(&self, u: &Field) -> Result<f64> {
        if self.conserved() {
            return Ok(0.0);
        }
        let mut acc = 0.0;
        for (x, w) in u.iter().zip(self.weights.iter()) {
            acc += w * self.reg.moreau(*x)?;
        }
        Ok(acc)
    }

    fn project(&self, r: &mut Field) {
        if self.conserved() {
            let mean = self.mass(r);
            r.add_scalar_mut(-mean);
        }
    }

    /// Strong-form residual of the step's Euler–Lagrange equation, in the
    /// weighted `L²` norm; tested against zero-mean directions in conserved mode.
    fn residual_from(&self, u: &Field, grad: &Dual) -> Result<f64> {
        let mut r = grad.component_div(&self.weights);
        if !self.conserved() {
            for i in 0..u.len() {
                r[i] += self.reg.yosida(u[i])?;
            }
        }
        self.project(&mut r);
        Ok(r.iter().zip(self.weights.iter()).map(|(r, w)| w * r * r).sum::<f64>().sqrt())
    }

    /// Euler–Lagrange residual of `u` as a minimizer of `ℰ_g^λ`.
    pub fn el_residual(&self, u: &Field, g: &Field) -> Result<f64> {
        let s = self.smooth(u, g)?;
        self.residual_from(u, &s.grad)
    }

    fn forward_backward(&self, y: &Field, grad: &Dual, step: f64) -> Result<Field> {
        let mut dir = grad.component_div(&self.weights);
        self.project(&mut dir);
        let mut x = y - step * dir;
        if !self.conserved() {
            for xi in x.iter_mut() {
                *xi = self.reg.prox(*xi, step)?;
            }
        }
        Ok(x)
    }

    fn check_slice(&self, u: &Field) -> Result<()> {
        if let MassMode::Conserved { mass } = self.cfg.mass_mode {
            let m = self.mass(u);
            if (m - mass).abs() > 1e-10 * mass.abs().max(1.0) {
                return Err(Error::Precondition(format!(
                    "field has mass {m}, conserved mode expects {mass}"
                )));
            }
        }
        Ok(())
    }

    /// Minimizes `ℰ_g^λ` from the warm start `g`.
    pub fn step_minimize(&self, g: &Field) -> Result<StepOutcome> {
        self.step_from(g, g, self.cfg.inner.step0)
    }

    /// Minimizes `ℰ_g^λ` starting the inner iteration at `start`.
    pub fn step_from(&self, g: &Field, start: &Field, step0: f64) -> Result<StepOutcome> {
        if g.len() != self.weights.len() || start.len() != g.len() {
            return Err(Error::Precondition("field length differs from the grid size".to_string()));
        }
        self.check_slice(g)?;
        let inner = self.cfg.inner;
        let mut step = step0;
        let mut x = start.clone();
        let mut sx = self.smooth(&x, g)?;
        let mut fx = sx.value + self.nonsmooth(&x)?;
        let mut residual = self.residual_from(&x, &sx.grad)?;
        if residual <= inner.tol {
            return Ok(StepOutcome {
                u: x,
                residual,
                iterations: 0,
                objective: fx,
                step,
            });
        }
        let mut y = x.clone();
        let mut sy = Smooth {
            value: sx.value,
            grad: sx.grad.clone(),
        };
        let mut theta: f64 = 1.0;
        for it in 1..=inner.max_iter {
            let slack = 1e-15 * sy.value.abs().max(1.0);
            let noise = NOISE * sy.value.abs().max(1.0);
            let (xn, sn) = loop {
                let xn = self.forward_backward(&y, &sy.grad, step)?;
                let sn = self.smooth(&xn, g)?;
                let diff = &xn - &y;
                let quad = diff.iter().zip(self.weights.iter()).map(|(d, w)| w * d * d).sum::<f64>();
                if sn.value <= sy.value + sy.grad.dot(&diff) + quad / (2.0 * step) + slack {
                    break (xn, sn);
                }
                // Value differences drown in rounding near the minimizer; the
                // curvature along the step is still resolved by the gradients.
                let curvature = (&sn.grad - &sy.grad).dot(&diff);
                if (sn.value - sy.value).abs() <= noise && curvature <= quad / step {
                    break (xn, sn);
                }
                step *= 0.5;
                if step < 1e-300 {
                    return Err(Error::Numerical {
                        message: "backtracking step underflow".to_string(),
                        residual,
                        best: Some(x.as_slice().to_vec()),
                    });
                }
            };
            let fnew = sn.value + self.nonsmooth(&xn)?;
            if fnew > fx + NOISE * fx.abs().max(1.0) {
                if theta > 1.0 {
                    theta = 1.0;
                    y = x.clone();
                    sy = Smooth {
                        value: sx.value,
                        grad: sx.grad.clone(),
                    };
                } else {
                    step *= 0.5;
                }
                continue;
            }
            let change = (fx - fnew).abs() / fnew.abs().max(1.0);
            // Gradient restart: drop the momentum once it points uphill.
            let uphill = (&y - &xn).component_mul(&self.weights).dot(&(&xn - &x)) > 0.0;
            let theta_next = if inner.accelerated && !uphill {
                0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt())
            } else {
                1.0
            };
            let beta = if uphill { 0.0 } else { (theta - 1.0) / theta_next };
            let x_prev = std::mem::replace(&mut x, xn);
            sx = sn;
            fx = fnew;
            theta = theta_next;
            residual = self.residual_from(&x, &sx.grad)?;
            if residual <= inner.tol && change <= inner.energy_rtol {
                return Ok(StepOutcome {
                    u: x,
                    residual,
                    iterations: it,
                    objective: fx,
                    step,
                });
            }
            if beta > 0.0 {
                y = &x + beta * (&x - &x_prev);
                sy = self.smooth(&y, g)?;
            } else {
                y = x.clone();
                sy = Smooth {
                    value: sx.value,
                    grad: sx.grad.clone(),
                };
            }
            step *= 1.05;
        }
        Err(Error::Numerical {
            message: format!("inner solver stalled after {} iterations", inner.max_iter),
            residual,
            best: Some(x.as_slice().to_vec()),
        })
    }

    /// `w = −𝔏⁻¹(M(u_next − u_prev)/τ)`; zero-mean in conserved mode.
    pub fn recover_w(&self, u_next: &Field, u_prev: &Field) -> Result<Field> {
        let mut f = (u_next - u_prev).component_mul(&self.weights) / self.tau();
        let op = &self.cfg.operator;
        if op.mass_split() {
            // Both states carry the same mass only up to rounding in their own size.
            let scale = (u_next.abs() + u_prev.abs()).dot(&self.weights) / self.tau();
            let defect = f.sum();
            if defect.abs() > 1e-9 * scale.max(f64::MIN_POSITIVE) {
                return Err(Error::Precondition(format!("states differ in mass by {:.3e}", defect * self.tau())));
            }
            f = op.project_dual(&f);
        }
        let mut w = op.solve(&f)?;
        w.neg_mut();
        Ok(w)
    }

    /// `ζ = γ_λ(u)` componentwise.
    pub fn recover_zeta(&self, u: &Field) -> Result<Field> {
        let mut z = u.clone();
        for x in z.iter_mut() {
            *x = self.reg.yosida(*x)?;
        }
        Ok(z)
    }

    /// `w = ω + 𝔪(ζ + π(u))`.
    pub fn adjust_mass(&self, omega: &Field, u: &Field, zeta: &Field) -> Field {
        let pot = self.reg.base();
        let source = Field::from_iterator(u.len(), u.iter().zip(zeta.iter()).map(|(x, z)| z + pot.pi_prime(*x)));
        omega.add_scalar(self.mass(&source))
    }

    fn record_step(&self, traj: &mut Trajectory, n: usize, u: Field, outcome_residual: f64, iterations: usize) -> Result<()> {
        let prev = traj.u.last().expect("trajectory starts with the datum");
        let mut w = self.recover_w(&u, prev)?;
        let zeta = self.recover_zeta(&u)?;
        if self.conserved() {
            w = self.adjust_mass(&w, &u, &zeta);
        }
        traj.dual_step_norms.push(self.dual_step_norm(&u, prev));
        traj.times.push(n as f64 * traj.tau);
        traj.energies.push(self.energy(&u)?);
        traj.masses.push(self.mass(&u));
        traj.el_residuals.push(outcome_residual);
        traj.iterations.push(iterations);
        traj.w.push(w);
        traj.zeta.push(zeta);
        traj.u.push(u);
        Ok(())
    }

    fn start(&self, u0: &Field) -> Result<Trajectory> {
        if u0.len() != self.weights.len() {
            return Err(Error::Precondition("initial datum length differs from the grid size".to_string()));
        }
        let energy = self.energy(u0)?;
        if !energy.is_finite() {
            return Err(Error::Precondition("initial energy is not finite".to_string()));
        }
        self.check_slice(u0)?;
        Ok(Trajectory {
            tau: self.tau(),
            times: vec![0.0],
            u: vec![u0.clone()],
            w: vec![Field::zeros(u0.len())],
            zeta: vec![self.recover_zeta(u0)?],
            energies: vec![energy],
            masses: vec![self.mass(u0)],
            el_residuals: vec![0.0],
            dual_step_norms: vec![0.0],
            iterations: vec![0],
        })
    }

    /// Runs all `N` steps from `u0`.
    pub fn run(&self, u0: &Field) -> Result<Trajectory> {
        self.run_perturbed(u0, None)
    }

    fn run_perturbed(&self, u0: &Field, mut noise: Option<(&mut ChaCha8Rng, f64)>) -> Result<Trajectory> {
        let mut traj = self.start(u0)?;
        let mut step = self.cfg.inner.step0;
        for n in 1..=self.cfg.n_steps {
            let g = traj.u.last().expect("nonempty").clone();
            let mut start = g.clone();
            if let Some((rng, amplitude)) = noise.as_mut() {
                let mut p = Field::from_iterator(g.len(), (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)));
                self.project(&mut p);
                start += *amplitude * p;
            }
            let result = self
                .step_from(&g, &start, (2.0 * step).min(self.cfg.inner.step0.max(step)))
                .and_then(|out| {
                    step = out.step;
                    self.record_step(&mut traj, n, out.u, out.residual, out.iterations)
                });
            if let Err(e) = result {
                return Err(Error::Run {
                    step: n,
                    partial: Box::new(traj),
                    source: Box::new(e),
                });
            }
        }
        Ok(traj)
    }

    /// Reruns with randomly perturbed inner starting points and returns the
    /// largest `L²` distance between any two runs at any step.
    pub fn uniqueness_probe(&self, u0: &Field, perturbations: usize, amplitude: f64, seed: u64) -> Result<f64> {
        if !self.cfg.phi.strongly_monotone() {
            return Err(Error::Precondition("uniqueness probe needs a strongly monotone phi".to_string()));
        }
        let mut runs = vec![self.run(u0)?];
        for p in 0..perturbations {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(p as u64));
            runs.push(self.run_perturbed(u0, Some((&mut rng, amplitude)))?);
        }
        let mut worst: f64 = 0.0;
        for a in 0..runs.len() {
            for b in a + 1..runs.len() {
                for (ua, ub) in runs[a].u.iter().zip(&runs[b].u) {
                    let d = ua - ub;
                    worst = worst.max(d.component_mul(&d).dot(&self.weights).sqrt());
                }
            }
        }
        Ok(worst)
    }
}

/// Piecewise-constant `ū(t)` (equal to `u_n` on `(t_{n−1}, t_n]`) and
/// piecewise-linear `û(t)` interpolants of a trajectory.
pub fn interpolants(traj: &Trajectory, t: f64) -> Result<(Field, Field)> {
    let n_steps = traj.len().saturating_sub(1);
    let horizon = traj.tau * n_steps as f64;
    let eps = 1e-12 * horizon.max(1.0);
    if traj.is_empty() || !(t >= -eps && t <= horizon + eps) {
        return Err(Error::Precondition(format!("time {t} outside [0, {horizon}]")));
    }
    if n_steps == 0 || t <= 0.0 {
        return Ok((traj.u[0].clone(), traj.u[0].clone()));
    }
    let pos = (t / traj.tau).clamp(0.0, n_steps as f64);
    let mut n = pos.ceil() as usize;
    if (pos - pos.round()).abs() <= 1e-12 * pos.max(1.0) {
        n = pos.round() as usize;
    }
    let n = n.clamp(1, n_steps);
    let theta = (pos - (n - 1) as f64).clamp(0.0, 1.0);
    let bar = traj.u[n].clone();
    let hat = &traj.u[n - 1] * (1.0 - theta) + &traj.u[n] * theta;
    Ok((bar, hat))
}
