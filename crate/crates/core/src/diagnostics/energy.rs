//! Energies along trajectories and the checks built on them.

use crate::diagnostics::{Check, Report};
use crate::operators::{energy_f, OperatorKind};
use crate::scheme::{Scheme, Trajectory};
use crate::{Error, Field, Result};

/// `𝔉(u) + Σ w_i F(u_i)` with the unregularized potential (`+∞` off its domain).
pub fn total_energy(u: &Field, scheme: &Scheme) -> f64 {
    let cfg = scheme.config();
    let pot = &cfg.potential;
    let local: f64 = u
        .iter()
        .zip(cfg.operator.weights().iter())
        .map(|(x, w)| w * pot.value(*x))
        .sum();
    if local.is_infinite() {
        return f64::INFINITY;
    }
    energy_f(&cfg.kernel, &cfg.phi, u) + local
}

/// Prefix energy inequality `(τ/2) Σ_{n≤n̄} ‖w_n‖²_𝔏 + ℰ^λ(u_n̄) ≤ ℰ(u_0)` and
/// per-step descent, each with slack `N · tol · factor`.
pub fn energy_estimate_check(traj: &Trajectory, scheme: &Scheme, factor: f64) -> Report {
    let mut report = Report::new("energy estimate");
    let n_steps = traj.len().saturating_sub(1);
    let tol = scheme.config().inner.tol;
    let allowed = n_steps.max(1) as f64 * tol * factor;
    let e0 = total_energy(&traj.u[0], scheme);
    let mut dissipation = 0.0;
    let mut worst = f64::NEG_INFINITY;
    let mut descent = f64::NEG_INFINITY;
    let mut identity: f64 = 0.0;
    for n in 1..traj.len() {
        let w = &traj.w[n];
        let norm_w = if scheme.config().operator.mass_split() {
            let mut omega = w.clone();
            omega.add_scalar_mut(-scheme.mass(w));
            scheme.config().operator.bilinear(&omega, &omega)
        } else {
            scheme.config().operator.bilinear(w, w)
        };
        let step = traj.dual_step_norms[n].powi(2);
        identity = identity.max((norm_w - step).abs() / step.max(1.0));
        dissipation += 0.5 * traj.tau * norm_w;
        worst = worst.max(dissipation + traj.energies[n] - e0);
        descent = descent.max(traj.energies[n] - traj.energies[n - 1]);
    }
    if n_steps == 0 {
        worst = 0.0;
        descent = 0.0;
    }
    report.push(
        Check::at_most("energy_inequality", worst.max(0.0), allowed)
            .with_value("max_prefix_gap", worst)
            .with_value("initial_energy", e0),
    );
    report.push(Check::at_most("per_step_descent", descent.max(0.0), allowed));
    report.push(Check::at_most("chemical_potential_norm_identity", identity, 1e-8));
    report
}

/// `max_n ‖u_n − u_{n−1}‖_{𝔏⁻¹} ≤ C√τ`, `C² = 2(ℰ(u_0) − min_n ℰ^λ(u_n))`,
/// which bounds the gap between the two interpolants.
pub fn interpolant_gap_check(traj: &Trajectory, scheme: &Scheme) -> Check {
    let e0 = total_energy(&traj.u[0], scheme);
    let e_min = traj.energies.iter().copied().fold(f64::INFINITY, f64::min);
    let c = (2.0 * (e0 - e_min)).max(0.0).sqrt();
    let gap = traj
        .dual_step_norms
        .iter()
        .map(|d| d * traj.tau)
        .fold(0.0, f64::max);
    let bound = c * traj.tau.sqrt();
    Check::at_most("interpolant_gap", gap, bound * (1.0 + 1e-9) + 1e-14).with_value("constant", c)
}

/// Largest distance of any `u_{n,i}` from `[−1, 1]`.
pub fn max_obstacle_violation(traj: &Trajectory) -> f64 {
    traj.u
        .iter()
        .flat_map(|u| u.iter())
        .map(|x| (x.abs() - 1.0).max(0.0))
        .fold(0.0, f64::max)
}

/// `max_{n,i} dist(u_{n,i}, [−1,1]) ≤ sqrt(2λ ℰ(u_0))`.
pub fn obstacle_feasibility(traj: &Trajectory, scheme: &Scheme) -> Check {
    let e0 = total_energy(&traj.u[0], scheme);
    let lambda = scheme.config().lambda;
    let bound = (2.0 * lambda * e0).sqrt();
    let mut check = Check::at_most(format!("obstacle_feasibility[lambda={lambda:e}]"), max_obstacle_violation(traj), bound);
    if !(e0 >= 0.0) {
        check = check.with_note("initial energy is negative; the bound is undefined");
    }
    check
}

/// Feasibility along a `λ` sweep (ordered by decreasing `λ`): each run
/// satisfies its bound and the violation shrinks as `λ` decreases.
pub fn obstacle_sweep_check(runs: &[(f64, Trajectory, Scheme)]) -> Report {
    let mut report = Report::new("obstacle feasibility sweep");
    let mut sorted: Vec<&(f64, Trajectory, Scheme)> = runs.iter().collect();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut violations = Vec::new();
    for (_, traj, scheme) in &sorted {
        report.push(obstacle_feasibility(traj, scheme));
        violations.push(max_obstacle_violation(traj));
    }
    let mut growth: f64 = 0.0;
    let mut strict = true;
    for w in violations.windows(2) {
        growth = growth.max(w[1] - w[0]);
        if w[0] > 0.0 && w[1] >= w[0] {
            strict = false;
        }
    }
    report.push(Check::verdict("violation_shrinks", strict, growth.max(0.0)));
    report
}

/// `τ Σ_{n≥1} ‖ζ_n‖_{L¹}`.
pub fn zeta_l1_sum(traj: &Trajectory, weights: &Field) -> f64 {
    traj.tau
        * traj.zeta[1..]
            .iter()
            .map(|z| z.iter().zip(weights.iter()).map(|(z, w)| z.abs() * w).sum::<f64>())
            .sum::<f64>()
}

/// Uniform-in-`λ` bound on `τ Σ ‖ζ_n‖_{L¹}`: the sums of a `λ` sweep differ
/// by less than `max_ratio`. Skipped when the mass is not interior.
pub fn zeta_l1_bound_check(runs: &[(f64, Trajectory)], scheme: &Scheme, max_ratio: f64) -> Check {
    let name = "zeta_l1_bound";
    let mass = match scheme.config().mass_mode {
        crate::scheme::MassMode::Conserved { mass } => mass,
        crate::scheme::MassMode::Free => return Check::skipped(name, "needs conserved mode"),
    };
    if !scheme.config().potential.in_interior(mass) {
        return Check::skipped(name, "mass is not interior to the domain of the convex part");
    }
    let weights = scheme.config().operator.weights();
    let sums: Vec<f64> = runs.iter().map(|(_, t)| zeta_l1_sum(t, weights)).collect();
    let hi = sums.iter().copied().fold(0.0, f64::max);
    let lo = sums.iter().copied().fold(f64::INFINITY, f64::min);
    let ratio = if hi <= 1e-12 { 1.0 } else { hi / lo.max(f64::MIN_POSITIVE) };
    let mut check = Check::at_most(name, ratio, max_ratio);
    for ((lambda, _), s) in runs.iter().zip(&sums) {
        check = check.with_value(&format!("sum[lambda={lambda:e}]"), *s);
    }
    check
}

/// Runs the Allen–Cahn flow (`𝔏` the weighted identity).
pub fn allen_cahn_run(scheme: &Scheme, u0: &Field) -> Result<Trajectory> {
    if scheme.config().operator.kind() != &OperatorKind::IdentityRiesz {
        return Err(Error::Precondition("Allen–Cahn runs need the identity Riesz operator".to_string()));
    }
    scheme.run(u0)
}

/// `‖u^{τ}(T) − u^{τ/2}(T)‖_{L²}` for successive halvings; PASS iff the
/// differences decrease.
pub fn tau_sweep_check(finals: &[(usize, Field)], weights: &Field) -> Report {
    let mut report = Report::new("tau refinement");
    let mut sorted: Vec<&(usize, Field)> = finals.iter().collect();
    sorted.sort_by_key(|(n, _)| *n);
    let diffs: Vec<f64> = sorted
        .windows(2)
        .map(|p| {
            let d = &p[1].1 - &p[0].1;
            d.component_mul(&d).dot(weights).sqrt()
        })
        .collect();
    let mut worst: f64 = 0.0;
    let mut ok = diffs.len() >= 2;
    for w in diffs.windows(2) {
        worst = worst.max(w[1] - w[0]);
        if w[1] >= w[0] && w[0] > 0.0 {
            ok = false;
        }
    }
    let mut check = Check::verdict("cauchy_differences_decrease", ok, worst.max(0.0));
    for (p, d) in sorted.windows(2).zip(&diffs) {
        check = check.with_value(&format!("diff[{}->{}]", p[0].0, p[1].0), *d);
    }
    report.push(check);
    report
}
