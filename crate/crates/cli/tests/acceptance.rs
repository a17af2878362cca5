//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on failure.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::time::Instant;

use argmin::core::{CostFunction, Executor};
use argmin::solver::neldermead::NelderMead;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nlch_core::config::{parse_config, RunConfig};
use nlch_core::diagnostics::{
    energy_estimate_check, local_limit_study, max_obstacle_violation, neumann_extension_check, obstacle_feasibility,
    obstacle_sweep_check, poincare_blowup_check, poincare_refinement, poincare_stability_check, total_energy,
};
use nlch_core::kernels::{check_integrability, k3_sandwich, IntegrabilityScope, KernelReport, StencilClosure};
use nlch_core::operators::{action_i, energy_f};
use nlch_core::potentials::prox_suite;
use nlch_core::{
    Field, Grid, InnerSettings, KernelFamily, KernelMatrix, KernelSpec, MassMode, Mode, OperatorL, PhiSpec, Potential,
    Scheme, SchemeConfig, Trajectory,
};

type Outcome = Result<(bool, String), String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn config(text: &str) -> Result<RunConfig, String> {
    parse_config(text).map_err(err)
}

fn run(cfg: &RunConfig) -> Result<(Grid, Scheme, Trajectory), String> {
    let grid = cfg.build_grid().map_err(err)?;
    let u0 = cfg.initial_field(&grid);
    let scheme = cfg.build_scheme(&grid, &u0).map_err(err)?;
    let traj = scheme.run(&u0).map_err(err)?;
    Ok((grid, scheme, traj))
}

fn random_field(rng: &mut ChaCha8Rng, n: usize, amp: f64) -> Field {
    Field::from_fn(n, |_, _| rng.gen_range(-amp..amp))
}

fn prox_identities() -> Outcome {
    let lambdas = [1e-1, 1e-2, 1e-3];
    let mut failed = Vec::new();
    for pot in [Potential::polynomial(), Potential::logarithmic(0.8, 1.6), Potential::obstacle()] {
        let report = prox_suite(&pot, &lambdas).map_err(err)?;
        failed.extend(report.failures().map(|c| format!("{}:{}", pot.name, c.name)));
    }
    Ok((failed.is_empty(), format!("3 potentials x 3 lambdas, failures: {failed:?}")))
}

fn closed_forms() -> Outcome {
    let mut worst: f64 = 0.0;
    for lambda in [1e-1, 1e-2, 1e-3] {
        let reg = Potential::obstacle().regularize(lambda).map_err(err)?;
        let exact = 1.0 / (2.0 * lambda);
        worst = worst.max((reg.moreau(2.0).map_err(err)? - exact).abs() / exact);
        let lin = Potential::linear();
        for k in -40..=40 {
            let r = 0.1 * k as f64;
            worst = worst.max((lin.resolvent(r, lambda).map_err(err)? - r / (1.0 + lambda)).abs());
        }
    }
    Ok((worst <= 1e-12, format!("max error {worst:.3e} (tol 1e-12)")))
}

/// Kernels of every family (and the local stencil) on small 1D grids.
fn family_kernels(q: f64) -> Result<Vec<(String, KernelMatrix)>, String> {
    let dirichlet = Grid::build(1, &[[0.0, 1.0]], 12, 1.0, 2).map_err(err)?;
    let regional = Grid::build(1, &[[0.0, 1.0]], 12, 0.0, 1).map_err(err)?;
    let specs = [
        (KernelSpec::power_global(0.5, q), Mode::Dirichlet),
        (KernelSpec::power_regional(0.5, q), Mode::Regional),
        (KernelSpec::new(KernelFamily::SumPower { s1: 0.3, s2: 0.6, q }), Mode::Dirichlet),
        (
            KernelSpec::new(KernelFamily::VariableOrder { s0: 0.3, s1: 0.6, q, center: 0.5, width: 0.1 }),
            Mode::Dirichlet,
        ),
        (
            KernelSpec::new(KernelFamily::PiecewiseRegion { region: vec![[0.25, 0.75]], s_in: 0.3, s_out: 0.6, q }),
            Mode::Dirichlet,
        ),
        (KernelSpec::periodic_lattice(0.5, q), Mode::Periodic),
        (KernelSpec::neumann_k3(0.5, &[[0.0, 1.0]]), Mode::Regional),
        (KernelSpec::spectral_k4(0.5), Mode::Regional),
    ];
    let mut out = Vec::new();
    for (spec, mode) in specs {
        let grid = if mode == Mode::Dirichlet { &dirichlet } else { &regional };
        let km = KernelMatrix::assemble(&spec, grid, mode).map_err(err)?;
        out.push((km.label().to_string(), km));
    }
    let stencil = KernelMatrix::stencil(&regional, 1.0, StencilClosure::Dirichlet).map_err(err)?;
    out.push(("stencil".to_string(), stencil));
    Ok(out)
}

fn gradient_consistency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for q in [2.0, 4.0] {
        let phi = PhiSpec::power(q);
        for (_, km) in family_kernels(q)? {
            let n = km.len();
            for _ in 0..20 {
                let u = random_field(&mut rng, n, 1.0);
                let v = random_field(&mut rng, n, 1.0);
                let h = 1e-3;
                let f = |t: f64| energy_f(&km, &phi, &(&u + &v * t));
                let fd = (f(-2.0 * h) - 8.0 * f(-h) + 8.0 * f(h) - f(2.0 * h)) / (12.0 * h);
                let exact = action_i(&km, &phi, &u, &v);
                worst = worst.max((fd - exact).abs() / exact.abs().max(f64::MIN_POSITIVE));
                cases += 1;
            }
        }
    }
    Ok((worst <= 1e-6, format!("{cases} cases, max relative error {worst:.3e} (tol 1e-6)")))
}

fn implicit_euler() -> Outcome {
    let grid = Grid::build(1, &[[0.0, 1.0]], 32, 1.0, 2).map_err(err)?;
    let km = KernelMatrix::assemble(&KernelSpec::power_global(0.5, 2.0), &grid, Mode::Dirichlet).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let g = random_field(&mut rng, 32, 1.0);
    let mut worst: f64 = 0.0;
    for tau in [1e-1, 1e-2] {
        let scheme = Scheme::new(SchemeConfig {
            horizon: tau,
            n_steps: 1,
            lambda: 1e-2,
            phi: PhiSpec::power(2.0),
            kernel: km.clone(),
            operator: OperatorL::identity_riesz(&grid).map_err(err)?,
            potential: Potential::zero(),
            mass_mode: MassMode::Free,
            inner: InnerSettings { tol: 1e-11, ..InnerSettings::default() },
        })
        .map_err(err)?;
        let u = scheme.step_minimize(&g).map_err(err)?.u;
        let m = DMatrix::from_diagonal(&grid.weights_vector());
        let oracle = (&m + km.quadratic_matrix() * tau).lu().solve(&(&m * &g)).ok_or("singular system")?;
        worst = worst.max((u - oracle).amax());
    }
    Ok((worst <= 1e-10, format!("max norm gap {worst:.3e} (tol 1e-10)")))
}

struct StepCost<'a> {
    scheme: &'a Scheme,
    g: &'a Field,
}

impl CostFunction for StepCost<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Vec<f64>) -> Result<f64, argmin::core::Error> {
        Ok(self.scheme.step_objective(&Field::from_vec(p.clone()), self.g).unwrap_or(f64::INFINITY))
    }
}

/// Nelder–Mead from `start`, restarted from its own result until it stalls.
fn nelder_mead(scheme: &Scheme, g: &Field, start: Vec<f64>) -> Result<(Vec<f64>, f64), String> {
    let mut best = start;
    let mut best_cost = f64::INFINITY;
    for radius in [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6] {
        let mut simplex = vec![best.clone()];
        for k in 0..best.len() {
            let mut p = best.clone();
            p[k] += radius;
            simplex.push(p);
        }
        let solver = NelderMead::new(simplex).with_sd_tolerance(1e-18).map_err(err)?;
        let res = Executor::new(StepCost { scheme, g }, solver)
            .configure(|s| s.max_iters(5000))
            .run()
            .map_err(err)?;
        let state = res.state();
        if state.best_cost <= best_cost {
            best_cost = state.best_cost;
            best = state.best_param.clone().ok_or("no parameter")?;
        }
    }
    Ok((best, best_cost))
}

fn brute_force_oracle() -> Outcome {
    let grid = Grid::build(1, &[[0.0, 1.0]], 3, 1.0, 2).map_err(err)?;
    let km = KernelMatrix::assemble(&KernelSpec::power_global(0.5, 2.0), &grid, Mode::Dirichlet).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for pot in [Potential::obstacle(), Potential::polynomial()] {
        let scheme = Scheme::new(SchemeConfig {
            horizon: 1e-3,
            n_steps: 1,
            lambda: 1e-2,
            phi: PhiSpec::power(2.0),
            kernel: km.clone(),
            operator: OperatorL::laplacian_dirichlet(&grid).map_err(err)?,
            potential: pot,
            mass_mode: MassMode::Free,
            inner: InnerSettings { tol: 1e-12, energy_rtol: 1e-15, ..InnerSettings::default() },
        })
        .map_err(err)?;
        for _ in 0..5 {
            let g = random_field(&mut rng, 3, 1.2);
            let u = scheme.step_minimize(&g).map_err(err)?.u;
            let mut oracle: Option<(Vec<f64>, f64)> = None;
            for _ in 0..10 {
                let start: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.5..1.5)).collect();
                let (p, c) = nelder_mead(&scheme, &g, start)?;
                if oracle.as_ref().is_none_or(|(_, best)| c < *best) {
                    oracle = Some((p, c));
                }
            }
            let (p, _) = oracle.ok_or("no oracle run")?;
            for (a, b) in u.iter().zip(&p) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    Ok((worst <= 1e-6, format!("max coordinate gap {worst:.3e} (tol 1e-6)")))
}

const BASE_1D: &str = r#"
[grid]
dim = 1
n = 32

[potential]
name = "polynomial"

[scheme]
T = 0.04
n_steps = 40
lambda = 0.01

[initial]
kind = "cosine"
mean = 0.1
amplitude = 0.4
"#;

fn energy_inequality() -> Outcome {
    let mut lines = Vec::new();
    let mut pass = true;
    for kernel in ["family = \"power_regional\"\ns = 0.5", "family = \"power_global\"\ns = 0.5"] {
        let cfg = config(&format!("{BASE_1D}\n[kernel]\n{kernel}\n"))?;
        let (_, scheme, traj) = run(&cfg)?;
        let report = energy_estimate_check(&traj, &scheme, 10.0);
        let ok = report.check("energy_inequality").is_some_and(|c| c.passed());
        pass &= ok;
        lines.push(format!("{}: {}", scheme.config().kernel.label(), if ok { "ok" } else { "violated" }));
    }
    Ok((pass, lines.join(", ")))
}

fn mass_conservation() -> Outcome {
    let kernels = [
        "family = \"power_regional\"\ns = 0.5",
        "family = \"periodic_lattice\"\ns = 0.5",
        "family = \"neumann_k3\"\ns = 0.5",
        "family = \"spectral_k4\"\ns = 0.5",
    ];
    let mut worst: f64 = 0.0;
    for kernel in kernels {
        let text = format!("{BASE_1D}\n[kernel]\n{kernel}\n[operator]\nkind = \"laplacian_neumann\"\n")
            .replace("n = 32", "n = 24")
            .replace("n_steps = 40", "n_steps = 20");
        let (_, _, traj) = run(&config(&text)?)?;
        let m0 = traj.masses[0];
        worst = traj.masses.iter().fold(worst, |w, m| w.max((m - m0).abs()));
    }
    Ok((worst <= 1e-10, format!("K1,K2,K3,K4 max mass drift {worst:.3e} (tol 1e-10)")))
}

fn obstacle_feasibility_sweep() -> Outcome {
    let mut runs = Vec::new();
    let mut detail = Vec::new();
    let mut pass = true;
    for lambda in [1e-1, 1e-2, 1e-3] {
        let text = format!(
            r#"
[grid]
dim = 1
n = 32

[kernel]
family = "power_global"
s = 0.5
normalization = 0.05

[potential]
name = "obstacle"

[scheme]
T = 1.0
n_steps = 20
lambda = {lambda:e}

[initial]
kind = "cosine"
mean = 0.0
amplitude = 0.95
wavenumber = 2
"#
        );
        let cfg = config(&text)?;
        let (grid, scheme, traj) = run(&cfg)?;
        let e0 = total_energy(&cfg.initial_field(&grid), &scheme);
        let check = obstacle_feasibility(&traj, &scheme);
        let violation = max_obstacle_violation(&traj);
        pass &= e0 > 0.0 && violation > 0.0 && check.passed();
        detail.push(format!("lambda={lambda:e} viol={violation:.2e} bound={:.2e}", check.threshold));
        runs.push((lambda, traj, scheme));
    }
    let shrinks = obstacle_sweep_check(&runs).check("violation_shrinks").is_some_and(|c| c.passed());
    pass &= shrinks;
    detail.push(format!("shrinks={shrinks}"));
    Ok((pass, detail.join(", ")))
}

fn kernel_certification() -> Outcome {
    let box1 = Grid::build(1, &[[0.0, 1.0]], 16, 0.0, 1).map_err(err)?;
    let mut detail = Vec::new();
    let mut pass = true;
    let cases = [
        ("K1", KernelSpec::power_regional(0.5, 2.0), Mode::Regional),
        ("K2 local", KernelSpec::periodic_lattice(0.5, 2.0), Mode::Periodic),
        ("K3", KernelSpec::neumann_k3(0.5, &[[0.0, 1.0]]), Mode::Regional),
        ("K4", KernelSpec::spectral_k4(0.5), Mode::Regional),
    ];
    for (name, spec, mode) in cases {
        let report = KernelReport::build(&spec, &box1, mode, 64, 5).map_err(err)?;
        pass &= report.pass;
        detail.push(format!("{name}:{}", if report.pass { "pass" } else { "fail" }));
    }
    let divergent = KernelSpec::periodic_lattice(0.75, 2.0);
    let full = check_integrability(&divergent, &box1, IntegrabilityScope::Regional, 5).map_err(err)?;
    pass &= !full.verdict.pass;
    detail.push(format!("K2 sq=1.5 full:{}", if full.verdict.pass { "pass (unexpected)" } else { "diverges" }));
    let fine = box1.refined(2, 1).map_err(err)?;
    let sandwich = k3_sandwich(&KernelSpec::neumann_k3(0.5, &[[0.0, 1.0]]), &box1, &fine, 2.0).map_err(err)?;
    pass &= sandwich.pass;
    detail.push(format!(
        "K3 sandwich fitted [{:.3},{:.3}] on n=16, refined [{:.3},{:.3}] (slack {})",
        sandwich.fitted_lower, sandwich.fitted_upper, sandwich.observed_lower, sandwich.observed_upper, sandwich.slack
    ));
    Ok((pass, detail.join(", ")))
}

fn poincare() -> Outcome {
    let box1 = Grid::build(1, &[[0.0, 1.0]], 16, 0.0, 1).map_err(err)?;
    let (c0, c1) = poincare_refinement(&KernelSpec::power_regional(0.5, 2.0), &box1, Mode::Regional).map_err(err)?;
    let stable = poincare_stability_check(c0, c1, 0.1);
    let union = Grid::union_1d(&[[0.0, 1.0], [2.0, 3.0]], 8).map_err(err)?;
    let short = KernelSpec::power_regional(0.5, 2.0).with_truncation(0.5);
    let (s0, s1) = poincare_refinement(&short, &union, Mode::Regional).map_err(err)?;
    let blowup = poincare_blowup_check(s0, s1, 10.0);
    let long = KernelSpec::power_regional(0.5, 2.0).with_truncation(union.diameter());
    let (l0, l1) = poincare_refinement(&long, &union, Mode::Regional).map_err(err)?;
    let finite = l0.is_finite() && l1.is_finite();
    Ok((
        stable.passed() && blowup.passed() && finite,
        format!("box C {c0:.4}->{c1:.4}; gap-truncated C {s0:.3e}->{s1:.3e}; full-range C {l0:.4}->{l1:.4}"),
    ))
}

fn local_limit() -> Outcome {
    let cfg = config(&format!("{BASE_1D}\n[kernel]\nfamily = \"power_global\"\ns = 0.5\n").replace("n_steps = 40", "n_steps = 10"))?;
    let grid = cfg.build_grid().map_err(err)?;
    let u0 = cfg.initial_field(&grid);
    let study = local_limit_study(&grid, &u0, &[0.5, 0.7, 0.9, 0.95], |km| cfg.build_scheme_with_kernel(&grid, &u0, km))
        .map_err(err)?;
    let ok = study.report.check("distance_decreases_in_s").is_some_and(|c| c.passed());
    let d: Vec<String> = study.s_values.iter().zip(&study.distances).map(|(s, d)| format!("d({s})={d:.3e}")).collect();
    Ok((ok, d.join(" ")))
}

fn uniqueness() -> Outcome {
    let mut worst: f64 = 0.0;
    for q in [2.0, 4.0] {
        let text = format!("{BASE_1D}\n[kernel]\nfamily = \"power_global\"\ns = 0.5\nq = {q:.1}\n")
            .replace("n_steps = 40", "n_steps = 10");
        let cfg = config(&text)?;
        let grid = cfg.build_grid().map_err(err)?;
        let u0 = cfg.initial_field(&grid);
        let scheme = cfg.build_scheme(&grid, &u0).map_err(err)?;
        worst = worst.max(scheme.uniqueness_probe(&u0, 3, 1e-2, 11).map_err(err)?);
    }
    Ok((worst <= 1e-6, format!("max trajectory distance {worst:.3e} (tol 1e-6)")))
}

fn neumann_extension() -> Outcome {
    let mut pass = true;
    let mut detail = Vec::new();
    for dim in [1, 2] {
        let bounds = vec![[0.0, 1.0]; dim];
        let n = if dim == 1 { 32 } else { 12 };
        let grid = Grid::build(dim, &bounds, n, 0.5, 1).map_err(err)?;
        let u = grid.sample(|x| (3.0 * x[0]).cos() + x.iter().product::<f64>());
        let report = neumann_extension_check(&u, 0.5, &grid, 1e-10).map_err(err)?;
        pass &= report.passed();
        let r = report.check("neumann_residual").and_then(|c| c.values.get("value").copied()).unwrap_or(f64::NAN);
        detail.push(format!("{dim}D residual {r:.2e}"));
    }
    Ok((pass, detail.join(", ")))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let cfg_path = dir.path().join("run.toml");
    let text = format!(
        "seed = 9\n{BASE_1D}\n[kernel]\nfamily = \"power_regional\"\ns = 0.5\n",
    )
    .replace("kind = \"cosine\"", "kind = \"random\"")
    .replace("n_steps = 40", "n_steps = 10");
    std::fs::write(&cfg_path, text).map_err(err)?;
    let mut traces = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("run{k}"));
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_nlch"));
        if k == 1 {
            cmd.args(["--jobs", "1"]);
        }
        let status = cmd
            .arg("--config")
            .arg(&cfg_path)
            .arg("--out")
            .arg(&out)
            .arg("solve")
            .output()
            .map_err(err)?;
        if !status.status.success() {
            return Err(format!("solve exited with {}", status.status));
        }
        traces.push(std::fs::read(out.join("trace.csv")).map_err(err)?);
    }
    Ok((traces[0] == traces[1], format!("{} bytes per trace, default pool vs one thread", traces[0].len())))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 14] = [
        ("prox_suite", prox_identities),
        ("closed_form_prox", closed_forms),
        ("gradient_consistency", gradient_consistency),
        ("implicit_euler_equivalence", implicit_euler),
        ("brute_force_oracle", brute_force_oracle),
        ("discrete_energy_inequality", energy_inequality),
        ("mass_conservation", mass_conservation),
        ("obstacle_feasibility", obstacle_feasibility_sweep),
        ("kernel_certification", kernel_certification),
        ("poincare", poincare),
        ("local_limit", local_limit),
        ("uniqueness_probe", uniqueness),
        ("neumann_extension", neumann_extension),
        ("determinism", determinism),
    ];
    let mut failures = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".to_string()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok((true, detail)) => println!("PASS {:>2} {name}: {detail} [{secs:.1}s]", k + 1),
            Ok((false, detail)) => {
                failures += 1;
                println!("FAIL {:>2} {name}: {detail} [{secs:.1}s]", k + 1);
            }
            Err(e) => {
                failures += 1;
                println!("FAIL {:>2} {name}: error: {e} [{secs:.1}s]", k + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
