//! `nlch`: command-line driver for the nonlocal Cahn–Hilliard solver.
//!
//! Exit codes: 0 success, 1 a check failed, 2 configuration error,
//! 3 numerical error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use nlch_core::config::{load_config, RunConfig};
use nlch_core::diagnostics::{
    allen_cahn_run, energy_estimate_check, interpolant_gap_check, local_eigen_ratios, local_limit_study,
    max_obstacle_violation, obstacle_sweep_check, tau_sweep_check, zeta_l1_bound_check, Check, Report, Status,
};
use nlch_core::io::{write_report, write_reports, write_snapshots, write_trace};
use nlch_core::kernels::{
    check_integrability, k3_sandwich, lipschitz_energy_check, IntegrabilityScope, KernelReport,
};
use nlch_core::potentials::{gamma_liminf_check, prox_suite, sample_points, verify_coercivity};
use nlch_core::{ConvexPart, Error, Grid, KernelFamily, Mode, OperatorKind, Potential, Trajectory};

#[derive(Parser)]
#[command(name = "nlch", version, about = "Nonlocal and fractional Cahn-Hilliard solver")]
struct Cli {
    /// Configuration file (TOML); keys can be overridden with NLCH_<SECTION>__<KEY>.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for all random choices (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides output.dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps and assembly.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scheme and write the trace, snapshots and energy report.
    Solve,
    /// Certify the configured kernel (singularity, integrability, Lipschitz energies).
    KernelCheck(KernelCheckArgs),
    /// Run the resolvent and envelope invariant suite for a potential.
    PotentialCheck(PotentialCheckArgs),
    /// Repeat the run for several step counts and compare final states.
    SweepTau {
        #[arg(long, value_delimiter = ',')]
        steps: Option<Vec<usize>>,
    },
    /// Repeat the run for several regularization parameters.
    SweepLambda {
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,
    },
    /// Repeat the run for several kernel orders.
    SweepS {
        #[arg(long = "s-list", value_delimiter = ',')]
        s_list: Option<Vec<f64>>,
    },
    /// Distances of normalized fractional runs to the classical run.
    CompareLocal {
        #[arg(long = "s-list", value_delimiter = ',')]
        s_list: Option<Vec<f64>>,
    },
    /// Run with the identity Riesz operator (Allen–Cahn flow).
    AllenCahn,
}

#[derive(Args)]
struct KernelCheckArgs {
    /// Integrability scope: full (Ω×Ω), local (interior strip) or dirichlet.
    #[arg(long)]
    scope: Option<String>,
}

#[derive(Args)]
struct PotentialCheckArgs {
    /// polynomial, logarithmic, obstacle, quartic, linear or zero.
    name: String,
    #[arg(long = "lambda-sweep", value_delimiter = ',', default_value = "1e-1,1e-2,1e-3")]
    lambda_sweep: Vec<f64>,
    #[arg(long, default_value_t = 0.8)]
    theta: f64,
    #[arg(long = "theta-c", default_value_t = 1.6)]
    theta_c: f64,
}

/// A subcommand either succeeds (with a pass/fail verdict) or errors.
type Outcome = Result<bool, Error>;

fn exit_code(err: &Error) -> u8 {
    match err.root() {
        Error::Config(_) | Error::Precondition(_) | Error::Io(_) | Error::Json(_) => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: --jobs: {e}");
            return ExitCode::from(2);
        }
    }
    match dispatch(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn dispatch(cli: &Cli) -> Outcome {
    if let Command::PotentialCheck(args) = &cli.command {
        return potential_check(args, cli.out.as_deref());
    }
    let mut cfg = match &cli.config {
        Some(path) => load_config(path)?,
        None => return Err(Error::Config(vec!["--config: a configuration file is required".to_string()])),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    match &cli.command {
        Command::Solve => solve(&cfg),
        Command::KernelCheck(args) => kernel_check(&cfg, args),
        Command::PotentialCheck(_) => unreachable!("handled above"),
        Command::SweepTau { steps } => sweep_tau(&cfg, steps.clone()),
        Command::SweepLambda { lambdas } => sweep_lambda(&cfg, lambdas.clone()),
        Command::SweepS { s_list } => sweep_s(&cfg, s_list.clone()),
        Command::CompareLocal { s_list } => compare_local(&cfg, s_list.clone()),
        Command::AllenCahn => allen_cahn(&cfg),
    }
}

fn print_report(report: &Report) {
    println!("# {}", report.title);
    for c in &report.checks {
        let status = match c.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skipped => "SKIP",
        };
        let values: Vec<String> = c.values.iter().map(|(k, v)| format!("{k}={v:.6e}")).collect();
        println!("{status} {} [{}] threshold={:.3e} {}", c.name, values.join(" "), c.threshold, c.notes);
    }
}

fn ensure_dir(dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

/// Writes the trace and snapshots of one run into `dir`.
fn save_run(cfg: &RunConfig, grid: &Grid, traj: &Trajectory, dir: &Path) -> Result<(), Error> {
    ensure_dir(dir)?;
    if cfg.output.csv {
        write_trace(traj, &dir.join("trace.csv"))?;
    }
    if cfg.output.json {
        write_snapshots(traj, &grid.meta(), dir, cfg.output.snapshot_stride)?;
    }
    Ok(())
}

fn run_config(cfg: &RunConfig) -> Result<(Grid, nlch_core::scheme::Scheme, Trajectory), Error> {
    let grid = cfg.build_grid()?;
    let u0 = cfg.initial_field(&grid);
    let scheme = cfg.build_scheme(&grid, &u0)?;
    let traj = scheme.run(&u0)?;
    Ok((grid, scheme, traj))
}

fn solve(cfg: &RunConfig) -> Outcome {
    let (grid, scheme, traj) = run_config(cfg)?;
    save_run(cfg, &grid, &traj, &cfg.output.dir)?;
    let mut report = energy_estimate_check(&traj, &scheme, cfg.diagnostics.energy_factor);
    report.push(interpolant_gap_check(&traj, &scheme));
    if matches!(scheme.config().potential.gamma, ConvexPart::Obstacle) {
        report.push(nlch_core::diagnostics::obstacle_feasibility(&traj, &scheme));
    }
    if cfg.output.json {
        write_report(&report, &cfg.output.dir.join("report.json"))?;
    }
    print_report(&report);
    Ok(report.passed())
}

fn kernel_check(cfg: &RunConfig, args: &KernelCheckArgs) -> Outcome {
    let grid = cfg.build_grid()?;
    let Some(spec) = &cfg.kernel.spec else {
        return Err(Error::Config(vec!["kernel.family: the stencil has nothing to certify".to_string()]));
    };
    let samples = cfg.diagnostics.samples;
    let levels = cfg.diagnostics.levels;
    let mut report = Report::new(format!("kernel {}", cfg_family(spec)));
    let base = KernelReport::build(spec, &grid, cfg.kernel.mode, samples, levels)?;
    let integrability = match args.scope.as_deref() {
        None => base.integrability.clone(),
        Some(scope) => {
            let scope = match scope {
                "full" => IntegrabilityScope::Regional,
                "local" => IntegrabilityScope::Local {
                    delta: 0.25 * grid.bounds()[0][1].min(1.0),
                },
                "dirichlet" => IntegrabilityScope::Dirichlet,
                other => return Err(Error::Config(vec![format!("--scope: unknown scope '{other}'")])),
            };
            check_integrability(spec, &grid, scope, levels)?
        }
    };
    let s = &base.singularity;
    report.push(
        Check::at_least("singularity", s.margin, s.threshold)
            .with_value("order", s.order)
            .with_value("samples", s.samples as f64),
    );
    let v = &integrability.verdict;
    let mut check = Check::verdict("integrability", v.pass, v.relative_change)
        .with_value("extrapolated", v.extrapolated)
        .with_value("ratio", v.ratio)
        .with_value("relative_change", v.relative_change);
    for (r, e) in integrability.resolutions.iter().zip(&integrability.estimates) {
        check = check.with_value(&format!("estimate[n={r}]"), *e);
    }
    report.push(check);
    report.push(Check::at_most("symmetry_defect", base.symmetry_defect, 1e-12));
    if !spec.is_regional_family() {
        let lip = lipschitz_energy_check(spec, &grid, levels)?;
        for field in &lip.fields {
            report.push(
                Check::verdict(format!("lipschitz_energy[{}]", field.name), field.verdict.pass, field.verdict.relative_change)
                    .with_value("extrapolated", field.verdict.extrapolated),
            );
        }
    }
    if matches!(spec.family, KernelFamily::NeumannK3 { .. }) {
        let fine = grid.refined(2, 2)?;
        let sandwich = k3_sandwich(spec, &grid, &fine, 2.0)?;
        report.push(
            Check::verdict("neumann_sandwich", sandwich.pass, 0.0)
                .with_value("fitted_lower", sandwich.fitted_lower)
                .with_value("fitted_upper", sandwich.fitted_upper)
                .with_value("observed_lower", sandwich.observed_lower)
                .with_value("observed_upper", sandwich.observed_upper),
        );
    }
    ensure_dir(&cfg.output.dir)?;
    write_report(&report, &cfg.output.dir.join("kernel_report.json"))?;
    std::fs::write(cfg.output.dir.join("kernel_certificate.json"), serde_json::to_string_pretty(&base)?)?;
    print_report(&report);
    Ok(report.passed())
}

fn cfg_family(spec: &nlch_core::KernelSpec) -> String {
    serde_json::to_value(&spec.family)
        .ok()
        .and_then(|v| v.get("family").and_then(|f| f.as_str()).map(str::to_string))
        .unwrap_or_default()
}

fn potential_check(args: &PotentialCheckArgs, out: Option<&Path>) -> Outcome {
    let pot = Potential::by_name(&args.name, args.theta, args.theta_c)?;
    if args.lambda_sweep.iter().any(|l| !(*l > 0.0 && *l < 1.0)) {
        return Err(Error::Config(vec!["--lambda-sweep: values must lie in (0,1)".to_string()]));
    }
    let mut report = prox_suite(&pot, &args.lambda_sweep)?;
    let r: Vec<f64> = (0..=200).map(|k| -10.0 + 0.1 * k as f64).collect();
    report.extend(verify_coercivity(&pot, &args.lambda_sweep, &r)?);
    let mut sweep = args.lambda_sweep.clone();
    sweep.sort_by(|a, b| b.total_cmp(a));
    report.extend(gamma_liminf_check(&pot, &sample_points(), &sweep, 1.0, 1e6)?);
    if let Some(dir) = out {
        ensure_dir(dir)?;
        write_report(&report, &dir.join(format!("potential_{}.json", args.name)))?;
    }
    print_report(&report);
    Ok(report.passed())
}

fn sweep_tau(cfg: &RunConfig, steps: Option<Vec<usize>>) -> Outcome {
    let steps = steps.unwrap_or_else(|| cfg.diagnostics.steps_list.clone());
    let grid = cfg.build_grid()?;
    let u0 = cfg.initial_field(&grid);
    let runs: Vec<(usize, Trajectory)> = steps
        .par_iter()
        .map(|&n| {
            let mut c = cfg.clone();
            c.scheme.n_steps = n;
            c.validate()?;
            let traj = c.build_scheme(&grid, &u0)?.run(&u0)?;
            save_run(&c, &grid, &traj, &cfg.output.dir.join(format!("steps_{n}")))?;
            Ok((n, traj))
        })
        .collect::<Result<_, Error>>()?;
    let finals: Vec<(usize, nlch_core::Field)> =
        runs.iter().map(|(n, t)| (*n, t.last().expect("nonempty").clone())).collect();
    let report = tau_sweep_check(&finals, &grid.weights_vector());
    write_report(&report, &cfg.output.dir.join("sweep_tau.json"))?;
    print_report(&report);
    Ok(report.passed())
}

fn sweep_lambda(cfg: &RunConfig, lambdas: Option<Vec<f64>>) -> Outcome {
    let lambdas = lambdas.unwrap_or_else(|| cfg.diagnostics.lambda_list.clone());
    let grid = cfg.build_grid()?;
    let u0 = cfg.initial_field(&grid);
    let runs: Vec<(f64, Trajectory, nlch_core::scheme::Scheme)> = lambdas
        .par_iter()
        .map(|&lambda| {
            let mut c = cfg.clone();
            c.scheme.lambda = lambda;
            c.validate()?;
            let scheme = c.build_scheme(&grid, &u0)?;
            let traj = scheme.run(&u0)?;
            save_run(&c, &grid, &traj, &cfg.output.dir.join(format!("lambda_{lambda:e}")))?;
            Ok((lambda, traj, scheme))
        })
        .collect::<Result<_, Error>>()?;
    let mut reports = Vec::new();
    for (lambda, traj, scheme) in &runs {
        let mut r = energy_estimate_check(traj, scheme, cfg.diagnostics.energy_factor);
        r.title = format!("energy estimate [lambda={lambda:e}]");
        reports.push(r);
    }
    let obstacle = matches!(runs[0].2.config().potential.gamma, ConvexPart::Obstacle);
    if obstacle {
        let mut r = obstacle_sweep_check(&runs);
        for (lambda, traj, _) in &runs {
            r.checks[0].values.insert(format!("violation[lambda={lambda:e}]"), max_obstacle_violation(traj));
        }
        reports.push(r);
    }
    let pairs: Vec<(f64, Trajectory)> = runs.iter().map(|(l, t, _)| (*l, t.clone())).collect();
    let mut zeta = Report::new("zeta L1 bound");
    zeta.push(zeta_l1_bound_check(&pairs, &runs[0].2, cfg.diagnostics.zeta_ratio));
    reports.push(zeta);
    write_reports(&reports, &cfg.output.dir.join("sweep_lambda.json"))?;
    reports.iter().for_each(print_report);
    Ok(reports.iter().all(Report::passed))
}

fn with_order(spec: &nlch_core::KernelSpec, s: f64) -> Result<nlch_core::KernelSpec, Error> {
    let mut spec = spec.clone();
    match &mut spec.family {
        KernelFamily::PowerGlobal { s: v, .. }
        | KernelFamily::PowerRegional { s: v, .. }
        | KernelFamily::PeriodicLattice { s: v, .. }
        | KernelFamily::NeumannK3 { s: v, .. }
        | KernelFamily::SpectralNeumannK4 { s: v, .. } => *v = s,
        _ => {
            return Err(Error::Config(vec![
                "kernel.family: sweep-s needs a family with a single order s".to_string(),
            ]))
        }
    }
    Ok(spec)
}

fn sweep_s(cfg: &RunConfig, s_list: Option<Vec<f64>>) -> Outcome {
    let s_list = s_list.unwrap_or_else(|| cfg.diagnostics.s_list.clone());
    let Some(spec) = &cfg.kernel.spec else {
        return Err(Error::Config(vec!["kernel.family: sweep-s needs a fractional kernel".to_string()]));
    };
    let grid = cfg.build_grid()?;
    let u0 = cfg.initial_field(&grid);
    let runs: Vec<(f64, Trajectory, nlch_core::scheme::Scheme)> = s_list
        .par_iter()
        .map(|&s| {
            let mut c = cfg.clone();
            c.kernel.spec = Some(with_order(spec, s)?);
            c.validate()?;
            let scheme = c.build_scheme(&grid, &u0)?;
            let traj = scheme.run(&u0)?;
            save_run(&c, &grid, &traj, &cfg.output.dir.join(format!("s_{s}")))?;
            Ok((s, traj, scheme))
        })
        .collect::<Result<_, Error>>()?;
    let mut reports = Vec::new();
    for (s, traj, scheme) in &runs {
        let mut r = energy_estimate_check(traj, scheme, cfg.diagnostics.energy_factor);
        r.title = format!("energy estimate [s={s}]");
        reports.push(r);
    }
    if cfg.kernel.mode == Mode::Dirichlet && spec.q() == 2.0 && grid.is_box() {
        let mut r = Report::new("local eigenvalue ratios");
        for &s in &s_list {
            let ratios = local_eigen_ratios(&grid, s, 4)?;
            let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = ratios.iter().copied().fold(0.0, f64::max);
            let mut c = Check::at_most(format!("ratio_spread[s={s}]"), hi / lo - 1.0, f64::INFINITY);
            for (k, v) in ratios.iter().enumerate() {
                c = c.with_value(&format!("mode{}", k + 1), *v);
            }
            r.push(c);
        }
        reports.push(r);
    }
    write_reports(&reports, &cfg.output.dir.join("sweep_s.json"))?;
    reports.iter().for_each(print_report);
    Ok(reports.iter().all(Report::passed))
}

fn compare_local(cfg: &RunConfig, s_list: Option<Vec<f64>>) -> Outcome {
    let s_list = s_list.unwrap_or_else(|| cfg.diagnostics.s_list.clone());
    if cfg.kernel.mode != Mode::Dirichlet || cfg.scheme.q != 2.0 {
        return Err(Error::Config(vec![
            "kernel.mode, scheme.q: compare-local needs a dirichlet kernel with q = 2".to_string(),
        ]));
    }
    let grid = cfg.build_grid()?;
    let u0 = cfg.initial_field(&grid);
    let study = local_limit_study(&grid, &u0, &s_list, |km| cfg.build_scheme_with_kernel(&grid, &u0, km))?;
    ensure_dir(&cfg.output.dir)?;
    write_report(&study.report, &cfg.output.dir.join("compare_local.json"))?;
    print_report(&study.report);
    Ok(study.report.passed())
}

fn allen_cahn(cfg: &RunConfig) -> Outcome {
    let mut c = cfg.clone();
    c.operator = OperatorKind::IdentityRiesz;
    c.scheme.conserved = false;
    c.scheme.mass = None;
    c.validate()?;
    let grid = c.build_grid()?;
    let u0 = c.initial_field(&grid);
    let scheme = c.build_scheme(&grid, &u0)?;
    let traj = allen_cahn_run(&scheme, &u0)?;
    save_run(&c, &grid, &traj, &c.output.dir)?;
    let mut report = energy_estimate_check(&traj, &scheme, c.diagnostics.energy_factor);
    report.title = "allen-cahn energy estimate".to_string();
    if c.output.json {
        write_report(&report, &c.output.dir.join("report.json"))?;
    }
    print_report(&report);
    Ok(report.passed())
}
