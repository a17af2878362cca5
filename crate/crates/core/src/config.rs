//! Run configuration: TOML text with sections `grid`, `kernel`, `potential`,
//! `operator`, `scheme`, `initial`, `output` and `diagnostics`.
//!
//! Environment variables `NLCH_<SECTION>__<KEY>=<value>` override single
//! keys (`NLCH_SEED` overrides the top-level seed). Values are parsed as TOML
//! scalars or arrays, falling back to plain strings. All validation errors
//! are collected and reported together.

use std::collections::BTreeSet;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use toml::{Table, Value};

use crate::grid::Grid;
use crate::kernels::{KernelFamily, KernelMatrix, KernelSpec, Mode, StencilClosure, K4_ELLIPTICITY};
use crate::operators::{OperatorKind, OperatorL, PhiSpec};
use crate::potentials::Potential;
use crate::scheme::{InnerSettings, MassMode, Scheme, SchemeConfig};
use crate::{Error, Field, Result};

/// Prefix of the environment overrides.
pub const ENV_PREFIX: &str = "NLCH_";

#[derive(Clone, Debug, PartialEq)]
pub struct GridConfig {
    pub dim: usize,
    pub bounds: Vec<[f64; 2]>,
    pub n: usize,
    pub ext_radius: f64,
    pub ext_refine: usize,
    /// Disjoint 1D intervals; replaces `bounds` when present.
    pub components: Option<Vec<[f64; 2]>>,
    pub cells_per_unit: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KernelConfig {
    /// `None` selects the nearest-neighbour (classical) Laplacian.
    pub spec: Option<KernelSpec>,
    pub mode: Mode,
    pub stencil_scale: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PotentialConfig {
    pub name: String,
    pub theta: f64,
    pub theta_c: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PhiForm {
    Power,
    HalfPower,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SchemeSettings {
    pub horizon: f64,
    pub n_steps: usize,
    pub lambda: f64,
    pub phi: PhiForm,
    pub q: f64,
    pub conserved: bool,
    /// Conserved mass; defaults to the mass of the initial datum.
    pub mass: Option<f64>,
    pub inner: InnerSettings,
}

impl SchemeSettings {
    pub fn tau(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InitialKind {
    Zero,
    Constant,
    Cosine,
    Sine,
    Random,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InitialConfig {
    pub kind: InitialKind,
    pub mean: f64,
    pub amplitude: f64,
    pub wavenumber: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Every `snapshot_stride`-th state is written as JSON (0 = none).
    pub snapshot_stride: usize,
    pub csv: bool,
    pub json: bool,
}

/// Thresholds and sweep lists of the diagnostic subcommands.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticsConfig {
    pub energy_factor: f64,
    pub lambda_list: Vec<f64>,
    pub s_list: Vec<f64>,
    pub steps_list: Vec<usize>,
    pub samples: usize,
    pub levels: usize,
    pub probe_count: usize,
    pub probe_amplitude: f64,
    pub zeta_ratio: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub grid: GridConfig,
    pub kernel: KernelConfig,
    pub potential: PotentialConfig,
    pub operator: OperatorKind,
    pub scheme: SchemeSettings,
    pub initial: InitialConfig,
    pub output: OutputConfig,
    pub diagnostics: DiagnosticsConfig,
}

/// Typed access to one section; records consumed keys and errors.
struct Section<'a> {
    name: &'a str,
    table: Table,
    used: BTreeSet<String>,
    errors: &'a mut Vec<String>,
}

impl<'a> Section<'a> {
    fn new(root: &mut Table, name: &'a str, errors: &'a mut Vec<String>) -> Self {
        let table = match root.remove(name) {
            None => Table::new(),
            Some(Value::Table(t)) => t,
            Some(_) => {
                errors.push(format!("{name}: expected a section"));
                Table::new()
            }
        };
        Self {
            name,
            table,
            used: BTreeSet::new(),
            errors,
        }
    }

    fn key(&self, key: &str) -> String {
        format!("{}.{key}", self.name)
    }

    fn raw(&mut self, key: &str) -> Option<Value> {
        self.used.insert(key.to_string());
        self.table.get(key).cloned()
    }

    fn has(&self, key: &str) -> bool {
        self.table.contains_key(key)
    }

    fn opt_f64(&mut self, key: &str) -> Option<f64> {
        match self.raw(key)? {
            Value::Float(x) => Some(x),
            Value::Integer(i) => Some(i as f64),
            other => {
                let k = self.key(key);
                self.errors.push(format!("{k}: expected a number, got {}", other.type_str()));
                None
            }
        }
    }

    fn f64(&mut self, key: &str, default: f64) -> f64 {
        self.opt_f64(key).unwrap_or(default)
    }

    fn opt_usize(&mut self, key: &str) -> Option<usize> {
        match self.raw(key)? {
            Value::Integer(i) if i >= 0 => Some(i as usize),
            other => {
                let k = self.key(key);
                self.errors.push(format!("{k}: expected a non-negative integer, got {other}"));
                None
            }
        }
    }

    fn usize(&mut self, key: &str, default: usize) -> usize {
        self.opt_usize(key).unwrap_or(default)
    }

    fn bool(&mut self, key: &str, default: bool) -> bool {
        match self.raw(key) {
            None => default,
            Some(Value::Boolean(b)) => b,
            Some(other) => {
                let k = self.key(key);
                self.errors.push(format!("{k}: expected a boolean, got {}", other.type_str()));
                default
            }
        }
    }

    fn string(&mut self, key: &str, default: &str) -> String {
        match self.raw(key) {
            None => default.to_string(),
            Some(Value::String(s)) => s,
            Some(other) => {
                let k = self.key(key);
                self.errors.push(format!("{k}: expected a string, got {}", other.type_str()));
                default.to_string()
            }
        }
    }

    fn f64_list(&mut self, key: &str, default: &[f64]) -> Vec<f64> {
        match self.raw(key) {
            None => default.to_vec(),
            Some(Value::Array(a)) => {
                let mut out = Vec::new();
                for v in a {
                    match v {
                        Value::Float(x) => out.push(x),
                        Value::Integer(i) => out.push(i as f64),
                        _ => {
                            let k = self.key(key);
                            self.errors.push(format!("{k}: expected a list of numbers"));
                            return default.to_vec();
                        }
                    }
                }
                out
            }
            Some(_) => {
                let k = self.key(key);
                self.errors.push(format!("{k}: expected a list of numbers"));
                default.to_vec()
            }
        }
    }

    fn usize_list(&mut self, key: &str, default: &[usize]) -> Vec<usize> {
        let values = self.f64_list(key, &default.iter().map(|&v| v as f64).collect::<Vec<_>>());
        if values.iter().any(|v| *v < 0.0 || v.fract() != 0.0) {
            let k = self.key(key);
            self.errors.push(format!("{k}: expected non-negative integers"));
            return default.to_vec();
        }
        values.into_iter().map(|v| v as usize).collect()
    }

    fn intervals(&mut self, key: &str) -> Option<Vec<[f64; 2]>> {
        let value = self.raw(key)?;
        let parsed = match &value {
            Value::Array(a) => a
                .iter()
                .map(|row| match row {
                    Value::Array(p) if p.len() == 2 => {
                        let num = |v: &Value| match v {
                            Value::Float(x) => Some(*x),
                            Value::Integer(i) => Some(*i as f64),
                            _ => None,
                        };
                        Some([num(&p[0])?, num(&p[1])?])
                    }
                    _ => None,
                })
                .collect::<Option<Vec<_>>>(),
            _ => None,
        };
        if parsed.is_none() {
            let k = self.key(key);
            self.errors.push(format!("{k}: expected a list of [lo, hi] pairs"));
        }
        parsed
    }

    fn finish(self) {
        for key in self.table.keys() {
            if !self.used.contains(key) {
                self.errors.push(format!("{}.{key}: unknown key", self.name));
            }
        }
    }
}

fn lowercase_keys(table: Table) -> Table {
    table
        .into_iter()
        .map(|(k, v)| {
            let v = match v {
                Value::Table(t) => Value::Table(lowercase_keys(t)),
                other => other,
            };
            (k.to_lowercase(), v)
        })
        .collect()
}

fn parse_env_value(text: &str) -> Value {
    match format!("v = {text}").parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(text.to_string())),
        Err(_) => Value::String(text.to_string()),
    }
}

/// Applies `NLCH_SECTION__KEY=value` pairs to a parsed table.
fn apply_env<I, K, V>(root: &mut Table, env: I)
where
    I: IntoIterator<Item = (K, V)>,
    K: AsRef<str>,
    V: AsRef<str>,
{
    for (name, value) in env {
        let Some(rest) = name.as_ref().strip_prefix(ENV_PREFIX) else {
            continue;
        };
        let rest = rest.to_lowercase();
        let value = parse_env_value(value.as_ref());
        match rest.split_once("__") {
            Some((section, key)) if !section.is_empty() && !key.is_empty() => {
                let entry = root
                    .entry(section.to_string())
                    .or_insert_with(|| Value::Table(Table::new()));
                if let Value::Table(t) = entry {
                    t.insert(key.to_string(), value);
                }
            }
            None if rest == "seed" => {
                root.insert(rest, value);
            }
            _ => {}
        }
    }
}

/// Parses and validates configuration text (no environment overrides).
pub fn parse_config(text: &str) -> Result<RunConfig> {
    parse_config_with_env(text, std::iter::empty::<(String, String)>())
}

/// Parses configuration text with the given environment overrides.
pub fn parse_config_with_env<I, K, V>(text: &str, env: I) -> Result<RunConfig>
where
    I: IntoIterator<Item = (K, V)>,
    K: AsRef<str>,
    V: AsRef<str>,
{
    let root: Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::config(format!("syntax: {}", e.message())))?;
    let mut root = lowercase_keys(root);
    apply_env(&mut root, env);
    RunConfig::from_table(root)
}

/// Reads a configuration file and applies the process environment.
pub fn load_config(path: &std::path::Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(format!("--config: cannot read {}: {e}", path.display())))?;
    parse_config_with_env(&text, std::env::vars())
}

fn parse_mode(text: &str, errors: &mut Vec<String>) -> Mode {
    match text {
        "dirichlet" => Mode::Dirichlet,
        "regional" => Mode::Regional,
        "periodic" => Mode::Periodic,
        other => {
            errors.push(format!("kernel.mode: unknown mode '{other}'"));
            Mode::Dirichlet
        }
    }
}

fn parse_operator(name: &str, sigma: f64, errors: &mut Vec<String>) -> Option<OperatorKind> {
    Some(match name {
        "laplacian_dirichlet" => OperatorKind::LaplacianDirichlet,
        "laplacian_neumann" => OperatorKind::LaplacianNeumann,
        "identity_riesz" => OperatorKind::IdentityRiesz,
        "fractional_dirichlet" => OperatorKind::FractionalDirichlet { sigma },
        "regional_fractional" => OperatorKind::RegionalFractional { sigma },
        other => {
            errors.push(format!("operator.kind: unknown operator '{other}'"));
            return None;
        }
    })
}

impl RunConfig {
    fn from_table(mut root: Table) -> Result<Self> {
        let mut errors = Vec::new();
        let seed = match root.remove("seed") {
            None => 0,
            Some(Value::Integer(i)) if i >= 0 => i as u64,
            Some(other) => {
                errors.push(format!("seed: expected a non-negative integer, got {other}"));
                0
            }
        };

        let grid = {
            let mut s = Section::new(&mut root, "grid", &mut errors);
            let dim = s.usize("dim", 1);
            let bounds = s.intervals("box").unwrap_or_else(|| vec![[0.0, 1.0]; dim.clamp(1, 2)]);
            let n = s.usize("n", 32);
            let ext_radius = s.f64("ext_radius", 1.0);
            let ext_refine = s.usize("ext_refine", 2);
            let components = s.intervals("components");
            let cells_per_unit = s.usize("cells_per_unit", 8);
            s.finish();
            GridConfig {
                dim,
                bounds,
                n,
                ext_radius,
                ext_refine,
                components,
                cells_per_unit,
            }
        };

        let kernel = {
            let mut s = Section::new(&mut root, "kernel", &mut errors);
            let family = s.string("family", "power_global");
            let default_mode = match family.as_str() {
                "power_global" => "dirichlet",
                "periodic_lattice" => "periodic",
                "stencil" => "dirichlet",
                _ => "regional",
            };
            let mode_text = s.string("mode", default_mode);
            let q = s.f64("q", 2.0);
            let sv = s.f64("s", 0.5);
            let fam = match family.as_str() {
                "power_global" => Some(KernelFamily::PowerGlobal { s: sv, q }),
                "power_regional" => Some(KernelFamily::PowerRegional { s: sv, q }),
                "sum_power" => Some(KernelFamily::SumPower {
                    s1: s.f64("s1", 0.3),
                    s2: s.f64("s2", 0.6),
                    q,
                }),
                "variable_order" => Some(KernelFamily::VariableOrder {
                    s0: s.f64("s0", 0.3),
                    s1: s.f64("s1", 0.6),
                    q,
                    center: s.f64("center", 0.5),
                    width: s.f64("width", 0.1),
                }),
                "piecewise_region" => Some(KernelFamily::PiecewiseRegion {
                    region: s.intervals("region").unwrap_or_else(|| vec![[0.0, 0.5]; grid.dim.clamp(1, 2)]),
                    s_in: s.f64("s_in", 0.3),
                    s_out: s.f64("s_out", 0.6),
                    q,
                }),
                "periodic_lattice" => Some(KernelFamily::PeriodicLattice {
                    s: sv,
                    q,
                    cutoff: s.usize("cutoff", 64),
                }),
                "neumann_k3" => Some(KernelFamily::NeumannK3 {
                    s: sv,
                    resolution: s.usize("resolution", 8),
                    domain: grid.bounds.clone(),
                }),
                "spectral_k4" => Some(KernelFamily::SpectralNeumannK4 {
                    s: sv,
                    eigen_count: s.opt_usize("eigen_count"),
                }),
                "stencil" => None,
                other => {
                    s.errors.push(format!("kernel.family: unknown family '{other}'"));
                    None
                }
            };
            if matches!(family.as_str(), "neumann_k3" | "spectral_k4" | "stencil") && s.has("q") && q != 2.0 {
                s.errors.push(format!("kernel.q: family {family} needs q = 2"));
            }
            let spec = fam.map(|f| {
                let mut spec = KernelSpec::new(f);
                spec.normalization = s.f64("normalization", 1.0);
                spec.rho = s.f64("rho", 1.0);
                spec.ellipticity = s.f64("ellipticity", if family == "spectral_k4" { K4_ELLIPTICITY } else { 1.0 });
                spec.symmetric = s.bool("symmetric", true);
                spec.truncation = s.opt_f64("truncation");
                spec
            });
            let stencil_scale = s.f64("scale", 1.0);
            let mode = parse_mode(&mode_text, s.errors);
            s.finish();
            KernelConfig {
                spec,
                mode,
                stencil_scale,
            }
        };

        let potential = {
            let mut s = Section::new(&mut root, "potential", &mut errors);
            let p = PotentialConfig {
                name: s.string("name", "polynomial"),
                theta: s.f64("theta", 0.8),
                theta_c: s.f64("theta_c", 1.6),
            };
            s.finish();
            p
        };

        let operator = {
            let mut s = Section::new(&mut root, "operator", &mut errors);
            let default = if kernel.mode == Mode::Dirichlet {
                "laplacian_dirichlet"
            } else {
                "laplacian_neumann"
            };
            let kind = s.string("kind", default);
            let sigma = s.f64("sigma", 0.5);
            let op = if kind == "sum" {
                let parts: Vec<String> = match s.raw("parts") {
                    Some(Value::Array(a)) => a.iter().filter_map(|v| v.as_str().map(str::to_string)).collect(),
                    _ => {
                        s.errors.push("operator.parts: a sum needs a list of operator names".to_string());
                        Vec::new()
                    }
                };
                let parts: Vec<OperatorKind> =
                    parts.iter().filter_map(|p| parse_operator(p, sigma, s.errors)).collect();
                OperatorKind::Sum { parts }
            } else {
                parse_operator(&kind, sigma, s.errors).unwrap_or(OperatorKind::IdentityRiesz)
            };
            s.finish();
            op
        };

        let scheme = {
            let mut s = Section::new(&mut root, "scheme", &mut errors);
            let horizon = s.opt_f64("t").or_else(|| s.opt_f64("horizon"));
            let n_steps = s.opt_usize("n_steps");
            let tau = s.opt_f64("tau");
            let (horizon, n_steps) = match (horizon, n_steps, tau) {
                (Some(t), Some(n), None) => (t, n),
                (Some(t), Some(n), Some(tau)) => {
                    if n == 0 || (t / n as f64 - tau).abs() > 1e-12 * tau.abs().max(1.0) {
                        s.errors.push(format!("scheme.tau, scheme.T, scheme.n_steps: tau = {tau} differs from T/n_steps"));
                    }
                    (t, n)
                }
                (Some(t), None, Some(tau)) => {
                    let n = (t / tau).round();
                    if !(n >= 1.0) || (n * tau - t).abs() > 1e-9 * t.abs() {
                        s.errors.push("scheme.tau, scheme.T: T must be a positive multiple of tau".to_string());
                    }
                    (t, n.max(1.0) as usize)
                }
                (None, Some(n), Some(tau)) => (n as f64 * tau, n),
                _ => {
                    s.errors.push("scheme.T, scheme.n_steps, scheme.tau: two of the three are required".to_string());
                    (1.0, 1)
                }
            };
            let lambda = s.f64("lambda", 1e-2);
            let phi = match s.string("phi", "power").as_str() {
                "power" => PhiForm::Power,
                "half_power" => PhiForm::HalfPower,
                other => {
                    s.errors.push(format!("scheme.phi: unknown form '{other}'"));
                    PhiForm::Power
                }
            };
            let kernel_q = kernel.spec.as_ref().map(|k| k.q()).unwrap_or(2.0);
            let q = s.f64("q", kernel_q);
            let conserved = match s.string("mass_mode", if kernel.mode == Mode::Dirichlet { "free" } else { "conserved" }).as_str() {
                "free" => false,
                "conserved" => true,
                other => {
                    s.errors.push(format!("scheme.mass_mode: unknown mode '{other}'"));
                    false
                }
            };
            let mass = s.opt_f64("mass");
            let defaults = InnerSettings::default();
            let inner = InnerSettings {
                tol: s.f64("tol", defaults.tol),
                energy_rtol: s.f64("energy_rtol", defaults.energy_rtol),
                max_iter: s.usize("max_iter", defaults.max_iter),
                step0: s.f64("step0", defaults.step0),
                accelerated: s.bool("accelerated", defaults.accelerated),
            };
            s.finish();
            SchemeSettings {
                horizon,
                n_steps,
                lambda,
                phi,
                q,
                conserved,
                mass,
                inner,
            }
        };

        let initial = {
            let mut s = Section::new(&mut root, "initial", &mut errors);
            let kind = match s.string("kind", "cosine").as_str() {
                "zero" => InitialKind::Zero,
                "constant" => InitialKind::Constant,
                "cosine" => InitialKind::Cosine,
                "sine" => InitialKind::Sine,
                "random" => InitialKind::Random,
                other => {
                    s.errors.push(format!("initial.kind: unknown kind '{other}'"));
                    InitialKind::Zero
                }
            };
            let init = InitialConfig {
                kind,
                mean: s.f64("mean", 0.0),
                amplitude: s.f64("amplitude", 0.5),
                wavenumber: s.f64("wavenumber", 2.0),
            };
            s.finish();
            init
        };

        let output = {
            let mut s = Section::new(&mut root, "output", &mut errors);
            let dir = PathBuf::from(s.string("dir", "out"));
            let snapshot_stride = s.usize("snapshot_stride", 1);
            let formats: Vec<String> = match s.raw("formats") {
                None => vec!["csv".to_string(), "json".to_string()],
                Some(Value::Array(a)) => a.iter().filter_map(|v| v.as_str().map(str::to_string)).collect(),
                Some(_) => {
                    s.errors.push("output.formats: expected a list of strings".to_string());
                    Vec::new()
                }
            };
            for f in &formats {
                if f != "csv" && f != "json" {
                    s.errors.push(format!("output.formats: unknown format '{f}'"));
                }
            }
            s.finish();
            OutputConfig {
                dir,
                snapshot_stride,
                csv: formats.iter().any(|f| f == "csv"),
                json: formats.iter().any(|f| f == "json"),
            }
        };

        let diagnostics = {
            let mut s = Section::new(&mut root, "diagnostics", &mut errors);
            let d = DiagnosticsConfig {
                energy_factor: s.f64("energy_factor", 10.0),
                lambda_list: s.f64_list("lambda_list", &[1e-1, 1e-2, 1e-3]),
                s_list: s.f64_list("s_list", &[0.5, 0.7, 0.9, 0.95]),
                steps_list: s.usize_list("steps_list", &[10, 20, 40, 80]),
                samples: s.usize("samples", 64),
                levels: s.usize("levels", 5),
                probe_count: s.usize("probe_count", 3),
                probe_amplitude: s.f64("probe_amplitude", 1e-2),
                zeta_ratio: s.f64("zeta_ratio", 2.0),
            };
            s.finish();
            d
        };

        for key in root.keys() {
            errors.push(format!("{key}: unknown section"));
        }

        let cfg = RunConfig {
            seed,
            grid,
            kernel,
            potential,
            operator,
            scheme,
            initial,
            output,
            diagnostics,
        };
        cfg.validate_into(&mut errors);
        if errors.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::Config(errors))
        }
    }

    /// Re-validates after programmatic edits (sweeps).
    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        self.validate_into(&mut errors);
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errors))
        }
    }

    fn validate_into(&self, errors: &mut Vec<String>) {
        let g = &self.grid;
        if !(1..=2).contains(&g.dim) {
            errors.push(format!("grid.dim: must be 1 or 2, got {}", g.dim));
        }
        if g.components.is_none() {
            if g.bounds.len() != g.dim {
                errors.push(format!("grid.box, grid.dim: box has {} axes for dim {}", g.bounds.len(), g.dim));
            }
            if g.bounds.iter().any(|[lo, hi]| !(lo < hi)) {
                errors.push("grid.box: every axis needs lo < hi".to_string());
            }
            if g.n < 2 {
                errors.push(format!("grid.n: must be at least 2, got {}", g.n));
            }
        } else if g.dim != 1 {
            errors.push("grid.components, grid.dim: interval unions are one-dimensional".to_string());
        }
        if !(g.ext_radius >= 0.0) {
            errors.push(format!("grid.ext_radius: must be non-negative, got {}", g.ext_radius));
        }
        if g.ext_refine == 0 {
            errors.push("grid.ext_refine: must be at least 1".to_string());
        }

        let k = &self.kernel;
        match &k.spec {
            Some(spec) => {
                if let Err(Error::Config(list)) = spec.validate() {
                    errors.extend(list);
                }
                if !spec.supports_mode(k.mode) {
                    errors.push(format!("kernel.mode, kernel.family: mode {:?} is not supported by this family", k.mode));
                }
            }
            None => {
                if k.mode == Mode::Periodic {
                    errors.push("kernel.mode, kernel.family: the stencil has no periodic closure".to_string());
                }
                if !(k.stencil_scale > 0.0) {
                    errors.push("kernel.scale: must be positive".to_string());
                }
            }
        }
        if k.mode == Mode::Dirichlet && g.components.is_some() {
            errors.push("kernel.mode, grid.components: dirichlet kernels need a box grid".to_string());
        }

        if let Err(Error::Config(list)) = Potential::by_name(&self.potential.name, self.potential.theta, self.potential.theta_c) {
            errors.extend(list);
        }

        let s = &self.scheme;
        if !(s.horizon > 0.0 && s.horizon.is_finite()) {
            errors.push(format!("scheme.T: must be positive, got {}", s.horizon));
        }
        if s.n_steps == 0 {
            errors.push("scheme.n_steps: must be at least 1".to_string());
        }
        if !(s.lambda > 0.0 && s.lambda < 1.0) {
            errors.push(format!("scheme.lambda: must lie in (0,1), got {}", s.lambda));
        }
        let kernel_q = k.spec.as_ref().map(|k| k.q()).unwrap_or(2.0);
        if s.q != kernel_q {
            errors.push(format!("scheme.q, kernel.q: phi exponent {} differs from the kernel exponent {kernel_q}", s.q));
        }
        if !(s.inner.tol > 0.0) || s.inner.max_iter == 0 || !(s.inner.step0 > 0.0) {
            errors.push("scheme.tol, scheme.max_iter, scheme.step0: must be positive".to_string());
        }

        if let OperatorKind::Sum { parts } = &self.operator {
            if parts.is_empty() {
                errors.push("operator.parts: a sum needs at least one part".to_string());
            }
        }
        let split = self.operator.annihilates_constants();
        if s.conserved {
            if k.mode == Mode::Dirichlet {
                errors.push("scheme.mass_mode, kernel.mode: conserved mode needs a regional or periodic kernel".to_string());
            }
            if !split {
                errors.push("scheme.mass_mode, operator.kind: conserved mode needs an operator annihilating constants".to_string());
            }
            if let (Some(m), Ok(p)) = (
                s.mass,
                Potential::by_name(&self.potential.name, self.potential.theta, self.potential.theta_c),
            ) {
                if !p.in_interior(m) {
                    errors.push(format!("scheme.mass, potential.name: mass {m} is not interior to the domain"));
                }
            }
        } else if split {
            errors.push("scheme.mass_mode, operator.kind: an operator annihilating constants needs conserved mode".to_string());
        }
        for (name, list) in [("diagnostics.lambda_list", &self.diagnostics.lambda_list), ("diagnostics.s_list", &self.diagnostics.s_list)] {
            if list.iter().any(|v| !(*v > 0.0 && *v < 1.0)) {
                errors.push(format!("{name}: values must lie in (0,1)"));
            }
        }
        if self.diagnostics.levels < 4 {
            errors.push("diagnostics.levels: at least 4 refinement levels are needed".to_string());
        }
    }

    pub fn build_grid(&self) -> Result<Grid> {
        match &self.grid.components {
            Some(c) => Grid::union_1d(c, self.grid.cells_per_unit),
            None => Grid::build(
                self.grid.dim,
                &self.grid.bounds,
                self.grid.n,
                self.grid.ext_radius,
                self.grid.ext_refine,
            ),
        }
    }

    pub fn build_kernel(&self, grid: &Grid) -> Result<KernelMatrix> {
        match &self.kernel.spec {
            Some(spec) => KernelMatrix::assemble(spec, grid, self.kernel.mode),
            None => {
                let closure = if self.kernel.mode == Mode::Dirichlet {
                    StencilClosure::Dirichlet
                } else {
                    StencilClosure::Neumann
                };
                KernelMatrix::stencil(grid, self.kernel.stencil_scale, closure)
            }
        }
    }

    pub fn build_operator(&self, grid: &Grid) -> Result<OperatorL> {
        build_operator_kind(&self.operator, grid)
    }

    pub fn build_potential(&self) -> Result<Potential> {
        Potential::by_name(&self.potential.name, self.potential.theta, self.potential.theta_c)
    }

    pub fn phi(&self) -> PhiSpec {
        match self.scheme.phi {
            PhiForm::Power => PhiSpec::Power { q: self.scheme.q },
            PhiForm::HalfPower => PhiSpec::HalfPower { q: self.scheme.q },
        }
    }

    /// Initial datum sampled on `grid` (coordinates rescaled to the unit box).
    pub fn initial_field(&self, grid: &Grid) -> Field {
        let init = &self.initial;
        let bounds = grid.bounds().to_vec();
        let unit = |x: &[f64], a: usize| (x[a] - bounds[a][0]) / (bounds[a][1] - bounds[a][0]);
        let k = init.wavenumber * std::f64::consts::PI;
        match init.kind {
            InitialKind::Zero => Field::zeros(grid.len()),
            InitialKind::Constant => Field::from_element(grid.len(), init.mean),
            InitialKind::Cosine => grid.sample(|x| {
                init.mean + init.amplitude * (0..x.len()).map(|a| (k * unit(x, a)).cos()).product::<f64>()
            }),
            InitialKind::Sine => grid.sample(|x| {
                init.mean + init.amplitude * (0..x.len()).map(|a| (k * unit(x, a)).sin()).product::<f64>()
            }),
            InitialKind::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                Field::from_iterator(
                    grid.len(),
                    (0..grid.len()).map(|_| init.mean + init.amplitude * rng.gen_range(-1.0..1.0)),
                )
            }
        }
    }

    /// The scheme for `grid`; the conserved mass defaults to that of `u0`.
    pub fn build_scheme(&self, grid: &Grid, u0: &Field) -> Result<Scheme> {
        let kernel = self.build_kernel(grid)?;
        self.build_scheme_with_kernel(grid, u0, kernel)
    }

    pub fn build_scheme_with_kernel(&self, grid: &Grid, u0: &Field, kernel: KernelMatrix) -> Result<Scheme> {
        let operator = self.build_operator(grid)?;
        let mass_mode = if self.scheme.conserved {
            MassMode::Conserved {
                mass: self.scheme.mass.unwrap_or_else(|| grid.mass(u0)),
            }
        } else {
            MassMode::Free
        };
        Scheme::new(SchemeConfig {
            horizon: self.scheme.horizon,
            n_steps: self.scheme.n_steps,
            lambda: self.scheme.lambda,
            phi: self.phi(),
            kernel,
            operator,
            potential: self.build_potential()?,
            mass_mode,
            inner: self.scheme.inner,
        })
    }
}

/// Builds `𝔏` of the given kind; fractional kinds use the power-law kernel
/// of order `σ` with `q = 2` (global for Dirichlet, regional otherwise).
pub fn build_operator_kind(kind: &OperatorKind, grid: &Grid) -> Result<OperatorL> {
    match kind {
        OperatorKind::LaplacianDirichlet => OperatorL::laplacian_dirichlet(grid),
        OperatorKind::LaplacianNeumann => OperatorL::laplacian_neumann(grid),
        OperatorKind::IdentityRiesz => OperatorL::identity_riesz(grid),
        OperatorKind::FractionalDirichlet { sigma } => {
            let km = KernelMatrix::assemble(&KernelSpec::power_global(*sigma, 2.0), grid, Mode::Dirichlet)?;
            OperatorL::fractional(&km, *sigma)
        }
        OperatorKind::RegionalFractional { sigma } => {
            let km = KernelMatrix::assemble(&KernelSpec::power_regional(*sigma, 2.0), grid, Mode::Regional)?;
            OperatorL::fractional(&km, *sigma)
        }
        OperatorKind::Sum { parts } => {
            let built = parts.iter().map(|p| build_operator_kind(p, grid)).collect::<Result<Vec<_>>>()?;
            OperatorL::sum(&built)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[grid]
dim = 1
n = 16

[kernel]
family = "power_global"
s = 0.5

[potential]
name = "polynomial"

[scheme]
T = 0.01
n_steps = 4
lambda = 0.01
"#;

    fn errors(text: &str) -> Vec<String> {
        match parse_config(text) {
            Err(Error::Config(list)) => list,
            other => panic!("expected config errors, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config_is_valid() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.kernel.mode, Mode::Dirichlet);
        assert_eq!(cfg.operator, OperatorKind::LaplacianDirichlet);
        assert!(!cfg.scheme.conserved);
        assert_eq!(cfg.scheme.tau(), 0.0025);
        let grid = cfg.build_grid().unwrap();
        let u0 = cfg.initial_field(&grid);
        let scheme = cfg.build_scheme(&grid, &u0).unwrap();
        assert_eq!(scheme.tau(), 0.0025);
    }

    #[test]
    fn tau_is_derived_or_checked() {
        let cfg = parse_config(&MINIMAL.replace("n_steps = 4", "tau = 0.001")).unwrap();
        assert_eq!(cfg.scheme.n_steps, 10);
        let list = errors(&MINIMAL.replace("n_steps = 4", "n_steps = 4\ntau = 0.5"));
        assert!(list.iter().any(|e| e.contains("scheme.tau")));
    }

    #[test]
    fn conserved_dirichlet_names_both_keys() {
        let list = errors(&MINIMAL.replace("lambda = 0.01", "lambda = 0.01\nmass_mode = \"conserved\""));
        assert!(list.iter().any(|e| e.contains("scheme.mass_mode") && e.contains("kernel.mode")));
    }

    #[test]
    fn all_errors_are_reported() {
        let text = MINIMAL
            .replace("lambda = 0.01", "lambda = 2.0\nbogus = 1")
            .replace("s = 0.5", "s = 1.5")
            .replace("n = 16", "n = \"many\"");
        let list = errors(&text);
        assert!(list.iter().any(|e| e.starts_with("scheme.lambda")));
        assert!(list.iter().any(|e| e.starts_with("scheme.bogus: unknown key")));
        assert!(list.iter().any(|e| e.starts_with("kernel.s:")));
        assert!(list.iter().any(|e| e.starts_with("grid.n")));
    }

    #[test]
    fn environment_overrides_keys() {
        let env = [
            ("NLCH_SCHEME__LAMBDA", "0.1"),
            ("NLCH_POTENTIAL__NAME", "obstacle"),
            ("NLCH_SEED", "42"),
            ("OTHER_VAR", "ignored"),
        ];
        let cfg = parse_config_with_env(MINIMAL, env).unwrap();
        assert_eq!(cfg.scheme.lambda, 0.1);
        assert_eq!(cfg.potential.name, "obstacle");
        assert_eq!(cfg.seed, 42);
    }

    #[test]
    fn regional_defaults_to_conserved_neumann() {
        let text = MINIMAL.replace("family = \"power_global\"", "family = \"power_regional\"");
        let cfg = parse_config(&text).unwrap();
        assert!(cfg.scheme.conserved);
        assert_eq!(cfg.operator, OperatorKind::LaplacianNeumann);
    }

    #[test]
    fn phi_and_kernel_exponents_must_agree() {
        let list = errors(&MINIMAL.replace("lambda = 0.01", "lambda = 0.01\nq = 4"));
        assert!(list.iter().any(|e| e.contains("scheme.q, kernel.q")));
    }

    #[test]
    fn random_initial_data_follow_the_seed() {
        let text = format!("seed = 3\n{MINIMAL}\n[initial]\nkind = \"random\"\n");
        let cfg = parse_config(&text).unwrap();
        let grid = cfg.build_grid().unwrap();
        assert_eq!(cfg.initial_field(&grid), cfg.initial_field(&grid));
        let mut other = cfg.clone();
        other.seed = 4;
        assert_ne!(cfg.initial_field(&grid), other.initial_field(&grid));
    }
}
