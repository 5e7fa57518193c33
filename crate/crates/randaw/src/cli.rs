//! Command-line front end.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use randaw_core::antiwindup::{gain_curve, AntiWindupGain, CurveMode, GainCurve};
use randaw_core::lmi::SolveStatus;
use randaw_core::scenario::{
    best_alpha, sample_bound_binomial, sample_bound_explicit, ProbabilityLevels, ScenarioError,
};
use randaw_core::sim::{l2_norm, simulate, SaturatedLoop, Signal};
use randaw_core::Vector;
use serde::Serialize;

use crate::design::{run_design, validate_record, DesignError, DesignRequest, ValidationSummary};
use crate::modelcfg::{ModelError, UncertainModel};
use crate::montecarlo::{
    boundary_points, doa_probe, ellipse_boundary, gain_check, reach_cloud, DisturbanceShape, DoaProbeReport,
    GainCheckReport, McSettings, ReachCloudReport, ReachSettings, TimeScales,
};
use crate::par::Rayon;
use crate::report::{
    create_dir, format_value, say, unix_now, write_csv, write_json, DesignRecord, GoalSpec, Mode, ReportError,
    RunManifest,
};
use crate::sampler::{stream_rng, ModelSampler, Purpose};
use crate::settings::{SettingsError, SolverConfig, SETTINGS_ENV};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const INFEASIBLE: i32 = 2;
    pub const SOLVER_TROUBLE: i32 = 3;
    pub const INPUT: i32 = 4;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("solver trouble: {0}")]
    Solver(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => exit::INPUT,
            CliError::Infeasible(_) => exit::INFEASIBLE,
            CliError::Solver(_) => exit::SOLVER_TROUBLE,
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<SettingsError> for CliError {
    fn from(e: SettingsError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        DesignError::from(e).into()
    }
}

impl From<DesignError> for CliError {
    fn from(e: DesignError) -> Self {
        match e.solve_status() {
            Some(SolveStatus::Infeasible) => CliError::Infeasible(e.to_string()),
            Some(_) => CliError::Solver(e.to_string()),
            None => CliError::Input(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "randaw", version, about = "Randomized robust static anti-windup design")]
pub struct Cli {
    /// Solver settings file (TOML with [lmi] and [clarabel] tables).
    #[arg(long, global = true, env = SETTINGS_ENV)]
    pub solver_settings: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Scenario sample-size bound.
    Bound(BoundArgs),
    /// Synthesize an anti-windup gain.
    Synth(SynthArgs),
    /// ℒ₂ gain curve over a grid of disturbance levels.
    Curve(CurveArgs),
    /// Validate a stored design on fresh samples.
    Validate(ValidateArgs),
    /// Simulate designs on nominal and sampled plants.
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BoundMethod {
    Explicit,
    Binomial,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[arg(long)]
    pub eps: f64,
    #[arg(long)]
    pub delta: f64,
    #[arg(long)]
    pub ntheta: u64,
    #[arg(long, value_enum, default_value_t = BoundMethod::Explicit)]
    pub method: BoundMethod,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum GoalKind {
    L2,
    Area,
    Doa,
    Reach,
}

#[derive(Debug, Args)]
pub struct LevelArgs {
    #[arg(long, default_value_t = 0.01)]
    pub eps: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub delta: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl LevelArgs {
    fn levels(&self) -> Result<ProbabilityLevels, CliError> {
        ProbabilityLevels::new(self.eps, self.delta).map_err(|e| CliError::Input(e.to_string()))
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(value_enum)]
    pub goal: GoalKind,
    #[arg(value_enum)]
    pub mode: Mode,
    #[arg(long)]
    pub model: PathBuf,
    /// Disturbance energy level (l2, reach).
    #[arg(long)]
    pub s: Option<f64>,
    /// Level interval and polynomial degree (area).
    #[arg(long)]
    pub smin: Option<f64>,
    #[arg(long)]
    pub smax: Option<f64>,
    #[arg(long)]
    pub ngamma: Option<usize>,
    /// Cap on the domain-of-attraction estimate, `Q̄ ⪯ cap·I` (doa).
    #[arg(long, default_value_t = 100.0)]
    pub cap: f64,
    /// Leave the domain-of-attraction estimate uncapped.
    #[arg(long)]
    pub no_cap: bool,
    #[command(flatten)]
    pub levels: LevelArgs,
    #[arg(long, default_value_t = 10)]
    pub kt: u64,
    /// Validation weight α, or `best` to minimize the validation effort.
    #[arg(long, default_value = "1")]
    pub alpha: String,
    /// Sample count for swc mode (default: binomial bound), or level count
    /// for nominal area synthesis.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Fresh samples for an a posteriori certificate audit.
    #[arg(long, default_value_t = 0)]
    pub audit: usize,
    /// Audit the final sequential design when no iteration validated.
    #[arg(long)]
    pub audit_final: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Analyse the gain of a stored design (repeatable).
    #[arg(long)]
    pub design: Vec<PathBuf>,
    /// Analyse the loop without anti-windup.
    #[arg(long)]
    pub no_aw: bool,
    /// Synthesize a gain at every level.
    #[arg(long)]
    pub synthesize: bool,
    /// `log:LO:HI:N`, `lin:LO:HI:N` or a comma-separated list.
    #[arg(long)]
    pub grid: String,
    #[arg(long, value_enum, default_value_t = Mode::Nominal)]
    pub mode: Mode,
    /// Samples per level in swc mode.
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub design: PathBuf,
    /// Certificate checks on fresh samples.
    #[arg(long, default_value_t = 2000)]
    pub samples: usize,
    /// First sample index (default: first index not used by the design).
    #[arg(long)]
    pub first_index: Option<u64>,
    /// Simulation trials (0 = none).
    #[arg(long, default_value_t = 0)]
    pub trials: usize,
    /// Sampler seed (default: the design's seed).
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Design records to simulate (repeatable).
    #[arg(long)]
    pub design: Vec<PathBuf>,
    /// Also simulate without anti-windup.
    #[arg(long)]
    pub no_aw: bool,
    /// `zero`, `step:AMP[:DURATION]`, `pulse:AMP:WIDTH` or `random:NORM`.
    #[arg(long, default_value = "zero")]
    pub input: String,
    /// Initial state, comma-separated (default: zero).
    #[arg(long)]
    pub x0: Option<String>,
    #[arg(long)]
    pub tend: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    /// Perturbed samples in addition to the nominal plant.
    #[arg(long, default_value_t = 0)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Bound(a) => cmd_bound(&a),
        Command::Synth(a) => cmd_synth(&a, &SolverConfig::resolve(cli.solver_settings.as_deref())?),
        Command::Curve(a) => cmd_curve(&a, &SolverConfig::resolve(cli.solver_settings.as_deref())?),
        Command::Validate(a) => cmd_validate(&a, &SolverConfig::resolve(cli.solver_settings.as_deref())?),
        Command::Simulate(a) => cmd_simulate(&a, &SolverConfig::resolve(cli.solver_settings.as_deref())?),
    }
}

pub fn cmd_bound(a: &BoundArgs) -> Result<(), CliError> {
    let levels = ProbabilityLevels::new(a.eps, a.delta).map_err(|e| CliError::Input(e.to_string()))?;
    let n = match a.method {
        BoundMethod::Explicit => sample_bound_explicit(levels, a.ntheta),
        BoundMethod::Binomial => sample_bound_binomial(levels, a.ntheta, None),
    }
    .map_err(|e| CliError::Input(e.to_string()))?;
    say(n.to_string());
    Ok(())
}

fn load_model(path: &Path) -> Result<UncertainModel, CliError> {
    Ok(UncertainModel::load(path)?)
}

fn positive(name: &str, v: Option<f64>) -> Result<f64, CliError> {
    match v {
        Some(x) if x > 0.0 && x.is_finite() => Ok(x),
        Some(x) => Err(CliError::Input(format!("--{name} must be positive, got {x}"))),
        None => Err(CliError::Input(format!("--{name} is required for this goal"))),
    }
}

fn goal_spec(a: &SynthArgs) -> Result<GoalSpec, CliError> {
    Ok(match a.goal {
        GoalKind::L2 => GoalSpec::L2 { s: positive("s", a.s)? },
        GoalKind::Reach => GoalSpec::Reach { s: positive("s", a.s)? },
        GoalKind::Area => {
            let (lo, hi) = (positive("smin", a.smin)?, positive("smax", a.smax)?);
            if lo >= hi {
                return Err(CliError::Input("--smin must be below --smax".into()));
            }
            let degree = a.ngamma.ok_or_else(|| CliError::Input("--ngamma is required for area".into()))?;
            GoalSpec::Area { s_lo: lo, s_hi: hi, degree }
        }
        GoalKind::Doa => GoalSpec::Doa { cap: if a.no_cap { None } else { Some(positive("cap", Some(a.cap))?) } },
    })
}

fn finish_manifest(mut manifest: RunManifest, out: &Path, outputs: &[&str]) -> Result<(), CliError> {
    manifest.outputs = outputs.iter().map(|s| (*s).to_owned()).collect();
    manifest.finished_unix = unix_now();
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(())
}

pub fn cmd_synth(a: &SynthArgs, solver: &SolverConfig) -> Result<(), CliError> {
    let model = load_model(&a.model)?;
    let levels = a.levels.levels()?;
    let alpha = match a.alpha.as_str() {
        "best" => best_alpha(a.kt, levels)?,
        text => text.parse::<f64>().map_err(|_| CliError::Input(format!("--alpha: cannot parse `{text}`")))?,
    };
    let req = DesignRequest {
        goal: goal_spec(a)?,
        mode: a.mode,
        levels,
        seed: a.levels.seed,
        k_t: a.kt,
        alpha,
        samples: a.samples,
        audit: a.audit,
        audit_final: a.audit_final,
    };
    let mut manifest = RunManifest::new(solver.clone());
    manifest.model = Some(a.model.display().to_string());
    manifest.epsilon = Some(levels.epsilon());
    manifest.delta = Some(levels.delta());
    manifest.seed = Some(a.levels.seed);
    let run = run_design(&model, &a.model.display().to_string(), &req, solver)?;
    manifest.n_theta = Some(run.record.n_theta);

    create_dir(&a.out)?;
    write_json(&a.out.join("design.json"), &run.record)?;
    write_json(&a.out.join("audit.json"), &run.audit)?;
    finish_manifest(manifest, &a.out, &["design.json", "audit.json"])?;

    say(format!("goal {} mode {:?}: objective {}", req.goal.name(), req.mode, format_value(run.record.objective)));
    if let Some(g2) = run.record.gamma2 {
        say(format!("gamma^2 = {}", format_value(g2)));
    }
    say(format!("n_theta = {}, design samples = {}", run.record.n_theta, run.record.design_samples));
    say(format!("D_aw = {:?}", run.record.d_aw));
    Ok(())
}

/// Parses `log:LO:HI:N`, `lin:LO:HI:N` or `a,b,c`.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Input(format!("invalid grid `{spec}`"));
    let levels: Vec<f64> = if let Some(rest) = spec.strip_prefix("log:").or_else(|| spec.strip_prefix("lin:")) {
        let parts: Vec<&str> = rest.split(':').collect();
        let [lo, hi, n] = parts[..] else { return Err(bad()) };
        let (lo, hi): (f64, f64) = (lo.parse().map_err(|_| bad())?, hi.parse().map_err(|_| bad())?);
        let n: usize = n.parse().map_err(|_| bad())?;
        if n == 0 || !(lo > 0.0 && hi >= lo) {
            return Err(bad());
        }
        let t = |i: usize| if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
        if spec.starts_with("log:") {
            (0..n).map(|i| 10f64.powf(lo.log10() + (hi.log10() - lo.log10()) * t(i))).collect()
        } else {
            (0..n).map(|i| lo + (hi - lo) * t(i)).collect()
        }
    } else {
        spec.split(',').map(|v| v.trim().parse::<f64>().map_err(|_| bad())).collect::<Result<_, _>>()?
    };
    if levels.is_empty() || levels.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(bad());
    }
    Ok(levels)
}

fn design_label(path: &Path) -> String {
    let stem = path.file_stem().map_or("design".into(), |s| s.to_string_lossy().into_owned());
    if stem == "design" {
        // Records are usually `<run dir>/design.json`; name them by the run.
        path.parent().and_then(Path::file_name).map_or(stem, |p| p.to_string_lossy().into_owned())
    } else {
        stem
    }
}

fn curve_rows(curve: &GainCurve) -> Vec<Vec<f64>> {
    curve.points.iter().map(|p| vec![p.s, p.gamma()]).collect()
}

pub fn cmd_curve(a: &CurveArgs, solver: &SolverConfig) -> Result<(), CliError> {
    let model = load_model(&a.model)?;
    let levels = parse_grid(&a.grid)?;
    let nominal = model.nominal_closed_loop()?;
    let samples = match a.mode {
        Mode::Nominal => vec![nominal.clone()],
        Mode::Swc | Mode::Sequential => {
            let s = ModelSampler::new(&model, a.seed);
            randaw_core::scenario::draw_samples(&s, 0, a.samples, &Rayon)?
        }
    };
    let mut configs: Vec<(String, CurveMode)> = Vec::new();
    for d in &a.design {
        let rec = DesignRecord::read(d)?;
        let gain = rec.gain().expect("checked when reading");
        configs.push((design_label(d), CurveMode::Analysis(gain)));
    }
    if a.no_aw {
        configs.push(("no_aw".into(), CurveMode::Analysis(AntiWindupGain::zero(model.n_xc(), model.n_u()))));
    }
    if a.synthesize {
        configs.push(("synthesis".into(), CurveMode::Synthesis));
    }
    if configs.is_empty() {
        return Err(CliError::Input("choose at least one of --design, --no-aw, --synthesize".into()));
    }
    let mut manifest = RunManifest::new(solver.clone());
    manifest.model = Some(a.model.display().to_string());
    manifest.seed = Some(a.seed);
    create_dir(&a.out)?;
    let mut outputs = Vec::new();
    let backend = solver.backend();
    let settings = solver.solve_settings();
    for (label, mode) in &configs {
        let curve = gain_curve(mode, &nominal, &samples, &model.limits, &levels, &backend, &settings, &Rayon)
            .map_err(DesignError::from)?;
        let file = format!("curve_{label}.csv");
        write_csv(&a.out.join(&file), &["s".into(), "gamma".into()], &curve_rows(&curve))?;
        say(format!("{label}: feasible up to s = {}", curve.max_feasible_level().map_or("none".into(), format_value)));
        outputs.push(file);
    }
    let refs: Vec<&str> = outputs.iter().map(String::as_str).collect();
    finish_manifest(manifest, &a.out, &refs)
}

#[derive(Debug, Serialize)]
struct ValidationOutput {
    seed: u64,
    certificates: Option<ValidationSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gain_check: Option<GainCheckSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reach_cloud: Option<ReachSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    doa_probe: Option<DoaSummary>,
}

#[derive(Debug, Serialize)]
struct GainCheckSummary {
    gamma: f64,
    s: f64,
    trials: usize,
    violations: usize,
    failures: usize,
    violation_fraction: f64,
    max_ratio: f64,
}

impl From<&GainCheckReport> for GainCheckSummary {
    fn from(r: &GainCheckReport) -> Self {
        Self {
            gamma: r.gamma,
            s: r.s,
            trials: r.trials.len(),
            violations: r.violations(),
            failures: r.failures(),
            violation_fraction: r.violation_fraction(),
            max_ratio: r.max_ratio(),
        }
    }
}

#[derive(Debug, Serialize)]
struct ReachSummary {
    samples: usize,
    inputs_per_sample: usize,
    failures: usize,
    max_form: f64,
}

impl From<&ReachCloudReport> for ReachSummary {
    fn from(r: &ReachCloudReport) -> Self {
        Self {
            samples: r.samples.len(),
            inputs_per_sample: r.inputs_per_sample,
            failures: r.failures(),
            max_form: r.max_form(),
        }
    }
}

#[derive(Debug, Serialize)]
struct DoaSummary {
    trials: usize,
    t_end: f64,
    convergence_fraction: f64,
}

impl From<&DoaProbeReport> for DoaSummary {
    fn from(r: &DoaProbeReport) -> Self {
        Self { trials: r.trials.len(), t_end: r.t_end, convergence_fraction: r.convergence_fraction() }
    }
}

/// Boundary points per sample for domain-of-attraction probes.
pub const DOA_PROBE_POINTS: usize = 36;
/// Random inputs per sample for reachable-set clouds, besides the extremal
/// ones.
pub const REACH_RANDOM_INPUTS: usize = 8;

pub fn cmd_validate(a: &ValidateArgs, solver: &SolverConfig) -> Result<(), CliError> {
    let model = load_model(&a.model)?;
    let rec = DesignRecord::read(&a.design)?;
    let seed = a.seed.unwrap_or(rec.seed);
    let first = a.first_index.unwrap_or(rec.next_index);
    let mut manifest = RunManifest::new(solver.clone());
    manifest.model = Some(a.model.display().to_string());
    manifest.seed = Some(seed);
    manifest.n_theta = Some(rec.n_theta);
    manifest.epsilon = Some(rec.epsilon);
    manifest.delta = Some(rec.delta);

    let certificates =
        if a.samples > 0 { Some(validate_record(&model, &rec, seed, first, a.samples, solver)?) } else { None };
    let mut out = ValidationOutput { seed, certificates, gain_check: None, reach_cloud: None, doa_probe: None };
    if a.trials > 0 {
        let sampler = ModelSampler::new(&model, seed);
        let sim_first = first + a.samples as u64;
        let samples = randaw_core::scenario::draw_samples(&sampler, sim_first, a.trials, &Rayon)?;
        let gain = rec.gain().expect("checked when reading");
        match rec.goal {
            GoalSpec::L2 { s } => {
                let gamma = rec.gamma2.map_or(f64::INFINITY, f64::sqrt);
                let settings = McSettings { seed, trials: a.trials, shape: None };
                let r = gain_check(&samples, &gain, &model.limits, gamma, s, &settings, &Rayon);
                out.gain_check = Some((&r).into());
            }
            GoalSpec::Reach { s } => {
                let qbar = rec.qbar_matrix().ok_or_else(|| CliError::Input("design has no qbar".into()))?;
                let settings =
                    ReachSettings { seed, random_inputs: REACH_RANDOM_INPUTS, shape: None, cloud_stride: None };
                let r = reach_cloud(&samples, &gain, &model.limits, &qbar, s, &settings, &Rayon);
                out.reach_cloud = Some((&r).into());
            }
            GoalSpec::Doa { .. } => {
                let qbar = rec.qbar_matrix().ok_or_else(|| CliError::Input("design has no qbar".into()))?;
                let pts = boundary_points(&qbar, DOA_PROBE_POINTS, seed);
                let r = doa_probe(&samples, &gain, &model.limits, &pts, None, &Rayon);
                out.doa_probe = Some((&r).into());
            }
            GoalSpec::Area { .. } => say("simulation checks are not defined for area designs; skipped"),
        }
    }
    create_dir(&a.out)?;
    write_json(&a.out.join("validation.json"), &out)?;
    finish_manifest(manifest, &a.out, &["validation.json"])?;
    if let Some(c) = &out.certificates {
        say(format!(
            "certificate violations: {} of {} ({})",
            c.infeasible + c.solver_trouble,
            c.checked,
            format_value(c.violation_fraction)
        ));
    }
    if let Some(g) = &out.gain_check {
        say(format!("gain check: {} violations in {} trials", g.violations, g.trials));
    }
    if let Some(r) = &out.reach_cloud {
        say(format!("reach cloud: {} of {} samples leave the ellipsoid", r.failures, r.samples));
    }
    if let Some(d) = &out.doa_probe {
        say(format!("domain probe: convergence fraction {}", format_value(d.convergence_fraction)));
    }
    Ok(())
}

/// Test input for `simulate`.
#[derive(Clone, Debug, PartialEq)]
pub enum InputSpec {
    Zero,
    Step { amplitude: f64, duration: Option<f64> },
    Pulse { amplitude: f64, width: f64 },
    Random { norm: f64 },
}

impl InputSpec {
    pub fn parse(spec: &str) -> Result<Self, CliError> {
        let bad = || CliError::Input(format!("invalid input `{spec}`"));
        let parts: Vec<&str> = spec.split(':').collect();
        let num = |s: &str| s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(bad);
        match parts[..] {
            ["zero"] => Ok(InputSpec::Zero),
            ["step", a] => Ok(InputSpec::Step { amplitude: num(a)?, duration: None }),
            ["step", a, d] => Ok(InputSpec::Step { amplitude: num(a)?, duration: Some(num(d)?) }),
            ["pulse", a, w] => Ok(InputSpec::Pulse { amplitude: num(a)?, width: num(w)? }),
            ["random", n] => Ok(InputSpec::Random { norm: num(n)? }),
            _ => Err(bad()),
        }
    }

    /// Samples on `[0, t_end]` plus one guard sample.
    fn signal(
        &self,
        n_w: usize,
        t_end: f64,
        dt: f64,
        seed: u64,
        index: u64,
        ts: &TimeScales,
    ) -> Result<Signal, CliError> {
        let n = (t_end / dt).round() as usize + 2;
        let sim = |e: randaw_core::sim::SimError| CliError::Input(e.to_string());
        match *self {
            InputSpec::Zero => Signal::zeros(dt, n, n_w).map_err(sim),
            InputSpec::Step { amplitude, duration } => Signal::from_fn(dt, n, |t| {
                let on = duration.is_none_or(|d| t < d);
                Vector::from_element(n_w, if on { amplitude } else { 0.0 })
            })
            .map_err(sim),
            InputSpec::Pulse { amplitude, width } => {
                Signal::from_fn(dt, n, |t| Vector::from_element(n_w, if t < width { amplitude } else { 0.0 }))
                    .map_err(sim)
            }
            InputSpec::Random { norm } => {
                let mut shape = DisturbanceShape::for_loop(ts);
                shape.dt = dt;
                shape.horizon = t_end;
                shape.active = shape.active.min(t_end);
                let mut rng = stream_rng(seed, Purpose::Disturbance, index);
                shape.random(&mut rng, n_w, norm).map_err(sim)
            }
        }
    }
}

#[derive(Debug, Serialize)]
struct SimSummaryRow {
    config: String,
    sample: String,
    l2_w: f64,
    l2_z: f64,
    peak_abs_z: f64,
    /// `max(0, max_t -z(t)) / |A|` for step inputs of amplitude `A`, with `z`
    /// the tracking error `w - y`.
    overshoot: Option<f64>,
    max_loop_residual: f64,
    error: Option<String>,
}

pub fn cmd_simulate(a: &SimulateArgs, solver: &SolverConfig) -> Result<(), CliError> {
    let model = load_model(&a.model)?;
    let input = InputSpec::parse(&a.input)?;
    if !(a.dt > 0.0 && a.tend > 0.0) {
        return Err(CliError::Input("--dt and --tend must be positive".into()));
    }
    let mut configs: Vec<(String, AntiWindupGain)> = Vec::new();
    for d in &a.design {
        let rec = DesignRecord::read(d)?;
        configs.push((design_label(d), rec.gain().expect("checked when reading")));
    }
    if a.no_aw || configs.is_empty() {
        configs.push(("no_aw".into(), AntiWindupGain::zero(model.n_xc(), model.n_u())));
    }
    let n_x = model.n_xp() + model.n_xc();
    let x0 = match &a.x0 {
        None => Vector::zeros(n_x),
        Some(text) => {
            let v: Vec<f64> = text
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| CliError::Input(format!("--x0: cannot parse `{text}`")))?;
            if v.len() != n_x {
                return Err(CliError::Input(format!("--x0 needs {n_x} entries")));
            }
            Vector::from_vec(v)
        }
    };

    let sampler = ModelSampler::new(&model, a.seed);
    let mut plants = vec![("nominal".to_owned(), model.nominal_closed_loop()?)];
    for i in 0..a.samples {
        plants.push((i.to_string(), sampler.closed_loop(i as u64)?));
    }

    let mut manifest = RunManifest::new(solver.clone());
    manifest.model = Some(a.model.display().to_string());
    manifest.seed = Some(a.seed);
    create_dir(&a.out)?;

    let cases: Vec<(usize, usize)> = (0..configs.len()).flat_map(|c| (0..plants.len()).map(move |p| (c, p))).collect();
    let results = randaw_core::scenario::ParallelMap::map_indexed(&Rayon, cases.len(), |k| {
        let (c, p) = cases[k];
        let (cfg, gain) = &configs[c];
        let (label, cl) = &plants[p];
        let ts = TimeScales::of(cl, gain);
        let w = input.signal(cl.n_w(), a.tend, a.dt, a.seed, p as u64, &ts)?;
        let lp = SaturatedLoop::new(cl, gain, &model.limits).map_err(|e| CliError::Input(e.to_string()))?;
        let res = simulate(&lp, &w, &x0, a.tend, a.dt);
        Ok::<_, CliError>((cfg.clone(), label.clone(), res))
    });

    let mut summary = Vec::new();
    let mut outputs = Vec::new();
    for r in results {
        let (cfg, label, res) = r?;
        let file = format!("{cfg}_sample_{label}.csv");
        match res {
            Ok(res) => {
                let header = trajectory_header(&res);
                let rows = (0..res.x.len())
                    .map(|k| {
                        let mut row = vec![k as f64 * res.x.dt()];
                        for sig in [&res.x, &res.u, &res.sigma, &res.z, &res.w] {
                            row.extend(sig.values()[k].iter());
                        }
                        row
                    })
                    .collect::<Vec<_>>();
                write_csv(&a.out.join(&file), &header, &rows)?;
                outputs.push(file);
                let peak = res.z.values().iter().map(|z| z.amax()).fold(0.0, f64::max);
                let overshoot = match input {
                    InputSpec::Step { amplitude, .. } if amplitude != 0.0 => {
                        Some(res.z.values().iter().map(|z| -z[0]).fold(0.0, f64::max) / amplitude.abs())
                    }
                    _ => None,
                };
                summary.push(SimSummaryRow {
                    config: cfg,
                    sample: label,
                    l2_w: l2_norm(&res.w),
                    l2_z: res.l2_z,
                    peak_abs_z: peak,
                    overshoot,
                    max_loop_residual: res.max_loop_residual,
                    error: None,
                });
            }
            Err(e) => summary.push(SimSummaryRow {
                config: cfg,
                sample: label,
                l2_w: f64::NAN,
                l2_z: f64::NAN,
                peak_abs_z: f64::NAN,
                overshoot: None,
                max_loop_residual: f64::NAN,
                error: Some(e.to_string()),
            }),
        }
    }
    write_json(&a.out.join("summary.json"), &summary)?;
    outputs.push("summary.json".into());
    for (cfg, _) in &configs {
        if let Some(rec) = a.design.iter().find(|d| &design_label(d) == cfg).and_then(|d| DesignRecord::read(d).ok()) {
            if let Some(q) = rec.qbar_matrix() {
                let pts = ellipse_boundary(&q, 0, 1, 360);
                let file = format!("{cfg}_ellipse.csv");
                let rows: Vec<Vec<f64>> = pts.iter().map(|(x, y)| vec![*x, *y]).collect();
                write_csv(&a.out.join(&file), &["x1".into(), "x2".into()], &rows)?;
                outputs.push(file);
            }
        }
    }
    let failures = summary.iter().filter(|r| r.error.is_some()).count();
    let refs: Vec<&str> = outputs.iter().map(String::as_str).collect();
    finish_manifest(manifest, &a.out, &refs)?;
    say(format!("{} simulations, {} failed", summary.len(), failures));
    Ok(())
}

fn trajectory_header(res: &randaw_core::sim::SimResult) -> Vec<String> {
    let mut h = vec!["t".to_owned()];
    for (name, sig) in [("x", &res.x), ("u", &res.u), ("sat_u", &res.sigma), ("z", &res.z), ("w", &res.w)] {
        h.extend((1..=sig.width()).map(|i| format!("{name}{i}")));
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        let g = parse_grid("log:1e-3:1e-1:3").unwrap();
        assert!((g[1] - 1e-2).abs() < 1e-15 && g.len() == 3);
        assert_eq!(parse_grid("lin:1:2:3").unwrap(), vec![1.0, 1.5, 2.0]);
        assert_eq!(parse_grid("0.1, 0.2").unwrap(), vec![0.1, 0.2]);
        assert!(parse_grid("log:0:1:3").is_err());
        assert!(parse_grid("lin:1:2").is_err());
    }

    #[test]
    fn input_specs() {
        assert_eq!(InputSpec::parse("step:0.5").unwrap(), InputSpec::Step { amplitude: 0.5, duration: None });
        assert_eq!(InputSpec::parse("pulse:1:2").unwrap(), InputSpec::Pulse { amplitude: 1.0, width: 2.0 });
        assert!(InputSpec::parse("ramp:1").is_err());
    }

    #[test]
    fn clap_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
