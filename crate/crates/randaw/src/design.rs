//! Synthesis runs for every goal and mode, and a posteriori validation of
//! stored designs.

use randaw_core::antiwindup::{
    AntiWindupError, AreaDesign, AreaSynthesis, ClosedLoopModel, DoaDesign, DoaSynthesis, L2Design, L2Synthesis,
    ReachDesign, ReachSynthesis,
};
use randaw_core::lmi::{SolveSettings, SolveStatus};
use randaw_core::scenario::{
    draw_samples, sample_bound_binomial, sequential_swc, solve_swc, validate_design, IterationRecord,
    ProbabilityLevels, SampleSource, ScenarioError, SequentialConfig, SequentialOptions, SwcOutcome, SwcProblem,
    ValidationMode, ValidationReport,
};
use randaw_core::Mat;
use serde::Serialize;

use crate::backend::ClarabelBackend;
use crate::modelcfg::{ModelError, UncertainModel};
use crate::par::Rayon;
use crate::report::{matrix_rows, DesignRecord, GoalSpec, Mode, RECORD_VERSION};
use crate::sampler::{AreaSampler, ModelSampler};
use crate::settings::SolverConfig;

/// Number of evenly spaced levels used by nominal area synthesis when no
/// sample count is given.
pub const NOMINAL_AREA_LEVELS: usize = 50;

#[derive(Debug, thiserror::Error)]
pub enum DesignError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Problem(AntiWindupError),
    #[error(transparent)]
    Scenario(ScenarioError),
    #[error("{0}")]
    Invalid(String),
}

impl From<AntiWindupError> for DesignError {
    fn from(e: AntiWindupError) -> Self {
        match e {
            AntiWindupError::Scenario(s) => DesignError::Scenario(s),
            other => DesignError::Problem(other),
        }
    }
}

impl From<ScenarioError> for DesignError {
    fn from(e: ScenarioError) -> Self {
        DesignError::Scenario(e)
    }
}

impl DesignError {
    /// Solver status behind the error, if the failure came from a solve.
    pub fn solve_status(&self) -> Option<SolveStatus> {
        match self {
            DesignError::Scenario(ScenarioError::Solve { status, .. }) => Some(*status),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DesignRequest {
    pub goal: GoalSpec,
    pub mode: Mode,
    pub levels: ProbabilityLevels,
    pub seed: u64,
    pub k_t: u64,
    pub alpha: f64,
    /// Sample count for `swc` mode (default: the binomial bound) or level
    /// count for nominal area synthesis.
    pub samples: Option<usize>,
    /// Fresh samples for an a posteriori certificate audit (0 = none).
    pub audit: usize,
    /// Audit the last sequential design on `M_{k_t - 1}` samples.
    pub audit_final: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationSummary {
    pub first_index: u64,
    pub requested: usize,
    pub checked: usize,
    pub infeasible: usize,
    pub solver_trouble: usize,
    pub violation_fraction: f64,
    pub first_failure: Option<usize>,
}

impl ValidationSummary {
    pub fn new(first_index: u64, r: &ValidationReport) -> Self {
        Self {
            first_index,
            requested: r.requested,
            checked: r.checked,
            infeasible: r.infeasible,
            solver_trouble: r.solver_trouble,
            violation_fraction: r.violation_fraction(),
            first_failure: r.first_failure,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationSummary {
    pub k: u64,
    pub n_k: u64,
    pub design_first_index: u64,
    pub design_status: String,
    pub objective: f64,
    pub m_k: Option<u64>,
    pub validation_first_index: Option<u64>,
    pub validation_checked: usize,
    pub first_failure: Option<usize>,
}

impl From<&IterationRecord> for IterationSummary {
    fn from(r: &IterationRecord) -> Self {
        Self {
            k: r.k,
            n_k: r.n_k,
            design_first_index: r.design_first_index,
            design_status: format!("{:?}", r.design_status),
            objective: r.objective,
            m_k: r.m_k,
            validation_first_index: r.validation_first_index,
            validation_checked: r.validation_checked,
            first_failure: r.first_failure,
        }
    }
}

/// Everything about a run besides the design itself.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DesignAudit {
    pub goal: String,
    pub mode: Mode,
    pub n_theta: usize,
    /// Sample bound used (binomial, `δ/2` for sequential runs).
    pub n_bound: Option<u64>,
    pub design_samples: u64,
    pub iterations: Vec<IterationSummary>,
    /// Whether a sequential iteration passed its validation step.
    pub validated: Option<bool>,
    pub final_audit: Option<ValidationSummary>,
    pub posterior: Option<ValidationSummary>,
    /// Smallest eigenvalue of the set-inclusion margins over the design
    /// samples: `Q_i - Q̄` (domain of attraction) or `s²Q̄ - Q_i`
    /// (reachable set).
    pub inclusion_margin: Option<f64>,
    /// Minimum of `γ²(s)` over the positivity grid (area synthesis).
    pub grid_minimum: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct DesignRun {
    pub record: DesignRecord,
    pub audit: DesignAudit,
    /// Lyapunov matrices `Q_i` of the final design program.
    pub certificates: Vec<Mat>,
}

struct Solved<D, C> {
    outcome: SwcOutcome<D, C>,
    n_bound: Option<u64>,
    iterations: Vec<IterationSummary>,
    validated: Option<bool>,
    final_audit: Option<ValidationSummary>,
    next_index: u64,
}

fn solve_mode<P, Src>(
    problem: &P,
    source: &Src,
    nominal: Vec<P::Sample>,
    req: &DesignRequest,
    backend: &ClarabelBackend,
    settings: &SolveSettings,
) -> Result<Solved<P::Design, P::Certificate>, DesignError>
where
    P: SwcProblem,
    Src: SampleSource<P::Sample>,
{
    match req.mode {
        Mode::Nominal => Ok(Solved {
            outcome: solve_swc(problem, &nominal, backend, settings)?,
            n_bound: None,
            iterations: Vec::new(),
            validated: None,
            final_audit: None,
            next_index: 0,
        }),
        Mode::Swc => {
            let bound = sample_bound_binomial(req.levels, problem.n_theta() as u64, None)?;
            let n = req.samples.map_or(bound, |n| n as u64);
            let samples = draw_samples(source, 0, n as usize, &Rayon)?;
            Ok(Solved {
                outcome: solve_swc(problem, &samples, backend, settings)?,
                n_bound: Some(bound),
                iterations: Vec::new(),
                validated: None,
                final_audit: None,
                next_index: n,
            })
        }
        Mode::Sequential => {
            let cfg = SequentialConfig::new(req.k_t, req.alpha, req.levels)?;
            let options = SequentialOptions { first_index: 0, audit_final: req.audit_final };
            let rep = sequential_swc(problem, &cfg, source, backend, settings, &Rayon, &options)?;
            let iterations = rep.iterations.iter().map(IterationSummary::from).collect();
            let audit_first = rep.next_index - rep.final_audit.as_ref().map_or(0, |a| a.requested as u64);
            let final_audit = rep.final_audit.as_ref().map(|a| ValidationSummary::new(audit_first, a));
            Ok(Solved {
                outcome: rep.outcome?,
                n_bound: Some(rep.n_bound),
                iterations,
                validated: Some(rep.validated),
                final_audit,
                next_index: rep.next_index,
            })
        }
    }
}

fn posterior<P, Src>(
    problem: &P,
    source: &Src,
    theta: &[f64],
    first: u64,
    n: usize,
    backend: &ClarabelBackend,
    settings: &SolveSettings,
) -> Result<Option<ValidationSummary>, DesignError>
where
    P: SwcProblem,
    Src: SampleSource<P::Sample>,
{
    if n == 0 {
        return Ok(None);
    }
    let samples = draw_samples(source, first, n, &Rayon)?;
    let r = validate_design(problem, theta, &samples, backend, settings, ValidationMode::Audit, &Rayon)?;
    Ok(Some(ValidationSummary::new(first, &r)))
}

fn min_eigenvalue(m: &Mat) -> f64 {
    m.clone().symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

/// Runs one synthesis. `model_label` is recorded as the model reference.
pub fn run_design(
    model: &UncertainModel,
    model_label: &str,
    req: &DesignRequest,
    solver: &SolverConfig,
) -> Result<DesignRun, DesignError> {
    let backend = solver.backend();
    let settings = solver.solve_settings();
    let nominal = model.nominal_closed_loop()?;
    let sampler = ModelSampler::new(model, req.seed);
    let limits = model.limits.clone();
    let n_xc = model.n_xc();

    let base =
        |n_theta: usize, theta: &[f64], objective: f64, gain: &randaw_core::antiwindup::AntiWindupGain| DesignRecord {
            format_version: RECORD_VERSION,
            goal: req.goal.clone(),
            mode: req.mode,
            model: model_label.to_owned(),
            seed: req.seed,
            epsilon: req.levels.epsilon(),
            delta: req.levels.delta(),
            n_theta,
            n_xc,
            d_aw: matrix_rows(gain.matrix()),
            objective,
            theta: theta.to_vec(),
            gamma2: None,
            coefficients: None,
            qbar: None,
            design_samples: 0,
            next_index: 0,
        };
    let audit_of = |n_theta: usize, solved_bound, iterations, validated, final_audit, design_samples| DesignAudit {
        goal: req.goal.name().to_owned(),
        mode: req.mode,
        n_theta,
        n_bound: solved_bound,
        design_samples,
        iterations,
        validated,
        final_audit,
        posterior: None,
        inclusion_margin: None,
        grid_minimum: None,
    };

    match req.goal {
        GoalSpec::L2 { s } => {
            let problem = L2Synthesis::new(&nominal, limits, s)?;
            let solved = solve_mode(&problem, &sampler, vec![nominal.clone()], req, &backend, &settings)?;
            let design = L2Design::from_outcome(solved.outcome, n_xc)?;
            let o = &design.outcome;
            let mut record = base(problem.n_theta(), &o.theta, o.solution.objective_value, &design.gain);
            record.gamma2 = Some(design.gamma2);
            record.design_samples = o.n_samples as u64;
            record.next_index = solved.next_index;
            let mut audit = audit_of(
                problem.n_theta(),
                solved.n_bound,
                solved.iterations,
                solved.validated,
                solved.final_audit,
                o.n_samples as u64,
            );
            audit.posterior =
                posterior(&problem, &sampler, &o.theta, solved.next_index, req.audit, &backend, &settings)?;
            Ok(DesignRun { record, audit, certificates: o.certificates.iter().map(|c| o.solution.sym(&c.q)).collect() })
        }
        GoalSpec::Area { s_lo, s_hi, degree } => {
            let problem = AreaSynthesis::new(&nominal, limits, s_lo, s_hi, degree)?;
            let source = AreaSampler { inner: sampler, s_lo, s_hi };
            let n_levels = req.samples.unwrap_or(NOMINAL_AREA_LEVELS).max(1);
            let nominal_samples: Vec<(ClosedLoopModel, f64)> = (0..n_levels)
                .map(|i| {
                    let t = if n_levels == 1 { 0.0 } else { i as f64 / (n_levels - 1) as f64 };
                    (nominal.clone(), s_lo + (s_hi - s_lo) * t)
                })
                .collect();
            let solved = solve_mode(&problem, &source, nominal_samples, req, &backend, &settings)?;
            let design = AreaDesign::from_outcome(&problem, solved.outcome)?;
            let o = &design.outcome;
            let mut record = base(problem.n_theta(), &o.theta, design.cost, &design.gain);
            record.coefficients = Some(design.coefficients.clone());
            record.design_samples = o.n_samples as u64;
            record.next_index = solved.next_index;
            let mut audit = audit_of(
                problem.n_theta(),
                solved.n_bound,
                solved.iterations,
                solved.validated,
                solved.final_audit,
                o.n_samples as u64,
            );
            audit.grid_minimum = Some(design.grid_minimum);
            audit.posterior =
                posterior(&problem, &source, &o.theta, solved.next_index, req.audit, &backend, &settings)?;
            Ok(DesignRun { record, audit, certificates: o.certificates.iter().map(|c| o.solution.sym(&c.q)).collect() })
        }
        GoalSpec::Doa { cap } => {
            let problem = DoaSynthesis::new(&nominal, limits, cap)?;
            let solved = solve_mode(&problem, &sampler, vec![nominal.clone()], req, &backend, &settings)?;
            let design = DoaDesign::from_outcome(solved.outcome, n_xc)?;
            let certificates = design.certificate_matrices();
            let o = &design.outcome;
            let mut record = base(problem.n_theta(), &o.theta, design.det_root, &design.gain);
            record.qbar = Some(matrix_rows(&design.qbar));
            record.design_samples = o.n_samples as u64;
            record.next_index = solved.next_index;
            let mut audit = audit_of(
                problem.n_theta(),
                solved.n_bound,
                solved.iterations,
                solved.validated,
                solved.final_audit,
                o.n_samples as u64,
            );
            audit.inclusion_margin =
                Some(certificates.iter().map(|q| min_eigenvalue(&(q - &design.qbar))).fold(f64::INFINITY, f64::min));
            audit.posterior =
                posterior(&problem, &sampler, &o.theta, solved.next_index, req.audit, &backend, &settings)?;
            Ok(DesignRun { record, audit, certificates })
        }
        GoalSpec::Reach { s } => {
            let problem = ReachSynthesis::new(&nominal, limits, s)?;
            let solved = solve_mode(&problem, &sampler, vec![nominal.clone()], req, &backend, &settings)?;
            let design = ReachDesign::from_outcome(solved.outcome, n_xc)?;
            let certificates = design.certificate_matrices();
            let o = &design.outcome;
            let mut record = base(problem.n_theta(), &o.theta, design.trace, &design.gain);
            record.qbar = Some(matrix_rows(&design.qbar));
            record.design_samples = o.n_samples as u64;
            record.next_index = solved.next_index;
            let mut audit = audit_of(
                problem.n_theta(),
                solved.n_bound,
                solved.iterations,
                solved.validated,
                solved.final_audit,
                o.n_samples as u64,
            );
            let scaled = &design.qbar * (s * s);
            audit.inclusion_margin =
                Some(certificates.iter().map(|q| min_eigenvalue(&(&scaled - q))).fold(f64::INFINITY, f64::min));
            audit.posterior =
                posterior(&problem, &sampler, &o.theta, solved.next_index, req.audit, &backend, &settings)?;
            Ok(DesignRun { record, audit, certificates })
        }
    }
}

/// Checks a stored design against `n` samples starting at `first`: for each
/// sample a certificate is searched with the design fixed.
pub fn validate_record(
    model: &UncertainModel,
    record: &DesignRecord,
    seed: u64,
    first: u64,
    n: usize,
    solver: &SolverConfig,
) -> Result<ValidationSummary, DesignError> {
    let backend = solver.backend();
    let settings = solver.solve_settings();
    let nominal = model.nominal_closed_loop()?;
    let sampler = ModelSampler::new(model, seed);
    let limits = model.limits.clone();
    let check = |summary: Option<ValidationSummary>| {
        summary.ok_or_else(|| DesignError::Invalid("validation needs at least one sample".into()))
    };
    let theta = &record.theta;
    match record.goal {
        GoalSpec::L2 { s } => {
            let p = L2Synthesis::new(&nominal, limits, s)?;
            check(posterior(&p, &sampler, theta, first, n, &backend, &settings)?)
        }
        GoalSpec::Area { s_lo, s_hi, degree } => {
            let p = AreaSynthesis::new(&nominal, limits, s_lo, s_hi, degree)?;
            let source = AreaSampler { inner: sampler, s_lo, s_hi };
            check(posterior(&p, &source, theta, first, n, &backend, &settings)?)
        }
        GoalSpec::Doa { cap } => {
            let p = DoaSynthesis::new(&nominal, limits, cap)?;
            check(posterior(&p, &sampler, theta, first, n, &backend, &settings)?)
        }
        GoalSpec::Reach { s } => {
            let p = ReachSynthesis::new(&nominal, limits, s)?;
            check(posterior(&p, &sampler, theta, first, n, &backend, &settings)?)
        }
    }
}
