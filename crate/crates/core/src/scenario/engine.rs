//! Scenario-with-certificates solve, validation and the sequential loop.

use alloc::vec::Vec;

use super::{sample_bound_binomial, validation_bound, ScenarioError, SequentialConfig};
use crate::lmi::{
    solve, EntryId, LmiError, Objective, SdpBackend, SdpProblem, SdpSolution, SolveSettings, SolveStatus,
};

/// A scenario program with shared design variables and per-sample certificates.
///
/// `declare_design` is always called first on a fresh [`SdpProblem`], so the
/// design occupies entries `0..n_theta()`.
pub trait SwcProblem: Sync {
    type Sample: Send + Sync;
    type Design: Clone + Send;
    type Certificate: Clone + Send;

    /// Number of scalar design degrees of freedom.
    fn n_theta(&self) -> usize;

    fn declare_design(&self, p: &mut SdpProblem) -> Result<Self::Design, LmiError>;

    /// Sample-independent constraints on the design alone.
    fn design_constraints(&self, _p: &mut SdpProblem, _design: &Self::Design) -> Result<(), LmiError> {
        Ok(())
    }

    fn declare_certificate(&self, p: &mut SdpProblem) -> Result<Self::Certificate, LmiError>;

    fn add_constraints(
        &self,
        p: &mut SdpProblem,
        design: &Self::Design,
        certificate: &Self::Certificate,
        sample: &Self::Sample,
    ) -> Result<(), LmiError>;

    fn objective(&self, design: &Self::Design) -> Objective;
}

/// Indexed sample generator. Sample `i` must depend only on `i` (and whatever
/// seed the source was built with).
pub trait SampleSource<S>: Sync {
    fn sample(&self, index: u64) -> Result<S, ScenarioError>;
}

impl<S, F> SampleSource<S> for F
where
    F: Fn(u64) -> Result<S, ScenarioError> + Sync,
{
    fn sample(&self, index: u64) -> Result<S, ScenarioError> {
        self(index)
    }
}

/// Order-preserving map over `0..n`, possibly concurrent.
pub trait ParallelMap: Sync {
    fn map_indexed<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Runs everything on the calling thread.
#[derive(Clone, Copy, Debug, Default)]
pub struct Serial;

impl ParallelMap for Serial {
    fn map_indexed<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).map(f).collect()
    }
}

/// Result of a successful scenario solve.
#[derive(Clone, Debug)]
pub struct SwcOutcome<D, C> {
    pub design: D,
    /// Certificate handles, one per sample, in sample order.
    pub certificates: Vec<C>,
    pub solution: SdpSolution,
    /// Values of the design entries.
    pub theta: Vec<f64>,
    pub n_samples: usize,
}

fn declare_checked<P: SwcProblem + ?Sized>(problem: &P, p: &mut SdpProblem) -> Result<P::Design, ScenarioError> {
    let design = problem.declare_design(p)?;
    if p.n_entries() != problem.n_theta() {
        return Err(ScenarioError::NThetaMismatch { declared: p.n_entries(), expected: problem.n_theta() });
    }
    Ok(design)
}

/// Builds the scenario program over `samples` and returns the design state
/// when the solver reports `Optimal`.
pub fn solve_swc<P, B>(
    problem: &P,
    samples: &[P::Sample],
    backend: &B,
    settings: &SolveSettings,
) -> Result<SwcOutcome<P::Design, P::Certificate>, ScenarioError>
where
    P: SwcProblem + ?Sized,
    B: SdpBackend + ?Sized,
{
    if samples.is_empty() {
        return Err(ScenarioError::InvalidArgument("at least one scenario sample is required"));
    }
    let mut p = SdpProblem::new();
    let design = declare_checked(problem, &mut p)?;
    problem.design_constraints(&mut p, &design)?;
    let mut certificates = Vec::with_capacity(samples.len());
    for sample in samples {
        let cert = problem.declare_certificate(&mut p)?;
        problem.add_constraints(&mut p, &design, &cert, sample)?;
        certificates.push(cert);
    }
    p.set_objective(problem.objective(&design))?;
    let solution = solve(&p, backend, settings);
    if solution.status != SolveStatus::Optimal {
        return Err(ScenarioError::Solve {
            status: solution.status,
            n_samples: samples.len(),
            failed_constraint: solution.stats.failed_constraint.clone(),
        });
    }
    let theta = solution.values[..problem.n_theta()].to_vec();
    Ok(SwcOutcome { design, certificates, solution, theta, n_samples: samples.len() })
}

/// Solves the certificate-only feasibility problem for one sample with the
/// design pinned to `theta`.
pub fn check_sample<P, B>(
    problem: &P,
    theta: &[f64],
    sample: &P::Sample,
    backend: &B,
    settings: &SolveSettings,
) -> Result<SdpSolution, ScenarioError>
where
    P: SwcProblem + ?Sized,
    B: SdpBackend + ?Sized,
{
    if theta.len() != problem.n_theta() {
        return Err(ScenarioError::NThetaMismatch { declared: theta.len(), expected: problem.n_theta() });
    }
    let mut p = SdpProblem::new();
    let design = declare_checked(problem, &mut p)?;
    p.fix(theta.iter().enumerate().map(|(i, v)| (EntryId(i), *v)))?;
    problem.design_constraints(&mut p, &design)?;
    let cert = problem.declare_certificate(&mut p)?;
    problem.add_constraints(&mut p, &design, &cert, sample)?;
    Ok(solve(&p, backend, settings))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ValidationMode {
    /// Stop after the first block of samples that contains a failure and
    /// report the lowest failing index.
    EarlyExit,
    /// Check every sample.
    Audit,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub requested: usize,
    pub checked: usize,
    /// Lowest index (into the validation batch) whose check failed.
    pub first_failure: Option<usize>,
    /// Samples whose certificate problem was reported infeasible.
    pub infeasible: usize,
    /// Samples whose check ended in solver trouble; counted as violations.
    pub solver_trouble: usize,
    /// Status of every checked sample, in sample order.
    pub statuses: Vec<SolveStatus>,
}

impl ValidationReport {
    pub fn violations(&self) -> usize {
        self.infeasible + self.solver_trouble
    }

    pub fn violation_fraction(&self) -> f64 {
        if self.checked == 0 {
            0.0
        } else {
            self.violations() as f64 / self.checked as f64
        }
    }
}

/// Samples checked concurrently per block in early-exit mode.
const VALIDATION_BLOCK: usize = 64;

/// Checks a fixed design against validation samples.
pub fn validate_design<P, B, M>(
    problem: &P,
    theta: &[f64],
    samples: &[P::Sample],
    backend: &B,
    settings: &SolveSettings,
    mode: ValidationMode,
    par: &M,
) -> Result<ValidationReport, ScenarioError>
where
    P: SwcProblem + ?Sized,
    B: SdpBackend + Sync + ?Sized,
    M: ParallelMap + ?Sized,
{
    if samples.is_empty() {
        return Err(ScenarioError::InvalidArgument("validation needs at least one sample"));
    }
    let block = match mode {
        ValidationMode::EarlyExit => VALIDATION_BLOCK,
        ValidationMode::Audit => samples.len(),
    };
    let mut report = ValidationReport {
        requested: samples.len(),
        checked: 0,
        first_failure: None,
        infeasible: 0,
        solver_trouble: 0,
        statuses: Vec::with_capacity(samples.len()),
    };
    for (b, chunk) in samples.chunks(block).enumerate() {
        let results = par
            .map_indexed(chunk.len(), |j| check_sample(problem, theta, &chunk[j], backend, settings).map(|s| s.status));
        for (j, status) in results.into_iter().enumerate() {
            let status = status?;
            match status {
                SolveStatus::Optimal => {}
                SolveStatus::Infeasible => report.infeasible += 1,
                SolveStatus::IllPosed | SolveStatus::NumericalTrouble => report.solver_trouble += 1,
            }
            if status != SolveStatus::Optimal && report.first_failure.is_none() {
                report.first_failure = Some(b * block + j);
            }
            report.statuses.push(status);
            report.checked += 1;
        }
        if mode == ValidationMode::EarlyExit && report.first_failure.is_some() {
            break;
        }
    }
    Ok(report)
}

/// Draws samples `first..first + n` through `par`.
pub fn draw_samples<S, Src, M>(source: &Src, first: u64, n: usize, par: &M) -> Result<Vec<S>, ScenarioError>
where
    S: Send,
    Src: SampleSource<S> + ?Sized,
    M: ParallelMap + ?Sized,
{
    par.map_indexed(n, |j| source.sample(first + j as u64)).into_iter().collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub k: u64,
    pub n_k: u64,
    /// Index of the first design sample drawn in this iteration.
    pub design_first_index: u64,
    pub design_status: SolveStatus,
    pub objective: f64,
    /// Validation sample size, absent on the final iteration.
    pub m_k: Option<u64>,
    pub validation_first_index: Option<u64>,
    pub validation_checked: usize,
    pub first_failure: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SequentialOptions {
    /// Index of the first sample the run may draw.
    pub first_index: u64,
    /// Audit the design returned at `k = k_t` (which the algorithm returns
    /// unvalidated) on `M_{k_t - 1}` fresh samples.
    pub audit_final: bool,
}

#[derive(Clone, Debug)]
pub struct SequentialReport<D, C> {
    /// Sample size `N` with `B(N, ε, n_θ) ≤ δ/2` that drives the schedule.
    pub n_bound: u64,
    pub iterations: Vec<IterationRecord>,
    /// Final design, or the error that aborted the run.
    pub outcome: Result<SwcOutcome<D, C>, ScenarioError>,
    /// `true` when the run stopped on a passed validation.
    pub validated: bool,
    pub final_audit: Option<ValidationReport>,
    /// First sample index not consumed by this run.
    pub next_index: u64,
}

impl<D, C> SequentialReport<D, C> {
    pub fn iterations_run(&self) -> usize {
        self.iterations.len()
    }

    /// Design samples used by the returned design.
    pub fn final_design_samples(&self) -> u64 {
        self.iterations.last().map_or(0, |r| r.n_k)
    }

    /// Design samples drawn across all iterations.
    pub fn total_design_samples(&self) -> u64 {
        self.iterations.iter().map(|r| r.n_k).sum()
    }
}

/// Sequential design/validation loop.
///
/// Iteration `k` designs on `N_k = ⌈N k / k_t⌉` fresh samples and validates
/// on `M_k` fresh samples; the run stops at the first passed validation or
/// returns the `k = k_t` design unvalidated.
pub fn sequential_swc<P, Src, B, M>(
    problem: &P,
    cfg: &SequentialConfig,
    source: &Src,
    backend: &B,
    settings: &SolveSettings,
    par: &M,
    options: &SequentialOptions,
) -> Result<SequentialReport<P::Design, P::Certificate>, ScenarioError>
where
    P: SwcProblem + ?Sized,
    Src: SampleSource<P::Sample> + ?Sized,
    B: SdpBackend + Sync + ?Sized,
    M: ParallelMap + ?Sized,
{
    let levels = cfg.levels();
    let n_bound = sample_bound_binomial(levels, problem.n_theta() as u64, Some(levels.delta() / 2.0))?;
    let k_t = cfg.k_t();
    let mut cursor = options.first_index;
    let mut iterations = Vec::new();
    let finish = |iterations, outcome, validated, final_audit, next_index| SequentialReport {
        n_bound,
        iterations,
        outcome,
        validated,
        final_audit,
        next_index,
    };

    for k in 1..=k_t {
        let n_k = (n_bound * k).div_ceil(k_t);
        let design_first_index = cursor;
        cursor += n_k;
        let samples = match draw_samples(source, design_first_index, n_k as usize, par) {
            Ok(s) => s,
            Err(e) => return Ok(finish(iterations, Err(e), false, None, cursor)),
        };
        let outcome = solve_swc(problem, &samples, backend, settings);
        let mut record = IterationRecord {
            k,
            n_k,
            design_first_index,
            design_status: match &outcome {
                Ok(_) => SolveStatus::Optimal,
                Err(ScenarioError::Solve { status, .. }) => *status,
                Err(_) => SolveStatus::NumericalTrouble,
            },
            objective: outcome.as_ref().map_or(f64::NAN, |o| o.solution.objective_value),
            m_k: None,
            validation_first_index: None,
            validation_checked: 0,
            first_failure: None,
        };
        let outcome = match outcome {
            Ok(o) => o,
            Err(e) => {
                iterations.push(record);
                return Ok(finish(iterations, Err(e), false, None, cursor));
            }
        };

        if k == k_t {
            iterations.push(record);
            let mut audit = None;
            if options.audit_final {
                let m = validation_bound(k_t - 1, cfg)?;
                let vsamples = draw_samples(source, cursor, m as usize, par)?;
                cursor += m;
                audit = Some(validate_design(
                    problem,
                    &outcome.theta,
                    &vsamples,
                    backend,
                    settings,
                    ValidationMode::Audit,
                    par,
                )?);
            }
            return Ok(finish(iterations, Ok(outcome), false, audit, cursor));
        }

        let m_k = validation_bound(k, cfg)?;
        record.m_k = Some(m_k);
        record.validation_first_index = Some(cursor);
        let vsamples = match draw_samples(source, cursor, m_k as usize, par) {
            Ok(s) => s,
            Err(e) => {
                iterations.push(record);
                return Ok(finish(iterations, Err(e), false, None, cursor + m_k));
            }
        };
        cursor += m_k;
        let report =
            validate_design(problem, &outcome.theta, &vsamples, backend, settings, ValidationMode::EarlyExit, par)?;
        record.validation_checked = report.checked;
        record.first_failure = report.first_failure;
        iterations.push(record);
        if report.first_failure.is_none() {
            return Ok(finish(iterations, Ok(outcome), true, None, cursor));
        }
    }
    unreachable!("the loop returns at k = k_t")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lmi::{LmiConstraint, MatExpr, RawSolution, ScalarVar, StandardForm};
    use crate::scenario::ProbabilityLevels;
    use alloc::vec;

    /// Exact solver for one scalar column constrained by 1×1 blocks.
    struct IntervalBackend;

    impl SdpBackend for IntervalBackend {
        fn solve_standard(&self, form: &StandardForm, _: &SolveSettings) -> RawSolution {
            let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
            for b in &form.blocks {
                assert_eq!(b.dim, 1);
                let c = b.constant[(0, 0)];
                let a = b.coeffs.first().map_or(0.0, |(_, m)| m[(0, 0)]);
                if a > 0.0 {
                    lo = lo.max(-c / a);
                } else if a < 0.0 {
                    hi = hi.min(-c / a);
                } else if c < 0.0 {
                    lo = f64::INFINITY;
                }
            }
            let status = if lo > hi { SolveStatus::Infeasible } else { SolveStatus::Optimal };
            let x = match (status, form.n_columns) {
                (SolveStatus::Optimal, 0) => vec![],
                (SolveStatus::Optimal, _) if form.cost[0] > 0.0 => vec![lo],
                (SolveStatus::Optimal, _) if form.cost[0] < 0.0 => vec![hi],
                (SolveStatus::Optimal, _) => vec![if lo.is_finite() { lo } else { hi.min(0.0) }],
                _ => vec![],
            };
            RawSolution { status, x, iterations: 1, primal_residual: 0.0, dual_residual: 0.0 }
        }
    }

    /// min θ s.t. θ ≥ q for every sample q.
    struct MaxOfSamples;

    impl SwcProblem for MaxOfSamples {
        type Sample = f64;
        type Design = ScalarVar;
        type Certificate = ();

        fn n_theta(&self) -> usize {
            1
        }
        fn declare_design(&self, p: &mut SdpProblem) -> Result<ScalarVar, LmiError> {
            Ok(p.scalar("theta"))
        }
        fn declare_certificate(&self, _: &mut SdpProblem) -> Result<(), LmiError> {
            Ok(())
        }
        fn add_constraints(&self, p: &mut SdpProblem, d: &ScalarVar, _: &(), q: &f64) -> Result<(), LmiError> {
            p.constrain(LmiConstraint::psd(&d.expr() - &MatExpr::scalar_const(*q), "theta >= q"))
        }
        fn objective(&self, d: &ScalarVar) -> Objective {
            Objective::Minimize(d.linear())
        }
    }

    /// Uniform(0,1) through a fixed integer hash of the index.
    fn uniform(index: u64) -> Result<f64, ScenarioError> {
        let mut z = index.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        Ok((z >> 11) as f64 / (1u64 << 53) as f64)
    }

    #[test]
    fn toy_solution_is_sample_maximum() {
        let samples: Vec<f64> = (0..50).map(|i| uniform(i).unwrap()).collect();
        let out = solve_swc(&MaxOfSamples, &samples, &IntervalBackend, &SolveSettings::default()).unwrap();
        let max = samples.iter().copied().fold(f64::MIN, f64::max);
        assert_eq!(out.theta, vec![max]);
        assert_eq!(out.certificates.len(), 50);
    }

    #[test]
    fn duplicated_samples_do_not_change_the_optimum() {
        let one = solve_swc(&MaxOfSamples, &[0.3], &IntervalBackend, &SolveSettings::default()).unwrap();
        let two = solve_swc(&MaxOfSamples, &[0.3, 0.3], &IntervalBackend, &SolveSettings::default()).unwrap();
        assert_eq!(one.theta, two.theta);
    }

    #[test]
    fn validation_counts_and_early_exit() {
        let samples: Vec<f64> = (0..4000).map(|i| uniform(i).unwrap()).collect();
        let s = SolveSettings::default();
        let full =
            validate_design(&MaxOfSamples, &[1.0], &samples, &IntervalBackend, &s, ValidationMode::Audit, &Serial)
                .unwrap();
        assert_eq!(full.violations(), 0);
        let half =
            validate_design(&MaxOfSamples, &[0.5], &samples, &IntervalBackend, &s, ValidationMode::Audit, &Serial)
                .unwrap();
        assert!((half.violation_fraction() - 0.5).abs() < 0.03, "{}", half.violation_fraction());
        let first = samples.iter().position(|q| *q > 0.5).unwrap();
        let early =
            validate_design(&MaxOfSamples, &[0.5], &samples, &IntervalBackend, &s, ValidationMode::EarlyExit, &Serial)
                .unwrap();
        assert_eq!(early.first_failure, Some(first));
        assert!(early.checked <= VALIDATION_BLOCK.max(first + 1));
        assert!(
            validate_design(&MaxOfSamples, &[0.5], &[], &IntervalBackend, &s, ValidationMode::Audit, &Serial).is_err()
        );
    }

    #[test]
    fn sequential_schedule_and_sample_disjointness() {
        let levels = ProbabilityLevels::new(0.05, 1e-3).unwrap();
        let cfg = SequentialConfig::new(5, 1.0, levels).unwrap();
        let report = sequential_swc(
            &MaxOfSamples,
            &cfg,
            &uniform,
            &IntervalBackend,
            &SolveSettings::default(),
            &Serial,
            &SequentialOptions { first_index: 7, audit_final: false },
        )
        .unwrap();
        let n = sample_bound_binomial(levels, 1, Some(5e-4)).unwrap();
        assert_eq!(report.n_bound, n);
        let mut next = 7;
        for r in &report.iterations {
            assert_eq!(r.n_k, (n * r.k).div_ceil(5));
            assert_eq!(r.design_first_index, next);
            next += r.n_k;
            if let Some(m) = r.m_k {
                assert_eq!(r.validation_first_index, Some(next));
                next += m;
            }
        }
        assert_eq!(report.next_index, next);
        assert!(report.outcome.is_ok());
        assert!(report.final_design_samples() <= n);
    }

    #[test]
    fn sample_independent_constraints_stop_at_first_iteration() {
        let levels = ProbabilityLevels::new(0.1, 1e-2).unwrap();
        let cfg = SequentialConfig::new(10, 1.0, levels).unwrap();
        let constant = |_: u64| -> Result<f64, ScenarioError> { Ok(0.25) };
        let report = sequential_swc(
            &MaxOfSamples,
            &cfg,
            &constant,
            &IntervalBackend,
            &SolveSettings::default(),
            &Serial,
            &SequentialOptions::default(),
        )
        .unwrap();
        assert_eq!(report.iterations_run(), 1);
        assert!(report.validated);
    }
}
