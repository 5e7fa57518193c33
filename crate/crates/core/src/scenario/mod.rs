//! Scenario optimization with certificates.
//!
//! Design variables θ are declared once and shared by every scenario sample,
//! while each sample gets its own fresh certificate variables. The module
//! provides the sample-size bounds, a one-shot solver ([`solve_swc`]), an a
//! posteriori validator ([`validate_design`]) and the sequential
//! design/validation loop ([`sequential_swc`]).

mod bounds;
mod engine;

use alloc::string::String;

pub use bounds::{
    best_alpha, binomial_tail, hyperharmonic, sample_bound_binomial, sample_bound_explicit, validation_bound,
    validation_bound_with,
};
pub use engine::{
    check_sample, draw_samples, sequential_swc, solve_swc, validate_design, IterationRecord, ParallelMap, SampleSource,
    SequentialOptions, SequentialReport, Serial, SwcOutcome, SwcProblem, ValidationMode, ValidationReport,
};

use crate::lmi::{LmiError, SolveStatus};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ScenarioError {
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
    #[error("scenario program with {n_samples} samples ended with status {status:?}")]
    Solve { status: SolveStatus, n_samples: usize, failed_constraint: Option<String> },
    #[error("design declares {declared} scalar entries but n_theta is {expected}")]
    NThetaMismatch { declared: usize, expected: usize },
    #[error("sample {index}: {message}")]
    Sample { index: u64, message: String },
    #[error(transparent)]
    Model(#[from] LmiError),
}

/// Accuracy ε and confidence δ, both in the open unit interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbabilityLevels {
    epsilon: f64,
    delta: f64,
}

impl ProbabilityLevels {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self, ScenarioError> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(ScenarioError::InvalidArgument("epsilon must lie in (0, 1)"));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(ScenarioError::InvalidArgument("delta must lie in (0, 1)"));
        }
        Ok(Self { epsilon, delta })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

/// Settings of the sequential algorithm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SequentialConfig {
    k_t: u64,
    alpha: f64,
    levels: ProbabilityLevels,
}

impl SequentialConfig {
    pub fn new(k_t: u64, alpha: f64, levels: ProbabilityLevels) -> Result<Self, ScenarioError> {
        if k_t < 2 {
            return Err(ScenarioError::InvalidArgument("k_t must be at least 2"));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(ScenarioError::InvalidArgument("alpha must be positive"));
        }
        Ok(Self { k_t, alpha, levels })
    }

    /// Same as [`SequentialConfig::new`] with `α` chosen by [`best_alpha`].
    pub fn with_best_alpha(k_t: u64, levels: ProbabilityLevels) -> Result<Self, ScenarioError> {
        Self::new(k_t, 1.0, levels)?;
        Self::new(k_t, best_alpha(k_t, levels)?, levels)
    }

    pub fn k_t(&self) -> u64 {
        self.k_t
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn levels(&self) -> ProbabilityLevels {
        self.levels
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn levels_reject_closed_endpoints() {
        assert!(ProbabilityLevels::new(0.0, 0.5).is_err());
        assert!(ProbabilityLevels::new(0.5, 1.0).is_err());
        assert!(ProbabilityLevels::new(0.01, 1e-6).is_ok());
    }

    #[test]
    fn config_requires_two_iterations() {
        let l = ProbabilityLevels::new(0.1, 0.1).unwrap();
        assert!(SequentialConfig::new(1, 1.0, l).is_err());
        assert!(SequentialConfig::new(2, 0.0, l).is_err());
    }
}
