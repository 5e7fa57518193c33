//! Reproducible parameter sampling.
//!
//! Every draw comes from a ChaCha stream keyed by `(seed, purpose)` and
//! positioned by the sample index, so sample `i` does not depend on which
//! other samples were drawn, in what order, or on how many threads.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use randaw_core::antiwindup::ClosedLoopModel;
use randaw_core::scenario::{SampleSource, ScenarioError};

use crate::modelcfg::{Distribution, EmpiricalTable, ModelError, SampleLabel, UncertainModel};

/// Independent random streams derived from one master seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Parameters = 0,
    Disturbance = 1,
    InitialState = 2,
}

pub fn stream_rng(seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(purpose as u64).to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Draws parameter vectors of a model.
#[derive(Clone, Copy, Debug)]
pub struct ModelSampler<'a> {
    model: &'a UncertainModel,
    seed: u64,
}

impl<'a> ModelSampler<'a> {
    pub fn new(model: &'a UncertainModel, seed: u64) -> Self {
        Self { model, seed }
    }

    pub fn model(&self) -> &'a UncertainModel {
        self.model
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn draw_with(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        // Parameters that share an empirical table use one row per sample.
        let mut rows: Vec<(&Arc<EmpiricalTable>, usize)> = Vec::new();
        self.model
            .parameters
            .iter()
            .map(|p| match &p.distribution {
                Distribution::Fixed => p.nominal,
                Distribution::Gaussian { mean, std, truncate } => loop {
                    let z: f64 = rng.sample(StandardNormal);
                    if truncate.is_none_or(|t| z.abs() <= t) {
                        break mean + std * z;
                    }
                },
                Distribution::Uniform { low, high } => {
                    if low == high {
                        *low
                    } else {
                        rng.random_range(*low..=*high)
                    }
                }
                Distribution::Empirical { table, column } => {
                    let row = match rows.iter().find(|(t, _)| Arc::ptr_eq(t, table)) {
                        Some((_, r)) => *r,
                        None => {
                            let r = rng.random_range(0..table.rows.len());
                            rows.push((table, r));
                            r
                        }
                    };
                    table.rows[row][*column]
                }
            })
            .collect()
    }

    /// Parameter vector of sample `index`, ordered as the model's parameters.
    pub fn parameters(&self, index: u64) -> Vec<f64> {
        self.draw_with(&mut stream_rng(self.seed, Purpose::Parameters, index))
    }

    pub fn closed_loop(&self, index: u64) -> Result<ClosedLoopModel, ModelError> {
        self.model.closed_loop(&self.parameters(index), SampleLabel::Index(index))
    }

    /// Sample for area synthesis: the parameters of sample `index`, then a
    /// level drawn uniformly from `[s_lo, s_hi]` on the same stream.
    pub fn area_sample(&self, index: u64, s_lo: f64, s_hi: f64) -> Result<(ClosedLoopModel, f64), ModelError> {
        let mut rng = stream_rng(self.seed, Purpose::Parameters, index);
        let values = self.draw_with(&mut rng);
        let s = if s_lo < s_hi { rng.random_range(s_lo..=s_hi) } else { s_lo };
        Ok((self.model.closed_loop(&values, SampleLabel::Index(index))?, s))
    }
}

fn scenario_error(index: u64, e: ModelError) -> ScenarioError {
    ScenarioError::Sample { index, message: e.to_string() }
}

impl SampleSource<ClosedLoopModel> for ModelSampler<'_> {
    fn sample(&self, index: u64) -> Result<ClosedLoopModel, ScenarioError> {
        self.closed_loop(index).map_err(|e| scenario_error(index, e))
    }
}

/// Sample source for area synthesis.
#[derive(Clone, Copy, Debug)]
pub struct AreaSampler<'a> {
    pub inner: ModelSampler<'a>,
    pub s_lo: f64,
    pub s_hi: f64,
}

impl SampleSource<(ClosedLoopModel, f64)> for AreaSampler<'_> {
    fn sample(&self, index: u64) -> Result<(ClosedLoopModel, f64), ScenarioError> {
        self.inner.area_sample(index, self.s_lo, self.s_hi).map_err(|e| scenario_error(index, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::par::Rayon;
    use randaw_core::scenario::{draw_samples, ParallelMap};

    fn model(extra: &str) -> UncertainModel {
        let text = include_str!("../fixtures/first_order.toml").replace("[plant]", &format!("{extra}\n[plant]"));
        UncertainModel::from_toml(&text, None).unwrap()
    }

    #[test]
    fn sample_depends_only_on_index() {
        let m = model("");
        let s = ModelSampler::new(&m, 42);
        let forward: Vec<_> = (0..50).map(|i| s.parameters(i)).collect();
        let backward: Vec<_> = (0..50).rev().map(|i| s.parameters(i)).collect();
        let parallel = Rayon.map_indexed(50, |i| s.parameters(i as u64));
        assert!(forward.iter().zip(backward.iter().rev()).all(|(a, b)| a == b));
        assert_eq!(forward, parallel);
        assert_ne!(forward[0], forward[1]);
        assert_ne!(ModelSampler::new(&m, 43).parameters(0), forward[0]);
    }

    #[test]
    fn draw_samples_is_schedule_independent() {
        let m = model("");
        let s = ModelSampler::new(&m, 7);
        let a = draw_samples(&s, 10, 20, &Rayon).unwrap();
        let b = draw_samples(&s, 10, 20, &randaw_core::scenario::Serial).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_spread_samples_equal_nominal() {
        let text =
            include_str!("../fixtures/first_order.toml").replace("std_rel = 0.2 }\nb", "std_rel = 0.0 }\nb").replace(
                "b = { distribution = \"gaussian\", nominal = 1.0, std_rel = 0.2 }",
                "b = { distribution = \"fixed\", nominal = 1.0 }",
            );
        let m = UncertainModel::from_toml(&text, None).unwrap();
        assert!(m.is_deterministic());
        let s = ModelSampler::new(&m, 1);
        for i in 0..10 {
            assert_eq!(s.parameters(i), m.nominal_values());
        }
    }

    #[test]
    fn gaussian_moments_and_truncation() {
        let m = model("");
        let s = ModelSampler::new(&m, 3);
        let a: Vec<f64> = (0..20_000).map(|i| s.parameters(i)[0]).collect();
        let mean = a.iter().sum::<f64>() / a.len() as f64;
        let var = a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / a.len() as f64;
        assert!((mean + 1.0).abs() < 0.01, "{mean}");
        assert!((var.sqrt() - 0.2).abs() < 0.01, "{}", var.sqrt());

        let text = include_str!("../fixtures/first_order.toml")
            .replace("std_rel = 0.2 }\nb", "std_rel = 0.2, truncate = 1.0 }\nb");
        let m = UncertainModel::from_toml(&text, None).unwrap();
        let s = ModelSampler::new(&m, 3);
        assert!((0..2000).all(|i| (s.parameters(i)[0] + 1.0).abs() <= 0.2 + 1e-12));
    }

    #[test]
    fn empirical_rows_are_shared() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("data.csv"), "a,b\n-1,1\n-2,2\n-3,3\n").unwrap();
        let text = include_str!("../fixtures/first_order.toml")
            .replace(
                "a = { distribution = \"gaussian\", nominal = -1.0, std_rel = 0.2 }",
                "a = { distribution = \"empirical\", file = \"data.csv\" }",
            )
            .replace(
                "b = { distribution = \"gaussian\", nominal = 1.0, std_rel = 0.2 }",
                "b = { distribution = \"empirical\", file = \"data.csv\" }",
            );
        let m = UncertainModel::from_toml(&text, Some(dir.path())).unwrap();
        assert_eq!(m.nominal_values(), vec![-2.0, 2.0]);
        let s = ModelSampler::new(&m, 9);
        let mut seen = std::collections::BTreeSet::new();
        for i in 0..100 {
            let p = s.parameters(i);
            assert_eq!(p[0], -p[1]);
            seen.insert(p[1] as i64);
        }
        assert_eq!(seen.len(), 3);
    }

    #[test]
    fn area_level_is_in_range() {
        let m = model("");
        let s = ModelSampler::new(&m, 5);
        for i in 0..100 {
            let (cl, lvl) = s.area_sample(i, 0.003, 0.01).unwrap();
            assert!((0.003..=0.01).contains(&lvl));
            assert_eq!(cl, s.closed_loop(i).unwrap());
        }
    }
}
