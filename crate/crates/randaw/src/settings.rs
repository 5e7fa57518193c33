//! Solver settings file: modeling-layer knobs plus Clarabel options.
//!
//! ```toml
//! [lmi]
//! margin = 1e-7
//! tolerance = 1e-7
//! max_iterations = 200
//!
//! [clarabel]
//! tol_feas = 1e-8
//! ```

use std::path::Path;

use randaw_core::lmi::SolveSettings;
use serde::{Deserialize, Serialize};

use crate::backend::{ClarabelBackend, ClarabelOptions};

/// Environment variable naming the default settings file.
pub const SETTINGS_ENV: &str = "RANDAW_SOLVER_SETTINGS";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmiSettings {
    pub margin: f64,
    pub tolerance: f64,
    pub max_iterations: u32,
}

impl Default for LmiSettings {
    fn default() -> Self {
        let d = SolveSettings::default();
        Self { margin: d.margin, tolerance: d.tolerance, max_iterations: d.max_iterations }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub lmi: LmiSettings,
    pub clarabel: ClarabelOptions,
}

#[derive(Debug, thiserror::Error)]
pub enum SettingsError {
    #[error("cannot read solver settings {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("solver settings {path}: {message}")]
    Parse { path: String, message: String },
    #[error("solver settings: {0}")]
    Invalid(&'static str),
}

impl SolverConfig {
    pub fn load(path: &Path) -> Result<Self, SettingsError> {
        let shown = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| SettingsError::Io { path: shown.clone(), source })?;
        let cfg: Self =
            toml::from_str(&text).map_err(|e| SettingsError::Parse { path: shown, message: e.to_string() })?;
        cfg.check()?;
        Ok(cfg)
    }

    /// The explicit path if given, else the file named by
    /// [`SETTINGS_ENV`], else defaults.
    pub fn resolve(explicit: Option<&Path>) -> Result<Self, SettingsError> {
        match explicit {
            Some(p) => Self::load(p),
            None => match std::env::var_os(SETTINGS_ENV) {
                Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
                _ => Ok(Self::default()),
            },
        }
    }

    fn check(&self) -> Result<(), SettingsError> {
        if !(self.lmi.margin >= 0.0 && self.lmi.tolerance > 0.0) {
            return Err(SettingsError::Invalid("margin must be >= 0 and tolerance > 0"));
        }
        if self.lmi.max_iterations == 0 {
            return Err(SettingsError::Invalid("max_iterations must be positive"));
        }
        Ok(())
    }

    pub fn solve_settings(&self) -> SolveSettings {
        SolveSettings {
            margin: self.lmi.margin,
            tolerance: self.lmi.tolerance,
            max_iterations: self.lmi.max_iterations,
        }
    }

    pub fn backend(&self) -> ClarabelBackend {
        ClarabelBackend::new(self.clarabel.clone())
    }
}
