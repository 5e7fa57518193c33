//! Static anti-windup for saturated linear loops.
//!
//! A plant and a pre-designed controller are interconnected through a
//! symmetric saturation; a static gain `D_aw` feeds the deadzone excess
//! `dz(u) = u - sat(u)` back into the controller state (`v₁`) and output
//! (`v₂`). [`assemble_closed_loop`] eliminates the algebraic couplings for one
//! parameter sample, and the builders in this module emit the regional
//! analysis and synthesis LMIs over that closed loop.

mod closed_loop;
mod constraints;
mod problems;

use alloc::string::String;
use alloc::vec::Vec;

pub use closed_loop::{assemble_closed_loop, ClosedLoopModel};
pub use constraints::{
    doa_constraints, l2_constraints, loop_columns, multiplier_positive, reach_constraints, GainSource, LoopColumns,
    LyapunovCertificate,
};
pub use problems::{
    gain_curve, polynomial, synth_area, synth_doa, synth_l2, synth_reach, AreaDesign, AreaDesignVars, AreaSynthesis,
    CurveMode, CurvePoint, DoaDesign, DoaSynthesis, GainCurve, L2Analysis, L2AnalysisCertificate, L2Design,
    L2DesignVars, L2Synthesis, ReachDesign, ReachSynthesis, SetDesignVars, POSITIVITY_GRID,
};

use crate::lmi::LmiError;
use crate::scenario::ScenarioError;
use crate::Mat;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum AntiWindupError {
    #[error("{matrix}: expected {expected:?}, found {found:?}")]
    Dimension { matrix: &'static str, expected: (usize, usize), found: (usize, usize) },
    #[error("I - D_cy D_pyu is ill-conditioned (condition number {condition:e})")]
    IllPosed { condition: f64 },
    #[error("multiplier entry U[{index}] = {value:e} is not positive")]
    NonPositiveMultiplier { index: usize, value: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
    #[error(transparent)]
    Lmi(#[from] LmiError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

fn check_shape(matrix: &'static str, m: &Mat, expected: (usize, usize)) -> Result<(), AntiWindupError> {
    if m.shape() != expected {
        return Err(AntiWindupError::Dimension { matrix, expected, found: m.shape() });
    }
    Ok(())
}

/// Numeric plant realization for one parameter sample.
///
/// ```text
/// ẋp = A_p xp + B_pu sat(u) + B_pw w
/// y  = C_py xp + D_pyu sat(u) + D_pyw w
/// z  = C_pz xp + D_pzu sat(u) + D_pzw w
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct PlantModel {
    pub a_p: Mat,
    pub b_pu: Mat,
    pub b_pw: Mat,
    pub c_py: Mat,
    pub d_pyu: Mat,
    pub d_pyw: Mat,
    pub c_pz: Mat,
    pub d_pzu: Mat,
    pub d_pzw: Mat,
}

impl PlantModel {
    pub fn n_xp(&self) -> usize {
        self.a_p.nrows()
    }
    pub fn n_u(&self) -> usize {
        self.b_pu.ncols()
    }
    pub fn n_w(&self) -> usize {
        self.b_pw.ncols()
    }
    pub fn n_y(&self) -> usize {
        self.c_py.nrows()
    }
    pub fn n_z(&self) -> usize {
        self.c_pz.nrows()
    }

    pub fn validate(&self) -> Result<(), AntiWindupError> {
        let (nx, nu, nw, ny, nz) = (self.n_xp(), self.n_u(), self.n_w(), self.n_y(), self.n_z());
        check_shape("A_p", &self.a_p, (nx, nx))?;
        check_shape("B_pu", &self.b_pu, (nx, nu))?;
        check_shape("B_pw", &self.b_pw, (nx, nw))?;
        check_shape("C_py", &self.c_py, (ny, nx))?;
        check_shape("D_pyu", &self.d_pyu, (ny, nu))?;
        check_shape("D_pyw", &self.d_pyw, (ny, nw))?;
        check_shape("C_pz", &self.c_pz, (nz, nx))?;
        check_shape("D_pzu", &self.d_pzu, (nz, nu))?;
        check_shape("D_pzw", &self.d_pzw, (nz, nw))
    }
}

/// Numeric controller realization; `v₁` enters the state equation and `v₂`
/// the output equation.
///
/// ```text
/// ẋc = A_c xc + B_cy y + B_cw w + v₁
/// u  = C_c xc + D_cy y + D_cw w + v₂
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct ControllerModel {
    pub a_c: Mat,
    pub b_cy: Mat,
    pub b_cw: Mat,
    pub c_c: Mat,
    pub d_cy: Mat,
    pub d_cw: Mat,
}

impl ControllerModel {
    pub fn n_xc(&self) -> usize {
        self.a_c.nrows()
    }

    /// Checks the controller against the plant's `(n_u, n_w, n_y)`.
    pub fn validate(&self, n_u: usize, n_w: usize, n_y: usize) -> Result<(), AntiWindupError> {
        let nc = self.n_xc();
        check_shape("A_c", &self.a_c, (nc, nc))?;
        check_shape("B_cy", &self.b_cy, (nc, n_y))?;
        check_shape("B_cw", &self.b_cw, (nc, n_w))?;
        check_shape("C_c", &self.c_c, (n_u, nc))?;
        check_shape("D_cy", &self.d_cy, (n_u, n_y))?;
        check_shape("D_cw", &self.d_cw, (n_u, n_w))
    }
}

/// Symmetric saturation levels `ū_k > 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct SaturationLimits {
    u_bar: Vec<f64>,
}

impl SaturationLimits {
    pub fn new(u_bar: Vec<f64>) -> Result<Self, AntiWindupError> {
        if u_bar.is_empty() || u_bar.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(AntiWindupError::InvalidArgument("saturation limits must be positive and finite"));
        }
        Ok(Self { u_bar })
    }

    pub fn values(&self) -> &[f64] {
        &self.u_bar
    }

    pub fn len(&self) -> usize {
        self.u_bar.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u_bar.is_empty()
    }
}

/// Static anti-windup gain, `(n_xc + n_u) × n_u`. The first `n_xc` rows drive
/// `v₁`, the remaining `n_u` rows drive `v₂`.
#[derive(Clone, Debug, PartialEq)]
pub struct AntiWindupGain {
    d_aw: Mat,
    n_xc: usize,
}

impl AntiWindupGain {
    pub fn new(d_aw: Mat, n_xc: usize) -> Result<Self, AntiWindupError> {
        let n_u = d_aw.ncols();
        if d_aw.nrows() != n_xc + n_u {
            return Err(AntiWindupError::Dimension {
                matrix: "D_aw",
                expected: (n_xc + n_u, n_u),
                found: d_aw.shape(),
            });
        }
        if d_aw.iter().any(|v| !v.is_finite()) {
            return Err(AntiWindupError::InvalidArgument("anti-windup gain has non-finite entries"));
        }
        Ok(Self { d_aw, n_xc })
    }

    pub fn zero(n_xc: usize, n_u: usize) -> Self {
        Self { d_aw: Mat::zeros(n_xc + n_u, n_u), n_xc }
    }

    pub fn matrix(&self) -> &Mat {
        &self.d_aw
    }

    pub fn n_xc(&self) -> usize {
        self.n_xc
    }

    pub fn v1(&self) -> Mat {
        self.d_aw.rows(0, self.n_xc).into_owned()
    }

    pub fn v2(&self) -> Mat {
        self.d_aw.rows(self.n_xc, self.d_aw.ncols()).into_owned()
    }
}

/// `D_aw = X U⁻¹` for a diagonal multiplier `U`.
pub fn extract_gain(x: &Mat, u: &Mat, n_xc: usize) -> Result<AntiWindupGain, AntiWindupError> {
    let n_u = u.nrows();
    if u.shape() != (n_u, n_u) || x.ncols() != n_u {
        return Err(AntiWindupError::Dimension { matrix: "U", expected: (x.ncols(), x.ncols()), found: u.shape() });
    }
    let mut d = x.clone();
    for k in 0..n_u {
        let uk = u[(k, k)];
        if !(uk > 0.0) {
            return Err(AntiWindupError::NonPositiveMultiplier { index: k, value: uk });
        }
        d.column_mut(k).scale_mut(1.0 / uk);
    }
    AntiWindupGain::new(d, n_xc)
}

/// Human-readable summary of a gain, row-major.
pub fn format_gain(g: &AntiWindupGain) -> String {
    use core::fmt::Write;
    let mut out = String::new();
    for i in 0..g.d_aw.nrows() {
        let row: Vec<String> = (0..g.d_aw.ncols()).map(|j| alloc::format!("{:.6}", g.d_aw[(i, j)])).collect();
        let _ = writeln!(out, "[{}]", row.join(", "));
    }
    out
}
