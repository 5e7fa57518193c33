//! Scenario programs for anti-windup analysis and synthesis.

use alloc::vec::Vec;

use super::constraints::{
    doa_constraints, l2_constraints, loop_columns, multiplier_positive, reach_constraints, GainSource,
    LyapunovCertificate,
};
use super::{extract_gain, AntiWindupError, AntiWindupGain, ClosedLoopModel, SaturationLimits};
use crate::lmi::{
    det_root, LinearForm, LmiConstraint, LmiError, MatExpr, Objective, RectMatrixVar, ScalarVar, SdpBackend,
    SdpProblem, SolveSettings, SolveStatus, SymMatrixVar, SymStructure,
};
use crate::scenario::{solve_swc, ParallelMap, ScenarioError, SwcOutcome, SwcProblem};
use crate::Mat;

/// Number of grid points on which an area design's `γ²(s)` is checked.
pub const POSITIVITY_GRID: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Dims {
    n_x: usize,
    n_xc: usize,
    n_u: usize,
}

impl Dims {
    fn of(cl: &ClosedLoopModel, limits: &SaturationLimits) -> Result<Self, AntiWindupError> {
        if limits.len() != cl.n_u() {
            return Err(AntiWindupError::Dimension {
                matrix: "saturation limits",
                expected: (cl.n_u(), 1),
                found: (limits.len(), 1),
            });
        }
        Ok(Self { n_x: cl.n_x(), n_xc: cl.n_xc, n_u: cl.n_u() })
    }

    fn n_aw(&self) -> usize {
        self.n_xc + self.n_u
    }

    /// Entries of `X` plus the diagonal of `U`.
    fn n_gain(&self) -> usize {
        self.n_aw() * self.n_u + self.n_u
    }

    fn declare_gain(&self, p: &mut SdpProblem) -> Result<(RectMatrixVar, SymMatrixVar), LmiError> {
        let x = p.rect_matrix("X", self.n_aw(), self.n_u)?;
        let u = p.sym_matrix("U", self.n_u, SymStructure::Diagonal)?;
        Ok((x, u))
    }
}

fn check_level(s: f64) -> Result<(), AntiWindupError> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(AntiWindupError::InvalidArgument("disturbance level must be positive and finite"));
    }
    Ok(())
}

fn constrain_all(p: &mut SdpProblem, cs: Vec<LmiConstraint>) -> Result<(), LmiError> {
    cs.into_iter().try_for_each(|c| p.constrain(c))
}

fn gain_from(
    solution: &crate::lmi::SdpSolution,
    x: &RectMatrixVar,
    u: &SymMatrixVar,
    n_xc: usize,
) -> Result<AntiWindupGain, AntiWindupError> {
    extract_gain(&solution.rect(x), &solution.sym(u), n_xc)
}

// ---------------------------------------------------------------------------
// ℒ₂ gain

/// Design variables of ℒ₂ synthesis: `γ²`, `X = D_aw U` and diagonal `U`.
#[derive(Clone, Debug, PartialEq)]
pub struct L2DesignVars {
    pub gamma2: ScalarVar,
    pub x: RectMatrixVar,
    pub u: SymMatrixVar,
}

/// Minimizes the regional ℒ₂ gain bound at level `s` jointly over every
/// sampled closed loop.
#[derive(Clone, Debug)]
pub struct L2Synthesis {
    dims: Dims,
    limits: SaturationLimits,
    s: f64,
}

impl L2Synthesis {
    /// `reference` fixes the dimensions; every sample must share them.
    pub fn new(reference: &ClosedLoopModel, limits: SaturationLimits, s: f64) -> Result<Self, AntiWindupError> {
        check_level(s)?;
        Ok(Self { dims: Dims::of(reference, &limits)?, limits, s })
    }

    pub fn level(&self) -> f64 {
        self.s
    }
}

impl SwcProblem for L2Synthesis {
    type Sample = ClosedLoopModel;
    type Design = L2DesignVars;
    type Certificate = LyapunovCertificate;

    fn n_theta(&self) -> usize {
        1 + self.dims.n_gain()
    }

    fn declare_design(&self, p: &mut SdpProblem) -> Result<L2DesignVars, LmiError> {
        let gamma2 = p.scalar("gamma2");
        let (x, u) = self.dims.declare_gain(p)?;
        Ok(L2DesignVars { gamma2, x, u })
    }

    fn design_constraints(&self, p: &mut SdpProblem, d: &L2DesignVars) -> Result<(), LmiError> {
        p.constrain(multiplier_positive(&d.u))
    }

    fn declare_certificate(&self, p: &mut SdpProblem) -> Result<LyapunovCertificate, LmiError> {
        LyapunovCertificate::declare(p, self.dims.n_x, self.dims.n_u)
    }

    fn add_constraints(
        &self,
        p: &mut SdpProblem,
        d: &L2DesignVars,
        cert: &LyapunovCertificate,
        cl: &ClosedLoopModel,
    ) -> Result<(), LmiError> {
        let cols = loop_columns(cl, &d.u, GainSource::Free(&d.x))?;
        constrain_all(p, l2_constraints(cl, cert, &cols, &d.gamma2.expr(), self.s, &self.limits)?)
    }

    fn objective(&self, d: &L2DesignVars) -> Objective {
        Objective::Minimize(d.gamma2.linear())
    }
}

/// Per-sample certificate of ℒ₂ analysis: the Lyapunov pair and the
/// multiplier `U`, which is free for every sample once the gain is fixed.
#[derive(Clone, Debug, PartialEq)]
pub struct L2AnalysisCertificate {
    pub lyapunov: LyapunovCertificate,
    pub u: SymMatrixVar,
}

/// Regional ℒ₂ gain bound of a fixed anti-windup gain; the only design
/// variable is `γ²`.
#[derive(Clone, Debug)]
pub struct L2Analysis {
    dims: Dims,
    limits: SaturationLimits,
    s: f64,
    gain: AntiWindupGain,
}

impl L2Analysis {
    pub fn new(
        reference: &ClosedLoopModel,
        limits: SaturationLimits,
        s: f64,
        gain: AntiWindupGain,
    ) -> Result<Self, AntiWindupError> {
        check_level(s)?;
        let dims = Dims::of(reference, &limits)?;
        if gain.matrix().shape() != (dims.n_aw(), dims.n_u) {
            return Err(AntiWindupError::Dimension {
                matrix: "D_aw",
                expected: (dims.n_aw(), dims.n_u),
                found: gain.matrix().shape(),
            });
        }
        Ok(Self { dims, limits, s, gain })
    }
}

impl SwcProblem for L2Analysis {
    type Sample = ClosedLoopModel;
    type Design = ScalarVar;
    type Certificate = L2AnalysisCertificate;

    fn n_theta(&self) -> usize {
        1
    }

    fn declare_design(&self, p: &mut SdpProblem) -> Result<ScalarVar, LmiError> {
        Ok(p.scalar("gamma2"))
    }

    fn declare_certificate(&self, p: &mut SdpProblem) -> Result<L2AnalysisCertificate, LmiError> {
        let lyapunov = LyapunovCertificate::declare(p, self.dims.n_x, self.dims.n_u)?;
        let u = p.sym_matrix("U", self.dims.n_u, SymStructure::Diagonal)?;
        Ok(L2AnalysisCertificate { lyapunov, u })
    }

    fn add_constraints(
        &self,
        p: &mut SdpProblem,
        gamma2: &ScalarVar,
        cert: &L2AnalysisCertificate,
        cl: &ClosedLoopModel,
    ) -> Result<(), LmiError> {
        p.constrain(multiplier_positive(&cert.u))?;
        let cols = loop_columns(cl, &cert.u, GainSource::Fixed(&self.gain))?;
        constrain_all(p, l2_constraints(cl, &cert.lyapunov, &cols, &gamma2.expr(), self.s, &self.limits)?)
    }

    fn objective(&self, gamma2: &ScalarVar) -> Objective {
        Objective::Minimize(gamma2.linear())
    }
}

/// Solved ℒ₂ synthesis.
#[derive(Clone, Debug)]
pub struct L2Design {
    pub gamma2: f64,
    pub gain: AntiWindupGain,
    pub outcome: SwcOutcome<L2DesignVars, LyapunovCertificate>,
}

impl L2Design {
    pub fn from_outcome(
        outcome: SwcOutcome<L2DesignVars, LyapunovCertificate>,
        n_xc: usize,
    ) -> Result<Self, AntiWindupError> {
        let d = &outcome.design;
        let gamma2 = outcome.solution.scalar(&d.gamma2);
        let gain = gain_from(&outcome.solution, &d.x, &d.u, n_xc)?;
        Ok(Self { gamma2, gain, outcome })
    }

    pub fn gamma(&self) -> f64 {
        libm::sqrt(self.gamma2)
    }
}

pub fn synth_l2<B: SdpBackend + ?Sized>(
    problem: &L2Synthesis,
    samples: &[ClosedLoopModel],
    backend: &B,
    settings: &SolveSettings,
) -> Result<L2Design, AntiWindupError> {
    let outcome = solve_swc(problem, samples, backend, settings)?;
    L2Design::from_outcome(outcome, problem.dims.n_xc)
}

// ---------------------------------------------------------------------------
// Gain curves

#[derive(Clone, Debug, PartialEq)]
pub enum CurveMode {
    /// A new gain is synthesized at every level.
    Synthesis,
    /// The given gain is analysed at every level.
    Analysis(AntiWindupGain),
}

/// One point of a gain curve. Levels at which the program is infeasible or
/// the solver fails carry `γ² = +∞`.
#[derive(Clone, Debug, PartialEq)]
pub struct CurvePoint {
    pub s: f64,
    pub gamma2: f64,
    pub status: SolveStatus,
    /// The synthesized gain (synthesis mode only).
    pub gain: Option<AntiWindupGain>,
}

impl CurvePoint {
    pub fn gamma(&self) -> f64 {
        libm::sqrt(self.gamma2)
    }

    pub fn is_feasible(&self) -> bool {
        self.gamma2.is_finite()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GainCurve {
    pub points: Vec<CurvePoint>,
}

impl GainCurve {
    /// Largest level at which the program was feasible.
    pub fn max_feasible_level(&self) -> Option<f64> {
        self.points.iter().filter(|p| p.is_feasible()).map(|p| p.s).reduce(f64::max)
    }
}

fn infeasible_point(s: f64, err: ScenarioError) -> Result<CurvePoint, AntiWindupError> {
    match err {
        ScenarioError::Solve { status, .. } => Ok(CurvePoint { s, gamma2: f64::INFINITY, status, gain: None }),
        other => Err(other.into()),
    }
}

/// ℒ₂ gain bound over a grid of disturbance levels, using the same samples
/// at every level. Levels are solved independently through `par`.
#[allow(clippy::too_many_arguments)]
pub fn gain_curve<B, M>(
    mode: &CurveMode,
    reference: &ClosedLoopModel,
    samples: &[ClosedLoopModel],
    limits: &SaturationLimits,
    levels: &[f64],
    backend: &B,
    settings: &SolveSettings,
    par: &M,
) -> Result<GainCurve, AntiWindupError>
where
    B: SdpBackend + Sync + ?Sized,
    M: ParallelMap,
{
    let point = |i: usize| -> Result<CurvePoint, AntiWindupError> {
        let s = levels[i];
        match mode {
            CurveMode::Synthesis => {
                let problem = L2Synthesis::new(reference, limits.clone(), s)?;
                match synth_l2(&problem, samples, backend, settings) {
                    Ok(d) => Ok(CurvePoint { s, gamma2: d.gamma2, status: SolveStatus::Optimal, gain: Some(d.gain) }),
                    Err(AntiWindupError::Scenario(e)) => infeasible_point(s, e),
                    Err(e) => Err(e),
                }
            }
            CurveMode::Analysis(gain) => {
                let problem = L2Analysis::new(reference, limits.clone(), s, gain.clone())?;
                match solve_swc(&problem, samples, backend, settings) {
                    Ok(o) => Ok(CurvePoint {
                        s,
                        gamma2: o.solution.scalar(&o.design),
                        status: SolveStatus::Optimal,
                        gain: None,
                    }),
                    Err(e) => infeasible_point(s, e),
                }
            }
        }
    };
    let points = par.map_indexed(levels.len(), point).into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(GainCurve { points })
}

// ---------------------------------------------------------------------------
// Area under the gain curve

/// Design variables of area synthesis: polynomial coefficients `Γ_k` of
/// `γ²(s) = Σ Γ_k s^k`, `X` and `U`.
#[derive(Clone, Debug, PartialEq)]
pub struct AreaDesignVars {
    pub coefficients: Vec<ScalarVar>,
    pub x: RectMatrixVar,
    pub u: SymMatrixVar,
}

/// Minimizes `∫ γ²(s) ds` over `[s_lo, s_hi]` with a polynomial `γ²(s)`;
/// each sample pairs a closed loop with a disturbance level.
#[derive(Clone, Debug)]
pub struct AreaSynthesis {
    dims: Dims,
    limits: SaturationLimits,
    s_lo: f64,
    s_hi: f64,
    degree: usize,
}

impl AreaSynthesis {
    pub fn new(
        reference: &ClosedLoopModel,
        limits: SaturationLimits,
        s_lo: f64,
        s_hi: f64,
        degree: usize,
    ) -> Result<Self, AntiWindupError> {
        check_level(s_lo)?;
        check_level(s_hi)?;
        if s_lo >= s_hi {
            return Err(AntiWindupError::InvalidArgument("level interval must satisfy s_lo < s_hi"));
        }
        Ok(Self { dims: Dims::of(reference, &limits)?, limits, s_lo, s_hi, degree })
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.s_lo, self.s_hi)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Weight of `Γ_k` in the cost, `(s_hi^(k+1) - s_lo^(k+1)) / (k+1)`.
    fn weight(&self, k: usize) -> f64 {
        let p = (k + 1) as i32;
        (libm::pow(self.s_hi, p as f64) - libm::pow(self.s_lo, p as f64)) / p as f64
    }

    fn gamma2_form(&self, coefficients: &[ScalarVar], s: f64) -> LinearForm {
        let mut f = LinearForm::constant(0.0);
        let mut sk = 1.0;
        for c in coefficients {
            f.add(c.entry(), sk);
            sk *= s;
        }
        f
    }
}

impl SwcProblem for AreaSynthesis {
    type Sample = (ClosedLoopModel, f64);
    type Design = AreaDesignVars;
    type Certificate = LyapunovCertificate;

    fn n_theta(&self) -> usize {
        self.degree + 1 + self.dims.n_gain()
    }

    fn declare_design(&self, p: &mut SdpProblem) -> Result<AreaDesignVars, LmiError> {
        let coefficients = (0..=self.degree).map(|_| p.scalar("Gamma")).collect();
        let (x, u) = self.dims.declare_gain(p)?;
        Ok(AreaDesignVars { coefficients, x, u })
    }

    fn design_constraints(&self, p: &mut SdpProblem, d: &AreaDesignVars) -> Result<(), LmiError> {
        p.constrain(multiplier_positive(&d.u))
    }

    fn declare_certificate(&self, p: &mut SdpProblem) -> Result<LyapunovCertificate, LmiError> {
        LyapunovCertificate::declare(p, self.dims.n_x, self.dims.n_u)
    }

    fn add_constraints(
        &self,
        p: &mut SdpProblem,
        d: &AreaDesignVars,
        cert: &LyapunovCertificate,
        (cl, s): &(ClosedLoopModel, f64),
    ) -> Result<(), LmiError> {
        let cols = loop_columns(cl, &d.u, GainSource::Free(&d.x))?;
        let gamma2 = self.gamma2_form(&d.coefficients, *s).expr();
        constrain_all(p, l2_constraints(cl, cert, &cols, &gamma2, *s, &self.limits)?)
    }

    fn objective(&self, d: &AreaDesignVars) -> Objective {
        let mut f = LinearForm::constant(0.0);
        for (k, c) in d.coefficients.iter().enumerate() {
            f.add(c.entry(), self.weight(k));
        }
        Objective::Minimize(f)
    }
}

/// `Σ c_k s^k` by Horner's rule.
pub fn polynomial(coefficients: &[f64], s: f64) -> f64 {
    coefficients.iter().rev().fold(0.0, |acc, c| acc * s + c)
}

/// Solved area synthesis.
#[derive(Clone, Debug)]
pub struct AreaDesign {
    pub coefficients: Vec<f64>,
    pub gain: AntiWindupGain,
    /// `∫ γ²(s) ds` over the design interval.
    pub cost: f64,
    /// Minimum of `γ²(s)` over a uniform grid of [`POSITIVITY_GRID`] points.
    pub grid_minimum: f64,
    pub outcome: SwcOutcome<AreaDesignVars, LyapunovCertificate>,
}

impl AreaDesign {
    pub fn from_outcome(
        problem: &AreaSynthesis,
        outcome: SwcOutcome<AreaDesignVars, LyapunovCertificate>,
    ) -> Result<Self, AntiWindupError> {
        let d = &outcome.design;
        let coefficients: Vec<f64> = d.coefficients.iter().map(|c| outcome.solution.scalar(c)).collect();
        let gain = gain_from(&outcome.solution, &d.x, &d.u, problem.dims.n_xc)?;
        let cost = coefficients.iter().enumerate().map(|(k, c)| c * problem.weight(k)).sum();
        let (lo, hi) = problem.interval();
        let grid_minimum = (0..POSITIVITY_GRID)
            .map(|i| polynomial(&coefficients, lo + (hi - lo) * i as f64 / (POSITIVITY_GRID - 1) as f64))
            .fold(f64::INFINITY, f64::min);
        Ok(Self { coefficients, gain, cost, grid_minimum, outcome })
    }

    pub fn gamma2_at(&self, s: f64) -> f64 {
        polynomial(&self.coefficients, s)
    }

    pub fn is_positive_on_grid(&self) -> bool {
        self.grid_minimum > 0.0
    }
}

pub fn synth_area<B: SdpBackend + ?Sized>(
    problem: &AreaSynthesis,
    samples: &[(ClosedLoopModel, f64)],
    backend: &B,
    settings: &SolveSettings,
) -> Result<AreaDesign, AntiWindupError> {
    let outcome = solve_swc(problem, samples, backend, settings)?;
    AreaDesign::from_outcome(problem, outcome)
}

// ---------------------------------------------------------------------------
// Domain of attraction and reachable set

/// Design variables of the set problems: shape matrix `Q̄`, `X` and `U`.
#[derive(Clone, Debug, PartialEq)]
pub struct SetDesignVars {
    pub qbar: SymMatrixVar,
    pub x: RectMatrixVar,
    pub u: SymMatrixVar,
}

fn declare_set_design(dims: &Dims, p: &mut SdpProblem) -> Result<SetDesignVars, LmiError> {
    let qbar = p.sym_matrix("Qbar", dims.n_x, SymStructure::Full)?;
    let (x, u) = dims.declare_gain(p)?;
    Ok(SetDesignVars { qbar, x, u })
}

fn set_n_theta(dims: &Dims) -> usize {
    dims.n_x * (dims.n_x + 1) / 2 + dims.n_gain()
}

/// Maximizes the volume of an ellipsoid `{xᵀQ̄⁻¹x ≤ 1}` contained in the
/// certified domain of attraction of every sample.
#[derive(Clone, Debug)]
pub struct DoaSynthesis {
    dims: Dims,
    limits: SaturationLimits,
    cap: Option<f64>,
}

impl DoaSynthesis {
    /// `cap` adds `Q̄ ⪯ cap·I`, which keeps the program bounded when the
    /// domain of attraction is unbounded in some direction.
    pub fn new(
        reference: &ClosedLoopModel,
        limits: SaturationLimits,
        cap: Option<f64>,
    ) -> Result<Self, AntiWindupError> {
        if let Some(c) = cap {
            check_level(c)?;
        }
        Ok(Self { dims: Dims::of(reference, &limits)?, limits, cap })
    }
}

impl SwcProblem for DoaSynthesis {
    type Sample = ClosedLoopModel;
    type Design = SetDesignVars;
    type Certificate = LyapunovCertificate;

    fn n_theta(&self) -> usize {
        set_n_theta(&self.dims)
    }

    fn declare_design(&self, p: &mut SdpProblem) -> Result<SetDesignVars, LmiError> {
        declare_set_design(&self.dims, p)
    }

    fn design_constraints(&self, p: &mut SdpProblem, d: &SetDesignVars) -> Result<(), LmiError> {
        p.constrain(multiplier_positive(&d.u))?;
        if let Some(cap) = self.cap {
            let bound = MatExpr::constant(Mat::identity(self.dims.n_x, self.dims.n_x) * cap);
            p.constrain(LmiConstraint::psd(&bound - &d.qbar.expr(), "Qbar <= cap I"))?;
        }
        Ok(())
    }

    fn declare_certificate(&self, p: &mut SdpProblem) -> Result<LyapunovCertificate, LmiError> {
        LyapunovCertificate::declare(p, self.dims.n_x, self.dims.n_u)
    }

    fn add_constraints(
        &self,
        p: &mut SdpProblem,
        d: &SetDesignVars,
        cert: &LyapunovCertificate,
        cl: &ClosedLoopModel,
    ) -> Result<(), LmiError> {
        let cols = loop_columns(cl, &d.u, GainSource::Free(&d.x))?;
        constrain_all(p, doa_constraints(cl, cert, &cols, &d.qbar.expr(), &self.limits)?)
    }

    fn objective(&self, d: &SetDesignVars) -> Objective {
        Objective::MaximizeDetRoot(d.qbar.clone())
    }
}

/// Minimizes the trace of an ellipsoid `{xᵀQ̄⁻¹x ≤ 1}` containing the states
/// reachable from the origin under `‖w‖₂ ≤ s`, for every sample.
#[derive(Clone, Debug)]
pub struct ReachSynthesis {
    dims: Dims,
    limits: SaturationLimits,
    s: f64,
}

impl ReachSynthesis {
    pub fn new(reference: &ClosedLoopModel, limits: SaturationLimits, s: f64) -> Result<Self, AntiWindupError> {
        check_level(s)?;
        Ok(Self { dims: Dims::of(reference, &limits)?, limits, s })
    }

    pub fn level(&self) -> f64 {
        self.s
    }
}

impl SwcProblem for ReachSynthesis {
    type Sample = ClosedLoopModel;
    type Design = SetDesignVars;
    type Certificate = LyapunovCertificate;

    fn n_theta(&self) -> usize {
        set_n_theta(&self.dims)
    }

    fn declare_design(&self, p: &mut SdpProblem) -> Result<SetDesignVars, LmiError> {
        declare_set_design(&self.dims, p)
    }

    fn design_constraints(&self, p: &mut SdpProblem, d: &SetDesignVars) -> Result<(), LmiError> {
        p.constrain(multiplier_positive(&d.u))
    }

    fn declare_certificate(&self, p: &mut SdpProblem) -> Result<LyapunovCertificate, LmiError> {
        LyapunovCertificate::declare(p, self.dims.n_x, self.dims.n_u)
    }

    fn add_constraints(
        &self,
        p: &mut SdpProblem,
        d: &SetDesignVars,
        cert: &LyapunovCertificate,
        cl: &ClosedLoopModel,
    ) -> Result<(), LmiError> {
        let cols = loop_columns(cl, &d.u, GainSource::Free(&d.x))?;
        constrain_all(p, reach_constraints(cl, cert, &cols, &d.qbar.expr(), self.s, &self.limits)?)
    }

    fn objective(&self, d: &SetDesignVars) -> Objective {
        Objective::Minimize(d.qbar.expr().trace())
    }
}

/// Solved domain-of-attraction synthesis.
#[derive(Clone, Debug)]
pub struct DoaDesign {
    pub qbar: Mat,
    pub gain: AntiWindupGain,
    /// `det(Q̄)^(1/n)`.
    pub det_root: f64,
    pub outcome: SwcOutcome<SetDesignVars, LyapunovCertificate>,
}

impl DoaDesign {
    pub fn from_outcome(
        outcome: SwcOutcome<SetDesignVars, LyapunovCertificate>,
        n_xc: usize,
    ) -> Result<Self, AntiWindupError> {
        let d = &outcome.design;
        let qbar = outcome.solution.sym(&d.qbar);
        let gain = gain_from(&outcome.solution, &d.x, &d.u, n_xc)?;
        Ok(Self { det_root: det_root(&qbar), qbar, gain, outcome })
    }

    /// Lyapunov matrices `Q_i` of the design samples.
    pub fn certificate_matrices(&self) -> Vec<Mat> {
        self.outcome.certificates.iter().map(|c| self.outcome.solution.sym(&c.q)).collect()
    }
}

pub fn synth_doa<B: SdpBackend + ?Sized>(
    problem: &DoaSynthesis,
    samples: &[ClosedLoopModel],
    backend: &B,
    settings: &SolveSettings,
) -> Result<DoaDesign, AntiWindupError> {
    let outcome = solve_swc(problem, samples, backend, settings)?;
    DoaDesign::from_outcome(outcome, problem.dims.n_xc)
}

/// Solved reachable-set synthesis.
#[derive(Clone, Debug)]
pub struct ReachDesign {
    pub qbar: Mat,
    pub gain: AntiWindupGain,
    pub trace: f64,
    pub outcome: SwcOutcome<SetDesignVars, LyapunovCertificate>,
}

impl ReachDesign {
    pub fn from_outcome(
        outcome: SwcOutcome<SetDesignVars, LyapunovCertificate>,
        n_xc: usize,
    ) -> Result<Self, AntiWindupError> {
        let d = &outcome.design;
        let qbar = outcome.solution.sym(&d.qbar);
        let gain = gain_from(&outcome.solution, &d.x, &d.u, n_xc)?;
        Ok(Self { trace: qbar.trace(), qbar, gain, outcome })
    }

    pub fn certificate_matrices(&self) -> Vec<Mat> {
        self.outcome.certificates.iter().map(|c| self.outcome.solution.sym(&c.q)).collect()
    }
}

pub fn synth_reach<B: SdpBackend + ?Sized>(
    problem: &ReachSynthesis,
    samples: &[ClosedLoopModel],
    backend: &B,
    settings: &SolveSettings,
) -> Result<ReachDesign, AntiWindupError> {
    let outcome = solve_swc(problem, samples, backend, settings)?;
    ReachDesign::from_outcome(outcome, problem.dims.n_xc)
}
