//! Modeling layer for semidefinite programs.
//!
//! Decision variables are allocated as contiguous runs of scalar *entries*
//! inside an [`SdpProblem`]. Affine matrix expressions ([`MatExpr`]) map
//! entries to coefficient matrices, and constraints require an expression to be
//! positive/negative (semi)definite. Strict inequalities are enforced with a
//! relative margin at lowering time, see [`SolveSettings::margin`].
//!
//! Solving goes through [`solve`], which lowers the problem into a
//! [`StandardForm`] (linear cost, blocks `C + Σ x_j F_j ⪰ 0`), hands that to
//! an [`SdpBackend`] and maps the result back, re-checking every constraint by
//! direct eigenvalue computation.

mod expr;
mod lower;

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

pub use expr::MatExpr;
pub use lower::{lower, PsdBlock, StandardForm};

use crate::linalg;
use crate::Mat;

/// Index of one scalar decision entry inside an [`SdpProblem`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntryId(pub(crate) usize);

impl EntryId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum LmiError {
    #[error("{context}: expected shape {expected:?}, found {found:?}")]
    Shape { context: &'static str, expected: (usize, usize), found: (usize, usize) },
    #[error("block grid cell ({row}, {col}): {reason}")]
    BlockGrid { row: usize, col: usize, reason: &'static str },
    #[error("constraint `{label}` is not symmetric (asymmetry {asymmetry:e})")]
    NotSymmetric { label: String, asymmetry: f64 },
    #[error("entry {0} is not declared in this problem")]
    UndeclaredEntry(usize),
    #[error("variable dimension must be at least 1")]
    EmptyVariable,
}

/// Structure of a symmetric matrix variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SymStructure {
    Full,
    Diagonal,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarVar {
    entry: EntryId,
}

impl ScalarVar {
    pub fn entry(&self) -> EntryId {
        self.entry
    }

    /// 1×1 expression.
    pub fn expr(&self) -> MatExpr {
        MatExpr::from_term(self.entry, Mat::identity(1, 1))
    }

    pub fn linear(&self) -> LinearForm {
        let mut lf = LinearForm::default();
        lf.add(self.entry, 1.0);
        lf
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrixVar {
    first: EntryId,
    dim: usize,
    structure: SymStructure,
}

impl SymMatrixVar {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn structure(&self) -> SymStructure {
        self.structure
    }

    /// Number of free scalar entries.
    pub fn n_entries(&self) -> usize {
        match self.structure {
            SymStructure::Full => self.dim * (self.dim + 1) / 2,
            SymStructure::Diagonal => self.dim,
        }
    }

    /// `(row, col)` with `row <= col` for each entry, in allocation order.
    fn positions(&self) -> Vec<(usize, usize)> {
        match self.structure {
            SymStructure::Full => (0..self.dim).flat_map(|i| (i..self.dim).map(move |j| (i, j))).collect(),
            SymStructure::Diagonal => (0..self.dim).map(|i| (i, i)).collect(),
        }
    }

    pub fn expr(&self) -> MatExpr {
        let n = self.dim;
        let mut e = MatExpr::zeros(n, n);
        for (k, (i, j)) in self.positions().into_iter().enumerate() {
            let mut c = Mat::zeros(n, n);
            c[(i, j)] = 1.0;
            c[(j, i)] = 1.0;
            e.add_term(EntryId(self.first.0 + k), c);
        }
        e
    }

    pub fn entries(&self) -> impl Iterator<Item = EntryId> {
        let first = self.first.0;
        (first..first + self.n_entries()).map(EntryId)
    }

    /// Reads the matrix out of an entry-indexed assignment.
    pub fn value(&self, values: &[f64]) -> Mat {
        let mut m = Mat::zeros(self.dim, self.dim);
        for (k, (i, j)) in self.positions().into_iter().enumerate() {
            let v = values[self.first.0 + k];
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
        m
    }

    /// Entry values for a given symmetric matrix, in allocation order.
    pub fn encode(&self, m: &Mat) -> Vec<f64> {
        self.positions().into_iter().map(|(i, j)| 0.5 * (m[(i, j)] + m[(j, i)])).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RectMatrixVar {
    first: EntryId,
    rows: usize,
    cols: usize,
}

impl RectMatrixVar {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn n_entries(&self) -> usize {
        self.rows * self.cols
    }

    /// Row-major entry layout.
    pub fn expr(&self) -> MatExpr {
        let mut e = MatExpr::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                let mut c = Mat::zeros(self.rows, self.cols);
                c[(i, j)] = 1.0;
                e.add_term(EntryId(self.first.0 + i * self.cols + j), c);
            }
        }
        e
    }

    pub fn entries(&self) -> impl Iterator<Item = EntryId> {
        let first = self.first.0;
        (first..first + self.n_entries()).map(EntryId)
    }

    pub fn value(&self, values: &[f64]) -> Mat {
        Mat::from_fn(self.rows, self.cols, |i, j| values[self.first.0 + i * self.cols + j])
    }

    pub fn encode(&self, m: &Mat) -> Vec<f64> {
        (0..self.rows).flat_map(|i| (0..self.cols).map(move |j| (i, j))).map(|(i, j)| m[(i, j)]).collect()
    }
}

/// Linear functional `constant + Σ coeff_e · x_e`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinearForm {
    coeffs: BTreeMap<EntryId, f64>,
    constant: f64,
}

impl LinearForm {
    pub fn constant(c: f64) -> Self {
        Self { coeffs: BTreeMap::new(), constant: c }
    }

    pub fn add(&mut self, entry: EntryId, coeff: f64) {
        *self.coeffs.entry(entry).or_insert(0.0) += coeff;
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self { coeffs: self.coeffs.iter().map(|(e, c)| (*e, c * k)).collect(), constant: self.constant * k }
    }

    pub fn plus(&self, other: &LinearForm) -> Self {
        let mut out = self.clone();
        out.constant += other.constant;
        for (e, c) in &other.coeffs {
            out.add(*e, *c);
        }
        out
    }

    pub fn coeffs(&self) -> impl Iterator<Item = (EntryId, f64)> + '_ {
        self.coeffs.iter().map(|(e, c)| (*e, *c))
    }

    pub fn constant_term(&self) -> f64 {
        self.constant
    }

    /// The form as a 1×1 expression.
    pub fn expr(&self) -> MatExpr {
        let mut e = MatExpr::scalar_const(self.constant);
        for (entry, c) in &self.coeffs {
            e.add_term(*entry, Mat::from_element(1, 1, *c));
        }
        e
    }

    pub fn eval(&self, values: &[f64]) -> f64 {
        self.constant + self.coeffs.iter().map(|(e, c)| c * values[e.0]).sum::<f64>()
    }
}

/// Inequality sense of an LMI constraint.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    /// `M ⪰ 0`
    Psd,
    /// `M ⪯ 0`
    Nsd,
    /// `M ≻ 0`, enforced as `M ⪰ margin·I`.
    PositiveDefinite,
    /// `M ≺ 0`, enforced as `M ⪯ -margin·I`.
    NegativeDefinite,
}

impl Sense {
    pub fn is_strict(self) -> bool {
        matches!(self, Sense::PositiveDefinite | Sense::NegativeDefinite)
    }

    /// `+1` when the constraint reads `M ⪰ …`, `-1` when it reads `M ⪯ …`.
    pub fn sign(self) -> f64 {
        match self {
            Sense::Psd | Sense::PositiveDefinite => 1.0,
            Sense::Nsd | Sense::NegativeDefinite => -1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LmiConstraint {
    pub expr: MatExpr,
    pub sense: Sense,
    pub label: String,
}

impl LmiConstraint {
    pub fn new(expr: MatExpr, sense: Sense, label: impl Into<String>) -> Self {
        Self { expr, sense, label: label.into() }
    }

    pub fn psd(expr: MatExpr, label: impl Into<String>) -> Self {
        Self::new(expr, Sense::Psd, label)
    }

    pub fn nsd(expr: MatExpr, label: impl Into<String>) -> Self {
        Self::new(expr, Sense::Nsd, label)
    }

    pub fn pos_def(expr: MatExpr, label: impl Into<String>) -> Self {
        Self::new(expr, Sense::PositiveDefinite, label)
    }

    pub fn neg_def(expr: MatExpr, label: impl Into<String>) -> Self {
        Self::new(expr, Sense::NegativeDefinite, label)
    }

    /// Scale used for the strict margin: largest absolute constant entry, floored at 1.
    pub fn scale(&self) -> f64 {
        linalg::max_abs(self.expr.constant_part()).max(1.0)
    }

    /// Margin actually enforced for this constraint under `settings`.
    pub fn margin(&self, settings: &SolveSettings) -> f64 {
        if self.sense.is_strict() {
            settings.margin * self.scale()
        } else {
            0.0
        }
    }

    /// Smallest eigenvalue of `sign · M` at the assignment, i.e. how deep inside
    /// the cone the constraint is (negative means violated).
    pub fn slack(&self, values: &[f64]) -> f64 {
        let m = self.expr.eval(values) * self.sense.sign();
        linalg::min_eigenvalue(&m)
    }

    /// Smallest acceptable slack in the post-solve re-check at `values`.
    ///
    /// Strict and nonstrict constraints alike may fall short of zero by the
    /// tolerance relative to the larger of the constraint scale and the
    /// magnitude of the evaluated matrix: beyond that resolution an interior
    /// point solution cannot tell the two apart. Strict constraints were
    /// lowered with a margin, so a healthy solve keeps them strictly inside.
    pub fn required_slack(&self, values: &[f64], settings: &SolveSettings) -> f64 {
        let magnitude = linalg::max_abs(&self.expr.eval(values)).max(self.scale());
        -settings.tolerance * magnitude
    }

    pub fn is_satisfied(&self, values: &[f64], settings: &SolveSettings) -> bool {
        self.slack(values) >= self.required_slack(values, settings)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Objective {
    Feasibility,
    Minimize(LinearForm),
    Maximize(LinearForm),
    /// Maximize `det(X)^(1/n)` of a declared symmetric variable.
    MaximizeDetRoot(SymMatrixVar),
}

#[derive(Clone, Debug, PartialEq)]
enum VarKind {
    Scalar(ScalarVar),
    Sym(SymMatrixVar),
    Rect(RectMatrixVar),
}

#[derive(Clone, Debug, PartialEq)]
struct VarInfo {
    name: String,
    kind: VarKind,
}

/// A semidefinite program under construction.
#[derive(Clone, Debug, PartialEq)]
pub struct SdpProblem {
    n_entries: usize,
    vars: Vec<VarInfo>,
    constraints: Vec<LmiConstraint>,
    objective: Objective,
    fixed: BTreeMap<EntryId, f64>,
}

impl Default for SdpProblem {
    fn default() -> Self {
        Self::new()
    }
}

impl SdpProblem {
    pub fn new() -> Self {
        Self {
            n_entries: 0,
            vars: Vec::new(),
            constraints: Vec::new(),
            objective: Objective::Feasibility,
            fixed: BTreeMap::new(),
        }
    }

    pub fn n_entries(&self) -> usize {
        self.n_entries
    }

    pub fn constraints(&self) -> &[LmiConstraint] {
        &self.constraints
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    pub fn fixed_entries(&self) -> impl Iterator<Item = (EntryId, f64)> + '_ {
        self.fixed.iter().map(|(e, v)| (*e, *v))
    }

    pub fn fixed_value(&self, e: EntryId) -> Option<f64> {
        self.fixed.get(&e).copied()
    }

    /// Names of declared variables, in declaration order.
    pub fn variable_names(&self) -> impl Iterator<Item = &str> {
        self.vars.iter().map(|v| v.name.as_str())
    }

    fn allocate(&mut self, n: usize) -> EntryId {
        let first = EntryId(self.n_entries);
        self.n_entries += n;
        first
    }

    pub fn scalar(&mut self, name: impl Into<String>) -> ScalarVar {
        let v = ScalarVar { entry: self.allocate(1) };
        self.vars.push(VarInfo { name: name.into(), kind: VarKind::Scalar(v.clone()) });
        v
    }

    /// Scalar with `x ≥ lower` added as a 1×1 constraint.
    pub fn scalar_with_lower_bound(&mut self, name: impl Into<String>, lower: f64) -> ScalarVar {
        let name = name.into();
        let v = self.scalar(name.clone());
        let expr = &v.expr() - &MatExpr::scalar_const(lower);
        self.constraints.push(LmiConstraint::psd(expr, alloc::format!("{name} lower bound")));
        v
    }

    pub fn sym_matrix(
        &mut self,
        name: impl Into<String>,
        dim: usize,
        structure: SymStructure,
    ) -> Result<SymMatrixVar, LmiError> {
        if dim == 0 {
            return Err(LmiError::EmptyVariable);
        }
        let n = match structure {
            SymStructure::Full => dim * (dim + 1) / 2,
            SymStructure::Diagonal => dim,
        };
        let v = SymMatrixVar { first: self.allocate(n), dim, structure };
        self.vars.push(VarInfo { name: name.into(), kind: VarKind::Sym(v.clone()) });
        Ok(v)
    }

    pub fn rect_matrix(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
    ) -> Result<RectMatrixVar, LmiError> {
        if rows == 0 || cols == 0 {
            return Err(LmiError::EmptyVariable);
        }
        let v = RectMatrixVar { first: self.allocate(rows * cols), rows, cols };
        self.vars.push(VarInfo { name: name.into(), kind: VarKind::Rect(v.clone()) });
        Ok(v)
    }

    fn check_entries<'a>(&self, mut entries: impl Iterator<Item = EntryId> + 'a) -> Result<(), LmiError> {
        match entries.find(|e| e.0 >= self.n_entries) {
            Some(e) => Err(LmiError::UndeclaredEntry(e.0)),
            None => Ok(()),
        }
    }

    /// Adds a constraint after checking it is square, symmetric and only uses
    /// declared entries.
    pub fn constrain(&mut self, c: LmiConstraint) -> Result<(), LmiError> {
        if !c.expr.is_square() {
            return Err(LmiError::Shape {
                context: "LMI expression must be square",
                expected: (c.expr.rows(), c.expr.rows()),
                found: c.expr.shape(),
            });
        }
        let asym = c.expr.asymmetry();
        if asym > 1e-12 * c.scale() {
            return Err(LmiError::NotSymmetric { label: c.label, asymmetry: asym });
        }
        self.check_entries(c.expr.entries())?;
        self.constraints.push(c);
        Ok(())
    }

    pub fn set_objective(&mut self, objective: Objective) -> Result<(), LmiError> {
        match &objective {
            Objective::Feasibility => {}
            Objective::Minimize(lf) | Objective::Maximize(lf) => self.check_entries(lf.coeffs().map(|(e, _)| e))?,
            Objective::MaximizeDetRoot(v) => self.check_entries(v.entries())?,
        }
        self.objective = objective;
        Ok(())
    }

    /// Pins entries to constants. Pinned entries are folded into the constant
    /// part at lowering time and never reach the backend.
    pub fn fix(&mut self, entries: impl IntoIterator<Item = (EntryId, f64)>) -> Result<(), LmiError> {
        for (e, v) in entries {
            if e.0 >= self.n_entries {
                return Err(LmiError::UndeclaredEntry(e.0));
            }
            self.fixed.insert(e, v);
        }
        Ok(())
    }

    pub fn evaluate_objective(&self, values: &[f64]) -> f64 {
        match &self.objective {
            Objective::Feasibility => 0.0,
            Objective::Minimize(lf) | Objective::Maximize(lf) => lf.eval(values),
            Objective::MaximizeDetRoot(v) => det_root(&v.value(values)),
        }
    }
}

/// `det(m)^(1/n)` computed from eigenvalues; 0 if `m` is not positive definite.
pub fn det_root(m: &Mat) -> f64 {
    let ev = linalg::sym_eigenvalues(m);
    if ev.is_empty() || ev[0] <= 0.0 {
        return 0.0;
    }
    let mean_log = ev.iter().map(|v| libm::log(*v)).sum::<f64>() / ev.len() as f64;
    libm::exp(mean_log)
}

/// Backend-independent settings for [`solve`].
#[derive(Clone, Debug, PartialEq)]
pub struct SolveSettings {
    /// Relative margin μ for strict inequalities.
    pub margin: f64,
    /// Feasibility tolerance (relative to each constraint's scale) used by the
    /// post-solve re-check and passed on to the backend.
    pub tolerance: f64,
    pub max_iterations: u32,
}

impl Default for SolveSettings {
    fn default() -> Self {
        Self { margin: 1e-7, tolerance: 1e-7, max_iterations: 200 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    /// Unbounded or degenerate.
    IllPosed,
    NumericalTrouble,
}

/// What a backend returns for a [`StandardForm`].
#[derive(Clone, Debug, PartialEq)]
pub struct RawSolution {
    pub status: SolveStatus,
    /// One value per standard-form column (empty when no point is available).
    pub x: Vec<f64>,
    pub iterations: u32,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

/// A conic solver able to handle [`StandardForm`] problems.
///
/// Implementations must be deterministic for fixed inputs and settings.
pub trait SdpBackend {
    fn solve_standard(&self, form: &StandardForm, settings: &SolveSettings) -> RawSolution;
}

impl<B: SdpBackend + ?Sized> SdpBackend for &B {
    fn solve_standard(&self, form: &StandardForm, settings: &SolveSettings) -> RawSolution {
        (**self).solve_standard(form, settings)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolverStats {
    pub iterations: u32,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Worst re-check slack over all constraints, relative to the requirement.
    pub worst_violation: f64,
    /// Label of the constraint that failed the re-check, if any.
    pub failed_constraint: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SdpSolution {
    pub status: SolveStatus,
    pub objective_value: f64,
    /// Value of every declared entry (fixed entries included).
    pub values: Vec<f64>,
    pub stats: SolverStats,
}

impl SdpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    pub fn scalar(&self, v: &ScalarVar) -> f64 {
        self.values[v.entry.0]
    }

    pub fn sym(&self, v: &SymMatrixVar) -> Mat {
        v.value(&self.values)
    }

    pub fn rect(&self, v: &RectMatrixVar) -> Mat {
        v.value(&self.values)
    }

    pub fn eval(&self, e: &MatExpr) -> Mat {
        e.eval(&self.values)
    }
}

/// Lowers, solves and re-checks `problem`.
///
/// An `Optimal` answer from the backend is downgraded to `NumericalTrouble`
/// when any constraint fails the eigenvalue re-check.
pub fn solve<B: SdpBackend + ?Sized>(problem: &SdpProblem, backend: &B, settings: &SolveSettings) -> SdpSolution {
    let form = lower(problem, settings);
    let mut values: Vec<f64> = (0..problem.n_entries).map(|i| problem.fixed_value(EntryId(i)).unwrap_or(0.0)).collect();
    if let Some(idx) = form.violated_constant {
        return SdpSolution {
            status: SolveStatus::Infeasible,
            objective_value: f64::NAN,
            values,
            stats: SolverStats {
                failed_constraint: Some(problem.constraints[idx].label.clone()),
                ..SolverStats::default()
            },
        };
    }
    let raw = backend.solve_standard(&form, settings);
    if raw.x.len() >= form.n_entry_columns() {
        for (entry, col) in form.entry_columns() {
            values[entry.0] = raw.x[col];
        }
    }
    let mut stats = SolverStats {
        iterations: raw.iterations,
        primal_residual: raw.primal_residual,
        dual_residual: raw.dual_residual,
        ..SolverStats::default()
    };
    let mut status = raw.status;
    if status == SolveStatus::Optimal {
        for c in &problem.constraints {
            let slack = c.slack(&values);
            let shortfall = c.required_slack(&values, settings) - slack;
            if shortfall > stats.worst_violation {
                stats.worst_violation = shortfall;
            }
            if !c.is_satisfied(&values, settings) && stats.failed_constraint.is_none() {
                stats.failed_constraint = Some(c.label.clone());
                status = SolveStatus::NumericalTrouble;
            }
        }
    }
    let objective_value = if raw.x.is_empty() { f64::NAN } else { problem.evaluate_objective(&values) };
    SdpSolution { status, objective_value, values, stats }
}
