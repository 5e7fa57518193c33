//! Clarabel interior-point backend for [`StandardForm`] problems.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};
use openblas_src as _;
use randaw_core::lmi::{PsdBlock, RawSolution, SdpBackend, SolveSettings, SolveStatus, StandardForm};
use randaw_core::Mat;
use serde::{Deserialize, Serialize};

/// Solver knobs passed straight to Clarabel. Iteration limits come from
/// [`SolveSettings::max_iterations`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClarabelOptions {
    pub tol_gap_abs: f64,
    pub tol_gap_rel: f64,
    pub tol_feas: f64,
    pub tol_infeas_abs: f64,
    pub tol_infeas_rel: f64,
    pub verbose: bool,
}

impl Default for ClarabelOptions {
    fn default() -> Self {
        Self {
            tol_gap_abs: 1e-8,
            tol_gap_rel: 1e-8,
            tol_feas: 1e-8,
            tol_infeas_abs: 1e-8,
            tol_infeas_rel: 1e-8,
            verbose: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ClarabelBackend {
    pub options: ClarabelOptions,
}

impl ClarabelBackend {
    pub fn new(options: ClarabelOptions) -> Self {
        Self { options }
    }
}

/// Row-major position of the `(i, j)` upper-triangle entry in Clarabel's
/// column-major packed triangle.
fn triangle_index(i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    j * (j + 1) / 2 + i
}

/// Conic image of one symmetric matrix in the cone chosen for `dim`.
fn cone_vector(m: &Mat) -> Vec<f64> {
    let n = m.nrows();
    match n {
        1 => vec![m[(0, 0)]],
        2 => {
            let (a, b, c) = (m[(0, 0)], 0.5 * (m[(0, 1)] + m[(1, 0)]), m[(1, 1)]);
            vec![a + c, a - c, 2.0 * b]
        }
        _ => {
            let mut v = vec![0.0; n * (n + 1) / 2];
            for j in 0..n {
                for i in 0..=j {
                    let x = 0.5 * (m[(i, j)] + m[(j, i)]);
                    v[triangle_index(i, j)] = if i == j { x } else { x * std::f64::consts::SQRT_2 };
                }
            }
            v
        }
    }
}

fn cone_for(block: &PsdBlock) -> SupportedConeT<f64> {
    match block.dim {
        1 => SupportedConeT::NonnegativeConeT(1),
        2 => SupportedConeT::SecondOrderConeT(3),
        n => SupportedConeT::PSDTriangleConeT(n),
    }
}

fn map_status(s: SolverStatus) -> SolveStatus {
    match s {
        SolverStatus::Solved | SolverStatus::AlmostSolved => SolveStatus::Optimal,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SolveStatus::IllPosed,
        _ => SolveStatus::NumericalTrouble,
    }
}

impl SdpBackend for ClarabelBackend {
    fn solve_standard(&self, form: &StandardForm, settings: &SolveSettings) -> RawSolution {
        let n = form.n_columns;
        // Column-wise triplets of A in `A x + s = b`, with s = C + Σ x_j F_j.
        let mut columns: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        let mut b = Vec::new();
        let mut cones = Vec::with_capacity(form.blocks.len());
        for block in &form.blocks {
            let offset = b.len();
            b.extend(cone_vector(&block.constant));
            for (col, coeff) in &block.coeffs {
                for (r, v) in cone_vector(coeff).into_iter().enumerate() {
                    if v != 0.0 {
                        columns[*col].push((offset + r, -v));
                    }
                }
            }
            cones.push(cone_for(block));
        }
        let m = b.len();
        let mut colptr = Vec::with_capacity(n + 1);
        let mut rowval = Vec::new();
        let mut nzval = Vec::new();
        colptr.push(0);
        for col in &mut columns {
            col.sort_by_key(|(r, _)| *r);
            for (r, v) in col.iter() {
                rowval.push(*r);
                nzval.push(*v);
            }
            colptr.push(rowval.len());
        }
        let a = CscMatrix::new(m, n, colptr, rowval, nzval);
        let p = CscMatrix::zeros((n, n));

        let opts = &self.options;
        let clarabel_settings = DefaultSettings {
            max_iter: settings.max_iterations,
            verbose: opts.verbose,
            tol_gap_abs: opts.tol_gap_abs,
            tol_gap_rel: opts.tol_gap_rel,
            tol_feas: opts.tol_feas,
            tol_infeas_abs: opts.tol_infeas_abs,
            tol_infeas_rel: opts.tol_infeas_rel,
            ..DefaultSettings::default()
        };
        let mut solver = match DefaultSolver::new(&p, &form.cost, &a, &b, &cones, clarabel_settings) {
            Ok(s) => s,
            Err(_) => {
                return RawSolution {
                    status: SolveStatus::NumericalTrouble,
                    x: Vec::new(),
                    iterations: 0,
                    primal_residual: f64::NAN,
                    dual_residual: f64::NAN,
                }
            }
        };
        solver.solve();
        let sol = &solver.solution;
        let status = map_status(sol.status);
        RawSolution {
            status,
            x: if status == SolveStatus::Optimal { sol.x.clone() } else { Vec::new() },
            iterations: sol.iterations,
            primal_residual: sol.r_prim,
            dual_residual: sol.r_dual,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use randaw_core::lmi::{solve, LmiConstraint, MatExpr, Objective, SdpProblem, SymStructure};

    #[test]
    fn triangle_layout_is_column_major_upper() {
        assert_eq!(triangle_index(0, 0), 0);
        assert_eq!(triangle_index(0, 1), 1);
        assert_eq!(triangle_index(1, 1), 2);
        assert_eq!(triangle_index(0, 2), 3);
        assert_eq!(triangle_index(2, 1), 4);
    }

    #[test]
    fn minimizes_max_eigenvalue() {
        // min t s.t. t I - A ⪰ 0 gives λ_max(A).
        let a = Mat::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 2.0, 1.0, 0.0, 1.0, 2.0]);
        let mut p = SdpProblem::new();
        let t = p.scalar("t");
        let e = &t.expr().times_matrix(&Mat::identity(3, 3)).unwrap() - &MatExpr::constant(a);
        p.constrain(LmiConstraint::psd(e, "eig")).unwrap();
        p.set_objective(Objective::Minimize(t.linear())).unwrap();
        let sol = solve(&p, &ClarabelBackend::default(), &SolveSettings::default());
        assert!(sol.is_optimal());
        assert!((sol.scalar(&t) - (2.0 + 2f64.sqrt())).abs() < 1e-6);
    }

    #[test]
    fn det_root_with_trace_budget() {
        // max det(Q)^(1/3) s.t. trace(Q) ≤ 3 is attained at Q = I. The objective is
        // flat to second order there, so Q is only accurate to about √tol.
        let mut p = SdpProblem::new();
        let q = p.sym_matrix("Q", 3, SymStructure::Full).unwrap();
        let e = &MatExpr::scalar_const(3.0) - &q.expr().trace().expr();
        p.constrain(LmiConstraint::psd(e, "budget")).unwrap();
        p.set_objective(Objective::MaximizeDetRoot(q.clone())).unwrap();
        let sol = solve(&p, &ClarabelBackend::default(), &SolveSettings::default());
        assert!(sol.is_optimal(), "{:?}", sol.status);
        let qv = sol.sym(&q);
        assert!((&qv - Mat::identity(3, 3)).abs().max() < 1e-4, "{qv}");
        assert!((sol.objective_value - 1.0).abs() < 1e-5);
    }

    #[test]
    fn infeasible_is_reported() {
        let mut p = SdpProblem::new();
        let x = p.scalar("x");
        p.constrain(LmiConstraint::psd(&x.expr() - &MatExpr::scalar_const(1.0), "x>=1")).unwrap();
        p.constrain(LmiConstraint::psd(&MatExpr::scalar_const(-2.0) - &x.expr(), "x<=-2")).unwrap();
        let sol = solve(&p, &ClarabelBackend::default(), &SolveSettings::default());
        assert_eq!(sol.status, SolveStatus::Infeasible);
    }
}
