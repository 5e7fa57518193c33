//! Lowering of an [`SdpProblem`] into backend standard form.

use alloc::vec;
use alloc::vec::Vec;

use super::{EntryId, MatExpr, Objective, SdpProblem, SolveSettings};
use crate::linalg;
use crate::Mat;

/// One conic block `constant + Σ x_j · coeff_j ⪰ 0` of symmetric matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct PsdBlock {
    pub dim: usize,
    pub constant: Mat,
    /// `(column, coefficient)` pairs, columns ascending.
    pub coeffs: Vec<(usize, Mat)>,
}

/// `minimize cost·x + cost_offset` subject to every block being PSD.
///
/// Columns `0..n_entry_columns()` are the free problem entries in entry order;
/// anything after that is auxiliary (objective epigraph variables).
#[derive(Clone, Debug, PartialEq)]
pub struct StandardForm {
    pub n_columns: usize,
    pub cost: Vec<f64>,
    pub cost_offset: f64,
    pub blocks: Vec<PsdBlock>,
    entry_columns: Vec<(EntryId, usize)>,
    /// Index of a constraint that became constant (all entries fixed) and is violated.
    pub violated_constant: Option<usize>,
}

impl StandardForm {
    pub fn n_entry_columns(&self) -> usize {
        self.entry_columns.len()
    }

    /// `(entry, column)` for every free entry.
    pub fn entry_columns(&self) -> impl Iterator<Item = (EntryId, usize)> + '_ {
        self.entry_columns.iter().copied()
    }
}

struct Builder {
    n_columns: usize,
    blocks: Vec<PsdBlock>,
}

impl Builder {
    fn aux(&mut self) -> MatExpr {
        let col = self.n_columns;
        self.n_columns += 1;
        MatExpr::from_term(EntryId(col), Mat::identity(1, 1))
    }

    /// Pushes `expr ⪰ 0` (expr already in column space), applying a diagonal
    /// congruence that brings large diagonal constants down to 1.
    fn push(&mut self, expr: MatExpr) {
        let n = expr.rows();
        let c = expr.constant_part();
        let d: Vec<f64> = (0..n).map(|i| if c[(i, i)] > 1.0 { 1.0 / libm::sqrt(c[(i, i)]) } else { 1.0 }).collect();
        let scale = |m: &Mat| Mat::from_fn(n, n, |i, j| d[i] * d[j] * 0.5 * (m[(i, j)] + m[(j, i)]));
        let block = PsdBlock {
            dim: n,
            constant: scale(c),
            coeffs: expr.terms().filter(|(_, m)| m.iter().any(|v| *v != 0.0)).map(|(e, m)| (e.0, scale(m))).collect(),
        };
        self.blocks.push(block);
    }
}

/// Lowers `problem` to standard form.
///
/// Fixed entries are folded into constants, strict constraints get their
/// margin subtracted, and a `MaximizeDetRoot` objective is replaced by its
/// geometric-mean epigraph built from 2×2 blocks.
pub fn lower(problem: &SdpProblem, settings: &SolveSettings) -> StandardForm {
    let mut entry_columns = Vec::new();
    let mut column_of = vec![None; problem.n_entries()];
    for (i, slot) in column_of.iter_mut().enumerate() {
        if problem.fixed_value(EntryId(i)).is_none() {
            *slot = Some(entry_columns.len());
            entry_columns.push((EntryId(i), entry_columns.len()));
        }
    }
    let to_columns = |e: &MatExpr| -> MatExpr {
        let folded = e.substitute(|id| problem.fixed_value(id));
        let mut out = MatExpr::constant(folded.constant_part().clone());
        for (id, m) in folded.terms() {
            let col = column_of[id.0].expect("fixed entries were substituted");
            out.add_term(EntryId(col), m.clone());
        }
        out
    };

    let mut b = Builder { n_columns: entry_columns.len(), blocks: Vec::new() };
    let mut violated_constant = None;
    for (idx, c) in problem.constraints().iter().enumerate() {
        let n = c.expr.rows();
        let oriented = to_columns(&c.expr).scale(c.sense.sign());
        let margin = c.margin(settings);
        let shifted = &oriented - &MatExpr::constant(Mat::identity(n, n) * margin);
        if shifted.terms().next().is_none() {
            let value = oriented.constant_part();
            let slack = linalg::min_eigenvalue(value);
            let ok = if c.sense.is_strict() {
                slack > 0.0
            } else {
                slack >= -settings.tolerance * linalg::max_abs(value).max(c.scale())
            };
            if !ok && violated_constant.is_none() {
                violated_constant = Some(idx);
            }
            continue;
        }
        b.push(shifted);
    }

    let mut cost_expr = super::LinearForm::default();
    match problem.objective() {
        Objective::Feasibility => {}
        Objective::Minimize(lf) => cost_expr = lf.clone(),
        Objective::Maximize(lf) => cost_expr = lf.scaled(-1.0),
        Objective::MaximizeDetRoot(var) => {
            let q = to_columns(&var.expr());
            let t = det_root_epigraph(&mut b, q);
            let mut cost = vec![0.0; b.n_columns];
            cost[t] = -1.0;
            return StandardForm {
                n_columns: b.n_columns,
                cost,
                cost_offset: 0.0,
                blocks: b.blocks,
                entry_columns,
                violated_constant,
            };
        }
    }
    let mut cost = vec![0.0; b.n_columns];
    let mut cost_offset = cost_expr.constant_term();
    for (e, coef) in cost_expr.coeffs() {
        match problem.fixed_value(e) {
            Some(v) => cost_offset += coef * v,
            None => cost[column_of[e.0].expect("free entry")] += coef,
        }
    }
    StandardForm { n_columns: b.n_columns, cost, cost_offset, blocks: b.blocks, entry_columns, violated_constant }
}

/// Adds `t ≤ det(q)^(1/n)` and returns the column of `t`.
///
/// Uses a lower-triangular `Z` with `[[q, Z], [Zᵀ, diag(Z)]] ⪰ 0`, which gives
/// `Π Z_ii ≤ det q`, followed by a binary tree of `y ≤ √(ab)` constraints on
/// the diagonal of `Z` padded with `t` up to a power of two.
fn det_root_epigraph(b: &mut Builder, q: MatExpr) -> usize {
    let n = q.rows();
    let mut z = MatExpr::zeros(n, n);
    let mut diag = MatExpr::zeros(n, n);
    let mut leaves = Vec::with_capacity(n);
    for j in 0..n {
        for i in j..n {
            let col = b.n_columns;
            b.n_columns += 1;
            let mut unit = Mat::zeros(n, n);
            unit[(i, j)] = 1.0;
            z.add_term(EntryId(col), unit.clone());
            if i == j {
                diag.add_term(EntryId(col), unit);
                leaves.push(MatExpr::from_term(EntryId(col), Mat::identity(1, 1)));
            }
        }
    }
    let coupling =
        MatExpr::block(&[vec![q, z.clone()], vec![z.transpose(), diag]]).expect("square blocks of equal size");
    b.push(coupling);

    let t = b.aux();
    let t_col = t.terms().next().map(|(e, _)| e.0).expect("aux column");
    let width = n.next_power_of_two();
    while leaves.len() < width {
        leaves.push(t.clone());
    }
    while leaves.len() > 1 {
        let mut next = Vec::with_capacity(leaves.len() / 2);
        for pair in leaves.chunks(2) {
            let y = b.aux();
            let node = MatExpr::block(&[vec![pair[0].clone(), y.clone()], vec![y.clone(), pair[1].clone()]])
                .expect("scalar blocks");
            b.push(node);
            next.push(y);
        }
        leaves = next;
    }
    b.push(&leaves[0] - &t);
    t_col
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lmi::{LmiConstraint, SymStructure};

    #[test]
    fn fixed_entries_fold_into_constant() {
        let mut p = SdpProblem::new();
        let x = p.scalar("x");
        let y = p.scalar("y");
        let e = &x.expr() + &y.expr();
        p.constrain(LmiConstraint::psd(e, "sum")).unwrap();
        p.fix([(x.entry(), 0.5)]).unwrap();
        let f = lower(&p, &SolveSettings::default());
        assert_eq!(f.n_columns, 1);
        assert_eq!(f.blocks[0].constant[(0, 0)], 0.5);
        assert_eq!(f.blocks[0].coeffs[0].0, 0);
    }

    #[test]
    fn violated_constant_constraint_is_reported() {
        let mut p = SdpProblem::new();
        let x = p.scalar("x");
        p.constrain(LmiConstraint::neg_def(x.expr(), "neg")).unwrap();
        p.fix([(x.entry(), 1.0)]).unwrap();
        let f = lower(&p, &SolveSettings::default());
        assert_eq!(f.violated_constant, Some(0));
        assert!(f.blocks.is_empty());
    }

    #[test]
    fn det_root_tree_size() {
        let mut p = SdpProblem::new();
        let q = p.sym_matrix("Q", 3, SymStructure::Full).unwrap();
        p.set_objective(Objective::MaximizeDetRoot(q)).unwrap();
        let f = lower(&p, &SolveSettings::default());
        // 6 entries of Q, 6 of Z, t, then 2 + 1 tree nodes.
        assert_eq!(f.n_columns, 6 + 6 + 1 + 3);
        // coupling block, 3 tree nodes, root ≥ t
        assert_eq!(f.blocks.len(), 5);
        assert_eq!(f.cost.iter().filter(|c| **c != 0.0).count(), 1);
    }

    #[test]
    fn large_diagonal_constants_are_scaled() {
        let mut p = SdpProblem::new();
        let y = p.scalar("y");
        let mut c = Mat::zeros(2, 2);
        c[(0, 0)] = 1e4;
        let e = &MatExpr::constant(c)
            + &MatExpr::block(&[vec![MatExpr::zeros(1, 1), y.expr()], vec![y.expr(), MatExpr::scalar_const(1.0)]])
                .unwrap();
        p.constrain(LmiConstraint::psd(e, "sector")).unwrap();
        let f = lower(&p, &SolveSettings::default());
        assert!((f.blocks[0].constant[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((f.blocks[0].coeffs[0].1[(0, 1)] - 0.01).abs() < 1e-12);
    }
}
