use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::ops::{Add, Mul, Neg, Sub};

use super::{EntryId, LmiError};
use crate::Mat;

/// Affine matrix expression `C + Σ_e x_e · F_e` in scalar decision entries `x_e`.
///
/// Every coefficient `F_e` has the same shape as the constant `C`. Expressions
/// are plain values: all operations return new expressions.
#[derive(Clone, Debug, PartialEq)]
pub struct MatExpr {
    rows: usize,
    cols: usize,
    constant: Mat,
    terms: BTreeMap<EntryId, Mat>,
}

impl MatExpr {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::constant(Mat::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        Self::constant(Mat::identity(n, n))
    }

    pub fn constant(m: Mat) -> Self {
        Self { rows: m.nrows(), cols: m.ncols(), constant: m, terms: BTreeMap::new() }
    }

    /// 1×1 constant.
    pub fn scalar_const(v: f64) -> Self {
        Self::constant(Mat::from_element(1, 1, v))
    }

    /// Expression with a single entry term `coeff · x_entry`.
    pub(crate) fn from_term(entry: EntryId, coeff: Mat) -> Self {
        let mut e = Self::zeros(coeff.nrows(), coeff.ncols());
        e.add_term(entry, coeff);
        e
    }

    pub(crate) fn add_term(&mut self, entry: EntryId, coeff: Mat) {
        debug_assert_eq!(coeff.shape(), (self.rows, self.cols));
        match self.terms.get_mut(&entry) {
            Some(c) => *c += coeff,
            None => {
                self.terms.insert(entry, coeff);
            }
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn constant_part(&self) -> &Mat {
        &self.constant
    }

    /// Coefficient matrices keyed by decision entry.
    pub fn terms(&self) -> impl Iterator<Item = (EntryId, &Mat)> {
        self.terms.iter().map(|(e, m)| (*e, m))
    }

    pub fn coefficient(&self, entry: EntryId) -> Option<&Mat> {
        self.terms.get(&entry)
    }

    /// Decision entries that appear with a (structurally) nonzero coefficient.
    pub fn entries(&self) -> impl Iterator<Item = EntryId> + '_ {
        self.terms.keys().copied()
    }

    /// Evaluates the expression at an assignment indexed by entry.
    pub fn eval(&self, values: &[f64]) -> Mat {
        let mut out = self.constant.clone();
        for (e, c) in &self.terms {
            let v = values[e.index()];
            if v != 0.0 {
                out += c * v;
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        Self {
            rows: self.cols,
            cols: self.rows,
            constant: self.constant.transpose(),
            terms: self.terms.iter().map(|(e, m)| (*e, m.transpose())).collect(),
        }
    }

    pub fn scale(&self, k: f64) -> Self {
        self.map_matrices(|m| m * k)
    }

    /// `a · self` for a constant matrix `a`.
    pub fn left_mul(&self, a: &Mat) -> Self {
        assert_eq!(a.ncols(), self.rows, "left_mul: inner dimensions differ");
        let mut out = self.map_matrices(|m| a * m);
        out.rows = a.nrows();
        out
    }

    /// `self · b` for a constant matrix `b`.
    pub fn right_mul(&self, b: &Mat) -> Self {
        assert_eq!(self.cols, b.nrows(), "right_mul: inner dimensions differ");
        let mut out = self.map_matrices(|m| m * b);
        out.cols = b.ncols();
        out
    }

    /// For a 1×1 expression `x`, returns `x · m`.
    pub fn times_matrix(&self, m: &Mat) -> Result<Self, LmiError> {
        if self.shape() != (1, 1) {
            return Err(LmiError::Shape {
                context: "times_matrix expects a 1x1 expression",
                expected: (1, 1),
                found: self.shape(),
            });
        }
        let mut out = Self::constant(m * self.constant[(0, 0)]);
        for (e, c) in &self.terms {
            out.add_term(*e, m * c[(0, 0)]);
        }
        Ok(out)
    }

    /// Row `k` as a 1×cols expression.
    pub fn row(&self, k: usize) -> Self {
        self.view(k, 0, 1, self.cols)
    }

    /// Rectangular sub-block starting at `(r0, c0)`.
    pub fn view(&self, r0: usize, c0: usize, nr: usize, nc: usize) -> Self {
        assert!(r0 + nr <= self.rows && c0 + nc <= self.cols, "view out of bounds");
        let mut out = Self::constant(self.constant.view((r0, c0), (nr, nc)).into_owned());
        for (e, c) in &self.terms {
            let sub = c.view((r0, c0), (nr, nc)).into_owned();
            if sub.iter().any(|v| *v != 0.0) {
                out.terms.insert(*e, sub);
            }
        }
        out
    }

    /// `He(Z) = Z + Zᵀ`.
    pub fn he(&self) -> Result<Self, LmiError> {
        if !self.is_square() {
            return Err(LmiError::Shape {
                context: "he of a non-square expression",
                expected: (self.rows, self.rows),
                found: self.shape(),
            });
        }
        Ok(self + &self.transpose())
    }

    /// Concatenates a grid of expressions into one block expression.
    ///
    /// All cells in a grid row must share a height and all cells in a grid
    /// column must share a width.
    pub fn block(grid: &[Vec<MatExpr>]) -> Result<Self, LmiError> {
        let n_brows = grid.len();
        if n_brows == 0 {
            return Ok(Self::zeros(0, 0));
        }
        let n_bcols = grid[0].len();
        for (i, row) in grid.iter().enumerate() {
            if row.len() != n_bcols {
                return Err(LmiError::BlockGrid { row: i, col: row.len(), reason: "ragged grid" });
            }
        }
        let heights: Vec<usize> = grid.iter().map(|row| row.first().map_or(0, |c| c.rows)).collect();
        let widths: Vec<usize> = (0..n_bcols).map(|j| grid[0][j].cols).collect();
        for (i, row) in grid.iter().enumerate() {
            for (j, cell) in row.iter().enumerate() {
                if cell.rows != heights[i] {
                    return Err(LmiError::BlockGrid { row: i, col: j, reason: "height differs from its block row" });
                }
                if cell.cols != widths[j] {
                    return Err(LmiError::BlockGrid { row: i, col: j, reason: "width differs from its block column" });
                }
            }
        }
        let rows: usize = heights.iter().sum();
        let cols: usize = widths.iter().sum();
        let mut out = Self::zeros(rows, cols);
        let mut r0 = 0;
        for (i, row) in grid.iter().enumerate() {
            let mut c0 = 0;
            for (j, cell) in row.iter().enumerate() {
                out.constant.view_mut((r0, c0), (heights[i], widths[j])).copy_from(&cell.constant);
                for (e, c) in &cell.terms {
                    let slot = out.terms.entry(*e).or_insert_with(|| Mat::zeros(rows, cols));
                    slot.view_mut((r0, c0), (heights[i], widths[j])).copy_from(c);
                }
                c0 += widths[j];
            }
            r0 += heights[i];
        }
        Ok(out)
    }

    /// Block-diagonal concatenation.
    pub fn block_diag(blocks: &[MatExpr]) -> Result<Self, LmiError> {
        let grid: Vec<Vec<MatExpr>> = blocks
            .iter()
            .enumerate()
            .map(|(i, bi)| {
                blocks
                    .iter()
                    .enumerate()
                    .map(|(j, bj)| if i == j { bi.clone() } else { Self::zeros(bi.rows, bj.cols) })
                    .collect()
            })
            .collect();
        Self::block(&grid)
    }

    /// Largest entrywise asymmetry over the constant and all coefficients.
    pub fn asymmetry(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let one = |m: &Mat| crate::linalg::max_abs(&(m - m.transpose()));
        self.terms.values().map(one).fold(one(&self.constant), f64::max)
    }

    /// Trace as a linear form; `self` must be square.
    pub fn trace(&self) -> super::LinearForm {
        assert!(self.is_square(), "trace of a non-square expression");
        let mut lf = super::LinearForm::constant(self.constant.trace());
        for (e, c) in &self.terms {
            lf.add(*e, c.trace());
        }
        lf
    }

    /// Replaces entries by values where `fixed` returns `Some`.
    pub fn substitute(&self, fixed: impl Fn(EntryId) -> Option<f64>) -> Self {
        let mut out = Self::constant(self.constant.clone());
        for (e, c) in &self.terms {
            match fixed(*e) {
                Some(v) => out.constant += c * v,
                None => {
                    out.terms.insert(*e, c.clone());
                }
            }
        }
        out
    }

    fn map_matrices(&self, f: impl Fn(&Mat) -> Mat) -> Self {
        let constant = f(&self.constant);
        Self {
            rows: constant.nrows(),
            cols: constant.ncols(),
            terms: self.terms.iter().map(|(e, m)| (*e, f(m))).collect(),
            constant,
        }
    }

    fn zip(&self, other: &Self, sign: f64) -> Self {
        assert_eq!(self.shape(), other.shape(), "shape mismatch in affine expression arithmetic");
        let mut out = self.clone();
        out.constant += &other.constant * sign;
        for (e, c) in &other.terms {
            out.add_term(*e, c * sign);
        }
        out
    }
}

impl Add for &MatExpr {
    type Output = MatExpr;
    fn add(self, rhs: &MatExpr) -> MatExpr {
        self.zip(rhs, 1.0)
    }
}

impl Add for MatExpr {
    type Output = MatExpr;
    fn add(self, rhs: MatExpr) -> MatExpr {
        self.zip(&rhs, 1.0)
    }
}

impl Sub for &MatExpr {
    type Output = MatExpr;
    fn sub(self, rhs: &MatExpr) -> MatExpr {
        self.zip(rhs, -1.0)
    }
}

impl Sub for MatExpr {
    type Output = MatExpr;
    fn sub(self, rhs: MatExpr) -> MatExpr {
        self.zip(&rhs, -1.0)
    }
}

impl Neg for &MatExpr {
    type Output = MatExpr;
    fn neg(self) -> MatExpr {
        self.scale(-1.0)
    }
}

impl Neg for MatExpr {
    type Output = MatExpr;
    fn neg(self) -> MatExpr {
        self.scale(-1.0)
    }
}

impl Mul<&MatExpr> for &Mat {
    type Output = MatExpr;
    fn mul(self, rhs: &MatExpr) -> MatExpr {
        rhs.left_mul(self)
    }
}

impl Mul<&Mat> for &MatExpr {
    type Output = MatExpr;
    fn mul(self, rhs: &Mat) -> MatExpr {
        self.right_mul(rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn m(r: usize, c: usize, v: &[f64]) -> Mat {
        Mat::from_row_slice(r, c, v)
    }

    #[test]
    fn he_of_constants() {
        let e = MatExpr::constant(m(2, 2, &[0.0, 1.0, 0.0, 0.0])).he().unwrap();
        assert_eq!(e.constant_part(), &m(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        let e = MatExpr::constant(m(2, 2, &[1.0, 2.0, 3.0, 4.0])).he().unwrap();
        assert_eq!(e.constant_part(), &m(2, 2, &[2.0, 5.0, 5.0, 8.0]));
        assert_eq!(MatExpr::zeros(3, 3).he().unwrap(), MatExpr::zeros(3, 3));
    }

    #[test]
    fn he_rejects_rectangular() {
        assert!(matches!(MatExpr::zeros(2, 3).he(), Err(LmiError::Shape { .. })));
    }

    #[test]
    fn block_identities() {
        let b = MatExpr::block(&[
            vec![MatExpr::identity(2), MatExpr::zeros(2, 3)],
            vec![MatExpr::zeros(3, 2), MatExpr::identity(3)],
        ])
        .unwrap();
        assert_eq!(b.constant_part(), &Mat::identity(5, 5));
        let row = MatExpr::block(&[vec![MatExpr::zeros(2, 3), MatExpr::zeros(2, 2)]]).unwrap();
        assert_eq!(row.shape(), (2, 5));
    }

    #[test]
    fn block_reports_offending_cell() {
        let err = MatExpr::block(&[
            vec![MatExpr::zeros(2, 2), MatExpr::zeros(2, 1)],
            vec![MatExpr::zeros(1, 2), MatExpr::zeros(1, 2)],
        ])
        .unwrap_err();
        assert_eq!(err, LmiError::BlockGrid { row: 1, col: 1, reason: "width differs from its block column" });
    }

    #[test]
    fn terms_follow_products() {
        let x = MatExpr::from_term(EntryId(0), Mat::identity(2, 2));
        let a = m(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let ax = &a * &x;
        assert_eq!(ax.coefficient(EntryId(0)).unwrap(), &a);
        assert_eq!(ax.eval(&[2.0]), &a * 2.0);
        let fixed = ax.substitute(|_| Some(0.5));
        assert_eq!(fixed.terms().count(), 0);
        assert_eq!(fixed.constant_part(), &(&a * 0.5));
    }
}
