//! Small dense linear-algebra helpers on top of `nalgebra`.

use crate::Mat;

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn sym_eigenvalues(m: &Mat) -> alloc::vec::Vec<f64> {
    assert!(m.is_square(), "eigenvalues of a non-square matrix");
    if m.nrows() == 0 {
        return alloc::vec::Vec::new();
    }
    let sym = (m + m.transpose()) * 0.5;
    let mut ev: alloc::vec::Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Smallest eigenvalue of the symmetric part of `m` (`+inf` for an empty matrix).
pub fn min_eigenvalue(m: &Mat) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(f64::INFINITY)
}

/// Largest absolute entry, 0 for an empty matrix.
pub fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// 2-norm condition number; `inf` when singular.
pub fn condition_number(m: &Mat) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    let sv = m.clone().singular_values();
    let max = sv.iter().copied().fold(0.0_f64, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// `true` when `m` is square and `|m - mᵀ| <= tol` entrywise.
pub fn is_symmetric(m: &Mat, tol: f64) -> bool {
    m.is_square() && (m - m.transpose()).iter().all(|v| v.abs() <= tol)
}

/// Row-major copy of a matrix, the layout used by all reports.
pub fn to_rows(m: &Mat) -> alloc::vec::Vec<alloc::vec::Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

/// Builds a matrix from row-major nested rows. All rows must share a length.
pub fn from_rows(rows: &[alloc::vec::Vec<f64>]) -> Option<Mat> {
    let r = rows.len();
    let c = rows.first().map_or(0, |row| row.len());
    if rows.iter().any(|row| row.len() != c) {
        return None;
    }
    Some(Mat::from_fn(r, c, |i, j| rows[i][j]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigenvalues_of_diagonal() {
        let m = Mat::from_diagonal(&crate::Vector::from_vec(alloc::vec![3.0, -1.0, 2.0]));
        assert_eq!(sym_eigenvalues(&m), alloc::vec![-1.0, 2.0, 3.0]);
        assert_eq!(min_eigenvalue(&Mat::zeros(0, 0)), f64::INFINITY);
    }

    #[test]
    fn condition_of_singular_is_infinite() {
        let m = Mat::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(condition_number(&m) > 1e15);
    }
}
