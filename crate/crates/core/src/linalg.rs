//! Small dense linear-algebra helpers shared by the solvers.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};

pub fn to_dmatrix(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_row_iterator(a.nrows(), a.ncols(), a.iter().cloned())
}

pub fn to_dvector(v: &Array1<f64>) -> DVector<f64> {
    DVector::from_iterator(v.len(), v.iter().cloned())
}

pub fn from_dvector(v: &DVector<f64>) -> Array1<f64> {
    Array1::from_iter(v.iter().cloned())
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix.
pub fn max_eigenvalue_sym(g: &Array2<f64>) -> f64 {
    debug_assert_eq!(g.nrows(), g.ncols());
    if g.nrows() == 1 {
        return g[[0, 0]];
    }
    let m = to_dmatrix(g);
    m.symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(0.0_f64, f64::max)
}

/// Splits column indices of `z` into an independent set and the columns that
/// are (numerically) linear combinations of earlier kept columns.
///
/// Modified Gram-Schmidt in column order, so the result matches a greedy
/// left-to-right removal of rank-deficiency-inducing columns.
pub fn independent_columns(z: &Array2<f64>, rel_tol: f64) -> (Vec<usize>, Vec<usize>) {
    let n = z.nrows();
    let p = z.ncols();
    let mut basis: Vec<Array1<f64>> = Vec::new();
    let mut keep = Vec::new();
    let mut drop = Vec::new();
    for j in 0..p {
        let mut v = z.column(j).to_owned();
        let orig = v.dot(&v).sqrt();
        if orig == 0.0 {
            drop.push(j);
            continue;
        }
        for b in &basis {
            let c = v.dot(b);
            v.scaled_add(-c, b);
        }
        // second pass for numerical stability
        for b in &basis {
            let c = v.dot(b);
            v.scaled_add(-c, b);
        }
        let res = v.dot(&v).sqrt();
        if res <= rel_tol * orig || basis.len() == n {
            drop.push(j);
        } else {
            keep.push(j);
            basis.push(v.mapv(|x| x / res));
        }
    }
    (keep, drop)
}

/// Least-squares solution of `z β ≈ y` via Householder QR (z must have full
/// column rank).
pub fn solve_least_squares(z: &Array2<f64>, y: &Array1<f64>) -> Option<Array1<f64>> {
    let (n, p) = (z.nrows(), z.ncols());
    if n < p {
        return None;
    }
    let m = to_dmatrix(z);
    let qr = m.qr();
    let mut qty = to_dvector(y);
    qr.q_tr_mul(&mut qty);
    let r = qr.r();
    let rhs = DVector::from_iterator(p, (0..p).map(|i| qty[i]));
    r.solve_upper_triangular(&rhs).map(|b| from_dvector(&b))
}

/// Solves the symmetric positive definite system `a x = b` by Cholesky.
pub fn solve_spd(a: &Array2<f64>, b: &Array1<f64>) -> Option<Array1<f64>> {
    let m = to_dmatrix(a);
    let chol = m.cholesky()?;
    Some(from_dvector(&chol.solve(&to_dvector(b))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn independent_columns_detects_duplicate() {
        let z = array![[1.0, 2.0, 1.0], [1.0, 3.0, 1.0], [1.0, 4.0, 1.0]];
        let (keep, drop) = independent_columns(&z, 1e-10);
        assert_eq!(keep, vec![0, 1]);
        assert_eq!(drop, vec![2]);
    }

    #[test]
    fn least_squares_matches_normal_equations() {
        let z = array![[1.0, 0.5], [1.0, -1.0], [1.0, 2.0], [1.0, 0.0]];
        let y = array![1.0, 2.0, 3.0, 4.0];
        let beta = solve_least_squares(&z, &y).unwrap();
        let g = z.t().dot(&z);
        let rhs = z.t().dot(&y);
        let oracle = solve_spd(&g, &rhs).unwrap();
        for j in 0..2 {
            assert!((beta[j] - oracle[j]).abs() < 1e-10);
        }
    }

    #[test]
    fn max_eigenvalue_of_diagonal() {
        let g = array![[2.0, 0.0], [0.0, 5.0]];
        assert!((max_eigenvalue_sym(&g) - 5.0).abs() < 1e-12);
    }
}
