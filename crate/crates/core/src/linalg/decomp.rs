use super::{LinalgError, Mat, Result, TOLERANCES};

/// Lower Cholesky factor `E` with `E·Eᵀ = m`.
///
/// `m` must be symmetric to the kernel tolerance; a non-positive pivot
/// yields `NotPositiveDefinite`.
pub fn cholesky(m: &Mat) -> Result<Mat> {
    if !m.is_square() {
        return Err(LinalgError::NotSquare { rows: m.rows(), cols: m.cols() });
    }
    if !m.is_symmetric(TOLERANCES.symmetry) {
        return Err(LinalgError::NotSymmetric { asymmetry: m.asymmetry() });
    }
    cholesky_raw(m)
}

/// Cholesky on the lower triangle only, no symmetry check.
pub(crate) fn cholesky_raw(m: &Mat) -> Result<Mat> {
    let n = m.rows();
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(LinalgError::NotPositiveDefinite { index: j, pivot: d });
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Solves `L y = b` for lower-triangular `L`.
pub(crate) fn forward_substitute(l: &Mat, b: &[f64]) -> Vec<f64> {
    let n = l.rows();
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    y
}

/// Solves `Lᵀ x = y` for lower-triangular `L`.
pub(crate) fn backward_substitute_transposed(l: &Mat, y: &[f64]) -> Vec<f64> {
    let n = l.rows();
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

/// Inverse of a lower-triangular matrix with nonzero diagonal.
pub(crate) fn lower_inverse(l: &Mat) -> Mat {
    let n = l.rows();
    let mut inv = Mat::zeros(n, n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = forward_substitute(l, &e);
        for (i, v) in col.into_iter().enumerate().skip(j) {
            inv[(i, j)] = v;
        }
    }
    inv
}

struct Lu {
    lu: Mat,
    perm: Vec<usize>,
}

fn lu_decompose(a: &Mat) -> Result<Lu> {
    if !a.is_square() {
        return Err(LinalgError::NotSquare { rows: a.rows(), cols: a.cols() });
    }
    let n = a.rows();
    let mut lu = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let scale = a.max_abs().max(f64::MIN_POSITIVE);
    for k in 0..n {
        let (p, pmax) = (k..n)
            .map(|i| (i, lu[(i, k)].abs()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pmax <= 1e-14 * scale {
            return Err(LinalgError::Singular);
        }
        if p != k {
            for j in 0..n {
                let tmp = lu[(k, j)];
                lu[(k, j)] = lu[(p, j)];
                lu[(p, j)] = tmp;
            }
            perm.swap(k, p);
        }
        let piv = lu[(k, k)];
        for i in (k + 1)..n {
            let f = lu[(i, k)] / piv;
            lu[(i, k)] = f;
            if f != 0.0 {
                for j in (k + 1)..n {
                    lu[(i, j)] -= f * lu[(k, j)];
                }
            }
        }
    }
    Ok(Lu { lu, perm })
}

impl Lu {
    fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.rows();
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for k in 0..i {
                y[i] -= self.lu[(i, k)] * y[k];
            }
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                y[i] -= self.lu[(i, k)] * y[k];
            }
            y[i] /= self.lu[(i, i)];
        }
        y
    }
}

/// Solves `a·X = b` by LU with partial pivoting.
pub fn solve(a: &Mat, b: &Mat) -> Result<Mat> {
    if a.rows() != b.rows() {
        return Err(LinalgError::DimensionMismatch {
            expected: format!("{} rows", a.rows()),
            actual: format!("{} rows", b.rows()),
        });
    }
    let lu = lu_decompose(a)?;
    let mut x = Mat::zeros(a.cols(), b.cols());
    for j in 0..b.cols() {
        let col = lu.solve_vec(&b.col_vec(j));
        for (i, v) in col.into_iter().enumerate() {
            x[(i, j)] = v;
        }
    }
    Ok(x)
}

pub fn inverse(a: &Mat) -> Result<Mat> {
    solve(a, &Mat::identity(a.rows()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel_residual(m: &Mat, e: &Mat) -> f64 {
        (&(e * &e.transpose()) - m).frobenius() / m.frobenius()
    }

    #[test]
    fn cholesky_identity_and_diagonal() {
        assert_eq!(cholesky(&Mat::identity(2)).unwrap(), Mat::identity(2));
        let e = cholesky(&Mat::diag(&[4.0, 9.0])).unwrap();
        assert_eq!(e, Mat::diag(&[2.0, 3.0]));
    }

    #[test]
    fn cholesky_scaled_identity() {
        let e = cholesky(&Mat::identity(2).scale(10.5)).unwrap();
        let r = 10.5f64.sqrt();
        assert!((&e - &Mat::diag(&[r, r])).max_abs() < 1e-15);
    }

    #[test]
    fn cholesky_residual_dense() {
        let m = Mat::from_rows(&[[4.0, 2.0, 0.4], [2.0, 5.0, 1.0], [0.4, 1.0, 3.0]]);
        let e = cholesky(&m).unwrap();
        assert!(rel_residual(&m, &e) < 1e-10);
        for i in 0..3 {
            for j in (i + 1)..3 {
                assert_eq!(e[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn cholesky_rejects_semidefinite() {
        let m = Mat::from_rows(&[[1.0, 1.0], [1.0, 1.0]]);
        assert!(matches!(cholesky(&m), Err(LinalgError::NotPositiveDefinite { index: 1, .. })));
    }

    #[test]
    fn solve_and_inverse() {
        let a = Mat::from_rows(&[[0.0, 2.0], [3.0, 1.0]]);
        let inv = inverse(&a).unwrap();
        assert!((&(&a * &inv) - &Mat::identity(2)).max_abs() < 1e-15);
        assert_eq!(inverse(&Mat::zeros(2, 2)), Err(LinalgError::Singular));
    }
}
