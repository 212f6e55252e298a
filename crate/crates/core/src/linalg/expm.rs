use super::{inverse, Mat, Result};

const PADE_ORDER: usize = 6;

fn inf_norm(m: &Mat) -> f64 {
    (0..m.rows()).map(|i| m.row_slice(i).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// `e^m` by scaling and squaring with a diagonal Padé approximant.
///
/// The argument is scaled so that its infinity norm is at most 1/2 before the
/// [6/6] approximant is applied.
pub fn matrix_exponential(m: &Mat) -> Result<Mat> {
    assert!(m.is_square(), "matrix_exponential needs a square matrix");
    let n = m.rows();
    let norm = inf_norm(m);
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let a = m.scale(0.5f64.powi(squarings));

    let mut num = Mat::identity(n);
    let mut den = Mat::identity(n);
    let mut x = Mat::identity(n);
    let mut c = 1.0;
    let q = PADE_ORDER as f64;
    for k in 1..=PADE_ORDER {
        let kf = k as f64;
        c *= (q - kf + 1.0) / ((2.0 * q - kf + 1.0) * kf);
        x = &a * &x;
        let cx = x.scale(c);
        num = &num + &cx;
        den = if k % 2 == 0 { &den + &cx } else { &den - &cx };
    }
    let mut f = &inverse(&den)? * &num;
    for _ in 0..squarings {
        f = &f * &f;
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gives_identity() {
        assert_eq!(matrix_exponential(&Mat::zeros(3, 3)).unwrap(), Mat::identity(3));
    }

    #[test]
    fn diagonal_log2() {
        let e = matrix_exponential(&Mat::diag(&[2f64.ln(), 0.0])).unwrap();
        assert!((&e - &Mat::diag(&[2.0, 1.0])).max_abs() < 1e-14);
    }

    #[test]
    fn nilpotent_closed_form() {
        for t in [0.1, 1.0, 7.5] {
            let e = matrix_exponential(&Mat::from_rows(&[[0.0, t], [0.0, 0.0]])).unwrap();
            let want = Mat::from_rows(&[[1.0, t], [0.0, 1.0]]);
            assert!((&e - &want).max_abs() <= 1e-13 * t.max(1.0));
        }
    }

    #[test]
    fn rotation_generator() {
        let th = 2.3;
        let e = matrix_exponential(&Mat::from_rows(&[[0.0, -th], [th, 0.0]])).unwrap();
        let want = Mat::from_rows(&[[th.cos(), -th.sin()], [th.sin(), th.cos()]]);
        assert!((&e - &want).max_abs() < 1e-13);
    }
}
