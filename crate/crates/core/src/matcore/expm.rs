//! Matrix exponential by scaling and squaring, and its Fréchet derivative.

use crate::error::Result;
use crate::matrix::Matrix;

/// The scaled matrix has 1-norm at most this before the Taylor kernel runs.
const SCALED_NORM: f64 = 0.5;
/// Truncation error at norm 0.5 is below 0.5^17 / 17! ≈ 2e-20.
const TAYLOR_DEGREE: usize = 16;

pub fn expm(a: &Matrix) -> Result<Matrix> {
    a.ensure_square("expm")?;
    a.ensure_finite("expm")?;
    let norm = a.norm_1();
    let squarings = if norm > SCALED_NORM {
        (norm / SCALED_NORM).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a.scale(0.5f64.powi(squarings));

    // Horner: I + A(I + A/2(I + A/3(...))).
    let n = a.rows();
    let identity = Matrix::identity(n);
    let mut acc = identity.clone();
    for k in (1..=TAYLOR_DEGREE).rev() {
        acc = &identity + &scaled.matmul(&acc).scale(1.0 / k as f64);
    }
    for _ in 0..squarings {
        acc = acc.matmul(&acc);
    }
    Ok(acc)
}

/// Directional derivative `L(A, E) = d/dt exp(A + tE)|₀`, read off the
/// top-right block of `exp([[A, E], [0, A]])`.
pub fn expm_frechet(a: &Matrix, e: &Matrix) -> Result<Matrix> {
    a.ensure_square("expm_frechet")?;
    a.ensure_same_shape(e, "expm_frechet")?;
    let n = a.rows();
    let mut block = Matrix::zeros(2 * n, 2 * n);
    block.set_block(0, 0, a);
    block.set_block(0, n, e);
    block.set_block(n, n, a);
    Ok(expm(&block)?.block(0, n, n, n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::random;

    #[test]
    fn zero_gives_identity() {
        assert_eq!(expm(&Matrix::zeros(4, 4)).unwrap(), Matrix::identity(4));
    }

    #[test]
    fn plane_rotation() {
        let th = std::f64::consts::PI / 6.0;
        let r = expm(&Matrix::from_rows(&[[0.0, th], [-th, 0.0]])).unwrap();
        let want = Matrix::from_rows(&[[th.cos(), th.sin()], [-th.sin(), th.cos()]]);
        assert!((&r - &want).max_abs() < 1e-15);
    }

    #[test]
    fn skew_gives_orthogonal() {
        let mut rng = random::rng(17);
        let a = random::skew_matrix(&mut rng, 8, 1.0);
        assert!(expm(&a).unwrap().orthogonality_error() <= 1e-10);
    }

    #[test]
    fn inverse_pair() {
        let mut rng = random::rng(18);
        let g = random::gaussian_matrix(&mut rng, 6, 6);
        let a = g.scale(5.0 / g.frobenius_norm());
        let prod = expm(&a).unwrap().matmul(&expm(&a.scale(-1.0)).unwrap());
        assert!((&prod - &Matrix::identity(6)).frobenius_norm() <= 1e-9);
    }

    #[test]
    fn frechet_trivial_cases() {
        let mut rng = random::rng(19);
        let a = random::gaussian_matrix(&mut rng, 4, 4);
        let e = random::gaussian_matrix(&mut rng, 4, 4);
        assert_eq!(expm_frechet(&a, &Matrix::zeros(4, 4)).unwrap().max_abs(), 0.0);
        let at_zero = expm_frechet(&Matrix::zeros(4, 4), &e).unwrap();
        assert!(at_zero.rel_diff(&e) < 1e-15);
    }

    #[test]
    fn frechet_matches_central_difference() {
        let mut rng = random::rng(20);
        let a = random::gaussian_matrix(&mut rng, 6, 6).scale(0.5);
        let e = random::gaussian_matrix(&mut rng, 6, 6);
        let h = 1e-5;
        let fd = (expm(&(&a + &e.scale(h))).unwrap() - expm(&(&a - &e.scale(h))).unwrap())
            .scale(0.5 / h);
        let l = expm_frechet(&a, &e).unwrap();
        assert!(l.rel_diff(&fd) <= 1e-6, "{}", l.rel_diff(&fd));
    }

    #[test]
    fn dimension_errors() {
        assert!(matches!(expm(&Matrix::zeros(2, 3)), Err(Error::Dimension { .. })));
        assert!(matches!(
            expm_frechet(&Matrix::zeros(2, 2), &Matrix::zeros(3, 3)),
            Err(Error::Dimension { .. })
        ));
    }
}
