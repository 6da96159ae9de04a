//! Small dense linear algebra on identity-padded 4×4 matrices.
//!
//! Every matrix in the solver is at most 4×4 (`n + 1 ≤ 4`, `M ≤ 4`). A `k×k`
//! block is stored in the top-left corner of a [`Mat4`] and the remainder is
//! filled with the identity, so determinants, inverses and factorisations of
//! the padded matrix restrict exactly to the block without heap allocation.

use nalgebra::{DMatrix, Matrix4, Vector4};

pub type Mat4 = Matrix4<f64>;
pub type Vec4 = Vector4<f64>;

/// Overwrites everything outside the leading `k×k` block with the identity.
pub fn pad_identity(mut m: Mat4, k: usize) -> Mat4 {
    for r in 0..4 {
        for c in 0..4 {
            if r >= k || c >= k {
                m[(r, c)] = if r == c { 1.0 } else { 0.0 };
            }
        }
    }
    m
}

/// Leading `k×k` block inverse, `None` when singular.
pub fn inverse(m: &Mat4, k: usize) -> Option<Mat4> {
    pad_identity(*m, k).try_inverse()
}

pub fn determinant(m: &Mat4, k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    pad_identity(*m, k).determinant()
}

/// Solves the leading `k×k` system `m x = b` by LU with partial pivoting.
pub fn solve(m: &Mat4, b: &Vec4, k: usize) -> Option<Vec4> {
    let mut rhs = *b;
    for r in k..4 {
        rhs[r] = 0.0;
    }
    pad_identity(*m, k).lu().solve(&rhs)
}

/// Solves a symmetric positive definite `k×k` system by Cholesky.
pub fn solve_spd(m: &Mat4, b: &Vec4, k: usize) -> Option<Vec4> {
    let mut rhs = *b;
    for r in k..4 {
        rhs[r] = 0.0;
    }
    pad_identity(*m, k).cholesky().map(|c| c.solve(&rhs))
}

fn norm1(m: &Mat4, k: usize) -> f64 {
    (0..k)
        .map(|c| (0..k).map(|r| m[(r, c)].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// 1-norm condition number `‖M‖₁ ‖M⁻¹‖₁` of the leading block.
pub fn condition_number(m: &Mat4, k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    match inverse(m, k) {
        Some(inv) => norm1(m, k) * norm1(&inv, k),
        None => f64::INFINITY,
    }
}

/// Least-squares coefficients `c` minimising `‖Σ_i c_i cols_i − b‖` where the
/// `cols` are the first `p` columns of `cols` in `R^rows`.
pub fn least_squares_columns(cols: &Mat4, p: usize, b: &Vec4, rows: usize) -> Option<Vec4> {
    if p == 0 {
        return Some(Vec4::zeros());
    }
    let mut gram = Mat4::zeros();
    let mut rhs = Vec4::zeros();
    for i in 0..p {
        for j in 0..p {
            gram[(i, j)] = (0..rows).map(|r| cols[(r, i)] * cols[(r, j)]).sum();
        }
        rhs[i] = (0..rows).map(|r| cols[(r, i)] * b[r]).sum();
    }
    solve_spd(&gram, &rhs, p)
}

/// Smallest eigenvalue of the symmetric part of the leading `k×k` block.
pub fn min_symmetric_eigenvalue(m: &Mat4, k: usize) -> f64 {
    if k == 0 {
        return f64::INFINITY;
    }
    let d = DMatrix::from_fn(k, k, |r, c| 0.5 * (m[(r, c)] + m[(c, r)]));
    d.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

/// Largest modulus among the eigenvalues of the leading `k×k` block.
pub fn spectral_radius(m: &Mat4, k: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let d = DMatrix::from_fn(k, k, |r, c| m[(r, c)]);
    d.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest absolute asymmetry `|m_rc − m_cr|` in the leading block.
pub fn symmetry_residual(m: &Mat4, k: usize) -> f64 {
    let mut worst = 0.0_f64;
    for r in 0..k {
        for c in 0..r {
            worst = worst.max((m[(r, c)] - m[(c, r)]).abs());
        }
    }
    worst
}

/// Induced ∞-norm of the leading block.
pub fn norm_inf(m: &Mat4, k: usize) -> f64 {
    (0..k)
        .map(|r| (0..k).map(|c| m[(r, c)].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn padded_block_determinant_and_solve() {
        let mut m = Mat4::zeros();
        m[(0, 0)] = 2.0;
        m[(0, 1)] = 1.0;
        m[(1, 0)] = 1.0;
        m[(1, 1)] = 3.0;
        m[(3, 3)] = 100.0; // outside the block, ignored
        assert!((determinant(&m, 2) - 5.0).abs() < 1e-14);
        let x = solve(&m, &Vec4::new(3.0, 4.0, 9.0, 9.0), 2).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
        assert_eq!(x[2], 0.0);
        let y = solve_spd(&m, &Vec4::new(3.0, 4.0, 0.0, 0.0), 2).unwrap();
        assert!((y - x).norm() < 1e-14);
    }

    #[test]
    fn least_squares_recovers_exact_combination() {
        let mut cols = Mat4::zeros();
        cols[(0, 0)] = 0.01;
        cols[(1, 0)] = 1.0;
        let b = Vec4::new(0.03, 3.0, 0.0, 0.0);
        let c = least_squares_columns(&cols, 1, &b, 2).unwrap();
        assert!((c[0] - 3.0).abs() < 1e-13);
    }

    #[test]
    fn eigen_helpers() {
        let m = Mat4::from_diagonal(&Vec4::new(0.5, 2.0, 7.0, 7.0));
        assert!((min_symmetric_eigenvalue(&m, 2) - 0.5).abs() < 1e-14);
        assert!((spectral_radius(&m, 2) - 2.0).abs() < 1e-12);
        assert!((condition_number(&m, 2) - 4.0).abs() < 1e-12);
    }
}
