//! Small dense symmetric linear algebra used by the certificate engine.
//!
//! Every LMI handled here is at most 6×6, so eigenvalues are computed with a
//! cyclic Jacobi sweep, which converges for every real symmetric matrix and
//! yields eigenvalues with absolute error on the order of `eps * ‖A‖_F`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;

/// Eigen-decomposition of a real symmetric matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub eigenvalues: DVector<f64>,
    /// Columns are the unit eigenvectors matching `eigenvalues`.
    pub eigenvectors: DMatrix<f64>,
}

impl SymmetricEigen {
    pub fn max(&self) -> f64 {
        self.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Cyclic Jacobi eigen-decomposition. Only the upper triangle is trusted to be
/// the symmetric part; callers should symmetrize first if unsure.
pub fn symmetric_eigen(a: &DMatrix<f64>) -> Result<SymmetricEigen> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "eigenvalue routine needs a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenNonConvergence { sweeps: 0, residual: f64::NAN });
    }
    let mut m = symmetrize(a);
    let mut v = DMatrix::<f64>::identity(n, n);

    let scale = m.norm().max(f64::MIN_POSITIVE);
    let mut sweeps = 0;
    loop {
        let off = off_diagonal_norm(&m);
        if off <= f64::EPSILON * 1e-2 * scale || off == 0.0 {
            break;
        }
        if sweeps == MAX_SWEEPS {
            return Err(Error::EigenNonConvergence { sweeps, residual: off });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                rotate(&mut m, &mut v, p, q, c, s);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]));
    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| m[(i, i)]));
    let eigenvectors = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok(SymmetricEigen { eigenvalues, eigenvectors })
}

/// Applies the Jacobi rotation `J(p, q, θ)` as `M ← JᵀMJ`, accumulating `V ← VJ`.
fn rotate(m: &mut DMatrix<f64>, v: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    let n = m.nrows();
    for k in 0..n {
        let mkp = m[(k, p)];
        let mkq = m[(k, q)];
        m[(k, p)] = c * mkp - s * mkq;
        m[(k, q)] = s * mkp + c * mkq;
    }
    for k in 0..n {
        let mpk = m[(p, k)];
        let mqk = m[(q, k)];
        m[(p, k)] = c * mpk - s * mqk;
        m[(q, k)] = s * mpk + c * mqk;
    }
    // the annihilated pair is exactly zero in exact arithmetic
    m[(p, q)] = 0.0;
    m[(q, p)] = 0.0;
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

fn off_diagonal_norm(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc += m[(i, j)] * m[(i, j)];
            }
        }
    }
    acc.sqrt()
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Largest eigenvalue of a symmetric matrix.
pub fn max_eigenvalue(a: &DMatrix<f64>) -> Result<f64> {
    Ok(symmetric_eigen(a)?.max())
}

/// Largest absolute difference between `a` and its transpose.
pub fn asymmetry(a: &DMatrix<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

/// Evaluates `zᵀ (C ⊗ I_p) z` where `z` stacks the given p-vectors, without
/// forming the Kronecker product: `Σ_ab C[a,b] ⟨z_a, z_b⟩`.
pub fn block_quadratic_form(coeffs: &DMatrix<f64>, blocks: &[&DVector<f64>]) -> f64 {
    debug_assert_eq!(coeffs.nrows(), blocks.len());
    let d = blocks.len();
    let mut acc = 0.0;
    for a in 0..d {
        for b in 0..d {
            let c = coeffs[(a, b)];
            if c != 0.0 {
                acc += c * blocks[a].dot(blocks[b]);
            }
        }
    }
    acc
}

/// Row-major nested vectors, used for JSON output of small matrices.
pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::DimensionMismatch("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// Serde adapter storing a `DMatrix<f64>` as an array of rows.
pub mod matrix_rows {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        super::to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        super::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn diagonal_matrix_is_its_own_spectrum() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, -1.0, 2.0]));
        let eig = symmetric_eigen(&a).unwrap();
        assert_eq!(eig.eigenvalues.as_slice(), &[-1.0, 2.0, 3.0]);
    }

    #[test]
    fn two_by_two_closed_form() {
        // [[2,1],[1,2]] has eigenvalues 1 and 3
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let eig = symmetric_eigen(&a).unwrap();
        assert_abs_diff_eq!(eig.eigenvalues[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(eig.eigenvalues[1], 3.0, epsilon = 1e-15);
    }

    #[test]
    fn matches_nalgebra_on_random_six_by_six() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let g = DMatrix::from_fn(6, 6, |_, _| rng.random_range(-1.0..1.0));
            let a = &g + g.transpose();
            let ours = symmetric_eigen(&a).unwrap();
            let mut reference: Vec<f64> = a.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
            reference.sort_by(f64::total_cmp);
            for (x, y) in ours.eigenvalues.iter().zip(&reference) {
                assert_abs_diff_eq!(*x, *y, epsilon = 1e-12);
            }
            // A V = V Λ
            let resid = &a * &ours.eigenvectors - &ours.eigenvectors * DMatrix::from_diagonal(&ours.eigenvalues);
            assert!(resid.amax() < 1e-12);
        }
    }

    #[test]
    fn rejects_non_square_and_nan() {
        assert!(symmetric_eigen(&DMatrix::zeros(2, 3)).is_err());
        let mut a = DMatrix::<f64>::identity(2, 2);
        a[(0, 1)] = f64::NAN;
        assert!(matches!(symmetric_eigen(&a), Err(Error::EigenNonConvergence { .. })));
    }

    #[test]
    fn block_form_matches_stacked_vector() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, -0.5, -0.5, 2.0]);
        let x = DVector::from_vec(vec![1.0, 2.0]);
        let y = DVector::from_vec(vec![-1.0, 0.5]);
        // x·x - x·y + 2 y·y
        let expected = 5.0 - (-1.0 + 1.0) + 2.0 * 1.25;
        assert_abs_diff_eq!(block_quadratic_form(&c, &[&x, &y]), expected, epsilon = 1e-15);
    }
}
