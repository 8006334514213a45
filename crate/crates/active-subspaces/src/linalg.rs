//! Small dense matrices and the symmetric eigensolver.
//!
//! Input spaces here have at most a few dozen dimensions, so everything is
//! a plain row-major `Vec<f64>` and the eigensolver is cyclic Jacobi:
//! simple, backward stable, and free of external dependencies. No attempt
//! is made to be fast for large matrices.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix dimension {0} exceeds the small dense limit of {MAX_EIGH_DIM}")]
    TooLarge(usize),
    #[error("matrix is not symmetric: |a[{i}][{j}] - a[{j}][{i}]| = {diff:e}")]
    NotSymmetric { i: usize, j: usize, diff: f64 },
    #[error("Jacobi eigensolver did not converge in {0} sweeps")]
    NoConvergence(usize),
    #[error("least-squares design is rank deficient (|r| = {smallest:e} vs max {largest:e})")]
    RankDeficient { smallest: f64, largest: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Build from nested rows. Panics if the rows are ragged.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        Matrix {
            rows: r,
            cols: c,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    /// Build from column vectors. Panics if the columns are ragged.
    pub fn from_columns(cols: &[Vec<f64>]) -> Self {
        let c = cols.len();
        let r = cols.first().map_or(0, |col| col.len());
        assert!(cols.iter().all(|col| col.len() == r), "ragged columns");
        let mut m = Matrix::zeros(r, c);
        for (j, col) in cols.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "inner dimensions must agree");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let aik = self[(i, k)];
                if aik == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += aik * other[(k, j)];
                }
            }
        }
        out
    }

    /// `selfᵀ · other` without materializing the transpose.
    pub fn transpose_matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.rows, other.rows, "row counts must agree");
        let mut out = Matrix::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            for i in 0..self.cols {
                let aki = self[(k, i)];
                if aki == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += aki * other[(k, j)];
                }
            }
        }
        out
    }

    /// Matrix-vector product.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len(), "vector length must match columns");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `selfᵀ · x`.
    pub fn transpose_matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.rows, x.len(), "vector length must match rows");
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            let xi = x[i];
            for j in 0..self.cols {
                out[j] += self[(i, j)] * xi;
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// Largest absolute entry of `self - other`.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |acc, (a, b)| acc.max((a - b).abs()))
    }

    /// Max-norm departure of the columns from orthonormality, `‖AᵀA - I‖_max`.
    pub fn orthonormality_defect(&self) -> f64 {
        let gram = self.transpose_matmul(self);
        let mut worst = 0.0f64;
        for i in 0..gram.rows {
            for j in 0..gram.cols {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((gram[(i, j)] - target).abs());
            }
        }
        worst
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Largest matrix the Jacobi eigensolver accepts.
pub const MAX_EIGH_DIM: usize = 64;

const SYMMETRY_RTOL: f64 = 1e-12;
const OFFDIAG_RTOL: f64 = 1e-14;
const MAX_SWEEPS: usize = 100;
const SIGN_TOL: f64 = 1e-12;

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues sorted descending and the matching eigenvectors as
/// the columns of an orthonormal matrix. Each eigenvector is sign-normalized
/// so that its first component larger than `1e-12` in magnitude is positive.
/// Sweeps run until the off-diagonal Frobenius norm falls below
/// `1e-14 · ‖a‖_F`; ties between equal eigenvalues keep the rotation
/// output order (stable sort).
pub fn eigh_symmetric(a: &Matrix) -> Result<(Vec<f64>, Matrix), LinalgError> {
    let n = a.rows();
    if a.cols() != n {
        return Err(LinalgError::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    if n > MAX_EIGH_DIM {
        return Err(LinalgError::TooLarge(n));
    }
    let scale = a.max_abs();
    for i in 0..n {
        for j in (i + 1)..n {
            let diff = (a[(i, j)] - a[(j, i)]).abs();
            if diff > SYMMETRY_RTOL * scale.max(f64::MIN_POSITIVE) {
                return Err(LinalgError::NotSymmetric { i, j, diff });
            }
        }
    }
    if n == 0 {
        return Ok((Vec::new(), Matrix::zeros(0, 0)));
    }

    let mut work = a.clone();
    let mut vecs = Matrix::identity(n);
    let threshold = OFFDIAG_RTOL * a.frobenius_norm();

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let off: f64 = {
            let mut s = 0.0;
            for i in 0..n {
                for j in (i + 1)..n {
                    s += 2.0 * work[(i, j)] * work[(i, j)];
                }
            }
            s.sqrt()
        };
        if off <= threshold {
            converged = true;
            break;
        }
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let apq = work[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                // Rotation angle annihilating the (p, q) entry.
                let tau = (work[(q, q)] - work[(p, p)]) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    1.0 / (tau - (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                // work <- Jᵀ work J with J the Givens rotation in plane (p, q).
                for k in 0..n {
                    let akp = work[(k, p)];
                    let akq = work[(k, q)];
                    work[(k, p)] = c * akp - s * akq;
                    work[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = work[(p, k)];
                    let aqk = work[(q, k)];
                    work[(p, k)] = c * apk - s * aqk;
                    work[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = vecs[(k, p)];
                    let vkq = vecs[(k, q)];
                    vecs[(k, p)] = c * vkp - s * vkq;
                    vecs[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        return Err(LinalgError::NoConvergence(MAX_SWEEPS));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        work[(j, j)]
            .partial_cmp(&work[(i, i)])
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let eigenvalues: Vec<f64> = order.iter().map(|&i| work[(i, i)]).collect();
    let mut sorted = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for i in 0..n {
            sorted[(i, dst)] = vecs[(i, src)];
        }
    }
    sign_normalize_columns(&mut sorted);
    Ok((eigenvalues, sorted))
}

/// Flip each column so its first component with magnitude above `1e-12`
/// is positive.
pub fn sign_normalize_columns(m: &mut Matrix) {
    for j in 0..m.cols() {
        let lead = (0..m.rows()).map(|i| m[(i, j)]).find(|v| v.abs() > SIGN_TOL);
        if let Some(v) = lead {
            if v < 0.0 {
                for i in 0..m.rows() {
                    m[(i, j)] = -m[(i, j)];
                }
            }
        }
    }
}

/// Spectral norm (largest singular value) via the eigensolver applied to
/// the smaller of the two Gram matrices.
pub fn spectral_norm(b: &Matrix) -> Result<f64, LinalgError> {
    if b.rows() == 0 || b.cols() == 0 {
        return Ok(0.0);
    }
    let gram = if b.cols() <= b.rows() {
        b.transpose_matmul(b)
    } else {
        let bt = b.transpose();
        bt.transpose_matmul(&bt)
    };
    let (evals, _) = eigh_symmetric(&gram)?;
    Ok(evals.first().copied().unwrap_or(0.0).max(0.0).sqrt())
}

/// Least-squares solve of `design · beta ≈ rhs` by Householder QR.
///
/// `rank_rtol` is the smallest acceptable ratio between the magnitudes of
/// an R diagonal entry and the largest one; below it the design is treated
/// as rank deficient.
pub fn lstsq(design: &Matrix, rhs: &[f64], rank_rtol: f64) -> Result<Vec<f64>, LinalgError> {
    let k = design.rows();
    let d = design.cols();
    if rhs.len() != k {
        return Err(LinalgError::DimensionMismatch(format!(
            "rhs length {} vs {} design rows",
            rhs.len(),
            k
        )));
    }
    if k < d {
        return Err(LinalgError::RankDeficient {
            smallest: 0.0,
            largest: 0.0,
        });
    }

    let mut a = design.clone();
    let mut b = rhs.to_vec();

    for j in 0..d {
        // Householder reflector for column j, rows j..k.
        let mut norm_sq = 0.0;
        for i in j..k {
            norm_sq += a[(i, j)] * a[(i, j)];
        }
        let norm = norm_sq.sqrt();
        if norm == 0.0 {
            continue; // leaves a zero diagonal; caught by the rank check
        }
        let alpha = if a[(j, j)] >= 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (j..k).map(|i| a[(i, j)]).collect();
        v[0] -= alpha;
        let v_norm_sq: f64 = v.iter().map(|x| x * x).sum();
        if v_norm_sq == 0.0 {
            continue;
        }
        // Apply H = I - 2vvᵀ/‖v‖² to the trailing columns and to rhs.
        for col in j..d {
            let dot: f64 = (j..k).map(|i| v[i - j] * a[(i, col)]).sum();
            let f = 2.0 * dot / v_norm_sq;
            for i in j..k {
                a[(i, col)] -= f * v[i - j];
            }
        }
        let dot: f64 = (j..k).map(|i| v[i - j] * b[i]).sum();
        let f = 2.0 * dot / v_norm_sq;
        for i in j..k {
            b[i] -= f * v[i - j];
        }
        a[(j, j)] = alpha;
        for i in (j + 1)..k {
            a[(i, j)] = 0.0;
        }
    }

    let largest = (0..d).fold(0.0f64, |acc, j| acc.max(a[(j, j)].abs()));
    let smallest = (0..d).fold(f64::INFINITY, |acc, j| acc.min(a[(j, j)].abs()));
    if largest == 0.0 || smallest <= rank_rtol * largest {
        return Err(LinalgError::RankDeficient { smallest, largest });
    }

    // Back substitution on the triangular factor.
    let mut x = vec![0.0; d];
    for j in (0..d).rev() {
        let mut s = b[j];
        for col in (j + 1)..d {
            s -= a[(j, col)] * x[col];
        }
        x[j] = s / a[(j, j)];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;

    fn random_symmetric(n: usize, seed: u64) -> Matrix {
        let rng = CounterRng::new(seed);
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = rng.symmetric_unit((i * n + j) as u64, 0);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    #[test]
    fn eigh_identity() {
        let (evals, evecs) = eigh_symmetric(&Matrix::identity(4)).unwrap();
        for &e in &evals {
            assert!((e - 1.0).abs() < 1e-14);
        }
        assert!(evecs.orthonormality_defect() < 1e-12);
    }

    #[test]
    fn eigh_diagonal_sorted() {
        let mut a = Matrix::zeros(3, 3);
        a[(0, 0)] = 1.0;
        a[(1, 1)] = 3.0;
        a[(2, 2)] = 2.0;
        let (evals, evecs) = eigh_symmetric(&a).unwrap();
        assert_eq!(evals, vec![3.0, 2.0, 1.0]);
        // Eigenvectors are signed unit coordinate vectors.
        assert!((evecs[(1, 0)] - 1.0).abs() < 1e-14);
        assert!((evecs[(2, 1)] - 1.0).abs() < 1e-14);
        assert!((evecs[(0, 2)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn eigh_known_2x2() {
        let mut a = Matrix::zeros(2, 2);
        a[(0, 0)] = 2.0;
        a[(0, 1)] = 1.0;
        a[(1, 0)] = 1.0;
        a[(1, 1)] = 2.0;
        let (evals, evecs) = eigh_symmetric(&a).unwrap();
        assert!((evals[0] - 3.0).abs() < 1e-14);
        assert!((evals[1] - 1.0).abs() < 1e-14);
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        assert!((evecs[(0, 0)] - inv_sqrt2).abs() < 1e-12);
        assert!((evecs[(1, 0)] - inv_sqrt2).abs() < 1e-12);
    }

    #[test]
    fn eigh_residual_random_5x5() {
        let a = random_symmetric(5, 17);
        let (evals, w) = eigh_symmetric(&a).unwrap();
        assert!(w.orthonormality_defect() < 1e-10);
        // ‖AW - WΛ‖_max ≤ 1e-10 ‖A‖
        let aw = a.matmul(&w);
        let mut wl = w.clone();
        for j in 0..5 {
            for i in 0..5 {
                wl[(i, j)] *= evals[j];
            }
        }
        assert!(aw.max_abs_diff(&wl) <= 1e-10 * a.max_abs());
        // Reconstruction A = WΛWᵀ.
        let recon = wl.matmul(&w.transpose());
        assert!(recon.max_abs_diff(&a) <= 1e-10 * a.max_abs().max(1.0));
    }

    #[test]
    fn eigh_rejects_asymmetric() {
        let mut a = Matrix::zeros(2, 2);
        a[(0, 1)] = 1.0;
        a[(1, 0)] = 0.5;
        assert!(matches!(
            eigh_symmetric(&a),
            Err(LinalgError::NotSymmetric { .. })
        ));
    }

    #[test]
    fn eigh_sign_convention() {
        // Construct a matrix whose dominant eigenvector naturally comes out
        // negative-first and confirm the flip.
        let a = random_symmetric(4, 3);
        let (_, w) = eigh_symmetric(&a).unwrap();
        for j in 0..4 {
            let lead = (0..4).map(|i| w[(i, j)]).find(|v| v.abs() > 1e-12).unwrap();
            assert!(lead > 0.0, "column {j} leads with {lead}");
        }
    }

    #[test]
    fn spectral_norm_of_known_matrix() {
        // Rank-one: ‖uvᵀ‖₂ = ‖u‖‖v‖.
        let u = vec![1.0, 2.0, 2.0];
        let v = vec![3.0, 4.0];
        let mut b = Matrix::zeros(3, 2);
        for i in 0..3 {
            for j in 0..2 {
                b[(i, j)] = u[i] * v[j];
            }
        }
        let got = spectral_norm(&b).unwrap();
        assert!((got - 15.0).abs() < 1e-10);
    }

    #[test]
    fn lstsq_recovers_exact_linear_fit() {
        // y = 2 + 3 x1 - x2 over a handful of points.
        let pts = [
            [0.0, 0.0],
            [1.0, 0.0],
            [0.0, 1.0],
            [1.0, 1.0],
            [0.5, -0.5],
        ];
        let design = Matrix::from_rows(
            &pts.iter()
                .map(|p| vec![1.0, p[0], p[1]])
                .collect::<Vec<_>>(),
        );
        let rhs: Vec<f64> = pts.iter().map(|p| 2.0 + 3.0 * p[0] - p[1]).collect();
        let beta = lstsq(&design, &rhs, 1e-10).unwrap();
        assert!((beta[0] - 2.0).abs() < 1e-12);
        assert!((beta[1] - 3.0).abs() < 1e-12);
        assert!((beta[2] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn lstsq_flags_rank_deficiency() {
        // Second column is a multiple of the first.
        let design = Matrix::from_rows(&[
            vec![1.0, 2.0],
            vec![2.0, 4.0],
            vec![3.0, 6.0],
        ]);
        let rhs = vec![1.0, 2.0, 3.0];
        assert!(matches!(
            lstsq(&design, &rhs, 1e-10),
            Err(LinalgError::RankDeficient { .. })
        ));
    }
}
