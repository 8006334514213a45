//! Active-subspace estimation from gradient samples.
//!
//! The object of interest is the average outer product of the gradient,
//!
//! ```text
//! C = ∫ (∇f)(∇f)ᵀ ρ dx  ≈  Ĉ = (1/M) Σ ∇f(xᵢ) ∇f(xᵢ)ᵀ,
//! ```
//!
//! a symmetric positive semidefinite matrix whose dominant eigenvectors
//! span the directions along which the model changes most on average. A
//! large gap after the `n`-th eigenvalue is the evidence for an
//! `n`-dimensional active subspace; the eigenvector blocks `W1 | W2` split
//! the input space into active and inactive coordinates `y = W1ᵀx`,
//! `z = W2ᵀx`.

use thiserror::Error;

use crate::gradients::GradientSampleSet;
use crate::linalg::{eigh_symmetric, LinalgError, Matrix};

#[derive(Debug, Error)]
pub enum SubspaceError {
    #[error("non-finite gradient at sample {0}")]
    NonFiniteGradient(usize),
    #[error("active dimension must satisfy 1 <= n < m; got n = {n}, m = {m}")]
    BadDimension { n: usize, m: usize },
    #[error("all eigenvalues are zero; the model is constant")]
    AllZero,
    #[error("need at least 2 eigenvalues, got {0}")]
    TooFewEigenvalues(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Eigenvalue gaps closer than this fraction of the largest eigenvalue
/// make the individual eigenvectors non-identifiable (the spanned subspace
/// still is); see [`SubspaceEstimate::degenerate_pairs`].
pub const DEGENERACY_RTOL: f64 = 1e-10;

/// Monte Carlo estimate of the gradient outer-product matrix together with
/// its eigendecomposition.
#[derive(Debug, Clone)]
pub struct SubspaceEstimate {
    dim: usize,
    eigenvalues: Vec<f64>,
    eigenvectors: Matrix,
    c_matrix: Matrix,
    raw_min_eigenvalue: f64,
}

impl SubspaceEstimate {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Eigenvalues sorted descending, clamped at zero.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Orthonormal eigenvectors as columns, in eigenvalue order, each
    /// sign-normalized so its first nonzero component is positive.
    pub fn eigenvectors(&self) -> &Matrix {
        &self.eigenvectors
    }

    pub fn c_matrix(&self) -> &Matrix {
        &self.c_matrix
    }

    /// Smallest eigenvalue before clamping; slightly negative values are
    /// ordinary floating-point leakage from the PSD structure.
    pub fn raw_min_eigenvalue(&self) -> f64 {
        self.raw_min_eigenvalue
    }

    /// Split the eigenvectors into active (`W1`, first `n` columns) and
    /// inactive (`W2`) blocks.
    pub fn partition(&self, n: usize) -> Result<SubspacePartition, SubspaceError> {
        if n == 0 || n >= self.dim {
            return Err(SubspaceError::BadDimension { n, m: self.dim });
        }
        let (w1, w2) = split_columns(&self.eigenvectors, n);
        Ok(SubspacePartition {
            m: self.dim,
            n,
            w1,
            w2,
        })
    }

    /// Advisory active dimension from the largest eigenvalue ratio.
    pub fn suggest_gap(&self) -> Result<(usize, f64), SubspaceError> {
        suggest_gap(&self.eigenvalues)
    }

    /// Indices `i` (0-based) where `λ_i - λ_{i+1} < 1e-10 · λ_1`, i.e.
    /// adjacent eigenvalues too close to pin down their eigenvectors.
    pub fn degenerate_pairs(&self) -> Vec<usize> {
        let lead = self.eigenvalues.first().copied().unwrap_or(0.0);
        self.eigenvalues
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[0] - w[1] < DEGENERACY_RTOL * lead)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Active/inactive eigenvector blocks `[W1 | W2]`.
#[derive(Debug, Clone)]
pub struct SubspacePartition {
    m: usize,
    n: usize,
    w1: Matrix,
    w2: Matrix,
}

impl SubspacePartition {
    pub fn input_dim(&self) -> usize {
        self.m
    }

    pub fn active_dim(&self) -> usize {
        self.n
    }

    pub fn w1(&self) -> &Matrix {
        &self.w1
    }

    pub fn w2(&self) -> &Matrix {
        &self.w2
    }
}

pub(crate) fn split_columns(w: &Matrix, n: usize) -> (Matrix, Matrix) {
    let m = w.rows();
    let w1 = Matrix::from_columns(&(0..n).map(|j| w.column(j)).collect::<Vec<_>>());
    let w2 = Matrix::from_columns(&(n..m).map(|j| w.column(j)).collect::<Vec<_>>());
    (w1, w2)
}

/// Estimate `C` by simple Monte Carlo over the recorded gradients and
/// eigendecompose it.
///
/// The accumulation runs in fixed sample order, so the result is
/// bit-reproducible for a given sample set regardless of parallelism
/// elsewhere.
pub fn estimate_c_matrix(samples: &GradientSampleSet) -> Result<SubspaceEstimate, SubspaceError> {
    let weights = vec![1usize; samples.len()];
    estimate_c_matrix_weighted(samples, &weights)
}

/// Shared core for the plain estimate and bootstrap replicates: `C` from
/// integer resample multiplicities (`weights[i]` = number of times sample
/// `i` appears; the plain estimate uses all ones).
pub(crate) fn estimate_c_matrix_weighted(
    samples: &GradientSampleSet,
    weights: &[usize],
) -> Result<SubspaceEstimate, SubspaceError> {
    assert_eq!(weights.len(), samples.len());
    let m = samples.dim();
    let total: usize = weights.iter().sum();
    assert!(total > 0, "resample cannot be empty");

    let mut c = Matrix::zeros(m, m);
    for (idx, (g, &w)) in samples.grads().iter().zip(weights).enumerate() {
        if g.iter().any(|v| !v.is_finite()) {
            return Err(SubspaceError::NonFiniteGradient(idx));
        }
        if w == 0 {
            continue;
        }
        let w = w as f64;
        for i in 0..m {
            let gi = g[i];
            for j in i..m {
                c[(i, j)] += w * gi * g[j];
            }
        }
    }
    let scale = 1.0 / total as f64;
    for i in 0..m {
        for j in i..m {
            c[(i, j)] *= scale;
            c[(j, i)] = c[(i, j)];
        }
    }

    let (raw_eigenvalues, eigenvectors) = eigh_symmetric(&c)?;
    let raw_min_eigenvalue = raw_eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let eigenvalues = raw_eigenvalues.into_iter().map(|l| l.max(0.0)).collect();
    Ok(SubspaceEstimate {
        dim: m,
        eigenvalues,
        eigenvectors,
        c_matrix: c,
        raw_min_eigenvalue,
    })
}

/// Pick the split `n` that maximizes the eigenvalue ratio `λ_n / λ_{n+1}`.
///
/// A trailing zero eigenvalue counts as an infinite ratio, preferring the
/// smallest such `n`. This is advisory: the right threshold depends on the
/// downstream use, so callers choose the final `n`.
pub fn suggest_gap(eigenvalues: &[f64]) -> Result<(usize, f64), SubspaceError> {
    if eigenvalues.len() < 2 {
        return Err(SubspaceError::TooFewEigenvalues(eigenvalues.len()));
    }
    if eigenvalues[0] <= 0.0 {
        return Err(SubspaceError::AllZero);
    }
    let mut best_n = 1;
    let mut best_ratio = -1.0;
    for n in 1..eigenvalues.len() {
        let hi = eigenvalues[n - 1];
        let lo = eigenvalues[n];
        let ratio = if lo > 0.0 {
            hi / lo
        } else if hi > 0.0 {
            f64::INFINITY
        } else {
            1.0
        };
        if ratio > best_ratio {
            best_ratio = ratio;
            best_n = n;
        }
    }
    Ok((best_n, best_ratio))
}

/// Project points onto the active variables, `yᵢ = W1ᵀ xᵢ`.
pub fn active_coordinates(
    part: &SubspacePartition,
    points: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>, SubspaceError> {
    points
        .iter()
        .map(|x| {
            if x.len() != part.m {
                return Err(SubspaceError::DimensionMismatch(format!(
                    "point has {} components, partition expects {}",
                    x.len(),
                    part.m
                )));
            }
            Ok(part.w1.transpose_matvec(x))
        })
        .collect()
}

/// Rows `(w1ᵀxᵢ [, w2ᵀxᵢ], fᵢ)` for a sufficient summary plot in one or
/// two active variables.
pub fn summary_plot_data(
    part: &SubspacePartition,
    points: &[Vec<f64>],
    values: &[f64],
    n_plot: usize,
) -> Result<Vec<(Vec<f64>, f64)>, SubspaceError> {
    if !(1..=2).contains(&n_plot) || n_plot > part.n {
        return Err(SubspaceError::BadDimension {
            n: n_plot,
            m: part.n + 1,
        });
    }
    if points.len() != values.len() {
        return Err(SubspaceError::DimensionMismatch(format!(
            "{} points vs {} values",
            points.len(),
            values.len()
        )));
    }
    let ys = active_coordinates(part, points)?;
    Ok(ys
        .into_iter()
        .zip(values)
        .map(|(y, &f)| (y[..n_plot].to_vec(), f))
        .collect())
}
