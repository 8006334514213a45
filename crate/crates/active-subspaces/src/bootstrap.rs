//! Nonparametric bootstrap over gradient samples.
//!
//! Each replicate redraws `M` sample indices with replacement, rebuilds the
//! `C` estimate, and eigendecomposes it. The spread of the replicate
//! spectra gives percentile intervals for the eigenvalues; the distance
//! between each replicate's active subspace and the point estimate's gives
//! a stability measure in `[0, 1]`. The intervals are plain empirical
//! percentiles; they are not bias-corrected confidence intervals, but the
//! bias shrinks as `M` grows.

use rayon::prelude::*;
use thiserror::Error;

use crate::gradients::GradientSampleSet;
use crate::linalg::{spectral_norm, Matrix};
use crate::rng::CounterRng;
use crate::subspace::{
    estimate_c_matrix_weighted, split_columns, SubspaceError, SubspaceEstimate, SubspacePartition,
};

#[derive(Debug, Error)]
pub enum BootstrapError {
    #[error("eigenvector block is not orthonormal (defect {0:e})")]
    NotOrthonormal(f64),
    #[error("replicate {replicate} failed: {source}")]
    Replicate {
        replicate: usize,
        #[source]
        source: SubspaceError,
    },
    #[error("invalid bootstrap setting: {0}")]
    InvalidSetting(String),
    #[error(transparent)]
    Subspace(#[from] SubspaceError),
}

/// Orthonormality tolerance on the blocks fed to [`subspace_distance`].
const ORTHONORMAL_TOL: f64 = 1e-10;

/// Bootstrap summary for one chosen active dimension `n`.
#[derive(Debug, Clone)]
pub struct BootstrapSummary {
    replicates: usize,
    level: f64,
    eigenvalue_lo: Vec<f64>,
    eigenvalue_hi: Vec<f64>,
    eigenvalue_replicates: Vec<Vec<f64>>,
    subspace_errors: Vec<f64>,
    subspace_error_mean: f64,
    subspace_error_lo: f64,
    subspace_error_hi: f64,
    replicate_w1_first2: Vec<Matrix>,
}

impl BootstrapSummary {
    pub fn replicates(&self) -> usize {
        self.replicates
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    /// Lower percentile bound per eigenvalue, at `(1 - level) / 2`.
    pub fn eigenvalue_lo(&self) -> &[f64] {
        &self.eigenvalue_lo
    }

    /// Upper percentile bound per eigenvalue, at `1 - (1 - level) / 2`.
    pub fn eigenvalue_hi(&self) -> &[f64] {
        &self.eigenvalue_hi
    }

    /// Full replicate spectra, one row per replicate.
    pub fn eigenvalue_replicates(&self) -> &[Vec<f64>] {
        &self.eigenvalue_replicates
    }

    /// Subspace distance of each replicate from the point estimate.
    pub fn subspace_errors(&self) -> &[f64] {
        &self.subspace_errors
    }

    pub fn subspace_error_mean(&self) -> f64 {
        self.subspace_error_mean
    }

    pub fn subspace_error_lo(&self) -> f64 {
        self.subspace_error_lo
    }

    pub fn subspace_error_hi(&self) -> f64 {
        self.subspace_error_hi
    }

    /// Per replicate, the first `min(2, n)` active eigenvectors
    /// (sign-normalized), for eigenvector-stability plots.
    pub fn replicate_w1_first2(&self) -> &[Matrix] {
        &self.replicate_w1_first2
    }
}

/// With-replacement resample of `count` indices as multiplicities.
///
/// Keyed by `(seed, replicate)`, so replicates can be generated in any
/// order or in parallel with identical results.
pub fn resample_multiplicities(count: usize, seed: u64, replicate: u64) -> Vec<usize> {
    let rng = CounterRng::new(seed);
    let mut mult = vec![0usize; count];
    for i in 0..count {
        mult[rng.index(replicate, i as u64, count as u64) as usize] += 1;
    }
    mult
}

/// The identity resample: every sample used exactly once.
pub fn identity_resample(count: usize) -> Vec<usize> {
    vec![1; count]
}

/// C estimate from a resample expressed as per-sample multiplicities.
///
/// With the identity resample this reproduces [`crate::estimate_c_matrix`]
/// bit for bit.
pub fn replicate_estimate(
    samples: &GradientSampleSet,
    multiplicities: &[usize],
) -> Result<SubspaceEstimate, BootstrapError> {
    if multiplicities.len() != samples.len() {
        return Err(BootstrapError::InvalidSetting(format!(
            "{} multiplicities for {} samples",
            multiplicities.len(),
            samples.len()
        )));
    }
    Ok(estimate_c_matrix_weighted(samples, multiplicities)?)
}

/// Distance between the subspace spanned by `w1_a` and the one whose
/// orthogonal complement is spanned by `w2_b`: the spectral norm
/// `‖w1_aᵀ w2_b‖₂`, equal to the spectral norm of the difference of the
/// orthogonal projectors. Always in `[0, 1]`.
pub fn subspace_distance(w1_a: &Matrix, w2_b: &Matrix) -> Result<f64, BootstrapError> {
    if w1_a.rows() != w2_b.rows() {
        return Err(BootstrapError::InvalidSetting(format!(
            "blocks live in different spaces ({} vs {} rows)",
            w1_a.rows(),
            w2_b.rows()
        )));
    }
    for block in [w1_a, w2_b] {
        let defect = block.orthonormality_defect();
        if defect > ORTHONORMAL_TOL {
            return Err(BootstrapError::NotOrthonormal(defect));
        }
    }
    let cross = w1_a.transpose_matmul(w2_b);
    let norm = spectral_norm(&cross).map_err(SubspaceError::from)?;
    Ok(norm.min(1.0))
}

/// Subspace error of a replicate against the base partition.
///
/// Bitwise-equal active blocks (the identity resample) are exactly the
/// same subspace, so the distance short-circuits to exactly zero.
pub fn subspace_error(
    base: &SubspacePartition,
    replicate: &SubspaceEstimate,
) -> Result<f64, BootstrapError> {
    let n = base.active_dim();
    let (rep_w1, rep_w2) = split_columns(replicate.eigenvectors(), n);
    if rep_w1 == *base.w1() {
        return Ok(0.0);
    }
    subspace_distance(base.w1(), &rep_w2)
}

/// Bootstrap the eigenvalue spectrum and the stability of the
/// `n`-dimensional active subspace.
pub fn bootstrap_subspace(
    samples: &GradientSampleSet,
    n: usize,
    replicates: usize,
    level: f64,
    seed: u64,
) -> Result<BootstrapSummary, BootstrapError> {
    if samples.len() < 2 {
        return Err(BootstrapError::InvalidSetting(format!(
            "need at least 2 samples to resample, got {}",
            samples.len()
        )));
    }
    if replicates < 1 {
        return Err(BootstrapError::InvalidSetting(
            "need at least 1 replicate".to_owned(),
        ));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(BootstrapError::InvalidSetting(format!(
            "interval level must be in (0, 1), got {level}"
        )));
    }

    let base = estimate_c_matrix_weighted(samples, &identity_resample(samples.len()))?;
    let base_part = base.partition(n)?;
    let m = samples.dim();
    let stored_cols = n.min(2);

    // Replicates are independent; gather in index order.
    let results: Vec<Result<(Vec<f64>, f64, Matrix), BootstrapError>> = (0..replicates)
        .into_par_iter()
        .map(|j| {
            let mult = resample_multiplicities(samples.len(), seed, j as u64);
            let rep = replicate_estimate(samples, &mult)
                .map_err(|source| replicate_error(j, source))?;
            let e_j = subspace_error(&base_part, &rep).map_err(|source| replicate_error(j, source))?;
            let w1_cols = Matrix::from_columns(
                &(0..stored_cols)
                    .map(|c| rep.eigenvectors().column(c))
                    .collect::<Vec<_>>(),
            );
            Ok((rep.eigenvalues().to_vec(), e_j, w1_cols))
        })
        .collect();

    let mut eigenvalue_replicates = Vec::with_capacity(replicates);
    let mut subspace_errors = Vec::with_capacity(replicates);
    let mut replicate_w1_first2 = Vec::with_capacity(replicates);
    for r in results {
        let (spectrum, e_j, w1) = r?;
        eigenvalue_replicates.push(spectrum);
        subspace_errors.push(e_j);
        replicate_w1_first2.push(w1);
    }

    let alpha = 1.0 - level;
    let (p_lo, p_hi) = (alpha / 2.0, 1.0 - alpha / 2.0);
    let mut eigenvalue_lo = Vec::with_capacity(m);
    let mut eigenvalue_hi = Vec::with_capacity(m);
    for k in 0..m {
        let mut col: Vec<f64> = eigenvalue_replicates.iter().map(|r| r[k]).collect();
        col.sort_by(|a, b| a.partial_cmp(b).unwrap());
        eigenvalue_lo.push(percentile(&col, p_lo));
        eigenvalue_hi.push(percentile(&col, p_hi));
    }

    let mut sorted_errors = subspace_errors.clone();
    sorted_errors.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let subspace_error_mean = subspace_errors.iter().sum::<f64>() / replicates as f64;

    Ok(BootstrapSummary {
        replicates,
        level,
        eigenvalue_lo,
        eigenvalue_hi,
        eigenvalue_replicates,
        subspace_errors,
        subspace_error_mean,
        subspace_error_lo: percentile(&sorted_errors, p_lo),
        subspace_error_hi: percentile(&sorted_errors, p_hi),
        replicate_w1_first2,
    })
}

fn replicate_error(replicate: usize, source: BootstrapError) -> BootstrapError {
    match source {
        BootstrapError::Subspace(source) => BootstrapError::Replicate { replicate, source },
        other => other,
    }
}

/// Empirical percentile with linear interpolation between order statistics.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = p.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (h - lo as f64)
}

/// One row of a bootstrap summary-plot cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct CloudRow {
    pub sample: usize,
    pub replicate: usize,
    /// Active coordinates under the replicate's eigenvectors
    /// (`min(2, n)` components).
    pub y: Vec<f64>,
    pub f: f64,
}

/// Summary-plot cloud across seeded bootstrap replicates: each sample
/// point becomes a cluster of `cloud_replicates` projected positions, so
/// small clusters mean a stable estimated subspace.
pub fn replicate_summary_cloud(
    samples: &GradientSampleSet,
    part: &SubspacePartition,
    cloud_replicates: usize,
    points: &[Vec<f64>],
    values: &[f64],
    seed: u64,
) -> Result<Vec<CloudRow>, BootstrapError> {
    let weights: Vec<Vec<usize>> = (0..cloud_replicates)
        .map(|j| resample_multiplicities(samples.len(), seed, j as u64))
        .collect();
    replicate_summary_cloud_with(samples, part, &weights, points, values)
}

/// Cloud from caller-supplied resamples (one multiplicity vector per
/// replicate). [`replicate_summary_cloud`] generates the resamples from a
/// seed; this entry point exists for forced resamples.
pub fn replicate_summary_cloud_with(
    samples: &GradientSampleSet,
    part: &SubspacePartition,
    replicate_weights: &[Vec<usize>],
    points: &[Vec<f64>],
    values: &[f64],
) -> Result<Vec<CloudRow>, BootstrapError> {
    if replicate_weights.is_empty() {
        return Err(BootstrapError::InvalidSetting(
            "need at least 1 cloud replicate".to_owned(),
        ));
    }
    if points.len() != values.len() {
        return Err(BootstrapError::InvalidSetting(format!(
            "{} points vs {} values",
            points.len(),
            values.len()
        )));
    }
    let cols = part.active_dim().min(2);

    let mut projections = Vec::with_capacity(replicate_weights.len());
    for (j, mult) in replicate_weights.iter().enumerate() {
        let rep = replicate_estimate(samples, mult).map_err(|e| replicate_error(j, e))?;
        projections.push(Matrix::from_columns(
            &(0..cols)
                .map(|c| rep.eigenvectors().column(c))
                .collect::<Vec<_>>(),
        ));
    }

    let mut rows = Vec::with_capacity(points.len() * projections.len());
    for (sample, (x, &f)) in points.iter().zip(values).enumerate() {
        for (replicate, w) in projections.iter().enumerate() {
            rows.push(CloudRow {
                sample,
                replicate,
                y: w.transpose_matvec(x),
                f,
            });
        }
    }
    Ok(rows)
}
