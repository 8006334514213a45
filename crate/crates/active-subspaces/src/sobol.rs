//! Variance-based sensitivity indices from a polynomial chaos expansion.
//!
//! The model is projected onto normalized multivariate Legendre
//! polynomials (orthonormal under the uniform weight on `[-1, 1]^m`) with
//! coefficients computed by a tensor-product Gauss-Legendre rule. Squared
//! coefficients partition the variance, which yields the Sobol' first-order
//! and total sensitivity indices directly: no extra model evaluations
//! beyond the `q^m` quadrature grid, which is evaluated once and cached.

use thiserror::Error;

use crate::model::{ModelError, ScalarModel};

#[derive(Debug, Error)]
pub enum SobolError {
    #[error("model failure at grid point {index}: {source}")]
    Model {
        index: usize,
        #[source]
        source: ModelError,
    },
    #[error("tensor grid needs {points} evaluations, over the cap of {cap}")]
    BudgetExceeded { points: u128, cap: u64 },
    #[error("model variance is zero; sensitivity indices are undefined")]
    ZeroVariance,
    #[error("need q >= degree + 1 quadrature points per dimension (q = {q}, degree = {degree})")]
    InsufficientQuadrature { q: usize, degree: usize },
}

/// Default cap on tensor-grid evaluations; `q^m` grows fast.
pub const DEFAULT_EVAL_CAP: u64 = 1_000_000;

/// `q`-point Gauss-Legendre nodes and weights on `[-1, 1]`.
///
/// Weights sum to 2 (the classical convention); the rule integrates
/// polynomials of degree `2q - 1` exactly. Nodes come from Newton
/// iteration on the Legendre recurrence with Chebyshev initial guesses.
pub fn gauss_legendre_nodes(points_per_dim: usize) -> (Vec<f64>, Vec<f64>) {
    let q = points_per_dim;
    assert!((1..=64).contains(&q), "supported range is 1..=64 points");
    let mut nodes = vec![0.0; q];
    let mut weights = vec![0.0; q];
    for k in 0..q {
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (q as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, p_prev) = legendre_p_pair(q, x);
            // P'_q(x) = q (x P_q - P_{q-1}) / (x² - 1)
            dp = q as f64 * (x * p - p_prev) / (x * x - 1.0);
            let step = p / dp;
            x -= step;
            if step.abs() <= 1e-15 {
                break;
            }
        }
        // k counts from the node nearest +1 downwards.
        nodes[q - 1 - k] = x;
        weights[q - 1 - k] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    if q == 1 {
        nodes[0] = 0.0;
        weights[0] = 2.0;
    }
    (nodes, weights)
}

/// `(P_k(x), P_{k-1}(x))` by the three-term recurrence.
fn legendre_p_pair(k: usize, x: f64) -> (f64, f64) {
    if k == 0 {
        return (1.0, 0.0);
    }
    let mut p_prev = 1.0;
    let mut p = x;
    for j in 1..k {
        let j = j as f64;
        let p_next = ((2.0 * j + 1.0) * x * p - j * p_prev) / (j + 1.0);
        p_prev = p;
        p = p_next;
    }
    (p, p_prev)
}

/// Normalized Legendre polynomial `√(2k+1) · P_k(x)`: unit norm under the
/// uniform probability weight on `[-1, 1]`.
pub fn legendre_eval(degree: usize, x: f64) -> f64 {
    ((2 * degree + 1) as f64).sqrt() * legendre_p_pair(degree, x).0
}

/// Polynomial chaos expansion in the normalized Legendre basis.
#[derive(Debug, Clone)]
pub struct PceExpansion {
    dim: usize,
    max_degree: usize,
    /// `(multi-index, coefficient)` pairs, graded-lexicographic order; the
    /// all-zero index comes first and carries the mean.
    terms: Vec<(Vec<usize>, f64)>,
}

impl PceExpansion {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn terms(&self) -> &[(Vec<usize>, f64)] {
        &self.terms
    }

    /// The coefficient of the constant term: the quadrature estimate of
    /// the model mean.
    pub fn mean(&self) -> f64 {
        self.terms[0].1
    }

    /// Sum of squared non-constant coefficients: the variance captured by
    /// the truncated expansion (Parseval).
    pub fn variance(&self) -> f64 {
        self.terms[1..].iter().map(|(_, c)| c * c).sum()
    }

    /// Evaluate the expansion at a point.
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim);
        self.terms
            .iter()
            .map(|(alpha, c)| {
                c * alpha
                    .iter()
                    .zip(x)
                    .map(|(&k, &xi)| legendre_eval(k, xi))
                    .product::<f64>()
            })
            .sum()
    }
}

/// Sobol' sensitivity indices derived from a PCE.
#[derive(Debug, Clone, PartialEq)]
pub struct SobolResult {
    /// Fraction of variance from each input alone.
    pub first_order: Vec<f64>,
    /// Fraction of variance from any term involving each input.
    pub total: Vec<f64>,
    pub variance: f64,
    pub mean: f64,
}

/// All multi-indices in `ℕ^dim` with total degree ≤ `max_degree`,
/// graded-lexicographic.
fn multi_indices(dim: usize, max_degree: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = vec![0usize; dim];
    for degree in 0..=max_degree {
        fill_indices(dim, degree, 0, &mut current, &mut out);
    }
    out
}

fn fill_indices(
    dim: usize,
    remaining: usize,
    pos: usize,
    current: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    if pos == dim - 1 {
        current[pos] = remaining;
        out.push(current.clone());
        return;
    }
    for k in (0..=remaining).rev() {
        current[pos] = k;
        fill_indices(dim, remaining - k, pos + 1, current, out);
    }
    current[pos] = 0;
}

/// Fit a total-degree PCE by tensor-product quadrature projection with the
/// default evaluation cap.
pub fn fit_pce<M: ScalarModel + ?Sized>(
    model: &M,
    dim: usize,
    max_degree: usize,
    points_per_dim: usize,
) -> Result<PceExpansion, SobolError> {
    fit_pce_capped(model, dim, max_degree, points_per_dim, DEFAULT_EVAL_CAP)
}

/// [`fit_pce`] with an explicit cap on `q^m` model evaluations.
///
/// Coefficients are `c_α = Σ_g w_g f(x_g) Ψ_α(x_g)` over the tensor grid,
/// with the grid evaluated exactly once. `q ≥ degree + 1` so projection
/// integrals of polynomials up to the truncation degree are exact.
pub fn fit_pce_capped<M: ScalarModel + ?Sized>(
    model: &M,
    dim: usize,
    max_degree: usize,
    points_per_dim: usize,
    eval_cap: u64,
) -> Result<PceExpansion, SobolError> {
    let q = points_per_dim;
    if q < max_degree + 1 {
        return Err(SobolError::InsufficientQuadrature {
            q,
            degree: max_degree,
        });
    }
    let grid_size = (q as u128).pow(dim as u32);
    if grid_size > eval_cap as u128 {
        return Err(SobolError::BudgetExceeded {
            points: grid_size,
            cap: eval_cap,
        });
    }
    let grid_size = grid_size as usize;

    let (nodes, weights) = gauss_legendre_nodes(q);
    // Probability weights for the uniform density on [-1, 1].
    let wnorm: Vec<f64> = weights.iter().map(|w| w / 2.0).collect();
    // psi[j][k] = Ψ_k(node_j), shared across dimensions.
    let psi: Vec<Vec<f64>> = nodes
        .iter()
        .map(|&x| (0..=max_degree).map(|k| legendre_eval(k, x)).collect())
        .collect();

    // Enumerate the tensor grid in odometer order; digits[g] are the
    // per-dimension node indices of grid point g.
    let mut digits = vec![0usize; dim];
    let mut grid_points = Vec::with_capacity(grid_size);
    let mut grid_digits = Vec::with_capacity(grid_size);
    let mut grid_weight = Vec::with_capacity(grid_size);
    loop {
        grid_points.push(digits.iter().map(|&d| nodes[d]).collect::<Vec<f64>>());
        grid_weight.push(digits.iter().map(|&d| wnorm[d]).product::<f64>());
        grid_digits.push(digits.clone());
        let mut pos = dim;
        loop {
            if pos == 0 {
                break;
            }
            pos -= 1;
            digits[pos] += 1;
            if digits[pos] < q {
                break;
            }
            digits[pos] = 0;
            if pos == 0 {
                pos = usize::MAX;
                break;
            }
        }
        if pos == usize::MAX || grid_points.len() == grid_size {
            break;
        }
    }
    debug_assert_eq!(grid_points.len(), grid_size);

    let values = model
        .eval_batch(&grid_points)
        .map_err(|e| SobolError::Model {
            index: e.index().unwrap_or(0),
            source: e,
        })?;

    let alphas = multi_indices(dim, max_degree);
    let mut terms = Vec::with_capacity(alphas.len());
    for alpha in alphas {
        // Fixed grid order makes each coefficient sum deterministic.
        let mut c = 0.0;
        for g in 0..grid_size {
            let mut basis = 1.0;
            for (d, &k) in alpha.iter().enumerate() {
                basis *= psi[grid_digits[g][d]][k];
            }
            c += grid_weight[g] * values[g] * basis;
        }
        terms.push((alpha, c));
    }

    Ok(PceExpansion {
        dim,
        max_degree,
        terms,
    })
}

/// Sobol' first-order and total indices from the squared PCE coefficients.
pub fn sobol_indices(pce: &PceExpansion) -> Result<SobolResult, SobolError> {
    let mean = pce.mean();
    let variance = pce.variance();
    // Coefficients at the quadrature noise floor mean a constant model.
    if variance <= (1e-14 * mean.abs().max(1.0)).powi(2) {
        return Err(SobolError::ZeroVariance);
    }

    let m = pce.dim();
    let mut first_order = vec![0.0; m];
    let mut total = vec![0.0; m];
    for (alpha, c) in &pce.terms()[1..] {
        let c2 = c * c;
        let active: Vec<usize> = (0..m).filter(|&i| alpha[i] > 0).collect();
        for &i in &active {
            total[i] += c2;
        }
        if active.len() == 1 {
            first_order[active[0]] += c2;
        }
    }
    for i in 0..m {
        first_order[i] /= variance;
        total[i] /= variance;
    }
    Ok(SobolResult {
        first_order,
        total,
        variance,
        mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CountingModel, FnModel};

    #[test]
    fn quadrature_small_rules() {
        let (n1, w1) = gauss_legendre_nodes(1);
        assert_eq!(n1, vec![0.0]);
        assert_eq!(w1, vec![2.0]);
        let (n2, w2) = gauss_legendre_nodes(2);
        let r = 1.0 / 3f64.sqrt();
        assert!((n2[0] + r).abs() < 1e-15 && (n2[1] - r).abs() < 1e-15);
        assert!((w2[0] - 1.0).abs() < 1e-15 && (w2[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn quadrature_weights_sum_to_two() {
        for q in 1..=32 {
            let (_, w) = gauss_legendre_nodes(q);
            let sum: f64 = w.iter().sum();
            assert!((sum - 2.0).abs() < 1e-13, "q = {q}: {sum}");
        }
    }

    #[test]
    fn q8_integrates_degree_14_exactly() {
        let (nodes, weights) = gauss_legendre_nodes(8);
        // ∫ x^14 dx / 2 over [-1, 1] = 1/15.
        let got: f64 = nodes
            .iter()
            .zip(&weights)
            .map(|(&x, &w)| 0.5 * w * x.powi(14))
            .sum();
        assert!((got - 1.0 / 15.0).abs() <= 1e-14, "{got}");
    }

    #[test]
    fn normalized_legendre_values() {
        assert_eq!(legendre_eval(0, 0.3), 1.0);
        assert!((legendre_eval(1, 1.0) - 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn normalized_legendre_orthonormal_under_quadrature() {
        let (nodes, weights) = gauss_legendre_nodes(16);
        for j in 0..=10usize {
            for k in 0..=10usize {
                let inner: f64 = nodes
                    .iter()
                    .zip(&weights)
                    .map(|(&x, &w)| 0.5 * w * legendre_eval(j, x) * legendre_eval(k, x))
                    .sum();
                let expect = if j == k { 1.0 } else { 0.0 };
                assert!((inner - expect).abs() <= 1e-12, "({j},{k}) -> {inner}");
            }
        }
    }

    #[test]
    fn constant_model_expansion() {
        let model = FnModel::new(3, |_| 3.0);
        let pce = fit_pce(&model, 3, 2, 4).unwrap();
        assert!((pce.mean() - 3.0).abs() <= 1e-14);
        for (alpha, c) in &pce.terms()[1..] {
            assert!(c.abs() <= 1e-14, "c{alpha:?} = {c}");
        }
        assert!(matches!(sobol_indices(&pce), Err(SobolError::ZeroVariance)));
    }

    #[test]
    fn linear_model_coefficients() {
        let model = FnModel::new(5, |x: &[f64]| x[0] + 2.0 * x[1]);
        let pce = fit_pce(&model, 5, 2, 4).unwrap();
        let inv_sqrt3 = 1.0 / 3f64.sqrt();
        for (alpha, c) in pce.terms() {
            let degree: usize = alpha.iter().sum();
            if degree == 0 {
                assert!(c.abs() <= 1e-14);
            } else if alpha[0] == 1 && degree == 1 {
                assert!((c - inv_sqrt3).abs() <= 1e-13, "c_x1 = {c}");
            } else if alpha[1] == 1 && degree == 1 {
                assert!((c - 2.0 * inv_sqrt3).abs() <= 1e-13, "c_x2 = {c}");
            } else {
                assert!(c.abs() <= 1e-13, "c{alpha:?} = {c}");
            }
        }
    }

    #[test]
    fn tensor_grid_evaluation_count() {
        let model = CountingModel::new(FnModel::new(5, |x: &[f64]| x.iter().sum()));
        fit_pce(&model, 5, 5, 8).unwrap();
        assert_eq!(model.count(), 32_768);
    }

    #[test]
    fn additive_model_indices() {
        let model = FnModel::new(5, |x: &[f64]| x[0] + 2.0 * x[1]);
        let pce = fit_pce(&model, 5, 3, 4).unwrap();
        let s = sobol_indices(&pce).unwrap();
        assert!((s.variance - 5.0 / 3.0).abs() <= 1e-12);
        let expect = [0.2, 0.8, 0.0, 0.0, 0.0];
        for i in 0..5 {
            assert!((s.first_order[i] - expect[i]).abs() <= 1e-10, "S{i}");
            assert!((s.total[i] - expect[i]).abs() <= 1e-10, "T{i}");
        }
    }

    #[test]
    fn polynomial_expansion_is_reproduced_exactly() {
        // Build f from known coefficients, refit, compare.
        let coeffs: Vec<(Vec<usize>, f64)> = vec![
            (vec![0, 0, 0], 1.5),
            (vec![1, 0, 0], -0.7),
            (vec![0, 2, 0], 0.4),
            (vec![1, 1, 1], 0.25),
            (vec![3, 0, 0], -0.1),
        ];
        let cref = coeffs.clone();
        let model = FnModel::new(3, move |x: &[f64]| {
            cref.iter()
                .map(|(a, c)| {
                    c * a
                        .iter()
                        .zip(x)
                        .map(|(&k, &xi)| legendre_eval(k, xi))
                        .product::<f64>()
                })
                .sum()
        });
        let pce = fit_pce(&model, 3, 3, 5).unwrap();
        for (alpha, c) in pce.terms() {
            let expect = coeffs
                .iter()
                .find(|(a, _)| a == alpha)
                .map_or(0.0, |(_, c)| *c);
            assert!((c - expect).abs() <= 1e-12, "c{alpha:?} = {c} vs {expect}");
        }
        // Round trip through evaluate at a few points.
        for x in [[0.3, -0.5, 0.8], [0.0, 0.0, 0.0], [-0.9, 0.1, 0.2]] {
            assert!((pce.evaluate(&x) - model.eval(&x).unwrap()).abs() <= 1e-12);
        }
    }

    #[test]
    fn first_order_never_exceeds_total() {
        let model = FnModel::new(3, |x: &[f64]| x[0] * x[1] + 0.3 * x[2] + x[0].powi(2));
        let pce = fit_pce(&model, 3, 4, 6).unwrap();
        let s = sobol_indices(&pce).unwrap();
        for i in 0..3 {
            assert!(s.first_order[i] <= s.total[i] + 1e-12);
            assert!(s.first_order[i] >= 0.0 && s.total[i] <= 1.0 + 1e-10);
        }
        // Interaction present: x0 total strictly above first-order.
        assert!(s.total[0] > s.first_order[0] + 1e-3);
    }

    #[test]
    fn budget_and_quadrature_guards() {
        let model = FnModel::new(7, |_| 0.0);
        assert!(matches!(
            fit_pce(&model, 7, 2, 10),
            Err(SobolError::BudgetExceeded { .. })
        ));
        assert!(matches!(
            fit_pce(&model, 7, 4, 4),
            Err(SobolError::InsufficientQuadrature { .. })
        ));
    }

    #[test]
    fn multi_index_count_matches_binomial() {
        // C(m + p, p) total-degree indices.
        assert_eq!(multi_indices(5, 5).len(), 252);
        assert_eq!(multi_indices(3, 2).len(), 10);
        assert_eq!(multi_indices(1, 4).len(), 5);
    }
}
