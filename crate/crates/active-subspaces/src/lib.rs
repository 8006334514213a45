//! Discover low-dimensional structure in parameterized scalar models.
//!
//! Given a model `f : [-1, 1]^m -> R`, this crate estimates the *active
//! subspace*: the span of the dominant eigenvectors of the average
//! gradient outer product `C = E[(∇f)(∇f)ᵀ]`. Perturbations along those
//! directions change the output more, on average, than perturbations
//! orthogonal to them, so a large eigenvalue gap licenses replacing an
//! `m`-dimensional parameter study with one in a handful of linear
//! combinations of the inputs.
//!
//! The toolkit around that core:
//!
//! - [`space`]: named physical parameters with linear or log scaling and
//!   the invertible map to the normalized hypercube;
//! - [`diode`]: the single-diode solar cell model (implicit I-V solve and
//!   maximum power), the built-in reference problem;
//! - [`gradients`]: finite-difference gradient sampling and a local
//!   linear-model fallback, persisted as CSV sample sets;
//! - [`subspace`]: the Monte Carlo `C` estimate, eigendecomposition, gap
//!   diagnostics, and sufficient-summary-plot projections;
//! - [`bootstrap`]: nonparametric resampling of the gradient set to put
//!   intervals on eigenvalues and a distance on the estimated subspace;
//! - [`sobol`]: polynomial-chaos Sobol' indices from tensor Gauss-Legendre
//!   quadrature, the classical variance-based cross-check;
//! - [`study`]: the end-to-end pipeline behind the `asub` binary, writing
//!   reproducible CSV/JSON artifacts.
//!
//! Everything is deterministic given a seed: sampling uses counter-based
//! random streams ([`rng`]), reductions run in fixed order, and artifact
//! floats are formatted with fixed width, so identical configurations
//! produce byte-identical outputs.

pub mod bootstrap;
pub mod diode;
pub mod gradients;
pub mod jsonw;
pub mod linalg;
pub mod model;
pub mod numfmt;
pub mod rng;
pub mod sobol;
pub mod space;
pub mod study;
pub mod subspace;

pub use diode::{DiodeConstants, DiodeParams, IVPoint, PmaxResult};
pub use gradients::{build_sample_set, fd_gradient, local_linear_gradient, GradientSampleSet};
pub use model::{CountingModel, DiodePmaxModel, FnModel, ScalarModel, SubprocessModel};
pub use space::{diode_si_2cm2, ParameterDef, ParameterSpace, Transform};
pub use subspace::{estimate_c_matrix, suggest_gap, SubspaceEstimate, SubspacePartition};
