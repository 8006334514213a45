//! Physical parameter spaces and the map to the normalized hypercube.
//!
//! A [`ParameterSpace`] is an ordered list of named, bounded physical
//! parameters. Each parameter is either linear or log-scaled; the space
//! maps physical values invertibly onto `[-1, 1]^m`, where all sampling
//! and sensitivity analysis happens under the uniform weight.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::CounterRng;

#[derive(Debug, Error)]
pub enum SpaceError {
    #[error("parameter {name}: value {value} outside [{lower}, {upper}]")]
    OutOfBounds {
        name: String,
        value: f64,
        lower: f64,
        upper: f64,
    },
    #[error("parameter {name}: log transform requires a positive value, got {value}")]
    NonPositiveLogInput { name: String, value: f64 },
    #[error("parameter {name}: bounds must satisfy lower < upper, got [{lower}, {upper}]")]
    InvalidBounds {
        name: String,
        lower: f64,
        upper: f64,
    },
    #[error("parameter {name}: log transform requires lower bound > 0, got {lower}")]
    NonPositiveLogBound { name: String, lower: f64 },
    #[error("duplicate parameter name {0:?}")]
    DuplicateName(String),
    #[error("a parameter space needs at least one parameter")]
    Empty,
    #[error("expected {expected} components, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unknown parameter-space preset {0:?}")]
    UnknownPreset(String),
    #[error("invalid parameter-space JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Scale on which a parameter is normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    Linear,
    /// Natural-log scale, for parameters spanning orders of magnitude.
    #[serde(rename = "log")]
    NaturalLog,
}

/// One named physical parameter with inclusive bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterDef {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    #[serde(default = "default_transform")]
    pub transform: Transform,
}

fn default_transform() -> Transform {
    Transform::Linear
}

impl ParameterDef {
    pub fn linear(name: &str, lower: f64, upper: f64) -> Self {
        ParameterDef {
            name: name.to_owned(),
            lower,
            upper,
            transform: Transform::Linear,
        }
    }

    pub fn log(name: &str, lower: f64, upper: f64) -> Self {
        ParameterDef {
            name: name.to_owned(),
            lower,
            upper,
            transform: Transform::NaturalLog,
        }
    }

    fn validate(&self) -> Result<(), SpaceError> {
        if !(self.lower < self.upper) || !self.lower.is_finite() || !self.upper.is_finite() {
            return Err(SpaceError::InvalidBounds {
                name: self.name.clone(),
                lower: self.lower,
                upper: self.upper,
            });
        }
        if self.transform == Transform::NaturalLog && self.lower <= 0.0 {
            return Err(SpaceError::NonPositiveLogBound {
                name: self.name.clone(),
                lower: self.lower,
            });
        }
        Ok(())
    }

    /// Bounds in transformed coordinates (log scale for log parameters).
    fn scaled_bounds(&self) -> (f64, f64) {
        match self.transform {
            Transform::Linear => (self.lower, self.upper),
            Transform::NaturalLog => (self.lower.ln(), self.upper.ln()),
        }
    }
}

/// Name of the built-in parameter space for a typical 2 cm² crystalline
/// silicon cell driven by the single-diode model.
pub const DIODE_SI_2CM2: &str = "diode-si-2cm2";

/// Ordered set of parameters; the domain of every model in this crate.
///
/// Immutable after construction and safe to share across threads.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParameterSpace {
    params: Vec<ParameterDef>,
}

#[derive(Deserialize)]
struct SpaceFile {
    params: Vec<ParameterDef>,
}

impl ParameterSpace {
    pub fn new(params: Vec<ParameterDef>) -> Result<Self, SpaceError> {
        if params.is_empty() {
            return Err(SpaceError::Empty);
        }
        for p in &params {
            p.validate()?;
        }
        for (i, p) in params.iter().enumerate() {
            if params[..i].iter().any(|q| q.name == p.name) {
                return Err(SpaceError::DuplicateName(p.name.clone()));
            }
        }
        Ok(ParameterSpace { params })
    }

    /// Look up a built-in space by name. `"diode-si-2cm2"` is the five
    /// parameter single-diode cell space with `Is` on a log scale.
    pub fn preset(name: &str) -> Result<Self, SpaceError> {
        match name {
            DIODE_SI_2CM2 => Ok(diode_si_2cm2()),
            other => Err(SpaceError::UnknownPreset(other.to_owned())),
        }
    }

    /// Parse a `{"params": [{"name", "lower", "upper", "transform"}, ...]}`
    /// document. `transform` is `"linear"` (default) or `"log"`.
    pub fn from_json_str(text: &str) -> Result<Self, SpaceError> {
        let raw: SpaceFile = serde_json::from_str(text)?;
        Self::new(raw.params)
    }

    pub fn from_json_file(path: &Path) -> Result<Self, SpaceError> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn dim(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[ParameterDef] {
        &self.params
    }

    pub fn names(&self) -> Vec<&str> {
        self.params.iter().map(|p| p.name.as_str()).collect()
    }

    /// Map a physical point into `[-1, 1]^m`.
    ///
    /// Component `i` becomes `2 (t(p_i) - L_i) / (U_i - L_i) - 1` where `t`
    /// is identity or natural log and `L, U` are the transformed bounds.
    /// Values exactly at a bound map to exactly ±1.
    pub fn normalize(&self, physical: &[f64]) -> Result<Vec<f64>, SpaceError> {
        self.check_dim(physical.len())?;
        let mut out = Vec::with_capacity(self.dim());
        for (p, &value) in self.params.iter().zip(physical) {
            if p.transform == Transform::NaturalLog && value <= 0.0 {
                return Err(SpaceError::NonPositiveLogInput {
                    name: p.name.clone(),
                    value,
                });
            }
            if !(value >= p.lower && value <= p.upper) {
                return Err(SpaceError::OutOfBounds {
                    name: p.name.clone(),
                    value,
                    lower: p.lower,
                    upper: p.upper,
                });
            }
            let t = match p.transform {
                Transform::Linear => value,
                Transform::NaturalLog => value.ln(),
            };
            let (lo, hi) = p.scaled_bounds();
            out.push(2.0 * (t - lo) / (hi - lo) - 1.0);
        }
        Ok(out)
    }

    /// Inverse of [`normalize`](Self::normalize). `x` must lie in `[-1, 1]^m`;
    /// components at ±1 map to exactly the physical bounds (up to the
    /// exp/ln round trip for log parameters).
    pub fn denormalize(&self, x: &[f64]) -> Result<Vec<f64>, SpaceError> {
        self.check_dim(x.len())?;
        let mut out = Vec::with_capacity(self.dim());
        for (p, &xi) in self.params.iter().zip(x) {
            if !(-1.0..=1.0).contains(&xi) {
                return Err(SpaceError::OutOfBounds {
                    name: p.name.clone(),
                    value: xi,
                    lower: -1.0,
                    upper: 1.0,
                });
            }
            let (lo, hi) = p.scaled_bounds();
            // Barycentric form is exact at both endpoints.
            let t = 0.5 * ((1.0 - xi) * lo + (1.0 + xi) * hi);
            out.push(match p.transform {
                Transform::Linear => t,
                Transform::NaturalLog => t.exp(),
            });
        }
        Ok(out)
    }

    /// Draw `count` i.i.d. points uniform on `[-1, 1]^m`.
    ///
    /// Point `i` is a pure function of `(seed, i)`, so the sequence does not
    /// depend on batch size or on how work is split across threads.
    pub fn sample_uniform(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let rng = CounterRng::new(seed);
        (0..count)
            .map(|i| {
                (0..self.dim())
                    .map(|j| rng.symmetric_unit(i as u64, j as u64))
                    .collect()
            })
            .collect()
    }

    fn check_dim(&self, got: usize) -> Result<(), SpaceError> {
        if got != self.dim() {
            return Err(SpaceError::DimensionMismatch {
                expected: self.dim(),
                got,
            });
        }
        Ok(())
    }
}

/// The built-in single-diode cell space (see [`DIODE_SI_2CM2`]).
///
/// Ranges cover typical 2 cm² crystalline silicon cells; the reverse
/// saturation current spans four orders of magnitude and is normalized on
/// its natural-log scale (ln bounds ≈ -24.54 and -15.32).
pub fn diode_si_2cm2() -> ParameterSpace {
    ParameterSpace::new(vec![
        ParameterDef::linear("Isc", 0.05989, 0.23958),
        ParameterDef::log("Is", 2.2e-11, 2.2e-7),
        ParameterDef::linear("n", 1.0, 2.0),
        ParameterDef::linear("Rs", 0.16625, 0.66500),
        ParameterDef::linear("Rp", 93.75, 375.00),
    ])
    .expect("built-in space is valid")
}
