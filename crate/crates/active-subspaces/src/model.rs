//! Scalar models over the normalized hypercube.
//!
//! A [`ScalarModel`] maps a point in `[-1, 1]^m` to one real output. The
//! crate ships two implementations: the built-in single-diode maximum-power
//! model, and a line-protocol subprocess wrapper for models written in any
//! language. Wrap either in a [`CountingModel`] to audit how many
//! evaluations an analysis actually spends.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;
use thiserror::Error;

use crate::diode::{p_max, DiodeConstants, DiodeParams};
use crate::numfmt::g17;
use crate::space::ParameterSpace;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model evaluation failed at point {index}: {reason}")]
    Failure { index: usize, reason: String },
    #[error("model child exited with status {status} at point {index}; stderr: {stderr:?}")]
    ChildFailure {
        status: i32,
        index: usize,
        stderr: String,
    },
    #[error("unparsable model output at line {index}: {line:?}")]
    ParseFailure { index: usize, line: String },
    #[error("model produced {got} outputs for {expected} input points")]
    ShortOutput { got: usize, expected: usize },
    #[error("model i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl ModelError {
    /// Re-attach the batch index where the failure occurred.
    pub fn at(self, index: usize) -> ModelError {
        match self {
            ModelError::Failure { reason, .. } => ModelError::Failure { index, reason },
            other => other,
        }
    }

    /// Index of the failing point, when the error pins one down.
    pub fn index(&self) -> Option<usize> {
        match self {
            ModelError::Failure { index, .. }
            | ModelError::ChildFailure { index, .. }
            | ModelError::ParseFailure { index, .. } => Some(*index),
            _ => None,
        }
    }
}

/// A deterministic scalar function of a normalized input point.
///
/// Implementations must be thread-safe; analyses may evaluate batches from
/// parallel workers. Results must not depend on evaluation order.
pub trait ScalarModel: Sync {
    /// Input dimension `m`.
    fn dim(&self) -> usize;

    /// A short identifier recorded in artifact metadata.
    fn id(&self) -> String {
        "anonymous".to_owned()
    }

    fn eval(&self, x: &[f64]) -> Result<f64, ModelError>;

    /// Evaluate many points. The default maps [`eval`](Self::eval) in
    /// order; implementations may parallelize or batch over a pipe, but
    /// output `k` must always correspond to input `k`.
    fn eval_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>, ModelError> {
        xs.iter()
            .enumerate()
            .map(|(k, x)| self.eval(x).map_err(|e| e.at(k)))
            .collect()
    }
}

impl<M: ScalarModel + ?Sized> ScalarModel for &M {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn id(&self) -> String {
        (**self).id()
    }
    fn eval(&self, x: &[f64]) -> Result<f64, ModelError> {
        (**self).eval(x)
    }
    fn eval_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>, ModelError> {
        (**self).eval_batch(xs)
    }
}

/// Adapter turning a plain closure into a model; handy for tests and for
/// analytic functions.
pub struct FnModel<F> {
    dim: usize,
    name: String,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FnModel<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnModel {
            dim,
            name: "closure".to_owned(),
            f,
        }
    }

    pub fn named(dim: usize, name: &str, f: F) -> Self {
        FnModel {
            dim,
            name: name.to_owned(),
            f,
        }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> ScalarModel for FnModel<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn id(&self) -> String {
        self.name.clone()
    }
    fn eval(&self, x: &[f64]) -> Result<f64, ModelError> {
        Ok((self.f)(x))
    }
}

/// Counts evaluations flowing through an inner model.
pub struct CountingModel<M> {
    inner: M,
    count: AtomicU64,
}

impl<M: ScalarModel> CountingModel<M> {
    pub fn new(inner: M) -> Self {
        CountingModel {
            inner,
            count: AtomicU64::new(0),
        }
    }

    /// Total points evaluated so far.
    pub fn count(&self) -> u64 {
        self.count.load(Ordering::Relaxed)
    }

    pub fn into_inner(self) -> M {
        self.inner
    }
}

impl<M: ScalarModel> ScalarModel for CountingModel<M> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn id(&self) -> String {
        self.inner.id()
    }
    fn eval(&self, x: &[f64]) -> Result<f64, ModelError> {
        self.count.fetch_add(1, Ordering::Relaxed);
        self.inner.eval(x)
    }
    fn eval_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>, ModelError> {
        self.count.fetch_add(xs.len() as u64, Ordering::Relaxed);
        self.inner.eval_batch(xs)
    }
}

/// Maximum power of the single-diode cell as a function of the normalized
/// inputs of a parameter space ordered `(Isc, Is, n, Rs, Rp)`.
pub struct DiodePmaxModel {
    space: ParameterSpace,
    constants: DiodeConstants,
}

impl DiodePmaxModel {
    /// The built-in model over the `diode-si-2cm2` space at 25 °C.
    pub fn builtin() -> Self {
        DiodePmaxModel {
            space: crate::space::diode_si_2cm2(),
            constants: DiodeConstants::default(),
        }
    }

    pub fn new(space: ParameterSpace, constants: DiodeConstants) -> Self {
        assert_eq!(space.dim(), 5, "the diode model takes 5 parameters");
        DiodePmaxModel { space, constants }
    }

    pub fn space(&self) -> &ParameterSpace {
        &self.space
    }
}

impl ScalarModel for DiodePmaxModel {
    fn dim(&self) -> usize {
        5
    }

    fn id(&self) -> String {
        crate::space::DIODE_SI_2CM2.to_owned()
    }

    fn eval(&self, x: &[f64]) -> Result<f64, ModelError> {
        let fail = |reason: String| ModelError::Failure { index: 0, reason };
        let physical = self.space.denormalize(x).map_err(|e| fail(e.to_string()))?;
        let params = DiodeParams::from_slice(&physical).map_err(|e| fail(e.to_string()))?;
        let result = p_max(&params, &self.constants).map_err(|e| fail(e.to_string()))?;
        Ok(result.p_max)
    }

    fn eval_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>, ModelError> {
        // Pure per-point work; spread across threads, keep input order.
        let results: Vec<Result<f64, ModelError>> =
            xs.par_iter().map(|x| self.eval(x)).collect();
        results
            .into_iter()
            .enumerate()
            .map(|(k, r)| r.map_err(|e| e.at(k)))
            .collect()
    }
}

/// Maximum number of stderr bytes kept when a child fails.
const STDERR_EXCERPT: usize = 512;

/// A model implemented by an external executable speaking a line protocol:
/// one normalized point per input line (space-separated decimals), one
/// decimal output per line, in order. The child reads until end of input,
/// so it may buffer freely; a fresh child is spawned per batch.
pub struct SubprocessModel {
    program: PathBuf,
    args: Vec<String>,
    dim: usize,
}

impl SubprocessModel {
    pub fn new(program: impl Into<PathBuf>, args: Vec<String>, dim: usize) -> Self {
        SubprocessModel {
            program: program.into(),
            args,
            dim,
        }
    }
}

impl ScalarModel for SubprocessModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn id(&self) -> String {
        self.program.display().to_string()
    }

    fn eval(&self, x: &[f64]) -> Result<f64, ModelError> {
        Ok(self.eval_batch(&[x.to_vec()])?[0])
    }

    fn eval_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>, ModelError> {
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()?;

        let mut stdin = child.stdin.take().expect("stdin piped");
        let stdout = child.stdout.take().expect("stdout piped");
        let mut stderr = child.stderr.take().expect("stderr piped");

        let input: String = xs
            .iter()
            .map(|x| {
                let mut line = x.iter().map(|&v| g17(v)).collect::<Vec<_>>().join(" ");
                line.push('\n');
                line
            })
            .collect();

        let (values, stderr_buf) = std::thread::scope(|scope| {
            // Feed stdin and drain stderr on side threads so neither pipe
            // can fill up while we read stdout.
            let writer = scope.spawn(move || {
                let _ = stdin.write_all(input.as_bytes());
                // stdin drops here, closing the pipe.
            });
            let stderr_reader = scope.spawn(move || {
                let mut buf = Vec::new();
                let _ = stderr.read_to_end(&mut buf);
                buf
            });

            let mut values = Vec::with_capacity(xs.len());
            let mut parse_error = None;
            for (index, line) in BufReader::new(stdout).lines().enumerate() {
                match line {
                    Ok(text) => match crate::numfmt::parse_f64(&text) {
                        Some(v) => values.push(v),
                        None => {
                            parse_error = Some(ModelError::ParseFailure { index, line: text });
                            break;
                        }
                    },
                    Err(e) => {
                        parse_error = Some(ModelError::Io(e));
                        break;
                    }
                }
            }
            let stderr_buf = stderr_reader.join().unwrap_or_default();
            let _ = writer.join();
            (parse_error.map_or(Ok(values), Err), stderr_buf)
        });

        let status = child.wait()?;
        if !status.success() {
            let got = values.as_ref().map_or(0, |v| v.len());
            let mut excerpt = String::from_utf8_lossy(&stderr_buf).into_owned();
            excerpt.truncate(STDERR_EXCERPT);
            return Err(ModelError::ChildFailure {
                status: status.code().unwrap_or(-1),
                index: got.min(xs.len().saturating_sub(1)),
                stderr: excerpt,
            });
        }
        let values = values?;
        if values.len() != xs.len() {
            return Err(ModelError::ShortOutput {
                got: values.len(),
                expected: xs.len(),
            });
        }
        Ok(values)
    }
}
