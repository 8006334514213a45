//! The end-to-end study pipeline and its artifact files.
//!
//! A study runs sample → gradients → subspace → bootstrap → summary plots
//! (→ Sobol' when enabled) over one model and writes machine-readable
//! artifacts into an output directory:
//!
//! - `samples.csv` / `samples.json` — gradient sample set and metadata;
//! - `subspace.json` — eigenvalues, eigenvectors, gap diagnostics,
//!   bootstrap intervals and subspace-error statistics;
//! - `summary_plot.csv` — `y1[,y2],f` rows for sufficient summary plots;
//! - `replicate_cloud.csv` — per-replicate projections showing subspace
//!   stability as clusters;
//! - `sobol.json` — PCE Sobol' indices keyed by parameter name (optional);
//! - `study.json` — config echo, dimensions, and evaluation counts;
//! - `plots.gp` — optional gnuplot script over the CSVs.
//!
//! Everything above is deterministic for a fixed config: reruns produce
//! byte-identical files. Wall-clock timing goes to `study.log`, the one
//! deliberately non-deterministic output. On failure, files written by the
//! current run are removed.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::Deserialize;

use crate::bootstrap::{bootstrap_subspace, replicate_summary_cloud, BootstrapError, BootstrapSummary, CloudRow};
use crate::diode::PmaxResult;
use crate::gradients::{build_sample_set, GradientError, GradientSampleSet, DEFAULT_FD_STEP};
use crate::jsonw::Json;
use crate::model::{CountingModel, DiodePmaxModel, ModelError, ScalarModel, SubprocessModel};
use crate::numfmt::g17;
use crate::sobol::{fit_pce, sobol_indices, SobolError, SobolResult};
use crate::space::{ParameterDef, ParameterSpace, SpaceError, DIODE_SI_2CM2};
use crate::subspace::{estimate_c_matrix, summary_plot_data, SubspaceError, SubspaceEstimate};

/// Sample points projected into the summary plot and replicate cloud.
pub const SUMMARY_POINTS: usize = 100;

/// Bootstrap replicates drawn for the summary-plot cloud.
pub const CLOUD_REPLICATES: usize = 20;

/// Stream labels for deriving independent random streams from one seed.
const SEED_BOOTSTRAP: u64 = 1;
const SEED_CLOUD: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    Config,
    Model,
    Numerical,
    Io,
}

/// Structured pipeline error: which stage failed and how.
#[derive(Debug)]
pub struct StudyError {
    pub stage: &'static str,
    pub kind: FailureKind,
    pub message: String,
}

impl fmt::Display for StudyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            FailureKind::Config => "config",
            FailureKind::Model => "model",
            FailureKind::Numerical => "numerical",
            FailureKind::Io => "io",
        };
        write!(f, "[stage={} kind={}] {}", self.stage, kind, self.message)
    }
}

impl std::error::Error for StudyError {}

impl StudyError {
    pub fn config(field: &str, message: impl fmt::Display) -> Self {
        StudyError {
            stage: "config",
            kind: FailureKind::Config,
            message: format!("{field}: {message}"),
        }
    }

    fn io(stage: &'static str, e: std::io::Error) -> Self {
        StudyError {
            stage,
            kind: FailureKind::Io,
            message: e.to_string(),
        }
    }

    /// Process exit code per the CLI contract: 2 config, 3 model failure,
    /// 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self.kind {
            FailureKind::Config | FailureKind::Io => 2,
            FailureKind::Model => 3,
            FailureKind::Numerical => 4,
        }
    }
}

pub fn gradient_failure(stage: &'static str, e: GradientError) -> StudyError {
    let kind = match &e {
        GradientError::Model { .. } => FailureKind::Model,
        GradientError::Io(_) | GradientError::Json(_) | GradientError::Format { .. } => {
            FailureKind::Io
        }
        _ => FailureKind::Numerical,
    };
    StudyError {
        stage,
        kind,
        message: e.to_string(),
    }
}

pub fn subspace_failure(stage: &'static str, e: SubspaceError) -> StudyError {
    StudyError {
        stage,
        kind: FailureKind::Numerical,
        message: e.to_string(),
    }
}

pub fn bootstrap_failure(stage: &'static str, e: BootstrapError) -> StudyError {
    StudyError {
        stage,
        kind: FailureKind::Numerical,
        message: e.to_string(),
    }
}

pub fn sobol_failure(e: SobolError) -> StudyError {
    let kind = match &e {
        SobolError::Model { .. } => FailureKind::Model,
        SobolError::BudgetExceeded { .. } | SobolError::InsufficientQuadrature { .. } => {
            FailureKind::Config
        }
        SobolError::ZeroVariance => FailureKind::Numerical,
    };
    StudyError {
        stage: "sobol",
        kind,
        message: e.to_string(),
    }
}

/// Which model a study runs.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelChoice {
    /// A built-in preset; `"diode-si-2cm2"` is the only one shipped.
    Preset(String),
    /// External executable speaking the line protocol.
    External {
        command: String,
        args: Vec<String>,
        /// Parameter-space JSON giving names and dimension; otherwise
        /// `dim` must be set and coordinates are named `x1..xm`.
        space: Option<PathBuf>,
        dim: Option<usize>,
    },
}

impl Default for ModelChoice {
    fn default() -> Self {
        ModelChoice::Preset(DIODE_SI_2CM2.to_owned())
    }
}

/// Requested active dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ActiveDim {
    /// Take the gap suggestion.
    #[default]
    Auto,
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct SobolSettings {
    pub degree: usize,
    pub qpoints: usize,
}

impl Default for SobolSettings {
    fn default() -> Self {
        SobolSettings {
            degree: 5,
            qpoints: 8,
        }
    }
}

/// Full pipeline configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub model: ModelChoice,
    /// Gradient sample count `M`.
    pub samples: usize,
    pub fd_step: f64,
    /// Bootstrap replicate count `M'`.
    pub bootstrap_replicates: usize,
    /// Bootstrap interval level, e.g. 0.99.
    pub level: f64,
    pub n: ActiveDim,
    pub seed: u64,
    /// Sobol' stage settings; `None` disables the stage.
    pub sobol: Option<SobolSettings>,
    pub out_dir: PathBuf,
    /// Also emit a gnuplot script over the CSV artifacts.
    pub gnuplot: bool,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            model: ModelChoice::default(),
            samples: 1000,
            fd_step: DEFAULT_FD_STEP,
            bootstrap_replicates: 1000,
            level: 0.99,
            n: ActiveDim::Auto,
            seed: 0,
            sobol: None,
            out_dir: PathBuf::from("study-out"),
            gnuplot: false,
        }
    }
}

/// Serialized form of [`StudyConfig`] for `--config` files; every field is
/// optional and falls back to the default.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    model: Option<ModelField>,
    samples: Option<usize>,
    fd_step: Option<f64>,
    bootstrap_replicates: Option<usize>,
    level: Option<f64>,
    n: Option<NField>,
    seed: Option<u64>,
    sobol: Option<SobolSettings>,
    out_dir: Option<PathBuf>,
    gnuplot: Option<bool>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ModelField {
    Name(String),
    External {
        command: String,
        #[serde(default)]
        args: Vec<String>,
        #[serde(default)]
        space: Option<PathBuf>,
        #[serde(default)]
        dim: Option<usize>,
    },
}

#[derive(Deserialize)]
#[serde(untagged)]
enum NField {
    Count(usize),
    Word(String),
}

impl StudyConfig {
    /// Parse a JSON config document; missing fields take defaults.
    pub fn from_json_str(text: &str) -> Result<Self, StudyError> {
        let raw: ConfigFile =
            serde_json::from_str(text).map_err(|e| StudyError::config("config", e))?;
        let mut cfg = StudyConfig::default();
        if let Some(model) = raw.model {
            cfg.model = match model {
                ModelField::Name(name) => ModelChoice::Preset(name),
                ModelField::External {
                    command,
                    args,
                    space,
                    dim,
                } => ModelChoice::External {
                    command,
                    args,
                    space,
                    dim,
                },
            };
        }
        if let Some(v) = raw.samples {
            cfg.samples = v;
        }
        if let Some(v) = raw.fd_step {
            cfg.fd_step = v;
        }
        if let Some(v) = raw.bootstrap_replicates {
            cfg.bootstrap_replicates = v;
        }
        if let Some(v) = raw.level {
            cfg.level = v;
        }
        if let Some(v) = raw.n {
            cfg.n = match v {
                NField::Count(k) => ActiveDim::Fixed(k),
                NField::Word(w) if w == "auto" => ActiveDim::Auto,
                NField::Word(w) => {
                    return Err(StudyError::config("n", format!("expected integer or \"auto\", got {w:?}")))
                }
            };
        }
        if let Some(v) = raw.seed {
            cfg.seed = v;
        }
        if let Some(v) = raw.sobol {
            cfg.sobol = Some(v);
        }
        if let Some(v) = raw.out_dir {
            cfg.out_dir = v;
        }
        if let Some(v) = raw.gnuplot {
            cfg.gnuplot = v;
        }
        Ok(cfg)
    }

    pub fn from_json_file(path: &Path) -> Result<Self, StudyError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| StudyError::config("config", format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    /// Check every field before any file is touched.
    pub fn validate(&self) -> Result<(), StudyError> {
        if self.samples < 1 {
            return Err(StudyError::config("samples", "must be at least 1"));
        }
        if !(self.fd_step > 0.0 && self.fd_step < 0.1) {
            return Err(StudyError::config(
                "fd_step",
                format!("must lie in (0, 0.1), got {}", self.fd_step),
            ));
        }
        if self.bootstrap_replicates < 1 {
            return Err(StudyError::config("bootstrap_replicates", "must be at least 1"));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(StudyError::config(
                "level",
                format!("must lie in (0, 1), got {}", self.level),
            ));
        }
        if let ActiveDim::Fixed(n) = self.n {
            if n < 1 {
                return Err(StudyError::config("n", "must be at least 1"));
            }
        }
        if let Some(s) = &self.sobol {
            if s.degree < 1 {
                return Err(StudyError::config("sobol.degree", "must be at least 1"));
            }
            if s.qpoints < s.degree + 1 {
                return Err(StudyError::config(
                    "sobol.qpoints",
                    format!("must be at least degree + 1 = {}", s.degree + 1),
                ));
            }
            if s.qpoints > 64 {
                return Err(StudyError::config("sobol.qpoints", "must be at most 64"));
            }
        }
        if let ModelChoice::External { space, dim, .. } = &self.model {
            if space.is_none() && dim.is_none() {
                return Err(StudyError::config(
                    "model",
                    "external models need either a space file or a dimension",
                ));
            }
        }
        Ok(())
    }

    fn echo_json(&self) -> Json {
        let model = match &self.model {
            ModelChoice::Preset(name) => Json::Str(name.clone()),
            ModelChoice::External {
                command,
                args,
                space,
                dim,
            } => Json::object(vec![
                ("command", command.as_str().into()),
                (
                    "args",
                    Json::array(args.iter().map(|a| Json::Str(a.clone()))),
                ),
                (
                    "space",
                    space
                        .as_ref()
                        .map_or(Json::Null, |p| Json::Str(p.display().to_string())),
                ),
                ("dim", dim.map_or(Json::Null, |d| d.into())),
            ]),
        };
        Json::object(vec![
            ("model", model),
            ("samples", self.samples.into()),
            ("fd_step", self.fd_step.into()),
            ("bootstrap_replicates", self.bootstrap_replicates.into()),
            ("level", self.level.into()),
            (
                "n",
                match self.n {
                    ActiveDim::Auto => "auto".into(),
                    ActiveDim::Fixed(k) => k.into(),
                },
            ),
            ("seed", self.seed.into()),
            (
                "sobol",
                self.sobol.map_or(Json::Null, |s| {
                    Json::object(vec![
                        ("degree", s.degree.into()),
                        ("qpoints", s.qpoints.into()),
                    ])
                }),
            ),
            ("gnuplot", Json::Bool(self.gnuplot)),
        ])
    }
}

/// Resolved model plus the space it runs over.
pub struct ResolvedModel {
    pub space: ParameterSpace,
    pub model: Box<dyn ScalarModel>,
    pub id: String,
}

/// Turn a model choice into a live model and parameter space.
pub fn resolve_model(choice: &ModelChoice) -> Result<ResolvedModel, StudyError> {
    match choice {
        ModelChoice::Preset(name) => {
            if name != DIODE_SI_2CM2 {
                return Err(StudyError::config(
                    "model",
                    format!("unknown preset {name:?}; available: {DIODE_SI_2CM2:?}"),
                ));
            }
            let model = DiodePmaxModel::builtin();
            Ok(ResolvedModel {
                space: model.space().clone(),
                id: model.id(),
                model: Box::new(model),
            })
        }
        ModelChoice::External {
            command,
            args,
            space,
            dim,
        } => {
            let space = match (space, dim) {
                (Some(path), _) => ParameterSpace::from_json_file(path)
                    .map_err(|e: SpaceError| StudyError::config("model.space", e))?,
                (None, Some(dim)) => normalized_cube(*dim)
                    .map_err(|e| StudyError::config("model.dim", e))?,
                (None, None) => {
                    return Err(StudyError::config(
                        "model",
                        "external models need either a space file or a dimension",
                    ))
                }
            };
            let model = SubprocessModel::new(command, args.clone(), space.dim());
            Ok(ResolvedModel {
                id: model.id(),
                model: Box::new(model),
                space,
            })
        }
    }
}

/// Identity space `[-1, 1]^dim` with coordinates named `x1..xm`, for
/// external models that already consume normalized inputs.
pub fn normalized_cube(dim: usize) -> Result<ParameterSpace, SpaceError> {
    ParameterSpace::new(
        (1..=dim)
            .map(|i| ParameterDef::linear(&format!("x{i}"), -1.0, 1.0))
            .collect(),
    )
}

/// Everything a finished study produced, with artifact paths.
pub struct StudyReport {
    pub config: StudyConfig,
    pub dim: usize,
    pub model_id: String,
    pub samples: GradientSampleSet,
    pub estimate: SubspaceEstimate,
    pub suggested_n: usize,
    pub gap_ratio: f64,
    pub chosen_n: usize,
    pub bootstrap: BootstrapSummary,
    pub sobol: Option<SobolResult>,
    pub gradient_evaluations: u64,
    pub sobol_evaluations: u64,
    pub artifacts: Vec<PathBuf>,
    pub wall: Duration,
}

/// Tracks files written by a run so a failed run removes its partial
/// output.
struct ArtifactSink {
    dir: PathBuf,
    written: Vec<PathBuf>,
    keep: bool,
}

impl ArtifactSink {
    fn new(dir: &Path) -> std::io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(ArtifactSink {
            dir: dir.to_owned(),
            written: Vec::new(),
            keep: false,
        })
    }

    fn write(&mut self, name: &str, content: &str) -> std::io::Result<PathBuf> {
        let path = self.dir.join(name);
        std::fs::write(&path, content)?;
        self.written.push(path.clone());
        Ok(path)
    }

    fn register(&mut self, path: PathBuf) {
        self.written.push(path);
    }

    fn finalize(mut self) -> Vec<PathBuf> {
        self.keep = true;
        std::mem::take(&mut self.written)
    }
}

impl Drop for ArtifactSink {
    fn drop(&mut self) {
        if !self.keep {
            for path in &self.written {
                let _ = std::fs::remove_file(path);
            }
        }
    }
}

/// Run the full pipeline and write artifacts into `config.out_dir`.
pub fn run_study(config: &StudyConfig) -> Result<StudyReport, StudyError> {
    let started = Instant::now();
    config.validate()?;
    let resolved = resolve_model(&config.model)?;
    let m = resolved.space.dim();
    if m < 2 {
        return Err(StudyError::config(
            "model",
            "subspace analysis needs at least 2 input dimensions",
        ));
    }
    if let ActiveDim::Fixed(n) = config.n {
        if n >= m {
            return Err(StudyError::config(
                "n",
                format!("must be below the input dimension {m}"),
            ));
        }
    }

    let mut sink =
        ArtifactSink::new(&config.out_dir).map_err(|e| StudyError::io("setup", e))?;

    // Gradient sampling.
    let counted = CountingModel::new(resolved.model.as_ref());
    let samples = build_sample_set(
        &counted,
        &resolved.space,
        config.samples,
        config.fd_step,
        config.seed,
    )
    .map_err(|e| gradient_failure("sample", e))?;
    let gradient_evaluations = counted.count();
    let samples_path = sink.dir.join("samples.csv");
    samples
        .write_csv(&samples_path)
        .map_err(|e| StudyError::io("sample", e))?;
    sink.register(samples_path.clone());
    sink.register(samples_path.with_extension("json"));

    // Subspace estimate and partition choice.
    let estimate = estimate_c_matrix(&samples).map_err(|e| subspace_failure("subspace", e))?;
    let (suggested_n, gap_ratio) = estimate
        .suggest_gap()
        .map_err(|e| subspace_failure("subspace", e))?;
    let chosen_n = match config.n {
        ActiveDim::Auto => suggested_n,
        ActiveDim::Fixed(k) => k,
    };

    // Bootstrap stability of the chosen subspace.
    let bootstrap_seed = crate::rng::CounterRng::new(config.seed)
        .derive(SEED_BOOTSTRAP)
        .seed();
    let bootstrap = bootstrap_subspace(
        &samples,
        chosen_n,
        config.bootstrap_replicates,
        config.level,
        bootstrap_seed,
    )
    .map_err(|e| bootstrap_failure("bootstrap", e))?;

    sink.write(
        "subspace.json",
        &subspace_json(&estimate, suggested_n, gap_ratio, chosen_n, Some(&bootstrap)),
    )
    .map_err(|e| StudyError::io("subspace", e))?;

    // Summary plot and replicate cloud over the first samples, projected
    // with up to two leading eigenvectors.
    let plot_n = m.saturating_sub(1).min(2).max(1);
    let plot_part = estimate
        .partition(plot_n)
        .map_err(|e| subspace_failure("summary-plot", e))?;
    let head = SUMMARY_POINTS.min(samples.len());
    let plot_points = &samples.points()[..head];
    let plot_values = &samples.values()[..head];
    let plot_rows = summary_plot_data(&plot_part, plot_points, plot_values, plot_n)
        .map_err(|e| subspace_failure("summary-plot", e))?;
    sink.write("summary_plot.csv", &summary_plot_csv(&plot_rows))
        .map_err(|e| StudyError::io("summary-plot", e))?;

    let cloud_seed = crate::rng::CounterRng::new(config.seed).derive(SEED_CLOUD).seed();
    let cloud = replicate_summary_cloud(
        &samples,
        &plot_part,
        CLOUD_REPLICATES,
        plot_points,
        plot_values,
        cloud_seed,
    )
    .map_err(|e| bootstrap_failure("replicate-cloud", e))?;
    sink.write("replicate_cloud.csv", &replicate_cloud_csv(&cloud))
        .map_err(|e| StudyError::io("replicate-cloud", e))?;

    // Sobol' cross-check, when enabled.
    let mut sobol = None;
    let mut sobol_evaluations = 0;
    if let Some(settings) = config.sobol {
        let counted = CountingModel::new(resolved.model.as_ref());
        let pce = fit_pce(&counted, m, settings.degree, settings.qpoints)
            .map_err(sobol_failure)?;
        sobol_evaluations = counted.count();
        let result = sobol_indices(&pce).map_err(sobol_failure)?;
        sink.write("sobol.json", &sobol_json(&resolved.space, &result))
            .map_err(|e| StudyError::io("sobol", e))?;
        sobol = Some(result);
    }

    if config.gnuplot {
        sink.write("plots.gp", &gnuplot_script(plot_n))
            .map_err(|e| StudyError::io("plots", e))?;
    }

    sink.write(
        "study.json",
        &study_json(
            config,
            m,
            &resolved.id,
            gradient_evaluations,
            sobol_evaluations,
        ),
    )
    .map_err(|e| StudyError::io("study", e))?;

    let artifacts = sink.finalize();
    let wall = started.elapsed();
    // Timing is diagnostic only and intentionally lives outside the
    // deterministic artifact set.
    let _ = std::fs::write(
        config.out_dir.join("study.log"),
        format!("wall_time_seconds={:.3}\n", wall.as_secs_f64()),
    );

    Ok(StudyReport {
        config: config.clone(),
        dim: m,
        model_id: resolved.id,
        samples,
        estimate,
        suggested_n,
        gap_ratio,
        chosen_n,
        bootstrap,
        sobol,
        gradient_evaluations,
        sobol_evaluations,
        artifacts,
        wall,
    })
}

// ---------------------------------------------------------------------
// Artifact renderers. All floats go through g17 for byte-stable output.
// ---------------------------------------------------------------------

/// `subspace.json` body; also the stdout payload of `asub subspace`.
pub fn subspace_json(
    estimate: &SubspaceEstimate,
    suggested_n: usize,
    gap_ratio: f64,
    chosen_n: usize,
    bootstrap: Option<&BootstrapSummary>,
) -> String {
    let eigenvectors = Json::array(
        (0..estimate.dim()).map(|j| Json::floats(&estimate.eigenvectors().column(j))),
    );
    let mut fields = vec![
        ("schema", Json::from("subspace v1")),
        ("eigenvalues", Json::floats(estimate.eigenvalues())),
        ("eigenvectors", eigenvectors),
        ("suggested_n", suggested_n.into()),
        ("gap_ratio", gap_ratio.into()),
        ("chosen_n", chosen_n.into()),
        (
            "degenerate_pairs",
            Json::array(estimate.degenerate_pairs().into_iter().map(Json::from)),
        ),
    ];
    if let Some(b) = bootstrap {
        let intervals = Json::array(
            b.eigenvalue_lo()
                .iter()
                .zip(b.eigenvalue_hi())
                .map(|(&lo, &hi)| Json::floats(&[lo, hi])),
        );
        fields.push((
            "bootstrap",
            Json::object(vec![
                ("replicates", b.replicates().into()),
                ("level", b.level().into()),
                ("eigenvalue_intervals", intervals),
                (
                    "subspace_error",
                    Json::object(vec![
                        ("mean", b.subspace_error_mean().into()),
                        ("lo", b.subspace_error_lo().into()),
                        ("hi", b.subspace_error_hi().into()),
                    ]),
                ),
            ]),
        ));
    }
    Json::Object(fields.into_iter().map(|(k, v)| (k.to_owned(), v)).collect()).render_pretty()
}

/// `sobol.json` body; also the stdout payload of `asub sobol`.
pub fn sobol_json(space: &ParameterSpace, result: &SobolResult) -> String {
    let by_name = |values: &[f64]| {
        Json::Object(
            space
                .names()
                .iter()
                .zip(values)
                .map(|(name, &v)| ((*name).to_owned(), Json::Float(v)))
                .collect(),
        )
    };
    Json::object(vec![
        ("schema", "sobol v1".into()),
        ("mean", result.mean.into()),
        ("variance", result.variance.into()),
        ("first_order", by_name(&result.first_order)),
        ("total", by_name(&result.total)),
    ])
    .render_pretty()
}

/// Stdout payload of `asub pmax`.
pub fn pmax_json(r: &PmaxResult) -> String {
    Json::object(vec![
        ("p_max", r.p_max.into()),
        ("v_max", r.v_max.into()),
        ("i_max", r.i_max.into()),
        ("v_oc", r.v_oc.into()),
    ])
    .render_pretty()
}

/// `study.json` body.
fn study_json(
    config: &StudyConfig,
    dim: usize,
    model_id: &str,
    gradient_evaluations: u64,
    sobol_evaluations: u64,
) -> String {
    let mut artifact_names = vec!["samples.csv", "samples.json", "subspace.json",
        "summary_plot.csv", "replicate_cloud.csv"];
    if config.sobol.is_some() {
        artifact_names.push("sobol.json");
    }
    if config.gnuplot {
        artifact_names.push("plots.gp");
    }
    artifact_names.push("study.json");
    Json::object(vec![
        ("schema", "study v1".into()),
        ("config", config.echo_json()),
        ("m", dim.into()),
        ("model_id", model_id.into()),
        (
            "evaluations",
            Json::object(vec![
                ("gradient_stage", gradient_evaluations.into()),
                ("sobol_stage", sobol_evaluations.into()),
            ]),
        ),
        (
            "artifacts",
            Json::array(artifact_names.into_iter().map(Json::from)),
        ),
    ])
    .render_pretty()
}

/// `summary_plot.csv` body: header `y1[,y2],f`.
pub fn summary_plot_csv(rows: &[(Vec<f64>, f64)]) -> String {
    let cols = rows.first().map_or(1, |(y, _)| y.len());
    let mut out = String::from("# schema: summary-plot v1\n");
    let mut header: Vec<String> = (1..=cols).map(|i| format!("y{i}")).collect();
    header.push("f".to_owned());
    out.push_str(&header.join(","));
    out.push('\n');
    for (y, f) in rows {
        let fields: Vec<String> = y.iter().map(|&v| g17(v)).chain([g17(*f)]).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// `replicate_cloud.csv` body: header `sample,replicate,y1[,y2],f`.
pub fn replicate_cloud_csv(rows: &[CloudRow]) -> String {
    let cols = rows.first().map_or(1, |r| r.y.len());
    let mut out = String::from("# schema: replicate-cloud v1\n");
    let mut header = vec!["sample".to_owned(), "replicate".to_owned()];
    header.extend((1..=cols).map(|i| format!("y{i}")));
    header.push("f".to_owned());
    out.push_str(&header.join(","));
    out.push('\n');
    for r in rows {
        let mut fields = vec![r.sample.to_string(), r.replicate.to_string()];
        fields.extend(r.y.iter().map(|&v| g17(v)));
        fields.push(g17(r.f));
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// CSV body for `asub iv-curve`: header `v_volts,i_amps`.
pub fn iv_curve_csv(points: &[crate::diode::IVPoint]) -> String {
    let mut out = String::from("# schema: iv-curve v1\nv_volts,i_amps\n");
    for p in points {
        out.push_str(&g17(p.v));
        out.push(',');
        out.push_str(&g17(p.i));
        out.push('\n');
    }
    out
}

/// Small gnuplot script plotting the CSV artifacts.
fn gnuplot_script(plot_cols: usize) -> String {
    let f_col = plot_cols + 1;
    let cloud_f = plot_cols + 3;
    format!(
        "# schema: gnuplot-script v1\n\
         set datafile separator ','\n\
         set terminal pngcairo size 900,600\n\
         set output 'summary_plot.png'\n\
         set xlabel 'active variable y1'\n\
         set ylabel 'f'\n\
         plot 'summary_plot.csv' skip 1 using 1:{f_col} with points pt 7 ps 0.6 notitle\n\
         set output 'replicate_cloud.png'\n\
         plot 'replicate_cloud.csv' skip 1 using 3:{cloud_f} with points pt 7 ps 0.4 notitle\n"
    )
}

/// Wrap a model error for contexts outside the pipeline (used by the CLI).
pub fn model_failure(e: ModelError) -> StudyError {
    StudyError {
        stage: "model",
        kind: FailureKind::Model,
        message: e.to_string(),
    }
}

/// Wrap a numerical error for contexts outside the pipeline.
pub fn numerical_failure(stage: &'static str, message: impl fmt::Display) -> StudyError {
    StudyError {
        stage,
        kind: FailureKind::Numerical,
        message: message.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_parsing() {
        let cfg = StudyConfig::from_json_str("{}").unwrap();
        assert_eq!(cfg, StudyConfig::default());

        let cfg = StudyConfig::from_json_str(
            r#"{
                "model": "diode-si-2cm2",
                "samples": 50,
                "n": "auto",
                "sobol": {"degree": 3, "qpoints": 4},
                "seed": 9,
                "out_dir": "somewhere"
            }"#,
        )
        .unwrap();
        assert_eq!(cfg.samples, 50);
        assert_eq!(cfg.n, ActiveDim::Auto);
        assert_eq!(cfg.sobol, Some(SobolSettings { degree: 3, qpoints: 4 }));
        assert_eq!(cfg.out_dir, PathBuf::from("somewhere"));

        let cfg = StudyConfig::from_json_str(r#"{"n": 2}"#).unwrap();
        assert_eq!(cfg.n, ActiveDim::Fixed(2));

        let ext = StudyConfig::from_json_str(
            r#"{"model": {"command": "./m.sh", "dim": 3}}"#,
        )
        .unwrap();
        assert!(matches!(ext.model, ModelChoice::External { .. }));
    }

    #[test]
    fn validation_names_the_field() {
        let mut cfg = StudyConfig::default();
        cfg.fd_step = 0.0;
        let err = cfg.validate().unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.message.contains("fd_step"), "{err}");

        let mut cfg = StudyConfig::default();
        cfg.level = 1.0;
        assert!(cfg.validate().unwrap_err().message.contains("level"));

        let mut cfg = StudyConfig::default();
        cfg.sobol = Some(SobolSettings { degree: 5, qpoints: 5 });
        assert!(cfg.validate().unwrap_err().message.contains("qpoints"));
    }

    #[test]
    fn invalid_config_writes_no_files() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let mut cfg = StudyConfig::default();
        cfg.out_dir = out.clone();
        cfg.fd_step = 0.0;
        assert!(run_study(&cfg).is_err());
        assert!(!out.exists());
    }

    #[test]
    fn smoke_study_produces_all_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = StudyConfig {
            samples: 10,
            bootstrap_replicates: 25,
            out_dir: dir.path().join("out"),
            seed: 5,
            ..StudyConfig::default()
        };
        let report = run_study(&cfg).unwrap();
        assert_eq!(report.gradient_evaluations, 60);
        assert_eq!(report.chosen_n, report.suggested_n);
        for name in [
            "samples.csv",
            "samples.json",
            "subspace.json",
            "summary_plot.csv",
            "replicate_cloud.csv",
            "study.json",
        ] {
            assert!(cfg.out_dir.join(name).exists(), "{name} missing");
        }
        assert!(!cfg.out_dir.join("sobol.json").exists());
        // Artifact JSON parses and carries the schema field.
        let study: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(cfg.out_dir.join("study.json")).unwrap())
                .unwrap();
        assert_eq!(study["schema"], "study v1");
        assert_eq!(study["evaluations"]["gradient_stage"], 60);
    }

    #[test]
    fn identical_configs_are_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let make = |out: PathBuf| StudyConfig {
            samples: 12,
            bootstrap_replicates: 16,
            seed: 123,
            sobol: Some(SobolSettings { degree: 2, qpoints: 3 }),
            out_dir: out,
            ..StudyConfig::default()
        };
        let a = make(dir.path().join("a"));
        let b = make(dir.path().join("b"));
        run_study(&a).unwrap();
        run_study(&b).unwrap();
        for name in [
            "samples.csv",
            "samples.json",
            "subspace.json",
            "summary_plot.csv",
            "replicate_cloud.csv",
            "sobol.json",
            "study.json",
        ] {
            let left = std::fs::read(a.out_dir.join(name)).unwrap();
            let right = std::fs::read(b.out_dir.join(name)).unwrap();
            assert_eq!(left, right, "{name} differs");
        }
    }

    #[test]
    fn unknown_preset_is_a_config_error() {
        let mut cfg = StudyConfig::default();
        cfg.model = ModelChoice::Preset("nope".into());
        let err = match run_study(&cfg) {
            Ok(_) => panic!("unknown preset accepted"),
            Err(e) => e,
        };
        assert_eq!(err.exit_code(), 2);
    }
}
