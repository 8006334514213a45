//! Command-line front end for the active-subspaces library.
//!
//! Exit codes: 0 success, 2 config error, 3 model failure, 4 numerical
//! failure.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use active_subspaces::bootstrap::{bootstrap_subspace, replicate_summary_cloud};
use active_subspaces::diode::{iv_curve, p_max, DiodeConstants, DiodeParams};
use active_subspaces::gradients::{build_sample_set, GradientSampleSet, DEFAULT_FD_STEP};
use active_subspaces::rng::CounterRng;
use active_subspaces::sobol::{fit_pce, sobol_indices};
use active_subspaces::space::{ParameterSpace, DIODE_SI_2CM2};
use active_subspaces::study::{
    self, bootstrap_failure, gradient_failure, iv_curve_csv, pmax_json, replicate_cloud_csv,
    resolve_model, run_study, sobol_failure, sobol_json, subspace_failure, subspace_json,
    summary_plot_csv, ActiveDim, ModelChoice, StudyConfig, StudyError,
    CLOUD_REPLICATES, SUMMARY_POINTS,
};
use active_subspaces::subspace::{estimate_c_matrix, summary_plot_data};

#[derive(Parser)]
#[command(
    name = "asub",
    version,
    about = "Active-subspace discovery, bootstrap stability, and Sobol' indices for scalar models"
)]
struct Cli {
    /// JSON config file (study); command-line flags override its fields
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Random seed for sampling, bootstrap, and clouds
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory for output artifacts
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a model's gradients into samples.csv (+ metadata sidecar)
    Sample(SampleArgs),
    /// Estimate the active subspace from a sample set
    Subspace(SubspaceArgs),
    /// Polynomial-chaos Sobol' sensitivity indices of a model
    Sobol(SobolArgs),
    /// Maximum power of a single-diode cell
    Pmax(CellArgs),
    /// I-V curve of a single-diode cell as CSV
    IvCurve(IvCurveArgs),
    /// Full pipeline: sample, subspace, bootstrap, plots, Sobol'
    Study(StudyArgs),
}

/// Model selection shared by sampling commands.
#[derive(Args)]
struct ModelArgs {
    /// Built-in model preset
    #[arg(long, conflicts_with = "exec")]
    preset: Option<String>,

    /// External model executable speaking the line protocol
    #[arg(long)]
    exec: Option<PathBuf>,

    /// Argument passed to the external model (repeatable)
    #[arg(long = "exec-arg", requires = "exec")]
    exec_args: Vec<String>,

    /// Parameter-space JSON for the external model
    #[arg(long, requires = "exec")]
    space: Option<PathBuf>,

    /// Input dimension for the external model (coordinates named x1..xm)
    #[arg(long, requires = "exec", conflicts_with = "space")]
    dim: Option<usize>,
}

impl ModelArgs {
    fn choice(&self) -> ModelChoice {
        if let Some(exec) = &self.exec {
            ModelChoice::External {
                command: exec.display().to_string(),
                args: self.exec_args.clone(),
                space: self.space.clone(),
                dim: self.dim,
            }
        } else {
            ModelChoice::Preset(
                self.preset
                    .clone()
                    .unwrap_or_else(|| DIODE_SI_2CM2.to_owned()),
            )
        }
    }

    fn given(&self) -> bool {
        self.preset.is_some() || self.exec.is_some()
    }
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    model: ModelArgs,

    /// Number of gradient samples M
    #[arg(long, default_value_t = 1000)]
    count: usize,

    /// Finite-difference step in normalized coordinates
    #[arg(long, default_value_t = DEFAULT_FD_STEP)]
    step: f64,

    /// Output CSV path (default: <out-dir>/samples.csv)
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SubspaceArgs {
    /// Sample-set CSV written by `asub sample` or `asub study`
    #[arg(long)]
    input: PathBuf,

    /// Active dimension: an integer or "auto"
    #[arg(long, default_value = "auto")]
    n: String,

    /// Bootstrap replicate count M'; enables the bootstrap section
    #[arg(long)]
    bootstrap: Option<usize>,

    /// Bootstrap interval level
    #[arg(long, default_value_t = 0.99)]
    level: f64,
}

#[derive(Args)]
struct SobolArgs {
    #[command(flatten)]
    model: ModelArgs,

    /// Total polynomial degree of the expansion
    #[arg(long, default_value_t = 5)]
    degree: usize,

    /// Gauss-Legendre points per dimension
    #[arg(long, default_value_t = 8)]
    qpoints: usize,
}

/// Physical cell inputs: either all five flags or a preset plus a
/// normalized point.
#[derive(Args)]
struct CellArgs {
    /// Short-circuit current, amps
    #[arg(long, allow_hyphen_values = true)]
    isc: Option<f64>,

    /// Diode reverse saturation current, amps
    #[arg(long = "is", allow_hyphen_values = true)]
    i_s: Option<f64>,

    /// Ideality factor
    #[arg(long, allow_hyphen_values = true)]
    n: Option<f64>,

    /// Series resistance, ohms
    #[arg(long, allow_hyphen_values = true)]
    rs: Option<f64>,

    /// Parallel (shunt) resistance, ohms
    #[arg(long, allow_hyphen_values = true)]
    rp: Option<f64>,

    /// Parameter-space preset to denormalize --x against
    #[arg(long)]
    preset: Option<String>,

    /// Normalized point in [-1,1]^5, comma-separated (with --preset)
    #[arg(long, allow_hyphen_values = true)]
    x: Option<String>,
}

impl CellArgs {
    fn params(&self) -> Result<DiodeParams, StudyError> {
        let flags = [self.isc, self.i_s, self.n, self.rs, self.rp];
        if flags.iter().all(Option::is_some) {
            return DiodeParams::new(
                self.isc.unwrap(),
                self.i_s.unwrap(),
                self.n.unwrap(),
                self.rs.unwrap(),
                self.rp.unwrap(),
            )
            .map_err(|e| StudyError::config("params", e));
        }
        if flags.iter().any(Option::is_some) {
            return Err(StudyError::config(
                "params",
                "give all of --isc --is --n --rs --rp, or --preset with --x",
            ));
        }
        let preset = self.preset.as_deref().unwrap_or(DIODE_SI_2CM2);
        let space =
            ParameterSpace::preset(preset).map_err(|e| StudyError::config("preset", e))?;
        let x = match &self.x {
            Some(text) => text
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<Result<Vec<f64>, _>>()
                .map_err(|e| StudyError::config("x", e))?,
            None => vec![0.0; space.dim()],
        };
        let physical = space
            .denormalize(&x)
            .map_err(|e| StudyError::config("x", e))?;
        DiodeParams::from_slice(&physical).map_err(|e| StudyError::config("params", e))
    }
}

#[derive(Args)]
struct IvCurveArgs {
    #[command(flatten)]
    cell: CellArgs,

    /// Number of curve points
    #[arg(long, default_value_t = 100)]
    points: usize,

    /// Output CSV path (default: stdout)
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct StudyArgs {
    #[command(flatten)]
    model: ModelArgs,

    /// Number of gradient samples M
    #[arg(long)]
    samples: Option<usize>,

    /// Finite-difference step in normalized coordinates
    #[arg(long)]
    step: Option<f64>,

    /// Bootstrap replicate count M'
    #[arg(long)]
    bootstrap: Option<usize>,

    /// Bootstrap interval level
    #[arg(long)]
    level: Option<f64>,

    /// Active dimension: an integer or "auto"
    #[arg(long)]
    n: Option<String>,

    /// Enable the Sobol' stage with default settings
    #[arg(long)]
    sobol: bool,

    /// Sobol' expansion degree (implies --sobol)
    #[arg(long)]
    sobol_degree: Option<usize>,

    /// Sobol' quadrature points per dimension (implies --sobol)
    #[arg(long)]
    sobol_qpoints: Option<usize>,

    /// Emit a gnuplot script over the CSV artifacts
    #[arg(long)]
    gnuplot: bool,
}

fn main() {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: [stage=config kind=config] threads: {e}");
            std::process::exit(2);
        }
    }
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}

fn run(cli: Cli) -> Result<(), StudyError> {
    let out_dir = cli.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    match cli.command {
        Command::Sample(args) => {
            let resolved = resolve_model(&args.model.choice())?;
            let seed = cli.seed.unwrap_or(0);
            let set = build_sample_set(
                resolved.model.as_ref(),
                &resolved.space,
                args.count,
                args.step,
                seed,
            )
            .map_err(|e| gradient_failure("sample", e))?;
            let path = args
                .output
                .unwrap_or_else(|| out_dir.join("samples.csv"));
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)
                    .map_err(|e| StudyError::config("output", e))?;
            }
            set.write_csv(&path)
                .map_err(|e| StudyError::config("output", e))?;
            eprintln!(
                "wrote {} samples ({} model evaluations) to {}",
                set.len(),
                set.len() * (set.dim() + 1),
                path.display()
            );
            Ok(())
        }
        Command::Subspace(args) => {
            let samples = GradientSampleSet::load_csv(&args.input)
                .map_err(|e| gradient_failure("load", e))?;
            let estimate =
                estimate_c_matrix(&samples).map_err(|e| subspace_failure("subspace", e))?;
            let (suggested_n, gap_ratio) = estimate
                .suggest_gap()
                .map_err(|e| subspace_failure("subspace", e))?;
            let chosen_n = match args.n.as_str() {
                "auto" => suggested_n,
                text => text
                    .parse::<usize>()
                    .map_err(|e| StudyError::config("n", e))?,
            };

            let seed = cli.seed.unwrap_or_else(|| samples.seed());
            let summary = match args.bootstrap {
                Some(replicates) => Some(
                    bootstrap_subspace(
                        &samples,
                        chosen_n,
                        replicates,
                        args.level,
                        CounterRng::new(seed).derive(1).seed(),
                    )
                    .map_err(|e| bootstrap_failure("bootstrap", e))?,
                ),
                None => None,
            };

            std::fs::create_dir_all(&out_dir).map_err(|e| StudyError::config("out_dir", e))?;
            let m = samples.dim();
            let plot_n = m.saturating_sub(1).min(2).max(1);
            let plot_part = estimate
                .partition(plot_n)
                .map_err(|e| subspace_failure("summary-plot", e))?;
            let head = SUMMARY_POINTS.min(samples.len());
            let rows = summary_plot_data(
                &plot_part,
                &samples.points()[..head],
                &samples.values()[..head],
                plot_n,
            )
            .map_err(|e| subspace_failure("summary-plot", e))?;
            std::fs::write(out_dir.join("summary_plot.csv"), summary_plot_csv(&rows))
                .map_err(|e| StudyError::config("out_dir", e))?;
            if summary.is_some() {
                let cloud = replicate_summary_cloud(
                    &samples,
                    &plot_part,
                    CLOUD_REPLICATES,
                    &samples.points()[..head],
                    &samples.values()[..head],
                    CounterRng::new(seed).derive(2).seed(),
                )
                .map_err(|e| bootstrap_failure("replicate-cloud", e))?;
                std::fs::write(
                    out_dir.join("replicate_cloud.csv"),
                    replicate_cloud_csv(&cloud),
                )
                .map_err(|e| StudyError::config("out_dir", e))?;
            }

            print!(
                "{}",
                subspace_json(&estimate, suggested_n, gap_ratio, chosen_n, summary.as_ref())
            );
            Ok(())
        }
        Command::Sobol(args) => {
            let resolved = resolve_model(&args.model.choice())?;
            let pce = fit_pce(
                resolved.model.as_ref(),
                resolved.space.dim(),
                args.degree,
                args.qpoints,
            )
            .map_err(sobol_failure)?;
            let result = sobol_indices(&pce).map_err(sobol_failure)?;
            print!("{}", sobol_json(&resolved.space, &result));
            Ok(())
        }
        Command::Pmax(args) => {
            let params = args.params()?;
            let result = p_max(&params, &DiodeConstants::default())
                .map_err(|e| study::numerical_failure("pmax", e))?;
            print!("{}", pmax_json(&result));
            Ok(())
        }
        Command::IvCurve(args) => {
            let params = args.cell.params()?;
            if args.points < 2 {
                return Err(StudyError::config("points", "need at least 2 points"));
            }
            let curve = iv_curve(&params, &DiodeConstants::default(), args.points)
                .map_err(|e| study::numerical_failure("iv-curve", e))?;
            let csv = iv_curve_csv(&curve);
            match args.output {
                Some(path) => {
                    std::fs::write(&path, csv).map_err(|e| StudyError::config("output", e))?
                }
                None => print!("{csv}"),
            }
            Ok(())
        }
        Command::Study(args) => {
            let mut cfg = match &cli.config {
                Some(path) => StudyConfig::from_json_file(path)?,
                None => StudyConfig::default(),
            };
            if args.model.given() {
                cfg.model = args.model.choice();
            }
            if let Some(v) = args.samples {
                cfg.samples = v;
            }
            if let Some(v) = args.step {
                cfg.fd_step = v;
            }
            if let Some(v) = args.bootstrap {
                cfg.bootstrap_replicates = v;
            }
            if let Some(v) = args.level {
                cfg.level = v;
            }
            if let Some(text) = &args.n {
                cfg.n = match text.as_str() {
                    "auto" => ActiveDim::Auto,
                    t => ActiveDim::Fixed(
                        t.parse::<usize>().map_err(|e| StudyError::config("n", e))?,
                    ),
                };
            }
            if args.sobol || args.sobol_degree.is_some() || args.sobol_qpoints.is_some() {
                let mut settings = cfg.sobol.unwrap_or_default();
                if let Some(d) = args.sobol_degree {
                    settings.degree = d;
                }
                if let Some(q) = args.sobol_qpoints {
                    settings.qpoints = q;
                }
                cfg.sobol = Some(settings);
            }
            if args.gnuplot {
                cfg.gnuplot = true;
            }
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            if let Some(dir) = cli.out_dir {
                cfg.out_dir = dir;
            }

            let report = run_study(&cfg)?;
            eprintln!(
                "study complete: m={} M={} suggested n={} (gap ratio {:.2}), chosen n={}, \
                 {} gradient-stage evaluations{}, artifacts in {}",
                report.dim,
                report.config.samples,
                report.suggested_n,
                report.gap_ratio,
                report.chosen_n,
                report.gradient_evaluations,
                if report.sobol_evaluations > 0 {
                    format!(" + {} Sobol'-stage evaluations", report.sobol_evaluations)
                } else {
                    String::new()
                },
                cfg.out_dir.display()
            );
            Ok(())
        }
    }
}
