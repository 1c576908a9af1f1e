use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use lcirl_core::features::Variant;
use lcirl_core::ingest::{ExtractSettings, SmoothingSettings};
use lcirl_core::trajopt::OptimizerSettings;
use log::info;

use crate::commands::{self, read_structured, ScenarioSource, SynthSpec};
use crate::config::{required, Config, SplitChoice, CONFIG_ENV};
use crate::error::{AppError, AppResult};
use crate::tables::{Schema, Units};

#[derive(Debug, Parser)]
#[command(name = "lcirl", version, about = "Lane-change reward learning and trajectory generation")]
pub struct Cli {
    /// TOML config file with per-command sections.
    #[arg(long, global = true, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    /// Worker threads; results are merged in scenario id order.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Log progress (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract lane-change scenarios from recorded tracks.
    Ingest(IngestArgs),
    /// Fit reward weights to a directory of scenarios.
    Train(TrainArgs),
    /// Optimize ego trajectories under a learned model.
    Generate(GenerateArgs),
    /// Compare two sets of generated trajectories against the experts.
    Eval(EvalArgs),
    /// Write synthetic scenarios, experts and track fixtures.
    Synth(SynthArgs),
    /// Draw a snapshot and export per-step series.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long, num_args = 1..)]
    pub input: Option<Vec<PathBuf>>,
    #[arg(long, value_enum)]
    pub schema: Option<Schema>,
    /// Position units; `ngsim` defaults to feet, `simple` to meters.
    #[arg(long, value_enum)]
    pub units: Option<Units>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Longitudinal reach (m) of the lane fits around the change point.
    #[arg(long)]
    pub vicinity: Option<f64>,
    /// Scenario id prefix; defaults to the input file stem.
    #[arg(long)]
    pub source: Option<String>,
    #[arg(long)]
    pub smoothing_window: Option<f64>,
    #[arg(long)]
    pub smoothing_tau: Option<f64>,
    #[arg(long)]
    pub replay_tolerance: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Explicit scenario-to-split assignment (TOML or JSON).
    #[arg(long)]
    pub split_spec: Option<PathBuf>,
    /// Which split to train on.
    #[arg(long, value_enum)]
    pub split: Option<SplitChoice>,
    #[arg(long, value_parser = parse_variant)]
    pub variant: Option<Variant>,
    /// Grid axes over c, t_p, t_f, c_p and c_f (TOML or JSON).
    #[arg(long)]
    pub sweep_grid: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_model: Option<PathBuf>,
    /// Training report; defaults to the model path with `.report.json`.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Directory of `<scenario id>.csv` prediction traces.
    #[arg(long)]
    pub trace_dir: Option<PathBuf>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub theta_max: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, conflicts_with = "data_dir")]
    pub scenario: Option<PathBuf>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub trace_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub expert_dir: Option<PathBuf>,
    #[arg(long)]
    pub gen_dir_a: Option<PathBuf>,
    #[arg(long)]
    pub gen_dir_b: Option<PathBuf>,
    /// Output directory for the report, per-scenario errors and state bands.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long)]
    pub label_a: Option<String>,
    #[arg(long)]
    pub label_b: Option<String>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Scene and recording description (TOML or JSON).
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Comma-separated θ*; 5 entries for baseline, 7 for unpred.
    #[arg(long, value_delimiter = ',')]
    pub theta_star: Option<Vec<f64>>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Also write a scripted lane-change recording in this column layout.
    #[arg(long, value_enum)]
    pub fixture_format: Option<Schema>,
    /// Standard deviation of Gaussian noise on expert speeds (m/s).
    #[arg(long)]
    pub noise: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Scenario files holding generated egos to overlay.
    #[arg(long, num_args = 1..)]
    pub gen: Option<Vec<PathBuf>>,
    /// Snapshot time (s).
    #[arg(long)]
    pub time: Option<f64>,
    /// Output prefix; writes `<out>.svg` and `<out>.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    match s {
        "baseline" => Ok(Variant::Baseline),
        "unpred" => Ok(Variant::Unpred),
        _ => Err(format!("unknown variant {s:?}; expected baseline or unpred")),
    }
}

fn optimizer_with(base: Option<OptimizerSettings>, restarts: Option<usize>, seed: Option<u64>) -> OptimizerSettings {
    let mut o = base.unwrap_or_default();
    if let Some(r) = restarts {
        o.restarts = r;
    }
    if let Some(s) = seed {
        o.seed = s;
    }
    o
}

/// Runs one parsed command line against `config`.
pub fn run(cli: Cli, config: &Config) -> AppResult<()> {
    match cli.command {
        Command::Ingest(a) => {
            let c = &config.ingest;
            let schema = a.schema.or(c.schema).unwrap_or(Schema::Ngsim);
            let defaults = ExtractSettings::default();
            let window = a.smoothing_window.or(c.smoothing_window).unwrap_or(defaults.smoothing.window);
            let settings = ExtractSettings {
                vicinity: a.vicinity.or(c.vicinity).unwrap_or(defaults.vicinity),
                smoothing: SmoothingSettings {
                    window,
                    tau: a.smoothing_tau.or(c.smoothing_tau).unwrap_or(window / 3.0),
                },
                replay_tolerance: a.replay_tolerance.or(c.replay_tolerance).unwrap_or(defaults.replay_tolerance),
                ..defaults
            };
            let o = commands::IngestOptions {
                inputs: required(a.input, c.input.clone(), "--input")?,
                units: a.units.or(c.units).unwrap_or(schema.default_units()),
                columns: c.columns.clone().unwrap_or_else(|| schema.columns()),
                out_dir: required(a.out_dir, c.out_dir.clone(), "--out-dir")?,
                source: a.source.or(c.source.clone()),
                settings,
            };
            let log = commands::ingest(&o)?;
            let n: usize = log.inputs.iter().map(|i| i.scenarios.len()).sum();
            let skipped: usize = log.inputs.iter().map(|i| i.skipped.len()).sum();
            println!("{n} scenarios written to {}, {skipped} lane changes skipped", o.out_dir.display());
        }
        Command::Train(a) => {
            let c = &config.train;
            let out_model = required(a.out_model, c.out_model.clone(), "--out-model")?;
            let report = a.report.or(c.report.clone()).unwrap_or_else(|| out_model.with_extension("report.json"));
            let mut fit = c.fit.unwrap_or_default();
            if let Some(m) = a.max_iterations {
                fit.max_iterations = m;
            }
            if let Some(t) = a.theta_max {
                fit.theta_max = t;
            }
            let o = commands::TrainOptions {
                data_dir: required(a.data_dir, c.data_dir.clone(), "--data-dir")?,
                split_spec: a.split_spec.or(c.split_spec.clone()),
                split: a.split.or(c.split).unwrap_or(SplitChoice::Train),
                variant: a.variant.or(c.variant).unwrap_or(Variant::Baseline),
                sweep_grid: a.sweep_grid.or(c.sweep_grid.clone()),
                seed: a.seed.or(c.seed).unwrap_or(0),
                out_model,
                report,
                trace_dir: a.trace_dir.or(c.trace_dir.clone()),
                features: c.features.unwrap_or_default(),
                fit,
                optimizer: c.optimizer.unwrap_or_default(),
            };
            let (model, out) = commands::train(&o)?;
            println!(
                "{} model from {} scenarios: log-likelihood {:.6}, {} iterations ({:?}), theta {:?}",
                model.variant.name(),
                out.scenarios.len(),
                out.training.loglik,
                out.training.iterations,
                out.training.termination,
                model.theta.values
            );
        }
        Command::Generate(a) => {
            let c = &config.generate;
            let input = match (a.scenario.or(c.scenario.clone()), a.data_dir.or(c.data_dir.clone())) {
                (Some(f), None) => ScenarioSource::File(f),
                (None, Some(d)) => ScenarioSource::Dir(d),
                (Some(_), Some(_)) => {
                    return Err(AppError::Input("give either --scenario or --data-dir, not both".into()))
                }
                (None, None) => return Err(AppError::Input("missing --scenario or --data-dir".into())),
            };
            let o = commands::GenerateOptions {
                model: required(a.model, c.model.clone(), "--model")?,
                input,
                out_dir: required(a.out_dir, c.out_dir.clone(), "--out-dir")?,
                trace_dir: a.trace_dir.or(c.trace_dir.clone()),
                optimizer: optimizer_with(c.optimizer, a.restarts.or(c.restarts), a.seed.or(c.seed)),
            };
            let records = commands::generate(&o)?;
            let mut stops = std::collections::BTreeMap::new();
            for r in &records {
                let name = serde_json::to_value(r.report.termination).ok().and_then(|v| v.as_str().map(String::from));
                *stops.entry(name.unwrap_or_default()).or_insert(0usize) += 1;
            }
            let stops: Vec<String> = stops.iter().map(|(k, n)| format!("{k} {n}")).collect();
            println!("{} trajectories written to {} ({})", records.len(), o.out_dir.display(), stops.join(", "));
        }
        Command::Eval(a) => {
            let c = &config.eval;
            let expert_dir = required(a.expert_dir, c.expert_dir.clone(), "--expert-dir")?;
            let default_name = expert_dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            let o = commands::EvalOptions {
                gen_dir_a: required(a.gen_dir_a, c.gen_dir_a.clone(), "--gen-dir-a")?,
                gen_dir_b: required(a.gen_dir_b, c.gen_dir_b.clone(), "--gen-dir-b")?,
                out: required(a.out, c.out.clone(), "--out")?,
                dataset: a.dataset.or(c.dataset.clone()).unwrap_or(default_name),
                labels: [
                    a.label_a.or(c.label_a.clone()).unwrap_or_else(|| "a".into()),
                    a.label_b.or(c.label_b.clone()).unwrap_or_else(|| "b".into()),
                ],
                expert_dir,
            };
            let out = commands::eval(&o)?;
            print!("{}", out.text);
        }
        Command::Synth(a) => {
            let c = &config.synth;
            let spec = match a.spec.or(c.spec.clone()) {
                Some(p) => read_structured::<SynthSpec>(&p)?,
                None => SynthSpec::default(),
            };
            let o = commands::SynthOptions {
                spec,
                theta_star: a.theta_star.or(c.theta_star.clone()),
                n: a.n.or(c.n).unwrap_or(1),
                seed: a.seed.or(c.seed).unwrap_or(0),
                out_dir: required(a.out_dir, c.out_dir.clone(), "--out-dir")?,
                fixture_format: a.fixture_format.or(c.fixture_format),
                noise: a.noise.or(c.noise).unwrap_or(0.0),
                optimizer: OptimizerSettings::default(),
            };
            let records = commands::synth(&o)?;
            println!("{} scenarios written to {}", records.len(), o.out_dir.display());
        }
        Command::Plot(a) => {
            let c = &config.plot;
            let o = commands::PlotOptions {
                scenario: required(a.scenario, c.scenario.clone(), "--scenario")?,
                gens: a.gen.or(c.gen.clone()).unwrap_or_default(),
                time: a.time.or(c.time).unwrap_or(3.0),
                out: required(a.out, c.out.clone(), "--out")?,
            };
            let (svg, csv) = commands::plot(&o)?;
            println!("wrote {} and {}", svg.display(), csv.display());
        }
    }
    Ok(())
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = Config::discover(cli.config.as_deref()).and_then(|config| {
        let jobs = cli.jobs.or(config.jobs);
        let mut pool = rayon::ThreadPoolBuilder::new();
        if let Some(j) = jobs {
            if j == 0 {
                return Err(AppError::Input("--jobs must be at least 1".into()));
            }
            pool = pool.num_threads(j);
        }
        let pool = pool.build().map_err(|e| AppError::Input(format!("worker pool: {e}")))?;
        info!("using {} worker threads", pool.current_num_threads());
        pool.install(|| run(cli, &config))
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            eprintln!("{}", e.summary());
            e.exit_code()
        }
    }
}
