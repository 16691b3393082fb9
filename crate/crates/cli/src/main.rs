//! `emx`: run, sweep and inspect optimizer experiments.
//!
//! Exit status is 0 for completed runs, 2 when a run diverged and 3 for
//! config or usage errors. Other failures (I/O, corrupt checkpoints) exit 1.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use emx_core::ema_analysis::{dema_weights, ema_weights, mixture_weights, nested_ema_weights};
use emx_core::harness::emit::{self, Format};
use emx_core::harness::toys::{self, Toy};
use emx_core::harness::{
    resume, run_experiment, run_forgetting_protocol, run_sweep, run_until, ExperimentConfig,
    ForgettingConfig, GridAxis, RunRecord, RunState, RunStatus,
};
use emx_core::Error;

#[derive(Parser, Debug)]
#[command(name = "emx", version, about = "AdEMAMix experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one experiment and write its per-step records.
    Run {
        config: PathBuf,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Run a config over a grid of overrides.
    Sweep {
        config: PathBuf,
        /// `dotted.key=v1,v2,...`; repeat for a cartesian product.
        #[arg(long = "grid", required = true)]
        grid: Vec<String>,
        /// Directory for `summary.csv` and one record file per grid point.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
        format: FormatArg,
    },
    /// 2D trajectory experiments with a learning-rate sweep.
    Toy(ToyArgs),
    /// Emit per-age EMA weight profiles as `age,weight` CSV.
    AnalyzeEma(EmaArgs),
    /// Control and injected runs for a held-out batch.
    Forget {
        config: PathBuf,
        #[arg(long = "t-b")]
        t_b: u64,
        /// Directory for `control`, `injected` and `normalized` tables.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Save a run state part-way through, or resume from one.
    Checkpoint {
        #[command(subcommand)]
        action: CheckpointAction,
    },
}

#[derive(Subcommand, Debug)]
enum CheckpointAction {
    /// Run the first `--at` steps and save parameters and optimizer state.
    Save {
        config: PathBuf,
        #[arg(long)]
        at: u64,
        #[arg(long)]
        state: PathBuf,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Resume from a saved state and run to the end of the config.
    Load {
        config: PathBuf,
        #[arg(long)]
        state: PathBuf,
        #[command(flatten)]
        out: OutputArgs,
    },
}

#[derive(Args, Debug)]
struct OutputArgs {
    /// Output file; defaults to the config's `output`, then stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Defaults to JSONL for `.jsonl` paths, CSV otherwise.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Csv,
    Jsonl,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Jsonl => Format::Jsonl,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ToyOptimizer {
    Adamw,
    Ademamix,
}

#[derive(Args, Debug)]
struct ToyArgs {
    #[arg(value_parser = ["rosenbrock", "valley"])]
    toy: String,
    #[arg(long, value_enum, default_value_t = ToyOptimizer::Ademamix)]
    optimizer: ToyOptimizer,
    #[arg(long, default_value_t = 0.9)]
    beta1: f64,
    #[arg(long, default_value_t = 0.999)]
    beta2: f64,
    #[arg(long, default_value_t = 0.999)]
    beta3: f64,
    #[arg(long, default_value_t = 9.0)]
    alpha: f64,
    /// Learning rates to try; the best final distance wins.
    #[arg(long, value_delimiter = ',', default_value = "0.001,0.002,0.005,0.01,0.02,0.05,0.1,0.2")]
    lr: Vec<f64>,
    #[arg(long, default_value_t = 5000)]
    steps: u64,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    start: Option<Vec<f64>>,
    /// Initial value of every first-moment buffer.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    preseed: Option<Vec<f64>>,
    /// Trajectory of the best run.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum EmaKind {
    Single,
    Mixture,
    Nested,
    Dema,
}

#[derive(Args, Debug)]
struct EmaArgs {
    #[arg(long, value_enum)]
    kind: EmaKind,
    /// Decay of `single` and `dema`, fast decay of `mixture`, inner decay of `nested`.
    #[arg(long, default_value_t = 0.9)]
    beta: f64,
    /// Slow decay of `mixture`, outer decay of `nested`.
    #[arg(long, default_value_t = 0.9999)]
    beta_slow: f64,
    #[arg(long, default_value_t = 5.0)]
    alpha: f64,
    #[arg(long, default_value_t = 10)]
    window: usize,
    #[arg(long, default_value_t = 10_000)]
    horizon: usize,
    /// Divide by the total weight.
    #[arg(long)]
    normalize: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Other(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::InvalidParameter(_) | Error::LengthMismatch { .. } => {
                Failure::Config(e.to_string())
            }
            other => Failure::Other(other.to_string()),
        }
    }
}

type CliResult = Result<RunStatus, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(RunStatus::Completed) => ExitCode::SUCCESS,
        Ok(RunStatus::Diverged { step }) => {
            eprintln!("diverged at step {step}");
            ExitCode::from(2)
        }
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Other(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(command: Command) -> CliResult {
    match command {
        Command::Run { config, out } => {
            let cfg = load_config(&config)?;
            let record = run_experiment(&cfg)?;
            write_record(&record, &cfg, &out)?;
            Ok(record.status)
        }
        Command::Sweep {
            config,
            grid,
            out_dir,
            format,
        } => sweep(&config, &grid, out_dir.as_deref(), format.into()),
        Command::Toy(args) => toy(args),
        Command::AnalyzeEma(args) => analyze_ema(args),
        Command::Forget {
            config,
            t_b,
            out_dir,
        } => forget(&config, t_b, out_dir.as_deref()),
        Command::Checkpoint { action } => checkpoint(action),
    }
}

fn load_config(path: &Path) -> Result<ExperimentConfig, Failure> {
    let cfg = ExperimentConfig::load(path).map_err(|e| match e {
        Error::Io { .. } => Failure::Config(e.to_string()),
        other => other.into(),
    })?;
    Ok(cfg.with_env_seed()?)
}

fn write_bytes(path: Option<&Path>, bytes: &[u8]) -> Result<(), Failure> {
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(|e| {
            Failure::from(Error::Io {
                path: p.to_path_buf(),
                source: e,
            })
        }),
        None => std::io::stdout()
            .write_all(bytes)
            .map_err(|e| Failure::Other(format!("stdout: {e}"))),
    }
}

fn record_bytes(record: &RunRecord, format: Format) -> Result<Vec<u8>, Failure> {
    Ok(match format {
        Format::Csv => emit::record_csv_bytes(record)?,
        Format::Jsonl => emit::jsonl_bytes(&record.rows)?,
    })
}

fn write_record(record: &RunRecord, cfg: &ExperimentConfig, out: &OutputArgs) -> Result<(), Failure> {
    let path = out.out.clone().or_else(|| cfg.output.as_ref().map(PathBuf::from));
    let format = match (out.format, &path) {
        (Some(f), _) => f.into(),
        (None, Some(p)) => Format::from_path(p),
        (None, None) => Format::Csv,
    };
    write_bytes(path.as_deref(), &record_bytes(record, format)?)
}

fn sweep(config: &Path, grid: &[String], out_dir: Option<&Path>, format: Format) -> CliResult {
    let cfg = load_config(config)?;
    let axes = grid
        .iter()
        .map(|g| GridAxis::parse(g))
        .collect::<Result<Vec<_>, _>>()?;
    let result = run_sweep(&cfg, &axes)?;
    let summary = match format {
        Format::Csv => emit::summary_csv_bytes(&result.keys, &result.summary)?,
        Format::Jsonl => emit::jsonl_bytes(&result.summary)?,
    };
    match out_dir {
        Some(dir) => {
            create_dir(dir)?;
            let ext = extension(format);
            for (i, record) in result.records.iter().enumerate() {
                let path = dir.join(format!("point_{i}.{ext}"));
                write_bytes(Some(&path), &record_bytes(record, format)?)?;
            }
            write_bytes(Some(&dir.join(format!("summary.{ext}"))), &summary)?;
        }
        None => write_bytes(None, &summary)?,
    }
    let diverged = result.summary.iter().filter(|s| s.diverged).count();
    if diverged > 0 {
        eprintln!("{diverged} of {} grid points diverged", result.summary.len());
    }
    Ok(RunStatus::Completed)
}

fn extension(format: Format) -> &'static str {
    match format {
        Format::Csv => "csv",
        Format::Jsonl => "jsonl",
    }
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| {
        Failure::from(Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })
    })
}

fn toy(args: ToyArgs) -> CliResult {
    let toy = Toy::from_name(&args.toy).expect("validated by clap");
    let optimizer = match args.optimizer {
        ToyOptimizer::Adamw => toys::adam(args.beta1, args.beta2),
        ToyOptimizer::Ademamix => toys::ademamix(args.beta1, args.beta2, args.beta3, args.alpha),
    };
    let mut cfg = toys::toy_config(toy, optimizer, args.lr[0], args.steps);
    if let Some(start) = args.start {
        match &mut cfg.testbed {
            emx_core::harness::TestbedConfig::Rosenbrock { start: s }
            | emx_core::harness::TestbedConfig::Valley { start: s } => *s = start,
            _ => unreachable!("toys are 2D"),
        }
    }
    cfg.preseed = args.preseed;
    let cfg = cfg.with_env_seed()?;
    cfg.validate()?;
    let best = toys::best_over_lr(&cfg, &args.lr)?;
    let start = match &cfg.testbed {
        emx_core::harness::TestbedConfig::Rosenbrock { start }
        | emx_core::harness::TestbedConfig::Valley { start } => start.clone(),
        _ => unreachable!("toys are 2D"),
    };
    println!(
        "best lr {} final distance {} closest approach {} x2 sign changes {}",
        best.lr,
        emit::format_float(best.final_distance),
        emit::format_float(toys::closest_approach(&best.record)),
        toys::coordinate_oscillations(&best.record, &start, 1)
    );
    if let Some(path) = args.out {
        let format = Format::from_path(&path);
        write_bytes(Some(&path), &record_bytes(&best.record, format)?)?;
    }
    Ok(best.record.status)
}

fn analyze_ema(args: EmaArgs) -> CliResult {
    let profile = match args.kind {
        EmaKind::Single => ema_weights(args.beta, args.horizon),
        EmaKind::Mixture => mixture_weights(args.beta, args.beta_slow, args.alpha, args.horizon),
        EmaKind::Nested => nested_ema_weights(args.beta, args.beta_slow, args.horizon),
        EmaKind::Dema => dema_weights(args.beta, args.window, args.horizon),
    }?;
    let profile = if args.normalize {
        let total = profile.total();
        profile.normalized_by(total)
    } else {
        profile
    };
    write_bytes(args.out.as_deref(), &emit::weights_csv_bytes(&profile.weights)?)?;
    Ok(RunStatus::Completed)
}

fn forget(config: &Path, t_b: u64, out_dir: Option<&Path>) -> CliResult {
    let mut cfg = load_config(config)?;
    cfg.forgetting = Some(ForgettingConfig { t_b });
    let result = run_forgetting_protocol(&cfg)?;
    if let Some(dir) = out_dir {
        create_dir(dir)?;
        write_bytes(Some(&dir.join("control.csv")), &emit::record_csv_bytes(&result.control)?)?;
        write_bytes(Some(&dir.join("injected.csv")), &emit::record_csv_bytes(&result.injected)?)?;
        let mut curve = String::from("offset,normalized\n");
        for (s, v) in result.normalized.iter().flatten().enumerate() {
            curve.push_str(&format!("{s},{}\n", emit::format_float(*v)));
        }
        write_bytes(Some(&dir.join("normalized.csv")), curve.as_bytes())?;
    }
    let gap = result.gap();
    let first = gap.iter().find(|(s, _)| *s == t_b + 1).map(|g| g.1);
    println!(
        "t_b {t_b} gap at t_b+1 {} positive for {} steps",
        first.map(emit::format_float).unwrap_or_else(|| "n/a".into()),
        result.positive_gap_steps()
    );
    Ok(if result.control.diverged() {
        result.control.status
    } else {
        result.injected.status
    })
}

fn checkpoint(action: CheckpointAction) -> CliResult {
    match action {
        CheckpointAction::Save {
            config,
            at,
            state,
            out,
        } => {
            let cfg = load_config(&config)?;
            let (record, run_state) = run_until(&cfg, at)?;
            if record.status == RunStatus::Completed {
                write_bytes(Some(&state), &run_state.encode())?;
            }
            write_record(&record, &cfg, &out)?;
            Ok(record.status)
        }
        CheckpointAction::Load { config, state, out } => {
            let cfg = load_config(&config)?;
            let bytes = std::fs::read(&state).map_err(|e| {
                Failure::from(Error::Io {
                    path: state.clone(),
                    source: e,
                })
            })?;
            let run_state = RunState::decode(&bytes)?;
            if run_state.theta.len() != cfg.testbed.dim() {
                return Err(Failure::Config(format!(
                    "state has {} parameters, config expects {}",
                    run_state.theta.len(),
                    cfg.testbed.dim()
                )));
            }
            let record = resume(&cfg, run_state)?;
            write_record(&record, &cfg, &out)?;
            Ok(record.status)
        }
    }
}
