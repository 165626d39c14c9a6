//! Command-line driver: explore a simulated app, stabilize traces, run the
//! enhancement loop, or execute the full two-phase experiment.

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use epidroid_core::engine::EngineCtx;
use epidroid_core::explore::{Explorer, ExplorerConfig, ExplorerKind};
use epidroid_core::harness::{emit_report, run_experiment, ExperimentConfig, Mode, ReasonerChoice};
use epidroid_core::model::load_app_model;
use epidroid_core::monitor::BudgetGate;
use epidroid_core::reasoner::{NoiseConfig, RemoteConfig};
use epidroid_core::trace::{read_trace, write_trace, Trace};

const EXIT_CONFIG: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(name = "epidroid", about = "Dependency-guided recomposition over simulated GUI apps", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// App model JSON file.
    #[arg(long)]
    app: PathBuf,
    /// Random seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Page clustering threshold in (0,1].
    #[arg(long, default_value_t = 0.80)]
    threshold: f64,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct EnhanceOpts {
    /// Enhancement-phase event budget.
    #[arg(long, default_value_t = 500)]
    enhance_events: u64,
    /// Reasoning backend: `oracle` or `remote`.
    #[arg(long, default_value = "oracle")]
    reasoner: String,
    /// Endpoint for the remote reasoner (http://host:port).
    #[arg(long)]
    remote_endpoint: Option<String>,
    /// Oracle validation flip rate.
    #[arg(long, default_value_t = 0.0)]
    validation_flip: f64,
    /// Oracle impact recall.
    #[arg(long, default_value_t = 1.0)]
    impact_recall: f64,
    /// Bounded expansion depth.
    #[arg(long, default_value_t = 2)]
    bfs_depth: usize,
    /// Bounded expansion action budget.
    #[arg(long, default_value_t = 25)]
    bfs_budget: usize,
    /// Replays per fragment verification (majority voting above 1).
    #[arg(long, default_value_t = 1)]
    verification_replays: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Run a warm-up explorer and write its trace as JSON Lines.
    Explore {
        #[command(flatten)]
        common: CommonOpts,
        /// Explorer kind: `random` or `frontier`.
        #[arg(long, default_value = "frontier")]
        explorer: String,
        /// Event budget.
        #[arg(long, default_value_t = 500)]
        events: u64,
    },
    /// Slice, verify, and minimize a recorded trace into fragments.
    Stabilize {
        #[command(flatten)]
        common: CommonOpts,
        /// Trace file produced by `explore`.
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, default_value_t = 1)]
        verification_replays: usize,
    },
    /// Run the full enhancement loop over a recorded warm-up trace.
    Enhance {
        #[command(flatten)]
        common: CommonOpts,
        #[command(flatten)]
        enhance: EnhanceOpts,
        /// Trace file produced by `explore`.
        #[arg(long)]
        trace: PathBuf,
    },
    /// Run the two-phase experiment: warm-up then baseline-ext or epidroid.
    Run {
        #[command(flatten)]
        common: CommonOpts,
        #[command(flatten)]
        enhance: EnhanceOpts,
        /// Explorer kind: `random` or `frontier`.
        #[arg(long, default_value = "frontier")]
        explorer: String,
        /// Warm-up event budget.
        #[arg(long, default_value_t = 500)]
        warmup_events: u64,
        /// `baseline_ext`, `epidroid`, `epidroid_nor`, or `epidroid_nos`.
        #[arg(long, default_value = "epidroid")]
        mode: String,
    },
    /// Print the human-readable summary of an emitted report.
    Report {
        /// Output directory holding report.json.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(message)) => {
            eprintln!("configuration error: {message}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(CliError::Io(message)) => {
            eprintln!("io error: {message}");
            ExitCode::from(EXIT_IO)
        }
    }
}

enum CliError {
    Config(String),
    Io(String),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

fn parse_explorer(text: &str) -> Result<ExplorerKind, CliError> {
    match text {
        "random" => Ok(ExplorerKind::Random),
        "frontier" => Ok(ExplorerKind::Frontier),
        other => Err(CliError::Config(format!("unknown explorer `{other}`"))),
    }
}

fn load_model(path: &PathBuf) -> Result<Arc<epidroid_core::AppModel>, CliError> {
    match load_app_model(path) {
        Ok(model) => Ok(Arc::new(model)),
        Err(epidroid_core::model::ModelError::Io { path, source }) => {
            Err(CliError::Io(format!("{path}: {source}")))
        }
        Err(e) => Err(CliError::Config(e.to_string())),
    }
}

fn reasoner_choice(opts: &EnhanceOpts) -> Result<ReasonerChoice, CliError> {
    match opts.reasoner.as_str() {
        "oracle" => Ok(ReasonerChoice::Oracle {
            noise: NoiseConfig {
                validation_flip: opts.validation_flip,
                impact_recall: opts.impact_recall,
            },
        }),
        "remote" => {
            let endpoint = opts.remote_endpoint.clone().ok_or_else(|| {
                CliError::Config("--remote-endpoint required for the remote reasoner".into())
            })?;
            let mut config = RemoteConfig::new(endpoint);
            config.token = std::env::var("EPIDROID_REMOTE_TOKEN").ok();
            Ok(ReasonerChoice::Remote { config })
        }
        other => Err(CliError::Config(format!("unknown reasoner `{other}`"))),
    }
}

/// Rebuild clusters, the UTG, and MSE records by re-executing recorded
/// events against a fresh session.
fn replay_trace_through(ctx: &mut EngineCtx, trace: &Trace) {
    let mut driver = ctx.new_driver();
    for step in &trace.steps {
        let _ = ctx.step(&mut driver, &step.event);
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Explore { common, explorer, events } => {
            let model = load_model(&common.app)?;
            let kind = parse_explorer(&explorer)?;
            let mut ctx = EngineCtx::new(model, common.threshold, common.seed);
            ctx.budget = BudgetGate::limited(events);
            let mut driver = ctx.new_driver();
            let mut runner = Explorer::new(&ExplorerConfig::new(kind, common.seed));
            let mut trace = Trace::new(explorer, common.seed);
            let executed = runner.run(&mut ctx, &mut driver, &mut trace);
            std::fs::create_dir_all(&common.out)?;
            let path = common.out.join("trace.jsonl");
            let file = std::fs::File::create(&path)?;
            write_trace(std::io::BufWriter::new(file), &trace)
                .map_err(|e| CliError::Io(e.to_string()))?;
            println!(
                "explored {executed} events, covered {} labels, wrote {}",
                ctx.monitor.covered().len(),
                path.display()
            );
            Ok(())
        }
        Command::Stabilize { common, trace, verification_replays } => {
            let model = load_model(&common.app)?;
            let file = std::fs::File::open(&trace)?;
            let recorded = read_trace(std::io::BufReader::new(file), "recorded", common.seed)
                .map_err(|e| CliError::Config(e.to_string()))?;
            let mut ctx = EngineCtx::new(model, common.threshold, common.seed);
            let mut driver = ctx.new_driver();
            let entry = ctx.current(&mut driver).1;
            replay_trace_through(&mut ctx, &recorded);
            let config = epidroid_core::stabilize::StabilizeConfig {
                verification_replays,
                ..Default::default()
            };
            let report =
                epidroid_core::stabilize(&mut ctx, std::slice::from_ref(&recorded), entry, &config);
            std::fs::create_dir_all(&common.out)?;
            let path = common.out.join("fragments.json");
            let file = std::fs::File::create(&path)?;
            serde_json::to_writer_pretty(std::io::BufWriter::new(file), &report.fragments)
                .map_err(|e| CliError::Io(e.to_string()))?;
            println!(
                "stabilized {} slices into {} fragments ({} steps -> {}), wrote {}",
                report.slices,
                report.fragments.len(),
                report.steps_in,
                report.steps_out,
                path.display()
            );
            Ok(())
        }
        Command::Enhance { common, enhance, trace } => {
            let model = load_model(&common.app)?;
            let file = std::fs::File::open(&trace)?;
            let recorded = read_trace(std::io::BufReader::new(file), "recorded", common.seed)
                .map_err(|e| CliError::Config(e.to_string()))?;
            let choice = reasoner_choice(&enhance)?;
            let mut ctx = EngineCtx::new(model.clone(), common.threshold, common.seed);
            let mut driver = ctx.new_driver();
            let entry = ctx.current(&mut driver).1;
            replay_trace_through(&mut ctx, &recorded);
            ctx.budget = BudgetGate::limited(enhance.enhance_events);
            let mut backend: Box<dyn epidroid_core::reasoner::Reasoner> = match choice {
                ReasonerChoice::Oracle { noise } => {
                    Box::new(epidroid_core::reasoner::OracleReasoner::with_noise(
                        model.clone(),
                        common.seed,
                        noise,
                    ))
                }
                ReasonerChoice::Remote { config } => {
                    Box::new(epidroid_core::reasoner::RemoteReasoner::new(config))
                }
            };
            let outcome = epidroid_core::recompose::run_loop(
                &mut ctx,
                &mut driver,
                std::slice::from_ref(&recorded),
                backend.as_mut(),
                entry,
                &epidroid_core::stabilize::StabilizeConfig {
                    verification_replays: enhance.verification_replays,
                    ..Default::default()
                },
                &epidroid_core::recompose::RecomposeConfig {
                    bfs_depth: enhance.bfs_depth,
                    bfs_budget: enhance.bfs_budget,
                    ..Default::default()
                },
                false,
            );
            println!(
                "enhancement ran {} iterations over {} fragments; covered {} labels",
                outcome.iterations.len(),
                outcome.fragments.len(),
                ctx.monitor.covered().len()
            );
            Ok(())
        }
        Command::Run { common, enhance, explorer, warmup_events, mode } => {
            let model = load_model(&common.app)?;
            let kind = parse_explorer(&explorer)?;
            let mode = Mode::parse(&mode)
                .ok_or_else(|| CliError::Config(format!("unknown mode `{mode}`")))?;
            let reasoner = reasoner_choice(&enhance)?;
            let config = ExperimentConfig {
                explorer: kind,
                warmup_events,
                enhance_events: enhance.enhance_events,
                mode,
                reasoner,
                clustering_threshold: common.threshold,
                bfs_depth: enhance.bfs_depth,
                bfs_budget: enhance.bfs_budget,
                seed: common.seed,
                slice_cap: 40,
                verification_replays: enhance.verification_replays,
            };
            let artifacts = run_experiment(model, &config);
            emit_report(&artifacts, &common.out).map_err(|e| CliError::Io(e.to_string()))?;
            let summary = std::fs::read_to_string(common.out.join("summary.txt"))?;
            print!("{summary}");
            println!("artifacts written to {}", common.out.display());
            Ok(())
        }
        Command::Report { out } => {
            let summary = std::fs::read_to_string(out.join("summary.txt"))?;
            print!("{summary}");
            Ok(())
        }
    }
}
