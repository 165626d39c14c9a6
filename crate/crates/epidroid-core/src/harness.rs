//! Experiment orchestration: warm-up, the baseline-extension or
//! enhancement phase, metrics, and report emission.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::EngineCtx;
use crate::explore::{Explorer, ExplorerConfig, ExplorerKind};
use crate::model::AppModel;
use crate::monitor::{BudgetGate, Metrics};
use crate::mse::Validation;
use crate::reasoner::{NoiseConfig, OracleReasoner, Reasoner, RemoteConfig, RemoteReasoner};
use crate::recompose::{IterationStats, LoopOutcome, RecomposeConfig};
use crate::stabilize::{StabilizeConfig, TestFragment};
use crate::trace::Trace;
use crate::utg::ConfirmedDependency;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Continue the warm-up explorer through the second phase.
    BaselineExt,
    /// Stabilize, profile, and recompose through the second phase.
    Epidroid,
    /// Ablation: no dependency reasoning (random fragment replay).
    EpidroidNoReasoning,
    /// Ablation: raw slices skip verification and minimization.
    EpidroidNoStabilization,
}

impl Mode {
    pub fn parse(text: &str) -> Option<Mode> {
        match text {
            "baseline_ext" => Some(Mode::BaselineExt),
            "epidroid" => Some(Mode::Epidroid),
            "epidroid_nor" => Some(Mode::EpidroidNoReasoning),
            "epidroid_nos" => Some(Mode::EpidroidNoStabilization),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::BaselineExt => "baseline_ext",
            Mode::Epidroid => "epidroid",
            Mode::EpidroidNoReasoning => "epidroid_nor",
            Mode::EpidroidNoStabilization => "epidroid_nos",
        }
    }
}

#[derive(Debug, Clone)]
pub enum ReasonerChoice {
    Oracle { noise: NoiseConfig },
    Remote { config: RemoteConfig },
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub explorer: ExplorerKind,
    pub warmup_events: u64,
    pub enhance_events: u64,
    pub mode: Mode,
    pub reasoner: ReasonerChoice,
    pub clustering_threshold: f64,
    pub bfs_depth: usize,
    pub bfs_budget: usize,
    pub seed: u64,
    pub slice_cap: usize,
    pub verification_replays: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            explorer: ExplorerKind::Frontier,
            warmup_events: 500,
            enhance_events: 500,
            mode: Mode::Epidroid,
            reasoner: ReasonerChoice::Oracle { noise: NoiseConfig::default() },
            clustering_threshold: 0.80,
            bfs_depth: 2,
            bfs_budget: 25,
            seed: 1,
            slice_cap: 40,
            verification_replays: 1,
        }
    }
}

/// Coverage numbers at a phase boundary.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PhaseMetrics {
    pub events: u64,
    pub covered_labels: usize,
    pub acc: f64,
    pub aac: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SignalTally {
    pub positive: usize,
    pub mismatch: usize,
    pub operational: usize,
}

/// The run report written to `report.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub app_id: String,
    pub mode: String,
    pub explorer: String,
    pub seed: u64,
    pub warmup_budget: u64,
    pub enhance_budget: u64,
    pub warmup: PhaseMetrics,
    pub final_metrics: PhaseMetrics,
    pub enhancement_delta_acc: f64,
    pub iterations: Vec<IterationStats>,
    pub signals: SignalTally,
    pub confirmed_dependencies: Vec<ConfirmedDependency>,
    pub rsr: f64,
    pub replay_attempts: u64,
    pub clusters: usize,
    pub fragments: usize,
    pub mses_total: usize,
    pub mses_valid: usize,
    pub mses_noise: usize,
    pub total_branches: usize,
    pub timestamp: String,
}

/// Everything a run produces, ready for emission.
pub struct RunArtifacts {
    pub report: RunReport,
    pub curve: Vec<u32>,
    pub covered: std::collections::BTreeSet<String>,
    pub fragments: Vec<TestFragment>,
    pub mses: Vec<crate::mse::MseRecord>,
    pub utg_dump: UtgDump,
}

/// Serializable view of the semantic UTG.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UtgDump {
    pub clusters: Vec<UtgClusterDump>,
    pub edges: Vec<UtgEdgeDump>,
    pub mse_annotations: BTreeMap<u32, Vec<u32>>,
    pub confirmed_dependencies: Vec<ConfirmedDependency>,
    pub pruned_prefixes: Vec<Vec<crate::model::Event>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UtgClusterDump {
    pub cluster_id: u32,
    pub page_id: String,
    pub activity_name: String,
    pub members: usize,
    pub summary: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UtgEdgeDump {
    pub source: u32,
    pub event: crate::model::Event,
    pub target: u32,
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
}

fn make_backend(model: &Arc<AppModel>, config: &ExperimentConfig) -> Box<dyn Reasoner> {
    match &config.reasoner {
        ReasonerChoice::Oracle { noise } => {
            Box::new(OracleReasoner::with_noise(model.clone(), config.seed, *noise))
        }
        ReasonerChoice::Remote { config } => Box::new(RemoteReasoner::new(config.clone())),
    }
}

/// Run the two-phase experiment with the configured backend.
pub fn run_experiment(model: Arc<AppModel>, config: &ExperimentConfig) -> RunArtifacts {
    let mut backend = make_backend(&model, config);
    run_experiment_with(model, config, backend.as_mut())
}

/// Run the two-phase experiment with an injected reasoning backend.
pub fn run_experiment_with(
    model: Arc<AppModel>,
    config: &ExperimentConfig,
    backend: &mut dyn Reasoner,
) -> RunArtifacts {
    let mut ctx = EngineCtx::new(model.clone(), config.clustering_threshold, config.seed);
    let mut driver = ctx.new_driver();
    let entry_cluster = {
        let (_, c) = ctx.current(&mut driver);
        c
    };

    // Warm-up phase.
    ctx.budget = BudgetGate::limited(config.warmup_events);
    let mut explorer = Explorer::new(&ExplorerConfig::new(config.explorer, config.seed));
    let mut warmup_trace = Trace::new(format!("{:?}", config.explorer).to_lowercase(), config.seed);
    explorer.run(&mut ctx, &mut driver, &mut warmup_trace);
    let warmup_metrics = ctx
        .monitor
        .metrics(model.total_branches(), model.activities().len());

    // Enhancement phase.
    ctx.budget = BudgetGate::limited(config.enhance_events);
    let mut loop_outcome = LoopOutcome::default();
    match config.mode {
        Mode::BaselineExt => {
            let mut ext_trace = Trace::new(
                format!("{:?}-ext", config.explorer).to_lowercase(),
                config.seed,
            );
            explorer.run(&mut ctx, &mut driver, &mut ext_trace);
        }
        mode => {
            let stabilize_config = StabilizeConfig {
                slice_cap: config.slice_cap,
                verification_replays: config.verification_replays,
                ..Default::default()
            };
            let recompose_config = RecomposeConfig {
                bfs_depth: config.bfs_depth,
                bfs_budget: config.bfs_budget,
                no_reasoning: mode == Mode::EpidroidNoReasoning,
                ablation_seed: config.seed,
                ..Default::default()
            };
            loop_outcome = crate::recompose::run_loop(
                &mut ctx,
                &mut driver,
                std::slice::from_ref(&warmup_trace),
                backend,
                entry_cluster,
                &stabilize_config,
                &recompose_config,
                mode == Mode::EpidroidNoStabilization,
            );
        }
    }

    let final_metrics = ctx
        .monitor
        .metrics(model.total_branches(), model.activities().len());
    build_artifacts(&ctx, config, &model, warmup_metrics, final_metrics, loop_outcome)
}

fn build_artifacts(
    ctx: &EngineCtx,
    config: &ExperimentConfig,
    model: &AppModel,
    warmup: Metrics,
    final_metrics: Metrics,
    loop_outcome: LoopOutcome,
) -> RunArtifacts {
    let signals = loop_outcome.iterations.iter().fold(SignalTally::default(), |mut t, i| {
        t.positive += i.positive;
        t.mismatch += i.mismatch;
        t.operational += i.operational;
        t
    });
    let timestamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs().to_string())
        .unwrap_or_default();

    let report = RunReport {
        app_id: model.app_id.clone(),
        mode: config.mode.as_str().to_string(),
        explorer: format!("{:?}", config.explorer).to_lowercase(),
        seed: config.seed,
        warmup_budget: config.warmup_events,
        enhance_budget: config.enhance_events,
        warmup: PhaseMetrics {
            events: warmup.events,
            covered_labels: warmup.covered_labels,
            acc: warmup.acc,
            aac: warmup.aac,
        },
        final_metrics: PhaseMetrics {
            events: final_metrics.events,
            covered_labels: final_metrics.covered_labels,
            acc: final_metrics.acc,
            aac: final_metrics.aac,
        },
        enhancement_delta_acc: final_metrics.acc - warmup.acc,
        iterations: loop_outcome.iterations.clone(),
        signals,
        confirmed_dependencies: ctx.utg.confirmed_dependencies().to_vec(),
        rsr: final_metrics.rsr,
        replay_attempts: ctx.monitor.replay_attempts(),
        clusters: ctx.clusters.clusters().len(),
        fragments: loop_outcome.fragments.len(),
        mses_total: ctx.mses.records().len(),
        mses_valid: ctx
            .mses
            .records()
            .iter()
            .filter(|r| r.validated == Validation::Valid)
            .count(),
        mses_noise: ctx
            .mses
            .records()
            .iter()
            .filter(|r| r.validated == Validation::Noise)
            .count(),
        total_branches: model.total_branches(),
        timestamp,
    };

    let utg_dump = UtgDump {
        clusters: ctx
            .clusters
            .clusters()
            .iter()
            .map(|c| UtgClusterDump {
                cluster_id: c.cluster_id,
                page_id: c.representative.widget_id.clone(),
                activity_name: c.activity_name.clone(),
                members: c.member_signatures.len(),
                summary: c.summary.clone(),
            })
            .collect(),
        edges: ctx
            .utg
            .edges()
            .map(|(source, edge)| UtgEdgeDump {
                source,
                event: edge.event.clone(),
                target: edge.target,
            })
            .collect(),
        mse_annotations: ctx
            .utg
            .annotations()
            .iter()
            .map(|(c, ids)| (*c, ids.iter().copied().collect()))
            .collect(),
        confirmed_dependencies: ctx.utg.confirmed_dependencies().to_vec(),
        pruned_prefixes: ctx.utg.pruned_prefixes().to_vec(),
    };

    RunArtifacts {
        report,
        curve: ctx.monitor.curve().to_vec(),
        covered: ctx.monitor.covered().clone(),
        fragments: loop_outcome.fragments,
        mses: ctx.mses.records().to_vec(),
        utg_dump,
    }
}

/// Write the five run artifacts plus a human-readable summary.
pub fn emit_report(artifacts: &RunArtifacts, out_dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(out_dir)?;
    let write_json = |name: &str, value: &dyn erased::Emit| -> Result<(), HarnessError> {
        let file = std::fs::File::create(out_dir.join(name))?;
        value.emit(&mut std::io::BufWriter::new(file))?;
        Ok(())
    };
    write_json("report.json", &erased::Json(&artifacts.report))?;
    write_json("fragments.json", &erased::Json(&artifacts.fragments))?;
    write_json("mses.json", &erased::Json(&artifacts.mses))?;
    write_json("semantic_utg.json", &erased::Json(&artifacts.utg_dump))?;

    let mut curve = std::io::BufWriter::new(std::fs::File::create(out_dir.join("curve.csv"))?);
    writeln!(curve, "event_index,covered_labels")?;
    for (i, covered) in artifacts.curve.iter().enumerate() {
        writeln!(curve, "{},{}", i + 1, covered)?;
    }

    let report = &artifacts.report;
    let mut summary = std::fs::File::create(out_dir.join("summary.txt"))?;
    writeln!(summary, "app: {}  mode: {}  seed: {}", report.app_id, report.mode, report.seed)?;
    writeln!(
        summary,
        "warm-up: {} events, ACC {:.4}, AAC {:.4}",
        report.warmup.events, report.warmup.acc, report.warmup.aac
    )?;
    writeln!(
        summary,
        "final:   {} events, ACC {:.4}, AAC {:.4}, RSR {:.4}",
        report.final_metrics.events, report.final_metrics.acc, report.final_metrics.aac, report.rsr
    )?;
    writeln!(summary, "enhancement delta ACC: {:+.4}", report.enhancement_delta_acc)?;
    writeln!(
        summary,
        "iterations: {}  signals: +{} / ~{} / !{}",
        report.iterations.len(),
        report.signals.positive,
        report.signals.mismatch,
        report.signals.operational
    )?;
    writeln!(
        summary,
        "clusters: {}  fragments: {}  mses: {} ({} valid, {} noise)",
        report.clusters, report.fragments, report.mses_total, report.mses_valid, report.mses_noise
    )?;
    writeln!(summary, "confirmed dependencies: {}", report.confirmed_dependencies.len())?;
    Ok(())
}

mod erased {
    use serde::Serialize;

    pub trait Emit {
        fn emit(&self, sink: &mut dyn std::io::Write) -> Result<(), serde_json::Error>;
    }

    pub struct Json<'a, T: Serialize>(pub &'a T);

    impl<T: Serialize> Emit for Json<'_, T> {
        fn emit(&self, sink: &mut dyn std::io::Write) -> Result<(), serde_json::Error> {
            serde_json::to_writer_pretty(sink, self.0)
        }
    }
}
