//! Dependency-guided recomposition engine for simulated GUI applications:
//! trace stabilization, semantic profiling over a pluggable reasoner, and
//! composite replay that unlocks state-gated behavior forward exploration
//! misses.

pub mod cluster;
pub mod engine;
pub mod explore;
pub mod fixtures;
pub mod harness;
pub mod model;
pub mod monitor;
pub mod mse;
pub mod reasoner;
pub mod recompose;
pub mod stabilize;
pub mod trace;
pub mod utg;
pub mod view;

pub use cluster::{abstract_view_tree, dice_similarity, AbstractState, ClusterId, ClusterRegistry};
pub use engine::{Driver, EngineCtx, EngineError};
pub use model::{load_app_model, parse_app_model, AppModel, Event, EventKind, Session};
pub use monitor::{BudgetGate, CoverageMonitor, Metrics};
pub use mse::{MseRecord, MseRegistry, Scope};
pub use recompose::{classify_signal, FeedbackSignal, SignalKind};
pub use stabilize::{stabilize, TestFragment};
pub use utg::{MsePriorityQueue, SemanticUtg};
