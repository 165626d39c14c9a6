//! Shared execution context: every simulated event flows through here so
//! that clustering, the UTG, MSE tracking, and the coverage monitor stay
//! consistent across stages.

use std::collections::BTreeSet;
use std::sync::Arc;

use thiserror::Error;

use crate::cluster::{AbstractState, ClusterId, ClusterRegistry};
use crate::model::{AppModel, Event, EventKind, Session, SessionError};
use crate::monitor::{BudgetGate, CoverageMonitor};
use crate::mse::{detect_candidates, MseId, MseRegistry};
use crate::trace::TraceStep;
use crate::utg::SemanticUtg;

/// A session plus the recent-step log used to derive trigger suffixes.
#[derive(Debug, Clone)]
pub struct Driver {
    pub session: Session,
    log: Vec<LogStep>,
    cached: Option<(AbstractState, ClusterId)>,
}

#[derive(Debug, Clone)]
struct LogStep {
    event: Event,
    pre_cluster: ClusterId,
    post_cluster: ClusterId,
}

/// Everything observed while executing one event.
#[derive(Debug, Clone)]
pub struct EngineStep {
    pub pre_cluster: ClusterId,
    pub post_cluster: ClusterId,
    pub post_signature: u64,
    /// Labels new to this session.
    pub session_delta: BTreeSet<String>,
    /// Labels new to the whole run.
    pub run_delta: BTreeSet<String>,
    /// Whether the post signature was never seen this run.
    pub new_signature: bool,
    pub transitioned: bool,
    pub diverged: bool,
    /// MSE records created or updated by this step.
    pub observations: Vec<MseId>,
    pub trace_step: TraceStep,
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("event budget exhausted")]
    BudgetExhausted,
}

/// Single-writer state for one experiment run.
pub struct EngineCtx {
    pub model: Arc<AppModel>,
    pub clusters: ClusterRegistry,
    pub utg: SemanticUtg,
    pub mses: MseRegistry,
    pub monitor: CoverageMonitor,
    pub budget: BudgetGate,
    /// Diagnostics for rejected observations.
    pub rejected_observations: Vec<String>,
    session_counter: u64,
    base_seed: u64,
}

impl EngineCtx {
    pub fn new(model: Arc<AppModel>, threshold: f64, seed: u64) -> EngineCtx {
        EngineCtx {
            model,
            clusters: ClusterRegistry::new(threshold),
            utg: SemanticUtg::default(),
            mses: MseRegistry::default(),
            monitor: CoverageMonitor::default(),
            budget: BudgetGate::unlimited(),
            rejected_observations: Vec::new(),
            session_counter: 0,
            base_seed: seed,
        }
    }

    /// Fresh session at the entry page; its derived seed keeps distinct
    /// sessions on distinct random streams.
    pub fn new_driver(&mut self) -> Driver {
        self.session_counter += 1;
        let seed = self
            .base_seed
            .wrapping_mul(0x9e37_79b9_7f4a_7c15)
            .wrapping_add(self.session_counter);
        let session = Session::reset(self.model.clone(), seed);
        let state = session.observe_state();
        let cluster = self.admit(&state);
        self.monitor.note_signature(state.signature);
        self.monitor.note_activity(&state.activity_name);
        Driver { session, log: Vec::new(), cached: Some((state, cluster)) }
    }

    fn admit(&mut self, state: &AbstractState) -> ClusterId {
        let id = self.clusters.assign(state);
        self.utg.register_cluster(id);
        id
    }

    /// Current abstract state and cluster of a driver.
    pub fn current(&mut self, driver: &mut Driver) -> (AbstractState, ClusterId) {
        if let Some(cached) = &driver.cached {
            return cached.clone();
        }
        let state = driver.session.observe_state();
        let cluster = self.admit(&state);
        driver.cached = Some((state.clone(), cluster));
        (state, cluster)
    }

    /// Execute one event and fold the outcome into every tracker.
    pub fn step(&mut self, driver: &mut Driver, event: &Event) -> Result<EngineStep, EngineError> {
        if !self.budget.try_spend() {
            return Err(EngineError::BudgetExhausted);
        }
        let (pre_state, pre_cluster) = self.current(driver);
        let result = match driver.session.execute_event(event) {
            Ok(result) => result,
            Err(err) => {
                // The attempted event still consumed budget; surface the
                // stale locator to the caller.
                return Err(EngineError::Session(err));
            }
        };
        let post_state = result.post_state.clone();
        let post_cluster = self.admit(&post_state);
        let new_signature = self.monitor.note_signature(post_state.signature);
        let run_delta = self
            .monitor
            .note_event(&result.coverage_delta, &post_state.activity_name);

        if result.transitioned && !result.diverged && event.kind != EventKind::Restart {
            // Restart edges would reset mutations mid-navigation, and
            // diverted landings are not repeatable routes.
            let _ = self.utg.upsert_transition(pre_cluster, event.clone(), post_cluster);
        }

        let mut observations = Vec::new();
        if result.transitioned || result.ui_changed {
            for obs in detect_candidates(
                &pre_state.tree,
                event,
                &post_state.tree,
                pre_cluster,
                self.monitor.events(),
            ) {
                let sigma = sigma_suffix(&driver.log, obs.cluster_id, event);
                match self.mses.record_observation(obs, sigma) {
                    Ok(id) => {
                        self.utg.annotate_mse(pre_cluster, id);
                        observations.push(id);
                    }
                    Err(err) => self.rejected_observations.push(err.to_string()),
                }
            }
        }

        driver.log.push(LogStep { event: event.clone(), pre_cluster, post_cluster });
        driver.cached = Some((post_state.clone(), post_cluster));

        Ok(EngineStep {
            pre_cluster,
            post_cluster,
            post_signature: post_state.signature,
            session_delta: result.coverage_delta.clone(),
            run_delta,
            new_signature,
            transitioned: result.transitioned,
            diverged: result.diverged,
            observations,
            trace_step: TraceStep {
                pre_signature: pre_state.signature,
                event: event.clone(),
                post_signature: post_state.signature,
                coverage_delta: result.coverage_delta.into_iter().collect(),
                pre_cluster,
                post_cluster,
            },
        })
    }
}

/// Shortest event suffix ending at `current` that starts right after the
/// most recent entry into `cluster`; sessions born inside the cluster use
/// their whole log.
fn sigma_suffix(log: &[LogStep], cluster: ClusterId, current: &Event) -> Vec<Event> {
    let mut start = 0usize;
    for k in (0..log.len()).rev() {
        if log[k].post_cluster == cluster && log[k].pre_cluster != cluster {
            start = k + 1;
            break;
        }
    }
    let mut events: Vec<Event> = log[start..].iter().map(|s| s.event.clone()).collect();
    events.push(current.clone());
    events
}
