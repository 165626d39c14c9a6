//! Cross-stage coverage monitor: run-level label coverage, activity visits,
//! the per-event coverage curve, and the replay log behind RSR.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

/// Shared by explorers, stabilization, and recomposition within one run.
#[derive(Debug, Clone, Default)]
pub struct CoverageMonitor {
    covered: BTreeSet<String>,
    visited_activities: BTreeSet<String>,
    seen_signatures: BTreeSet<u64>,
    events: u64,
    curve: Vec<u32>,
    replay_attempts: u64,
    replay_successes: u64,
}

/// ACC / AAC / RSR, all in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub acc: f64,
    pub aac: f64,
    pub rsr: f64,
    pub covered_labels: usize,
    pub visited_activities: usize,
    pub events: u64,
}

/// Coverage state captured at a phase boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseSnapshot {
    pub events: u64,
    pub covered_labels: usize,
    pub visited_activities: usize,
}

impl CoverageMonitor {
    pub fn covered(&self) -> &BTreeSet<String> {
        &self.covered
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn curve(&self) -> &[u32] {
        &self.curve
    }

    pub fn visited_activities(&self) -> &BTreeSet<String> {
        &self.visited_activities
    }

    pub fn replay_attempts(&self) -> u64 {
        self.replay_attempts
    }

    /// Record one executed event and the labels it newly covered run-wide.
    /// Returns the run-level delta.
    pub fn note_event(&mut self, session_delta: &BTreeSet<String>, activity: &str) -> BTreeSet<String> {
        self.events += 1;
        let delta: BTreeSet<String> = session_delta
            .iter()
            .filter(|l| !self.covered.contains(*l))
            .cloned()
            .collect();
        self.covered.extend(delta.iter().cloned());
        self.visited_activities.insert(activity.to_string());
        self.curve.push(self.covered.len() as u32);
        delta
    }

    pub fn note_activity(&mut self, activity: &str) {
        self.visited_activities.insert(activity.to_string());
    }

    /// Record a state signature; true when it was never seen this run.
    pub fn note_signature(&mut self, signature: u64) -> bool {
        self.seen_signatures.insert(signature)
    }

    pub fn has_seen(&self, signature: u64) -> bool {
        self.seen_signatures.contains(&signature)
    }

    pub fn log_replay(&mut self, success: bool) {
        self.replay_attempts += 1;
        if success {
            self.replay_successes += 1;
        }
    }

    pub fn snapshot(&self) -> PhaseSnapshot {
        PhaseSnapshot {
            events: self.events,
            covered_labels: self.covered.len(),
            visited_activities: self.visited_activities.len(),
        }
    }

    /// Compute metrics against model totals.
    pub fn metrics(&self, total_branches: usize, declared_activities: usize) -> Metrics {
        let frac = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        Metrics {
            acc: frac(self.covered.len(), total_branches),
            aac: frac(self.visited_activities.len(), declared_activities),
            rsr: if self.replay_attempts == 0 {
                1.0
            } else {
                self.replay_successes as f64 / self.replay_attempts as f64
            },
            covered_labels: self.covered.len(),
            visited_activities: self.visited_activities.len(),
            events: self.events,
        }
    }
}

/// Hard event-count budget for one phase.
#[derive(Debug, Clone, Copy, Default)]
pub struct BudgetGate {
    limit: Option<u64>,
    used: u64,
}

impl BudgetGate {
    pub fn limited(limit: u64) -> BudgetGate {
        BudgetGate { limit: Some(limit), used: 0 }
    }

    pub fn unlimited() -> BudgetGate {
        BudgetGate { limit: None, used: 0 }
    }

    pub fn try_spend(&mut self) -> bool {
        match self.limit {
            Some(limit) if self.used >= limit => false,
            _ => {
                self.used += 1;
                true
            }
        }
    }

    pub fn exhausted(&self) -> bool {
        matches!(self.limit, Some(limit) if self.used >= limit)
    }

    pub fn used(&self) -> u64 {
        self.used
    }

    pub fn remaining(&self) -> Option<u64> {
        self.limit.map(|l| l.saturating_sub(self.used))
    }
}
