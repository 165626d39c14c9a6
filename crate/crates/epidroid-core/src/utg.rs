//! Cluster-level semantic UI transition graph: labeled edges, shortest-path
//! navigation, confirmed dependencies, pruned prefixes, and the MSE
//! priority queue.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::ClusterId;
use crate::model::Event;
use crate::mse::{MseId, MseRegistry};
use crate::recompose::FeedbackSignal;

/// A directed labeled edge; ordering drives deterministic expansion
/// (lowest target cluster first).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct UtgEdge {
    pub target: ClusterId,
    pub event: Event,
}

/// A confirmed cross-path dependency: mutating the MSE to `target_value`
/// yielded `coverage_gain` in `affected_cluster`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfirmedDependency {
    pub mse_id: MseId,
    pub target_value: String,
    pub affected_cluster: ClusterId,
    pub coverage_gain: u32,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum UtgError {
    #[error("unknown cluster {0}")]
    UnknownCluster(ClusterId),
}

/// The shared knowledge base refined across iterations.
#[derive(Debug, Clone, Default)]
pub struct SemanticUtg {
    clusters: BTreeSet<ClusterId>,
    edges: BTreeMap<ClusterId, BTreeSet<UtgEdge>>,
    mse_annotations: BTreeMap<ClusterId, BTreeSet<MseId>>,
    confirmed: Vec<ConfirmedDependency>,
    pruned_prefixes: Vec<Vec<Event>>,
}

impl SemanticUtg {
    pub fn register_cluster(&mut self, id: ClusterId) {
        self.clusters.insert(id);
    }

    pub fn has_cluster(&self, id: ClusterId) -> bool {
        self.clusters.contains(&id)
    }

    pub fn clusters(&self) -> impl Iterator<Item = ClusterId> + '_ {
        self.clusters.iter().copied()
    }

    pub fn edges(&self) -> impl Iterator<Item = (ClusterId, &UtgEdge)> + '_ {
        self.edges
            .iter()
            .flat_map(|(src, set)| set.iter().map(move |e| (*src, e)))
    }

    pub fn annotate_mse(&mut self, cluster: ClusterId, mse: MseId) {
        self.mse_annotations.entry(cluster).or_default().insert(mse);
    }

    pub fn annotations(&self) -> &BTreeMap<ClusterId, BTreeSet<MseId>> {
        &self.mse_annotations
    }

    pub fn confirmed_dependencies(&self) -> &[ConfirmedDependency] {
        &self.confirmed
    }

    pub fn pruned_prefixes(&self) -> &[Vec<Event>] {
        &self.pruned_prefixes
    }

    /// Insert an edge exactly once per (source, event, target).
    pub fn upsert_transition(
        &mut self,
        source: ClusterId,
        event: Event,
        target: ClusterId,
    ) -> Result<(), UtgError> {
        if !self.clusters.contains(&source) {
            return Err(UtgError::UnknownCluster(source));
        }
        if !self.clusters.contains(&target) {
            return Err(UtgError::UnknownCluster(target));
        }
        self.edges.entry(source).or_default().insert(UtgEdge { target, event });
        Ok(())
    }

    /// Minimal-hop event path over unit-weight edges; ties break to the
    /// lowest target cluster id at each expansion. `None` when unreachable.
    pub fn shortest_path(
        &self,
        from: ClusterId,
        to: ClusterId,
    ) -> Result<Option<Vec<UtgEdge>>, UtgError> {
        if !self.clusters.contains(&from) {
            return Err(UtgError::UnknownCluster(from));
        }
        if !self.clusters.contains(&to) {
            return Err(UtgError::UnknownCluster(to));
        }
        if from == to {
            return Ok(Some(Vec::new()));
        }
        let mut parent: BTreeMap<ClusterId, (ClusterId, UtgEdge)> = BTreeMap::new();
        let mut visited = BTreeSet::from([from]);
        let mut frontier = VecDeque::from([from]);
        while let Some(node) = frontier.pop_front() {
            if let Some(edges) = self.edges.get(&node) {
                for edge in edges {
                    if visited.insert(edge.target) {
                        parent.insert(edge.target, (node, edge.clone()));
                        if edge.target == to {
                            let mut path = Vec::new();
                            let mut cursor = to;
                            while cursor != from {
                                let (prev, edge) = parent[&cursor].clone();
                                path.push(edge);
                                cursor = prev;
                            }
                            path.reverse();
                            return Ok(Some(path));
                        }
                        frontier.push_back(edge.target);
                    }
                }
            }
        }
        Ok(None)
    }

    /// Record a non-replayable prefix for pruning in later iterations.
    pub fn store_pruned_prefix(&mut self, prefix: Vec<Event>) {
        if prefix.is_empty() || self.pruned_prefixes.contains(&prefix) {
            return;
        }
        self.pruned_prefixes.push(prefix);
    }

    /// Whether some stored prefix is a prefix of `events`.
    pub fn is_pruned(&self, events: &[Event]) -> bool {
        self.pruned_prefixes
            .iter()
            .any(|p| events.len() >= p.len() && &events[..p.len()] == p.as_slice())
    }

    pub fn add_confirmed(&mut self, dep: ConfirmedDependency) {
        self.confirmed.push(dep);
    }
}

/// Priority queue over validated MSE records: inter-page before global
/// before intra-page; unvisited-value records before fully observed ones;
/// FIFO within a tier. Retired records never pop.
#[derive(Debug, Clone, Default)]
pub struct MsePriorityQueue {
    entries: Vec<(MseId, u64)>,
    next_seq: u64,
    retired: BTreeSet<MseId>,
}

impl MsePriorityQueue {
    pub fn enqueue(&mut self, id: MseId) {
        if self.retired.contains(&id) {
            return;
        }
        self.entries.push((id, self.next_seq));
        self.next_seq += 1;
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn retire(&mut self, id: MseId) {
        self.retired.insert(id);
        self.entries.retain(|(e, _)| *e != id);
    }

    pub fn is_retired(&self, id: MseId) -> bool {
        self.retired.contains(&id)
    }

    fn key(registry: &MseRegistry, id: MseId, seq: u64) -> (u8, u8, u64) {
        let record = registry.get(id).expect("queued record exists");
        let unvisited = if record.fully_observed() { 1 } else { 0 };
        (record.scope.rank(), unvisited, seq)
    }

    /// Pop the highest-priority record, or `None` when empty.
    pub fn pop_highest(&mut self, registry: &MseRegistry) -> Option<MseId> {
        let (idx, _) = self
            .entries
            .iter()
            .enumerate()
            .min_by_key(|(_, (id, seq))| Self::key(registry, *id, *seq))?;
        let (id, _) = self.entries.remove(idx);
        Some(id)
    }
}

/// Fold an execution signal back into the knowledge base and the queue.
pub fn apply_feedback(
    utg: &mut SemanticUtg,
    queue: &mut MsePriorityQueue,
    registry: &mut MseRegistry,
    mse_id: MseId,
    target_value: &str,
    affected_gains: &[(ClusterId, u32)],
    signal: &FeedbackSignal,
) {
    match signal {
        FeedbackSignal::PositiveDiscovery { .. } => {
            for (cluster, gain) in affected_gains {
                utg.add_confirmed(ConfirmedDependency {
                    mse_id,
                    target_value: target_value.to_string(),
                    affected_cluster: *cluster,
                    coverage_gain: *gain,
                });
            }
            let record = registry.get_mut(mse_id).expect("record exists");
            record.mismatch_count = 0;
            if !record.fully_observed() {
                queue.enqueue(mse_id);
            }
        }
        FeedbackSignal::SemanticMismatch => {
            let record = registry.get_mut(mse_id).expect("record exists");
            record.mismatch_count += 1;
            if record.mismatch_count >= 2 {
                queue.retire(mse_id);
            } else {
                queue.enqueue(mse_id);
            }
        }
        FeedbackSignal::OperationalFailure { verified_prefix } => {
            if let Some(prefix) = verified_prefix {
                utg.store_pruned_prefix(prefix.clone());
            }
            let record = registry.get_mut(mse_id).expect("record exists");
            if !record.requeued_after_failure {
                record.requeued_after_failure = true;
                queue.enqueue(mse_id);
            }
        }
    }
}
