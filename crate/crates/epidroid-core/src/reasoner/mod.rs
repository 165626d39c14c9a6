//! The stage-2 semantic brain behind a pluggable interface: functional
//! summarization, MSE validation, impact-scope classification, impact
//! inference, composite planning, and multi-step mutation guidance.

mod oracle;
mod remote;
mod transcript;

pub use oracle::{retarget_sigma, NoiseConfig, OracleReasoner};
pub use remote::{RemoteConfig, RemoteReasoner};
pub use transcript::{TranscriptEntry, TranscriptRecorder, TranscriptReplayer};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::ClusterId;
use crate::model::Event;
use crate::mse::{MseId, MseRecord, Scope};
use crate::stabilize::{ReplayStatus, TestFragment};
use crate::view::ViewNode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Valid,
    Noise,
}

/// Context for cluster summarization: the denoised representative tree plus
/// summaries produced so far.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterContext {
    pub cluster_id: ClusterId,
    pub activity_name: String,
    pub denoised_tree: ViewNode,
    pub prior_summaries: Vec<(ClusterId, String)>,
}

/// Digest of an MSE record as shown to a backend.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MseDigest {
    pub mse_id: MseId,
    pub widget_id: String,
    pub cluster_id: ClusterId,
    pub kind: crate::mse::MseKind,
    pub observed_values: Vec<String>,
    pub unvisited_values: Vec<String>,
    pub sigma_len: usize,
}

impl MseDigest {
    pub fn of(record: &MseRecord) -> MseDigest {
        MseDigest {
            mse_id: record.mse_id,
            widget_id: record.widget_id.clone(),
            cluster_id: record.cluster_id,
            kind: record.kind,
            observed_values: record.observed_values.clone(),
            unvisited_values: record.unvisited_values(),
            sigma_len: record.sigma_sea.len(),
        }
    }
}

/// Context for validation and scope classification.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MseContext {
    pub record: MseDigest,
    pub cluster_summary: Option<String>,
    pub annotated_tree: ViewNode,
}

/// One reachable cluster as shown to a backend.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterDigest {
    pub cluster_id: ClusterId,
    pub page_id: String,
    pub activity_name: String,
    pub summary: Option<String>,
}

/// Context for impact inference over the semantic UTG.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImpactContext {
    pub record: MseDigest,
    pub target_value: String,
    pub reachable: Vec<ClusterDigest>,
}

/// Digest of a stabilized fragment for plan generation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FragmentDigest {
    pub fragment_id: u32,
    pub entry_cluster: ClusterId,
    pub footprint_size: usize,
    pub visited_clusters: Vec<ClusterId>,
    pub stable: bool,
    pub steps: Vec<FragmentStepDigest>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FragmentStepDigest {
    pub widget: String,
    pub post_cluster: ClusterId,
}

impl FragmentDigest {
    /// Index of the first step executed from `cluster`.
    pub fn first_visit(&self, cluster: ClusterId) -> Option<usize> {
        let mut pre = self.entry_cluster;
        for (i, step) in self.steps.iter().enumerate() {
            if pre == cluster {
                return Some(i);
            }
            pre = step.post_cluster;
        }
        None
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanContext {
    pub record: MseDigest,
    pub target_value: String,
    pub affected: Vec<ClusterId>,
    pub clusters: Vec<ClusterDigest>,
    pub fragments: Vec<FragmentDigest>,
}

/// Abstract plan shape a backend may propose: per affected cluster, which
/// fragment to replay (none means navigate-only).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanOutline {
    pub entries: Vec<(ClusterId, Option<u32>)>,
    pub rationale: String,
}

/// Context for one mutation-guidance step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GuideContext {
    pub widget_id: String,
    pub target_value: String,
    pub current_value: Option<String>,
    pub page_tree: ViewNode,
    pub executed: Vec<Event>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum GuideOutcome {
    /// One concrete event advancing toward the goal.
    Event { event: Event },
    /// The goal already holds.
    Satisfied,
    /// No applicable event exists.
    Unreachable,
}

#[derive(Debug, Error)]
pub enum ReasonerError {
    #[error("backend timeout after {0} ms")]
    Timeout(u64),
    #[error("transport: {0}")]
    Transport(String),
    #[error("malformed reply: {0}")]
    Malformed(String),
    #[error("transcript exhausted or mismatched: {0}")]
    Transcript(String),
}

/// A pluggable semantic backend. At most one outstanding request per
/// exploration session.
pub trait Reasoner {
    fn name(&self) -> &'static str;
    fn summarize_cluster(&mut self, ctx: &ClusterContext) -> Result<String, ReasonerError>;
    fn validate_mse(&mut self, ctx: &MseContext) -> Result<Verdict, ReasonerError>;
    fn classify_scope(&mut self, ctx: &MseContext) -> Result<Scope, ReasonerError>;
    fn infer_impact(&mut self, ctx: &ImpactContext) -> Result<Vec<ClusterId>, ReasonerError>;
    fn plan_outline(&mut self, ctx: &PlanContext) -> Result<PlanOutline, ReasonerError>;
    fn guide_mutation_step(&mut self, ctx: &GuideContext) -> Result<GuideOutcome, ReasonerError>;
}

/// Summarize with the degraded fallback text on failure or empty replies.
pub fn summarize_cluster(backend: &mut dyn Reasoner, ctx: &ClusterContext) -> String {
    match backend.summarize_cluster(ctx) {
        Ok(text) if !text.trim().is_empty() => text,
        _ => format!("unsummarized cluster {}", ctx.cluster_id),
    }
}

/// Validate with the conservative fallback: a dead backend cannot admit
/// candidates.
pub fn validate_mse(backend: &mut dyn Reasoner, ctx: &MseContext) -> Verdict {
    backend.validate_mse(ctx).unwrap_or(Verdict::Noise)
}

/// Classify with the conservative fallback scope.
pub fn classify_scope(backend: &mut dyn Reasoner, ctx: &MseContext) -> Scope {
    match backend.classify_scope(ctx) {
        Ok(Scope::Unknown) | Err(_) => Scope::IntraPage,
        Ok(scope) => scope,
    }
}

/// Infer the affected cluster set; malformed or empty replies fall back to
/// the record's own cluster.
pub fn infer_impact(
    backend: &mut dyn Reasoner,
    ctx: &ImpactContext,
    own_cluster: ClusterId,
) -> Vec<ClusterId> {
    let mut clusters = match backend.infer_impact(ctx) {
        Ok(clusters) if !clusters.is_empty() => clusters,
        _ => vec![own_cluster],
    };
    clusters.sort_unstable();
    clusters.dedup();
    clusters
}

/// Guide one mutation step; failures surface as unreachable.
pub fn guide_mutation_step(backend: &mut dyn Reasoner, ctx: &GuideContext) -> GuideOutcome {
    backend.guide_mutation_step(ctx).unwrap_or(GuideOutcome::Unreachable)
}

/// The executable composite plan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompositePlan {
    pub mse_id: MseId,
    pub target_value: String,
    pub mutation_cluster: ClusterId,
    pub sigma_sea: Vec<Event>,
    pub affected: Vec<ClusterId>,
    pub entries: Vec<PlanEntry>,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub cluster: ClusterId,
    pub fragment_id: Option<u32>,
    /// Replay starts at the fragment's first visit to the cluster.
    pub start_index: usize,
}

/// Mechanical plan rule: per affected cluster, the highest-footprint stable
/// fragment visiting it (ties to the lower fragment id); truncated
/// fragments only when no stable one covers the cluster; otherwise a
/// navigate-only entry.
pub fn default_plan_outline(affected: &[ClusterId], fragments: &[TestFragment]) -> PlanOutline {
    let mut entries = Vec::new();
    for &cluster in affected {
        let pick = |status: ReplayStatus| {
            fragments
                .iter()
                .filter(|f| f.replay_status == status && f.visits(cluster))
                .max_by(|a, b| {
                    a.footprint
                        .len()
                        .cmp(&b.footprint.len())
                        .then(b.fragment_id.cmp(&a.fragment_id))
                })
        };
        let chosen = pick(ReplayStatus::Stable).or_else(|| pick(ReplayStatus::Truncated));
        entries.push((cluster, chosen.map(|f| f.fragment_id)));
    }
    PlanOutline { entries, rationale: "highest-footprint fragment per affected cluster".into() }
}

/// Compose the executable plan from a backend outline, enforcing plan
/// invariants; invalid outline entries degrade to the mechanical rule.
pub fn plan_composite(
    record: &MseRecord,
    target_value: &str,
    sigma_sea: Vec<Event>,
    affected: &[ClusterId],
    fragments: &[TestFragment],
    outline: PlanOutline,
) -> CompositePlan {
    let fallback = default_plan_outline(affected, fragments);
    let by_id = |id: u32| fragments.iter().find(|f| f.fragment_id == id);

    let mut entries = Vec::new();
    for (i, &cluster) in affected.iter().enumerate() {
        let proposed = outline.entries.iter().find(|(c, _)| *c == cluster).map(|(_, f)| *f);
        let fragment_id = match proposed {
            // An explicit navigate-only choice stands.
            Some(None) => None,
            Some(Some(id)) if by_id(id).map(|f| f.visits(cluster)).unwrap_or(false) => Some(id),
            _ => fallback.entries[i].1,
        };
        let start_index = fragment_id
            .and_then(by_id)
            .and_then(|f| f.first_visit(cluster))
            .unwrap_or(0);
        entries.push(PlanEntry { cluster, fragment_id, start_index });
    }

    // Replay order: descending footprint, navigate-only entries last,
    // cluster id as the final tie-break.
    entries.sort_by(|a, b| {
        let size = |e: &PlanEntry| {
            e.fragment_id.and_then(by_id).map(|f| f.footprint.len() as i64).unwrap_or(-1)
        };
        size(b).cmp(&size(a)).then(a.cluster.cmp(&b.cluster))
    });

    CompositePlan {
        mse_id: record.mse_id,
        target_value: target_value.to_string(),
        mutation_cluster: record.cluster_id,
        sigma_sea,
        affected: affected.to_vec(),
        entries,
        rationale: outline.rationale,
    }
}

/// Machine-checkable plan invariants.
pub fn plan_is_valid(plan: &CompositePlan, record: &MseRecord, fragments: &[TestFragment]) -> bool {
    let unvisited = record.unvisited_values();
    if !unvisited.is_empty() && !unvisited.contains(&plan.target_value) {
        return false;
    }
    plan.entries.iter().all(|entry| {
        if !plan.affected.contains(&entry.cluster) {
            return false;
        }
        match entry.fragment_id {
            None => true,
            Some(id) => fragments
                .iter()
                .find(|f| f.fragment_id == id)
                .map(|f| f.visits(entry.cluster))
                .unwrap_or(false),
        }
    })
}
