//! Stage 3: execute composite plans (navigate, mutate, dependent replay,
//! bounded BFS), classify feedback, and iterate to termination.

use std::collections::{BTreeSet, VecDeque};

use rand::rngs::SmallRng;
use rand::{RngExt, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::cluster::ClusterId;
use crate::engine::{Driver, EngineCtx, EngineError};
use crate::model::{Event, VarDomain};
use crate::monitor::PhaseSnapshot;
use crate::mse::{abstract_value, MseId, MseRecord, Scope, Validation};
use crate::reasoner::{
    self, retarget_sigma, ClusterContext, ClusterDigest, CompositePlan, FragmentDigest,
    GuideContext, GuideOutcome, ImpactContext, MseContext, MseDigest, PlanContext, Reasoner,
    Verdict,
};
use crate::stabilize::TestFragment;
use crate::utg;
use crate::view::{ViewNode, WidgetKind};

/// Outcome of one composite execution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum FeedbackSignal {
    PositiveDiscovery { new_states: BTreeSet<u64>, coverage_gain: u32 },
    SemanticMismatch,
    OperationalFailure { verified_prefix: Option<Vec<Event>> },
}

impl FeedbackSignal {
    pub fn kind(&self) -> SignalKind {
        match self {
            FeedbackSignal::PositiveDiscovery { .. } => SignalKind::PositiveDiscovery,
            FeedbackSignal::SemanticMismatch => SignalKind::SemanticMismatch,
            FeedbackSignal::OperationalFailure { .. } => SignalKind::OperationalFailure,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    PositiveDiscovery,
    SemanticMismatch,
    OperationalFailure,
}

/// The decision structure: no observed mutation evidence means operational
/// failure; any new state or coverage means positive discovery; otherwise
/// the prediction missed.
pub fn classify_signal(delta_sigma_observed: bool, new_states: usize, coverage_gain: u32) -> SignalKind {
    if !delta_sigma_observed {
        SignalKind::OperationalFailure
    } else if new_states > 0 || coverage_gain > 0 {
        SignalKind::PositiveDiscovery
    } else {
        SignalKind::SemanticMismatch
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct IterationStats {
    pub index: usize,
    pub plans_executed: usize,
    pub positive: usize,
    pub mismatch: usize,
    pub operational: usize,
    /// MSE records first observed during this iteration.
    pub new_mses: usize,
    pub cumulative_coverage: usize,
    pub truncated: bool,
}

#[derive(Debug, Clone)]
pub struct RecomposeConfig {
    pub bfs_depth: usize,
    pub bfs_budget: usize,
    pub iteration_cap: usize,
    /// Guidance steps allowed when the recorded trigger misses the goal.
    pub guide_cap: usize,
    /// Ablation: ignore dependency reasoning and replay random fragments.
    pub no_reasoning: bool,
    pub ablation_seed: u64,
}

impl Default for RecomposeConfig {
    fn default() -> Self {
        RecomposeConfig {
            bfs_depth: 2,
            bfs_budget: 25,
            iteration_cap: 10,
            guide_cap: 8,
            no_reasoning: false,
            ablation_seed: 0,
        }
    }
}

/// Deterministic action enumeration for a page: every widget paired with
/// its natural events.
pub fn enumerate_actions(tree: &ViewNode) -> Vec<Event> {
    let mut actions = Vec::new();
    for node in &tree.children {
        match node.kind {
            WidgetKind::Input => {
                let hint = node.attrs.hint.clone().filter(|t| !t.is_empty());
                actions.push(Event::input(&node.widget_id, hint.unwrap_or_else(|| "a".into())));
                actions.push(Event::input(&node.widget_id, ""));
            }
            WidgetKind::RadioGroup => {
                for option in &node.attrs.options {
                    actions.push(Event::select(&node.widget_id, option));
                }
            }
            _ => actions.push(Event::tap(&node.widget_id)),
        }
    }
    actions
}

/// Breadth-first expansion over the actionable widgets of newly reached
/// states, bounded by depth and a total action budget. The session is left
/// wherever the walk ends.
pub fn bounded_bfs(
    ctx: &mut EngineCtx,
    driver: &mut Driver,
    depth_bound: usize,
    action_budget: usize,
) -> (BTreeSet<u64>, u32) {
    let mut new_states = BTreeSet::new();
    let mut gain = 0u32;
    if depth_bound == 0 || action_budget == 0 {
        return (new_states, gain);
    }
    let (start, _) = ctx.current(driver);
    let mut visited = BTreeSet::from([start.signature]);
    let mut frontier: VecDeque<(Driver, usize)> = VecDeque::from([(driver.clone(), 0)]);
    let mut actions_left = action_budget;
    let mut last_child: Option<Driver> = None;

    while let Some((state_driver, depth)) = frontier.pop_front() {
        if depth >= depth_bound {
            continue;
        }
        let mut probe = state_driver.clone();
        let (abstract_state, _) = ctx.current(&mut probe);
        for event in enumerate_actions(&abstract_state.tree) {
            if actions_left == 0 {
                if let Some(child) = last_child {
                    *driver = child;
                }
                return (new_states, gain);
            }
            let mut child = state_driver.clone();
            match ctx.step(&mut child, &event) {
                Ok(out) => {
                    actions_left -= 1;
                    gain += out.run_delta.len() as u32;
                    if out.new_signature {
                        new_states.insert(out.post_signature);
                    }
                    if visited.insert(out.post_signature) {
                        frontier.push_back((child.clone(), depth + 1));
                    }
                    last_child = Some(child);
                }
                Err(EngineError::BudgetExhausted) => {
                    if let Some(child) = last_child {
                        *driver = child;
                    }
                    return (new_states, gain);
                }
                Err(EngineError::Session(_)) => {}
            }
        }
    }
    if let Some(child) = last_child {
        *driver = child;
    }
    (new_states, gain)
}

/// What a composite execution did, cluster by cluster.
#[derive(Debug, Clone, Default)]
pub struct PlanExecution {
    pub per_cluster_gains: Vec<(ClusterId, u32)>,
    pub pruned: bool,
    pub replays_attempted: usize,
}

/// Drive the session to a cluster along the learned transition graph.
pub fn navigate_to(ctx: &mut EngineCtx, driver: &mut Driver, to: ClusterId) -> bool {
    let mut executed = Vec::new();
    navigate(ctx, driver, to, &mut executed).unwrap_or(false)
}

fn navigate(ctx: &mut EngineCtx, driver: &mut Driver, to: ClusterId, executed: &mut Vec<Event>) -> Result<bool, EngineError> {
    let (_, here) = ctx.current(driver);
    if here == to {
        return Ok(true);
    }
    let Ok(Some(path)) = ctx.utg.shortest_path(here, to) else {
        return Ok(false);
    };
    for edge in path {
        match ctx.step(driver, &edge.event) {
            Ok(out) => {
                executed.push(edge.event.clone());
                if out.post_cluster != edge.target {
                    return Ok(false);
                }
            }
            Err(EngineError::Session(_)) => return Ok(false),
            Err(other) => return Err(other),
        }
    }
    Ok(true)
}

fn visible_value(ctx: &mut EngineCtx, driver: &mut Driver, widget: &str) -> Option<String> {
    let (state, _) = ctx.current(driver);
    state.tree.find(widget).and_then(|n| abstract_value(n).map(|(_, v)| v))
}

/// Mutation evidence: the widget currently renders the target value, or an
/// observation recorded since `obs_baseline` reached it.
fn goal_met(
    ctx: &mut EngineCtx,
    driver: &mut Driver,
    record_id: MseId,
    widget: &str,
    target: &str,
    obs_baseline: usize,
) -> bool {
    if visible_value(ctx, driver, widget).as_deref() == Some(target) {
        return true;
    }
    ctx.mses
        .get(record_id)
        .map(|r| r.observations[obs_baseline.min(r.observations.len())..]
            .iter()
            .any(|o| o.after == target))
        .unwrap_or(false)
}

/// Execute one composite plan: navigate to the mutation cluster, drive the
/// MSE to its target value, then replay dependent fragments per affected
/// cluster, expanding from any newly discovered state.
pub fn execute_composite(
    ctx: &mut EngineCtx,
    driver: &mut Driver,
    plan: &CompositePlan,
    fragments: &[TestFragment],
    backend: &mut dyn Reasoner,
    config: &RecomposeConfig,
) -> Result<(FeedbackSignal, PlanExecution), EngineError> {
    let mut exec = PlanExecution::default();
    let record = ctx.mses.get(plan.mse_id).expect("planned record exists").clone();

    // Assemble the intended navigation+mutation prefix for prune filtering.
    let (_, here) = ctx.current(driver);
    let nav_events: Vec<Event> = if here == plan.mutation_cluster {
        Vec::new()
    } else {
        match ctx.utg.shortest_path(here, plan.mutation_cluster) {
            Ok(Some(path)) => path.into_iter().map(|e| e.event).collect(),
            _ => {
                return Ok((FeedbackSignal::OperationalFailure { verified_prefix: None }, exec));
            }
        }
    };
    let mut intended = nav_events.clone();
    intended.extend(plan.sigma_sea.iter().cloned());
    if ctx.utg.is_pruned(&intended) {
        exec.pruned = true;
        return Ok((FeedbackSignal::OperationalFailure { verified_prefix: None }, exec));
    }

    // Navigation phase.
    let mut executed: Vec<Event> = Vec::new();
    if !navigate(ctx, driver, plan.mutation_cluster, &mut executed)? {
        executed.push(Event::tap("<unreached>"));
        return Ok((
            FeedbackSignal::OperationalFailure { verified_prefix: Some(executed) },
            exec,
        ));
    }

    // State mutation phase. Only on-screen evidence can pre-satisfy the
    // goal; recorded history goes stale across restarts.
    let obs_baseline = record.observations.len();
    let already =
        visible_value(ctx, driver, &record.widget_id).as_deref() == Some(plan.target_value.as_str());
    if !already {
        for event in &plan.sigma_sea {
            match ctx.step(driver, event) {
                Ok(_) => executed.push(event.clone()),
                Err(EngineError::Session(_)) => {
                    executed.push(event.clone());
                    return Ok((
                        FeedbackSignal::OperationalFailure { verified_prefix: Some(executed) },
                        exec,
                    ));
                }
                Err(other) => return Err(other),
            }
        }
        let mut guided = 0usize;
        while !goal_met(ctx, driver, plan.mse_id, &record.widget_id, &plan.target_value, obs_baseline) {
            if guided >= config.guide_cap {
                break;
            }
            guided += 1;
            let (state, _) = ctx.current(driver);
            let outcome = reasoner::guide_mutation_step(
                backend,
                &GuideContext {
                    widget_id: record.widget_id.clone(),
                    target_value: plan.target_value.clone(),
                    current_value: visible_value(ctx, driver, &record.widget_id),
                    page_tree: state.tree.clone(),
                    executed: executed.clone(),
                },
            );
            match outcome {
                GuideOutcome::Satisfied => break,
                GuideOutcome::Unreachable => {
                    // The prefix itself replayed fine; nothing to prune.
                    return Ok((
                        FeedbackSignal::OperationalFailure { verified_prefix: None },
                        exec,
                    ));
                }
                GuideOutcome::Event { event } => match ctx.step(driver, &event) {
                    Ok(_) => executed.push(event),
                    Err(EngineError::Session(_)) => {
                        executed.push(event);
                        return Ok((
                            FeedbackSignal::OperationalFailure { verified_prefix: Some(executed) },
                            exec,
                        ));
                    }
                    Err(other) => return Err(other),
                },
            }
        }
        if !goal_met(ctx, driver, plan.mse_id, &record.widget_id, &plan.target_value, obs_baseline) {
            // The expected mutation evidence never materialized; the events
            // themselves replayed, so no prefix is pruned.
            return Ok((
                FeedbackSignal::OperationalFailure { verified_prefix: None },
                exec,
            ));
        }
    }

    // Dependent replay phase: failures on one cluster do not abort the rest.
    let mut new_states: BTreeSet<u64> = BTreeSet::new();
    let mut total_gain = 0u32;
    let mut processed_any = false;
    for entry in &plan.entries {
        if ctx.budget.exhausted() {
            break;
        }
        let mut nav_events = Vec::new();
        match navigate(ctx, driver, entry.cluster, &mut nav_events) {
            Ok(true) => {}
            Ok(false) => continue,
            Err(EngineError::BudgetExhausted) => break,
            Err(other) => return Err(other),
        }
        processed_any = true;
        let mut cluster_gain = 0u32;
        let mut cluster_new = false;

        if let Some(fid) = entry.fragment_id {
            if let Some(fragment) = fragments.iter().find(|f| f.fragment_id == fid) {
                exec.replays_attempted += 1;
                let mut clean = true;
                for step in fragment.steps.iter().skip(entry.start_index) {
                    match ctx.step(driver, &step.event) {
                        Ok(out) => {
                            cluster_gain += out.run_delta.len() as u32;
                            if out.new_signature {
                                new_states.insert(out.post_signature);
                                cluster_new = true;
                            }
                        }
                        Err(EngineError::Session(_)) => {
                            clean = false;
                            break;
                        }
                        Err(EngineError::BudgetExhausted) => {
                            clean = false;
                            break;
                        }
                    }
                }
                ctx.monitor.log_replay(clean);
            }
        }

        // Expand when the replay surfaced unseen states, or when there was
        // nothing to replay at all.
        if cluster_new || entry.fragment_id.is_none() {
            let (bfs_new, bfs_gain) = bounded_bfs(ctx, driver, config.bfs_depth, config.bfs_budget);
            cluster_gain += bfs_gain;
            new_states.extend(bfs_new);
        }
        total_gain += cluster_gain;
        exec.per_cluster_gains.push((entry.cluster, cluster_gain));
    }

    if !processed_any && !plan.entries.is_empty() {
        return Ok((FeedbackSignal::OperationalFailure { verified_prefix: None }, exec));
    }
    let signal = match classify_signal(true, new_states.len(), total_gain) {
        SignalKind::PositiveDiscovery => {
            FeedbackSignal::PositiveDiscovery { new_states, coverage_gain: total_gain }
        }
        SignalKind::SemanticMismatch => FeedbackSignal::SemanticMismatch,
        SignalKind::OperationalFailure => unreachable!("evidence was observed"),
    };
    Ok((signal, exec))
}

/// Mutation target choice: lexicographically smallest unvisited value;
/// then untargeted values largest-first; once every value has had a plan,
/// alternate away from the latest observation.
pub fn choose_target(record: &MseRecord) -> Option<String> {
    let unvisited = record.unvisited_values();
    if let Some(v) = unvisited.iter().min() {
        return Some(v.clone());
    }
    // Untargeted values cycle largest-first: "on"-like values unlock far
    // more often than their "off" counterparts.
    let untargeted = record
        .domain
        .iter()
        .filter(|v| !record.targeted.contains(*v))
        .max();
    if let Some(v) = untargeted {
        return Some(v.clone());
    }
    let latest = record.latest_value().map(str::to_string);
    record
        .domain
        .iter()
        .filter(|v| Some(v.as_str()) != latest.as_deref())
        .max()
        .cloned()
        .or_else(|| record.domain.first().cloned())
}

fn cluster_digests(ctx: &EngineCtx) -> Vec<ClusterDigest> {
    ctx.clusters
        .clusters()
        .iter()
        .map(|c| ClusterDigest {
            cluster_id: c.cluster_id,
            page_id: c.representative.widget_id.clone(),
            activity_name: c.activity_name.clone(),
            summary: c.summary.clone(),
        })
        .collect()
}

fn fragment_digests(fragments: &[TestFragment]) -> Vec<FragmentDigest> {
    fragments
        .iter()
        .map(|f| {
            let mut visited: Vec<ClusterId> = std::iter::once(f.entry_cluster)
                .chain(f.steps.iter().map(|s| s.post_cluster))
                .collect();
            visited.sort_unstable();
            visited.dedup();
            FragmentDigest {
                fragment_id: f.fragment_id,
                entry_cluster: f.entry_cluster,
                footprint_size: f.footprint.len(),
                visited_clusters: visited,
                stable: f.replay_status == crate::stabilize::ReplayStatus::Stable,
                steps: f
                    .steps
                    .iter()
                    .map(|s| crate::reasoner::FragmentStepDigest {
                        widget: s.event.widget.clone(),
                        post_cluster: s.post_cluster,
                    })
                    .collect(),
            }
        })
        .collect()
}

/// Summarize unsummarized clusters and validate/classify/enqueue pending
/// MSE records. Returns how many records entered the queue.
pub fn profile_pending(
    ctx: &mut EngineCtx,
    queue: &mut utg::MsePriorityQueue,
    backend: &mut dyn Reasoner,
) -> usize {
    let unsummarized: Vec<(ClusterId, String, ViewNode)> = ctx
        .clusters
        .clusters()
        .iter()
        .filter(|c| c.summary.is_none())
        .map(|c| (c.cluster_id, c.activity_name.clone(), c.representative.clone()))
        .collect();
    for (id, activity, tree) in unsummarized {
        let prior: Vec<(ClusterId, String)> = ctx
            .clusters
            .clusters()
            .iter()
            .filter_map(|c| c.summary.clone().map(|s| (c.cluster_id, s)))
            .collect();
        let summary = reasoner::summarize_cluster(
            backend,
            &ClusterContext {
                cluster_id: id,
                activity_name: activity,
                denoised_tree: tree,
                prior_summaries: prior,
            },
        );
        ctx.clusters.set_summary(id, summary);
    }

    let mut enqueued = 0usize;
    for id in ctx.mses.pending() {
        let record = ctx.mses.get(id).expect("pending record").clone();
        let cluster = ctx.clusters.get(record.cluster_id);
        let context = MseContext {
            record: MseDigest::of(&record),
            cluster_summary: cluster.and_then(|c| c.summary.clone()),
            annotated_tree: cluster
                .map(|c| c.representative.clone())
                .unwrap_or_else(|| ViewNode::new("unknown", WidgetKind::Root, 0)),
        };
        let verdict = reasoner::validate_mse(backend, &context);
        match verdict {
            Verdict::Noise => {
                ctx.mses.get_mut(id).expect("record").validated = Validation::Noise;
            }
            Verdict::Valid => {
                let scope = reasoner::classify_scope(backend, &context);
                let record = ctx.mses.get_mut(id).expect("record");
                record.validated = Validation::Valid;
                record.scope = scope;
                record.priority_rank = scope.rank();
                queue.enqueue(id);
                enqueued += 1;
            }
        }
    }
    enqueued
}

/// Options rendered by a widget anywhere in the model; used to retarget
/// recorded trigger sequences.
fn widget_options(ctx: &EngineCtx, widget: &str) -> Option<Vec<String>> {
    for page in &ctx.model.pages {
        for w in &page.widgets {
            if w.widget_id == widget && w.kind == WidgetKind::RadioGroup {
                if let Some(var) = &w.binding {
                    if let VarDomain::Enum { members } = &ctx.model.domains()[var] {
                        return Some(members.clone());
                    }
                }
            }
        }
    }
    None
}

/// Drain the priority queue once: plan, execute, and feed back each record,
/// collecting newly discovered MSEs for the next profiling pass.
#[allow(clippy::too_many_arguments)]
pub fn run_iteration(
    ctx: &mut EngineCtx,
    driver: &mut Driver,
    queue: &mut utg::MsePriorityQueue,
    fragments: &[TestFragment],
    backend: &mut dyn Reasoner,
    config: &RecomposeConfig,
    index: usize,
) -> IterationStats {
    let mut stats = IterationStats { index, ..Default::default() };
    let known_before = ctx.mses.records().len();
    let mut rng = SmallRng::seed_from_u64(config.ablation_seed ^ index as u64);

    while let Some(id) = queue.pop_highest(&ctx.mses) {
        if ctx.budget.exhausted() {
            queue.enqueue(id);
            stats.truncated = true;
            break;
        }
        let record = ctx.mses.get(id).expect("popped record").clone();
        let Some(target) = choose_target(&record) else { continue };
        if let Some(r) = ctx.mses.get_mut(id) {
            r.targeted.insert(target.clone());
        }

        let plan = if config.no_reasoning {
            // Ablation: random target, random cluster, random fragment
            // replayed from its own entry; no impact inference.
            let target = record
                .domain
                .get(rng.random_range(0..record.domain.len().max(1)))
                .cloned()
                .unwrap_or(target);
            let fragment = if fragments.is_empty() {
                None
            } else {
                Some(&fragments[rng.random_range(0..fragments.len())])
            };
            let cluster = fragment.map(|f| f.entry_cluster).unwrap_or(record.cluster_id);
            CompositePlan {
                mse_id: id,
                target_value: target,
                mutation_cluster: record.cluster_id,
                sigma_sea: record.sigma_sea.clone(),
                affected: vec![cluster],
                entries: vec![crate::reasoner::PlanEntry {
                    cluster,
                    fragment_id: fragment.map(|f| f.fragment_id),
                    start_index: 0,
                }],
                rationale: "ablation: random fragment replay".into(),
            }
        } else {
            let digest = MseDigest::of(&record);
            let affected = if record.scope == Scope::IntraPage {
                vec![record.cluster_id]
            } else {
                reasoner::infer_impact(
                    backend,
                    &ImpactContext {
                        record: digest.clone(),
                        target_value: target.clone(),
                        reachable: cluster_digests(ctx),
                    },
                    record.cluster_id,
                )
            };
            let sigma = retarget_sigma(
                &record.sigma_sea,
                &record.widget_id,
                record.kind,
                &target,
                |w| widget_options(ctx, w),
            );
            let outline = backend
                .plan_outline(&PlanContext {
                    record: digest,
                    target_value: target.clone(),
                    affected: affected.clone(),
                    clusters: cluster_digests(ctx),
                    fragments: fragment_digests(fragments),
                })
                .unwrap_or_else(|_| reasoner::default_plan_outline(&affected, fragments));
            reasoner::plan_composite(&record, &target, sigma, &affected, fragments, outline)
        };

        match execute_composite(ctx, driver, &plan, fragments, backend, config) {
            Ok((signal, exec)) => {
                stats.plans_executed += 1;
                match signal.kind() {
                    SignalKind::PositiveDiscovery => stats.positive += 1,
                    SignalKind::SemanticMismatch => stats.mismatch += 1,
                    SignalKind::OperationalFailure => stats.operational += 1,
                }
                utg::apply_feedback(
                    &mut ctx.utg,
                    queue,
                    &mut ctx.mses,
                    id,
                    &plan.target_value,
                    &exec.per_cluster_gains,
                    &signal,
                );
            }
            Err(EngineError::BudgetExhausted) => {
                stats.truncated = true;
                break;
            }
            Err(EngineError::Session(e)) => {
                ctx.rejected_observations.push(format!("plan execution: {e}"));
            }
        }
    }

    stats.new_mses = ctx.mses.records().len() - known_before;
    stats.cumulative_coverage = ctx.monitor.covered().len();
    stats
}

/// Outcome of the full enhancement loop.
#[derive(Debug, Default)]
pub struct LoopOutcome {
    pub iterations: Vec<IterationStats>,
    pub fragments: Vec<TestFragment>,
    pub stabilization: Option<crate::stabilize::StabilizeReport>,
    pub phase_start: Option<PhaseSnapshot>,
}

/// Stage 1 then repeated profile/recompose iterations, ending when an
/// iteration discovers no new MSEs, the cap, or the event budget.
#[allow(clippy::too_many_arguments)]
pub fn run_loop(
    ctx: &mut EngineCtx,
    driver: &mut Driver,
    traces: &[crate::trace::Trace],
    backend: &mut dyn Reasoner,
    entry_cluster: ClusterId,
    stabilize_config: &crate::stabilize::StabilizeConfig,
    config: &RecomposeConfig,
    skip_stabilization: bool,
) -> LoopOutcome {
    let mut outcome = LoopOutcome { phase_start: Some(ctx.monitor.snapshot()), ..Default::default() };

    let fragments = if skip_stabilization {
        // Ablation: raw traces pass through whole, unverified and
        // unminimized.
        traces
            .iter()
            .enumerate()
            .map(|(i, trace)| TestFragment {
                fragment_id: i as u32,
                steps: trace
                    .steps
                    .iter()
                    .map(|s| crate::stabilize::FragmentStep {
                        event: s.event.clone(),
                        post_cluster: s.post_cluster,
                    })
                    .collect(),
                entry_cluster,
                exit_cluster: trace.steps.last().map(|s| s.post_cluster).unwrap_or(entry_cluster),
                footprint: trace.covered_labels(),
                replay_status: crate::stabilize::ReplayStatus::Unverified,
                source_trace: trace.origin.clone(),
            })
            .collect()
    } else {
        let report = crate::stabilize::stabilize(ctx, traces, entry_cluster, stabilize_config);
        let fragments = report.fragments.clone();
        outcome.stabilization = Some(report);
        fragments
    };

    let mut queue = utg::MsePriorityQueue::default();
    profile_pending(ctx, &mut queue, backend);

    for index in 1..=config.iteration_cap {
        let stats = run_iteration(ctx, driver, &mut queue, &fragments, backend, config, index);
        let no_new = stats.new_mses == 0;
        let truncated = stats.truncated;
        outcome.iterations.push(stats);
        if truncated || ctx.budget.exhausted() {
            break;
        }
        if no_new {
            break;
        }
        profile_pending(ctx, &mut queue, backend);
    }

    outcome.fragments = fragments;
    outcome
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use std::sync::Arc;

    #[test]
    fn signal_classification_matches_the_decision_table() {
        use SignalKind::*;
        let cases = [
            (false, 0, 0, OperationalFailure),
            (false, 0, 1, OperationalFailure),
            (false, 1, 0, OperationalFailure),
            (false, 1, 1, OperationalFailure),
            (true, 0, 0, SemanticMismatch),
            (true, 0, 1, PositiveDiscovery),
            (true, 1, 0, PositiveDiscovery),
            (true, 1, 1, PositiveDiscovery),
        ];
        for (observed, states, gain, expected) in cases {
            assert_eq!(classify_signal(observed, states, gain), expected);
        }
    }

    #[test]
    fn bfs_depth_zero_is_a_no_op() {
        let mut ctx = EngineCtx::new(Arc::new(fixtures::case2()), 0.8, 1);
        let mut driver = ctx.new_driver();
        let before = ctx.monitor.events();
        let (states, gain) = bounded_bfs(&mut ctx, &mut driver, 0, 25);
        assert!(states.is_empty());
        assert_eq!(gain, 0);
        assert_eq!(ctx.monitor.events(), before);
    }

    #[test]
    fn bfs_depth_one_executes_at_most_one_action_per_widget_action() {
        let mut ctx = EngineCtx::new(Arc::new(fixtures::no_mse()), 0.8, 1);
        let mut driver = ctx.new_driver();
        // Entry page has 3 widgets, all tap actions.
        let (_, _) = bounded_bfs(&mut ctx, &mut driver, 1, 25);
        assert!(ctx.monitor.events() <= 3);
    }

    #[test]
    fn bfs_respects_the_action_budget() {
        let mut ctx = EngineCtx::new(Arc::new(fixtures::case2()), 0.8, 1);
        let mut driver = ctx.new_driver();
        bounded_bfs(&mut ctx, &mut driver, 3, 4);
        assert!(ctx.monitor.events() <= 4);
    }

    #[test]
    fn choose_target_prefers_lex_smallest_unvisited() {
        let mut registry = crate::mse::MseRegistry::default();
        let obs = crate::mse::MseObservation {
            widget_id: "fmt".into(),
            kind: crate::mse::MseKind::RadioGroup,
            cluster_id: 0,
            before: "mp4".into(),
            after: "webm".into(),
            event: Event::select("fmt", "webm"),
            trace_position: 0,
            domain: vec!["mp4".into(), "webm".into(), "ogg".into()],
        };
        let id = registry.record_observation(obs, vec![]).unwrap();
        let record = registry.get(id).unwrap().clone();
        assert_eq!(choose_target(&record), Some("ogg".into()));
    }

    #[test]
    fn choose_target_alternates_on_fully_observed_binaries() {
        let mut registry = crate::mse::MseRegistry::default();
        let obs = crate::mse::MseObservation {
            widget_id: "sw".into(),
            kind: crate::mse::MseKind::Switch,
            cluster_id: 0,
            before: "off".into(),
            after: "on".into(),
            event: Event::tap("sw"),
            trace_position: 0,
            domain: vec!["off".into(), "on".into()],
        };
        let id = registry.record_observation(obs, vec![Event::tap("sw")]).unwrap();
        let mut record = registry.get(id).unwrap().clone();
        // Untargeted values go largest-first.
        assert_eq!(choose_target(&record), Some("on".into()));
        record.targeted.insert("on".into());
        assert_eq!(choose_target(&record), Some("off".into()));
        // Every value tried: alternate away from the latest observation.
        record.targeted.insert("off".into());
        assert_eq!(choose_target(&record), Some("off".into()));
    }
}
