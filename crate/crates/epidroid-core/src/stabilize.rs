//! Stage 1: slice raw traces, verify replayability with a three-tier
//! fallback, and strip loop/tail redundancy into compact test fragments.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::cluster::ClusterId;
use crate::engine::{EngineCtx, EngineError};
use crate::model::{Event, EventKind};
use crate::trace::{Trace, TraceStep};

/// One fragment step: the event and the page cluster expected afterwards.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FragmentStep {
    pub event: Event,
    pub post_cluster: ClusterId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplayStatus {
    Unverified,
    Stable,
    Truncated,
}

/// A replay-verified, minimized event sequence with its coverage footprint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestFragment {
    pub fragment_id: u32,
    pub steps: Vec<FragmentStep>,
    pub entry_cluster: ClusterId,
    pub exit_cluster: ClusterId,
    pub footprint: BTreeSet<String>,
    pub replay_status: ReplayStatus,
    pub source_trace: String,
}

impl TestFragment {
    pub fn events(&self) -> Vec<Event> {
        self.steps.iter().map(|s| s.event.clone()).collect()
    }

    /// Index of the first step executed from `cluster`, using each step's
    /// pre-cluster (the previous step's post, or the entry cluster).
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

    /// Whether the fragment's path touches `cluster` at all.
    pub fn visits(&self, cluster: ClusterId) -> bool {
        self.entry_cluster == cluster || self.steps.iter().any(|s| s.post_cluster == cluster)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplayOutcome {
    Stable,
    Diverged,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recovery {
    None,
    Navigated,
    Skipped,
    Truncated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayResult {
    pub outcome: ReplayOutcome,
    pub divergence_index: Option<usize>,
    pub recovery: Recovery,
}

/// Per-step record of an actual replay, used by redundancy elimination.
#[derive(Debug, Clone)]
pub struct ExecutedStep {
    pub post_signature: u64,
    pub delta: BTreeSet<String>,
}

#[derive(Debug, Clone)]
pub struct StabilizeConfig {
    /// Hard cap on slice length.
    pub slice_cap: usize,
    /// Replays per verification; majority decides when > 1.
    pub verification_replays: usize,
    /// Recovery attempts per replay before truncation.
    pub recovery_budget: usize,
}

impl Default for StabilizeConfig {
    fn default() -> Self {
        StabilizeConfig { slice_cap: 40, verification_replays: 1, recovery_budget: 3 }
    }
}

#[derive(Debug, Default)]
pub struct StabilizeReport {
    pub fragments: Vec<TestFragment>,
    pub slices: usize,
    pub deduplicated: usize,
    pub dropped_zero_coverage: usize,
    pub truncated: usize,
    pub steps_in: usize,
    pub steps_out: usize,
    pub budget_exhausted: bool,
    pub failures: Vec<String>,
}

/// Cut a trace at app restarts, re-entries to the entry-page cluster, and
/// a hard length cap. Slices that contributed no coverage are dropped.
pub fn slice_trace(
    trace: &Trace,
    entry_cluster: ClusterId,
    cap: usize,
) -> (Vec<Vec<TraceStep>>, usize) {
    let mut slices: Vec<Vec<TraceStep>> = Vec::new();
    let mut current: Vec<TraceStep> = Vec::new();
    let mut dropped = 0usize;
    let mut flush = |current: &mut Vec<TraceStep>, dropped: &mut usize| {
        if current.is_empty() {
            return;
        }
        let has_coverage = current.iter().any(|s| !s.coverage_delta.is_empty());
        if has_coverage {
            slices.push(std::mem::take(current));
        } else {
            *dropped += 1;
            current.clear();
        }
    };
    for step in &trace.steps {
        if step.event.kind == EventKind::Restart {
            flush(&mut current, &mut dropped);
            continue;
        }
        // Re-entry: the previous step returned to the entry cluster.
        let reentered = current
            .last()
            .map(|prev| prev.post_cluster == entry_cluster && prev.pre_cluster != entry_cluster)
            .unwrap_or(false);
        if reentered || current.len() >= cap {
            flush(&mut current, &mut dropped);
        }
        current.push(step.clone());
    }
    flush(&mut current, &mut dropped);
    (slices, dropped)
}

/// Replay `steps` once from a fresh session. Stable iff every event
/// resolves its widget and lands in the recorded post cluster. Divergence
/// is a result, not an error.
pub fn verify_replay(
    ctx: &mut EngineCtx,
    steps: &[FragmentStep],
) -> Result<(ReplayResult, Vec<ExecutedStep>, u64), EngineError> {
    let mut driver = ctx.new_driver();
    let (entry_state, _) = ctx.current(&mut driver);
    let entry_signature = entry_state.signature;
    let mut executed = Vec::new();
    for (i, step) in steps.iter().enumerate() {
        match ctx.step(&mut driver, &step.event) {
            Ok(out) => {
                executed.push(ExecutedStep {
                    post_signature: out.post_signature,
                    delta: out.session_delta.clone(),
                });
                if out.post_cluster != step.post_cluster {
                    ctx.monitor.log_replay(false);
                    return Ok((
                        ReplayResult {
                            outcome: ReplayOutcome::Diverged,
                            divergence_index: Some(i),
                            recovery: Recovery::None,
                        },
                        executed,
                        entry_signature,
                    ));
                }
            }
            Err(EngineError::Session(_)) => {
                ctx.monitor.log_replay(false);
                return Ok((
                    ReplayResult {
                        outcome: ReplayOutcome::Diverged,
                        divergence_index: Some(i),
                        recovery: Recovery::None,
                    },
                    executed,
                    entry_signature,
                ));
            }
            Err(other) => return Err(other),
        }
    }
    ctx.monitor.log_replay(true);
    Ok((
        ReplayResult { outcome: ReplayOutcome::Stable, divergence_index: None, recovery: Recovery::None },
        executed,
        entry_signature,
    ))
}

/// Outcome of a replay with the three-tier fallback applied.
#[derive(Debug, Clone)]
pub struct RecoveredReplay {
    pub result: ReplayResult,
    /// Steps that actually survived (skips and truncation applied).
    pub kept: Vec<FragmentStep>,
    /// Indices into the original steps for each kept step.
    pub kept_indices: Vec<usize>,
    pub executed: Vec<ExecutedStep>,
    pub entry_signature: u64,
}

/// Replay with recovery: on divergence, first navigate back to the failing
/// event's expected pre-cluster; failing that, skip the event; failing
/// that, truncate to the verified prefix.
pub fn replay_with_recovery(
    ctx: &mut EngineCtx,
    steps: &[FragmentStep],
    entry_cluster: ClusterId,
    config: &StabilizeConfig,
) -> Result<RecoveredReplay, EngineError> {
    let mut driver = ctx.new_driver();
    let (entry_state, _) = ctx.current(&mut driver);
    let entry_signature = entry_state.signature;
    let mut kept: Vec<FragmentStep> = Vec::new();
    let mut kept_indices = Vec::new();
    let mut executed = Vec::new();
    let mut recoveries = 0usize;
    let mut first_divergence = None;
    let mut last_divergence: Option<usize> = None;
    let mut used = Recovery::None;

    let mut i = 0usize;
    while i < steps.len() {
        let step = &steps[i];
        let attempt = ctx.step(&mut driver, &step.event);
        let ok = match attempt {
            Ok(out) => {
                let matched = out.post_cluster == step.post_cluster;
                if matched {
                    executed.push(ExecutedStep {
                        post_signature: out.post_signature,
                        delta: out.session_delta.clone(),
                    });
                    kept.push(step.clone());
                    kept_indices.push(i);
                }
                matched
            }
            Err(EngineError::Session(_)) => false,
            Err(other) => return Err(other),
        };
        if ok {
            i += 1;
            continue;
        }

        if first_divergence.is_none() {
            first_divergence = Some(i);
        }
        let repeat = last_divergence == Some(i);
        last_divergence = Some(i);
        if recoveries >= config.recovery_budget {
            ctx.monitor.log_replay(false);
            return Ok(RecoveredReplay {
                result: ReplayResult {
                    outcome: ReplayOutcome::Diverged,
                    divergence_index: first_divergence,
                    recovery: Recovery::Truncated,
                },
                kept,
                kept_indices,
                executed,
                entry_signature,
            });
        }
        recoveries += 1;

        // Tier 1: navigate to the expected pre-cluster and retry the event.
        // A second divergence at the same index escalates straight to the
        // skip tier: retrying a step that keeps reproducing an unexpected
        // outcome burns budget without restoring anything.
        let expected_pre = if i == 0 { entry_cluster } else { steps[i - 1].post_cluster };
        let (_, here) = ctx.current(&mut driver);
        let mut navigated = false;
        if repeat {
            // fall through to tier 2
        } else if let Ok(Some(path)) = ctx.utg.shortest_path(here, expected_pre) {
            let mut nav_ok = true;
            for edge in path {
                match ctx.step(&mut driver, &edge.event) {
                    Ok(out) if out.post_cluster == edge.target => {}
                    Ok(_) | Err(EngineError::Session(_)) => {
                        nav_ok = false;
                        break;
                    }
                    Err(other) => return Err(other),
                }
            }
            if nav_ok {
                let (_, arrived) = ctx.current(&mut driver);
                navigated = arrived == expected_pre;
            }
        }
        if navigated {
            if used == Recovery::None {
                used = Recovery::Navigated;
            }
            continue; // retry step i from the restored context
        }

        // Tier 2: skip the failing event and continue.
        used = Recovery::Skipped;
        i += 1;
    }

    // The surviving sequence must still land in the recorded exit cluster.
    let expected_exit = steps.last().map(|s| s.post_cluster);
    let actual_exit = kept.last().map(|s| s.post_cluster);
    let reached_exit = expected_exit == actual_exit && !kept.is_empty();
    if reached_exit {
        ctx.monitor.log_replay(true);
        Ok(RecoveredReplay {
            result: ReplayResult {
                outcome: ReplayOutcome::Stable,
                divergence_index: first_divergence,
                recovery: used,
            },
            kept,
            kept_indices,
            executed,
            entry_signature,
        })
    } else {
        ctx.monitor.log_replay(false);
        Ok(RecoveredReplay {
            result: ReplayResult {
                outcome: ReplayOutcome::Diverged,
                divergence_index: first_divergence.or(Some(steps.len().saturating_sub(1))),
                recovery: Recovery::Truncated,
            },
            kept,
            kept_indices,
            executed,
            entry_signature,
        })
    }
}

/// Remove zero-coverage same-signature loops and inert zero-coverage tail
/// events; re-verify; on any failure return the original unchanged.
pub fn eliminate_redundancy(
    ctx: &mut EngineCtx,
    fragment: &TestFragment,
    executed: &[ExecutedStep],
    entry_signature: u64,
) -> TestFragment {
    if fragment.replay_status != ReplayStatus::Stable || executed.len() != fragment.steps.len() {
        return fragment.clone();
    }
    let mut work: Vec<(FragmentStep, ExecutedStep)> = fragment
        .steps
        .iter()
        .cloned()
        .zip(executed.iter().cloned())
        .collect();

    // Loop removal to fixpoint: states[k] is the signature after step k,
    // with states[0] the entry signature.
    loop {
        let states: Vec<u64> = std::iter::once(entry_signature)
            .chain(work.iter().map(|(_, e)| e.post_signature))
            .collect();
        let mut removed = false;
        'scan: for a in 0..states.len() {
            for b in (a + 1..states.len()).rev() {
                if states[a] == states[b]
                    && work[a..b].iter().all(|(_, e)| e.delta.is_empty())
                {
                    work.drain(a..b);
                    removed = true;
                    break 'scan;
                }
            }
        }
        if !removed {
            break;
        }
    }

    // Tail trim: trailing steps that neither moved the abstract state nor
    // covered anything.
    loop {
        let states: Vec<u64> = std::iter::once(entry_signature)
            .chain(work.iter().map(|(_, e)| e.post_signature))
            .collect();
        let n = work.len();
        if n == 0 {
            break;
        }
        let last = &work[n - 1].1;
        if last.delta.is_empty() && states[n] == states[n - 1] {
            work.pop();
        } else {
            break;
        }
    }

    if work.len() == fragment.steps.len() {
        return fragment.clone();
    }
    if work.is_empty() {
        return fragment.clone();
    }

    let steps: Vec<FragmentStep> = work.iter().map(|(s, _)| s.clone()).collect();
    let minimized = TestFragment {
        fragment_id: fragment.fragment_id,
        exit_cluster: steps.last().map(|s| s.post_cluster).unwrap_or(fragment.entry_cluster),
        steps,
        entry_cluster: fragment.entry_cluster,
        footprint: fragment.footprint.clone(),
        replay_status: ReplayStatus::Stable,
        source_trace: fragment.source_trace.clone(),
    };

    // Conservative gate: the minimized sequence must replay stable and
    // still cover the footprint.
    match verify_replay(ctx, &minimized.steps) {
        Ok((result, executed, _)) if result.outcome == ReplayOutcome::Stable => {
            let covered: BTreeSet<String> =
                executed.iter().flat_map(|e| e.delta.iter().cloned()).collect();
            if minimized.footprint.is_subset(&covered) {
                minimized
            } else {
                fragment.clone()
            }
        }
        _ => fragment.clone(),
    }
}

/// The full stage-1 pipeline: slice, verify with recovery, minimize, and
/// deduplicate. Per-fragment failures go to the report; the batch never
/// aborts.
pub fn stabilize(
    ctx: &mut EngineCtx,
    traces: &[Trace],
    entry_cluster: ClusterId,
    config: &StabilizeConfig,
) -> StabilizeReport {
    let mut report = StabilizeReport::default();
    let mut seen_sequences: BTreeSet<Vec<Event>> = BTreeSet::new();
    let mut next_id = 0u32;

    for trace in traces {
        let (slices, dropped) = slice_trace(trace, entry_cluster, config.slice_cap);
        report.slices += slices.len();
        report.dropped_zero_coverage += dropped;
        for slice in slices {
            report.steps_in += slice.len();
            let events: Vec<Event> = slice.iter().map(|s| s.event.clone()).collect();
            if !seen_sequences.insert(events) {
                report.deduplicated += 1;
                continue;
            }
            if ctx.budget.exhausted() {
                report.budget_exhausted = true;
                return report;
            }
            let steps: Vec<FragmentStep> = slice
                .iter()
                .map(|s| FragmentStep { event: s.event.clone(), post_cluster: s.post_cluster })
                .collect();
            let original_deltas: Vec<BTreeSet<String>> = slice
                .iter()
                .map(|s| s.coverage_delta.iter().cloned().collect())
                .collect();

            // Verification, optionally by k-replay majority.
            let mut first_stable: Option<RecoveredReplay> = None;
            let mut first_truncated: Option<RecoveredReplay> = None;
            let mut successes = 0usize;
            let k = config.verification_replays.max(1);
            for _ in 0..k {
                match replay_with_recovery(ctx, &steps, entry_cluster, config) {
                    Ok(replay) => {
                        let mut replay = replay;
                        let mut stable = replay.result.outcome == ReplayOutcome::Stable;
                        // The surviving sequence must also hold up without
                        // any fallback; a lucky draw through a flaky edge
                        // is not reproducibility. Majority voting doubles
                        // the strict check.
                        let confirms = if k > 1 { 2 } else { 1 };
                        for _ in 0..confirms {
                            if !stable {
                                break;
                            }
                            match verify_replay(ctx, &replay.kept) {
                                Ok((confirm, _, _)) if confirm.outcome == ReplayOutcome::Stable => {}
                                Ok((confirm, _, _)) => {
                                    stable = false;
                                    replay.result.divergence_index = replay
                                        .result
                                        .divergence_index
                                        .or(confirm.divergence_index);
                                }
                                Err(_) => stable = false,
                            }
                        }
                        if stable {
                            successes += 1;
                            if first_stable.is_none() {
                                first_stable = Some(replay);
                            }
                        } else if first_truncated.is_none() {
                            // Only the verified prefix of a failed replay
                            // may survive.
                            let cut = match replay.result.divergence_index {
                                Some(idx) => {
                                    replay.kept_indices.iter().filter(|&&i| i < idx).count()
                                }
                                None => 0,
                            };
                            replay.kept.truncate(cut);
                            replay.kept_indices.truncate(cut);
                            first_truncated = Some(replay);
                        }
                    }
                    Err(EngineError::BudgetExhausted) => {
                        report.budget_exhausted = true;
                        return report;
                    }
                    Err(e) => {
                        report.failures.push(e.to_string());
                    }
                }
            }
            let majority_stable = successes * 2 > k;
            let chosen = if majority_stable { first_stable } else { first_truncated.or(first_stable) };
            let Some(replay) = chosen else {
                report.failures.push("verification produced no usable replay".into());
                continue;
            };

            let footprint: BTreeSet<String> = replay
                .kept_indices
                .iter()
                .flat_map(|&i| original_deltas[i].iter().cloned())
                .collect();
            if footprint.is_empty() {
                report.dropped_zero_coverage += 1;
                continue;
            }
            let status = if majority_stable { ReplayStatus::Stable } else { ReplayStatus::Truncated };
            if status == ReplayStatus::Truncated {
                report.truncated += 1;
            }
            let fragment = TestFragment {
                fragment_id: next_id,
                exit_cluster: replay
                    .kept
                    .last()
                    .map(|s| s.post_cluster)
                    .unwrap_or(entry_cluster),
                steps: replay.kept.clone(),
                entry_cluster,
                footprint,
                replay_status: status,
                source_trace: trace.origin.clone(),
            };
            let fragment = if status == ReplayStatus::Stable {
                eliminate_redundancy(ctx, &fragment, &replay.executed, replay.entry_signature)
            } else {
                fragment
            };
            if seen_sequences.insert(fragment.events()) || fragment.steps.len() == replay.kept.len()
            {
                report.steps_out += fragment.steps.len();
                report.fragments.push(fragment);
                next_id += 1;
            }
        }
    }
    report
}
