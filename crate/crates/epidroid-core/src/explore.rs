//! Warm-up trace producers: a uniform-random explorer and a
//! frontier-greedy explorer that prefers never-tapped widgets.

use std::collections::{BTreeMap, BTreeSet};

use rand::rngs::SmallRng;
use rand::{RngExt, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::engine::{Driver, EngineCtx, EngineError};
use crate::model::{Event, EventKind};
use crate::trace::Trace;
use crate::view::{ViewNode, WidgetKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplorerKind {
    Random,
    Frontier,
}

#[derive(Debug, Clone)]
pub struct ExplorerConfig {
    pub kind: ExplorerKind,
    pub seed: u64,
    /// Per-event restart probability (random explorer).
    pub restart_probability: f64,
    /// Consecutive inert events before the frontier explorer restarts.
    pub inert_restart_threshold: usize,
}

impl ExplorerConfig {
    pub fn new(kind: ExplorerKind, seed: u64) -> ExplorerConfig {
        ExplorerConfig {
            kind,
            seed,
            restart_probability: 0.02,
            inert_restart_threshold: 10,
        }
    }
}

/// A stateful explorer that can resume across phases; events execute until
/// the context budget gates them off.
pub enum Explorer {
    Random(RandomExplorer),
    Frontier(FrontierExplorer),
}

impl Explorer {
    pub fn new(config: &ExplorerConfig) -> Explorer {
        match config.kind {
            ExplorerKind::Random => Explorer::Random(RandomExplorer {
                rng: SmallRng::seed_from_u64(config.seed),
                restart_probability: config.restart_probability,
            }),
            ExplorerKind::Frontier => Explorer::Frontier(FrontierExplorer {
                explored: BTreeSet::new(),
                travel: BTreeMap::new(),
                inert_streak: 0,
                inert_restart_threshold: config.inert_restart_threshold,
                steps_since_progress: 0,
                no_progress_epochs: 0,
            }),
        }
    }

    /// Run until the budget gate closes (or the frontier exhausts). Steps
    /// append to `trace`.
    pub fn run(&mut self, ctx: &mut EngineCtx, driver: &mut Driver, trace: &mut Trace) -> u64 {
        match self {
            Explorer::Random(e) => e.run(ctx, driver, trace),
            Explorer::Frontier(e) => e.run(ctx, driver, trace),
        }
    }
}

/// All events a page affords, in deterministic widget order. Random input
/// text comes from a tiny junk pool; the placeholder hint is reserved for
/// the frontier explorer.
fn page_actions(tree: &ViewNode, include_hint: bool) -> Vec<Event> {
    let mut actions = Vec::new();
    for node in &tree.children {
        match node.kind {
            WidgetKind::Input => {
                if include_hint {
                    if let Some(hint) = node.attrs.text.clone().filter(|t| !t.is_empty()) {
                        actions.push(Event::input(&node.widget_id, hint));
                    }
                }
                actions.push(Event::input(&node.widget_id, "a"));
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

pub struct RandomExplorer {
    rng: SmallRng,
    restart_probability: f64,
}

impl RandomExplorer {
    fn run(&mut self, ctx: &mut EngineCtx, driver: &mut Driver, trace: &mut Trace) -> u64 {
        let mut executed = 0u64;
        loop {
            if ctx.budget.exhausted() {
                return executed;
            }
            let event = if self.rng.random::<f64>() < self.restart_probability {
                Event::restart()
            } else {
                let (state, _) = ctx.current(driver);
                let actions = page_actions(&state.tree, false);
                if actions.is_empty() {
                    Event::restart()
                } else {
                    actions[self.rng.random_range(0..actions.len())].clone()
                }
            };
            match ctx.step(driver, &event) {
                Ok(step) => {
                    executed += 1;
                    trace.steps.push(step.trace_step);
                }
                Err(EngineError::BudgetExhausted) => return executed,
                Err(EngineError::Session(_)) => {}
            }
        }
    }
}

/// The placeholder hint, or a junk string for hintless inputs.
fn frontier_input_text(node: &ViewNode) -> String {
    node.attrs.hint.clone().filter(|t| !t.is_empty()).unwrap_or_else(|| "a".into())
}

pub struct FrontierExplorer {
    explored: BTreeSet<(String, String)>,
    /// Events observed to change the page, per source page, with a
    /// round-robin cursor so travel cycles through all known exits.
    travel: BTreeMap<String, (Vec<Event>, usize)>,
    inert_streak: usize,
    inert_restart_threshold: usize,
    /// Events since the last unexplored pair was fired.
    steps_since_progress: usize,
    no_progress_epochs: usize,
}

/// Travel steps allowed before a no-progress epoch ends in a restart.
const EPOCH_CAP: usize = 40;

impl FrontierExplorer {
    fn pick(&self, page: &str, tree: &ViewNode, current_selection: &BTreeMap<String, String>) -> Option<Event> {
        for node in &tree.children {
            let key = (page.to_string(), node.widget_id.clone());
            if self.explored.contains(&key) {
                continue;
            }
            let event = match node.kind {
                WidgetKind::Input => Event::input(&node.widget_id, frontier_input_text(node)),
                WidgetKind::RadioGroup => {
                    let current = current_selection.get(&node.widget_id).cloned();
                    let option = node
                        .attrs
                        .options
                        .iter()
                        .find(|o| Some(o.as_str()) != current.as_deref())
                        .or_else(|| node.attrs.options.first())?;
                    Event::select(&node.widget_id, option)
                }
                _ => Event::tap(&node.widget_id),
            };
            return Some(event);
        }
        None
    }

    fn next_travel(&mut self, page: &str) -> Option<Event> {
        let (events, cursor) = self.travel.get_mut(page)?;
        if events.is_empty() {
            return None;
        }
        let event = events[*cursor % events.len()].clone();
        *cursor += 1;
        Some(event)
    }

    fn run(&mut self, ctx: &mut EngineCtx, driver: &mut Driver, trace: &mut Trace) -> u64 {
        let mut executed = 0u64;
        loop {
            if ctx.budget.exhausted() {
                return executed;
            }
            let (state, _) = ctx.current(driver);
            let page = driver.session.current_page().to_string();
            let selections: BTreeMap<String, String> = state
                .tree
                .children
                .iter()
                .filter_map(|n| n.attrs.selected.clone().map(|s| (n.widget_id.clone(), s)))
                .collect();

            let fresh = self.pick(&page, &state.tree, &selections);
            let progress = fresh.is_some();
            let event = match fresh {
                Some(event) => event,
                None if self.steps_since_progress >= EPOCH_CAP => {
                    self.no_progress_epochs += 1;
                    if self.no_progress_epochs >= 2 {
                        return executed;
                    }
                    self.steps_since_progress = 0;
                    self.inert_streak = 0;
                    Event::restart()
                }
                None if self.inert_streak >= self.inert_restart_threshold => {
                    self.inert_streak = 0;
                    Event::restart()
                }
                // Exhausted page: travel via a known page-changing event.
                None => match self.next_travel(&page) {
                    Some(event) => event,
                    None => Event::restart(),
                },
            };

            match ctx.step(driver, &event) {
                Ok(step) => {
                    executed += 1;
                    if progress {
                        self.steps_since_progress = 0;
                        self.no_progress_epochs = 0;
                    } else {
                        self.steps_since_progress += 1;
                    }
                    if event.kind != EventKind::Restart {
                        self.explored.insert((page.clone(), event.widget.clone()));
                        if step.transitioned && step.pre_cluster != step.post_cluster {
                            let (events, _) = self.travel.entry(page.clone()).or_default();
                            if !events.contains(&event) {
                                events.push(event.clone());
                            }
                        }
                        if step.transitioned || step.post_signature != step.trace_step.pre_signature
                        {
                            self.inert_streak = 0;
                        } else {
                            self.inert_streak += 1;
                        }
                    }
                    trace.steps.push(step.trace_step);
                }
                Err(EngineError::BudgetExhausted) => return executed,
                Err(EngineError::Session(_)) => {
                    self.inert_streak += 1;
                    self.steps_since_progress += 1;
                }
            }
        }
    }
}
