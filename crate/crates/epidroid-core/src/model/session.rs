//! A live execution session over an immutable app model.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::rngs::SmallRng;
use rand::{RngExt, SeedableRng};
use serde::Serialize;
use thiserror::Error;

use super::{AppModel, Effect, Event, EventKind, Value, VarDomain};
use crate::cluster::AbstractState;
use crate::view::{NodeAttrs, ViewNode, WidgetKind};

/// Session-local state of an unbound interactive widget.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(untagged)]
enum UiLocal {
    Flag(bool),
    Text(String),
}

/// A single-threaded execution session: current page, variable valuation,
/// seeded randomness, and the cumulative covered label set.
#[derive(Debug, Clone)]
pub struct Session {
    model: Arc<AppModel>,
    page: String,
    valuation: BTreeMap<String, Value>,
    rng: SmallRng,
    seed: u64,
    rng_draws: u64,
    event_count: u64,
    covered: BTreeSet<String>,
    ui_state: BTreeMap<(String, String), UiLocal>,
}

/// Outcome of executing one event.
#[derive(Debug, Clone)]
pub struct StepResult {
    /// Abstract state after the event.
    pub post_state: AbstractState,
    /// Labels newly covered by this session.
    pub coverage_delta: BTreeSet<String>,
    /// Whether a transition fired.
    pub transitioned: bool,
    /// Whether an unbound widget's local state changed.
    pub ui_changed: bool,
    /// Id of the fired transition, if any.
    pub fired: Option<String>,
    /// Whether a flaky edge diverted the transition to its alternate target.
    pub diverged: bool,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SessionError {
    /// Stale locator: the event targets a widget absent from the current page.
    #[error("widget `{widget}` not present on page `{page}`")]
    UnknownWidget { widget: String, page: String },
}

impl Session {
    /// Reset: a fresh session at the entry page with initial valuation and
    /// empty coverage.
    pub fn reset(model: Arc<AppModel>, seed: u64) -> Session {
        let page = model.entry_page.clone();
        let valuation = model.initial_valuation();
        Session {
            model,
            page,
            valuation,
            rng: SmallRng::seed_from_u64(seed),
            seed,
            rng_draws: 0,
            event_count: 0,
            covered: BTreeSet::new(),
            ui_state: BTreeMap::new(),
        }
    }

    pub fn model(&self) -> &Arc<AppModel> {
        &self.model
    }

    pub fn current_page(&self) -> &str {
        &self.page
    }

    pub fn activity(&self) -> &str {
        &self.model.page(&self.page).expect("current page exists").activity_name
    }

    pub fn valuation(&self) -> &BTreeMap<String, Value> {
        &self.valuation
    }

    pub fn covered(&self) -> &BTreeSet<String> {
        &self.covered
    }

    pub fn event_count(&self) -> u64 {
        self.event_count
    }

    /// Serialized observable state; equal snapshots mean indistinguishable
    /// sessions.
    pub fn snapshot(&self) -> String {
        #[derive(Serialize)]
        struct Snap<'a> {
            page: &'a str,
            valuation: &'a BTreeMap<String, Value>,
            seed: u64,
            rng_draws: u64,
            event_count: u64,
            covered: &'a BTreeSet<String>,
            ui_state: Vec<(&'a (String, String), &'a UiLocal)>,
        }
        serde_json::to_string(&Snap {
            page: &self.page,
            valuation: &self.valuation,
            seed: self.seed,
            rng_draws: self.rng_draws,
            event_count: self.event_count,
            covered: &self.covered,
            ui_state: self.ui_state.iter().collect(),
        })
        .expect("session state serializes")
    }

    /// Execute one widget-targeted event.
    pub fn execute_event(&mut self, event: &Event) -> Result<StepResult, SessionError> {
        if event.kind == EventKind::Restart {
            self.event_count += 1;
            self.page = self.model.entry_page.clone();
            self.valuation = self.model.initial_valuation();
            self.ui_state.clear();
            return Ok(StepResult {
                post_state: self.observe_abstract(),
                coverage_delta: BTreeSet::new(),
                transitioned: true,
                ui_changed: false,
                fired: None,
                diverged: false,
            });
        }

        let page = self.model.page(&self.page).expect("current page exists");
        let Some(widget) = page.widgets.iter().find(|w| w.widget_id == event.widget) else {
            return Err(SessionError::UnknownWidget {
                widget: event.widget.clone(),
                page: self.page.clone(),
            });
        };
        let widget = widget.clone();
        self.event_count += 1;

        let candidates = self.model.dispatch(&self.page, &event.widget, event.kind).to_vec();
        for idx in candidates {
            let t = &self.model.transitions[idx];
            if let Some(expected) = &t.when_text {
                if event.text.as_deref() != Some(expected.as_str()) {
                    continue;
                }
            }
            let guard_ok = self
                .model
                .guard(&t.transition_id)
                .map(|g| g.eval(&self.valuation))
                .unwrap_or(true);
            if !guard_ok {
                continue;
            }
            // set_from_event effects need a payload inside the variable's domain.
            let payload_ok = t.effects.iter().all(|e| match e {
                Effect::SetFromEvent { var } => {
                    let domain = &self.model.domains()[var];
                    event
                        .text
                        .as_ref()
                        .map(|s| domain.contains(&Value::Symbol(s.clone())))
                        .unwrap_or(false)
                }
                _ => true,
            });
            if !payload_ok {
                continue;
            }

            let t = t.clone();
            for effect in &t.effects {
                self.apply_effect(effect, event);
            }
            let mut diverged = false;
            let mut target = t.target.clone();
            if let Some(&(probability, ref alternate)) = self.model.flaky(&t.transition_id) {
                self.rng_draws += 1;
                if self.rng.random::<f64>() < probability {
                    diverged = true;
                    target = alternate.clone();
                }
            }
            self.page = target;
            let delta: BTreeSet<String> = t
                .branch_labels
                .iter()
                .filter(|l| !self.covered.contains(*l))
                .cloned()
                .collect();
            self.covered.extend(delta.iter().cloned());
            return Ok(StepResult {
                post_state: self.observe_abstract(),
                coverage_delta: delta,
                transitioned: true,
                ui_changed: false,
                fired: Some(t.transition_id),
                diverged,
            });
        }

        // No transition: unbound interactive widgets still flip local state.
        let mut ui_changed = false;
        if widget.binding.is_none() {
            let key = (self.page.clone(), widget.widget_id.clone());
            match (widget.kind, event.kind) {
                (WidgetKind::Switch, EventKind::Tap) => {
                    let current = match self.ui_state.get(&key) {
                        Some(UiLocal::Flag(b)) => *b,
                        _ => widget.checked.unwrap_or(false),
                    };
                    self.ui_state.insert(key, UiLocal::Flag(!current));
                    ui_changed = true;
                }
                (WidgetKind::Expandable, EventKind::Tap) => {
                    let current = match self.ui_state.get(&key) {
                        Some(UiLocal::Flag(b)) => *b,
                        _ => widget.expanded.unwrap_or(false),
                    };
                    self.ui_state.insert(key, UiLocal::Flag(!current));
                    ui_changed = true;
                }
                (WidgetKind::Input, EventKind::Input) => {
                    let new_text = event.text.clone().unwrap_or_default();
                    let current = match self.ui_state.get(&key) {
                        Some(UiLocal::Text(t)) => t.clone(),
                        _ => String::new(),
                    };
                    if current != new_text {
                        self.ui_state.insert(key, UiLocal::Text(new_text));
                        ui_changed = true;
                    }
                }
                _ => {}
            }
        }

        Ok(StepResult {
            post_state: self.observe_abstract(),
            coverage_delta: BTreeSet::new(),
            transitioned: false,
            ui_changed,
            fired: None,
            diverged: false,
        })
    }

    fn apply_effect(&mut self, effect: &Effect, event: &Event) {
        let name = effect.var().to_string();
        let domain = self.model.domains()[&name].clone();
        let current = self.valuation[&name].clone();
        let next = match effect {
            Effect::Set { value, .. } => value.clone(),
            Effect::Toggle { .. } => match current {
                Value::Bool(b) => Value::Bool(!b),
                other => other,
            },
            Effect::Inc { .. } => match (current, &domain) {
                (Value::Count(n), VarDomain::Counter { max }) => Value::Count((n + 1).min(*max)),
                (other, _) => other,
            },
            Effect::Dec { .. } => match current {
                Value::Count(n) => Value::Count(n.saturating_sub(1)),
                other => other,
            },
            Effect::Copy { from, .. } => self.valuation[from].clone(),
            Effect::SetFromEvent { .. } => {
                Value::Symbol(event.text.clone().unwrap_or_default())
            }
        };
        if domain.contains(&next) {
            self.valuation.insert(name, next);
        }
    }

    /// Full attributed widget tree of the current page, reflecting
    /// valuation-bound attributes.
    pub fn observe_view_tree(&self) -> ViewNode {
        let page = self.model.page(&self.page).expect("current page exists");
        let mut root = ViewNode::new(page.page_id.clone(), WidgetKind::Root, 0);
        for widget in &page.widgets {
            let mut node = ViewNode::new(widget.widget_id.clone(), widget.kind, 1);
            let mut attrs = NodeAttrs::default();
            let bound = widget
                .binding
                .as_ref()
                .map(|var| self.valuation[var].clone());
            let key = (self.page.clone(), widget.widget_id.clone());
            match widget.kind {
                WidgetKind::Switch => {
                    attrs.checked = Some(match (&bound, self.ui_state.get(&key)) {
                        (Some(Value::Bool(b)), _) => *b,
                        (None, Some(UiLocal::Flag(b))) => *b,
                        _ => widget.checked.unwrap_or(false),
                    });
                    attrs.text = widget.text.clone();
                }
                WidgetKind::Input => {
                    attrs.hint = widget.text.clone();
                    let filled_text = || {
                        widget
                            .text
                            .clone()
                            .filter(|t| !t.is_empty())
                            .unwrap_or_else(|| "filled".to_string())
                    };
                    attrs.text = Some(match (&bound, self.ui_state.get(&key)) {
                        (Some(Value::Bool(true)), _) => filled_text(),
                        (Some(Value::Bool(false)), _) => String::new(),
                        (None, Some(UiLocal::Text(t))) => t.clone(),
                        _ => String::new(),
                    });
                }
                WidgetKind::Expandable => {
                    attrs.expanded = Some(match (&bound, self.ui_state.get(&key)) {
                        (Some(Value::Bool(b)), _) => *b,
                        (None, Some(UiLocal::Flag(b))) => *b,
                        _ => widget.expanded.unwrap_or(false),
                    });
                    attrs.text = widget.text.clone();
                }
                WidgetKind::Container => {
                    let count = match &bound {
                        Some(Value::Count(n)) => *n,
                        _ => widget.item_count.unwrap_or(0),
                    };
                    attrs.item_count = Some(count);
                    attrs.text = widget.text.clone();
                }
                WidgetKind::RadioGroup => {
                    if let Some(Value::Symbol(s)) = &bound {
                        attrs.selected = Some(s.clone());
                    }
                    if let Some(var) = &widget.binding {
                        if let VarDomain::Enum { members } = &self.model.domains()[var] {
                            attrs.options = members.clone();
                        }
                    }
                    attrs.text = widget.text.clone();
                }
                WidgetKind::Button | WidgetKind::Label | WidgetKind::ListItem | WidgetKind::Root => {
                    attrs.text = widget.text.clone();
                }
            }
            node.attrs = attrs;
            root.children.push(node);
        }
        root
    }

    fn observe_abstract(&self) -> AbstractState {
        AbstractState::from_concrete(self.activity().to_string(), self.observe_view_tree())
    }

    /// Abstract state of the current page without executing anything.
    pub fn observe_state(&self) -> AbstractState {
        self.observe_abstract()
    }

    /// Force the session into an arbitrary (page, valuation) product state;
    /// simulation studies use this to sweep the state space exhaustively.
    pub fn teleport(
        &mut self,
        page: &str,
        valuation: BTreeMap<String, Value>,
    ) -> Result<(), SessionError> {
        if self.model.page(page).is_none() {
            return Err(SessionError::UnknownWidget {
                widget: String::new(),
                page: page.to_string(),
            });
        }
        for (name, value) in &valuation {
            let ok = self.model.domains().get(name).map(|d| d.contains(value)).unwrap_or(false);
            if !ok {
                return Err(SessionError::UnknownWidget {
                    widget: name.clone(),
                    page: page.to_string(),
                });
            }
        }
        self.page = page.to_string();
        for (name, value) in valuation {
            self.valuation.insert(name, value);
        }
        Ok(())
    }
}
