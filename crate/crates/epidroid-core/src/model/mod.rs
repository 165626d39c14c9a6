//! Declarative simulated application models: pages, widgets, variables,
//! guarded transitions with coverage labels, and seeded nondeterminism.

mod guard;
mod session;

pub use guard::{Guard, GuardError, Literal};
pub use session::{Session, SessionError, StepResult};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::view::WidgetKind;

/// Domain of a state variable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VarDomain {
    Boolean,
    /// 2-4 mutually exclusive symbols.
    Enum { members: Vec<String> },
    /// Integer range 0..=max.
    Counter { max: u32 },
}

impl VarDomain {
    /// Every value the domain admits, in canonical order.
    pub fn values(&self) -> Vec<Value> {
        match self {
            VarDomain::Boolean => vec![Value::Bool(false), Value::Bool(true)],
            VarDomain::Enum { members } => members.iter().cloned().map(Value::Symbol).collect(),
            VarDomain::Counter { max } => (0..=*max).map(Value::Count).collect(),
        }
    }

    pub fn contains(&self, value: &Value) -> bool {
        match (self, value) {
            (VarDomain::Boolean, Value::Bool(_)) => true,
            (VarDomain::Enum { members }, Value::Symbol(s)) => members.contains(s),
            (VarDomain::Counter { max }, Value::Count(n)) => n <= max,
            _ => false,
        }
    }
}

/// A concrete variable value.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Count(u32),
    Symbol(String),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Count(n) => write!(f, "{n}"),
            Value::Symbol(s) => write!(f, "{s}"),
        }
    }
}

/// A declared state variable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarDef {
    pub name: String,
    pub domain: VarDomain,
    pub initial: Value,
}

/// A widget on a page.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WidgetDef {
    pub widget_id: String,
    pub kind: WidgetKind,
    /// Static text; inputs use it as the placeholder hint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    /// Variable the widget renders, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binding: Option<String>,
    /// Initial attribute values for unbound interactive widgets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checked: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expanded: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub item_count: Option<u32>,
}

/// A page: an activity plus a flat list of widgets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageDef {
    pub page_id: String,
    pub activity_name: String,
    pub widgets: Vec<WidgetDef>,
}

/// Kinds of events the simulator accepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Tap,
    Input,
    Select,
    /// Relaunch the app: back to the entry page with initial variables.
    Restart,
}

/// A widget-targeted event.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Event {
    pub widget: String,
    pub kind: EventKind,
    pub text: Option<String>,
}

impl Event {
    pub fn tap(widget: impl Into<String>) -> Event {
        Event { widget: widget.into(), kind: EventKind::Tap, text: None }
    }

    pub fn input(widget: impl Into<String>, text: impl Into<String>) -> Event {
        Event { widget: widget.into(), kind: EventKind::Input, text: Some(text.into()) }
    }

    pub fn select(widget: impl Into<String>, option: impl Into<String>) -> Event {
        Event { widget: widget.into(), kind: EventKind::Select, text: Some(option.into()) }
    }

    pub fn restart() -> Event {
        Event { widget: String::new(), kind: EventKind::Restart, text: None }
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.kind, &self.text) {
            (EventKind::Restart, _) => write!(f, "restart"),
            (kind, Some(text)) => write!(f, "{kind:?}({}, {text:?})", self.widget),
            (kind, None) => write!(f, "{kind:?}({})", self.widget),
        }
    }
}

/// A variable assignment performed when a transition fires.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Effect {
    Set { var: String, value: Value },
    Toggle { var: String },
    Inc { var: String },
    Dec { var: String },
    /// Copy another variable's value (same domain).
    Copy { var: String, from: String },
    /// Assign the event's text payload (enum domains).
    SetFromEvent { var: String },
}

impl Effect {
    pub fn var(&self) -> &str {
        match self {
            Effect::Set { var, .. }
            | Effect::Toggle { var }
            | Effect::Inc { var }
            | Effect::Dec { var }
            | Effect::Copy { var, .. }
            | Effect::SetFromEvent { var } => var,
        }
    }

    /// Variables the effect reads.
    pub fn reads(&self) -> Option<&str> {
        match self {
            Effect::Copy { from, .. } => Some(from),
            _ => None,
        }
    }
}

/// A guarded transition with coverage labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionDef {
    pub transition_id: String,
    pub source: String,
    pub widget: String,
    pub event_kind: EventKind,
    /// When set, the event's text payload must match exactly.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub when_text: Option<String>,
    /// Guard expression in the mini-language; empty means always enabled.
    #[serde(default)]
    pub guard: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub effects: Vec<Effect>,
    pub target: String,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub branch_labels: BTreeSet<String>,
}

/// Seeded nondeterminism: a transition that sometimes lands elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlakyEdge {
    pub transition_id: String,
    pub probability: f64,
    pub alternate_target: String,
}

/// An authored mutation script: the event sequence that drives a widget to
/// a target value. Ground truth consumed by the oracle reasoner.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MutationScript {
    pub widget_id: String,
    pub value: String,
    pub events: Vec<Event>,
}

/// Authored functional description of a page, echoed by the oracle reasoner.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageSummary {
    pub page_id: String,
    pub summary: String,
}

/// A validated application model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AppModel {
    pub app_id: String,
    pub entry_page: String,
    pub variables: Vec<VarDef>,
    pub pages: Vec<PageDef>,
    pub transitions: Vec<TransitionDef>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flaky_edges: Vec<FlakyEdge>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mutation_scripts: Vec<MutationScript>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub page_summaries: Vec<PageSummary>,
    /// Count of distinct branch labels; computed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_branches: Option<usize>,
    /// Variables the fixture marks as globally scoped.
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub global_variables: BTreeSet<String>,
    #[serde(skip)]
    compiled: CompiledIndex,
}

#[derive(Debug, Clone, Default)]
struct CompiledIndex {
    guards: BTreeMap<String, Guard>,
    page_index: BTreeMap<String, usize>,
    /// (page, widget, kind) -> transition indices in declaration order.
    dispatch: BTreeMap<(String, String, EventKind), Vec<usize>>,
    flaky: BTreeMap<String, (f64, String)>,
    domains: BTreeMap<String, VarDomain>,
    distinct_labels: usize,
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("cannot read `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("guard error in transition `{transition}`: {source}")]
    Guard {
        transition: String,
        #[source]
        source: GuardError,
    },
}

/// Load and validate an app model from a JSON file.
pub fn load_app_model(path: impl AsRef<Path>) -> Result<AppModel, ModelError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_app_model(&text)
}

/// Parse and validate an app model from JSON text.
pub fn parse_app_model(text: &str) -> Result<AppModel, ModelError> {
    let mut model: AppModel = serde_json::from_str(text).map_err(|e| ModelError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    model.validate()?;
    Ok(model)
}

impl AppModel {
    /// Assemble a model from parts and validate it.
    pub fn assemble(
        app_id: String,
        entry_page: String,
        variables: Vec<VarDef>,
        pages: Vec<PageDef>,
        transitions: Vec<TransitionDef>,
    ) -> Result<AppModel, ModelError> {
        let mut model = AppModel {
            app_id,
            entry_page,
            variables,
            pages,
            transitions,
            flaky_edges: Vec::new(),
            mutation_scripts: Vec::new(),
            page_summaries: Vec::new(),
            total_branches: None,
            global_variables: BTreeSet::new(),
            compiled: CompiledIndex::default(),
        };
        model.validate()?;
        Ok(model)
    }

    /// Validate invariants and build the dispatch index. Builders that
    /// assemble models in code must call this before use.
    pub fn validate(&mut self) -> Result<(), ModelError> {
        let mut compiled = CompiledIndex::default();

        let mut domains = BTreeMap::new();
        for var in &self.variables {
            if domains.insert(var.name.clone(), var.domain.clone()).is_some() {
                return Err(ModelError::Validation(format!(
                    "duplicate variable `{}`",
                    var.name
                )));
            }
            if let VarDomain::Enum { members } = &var.domain {
                if members.len() < 2 || members.len() > 4 {
                    return Err(ModelError::Validation(format!(
                        "enum variable `{}` must have 2-4 members, has {}",
                        var.name,
                        members.len()
                    )));
                }
                let distinct: BTreeSet<_> = members.iter().collect();
                if distinct.len() != members.len() {
                    return Err(ModelError::Validation(format!(
                        "enum variable `{}` has duplicate members",
                        var.name
                    )));
                }
            }
            if !var.domain.contains(&var.initial) {
                return Err(ModelError::Validation(format!(
                    "initial value of `{}` is outside its domain",
                    var.name
                )));
            }
        }

        for (idx, page) in self.pages.iter().enumerate() {
            if compiled.page_index.insert(page.page_id.clone(), idx).is_some() {
                return Err(ModelError::Validation(format!(
                    "duplicate page `{}`",
                    page.page_id
                )));
            }
            let mut seen = BTreeSet::new();
            for widget in &page.widgets {
                if !seen.insert(&widget.widget_id) {
                    return Err(ModelError::Validation(format!(
                        "duplicate widget `{}` on page `{}`",
                        widget.widget_id, page.page_id
                    )));
                }
                match (&widget.binding, widget.kind) {
                    (Some(var), kind) => {
                        let Some(domain) = domains.get(var) else {
                            return Err(ModelError::Validation(format!(
                                "widget `{}` binds undeclared variable `{var}`",
                                widget.widget_id
                            )));
                        };
                        let ok = matches!(
                            (kind, domain),
                            (WidgetKind::Switch, VarDomain::Boolean)
                                | (WidgetKind::Input, VarDomain::Boolean)
                                | (WidgetKind::Expandable, VarDomain::Boolean)
                                | (WidgetKind::Container, VarDomain::Counter { .. })
                                | (WidgetKind::RadioGroup, VarDomain::Enum { .. })
                        );
                        if !ok {
                            return Err(ModelError::Validation(format!(
                                "widget `{}` ({kind:?}) cannot bind `{var}`",
                                widget.widget_id
                            )));
                        }
                    }
                    (None, WidgetKind::RadioGroup) => {
                        return Err(ModelError::Validation(format!(
                            "radio group `{}` must bind an enum variable",
                            widget.widget_id
                        )));
                    }
                    (None, _) => {}
                }
            }
        }

        if !compiled.page_index.contains_key(&self.entry_page) {
            return Err(ModelError::Validation(format!(
                "entry page `{}` is not declared",
                self.entry_page
            )));
        }

        let mut label_owner: BTreeMap<&str, &str> = BTreeMap::new();
        let mut transition_ids = BTreeSet::new();
        for (idx, t) in self.transitions.iter().enumerate() {
            if !transition_ids.insert(&t.transition_id) {
                return Err(ModelError::Validation(format!(
                    "duplicate transition `{}`",
                    t.transition_id
                )));
            }
            let Some(&page_idx) = compiled.page_index.get(&t.source) else {
                return Err(ModelError::Validation(format!(
                    "transition `{}` references unknown page `{}`",
                    t.transition_id, t.source
                )));
            };
            if !compiled.page_index.contains_key(&t.target) {
                return Err(ModelError::Validation(format!(
                    "transition `{}` references unknown target page `{}`",
                    t.transition_id, t.target
                )));
            }
            let page = &self.pages[page_idx];
            if !page.widgets.iter().any(|w| w.widget_id == t.widget) {
                return Err(ModelError::Validation(format!(
                    "transition `{}` references unknown widget `{}` on `{}`",
                    t.transition_id, t.widget, t.source
                )));
            }
            for label in &t.branch_labels {
                if let Some(owner) = label_owner.insert(label, &t.transition_id) {
                    if owner != t.transition_id {
                        return Err(ModelError::Validation(format!(
                            "branch label `{label}` appears on `{owner}` and `{}`",
                            t.transition_id
                        )));
                    }
                }
            }
            let guard = Guard::parse(&t.guard).map_err(|source| ModelError::Guard {
                transition: t.transition_id.clone(),
                source,
            })?;
            guard.check(&domains).map_err(|source| ModelError::Guard {
                transition: t.transition_id.clone(),
                source,
            })?;
            compiled.guards.insert(t.transition_id.clone(), guard);
            for effect in &t.effects {
                let var = effect.var();
                let Some(domain) = domains.get(var) else {
                    return Err(ModelError::Validation(format!(
                        "transition `{}` assigns undeclared variable `{var}`",
                        t.transition_id
                    )));
                };
                match effect {
                    Effect::Set { value, .. } => {
                        if !domain.contains(value) {
                            return Err(ModelError::Validation(format!(
                                "transition `{}` assigns `{var}` a value outside its domain",
                                t.transition_id
                            )));
                        }
                    }
                    Effect::Toggle { .. } => {
                        if !matches!(domain, VarDomain::Boolean) {
                            return Err(ModelError::Validation(format!(
                                "transition `{}` toggles non-boolean `{var}`",
                                t.transition_id
                            )));
                        }
                    }
                    Effect::Inc { .. } | Effect::Dec { .. } => {
                        if !matches!(domain, VarDomain::Counter { .. }) {
                            return Err(ModelError::Validation(format!(
                                "transition `{}` steps non-counter `{var}`",
                                t.transition_id
                            )));
                        }
                    }
                    Effect::Copy { from, .. } => {
                        if domains.get(from) != Some(domain) {
                            return Err(ModelError::Validation(format!(
                                "transition `{}` copies `{from}` into `{var}` across domains",
                                t.transition_id
                            )));
                        }
                    }
                    Effect::SetFromEvent { .. } => {
                        if !matches!(domain, VarDomain::Enum { .. }) {
                            return Err(ModelError::Validation(format!(
                                "transition `{}` uses set_from_event on non-enum `{var}`",
                                t.transition_id
                            )));
                        }
                    }
                }
            }
            compiled
                .dispatch
                .entry((t.source.clone(), t.widget.clone(), t.event_kind))
                .or_default()
                .push(idx);
        }

        for edge in &self.flaky_edges {
            if !transition_ids.contains(&edge.transition_id) {
                return Err(ModelError::Validation(format!(
                    "flaky edge references unknown transition `{}`",
                    edge.transition_id
                )));
            }
            if !(0.0..=1.0).contains(&edge.probability) {
                return Err(ModelError::Validation(format!(
                    "flaky edge `{}` has probability outside [0,1]",
                    edge.transition_id
                )));
            }
            if !compiled.page_index.contains_key(&edge.alternate_target) {
                return Err(ModelError::Validation(format!(
                    "flaky edge `{}` targets unknown page `{}`",
                    edge.transition_id, edge.alternate_target
                )));
            }
            compiled.flaky.insert(
                edge.transition_id.clone(),
                (edge.probability, edge.alternate_target.clone()),
            );
        }

        compiled.distinct_labels = label_owner.len();
        if let Some(declared) = self.total_branches {
            if declared != compiled.distinct_labels {
                return Err(ModelError::Validation(format!(
                    "total_branches declares {declared} but the model defines {}",
                    compiled.distinct_labels
                )));
            }
        }
        self.total_branches = Some(compiled.distinct_labels);
        compiled.domains = domains;
        self.compiled = compiled;
        Ok(())
    }

    pub fn total_branches(&self) -> usize {
        self.compiled.distinct_labels
    }

    /// All distinct branch labels.
    pub fn all_labels(&self) -> BTreeSet<String> {
        self.transitions
            .iter()
            .flat_map(|t| t.branch_labels.iter().cloned())
            .collect()
    }

    /// Distinct activity names across pages.
    pub fn activities(&self) -> BTreeSet<String> {
        self.pages.iter().map(|p| p.activity_name.clone()).collect()
    }

    pub fn page(&self, page_id: &str) -> Option<&PageDef> {
        self.compiled.page_index.get(page_id).map(|&i| &self.pages[i])
    }

    pub fn domains(&self) -> &BTreeMap<String, VarDomain> {
        &self.compiled.domains
    }

    pub fn guard(&self, transition_id: &str) -> Option<&Guard> {
        self.compiled.guards.get(transition_id)
    }

    pub fn flaky(&self, transition_id: &str) -> Option<&(f64, String)> {
        self.compiled.flaky.get(transition_id)
    }

    pub(crate) fn dispatch(&self, page: &str, widget: &str, kind: EventKind) -> &[usize] {
        self.compiled
            .dispatch
            .get(&(page.to_string(), widget.to_string(), kind))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Initial valuation of all variables.
    pub fn initial_valuation(&self) -> BTreeMap<String, Value> {
        self.variables
            .iter()
            .map(|v| (v.name.clone(), v.initial.clone()))
            .collect()
    }

    /// Authored mutation script for (widget, target value), if any.
    pub fn mutation_script(&self, widget_id: &str, value: &str) -> Option<&MutationScript> {
        self.mutation_scripts
            .iter()
            .find(|s| s.widget_id == widget_id && s.value == value)
    }

    pub fn page_summary(&self, page_id: &str) -> Option<&str> {
        self.page_summaries
            .iter()
            .find(|s| s.page_id == page_id)
            .map(|s| s.summary.as_str())
    }
}
