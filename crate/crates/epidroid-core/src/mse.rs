//! Runtime detection and bookkeeping of Mutable State Element candidates
//! from before/after view-tree diffs.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::ClusterId;
use crate::model::Event;
use crate::view::{ViewNode, WidgetKind};

pub type MseId = u32;

/// The five trackable component kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MseKind {
    Switch,
    Input,
    Expandable,
    Container,
    RadioGroup,
}

/// Estimated impact scope of a mutation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Unknown,
    IntraPage,
    InterPage,
    Global,
}

impl Scope {
    /// Queue rank: inter-page first, then global, then intra-page.
    pub fn rank(self) -> u8 {
        match self {
            Scope::InterPage => 0,
            Scope::Global => 1,
            Scope::IntraPage => 2,
            Scope::Unknown => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Validation {
    Pending,
    Valid,
    Noise,
}

/// One observed value change around a single event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MseObservation {
    pub widget_id: String,
    pub kind: MseKind,
    pub cluster_id: ClusterId,
    pub before: String,
    pub after: String,
    pub event: Event,
    pub trace_position: u64,
    /// Value domain carried by the widget (radio options); binary kinds
    /// derive theirs from the kind.
    pub domain: Vec<String>,
}

/// The tracked triple: trigger sequence, observed mutation evidence, and
/// estimated scope, plus scheduling bookkeeping.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MseRecord {
    pub mse_id: MseId,
    pub widget_id: String,
    pub cluster_id: ClusterId,
    pub kind: MseKind,
    /// Values seen so far, in first-observation order.
    pub observed_values: Vec<String>,
    /// Shortest known event suffix (from a cluster entry) that changed the value.
    pub sigma_sea: Vec<Event>,
    pub scope: Scope,
    pub validated: Validation,
    /// Consecutive semantic-mismatch streak.
    pub mismatch_count: u32,
    /// Scope rank at classification time.
    pub priority_rank: u8,
    pub domain: Vec<String>,
    pub observations: Vec<MseObservation>,
    /// Values already chosen as mutation targets this run.
    pub targeted: BTreeSet<String>,
    /// Whether an operational failure already re-enqueued this record once.
    pub requeued_after_failure: bool,
}

impl MseRecord {
    /// Most recently observed value.
    pub fn latest_value(&self) -> Option<&str> {
        self.observations.last().map(|o| o.after.as_str())
    }

    /// Domain values never observed.
    pub fn unvisited_values(&self) -> Vec<String> {
        self.domain
            .iter()
            .filter(|v| !self.observed_values.contains(v))
            .cloned()
            .collect()
    }

    pub fn fully_observed(&self) -> bool {
        self.unvisited_values().is_empty()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MseError {
    #[error("observation for `{widget}` carries value `{value}` outside its {bound}-value domain")]
    DomainViolation { widget: String, value: String, bound: usize },
}

/// Map widget kinds to trackable MSE kinds; inert kinds yield none.
pub fn classify_component_kind(node: &ViewNode) -> Option<MseKind> {
    match node.kind {
        WidgetKind::Switch => Some(MseKind::Switch),
        WidgetKind::Input => Some(MseKind::Input),
        WidgetKind::Expandable => Some(MseKind::Expandable),
        WidgetKind::Container => Some(MseKind::Container),
        WidgetKind::RadioGroup => Some(MseKind::RadioGroup),
        _ => None,
    }
}

/// State-bearing abstraction of a widget's current value.
pub fn abstract_value(node: &ViewNode) -> Option<(MseKind, String)> {
    let kind = classify_component_kind(node)?;
    let value = match kind {
        MseKind::Switch => {
            if node.attrs.checked.unwrap_or(false) { "on" } else { "off" }.to_string()
        }
        MseKind::Input => {
            let filled = node.attrs.text.as_deref().map(|t| !t.is_empty()).unwrap_or(false);
            if filled { "filled" } else { "empty" }.to_string()
        }
        MseKind::Expandable => {
            if node.attrs.expanded.unwrap_or(false) { "expanded" } else { "collapsed" }.to_string()
        }
        MseKind::Container => {
            if node.attrs.item_count.unwrap_or(0) > 0 { "populated" } else { "empty" }.to_string()
        }
        MseKind::RadioGroup => node.attrs.selected.clone()?,
    };
    Some((kind, value))
}

fn value_domain(kind: MseKind, node: &ViewNode) -> Vec<String> {
    match kind {
        MseKind::Switch => vec!["off".into(), "on".into()],
        MseKind::Input => vec!["empty".into(), "filled".into()],
        MseKind::Expandable => vec!["collapsed".into(), "expanded".into()],
        MseKind::Container => vec!["empty".into(), "populated".into()],
        MseKind::RadioGroup => node.attrs.options.clone(),
    }
}

/// Diff the trees around one event: one observation per widget whose
/// state-bearing abstraction changed. Widgets absent from either tree are
/// skipped.
pub fn detect_candidates(
    pre_tree: &ViewNode,
    event: &Event,
    post_tree: &ViewNode,
    cluster_id: ClusterId,
    trace_position: u64,
) -> Vec<MseObservation> {
    let mut pre_nodes: BTreeMap<String, ViewNode> = BTreeMap::new();
    pre_tree.walk(&mut |n| {
        pre_nodes.insert(n.widget_id.clone(), n.clone());
    });
    let mut observations = Vec::new();
    post_tree.walk(&mut |post| {
        let Some(pre) = pre_nodes.get(post.widget_id.as_str()) else {
            return;
        };
        if pre.kind != post.kind {
            return;
        }
        let (Some((kind, before)), Some((_, after))) = (abstract_value(pre), abstract_value(post))
        else {
            return;
        };
        if before != after {
            observations.push(MseObservation {
                widget_id: post.widget_id.clone(),
                kind,
                cluster_id,
                before,
                after,
                event: event.clone(),
                trace_position,
                domain: value_domain(kind, post),
            });
        }
    });
    observations
}

/// Single-writer registry of MSE records keyed by (cluster, widget).
#[derive(Debug, Clone, Default)]
pub struct MseRegistry {
    records: Vec<MseRecord>,
    by_key: BTreeMap<(ClusterId, String), MseId>,
}

impl MseRegistry {
    pub fn records(&self) -> &[MseRecord] {
        &self.records
    }

    pub fn get(&self, id: MseId) -> Option<&MseRecord> {
        self.records.get(id as usize)
    }

    pub fn get_mut(&mut self, id: MseId) -> Option<&mut MseRecord> {
        self.records.get_mut(id as usize)
    }

    pub fn ids(&self) -> impl Iterator<Item = MseId> + '_ {
        self.records.iter().map(|r| r.mse_id)
    }

    /// Ids still awaiting semantic validation.
    pub fn pending(&self) -> Vec<MseId> {
        self.records
            .iter()
            .filter(|r| r.validated == Validation::Pending)
            .map(|r| r.mse_id)
            .collect()
    }

    /// Create or update the record for an observation; `sigma_sea` is the
    /// triggering suffix and replaces the stored one when shorter.
    pub fn record_observation(
        &mut self,
        observation: MseObservation,
        sigma_sea: Vec<Event>,
    ) -> Result<MseId, MseError> {
        let key = (observation.cluster_id, observation.widget_id.clone());
        let id = match self.by_key.get(&key) {
            Some(&id) => id,
            None => {
                let id = self.records.len() as MseId;
                self.records.push(MseRecord {
                    mse_id: id,
                    widget_id: observation.widget_id.clone(),
                    cluster_id: observation.cluster_id,
                    kind: observation.kind,
                    observed_values: Vec::new(),
                    sigma_sea: Vec::new(),
                    scope: Scope::Unknown,
                    validated: Validation::Pending,
                    mismatch_count: 0,
                    priority_rank: Scope::Unknown.rank(),
                    domain: observation.domain.clone(),
                    observations: Vec::new(),
                    targeted: BTreeSet::new(),
                    requeued_after_failure: false,
                });
                self.by_key.insert(key, id);
                id
            }
        };
        let record = &mut self.records[id as usize];
        let bound = record.domain.len().clamp(2, 4);
        for value in [&observation.before, &observation.after] {
            if !record.domain.contains(value) {
                return Err(MseError::DomainViolation {
                    widget: observation.widget_id.clone(),
                    value: value.clone(),
                    bound,
                });
            }
        }
        for value in [observation.before.clone(), observation.after.clone()] {
            if !record.observed_values.contains(&value) {
                record.observed_values.push(value);
            }
        }
        if record.sigma_sea.is_empty() || sigma_sea.len() < record.sigma_sea.len() {
            record.sigma_sea = sigma_sea;
        }
        record.observations.push(observation);
        Ok(id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::view::NodeAttrs;

    fn node(id: &str, kind: WidgetKind, attrs: NodeAttrs) -> ViewNode {
        let mut n = ViewNode::new(id, kind, 1);
        n.attrs = attrs;
        n
    }

    fn page(children: Vec<ViewNode>) -> ViewNode {
        let mut root = ViewNode::new("p", WidgetKind::Root, 0);
        root.children = children;
        root
    }

    fn switch(id: &str, checked: bool) -> ViewNode {
        node(id, WidgetKind::Switch, NodeAttrs { checked: Some(checked), ..Default::default() })
    }

    #[test]
    fn kinds_map_to_trackable_categories() {
        assert_eq!(classify_component_kind(&switch("s", false)), Some(MseKind::Switch));
        let label = node("l", WidgetKind::Label, NodeAttrs::default());
        assert_eq!(classify_component_kind(&label), None);
        let container = node(
            "c",
            WidgetKind::Container,
            NodeAttrs { item_count: Some(0), ..Default::default() },
        );
        assert_eq!(classify_component_kind(&container), Some(MseKind::Container));
    }

    #[test]
    fn toggle_flip_yields_one_on_off_observation() {
        let pre = page(vec![switch("sub", false)]);
        let post = page(vec![switch("sub", true)]);
        let obs = detect_candidates(&pre, &Event::tap("sub"), &post, 0, 1);
        assert_eq!(obs.len(), 1);
        assert_eq!(obs[0].before, "off");
        assert_eq!(obs[0].after, "on");
    }

    #[test]
    fn typing_into_input_is_empty_to_filled() {
        let pre = page(vec![node(
            "q",
            WidgetKind::Input,
            NodeAttrs { text: Some(String::new()), ..Default::default() },
        )]);
        let post = page(vec![node(
            "q",
            WidgetKind::Input,
            NodeAttrs { text: Some("abc".into()), ..Default::default() },
        )]);
        let obs = detect_candidates(&pre, &Event::input("q", "abc"), &post, 0, 1);
        assert_eq!(obs.len(), 1);
        assert_eq!((obs[0].before.as_str(), obs[0].after.as_str()), ("empty", "filled"));
    }

    #[test]
    fn unchanged_trees_yield_nothing() {
        let pre = page(vec![switch("sub", true)]);
        let obs = detect_candidates(&pre, &Event::tap("elsewhere"), &pre.clone(), 0, 1);
        assert!(obs.is_empty());
    }

    #[test]
    fn widgets_absent_from_either_tree_are_skipped() {
        let pre = page(vec![switch("a", false)]);
        let post = page(vec![switch("b", true)]);
        assert!(detect_candidates(&pre, &Event::tap("a"), &post, 0, 1).is_empty());
    }

    fn radio_obs(before: &str, after: &str) -> MseObservation {
        MseObservation {
            widget_id: "fmt".into(),
            kind: MseKind::RadioGroup,
            cluster_id: 2,
            before: before.into(),
            after: after.into(),
            event: Event::select("fmt", after),
            trace_position: 1,
            domain: vec!["mp4".into(), "webm".into(), "ogg".into()],
        }
    }

    #[test]
    fn first_flip_records_both_values() {
        let mut reg = MseRegistry::default();
        let pre = page(vec![switch("sub", false)]);
        let post = page(vec![switch("sub", true)]);
        let obs = detect_candidates(&pre, &Event::tap("sub"), &post, 0, 1).remove(0);
        let id = reg.record_observation(obs, vec![Event::tap("sub")]).unwrap();
        let record = reg.get(id).unwrap();
        assert_eq!(record.observed_values, vec!["off".to_string(), "on".to_string()]);
        assert!(record.fully_observed());
    }

    #[test]
    fn radio_sees_two_of_three_options() {
        let mut reg = MseRegistry::default();
        let id = reg
            .record_observation(radio_obs("mp4", "webm"), vec![Event::select("fmt", "webm")])
            .unwrap();
        let record = reg.get(id).unwrap();
        assert_eq!(record.observed_values, vec!["mp4".to_string(), "webm".to_string()]);
        assert_eq!(record.unvisited_values(), vec!["ogg".to_string()]);
    }

    #[test]
    fn out_of_domain_radio_value_is_rejected() {
        let mut reg = MseRegistry::default();
        reg.record_observation(radio_obs("mp4", "webm"), vec![]).unwrap();
        let bad = radio_obs("webm", "flac");
        let err = reg.record_observation(bad, vec![]).unwrap_err();
        assert!(matches!(err, MseError::DomainViolation { .. }));
    }

    #[test]
    fn shorter_trigger_suffix_replaces_the_stored_one() {
        let mut reg = MseRegistry::default();
        let long = vec![Event::tap("a"), Event::tap("b"), Event::select("fmt", "webm")];
        let id = reg.record_observation(radio_obs("mp4", "webm"), long.clone()).unwrap();
        assert_eq!(reg.get(id).unwrap().sigma_sea, long);
        let short = vec![Event::select("fmt", "ogg")];
        reg.record_observation(radio_obs("webm", "ogg"), short.clone()).unwrap();
        assert_eq!(reg.get(id).unwrap().sigma_sea, short);
    }

    #[test]
    fn observed_values_grow_and_unvisited_shrink() {
        let mut reg = MseRegistry::default();
        let id = reg.record_observation(radio_obs("mp4", "webm"), vec![]).unwrap();
        let mut prev_observed = reg.get(id).unwrap().observed_values.len();
        let mut prev_unvisited = reg.get(id).unwrap().unvisited_values().len();
        for (b, a) in [("webm", "ogg"), ("ogg", "mp4"), ("mp4", "ogg")] {
            reg.record_observation(radio_obs(b, a), vec![]).unwrap();
            let record = reg.get(id).unwrap();
            assert!(record.observed_values.len() >= prev_observed);
            assert!(record.unvisited_values().len() <= prev_unvisited);
            prev_observed = record.observed_values.len();
            prev_unvisited = record.unvisited_values().len();
        }
        assert!(reg.get(id).unwrap().fully_observed());
        assert!(reg.get(id).unwrap().unvisited_values().is_empty());
    }
}
