//! Ground-truth backend: reads the simulator model (variable bindings,
//! guard reads, authored summaries and mutation scripts) with seeded noise
//! knobs for degradation studies.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::rngs::SmallRng;
use rand::{RngExt, SeedableRng};

use super::{
    ClusterContext, GuideContext, GuideOutcome, ImpactContext, MseContext, PlanContext,
    PlanOutline, Reasoner, ReasonerError, Verdict,
};
use crate::cluster::ClusterId;
use crate::model::{AppModel, Event, EventKind};
use crate::mse::{MseKind, Scope};
use crate::view::WidgetKind;

/// Seeded degradation knobs; all zeroes reproduce ground truth exactly.
#[derive(Debug, Clone, Copy)]
pub struct NoiseConfig {
    /// Probability of flipping a validation verdict.
    pub validation_flip: f64,
    /// Probability of keeping each ground-truth affected cluster.
    pub impact_recall: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig { validation_flip: 0.0, impact_recall: 1.0 }
    }
}

pub struct OracleReasoner {
    model: Arc<AppModel>,
    noise: NoiseConfig,
    rng: SmallRng,
}

impl OracleReasoner {
    pub fn new(model: Arc<AppModel>, seed: u64) -> OracleReasoner {
        OracleReasoner::with_noise(model, seed, NoiseConfig::default())
    }

    pub fn with_noise(model: Arc<AppModel>, seed: u64, noise: NoiseConfig) -> OracleReasoner {
        OracleReasoner { model, noise, rng: SmallRng::seed_from_u64(seed) }
    }

    /// Variable a widget renders, looked up across pages.
    fn binding_of(&self, widget_id: &str) -> Option<String> {
        self.model
            .pages
            .iter()
            .flat_map(|p| p.widgets.iter())
            .find(|w| w.widget_id == widget_id)
            .and_then(|w| w.binding.clone())
    }

    /// Page hosting a widget.
    fn host_page(&self, widget_id: &str) -> Option<String> {
        self.model
            .pages
            .iter()
            .find(|p| p.widgets.iter().any(|w| w.widget_id == widget_id))
            .map(|p| p.page_id.clone())
    }

    /// Variables with any functional role: read by a guard, or written or
    /// read by an effect.
    fn used_variables(&self) -> BTreeSet<String> {
        let mut used = BTreeSet::new();
        for t in &self.model.transitions {
            if let Some(guard) = self.model.guard(&t.transition_id) {
                used.extend(guard.variables());
            }
            for effect in &t.effects {
                used.insert(effect.var().to_string());
                if let Some(read) = effect.reads() {
                    used.insert(read.to_string());
                }
            }
        }
        used
    }

    /// Pages whose transitions' guards read `var`.
    fn guard_pages(&self, var: &str) -> BTreeSet<String> {
        self.model
            .transitions
            .iter()
            .filter(|t| {
                self.model
                    .guard(&t.transition_id)
                    .map(|g| g.variables().iter().any(|v| v == var))
                    .unwrap_or(false)
            })
            .map(|t| t.source.clone())
            .collect()
    }
}

impl Reasoner for OracleReasoner {
    fn name(&self) -> &'static str {
        "oracle"
    }

    fn summarize_cluster(&mut self, ctx: &ClusterContext) -> Result<String, ReasonerError> {
        // The representative tree's root carries the page id.
        let page_id = ctx.denoised_tree.widget_id.as_str();
        if let Some(summary) = self.model.page_summary(page_id) {
            return Ok(summary.to_string());
        }
        Ok(format!(
            "{}: {} with {} widgets",
            page_id,
            ctx.activity_name,
            ctx.denoised_tree.size().saturating_sub(1)
        ))
    }

    fn validate_mse(&mut self, ctx: &MseContext) -> Result<Verdict, ReasonerError> {
        let used = self.used_variables();
        let truth = match self.binding_of(&ctx.record.widget_id) {
            Some(var) => used.contains(&var),
            None => false,
        };
        let flipped = self.noise.validation_flip > 0.0
            && self.rng.random::<f64>() < self.noise.validation_flip;
        let verdict = truth ^ flipped;
        Ok(if verdict { Verdict::Valid } else { Verdict::Noise })
    }

    fn classify_scope(&mut self, ctx: &MseContext) -> Result<Scope, ReasonerError> {
        let Some(var) = self.binding_of(&ctx.record.widget_id) else {
            return Ok(Scope::IntraPage);
        };
        let host = self.host_page(&ctx.record.widget_id).unwrap_or_default();
        let pages = self.guard_pages(&var);
        if self.model.global_variables.contains(&var) || pages.len() >= 3 {
            return Ok(Scope::Global);
        }
        if !pages.is_empty() && pages.iter().all(|p| p != &host) {
            return Ok(Scope::InterPage);
        }
        Ok(Scope::IntraPage)
    }

    fn infer_impact(&mut self, ctx: &ImpactContext) -> Result<Vec<ClusterId>, ReasonerError> {
        let Some(var) = self.binding_of(&ctx.record.widget_id) else {
            return Ok(vec![ctx.record.cluster_id]);
        };
        let pages = self.guard_pages(&var);
        if pages.is_empty() {
            return Ok(vec![ctx.record.cluster_id]);
        }
        let mut clusters: Vec<ClusterId> = ctx
            .reachable
            .iter()
            .filter(|d| pages.contains(&d.page_id))
            .map(|d| d.cluster_id)
            .collect();
        if self.noise.impact_recall < 1.0 {
            clusters.retain(|_| self.rng.random::<f64>() < self.noise.impact_recall);
        }
        Ok(clusters)
    }

    fn plan_outline(&mut self, ctx: &PlanContext) -> Result<PlanOutline, ReasonerError> {
        // Ground truth knows which widgets the mutation can actually
        // influence: prefer fragments whose replayed suffix exercises a
        // transition guarded by the record's bound variable.
        let var = self.binding_of(&ctx.record.widget_id);
        let mut entries = Vec::new();
        for &cluster in &ctx.affected {
            let page = ctx
                .clusters
                .iter()
                .find(|d| d.cluster_id == cluster)
                .map(|d| d.page_id.clone());
            let relevant_widgets: BTreeSet<String> = match (&var, &page) {
                (Some(var), Some(page)) => self
                    .model
                    .transitions
                    .iter()
                    .filter(|t| {
                        t.source == *page
                            && self
                                .model
                                .guard(&t.transition_id)
                                .map(|g| g.variables().iter().any(|v| v == var))
                                .unwrap_or(false)
                    })
                    .map(|t| t.widget.clone())
                    .collect(),
                _ => BTreeSet::new(),
            };
            // Widgets whose taps would overwrite the mutation itself.
            let mutating_widgets: BTreeSet<String> = match &var {
                Some(var) => self
                    .model
                    .transitions
                    .iter()
                    .filter(|t| t.effects.iter().any(|e| e.var() == var))
                    .map(|t| t.widget.clone())
                    .collect(),
                None => BTreeSet::new(),
            };
            let suffix = |f: &super::FragmentDigest| {
                f.first_visit(cluster).map(|start| f.steps[start..].to_vec())
            };
            let suffix_hits = |f: &super::FragmentDigest| {
                suffix(f)
                    .map(|s| s.iter().any(|step| relevant_widgets.contains(&step.widget)))
                    .unwrap_or(false)
            };
            let suffix_clean = |f: &super::FragmentDigest| {
                suffix(f)
                    .map(|s| s.iter().all(|step| !mutating_widgets.contains(&step.widget)))
                    .unwrap_or(true)
            };
            let pick = |stable: bool, relevant: bool, clean: bool| {
                ctx.fragments
                    .iter()
                    .filter(|f| f.stable == stable && f.visited_clusters.contains(&cluster))
                    .filter(|f| !relevant || suffix_hits(f))
                    .filter(|f| !clean || suffix_clean(f))
                    .max_by(|a, b| {
                        a.footprint_size
                            .cmp(&b.footprint_size)
                            .then(b.fragment_id.cmp(&a.fragment_id))
                    })
            };
            let relevant_exists = pick(true, true, false).or_else(|| pick(false, true, false));
            let chosen = match pick(true, true, true).or_else(|| pick(false, true, true)) {
                Some(f) => Some(Some(f.fragment_id)),
                // Every relevant replay would clobber the mutation:
                // navigate there and expand in place instead.
                None if relevant_exists.is_some() => Some(None),
                None => pick(true, false, false)
                    .or_else(|| pick(false, false, false))
                    .map(|f| Some(f.fragment_id)),
            };
            entries.push((cluster, chosen.unwrap_or(None)));
        }
        Ok(PlanOutline {
            entries,
            rationale: format!(
                "mutate {} to {} then replay affected clusters",
                ctx.record.widget_id, ctx.target_value
            ),
        })
    }

    fn guide_mutation_step(&mut self, ctx: &GuideContext) -> Result<GuideOutcome, ReasonerError> {
        if ctx.current_value.as_deref() == Some(ctx.target_value.as_str()) {
            return Ok(GuideOutcome::Satisfied);
        }
        // Authored script: emit the first event not yet executed, matching
        // the executed history against the script prefix.
        if let Some(script) = self.model.mutation_script(&ctx.widget_id, &ctx.target_value) {
            let mut matched = 0usize;
            for done in &ctx.executed {
                if matched < script.events.len() && done == &script.events[matched] {
                    matched += 1;
                }
            }
            if matched < script.events.len() {
                return Ok(GuideOutcome::Event { event: script.events[matched].clone() });
            }
            return Ok(GuideOutcome::Unreachable);
        }
        // No script: derive the direct event when the widget sits on the
        // current page.
        let Some(node) = ctx.page_tree.find(&ctx.widget_id) else {
            return Ok(GuideOutcome::Unreachable);
        };
        let event = match node.kind {
            WidgetKind::RadioGroup => Event::select(&ctx.widget_id, &ctx.target_value),
            WidgetKind::Input => {
                if ctx.target_value == "filled" {
                    Event::input(&ctx.widget_id, "filled")
                } else {
                    Event::input(&ctx.widget_id, "")
                }
            }
            WidgetKind::Switch | WidgetKind::Expandable => Event::tap(&ctx.widget_id),
            WidgetKind::Container => {
                // Containers change through sibling controls: find a widget
                // on this page whose transition steps the bound counter
                // toward the goal.
                let Some(var) = self.binding_of(&ctx.widget_id) else {
                    return Ok(GuideOutcome::Unreachable);
                };
                let page = ctx.page_tree.widget_id.clone();
                let grows = ctx.target_value == "populated";
                let stepper = self.model.transitions.iter().find(|t| {
                    t.source == page
                        && t.effects.iter().any(|e| match e {
                            crate::model::Effect::Inc { var: v } => grows && v == &var,
                            crate::model::Effect::Dec { var: v } => !grows && v == &var,
                            crate::model::Effect::Set { var: v, value } => {
                                v == &var
                                    && match value {
                                        crate::model::Value::Count(n) => (*n > 0) == grows,
                                        _ => false,
                                    }
                            }
                            _ => false,
                        })
                });
                match stepper {
                    Some(t) => Event { widget: t.widget.clone(), kind: t.event_kind, text: t.when_text.clone() },
                    None => return Ok(GuideOutcome::Unreachable),
                }
            }
            _ => return Ok(GuideOutcome::Unreachable),
        };
        Ok(GuideOutcome::Event { event })
    }
}

/// Kind-aware retargeting of a recorded trigger sequence: rewrite select
/// and input payloads so the final mutation aims at `target_value`.
pub fn retarget_sigma(
    sigma: &[Event],
    record_widget: &str,
    record_kind: MseKind,
    target_value: &str,
    page_options: impl Fn(&str) -> Option<Vec<String>>,
) -> Vec<Event> {
    sigma
        .iter()
        .map(|event| {
            let mut event = event.clone();
            match event.kind {
                EventKind::Select => {
                    // Redirect any select whose option set contains the
                    // target symbol.
                    if let Some(options) = page_options(&event.widget) {
                        if options.iter().any(|o| o == target_value) {
                            event.text = Some(target_value.to_string());
                        }
                    }
                }
                EventKind::Input if event.widget == record_widget && record_kind == MseKind::Input => {
                    event.text = Some(if target_value == "filled" {
                        "filled".to_string()
                    } else {
                        String::new()
                    });
                }
                _ => {}
            }
            event
        })
        .collect()
}
