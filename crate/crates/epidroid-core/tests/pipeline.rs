//! Cross-module integration: fragment invariants, confirmed-dependency
//! soundness, guard/flakiness properties, and backend interchangeability
//! through recorded transcripts.

use std::collections::BTreeMap;
use std::sync::Arc;

use epidroid_core::cluster::ClusterId;
use epidroid_core::engine::EngineCtx;
use epidroid_core::explore::{Explorer, ExplorerConfig, ExplorerKind};
use epidroid_core::fixtures;
use epidroid_core::harness::{run_experiment_with, ExperimentConfig, Mode};
use epidroid_core::model::{Event, Session, Value};
use epidroid_core::monitor::BudgetGate;
use epidroid_core::mse::MseKind;
use epidroid_core::reasoner::{
    retarget_sigma, OracleReasoner, TranscriptRecorder, TranscriptReplayer,
};
use epidroid_core::recompose::navigate_to;
use epidroid_core::stabilize::{stabilize, verify_replay, ReplayOutcome, StabilizeConfig};
use epidroid_core::trace::Trace;

fn warmed_ctx(model: Arc<epidroid_core::AppModel>, seed: u64, budget: u64) -> (EngineCtx, Trace, ClusterId) {
    let mut ctx = EngineCtx::new(model, 0.8, seed);
    let mut driver = ctx.new_driver();
    let entry = ctx.current(&mut driver).1;
    ctx.budget = BudgetGate::limited(budget);
    let mut explorer = Explorer::new(&ExplorerConfig::new(ExplorerKind::Frontier, seed));
    let mut trace = Trace::new("frontier", seed);
    explorer.run(&mut ctx, &mut driver, &mut trace);
    ctx.budget = BudgetGate::unlimited();
    (ctx, trace, entry)
}

#[test]
fn emitted_fragments_connect_their_recorded_clusters() {
    for model in [fixtures::case1(), fixtures::case2(), fixtures::shop()] {
        let (mut ctx, trace, entry) = warmed_ctx(Arc::new(model), 1, 500);
        let report = stabilize(&mut ctx, std::slice::from_ref(&trace), entry, &StabilizeConfig::default());
        assert!(!report.fragments.is_empty());
        for fragment in &report.fragments {
            let (result, _, _) = verify_replay(&mut ctx, &fragment.steps).unwrap();
            assert_eq!(result.outcome, ReplayOutcome::Stable, "fragment {}", fragment.fragment_id);
            assert_eq!(fragment.entry_cluster, entry);
            assert_eq!(
                fragment.steps.last().map(|s| s.post_cluster),
                Some(fragment.exit_cluster)
            );
        }
    }
}

#[test]
fn minimization_is_idempotent_through_the_pipeline() {
    let (mut ctx, trace, entry) = warmed_ctx(Arc::new(fixtures::case1()), 2, 500);
    let once = stabilize(&mut ctx, std::slice::from_ref(&trace), entry, &StabilizeConfig::default());
    // Re-stabilizing the already-minimized fragments (as a synthetic trace
    // of their own steps) must not shrink them further.
    for fragment in &once.fragments {
        let (result, executed, entry_sig) = verify_replay(&mut ctx, &fragment.steps).unwrap();
        assert_eq!(result.outcome, ReplayOutcome::Stable);
        let again = epidroid_core::stabilize::eliminate_redundancy(&mut ctx, fragment, &executed, entry_sig);
        assert_eq!(again.steps, fragment.steps, "fragment {} shrank twice", fragment.fragment_id);
    }
}

#[test]
fn footprints_cover_what_the_source_trace_covered() {
    let (mut ctx, trace, entry) = warmed_ctx(Arc::new(fixtures::case2()), 3, 500);
    let report = stabilize(&mut ctx, std::slice::from_ref(&trace), entry, &StabilizeConfig::default());
    let union: std::collections::BTreeSet<String> = report
        .fragments
        .iter()
        .flat_map(|f| f.footprint.iter().cloned())
        .collect();
    let source = trace.covered_labels();
    // Dropped zero-coverage slices cannot remove covered labels; dedupe and
    // truncation may, so the union stays within the source set.
    assert!(union.is_subset(&source));
    assert!(!union.is_empty());
}

#[test]
fn guards_never_fire_without_holding() {
    // Exhaustive sweep: every (page, action, valuation) on case1; when no
    // enabled transition matches, nothing observable changes.
    let model = Arc::new(fixtures::case1());
    let domains = model.domains().clone();
    let names: Vec<String> = domains.keys().cloned().collect();
    let mut valuations = vec![BTreeMap::new()];
    for name in &names {
        let mut next = Vec::new();
        for valuation in &valuations {
            for value in domains[name].values() {
                let mut v: BTreeMap<String, Value> = valuation.clone();
                v.insert(name.clone(), value);
                next.push(v);
            }
        }
        valuations = next;
    }
    assert!(valuations.len() <= 100_000);
    for page in &model.pages {
        for widget in &page.widgets {
            for valuation in &valuations {
                let mut session = Session::reset(model.clone(), 1);
                session.teleport(&page.page_id, valuation.clone()).unwrap();
                let before_val = session.valuation().clone();
                let before_page = session.current_page().to_string();
                let result = session.execute_event(&Event::tap(&widget.widget_id)).unwrap();
                if !result.transitioned {
                    assert_eq!(session.current_page(), before_page);
                    assert_eq!(session.valuation(), &before_val);
                    assert!(result.coverage_delta.is_empty());
                }
            }
        }
    }
}

#[test]
fn flaky_divergence_frequency_matches_its_probability() {
    let model = Arc::new(fixtures::noise());
    let runs = 10_000;
    let mut diverged = 0u32;
    for seed in 0..runs {
        let mut session = Session::reset(model.clone(), seed as u64);
        let result = session.execute_event(&Event::tap("open_gallery")).unwrap();
        if result.diverged {
            diverged += 1;
        }
    }
    let frequency = diverged as f64 / runs as f64;
    assert!((frequency - 0.10).abs() < 0.05, "observed {frequency}");
}

#[test]
fn forced_divergence_is_reported_at_its_index() {
    // Probability-1 flaky edge: replay diverges exactly at the flaky step.
    let mut model = fixtures::noise();
    model.flaky_edges[0].probability = 1.0;
    model.validate().unwrap();
    let model = Arc::new(model);
    let mut ctx = EngineCtx::new(model, 0.8, 1);
    let mut driver = ctx.new_driver();
    // Learn the clusters for both targets first.
    ctx.step(&mut driver, &Event::tap("open_about")).unwrap();
    ctx.step(&mut driver, &Event::tap("about_back")).unwrap();
    let diverted = ctx.step(&mut driver, &Event::tap("open_gallery")).unwrap();
    assert!(diverted.diverged);
    // A recorded sequence expecting the about page diverges at index 2.
    let steps = vec![
        epidroid_core::stabilize::FragmentStep { event: Event::tap("open_about"), post_cluster: 1 },
        epidroid_core::stabilize::FragmentStep { event: Event::tap("about_back"), post_cluster: 0 },
        epidroid_core::stabilize::FragmentStep {
            event: Event::tap("open_gallery"),
            post_cluster: 99, // unreachable: the edge always diverts
        },
    ];
    let (result, _, _) = verify_replay(&mut ctx, &steps).unwrap();
    assert_eq!(result.outcome, ReplayOutcome::Diverged);
    assert_eq!(result.divergence_index, Some(2));
}

#[test]
fn sigma_sea_reproduces_the_recorded_mutation() {
    let (mut ctx, _, _) = warmed_ctx(Arc::new(fixtures::case1()), 1, 500);
    let record = ctx
        .mses
        .records()
        .iter()
        .find(|r| r.widget_id == "committed_display")
        .expect("committed profile MSE detected")
        .clone();
    assert_eq!(record.kind, MseKind::RadioGroup);
    // Fresh session: navigate to the mutation cluster and replay the
    // trigger retargeted at each domain value.
    for target in &record.domain {
        let mut driver = ctx.new_driver();
        assert!(navigate_to(&mut ctx, &mut driver, record.cluster_id));
        let sigma = retarget_sigma(&record.sigma_sea, &record.widget_id, record.kind, target, |w| {
            if w == "profile_radio" || w == "committed_display" {
                Some(record.domain.clone())
            } else {
                None
            }
        });
        for event in &sigma {
            let _ = ctx.step(&mut driver, event);
        }
        let state = driver.session.observe_view_tree();
        let shown = state.find("committed_display").and_then(|n| n.attrs.selected.clone());
        assert_eq!(shown.as_deref(), Some(target.as_str()));
    }
}

#[test]
fn confirmed_dependencies_reproduce_their_gain_standalone() {
    let model = Arc::new(fixtures::case2());
    let config = ExperimentConfig { seed: 5, ..Default::default() };
    let mut backend = OracleReasoner::new(model.clone(), 5);
    let artifacts = run_experiment_with(model.clone(), &config, &mut backend);
    assert!(!artifacts.report.confirmed_dependencies.is_empty());

    for dep in &artifacts.report.confirmed_dependencies {
        let record = artifacts.mses.iter().find(|r| r.mse_id == dep.mse_id).unwrap();
        let fragment = artifacts
            .fragments
            .iter()
            .filter(|f| f.visits(dep.affected_cluster))
            .max_by_key(|f| f.footprint.len())
            .unwrap();
        let start = fragment.first_visit(dep.affected_cluster).unwrap_or(0);

        let replay_gain = |mutate: bool| {
            // Fresh engine, deterministic warm-up to relearn the graph.
            let (mut ctx, _, _) = warmed_ctx(model.clone(), 5, 500);
            let mut driver = ctx.new_driver();
            if mutate {
                assert!(navigate_to(&mut ctx, &mut driver, record.cluster_id));
                let sigma = retarget_sigma(
                    &record.sigma_sea,
                    &record.widget_id,
                    record.kind,
                    &dep.target_value,
                    |_| None,
                );
                for event in &sigma {
                    let _ = ctx.step(&mut driver, event);
                }
            }
            if !navigate_to(&mut ctx, &mut driver, dep.affected_cluster) {
                return std::collections::BTreeSet::new();
            }
            let before = driver.session.covered().clone();
            for step in fragment.steps.iter().skip(start) {
                if ctx.step(&mut driver, &step.event).is_err() {
                    break;
                }
            }
            driver.session.covered().difference(&before).cloned().collect::<std::collections::BTreeSet<_>>()
        };

        let with = replay_gain(true);
        let without = replay_gain(false);
        let gained: Vec<_> = with.difference(&without).collect();
        assert!(
            !gained.is_empty(),
            "dependency {:?} gained nothing standalone",
            dep
        );
    }
}

#[test]
fn transcripts_reproduce_oracle_driven_runs_exactly() {
    let model = Arc::new(fixtures::cascade());
    let config = ExperimentConfig { seed: 9, warmup_events: 200, enhance_events: 400, ..Default::default() };

    let mut recorder = TranscriptRecorder::new(OracleReasoner::new(model.clone(), 9));
    let mut original = run_experiment_with(model.clone(), &config, &mut recorder);

    let mut jsonl = Vec::new();
    recorder.write_jsonl(&mut jsonl).unwrap();
    assert!(!recorder.entries().is_empty());

    let mut replayer = TranscriptReplayer::read_jsonl(jsonl.as_slice()).unwrap();
    let mut replayed = run_experiment_with(model, &config, &mut replayer);
    assert_eq!(replayer.remaining(), 0, "engine consumed the whole transcript");

    original.report.timestamp = String::new();
    replayed.report.timestamp = String::new();
    assert_eq!(
        serde_json::to_string(&original.report).unwrap(),
        serde_json::to_string(&replayed.report).unwrap()
    );
    assert_eq!(original.curve, replayed.curve);
}

#[test]
fn baseline_ext_and_epidroid_share_identical_warmups() {
    let model = Arc::new(fixtures::case1());
    for seed in [1u64, 7, 23] {
        let base = epidroid_core::harness::run_experiment(
            model.clone(),
            &ExperimentConfig { seed, mode: Mode::BaselineExt, ..Default::default() },
        );
        let epi = epidroid_core::harness::run_experiment(
            model.clone(),
            &ExperimentConfig { seed, mode: Mode::Epidroid, ..Default::default() },
        );
        assert_eq!(base.report.warmup.covered_labels, epi.report.warmup.covered_labels);
        assert_eq!(base.report.warmup.events, epi.report.warmup.events);
        assert_eq!(
            base.curve[..base.report.warmup.events as usize],
            epi.curve[..epi.report.warmup.events as usize]
        );
    }
}

#[test]
fn pruned_prefixes_filter_matching_plans_before_execution() {
    let (mut ctx, trace, entry) = warmed_ctx(Arc::new(fixtures::case2()), 1, 500);
    let report = stabilize(&mut ctx, std::slice::from_ref(&trace), entry, &StabilizeConfig::default());
    let record = ctx
        .mses
        .records()
        .iter()
        .find(|r| r.widget_id == "subscribe_btn")
        .unwrap()
        .clone();
    let mut driver = ctx.new_driver();
    let (_, here) = ctx.current(&mut driver);
    let nav: Vec<Event> = ctx
        .utg
        .shortest_path(here, record.cluster_id)
        .unwrap()
        .unwrap()
        .into_iter()
        .map(|e| e.event)
        .collect();
    let mut prefix = nav;
    prefix.extend(record.sigma_sea.iter().cloned());
    ctx.utg.store_pruned_prefix(prefix);

    let affected = vec![record.cluster_id];
    let outline = epidroid_core::reasoner::default_plan_outline(&affected, &report.fragments);
    let plan = epidroid_core::reasoner::plan_composite(
        &record,
        "on",
        record.sigma_sea.clone(),
        &affected,
        &report.fragments,
        outline,
    );
    let events_before = ctx.monitor.events();
    let mut backend = OracleReasoner::new(ctx.model.clone(), 1);
    let (signal, exec) = epidroid_core::recompose::execute_composite(
        &mut ctx,
        &mut driver,
        &plan,
        &report.fragments,
        &mut backend,
        &epidroid_core::recompose::RecomposeConfig::default(),
    )
    .unwrap();
    assert!(exec.pruned);
    assert!(matches!(signal, epidroid_core::FeedbackSignal::OperationalFailure { .. }));
    assert_eq!(ctx.monitor.events(), events_before, "a filtered plan executes nothing");
}

#[test]
fn skipping_a_stale_event_still_reaches_the_exit_cluster() {
    let (mut ctx, _, entry) = warmed_ctx(Arc::new(fixtures::noise()), 1, 300);
    // The middle step targets a widget that exists nowhere: recovery must
    // skip it and still land in the recorded exit cluster.
    let mut probe = ctx.new_driver();
    let about = ctx.step(&mut probe, &Event::tap("open_about")).unwrap().post_cluster;
    let steps = vec![
        epidroid_core::stabilize::FragmentStep { event: Event::tap("open_about"), post_cluster: about },
        epidroid_core::stabilize::FragmentStep { event: Event::tap("ghost_widget"), post_cluster: about },
        epidroid_core::stabilize::FragmentStep { event: Event::tap("about_back"), post_cluster: entry },
    ];
    let replay = epidroid_core::stabilize::replay_with_recovery(
        &mut ctx,
        &steps,
        entry,
        &StabilizeConfig::default(),
    )
    .unwrap();
    assert_eq!(replay.result.outcome, ReplayOutcome::Stable);
    assert_eq!(replay.result.recovery, epidroid_core::stabilize::Recovery::Skipped);
    assert_eq!(replay.kept.len(), 2);
}

#[test]
fn bounded_expansion_matches_the_exhaustive_two_step_oracle() {
    // Unlock case2, walk to the feed, and compare a depth-2 expansion with
    // an exhaustive enumeration of every action sequence of length <= 2.
    let model = Arc::new(fixtures::case2());
    let (mut ctx, _, _) = warmed_ctx(model.clone(), 1, 500);
    let feed_cluster = ctx
        .clusters
        .clusters()
        .iter()
        .find(|c| c.representative.widget_id == "feed")
        .unwrap()
        .cluster_id;
    let creator_cluster = ctx
        .clusters
        .clusters()
        .iter()
        .find(|c| c.representative.widget_id == "creator")
        .unwrap()
        .cluster_id;

    let prepare = |ctx: &mut EngineCtx| {
        let mut driver = ctx.new_driver();
        assert!(navigate_to(ctx, &mut driver, creator_cluster));
        if driver.session.valuation()["subscribed"] != Value::Bool(true) {
            ctx.step(&mut driver, &Event::tap("subscribe_btn")).unwrap();
        }
        assert!(navigate_to(ctx, &mut driver, feed_cluster));
        driver
    };

    // Exhaustive oracle: clone the session for every sequence of length <= 2.
    let mut driver = prepare(&mut ctx);
    let mut oracle_labels: BTreeMap<String, ()> = BTreeMap::new();
    let mut oracle_sigs = std::collections::BTreeSet::new();
    let actions = |session: &Session| {
        epidroid_core::recompose::enumerate_actions(&session.observe_view_tree())
    };
    for first in actions(&driver.session) {
        let mut s1 = driver.session.clone();
        if let Ok(r1) = s1.execute_event(&first) {
            oracle_sigs.insert(r1.post_state.signature);
            for label in &r1.coverage_delta {
                oracle_labels.insert(label.clone(), ());
            }
            for second in actions(&s1) {
                let mut s2 = s1.clone();
                if let Ok(r2) = s2.execute_event(&second) {
                    oracle_sigs.insert(r2.post_state.signature);
                    for label in &r2.coverage_delta {
                        oracle_labels.insert(label.clone(), ());
                    }
                }
            }
        }
    }

    // Engine expansion from the same state with an ample action budget.
    let before = ctx.monitor.covered().clone();
    let (_, gain) = epidroid_core::recompose::bounded_bfs(&mut ctx, &mut driver, 2, 10_000);
    let after = ctx.monitor.covered().clone();
    let gained: std::collections::BTreeSet<String> = after.difference(&before).cloned().collect();
    let oracle_new: std::collections::BTreeSet<String> = oracle_labels
        .keys()
        .filter(|l| !before.contains(*l))
        .cloned()
        .collect();
    assert_eq!(gained, oracle_new, "depth-2 expansion covers exactly the distance-2 labels");
    assert_eq!(gain as usize, gained.len());
}

#[test]
fn stabilizing_no_traces_yields_nothing() {
    let mut ctx = EngineCtx::new(Arc::new(fixtures::case1()), 0.8, 1);
    let mut driver = ctx.new_driver();
    let entry = ctx.current(&mut driver).1;
    let report = stabilize(&mut ctx, &[], entry, &StabilizeConfig::default());
    assert!(report.fragments.is_empty());
    assert_eq!(report.slices, 0);
}

#[test]
fn decorative_mutations_execute_but_yield_semantic_mismatch() {
    // Even if a decorative (unbound) toggle slips past validation, its plan
    // replays fine and gains nothing.
    let (mut ctx, trace, entry) = warmed_ctx(Arc::new(fixtures::noise()), 2, 400);
    let report = stabilize(&mut ctx, std::slice::from_ref(&trace), entry, &StabilizeConfig::default());
    let record = ctx
        .mses
        .records()
        .iter()
        .find(|r| r.widget_id == "fancy_toggle")
        .expect("decorative toggle detected as a candidate")
        .clone();
    let affected = vec![record.cluster_id];
    let outline = epidroid_core::reasoner::default_plan_outline(&affected, &report.fragments);
    let target = if record.latest_value() == Some("on") { "off" } else { "on" };
    let plan = epidroid_core::reasoner::plan_composite(
        &record,
        target,
        record.sigma_sea.clone(),
        &affected,
        &report.fragments,
        outline,
    );
    let mut driver = ctx.new_driver();
    let mut backend = OracleReasoner::new(ctx.model.clone(), 2);
    let (signal, _) = epidroid_core::recompose::execute_composite(
        &mut ctx,
        &mut driver,
        &plan,
        &report.fragments,
        &mut backend,
        &epidroid_core::recompose::RecomposeConfig::default(),
    )
    .unwrap();
    assert_eq!(signal.kind(), epidroid_core::SignalKind::SemanticMismatch);
}
