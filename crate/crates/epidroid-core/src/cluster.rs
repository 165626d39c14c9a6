//! Content-free view-tree abstraction, Dice-coefficient structural
//! similarity, and page-cluster assignment.

use std::collections::BTreeMap;

use crate::view::{NodeAttrs, ViewNode, WidgetKind};

pub type ClusterId = u32;

/// A GUI screen: the attributed tree plus the stable fingerprint of its
/// content-free abstraction. Equal signatures are treated as equal states.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbstractState {
    pub activity_name: String,
    pub signature: u64,
    pub tree: ViewNode,
}

impl AbstractState {
    pub fn from_concrete(activity_name: String, tree: ViewNode) -> AbstractState {
        let signature = abstract_view_tree(&tree).signature();
        AbstractState { activity_name, signature, tree }
    }
}

/// Erase text content, item counts, and state-bearing boolean attributes,
/// preserving kind, widget id, and structure.
pub fn abstract_view_tree(tree: &ViewNode) -> ViewNode {
    ViewNode {
        widget_id: tree.widget_id.clone(),
        kind: tree.kind,
        depth: tree.depth,
        attrs: NodeAttrs::default(),
        children: tree.children.iter().map(abstract_view_tree).collect(),
    }
}

type NodeSig = (WidgetKind, String, u32);

fn signature_multiset(tree: &ViewNode) -> BTreeMap<NodeSig, usize> {
    let mut set = BTreeMap::new();
    tree.walk(&mut |node| {
        *set.entry((node.kind, node.widget_id.clone(), node.depth)).or_insert(0) += 1;
    });
    set
}

/// Dice coefficient over the multisets of (kind, widget_id, depth) node
/// signatures: `2|A∩B| / (|A|+|B|)`. Two empty trees score 1.0.
pub fn dice_similarity(a: &ViewNode, b: &ViewNode) -> f64 {
    let sa = signature_multiset(a);
    let sb = signature_multiset(b);
    let total: usize = sa.values().sum::<usize>() + sb.values().sum::<usize>();
    if total == 0 {
        return 1.0;
    }
    let mut matched = 0usize;
    for (sig, count) in &sa {
        if let Some(other) = sb.get(sig) {
            matched += count.min(other);
        }
    }
    (2.0 * matched as f64) / total as f64
}

/// A page cluster: the first-seen state is the representative and is never
/// re-elected.
#[derive(Debug, Clone)]
pub struct PageCluster {
    pub cluster_id: ClusterId,
    pub activity_name: String,
    pub representative: ViewNode,
    pub member_signatures: Vec<u64>,
    pub summary: Option<String>,
}

/// Single-writer registry of page clusters.
#[derive(Debug, Clone, Default)]
pub struct ClusterRegistry {
    clusters: Vec<PageCluster>,
    by_signature: BTreeMap<u64, ClusterId>,
    threshold: f64,
}

impl ClusterRegistry {
    /// Threshold must lie in (0, 1].
    pub fn new(threshold: f64) -> ClusterRegistry {
        assert!(threshold > 0.0 && threshold <= 1.0, "threshold in (0,1]");
        ClusterRegistry { clusters: Vec::new(), by_signature: BTreeMap::new(), threshold }
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn clusters(&self) -> &[PageCluster] {
        &self.clusters
    }

    pub fn get(&self, id: ClusterId) -> Option<&PageCluster> {
        self.clusters.get(id as usize)
    }

    pub fn set_summary(&mut self, id: ClusterId, summary: String) {
        if let Some(cluster) = self.clusters.get_mut(id as usize) {
            cluster.summary = Some(summary);
        }
    }

    /// Cluster of a previously assigned signature.
    pub fn cluster_of(&self, signature: u64) -> Option<ClusterId> {
        self.by_signature.get(&signature).copied()
    }

    /// Assign a state to the existing cluster of maximal similarity when that
    /// similarity reaches the threshold (ties break to the lowest cluster
    /// id); otherwise open a new cluster with this state as representative.
    pub fn assign(&mut self, state: &AbstractState) -> ClusterId {
        if let Some(&id) = self.by_signature.get(&state.signature) {
            return id;
        }
        let abstracted = abstract_view_tree(&state.tree);
        let mut best: Option<(ClusterId, f64)> = None;
        for cluster in &self.clusters {
            let sim = dice_similarity(&abstracted, &cluster.representative);
            let better = match best {
                None => true,
                Some((_, best_sim)) => sim > best_sim,
            };
            if better {
                best = Some((cluster.cluster_id, sim));
            }
        }
        if let Some((id, sim)) = best {
            if sim >= self.threshold {
                self.by_signature.insert(state.signature, id);
                self.clusters[id as usize].member_signatures.push(state.signature);
                return id;
            }
        }
        let id = self.clusters.len() as ClusterId;
        self.clusters.push(PageCluster {
            cluster_id: id,
            activity_name: state.activity_name.clone(),
            representative: abstracted,
            member_signatures: vec![state.signature],
            summary: None,
        });
        self.by_signature.insert(state.signature, id);
        id
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn node(id: &str, kind: WidgetKind, depth: u32) -> ViewNode {
        ViewNode::new(id, kind, depth)
    }

    fn tree(ids: &[&str]) -> ViewNode {
        let mut root = node("root", WidgetKind::Root, 0);
        for id in ids {
            root.children.push(node(id, WidgetKind::Button, 1));
        }
        root
    }

    /// Independent oracle: Dice via explicit multiset intersection built
    /// from sorted signature lists.
    fn dice_oracle(a: &ViewNode, b: &ViewNode) -> f64 {
        let collect = |t: &ViewNode| {
            let mut v: Vec<String> = Vec::new();
            t.walk(&mut |n| v.push(format!("{:?}/{}/{}", n.kind, n.widget_id, n.depth)));
            v.sort();
            v
        };
        let (mut xs, ys) = (collect(a), collect(b));
        let total = xs.len() + ys.len();
        if total == 0 {
            return 1.0;
        }
        let mut matched = 0usize;
        let mut remaining = ys.clone();
        xs.retain(|x| {
            if let Some(pos) = remaining.iter().position(|y| y == x) {
                remaining.remove(pos);
                matched += 1;
                false
            } else {
                true
            }
        });
        (2.0 * matched as f64) / total as f64
    }

    #[test]
    fn identical_trees_score_one() {
        let a = tree(&["x", "y", "z"]);
        assert_eq!(dice_similarity(&a, &a.clone()), 1.0);
    }

    #[test]
    fn disjoint_trees_score_zero() {
        let mut a = node("ra", WidgetKind::Root, 0);
        a.children.push(node("x", WidgetKind::Button, 1));
        let mut b = node("rb", WidgetKind::Root, 0);
        b.children.push(node("y", WidgetKind::Label, 1));
        assert_eq!(dice_similarity(&a, &b), 0.0);
    }

    #[test]
    fn partial_overlap_matches_the_set_oracle() {
        // {root,x,y,z} vs {root,x,y,w}: shared multiset {root,x,y} of 3.
        let a = tree(&["x", "y", "z"]);
        let b = tree(&["x", "y", "w"]);
        let got = dice_similarity(&a, &b);
        assert!((got - dice_oracle(&a, &b)).abs() < 1e-12);
        assert!((got - 0.75).abs() < 1e-12);
    }

    #[test]
    fn three_node_example_evaluates_to_two_thirds() {
        // Without a shared root: A = {x,y,z}, B = {x,y,w} -> 2*2/(3+3).
        let mut a = node("x", WidgetKind::Button, 0);
        a.children.push(node("y", WidgetKind::Button, 1));
        a.children.push(node("z", WidgetKind::Button, 1));
        let mut b = node("x", WidgetKind::Button, 0);
        b.children.push(node("y", WidgetKind::Button, 1));
        b.children.push(node("w", WidgetKind::Button, 1));
        let got = dice_similarity(&a, &b);
        assert!((got - 2.0 / 3.0).abs() < 1e-12);
        assert!((got - dice_oracle(&a, &b)).abs() < 1e-12);
    }

    #[test]
    fn abstraction_is_idempotent_and_erases_dynamic_content() {
        let mut t = tree(&["field"]);
        t.children[0].kind = WidgetKind::Input;
        t.children[0].attrs.text = Some("WebM".into());
        let once = abstract_view_tree(&t);
        assert_eq!(once.children[0].attrs.text, None);
        assert_eq!(abstract_view_tree(&once), once);
    }

    #[test]
    fn single_attribute_flips_do_not_change_the_abstraction() {
        // Enumerate every single-attribute flip on a mixed page.
        let mut base = node("root", WidgetKind::Root, 0);
        let mut sw = node("sw", WidgetKind::Switch, 1);
        sw.attrs.checked = Some(false);
        let mut input = node("in", WidgetKind::Input, 1);
        input.attrs.text = Some(String::new());
        let mut exp = node("ex", WidgetKind::Expandable, 1);
        exp.attrs.expanded = Some(false);
        let mut radio = node("rg", WidgetKind::RadioGroup, 1);
        radio.attrs.selected = Some("mp4".into());
        base.children.extend([sw, input, exp, radio]);

        let reference = abstract_view_tree(&base).signature();
        for i in 0..base.children.len() {
            let mut flipped = base.clone();
            let child = &mut flipped.children[i];
            match child.kind {
                WidgetKind::Switch => child.attrs.checked = Some(true),
                WidgetKind::Input => child.attrs.text = Some("abc".into()),
                WidgetKind::Expandable => child.attrs.expanded = Some(true),
                WidgetKind::RadioGroup => child.attrs.selected = Some("webm".into()),
                _ => {}
            }
            assert_eq!(abstract_view_tree(&flipped).signature(), reference);
        }
    }

    #[test]
    fn assignment_joins_at_threshold_and_splits_below() {
        let mut registry = ClusterRegistry::new(0.80);
        let a = AbstractState::from_concrete("A".into(), tree(&["x", "y", "z", "w"]));
        let id_a = registry.assign(&a);

        // Same structure, new signature via an extra matching member later;
        // identical tree maps to the same cluster by construction.
        let same = AbstractState::from_concrete("A".into(), tree(&["x", "y", "z", "w"]));
        assert_eq!(registry.assign(&same), id_a);

        // 5 shared of (5+5) with one divergent widget: dice = 0.8 -> joins.
        let near = AbstractState::from_concrete("A".into(), tree(&["x", "y", "z", "q"]));
        assert_eq!(registry.assign(&near), id_a);

        // Disjoint widgets: new cluster.
        let far = AbstractState::from_concrete("B".into(), tree(&["p", "q", "r", "s"]));
        let id_far = registry.assign(&far);
        assert_ne!(id_far, id_a);
    }

    #[test]
    fn tie_breaks_to_lowest_cluster_id() {
        let mut registry = ClusterRegistry::new(0.99);
        let a = AbstractState::from_concrete("A".into(), tree(&["x"]));
        let b = AbstractState::from_concrete("B".into(), tree(&["y"]));
        let id_a = registry.assign(&a);
        let _id_b = registry.assign(&b);
        // Equal similarity to both (same structure shape, different ids);
        // below threshold for both, so a third distinct tree opens its own.
        let c = AbstractState::from_concrete("C".into(), tree(&["z"]));
        let id_c = registry.assign(&c);
        assert_ne!(id_c, id_a);
        // An exact copy of `a`'s structure re-joins the lowest matching id.
        let a2 = AbstractState::from_concrete("A".into(), tree(&["x"]));
        assert_eq!(registry.assign(&a2), id_a);
    }

    #[test]
    fn dice_properties_hold_over_random_trees() {
        use rand::rngs::SmallRng;
        use rand::{RngExt, SeedableRng};
        let mut rng = SmallRng::seed_from_u64(42);
        for _ in 0..500 {
            let gen = |rng: &mut SmallRng| {
                let n = rng.random_range(0..8usize);
                let ids: Vec<String> = (0..n).map(|_| format!("w{}", rng.random_range(0..6u8))).collect();
                let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
                tree(&refs)
            };
            let a = gen(&mut rng);
            let b = gen(&mut rng);
            let ab = dice_similarity(&a, &b);
            let ba = dice_similarity(&b, &a);
            assert!((ab - ba).abs() < 1e-12, "symmetry");
            assert!((0.0..=1.0).contains(&ab), "bounded");
            assert_eq!(dice_similarity(&a, &a), 1.0, "identity");
        }
    }

    #[test]
    fn assignment_is_deterministic_given_insertion_order() {
        let states: Vec<AbstractState> = (0..6)
            .map(|i| {
                let ids: Vec<String> = (0..=i).map(|j| format!("w{j}")).collect();
                let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
                AbstractState::from_concrete("A".into(), tree(&refs))
            })
            .collect();
        let run = || {
            let mut reg = ClusterRegistry::new(0.80);
            states.iter().map(|s| reg.assign(s)).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
        let mut reg = ClusterRegistry::new(0.80);
        let ids: BTreeSet<ClusterId> = states.iter().map(|s| reg.assign(s)).collect();
        assert!(!ids.is_empty());
    }
}
