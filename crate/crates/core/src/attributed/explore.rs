//! Bounded exploration of attributed grammars and the checks on top of it:
//! counter invariants, occurrence uniqueness, non-negative rewards, and
//! behavioural agreement with the original grammar after erasing the
//! encoding.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::grammar::find_matches;
use crate::graph::{
    enumerate_typed_monos_extending, Graph, GraphMorphism, TypedGraph,
};

use super::encode::{CounterEncoding, CounterInvariant};
use super::{apply_attributed, AttrFamily, AttrGrammar, AttributedGraph, ItemKind, ItemRef};

#[derive(Debug, Clone)]
pub struct AttrTransition {
    pub from: usize,
    pub rule: String,
    pub to: usize,
}

/// Bounded attributed transition system.
#[derive(Debug, Clone)]
pub struct AttrLts {
    pub states: Vec<AttributedGraph>,
    pub initial: usize,
    pub transitions: Vec<AttrTransition>,
    pub depth: Vec<usize>,
    pub bound_reached: bool,
}

impl AttrLts {
    pub fn successors(&self, state: usize) -> impl Iterator<Item = &AttrTransition> {
        self.transitions.iter().filter(move |t| t.from == state)
    }
}

/// All steps enabled in a state: instance families apply the largest member
/// whose left-hand side structurally matches, plain rules apply directly.
pub fn enabled_for_bench(g: &AttrGrammar, state: &AttributedGraph) -> Vec<super::AttrStep> { enabled(g, state) }

fn enabled(g: &AttrGrammar, state: &AttributedGraph) -> Vec<super::AttrStep> {
    let mut out = Vec::new();
    let family_members: Vec<&str> = g
        .schemata
        .iter()
        .flat_map(|f| f.members.iter().map(|m| m.rule.as_str()))
        .collect();
    for family in &g.schemata {
        out.extend(family_enabled(g, family, state));
    }
    for rule in &g.rules {
        if family_members.contains(&rule.name()) {
            continue;
        }
        for m in find_matches(&rule.base, &state.skeleton) {
            if let Ok(step) = apply_attributed(g, rule, state, &m) {
                out.push(step);
            }
        }
    }
    out
}

/// Cheap necessary condition for a match: per-type item counts fit.
fn type_counts_fit(pattern: &TypedGraph, host: &TypedGraph) -> bool {
    let count = |g: &TypedGraph| {
        let mut n: BTreeMap<usize, usize> = BTreeMap::new();
        for v in g.graph().node_ids() {
            *n.entry(g.node_type(v).0).or_default() += 1;
        }
        let mut e: BTreeMap<usize, usize> = BTreeMap::new();
        for x in g.graph().edge_ids() {
            *e.entry(g.edge_type(x).0).or_default() += 1;
        }
        (n, e)
    };
    let (pn, pe) = count(pattern);
    let (hn, he) = count(host);
    pn.iter().all(|(t, c)| hn.get(t).is_some_and(|h| h >= c))
        && pe.iter().all(|(t, c)| he.get(t).is_some_and(|h| h >= c))
}

fn family_enabled(
    g: &AttrGrammar,
    family: &AttrFamily,
    state: &AttributedGraph,
) -> Vec<super::AttrStep> {
    let mut out = Vec::new();
    if !type_counts_fit(&family.core, &state.skeleton) {
        return out;
    }
    let viable: Vec<&super::AttrFamilyMember> = family
        .members
        .iter()
        .filter(|m| {
            let rule = g.rule(&m.rule).expect("family member exists");
            type_counts_fit(rule.base.lhs(), &state.skeleton)
        })
        .collect();
    for core_match in crate::graph::enumerate_typed_monos(&family.core, &state.skeleton) {
        for member in &viable {
            let rule = g.rule(&member.rule).expect("family member exists");
            let mut fixed_nodes = BTreeMap::new();
            for v in member.core_to_lhs.source().node_ids() {
                fixed_nodes.insert(member.core_to_lhs.node(v), core_match.node(v));
            }
            let mut fixed_edges = BTreeMap::new();
            for e in member.core_to_lhs.source().edge_ids() {
                fixed_edges.insert(member.core_to_lhs.edge(e), core_match.edge(e));
            }
            let extending = enumerate_typed_monos_extending(
                rule.base.lhs(),
                &state.skeleton,
                &fixed_nodes,
                &fixed_edges,
            );
            if extending.is_empty() {
                continue;
            }
            // Matches differing only in the permutation of role copies
            // produce isomorphic results; keep one representative per
            // unordered copy assignment.
            let lhs_g = rule.base.lhs().graph();
            let mut seen = std::collections::BTreeSet::new();
            for m in extending {
                let mut fixed_part: Vec<(String, usize)> = Vec::new();
                let mut copy_nodes: Vec<usize> = Vec::new();
                for v in lhs_g.node_ids() {
                    if lhs_g.node_name(v).contains('$') {
                        copy_nodes.push(m.node(v).0);
                    } else {
                        fixed_part.push((lhs_g.node_name(v).to_string(), m.node(v).0));
                    }
                }
                copy_nodes.sort_unstable();
                let mut fixed_edges_part: Vec<(String, usize)> = Vec::new();
                for e in lhs_g.edge_ids() {
                    if !lhs_g.edge_name(e).contains('$') {
                        fixed_edges_part.push((lhs_g.edge_name(e).to_string(), m.edge(e).0));
                    }
                }
                if !seen.insert((fixed_part, fixed_edges_part, copy_nodes)) {
                    continue;
                }
                if let Ok(step) = apply_attributed(g, rule, state, &m) {
                    out.push(step);
                }
            }
            break;
        }
    }
    out
}

/// Breadth-first exploration to the given depth, states deduplicated by
/// canonical key with attribute values folded into labels.
pub fn explore_attributed(g: &AttrGrammar, max_depth: Option<usize>) -> AttrLts {
    let mut states = vec![g.start.clone()];
    let mut depth = vec![0usize];
    let mut index: std::collections::HashMap<String, usize> = std::collections::HashMap::new();
    index.insert(g.start.key(), 0);
    let mut transitions = Vec::new();
    let mut bound_reached = false;

    let mut frontier = vec![0usize];
    while !frontier.is_empty() {
        if max_depth.is_some_and(|b| depth[frontier[0]] >= b) {
            bound_reached = true;
            break;
        }
        let mut next = Vec::new();
        for &from in &frontier {
            let steps = enabled(g, &states[from]);
            for step in steps {
                let key = step.after.key();
                let to = match index.get(&key) {
                    Some(&i) => i,
                    None => {
                        let i = states.len();
                        states.push(step.after);
                        depth.push(depth[from] + 1);
                        index.insert(key, i);
                        next.push(i);
                        i
                    }
                };
                transitions.push(AttrTransition { from, rule: step.rule, to });
            }
        }
        frontier = next;
    }
    AttrLts { states, initial: 0, transitions, depth, bound_reached }
}

/// Per-state violations of the cardinality equations.
pub fn check_counter_invariants(
    lts: &AttrLts,
    invariants: &[CounterInvariant],
) -> Vec<String> {
    let mut out = Vec::new();
    for (i, state) in lts.states.iter().enumerate() {
        for inv in invariants {
            check_one(i, state, inv, &mut out);
        }
    }
    out
}

fn check_one(
    idx: usize,
    state: &AttributedGraph,
    inv: &CounterInvariant,
    out: &mut Vec<String>,
) {
    let g = state.skeleton.graph();
    let tg = state.skeleton.type_graph();
    let edge_ty = |e| tg.edge_name(state.skeleton.edge_type(e));
    let node_ty = |v| tg.node_name(state.skeleton.node_type(v));
    match inv {
        CounterInvariant::ParallelEdges { complement_type, real_type } => {
            for e in g.edge_ids() {
                if edge_ty(e) != complement_type {
                    continue;
                }
                let parallel = g
                    .edge_ids()
                    .filter(|&f| {
                        edge_ty(f) == real_type && g.src(f) == g.src(e) && g.tgt(f) == g.tgt(e)
                    })
                    .count() as i64;
                let n = state.get(&ItemRef::edge(g.edge_name(e)), "n");
                if n != Some(parallel) {
                    out.push(format!(
                        "state {idx}: {} has n={:?}, expected {parallel}",
                        g.edge_name(e),
                        n
                    ));
                }
            }
        }
        CounterInvariant::BorderOccurrences { node_type, attr, real_type, incoming } => {
            for v in g.node_ids() {
                if node_ty(v) != node_type {
                    continue;
                }
                let count = g
                    .edge_ids()
                    .filter(|&e| {
                        edge_ty(e) == real_type
                            && (if *incoming { g.tgt(e) } else { g.src(e) }) == v
                    })
                    .count() as i64;
                let got = state.get(&ItemRef::node(g.node_name(v)), attr);
                if got != Some(count) {
                    out.push(format!(
                        "state {idx}: {}.{attr}={:?}, expected {count}",
                        g.node_name(v),
                        got
                    ));
                }
            }
        }
        CounterInvariant::AttachedComplements { node_type, attr, complement_type, at_source } => {
            for v in g.node_ids() {
                if node_ty(v) != node_type {
                    continue;
                }
                let count = g
                    .edge_ids()
                    .filter(|&e| {
                        edge_ty(e) == complement_type
                            && (if *at_source { g.src(e) } else { g.tgt(e) }) == v
                    })
                    .count() as i64;
                let got = state.get(&ItemRef::node(g.node_name(v)), attr);
                if got != Some(count) {
                    out.push(format!(
                        "state {idx}: {}.{attr}={:?}, expected {count}",
                        g.node_name(v),
                        got
                    ));
                }
            }
        }
    }
}

/// Every `rwds` value in every explored state, for the non-negativity check.
pub fn all_reward_values(lts: &AttrLts) -> Vec<i64> {
    let mut out = Vec::new();
    for state in &lts.states {
        for attrs in state.values.values() {
            if let Some(v) = attrs.get("rwds") {
                out.push(*v);
            }
        }
    }
    out
}

/// Bounded occurrence-uniqueness check for a constraint: explores the
/// original grammar and counts extensions of every match. Returns false on
/// any state with two extensions, true otherwise (a bound-relative answer).
pub fn has_unique_occurrences(
    g: &AttrGrammar,
    rule: &str,
    nac_id: &str,
    max_depth: usize,
) -> bool {
    let Some(r) = g.rule(rule) else {
        return true;
    };
    let Some(c) = g.nacs_of(rule).iter().find(|c| c.id() == nac_id) else {
        return true;
    };
    let lts = explore_attributed(g, Some(max_depth));
    for state in &lts.states {
        for m in find_matches(&r.base, &state.skeleton) {
            let mut fixed_nodes = BTreeMap::new();
            for v in c.embedding().source().node_ids() {
                fixed_nodes.insert(c.embedding().node(v), m.node(v));
            }
            let mut fixed_edges = BTreeMap::new();
            for e in c.embedding().source().edge_ids() {
                fixed_edges.insert(c.embedding().edge(e), m.edge(e));
            }
            let occurrences = enumerate_typed_monos_extending(
                c.forbidden(),
                &state.skeleton,
                &fixed_nodes,
                &fixed_edges,
            );
            if occurrences.len() > 1 {
                return false;
            }
        }
    }
    true
}

/// Erases the encoding from a state: complement edges and added attributes
/// disappear, the skeleton is retyped over the original type graph.
pub fn erase(
    state: &AttributedGraph,
    original_tg: &super::AttrTypeGraph,
    enc: &CounterEncoding,
) -> AttributedGraph {
    let g = state.skeleton.graph();
    let tg = state.skeleton.type_graph();
    let keep_edge: Vec<bool> = g
        .edge_ids()
        .map(|e| {
            let ty = tg.edge_name(state.skeleton.edge_type(e));
            !enc.complement_types.iter().any(|c| c == ty)
        })
        .collect();

    let mut out = Graph::new();
    let mut node_types = Vec::new();
    for v in g.node_ids() {
        out.add_node(g.node_name(v));
        node_types.push(
            original_tg
                .graph
                .node(tg.node_name(state.skeleton.node_type(v)))
                .expect("original node type"),
        );
    }
    let mut edge_types = Vec::new();
    for e in g.edge_ids() {
        if !keep_edge[e.0] {
            continue;
        }
        let s = out.node(g.node_name(g.src(e))).unwrap();
        let t = out.node(g.node_name(g.tgt(e))).unwrap();
        out.add_edge(g.edge_name(e), s, t);
        edge_types.push(
            original_tg
                .graph
                .edge(tg.edge_name(state.skeleton.edge_type(e)))
                .expect("original edge type"),
        );
    }
    let skeleton = TypedGraph::new(
        GraphMorphism::new(
            Arc::new(out),
            Arc::clone(&original_tg.graph),
            node_types,
            edge_types,
        )
        .expect("erased skeleton is typed"),
    );
    let mut values = BTreeMap::new();
    for ((kind, name), attrs) in &state.values {
        // Drop values on removed edges.
        if *kind == ItemKind::Edge && skeleton.graph().edge(name).is_none() {
            continue;
        }
        let ty = match kind {
            ItemKind::Node => skeleton
                .graph()
                .node(name)
                .map(|v| original_tg.graph.node_name(skeleton.node_type(v)).to_string()),
            ItemKind::Edge => skeleton
                .graph()
                .edge(name)
                .map(|e| original_tg.graph.edge_name(skeleton.edge_type(e)).to_string()),
        };
        let Some(ty) = ty else { continue };
        let declared = original_tg.attrs_of(*kind, &ty);
        let kept: BTreeMap<String, i64> = attrs
            .iter()
            .filter(|(a, _)| declared.contains(a))
            .map(|(a, v)| (a.clone(), *v))
            .collect();
        if !kept.is_empty() {
            values.insert((*kind, name.clone()), kept);
        }
    }
    AttributedGraph { skeleton, values }
}

/// Report of the bounded behavioural comparison.
#[derive(Debug, Clone)]
pub struct BoundedEquivReport {
    pub bisimilar: bool,
    pub issues: Vec<String>,
    pub original_states: usize,
    pub encoded_states: usize,
}

/// Bounded bisimilarity of the original grammar and its counter encoding
/// after erasure: states are related when their erased canonical keys and
/// depths agree; transition matching is required strictly below the bound.
pub fn bounded_equiv_after_erasure(
    original: &AttrGrammar,
    enc: &CounterEncoding,
    depth: usize,
) -> BoundedEquivReport {
    let lts_o = explore_attributed(original, Some(depth));
    let lts_e = explore_attributed(&enc.grammar, Some(depth));
    bounded_equiv_lts(original, enc, &lts_o, &lts_e, depth)
}

/// The comparison of [`bounded_equiv_after_erasure`] over precomputed
/// transition systems.
pub fn bounded_equiv_lts(
    original: &AttrGrammar,
    enc: &CounterEncoding,
    lts_o: &AttrLts,
    lts_e: &AttrLts,
    depth: usize,
) -> BoundedEquivReport {
    let mut issues = Vec::new();

    let erased_keys: Vec<String> = lts_e
        .states
        .iter()
        .map(|s| erase(s, &original.type_graph, enc).key())
        .collect();
    let orig_keys: Vec<String> = lts_o.states.iter().map(|s| s.key()).collect();

    // Candidate relation: equal erased keys at equal depth. Keys are
    // bucketed, so the relation stays sparse.
    let mut by_key: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (j, ke) in erased_keys.iter().enumerate() {
        by_key.entry(ke.as_str()).or_default().push(j);
    }
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for (i, ko) in orig_keys.iter().enumerate() {
        if let Some(js) = by_key.get(ko.as_str()) {
            for &j in js {
                if lts_o.depth[i] == lts_e.depth[j] {
                    pairs.push((i, j));
                }
            }
        }
    }
    let pair_index: BTreeMap<(usize, usize), usize> =
        pairs.iter().enumerate().map(|(k, &p)| (p, k)).collect();
    let label = |r: &str| -> String {
        enc.rule_origin.get(r).cloned().unwrap_or_else(|| r.to_string())
    };
    let mut succ_o: Vec<Vec<(String, usize)>> = vec![Vec::new(); lts_o.states.len()];
    for t in &lts_o.transitions {
        succ_o[t.from].push((t.rule.clone(), t.to));
    }
    let mut succ_e: Vec<Vec<(String, usize)>> = vec![Vec::new(); lts_e.states.len()];
    for t in &lts_e.transitions {
        succ_e[t.from].push((label(&t.rule), t.to));
    }

    // Greatest fixpoint: a pair survives when each side's transitions are
    // matched by the other into surviving pairs; states at the bound are
    // not required to match onward transitions.
    let mut alive: Vec<bool> = vec![true; pairs.len()];
    loop {
        let mut changed = false;
        for (idx, &(i, j)) in pairs.iter().enumerate() {
            if !alive[idx] || lts_o.depth[i] >= depth {
                continue;
            }
            let survives = |a: usize, b: usize| {
                pair_index.get(&(a, b)).is_some_and(|&k| alive[k])
            };
            let forth = succ_o[i]
                .iter()
                .all(|(l, to)| succ_e[j].iter().any(|(l2, te)| l2 == l && survives(*to, *te)));
            let back = succ_e[j]
                .iter()
                .all(|(l2, te)| succ_o[i].iter().any(|(l, to)| l == l2 && survives(*to, *te)));
            if !(forth && back) {
                alive[idx] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let initial_ok = pair_index
        .get(&(lts_o.initial, lts_e.initial))
        .is_some_and(|&k| alive[k]);
    if !initial_ok {
        issues.push("initial states are not bisimilar at the bound".to_string());
        // Provide one diagnostic layer: unmatched first transitions.
        let o_first: Vec<&str> = lts_o
            .successors(lts_o.initial)
            .map(|t| t.rule.as_str())
            .collect();
        let e_first: Vec<String> = lts_e
            .successors(lts_e.initial)
            .map(|t| label(&t.rule))
            .collect();
        issues.push(format!("original first moves: {o_first:?}"));
        issues.push(format!("encoded first moves: {e_first:?}"));
    }
    BoundedEquivReport {
        bisimilar: initial_ok,
        issues,
        original_states: lts_o.states.len(),
        encoded_states: lts_e.states.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attributed::encode_counters;
    use crate::fixtures::tcr;

    #[test]
    fn original_tcr_explores_a_few_levels() {
        let g = tcr();
        let lts = explore_attributed(&g, Some(3));
        assert!(lts.bound_reached);
        // apply is the only move from the start.
        let first: Vec<&str> = lts.successors(0).map(|t| t.rule.as_str()).collect();
        assert_eq!(first, vec!["apply"]);
        // Then challenge by any of four curators, one state up to iso.
        let s1 = lts.successors(0).next().unwrap().to;
        let second: Vec<&str> = lts.successors(s1).map(|t| t.rule.as_str()).collect();
        assert_eq!(second, vec!["challenge", "challenge", "challenge", "challenge"]);
    }

    #[test]
    fn counter_invariants_hold_on_the_encoded_system() {
        let g = tcr();
        let enc = encode_counters(&g, None).unwrap();
        let lts = explore_attributed(&enc.grammar, Some(6));
        let violations = check_counter_invariants(&lts, &enc.invariants);
        assert!(violations.is_empty(), "{violations:?}");
    }

    #[test]
    fn corrupted_start_counter_is_detected_at_state_zero() {
        let g = tcr();
        let enc = encode_counters(&g, None).unwrap();
        let mut bad = enc.clone();
        let edge_name = bad
            .grammar
            .start
            .skeleton
            .graph()
            .edge_ids()
            .map(|e| bad.grammar.start.skeleton.graph().edge_name(e).to_string())
            .find(|n| n.starts_with("bar(on)"))
            .unwrap();
        bad.grammar.start.set(&ItemRef::edge(&edge_name), "n", 7);
        let lts = explore_attributed(&bad.grammar, Some(0));
        let violations = check_counter_invariants(&lts, &bad.invariants);
        assert!(violations.iter().any(|v| v.contains("state 0")));
    }

    #[test]
    fn unique_occurrences_for_the_apply_constraint() {
        let g = tcr();
        assert!(has_unique_occurrences(&g, "apply", "nac(apply)", 6));
    }

    #[test]
    fn repeated_creation_breaks_uniqueness() {
        // A grammar whose single rule keeps stacking parallel edges.
        use crate::attributed::{AttrGrammar, AttrRule, AttrTypeGraph, AttributedGraph};
        use crate::grammar::Constraint;
        use std::sync::Arc;
        let graph = crate::graph::Graph::from_parts(&["A", "B"], &[("e", "A", "B")]);
        let tg = AttrTypeGraph {
            graph: Arc::clone(&graph),
            node_attrs: BTreeMap::new(),
            edge_attrs: BTreeMap::new(),
        };
        let l = TypedGraph::from_names(&graph, &[("a", "A"), ("b", "B")], &[]);
        let r = TypedGraph::from_names(
            &graph,
            &[("a", "A"), ("b", "B")],
            &[("e1", "e", "a", "b")],
        );
        let to_lhs = GraphMorphism::identity(Arc::clone(l.graph()));
        let to_rhs =
            GraphMorphism::by_common_names(Arc::clone(l.graph()), Arc::clone(r.graph())).unwrap();
        let rule = crate::grammar::Rule::new("stack", l.clone(), l.clone(), r, to_lhs, to_rhs)
            .unwrap();
        // Constraint: two parallel edges is "too many"; never blocks singles.
        let n = TypedGraph::from_names(
            &graph,
            &[("a", "A"), ("b", "B")],
            &[("x1", "e", "a", "b"), ("x2", "e", "a", "b")],
        );
        let emb =
            GraphMorphism::by_common_names(Arc::clone(rule.lhs().graph()), Arc::clone(n.graph()))
                .unwrap();
        let c = Constraint::new("pair", rule.lhs(), emb, n).unwrap();
        let start = AttributedGraph {
            skeleton: TypedGraph::from_names(&graph, &[("a", "A"), ("b", "B")], &[]),
            values: BTreeMap::new(),
        };
        let mut nacs = BTreeMap::new();
        nacs.insert("stack".to_string(), vec![c]);
        let g = AttrGrammar {
            type_graph: tg,
            start,
            rules: vec![AttrRule::plain(rule)],
            nacs,
            schemata: vec![],
        };
        // After three applications there are three parallel edges, so the
        // two-edge pattern has multiple extensions.
        assert!(!has_unique_occurrences(&g, "stack", "pair", 4));
    }

    #[test]
    fn erasure_removes_exactly_the_encoding() {
        let g = tcr();
        let enc = encode_counters(&g, None).unwrap();
        let erased = erase(&enc.grammar.start, &g.type_graph, &enc);
        assert_eq!(erased.key(), g.start.key());
    }

    #[test]
    fn bounded_equivalence_holds_at_small_depth() {
        let g = tcr();
        let enc = encode_counters(&g, None).unwrap();
        let report = bounded_equiv_after_erasure(&g, &enc, 5);
        assert!(report.bisimilar, "{:?}", report.issues);
    }
}
