//! Programmatic constructions of the bundled corpus grammars.
//!
//! The client-server model is a safe grammar over a seven-node type graph:
//! three clients, two meetings, two servers. Clients are promoted to servers
//! when not in a meeting (`pc`, constraints of shape OUT), servers start a
//! meeting they do not have yet (`sm`, shape IN), clients join a meeting they
//! are not in (`jm`, shape E). In safe graphs instance items are named after
//! their type-graph image, so typings read as inclusions.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::attributed::{AttrGrammar, AttrRule, AttrTypeGraph, AttributedGraph};
use crate::grammar::{find_matches, ConditionalGrammar, Constraint, Rule};
use crate::graph::{Graph, GraphMorphism, TypedGraph};

/// A safe instance over `tg` whose items are named by their types.
pub fn safe_instance(tg: &Arc<Graph>, nodes: &[&str], edges: &[&str]) -> TypedGraph {
    let mut g = Graph::new();
    let mut node_types = Vec::new();
    for n in nodes {
        g.add_node(n);
        node_types.push(tg.node(n).unwrap_or_else(|| panic!("no node type `{n}`")));
    }
    let mut edge_types = Vec::new();
    for e in edges {
        let te = tg.edge(e).unwrap_or_else(|| panic!("no edge type `{e}`"));
        let s = g.node(tg.node_name(tg.src(te))).expect("edge source in instance");
        let t = g.node(tg.node_name(tg.tgt(te))).expect("edge target in instance");
        g.add_edge(e, s, t);
        edge_types.push(te);
    }
    TypedGraph::new(
        GraphMorphism::new(Arc::new(g), Arc::clone(tg), node_types, edge_types)
            .expect("safe instance typing"),
    )
}

/// A rule between safe instances, with span legs matched by item name.
pub fn safe_rule(
    tg: &Arc<Graph>,
    name: &str,
    lhs: (&[&str], &[&str]),
    interface: (&[&str], &[&str]),
    rhs: (&[&str], &[&str]),
) -> Rule {
    let l = safe_instance(tg, lhs.0, lhs.1);
    let k = safe_instance(tg, interface.0, interface.1);
    let r = safe_instance(tg, rhs.0, rhs.1);
    let to_lhs = GraphMorphism::by_common_names(Arc::clone(k.graph()), Arc::clone(l.graph()))
        .expect("interface embeds in lhs");
    let to_rhs = GraphMorphism::by_common_names(Arc::clone(k.graph()), Arc::clone(r.graph()))
        .expect("interface embeds in rhs");
    Rule::new(name, l, k, r, to_lhs, to_rhs).expect("fixture rule is well-formed")
}

/// A constraint for `rule` given the forbidden safe instance.
pub fn safe_nac(
    tg: &Arc<Graph>,
    rule: &Rule,
    id: &str,
    forbidden: (&[&str], &[&str]),
) -> Constraint {
    let n = safe_instance(tg, forbidden.0, forbidden.1);
    let embedding =
        GraphMorphism::by_common_names(Arc::clone(rule.lhs().graph()), Arc::clone(n.graph()))
            .expect("lhs embeds in the forbidden graph");
    Constraint::new(id, rule.lhs(), embedding, n).expect("fixture constraint is well-formed")
}

/// The client-server grammar: 7-node/6-edge type graph, 8 rules, one
/// constraint each.
pub fn client_server() -> ConditionalGrammar {
    let tg = Graph::from_parts(
        &["C1", "C2", "C3", "M1", "M2", "S1", "S2"],
        &[
            ("in12", "C1", "M2"),
            ("in21", "C2", "M1"),
            ("in32", "C3", "M2"),
            ("in31", "C3", "M1"),
            ("by1", "M1", "S1"),
            ("by2", "M2", "S2"),
        ],
    );
    let start = safe_instance(&tg, &["C1", "C2", "C3"], &[]);

    let mut rules = Vec::new();
    let mut nacs: BTreeMap<String, Vec<Constraint>> = BTreeMap::new();
    let mut add = |rule: Rule, forbidden: (&[&str], &[&str])| {
        let c = safe_nac(&tg, &rule, &format!("nac({})", rule.name()), forbidden);
        nacs.insert(rule.name().to_string(), vec![c]);
        rules.push(rule);
    };

    // Promotion consumes the client and produces a server.
    add(
        safe_rule(&tg, "pc(C1)", (&["C1"], &[]), (&[], &[]), (&["S1"], &[])),
        (&["C1", "M2"], &["in12"]),
    );
    add(
        safe_rule(&tg, "pc(C2)", (&["C2"], &[]), (&[], &[]), (&["S2"], &[])),
        (&["C2", "M1"], &["in21"]),
    );
    // A server starts a meeting it does not have yet.
    add(
        safe_rule(
            &tg,
            "sm(S1)",
            (&["S1"], &[]),
            (&["S1"], &[]),
            (&["S1", "M1"], &["by1"]),
        ),
        (&["S1", "M1"], &["by1"]),
    );
    add(
        safe_rule(
            &tg,
            "sm(S2)",
            (&["S2"], &[]),
            (&["S2"], &[]),
            (&["S2", "M2"], &["by2"]),
        ),
        (&["S2", "M2"], &["by2"]),
    );
    // A client joins a meeting it is not in.
    for (name, c, m, e) in [
        ("jm(C1,M2)", "C1", "M2", "in12"),
        ("jm(C2,M1)", "C2", "M1", "in21"),
        ("jm(C3,M1)", "C3", "M1", "in31"),
        ("jm(C3,M2)", "C3", "M2", "in32"),
    ] {
        add(
            safe_rule(&tg, name, (&[c, m], &[]), (&[c, m], &[]), (&[c, m], &[e])),
            (&[c, m], &[e]),
        );
    }

    ConditionalGrammar::new(tg, start, rules, nacs, true).expect("client-server is well-formed")
}

/// The token-curated-registry grammar: one registry with four curators, one
/// candidate, majority voting on challenges with rewards. Ten rules, five of
/// them constrained; attributes are plain integers.
pub fn tcr() -> AttrGrammar {
    use crate::attributed::{AttrExpr, GuardAtom, ItemRef, Update};

    let graph = Graph::from_parts(
        &["Registry", "Candidate", "Curator", "Challenge"],
        &[
            ("on", "Candidate", "Registry"),
            ("of", "Curator", "Registry"),
            ("voteYay", "Curator", "Challenge"),
            ("ched", "Challenge", "Candidate"),
            ("cher", "Challenge", "Curator"),
            ("rwd", "Challenge", "Curator"),
        ],
    );
    let mut node_attrs = BTreeMap::new();
    node_attrs.insert("Registry".to_string(), vec!["noCurs".to_string()]);
    node_attrs.insert("Candidate".to_string(), vec!["rwds".to_string()]);
    node_attrs.insert("Curator".to_string(), vec!["rwds".to_string()]);
    node_attrs.insert(
        "Challenge".to_string(),
        vec!["noVotes".to_string(), "noRwds".to_string()],
    );
    let type_graph = AttrTypeGraph { graph: Arc::clone(&graph), node_attrs, edge_attrs: BTreeMap::new() };

    let start_skel = TypedGraph::from_names(
        &graph,
        &[
            ("r", "Registry"),
            ("c", "Candidate"),
            ("t1", "Curator"),
            ("t2", "Curator"),
            ("t3", "Curator"),
            ("t4", "Curator"),
        ],
        &[
            ("of1", "of", "t1", "r"),
            ("of2", "of", "t2", "r"),
            ("of3", "of", "t3", "r"),
            ("of4", "of", "t4", "r"),
        ],
    );
    let mut start = AttributedGraph { skeleton: start_skel, values: BTreeMap::new() };
    start.set(&ItemRef::node("r"), "noCurs", 4);
    for n in ["c", "t1", "t2", "t3", "t4"] {
        start.set(&ItemRef::node(n), "rwds", 0);
    }

    let g = |nodes: &[(&str, &str)], edges: &[(&str, &str, &str, &str)]| {
        TypedGraph::from_names(&graph, nodes, edges)
    };
    let rule = |name: &str, l: TypedGraph, k: TypedGraph, r: TypedGraph| {
        let to_lhs =
            GraphMorphism::by_common_names(Arc::clone(k.graph()), Arc::clone(l.graph())).unwrap();
        let to_rhs =
            GraphMorphism::by_common_names(Arc::clone(k.graph()), Arc::clone(r.graph())).unwrap();
        Rule::new(name, l, k, r, to_lhs, to_rhs).expect("tcr rule is well-formed")
    };
    let nac = |rule: &Rule, id: &str, n: TypedGraph| {
        let embedding =
            GraphMorphism::by_common_names(Arc::clone(rule.lhs().graph()), Arc::clone(n.graph()))
                .unwrap();
        Constraint::new(id, rule.lhs(), embedding, n).expect("tcr constraint is well-formed")
    };
    let read = |item: &str, attr: &str| AttrExpr::read(ItemRef::node(item), attr);
    let bump = |item: &str, attr: &str| Update {
        item: ItemRef::node(item),
        attr: attr.to_string(),
        expr: read(item, attr).plus(1),
    };
    let maj = |wins: bool| GuardAtom::Maj {
        registry: ItemRef::node("r"),
        challenge: ItemRef::node("ch"),
        wins,
    };

    let mut rules = Vec::new();
    let mut nacs: BTreeMap<String, Vec<Constraint>> = BTreeMap::new();

    // A candidate applies to the registry unless already listed.
    let cr = &[("c", "Candidate"), ("r", "Registry")];
    let apply_rule = rule(
        "apply",
        g(cr, &[]),
        g(cr, &[]),
        g(cr, &[("on", "on", "c", "r")]),
    );
    nacs.insert(
        "apply".into(),
        vec![nac(&apply_rule, "nac(apply)", g(cr, &[("non", "on", "c", "r")]))],
    );
    rules.push(AttrRule::plain(apply_rule));

    // A curator challenges a listed candidate not already challenged.
    let ch_l = &[("r", "Registry"), ("c", "Candidate"), ("t", "Curator")];
    let ch_ctx = &[("on", "on", "c", "r"), ("of", "of", "t", "r")];
    let challenge_rule = rule(
        "challenge",
        g(ch_l, ch_ctx),
        g(ch_l, ch_ctx),
        g(
            &[ch_l[0], ch_l[1], ch_l[2], ("ch", "Challenge")],
            &[
                ch_ctx[0],
                ch_ctx[1],
                ("ched", "ched", "ch", "c"),
                ("cher", "cher", "ch", "t"),
            ],
        ),
    );
    nacs.insert(
        "challenge".into(),
        vec![nac(
            &challenge_rule,
            "nac(challenge)",
            g(
                &[ch_l[0], ch_l[1], ch_l[2], ("x", "Challenge")],
                &[ch_ctx[0], ch_ctx[1], ("nched", "ched", "x", "c")],
            ),
        )],
    );
    rules.push(AttrRule {
        base: challenge_rule,
        guard: vec![],
        updates: vec![
            Update { item: ItemRef::node("ch"), attr: "noVotes".into(), expr: AttrExpr::Const(0) },
            Update { item: ItemRef::node("ch"), attr: "noRwds".into(), expr: AttrExpr::Const(0) },
        ],
        multiobjects: vec![],
    });

    // A non-challenger curator votes once per challenge.
    let v_l = &[
        ("t", "Curator"),
        ("r", "Registry"),
        ("c", "Candidate"),
        ("ch", "Challenge"),
    ];
    let v_ctx = &[
        ("of", "of", "t", "r"),
        ("on", "on", "c", "r"),
        ("ched", "ched", "ch", "c"),
    ];
    let vote_rule = rule(
        "voteYay",
        g(v_l, v_ctx),
        g(v_l, v_ctx),
        g(
            v_l,
            &[v_ctx[0], v_ctx[1], v_ctx[2], ("vote", "voteYay", "t", "ch")],
        ),
    );
    nacs.insert(
        "voteYay".into(),
        vec![
            nac(
                &vote_rule,
                "nac(voteYay)/cher",
                g(v_l, &[v_ctx[0], v_ctx[1], v_ctx[2], ("ncher", "cher", "ch", "t")]),
            ),
            nac(
                &vote_rule,
                "nac(voteYay)/vote",
                g(v_l, &[v_ctx[0], v_ctx[1], v_ctx[2], ("nvote", "voteYay", "t", "ch")]),
            ),
        ],
    );
    rules.push(AttrRule {
        base: vote_rule,
        guard: vec![],
        updates: vec![bump("ch", "noVotes")],
        multiobjects: vec![],
    });

    // Winning challenger is rewarded; the candidate is dropped.
    let rc_l = &[
        ("t", "Curator"),
        ("r", "Registry"),
        ("c", "Candidate"),
        ("ch", "Challenge"),
    ];
    rules.push(AttrRule {
        base: rule(
            "rewardCher",
            g(
                rc_l,
                &[
                    ("of", "of", "t", "r"),
                    ("cher", "cher", "ch", "t"),
                    ("ched", "ched", "ch", "c"),
                    ("on", "on", "c", "r"),
                ],
            ),
            g(rc_l, &[("of", "of", "t", "r"), ("cher", "cher", "ch", "t")]),
            g(rc_l, &[("of", "of", "t", "r"), ("cher", "cher", "ch", "t")]),
        ),
        guard: vec![maj(true)],
        updates: vec![bump("t", "rwds")],
        multiobjects: vec![],
    });

    // Surviving candidate is rewarded when the challenge fails.
    rules.push(AttrRule {
        base: rule(
            "rewardChed",
            g(
                rc_l,
                &[
                    ("of", "of", "t", "r"),
                    ("cher", "cher", "ch", "t"),
                    ("on", "on", "c", "r"),
                    ("ched", "ched", "ch", "c"),
                ],
            ),
            g(
                rc_l,
                &[("of", "of", "t", "r"), ("cher", "cher", "ch", "t"), ("on", "on", "c", "r")],
            ),
            g(
                rc_l,
                &[("of", "of", "t", "r"), ("cher", "cher", "ch", "t"), ("on", "on", "c", "r")],
            ),
        ),
        guard: vec![maj(false)],
        updates: vec![bump("c", "rwds")],
        multiobjects: vec![],
    });

    // Each voter on the winning side is rewarded, consuming the vote link.
    let rv_ctx = &[("of", "of", "t", "r"), ("on", "on", "c", "r")];
    let reward_voter = rule(
        "rewardVoter",
        g(rc_l, &[rv_ctx[0], rv_ctx[1], ("vote", "voteYay", "t", "ch")]),
        g(rc_l, rv_ctx),
        g(rc_l, rv_ctx),
    );
    nacs.insert(
        "rewardVoter".into(),
        vec![nac(
            &reward_voter,
            "nac(rewardVoter)",
            g(
                rc_l,
                &[rv_ctx[0], rv_ctx[1], ("vote", "voteYay", "t", "ch"), ("nched", "ched", "ch", "c")],
            ),
        )],
    );
    rules.push(AttrRule {
        base: reward_voter,
        guard: vec![maj(true)],
        updates: vec![bump("t", "rwds")],
        multiobjects: vec![],
    });

    // Curators who abstained are rewarded when the challenge fails; a
    // reward link prevents double payment.
    let reward_non_voter = rule(
        "rewardNonVoter",
        g(rc_l, rv_ctx),
        g(rc_l, rv_ctx),
        g(rc_l, &[rv_ctx[0], rv_ctx[1], ("rwd", "rwd", "ch", "t")]),
    );
    nacs.insert(
        "rewardNonVoter".into(),
        vec![
            nac(
                &reward_non_voter,
                "nac(rewardNonVoter)/ched",
                g(rc_l, &[rv_ctx[0], rv_ctx[1], ("nched", "ched", "ch", "c")]),
            ),
            nac(
                &reward_non_voter,
                "nac(rewardNonVoter)/vote",
                g(rc_l, &[rv_ctx[0], rv_ctx[1], ("nvote", "voteYay", "t", "ch")]),
            ),
            nac(
                &reward_non_voter,
                "nac(rewardNonVoter)/rwd",
                g(rc_l, &[rv_ctx[0], rv_ctx[1], ("nrwd", "rwd", "ch", "t")]),
            ),
            nac(
                &reward_non_voter,
                "nac(rewardNonVoter)/cher",
                g(rc_l, &[rv_ctx[0], rv_ctx[1], ("ncher", "cher", "ch", "t")]),
            ),
        ],
    );
    rules.push(AttrRule {
        base: reward_non_voter,
        guard: vec![maj(false)],
        updates: vec![bump("t", "rwds"), bump("ch", "noRwds")],
        multiobjects: vec![],
    });

    // Cleanup: the challenge node goes once nothing dangles.
    let res_l = &[("r", "Registry"), ("t", "Curator"), ("ch", "Challenge")];
    rules.push(AttrRule::plain(rule(
        "resolveChallenge",
        g(res_l, &[("of", "of", "t", "r"), ("cher", "cher", "ch", "t")]),
        g(&[res_l[0], res_l[1]], &[("of", "of", "t", "r")]),
        g(&[res_l[0], res_l[1]], &[("of", "of", "t", "r")]),
    )));

    rules.push(AttrRule {
        base: rule(
            "delVoteLink",
            g(res_l, &[("of", "of", "t", "r"), ("vote", "voteYay", "t", "ch")]),
            g(res_l, &[("of", "of", "t", "r")]),
            g(res_l, &[("of", "of", "t", "r")]),
        ),
        guard: vec![maj(false)],
        updates: vec![],
        multiobjects: vec![],
    });

    rules.push(AttrRule {
        base: rule(
            "delRwdLink",
            g(res_l, &[("of", "of", "t", "r"), ("rwd", "rwd", "ch", "t")]),
            g(res_l, &[("of", "of", "t", "r")]),
            g(res_l, &[("of", "of", "t", "r")]),
        ),
        guard: vec![
            maj(false),
            GuardAtom::Cmp(
                read("ch", "noRwds"),
                crate::attributed::CmpOp::Eq,
                AttrExpr::Sub(Box::new(read("r", "noCurs")), Box::new(read("ch", "noVotes"))),
            ),
        ],
        updates: vec![],
        multiobjects: vec![],
    });

    AttrGrammar { type_graph, start, rules, nacs, schemata: Vec::new() }
}

/// Applies the named rules in order, each at its first match.
pub fn run(grammar: &ConditionalGrammar, rules: &[&str]) -> TypedGraph {
    let mut state = grammar.start().clone();
    for name in rules {
        let rule = grammar
            .rule(name)
            .unwrap_or_else(|| panic!("unknown rule `{name}`"));
        let m = find_matches(rule, &state)
            .into_iter()
            .next()
            .unwrap_or_else(|| panic!("no match for `{name}`"));
        state = grammar
            .apply_rule(name, &state, &m)
            .unwrap_or_else(|e| panic!("`{name}` failed: {e}"))
            .after;
    }
    state
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn client_server_shape() {
        let cs = client_server();
        assert_eq!(cs.type_graph().node_count(), 7);
        assert_eq!(cs.type_graph().edge_count(), 6);
        assert_eq!(cs.rules().len(), 8);
        assert_eq!(cs.all_nacs().values().map(Vec::len).sum::<usize>(), 8);
        assert!(cs.is_safe());
        assert_eq!(cs.start().graph().node_count(), 3);
        assert_eq!(cs.start().graph().edge_count(), 0);
    }

    #[test]
    fn scenario_promote_start_join() {
        let cs = client_server();
        let state = run(&cs, &["pc(C1)", "sm(S1)", "jm(C2,M1)"]);
        let mut key = state.safe_key();
        key.sort();
        assert_eq!(key, vec!["e:by1", "e:in21", "n:C2", "n:C3", "n:M1", "n:S1"]);
    }
}
