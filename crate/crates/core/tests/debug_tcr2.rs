use nacforge_core::attributed::{
    encode_counters, eval_guard, explore_attributed, AttributedGraph,
};
use nacforge_core::fixtures::tcr;
use nacforge_core::grammar::find_matches;
use nacforge_core::graph::enumerate_typed_monos;

#[test]
#[ignore]
fn probe_resolve() {
    let g = tcr();
    let enc = encode_counters(&g, None).unwrap();
    let lts = explore_attributed(&enc.grammar, Some(3));
    // Find the state after apply; challenge; rewardChed.
    let s1 = lts.successors(0).next().unwrap().to;
    let s2 = lts.successors(s1).next().unwrap().to;
    let s3 = lts
        .successors(s2)
        .find(|t| t.rule.contains("rewardChed"))
        .map(|t| t.to);
    let Some(s3) = s3 else {
        println!("no rewardChed transition out of s2; labels:");
        for t in lts.successors(s2) {
            println!("  {}", t.rule);
        }
        return;
    };
    let state: &AttributedGraph = &lts.states[s3];
    println!("state after rewardChed:");
    let sg = state.skeleton.graph();
    let tg = state.skeleton.type_graph();
    for e in sg.edge_ids() {
        println!(
            "  edge {} : {} {}->{} attrs {:?}",
            sg.edge_name(e),
            tg.edge_name(state.skeleton.edge_type(e)),
            sg.node_name(sg.src(e)),
            sg.node_name(sg.tgt(e)),
            state.values.get(&(nacforge_core::attributed::ItemKind::Edge, sg.edge_name(e).to_string()))
        );
    }
    for v in sg.node_ids() {
        println!(
            "  node {} : {} attrs {:?}",
            sg.node_name(v),
            tg.node_name(state.skeleton.node_type(v)),
            state.values.get(&(nacforge_core::attributed::ItemKind::Node, sg.node_name(v).to_string()))
        );
    }
    let fam = enc
        .grammar
        .schemata
        .iter()
        .find(|f| f.original == "resolveChallenge")
        .unwrap();
    println!("core matches: {}", enumerate_typed_monos(&fam.core, &state.skeleton).len());
    for m in &fam.members {
        let rule = enc.grammar.rule(&m.rule).unwrap();
        let matches = find_matches(&rule.base, &state.skeleton);
        let guard_ok = matches
            .iter()
            .filter(|mm| eval_guard(&rule.guard, mm, state))
            .count();
        println!(
            "member {} : lhs {}+{} items, {} structural matches, {} pass guard",
            m.rule,
            rule.base.lhs().graph().node_count(),
            rule.base.lhs().graph().edge_count(),
            matches.len(),
            guard_ok
        );
        if matches.len() > 0 && guard_ok == 0 && m.rule.contains("Curator=3") {
            for (i, atom) in rule.guard.iter().enumerate() {
                println!("  guard[{}]: {:?}", i, atom);
            }
        }
    }
}
