use nacforge_core::attributed::{encode_counters, explore::erase, explore_attributed};
use nacforge_core::fixtures::tcr;
use std::collections::BTreeMap;

#[test]
#[ignore]
fn trace_divergence() {
    let g = tcr();
    let enc = encode_counters(&g, None).unwrap();
    let depth = 5;
    let lo = explore_attributed(&g, Some(depth));
    let le = explore_attributed(&enc.grammar, Some(depth));
    println!("orig: {} states {} transitions", lo.states.len(), lo.transitions.len());
    println!("enc:  {} states {} transitions", le.states.len(), le.transitions.len());
    for d in 0..=depth {
        let mut ko: BTreeMap<String, usize> = BTreeMap::new();
        for (i, s) in lo.states.iter().enumerate() {
            if lo.depth[i] == d {
                *ko.entry(s.key()).or_default() += 1;
            }
        }
        let mut ke: BTreeMap<String, usize> = BTreeMap::new();
        for (j, s) in le.states.iter().enumerate() {
            if le.depth[j] == d {
                *ke.entry(erase(s, &g.type_graph, &enc).key()).or_default() += 1;
            }
        }
        let only_o: Vec<&String> = ko.keys().filter(|k| !ke.contains_key(*k)).collect();
        let only_e: Vec<&String> = ke.keys().filter(|k| !ko.contains_key(*k)).collect();
        println!(
            "depth {d}: orig {} keys, enc {} keys, only-orig {}, only-enc {}",
            ko.len(),
            ke.len(),
            only_o.len(),
            only_e.len()
        );
        for k in only_o.iter().take(2) {
            println!("  only-orig: {k}");
        }
        for k in only_e.iter().take(2) {
            println!("  only-enc: {k}");
        }
        if !only_o.is_empty() || !only_e.is_empty() {
            // Show labels out of the first differing state's parents.
            break;
        }
    }
    // Transition labels per depth.
    for d in 0..depth {
        let mut lo_lbl: BTreeMap<String, usize> = BTreeMap::new();
        for t in &lo.transitions {
            if lo.depth[t.from] == d {
                *lo_lbl.entry(t.rule.clone()).or_default() += 1;
            }
        }
        let mut le_lbl: BTreeMap<String, usize> = BTreeMap::new();
        for t in &le.transitions {
            if le.depth[t.from] == d {
                let orig = enc.rule_origin.get(&t.rule).cloned().unwrap_or(t.rule.clone());
                *le_lbl.entry(orig).or_default() += 1;
            }
        }
        println!("depth {d}: orig labels {lo_lbl:?}");
        println!("depth {d}: enc  labels {le_lbl:?}");
    }
}
