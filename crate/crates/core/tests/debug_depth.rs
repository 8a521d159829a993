use nacforge_core::attributed::{bounded_equiv_after_erasure, encode_counters, explore_attributed};
use nacforge_core::fixtures::tcr;
use std::time::Instant;

#[test]
#[ignore]
fn depth12() {
    let g = tcr();
    let enc = encode_counters(&g, None).unwrap();
    let t0 = Instant::now();
    let lo = explore_attributed(&g, Some(12));
    let t1 = Instant::now();
    let le = explore_attributed(&enc.grammar, Some(12));
    let t2 = Instant::now();
    println!("orig {}st/{}tr in {:?}; enc {}st/{}tr in {:?}",
        lo.states.len(), lo.transitions.len(), t1 - t0,
        le.states.len(), le.transitions.len(), t2 - t1);
    let t3 = Instant::now();
    let rep = bounded_equiv_after_erasure(&g, &enc, 12);
    println!("equiv: {} in {:?}", rep.bisimilar, t3.elapsed());
}
