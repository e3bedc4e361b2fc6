//! Seeded fixtures for the engine benchmarks.

use fmgc_core::{parse_model, Choice, Decision, FeatureId, FeatureModel, InteractionMatrix, ItemKind, MemberId};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

/// A model of `groups` feature groups of four leaves each, alternating
/// between alt and or groups, plus `constraints` random requires/excludes
/// constraints between leaves.
pub fn synthetic_model(groups: usize, constraints: usize, seed: u64) -> FeatureModel {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut text = String::from("model synthetic\nroot R\n");
    let mut leaves = Vec::new();
    for g in 0..groups {
        let relation = if g % 3 == 0 { "mandatory" } else { "optional" };
        text.push_str(&format!("{relation} R G{g}\n"));
        let members: Vec<String> = (0..4).map(|i| format!("G{g}L{i}")).collect();
        let kind = if g % 2 == 0 { "alt" } else { "or" };
        text.push_str(&format!("{kind} G{g} {}\n", members.join(" ")));
        leaves.extend(members);
    }
    for _ in 0..constraints {
        let a = leaves.choose(&mut rng).unwrap();
        let b = leaves.choose(&mut rng).unwrap();
        if a == b {
            continue;
        }
        if rng.gen_bool(0.5) {
            text.push_str(&format!("constraint (implies {a} {b})\n"));
        } else {
            text.push_str(&format!("constraint (not (and {a} {b}))\n"));
        }
    }
    parse_model(&text).expect("synthetic model parses")
}

/// `n` random include/exclude decisions over distinct features of `model`.
pub fn random_decisions(model: &FeatureModel, n: usize, seed: u64) -> Vec<Decision> {
    let mut rng = StdRng::seed_from_u64(seed);
    let features: Vec<&FeatureId> = model.features().collect();
    features
        .choose_multiple(&mut rng, n)
        .map(|f| Decision::new((*f).clone(), if rng.gen_bool(0.7) { Choice::Include } else { Choice::Exclude }))
        .collect()
}

/// A constraint-order matrix: every member ranks a random subset of the
/// items `c1..=c{items}`, leaving out each item with probability `sparsity`.
pub fn synthetic_orders(members: usize, items: usize, sparsity: f64, seed: u64) -> InteractionMatrix {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut m = InteractionMatrix::new(ItemKind::ConstraintOrder);
    for u in 0..members {
        let member = MemberId::new(format!("m{u}")).unwrap();
        m.add_member(member.clone());
        let mut order: Vec<usize> = (1..=items).filter(|_| !rng.gen_bool(sparsity)).collect();
        order.shuffle(&mut rng);
        for (rank, item) in order.iter().enumerate() {
            m.rate(&member, &format!("c{item}"), (rank + 1) as f64).expect("valid rank");
        }
    }
    m
}
