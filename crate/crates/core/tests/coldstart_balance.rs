use std::collections::BTreeSet;

use proptest::prelude::*;
use seedloop_core::coldstart::{plan_coldstart, plan_from_scores};
use seedloop_core::lexicon::{WeightedTerm, ZeroShotLexicon};
use seedloop_core::{Pool, Record, ScoredPoint};

/// Reference ranking: sort everything by the documented keys and read off
/// both ends, skipping ids already taken for the positive side.
fn brute_force(scores: &[(String, f64)], k: usize) -> (Vec<String>, Vec<String>) {
    let mut desc = scores.to_vec();
    desc.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let pos: Vec<String> = desc.iter().take(k / 2).map(|s| s.0.clone()).collect();
    let mut asc = scores.to_vec();
    asc.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let neg: Vec<String> = asc
        .iter()
        .filter(|s| !pos.contains(&s.0))
        .take(k / 2)
        .map(|s| s.0.clone())
        .collect();
    (pos, neg)
}

fn scored_pool() -> impl Strategy<Value = (Vec<(String, f64)>, usize)> {
    // Coarse grid so ties are frequent.
    prop::collection::btree_map("[a-z]{1,4}", 0u32..=8, 2..60).prop_flat_map(|m| {
        let n = m.len();
        let scores: Vec<(String, f64)> = m.into_iter().map(|(id, q)| (id, f64::from(q) / 8.0)).collect();
        (Just(scores), (1..=n / 2).prop_map(|h| 2 * h))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn plan_is_balanced_disjoint_and_matches_reference((scores, k) in scored_pool()) {
        let points: Vec<ScoredPoint> = scores.iter().map(|(id, p)| ScoredPoint::new(id.clone(), *p)).collect();
        let plan = plan_from_scores(&points, k).unwrap();
        prop_assert_eq!(plan.positive_candidates.len(), k / 2);
        prop_assert_eq!(plan.negative_candidates.len(), k / 2);
        let pos: BTreeSet<_> = plan.positive_candidates.iter().collect();
        prop_assert!(plan.negative_candidates.iter().all(|id| !pos.contains(id)));
        let (ref_pos, ref_neg) = brute_force(&scores, k);
        prop_assert_eq!(&plan.positive_candidates, &ref_pos);
        prop_assert_eq!(&plan.negative_candidates, &ref_neg);
    }

    #[test]
    fn lexicon_plans_are_balanced_and_deterministic(
        texts in prop::collection::vec("(alpha|beta|gamma|delta|x|y){1,4}", 2..80),
        weights in prop::collection::vec(0.25f64..4.0, 4),
        half in 1usize..40,
    ) {
        let k = (2 * half).min(texts.len() - texts.len() % 2);
        let records = texts.iter().enumerate().map(|(i, t)| Record { id: format!("r{i:03}"), text: t.clone(), label: None });
        let pool = Pool::from_records(records).unwrap();
        let term = |t: &str, w: f64| WeightedTerm { term: t.into(), weight: w };
        let lexicon = ZeroShotLexicon::new(
            vec![term("alpha", weights[0]), term("beta", weights[1])],
            vec![term("gamma", weights[2]), term("delta", weights[3])],
            1.0,
        ).unwrap();
        let a = plan_coldstart(&pool, &lexicon, k).unwrap();
        let b = plan_coldstart(&pool, &lexicon, k).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.positive_candidates.len(), k / 2);
        prop_assert_eq!(a.negative_candidates.len(), k / 2);
        let all: BTreeSet<&str> = a.candidates().collect();
        prop_assert_eq!(all.len(), k);
    }
}

#[test]
fn reingestion_order_does_not_change_the_plan() {
    let records: Vec<Record> = (0..40)
        .map(|i| Record {
            id: format!("c{i:02}"),
            text: if i % 3 == 0 {
                "alpha".into()
            } else {
                format!("item {i}")
            },
            label: None,
        })
        .collect();
    let lexicon = ZeroShotLexicon::parse("alpha\t2\t+\n", 1.0).unwrap();
    let forward = Pool::from_records(records.clone()).unwrap();
    let backward = Pool::from_records(records.into_iter().rev()).unwrap();
    let a = plan_coldstart(&forward, &lexicon, 8).unwrap();
    let b = plan_coldstart(&backward, &lexicon, 8).unwrap();
    assert_eq!(a.positive_candidates, b.positive_candidates);
    assert_eq!(a.negative_candidates, b.negative_candidates);
}

#[test]
fn default_k_over_a_large_pool() {
    let spec = seedloop_core::synth::SynthSpec {
        size: 100_000,
        seed: 3,
        ..Default::default()
    };
    let pool = Pool::from_records(seedloop_core::synth::generate(&spec).unwrap()).unwrap();
    let lexicon = seedloop_core::synth::default_lexicon(spec.category, 1.0).unwrap();
    let plan = plan_coldstart(&pool, &lexicon, 16).unwrap();
    assert_eq!(plan.positive_candidates.len(), 8);
    assert_eq!(plan.negative_candidates.len(), 8);
}
