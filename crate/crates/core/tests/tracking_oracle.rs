mod common;

use jumpinfer::tracker::max_weight_assignment;
use proptest::prelude::*;

use common::{assignment_weight, brute_force_best};

/// Square-or-wider weight tables with missing edges, where a complete
/// assignment is guaranteed by a present diagonal.
fn table() -> impl Strategy<Value = Vec<Vec<Option<f64>>>> {
    (1usize..=3, 0usize..=3).prop_flat_map(|(rows, extra)| {
        let cols = rows + extra;
        proptest::collection::vec(
            proptest::collection::vec(proptest::option::weighted(0.7, 0.0..1.0f64), cols),
            rows,
        )
        .prop_map(move |mut t| {
            for (i, row) in t.iter_mut().enumerate() {
                if row[i].is_none() {
                    row[i] = Some(0.0);
                }
            }
            t
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 2000, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn hungarian_matches_brute_force(weights in table()) {
        let chosen = max_weight_assignment(&weights);
        let got = assignment_weight(&weights, &chosen).expect("valid assignment");
        let best = brute_force_best(&weights).unwrap();
        prop_assert!((got - best).abs() <= 1e-12, "{} vs {}", got, best);
    }
}

#[test]
fn oracle_sanity() {
    let w = vec![vec![Some(1.0), Some(3.0)], vec![Some(2.0), Some(5.0)]];
    assert_eq!(brute_force_best(&w), Some(6.0));
    let w = vec![vec![None, Some(1.0)], vec![None, Some(1.0)]];
    assert_eq!(brute_force_best(&w), None);
}
