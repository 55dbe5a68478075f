use proptest::prelude::*;
use propgen::datagen::Standardizer;
use propgen::metrics::{self, NoveltyIndex};

fn std_for(dim: usize) -> Standardizer {
    Standardizer { mean: vec![0.5; dim], std: vec![2.0; dim], constant_columns: vec![] }
}

fn points(dim: usize, n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-3.0f64..3.0, dim), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn index_matches_brute_force(train in points(6, 1..60), samples in points(6, 1..15)) {
        let std = std_for(6);
        let idx = NoveltyIndex::new(&train, &std).unwrap();
        let fast = idx.novelty(&samples).unwrap();
        let slow = metrics::conditional_novelty(&samples, &train, &std).unwrap();
        prop_assert!((fast - slow).abs() <= 1e-12 * slow.max(1.0), "{fast} vs {slow}");
    }

    #[test]
    fn spread_is_translation_invariant_and_nonnegative(s in points(4, 1..20), shift in -2.0f64..2.0) {
        let std = std_for(4);
        let a = metrics::spread_coefficient(&s, &std).unwrap();
        let moved: Vec<Vec<f64>> = s.iter().map(|r| r.iter().map(|v| v + shift).collect()).collect();
        let b = metrics::spread_coefficient(&moved, &std).unwrap();
        prop_assert!(a >= 0.0);
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn training_points_have_zero_novelty(train in points(3, 1..30)) {
        let std = std_for(3);
        let idx = NoveltyIndex::new(&train, &std).unwrap();
        prop_assert!(idx.novelty(&train).unwrap() < 1e-12);
    }
}

#[test]
fn identical_samples_have_zero_spread() {
    let s = vec![vec![1.0, 2.0]; 5];
    assert_eq!(metrics::spread_coefficient(&s, &std_for(2)).unwrap(), 0.0);
}

#[test]
fn empty_inputs_rejected() {
    let empty: Vec<Vec<f64>> = vec![];
    assert!(metrics::spread_coefficient(&empty, &std_for(2)).is_err());
    assert!(NoveltyIndex::new(&empty, &std_for(2)).is_err());
}
