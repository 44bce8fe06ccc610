mod common;

use common::fixtures::random_scene;
use common::props::{check_scene, following_is_asymmetric};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use socstoch::autodiff::softmax_groups;
use socstoch::graph::{build_graph, SocialGraph};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn random_scenes_satisfy_graph_properties(seed in any::<u64>(), n in 2usize..9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frame = random_scene(&mut rng, n);
        check_scene(&frame, &mut rng).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn grouped_softmax_is_a_distribution(logits in prop::collection::vec(-50.0f64..50.0, 1..20), groups in 1usize..4) {
        let segment: Vec<Option<usize>> = (0..logits.len()).map(|k| Some(k % groups)).collect();
        let p = softmax_groups(&logits, &segment);
        for g in 0..groups.min(logits.len()) {
            let s: f64 = p.iter().zip(&segment).filter(|(_, s)| **s == Some(g)).map(|(v, _)| v).sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }
        prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn edge_lists_are_grouped_by_destination(seed in any::<u64>(), n in 1usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = build_graph(&random_scene(&mut rng, n), 240.0, 1e-2);
        let edges = g.edges();
        prop_assert_eq!(edges.len(), g.edge_count());
        prop_assert!(edges.windows(2).all(|w| (w[0].1, w[0].0) < (w[1].1, w[1].0)));
        let rebuilt = SocialGraph::from_edges(n, &edges);
        prop_assert_eq!(rebuilt, g);
    }
}

#[test]
fn asymmetric_edges_exist() {
    following_is_asymmetric().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let total: usize = (0..100)
        .map(|_| {
            let frame = random_scene(&mut rng, 5);
            check_scene(&frame, &mut rng).unwrap()
        })
        .sum();
    assert!(total > 0);
}
