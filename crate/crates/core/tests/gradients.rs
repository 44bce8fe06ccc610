mod common;

use common::fixtures::{randomize, small_config, window3};
use common::gradcheck::{check_loss, op_suite, GradReport};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use socstoch::model::{Model, ModelConfig};

fn assert_ok(r: &GradReport) {
    assert!(r.ok(), "{}: max relative error {:.3e} over {} entries", r.name, r.max_rel, r.checked);
}

#[test]
fn every_op_matches_finite_differences() {
    for r in op_suite() {
        assert_ok(&r);
    }
}

#[test]
fn small_model_loss_all_parameters() {
    let w = window3(5);
    for beta in [1e-4, 1.0] {
        let mut m = Model::new(small_config(), 3);
        randomize(&mut m, 8, 0.4);
        let noise = m.draw_noise(3, 5, &mut ChaCha8Rng::seed_from_u64(1));
        let r = check_loss("small model", &m, &w.frames, beta, &noise, |_, n| (0..n).collect());
        assert_ok(&r);
        assert_eq!(r.checked, m.params.num_scalars());
    }
}

#[test]
fn full_width_loss_sampled_parameters() {
    let w = window3(5);
    let m = Model::new(ModelConfig::default(), 0);
    let noise = m.draw_noise(3, 5, &mut ChaCha8Rng::seed_from_u64(2));
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let r = check_loss("default model", &m, &w.frames, 1.0, &noise, |_, n| sample(&mut rng, n, n.min(6)).into_vec());
    assert_ok(&r);
}

#[test]
fn undirected_cartesian_ungated_loss() {
    let w = window3(5);
    let mut cfg = small_config();
    cfg.directed = false;
    cfg.encoder.coord_mode = socstoch::graph::CoordMode::Cartesian;
    cfg.encoder.gate_enabled = false;
    cfg.encoder.edge_product = true;
    cfg.encoder.blocks = 1;
    let mut m = Model::new(cfg, 4);
    randomize(&mut m, 9, 0.4);
    let noise = m.draw_noise(3, 5, &mut ChaCha8Rng::seed_from_u64(5));
    assert_ok(&check_loss("ablation model", &m, &w.frames, 0.5, &noise, |_, n| (0..n).collect()));
}
