use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use socstoch::dataset::{gen_synthetic, make_windows, normalize, ScenarioKind, TrajectoryWindow, WindowSpec};
use socstoch::autodiff::{Tape, Tensor, Var};
use socstoch::graph::{AgentState, SceneFrame};
use socstoch::nn::Bound;
use socstoch::model::{Model, ModelConfig};

/// Three agents: 0 heads right, 1 walks towards 0, 2 crosses from below.
pub fn scene3() -> SceneFrame {
    SceneFrame::new(
        vec![
            AgentState::new([0.0, 0.0], [0.45, 0.02]),
            AgentState::new([1.6, 0.35], [-0.4, 0.05]),
            AgentState::new([0.7, -1.3], [0.03, 0.5]),
        ],
        0,
    )
}

pub fn small_config() -> ModelConfig {
    let mut c = ModelConfig::default();
    c.encoder.embed_dim = 6;
    c.latent_dim = 3;
    c.stoch_hidden = 5;
    c.dec1_hidden = 5;
    c.dec2_hidden = 7;
    c
}

/// Overwrites every parameter, biases included, with seeded U(-a, a) values.
pub fn randomize(model: &mut Model, seed: u64, a: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (_, t) in model.params.iter_mut() {
        t.data_mut().iter_mut().for_each(|x| *x = rng.random_range(-a..a));
    }
}

/// A normalized 3-agent window of `len` frames from a crossing scenario.
pub fn window3(len: usize) -> TrajectoryWindow {
    let spec = WindowSpec {
        t_obs: 2.max(len / 2),
        t_pred: len - 2.max(len / 2),
        stride: 100,
        frame_step: 10,
    };
    let tracks = gen_synthetic(ScenarioKind::Crossing, 3, len + 10, 5).unwrap();
    let w = make_windows(&tracks, spec, "synthetic").unwrap();
    assert_eq!(w[0].n_agents(), 3);
    normalize(&w[..1]).unwrap().0.remove(0)
}

/// Random agents in a 10 m square with speeds up to 0.6 m per frame; about a
/// fifth of them stand still.
pub fn random_scene(rng: &mut impl Rng, n: usize) -> SceneFrame {
    let agents = (0..n)
        .map(|_| {
            let p = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
            let v = if rng.random_bool(0.2) {
                [0.0, 0.0]
            } else {
                let h: f64 = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
                let s = rng.random_range(0.05..0.6);
                [s * h.cos(), s * h.sin()]
            };
            AgentState::new(p, v)
        })
        .collect();
    SceneFrame::new(agents, 0)
}

pub fn model_default(seed: u64) -> Model {
    Model::new(ModelConfig::default(), seed)
}

/// Every social block rebuilt from the encoder's parts with an explicit
/// all-ones gate.
pub fn unit_gate_features(m: &Model, tape: &mut Tape, p: &Bound, frame: &SceneFrame) -> Var {
    let enc = &m.encoder;
    let edges = m.graph(frame).edges();
    let dst: Vec<usize> = edges.iter().map(|e| e.1).collect();
    let e = enc.embed_nodes(tape, p, frame).unwrap();
    let xe = enc.embed_edges(tape, p, frame, &edges, e).unwrap().expect("scene has edges");
    let ones = tape.constant(Tensor::filled(tape.shape(xe), 1.0));
    let mut x = e;
    for k in 0..enc.blocks.len() {
        let alpha = enc.attention(tape, p, k, xe, &dst).unwrap();
        let gated = tape.mul(xe, ones).unwrap();
        let msg = tape.mul_col(gated, alpha).unwrap();
        let agg = tape.segment_sum(msg, &dst, frame.len()).unwrap();
        let delta = enc.blocks[k].update.forward(tape, p, agg).unwrap();
        x = tape.add(x, delta).unwrap();
    }
    x
}
