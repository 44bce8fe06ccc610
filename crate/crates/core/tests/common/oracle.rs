//! Plain-loop reference implementations that read parameters by name.

use std::f64::consts::PI;

use socstoch::autodiff::Tensor;
use socstoch::encoder::EncoderConfig;
use socstoch::graph::{AgentState, CoordMode, SceneFrame};
use socstoch::model::ModelConfig;
use socstoch::nn::ParamStore;

pub type Matrix = Vec<Vec<f64>>;

fn param<'a>(store: &'a ParamStore, name: &str) -> &'a Tensor {
    store.get(name).unwrap_or_else(|| panic!("missing parameter {name}"))
}

/// `x W + b` for one row, with `W` stored in×out row-major.
pub fn linear(store: &ParamStore, name: &str, x: &[f64]) -> Vec<f64> {
    let w = param(store, &format!("{name}.w"));
    let b = param(store, &format!("{name}.b"));
    let (rows, cols) = (w.shape()[0], w.shape()[1]);
    assert_eq!(rows, x.len(), "{name}: input width");
    (0..cols)
        .map(|c| {
            let mut acc = b.data()[c];
            for r in 0..rows {
                acc += x[r] * w.data()[r * cols + c];
            }
            acc
        })
        .collect()
}

pub fn relu(v: Vec<f64>) -> Vec<f64> {
    v.into_iter().map(|x| x.max(0.0)).collect()
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn wrap(a: f64) -> f64 {
    a.sin().atan2(a.cos())
}

fn angle_of(v: [f64; 2]) -> f64 {
    v[1].atan2(v[0])
}

/// `adj[i][j]`: i lies in j's view cone, or j is still.
pub fn graph(frame: &SceneFrame, view_deg: f64, still_eps: f64) -> Vec<Vec<bool>> {
    let n = frame.len();
    let half = view_deg * PI / 360.0;
    let mut adj = vec![vec![false; n]; n];
    for j in 0..n {
        let vj = frame.agents[j].velocity;
        let speed = vj[0].hypot(vj[1]);
        for i in 0..n {
            if i == j {
                continue;
            }
            let d = [
                frame.agents[i].position[0] - frame.agents[j].position[0],
                frame.agents[i].position[1] - frame.agents[j].position[1],
            ];
            adj[i][j] = speed < still_eps
                || d == [0.0, 0.0]
                || wrap(angle_of(d) - angle_of(vj)).abs() <= half;
        }
    }
    adj
}

pub fn complete(n: usize) -> Vec<Vec<bool>> {
    (0..n).map(|i| (0..n).map(|j| i != j).collect()).collect()
}

pub fn pair(a_i: &AgentState, a_j: &AgentState, mode: CoordMode) -> [f64; 4] {
    match mode {
        CoordMode::Cartesian => [
            a_i.position[0] - a_j.position[0],
            a_i.position[1] - a_j.position[1],
            a_i.velocity[0] - a_j.velocity[0],
            a_i.velocity[1] - a_j.velocity[1],
        ],
        CoordMode::Polar => {
            let d = [a_j.position[0] - a_i.position[0], a_j.position[1] - a_i.position[1]];
            let r = d[0].hypot(d[1]);
            let theta = if r == 0.0 { 0.0 } else { angle_of(d) };
            let si = a_i.velocity[0].hypot(a_i.velocity[1]);
            let sj = a_j.velocity[0].hypot(a_j.velocity[1]);
            [r, theta, si - sj, wrap(angle_of(a_i.velocity) - angle_of(a_j.velocity))]
        }
    }
}

pub struct EncoderOut {
    pub embeddings: Matrix,
    pub features: Matrix,
    /// `alpha[k][i][j]`, zero where there is no edge.
    pub alpha: Vec<Matrix>,
    /// `gate[k][(i, j)]` for every edge, in the order edges are visited.
    pub gates: Vec<Vec<Vec<f64>>>,
}

/// Node and edge embeddings, then `cfg.blocks` rounds of attention-weighted,
/// gated aggregation with residual updates.
pub fn encode(store: &ParamStore, cfg: &EncoderConfig, frame: &SceneFrame, adj: &[Vec<bool>]) -> EncoderOut {
    let n = frame.len();
    let d = cfg.embed_dim;
    let e: Matrix = frame
        .agents
        .iter()
        .map(|a| relu(linear(store, "enc.node", &[a.position[0], a.position[1], a.velocity[0], a.velocity[1]])))
        .collect();

    let mut x_edge = vec![vec![None::<Vec<f64>>; n]; n];
    for j in 0..n {
        for i in 0..n {
            if adj[i][j] {
                let fp = relu(linear(store, "enc.pair", &pair(&frame.agents[i], &frame.agents[j], cfg.coord_mode)));
                let cat: Vec<f64> = e[i].iter().chain(&e[j]).chain(&fp).copied().collect();
                x_edge[i][j] = Some(relu(linear(store, "enc.edge", &cat)));
            }
        }
    }

    let mut x = e.clone();
    let mut alphas = Vec::new();
    let mut gates = Vec::new();
    for k in 0..cfg.blocks {
        let mut alpha = vec![vec![0.0; n]; n];
        let mut block_gates = Vec::new();
        let mut next = x.clone();
        for j in 0..n {
            let incoming: Vec<usize> = (0..n).filter(|&i| adj[i][j]).collect();
            let mut agg = vec![0.0; d];
            if !incoming.is_empty() {
                let logits: Vec<f64> = incoming
                    .iter()
                    .map(|&i| {
                        let s = linear(store, &format!("enc.block{k}.attn"), x_edge[i][j].as_ref().unwrap())[0];
                        if s >= 0.0 { s } else { cfg.leaky_slope * s }
                    })
                    .collect();
                let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
                for (&i, l) in incoming.iter().zip(&logits) {
                    let a = (l - m).exp() / z;
                    alpha[i][j] = a;
                    let xij = x_edge[i][j].as_ref().unwrap();
                    let g: Vec<f64> = if cfg.gate_enabled {
                        linear(store, &format!("enc.block{k}.gate"), xij).into_iter().map(sigmoid).collect()
                    } else {
                        vec![1.0; d]
                    };
                    for c in 0..d {
                        let mut msg = a * xij[c] * g[c];
                        if cfg.edge_product {
                            msg *= xij[c];
                        }
                        agg[c] += msg;
                    }
                    block_gates.push(g);
                }
            }
            let delta = linear(store, &format!("enc.block{k}.update"), &agg);
            for c in 0..d {
                next[j][c] = x[j][c] + delta[c];
            }
        }
        x = next;
        alphas.push(alpha);
        gates.push(block_gates);
    }
    EncoderOut {
        embeddings: e,
        features: x,
        alpha: alphas,
        gates,
    }
}

pub struct Lstm {
    pub h: Matrix,
    pub c: Matrix,
}

impl Lstm {
    pub fn zeros(n: usize, hidden: usize) -> Self {
        Self {
            h: vec![vec![0.0; hidden]; n],
            c: vec![vec![0.0; hidden]; n],
        }
    }
}

/// Gate order i, f, g, o over the concatenated `[x, h]`.
pub fn lstm_step(store: &ParamStore, name: &str, x: &Matrix, s: &Lstm) -> Lstm {
    let hid = s.h[0].len();
    let mut out = Lstm::zeros(x.len(), hid);
    for r in 0..x.len() {
        let xh: Vec<f64> = x[r].iter().chain(&s.h[r]).copied().collect();
        let pre = linear(store, name, &xh);
        for u in 0..hid {
            let i = sigmoid(pre[u]);
            let f = sigmoid(pre[hid + u]);
            let g = pre[2 * hid + u].tanh();
            let o = sigmoid(pre[3 * hid + u]);
            out.c[r][u] = f * s.c[r][u] + i * g;
            out.h[r][u] = o * out.c[r][u].tanh();
        }
    }
    out
}

fn rows(store: &ParamStore, name: &str, x: &Matrix) -> Matrix {
    x.iter().map(|r| linear(store, name, r)).collect()
}

struct Gauss {
    mu: Matrix,
    log_sigma: Matrix,
}

fn gaussian(store: &ParamStore, name: &str, x: &Matrix, s: &mut Lstm) -> Gauss {
    let f = rows(store, &format!("{name}.fc"), x);
    *s = lstm_step(store, &format!("{name}.lstm"), &f, s);
    let mu = rows(store, &format!("{name}.mu"), &s.h);
    let log_sigma = rows(store, &format!("{name}.logvar"), &s.h)
        .into_iter()
        .map(|r| r.into_iter().map(|a| 0.5 * a).collect())
        .collect();
    Gauss { mu, log_sigma }
}

/// `(total, recon, kl)` of the teacher-forced objective with the given noise.
pub fn elbo(store: &ParamStore, cfg: &ModelConfig, frames: &[SceneFrame], beta: f64, noise: &[Tensor]) -> (f64, f64, f64) {
    let n = frames[0].len();
    let adj = |f: &SceneFrame| {
        if cfg.directed {
            graph(f, cfg.view_angle_deg, cfg.still_speed_eps)
        } else {
            complete(f.len())
        }
    };
    let enc: Vec<EncoderOut> = frames.iter().map(|f| encode(store, &cfg.encoder, f, &adj(f))).collect();
    let mut prior = Lstm::zeros(n, cfg.stoch_hidden);
    let mut post = Lstm::zeros(n, cfg.stoch_hidden);
    let mut dec1 = Lstm::zeros(n, cfg.dec1_hidden);
    let mut dec2 = Lstm::zeros(n, cfg.dec2_hidden);
    let (mut recon, mut kl) = (0.0, 0.0);
    for t in 1..frames.len() {
        let p = gaussian(store, "prior", &enc[t - 1].features, &mut prior);
        let q = gaussian(store, "post", &enc[t].features, &mut post);
        let eps = &noise[t - 1];
        let z: Matrix = (0..n)
            .map(|r| {
                (0..cfg.latent_dim)
                    .map(|c| q.mu[r][c] + q.log_sigma[r][c].exp() * eps.at(r, c))
                    .collect()
            })
            .collect();
        let in1: Matrix = (0..n).map(|r| enc[t - 1].features[r].iter().chain(&z[r]).copied().collect()).collect();
        dec1 = lstm_step(store, "dec1.lstm", &in1, &dec1);
        let in2: Matrix = (0..n).map(|r| dec1.h[r].iter().chain(&enc[t - 1].embeddings[r]).copied().collect()).collect();
        dec2 = lstm_step(store, "dec2.lstm", &in2, &dec2);
        let v = rows(store, "dec.out", &dec2.h);
        let mut step_recon = 0.0;
        let mut step_kl = 0.0;
        for r in 0..n {
            let target = frames[t].agents[r].velocity;
            step_recon += (v[r][0] - target[0]).powi(2) + (v[r][1] - target[1]).powi(2);
            for c in 0..cfg.latent_dim {
                let (sq, sp) = (q.log_sigma[r][c].exp(), p.log_sigma[r][c].exp());
                let dm = q.mu[r][c] - p.mu[r][c];
                step_kl += (sp / sq).ln() + (sq * sq + dm * dm) / (2.0 * sp * sp) - 0.5;
            }
        }
        recon += step_recon / n as f64;
        kl += step_kl / n as f64;
    }
    (recon + beta * kl, recon, kl)
}
