//! The full predictor: social graph encoder, prior / inference networks and
//! hierarchical decoder, with the training objective and autoregressive rollout.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::autodiff::{Tape, Tensor, Var};
use crate::encoder::{EncodedScene, EncoderConfig, EncoderParams};
use crate::error::{Error, Result};
use crate::graph::{build_graph, AgentState, Point, SceneFrame, SocialGraph};
use crate::latent::{kl_on_tape, Decoder, DecoderState, GaussianLstm, GaussianVars};
use crate::nn::{Bound, LstmState, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    /// When false the social graph is complete (every ordered pair).
    pub directed: bool,
    pub view_angle_deg: f64,
    pub still_speed_eps: f64,
    pub latent_dim: usize,
    pub stoch_hidden: usize,
    pub dec1_hidden: usize,
    pub dec2_hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            directed: true,
            view_angle_deg: 240.0,
            still_speed_eps: 1e-2,
            latent_dim: 32,
            stoch_hidden: 32,
            dec1_hidden: 32,
            dec2_hidden: 64,
        }
    }
}

/// Recurrent state of every network for one window; built fresh per window.
#[derive(Debug, Clone, Copy)]
pub struct SeqState {
    pub prior: LstmState,
    pub posterior: LstmState,
    pub decoder: DecoderState,
}

#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub total: Var,
    pub recon: Var,
    pub kl: Var,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValues {
    pub total: f64,
    pub recon: f64,
    pub kl: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttentionRecord {
    pub time_index: i64,
    pub block: usize,
    pub src: usize,
    pub dst: usize,
    pub alpha: f64,
}

/// One sampled future.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    /// `[step][agent]`, one entry per predicted frame.
    pub positions: Vec<Vec<Point>>,
    pub velocities: Vec<Vec<Point>>,
    pub attention: Vec<AttentionRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutOptions {
    /// Multiplies every latent standard deviation; 0 makes rollouts deterministic.
    pub sigma_scale: f64,
    pub record_attention: bool,
}

impl Default for RolloutOptions {
    fn default() -> Self {
        Self {
            sigma_scale: 1.0,
            record_attention: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub encoder: EncoderParams,
    pub prior: GaussianLstm,
    pub posterior: GaussianLstm,
    pub decoder: Decoder,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let d = config.encoder.embed_dim;
        let encoder = EncoderParams::new(&mut params, config.encoder, &mut rng);
        let prior = GaussianLstm::new(
            &mut params,
            "prior",
            d,
            config.stoch_hidden,
            config.latent_dim,
            &mut rng,
        );
        let posterior = GaussianLstm::new(
            &mut params,
            "post",
            d,
            config.stoch_hidden,
            config.latent_dim,
            &mut rng,
        );
        let decoder = Decoder::new(
            &mut params,
            d,
            config.latent_dim,
            config.dec1_hidden,
            config.dec2_hidden,
            &mut rng,
        );
        Self {
            config,
            params,
            encoder,
            prior,
            posterior,
            decoder,
        }
    }

    pub fn graph(&self, frame: &SceneFrame) -> SocialGraph {
        if self.config.directed {
            build_graph(frame, self.config.view_angle_deg, self.config.still_speed_eps)
        } else {
            SocialGraph::complete(frame.len())
        }
    }

    pub fn encode(&self, tape: &mut Tape, p: &Bound, frame: &SceneFrame) -> Result<EncodedScene> {
        let graph = self.graph(frame);
        self.encoder.encode(tape, p, frame, &graph)
    }

    pub fn initial_state(&self, tape: &mut Tape, n: usize) -> SeqState {
        SeqState {
            prior: LstmState::zeros(tape, n, self.prior.hidden()),
            posterior: LstmState::zeros(tape, n, self.posterior.hidden()),
            decoder: self.decoder.initial_state(tape, n),
        }
    }

    /// Prior Gaussians conditioned on the previous frame's features.
    pub fn prior_step(
        &self,
        tape: &mut Tape,
        p: &Bound,
        features_prev: Var,
        state: &mut SeqState,
    ) -> Result<GaussianVars> {
        let (g, s) = self.prior.step(tape, p, features_prev, state.prior)?;
        state.prior = s;
        Ok(g)
    }

    /// Posterior Gaussians conditioned on the current frame's features.
    pub fn inference_step(
        &self,
        tape: &mut Tape,
        p: &Bound,
        features: Var,
        state: &mut SeqState,
    ) -> Result<GaussianVars> {
        let (g, s) = self.posterior.step(tape, p, features, state.posterior)?;
        state.posterior = s;
        Ok(g)
    }

    pub fn decode_step(
        &self,
        tape: &mut Tape,
        p: &Bound,
        z: Var,
        prev: &EncodedScene,
        state: &mut SeqState,
    ) -> Result<Var> {
        let (v, s) =
            self.decoder
                .step(tape, p, z, prev.features, prev.embeddings, state.decoder)?;
        state.decoder = s;
        Ok(v)
    }

    /// Teacher-forced objective over a window: for each step t ≥ 2 the squared
    /// velocity error plus `beta` times KL(posterior ‖ prior), both averaged
    /// over agents and summed over steps. `noise[t]` holds the n×latent
    /// standard-normal draws for the t-th transition.
    pub fn elbo(
        &self,
        tape: &mut Tape,
        p: &Bound,
        frames: &[SceneFrame],
        beta: f64,
        noise: &[Tensor],
    ) -> Result<LossVars> {
        if frames.len() < 2 {
            return Err(Error::Contract(format!(
                "objective needs at least 2 frames, got {}",
                frames.len()
            )));
        }
        if noise.len() != frames.len() - 1 {
            return Err(Error::Contract(format!(
                "expected {} noise draws, got {}",
                frames.len() - 1,
                noise.len()
            )));
        }
        let n = frames[0].len();
        let inv_n = 1.0 / n as f64;
        let encoded = frames
            .iter()
            .map(|f| self.encode(tape, p, f))
            .collect::<Result<Vec<_>>>()?;
        let mut state = self.initial_state(tape, n);
        let mut recon_terms = Vec::with_capacity(frames.len() - 1);
        let mut kl_terms = Vec::with_capacity(frames.len() - 1);
        for t in 1..frames.len() {
            let prior = self.prior_step(tape, p, encoded[t - 1].features, &mut state)?;
            let post = self.inference_step(tape, p, encoded[t].features, &mut state)?;
            let z = post.reparameterize(tape, noise[t - 1].clone())?;
            let v_hat = self.decode_step(tape, p, z, &encoded[t - 1], &mut state)?;

            let target = tape.constant(velocity_matrix(&frames[t].agents)?);
            let diff = tape.sub(v_hat, target)?;
            let sq = tape.mul(diff, diff)?;
            let sq = tape.sum(sq);
            recon_terms.push(tape.scale(sq, inv_n));
            let kl = kl_on_tape(tape, &post, &prior)?;
            kl_terms.push(tape.scale(kl, inv_n));
        }
        let recon = sum_scalars(tape, &recon_terms)?;
        let kl = sum_scalars(tape, &kl_terms)?;
        let weighted = tape.scale(kl, beta);
        let total = tape.add(recon, weighted)?;
        Ok(LossVars { total, recon, kl })
    }

    pub fn loss(&self, frames: &[SceneFrame], beta: f64, noise: &[Tensor]) -> Result<LossValues> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape);
        let l = self.elbo(&mut tape, &p, frames, beta, noise)?;
        Ok(values(&tape, &l))
    }

    /// Loss values and the gradient of `total` for every parameter, in
    /// registration order.
    pub fn loss_and_grads(
        &self,
        frames: &[SceneFrame],
        beta: f64,
        noise: &[Tensor],
    ) -> Result<(LossValues, Vec<Vec<f64>>)> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape);
        let l = self.elbo(&mut tape, &p, frames, beta, noise)?;
        tape.backward(l.total)?;
        Ok((values(&tape, &l), self.params.collect_grads(&tape, &p)))
    }

    /// Standard-normal draws for every transition of a `frames`-long window.
    pub fn draw_noise(&self, agents: usize, frames: usize, rng: &mut impl Rng) -> Vec<Tensor> {
        (1..frames)
            .map(|_| standard_normal(agents, self.config.latent_dim, rng))
            .collect()
    }

    /// Samples one future of `t_pred` frames. Observed frames warm every
    /// recurrent state with posterior latents; each predicted step rebuilds
    /// the graph from the predicted layout, draws from the prior and advances
    /// positions by the decoded velocity.
    pub fn rollout(
        &self,
        observed: &[SceneFrame],
        t_pred: usize,
        rng: &mut impl Rng,
        opts: RolloutOptions,
    ) -> Result<Rollout> {
        if observed.len() < 2 {
            return Err(Error::Contract(format!(
                "rollout needs at least 2 observed frames, got {}",
                observed.len()
            )));
        }
        let n = observed[0].len();
        let latent = self.config.latent_dim;
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape);
        let mut attention = Vec::new();
        let mut record = |tape: &Tape, scene: &EncodedScene, time_index: i64| {
            if opts.record_attention {
                for (block, src, dst, alpha) in scene.attention_values(tape) {
                    attention.push(AttentionRecord {
                        time_index,
                        block,
                        src,
                        dst,
                        alpha,
                    });
                }
            }
        };

        let mut encoded = Vec::with_capacity(observed.len());
        for f in observed {
            let e = self.encode(&mut tape, &p, f)?;
            record(&tape, &e, f.time_index);
            encoded.push(e);
        }
        let mut state = self.initial_state(&mut tape, n);
        for t in 1..observed.len() {
            self.prior_step(&mut tape, &p, encoded[t - 1].features, &mut state)?;
            let post = self.inference_step(&mut tape, &p, encoded[t].features, &mut state)?;
            let eps = scaled_noise(n, latent, opts.sigma_scale, rng);
            let z = post.reparameterize(&mut tape, eps)?;
            self.decode_step(&mut tape, &p, z, &encoded[t - 1], &mut state)?;
        }

        let last = observed.len() - 1;
        let frame_step = observed[last].time_index - observed[last - 1].time_index;
        let mut current = observed[last].clone();
        let mut prev = encoded.pop().expect("observed frames encoded");
        let mut positions = Vec::with_capacity(t_pred);
        let mut velocities = Vec::with_capacity(t_pred);
        for step in 0..t_pred {
            let prior = self.prior_step(&mut tape, &p, prev.features, &mut state)?;
            let eps = scaled_noise(n, latent, opts.sigma_scale, rng);
            let z = prior.reparameterize(&mut tape, eps)?;
            let v_hat = self.decode_step(&mut tape, &p, z, &prev, &mut state)?;
            let v = tape.value(v_hat).to_rows();
            let agents: Vec<AgentState> = current
                .agents
                .iter()
                .zip(&v)
                .map(|(a, v)| {
                    AgentState::new([a.position[0] + v[0], a.position[1] + v[1]], [v[0], v[1]])
                })
                .collect();
            positions.push(agents.iter().map(|a| a.position).collect());
            velocities.push(agents.iter().map(|a| a.velocity).collect());
            current = SceneFrame::new(agents, current.time_index + frame_step);
            if step + 1 < t_pred {
                prev = self.encode(&mut tape, &p, &current)?;
                record(&tape, &prev, current.time_index);
            }
        }
        Ok(Rollout {
            positions,
            velocities,
            attention,
        })
    }
}

fn values(tape: &Tape, l: &LossVars) -> LossValues {
    LossValues {
        total: tape.value(l.total).item(),
        recon: tape.value(l.recon).item(),
        kl: tape.value(l.kl).item(),
    }
}

fn sum_scalars(tape: &mut Tape, terms: &[Var]) -> Result<Var> {
    let mut acc = terms[0];
    for &t in &terms[1..] {
        acc = tape.add(acc, t)?;
    }
    Ok(acc)
}

fn velocity_matrix(agents: &[AgentState]) -> Result<Tensor> {
    let data = agents.iter().flat_map(|a| a.velocity).collect();
    Tensor::new(vec![agents.len(), 2], data)
}

fn standard_normal(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    Tensor::new(vec![rows, cols], data).expect("noise shape")
}

fn scaled_noise(rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> Tensor {
    let mut t = standard_normal(rows, cols, rng);
    if scale != 1.0 {
        t.data_mut().iter_mut().for_each(|e| *e *= scale);
    }
    t
}

/// Objective of one window with freshly drawn latent noise.
pub fn elbo_loss(
    model: &Model,
    frames: &[SceneFrame],
    beta: f64,
    rng: &mut impl Rng,
) -> Result<f64> {
    let n = frames.first().map_or(0, SceneFrame::len);
    let noise = model.draw_noise(n, frames.len(), rng);
    Ok(model.loss(frames, beta, &noise)?.total)
}

/// `n_samples` independent futures of the observed frames.
pub fn rollout_predict(
    model: &Model,
    observed: &[SceneFrame],
    t_pred: usize,
    n_samples: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Rollout>> {
    (0..n_samples)
        .map(|_| model.rollout(observed, t_pred, rng, RolloutOptions::default()))
        .collect()
}
