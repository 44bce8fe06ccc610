//! Per-timestep Gaussian latent model: prior and inference recurrences,
//! reparameterized sampling, closed-form KL and the hierarchical decoder.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::nn::{Bound, Linear, LstmCell, LstmState, ParamStore};

/// Diagonal Gaussian with strictly positive standard deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianParams {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl GaussianParams {
    pub fn new(mu: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        if mu.len() != sigma.len() {
            return Err(Error::dim("gaussian", &[mu.len()], &[sigma.len()]));
        }
        if let Some(s) = sigma.iter().find(|s| !(**s > 0.0)) {
            return Err(Error::Contract(format!("sigma must be > 0, got {s}")));
        }
        Ok(Self { mu, sigma })
    }

    pub fn standard(dim: usize) -> Self {
        Self {
            mu: vec![0.0; dim],
            sigma: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let ln_2pi = (2.0 * std::f64::consts::PI).ln();
        self.mu
            .iter()
            .zip(&self.sigma)
            .zip(x)
            .map(|((m, s), x)| {
                let u = (x - m) / s;
                -0.5 * (u * u + ln_2pi) - s.ln()
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentSample {
    pub z: Vec<f64>,
    pub epsilon: Vec<f64>,
}

/// `z = mu + sigma ⊙ ε` with `ε ~ N(0, I)`.
pub fn sample(g: &GaussianParams, rng: &mut impl Rng) -> LatentSample {
    let epsilon: Vec<f64> = (0..g.dim()).map(|_| rng.sample(StandardNormal)).collect();
    let z = g
        .mu
        .iter()
        .zip(&g.sigma)
        .zip(&epsilon)
        .map(|((m, s), e)| m + s * e)
        .collect();
    LatentSample { z, epsilon }
}

/// `KL(q ‖ p)` between diagonal Gaussians, summed over dimensions.
pub fn kl_gaussian(q: &GaussianParams, p: &GaussianParams) -> f64 {
    q.mu.iter()
        .zip(&q.sigma)
        .zip(p.mu.iter().zip(&p.sigma))
        .map(|((mq, sq), (mp, sp))| {
            (sp / sq).ln() + (sq * sq + (mq - mp) * (mq - mp)) / (2.0 * sp * sp) - 0.5
        })
        .sum()
}

/// Per-agent Gaussians on the tape, each n×d.
#[derive(Debug, Clone, Copy)]
pub struct GaussianVars {
    pub mu: Var,
    pub log_sigma: Var,
    pub sigma: Var,
}

impl GaussianVars {
    /// Row `agent` as plain parameters.
    pub fn params(&self, tape: &Tape, agent: usize) -> GaussianParams {
        GaussianParams {
            mu: tape.value(self.mu).row(agent).to_vec(),
            sigma: tape.value(self.sigma).row(agent).to_vec(),
        }
    }

    /// `mu + sigma ⊙ ε` with `ε` an n×d constant.
    pub fn reparameterize(&self, tape: &mut Tape, epsilon: Tensor) -> Result<Var> {
        let eps = tape.constant(epsilon);
        let noise = tape.mul(self.sigma, eps)?;
        tape.add(self.mu, noise)
    }
}

/// Sum over agents and dimensions of `KL(q ‖ p)`, from log standard deviations.
pub fn kl_on_tape(tape: &mut Tape, q: &GaussianVars, p: &GaussianVars) -> Result<Var> {
    let numel = tape.value(q.mu).numel();
    let dls = tape.sub(p.log_sigma, q.log_sigma)?;
    // σ_q² / σ_p²
    let ratio = tape.scale(dls, -2.0);
    let ratio = tape.exp(ratio);
    let ratio = tape.scale(ratio, 0.5);
    let dmu = tape.sub(q.mu, p.mu)?;
    let dmu2 = tape.mul(dmu, dmu)?;
    let inv_var = tape.scale(p.log_sigma, -2.0);
    let inv_var = tape.exp(inv_var);
    let shift = tape.mul(dmu2, inv_var)?;
    let shift = tape.scale(shift, 0.5);
    let terms = tape.add(dls, ratio)?;
    let terms = tape.add(terms, shift)?;
    let total = tape.sum(terms);
    let half = tape.constant(Tensor::scalar(0.5 * numel as f64));
    tape.sub(total, half)
}

/// Linear input projection, a recurrent cell, and mean / scale heads with
/// `sigma = exp(0.5 · a)`. Shared shape of the prior and inference networks.
#[derive(Debug, Clone, Copy)]
pub struct GaussianLstm {
    pub input: Linear,
    pub cell: LstmCell,
    pub mu: Linear,
    pub log_var: Linear,
}

impl GaussianLstm {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        hidden: usize,
        latent: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Self {
            input: Linear::new(store, &format!("{name}.fc"), in_dim, hidden, rng),
            cell: LstmCell::new(store, &format!("{name}.lstm"), hidden, hidden, rng),
            mu: Linear::new(store, &format!("{name}.mu"), hidden, latent, rng),
            log_var: Linear::new(store, &format!("{name}.logvar"), hidden, latent, rng),
        }
    }

    pub fn hidden(&self) -> usize {
        self.cell.hidden
    }

    pub fn step(
        &self,
        tape: &mut Tape,
        p: &Bound,
        x: Var,
        state: LstmState,
    ) -> Result<(GaussianVars, LstmState)> {
        let f = self.input.forward(tape, p, x)?;
        let state = self.cell.step(tape, p, f, state)?;
        let mu = self.mu.forward(tape, p, state.h)?;
        let a = self.log_var.forward(tape, p, state.h)?;
        let log_sigma = tape.scale(a, 0.5);
        let sigma = tape.exp(log_sigma);
        Ok((
            GaussianVars {
                mu,
                log_sigma,
                sigma,
            },
            state,
        ))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DecoderState {
    pub lower: LstmState,
    pub upper: LstmState,
}

/// Two stacked cells: the lower one reads `[x_{t−1}, z_t]`, the upper one
/// reads `[h¹, e_{t−1}]`; a linear head maps `h²` to a velocity.
#[derive(Debug, Clone, Copy)]
pub struct Decoder {
    pub lower: LstmCell,
    pub upper: LstmCell,
    pub out: Linear,
}

impl Decoder {
    pub fn new(
        store: &mut ParamStore,
        feature_dim: usize,
        latent: usize,
        lower_hidden: usize,
        upper_hidden: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Self {
            lower: LstmCell::new(store, "dec1.lstm", feature_dim + latent, lower_hidden, rng),
            upper: LstmCell::new(store, "dec2.lstm", lower_hidden + feature_dim, upper_hidden, rng),
            out: Linear::new(store, "dec.out", upper_hidden, 2, rng),
        }
    }

    pub fn initial_state(&self, tape: &mut Tape, n: usize) -> DecoderState {
        DecoderState {
            lower: LstmState::zeros(tape, n, self.lower.hidden),
            upper: LstmState::zeros(tape, n, self.upper.hidden),
        }
    }

    /// Returns the n×2 velocity prediction and the advanced state.
    pub fn step(
        &self,
        tape: &mut Tape,
        p: &Bound,
        z: Var,
        features_prev: Var,
        embeddings_prev: Var,
        state: DecoderState,
    ) -> Result<(Var, DecoderState)> {
        let lower_in = tape.concat(&[features_prev, z], 1)?;
        let lower = self.lower.step(tape, p, lower_in, state.lower)?;
        let upper_in = tape.concat(&[lower.h, embeddings_prev], 1)?;
        let upper = self.upper.step(tape, p, upper_in, state.upper)?;
        let v = self.out.forward(tape, p, upper.h)?;
        Ok((v, DecoderState { lower, upper }))
    }
}
