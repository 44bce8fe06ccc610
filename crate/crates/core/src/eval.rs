//! Best-of-K stochastic evaluation and prediction export.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::{normalize, Transform, TrajectoryWindow};
use crate::error::{Error, Result};
use crate::graph::Point;
use crate::metrics::{ade_per_agent, fde_per_agent};
use crate::model::{Model, Rollout, RolloutOptions};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub samples: usize,
    pub seed: u64,
    /// Pick the best sample per agent instead of one per window.
    pub per_agent_best: bool,
    pub rollout: RolloutOptions,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            samples: 20,
            seed: 0,
            per_agent_best: false,
            rollout: RolloutOptions::default(),
        }
    }
}

/// Random stream of one (window, sample) pair. Streams do not depend on the
/// number of samples drawn, so the first k samples of a larger draw are
/// exactly the k-sample draw.
pub fn sample_rng(seed: u64, window: usize, sample: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((window as u64) << 32) | sample as u64);
    rng
}

/// Per-agent ADE and FDE of one sampled future.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleErrors {
    pub ade: Vec<f64>,
    pub fde: Vec<f64>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Best-of-K scores of one window, ADE and FDE minimized independently.
pub fn best_of_k(samples: &[SampleErrors], per_agent: bool) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::Contract("best-of-k needs at least one sample".into()));
    }
    let pick = |get: fn(&SampleErrors) -> &Vec<f64>| {
        if per_agent {
            let n = get(&samples[0]).len();
            let best: Vec<f64> = (0..n)
                .map(|j| samples.iter().map(|s| get(s)[j]).fold(f64::INFINITY, f64::min))
                .collect();
            mean(&best)
        } else {
            samples.iter().map(|s| mean(get(s))).fold(f64::INFINITY, f64::min)
        }
    };
    Ok((pick(|s| &s.ade), pick(|s| &s.fde)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneReport {
    pub scene: String,
    pub ade: f64,
    pub fde: f64,
    pub windows: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub scenes: Vec<SceneReport>,
    pub overall: SceneReport,
    pub samples: usize,
    pub per_window: Vec<(f64, f64)>,
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scene,ade,fde,windows,samples\n");
        for r in self.scenes.iter().chain(std::iter::once(&self.overall)) {
            writeln!(out, "{},{:.6},{:.6},{},{}", r.scene, r.ade, r.fde, r.windows, self.samples).expect("write to string");
        }
        out
    }

    pub fn to_table(&self) -> String {
        let width = self
            .scenes
            .iter()
            .chain(std::iter::once(&self.overall))
            .map(|r| r.scene.len())
            .max()
            .unwrap_or(5)
            .max(5);
        let mut out = format!("{:<width$}  {:>8}  {:>8}  {:>7}\n", "scene", "ADE", "FDE", "windows");
        for r in self.scenes.iter().chain(std::iter::once(&self.overall)) {
            writeln!(out, "{:<width$}  {:>8.4}  {:>8.4}  {:>7}", r.scene, r.ade, r.fde, r.windows).expect("write to string");
        }
        writeln!(out, "best of {} samples", self.samples).expect("write to string");
        out
    }
}

/// A window's sampled futures in original coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub window: TrajectoryWindow,
    pub rollouts: Vec<Rollout>,
}

/// Samples `samples` futures of `window`. The model sees the normalized
/// window; returned positions are mapped back with the inverse transform.
pub fn predict_window(
    model: &Model,
    window: &TrajectoryWindow,
    window_index: usize,
    samples: usize,
    seed: u64,
    opts: RolloutOptions,
) -> Result<Prediction> {
    let (normalized, transforms) = normalize(std::slice::from_ref(window))?;
    let t = transforms[0];
    let rollouts = (0..samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = sample_rng(seed, window_index, s);
            let mut r = model.rollout(normalized[0].observed(), window.t_pred, &mut rng, opts)?;
            invert(&mut r, &t);
            Ok(r)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Prediction {
        window: window.clone(),
        rollouts,
    })
}

fn invert(r: &mut Rollout, t: &Transform) {
    for step in &mut r.positions {
        for p in step.iter_mut() {
            *p = t.invert(*p);
        }
    }
}

/// Per-agent errors of every sample, in original meters.
pub fn sample_errors(prediction: &Prediction) -> Result<Vec<SampleErrors>> {
    let truth = prediction.window.future_positions();
    prediction
        .rollouts
        .iter()
        .map(|r| {
            Ok(SampleErrors {
                ade: ade_per_agent(&r.positions, &truth)?,
                fde: fde_per_agent(&r.positions, &truth)?,
            })
        })
        .collect()
}

/// Best-of-K ADE/FDE averaged over windows, per scene (in order of first
/// appearance) and overall.
pub fn evaluate(model: &Model, windows: &[TrajectoryWindow], opts: EvalOptions) -> Result<EvalReport> {
    if windows.is_empty() {
        return Err(Error::Contract("no evaluation windows".into()));
    }
    if opts.samples == 0 {
        return Err(Error::Contract("samples must be at least 1".into()));
    }
    let per_window = windows
        .par_iter()
        .enumerate()
        .map(|(i, w)| {
            let pred = predict_window(model, w, i, opts.samples, opts.seed, opts.rollout)?;
            best_of_k(&sample_errors(&pred)?, opts.per_agent_best)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut scenes: Vec<SceneReport> = Vec::new();
    for (w, &(ade, fde)) in windows.iter().zip(&per_window) {
        let idx = match scenes.iter().position(|s| s.scene == w.scene) {
            Some(i) => i,
            None => {
                scenes.push(SceneReport {
                    scene: w.scene.clone(),
                    ade: 0.0,
                    fde: 0.0,
                    windows: 0,
                });
                scenes.len() - 1
            }
        };
        let s = &mut scenes[idx];
        s.ade += ade;
        s.fde += fde;
        s.windows += 1;
    }
    for s in &mut scenes {
        s.ade /= s.windows as f64;
        s.fde /= s.windows as f64;
    }
    let n = per_window.len() as f64;
    let overall = SceneReport {
        scene: "overall".into(),
        ade: per_window.iter().map(|p| p.0).sum::<f64>() / n,
        fde: per_window.iter().map(|p| p.1).sum::<f64>() / n,
        windows: per_window.len(),
    };
    log::debug!("evaluated {} windows with {} samples", windows.len(), opts.samples);
    Ok(EvalReport {
        scenes,
        overall,
        samples: opts.samples,
        per_window,
    })
}

fn push_row(out: &mut String, sample: i64, agent: usize, t: usize, p: Point, role: &str) {
    writeln!(out, "{sample},{agent},{t},{},{},{role}", p[0], p[1]).expect("write to string");
}

/// Observed, ground-truth and predicted positions; observed and ground-truth
/// rows carry sample −1.
pub fn prediction_csv(pred: &Prediction) -> String {
    let w = &pred.window;
    let mut out = String::from("sample,agent,t,x,y,role\n");
    for (t, frame) in w.frames.iter().enumerate() {
        let role = if t < w.t_obs { "obs" } else { "gt" };
        for (j, a) in frame.agents.iter().enumerate() {
            push_row(&mut out, -1, j, t, a.position, role);
        }
    }
    for (s, r) in pred.rollouts.iter().enumerate() {
        for (k, step) in r.positions.iter().enumerate() {
            for (j, &p) in step.iter().enumerate() {
                push_row(&mut out, s as i64, j, w.t_obs + k, p, "pred");
            }
        }
    }
    out
}

/// Attention weights of every edge and block, with `t` the window frame index.
pub fn attention_csv(pred: &Prediction) -> String {
    let w = &pred.window;
    let t0 = w.frames[0].time_index;
    let step = (w.frames[1].time_index - t0).max(1);
    let mut out = String::from("sample,t,block,src,dst,alpha\n");
    for (s, r) in pred.rollouts.iter().enumerate() {
        for a in &r.attention {
            let t = (a.time_index - t0) / step;
            writeln!(out, "{s},{t},{},{},{},{}", a.block, a.src, a.dst, a.alpha).expect("write to string");
        }
    }
    out
}
