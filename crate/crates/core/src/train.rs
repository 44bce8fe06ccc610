//! Minibatch training of the teacher-forced objective.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::autodiff::Tensor;
use crate::config::TrainConfig;
use crate::dataset::{normalize, TrajectoryWindow};
use crate::error::{Error, Result};
use crate::model::{LossValues, Model};
use crate::optim::{clip_grad_norm, Adam};

/// Mean per-window loss over one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub recon: f64,
    pub kl: f64,
}

pub fn loss_csv(curve: &[EpochStats]) -> String {
    let mut out = String::from("epoch,loss,recon,kl\n");
    for s in curve {
        out.push_str(&format!("{},{:?},{:?},{:?}\n", s.epoch, s.loss, s.recon, s.kl));
    }
    out
}

/// Optimizer and sampling state carried across epochs.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub config: TrainConfig,
    pub optimizer: Adam,
    pub rng: ChaCha8Rng,
    pub epoch: usize,
    windows: Vec<TrajectoryWindow>,
}

impl Trainer {
    /// Normalizes `windows` once and seeds shuffling and latent noise from `config.seed`.
    pub fn new(model: &Model, windows: &[TrajectoryWindow], config: TrainConfig) -> Result<Self> {
        if windows.is_empty() {
            return Err(Error::Contract("training set is empty".into()));
        }
        let (windows, _) = normalize(windows)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(1);
        Ok(Self {
            config,
            optimizer: Adam::new(&model.params, config.adam()),
            rng,
            epoch: 0,
            windows,
        })
    }

    pub fn windows(&self) -> &[TrajectoryWindow] {
        &self.windows
    }

    /// One pass over shuffled batches. Windows of a batch are differentiated
    /// concurrently; gradients are averaged in batch order, so results do not
    /// depend on the thread count.
    pub fn run_epoch(&mut self, model: &mut Model) -> Result<EpochStats> {
        self.epoch += 1;
        let epoch = self.epoch;
        let mut order: Vec<usize> = (0..self.windows.len()).collect();
        order.shuffle(&mut self.rng);
        let mut sum = LossValues {
            total: 0.0,
            recon: 0.0,
            kl: 0.0,
        };
        for (b, batch) in order.chunks(self.config.batch_size).enumerate() {
            let noise: Vec<Vec<Tensor>> = batch
                .iter()
                .map(|&i| {
                    let w = &self.windows[i];
                    model.draw_noise(w.n_agents(), w.frames.len(), &mut self.rng)
                })
                .collect();
            let frozen: &Model = model;
            let beta = self.config.beta;
            let results = batch
                .par_iter()
                .zip(&noise)
                .map(|(&i, eps)| frozen.loss_and_grads(&self.windows[i].frames, beta, eps))
                .collect::<Result<Vec<_>>>()?;

            let scale = 1.0 / batch.len() as f64;
            let mut grads: Vec<Vec<f64>> = model.params.iter().map(|(_, t)| vec![0.0; t.numel()]).collect();
            for (values, g) in &results {
                if !values.total.is_finite() {
                    return Err(Error::Divergence {
                        epoch,
                        batch: b + 1,
                        value: values.total,
                    });
                }
                sum.total += values.total;
                sum.recon += values.recon;
                sum.kl += values.kl;
                for (acc, g) in grads.iter_mut().zip(g) {
                    for (a, x) in acc.iter_mut().zip(g) {
                        *a += scale * x;
                    }
                }
            }
            if let Some(bad) = grads.iter().flatten().find(|g| !g.is_finite()) {
                return Err(Error::Divergence {
                    epoch,
                    batch: b + 1,
                    value: *bad,
                });
            }
            model.params.zero_grads();
            model.params.accumulate_grads(&grads);
            if self.config.clip_grad_norm > 0.0 {
                clip_grad_norm(&mut model.params, self.config.clip_grad_norm);
            }
            self.optimizer.step(&mut model.params);
        }
        let n = self.windows.len() as f64;
        Ok(EpochStats {
            epoch,
            loss: sum.total / n,
            recon: sum.recon / n,
            kl: sum.kl / n,
        })
    }
}

/// Runs `config.epochs` epochs and returns the loss curve.
pub fn train(model: &mut Model, windows: &[TrajectoryWindow], config: TrainConfig) -> Result<Vec<EpochStats>> {
    let mut trainer = Trainer::new(model, windows, config)?;
    let mut curve = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let s = trainer.run_epoch(model)?;
        log::info!(
            "epoch {:>4}  loss {:.6}  recon {:.6}  kl {:.6}",
            s.epoch,
            s.loss,
            s.recon,
            s.kl
        );
        curve.push(s);
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{gen_synthetic, make_windows, ScenarioKind, WindowSpec};
    use crate::model::ModelConfig;

    fn tiny_model() -> Model {
        let mut c = ModelConfig::default();
        c.encoder.embed_dim = 6;
        c.latent_dim = 3;
        c.stoch_hidden = 5;
        c.dec1_hidden = 5;
        c.dec2_hidden = 6;
        Model::new(c, 1)
    }

    fn windows() -> Vec<TrajectoryWindow> {
        let spec = WindowSpec {
            t_obs: 3,
            t_pred: 2,
            stride: 4,
            frame_step: 10,
        };
        let tracks = gen_synthetic(ScenarioKind::Crossing, 2, 30, 4).unwrap();
        make_windows(&tracks, spec, "synthetic").unwrap()
    }

    fn cfg() -> TrainConfig {
        TrainConfig {
            epochs: 3,
            batch_size: 2,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let mut m = tiny_model();
        let before = m.params.flatten();
        train(&mut m, &windows(), TrainConfig { lr: 0.0, ..cfg() }).unwrap();
        assert_eq!(before, m.params.flatten());
    }

    #[test]
    fn seeded_curve_reproducible() {
        let w = windows();
        let mut a = tiny_model();
        let mut b = tiny_model();
        let ca = train(&mut a, &w, cfg()).unwrap();
        let cb = train(&mut b, &w, cfg()).unwrap();
        assert_eq!(ca, cb);
        assert_eq!(a.params.flatten(), b.params.flatten());
    }

    #[test]
    fn divergence_names_epoch_and_batch() {
        let mut m = tiny_model();
        m.params.get_mut("dec.out.b").unwrap().data_mut()[0] = f64::NAN;
        match train(&mut m, &windows(), cfg()) {
            Err(Error::Divergence { epoch, batch, .. }) => assert_eq!((epoch, batch), (1, 1)),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn empty_training_set_rejected() {
        assert!(train(&mut tiny_model(), &[], cfg()).is_err());
    }

    #[test]
    fn csv_header() {
        let csv = loss_csv(&[EpochStats {
            epoch: 1,
            loss: 2.0,
            recon: 1.5,
            kl: 0.5,
        }]);
        assert_eq!(csv, "epoch,loss,recon,kl\n1,2.0,1.5,0.5\n");
    }
}
