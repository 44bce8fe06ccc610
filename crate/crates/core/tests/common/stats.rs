use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use socstoch::latent::{sample, GaussianParams};

pub fn random_pair(rng: &mut ChaCha8Rng, dim: usize) -> (GaussianParams, GaussianParams) {
    let mut g = || {
        GaussianParams::new(
            (0..dim).map(|_| rng.random_range(-1.5..1.5)).collect(),
            (0..dim).map(|_| rng.random_range(0.4..2.0)).collect(),
        )
        .unwrap()
    };
    (g(), g())
}

/// `E_q[log q(z) − log p(z)]` from `n` draws of `q`.
pub fn monte_carlo_kl(q: &GaussianParams, p: &GaussianParams, n: usize, rng: &mut ChaCha8Rng) -> f64 {
    (0..n)
        .map(|_| {
            let z = sample(q, rng).z;
            q.log_density(&z) - p.log_density(&z)
        })
        .sum::<f64>()
        / n as f64
}

/// `(closed form, sampled)` for 20 random pairs of dimension 1 to 3.
pub fn kl_pairs(seed: u64, draws: usize) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..20)
        .map(|k| {
            let (q, p) = random_pair(&mut rng, 1 + k % 3);
            (socstoch::latent::kl_gaussian(&q, &p), monte_carlo_kl(&q, &p, draws, &mut rng))
        })
        .collect()
}
