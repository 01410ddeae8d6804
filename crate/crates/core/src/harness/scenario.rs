use std::collections::VecDeque;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::config::{ExperimentConfig, RegressorModel};
use crate::learner::Measurement;

/// Independent substream for `(seed, run, lane)`. Lane 0 belongs to the
/// scenario itself, lane `k + 1` to node `k`.
pub fn rng_stream(seed: u64, run: u64, lane: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&run.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(lane);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub h_star: Vec<f64>,
    /// Unknown vector after the abrupt change, with the iteration it takes
    /// effect.
    pub change: Option<(usize, Vec<f64>)>,
    pub noise_variances: Vec<f64>,
}

impl Scenario {
    /// The vector generating measurements at `iteration`.
    pub fn truth_at(&self, iteration: usize) -> &[f64] {
        match &self.change {
            Some((at, h)) if iteration >= *at => h,
            _ => &self.h_star,
        }
    }
}

fn sparse_vector<R: Rng>(m: usize, sparsity: usize, rng: &mut R) -> Vec<f64> {
    let mut h = vec![0.0; m];
    for i in sample(rng, m, sparsity) {
        h[i] = rng.sample(StandardNormal);
    }
    h
}

/// First draw of every node stream: `variance * s_k`, `s_k ~ U[spread]`.
fn node_noise_variance(cfg: &ExperimentConfig, rng: &mut ChaCha8Rng) -> f64 {
    let t: f64 = rng.gen();
    match cfg.noise.spread {
        Some([lo, hi]) => cfg.noise.variance * (lo + (hi - lo) * t),
        None => cfg.noise.variance,
    }
}

/// Draws the unknown vector(s) and the per-node noise variances of one run.
pub fn generate_scenario(cfg: &ExperimentConfig, run: u64) -> Scenario {
    let mut rng = rng_stream(cfg.seed, run, 0);
    let h_star = sparse_vector(cfg.m, cfg.sparsity, &mut rng);
    let change = cfg
        .change_at
        .map(|at| (at, sparse_vector(cfg.m, cfg.change_sparsity, &mut rng)));
    let noise_variances = (0..cfg.nodes)
        .map(|k| node_noise_variance(cfg, &mut rng_stream(cfg.seed, run, k as u64 + 1)))
        .collect();
    Scenario {
        h_star,
        change,
        noise_variances,
    }
}

/// Measurement stream `d = u^T h + v` of one node.
#[derive(Debug, Clone)]
pub struct MeasurementSource {
    rng: ChaCha8Rng,
    sigma: f64,
    model: RegressorModel,
    delay_line: VecDeque<f64>,
    m: usize,
}

impl MeasurementSource {
    pub fn new(cfg: &ExperimentConfig, run: u64, node: usize, noise_variance: f64) -> Self {
        let mut rng = rng_stream(cfg.seed, run, node as u64 + 1);
        node_noise_variance(cfg, &mut rng);
        let mut delay_line = VecDeque::new();
        if cfg.regressor == RegressorModel::Shift {
            delay_line.extend((0..cfg.m).map(|_| rng.sample::<f64, _>(StandardNormal)));
        }
        MeasurementSource {
            rng,
            sigma: noise_variance.sqrt(),
            model: cfg.regressor,
            delay_line,
            m: cfg.m,
        }
    }

    pub fn next(&mut self, h: &[f64]) -> Measurement {
        let u: Vec<f64> = match self.model {
            RegressorModel::Iid => (0..self.m).map(|_| self.rng.sample(StandardNormal)).collect(),
            RegressorModel::Shift => {
                self.delay_line.pop_back();
                self.delay_line.push_front(self.rng.sample(StandardNormal));
                self.delay_line.iter().copied().collect()
            }
        };
        let noise: f64 = self.rng.sample(StandardNormal);
        let d = u.iter().zip(h).map(|(a, b)| a * b).sum::<f64>() + self.sigma * noise;
        Measurement { u, d }
    }
}
