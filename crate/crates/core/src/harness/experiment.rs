use rayon::prelude::*;

use super::config::{Arm, ExperimentConfig};
use super::scenario::{generate_scenario, MeasurementSource, Scenario};
use crate::diagnostics::{msd, to_db};
use crate::error::{Error, Result};
use crate::learner::{DiffusionLearner, NodeParams, SharedParams};
use crate::network::{consensus_distance_sq, CombinationMatrix, NetworkState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRecord {
    pub iteration: usize,
    /// Linear mean square deviation.
    pub msd: f64,
    pub msd_db: f64,
    pub consensus_dist_sq: f64,
    pub max_slab_dist: f64,
    pub alpha: f64,
    /// `||h - h*||_Ḡ` under node 0's metric. Only meaningful with frozen
    /// parameters.
    pub oracle_dist: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmTrace {
    pub arm: String,
    pub records: Vec<MetricsRecord>,
    /// Iterations at which the abrupt-change detector reset `alpha`.
    pub resets: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub config: ExperimentConfig,
    /// `runs[r][a]`.
    pub runs: Vec<Vec<ArmTrace>>,
    /// Per-arm average over runs.
    pub summary: Vec<ArmTrace>,
}

/// Runs one arm on one realization.
pub fn simulate_arm(
    cfg: &ExperimentConfig,
    arm: &Arm,
    scenario: &Scenario,
    combination: &CombinationMatrix,
    run: u64,
) -> Result<ArmTrace> {
    let rho = cfg.learner.rho.unwrap_or(cfg.sparsity as f64);
    let eps = cfg.slab_widths(&scenario.noise_variances);
    let learner_cfg = arm.learner_config(&cfg.learner, eps, rho);
    let alpha0 = learner_cfg.alpha0;
    let mut learner = DiffusionLearner::new(
        learner_cfg,
        combination.clone(),
        cfg.m,
        scenario.noise_variances.clone(),
    )?;
    if cfg.oracle_params {
        let params = NodeParams::from_estimate(&scenario.h_star, learner.config(), alpha0)?;
        learner.freeze_params(SharedParams::Common(params))?;
    }
    let mut sources: Vec<MeasurementSource> = scenario
        .noise_variances
        .iter()
        .enumerate()
        .map(|(k, &v)| MeasurementSource::new(cfg, run, k, v))
        .collect();

    let mut records = Vec::with_capacity(cfg.iterations);
    let mut resets = Vec::new();
    for n in 0..cfg.iterations {
        let truth = scenario.truth_at(n);
        let measurements: Vec<_> = sources.iter_mut().map(|s| s.next(truth)).collect();
        let report = learner.step(&measurements)?;
        if report.reset_alpha {
            resets.push(n);
        }
        let state = learner.state();
        let value = msd(state, truth)?;
        let metric = &learner
            .params()
            .expect("parameters exist after a step")
            .for_node(0)
            .metric;
        let oracle_dist = state.metric_distance(&NetworkState::replicated(state.nodes(), truth), metric)?;
        records.push(MetricsRecord {
            iteration: n,
            msd: value,
            msd_db: to_db(value),
            consensus_dist_sq: consensus_distance_sq(state),
            max_slab_dist: learner.max_slab_distance()?,
            alpha: report.alpha,
            oracle_dist,
        });
    }
    Ok(ArmTrace {
        arm: arm.label.clone(),
        records,
        resets,
    })
}

fn average(arm: &str, traces: &[&ArmTrace]) -> ArmTrace {
    let runs = traces.len() as f64;
    let len = traces.first().map_or(0, |t| t.records.len());
    let records = (0..len)
        .map(|n| {
            let mean = |f: fn(&MetricsRecord) -> f64| -> f64 {
                traces.iter().map(|t| f(&t.records[n])).sum::<f64>() / runs
            };
            let value = mean(|r| r.msd);
            MetricsRecord {
                iteration: n,
                msd: value,
                msd_db: to_db(value),
                consensus_dist_sq: mean(|r| r.consensus_dist_sq),
                max_slab_dist: mean(|r| r.max_slab_dist),
                alpha: mean(|r| r.alpha),
                oracle_dist: mean(|r| r.oracle_dist),
            }
        })
        .collect();
    ArmTrace {
        arm: arm.to_string(),
        records,
        resets: Vec::new(),
    }
}

/// Runs every arm on `cfg.runs` realizations, in parallel over runs on the
/// current thread pool. Results are independent of the pool size.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let arms = cfg.parsed_arms()?;
    let topology = cfg.topology.build(cfg.nodes, cfg.seed)?;
    let combination = CombinationMatrix::from_rule(&topology, cfg.combination);
    let runs = (0..cfg.runs as u64)
        .into_par_iter()
        .map(|run| {
            let scenario = generate_scenario(cfg, run);
            arms.iter()
                .map(|arm| simulate_arm(cfg, arm, &scenario, &combination, run))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = arms
        .iter()
        .enumerate()
        .map(|(a, arm)| {
            let traces: Vec<&ArmTrace> = runs.iter().map(|r| &r[a]).collect();
            average(&arm.label, &traces)
        })
        .collect();
    Ok(ExperimentOutput {
        config: cfg.clone(),
        runs,
        summary,
    })
}

/// [`run_experiment`] on a dedicated pool of `threads` workers.
pub fn run_experiment_with_threads(cfg: &ExperimentConfig, threads: usize) -> Result<ExperimentOutput> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| run_experiment(cfg))
}
