//! Subgradient reformulation of the update, experiment metrics and
//! monitors.
//!
//! [`theta_eval`] and [`subgradient_form_step`] rebuild the node update as a relaxed
//! subgradient projection on the loss
//! `Theta(h) = sum_{j in I} (w_j d_G(phi, S_j) / L) d_G(h, S_j)`, which gives
//! an independent path to cross-check [`crate::learner::node_update`].

use crate::error::{check_dim, Result};
use crate::metric::DiagonalMetric;
use crate::network::NetworkState;
use crate::projections::{
    hyperslab_distance, hyperslab_project, l1ball_project_vm, subgradient_projection_step, Hyperslab,
    WeightedL1Ball,
};

pub mod oracles;

/// Reported in place of `10 log10(0)`.
pub const MSD_DB_FLOOR: f64 = -320.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaEval {
    pub value: f64,
    pub subgrad: Vec<f64>,
    /// Window positions whose slab does not contain `phi`.
    pub active_set: Vec<usize>,
    /// `L = sum_j w_j d_G(phi, S_j)`.
    pub normalizer: f64,
}

pub fn theta_eval(
    phi: &[f64],
    window: &[&Hyperslab],
    omega: &[f64],
    metric: &DiagonalMetric,
) -> Result<ThetaEval> {
    check_dim(window.len(), omega.len())?;
    let m = phi.len();
    let mut dists = Vec::with_capacity(window.len());
    for s in window {
        dists.push(hyperslab_distance(phi, s, metric)?);
    }
    let active_set: Vec<usize> = (0..window.len()).filter(|&j| dists[j] > 0.0).collect();
    let normalizer: f64 = omega.iter().zip(&dists).map(|(w, d)| w * d).sum();
    if active_set.is_empty() {
        return Ok(ThetaEval {
            value: 0.0,
            subgrad: vec![0.0; m],
            active_set,
            normalizer,
        });
    }
    let value = active_set
        .iter()
        .map(|&j| omega[j] * dists[j] * dists[j])
        .sum::<f64>()
        / normalizer;
    let mut subgrad = vec![0.0; m];
    for &j in &active_set {
        let p = hyperslab_project(phi, window[j], metric)?;
        for ((s, x), pj) in subgrad.iter_mut().zip(phi).zip(&p) {
            *s += omega[j] * (x - pj);
        }
    }
    subgrad.iter_mut().for_each(|s| *s /= normalizer);
    Ok(ThetaEval {
        value,
        subgrad,
        active_set,
        normalizer,
    })
}

/// Loss `Theta` anchored at `phi`, evaluated at an arbitrary point `x`.
pub fn theta_at(
    x: &[f64],
    phi: &[f64],
    window: &[&Hyperslab],
    omega: &[f64],
    metric: &DiagonalMetric,
) -> Result<f64> {
    let anchor = theta_eval(phi, window, omega, metric)?;
    let mut total = 0.0;
    for &j in &anchor.active_set {
        let dphi = hyperslab_distance(phi, window[j], metric)?;
        total += omega[j] * dphi / anchor.normalizer * hyperslab_distance(x, window[j], metric)?;
    }
    Ok(total)
}

/// `P_B(phi - lambda Theta / ||Theta'||^2_G Theta')`, or `P_B(phi)` when no
/// slab is violated. `ball = None` skips the final projection.
///
/// Violated slabs whose projections cancel give a zero subgradient; the step
/// then leaves `phi` in place, as the extrapolated update does.
pub fn subgradient_form_step(
    phi: &[f64],
    window: &[&Hyperslab],
    omega: &[f64],
    ball: Option<&WeightedL1Ball>,
    metric: &DiagonalMetric,
    lambda: f64,
) -> Result<Vec<f64>> {
    let theta = theta_eval(phi, window, omega, metric)?;
    let moved = if theta.active_set.is_empty() || metric.norm(&theta.subgrad)? == 0.0 {
        phi.to_vec()
    } else {
        subgradient_projection_step(phi, theta.value, &theta.subgrad, lambda, metric)?
    };
    match ball {
        Some(b) => l1ball_project_vm(&moved, b, metric),
        None => Ok(moved),
    }
}

/// `(1/K) sum_k ||h_k - h*||^2`.
pub fn msd(state: &NetworkState, h_star: &[f64]) -> Result<f64> {
    check_dim(state.dim(), h_star.len())?;
    let total: f64 = state
        .iter()
        .map(|h| h.iter().zip(h_star).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum();
    Ok(total / state.nodes() as f64)
}

pub fn to_db(value: f64) -> f64 {
    if value > 0.0 {
        10.0 * value.log10()
    } else {
        MSD_DB_FLOOR
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MonotonicityReport {
    /// Indices `n` with `history[n] > history[n - 1] + tolerance`.
    pub violations: Vec<usize>,
    pub max_increase: f64,
}

impl MonotonicityReport {
    pub fn is_monotone(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Flags every increase of the distance sequence beyond `tolerance`.
pub fn monotonicity_monitor(history: &[f64], tolerance: f64) -> MonotonicityReport {
    let mut report = MonotonicityReport::default();
    for (n, pair) in history.windows(2).enumerate() {
        let inc = pair[1] - pair[0];
        report.max_increase = report.max_increase.max(inc);
        if inc > tolerance {
            report.violations.push(n + 1);
        }
    }
    report
}
