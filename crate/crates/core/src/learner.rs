//! Combine-adapt update with variable metric parallel projections.
//!
//! Each iteration every node fuses its neighbours' estimates, projects the
//! aggregate onto its `q` most recent hyperslabs, takes an extrapolated step
//! towards their convex combination and finally projects onto the weighted
//! ℓ1 ball, all in the metric `G`.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::metric::{DiagonalMetric, SparsityWeights, DEFAULT_EPS_TILDE};
use crate::network::{combine_into, CombinationMatrix, NetworkState};
use crate::projections::{hyperslab_distance, hyperslab_project, l1ball_project_vm, Hyperslab, WeightedL1Ball};

/// Norm used by the extrapolation coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtrapolationNorm {
    /// `||.||_G`, consistent with the subgradient form of the update.
    #[default]
    Metric,
    Euclidean,
}

/// Which estimate the shared metric and ball weights are built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KoptStrategy {
    #[default]
    MinNoiseNode,
    MaxNoiseNode,
    /// Each node uses its own estimate.
    Local,
}

/// How per-node step ratios are combined before comparing with the
/// abrupt-change threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChangeRule {
    /// Largest ratio: one node suffices.
    #[default]
    AnyNode,
    /// Smallest ratio: every node must exceed the threshold.
    AllNodes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricMode {
    /// Proportionate metric rebuilt from the source estimate.
    #[default]
    Variable,
    /// `G = I`.
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerConfig {
    /// Sliding window length.
    pub q: usize,
    /// Slab half-width per node.
    pub eps: Vec<f64>,
    /// `mu = mu_scale * M`, with `mu_scale` in (0, 2).
    pub mu_scale: f64,
    pub rho: f64,
    pub alpha0: f64,
    pub alpha_halve_period: usize,
    /// Refresh period of the metric and the ball weights.
    pub n_prime: usize,
    pub kopt_strategy: KoptStrategy,
    /// `None` disables the abrupt-change reset.
    pub change_ratio_threshold: Option<f64>,
    pub change_rule: ChangeRule,
    pub eps_tilde: f64,
    pub extrapolation_norm: ExtrapolationNorm,
    pub metric_mode: MetricMode,
    /// Whether the ball projection is applied at all.
    pub use_ball: bool,
}

impl LearnerConfig {
    pub fn new(nodes: usize, eps: f64) -> Self {
        LearnerConfig {
            q: 20,
            eps: vec![eps; nodes],
            mu_scale: 0.2,
            rho: 1.0,
            alpha0: 0.99,
            alpha_halve_period: 250,
            n_prime: 1,
            kopt_strategy: KoptStrategy::MinNoiseNode,
            change_ratio_threshold: None,
            change_rule: ChangeRule::AnyNode,
            eps_tilde: DEFAULT_EPS_TILDE,
            extrapolation_norm: ExtrapolationNorm::Metric,
            metric_mode: MetricMode::Variable,
            use_ball: true,
        }
    }

    pub fn nodes(&self) -> usize {
        self.eps.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.q == 0 {
            return bad("window size q must be >= 1".into());
        }
        if self.eps.is_empty() {
            return bad("at least one node is required".into());
        }
        if let Some(e) = self.eps.iter().find(|e| !(**e >= 0.0 && e.is_finite())) {
            return bad(format!("slab half-width {e} must be finite and >= 0"));
        }
        if !(self.mu_scale > 0.0 && self.mu_scale < 2.0) {
            return bad(format!("mu_scale = {} must lie in (0, 2)", self.mu_scale));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return bad(format!("rho = {} must be positive", self.rho));
        }
        if !(0.0..1.0).contains(&self.alpha0) {
            return bad(format!("alpha0 = {} must lie in [0, 1)", self.alpha0));
        }
        if self.alpha_halve_period == 0 || self.n_prime == 0 {
            return bad("alpha_halve_period and n_prime must be >= 1".into());
        }
        if self.eps_tilde.is_nan() || self.eps_tilde <= 0.0 {
            return bad(format!("eps_tilde = {} must be positive", self.eps_tilde));
        }
        if let Some(t) = self.change_ratio_threshold {
            if t.is_nan() || t <= 0.0 {
                return bad(format!("change_ratio_threshold = {t} must be positive"));
            }
        }
        Ok(())
    }
}

/// One measurement pair `(d, u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub u: Vec<f64>,
    pub d: f64,
}

/// Sliding window of a node's most recent hyperslabs. A slot holding an
/// infeasible measurement stays empty.
#[derive(Debug, Clone)]
pub struct NodeState {
    q: usize,
    slots: VecDeque<Option<Hyperslab>>,
    weights: Option<Vec<f64>>,
}

impl NodeState {
    pub fn new(q: usize) -> Self {
        NodeState {
            q,
            slots: VecDeque::with_capacity(q),
            weights: None,
        }
    }

    /// Fixed per-slot weights, oldest slot first. They are renormalized over
    /// the occupied slots of a partially filled window.
    pub fn with_weights(q: usize, weights: Vec<f64>) -> Result<Self> {
        check_dim(q, weights.len())?;
        if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidInput("window weights must be positive".into()));
        }
        Ok(NodeState {
            weights: Some(weights),
            ..Self::new(q)
        })
    }

    pub fn push(&mut self, slab: Hyperslab) {
        if self.slots.len() == self.q {
            self.slots.pop_front();
        }
        let feasible = !slab.is_degenerate() || slab.observation().abs() <= slab.half_width();
        self.slots.push_back(feasible.then_some(slab));
    }

    /// Number of slots filled so far, `min(n + 1, q)`.
    pub fn slot_count(&self) -> usize {
        self.slots.len()
    }

    pub fn slabs(&self) -> Vec<&Hyperslab> {
        self.slots.iter().flatten().collect()
    }

    /// Weights of the occupied slots, summing to one.
    pub fn omega(&self) -> Vec<f64> {
        let filled = self.slots.len();
        let raw: Vec<f64> = self
            .slots
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_some())
            .map(|(i, _)| match &self.weights {
                // Align the newest slot with the last configured weight.
                Some(w) => w[self.q - filled + i],
                None => 1.0,
            })
            .collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / total).collect()
    }
}

/// Metric and optional ball used by one node's update.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeParams {
    pub metric: DiagonalMetric,
    pub ball: Option<WeightedL1Ball>,
}

impl NodeParams {
    /// Builds the metric and ball weights from an estimate.
    pub fn from_estimate(h: &[f64], cfg: &LearnerConfig, alpha: f64) -> Result<Self> {
        let metric = match cfg.metric_mode {
            MetricMode::Variable => DiagonalMetric::update(h, alpha)?,
            MetricMode::Identity => DiagonalMetric::identity(h.len()),
        };
        let ball = if cfg.use_ball {
            let w = SparsityWeights::update(h, cfg.eps_tilde)?;
            Some(WeightedL1Ball::new(w.into_inner(), cfg.rho)?)
        } else {
            None
        };
        Ok(NodeParams { metric, ball })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SharedParams {
    Common(NodeParams),
    PerNode(Vec<NodeParams>),
}

impl SharedParams {
    pub fn for_node(&self, k: usize) -> &NodeParams {
        match self {
            SharedParams::Common(p) => p,
            SharedParams::PerNode(v) => &v[k],
        }
    }
}

/// Index of the node whose estimate seeds the shared parameters.
pub fn source_node(strategy: KoptStrategy, noise_variances: &[f64]) -> Option<usize> {
    let cmp = |a: &(usize, &f64), b: &(usize, &f64)| a.1.total_cmp(b.1);
    let it = noise_variances.iter().enumerate();
    match strategy {
        KoptStrategy::MinNoiseNode => it.min_by(cmp).map(|(k, _)| k),
        // max_by returns the last maximum; keep the first for symmetry with min.
        KoptStrategy::MaxNoiseNode => it.rev().max_by(cmp).map(|(k, _)| k),
        KoptStrategy::Local => None,
    }
}

/// Builds the metric and ball from the designated node, or per node under
/// the local strategy.
pub fn shared_params(
    state: &NetworkState,
    cfg: &LearnerConfig,
    noise_variances: &[f64],
    alpha: f64,
) -> Result<SharedParams> {
    check_dim(state.nodes(), noise_variances.len())?;
    match source_node(cfg.kopt_strategy, noise_variances) {
        Some(k) => Ok(SharedParams::Common(NodeParams::from_estimate(
            state.node(k),
            cfg,
            alpha,
        )?)),
        None => (0..state.nodes())
            .map(|k| NodeParams::from_estimate(state.node(k), cfg, alpha))
            .collect::<Result<Vec<_>>>()
            .map(SharedParams::PerNode),
    }
}

fn norm_sq(v: &[f64], metric: &DiagonalMetric, norm: ExtrapolationNorm) -> f64 {
    match norm {
        ExtrapolationNorm::Metric => metric.norm_sq_unchecked(v),
        ExtrapolationNorm::Euclidean => v.iter().map(|x| x * x).sum(),
    }
}

/// Extrapolation coefficient
/// `M = sum w_j ||P_j - phi||^2 / ||sum w_j P_j - phi||^2`, or 1 when the
/// combined projection equals `phi`. Never below 1 by convexity.
pub fn extrapolation_coeff(
    phi: &[f64],
    projections: &[Vec<f64>],
    omega: &[f64],
    metric: &DiagonalMetric,
    norm: ExtrapolationNorm,
) -> Result<f64> {
    check_dim(projections.len(), omega.len())?;
    let mut combined = vec![0.0; phi.len()];
    let mut numerator = 0.0;
    let mut diff = vec![0.0; phi.len()];
    for (p, &w) in projections.iter().zip(omega) {
        check_dim(phi.len(), p.len())?;
        for ((d, x), f) in diff.iter_mut().zip(p).zip(phi) {
            *d = x - f;
        }
        numerator += w * norm_sq(&diff, metric, norm);
        for (c, d) in combined.iter_mut().zip(&diff) {
            *c += w * d;
        }
    }
    let denominator = norm_sq(&combined, metric, norm);
    Ok(if denominator > 0.0 {
        numerator / denominator
    } else {
        1.0
    })
}

/// One node's adapt step from the fused estimate `phi`.
pub fn node_update(
    phi: &[f64],
    slabs: &[&Hyperslab],
    omega: &[f64],
    params: &NodeParams,
    mu_scale: f64,
    norm: ExtrapolationNorm,
) -> Result<Vec<f64>> {
    check_dim(slabs.len(), omega.len())?;
    let metric = &params.metric;
    let projections = slabs
        .iter()
        .map(|s| hyperslab_project(phi, s, metric))
        .collect::<Result<Vec<_>>>()?;
    let m_coeff = extrapolation_coeff(phi, &projections, omega, metric, norm)?;
    let mu = mu_scale * m_coeff;
    let mut y = phi.to_vec();
    for (p, &w) in projections.iter().zip(omega) {
        for ((yi, pi), fi) in y.iter_mut().zip(p).zip(phi) {
            *yi += mu * w * (pi - fi);
        }
    }
    match &params.ball {
        Some(ball) => l1ball_project_vm(&y, ball, metric),
        None => Ok(y),
    }
}

/// Pushes each node's new hyperslab, fuses the neighbourhood estimates and
/// runs every node's adapt step. Nodes are processed in parallel; the result
/// does not depend on the number of workers.
pub fn network_step(
    state: &NetworkState,
    combination: &CombinationMatrix,
    nodes: &mut [NodeState],
    measurements: &[Measurement],
    params: &SharedParams,
    cfg: &LearnerConfig,
) -> Result<NetworkState> {
    check_dim(state.nodes(), nodes.len())?;
    check_dim(state.nodes(), measurements.len())?;
    check_dim(state.nodes(), cfg.nodes())?;
    check_dim(state.nodes(), combination.nodes())?;
    for (k, (node, meas)) in nodes.iter_mut().zip(measurements).enumerate() {
        check_dim(state.dim(), meas.u.len())?;
        node.push(Hyperslab::new(meas.u.clone(), meas.d, cfg.eps[k])?);
    }
    let updated = nodes
        .par_iter()
        .enumerate()
        .map(|(k, node)| {
            let mut phi = vec![0.0; state.dim()];
            combine_into(state, combination, k, &mut phi);
            let slabs = node.slabs();
            let params = params.for_node(k);
            if slabs.is_empty() {
                return match &params.ball {
                    Some(b) => l1ball_project_vm(&phi, b, &params.metric),
                    None => Ok(phi),
                };
            }
            node_update(
                &phi,
                &slabs,
                &node.omega(),
                params,
                cfg.mu_scale,
                cfg.extrapolation_norm,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    NetworkState::from_nodes(updated)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tick {
    pub alpha: f64,
    pub refresh: bool,
    pub reset_alpha: bool,
}

/// `alpha` halving, parameter refresh period and abrupt-change reset.
#[derive(Debug, Clone)]
pub struct Schedule {
    alpha0: f64,
    period: usize,
    n_prime: usize,
    threshold: Option<f64>,
    epoch_start: usize,
}

impl Schedule {
    pub fn new(cfg: &LearnerConfig) -> Self {
        Schedule {
            alpha0: cfg.alpha0,
            period: cfg.alpha_halve_period,
            n_prime: cfg.n_prime,
            threshold: cfg.change_ratio_threshold,
            epoch_start: 0,
        }
    }

    /// `change_ratio` is the largest step ratio observed after the previous
    /// iteration. A reset restarts the halving schedule at `iter`.
    pub fn tick(&mut self, iter: usize, change_ratio: Option<f64>) -> Tick {
        let reset_alpha = matches!(
            (self.threshold, change_ratio),
            (Some(t), Some(r)) if r > t
        );
        if reset_alpha {
            self.epoch_start = iter;
        }
        let halvings = (iter - self.epoch_start) / self.period;
        let alpha = self.alpha0 * 0.5f64.powi(halvings.min(i32::MAX as usize) as i32);
        Tick {
            alpha,
            refresh: iter.is_multiple_of(self.n_prime),
            reset_alpha,
        }
    }
}

/// Tracks `||h_{n+1} - h_n|| / ||h_n - h_{n-1}||` per node.
#[derive(Debug, Clone, Default)]
pub struct ChangeMonitor {
    rule: ChangeRule,
    last_steps: Option<Vec<f64>>,
}

impl ChangeMonitor {
    pub fn new(rule: ChangeRule) -> Self {
        ChangeMonitor { rule, last_steps: None }
    }

    /// Records the step from `prev` to `next` and returns the ratio over
    /// nodes combined by the monitor's rule. Nodes whose previous step was
    /// exactly zero are skipped.
    pub fn observe(&mut self, prev: &NetworkState, next: &NetworkState) -> Option<f64> {
        let steps: Vec<f64> = prev
            .iter()
            .zip(next.iter())
            .map(|(a, b)| {
                a.iter()
                    .zip(b)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        let ratio = self.last_steps.as_ref().and_then(|last| {
            last.iter()
                .zip(&steps)
                .filter(|(den, _)| **den > 0.0)
                .map(|(den, num)| num / den)
                .reduce(match self.rule {
                    ChangeRule::AnyNode => f64::max,
                    ChangeRule::AllNodes => f64::min,
                })
        });
        self.last_steps = Some(steps);
        ratio
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub iteration: usize,
    pub alpha: f64,
    pub refreshed: bool,
    pub reset_alpha: bool,
    pub change_ratio: Option<f64>,
}

/// Complete diffusion learner: network state, windows, schedules and the
/// shared parameters.
#[derive(Debug, Clone)]
pub struct DiffusionLearner {
    cfg: LearnerConfig,
    combination: CombinationMatrix,
    noise_variances: Vec<f64>,
    nodes: Vec<NodeState>,
    state: NetworkState,
    schedule: Schedule,
    monitor: ChangeMonitor,
    pending_ratio: Option<f64>,
    params: Option<SharedParams>,
    frozen: bool,
    iteration: usize,
}

impl DiffusionLearner {
    /// Starts every node at the zero estimate.
    pub fn new(
        cfg: LearnerConfig,
        combination: CombinationMatrix,
        dim: usize,
        noise_variances: Vec<f64>,
    ) -> Result<Self> {
        cfg.validate()?;
        let k = cfg.nodes();
        check_dim(k, combination.nodes())?;
        check_dim(k, noise_variances.len())?;
        if dim == 0 {
            return Err(Error::Config("dimension must be >= 1".into()));
        }
        Ok(DiffusionLearner {
            nodes: (0..k).map(|_| NodeState::new(cfg.q)).collect(),
            state: NetworkState::zeros(k, dim),
            schedule: Schedule::new(&cfg),
            monitor: ChangeMonitor::new(cfg.change_rule),
            pending_ratio: None,
            params: None,
            frozen: false,
            iteration: 0,
            cfg,
            combination,
            noise_variances,
        })
    }

    /// Pins the metric and ball for the whole run.
    pub fn freeze_params(&mut self, params: SharedParams) -> Result<()> {
        if let SharedParams::PerNode(v) = &params {
            check_dim(self.state.nodes(), v.len())?;
        }
        self.params = Some(params);
        self.frozen = true;
        Ok(())
    }

    pub fn step(&mut self, measurements: &[Measurement]) -> Result<StepReport> {
        let n = self.iteration;
        let tick = self.schedule.tick(n, self.pending_ratio);
        let refreshed = !self.frozen && (tick.refresh || tick.reset_alpha || self.params.is_none());
        if refreshed {
            self.params = Some(shared_params(
                &self.state,
                &self.cfg,
                &self.noise_variances,
                tick.alpha,
            )?);
        }
        let params = self.params.as_ref().expect("parameters initialised above");
        let next = network_step(
            &self.state,
            &self.combination,
            &mut self.nodes,
            measurements,
            params,
            &self.cfg,
        )?;
        self.pending_ratio = self.monitor.observe(&self.state, &next);
        self.state = next;
        self.iteration += 1;
        Ok(StepReport {
            iteration: n,
            alpha: tick.alpha,
            refreshed,
            reset_alpha: tick.reset_alpha,
            change_ratio: self.pending_ratio,
        })
    }

    pub fn state(&self) -> &NetworkState {
        &self.state
    }

    pub fn params(&self) -> Option<&SharedParams> {
        self.params.as_ref()
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.cfg
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn window(&self, k: usize) -> &NodeState {
        &self.nodes[k]
    }

    /// Largest `d_G(h_k, S_kj)` over nodes and their current windows.
    pub fn max_slab_distance(&self) -> Result<f64> {
        let Some(params) = &self.params else {
            return Ok(0.0);
        };
        let mut worst: f64 = 0.0;
        for (k, node) in self.nodes.iter().enumerate() {
            let metric = &params.for_node(k).metric;
            for slab in node.slabs() {
                worst = worst.max(hyperslab_distance(self.state.node(k), slab, metric)?);
            }
        }
        Ok(worst)
    }
}
