use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::learner::{ChangeRule, ExtrapolationNorm, KoptStrategy, LearnerConfig, MetricMode};
use crate::metric::DEFAULT_EPS_TILDE;
use crate::network::{CombinationRule, Topology};

/// Starting points for the five experiment families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Single node, proposed vs. identity metric.
    Exp1,
    /// Ten-node network, proposed vs. identity metric.
    Exp2,
    /// Sensitivity to the refresh period `n'`.
    Exp3,
    /// Abrupt change of the unknown vector.
    Exp4,
    /// Strategies for building the shared metric and weights.
    Exp5,
}

impl FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(Value::String(s.to_string()))
            .map_err(|_| Error::Config(format!("unknown preset {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TopologySpec {
    Complete,
    Path,
    Ring,
    RingChords { chord: usize },
    /// Erdős–Rényi, redrawn until connected. Drawn once per experiment.
    Random { edge_prob: f64 },
    EdgeList { path: PathBuf },
}

impl TopologySpec {
    pub fn build(&self, nodes: usize, seed: u64) -> Result<Topology> {
        match self {
            TopologySpec::Complete => Topology::complete(nodes),
            TopologySpec::Path => Topology::path(nodes),
            TopologySpec::Ring => Topology::ring(nodes),
            TopologySpec::RingChords { chord } => Topology::ring_with_chords(nodes, *chord),
            TopologySpec::Random { edge_prob } => {
                let mut rng = super::rng_stream(seed, u64::MAX, 0);
                Topology::random_connected(nodes, *edge_prob, &mut rng)
            }
            TopologySpec::EdgeList { path } => {
                let t = Topology::load(path)?;
                if t.len() != nodes {
                    return Err(Error::Config(format!(
                        "{} declares {} nodes, config has {nodes}",
                        path.display(),
                        t.len()
                    )));
                }
                Ok(t)
            }
        }
    }
}

/// Per-node noise variance `variance * s_k` with `s_k ~ U[spread]`, or plain
/// `variance` without a spread.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    pub variance: f64,
    pub spread: Option<[f64; 2]>,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            variance: 0.01,
            spread: Some([0.5, 1.0]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegressorModel {
    /// Fresh Gaussian vector every iteration.
    Iid,
    /// Tapped delay line over a Gaussian input sequence.
    Shift,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerSettings {
    pub q: usize,
    pub mu_scale: f64,
    /// Defaults to the sparsity of the unknown vector.
    pub rho: Option<f64>,
    pub alpha0: f64,
    pub alpha_halve_period: usize,
    pub n_prime: usize,
    pub kopt_strategy: KoptStrategy,
    pub change_ratio_threshold: Option<f64>,
    pub change_rule: ChangeRule,
    pub eps_tilde: f64,
    pub extrapolation_norm: ExtrapolationNorm,
}

impl Default for LearnerSettings {
    fn default() -> Self {
        LearnerSettings {
            q: 20,
            mu_scale: 0.2,
            rho: None,
            alpha0: 0.99,
            alpha_halve_period: 250,
            n_prime: 1,
            kopt_strategy: KoptStrategy::MinNoiseNode,
            change_ratio_threshold: None,
            change_rule: ChangeRule::AnyNode,
            eps_tilde: DEFAULT_EPS_TILDE,
            extrapolation_norm: ExtrapolationNorm::Metric,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArmKind {
    /// Variable metric projections with the weighted ℓ1 ball.
    Proposed,
    /// Identity metric with the weighted ℓ1 ball.
    Apwl1,
    /// Single slab, zero width, no ball.
    Ipnlms,
}

/// One algorithm variant, written `kind[-a|-b|-c][/nN]`: the letter selects
/// the min-noise, max-noise or local parameter source, `/nN` overrides `n'`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Arm {
    pub label: String,
    pub kind: ArmKind,
    pub strategy: Option<KoptStrategy>,
    pub n_prime: Option<usize>,
}

impl FromStr for Arm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown arm {s:?}"));
        let (head, n_prime) = match s.split_once('/') {
            Some((h, tail)) => {
                let n = tail
                    .strip_prefix('n')
                    .and_then(|n| n.parse::<usize>().ok())
                    .filter(|&n| n >= 1)
                    .ok_or_else(bad)?;
                (h, Some(n))
            }
            None => (s, None),
        };
        let (kind, strategy) = match head.rsplit_once('-') {
            Some((k, "a")) => (k, Some(KoptStrategy::MinNoiseNode)),
            Some((k, "b")) => (k, Some(KoptStrategy::MaxNoiseNode)),
            Some((k, "c")) => (k, Some(KoptStrategy::Local)),
            _ => (head, None),
        };
        let kind = match kind {
            "proposed" => ArmKind::Proposed,
            "apwl1" => ArmKind::Apwl1,
            "ipnlms" => ArmKind::Ipnlms,
            _ => return Err(bad()),
        };
        Ok(Arm {
            label: s.to_string(),
            kind,
            strategy,
            n_prime,
        })
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

impl Arm {
    /// Learner configuration for this arm.
    pub fn learner_config(&self, settings: &LearnerSettings, eps: Vec<f64>, rho: f64) -> LearnerConfig {
        let mut cfg = LearnerConfig {
            q: settings.q,
            eps,
            mu_scale: settings.mu_scale,
            rho,
            alpha0: settings.alpha0,
            alpha_halve_period: settings.alpha_halve_period,
            n_prime: self.n_prime.unwrap_or(settings.n_prime),
            kopt_strategy: self.strategy.unwrap_or(settings.kopt_strategy),
            change_ratio_threshold: settings.change_ratio_threshold,
            change_rule: settings.change_rule,
            eps_tilde: settings.eps_tilde,
            extrapolation_norm: settings.extrapolation_norm,
            metric_mode: MetricMode::Variable,
            use_ball: true,
        };
        match self.kind {
            ArmKind::Proposed => {}
            ArmKind::Apwl1 => cfg.metric_mode = MetricMode::Identity,
            ArmKind::Ipnlms => {
                cfg.q = 1;
                cfg.eps.iter_mut().for_each(|e| *e = 0.0);
                cfg.use_ball = false;
            }
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Dimension of the unknown vector.
    pub m: usize,
    /// Number of nonzeros of the unknown vector.
    pub sparsity: usize,
    pub nodes: usize,
    pub topology: TopologySpec,
    pub combination: CombinationRule,
    pub noise: NoiseSpec,
    /// `eps_k = eps_scale * sigma_k`.
    pub eps_scale: f64,
    /// Fixed slab half-width for every node, replacing `eps_scale`.
    pub eps_override: Option<f64>,
    pub regressor: RegressorModel,
    pub learner: LearnerSettings,
    pub runs: usize,
    pub iterations: usize,
    pub seed: u64,
    /// Iteration at which the unknown vector is redrawn.
    pub change_at: Option<usize>,
    /// Sparsity of the redrawn vector.
    pub change_sparsity: usize,
    pub arms: Vec<String>,
    /// Build the metric and ball once from the true vector and keep them.
    pub oracle_params: bool,
    pub per_run_csv: bool,
    pub output: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::preset(Preset::Exp2)
    }
}

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        let exp2 = ExperimentConfig {
            name: "exp2".into(),
            m: 256,
            sparsity: 20,
            nodes: 10,
            topology: TopologySpec::Random { edge_prob: 0.3 },
            combination: CombinationRule::Metropolis,
            noise: NoiseSpec::default(),
            eps_scale: 1.3,
            eps_override: None,
            regressor: RegressorModel::Iid,
            learner: LearnerSettings::default(),
            runs: 20,
            iterations: 2000,
            seed: 1,
            change_at: None,
            change_sparsity: 15,
            arms: vec!["proposed".into(), "apwl1".into()],
            oracle_params: false,
            per_run_csv: true,
            output: PathBuf::from("out"),
        };
        match preset {
            Preset::Exp1 => ExperimentConfig {
                name: "exp1".into(),
                m: 512,
                sparsity: 20,
                nodes: 1,
                topology: TopologySpec::Complete,
                noise: NoiseSpec {
                    variance: 0.01,
                    spread: None,
                },
                regressor: RegressorModel::Shift,
                learner: LearnerSettings {
                    q: 55,
                    ..LearnerSettings::default()
                },
                iterations: 3000,
                ..exp2
            },
            Preset::Exp2 => exp2,
            Preset::Exp3 => ExperimentConfig {
                name: "exp3".into(),
                arms: vec!["proposed/n1".into(), "proposed/n5".into(), "proposed/n20".into()],
                ..exp2
            },
            Preset::Exp4 => ExperimentConfig {
                name: "exp4".into(),
                iterations: 3000,
                change_at: Some(1500),
                learner: LearnerSettings {
                    rho: Some(23.0),
                    change_ratio_threshold: Some(10.0),
                    ..LearnerSettings::default()
                },
                ..exp2
            },
            Preset::Exp5 => ExperimentConfig {
                name: "exp5".into(),
                arms: vec!["proposed-a".into(), "proposed-b".into(), "proposed-c".into()],
                ..exp2
            },
        }
    }

    /// Parses a JSON config. An optional `"preset"` key selects the base
    /// configuration; every other key overrides it.
    pub fn from_json(text: &str) -> Result<Self> {
        let mut value: Value =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid JSON: {e}")))?;
        let obj = value
            .as_object_mut()
            .ok_or_else(|| Error::Config("config must be a JSON object".into()))?;
        let preset = match obj.remove("preset") {
            Some(Value::String(p)) => p.parse()?,
            Some(other) => return Err(Error::Config(format!("bad preset {other}"))),
            None => Preset::Exp2,
        };
        let mut base = serde_json::to_value(Self::preset(preset)).expect("config serializes");
        merge(&mut base, value);
        let cfg: Self = serde_json::from_value(base).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.m == 0 {
            return bad("m must be >= 1".into());
        }
        if self.sparsity > self.m || (self.change_at.is_some() && self.change_sparsity > self.m) {
            return bad(format!("sparsity exceeds m = {}", self.m));
        }
        if self.nodes == 0 {
            return bad("nodes must be >= 1".into());
        }
        if self.runs == 0 {
            return bad("runs must be >= 1".into());
        }
        if !(self.noise.variance >= 0.0 && self.noise.variance.is_finite()) {
            return bad(format!("noise variance {}", self.noise.variance));
        }
        if let Some([lo, hi]) = self.noise.spread {
            if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
                return bad(format!("noise spread [{lo}, {hi}]"));
            }
        }
        if !(self.eps_scale >= 0.0 && self.eps_scale.is_finite()) {
            return bad(format!("eps_scale {}", self.eps_scale));
        }
        if let Some(e) = self.eps_override {
            if !(e >= 0.0 && e.is_finite()) {
                return bad(format!("eps_override {e}"));
            }
        }
        if self.arms.is_empty() {
            return bad("at least one arm is required".into());
        }
        self.parsed_arms()?;
        Ok(())
    }

    pub fn parsed_arms(&self) -> Result<Vec<Arm>> {
        self.arms.iter().map(|a| a.parse()).collect()
    }

    /// Slab half-widths for the given per-node noise variances.
    pub fn slab_widths(&self, noise_variances: &[f64]) -> Vec<f64> {
        match self.eps_override {
            Some(e) => vec![e; noise_variances.len()],
            None => noise_variances
                .iter()
                .map(|v| self.eps_scale * v.sqrt())
                .collect(),
        }
    }
}

fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                // Tagged enums are replaced wholesale so that keys of the old
                // variant do not leak into the new one.
                let replace = k == "topology";
                match b.get_mut(&k) {
                    Some(slot) if !replace => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}
