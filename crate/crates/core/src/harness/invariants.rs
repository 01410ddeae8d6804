//! Randomized oracle suites over the projection kernels, the node update and
//! the combination matrices. Used by the `check-invariants` command and the
//! acceptance tests.

use std::time::{Duration, Instant};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::scenario::rng_stream;
use crate::diagnostics::subgradient_form_step;
use crate::diagnostics::oracles::{
    ball_projection_is_closest, hyperslab_distance_whitened, hyperslab_project_whitened,
    l1ball_project_bisection,
};
use crate::error::Result;
use crate::learner::{node_update, ExtrapolationNorm, NodeParams};
use crate::metric::DiagonalMetric;
use crate::network::{combine, CombinationMatrix, NetworkState, Topology};
use crate::projections::{hyperslab_distance, hyperslab_project, l1ball_project, l1ball_project_vm, Hyperslab, WeightedL1Ball};

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub checked: usize,
    pub failures: usize,
    /// Largest observed error for the suite's headline comparison.
    pub worst: f64,
    pub elapsed: Duration,
    /// First failure, if any.
    pub detail: Option<String>,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

impl std::fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {}: {}/{} ok, worst {:.3e}, {:.2?}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.checked - self.failures,
            self.checked,
            self.worst,
            self.elapsed
        )?;
        if let Some(d) = &self.detail {
            write!(f, " ({d})")?;
        }
        Ok(())
    }
}

struct Tally {
    name: &'static str,
    start: Instant,
    checked: usize,
    failures: usize,
    worst: f64,
    detail: Option<String>,
}

impl Tally {
    fn new(name: &'static str) -> Self {
        Tally {
            name,
            start: Instant::now(),
            checked: 0,
            failures: 0,
            worst: 0.0,
            detail: None,
        }
    }

    fn error(&mut self, e: f64) {
        if e.is_nan() {
            self.worst = f64::INFINITY;
        } else if e > self.worst {
            self.worst = e;
        }
    }

    fn record(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.checked += 1;
        if !ok {
            self.failures += 1;
            if self.detail.is_none() {
                self.detail = Some(what());
            }
        }
    }

    fn finish(self) -> CheckOutcome {
        CheckOutcome {
            name: self.name,
            checked: self.checked,
            failures: self.failures,
            worst: self.worst,
            elapsed: self.start.elapsed(),
            detail: self.detail,
        }
    }
}

fn vector(rng: &mut ChaCha8Rng, m: usize, scale: f64) -> Vec<f64> {
    (0..m).map(|_| scale * rng.gen_range(-1.0..1.0)).collect()
}

/// Mixes exact zeros and heavy tails into the entries.
fn rough_vector(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    (0..m)
        .map(|_| match rng.gen_range(0..10) {
            0 => 0.0,
            1 => 10.0 * rng.gen_range(-1.0..1.0),
            _ => rng.gen_range(-2.0..2.0),
        })
        .collect()
}

fn positive(rng: &mut ChaCha8Rng, m: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..m).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Variable metric built from a random estimate, like the learner does.
fn random_metric(rng: &mut ChaCha8Rng, m: usize) -> DiagonalMetric {
    let h = rough_vector(rng, m);
    let alpha = rng.gen_range(0.0..1.0);
    DiagonalMetric::update(&h, alpha).expect("finite estimate")
}

fn random_slab(rng: &mut ChaCha8Rng, m: usize) -> Hyperslab {
    let mut u = vector(rng, m, 1.0);
    if u.iter().all(|&x| x == 0.0) {
        u[0] = 1.0;
    }
    Hyperslab::new(u, rng.gen_range(-3.0..3.0), rng.gen_range(0.0..0.5)).expect("valid slab")
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Sort-based weighted ℓ1 projection against bisection on the threshold.
pub fn check_l1_projection(instances: usize, tol: f64, seed: u64) -> CheckOutcome {
    let mut rng = rng_stream(seed, 1, 0);
    let mut t = Tally::new("l1-projection-vs-bisection");
    for i in 0..instances {
        let m = rng.gen_range(1..=8);
        let h = rough_vector(&mut rng, m);
        let w = positive(&mut rng, m, 0.05, 5.0);
        let rho = 10f64.powf(rng.gen_range(-2.0..1.5));
        let ball = WeightedL1Ball::new(w.clone(), rho).expect("valid ball");
        let x = l1ball_project(&h, &ball).expect("valid input");
        let y = l1ball_project_bisection(&h, &w, rho);
        let err = max_abs_diff(&x, &y);
        t.error(err);
        let feasible = ball.weighted_l1(&x) <= rho * (1.0 + 1e-12);
        t.record(err <= tol && feasible, || format!("instance {i}: error {err:e}, feasible {feasible}"));
    }
    t.finish()
}

/// Variable metric ball projection: feasibility and G-closeness against
/// sampled feasible points.
pub fn check_vm_ball_projection(instances: usize, samples: usize, slack: f64, seed: u64) -> CheckOutcome {
    let mut rng = rng_stream(seed, 2, 0);
    let mut t = Tally::new("vm-ball-projection");
    for i in 0..instances {
        let m = rng.gen_range(1..=8);
        let metric = random_metric(&mut rng, m);
        let h = vector(&mut rng, m, 3.0);
        let ball = WeightedL1Ball::new(positive(&mut rng, m, 0.05, 5.0), rng.gen_range(0.1..4.0)).expect("valid ball");
        let x = l1ball_project_vm(&h, &ball, &metric).expect("valid input");
        let excess = (ball.weighted_l1(&x) - ball.radius()).max(0.0);
        t.error(excess);
        let feasible = excess <= 1e-12 * ball.radius().max(1.0);
        let closest = ball_projection_is_closest(&h, &x, &ball, &metric, samples, &mut rng, slack);
        t.record(feasible && closest, || format!("instance {i}: excess {excess:e}, closest {closest}"));
    }
    t.finish()
}

/// Hyperslab projection: feasibility, idempotence, sign of `beta` and
/// optimality against the whitened closed form.
pub fn check_hyperslab_projection(instances: usize, idem_tol: f64, opt_tol: f64, seed: u64) -> CheckOutcome {
    let mut rng = rng_stream(seed, 3, 0);
    let mut t = Tally::new("hyperslab-projection");
    for i in 0..instances {
        let m = rng.gen_range(1..=8);
        let metric = random_metric(&mut rng, m);
        let slab = random_slab(&mut rng, m);
        let h = vector(&mut rng, m, 3.0);
        let (Ok(p), Ok(beta), Ok(dist)) = (
            hyperslab_project(&h, &slab, &metric),
            slab.beta(&h, &metric),
            hyperslab_distance(&h, &slab, &metric),
        ) else {
            t.record(false, || format!("instance {i}: unexpected error"));
            continue;
        };
        let scale = 1.0 + h.iter().map(|x| x.abs()).fold(0.0, f64::max);
        let r = slab.residual(&h);
        let eps = slab.half_width();
        let feasible = slab.residual(&p).abs() <= eps + 1e-12 * scale;
        let idem = match hyperslab_project(&p, &slab, &metric) {
            Ok(pp) => max_abs_diff(&p, &pp),
            Err(_) => f64::INFINITY,
        };
        let sign_ok = if r > eps {
            beta > 0.0
        } else if r < -eps {
            beta < 0.0
        } else {
            beta == 0.0 && p == h
        };
        let oracle = hyperslab_project_whitened(&h, &slab, &metric);
        let opt = max_abs_diff(&p, &oracle).max((dist - hyperslab_distance_whitened(&h, &slab, &metric)).abs());
        t.error(opt.max(idem));
        t.record(feasible && idem <= idem_tol && sign_ok && opt <= opt_tol * scale, || {
            format!("instance {i}: feasible {feasible}, idempotence {idem:e}, sign {sign_ok}, optimality {opt:e}")
        });
    }
    t.finish()
}

/// Extrapolated parallel projection against the subgradient form.
pub fn check_subgradient_form(instances: usize, tol: f64, seed: u64) -> CheckOutcome {
    let mut rng = rng_stream(seed, 4, 0);
    let mut t = Tally::new("subgradient-form-equivalence");
    for i in 0..instances {
        let m = rng.gen_range(2..=10);
        let q = rng.gen_range(1..=8);
        let metric = random_metric(&mut rng, m);
        let slabs: Vec<Hyperslab> = (0..q).map(|_| random_slab(&mut rng, m)).collect();
        let refs: Vec<&Hyperslab> = slabs.iter().collect();
        let raw = positive(&mut rng, q, 0.1, 1.0);
        let total: f64 = raw.iter().sum();
        let omega: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let ball = rng
            .gen_bool(0.8)
            .then(|| WeightedL1Ball::new(positive(&mut rng, m, 0.1, 3.0), rng.gen_range(0.2..5.0)).expect("valid ball"));
        let phi = vector(&mut rng, m, 2.0);
        let lambda = rng.gen_range(0.01..1.99);
        let params = NodeParams {
            metric: metric.clone(),
            ball: ball.clone(),
        };
        let outcome: Result<(Vec<f64>, Vec<f64>)> = (|| {
            Ok((
                node_update(&phi, &refs, &omega, &params, lambda, ExtrapolationNorm::Metric)?,
                subgradient_form_step(&phi, &refs, &omega, ball.as_ref(), &metric, lambda)?,
            ))
        })();
        let Ok((a, b)) = outcome else {
            t.record(false, || format!("instance {i}: unexpected error"));
            continue;
        };
        let scale = 1.0 + phi.iter().map(|x| x * x).sum::<f64>().sqrt();
        let gap = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt() / scale;
        t.error(gap);
        t.record(gap <= tol, || format!("instance {i}: relative gap {gap:e}"));
    }
    t.finish()
}

/// Metropolis matrices on random connected graphs, followed by the
/// non-expansiveness of fusion towards consensus points.
pub fn check_combination(topologies: usize, triples: usize, norm_tol: f64, nonexpansive_tol: f64, seed: u64) -> CheckOutcome {
    let mut rng = rng_stream(seed, 5, 0);
    let mut t = Tally::new("combination-algebra");
    let mut matrices = Vec::with_capacity(topologies);
    for i in 0..topologies {
        let nodes = rng.gen_range(1..=20);
        let p = rng.gen_range(0.1..0.9);
        let topo = match Topology::random_connected(nodes, p, &mut rng) {
            Ok(topo) => topo,
            Err(e) => {
                t.record(false, || format!("topology {i}: {e}"));
                continue;
            }
        };
        let c = CombinationMatrix::metropolis(&topo);
        let rows_ok = (0..nodes).all(|k| c.row_sum(k) == 1.0);
        let support_ok = (0..nodes).all(|k| {
            (0..nodes).all(|l| {
                let linked = k == l || topo.are_adjacent(k, l);
                (c.entry(k, l) > 0.0) == linked && (linked || c.entry(k, l) == 0.0)
            })
        });
        let norm_err = (c.spectral_norm(2000) - 1.0).abs();
        t.error(norm_err);
        let sym = c.is_symmetric();
        t.record(sym && rows_ok && support_ok && norm_err <= norm_tol, || {
            format!("topology {i}: symmetric {sym}, row sums {rows_ok}, support {support_ok}, norm error {norm_err:e}")
        });
        matrices.push(c);
    }
    if matrices.is_empty() {
        return t.finish();
    }
    for i in 0..triples {
        let c = &matrices[i % matrices.len()];
        let m = rng.gen_range(1..=8);
        let k = c.nodes();
        let state = NetworkState::from_stacked(k, m, vector(&mut rng, k * m, 3.0)).expect("sized");
        let point = NetworkState::replicated(k, &vector(&mut rng, m, 3.0));
        let metric = random_metric(&mut rng, m);
        let check = || -> Result<(f64, f64)> {
            let fused = combine(&state, c)?;
            Ok((fused.metric_distance(&point, &metric)?, state.metric_distance(&point, &metric)?))
        };
        match check() {
            Ok((after, before)) => {
                t.error((after - before).max(0.0));
                t.record(after <= before + nonexpansive_tol, || format!("triple {i}: {after:e} > {before:e}"));
            }
            Err(e) => t.record(false, || format!("triple {i}: {e}")),
        }
    }
    t.finish()
}

/// Every suite at its default size.
pub fn run_all(seed: u64) -> Vec<CheckOutcome> {
    vec![
        check_l1_projection(1000, 1e-8, seed),
        check_vm_ball_projection(500, 200, 1e-10, seed),
        check_hyperslab_projection(1000, 1e-10, 1e-9, seed),
        check_subgradient_form(200, 1e-10, seed),
        check_combination(50, 500, 1e-10, 1e-12, seed),
    ]
}
