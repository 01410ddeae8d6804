//! Reference routines that check the projection kernels by independent
//! means: bisection on the soft-threshold multiplier, projection in whitened
//! coordinates, and sampling of feasible points.

use rand::Rng;

use crate::metric::DiagonalMetric;
use crate::projections::{Hyperslab, WeightedL1Ball};

/// Weighted ℓ1 ball projection with the multiplier found by 64 rounds of
/// bisection instead of sorting.
pub fn l1ball_project_bisection(h: &[f64], w: &[f64], rho: f64) -> Vec<f64> {
    let shrink = |lambda: f64| -> Vec<f64> {
        h.iter()
            .zip(w)
            .map(|(x, wi)| x.signum() * (x.abs() - lambda * wi).max(0.0))
            .collect()
    };
    let mass = |x: &[f64]| -> f64 { x.iter().zip(w).map(|(a, b)| a.abs() * b).sum() };
    if mass(h) <= rho {
        return h.to_vec();
    }
    let mut lo = 0.0;
    let mut hi = h
        .iter()
        .zip(w)
        .map(|(x, wi)| x.abs() / wi)
        .fold(0.0, f64::max);
    for _ in 0..64 {
        let mid = 0.5 * (lo + hi);
        if mass(&shrink(mid)) > rho {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    shrink(hi)
}

/// G-metric projection computed as a Euclidean hyperplane projection in the
/// coordinates `y = G^{1/2} x`, onto the face nearest to `h`.
pub fn hyperslab_project_whitened(h: &[f64], slab: &Hyperslab, metric: &DiagonalMetric) -> Vec<f64> {
    let s: Vec<f64> = metric.g_inv().iter().map(|g| g.sqrt()).collect();
    let y: Vec<f64> = h.iter().zip(&s).map(|(x, si)| x / si).collect();
    // u^T x = (G^{-1/2} u)^T y
    let a: Vec<f64> = slab.regressor().iter().zip(&s).map(|(u, si)| u * si).collect();
    let ay: f64 = a.iter().zip(&y).map(|(p, q)| p * q).sum();
    let aa: f64 = a.iter().map(|p| p * p).sum();
    let r = slab.observation() - ay;
    let target = if r > slab.half_width() {
        slab.observation() - slab.half_width()
    } else if r < -slab.half_width() {
        slab.observation() + slab.half_width()
    } else {
        return h.to_vec();
    };
    let t = (target - ay) / aa;
    y.iter()
        .zip(&a)
        .zip(&s)
        .map(|((yi, ai), si)| (yi + t * ai) * si)
        .collect()
}

pub fn hyperslab_distance_whitened(h: &[f64], slab: &Hyperslab, metric: &DiagonalMetric) -> f64 {
    let p = hyperslab_project_whitened(h, slab, metric);
    h.iter()
        .zip(&p)
        .zip(metric.g_inv())
        .map(|((a, b), g)| (a - b) * (a - b) / g)
        .sum::<f64>()
        .sqrt()
}

fn g_dist(a: &[f64], b: &[f64], metric: &DiagonalMetric) -> f64 {
    a.iter()
        .zip(b)
        .zip(metric.g_inv())
        .map(|((x, y), g)| (x - y) * (x - y) / g)
        .sum::<f64>()
        .sqrt()
}

fn perturb<R: Rng + ?Sized>(x: &[f64], rng: &mut R) -> Vec<f64> {
    let scale = 10f64.powf(rng.gen_range(-4.0..0.5));
    x.iter().map(|v| v + scale * rng.gen_range(-1.0..1.0)).collect()
}

/// Feasible point of the slab near `x`: a random perturbation pulled back
/// along `u` when it leaves the slab.
pub fn sample_slab_point<R: Rng + ?Sized>(x: &[f64], slab: &Hyperslab, rng: &mut R) -> Vec<f64> {
    let mut y = perturb(x, rng);
    let r = slab.residual(&y);
    let uu: f64 = slab.regressor().iter().map(|u| u * u).sum();
    if r.abs() > slab.half_width() && uu > 0.0 {
        // aim strictly inside to absorb rounding
        let target = r.signum() * slab.half_width() * rng.gen_range(0.0..0.999);
        let t = (r - target) / uu;
        for (yi, ui) in y.iter_mut().zip(slab.regressor()) {
            *yi += t * ui;
        }
    }
    y
}

/// Feasible point of the ball near `x`: a random perturbation rescaled
/// towards the origin when it leaves the ball.
pub fn sample_ball_point<R: Rng + ?Sized>(x: &[f64], ball: &WeightedL1Ball, rng: &mut R) -> Vec<f64> {
    let y = if rng.gen_bool(0.2) {
        x.iter().map(|_| rng.gen_range(-1.0..1.0)).collect()
    } else {
        perturb(x, rng)
    };
    let mass = ball.weighted_l1(&y);
    if mass > ball.radius() {
        let f = ball.radius() / mass * (1.0 - 1e-12);
        y.iter().map(|v| v * f).collect()
    } else {
        y
    }
}

/// True when no sampled feasible point is G-closer to `h` than `x`.
pub fn slab_projection_is_closest<R: Rng + ?Sized>(
    h: &[f64],
    x: &[f64],
    slab: &Hyperslab,
    metric: &DiagonalMetric,
    samples: usize,
    rng: &mut R,
    slack: f64,
) -> bool {
    let best = g_dist(h, x, metric);
    (0..samples).all(|_| {
        let y = sample_slab_point(x, slab, rng);
        !slab.contains(&y) || best <= g_dist(h, &y, metric) + slack
    })
}

pub fn ball_projection_is_closest<R: Rng + ?Sized>(
    h: &[f64],
    x: &[f64],
    ball: &WeightedL1Ball,
    metric: &DiagonalMetric,
    samples: usize,
    rng: &mut R,
    slack: f64,
) -> bool {
    let best = g_dist(h, x, metric);
    (0..samples).all(|_| {
        let y = sample_ball_point(x, ball, rng);
        !ball.contains(&y) || best <= g_dist(h, &y, metric) + slack
    })
}
