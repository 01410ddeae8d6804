//! Projections onto hyperslabs and weighted ℓ1 balls, in the Euclidean and
//! in a diagonal variable metric.

use crate::error::{check_dim, check_finite, Error, Result};
use crate::metric::{DiagonalMetric, POSITIVE_FLOOR};

/// `S = { h : |d - u^T h| <= eps }`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperslab {
    u: Vec<f64>,
    d: f64,
    eps: f64,
}

impl Hyperslab {
    pub fn new(u: Vec<f64>, d: f64, eps: f64) -> Result<Self> {
        check_finite("u", &u)?;
        if !d.is_finite() {
            return Err(Error::InvalidInput(format!("observation d = {d}")));
        }
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "slab half-width eps = {eps} must be finite and >= 0"
            )));
        }
        Ok(Hyperslab { u, d, eps })
    }

    pub fn regressor(&self) -> &[f64] {
        &self.u
    }

    pub fn observation(&self) -> f64 {
        self.d
    }

    pub fn half_width(&self) -> f64 {
        self.eps
    }

    pub fn dim(&self) -> usize {
        self.u.len()
    }

    /// `d - u^T h`.
    pub fn residual(&self, h: &[f64]) -> f64 {
        self.d - dot(&self.u, h)
    }

    pub fn contains(&self, h: &[f64]) -> bool {
        self.residual(h).abs() <= self.eps
    }

    /// A slab with a zero regressor is either everything or nothing.
    pub fn is_degenerate(&self) -> bool {
        self.u.iter().all(|&x| x == 0.0)
    }

    /// Step length `beta` of the projection `h + beta G^{-1} u`.
    ///
    /// Positive exactly when `d - u^T h > eps`, negative exactly when
    /// `d - u^T h < -eps`, zero inside the slab.
    pub fn beta(&self, h: &[f64], metric: &DiagonalMetric) -> Result<f64> {
        check_dim(self.dim(), h.len())?;
        check_dim(self.dim(), metric.dim())?;
        let r = self.residual(h);
        if self.is_degenerate() {
            return if self.d.abs() <= self.eps {
                Ok(0.0)
            } else {
                Err(Error::InfeasibleSlab {
                    abs_d: self.d.abs(),
                    eps: self.eps,
                })
            };
        }
        let denom = metric.dual_norm_sq_unchecked(&self.u);
        Ok(if r > self.eps {
            (r - self.eps) / denom
        } else if r < -self.eps {
            (r + self.eps) / denom
        } else {
            0.0
        })
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Variable metric projection onto a hyperslab, `h + beta G^{-1} u`.
pub fn hyperslab_project(h: &[f64], slab: &Hyperslab, metric: &DiagonalMetric) -> Result<Vec<f64>> {
    let beta = slab.beta(h, metric)?;
    if beta == 0.0 {
        return Ok(h.to_vec());
    }
    Ok(h.iter()
        .zip(metric.g_inv())
        .zip(slab.regressor())
        .map(|((x, g), u)| x + beta * g * u)
        .collect())
}

/// `d_G(h, S) = |beta| ||u||_{G^{-1}}`, zero iff `h` lies in the slab.
pub fn hyperslab_distance(h: &[f64], slab: &Hyperslab, metric: &DiagonalMetric) -> Result<f64> {
    let beta = slab.beta(h, metric)?;
    if beta == 0.0 {
        return Ok(0.0);
    }
    Ok(beta.abs() * metric.dual_norm_sq_unchecked(slab.regressor()).sqrt())
}

/// `B = { h : sum w_i |h_i| <= rho }` with `w > 0`, `rho > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedL1Ball {
    w: Vec<f64>,
    rho: f64,
}

impl WeightedL1Ball {
    pub fn new(w: Vec<f64>, rho: f64) -> Result<Self> {
        check_finite("w", &w)?;
        if let Some(i) = w.iter().position(|&x| x <= POSITIVE_FLOOR) {
            return Err(Error::InvalidInput(format!(
                "ball weight w[{i}] = {} must be positive",
                w[i]
            )));
        }
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "ball radius rho = {rho} must be positive and finite"
            )));
        }
        Ok(WeightedL1Ball { w, rho })
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn radius(&self) -> f64 {
        self.rho
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    /// `sum w_i |h_i|`.
    pub fn weighted_l1(&self, h: &[f64]) -> f64 {
        self.w.iter().zip(h).map(|(w, x)| w * x.abs()).sum()
    }

    pub fn contains(&self, h: &[f64]) -> bool {
        self.weighted_l1(h) <= self.rho
    }
}

/// Euclidean projection onto a weighted ℓ1 ball.
///
/// The solution is the weighted soft threshold
/// `x_i = sign(h_i) max(|h_i| - lambda w_i, 0)` with the unique `lambda > 0`
/// that puts `x` on the sphere. Breakpoints `|h_i| / w_i` are sorted in
/// decreasing order and the active set is grown until the candidate
/// multiplier falls below the next breakpoint, which costs `O(m log m)`.
pub fn l1ball_project(h: &[f64], ball: &WeightedL1Ball) -> Result<Vec<f64>> {
    check_dim(ball.dim(), h.len())?;
    check_finite("h", h)?;
    if ball.contains(h) {
        return Ok(h.to_vec());
    }
    let w = ball.weights();
    let mut order: Vec<usize> = (0..h.len()).collect();
    order.sort_unstable_by(|&a, &b| {
        let ta = h[a].abs() / w[a];
        let tb = h[b].abs() / w[b];
        tb.total_cmp(&ta)
    });

    // Running sums over the active set: S = sum w_i |h_i|, W = sum w_i^2.
    let mut s = 0.0;
    let mut ww = 0.0;
    let mut lambda = 0.0;
    for (pos, &i) in order.iter().enumerate() {
        s += w[i] * h[i].abs();
        ww += w[i] * w[i];
        lambda = (s - ball.radius()) / ww;
        let next = order
            .get(pos + 1)
            .map(|&j| h[j].abs() / w[j])
            .unwrap_or(0.0);
        if lambda >= next {
            break;
        }
    }
    // h outside the ball forces lambda > 0.
    let lambda = lambda.max(0.0);
    Ok(h.iter()
        .zip(w)
        .map(|(&x, &wi)| {
            (x.abs() - lambda * wi).max(0.0).copysign(x)
        })
        .collect())
}

/// Projection onto a weighted ℓ1 ball in the metric `G`.
///
/// Conjugates the Euclidean projection: maps `h` to `xi = G^{1/2} h`, projects
/// onto the ball with weights `sqrt(g_inv_i) w_i` and the same radius, then
/// maps back through `G^{-1/2}`.
pub fn l1ball_project_vm(h: &[f64], ball: &WeightedL1Ball, metric: &DiagonalMetric) -> Result<Vec<f64>> {
    check_dim(ball.dim(), h.len())?;
    check_dim(ball.dim(), metric.dim())?;
    check_finite("h", h)?;
    if ball.contains(h) {
        return Ok(h.to_vec());
    }
    if metric.is_identity() {
        return l1ball_project(h, ball);
    }
    let sqrt_g_inv: Vec<f64> = metric.g_inv().iter().map(|g| g.sqrt()).collect();
    let xi: Vec<f64> = h.iter().zip(&sqrt_g_inv).map(|(x, s)| x / s).collect();
    let w: Vec<f64> = ball
        .weights()
        .iter()
        .zip(&sqrt_g_inv)
        .map(|(w, s)| w * s)
        .collect();
    let transformed = WeightedL1Ball::new(w, ball.radius())?;
    let xi = l1ball_project(&xi, &transformed)?;
    Ok(xi.iter().zip(&sqrt_g_inv).map(|(x, s)| x * s).collect())
}

/// Relaxed subgradient projection
/// `h - lambda * theta / ||theta'||^2_G * theta'` when `theta > 0`, else `h`.
pub fn subgradient_projection_step(
    h: &[f64],
    theta_value: f64,
    theta_subgrad: &[f64],
    lambda: f64,
    metric: &DiagonalMetric,
) -> Result<Vec<f64>> {
    check_dim(h.len(), theta_subgrad.len())?;
    check_dim(h.len(), metric.dim())?;
    if !(lambda > 0.0 && lambda < 2.0) {
        return Err(Error::InvalidInput(format!(
            "relaxation lambda = {lambda} must lie in (0, 2)"
        )));
    }
    if theta_value <= 0.0 {
        return Ok(h.to_vec());
    }
    let sq = metric.norm_sq_unchecked(theta_subgrad);
    if sq == 0.0 {
        return Err(Error::ContractViolation(format!(
            "positive loss {theta_value} with a zero subgradient"
        )));
    }
    let step = lambda * theta_value / sq;
    Ok(h.iter()
        .zip(theta_subgrad)
        .map(|(x, s)| x - step * s)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::oracles;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn metric(g: &[f64]) -> DiagonalMetric {
        DiagonalMetric::from_inverse_diagonal(g.to_vec()).unwrap()
    }

    fn random_metric(rng: &mut ChaCha8Rng, m: usize) -> DiagonalMetric {
        metric(&(0..m).map(|_| rng.gen_range(0.05..2.0)).collect::<Vec<_>>())
    }

    fn random_vec(rng: &mut ChaCha8Rng, m: usize, scale: f64) -> Vec<f64> {
        (0..m).map(|_| rng.gen_range(-scale..scale)).collect()
    }

    #[test]
    fn point_inside_slab_is_unchanged() {
        let s = Hyperslab::new(vec![1.0, 2.0], 3.0, 0.5).unwrap();
        let h = vec![1.0, 1.1];
        assert_eq!(hyperslab_project(&h, &s, &metric(&[0.3, 0.7])).unwrap(), h);
        assert_eq!(hyperslab_distance(&h, &s, &metric(&[0.3, 0.7])).unwrap(), 0.0);
    }

    #[test]
    fn identity_metric_reduces_to_hyperplane_projection() {
        let s = Hyperslab::new(vec![1.0, 0.0], 1.0, 0.0).unwrap();
        let p = hyperslab_project(&[0.0, 0.0], &s, &DiagonalMetric::identity(2)).unwrap();
        assert_eq!(p, vec![1.0, 0.0]);
    }

    #[test]
    fn three_dimensional_vm_projection_matches_oracle() {
        let g = metric(&[0.5, 0.3, 0.2]);
        let s = Hyperslab::new(vec![1.0, 2.0, -1.0], 2.0, 0.1).unwrap();
        let h = [0.0; 3];
        let p = hyperslab_project(&h, &s, &g).unwrap();
        let o = oracles::hyperslab_project_whitened(&h, &s, &g);
        for (a, b) in p.iter().zip(&o) {
            assert!((a - b).abs() < 1e-12);
        }
        // residual lands on the near face d - eps
        assert!((s.residual(&p) - 0.1).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(oracles::slab_projection_is_closest(&h, &p, &s, &g, 100, &mut rng, 1e-10));
    }

    #[test]
    fn euclidean_slab_distance_formula() {
        let s = Hyperslab::new(vec![3.0, 4.0], 10.0, 1.0).unwrap();
        let h = [0.0, 0.0];
        let dist = hyperslab_distance(&h, &s, &DiagonalMetric::identity(2)).unwrap();
        assert!((dist - 9.0 / 5.0).abs() < 1e-15);
        let s = Hyperslab::new(vec![3.0, 4.0], -10.0, 1.0).unwrap();
        let dist = hyperslab_distance(&h, &s, &DiagonalMetric::identity(2)).unwrap();
        assert!((dist - 9.0 / 5.0).abs() < 1e-15);
    }

    #[test]
    fn zero_regressor_slabs() {
        let g = DiagonalMetric::identity(2);
        let ok = Hyperslab::new(vec![0.0, 0.0], 0.1, 0.2).unwrap();
        assert_eq!(hyperslab_project(&[5.0, 6.0], &ok, &g).unwrap(), vec![5.0, 6.0]);
        let bad = Hyperslab::new(vec![0.0, 0.0], 1.0, 0.2).unwrap();
        assert!(matches!(
            hyperslab_project(&[5.0, 6.0], &bad, &g),
            Err(Error::InfeasibleSlab { .. })
        ));
        assert!(hyperslab_distance(&[5.0, 6.0], &bad, &g).is_err());
    }

    #[test]
    fn slab_distance_matches_projection_gap() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let m = rng.gen_range(1..7);
            let g = random_metric(&mut rng, m);
            let s = Hyperslab::new(random_vec(&mut rng, m, 2.0), rng.gen_range(-3.0..3.0), rng.gen_range(0.0..0.5)).unwrap();
            let h = random_vec(&mut rng, m, 3.0);
            let p = hyperslab_project(&h, &s, &g).unwrap();
            let d = hyperslab_distance(&h, &s, &g).unwrap();
            assert!((d - g.distance(&h, &p).unwrap()).abs() < 1e-12);
            assert!((d - oracles::hyperslab_distance_whitened(&h, &s, &g)).abs() < 1e-12);
            assert_eq!(d == 0.0, s.contains(&h));
        }
    }

    #[test]
    fn hyperslab_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..300 {
            let m = rng.gen_range(1..8);
            let g = random_metric(&mut rng, m);
            let s = Hyperslab::new(random_vec(&mut rng, m, 2.0), rng.gen_range(-3.0..3.0), rng.gen_range(0.0..0.5)).unwrap();
            let h1 = random_vec(&mut rng, m, 3.0);
            let h2 = random_vec(&mut rng, m, 3.0);
            let p1 = hyperslab_project(&h1, &s, &g).unwrap();
            let p2 = hyperslab_project(&h2, &s, &g).unwrap();
            // feasibility
            assert!(s.residual(&p1).abs() <= s.half_width() + 1e-9 * (1.0 + s.observation().abs()));
            // idempotence
            let pp = hyperslab_project(&p1, &s, &g).unwrap();
            assert!(g.distance(&pp, &p1).unwrap() <= 1e-10);
            // nonexpansive in the matching metric
            assert!(g.distance(&p1, &p2).unwrap() <= g.distance(&h1, &h2).unwrap() + 1e-10);
            // beta sign consistency
            let r = s.residual(&h1);
            let beta = s.beta(&h1, &g).unwrap();
            assert_eq!(beta > 0.0, r > s.half_width());
            assert_eq!(beta < 0.0, r < -s.half_width());
        }
    }

    #[test]
    fn ball_member_is_fixed() {
        let b = WeightedL1Ball::new(vec![1.0, 2.0], 3.0).unwrap();
        let h = vec![1.0, -0.5];
        assert_eq!(l1ball_project(&h, &b).unwrap(), h);
        assert_eq!(l1ball_project_vm(&h, &b, &metric(&[0.1, 0.9])).unwrap(), h);
        // exactly on the sphere
        let h = vec![1.0, -1.0];
        assert_eq!(l1ball_project(&h, &b).unwrap(), h);
    }

    #[test]
    fn unweighted_axis_point() {
        let b = WeightedL1Ball::new(vec![1.0, 1.0], 1.0).unwrap();
        assert_eq!(l1ball_project(&[2.0, 0.0], &b).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn ball_projection_matches_bisection() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..300 {
            let m = 6;
            let h = random_vec(&mut rng, m, 3.0);
            let w: Vec<f64> = (0..m).map(|_| rng.gen_range(0.1..10.0)).collect();
            let b = WeightedL1Ball::new(w, 1.0).unwrap();
            let x = l1ball_project(&h, &b).unwrap();
            let o = oracles::l1ball_project_bisection(&h, b.weights(), b.radius());
            for (a, c) in x.iter().zip(&o) {
                assert!((a - c).abs() <= 1e-8, "{x:?} vs {o:?}");
            }
            assert!(b.weighted_l1(&x) <= b.radius() * (1.0 + 1e-12));
            for (xi, hi) in x.iter().zip(&h) {
                assert!(*xi == 0.0 || xi.signum() == hi.signum());
            }
        }
    }

    #[test]
    fn tied_breakpoints() {
        let b = WeightedL1Ball::new(vec![1.0, 2.0, 0.5], 1.0).unwrap();
        let h = [2.0, -4.0, 1.0];
        let x = l1ball_project(&h, &b).unwrap();
        let o = oracles::l1ball_project_bisection(&h, b.weights(), b.radius());
        for (a, c) in x.iter().zip(&o) {
            assert!((a - c).abs() <= 1e-10);
        }
    }

    #[test]
    fn vm_ball_with_identity_metric_equals_euclidean() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = random_vec(&mut rng, 5, 4.0);
        let b = WeightedL1Ball::new(vec![1.0, 0.5, 2.0, 1.5, 0.7], 1.0).unwrap();
        assert_eq!(
            l1ball_project_vm(&h, &b, &DiagonalMetric::identity(5)).unwrap(),
            l1ball_project(&h, &b).unwrap()
        );
    }

    #[test]
    fn vm_ball_projection_is_g_closest() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..50 {
            let m = 5;
            let g = random_metric(&mut rng, m);
            let h = random_vec(&mut rng, m, 3.0);
            let w: Vec<f64> = (0..m).map(|_| rng.gen_range(0.2..5.0)).collect();
            let b = WeightedL1Ball::new(w, rng.gen_range(0.5..2.0)).unwrap();
            let x = l1ball_project_vm(&h, &b, &g).unwrap();
            assert!(b.weighted_l1(&x) <= b.radius() * (1.0 + 1e-12));
            assert!(oracles::ball_projection_is_closest(&h, &x, &b, &g, 200, &mut rng, 1e-10));
            // idempotent, nonexpansive
            let xx = l1ball_project_vm(&x, &b, &g).unwrap();
            assert!(g.distance(&xx, &x).unwrap() <= 1e-10);
            let h2 = random_vec(&mut rng, m, 3.0);
            let x2 = l1ball_project_vm(&h2, &b, &g).unwrap();
            assert!(g.distance(&x, &x2).unwrap() <= g.distance(&h, &h2).unwrap() + 1e-10);
        }
    }

    #[test]
    fn ball_rejects_bad_parameters() {
        assert!(WeightedL1Ball::new(vec![1.0, 0.0], 1.0).is_err());
        assert!(WeightedL1Ball::new(vec![1.0], 0.0).is_err());
        let b = WeightedL1Ball::new(vec![1.0], 1.0).unwrap();
        assert!(l1ball_project(&[f64::INFINITY], &b).is_err());
        assert!(l1ball_project(&[1.0, 2.0], &b).is_err());
    }

    #[test]
    fn subgradient_step_branches() {
        let g = DiagonalMetric::identity(3);
        let h = vec![1.0, 2.0, 2.0];
        assert_eq!(subgradient_projection_step(&h, 0.0, &[0.0; 3], 1.0, &g).unwrap(), h);
        // Theta(h) = ||h|| with subgradient h/||h||: lambda=1 lands on the origin.
        let n = 3.0;
        let sg: Vec<f64> = h.iter().map(|x| x / n).collect();
        let x = subgradient_projection_step(&h, n, &sg, 1.0, &g).unwrap();
        assert!(x.iter().all(|v| v.abs() < 1e-15));
        assert!(matches!(
            subgradient_projection_step(&h, 1.0, &[0.0; 3], 1.0, &g),
            Err(Error::ContractViolation(_))
        ));
        assert!(subgradient_projection_step(&h, 1.0, &sg, 2.0, &g).is_err());
    }
}
