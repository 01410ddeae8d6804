use proptest::prelude::*;

use apsm_core::diagnostics::oracles::{hyperslab_project_whitened, l1ball_project_bisection};
use apsm_core::diagnostics::{subgradient_form_step, theta_eval};
use apsm_core::learner::{extrapolation_coeff, node_update};
use apsm_core::network::{combine, consensus_distance_sq, consensus_projection};
use apsm_core::*;

fn positive(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..3.0, len)
}

fn values(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-4.0f64..4.0, len)
}

/// Random connected graph: a spanning path plus extra edges.
fn topology() -> impl Strategy<Value = Topology> {
    (1usize..9).prop_flat_map(|n| {
        prop::collection::vec((0..n, 0..n), 0..2 * n).prop_map(move |extra| {
            let mut edges: Vec<(usize, usize)> = (1..n).map(|k| (k - 1, k)).collect();
            edges.extend(extra.into_iter().filter(|(a, b)| a != b));
            Topology::from_edges(n, &edges).unwrap()
        })
    })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

proptest! {
    #[test]
    fn l1_projection_is_feasible_idempotent_and_matches_bisection(
        (h, w) in (1usize..10).prop_flat_map(|m| (values(m), positive(m))),
        rho in 0.01f64..5.0,
    ) {
        let ball = WeightedL1Ball::new(w.clone(), rho).unwrap();
        let x = l1ball_project(&h, &ball).unwrap();
        prop_assert!(ball.weighted_l1(&x) <= rho * (1.0 + 1e-12));
        let again = l1ball_project(&x, &ball).unwrap();
        for (a, b) in x.iter().zip(&again) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        for (a, b) in x.iter().zip(l1ball_project_bisection(&h, &w, rho)) {
            prop_assert!((a - b).abs() <= 1e-8);
        }
        // signs are kept and magnitudes shrink
        for (a, b) in x.iter().zip(&h) {
            prop_assert!(a * b >= 0.0 && a.abs() <= b.abs());
        }
    }

    #[test]
    fn vm_projection_with_identity_metric_matches_euclidean(
        (h, w) in (1usize..10).prop_flat_map(|m| (values(m), positive(m))),
        rho in 0.01f64..5.0,
    ) {
        let ball = WeightedL1Ball::new(w, rho).unwrap();
        let g = DiagonalMetric::from_inverse_diagonal(vec![1.0; h.len()]).unwrap();
        let a = l1ball_project_vm(&h, &ball, &g).unwrap();
        let b = l1ball_project(&h, &ball).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn hyperslab_projection_lands_in_slab_and_matches_whitened_form(
        (h, u, g) in (1usize..10).prop_flat_map(|m| (values(m), values(m), positive(m))),
        d in -5.0f64..5.0,
        eps in 0.0f64..1.0,
    ) {
        prop_assume!(norm(&u) > 1e-3);
        let slab = Hyperslab::new(u, d, eps).unwrap();
        let metric = DiagonalMetric::from_inverse_diagonal(g).unwrap();
        let p = hyperslab_project(&h, &slab, &metric).unwrap();
        prop_assert!(slab.residual(&p).abs() <= eps + 1e-9);
        let q = hyperslab_project(&p, &slab, &metric).unwrap();
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
        for (a, b) in p.iter().zip(hyperslab_project_whitened(&h, &slab, &metric)) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + norm(&h)));
        }
        let dist = hyperslab_distance(&h, &slab, &metric).unwrap();
        prop_assert!((dist - metric.distance(&h, &p).unwrap()).abs() <= 1e-9 * (1.0 + dist));
    }

    #[test]
    fn extrapolation_coefficient_is_at_least_one(
        (phi, ps) in (1usize..6).prop_flat_map(|m| (values(m), prop::collection::vec(values(m), 1..6))),
        g in positive(6),
    ) {
        let m = phi.len();
        let metric = DiagonalMetric::from_inverse_diagonal(g[..m].to_vec()).unwrap();
        let omega = vec![1.0 / ps.len() as f64; ps.len()];
        for norm in [ExtrapolationNorm::Metric, ExtrapolationNorm::Euclidean] {
            let c = extrapolation_coeff(&phi, &ps, &omega, &metric, norm).unwrap();
            prop_assert!(c >= 1.0 - 1e-12, "{c}");
        }
    }

    #[test]
    fn node_update_matches_subgradient_form(
        (phi, g, slabs) in (2usize..7).prop_flat_map(|m| (
            values(m),
            positive(m),
            prop::collection::vec((values(m), -3.0f64..3.0, 0.0f64..0.5), 1..6),
        )),
        lambda in 0.05f64..1.95,
        rho in 0.2f64..5.0,
        use_ball in any::<bool>(),
    ) {
        let m = phi.len();
        let metric = DiagonalMetric::from_inverse_diagonal(g).unwrap();
        let slabs: Vec<Hyperslab> = slabs
            .into_iter()
            .filter(|(u, _, _)| norm(u) > 1e-3)
            .map(|(u, d, e)| Hyperslab::new(u, d, e).unwrap())
            .collect();
        prop_assume!(!slabs.is_empty());
        let refs: Vec<&Hyperslab> = slabs.iter().collect();
        let omega = vec![1.0 / refs.len() as f64; refs.len()];
        let ball = use_ball.then(|| WeightedL1Ball::new(vec![1.0; m], rho).unwrap());
        let params = NodeParams { metric: metric.clone(), ball: ball.clone() };
        let a = node_update(&phi, &refs, &omega, &params, lambda, ExtrapolationNorm::Metric).unwrap();
        let b = subgradient_form_step(&phi, &refs, &omega, ball.as_ref(), &metric, lambda).unwrap();
        let gap: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        prop_assert!(norm(&gap) <= 1e-10 * (1.0 + norm(&phi)));
        let t = theta_eval(&phi, &refs, &omega, &metric).unwrap();
        prop_assert!(metric.norm(&t.subgrad).unwrap() <= 1.0 + 1e-10);
        prop_assert!(t.value >= 0.0);
    }

    #[test]
    fn metropolis_fusion_is_linear_mean_preserving_and_nonexpansive(
        topo in topology(),
        m in 1usize..5,
        seed in any::<u64>(),
        a in -2.0f64..2.0,
        b in -2.0f64..2.0,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let k = topo.len();
        let c = CombinationMatrix::metropolis(&topo);
        let mut draw = |len: usize| -> Vec<f64> { (0..len).map(|_| rng.gen_range(-3.0..3.0)).collect() };
        let s1 = NetworkState::from_stacked(k, m, draw(k * m)).unwrap();
        let s2 = NetworkState::from_stacked(k, m, draw(k * m)).unwrap();
        let point = NetworkState::replicated(k, &draw(m));
        let metric = DiagonalMetric::from_inverse_diagonal(draw(m).iter().map(|x| x.abs() + 0.05).collect()).unwrap();

        let lhs = combine(&s1.lin_comb(a, &s2, b).unwrap(), &c).unwrap();
        let rhs = combine(&s1, &c).unwrap().lin_comb(a, &combine(&s2, &c).unwrap(), b).unwrap();
        for (x, y) in lhs.stacked().iter().zip(rhs.stacked()) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
        let fused = combine(&s1, &c).unwrap();
        for (x, y) in consensus_projection(&fused).stacked().iter().zip(consensus_projection(&s1).stacked()) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
        prop_assert!(consensus_distance_sq(&fused) <= consensus_distance_sq(&s1) + 1e-12);
        let after = fused.metric_distance(&point, &metric).unwrap();
        let before = s1.metric_distance(&point, &metric).unwrap();
        prop_assert!(after <= before + 1e-12);
        for row in 0..k {
            prop_assert_eq!(c.row_sum(row), 1.0);
        }
    }
}
