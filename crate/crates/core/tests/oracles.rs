mod common;

use common::*;
use fwpomdp::belief::{bayes_update, filter_from_history, predict};
use fwpomdp::diagnostics::gaussian::normal_cdf;
use fwpomdp::diagnostics::{bound_constant_k, dobrushin};
use fwpomdp::distance::{bl_distance, tv_distance};
use fwpomdp::model::line_metric;
use fwpomdp::{Belief, HistoryWindow};
use proptest::prelude::*;

#[test]
fn tree_counts_follow_cayley() {
    for m in 1..=5 {
        assert_eq!(rooted_trees(m).len(), m.pow(m.saturating_sub(2) as u32));
    }
}

#[test]
fn vertex_oracle_matches_two_point_formula() {
    for &(p, q, d) in &[(1.0, 0.0, 1.0), (0.2, 0.7, 0.5), (0.9, 0.85, 4.0)] {
        let v = bl_vertex_oracle(&[p, 1.0 - p], &[q, 1.0 - q], &[vec![0.0, d], vec![d, 0.0]]);
        assert!((v - bl_two_point(p, q, d)).abs() < 1e-12);
    }
}

#[test]
fn normal_cdf_against_quadrature() {
    assert!((normal_cdf_quadrature(-1.0) - 0.158655).abs() < 1e-6);
    for i in -60..=60 {
        let x = i as f64 / 10.0;
        assert!((normal_cdf(x) - normal_cdf_quadrature(x)).abs() <= 1e-7, "x = {x}");
    }
}

#[test]
fn filter_step_by_hand() {
    // Case 1 from (0.1, 0.9) under u = 0: predictor (0.19, 0.81), y = 0 has
    // likelihood 0.19*0.7 + 0.81*0.3 = 0.376 and posterior (0.133/0.376, ...).
    let m = case(1);
    let z = Belief::new(vec![0.1, 0.9]).unwrap();
    let p = predict(&z, 0, &m);
    assert!((p[0] - 0.19).abs() < 1e-15);
    let (post, lik) = bayes_update(&z, 0, 0, &m).unwrap();
    assert!((lik - 0.376).abs() < 1e-15);
    assert!((post[0] - 0.133 / 0.376).abs() < 1e-15);
}

#[test]
fn window_probabilities_sum_to_one() {
    let m = case(2);
    let prior = Belief::new(vec![0.1, 0.9]).unwrap();
    let mut total = 0.0;
    for y0 in 0..2 {
        for u in 0..2 {
            for y1 in 0..2 {
                let w = HistoryWindow::new(vec![y0, y1], vec![u]).unwrap();
                if let Ok((_, p)) = filter_from_history(&prior, &w, &m) {
                    total += p;
                }
            }
        }
    }
    // Each action sequence contributes a full distribution over observations.
    assert!((total - 2.0).abs() < 1e-12);
}

fn belief_pair_with_metric() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<Vec<f64>>)> {
    (2usize..=4, any::<u64>()).prop_map(|(n, seed)| {
        let mut rng = fwpomdp::rng::sample_rng(seed, 0);
        (random_simplex(n, &mut rng), random_simplex(n, &mut rng), random_metric(n, &mut rng))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn lp_matches_vertex_oracle((a, b, d) in belief_pair_with_metric()) {
        let lp = bl_distance(&Belief::new(a.clone()).unwrap(), &Belief::new(b.clone()).unwrap(), &d);
        let oracle = bl_vertex_oracle(&a, &b, &d);
        prop_assert!((lp - oracle).abs() <= 1e-9, "lp {lp} oracle {oracle}");
    }

    #[test]
    fn k_matches_oracle(beta_frac in 0.01..0.99f64, az in 0.0..5.0f64, ac in 0.0..5.0f64, cs in 0.0..10.0f64) {
        let beta = beta_frac / (4.0 * az + 1.0);
        let c = bound_constant_k(beta, az, ac, cs).unwrap();
        let (j, k0, k0h, k) = k_oracle(beta, az, ac, cs);
        for (got, want) in [(c.j_bl_bound, j), (c.k0, k0), (c.k0_hat, k0h), (c.k, k)] {
            prop_assert!((got - want).abs() <= 1e-12 * want.abs().max(1e-300));
        }
    }

    #[test]
    fn dobrushin_bounds_tv_contraction(rows in proptest::collection::vec(proptest::collection::vec(0.01..1.0f64, 3), 3),
                                      p in proptest::collection::vec(0.0..1.0f64, 3),
                                      q in proptest::collection::vec(0.0..1.0f64, 3)) {
        // ||pK - qK||_1 <= (1 - delta) ||p - q||_1
        let k: Vec<Vec<f64>> = rows.iter().map(|r| { let s: f64 = r.iter().sum(); r.iter().map(|v| v / s).collect() }).collect();
        let norm = |v: &[f64]| { let s: f64 = v.iter().sum(); v.iter().map(|x| x / s).collect::<Vec<_>>() };
        prop_assume!(p.iter().sum::<f64>() > 1e-6 && q.iter().sum::<f64>() > 1e-6);
        let (p, q) = (Belief::new(norm(&p)).unwrap(), Belief::new(norm(&q)).unwrap());
        let push = |z: &Belief| Belief::normalized((0..3).map(|j| (0..3).map(|i| z[i] * k[i][j]).sum()).collect()).unwrap();
        let delta = dobrushin(&k).unwrap();
        prop_assert!(tv_distance(&push(&p), &push(&q)) <= (1.0 - delta) * tv_distance(&p, &q) + 1e-12);
    }

    #[test]
    fn two_point_lp_formula(p in 0.0..=1.0f64, q in 0.0..=1.0f64, d in 0.01..10.0f64) {
        let m = vec![vec![0.0, d], vec![d, 0.0]];
        let v = bl_distance(&Belief::new(vec![p, 1.0 - p]).unwrap(), &Belief::new(vec![q, 1.0 - q]).unwrap(), &m);
        prop_assert!((v - bl_two_point(p, q, d)).abs() <= 1e-9);
        let _ = line_metric(2);
    }
}
