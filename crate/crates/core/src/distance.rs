//! Total variation and bounded-Lipschitz distances between beliefs.
//!
//! The bounded-Lipschitz distance is the value of a small linear program.
//! With `w = a - b`:
//!
//! ```text
//! maximize    sum_x f[x] w[x]
//! subject to  |f[x]| <= s                      for all x
//!             f[x] - f[y] <= l * d(x, y)       for all ordered pairs x != y
//!             s + l <= 1,  s >= 0,  l >= 0
//! ```
//!
//! `s` bounds the sup norm of the test function and `l` its Lipschitz
//! constant, so `s + l <= 1` is the unit ball of the BL norm.

use minilp::{ComparisonOp, OptimizationDirection, Problem};

use crate::belief::Belief;

/// L1 distance between two beliefs, in `[0, 2]`.
pub fn tv_distance(a: &Belief, b: &Belief) -> f64 {
    tv_slices(a.weights(), b.weights())
}

pub(crate) fn tv_slices(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).abs()).sum()
}

/// Bounded-Lipschitz distance under `metric`, in `[0, 2]`.
pub fn bl_distance(a: &Belief, b: &Belief, metric: &[Vec<f64>]) -> f64 {
    bl_slices(a.weights(), b.weights(), metric)
}

pub(crate) fn bl_slices(a: &[f64], b: &[f64], metric: &[Vec<f64>]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    if a == b {
        return 0.0;
    }
    // Solve in a canonical argument order so the result is exactly symmetric.
    let (a, b) = match a.partial_cmp(b) {
        Some(std::cmp::Ordering::Greater) => (b, a),
        _ => (a, b),
    };
    let n = a.len();
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let f: Vec<_> = (0..n)
        .map(|x| lp.add_var(a[x] - b[x], (f64::NEG_INFINITY, f64::INFINITY)))
        .collect();
    let s = lp.add_var(0.0, (0.0, f64::INFINITY));
    let l = lp.add_var(0.0, (0.0, f64::INFINITY));
    for x in 0..n {
        lp.add_constraint([(f[x], 1.0), (s, -1.0)], ComparisonOp::Le, 0.0);
        lp.add_constraint([(f[x], -1.0), (s, -1.0)], ComparisonOp::Le, 0.0);
        for y in 0..n {
            if x != y {
                lp.add_constraint([(f[x], 1.0), (f[y], -1.0), (l, -metric[x][y])], ComparisonOp::Le, 0.0);
            }
        }
    }
    lp.add_constraint([(s, 1.0), (l, 1.0)], ComparisonOp::Le, 1.0);
    let solution = lp
        .solve()
        .expect("BL program is feasible (f = 0) and bounded (|f| <= 1)");
    // The optimum is nonnegative (f = 0 is feasible); clamp solver round-off.
    solution.objective().clamp(0.0, 2.0)
}

/// Ratio `kappa` such that `kappa * tv <= bl <= tv` for every pair of
/// beliefs under `metric`: the test function `s * sign(a - b)` with
/// `s = d_min / (2 + d_min)` is BL-feasible.
pub fn bl_lower_ratio(metric: &[Vec<f64>]) -> f64 {
    let n = metric.len();
    let mut d_min = f64::INFINITY;
    for x in 0..n {
        for y in 0..n {
            if x != y {
                d_min = d_min.min(metric[x][y]);
            }
        }
    }
    if !d_min.is_finite() {
        // Single state: every pair of beliefs coincides.
        return 1.0;
    }
    d_min / (2.0 + d_min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::line_metric;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn b(w: &[f64]) -> Belief {
        Belief::new(w.to_vec()).unwrap()
    }

    fn two_point(d: f64) -> Vec<Vec<f64>> {
        vec![vec![0.0, d], vec![d, 0.0]]
    }

    #[test]
    fn tv_examples() {
        assert_eq!(tv_distance(&b(&[1.0, 0.0]), &b(&[0.0, 1.0])), 2.0);
        assert_abs_diff_eq!(tv_distance(&b(&[0.1, 0.9]), &b(&[0.19, 0.81])), 0.18, epsilon = 1e-15);
        assert_eq!(tv_distance(&b(&[0.3, 0.7]), &b(&[0.3, 0.7])), 0.0);
    }

    #[test]
    fn bl_two_point_disjoint() {
        let v = bl_distance(&b(&[1.0, 0.0]), &b(&[0.0, 1.0]), &line_metric(2));
        assert_abs_diff_eq!(v, 2.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn bl_identity() {
        let z = b(&[0.2, 0.5, 0.3]);
        assert_eq!(bl_distance(&z, &z, &line_metric(3)), 0.0);
    }

    #[test]
    fn lower_ratio_is_tight_on_two_points() {
        let m = two_point(1.0);
        let (p, q) = (b(&[0.2, 0.8]), b(&[0.7, 0.3]));
        assert_abs_diff_eq!(bl_distance(&p, &q, &m), bl_lower_ratio(&m) * tv_distance(&p, &q), epsilon = 1e-12);
    }

    fn simplex(n: usize) -> impl Strategy<Value = Belief> {
        proptest::collection::vec(0.0..1.0f64, n).prop_filter_map("positive mass", |w| {
            let s: f64 = w.iter().sum();
            (s > 1e-9).then(|| Belief::normalized(w).unwrap())
        })
    }

    fn metric(n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        // Points on a line give a valid metric with arbitrary spacing.
        proptest::collection::vec(0.05..2.0f64, n).prop_map(|gaps| {
            let mut pos = vec![0.0];
            for g in gaps.iter().take(gaps.len() - 1) {
                pos.push(pos.last().unwrap() + g);
            }
            pos.iter().map(|a| pos.iter().map(|b| (a - b).abs()).collect()).collect()
        })
    }

    fn case() -> impl Strategy<Value = (Belief, Belief, Belief, Vec<Vec<f64>>)> {
        (2usize..=5).prop_flat_map(|n| (simplex(n), simplex(n), simplex(n), metric(n)))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn two_point_closed_form(p in 0.0..=1.0f64, q in 0.0..=1.0f64, d in 0.01..10.0f64) {
            let v = bl_distance(&b(&[p, 1.0 - p]), &b(&[q, 1.0 - q]), &two_point(d));
            prop_assert!((v - (p - q).abs() * 2.0 * d / (2.0 + d)).abs() <= 1e-9);
        }

        #[test]
        fn bl_is_a_metric_and_below_tv((x, y, z, m) in case()) {
            let dxy = bl_distance(&x, &y, &m);
            prop_assert_eq!(dxy, bl_distance(&y, &x, &m));
            prop_assert!(dxy <= bl_distance(&x, &z, &m) + bl_distance(&z, &y, &m) + 1e-9);
            prop_assert!(dxy <= tv_distance(&x, &y).min(2.0) + 1e-12);
            prop_assert!(dxy >= bl_lower_ratio(&m) * tv_distance(&x, &y) - 1e-12);
        }

        #[test]
        fn scaling_metric_up_never_decreases((x, y, _z, m) in case(), k in 1.0..4.0f64) {
            let scaled: Vec<Vec<f64>> = m.iter().map(|r| r.iter().map(|v| v * k).collect()).collect();
            prop_assert!(bl_distance(&x, &y, &scaled) >= bl_distance(&x, &y, &m) - 1e-12);
        }
    }
}
