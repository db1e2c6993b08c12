//! Reference computations that share no code with the library.
#![allow(dead_code)]

use fwpomdp::model::{build_machine_repair, MachineRepairParams};
use fwpomdp::PomdpModel;
use rand::Rng;

pub fn case(id: u8) -> PomdpModel {
    build_machine_repair(&MachineRepairParams::case(id).unwrap()).unwrap()
}

/// Edges of the labelled tree on `m` nodes encoded by a Prüfer sequence.
fn prufer_edges(seq: &[usize], m: usize) -> Vec<(usize, usize)> {
    let mut degree = vec![1usize; m];
    for &v in seq {
        degree[v] += 1;
    }
    let mut edges = Vec::with_capacity(m - 1);
    for &v in seq {
        let leaf = (0..m).find(|&u| degree[u] == 1).unwrap();
        edges.push((leaf, v));
        degree[leaf] -= 1;
        degree[v] -= 1;
    }
    let rest: Vec<usize> = (0..m).filter(|&u| degree[u] == 1).collect();
    edges.push((rest[0], rest[1]));
    edges
}

/// Every spanning tree of the complete graph on `m` nodes, as
/// (child, parent) pairs listed so parents come before their children,
/// rooted at node 0.
pub fn rooted_trees(m: usize) -> Vec<Vec<(usize, usize)>> {
    if m == 1 {
        return vec![vec![]];
    }
    let len = m - 2;
    let total = m.pow(len as u32);
    let mut out = Vec::with_capacity(total);
    for code in 0..total {
        let mut c = code;
        let seq: Vec<usize> = (0..len)
            .map(|_| {
                let v = c % m;
                c /= m;
                v
            })
            .collect();
        let edges = prufer_edges(&seq, m);
        let mut order = Vec::with_capacity(m - 1);
        let mut seen = vec![false; m];
        seen[0] = true;
        let mut frontier = vec![0];
        while let Some(p) = frontier.pop() {
            for &(a, b) in &edges {
                let child = if a == p && !seen[b] {
                    b
                } else if b == p && !seen[a] {
                    a
                } else {
                    continue;
                };
                seen[child] = true;
                order.push((child, p));
                frontier.push(child);
            }
        }
        out.push(order);
    }
    out
}

/// Tightest `[lo, hi]` with `c0 + c1*s <= 0` for every constraint, within `[0, 1]`.
fn feasible_interval(cons: &[(f64, f64)]) -> Option<(f64, f64)> {
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for &(c0, c1) in cons {
        if c1.abs() < 1e-14 {
            if c0 > 1e-12 {
                return None;
            }
        } else if c1 > 0.0 {
            hi = hi.min(-c0 / c1);
        } else {
            lo = lo.max(-c0 / c1);
        }
    }
    (lo <= hi + 1e-12).then_some((lo, hi.max(lo)))
}

/// Exact BL distance by vertex enumeration.
///
/// A virtual node with `f = 0` joins the states; an edge to it has length
/// `s`, an edge between states `x, y` has length `l*d(x,y)` with `l = 1 - s`.
/// Every vertex of the feasible set fixes `f` along a spanning tree of tight
/// edges, so `f` is affine in `s` for each tree and orientation, and the
/// objective peaks at an end of the feasible `s` interval.
pub fn bl_vertex_oracle(a: &[f64], b: &[f64], d: &[Vec<f64>]) -> f64 {
    let n = a.len();
    let w: Vec<f64> = a.iter().zip(b).map(|(p, q)| p - q).collect();
    let mut best = 0.0_f64;
    for tree in rooted_trees(n + 1) {
        for mask in 0..(1usize << n) {
            // f at node k is s*sc[k] + l*lc[k].
            let (mut sc, mut lc) = (vec![0.0; n + 1], vec![0.0; n + 1]);
            for (e, &(child, parent)) in tree.iter().enumerate() {
                let sign = if mask >> e & 1 == 1 { 1.0 } else { -1.0 };
                sc[child] = sc[parent];
                lc[child] = lc[parent];
                if parent == 0 {
                    sc[child] += sign;
                } else {
                    lc[child] += sign * d[parent - 1][child - 1];
                }
            }
            // With l = 1 - s, f_x(s) = lc + (sc - lc) s.
            let f0: Vec<f64> = (1..=n).map(|k| lc[k]).collect();
            let f1: Vec<f64> = (1..=n).map(|k| sc[k] - lc[k]).collect();
            let mut cons = Vec::new();
            for x in 0..n {
                cons.push((f0[x], f1[x] - 1.0));
                cons.push((-f0[x], -f1[x] - 1.0));
                for y in 0..n {
                    if x != y {
                        cons.push((f0[x] - f0[y] - d[x][y], f1[x] - f1[y] + d[x][y]));
                    }
                }
            }
            if let Some((lo, hi)) = feasible_interval(&cons) {
                for s in [lo, hi] {
                    let v: f64 = (0..n).map(|x| w[x] * (f0[x] + f1[x] * s)).sum();
                    best = best.max(v);
                }
            }
        }
    }
    best
}

/// Brute-force BL distance on a grid of the sup/Lipschitz split.
///
/// For each `s` on a grid of spacing `step` (and `l = 1 - s`), the best test
/// function is 1-Lipschitz for the truncated metric `min(l*d, 2s)` up to a
/// shift; candidates are built along spanning trees and kept only when they
/// satisfy every pairwise constraint.
pub fn bl_grid_oracle(a: &[f64], b: &[f64], d: &[Vec<f64>], step: f64) -> f64 {
    let n = a.len();
    let w: Vec<f64> = a.iter().zip(b).map(|(p, q)| p - q).collect();
    let trees = rooted_trees(n);
    let steps = (1.0 / step).round() as usize;
    let mut best = 0.0_f64;
    for k in 0..=steps {
        let s = k as f64 * step;
        let l = 1.0 - s;
        let dt: Vec<Vec<f64>> = d.iter().map(|r| r.iter().map(|v| (l * v).min(2.0 * s)).collect()).collect();
        for tree in &trees {
            for mask in 0..(1usize << tree.len()) {
                let mut f = vec![0.0; n];
                for (e, &(child, parent)) in tree.iter().enumerate() {
                    let sign = if mask >> e & 1 == 1 { 1.0 } else { -1.0 };
                    f[child] = f[parent] + sign * dt[parent][child];
                }
                let feasible = (0..n).all(|x| (0..n).all(|y| f[x] - f[y] <= dt[x][y] + 1e-12));
                if feasible {
                    // Centre the range so that |f| <= s.
                    let (mn, mx) = f.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
                    let mid = 0.5 * (mn + mx);
                    let v: f64 = (0..n).map(|x| w[x] * (f[x] - mid)).sum();
                    best = best.max(v);
                }
            }
        }
    }
    best
}

/// Closed form for two points at distance `d`.
pub fn bl_two_point(p: f64, q: f64, d: f64) -> f64 {
    (p - q).abs() * 2.0 * d / (2.0 + d)
}

/// The bound constants written out as one product, term by term.
pub fn k_oracle(beta: f64, az: f64, ac: f64, cs: f64) -> (f64, f64, f64, f64) {
    let act = ac + cs;
    let one_minus_baz = 1.0 - beta * az;
    let denom = 1.0 - 4.0 * beta * az - beta;
    let j = cs / ((1.0 - beta) * one_minus_baz) + act / one_minus_baz;
    let lead = ac + beta * az * j;
    let k0 = lead / denom;
    let bracket = 2.0 / denom + 3.0 * az / one_minus_baz + 9.0 * az * az / (denom * denom);
    let k0_hat = lead * bracket;
    let k = lead / (1.0 - beta) * (1.0 + (1.0 + beta) / denom + beta * az * bracket);
    (j, k0, k0_hat, k)
}

/// Standard normal CDF by composite Simpson quadrature of the density.
pub fn normal_cdf_quadrature(x: f64) -> f64 {
    let lo = -12.0;
    if x <= lo {
        return 0.0;
    }
    let m = 20_000;
    let h = (x - lo) / m as f64;
    let phi = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut acc = phi(lo) + phi(x);
    for i in 1..m {
        let t = lo + i as f64 * h;
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * phi(t);
    }
    acc * h / 3.0
}

pub fn random_simplex<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0f64)).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Random metric: shortest paths over random positive edge weights.
pub fn random_metric<R: Rng>(n: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut d = vec![vec![0.0; n]; n];
    for x in 0..n {
        for y in x + 1..n {
            let v = rng.gen_range(0.1..3.0f64);
            d[x][y] = v;
            d[y][x] = v;
        }
    }
    for k in 0..n {
        for x in 0..n {
            for y in 0..n {
                if d[x][k] + d[k][y] < d[x][y] {
                    d[x][y] = d[x][k] + d[k][y];
                }
            }
        }
    }
    d
}
