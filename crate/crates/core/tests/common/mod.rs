//! Hand-built tangles and an independent exit-distribution oracle shared by
//! the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use tangle_sim::{snapshot, LogicalId, Tangle, VertexId, View};

/// Attaches `edges[i]` as vertex `i + 1` at time `i + 1`, each its own
/// logical transaction.
pub fn build(edges: &[(u32, u32)]) -> Tangle {
    let mut t = Tangle::new();
    for (i, &(a, b)) in edges.iter().enumerate() {
        t.attach((VertexId(a), VertexId(b)), (i + 1) as f64, 0, LogicalId(i as u32))
            .unwrap();
    }
    t
}

/// The whole tangle as one view.
pub fn full(t: &Tangle) -> View<'_> {
    snapshot(t, t.newest_timestamp() + 1.0, 0.0)
}

/// Five small tangles with parallel edges, uneven weights and tips at
/// several depths.
pub fn hand_dags() -> Vec<(&'static str, Vec<(u32, u32)>)> {
    vec![
        ("diamond", vec![(0, 0), (0, 0), (1, 2)]),
        ("double_edge", vec![(0, 0), (1, 1), (2, 1), (2, 3)]),
        (
            "long_chain",
            vec![(0, 0), (1, 1), (2, 1), (3, 2), (4, 3), (5, 4), (6, 5), (7, 6), (8, 2), (7, 9), (10, 3)],
        ),
        ("fan", vec![(0, 0), (0, 0), (0, 0), (0, 0), (0, 0), (1, 2), (3, 4), (6, 7), (5, 5), (6, 1)]),
        ("lopsided", vec![(0, 0), (0, 1), (1, 2), (2, 3), (3, 3), (1, 1), (4, 6), (6, 7), (8, 5), (7, 7), (2, 10)]),
    ]
}

/// `H(x)` by direct reachability: one plus the number of vertices with a
/// path to `x`.
pub fn brute_weights(t: &Tangle) -> Vec<u32> {
    let n = t.len();
    (0..n)
        .map(|x| {
            let mut seen = vec![false; n];
            let mut stack = vec![x];
            let mut count = 0;
            while let Some(v) = stack.pop() {
                for &z in t.approvers(VertexId(v as u32)) {
                    if !seen[z.index()] {
                        seen[z.index()] = true;
                        count += 1;
                        stack.push(z.index());
                    }
                }
            }
            1 + count
        })
        .collect()
}

/// Exit distribution of the walk on the full tangle by pushing probability
/// mass until less than `1e-15` remains on transient vertices. Backtracking
/// picks one of the two parent slots uniformly, forward steps pick an
/// approver slot with weight `exp(-alpha * (H(x) - H(y)))`.
pub fn pushed_exit(t: &Tangle, alpha: f64, q: f64) -> BTreeMap<VertexId, f64> {
    let n = t.len();
    let h = brute_weights(t);
    let mut mass = vec![0.0; n];
    mass[0] = 1.0;
    let mut absorbed: BTreeMap<VertexId, f64> = BTreeMap::new();
    for _ in 0..1_000_000 {
        let mut next = vec![0.0; n];
        let mut transient = 0.0;
        for x in 0..n {
            let m = mass[x];
            if m == 0.0 {
                continue;
            }
            let approvers = t.approvers(VertexId(x as u32));
            if approvers.is_empty() {
                *absorbed.entry(VertexId(x as u32)).or_default() += m;
                continue;
            }
            let back = if x == 0 { 0.0 } else { q };
            for p in t.parents(VertexId(x as u32)) {
                next[p.index()] += m * back / 2.0;
            }
            let w: Vec<f64> = approvers.iter().map(|y| (-alpha * (h[x] - h[y.index()]) as f64).exp()).collect();
            let total: f64 = w.iter().sum();
            for (y, wy) in approvers.iter().zip(&w) {
                next[y.index()] += m * (1.0 - back) * wy / total;
            }
        }
        for (x, m) in next.iter().enumerate() {
            if !t.approvers(VertexId(x as u32)).is_empty() {
                transient += m;
            }
        }
        mass = next;
        if transient < 1e-15 {
            for (x, &m) in mass.iter().enumerate() {
                if m > 0.0 && t.approvers(VertexId(x as u32)).is_empty() {
                    *absorbed.entry(VertexId(x as u32)).or_default() += m;
                }
            }
            return absorbed;
        }
    }
    panic!("mass did not drain");
}
