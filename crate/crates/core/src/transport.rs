//! Optimal transport (earth mover's) cost between two distributions on a
//! finite metric.
//!
//! The dispatcher uses a closed form when the metric carries structure
//! (uniform, line, tree), exhaustive basis enumeration for at most three
//! states, and successive shortest paths on the residual network otherwise.

use crate::metric::{FiniteMetric, Structure, TreeShape};

const MASS_EPS: f64 = 1e-15;

/// Transport cost between `p` and `q` under `m` (unweighted: no `s` factor).
pub fn transport_cost(m: &FiniteMetric, p: &[f64], q: &[f64]) -> f64 {
    debug_assert_eq!(p.len(), m.len());
    debug_assert_eq!(q.len(), m.len());
    match m.structure() {
        Structure::Uniform(d) => uniform_cost(*d, p, q),
        Structure::Line(pos) => line_cost(pos, p, q),
        Structure::Tree(t) => tree_cost(t, p, q),
        Structure::General if m.len() <= 3 => enumeration_cost(m, p, q),
        Structure::General => ssp_cost(m, p, q),
    }
}

/// Same as [`transport_cost`] but never uses a structural closed form.
pub fn transport_cost_generic(m: &FiniteMetric, p: &[f64], q: &[f64]) -> f64 {
    if m.len() <= 3 {
        enumeration_cost(m, p, q)
    } else {
        ssp_cost(m, p, q)
    }
}

pub fn uniform_cost(d: f64, p: &[f64], q: &[f64]) -> f64 {
    d * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>() / 2.0
}

/// CDF-difference formula for points at increasing `positions`.
pub fn line_cost(positions: &[f64], p: &[f64], q: &[f64]) -> f64 {
    let mut cum = 0.0;
    let mut total = 0.0;
    for i in 0..positions.len().saturating_sub(1) {
        cum += p[i] - q[i];
        total += cum.abs() * (positions[i + 1] - positions[i]);
    }
    total
}

/// Edge-flow formula on a tree: every edge carries the net surplus below it.
pub fn tree_cost(t: &TreeShape, p: &[f64], q: &[f64]) -> f64 {
    let mut surplus = vec![0.0; t.parent.len()];
    for i in 0..p.len() {
        surplus[i] = p[i] - q[i];
    }
    let order = t.topological_order();
    let mut total = 0.0;
    for &v in order.iter().rev() {
        let par = t.parent[v];
        if par != usize::MAX {
            total += t.weight[v] * surplus[v].abs();
            surplus[par] += surplus[v];
        }
    }
    total
}

/// Exhaustive enumeration of the basic solutions of the transportation
/// polytope: every spanning tree of the complete bipartite graph with `2n-1`
/// edges determines one candidate plan; the cheapest feasible one is optimal.
pub fn enumeration_cost(m: &FiniteMetric, p: &[f64], q: &[f64]) -> f64 {
    let n = m.len();
    if n == 1 {
        return 0.0;
    }
    let edges: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let k = 2 * n - 1;
    let mut best = f64::INFINITY;
    let mut chosen = Vec::with_capacity(k);
    subsets(edges.len(), k, 0, &mut chosen, &mut |sel| {
        let es: Vec<(usize, usize)> = sel.iter().map(|&e| edges[e]).collect();
        if let Some(flow) = tree_flow(n, &es, p, q) {
            if flow.iter().all(|f| *f >= -1e-12) {
                let c: f64 = es.iter().zip(&flow).map(|(&(i, j), f)| f * m.d(i, j)).sum();
                best = best.min(c);
            }
        }
    });
    best.max(0.0)
}

fn subsets(m: usize, k: usize, start: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
    if cur.len() == k {
        f(cur);
        return;
    }
    for e in start..m {
        if m - e < k - cur.len() {
            break;
        }
        cur.push(e);
        subsets(m, k, e + 1, cur, f);
        cur.pop();
    }
}

/// Solves the flow on a spanning tree of the bipartite graph (rows are
/// sources with supply `p`, columns sinks with demand `q`) by leaf peeling.
/// Returns `None` when the edge set is not a spanning tree.
fn tree_flow(n: usize, es: &[(usize, usize)], p: &[f64], q: &[f64]) -> Option<Vec<f64>> {
    // nodes 0..n are rows, n..2n columns
    let mut deg = vec![0usize; 2 * n];
    for &(i, j) in es {
        deg[i] += 1;
        deg[n + j] += 1;
    }
    if deg.iter().any(|d| *d == 0) {
        return None;
    }
    let mut rest: Vec<f64> = p.iter().chain(q.iter()).copied().collect();
    let mut flow = vec![f64::NAN; es.len()];
    let mut alive = vec![true; es.len()];
    let mut remaining = es.len();
    while remaining > 0 {
        let leaf = (0..2 * n).find(|&v| deg[v] == 1)?;
        let e = (0..es.len()).find(|&e| alive[e] && (es[e].0 == leaf || n + es[e].1 == leaf))?;
        let other = if es[e].0 == leaf { n + es[e].1 } else { es[e].0 };
        let f = rest[leaf];
        flow[e] = f;
        rest[leaf] = 0.0;
        rest[other] -= f;
        alive[e] = false;
        deg[leaf] -= 1;
        deg[other] -= 1;
        remaining -= 1;
    }
    if rest.iter().any(|r| r.abs() > 1e-9) {
        return None;
    }
    Some(flow)
}

/// Successive shortest augmenting paths on the residual network of the
/// (cancelled) transportation problem.
pub fn ssp_cost(m: &FiniteMetric, p: &[f64], q: &[f64]) -> f64 {
    let n = m.len();
    let mut supply: Vec<f64> = (0..n).map(|i| (p[i] - q[i]).max(0.0)).collect();
    let mut demand: Vec<f64> = (0..n).map(|i| (q[i] - p[i]).max(0.0)).collect();
    let srcs: Vec<usize> = (0..n).filter(|&i| supply[i] > MASS_EPS).collect();
    let snks: Vec<usize> = (0..n).filter(|&j| demand[j] > MASS_EPS).collect();
    if srcs.is_empty() || snks.is_empty() {
        return 0.0;
    }
    let (a, b) = (srcs.len(), snks.len());
    let mut flow = vec![vec![0.0; b]; a];
    let cost = |x: usize, y: usize| m.d(srcs[x], snks[y]);
    let mut total = 0.0;
    for _ in 0..(4 * (a + b) * (a + b) + 16) {
        if srcs.iter().all(|&s| supply[s] <= MASS_EPS) || snks.iter().all(|&t| demand[t] <= MASS_EPS) {
            break;
        }
        // Bellman-Ford over nodes 0..a (sources) and a..a+b (sinks).
        let nn = a + b;
        let mut dist = vec![f64::INFINITY; nn];
        let mut pred = vec![usize::MAX; nn];
        for x in 0..a {
            if supply[srcs[x]] > MASS_EPS {
                dist[x] = 0.0;
            }
        }
        for _ in 0..nn {
            let mut changed = false;
            for x in 0..a {
                if dist[x].is_finite() {
                    for y in 0..b {
                        let nd = dist[x] + cost(x, y);
                        if nd < dist[a + y] - 1e-15 {
                            dist[a + y] = nd;
                            pred[a + y] = x;
                            changed = true;
                        }
                    }
                }
            }
            for y in 0..b {
                if dist[a + y].is_finite() {
                    for x in 0..a {
                        if flow[x][y] > MASS_EPS {
                            let nd = dist[a + y] - cost(x, y);
                            if nd < dist[x] - 1e-15 {
                                dist[x] = nd;
                                pred[x] = a + y;
                                changed = true;
                            }
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let target = (0..b)
            .filter(|&y| demand[snks[y]] > MASS_EPS && dist[a + y].is_finite())
            .min_by(|&u, &v| dist[a + u].total_cmp(&dist[a + v]));
        let Some(ty) = target else { break };
        // Walk back to the originating source, collecting the bottleneck.
        let mut path = Vec::new();
        let mut node = a + ty;
        let mut amount = demand[snks[ty]];
        let mut guard = 0;
        loop {
            let pr = pred[node];
            if node < a && pr == usize::MAX {
                amount = amount.min(supply[srcs[node]]);
                break;
            }
            path.push((pr, node));
            if node < a {
                // backward edge node(source) <- pr(sink): capacity is flow
                amount = amount.min(flow[node][pr - a]);
            }
            node = pr;
            guard += 1;
            if guard > 2 * nn {
                break;
            }
        }
        let start = node;
        if !(amount > 0.0) {
            break;
        }
        for &(from, to) in &path {
            if from < a {
                flow[from][to - a] += amount;
                total += amount * cost(from, to - a);
            } else {
                flow[to][from - a] -= amount;
                total -= amount * cost(to, from - a);
            }
        }
        supply[srcs[start]] -= amount;
        demand[snks[ty]] -= amount;
    }
    total.max(0.0)
}
