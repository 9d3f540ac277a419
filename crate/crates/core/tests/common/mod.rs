//! Reference oracles and fixtures for the integration tests. The oracles
//! (path search, LP enumeration, closed forms) share no code with the
//! library.

#![allow(dead_code)]

use rand::Rng;
use std::sync::Arc;

use umtslab::algo::{variant_with, OddExponent, Trivial, TwoStable};
use umtslab::combiner::{combine, quotient_umts, CombineSpec};
use umtslab::hst::{hst_metric, HstTree};
use umtslab::metric::{Partition, QuotientMetric};
use umtslab::portfolio::combined_algorithm;
use umtslab::{OnlineAlgorithm, Umts};

/// Random metric: shortest-path closure of random positive edge weights.
pub fn random_metric<R: Rng>(rng: &mut R, n: usize) -> Vec<Vec<f64>> {
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let x = rng.gen_range(0.1..5.0);
            d[i][j] = x;
            d[j][i] = x;
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d
}

pub fn random_distribution<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    // occasionally sparse, to exercise degenerate vertices
    let mut p: Vec<f64> = (0..n)
        .map(|_| if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.0..1.0) })
        .collect();
    if p.iter().sum::<f64>() == 0.0 {
        p[rng.gen_range(0..n)] = 1.0;
    }
    let s: f64 = p.iter().sum();
    p.iter().map(|x| x / s).collect()
}

/// Offline optimum by enumerating every state path: the server may move
/// before each task and pays the task's charge where it stands.
pub fn exhaustive_opt(d: &[Vec<f64>], init: usize, tasks: &[Vec<f64>]) -> f64 {
    fn go(d: &[Vec<f64>], at: usize, tasks: &[Vec<f64>], acc: f64, best: &mut f64) {
        if acc >= *best {
            return;
        }
        match tasks.split_first() {
            None => *best = acc,
            Some((t, rest)) => {
                for v in 0..d.len() {
                    go(d, v, rest, acc + d[at][v] + t[v], best);
                }
            }
        }
    }
    let mut best = f64::INFINITY;
    go(d, init, tasks, 0.0, &mut best);
    best
}

/// Earth mover's distance by enumerating every basis of the transportation
/// LP (one row constraint dropped as redundant) and keeping the cheapest
/// feasible basic solution.
pub fn lp_transport(d: &[Vec<f64>], p: &[f64], q: &[f64]) -> f64 {
    let n = p.len();
    let cols = n * n;
    let rows = 2 * n - 1;
    let mut a = vec![vec![0.0; cols]; rows];
    for i in 0..n {
        for j in 0..n {
            a[i][i * n + j] = 1.0;
            if j + 1 < n {
                a[n + j][i * n + j] = 1.0;
            }
        }
    }
    let mut rhs: Vec<f64> = p.to_vec();
    rhs.extend_from_slice(&q[..n - 1]);

    let mut best = f64::INFINITY;
    let mut basis: Vec<usize> = (0..rows).collect();
    loop {
        if let Some(x) = solve_basis(&a, &rhs, &basis) {
            if x.iter().all(|v| *v >= -1e-12) {
                let c: f64 = basis.iter().zip(&x).map(|(&k, v)| v.max(0.0) * d[k / n][k % n]).sum();
                best = best.min(c);
            }
        }
        if !next_combination(&mut basis, cols) {
            break;
        }
    }
    best
}

fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if c[i] < n - k + i {
            c[i] += 1;
            for j in (i + 1)..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

fn solve_basis(a: &[Vec<f64>], rhs: &[f64], basis: &[usize]) -> Option<Vec<f64>> {
    let m = rhs.len();
    let mut mat: Vec<Vec<f64>> = (0..m)
        .map(|r| {
            let mut row: Vec<f64> = basis.iter().map(|&c| a[r][c]).collect();
            row.push(rhs[r]);
            row
        })
        .collect();
    for col in 0..m {
        let piv = (col..m).max_by(|&x, &y| mat[x][col].abs().total_cmp(&mat[y][col].abs()))?;
        if mat[piv][col].abs() < 1e-12 {
            return None;
        }
        mat.swap(col, piv);
        for r in 0..m {
            if r != col {
                let f = mat[r][col] / mat[col][col];
                if f != 0.0 {
                    for c in col..=m {
                        mat[r][c] -= f * mat[col][c];
                    }
                }
            }
        }
    }
    Some((0..m).map(|r| mat[r][m] / mat[r][r]).collect())
}

/// EMD on a line: integral of the absolute CDF difference.
pub fn cdf_line(positions: &[f64], p: &[f64], q: &[f64]) -> f64 {
    let mut acc = 0.0;
    let mut diff = 0.0;
    for i in 0..p.len().saturating_sub(1) {
        diff += p[i] - q[i];
        acc += diff.abs() * (positions[i + 1] - positions[i]);
    }
    acc
}

/// Reference two-point probability rule, written directly from its
/// exponential form.
pub fn two_point_p1(r1: f64, r2: f64, s: f64, d: f64, y: f64) -> f64 {
    let z = (r1 - r2) / s;
    let a = (0.5 + y / (2.0 * d)).clamp(0.0, 1.0);
    if z.abs() < 1e-10 {
        return 1.0 - a;
    }
    (z.exp() - (z * a).exp()) / (z.exp() - 1.0)
}

/// `r1 + (r1 - r2) / (e^{(r1 - r2)/s} - 1)` written literally.
pub fn f_literal(s: f64, r1: f64, r2: f64) -> f64 {
    r1 + (r1 - r2) / (((r1 - r2) / s).exp() - 1.0)
}

/// Random tree of depth at most `depth` with at most `budget` leaves; every
/// level is 10 times smaller than its parent.
pub fn random_tree<R: Rng>(rng: &mut R, depth: usize, budget: usize, next: &mut usize) -> HstTree {
    let leaf = |next: &mut usize| {
        *next += 1;
        HstTree::leaf(format!("v{next}"))
    };
    if depth == 0 || budget < 2 {
        return leaf(next);
    }
    let arity = rng.gen_range(2..=budget.min(4));
    let mut sizes = vec![1; arity];
    for _ in 0..rng.gen_range(0..=budget - arity) {
        sizes[rng.gen_range(0..arity)] += 1;
    }
    let children = sizes
        .into_iter()
        .map(|k| if k == 1 { leaf(next) } else { random_tree(rng, depth - 1, k, next) })
        .collect();
    let delta = 10f64.powi(depth as i32);
    HstTree::node(delta, children)
}

/// Bottom-up composition over `t` with a randomly chosen quotient algorithm
/// at every internal node.
pub fn compose<R: Rng>(rng: &mut R, u: &Umts, t: &HstTree) -> Arc<dyn OnlineAlgorithm> {
    if t.is_leaf() {
        return Arc::new(Trivial::new(u).unwrap());
    }
    let mut parts = Vec::new();
    let mut algs = Vec::new();
    let mut o = 0;
    for c in &t.children {
        let idx: Vec<usize> = (o..o + c.num_leaves()).collect();
        o += idx.len();
        algs.push(compose(rng, &u.restrict(&idx), c));
        parts.push(idx);
    }
    let partition = Partition::new(u.len(), parts).unwrap();
    let q = QuotientMetric::tight(&u.metric, &partition).unwrap();
    let ratios = algs.iter().map(|a| a.declared_ratio()).collect();
    let qu = quotient_umts(u, &q, ratios).unwrap();
    let pick = rng.gen_range(0..3);
    let qa = match (pick, algs.len()) {
        (0, 2) => variant_with(&qu, 0.25, |v| Ok(Arc::new(TwoStable::new(v)?))),
        (1, _) => variant_with(&qu, 0.5, |v| Ok(Arc::new(OddExponent::new(v)?))),
        _ => variant_with(&qu, 0.5, combined_algorithm),
    }
    .unwrap();
    Arc::new(combine(CombineSpec::new(u.clone(), partition, algs, qa).unwrap()).unwrap())
}

/// A random recursive composition on at most `max_leaves` states.
pub fn random_composition(seed: u64, depth: usize, max_leaves: usize) -> Arc<dyn OnlineAlgorithm> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut next = 0;
    let t = loop {
        let t = random_tree(&mut rng, depth, max_leaves, &mut next);
        if !t.is_leaf() {
            break t;
        }
        next = 0;
    };
    let m = hst_metric(&t).unwrap();
    let n = m.len();
    let r: Vec<f64> = (0..n).map(|_| [0.5, 1.0, 2.0, 4.0][rng.gen_range(0..4)]).collect();
    let u = Umts::new(m, r, 1.0).unwrap();
    compose(&mut rng, &u, &t)
}
