//! Hierarchically well-separated trees and the algorithms built on them:
//! the recursive RHST algorithm, weighted caching on a star, and the line.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::algo::{variant_with, Constraints, OnlineAlgorithm, Trivial, TwoStable};
use crate::combiner::{combine, nice_beta_eta, quotient_umts, CombineSpec, CombinedAlgorithm};
use crate::error::{Result, UmtsError};
use crate::metric::{FiniteMetric, Partition, QuotientMetric, TreeShape};
use crate::portfolio::{combined_algorithm, w_combined_algorithm};
use crate::umts::Umts;

/// A rooted tree with labels `delta`; leaves have `delta = 0` and carry a
/// state label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HstTree {
    pub delta: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<HstTree>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leaf: Option<String>,
}

impl HstTree {
    pub fn leaf(label: impl Into<String>) -> Self {
        HstTree {
            delta: 0.0,
            children: Vec::new(),
            leaf: Some(label.into()),
        }
    }

    pub fn node(delta: f64, children: Vec<HstTree>) -> Self {
        HstTree {
            delta,
            children,
            leaf: None,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// Leaf labels in depth-first order; this is the state order of
    /// [`hst_metric`].
    pub fn leaves(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves(&self, out: &mut Vec<String>) {
        if self.is_leaf() {
            out.push(self.leaf.clone().unwrap_or_default());
        }
        for c in &self.children {
            c.collect_leaves(out);
        }
    }

    pub fn num_leaves(&self) -> usize {
        if self.is_leaf() {
            1
        } else {
            self.children.iter().map(HstTree::num_leaves).sum()
        }
    }

    pub fn depth(&self) -> usize {
        self.children.iter().map(|c| c.depth() + 1).max().unwrap_or(0)
    }

    /// Structural validity: labels, leaf marks, unique leaf labels.
    pub fn validate(&self) -> Result<()> {
        self.validate_node()?;
        let mut labels = self.leaves();
        labels.sort();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(UmtsError::InvalidHst("duplicate leaf label".into()));
        }
        Ok(())
    }

    fn validate_node(&self) -> Result<()> {
        if !(self.delta >= 0.0) || !self.delta.is_finite() {
            return Err(UmtsError::InvalidHst(format!("bad label {}", self.delta)));
        }
        if self.is_leaf() {
            if self.delta != 0.0 {
                return Err(UmtsError::InvalidHst("leaf with nonzero label".into()));
            }
            if self.leaf.is_none() {
                return Err(UmtsError::InvalidHst("leaf without a state label".into()));
            }
        } else {
            if self.delta == 0.0 {
                return Err(UmtsError::InvalidHst("internal node with zero label".into()));
            }
            if self.leaf.is_some() {
                return Err(UmtsError::InvalidHst("internal node with a state label".into()));
            }
            for c in &self.children {
                if c.delta >= self.delta {
                    return Err(UmtsError::InvalidHst(format!(
                        "child label {} not below parent label {}",
                        c.delta, self.delta
                    )));
                }
                c.validate_node()?;
            }
        }
        Ok(())
    }

    /// Whether every child label is at most `parent / k`.
    pub fn is_k_hst(&self, k: f64) -> bool {
        self.children
            .iter()
            .all(|c| c.delta <= self.delta / k * (1.0 + 1e-12) && c.is_k_hst(k))
    }

    /// Whether every internal node has exactly two children.
    pub fn is_binary(&self) -> bool {
        self.is_leaf() || (self.children.len() == 2 && self.children.iter().all(HstTree::is_binary))
    }

    /// The tree with labels divided by `factor^depth`, which turns a `k`-HST
    /// into a `k * factor`-HST dominated by the original.
    pub fn shrink_levels(&self, factor: f64) -> HstTree {
        fn go(t: &HstTree, scale: f64, factor: f64) -> HstTree {
            HstTree {
                delta: t.delta / scale,
                children: t.children.iter().map(|c| go(c, scale * factor, factor)).collect(),
                leaf: t.leaf.clone(),
            }
        }
        go(self, 1.0, factor)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("tree serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let t: HstTree = serde_json::from_str(s)?;
        t.validate()?;
        Ok(t)
    }
}

/// A `k`-HST with `k < 5` as a 5-HST: labels divided by `(5/k)^depth`.
pub fn to_5hst(t: &HstTree, k: f64) -> HstTree {
    if k >= 5.0 {
        t.clone()
    } else {
        t.shrink_levels(5.0 / k)
    }
}

/// Leaf metric `dist(x, y) = delta(lca(x, y))`, with its tree realization
/// attached (edge weight `(delta(parent) - delta(child)) / 2`).
pub fn hst_metric(t: &HstTree) -> Result<FiniteMetric> {
    t.validate()?;
    let labels = t.leaves();
    let n = labels.len();
    let mut dist = vec![vec![0.0; n]; n];
    fill(t, 0, &mut dist);
    // states first, then internal nodes
    let mut parent = vec![usize::MAX; n];
    let mut weight = vec![0.0; n];
    let mut next_leaf = 0usize;
    shape(t, usize::MAX, 0.0, &mut next_leaf, &mut parent, &mut weight);
    let m = FiniteMetric::new(labels, dist)?;
    if n == 1 {
        return Ok(m);
    }
    m.with_tree(TreeShape { parent, weight })
}

fn fill(t: &HstTree, offset: usize, dist: &mut [Vec<f64>]) {
    let mut starts = Vec::with_capacity(t.children.len());
    let mut o = offset;
    for c in &t.children {
        starts.push((o, c.num_leaves()));
        fill(c, o, dist);
        o += c.num_leaves();
    }
    for (a, &(sa, la)) in starts.iter().enumerate() {
        for &(sb, lb) in &starts[a + 1..] {
            for i in sa..sa + la {
                for j in sb..sb + lb {
                    dist[i][j] = t.delta;
                    dist[j][i] = t.delta;
                }
            }
        }
    }
}

fn shape(
    t: &HstTree,
    par: usize,
    par_delta: f64,
    next_leaf: &mut usize,
    parent: &mut Vec<usize>,
    weight: &mut Vec<f64>,
) {
    let w = if par == usize::MAX { 0.0 } else { (par_delta - t.delta) / 2.0 };
    if t.is_leaf() {
        let id = *next_leaf;
        *next_leaf += 1;
        parent[id] = par;
        weight[id] = w;
    } else {
        let id = parent.len();
        parent.push(par);
        weight.push(w);
        for c in &t.children {
            shape(c, id, t.delta, next_leaf, parent, weight);
        }
    }
}

/// Builds an algorithm on `u` (whose states are the leaves of `t` in
/// [`HstTree::leaves`] order) bottom-up: leaves get the trivial algorithm,
/// internal nodes combine their children under `quotient(node, quotient_umts)`.
fn build_on_tree<Q>(u: &Umts, t: &HstTree, family: &str, quotient: &Q) -> Result<Arc<dyn OnlineAlgorithm>>
where
    Q: Fn(&HstTree, &Umts) -> Result<Arc<dyn OnlineAlgorithm>>,
{
    if u.len() != t.num_leaves() {
        return Err(UmtsError::Dimension {
            expected: t.num_leaves(),
            got: u.len(),
        });
    }
    if t.is_leaf() {
        return Ok(Arc::new(Trivial::new(u)?));
    }
    let mut parts = Vec::with_capacity(t.children.len());
    let mut algs = Vec::with_capacity(t.children.len());
    let mut o = 0;
    for c in &t.children {
        let idx: Vec<usize> = (o..o + c.num_leaves()).collect();
        o += idx.len();
        algs.push(build_on_tree(&u.restrict(&idx), c, family, quotient)?);
        parts.push(idx);
    }
    if algs.len() == 1 {
        return Ok(algs.pop().expect("one child"));
    }
    let partition = Partition::new(u.len(), parts)?;
    let q = QuotientMetric::tight(&u.metric, &partition)?;
    let ratios = algs.iter().map(|a| a.declared_ratio()).collect();
    let qa = quotient(t, &quotient_umts(u, &q, ratios)?)?;
    let c: CombinedAlgorithm = combine(CombineSpec::with_quotient(u.clone(), partition, algs, q, qa)?)?;
    let c = c.with_family(family, serde_json::json!({ "delta": t.delta }), None);
    Ok(Arc::new(c))
}

fn hst_umts(t: &HstTree, r: f64, s: f64) -> Result<Umts> {
    let m = hst_metric(t)?;
    let n = m.len();
    Umts::new(m, vec![r; n], s)
}

/// RHST on a `k`-HST, `k >= 5`, on the UMTS `u` over its leaf metric.
/// Children are combined under the (1/2)-variant of Combined.
pub fn rhst_on(u: &Umts, t: &HstTree, k: f64) -> Result<Arc<dyn OnlineAlgorithm>> {
    if k < 5.0 {
        return Err(UmtsError::Precondition(format!("rhst needs k >= 5, got {k}")));
    }
    if !t.is_k_hst(k) {
        return Err(UmtsError::InvalidHst(format!("tree is not a {k}-HST")));
    }
    build_on_tree(u, t, "rhst", &|_, qu: &Umts| variant_with(qu, 0.5, combined_algorithm))
}

/// Constraint ledger of one RHST level on a nice `k`-partition: the
/// quotient is the (1/2)-variant of a `(1, 1/2)` Combined, the children are
/// `(1, 1/2)`-constrained. For `k >= 5` the result is again within `(1, 1/2)`,
/// so the induction closes; below 5 it fails with `beta > 1`.
pub fn rhst_ledger(k: f64) -> Result<Constraints> {
    let child = Constraints::new(1.0, 0.5);
    nice_beta_eta(Constraints::new(0.5, 0.25), &[child, child], k)
}

/// RHST on the fair UMTS (unit ratios, `s = 1`) over the leaf metric.
pub fn rhst(t: &HstTree, k: f64) -> Result<Arc<dyn OnlineAlgorithm>> {
    rhst_on(&hst_umts(t, 1.0, 1.0)?, t, k)
}

/// The star-to-6-HST rule. `h[u]` is the distance of `u` to the star center;
/// points with `h >= H / 6` (`H` the largest) hang off the root as leaves, the
/// rest recurse into one child. Root label is `2H`.
pub fn star_to_hst(m: &FiniteMetric) -> Result<HstTree> {
    let n = m.len();
    if n == 0 {
        return Err(UmtsError::InvalidMetric("empty metric".into()));
    }
    let h = center_distances(m);
    let idx: Vec<usize> = (0..n).collect();
    Ok(star_rec(m, &h, &idx))
}

/// Distances to the center of a star metric (`(d(u,v) + d(u,w) - d(v,w)) / 2`).
pub fn center_distances(m: &FiniteMetric) -> Vec<f64> {
    let n = m.len();
    match n {
        1 => vec![0.0],
        2 => vec![m.d(0, 1) / 2.0; 2],
        _ => (0..n)
            .map(|u| {
                let v = (u + 1) % n;
                let w = (u + 2) % n;
                ((m.d(u, v) + m.d(u, w) - m.d(v, w)) / 2.0).max(0.0)
            })
            .collect(),
    }
}

fn star_rec(m: &FiniteMetric, h: &[f64], idx: &[usize]) -> HstTree {
    if idx.len() == 1 {
        return HstTree::leaf(m.labels()[idx[0]].clone());
    }
    let top = idx.iter().map(|&i| h[i]).fold(0.0, f64::max);
    let (far, near): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| h[i] >= top / 6.0);
    let mut children = Vec::with_capacity(far.len() + 1);
    if !near.is_empty() {
        children.push(star_rec(m, h, &near));
    }
    children.extend(far.iter().map(|&i| HstTree::leaf(m.labels()[i].clone())));
    HstTree::node(2.0 * top, children)
}

/// Weighted caching with `K = fetch_costs.len() - 1` cache slots: the star
/// metric (edge `(center, u)` weighs half the fetch cost of `u`), its 6-HST,
/// and the RHST recursion with the (1/2)-variant of WCombined at each node.
/// The returned algorithm runs on the HST metric with unit ratios.
pub fn weighted_caching_algorithm(fetch_costs: &[f64]) -> Result<CachingSetup> {
    let star = FiniteMetric::star(fetch_costs)?;
    let tree = star_to_hst(&star)?;
    let u = hst_umts(&tree, 1.0, 1.0)?;
    // the only non-leaf child comes first, so the tail ratios are all equal
    let alg = build_on_tree(&u, &tree, "caching", &|_, qu: &Umts| {
        variant_with(qu, 0.5, w_combined_algorithm)
    })?;
    let order: Vec<usize> = tree
        .leaves()
        .iter()
        .map(|l| star.index_of(l))
        .collect::<Result<_>>()?;
    let star_umts = Umts::new(star.restrict(&order), vec![1.0; fetch_costs.len()], 1.0)?;
    Ok(CachingSetup {
        tree,
        star: star_umts,
        algorithm: alg,
    })
}

/// The pieces of the caching construction. `star` is the original star UMTS
/// with its states permuted into the tree's leaf order.
#[derive(Debug, Clone)]
pub struct CachingSetup {
    pub tree: HstTree,
    pub star: Umts,
    pub algorithm: Arc<dyn OnlineAlgorithm>,
}

/// The caching ratio bound `60 (ln(K + 1) + 1/3)`.
pub fn caching_bound(k: usize) -> f64 {
    60.0 * (((k + 1) as f64).ln() + 1.0 / 3.0)
}

/// Deterministic dyadic binary 4-HST over `n` equally spaced points: split at
/// the midpoint, label `max(span * gap, 4 * largest child label)`.
pub fn line_to_binary_4hst(n: usize, gap: f64) -> Result<HstTree> {
    if n == 0 || !(gap > 0.0) {
        return Err(UmtsError::InvalidMetric(format!("bad line ({n}, {gap})")));
    }
    Ok(dyadic(0, n, gap))
}

fn dyadic(lo: usize, hi: usize, gap: f64) -> HstTree {
    if hi - lo == 1 {
        return HstTree::leaf(format!("v{}", lo + 1));
    }
    let mid = lo + (hi - lo) / 2;
    let a = dyadic(lo, mid, gap);
    let b = dyadic(mid, hi, gap);
    let span = (hi - lo - 1) as f64 * gap;
    let delta = span.max(4.0 * a.delta.max(b.delta));
    HstTree::node(delta, vec![a, b])
}

/// The line algorithm: RHST on a binary 4-HST with the (1/4)-variant of
/// TwoStable at every node. Unit ratios, `s = 1`.
pub fn line_algorithm_on(t: &HstTree) -> Result<Arc<dyn OnlineAlgorithm>> {
    if !t.is_binary() {
        return Err(UmtsError::InvalidHst("line algorithm needs a binary tree".into()));
    }
    if !t.is_k_hst(4.0) {
        return Err(UmtsError::InvalidHst("line algorithm needs a 4-HST".into()));
    }
    let u = hst_umts(t, 1.0, 1.0)?;
    build_on_tree(&u, t, "line", &|_, qu: &Umts| {
        variant_with(qu, 0.25, |v| Ok(Arc::new(TwoStable::new(v)?)))
    })
}

pub fn line_algorithm(n: usize, gap: f64) -> Result<Arc<dyn OnlineAlgorithm>> {
    line_algorithm_on(&line_to_binary_4hst(n, gap)?)
}

/// Largest and smallest `dist_T / dist_M` over all pairs.
pub fn distortion(tree_metric: &FiniteMetric, m: &FiniteMetric) -> (f64, f64) {
    let n = m.len();
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let r = tree_metric.d(i, j) / m.d(i, j);
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    (lo, hi)
}

/// `k + 1` fetch costs drawn uniformly from `[lo, hi]`, deterministic in the
/// seed.
pub fn random_fetch_costs(k: usize, seed: u64, lo: f64, hi: f64) -> Vec<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..=k).map(|_| rng.gen_range(lo..=hi)).collect()
}
