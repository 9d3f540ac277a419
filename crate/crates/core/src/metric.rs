//! Finite metric spaces, partitions, and quotient spaces.

use serde::{Deserialize, Serialize};

use crate::error::{Result, UmtsError};
use crate::EQ_TOL;

/// Extra structure known about a metric, used by the transport kernel to pick
/// an exact closed form instead of the general solver.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Structure {
    /// All pairwise distances equal `d`.
    Uniform(f64),
    /// Points on a line at the given sorted positions (index order).
    Line(Vec<f64>),
    /// A weighted tree whose first `n` nodes are the states.
    Tree(TreeShape),
    #[default]
    General,
}

/// Rooted weighted tree; nodes `0..n` are the states, the rest are Steiner
/// nodes. `parent[root] == usize::MAX`.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeShape {
    pub parent: Vec<usize>,
    pub weight: Vec<f64>,
}

impl TreeShape {
    /// Nodes ordered so that every node appears after its parent.
    pub fn topological_order(&self) -> Vec<usize> {
        let m = self.parent.len();
        let mut children = vec![Vec::new(); m];
        let mut roots = Vec::new();
        for (v, &p) in self.parent.iter().enumerate() {
            if p == usize::MAX {
                roots.push(v);
            } else {
                children[p].push(v);
            }
        }
        let mut order = Vec::with_capacity(m);
        let mut stack = roots;
        while let Some(v) = stack.pop() {
            order.push(v);
            stack.extend(children[v].iter().copied());
        }
        order
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "MetricRepr", into = "MetricRepr")]
pub struct FiniteMetric {
    labels: Vec<String>,
    dist: Vec<Vec<f64>>,
    structure: Structure,
}

#[derive(Serialize, Deserialize)]
struct MetricRepr {
    labels: Vec<String>,
    dist: Vec<Vec<f64>>,
}

impl TryFrom<MetricRepr> for FiniteMetric {
    type Error = UmtsError;
    fn try_from(r: MetricRepr) -> Result<Self> {
        FiniteMetric::new(r.labels, r.dist)
    }
}

impl From<FiniteMetric> for MetricRepr {
    fn from(m: FiniteMetric) -> Self {
        MetricRepr {
            labels: m.labels,
            dist: m.dist,
        }
    }
}

impl PartialEq for FiniteMetric {
    fn eq(&self, other: &Self) -> bool {
        self.labels == other.labels && self.dist == other.dist
    }
}

/// One violated metric axiom.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Violation {
    NotSquare { row: usize, len: usize },
    NonZeroDiagonal { i: usize, value: f64 },
    NonPositive { i: usize, j: usize, value: f64 },
    Asymmetric { i: usize, j: usize },
    Triangle { i: usize, j: usize, k: usize, excess: f64 },
}

/// Every violated axiom of a candidate distance matrix. Empty iff valid.
pub fn validate(dist: &[Vec<f64>]) -> Vec<Violation> {
    let n = dist.len();
    let mut out = Vec::new();
    for (row, r) in dist.iter().enumerate() {
        if r.len() != n {
            out.push(Violation::NotSquare { row, len: r.len() });
        }
    }
    if !out.is_empty() {
        return out;
    }
    for i in 0..n {
        if dist[i][i].abs() > EQ_TOL {
            out.push(Violation::NonZeroDiagonal {
                i,
                value: dist[i][i],
            });
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (dist[i][j] - dist[j][i]).abs() > EQ_TOL {
                out.push(Violation::Asymmetric { i, j });
            }
            let v = dist[i][j].min(dist[j][i]);
            if !(v > 0.0) || !v.is_finite() {
                out.push(Violation::NonPositive { i, j, value: v });
            }
        }
    }
    for i in 0..n {
        for k in (i + 1)..n {
            for j in 0..n {
                if j == i || j == k {
                    continue;
                }
                let excess = dist[i][k] - (dist[i][j] + dist[j][k]);
                if excess > EQ_TOL {
                    out.push(Violation::Triangle { i, j, k, excess });
                }
            }
        }
    }
    out
}

fn index_labels(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("v{}", i + 1)).collect()
}

impl FiniteMetric {
    /// Builds a metric after validating every axiom.
    pub fn new(labels: Vec<String>, dist: Vec<Vec<f64>>) -> Result<Self> {
        if labels.len() != dist.len() {
            return Err(UmtsError::Dimension {
                expected: labels.len(),
                got: dist.len(),
            });
        }
        if labels.is_empty() {
            return Err(UmtsError::InvalidMetric("empty metric".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for l in &labels {
            if !seen.insert(l) {
                return Err(UmtsError::InvalidMetric(format!("duplicate label `{l}`")));
            }
        }
        let report = validate(&dist);
        if let Some(v) = report.first() {
            return Err(UmtsError::InvalidMetric(format!("{v:?}")));
        }
        let n = dist.len();
        let structure = if n >= 2 && (0..n).all(|i| (0..n).all(|j| i == j || dist[i][j] == dist[0][1])) {
            Structure::Uniform(dist[0][1])
        } else {
            Structure::General
        };
        Ok(FiniteMetric {
            labels,
            dist,
            structure,
        })
    }

    /// `b` points at pairwise distance `d`.
    pub fn uniform(b: usize, d: f64) -> Result<Self> {
        if b == 0 {
            return Err(UmtsError::InvalidMetric("uniform space needs b >= 1".into()));
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(UmtsError::InvalidMetric(format!("uniform distance must be positive, got {d}")));
        }
        let dist = (0..b)
            .map(|i| (0..b).map(|j| if i == j { 0.0 } else { d }).collect())
            .collect();
        let mut m = FiniteMetric::new(index_labels(b), dist)?;
        if b >= 2 {
            m.structure = Structure::Uniform(d);
        }
        Ok(m)
    }

    /// `n` equally spaced points on a line.
    pub fn line(n: usize, gap: f64) -> Result<Self> {
        if n == 0 {
            return Err(UmtsError::InvalidMetric("line needs n >= 1".into()));
        }
        if !(gap > 0.0) || !gap.is_finite() {
            return Err(UmtsError::InvalidMetric(format!("line gap must be positive, got {gap}")));
        }
        let dist = (0..n)
            .map(|i| (0..n).map(|j| gap * (i as f64 - j as f64).abs()).collect())
            .collect();
        let mut m = FiniteMetric::new(index_labels(n), dist)?;
        m.structure = Structure::Line((0..n).map(|i| gap * i as f64).collect());
        Ok(m)
    }

    /// Star metric of weighted caching: `dist(u,v) = (f_u + f_v) / 2`.
    pub fn star(fetch_costs: &[f64]) -> Result<Self> {
        if fetch_costs.is_empty() {
            return Err(UmtsError::InvalidMetric("star needs at least one leaf".into()));
        }
        if let Some(f) = fetch_costs.iter().find(|f| !(**f > 0.0) || !f.is_finite()) {
            return Err(UmtsError::InvalidMetric(format!("fetch costs must be positive, got {f}")));
        }
        let n = fetch_costs.len();
        let dist = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| if i == j { 0.0 } else { (fetch_costs[i] + fetch_costs[j]) / 2.0 })
                    .collect()
            })
            .collect();
        let mut m = FiniteMetric::new(index_labels(n), dist)?;
        if !matches!(m.structure, Structure::Uniform(_)) {
            let mut parent = vec![n; n + 1];
            parent[n] = usize::MAX;
            let mut weight: Vec<f64> = fetch_costs.iter().map(|f| f / 2.0).collect();
            weight.push(0.0);
            m.structure = Structure::Tree(TreeShape { parent, weight });
        }
        Ok(m)
    }

    /// Attaches a tree realization. The caller guarantees that the tree path
    /// lengths equal `dist`; this is re-checked.
    pub fn with_tree(mut self, shape: TreeShape) -> Result<Self> {
        let n = self.len();
        if shape.parent.len() < n || shape.parent.len() != shape.weight.len() {
            return Err(UmtsError::InvalidMetric("tree shape does not cover the states".into()));
        }
        let depth = tree_depths(&shape);
        let anc = |mut v: usize| {
            let mut path = vec![v];
            while shape.parent[v] != usize::MAX {
                v = shape.parent[v];
                path.push(v);
            }
            path
        };
        for i in 0..n {
            let pi = anc(i);
            for j in (i + 1)..n {
                let pj = anc(j);
                let lca = *pi.iter().find(|x| pj.contains(x)).ok_or_else(|| {
                    UmtsError::InvalidMetric("tree shape is disconnected".into())
                })?;
                let d = depth[i] + depth[j] - 2.0 * depth[lca];
                if (d - self.dist[i][j]).abs() > EQ_TOL * (1.0 + d.abs()) {
                    return Err(UmtsError::InvalidMetric(format!(
                        "tree path length {d} differs from dist {} for ({i},{j})",
                        self.dist[i][j]
                    )));
                }
            }
        }
        if !matches!(self.structure, Structure::Uniform(_)) {
            self.structure = Structure::Tree(shape);
        }
        Ok(self)
    }

    pub fn relabel(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(UmtsError::Dimension {
                expected: self.len(),
                got: labels.len(),
            });
        }
        self.labels = labels;
        Ok(self)
    }

    /// Multiplies every distance by `rho > 0`.
    pub fn scaled(&self, rho: f64) -> FiniteMetric {
        let structure = match &self.structure {
            Structure::Uniform(d) => Structure::Uniform(d * rho),
            Structure::Line(p) => Structure::Line(p.iter().map(|x| x * rho).collect()),
            Structure::Tree(t) => Structure::Tree(TreeShape {
                parent: t.parent.clone(),
                weight: t.weight.iter().map(|w| w * rho).collect(),
            }),
            Structure::General => Structure::General,
        };
        FiniteMetric {
            labels: self.labels.clone(),
            dist: self
                .dist
                .iter()
                .map(|r| r.iter().map(|x| x * rho).collect())
                .collect(),
            structure,
        }
    }

    /// Sub-metric induced on the given state indices (in that order).
    pub fn restrict(&self, idx: &[usize]) -> FiniteMetric {
        let dist: Vec<Vec<f64>> = idx
            .iter()
            .map(|&i| idx.iter().map(|&j| self.dist[i][j]).collect())
            .collect();
        let labels = idx.iter().map(|&i| self.labels[i].clone()).collect();
        let structure = match &self.structure {
            Structure::Uniform(d) if idx.len() >= 2 => Structure::Uniform(*d),
            Structure::Line(p) if idx.windows(2).all(|w| w[0] < w[1]) => {
                Structure::Line(idx.iter().map(|&i| p[i]).collect())
            }
            _ => {
                let n = idx.len();
                if n >= 2 && (0..n).all(|a| (0..n).all(|b| a == b || dist[a][b] == dist[0][1])) {
                    Structure::Uniform(dist[0][1])
                } else {
                    Structure::General
                }
            }
        };
        FiniteMetric {
            labels,
            dist,
            structure,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn matrix(&self) -> &[Vec<f64>] {
        &self.dist
    }

    pub fn structure(&self) -> &Structure {
        &self.structure
    }

    #[inline]
    pub fn d(&self, i: usize, j: usize) -> f64 {
        self.dist[i][j]
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| UmtsError::UnknownLabel(label.to_string()))
    }

    pub fn diameter(&self) -> f64 {
        self.dist
            .iter()
            .flat_map(|r| r.iter().copied())
            .fold(0.0, f64::max)
    }

    pub fn min_distance(&self) -> f64 {
        let n = self.len();
        let mut m = f64::INFINITY;
        for i in 0..n {
            for j in (i + 1)..n {
                m = m.min(self.dist[i][j]);
            }
        }
        m
    }

    /// The common distance if the space is uniform with at least 2 points.
    pub fn uniform_distance(&self) -> Option<f64> {
        match self.structure {
            Structure::Uniform(d) => Some(d),
            _ => None,
        }
    }

    pub fn validate(&self) -> Vec<Violation> {
        validate(&self.dist)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("metric serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

pub(crate) fn tree_depths(shape: &TreeShape) -> Vec<f64> {
    let mut depth = vec![0.0; shape.parent.len()];
    for v in shape.topological_order() {
        let p = shape.parent[v];
        if p != usize::MAX {
            depth[v] = depth[p] + shape.weight[v];
        }
    }
    depth
}

/// Disjoint blocks of state indices covering the whole space.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Partition {
    blocks: Vec<Vec<usize>>,
    block_of: Vec<usize>,
    slot_of: Vec<usize>,
}

impl Partition {
    pub fn new(n: usize, blocks: Vec<Vec<usize>>) -> Result<Self> {
        let mut block_of = vec![usize::MAX; n];
        let mut slot_of = vec![usize::MAX; n];
        for (b, block) in blocks.iter().enumerate() {
            if block.is_empty() {
                return Err(UmtsError::InvalidPartition(format!("block {b} is empty")));
            }
            for (slot, &v) in block.iter().enumerate() {
                if v >= n {
                    return Err(UmtsError::InvalidPartition(format!("state {v} out of range")));
                }
                if block_of[v] != usize::MAX {
                    return Err(UmtsError::InvalidPartition(format!("state {v} in two blocks")));
                }
                block_of[v] = b;
                slot_of[v] = slot;
            }
        }
        if let Some(v) = block_of.iter().position(|b| *b == usize::MAX) {
            return Err(UmtsError::InvalidPartition(format!("state {v} not covered")));
        }
        Ok(Partition {
            blocks,
            block_of,
            slot_of,
        })
    }

    /// Builds a partition from label sets.
    pub fn from_labels(m: &FiniteMetric, blocks: &[Vec<String>]) -> Result<Self> {
        let idx = blocks
            .iter()
            .map(|b| b.iter().map(|l| m.index_of(l)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Partition::new(m.len(), idx)
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn block_of(&self, v: usize) -> usize {
        self.block_of[v]
    }

    /// Position of `v` inside its block.
    pub fn slot_of(&self, v: usize) -> usize {
        self.slot_of[v]
    }

    pub fn block_metric(&self, m: &FiniteMetric, b: usize) -> FiniteMetric {
        m.restrict(&self.blocks[b])
    }

    /// Largest distance between a point of block `i` and a point of block `j`.
    pub fn max_cross(&self, m: &FiniteMetric, i: usize, j: usize) -> f64 {
        let mut best: f64 = 0.0;
        for &u in &self.blocks[i] {
            for &v in &self.blocks[j] {
                best = best.max(m.d(u, v));
            }
        }
        best
    }

    /// Smallest distance between a point of block `i` and a point of block `j`.
    pub fn min_cross(&self, m: &FiniteMetric, i: usize, j: usize) -> f64 {
        let mut best = f64::INFINITY;
        for &u in &self.blocks[i] {
            for &v in &self.blocks[j] {
                best = best.min(m.d(u, v));
            }
        }
        best
    }
}

/// One representative per block with distances dominating the cross-block
/// distances of the underlying space.
#[derive(Debug, Clone, PartialEq)]
pub struct QuotientMetric {
    pub representatives: Vec<usize>,
    pub metric: FiniteMetric,
}

impl QuotientMetric {
    /// Default quotient: `dist_hat(z_i, z_j)` is the largest cross-block distance.
    pub fn tight(m: &FiniteMetric, p: &Partition) -> Result<Self> {
        let b = p.num_blocks();
        let dist = (0..b)
            .map(|i| {
                (0..b)
                    .map(|j| if i == j { 0.0 } else { p.max_cross(m, i, j) })
                    .collect()
            })
            .collect();
        let labels = (0..b).map(|i| format!("z{}", i + 1)).collect();
        Ok(QuotientMetric {
            representatives: p.blocks().iter().map(|bl| bl[0]).collect(),
            metric: FiniteMetric::new(labels, dist)?,
        })
    }

    /// A user-supplied quotient metric; rejected unless it dominates every
    /// cross-block distance.
    pub fn custom(m: &FiniteMetric, p: &Partition, metric: FiniteMetric) -> Result<Self> {
        let b = p.num_blocks();
        if metric.len() != b {
            return Err(UmtsError::Dimension {
                expected: b,
                got: metric.len(),
            });
        }
        for i in 0..b {
            for j in 0..b {
                if i != j && metric.d(i, j) + EQ_TOL < p.max_cross(m, i, j) {
                    return Err(UmtsError::InvalidPartition(format!(
                        "quotient distance ({i},{j}) = {} below cross-block maximum {}",
                        metric.d(i, j),
                        p.max_cross(m, i, j)
                    )));
                }
            }
        }
        Ok(QuotientMetric {
            representatives: p.blocks().iter().map(|bl| bl[0]).collect(),
            metric,
        })
    }
}
