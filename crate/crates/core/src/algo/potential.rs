//! Minimal potentials by value iteration.
//!
//! For a stable rule with declared ratio `r` and weights `alpha`, the smallest
//! valid potential is
//!
//! `Phi(w) = sup over continuations [online cost from w - r <alpha, w_end - w>]`,
//!
//! which is finite exactly when no cycle of reasonable tasks has positive
//! gain. We discretize the domain of normalized work functions, compute the
//! exact (continuous-charging) gain of every grid edge, and iterate the
//! Bellman operator to a fixed point. Divergence means the declared ratio is
//! too small.
//!
//! Two states use a 1-D table with adaptively refined nodes and an exact
//! Bellman closure for off-grid queries; three or four states use a uniform
//! grid with simplex interpolation.

use std::collections::VecDeque;

use super::ProbabilityRule;
use crate::error::{Result, UmtsError};
use crate::transport::transport_cost;
use crate::umts::WeightVector;

#[derive(Debug, Clone)]
pub struct PotentialOptions {
    /// Grid spacing as a fraction of the diameter.
    pub grid_step: f64,
    /// Convergence threshold on the per-sweep change, relative to `r * diam`.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Sub-steps per grid edge when integrating the online cost.
    pub substeps: usize,
    /// 1-D only: refine cells until the probability changes by at most this.
    pub max_prob_jump: f64,
}

impl Default for PotentialOptions {
    fn default() -> Self {
        PotentialOptions {
            grid_step: 1.0 / 2000.0,
            tol: 1e-7,
            max_sweeps: 20_000,
            substeps: 4,
            max_prob_jump: 1e-3,
        }
    }
}

impl PotentialOptions {
    pub fn coarse(grid_step: f64) -> Self {
        PotentialOptions {
            grid_step,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone)]
pub enum PotentialEstimate {
    Zero,
    Line(LineTable),
    Grid(GridTable),
}

/// 1-D table over `y = w(v1) - w(v2)`.
#[derive(Debug, Clone)]
pub struct LineTable {
    pub ys: Vec<f64>,
    /// Raw fixed-point values (before the offset).
    pub raw: Vec<f64>,
    pub offset: f64,
    pub ratio: f64,
    pub alpha: WeightVector,
    pub substeps: usize,
    pub sweeps: usize,
}

/// Uniform grid over `y_i = w(v_i) - w(v_n)`, `i < n`.
#[derive(Debug, Clone)]
pub struct GridTable {
    pub lo: Vec<f64>,
    pub h: f64,
    pub counts: Vec<usize>,
    /// `NaN` marks unreachable nodes.
    pub raw: Vec<f64>,
    pub offset: f64,
    pub sweeps: usize,
}

/// Substeps for the closing step of a query; nodes are dense enough that
/// one Simpson step is accurate far below the audit tolerance.
const QUERY_SUBSTEPS: usize = 1;

/// Online cost minus `r alpha_v delta` for continuously charging state `v`
/// by `delta`, starting from `w`.
pub fn segment_gain(
    rule: &dyn ProbabilityRule,
    ratio: f64,
    alpha: &[f64],
    w: &[f64],
    v: usize,
    delta: f64,
    substeps: usize,
) -> f64 {
    let u = rule.umts();
    let s = u.s();
    let m = substeps.max(1);
    let h = delta / m as f64;
    let mut cur = w.to_vec();
    let mut p0 = rule.probabilities(&cur);
    let mut cost = 0.0;
    for _ in 0..m {
        let mut mid = cur.clone();
        mid[v] += h / 2.0;
        let pm = rule.probabilities(&mid);
        let mut nxt = cur.clone();
        nxt[v] += h;
        let p1 = rule.probabilities(&nxt);
        cost += s * (transport_cost(&u.metric, &p0, &pm) + transport_cost(&u.metric, &pm, &p1));
        cost += u.r(v) * h * (p0[v] + 4.0 * pm[v] + p1[v]) / 6.0;
        cur = nxt;
        p0 = p1;
    }
    cost - ratio * alpha[v] * delta
}

/// Value iteration for the minimal potential of `rule` at the given ratio.
pub fn estimate_potential(
    rule: &dyn ProbabilityRule,
    ratio: f64,
    alpha: &WeightVector,
    opts: &PotentialOptions,
) -> Result<PotentialEstimate> {
    match rule.umts().len() {
        1 => Ok(PotentialEstimate::Zero),
        2 => Ok(PotentialEstimate::Line(line_table(rule, ratio, alpha, opts)?)),
        3 | 4 => Ok(PotentialEstimate::Grid(grid_table(rule, ratio, alpha, opts)?)),
        n => Err(UmtsError::Precondition(format!(
            "value iteration supports at most 4 states, got {n}"
        ))),
    }
}

fn scale_of(rule: &dyn ProbabilityRule, ratio: f64) -> f64 {
    let u = rule.umts();
    (ratio.abs() + u.max_ratio() + u.s()).max(1.0) * u.diameter().max(1e-300)
}

fn p_at(rule: &dyn ProbabilityRule, y: f64, v: usize) -> f64 {
    rule.probabilities(&[y, 0.0])[v]
}

/// First point where the probability of `v` vanishes when moving from 0
/// towards `end`; `end` itself if it never does.
fn zero_crossing(rule: &dyn ProbabilityRule, v: usize, end: f64) -> f64 {
    if p_at(rule, 0.0, v) <= 0.0 {
        return 0.0;
    }
    if p_at(rule, end, v) > 0.0 {
        return end;
    }
    let (mut a, mut b) = (0.0, end);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid == a || mid == b {
            break;
        }
        if p_at(rule, mid, v) > 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    b
}

fn line_table(
    rule: &dyn ProbabilityRule,
    ratio: f64,
    alpha: &WeightVector,
    opts: &PotentialOptions,
) -> Result<LineTable> {
    let d = rule.umts().metric.d(0, 1);
    let hi = zero_crossing(rule, 0, d);
    let lo = zero_crossing(rule, 1, -d);
    let h = opts.grid_step * d;
    let cells = (((hi - lo) / h).ceil() as usize).max(1);
    let mut ys = Vec::with_capacity(cells + 1);
    for k in 0..=cells {
        let y = lo + (hi - lo) * k as f64 / cells as f64;
        if let Some(&prev) = ys.last() {
            refine(rule, prev, y, opts.max_prob_jump, 24, &mut ys);
        }
        ys.push(y);
    }
    let k = ys.len();
    let up: Vec<f64> = (0..k.saturating_sub(1))
        .map(|i| segment_gain(rule, ratio, alpha, &[ys[i], 0.0], 0, ys[i + 1] - ys[i], opts.substeps))
        .collect();
    let dn: Vec<f64> = (1..k)
        .map(|i| segment_gain(rule, ratio, alpha, &[ys[i], 0.0], 1, ys[i] - ys[i - 1], opts.substeps))
        .collect();
    let scale = scale_of(rule, ratio);
    let tol = opts.tol * scale;
    let cap = 1e4 * scale;
    let mut raw = vec![0.0f64; k];
    let mut sweeps = 0;
    let mut change = f64::INFINITY;
    while sweeps < opts.max_sweeps {
        sweeps += 1;
        change = 0.0;
        let order: Box<dyn Iterator<Item = usize>> = if sweeps % 2 == 1 {
            Box::new((0..k).rev())
        } else {
            Box::new(0..k)
        };
        for i in order {
            let mut best = 0.0f64;
            if i + 1 < k {
                best = best.max(up[i] + raw[i + 1]);
            }
            if i > 0 {
                best = best.max(dn[i - 1] + raw[i - 1]);
            }
            change = change.max((best - raw[i]).abs());
            raw[i] = best;
        }
        let mx = raw.iter().copied().fold(0.0, f64::max);
        if mx > cap {
            return Err(UmtsError::NonConvergence {
                sweeps,
                last_change: change,
                max_value: mx,
            });
        }
        if change <= tol && sweeps >= 2 {
            let offset = raw.iter().copied().fold(f64::INFINITY, f64::min);
            return Ok(LineTable {
                ys,
                raw,
                offset,
                ratio,
                alpha: alpha.clone(),
                substeps: opts.substeps,
                sweeps,
            });
        }
    }
    Err(UmtsError::NonConvergence {
        sweeps,
        last_change: change,
        max_value: raw.iter().copied().fold(0.0, f64::max),
    })
}

fn refine(rule: &dyn ProbabilityRule, a: f64, b: f64, jump: f64, depth: usize, out: &mut Vec<f64>) {
    if depth == 0 {
        return;
    }
    if (p_at(rule, a, 0) - p_at(rule, b, 0)).abs() > jump {
        let mid = 0.5 * (a + b);
        refine(rule, a, mid, jump, depth - 1, out);
        out.push(mid);
        refine(rule, mid, b, jump, depth - 1, out);
    }
}

impl LineTable {
    pub fn lo(&self) -> f64 {
        self.ys[0]
    }

    pub fn hi(&self) -> f64 {
        *self.ys.last().expect("non-empty table")
    }

    /// `Phi(w)` via one exact Bellman step to the neighbouring nodes.
    pub fn value(&self, rule: &dyn ProbabilityRule, w: &[f64]) -> f64 {
        let y = (w[0] - w[1]).clamp(self.lo(), self.hi());
        let k = self.ys.partition_point(|&x| x <= y).saturating_sub(1).min(self.ys.len() - 1);
        if y == self.ys[k] {
            return (self.raw[k] - self.offset).max(0.0);
        }
        let mut best = 0.0f64;
        if k + 1 < self.ys.len() {
            let g = segment_gain(rule, self.ratio, &self.alpha, &[y, 0.0], 0, self.ys[k + 1] - y, QUERY_SUBSTEPS);
            best = best.max(g + self.raw[k + 1]);
        }
        let g = segment_gain(rule, self.ratio, &self.alpha, &[y, 0.0], 1, y - self.ys[k], QUERY_SUBSTEPS);
        best = best.max(g + self.raw[k]);
        (best - self.offset).max(0.0)
    }

    pub fn sup(&self) -> f64 {
        self.raw.iter().map(|x| x - self.offset).fold(0.0, f64::max)
    }
}

fn grid_table(
    rule: &dyn ProbabilityRule,
    ratio: f64,
    alpha: &WeightVector,
    opts: &PotentialOptions,
) -> Result<GridTable> {
    let u = rule.umts();
    let n = u.len();
    let dims = n - 1;
    let last = n - 1;
    let h = opts.grid_step * u.diameter();
    let half: Vec<usize> = (0..dims).map(|i| (u.metric.d(i, last) / h).ceil() as usize).collect();
    let counts: Vec<usize> = half.iter().map(|c| 2 * c + 1).collect();
    let lo: Vec<f64> = half.iter().map(|&c| -(c as f64) * h).collect();
    let total: usize = counts.iter().product();
    let coords = |mut idx: usize| -> Vec<usize> {
        let mut c = vec![0; dims];
        for i in (0..dims).rev() {
            c[i] = idx % counts[i];
            idx /= counts[i];
        }
        c
    };
    let index = |c: &[usize]| -> usize { c.iter().zip(&counts).fold(0, |acc, (x, k)| acc * k + x) };
    let point = |c: &[usize]| -> Vec<f64> {
        let mut w: Vec<f64> = (0..dims).map(|i| lo[i] + c[i] as f64 * h).collect();
        w.push(0.0);
        w
    };
    let valid = |w: &[f64]| -> bool {
        (0..n).all(|i| (0..n).all(|j| w[i] - w[j] <= u.metric.d(i, j) + 1e-9))
    };
    let neighbour = |c: &[usize], v: usize| -> Option<Vec<usize>> {
        let mut c2 = c.to_vec();
        if v < dims {
            c2[v] += 1;
            if c2[v] >= counts[v] {
                return None;
            }
        } else {
            for x in c2.iter_mut() {
                if *x == 0 {
                    return None;
                }
                *x -= 1;
            }
        }
        Some(c2)
    };
    // reachability and edges
    let origin = index(&half);
    let mut reach = vec![false; total];
    let mut edges: Vec<Vec<(usize, f64)>> = vec![Vec::new(); total];
    let mut queue = VecDeque::from([origin]);
    reach[origin] = true;
    while let Some(idx) = queue.pop_front() {
        let c = coords(idx);
        let w = point(&c);
        let p = rule.probabilities(&w);
        for v in 0..n {
            if p[v] <= 0.0 {
                continue;
            }
            let Some(c2) = neighbour(&c, v) else { continue };
            let w2 = point(&c2);
            if !valid(&w2) {
                continue;
            }
            let mut probe = w.clone();
            probe[v] += 0.999 * h;
            if rule.probabilities(&probe)[v] <= 0.0 {
                continue;
            }
            let j = index(&c2);
            let g = segment_gain(rule, ratio, alpha, &w, v, h, opts.substeps);
            edges[idx].push((j, g));
            if !reach[j] {
                reach[j] = true;
                queue.push_back(j);
            }
        }
    }
    let nodes: Vec<usize> = (0..total).filter(|&i| reach[i]).collect();
    let scale = scale_of(rule, ratio);
    let tol = opts.tol * scale;
    let cap = 1e4 * scale;
    let mut raw = vec![f64::NAN; total];
    for &i in &nodes {
        raw[i] = 0.0;
    }
    let mut sweeps = 0;
    let mut change = f64::INFINITY;
    while sweeps < opts.max_sweeps {
        sweeps += 1;
        change = 0.0;
        let fwd = sweeps % 2 == 0;
        for t in 0..nodes.len() {
            let i = if fwd { nodes[t] } else { nodes[nodes.len() - 1 - t] };
            let mut best = 0.0f64;
            for &(j, g) in &edges[i] {
                best = best.max(g + raw[j]);
            }
            change = change.max((best - raw[i]).abs());
            raw[i] = best;
        }
        let mx = nodes.iter().map(|&i| raw[i]).fold(0.0, f64::max);
        if mx > cap {
            return Err(UmtsError::NonConvergence {
                sweeps,
                last_change: change,
                max_value: mx,
            });
        }
        if change <= tol && sweeps >= 2 {
            let offset = nodes.iter().map(|&i| raw[i]).fold(f64::INFINITY, f64::min);
            return Ok(GridTable {
                lo,
                h,
                counts,
                raw,
                offset,
                sweeps,
            });
        }
    }
    Err(UmtsError::NonConvergence {
        sweeps,
        last_change: change,
        max_value: nodes.iter().map(|&i| raw[i]).fold(0.0, f64::max),
    })
}

impl GridTable {
    fn index(&self, c: &[usize]) -> usize {
        c.iter().zip(&self.counts).fold(0, |acc, (x, k)| acc * k + x)
    }

    /// All reachable nodes as `(normalized work function, Phi)`.
    pub fn nodes(&self) -> Vec<(Vec<f64>, f64)> {
        let dims = self.counts.len();
        let mut out = Vec::new();
        for idx in 0..self.raw.len() {
            if self.raw[idx].is_nan() {
                continue;
            }
            let mut rem = idx;
            let mut w = vec![0.0; dims + 1];
            for i in (0..dims).rev() {
                w[i] = self.lo[i] + (rem % self.counts[i]) as f64 * self.h;
                rem /= self.counts[i];
            }
            out.push((w, self.raw[idx] - self.offset));
        }
        out
    }

    /// Interpolated `Phi(w)` (Freudenthal simplices); falls back to the
    /// largest reachable corner near the boundary of the reachable region.
    pub fn value(&self, w: &[f64]) -> f64 {
        let dims = self.counts.len();
        let last = w[dims];
        let mut base = vec![0usize; dims];
        let mut frac = vec![0.0; dims];
        for i in 0..dims {
            let x = ((w[i] - last - self.lo[i]) / self.h).clamp(0.0, (self.counts[i] - 1) as f64);
            let b = (x.floor() as usize).min(self.counts[i].saturating_sub(2));
            base[i] = b;
            frac[i] = x - b as f64;
        }
        let mut order: Vec<usize> = (0..dims).collect();
        order.sort_by(|a, b| frac[*b].total_cmp(&frac[*a]));
        let mut c = base.clone();
        let mut verts = vec![(self.index(&c), 1.0 - frac[order[0]])];
        for (t, &dim) in order.iter().enumerate() {
            c[dim] += 1;
            let next = if t + 1 < dims { frac[order[t + 1]] } else { 0.0 };
            verts.push((self.index(&c), frac[dim] - next));
        }
        if verts.iter().all(|(i, _)| !self.raw[*i].is_nan()) {
            let v: f64 = verts.iter().map(|(i, wt)| wt * self.raw[*i]).sum();
            return (v - self.offset).max(0.0);
        }
        verts
            .iter()
            .filter(|(i, _)| !self.raw[*i].is_nan())
            .map(|(i, _)| self.raw[*i] - self.offset)
            .fold(0.0, f64::max)
    }

    pub fn sup(&self) -> f64 {
        self.raw
            .iter()
            .filter(|x| !x.is_nan())
            .map(|x| x - self.offset)
            .fold(0.0, f64::max)
    }
}

impl PotentialEstimate {
    pub fn value(&self, rule: &dyn ProbabilityRule, w: &[f64]) -> f64 {
        match self {
            PotentialEstimate::Zero => 0.0,
            PotentialEstimate::Line(t) => t.value(rule, w),
            PotentialEstimate::Grid(g) => g.value(w),
        }
    }

    pub fn sup(&self) -> f64 {
        match self {
            PotentialEstimate::Zero => 0.0,
            PotentialEstimate::Line(t) => t.sup(),
            PotentialEstimate::Grid(g) => g.sup(),
        }
    }

    pub fn sweeps(&self) -> usize {
        match self {
            PotentialEstimate::Zero => 0,
            PotentialEstimate::Line(t) => t.sweeps,
            PotentialEstimate::Grid(g) => g.sweeps,
        }
    }
}
