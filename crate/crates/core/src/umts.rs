//! The UMTS cost model: tasks, work functions, probability vectors and the
//! online cost ledger.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Result, UmtsError};
use crate::metric::FiniteMetric;
use crate::transport::transport_cost;
use crate::EQ_TOL;

/// A metric space with per-state cost ratios `r_u`, a distance ratio `s`
/// and an initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Umts {
    pub metric: FiniteMetric,
    pub cost_ratios: Vec<f64>,
    pub distance_ratio: f64,
    #[serde(default)]
    pub initial_state: usize,
}

impl Umts {
    pub fn new(metric: FiniteMetric, cost_ratios: Vec<f64>, distance_ratio: f64) -> Result<Self> {
        Self::with_initial(metric, cost_ratios, distance_ratio, 0)
    }

    pub fn with_initial(
        metric: FiniteMetric,
        cost_ratios: Vec<f64>,
        distance_ratio: f64,
        initial_state: usize,
    ) -> Result<Self> {
        if cost_ratios.len() != metric.len() {
            return Err(UmtsError::Dimension {
                expected: metric.len(),
                got: cost_ratios.len(),
            });
        }
        if let Some(r) = cost_ratios.iter().find(|r| !(**r >= 0.0) || !r.is_finite()) {
            return Err(UmtsError::InvalidUmts(format!("cost ratio must be non-negative, got {r}")));
        }
        if !(distance_ratio > 0.0) || !distance_ratio.is_finite() {
            return Err(UmtsError::InvalidUmts(format!(
                "distance ratio must be positive, got {distance_ratio}"
            )));
        }
        if initial_state >= metric.len() {
            return Err(UmtsError::InvalidUmts(format!("initial state {initial_state} out of range")));
        }
        Ok(Umts {
            metric,
            cost_ratios,
            distance_ratio,
            initial_state,
        })
    }

    /// Plain MTS: all ratios 1.
    pub fn fair(metric: FiniteMetric) -> Self {
        let n = metric.len();
        Umts::new(metric, vec![1.0; n], 1.0).expect("fair UMTS is valid")
    }

    pub fn len(&self) -> usize {
        self.metric.len()
    }

    pub fn is_empty(&self) -> bool {
        self.metric.is_empty()
    }

    pub fn s(&self) -> f64 {
        self.distance_ratio
    }

    pub fn r(&self, v: usize) -> f64 {
        self.cost_ratios[v]
    }

    pub fn max_ratio(&self) -> f64 {
        self.cost_ratios.iter().copied().fold(0.0, f64::max)
    }

    pub fn diameter(&self) -> f64 {
        self.metric.diameter()
    }

    /// The UMTS `(rho M; r; s / rho)`, which has identical online costs.
    pub fn scaled(&self, rho: f64) -> Umts {
        Umts {
            metric: self.metric.scaled(rho),
            cost_ratios: self.cost_ratios.clone(),
            distance_ratio: self.distance_ratio / rho,
            initial_state: self.initial_state,
        }
    }

    /// Restriction to a subset of states (ratios and `s` kept).
    pub fn restrict(&self, idx: &[usize]) -> Umts {
        let initial_state = idx.iter().position(|&v| v == self.initial_state).unwrap_or(0);
        Umts {
            metric: self.metric.restrict(idx),
            cost_ratios: idx.iter().map(|&v| self.cost_ratios[v]).collect(),
            distance_ratio: self.distance_ratio,
            initial_state,
        }
    }
}

/// A task charging a single state: `(v, delta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElementaryTask {
    pub state: usize,
    pub charge: f64,
}

impl ElementaryTask {
    pub fn new(state: usize, charge: f64) -> Self {
        debug_assert!(charge >= 0.0);
        ElementaryTask { state, charge }
    }

    pub fn to_general(self, n: usize) -> GeneralTask {
        let mut charges = vec![0.0; n];
        charges[self.state] = self.charge;
        GeneralTask { charges }
    }
}

/// A task with a non-negative charge for every state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralTask {
    pub charges: Vec<f64>,
}

impl GeneralTask {
    pub fn new(charges: Vec<f64>) -> Result<Self> {
        if let Some(c) = charges.iter().find(|c| !(**c >= 0.0)) {
            return Err(UmtsError::Precondition(format!("task charges must be non-negative, got {c}")));
        }
        Ok(GeneralTask { charges })
    }

    pub fn zero(n: usize) -> Self {
        GeneralTask {
            charges: vec![0.0; n],
        }
    }
}

/// JSON-lines wire format of a task; states are referenced by label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TaskRecord {
    Elementary { v: String, delta: f64 },
    General { charges: Vec<f64> },
}

impl TaskRecord {
    pub fn from_elementary(m: &FiniteMetric, t: &ElementaryTask) -> Self {
        TaskRecord::Elementary {
            v: m.labels()[t.state].clone(),
            delta: t.charge,
        }
    }

    pub fn to_general(&self, m: &FiniteMetric) -> Result<GeneralTask> {
        match self {
            TaskRecord::Elementary { v, delta } => {
                Ok(ElementaryTask::new(m.index_of(v)?, *delta).to_general(m.len()))
            }
            TaskRecord::General { charges } => {
                if charges.len() != m.len() {
                    return Err(UmtsError::Dimension {
                        expected: m.len(),
                        got: charges.len(),
                    });
                }
                GeneralTask::new(charges.clone())
            }
        }
    }
}

/// Serializes elementary tasks as JSON lines.
pub fn tasks_to_jsonl(m: &FiniteMetric, tasks: &[ElementaryTask]) -> String {
    let mut s = String::new();
    for t in tasks {
        s.push_str(&serde_json::to_string(&TaskRecord::from_elementary(m, t)).expect("task serializes"));
        s.push('\n');
    }
    s
}

pub fn tasks_from_jsonl(m: &FiniteMetric, text: &str) -> Result<Vec<GeneralTask>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str::<TaskRecord>(l)?.to_general(m))
        .collect()
}

/// `w(v) = dist(init, v)`: the offline cost of ending in `v` before any task.
pub fn initial_work_function(u: &Umts) -> Vec<f64> {
    (0..u.len()).map(|v| u.metric.d(u.initial_state, v)).collect()
}

/// `w'(v) = min_u [w(u) + c_u + dist(u, v)]`.
pub fn apply_task(m: &FiniteMetric, w: &[f64], task: &GeneralTask) -> Vec<f64> {
    let n = w.len();
    (0..n)
        .map(|v| {
            (0..n)
                .map(|u| w[u] + task.charges[u] + m.d(u, v))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Work-function update for an elementary task, assuming `w` is 1-Lipschitz
/// (which every work function is).
pub fn apply_elementary(m: &FiniteMetric, w: &mut [f64], task: ElementaryTask) {
    let v = task.state;
    let mut best = w[v] + task.charge;
    for u in 0..w.len() {
        if u != v {
            best = best.min(w[u] + m.d(u, v));
        }
    }
    w[v] = best;
}

/// True iff some other state `v` has `w(u) = w(v) + dist(v, u)`.
pub fn is_supported(m: &FiniteMetric, w: &[f64], u: usize) -> bool {
    (0..w.len()).any(|v| v != u && (w[u] - w[v] - m.d(v, u)).abs() <= EQ_TOL)
}

/// Work function shifted so that its minimum is 0.
pub fn normalized(w: &[f64]) -> Vec<f64> {
    let mn = w.iter().copied().fold(f64::INFINITY, f64::min);
    w.iter().map(|x| x - mn).collect()
}

/// `min_v w(v)`.
pub fn opt_value(w: &[f64]) -> f64 {
    w.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Per-state probabilities summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    /// Validates a probability vector; entries in `[-1e-12, 0)` are clamped.
    pub fn new(mut p: Vec<f64>) -> Result<Self> {
        for x in p.iter_mut() {
            if *x < -1e-12 || !x.is_finite() {
                return Err(UmtsError::Precondition(format!("negative or non-finite probability {x}")));
            }
            if *x < 0.0 {
                *x = 0.0;
            }
        }
        let s: f64 = p.iter().sum();
        if (s - 1.0).abs() > EQ_TOL {
            return Err(UmtsError::Precondition(format!("probabilities sum to {s}")));
        }
        Ok(ProbVector(p))
    }

    /// Clamps negative entries of a raw rule output to zero and renormalizes.
    pub fn from_raw(mut p: Vec<f64>) -> Self {
        for x in p.iter_mut() {
            if !(*x > 0.0) {
                *x = 0.0;
            }
        }
        let s: f64 = p.iter().sum();
        if s > 0.0 {
            for x in p.iter_mut() {
                *x /= s;
            }
        }
        ProbVector(p)
    }

    pub fn point(n: usize, v: usize) -> Self {
        let mut p = vec![0.0; n];
        p[v] = 1.0;
        ProbVector(p)
    }

    pub fn uniform(n: usize) -> Self {
        ProbVector(vec![1.0 / n as f64; n])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_valid(&self) -> bool {
        self.0.iter().all(|x| *x >= 0.0 && x.is_finite()) && (self.0.iter().sum::<f64>() - 1.0).abs() <= EQ_TOL
    }
}

impl Deref for ProbVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Non-negative weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(a: Vec<f64>) -> Result<Self> {
        if a.iter().any(|x| !(*x >= 0.0)) {
            return Err(UmtsError::Precondition("weights must be non-negative".into()));
        }
        let s: f64 = a.iter().sum();
        if (s - 1.0).abs() > EQ_TOL {
            return Err(UmtsError::Precondition(format!("weights sum to {s}")));
        }
        Ok(WeightVector(a))
    }

    pub fn uniform(n: usize) -> Self {
        WeightVector(vec![1.0 / n as f64; n])
    }

    pub fn dot(&self, w: &[f64]) -> f64 {
        self.0.iter().zip(w).map(|(a, b)| a * b).sum()
    }
}

impl Deref for WeightVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// `s` times the optimal transport cost between `p` and `q`.
pub fn moving_cost(u: &Umts, p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != u.len() || q.len() != u.len() {
        return Err(UmtsError::Dimension {
            expected: u.len(),
            got: p.len().min(q.len()),
        });
    }
    Ok(u.s() * transport_cost(&u.metric, p, q))
}

/// Moving cost plus the local cost `sum_v p_after(v) c_v r_v`.
pub fn online_step_cost(u: &Umts, before: &[f64], after: &[f64], task: &GeneralTask) -> Result<f64> {
    let mv = moving_cost(u, before, after)?;
    let local: f64 = (0..u.len()).map(|v| after[v] * task.charges[v] * u.r(v)).sum();
    Ok(mv + local)
}

/// `<alpha, w>`.
pub fn alpha_opt_cost(alpha: &WeightVector, w: &[f64]) -> f64 {
    alpha.dot(w)
}

/// One step of an online run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub task: ElementaryTask,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_hat: Option<f64>,
    pub before: Vec<f64>,
    pub after: Vec<f64>,
    pub moving: f64,
    pub local: f64,
}

/// Cumulative online costs with optional per-step detail.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostLedger {
    pub moving: f64,
    pub local: f64,
    pub steps: Vec<StepRecord>,
    #[serde(skip)]
    pub keep_steps: bool,
}

impl CostLedger {
    pub fn new(keep_steps: bool) -> Self {
        CostLedger {
            keep_steps,
            ..Default::default()
        }
    }

    pub fn total(&self) -> f64 {
        self.moving + self.local
    }

    pub fn record(&mut self, rec: StepRecord) {
        debug_assert!(rec.moving >= 0.0 && rec.local >= 0.0);
        self.moving += rec.moving;
        self.local += rec.local;
        if self.keep_steps {
            self.steps.push(rec);
        }
    }
}
