//! Online simulation of an algorithm on a task sequence.
//!
//! Stable algorithms only need their internal work function. Combined
//! algorithms are simulated literally (per-block and quotient runs driven by
//! translated tasks) so that the construction's lemmas can be checked on
//! every step.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::algo::OnlineAlgorithm;
use crate::umts::{apply_elementary, moving_cost, ElementaryTask};

/// Running statistics of one audited inequality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckStat {
    pub evaluations: u64,
    pub violations: u64,
    /// Smallest observed `allowed - actual`; negative beyond the tolerance
    /// means a violation.
    pub worst_slack: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_violation: Option<u64>,
}

impl Default for CheckStat {
    fn default() -> Self {
        CheckStat {
            evaluations: 0,
            violations: 0,
            worst_slack: f64::INFINITY,
            first_violation: None,
        }
    }
}

/// Named checks, merged across nested simulations.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditLog {
    pub checks: BTreeMap<String, CheckStat>,
    /// Count of tiny negative translated charges that were clamped to zero.
    pub clamped: u64,
}

impl AuditLog {
    /// Records `slack >= -tol` for check `name` at `step`.
    pub fn check(&mut self, name: &str, step: u64, slack: f64, tol: f64) -> bool {
        let c = self.checks.entry(name.to_string()).or_default();
        c.evaluations += 1;
        if slack < c.worst_slack {
            c.worst_slack = slack;
        }
        let ok = slack >= -tol;
        if !ok {
            c.violations += 1;
            c.first_violation.get_or_insert(step);
        }
        ok
    }

    pub fn merge(&mut self, other: &AuditLog, prefix: &str) {
        for (k, v) in &other.checks {
            let name = if prefix.is_empty() { k.clone() } else { format!("{prefix}/{k}") };
            let c = self.checks.entry(name).or_default();
            c.evaluations += v.evaluations;
            c.violations += v.violations;
            c.worst_slack = c.worst_slack.min(v.worst_slack);
            if let Some(s) = v.first_violation {
                c.first_violation = Some(c.first_violation.map_or(s, |x| x.min(s)));
            }
        }
        self.clamped += other.clamped;
    }

    pub fn passed(&self) -> bool {
        self.checks.values().all(|c| c.violations == 0)
    }

    /// Stats of the check named `name` (exact) or, failing that, of all
    /// nested checks whose last path component is `name`.
    pub fn summary(&self, name: &str) -> CheckStat {
        let mut out = CheckStat::default();
        for (k, v) in &self.checks {
            if k == name || k.rsplit('/').next() == Some(name) {
                out.evaluations += v.evaluations;
                out.violations += v.violations;
                out.worst_slack = out.worst_slack.min(v.worst_slack);
                if let Some(s) = v.first_violation {
                    out.first_violation = Some(out.first_violation.map_or(s, |x| x.min(s)));
                }
            }
        }
        out
    }
}

/// Costs of one served task.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepCost {
    pub moving: f64,
    pub local: f64,
}

impl StepCost {
    pub fn total(&self) -> f64 {
        self.moving + self.local
    }
}

pub trait Runner: Send {
    fn probabilities(&self) -> &[f64];
    /// Internal work function, starting from all zeros.
    fn work_function(&self) -> &[f64];
    fn step(&mut self, task: ElementaryTask) -> StepCost;
    fn audit(&self) -> AuditLog {
        AuditLog::default()
    }
}

/// Runs a stable algorithm through its probability rule.
pub struct StableRunner {
    alg: Arc<dyn OnlineAlgorithm>,
    w: Vec<f64>,
    p: Vec<f64>,
}

impl StableRunner {
    pub fn new(alg: Arc<dyn OnlineAlgorithm>) -> Self {
        let w = vec![0.0; alg.umts().len()];
        let p = alg.probabilities(&w).into_inner();
        StableRunner { alg, w, p }
    }
}

impl Runner for StableRunner {
    fn probabilities(&self) -> &[f64] {
        &self.p
    }

    fn work_function(&self) -> &[f64] {
        &self.w
    }

    fn step(&mut self, task: ElementaryTask) -> StepCost {
        let u = self.alg.umts();
        apply_elementary(&u.metric, &mut self.w, task);
        let p = self.alg.probabilities(&self.w).into_inner();
        let moving = moving_cost(u, &self.p, &p).expect("dimensions agree");
        let local = p[task.state] * task.charge * u.r(task.state);
        self.p = p;
        StepCost { moving, local }
    }
}

/// Skips zero-charge tasks entirely, so no move is ever made without a
/// charge. For stable algorithms this changes nothing, which is the point.
pub struct LazyRunner<R: Runner> {
    inner: R,
}

impl<R: Runner> LazyRunner<R> {
    pub fn new(inner: R) -> Self {
        LazyRunner { inner }
    }
}

impl<R: Runner> Runner for LazyRunner<R> {
    fn probabilities(&self) -> &[f64] {
        self.inner.probabilities()
    }

    fn work_function(&self) -> &[f64] {
        self.inner.work_function()
    }

    fn step(&mut self, task: ElementaryTask) -> StepCost {
        if task.charge == 0.0 {
            StepCost::default()
        } else {
            self.inner.step(task)
        }
    }

    fn audit(&self) -> AuditLog {
        self.inner.audit()
    }
}

/// The natural runner: literal simulation for combined algorithms, the
/// probability rule otherwise.
pub fn runner_for(alg: &Arc<dyn OnlineAlgorithm>) -> Box<dyn Runner> {
    match alg.as_combined() {
        Some(c) => Box::new(crate::combiner::CombinedRun::new(c.clone(), false)),
        None => Box::new(StableRunner::new(alg.clone())),
    }
}
