use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adversary::{next_task, rng_for, AdversaryConfig};
use crate::algo::OnlineAlgorithm;
use crate::runner::{runner_for, AuditLog, CheckStat};
use crate::umts::{apply_elementary, initial_work_function, moving_cost, opt_value, ElementaryTask, Umts};
use crate::{AUDIT_TOL, EQ_TOL};

/// Outcome of one audited run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub algorithm: String,
    pub steps: usize,
    pub cost: f64,
    pub moving: f64,
    pub local: f64,
    pub opt: f64,
    pub declared_ratio: f64,
    /// `(1 + eta) r diam + sup Phi`.
    pub additive: f64,
    /// `(cost - additive) / opt`, absent when `opt = 0`.
    pub ratio: Option<f64>,
    pub ratio_ok: bool,
    /// Whether a potential was available for the sensibility check.
    pub has_potential: bool,
    pub checks: AuditLog,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.ratio_ok && self.checks.passed()
    }

    pub fn check(&self, name: &str) -> CheckStat {
        self.checks.summary(name)
    }
}

/// The additive constant `(1 + eta) r diam(M) + sup Phi`.
pub fn additive_constant(alg: &dyn OnlineAlgorithm) -> f64 {
    let r = alg.declared_ratio();
    let eta = alg.constraints().eta;
    (1.0 + eta) * r * alg.umts().diameter() + alg.potential_sup().unwrap_or(0.0).max(0.0)
}

struct Auditor {
    alg: Arc<dyn OnlineAlgorithm>,
    run: Box<dyn crate::runner::Runner>,
    w_opt: Vec<f64>,
    phi: Option<f64>,
    log: AuditLog,
    moving: f64,
    local: f64,
    steps: usize,
}

impl Auditor {
    fn new(alg: &Arc<dyn OnlineAlgorithm>) -> Self {
        let run = runner_for(alg);
        let u = alg.umts();
        // the initial move from the start state onto the algorithm's
        // distribution is charged
        let mut start = vec![0.0; u.len()];
        start[u.initial_state] = 1.0;
        let moving = moving_cost(u, &start, run.probabilities()).expect("dimensions agree");
        let phi = alg.potential(run.work_function());
        Auditor {
            alg: alg.clone(),
            run,
            w_opt: initial_work_function(u),
            phi,
            log: AuditLog::default(),
            moving,
            local: 0.0,
            steps: 0,
        }
    }

    fn step(&mut self, task: ElementaryTask) {
        self.steps += 1;
        let step = self.steps as u64;
        let u = self.alg.umts().clone();
        let w0 = self.run.work_function().to_vec();
        let p0 = self.run.probabilities().to_vec();
        // reasonableness: positive mass at v just before every charge level
        if task.charge > 0.0 {
            let mut probe = w0.clone();
            apply_elementary(&u.metric, &mut probe, ElementaryTask::new(task.state, task.charge * (1.0 - 1e-9)));
            let ok = p0[task.state] > 0.0 && self.alg.probabilities(&probe)[task.state] > 0.0;
            self.log.check("reasonable", step, if ok { 0.0 } else { -1.0 }, 0.0);
        }
        let cost = self.run.step(task);
        self.moving += cost.moving;
        self.local += cost.local;
        apply_elementary(&u.metric, &mut self.w_opt, task);
        let w1 = self.run.work_function().to_vec();
        let p1 = self.run.probabilities().to_vec();
        // probability vector validity
        let sum: f64 = p1.iter().sum();
        let neg = p1.iter().copied().fold(0.0, f64::min);
        self.log.check("probability", step, EQ_TOL - (sum - 1.0).abs().max(-neg), 0.0);
        // observation: only w(v) moves, by at most delta, never down
        let mut obs: f64 = 0.0;
        for x in 0..w1.len() {
            let dx = w1[x] - w0[x];
            if x == task.state {
                obs = obs.max(dx - task.charge).max(-dx);
            } else {
                obs = obs.max(dx.abs());
            }
        }
        self.log.check("observation", step, EQ_TOL * (1.0 + task.charge) - obs, 0.0);
        // constrained rule
        let c = self.alg.constraints();
        let mut worst: f64 = 0.0;
        for a in 0..w1.len() {
            for b in 0..w1.len() {
                if a != b && w1[a] - w1[b] >= c.beta * u.metric.d(a, b) {
                    worst = worst.max(p1[a]);
                }
            }
        }
        self.log.check("constrained", step, -worst, AUDIT_TOL);
        // sensibility: cost + Phi' - Phi <= r <alpha, w' - w>
        if let Some(phi0) = self.phi {
            if let Some(phi1) = self.alg.potential(&w1) {
                let r = self.alg.declared_ratio();
                let gain = r * self.alg.weights().dot(&w1) - r * self.alg.weights().dot(&w0);
                let tol = AUDIT_TOL * 1f64.max(phi1.abs()).max(cost.total()).max(gain.abs());
                self.log.check("sensible", step, gain - cost.total() - (phi1 - phi0), tol);
                self.phi = Some(phi1);
            }
        }
    }

    fn finish(self) -> AuditReport {
        let mut checks = self.log;
        checks.merge(&self.run.audit(), "");
        let cost = self.moving + self.local;
        let opt = opt_value(&self.w_opt);
        let r = self.alg.declared_ratio();
        let additive = additive_constant(self.alg.as_ref());
        let ratio = (opt > EQ_TOL).then(|| (cost - additive) / opt);
        let ratio_ok = cost <= r * opt + additive + AUDIT_TOL * (1.0 + cost);
        AuditReport {
            algorithm: self.alg.name(),
            steps: self.steps,
            cost,
            moving: self.moving,
            local: self.local,
            opt,
            declared_ratio: r,
            additive,
            ratio,
            ratio_ok,
            has_potential: self.phi.is_some(),
            checks,
        }
    }
}

/// Replays `sigma` through `alg` with every per-step check.
pub fn audit_run(alg: &Arc<dyn OnlineAlgorithm>, sigma: &[ElementaryTask]) -> AuditReport {
    let mut a = Auditor::new(alg);
    for t in sigma {
        a.step(*t);
    }
    a.finish()
}

/// Generates and audits in one pass (the adversary sees the live state).
pub fn adversary_run(alg: &Arc<dyn OnlineAlgorithm>, cfg: &AdversaryConfig) -> AuditReport {
    let mut rng = rng_for(cfg.seed);
    let mut a = Auditor::new(alg);
    for _ in 0..cfg.steps {
        let t = next_task(cfg, alg.as_ref(), a.run.work_function(), a.run.probabilities(), &mut rng);
        a.step(t);
    }
    a.finish()
}

/// Worst ratio over a set of runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioSummary {
    pub worst_ratio: Option<f64>,
    pub runs: usize,
    pub skipped: usize,
    pub all_passed: bool,
    pub reports: Vec<AuditReport>,
}

/// Runs every config (in parallel), in config order.
pub fn empirical_ratio(alg: &Arc<dyn OnlineAlgorithm>, cfgs: &[AdversaryConfig]) -> RatioSummary {
    let reports: Vec<AuditReport> = cfgs.par_iter().map(|c| adversary_run(alg, c)).collect();
    let worst_ratio = reports.iter().filter_map(|r| r.ratio).reduce(f64::max);
    RatioSummary {
        worst_ratio,
        runs: reports.len(),
        skipped: reports.iter().filter(|r| r.ratio.is_none()).count(),
        all_passed: reports.iter().all(AuditReport::passed),
        reports,
    }
}

/// Costs of running an algorithm built for one metric on another metric over
/// the same states (for example a tree approximation of the real space).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub cost: f64,
    pub opt: f64,
    pub ratio: Option<f64>,
}

/// Serves `sigma` with `alg` but pays moving costs and measures the optimum
/// in `target`. The additive constant is the one of `alg`, scaled by
/// `diam(target) / diam(alg space)`.
pub fn transfer_run(alg: &Arc<dyn OnlineAlgorithm>, target: &Umts, sigma: &[ElementaryTask]) -> TransferReport {
    let mut run = runner_for(alg);
    let mut start = vec![0.0; target.len()];
    start[target.initial_state] = 1.0;
    let mut cost = moving_cost(target, &start, run.probabilities()).expect("dimensions agree");
    let mut w = initial_work_function(target);
    for t in sigma {
        let before = run.probabilities().to_vec();
        run.step(*t);
        let after = run.probabilities();
        cost += moving_cost(target, &before, after).expect("dimensions agree");
        cost += after[t.state] * t.charge * target.r(t.state);
        apply_elementary(&target.metric, &mut w, *t);
    }
    let opt = opt_value(&w);
    let src = alg.umts().diameter();
    let scale = if src > 0.0 { target.diameter() / src } else { 1.0 };
    let add = additive_constant(alg.as_ref()) * scale.max(1.0);
    TransferReport {
        cost,
        opt,
        ratio: (opt > EQ_TOL).then(|| (cost - add) / opt),
    }
}
