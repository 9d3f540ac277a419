//! Combining per-block algorithms and a quotient algorithm into one
//! constrained algorithm for a partitioned space.
//!
//! For a partition `M_1..M_b` with block algorithms `A_l` (ratio `r_l`,
//! weights `alpha_l`, potential `Phi_l`) and an algorithm `A_hat` on the
//! quotient space whose state costs are the block ratios, the combined
//! algorithm puts mass `p_l(v) * p_hat(z_l)` on `v in M_l`. A task `(v, delta)`
//! inside `M_l` is forwarded to `A_l` and translated into the quotient task
//! `(z_l, delta_hat)` with
//!
//! `delta_hat = change of (<alpha_l, w_l> - Phi_l(w_l) / r_l)`,
//!
//! an upper bound on `A_l`'s cost divided by `r_l`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::algo::{Constraints, Descriptor, OnlineAlgorithm, ProbabilityRule};
use crate::error::{Result, UmtsError};
use crate::metric::{FiniteMetric, Partition, QuotientMetric};
use crate::runner::{runner_for, AuditLog, Runner, StepCost};
use crate::umts::{apply_elementary, moving_cost, ElementaryTask, ProbVector, Umts, WeightVector};
use crate::{AUDIT_TOL, EQ_TOL};

/// Everything the construction needs.
#[derive(Clone)]
pub struct CombineSpec {
    pub umts: Umts,
    pub partition: Partition,
    pub blocks: Vec<Arc<dyn OnlineAlgorithm>>,
    pub quotient: QuotientMetric,
    pub quotient_alg: Arc<dyn OnlineAlgorithm>,
}

impl fmt::Debug for CombineSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CombineSpec")
            .field("partition", &self.partition.blocks())
            .field("blocks", &self.blocks.iter().map(|b| b.name()).collect::<Vec<_>>())
            .field("quotient_alg", &self.quotient_alg.name())
            .finish()
    }
}

/// The UMTS on the quotient space: state costs are the block ratios.
pub fn quotient_umts(u: &Umts, q: &QuotientMetric, block_ratios: Vec<f64>) -> Result<Umts> {
    Umts::new(q.metric.clone(), block_ratios, u.s())
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= EQ_TOL * (1.0 + a.abs().max(b.abs()))
}

fn same_metric(a: &FiniteMetric, b: &FiniteMetric) -> bool {
    a.len() == b.len() && (0..a.len()).all(|i| (0..a.len()).all(|j| close(a.d(i, j), b.d(i, j))))
}

impl CombineSpec {
    /// Spec with the tight quotient metric (largest cross-block distances).
    pub fn new(
        umts: Umts,
        partition: Partition,
        blocks: Vec<Arc<dyn OnlineAlgorithm>>,
        quotient_alg: Arc<dyn OnlineAlgorithm>,
    ) -> Result<Self> {
        let quotient = QuotientMetric::tight(&umts.metric, &partition)?;
        let spec = CombineSpec {
            umts,
            partition,
            blocks,
            quotient,
            quotient_alg,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_quotient(
        umts: Umts,
        partition: Partition,
        blocks: Vec<Arc<dyn OnlineAlgorithm>>,
        quotient: QuotientMetric,
        quotient_alg: Arc<dyn OnlineAlgorithm>,
    ) -> Result<Self> {
        let spec = CombineSpec {
            umts,
            partition,
            blocks,
            quotient,
            quotient_alg,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn block_ratios(&self) -> Vec<f64> {
        self.blocks.iter().map(|b| b.declared_ratio()).collect()
    }

    /// The UMTS the quotient algorithm must be built for.
    pub fn quotient_umts(&self) -> Result<Umts> {
        quotient_umts(&self.umts, &self.quotient, self.block_ratios())
    }

    fn validate(&self) -> Result<()> {
        let p = &self.partition;
        if self.blocks.len() != p.num_blocks() {
            return Err(UmtsError::Dimension {
                expected: p.num_blocks(),
                got: self.blocks.len(),
            });
        }
        for (l, (alg, block)) in self.blocks.iter().zip(p.blocks()).enumerate() {
            let bu = alg.umts();
            let want = self.umts.restrict(block);
            let ok = bu.len() == block.len()
                && close(bu.s(), self.umts.s())
                && (0..block.len()).all(|i| close(bu.r(i), want.r(i)))
                && same_metric(&bu.metric, &want.metric);
            if !ok {
                return Err(UmtsError::Precondition(format!(
                    "block {l} algorithm is not built for the induced sub-UMTS"
                )));
            }
        }
        let qu = self.quotient_alg.umts();
        let ratios = self.block_ratios();
        let ok = qu.len() == ratios.len()
            && close(qu.s(), self.umts.s())
            && ratios.iter().enumerate().all(|(i, r)| close(qu.r(i), *r))
            && same_metric(&qu.metric, &self.quotient.metric);
        if !ok {
            return Err(UmtsError::Precondition(
                "quotient algorithm must run on the quotient metric with the block ratios as costs".into(),
            ));
        }
        Ok(())
    }
}

/// Constraints of the combined algorithm (general partition).
///
/// `beta = max{ max_i beta_i, max_{i != j} [beta_hat d_hat(z_i,z_j) + beta_j diam_j
/// + beta_i diam_i + eta_i diam_i] / min cross distance(i,j) }` and
/// `eta = eta_hat diam(M_hat)/diam(M) + max_i eta_i diam_i / diam(M)`.
pub fn combine_beta_eta(spec: &CombineSpec) -> Result<Constraints> {
    let m = &spec.umts.metric;
    let p = &spec.partition;
    let qc = spec.quotient_alg.constraints();
    let cs: Vec<Constraints> = spec.blocks.iter().map(|b| b.constraints()).collect();
    let diams: Vec<f64> = spec.blocks.iter().map(|b| b.umts().diameter()).collect();
    let b = p.num_blocks();
    let mut beta = cs.iter().map(|c| c.beta).fold(0.0, f64::max);
    for i in 0..b {
        for j in 0..b {
            if i == j {
                continue;
            }
            let num = qc.beta * spec.quotient.metric.d(i, j)
                + cs[j].beta * diams[j]
                + cs[i].beta * diams[i]
                + cs[i].eta * diams[i];
            beta = beta.max(num / p.min_cross(m, i, j));
        }
    }
    let diam = m.diameter();
    let eta = if diam > 0.0 {
        qc.eta * spec.quotient.metric.diameter() / diam
            + (0..b).map(|i| cs[i].eta * diams[i] / diam).fold(0.0, f64::max)
    } else {
        cs.iter().map(|c| c.eta).fold(0.0, f64::max)
    };
    if beta > 1.0 + 1e-12 {
        return Err(UmtsError::BetaTooLarge { beta });
    }
    Ok(Constraints::new(beta, eta))
}

/// Constraints for a nice partition (all cross distances equal the diameter,
/// block diameters at most `diam / k`):
/// `beta = max{max_i beta_i, beta_hat + max_{i != j} (beta_i + beta_j + eta_i) / k}`,
/// `eta = eta_hat + max_i eta_i / k`.
pub fn nice_beta_eta(quotient: Constraints, blocks: &[Constraints], k: f64) -> Result<Constraints> {
    let mut beta = blocks.iter().map(|c| c.beta).fold(0.0, f64::max);
    for (i, ci) in blocks.iter().enumerate() {
        for (j, cj) in blocks.iter().enumerate() {
            if i != j {
                beta = beta.max(quotient.beta + (ci.beta + cj.beta + ci.eta) / k);
            }
        }
    }
    let eta = quotient.eta + blocks.iter().map(|c| c.eta).fold(0.0, f64::max) / k;
    if beta > 1.0 + 1e-12 {
        return Err(UmtsError::BetaTooLarge { beta });
    }
    Ok(Constraints::new(beta, eta))
}

/// `sigma` restricted to block `l`, in block coordinates: tasks outside the
/// block become zero charges on the block's lexicographically first label.
pub fn restrict_sequence(
    m: &FiniteMetric,
    partition: &Partition,
    sigma: &[ElementaryTask],
    l: usize,
) -> Vec<ElementaryTask> {
    let block = &partition.blocks()[l];
    let anchor = (0..block.len())
        .min_by(|&a, &b| m.labels()[block[a]].cmp(&m.labels()[block[b]]))
        .unwrap_or(0);
    sigma
        .iter()
        .map(|t| {
            if partition.block_of(t.state) == l {
                ElementaryTask::new(partition.slot_of(t.state), t.charge)
            } else {
                ElementaryTask::new(anchor, 0.0)
            }
        })
        .collect()
}

type Builder = Arc<dyn Fn(&Umts) -> Result<Arc<dyn OnlineAlgorithm>> + Send + Sync>;

/// The combined algorithm in closed (stable) form. Use [`CombinedRun`] to
/// simulate the construction literally.
#[derive(Clone)]
pub struct CombinedAlgorithm {
    spec: Arc<CombineSpec>,
    alpha: WeightVector,
    computed: Constraints,
    exported: Constraints,
    block_phi0: Vec<f64>,
    family: String,
    params: serde_json::Value,
    builder: Option<Builder>,
    declared: Option<f64>,
}

impl fmt::Debug for CombinedAlgorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CombinedAlgorithm")
            .field("family", &self.family)
            .field("spec", &self.spec)
            .field("computed", &self.computed)
            .field("exported", &self.exported)
            .finish()
    }
}

/// Builds the combined algorithm; fails when the constraint arithmetic gives
/// `beta > 1` or a block has no potential.
pub fn combine(spec: CombineSpec) -> Result<CombinedAlgorithm> {
    let computed = combine_beta_eta(&spec)?;
    let p = &spec.partition;
    let qa = spec.quotient_alg.weights();
    let mut alpha = vec![0.0; spec.umts.len()];
    let mut block_phi0 = Vec::with_capacity(p.num_blocks());
    for (l, block) in p.blocks().iter().enumerate() {
        let a = &spec.blocks[l];
        let al = a.weights();
        for (slot, &v) in block.iter().enumerate() {
            alpha[v] = qa[l] * al[slot];
        }
        let phi0 = a
            .potential(&vec![0.0; block.len()])
            .ok_or_else(|| UmtsError::NoPotential(a.name()))?;
        block_phi0.push(phi0);
    }
    let s: f64 = alpha.iter().sum();
    alpha.iter_mut().for_each(|x| *x /= s);
    Ok(CombinedAlgorithm {
        spec: Arc::new(spec),
        alpha: WeightVector::new(alpha)?,
        computed,
        exported: computed,
        block_phi0,
        family: "combined".into(),
        params: serde_json::Value::Null,
        builder: None,
        declared: None,
    })
}

impl CombinedAlgorithm {
    pub fn spec(&self) -> &CombineSpec {
        &self.spec
    }

    /// Constraints from the general formula on the actual components.
    pub fn computed_constraints(&self) -> Constraints {
        self.computed
    }

    /// Exports weaker constraints than the computed ones (for example the
    /// values a construction is documented to guarantee for all inputs).
    pub fn with_exported(mut self, c: Constraints) -> Result<Self> {
        if c.beta + 1e-12 < self.computed.beta || c.eta + 1e-12 < self.computed.eta || c.beta > 1.0 + 1e-12 {
            return Err(UmtsError::Precondition(format!(
                "exported constraints {c:?} are stronger than the computed {:?}",
                self.computed
            )));
        }
        self.exported = c;
        Ok(self)
    }

    /// Declares a ratio above the quotient's. The potential is rescaled
    /// accordingly, which stays valid because translated charges are
    /// nonnegative.
    pub fn with_declared_ratio(mut self, r: f64) -> Result<Self> {
        let actual = self.spec.quotient_alg.declared_ratio();
        if r + 1e-12 * (1.0 + r.abs()) < actual {
            return Err(UmtsError::Precondition(format!(
                "declared ratio {r} is below the quotient ratio {actual}"
            )));
        }
        self.declared = Some(r);
        Ok(self)
    }

    /// Names the construction and how to rebuild it on another UMTS.
    pub fn with_family(mut self, family: &str, params: serde_json::Value, builder: Option<Builder>) -> Self {
        self.family = family.to_string();
        self.params = params;
        self.builder = builder;
        self
    }

    pub fn block_work(&self, w: &[f64], l: usize) -> Vec<f64> {
        self.spec.partition.blocks()[l].iter().map(|&v| w[v]).collect()
    }

    /// `<alpha_l, w_l> - Phi_l(w_l) / r_l`.
    pub fn block_target(&self, l: usize, wl: &[f64]) -> f64 {
        let a = &self.spec.blocks[l];
        let r = a.declared_ratio();
        let phi = a.potential(wl).unwrap_or(0.0);
        let base = a.weights().dot(wl);
        if r > 0.0 {
            base - phi / r
        } else {
            base
        }
    }

    fn block_target0(&self, l: usize) -> f64 {
        let r = self.spec.blocks[l].declared_ratio();
        if r > 0.0 {
            -self.block_phi0[l] / r
        } else {
            0.0
        }
    }

    /// Probabilities and (optionally) the potential in one bottom-up pass,
    /// evaluating every component once.
    fn eval(&self, w: &[f64], want_phi: bool) -> (ProbVector, Option<f64>) {
        let spec = &self.spec;
        let b = spec.partition.num_blocks();
        let mut wh = Vec::with_capacity(b);
        let mut pls = Vec::with_capacity(b);
        let mut phis = Vec::with_capacity(b);
        for l in 0..b {
            let a = &spec.blocks[l];
            let wl = self.block_work(w, l);
            let (pl, phi) = a.evaluate(&wl);
            let r = a.declared_ratio();
            let phi_v = phi.unwrap_or(0.0);
            let target = a.weights().dot(&wl) - if r > 0.0 { phi_v / r } else { 0.0 };
            wh.push(target - self.block_target0(l));
            pls.push(pl);
            phis.push(phi);
        }
        let (ph, phi_hat) = if want_phi {
            spec.quotient_alg.evaluate(&wh)
        } else {
            (spec.quotient_alg.probabilities(&wh), None)
        };
        let mut p = vec![0.0; w.len()];
        for (l, block) in spec.partition.blocks().iter().enumerate() {
            for (slot, &v) in block.iter().enumerate() {
                p[v] = pls[l][slot] * ph[l];
            }
        }
        let phi = if want_phi {
            let r = self.declared_ratio();
            let ah = spec.quotient_alg.weights();
            let mut total = phi_hat;
            for (l, a) in spec.blocks.iter().enumerate() {
                let rl = a.declared_ratio();
                if rl > 0.0 {
                    total = match (total, phis[l]) {
                        (Some(t), Some(x)) => Some(t + r * ah[l] * x / rl),
                        _ => None,
                    };
                }
            }
            total
        } else {
            None
        };
        (ProbVector::from_raw(p), phi)
    }

    /// Quotient work function implied by `w` (zero at the start).
    pub fn w_hat(&self, w: &[f64]) -> Vec<f64> {
        (0..self.spec.partition.num_blocks())
            .map(|l| self.block_target(l, &self.block_work(w, l)) - self.block_target0(l))
            .collect()
    }

    /// The quotient task for `(v, delta)` issued at work function `w`.
    pub fn translate_task(&self, w: &[f64], task: ElementaryTask) -> ElementaryTask {
        let p = &self.spec.partition;
        let l = p.block_of(task.state);
        let mut wl = self.block_work(w, l);
        let before = self.block_target(l, &wl);
        let bm = &self.spec.blocks[l].umts().metric;
        apply_elementary(bm, &mut wl, ElementaryTask::new(p.slot_of(task.state), task.charge));
        let dh = self.block_target(l, &wl) - before;
        ElementaryTask::new(l, dh.max(0.0))
    }
}

impl ProbabilityRule for CombinedAlgorithm {
    fn umts(&self) -> &Umts {
        &self.spec.umts
    }

    fn probabilities(&self, w: &[f64]) -> ProbVector {
        self.eval(w, false).0
    }
}

impl OnlineAlgorithm for CombinedAlgorithm {
    fn name(&self) -> String {
        format!("{}(n={})", self.family, self.spec.umts.len())
    }

    fn declared_ratio(&self) -> f64 {
        self.declared.unwrap_or_else(|| self.spec.quotient_alg.declared_ratio())
    }

    fn weights(&self) -> &WeightVector {
        &self.alpha
    }

    fn constraints(&self) -> Constraints {
        self.exported
    }

    /// `Phi_hat(w_hat) + r sum_l alpha_hat(z_l) Phi_l(w_l) / r_l`.
    fn potential(&self, w: &[f64]) -> Option<f64> {
        self.eval(w, true).1
    }

    fn evaluate(&self, w: &[f64]) -> (ProbVector, Option<f64>) {
        self.eval(w, true)
    }

    fn potential_sup(&self) -> Option<f64> {
        let r = self.declared_ratio();
        let ah = self.spec.quotient_alg.weights();
        let mut total = self.spec.quotient_alg.potential_sup()?;
        for (l, a) in self.spec.blocks.iter().enumerate() {
            let rl = a.declared_ratio();
            if rl > 0.0 {
                total += r * ah[l] * a.potential_sup()? / rl;
            }
        }
        Some(total)
    }

    fn rebuild(&self, u: &Umts) -> Result<Arc<dyn OnlineAlgorithm>> {
        if let Some(b) = &self.builder {
            return b(u);
        }
        let spec = &self.spec;
        if u.len() != spec.umts.len() {
            return Err(UmtsError::Dimension {
                expected: spec.umts.len(),
                got: u.len(),
            });
        }
        let blocks = spec
            .partition
            .blocks()
            .iter()
            .zip(&spec.blocks)
            .map(|(idx, a)| a.rebuild(&u.restrict(idx)))
            .collect::<Result<Vec<_>>>()?;
        let tight = QuotientMetric::tight(&spec.umts.metric, &spec.partition)?;
        let quotient = if same_metric(&tight.metric, &spec.quotient.metric) {
            QuotientMetric::tight(&u.metric, &spec.partition)?
        } else {
            let rho = u.diameter() / spec.umts.diameter();
            QuotientMetric::custom(&u.metric, &spec.partition, spec.quotient.metric.scaled(rho))?
        };
        let ratios = blocks.iter().map(|b| b.declared_ratio()).collect();
        let qa = spec.quotient_alg.rebuild(&quotient_umts(u, &quotient, ratios)?)?;
        let new_spec = CombineSpec::with_quotient(u.clone(), spec.partition.clone(), blocks, quotient, qa)?;
        let mut c = combine(new_spec)?;
        c.family = self.family.clone();
        c.params = self.params.clone();
        if self.exported != self.computed {
            let scale_ok = c.computed.beta <= self.exported.beta + 1e-12 && c.computed.eta <= self.exported.eta + 1e-12;
            if scale_ok {
                c.exported = self.exported;
            }
        }
        Ok(Arc::new(c))
    }

    fn descriptor(&self) -> Descriptor {
        let mut children: Vec<Descriptor> = self.spec.blocks.iter().map(|b| b.descriptor()).collect();
        children.push(self.spec.quotient_alg.descriptor());
        let mut params = self.params.clone();
        if params.is_null() {
            params = serde_json::json!({});
        }
        params["computed_beta"] = serde_json::json!(self.computed.beta);
        params["computed_eta"] = serde_json::json!(self.computed.eta);
        params["blocks"] = serde_json::json!(self
            .spec
            .partition
            .blocks()
            .iter()
            .map(|b| b.iter().map(|&v| self.spec.umts.metric.labels()[v].clone()).collect::<Vec<_>>())
            .collect::<Vec<_>>());
        Descriptor {
            family: self.family.clone(),
            states: self.spec.umts.metric.labels().to_vec(),
            ratio: self.declared_ratio(),
            beta: self.exported.beta,
            eta: self.exported.eta,
            params,
            children,
        }
    }

    fn as_combined(&self) -> Option<&CombinedAlgorithm> {
        Some(self)
    }
}

/// First line of an exported trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub metric: FiniteMetric,
    pub blocks: Vec<Vec<usize>>,
    pub beta: f64,
    pub distance_ratio: f64,
}

/// One simulated step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub step: u64,
    pub v: usize,
    pub delta: f64,
    pub block: usize,
    pub delta_hat: f64,
    pub w: Vec<f64>,
    pub w_blocks: Vec<Vec<f64>>,
    pub w_hat: Vec<f64>,
    /// `<alpha_l, w_l> - (Phi_l(w_l) - Phi_l(0)) / r_l` per block.
    pub hatw_target: Vec<f64>,
    pub p: Vec<f64>,
    pub p_hat: Vec<f64>,
    pub cost: f64,
    pub quotient_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TraceLine {
    Header { header: TraceHeader },
    Step(TraceStep),
}

/// Literal simulation of the combined algorithm with per-step lemma audits.
pub struct CombinedRun {
    alg: CombinedAlgorithm,
    w: Vec<f64>,
    p: Vec<f64>,
    blocks: Vec<Box<dyn Runner>>,
    quotient: Box<dyn Runner>,
    targets: Vec<f64>,
    targets0: Vec<f64>,
    log: AuditLog,
    step: u64,
    trace: Option<Vec<TraceStep>>,
}

impl CombinedRun {
    pub fn new(alg: CombinedAlgorithm, keep_trace: bool) -> Self {
        let n = alg.spec.umts.len();
        let blocks: Vec<Box<dyn Runner>> = alg.spec.blocks.iter().map(runner_for).collect();
        let quotient = runner_for(&alg.spec.quotient_alg);
        let b = blocks.len();
        let targets: Vec<f64> = (0..b)
            .map(|l| alg.block_target(l, blocks[l].work_function()))
            .collect();
        let targets0 = (0..b).map(|l| alg.block_target0(l)).collect();
        let mut run = CombinedRun {
            w: vec![0.0; n],
            p: vec![0.0; n],
            blocks,
            quotient,
            targets,
            targets0,
            log: AuditLog::default(),
            step: 0,
            trace: keep_trace.then(Vec::new),
            alg,
        };
        run.p = run.product();
        run
    }

    fn product(&self) -> Vec<f64> {
        let ph = self.quotient.probabilities();
        let mut p = vec![0.0; self.w.len()];
        for (l, block) in self.alg.spec.partition.blocks().iter().enumerate() {
            let pl = self.blocks[l].probabilities();
            for (slot, &v) in block.iter().enumerate() {
                p[v] = pl[slot] * ph[l];
            }
        }
        p
    }

    pub fn header(&self) -> TraceHeader {
        TraceHeader {
            metric: self.alg.spec.umts.metric.clone(),
            blocks: self.alg.spec.partition.blocks().to_vec(),
            beta: self.alg.exported.beta,
            distance_ratio: self.alg.spec.umts.s(),
        }
    }

    pub fn trace(&self) -> &[TraceStep] {
        self.trace.as_deref().unwrap_or(&[])
    }

    /// The trace as JSON lines (header first).
    pub fn trace_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&TraceLine::Header { header: self.header() }).expect("serializes");
        out.push('\n');
        for s in self.trace() {
            out.push_str(&serde_json::to_string(s).expect("serializes"));
            out.push('\n');
        }
        out
    }

    fn audit_step(&mut self, l: usize, cost: f64, qcost: f64) {
        let step = self.step;
        let spec = self.alg.spec.clone();
        let part = &spec.partition;
        // hatw: the quotient work function equals the block targets
        let wh = self.quotient.work_function().to_vec();
        for m in 0..part.num_blocks() {
            let want = self.targets[m] - self.targets0[m];
            let tol = AUDIT_TOL * (1.0 + want.abs());
            self.log.check("hatw", step, tol - (wh[m] - want).abs(), 0.0);
        }
        // welleqw: block work functions agree with the global one
        for (m, block) in part.blocks().iter().enumerate() {
            let wl = self.blocks[m].work_function();
            let worst = block
                .iter()
                .enumerate()
                .map(|(slot, &v)| (wl[slot] - self.w[v]).abs() - EQ_TOL * (1.0 + self.w[v].abs()))
                .fold(f64::NEG_INFINITY, f64::max);
            self.log.check("welleqw", step, -worst, 0.0);
        }
        // betatagc: constrained states carry no mass
        let metric = &spec.umts.metric;
        let beta = self.alg.exported.beta;
        let n = self.w.len();
        let mut worst_mass: f64 = 0.0;
        for u in 0..n {
            for v in 0..n {
                if u != v && self.w[u] - self.w[v] >= beta * metric.d(u, v) {
                    worst_mass = worst_mass.max(self.p[u]);
                }
            }
        }
        self.log.check("betatagc", step, EQ_TOL - worst_mass, 0.0);
        // samecompratio: the combined step is no dearer than the quotient step
        let tol = AUDIT_TOL * (1.0 + cost.abs().max(qcost.abs()));
        self.log.check("samecompratio", step, qcost - cost, tol);
        // product measure consistency
        let ph = self.quotient.probabilities();
        let mass: f64 = part.blocks()[l].iter().map(|&v| self.p[v]).sum();
        self.log.check("product", step, EQ_TOL - (mass - ph[l]).abs(), 0.0);
    }
}

impl Runner for CombinedRun {
    fn probabilities(&self) -> &[f64] {
        &self.p
    }

    fn work_function(&self) -> &[f64] {
        &self.w
    }

    fn step(&mut self, task: ElementaryTask) -> StepCost {
        self.step += 1;
        let step = self.step;
        let spec = self.alg.spec.clone();
        let part = &spec.partition;
        let l = part.block_of(task.state);
        let slot = part.slot_of(task.state);
        // resadv: the forwarded tasks must be reasonable for the components
        if task.charge > 0.0 {
            let pl = self.blocks[l].probabilities()[slot];
            self.log.check("resadv-block", step, if pl > 0.0 { 0.0 } else { -1.0 }, 0.0);
        }
        self.blocks[l].step(ElementaryTask::new(slot, task.charge));
        let target = self.alg.block_target(l, self.blocks[l].work_function());
        let mut dh = target - self.targets[l];
        self.targets[l] = target;
        let tol = AUDIT_TOL * (1.0 + target.abs());
        self.log.check("translate", step, dh, tol);
        if dh < 0.0 {
            if dh < -EQ_TOL {
                self.log.clamped += 1;
            }
            dh = 0.0;
        }
        if dh > 0.0 {
            let ph = self.quotient.probabilities()[l];
            self.log.check("resadv-quotient", step, if ph > 0.0 { 0.0 } else { -1.0 }, 0.0);
        }
        let qcost = self.quotient.step(ElementaryTask::new(l, dh));
        apply_elementary(&spec.umts.metric, &mut self.w, task);
        let p = self.product();
        let moving = moving_cost(&spec.umts, &self.p, &p).expect("dimensions agree");
        let local = p[task.state] * task.charge * spec.umts.r(task.state);
        self.p = p;
        let cost = StepCost { moving, local };
        self.audit_step(l, cost.total(), qcost.total());
        // the closed form must agree with the simulation
        let stable = self.alg.probabilities(&self.w);
        let gap = stable.iter().zip(&self.p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        self.log.check("stable-form", step, AUDIT_TOL - gap, 0.0);
        if let Some(tr) = self.trace.as_mut() {
            let wh = self.quotient.work_function().to_vec();
            tr.push(TraceStep {
                step,
                v: task.state,
                delta: task.charge,
                block: l,
                delta_hat: dh,
                w: self.w.clone(),
                w_blocks: self.blocks.iter().map(|b| b.work_function().to_vec()).collect(),
                w_hat: wh,
                hatw_target: self.targets.iter().zip(&self.targets0).map(|(a, b)| a - b).collect(),
                p: self.p.clone(),
                p_hat: self.quotient.probabilities().to_vec(),
                cost: cost.total(),
                quotient_cost: qcost.total(),
            });
        }
        cost
    }

    fn audit(&self) -> AuditLog {
        let mut log = self.log.clone();
        for (l, b) in self.blocks.iter().enumerate() {
            log.merge(&b.audit(), &format!("block{l}"));
        }
        log.merge(&self.quotient.audit(), "quotient");
        log
    }
}

/// Result of re-checking a trace offline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceVerdict {
    pub steps: usize,
    /// `(lemma, step)` of the first violation, if any.
    pub first_violation: Option<(String, u64)>,
    pub audit: AuditLog,
}

/// Re-checks the hatw, welleqw, betatagc and samecompratio lemmas on an
/// exported trace. The quotient work function is recomputed from the
/// recorded translated charges rather than trusted.
pub fn verify_trace(text: &str) -> Result<TraceVerdict> {
    let mut header: Option<TraceHeader> = None;
    let mut log = AuditLog::default();
    let mut steps = 0usize;
    let mut first: Option<(String, u64)> = None;
    let mut w_hat: Vec<f64> = Vec::new();
    let note = |log: &mut AuditLog, name: &str, step: u64, slack: f64, tol: f64, first: &mut Option<(String, u64)>| {
        if !log.check(name, step, slack, tol) && first.is_none() {
            *first = Some((name.to_string(), step));
        }
    };
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TraceLine =
            serde_json::from_str(line).map_err(|e| UmtsError::Parse(format!("line {}: {e}", i + 1)))?;
        match parsed {
            TraceLine::Header { header: h } => {
                w_hat = vec![0.0; h.blocks.len()];
                header = Some(h);
            }
            TraceLine::Step(s) => {
                let h = header
                    .as_ref()
                    .ok_or_else(|| UmtsError::Parse("trace step before header".into()))?;
                steps += 1;
                if s.block >= w_hat.len() || s.w.len() != h.metric.len() {
                    return Err(UmtsError::Parse(format!("step {} does not match the header", s.step)));
                }
                w_hat[s.block] += s.delta_hat;
                for m in 0..w_hat.len() {
                    let want = s.hatw_target[m];
                    let tol = AUDIT_TOL * (1.0 + want.abs());
                    let gap = (w_hat[m] - want).abs().max((s.w_hat[m] - want).abs());
                    note(&mut log, "hatw", s.step, tol - gap, 0.0, &mut first);
                }
                for (m, block) in h.blocks.iter().enumerate() {
                    let worst = block
                        .iter()
                        .enumerate()
                        .map(|(slot, &v)| (s.w_blocks[m][slot] - s.w[v]).abs() - EQ_TOL * (1.0 + s.w[v].abs()))
                        .fold(f64::NEG_INFINITY, f64::max);
                    note(&mut log, "welleqw", s.step, -worst, 0.0, &mut first);
                }
                let n = s.w.len();
                let mut worst_mass: f64 = 0.0;
                for u in 0..n {
                    for v in 0..n {
                        if u != v && s.w[u] - s.w[v] >= h.beta * h.metric.d(u, v) {
                            worst_mass = worst_mass.max(s.p[u]);
                        }
                    }
                }
                note(&mut log, "betatagc", s.step, EQ_TOL - worst_mass, 0.0, &mut first);
                let tol = AUDIT_TOL * (1.0 + s.cost.abs().max(s.quotient_cost.abs()));
                note(&mut log, "samecompratio", s.step, s.quotient_cost - s.cost, tol, &mut first);
            }
        }
    }
    Ok(TraceVerdict {
        steps,
        first_violation: first,
        audit: log,
    })
}
