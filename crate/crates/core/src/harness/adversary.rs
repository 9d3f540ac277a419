use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algo::{OnlineAlgorithm, ProbabilityRule};
use crate::runner::runner_for;
use crate::umts::ElementaryTask;

/// Safety margin: tasks charge at most `(1 - MARGIN)` of the headroom.
pub const MARGIN: f64 = 1e-6;

/// Probability below which a state counts as unsupported by the algorithm.
const POSITIVE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdversaryKind {
    /// A random state with positive probability, a random fraction of its
    /// headroom.
    UniformRandom,
    /// The state maximizing `p(v) * headroom(v)`, charged a seeded fraction
    /// in `[1/2, 1]` of its headroom.
    GreedyPressure,
    /// The state with the smallest positive headroom, charged fully, which
    /// keeps pushing states to the edge of their support.
    SupportRaiser,
}

impl AdversaryKind {
    pub fn name(&self) -> &'static str {
        match self {
            AdversaryKind::UniformRandom => "uniform-random",
            AdversaryKind::GreedyPressure => "greedy-pressure",
            AdversaryKind::SupportRaiser => "support-raiser",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversaryConfig {
    pub kind: AdversaryKind,
    pub seed: u64,
    pub steps: usize,
    /// Upper bound on the charged fraction of the headroom.
    #[serde(default = "one")]
    pub max_fraction: f64,
}

fn one() -> f64 {
    1.0
}

impl AdversaryConfig {
    pub fn new(kind: AdversaryKind, seed: u64, steps: usize) -> Self {
        AdversaryConfig {
            kind,
            seed,
            steps,
            max_fraction: 1.0,
        }
    }
}

/// Largest charge `delta` at `v` such that `p(v)` stays positive for every
/// charge below it, found by bisection on the zero crossing. Bounded by the
/// point where `w(v)` becomes supported (after which it no longer moves).
pub fn headroom(rule: &dyn ProbabilityRule, w: &[f64], v: usize) -> f64 {
    let u = rule.umts();
    let n = w.len();
    let cap = (0..n)
        .filter(|&x| x != v)
        .map(|x| w[x] + u.metric.d(x, v) - w[v])
        .fold(f64::INFINITY, f64::min);
    if !cap.is_finite() {
        return u.diameter().max(1.0);
    }
    let mut probe = w.to_vec();
    let mut positive = |delta: f64| {
        probe[v] = w[v] + delta;
        rule.probabilities(&probe)[v] > POSITIVE
    };
    if !positive(0.0) {
        return 0.0;
    }
    if positive(cap) {
        return cap;
    }
    let (mut lo, mut hi) = (0.0, cap);
    for _ in 0..48 {
        let mid = 0.5 * (lo + hi);
        if positive(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-10 * cap {
            break;
        }
    }
    lo
}

/// Picks the next task for the algorithm at internal work function `w` with
/// probabilities `p`.
pub(crate) fn next_task(
    cfg: &AdversaryConfig,
    rule: &dyn ProbabilityRule,
    w: &[f64],
    p: &[f64],
    rng: &mut ChaCha8Rng,
) -> ElementaryTask {
    let live: Vec<usize> = (0..p.len()).filter(|&v| p[v] > POSITIVE).collect();
    let frac = cfg.max_fraction.clamp(0.0, 1.0) * (1.0 - MARGIN);
    match cfg.kind {
        AdversaryKind::UniformRandom => {
            let v = live[rng.gen_range(0..live.len())];
            let f: f64 = rng.gen_range(0.0..1.0);
            ElementaryTask::new(v, headroom(rule, w, v) * frac * f)
        }
        AdversaryKind::GreedyPressure => {
            // visit states by decreasing p(v) * cap(v), an upper bound on the
            // score, and stop once the bound cannot beat the best score
            let u = rule.umts();
            let cap = |v: usize| {
                (0..w.len())
                    .filter(|&x| x != v)
                    .map(|x| w[x] + u.metric.d(x, v) - w[v])
                    .fold(f64::INFINITY, f64::min)
            };
            let mut order: Vec<(usize, f64)> = live.iter().map(|&v| (v, p[v] * cap(v))).collect();
            order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            let mut best = (order[0].0, f64::NEG_INFINITY, 0.0);
            for &(v, bound) in &order {
                if bound <= best.1 {
                    break;
                }
                let h = headroom(rule, w, v);
                let score = p[v] * h;
                if score > best.1 {
                    best = (v, score, h);
                }
            }
            let jitter: f64 = rng.gen_range(0.5..=1.0);
            ElementaryTask::new(best.0, best.2 * frac * jitter)
        }
        AdversaryKind::SupportRaiser => {
            let mut best: Option<(usize, f64)> = None;
            for &v in &live {
                let h = headroom(rule, w, v);
                if h > 1e-12 && best.map_or(true, |(_, b)| h < b) {
                    best = Some((v, h));
                }
            }
            match best {
                Some((v, h)) => ElementaryTask::new(v, h * frac),
                None => ElementaryTask::new(live[0], 0.0),
            }
        }
    }
}

pub(crate) fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A reasonable elementary sequence for `alg`, deterministic in the seed.
pub fn generate_sequence(cfg: &AdversaryConfig, alg: &std::sync::Arc<dyn OnlineAlgorithm>) -> Vec<ElementaryTask> {
    let mut rng = rng_for(cfg.seed);
    let mut run = runner_for(alg);
    let mut out = Vec::with_capacity(cfg.steps);
    for _ in 0..cfg.steps {
        let t = next_task(cfg, alg.as_ref(), run.work_function(), run.probabilities(), &mut rng);
        run.step(t);
        out.push(t);
    }
    out
}
