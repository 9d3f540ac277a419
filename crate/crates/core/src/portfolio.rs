//! Compositions on uniform spaces with arbitrary cost ratios.
//!
//! * [`combined_algorithm`]: bucket the states by the size parameter `x_i`
//!   (minimal `x >= e^{e^6+1}` with `r_i <= 100 s ln x ln ln x`), run an
//!   odd-exponent variant on large buckets and the trivial algorithm on
//!   singletons, merge all but the heaviest block with an odd-exponent
//!   variant and finish with a two-stable variant.
//! * [`w_combined_algorithm`]: one arbitrary ratio plus `b - 1` equal ones.
//!
//! The `x_i` are astronomically large, so everything is carried as `ln x`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::algo::{variant_with, Constraints, OddExponent, OnlineAlgorithm, Trivial, TwoStable};
use crate::combiner::{combine, nice_beta_eta, CombineSpec, CombinedAlgorithm};
use crate::error::{Result, UmtsError};
use crate::metric::Partition;
use crate::umts::Umts;

/// `ln(e^6 + 1)`-style floor: `x >= e^{e^6 + 1}`, i.e. `ln x >= e^6 + 1`.
pub fn log_x_floor() -> f64 {
    6f64.exp() + 1.0
}

fn size_bound(s: f64, lx: f64) -> f64 {
    100.0 * s * lx * lx.ln()
}

/// `ln x` for the minimal `x >= e^{e^6+1}` with `r <= 100 s ln x ln ln x`.
pub fn solve_x(r: f64, s: f64) -> f64 {
    let lo0 = log_x_floor();
    if r <= size_bound(s, lo0) {
        return lo0;
    }
    let (mut lo, mut hi) = (lo0, 2.0 * lo0);
    while size_bound(s, hi) < r {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > 1e-12 * lo {
        let mid = 0.5 * (lo + hi);
        if size_bound(s, mid) >= r {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// `ln(sum_i e^{l_i})`.
pub fn log_sum_exp(ls: &[f64]) -> f64 {
    let m = ls.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + ls.iter().map(|l| (l - m).exp()).sum::<f64>().ln()
}

/// Bucket index `l` with `e^{l-1} <= x < e^l`.
pub fn bucket_of(lx: f64) -> i64 {
    lx.floor() as i64 + 1
}

/// Audit trail of a Combined construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinedPlan {
    pub ln_x_states: Vec<f64>,
    pub ln_x: f64,
    pub buckets: Vec<(i64, Vec<usize>)>,
    /// Blocks in merge order (heaviest first).
    pub blocks: Vec<Vec<usize>>,
    pub ln_x_blocks: Vec<f64>,
    pub block_ratios: Vec<f64>,
    pub tail_ratio: Option<f64>,
    pub ratio: f64,
    pub ledger_inner: Option<Constraints>,
    pub ledger: Constraints,
    pub chain: Vec<BoundCheck>,
}

/// One inequality of the ratio bound chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub name: String,
    pub value: f64,
    pub bound: f64,
}

impl BoundCheck {
    pub fn holds(&self) -> bool {
        self.value <= self.bound * (1.0 + 1e-12) + 1e-12
    }
}

impl CombinedPlan {
    pub fn chain_holds(&self) -> bool {
        self.chain.iter().all(BoundCheck::holds)
    }
}

/// Class constants of the components, as used in the constraint ledger:
/// odd-exponent variants at `rho` are `(rho, rho)`, two-stable variants at
/// `rho` are `(rho, 2 rho)`.
fn odd_class(rho: f64) -> Constraints {
    Constraints::new(rho, rho)
}

fn two_class(rho: f64) -> Constraints {
    Constraints::new(rho, 2.0 * rho)
}

/// Ledger values of the Combined construction: the inner merge
/// (`(1/5)`-odd-exponent over `(1/10,1/10)` blocks) and the final merge.
pub fn combined_ledger() -> Result<(Constraints, Constraints)> {
    let inner = nice_beta_eta(odd_class(0.2), &[odd_class(0.1), odd_class(0.1)], 1.0)?;
    let outer = nice_beta_eta(two_class(0.1), &[odd_class(0.1), inner], 1.0)?;
    Ok((inner, outer))
}

/// Ledger values of WCombined: trivial head, `(1/5)`-odd-exponent tail,
/// `(1/5)`-two-stable merge.
pub fn w_combined_ledger() -> Result<Constraints> {
    nice_beta_eta(two_class(0.2), &[Constraints::new(0.0, 0.0), odd_class(0.2)], 1.0)
}

fn uniform_d(u: &Umts) -> Result<Option<f64>> {
    if u.len() == 1 {
        return Ok(None);
    }
    u.metric
        .uniform_distance()
        .map(Some)
        .ok_or_else(|| UmtsError::Precondition("construction needs a uniform metric".into()))
}

/// Exports `max(ledger, computed)`.
fn export(c: CombinedAlgorithm, ledger: Constraints) -> Result<CombinedAlgorithm> {
    let comp = c.computed_constraints();
    let e = Constraints::new(comp.beta.max(ledger.beta), comp.eta.max(ledger.eta));
    c.with_exported(e)
}

fn block_algorithm(u: &Umts, idx: &[usize]) -> Result<Arc<dyn OnlineAlgorithm>> {
    let sub = u.restrict(idx);
    if idx.len() == 1 {
        Ok(Arc::new(Trivial::new(&sub)?))
    } else {
        variant_with(&sub, 0.1, |v| Ok(Arc::new(OddExponent::new(v)?)))
    }
}

/// Combines `parts` of `u` (global indices) under `quotient`, a function of
/// the quotient UMTS.
fn merge(
    u: &Umts,
    parts: &[Vec<usize>],
    algs: Vec<Arc<dyn OnlineAlgorithm>>,
    quotient: impl Fn(&Umts) -> Result<Arc<dyn OnlineAlgorithm>>,
) -> Result<CombinedAlgorithm> {
    let partition = Partition::new(u.len(), parts.to_vec())?;
    let q = crate::metric::QuotientMetric::tight(&u.metric, &partition)?;
    let ratios = algs.iter().map(|a| a.declared_ratio()).collect();
    let qa = quotient(&crate::combiner::quotient_umts(u, &q, ratios)?)?;
    combine(CombineSpec::new(u.clone(), partition, algs, qa)?)
}

/// The Combined construction on a uniform space.
pub fn combined_algorithm(u: &Umts) -> Result<Arc<dyn OnlineAlgorithm>> {
    Ok(combined_with_plan(u)?.0)
}

pub fn combined_with_plan(u: &Umts) -> Result<(Arc<dyn OnlineAlgorithm>, CombinedPlan)> {
    let n = u.len();
    let s = u.s();
    uniform_d(u)?;
    let (ledger_inner, ledger) = combined_ledger()?;
    let lxs: Vec<f64> = (0..n).map(|i| solve_x(u.r(i), s)).collect();
    let lx = log_sum_exp(&lxs);
    let mut buckets: Vec<(i64, Vec<usize>)> = Vec::new();
    for (i, &l) in lxs.iter().enumerate() {
        let k = bucket_of(l);
        match buckets.iter_mut().find(|(b, _)| *b == k) {
            Some((_, v)) => v.push(i),
            None => buckets.push((k, vec![i])),
        }
    }
    buckets.sort_by_key(|(k, _)| std::cmp::Reverse(*k));
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    for (_, q) in &buckets {
        if q.len() as f64 >= lx {
            blocks.push(q.clone());
        } else {
            blocks.extend(q.iter().map(|&i| vec![i]));
        }
    }
    let lx_block = |b: &[usize]| log_sum_exp(&b.iter().map(|&i| lxs[i]).collect::<Vec<_>>());
    blocks.sort_by(|a, b| lx_block(b).total_cmp(&lx_block(a)).then(a[0].cmp(&b[0])));
    let ln_x_blocks: Vec<f64> = blocks.iter().map(|b| lx_block(b)).collect();
    let algs = blocks
        .iter()
        .map(|b| block_algorithm(u, b))
        .collect::<Result<Vec<_>>>()?;
    let block_ratios: Vec<f64> = algs.iter().map(|a| a.declared_ratio()).collect();
    let mut chain = Vec::new();
    for (j, r) in block_ratios.iter().enumerate() {
        let l = ln_x_blocks[j];
        chain.push(BoundCheck {
            name: format!("r(S_{})", j + 1),
            value: *r,
            bound: size_bound(s, l),
        });
    }
    let params = serde_json::json!({ "s": s, "ln_x": lx });
    let builder: Arc<dyn Fn(&Umts) -> Result<Arc<dyn OnlineAlgorithm>> + Send + Sync> =
        Arc::new(|u: &Umts| combined_algorithm(u));
    let (alg, tail_ratio): (Arc<dyn OnlineAlgorithm>, Option<f64>) = if blocks.len() == 1 {
        (algs[0].clone(), None)
    } else {
        let tail_idx: Vec<usize> = blocks[1..].iter().flatten().copied().collect();
        let tail: Arc<dyn OnlineAlgorithm> = if blocks.len() == 2 {
            algs[1].clone()
        } else {
            let tu = u.restrict(&tail_idx);
            let local: Vec<Vec<usize>> = blocks[1..]
                .iter()
                .map(|b| b.iter().map(|v| tail_idx.iter().position(|x| x == v).expect("in tail")).collect())
                .collect();
            let inner = merge(&tu, &local, algs[1..].to_vec(), |qu| {
                variant_with(qu, 0.2, |v| Ok(Arc::new(OddExponent::new(v)?)))
            })?;
            let inner = export(inner, ledger_inner)?.with_family("combined-tail", serde_json::Value::Null, None);
            Arc::new(inner)
        };
        let rt = tail.declared_ratio();
        let bound = 100.0 * s * (ln_x_blocks[1] + 0.6) * lx.ln();
        chain.push(BoundCheck {
            name: "r(M~)".into(),
            value: rt,
            bound,
        });
        let parts = vec![blocks[0].clone(), tail_idx];
        let fin = merge(u, &parts, vec![algs[0].clone(), tail], |qu| {
            variant_with(qu, 0.1, |v| Ok(Arc::new(TwoStable::new(v)?)))
        })?;
        let fin = export(fin, ledger)?.with_family("combined", params.clone(), Some(builder));
        (Arc::new(fin), Some(rt))
    };
    let ratio = alg.declared_ratio();
    chain.push(BoundCheck {
        name: "r".into(),
        value: ratio,
        bound: size_bound(s, lx),
    });
    chain.push(BoundCheck {
        name: "b' <= ln^2 x".into(),
        value: blocks.len() as f64,
        bound: lx * lx,
    });
    let plan = CombinedPlan {
        ln_x_states: lxs,
        ln_x: lx,
        buckets,
        blocks,
        ln_x_blocks,
        block_ratios,
        tail_ratio,
        ratio,
        ledger_inner: Some(ledger_inner),
        ledger,
        chain,
    };
    Ok((alg, plan))
}

/// Declared ratio of WCombined:
/// `30 s (ln(e^{r1/(30s) - 1/3} + (b-1) e^{r2/(30s) - 1/3}) + 1/3)`.
pub fn w_combined_ratio(s: f64, r1: f64, r2: f64, b: usize) -> f64 {
    let a = r1 / (30.0 * s) - 1.0 / 3.0;
    let c = ((b - 1) as f64).ln() + r2 / (30.0 * s) - 1.0 / 3.0;
    30.0 * s * (log_sum_exp(&[a, c]) + 1.0 / 3.0)
}

/// WCombined on `U_b^d` where all ratios but the first are equal.
pub fn w_combined_algorithm(u: &Umts) -> Result<Arc<dyn OnlineAlgorithm>> {
    let b = u.len();
    if b < 2 {
        return Err(UmtsError::Precondition("WCombined needs b >= 2".into()));
    }
    uniform_d(u)?;
    let r2 = u.r(1);
    if (2..b).any(|i| (u.r(i) - r2).abs() > 1e-12 * (1.0 + r2.abs())) {
        return Err(UmtsError::Precondition("WCombined needs equal ratios on v2..vb".into()));
    }
    let head: Arc<dyn OnlineAlgorithm> = Arc::new(Trivial::new(&u.restrict(&[0]))?);
    let tail_idx: Vec<usize> = (1..b).collect();
    let tu = u.restrict(&tail_idx);
    let tail: Arc<dyn OnlineAlgorithm> = if b == 2 {
        Arc::new(Trivial::new(&tu)?)
    } else {
        variant_with(&tu, 0.2, |v| Ok(Arc::new(OddExponent::new(v)?)))?
    };
    let fin = merge(u, &[vec![0], tail_idx], vec![head, tail], |qu| {
        variant_with(qu, 0.2, |v| Ok(Arc::new(TwoStable::new(v)?)))
    })?;
    let actual = fin.declared_ratio();
    let declared = w_combined_ratio(u.s(), u.r(0), r2, b);
    if actual > declared * (1.0 + 1e-12) + 1e-12 {
        return Err(UmtsError::Precondition(format!(
            "WCombined ratio {actual} exceeds its closed form {declared}"
        )));
    }
    let fin = export(fin, Constraints::new(1.0, w_combined_ledger()?.eta))?;
    let builder: Arc<dyn Fn(&Umts) -> Result<Arc<dyn OnlineAlgorithm>> + Send + Sync> =
        Arc::new(|u: &Umts| w_combined_algorithm(u));
    let fin = fin
        .with_declared_ratio(declared)?
        .with_family(
            "w-combined",
            serde_json::json!({ "s": u.s(), "r1": u.r(0), "r2": r2, "b": b, "quotient_ratio": actual }),
            Some(builder),
        );
    Ok(Arc::new(fin))
}
