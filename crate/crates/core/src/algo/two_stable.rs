use std::sync::Arc;

use super::potential::{estimate_potential, PotentialEstimate, PotentialOptions};
use super::{base_descriptor, Constraints, Descriptor, OnlineAlgorithm, ProbabilityRule};
use crate::error::{Result, UmtsError};
use crate::umts::{ProbVector, Umts, WeightVector};

/// Below this `|z|` the series expansions replace the exponential forms.
const SMALL_Z: f64 = 1e-8;

/// Competitive ratio `f(s, r1, r2) = r1 + (r1 - r2) / (e^{(r1 - r2)/s} - 1)`.
pub fn f_ratio(s: f64, r1: f64, r2: f64) -> f64 {
    let z = (r1 - r2) / s;
    if z.abs() < SMALL_Z {
        return 0.5 * (r1 + r2) + s;
    }
    r1 + s * z / z.exp_m1()
}

/// The same quantity written from the other state's point of view.
pub fn f_ratio_symmetric(s: f64, r1: f64, r2: f64) -> f64 {
    f_ratio(s, r2, r1)
}

/// Probability of `v1` as a function of `y = w(v1) - w(v2)`.
pub fn two_stable_p1(z: f64, d: f64, y: f64) -> f64 {
    let a = (0.5 + y / (2.0 * d)).clamp(0.0, 1.0);
    let p = if z.abs() < SMALL_Z {
        (1.0 - a) * (1.0 + 0.5 * z * a)
    } else if z > 0.0 {
        (-z * (1.0 - a)).exp_m1() / (-z).exp_m1()
    } else {
        1.0 - (z * a).exp_m1() / z.exp_m1()
    };
    p.clamp(0.0, 1.0)
}

#[derive(Debug, Clone)]
struct Rule {
    umts: Umts,
    z: f64,
    d: f64,
}

impl ProbabilityRule for Rule {
    fn umts(&self) -> &Umts {
        &self.umts
    }

    fn probabilities(&self, w: &[f64]) -> ProbVector {
        let p1 = two_stable_p1(self.z, self.d, w[0] - w[1]);
        ProbVector::from_raw(vec![p1, 1.0 - p1])
    }
}

/// The two-point algorithm with
/// `p(v1) = (e^z - e^{z(1/2 + y/2d)}) / (e^z - 1)`, `z = (r1 - r2)/s`.
///
/// Every closed cycle of reasonable tasks has zero gain at ratio `f(s,r1,r2)`,
/// so the minimal potential is finite for any weight vector; it is computed by
/// value iteration.
#[derive(Debug, Clone)]
pub struct TwoStable {
    rule: Rule,
    alpha: WeightVector,
    potential: PotentialEstimate,
    eta: f64,
}

impl TwoStable {
    pub fn new(u: &Umts) -> Result<Self> {
        Self::with_options(u, &PotentialOptions::default())
    }

    pub fn with_options(u: &Umts, opts: &PotentialOptions) -> Result<Self> {
        if u.len() != 2 {
            return Err(UmtsError::Precondition(format!(
                "two-stable needs exactly two states, got {}",
                u.len()
            )));
        }
        let rule = Rule {
            umts: u.clone(),
            z: (u.r(0) - u.r(1)) / u.s(),
            d: u.metric.d(0, 1),
        };
        let ratio = f_ratio(u.s(), u.r(0), u.r(1));
        let scale = ratio * rule.d;
        let mut best: Option<(WeightVector, PotentialEstimate)> = None;
        // uniform weights first; a coarse search only if they miss the bound
        let mut candidates = vec![0.5];
        candidates.extend((1..20).map(|k| k as f64 / 20.0).filter(|a| *a != 0.5));
        for a1 in candidates {
            let alpha = WeightVector::new(vec![a1, 1.0 - a1])?;
            let est = estimate_potential(&rule, ratio, &alpha, opts)?;
            let better = best.as_ref().map_or(true, |(_, b)| est.sup() < b.sup());
            if better {
                best = Some((alpha, est));
            }
            if best.as_ref().is_some_and(|(_, b)| b.sup() <= 2.0 * scale) {
                break;
            }
        }
        let (alpha, potential) = best.expect("at least one candidate");
        let sup = potential.sup();
        let eta = if sup <= 2.0 * scale * (1.0 + 1e-9) {
            2.0
        } else if sup <= 4.0 * scale * (1.0 + 1e-9) {
            4.0
        } else {
            return Err(UmtsError::Precondition(format!(
                "two-stable potential {sup} exceeds 4 r d = {}",
                4.0 * scale
            )));
        };
        Ok(TwoStable {
            rule,
            alpha,
            potential,
            eta,
        })
    }

    pub fn z(&self) -> f64 {
        self.rule.z
    }

    pub fn potential_estimate(&self) -> &PotentialEstimate {
        &self.potential
    }
}

impl ProbabilityRule for TwoStable {
    fn umts(&self) -> &Umts {
        &self.rule.umts
    }

    fn probabilities(&self, w: &[f64]) -> ProbVector {
        self.rule.probabilities(w)
    }
}

impl OnlineAlgorithm for TwoStable {
    fn name(&self) -> String {
        "two-stable".into()
    }

    fn declared_ratio(&self) -> f64 {
        let u = &self.rule.umts;
        f_ratio(u.s(), u.r(0), u.r(1))
    }

    fn weights(&self) -> &WeightVector {
        &self.alpha
    }

    fn constraints(&self) -> Constraints {
        Constraints::new(1.0, self.eta)
    }

    fn potential(&self, w: &[f64]) -> Option<f64> {
        Some(self.potential.value(&self.rule, w))
    }

    fn potential_sup(&self) -> Option<f64> {
        Some(self.potential.sup())
    }

    fn rebuild(&self, u: &Umts) -> Result<Arc<dyn OnlineAlgorithm>> {
        Ok(Arc::new(TwoStable::new(u)?))
    }

    fn descriptor(&self) -> Descriptor {
        let u = &self.rule.umts;
        base_descriptor(
            self,
            "two-stable",
            serde_json::json!({ "d": self.rule.d, "r1": u.r(0), "r2": u.r(1), "s": u.s() }),
        )
    }
}
