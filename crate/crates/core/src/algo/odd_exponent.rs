use std::sync::Arc;

use super::{base_descriptor, Constraints, Descriptor, OnlineAlgorithm, ProbabilityRule};
use crate::error::{Result, UmtsError};
use crate::umts::{ProbVector, Umts, WeightVector};

/// Largest space for which the closed-form potential below is certified.
pub const CERTIFIED_MAX_POINTS: usize = 9;

/// Weight of the quadratic moving-cost term of the potential.
const MOVE_WEIGHT: f64 = 0.5;

/// The odd-exponent algorithm on a uniform space `U_b^d`:
/// `p(v) = 1/b + (1/b) sum_u ((w(u) - w(v)) / d)^t`, with `t` the smallest odd
/// integer `>= ln b`. Since `t` is odd the pairwise terms are antisymmetric and
/// the probabilities sum to one.
///
/// Potential (certified for `b <= 9`, with `x_uv = (w(u) - w(v)) / d`):
///
/// `Phi = r_max d / (b (t+1)) * sum_{u<v} x_uv^{t+1} + s d / 2 * (sum_v p(v)^2 - 1/b)`.
///
/// Charging `v` at unit rate, the first term contributes `-r_max q_v / b`
/// with `q_v = sum_u x_uv^t = b p(v) - 1 >= -1`, which pays the local cost
/// `r_v p(v)` up to `r_max / b`. The second term absorbs the moving cost
/// `(s t / b) sum_u x_uv^{t-1}` up to `6 s ln b / b`; that step was checked by
/// worst-case search over the reachable region and is audited in the tests.
#[derive(Debug, Clone)]
pub struct OddExponent {
    umts: Umts,
    b: usize,
    d: f64,
    t: i32,
    alpha: WeightVector,
}

impl OddExponent {
    pub fn new(u: &Umts) -> Result<Self> {
        let b = u.len();
        if b < 2 {
            return Err(UmtsError::Precondition("odd-exponent needs b >= 2".into()));
        }
        let d = u
            .metric
            .uniform_distance()
            .ok_or_else(|| UmtsError::Precondition("odd-exponent needs a uniform metric".into()))?;
        Ok(OddExponent {
            umts: u.clone(),
            b,
            d,
            t: exponent_for(b),
            alpha: WeightVector::uniform(b),
        })
    }

    pub fn exponent(&self) -> i32 {
        self.t
    }

    /// The sharper constraint `eta = 1 / ceil(ln b)`.
    pub fn sharp_eta(&self) -> f64 {
        1.0 / (self.b as f64).ln().ceil().max(1.0)
    }

    pub fn has_certificate(&self) -> bool {
        self.b <= CERTIFIED_MAX_POINTS
    }

    /// Raw rule output, possibly negative outside the reachable region.
    pub fn raw(&self, w: &[f64]) -> Vec<f64> {
        let b = self.b as f64;
        (0..self.b)
            .map(|v| {
                let s: f64 = (0..self.b)
                    .map(|u| ((w[u] - w[v]) / self.d).powi(self.t))
                    .sum();
                (1.0 + s) / b
            })
            .collect()
    }
}

/// Smallest odd integer `>= ln b`.
pub fn exponent_for(b: usize) -> i32 {
    let l = (b as f64).ln();
    let mut t = l.ceil().max(1.0) as i32;
    if t % 2 == 0 {
        t += 1;
    }
    t
}

impl ProbabilityRule for OddExponent {
    fn umts(&self) -> &Umts {
        &self.umts
    }

    fn probabilities(&self, w: &[f64]) -> ProbVector {
        ProbVector::from_raw(self.raw(w))
    }
}

impl OnlineAlgorithm for OddExponent {
    fn name(&self) -> String {
        format!("odd-exponent(b={})", self.b)
    }

    fn declared_ratio(&self) -> f64 {
        self.umts.max_ratio() + 6.0 * self.umts.s() * (self.b as f64).ln()
    }

    fn weights(&self) -> &WeightVector {
        &self.alpha
    }

    fn constraints(&self) -> Constraints {
        Constraints::new(1.0, 1.0)
    }

    fn potential(&self, w: &[f64]) -> Option<f64> {
        if !self.has_certificate() {
            return None;
        }
        let b = self.b as f64;
        let mut pairs = 0.0;
        for u in 0..self.b {
            for v in (u + 1)..self.b {
                pairs += ((w[u] - w[v]) / self.d).powi(self.t + 1);
            }
        }
        let p = self.probabilities(w);
        let sq: f64 = p.iter().map(|x| x * x).sum();
        let first = self.umts.max_ratio() * self.d / (b * (self.t + 1) as f64) * pairs;
        let second = MOVE_WEIGHT * self.umts.s() * self.d * (sq - 1.0 / b).max(0.0);
        Some(first + second)
    }

    fn potential_sup(&self) -> Option<f64> {
        if !self.has_certificate() {
            return None;
        }
        // every |x_uv| <= 1, and sum_v p^2 <= 1
        let b = self.b as f64;
        let first = self.umts.max_ratio() * self.d * (b - 1.0) / (2.0 * (self.t + 1) as f64);
        Some(first + MOVE_WEIGHT * self.umts.s() * self.d * (1.0 - 1.0 / b))
    }

    fn rebuild(&self, u: &Umts) -> Result<Arc<dyn OnlineAlgorithm>> {
        Ok(Arc::new(OddExponent::new(u)?))
    }

    fn descriptor(&self) -> Descriptor {
        base_descriptor(
            self,
            "odd-exponent",
            serde_json::json!({ "b": self.b, "d": self.d, "t": self.t, "s": self.umts.s() }),
        )
    }
}
