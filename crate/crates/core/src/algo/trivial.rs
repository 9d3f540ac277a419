use std::sync::Arc;

use super::{base_descriptor, Constraints, Descriptor, OnlineAlgorithm, ProbabilityRule};
use crate::error::{Result, UmtsError};
use crate::umts::{ProbVector, Umts, WeightVector};

/// The only algorithm on a single point: ratio `r_1`, `(0,0)`-constrained.
#[derive(Debug, Clone)]
pub struct Trivial {
    umts: Umts,
    alpha: WeightVector,
}

impl Trivial {
    pub fn new(u: &Umts) -> Result<Self> {
        if u.len() != 1 {
            return Err(UmtsError::Precondition(format!(
                "trivial algorithm needs exactly one state, got {}",
                u.len()
            )));
        }
        Ok(Trivial {
            umts: u.clone(),
            alpha: WeightVector::uniform(1),
        })
    }
}

impl ProbabilityRule for Trivial {
    fn umts(&self) -> &Umts {
        &self.umts
    }

    fn probabilities(&self, _w: &[f64]) -> ProbVector {
        ProbVector::point(1, 0)
    }
}

impl OnlineAlgorithm for Trivial {
    fn name(&self) -> String {
        "trivial".into()
    }

    fn declared_ratio(&self) -> f64 {
        self.umts.r(0)
    }

    fn weights(&self) -> &WeightVector {
        &self.alpha
    }

    fn constraints(&self) -> Constraints {
        Constraints::new(0.0, 0.0)
    }

    fn potential(&self, _w: &[f64]) -> Option<f64> {
        Some(0.0)
    }

    fn potential_sup(&self) -> Option<f64> {
        Some(0.0)
    }

    fn rebuild(&self, u: &Umts) -> Result<Arc<dyn OnlineAlgorithm>> {
        Ok(Arc::new(Trivial::new(u)?))
    }

    fn descriptor(&self) -> Descriptor {
        base_descriptor(self, "trivial", serde_json::Value::Null)
    }
}
