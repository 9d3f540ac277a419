//! Stable online algorithms: the contract, the atomic algorithms on uniform
//! spaces, rho-variants, and potential-function machinery.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::umts::{ProbVector, Umts, WeightVector};

mod odd_exponent;
pub mod potential;
mod trivial;
mod two_stable;
mod variant;

pub use odd_exponent::{exponent_for, OddExponent, CERTIFIED_MAX_POINTS};
pub use potential::{estimate_potential, PotentialEstimate, PotentialOptions};
pub use trivial::Trivial;
pub use two_stable::{f_ratio, f_ratio_symmetric, TwoStable};
pub use variant::{rho_variant, variant_with, Variant};

/// `(beta, eta)`: probability vanishes once `w(u) - w(v) >= beta dist(u,v)`,
/// and the potential is at most `eta * diam * r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constraints {
    pub beta: f64,
    pub eta: f64,
}

impl Constraints {
    pub const fn new(beta: f64, eta: f64) -> Self {
        Constraints { beta, eta }
    }
}

/// A probability rule: work function to probability vector. Only differences
/// of `w` matter.
pub trait ProbabilityRule: Send + Sync {
    fn umts(&self) -> &Umts;
    fn probabilities(&self, w: &[f64]) -> ProbVector;
}

/// JSON description of an algorithm and its composition tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Descriptor {
    pub family: String,
    pub states: Vec<String>,
    pub ratio: f64,
    pub beta: f64,
    pub eta: f64,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub params: serde_json::Value,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<Descriptor>,
}

/// A stable, sensible, constrained online algorithm for one UMTS.
pub trait OnlineAlgorithm: ProbabilityRule + fmt::Debug {
    fn name(&self) -> String;
    fn declared_ratio(&self) -> f64;
    fn weights(&self) -> &WeightVector;
    fn constraints(&self) -> Constraints;
    /// The potential `Phi(w)`, when the algorithm has one.
    fn potential(&self, w: &[f64]) -> Option<f64>;
    /// Probabilities and potential together; composite algorithms override
    /// this to share work between the two.
    fn evaluate(&self, w: &[f64]) -> (ProbVector, Option<f64>) {
        (self.probabilities(w), self.potential(w))
    }
    /// An upper bound on `sup_w Phi(w)` over reachable work functions.
    fn potential_sup(&self) -> Option<f64>;
    /// Builds the same algorithm family on another UMTS of the same shape.
    fn rebuild(&self, u: &Umts) -> Result<Arc<dyn OnlineAlgorithm>>;
    fn descriptor(&self) -> Descriptor;
    /// Present when the algorithm is a combined algorithm (possibly behind
    /// rho-variants), so that runs can simulate the construction.
    fn as_combined(&self) -> Option<&crate::combiner::CombinedAlgorithm> {
        None
    }
}

pub(crate) fn base_descriptor(a: &dyn OnlineAlgorithm, family: &str, params: serde_json::Value) -> Descriptor {
    let c = a.constraints();
    Descriptor {
        family: family.to_string(),
        states: a.umts().metric.labels().to_vec(),
        ratio: a.declared_ratio(),
        beta: c.beta,
        eta: c.eta,
        params,
        children: Vec::new(),
    }
}
