use std::sync::Arc;

use super::{Constraints, Descriptor, OnlineAlgorithm, ProbabilityRule};
use crate::error::{Result, UmtsError};
use crate::umts::{ProbVector, Umts, WeightVector};

/// The rho-variant of an algorithm: the same family built for the scaled
/// space `(rho M; r; s / rho)` and run unchanged on `M`.
///
/// Online costs are identical on both spaces, and along reasonable sequences
/// the two work functions coincide, so the variant inherits the ratio of the
/// scaled instance while its constraints shrink to `(rho beta, rho eta)`.
#[derive(Debug, Clone)]
pub struct Variant {
    outer: Umts,
    inner: Arc<dyn OnlineAlgorithm>,
    rho: f64,
}

/// Builds the `rho`-variant of `a`. `rho = 1` returns `a` itself.
pub fn rho_variant(a: &Arc<dyn OnlineAlgorithm>, rho: f64) -> Result<Arc<dyn OnlineAlgorithm>> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(UmtsError::Precondition(format!("rho must be positive, got {rho}")));
    }
    if rho == 1.0 {
        return Ok(a.clone());
    }
    let beta = a.constraints().beta;
    if beta * rho > 1.0 + 1e-12 {
        return Err(UmtsError::BetaTooLarge { beta: beta * rho });
    }
    let outer = a.umts().clone();
    let inner = a.rebuild(&outer.scaled(rho))?;
    Ok(Arc::new(Variant { outer, inner, rho }))
}

/// Builds the `rho`-variant directly from a constructor, without first
/// building the unscaled instance.
pub fn variant_with(
    u: &Umts,
    rho: f64,
    build: impl FnOnce(&Umts) -> Result<Arc<dyn OnlineAlgorithm>>,
) -> Result<Arc<dyn OnlineAlgorithm>> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(UmtsError::Precondition(format!("rho must be positive, got {rho}")));
    }
    let inner = build(&u.scaled(rho))?;
    if rho == 1.0 {
        return Ok(inner);
    }
    let beta = inner.constraints().beta;
    if beta * rho > 1.0 + 1e-12 {
        return Err(UmtsError::BetaTooLarge { beta: beta * rho });
    }
    Ok(Arc::new(Variant {
        outer: u.clone(),
        inner,
        rho,
    }))
}

impl Variant {
    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn inner(&self) -> &Arc<dyn OnlineAlgorithm> {
        &self.inner
    }
}

impl ProbabilityRule for Variant {
    fn umts(&self) -> &Umts {
        &self.outer
    }

    fn probabilities(&self, w: &[f64]) -> ProbVector {
        self.inner.probabilities(w)
    }
}

impl OnlineAlgorithm for Variant {
    fn name(&self) -> String {
        format!("{}-variant of {}", self.rho, self.inner.name())
    }

    fn declared_ratio(&self) -> f64 {
        self.inner.declared_ratio()
    }

    fn weights(&self) -> &WeightVector {
        self.inner.weights()
    }

    fn constraints(&self) -> Constraints {
        let c = self.inner.constraints();
        Constraints::new(c.beta * self.rho, c.eta * self.rho)
    }

    fn potential(&self, w: &[f64]) -> Option<f64> {
        self.inner.potential(w)
    }

    fn evaluate(&self, w: &[f64]) -> (ProbVector, Option<f64>) {
        self.inner.evaluate(w)
    }

    fn potential_sup(&self) -> Option<f64> {
        self.inner.potential_sup()
    }

    fn rebuild(&self, u: &Umts) -> Result<Arc<dyn OnlineAlgorithm>> {
        let base = self.inner.rebuild(u)?;
        rho_variant(&base, self.rho)
    }

    fn descriptor(&self) -> Descriptor {
        let c = self.constraints();
        Descriptor {
            family: "variant".into(),
            states: self.outer.metric.labels().to_vec(),
            ratio: self.declared_ratio(),
            beta: c.beta,
            eta: c.eta,
            params: serde_json::json!({ "rho": self.rho }),
            children: vec![self.inner.descriptor()],
        }
    }

    fn as_combined(&self) -> Option<&crate::combiner::CombinedAlgorithm> {
        self.inner.as_combined()
    }
}
