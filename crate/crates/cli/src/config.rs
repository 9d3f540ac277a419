//! Experiment configuration (`"schema": "umtslab/v1"`).

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use umtslab::algo::{OddExponent, OnlineAlgorithm, TwoStable};
use umtslab::harness::AdversaryKind;
use umtslab::hst::{self, HstTree};
use umtslab::{portfolio, FiniteMetric, Umts};

use crate::error::CliError;

pub const SCHEMA: &str = "umtslab/v1";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema: String,
    #[serde(default)]
    pub name: String,
    pub experiments: Vec<Experiment>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    pub name: String,
    pub algorithm: AlgSpec,
    pub adversaries: Vec<AdversaryKind>,
    pub seeds: Seeds,
    pub steps: usize,
    /// Ratio the worst run must stay under; defaults to the declared ratio.
    #[serde(default)]
    pub bound: Option<Bound>,
    /// Writes the construction trace of the first run (combined algorithms).
    #[serde(default)]
    pub export_trace: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Seeds {
    List(Vec<u64>),
    Range { start: u64, count: u64 },
}

impl Seeds {
    pub fn expand(&self) -> Vec<u64> {
        match self {
            Seeds::List(v) => v.clone(),
            Seeds::Range { start, count } => (*start..*start + *count).collect(),
        }
    }
}

/// A fixed number or one of the named bounds.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Bound {
    Value(f64),
    Named(NamedBound),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NamedBound {
    Declared,
    /// `max r + 6 s ln b`.
    OddExponent,
    /// `60 (ln(K + 1) + 1/3)`.
    Caching,
    /// `8 ln n`.
    Line,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AlgSpec {
    OddExponent {
        b: usize,
        #[serde(default = "one")]
        d: f64,
        #[serde(default)]
        ratios: Option<Vec<f64>>,
        #[serde(default = "one")]
        ratio: f64,
        #[serde(default = "one")]
        s: f64,
    },
    TwoStable {
        r1: f64,
        r2: f64,
        #[serde(default = "one")]
        d: f64,
        #[serde(default = "one")]
        s: f64,
    },
    Combined {
        ratios: Vec<f64>,
        #[serde(default = "one")]
        d: f64,
        #[serde(default = "one")]
        s: f64,
    },
    WCombined {
        b: usize,
        r1: f64,
        r2: f64,
        #[serde(default = "one")]
        d: f64,
        #[serde(default = "one")]
        s: f64,
    },
    Rhst {
        tree: HstTree,
        k: f64,
    },
    Line {
        n: usize,
        #[serde(default = "one")]
        gap: f64,
    },
    Caching {
        #[serde(default)]
        fetch_costs: Option<Vec<f64>>,
        #[serde(default)]
        k: Option<usize>,
        #[serde(default)]
        cost_seed: u64,
        #[serde(default = "default_cost_range")]
        cost_range: (f64, f64),
    },
}

fn default_cost_range() -> (f64, f64) {
    (1.0, 10.0)
}

/// An algorithm ready to run, plus the original space when the algorithm
/// runs on an approximation of it.
pub struct Built {
    pub algorithm: Arc<dyn OnlineAlgorithm>,
    pub space: String,
    pub n: usize,
    pub original: Option<Umts>,
}

fn uniform(b: usize, d: f64, ratios: Vec<f64>, s: f64) -> Result<Umts, CliError> {
    Ok(Umts::new(FiniteMetric::uniform(b, d)?, ratios, s)?)
}

impl AlgSpec {
    pub fn build(&self) -> Result<Built, CliError> {
        let built = |algorithm: Arc<dyn OnlineAlgorithm>, space: String| {
            let n = algorithm.umts().len();
            Built {
                algorithm,
                space,
                n,
                original: None,
            }
        };
        Ok(match self {
            AlgSpec::OddExponent { b, d, ratios, ratio, s } => {
                let rs = ratios.clone().unwrap_or_else(|| vec![*ratio; *b]);
                let u = uniform(*b, *d, rs, *s)?;
                built(Arc::new(OddExponent::new(&u)?), format!("uniform(b={b},d={d})"))
            }
            AlgSpec::TwoStable { r1, r2, d, s } => {
                let u = uniform(2, *d, vec![*r1, *r2], *s)?;
                built(Arc::new(TwoStable::new(&u)?), format!("uniform(b=2,d={d})"))
            }
            AlgSpec::Combined { ratios, d, s } => {
                let u = uniform(ratios.len(), *d, ratios.clone(), *s)?;
                built(
                    portfolio::combined_algorithm(&u)?,
                    format!("uniform(b={},d={d})", ratios.len()),
                )
            }
            AlgSpec::WCombined { b, r1, r2, d, s } => {
                let mut rs = vec![*r2; *b];
                rs[0] = *r1;
                let u = uniform(*b, *d, rs, *s)?;
                built(portfolio::w_combined_algorithm(&u)?, format!("uniform(b={b},d={d})"))
            }
            AlgSpec::Rhst { tree, k } => {
                built(hst::rhst(tree, *k)?, format!("hst(n={},k={k})", tree.num_leaves()))
            }
            AlgSpec::Line { n, gap } => {
                built(hst::line_algorithm(*n, *gap)?, format!("line-4hst(n={n},gap={gap})"))
            }
            AlgSpec::Caching {
                fetch_costs,
                k,
                cost_seed,
                cost_range,
            } => {
                let costs = match (fetch_costs, k) {
                    (Some(c), _) => c.clone(),
                    (None, Some(k)) => hst::random_fetch_costs(*k, *cost_seed, cost_range.0, cost_range.1),
                    (None, None) => {
                        return Err(CliError::Config("caching needs fetch_costs or k".into()));
                    }
                };
                let setup = hst::weighted_caching_algorithm(&costs)?;
                let mut b = built(setup.algorithm, format!("caching-6hst(K={})", costs.len() - 1));
                b.original = Some(setup.star);
                b
            }
        })
    }
}

impl Built {
    pub fn bound(&self, b: &Option<Bound>) -> f64 {
        let named = match b {
            Some(Bound::Value(v)) => return *v,
            Some(Bound::Named(n)) => *n,
            None => NamedBound::Declared,
        };
        let u = self.algorithm.umts();
        match named {
            NamedBound::Declared => self.algorithm.declared_ratio(),
            NamedBound::OddExponent => u.max_ratio() + 6.0 * u.s() * (u.len() as f64).ln(),
            NamedBound::Caching => hst::caching_bound(u.len() - 1),
            NamedBound::Line => 8.0 * (u.len() as f64).ln(),
        }
    }
}

pub fn parse(text: &str) -> Result<Config, CliError> {
    let cfg: Config = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    if cfg.schema != SCHEMA {
        return Err(CliError::Config(format!(
            "unsupported schema {:?}, expected {SCHEMA:?}",
            cfg.schema
        )));
    }
    for e in &cfg.experiments {
        if e.adversaries.is_empty() || e.seeds.expand().is_empty() {
            return Err(CliError::Config(format!("experiment {:?} has no runs", e.name)));
        }
    }
    Ok(cfg)
}
