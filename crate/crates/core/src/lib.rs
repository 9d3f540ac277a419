//! Laboratory for unfair metrical task systems (UMTS).
//!
//! The crate provides the cost model (work functions, transport moving costs),
//! the two atomic stable algorithms on uniform spaces, the combining
//! construction that turns per-block algorithms plus a quotient algorithm into
//! one algorithm for the whole space, the uniform-space portfolios built from
//! it, HST-based applications (weighted caching, the line), and an audit
//! harness that checks every per-step inequality at runtime.
//!
//! Algorithms are fractional: they maintain a probability vector that is a
//! pure function of the (internal) work function, so there is no sampling
//! noise anywhere.

pub mod algo;
pub mod combiner;
pub mod error;
pub mod harness;
pub mod hst;
pub mod metric;
pub mod portfolio;
pub mod runner;
pub mod transport;
pub mod umts;

pub use algo::{Constraints, OnlineAlgorithm};
pub use error::{Result, UmtsError};
pub use metric::FiniteMetric;
pub use umts::{ElementaryTask, GeneralTask, ProbVector, Umts, WeightVector};

/// Absolute tolerance for equality and support tests.
pub const EQ_TOL: f64 = 1e-9;
/// Base tolerance for inequalities that involve a constructed potential.
pub const AUDIT_TOL: f64 = 1e-6;
