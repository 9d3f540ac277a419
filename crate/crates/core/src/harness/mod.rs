//! Adversaries, exact offline optima, sequence reductions, and the audit
//! engine that checks every per-step inequality of a run.

pub mod adversary;
pub mod audit;
pub mod elementarize;
pub mod opt;

pub use adversary::{generate_sequence, headroom, AdversaryConfig, AdversaryKind};
pub use audit::{additive_constant, adversary_run, audit_run, empirical_ratio, transfer_run, AuditReport, RatioSummary, TransferReport};
pub use elementarize::elementarize;
pub use opt::{offline_opt, offline_opt_elementary};
