//! Executes a config and writes the reports.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use umtslab::algo::Descriptor;
use umtslab::combiner::CombinedRun;
use umtslab::harness::{audit_run, generate_sequence, transfer_run, AdversaryConfig, AuditReport};
use umtslab::runner::Runner;

use crate::config::{Built, Config};
use crate::error::CliError;

/// One CSV row per run.
#[derive(Debug, Clone, Serialize)]
pub struct RunRow {
    pub experiment: String,
    pub space: String,
    pub algorithm: String,
    pub adversary: String,
    pub seed: u64,
    pub steps: usize,
    pub cost: f64,
    pub opt: f64,
    pub ratio: Option<f64>,
    pub declared: f64,
    pub bound: f64,
    pub additive: f64,
    /// Ratio measured on the original space when the algorithm runs on an
    /// approximation of it.
    pub original_ratio: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Serialize)]
struct ExperimentReport {
    name: String,
    space: String,
    n: usize,
    declared: f64,
    bound: f64,
    worst_ratio: Option<f64>,
    worst_original_ratio: Option<f64>,
    passed: bool,
    algorithm: Descriptor,
    runs: Vec<RunDetail>,
}

#[derive(Debug, Serialize)]
struct RunDetail {
    adversary: String,
    seed: u64,
    original_ratio: Option<f64>,
    audit: AuditReport,
}

#[derive(Debug, Serialize)]
struct Report {
    schema: &'static str,
    name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    generated_at: Option<u64>,
    passed: bool,
    experiments: Vec<ExperimentReport>,
}

#[derive(Debug, Serialize)]
struct PlotN {
    experiment: String,
    n: usize,
    worst_ratio: Option<f64>,
    declared: f64,
    bound: f64,
}

#[derive(Debug, Serialize)]
struct PlotBound {
    experiment: String,
    bound: f64,
    declared: f64,
    worst_ratio: Option<f64>,
    slack: Option<f64>,
}

pub struct Outcome {
    pub passed: bool,
    pub rows: Vec<RunRow>,
}

fn worst(xs: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    xs.flatten().reduce(f64::max)
}

pub fn execute(cfg: &Config, out: &Path, deterministic: bool, seed_override: Option<u64>) -> Result<Outcome, CliError> {
    let built: Vec<Built> = cfg
        .experiments
        .iter()
        .map(|e| e.algorithm.build())
        .collect::<Result<_, _>>()?;
    // deterministic order: (experiment, adversary, seed)
    let mut jobs = Vec::new();
    for (i, e) in cfg.experiments.iter().enumerate() {
        let seeds = match seed_override {
            Some(s) => vec![s],
            None => e.seeds.expand(),
        };
        for kind in &e.adversaries {
            for &seed in &seeds {
                jobs.push((i, AdversaryConfig::new(*kind, seed, e.steps)));
            }
        }
    }
    let results: Vec<(usize, AdversaryConfig, AuditReport, Option<f64>)> = jobs
        .par_iter()
        .map(|(i, a)| {
            let b = &built[*i];
            let sigma = generate_sequence(a, &b.algorithm);
            let rep = audit_run(&b.algorithm, &sigma);
            let orig = b.original.as_ref().and_then(|u| transfer_run(&b.algorithm, u, &sigma).ratio);
            (*i, a.clone(), rep, orig)
        })
        .collect();
    fs::create_dir_all(out)?;
    let mut rows = Vec::with_capacity(results.len());
    let mut experiments = Vec::new();
    for (i, e) in cfg.experiments.iter().enumerate() {
        let b = &built[i];
        let bound = b.bound(&e.bound);
        let declared = b.algorithm.declared_ratio();
        let mut runs = Vec::new();
        for (_, a, rep, orig) in results.iter().filter(|r| r.0 == i) {
            let pass = rep.passed() && rep.ratio.map_or(true, |x| x <= bound + 1e-9 * bound.abs().max(1.0));
            rows.push(RunRow {
                experiment: e.name.clone(),
                space: b.space.clone(),
                algorithm: b.algorithm.name(),
                adversary: a.kind.name().to_string(),
                seed: a.seed,
                steps: a.steps,
                cost: rep.cost,
                opt: rep.opt,
                ratio: rep.ratio,
                declared,
                bound,
                additive: rep.additive,
                original_ratio: *orig,
                pass,
            });
            runs.push(RunDetail {
                adversary: a.kind.name().to_string(),
                seed: a.seed,
                original_ratio: *orig,
                audit: rep.clone(),
            });
        }
        let passed = rows.iter().filter(|r| r.experiment == e.name).all(|r| r.pass);
        experiments.push(ExperimentReport {
            name: e.name.clone(),
            space: b.space.clone(),
            n: b.n,
            declared,
            bound,
            worst_ratio: worst(runs.iter().map(|r| r.audit.ratio)),
            worst_original_ratio: worst(runs.iter().map(|r| r.original_ratio)),
            passed,
            algorithm: b.algorithm.descriptor(),
            runs,
        });
        if e.export_trace {
            write_trace(b, e, out, seed_override)?;
        }
    }
    let passed = rows.iter().all(|r| r.pass);
    let mut w = csv::Writer::from_path(out.join("runs.csv"))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(out.join("plot_ratio_vs_n.csv"))?;
    for e in &experiments {
        w.serialize(PlotN {
            experiment: e.name.clone(),
            n: e.n,
            worst_ratio: e.worst_ratio,
            declared: e.declared,
            bound: e.bound,
        })?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(out.join("plot_ratio_vs_bound.csv"))?;
    for e in &experiments {
        w.serialize(PlotBound {
            experiment: e.name.clone(),
            bound: e.bound,
            declared: e.declared,
            worst_ratio: e.worst_ratio,
            slack: e.worst_ratio.map(|r| e.bound - r),
        })?;
    }
    w.flush()?;
    let generated_at = (!deterministic).then(|| {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0)
    });
    let report = Report {
        schema: crate::config::SCHEMA,
        name: cfg.name.clone(),
        generated_at,
        passed,
        experiments,
    };
    let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Config(e.to_string()))?;
    fs::write(out.join("report.json"), json + "\n")?;
    Ok(Outcome { passed, rows })
}

fn write_trace(b: &Built, e: &crate::config::Experiment, out: &Path, seed_override: Option<u64>) -> Result<(), CliError> {
    let Some(c) = b.algorithm.as_combined() else {
        return Ok(());
    };
    let seed = seed_override.unwrap_or_else(|| e.seeds.expand()[0]);
    let a = AdversaryConfig::new(e.adversaries[0], seed, e.steps);
    let sigma = generate_sequence(&a, &b.algorithm);
    let mut run = CombinedRun::new(c.clone(), true);
    for t in sigma {
        run.step(t);
    }
    let name: String = e
        .name
        .chars()
        .map(|ch| if ch.is_ascii_alphanumeric() || ch == '-' { ch } else { '_' })
        .collect();
    fs::write(out.join(format!("trace-{name}.jsonl")), run.trace_jsonl())?;
    Ok(())
}
