// SPDX-License-Identifier: Apache-2.0
//! Library backing the `trv` command line: rule-file loading, report
//! construction, and the verify/bounds/fuzz commands. Kept as a library so
//! integration tests can drive the same code paths as the binary.

pub mod corpus;
pub mod report;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use trv_core::analysis;
use trv_core::concrete;
use trv_core::ir::{build_rule, RewriteRule};
use trv_core::smt::SolverConfig;
use trv_core::verifier::{verify, VerdictKind, VerifyConfig};

use report::{BoundsReport, FuzzReport, FuzzRuleReport, Report, RuleReport};

/// Shared command-line options (see `trv --help`).
#[derive(Debug, Clone, Default)]
pub struct Options {
    pub solver: Option<PathBuf>,
    pub timeout_ms: Option<u64>,
    pub jobs: Option<usize>,
    pub dump_smt: Option<PathBuf>,
    pub max_rank_override: BTreeMap<String, usize>,
    pub oracle_check: bool,
    pub seed: u64,
    pub assume_alias: Vec<(String, String)>,
    pub trials: usize,
    pub ranks: BTreeMap<String, usize>,
}

/// Exit codes: 0 all verified, 1 any invalid, 2 unknown/unsupported only,
/// 3 tool error (handled by the binary's error path).
pub fn exit_code_for(report: &Report) -> i32 {
    let mut code = 0;
    for r in &report.rules {
        match r.verdict.as_str() {
            "invalid" => return 1,
            "verified" => {}
            _ => code = 2,
        }
    }
    code
}

/// Loads one rule file (JSON) and re-validates it through `build_rule`.
pub fn load_rule(path: &Path) -> Result<RewriteRule> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading rule file {}", path.display()))?;
    let raw: RewriteRule = serde_json::from_str(&text)
        .with_context(|| format!("parsing rule file {}", path.display()))?;
    let rule = build_rule(raw.name, raw.decls, raw.lhs, raw.rhs, raw.preconditions, raw.si_hints)
        .with_context(|| format!("validating rule file {}", path.display()))?;
    Ok(rule)
}

/// Expands files/directories into an ordered list of rule files.
pub fn collect_rule_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut entries: Vec<PathBuf> = std::fs::read_dir(p)
                .with_context(|| format!("reading directory {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| {
                    f.extension().is_some_and(|x| x == "json")
                        && f.file_name().is_some_and(|n| n != "expected.json")
                })
                .collect();
            entries.sort();
            files.extend(entries);
        } else if p.is_file() {
            files.push(p.clone());
        } else {
            bail!("no such file or directory: {}", p.display());
        }
    }
    if files.is_empty() {
        bail!("no rule files found");
    }
    Ok(files)
}

fn verify_config(opts: &Options) -> VerifyConfig {
    let mut solver = SolverConfig::default();
    solver.solver = opts.solver.clone();
    if let Some(t) = opts.timeout_ms {
        solver.timeout_ms = t;
    }
    VerifyConfig {
        solver,
        dump_dir: opts.dump_smt.clone(),
        max_rank_override: opts.max_rank_override.clone(),
        seed: opts.seed,
        alias: opts.assume_alias.clone(),
        deadline_ms: None,
    }
}

/// Configures the global rayon pool; must run before any parallel work.
pub fn configure_jobs(jobs: Option<usize>) {
    if let Some(n) = jobs {
        // Ignore the error if a pool already exists (tests, repeat calls).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

pub fn cmd_verify(paths: &[PathBuf], opts: &Options) -> Result<Report> {
    configure_jobs(opts.jobs);
    let cfg = verify_config(opts);
    let files = collect_rule_files(paths)?;
    let mut rules_out = Vec::new();
    for f in &files {
        let rule = load_rule(f)?;
        let verdict = verify(&rule, &cfg)?;
        let mut rep = RuleReport::from_verdict(&verdict);
        if opts.oracle_check && verdict.kind == VerdictKind::Verified {
            rep.oracle_check = Some(run_oracle_check(&rule, &verdict.bounds, opts)?);
        }
        rules_out.push(rep);
    }
    Ok(Report { rules: rules_out })
}

/// Differential spot check of a verified rule at every in-bound rank tuple.
fn run_oracle_check(
    rule: &RewriteRule,
    bounds: &analysis::BoundReport,
    opts: &Options,
) -> Result<report::OracleCheck> {
    let trials = if opts.trials == 0 { 200 } else { opts.trials };
    let mut total = 0usize;
    let mut mismatches = 0usize;
    for ranks in analysis::task_set(bounds) {
        let diff = concrete::differential_test(rule, &ranks, trials, opts.seed, 4, 4)?;
        total += diff.accepted;
        if diff.mismatch.is_some() {
            mismatches += 1;
        }
    }
    Ok(report::OracleCheck { trials_accepted: total, rank_tuples_with_mismatch: mismatches })
}

pub fn cmd_bounds(paths: &[PathBuf]) -> Result<BoundsReport> {
    let files = collect_rule_files(paths)?;
    let mut out = Vec::new();
    for f in &files {
        let rule = load_rule(f)?;
        out.push(analysis::bound_report(&rule)?);
    }
    Ok(BoundsReport { rules: out })
}

pub fn cmd_fuzz(paths: &[PathBuf], opts: &Options) -> Result<FuzzReport> {
    configure_jobs(opts.jobs);
    let files = collect_rule_files(paths)?;
    let trials = if opts.trials == 0 { 200 } else { opts.trials };
    let mut out = Vec::new();
    for f in &files {
        let rule = load_rule(f)?;
        let bounds = analysis::bound_report(&rule)?;
        let rank_tuples: Vec<BTreeMap<String, usize>> = if opts.ranks.is_empty() {
            analysis::task_set(&bounds)
        } else {
            let mut m = BTreeMap::new();
            for c in &bounds.rclasses {
                m.insert(c.rclass.clone(), *opts.ranks.get(&c.rclass).unwrap_or(&1));
            }
            vec![m]
        };
        for ranks in rank_tuples {
            match concrete::differential_test(&rule, &ranks, trials, opts.seed, 4, 4) {
                Ok(diff) => out.push(FuzzRuleReport {
                    rule: rule.name.clone(),
                    ranks: ranks.clone(),
                    accepted: diff.accepted,
                    rejected: diff.rejected,
                    mismatch: diff.mismatch.map(|m| report::mismatch_json(&m)),
                    error: None,
                }),
                Err(e) => out.push(FuzzRuleReport {
                    rule: rule.name.clone(),
                    ranks: ranks.clone(),
                    accepted: 0,
                    rejected: 0,
                    mismatch: None,
                    error: Some(e.to_string()),
                }),
            }
        }
    }
    Ok(FuzzReport { rules: out })
}
