// SPDX-License-Identifier: Apache-2.0
//! `trv` — verifier for tensor-graph rewrite rules.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use trv_cli::{cmd_bounds, cmd_fuzz, cmd_verify, exit_code_for, report, Options};

#[derive(Parser)]
#[command(name = "trv", version, about = "Verify tensor-graph rewrite rules")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Args, Debug)]
struct Common {
    /// Rule files or directories of rule files.
    #[arg(required = true)]
    paths: Vec<PathBuf>,
    /// Path to an SMT-LIB solver binary (default: z3 on PATH).
    #[arg(long)]
    solver: Option<PathBuf>,
    /// Per-query solver timeout in milliseconds.
    #[arg(long, default_value_t = 10000)]
    timeout_ms: u64,
    /// Worker threads for task-level parallelism.
    #[arg(long)]
    jobs: Option<usize>,
    /// Directory to dump SMT-LIB scripts (<rule>/<task>/<obligation>.smt2).
    #[arg(long)]
    dump_smt: Option<PathBuf>,
    /// Diagnostic rank caps, e.g. `c=1,d=2`; results below the inferred
    /// bound are marked non-conclusive.
    #[arg(long, value_parser = parse_assignments)]
    max_rank_override: Option<BTreeMap<String, usize>>,
    /// Replay counterexamples and differentially test verified rules.
    #[arg(long)]
    oracle_check: bool,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Treat two tensor variables as aliases, e.g. `X=Y` (Y shares X's
    /// values).
    #[arg(long, value_parser = parse_alias)]
    assume_alias: Vec<(String, String)>,
}

#[derive(Subcommand)]
enum Command {
    /// Verify rules end to end.
    Verify(Common),
    /// Report inferred per-rank-class bounds.
    Bounds(Common),
    /// Differentially test rules against the concrete interpreter.
    Fuzz {
        #[command(flatten)]
        common: Common,
        /// Trials per rank tuple.
        #[arg(long, default_value_t = 200)]
        trials: usize,
        /// Fixed ranks, e.g. `c=2`; defaults to every in-bound tuple.
        #[arg(long, value_parser = parse_assignments)]
        ranks: Option<BTreeMap<String, usize>>,
    },
}

fn parse_assignments(s: &str) -> Result<BTreeMap<String, usize>, String> {
    let mut m = BTreeMap::new();
    for part in s.split(',').filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| format!("expected name=value, got {part}"))?;
        let v: usize = v.parse().map_err(|_| format!("bad value in {part}"))?;
        m.insert(k.to_string(), v);
    }
    Ok(m)
}

fn parse_alias(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .ok_or_else(|| format!("expected t1=t2, got {s}"))
}

fn options_from(c: &Common, trials: usize, ranks: Option<BTreeMap<String, usize>>) -> Options {
    Options {
        solver: c.solver.clone(),
        timeout_ms: Some(c.timeout_ms),
        jobs: c.jobs,
        dump_smt: c.dump_smt.clone(),
        max_rank_override: c.max_rank_override.clone().unwrap_or_default(),
        oracle_check: c.oracle_check,
        seed: c.seed,
        assume_alias: c.assume_alias.clone(),
        trials,
        ranks: ranks.unwrap_or_default(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Verify(c) => {
            let opts = options_from(c, 200, None);
            match cmd_verify(&c.paths, &opts) {
                Ok(r) => {
                    emit(c.format, &r, report::render_text(&r));
                    Ok(exit_code_for(&r))
                }
                Err(e) => Err(e),
            }
        }
        Command::Bounds(c) => match cmd_bounds(&c.paths) {
            Ok(r) => {
                emit(c.format, &r, report::render_bounds_text(&r));
                Ok(0)
            }
            Err(e) => Err(e),
        },
        Command::Fuzz { common: c, trials, ranks } => {
            let opts = options_from(c, *trials, ranks.clone());
            match cmd_fuzz(&c.paths, &opts) {
                Ok(r) => {
                    emit(c.format, &r, report::render_fuzz_text(&r));
                    Ok(if r.rules.iter().any(|f| f.mismatch.is_some()) { 1 } else { 0 })
                }
                Err(e) => Err(e),
            }
        }
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}

fn emit<T: serde::Serialize>(format: Format, value: &T, text: String) {
    match format {
        Format::Json => {
            println!("{}", serde_json::to_string_pretty(value).expect("serialize report"))
        }
        Format::Text => print!("{text}"),
    }
}
