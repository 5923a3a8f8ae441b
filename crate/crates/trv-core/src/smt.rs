// SPDX-License-Identifier: Apache-2.0
//! SMT-LIB 2 lowering and external solver driver.
//!
//! Tensors become uninterpreted functions `Int^r -> Int|Real|Bool`, symbols
//! become integer (or real) constants, and proof goals are checked by
//! asserting `assumptions AND (not goal)`: `unsat` proves the goal. The
//! solver is invoked as a subprocess `<solver-binary> <script-file>`;
//! scripts are deterministic byte-for-byte for a given obligation, so they
//! can be dumped and replayed standalone.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use crate::term::{Atom, CmpShape, Kind, Term, TermRef};
use crate::{Error, Result};

/// Declared uninterpreted tensor functions: name -> (arity, element kind).
pub type TensorDecls = BTreeMap<String, (usize, Kind)>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Status {
    Unsat,
    Sat,
    Unknown,
    Timeout,
    SolverError(String),
}

#[derive(Debug, Clone)]
pub struct SolverResult {
    pub status: Status,
    /// Raw solver stdout (diagnostics, model text).
    pub raw: String,
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub solver: Option<PathBuf>,
    pub timeout_ms: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { solver: None, timeout_ms: 10_000 }
    }
}

// ---------------------------------------------------------------------------
// Lowering
// ---------------------------------------------------------------------------

/// Lowers a scalar term to SMT-LIB 2 expression text.
///
/// Fails with [`Error::ResidualReduction`] if a reduction element survived
/// discharge, since reductions have no solver encoding.
pub fn lower(t: &TermRef, tensors: &TensorDecls) -> Result<String> {
    let mut out = String::new();
    emit(t, tensors, t.kind(), &mut out)?;
    Ok(out)
}

fn atom_kind(a: &Atom, tensors: &TensorDecls) -> Kind {
    match a {
        Atom::Sym(_, k) => *k,
        Atom::Div(..) | Atom::Mod(..) => Kind::Int,
        Atom::Min(x, _) | Atom::Max(x, _) => x.kind(),
        Atom::Ite(_, x, _) => x.kind(),
        Atom::Read { tensor, .. } => {
            tensors.get(tensor).map(|(_, k)| *k).unwrap_or(Kind::Int)
        }
        Atom::Red(..) => Kind::Int,
    }
}

fn emit(t: &TermRef, tensors: &TensorDecls, want: Kind, out: &mut String) -> Result<()> {
    match &**t {
        Term::Bool(b) => write!(out, "{b}").unwrap(),
        Term::Lin(l) => emit_lin(l, tensors, want, out)?,
        Term::Cmp(shape, l) => {
            let op = match shape {
                CmpShape::Ge0 => ">=",
                CmpShape::Gt0 => ">",
                CmpShape::Eq0 => "=",
            };
            let zero = if l.kind == Kind::Real { "0.0" } else { "0" };
            write!(out, "({op} ").unwrap();
            emit_lin(l, tensors, l.kind, out)?;
            write!(out, " {zero})").unwrap();
        }
        Term::And(ts) => {
            write!(out, "(and").unwrap();
            for x in ts {
                write!(out, " ").unwrap();
                emit(x, tensors, Kind::Bool, out)?;
            }
            write!(out, ")").unwrap();
        }
        Term::Or(ts) => {
            write!(out, "(or").unwrap();
            for x in ts {
                write!(out, " ").unwrap();
                emit(x, tensors, Kind::Bool, out)?;
            }
            write!(out, ")").unwrap();
        }
        Term::Not(x) => {
            write!(out, "(not ").unwrap();
            emit(x, tensors, Kind::Bool, out)?;
            write!(out, ")").unwrap();
        }
        Term::Exists(vars, body) => {
            write!(out, "(exists (").unwrap();
            for (i, v) in vars.iter().enumerate() {
                if i > 0 {
                    write!(out, " ").unwrap();
                }
                write!(out, "({} Int)", sym_name(v)).unwrap();
            }
            write!(out, ") ").unwrap();
            emit(body, tensors, Kind::Bool, out)?;
            write!(out, ")").unwrap();
        }
    }
    Ok(())
}

fn emit_lin(
    l: &crate::term::LinComb,
    tensors: &TensorDecls,
    want: Kind,
    out: &mut String,
) -> Result<()> {
    let coerce = want == Kind::Real;
    let lit = |v: i64| -> String {
        let body = if coerce { format!("{v}.0") } else { format!("{v}") };
        if v < 0 {
            let pos = if coerce { format!("{}.0", -v) } else { format!("{}", -v) };
            format!("(- {pos})")
        } else {
            body
        }
    };
    let mut parts: Vec<String> = Vec::new();
    if l.constant != 0 || l.terms.is_empty() {
        parts.push(lit(l.constant));
    }
    for (mono, coeff) in &l.terms {
        let mut factors: Vec<String> = Vec::new();
        if *coeff != 1 || mono.is_empty() {
            factors.push(lit(*coeff));
        }
        for a in mono {
            let mut s = String::new();
            emit_atom(a, tensors, &mut s)?;
            if coerce && atom_kind(a, tensors) == Kind::Int {
                s = format!("(to_real {s})");
            }
            factors.push(s);
        }
        parts.push(match factors.len() {
            1 => factors.pop().unwrap(),
            _ => format!("(* {})", factors.join(" ")),
        });
    }
    match parts.len() {
        1 => write!(out, "{}", parts[0]).unwrap(),
        _ => write!(out, "(+ {})", parts.join(" ")).unwrap(),
    }
    Ok(())
}

fn emit_atom(a: &Atom, tensors: &TensorDecls, out: &mut String) -> Result<()> {
    match a {
        Atom::Sym(n, _) => write!(out, "{}", sym_name(n)).unwrap(),
        Atom::Div(x, y) | Atom::Mod(x, y) => {
            let op = if matches!(a, Atom::Div(..)) { "div" } else { "mod" };
            write!(out, "({op} ").unwrap();
            emit(x, tensors, Kind::Int, out)?;
            write!(out, " ").unwrap();
            emit(y, tensors, Kind::Int, out)?;
            write!(out, ")").unwrap();
        }
        Atom::Min(x, y) | Atom::Max(x, y) => {
            // min(a,b) = ite(a<=b, a, b); max dually.
            let le = matches!(a, Atom::Min(..));
            let k = x.kind();
            write!(out, "(ite ({} ", if le { "<=" } else { ">=" }).unwrap();
            emit(x, tensors, k, out)?;
            write!(out, " ").unwrap();
            emit(y, tensors, k, out)?;
            write!(out, ") ").unwrap();
            emit(x, tensors, k, out)?;
            write!(out, " ").unwrap();
            emit(y, tensors, k, out)?;
            write!(out, ")").unwrap();
        }
        Atom::Ite(c, x, y) => {
            let k = if x.kind() == Kind::Real || y.kind() == Kind::Real {
                Kind::Real
            } else {
                Kind::Int
            };
            write!(out, "(ite ").unwrap();
            emit(c, tensors, Kind::Bool, out)?;
            write!(out, " ").unwrap();
            emit(x, tensors, k, out)?;
            write!(out, " ").unwrap();
            emit(y, tensors, k, out)?;
            write!(out, ")").unwrap();
        }
        Atom::Read { tensor, indices } => {
            if indices.is_empty() {
                write!(out, "{}", sym_name(tensor)).unwrap();
            } else {
                write!(out, "({}", sym_name(tensor)).unwrap();
                for i in indices {
                    write!(out, " ").unwrap();
                    emit(i, tensors, Kind::Int, out)?;
                }
                write!(out, ")").unwrap();
            }
        }
        Atom::Red(r) => {
            return Err(Error::ResidualReduction(format!(
                "Red^{} over {} indices",
                r.op,
                r.indices.len()
            )));
        }
    }
    Ok(())
}

/// SMT-LIB symbol for one of our dotted symbol names. Dots and `%` are
/// legal in quoted symbols only if we quote consistently; we keep plain
/// symbols because SMT-LIB allows `.`, `%`, and alphanumerics unquoted.
fn sym_name(n: &str) -> String {
    n.to_string()
}

fn sort_name(k: Kind) -> &'static str {
    match k {
        Kind::Int => "Int",
        Kind::Bool => "Bool",
        Kind::Real => "Real",
    }
}

/// Builds a deterministic, self-contained script asserting
/// `assumptions AND (not goal)` followed by `(check-sat)`.
pub fn build_check_script(
    goal: &TermRef,
    assumptions: &[TermRef],
    tensors: &TensorDecls,
) -> Result<String> {
    let mut syms: BTreeMap<String, Kind> = BTreeMap::new();
    crate::term::collect_syms(goal, &mut syms);
    for a in assumptions {
        crate::term::collect_syms(a, &mut syms);
    }
    let mut s = String::new();
    writeln!(s, "(set-option :produce-models true)").unwrap();
    for (name, (arity, kind)) in tensors {
        let args = vec!["Int"; *arity].join(" ");
        writeln!(s, "(declare-fun {} ({args}) {})", sym_name(name), sort_name(*kind)).unwrap();
    }
    for (name, kind) in &syms {
        writeln!(s, "(declare-const {} {})", sym_name(name), sort_name(*kind)).unwrap();
    }
    for a in assumptions {
        if a.as_const_bool() == Some(true) {
            continue;
        }
        writeln!(s, "(assert {})", lower(a, tensors)?).unwrap();
    }
    let neg = crate::term::not(goal);
    writeln!(s, "(assert {})", lower(&neg, tensors)?).unwrap();
    writeln!(s, "(check-sat)").unwrap();
    Ok(s)
}

// ---------------------------------------------------------------------------
// Solver process driver
// ---------------------------------------------------------------------------

/// Resolves the solver binary: explicit path, then `TRV_SOLVER`, then `z3`
/// on `PATH`, then a `tools/z3` shim found in an ancestor directory.
pub fn resolve_solver(explicit: Option<&Path>) -> Result<PathBuf> {
    if let Some(p) = explicit {
        return Ok(p.to_path_buf());
    }
    if let Ok(p) = std::env::var("TRV_SOLVER") {
        if !p.is_empty() {
            return Ok(PathBuf::from(p));
        }
    }
    if let Some(paths) = std::env::var_os("PATH") {
        for dir in std::env::split_paths(&paths) {
            let cand = dir.join("z3");
            if is_executable(&cand) {
                return Ok(cand);
            }
        }
    }
    let mut starts: Vec<PathBuf> = Vec::new();
    if let Ok(d) = std::env::current_dir() {
        starts.push(d);
    }
    if let Ok(exe) = std::env::current_exe() {
        if let Some(d) = exe.parent() {
            starts.push(d.to_path_buf());
        }
    }
    for start in starts {
        let mut dir: Option<&Path> = Some(&start);
        while let Some(d) = dir {
            let cand = d.join("tools").join("z3");
            if is_executable(&cand) {
                return Ok(cand);
            }
            dir = d.parent();
        }
    }
    Err(Error::SolverSpawnError(
        "no solver found: set TRV_SOLVER or install z3".into(),
    ))
}

fn is_executable(p: &Path) -> bool {
    use std::os::unix::fs::PermissionsExt;
    p.is_file()
        && p.metadata()
            .map(|m| m.permissions().mode() & 0o111 != 0)
            .unwrap_or(false)
}

/// Runs a complete SMT-LIB script through the solver with a wall-clock
/// timeout, returning the status read from the first output line.
pub fn run_script(script: &str, cfg: &SolverConfig) -> Result<SolverResult> {
    let solver = resolve_solver(cfg.solver.as_deref())?;
    let mut file = tempfile::Builder::new()
        .prefix("trv-")
        .suffix(".smt2")
        .tempfile()
        .map_err(|e| Error::SolverSpawnError(format!("temp file: {e}")))?;
    file.write_all(script.as_bytes())
        .map_err(|e| Error::SolverSpawnError(format!("temp file: {e}")))?;
    let path = file.path().to_path_buf();

    let mut child = Command::new(&solver)
        .arg(&path)
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| Error::SolverSpawnError(format!("{}: {e}", solver.display())))?;

    let deadline = Instant::now() + Duration::from_millis(cfg.timeout_ms);
    loop {
        match child.try_wait() {
            Ok(Some(_)) => break,
            Ok(None) => {
                if Instant::now() >= deadline {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Ok(SolverResult { status: Status::Timeout, raw: String::new() });
                }
                std::thread::sleep(Duration::from_millis(5));
            }
            Err(e) => {
                return Err(Error::SolverSpawnError(format!("wait: {e}")));
            }
        }
    }
    let output = child
        .wait_with_output()
        .map_err(|e| Error::SolverSpawnError(format!("output: {e}")))?;
    let stdout = String::from_utf8_lossy(&output.stdout).to_string();
    let stderr = String::from_utf8_lossy(&output.stderr).to_string();
    let first = stdout.lines().find(|l| !l.trim().is_empty()).unwrap_or("").trim();
    let status = match first {
        "unsat" => Status::Unsat,
        "sat" => Status::Sat,
        "unknown" => Status::Unknown,
        _ => Status::SolverError(format!("unexpected solver output: {first:?} {stderr}")),
    };
    Ok(SolverResult { status, raw: stdout })
}

/// Proves `assumptions => goal` by checking `assumptions AND (not goal)`.
pub fn check(
    goal: &TermRef,
    assumptions: &[TermRef],
    tensors: &TensorDecls,
    cfg: &SolverConfig,
) -> Result<SolverResult> {
    let script = build_check_script(goal, assumptions, tensors)?;
    run_script(&script, cfg)
}

// ---------------------------------------------------------------------------
// S-expression model parsing
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Sexp {
    Atom(String),
    List(Vec<Sexp>),
}

/// Parses all top-level s-expressions from solver output (skipping the
/// leading status line).
pub fn parse_sexps(input: &str) -> Result<Vec<Sexp>> {
    let mut tokens = Vec::new();
    let mut cur = String::new();
    for ch in input.chars() {
        match ch {
            '(' | ')' => {
                if !cur.is_empty() {
                    tokens.push(std::mem::take(&mut cur));
                }
                tokens.push(ch.to_string());
            }
            c if c.is_whitespace() => {
                if !cur.is_empty() {
                    tokens.push(std::mem::take(&mut cur));
                }
            }
            c => cur.push(c),
        }
    }
    if !cur.is_empty() {
        tokens.push(cur);
    }
    let mut out = Vec::new();
    let mut stack: Vec<Vec<Sexp>> = Vec::new();
    for t in tokens {
        match t.as_str() {
            "(" => stack.push(Vec::new()),
            ")" => {
                let list = stack
                    .pop()
                    .ok_or_else(|| Error::ModelParseError("unbalanced ')'".into()))?;
                let sexp = Sexp::List(list);
                match stack.last_mut() {
                    Some(top) => top.push(sexp),
                    None => out.push(sexp),
                }
            }
            atom => {
                let sexp = Sexp::Atom(atom.to_string());
                match stack.last_mut() {
                    Some(top) => top.push(sexp),
                    None => out.push(sexp),
                }
            }
        }
    }
    if !stack.is_empty() {
        return Err(Error::ModelParseError("unbalanced '('".into()));
    }
    Ok(out)
}

/// Interprets a value s-expression as an integer: `4`, `(- 4)`, or a
/// real-valued `4.0` / `(/ a b)` with integral value.
pub fn sexp_int(s: &Sexp) -> Result<i64> {
    match s {
        Sexp::Atom(a) => {
            let a = a.strip_suffix(".0").unwrap_or(a);
            a.parse::<i64>()
                .map_err(|_| Error::ModelParseError(format!("not an integer: {a}")))
        }
        Sexp::List(items) => match items.as_slice() {
            [Sexp::Atom(op), inner] if op == "-" => Ok(-sexp_int(inner)?),
            _ => Err(Error::ModelParseError(format!("not an integer: {s:?}"))),
        },
    }
}

/// Parses `(get-value ...)` output: a list of `(key value)` pairs. Keys are
/// rendered back to canonical text form.
pub fn parse_values(raw: &str) -> Result<Vec<(String, i64)>> {
    // Skip the status line if present.
    let body: String = raw
        .lines()
        .filter(|l| {
            let t = l.trim();
            t != "sat" && t != "unsat" && t != "unknown"
        })
        .collect::<Vec<_>>()
        .join("\n");
    let sexps = parse_sexps(&body)?;
    let mut out = Vec::new();
    for s in sexps {
        let Sexp::List(pairs) = s else {
            return Err(Error::ModelParseError("expected value list".into()));
        };
        for p in pairs {
            let Sexp::List(kv) = p else {
                return Err(Error::ModelParseError("expected (key value) pair".into()));
            };
            if kv.len() != 2 {
                return Err(Error::ModelParseError(format!("bad pair arity: {kv:?}")));
            }
            out.push((render_sexp(&kv[0]), sexp_int(&kv[1])?));
        }
    }
    Ok(out)
}

pub fn render_sexp(s: &Sexp) -> String {
    match s {
        Sexp::Atom(a) => a.clone(),
        Sexp::List(items) => {
            let inner: Vec<String> = items.iter().map(render_sexp).collect();
            format!("({})", inner.join(" "))
        }
    }
}
