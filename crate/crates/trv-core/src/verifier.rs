// SPDX-License-Identifier: Apache-2.0
//! Verification orchestration.
//!
//! For each task (one concrete rank tuple up to the inferred bounds) the
//! rule is instantiated, both sides symbolically evaluated, and four checks
//! performed: (a) structural axes equality, engine-side; (b) shape equality;
//! (c) access-validity implication; (d) value equality plus RHS validity.
//! Reduction elements are discharged first — by syntactic matching, an
//! identity auto-relation, or a user-supplied si-relation hint proven to be
//! a bijection — and replaced by shared uninterpreted symbols. A `sat`
//! answer yields a counterexample that is replayed through the concrete
//! interpreter before the rule is pronounced Invalid.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::PathBuf;
use std::time::Instant;

use crate::analysis::{self, access_sym, BoundReport};
use crate::concrete::{self, ConcreteTensor, Value};
use crate::instantiate::{self, AxisId, InstRule};
use crate::ir::{RClassId, RewriteRule, SiHint};
use crate::smt::{self, Sexp, SolverConfig, Status, TensorDecls};
use crate::symeval::{self, Access};
use crate::term::{self, Atom, Kind, RedElem, RedOp, Term, TermRef};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct VerifyConfig {
    pub solver: SolverConfig,
    pub dump_dir: Option<PathBuf>,
    /// Diagnostic rank caps per rank class; results are marked
    /// non-conclusive when a cap is below the inferred bound.
    pub max_rank_override: BTreeMap<RClassId, usize>,
    pub seed: u64,
    /// Tensor aliasing assumptions: each `(keep, merge)` pair verifies with
    /// `merge` sharing `keep`'s uninterpreted function.
    pub alias: Vec<(String, String)>,
    /// Wall-clock budget for the whole rule; tasks not started before the
    /// deadline come back Unknown("time budget exceeded") instead of
    /// running, so the verdict degrades to Unknown rather than blocking.
    pub deadline_ms: Option<u64>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            solver: SolverConfig::default(),
            dump_dir: None,
            max_rank_override: BTreeMap::new(),
            seed: 0,
            alias: Vec::new(),
            deadline_ms: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VerdictKind {
    Verified,
    Invalid,
    Unknown,
    Unsupported,
}

#[derive(Debug, Clone)]
pub struct Counterexample {
    pub ranks: BTreeMap<RClassId, usize>,
    pub obligation: String,
    pub syms: BTreeMap<String, i64>,
    pub tensors: BTreeMap<String, ConcreteTensor>,
    /// Witness access (empty for shape obligations).
    pub witness: BTreeMap<AxisId, i64>,
    pub lhs_value: Option<String>,
    pub rhs_value: Option<String>,
    pub oracle_confirmed: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct ObligationResult {
    pub name: String,
    pub status: Status,
    pub millis: u128,
}

#[derive(Debug, Clone)]
pub struct TaskResult {
    pub ranks: BTreeMap<RClassId, usize>,
    pub obligations: Vec<ObligationResult>,
    pub status: TaskStatus,
}

#[derive(Debug, Clone)]
pub enum TaskStatus {
    Proved,
    Refuted(Counterexample),
    Unknown(String),
    /// Structural axes mismatch; no instantiation can fix it.
    Structural(String),
}

#[derive(Debug, Clone)]
pub struct Verdict {
    pub rule: String,
    pub kind: VerdictKind,
    pub reason: Option<String>,
    pub bounds: BoundReport,
    pub tasks: Vec<TaskResult>,
    pub counterexamples: Vec<Counterexample>,
    /// True when a rank override capped tasks below the inferred bound.
    pub non_conclusive: bool,
    pub millis: u128,
}

/// Verifies a rule end to end.
pub fn verify(rule: &RewriteRule, cfg: &VerifyConfig) -> Result<Verdict> {
    let start = Instant::now();
    let bounds = analysis::bound_report(rule)?;
    let mut tasks = analysis::task_set(&bounds);
    let mut non_conclusive = false;
    if !cfg.max_rank_override.is_empty() {
        for c in &bounds.rclasses {
            if let Some(cap) = cfg.max_rank_override.get(&c.rclass) {
                if *cap < c.bound {
                    non_conclusive = true;
                }
            }
        }
        tasks.retain(|t| {
            t.iter().all(|(c, r)| cfg.max_rank_override.get(c).map_or(true, |cap| r <= cap))
        });
    }

    let results: Vec<TaskResult> = run_tasks(rule, cfg, &tasks, start);

    let mut kind = VerdictKind::Verified;
    let mut reason = None;
    let mut counterexamples = Vec::new();
    for t in &results {
        match &t.status {
            TaskStatus::Proved => {}
            TaskStatus::Refuted(ce) => {
                kind = VerdictKind::Invalid;
                counterexamples.push(ce.clone());
            }
            TaskStatus::Structural(msg) => {
                kind = VerdictKind::Invalid;
                reason = Some(format!("structural axes mismatch: {msg}"));
            }
            TaskStatus::Unknown(msg) => {
                if kind == VerdictKind::Verified {
                    kind = VerdictKind::Unknown;
                    reason = Some(msg.clone());
                }
            }
        }
    }
    Ok(Verdict {
        rule: rule.name.clone(),
        kind,
        reason,
        bounds,
        tasks: results,
        counterexamples,
        non_conclusive,
        millis: start.elapsed().as_millis(),
    })
}

/// Skips a task (as Unknown) when the rule's wall-clock budget is spent.
fn run_task_budgeted(
    rule: &RewriteRule,
    cfg: &VerifyConfig,
    ranks: &BTreeMap<RClassId, usize>,
    start: Instant,
) -> TaskResult {
    if let Some(budget) = cfg.deadline_ms {
        if start.elapsed().as_millis() as u64 >= budget {
            return TaskResult {
                ranks: ranks.clone(),
                obligations: Vec::new(),
                status: TaskStatus::Unknown("time budget exceeded".into()),
            };
        }
    }
    run_task(rule, cfg, ranks)
}

#[cfg(feature = "parallel")]
fn run_tasks(
    rule: &RewriteRule,
    cfg: &VerifyConfig,
    tasks: &[BTreeMap<RClassId, usize>],
    start: Instant,
) -> Vec<TaskResult> {
    use rayon::prelude::*;
    tasks.par_iter().map(|ranks| run_task_budgeted(rule, cfg, ranks, start)).collect()
}

#[cfg(not(feature = "parallel"))]
fn run_tasks(
    rule: &RewriteRule,
    cfg: &VerifyConfig,
    tasks: &[BTreeMap<RClassId, usize>],
    start: Instant,
) -> Vec<TaskResult> {
    tasks.iter().map(|ranks| run_task_budgeted(rule, cfg, ranks, start)).collect()
}

fn task_tag(ranks: &BTreeMap<RClassId, usize>) -> String {
    let digits: Vec<String> = ranks.values().map(|r| r.to_string()).collect();
    format!("t{}", digits.join("_"))
}

fn run_task(rule: &RewriteRule, cfg: &VerifyConfig, ranks: &BTreeMap<RClassId, usize>) -> TaskResult {
    match try_run_task(rule, cfg, ranks) {
        Ok(r) => r,
        Err(e) => TaskResult {
            ranks: ranks.clone(),
            obligations: Vec::new(),
            status: TaskStatus::Unknown(format!("task error: {e}")),
        },
    }
}

struct TaskCtx<'a> {
    rule: &'a RewriteRule,
    cfg: &'a VerifyConfig,
    inst: InstRule,
    tensors: TensorDecls,
    obligations: Vec<ObligationResult>,
    tag: String,
}

fn try_run_task(
    rule: &RewriteRule,
    cfg: &VerifyConfig,
    ranks: &BTreeMap<RClassId, usize>,
) -> Result<TaskResult> {
    let tag = task_tag(ranks);
    let inst = instantiate::instantiate(rule, ranks, &tag)?;
    let (lhs, lhs_validity) = symeval::sym_eval(&inst.lhs, &inst.env)?;
    let (rhs, rhs_validity) = symeval::sym_eval(&inst.rhs, &inst.env)?;

    // (a) Engine-side structural axes check.
    if lhs.axes != rhs.axes {
        return Ok(TaskResult {
            ranks: ranks.clone(),
            obligations: Vec::new(),
            status: TaskStatus::Structural(format!("{:?} vs {:?}", lhs.axes, rhs.axes)),
        });
    }

    let mut tensors: TensorDecls = inst
        .env
        .iter()
        .map(|(name, sig)| (name.clone(), (sig.axes.len(), sig.elem)))
        .collect();
    // Aliasing: merged tensors share one uninterpreted function.
    let alias_map: HashMap<String, String> =
        cfg.alias.iter().map(|(keep, merge)| (merge.clone(), keep.clone())).collect();
    for merged in alias_map.keys() {
        tensors.remove(merged);
    }

    let mut ctx = TaskCtx {
        rule,
        cfg,
        inst,
        tensors,
        obligations: Vec::new(),
        tag: tag.clone(),
    };

    let apply_alias = |t: &TermRef| -> TermRef {
        if alias_map.is_empty() {
            return t.clone();
        }
        rename_reads(t, &alias_map)
    };

    // Shared assumption set: precondition and LHS validity.
    let mut assumptions: Vec<TermRef> = vec![ctx.inst.precond.clone()];
    assumptions.extend(lhs_validity.iter().cloned());
    let assumptions: Vec<TermRef> = assumptions.iter().map(&apply_alias).collect();

    // (b) Shape equality.
    let shape_goal = term::and(
        lhs.axes
            .iter()
            .map(|a| term::eq(&lhs.shape[a], &rhs.shape[a]))
            .collect(),
    );
    if let Some(out) = ctx.discharge_obligation(
        "shape",
        &shape_goal,
        &assumptions,
        ranks,
        &BTreeMap::new(),
        false,
    )? {
        return Ok(out);
    }

    // General symbolic access constrained to the LHS box.
    let acc: Access = lhs
        .axes
        .iter()
        .map(|a| (a.clone(), term::sym(access_sym(a, &tag), Kind::Int)))
        .collect();
    let access_valid = |shape: &instantiate::IMap| -> TermRef {
        term::and(
            lhs.axes
                .iter()
                .map(|a| {
                    term::and(vec![
                        term::ge(&acc[a], &term::int(0)),
                        term::lt(&acc[a], &shape[a]),
                    ])
                })
                .collect(),
        )
    };
    let lhs_acc_valid = access_valid(&lhs.shape);
    let rhs_acc_valid = access_valid(&rhs.shape);
    let mut acc_assumptions = assumptions.clone();
    acc_assumptions.push(apply_alias(&lhs_acc_valid));

    // (c) Valid LHS accesses are valid RHS accesses.
    if let Some(out) = ctx.discharge_obligation(
        "access",
        &apply_alias(&rhs_acc_valid),
        &acc_assumptions,
        ranks,
        &BTreeMap::new(),
        false,
    )? {
        return Ok(out);
    }

    // (d) Value equality and RHS validity.
    let lv = symeval::normalize_reductions(&apply_alias(&(lhs.value)(&acc)));
    let rv = symeval::normalize_reductions(&apply_alias(&(rhs.value)(&acc)));
    let (lv, rv, abstracted) = match ctx.discharge_reductions(&lv, &rv, &acc_assumptions)? {
        DischargeOutcome::Done { lhs, rhs, abstracted } => (lhs, rhs, abstracted),
        DischargeOutcome::Unknown(reason) => {
            return Ok(TaskResult {
                ranks: ranks.clone(),
                obligations: ctx.obligations,
                status: TaskStatus::Unknown(reason),
            })
        }
    };
    let rhs_valid = term::and(rhs_validity.iter().map(&apply_alias).collect());
    let value_goal = term::and(vec![rhs_valid, term::eq(&lv, &rv)]);
    if let Some(out) = ctx.discharge_obligation(
        "value",
        &value_goal,
        &acc_assumptions,
        ranks,
        &acc,
        abstracted,
    )? {
        return Ok(out);
    }

    Ok(TaskResult {
        ranks: ranks.clone(),
        obligations: ctx.obligations,
        status: TaskStatus::Proved,
    })
}

impl<'a> TaskCtx<'a> {
    fn dump(&self, name: &str, script: &str) {
        if let Some(dir) = &self.cfg.dump_dir {
            let d = dir.join(&self.rule.name).join(&self.tag);
            if std::fs::create_dir_all(&d).is_ok() {
                let _ = std::fs::write(d.join(format!("{name}.smt2")), script);
            }
        }
    }

    fn solve(&mut self, name: &str, goal: &TermRef, assumptions: &[TermRef]) -> Result<Status> {
        let script = smt::build_check_script(goal, assumptions, &self.tensors)?;
        self.dump(name, &script);
        let t0 = Instant::now();
        let res = smt::run_script(&script, &self.cfg.solver)?;
        self.obligations.push(ObligationResult {
            name: name.to_string(),
            status: res.status.clone(),
            millis: t0.elapsed().as_millis(),
        });
        Ok(res.status)
    }

    /// Solves one main obligation; returns Some(task result) when the task
    /// is decided (refuted or unknown), None when proved and verification
    /// should continue.
    fn discharge_obligation(
        &mut self,
        name: &str,
        goal: &TermRef,
        assumptions: &[TermRef],
        ranks: &BTreeMap<RClassId, usize>,
        witness_access: &Access,
        abstracted: bool,
    ) -> Result<Option<TaskResult>> {
        match self.solve(name, goal, assumptions)? {
            Status::Unsat => Ok(None),
            Status::Sat => {
                let ce = self.extract_counterexample(
                    name,
                    goal,
                    assumptions,
                    ranks,
                    witness_access,
                )?;
                match ce {
                    Some(ce) if ce.oracle_confirmed => Ok(Some(TaskResult {
                        ranks: ranks.clone(),
                        obligations: std::mem::take(&mut self.obligations),
                        status: TaskStatus::Refuted(ce),
                    })),
                    Some(ce) if !abstracted => {
                        // Unconfirmed replay without abstraction points at an
                        // encoding problem: stay sound, report Unknown.
                        Ok(Some(TaskResult {
                            ranks: ranks.clone(),
                            obligations: std::mem::take(&mut self.obligations),
                            status: TaskStatus::Unknown(format!(
                                "suspect counterexample (oracle replay disagrees): {}",
                                ce.detail
                            )),
                        }))
                    }
                    _ => Ok(Some(TaskResult {
                        ranks: ranks.clone(),
                        obligations: std::mem::take(&mut self.obligations),
                        status: TaskStatus::Unknown(format!(
                            "{name} obligation sat but no replayable model"
                        )),
                    })),
                }
            }
            Status::Unknown | Status::Timeout => Ok(Some(TaskResult {
                ranks: ranks.clone(),
                obligations: std::mem::take(&mut self.obligations),
                status: TaskStatus::Unknown(format!("solver returned unknown on {name}")),
            })),
            Status::SolverError(e) => Err(Error::SolverSpawnError(e)),
        }
    }

    // -- counterexample extraction --------------------------------------

    fn extract_counterexample(
        &mut self,
        obligation: &str,
        goal: &TermRef,
        assumptions: &[TermRef],
        ranks: &BTreeMap<RClassId, usize>,
        witness_access: &Access,
    ) -> Result<Option<Counterexample>> {
        // Stage B: re-solve with small-model bounds and read all constants.
        let mut syms: BTreeMap<String, Kind> = BTreeMap::new();
        term::collect_syms(goal, &mut syms);
        for a in assumptions {
            term::collect_syms(a, &mut syms);
        }
        let int_syms: Vec<String> = syms
            .iter()
            .filter(|(_, k)| **k == Kind::Int)
            .map(|(n, _)| n.clone())
            .collect();
        let mut bounded = assumptions.to_vec();
        for n in &int_syms {
            let s = term::sym(n.clone(), Kind::Int);
            bounded.push(term::ge(&s, &term::int(-8)));
            bounded.push(term::le(&s, &term::int(8)));
        }
        let base = smt::build_check_script(goal, &bounded, &self.tensors)?;
        let mut script_b = base.clone();
        if !int_syms.is_empty() {
            script_b.push_str(&format!("(get-value ({}))\n", int_syms.join(" ")));
        }
        let res_b = smt::run_script(&script_b, &self.cfg.solver)?;
        if res_b.status != Status::Sat {
            return Ok(None);
        }
        let values = smt::parse_values(&res_b.raw)?;
        let model: BTreeMap<String, i64> = values.into_iter().collect();

        // Stage C: pin constants and read tensor entries from one model.
        let mut script_c = base.clone();
        for (n, v) in &model {
            let lit = if *v < 0 { format!("(- {})", -v) } else { v.to_string() };
            script_c.push_str(&format!("(assert (= {n} {lit}))\n"));
        }
        script_c.push_str("(check-sat)\n");
        let mut queries: Vec<(String, String, Vec<i64>, Kind)> = Vec::new();
        for (tname, (arity, kind)) in &self.tensors {
            // Tensor box sizes come from the model's shape symbols. The
            // tensor may be an alias target; its signature is in env.
            let sig = match self.inst.env.get(tname) {
                Some(s) => s,
                None => continue,
            };
            let sizes: BTreeMap<AxisId, i64> = sig
                .axes
                .iter()
                .map(|a| {
                    let s = model
                        .get(&instantiate::shape_sym(tname, a, &self.inst.inst.task))
                        .copied()
                        .unwrap_or(0);
                    (a.clone(), s.max(0))
                })
                .collect();
            let volume: i64 = sizes.values().product();
            if volume > 4096 {
                return Ok(None);
            }
            let _ = arity;
            for acc in concrete::index_box(
                &sizes.keys().cloned().collect::<Vec<_>>(),
                &sizes,
            ) {
                let idx: Vec<i64> = acc.values().copied().collect();
                let app = if idx.is_empty() {
                    tname.clone()
                } else {
                    format!(
                        "({tname} {})",
                        idx.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ")
                    )
                };
                script_c.push_str(&format!("(get-value ({app}))\n"));
                queries.push((app, tname.clone(), idx, *kind));
            }
        }
        let res_c = smt::run_script(&script_c, &self.cfg.solver)?;
        if res_c.status != Status::Sat {
            return Ok(None);
        }
        let mut entry_values: HashMap<String, Sexp> = HashMap::new();
        for (key, sexp) in parse_value_sexps(&res_c.raw)? {
            entry_values.insert(key, sexp);
        }

        // Assemble concrete tensors (entries default to 0 when unqueried).
        let mut tensors_out: BTreeMap<String, ConcreteTensor> = BTreeMap::new();
        for (tname, (_, kind)) in &self.tensors {
            let sig = match self.inst.env.get(tname) {
                Some(s) => s,
                None => continue,
            };
            let sizes: BTreeMap<AxisId, i64> = sig
                .axes
                .iter()
                .map(|a| {
                    let s = model
                        .get(&instantiate::shape_sym(tname, a, &self.inst.inst.task))
                        .copied()
                        .unwrap_or(0);
                    (a.clone(), s.max(0))
                })
                .collect();
            let default = match kind {
                Kind::Bool => Value::Bool(false),
                Kind::Real => Value::Real(num::BigRational::from(num::BigInt::from(0))),
                Kind::Int => Value::Int(0),
            };
            let mut tensor = ConcreteTensor::filled(sizes, default);
            let accs = tensor.accesses();
            for (i, acc) in accs.iter().enumerate() {
                let idx: Vec<i64> = acc.values().copied().collect();
                let app = if idx.is_empty() {
                    tname.clone()
                } else {
                    format!(
                        "({tname} {})",
                        idx.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ")
                    )
                };
                if let Some(s) = entry_values.get(&app) {
                    tensor.data[i] = sexp_to_value(s, *kind)?;
                }
            }
            tensors_out.insert(tname.clone(), tensor);
        }

        // Alias targets: the merged tensor shares the kept tensor's data.
        let alias_map: HashMap<String, String> = self
            .cfg
            .alias
            .iter()
            .map(|(keep, merge)| (merge.clone(), keep.clone()))
            .collect();
        for (merge, keep) in &alias_map {
            if let Some(t) = tensors_out.get(keep).cloned() {
                tensors_out.insert(merge.clone(), t);
            }
        }

        // Oracle replay.
        let witness: BTreeMap<AxisId, i64> = witness_access
            .iter()
            .filter_map(|(axis, t)| {
                let mut names = BTreeMap::new();
                term::collect_syms(t, &mut names);
                let name = names.keys().next()?;
                Some((axis.clone(), *model.get(name)?))
            })
            .collect();
        let (confirmed, lhs_s, rhs_s, detail) =
            self.replay(&tensors_out, &model, &witness, obligation);

        Ok(Some(Counterexample {
            ranks: ranks.clone(),
            obligation: obligation.to_string(),
            syms: model,
            tensors: tensors_out,
            witness,
            lhs_value: lhs_s,
            rhs_value: rhs_s,
            oracle_confirmed: confirmed,
            detail,
        }))
    }

    fn replay(
        &self,
        tensors: &BTreeMap<String, ConcreteTensor>,
        syms: &BTreeMap<String, i64>,
        witness: &BTreeMap<AxisId, i64>,
        obligation: &str,
    ) -> (bool, Option<String>, Option<String>, String) {
        let lhs = concrete::eval_concrete(&self.inst.lhs, tensors, syms);
        let rhs = concrete::eval_concrete(&self.inst.rhs, tensors, syms);
        match (lhs, rhs) {
            (Err(e), _) => (
                false,
                None,
                None,
                format!("replay failed: LHS invalid under model ({e})"),
            ),
            (Ok(_), Err(e)) => {
                (true, None, None, format!("RHS invalid under model: {e}"))
            }
            (Ok(l), Ok(r)) => {
                if l.sizes != r.sizes {
                    return (
                        true,
                        None,
                        None,
                        format!("shape mismatch: {:?} vs {:?}", l.sizes, r.sizes),
                    );
                }
                if obligation == "value" && !witness.is_empty() {
                    match (l.get(witness), r.get(witness)) {
                        (Ok(a), Ok(b)) => {
                            let eqv = Value::eq_v(a, b).unwrap_or(false);
                            return (
                                !eqv,
                                Some(format!("{a:?}")),
                                Some(format!("{b:?}")),
                                if eqv {
                                    format!("values agree at witness {witness:?}")
                                } else {
                                    format!("lhs != rhs at witness {witness:?}")
                                },
                            );
                        }
                        _ => {
                            return (
                                false,
                                None,
                                None,
                                "witness access out of range in replay".into(),
                            )
                        }
                    }
                }
                // Shape/access obligations with equal shapes: scan for any
                // value difference as best-effort confirmation.
                for acc in l.accesses() {
                    if let (Ok(a), Ok(b)) = (l.get(&acc), r.get(&acc)) {
                        if !Value::eq_v(a, b).unwrap_or(true) {
                            return (
                                true,
                                Some(format!("{a:?}")),
                                Some(format!("{b:?}")),
                                format!("lhs != rhs at {acc:?}"),
                            );
                        }
                    }
                }
                (false, None, None, "replay found no disagreement".into())
            }
        }
    }

    // -- reduction discharge ---------------------------------------------

    fn discharge_reductions(
        &mut self,
        lv: &TermRef,
        rv: &TermRef,
        assumptions: &[TermRef],
    ) -> Result<DischargeOutcome> {
        let lhs_reds = collect_outer_reds(lv);
        let rhs_reds = collect_outer_reds(rv);
        if lhs_reds.is_empty() && rhs_reds.is_empty() {
            return Ok(DischargeOutcome::Done { lhs: lv.clone(), rhs: rv.clone(), abstracted: false });
        }

        // Group identical (alpha-equivalent) reductions on either side under
        // one shared symbol: a sound uninterpreted abstraction.
        let mut canon_ids: BTreeMap<TermRef, usize> = BTreeMap::new();
        let mut fresh = 0usize;
        let mut id_of = |red: &RedElem| -> (TermRef, usize) {
            let as_term = term::atom(Kind::Int, Atom::Red(red.clone()));
            let canon = term::alpha_canon(&as_term);
            let id = *canon_ids.entry(canon.clone()).or_insert_with(|| {
                fresh += 1;
                fresh
            });
            (canon, id)
        };
        let lhs_ids: Vec<(RedElem, TermRef, usize)> =
            lhs_reds.iter().map(|r| { let (c, i) = id_of(r); (r.clone(), c, i) }).collect();
        let rhs_ids: Vec<(RedElem, TermRef, usize)> =
            rhs_reds.iter().map(|r| { let (c, i) = id_of(r); (r.clone(), c, i) }).collect();

        // Reductions whose canonical form appears on both sides match
        // syntactically; the rest need pairing.
        let lhs_set: BTreeSet<usize> = lhs_ids.iter().map(|(_, _, i)| *i).collect();
        let rhs_set: BTreeSet<usize> = rhs_ids.iter().map(|(_, _, i)| *i).collect();
        let unmatched_l: Vec<&(RedElem, TermRef, usize)> =
            lhs_ids.iter().filter(|(_, _, i)| !rhs_set.contains(i)).collect();
        let unmatched_r: Vec<&(RedElem, TermRef, usize)> =
            rhs_ids.iter().filter(|(_, _, i)| !lhs_set.contains(i)).collect();

        // Map canonical id -> replacement symbol id (pairing merges two ids).
        let mut replace: BTreeMap<usize, usize> = BTreeMap::new();
        for i in lhs_set.intersection(&rhs_set) {
            replace.insert(*i, *i);
        }

        if unmatched_l.len() > 1 || unmatched_r.len() > 1 {
            // Ambiguous multi-reduction pairing: do not guess.
            if !(unmatched_l.is_empty() && unmatched_r.is_empty()) {
                return Ok(DischargeOutcome::Unknown(
                    "reduction without hint (ambiguous pairing)".into(),
                ));
            }
        }
        match (unmatched_l.first(), unmatched_r.first()) {
            (None, None) => {}
            (Some((lred, _, li)), Some((rred, _, ri))) => {
                match self.discharge_pair(lred, rred, assumptions)? {
                    PairOutcome::Discharged => {
                        replace.insert(*li, *li);
                        replace.insert(*ri, *li);
                    }
                    PairOutcome::Unknown(reason) => {
                        return Ok(DischargeOutcome::Unknown(reason))
                    }
                }
            }
            _ => {
                return Ok(DischargeOutcome::Unknown(
                    "reduction without hint (unpaired reduction element)".into(),
                ))
            }
        }

        // Substitute each discharged reduction with its shared symbol.
        let mut canon_to_sym: BTreeMap<TermRef, TermRef> = BTreeMap::new();
        for (canon, id) in &canon_ids {
            if let Some(target) = replace.get(id) {
                let kind = red_kind(canon);
                canon_to_sym
                    .insert(canon.clone(), term::sym(format!("%red{target}"), kind));
            }
        }
        let sub = |t: &TermRef| -> TermRef {
            term::map_atoms(t, &mut |a| {
                if let Atom::Red(r) = a {
                    let canon = term::alpha_canon(&term::atom(Kind::Int, Atom::Red(r.clone())));
                    return canon_to_sym.get(&canon).cloned();
                }
                None
            })
        };
        Ok(DischargeOutcome::Done { lhs: sub(lv), rhs: sub(rv), abstracted: true })
    }

    /// Attempts to prove one LHS/RHS reduction pair equal, via an explicit
    /// si-relation hint or the identity auto-relation.
    fn discharge_pair(
        &mut self,
        lred: &RedElem,
        rred: &RedElem,
        assumptions: &[TermRef],
    ) -> Result<PairOutcome> {
        if lred.op != rred.op {
            return Ok(PairOutcome::Unknown(
                "reduction without hint (operator mismatch)".into(),
            ));
        }
        let lflat = match flatten_red(lred) {
            Some(f) => f,
            None => {
                return Ok(PairOutcome::Unknown(
                    "reduction without hint (unflattenable nesting)".into(),
                ))
            }
        };
        let rflat = match flatten_red(rred) {
            Some(f) => f,
            None => {
                return Ok(PairOutcome::Unknown(
                    "reduction without hint (unflattenable nesting)".into(),
                ))
            }
        };
        // Hint lookup by reduction-index base names.
        let lbases = base_names(&lflat.indices);
        let rbases = base_names(&rflat.indices);
        let hint: Option<&SiHint> = self.rule.si_hints.iter().find(|h| {
            let hl: BTreeSet<&str> = h.lhs_indices.iter().map(|s| s.as_str()).collect();
            let hr: BTreeSet<&str> = h.rhs_indices.iter().map(|s| s.as_str()).collect();
            hl == lbases.iter().map(|s| s.as_str()).collect()
                && hr == rbases.iter().map(|s| s.as_str()).collect()
        });
        for h in &self.rule.si_hints {
            for n in h.lhs_indices.iter().chain(h.rhs_indices.iter()) {
                if !lbases.contains(n) && !rbases.contains(n) {
                    return Err(Error::HintReferencesUnknownIndex(n.clone()));
                }
            }
        }

        match hint {
            Some(h) => self.discharge_with_hint(&lflat, &rflat, h, assumptions),
            None => self.discharge_identity(&lflat, &rflat, assumptions),
        }
    }

    fn discharge_with_hint(
        &mut self,
        l: &FlatRed,
        r: &FlatRed,
        hint: &SiHint,
        assumptions: &[TermRef],
    ) -> Result<PairOutcome> {
        let relation =
            instantiate::instantiate_formula(self.rule, &self.inst.inst, &hint.relation)?;
        let dom_l = l.domain_formula();
        let dom_r = r.domain_formula();
        let xs: Vec<String> = l.indices.iter().map(|i| i.name.clone()).collect();
        let ys: Vec<String> = r.indices.iter().map(|i| i.name.clone()).collect();

        // Totality: every valid x has some related valid y, and dually.
        let tot_lr = term::implies(
            &dom_l,
            &term::exists(ys.clone(), term::and(vec![dom_r.clone(), relation.clone()])),
        );
        let tot_rl = term::implies(
            &dom_r,
            &term::exists(xs.clone(), term::and(vec![dom_l.clone(), relation.clone()])),
        );
        // Uniqueness: the relation is functional in both directions.
        let prime = |names: &[String], t: &TermRef| -> TermRef {
            let m: HashMap<String, TermRef> = names
                .iter()
                .map(|n| (n.clone(), term::sym(format!("{n}%2"), Kind::Int)))
                .collect();
            term::subst_syms(t, &m)
        };
        let eq_all = |names: &[String]| -> TermRef {
            term::and(
                names
                    .iter()
                    .map(|n| {
                        term::eq(
                            &term::sym(n.clone(), Kind::Int),
                            &term::sym(format!("{n}%2"), Kind::Int),
                        )
                    })
                    .collect(),
            )
        };
        let uniq_lr = term::implies(
            &term::and(vec![
                dom_l.clone(),
                dom_r.clone(),
                relation.clone(),
                prime(&ys, &dom_r),
                prime(&ys, &relation),
            ]),
            &eq_all(&ys),
        );
        let uniq_rl = term::implies(
            &term::and(vec![
                dom_r.clone(),
                dom_l.clone(),
                relation.clone(),
                prime(&xs, &dom_l),
                prime(&xs, &relation),
            ]),
            &eq_all(&xs),
        );
        // Pointwise body equality under the relation.
        let body_eq = term::implies(
            &term::and(vec![dom_l.clone(), dom_r.clone(), relation.clone()]),
            &term::eq(&l.body, &r.body),
        );

        let checks: [(&str, &TermRef); 5] = [
            ("red-tot-lr", &tot_lr),
            ("red-tot-rl", &tot_rl),
            ("red-uniq-lr", &uniq_lr),
            ("red-uniq-rl", &uniq_rl),
            ("red-body", &body_eq),
        ];
        for (name, goal) in checks {
            match self.solve(name, goal, assumptions)? {
                Status::Unsat => {}
                Status::Sat => {
                    return Ok(PairOutcome::Unknown(format!(
                        "si-relation check failed ({name})"
                    )))
                }
                _ => {
                    return Ok(PairOutcome::Unknown(format!(
                        "solver returned unknown on {name}"
                    )))
                }
            }
        }
        Ok(PairOutcome::Discharged)
    }

    /// Identity auto-relation: pairs indices by identical range terms when
    /// the pairing is unambiguous, then proves pointwise body equality.
    fn discharge_identity(
        &mut self,
        l: &FlatRed,
        r: &FlatRed,
        assumptions: &[TermRef],
    ) -> Result<PairOutcome> {
        if l.indices.len() != r.indices.len()
            || l.domain.as_const_bool() != Some(true)
            || r.domain.as_const_bool() != Some(true)
        {
            return Ok(PairOutcome::Unknown("reduction without hint".into()));
        }
        // Pair by size term; require each size to be unique per side.
        let mut pairs: Vec<(String, String)> = Vec::new();
        let mut used: BTreeSet<usize> = BTreeSet::new();
        for li in &l.indices {
            let candidates: Vec<usize> = r
                .indices
                .iter()
                .enumerate()
                .filter(|(j, ri)| !used.contains(j) && ri.size == li.size)
                .map(|(j, _)| j)
                .collect();
            let same_l = l.indices.iter().filter(|x| x.size == li.size).count();
            if candidates.len() != same_l || candidates.is_empty() {
                return Ok(PairOutcome::Unknown("reduction without hint".into()));
            }
            let j = candidates[0];
            used.insert(j);
            pairs.push((li.name.clone(), r.indices[j].name.clone()));
        }
        // Rename RHS indices to LHS names and prove bodies equal on the box.
        let rename: HashMap<String, TermRef> = pairs
            .iter()
            .map(|(x, y)| (y.clone(), term::sym(x.clone(), Kind::Int)))
            .collect();
        let rbody = term::subst_syms(&r.body, &rename);
        let goal = term::implies(&l.ranges(), &term::eq(&l.body, &rbody));
        match self.solve("red-body", &goal, assumptions)? {
            Status::Unsat => Ok(PairOutcome::Discharged),
            Status::Sat => Ok(PairOutcome::Unknown(
                "reduction bodies differ under identity relation".into(),
            )),
            _ => Ok(PairOutcome::Unknown("solver returned unknown on red-body".into())),
        }
    }
}

enum DischargeOutcome {
    Done { lhs: TermRef, rhs: TermRef, abstracted: bool },
    Unknown(String),
}

enum PairOutcome {
    Discharged,
    Unknown(String),
}

/// A reduction with nested branch structure flattened into one index list
/// plus a domain constraint over the indices.
struct FlatRed {
    indices: Vec<term::RedIndex>,
    /// Extra domain constraint beyond the base ranges (guards from
    /// flattened ite branches; `true` for simple reductions).
    domain: TermRef,
    body: TermRef,
}

impl FlatRed {
    fn ranges(&self) -> TermRef {
        term::and(
            self.indices
                .iter()
                .map(|i| {
                    let s = term::sym(i.name.clone(), Kind::Int);
                    term::and(vec![term::ge(&s, &term::int(0)), term::lt(&s, &i.size)])
                })
                .collect(),
        )
    }

    fn domain_formula(&self) -> TermRef {
        if self.domain.as_const_bool() == Some(true) {
            self.ranges()
        } else {
            self.domain.clone()
        }
    }
}

/// Flattens `Red^+_X ite(c, Red^+_Y f, Red^+_Z g)` (either branch may also
/// be reduction-free) into a guarded-domain reduction: indices `X∪Y∪Z`,
/// domain `(c ∧ ranges(Y) ∧ Z=0) ∨ (¬c ∧ ranges(Z) ∧ Y=0)`. A zero-size
/// branch then contributes no terms, matching the additive neutral element.
fn flatten_red(red: &RedElem) -> Option<FlatRed> {
    let base_ranges = |indices: &[term::RedIndex]| -> Vec<TermRef> {
        indices
            .iter()
            .map(|i| {
                let s = term::sym(i.name.clone(), Kind::Int);
                term::and(vec![term::ge(&s, &term::int(0)), term::lt(&s, &i.size)])
            })
            .collect()
    };
    if collect_outer_reds(&red.body).is_empty() {
        return Some(FlatRed {
            indices: red.indices.clone(),
            domain: term::boolean(true),
            body: red.body.clone(),
        });
    }
    if red.op != RedOp::Add {
        return None;
    }
    // Expect the body to be exactly one ite atom.
    let Term::Lin(l) = &*red.body else { return None };
    if l.constant != 0 || l.terms.len() != 1 {
        return None;
    }
    let (mono, coeff) = l.terms.iter().next().unwrap();
    if *coeff != 1 || mono.len() != 1 {
        return None;
    }
    let Atom::Ite(cond, then_t, else_t) = &mono[0] else { return None };
    let split = |t: &TermRef| -> Option<(Vec<term::RedIndex>, TermRef)> {
        if collect_outer_reds(t).is_empty() {
            return Some((Vec::new(), t.clone()));
        }
        let Term::Lin(l) = &**t else { return None };
        if l.constant != 0 || l.terms.len() != 1 {
            return None;
        }
        let (mono, coeff) = l.terms.iter().next().unwrap();
        if *coeff != 1 || mono.len() != 1 {
            return None;
        }
        let Atom::Red(r) = &mono[0] else { return None };
        if r.op != RedOp::Add || !collect_outer_reds(&r.body).is_empty() {
            return None;
        }
        Some((r.indices.clone(), r.body.clone()))
    };
    let (t_idx, t_body) = split(then_t)?;
    let (e_idx, e_body) = split(else_t)?;
    let pins = |indices: &[term::RedIndex]| -> Vec<TermRef> {
        indices
            .iter()
            .map(|i| term::eq(&term::sym(i.name.clone(), Kind::Int), &term::int(0)))
            .collect()
    };
    let mut then_arm = vec![cond.clone()];
    then_arm.extend(base_ranges(&t_idx));
    then_arm.extend(pins(&e_idx));
    let mut else_arm = vec![term::not(cond)];
    else_arm.extend(base_ranges(&e_idx));
    else_arm.extend(pins(&t_idx));
    let mut domain = vec![term::or(vec![term::and(then_arm), term::and(else_arm)])];
    domain.extend(base_ranges(&red.indices));
    let mut indices = red.indices.clone();
    indices.extend(t_idx);
    indices.extend(e_idx);
    let body = term::ite(cond, &t_body, &e_body);
    Some(FlatRed { indices, domain: term::and(domain), body })
}

fn base_names(indices: &[term::RedIndex]) -> BTreeSet<String> {
    indices
        .iter()
        .map(|i| i.name.split('.').next().unwrap_or(&i.name).to_string())
        .collect()
}

fn red_kind(canon_red_term: &TermRef) -> Kind {
    if let Term::Lin(l) = &**canon_red_term {
        if let Some((mono, _)) = l.terms.iter().next() {
            if let Some(Atom::Red(r)) = mono.first() {
                return r.body.kind();
            }
        }
    }
    Kind::Int
}

/// Collects outermost reduction elements (does not descend into their
/// bodies).
fn collect_outer_reds(t: &TermRef) -> Vec<RedElem> {
    let mut out = Vec::new();
    collect_outer_reds_inner(t, &mut out);
    out
}

fn collect_outer_reds_inner(t: &TermRef, out: &mut Vec<RedElem>) {
    match &**t {
        Term::Bool(_) => {}
        Term::Lin(l) | Term::Cmp(_, l) => {
            for mono in l.terms.keys() {
                for a in mono {
                    match a {
                        Atom::Red(r) => out.push(r.clone()),
                        Atom::Sym(..) => {}
                        Atom::Div(x, y)
                        | Atom::Mod(x, y)
                        | Atom::Min(x, y)
                        | Atom::Max(x, y) => {
                            collect_outer_reds_inner(x, out);
                            collect_outer_reds_inner(y, out);
                        }
                        Atom::Ite(c, x, y) => {
                            collect_outer_reds_inner(c, out);
                            collect_outer_reds_inner(x, out);
                            collect_outer_reds_inner(y, out);
                        }
                        Atom::Read { indices, .. } => {
                            for i in indices {
                                collect_outer_reds_inner(i, out);
                            }
                        }
                    }
                }
            }
        }
        Term::And(ts) | Term::Or(ts) => {
            for x in ts {
                collect_outer_reds_inner(x, out);
            }
        }
        Term::Not(x) | Term::Exists(_, x) => collect_outer_reds_inner(x, out),
    }
}

/// Renames tensor reads according to an alias map.
fn rename_reads(t: &TermRef, map: &HashMap<String, String>) -> TermRef {
    term::map_atoms(t, &mut |a| {
        if let Atom::Read { tensor, indices } = a {
            if let Some(new) = map.get(tensor) {
                return Some(term::atom(
                    Kind::Int,
                    Atom::Read { tensor: new.clone(), indices: indices.clone() },
                ));
            }
        }
        None
    })
}

/// Parses `(get-value ...)` output keeping raw value s-expressions.
fn parse_value_sexps(raw: &str) -> Result<Vec<(String, Sexp)>> {
    let body: String = raw
        .lines()
        .filter(|l| {
            let t = l.trim();
            t != "sat" && t != "unsat" && t != "unknown"
        })
        .collect::<Vec<_>>()
        .join("\n");
    let sexps = smt::parse_sexps(&body)?;
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
            out.push((smt::render_sexp(&kv[0]), kv[1].clone()));
        }
    }
    Ok(out)
}

fn sexp_to_value(s: &Sexp, kind: Kind) -> Result<Value> {
    match kind {
        Kind::Bool => match s {
            Sexp::Atom(a) if a == "true" => Ok(Value::Bool(true)),
            Sexp::Atom(a) if a == "false" => Ok(Value::Bool(false)),
            _ => Err(Error::ModelParseError(format!("expected boolean: {s:?}"))),
        },
        Kind::Int => Ok(Value::Int(smt::sexp_int(s)?)),
        Kind::Real => Ok(Value::Real(sexp_rational(s)?)),
    }
}

fn sexp_rational(s: &Sexp) -> Result<num::BigRational> {
    use num::BigInt;
    match s {
        Sexp::Atom(a) => {
            let a = a.strip_suffix(".0").unwrap_or(a);
            if let Some((int_part, frac)) = a.split_once('.') {
                // Decimal literal.
                let denom = BigInt::from(10).pow(frac.len() as u32);
                let numer: BigInt = format!("{int_part}{frac}")
                    .parse()
                    .map_err(|_| Error::ModelParseError(format!("bad decimal {a}")))?;
                return Ok(num::BigRational::new(numer, denom));
            }
            let v: BigInt = a
                .parse()
                .map_err(|_| Error::ModelParseError(format!("bad rational {a}")))?;
            Ok(num::BigRational::from(v))
        }
        Sexp::List(items) => match items.as_slice() {
            [Sexp::Atom(op), inner] if op == "-" => Ok(-sexp_rational(inner)?),
            [Sexp::Atom(op), a, b] if op == "/" => {
                Ok(sexp_rational(a)? / sexp_rational(b)?)
            }
            _ => Err(Error::ModelParseError(format!("bad rational {s:?}"))),
        },
    }
}
