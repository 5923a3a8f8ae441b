// SPDX-License-Identifier: Apache-2.0
//! Bound inference: a sufficient verification rank per rank class.
//!
//! The rule is *probe-instantiated* at rank 1, symbolically evaluated, and
//! the resulting scalar term is inspected: the bound for a rank class `c` is
//! `max(1, sum over tensors of C(n, 2) + m)` where `n` counts distinct
//! tensor accesses and `m` counts distinct non-trivial guard conditions
//! attributed to `c`. The scalar decomposition is rank-independent, so
//! rank-1 probing realizes the counts exactly.
//!
//! Equality preconditions are substituted into the probed terms first, so
//! accesses that coincide under the preconditions are counted once (e.g. a
//! dynamic-slice start pinned to a static start symbol).

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::instantiate::{self, AxisId};
use crate::ir::{RClassId, RewriteRule, TensorId};
use crate::symeval::{self, Access};
use crate::term::{self, Atom, CmpShape, Kind, Term, TermRef};
use crate::Result;

/// Task tag used for the probe instantiation.
const PROBE_TASK: &str = "p";

/// Per-rank-class bound breakdown.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct RClassBound {
    pub rclass: RClassId,
    pub bound: usize,
    /// Distinct-access count per contributing tensor.
    pub access_counts: BTreeMap<TensorId, usize>,
    pub condition_count: usize,
    pub tensors: Vec<TensorId>,
    /// Singleton classes are pinned to rank 1 and need no induction.
    pub singleton: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct BoundReport {
    pub rule: String,
    pub rclasses: Vec<RClassBound>,
}

impl BoundReport {
    pub fn bound_of(&self, rclass: &str) -> Option<usize> {
        self.rclasses.iter().find(|c| c.rclass == rclass).map(|c| c.bound)
    }

    pub fn task_count(&self) -> usize {
        self.rclasses.iter().map(|c| c.bound).product::<usize>().max(1)
    }
}

/// Tensors whose declared shape contains an aggregated axis of `rclass`.
pub fn tensors_with_rclass(rule: &RewriteRule, rclass: &str) -> BTreeSet<TensorId> {
    rule.decls
        .tensors
        .iter()
        .filter(|t| {
            t.axes
                .iter()
                .any(|x| rule.rclass_of(x) == Some(rclass))
        })
        .map(|t| t.id.clone())
        .collect()
}

/// Result of probing: distinct read atoms and guard conditions of the
/// symbolically evaluated rule (both sides), after precondition substitution
/// and alpha-canonicalization.
pub struct ProbeCounts {
    pub reads: BTreeSet<Atom>,
    pub guards: BTreeSet<TermRef>,
}

/// Probe-instantiates at the given uniform rank and collects reads/guards.
pub fn probe_counts(rule: &RewriteRule, rank: usize) -> Result<ProbeCounts> {
    let ranks: BTreeMap<RClassId, usize> = rule
        .decls
        .rclasses
        .iter()
        .map(|c| (c.id.clone(), rank))
        .collect();
    let inst = instantiate::instantiate(rule, &ranks, PROBE_TASK)?;
    let (lhs, lhs_validity) = symeval::sym_eval(&inst.lhs, &inst.env)?;
    let (rhs, _) = symeval::sym_eval(&inst.rhs, &inst.env)?;
    let _ = lhs_validity;

    let acc: Access = lhs
        .axes
        .iter()
        .map(|a| (a.clone(), term::sym(access_sym(a, PROBE_TASK), Kind::Int)))
        .collect();
    let racc: Access = rhs
        .axes
        .iter()
        .map(|a| (a.clone(), term::sym(access_sym(a, PROBE_TASK), Kind::Int)))
        .collect();
    let mut lterm = symeval::normalize_reductions(&(lhs.value)(&acc));
    let mut rterm = symeval::normalize_reductions(&(rhs.value)(&racc));

    // Substitute equality preconditions so equivalent accesses coincide.
    let subst = equality_substitution(&inst.precond);
    if !subst.is_empty() {
        lterm = term::subst_syms(&lterm, &subst);
        rterm = term::subst_syms(&rterm, &subst);
    }
    let lterm = term::alpha_canon(&lterm);
    let rterm = term::alpha_canon(&rterm);

    let mut reads = BTreeSet::new();
    let mut guards = BTreeSet::new();
    for t in [&lterm, &rterm] {
        term::visit_atoms(t, &mut |a| {
            if let Atom::Read { .. } = a {
                reads.insert(a.clone());
            }
        });
        term::visit_guards(t, &mut |c| {
            if c.as_const_bool().is_none() {
                guards.insert(c.clone());
            }
        });
    }
    Ok(ProbeCounts { reads, guards })
}

/// Access symbol for named axis `a` in task `t`.
pub fn access_sym(axis: &str, task: &str) -> String {
    format!("A.{axis}.{task}")
}

/// Derives a symbol substitution from the equality atoms of an instantiated
/// precondition: an atom `s - e = 0` with `s` a bare symbol of coefficient
/// ±1 yields `s -> e`. Substitutions are applied transitively; each symbol
/// is eliminated at most once.
pub fn equality_substitution(precond: &TermRef) -> HashMap<String, TermRef> {
    let mut equations: Vec<TermRef> = Vec::new();
    collect_conjuncts(precond, &mut equations);
    let mut subst: HashMap<String, TermRef> = HashMap::new();
    let mut eliminated: BTreeSet<String> = BTreeSet::new();
    let mut progress = true;
    while progress {
        progress = false;
        for eq in &equations {
            let eq = if subst.is_empty() { eq.clone() } else { term::subst_syms(eq, &subst) };
            let Term::Cmp(CmpShape::Eq0, lin) = &*eq else { continue };
            // Find a monomial that is a single symbol with coefficient ±1.
            let candidate = lin.terms.iter().find_map(|(mono, coeff)| {
                if mono.len() == 1 && (*coeff == 1 || *coeff == -1) {
                    if let Atom::Sym(n, Kind::Int) = &mono[0] {
                        if !eliminated.contains(n) {
                            return Some((n.clone(), *coeff));
                        }
                    }
                }
                None
            });
            let Some((name, coeff)) = candidate else { continue };
            // s = -(lin - coeff*s)/coeff
            let mut rest = lin.clone();
            rest.terms.remove(&vec![Atom::Sym(name.clone(), Kind::Int)]);
            let rhs = rest.scale(-coeff); // coeff is ±1, so -1/coeff == -coeff
            let rhs_term: TermRef = std::sync::Arc::new(Term::Lin(rhs));
            // Re-route existing substitutions through the new one.
            for v in subst.values_mut() {
                let mut single = HashMap::new();
                single.insert(name.clone(), rhs_term.clone());
                *v = term::subst_syms(v, &single);
            }
            subst.insert(name.clone(), rhs_term);
            eliminated.insert(name);
            progress = true;
        }
    }
    subst
}

fn collect_conjuncts(t: &TermRef, out: &mut Vec<TermRef>) {
    match &**t {
        Term::And(ts) => {
            for x in ts {
                collect_conjuncts(x, out);
            }
        }
        _ => out.push(t.clone()),
    }
}

/// Named-axis component of a generated symbol, e.g. `l1.x.0.p` -> `x.0`.
fn axis_of_symbol(name: &str) -> Option<AxisId> {
    let parts: Vec<&str> = name.split('.').collect();
    if parts.len() < 4 {
        return None;
    }
    let pos = parts[parts.len() - 2];
    if pos.parse::<usize>().is_err() {
        return None;
    }
    Some(format!("{}.{pos}", parts[parts.len() - 3]))
}

fn agg_of_axis(axis: &str) -> &str {
    axis.rsplit_once('.').map(|(agg, _)| agg).unwrap_or(axis)
}

/// Does the term mention any symbol attached to an axis of `rclass`?
fn mentions_rclass(rule: &RewriteRule, t: &TermRef) -> BTreeSet<RClassId> {
    let mut syms = BTreeMap::new();
    term::collect_syms(t, &mut syms);
    let mut out = BTreeSet::new();
    for name in syms.keys() {
        if let Some(axis) = axis_of_symbol(name) {
            if let Some(rc) = rule.rclass_of(agg_of_axis(&axis)) {
                out.insert(rc.to_string());
            }
        }
    }
    out
}

/// Number of syntactically distinct accesses to tensor `t` in the probed
/// rule (both sides, after precondition substitution).
pub fn num_tensor_access(rule: &RewriteRule, tensor: &str) -> Result<usize> {
    let probe = probe_counts(rule, 1)?;
    Ok(count_accesses(&probe, tensor))
}

fn count_accesses(probe: &ProbeCounts, tensor: &str) -> usize {
    probe
        .reads
        .iter()
        .filter(|a| matches!(a, Atom::Read { tensor: t, .. } if t == tensor))
        .count()
}

/// Number of distinct non-trivial guard conditions attributed to `rclass`.
pub fn num_conds(rule: &RewriteRule, rclass: &str) -> Result<usize> {
    let probe = probe_counts(rule, 1)?;
    Ok(count_conds(rule, &probe, rclass))
}

fn count_conds(rule: &RewriteRule, probe: &ProbeCounts, rclass: &str) -> usize {
    probe
        .guards
        .iter()
        .filter(|g| mentions_rclass(rule, g).contains(rclass))
        .count()
}

/// Sufficient rank for one rank class.
pub fn infer_bound(rule: &RewriteRule, rclass: &str) -> Result<usize> {
    Ok(bound_report(rule)?
        .bound_of(rclass)
        .unwrap_or(1))
}

/// Full per-rank-class bound report for a rule.
pub fn bound_report(rule: &RewriteRule) -> Result<BoundReport> {
    let probe = probe_counts(rule, 1)?;
    let mut rclasses = Vec::new();
    for c in &rule.decls.rclasses {
        let tensors: Vec<TensorId> =
            tensors_with_rclass(rule, &c.id).into_iter().collect();
        let mut access_counts = BTreeMap::new();
        let mut sum = 0usize;
        for t in &tensors {
            let n = count_accesses(&probe, t);
            access_counts.insert(t.clone(), n);
            sum += n * n.saturating_sub(1) / 2; // C(n, 2)
        }
        let condition_count = count_conds(rule, &probe, &c.id);
        let bound = if c.singleton {
            1
        } else {
            (sum + condition_count).max(1)
        };
        rclasses.push(RClassBound {
            rclass: c.id.clone(),
            bound,
            access_counts,
            condition_count,
            tensors,
            singleton: c.singleton,
        });
    }
    Ok(BoundReport { rule: rule.name.clone(), rclasses })
}

/// Cartesian product `{1..k_1} x ... x {1..k_p}` of per-class ranks.
/// Singleton classes are pinned to rank 1.
pub fn task_set(report: &BoundReport) -> Vec<BTreeMap<RClassId, usize>> {
    let mut tasks: Vec<BTreeMap<RClassId, usize>> = vec![BTreeMap::new()];
    for c in &report.rclasses {
        let upper = if c.singleton { 1 } else { c.bound };
        let mut next = Vec::with_capacity(tasks.len() * upper);
        for t in &tasks {
            for r in 1..=upper {
                let mut m = t.clone();
                m.insert(c.rclass.clone(), r);
                next.push(m);
            }
        }
        tasks = next;
    }
    tasks
}
