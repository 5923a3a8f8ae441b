// SPDX-License-Identifier: Apache-2.0
//! JSON-serializable report structures for the CLI commands.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::json;
use trv_core::analysis::BoundReport;
use trv_core::concrete::{ConcreteTensor, Mismatch, Value};
use trv_core::verifier::{Counterexample, TaskStatus, Verdict, VerdictKind};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Report {
    pub rules: Vec<RuleReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RuleReport {
    pub name: String,
    /// "verified" | "invalid" | "unknown" | "unsupported"
    pub verdict: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub bounds: BoundReport,
    pub tasks: Vec<TaskReport>,
    pub counterexamples: Vec<serde_json::Value>,
    pub non_conclusive: bool,
    pub millis: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_check: Option<OracleCheck>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TaskReport {
    pub ranks: BTreeMap<String, usize>,
    /// "proved" | "refuted" | "unknown" | "structural"
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub obligations: Vec<ObligationReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ObligationReport {
    pub name: String,
    pub status: String,
    pub millis: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct OracleCheck {
    pub trials_accepted: usize,
    pub rank_tuples_with_mismatch: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BoundsReport {
    pub rules: Vec<BoundReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FuzzReport {
    pub rules: Vec<FuzzRuleReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FuzzRuleReport {
    pub rule: String,
    pub ranks: BTreeMap<String, usize>,
    pub accepted: usize,
    pub rejected: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mismatch: Option<serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RuleReport {
    pub fn from_verdict(v: &Verdict) -> Self {
        let verdict = match v.kind {
            VerdictKind::Verified => "verified",
            VerdictKind::Invalid => "invalid",
            VerdictKind::Unknown => "unknown",
            VerdictKind::Unsupported => "unsupported",
        };
        RuleReport {
            name: v.rule.clone(),
            verdict: verdict.to_string(),
            reason: v.reason.clone(),
            bounds: v.bounds.clone(),
            tasks: v
                .tasks
                .iter()
                .map(|t| {
                    let (status, reason) = match &t.status {
                        TaskStatus::Proved => ("proved", None),
                        TaskStatus::Refuted(ce) => ("refuted", Some(ce.detail.clone())),
                        TaskStatus::Unknown(r) => ("unknown", Some(r.clone())),
                        TaskStatus::Structural(r) => ("structural", Some(r.clone())),
                    };
                    TaskReport {
                        ranks: t.ranks.clone(),
                        status: status.to_string(),
                        reason,
                        obligations: t
                            .obligations
                            .iter()
                            .map(|o| ObligationReport {
                                name: o.name.clone(),
                                status: format!("{:?}", o.status).to_lowercase(),
                                millis: o.millis as u64,
                            })
                            .collect(),
                    }
                })
                .collect(),
            counterexamples: v.counterexamples.iter().map(counterexample_json).collect(),
            non_conclusive: v.non_conclusive,
            millis: v.millis as u64,
            oracle_check: None,
        }
    }
}

pub fn value_json(v: &Value) -> serde_json::Value {
    match v {
        Value::Int(i) => json!(i),
        Value::Bool(b) => json!(b),
        Value::Real(r) => json!(r.to_string()),
    }
}

pub fn tensor_json(t: &ConcreteTensor) -> serde_json::Value {
    json!({
        "sizes": t.sizes,
        "data": t.data.iter().map(value_json).collect::<Vec<_>>(),
    })
}

pub fn counterexample_json(ce: &Counterexample) -> serde_json::Value {
    json!({
        "ranks": ce.ranks,
        "obligation": ce.obligation,
        "syms": ce.syms,
        "tensors": ce.tensors.iter().map(|(k, v)| (k.clone(), tensor_json(v)))
            .collect::<BTreeMap<_, _>>(),
        "witness": ce.witness,
        "lhs_value": ce.lhs_value,
        "rhs_value": ce.rhs_value,
        "oracle_confirmed": ce.oracle_confirmed,
        "detail": ce.detail,
    })
}

pub fn mismatch_json(m: &Mismatch) -> serde_json::Value {
    json!({
        "detail": m.detail,
        "syms": m.sample.syms,
        "tensors": m.sample.tensors.iter().map(|(k, v)| (k.clone(), tensor_json(v)))
            .collect::<BTreeMap<_, _>>(),
    })
}

/// Human-readable rendering of a verification report.
pub fn render_text(r: &Report) -> String {
    let mut out = String::new();
    for rule in &r.rules {
        out.push_str(&format!(
            "{}: {}{} ({} tasks, {} ms)\n",
            rule.name,
            rule.verdict,
            rule.reason.as_deref().map(|s| format!(" [{s}]")).unwrap_or_default(),
            rule.tasks.len(),
            rule.millis
        ));
        for t in &rule.tasks {
            let ranks: Vec<String> =
                t.ranks.iter().map(|(c, k)| format!("{c}={k}")).collect();
            out.push_str(&format!(
                "  task {{{}}}: {}{}\n",
                ranks.join(", "),
                t.status,
                t.reason.as_deref().map(|s| format!(" [{s}]")).unwrap_or_default()
            ));
        }
        for ce in &rule.counterexamples {
            out.push_str(&format!("  counterexample: {ce}\n"));
        }
        if let Some(oc) = &rule.oracle_check {
            out.push_str(&format!(
                "  oracle-check: {} accepted trials, {} mismatching rank tuples\n",
                oc.trials_accepted, oc.rank_tuples_with_mismatch
            ));
        }
    }
    out
}

pub fn render_bounds_text(r: &BoundsReport) -> String {
    let mut out = String::new();
    for rule in &r.rules {
        out.push_str(&format!("{}:\n", rule.rule));
        for c in &rule.rclasses {
            let acc: Vec<String> =
                c.access_counts.iter().map(|(t, n)| format!("{t}:{n}")).collect();
            out.push_str(&format!(
                "  {}: bound {}{} (accesses {}; conditions {})\n",
                c.rclass,
                c.bound,
                if c.singleton { " (singleton)" } else { "" },
                acc.join(", "),
                c.condition_count
            ));
        }
    }
    out
}

pub fn render_fuzz_text(r: &FuzzReport) -> String {
    let mut out = String::new();
    for f in &r.rules {
        let ranks: Vec<String> = f.ranks.iter().map(|(c, k)| format!("{c}={k}")).collect();
        let status = if let Some(e) = &f.error {
            format!("error [{e}]")
        } else if f.mismatch.is_some() {
            "MISMATCH".to_string()
        } else {
            "ok".to_string()
        };
        out.push_str(&format!(
            "{} {{{}}}: {} ({} accepted, {} rejected)\n",
            f.rule,
            ranks.join(", "),
            status,
            f.accepted,
            f.rejected
        ));
        if let Some(m) = &f.mismatch {
            out.push_str(&format!("  mismatch: {m}\n"));
        }
    }
    out
}
