// SPDX-License-Identifier: Apache-2.0
//! Shared property-test harness: per-operator random-model equivalence
//! between the symbolic evaluator and the concrete interpreter. Used by the
//! oracle-equivalence integration tests and by the acceptance suite.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::concrete::{self, ConcreteTensor, ReadFn, Value};
use crate::instantiate;
use crate::ir::{
    build_rule, AggAxisDecl, AggMapSpec, BinOp, Decls, ElemKind, MapDecl, MapExpr, RClassDecl,
    RewriteRule, ScalarLit, TensorDecl, TensorExpr,
};
use crate::symeval;
use crate::term::{Kind, RedOp};

fn m(id: &str) -> MapExpr {
    MapExpr::Map(id.into())
}
fn spec(entries: &[(&str, MapExpr)]) -> AggMapSpec {
    entries.iter().map(|(a, e)| (a.to_string(), e.clone())).collect()
}
fn bx(e: TensorExpr) -> Box<TensorExpr> {
    Box::new(e)
}
fn var(id: &str) -> TensorExpr {
    TensorExpr::Var(id.into())
}

struct DeclsBuilder(Decls);

impl DeclsBuilder {
    fn new() -> Self {
        DeclsBuilder(Decls { rclasses: vec![], axes: vec![], maps: vec![], tensors: vec![] })
    }
    fn rclass(mut self, id: &str, singleton: bool) -> Self {
        self.0.rclasses.push(RClassDecl { id: id.into(), singleton });
        self
    }
    fn axis(mut self, id: &str, rc: &str) -> Self {
        self.0.axes.push(AggAxisDecl { id: id.into(), rclass: rc.into() });
        self
    }
    fn map(mut self, id: &str, axes: &[&str]) -> Self {
        self.0.maps.push(MapDecl {
            id: id.into(),
            axes: axes.iter().map(|s| s.to_string()).collect(),
        });
        self
    }
    fn tensor(mut self, id: &str, axes: &[&str], elem: ElemKind) -> Self {
        self.0.tensors.push(TensorDecl {
            id: id.into(),
            axes: axes.iter().map(|s| s.to_string()).collect(),
            elem,
        });
        self
    }
}

/// Wraps one operator expression into a rule (RHS = LHS) so the shared
/// instantiation path applies; only the LHS is exercised by the harness.
fn op_rule(name: &str, decls: DeclsBuilder, expr: TensorExpr) -> RewriteRule {
    build_rule(name, decls.0, expr.clone(), expr, vec![], vec![])
        .unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// One single-operator rule per operator (multi-variant operators like
/// `binary` and `reduce` contribute one rule per variant).
pub fn operator_rules() -> Vec<RewriteRule> {
    let mut out = Vec::new();
    out.push(op_rule(
        "Const",
        DeclsBuilder::new().rclass("c", false).axis("x", "c").map("n", &["x"]),
        TensorExpr::Const { value: ScalarLit::Int(3), shape: spec(&[("x", m("n"))]) },
    ));
    out.push(op_rule(
        "Iota",
        DeclsBuilder::new().rclass("sc", true).axis("s", "sc").map("n", &["s"]),
        TensorExpr::Iota { shape: spec(&[("s", m("n"))]), axis: "s".into() },
    ));
    out.push(op_rule(
        "Expand",
        DeclsBuilder::new()
            .rclass("c1", false)
            .rclass("c2", false)
            .axis("x", "c1")
            .axis("y", "c2")
            .map("n", &["y"])
            .tensor("X", &["x"], ElemKind::Int),
        TensorExpr::Expand { input: bx(var("X")), shape: spec(&[("y", m("n"))]) },
    ));
    for op in [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Min, BinOp::Max] {
        out.push(op_rule(
            &format!("Binary{op:?}"),
            DeclsBuilder::new()
                .rclass("c", false)
                .axis("x", "c")
                .tensor("X", &["x"], ElemKind::Int)
                .tensor("Y", &["x"], ElemKind::Int),
            TensorExpr::Binary { op, lhs: bx(var("X")), rhs: bx(var("Y")) },
        ));
    }
    out.push(op_rule(
        "PadLow",
        DeclsBuilder::new()
            .rclass("c", false)
            .axis("x", "c")
            .map("g", &["x"])
            .tensor("X", &["x"], ElemKind::Int),
        TensorExpr::PadLow {
            input: bx(var("X")),
            value: ScalarLit::Int(9),
            low: spec(&[("x", m("g"))]),
        },
    ));
    out.push(op_rule(
        "Pad",
        DeclsBuilder::new()
            .rclass("c", false)
            .axis("x", "c")
            .map("gl", &["x"])
            .map("gh", &["x"])
            .map("gi", &["x"])
            .tensor("X", &["x"], ElemKind::Int),
        TensorExpr::Pad {
            input: bx(var("X")),
            value: ScalarLit::Int(-1),
            low: spec(&[("x", m("gl"))]),
            high: spec(&[("x", m("gh"))]),
            interior: spec(&[("x", m("gi"))]),
        },
    ));
    out.push(op_rule(
        "Slice",
        DeclsBuilder::new()
            .rclass("c", false)
            .axis("x", "c")
            .map("gs", &["x"])
            .map("ge", &["x"])
            .map("qp", &["x"])
            .tensor("X", &["x"], ElemKind::Int),
        TensorExpr::Slice {
            input: bx(var("X")),
            start: spec(&[("x", m("gs"))]),
            end: spec(&[("x", m("ge"))]),
            stride: spec(&[("x", m("qp"))]),
        },
    ));
    out.push(op_rule(
        "DySlice",
        DeclsBuilder::new()
            .rclass("c", false)
            .axis("x", "c")
            .map("gs", &["x"])
            .map("nl", &["x"])
            .tensor("X", &["x"], ElemKind::Int),
        TensorExpr::DySlice {
            input: bx(var("X")),
            start: spec(&[("x", m("gs"))]),
            size: spec(&[("x", m("nl"))]),
        },
    ));
    out.push(op_rule(
        "DyUpSlice",
        DeclsBuilder::new()
            .rclass("c", false)
            .axis("x", "c")
            .map("gs", &["x"])
            .tensor("X", &["x"], ElemKind::Int)
            .tensor("U", &["x"], ElemKind::Int),
        TensorExpr::DyUpSlice {
            input: bx(var("X")),
            update: bx(var("U")),
            start: spec(&[("x", m("gs"))]),
        },
    ));
    for op in [RedOp::Add, RedOp::Mul, RedOp::Min, RedOp::Max] {
        out.push(op_rule(
            &format!("Reduce{op:?}"),
            DeclsBuilder::new()
                .rclass("c1", false)
                .rclass("c2", false)
                .axis("x", "c1")
                .axis("r", "c2")
                .tensor("X", &["x", "r"], ElemKind::Int),
            TensorExpr::Reduce {
                op,
                input: bx(var("X")),
                axes: vec!["r".into()],
                indices: BTreeMap::new(),
            },
        ));
    }
    let swap: BTreeMap<String, String> =
        [("x1".to_string(), "x2".to_string()), ("x2".to_string(), "x1".to_string())].into();
    out.push(op_rule(
        "Relabel",
        DeclsBuilder::new()
            .rclass("c", false)
            .axis("x1", "c")
            .axis("x2", "c")
            .tensor("X", &["x1", "x2"], ElemKind::Int),
        TensorExpr::Relabel { input: bx(var("X")), mapping: swap },
    ));
    out.push(op_rule(
        "Concat",
        DeclsBuilder::new()
            .rclass("c", false)
            .rclass("sc", true)
            .axis("x", "c")
            .axis("s", "sc")
            .tensor("A", &["x", "s"], ElemKind::Int)
            .tensor("B", &["x", "s"], ElemKind::Int),
        TensorExpr::Concat { lhs: bx(var("A")), rhs: bx(var("B")), axis: "s".into() },
    ));
    out.push(op_rule(
        "Dot",
        DeclsBuilder::new()
            .rclass("cb", false)
            .rclass("cc", false)
            .rclass("cx", false)
            .rclass("cy", false)
            .axis("b", "cb")
            .axis("k", "cc")
            .axis("x", "cx")
            .axis("y", "cy")
            .tensor("X", &["b", "k", "x"], ElemKind::Int)
            .tensor("Y", &["b", "k", "y"], ElemKind::Int),
        TensorExpr::Dot {
            lhs: bx(var("X")),
            rhs: bx(var("Y")),
            contract: vec!["k".into()],
            batch: vec!["b".into()],
            indices: BTreeMap::new(),
        },
    ));
    out.push(op_rule(
        "Conv",
        DeclsBuilder::new()
            .rclass("cb", false)
            .rclass("cf", false)
            .rclass("co", false)
            .rclass("cs", false)
            .axis("b", "cb")
            .axis("f", "cf")
            .axis("o", "co")
            .axis("sp", "cs")
            .map("gl", &["sp"])
            .map("gh", &["sp"])
            .map("qi", &["sp"])
            .map("qw", &["sp"])
            .map("qp", &["sp"])
            .tensor("T", &["b", "f", "sp"], ElemKind::Int)
            .tensor("W", &["f", "o", "sp"], ElemKind::Int),
        TensorExpr::Conv {
            input: bx(var("T")),
            weights: bx(var("W")),
            batch: vec!["b".into()],
            feature: vec!["f".into()],
            out_feature: vec!["o".into()],
            low: spec(&[("sp", m("gl"))]),
            high: spec(&[("sp", m("gh"))]),
            input_dilation: spec(&[("sp", m("qi"))]),
            window_dilation: spec(&[("sp", m("qw"))]),
            strides: spec(&[("sp", m("qp"))]),
            indices: BTreeMap::new(),
        },
    ));
    out.push(op_rule(
        "Reverse",
        DeclsBuilder::new()
            .rclass("c", false)
            .axis("x", "c")
            .tensor("X", &["x"], ElemKind::Int),
        TensorExpr::Reverse { input: bx(var("X")), axes: vec!["x".into()] },
    ));
    out.push(op_rule(
        "Select",
        DeclsBuilder::new()
            .rclass("c", false)
            .axis("x", "c")
            .tensor("P", &["x"], ElemKind::Bool)
            .tensor("X", &["x"], ElemKind::Int)
            .tensor("Y", &["x"], ElemKind::Int),
        TensorExpr::Select { pred: bx(var("P")), on_true: bx(var("X")), on_false: bx(var("Y")) },
    ));
    out.push(op_rule(
        "Clamp",
        DeclsBuilder::new()
            .rclass("c", false)
            .axis("x", "c")
            .tensor("LO", &["x"], ElemKind::Int)
            .tensor("X", &["x"], ElemKind::Int)
            .tensor("HI", &["x"], ElemKind::Int),
        TensorExpr::Clamp { min: bx(var("LO")), input: bx(var("X")), max: bx(var("HI")) },
    ));
    out
}

/// Sampling ranges by symbol name: tensor shapes (`<t>.S.<axis>.<task>`)
/// are in [0,5]; maps named `q*` are strictly positive (strides/dilations),
/// maps named `n*` nonnegative (sizes); anything else may be negative so
/// rejection paths get exercised.
fn sample_sym(name: &str, rng: &mut ChaCha8Rng) -> i64 {
    if name.contains(".S.") {
        rng.gen_range(0..=5)
    } else if name.starts_with('q') {
        rng.gen_range(1..=2)
    } else if name.starts_with('n') {
        rng.gen_range(0..=5)
    } else {
        rng.gen_range(-2..=2)
    }
}

fn sample_tensors(
    inst: &instantiate::InstRule,
    syms: &BTreeMap<String, i64>,
    rng: &mut ChaCha8Rng,
) -> BTreeMap<String, ConcreteTensor> {
    let mut out = BTreeMap::new();
    for (name, sig) in &inst.env {
        let sizes: BTreeMap<String, i64> = sig
            .axes
            .iter()
            .map(|a| (a.clone(), syms[&instantiate::shape_sym(name, a, &inst.inst.task)]))
            .collect();
        let n: usize = sizes.values().map(|s| *s as usize).product();
        let data: Vec<Value> = (0..n)
            .map(|_| match sig.elem {
                Kind::Bool => Value::Bool(rng.gen_bool(0.5)),
                _ => Value::Int(rng.gen_range(-4..=4)),
            })
            .collect();
        out.insert(
            name.clone(),
            ConcreteTensor { axes: sizes.keys().cloned().collect(), sizes, data },
        );
    }
    out
}

/// Runs random trials of one operator rule until at least `want` models are
/// accepted by the interpreter, checking on every trial that the symbolic
/// validity formula agrees with the interpreter and, when accepted, that
/// shapes and all element values agree. Returns a description of the first
/// disagreement, if any.
pub fn check_operator(rule: &RewriteRule, want: usize) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE ^ rule.name.len() as u64);
    let classes: Vec<(String, bool)> =
        rule.decls.rclasses.iter().map(|c| (c.id.clone(), c.singleton)).collect();
    let mut accepted = 0usize;
    let mut trials = 0usize;
    while accepted < want {
        trials += 1;
        if trials >= 50_000 {
            return Err(format!(
                "{}: only {accepted} accepted models in {trials} trials",
                rule.name
            ));
        }
        let ranks: BTreeMap<String, usize> = classes
            .iter()
            .map(|(c, s)| (c.clone(), if *s { 1 } else { rng.gen_range(1..=3) }))
            .collect();
        let inst = instantiate::instantiate(rule, &ranks, "oq")
            .map_err(|e| format!("{}: instantiate: {e}", rule.name))?;
        let (sym, validity) = symeval::sym_eval(&inst.lhs, &inst.env)
            .map_err(|e| format!("{}: sym_eval: {e}", rule.name))?;

        // One model: all free symbols of the instantiation.
        let (shapes, others) = concrete::rule_symbols(&inst);
        let mut syms: BTreeMap<String, i64> = BTreeMap::new();
        for s in shapes.iter().chain(others.iter()) {
            syms.insert(s.clone(), sample_sym(s, &mut rng));
        }
        let tensors = sample_tensors(&inst, &syms, &mut rng);
        let read: ReadFn = &|t: &str, idx: &[i64]| {
            let tensor = &tensors[t];
            let acc: BTreeMap<String, i64> =
                tensor.axes.iter().cloned().zip(idx.iter().copied()).collect();
            tensor.get(&acc).cloned()
        };

        // Validity formula vs interpreter acceptance.
        let sym_valid = validity.iter().all(|v| {
            matches!(concrete::eval_term(v, &syms, read), Ok(Value::Bool(true)))
        });
        let conc = concrete::eval_concrete(&inst.lhs, &tensors, &syms);
        let conc = match (conc, sym_valid) {
            (Ok(c), true) => c,
            (Err(_), false) => continue,
            (Ok(_), false) => {
                return Err(format!(
                    "{}: interpreter accepted but validity formula is false ({syms:?})",
                    rule.name
                ))
            }
            (Err(e), true) => {
                return Err(format!(
                    "{}: interpreter rejected ({e}) but validity formula holds ({syms:?})",
                    rule.name
                ))
            }
        };

        // Shape agreement.
        if sym.axes != conc.axes {
            return Err(format!("{}: axes disagree under {syms:?}", rule.name));
        }
        for a in &sym.axes {
            let s = concrete::eval_term(&sym.shape[a], &syms, read)
                .and_then(|v| v.as_int())
                .map_err(|e| format!("{}: shape eval on {a}: {e}", rule.name))?;
            if s != conc.sizes[a] {
                return Err(format!(
                    "{}: size of {a}: symbolic {s} vs concrete {} ({syms:?})",
                    rule.name, conc.sizes[a]
                ));
            }
        }

        // Element-wise value agreement over the whole output box.
        for acc in conc.accesses() {
            let sym_acc: symeval::Access =
                acc.iter().map(|(a, v)| (a.clone(), crate::term::int(*v))).collect();
            let v = concrete::eval_term(&(sym.value)(&sym_acc), &syms, read)
                .map_err(|e| format!("{}: value eval at {acc:?}: {e}", rule.name))?;
            let expect = conc.get(&acc).unwrap();
            if !Value::eq_v(&v, expect).unwrap_or(false) {
                return Err(format!(
                    "{}: value mismatch at {acc:?}: symbolic {v:?} vs concrete {expect:?} ({syms:?})",
                    rule.name
                ));
            }
        }
        accepted += 1;
    }
    Ok(())
}
