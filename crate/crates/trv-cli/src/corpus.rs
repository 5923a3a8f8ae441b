// SPDX-License-Identifier: Apache-2.0
//! Built-in rule corpus: worked examples and representative simplifier-style
//! rewrites, plus intentionally broken mutants. The canonical artifacts are
//! the JSON files under `corpus/`; `builtin_rules` is the single source the
//! generator (`examples/gen_corpus.rs`) serializes them from, and
//! `corpus_list` reads the expectations back for the test suites.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use trv_core::ir::{
    build_rule, AggAxisDecl, AggMapSpec, BinOp, Decls, ElemKind, Formula, MapDecl, MapExpr,
    RClassDecl, RewriteRule, ScalarLit, SiHint, TensorDecl, TensorExpr,
};
use trv_core::term::{CmpOp, RedOp};

/// One corpus entry: the rule plus its expected verification outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub name: String,
    pub file: String,
    /// "verified" | "invalid" | "unknown"
    pub expected_verdict: String,
    /// Expected inferred bound per rank class.
    pub expected_bounds: BTreeMap<String, usize>,
    pub note: String,
}

/// Reads `expected.json` from a corpus directory.
pub fn corpus_list(dir: &Path) -> Result<Vec<CorpusEntry>> {
    let text = std::fs::read_to_string(dir.join("expected.json"))
        .with_context(|| format!("reading {}/expected.json", dir.display()))?;
    Ok(serde_json::from_str(&text)?)
}

// ---- small construction helpers ---------------------------------------

fn m(id: &str) -> MapExpr {
    MapExpr::Map(id.into())
}
fn lit(v: i64) -> MapExpr {
    MapExpr::Lit(v)
}
fn shp(t: &str) -> MapExpr {
    MapExpr::Shape(t.into())
}
fn idx(n: &str) -> MapExpr {
    MapExpr::Idx(n.into())
}
fn add(a: MapExpr, b: MapExpr) -> MapExpr {
    MapExpr::Add(Box::new(a), Box::new(b))
}
fn sub(a: MapExpr, b: MapExpr) -> MapExpr {
    MapExpr::Sub(Box::new(a), Box::new(b))
}
fn mul(a: MapExpr, b: MapExpr) -> MapExpr {
    MapExpr::Mul(Box::new(a), Box::new(b))
}
fn fdiv(a: MapExpr, b: MapExpr) -> MapExpr {
    MapExpr::Div(Box::new(a), Box::new(b))
}
fn cdiv(a: MapExpr, b: MapExpr) -> MapExpr {
    MapExpr::CeilDiv(Box::new(a), Box::new(b))
}

fn spec(entries: &[(&str, MapExpr)]) -> AggMapSpec {
    entries.iter().map(|(a, e)| (a.to_string(), e.clone())).collect()
}

fn atom(cmp: CmpOp, lhs: MapExpr, rhs: MapExpr, axes: &[&str]) -> Formula {
    Formula::Atom { cmp, lhs, rhs, axes: axes.iter().map(|s| s.to_string()).collect() }
}

fn rclass(id: &str) -> RClassDecl {
    RClassDecl { id: id.into(), singleton: false }
}
fn singleton(id: &str) -> RClassDecl {
    RClassDecl { id: id.into(), singleton: true }
}
fn axis(id: &str, rc: &str) -> AggAxisDecl {
    AggAxisDecl { id: id.into(), rclass: rc.into() }
}
fn mapd(id: &str, axes: &[&str]) -> MapDecl {
    MapDecl { id: id.into(), axes: axes.iter().map(|s| s.to_string()).collect() }
}
fn tensor(id: &str, axes: &[&str]) -> TensorDecl {
    TensorDecl {
        id: id.into(),
        axes: axes.iter().map(|s| s.to_string()).collect(),
        elem: ElemKind::Int,
    }
}
fn tensor_of(id: &str, axes: &[&str], elem: ElemKind) -> TensorDecl {
    TensorDecl { id: id.into(), axes: axes.iter().map(|s| s.to_string()).collect(), elem }
}

fn var(id: &str) -> TensorExpr {
    TensorExpr::Var(id.into())
}
fn bx(e: TensorExpr) -> Box<TensorExpr> {
    Box::new(e)
}

// ---- rules -------------------------------------------------------------

/// pad-low(pad-low(Y, 0, L1), 0, L2) =>[L1>=0, L2>=0] pad-low(Y, 0, L1+L2)
fn padlow_combine(name: &str, rhs_low: MapExpr, with_precond: bool) -> Result<RewriteRule> {
    let decls = Decls {
        rclasses: vec![rclass("c")],
        axes: vec![axis("x", "c")],
        maps: vec![mapd("l1", &["x"]), mapd("l2", &["x"])],
        tensors: vec![tensor("Y", &["x"])],
    };
    let lhs = TensorExpr::PadLow {
        input: bx(TensorExpr::PadLow {
            input: bx(var("Y")),
            value: ScalarLit::Int(0),
            low: spec(&[("x", m("l1"))]),
        }),
        value: ScalarLit::Int(0),
        low: spec(&[("x", m("l2"))]),
    };
    let rhs = TensorExpr::PadLow {
        input: bx(var("Y")),
        value: ScalarLit::Int(0),
        low: spec(&[("x", rhs_low)]),
    };
    let pres = if with_precond {
        vec![
            atom(CmpOp::Ge, m("l1"), lit(0), &["x"]),
            atom(CmpOp::Ge, m("l2"), lit(0), &["x"]),
        ]
    } else {
        vec![]
    };
    Ok(build_rule(name, decls, lhs, rhs, pres, vec![])?)
}

/// dy-slice(Y, B, L) =>[B'=B, P=1, E-B'=L] slice(Y, B', E, P)
fn dyslice_to_slice(name: &str, with_start_precond: bool) -> Result<RewriteRule> {
    let decls = Decls {
        rclasses: vec![rclass("c")],
        axes: vec![axis("x", "c")],
        maps: vec![
            mapd("b", &["x"]),
            mapd("bs", &["x"]),
            mapd("e", &["x"]),
            mapd("len", &["x"]),
            mapd("p", &["x"]),
        ],
        tensors: vec![tensor("Y", &["x"])],
    };
    let lhs = TensorExpr::DySlice {
        input: bx(var("Y")),
        start: spec(&[("x", m("b"))]),
        size: spec(&[("x", m("len"))]),
    };
    let rhs = TensorExpr::Slice {
        input: bx(var("Y")),
        start: spec(&[("x", m("bs"))]),
        end: spec(&[("x", m("e"))]),
        stride: spec(&[("x", m("p"))]),
    };
    let mut pres = vec![
        atom(CmpOp::Eq, m("p"), lit(1), &["x"]),
        atom(CmpOp::Eq, sub(m("e"), m("bs")), m("len"), &["x"]),
    ];
    if with_start_precond {
        pres.insert(0, atom(CmpOp::Eq, m("bs"), m("b"), &["x"]));
    }
    Ok(build_rule(name, decls, lhs, rhs, pres, vec![])?)
}

/// dyup-slice(slice(Y, 0, (S+1) div 2, 1), zeros, 1)
///   => dyup-slice(slice(Y, 0, S, 2), zeros, 1)
/// Valid at rank 1, invalid at rank 2 and above.
fn slice_dyup() -> Result<RewriteRule> {
    let decls = Decls {
        rclasses: vec![rclass("c")],
        axes: vec![axis("x", "c")],
        maps: vec![],
        tensors: vec![tensor("Y", &["x"])],
    };
    let upd_shape = sub(cdiv(shp("Y"), lit(2)), lit(1));
    let side = |end: MapExpr, stride: i64| TensorExpr::DyUpSlice {
        input: bx(TensorExpr::Slice {
            input: bx(var("Y")),
            start: spec(&[("x", lit(0))]),
            end: spec(&[("x", end)]),
            stride: spec(&[("x", lit(stride))]),
        }),
        update: bx(TensorExpr::Const {
            value: ScalarLit::Int(0),
            shape: spec(&[("x", upd_shape.clone())]),
        }),
        start: spec(&[("x", lit(1))]),
    };
    let lhs = side(fdiv(add(shp("Y"), lit(1)), lit(2)), 1);
    let rhs = side(shp("Y"), 2);
    Ok(build_rule("SliceDyUpSlice", decls, lhs, rhs, vec![], vec![])?)
}

/// relabel(T + relabel(T, swap), swap) => T + relabel(T, swap)
fn transpose_sum() -> Result<RewriteRule> {
    let decls = Decls {
        rclasses: vec![rclass("c")],
        axes: vec![axis("x1", "c"), axis("x2", "c")],
        maps: vec![],
        tensors: vec![tensor("T", &["x1", "x2"])],
    };
    let swap: BTreeMap<String, String> =
        [("x1".to_string(), "x2".to_string()), ("x2".to_string(), "x1".to_string())].into();
    let sum = TensorExpr::Binary {
        op: BinOp::Add,
        lhs: bx(var("T")),
        rhs: bx(TensorExpr::Relabel { input: bx(var("T")), mapping: swap.clone() }),
    };
    let lhs = TensorExpr::Relabel { input: bx(sum.clone()), mapping: swap };
    Ok(build_rule("TransposeSum", decls, lhs, sum, vec![], vec![])?)
}

/// pad-low(expand(X, {x2->n}), 0, {x1->l, x2->0})
///   => expand(pad-low(X, 0, {x1->l}), {x2->n})
fn expand_padlow() -> Result<RewriteRule> {
    let decls = Decls {
        rclasses: vec![rclass("c1"), rclass("c2")],
        axes: vec![axis("x1", "c1"), axis("x2", "c2")],
        maps: vec![mapd("l", &["x1"]), mapd("n", &["x2"])],
        tensors: vec![tensor("X", &["x1"])],
    };
    let lhs = TensorExpr::PadLow {
        input: bx(TensorExpr::Expand { input: bx(var("X")), shape: spec(&[("x2", m("n"))]) }),
        value: ScalarLit::Int(0),
        low: spec(&[("x1", m("l")), ("x2", lit(0))]),
    };
    let rhs = TensorExpr::Expand {
        input: bx(TensorExpr::PadLow {
            input: bx(var("X")),
            value: ScalarLit::Int(0),
            low: spec(&[("x1", m("l"))]),
        }),
        shape: spec(&[("x2", m("n"))]),
    };
    Ok(build_rule("ExpandPadLow", decls, lhs, rhs, vec![], vec![])?)
}

/// slice(pad-low(X, 0, L), L, S+L, 1) => X
fn slice_of_pad() -> Result<RewriteRule> {
    let decls = Decls {
        rclasses: vec![rclass("c")],
        axes: vec![axis("x", "c")],
        maps: vec![mapd("l", &["x"])],
        tensors: vec![tensor("X", &["x"])],
    };
    let lhs = TensorExpr::Slice {
        input: bx(TensorExpr::PadLow {
            input: bx(var("X")),
            value: ScalarLit::Int(0),
            low: spec(&[("x", m("l"))]),
        }),
        start: spec(&[("x", m("l"))]),
        end: spec(&[("x", add(shp("X"), m("l")))]),
        stride: spec(&[("x", lit(1))]),
    };
    Ok(build_rule("SliceOfPad", decls, lhs, var("X"), vec![], vec![])?)
}

/// conv(pad(T, 0, Slp, Shp, Sip), W, ...) folded into conv attributes.
/// `generalized = false` uses the edge-only folding under the precondition
/// Sip = 0 and Si = 1; `generalized = true` removes the precondition and
/// folds interior padding into the base dilation.
fn fold_conv_input_pad(name: &str, generalized: bool) -> Result<RewriteRule> {
    let decls = Decls {
        rclasses: vec![rclass("cb"), rclass("cf"), rclass("co"), rclass("cs")],
        axes: vec![axis("b", "cb"), axis("f", "cf"), axis("o", "co"), axis("sp", "cs")],
        maps: vec![
            mapd("slp", &["sp"]),
            mapd("shp", &["sp"]),
            mapd("sip", &["sp"]),
            mapd("sl", &["sp"]),
            mapd("sh", &["sp"]),
            mapd("si", &["sp"]),
            mapd("swd", &["sp"]),
            mapd("p", &["sp"]),
        ],
        tensors: vec![tensor("T", &["b", "f", "sp"]), tensor("W", &["f", "o", "sp"])],
    };
    let padded = TensorExpr::Pad {
        input: bx(var("T")),
        value: ScalarLit::Int(0),
        low: spec(&[("b", lit(0)), ("f", lit(0)), ("sp", m("slp"))]),
        high: spec(&[("b", lit(0)), ("f", lit(0)), ("sp", m("shp"))]),
        interior: spec(&[("b", lit(0)), ("f", lit(0)), ("sp", m("sip"))]),
    };
    let conv = |input: TensorExpr, low: MapExpr, high: MapExpr, dil: MapExpr| TensorExpr::Conv {
        input: bx(input),
        weights: bx(var("W")),
        batch: vec!["b".into()],
        feature: vec!["f".into()],
        out_feature: vec!["o".into()],
        low: spec(&[("sp", low)]),
        high: spec(&[("sp", high)]),
        input_dilation: spec(&[("sp", dil)]),
        window_dilation: spec(&[("sp", m("swd"))]),
        strides: spec(&[("sp", m("p"))]),
        indices: BTreeMap::new(),
    };
    let lhs = conv(padded, m("sl"), m("sh"), m("si"));
    // Negative edge padding crops the input, which the fold cannot express:
    // both variants require nonnegative edge padding.
    let nonneg = vec![
        atom(CmpOp::Ge, m("slp"), lit(0), &["sp"]),
        atom(CmpOp::Ge, m("shp"), lit(0), &["sp"]),
    ];
    let (rhs, mut pres) = if generalized {
        (
            conv(
                var("T"),
                add(m("sl"), mul(m("si"), m("slp"))),
                add(m("sh"), mul(m("si"), m("shp"))),
                mul(m("si"), add(m("sip"), lit(1))),
            ),
            vec![],
        )
    } else {
        (
            conv(var("T"), add(m("sl"), m("slp")), add(m("sh"), m("shp")), m("si")),
            vec![
                atom(CmpOp::Eq, m("sip"), lit(0), &["sp"]),
                atom(CmpOp::Eq, m("si"), lit(1), &["sp"]),
            ],
        )
    };
    pres.extend(nonneg);
    Ok(build_rule(name, decls, lhs, rhs, pres, vec![])?)
}

/// reduce(concat(A, B, s), s)
///   => reduce(concat(expand(reduce(A, s)), expand(reduce(B, s)), t), t)
fn reduce_concat(name: &str, with_hint: bool) -> Result<RewriteRule> {
    let decls = Decls {
        rclasses: vec![rclass("c"), singleton("scs"), singleton("sct")],
        axes: vec![axis("x", "c"), axis("s", "scs"), axis("t", "sct")],
        maps: vec![],
        tensors: vec![tensor("A", &["x", "s"]), tensor("B", &["x", "s"])],
    };
    let lhs = TensorExpr::Reduce {
        op: RedOp::Add,
        input: bx(TensorExpr::Concat { lhs: bx(var("A")), rhs: bx(var("B")), axis: "s".into() }),
        axes: vec!["s".into()],
        indices: [("s".to_string(), "k".to_string())].into(),
    };
    let part = |t: &str, idx_name: &str| TensorExpr::Expand {
        input: bx(TensorExpr::Reduce {
            op: RedOp::Add,
            input: bx(var(t)),
            axes: vec!["s".into()],
            indices: [("s".to_string(), idx_name.to_string())].into(),
        }),
        shape: spec(&[("t", lit(1))]),
    };
    let rhs = TensorExpr::Reduce {
        op: RedOp::Add,
        input: bx(TensorExpr::Concat {
            lhs: bx(part("A", "ma")),
            rhs: bx(part("B", "mb")),
            axis: "t".into(),
        }),
        axes: vec!["t".into()],
        indices: [("t".to_string(), "j".to_string())].into(),
    };
    let hints = if with_hint {
        vec![SiHint {
            lhs_indices: vec!["k".into()],
            rhs_indices: vec!["j".into(), "ma".into(), "mb".into()],
            relation: Formula::Or(vec![
                Formula::And(vec![
                    atom(CmpOp::Lt, idx("k"), shp("A"), &["s"]),
                    atom(CmpOp::Eq, idx("j"), lit(0), &["t"]),
                    atom(CmpOp::Eq, idx("ma"), idx("k"), &["s"]),
                    atom(CmpOp::Eq, idx("mb"), lit(0), &["s"]),
                ]),
                Formula::And(vec![
                    atom(CmpOp::Ge, idx("k"), shp("A"), &["s"]),
                    atom(CmpOp::Eq, idx("j"), lit(1), &["t"]),
                    atom(CmpOp::Eq, idx("mb"), sub(idx("k"), shp("A")), &["s"]),
                    atom(CmpOp::Eq, idx("ma"), lit(0), &["s"]),
                ]),
            ]),
        }]
    } else {
        vec![]
    };
    Ok(build_rule(name, decls, lhs, rhs, vec![], hints)?)
}

/// dot(X, Y, {}, {}) => expand(X) * expand(Y)  (outer product)
fn dot_outer() -> Result<RewriteRule> {
    let decls = Decls {
        rclasses: vec![rclass("c1"), rclass("c2")],
        axes: vec![axis("x", "c1"), axis("y", "c2")],
        maps: vec![],
        tensors: vec![tensor("X", &["x"]), tensor("Y", &["y"])],
    };
    let lhs = TensorExpr::Dot {
        lhs: bx(var("X")),
        rhs: bx(var("Y")),
        contract: vec![],
        batch: vec![],
        indices: BTreeMap::new(),
    };
    let rhs = TensorExpr::Binary {
        op: BinOp::Mul,
        lhs: bx(TensorExpr::Expand { input: bx(var("X")), shape: spec(&[("y", shp("Y"))]) }),
        rhs: bx(TensorExpr::Expand { input: bx(var("Y")), shape: spec(&[("x", shp("X"))]) }),
    };
    Ok(build_rule("DotOuterProduct", decls, lhs, rhs, vec![], vec![])?)
}

/// select(P, X, X) => X
fn select_same() -> Result<RewriteRule> {
    let decls = Decls {
        rclasses: vec![rclass("c")],
        axes: vec![axis("x", "c")],
        maps: vec![],
        tensors: vec![tensor_of("P", &["x"], ElemKind::Bool), tensor("X", &["x"])],
    };
    let lhs = TensorExpr::Select {
        pred: bx(var("P")),
        on_true: bx(var("X")),
        on_false: bx(var("X")),
    };
    Ok(build_rule("SelectSame", decls, lhs, var("X"), vec![], vec![])?)
}

/// clamp(lo, clamp(lo, X, hi), hi) => clamp(lo, X, hi)
fn clamp_idempotent() -> Result<RewriteRule> {
    let decls = Decls {
        rclasses: vec![rclass("c")],
        axes: vec![axis("x", "c")],
        maps: vec![],
        tensors: vec![tensor("LO", &["x"]), tensor("X", &["x"]), tensor("HI", &["x"])],
    };
    let inner = TensorExpr::Clamp { min: bx(var("LO")), input: bx(var("X")), max: bx(var("HI")) };
    let lhs = TensorExpr::Clamp { min: bx(var("LO")), input: bx(inner.clone()), max: bx(var("HI")) };
    Ok(build_rule("ClampIdempotent", decls, lhs, inner, vec![], vec![])?)
}

/// reverse(reverse(X, x), x) => X
fn reverse_reverse(name: &str, double: bool) -> Result<RewriteRule> {
    let decls = Decls {
        rclasses: vec![rclass("c")],
        axes: vec![axis("x", "c")],
        maps: vec![],
        tensors: vec![tensor("X", &["x"])],
    };
    let once = TensorExpr::Reverse { input: bx(var("X")), axes: vec!["x".into()] };
    let lhs = if double {
        TensorExpr::Reverse { input: bx(once), axes: vec!["x".into()] }
    } else {
        once
    };
    Ok(build_rule(name, decls, lhs, var("X"), vec![], vec![])?)
}

/// concat(concat(A, B, s), C, s) => concat(A, concat(B, C, s), s)
fn concat_assoc() -> Result<RewriteRule> {
    let decls = Decls {
        rclasses: vec![rclass("c"), singleton("sc")],
        axes: vec![axis("x", "c"), axis("s", "sc")],
        maps: vec![],
        tensors: vec![
            tensor("A", &["x", "s"]),
            tensor("B", &["x", "s"]),
            tensor("C", &["x", "s"]),
        ],
    };
    let cat = |l: TensorExpr, r: TensorExpr| TensorExpr::Concat {
        lhs: bx(l),
        rhs: bx(r),
        axis: "s".into(),
    };
    let lhs = cat(cat(var("A"), var("B")), var("C"));
    let rhs = cat(var("A"), cat(var("B"), var("C")));
    Ok(build_rule("ConcatAssoc", decls, lhs, rhs, vec![], vec![])?)
}

/// X => X
fn identity() -> Result<RewriteRule> {
    let decls = Decls {
        rclasses: vec![rclass("c")],
        axes: vec![axis("x", "c")],
        maps: vec![],
        tensors: vec![tensor("X", &["x"])],
    };
    Ok(build_rule("Identity", decls, var("X"), var("X"), vec![], vec![])?)
}

/// pad-low(X, 7, 0) => X
fn padlow_zero() -> Result<RewriteRule> {
    let decls = Decls {
        rclasses: vec![rclass("c")],
        axes: vec![axis("x", "c")],
        maps: vec![],
        tensors: vec![tensor("X", &["x"])],
    };
    let lhs = TensorExpr::PadLow {
        input: bx(var("X")),
        value: ScalarLit::Int(7),
        low: spec(&[("x", lit(0))]),
    };
    Ok(build_rule("PadLowZero", decls, lhs, var("X"), vec![], vec![])?)
}

/// slice(X, 0, S, 1) => X  (off_by_one subtracts 1 from the end)
fn slice_full(name: &str, off_by_one: bool) -> Result<RewriteRule> {
    let decls = Decls {
        rclasses: vec![rclass("c")],
        axes: vec![axis("x", "c")],
        maps: vec![],
        tensors: vec![tensor("X", &["x"])],
    };
    let end = if off_by_one { sub(shp("X"), lit(1)) } else { shp("X") };
    let lhs = TensorExpr::Slice {
        input: bx(var("X")),
        start: spec(&[("x", lit(0))]),
        end: spec(&[("x", end)]),
        stride: spec(&[("x", lit(1))]),
    };
    Ok(build_rule(name, decls, lhs, var("X"), vec![], vec![])?)
}

/// binary(op, X, Y) => binary(op, Y, X)
fn binary_comm(name: &str, op: BinOp) -> Result<RewriteRule> {
    let decls = Decls {
        rclasses: vec![rclass("c")],
        axes: vec![axis("x", "c")],
        maps: vec![],
        tensors: vec![tensor("X", &["x"]), tensor("Y", &["x"])],
    };
    let lhs = TensorExpr::Binary { op, lhs: bx(var("X")), rhs: bx(var("Y")) };
    let rhs = TensorExpr::Binary { op, lhs: bx(var("Y")), rhs: bx(var("X")) };
    Ok(build_rule(name, decls, lhs, rhs, vec![], vec![])?)
}

/// dy-slice(dyup-slice(X, U, I), I, Shape(U)) => U
fn dyup_dyslice() -> Result<RewriteRule> {
    let decls = Decls {
        rclasses: vec![rclass("c")],
        axes: vec![axis("x", "c")],
        maps: vec![mapd("i", &["x"])],
        tensors: vec![tensor("X", &["x"]), tensor("U", &["x"])],
    };
    let lhs = TensorExpr::DySlice {
        input: bx(TensorExpr::DyUpSlice {
            input: bx(var("X")),
            update: bx(var("U")),
            start: spec(&[("x", m("i"))]),
        }),
        start: spec(&[("x", m("i"))]),
        size: spec(&[("x", shp("U"))]),
    };
    Ok(build_rule("DyUpThenDySlice", decls, lhs, var("U"), vec![], vec![])?)
}

/// slice(iota(n, s), 0, k, 1) => iota(k, s)
fn slice_iota() -> Result<RewriteRule> {
    let decls = Decls {
        rclasses: vec![singleton("sc")],
        axes: vec![axis("s", "sc")],
        maps: vec![mapd("n", &["s"]), mapd("k", &["s"])],
        tensors: vec![],
    };
    let lhs = TensorExpr::Slice {
        input: bx(TensorExpr::Iota { shape: spec(&[("s", m("n"))]), axis: "s".into() }),
        start: spec(&[("s", lit(0))]),
        end: spec(&[("s", m("k"))]),
        stride: spec(&[("s", lit(1))]),
    };
    let rhs = TensorExpr::Iota { shape: spec(&[("s", m("k"))]), axis: "s".into() };
    Ok(build_rule("SliceIota", decls, lhs, rhs, vec![], vec![])?)
}

/// All corpus entries with their expected outcomes. Bounds are left for the
/// generator to fill in from the analysis (and are independently pinned for
/// the key rules by the acceptance suite).
pub fn builtin_rules() -> Result<Vec<(RewriteRule, &'static str, &'static str)>> {
    Ok(vec![
        (
            padlow_combine("PadLowCombine", add(m("l1"), m("l2")), true)?,
            "verified",
            "merges two low-pad operators; bound 2 on its single rank class",
        ),
        (
            dyslice_to_slice("DysliceToSlice", true)?,
            "verified",
            "dynamic slice pinned to a static slice by equality preconditions; bound 1",
        ),
        (
            slice_dyup()?,
            "invalid",
            "strided-slice rewrite that holds at rank 1 but fails from rank 2",
        ),
        (transpose_sum()?, "verified", "(T + transpose(T)) is symmetric"),
        (
            expand_padlow()?,
            "verified",
            "low-padding commutes with expansion when the new axes get zero padding",
        ),
        (slice_of_pad()?, "verified", "slicing off exactly the low padding is a no-op"),
        (
            fold_conv_input_pad("FoldConvInputPadXla", false)?,
            "verified",
            "edge padding folded into convolution padding under zero interior padding and unit base dilation",
        ),
        (
            fold_conv_input_pad("FoldConvInputPadGen", true)?,
            "unknown",
            "generalized fold: interior padding absorbed into the base dilation; \
             the value goal nests div/mod with nonlinear divisors (si*(sip+1)), \
             where the bundled solver returns unknown",
        ),
        (
            reduce_concat("ReduceConcat", true)?,
            "verified",
            "reduction distributed over concatenation; needs a reduction-index relation hint",
        ),
        (
            reduce_concat("ReduceConcatNoHint", false)?,
            "unknown",
            "same rule without the hint: must stay inconclusive, never invalid",
        ),
        (
            dot_outer()?,
            "verified",
            "dot with empty contraction/batch decomposes into an elementwise product of expansions",
        ),
        (select_same()?, "verified", "select between identical branches"),
        (clamp_idempotent()?, "verified", "clamping twice with the same limits"),
        (reverse_reverse("ReverseReverse", true)?, "verified", "double reversal is identity"),
        (concat_assoc()?, "verified", "concatenation is associative on a singleton axis"),
        (identity()?, "verified", "reflexivity"),
        (padlow_zero()?, "verified", "zero low padding is a no-op regardless of the pad value"),
        (slice_full("SliceFull", false)?, "verified", "full-range unit-stride slice is identity"),
        (binary_comm("BinaryAddComm", BinOp::Add)?, "verified", "addition commutes"),
        (dyup_dyslice()?, "verified", "reading back exactly the dynamically updated window"),
        (slice_iota()?, "verified", "prefix slice of iota is a smaller iota"),
        // Intentionally broken mutants.
        (
            padlow_combine("PadLowCombineWrongSum", m("l1"), true)?,
            "invalid",
            "mutant: result pads by l1 only",
        ),
        (
            binary_comm("BinarySubComm", BinOp::Sub)?,
            "invalid",
            "mutant: subtraction does not commute",
        ),
        (reverse_reverse("ReverseOnce", false)?, "invalid", "mutant: single reversal kept"),
        (
            slice_full("SliceFullOffByOne", true)?,
            "invalid",
            "mutant: slice end off by one, shapes differ",
        ),
        (
            dyslice_to_slice("DysliceToSliceDropPre", false)?,
            "invalid",
            "mutant: start-equality precondition dropped",
        ),
    ])
}

/// File name for a rule: kebab-cased rule name.
pub fn file_name(rule_name: &str) -> String {
    let mut out = String::new();
    for (i, ch) in rule_name.chars().enumerate() {
        if ch.is_uppercase() {
            if i > 0 {
                out.push('-');
            }
            out.extend(ch.to_lowercase());
        } else {
            out.push(ch);
        }
    }
    format!("{out}.json")
}
