// SPDX-License-Identifier: Apache-2.0
//! End-to-end pipeline checks on two canonical rules: a valid pad-low
//! combination (bound 2) and an invalid slice/dyup-slice rule that only
//! breaks at rank 2.

use std::collections::BTreeMap;

use trv_core::ir::{
    build_rule, AggAxisDecl, Decls, Formula, MapDecl, MapExpr, RClassDecl, RewriteRule,
    ScalarLit, TensorDecl, TensorExpr,
};
use trv_core::term::CmpOp;
use trv_core::verifier::{verify, VerdictKind, VerifyConfig};
use trv_core::{analysis, ir::ElemKind};

fn spec1(axis: &str, e: MapExpr) -> BTreeMap<String, MapExpr> {
    let mut m = BTreeMap::new();
    m.insert(axis.to_string(), e);
    m
}

/// pad-low(pad-low(Y, 0, l1), 0, l2) => pad-low(Y, 0, l1 + l2)
fn padlow_combine() -> RewriteRule {
    let decls = Decls {
        rclasses: vec![RClassDecl { id: "c".into(), singleton: false }],
        axes: vec![AggAxisDecl { id: "x".into(), rclass: "c".into() }],
        maps: vec![
            MapDecl { id: "l1".into(), axes: vec!["x".into()] },
            MapDecl { id: "l2".into(), axes: vec!["x".into()] },
        ],
        tensors: vec![TensorDecl { id: "Y".into(), axes: vec!["x".into()], elem: ElemKind::Int }],
    };
    let lhs = TensorExpr::PadLow {
        input: Box::new(TensorExpr::PadLow {
            input: Box::new(TensorExpr::Var("Y".into())),
            value: ScalarLit::Int(0),
            low: spec1("x", MapExpr::Map("l1".into())),
        }),
        value: ScalarLit::Int(0),
        low: spec1("x", MapExpr::Map("l2".into())),
    };
    let rhs = TensorExpr::PadLow {
        input: Box::new(TensorExpr::Var("Y".into())),
        value: ScalarLit::Int(0),
        low: spec1(
            "x",
            MapExpr::Add(
                Box::new(MapExpr::Map("l1".into())),
                Box::new(MapExpr::Map("l2".into())),
            ),
        ),
    };
    let nonneg = |m: &str| Formula::Atom {
        cmp: CmpOp::Ge,
        lhs: MapExpr::Map(m.into()),
        rhs: MapExpr::Lit(0),
        axes: vec!["x".into()],
    };
    build_rule("PadLowCombine", decls, lhs, rhs, vec![nonneg("l1"), nonneg("l2")], vec![]).unwrap()
}

/// dyup-slice(slice(Y, 0, (S+1) div 2, 1), zeros, 1)
///   => dyup-slice(slice(Y, 0, S, 2), zeros, 1)
fn slice_dyup() -> RewriteRule {
    let decls = Decls {
        rclasses: vec![RClassDecl { id: "c".into(), singleton: false }],
        axes: vec![AggAxisDecl { id: "x".into(), rclass: "c".into() }],
        maps: vec![],
        tensors: vec![TensorDecl { id: "Y".into(), axes: vec!["x".into()], elem: ElemKind::Int }],
    };
    // Update shape: ceil(S/2) - 1 elements per axis (everything at index >= 1).
    let upd_shape = MapExpr::Sub(
        Box::new(MapExpr::CeilDiv(Box::new(MapExpr::Shape("Y".into())), Box::new(MapExpr::Lit(2)))),
        Box::new(MapExpr::Lit(1)),
    );
    let side = |end: MapExpr, stride: i64| TensorExpr::DyUpSlice {
        input: Box::new(TensorExpr::Slice {
            input: Box::new(TensorExpr::Var("Y".into())),
            start: spec1("x", MapExpr::Lit(0)),
            end: spec1("x", end),
            stride: spec1("x", MapExpr::Lit(stride)),
        }),
        update: Box::new(TensorExpr::Const {
            value: ScalarLit::Int(0),
            shape: spec1("x", upd_shape.clone()),
        }),
        start: spec1("x", MapExpr::Lit(1)),
    };
    let lhs = side(
        MapExpr::Div(
            Box::new(MapExpr::Add(Box::new(MapExpr::Shape("Y".into())), Box::new(MapExpr::Lit(1)))),
            Box::new(MapExpr::Lit(2)),
        ),
        1,
    );
    let rhs = side(MapExpr::Shape("Y".into()), 2);
    build_rule("SliceDyUpSlice", decls, lhs, rhs, vec![], vec![]).unwrap()
}

#[test]
fn padlow_combine_bound_is_two() {
    let rule = padlow_combine();
    let report = analysis::bound_report(&rule).unwrap();
    assert_eq!(report.bound_of("c"), Some(2), "report: {report:?}");
}

#[test]
fn padlow_combine_verifies() {
    let rule = padlow_combine();
    let verdict = verify(&rule, &VerifyConfig::default()).unwrap();
    assert_eq!(verdict.kind, VerdictKind::Verified, "verdict: {verdict:?}");
    assert_eq!(verdict.tasks.len(), 2);
}

#[test]
fn slice_dyup_invalid_at_rank_two_only() {
    let rule = slice_dyup();
    let verdict = verify(&rule, &VerifyConfig::default()).unwrap();
    assert_eq!(verdict.kind, VerdictKind::Invalid, "verdict: {verdict:?}");
    let ce = verdict.counterexamples.first().expect("counterexample");
    assert!(ce.oracle_confirmed, "oracle must confirm: {ce:?}");
    assert!(*ce.ranks.get("c").unwrap() <= 2);
    // The rank-1 task must be proved.
    let rank1 = verdict
        .tasks
        .iter()
        .find(|t| t.ranks.get("c") == Some(&1))
        .expect("rank-1 task present");
    assert!(
        matches!(rank1.status, trv_core::verifier::TaskStatus::Proved),
        "rank-1 task must be proved: {rank1:?}"
    );
}
