// SPDX-License-Identifier: Apache-2.0
//! Compares the rayon-parallel differential-test driver against the
//! sequential fallback on one moderately sized rule. Run with
//! `cargo bench -p trv-core` (the `parallel` feature is on by default; the
//! sequential path is always available for comparison).

use std::collections::BTreeMap;

use criterion::{criterion_group, criterion_main, Criterion};
use trv_core::concrete;
use trv_core::ir::{
    build_rule, AggAxisDecl, Decls, MapDecl, MapExpr, RClassDecl, RewriteRule, ScalarLit,
    TensorDecl, TensorExpr,
};

/// pad-low(pad-low(Y, 0, L1), 0, L2) => pad-low(Y, 0, L1 + L2), the
/// two-task worked example; cheap enough to iterate, real enough to matter.
fn bench_rule() -> RewriteRule {
    let decls = Decls {
        rclasses: vec![RClassDecl { id: "c".into(), singleton: false }],
        axes: vec![AggAxisDecl { id: "x".into(), rclass: "c".into() }],
        maps: vec![
            MapDecl { id: "l1".into(), axes: vec!["x".into()] },
            MapDecl { id: "l2".into(), axes: vec!["x".into()] },
        ],
        tensors: vec![TensorDecl {
            id: "Y".into(),
            axes: vec!["x".into()],
            elem: trv_core::ir::ElemKind::Int,
        }],
    };
    let pad = |input: TensorExpr, low: &str| TensorExpr::PadLow {
        input: Box::new(input),
        value: ScalarLit::Int(0),
        low: [("x".to_string(), MapExpr::Map(low.into()))].into(),
    };
    let lhs = pad(pad(TensorExpr::Var("Y".into()), "l1"), "l2");
    let rhs = TensorExpr::PadLow {
        input: Box::new(TensorExpr::Var("Y".into())),
        value: ScalarLit::Int(0),
        low: [(
            "x".to_string(),
            MapExpr::Add(
                Box::new(MapExpr::Map("l1".into())),
                Box::new(MapExpr::Map("l2".into())),
            ),
        )]
        .into(),
    };
    build_rule("PadLowCombineBench", decls, lhs, rhs, vec![], vec![]).unwrap()
}

fn bench_differential(c: &mut Criterion) {
    let rule = bench_rule();
    let ranks: BTreeMap<String, usize> = [("c".to_string(), 2)].into();
    let trials = 200;

    let mut group = c.benchmark_group("differential_test");
    group.sample_size(10);
    #[cfg(feature = "parallel")]
    group.bench_function("parallel", |b| {
        b.iter(|| concrete::differential_test(&rule, &ranks, trials, 1, 4, 4).unwrap())
    });
    group.bench_function("sequential", |b| {
        b.iter(|| concrete::differential_test_seq(&rule, &ranks, trials, 1, 4, 4).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_differential);
criterion_main!(benches);
