// SPDX-License-Identifier: Apache-2.0
//! Per-operator equivalence between the symbolic evaluator and the concrete
//! interpreter: under a random concrete model, the symbolic validity
//! formulas, shapes, and value terms must agree with `eval_concrete` — and
//! whenever the interpreter rejects an input, the validity formula must be
//! false (and vice versa). Each operator gets at least 100 accepted cases.
//! The harness lives in `trv_core::testkit` so the acceptance suite can
//! reuse it.

use trv_core::testkit;

const CASES: usize = 100;

fn run(names: &[&str]) {
    let rules = testkit::operator_rules();
    for name in names {
        let rule = rules
            .iter()
            .find(|r| r.name == *name)
            .unwrap_or_else(|| panic!("no operator rule named {name}"));
        testkit::check_operator(rule, CASES).unwrap();
    }
}

#[test]
fn op_const() {
    run(&["Const"]);
}

#[test]
fn op_iota() {
    run(&["Iota"]);
}

#[test]
fn op_expand() {
    run(&["Expand"]);
}

#[test]
fn op_binary() {
    run(&["BinaryAdd", "BinarySub", "BinaryMul", "BinaryMin", "BinaryMax"]);
}

#[test]
fn op_pad_low() {
    run(&["PadLow"]);
}

#[test]
fn op_pad() {
    run(&["Pad"]);
}

#[test]
fn op_slice() {
    run(&["Slice"]);
}

#[test]
fn op_dy_slice() {
    run(&["DySlice"]);
}

#[test]
fn op_dyup_slice() {
    run(&["DyUpSlice"]);
}

#[test]
fn op_reduce() {
    run(&["ReduceAdd", "ReduceMul", "ReduceMin", "ReduceMax"]);
}

#[test]
fn op_relabel() {
    run(&["Relabel"]);
}

#[test]
fn op_concat() {
    run(&["Concat"]);
}

#[test]
fn op_dot() {
    run(&["Dot"]);
}

#[test]
fn op_conv() {
    run(&["Conv"]);
}

#[test]
fn op_reverse() {
    run(&["Reverse"]);
}

#[test]
fn op_select() {
    run(&["Select"]);
}

#[test]
fn op_clamp() {
    run(&["Clamp"]);
}
