// SPDX-License-Identifier: Apache-2.0
//! Symbolic evaluation: denotational operator semantics over scalar terms.
//!
//! Each operator maps input [`SymbolicTensor`]s to an output tensor whose
//! value is a closure from a symbolic access to a [`TermRef`], together with
//! validity atoms (the operator's side conditions). The value function is
//! total; out-of-range behavior is governed solely by the validity formula.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::instantiate::{AxisId, IExpr, IMap, VarSig};
use crate::ir::{BinOp, ScalarLit, TensorId};
use crate::term::{self, Atom, CmpOp, Kind, RedElem, RedIndex, RedOp, Term, TermRef};
use crate::{Error, Result};

/// A symbolic access: named axis -> index term.
pub type Access = BTreeMap<AxisId, TermRef>;

pub type ValueFn = Arc<dyn Fn(&Access) -> TermRef + Send + Sync>;

#[derive(Clone)]
pub struct SymbolicTensor {
    /// Sorted named axes of the tensor.
    pub axes: Vec<AxisId>,
    pub shape: IMap,
    pub elem: Kind,
    pub value: ValueFn,
}

impl std::fmt::Debug for SymbolicTensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SymbolicTensor")
            .field("axes", &self.axes)
            .field("shape", &self.shape)
            .field("elem", &self.elem)
            .finish_non_exhaustive()
    }
}

fn lit_term(v: ScalarLit) -> TermRef {
    match v {
        ScalarLit::Int(x) => term::int(x),
        ScalarLit::Bool(b) => term::boolean(b),
        ScalarLit::Real(x) => term::num(Kind::Real, x),
    }
}

fn sorted_axes(shape: &IMap) -> Vec<AxisId> {
    shape.keys().cloned().collect()
}

fn restrict(a: &Access, axes: &[AxisId]) -> Access {
    axes.iter().map(|x| (x.clone(), a[x].clone())).collect()
}

/// Per-axis conjunction `g(m1[a], m2[a])` over a map's domain.
fn fold2(m1: &IMap, m2: &IMap, g: impl Fn(&TermRef, &TermRef) -> TermRef) -> TermRef {
    term::and(m1.iter().map(|(a, v)| g(v, &m2[a])).collect())
}

fn same_axes(a: &SymbolicTensor, b: &SymbolicTensor, op: &str) -> Result<()> {
    if a.axes != b.axes {
        return Err(Error::AxesMismatch(format!(
            "{op}: axes {:?} vs {:?}",
            a.axes, b.axes
        )));
    }
    Ok(())
}

/// Symbolically evaluates an instantiated expression. Returns the output
/// tensor and the accumulated validity atoms (an implicit conjunction).
pub fn sym_eval(
    expr: &IExpr,
    env: &BTreeMap<TensorId, VarSig>,
) -> Result<(SymbolicTensor, Vec<TermRef>)> {
    let mut validity = Vec::new();
    let t = eval(expr, env, &mut validity)?;
    Ok((t, validity))
}

/// Shape component only (value closures are lazy, so this is cheap).
pub fn shape_of(expr: &IExpr, env: &BTreeMap<TensorId, VarSig>) -> Result<IMap> {
    let (t, _) = sym_eval(expr, env)?;
    Ok(t.shape)
}

fn push_shape_nonneg(shape: &IMap, validity: &mut Vec<TermRef>) {
    for s in shape.values() {
        validity.push(term::ge(s, &term::int(0)));
    }
}

fn eval(
    expr: &IExpr,
    env: &BTreeMap<TensorId, VarSig>,
    validity: &mut Vec<TermRef>,
) -> Result<SymbolicTensor> {
    match expr {
        IExpr::Var(id) => {
            let sig = env
                .get(id)
                .ok_or_else(|| Error::UndeclaredIdentifier(id.clone()))?;
            let mut axes = sig.axes.clone();
            axes.sort();
            let shape: IMap =
                axes.iter().map(|a| (a.clone(), sig.shape[a].clone())).collect();
            push_shape_nonneg(&shape, validity);
            let tname = id.clone();
            let elem = sig.elem;
            let ax = axes.clone();
            let value: ValueFn = Arc::new(move |acc: &Access| {
                term::read(tname.clone(), ax.iter().map(|a| acc[a].clone()).collect(), elem)
            });
            Ok(SymbolicTensor { axes, shape, elem, value })
        }
        IExpr::Const { value, shape } => {
            push_shape_nonneg(shape, validity);
            let lit = lit_term(*value);
            let elem = value.kind();
            Ok(SymbolicTensor {
                axes: sorted_axes(shape),
                shape: shape.clone(),
                elem,
                value: Arc::new(move |_| lit.clone()),
            })
        }
        IExpr::Iota { shape, axis } => {
            if !shape.contains_key(axis) {
                return Err(Error::AxesMismatch(format!("iota axis {axis} not in shape")));
            }
            push_shape_nonneg(shape, validity);
            let ax = axis.clone();
            Ok(SymbolicTensor {
                axes: sorted_axes(shape),
                shape: shape.clone(),
                elem: Kind::Int,
                value: Arc::new(move |acc: &Access| acc[&ax].clone()),
            })
        }
        IExpr::Expand { input, shape } => {
            let t = eval(input, env, validity)?;
            for a in shape.keys() {
                if t.shape.contains_key(a) {
                    return Err(Error::AxesMismatch(format!(
                        "expand axis {a} already present in input"
                    )));
                }
            }
            push_shape_nonneg(shape, validity);
            let mut out_shape = t.shape.clone();
            out_shape.extend(shape.iter().map(|(k, v)| (k.clone(), v.clone())));
            let inner_axes = t.axes.clone();
            let inner = t.value.clone();
            Ok(SymbolicTensor {
                axes: sorted_axes(&out_shape),
                shape: out_shape,
                elem: t.elem,
                value: Arc::new(move |acc: &Access| inner(&restrict(acc, &inner_axes))),
            })
        }
        IExpr::Binary { op, lhs, rhs } => {
            let a = eval(lhs, env, validity)?;
            let b = eval(rhs, env, validity)?;
            same_axes(&a, &b, "binary")?;
            validity.push(fold2(&a.shape, &b.shape, |x, y| term::eq(x, y)));
            let elem = binary_elem(*op, a.elem, b.elem)?;
            let (va, vb, op) = (a.value.clone(), b.value.clone(), *op);
            Ok(SymbolicTensor {
                axes: a.axes.clone(),
                shape: a.shape.clone(),
                elem,
                value: Arc::new(move |acc: &Access| apply_binop(op, &va(acc), &vb(acc))),
            })
        }
        IExpr::PadLow { input, value, low } => {
            let t = eval(input, env, validity)?;
            check_attr_axes(&t, low, "pad-low")?;
            if value.kind() != t.elem {
                return Err(Error::DomainMismatch("pad-low value kind".into()));
            }
            let out_shape: IMap = t
                .shape
                .iter()
                .map(|(a, s)| (a.clone(), term::add(s, &low[a])))
                .collect();
            push_shape_nonneg(&out_shape, validity);
            let lit = lit_term(*value);
            let low = low.clone();
            let inner = t.value.clone();
            let axes = t.axes.clone();
            Ok(SymbolicTensor {
                axes: axes.clone(),
                shape: out_shape,
                elem: t.elem,
                value: Arc::new(move |acc: &Access| {
                    let in_pad = term::and(
                        axes.iter().map(|a| term::ge(&acc[a], &low[a])).collect(),
                    );
                    let shifted: Access = axes
                        .iter()
                        .map(|a| (a.clone(), term::sub(&acc[a], &low[a])))
                        .collect();
                    term::ite(&in_pad, &inner(&shifted), &lit)
                }),
            })
        }
        IExpr::Pad { input, value, low, high, interior } => {
            let t = eval(input, env, validity)?;
            check_attr_axes(&t, low, "pad")?;
            check_attr_axes(&t, high, "pad")?;
            check_attr_axes(&t, interior, "pad")?;
            if value.kind() != t.elem {
                return Err(Error::DomainMismatch("pad value kind".into()));
            }
            for i in interior.values() {
                validity.push(term::ge(i, &term::int(0)));
            }
            // Interior-dilated size I = S + (S-1)*S_i; limit L = S_l + I;
            // output size S_o = L + S_h.
            let dilated: IMap = t
                .shape
                .iter()
                .map(|(a, s)| {
                    let i = &interior[a];
                    (a.clone(), term::add(s, &term::mul(&term::sub(s, &term::int(1)), i)))
                })
                .collect();
            let limit: IMap = dilated
                .iter()
                .map(|(a, d)| (a.clone(), term::add(&low[a], d)))
                .collect();
            let out_shape: IMap = limit
                .iter()
                .map(|(a, l)| (a.clone(), term::add(l, &high[a])))
                .collect();
            push_shape_nonneg(&out_shape, validity);
            let lit = lit_term(*value);
            let (low, interior, limit) = (low.clone(), interior.clone(), limit);
            let inner = t.value.clone();
            let axes = t.axes.clone();
            Ok(SymbolicTensor {
                axes: axes.clone(),
                shape: out_shape,
                elem: t.elem,
                value: Arc::new(move |acc: &Access| {
                    let mut guard = Vec::new();
                    let mut shifted = Access::new();
                    for a in &axes {
                        let step = term::add(&interior[a], &term::int(1));
                        let off = term::sub(&acc[a], &low[a]);
                        guard.push(term::ge(&acc[a], &low[a]));
                        guard.push(term::lt(&acc[a], &limit[a]));
                        guard.push(term::eq(&term::modulo(&off, &step), &term::int(0)));
                        shifted.insert(a.clone(), term::div(&off, &step));
                    }
                    term::ite(&term::and(guard), &inner(&shifted), &lit)
                }),
            })
        }
        IExpr::Slice { input, start, end, stride } => {
            let t = eval(input, env, validity)?;
            check_attr_axes(&t, start, "slice")?;
            check_attr_axes(&t, end, "slice")?;
            check_attr_axes(&t, stride, "slice")?;
            for a in &t.axes {
                validity.push(term::ge(&start[a], &term::int(0)));
                validity.push(term::le(&start[a], &end[a]));
                validity.push(term::le(&end[a], &t.shape[a]));
                validity.push(term::gt(&stride[a], &term::int(0)));
            }
            let out_shape: IMap = t
                .axes
                .iter()
                .map(|a| {
                    (a.clone(), term::ceil_div(&term::sub(&end[a], &start[a]), &stride[a]))
                })
                .collect();
            let (start, stride) = (start.clone(), stride.clone());
            let inner = t.value.clone();
            let axes = t.axes.clone();
            Ok(SymbolicTensor {
                axes: axes.clone(),
                shape: out_shape,
                elem: t.elem,
                value: Arc::new(move |acc: &Access| {
                    let mapped: Access = axes
                        .iter()
                        .map(|a| {
                            (a.clone(), term::add(&start[a], &term::mul(&acc[a], &stride[a])))
                        })
                        .collect();
                    inner(&mapped)
                }),
            })
        }
        IExpr::DySlice { input, start, size } => {
            let t = eval(input, env, validity)?;
            check_attr_axes(&t, start, "dy-slice")?;
            check_attr_axes(&t, size, "dy-slice")?;
            for a in &t.axes {
                validity.push(term::ge(&start[a], &term::int(0)));
                validity.push(term::le(
                    &term::add(&start[a], &size[a]),
                    &t.shape[a],
                ));
                validity.push(term::gt(&size[a], &term::int(0)));
            }
            let start = start.clone();
            let inner = t.value.clone();
            let axes = t.axes.clone();
            Ok(SymbolicTensor {
                axes: axes.clone(),
                shape: size.clone(),
                elem: t.elem,
                value: Arc::new(move |acc: &Access| {
                    let mapped: Access = axes
                        .iter()
                        .map(|a| (a.clone(), term::add(&acc[a], &start[a])))
                        .collect();
                    inner(&mapped)
                }),
            })
        }
        IExpr::DyUpSlice { input, update, start } => {
            let t = eval(input, env, validity)?;
            let u = eval(update, env, validity)?;
            same_axes(&t, &u, "dyup-slice")?;
            if t.elem != u.elem {
                return Err(Error::DomainMismatch("dyup-slice element kinds differ".into()));
            }
            check_attr_axes(&t, start, "dyup-slice")?;
            for a in &t.axes {
                validity.push(term::ge(&start[a], &term::int(0)));
                validity.push(term::le(
                    &term::add(&start[a], &u.shape[a]),
                    &t.shape[a],
                ));
                validity.push(term::gt(&u.shape[a], &term::int(0)));
            }
            let start = start.clone();
            let ushape = u.shape.clone();
            let (iv, uv) = (t.value.clone(), u.value.clone());
            let axes = t.axes.clone();
            Ok(SymbolicTensor {
                axes: axes.clone(),
                shape: t.shape.clone(),
                elem: t.elem,
                value: Arc::new(move |acc: &Access| {
                    let mut guard = Vec::new();
                    let mut shifted = Access::new();
                    for a in &axes {
                        guard.push(term::ge(&acc[a], &start[a]));
                        guard.push(term::lt(&acc[a], &term::add(&start[a], &ushape[a])));
                        shifted.insert(a.clone(), term::sub(&acc[a], &start[a]));
                    }
                    term::ite(&term::and(guard), &uv(&shifted), &iv(acc))
                }),
            })
        }
        IExpr::Reduce { op, input, axes, indices } => {
            let t = eval(input, env, validity)?;
            for x in axes {
                if !t.shape.contains_key(x) {
                    return Err(Error::AxesMismatch(format!("reduce axis {x} not in input")));
                }
            }
            if t.elem == Kind::Bool {
                return Err(Error::UnsupportedOp("reduce over boolean tensor".into()));
            }
            let out_shape: IMap = t
                .shape
                .iter()
                .filter(|(a, _)| !axes.contains(a))
                .map(|(a, s)| (a.clone(), s.clone()))
                .collect();
            let red_axes: Vec<AxisId> = {
                let mut v = axes.clone();
                v.sort();
                v
            };
            let sizes: IMap = red_axes
                .iter()
                .map(|a| (a.clone(), t.shape[a].clone()))
                .collect();
            // Min/max have no identity element: the reduced box must be
            // nonempty (it is empty iff any reduced axis has size 0).
            if matches!(op, RedOp::Min | RedOp::Max) {
                for a in &red_axes {
                    validity.push(term::ge(&sizes[a], &term::int(1)));
                }
            }
            let indices = indices.clone();
            let inner = t.value.clone();
            let (op, elem) = (*op, t.elem);
            Ok(SymbolicTensor {
                axes: sorted_axes(&out_shape),
                shape: out_shape,
                elem,
                value: Arc::new(move |acc: &Access| {
                    let mut full = acc.clone();
                    let mut ridx = Vec::new();
                    for a in &red_axes {
                        let name = indices[a].clone();
                        full.insert(a.clone(), term::sym(name.clone(), Kind::Int));
                        ridx.push(RedIndex { name, axis: a.clone(), size: sizes[a].clone() });
                    }
                    term::red(op, ridx, inner(&full), elem)
                }),
            })
        }
        IExpr::Relabel { input, mapping } => {
            let t = eval(input, env, validity)?;
            let dom: Vec<&AxisId> = mapping.keys().collect();
            if dom.len() != t.axes.len()
                || !t.axes.iter().all(|a| mapping.contains_key(a))
            {
                return Err(Error::AxesMismatch("relabel domain != input axes".into()));
            }
            let out_shape: IMap = mapping
                .iter()
                .map(|(from, to)| (to.clone(), t.shape[from].clone()))
                .collect();
            if out_shape.len() != mapping.len() {
                return Err(Error::AxesMismatch("relabel map not injective".into()));
            }
            let mapping = mapping.clone();
            let inner = t.value.clone();
            Ok(SymbolicTensor {
                axes: sorted_axes(&out_shape),
                shape: out_shape,
                elem: t.elem,
                value: Arc::new(move |acc: &Access| {
                    let pre: Access = mapping
                        .iter()
                        .map(|(from, to)| (from.clone(), acc[to].clone()))
                        .collect();
                    inner(&pre)
                }),
            })
        }
        IExpr::Concat { lhs, rhs, axis } => {
            let a = eval(lhs, env, validity)?;
            let b = eval(rhs, env, validity)?;
            same_axes(&a, &b, "concat")?;
            if a.elem != b.elem {
                return Err(Error::DomainMismatch("concat element kinds differ".into()));
            }
            if !a.shape.contains_key(axis) {
                return Err(Error::AxesMismatch(format!("concat axis {axis} not in operands")));
            }
            for x in &a.axes {
                if x != axis {
                    validity.push(term::eq(&a.shape[x], &b.shape[x]));
                }
            }
            let split = a.shape[axis].clone();
            let mut out_shape = a.shape.clone();
            out_shape.insert(axis.clone(), term::add(&split, &b.shape[axis]));
            let (va, vb) = (a.value.clone(), b.value.clone());
            let axis = axis.clone();
            Ok(SymbolicTensor {
                axes: a.axes.clone(),
                shape: out_shape,
                elem: a.elem,
                value: Arc::new(move |acc: &Access| {
                    let past = term::ge(&acc[&axis], &split);
                    let mut shifted = acc.clone();
                    shifted.insert(axis.clone(), term::sub(&acc[&axis], &split));
                    term::ite(&past, &vb(&shifted), &va(acc))
                }),
            })
        }
        IExpr::Dot { lhs, rhs, contract, batch, indices } => {
            let a = eval(lhs, env, validity)?;
            let b = eval(rhs, env, validity)?;
            if a.elem != b.elem || a.elem == Kind::Bool {
                return Err(Error::DomainMismatch("dot element kinds".into()));
            }
            let common: Vec<AxisId> =
                a.axes.iter().filter(|x| b.shape.contains_key(*x)).cloned().collect();
            let mut declared: Vec<AxisId> =
                contract.iter().chain(batch.iter()).cloned().collect();
            declared.sort();
            if declared != common {
                return Err(Error::AxesMismatch(format!(
                    "dot contracting+batch {declared:?} != common axes {common:?}"
                )));
            }
            for x in &common {
                validity.push(term::eq(&a.shape[x], &b.shape[x]));
            }
            let mut out_shape = IMap::new();
            for x in batch {
                out_shape.insert(x.clone(), a.shape[x].clone());
            }
            for (x, s) in a.shape.iter().chain(b.shape.iter()) {
                if !common.contains(x) {
                    out_shape.insert(x.clone(), s.clone());
                }
            }
            let a_axes = a.axes.clone();
            let b_axes = b.axes.clone();
            let contract: Vec<AxisId> = {
                let mut v = contract.clone();
                v.sort();
                v
            };
            let sizes: IMap = contract
                .iter()
                .map(|x| (x.clone(), a.shape[x].clone()))
                .collect();
            let indices = indices.clone();
            let (va, vb, elem) = (a.value.clone(), b.value.clone(), a.elem);
            Ok(SymbolicTensor {
                axes: sorted_axes(&out_shape),
                shape: out_shape,
                elem,
                value: Arc::new(move |acc: &Access| {
                    let mut full = acc.clone();
                    let mut ridx = Vec::new();
                    for x in &contract {
                        let name = indices[x].clone();
                        full.insert(x.clone(), term::sym(name.clone(), Kind::Int));
                        ridx.push(RedIndex {
                            name,
                            axis: x.clone(),
                            size: sizes[x].clone(),
                        });
                    }
                    let body = term::mul(
                        &va(&restrict(&full, &a_axes)),
                        &vb(&restrict(&full, &b_axes)),
                    );
                    term::red(RedOp::Add, ridx, body, elem)
                }),
            })
        }
        IExpr::ConvBase { input, weights, batch, feature, out_feature, strides, indices } => {
            let i = eval(input, env, validity)?;
            let w = eval(weights, env, validity)?;
            if i.elem != w.elem || i.elem == Kind::Bool {
                return Err(Error::DomainMismatch("conv element kinds".into()));
            }
            let only_i: Vec<AxisId> =
                i.axes.iter().filter(|x| !w.shape.contains_key(*x)).cloned().collect();
            let only_w: Vec<AxisId> =
                w.axes.iter().filter(|x| !i.shape.contains_key(*x)).cloned().collect();
            let mut batch_s = batch.clone();
            batch_s.sort();
            let mut of_s = out_feature.clone();
            of_s.sort();
            if batch_s != only_i || of_s != only_w {
                return Err(Error::AxesMismatch("conv batch/out-feature axes".into()));
            }
            let spatial: Vec<AxisId> = {
                let mut v: Vec<AxisId> = strides.keys().cloned().collect();
                v.sort();
                v
            };
            for x in feature.iter().chain(spatial.iter()) {
                if !i.shape.contains_key(x) || !w.shape.contains_key(x) {
                    return Err(Error::AxesMismatch(format!(
                        "conv feature/spatial axis {x} not common"
                    )));
                }
            }
            for x in feature {
                validity.push(term::eq(&i.shape[x], &w.shape[x]));
            }
            for x in &spatial {
                validity.push(term::gt(&strides[x], &term::int(0)));
                validity.push(term::ge(&w.shape[x], &term::int(0)));
                validity.push(term::le(&w.shape[x], &i.shape[x]));
            }
            let mut out_shape = IMap::new();
            for x in batch {
                out_shape.insert(x.clone(), i.shape[x].clone());
            }
            for x in out_feature {
                out_shape.insert(x.clone(), w.shape[x].clone());
            }
            for x in &spatial {
                let free = term::sub(&i.shape[x], &w.shape[x]);
                out_shape.insert(
                    x.clone(),
                    term::add(&term::div(&free, &strides[x]), &term::int(1)),
                );
            }
            let red_axes: Vec<AxisId> = {
                let mut v: Vec<AxisId> = feature.iter().chain(spatial.iter()).cloned().collect();
                v.sort();
                v
            };
            let sizes: IMap = red_axes
                .iter()
                .map(|x| (x.clone(), w.shape[x].clone()))
                .collect();
            let i_axes = i.axes.clone();
            let w_axes = w.axes.clone();
            let spatial_set = spatial.clone();
            let strides = strides.clone();
            let indices = indices.clone();
            let (vi, vw, elem) = (i.value.clone(), w.value.clone(), i.elem);
            Ok(SymbolicTensor {
                axes: sorted_axes(&out_shape),
                shape: out_shape,
                elem,
                value: Arc::new(move |acc: &Access| {
                    let mut ridx = Vec::new();
                    let mut k = Access::new();
                    for x in &red_axes {
                        let name = indices[x].clone();
                        k.insert(x.clone(), term::sym(name.clone(), Kind::Int));
                        ridx.push(RedIndex {
                            name,
                            axis: x.clone(),
                            size: sizes[x].clone(),
                        });
                    }
                    // Input access: batch from A, feature = k_f,
                    // spatial = A*stride + k_sp.
                    let i_acc: Access = i_axes
                        .iter()
                        .map(|x| {
                            let idx = if spatial_set.contains(x) {
                                term::add(&term::mul(&acc[x], &strides[x]), &k[x])
                            } else if k.contains_key(x) {
                                k[x].clone()
                            } else {
                                acc[x].clone()
                            };
                            (x.clone(), idx)
                        })
                        .collect();
                    // Weight access: out-feature from A, feature/spatial = k.
                    let w_acc: Access = w_axes
                        .iter()
                        .map(|x| {
                            let idx = if k.contains_key(x) { k[x].clone() } else { acc[x].clone() };
                            (x.clone(), idx)
                        })
                        .collect();
                    let body = term::mul(&vi(&i_acc), &vw(&w_acc));
                    term::red(RedOp::Add, ridx, body, elem)
                }),
            })
        }
        IExpr::Reverse { input, axes } => {
            let t = eval(input, env, validity)?;
            for x in axes {
                if !t.shape.contains_key(x) {
                    return Err(Error::AxesMismatch(format!("reverse axis {x} not in input")));
                }
            }
            let rev: Vec<AxisId> = axes.clone();
            let shape = t.shape.clone();
            let inner = t.value.clone();
            Ok(SymbolicTensor {
                axes: t.axes.clone(),
                shape: t.shape.clone(),
                elem: t.elem,
                value: Arc::new(move |acc: &Access| {
                    let mapped: Access = acc
                        .iter()
                        .map(|(a, v)| {
                            let idx = if rev.contains(a) {
                                term::sub(&term::sub(&shape[a], v), &term::int(1))
                            } else {
                                v.clone()
                            };
                            (a.clone(), idx)
                        })
                        .collect();
                    inner(&mapped)
                }),
            })
        }
        IExpr::Select { pred, on_true, on_false } => {
            let p = eval(pred, env, validity)?;
            let a = eval(on_true, env, validity)?;
            let b = eval(on_false, env, validity)?;
            same_axes(&p, &a, "select")?;
            same_axes(&a, &b, "select")?;
            if p.elem != Kind::Bool {
                return Err(Error::DomainMismatch("select predicate must be boolean".into()));
            }
            if a.elem != b.elem {
                return Err(Error::DomainMismatch("select branch kinds differ".into()));
            }
            validity.push(fold2(&p.shape, &a.shape, |x, y| term::eq(x, y)));
            validity.push(fold2(&a.shape, &b.shape, |x, y| term::eq(x, y)));
            let (vp, va, vb) = (p.value.clone(), a.value.clone(), b.value.clone());
            Ok(SymbolicTensor {
                axes: a.axes.clone(),
                shape: a.shape.clone(),
                elem: a.elem,
                value: Arc::new(move |acc: &Access| term::ite(&vp(acc), &va(acc), &vb(acc))),
            })
        }
        IExpr::Clamp { min, input, max } => {
            // Desugared at instantiation; kept for direct construction.
            let lo = eval(min, env, validity)?;
            let t = eval(input, env, validity)?;
            let hi = eval(max, env, validity)?;
            same_axes(&lo, &t, "clamp")?;
            same_axes(&t, &hi, "clamp")?;
            validity.push(fold2(&lo.shape, &t.shape, |x, y| term::eq(x, y)));
            validity.push(fold2(&t.shape, &hi.shape, |x, y| term::eq(x, y)));
            let (vl, vt, vh) = (lo.value.clone(), t.value.clone(), hi.value.clone());
            Ok(SymbolicTensor {
                axes: t.axes.clone(),
                shape: t.shape.clone(),
                elem: t.elem,
                value: Arc::new(move |acc: &Access| {
                    term::min(&term::max(&vt(acc), &vl(acc)), &vh(acc))
                }),
            })
        }
    }
}

fn check_attr_axes(t: &SymbolicTensor, attr: &IMap, op: &str) -> Result<()> {
    if attr.len() != t.axes.len() || !t.axes.iter().all(|a| attr.contains_key(a)) {
        return Err(Error::DomainMismatch(format!(
            "{op}: attribute domain {:?} != tensor axes {:?}",
            attr.keys().collect::<Vec<_>>(),
            t.axes
        )));
    }
    Ok(())
}

fn binary_elem(op: BinOp, a: Kind, b: Kind) -> Result<Kind> {
    if op.is_bool() {
        if a == Kind::Bool && b == Kind::Bool {
            return Ok(Kind::Bool);
        }
        return Err(Error::DomainMismatch("boolean binary over non-boolean".into()));
    }
    if a == Kind::Bool || b == Kind::Bool || a != b {
        return Err(Error::DomainMismatch(format!("binary operand kinds {a:?} vs {b:?}")));
    }
    if op.is_cmp() {
        Ok(Kind::Bool)
    } else {
        Ok(a)
    }
}

fn apply_binop(op: BinOp, a: &TermRef, b: &TermRef) -> TermRef {
    match op {
        BinOp::Add => term::add(a, b),
        BinOp::Sub => term::sub(a, b),
        BinOp::Mul => term::mul(a, b),
        BinOp::Div => term::div(a, b),
        BinOp::Min => term::min(a, b),
        BinOp::Max => term::max(a, b),
        BinOp::And => term::and(vec![a.clone(), b.clone()]),
        BinOp::Or => term::or(vec![a.clone(), b.clone()]),
        BinOp::Eq => term::eq(a, b),
        BinOp::Ne => term::cmp(CmpOp::Ne, a, b),
        BinOp::Le => term::le(a, b),
        BinOp::Lt => term::lt(a, b),
        BinOp::Ge => term::ge(a, b),
        BinOp::Gt => term::gt(a, b),
    }
}

// ---------------------------------------------------------------------------
// Reduction-element normalization
// ---------------------------------------------------------------------------

/// Applies, to fixpoint, the three reduction-normalization rules:
/// `v * Red⁺_X f -> Red⁺_X (v*f)`, `Red⁺_X f * Red⁺_Y g -> Red⁺_{X,Y} (f*g)`,
/// and `Red^⊕_X (Red^⊕_Y f) -> Red^⊕_{X,Y} f`. All other terms pass through.
pub fn normalize_reductions(t: &TermRef) -> TermRef {
    match &**t {
        Term::Lin(l) => {
            let mut acc = term::num(l.kind, l.constant);
            for (mono, coeff) in &l.terms {
                acc = term::add(&acc, &normalize_monomial(mono, *coeff, l.kind));
            }
            acc
        }
        Term::Bool(_) => t.clone(),
        Term::Cmp(..) => t.clone(),
        Term::And(ts) => term::and(ts.iter().map(normalize_reductions).collect()),
        Term::Or(ts) => term::or(ts.iter().map(normalize_reductions).collect()),
        Term::Not(x) => term::not(&normalize_reductions(x)),
        Term::Exists(v, b) => term::exists(v.clone(), normalize_reductions(b)),
    }
}

/// Normalizes one monomial `coeff * a1 * ... * an`: additive reductions in
/// the product are merged and all reduction-free factors are pushed inside.
fn normalize_monomial(mono: &[Atom], coeff: i64, kind: Kind) -> TermRef {
    let mut reds: Vec<RedElem> = Vec::new();
    let mut outside = term::num(kind, coeff);
    for a in mono {
        let at = normalize_atom(a, kind);
        match single_add_red(&at) {
            Some(r) => reds.push(r),
            None => outside = term::mul(&outside, &at),
        }
    }
    if reds.is_empty() {
        return outside;
    }
    // Merge all additive reductions and the outside factor into one RedElem.
    let mut indices: Vec<RedIndex> = Vec::new();
    let mut body = outside;
    for (i, r) in reds.iter().enumerate() {
        // Rename bound indices on clash with already-merged ones.
        let mut rename: std::collections::HashMap<String, TermRef> =
            std::collections::HashMap::new();
        for idx in &r.indices {
            let clash = indices.iter().any(|x| x.name == idx.name);
            let name = if clash { format!("{}%m{i}", idx.name) } else { idx.name.clone() };
            if clash {
                rename.insert(idx.name.clone(), term::sym(name.clone(), Kind::Int));
            }
            indices.push(RedIndex { name, axis: idx.axis.clone(), size: idx.size.clone() });
        }
        let rb = if rename.is_empty() { r.body.clone() } else { term::subst_syms(&r.body, &rename) };
        body = term::mul(&body, &rb);
    }
    flatten_same_op(RedOp::Add, indices, body, kind)
}

/// Builds a RedElem, merging a directly-nested reduction of the same
/// operator into the outer index list (third normalization rule).
fn flatten_same_op(op: RedOp, mut indices: Vec<RedIndex>, body: TermRef, kind: Kind) -> TermRef {
    if let Some(r) = single_red_of(&body, op) {
        let clash: Vec<&RedIndex> =
            r.indices.iter().filter(|i| indices.iter().any(|x| x.name == i.name)).collect();
        if clash.is_empty() {
            indices.extend(r.indices.iter().cloned());
            return flatten_same_op(op, indices, r.body.clone(), kind);
        }
    }
    term::red(op, indices, body, kind)
}

/// Recognizes a term that is exactly one additive RedElem with unit
/// coefficient and no other summands.
fn single_add_red(t: &TermRef) -> Option<RedElem> {
    single_red_of(t, RedOp::Add)
}

fn single_red_of(t: &TermRef, op: RedOp) -> Option<RedElem> {
    if let Term::Lin(l) = &**t {
        if l.constant == 0 && l.terms.len() == 1 {
            let (mono, coeff) = l.terms.iter().next().unwrap();
            if *coeff == 1 && mono.len() == 1 {
                if let Atom::Red(r) = &mono[0] {
                    if r.op == op {
                        return Some(r.clone());
                    }
                }
            }
        }
    }
    None
}

/// Normalizes inside structural atoms (ite branches, div/mod operands, and
/// reduction bodies).
fn normalize_atom(a: &Atom, kind: Kind) -> TermRef {
    match a {
        Atom::Sym(n, k) => term::sym(n.clone(), *k),
        Atom::Div(x, y) => term::div(&normalize_reductions(x), &normalize_reductions(y)),
        Atom::Mod(x, y) => term::modulo(&normalize_reductions(x), &normalize_reductions(y)),
        Atom::Min(x, y) => term::min(&normalize_reductions(x), &normalize_reductions(y)),
        Atom::Max(x, y) => term::max(&normalize_reductions(x), &normalize_reductions(y)),
        Atom::Ite(c, x, y) => term::ite(
            &normalize_reductions(c),
            &normalize_reductions(x),
            &normalize_reductions(y),
        ),
        Atom::Read { tensor, indices } => term::read(
            tensor.clone(),
            indices.iter().map(normalize_reductions).collect(),
            kind,
        ),
        Atom::Red(r) => {
            let body = normalize_reductions(&r.body);
            let indices = r
                .indices
                .iter()
                .map(|i| RedIndex {
                    name: i.name.clone(),
                    axis: i.axis.clone(),
                    size: normalize_reductions(&i.size),
                })
                .collect();
            flatten_same_op(r.op, indices, body, kind)
        }
    }
}
