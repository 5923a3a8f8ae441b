// SPDX-License-Identifier: Apache-2.0
//! Rule instantiation at a concrete rank tuple.
//!
//! Every aggregated axis of rank class `c` expands into `rank(c)` fresh
//! named axes `<agg>.<k>`. Maps become per-axis symbol families named
//! `<map>.<axis>.<task>`, fold atoms expand into rank-many conjuncts, and
//! relabel maps expand via the positional canonical bijection
//! `x.k -> y.k`. `conv` and `clamp` are desugared here into their defining
//! compositions (`pad` + `conv-base`, `min`/`max`).

use std::collections::BTreeMap;

use crate::ir::{
    AggAxisId, AggMapSpec, BinOp, Formula, MapExpr, RClassId, RewriteRule, ScalarLit, TensorExpr,
    TensorId,
};
use crate::term::{self, Kind, RedOp, TermRef};
use crate::{Error, Result};

/// A named axis after instantiation, formatted `<agg-axis>.<position>`.
pub type AxisId = String;

/// Instantiated per-axis attribute values.
pub type IMap = BTreeMap<AxisId, TermRef>;

#[derive(Debug, Clone)]
pub struct Instantiation {
    pub ranks: BTreeMap<RClassId, usize>,
    pub axes: BTreeMap<AggAxisId, Vec<AxisId>>,
    /// Task tag appended to every symbol name, keeping tasks disjoint.
    pub task: String,
}

impl Instantiation {
    pub fn axes_of(&self, agg: &str) -> &[AxisId] {
        self.axes.get(agg).map(|v| v.as_slice()).unwrap_or(&[])
    }

    /// Flattens a list of aggregated axes into named axes, in declaration
    /// order of the list and positional order within each aggregate.
    pub fn expand_axes(&self, aggs: &[AggAxisId]) -> Vec<AxisId> {
        aggs.iter().flat_map(|x| self.axes_of(x).iter().cloned()).collect()
    }
}

/// Instantiated expression tree: concrete named axes, symbolic sizes.
#[derive(Debug, Clone)]
pub enum IExpr {
    Var(TensorId),
    Const { value: ScalarLit, shape: IMap },
    Iota { shape: IMap, axis: AxisId },
    Expand { input: Box<IExpr>, shape: IMap },
    Binary { op: BinOp, lhs: Box<IExpr>, rhs: Box<IExpr> },
    PadLow { input: Box<IExpr>, value: ScalarLit, low: IMap },
    Pad { input: Box<IExpr>, value: ScalarLit, low: IMap, high: IMap, interior: IMap },
    Slice { input: Box<IExpr>, start: IMap, end: IMap, stride: IMap },
    DySlice { input: Box<IExpr>, start: IMap, size: IMap },
    DyUpSlice { input: Box<IExpr>, update: Box<IExpr>, start: IMap },
    Reduce { op: RedOp, input: Box<IExpr>, axes: Vec<AxisId>, indices: BTreeMap<AxisId, String> },
    Relabel { input: Box<IExpr>, mapping: BTreeMap<AxisId, AxisId> },
    Concat { lhs: Box<IExpr>, rhs: Box<IExpr>, axis: AxisId },
    Dot {
        lhs: Box<IExpr>,
        rhs: Box<IExpr>,
        contract: Vec<AxisId>,
        batch: Vec<AxisId>,
        indices: BTreeMap<AxisId, String>,
    },
    ConvBase {
        input: Box<IExpr>,
        weights: Box<IExpr>,
        batch: Vec<AxisId>,
        feature: Vec<AxisId>,
        out_feature: Vec<AxisId>,
        strides: IMap,
        indices: BTreeMap<AxisId, String>,
    },
    Reverse { input: Box<IExpr>, axes: Vec<AxisId> },
    Select { pred: Box<IExpr>, on_true: Box<IExpr>, on_false: Box<IExpr> },
    Clamp { min: Box<IExpr>, input: Box<IExpr>, max: Box<IExpr> },
}

/// Declared signature of a tensor variable after instantiation.
#[derive(Debug, Clone)]
pub struct VarSig {
    pub axes: Vec<AxisId>,
    pub shape: IMap,
    pub elem: Kind,
}

#[derive(Debug, Clone)]
pub struct InstRule {
    pub name: String,
    pub lhs: IExpr,
    pub rhs: IExpr,
    /// Conjunction of all instantiated preconditions.
    pub precond: TermRef,
    pub env: BTreeMap<TensorId, VarSig>,
    pub inst: Instantiation,
}

/// Symbol name of map `m` on named axis `a` in task `t`.
pub fn map_sym(m: &str, axis: &str, task: &str) -> String {
    format!("{m}.{axis}.{task}")
}

/// Symbol name of tensor `t`'s size on named axis `a` in task `task`.
pub fn shape_sym(tensor: &str, axis: &str, task: &str) -> String {
    format!("{tensor}.S.{axis}.{task}")
}

/// Instantiates a rule at the given ranks. Singleton rank classes are
/// pinned to rank 1 regardless of the requested map.
pub fn instantiate(
    rule: &RewriteRule,
    ranks: &BTreeMap<RClassId, usize>,
    task: &str,
) -> Result<InstRule> {
    let mut eff_ranks: BTreeMap<RClassId, usize> = BTreeMap::new();
    for c in &rule.decls.rclasses {
        let r = if c.singleton { 1 } else { *ranks.get(&c.id).unwrap_or(&1) };
        if r == 0 {
            return Err(Error::RankZero);
        }
        eff_ranks.insert(c.id.clone(), r);
    }
    let mut axes: BTreeMap<AggAxisId, Vec<AxisId>> = BTreeMap::new();
    for a in &rule.decls.axes {
        let r = eff_ranks[&a.rclass];
        axes.insert(a.id.clone(), (0..r).map(|k| format!("{}.{k}", a.id)).collect());
    }
    let inst = Instantiation { ranks: eff_ranks, axes, task: task.to_string() };

    let mut env = BTreeMap::new();
    for t in &rule.decls.tensors {
        let named = inst.expand_axes(&t.axes);
        let shape: IMap = named
            .iter()
            .map(|a| (a.clone(), term::sym(shape_sym(&t.id, a, task), Kind::Int)))
            .collect();
        env.insert(t.id.clone(), VarSig { axes: named, shape, elem: t.elem.kind() });
    }

    let mut ctx = Ctx { rule, inst: &inst, fresh: 0 };
    let lhs = ctx.expr(&rule.lhs)?;
    let rhs = ctx.expr(&rule.rhs)?;
    let precond = term::and(
        rule.preconditions
            .iter()
            .map(|p| ctx.formula(p))
            .collect::<Result<Vec<_>>>()?,
    );

    Ok(InstRule { name: rule.name.clone(), lhs, rhs, precond, env, inst })
}

/// Instantiates an si-relation formula (which may reference reduction-index
/// symbols via `MapExpr::Idx`) in the same symbol namespace as a rule
/// instantiation.
pub fn instantiate_formula(rule: &RewriteRule, inst: &Instantiation, f: &Formula) -> Result<TermRef> {
    let mut ctx = Ctx { rule, inst, fresh: 0 };
    ctx.formula(f)
}

/// Symbol name of reduction-index group `name` on named axis `a`.
pub fn index_sym(name: &str, axis: &str, task: &str) -> String {
    format!("{name}.{axis}.{task}")
}

struct Ctx<'a> {
    rule: &'a RewriteRule,
    inst: &'a Instantiation,
    fresh: usize,
}

impl<'a> Ctx<'a> {
    fn map_expr(&self, e: &MapExpr, axis: &str) -> TermRef {
        let t = &self.inst.task;
        match e {
            MapExpr::Map(m) => term::sym(map_sym(m, axis, t), Kind::Int),
            MapExpr::Shape(tensor) => term::sym(shape_sym(tensor, axis, t), Kind::Int),
            MapExpr::Idx(n) => term::sym(index_sym(n, axis, t), Kind::Int),
            MapExpr::Lit(v) => term::int(*v),
            MapExpr::Add(a, b) => term::add(&self.map_expr(a, axis), &self.map_expr(b, axis)),
            MapExpr::Sub(a, b) => term::sub(&self.map_expr(a, axis), &self.map_expr(b, axis)),
            MapExpr::Mul(a, b) => term::mul(&self.map_expr(a, axis), &self.map_expr(b, axis)),
            MapExpr::Div(a, b) => term::div(&self.map_expr(a, axis), &self.map_expr(b, axis)),
            MapExpr::CeilDiv(a, b) => {
                term::ceil_div(&self.map_expr(a, axis), &self.map_expr(b, axis))
            }
            MapExpr::Mod(a, b) => term::modulo(&self.map_expr(a, axis), &self.map_expr(b, axis)),
            MapExpr::Min(a, b) => term::min(&self.map_expr(a, axis), &self.map_expr(b, axis)),
            MapExpr::Max(a, b) => term::max(&self.map_expr(a, axis), &self.map_expr(b, axis)),
            MapExpr::Neg(a) => term::neg(&self.map_expr(a, axis)),
        }
    }

    fn spec(&self, spec: &AggMapSpec) -> IMap {
        let mut out = IMap::new();
        for (agg, e) in spec {
            for a in self.inst.axes_of(agg) {
                out.insert(a.clone(), self.map_expr(e, a));
            }
        }
        out
    }

    fn formula(&mut self, f: &Formula) -> Result<TermRef> {
        Ok(match f {
            Formula::Atom { cmp, lhs, rhs, axes } => {
                let mut conj = Vec::new();
                for agg in axes {
                    for a in self.inst.axes_of(agg) {
                        conj.push(term::cmp(*cmp, &self.map_expr(lhs, a), &self.map_expr(rhs, a)));
                    }
                }
                term::and(conj)
            }
            Formula::And(fs) => {
                term::and(fs.iter().map(|x| self.formula(x)).collect::<Result<Vec<_>>>()?)
            }
            Formula::Or(fs) => {
                term::or(fs.iter().map(|x| self.formula(x)).collect::<Result<Vec<_>>>()?)
            }
            Formula::Not(x) => term::not(&self.formula(x)?),
        })
    }

    fn singleton_axis(&self, agg: &str, what: &str) -> Result<AxisId> {
        let named = self.inst.axes_of(agg);
        if named.len() != 1 {
            return Err(Error::NonSingletonAxis(format!("{what} axis {agg}")));
        }
        Ok(named[0].clone())
    }

    fn indices(&mut self, aggs: &[AggAxisId], named: &BTreeMap<AggAxisId, String>)
        -> BTreeMap<AxisId, String>
    {
        let mut out = BTreeMap::new();
        for agg in aggs {
            let base = match named.get(agg) {
                Some(n) => n.clone(),
                None => {
                    self.fresh += 1;
                    format!("%r{}", self.fresh)
                }
            };
            for a in self.inst.axes_of(agg) {
                out.insert(a.clone(), index_sym(&base, a, &self.inst.task));
            }
        }
        out
    }

    fn expr(&mut self, e: &TensorExpr) -> Result<IExpr> {
        Ok(match e {
            TensorExpr::Var(id) => IExpr::Var(id.clone()),
            TensorExpr::Const { value, shape } => {
                IExpr::Const { value: *value, shape: self.spec(shape) }
            }
            TensorExpr::Iota { shape, axis } => IExpr::Iota {
                shape: self.spec(shape),
                axis: self.singleton_axis(axis, "iota")?,
            },
            TensorExpr::Expand { input, shape } => {
                IExpr::Expand { input: Box::new(self.expr(input)?), shape: self.spec(shape) }
            }
            TensorExpr::Binary { op, lhs, rhs } => IExpr::Binary {
                op: *op,
                lhs: Box::new(self.expr(lhs)?),
                rhs: Box::new(self.expr(rhs)?),
            },
            TensorExpr::PadLow { input, value, low } => IExpr::PadLow {
                input: Box::new(self.expr(input)?),
                value: *value,
                low: self.spec(low),
            },
            TensorExpr::Pad { input, value, low, high, interior } => IExpr::Pad {
                input: Box::new(self.expr(input)?),
                value: *value,
                low: self.spec(low),
                high: self.spec(high),
                interior: self.spec(interior),
            },
            TensorExpr::Slice { input, start, end, stride } => IExpr::Slice {
                input: Box::new(self.expr(input)?),
                start: self.spec(start),
                end: self.spec(end),
                stride: self.spec(stride),
            },
            TensorExpr::DySlice { input, start, size } => IExpr::DySlice {
                input: Box::new(self.expr(input)?),
                start: self.spec(start),
                size: self.spec(size),
            },
            TensorExpr::DyUpSlice { input, update, start } => IExpr::DyUpSlice {
                input: Box::new(self.expr(input)?),
                update: Box::new(self.expr(update)?),
                start: self.spec(start),
            },
            TensorExpr::Reduce { op, input, axes, indices } => {
                let named = self.indices(axes, indices);
                IExpr::Reduce {
                    op: *op,
                    input: Box::new(self.expr(input)?),
                    axes: self.inst.expand_axes(axes),
                    indices: named,
                }
            }
            TensorExpr::Relabel { input, mapping } => {
                let mut m = BTreeMap::new();
                for (from, to) in mapping {
                    if self.rule.rclass_of(from) != self.rule.rclass_of(to) {
                        return Err(Error::RClassMismatch(format!("relabel {from} -> {to}")));
                    }
                    let fa = self.inst.axes_of(from).to_vec();
                    let ta = self.inst.axes_of(to).to_vec();
                    // Positional canonical bijection.
                    for (f, t) in fa.iter().zip(ta.iter()) {
                        m.insert(f.clone(), t.clone());
                    }
                }
                IExpr::Relabel { input: Box::new(self.expr(input)?), mapping: m }
            }
            TensorExpr::Concat { lhs, rhs, axis } => IExpr::Concat {
                lhs: Box::new(self.expr(lhs)?),
                rhs: Box::new(self.expr(rhs)?),
                axis: self.singleton_axis(axis, "concat")?,
            },
            TensorExpr::Dot { lhs, rhs, contract, batch, indices } => {
                let named = self.indices(contract, indices);
                IExpr::Dot {
                    lhs: Box::new(self.expr(lhs)?),
                    rhs: Box::new(self.expr(rhs)?),
                    contract: self.inst.expand_axes(contract),
                    batch: self.inst.expand_axes(batch),
                    indices: named,
                }
            }
            TensorExpr::ConvBase { input, weights, batch, feature, out_feature, strides, indices } => {
                self.conv_base(input, weights, batch, feature, out_feature, strides, indices, None)?
            }
            TensorExpr::Conv {
                input,
                weights,
                batch,
                feature,
                out_feature,
                low,
                high,
                input_dilation,
                window_dilation,
                strides,
                indices,
            } => {
                // conv(e_i, e_w, ...) desugars to
                // conv-base(pad(e_i, 0, low, high, input_dilation - 1),
                //           pad(e_w, 0, 0, 0, window_dilation - 1), ...).
                let spatial: Vec<AggAxisId> = strides.keys().cloned().collect();
                let zero = |aggs: &[AggAxisId]| -> AggMapSpec {
                    aggs.iter().map(|x| (x.clone(), MapExpr::Lit(0))).collect()
                };
                let minus_one = |spec: &AggMapSpec| -> AggMapSpec {
                    spec.iter()
                        .map(|(x, e)| {
                            (x.clone(), MapExpr::Sub(Box::new(e.clone()), Box::new(MapExpr::Lit(1))))
                        })
                        .collect()
                };
                // Non-spatial axes of each operand get neutral pad attributes.
                let widen = |spec: &AggMapSpec, all: &[AggAxisId], neutral: i64| -> AggMapSpec {
                    let mut out: AggMapSpec =
                        all.iter().map(|x| (x.clone(), MapExpr::Lit(neutral))).collect();
                    for (x, e) in spec {
                        out.insert(x.clone(), e.clone());
                    }
                    out
                };
                let in_axes: Vec<AggAxisId> =
                    self.rule.axes_of(input)?.into_iter().collect();
                let w_axes: Vec<AggAxisId> =
                    self.rule.axes_of(weights)?.into_iter().collect();
                let value = ScalarLit::Int(0);
                let padded_in = TensorExpr::Pad {
                    input: input.clone(),
                    value,
                    low: widen(low, &in_axes, 0),
                    high: widen(high, &in_axes, 0),
                    interior: widen(&minus_one(input_dilation), &in_axes, 0),
                };
                let padded_w = TensorExpr::Pad {
                    input: weights.clone(),
                    value,
                    low: zero(&w_axes),
                    high: zero(&w_axes),
                    interior: widen(&minus_one(window_dilation), &w_axes, 0),
                };
                // Dilations are required to be >= 1 so the desugared interior
                // padding is >= 0; recorded as extra validity by conv-base's
                // pad children.
                let _ = spatial;
                self.conv_base(
                    &padded_in,
                    &padded_w,
                    batch,
                    feature,
                    out_feature,
                    strides,
                    indices,
                    None,
                )?
            }
            TensorExpr::Reverse { input, axes } => IExpr::Reverse {
                input: Box::new(self.expr(input)?),
                axes: self.inst.expand_axes(axes),
            },
            TensorExpr::Select { pred, on_true, on_false } => IExpr::Select {
                pred: Box::new(self.expr(pred)?),
                on_true: Box::new(self.expr(on_true)?),
                on_false: Box::new(self.expr(on_false)?),
            },
            TensorExpr::Clamp { min, input, max } => {
                // clamp(lo, e, hi) = min(max(e, lo), hi)
                IExpr::Binary {
                    op: BinOp::Min,
                    lhs: Box::new(IExpr::Binary {
                        op: BinOp::Max,
                        lhs: Box::new(self.expr(input)?),
                        rhs: Box::new(self.expr(min)?),
                    }),
                    rhs: Box::new(self.expr(max)?),
                }
            }
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn conv_base(
        &mut self,
        input: &TensorExpr,
        weights: &TensorExpr,
        batch: &[AggAxisId],
        feature: &[AggAxisId],
        out_feature: &[AggAxisId],
        strides: &AggMapSpec,
        indices: &BTreeMap<AggAxisId, String>,
        _unused: Option<()>,
    ) -> Result<IExpr> {
        let spatial: Vec<AggAxisId> = strides.keys().cloned().collect();
        let mut red_aggs: Vec<AggAxisId> = feature.to_vec();
        red_aggs.extend(spatial.iter().cloned());
        let named = self.indices(&red_aggs, indices);
        Ok(IExpr::ConvBase {
            input: Box::new(self.expr(input)?),
            weights: Box::new(self.expr(weights)?),
            batch: self.inst.expand_axes(batch),
            feature: self.inst.expand_axes(feature),
            out_feature: self.inst.expand_axes(out_feature),
            strides: self.spec(strides),
            indices: named,
        })
    }
}
