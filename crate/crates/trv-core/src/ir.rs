// SPDX-License-Identifier: Apache-2.0
//! Rank-polymorphic intermediate representation.
//!
//! Rules are written over *aggregated axes* (each belonging to one rank
//! class), with all per-axis attributes carried by *aggregated maps*. Map
//! values are combined only element-wise (`fmap` discipline): an
//! [`AggMapSpec`] assigns every aggregated axis a [`MapExpr`], an arithmetic
//! expression over declared maps that is later instantiated per named axis.
//! Preconditions are folds of pointwise comparisons over maps.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::term::{CmpOp, Kind, RedOp};
use crate::{Error, Result};

pub type RClassId = String;
pub type AggAxisId = String;
pub type MapId = String;
pub type TensorId = String;

/// Declaration block of a rule.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Decls {
    #[serde(default)]
    pub rclasses: Vec<RClassDecl>,
    #[serde(default)]
    pub axes: Vec<AggAxisDecl>,
    #[serde(default)]
    pub maps: Vec<MapDecl>,
    #[serde(default)]
    pub tensors: Vec<TensorDecl>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RClassDecl {
    pub id: RClassId,
    /// Singleton rank classes are pinned to rank 1 in every instantiation.
    /// Axes used by `iota` and `concat` must belong to a singleton class.
    #[serde(default)]
    pub singleton: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggAxisDecl {
    pub id: AggAxisId,
    pub rclass: RClassId,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MapDecl {
    pub id: MapId,
    /// Aggregated axes the map is defined over.
    pub axes: Vec<AggAxisId>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorDecl {
    pub id: TensorId,
    pub axes: Vec<AggAxisId>,
    #[serde(default = "default_elem")]
    pub elem: ElemKind,
}

fn default_elem() -> ElemKind {
    ElemKind::Int
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElemKind {
    Int,
    Bool,
    Real,
}

impl ElemKind {
    pub fn kind(self) -> Kind {
        match self {
            ElemKind::Int => Kind::Int,
            ElemKind::Bool => Kind::Bool,
            ElemKind::Real => Kind::Real,
        }
    }
}

/// Per-axis arithmetic over declared maps. Evaluated element-wise on every
/// named axis of the aggregated axis it is attached to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapExpr {
    /// Value of a declared map on the current axis.
    Map(MapId),
    /// Size of a tensor variable on the current axis.
    Shape(TensorId),
    /// A reduction-index symbol (valid only inside si-relation hints).
    Idx(String),
    Lit(i64),
    Add(Box<MapExpr>, Box<MapExpr>),
    Sub(Box<MapExpr>, Box<MapExpr>),
    Mul(Box<MapExpr>, Box<MapExpr>),
    Div(Box<MapExpr>, Box<MapExpr>),
    CeilDiv(Box<MapExpr>, Box<MapExpr>),
    Mod(Box<MapExpr>, Box<MapExpr>),
    Min(Box<MapExpr>, Box<MapExpr>),
    Max(Box<MapExpr>, Box<MapExpr>),
    Neg(Box<MapExpr>),
}

impl MapExpr {
    fn visit_refs(&self, f: &mut dyn FnMut(&MapExpr)) {
        f(self);
        match self {
            MapExpr::Add(a, b)
            | MapExpr::Sub(a, b)
            | MapExpr::Mul(a, b)
            | MapExpr::Div(a, b)
            | MapExpr::CeilDiv(a, b)
            | MapExpr::Mod(a, b)
            | MapExpr::Min(a, b)
            | MapExpr::Max(a, b) => {
                a.visit_refs(f);
                b.visit_refs(f);
            }
            MapExpr::Neg(a) => a.visit_refs(f),
            _ => {}
        }
    }
}

/// Assignment of a [`MapExpr`] to each aggregated axis of an attribute.
pub type AggMapSpec = BTreeMap<AggAxisId, MapExpr>;

/// Scalar literal used by `const`, `pad`, and `pad-low`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalarLit {
    Int(i64),
    Bool(bool),
    /// Real literal with integral value (sufficient for neutral elements).
    Real(i64),
}

impl ScalarLit {
    pub fn kind(&self) -> Kind {
        match self {
            ScalarLit::Int(_) => Kind::Int,
            ScalarLit::Bool(_) => Kind::Bool,
            ScalarLit::Real(_) => Kind::Real,
        }
    }
}

/// Element-wise binary operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Min,
    Max,
    And,
    Or,
    Eq,
    Ne,
    Le,
    Lt,
    Ge,
    Gt,
}

impl BinOp {
    pub fn is_cmp(self) -> bool {
        matches!(self, BinOp::Eq | BinOp::Ne | BinOp::Le | BinOp::Lt | BinOp::Ge | BinOp::Gt)
    }
    pub fn is_bool(self) -> bool {
        matches!(self, BinOp::And | BinOp::Or)
    }
}

/// Rewrite-rule expression tree over aggregated axes.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TensorExpr {
    Var(TensorId),
    Const {
        value: ScalarLit,
        shape: AggMapSpec,
    },
    Iota {
        shape: AggMapSpec,
        axis: AggAxisId,
    },
    Expand {
        input: Box<TensorExpr>,
        shape: AggMapSpec,
    },
    Binary {
        op: BinOp,
        lhs: Box<TensorExpr>,
        rhs: Box<TensorExpr>,
    },
    PadLow {
        input: Box<TensorExpr>,
        value: ScalarLit,
        low: AggMapSpec,
    },
    Pad {
        input: Box<TensorExpr>,
        value: ScalarLit,
        low: AggMapSpec,
        high: AggMapSpec,
        interior: AggMapSpec,
    },
    Slice {
        input: Box<TensorExpr>,
        start: AggMapSpec,
        end: AggMapSpec,
        stride: AggMapSpec,
    },
    DySlice {
        input: Box<TensorExpr>,
        start: AggMapSpec,
        size: AggMapSpec,
    },
    DyUpSlice {
        input: Box<TensorExpr>,
        update: Box<TensorExpr>,
        start: AggMapSpec,
    },
    Reduce {
        op: RedOp,
        input: Box<TensorExpr>,
        axes: Vec<AggAxisId>,
        /// Optional caller-chosen names for the symbolic reduction indices,
        /// one per reduced aggregated axis; referenced by si-relation hints.
        #[serde(default)]
        indices: BTreeMap<AggAxisId, String>,
    },
    Relabel {
        input: Box<TensorExpr>,
        /// Injective mapping old aggregated axis -> new aggregated axis
        /// (within the same rank class).
        mapping: BTreeMap<AggAxisId, AggAxisId>,
    },
    Concat {
        lhs: Box<TensorExpr>,
        rhs: Box<TensorExpr>,
        axis: AggAxisId,
    },
    Dot {
        lhs: Box<TensorExpr>,
        rhs: Box<TensorExpr>,
        #[serde(default)]
        contract: Vec<AggAxisId>,
        #[serde(default)]
        batch: Vec<AggAxisId>,
        #[serde(default)]
        indices: BTreeMap<AggAxisId, String>,
    },
    ConvBase {
        input: Box<TensorExpr>,
        weights: Box<TensorExpr>,
        batch: Vec<AggAxisId>,
        feature: Vec<AggAxisId>,
        out_feature: Vec<AggAxisId>,
        /// Window strides, one entry per spatial aggregated axis.
        strides: AggMapSpec,
        #[serde(default)]
        indices: BTreeMap<AggAxisId, String>,
    },
    Conv {
        input: Box<TensorExpr>,
        weights: Box<TensorExpr>,
        batch: Vec<AggAxisId>,
        feature: Vec<AggAxisId>,
        out_feature: Vec<AggAxisId>,
        low: AggMapSpec,
        high: AggMapSpec,
        /// Input (base) dilation factors, >= 1.
        input_dilation: AggMapSpec,
        /// Window dilation factors, >= 1.
        window_dilation: AggMapSpec,
        strides: AggMapSpec,
        #[serde(default)]
        indices: BTreeMap<AggAxisId, String>,
    },
    Reverse {
        input: Box<TensorExpr>,
        axes: Vec<AggAxisId>,
    },
    Select {
        pred: Box<TensorExpr>,
        on_true: Box<TensorExpr>,
        on_false: Box<TensorExpr>,
    },
    Clamp {
        min: Box<TensorExpr>,
        input: Box<TensorExpr>,
        max: Box<TensorExpr>,
    },
}

impl TensorExpr {
    pub fn children(&self) -> Vec<&TensorExpr> {
        match self {
            TensorExpr::Var(_) | TensorExpr::Const { .. } | TensorExpr::Iota { .. } => vec![],
            TensorExpr::Expand { input, .. }
            | TensorExpr::PadLow { input, .. }
            | TensorExpr::Pad { input, .. }
            | TensorExpr::Slice { input, .. }
            | TensorExpr::DySlice { input, .. }
            | TensorExpr::Reduce { input, .. }
            | TensorExpr::Relabel { input, .. }
            | TensorExpr::Reverse { input, .. } => vec![input],
            TensorExpr::Binary { lhs, rhs, .. }
            | TensorExpr::Concat { lhs, rhs, .. }
            | TensorExpr::Dot { lhs, rhs, .. } => vec![lhs, rhs],
            TensorExpr::DyUpSlice { input, update, .. } => vec![input, update],
            TensorExpr::ConvBase { input, weights, .. }
            | TensorExpr::Conv { input, weights, .. } => vec![input, weights],
            TensorExpr::Select { pred, on_true, on_false } => vec![pred, on_true, on_false],
            TensorExpr::Clamp { min, input, max } => vec![min, input, max],
        }
    }

    fn attr_specs(&self) -> Vec<&AggMapSpec> {
        match self {
            TensorExpr::Const { shape, .. } | TensorExpr::Iota { shape, .. } => vec![shape],
            TensorExpr::Expand { shape, .. } => vec![shape],
            TensorExpr::PadLow { low, .. } => vec![low],
            TensorExpr::Pad { low, high, interior, .. } => vec![low, high, interior],
            TensorExpr::Slice { start, end, stride, .. } => vec![start, end, stride],
            TensorExpr::DySlice { start, size, .. } => vec![start, size],
            TensorExpr::DyUpSlice { start, .. } => vec![start],
            TensorExpr::ConvBase { strides, .. } => vec![strides],
            TensorExpr::Conv { low, high, input_dilation, window_dilation, strides, .. } => {
                vec![low, high, input_dilation, window_dilation, strides]
            }
            _ => vec![],
        }
    }
}

/// Fold of a pointwise comparison over one or more aggregated axes; the
/// connective language is conjunction/disjunction for preconditions, with
/// negation additionally allowed inside si-relation hints.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formula {
    Atom { cmp: CmpOp, lhs: MapExpr, rhs: MapExpr, axes: Vec<AggAxisId> },
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Not(Box<Formula>),
}

impl Formula {
    fn visit_atoms(&self, f: &mut dyn FnMut(&MapExpr, &MapExpr, &[AggAxisId])) {
        match self {
            Formula::Atom { lhs, rhs, axes, .. } => f(lhs, rhs, axes),
            Formula::And(fs) | Formula::Or(fs) => {
                for x in fs {
                    x.visit_atoms(f);
                }
            }
            Formula::Not(x) => x.visit_atoms(f),
        }
    }

    fn contains_not(&self) -> bool {
        match self {
            Formula::Atom { .. } => false,
            Formula::And(fs) | Formula::Or(fs) => fs.iter().any(Formula::contains_not),
            Formula::Not(_) => true,
        }
    }
}

/// A user-supplied relation between the reduction indices of an LHS
/// reduction and an RHS reduction, used to discharge reduction elements.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SiHint {
    /// Names of the LHS reduction-index groups this hint covers.
    pub lhs_indices: Vec<String>,
    /// Names of the RHS reduction-index groups this hint covers.
    pub rhs_indices: Vec<String>,
    /// Relation between the index symbols (referenced via `MapExpr::Idx`)
    /// and rule attributes.
    pub relation: Formula,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RewriteRule {
    pub name: String,
    pub decls: Decls,
    pub lhs: TensorExpr,
    pub rhs: TensorExpr,
    #[serde(default)]
    pub preconditions: Vec<Formula>,
    #[serde(default)]
    pub si_hints: Vec<SiHint>,
}

impl RewriteRule {
    pub fn rclass_of(&self, axis: &str) -> Option<&str> {
        self.decls
            .axes
            .iter()
            .find(|a| a.id == axis)
            .map(|a| a.rclass.as_str())
    }

    pub fn is_singleton_rclass(&self, rclass: &str) -> bool {
        self.decls
            .rclasses
            .iter()
            .any(|c| c.id == rclass && c.singleton)
    }

    pub fn tensor(&self, id: &str) -> Option<&TensorDecl> {
        self.decls.tensors.iter().find(|t| t.id == id)
    }

    /// Aggregated axes of an expression's result, computed structurally.
    /// This is the engine-side axes function: failures here are structural
    /// and independent of any instantiation.
    pub fn axes_of(&self, e: &TensorExpr) -> Result<BTreeSet<AggAxisId>> {
        match e {
            TensorExpr::Var(id) => {
                let t = self
                    .tensor(id)
                    .ok_or_else(|| Error::UndeclaredIdentifier(id.clone()))?;
                Ok(t.axes.iter().cloned().collect())
            }
            TensorExpr::Const { shape, .. } | TensorExpr::Iota { shape, .. } => {
                Ok(shape.keys().cloned().collect())
            }
            TensorExpr::Expand { input, shape } => {
                let inner = self.axes_of(input)?;
                for x in shape.keys() {
                    if inner.contains(x) {
                        return Err(Error::AxesMismatch(format!(
                            "expand axis {x} already present in input"
                        )));
                    }
                }
                let mut out = inner;
                out.extend(shape.keys().cloned());
                Ok(out)
            }
            TensorExpr::Binary { lhs, rhs, .. } => {
                let a = self.axes_of(lhs)?;
                let b = self.axes_of(rhs)?;
                if a != b {
                    return Err(Error::AxesMismatch(format!(
                        "binary operands have different axes: {a:?} vs {b:?}"
                    )));
                }
                Ok(a)
            }
            TensorExpr::PadLow { input, .. }
            | TensorExpr::Pad { input, .. }
            | TensorExpr::Slice { input, .. }
            | TensorExpr::DySlice { input, .. }
            | TensorExpr::Reverse { input, .. } => self.axes_of(input),
            TensorExpr::DyUpSlice { input, update, .. } => {
                let a = self.axes_of(input)?;
                let b = self.axes_of(update)?;
                if a != b {
                    return Err(Error::AxesMismatch(format!(
                        "dyup-slice operand/update axes differ: {a:?} vs {b:?}"
                    )));
                }
                Ok(a)
            }
            TensorExpr::Reduce { input, axes, .. } => {
                let mut a = self.axes_of(input)?;
                for x in axes {
                    if !a.remove(x) {
                        return Err(Error::AxesMismatch(format!(
                            "reduce axis {x} not present in input"
                        )));
                    }
                }
                Ok(a)
            }
            TensorExpr::Relabel { input, mapping } => {
                let a = self.axes_of(input)?;
                let dom: BTreeSet<_> = mapping.keys().cloned().collect();
                if dom != a {
                    return Err(Error::AxesMismatch(format!(
                        "relabel domain {dom:?} != input axes {a:?}"
                    )));
                }
                let img: BTreeSet<_> = mapping.values().cloned().collect();
                if img.len() != mapping.len() {
                    return Err(Error::AxesMismatch("relabel map not injective".into()));
                }
                Ok(img)
            }
            TensorExpr::Concat { lhs, rhs, axis } => {
                let a = self.axes_of(lhs)?;
                let b = self.axes_of(rhs)?;
                if a != b {
                    return Err(Error::AxesMismatch(format!(
                        "concat operands have different axes: {a:?} vs {b:?}"
                    )));
                }
                if !a.contains(axis) {
                    return Err(Error::AxesMismatch(format!(
                        "concat axis {axis} not present in operands"
                    )));
                }
                Ok(a)
            }
            TensorExpr::Dot { lhs, rhs, contract, batch, .. } => {
                let a = self.axes_of(lhs)?;
                let b = self.axes_of(rhs)?;
                let common: BTreeSet<_> = a.intersection(&b).cloned().collect();
                let declared: BTreeSet<_> =
                    contract.iter().chain(batch.iter()).cloned().collect();
                if declared.len() != contract.len() + batch.len() {
                    return Err(Error::AxesMismatch(
                        "dot contracting and batch axes overlap".into(),
                    ));
                }
                if declared != common {
                    return Err(Error::AxesMismatch(format!(
                        "dot contracting+batch axes {declared:?} must equal common axes {common:?}"
                    )));
                }
                // Result: batch ++ both sides' spatial axes.
                let mut out: BTreeSet<_> = batch.iter().cloned().collect();
                out.extend(a.difference(&common).cloned());
                out.extend(b.difference(&common).cloned());
                Ok(out)
            }
            TensorExpr::ConvBase { input, weights, batch, feature, out_feature, strides, .. }
            | TensorExpr::Conv { input, weights, batch, feature, out_feature, strides, .. } => {
                let xi = self.axes_of(input)?;
                let xw = self.axes_of(weights)?;
                let b: BTreeSet<_> = batch.iter().cloned().collect();
                let f: BTreeSet<_> = feature.iter().cloned().collect();
                let o: BTreeSet<_> = out_feature.iter().cloned().collect();
                let only_i: BTreeSet<_> = xi.difference(&xw).cloned().collect();
                let only_w: BTreeSet<_> = xw.difference(&xi).cloned().collect();
                if only_i != b {
                    return Err(Error::AxesMismatch(format!(
                        "conv batch axes {b:?} must equal input-only axes {only_i:?}"
                    )));
                }
                if only_w != o {
                    return Err(Error::AxesMismatch(format!(
                        "conv output-feature axes {o:?} must equal weight-only axes {only_w:?}"
                    )));
                }
                let common: BTreeSet<_> = xi.intersection(&xw).cloned().collect();
                if !f.is_subset(&common) {
                    return Err(Error::AxesMismatch(
                        "conv feature axes must be common to input and weights".into(),
                    ));
                }
                let spatial: BTreeSet<_> = common.difference(&f).cloned().collect();
                let stride_dom: BTreeSet<_> = strides.keys().cloned().collect();
                if stride_dom != spatial {
                    return Err(Error::AxesMismatch(format!(
                        "conv stride domain {stride_dom:?} must equal spatial axes {spatial:?}"
                    )));
                }
                let mut out = b;
                out.extend(o);
                out.extend(spatial);
                Ok(out)
            }
            TensorExpr::Select { pred, on_true, on_false } => {
                let p = self.axes_of(pred)?;
                let a = self.axes_of(on_true)?;
                let b = self.axes_of(on_false)?;
                if p != a || a != b {
                    return Err(Error::AxesMismatch(
                        "select operands have different axes".into(),
                    ));
                }
                Ok(a)
            }
            TensorExpr::Clamp { min, input, max } => {
                let lo = self.axes_of(min)?;
                let a = self.axes_of(input)?;
                let hi = self.axes_of(max)?;
                if lo != a || a != hi {
                    return Err(Error::AxesMismatch(
                        "clamp operands have different axes".into(),
                    ));
                }
                Ok(a)
            }
        }
    }
}

/// Builds and validates a rewrite rule: unique declarations, no dangling
/// references, fmap/fold domain discipline, singleton-axis constraints, and
/// structurally consistent axes on both sides.
pub fn build_rule(
    name: impl Into<String>,
    decls: Decls,
    lhs: TensorExpr,
    rhs: TensorExpr,
    preconditions: Vec<Formula>,
    si_hints: Vec<SiHint>,
) -> Result<RewriteRule> {
    let rule = RewriteRule {
        name: name.into(),
        decls,
        lhs,
        rhs,
        preconditions,
        si_hints,
    };
    check_decls(&rule)?;
    check_expr(&rule, &rule.lhs)?;
    check_expr(&rule, &rule.rhs)?;
    rule.axes_of(&rule.lhs)?;
    rule.axes_of(&rule.rhs)?;
    for (i, p) in rule.preconditions.iter().enumerate() {
        if p.contains_not() {
            return Err(Error::DomainMismatch(format!(
                "precondition {i}: negation is not allowed in preconditions"
            )));
        }
        check_formula(&rule, p, false)?;
    }
    for h in &rule.si_hints {
        check_formula(&rule, &h.relation, true)?;
    }
    Ok(rule)
}

fn check_decls(rule: &RewriteRule) -> Result<()> {
    let mut seen: BTreeSet<&str> = BTreeSet::new();
    for id in rule
        .decls
        .rclasses
        .iter()
        .map(|c| c.id.as_str())
        .chain(rule.decls.axes.iter().map(|a| a.id.as_str()))
        .chain(rule.decls.maps.iter().map(|m| m.id.as_str()))
        .chain(rule.decls.tensors.iter().map(|t| t.id.as_str()))
    {
        if !seen.insert(id) {
            return Err(Error::DuplicateDeclaration(id.to_string()));
        }
    }
    for a in &rule.decls.axes {
        if !rule.decls.rclasses.iter().any(|c| c.id == a.rclass) {
            return Err(Error::UndeclaredIdentifier(a.rclass.clone()));
        }
    }
    for m in &rule.decls.maps {
        for x in &m.axes {
            if !rule.decls.axes.iter().any(|a| &a.id == x) {
                return Err(Error::UndeclaredIdentifier(x.clone()));
            }
        }
    }
    for t in &rule.decls.tensors {
        let mut ax = BTreeSet::new();
        for x in &t.axes {
            if !rule.decls.axes.iter().any(|a| &a.id == x) {
                return Err(Error::UndeclaredIdentifier(x.clone()));
            }
            if !ax.insert(x) {
                return Err(Error::DuplicateDeclaration(format!(
                    "tensor {} repeats axis {x}",
                    t.id
                )));
            }
        }
    }
    Ok(())
}

/// Checks one MapExpr in the context of a single aggregated axis: every
/// referenced map/tensor must be declared over that axis.
fn check_map_expr(rule: &RewriteRule, e: &MapExpr, axis: &str, allow_idx: bool) -> Result<()> {
    let mut err = None;
    e.visit_refs(&mut |node| {
        if err.is_some() {
            return;
        }
        match node {
            MapExpr::Map(m) => match rule.decls.maps.iter().find(|d| &d.id == m) {
                None => err = Some(Error::UndeclaredIdentifier(m.clone())),
                Some(d) if !d.axes.iter().any(|a| a == axis) => {
                    err = Some(Error::DomainMismatch(format!(
                        "map {m} is not defined over axis {axis}"
                    )))
                }
                _ => {}
            },
            MapExpr::Shape(t) => match rule.tensor(t) {
                None => err = Some(Error::UndeclaredIdentifier(t.clone())),
                Some(d) if !d.axes.iter().any(|a| a == axis) => {
                    err = Some(Error::DomainMismatch(format!(
                        "tensor {t} has no axis {axis}"
                    )))
                }
                _ => {}
            },
            MapExpr::Idx(n) if !allow_idx => {
                err = Some(Error::HintReferencesUnknownIndex(format!(
                    "index symbol {n} outside an si-relation hint"
                )))
            }
            _ => {}
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn check_axis_declared(rule: &RewriteRule, axis: &str) -> Result<()> {
    if rule.decls.axes.iter().any(|a| a.id == axis) {
        Ok(())
    } else {
        Err(Error::UndeclaredIdentifier(axis.to_string()))
    }
}

fn check_spec(rule: &RewriteRule, spec: &AggMapSpec, allow_idx: bool) -> Result<()> {
    for (axis, e) in spec {
        check_axis_declared(rule, axis)?;
        check_map_expr(rule, e, axis, allow_idx)?;
    }
    Ok(())
}

fn check_singleton(rule: &RewriteRule, axis: &str, what: &str) -> Result<()> {
    let rc = rule
        .rclass_of(axis)
        .ok_or_else(|| Error::UndeclaredIdentifier(axis.to_string()))?;
    if rule.is_singleton_rclass(rc) {
        Ok(())
    } else {
        Err(Error::NonSingletonAxis(format!("{what} axis {axis}")))
    }
}

fn check_expr(rule: &RewriteRule, e: &TensorExpr) -> Result<()> {
    for spec in e.attr_specs() {
        check_spec(rule, spec, false)?;
    }
    match e {
        TensorExpr::Var(id) => {
            rule.tensor(id)
                .ok_or_else(|| Error::UndeclaredIdentifier(id.clone()))?;
        }
        TensorExpr::Iota { axis, .. } => check_singleton(rule, axis, "iota")?,
        TensorExpr::Concat { axis, .. } => check_singleton(rule, axis, "concat")?,
        TensorExpr::Reduce { axes, .. } | TensorExpr::Reverse { axes, .. } => {
            for x in axes {
                check_axis_declared(rule, x)?;
            }
        }
        TensorExpr::Relabel { mapping, .. } => {
            for (from, to) in mapping {
                check_axis_declared(rule, from)?;
                check_axis_declared(rule, to)?;
                let (rf, rt) = (rule.rclass_of(from), rule.rclass_of(to));
                if rf != rt {
                    return Err(Error::RClassMismatch(format!(
                        "relabel {from} -> {to} crosses rank classes"
                    )));
                }
            }
        }
        TensorExpr::Dot { contract, batch, .. } => {
            for x in contract.iter().chain(batch.iter()) {
                check_axis_declared(rule, x)?;
            }
        }
        TensorExpr::ConvBase { batch, feature, out_feature, .. }
        | TensorExpr::Conv { batch, feature, out_feature, .. } => {
            for x in batch.iter().chain(feature.iter()).chain(out_feature.iter()) {
                check_axis_declared(rule, x)?;
            }
        }
        _ => {}
    }
    for c in e.children() {
        check_expr(rule, c)?;
    }
    Ok(())
}

fn check_formula(rule: &RewriteRule, f: &Formula, allow_idx: bool) -> Result<()> {
    let mut err = None;
    f.visit_atoms(&mut |lhs, rhs, axes| {
        if err.is_some() {
            return;
        }
        if axes.is_empty() {
            err = Some(Error::DomainMismatch("fold atom over empty axis list".into()));
            return;
        }
        for axis in axes {
            if let Err(e) = check_axis_declared(rule, axis)
                .and_then(|_| check_map_expr(rule, lhs, axis, allow_idx))
                .and_then(|_| check_map_expr(rule, rhs, axis, allow_idx))
            {
                err = Some(e);
                return;
            }
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(()),
    }
}
