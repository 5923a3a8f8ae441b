// SPDX-License-Identifier: Apache-2.0
//! Concrete reference interpreter and differential-testing oracle.
//!
//! The interpreter executes the operator semantics with explicit loops over
//! fully concrete tensors; it is written independently of the symbolic
//! evaluator so the two can cross-check each other. This module also houses
//! the scalar-term evaluator used to replay solver models, and the seeded
//! differential tester that compares both rule sides on random inputs.

use std::collections::BTreeMap;

use num::{BigInt, BigRational, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::instantiate::{self, AxisId, IExpr, IMap, InstRule};
use crate::ir::{BinOp, RClassId, RewriteRule, ScalarLit};
use crate::term::{self, Atom, CmpShape, Kind, RedOp, Term, TermRef};
use crate::{Error, Result};

/// A concrete scalar element.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Value {
    Int(i64),
    Bool(bool),
    Real(BigRational),
}

impl Value {
    pub fn as_int(&self) -> Result<i64> {
        match self {
            Value::Int(v) => Ok(*v),
            _ => Err(Error::ValidityViolation(format!("expected integer, got {self:?}"))),
        }
    }

    pub fn as_bool(&self) -> Result<bool> {
        match self {
            Value::Bool(b) => Ok(*b),
            _ => Err(Error::ValidityViolation(format!("expected boolean, got {self:?}"))),
        }
    }

    fn as_rational(&self) -> Result<BigRational> {
        match self {
            Value::Int(v) => Ok(BigRational::from(BigInt::from(*v))),
            Value::Real(r) => Ok(r.clone()),
            Value::Bool(_) => {
                Err(Error::ValidityViolation("boolean in numeric position".into()))
            }
        }
    }

    fn lift2(
        a: &Value,
        b: &Value,
        fi: impl Fn(i64, i64) -> i64,
        fr: impl Fn(&BigRational, &BigRational) -> BigRational,
    ) -> Result<Value> {
        match (a, b) {
            (Value::Int(x), Value::Int(y)) => Ok(Value::Int(fi(*x, *y))),
            _ => Ok(Value::Real(fr(&a.as_rational()?, &b.as_rational()?))),
        }
    }

    pub fn add(a: &Value, b: &Value) -> Result<Value> {
        Value::lift2(a, b, |x, y| x + y, |x, y| x + y)
    }
    pub fn sub(a: &Value, b: &Value) -> Result<Value> {
        Value::lift2(a, b, |x, y| x - y, |x, y| x - y)
    }
    pub fn mul(a: &Value, b: &Value) -> Result<Value> {
        Value::lift2(a, b, |x, y| x * y, |x, y| x * y)
    }
    pub fn min_v(a: &Value, b: &Value) -> Result<Value> {
        Ok(if Value::lt_v(a, b)? { a.clone() } else { b.clone() })
    }
    pub fn max_v(a: &Value, b: &Value) -> Result<Value> {
        Ok(if Value::lt_v(a, b)? { b.clone() } else { a.clone() })
    }
    pub fn lt_v(a: &Value, b: &Value) -> Result<bool> {
        match (a, b) {
            (Value::Int(x), Value::Int(y)) => Ok(x < y),
            _ => Ok(a.as_rational()? < b.as_rational()?),
        }
    }
    pub fn eq_v(a: &Value, b: &Value) -> Result<bool> {
        match (a, b) {
            (Value::Bool(x), Value::Bool(y)) => Ok(x == y),
            (Value::Int(x), Value::Int(y)) => Ok(x == y),
            (Value::Bool(_), _) | (_, Value::Bool(_)) => {
                Err(Error::ValidityViolation("comparing boolean with number".into()))
            }
            _ => Ok(a.as_rational()? == b.as_rational()?),
        }
    }
}

/// A dense concrete tensor, row-major over sorted axes.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcreteTensor {
    pub axes: Vec<AxisId>,
    pub sizes: BTreeMap<AxisId, i64>,
    pub data: Vec<Value>,
}

impl ConcreteTensor {
    pub fn new(sizes: BTreeMap<AxisId, i64>, data: Vec<Value>) -> Result<Self> {
        let axes: Vec<AxisId> = sizes.keys().cloned().collect();
        let n: i64 = sizes.values().product();
        if n < 0 || data.len() as i64 != n.max(0) {
            return Err(Error::ValidityViolation(format!(
                "tensor data length {} does not match sizes {sizes:?}",
                data.len()
            )));
        }
        Ok(ConcreteTensor { axes, sizes, data })
    }

    pub fn filled(sizes: BTreeMap<AxisId, i64>, v: Value) -> Self {
        let n: usize = sizes.values().map(|s| *s as usize).product();
        let axes = sizes.keys().cloned().collect();
        ConcreteTensor { axes, sizes, data: vec![v; n] }
    }

    pub fn volume(&self) -> usize {
        self.sizes.values().map(|s| *s as usize).product()
    }

    fn offset(&self, acc: &BTreeMap<AxisId, i64>) -> Result<usize> {
        let mut off: i64 = 0;
        for a in &self.axes {
            let i = *acc.get(a).ok_or_else(|| {
                Error::ValidityViolation(format!("access missing axis {a}"))
            })?;
            let s = self.sizes[a];
            if i < 0 || i >= s {
                return Err(Error::ValidityViolation(format!(
                    "index {i} out of range [0,{s}) on axis {a}"
                )));
            }
            off = off * s + i;
        }
        Ok(off as usize)
    }

    pub fn get(&self, acc: &BTreeMap<AxisId, i64>) -> Result<&Value> {
        Ok(&self.data[self.offset(acc)?])
    }

    /// Enumerates the full index box in row-major order.
    pub fn accesses(&self) -> Vec<BTreeMap<AxisId, i64>> {
        index_box(&self.axes, &self.sizes)
    }
}

/// All accesses of the given box, row-major over the axis order given.
pub fn index_box(axes: &[AxisId], sizes: &BTreeMap<AxisId, i64>) -> Vec<BTreeMap<AxisId, i64>> {
    let mut out = vec![BTreeMap::new()];
    for a in axes {
        let s = sizes[a];
        let mut next = Vec::with_capacity(out.len() * s.max(0) as usize);
        for acc in &out {
            for i in 0..s {
                let mut m = acc.clone();
                m.insert(a.clone(), i);
                next.push(m);
            }
        }
        out = next;
    }
    out
}

// ---------------------------------------------------------------------------
// Scalar-term evaluation under a concrete model
// ---------------------------------------------------------------------------

/// Read callback: tensor name + concrete indices (in sorted axis order).
pub type ReadFn<'a> = &'a dyn Fn(&str, &[i64]) -> Result<Value>;

/// Evaluates a scalar term under concrete symbol values and a tensor-read
/// callback. Reduction elements are expanded by full enumeration.
pub fn eval_term(t: &TermRef, ints: &BTreeMap<String, i64>, read: ReadFn) -> Result<Value> {
    match &**t {
        Term::Bool(b) => Ok(Value::Bool(*b)),
        Term::Lin(l) => {
            // A boolean atom (read, symbol, ite) is carried as a unit-weight
            // linear term; evaluate it directly as a boolean.
            if l.kind == Kind::Bool && l.constant == 0 && l.terms.len() == 1 {
                if let Some((mono, 1)) = l.terms.iter().next().map(|(m, c)| (m, *c)) {
                    if mono.len() == 1 {
                        return eval_atom(&mono[0], ints, read);
                    }
                }
            }
            let mut acc = if l.kind == Kind::Real {
                Value::Real(BigRational::from(BigInt::from(l.constant)))
            } else {
                Value::Int(l.constant)
            };
            for (mono, coeff) in &l.terms {
                let mut prod = Value::Int(*coeff);
                for a in mono {
                    // Boolean tensor reads use an integer carrier in terms
                    // (true >= 1): coerce to 0/1 in numeric position.
                    let v = match eval_atom(a, ints, read)? {
                        Value::Bool(b) => Value::Int(b as i64),
                        v => v,
                    };
                    prod = Value::mul(&prod, &v)?;
                }
                acc = Value::add(&acc, &prod)?;
            }
            Ok(acc)
        }
        Term::Cmp(shape, l) => {
            let v = eval_term(&term::TermRef::new(Term::Lin(l.clone())), ints, read)?;
            let zero = Value::Int(0);
            Ok(Value::Bool(match shape {
                CmpShape::Ge0 => !Value::lt_v(&v, &zero)?,
                CmpShape::Gt0 => Value::lt_v(&zero, &v)?,
                CmpShape::Eq0 => Value::eq_v(&v, &zero)?,
            }))
        }
        Term::And(ts) => {
            for x in ts {
                if !eval_term(x, ints, read)?.as_bool()? {
                    return Ok(Value::Bool(false));
                }
            }
            Ok(Value::Bool(true))
        }
        Term::Or(ts) => {
            for x in ts {
                if eval_term(x, ints, read)?.as_bool()? {
                    return Ok(Value::Bool(true));
                }
            }
            Ok(Value::Bool(false))
        }
        Term::Not(x) => Ok(Value::Bool(!eval_term(x, ints, read)?.as_bool()?)),
        Term::Exists(..) => {
            Err(Error::UnsupportedOp("cannot evaluate quantified term concretely".into()))
        }
    }
}

fn eval_atom(a: &Atom, ints: &BTreeMap<String, i64>, read: ReadFn) -> Result<Value> {
    match a {
        Atom::Sym(n, k) => {
            let v = *ints
                .get(n)
                .ok_or_else(|| Error::ModelParseError(format!("no value for symbol {n}")))?;
            Ok(if *k == Kind::Real {
                Value::Real(BigRational::from(BigInt::from(v)))
            } else {
                Value::Int(v)
            })
        }
        Atom::Div(x, y) => {
            let (x, y) = (
                eval_term(x, ints, read)?.as_int()?,
                eval_term(y, ints, read)?.as_int()?,
            );
            if y == 0 {
                return Err(Error::ValidityViolation("division by zero".into()));
            }
            Ok(Value::Int(term::euclid_div(x, y)))
        }
        Atom::Mod(x, y) => {
            let (x, y) = (
                eval_term(x, ints, read)?.as_int()?,
                eval_term(y, ints, read)?.as_int()?,
            );
            if y == 0 {
                return Err(Error::ValidityViolation("modulo by zero".into()));
            }
            Ok(Value::Int(term::euclid_mod(x, y)))
        }
        Atom::Min(x, y) => Value::min_v(&eval_term(x, ints, read)?, &eval_term(y, ints, read)?),
        Atom::Max(x, y) => Value::max_v(&eval_term(x, ints, read)?, &eval_term(y, ints, read)?),
        Atom::Ite(c, x, y) => {
            if eval_term(c, ints, read)?.as_bool()? {
                eval_term(x, ints, read)
            } else {
                eval_term(y, ints, read)
            }
        }
        Atom::Read { tensor, indices } => {
            let idx: Vec<i64> = indices
                .iter()
                .map(|i| eval_term(i, ints, read)?.as_int())
                .collect::<Result<_>>()?;
            read(tensor, &idx)
        }
        Atom::Red(r) => {
            let sizes: Vec<i64> = r
                .indices
                .iter()
                .map(|i| eval_term(&i.size, ints, read)?.as_int())
                .collect::<Result<_>>()?;
            let mut acc: Option<Value> = None;
            let mut counters = vec![0i64; sizes.len()];
            if sizes.iter().all(|s| *s > 0) {
                loop {
                    let mut env = ints.clone();
                    for (i, idx) in r.indices.iter().enumerate() {
                        env.insert(idx.name.clone(), counters[i]);
                    }
                    let v = eval_term(&r.body, &env, read)?;
                    acc = Some(match acc {
                        None => v,
                        Some(p) => match r.op {
                            RedOp::Add => Value::add(&p, &v)?,
                            RedOp::Mul => Value::mul(&p, &v)?,
                            RedOp::Min => Value::min_v(&p, &v)?,
                            RedOp::Max => Value::max_v(&p, &v)?,
                        },
                    });
                    // Odometer increment.
                    let mut k = sizes.len();
                    loop {
                        if k == 0 {
                            break;
                        }
                        k -= 1;
                        counters[k] += 1;
                        if counters[k] < sizes[k] {
                            break;
                        }
                        counters[k] = 0;
                        if k == 0 {
                            counters = vec![-1; sizes.len()];
                            break;
                        }
                    }
                    if counters.iter().any(|c| *c < 0) {
                        break;
                    }
                }
            }
            match acc {
                Some(v) => Ok(v),
                None => match r.op {
                    RedOp::Add => Ok(Value::Int(0)),
                    RedOp::Mul => Ok(Value::Int(1)),
                    _ => Err(Error::ValidityViolation(
                        "min/max reduction over empty range".into(),
                    )),
                },
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Concrete interpreter
// ---------------------------------------------------------------------------

fn lit_value(v: ScalarLit) -> Value {
    match v {
        ScalarLit::Int(x) => Value::Int(x),
        ScalarLit::Bool(b) => Value::Bool(b),
        ScalarLit::Real(x) => Value::Real(BigRational::from(BigInt::from(x))),
    }
}

fn attr_values(m: &IMap, syms: &BTreeMap<String, i64>) -> Result<BTreeMap<AxisId, i64>> {
    let no_read: ReadFn = &|t, _| {
        Err(Error::ValidityViolation(format!("tensor read {t} in attribute position")))
    };
    m.iter()
        .map(|(a, t)| Ok((a.clone(), eval_term(t, syms, no_read)?.as_int()?)))
        .collect()
}

fn require(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::ValidityViolation(msg()))
    }
}

/// Evaluates an instantiated expression on concrete tensors and concrete
/// attribute symbol values. Violated operator side conditions surface as
/// [`Error::ValidityViolation`].
pub fn eval_concrete(
    expr: &IExpr,
    env: &BTreeMap<String, ConcreteTensor>,
    syms: &BTreeMap<String, i64>,
) -> Result<ConcreteTensor> {
    match expr {
        IExpr::Var(id) => {
            let t = env
                .get(id)
                .ok_or_else(|| Error::UndeclaredIdentifier(id.clone()))?;
            Ok(t.clone())
        }
        IExpr::Const { value, shape } => {
            let sizes = attr_values(shape, syms)?;
            for (a, s) in &sizes {
                require(*s >= 0, || format!("const size {s} < 0 on axis {a}"))?;
            }
            Ok(ConcreteTensor::filled(sizes, lit_value(*value)))
        }
        IExpr::Iota { shape, axis } => {
            let sizes = attr_values(shape, syms)?;
            for (a, s) in &sizes {
                require(*s >= 0, || format!("iota size {s} < 0 on axis {a}"))?;
            }
            let mut out = ConcreteTensor::filled(sizes, Value::Int(0));
            let accs = out.accesses();
            for (i, acc) in accs.iter().enumerate() {
                out.data[i] = Value::Int(acc[axis]);
            }
            Ok(out)
        }
        IExpr::Expand { input, shape } => {
            let t = eval_concrete(input, env, syms)?;
            let extra = attr_values(shape, syms)?;
            for (a, s) in &extra {
                require(!t.sizes.contains_key(a), || format!("expand axis {a} overlaps"))?;
                require(*s >= 0, || format!("expand size {s} < 0 on axis {a}"))?;
            }
            let mut sizes = t.sizes.clone();
            sizes.extend(extra);
            let mut out = ConcreteTensor::filled(sizes, Value::Int(0));
            let accs = out.accesses();
            for (i, acc) in accs.iter().enumerate() {
                let inner: BTreeMap<AxisId, i64> = acc
                    .iter()
                    .filter(|(a, _)| t.sizes.contains_key(*a))
                    .map(|(a, v)| (a.clone(), *v))
                    .collect();
                out.data[i] = t.get(&inner)?.clone();
            }
            Ok(out)
        }
        IExpr::Binary { op, lhs, rhs } => {
            let a = eval_concrete(lhs, env, syms)?;
            let b = eval_concrete(rhs, env, syms)?;
            require(a.axes == b.axes, || "binary axes differ".into())?;
            require(a.sizes == b.sizes, || {
                format!("binary shapes differ: {:?} vs {:?}", a.sizes, b.sizes)
            })?;
            let mut out = a.clone();
            for i in 0..out.data.len() {
                out.data[i] = concrete_binop(*op, &a.data[i], &b.data[i])?;
            }
            Ok(out)
        }
        IExpr::PadLow { input, value, low } => {
            let t = eval_concrete(input, env, syms)?;
            let low = attr_values(low, syms)?;
            let mut sizes = BTreeMap::new();
            for (a, s) in &t.sizes {
                let n = s + low[a];
                require(n >= 0, || format!("pad-low output size {n} < 0 on axis {a}"))?;
                sizes.insert(a.clone(), n);
            }
            let mut out = ConcreteTensor::filled(sizes, lit_value(*value));
            let accs = out.accesses();
            for (i, acc) in accs.iter().enumerate() {
                if t.axes.iter().all(|a| acc[a] >= low[a]) {
                    let inner: BTreeMap<AxisId, i64> =
                        acc.iter().map(|(a, v)| (a.clone(), v - low[a])).collect();
                    out.data[i] = t.get(&inner)?.clone();
                }
            }
            Ok(out)
        }
        IExpr::Pad { input, value, low, high, interior } => {
            let t = eval_concrete(input, env, syms)?;
            let low = attr_values(low, syms)?;
            let high = attr_values(high, syms)?;
            let interior = attr_values(interior, syms)?;
            let mut sizes = BTreeMap::new();
            let mut limit = BTreeMap::new();
            for (a, s) in &t.sizes {
                require(interior[a] >= 0, || format!("interior pad {} < 0", interior[a]))?;
                let dilated = s + (s - 1) * interior[a];
                let l = low[a] + dilated;
                let n = l + high[a];
                require(n >= 0, || format!("pad output size {n} < 0 on axis {a}"))?;
                limit.insert(a.clone(), l);
                sizes.insert(a.clone(), n);
            }
            let mut out = ConcreteTensor::filled(sizes, lit_value(*value));
            let accs = out.accesses();
            for (i, acc) in accs.iter().enumerate() {
                let in_range = t.axes.iter().all(|a| {
                    let off = acc[a] - low[a];
                    acc[a] >= low[a]
                        && acc[a] < limit[a]
                        && off.rem_euclid(interior[a] + 1) == 0
                });
                if in_range {
                    let inner: BTreeMap<AxisId, i64> = acc
                        .iter()
                        .map(|(a, v)| {
                            (a.clone(), (v - low[a]).div_euclid(interior[a] + 1))
                        })
                        .collect();
                    out.data[i] = t.get(&inner)?.clone();
                }
            }
            Ok(out)
        }
        IExpr::Slice { input, start, end, stride } => {
            let t = eval_concrete(input, env, syms)?;
            let start = attr_values(start, syms)?;
            let end = attr_values(end, syms)?;
            let stride = attr_values(stride, syms)?;
            let mut sizes = BTreeMap::new();
            for (a, s) in &t.sizes {
                require(start[a] >= 0, || format!("slice start {} < 0", start[a]))?;
                require(start[a] <= end[a], || {
                    format!("slice start {} > end {}", start[a], end[a])
                })?;
                require(end[a] <= *s, || format!("slice end {} > size {s}", end[a]))?;
                require(stride[a] > 0, || format!("slice stride {} <= 0", stride[a]))?;
                // ceil((end-start)/stride)
                let n = (end[a] - start[a] + stride[a] - 1).div_euclid(stride[a]);
                sizes.insert(a.clone(), n);
            }
            let mut out = ConcreteTensor::filled(sizes, Value::Int(0));
            let accs = out.accesses();
            for (i, acc) in accs.iter().enumerate() {
                let inner: BTreeMap<AxisId, i64> = acc
                    .iter()
                    .map(|(a, v)| (a.clone(), start[a] + v * stride[a]))
                    .collect();
                out.data[i] = t.get(&inner)?.clone();
            }
            Ok(out)
        }
        IExpr::DySlice { input, start, size } => {
            let t = eval_concrete(input, env, syms)?;
            let start = attr_values(start, syms)?;
            let size = attr_values(size, syms)?;
            for (a, s) in &t.sizes {
                require(start[a] >= 0, || format!("dy-slice start {} < 0", start[a]))?;
                require(start[a] + size[a] <= *s, || {
                    format!("dy-slice start {} + size {} > {s}", start[a], size[a])
                })?;
                require(size[a] > 0, || format!("dy-slice size {} <= 0", size[a]))?;
            }
            let mut out = ConcreteTensor::filled(size.clone(), Value::Int(0));
            let accs = out.accesses();
            for (i, acc) in accs.iter().enumerate() {
                let inner: BTreeMap<AxisId, i64> =
                    acc.iter().map(|(a, v)| (a.clone(), v + start[a])).collect();
                out.data[i] = t.get(&inner)?.clone();
            }
            Ok(out)
        }
        IExpr::DyUpSlice { input, update, start } => {
            let t = eval_concrete(input, env, syms)?;
            let u = eval_concrete(update, env, syms)?;
            require(t.axes == u.axes, || "dyup-slice axes differ".into())?;
            let start = attr_values(start, syms)?;
            for (a, s) in &t.sizes {
                require(start[a] >= 0, || format!("dyup-slice start {} < 0", start[a]))?;
                require(start[a] + u.sizes[a] <= *s, || {
                    format!("dyup-slice update escapes axis {a}")
                })?;
                require(u.sizes[a] > 0, || format!("dyup-slice update size 0 on {a}"))?;
            }
            let mut out = t.clone();
            let accs = out.accesses();
            for (i, acc) in accs.iter().enumerate() {
                let inside = t
                    .axes
                    .iter()
                    .all(|a| acc[a] >= start[a] && acc[a] < start[a] + u.sizes[a]);
                if inside {
                    let inner: BTreeMap<AxisId, i64> =
                        acc.iter().map(|(a, v)| (a.clone(), v - start[a])).collect();
                    out.data[i] = u.get(&inner)?.clone();
                }
            }
            Ok(out)
        }
        IExpr::Reduce { op, input, axes, .. } => {
            let t = eval_concrete(input, env, syms)?;
            for a in axes {
                require(t.sizes.contains_key(a), || format!("reduce axis {a} missing"))?;
            }
            let out_sizes: BTreeMap<AxisId, i64> = t
                .sizes
                .iter()
                .filter(|(a, _)| !axes.contains(a))
                .map(|(a, s)| (a.clone(), *s))
                .collect();
            let red_sizes: BTreeMap<AxisId, i64> = t
                .sizes
                .iter()
                .filter(|(a, _)| axes.contains(a))
                .map(|(a, s)| (a.clone(), *s))
                .collect();
            let red_axes: Vec<AxisId> = red_sizes.keys().cloned().collect();
            // Min/max over an empty box is undefined; reject eagerly so the
            // check does not depend on the output box being nonempty.
            if matches!(op, RedOp::Min | RedOp::Max) {
                for (a, s) in &red_sizes {
                    require(*s >= 1, || {
                        format!("min/max reduction over empty axis {a}")
                    })?;
                }
            }
            let red_accs = index_box(&red_axes, &red_sizes);
            let mut out = ConcreteTensor::filled(out_sizes, Value::Int(0));
            let accs = out.accesses();
            for (i, acc) in accs.iter().enumerate() {
                let mut v: Option<Value> = None;
                for r in &red_accs {
                    let mut full = acc.clone();
                    full.extend(r.iter().map(|(a, x)| (a.clone(), *x)));
                    let e = t.get(&full)?.clone();
                    v = Some(match v {
                        None => e,
                        Some(p) => match op {
                            RedOp::Add => Value::add(&p, &e)?,
                            RedOp::Mul => Value::mul(&p, &e)?,
                            RedOp::Min => Value::min_v(&p, &e)?,
                            RedOp::Max => Value::max_v(&p, &e)?,
                        },
                    });
                }
                out.data[i] = match v {
                    Some(v) => v,
                    None => match op {
                        RedOp::Add => Value::Int(0),
                        RedOp::Mul => Value::Int(1),
                        _ => {
                            return Err(Error::ValidityViolation(
                                "min/max reduction over empty axes".into(),
                            ))
                        }
                    },
                };
            }
            Ok(out)
        }
        IExpr::Relabel { input, mapping } => {
            let t = eval_concrete(input, env, syms)?;
            let sizes: BTreeMap<AxisId, i64> = mapping
                .iter()
                .map(|(from, to)| (to.clone(), t.sizes[from]))
                .collect();
            require(sizes.len() == mapping.len(), || "relabel not injective".into())?;
            let mut out = ConcreteTensor::filled(sizes, Value::Int(0));
            let accs = out.accesses();
            for (i, acc) in accs.iter().enumerate() {
                let pre: BTreeMap<AxisId, i64> = mapping
                    .iter()
                    .map(|(from, to)| (from.clone(), acc[to]))
                    .collect();
                out.data[i] = t.get(&pre)?.clone();
            }
            Ok(out)
        }
        IExpr::Concat { lhs, rhs, axis } => {
            let a = eval_concrete(lhs, env, syms)?;
            let b = eval_concrete(rhs, env, syms)?;
            require(a.axes == b.axes, || "concat axes differ".into())?;
            for x in &a.axes {
                if x != axis {
                    require(a.sizes[x] == b.sizes[x], || {
                        format!("concat sizes differ on axis {x}")
                    })?;
                }
            }
            let split = a.sizes[axis];
            let mut sizes = a.sizes.clone();
            sizes.insert(axis.clone(), split + b.sizes[axis]);
            let mut out = ConcreteTensor::filled(sizes, Value::Int(0));
            let accs = out.accesses();
            for (i, acc) in accs.iter().enumerate() {
                out.data[i] = if acc[axis] >= split {
                    let mut shifted = acc.clone();
                    shifted.insert(axis.clone(), acc[axis] - split);
                    b.get(&shifted)?.clone()
                } else {
                    a.get(acc)?.clone()
                };
            }
            Ok(out)
        }
        IExpr::Dot { lhs, rhs, contract, batch, .. } => {
            let a = eval_concrete(lhs, env, syms)?;
            let b = eval_concrete(rhs, env, syms)?;
            let common: Vec<AxisId> = a
                .axes
                .iter()
                .filter(|x| b.sizes.contains_key(*x))
                .cloned()
                .collect();
            let mut declared: Vec<AxisId> =
                contract.iter().chain(batch.iter()).cloned().collect();
            declared.sort();
            require(declared == common, || "dot axes mismatch".into())?;
            for x in &common {
                require(a.sizes[x] == b.sizes[x], || {
                    format!("dot sizes differ on axis {x}")
                })?;
            }
            let mut sizes = BTreeMap::new();
            for (x, s) in a.sizes.iter().chain(b.sizes.iter()) {
                if !contract.contains(x) {
                    sizes.insert(x.clone(), *s);
                }
            }
            let red_sizes: BTreeMap<AxisId, i64> = contract
                .iter()
                .map(|x| (x.clone(), a.sizes[x]))
                .collect();
            let red_axes: Vec<AxisId> = red_sizes.keys().cloned().collect();
            let red_accs = index_box(&red_axes, &red_sizes);
            let mut out = ConcreteTensor::filled(sizes, Value::Int(0));
            let accs = out.accesses();
            for (i, acc) in accs.iter().enumerate() {
                // Empty `contract` gives one empty reduction access (a plain
                // product); a size-0 contraction axis gives none (sum = 0).
                let mut sum = Value::Int(0);
                for r in &red_accs {
                    let mut full = acc.clone();
                    full.extend(r.iter().map(|(x, v)| (x.clone(), *v)));
                    let aa: BTreeMap<AxisId, i64> = full
                        .iter()
                        .filter(|(x, _)| a.sizes.contains_key(*x))
                        .map(|(x, v)| (x.clone(), *v))
                        .collect();
                    let bb: BTreeMap<AxisId, i64> = full
                        .iter()
                        .filter(|(x, _)| b.sizes.contains_key(*x))
                        .map(|(x, v)| (x.clone(), *v))
                        .collect();
                    sum = Value::add(&sum, &Value::mul(a.get(&aa)?, b.get(&bb)?)?)?;
                }
                out.data[i] = sum;
            }
            Ok(out)
        }
        IExpr::ConvBase { input, weights, batch, out_feature, strides, .. } => {
            let t = eval_concrete(input, env, syms)?;
            let w = eval_concrete(weights, env, syms)?;
            let strides = attr_values(strides, syms)?;
            let spatial: Vec<AxisId> = strides.keys().cloned().collect();
            let feature: Vec<AxisId> = t
                .axes
                .iter()
                .filter(|x| w.sizes.contains_key(*x) && !strides.contains_key(*x))
                .cloned()
                .collect();
            for x in &feature {
                require(t.sizes[x] == w.sizes[x], || {
                    format!("conv feature sizes differ on {x}")
                })?;
            }
            let mut sizes = BTreeMap::new();
            for x in batch {
                sizes.insert(x.clone(), t.sizes[x]);
            }
            for x in out_feature {
                sizes.insert(x.clone(), w.sizes[x]);
            }
            for x in &spatial {
                require(strides[x] > 0, || format!("conv stride {} <= 0", strides[x]))?;
                require(w.sizes[x] >= 0 && w.sizes[x] <= t.sizes[x], || {
                    format!("conv window escapes input on {x}")
                })?;
                sizes.insert(
                    x.clone(),
                    (t.sizes[x] - w.sizes[x]).div_euclid(strides[x]) + 1,
                );
            }
            let mut red_axes: Vec<AxisId> =
                feature.iter().chain(spatial.iter()).cloned().collect();
            red_axes.sort();
            let red_sizes: BTreeMap<AxisId, i64> = red_axes
                .iter()
                .map(|x| (x.clone(), w.sizes[x]))
                .collect();
            let red_accs = index_box(&red_axes, &red_sizes);
            let mut out = ConcreteTensor::filled(sizes, Value::Int(0));
            let accs = out.accesses();
            for (i, acc) in accs.iter().enumerate() {
                let mut sum = Value::Int(0);
                for k in &red_accs {
                    let mut i_acc = BTreeMap::new();
                    for x in &t.axes {
                        let v = if spatial.contains(x) {
                            acc[x] * strides[x] + k[x]
                        } else if k.contains_key(x) {
                            k[x]
                        } else {
                            acc[x]
                        };
                        i_acc.insert(x.clone(), v);
                    }
                    let mut w_acc = BTreeMap::new();
                    for x in &w.axes {
                        let v = if k.contains_key(x) { k[x] } else { acc[x] };
                        w_acc.insert(x.clone(), v);
                    }
                    sum = Value::add(&sum, &Value::mul(t.get(&i_acc)?, w.get(&w_acc)?)?)?;
                }
                out.data[i] = sum;
            }
            Ok(out)
        }
        IExpr::Reverse { input, axes } => {
            let t = eval_concrete(input, env, syms)?;
            let mut out = t.clone();
            let accs = out.accesses();
            for (i, acc) in accs.iter().enumerate() {
                let src: BTreeMap<AxisId, i64> = acc
                    .iter()
                    .map(|(a, v)| {
                        let idx = if axes.contains(a) { t.sizes[a] - v - 1 } else { *v };
                        (a.clone(), idx)
                    })
                    .collect();
                out.data[i] = t.get(&src)?.clone();
            }
            Ok(out)
        }
        IExpr::Select { pred, on_true, on_false } => {
            let p = eval_concrete(pred, env, syms)?;
            let a = eval_concrete(on_true, env, syms)?;
            let b = eval_concrete(on_false, env, syms)?;
            require(p.axes == a.axes && a.axes == b.axes, || "select axes differ".into())?;
            require(p.sizes == a.sizes && a.sizes == b.sizes, || {
                "select shapes differ".into()
            })?;
            let mut out = a.clone();
            for i in 0..out.data.len() {
                out.data[i] = if p.data[i].as_bool()? {
                    a.data[i].clone()
                } else {
                    b.data[i].clone()
                };
            }
            Ok(out)
        }
        IExpr::Clamp { min, input, max } => {
            let lo = eval_concrete(min, env, syms)?;
            let t = eval_concrete(input, env, syms)?;
            let hi = eval_concrete(max, env, syms)?;
            require(
                lo.sizes == t.sizes && t.sizes == hi.sizes,
                || "clamp shapes differ".into(),
            )?;
            let mut out = t.clone();
            for i in 0..out.data.len() {
                out.data[i] =
                    Value::min_v(&Value::max_v(&t.data[i], &lo.data[i])?, &hi.data[i])?;
            }
            Ok(out)
        }
    }
}

fn concrete_binop(op: BinOp, a: &Value, b: &Value) -> Result<Value> {
    Ok(match op {
        BinOp::Add => Value::add(a, b)?,
        BinOp::Sub => Value::sub(a, b)?,
        BinOp::Mul => Value::mul(a, b)?,
        BinOp::Div => {
            let (x, y) = (a.as_int()?, b.as_int()?);
            if y == 0 {
                return Err(Error::ValidityViolation("division by zero".into()));
            }
            Value::Int(term::euclid_div(x, y))
        }
        BinOp::Min => Value::min_v(a, b)?,
        BinOp::Max => Value::max_v(a, b)?,
        BinOp::And => Value::Bool(a.as_bool()? && b.as_bool()?),
        BinOp::Or => Value::Bool(a.as_bool()? || b.as_bool()?),
        BinOp::Eq => Value::Bool(Value::eq_v(a, b)?),
        BinOp::Ne => Value::Bool(!Value::eq_v(a, b)?),
        BinOp::Le => Value::Bool(!Value::lt_v(b, a)?),
        BinOp::Lt => Value::Bool(Value::lt_v(a, b)?),
        BinOp::Ge => Value::Bool(!Value::lt_v(a, b)?),
        BinOp::Gt => Value::Bool(Value::lt_v(b, a)?),
    })
}

// ---------------------------------------------------------------------------
// Differential testing
// ---------------------------------------------------------------------------

/// One concrete instantiation of a rule's free symbols and tensors.
#[derive(Debug, Clone)]
pub struct Sample {
    pub syms: BTreeMap<String, i64>,
    pub tensors: BTreeMap<String, ConcreteTensor>,
}

#[derive(Debug, Clone)]
pub struct Mismatch {
    pub sample: Sample,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct DiffReport {
    pub accepted: usize,
    pub rejected: usize,
    pub mismatch: Option<Mismatch>,
}

/// Free integer symbols of an instantiated rule, split into size symbols
/// (sampled nonnegative) and general attribute symbols.
pub fn rule_symbols(inst: &InstRule) -> (Vec<String>, Vec<String>) {
    let mut all: BTreeMap<String, Kind> = BTreeMap::new();
    term::collect_syms(&inst.precond, &mut all);
    collect_expr_syms(&inst.lhs, &mut all);
    collect_expr_syms(&inst.rhs, &mut all);
    let mut shapes: Vec<String> = Vec::new();
    for sig in inst.env.values() {
        for s in sig.shape.values() {
            term::collect_syms(s, &mut all);
        }
    }
    for (name, sig) in &inst.env {
        for a in &sig.axes {
            shapes.push(instantiate::shape_sym(name, a, &inst.inst.task));
        }
    }
    let others: Vec<String> =
        all.keys().filter(|n| !shapes.contains(n)).cloned().collect();
    (shapes, others)
}

fn collect_expr_syms(e: &IExpr, out: &mut BTreeMap<String, Kind>) {
    let mut maps: Vec<&IMap> = Vec::new();
    let mut kids: Vec<&IExpr> = Vec::new();
    match e {
        IExpr::Var(_) => {}
        IExpr::Const { shape, .. } | IExpr::Iota { shape, .. } => maps.push(shape),
        IExpr::Expand { input, shape } => {
            maps.push(shape);
            kids.push(input);
        }
        IExpr::Binary { lhs, rhs, .. } => kids.extend([lhs.as_ref(), rhs.as_ref()]),
        IExpr::PadLow { input, low, .. } => {
            maps.push(low);
            kids.push(input);
        }
        IExpr::Pad { input, low, high, interior, .. } => {
            maps.extend([low, high, interior]);
            kids.push(input);
        }
        IExpr::Slice { input, start, end, stride } => {
            maps.extend([start, end, stride]);
            kids.push(input);
        }
        IExpr::DySlice { input, start, size } => {
            maps.extend([start, size]);
            kids.push(input);
        }
        IExpr::DyUpSlice { input, update, start } => {
            maps.push(start);
            kids.extend([input.as_ref(), update.as_ref()]);
        }
        IExpr::Reduce { input, .. } | IExpr::Relabel { input, .. } | IExpr::Reverse { input, .. } => {
            kids.push(input)
        }
        IExpr::Concat { lhs, rhs, .. } | IExpr::Dot { lhs, rhs, .. } => {
            kids.extend([lhs.as_ref(), rhs.as_ref()])
        }
        IExpr::ConvBase { input, weights, strides, .. } => {
            maps.push(strides);
            kids.extend([input.as_ref(), weights.as_ref()]);
        }
        IExpr::Select { pred, on_true, on_false } => {
            kids.extend([pred.as_ref(), on_true.as_ref(), on_false.as_ref()])
        }
        IExpr::Clamp { min, input, max } => {
            kids.extend([min.as_ref(), input.as_ref(), max.as_ref()])
        }
    }
    for m in maps {
        for t in m.values() {
            term::collect_syms(t, out);
        }
    }
    for k in kids {
        collect_expr_syms(k, out);
    }
}

fn sample_once(
    inst: &InstRule,
    shapes: &[String],
    others: &[String],
    rng: &mut ChaCha8Rng,
    size_cap: i64,
    value_cap: i64,
) -> Sample {
    let mut syms = BTreeMap::new();
    for s in shapes {
        syms.insert(s.clone(), rng.gen_range(0..=size_cap));
    }
    for s in others {
        syms.insert(s.clone(), rng.gen_range(-size_cap..=size_cap));
    }
    let mut tensors = BTreeMap::new();
    for (name, sig) in &inst.env {
        let sizes: BTreeMap<AxisId, i64> = sig
            .axes
            .iter()
            .map(|a| {
                (a.clone(), syms[&instantiate::shape_sym(name, a, &inst.inst.task)])
            })
            .collect();
        let n: usize = sizes.values().map(|s| *s as usize).product();
        let data: Vec<Value> = (0..n)
            .map(|_| match sig.elem {
                Kind::Bool => Value::Bool(rng.gen_bool(0.5)),
                Kind::Real => Value::Real(BigRational::from(BigInt::from(
                    rng.gen_range(-value_cap..=value_cap),
                ))),
                Kind::Int => Value::Int(rng.gen_range(-value_cap..=value_cap)),
            })
            .collect();
        tensors.insert(name.clone(), ConcreteTensor { axes: sizes.keys().cloned().collect(), sizes, data });
    }
    Sample { syms, tensors }
}

/// Outcome of checking one sample.
enum TrialOutcome {
    Rejected,
    Agree,
    Mismatch(String),
}

fn check_sample(inst: &InstRule, sample: &Sample) -> TrialOutcome {
    // Precondition.
    let no_read: ReadFn = &|t, _| {
        Err(Error::ValidityViolation(format!("read of {t} in precondition")))
    };
    match eval_term(&inst.precond, &sample.syms, no_read) {
        Ok(Value::Bool(true)) => {}
        _ => return TrialOutcome::Rejected,
    }
    let lhs = match eval_concrete(&inst.lhs, &sample.tensors, &sample.syms) {
        Ok(t) => t,
        Err(_) => return TrialOutcome::Rejected,
    };
    let rhs = match eval_concrete(&inst.rhs, &sample.tensors, &sample.syms) {
        Ok(t) => t,
        Err(e) => return TrialOutcome::Mismatch(format!("RHS invalid: {e}")),
    };
    if lhs.sizes != rhs.sizes {
        return TrialOutcome::Mismatch(format!(
            "shape mismatch: {:?} vs {:?}",
            lhs.sizes, rhs.sizes
        ));
    }
    for acc in lhs.accesses() {
        let (a, b) = (lhs.get(&acc).unwrap(), rhs.get(&acc).unwrap());
        match Value::eq_v(a, b) {
            Ok(true) => {}
            _ => {
                return TrialOutcome::Mismatch(format!(
                    "value mismatch at {acc:?}: {a:?} vs {b:?}"
                ))
            }
        }
    }
    TrialOutcome::Agree
}

/// Runs seeded differential testing of a rule at the given ranks.
///
/// Rejection sampling retries up to `50 * trials` candidates to collect
/// `trials` precondition-satisfying samples; mismatches are greedily shrunk.
pub fn differential_test(
    rule: &RewriteRule,
    ranks: &BTreeMap<RClassId, usize>,
    trials: usize,
    seed: u64,
    size_cap: i64,
    value_cap: i64,
) -> Result<DiffReport> {
    let inst = instantiate::instantiate(rule, ranks, "fz")?;
    let (shapes, others) = rule_symbols(&inst);
    let budget = trials.saturating_mul(50);
    let mut accepted = 0usize;
    let mut rejected = 0usize;
    let mut mismatch: Option<Mismatch> = None;

    let run_trial = |i: usize| -> (bool, Option<Mismatch>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
        let sample = sample_once(&inst, &shapes, &others, &mut rng, size_cap, value_cap);
        match check_sample(&inst, &sample) {
            TrialOutcome::Rejected => (false, None),
            TrialOutcome::Agree => (true, None),
            TrialOutcome::Mismatch(detail) => {
                let shrunk = shrink(&inst, sample);
                let detail = match check_sample(&inst, &shrunk) {
                    TrialOutcome::Mismatch(d) => d,
                    _ => detail,
                };
                (true, Some(Mismatch { sample: shrunk, detail }))
            }
        }
    };

    let chunk = 256usize;
    let mut next = 0usize;
    while next < budget && accepted < trials && mismatch.is_none() {
        let end = (next + chunk).min(budget);
        let results: Vec<(bool, Option<Mismatch>)> = run_chunk(next, end, &run_trial);
        for (ok, m) in results {
            if ok {
                accepted += 1;
            } else {
                rejected += 1;
            }
            if mismatch.is_none() {
                mismatch = m;
            }
        }
        next = end;
    }
    if accepted == 0 && mismatch.is_none() {
        return Err(Error::SamplingExhausted(format!(
            "no precondition-satisfying sample in {budget} attempts for rule {}",
            rule.name
        )));
    }
    Ok(DiffReport { accepted, rejected, mismatch })
}

#[cfg(feature = "parallel")]
fn run_chunk(
    start: usize,
    end: usize,
    f: &(dyn Fn(usize) -> (bool, Option<Mismatch>) + Sync),
) -> Vec<(bool, Option<Mismatch>)> {
    use rayon::prelude::*;
    (start..end).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn run_chunk(
    start: usize,
    end: usize,
    f: &(dyn Fn(usize) -> (bool, Option<Mismatch>) + Sync),
) -> Vec<(bool, Option<Mismatch>)> {
    (start..end).map(f).collect()
}

/// Sequential twin of [`differential_test`], available regardless of the
/// `parallel` feature; used by the benchmark comparing both paths.
pub fn differential_test_seq(
    rule: &RewriteRule,
    ranks: &BTreeMap<RClassId, usize>,
    trials: usize,
    seed: u64,
    size_cap: i64,
    value_cap: i64,
) -> Result<DiffReport> {
    let inst = instantiate::instantiate(rule, ranks, "fz")?;
    let (shapes, others) = rule_symbols(&inst);
    let budget = trials.saturating_mul(50);
    let mut accepted = 0usize;
    let mut rejected = 0usize;
    for i in 0..budget {
        if accepted >= trials {
            break;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
        let sample = sample_once(&inst, &shapes, &others, &mut rng, size_cap, value_cap);
        match check_sample(&inst, &sample) {
            TrialOutcome::Rejected => rejected += 1,
            TrialOutcome::Agree => accepted += 1,
            TrialOutcome::Mismatch(detail) => {
                let shrunk = shrink(&inst, sample);
                return Ok(DiffReport {
                    accepted: accepted + 1,
                    rejected,
                    mismatch: Some(Mismatch { sample: shrunk, detail }),
                });
            }
        }
    }
    if accepted == 0 {
        return Err(Error::SamplingExhausted(format!(
            "no precondition-satisfying sample in {budget} attempts for rule {}",
            rule.name
        )));
    }
    Ok(DiffReport { accepted, rejected, mismatch: None })
}

/// Greedy shrinking: move symbol values toward 0 (sizes first, implicitly,
/// since shrinking a size also shrinks tensors), then tensor elements toward
/// 0, as long as the sample still mismatches.
fn shrink(inst: &InstRule, mut sample: Sample) -> Sample {
    let is_mismatch =
        |s: &Sample| matches!(check_sample(inst, s), TrialOutcome::Mismatch(_));
    let mut progress = true;
    while progress {
        progress = false;
        let keys: Vec<String> = sample.syms.keys().cloned().collect();
        for k in keys {
            let v = sample.syms[&k];
            if v == 0 {
                continue;
            }
            let smaller = v - v.signum();
            let mut cand = sample.clone();
            cand.syms.insert(k.clone(), smaller);
            // Resize tensors affected by a size-symbol change.
            resample_shapes(inst, &mut cand);
            if is_mismatch(&cand) {
                sample = cand;
                progress = true;
            }
        }
    }
    // Shrink element values.
    let names: Vec<String> = sample.tensors.keys().cloned().collect();
    for name in names {
        let len = sample.tensors[&name].data.len();
        for i in 0..len {
            loop {
                let cur = sample.tensors[&name].data[i].clone();
                let next = match &cur {
                    Value::Int(v) if *v != 0 => Value::Int(v - v.signum()),
                    Value::Real(r) if !r.is_zero() => {
                        let shifted = if r > &BigRational::zero() {
                            r - BigRational::from(BigInt::from(1))
                        } else {
                            r + BigRational::from(BigInt::from(1))
                        };
                        Value::Real(shifted)
                    }
                    Value::Bool(true) => Value::Bool(false),
                    _ => break,
                };
                let mut cand = sample.clone();
                cand.tensors.get_mut(&name).unwrap().data[i] = next;
                if is_mismatch(&cand) {
                    sample = cand;
                } else {
                    break;
                }
            }
        }
    }
    sample
}

/// Rebuilds tensor storage after size symbols changed, truncating or
/// zero-extending data to the new volume.
fn resample_shapes(inst: &InstRule, sample: &mut Sample) {
    for (name, sig) in &inst.env {
        let sizes: BTreeMap<AxisId, i64> = sig
            .axes
            .iter()
            .map(|a| {
                let s = sample.syms[&instantiate::shape_sym(name, a, &inst.inst.task)];
                (a.clone(), s.max(0))
            })
            .collect();
        let n: usize = sizes.values().map(|s| *s as usize).product();
        let old = sample.tensors.get(name).cloned();
        let mut data: Vec<Value> = old.map(|t| t.data).unwrap_or_default();
        let fill = match sig.elem {
            Kind::Bool => Value::Bool(false),
            Kind::Real => Value::Real(BigRational::zero()),
            Kind::Int => Value::Int(0),
        };
        data.resize(n, fill);
        sample.tensors.insert(
            name.clone(),
            ConcreteTensor { axes: sizes.keys().cloned().collect(), sizes, data },
        );
    }
}
