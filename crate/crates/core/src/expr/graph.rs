use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::Arc;

use super::chart::{reduce_with, ChartDomain};
use super::jet::Jet2;
use super::parse::{compile, parse_ast, run, Ast, Instr, TapeFault};
use super::ExprError;

/// A parsed scalar expression over a chart, compiled to a stack tape.
#[derive(Clone)]
pub struct ScalarGraph {
    ast: Ast,
    tape: Vec<Instr>,
    names: [String; 3],
    periods: [Option<f64>; 3],
    params: BTreeMap<String, f64>,
}

impl fmt::Debug for ScalarGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScalarGraph({})", self.print())
    }
}

impl ScalarGraph {
    pub fn parse(src: &str, chart: &ChartDomain, params: &BTreeMap<String, f64>) -> Result<Self, ExprError> {
        let ast = parse_ast(src, &chart.names, params)?;
        let mut tape = Vec::new();
        compile(&ast, params, &mut tape);
        Ok(Self {
            ast,
            tape,
            names: chart.names.clone(),
            periods: chart.periods(),
            params: params.clone(),
        })
    }

    /// Fully parenthesized source that parses back to the same tape.
    pub fn print(&self) -> String {
        let mut out = String::new();
        self.ast.print(&self.names, &mut out);
        out
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    pub fn value(&self, p: [f64; 3]) -> Result<f64, ExprError> {
        let q = reduce_with(&self.periods, p);
        run::<f64>(&self.tape, q).map_err(|e| fault(e, q))
    }

    pub fn eval_jet2(&self, p: [f64; 3]) -> Result<Jet2, ExprError> {
        let q = reduce_with(&self.periods, p);
        run::<Jet2>(&self.tape, q).map_err(|e| fault(e, q))
    }
}

fn fault(e: TapeFault, p: [f64; 3]) -> ExprError {
    let what = match e {
        TapeFault::Log(v) => format!("log of {v:e}"),
        TapeFault::Sqrt(v) => format!("sqrt of {v:e}"),
        TapeFault::Pow(v) => format!("real power of base {v:e}"),
        TapeFault::DivZero => "division by zero".to_owned(),
    };
    ExprError::Domain { what, point: p }
}

/// Per-point memo of node jets, keyed by node identity.
#[derive(Default)]
pub struct JetCache {
    map: std::collections::HashMap<usize, Jet2>,
}

/// Smoothness order reported for constants.
const EXACT: i8 = i8::MAX;

enum Node {
    Const(f64),
    Graph(Arc<ScalarGraph>),
    Add(ScalarField, ScalarField),
    Sub(ScalarField, ScalarField),
    Mul(ScalarField, ScalarField),
    Div(ScalarField, ScalarField),
    Neg(ScalarField),
    Partial(ScalarField, usize),
    /// Smooth bump `exp(-1/q)`, `q = 4(s-a)(b-s)/(b-a)^2`, on `(a, b)`, zero outside.
    Bump(ScalarField, f64, f64),
    Sum(Vec<ScalarField>),
}

/// A scalar built from parsed graphs by arithmetic and partial derivatives.
///
/// Every parsed leaf carries exact derivatives to order two; each `partial`
/// consumes one order. Slots beyond the available order evaluate to NaN.
#[derive(Clone)]
pub struct ScalarField {
    node: Arc<Node>,
    order: i8,
    has_partial: bool,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &*self.node {
            Node::Const(v) => write!(f, "{v:?}"),
            Node::Graph(g) => write!(f, "{}", g.print()),
            Node::Add(a, b) => write!(f, "({a:?} + {b:?})"),
            Node::Sub(a, b) => write!(f, "({a:?} - {b:?})"),
            Node::Mul(a, b) => write!(f, "({a:?} * {b:?})"),
            Node::Div(a, b) => write!(f, "({a:?} / {b:?})"),
            Node::Neg(a) => write!(f, "(-{a:?})"),
            Node::Partial(a, i) => write!(f, "d{i}[{a:?}]"),
            Node::Bump(a, lo, hi) => write!(f, "bump[{lo},{hi}]({a:?})"),
            Node::Sum(v) => write!(f, "sum{v:?}"),
        }
    }
}

impl From<ScalarGraph> for ScalarField {
    fn from(g: ScalarGraph) -> Self {
        Self::mk(Node::Graph(Arc::new(g)), 2, false)
    }
}

impl From<f64> for ScalarField {
    fn from(v: f64) -> Self {
        Self::constant(v)
    }
}

impl ScalarField {
    fn mk(node: Node, order: i8, has_partial: bool) -> Self {
        Self { node: Arc::new(node), order, has_partial }
    }

    pub fn constant(v: f64) -> Self {
        Self::mk(Node::Const(v), EXACT, false)
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn parse(src: &str, chart: &ChartDomain, params: &BTreeMap<String, f64>) -> Result<Self, ExprError> {
        ScalarGraph::parse(src, chart, params).map(Self::from)
    }

    pub fn as_const(&self) -> Option<f64> {
        match *self.node {
            Node::Const(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    /// Number of derivative orders still exact (2 for parsed graphs).
    pub fn order(&self) -> i8 {
        self.order
    }

    pub fn partial(&self, axis: usize) -> Self {
        if self.as_const().is_some() {
            return Self::zero();
        }
        let order = if self.order == EXACT { EXACT } else { self.order - 1 };
        Self::mk(Node::Partial(self.clone(), axis), order, true)
    }

    pub fn bump(&self, lo: f64, hi: f64) -> Self {
        Self::mk(Node::Bump(self.clone(), lo, hi), self.order, self.has_partial)
    }

    pub fn sum(terms: Vec<ScalarField>) -> Self {
        let terms: Vec<_> = terms.into_iter().filter(|t| !t.is_zero()).collect();
        match terms.len() {
            0 => Self::zero(),
            1 => terms.into_iter().next().unwrap(),
            _ => {
                let order = terms.iter().map(|t| t.order).min().unwrap();
                let hp = terms.iter().any(|t| t.has_partial);
                Self::mk(Node::Sum(terms), order, hp)
            }
        }
    }

    fn binary(a: &Self, b: &Self, node: Node) -> Self {
        Self::mk(node, a.order.min(b.order), a.has_partial || b.has_partial)
    }

    pub fn jet(&self, p: [f64; 3]) -> Result<Jet2, ExprError> {
        self.jet_cached(p, &mut JetCache::default())
    }

    /// Jet evaluation sharing `cache` across calls at the same point, so a
    /// subgraph reachable from several places is evaluated once.
    pub fn jet_cached(&self, p: [f64; 3], cache: &mut JetCache) -> Result<Jet2, ExprError> {
        if let Node::Const(v) = &*self.node {
            return Ok(Jet2::constant(*v));
        }
        let key = Arc::as_ptr(&self.node) as usize;
        if let Some(j) = cache.map.get(&key) {
            return Ok(*j);
        }
        let j = match &*self.node {
            Node::Const(_) => unreachable!(),
            Node::Graph(g) => g.eval_jet2(p)?,
            Node::Add(a, b) => a.jet_cached(p, cache)? + b.jet_cached(p, cache)?,
            Node::Sub(a, b) => a.jet_cached(p, cache)? - b.jet_cached(p, cache)?,
            Node::Mul(a, b) => a.jet_cached(p, cache)? * b.jet_cached(p, cache)?,
            Node::Div(a, b) => {
                let d = b.jet_cached(p, cache)?;
                if d.value == 0.0 {
                    return Err(ExprError::Domain { what: "division by zero".into(), point: p });
                }
                a.jet_cached(p, cache)? / d
            }
            Node::Neg(a) => -a.jet_cached(p, cache)?,
            Node::Partial(a, i) => a.jet_cached(p, cache)?.partial(*i),
            Node::Bump(a, lo, hi) => {
                let s = a.jet_cached(p, cache)?;
                let (f0, d1, d2) = bump_derivs(s.value, *lo, *hi);
                s.chain(f0, d1, d2)
            }
            Node::Sum(v) => {
                let mut acc = Jet2::constant(0.0);
                for t in v {
                    acc = acc + t.jet_cached(p, cache)?;
                }
                acc
            }
        };
        cache.map.insert(key, j);
        Ok(j)
    }

    /// Values of several fields at one point with a shared jet cache.
    pub fn values_at(fields: &[ScalarField], p: [f64; 3]) -> Result<Vec<f64>, ExprError> {
        if fields.iter().all(|f| !f.has_partial) {
            return fields.iter().map(|f| f.value(p)).collect();
        }
        let mut cache = JetCache::default();
        fields
            .iter()
            .map(|f| if f.has_partial { Ok(f.jet_cached(p, &mut cache)?.value) } else { f.value(p) })
            .collect()
    }

    /// Value only. Subtrees without partial derivatives run the plain `f64`
    /// tape, which is what the integrators use.
    pub fn value(&self, p: [f64; 3]) -> Result<f64, ExprError> {
        if self.has_partial {
            if let Node::Partial(..) = &*self.node {
                return Ok(self.jet(p)?.value);
            }
        }
        Ok(match &*self.node {
            Node::Const(v) => *v,
            Node::Graph(g) => g.value(p)?,
            Node::Add(a, b) => a.value(p)? + b.value(p)?,
            Node::Sub(a, b) => a.value(p)? - b.value(p)?,
            Node::Mul(a, b) => a.value(p)? * b.value(p)?,
            Node::Div(a, b) => {
                let d = b.value(p)?;
                if d == 0.0 {
                    return Err(ExprError::Domain { what: "division by zero".into(), point: p });
                }
                a.value(p)? / d
            }
            Node::Neg(a) => -a.value(p)?,
            Node::Partial(..) => unreachable!(),
            Node::Bump(a, lo, hi) => bump_derivs(a.value(p)?, *lo, *hi).0,
            Node::Sum(v) => {
                let mut acc = 0.0;
                for t in v {
                    acc += t.value(p)?;
                }
                acc
            }
        })
    }

    /// Gradient by forward-mode jets.
    pub fn grad(&self, p: [f64; 3]) -> Result<[f64; 3], ExprError> {
        Ok(self.jet(p)?.grad)
    }
}

/// Value and first two derivatives of the width-normalized bump on `(a, b)`.
pub fn bump_derivs(s: f64, a: f64, b: f64) -> (f64, f64, f64) {
    if s <= a || s >= b {
        return (0.0, 0.0, 0.0);
    }
    let w2 = 4.0 / ((b - a) * (b - a));
    let q = w2 * (s - a) * (b - s);
    let e = -1.0 / q;
    if e < -700.0 {
        return (0.0, 0.0, 0.0);
    }
    let f = e.exp();
    let q1 = w2 * (a + b - 2.0 * s);
    let q2 = -2.0 * w2;
    let d1 = f * q1 / (q * q);
    let d2 = f * (q1 * q1 / q.powi(4) + q2 / (q * q) - 2.0 * q1 * q1 / q.powi(3));
    (f, d1, d2)
}

macro_rules! field_op {
    ($tr:ident, $m:ident, $body:expr) => {
        impl $tr<&ScalarField> for &ScalarField {
            type Output = ScalarField;
            fn $m(self, o: &ScalarField) -> ScalarField {
                #[allow(clippy::redundant_closure_call)]
                ($body)(self, o)
            }
        }
        impl $tr<ScalarField> for ScalarField {
            type Output = ScalarField;
            fn $m(self, o: ScalarField) -> ScalarField {
                (&self).$m(&o)
            }
        }
        impl $tr<&ScalarField> for ScalarField {
            type Output = ScalarField;
            fn $m(self, o: &ScalarField) -> ScalarField {
                (&self).$m(o)
            }
        }
        impl $tr<ScalarField> for &ScalarField {
            type Output = ScalarField;
            fn $m(self, o: ScalarField) -> ScalarField {
                self.$m(&o)
            }
        }
    };
}

field_op!(Add, add, |a: &ScalarField, b: &ScalarField| {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) => ScalarField::constant(x + y),
        (Some(0.0), _) => b.clone(),
        (_, Some(0.0)) => a.clone(),
        _ => ScalarField::binary(a, b, Node::Add(a.clone(), b.clone())),
    }
});

field_op!(Sub, sub, |a: &ScalarField, b: &ScalarField| {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) => ScalarField::constant(x - y),
        (Some(0.0), _) => -b,
        (_, Some(0.0)) => a.clone(),
        _ => ScalarField::binary(a, b, Node::Sub(a.clone(), b.clone())),
    }
});

field_op!(Mul, mul, |a: &ScalarField, b: &ScalarField| {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) => ScalarField::constant(x * y),
        (Some(0.0), _) | (_, Some(0.0)) => ScalarField::zero(),
        (Some(1.0), _) => b.clone(),
        (_, Some(1.0)) => a.clone(),
        (Some(-1.0), _) => -b,
        (_, Some(-1.0)) => -a,
        _ => ScalarField::binary(a, b, Node::Mul(a.clone(), b.clone())),
    }
});

field_op!(Div, div, |a: &ScalarField, b: &ScalarField| {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) if y != 0.0 => ScalarField::constant(x / y),
        (Some(0.0), _) => ScalarField::zero(),
        (_, Some(1.0)) => a.clone(),
        _ => ScalarField::binary(a, b, Node::Div(a.clone(), b.clone())),
    }
});

impl Neg for &ScalarField {
    type Output = ScalarField;
    fn neg(self) -> ScalarField {
        match self.as_const() {
            Some(x) => ScalarField::constant(-x),
            None => ScalarField::mk(Node::Neg(self.clone()), self.order, self.has_partial),
        }
    }
}

impl Neg for ScalarField {
    type Output = ScalarField;
    fn neg(self) -> ScalarField {
        -&self
    }
}

impl Mul<f64> for &ScalarField {
    type Output = ScalarField;
    fn mul(self, c: f64) -> ScalarField {
        self * &ScalarField::constant(c)
    }
}

impl Mul<f64> for ScalarField {
    type Output = ScalarField;
    fn mul(self, c: f64) -> ScalarField {
        &self * c
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Axis;

    fn chart() -> ChartDomain {
        ChartDomain::cube(-2.0, 2.0)
    }

    fn sf(s: &str) -> ScalarField {
        ScalarField::parse(s, &chart(), &BTreeMap::new()).unwrap()
    }

    #[test]
    fn constant_folding() {
        let x = sf("x");
        assert!((&x * &ScalarField::zero()).is_zero());
        assert!((ScalarField::zero() / x.clone()).is_zero());
        assert!(ScalarField::constant(3.0).partial(1).is_zero());
        let y = &x * 1.0;
        assert_eq!(y.order(), 2);
    }

    #[test]
    fn partial_order_tracking() {
        let f = sf("x^3*y");
        let fx = f.partial(0);
        assert_eq!(fx.order(), 1);
        let j = fx.jet([1.0, 2.0, 0.0]).unwrap();
        assert!((j.value - 6.0).abs() < 1e-14);
        assert!((j.grad[0] - 12.0).abs() < 1e-14);
        assert!((j.grad[1] - 3.0).abs() < 1e-14);
        let fxy = fx.partial(1);
        assert_eq!(fxy.order(), 0);
        assert!((fxy.value([1.0, 2.0, 0.0]).unwrap() - 3.0).abs() < 1e-14);
        assert!(fxy.jet([1.0, 2.0, 0.0]).unwrap().grad[0].is_nan());
    }

    #[test]
    fn mixed_partials_commute() {
        let f = sf("sin(x*y) + exp(z)*x^2");
        let p = [0.3, -0.7, 0.2];
        let a = f.partial(0).partial(1).value(p).unwrap();
        let b = f.partial(1).partial(0).value(p).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn bump_is_smooth_and_compact() {
        let (f, d1, _) = bump_derivs(0.5, 0.0, 1.0);
        assert!((f - (-1.0f64).exp()).abs() < 1e-15);
        assert!(d1.abs() < 1e-15);
        assert_eq!(bump_derivs(1.0, 0.0, 1.0), (0.0, 0.0, 0.0));
        // narrow bands stay representable well inside the interval
        assert!(bump_derivs(-0.2001, -0.3, -0.2).0 > 0.0);
        let h = 1e-6;
        let s = 0.3;
        let fd = (bump_derivs(s + h, 0.0, 1.0).0 - bump_derivs(s - h, 0.0, 1.0).0) / (2.0 * h);
        assert!((fd - bump_derivs(s, 0.0, 1.0).1).abs() < 1e-8);
        let fd2 = (bump_derivs(s + h, 0.0, 1.0).1 - bump_derivs(s - h, 0.0, 1.0).1) / (2.0 * h);
        assert!((fd2 - bump_derivs(s, 0.0, 1.0).2).abs() < 1e-6);
    }

    #[test]
    fn periodic_leaf_reduces() {
        let c = ChartDomain::new(["x", "y", "t"], [Axis::Interval { lo: -1.0, hi: 1.0 }, Axis::Interval { lo: -1.0, hi: 1.0 }, Axis::Periodic { period: 1.0 }]).unwrap();
        let g = ScalarField::parse("t", &c, &BTreeMap::new()).unwrap();
        assert!((g.value([0.0, 0.0, 1.25]).unwrap() - 0.25).abs() < 1e-15);
    }
}
