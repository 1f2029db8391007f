//! Symbolic expression trees over named real variables.
//!
//! The node set is deliberately small: constants, variables, n-ary sums and
//! products, quotients, integer powers, sin/cos/exp/sqrt and negation. Smart
//! constructors fold constants and eliminate 0/1 identities, nothing more, so
//! the printed form of an expression stays close to what was written.
//! Differentiation is closed over the node set.

mod compile;
mod parser;

pub use compile::{CompiledExpr, Program};
pub use parser::{parse_expr, parse_expr_at, ParseError};

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExprError {
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("expression evaluated to a non-finite value")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Node {
    Const(f64),
    Var(String),
    Sum(Vec<Expr>),
    Prod(Vec<Expr>),
    Quot(Expr, Expr),
    Pow(Expr, i32),
    Sin(Expr),
    Cos(Expr),
    Exp(Expr),
    Sqrt(Expr),
    Neg(Expr),
}

/// Immutable expression handle; clones share structure.
#[derive(Clone, PartialEq)]
pub struct Expr {
    node: Arc<Node>,
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

fn wrap(node: Node) -> Expr {
    Expr { node: Arc::new(node) }
}

impl Expr {
    pub fn constant(c: f64) -> Expr {
        wrap(Node::Const(c))
    }

    pub fn var(name: impl Into<String>) -> Expr {
        wrap(Node::Var(name.into()))
    }

    pub fn zero() -> Expr {
        Expr::constant(0.0)
    }

    pub fn one() -> Expr {
        Expr::constant(1.0)
    }

    pub fn as_const(&self) -> Option<f64> {
        match &*self.node {
            Node::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    pub fn is_one(&self) -> bool {
        self.as_const() == Some(1.0)
    }

    /// n-ary sum; folds constants together and drops zero terms.
    pub fn sum(terms: Vec<Expr>) -> Expr {
        let mut acc = 0.0;
        let mut rest: Vec<Expr> = Vec::with_capacity(terms.len());
        let mut const_slot: Option<usize> = None;
        for t in terms {
            match t.as_const() {
                Some(c) => {
                    acc += c;
                    if const_slot.is_none() {
                        const_slot = Some(rest.len());
                        rest.push(Expr::constant(0.0)); // placeholder, patched below
                    }
                }
                None => rest.push(t),
            }
        }
        match const_slot {
            Some(i) if acc != 0.0 => rest[i] = Expr::constant(acc),
            Some(i) => {
                rest.remove(i);
            }
            None => {}
        }
        match rest.len() {
            0 => Expr::zero(),
            1 => rest.pop().unwrap(),
            _ => wrap(Node::Sum(rest)),
        }
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        Expr::sum(vec![a, b])
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        Expr::sum(vec![a, Expr::neg(b)])
    }

    /// n-ary product; folds constants, drops unit factors, collapses on zero.
    pub fn prod(factors: Vec<Expr>) -> Expr {
        let mut acc = 1.0;
        let mut rest: Vec<Expr> = Vec::with_capacity(factors.len());
        let mut const_slot: Option<usize> = None;
        for f in factors {
            match f.as_const() {
                Some(c) => {
                    acc *= c;
                    if const_slot.is_none() {
                        const_slot = Some(rest.len());
                        rest.push(Expr::constant(1.0));
                    }
                }
                None => rest.push(f),
            }
        }
        if acc == 0.0 {
            return Expr::zero();
        }
        match const_slot {
            Some(i) if acc != 1.0 => rest[i] = Expr::constant(acc),
            Some(i) => {
                rest.remove(i);
            }
            None => {}
        }
        match rest.len() {
            0 => Expr::constant(acc),
            1 => rest.pop().unwrap(),
            _ => wrap(Node::Prod(rest)),
        }
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        Expr::prod(vec![a, b])
    }

    pub fn quot(num: Expr, den: Expr) -> Expr {
        if num.is_zero() {
            return Expr::zero();
        }
        if den.is_one() {
            return num;
        }
        if let (Some(a), Some(b)) = (num.as_const(), den.as_const()) {
            let v = a / b;
            if v.is_finite() {
                return Expr::constant(v);
            }
        }
        wrap(Node::Quot(num, den))
    }

    pub fn pow(base: Expr, exp: i32) -> Expr {
        match exp {
            0 => Expr::one(),
            1 => base,
            _ => {
                if let Some(c) = base.as_const() {
                    let v = c.powi(exp);
                    if v.is_finite() {
                        return Expr::constant(v);
                    }
                }
                wrap(Node::Pow(base, exp))
            }
        }
    }

    pub fn neg(e: Expr) -> Expr {
        match &*e.node {
            Node::Const(c) => Expr::constant(-c),
            Node::Neg(inner) => inner.clone(),
            _ => wrap(Node::Neg(e)),
        }
    }

    pub fn sin(e: Expr) -> Expr {
        match e.as_const() {
            Some(c) => Expr::constant(c.sin()),
            None => wrap(Node::Sin(e)),
        }
    }

    pub fn cos(e: Expr) -> Expr {
        match e.as_const() {
            Some(c) => Expr::constant(c.cos()),
            None => wrap(Node::Cos(e)),
        }
    }

    pub fn exp(e: Expr) -> Expr {
        match e.as_const() {
            Some(c) => {
                let v = c.exp();
                if v.is_finite() {
                    return Expr::constant(v);
                }
                wrap(Node::Exp(e))
            }
            None => wrap(Node::Exp(e)),
        }
    }

    pub fn sqrt(e: Expr) -> Expr {
        match e.as_const() {
            Some(c) if c >= 0.0 => Expr::constant(c.sqrt()),
            _ => wrap(Node::Sqrt(e)),
        }
    }

    /// Partial derivative with respect to `var`.
    pub fn diff(&self, var: &str) -> Expr {
        match &*self.node {
            Node::Const(_) => Expr::zero(),
            Node::Var(v) => {
                if v == var {
                    Expr::one()
                } else {
                    Expr::zero()
                }
            }
            Node::Sum(ts) => Expr::sum(ts.iter().map(|t| t.diff(var)).collect()),
            Node::Prod(fs) => {
                // d(f1..fn) = sum_i f1..f_{i-1} f_i' f_{i+1}..fn
                let mut terms = Vec::with_capacity(fs.len());
                for i in 0..fs.len() {
                    let mut factors = Vec::with_capacity(fs.len());
                    for (j, f) in fs.iter().enumerate() {
                        factors.push(if i == j { f.diff(var) } else { f.clone() });
                    }
                    terms.push(Expr::prod(factors));
                }
                Expr::sum(terms)
            }
            Node::Quot(u, v) => {
                // (u/v)' = (u'v - uv') / v^2
                let num = Expr::sub(
                    Expr::mul(u.diff(var), v.clone()),
                    Expr::mul(u.clone(), v.diff(var)),
                );
                Expr::quot(num, Expr::pow(v.clone(), 2))
            }
            Node::Pow(b, k) => Expr::prod(vec![
                Expr::constant(*k as f64),
                Expr::pow(b.clone(), k - 1),
                b.diff(var),
            ]),
            Node::Sin(u) => Expr::mul(Expr::cos(u.clone()), u.diff(var)),
            Node::Cos(u) => Expr::neg(Expr::mul(Expr::sin(u.clone()), u.diff(var))),
            Node::Exp(u) => Expr::mul(Expr::exp(u.clone()), u.diff(var)),
            Node::Sqrt(u) => Expr::quot(
                u.diff(var),
                Expr::prod(vec![Expr::constant(2.0), Expr::sqrt(u.clone())]),
            ),
            Node::Neg(u) => Expr::neg(u.diff(var)),
        }
    }

    /// Replace each variable that has an entry in `map` by the mapped expression.
    pub fn subst(&self, map: &dyn Fn(&str) -> Option<Expr>) -> Expr {
        match &*self.node {
            Node::Const(_) => self.clone(),
            Node::Var(v) => map(v).unwrap_or_else(|| self.clone()),
            Node::Sum(ts) => Expr::sum(ts.iter().map(|t| t.subst(map)).collect()),
            Node::Prod(fs) => Expr::prod(fs.iter().map(|f| f.subst(map)).collect()),
            Node::Quot(u, v) => Expr::quot(u.subst(map), v.subst(map)),
            Node::Pow(b, k) => Expr::pow(b.subst(map), *k),
            Node::Sin(u) => Expr::sin(u.subst(map)),
            Node::Cos(u) => Expr::cos(u.subst(map)),
            Node::Exp(u) => Expr::exp(u.subst(map)),
            Node::Sqrt(u) => Expr::sqrt(u.subst(map)),
            Node::Neg(u) => Expr::neg(u.subst(map)),
        }
    }

    /// Evaluate with a variable lookup. Errors on unknown variables and
    /// non-finite intermediate results.
    pub fn eval(&self, lookup: &dyn Fn(&str) -> Option<f64>) -> Result<f64, ExprError> {
        let v = self.eval_inner(lookup)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ExprError::NonFinite)
        }
    }

    fn eval_inner(&self, lookup: &dyn Fn(&str) -> Option<f64>) -> Result<f64, ExprError> {
        Ok(match &*self.node {
            Node::Const(c) => *c,
            Node::Var(v) => lookup(v).ok_or_else(|| ExprError::UnknownVariable(v.clone()))?,
            Node::Sum(ts) => {
                let mut s = 0.0;
                for t in ts {
                    s += t.eval_inner(lookup)?;
                }
                s
            }
            Node::Prod(fs) => {
                let mut p = 1.0;
                for f in fs {
                    p *= f.eval_inner(lookup)?;
                }
                p
            }
            Node::Quot(u, v) => u.eval_inner(lookup)? / v.eval_inner(lookup)?,
            Node::Pow(b, k) => b.eval_inner(lookup)?.powi(*k),
            Node::Sin(u) => u.eval_inner(lookup)?.sin(),
            Node::Cos(u) => u.eval_inner(lookup)?.cos(),
            Node::Exp(u) => u.eval_inner(lookup)?.exp(),
            Node::Sqrt(u) => u.eval_inner(lookup)?.sqrt(),
            Node::Neg(u) => -u.eval_inner(lookup)?,
        })
    }

    /// All variable names occurring in the expression.
    pub fn variables(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match &*self.node {
            Node::Const(_) => {}
            Node::Var(v) => {
                out.insert(v.clone());
            }
            Node::Sum(ts) | Node::Prod(ts) => {
                for t in ts {
                    t.collect_vars(out);
                }
            }
            Node::Quot(u, v) => {
                u.collect_vars(out);
                v.collect_vars(out);
            }
            Node::Pow(b, _) => b.collect_vars(out),
            Node::Sin(u) | Node::Cos(u) | Node::Exp(u) | Node::Sqrt(u) | Node::Neg(u) => {
                u.collect_vars(out)
            }
        }
    }

    /// Recursively sorts the children of sums and products into a fixed total
    /// order. Two expressions that differ only by the order of commutative
    /// children have equal canonical forms.
    pub fn canonical(&self) -> Expr {
        match &*self.node {
            Node::Const(_) | Node::Var(_) => self.clone(),
            Node::Sum(ts) => {
                let mut cs: Vec<Expr> = ts.iter().map(|t| t.canonical()).collect();
                cs.sort_by(structural_cmp);
                wrap(Node::Sum(cs))
            }
            Node::Prod(fs) => {
                let mut cs: Vec<Expr> = fs.iter().map(|f| f.canonical()).collect();
                cs.sort_by(structural_cmp);
                wrap(Node::Prod(cs))
            }
            Node::Quot(u, v) => wrap(Node::Quot(u.canonical(), v.canonical())),
            Node::Pow(b, k) => wrap(Node::Pow(b.canonical(), *k)),
            Node::Sin(u) => wrap(Node::Sin(u.canonical())),
            Node::Cos(u) => wrap(Node::Cos(u.canonical())),
            Node::Exp(u) => wrap(Node::Exp(u.canonical())),
            Node::Sqrt(u) => wrap(Node::Sqrt(u.canonical())),
            Node::Neg(u) => wrap(Node::Neg(u.canonical())),
        }
    }

    /// Equality up to the order of commutative children.
    pub fn structural_eq(&self, other: &Expr) -> bool {
        self.canonical() == other.canonical()
    }

    pub(crate) fn node_count(&self) -> usize {
        1 + match &*self.node {
            Node::Const(_) | Node::Var(_) => 0,
            Node::Sum(ts) | Node::Prod(ts) => ts.iter().map(Expr::node_count).sum(),
            Node::Quot(u, v) => u.node_count() + v.node_count(),
            Node::Pow(b, _) => b.node_count(),
            Node::Sin(u) | Node::Cos(u) | Node::Exp(u) | Node::Sqrt(u) | Node::Neg(u) => {
                u.node_count()
            }
        }
    }
}

fn kind_rank(e: &Expr) -> u8 {
    match &*e.node {
        Node::Const(_) => 0,
        Node::Var(_) => 1,
        Node::Sum(_) => 2,
        Node::Prod(_) => 3,
        Node::Quot(..) => 4,
        Node::Pow(..) => 5,
        Node::Sin(_) => 6,
        Node::Cos(_) => 7,
        Node::Exp(_) => 8,
        Node::Sqrt(_) => 9,
        Node::Neg(_) => 10,
    }
}

fn structural_cmp(a: &Expr, b: &Expr) -> Ordering {
    let ra = kind_rank(a);
    let rb = kind_rank(b);
    if ra != rb {
        return ra.cmp(&rb);
    }
    match (&*a.node, &*b.node) {
        (Node::Const(x), Node::Const(y)) => x.total_cmp(y),
        (Node::Var(x), Node::Var(y)) => x.cmp(y),
        (Node::Sum(xs), Node::Sum(ys)) | (Node::Prod(xs), Node::Prod(ys)) => {
            for (x, y) in xs.iter().zip(ys.iter()) {
                let c = structural_cmp(x, y);
                if c != Ordering::Equal {
                    return c;
                }
            }
            xs.len().cmp(&ys.len())
        }
        (Node::Quot(xu, xv), Node::Quot(yu, yv)) => {
            structural_cmp(xu, yu).then_with(|| structural_cmp(xv, yv))
        }
        (Node::Pow(xb, xk), Node::Pow(yb, yk)) => {
            structural_cmp(xb, yb).then_with(|| xk.cmp(yk))
        }
        (Node::Sin(x), Node::Sin(y))
        | (Node::Cos(x), Node::Cos(y))
        | (Node::Exp(x), Node::Exp(y))
        | (Node::Sqrt(x), Node::Sqrt(y))
        | (Node::Neg(x), Node::Neg(y)) => structural_cmp(x, y),
        _ => unreachable!("rank already compared"),
    }
}

// Printing follows the input grammar so that every printed expression parses
// back to the same tree (see the round-trip property tests).
//
// Precedence levels: sum 0, product/quotient 1, unary minus 2, power 3, atom 4.

fn prec(e: &Expr) -> u8 {
    match &*e.node {
        Node::Sum(_) => 0,
        Node::Prod(_) | Node::Quot(..) => 1,
        Node::Neg(_) => 2,
        Node::Pow(..) => 3,
        _ => 4,
    }
}

fn fmt_at(e: &Expr, min: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if prec(e) < min {
        write!(f, "(")?;
        fmt_node(e, f)?;
        write!(f, ")")
    } else {
        fmt_node(e, f)
    }
}

fn fmt_const(c: f64, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if c < 0.0 {
        // keep literals nonnegative; negation is an explicit node in printed form
        write!(f, "(0 - {})", fmt_f64(-c))
    } else {
        write!(f, "{}", fmt_f64(c))
    }
}

fn fmt_f64(c: f64) -> String {
    let s = format!("{c}");
    if s.contains('e') {
        // the grammar has no exponent literals; print expanded
        format!("{c:.17}")
    } else {
        s
    }
}

fn fmt_node(e: &Expr, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match &*e.node {
        Node::Const(c) => fmt_const(*c, f),
        Node::Var(v) => write!(f, "{v}"),
        Node::Sum(ts) => {
            for (i, t) in ts.iter().enumerate() {
                if let Node::Neg(inner) = &*t.node {
                    if i > 0 {
                        write!(f, " - ")?;
                        fmt_at(inner, 1, f)?;
                        continue;
                    }
                }
                if i > 0 {
                    write!(f, " + ")?;
                }
                fmt_at(t, 1, f)?;
            }
            Ok(())
        }
        Node::Prod(fs) => {
            for (i, x) in fs.iter().enumerate() {
                if i > 0 {
                    write!(f, "*")?;
                }
                // parenthesize nested quotients to keep left-associative
                // reparsing structure-identical
                let need = if matches!(&*x.node, Node::Quot(..)) { 4 } else { 2 };
                fmt_at(x, need, f)?;
            }
            Ok(())
        }
        Node::Quot(u, v) => {
            fmt_at(u, 1, f)?;
            write!(f, "/")?;
            let need = if matches!(&*v.node, Node::Quot(..) | Node::Prod(_)) {
                4
            } else {
                2
            };
            fmt_at(v, need, f)
        }
        Node::Pow(b, k) => {
            fmt_at(b, 4, f)?;
            write!(f, "^{k}")
        }
        Node::Sin(u) => write!(f, "sin({u})"),
        Node::Cos(u) => write!(f, "cos({u})"),
        Node::Exp(u) => write!(f, "exp({u})"),
        Node::Sqrt(u) => write!(f, "sqrt({u})"),
        Node::Neg(u) => {
            write!(f, "-")?;
            fmt_at(u, 3, f)
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_node(self, f)
    }
}

pub(crate) use Node as ExprNode;

#[cfg(test)]
mod tests {
    use super::*;

    fn x() -> Expr {
        Expr::var("x")
    }

    fn y() -> Expr {
        Expr::var("y")
    }

    #[test]
    fn constant_folding_and_identities() {
        assert!(Expr::sum(vec![x(), Expr::zero()]).structural_eq(&x()));
        assert!(Expr::prod(vec![x(), Expr::one()]).structural_eq(&x()));
        assert!(Expr::prod(vec![x(), Expr::zero()]).is_zero());
        assert_eq!(
            Expr::sum(vec![Expr::constant(2.0), Expr::constant(3.0)]).as_const(),
            Some(5.0)
        );
        assert!(Expr::pow(x(), 1).structural_eq(&x()));
        assert!(Expr::pow(x(), 0).is_one());
        assert!(Expr::quot(x(), Expr::one()).structural_eq(&x()));
        assert!(Expr::neg(Expr::neg(x())).structural_eq(&x()));
    }

    #[test]
    fn derivative_rules() {
        // d/dx (x^3) = 3 x^2
        let e = Expr::pow(x(), 3);
        let d = e.diff("x");
        let at2 = d.eval(&|v| (v == "x").then_some(2.0)).unwrap();
        assert_eq!(at2, 12.0);

        // quotient rule at a point: d/dx (x / (1 + x^2)) = (1 - x^2)/(1+x^2)^2
        let e = Expr::quot(x(), Expr::add(Expr::one(), Expr::pow(x(), 2)));
        let d = e.diff("x");
        let got = d.eval(&|v| (v == "x").then_some(0.5)).unwrap();
        let want = (1.0 - 0.25) / (1.25f64 * 1.25);
        assert!((got - want).abs() < 1e-15);

        // chain rule through sqrt: d/dx sqrt(x^2 + y) at (3, 7) = 3/4
        let e = Expr::sqrt(Expr::add(Expr::pow(x(), 2), y()));
        let d = e.diff("x");
        let got = d
            .eval(&|v| match v {
                "x" => Some(3.0),
                "y" => Some(7.0),
                _ => None,
            })
            .unwrap();
        assert!((got - 0.75).abs() < 1e-15);
    }

    #[test]
    fn derivative_of_sin_cos_exp() {
        let e = Expr::prod(vec![Expr::sin(x()), Expr::exp(x())]);
        let d = e.diff("x");
        let t = 0.7;
        let got = d.eval(&|v| (v == "x").then_some(t)).unwrap();
        let want = t.cos() * t.exp() + t.sin() * t.exp();
        assert!((got - want).abs() < 1e-14);

        let d2 = Expr::cos(x()).diff("x");
        let got = d2.eval(&|v| (v == "x").then_some(t)).unwrap();
        assert!((got + t.sin()).abs() < 1e-15);
    }

    #[test]
    fn canonical_ordering_makes_commutative_equality_decidable() {
        let a = Expr::sum(vec![x(), y(), Expr::prod(vec![x(), y()])]);
        let b = Expr::sum(vec![Expr::prod(vec![y(), x()]), y(), x()]);
        assert!(a.structural_eq(&b));
        let c = Expr::sum(vec![x(), x()]);
        assert!(!a.structural_eq(&c));
    }

    #[test]
    fn eval_errors() {
        assert!(matches!(
            x().eval(&|_| None),
            Err(ExprError::UnknownVariable(_))
        ));
        let div = Expr::quot(Expr::one(), x());
        assert!(matches!(
            div.eval(&|v| (v == "x").then_some(0.0)),
            Err(ExprError::NonFinite)
        ));
    }

    #[test]
    fn unknown_variables_are_listed() {
        let e = Expr::add(Expr::mul(x(), y()), Expr::sin(Expr::var("theta")));
        let vars: Vec<String> = e.variables().into_iter().collect();
        assert_eq!(vars, vec!["theta", "x", "y"]);
    }
}
