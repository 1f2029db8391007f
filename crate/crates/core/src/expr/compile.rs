//! Stack-machine compilation of expressions for hot evaluation loops.
//!
//! Variables are resolved to slot indices once, so evaluating inside an ODE
//! right-hand side costs no name lookups or allocation.

use super::{Expr, ExprError, ExprNode};

#[derive(Debug, Clone)]
enum Op {
    Const(f64),
    Load(u32),
    AddN(u32),
    MulN(u32),
    Div,
    PowI(i32),
    Sin,
    Cos,
    Exp,
    Sqrt,
    Neg,
}

/// A single compiled expression.
#[derive(Debug, Clone)]
pub struct Program {
    ops: Vec<Op>,
    stack_depth: usize,
}

impl Program {
    pub fn compile(expr: &Expr, vars: &[String]) -> Result<Program, ExprError> {
        let mut ops = Vec::with_capacity(expr.node_count());
        emit(expr, vars, &mut ops)?;
        let mut depth = 0usize;
        let mut max = 0usize;
        for op in &ops {
            match op {
                Op::Const(_) | Op::Load(_) => depth += 1,
                Op::AddN(n) | Op::MulN(n) => depth -= *n as usize - 1,
                Op::Div => depth -= 1,
                _ => {}
            }
            max = max.max(depth);
        }
        Ok(Program { ops, stack_depth: max })
    }

    /// Evaluate with `vals[i]` bound to `vars[i]`. `stack` is scratch space
    /// reused across calls.
    pub fn eval(&self, vals: &[f64], stack: &mut Vec<f64>) -> f64 {
        stack.clear();
        stack.reserve(self.stack_depth);
        for op in &self.ops {
            match op {
                Op::Const(c) => stack.push(*c),
                Op::Load(i) => stack.push(vals[*i as usize]),
                Op::AddN(n) => {
                    let at = stack.len() - *n as usize;
                    let mut s = 0.0;
                    for v in stack.drain(at..) {
                        s += v;
                    }
                    stack.push(s);
                }
                Op::MulN(n) => {
                    let at = stack.len() - *n as usize;
                    let mut p = 1.0;
                    for v in stack.drain(at..) {
                        p *= v;
                    }
                    stack.push(p);
                }
                Op::Div => {
                    let b = stack.pop().unwrap();
                    let a = stack.last_mut().unwrap();
                    *a /= b;
                }
                Op::PowI(k) => {
                    let a = stack.last_mut().unwrap();
                    *a = a.powi(*k);
                }
                Op::Sin => {
                    let a = stack.last_mut().unwrap();
                    *a = a.sin();
                }
                Op::Cos => {
                    let a = stack.last_mut().unwrap();
                    *a = a.cos();
                }
                Op::Exp => {
                    let a = stack.last_mut().unwrap();
                    *a = a.exp();
                }
                Op::Sqrt => {
                    let a = stack.last_mut().unwrap();
                    *a = a.sqrt();
                }
                Op::Neg => {
                    let a = stack.last_mut().unwrap();
                    *a = -*a;
                }
            }
        }
        debug_assert_eq!(stack.len(), 1);
        stack[0]
    }
}

fn emit(expr: &Expr, vars: &[String], ops: &mut Vec<Op>) -> Result<(), ExprError> {
    match &*expr.node {
        ExprNode::Const(c) => ops.push(Op::Const(*c)),
        ExprNode::Var(name) => {
            let idx = vars
                .iter()
                .position(|v| v == name)
                .ok_or_else(|| ExprError::UnknownVariable(name.clone()))?;
            ops.push(Op::Load(idx as u32));
        }
        ExprNode::Sum(ts) => {
            for t in ts {
                emit(t, vars, ops)?;
            }
            ops.push(Op::AddN(ts.len() as u32));
        }
        ExprNode::Prod(fs) => {
            for f in fs {
                emit(f, vars, ops)?;
            }
            ops.push(Op::MulN(fs.len() as u32));
        }
        ExprNode::Quot(u, v) => {
            emit(u, vars, ops)?;
            emit(v, vars, ops)?;
            ops.push(Op::Div);
        }
        ExprNode::Pow(b, k) => {
            emit(b, vars, ops)?;
            ops.push(Op::PowI(*k));
        }
        ExprNode::Sin(u) => {
            emit(u, vars, ops)?;
            ops.push(Op::Sin);
        }
        ExprNode::Cos(u) => {
            emit(u, vars, ops)?;
            ops.push(Op::Cos);
        }
        ExprNode::Exp(u) => {
            emit(u, vars, ops)?;
            ops.push(Op::Exp);
        }
        ExprNode::Sqrt(u) => {
            emit(u, vars, ops)?;
            ops.push(Op::Sqrt);
        }
        ExprNode::Neg(u) => {
            emit(u, vars, ops)?;
            ops.push(Op::Neg);
        }
    }
    Ok(())
}

/// A batch of expressions over one variable list, evaluated into a caller
/// buffer with shared scratch space.
#[derive(Debug, Clone)]
pub struct CompiledExpr {
    programs: Vec<Program>,
}

impl CompiledExpr {
    pub fn compile(exprs: &[Expr], vars: &[String]) -> Result<CompiledExpr, ExprError> {
        let programs = exprs
            .iter()
            .map(|e| Program::compile(e, vars))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(CompiledExpr { programs })
    }

    pub fn len(&self) -> usize {
        self.programs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.programs.is_empty()
    }

    pub fn eval_into(&self, vals: &[f64], out: &mut [f64], stack: &mut Vec<f64>) {
        debug_assert_eq!(out.len(), self.programs.len());
        for (slot, prog) in out.iter_mut().zip(&self.programs) {
            *slot = prog.eval(vals, stack);
        }
    }

    pub fn eval_vec(&self, vals: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.programs.len()];
        let mut stack = Vec::new();
        self.eval_into(vals, &mut out, &mut stack);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;

    #[test]
    fn compiled_matches_tree_eval() {
        let vars: Vec<String> = ["x", "y"].iter().map(|s| s.to_string()).collect();
        let srcs = [
            "x^2 + y^2",
            "sin(x)*cos(y) - exp(x*y)",
            "sqrt(x^2 + 1)/(1 + y^2)",
            "-x + 2*y - 3",
            "x/y/2 + x*y*3",
        ];
        let mut stack = Vec::new();
        for src in srcs {
            let e = parse_expr(src, Some(&vars)).unwrap();
            let prog = Program::compile(&e, &vars).unwrap();
            for (x, y) in [(0.3, 0.7), (-1.2, 2.5), (4.0, -0.1)] {
                let tree = e
                    .eval(&|v| match v {
                        "x" => Some(x),
                        "y" => Some(y),
                        _ => None,
                    })
                    .unwrap();
                let fast = prog.eval(&[x, y], &mut stack);
                assert!((tree - fast).abs() <= 1e-15 * tree.abs().max(1.0), "{src}");
            }
        }
    }

    #[test]
    fn unknown_variable_fails_compile() {
        let vars: Vec<String> = vec!["x".into()];
        let e = parse_expr("x + z", None).unwrap();
        assert!(Program::compile(&e, &vars).is_err());
    }
}
