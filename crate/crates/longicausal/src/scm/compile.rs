//! Compilation of parameter expressions to stack programs over the flat
//! per-subject value array. Each node has a fixed time, so variable and
//! piecewise-in-time references resolve to constant value indices up front;
//! per-subject evaluation is pure array arithmetic.

use std::collections::HashMap;

use crate::error::Error;
use crate::expr::Expr;
use crate::longdata::Comparator;
use crate::Result;

#[derive(Debug, Clone)]
pub(crate) enum Op {
    Push(f64),
    Load(usize),
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Log,
    Sqrt,
    Sq,
    Expit,
    Cmp(Comparator),
}

/// A compiled expression: postfix program over the value array.
#[derive(Debug, Clone)]
pub(crate) struct Prog {
    ops: Vec<Op>,
}

impl Prog {
    pub(crate) fn eval(&self, vals: &[f64], stack: &mut Vec<f64>) -> f64 {
        stack.clear();
        for op in &self.ops {
            match op {
                Op::Push(v) => stack.push(*v),
                Op::Load(i) => stack.push(vals[*i]),
                Op::Add => bin(stack, |a, b| a + b),
                Op::Sub => bin(stack, |a, b| a - b),
                Op::Mul => bin(stack, |a, b| a * b),
                Op::Div => bin(stack, |a, b| a / b),
                Op::Neg => un(stack, |a| -a),
                Op::Log => un(stack, f64::ln),
                Op::Sqrt => un(stack, f64::sqrt),
                Op::Sq => un(stack, |a| a * a),
                Op::Expit => un(stack, |a| 1.0 / (1.0 + (-a).exp())),
                Op::Cmp(cmp) => bin(stack, |a, b| {
                    if a.is_nan() || b.is_nan() {
                        return f64::NAN;
                    }
                    let holds = match cmp {
                        Comparator::Lt => a < b,
                        Comparator::Le => a <= b,
                        Comparator::Gt => a > b,
                        Comparator::Ge => a >= b,
                    };
                    if holds {
                        1.0
                    } else {
                        0.0
                    }
                }),
            }
        }
        debug_assert_eq!(stack.len(), 1);
        stack.pop().unwrap()
    }
}

#[inline]
fn bin(stack: &mut Vec<f64>, f: impl Fn(f64, f64) -> f64) {
    let b = stack.pop().unwrap();
    let a = stack.pop().unwrap();
    stack.push(f(a, b));
}

#[inline]
fn un(stack: &mut Vec<f64>, f: impl Fn(f64) -> f64) {
    let a = stack.pop().unwrap();
    stack.push(f(a));
}

/// Compiles `expr` for the node at `time` with generation index `node_idx`.
/// `index` maps `(name, time)` to the generation index holding that value;
/// references must point strictly before the current node.
pub(crate) fn compile(
    expr: &Expr,
    time: u32,
    node_idx: usize,
    index: &HashMap<(String, u32), usize>,
) -> Result<Prog> {
    let mut ops = Vec::new();
    emit(expr, time, node_idx, index, &mut ops)?;
    Ok(Prog { ops })
}

fn resolve(
    name: &str,
    at: i64,
    node_idx: usize,
    index: &HashMap<(String, u32), usize>,
) -> Result<usize> {
    if at < 0 {
        return Err(Error::Model(format!(
            "expression references `{name}` before time 0"
        )));
    }
    let i = index
        .get(&(name.to_string(), at as u32))
        .copied()
        .ok_or_else(|| {
            Error::Model(format!("expression references unknown node `{name}` at time {at}"))
        })?;
    if i >= node_idx {
        return Err(Error::Model(format!(
            "expression references `{name}` at time {at}, which is not generated yet"
        )));
    }
    Ok(i)
}

fn emit(
    expr: &Expr,
    time: u32,
    node_idx: usize,
    index: &HashMap<(String, u32), usize>,
    ops: &mut Vec<Op>,
) -> Result<()> {
    match expr {
        Expr::Const(v) => ops.push(Op::Push(*v)),
        Expr::Time => ops.push(Op::Push(time as f64)),
        Expr::Var { name, lag } => {
            let i = resolve(name, time as i64 - *lag as i64, node_idx, index)?;
            ops.push(Op::Load(i));
        }
        Expr::Base(name) => {
            let i = resolve(name, 0, node_idx, index)?;
            ops.push(Op::Load(i));
        }
        Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
            emit(a, time, node_idx, index, ops)?;
            emit(b, time, node_idx, index, ops)?;
            ops.push(match expr {
                Expr::Add(..) => Op::Add,
                Expr::Sub(..) => Op::Sub,
                Expr::Mul(..) => Op::Mul,
                _ => Op::Div,
            });
        }
        Expr::Neg(a) => {
            emit(a, time, node_idx, index, ops)?;
            ops.push(Op::Neg);
        }
        Expr::Log(a) => {
            emit(a, time, node_idx, index, ops)?;
            ops.push(Op::Log);
        }
        Expr::Sqrt(a) => {
            emit(a, time, node_idx, index, ops)?;
            ops.push(Op::Sqrt);
        }
        Expr::Sq(a) => {
            emit(a, time, node_idx, index, ops)?;
            ops.push(Op::Sq);
        }
        Expr::Expit(a) => {
            emit(a, time, node_idx, index, ops)?;
            ops.push(Op::Expit);
        }
        Expr::Cmp { lhs, cmp, rhs } => {
            emit(lhs, time, node_idx, index, ops)?;
            emit(rhs, time, node_idx, index, ops)?;
            ops.push(Op::Cmp(*cmp));
        }
        Expr::PiecewiseT { branches, default } => {
            let chosen = branches
                .iter()
                .find(|(bound, _)| time <= *bound)
                .map(|(_, e)| e)
                .unwrap_or(default);
            emit(chosen, time, node_idx, index, ops)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{base, c, lag, log, tvar, var};

    fn idx(entries: &[(&str, u32)]) -> HashMap<(String, u32), usize> {
        entries
            .iter()
            .enumerate()
            .map(|(i, (n, t))| ((n.to_string(), *t), i))
            .collect()
    }

    #[test]
    fn compiled_matches_interpreter() {
        let index = idx(&[("x", 0), ("x", 1), ("x", 2)]);
        let e = c(2.0) * var("x") + lag("x", 1) - base("x") / c(2.0) + log(tvar());
        let prog = compile(&e, 2, 3, &index).unwrap();
        let vals = [4.0, 6.0, 10.0];
        let mut stack = Vec::new();
        let got = prog.eval(&vals, &mut stack);
        let lookup = |name: &str, t: i64| {
            index.get(&(name.to_string(), t as u32)).map(|&i| vals[i])
        };
        let want = e.eval(2, &lookup).unwrap();
        assert!((got - want).abs() < 1e-14, "{got} vs {want}");
    }

    #[test]
    fn piecewise_resolved_at_compile_time() {
        let index = idx(&[]);
        let e = crate::expr::Expr::PiecewiseT {
            branches: vec![(4, c(13.0)), (8, c(4.0))],
            default: Box::new(c(0.0)),
        };
        let mut stack = Vec::new();
        assert_eq!(compile(&e, 3, 0, &index).unwrap().eval(&[], &mut stack), 13.0);
        assert_eq!(compile(&e, 7, 0, &index).unwrap().eval(&[], &mut stack), 4.0);
        assert_eq!(compile(&e, 12, 0, &index).unwrap().eval(&[], &mut stack), 0.0);
    }

    #[test]
    fn forward_reference_rejected() {
        let index = idx(&[("x", 0), ("y", 0)]);
        // Node 0 referencing y (index 1) is a forward reference.
        assert!(compile(&var("y"), 0, 0, &index).is_err());
        assert!(compile(&var("z"), 0, 2, &index).is_err());
        assert!(compile(&lag("x", 1), 0, 2, &index).is_err());
    }
}
