//! Small expression language for structural-equation parameters and custom
//! regression features: arithmetic, `log`/`sqrt`/squares, the logistic
//! function, indicator comparisons, and piecewise-in-time branches.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::longdata::Comparator;
use crate::Result;

/// An expression evaluated at a time point against a variable lookup.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expr {
    /// Literal constant.
    Const(f64),
    /// The current time index as a number.
    Time,
    /// Value of `name` at time `t - lag`.
    Var { name: String, #[serde(default)] lag: u32 },
    /// Value of `name` at time 0.
    Base(String),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Log(Box<Expr>),
    Sqrt(Box<Expr>),
    /// Square.
    Sq(Box<Expr>),
    /// Logistic function `1/(1+exp(-x))`.
    Expit(Box<Expr>),
    /// Indicator: 1.0 when the comparison holds, else 0.0.
    Cmp { lhs: Box<Expr>, cmp: Comparator, rhs: Box<Expr> },
    /// First branch whose time bound satisfies `t <= bound` is taken;
    /// `default` applies when none does.
    PiecewiseT { branches: Vec<(u32, Expr)>, default: Box<Expr> },
}

impl Expr {
    /// Evaluates at time `t`. `lookup(name, time)` returns the variable value
    /// (`None` when the variable does not exist at all). Values at negative
    /// times evaluate to `NaN`; `NaN` inputs propagate.
    pub fn eval(&self, t: i64, lookup: &dyn Fn(&str, i64) -> Option<f64>) -> Result<f64> {
        let unknown = |name: &str| {
            Error::Model(format!("expression references unknown variable `{name}`"))
        };
        Ok(match self {
            Expr::Const(v) => *v,
            Expr::Time => t as f64,
            Expr::Var { name, lag } => {
                let s = t - *lag as i64;
                if s < 0 {
                    f64::NAN
                } else {
                    lookup(name, s).ok_or_else(|| unknown(name))?
                }
            }
            Expr::Base(name) => lookup(name, 0).ok_or_else(|| unknown(name))?,
            Expr::Add(a, b) => a.eval(t, lookup)? + b.eval(t, lookup)?,
            Expr::Sub(a, b) => a.eval(t, lookup)? - b.eval(t, lookup)?,
            Expr::Mul(a, b) => a.eval(t, lookup)? * b.eval(t, lookup)?,
            Expr::Div(a, b) => a.eval(t, lookup)? / b.eval(t, lookup)?,
            Expr::Neg(a) => -a.eval(t, lookup)?,
            Expr::Log(a) => a.eval(t, lookup)?.ln(),
            Expr::Sqrt(a) => a.eval(t, lookup)?.sqrt(),
            Expr::Sq(a) => {
                let v = a.eval(t, lookup)?;
                v * v
            }
            Expr::Expit(a) => {
                let x = a.eval(t, lookup)?;
                1.0 / (1.0 + (-x).exp())
            }
            Expr::Cmp { lhs, cmp, rhs } => {
                let l = lhs.eval(t, lookup)?;
                let r = rhs.eval(t, lookup)?;
                if l.is_nan() || r.is_nan() {
                    f64::NAN
                } else {
                    let holds = match cmp {
                        Comparator::Lt => l < r,
                        Comparator::Le => l <= r,
                        Comparator::Gt => l > r,
                        Comparator::Ge => l >= r,
                    };
                    if holds {
                        1.0
                    } else {
                        0.0
                    }
                }
            }
            Expr::PiecewiseT { branches, default } => {
                for (bound, e) in branches {
                    if t <= *bound as i64 {
                        return e.eval(t, lookup);
                    }
                }
                default.eval(t, lookup)?
            }
        })
    }

    /// Base names of every variable the expression reads.
    pub fn variables(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out.sort_unstable();
        out.dedup();
        out
    }

    fn collect_vars<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Const(_) | Expr::Time => {}
            Expr::Var { name, .. } => out.push(name),
            Expr::Base(name) => out.push(name),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Expr::Neg(a) | Expr::Log(a) | Expr::Sqrt(a) | Expr::Sq(a) | Expr::Expit(a) => {
                a.collect_vars(out)
            }
            Expr::Cmp { lhs, rhs, .. } => {
                lhs.collect_vars(out);
                rhs.collect_vars(out);
            }
            Expr::PiecewiseT { branches, default } => {
                for (_, e) in branches {
                    e.collect_vars(out);
                }
                default.collect_vars(out);
            }
        }
    }
}

/// Constant.
pub fn c(v: f64) -> Expr {
    Expr::Const(v)
}

/// Current-time value of a variable.
pub fn var(name: &str) -> Expr {
    Expr::Var { name: name.into(), lag: 0 }
}

/// Value of a variable `k` steps in the past.
pub fn lag(name: &str, k: u32) -> Expr {
    Expr::Var { name: name.into(), lag: k }
}

/// Time-0 value of a variable.
pub fn base(name: &str) -> Expr {
    Expr::Base(name.into())
}

/// The time index.
pub fn tvar() -> Expr {
    Expr::Time
}

pub fn log(e: Expr) -> Expr {
    Expr::Log(Box::new(e))
}

pub fn sqrt(e: Expr) -> Expr {
    Expr::Sqrt(Box::new(e))
}

pub fn sq(e: Expr) -> Expr {
    Expr::Sq(Box::new(e))
}

pub fn expit(e: Expr) -> Expr {
    Expr::Expit(Box::new(e))
}

/// Indicator of a comparison between two expressions.
pub fn cmp(lhs: Expr, op: Comparator, rhs: Expr) -> Expr {
    Expr::Cmp { lhs: Box::new(lhs), cmp: op, rhs: Box::new(rhs) }
}

impl std::ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::Add(Box::new(self), Box::new(rhs))
    }
}

impl std::ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        Expr::Sub(Box::new(self), Box::new(rhs))
    }
}

impl std::ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::Mul(Box::new(self), Box::new(rhs))
    }
}

impl std::ops::Div for Expr {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        Expr::Div(Box::new(self), Box::new(rhs))
    }
}

impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::Neg(Box::new(self))
    }
}
