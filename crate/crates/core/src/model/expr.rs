//! Expression trees for block objectives and constraints.
//!
//! Variables are referenced by their position in the owning block's variable
//! vector: linking `y` components first, then the inner `z` variables.

use std::fmt;

use thiserror::Error;

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    /// n-ary sum
    Add(Vec<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Sqr(Box<Expr>),
    Sqrt(Box<Expr>),
    Powi(Box<Expr>, i32),
    Exp(Box<Expr>),
    Log(Box<Expr>),
}

#[derive(Clone, Copy, Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("argument of {0} outside its domain")]
    Domain(&'static str),
    #[error("evaluation produced NaN")]
    NaN,
    #[error("variable index {0} not covered by the assignment")]
    MissingVariable(usize),
}

impl Expr {
    pub fn constant(v: f64) -> Expr {
        Expr::Const(v)
    }

    pub fn var(i: usize) -> Expr {
        Expr::Var(i)
    }

    pub fn sum(terms: Vec<Expr>) -> Expr {
        match terms.len() {
            0 => Expr::Const(0.0),
            1 => terms.into_iter().next().unwrap(),
            _ => Expr::Add(terms),
        }
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        Expr::Sub(Box::new(a), Box::new(b))
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        Expr::Mul(Box::new(a), Box::new(b))
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        Expr::Div(Box::new(a), Box::new(b))
    }

    pub fn neg(a: Expr) -> Expr {
        Expr::Neg(Box::new(a))
    }

    pub fn sqr(a: Expr) -> Expr {
        Expr::Sqr(Box::new(a))
    }

    pub fn sqrt(a: Expr) -> Expr {
        Expr::Sqrt(Box::new(a))
    }

    pub fn powi(a: Expr, n: i32) -> Expr {
        Expr::Powi(Box::new(a), n)
    }

    pub fn exp(a: Expr) -> Expr {
        Expr::Exp(Box::new(a))
    }

    pub fn log(a: Expr) -> Expr {
        Expr::Log(Box::new(a))
    }

    /// `coef * x_var`, folded to a bare variable when `coef == 1`.
    pub fn scaled_var(coef: f64, var: usize) -> Expr {
        if coef == 1.0 {
            Expr::Var(var)
        } else {
            Expr::mul(Expr::Const(coef), Expr::Var(var))
        }
    }

    /// Affine expression `constant + sum coef * x_var`.
    pub fn linear(constant: f64, terms: &[(usize, f64)]) -> Expr {
        let mut parts = Vec::with_capacity(terms.len() + 1);
        if constant != 0.0 || terms.is_empty() {
            parts.push(Expr::Const(constant));
        }
        parts.extend(
            terms
                .iter()
                .filter(|(_, c)| *c != 0.0)
                .map(|&(v, c)| Expr::scaled_var(c, v)),
        );
        Expr::sum(parts)
    }

    pub fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::Const(_) | Expr::Var(_) => Vec::new(),
            Expr::Add(ts) => ts.iter().collect(),
            Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => vec![a, b],
            Expr::Neg(a)
            | Expr::Sqr(a)
            | Expr::Sqrt(a)
            | Expr::Powi(a, _)
            | Expr::Exp(a)
            | Expr::Log(a) => vec![a],
        }
    }

    /// Largest variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Var(i) => Some(*i),
            _ => self.children().into_iter().filter_map(Expr::max_var).max(),
        }
    }

    /// Sorted, deduplicated variable indices referenced by the expression.
    pub fn variables(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out.sort_unstable();
        out.dedup();
        out
    }

    fn collect_vars(&self, out: &mut Vec<usize>) {
        if let Expr::Var(i) = self {
            out.push(*i);
        }
        for c in self.children() {
            c.collect_vars(out);
        }
    }

    pub fn node_count(&self) -> usize {
        1 + self
            .children()
            .into_iter()
            .map(Expr::node_count)
            .sum::<usize>()
    }

    /// Rewrites every variable index through `map`.
    pub fn remap_vars(&self, map: &dyn Fn(usize) -> usize) -> Expr {
        let r = |e: &Expr| Box::new(e.remap_vars(map));
        match self {
            Expr::Const(c) => Expr::Const(*c),
            Expr::Var(i) => Expr::Var(map(*i)),
            Expr::Add(ts) => Expr::Add(ts.iter().map(|t| t.remap_vars(map)).collect()),
            Expr::Sub(a, b) => Expr::Sub(r(a), r(b)),
            Expr::Mul(a, b) => Expr::Mul(r(a), r(b)),
            Expr::Div(a, b) => Expr::Div(r(a), r(b)),
            Expr::Neg(a) => Expr::Neg(r(a)),
            Expr::Sqr(a) => Expr::Sqr(r(a)),
            Expr::Sqrt(a) => Expr::Sqrt(r(a)),
            Expr::Powi(a, n) => Expr::Powi(r(a), *n),
            Expr::Exp(a) => Expr::Exp(r(a)),
            Expr::Log(a) => Expr::Log(r(a)),
        }
    }

    /// Replaces variables by constants where `value(i)` is `Some`.
    pub fn substitute(&self, value: &dyn Fn(usize) -> Option<f64>) -> Expr {
        let r = |e: &Expr| Box::new(e.substitute(value));
        match self {
            Expr::Const(c) => Expr::Const(*c),
            Expr::Var(i) => match value(*i) {
                Some(v) => Expr::Const(v),
                None => Expr::Var(*i),
            },
            Expr::Add(ts) => Expr::Add(ts.iter().map(|t| t.substitute(value)).collect()),
            Expr::Sub(a, b) => Expr::Sub(r(a), r(b)),
            Expr::Mul(a, b) => Expr::Mul(r(a), r(b)),
            Expr::Div(a, b) => Expr::Div(r(a), r(b)),
            Expr::Neg(a) => Expr::Neg(r(a)),
            Expr::Sqr(a) => Expr::Sqr(r(a)),
            Expr::Sqrt(a) => Expr::Sqrt(r(a)),
            Expr::Powi(a, n) => Expr::Powi(r(a), *n),
            Expr::Exp(a) => Expr::Exp(r(a)),
            Expr::Log(a) => Expr::Log(r(a)),
        }
    }

    /// Exact recursive evaluation at a point.
    pub fn eval(&self, point: &[f64]) -> Result<f64, EvalError> {
        let v = match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => *point.get(*i).ok_or(EvalError::MissingVariable(*i))?,
            Expr::Add(ts) => {
                let mut s = 0.0;
                for t in ts {
                    s += t.eval(point)?;
                }
                s
            }
            Expr::Sub(a, b) => a.eval(point)? - b.eval(point)?,
            Expr::Mul(a, b) => a.eval(point)? * b.eval(point)?,
            Expr::Div(a, b) => {
                let den = b.eval(point)?;
                if den == 0.0 {
                    return Err(EvalError::DivisionByZero);
                }
                a.eval(point)? / den
            }
            Expr::Neg(a) => -a.eval(point)?,
            Expr::Sqr(a) => {
                let x = a.eval(point)?;
                x * x
            }
            Expr::Sqrt(a) => {
                let x = a.eval(point)?;
                if x < 0.0 {
                    return Err(EvalError::Domain("sqrt"));
                }
                x.sqrt()
            }
            Expr::Powi(a, n) => {
                let x = a.eval(point)?;
                if *n < 0 && x == 0.0 {
                    return Err(EvalError::DivisionByZero);
                }
                x.powi(*n)
            }
            Expr::Exp(a) => a.eval(point)?.exp(),
            Expr::Log(a) => {
                let x = a.eval(point)?;
                if x <= 0.0 {
                    return Err(EvalError::Domain("log"));
                }
                x.ln()
            }
        };
        if v.is_nan() {
            Err(EvalError::NaN)
        } else {
            Ok(v)
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(i) => write!(f, "v{i}"),
            Expr::Add(ts) => {
                write!(f, "(")?;
                for (k, t) in ts.iter().enumerate() {
                    if k > 0 {
                        write!(f, " + ")?;
                    }
                    write!(f, "{t}")?;
                }
                write!(f, ")")
            }
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "{a}*{b}"),
            Expr::Div(a, b) => write!(f, "{a}/{b}"),
            Expr::Neg(a) => write!(f, "-{a}"),
            Expr::Sqr(a) => write!(f, "sqr({a})"),
            Expr::Sqrt(a) => write!(f, "sqrt({a})"),
            Expr::Powi(a, n) => write!(f, "{a}^{n}"),
            Expr::Exp(a) => write!(f, "exp({a})"),
            Expr::Log(a) => write!(f, "log({a})"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqr_of_negative() {
        assert_eq!(Expr::sqr(Expr::var(0)).eval(&[-2.0]), Ok(4.0));
    }

    #[test]
    fn bilinear_minus_constant() {
        let e = Expr::sub(Expr::mul(Expr::var(0), Expr::var(1)), Expr::constant(3.0));
        assert_eq!(e.eval(&[2.0, 5.0]), Ok(7.0));
    }

    #[test]
    fn log_at_zero_is_domain_error() {
        assert_eq!(
            Expr::log(Expr::var(0)).eval(&[0.0]),
            Err(EvalError::Domain("log"))
        );
        assert_eq!(
            Expr::sqrt(Expr::var(0)).eval(&[-1.0]),
            Err(EvalError::Domain("sqrt"))
        );
    }

    #[test]
    fn division_by_zero() {
        let e = Expr::div(Expr::constant(1.0), Expr::var(0));
        assert_eq!(e.eval(&[0.0]), Err(EvalError::DivisionByZero));
        assert_eq!(Expr::powi(Expr::var(0), -2).eval(&[0.0]), Err(EvalError::DivisionByZero));
    }

    #[test]
    fn nan_is_an_error() {
        let e = Expr::sub(Expr::exp(Expr::var(0)), Expr::exp(Expr::var(0)));
        assert_eq!(e.eval(&[1e6]), Err(EvalError::NaN));
    }

    #[test]
    fn variables_and_remap() {
        let e = Expr::linear(1.0, &[(3, 2.0), (1, -1.0), (3, 1.0)]);
        assert_eq!(e.variables(), vec![1, 3]);
        assert_eq!(e.max_var(), Some(3));
        let r = e.remap_vars(&|i| i + 10);
        assert_eq!(r.variables(), vec![11, 13]);
        assert_eq!(e.eval(&[0.0, 5.0, 0.0, 2.0]), Ok(1.0 + 4.0 - 5.0 + 2.0));
    }
}
