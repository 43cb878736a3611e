//! Closed intervals with outward-padded endpoints.

use std::fmt;

use thiserror::Error;

use crate::model::Expr;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

/// Why an interval evaluation has no meaningful enclosure.
#[derive(Clone, Copy, Debug, Error, PartialEq, Eq)]
pub enum IntervalError {
    #[error("denominator interval contains zero")]
    ZeroDivisor,
    #[error("no point of the box lies in the domain")]
    EmptyDomain,
}

fn down(v: f64) -> f64 {
    if v.is_finite() {
        v.next_down()
    } else {
        v
    }
}

fn up(v: f64) -> f64 {
    if v.is_finite() {
        v.next_up()
    } else {
        v
    }
}

/// Product with the convention `0 * inf = 0`, as needed for bound arithmetic.
fn bmul(a: f64, b: f64) -> f64 {
    if a == 0.0 || b == 0.0 {
        0.0
    } else {
        a * b
    }
}

impl Interval {
    pub const ENTIRE: Interval = Interval { lo: f64::NEG_INFINITY, hi: f64::INFINITY };

    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi, "bad interval [{lo}, {hi}]");
        Interval { lo, hi }
    }

    pub fn point(v: f64) -> Self {
        Interval { lo: v, hi: v }
    }

    fn padded(lo: f64, hi: f64) -> Self {
        Interval { lo: down(lo), hi: up(hi) }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        match (self.lo.is_finite(), self.hi.is_finite()) {
            (true, true) => self.lo + 0.5 * (self.hi - self.lo),
            (true, false) => self.lo.max(0.0) + 1.0,
            (false, true) => self.hi.min(0.0) - 1.0,
            (false, false) => 0.0,
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn contains_zero(&self) -> bool {
        self.contains(0.0)
    }

    pub fn is_subset_of(&self, other: &Interval) -> bool {
        other.lo <= self.lo && self.hi <= other.hi
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo <= hi).then_some(Interval { lo, hi })
    }

    pub fn hull(&self, other: &Interval) -> Interval {
        Interval { lo: self.lo.min(other.lo), hi: self.hi.max(other.hi) }
    }

    pub fn add(&self, o: &Interval) -> Interval {
        Self::padded(self.lo + o.lo, self.hi + o.hi)
    }

    pub fn sub(&self, o: &Interval) -> Interval {
        Self::padded(self.lo - o.hi, self.hi - o.lo)
    }

    pub fn neg(&self) -> Interval {
        Interval { lo: -self.hi, hi: -self.lo }
    }

    pub fn mul(&self, o: &Interval) -> Interval {
        let c = [bmul(self.lo, o.lo), bmul(self.lo, o.hi), bmul(self.hi, o.lo), bmul(self.hi, o.hi)];
        let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self::padded(lo, hi)
    }

    pub fn recip(&self) -> Result<Interval, IntervalError> {
        if self.contains_zero() {
            return Err(IntervalError::ZeroDivisor);
        }
        Ok(Self::padded(1.0 / self.hi, 1.0 / self.lo))
    }

    pub fn div(&self, o: &Interval) -> Result<Interval, IntervalError> {
        Ok(self.mul(&o.recip()?))
    }

    pub fn sqr(&self) -> Interval {
        let a = self.lo.abs();
        let b = self.hi.abs();
        let hi = up(a.max(b) * a.max(b));
        if self.contains_zero() {
            Interval { lo: 0.0, hi }
        } else {
            let m = a.min(b);
            Interval { lo: down(m * m).max(0.0), hi }
        }
    }

    pub fn sqrt(&self) -> Result<Interval, IntervalError> {
        if self.hi < 0.0 {
            return Err(IntervalError::EmptyDomain);
        }
        let lo = self.lo.max(0.0);
        Ok(Interval { lo: down(lo.sqrt()).max(0.0), hi: up(self.hi.sqrt()) })
    }

    pub fn powi(&self, n: i32) -> Result<Interval, IntervalError> {
        if n == 0 {
            return Ok(Interval::point(1.0));
        }
        if n < 0 {
            return self.powi(-n)?.recip();
        }
        if n % 2 == 0 {
            let a = self.lo.abs();
            let b = self.hi.abs();
            let hi = up(a.max(b).powi(n));
            let lo = if self.contains_zero() { 0.0 } else { down(a.min(b).powi(n)).max(0.0) };
            Ok(Interval { lo, hi })
        } else {
            Ok(Self::padded(self.lo.powi(n), self.hi.powi(n)))
        }
    }

    pub fn exp(&self) -> Interval {
        Interval { lo: down(self.lo.exp()).max(0.0), hi: up(self.hi.exp()) }
    }

    pub fn log(&self) -> Result<Interval, IntervalError> {
        if self.hi <= 0.0 {
            return Err(IntervalError::EmptyDomain);
        }
        let lo = if self.lo <= 0.0 { f64::NEG_INFINITY } else { down(self.lo.ln()) };
        Ok(Interval { lo, hi: up(self.hi.ln()) })
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

/// Per-variable intervals.
pub type IntervalBox = [Interval];

/// Interval extension of `expr` over `bx`.
///
/// Partial domain violations (a `sqrt` or `log` argument straddling zero) are
/// clipped to the valid part; an argument entirely outside the domain gives
/// [`IntervalError::EmptyDomain`] and a denominator containing zero gives
/// [`IntervalError::ZeroDivisor`].
pub fn interval_eval(expr: &Expr, bx: &IntervalBox) -> Result<Interval, IntervalError> {
    Ok(match expr {
        Expr::Const(c) => Interval::point(*c),
        Expr::Var(i) => bx[*i],
        Expr::Add(terms) => {
            let mut acc = Interval::point(0.0);
            for t in terms {
                acc = acc.add(&interval_eval(t, bx)?);
            }
            acc
        }
        Expr::Sub(a, b) => interval_eval(a, bx)?.sub(&interval_eval(b, bx)?),
        Expr::Mul(a, b) => interval_eval(a, bx)?.mul(&interval_eval(b, bx)?),
        Expr::Div(a, b) => interval_eval(a, bx)?.div(&interval_eval(b, bx)?)?,
        Expr::Neg(a) => interval_eval(a, bx)?.neg(),
        Expr::Sqr(a) => interval_eval(a, bx)?.sqr(),
        Expr::Sqrt(a) => interval_eval(a, bx)?.sqrt()?,
        Expr::Powi(a, n) => interval_eval(a, bx)?.powi(*n)?,
        Expr::Exp(a) => interval_eval(a, bx)?.exp(),
        Expr::Log(a) => interval_eval(a, bx)?.log()?,
    })
}

#[derive(Clone, Debug)]
enum Op {
    Const(f64),
    Var(usize),
    Add(Vec<usize>),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Neg(usize),
    Sqr(usize),
    Sqrt(usize),
    Powi(usize, i32),
    Exp(usize),
    Log(usize),
}

/// Post-order flattening of an expression for forward-backward propagation.
#[derive(Clone, Debug)]
pub struct Tape {
    ops: Vec<Op>,
}

/// The box contains no point satisfying the propagated constraint.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Infeasible;

impl Tape {
    pub fn new(expr: &Expr) -> Self {
        let mut ops = Vec::with_capacity(expr.node_count());
        Self::push(expr, &mut ops);
        Tape { ops }
    }

    fn push(e: &Expr, ops: &mut Vec<Op>) -> usize {
        let op = match e {
            Expr::Const(c) => Op::Const(*c),
            Expr::Var(i) => Op::Var(*i),
            Expr::Add(ts) => {
                let ch = ts.iter().map(|t| Self::push(t, ops)).collect();
                Op::Add(ch)
            }
            Expr::Sub(a, b) => {
                let a = Self::push(a, ops);
                Op::Sub(a, Self::push(b, ops))
            }
            Expr::Mul(a, b) => {
                let a = Self::push(a, ops);
                Op::Mul(a, Self::push(b, ops))
            }
            Expr::Div(a, b) => {
                let a = Self::push(a, ops);
                Op::Div(a, Self::push(b, ops))
            }
            Expr::Neg(a) => Op::Neg(Self::push(a, ops)),
            Expr::Sqr(a) => Op::Sqr(Self::push(a, ops)),
            Expr::Sqrt(a) => Op::Sqrt(Self::push(a, ops)),
            Expr::Powi(a, n) => Op::Powi(Self::push(a, ops), *n),
            Expr::Exp(a) => Op::Exp(Self::push(a, ops)),
            Expr::Log(a) => Op::Log(Self::push(a, ops)),
        };
        ops.push(op);
        ops.len() - 1
    }

    /// Enclosure of the expression over `bx`, one interval per tape node.
    /// A zero-containing denominator widens to the whole line instead of failing.
    pub fn forward(&self, bx: &IntervalBox) -> Result<Vec<Interval>, Infeasible> {
        let mut v: Vec<Interval> = Vec::with_capacity(self.ops.len());
        for op in &self.ops {
            let r = match op {
                Op::Const(c) => Interval::point(*c),
                Op::Var(i) => bx[*i],
                Op::Add(ch) => ch.iter().fold(Interval::point(0.0), |acc, &c| acc.add(&v[c])),
                Op::Sub(a, b) => v[*a].sub(&v[*b]),
                Op::Mul(a, b) => v[*a].mul(&v[*b]),
                Op::Div(a, b) => v[*a].div(&v[*b]).unwrap_or(Interval::ENTIRE),
                Op::Neg(a) => v[*a].neg(),
                Op::Sqr(a) => v[*a].sqr(),
                Op::Sqrt(a) => v[*a].sqrt().map_err(|_| Infeasible)?,
                Op::Powi(a, n) => match v[*a].powi(*n) {
                    Ok(r) => r,
                    Err(IntervalError::ZeroDivisor) => Interval::ENTIRE,
                    Err(IntervalError::EmptyDomain) => return Err(Infeasible),
                },
                Op::Exp(a) => v[*a].exp(),
                Op::Log(a) => v[*a].log().map_err(|_| Infeasible)?,
            };
            v.push(r);
        }
        Ok(v)
    }

    /// Value enclosure of the whole expression.
    pub fn range(&self, bx: &IntervalBox) -> Result<Interval, Infeasible> {
        Ok(*self.forward(bx)?.last().expect("empty tape"))
    }

    /// Narrows `bx` to points whose expression value can lie in `target`.
    /// Returns the forward enclosure computed before narrowing.
    pub fn propagate(&self, bx: &mut [Interval], target: Interval) -> Result<Interval, Infeasible> {
        let fwd = self.forward(bx)?;
        let root = *fwd.last().expect("empty tape");
        let mut t = fwd.clone();
        let last = t.len() - 1;
        t[last] = root.intersect(&target).ok_or(Infeasible)?;
        if t[last] == root {
            return Ok(root);
        }
        for k in (0..self.ops.len()).rev() {
            let tk = t[k];
            match &self.ops[k] {
                Op::Const(c) => {
                    if !tk.contains(*c) {
                        return Err(Infeasible);
                    }
                }
                Op::Var(i) => {
                    bx[*i] = bx[*i].intersect(&tk).ok_or(Infeasible)?;
                }
                Op::Add(ch) => {
                    if ch.len() <= 8 {
                        for (pos, &c) in ch.iter().enumerate() {
                            let others = ch
                                .iter()
                                .enumerate()
                                .filter(|&(q, _)| q != pos)
                                .fold(Interval::point(0.0), |acc, (_, &o)| acc.add(&t[o]));
                            narrow(&mut t, c, tk.sub(&others))?;
                        }
                    } else {
                        let total = ch.iter().fold(Interval::point(0.0), |acc, &o| acc.add(&t[o]));
                        for &c in ch {
                            // others = total - t[c] overestimates; still valid
                            let others = Interval::padded(total.lo - t[c].lo, total.hi - t[c].hi);
                            if others.lo <= others.hi {
                                narrow(&mut t, c, tk.sub(&others))?;
                            }
                        }
                    }
                }
                Op::Sub(a, b) => {
                    let (a, b) = (*a, *b);
                    let ta = tk.add(&t[b]);
                    narrow(&mut t, a, ta)?;
                    let tb = t[a].sub(&tk);
                    narrow(&mut t, b, tb)?;
                }
                Op::Mul(a, b) => {
                    let (a, b) = (*a, *b);
                    if let Ok(q) = tk.div(&t[b]) {
                        narrow(&mut t, a, q)?;
                    }
                    if let Ok(q) = tk.div(&t[a]) {
                        narrow(&mut t, b, q)?;
                    }
                }
                Op::Div(a, b) => {
                    let (a, b) = (*a, *b);
                    if !t[b].contains_zero() {
                        let ta = tk.mul(&t[b]);
                        narrow(&mut t, a, ta)?;
                    }
                    if let Ok(q) = t[a].div(&tk) {
                        narrow(&mut t, b, q)?;
                    }
                }
                Op::Neg(a) => narrow(&mut t, *a, tk.neg())?,
                Op::Sqr(a) => {
                    let a = *a;
                    narrow_even_root(&mut t, a, tk, 2)?;
                }
                Op::Sqrt(a) => {
                    let lo = tk.lo.max(0.0);
                    let target = Interval::padded(if lo == 0.0 { f64::NEG_INFINITY } else { lo * lo }, tk.hi * tk.hi);
                    narrow(&mut t, *a, target)?;
                }
                Op::Powi(a, n) => {
                    let (a, n) = (*a, *n);
                    if n > 0 && n % 2 == 0 {
                        narrow_even_root(&mut t, a, tk, n)?;
                    } else if n > 0 {
                        let target = Interval::padded(odd_root(tk.lo, n), odd_root(tk.hi, n));
                        narrow(&mut t, a, target)?;
                    }
                }
                Op::Exp(a) => {
                    if tk.hi <= 0.0 {
                        return Err(Infeasible);
                    }
                    let lo = if tk.lo <= 0.0 { f64::NEG_INFINITY } else { tk.lo.ln() };
                    narrow(&mut t, *a, Interval::padded(lo, tk.hi.ln()))?;
                }
                Op::Log(a) => {
                    narrow(&mut t, *a, Interval::padded(tk.lo.exp(), tk.hi.exp()))?;
                }
            }
        }
        Ok(root)
    }
}

fn narrow(t: &mut [Interval], k: usize, target: Interval) -> Result<(), Infeasible> {
    if target.lo.is_nan() || target.hi.is_nan() {
        return Ok(());
    }
    t[k] = t[k].intersect(&target).ok_or(Infeasible)?;
    Ok(())
}

fn odd_root(v: f64, n: i32) -> f64 {
    v.signum() * v.abs().powf(1.0 / n as f64)
}

fn narrow_even_root(t: &mut [Interval], a: usize, tk: Interval, n: i32) -> Result<(), Infeasible> {
    if tk.hi < 0.0 {
        return Err(Infeasible);
    }
    let r = up(up(tk.hi.powf(1.0 / n as f64)));
    let outer = Interval { lo: -r, hi: r };
    let base = t[a].intersect(&outer).ok_or(Infeasible)?;
    if tk.lo > 0.0 {
        let s = down(down(tk.lo.powf(1.0 / n as f64)));
        let neg = base.intersect(&Interval { lo: f64::NEG_INFINITY, hi: -s });
        let pos = base.intersect(&Interval { lo: s, hi: f64::INFINITY });
        t[a] = match (neg, pos) {
            (Some(x), Some(y)) => x.hull(&y),
            (Some(x), None) | (None, Some(x)) => x,
            (None, None) => return Err(Infeasible),
        };
    } else {
        t[a] = base;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(lo: f64, hi: f64) -> Interval {
        Interval::new(lo, hi)
    }

    #[test]
    fn sqr_is_not_a_product() {
        let r = interval_eval(&Expr::sqr(Expr::var(0)), &[iv(-1.0, 2.0)]).unwrap();
        assert_eq!(r.lo, 0.0);
        assert!(r.hi >= 4.0 && r.hi - 4.0 < 1e-12);
    }

    #[test]
    fn sum_of_intervals() {
        let e = Expr::sum(vec![Expr::var(0), Expr::var(1)]);
        let r = interval_eval(&e, &[iv(1.0, 2.0), iv(3.0, 4.0)]).unwrap();
        assert!(r.contains(4.0) && r.contains(6.0));
        assert!(r.width() < 2.0 + 1e-12);
    }

    #[test]
    fn zero_in_denominator() {
        let e = Expr::div(Expr::var(0), Expr::var(1));
        assert_eq!(interval_eval(&e, &[iv(1.0, 2.0), iv(-1.0, 1.0)]), Err(IntervalError::ZeroDivisor));
    }

    #[test]
    fn log_of_nonpositive_box() {
        let e = Expr::log(Expr::var(0));
        assert_eq!(interval_eval(&e, &[iv(-2.0, 0.0)]), Err(IntervalError::EmptyDomain));
        let r = interval_eval(&e, &[iv(-2.0, 1.0)]).unwrap();
        assert_eq!(r.lo, f64::NEG_INFINITY);
    }

    #[test]
    fn propagation_fixes_tangent_centres() {
        // 4 - (a - b)^2 <= 0 with a in [1, 1.5], b in [2.5, 3]
        let g = Expr::sub(Expr::constant(4.0), Expr::sqr(Expr::sub(Expr::var(0), Expr::var(1))));
        let tape = Tape::new(&g);
        let mut bx = vec![iv(1.0, 1.5), iv(2.5, 3.0)];
        for _ in 0..4 {
            tape.propagate(&mut bx, Interval { lo: f64::NEG_INFINITY, hi: 0.0 }).unwrap();
        }
        assert!(bx[0].hi - 1.0 < 1e-9, "{}", bx[0]);
        assert!(3.0 - bx[1].lo < 1e-9, "{}", bx[1]);
    }

    #[test]
    fn propagation_detects_infeasibility() {
        let g = Expr::linear(3.0, &[(0, -1.0)]); // 3 - x <= 0
        let tape = Tape::new(&g);
        let mut bx = vec![iv(0.0, 2.0)];
        assert_eq!(tape.propagate(&mut bx, Interval { lo: f64::NEG_INFINITY, hi: 0.0 }), Err(Infeasible));
    }
}
