//! Bounded revised simplex with a dense basis inverse.
//!
//! Every row gets a slack (`a x + s = b`, with the slack's bounds encoding the
//! row sense) and an artificial column. Phase 1 drives the artificials to zero,
//! phase 2 optimizes the real objective with the artificials fixed at zero.
//! Pricing is Dantzig's rule; after `10 * rows` iterations without objective
//! progress it falls back to Bland's rule until progress resumes.

use super::{LinearProgram, LpError, LpSolution, LpStatus, RowSense, FEASIBILITY_TOL, OPTIMALITY_TOL};

const PIVOT_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum State {
    Basic(usize),
    AtLower,
    AtUpper,
    /// nonbasic free variable sitting at zero
    Free,
}

pub(super) struct Simplex {
    m: usize,
    n: usize,
    cols: Vec<Vec<(usize, f64)>>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    orig_cost: Vec<f64>,
    cost: Vec<f64>,
    x: Vec<f64>,
    state: Vec<State>,
    basis: Vec<usize>,
    binv: Vec<f64>,
    b: Vec<f64>,
    iterations: usize,
    max_iterations: usize,
}

impl Simplex {
    pub(super) fn new(lp: &LinearProgram) -> Self {
        let m = lp.num_rows();
        let n = lp.num_vars();
        let total = n + 2 * m;
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); total];
        for t in &lp.entries {
            cols[t.col].push((t.row, t.value));
        }
        for c in cols.iter_mut().take(n) {
            c.sort_by_key(|e| e.0);
            // merge duplicates
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(c.len());
            for &(r, v) in c.iter() {
                match merged.last_mut() {
                    Some(last) if last.0 == r => last.1 += v,
                    _ => merged.push((r, v)),
                }
            }
            *c = merged;
        }
        let mut lo = lp.lower.clone();
        let mut hi = lp.upper.clone();
        lo.resize(total, 0.0);
        hi.resize(total, 0.0);
        for i in 0..m {
            let s = n + i;
            cols[s].push((i, 1.0));
            let (l, h) = match lp.senses[i] {
                RowSense::Le => (0.0, f64::INFINITY),
                RowSense::Ge => (f64::NEG_INFINITY, 0.0),
                RowSense::Eq => (0.0, 0.0),
            };
            lo[s] = l;
            hi[s] = h;
        }
        let mut orig_cost = lp.objective.clone();
        orig_cost.resize(total, 0.0);
        Simplex {
            m,
            n,
            cols,
            lo,
            hi,
            cost: vec![0.0; total],
            orig_cost,
            x: vec![0.0; total],
            state: vec![State::AtLower; total],
            basis: vec![0; m],
            binv: vec![0.0; m * m],
            b: lp.rhs.clone(),
            iterations: 0,
            max_iterations: 50_000 + 200 * (n + m),
        }
    }

    fn nonbasic_start(&self, j: usize) -> (f64, State) {
        if self.lo[j].is_finite() {
            (self.lo[j], State::AtLower)
        } else if self.hi[j].is_finite() {
            (self.hi[j], State::AtUpper)
        } else {
            (0.0, State::Free)
        }
    }

    pub(super) fn run(mut self) -> Result<LpSolution, LpError> {
        let (m, n) = (self.m, self.n);
        for j in 0..n {
            let (v, s) = self.nonbasic_start(j);
            self.x[j] = v;
            self.state[j] = s;
        }
        let mut residual = self.b.clone();
        for j in 0..n {
            if self.x[j] != 0.0 {
                for &(r, a) in &self.cols[j] {
                    residual[r] -= a * self.x[j];
                }
            }
        }
        let mut need_phase1 = false;
        for i in 0..m {
            let s = n + i;
            let art = n + m + i;
            let r = residual[i];
            if self.lo[s] <= r && r <= self.hi[s] {
                self.x[s] = r;
                self.set_basic(i, s);
                self.cols[art].push((i, 1.0));
                self.lo[art] = 0.0;
                self.hi[art] = 0.0;
                self.x[art] = 0.0;
                self.state[art] = State::AtLower;
            } else {
                let clamped = r.clamp(self.lo[s], self.hi[s]);
                self.x[s] = clamped;
                self.state[s] = if clamped == self.lo[s] { State::AtLower } else { State::AtUpper };
                let rest = r - clamped;
                let sign = if rest >= 0.0 { 1.0 } else { -1.0 };
                self.cols[art].push((i, sign));
                self.lo[art] = 0.0;
                self.hi[art] = f64::INFINITY;
                self.x[art] = rest.abs();
                self.set_basic(i, art);
                need_phase1 = true;
            }
        }
        self.refactor()?;

        let scale = 1.0 + self.b.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if need_phase1 {
            for i in 0..m {
                let art = n + m + i;
                self.cost[art] = if self.hi[art] > 0.0 { 1.0 } else { 0.0 };
            }
            let status = self.optimize()?;
            debug_assert_eq!(status, LpStatus::Optimal);
            let infeas: f64 = (0..m).map(|i| self.x[n + m + i]).sum();
            if infeas > FEASIBILITY_TOL * scale * (m as f64).max(1.0) {
                return Ok(self.finish(LpStatus::Infeasible));
            }
            for i in 0..m {
                let art = n + m + i;
                self.hi[art] = 0.0;
                self.cost[art] = 0.0;
                if !matches!(self.state[art], State::Basic(_)) {
                    self.x[art] = 0.0;
                    self.state[art] = State::AtLower;
                }
            }
            self.drive_out_artificials()?;
        }
        self.cost.clone_from(&self.orig_cost);
        let status = self.optimize()?;
        Ok(self.finish(status))
    }

    fn set_basic(&mut self, pos: usize, j: usize) {
        self.basis[pos] = j;
        self.state[j] = State::Basic(pos);
    }

    fn is_artificial(&self, j: usize) -> bool {
        j >= self.n + self.m
    }

    /// Gauss-Jordan inverse of the basis matrix, then recomputes basic values.
    fn refactor(&mut self) -> Result<(), LpError> {
        let m = self.m;
        if m == 0 {
            return Ok(());
        }
        let mut a = vec![0.0; m * m];
        for (pos, &j) in self.basis.iter().enumerate() {
            for &(r, v) in &self.cols[j] {
                a[r * m + pos] = v;
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for col in 0..m {
            let piv = (col..m)
                .max_by(|&p, &q| a[p * m + col].abs().total_cmp(&a[q * m + col].abs()))
                .unwrap();
            if a[piv * m + col].abs() < 1e-13 {
                return Err(LpError::Singular);
            }
            if piv != col {
                for k in 0..m {
                    a.swap(piv * m + k, col * m + k);
                    inv.swap(piv * m + k, col * m + k);
                }
            }
            let p = a[col * m + col];
            for k in 0..m {
                a[col * m + k] /= p;
                inv[col * m + k] /= p;
            }
            for r in 0..m {
                if r != col {
                    let f = a[r * m + col];
                    if f != 0.0 {
                        for k in 0..m {
                            a[r * m + k] -= f * a[col * m + k];
                            inv[r * m + k] -= f * inv[col * m + k];
                        }
                    }
                }
            }
        }
        self.binv = inv;
        self.recompute_basic_values();
        Ok(())
    }

    fn recompute_basic_values(&mut self) {
        let m = self.m;
        let mut rhs = self.b.clone();
        for (j, col) in self.cols.iter().enumerate() {
            if !matches!(self.state[j], State::Basic(_)) && self.x[j] != 0.0 {
                for &(r, a) in col {
                    rhs[r] -= a * self.x[j];
                }
            }
        }
        for pos in 0..m {
            let row = &self.binv[pos * m..(pos + 1) * m];
            let v: f64 = row.iter().zip(&rhs).map(|(a, b)| a * b).sum();
            self.x[self.basis[pos]] = v;
        }
    }

    /// Simplex multipliers `y' = c_B' B^-1`.
    fn multipliers(&self) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for pos in 0..m {
            let c = self.cost[self.basis[pos]];
            if c != 0.0 {
                let row = &self.binv[pos * m..(pos + 1) * m];
                for (yr, a) in y.iter_mut().zip(row) {
                    *yr += c * a;
                }
            }
        }
        y
    }

    fn reduced_cost(&self, j: usize, y: &[f64]) -> f64 {
        self.cost[j] - self.cols[j].iter().map(|&(r, a)| y[r] * a).sum::<f64>()
    }

    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        let mut alpha = vec![0.0; m];
        for &(r, a) in &self.cols[j] {
            for (pos, al) in alpha.iter_mut().enumerate() {
                *al += self.binv[pos * m + r] * a;
            }
        }
        alpha
    }

    fn objective(&self) -> f64 {
        self.cost.iter().zip(&self.x).filter(|(c, _)| **c != 0.0).map(|(c, x)| c * x).sum()
    }

    fn optimize(&mut self) -> Result<LpStatus, LpError> {
        let m = self.m;
        let total = self.cols.len();
        let mut since_progress = 0usize;
        let mut best_obj = self.objective();
        let mut since_refactor = 0usize;
        loop {
            if self.iterations >= self.max_iterations {
                return Err(LpError::IterationLimit(self.iterations));
            }
            if since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
                since_refactor = 0;
            }
            let bland = since_progress > 10 * m.max(1);
            let y = self.multipliers();

            let mut entering: Option<(usize, f64)> = None;
            for j in 0..total {
                let st = self.state[j];
                if matches!(st, State::Basic(_)) || self.lo[j] == self.hi[j] {
                    continue;
                }
                if self.is_artificial(j) && self.hi[j] == 0.0 {
                    continue;
                }
                let d = self.reduced_cost(j, &y);
                let eligible = match st {
                    State::AtLower => d < -OPTIMALITY_TOL,
                    State::AtUpper => d > OPTIMALITY_TOL,
                    State::Free => d.abs() > OPTIMALITY_TOL,
                    State::Basic(_) => false,
                };
                if !eligible {
                    continue;
                }
                if bland {
                    entering = Some((j, d));
                    break;
                }
                if entering.is_none_or(|(_, best)| d.abs() > best.abs()) {
                    entering = Some((j, d));
                }
            }
            let Some((q, d)) = entering else {
                return Ok(LpStatus::Optimal);
            };
            self.iterations += 1;
            since_refactor += 1;

            let dir = if d < 0.0 { 1.0 } else { -1.0 };
            let alpha = self.ftran(q);
            let mut theta = self.hi[q] - self.lo[q];
            let mut leave: Option<(usize, f64)> = None;
            for pos in 0..m {
                let delta = -dir * alpha[pos];
                let bj = self.basis[pos];
                let limit = if delta < -PIVOT_TOL && self.lo[bj].is_finite() {
                    (self.x[bj] - self.lo[bj]) / -delta
                } else if delta > PIVOT_TOL && self.hi[bj].is_finite() {
                    (self.hi[bj] - self.x[bj]) / delta
                } else {
                    continue;
                };
                let limit = limit.max(0.0);
                let better = match leave {
                    None => limit < theta,
                    Some((lp, _)) => {
                        if limit < theta - 1e-12 {
                            true
                        } else if limit <= theta + 1e-12 {
                            if bland {
                                bj < self.basis[lp]
                            } else {
                                alpha[pos].abs() > alpha[lp].abs()
                            }
                        } else {
                            false
                        }
                    }
                };
                if better {
                    theta = limit;
                    leave = Some((pos, delta));
                }
            }
            if theta.is_infinite() {
                return Ok(LpStatus::Unbounded);
            }

            if theta > 0.0 {
                self.x[q] += dir * theta;
                for pos in 0..m {
                    if alpha[pos] != 0.0 {
                        let bj = self.basis[pos];
                        self.x[bj] -= dir * theta * alpha[pos];
                    }
                }
            }
            match leave {
                None => {
                    // bound flip
                    if dir > 0.0 {
                        self.x[q] = self.hi[q];
                        self.state[q] = State::AtUpper;
                    } else {
                        self.x[q] = self.lo[q];
                        self.state[q] = State::AtLower;
                    }
                }
                Some((r, delta)) => {
                    let lj = self.basis[r];
                    if delta < 0.0 {
                        self.x[lj] = self.lo[lj];
                        self.state[lj] = State::AtLower;
                    } else {
                        self.x[lj] = self.hi[lj];
                        self.state[lj] = State::AtUpper;
                    }
                    self.pivot(r, q, &alpha);
                }
            }

            let obj = self.objective();
            if obj < best_obj - 1e-12 * (1.0 + best_obj.abs()) {
                best_obj = obj;
                since_progress = 0;
            } else {
                since_progress += 1;
            }
        }
    }

    fn pivot(&mut self, r: usize, q: usize, alpha: &[f64]) {
        let m = self.m;
        let p = alpha[r];
        for k in 0..m {
            self.binv[r * m + k] /= p;
        }
        for i in 0..m {
            if i != r && alpha[i] != 0.0 {
                let f = alpha[i];
                for k in 0..m {
                    self.binv[i * m + k] -= f * self.binv[r * m + k];
                }
            }
        }
        self.set_basic(r, q);
    }

    /// Degenerate pivots replacing basic artificials (at zero) by real columns.
    fn drive_out_artificials(&mut self) -> Result<(), LpError> {
        let m = self.m;
        for pos in 0..m {
            let j = self.basis[pos];
            if !self.is_artificial(j) {
                continue;
            }
            let row: Vec<f64> = self.binv[pos * m..(pos + 1) * m].to_vec();
            let cand = (0..self.n + m).find(|&k| {
                !matches!(self.state[k], State::Basic(_))
                    && self.lo[k] != self.hi[k]
                    && self.cols[k].iter().map(|&(r, a)| row[r] * a).sum::<f64>().abs() > 1e-7
            });
            if let Some(k) = cand {
                let alpha = self.ftran(k);
                self.x[j] = 0.0;
                self.state[j] = State::AtLower;
                self.pivot(pos, k, &alpha);
            }
        }
        self.refactor()
    }

    fn finish(mut self, status: LpStatus) -> LpSolution {
        let n = self.n;
        if status == LpStatus::Optimal {
            // clean basic values against accumulated drift
            let _ = self.refactor();
        }
        let y = if status == LpStatus::Optimal { self.multipliers() } else { vec![0.0; self.m] };
        let reduced_costs: Vec<f64> = if status == LpStatus::Optimal {
            (0..n)
                .map(|j| if matches!(self.state[j], State::Basic(_)) { 0.0 } else { self.reduced_cost(j, &y) })
                .collect()
        } else {
            vec![0.0; n]
        };
        let x: Vec<f64> = self.x[..n].to_vec();
        let objective = match status {
            LpStatus::Optimal => x.iter().zip(&self.orig_cost).map(|(a, c)| a * c).sum(),
            LpStatus::Infeasible => f64::INFINITY,
            LpStatus::Unbounded => f64::NEG_INFINITY,
        };
        LpSolution { status, x, duals: y, reduced_costs, objective, iterations: self.iterations }
    }
}
