//! Small LP-based branch and bound for integer-restricted master problems.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{solve_lp, LinearProgram, LpError, LpStatus};

#[derive(Clone, Copy, Debug)]
pub struct MilpOptions {
    pub rel_gap: f64,
    pub node_limit: usize,
    pub int_tol: f64,
}

impl Default for MilpOptions {
    fn default() -> Self {
        MilpOptions { rel_gap: 1e-9, node_limit: 20_000, int_tol: 1e-6 }
    }
}

#[derive(Clone, Debug)]
pub struct MilpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub bound: f64,
    pub nodes: usize,
    /// False when the node limit stopped the search before the gap closed.
    pub proven: bool,
}

struct Node {
    bound: f64,
    depth: usize,
    id: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // max-heap: smallest bound first, then deeper, then older
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.id.cmp(&self.id))
    }
}

/// Minimizes `lp` with the variables flagged in `integer` restricted to integers.
pub fn solve_milp(lp: &LinearProgram, integer: &[bool], opts: &MilpOptions) -> Result<MilpSolution, LpError> {
    lp.validate()?;
    let n = lp.num_vars();
    if integer.len() != n {
        return Err(LpError::Dimension(format!("{} integrality flags for {n} variables", integer.len())));
    }
    let mut work = lp.clone();
    for j in 0..n {
        if integer[j] {
            work.lower[j] = work.lower[j].ceil();
            work.upper[j] = work.upper[j].floor();
        }
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut heap = BinaryHeap::new();
    heap.push(Node { bound: f64::NEG_INFINITY, depth: 0, id: 0, lower: work.lower.clone(), upper: work.upper.clone() });
    let mut next_id = 1;
    let mut nodes = 0;
    let mut unbounded = false;
    let mut proven = true;
    let mut global_bound = f64::INFINITY;

    while let Some(node) = heap.pop() {
        let incumbent = best.as_ref().map_or(f64::INFINITY, |b| b.0);
        if node.bound >= incumbent - opts.rel_gap * incumbent.abs().max(1.0) {
            continue;
        }
        if nodes >= opts.node_limit {
            proven = false;
            global_bound = global_bound.min(node.bound);
            heap.push(node);
            break;
        }
        nodes += 1;
        if node.lower.iter().zip(&node.upper).any(|(l, u)| l > u) {
            continue;
        }
        work.lower.clone_from(&node.lower);
        work.upper.clone_from(&node.upper);
        let sol = solve_lp(&work)?;
        match sol.status {
            LpStatus::Infeasible => continue,
            LpStatus::Unbounded => {
                unbounded = true;
                break;
            }
            LpStatus::Optimal => {}
        }
        if sol.objective >= incumbent - opts.rel_gap * incumbent.abs().max(1.0) {
            continue;
        }
        let frac = (0..n)
            .filter(|&j| integer[j])
            .map(|j| (j, (sol.x[j] - sol.x[j].round()).abs()))
            .filter(|&(_, f)| f > opts.int_tol)
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
        match frac {
            None => {
                let mut x = sol.x.clone();
                for j in 0..n {
                    if integer[j] {
                        x[j] = x[j].round();
                    }
                }
                best = Some((sol.objective, x));
            }
            Some((j, _)) => {
                let v = sol.x[j];
                let mut down_upper = node.upper.clone();
                down_upper[j] = v.floor();
                let mut up_lower = node.lower.clone();
                up_lower[j] = v.ceil();
                heap.push(Node {
                    bound: sol.objective,
                    depth: node.depth + 1,
                    id: next_id,
                    lower: node.lower.clone(),
                    upper: down_upper,
                });
                heap.push(Node {
                    bound: sol.objective,
                    depth: node.depth + 1,
                    id: next_id + 1,
                    lower: up_lower,
                    upper: node.upper,
                });
                next_id += 2;
            }
        }
    }

    if unbounded {
        return Ok(MilpSolution {
            status: LpStatus::Unbounded,
            x: vec![0.0; n],
            objective: f64::NEG_INFINITY,
            bound: f64::NEG_INFINITY,
            nodes,
            proven: true,
        });
    }
    for node in heap.iter() {
        global_bound = global_bound.min(node.bound);
    }
    match best {
        Some((obj, x)) => Ok(MilpSolution {
            status: LpStatus::Optimal,
            x,
            objective: obj,
            bound: if proven { obj } else { global_bound.min(obj) },
            nodes,
            proven,
        }),
        None => Ok(MilpSolution {
            status: LpStatus::Infeasible,
            x: vec![0.0; n],
            objective: f64::INFINITY,
            bound: if proven { f64::INFINITY } else { global_bound },
            nodes,
            proven,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::RowSense;

    #[test]
    fn knapsack() {
        // max 5a + 4b + 3c st 2a + 3b + c <= 5, 4a + b + 2c <= 11, 3a + 4b + 2c <= 8, binaries
        let mut lp = LinearProgram::default();
        for c in [-5.0, -4.0, -3.0] {
            lp.add_var(c, 0.0, 1.0);
        }
        lp.add_row(&[(0, 2.0), (1, 3.0), (2, 1.0)], RowSense::Le, 5.0);
        lp.add_row(&[(0, 4.0), (1, 1.0), (2, 2.0)], RowSense::Le, 11.0);
        lp.add_row(&[(0, 3.0), (1, 4.0), (2, 2.0)], RowSense::Le, 8.0);
        let s = solve_milp(&lp, &[true; 3], &MilpOptions::default()).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective + 9.0).abs() < 1e-9, "{}", s.objective);
        assert!(s.proven);
    }

    #[test]
    fn fractional_lp_rounds_up() {
        // min x st 2x >= 3, x integer
        let mut lp = LinearProgram::default();
        lp.add_var(1.0, 0.0, 10.0);
        lp.add_row(&[(0, 2.0)], RowSense::Ge, 3.0);
        let s = solve_milp(&lp, &[true], &MilpOptions::default()).unwrap();
        assert_eq!(s.x, vec![2.0]);
        assert_eq!(s.nodes, 3);
    }

    #[test]
    fn integer_infeasible() {
        let mut lp = LinearProgram::default();
        lp.add_var(1.0, 0.0, 10.0);
        lp.add_row(&[(0, 2.0)], RowSense::Eq, 3.0);
        let s = solve_milp(&lp, &[true], &MilpOptions::default()).unwrap();
        assert_eq!(s.status, LpStatus::Infeasible);
    }
}
