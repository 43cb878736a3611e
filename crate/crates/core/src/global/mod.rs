//! Deterministic global optimization over boxes by interval branch and bound.

mod interval;
mod search;

pub use interval::{interval_eval, Infeasible, Interval, IntervalBox, IntervalError, Tape};
pub use search::{solve_global, Candidate, GlobalOptions, GlobalProblem, GlobalResult, GlobalStatus, SearchStats};
