use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Block, Convexity, Expr, InnerVar, LinkingMatrix, LinkingVar, StructuredModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    /// Processing time of one batch on one unit.
    pub time: f64,
    pub max_units: i64,
    /// Capital cost of `n` units is `capital * n^exponent`.
    pub capital: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub probability: f64,
    pub demand: f64,
}

/// Multi-stage plant whose unit counts are fixed before demand is known.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SharedDesignInstance {
    pub stages: Vec<Stage>,
    pub scenarios: Vec<Scenario>,
    /// In `(0, 1]`.
    pub exponent: f64,
    pub batch_size: f64,
    pub horizon: f64,
    /// Operating cost per unit demand and squared cycle time.
    pub operating: f64,
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum SharedCheck {
    #[error("probabilities sum to {0}, not 1")]
    Probabilities(f64),
    #[error("scenario {0} has non-positive demand")]
    Demand(usize),
    #[error("stage {0} is malformed")]
    Stage(usize),
    #[error("exponent {0} outside (0, 1]")]
    Exponent(f64),
    #[error("instance has no {0}")]
    Empty(&'static str),
}

impl SharedDesignInstance {
    pub fn check(&self) -> Result<(), SharedCheck> {
        if self.stages.is_empty() {
            return Err(SharedCheck::Empty("stages"));
        }
        if self.scenarios.is_empty() {
            return Err(SharedCheck::Empty("scenarios"));
        }
        let total: f64 = self.scenarios.iter().map(|s| s.probability).sum();
        if (total - 1.0).abs() > 1e-9 || self.scenarios.iter().any(|s| s.probability < 0.0) {
            return Err(SharedCheck::Probabilities(total));
        }
        for (k, s) in self.scenarios.iter().enumerate() {
            if !(s.demand > 0.0) {
                return Err(SharedCheck::Demand(k));
            }
        }
        for (j, st) in self.stages.iter().enumerate() {
            if !(st.time > 0.0 && st.capital >= 0.0 && st.max_units >= 1) {
                return Err(SharedCheck::Stage(j));
            }
        }
        if !(self.exponent > 0.0 && self.exponent <= 1.0) {
            return Err(SharedCheck::Exponent(self.exponent));
        }
        Ok(())
    }

    /// Scenario `k` can be served by `units` within the horizon.
    pub fn serves(&self, units: &[i64], k: usize) -> bool {
        self.cycle_time(units) * self.scenarios[k].demand / self.batch_size <= self.horizon + 1e-9
    }

    pub fn cycle_time(&self, units: &[i64]) -> f64 {
        self.stages.iter().zip(units).map(|(s, &n)| s.time / n as f64).fold(0.0, f64::max)
    }

    /// Expected cost of a design feasible in every scenario.
    pub fn expected_cost(&self, units: &[i64]) -> f64 {
        let capital: f64 =
            self.stages.iter().zip(units).map(|(s, &n)| s.capital * (n as f64).powf(self.exponent)).sum();
        let t = self.cycle_time(units);
        capital + self.scenarios.iter().map(|s| s.probability * self.operating * s.demand * t * t).sum::<f64>()
    }

    /// Two-stage plant with a low- and a high-demand scenario.
    pub fn low_high() -> Self {
        SharedDesignInstance {
            stages: vec![
                Stage { time: 4.0, max_units: 4, capital: 10.0 },
                Stage { time: 3.0, max_units: 4, capital: 8.0 },
            ],
            scenarios: vec![Scenario { probability: 0.7, demand: 20.0 }, Scenario { probability: 0.3, demand: 60.0 }],
            exponent: 0.6,
            batch_size: 10.0,
            horizon: 10.0,
            operating: 0.05,
        }
    }

    pub fn random(seed: u64, stages: usize, scenarios: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stages = (0..stages.max(1))
            .map(|_| Stage {
                time: quarter(rng.gen_range(1.0..5.0)),
                max_units: rng.gen_range(2..=4),
                capital: quarter(rng.gen_range(5.0..15.0)),
            })
            .collect::<Vec<_>>();
        let weights: Vec<f64> = (0..scenarios.max(1)).map(|_| rng.gen_range(1..=4) as f64).collect();
        let total: f64 = weights.iter().sum();
        // keep the largest demand servable at full capacity
        let t_min = stages.iter().map(|s| s.time / s.max_units as f64).fold(0.0, f64::max);
        let (batch_size, horizon) = (10.0, 10.0);
        let d_max = horizon * batch_size / t_min;
        let scenarios = weights
            .iter()
            .map(|w| Scenario { probability: w / total, demand: quarter(rng.gen_range(0.2..1.0) * d_max) })
            .collect();
        SharedDesignInstance { stages, scenarios, exponent: 0.6, batch_size, horizon, operating: 0.05 }
    }
}

fn quarter(v: f64) -> f64 {
    (v * 4.0).round() / 4.0
}

/// One block per scenario with shared unit counts `N_j in [1, max]` and cycle
/// time `T`: `t_j / N_j <= T` and `(Q / B) T <= H`. The block objective is the
/// probability-weighted capital plus operating cost.
pub fn encode_shared_design(inst: &SharedDesignInstance) -> Result<StructuredModel, SharedCheck> {
    inst.check()?;
    let p = inst.stages.len();
    let t_var = p;
    let t_hi = inst.stages.iter().map(|s| s.time).fold(0.0, f64::max);
    let blocks = inst
        .scenarios
        .iter()
        .enumerate()
        .map(|(k, sc)| {
            let y = inst
                .stages
                .iter()
                .enumerate()
                .map(|(j, s)| LinkingVar { name: format!("units{j}"), lo: 1, hi: s.max_units, weight: None })
                .collect();
            let mut constraints: Vec<Expr> = inst
                .stages
                .iter()
                .enumerate()
                .map(|(j, s)| Expr::sub(Expr::div(Expr::constant(s.time), Expr::var(j)), Expr::var(t_var)))
                .collect();
            constraints.push(Expr::linear(-inst.horizon, &[(t_var, sc.demand / inst.batch_size)]));
            let capital: Vec<Expr> = inst
                .stages
                .iter()
                .enumerate()
                .map(|(j, s)| {
                    Expr::mul(
                        Expr::constant(sc.probability * s.capital),
                        Expr::exp(Expr::mul(Expr::constant(inst.exponent), Expr::log(Expr::var(j)))),
                    )
                })
                .collect();
            let operating = Expr::mul(
                Expr::constant(sc.probability * inst.operating * sc.demand),
                Expr::sqr(Expr::var(t_var)),
            );
            let objective = Expr::sum(capital.into_iter().chain([operating]).collect());
            let z_candidates = inst
                .stages
                .iter()
                .enumerate()
                .map(|(j, s)| vec![Expr::div(Expr::constant(s.time), Expr::var(j))])
                .collect();
            Block {
                name: format!("scenario{k}"),
                y,
                z: vec![InnerVar { name: "cycle".into(), lo: 0.0, hi: t_hi, integer: false }],
                objective,
                constraints,
                linking: LinkingMatrix::new(0, Vec::new()),
                convexity: Convexity::Equality,
                z_candidates,
            }
        })
        .collect();
    Ok(StructuredModel {
        name: format!("shared-{}x{}", p, inst.scenarios.len()),
        x: Vec::new(),
        cost: Vec::new(),
        rows: 0,
        a: Vec::new(),
        rhs: Vec::new(),
        blocks,
        nonanticipative: true,
        monotone: true,
        seed_columns: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_model;
    use crate::pricing::enumerate_design_cost;

    fn lattice(inst: &SharedDesignInstance) -> Vec<Vec<i64>> {
        let mut out = vec![vec![]];
        for s in &inst.stages {
            out = out.into_iter().flat_map(|d: Vec<i64>| (1..=s.max_units).map(move |n| [d.clone(), vec![n]].concat())).collect();
        }
        out
    }

    #[test]
    fn block_cost_matches_closed_form() {
        let inst = SharedDesignInstance::low_high();
        let m = encode_shared_design(&inst).unwrap();
        assert!(validate_model(m.clone()).is_ok());
        for d in lattice(&inst) {
            let mut total = 0.0;
            let mut ok = true;
            for (k, b) in m.blocks.iter().enumerate() {
                let r = enumerate_design_cost(b, &d).unwrap();
                assert_eq!(r.point.is_some(), inst.serves(&d, k), "design {d:?} scenario {k}");
                ok &= r.point.is_some();
                total += r.zeta;
            }
            if ok {
                assert!((total - inst.expected_cost(&d)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn feasibility_is_monotone() {
        for seed in 0..10 {
            let inst = SharedDesignInstance::random(seed, 2, 2);
            for d in lattice(&inst) {
                for k in 0..inst.scenarios.len() {
                    if !inst.serves(&d, k) {
                        continue;
                    }
                    for j in 0..d.len() {
                        let mut up = d.clone();
                        up[j] += 1;
                        if up[j] <= inst.stages[j].max_units {
                            assert!(inst.serves(&up, k));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn low_high_needs_high_capacity() {
        let inst = SharedDesignInstance::low_high();
        let cheap = lattice(&inst)
            .into_iter()
            .filter(|d| inst.serves(d, 0))
            .min_by(|a, b| inst.expected_cost(a).total_cmp(&inst.expected_cost(b)))
            .unwrap();
        assert!(!inst.serves(&cheap, 1));
    }

    #[test]
    fn random_instances_valid() {
        for seed in 0..10 {
            let inst = SharedDesignInstance::random(seed, 3, 3);
            let m = encode_shared_design(&inst).unwrap();
            assert!(validate_model(m).is_ok());
            let full: Vec<i64> = inst.stages.iter().map(|s| s.max_units).collect();
            assert!((0..inst.scenarios.len()).all(|k| inst.serves(&full, k)));
        }
    }
}
