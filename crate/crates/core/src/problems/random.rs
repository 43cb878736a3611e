use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::{
    Block, Convexity, Expr, InnerVar, LinearVar, LinkingMatrix, LinkingVar, StructuredModel, Triplet,
};

/// One block over `y in {0,1}^2` restricted to `y_0 = y_1` with cost
/// `kappa (y_0 + y_1)`, and the row `y_0 + y_1 >= 1`. The master LP mixes
/// `(0,0)` and `(1,1)` at one half each.
pub fn gen_branching_adversary(seed: u64) -> StructuredModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kappa = rng.gen_range(2..=20) as f64 / 2.0;
    let block = Block {
        name: "pair".into(),
        y: (0..2).map(|j| LinkingVar { name: format!("y{j}"), lo: 0, hi: 1, weight: None }).collect(),
        z: Vec::new(),
        objective: Expr::linear(0.0, &[(0, kappa), (1, kappa)]),
        constraints: vec![Expr::sqr(Expr::linear(0.0, &[(0, 1.0), (1, -1.0)]))],
        linking: LinkingMatrix::new(1, vec![Triplet::new(0, 0, 1.0), Triplet::new(0, 1, 1.0)]),
        convexity: Convexity::Equality,
        z_candidates: Vec::new(),
    };
    StructuredModel {
        name: format!("adversary-s{seed}"),
        x: Vec::new(),
        cost: Vec::new(),
        rows: 1,
        a: Vec::new(),
        rhs: vec![1.0],
        blocks: vec![block],
        nonanticipative: false,
        monotone: false,
        seed_columns: Vec::new(),
    }
}

/// Size limits of [`gen_random_integer`].
#[derive(Clone, Copy, Debug)]
pub struct RandomIntSpec {
    pub max_blocks: usize,
    pub max_p: usize,
    pub max_range: i64,
    pub max_rows: usize,
}

impl Default for RandomIntSpec {
    fn default() -> Self {
        RandomIntSpec { max_blocks: 4, max_p: 2, max_range: 3, max_rows: 3 }
    }
}

fn coef(rng: &mut ChaCha8Rng, lo: i32, hi: i32) -> f64 {
    rng.gen_range(lo..=hi) as f64
}

/// Pure-integer instance with nonconvex block objectives and constraints.
/// Every complicating row has a bounded slack priced high enough that the
/// master stays feasible with any columns.
pub fn gen_random_integer(seed: u64, spec: RandomIntSpec) -> StructuredModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nb = rng.gen_range(1..=spec.max_blocks.max(1));
    let rows = rng.gen_range(1..=spec.max_rows.max(1));
    let mut blocks = Vec::with_capacity(nb);
    for i in 0..nb {
        let p = rng.gen_range(1..=spec.max_p.max(1));
        let y: Vec<LinkingVar> = (0..p)
            .map(|j| {
                let lo = rng.gen_range(0..=1);
                LinkingVar { name: format!("y{j}"), lo, hi: lo + rng.gen_range(1..=spec.max_range.max(1)), weight: None }
            })
            .collect();
        let with_z = rng.gen_bool(0.4);
        let z = if with_z {
            vec![InnerVar { name: "z".into(), lo: 0.0, hi: 2.0, integer: true }]
        } else {
            Vec::new()
        };

        let mut terms = Vec::new();
        for (j, v) in y.iter().enumerate() {
            let centre = rng.gen_range(v.lo..=v.hi) as f64 + 0.5 * coef(&mut rng, -1, 1);
            terms.push(Expr::mul(Expr::constant(coef(&mut rng, -2, 3)), Expr::sqr(Expr::linear(-centre, &[(j, 1.0)]))));
        }
        if p == 2 {
            terms.push(Expr::mul(Expr::constant(coef(&mut rng, -3, 3)), Expr::mul(Expr::var(0), Expr::var(1))));
        }
        let mut constraints = Vec::new();
        if with_z {
            terms.push(Expr::linear(0.0, &[(p, coef(&mut rng, -2, 2))]));
            terms.push(Expr::mul(Expr::constant(coef(&mut rng, -1, 1)), Expr::mul(Expr::var(0), Expr::var(p))));
            // z tracks y_0 within one
            constraints.push(Expr::linear(-1.0, &[(p, 1.0), (0, -1.0)]));
        }
        if p == 2 && rng.gen_bool(0.4) {
            // y_0 != y_1
            constraints.push(Expr::sub(Expr::constant(1.0), Expr::sqr(Expr::linear(0.0, &[(0, 1.0), (1, -1.0)]))));
        }

        let mut entries = Vec::new();
        for r in 0..rows {
            for j in 0..p {
                let c = coef(&mut rng, -2, 2);
                if c != 0.0 {
                    entries.push(Triplet::new(r, j, c));
                }
            }
        }
        blocks.push(Block {
            name: format!("b{i}"),
            y,
            z,
            objective: Expr::sum(terms),
            constraints,
            linking: LinkingMatrix::new(rows, entries),
            convexity: Convexity::Equality,
            z_candidates: Vec::new(),
        });
    }
    let x = (0..rows).map(|r| LinearVar { name: format!("slack{r}"), integer: false, upper: Some(100.0) }).collect();
    let cost = (0..rows).map(|_| coef(&mut rng, 5, 15)).collect();
    let rhs = (0..rows).map(|_| coef(&mut rng, -2, 6)).collect();
    StructuredModel {
        name: format!("randint-s{seed}"),
        x,
        cost,
        rows,
        a: (0..rows).map(|r| Triplet::new(r, r, 1.0)).collect(),
        rhs,
        blocks,
        nonanticipative: false,
        monotone: false,
        seed_columns: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_model;

    #[test]
    fn adversary_is_valid_for_many_seeds() {
        for s in 0..50 {
            assert!(validate_model(gen_branching_adversary(s)).is_ok());
        }
    }

    #[test]
    fn random_sizes_within_limits() {
        for s in 0..100 {
            let m = gen_random_integer(s, RandomIntSpec::default());
            assert!(m.blocks.len() <= 4);
            assert!(m.total_lattice_size() <= 200);
            assert!(m.is_pure_integer());
            assert!(validate_model(m).is_ok(), "seed {s}");
        }
    }

    #[test]
    fn same_seed_same_instance() {
        let a = gen_random_integer(7, RandomIntSpec::default());
        let b = gen_random_integer(7, RandomIntSpec::default());
        assert_eq!(a, b);
    }
}
