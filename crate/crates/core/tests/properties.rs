use std::f64::consts::PI;

use minlp_bnp::bnp::{solve_bnp, BnpConfig, NodeStatus};
use minlp_bnp::colgen::{
    init_columns, solve_relaxed_mp, ColgenConfig, Cutoff, InitStrategy, NodeBounds, Workspace,
};
use minlp_bnp::global::{interval_eval, Interval};
use minlp_bnp::lp::{solve_lp, solve_milp, LinearProgram, LpStatus, MilpOptions, RowSense};
use minlp_bnp::model::{model_from_str, model_to_string, Expr, StructuredModel};
use minlp_bnp::pricing::{enumerate_lattice, solve_pricing, BlockDuals, PricingMode};
use minlp_bnp::problems::{
    encode_circle_cutting, encode_shared_design, gen_branching_adversary, gen_random_integer, CircleCuttingInstance,
    RandomIntSpec, Scenario, SharedDesignInstance,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn expr_strategy() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![(0usize..2).prop_map(Expr::var), (-3.0..3.0f64).prop_map(Expr::constant)];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::sum(vec![a, b])),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::sub(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::mul(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::div(a, b)),
            inner.clone().prop_map(Expr::sqr),
            inner.clone().prop_map(Expr::sqrt),
            inner.clone().prop_map(Expr::log),
            inner.clone().prop_map(|a| Expr::exp(Expr::mul(Expr::constant(0.25), a))),
            (inner, 1i32..4).prop_map(|(a, n)| Expr::powi(a, n)),
        ]
    })
}

fn box_strategy() -> impl Strategy<Value = (Vec<(f64, f64)>, Vec<f64>, Vec<f64>)> {
    // (bounds, point fractions, sub-box fractions)
    (
        prop::collection::vec((-4.0..4.0f64, 0.0..4.0f64), 2),
        prop::collection::vec(0.0..=1.0f64, 2),
        prop::collection::vec(0.0..=0.5f64, 2),
    )
        .prop_map(|(b, t, s)| (b.into_iter().map(|(lo, w)| (lo, lo + w)).collect(), t, s))
}

fn encloses(iv: &Interval, v: f64) -> bool {
    let slack = |x: f64| 1e-9 * (1.0 + x.abs());
    iv.lo - slack(iv.lo) <= v && v <= iv.hi + slack(iv.hi)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn interval_evaluation_encloses_point_values(e in expr_strategy(), (bounds, t, s) in box_strategy()) {
        let bx: Vec<Interval> = bounds.iter().map(|&(lo, hi)| Interval::new(lo, hi)).collect();
        let point: Vec<f64> = bounds.iter().zip(&t).map(|(&(lo, hi), f)| lo + f * (hi - lo)).collect();
        if let (Ok(v), Ok(iv)) = (e.eval(&point), interval_eval(&e, &bx)) {
            if v.is_finite() {
                prop_assert!(encloses(&iv, v), "{v} outside [{}, {}]", iv.lo, iv.hi);
            }
        }
        // a sub-box around the point never widens the enclosure
        let sub: Vec<Interval> = bx
            .iter()
            .zip(&point)
            .zip(&s)
            .map(|((iv, &p), &f)| Interval::new(p - f * (p - iv.lo), p + f * (iv.hi - p)))
            .collect();
        if let (Ok(outer), Ok(inner)) = (interval_eval(&e, &bx), interval_eval(&e, &sub)) {
            prop_assert!(encloses(&outer, inner.lo) || inner.lo.is_infinite());
            prop_assert!(encloses(&outer, inner.hi) || inner.hi.is_infinite());
        }
    }
}

fn random_models(n: u64) -> impl Iterator<Item = StructuredModel> {
    (0..n).map(|s| gen_random_integer(s, RandomIntSpec::default()))
}

#[test]
fn pricing_agrees_with_lattice_and_budget_bounds_hold() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for m in random_models(30) {
        for b in &m.blocks {
            let duals = BlockDuals { w: (0..b.p()).map(|_| rng.gen_range(-3.0..3.0)).collect(), mu: rng.gen_range(-2.0..2.0) };
            let lattice = enumerate_lattice(b, &duals).unwrap();
            let exact = solve_pricing(b, &duals, PricingMode::Exact);
            assert!((exact.u - lattice.zeta).abs() <= 1e-6, "{}: {} vs {}", m.name, exact.u, lattice.zeta);
            for pt in [&exact.point, &lattice.point].into_iter().flatten() {
                assert!(b.constraints.iter().all(|g| g.eval(pt).unwrap() <= 1e-6));
            }
            for budget in [1, 3, 10] {
                let r = solve_pricing(b, &duals, PricingMode::Budget(budget));
                assert!(r.l <= lattice.zeta + 1e-9 && lattice.zeta <= r.u + 1e-9, "budget {budget}");
            }
        }
    }
}

#[test]
fn colgen_bounds_are_monotone() {
    for m in random_models(30) {
        let mut ws = Workspace::new(&m, 1);
        init_columns(&mut ws, InitStrategy::ZeroDualPricing).unwrap();
        let active = (0..ws.pool.len()).collect();
        let r = solve_relaxed_mp(&mut ws, 0, &NodeBounds::root(), active, Cutoff::NONE, &ColgenConfig::default()).unwrap();
        let phase2: Vec<_> = r.trace.iter().filter(|t| t.phase == 2).collect();
        for w in phase2.windows(2) {
            assert!(w[1].lb >= w[0].lb - 1e-12, "{}: lb decreased", m.name);
            assert!(w[1].ub <= w[0].ub + 1e-12, "{}: ub increased", m.name);
            assert!(w[1].v_rmp <= w[0].v_rmp + 1e-9, "{}: v_rmp increased", m.name);
        }
    }
}

#[test]
fn identical_scenarios_price_equally() {
    let mut inst = SharedDesignInstance::low_high();
    inst.scenarios = vec![Scenario { probability: 0.25, demand: 30.0 }; 4];
    let m = encode_shared_design(&inst).unwrap();
    let mut ws = Workspace::new(&m, 2);
    for d in [[1, 1], [2, 3], [4, 4]] {
        let p = ws.price_shared_column(&d);
        assert!(p.costs.windows(2).all(|w| w[0] == w[1]), "{d:?}: {:?}", p.costs);
    }
}

#[test]
fn search_tree_invariants() {
    let models: Vec<StructuredModel> =
        random_models(30).chain((0..5).map(gen_branching_adversary)).collect();
    for m in &models {
        let r = solve_bnp(m, &BnpConfig { gap: 1e-9, ..BnpConfig::default() }).unwrap();
        assert!(r.lb <= r.ub + 1e-9);
        for w in r.tree.windows(2) {
            assert!(w[1].ub_after <= w[0].ub_after, "{}: ub increased", m.name);
        }
        for row in &r.tree {
            if let (Some(p), NodeStatus::Branched | NodeStatus::Integral | NodeStatus::Pruned) = (row.parent, row.status) {
                let parent = r.tree.iter().find(|t| t.node == p).unwrap();
                assert!(row.lb >= parent.lb - 1e-9 || !row.lb.is_finite(), "{}: child {} below parent", m.name, row.node);
            }
        }
        let inc = r.incumbent.as_ref().unwrap();
        assert!(inc.max_violation(m) <= 1e-7);
        for (b, sol) in m.blocks.iter().zip(&inc.blocks) {
            if sol.design.is_some() {
                assert!(b.constraints.iter().all(|g| g.eval(&sol.point).unwrap() <= 1e-6));
            }
        }
    }
}

fn random_lp(rng: &mut ChaCha8Rng) -> LinearProgram {
    let n = rng.gen_range(1..=6);
    let mut lp = LinearProgram::default();
    for _ in 0..n {
        lp.add_var(rng.gen_range(-5..=5) as f64, 0.0, rng.gen_range(1..=8) as f64);
    }
    for _ in 0..rng.gen_range(1..=4) {
        let coeffs: Vec<(usize, f64)> = (0..n).map(|j| (j, rng.gen_range(-3..=3) as f64)).collect();
        let sense = [RowSense::Le, RowSense::Ge, RowSense::Eq][rng.gen_range(0..3)];
        lp.add_row(&coeffs, sense, rng.gen_range(-4..=8) as f64);
    }
    lp
}

#[test]
fn lp_dual_signs_and_milp_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let opts = MilpOptions { rel_gap: 1e-12, node_limit: 100_000, int_tol: 1e-9 };
    for _ in 0..300 {
        let lp = random_lp(&mut rng);
        let sol = solve_lp(&lp).unwrap();
        if sol.status != LpStatus::Optimal {
            continue;
        }
        for (d, s) in sol.duals.iter().zip(&lp.senses) {
            match s {
                RowSense::Ge => assert!(*d >= -1e-9),
                RowSense::Le => assert!(*d <= 1e-9),
                RowSense::Eq => {}
            }
        }
        let milp = solve_milp(&lp, &vec![true; lp.num_vars()], &opts).unwrap();
        if milp.status == LpStatus::Optimal {
            assert!(milp.objective >= sol.objective - 1e-9);
        }
    }
}

#[test]
fn generated_models_round_trip() {
    let mut models: Vec<StructuredModel> = random_models(20).collect();
    models.extend((0..10).map(gen_branching_adversary));
    models.extend((0..10).map(|s| encode_circle_cutting(&CircleCuttingInstance::random(s, 3, 3)).unwrap()));
    models.extend((0..10).map(|s| encode_shared_design(&SharedDesignInstance::random(s, 3, 3)).unwrap()));
    models.push(encode_shared_design(&SharedDesignInstance::low_high()).unwrap());
    for m in models {
        let text = model_to_string(&m);
        let back = model_from_str(&text).unwrap();
        assert_eq!(back, m, "{}", m.name);
        assert_eq!(model_to_string(&back), text, "{}", m.name);
    }
}

#[test]
fn circle_objective_is_trim_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut checked = 0;
    for s in 0..20 {
        let inst = CircleCuttingInstance::random(s, 3, 3);
        let m = encode_circle_cutting(&inst).unwrap();
        for (rect, b) in inst.rectangles.iter().zip(&m.blocks) {
            for _ in 0..200 {
                let mut point: Vec<f64> = b.y.iter().map(|v| rng.gen_range(v.lo..=v.hi) as f64).collect();
                point.extend(b.z.iter().map(|v| rng.gen_range(v.lo..=v.hi)));
                if b.constraints.iter().any(|g| g.eval(&point).unwrap() > 0.0) {
                    continue;
                }
                let used: Vec<usize> = (0..b.p()).filter(|&c| point[c] > 0.5).collect();
                let area = if used.is_empty() { 0.0 } else { rect.width * rect.height };
                let trim = area - used.iter().map(|&c| PI * inst.radii[c] * inst.radii[c]).sum::<f64>();
                assert!((b.objective.eval(&point).unwrap() - trim).abs() <= 1e-9);
                checked += 1;
            }
        }
    }
    assert!(checked > 500, "only {checked} feasible samples");
}
