use cbrt_core::fuzzy::{
    fuzzy_weights, prioritize, rank_table, relative_variance, rule_count, FuzzySystem, MetricTable,
    Orientation, RelativeVarianceVector, RuleMode,
};
use cbrt_core::kinematics::{predict_lifetime, KinematicState, MotionCase};
use cbrt_core::topology::{
    adjustment_probability, optimal_area, optimal_range, poisson_region_prob, predicted_adjustment_ratio, ptp,
    required_rnd, survival_area, unhealthy_prob, PoissonField, RangeLimits, RegionPolicy,
};
use cbrt_core::world::{init_world, MobilityModel, WorldConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn table(rows: &[Vec<f64>]) -> MetricTable {
    MetricTable::from_rows(rows.to_vec()).unwrap()
}

fn positive_table() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (2usize..8, 1usize..5).prop_flat_map(|(m, n)| {
        prop::collection::vec(prop::collection::vec(0.01f64..1000.0, n), m)
    })
}

proptest! {
    #[test]
    fn rv_is_scale_invariant(col in prop::collection::vec(0.01f64..1e4, 1..20), c in prop_oneof![-1e3f64..-1e-3, 1e-3f64..1e3]) {
        let a = relative_variance(&col).unwrap();
        let scaled: Vec<f64> = col.iter().map(|u| u * c).collect();
        let b = relative_variance(&scaled).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1e-300) || (a - b).abs() < 1e-15, "{a} vs {b}");
    }

    #[test]
    fn ranks_survive_increasing_transforms(rows in positive_table(), col in 0usize..5) {
        let t = table(&rows);
        let col = col % t.cols();
        let before = rank_table(&t);
        for f in [|x: f64| x.ln(), |x: f64| x.powi(3) + 7.0, |x: f64| x.sqrt() + 2.0 * x] {
            let after = rank_table(&t.map_column(col, f).unwrap());
            prop_assert_eq!(&before, &after);
        }
    }

    #[test]
    fn ranks_stay_in_bounds(rows in positive_table()) {
        let t = table(&rows);
        let r = rank_table(&t);
        for j in 0..r.cols() {
            let mut col = r.column(j);
            prop_assert!(col.iter().all(|&k| k >= 1 && k as usize <= r.rows()));
            col.sort_unstable();
            col.dedup();
            let distinct = { let mut v = t.column(j); v.sort_by(f64::total_cmp); v.dedup(); v.len() };
            prop_assert_eq!(col.len(), distinct);
        }
    }

    #[test]
    fn priority_order_ignores_column_scale(rows in positive_table(), c in 1e-3f64..1e3) {
        let sys = FuzzySystem::uniform(7).unwrap();
        let t = table(&rows);
        let scaled: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| v * c).collect()).collect();
        let a: Vec<usize> = prioritize(&t, &sys).unwrap().into_iter().map(|p| p.0).collect();
        let b: Vec<usize> = prioritize(&table(&scaled), &sys).unwrap().into_iter().map(|p| p.0).collect();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn weights_are_monotone(x in 0.0f64..1.0, y in 0.0f64..1.0) {
        let sys = FuzzySystem::uniform(7).unwrap();
        let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
        // the trailing 1.0 pins the normalizing maximum
        let w = fuzzy_weights(&RelativeVarianceVector(vec![lo, hi, 1.0]), &sys);
        prop_assert!(w.0[0] <= w.0[1] + 1e-12, "{:?}", w);
        prop_assert!(w.0.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn adjustment_probability_shape(n1 in 1u32..20, width in 1u32..10, extra in 1u32..100) {
        let n2 = n1 + width;
        let policy = RegionPolicy::new(n1, n2, n2 + extra).unwrap();
        let p: Vec<f64> = (0..=policy.network_size).map(|n| adjustment_probability(n, &policy)).collect();
        prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!(p[n1 as usize..=n2 as usize].iter().all(|&v| v == 0.0));
        prop_assert!(p[..=n1 as usize].windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(p[n2 as usize..].windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn ptp_and_required_rnd_agree(p in 0.01f64..0.99, target in 0.01f64..0.999) {
        let n = required_rnd(p, target).unwrap();
        prop_assert!(ptp(p, n) >= target);
        if n > 0 {
            prop_assert!(ptp(p, n - 1) < target);
        }
    }

    #[test]
    fn predicted_ratio_below_unhealthy(rho_area in 0.1f64..60.0, n1 in 1u32..15, width in 1u32..6) {
        let policy = RegionPolicy::new(n1, n1 + width, 200).unwrap();
        let field = PoissonField::new(1e-4).unwrap();
        let area = rho_area / 1e-4;
        prop_assert!(predicted_adjustment_ratio(&field, area, &policy) <= unhealthy_prob(&field, area, &policy) + 1e-12);
    }

    #[test]
    fn optimal_range_round_trips(d in 50.0f64..2000.0, u in 0.05f64..0.79) {
        let r0 = 2.0 * d * u;
        let sol = optimal_range(survival_area(r0, d), d, &RangeLimits::unbounded());
        prop_assert!(sol.reachable);
        prop_assert!((sol.r_star - r0).abs() < 1e-5, "{} vs {}", sol.r_star, r0);
    }

    #[test]
    fn survival_set_predicate(seed in any::<u64>(), n in 2usize..60, range in 50.0f64..600.0) {
        let cfg = WorldConfig { node_count: n, seed, initial_range: range, ..WorldConfig::default() };
        let mut world = init_world(cfg).unwrap();
        world.step(37.0);
        for s in 0..n {
            let dest = (s + 1) % n;
            for r in world.survival_set(s, dest) {
                prop_assert!(r != s);
                prop_assert!(world.distance(r, dest) <= world.distance(s, dest));
                prop_assert!(world.distance(r, s) <= world.nodes[s].range);
            }
        }
    }
}

#[test]
fn rule_counts_follow_growth_shape() {
    assert_eq!(rule_count(3, 3, RuleMode::Classic).unwrap(), 27);
    for m in 1..=10 {
        assert_eq!(rule_count(7, m, RuleMode::Sbfl).unwrap(), 7);
    }
    for t in 2..6u32 {
        for m in 1..6u32 {
            assert!(rule_count(t, m + 1, RuleMode::Classic).unwrap() > rule_count(t, m, RuleMode::Classic).unwrap());
            assert!(rule_count(t + 1, m, RuleMode::Classic).unwrap() > rule_count(t, m, RuleMode::Classic).unwrap());
        }
    }
}

#[test]
fn collinear_approach_is_toward_case() {
    let s = KinematicState::stationary(0.0, 0.0);
    let r = KinematicState::new(50.0, 0.0, 3.0, 0.0);
    let d = KinematicState::stationary(300.0, 0.0);
    let p = predict_lifetime(&s, &r, &d, 200.0, 1e9).unwrap();
    assert_eq!(p.case, MotionCase::Toward);
}

#[test]
fn poisson_matches_scattered_nodes() {
    // square of side 1000 with N = ρ·A points; count those inside a disc of area Δ
    let side: f64 = 1000.0;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for rho_delta in [2.0, 8.0, 20.0] {
        let n_points = 2000usize;
        let rho = n_points as f64 / (side * side);
        let area = rho_delta / rho;
        let radius = (area / std::f64::consts::PI).sqrt();
        let field = PoissonField::new(rho).unwrap();
        let (n1, n2) = ((rho_delta * 0.7) as u32, (rho_delta * 1.3).ceil() as u32);
        let p = poisson_region_prob(&field, area, n1, n2);
        let trials = 10_000;
        let mut hits = 0usize;
        for _ in 0..trials {
            let r2 = radius * radius;
            let count = (0..n_points)
                .filter(|_| {
                    let (x, y) = (rng.random_range(-side / 2.0..side / 2.0), rng.random_range(-side / 2.0..side / 2.0));
                    x * x + y * y <= r2
                })
                .count() as u32;
            if (n1..=n2).contains(&count) {
                hits += 1;
            }
        }
        let freq = hits as f64 / trials as f64;
        let sigma = (p * (1.0 - p) / trials as f64).sqrt();
        assert!((freq - p).abs() <= 3.0 * sigma, "ρΔ={rho_delta}: {freq} vs {p} ± {sigma}");
    }
}

#[test]
fn optimal_area_is_a_maximum() {
    for &(n1, n2, rho) in &[(7u32, 9u32, 1e-4), (3, 6, 5e-5), (10, 14, 2e-4)] {
        let field = PoissonField::new(rho).unwrap();
        let best = optimal_area(&field, n1, n2).unwrap();
        let p = poisson_region_prob(&field, best, n1, n2);
        for f in [0.9, 1.1] {
            assert!(poisson_region_prob(&field, best * f, n1, n2) < p);
        }
    }
}

#[test]
fn constant_velocity_stays_in_square() {
    let cfg = WorldConfig { node_count: 40, mobility: MobilityModel::ConstantVelocity, speed_mean: 15.0, ..WorldConfig::default() };
    let mut world = init_world(cfg).unwrap();
    for _ in 0..500 {
        world.step(1.0);
        for n in &world.nodes {
            assert!((0.0..=1000.0).contains(&n.kin.x) && (0.0..=1000.0).contains(&n.kin.y));
        }
    }
}

/// Classic two-input Mamdani with rules mapping (term_a, term_b) to the
/// output term at their mean index, evaluated by brute force.
fn classic_score(a: f64, b: f64, terms: usize) -> f64 {
    let tri = |k: usize, x: f64| {
        let c = k as f64 / (terms - 1) as f64;
        let h = 1.0 / (terms - 1) as f64;
        (1.0 - (x - c).abs() / h).max(0.0)
    };
    let steps = 2000;
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..=steps {
        let y = i as f64 / steps as f64;
        let mut mu: f64 = 0.0;
        for ta in 0..terms {
            for tb in 0..terms {
                let fire = tri(ta, a).min(tri(tb, b));
                if fire > 0.0 {
                    mu = mu.max(fire.min(tri((ta + tb) / 2, y)));
                }
            }
        }
        num += mu * y;
        den += mu;
    }
    if den > 0.0 { num / den } else { 0.0 }
}

#[test]
fn top_node_agreement_with_classic_mamdani() {
    let sys = FuzzySystem::uniform(3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let trials = 300;
    let mut agree = 0;
    for _ in 0..trials {
        let rows: Vec<Vec<f64>> = (0..3).map(|_| vec![rng.random_range(1.0..100.0), rng.random_range(1.0..100.0)]).collect();
        let t = MetricTable::new(vec!["a".into(), "b".into()], vec![Orientation::Benefit; 2], rows.clone()).unwrap();
        let sbfl_top = prioritize(&t, &sys).unwrap()[0].0;
        let max: Vec<f64> = (0..2).map(|j| rows.iter().map(|r| r[j]).fold(0.0, f64::max)).collect();
        let classic_top = (0..3)
            .max_by(|&i, &k| {
                classic_score(rows[i][0] / max[0], rows[i][1] / max[1], 3)
                    .total_cmp(&classic_score(rows[k][0] / max[0], rows[k][1] / max[1], 3))
            })
            .unwrap();
        if sbfl_top == classic_top {
            agree += 1;
        }
    }
    // soft statistic, reported rather than gated
    eprintln!("top-node agreement with classic Mamdani: {agree}/{trials}");
    assert!(agree > 0);
}
