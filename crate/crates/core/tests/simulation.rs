use cbrt_core::kinematics::KinematicState;
use cbrt_core::sim::beacon::LinkEstimator;
use cbrt_core::sim::energy::{energy_account, EnergyModel, PowerLevel, RadioAction};
use cbrt_core::sim::event::EventKind;
use cbrt_core::sim::forward::opportunistic_hop;
use cbrt_core::sim::metrics::MetricsLog;
use cbrt_core::sim::{run, Protocol, SimConfig, Simulator, TrafficConfig};
use cbrt_core::topology::{adjustment_probability, RegionPolicy};
use cbrt_core::world::{init_world, LinkModel, MobilityModel, WorldConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Static nodes on a horizontal line, 100 m apart, one flow from the first to the last.
fn line(n: usize, spacing: f64, range: f64, link: LinkModel, protocol: Protocol, duration: f64) -> MetricsLog {
    let cfg = SimConfig {
        protocol,
        world: WorldConfig {
            node_count: n,
            mobility: MobilityModel::ConstantVelocity,
            link_model: link,
            initial_energy: 1e6,
            initial_range: range,
            seed: 9,
            ..WorldConfig::default()
        },
        traffic: TrafficConfig {
            pairs: vec![[0, n - 1]],
            ..TrafficConfig::default()
        },
        sim_duration: duration,
        warmup: 0.0,
        ..SimConfig::default()
    };
    let mut world = init_world(cfg.world.clone()).unwrap();
    for (i, node) in world.nodes.iter_mut().enumerate() {
        node.kin = KinematicState::stationary(100.0 + spacing * i as f64, 500.0);
    }
    Simulator::with_world(cfg, world).unwrap().run()
}

#[test]
fn single_link_etx_is_inverse_p() {
    for p in [0.3, 0.6, 0.9] {
        for protocol in [Protocol::Exor, Protocol::Cbrt] {
            let log = line(2, 50.0, 100.0, LinkModel::Fixed { p }, protocol, 500.0);
            let c = &log.counters;
            assert!(c.generated >= 900, "{}", c.generated);
            let etx = c.data_tx as f64 / c.hops as f64;
            assert!((etx - 1.0 / p).abs() <= 0.05 / p, "{protocol} p={p}: etx {etx}");
            assert!(etx >= 1.0);
        }
    }
}

#[test]
fn two_candidates_need_four_thirds_transmissions() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let trials = 10_000;
    let total: u32 = (0..trials)
        .map(|_| opportunistic_hop(&[0.5, 0.5], 1000, &mut rng).transmissions())
        .sum();
    let mean = f64::from(total) / f64::from(trials);
    let sigma = (0.25f64 / 0.75 / 0.75 / f64::from(trials)).sqrt();
    assert!((mean - 4.0 / 3.0).abs() <= 3.0 * sigma, "{mean} ± {sigma}");
}

#[test]
fn exor_chain_matches_path_etx() {
    // range 150 reaches only the next node, so the path is the chain itself
    let p = 0.8;
    let log = line(4, 100.0, 150.0, LinkModel::Fixed { p }, Protocol::Exor, 500.0);
    let c = &log.counters;
    assert!(c.delivered >= 900);
    let per_packet = c.data_tx as f64 / c.delivered as f64;
    let hand = 3.0 / p;
    assert!((per_packet - hand).abs() <= 0.05 * hand, "{per_packet} vs {hand}");
}

#[test]
fn high_power_packet_energy() {
    let m = EnergyModel::default();
    let j = energy_account(&m, RadioAction::Tx(PowerLevel::High), m.packet_airtime());
    assert!((j - 0.0546).abs() <= 1e-4, "{j}");
    assert_eq!(energy_account(&m, RadioAction::Idle, 10.0), 0.0);
    assert!((5.0 / j).floor() == 91.0);
}

#[test]
fn beacon_estimate_converges() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let trials = 2000;
    let mut sum = 0.0;
    for _ in 0..trials {
        let mut est = LinkEstimator::new();
        for _ in 0..50 {
            est.observe(rng.random::<f64>() < 0.6, 50, 0.2);
        }
        assert!((0.0..=1.0).contains(&est.p_hat()));
        sum += est.p_hat();
    }
    let mean = sum / f64::from(trials);
    assert!((mean - 0.6).abs() < 0.01, "{mean}");
}

#[test]
fn adjust_frequency_follows_probability() {
    let policy = RegionPolicy::new(7, 9, 100).unwrap();
    let rnd = (9 + 100) / 2;
    let p = adjustment_probability(rnd, &policy);
    assert!(p > 0.0 && p < 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let trials = 10_000;
    let hits = (0..trials).filter(|_| rng.random::<f64>() < p).count();
    let freq = hits as f64 / f64::from(trials);
    let sigma = (p * (1.0 - p) / f64::from(trials)).sqrt();
    assert!((freq - p).abs() <= 3.0 * sigma, "{freq} vs {p}");
}

#[test]
fn exor_never_adjusts_range() {
    let cfg = SimConfig {
        protocol: Protocol::Exor,
        world: WorldConfig { node_count: 40, ..WorldConfig::default() },
        sim_duration: 60.0,
        warmup: 10.0,
        ..SimConfig::default()
    };
    let log = run(&cfg).unwrap();
    assert_eq!(log.events(EventKind::RangeAdjust), 0);
    assert!(log.rows.iter().all(|r| r.range_m == 500.0));
}

#[test]
fn cbrt_holds_range_when_rnd_in_band() {
    let cfg = SimConfig {
        n1: 1,
        n2: 5,
        world: WorldConfig {
            node_count: 5,
            mobility: MobilityModel::ConstantVelocity,
            initial_energy: 1e6,
            ..WorldConfig::default()
        },
        traffic: TrafficConfig { pairs: vec![[0, 4]], ..TrafficConfig::default() },
        sim_duration: 100.0,
        warmup: 0.0,
        ..SimConfig::default()
    };
    let mut world = init_world(cfg.world.clone()).unwrap();
    for (i, node) in world.nodes.iter_mut().enumerate() {
        node.kin = KinematicState::stationary(100.0 + 100.0 * i as f64, 500.0);
    }
    let log = Simulator::with_world(cfg, world).unwrap().run();
    assert!(log.counters.delivered > 0);
    assert_eq!(log.events(EventKind::RangeAdjust), 0);
}

#[test]
fn mobile_runs_conserve_packets_and_energy() {
    for protocol in [Protocol::Cbrt, Protocol::Exor] {
        let cfg = SimConfig {
            protocol,
            world: WorldConfig { node_count: 50, seed: 3, ..WorldConfig::default() },
            sim_duration: 120.0,
            warmup: 30.0,
            ..SimConfig::default()
        };
        let log = run(&cfg).unwrap();
        let c = &log.counters;
        assert!(c.delivered > 0, "{protocol}");
        assert_eq!(log.conservation_violations, 0);
        assert_eq!(c.generated, c.delivered + c.dropped + log.in_flight);
        assert_eq!(log.candidate_violations, 0);
        assert!(c.data_tx >= c.hops);
        let residual = log.summary.energy_j;
        assert!((log.initial_energy_j - residual - log.energy_consumed_j).abs() < 1e-9);
        assert!(log.rows.windows(2).all(|w| w[1].energy_j <= w[0].energy_j));
        assert!(log.rows.iter().all(|r| r.etx == 0.0 || r.etx >= 1.0));
    }
}

#[test]
fn identical_seed_identical_csv() {
    let cfg = SimConfig {
        world: WorldConfig { node_count: 30, seed: 21, ..WorldConfig::default() },
        sim_duration: 60.0,
        warmup: 10.0,
        ..SimConfig::default()
    };
    let mut a = Vec::new();
    let mut b = Vec::new();
    run(&cfg).unwrap().write_csv(&mut a).unwrap();
    run(&cfg).unwrap().write_csv(&mut b).unwrap();
    assert_eq!(a, b);
    assert!(String::from_utf8(a).unwrap().starts_with(
        "time,protocol,node_count,seed,etx,delay_s,queue_len,rnd,range_m,energy_j,throughput_bps,lifetime_s,c_otc"
    ));
}
