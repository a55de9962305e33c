//! Discrete-event simulator for CBRT and the ExOR baseline.
//!
//! There is no MAC layer: a broadcast reaches each node in range independently
//! with its link delivery probability, and forwarder suppression is perfect.

pub mod beacon;
pub mod candidates;
pub mod energy;
pub mod event;
pub mod forward;
pub mod metrics;
pub mod topo;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fuzzy::FuzzySystem;
use crate::packet::{NodeId, Packet};
use crate::topology::{
    adjustment_probability, optimal_area, optimal_range, PoissonField, RegionPolicy, TopologyError,
};
use crate::world::{init_world, World, WorldConfig, WorldError};

use beacon::LinkTable;
use candidates::{
    cbrt_metric_table, collect_metrics, link_lifetime, path_etx_to, rank_by_path_etx, rank_by_sbfl,
    CandidateRelaySet, Thresholds,
};
use energy::{energy_account, EnergyModel, RadioAction};
use event::{Event, EventKind, EventQueue};
use metrics::{Counters, MetricsLog, MetricsRow, RunSummary};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Cbrt,
    Exor,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::Cbrt => "cbrt",
            Protocol::Exor => "exor",
        })
    }
}

impl FromStr for Protocol {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cbrt" => Ok(Protocol::Cbrt),
            "exor" => Ok(Protocol::Exor),
            other => Err(SimError::Config(format!("unknown protocol {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficConfig {
    /// Number of flows, each between a random source and destination.
    pub flows: usize,
    /// Poisson packet rate per flow, packets per second.
    pub packet_rate: f64,
    /// Explicit `[src, dest]` pairs; when non-empty they replace the random flows.
    pub pairs: Vec<[NodeId; 2]>,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self {
            flows: 10,
            packet_rate: 2.0,
            pairs: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub protocol: Protocol,
    pub world: WorldConfig,
    /// Healthy relay-degree band.
    pub n1: u32,
    pub n2: u32,
    pub traffic: TrafficConfig,
    pub radio: EnergyModel,
    pub thresholds: Thresholds,
    pub sim_duration: f64,
    pub warmup: f64,
    pub sample_interval: f64,
    pub mobility_tick: f64,
    pub beacon_interval: f64,
    /// Beacon outcomes kept per link (at most 64).
    pub beacon_window: u8,
    pub beacon_alpha: f64,
    /// Transmissions per hop before a packet is dropped; also the number of
    /// empty candidate sets tolerated before dropping.
    pub max_retries: u32,
    pub candidate_cache_s: f64,
    pub queue_capacity: usize,
    /// Per-node processing delay is drawn once from this range, in milliseconds.
    pub processing_delay_ms: [f64; 2],
    /// Cap applied to predicted link lifetimes.
    pub lifetime_horizon_s: f64,
    pub trace: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            protocol: Protocol::Cbrt,
            world: WorldConfig::default(),
            n1: 7,
            n2: 9,
            traffic: TrafficConfig::default(),
            radio: EnergyModel::default(),
            thresholds: Thresholds::default(),
            sim_duration: 300.0,
            warmup: 30.0,
            sample_interval: 1.0,
            mobility_tick: 1.0,
            beacon_interval: 2.0,
            beacon_window: 50,
            beacon_alpha: 0.2,
            max_retries: 7,
            candidate_cache_s: 1.0,
            queue_capacity: 100,
            processing_delay_ms: [1.0, 5.0],
            lifetime_horizon_s: crate::kinematics::DEFAULT_HORIZON,
            trace: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        self.world.validate()?;
        let positive = [
            ("sim_duration", self.sim_duration),
            ("sample_interval", self.sample_interval),
            ("mobility_tick", self.mobility_tick),
            ("beacon_interval", self.beacon_interval),
            ("lifetime_horizon_s", self.lifetime_horizon_s),
            ("radio.data_rate_bps", self.radio.data_rate_bps),
            ("radio.packet_bits", self.radio.packet_bits),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.warmup >= 0.0 && self.warmup < self.sim_duration) {
            return bad(format!("warmup must lie in [0, sim_duration), got {}", self.warmup));
        }
        if !(self.candidate_cache_s >= 0.0) {
            return bad(format!("candidate_cache_s must be non-negative, got {}", self.candidate_cache_s));
        }
        if !(self.traffic.packet_rate >= 0.0) {
            return bad(format!("packet_rate must be non-negative, got {}", self.traffic.packet_rate));
        }
        if !(0.0..=1.0).contains(&self.beacon_alpha) || self.beacon_window == 0 {
            return bad("beacon_alpha must be in [0, 1] and beacon_window at least 1".into());
        }
        if self.max_retries == 0 {
            return bad("max_retries must be at least 1".into());
        }
        let [lo, hi] = self.processing_delay_ms;
        if !(0.0 <= lo && lo <= hi) {
            return bad(format!("processing_delay_ms must be an ordered pair, got [{lo}, {hi}]"));
        }
        if self.n1 == 0 || self.n1 >= self.n2 {
            return bad(format!("need 1 <= n1 < n2, got n1={} n2={}", self.n1, self.n2));
        }
        let n = self.world.node_count;
        for &[s, d] in &self.traffic.pairs {
            if s >= n || d >= n || s == d {
                return bad(format!("flow pair [{s}, {d}] invalid for {n} nodes"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Flow {
    src: NodeId,
    dest: NodeId,
}

/// Running post-warmup accumulators for sample-level averages.
#[derive(Debug, Default, Clone)]
struct SampleAccum {
    rows: u64,
    queue: f64,
    range: f64,
    c_otc: f64,
    rnd_rows: u64,
    rnd: f64,
}

pub struct Simulator {
    cfg: SimConfig,
    world: World,
    queue: EventQueue,
    links: LinkTable,
    fuzzy: FuzzySystem,
    policy: RegionPolicy,
    delta_star: f64,
    channel_rng: ChaCha8Rng,
    traffic_rng: ChaCha8Rng,
    control_rng: ChaCha8Rng,
    flows: Vec<Flow>,
    processing_delay: Vec<f64>,
    scheduled: Vec<bool>,
    cache: HashMap<(NodeId, NodeId), CandidateRelaySet>,
    path_etx: HashMap<NodeId, Vec<f64>>,
    last_beacon: f64,
    next_packet_id: u64,
    counters: Counters,
    warm: Option<Counters>,
    accum: SampleAccum,
    adjusters: Vec<bool>,
    sent_since_sample: Vec<Option<NodeId>>,
    has_sent: Vec<bool>,
    event_counts: BTreeMap<EventKind, u64>,
    conservation_violations: u64,
    candidate_violations: u64,
    initial_energy: f64,
    consumed: f64,
    rows: Vec<MetricsRow>,
    trace: Vec<String>,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Builds the world from `config` and runs it to completion.
pub fn run(config: &SimConfig) -> Result<MetricsLog, SimError> {
    Ok(Simulator::new(config.clone())?.run())
}

impl Simulator {
    pub fn new(cfg: SimConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        let world = init_world(cfg.world.clone())?;
        Self::with_world(cfg, world)
    }

    /// Runs on a prepared world (positions, ranges and energies as given).
    pub fn with_world(cfg: SimConfig, world: World) -> Result<Self, SimError> {
        cfg.validate()?;
        let n = world.len();
        if n != cfg.world.node_count {
            return Err(SimError::Config(format!(
                "world has {n} nodes but config says {}",
                cfg.world.node_count
            )));
        }
        let seed = cfg.world.seed;
        let policy = RegionPolicy::new(cfg.n1, cfg.n2, (n as u32).max(cfg.n2))?;
        let field = PoissonField::uniform(n as u32, cfg.world.side)?;
        let delta_star = optimal_area(&field, cfg.n1, cfg.n2)?;

        let mut setup_rng = stream(seed, 4);
        let [lo, hi] = cfg.processing_delay_ms;
        let processing_delay = (0..n)
            .map(|_| if hi > lo { setup_rng.random_range(lo..hi) } else { lo } * 1e-3)
            .collect();
        let flows = if cfg.traffic.pairs.is_empty() {
            (0..cfg.traffic.flows)
                .map(|_| {
                    let src = setup_rng.random_range(0..n);
                    let mut dest = setup_rng.random_range(0..n - 1);
                    if dest >= src {
                        dest += 1;
                    }
                    Flow { src, dest }
                })
                .collect()
        } else {
            cfg.traffic.pairs.iter().map(|&[src, dest]| Flow { src, dest }).collect()
        };
        let initial_energy = world.nodes.iter().map(|n| n.energy).sum();

        Ok(Self {
            links: LinkTable::new(n, cfg.beacon_window, cfg.beacon_alpha),
            fuzzy: FuzzySystem::default(),
            policy,
            delta_star,
            channel_rng: stream(seed, 1),
            traffic_rng: stream(seed, 2),
            control_rng: stream(seed, 3),
            flows,
            processing_delay,
            scheduled: vec![false; n],
            cache: HashMap::new(),
            path_etx: HashMap::new(),
            last_beacon: 0.0,
            next_packet_id: 0,
            counters: Counters::default(),
            warm: None,
            accum: SampleAccum::default(),
            adjusters: vec![false; n],
            sent_since_sample: vec![None; n],
            has_sent: vec![false; n],
            event_counts: BTreeMap::new(),
            conservation_violations: 0,
            candidate_violations: 0,
            initial_energy,
            consumed: 0.0,
            rows: Vec::new(),
            trace: Vec::new(),
            queue: EventQueue::new(),
            world,
            cfg,
        })
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn run(mut self) -> MetricsLog {
        let end = self.cfg.sim_duration;
        self.queue.push(0.0, Event::BeaconRound);
        self.queue.push(self.cfg.mobility_tick, Event::MobilityTick);
        self.queue.push(self.cfg.sample_interval, Event::MetricSample);
        if self.cfg.warmup == 0.0 {
            self.warm = Some(Counters::default());
        }
        for flow in 0..self.flows.len() {
            if let Some(t) = self.next_arrival(0.0) {
                self.queue.push(t, Event::PacketArrival { flow });
            }
        }
        while let Some(t) = self.queue.peek_time() {
            if t > end + 1e-9 {
                break;
            }
            let (t, ev) = self.queue.pop().expect("peeked");
            self.count(ev.kind());
            if self.cfg.trace {
                self.trace.push(format!("{t:.6} {:?}", trace_label(&ev)));
            }
            match ev {
                Event::BeaconRound => self.on_beacon(t),
                Event::MobilityTick => self.on_mobility(t),
                Event::MetricSample => self.on_sample(t),
                Event::PacketArrival { flow } => self.on_arrival(t, flow),
                Event::DataTx { node, fresh } => self.on_data_tx(t, node, fresh),
                Event::DataRx { node, packet } => self.on_data_rx(t, node, packet),
            }
        }
        self.finish()
    }

    fn count(&mut self, kind: EventKind) {
        *self.event_counts.entry(kind).or_insert(0) += 1;
    }

    fn next_arrival(&mut self, now: f64) -> Option<f64> {
        let rate = self.cfg.traffic.packet_rate;
        if rate <= 0.0 {
            return None;
        }
        let u: f64 = self.traffic_rng.random();
        let t = now - (1.0 - u).ln() / rate;
        (t <= self.cfg.sim_duration).then_some(t)
    }

    fn alive(&self, id: NodeId) -> bool {
        self.world.nodes[id].alive
    }

    fn tx_action(&self, id: NodeId) -> RadioAction {
        let level = self
            .cfg
            .radio
            .power_level(self.world.nodes[id].range, self.cfg.world.initial_range);
        RadioAction::Tx(level)
    }

    /// Charges an action to a node's battery and handles its death.
    fn charge(&mut self, id: NodeId, action: RadioAction, duration: f64) {
        if !self.alive(id) {
            return;
        }
        let joules = energy_account(&self.cfg.radio, action, duration);
        self.consumed += self.world.drain(id, joules);
        if !self.alive(id) {
            let lost = self.world.nodes[id].queue.len() as u64;
            self.world.nodes[id].queue.clear();
            self.counters.dropped += lost;
        }
    }

    /// One broadcast of `duration` seconds from `s`: charges the sender and every
    /// node in range that decodes it, and returns those decoders.
    fn broadcast(&mut self, s: NodeId, duration: f64) -> Vec<NodeId> {
        let action = self.tx_action(s);
        self.charge(s, action, duration);
        let range = self.world.nodes[s].range;
        let mut decoded = Vec::new();
        for j in 0..self.world.len() {
            if j == s || !self.alive(j) || self.world.distance(s, j) > range {
                continue;
            }
            let p = self.world.link_delivery_prob(s, j);
            if self.channel_rng.random::<f64>() < p {
                self.charge(j, RadioAction::Rx, duration);
                if self.alive(j) {
                    decoded.push(j);
                }
            }
        }
        decoded
    }

    fn on_beacon(&mut self, now: f64) {
        let airtime = self.cfg.radio.airtime(self.cfg.radio.beacon_bits);
        for a in 0..self.world.len() {
            if !self.alive(a) {
                continue;
            }
            let action = self.tx_action(a);
            self.charge(a, action, airtime);
            let range = self.world.nodes[a].range;
            for b in 0..self.world.len() {
                if b == a || !self.alive(b) {
                    continue;
                }
                if self.world.distance(a, b) <= range {
                    let p = self.world.link_delivery_prob(a, b);
                    let got = self.channel_rng.random::<f64>() < p;
                    if got {
                        self.charge(b, RadioAction::Rx, airtime);
                    }
                    self.links.observe(a, b, got);
                } else {
                    self.links.observe_miss_if_known(a, b);
                }
            }
        }
        self.last_beacon = now;
        self.path_etx.clear();
        let next = now + self.cfg.beacon_interval;
        if next <= self.cfg.sim_duration {
            self.queue.push(next, Event::BeaconRound);
        }
    }

    fn on_mobility(&mut self, now: f64) {
        self.world.step(self.cfg.mobility_tick);
        let next = now + self.cfg.mobility_tick;
        if next <= self.cfg.sim_duration + 1e-9 {
            self.queue.push(next, Event::MobilityTick);
        }
    }

    fn on_arrival(&mut self, now: f64, flow: usize) {
        let Flow { src, dest } = self.flows[flow];
        if !self.alive(src) {
            return;
        }
        let pkt = Packet::new(self.next_packet_id, flow, src, dest, now);
        self.next_packet_id += 1;
        self.counters.generated += 1;
        self.enqueue(now, src, pkt);
        if let Some(t) = self.next_arrival(now) {
            self.queue.push(t, Event::PacketArrival { flow });
        }
    }

    fn enqueue(&mut self, now: f64, node: NodeId, pkt: Packet) {
        if !self.alive(node) || self.world.nodes[node].queue.len() >= self.cfg.queue_capacity {
            self.counters.dropped += 1;
            return;
        }
        self.world.nodes[node].queue.push_back(pkt);
        self.schedule_tx(now + self.processing_delay[node], node);
    }

    fn schedule_tx(&mut self, at: f64, node: NodeId) {
        if !self.scheduled[node] {
            self.scheduled[node] = true;
            self.queue.push(at, Event::DataTx { node, fresh: false });
        }
    }

    fn next_beacon_time(&self, now: f64) -> f64 {
        let mut t = self.last_beacon + self.cfg.beacon_interval;
        while t <= now {
            t += self.cfg.beacon_interval;
        }
        t
    }

    fn cached_set(&self, node: NodeId, dest: NodeId, now: f64, fresh: bool) -> Option<CandidateRelaySet> {
        let set = self.cache.get(&(node, dest))?;
        let valid = fresh
            || match self.cfg.protocol {
                Protocol::Cbrt => now - set.built_at < self.cfg.candidate_cache_s,
                Protocol::Exor => set.built_at >= self.last_beacon,
            };
        valid.then(|| set.clone())
    }

    fn on_data_tx(&mut self, now: f64, node: NodeId, fresh: bool) {
        self.scheduled[node] = false;
        if !self.alive(node) {
            return;
        }
        let Some(dest) = self.world.nodes[node].queue.front().map(|p| p.dest) else {
            return;
        };
        let set = match self.cached_set(node, dest, now, fresh) {
            Some(set) => set,
            None => {
                let (set, exchange) = match self.cfg.protocol {
                    Protocol::Cbrt => self.build_cbrt(now, node, dest),
                    Protocol::Exor => (self.build_exor(now, node, dest), 0.0),
                };
                self.check_survival(node, dest, &set);
                self.cache.insert((node, dest), set.clone());
                if !self.alive(node) {
                    return;
                }
                if exchange > 0.0 {
                    self.scheduled[node] = true;
                    self.queue.push(now + exchange, Event::DataTx { node, fresh: true });
                    return;
                }
                set
            }
        };
        let live: Vec<NodeId> = set.nodes().into_iter().filter(|&j| self.alive(j)).collect();
        let mut pkt = self.world.nodes[node].queue.pop_front().expect("queue checked above");

        if live.is_empty() {
            pkt.stalls += 1;
            if pkt.stalls > self.cfg.max_retries {
                self.counters.dropped += 1;
                if !self.world.nodes[node].queue.is_empty() {
                    self.schedule_tx(now + self.processing_delay[node], node);
                }
            } else {
                self.world.nodes[node].queue.push_front(pkt);
                self.cache.remove(&(node, dest));
                let at = self.next_beacon_time(now);
                self.schedule_tx(at, node);
            }
            return;
        }

        let airtime = self.cfg.radio.packet_airtime();
        self.counters.data_tx += 1;
        pkt.tx_count += 1;
        pkt.hop_attempts += 1;
        self.has_sent[node] = true;
        self.sent_since_sample[node] = Some(dest);
        let decoded = self.broadcast(node, airtime);

        let forwarder = if decoded.contains(&dest) {
            Some(dest)
        } else {
            live.iter().copied().find(|j| decoded.contains(j))
        };
        let sender_alive = self.alive(node);
        let mut moved_on = true;
        match forwarder {
            Some(f) => {
                self.count(EventKind::AckOverhear);
                pkt.hops += 1;
                pkt.hop_attempts = 0;
                pkt.stalls = 0;
                self.counters.hops += 1;
                let lifetime =
                    link_lifetime(&self.world, node, f, dest, self.cfg.lifetime_horizon_s);
                self.counters.lifetime_sum += lifetime;
                self.counters.lifetime_samples += 1;
                self.queue.push(now + airtime, Event::DataRx { node: f, packet: pkt });
            }
            None if pkt.hop_attempts >= self.cfg.max_retries || !sender_alive => {
                self.counters.dropped += 1;
            }
            None => {
                self.world.nodes[node].queue.push_front(pkt);
                moved_on = false;
            }
        }
        if self.alive(node) && !self.world.nodes[node].queue.is_empty() {
            let delay = if moved_on { self.processing_delay[node] } else { 0.0 };
            self.schedule_tx(now + airtime + delay, node);
        }
    }

    fn on_data_rx(&mut self, now: f64, node: NodeId, pkt: Packet) {
        if node == pkt.dest {
            self.counters.delivered += 1;
            self.counters.delay_sum += now - pkt.created_at;
            self.counters.delivered_bits += self.cfg.radio.packet_bits;
        } else {
            self.enqueue(now, node, pkt);
        }
    }

    /// Route discovery with range control. Returns the ranked set and the airtime
    /// spent on requests and replies.
    fn build_cbrt(&mut self, now: f64, s: NodeId, dest: NodeId) -> (CandidateRelaySet, f64) {
        let ctrl = self.cfg.radio.airtime(self.cfg.radio.control_bits);
        let mut requests = 1;
        self.count(EventKind::RouteRequest);
        self.broadcast(s, ctrl);

        let rnd = self.world.survival_set(s, dest).len() as u32;
        let p = adjustment_probability(rnd, &self.policy);
        if p > 0.0 && self.control_rng.random::<f64>() < p {
            let old = self.world.nodes[s].range;
            let d = self.world.distance(s, dest);
            let sol = optimal_range(self.delta_star, d, &self.world.range_limits());
            let new = self.world.set_range(s, sol.r_star);
            self.count(EventKind::RangeAdjust);
            self.counters.range_adjusts += 1;
            self.adjusters[s] = true;
            if new > old && self.alive(s) {
                requests += 1;
                self.count(EventKind::RouteRequest);
                self.broadcast(s, ctrl);
            }
        }
        if !self.alive(s) {
            return (CandidateRelaySet::empty(dest, now), 0.0);
        }

        let members = self.world.survival_set(s, dest);
        for &j in &members {
            self.count(EventKind::RouteReply);
            let action = self.tx_action(j);
            self.charge(j, action, ctrl);
            self.charge(s, RadioAction::Rx, ctrl);
        }
        let exchange = ctrl * (requests + members.len()) as f64;
        let metrics: Vec<_> = collect_metrics(
            &self.world,
            &self.links,
            s,
            dest,
            &members,
            &self.processing_delay,
            self.cfg.lifetime_horizon_s,
        )
        .into_iter()
        .filter(|m| self.alive(m.node) && m.passes(&self.cfg.thresholds, dest))
        .collect();
        let set = match cbrt_metric_table(&metrics) {
            Some(table) => {
                let nodes: Vec<NodeId> = metrics.iter().map(|m| m.node).collect();
                let p_links: Vec<f64> = nodes.iter().map(|&j| self.links.p_hat(s, j)).collect();
                rank_by_sbfl(&table, &nodes, &p_links, &self.fuzzy, dest, now)
            }
            None => CandidateRelaySet::empty(dest, now),
        };
        (set, exchange)
    }

    fn build_exor(&mut self, now: f64, s: NodeId, dest: NodeId) -> CandidateRelaySet {
        if !self.path_etx.contains_key(&dest) {
            let alive: Vec<bool> = self.world.nodes.iter().map(|n| n.alive).collect();
            let etx = path_etx_to(&self.links, &alive, dest);
            self.path_etx.insert(dest, etx);
        }
        let members = self.world.survival_set(s, dest);
        rank_by_path_etx(&members, &self.path_etx[&dest], &self.links, s, dest, now)
    }

    /// Counts members that break the survival predicate at build time.
    fn check_survival(&mut self, s: NodeId, dest: NodeId, set: &CandidateRelaySet) {
        let range = self.world.nodes[s].range;
        let d_sd = self.world.distance(s, dest);
        for m in &set.members {
            if self.world.distance(s, m.node) > range || self.world.distance(m.node, dest) >= d_sd {
                self.candidate_violations += 1;
            }
        }
    }

    fn in_flight(&self) -> u64 {
        let queued: usize = self.world.nodes.iter().map(|n| n.queue.len()).sum();
        (queued + self.queue.packets_in_transit()) as u64
    }

    fn on_sample(&mut self, now: f64) {
        let c = &self.counters;
        if c.generated != c.delivered + c.dropped + self.in_flight() {
            self.conservation_violations += 1;
        }
        let alive: Vec<&crate::world::NodeState> = self.world.nodes.iter().filter(|n| n.alive).collect();
        let alive_n = alive.len();
        let mean = |xs: &mut dyn Iterator<Item = f64>| {
            let (s, k) = xs.fold((0.0, 0usize), |(s, k), x| (s + x, k + 1));
            if k == 0 {
                0.0
            } else {
                s / k as f64
            }
        };
        let queue_len = mean(&mut alive.iter().map(|n| n.queue.len() as f64));
        let active: Vec<f64> = alive
            .iter()
            .filter(|n| self.has_sent[n.id])
            .map(|n| n.range)
            .collect();
        let range_m = if !active.is_empty() {
            mean(&mut active.iter().copied())
        } else if alive_n > 0 {
            mean(&mut alive.iter().map(|n| n.range))
        } else {
            mean(&mut self.world.nodes.iter().map(|n| n.range))
        };
        let rnds: Vec<f64> = (0..self.world.len())
            .filter_map(|i| {
                let dest = self.sent_since_sample[i]?;
                (self.alive(i) && i != dest)
                    .then(|| self.world.survival_set(i, dest).len() as f64)
            })
            .collect();
        let rnd = mean(&mut rnds.iter().copied());
        let adjusters = self.adjusters.iter().filter(|&&a| a).count();
        let c_otc = if alive_n > 0 { adjusters as f64 / alive_n as f64 } else { 0.0 };
        let energy_j: f64 = self.world.nodes.iter().map(|n| n.energy).sum();
        let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
        let c = &self.counters;
        let row = MetricsRow {
            time: now,
            protocol: self.cfg.protocol,
            node_count: self.world.len(),
            seed: self.cfg.world.seed,
            etx: ratio(c.data_tx as f64, c.hops as f64),
            delay_s: ratio(c.delay_sum, c.delivered as f64),
            queue_len,
            rnd,
            range_m,
            energy_j,
            throughput_bps: ratio(c.delivered_bits, now),
            lifetime_s: ratio(c.lifetime_sum, c.lifetime_samples as f64),
            c_otc,
        };
        if self.warm.is_none() && now >= self.cfg.warmup - 1e-9 {
            self.warm = Some(self.counters.clone());
        } else if self.warm.is_some() {
            let a = &mut self.accum;
            a.rows += 1;
            a.queue += queue_len;
            a.range += range_m;
            a.c_otc += c_otc;
            if !rnds.is_empty() {
                a.rnd_rows += 1;
                a.rnd += rnd;
            }
        }
        self.rows.push(row);
        self.adjusters.iter_mut().for_each(|a| *a = false);
        self.sent_since_sample.iter_mut().for_each(|d| *d = None);
        let next = now + self.cfg.sample_interval;
        if next <= self.cfg.sim_duration + 1e-9 {
            self.queue.push(next, Event::MetricSample);
        }
    }

    fn finish(self) -> MetricsLog {
        let c = &self.counters;
        let w = self.warm.clone().unwrap_or_else(|| c.clone());
        let div = |a: f64, b: f64| if b > 0.0 { a / b } else { f64::NAN };
        let a = &self.accum;
        let span = self.cfg.sim_duration - self.cfg.warmup;
        let summary = RunSummary {
            protocol: self.cfg.protocol,
            node_count: self.world.len(),
            seed: self.cfg.world.seed,
            etx: div((c.data_tx - w.data_tx) as f64, (c.hops - w.hops) as f64),
            delay_s: div(c.delay_sum - w.delay_sum, (c.delivered - w.delivered) as f64),
            queue_len: div(a.queue, a.rows as f64),
            rnd: div(a.rnd, a.rnd_rows as f64),
            range_m: div(a.range, a.rows as f64),
            energy_j: self.world.nodes.iter().map(|n| n.energy).sum(),
            throughput_bps: div(c.delivered_bits - w.delivered_bits, span),
            lifetime_s: div(
                c.lifetime_sum - w.lifetime_sum,
                (c.lifetime_samples - w.lifetime_samples) as f64,
            ),
            c_otc: div(a.c_otc, a.rows as f64),
            delivered: c.delivered,
            generated: c.generated,
            dropped: c.dropped,
        };
        let in_flight = self.in_flight();
        let mut event_counts = self.event_counts;
        for kind in EventKind::ALL {
            event_counts.entry(kind).or_insert(0);
        }
        MetricsLog {
            rows: self.rows,
            summary,
            counters: self.counters,
            event_counts,
            conservation_violations: self.conservation_violations,
            candidate_violations: self.candidate_violations,
            initial_energy_j: self.initial_energy,
            energy_consumed_j: self.consumed,
            in_flight,
            trace: self.trace,
        }
    }
}

fn trace_label(ev: &Event) -> String {
    match ev {
        Event::DataRx { node, packet } => format!("DataRx node={node} packet={}", packet.id),
        other => format!("{other:?}"),
    }
}
