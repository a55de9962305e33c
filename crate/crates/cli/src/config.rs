//! Experiment configuration, read from TOML.
//!
//! ```toml
//! seed = 1
//! replicas = 5
//! out = "out"
//! protocols = ["cbrt", "exor"]
//! node_counts = [25, 50, 75, 100, 125, 150]
//! sim_duration = 300.0
//! warmup = 30.0
//!
//! [world]
//! side = 1000.0
//! speed_mean = 0.2
//!
//! [policy]
//! n1 = 7
//! n2 = 9
//!
//! [k_connection]
//! k = 5
//!
//! [routing.traffic]
//! flows = 10
//! packet_rate = 2.0
//! ```
//!
//! Every key is optional. `world.initial_range` and `node_counts` default per
//! subcommand: 500 m and 25..=150 for routing, 100 m and 50..=200 for topology.

use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use cbrt_core::sim::candidates::Thresholds;
use cbrt_core::sim::energy::EnergyModel;
use cbrt_core::sim::topo::TopoConfig;
use cbrt_core::sim::{Protocol, SimConfig, TrafficConfig};
use cbrt_core::topology::{KConnection, RegionPolicy};
use cbrt_core::world::{LinkModel, MobilityModel, WorldConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ROUTING_INITIAL_RANGE: f64 = 500.0;
pub const TOPOLOGY_INITIAL_RANGE: f64 = 100.0;
pub const ROUTING_NODE_COUNTS: [usize; 6] = [25, 50, 75, 100, 125, 150];
pub const TOPOLOGY_NODE_COUNTS: [usize; 4] = [50, 100, 150, 200];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}:{col}: {msg}")]
    Parse {
        path: String,
        line: usize,
        col: usize,
        msg: String,
    },
    #[error("{path}:{line}: {msg}")]
    Invalid { path: String, line: usize, msg: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Seed of the first replica; replica `k` uses `seed + k`.
    pub seed: u64,
    pub replicas: u32,
    pub out: PathBuf,
    /// Parallel jobs; 0 uses every core.
    pub workers: usize,
    pub protocols: Vec<Protocol>,
    pub node_counts: Option<Vec<usize>>,
    pub sim_duration: f64,
    pub warmup: f64,
    pub world: WorldSection,
    pub policy: PolicySection,
    pub k_connection: KConnection,
    pub routing: RoutingSection,
    pub topology: TopologySection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let sim = SimConfig::default();
        Self {
            seed: 1,
            replicas: 1,
            out: PathBuf::from("out"),
            workers: 0,
            protocols: vec![Protocol::Cbrt, Protocol::Exor],
            node_counts: None,
            sim_duration: sim.sim_duration,
            warmup: sim.warmup,
            world: WorldSection::default(),
            policy: PolicySection::default(),
            k_connection: KConnection::default(),
            routing: RoutingSection::default(),
            topology: TopologySection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldSection {
    pub side: f64,
    /// Node count for `run`; sweeps take theirs from `node_counts`.
    pub node_count: usize,
    pub speed_mean: f64,
    pub initial_range: Option<f64>,
    pub mobility: MobilityModel,
    pub link_model: LinkModel,
    pub initial_energy: f64,
    pub min_range: f64,
    pub max_range: Option<f64>,
    pub max_leg_s: f64,
}

impl Default for WorldSection {
    fn default() -> Self {
        let w = WorldConfig::default();
        Self {
            side: w.side,
            node_count: w.node_count,
            speed_mean: w.speed_mean,
            initial_range: None,
            mobility: w.mobility,
            link_model: w.link_model,
            initial_energy: w.initial_energy,
            min_range: w.min_range,
            max_range: w.max_range,
            max_leg_s: w.max_leg_s,
        }
    }
}

impl WorldSection {
    fn build(&self, node_count: usize, seed: u64, default_range: f64) -> WorldConfig {
        WorldConfig {
            side: self.side,
            node_count,
            speed_mean: self.speed_mean,
            initial_range: self.initial_range.unwrap_or(default_range),
            seed,
            mobility: self.mobility,
            link_model: self.link_model,
            initial_energy: self.initial_energy,
            min_range: self.min_range,
            max_range: self.max_range,
            max_leg_s: self.max_leg_s,
        }
    }
}

/// Healthy relay-degree band, given directly or as PTP bounds.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicySection {
    pub n1: Option<u32>,
    pub n2: Option<u32>,
    pub p1: Option<f64>,
    pub p2: Option<f64>,
    /// Typical link delivery ratio used to turn `p1`/`p2` into degrees.
    pub p_link: Option<f64>,
}

impl PolicySection {
    pub fn band(&self) -> Result<(u32, u32), String> {
        match (self.n1, self.n2, self.p1, self.p2) {
            (_, _, None, None) => Ok((self.n1.unwrap_or(7), self.n2.unwrap_or(9))),
            (None, None, Some(p1), Some(p2)) => {
                let p_link = self.p_link.ok_or("p1/p2 need p_link")?;
                let policy = RegionPolicy::from_ptp(p1, p2, p_link, u32::MAX).map_err(|e| e.to_string())?;
                Ok((policy.n1, policy.n2))
            }
            (Some(_), _, Some(_), _) | (_, Some(_), _, Some(_)) => {
                Err("give either n1/n2 or p1/p2, not both".into())
            }
            _ => Err("p1 and p2 must be given together".into()),
        }
    }
}

/// Simulator knobs beyond the world, band and durations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoutingSection {
    pub traffic: TrafficConfig,
    pub radio: EnergyModel,
    pub thresholds: Thresholds,
    pub sample_interval: f64,
    pub mobility_tick: f64,
    pub beacon_interval: f64,
    pub beacon_window: u8,
    pub beacon_alpha: f64,
    pub max_retries: u32,
    pub candidate_cache_s: f64,
    pub queue_capacity: usize,
    pub processing_delay_ms: [f64; 2],
    pub lifetime_horizon_s: f64,
    pub trace: bool,
}

impl Default for RoutingSection {
    fn default() -> Self {
        let s = SimConfig::default();
        Self {
            traffic: s.traffic,
            radio: s.radio,
            thresholds: s.thresholds,
            sample_interval: s.sample_interval,
            mobility_tick: s.mobility_tick,
            beacon_interval: s.beacon_interval,
            beacon_window: s.beacon_window,
            beacon_alpha: s.beacon_alpha,
            max_retries: s.max_retries,
            candidate_cache_s: s.candidate_cache_s,
            queue_capacity: s.queue_capacity,
            processing_delay_ms: s.processing_delay_ms,
            lifetime_horizon_s: s.lifetime_horizon_s,
            trace: s.trace,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologySection {
    pub epoch_s: f64,
}

impl Default for TopologySection {
    fn default() -> Self {
        Self {
            epoch_s: TopoConfig::default().epoch_s,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let name = path.display().to_string();
        let src = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: name.clone(),
            source,
        })?;
        Self::parse(&src, &name)
    }

    /// Parses and validates; `origin` names the source in error messages.
    pub fn parse(src: &str, origin: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(src).map_err(|e| {
            let (line, col) = e.span().map_or((1, 1), |s| line_col(src, s));
            ConfigError::Parse {
                path: origin.to_string(),
                line,
                col,
                msg: e.message().to_string(),
            }
        })?;
        cfg.validate().map_err(|(key, msg)| ConfigError::Invalid {
            path: origin.to_string(),
            line: key_line(src, key),
            msg,
        })?;
        Ok(cfg)
    }

    /// Checks cross-field rules; the error carries the dotted key to blame.
    fn validate(&self) -> Result<(), (&'static str, String)> {
        if self.replicas < 1 {
            return Err(("replicas", "replicas must be at least 1".into()));
        }
        if self.protocols.is_empty() {
            return Err(("protocols", "protocols must not be empty".into()));
        }
        if let Some(counts) = &self.node_counts {
            if counts.is_empty() {
                return Err(("node_counts", "node_counts must not be empty".into()));
            }
            if counts.iter().any(|&n| n < 2) {
                return Err(("node_counts", "every node count must be at least 2".into()));
            }
        }
        let (n1, n2) = self.policy.band().map_err(|m| ("policy", m))?;
        if n1 == 0 || n2 <= n1 {
            return Err(("policy", format!("need 0 < n1 < n2, got n1={n1} n2={n2}")));
        }
        if !(self.topology.epoch_s > 0.0) {
            return Err(("topology.epoch_s", "epoch_s must be positive".into()));
        }
        let sim = self.sim_config(self.protocols[0], self.world.node_count, self.seed);
        sim.validate().map_err(|e| (blame(&e.to_string()), e.to_string()))?;
        Ok(())
    }

    pub fn routing_node_counts(&self) -> Vec<usize> {
        self.node_counts.clone().unwrap_or_else(|| ROUTING_NODE_COUNTS.to_vec())
    }

    pub fn topology_node_counts(&self) -> Vec<usize> {
        self.node_counts.clone().unwrap_or_else(|| TOPOLOGY_NODE_COUNTS.to_vec())
    }

    pub fn band(&self) -> (u32, u32) {
        self.policy.band().unwrap_or((7, 9))
    }

    pub fn sim_config(&self, protocol: Protocol, node_count: usize, seed: u64) -> SimConfig {
        let r = &self.routing;
        let (n1, n2) = self.band();
        SimConfig {
            protocol,
            world: self.world.build(node_count, seed, ROUTING_INITIAL_RANGE),
            n1,
            n2,
            traffic: r.traffic.clone(),
            radio: r.radio,
            thresholds: r.thresholds,
            sim_duration: self.sim_duration,
            warmup: self.warmup,
            sample_interval: r.sample_interval,
            mobility_tick: r.mobility_tick,
            beacon_interval: r.beacon_interval,
            beacon_window: r.beacon_window,
            beacon_alpha: r.beacon_alpha,
            max_retries: r.max_retries,
            candidate_cache_s: r.candidate_cache_s,
            queue_capacity: r.queue_capacity,
            processing_delay_ms: r.processing_delay_ms,
            lifetime_horizon_s: r.lifetime_horizon_s,
            trace: r.trace,
        }
    }

    pub fn topo_config(&self, node_count: usize, seed: u64) -> TopoConfig {
        let (n1, n2) = self.band();
        TopoConfig {
            world: self.world.build(node_count, seed, TOPOLOGY_INITIAL_RANGE),
            n1,
            n2,
            k: self.k_connection,
            epoch_s: self.topology.epoch_s,
            duration: self.sim_duration,
            warmup: self.warmup,
        }
    }
}

/// 1-based line and column of a byte span's start.
fn line_col(src: &str, span: Range<usize>) -> (usize, usize) {
    let head = &src[..span.start.min(src.len())];
    let line = head.matches('\n').count() + 1;
    let col = head.len() - head.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, col)
}

/// Best guess at the config key a simulator validation message refers to.
fn blame(msg: &str) -> &'static str {
    const KEYS: [&str; 12] = [
        "warmup",
        "sim_duration",
        "sample_interval",
        "mobility_tick",
        "beacon_interval",
        "beacon_window",
        "beacon_alpha",
        "candidate_cache_s",
        "queue_capacity",
        "processing_delay_ms",
        "lifetime_horizon_s",
        "packet_rate",
    ];
    KEYS.into_iter().find(|k| msg.contains(k)).unwrap_or("world")
}

/// Line of `key` (a dotted path or a section name) in `src`, or 1 when absent.
fn key_line(src: &str, key: &str) -> usize {
    let (section, leaf) = match key.rsplit_once('.') {
        Some((s, l)) => (Some(s), l),
        None => (None, key),
    };
    let mut current = String::new();
    let mut section_line = None;
    for (i, raw) in src.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            if current == key {
                return i + 1;
            }
            if Some(current.as_str()) == section {
                section_line = Some(i + 1);
            }
            continue;
        }
        let Some((k, _)) = line.split_once('=') else { continue };
        let k = k.trim();
        let in_scope = match section {
            Some(s) => current == s,
            None => current.is_empty(),
        };
        if in_scope && k == leaf {
            return i + 1;
        }
    }
    section_line.unwrap_or(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = ExperimentConfig::parse("", "t").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.sim_config(Protocol::Cbrt, 50, 1).world.initial_range, 500.0);
        assert_eq!(cfg.topo_config(50, 1).world.initial_range, 100.0);
    }

    #[test]
    fn syntax_error_reports_line() {
        let err = ExperimentConfig::parse("seed = 1\n\n[world]\nside = = 3\n", "t").unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: 4, .. }), "{err}");
    }

    #[test]
    fn unknown_key_reports_line() {
        let err = ExperimentConfig::parse("seed = 1\n[world]\nsidee = 3.0\n", "t").unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn invalid_value_reports_line() {
        let err = ExperimentConfig::parse("seed = 2\n\nreplicas = 0\n", "t").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { line: 3, .. }), "{err}");
        let err = ExperimentConfig::parse("warmup = 30.0\nsim_duration = 10.0\n", "t").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { line: 1, .. }), "{err}");
        let err = ExperimentConfig::parse("[topology]\n\nepoch_s = -1.0\n", "t").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { line: 3, .. }), "{err}");
    }

    #[test]
    fn policy_from_ptp() {
        let cfg = ExperimentConfig::parse("[policy]\np1 = 0.9\np2 = 0.99\np_link = 0.3\n", "t").unwrap();
        let (n1, n2) = cfg.band();
        assert!(n1 < n2);
        let err = ExperimentConfig::parse("[policy]\nn1 = 3\np1 = 0.9\np2 = 0.99\n", "t").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { line: 1, .. }), "{err}");
    }
}
