//! Topology-control comparison: OTC against k-connection on the same mobility trace.
//!
//! Every node has a fixed random destination and runs its controller once per epoch.
//! OTC looks at its relay node degree toward that destination, k-connection at its
//! full neighbor count.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::packet::NodeId;
use crate::topology::{
    adjustment_probability, optimal_area, optimal_range, KConnection, PoissonField, RangeDecision,
    RegionPolicy,
};
use crate::world::{init_world, WorldConfig};

use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Controller {
    Otc,
    KConnection,
}

impl fmt::Display for Controller {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Controller::Otc => "otc",
            Controller::KConnection => "k_connection",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopoConfig {
    pub world: WorldConfig,
    pub n1: u32,
    pub n2: u32,
    pub k: KConnection,
    pub epoch_s: f64,
    pub duration: f64,
    pub warmup: f64,
}

impl Default for TopoConfig {
    fn default() -> Self {
        Self {
            world: WorldConfig {
                initial_range: 100.0,
                ..WorldConfig::default()
            },
            n1: 7,
            n2: 9,
            k: KConnection::default(),
            epoch_s: 1.0,
            duration: 300.0,
            warmup: 30.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopoSample {
    pub time: f64,
    /// Fraction of alive nodes whose range changed this epoch.
    pub adjust_ratio: f64,
    /// Mean relay node degree (OTC) or mean neighbor count (k-connection).
    pub degree: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopoSummary {
    pub adjust_ratio: f64,
    pub degree: f64,
    /// Fraction of post-warmup samples whose mean degree lies in `[n1, n2]`.
    pub healthy_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopoLog {
    pub controller: Controller,
    pub node_count: usize,
    pub seed: u64,
    pub samples: Vec<TopoSample>,
    pub summary: TopoSummary,
}

pub fn run_topology(cfg: &TopoConfig, controller: Controller) -> Result<TopoLog, SimError> {
    if !(cfg.epoch_s > 0.0 && cfg.duration > 0.0 && cfg.warmup >= 0.0 && cfg.warmup < cfg.duration) {
        return Err(SimError::Config(format!(
            "need epoch_s > 0 and 0 <= warmup < duration, got epoch_s={} warmup={} duration={}",
            cfg.epoch_s, cfg.warmup, cfg.duration
        )));
    }
    let mut world = init_world(cfg.world.clone())?;
    let n = world.len();
    let policy = RegionPolicy::new(cfg.n1, cfg.n2, (n as u32).max(cfg.n2))?;
    let field = PoissonField::uniform(n as u32, cfg.world.side)?;
    let delta_star = optimal_area(&field, cfg.n1, cfg.n2)?;
    let limits = world.range_limits();

    // controller randomness is separate from the world's so both controllers
    // see identical node trajectories
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.world.seed);
    rng.set_stream(5);
    let dests: Vec<NodeId> = (0..n)
        .map(|i| {
            let d = rng.random_range(0..n - 1);
            if d >= i {
                d + 1
            } else {
                d
            }
        })
        .collect();

    let epochs = (cfg.duration / cfg.epoch_s).round() as usize;
    let mut samples = Vec::with_capacity(epochs);
    for e in 1..=epochs {
        world.step(cfg.epoch_s);
        let time = e as f64 * cfg.epoch_s;
        let mut adjusted = 0usize;
        let mut degree_sum = 0.0;
        for i in 0..n {
            let old = world.nodes[i].range;
            let new = match controller {
                Controller::Otc => {
                    let rnd = world.survival_set(i, dests[i]).len() as u32;
                    degree_sum += f64::from(rnd);
                    let p = adjustment_probability(rnd, &policy);
                    if p > 0.0 && rng.random::<f64>() < p {
                        optimal_range(delta_star, world.distance(i, dests[i]), &limits).r_star
                    } else {
                        old
                    }
                }
                Controller::KConnection => {
                    let degree = world.neighbors(i).len() as u32;
                    degree_sum += f64::from(degree);
                    match cfg.k.decide(degree) {
                        RangeDecision::Hold => old,
                        d => cfg.k.apply(old, d, &limits),
                    }
                }
            };
            if world.set_range(i, new) != old {
                adjusted += 1;
            }
        }
        samples.push(TopoSample {
            time,
            adjust_ratio: adjusted as f64 / n as f64,
            degree: degree_sum / n as f64,
        });
    }

    let post: Vec<&TopoSample> = samples.iter().filter(|s| s.time > cfg.warmup).collect();
    let m = post.len().max(1) as f64;
    let summary = TopoSummary {
        adjust_ratio: post.iter().map(|s| s.adjust_ratio).sum::<f64>() / m,
        degree: post.iter().map(|s| s.degree).sum::<f64>() / m,
        healthy_fraction: post
            .iter()
            .filter(|s| (f64::from(cfg.n1)..=f64::from(cfg.n2)).contains(&s.degree))
            .count() as f64
            / m,
    };
    Ok(TopoLog {
        controller,
        node_count: n,
        seed: cfg.world.seed,
        samples,
        summary,
    })
}
