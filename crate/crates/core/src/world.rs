//! Node placement, mobility and per-link ground truth.

use std::collections::VecDeque;
use std::f64::consts::TAU;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::KinematicState;
use crate::packet::{NodeId, Packet};
use crate::topology::RangeLimits;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("invalid world config: {0}")]
    Config(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MobilityModel {
    RandomWaypoint,
    ConstantVelocity,
}

/// Delivery probability as a function of `distance / range`, zero beyond the range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LinkModel {
    /// `1 − x²`
    Quadratic,
    /// `1 − x`
    Linear,
    /// Constant `p` everywhere inside the range.
    Fixed { p: f64 },
}

impl Default for LinkModel {
    fn default() -> Self {
        LinkModel::Quadratic
    }
}

impl LinkModel {
    pub fn delivery_prob(&self, ratio: f64) -> f64 {
        if !(ratio <= 1.0) {
            return 0.0;
        }
        let x = ratio.max(0.0);
        let p = match *self {
            LinkModel::Quadratic => 1.0 - x * x,
            LinkModel::Linear => 1.0 - x,
            LinkModel::Fixed { p } => p,
        };
        p.clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub side: f64,
    pub node_count: usize,
    pub speed_mean: f64,
    pub initial_range: f64,
    pub seed: u64,
    pub mobility: MobilityModel,
    pub link_model: LinkModel,
    pub initial_energy: f64,
    pub min_range: f64,
    /// Upper range clamp; `None` means the side length.
    pub max_range: Option<f64>,
    /// RandomWaypoint redraws a node's speed after this long on one leg.
    pub max_leg_s: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            side: 1000.0,
            node_count: 50,
            speed_mean: 0.2,
            initial_range: 500.0,
            seed: 1,
            mobility: MobilityModel::RandomWaypoint,
            link_model: LinkModel::Quadratic,
            initial_energy: 5.0,
            min_range: 10.0,
            max_range: None,
            max_leg_s: 60.0,
        }
    }
}

impl WorldConfig {
    pub fn range_limits(&self) -> RangeLimits {
        RangeLimits::new(self.min_range, self.max_range.unwrap_or(self.side))
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let bad = |m: String| Err(WorldError::Config(m));
        if !(self.side > 0.0 && self.side.is_finite()) {
            return bad(format!("side must be positive, got {}", self.side));
        }
        if self.node_count < 2 {
            return bad(format!("node_count must be at least 2, got {}", self.node_count));
        }
        if !(self.speed_mean >= 0.0 && self.speed_mean.is_finite()) {
            return bad(format!("speed_mean must be non-negative, got {}", self.speed_mean));
        }
        if !(self.initial_energy >= 0.0) {
            return bad(format!("initial_energy must be non-negative, got {}", self.initial_energy));
        }
        let lim = self.range_limits();
        if !(lim.min >= 0.0 && lim.min <= lim.max) {
            return bad(format!("range limits [{}, {}] are invalid", lim.min, lim.max));
        }
        if !(self.initial_range > 0.0) {
            return bad(format!("initial_range must be positive, got {}", self.initial_range));
        }
        if !(self.max_leg_s > 0.0) {
            return bad(format!("max_leg_s must be positive, got {}", self.max_leg_s));
        }
        if let LinkModel::Fixed { p } = self.link_model {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("fixed link probability {p} outside [0, 1]"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    pub id: NodeId,
    pub kin: KinematicState,
    pub range: f64,
    pub energy: f64,
    pub queue: VecDeque<Packet>,
    pub alive: bool,
    waypoint: (f64, f64),
    leg_left: f64,
}

impl NodeState {
    pub fn position(&self) -> (f64, f64) {
        (self.kin.x, self.kin.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    cfg: WorldConfig,
    limits: RangeLimits,
    pub nodes: Vec<NodeState>,
    pub time: f64,
    rng: ChaCha8Rng,
}

#[derive(Serialize)]
struct SnapshotRow {
    id: NodeId,
    x: f64,
    y: f64,
    speed: f64,
    heading: f64,
    range: f64,
    energy: f64,
}

fn draw_speed(rng: &mut ChaCha8Rng, mean: f64) -> f64 {
    if mean > 0.0 {
        rng.random_range(0.0..2.0 * mean)
    } else {
        0.0
    }
}

/// Folds a coordinate back into `[0, side]` as if bouncing off both walls.
/// Returns the folded coordinate and whether the direction flipped.
fn reflect(x: f64, side: f64) -> (f64, bool) {
    let period = 2.0 * side;
    let m = x.rem_euclid(period);
    if m <= side {
        (m, false)
    } else {
        (period - m, true)
    }
}

/// Places nodes uniformly at random in the square and draws their motion.
pub fn init_world(cfg: WorldConfig) -> Result<World, WorldError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let limits = cfg.range_limits();
    let range = limits.clamp(cfg.initial_range);
    let mut nodes = Vec::with_capacity(cfg.node_count);
    for id in 0..cfg.node_count {
        let x = rng.random_range(0.0..=cfg.side);
        let y = rng.random_range(0.0..=cfg.side);
        let speed = draw_speed(&mut rng, cfg.speed_mean);
        let (heading, waypoint) = match cfg.mobility {
            MobilityModel::ConstantVelocity => (rng.random_range(0.0..TAU), (x, y)),
            MobilityModel::RandomWaypoint => {
                let w = (rng.random_range(0.0..=cfg.side), rng.random_range(0.0..=cfg.side));
                ((w.1 - y).atan2(w.0 - x).rem_euclid(TAU), w)
            }
        };
        nodes.push(NodeState {
            id,
            kin: KinematicState::new(x, y, speed, heading),
            range,
            energy: cfg.initial_energy,
            queue: VecDeque::new(),
            alive: cfg.initial_energy > 0.0,
            waypoint,
            leg_left: cfg.max_leg_s,
        });
    }
    Ok(World {
        cfg,
        limits,
        nodes,
        time: 0.0,
        rng,
    })
}

impl World {
    pub fn config(&self) -> &WorldConfig {
        &self.cfg
    }

    pub fn range_limits(&self) -> RangeLimits {
        self.limits
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn alive_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.alive).count()
    }

    pub fn distance(&self, a: NodeId, b: NodeId) -> f64 {
        self.nodes[a].kin.distance_to(&self.nodes[b].kin)
    }

    /// Sets a node's range, clamped to the configured limits. Returns the applied value.
    pub fn set_range(&mut self, id: NodeId, range: f64) -> f64 {
        let r = self.limits.clamp(range);
        self.nodes[id].range = r;
        r
    }

    /// Removes up to `joules` from a node's battery and returns what was actually taken.
    /// The node dies when its battery reaches zero.
    pub fn drain(&mut self, id: NodeId, joules: f64) -> f64 {
        let node = &mut self.nodes[id];
        let taken = joules.min(node.energy).max(0.0);
        node.energy -= taken;
        if node.energy <= 0.0 {
            node.energy = 0.0;
            node.alive = false;
        }
        taken
    }

    /// Advances every node by `dt` seconds.
    pub fn step(&mut self, dt: f64) {
        if !(dt > 0.0) {
            return;
        }
        let side = self.cfg.side;
        match self.cfg.mobility {
            MobilityModel::ConstantVelocity => {
                for n in &mut self.nodes {
                    let (vx, vy) = n.kin.velocity();
                    let (x, fx) = reflect(n.kin.x + vx * dt, side);
                    let (y, fy) = reflect(n.kin.y + vy * dt, side);
                    let vx = if fx { -vx } else { vx };
                    let vy = if fy { -vy } else { vy };
                    n.kin.x = x;
                    n.kin.y = y;
                    if fx || fy {
                        n.kin.heading = vy.atan2(vx).rem_euclid(TAU);
                    }
                }
            }
            MobilityModel::RandomWaypoint => {
                for i in 0..self.nodes.len() {
                    self.step_waypoint(i, dt);
                }
            }
        }
        self.time += dt;
    }

    fn step_waypoint(&mut self, i: usize, dt: f64) {
        let side = self.cfg.side;
        let mut left = dt;
        while left > 0.0 {
            let n = &mut self.nodes[i];
            let (wx, wy) = n.waypoint;
            let dist = (wx - n.kin.x).hypot(wy - n.kin.y);
            let to_arrival = if n.kin.speed > 0.0 { dist / n.kin.speed } else { f64::INFINITY };
            let seg = left.min(n.leg_left).min(to_arrival);
            let arrived = to_arrival <= seg;
            if arrived {
                n.kin.x = wx;
                n.kin.y = wy;
            } else if dist > 0.0 {
                let f = n.kin.speed * seg / dist;
                n.kin.x = (n.kin.x + (wx - n.kin.x) * f).clamp(0.0, side);
                n.kin.y = (n.kin.y + (wy - n.kin.y) * f).clamp(0.0, side);
            }
            n.leg_left -= seg;
            left -= seg;
            if arrived {
                let w = (
                    self.rng.random_range(0.0..=side),
                    self.rng.random_range(0.0..=side),
                );
                self.nodes[i].waypoint = w;
            }
            if arrived || self.nodes[i].leg_left <= 0.0 {
                let speed = draw_speed(&mut self.rng, self.cfg.speed_mean);
                let n = &mut self.nodes[i];
                n.kin.speed = speed;
                n.leg_left = self.cfg.max_leg_s;
            }
            let n = &mut self.nodes[i];
            let (wx, wy) = n.waypoint;
            if (wx, wy) != (n.kin.x, n.kin.y) {
                n.kin.heading = (wy - n.kin.y).atan2(wx - n.kin.x).rem_euclid(TAU);
            }
        }
    }

    /// Alive nodes other than `s` inside `s`'s range.
    pub fn neighbors(&self, s: NodeId) -> Vec<NodeId> {
        let range = self.nodes[s].range;
        self.nodes
            .iter()
            .filter(|n| n.alive && n.id != s && n.kin.distance_to(&self.nodes[s].kin) <= range)
            .map(|n| n.id)
            .collect()
    }

    /// Alive nodes inside `s`'s range that are strictly closer to `dest` than `s` is.
    pub fn survival_set(&self, s: NodeId, dest: NodeId) -> Vec<NodeId> {
        self.survival_set_with_range(s, dest, self.nodes[s].range)
    }

    /// `survival_set` evaluated as if `s` had range `range`.
    pub fn survival_set_with_range(&self, s: NodeId, dest: NodeId, range: f64) -> Vec<NodeId> {
        let src = &self.nodes[s].kin;
        let goal = &self.nodes[dest].kin;
        let d_sd = src.distance_to(goal);
        self.nodes
            .iter()
            .filter(|n| {
                n.alive
                    && n.id != s
                    && n.kin.distance_to(src) <= range
                    && n.kin.distance_to(goal) < d_sd
            })
            .map(|n| n.id)
            .collect()
    }

    /// Ground-truth probability that a frame sent by `a` is decoded by `b`.
    pub fn link_delivery_prob(&self, a: NodeId, b: NodeId) -> f64 {
        if !self.nodes[a].alive || !self.nodes[b].alive {
            return 0.0;
        }
        let range = self.nodes[a].range;
        let dist = self.distance(a, b);
        if range <= 0.0 {
            return if dist == 0.0 { self.cfg.link_model.delivery_prob(0.0) } else { 0.0 };
        }
        self.cfg.link_model.delivery_prob(dist / range)
    }

    /// Writes `id,x,y,speed,heading,range,energy` for every node.
    pub fn write_snapshot<W: Write>(&self, out: W) -> Result<(), WorldError> {
        let mut w = csv::Writer::from_writer(out);
        for n in &self.nodes {
            w.serialize(SnapshotRow {
                id: n.id,
                x: n.kin.x,
                y: n.kin.y,
                speed: n.kin.speed,
                heading: n.kin.heading,
                range: n.range,
                energy: n.energy,
            })?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}
