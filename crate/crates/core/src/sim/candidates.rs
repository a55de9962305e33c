//! Candidate relay sets: CBRT's SBFL-ranked survival set and ExOR's
//! path-ETX-ordered one.

use serde::{Deserialize, Serialize};

use crate::fuzzy::{prioritize, FuzzySystem, MetricTable, Orientation};
use crate::kinematics::residual_lifetime;
use crate::packet::NodeId;
use crate::world::World;

use super::beacon::LinkTable;

/// Cross-layer metrics carried in a route reply, in table column order.
pub const CBRT_METRICS: [(&str, Orientation); 7] = [
    ("residual_energy", Orientation::Benefit),
    ("link_etx", Orientation::Cost),
    ("queue_len", Orientation::Cost),
    ("processing_delay", Orientation::Cost),
    ("distance_to_dest", Orientation::Cost),
    ("link_lifetime", Orientation::Benefit),
    ("closing_speed", Orientation::Benefit),
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateMember {
    pub node: NodeId,
    pub utility: f64,
    /// Estimated delivery probability from the sender.
    pub p_link: f64,
}

/// Candidates in descending priority.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRelaySet {
    pub members: Vec<CandidateMember>,
    pub built_at: f64,
    pub dest: NodeId,
}

impl CandidateRelaySet {
    pub fn empty(dest: NodeId, built_at: f64) -> Self {
        Self {
            members: Vec::new(),
            built_at,
            dest,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn nodes(&self) -> Vec<NodeId> {
        self.members.iter().map(|m| m.node).collect()
    }

    pub fn position(&self, node: NodeId) -> Option<usize> {
        self.members.iter().position(|m| m.node == node)
    }
}

/// Optional per-metric eligibility thresholds. The destination is always eligible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub min_energy: Option<f64>,
    pub max_etx: Option<f64>,
    pub max_queue: Option<f64>,
    pub min_lifetime: Option<f64>,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            min_energy: Some(0.25),
            max_etx: None,
            max_queue: None,
            min_lifetime: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateMetrics {
    pub node: NodeId,
    pub energy: f64,
    pub etx: f64,
    pub queue: f64,
    pub processing_delay_ms: f64,
    pub distance_to_dest: f64,
    pub lifetime: f64,
    /// Relative speed toward the destination plus a constant offset that keeps
    /// the column positive for the variance weighting.
    pub closing_speed: f64,
}

impl CandidateMetrics {
    pub fn row(&self) -> Vec<f64> {
        vec![
            self.energy,
            self.etx,
            self.queue,
            self.processing_delay_ms,
            self.distance_to_dest,
            self.lifetime,
            self.closing_speed,
        ]
    }

    pub fn passes(&self, t: &Thresholds, dest: NodeId) -> bool {
        if self.node == dest {
            return true;
        }
        t.min_energy.is_none_or(|v| self.energy >= v)
            && t.max_etx.is_none_or(|v| self.etx <= v)
            && t.max_queue.is_none_or(|v| self.queue <= v)
            && t.min_lifetime.is_none_or(|v| self.lifetime >= v)
    }
}

/// Speed at which `r` closes on `d`, from their relative velocity.
pub fn closing_speed(world: &World, r: NodeId, d: NodeId) -> f64 {
    let (rk, dk) = (&world.nodes[r].kin, &world.nodes[d].kin);
    let (dx, dy) = (dk.x - rk.x, dk.y - rk.y);
    let dist = dx.hypot(dy);
    if dist == 0.0 {
        return 0.0;
    }
    let (rvx, rvy) = rk.velocity();
    let (dvx, dvy) = dk.velocity();
    ((rvx - dvx) * dx + (rvy - dvy) * dy) / dist
}

/// Predicted lifetime of `s→r` toward `d`, capped at `horizon`; 0 if `r` is
/// already outside the survival area.
pub fn link_lifetime(world: &World, s: NodeId, r: NodeId, d: NodeId, horizon: f64) -> f64 {
    let n = &world.nodes;
    residual_lifetime(&n[s].kin, &n[r].kin, &n[d].kin, n[s].range, horizon)
        .map(|l| l.or_horizon(horizon))
        .unwrap_or(0.0)
}

/// Gathers the route-reply metrics of each member.
pub fn collect_metrics(
    world: &World,
    links: &LinkTable,
    s: NodeId,
    dest: NodeId,
    members: &[NodeId],
    processing_delay_s: &[f64],
    horizon: f64,
) -> Vec<CandidateMetrics> {
    let offset = 4.0 * world.config().speed_mean;
    members
        .iter()
        .map(|&j| CandidateMetrics {
            node: j,
            energy: world.nodes[j].energy,
            etx: links.etx(s, j),
            queue: world.nodes[j].queue.len() as f64,
            processing_delay_ms: processing_delay_s[j] * 1e3,
            distance_to_dest: world.distance(j, dest),
            lifetime: link_lifetime(world, s, j, dest, horizon),
            closing_speed: closing_speed(world, j, dest) + offset,
        })
        .collect()
}

pub fn cbrt_metric_table(metrics: &[CandidateMetrics]) -> Option<MetricTable> {
    let names = CBRT_METRICS.iter().map(|(n, _)| n.to_string()).collect();
    let orientations = CBRT_METRICS.iter().map(|&(_, o)| o).collect();
    MetricTable::new(names, orientations, metrics.iter().map(CandidateMetrics::row).collect()).ok()
}

/// Orders `members` (one per table row) by SBFL utility.
pub fn rank_by_sbfl(
    table: &MetricTable,
    members: &[NodeId],
    p_links: &[f64],
    sys: &FuzzySystem,
    dest: NodeId,
    built_at: f64,
) -> CandidateRelaySet {
    debug_assert_eq!(table.rows(), members.len());
    let order = match prioritize(table, sys) {
        Ok(o) => o,
        Err(e) => {
            log::warn!("candidate ranking failed ({e}); keeping discovery order");
            (0..members.len()).map(|i| (i, 0.0)).collect()
        }
    };
    CandidateRelaySet {
        members: order
            .into_iter()
            .map(|(i, utility)| CandidateMember {
                node: members[i],
                utility,
                p_link: p_links[i],
            })
            .collect(),
        built_at,
        dest,
    }
}

/// Orders `members` by ascending path ETX to the destination (ties by id).
/// Utility is the negated path ETX so the set still reads in descending utility.
pub fn rank_by_path_etx(
    members: &[NodeId],
    path_etx: &[f64],
    links: &LinkTable,
    s: NodeId,
    dest: NodeId,
    built_at: f64,
) -> CandidateRelaySet {
    let mut order: Vec<NodeId> = members.to_vec();
    order.sort_by(|&a, &b| path_etx[a].total_cmp(&path_etx[b]).then(a.cmp(&b)));
    CandidateRelaySet {
        members: order
            .into_iter()
            .map(|j| CandidateMember {
                node: j,
                utility: if path_etx[j].is_finite() { -path_etx[j] } else { f64::MIN },
                p_link: links.p_hat(s, j),
            })
            .collect(),
        built_at,
        dest,
    }
}

/// Shortest cumulative link ETX from every node to `dest` over links with a
/// positive estimate. Unreachable nodes get infinity.
pub fn path_etx_to(links: &LinkTable, alive: &[bool], dest: NodeId) -> Vec<f64> {
    let n = links.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    dist[dest] = 0.0;
    for _ in 0..n {
        let mut u = None;
        let mut best = f64::INFINITY;
        for v in 0..n {
            if !done[v] && dist[v] < best {
                best = dist[v];
                u = Some(v);
            }
        }
        let Some(u) = u else { break };
        done[u] = true;
        // relax every a with a usable link a→u
        for a in 0..n {
            if done[a] || !alive[a] {
                continue;
            }
            let p = links.p_hat(a, u);
            if p > 0.0 {
                let cand = best + 1.0 / p.max(0.01);
                if cand < dist[a] {
                    dist[a] = cand;
                }
            }
        }
    }
    dist
}
