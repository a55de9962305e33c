//! Parallel sweeps over node counts and replicas, and their aggregation.

use std::io::{Read, Write};

use anyhow::{Context, Result};
use cbrt_core::sim::metrics::RunSummary;
use cbrt_core::sim::topo::{run_topology, Controller, TopoLog};
use cbrt_core::sim::{run, Protocol};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

pub const ROUTING_METRICS: [&str; 8] = [
    "etx",
    "delay_s",
    "queue_len",
    "rnd",
    "range_m",
    "energy_j",
    "throughput_bps",
    "lifetime_s",
];

/// Mean of a routing metric over the replicas of one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingPoint {
    pub protocol: Protocol,
    pub node_count: usize,
    pub replicas: u32,
    pub etx: f64,
    pub delay_s: f64,
    pub queue_len: f64,
    pub rnd: f64,
    pub range_m: f64,
    pub energy_j: f64,
    pub throughput_bps: f64,
    pub lifetime_s: f64,
    pub c_otc: f64,
    pub delivered: f64,
    pub generated: f64,
    pub dropped: f64,
}

impl RoutingPoint {
    pub fn metric(&self, name: &str) -> f64 {
        match name {
            "etx" => self.etx,
            "delay_s" => self.delay_s,
            "queue_len" => self.queue_len,
            "rnd" => self.rnd,
            "range_m" => self.range_m,
            "energy_j" => self.energy_j,
            "throughput_bps" => self.throughput_bps,
            "lifetime_s" => self.lifetime_s,
            "c_otc" => self.c_otc,
            _ => f64::NAN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopoPoint {
    pub controller: Controller,
    pub node_count: usize,
    pub replicas: u32,
    pub adjust_ratio: f64,
    pub degree: f64,
    pub healthy_fraction: f64,
}

/// Runs `f` over `jobs` on a pool of `workers` threads (0 = all cores), keeping job order.
pub fn parallel<J, T, F>(workers: usize, jobs: Vec<J>, f: F) -> Result<Vec<T>>
where
    J: Send,
    T: Send,
    F: Fn(J) -> Result<T> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .context("building worker pool")?;
    pool.install(|| jobs.into_par_iter().map(&f).collect())
}

pub fn routing_runs(cfg: &ExperimentConfig) -> Result<Vec<RunSummary>> {
    let mut jobs = Vec::new();
    for &protocol in &cfg.protocols {
        for n in cfg.routing_node_counts() {
            for k in 0..cfg.replicas {
                jobs.push((protocol, n, cfg.seed + u64::from(k)));
            }
        }
    }
    parallel(cfg.workers, jobs, |(protocol, n, seed)| {
        log::info!("{protocol} n={n} seed={seed}");
        let log = run(&cfg.sim_config(protocol, n, seed))
            .with_context(|| format!("{protocol} with {n} nodes, seed {seed}"))?;
        Ok(log.summary)
    })
}

pub fn topology_runs(cfg: &ExperimentConfig) -> Result<Vec<TopoLog>> {
    let mut jobs = Vec::new();
    for controller in [Controller::Otc, Controller::KConnection] {
        for n in cfg.topology_node_counts() {
            for k in 0..cfg.replicas {
                jobs.push((controller, n, cfg.seed + u64::from(k)));
            }
        }
    }
    parallel(cfg.workers, jobs, |(controller, n, seed)| {
        log::info!("{controller} n={n} seed={seed}");
        run_topology(&cfg.topo_config(n, seed), controller)
            .with_context(|| format!("{controller} with {n} nodes, seed {seed}"))
    })
}

/// Mean over finite values; NaN when there are none.
fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, k) = xs.filter(|x| x.is_finite()).fold((0.0, 0u32), |(s, k), x| (s + x, k + 1));
    if k == 0 {
        f64::NAN
    } else {
        s / f64::from(k)
    }
}

pub fn aggregate_routing(runs: &[RunSummary]) -> Vec<RoutingPoint> {
    let mut keys: Vec<(Protocol, usize)> = runs.iter().map(|r| (r.protocol, r.node_count)).collect();
    keys.sort();
    keys.dedup();
    keys.into_iter()
        .map(|(protocol, node_count)| {
            let group: Vec<&RunSummary> = runs
                .iter()
                .filter(|r| r.protocol == protocol && r.node_count == node_count)
                .collect();
            let m = |f: fn(&RunSummary) -> f64| mean(group.iter().map(|r| f(r)));
            RoutingPoint {
                protocol,
                node_count,
                replicas: group.len() as u32,
                etx: m(|r| r.etx),
                delay_s: m(|r| r.delay_s),
                queue_len: m(|r| r.queue_len),
                rnd: m(|r| r.rnd),
                range_m: m(|r| r.range_m),
                energy_j: m(|r| r.energy_j),
                throughput_bps: m(|r| r.throughput_bps),
                lifetime_s: m(|r| r.lifetime_s),
                c_otc: m(|r| r.c_otc),
                delivered: m(|r| r.delivered as f64),
                generated: m(|r| r.generated as f64),
                dropped: m(|r| r.dropped as f64),
            }
        })
        .collect()
}

pub fn aggregate_topology(runs: &[TopoLog]) -> Vec<TopoPoint> {
    let mut keys: Vec<(Controller, usize)> = runs.iter().map(|r| (r.controller, r.node_count)).collect();
    keys.sort();
    keys.dedup();
    keys.into_iter()
        .map(|(controller, node_count)| {
            let group: Vec<&TopoLog> = runs
                .iter()
                .filter(|r| r.controller == controller && r.node_count == node_count)
                .collect();
            TopoPoint {
                controller,
                node_count,
                replicas: group.len() as u32,
                adjust_ratio: mean(group.iter().map(|r| r.summary.adjust_ratio)),
                degree: mean(group.iter().map(|r| r.summary.degree)),
                healthy_fraction: mean(group.iter().map(|r| r.summary.healthy_fraction)),
            }
        })
        .collect()
}

pub fn write_csv<T: Serialize, W: Write>(rows: &[T], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>, R: Read>(input: R) -> Result<Vec<T>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .collect::<Result<_, _>>()
        .context("reading CSV")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn routing_points_round_trip() {
        let p = RoutingPoint {
            protocol: Protocol::Exor,
            node_count: 25,
            replicas: 2,
            etx: 1.5,
            delay_s: f64::NAN,
            queue_len: 0.0,
            rnd: 3.0,
            range_m: 500.0,
            energy_j: 100.0,
            throughput_bps: 12.5,
            lifetime_s: 700.0,
            c_otc: 0.0,
            delivered: 10.0,
            generated: 12.0,
            dropped: 2.0,
        };
        let mut buf = Vec::new();
        write_csv(std::slice::from_ref(&p), &mut buf).unwrap();
        let back: Vec<RoutingPoint> = read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 1);
        assert!(back[0].delay_s.is_nan());
        assert_eq!(back[0].etx, 1.5);
        assert_eq!(back[0].protocol, Protocol::Exor);
    }

    #[test]
    fn mean_skips_nan() {
        assert_eq!(mean([1.0, f64::NAN, 3.0].into_iter()), 2.0);
        assert!(mean([f64::NAN].into_iter()).is_nan());
    }
}
