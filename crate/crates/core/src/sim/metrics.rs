use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::event::EventKind;
use super::Protocol;

pub const METRICS_HEADER: &str =
    "time,protocol,node_count,seed,etx,delay_s,queue_len,rnd,range_m,energy_j,throughput_bps,lifetime_s,c_otc";

/// One periodic sample. `etx`, `delay_s`, `throughput_bps` and `lifetime_s` are
/// cumulative since the start of the run; the rest describe the sample instant
/// or the interval since the previous sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub time: f64,
    pub protocol: Protocol,
    pub node_count: usize,
    pub seed: u64,
    pub etx: f64,
    pub delay_s: f64,
    pub queue_len: f64,
    pub rnd: f64,
    pub range_m: f64,
    pub energy_j: f64,
    pub throughput_bps: f64,
    pub lifetime_s: f64,
    pub c_otc: f64,
}

/// Raw counters every aggregate is derived from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Counters {
    pub generated: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub data_tx: u64,
    pub hops: u64,
    pub delay_sum: f64,
    pub delivered_bits: f64,
    pub lifetime_sum: f64,
    pub lifetime_samples: u64,
    pub range_adjusts: u64,
}

/// Post-warmup aggregates of one run. Ratios with an empty denominator are NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub protocol: Protocol,
    pub node_count: usize,
    pub seed: u64,
    pub etx: f64,
    pub delay_s: f64,
    pub queue_len: f64,
    pub rnd: f64,
    pub range_m: f64,
    pub energy_j: f64,
    pub throughput_bps: f64,
    pub lifetime_s: f64,
    pub c_otc: f64,
    pub delivered: u64,
    pub generated: u64,
    pub dropped: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsLog {
    pub rows: Vec<MetricsRow>,
    pub summary: RunSummary,
    pub counters: Counters,
    pub event_counts: BTreeMap<EventKind, u64>,
    /// Samples at which generated ≠ delivered + dropped + in flight.
    pub conservation_violations: u64,
    /// Candidate-set members that were outside the survival area when the set was built.
    pub candidate_violations: u64,
    pub initial_energy_j: f64,
    pub energy_consumed_j: f64,
    /// Packets still queued or in the air when the run stopped.
    pub in_flight: u64,
    pub trace: Vec<String>,
}

impl MetricsLog {
    pub fn events(&self, kind: EventKind) -> u64 {
        self.event_counts.get(&kind).copied().unwrap_or(0)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        write_rows(&self.rows, out)
    }
}

pub fn write_rows<W: Write>(rows: &[MetricsRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(METRICS_HEADER.split(','))?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<R: Read>(input: R) -> Result<Vec<MetricsRow>, csv::Error> {
    csv::Reader::from_reader(input).deserialize().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_round_trip() {
        let row = MetricsRow {
            time: 1.0,
            protocol: Protocol::Cbrt,
            node_count: 5,
            seed: 7,
            etx: 1.25,
            delay_s: 0.1,
            queue_len: 0.0,
            rnd: 8.0,
            range_m: 120.5,
            energy_j: 24.0,
            throughput_bps: 1024.0,
            lifetime_s: 300.0,
            c_otc: 0.2,
        };
        let mut buf = Vec::new();
        write_rows(std::slice::from_ref(&row), &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), METRICS_HEADER);
        assert!(text.contains(",cbrt,"));
        assert_eq!(read_rows(buf.as_slice()).unwrap(), vec![row]);
        let mut empty = Vec::new();
        write_rows(&[], &mut empty).unwrap();
        assert_eq!(String::from_utf8(empty).unwrap().trim_end(), METRICS_HEADER);
    }
}
