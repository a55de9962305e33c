use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use cbrt_core::fuzzy::{
    analyze, node_utilities, order_by_utility, rule_count, FuzzySystem, MetricTable, RuleMode, WeightVector,
};
use cbrt_core::kinematics::{
    predict_lifetime, survival_exit_oracle, KinematicState, DEFAULT_HORIZON,
};
use cbrt_core::sim::topo::Controller;
use cbrt_core::sim::Simulator;
use clap::{Args, Parser, Subcommand};

use crate::config::ExperimentConfig;
use crate::svg::LineChart;
use crate::sweep::{
    aggregate_routing, aggregate_topology, routing_runs, topology_runs, write_csv, RoutingPoint, TopoPoint,
    ROUTING_METRICS,
};

#[derive(Debug, Parser)]
#[command(name = "cbrt", version, about = "Opportunistic routing and topology control experiments")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config's base seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Parallel jobs (0 = all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Machine-readable CSV on stdout.
    #[arg(long, global = true)]
    pub csv: bool,
    /// Also write SVG charts.
    #[arg(long, global = true)]
    pub svg: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// One simulation run; writes its metrics log.
    Run,
    /// CBRT against ExOR over the node-count sweep.
    Compare,
    /// OTC against k-connection over the node-count sweep.
    Topo,
    /// Ranks the rows of a metric table.
    Rank {
        /// Metric table CSV: names, optional benefit/cost row, one row per node.
        table: PathBuf,
        /// Fixed metric weights (comma separated) used instead of the fuzzy ones.
        #[arg(long, value_delimiter = ',')]
        weights: Option<Vec<f64>>,
    },
    /// Predicted residual lifetime of one source-relay link next to the stepped oracle.
    Lifetime(LifetimeArgs),
    /// Rule counts of a full multi-input fuzzy system against the single-input one.
    Rules {
        /// Linguistic terms per input of the full system.
        #[arg(long, default_value_t = 3)]
        terms: u32,
        /// Largest metric count to tabulate.
        #[arg(long, default_value_t = 10)]
        metrics: u32,
        /// Terms of the single-input system.
        #[arg(long, default_value_t = 7)]
        sbfl_terms: u32,
    },
}

#[derive(Debug, Args)]
pub struct LifetimeArgs {
    /// Source as x,y,speed,heading (heading in radians).
    #[arg(long, value_parser = parse_state, allow_hyphen_values = true)]
    pub source: KinematicState,
    /// Relay as x,y,speed,heading.
    #[arg(long, value_parser = parse_state, allow_hyphen_values = true)]
    pub relay: KinematicState,
    /// Destination as x,y,speed,heading.
    #[arg(long, value_parser = parse_state, allow_hyphen_values = true)]
    pub dest: KinematicState,
    /// Source transmission range in meters.
    #[arg(long)]
    pub range: f64,
    /// Oracle time step in seconds.
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    /// Longest lifetime reported as finite.
    #[arg(long, default_value_t = 3600.0)]
    pub horizon: f64,
}

fn parse_state(s: &str) -> Result<KinematicState, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("bad number {p:?}")))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [x, y, speed, heading] if speed >= 0.0 && v.iter().all(|c| c.is_finite()) => {
            Ok(KinematicState::new(x, y, speed, heading))
        }
        _ => Err("expected x,y,speed,heading with finite values and speed >= 0".into()),
    }
}

/// Process exit status: 0 success, 1 runtime failure, 2 usage or config error.
#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Usage(e) | Failure::Runtime(e) => e,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

pub fn default_log_level(command: &Command) -> &'static str {
    match command {
        Command::Rank { .. } => "warn",
        _ => "error",
    }
}

/// Runs a parsed command line, printing results to stdout.
pub fn execute(cli: &Cli) -> Result<(), Failure> {
    let mut out = String::new();
    let result = dispatch(cli, &mut out);
    print!("{out}");
    result
}

/// Runs a parsed command line, appending what it would print to `out`.
pub fn dispatch(cli: &Cli, out: &mut String) -> Result<(), Failure> {
    let g = &cli.global;
    match &cli.command {
        Command::Run => cmd_run(&load_config(g)?, g, out),
        Command::Compare => cmd_compare(&load_config(g)?, g, out),
        Command::Topo => cmd_topo(&load_config(g)?, g, out),
        Command::Rank { table, weights } => cmd_rank(table, weights.as_deref(), g.csv, out),
        Command::Lifetime(args) => cmd_lifetime(args, out),
        Command::Rules {
            terms,
            metrics,
            sbfl_terms,
        } => cmd_rules(*terms, *metrics, *sbfl_terms, g, out),
    }
}

fn load_config(g: &GlobalArgs) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &g.config {
        Some(path) => ExperimentConfig::load(path).map_err(|e| Failure::Usage(e.into()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &g.out {
        cfg.out = out.clone();
    }
    if let Some(w) = g.workers {
        cfg.workers = w;
    }
    Ok(cfg)
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn cmd_run(cfg: &ExperimentConfig, g: &GlobalArgs, out: &mut String) -> Result<(), Failure> {
    let protocol = cfg.protocols[0];
    let n = cfg.node_counts.as_ref().map_or(cfg.world.node_count, |c| c[0]);
    let sim = cfg.sim_config(protocol, n, cfg.seed);
    let log = Simulator::new(sim)
        .map_err(|e| Failure::Usage(e.into()))?
        .run();
    prepare_out(&cfg.out)?;
    let path = cfg.out.join("metrics.csv");
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    log.write_csv(BufWriter::new(file)).context("writing metrics")?;
    if !log.trace.is_empty() {
        fs::write(cfg.out.join("trace.txt"), log.trace.join("\n") + "\n").context("writing trace")?;
    }
    let s = &log.summary;
    if g.csv {
        let mut buf = Vec::new();
        write_csv(std::slice::from_ref(s), &mut buf)?;
        out.push_str(&String::from_utf8_lossy(&buf));
    } else {
        let _ = writeln!(out, "{protocol} with {n} nodes, seed {}", cfg.seed);
        let _ = writeln!(
            out,
            "generated {}  delivered {}  dropped {}",
            s.generated, s.delivered, s.dropped
        );
        for (name, v) in [
            ("etx", s.etx),
            ("delay_s", s.delay_s),
            ("queue_len", s.queue_len),
            ("rnd", s.rnd),
            ("range_m", s.range_m),
            ("energy_j", s.energy_j),
            ("throughput_bps", s.throughput_bps),
            ("lifetime_s", s.lifetime_s),
            ("c_otc", s.c_otc),
        ] {
            let _ = writeln!(out, "  {name:<15} {v:.4}");
        }
        let _ = writeln!(out, "metrics written to {}", path.display());
    }
    Ok(())
}

fn axis_label(metric: &str) -> (&'static str, &'static str) {
    match metric {
        "etx" => ("Expected transmission count", "transmissions per hop"),
        "delay_s" => ("End-to-end delay", "seconds"),
        "queue_len" => ("Queue length", "packets"),
        "rnd" => ("Relay node degree", "nodes"),
        "range_m" => ("Transmission range", "meters"),
        "energy_j" => ("Residual energy", "joules"),
        "throughput_bps" => ("Throughput", "bits per second"),
        "lifetime_s" => ("Predicted link lifetime", "seconds"),
        "adjust_ratio" => ("Range adjustment ratio", "fraction of nodes per epoch"),
        "degree" => ("Node degree", "nodes"),
        _ => ("", ""),
    }
}

fn cmd_compare(cfg: &ExperimentConfig, g: &GlobalArgs, out: &mut String) -> Result<(), Failure> {
    let runs = routing_runs(cfg)?;
    let points = aggregate_routing(&runs);
    prepare_out(&cfg.out)?;
    let path = cfg.out.join("compare.csv");
    write_csv(&points, BufWriter::new(File::create(&path).context("creating compare.csv")?))?;
    if g.svg {
        for metric in ROUTING_METRICS {
            let (title, unit) = axis_label(metric);
            let mut chart = LineChart::new(title, "number of nodes", unit);
            for &p in &cfg.protocols {
                let pts = points
                    .iter()
                    .filter(|r| r.protocol == p)
                    .map(|r| (r.node_count as f64, r.metric(metric)))
                    .collect();
                chart = chart.series(&p.to_string(), pts);
            }
            fs::write(cfg.out.join(format!("{metric}.svg")), chart.render()).context("writing SVG")?;
        }
    }
    if g.csv {
        let mut buf = Vec::new();
        write_csv(&points, &mut buf)?;
        out.push_str(&String::from_utf8_lossy(&buf));
    } else {
        print_routing_table(&points, out);
        let _ = writeln!(out, "results written to {}", path.display());
    }
    Ok(())
}

fn print_routing_table(points: &[RoutingPoint], out: &mut String) {
    let _ = write!(out, "{:<6} {:>5}", "proto", "nodes");
    for m in ROUTING_METRICS {
        let _ = write!(out, " {m:>14}");
    }
    out.push('\n');
    for p in points {
        let _ = write!(out, "{:<6} {:>5}", p.protocol.to_string(), p.node_count);
        for m in ROUTING_METRICS {
            let _ = write!(out, " {:>14.4}", p.metric(m));
        }
        out.push('\n');
    }
}

fn cmd_topo(cfg: &ExperimentConfig, g: &GlobalArgs, out: &mut String) -> Result<(), Failure> {
    let runs = topology_runs(cfg)?;
    let points = aggregate_topology(&runs);
    prepare_out(&cfg.out)?;
    let path = cfg.out.join("topo.csv");
    write_csv(&points, BufWriter::new(File::create(&path).context("creating topo.csv")?))?;
    if g.svg {
        for metric in ["adjust_ratio", "degree"] {
            let (title, unit) = axis_label(metric);
            let mut chart = LineChart::new(title, "number of nodes", unit);
            for c in [Controller::Otc, Controller::KConnection] {
                let pts = points
                    .iter()
                    .filter(|p| p.controller == c)
                    .map(|p| {
                        let v = if metric == "degree" { p.degree } else { p.adjust_ratio };
                        (p.node_count as f64, v)
                    })
                    .collect();
                chart = chart.series(&c.to_string(), pts);
            }
            fs::write(cfg.out.join(format!("{metric}.svg")), chart.render()).context("writing SVG")?;
        }
    }
    if g.csv {
        let mut buf = Vec::new();
        write_csv(&points, &mut buf)?;
        out.push_str(&String::from_utf8_lossy(&buf));
    } else {
        print_topo_table(&points, out);
        let _ = writeln!(out, "results written to {}", path.display());
    }
    Ok(())
}

fn print_topo_table(points: &[TopoPoint], out: &mut String) {
    let _ = writeln!(
        out,
        "{:<13} {:>5} {:>12} {:>8} {:>8}",
        "controller", "nodes", "adjust_ratio", "degree", "healthy"
    );
    for p in points {
        let _ = writeln!(
            out,
            "{:<13} {:>5} {:>12.4} {:>8.3} {:>8.3}",
            p.controller.to_string(),
            p.node_count,
            p.adjust_ratio,
            p.degree,
            p.healthy_fraction
        );
    }
}

fn cmd_rank(path: &Path, weights: Option<&[f64]>, csv: bool, out: &mut String) -> Result<(), Failure> {
    let file = File::open(path)
        .with_context(|| format!("opening {}", path.display()))
        .map_err(Failure::Usage)?;
    let table = MetricTable::from_csv_reader(file)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::Usage)?;
    let sys = FuzzySystem::uniform(7).map_err(|e| Failure::Runtime(e.into()))?;
    let mut report = analyze(&table, &sys).map_err(|e| Failure::Usage(e.into()))?;
    if let Some(w) = weights {
        report.weights = WeightVector(w.to_vec());
        report.utilities = node_utilities(&report.ranks, &report.weights).map_err(|e| Failure::Usage(e.into()))?;
        report.order = order_by_utility(&report.utilities);
    }
    if report.relative_variance.0.iter().any(|v| !v.is_finite()) {
        log::warn!("a metric column has zero mean; its relative variance is undefined");
    }
    let names = table.column_names();
    let node = |i: usize| format!("node{}", i + 1);
    if csv {
        out.push_str("item,name,value\n");
        for (j, name) in names.iter().enumerate() {
            let _ = writeln!(out, "rv,{name},{}", report.relative_variance.0[j]);
            let _ = writeln!(out, "weight,{name},{}", report.weights.0[j]);
        }
        for i in 0..table.rows() {
            for (j, name) in names.iter().enumerate() {
                let _ = writeln!(out, "rank,{}:{name},{}", node(i), report.ranks.rank(i, j));
            }
            let _ = writeln!(out, "utility,{},{}", node(i), report.utilities.0[i]);
        }
        for (pos, (i, _)) in report.order.iter().enumerate() {
            let _ = writeln!(out, "priority,{},{}", node(*i), pos + 1);
        }
        return Ok(());
    }
    let _ = writeln!(out, "{:<12} {:>12} {:>8}", "metric", "rv", "weight");
    for (j, name) in names.iter().enumerate() {
        let _ = writeln!(
            out,
            "{name:<12} {:>12.4e} {:>8.4}",
            report.relative_variance.0[j], report.weights.0[j]
        );
    }
    out.push('\n');
    let _ = write!(out, "{:<8}", "node");
    for name in names {
        let _ = write!(out, " {name:>10}");
    }
    let _ = writeln!(out, " {:>10}", "utility");
    for i in 0..table.rows() {
        let _ = write!(out, "{:<8}", node(i));
        for j in 0..table.cols() {
            let _ = write!(out, " {:>10}", report.ranks.rank(i, j));
        }
        let _ = writeln!(out, " {:>10.3}", report.utilities.0[i]);
    }
    let order: Vec<String> = report.order.iter().map(|(i, _)| node(*i)).collect();
    let _ = writeln!(out, "\npriority: {}", order.join(" -> "));
    Ok(())
}

fn cmd_lifetime(a: &LifetimeArgs, out: &mut String) -> Result<(), Failure> {
    if !(a.range > 0.0 && a.dt > 0.0 && a.horizon > 0.0) {
        return Err(Failure::Usage(anyhow::anyhow!("range, dt and horizon must be positive")));
    }
    let predicted = predict_lifetime(&a.source, &a.relay, &a.dest, a.range, a.horizon.min(DEFAULT_HORIZON))
        .map_err(|e| Failure::Usage(e.into()))?;
    let oracle = survival_exit_oracle(&a.source, &a.relay, &a.dest, a.range, a.dt, a.horizon);
    let _ = writeln!(out, "case      {:?}", predicted.case);
    let _ = writeln!(out, "predicted {}", predicted.lifetime);
    let _ = writeln!(out, "oracle    {oracle}");
    Ok(())
}

fn cmd_rules(terms: u32, metrics: u32, sbfl_terms: u32, g: &GlobalArgs, out: &mut String) -> Result<(), Failure> {
    if terms == 0 || metrics == 0 || sbfl_terms == 0 {
        return Err(Failure::Usage(anyhow::anyhow!("terms and metrics must be positive")));
    }
    let mut rows = Vec::new();
    for m in 1..=metrics {
        let classic = rule_count(terms, m, RuleMode::Classic).ok();
        let sbfl = rule_count(sbfl_terms, m, RuleMode::Sbfl).map_err(|e| Failure::Runtime(e.into()))?;
        rows.push((m, classic, sbfl));
    }
    let show = |c: Option<u64>| c.map_or("overflow".to_string(), |v| v.to_string());
    if g.csv {
        out.push_str("metrics,classic,sbfl\n");
        for (m, c, s) in &rows {
            let _ = writeln!(out, "{m},{},{s}", show(*c));
        }
    } else {
        let _ = writeln!(out, "{:>7} {:>22} {:>6}", "metrics", "classic", "sbfl");
        for (m, c, s) in &rows {
            let _ = writeln!(out, "{m:>7} {:>22} {s:>6}", show(*c));
        }
    }
    if g.svg {
        let dir = g.out.clone().unwrap_or_else(|| PathBuf::from("out"));
        prepare_out(&dir)?;
        let mut chart = LineChart::new("Number of fuzzy rules", "number of metrics", "rules (log scale)");
        chart.log_y = true;
        let chart = chart
            .series(
                &format!("classic, {terms} terms"),
                rows.iter().filter_map(|(m, c, _)| Some((f64::from(*m), (*c)? as f64))).collect(),
            )
            .series(
                &format!("sbfl, {sbfl_terms} terms"),
                rows.iter().map(|(m, _, s)| (f64::from(*m), *s as f64)).collect(),
            );
        fs::write(dir.join("rules.svg"), chart.render()).context("writing rules.svg")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn state_parsing() {
        let s = parse_state("1, 2, 3, 0.5").unwrap();
        assert_eq!((s.x, s.y, s.speed), (1.0, 2.0, 3.0));
        assert!(parse_state("1,2,3").is_err());
        assert!(parse_state("1,2,-3,0").is_err());
        assert!(parse_state("a,2,3,0").is_err());
    }

    #[test]
    fn rank_command_needs_a_table() {
        let cli = Cli::parse_from(["cbrt", "rank", "/nonexistent/table.csv"]);
        let mut out = String::new();
        assert_eq!(dispatch(&cli, &mut out).unwrap_err().code(), 2);
    }
}
