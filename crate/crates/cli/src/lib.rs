//! Command implementations behind the `wsnsim` binary.
//!
//! Three commands share one config format: `run` executes a single scenario
//! and writes its trace and metrics, `compare` pairs the two protocols over
//! a block of seeds, and `sweep` crosses one config key over a value list,
//! the seed block and both protocols.
//!
//! Exit codes: 0 on success, 2 for an invalid config or flag value, 1 for
//! anything else (typically io).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use wsnsim_core::metrics::{compute, RunMetrics};
use wsnsim_core::runner::{run, run_batch};
use wsnsim_core::scenario::Protocol;
use wsnsim_core::trace::fmt_e9;
use wsnsim_core::Scenario;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 1,
        }
    }
}

impl From<wsnsim_core::ScenarioError> for CliError {
    fn from(e: wsnsim_core::ScenarioError) -> Self {
        CliError::Config(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(name = "wsnsim", about = "Wireless sensor network routing simulator", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run one scenario; write metrics.csv, trace.csv and lifetime_curve.csv.
    Run(RunArgs),
    /// Run both protocols over a seed block and pair the results by seed.
    Compare(CompareArgs),
    /// Cross one config key over values, seeds and both protocols.
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
pub struct RunArgs {
    /// Scenario config file (key = value lines).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the config protocol (e2xlradr or dsr).
    #[arg(long)]
    pub protocol: Option<String>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// How many consecutive seeds to run, starting at the config seed.
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// KEY=V1,V2,... applied on top of the config, one run block per value.
    #[arg(long)]
    pub vary: String,
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

pub fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Sweep(args) => cmd_sweep(args),
    }
}

fn load_scenario(config: &Option<PathBuf>) -> Result<Scenario, CliError> {
    let scenario = match config {
        Some(path) => Scenario::from_config_text(&fs::read_to_string(path)?)?,
        None => Scenario::default(),
    };
    scenario.validate()?;
    Ok(scenario)
}

fn write_lines(path: &Path, lines: &[String]) -> Result<(), CliError> {
    let mut text = lines.join("\n");
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn opt_e9(x: Option<f64>) -> String {
    x.map(fmt_e9).unwrap_or_default()
}

fn death_cell(m: &RunMetrics) -> String {
    let mut deaths = m.death_times.clone();
    deaths.sort_by_key(|&(t, n)| (t.0, n.0));
    let mut cell = String::new();
    for (i, (t, n)) in deaths.iter().enumerate() {
        if i > 0 {
            cell.push(';');
        }
        let _ = write!(cell, "{}:{}", n.0, t.0);
    }
    cell
}

pub fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    let mut scenario = load_scenario(&args.config)?;
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    if let Some(protocol) = &args.protocol {
        scenario.apply_key("protocol", protocol)?;
    }
    scenario.validate()?;

    let log = run(&scenario)?;
    let m = compute(&log);

    fs::create_dir_all(&args.out)?;
    write_lines(&args.out.join("trace.csv"), &log.csv_lines())?;
    write_lines(&args.out.join("lifetime_curve.csv"), &log.lifetime_curve_lines())?;

    let header = "lifetime_ticks,lifetime_censored,throughput_bps,mean_delay_ticks,\
                  delivery_ratio,total_energy_j,retransmissions_total,per_node_death_times,\
                  scenario_hash,seed"
        .replace(' ', "");
    let row = format!(
        "{},{},{},{},{},{},{},{},{},{}",
        m.lifetime.ticks(),
        m.lifetime.is_censored(),
        fmt_e9(m.throughput_bps),
        opt_e9(m.mean_delay_ticks),
        fmt_e9(m.delivery_ratio),
        fmt_e9(m.total_energy_j),
        m.retransmissions,
        death_cell(&m),
        scenario.hash(),
        scenario.seed,
    );
    write_lines(&args.out.join("metrics.csv"), &[header, row])?;

    println!(
        "run complete: protocol={} seed={} delivered={} lost={} lifetime={}{}",
        scenario.protocol.as_str(),
        scenario.seed,
        m.delivered,
        m.lost,
        m.lifetime.ticks(),
        if m.lifetime.is_censored() { " (censored)" } else { "" },
    );
    Ok(())
}

pub fn cmd_compare(args: CompareArgs) -> Result<(), CliError> {
    if args.seeds == 0 {
        return Err(CliError::Config("--seeds must be at least 1".into()));
    }
    let base = load_scenario(&args.config)?;

    let mut scenarios = Vec::with_capacity(2 * args.seeds as usize);
    for i in 0..args.seeds {
        for protocol in [Protocol::E2xlradr, Protocol::Dsr] {
            let mut s = base.clone();
            s.seed = base.seed + i;
            s.protocol = protocol;
            scenarios.push(s);
        }
    }
    let logs = run_batch(&scenarios)?;

    let mut lines = vec![
        "seed,e2xlradr_lifetime_ticks,e2xlradr_censored,dsr_lifetime_ticks,dsr_censored,\
         lifetime_ratio,e2xlradr_throughput_bps,dsr_throughput_bps,e2xlradr_mean_delay_ticks,\
         dsr_mean_delay_ticks,e2xlradr_delivery_ratio,dsr_delivery_ratio"
            .replace(' ', ""),
    ];
    let mut ratio_sum = 0.0;
    let mut censored = (0u64, 0u64);
    for i in 0..args.seeds as usize {
        let xl = compute(&logs[2 * i]);
        let dsr = compute(&logs[2 * i + 1]);
        // Censored lifetimes enter the ratio at the horizon, which can only
        // understate the surviving protocol's advantage.
        let ratio = xl.lifetime.ticks() as f64 / dsr.lifetime.ticks() as f64;
        ratio_sum += ratio;
        censored.0 += xl.lifetime.is_censored() as u64;
        censored.1 += dsr.lifetime.is_censored() as u64;
        lines.push(format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            base.seed + i as u64,
            xl.lifetime.ticks(),
            xl.lifetime.is_censored(),
            dsr.lifetime.ticks(),
            dsr.lifetime.is_censored(),
            fmt_e9(ratio),
            fmt_e9(xl.throughput_bps),
            fmt_e9(dsr.throughput_bps),
            opt_e9(xl.mean_delay_ticks),
            opt_e9(dsr.mean_delay_ticks),
            fmt_e9(xl.delivery_ratio),
            fmt_e9(dsr.delivery_ratio),
        ));
    }
    fs::create_dir_all(&args.out)?;
    write_lines(&args.out.join("compare.csv"), &lines)?;

    let mean_ratio = ratio_sum / args.seeds as f64;
    println!(
        "compared {} seeds: mean lifetime ratio e2xlradr/dsr = {:.3} \
         (censored: e2xlradr {}/{}, dsr {}/{})",
        args.seeds, mean_ratio, censored.0, args.seeds, censored.1, args.seeds,
    );
    if args.seeds == 1 {
        println!("note: a single seed gives a low-confidence ratio; use more seeds");
    }
    Ok(())
}

pub fn cmd_sweep(args: SweepArgs) -> Result<(), CliError> {
    if args.seeds == 0 {
        return Err(CliError::Config("--seeds must be at least 1".into()));
    }
    let (key, value_list) = args
        .vary
        .split_once('=')
        .ok_or_else(|| CliError::Config("--vary expects KEY=V1,V2,...".into()))?;
    let key = key.trim();
    if key == "protocol" || key == "seed" {
        return Err(CliError::Config(format!(
            "--vary cannot target `{key}`; the sweep already spans it"
        )));
    }
    let values: Vec<&str> = value_list
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .collect();
    if values.is_empty() {
        return Err(CliError::Config("--vary needs at least one value".into()));
    }

    let base = load_scenario(&args.config)?;
    let mut scenarios = Vec::new();
    let mut labels = Vec::new();
    for value in &values {
        for i in 0..args.seeds {
            for protocol in [Protocol::E2xlradr, Protocol::Dsr] {
                let mut s = base.clone();
                s.apply_key(key, value)?;
                s.seed = base.seed + i;
                s.protocol = protocol;
                s.validate()?;
                labels.push((value.to_string(), s.seed, protocol));
                scenarios.push(s);
            }
        }
    }
    let logs = run_batch(&scenarios)?;

    let mut lines = vec![
        "key,value,seed,protocol,lifetime_ticks,lifetime_censored,throughput_bps,\
         mean_delay_ticks,delivery_ratio,generated,delivered,lost"
            .replace(' ', ""),
    ];
    for ((value, seed, protocol), log) in labels.iter().zip(&logs) {
        let m = compute(log);
        lines.push(format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            key,
            value,
            seed,
            protocol.as_str(),
            m.lifetime.ticks(),
            m.lifetime.is_censored(),
            fmt_e9(m.throughput_bps),
            opt_e9(m.mean_delay_ticks),
            fmt_e9(m.delivery_ratio),
            m.generated,
            m.delivered,
            m.lost,
        ));
    }
    fs::create_dir_all(&args.out)?;
    write_lines(&args.out.join("sweep.csv"), &lines)?;
    println!(
        "swept {} over {} values x {} seeds x 2 protocols ({} runs)",
        key,
        values.len(),
        args.seeds,
        logs.len(),
    );
    Ok(())
}
