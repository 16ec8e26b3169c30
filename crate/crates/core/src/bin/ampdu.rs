//! Command-line front-end: single-point optimization, parameter sweeps,
//! closed-form optimum, crossover rates and Monte-Carlo validation.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use ampdu_model::approx::{crossover_mcs, crossover_rate_reliable, x_opt_closed_form, ContinuousScenario};
use ampdu_model::exact::optimize_exact;
use ampdu_model::geometry::MsduSlot;
use ampdu_model::params::{ModelConfig, ProtocolFlavor, Scenario};
use ampdu_model::report::{improvement, run_sweep, validate_grid, write_csv, write_json, SweepGrid};
use ampdu_model::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;

#[derive(Parser)]
#[command(name = "ampdu", version, about = "A-MPDU/A-MSDU aggregation throughput model")]
struct Cli {
    /// TOML file overriding overhead and protocol parameters.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Best aggregation plan for one scenario, as JSON.
    Optimize {
        #[arg(long)]
        flavor: ProtocolFlavor,
        #[arg(long)]
        mcs: usize,
        #[arg(long)]
        ber: f64,
        /// MSDU payload, bytes.
        #[arg(long)]
        msdu_len: u64,
    },
    /// Optimize every point of a grid and write the table.
    Sweep {
        #[arg(long, value_name = "PATH")]
        grid_file: Option<PathBuf>,
        /// Output file; stdout when omitted.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Percentage gain of one flavor over another across a grid, as JSON.
    Improvement {
        #[arg(long, default_value = "ax256")]
        a: ProtocolFlavor,
        #[arg(long, default_value = "ac64")]
        b: ProtocolFlavor,
        #[arg(long, value_name = "PATH")]
        grid_file: Option<PathBuf>,
    },
    /// Closed-form optimal MPDU count of the continuous model.
    Xopt {
        #[arg(long)]
        ber: f64,
        /// PHY rate, Mbps.
        #[arg(long)]
        rate: f64,
        /// Per-MPDU overhead, bytes; defaults to delimiter + header + FCS.
        #[arg(long)]
        om_bytes: Option<u64>,
        /// Supplies the PPDU time limit and preamble.
        #[arg(long, default_value = "ax256")]
        flavor: ProtocolFlavor,
    },
    /// Rate and MCS above which the 64-MPDU window stops being optimal.
    Crossover {
        #[arg(long, required_unless_present = "reliable", conflicts_with = "reliable")]
        ber: Option<f64>,
        /// Error-free channel, where the crossover depends on the MSDU length.
        #[arg(long, requires = "msdu_len")]
        reliable: bool,
        #[arg(long)]
        msdu_len: Option<u64>,
        #[arg(long, default_value = "ax256")]
        flavor: ProtocolFlavor,
    },
    /// Compare Monte-Carlo throughput against the analytic value at every grid point.
    Validate {
        #[arg(long, default_value_t = 100_000)]
        cycles: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_name = "PATH")]
        grid_file: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            eprintln!("{}", msg.lines().next().unwrap_or("invalid arguments"));
            return ExitCode::from(EXIT_USAGE);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

fn load_grid(path: Option<&Path>) -> anyhow::Result<SweepGrid> {
    Ok(match path {
        Some(p) => SweepGrid::load(p)?,
        None => SweepGrid::default(),
    })
}

fn print_json<T: Serialize>(value: &T) -> anyhow::Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let model = match &cli.config {
        Some(p) => ModelConfig::load(p)?,
        None => ModelConfig::default(),
    };
    match cli.command {
        Command::Optimize { flavor, mcs, ber, msdu_len } => {
            let config = model.protocol(flavor);
            let scenario = Scenario::new(flavor, mcs, ber, msdu_len, config, &model.overhead)?;
            match optimize_exact(&scenario, config, &model.overhead) {
                Ok(result) => print_json(&result)?,
                Err(e @ Error::NoFeasiblePlan) => {
                    print_json(&json!({ "error": e.to_string() }))?;
                    return Ok(ExitCode::from(EXIT_INFEASIBLE));
                }
                Err(e) => return Err(e.into()),
            }
        }
        Command::Sweep { grid_file, out, format } => {
            let grid = load_grid(grid_file.as_deref())?;
            let rows = run_sweep(&grid, &model);
            let sink: Box<dyn Write> = match &out {
                Some(p) => Box::new(File::create(p).with_context(|| p.display().to_string())?),
                None => Box::new(io::stdout().lock()),
            };
            let mut sink = BufWriter::new(sink);
            match format {
                Format::Csv => write_csv(&rows, &mut sink)?,
                Format::Json => write_json(&rows, &mut sink)?,
            }
            sink.flush()?;
            if !rows.is_empty() && rows.iter().all(|r| !r.is_feasible()) {
                eprintln!("no grid point admits a transmission");
                return Ok(ExitCode::from(EXIT_INFEASIBLE));
            }
        }
        Command::Improvement { a, b, grid_file } => {
            let grid = load_grid(grid_file.as_deref())?;
            let rows = run_sweep(&grid, &model);
            print_json(&improvement(&rows, a, b))?;
        }
        Command::Xopt { ber, rate, om_bytes, flavor } => {
            if !(rate > 0.0) {
                anyhow::bail!("--rate must be positive, got {rate}");
            }
            let config = model.protocol(flavor);
            let o_m = om_bytes.unwrap_or(model.overhead.mpdu_overhead());
            // X_opt does not depend on the MSDU length
            let slot = MsduSlot::new(1500, &model.overhead);
            let s = ContinuousScenario::from_parts(rate, ber, slot, o_m, config.ppdu_time_limit, config.preamble);
            let x_opt = x_opt_closed_form(&s)?;
            print_json(&json!({
                "ber": ber,
                "rate_mbps": rate,
                "x_opt": x_opt,
                "coefficient": x_opt / rate,
            }))?;
        }
        Command::Crossover { ber, reliable, msdu_len, flavor } => {
            let config = model.protocol(flavor);
            if reliable {
                let len = msdu_len.context("--reliable needs --msdu-len")?;
                print_json(&crossover_rate_reliable(len, &model.overhead, config)?)?;
            } else {
                let ber = ber.context("--ber is required")?;
                print_json(&crossover_mcs(ber, &model.overhead, config)?)?;
            }
        }
        Command::Validate { cycles, seed, grid_file } => {
            let grid = load_grid(grid_file.as_deref())?;
            let rows = validate_grid(&grid, &model, cycles, seed)?;
            let worst_rel = rows.iter().map(|r| r.relative_deviation()).fold(0.0, f64::max);
            let worst_z = rows.iter().map(|r| r.z_score()).fold(0.0, f64::max);
            print_json(&json!({
                "cycles": cycles,
                "seed": seed,
                "points": rows.len(),
                "max_relative_deviation": worst_rel,
                "max_z_score": worst_z,
            }))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}
