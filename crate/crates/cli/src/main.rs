//! `rachsim`: analysis, simulation and comparison runs from the command line.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use rachsim_core::analysis::{self, ActivityState};
use rachsim_core::experiments::{self, ExperimentSpec, RunKind};
use rachsim_core::io::{num, Table};
use rachsim_core::params::per_m2_to_per_km2;
use tracing::info;

const EXIT_VALIDATION: u8 = 1;
const EXIT_NUMERIC: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "rachsim", version, about = "Random-access analysis and simulation for massive-IoT cellular networks")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Slot-1 success and detection probabilities over the grid.
    Analyze(Common),
    /// Multi-slot queue evolution of every scheme over the grid.
    Evolve(WithSlots),
    /// Monte Carlo estimates over the grid.
    Simulate(WithSim),
    /// Analysis, simulation and agreement checks over the grid.
    Compare(WithSim),
    /// Exact and Poisson-approximated backlog CDFs of slots 2 and 3.
    Pmf(Common),
    /// Optimal BS density for the slot-1 activity at every grid point.
    OptimalDensity(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// Bundled experiment name (fig3 ... fig10) or path to a TOML document.
    #[arg(short, long)]
    config: String,

    /// Override a document value, e.g. `network.gamma_th_db=-5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Output root; results go to `<out>/<experiment>/<command>/`.
    #[arg(short, long, env = "RACHSIM_OUT", default_value = "out")]
    out: PathBuf,

    /// Print the effective document after overrides and exit.
    #[arg(long)]
    print_normalized: bool,
}

#[derive(Debug, Args)]
struct WithSlots {
    #[command(flatten)]
    common: Common,

    /// Evaluate only the first M slots.
    #[arg(long, value_name = "M")]
    slots: Option<usize>,
}

#[derive(Debug, Args)]
struct WithSim {
    #[command(flatten)]
    common: Common,

    /// Evaluate only the first M slots.
    #[arg(long, value_name = "M")]
    slots: Option<usize>,

    /// Master seed (overrides `sim.seed`).
    #[arg(long)]
    seed: Option<u64>,

    /// Realizations per grid point and scheme (overrides `sim.realizations`).
    #[arg(long)]
    realizations: Option<usize>,

    /// Torus side in m (overrides `sim.side_m`).
    #[arg(long, value_name = "METRES")]
    side: Option<f64>,

    /// Worker threads; defaults to all cores. Results do not depend on it.
    #[arg(short, long)]
    jobs: Option<usize>,
}

impl WithSim {
    fn overrides(&self) -> Vec<String> {
        let mut ov = self.common.overrides.clone();
        if let Some(s) = self.seed {
            ov.push(format!("sim.seed={s}"));
        }
        if let Some(r) = self.realizations {
            ov.push(format!("sim.realizations={r}"));
        }
        if let Some(l) = self.side {
            ov.push(format!("sim.side_m={l:?}"));
        }
        ov
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    init_logging(cli.verbose);
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let numeric = e
                .chain()
                .filter_map(|c| c.downcast_ref::<rachsim_core::Error>())
                .any(|c| !c.is_validation());
            ExitCode::from(if numeric { EXIT_NUMERIC } else { EXIT_VALIDATION })
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(level));
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).init();
}

fn load(common: &Common, overrides: &[String]) -> anyhow::Result<Option<ExperimentSpec>> {
    let spec = ExperimentSpec::load(&common.config, overrides).with_context(|| format!("loading `{}`", common.config))?;
    if common.print_normalized {
        print!("{}", spec.base.to_toml_string());
        return Ok(None);
    }
    Ok(Some(spec))
}

fn out_dir(common: &Common, spec: &ExperimentSpec, kind: RunKind) -> PathBuf {
    let sub = match kind {
        RunKind::Analyze => "analyze",
        RunKind::Evolve => "evolve",
        RunKind::Simulate => "simulate",
        RunKind::Compare => "compare",
        RunKind::Pmf => "pmf",
        RunKind::OptimalDensity => "optimal-density",
    };
    common.out.join(&spec.name).join(sub)
}

fn write_tables(spec: &ExperimentSpec, kind: RunKind, dir: &Path, tables: &[(&str, Table)]) -> anyhow::Result<()> {
    for (name, t) in tables {
        t.write(&dir.join(name))?;
    }
    let names: Vec<String> = tables.iter().map(|(n, _)| n.to_string()).collect();
    experiments::write_manifest(spec, kind, dir, &names)?;
    println!("{}", dir.display());
    Ok(())
}

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Analyze(c) => {
            let Some(spec) = load(&c, &c.overrides)? else { return Ok(()) };
            let analyses = experiments::run_analysis(&spec, Some(1))?;
            let dir = out_dir(&c, &spec, RunKind::Analyze);
            write_tables(&spec, RunKind::Analyze, &dir, &[("analysis.csv", experiments::analysis_table(&spec, &analyses))])
        }
        Command::Evolve(w) => {
            let Some(spec) = load(&w.common, &w.common.overrides)? else { return Ok(()) };
            let analyses = experiments::run_analysis(&spec, w.slots)?;
            let dir = out_dir(&w.common, &spec, RunKind::Evolve);
            write_tables(&spec, RunKind::Evolve, &dir, &[("evolution.csv", experiments::analysis_table(&spec, &analyses))])
        }
        Command::Simulate(w) => {
            let Some(spec) = load(&w.common, &w.overrides())? else { return Ok(()) };
            info!(experiment = %spec.name, points = spec.grid().len(), "simulating");
            let sims = experiments::run_simulation(&spec, w.slots, w.jobs)?;
            let dir = out_dir(&w.common, &spec, RunKind::Simulate);
            write_tables(&spec, RunKind::Simulate, &dir, &[("simulation.csv", experiments::simulation_table(&spec, &sims))])
        }
        Command::Compare(w) => {
            let Some(spec) = load(&w.common, &w.overrides())? else { return Ok(()) };
            info!(experiment = %spec.name, points = spec.grid().len(), "comparing");
            let dir = out_dir(&w.common, &spec, RunKind::Compare);
            let report = experiments::run_experiment(&spec, w.slots, &dir, w.jobs)?;
            println!("{}", dir.display());
            eprintln!(
                "{} of {} checks within tolerance",
                report.rows.len() - report.failures(),
                report.rows.len()
            );
            Ok(())
        }
        Command::Pmf(c) => {
            let Some(spec) = load(&c, &c.overrides)? else { return Ok(()) };
            let rows = experiments::cdf_rows(&spec, None)?;
            if rows.is_empty() {
                anyhow::bail!(rachsim_core::Error::Config(
                    "backlog CDFs need traffic covering at least 3 slots".into()
                ));
            }
            let dir = out_dir(&c, &spec, RunKind::Pmf);
            write_tables(&spec, RunKind::Pmf, &dir, &[("cdf.csv", experiments::cdf_table(&spec, &rows))])
        }
        Command::OptimalDensity(c) => {
            let Some(spec) = load(&c, &c.overrides)? else { return Ok(()) };
            let dir = out_dir(&c, &spec, RunKind::OptimalDensity);
            let table = optimal_density_table(&spec)?;
            write_tables(&spec, RunKind::OptimalDensity, &dir, &[("optimal_density.csv", table)])
        }
    }
}

fn optimal_density_table(spec: &ExperimentSpec) -> anyhow::Result<Table> {
    let mut header: Vec<String> = spec.axes.iter().map(|a| a.var.name().to_string()).collect();
    header.extend(
        ["scheme", "active_density_per_km2", "lambda_b_star_per_km2", "load_at_star", "C_at_star", "C_at_configured"]
            .map(String::from),
    );
    let mut t = Table::new(header);
    for a in experiments::run_analysis(spec, Some(1))? {
        let set = spec.point_params(&a.point)?;
        let s = a.trace.slot(1);
        let star = analysis::optimal_bs_density(&s.activity, &set.network)?;
        let at_star = set.network.modified(|n| n.lambda_b = star)?;
        let act: ActivityState = s.activity.rescaled(&at_star);
        let mut row: Vec<String> = a.point.coords.iter().map(|&(_, v)| num(v)).collect();
        row.extend([
            a.trace.scheme.label(),
            num(per_m2_to_per_km2(s.activity.active_density)),
            num(per_m2_to_per_km2(star)),
            num(act.load),
            num(analysis::received_packets_per_bs(&act, &at_star)),
            num(s.c_received),
        ]);
        t.push(row);
    }
    Ok(t)
}
