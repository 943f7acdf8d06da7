use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::builder::BoolishValueParser;
use clap::{Args, Parser, Subcommand};

use aoa_sim::config::ScenarioSpec;
use aoa_sim::gasmodel::GasMode;
use aoa_sim::report::{self, write_atomic};
use aoa_sim::scenarios::{self, goms};
use aoa_sim::stats;

/// Gas-sponsorship simulator: campaigns, threat suite, workflow models.
///
/// Every flag can also be set through an environment variable prefixed with
/// AOA_SIM_, e.g. AOA_SIM_SEED=7.
#[derive(Parser, Debug)]
#[command(name = "aoa-sim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a gas campaign and write receipts, summary, report and metadata.
    RunCampaign(RunArgs),
    /// Run the adversarial suite and write adversarial.json.
    Adversarial(RunArgs),
    /// Run the signer-censorship experiment and write censorship.json.
    Censorship(RunArgs),
    /// Print the GOMS operator table.
    Goms,
    /// Summarize an existing receipts.csv.
    Summarize(SummarizeArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Scenario TOML file; built-in defaults when omitted.
    #[arg(long, env = "AOA_SIM_CONFIG")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, env = "AOA_SIM_OUT", default_value = "out")]
    out: PathBuf,
    #[arg(long, env = "AOA_SIM_SEED")]
    seed: Option<u64>,
    /// Operations per system.
    #[arg(long, env = "AOA_SIM_N")]
    n: Option<usize>,
    /// calibrated or micro.
    #[arg(long, env = "AOA_SIM_GAS_MODE")]
    gas_mode: Option<GasMode>,
    /// Jitter on or off.
    #[arg(long, env = "AOA_SIM_NOISE", value_parser = BoolishValueParser::new(), num_args = 0..=1, default_missing_value = "true")]
    noise: Option<bool>,
}

#[derive(Args, Debug)]
struct SummarizeArgs {
    /// receipts.csv written by run-campaign.
    input: PathBuf,
    /// Directory for summary.csv, deltas.csv and report.txt; the report goes
    /// to stdout when omitted.
    #[arg(long, env = "AOA_SIM_OUT")]
    out: Option<PathBuf>,
    #[arg(long, env = "AOA_SIM_SEED", default_value_t = 42)]
    seed: u64,
    #[arg(long, env = "AOA_SIM_RESAMPLES", default_value_t = stats::DEFAULT_RESAMPLES)]
    resamples: usize,
}

impl RunArgs {
    fn spec(&self) -> Result<ScenarioSpec> {
        let mut spec = match &self.config {
            Some(path) => ScenarioSpec::load(path)?,
            None => ScenarioSpec::default(),
        };
        if let Some(seed) = self.seed {
            spec.run.seed = seed;
        }
        if let Some(n) = self.n {
            spec.run.n = n;
        }
        if let Some(mode) = self.gas_mode {
            spec.run.gas_mode = mode;
        }
        if let Some(noise) = self.noise {
            spec.run.noise = noise;
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn write_json(dir: &Path, name: &str, value: &impl serde::Serialize) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    let text = serde_json::to_string_pretty(value)? + "\n";
    write_atomic(&path, text.as_bytes())?;
    Ok(path)
}

fn run_campaign(args: &RunArgs) -> Result<bool> {
    let spec = args.spec()?;
    let campaign = scenarios::run_campaign(&spec)?;
    let files = report::write_campaign(&args.out, &spec, &campaign)?;
    print!("{}", std::fs::read_to_string(&files.report)?);
    let ok = campaign.runs.iter().all(|r| r.conserved());
    if !ok {
        eprintln!("conservation check failed; see {}", files.metadata.display());
    }
    Ok(ok)
}

fn adversarial(args: &RunArgs) -> Result<bool> {
    let spec = args.spec()?;
    let report = scenarios::run_adversarial_suite(&spec)?;
    let path = write_json(&args.out, "adversarial.json", &report)?;
    for c in &report.checks {
        println!("{:<7} {:<4} {} ({} attempts)", if c.passed { "PASS" } else { "FAIL" }, c.id, c.title, c.attempts);
        for v in &c.violations {
            println!("             {v}");
        }
    }
    println!("wrote {}", path.display());
    Ok(report.passed)
}

fn censorship(args: &RunArgs) -> Result<bool> {
    let spec = args.spec()?;
    let report = scenarios::run_censorship_experiment(&spec)?;
    let path = write_json(&args.out, "censorship.json", &report)?;
    for (kind, t) in &report.tallies {
        println!("{kind:<14} {}/{} validated", t.succeeded, report.ops_per_kind);
    }
    for (kind, audit) in &report.storage {
        println!("{kind:<14} self-storage {}/{} ops clean", audit.ops_passed, audit.ops_checked);
    }
    println!("broken variant flagged: {}", report.broken_variant_flagged());
    println!("wrote {}", path.display());
    Ok(report.storage.values().all(|a| a.passed()) && report.broken_variant_flagged())
}

fn summarize(args: &SummarizeArgs) -> Result<bool> {
    let text = std::fs::read_to_string(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let samples = report::read_receipts_csv(&text)?;
    let table = stats::summarize(&samples, args.resamples, args.seed)?;
    let rendered = report::render_report(&table, None);
    match &args.out {
        Some(dir) => {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            write_atomic(&dir.join("summary.csv"), report::summary_csv(&table)?.as_bytes())?;
            write_atomic(&dir.join("deltas.csv"), report::deltas_csv(&table)?.as_bytes())?;
            write_atomic(&dir.join("report.txt"), rendered.as_bytes())?;
        }
        None => print!("{rendered}"),
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::RunCampaign(args) => run_campaign(args),
        Command::Adversarial(args) => adversarial(args),
        Command::Censorship(args) => censorship(args),
        Command::Goms => {
            print!("{}", goms::render_table());
            Ok(true)
        }
        Command::Summarize(args) => summarize(args),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
