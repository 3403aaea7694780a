use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use evacsim::oracle::oracle_check;
use evacsim::pipeline::{populate, run_cell, run_experiment_with, Algorithm, CellOptions, ExperimentConfig, FireReplay};
use evacsim::report::{read_report, summary_text, ReportWriter};
use evacsim::routing::MetricFault;
use evacsim::scenario::{load_scenario, reference_building, Scenario};
use evacsim::Tick;

const EXIT_USAGE: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_MISMATCH: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "evacsim", version, about = "Building evacuation simulator: DSP, CPNST and CPNST&TD routing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one (algorithm, occupancy, seed) cell and write its report row.
    Run(RunArgs),
    /// Run the full experiment grid and write every row plus a per-cell summary.
    Batch(BatchArgs),
    /// Check the time-dependent search against a brute-force oracle.
    OracleCheck(OracleArgs),
    /// Summarize an existing report file.
    Report(ReportArgs),
    /// Write the bundled reference building as a scenario document.
    Scenario(ScenarioArgs),
}

#[derive(Debug, Args)]
struct SimArgs {
    /// Scenario document; the bundled reference building when omitted.
    #[arg(long, value_name = "PATH")]
    scenario: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ReplayArg::Shared)]
    fire_replay: ReplayArg,
    /// Reassign casualties against the planning timeline without adding
    /// earlier reassigned routes to it.
    #[arg(long)]
    reassign_static_timeline: bool,
    /// Override the scenario's tick cap.
    #[arg(long, value_name = "N")]
    tick_cap: Option<Tick>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    sim: SimArgs,
    #[arg(long, value_parser = parse_algorithm)]
    algorithm: Algorithm,
    /// Evacuee count; the scenario's own placement when omitted.
    #[arg(long, value_name = "N")]
    evacuees: Option<u32>,
    /// Cell seed. A report row's seed column reproduces that row.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    /// Also write the event log, one JSON object per line.
    #[arg(long, value_name = "PATH")]
    events: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BatchArgs {
    #[command(flatten)]
    sim: SimArgs,
    #[arg(long, value_parser = parse_algorithm, value_delimiter = ',', default_value = "dsp,cpnst,cpnst-td")]
    algorithm: Vec<Algorithm>,
    #[arg(long, value_delimiter = ',', default_value = "30,60,90,120")]
    evacuees: Vec<u32>,
    #[arg(long, default_value_t = 5)]
    runs: u32,
    /// Base seed for the cell seeds.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    /// Summary file; defaults to the report path with a `.summary.csv` suffix.
    #[arg(long, value_name = "PATH")]
    summary: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 200)]
    instances: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Deliberately break the search metric (negative control).
    #[arg(long, value_enum, hide = true)]
    inject_fault: Option<FaultArg>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long, value_name = "PATH")]
    input: PathBuf,
    /// Write the summary here instead of standard output.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    /// Place this many evacuees using the occupancy stream of `--seed`.
    #[arg(long, value_name = "N")]
    evacuees: Option<u32>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ReplayArg {
    Shared,
    Independent,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FaultArg {
    DropDecisionCost,
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    s.parse().map_err(|e: evacsim::Error| e.to_string())
}

#[derive(Debug)]
enum Failure {
    Invalid(String),
    Mismatch(String),
}

impl From<evacsim::Error> for Failure {
    fn from(e: evacsim::Error) -> Self {
        Failure::Invalid(e.to_string())
    }
}

fn io_context(path: &Path) -> impl FnOnce(std::io::Error) -> Failure + '_ {
    move |e| Failure::Invalid(format!("{}: {e}", path.display()))
}

impl SimArgs {
    fn scenario(&self) -> Result<Scenario, Failure> {
        let mut scenario = match &self.scenario {
            Some(path) => load_scenario(&fs::read_to_string(path).map_err(io_context(path))?)?,
            None => reference_building(),
        };
        if let Some(cap) = self.tick_cap {
            if cap == 0 {
                return Err(Failure::Invalid("tick cap must be at least 1".into()));
            }
            scenario.params.tick_cap = cap;
        }
        Ok(scenario)
    }

    fn fire_replay(&self) -> FireReplay {
        match self.fire_replay {
            ReplayArg::Shared => FireReplay::Shared,
            ReplayArg::Independent => FireReplay::Independent,
        }
    }
}

/// Writes `bytes` to a sibling temporary file and renames it into place, so
/// `path` either holds the complete content or does not change.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(io_context(&tmp))?;
    fs::rename(&tmp, path).map_err(io_context(path))
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let template = args.sim.scenario()?;
    let scenario = populate(&template, args.evacuees, args.seed)?;
    let opts = CellOptions {
        fire_replay: args.sim.fire_replay(),
        static_timeline: args.sim.reassign_static_timeline,
        record_events: args.events.is_some(),
    };
    let run = run_cell(&scenario, args.algorithm, args.seed, opts);

    let mut report = ReportWriter::new(Vec::new())?;
    report.write(&run.row)?;
    write_atomic(&args.out, &report.into_inner())?;
    if let Some(path) = &args.events {
        let mut log = Vec::new();
        for e in &run.outcome.events {
            serde_json::to_writer(&mut log, e).map_err(evacsim::Error::from)?;
            log.push(b'\n');
        }
        write_atomic(path, &log)?;
    }
    if run.row.truncated {
        eprintln!("warning: tick cap reached; evacuees still inside counted as perished");
    }
    Ok(())
}

fn cmd_batch(args: BatchArgs) -> Result<(), Failure> {
    let template = args.sim.scenario()?;
    let config = ExperimentConfig {
        occupancies: args.evacuees,
        runs: args.runs,
        seed_base: args.seed,
        algorithms: args.algorithm,
        fire_replay: args.sim.fire_replay(),
        static_timeline: args.sim.reassign_static_timeline,
    };
    config.validate()?;
    if args.workers == 0 {
        return Err(Failure::Invalid("workers must be at least 1".into()));
    }

    let file = File::create(&args.out).map_err(io_context(&args.out))?;
    let mut report = ReportWriter::new(BufWriter::new(file))?;
    let rows = run_experiment_with(&config, &template, args.workers, |row| report.write(row))?;

    let summary = args.summary.unwrap_or_else(|| {
        let mut p = args.out.clone().into_os_string();
        p.push(".summary.csv");
        PathBuf::from(p)
    });
    write_atomic(&summary, summary_text(&rows).as_bytes())?;
    Ok(())
}

fn cmd_oracle_check(args: OracleArgs) -> Result<(), Failure> {
    if args.instances == 0 {
        println!("no instances to check");
        return Ok(());
    }
    let fault = args.inject_fault.map(|FaultArg::DropDecisionCost| MetricFault::DropDecisionCost);
    let report = oracle_check(args.instances, args.seed, fault);
    println!(
        "{} instances, {} unsavable, {} mismatches",
        report.instances,
        report.unsavable,
        report.mismatches.len()
    );
    if report.passed() {
        return Ok(());
    }
    for m in &report.mismatches {
        let instance = serde_json::to_string(m).map_err(evacsim::Error::from)?;
        eprintln!("mismatch (reproduce with --seed {} --instances {}): {instance}", args.seed, m.instance + 1);
    }
    Err(Failure::Mismatch(format!("{} of {} instances disagree with the oracle", report.mismatches.len(), report.instances)))
}

fn cmd_report(args: ReportArgs) -> Result<(), Failure> {
    let text = fs::read_to_string(&args.input).map_err(io_context(&args.input))?;
    let rows = read_report(&text)?;
    let summary = summary_text(&rows);
    match &args.out {
        Some(path) => write_atomic(path, summary.as_bytes()),
        None => std::io::stdout()
            .write_all(summary.as_bytes())
            .map_err(|e| Failure::Invalid(e.to_string())),
    }
}

fn cmd_scenario(args: ScenarioArgs) -> Result<(), Failure> {
    let scenario = populate(&reference_building(), args.evacuees, args.seed)?;
    write_atomic(&args.out, scenario.to_json().as_bytes())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Batch(a) => cmd_batch(a),
        Command::OracleCheck(a) => cmd_oracle_check(a),
        Command::Report(a) => cmd_report(a),
        Command::Scenario(a) => cmd_scenario(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_INVALID)
        }
        Err(Failure::Mismatch(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_MISMATCH)
        }
    }
}
