//! `webmp`: simulate page loads over multiple interfaces, run factorial
//! experiments and build workloads.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{ArgGroup, Args, Parser, Subcommand};
use webmp::experiment::{
    build_design, compute_speedups, emit_reports, preset, read_speedups_csv, run_design, write_runs_csv, LevelsFile,
    PRESET_NAMES,
};
use webmp::workload::{derive_dependencies, generate_synthetic, parse_har, SyntheticSpec, DEFAULT_JITTER_MS};
use webmp::{
    run_simulation_observed, ExperimentError, NetworkScenario, PolicyKind, SimConfig, SimError, TraceWriter,
    WorkloadPage,
};

#[derive(Parser)]
#[command(name = "webmp", version, about = "Multi-interface Web page load simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one page load and print per-transfer timings.
    Simulate(SimulateArgs),
    /// Run a full factorial experiment and write CSV reports.
    Experiment(ExperimentArgs),
    /// Convert a HAR capture into a workload page.
    IngestHar(IngestArgs),
    /// Generate a synthetic page of equally sized objects.
    GenWorkload(GenArgs),
    /// Rebuild ECDF and category tables from a speedups file.
    Report(ReportArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Simulator configuration (JSON); defaults apply when omitted.
    #[arg(long, env = "WEBMP_CONFIG")]
    config: Option<PathBuf>,
}

#[derive(Args)]
#[command(group(ArgGroup::new("network").required(true).args(["scenario", "preset"])))]
struct SimulateArgs {
    #[arg(long)]
    page: PathBuf,
    /// Network scenario file (JSON).
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Named testbed scenario.
    #[arg(long, value_parser = PRESET_NAMES)]
    preset: Option<String>,
    /// One of if1, if2, rr, mptcp_if1, mptcp_rnd, eaf, eaf_mptcp.
    #[arg(long, value_parser = parse_policy)]
    policy: PolicyKind,
    #[command(flatten)]
    config: ConfigArgs,
    /// Overrides the configured RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Print every processed event to standard error.
    #[arg(long)]
    trace: bool,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Page files, or directories whose `*.json` files are all used.
    #[arg(long, num_args = 1.., required = true)]
    pages: Vec<PathBuf>,
    /// Factor levels (JSON); the full built-in grid when omitted.
    #[arg(long)]
    levels: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Simulations run concurrently.
    #[arg(long, default_value_t = default_parallelism())]
    parallel: usize,
    /// Global seed from which per-run seeds are derived.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    har: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Timestamp tolerance in milliseconds.
    #[arg(long, default_value_t = DEFAULT_JITTER_MS)]
    epsilon: f64,
}

#[derive(Args)]
struct GenArgs {
    /// Object groups, e.g. `32x100KB` or `16x1KB,8x10KB,4x100KB`.
    #[arg(long)]
    objects: String,
    #[arg(long, default_value_t = 1)]
    hosts: usize,
    #[arg(long)]
    tls: bool,
    /// Shuffle seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Page name; derived from the object groups when omitted.
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    speedups: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn parse_policy(s: &str) -> Result<PolicyKind, String> {
    s.parse().map_err(|e: webmp::ModelError| e.to_string())
}

fn default_parallelism() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Bad input (exit 2) or a failure of the tool itself (exit 1).
enum Failure {
    Invalid(anyhow::Error),
    Internal(anyhow::Error),
}

type Outcome = Result<(), Failure>;

fn invalid(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Invalid(e.into())
}

fn internal(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Internal(e.into())
}

fn sim_failure(e: SimError) -> Failure {
    match e {
        SimError::InvalidInput(_) => invalid(e),
        SimError::Deadlock { .. } => internal(e),
    }
}

fn load_config(args: &ConfigArgs) -> Result<SimConfig, Failure> {
    let config = match &args.config {
        Some(path) => SimConfig::from_json_file(path).map_err(invalid)?,
        None => SimConfig::default(),
    };
    let report = config.validate();
    if !report.is_ok() {
        return Err(invalid(anyhow!("invalid configuration: {report}")));
    }
    Ok(config)
}

fn simulate(args: SimulateArgs) -> Outcome {
    let page = WorkloadPage::from_json_file(&args.page).map_err(invalid)?;
    let scenario = match (&args.scenario, &args.preset) {
        (Some(path), _) => NetworkScenario::from_json_file(path).map_err(invalid)?,
        (None, Some(name)) => preset(name).map_err(invalid)?,
        (None, None) => unreachable!("clap requires one of --scenario and --preset"),
    };
    let mut config = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        config.rng_seed = seed;
    }

    let result = if args.trace {
        let mut trace = TraceWriter(io::stderr().lock());
        run_simulation_observed(&page, &scenario, args.policy, &config, &mut trace)
    } else {
        run_simulation_observed(&page, &scenario, args.policy, &config, &mut ())
    }
    .map_err(sim_failure)?;

    let mut out = BufWriter::new(io::stdout().lock());
    let names: Vec<&str> = scenario.interfaces.iter().map(|i| i.name.as_str()).collect();
    let print = |out: &mut BufWriter<_>| -> io::Result<()> {
        writeln!(
            out,
            "page load time: {:.6} s ({} events)",
            result.page_load_time_s, result.events_processed
        )?;
        writeln!(
            out,
            "{:<24} {:>12} {:>12}  {:<10} {:>5}  reused",
            "transfer", "start_s", "end_s", "interfaces", "conn"
        )?;
        for (id, t) in &result.per_transfer {
            let ifaces: Vec<&str> = t.interfaces.iter().map(|&k| names[k]).collect();
            writeln!(
                out,
                "{:<24} {:>12.6} {:>12.6}  {:<10} {:>5}  {}",
                id,
                t.start_s,
                t.end_s,
                ifaces.join("+"),
                t.connection,
                if t.reused { "yes" } else { "no" }
            )?;
        }
        out.flush()
    };
    print(&mut out).map_err(internal)
}

fn collect_pages(inputs: &[PathBuf]) -> Result<Vec<Arc<WorkloadPage>>, Failure> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(input)
                .with_context(|| format!("reading {}", input.display()))
                .map_err(invalid)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(input.clone());
        }
    }
    if files.is_empty() {
        return Err(invalid(anyhow!("no page files found")));
    }
    files
        .iter()
        .map(|f| WorkloadPage::from_json_file(f).map(Arc::new).map_err(invalid))
        .collect()
}

fn load_levels(path: Option<&Path>) -> Result<LevelsFile, Failure> {
    let Some(path) = path else {
        return Ok(LevelsFile::full_grid());
    };
    let file = File::open(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(invalid)?;
    serde_json::from_reader(io::BufReader::new(file))
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(invalid)
}

fn experiment(args: ExperimentArgs) -> Outcome {
    let started = Instant::now();
    let pages = collect_pages(&args.pages)?;
    let levels = load_levels(args.levels.as_deref())?;
    let config = load_config(&args.config)?;
    if args.parallel == 0 {
        return Err(invalid(anyhow!("--parallel must be at least 1")));
    }
    let runs = build_design(&levels.with_pages(pages)).map_err(invalid)?;
    let records = run_design(&runs, &config, args.parallel, args.seed);

    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))
        .map_err(internal)?;
    let runs_path = args.out.join("runs.csv");
    let file = File::create(&runs_path)
        .with_context(|| format!("writing {}", runs_path.display()))
        .map_err(internal)?;
    write_runs_csv(&records, BufWriter::new(file)).map_err(internal)?;

    let failed = records.iter().filter(|r| !r.status.is_ok()).count();
    match compute_speedups(&records) {
        Ok(speedups) if !speedups.is_empty() => {
            emit_reports(&speedups, &args.out).map_err(internal)?;
        }
        Ok(_) => eprintln!("warning: no successful runs, skipping speedup reports"),
        Err(e @ ExperimentError::MissingBaseline { .. }) => {
            eprintln!("warning: {e}; skipping speedup reports (include policy if1)")
        }
        Err(e) => return Err(internal(e)),
    }
    println!(
        "{} runs ({} failed) in {:.2} s, results in {}",
        records.len(),
        failed,
        started.elapsed().as_secs_f64(),
        args.out.display()
    );
    Ok(())
}

fn ingest_har(args: IngestArgs) -> Outcome {
    let bytes = fs::read(&args.har)
        .with_context(|| format!("reading {}", args.har.display()))
        .map_err(invalid)?;
    let entries = parse_har(&bytes).map_err(invalid)?;
    let page = derive_dependencies(&entries, args.epsilon).map_err(invalid)?;
    page.to_json_file(&args.out).map_err(internal)?;
    println!(
        "{}: {} transfers, {} dependency edges",
        page.name,
        page.transfers.len(),
        page.edge_count()
    );
    Ok(())
}

fn gen_workload(args: GenArgs) -> Outcome {
    let spec = SyntheticSpec {
        groups: SyntheticSpec::parse_groups(&args.objects).map_err(invalid)?,
        host_count: args.hosts,
        tls: args.tls,
    };
    let mut page = generate_synthetic(&spec, args.seed).map_err(invalid)?;
    if let Some(name) = args.name {
        page.name = name;
    }
    page.to_json_file(&args.out).map_err(internal)?;
    println!(
        "{}: {} transfers, {} bytes",
        page.name,
        page.transfers.len(),
        page.total_bytes()
    );
    Ok(())
}

fn report(args: ReportArgs) -> Outcome {
    let file = File::open(&args.speedups)
        .with_context(|| format!("reading {}", args.speedups.display()))
        .map_err(invalid)?;
    let records = read_speedups_csv(io::BufReader::new(file)).map_err(invalid)?;
    let written = emit_reports(&records, &args.out).map_err(|e| match e {
        ExperimentError::NoRecords => invalid(anyhow!("{} contains no speedup records", args.speedups.display())),
        other => internal(other),
    })?;
    println!(
        "{} records, {} files written to {}",
        records.len(),
        written.len(),
        args.out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Experiment(a) => experiment(a),
        Command::IngestHar(a) => ingest_har(a),
        Command::GenWorkload(a) => gen_workload(a),
        Command::Report(a) => report(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Internal(e)) => {
            eprintln!("internal error: {e:#}");
            ExitCode::from(1)
        }
    }
}
