//! `streamsim` command line: experiment runs, grace-period sweeps, the
//! synthetic drift scenario, pairwise log evaluation and plotting.
//!
//! Exit codes: 0 ok, 1 plan or usage error, 2 data error.

use std::fs::{self, File};
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand};
use streamsim::metrics::{evaluate_pair, Metric, ReportMeta};
use streamsim::pipeline::{
    emit_outputs, generate_drift_scenario, replot, run_experiment, summary_table, CompletionSpec, ExperimentPlan, LogFormat,
    PipelineError, Protocol, ReadCounter, Technique,
};
use streamsim::stream::{group_traces, read_csv, read_xes, write_csv, CsvSchema, Event, WEEK};

#[derive(Parser)]
#[command(name = "streamsim", version, about = "Online discovery and evaluation of process simulation models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Read a log and report its cases, span and window partition.
    Ingest(IngestArgs),
    /// Run the experiment described by a plan file.
    Run {
        #[arg(long)]
        plan: PathBuf,
    },
    /// Run only the online technique once per grace period of a plan.
    SweepGrace {
        #[arg(long)]
        plan: PathBuf,
    },
    /// Write the synthetic loan scenario with a mid-stream drift.
    GenDrift {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5_000)]
        n_pre: usize,
        #[arg(long, default_value_t = 5_000)]
        n_post: usize,
        /// Directory for loan.csv, manifest.json and plan.toml.
        #[arg(long, default_value = "drift")]
        out: PathBuf,
    },
    /// Print the eight distances between a real and a simulated log.
    Evaluate {
        real: PathBuf,
        sim: PathBuf,
        #[command(flatten)]
        log: LogArgs,
    },
    /// Redraw the plots of a run directory from its CSV files.
    Plot { dir: PathBuf },
}

#[derive(Args)]
struct LogArgs {
    /// Log format; CSV files use the case_id, activity, end_ts, resource
    /// and start_ts columns unless a plan gives another schema.
    #[arg(long, value_parser = parse_format, default_value = "csv")]
    format: LogFormat,
    /// Take format and schema from this plan.
    #[arg(long)]
    plan: Option<PathBuf>,
}

#[derive(Args)]
struct IngestArgs {
    /// Log file; defaults to the plan's input.
    log: Option<PathBuf>,
    #[command(flatten)]
    source: LogArgs,
    #[arg(long, default_value_t = 10)]
    windows: usize,
    /// Activities that end a case (repeatable).
    #[arg(long = "end-activity")]
    end_activities: Vec<String>,
    /// Idle hours after which a case counts as complete.
    #[arg(long)]
    timeout_hours: Option<f64>,
    /// Also write the events as canonical CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_format(s: &str) -> Result<LogFormat, String> {
    match s.to_ascii_lowercase().as_str() {
        "csv" => Ok(LogFormat::Csv),
        "xes" => Ok(LogFormat::Xes),
        _ => Err(format!("unknown format `{s}` (csv or xes)")),
    }
}

fn io_err(path: &Path, e: io::Error) -> PipelineError {
    PipelineError::Io { path: path.display().to_string(), message: e.to_string() }
}

fn load_plan(path: &Path) -> Result<ExperimentPlan, PipelineError> {
    ExperimentPlan::load(path)
}

/// Format and schema from `--plan` when given, else the flags.
fn log_source(args: &LogArgs) -> Result<(LogFormat, CsvSchema, Option<ExperimentPlan>), PipelineError> {
    match &args.plan {
        Some(p) => {
            let plan = load_plan(p)?;
            Ok((plan.format, plan.schema.clone(), Some(plan)))
        }
        None => Ok((args.format, CsvSchema::simulated(), None)),
    }
}

fn read_log(path: &Path, format: LogFormat, schema: &CsvSchema) -> Result<Vec<Event>, PipelineError> {
    let f = File::open(path).map_err(|e| io_err(path, e))?;
    Ok(match format {
        LogFormat::Csv => read_csv(f, schema)?,
        LogFormat::Xes => read_xes(BufReader::new(f))?,
    })
}

fn utc(ts: i64) -> String {
    DateTime::<Utc>::from_timestamp(ts, 0).map_or_else(|| ts.to_string(), |d| d.format("%Y-%m-%d %H:%M:%S").to_string())
}

fn ingest(args: &IngestArgs) -> Result<(), PipelineError> {
    let (format, schema, plan) = log_source(&args.source)?;
    let path = match (&args.log, &plan) {
        (Some(p), _) => p.clone(),
        (None, Some(plan)) => plan.input.clone(),
        (None, None) => return Err(PipelineError::Plan("give a log file or --plan".into())),
    };
    let events = read_log(&path, format, &schema)?;
    let (windows, completion) = match &plan {
        Some(p) if args.end_activities.is_empty() && args.timeout_hours.is_none() => (p.windows, p.completion.clone()),
        _ if args.end_activities.is_empty() && args.timeout_hours.is_none() => (args.windows, CompletionSpec::default()),
        _ => (args.windows, CompletionSpec { end_activities: args.end_activities.clone(), timeout_hours: args.timeout_hours }),
    };
    if windows < 2 {
        return Err(PipelineError::Plan("windows must be at least 2".into()));
    }
    let policy = completion.policy();
    policy.validate().map_err(|e| PipelineError::Plan(e.to_string()))?;
    if let Some(out) = &args.out {
        let f = File::create(out).map_err(|e| io_err(out, e))?;
        write_csv(&events, f)?;
    }
    let traces = group_traces(&events);
    let mut resources: Vec<&str> = events.iter().map(|e| e.resource.as_str()).filter(|r| !r.is_empty()).collect();
    resources.sort_unstable();
    resources.dedup();
    let mut activities: Vec<&str> = events.iter().map(|e| e.activity.as_str()).collect();
    activities.sort_unstable();
    activities.dedup();

    let proto = Protocol::new(events.clone(), windows, policy)?;
    let stdout = io::stdout();
    let mut o = stdout.lock();
    let first = proto.windows()[0].start;
    let last = proto.windows()[windows - 1].end;
    let _ = writeln!(o, "log         {}", path.display());
    let _ = writeln!(o, "events      {}", events.len());
    let _ = writeln!(o, "cases       {}", traces.len());
    let _ = writeln!(o, "resources   {}", resources.len());
    let _ = writeln!(o, "activities  {}", activities.join(", "));
    let _ = writeln!(o, "span        {} to {} UTC", utc(first), utc(last));
    let _ = writeln!(o, "\nwindow,start,end,weeks,events,complete_case_starts");
    for (i, w) in proto.windows().iter().enumerate() {
        let mut reads = ReadCounter::default();
        let n = proto.window(i, &mut reads).events.len();
        let starts = proto.test_log(i, &mut reads).len();
        let _ = writeln!(o, "{},{},{},{},{n},{starts}", i + 1, utc(w.start), utc(w.end), (w.end - w.start) / WEEK);
    }
    Ok(())
}

/// `base/<prefix>-<UTC stamp>`, suffixed when a run already used the stamp.
fn stamped_dir(base: &Path, prefix: &str) -> Result<PathBuf, PipelineError> {
    let stamp = Utc::now().format("%Y%m%dT%H%M%SZ");
    fs::create_dir_all(base).map_err(|e| io_err(base, e))?;
    let mut dir = base.join(format!("{prefix}-{stamp}"));
    let mut n = 2;
    while dir.exists() {
        dir = base.join(format!("{prefix}-{stamp}-{n}"));
        n += 1;
    }
    fs::create_dir(&dir).map_err(|e| io_err(&dir, e))?;
    Ok(dir)
}

fn run(plan_path: &Path, sweep_only: bool) -> Result<(), PipelineError> {
    let mut plan = load_plan(plan_path)?;
    if sweep_only {
        plan.grace_period = None;
        plan.techniques = vec![Technique::Online];
    }
    let events = plan.read_log()?;
    let exp = run_experiment(&plan, events)?;
    let dir = stamped_dir(&plan.output_dir, if sweep_only { "sweep" } else { "run" })?;
    let copy = dir.join("plan.toml");
    fs::copy(plan_path, &copy).map_err(|e| io_err(&copy, e))?;
    let files = emit_outputs(&dir, &exp, plan.write_checkpoints)?;
    if sweep_only {
        print!("{}", summary_table(&exp.sweep));
    } else {
        print!("{}", summary_table(&exp.runs));
    }
    if !exp.sweep.is_empty() && !sweep_only {
        println!("online grace period {} chosen by {}", exp.grace, plan.rank());
    }
    println!("{} files in {}", files.files.len() + 1, dir.display());
    Ok(())
}

fn gen_drift(seed: u64, n_pre: usize, n_post: usize, out: &Path) -> Result<(), PipelineError> {
    let s = generate_drift_scenario(seed, n_pre, n_post)?;
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let log = out.join("loan.csv");
    write_csv(&s.events, File::create(&log).map_err(|e| io_err(&log, e))?)?;
    let manifest = out.join("manifest.json");
    fs::write(&manifest, s.manifest_json()).map_err(|e| io_err(&manifest, e))?;
    let plan = out.join("plan.toml");
    let text = format!(
        "input = \"loan.csv\"\nwindows = 10\nreplications = 5\nseed = {seed}\noutput_dir = \"runs\"\n\n[completion]\nend_activities = [{}]\n",
        s.manifest.end_activities.iter().map(|a| format!("\"{a}\"")).collect::<Vec<_>>().join(", ")
    );
    fs::write(&plan, text).map_err(|e| io_err(&plan, e))?;
    println!("{} events, drift at {} UTC, written to {}", s.events.len(), utc(s.manifest.drift_at), out.display());
    Ok(())
}

fn evaluate(real: &Path, sim: &Path, args: &LogArgs) -> Result<(), PipelineError> {
    let (format, schema, _) = log_source(args)?;
    let (a, b) = (group_traces(&read_log(real, format, &schema)?), group_traces(&read_log(sim, format, &schema)?));
    let report = evaluate_pair(&a, &b, ReportMeta::default());
    println!("metric,value,note");
    for m in Metric::ALL {
        match report.values.iter().find(|(k, _)| *k == m).map(|(_, v)| v) {
            Some(Ok(v)) => println!("{m},{v},"),
            Some(Err(e)) => println!("{m},,{e}"),
            None => println!("{m},,"),
        }
    }
    Ok(())
}

fn dispatch(cmd: Command) -> Result<(), PipelineError> {
    match cmd {
        Command::Ingest(args) => ingest(&args),
        Command::Run { plan } => run(&plan, false),
        Command::SweepGrace { plan } => run(&plan, true),
        Command::GenDrift { seed, n_pre, n_post, out } => gen_drift(seed, n_pre, n_post, &out),
        Command::Evaluate { real, sim, log } => evaluate(&real, &sim, &log),
        Command::Plot { dir } => {
            let files = replot(&dir)?;
            println!("{} plots in {}", files.files.len(), dir.join("plots").display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
