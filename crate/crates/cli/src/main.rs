//! `aegis`: run scenarios, benchmark the bundled suite, fit ellipsoids and
//! plot traces.

mod exit;
mod plot;

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use aegis_core::assessment::{identify_hazard, HttpTransport, RemoteAssessor, RemoteConfig};
use aegis_core::geometry::io::{load_cloud, save_ellipsoid};
use aegis_core::geometry::{fit_mvee, GeometryError, MveeConfig, DEFAULT_INFLATION_FLOOR};
use aegis_core::sim::report::{method_block, SuiteTable};
use aegis_core::sim::suite::{bundled_suite, method_name, suite_order, SEEDS_PER_SCENARIO, SUITES};
use aegis_core::sim::{run_episode_for, EpisodeResult, Scenario, Trace};
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use exit::CliError;

/// Environment prefix for the remote assessor (`AEGIS_ASSESSOR_URL`,
/// `AEGIS_ASSESSOR_TOKEN`).
const ASSESSOR_ENV: &str = "AEGIS_ASSESSOR";
const THREADS_ENV: &str = "AEGIS_THREADS";

#[derive(Parser)]
#[command(name = "aegis", version, about = "Collision-avoidance safety filter harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run episodes of one or more scenarios and write their traces.
    Run(RunArgs),
    /// Run a scenario suite with the filter on and/or off and print the
    /// CAR/TSR/ETS table.
    Bench(BenchArgs),
    /// Fit the minimum-volume enclosing ellipsoid of a point file.
    FitMvee(FitArgs),
    /// Plot the barrier value of a trace, or its filter latencies.
    TracePlot(PlotArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum Modes {
    On,
    Off,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum TraceFormat {
    Csv,
    Bin,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Assessor {
    Mock,
    Remote,
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long, required = true, num_args = 1..)]
    scenario: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "on")]
    filter: Switch,
    /// Number of seeds per scenario, starting at the scenario's base seed.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    seeds: u64,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: TraceFormat,
    #[arg(long, value_enum, default_value = "mock")]
    assessor: Assessor,
    /// Scene image sent to the remote assessor.
    #[arg(long, required_if_eq("assessor", "remote"))]
    image: Option<PathBuf>,
    /// Also write per-step filter latencies (`seed-<n>.latency`, one
    /// microsecond value per line). These are timing measurements and differ
    /// between runs.
    #[arg(long)]
    record_latency: bool,
}

#[derive(clap::Args)]
struct BenchArgs {
    /// Directory of scenario files; the bundled suite when omitted.
    #[arg(long)]
    suite: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "both")]
    filter: Modes,
    #[arg(long, default_value_t = SEEDS_PER_SCENARIO, value_parser = clap::value_parser!(u64).range(1..))]
    seeds: u64,
    /// Directory for `bench.csv` and its metadata sidecar.
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

#[derive(clap::Args)]
struct FitArgs {
    /// Point file: `x y z` lines, or little-endian f32 triples for `.bin`.
    input: PathBuf,
    /// Ellipsoid record to write.
    output: PathBuf,
    /// Fit degenerate clouds in their own span and raise collapsed semi-axes
    /// to FLOOR meters.
    #[arg(long, value_name = "FLOOR", num_args = 0..=1, default_missing_value = "0.005")]
    inflate: Option<f64>,
    #[arg(long, default_value_t = MveeConfig::default().tolerance)]
    tolerance: f64,
}

#[derive(clap::Args)]
struct PlotArgs {
    trace: PathBuf,
    /// SVG to write; defaults to the trace path with an `.svg` extension.
    output: Option<PathBuf>,
    /// Print a sparkline of h to the terminal instead of writing a file.
    #[arg(long)]
    ascii: bool,
    /// Plot the latency sidecar next to the trace instead of h.
    #[arg(long)]
    latency: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(exit::USAGE)
            } else {
                ExitCode::from(exit::OK)
            };
        }
    };
    let outcome = configure_threads().and_then(|()| match cli.command {
        Command::Run(a) => cmd_run(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::FitMvee(a) => cmd_fit_mvee(&a),
        Command::TracePlot(a) => cmd_trace_plot(&a),
    });
    match outcome {
        Ok(()) => ExitCode::from(exit::OK),
        Err(e) => {
            eprintln!("aegis: {e}");
            e.exit_code()
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        CliError::new(
            exit::USAGE,
            format!("{THREADS_ENV} must be a positive integer, got {raw:?}"),
        )
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::new(exit::INTERNAL, e.to_string()))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

/// Writes the only nondeterministic part of a command's output.
fn write_meta(dir: &Path, command: &str, extra: &str) -> Result<(), CliError> {
    let now = SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default();
    let mut text = format!(
        "command = {command:?}\nversion = {:?}\nunix_time = {}\nthreads = {}\n",
        env!("CARGO_PKG_VERSION"),
        now.as_secs(),
        rayon::current_num_threads()
    );
    text.push_str(extra);
    write_file(&dir.join(format!("{command}.meta")), text.as_bytes())
}

struct Job<'a> {
    scenario: &'a Scenario,
    hazard: String,
    seed: u64,
}

fn hazard_for(scenario: &Scenario, args: &RunArgs) -> Result<String, CliError> {
    match args.assessor {
        Assessor::Mock => Ok(scenario.hazard_name.clone()),
        Assessor::Remote => {
            let image = args
                .image
                .as_ref()
                .expect("clap requires --image with the remote assessor");
            let config = RemoteConfig::from_env(ASSESSOR_ENV)?;
            let assessor = RemoteAssessor::new(config, Box::new(HttpTransport));
            let query = scenario.hazard_query(&image.display().to_string())?;
            Ok(identify_hazard(&query, &assessor)?.object_name)
        }
    }
}

const SUMMARY_HEADER: &str = "scenario,seed,filter,collided,succeeded,steps,interventions,min_h\n";

fn summary_row(out: &mut String, scenario: &str, seed: u64, filter_on: bool, r: &EpisodeResult) {
    let _ = writeln!(
        out,
        "{scenario},{seed},{},{},{},{},{},{:e}",
        if filter_on { "on" } else { "off" },
        r.collided,
        r.succeeded,
        r.steps,
        r.interventions,
        r.min_h
    );
}

fn cmd_run(args: &RunArgs) -> Result<(), CliError> {
    let scenarios: Vec<Scenario> = args
        .scenario
        .iter()
        .map(|p| Scenario::load(p))
        .collect::<Result<_, _>>()?;
    let mut names = BTreeSet::new();
    for sc in &scenarios {
        if !names.insert(sc.name.as_str()) {
            return Err(CliError::new(
                exit::USAGE,
                format!("scenario name {:?} given twice", sc.name),
            ));
        }
    }
    let filter_on = matches!(args.filter, Switch::On);

    // The hazard query does not depend on the seed, so it is asked once per
    // scenario.
    let mut jobs = Vec::new();
    for sc in &scenarios {
        let hazard = hazard_for(sc, args)?;
        jobs.extend((0..args.seeds).map(|i| Job {
            scenario: sc,
            hazard: hazard.clone(),
            seed: sc.seed.wrapping_add(i),
        }));
    }

    let runs = jobs
        .par_iter()
        .map(|j| run_episode_for(j.scenario, &j.hazard, filter_on, j.seed))
        .collect::<Result<Vec<_>, _>>()?;

    let ext = match args.format {
        TraceFormat::Csv => "csv",
        TraceFormat::Bin => "bin",
    };
    let mut summary = String::from(SUMMARY_HEADER);
    for (job, (trace, result, latencies)) in jobs.iter().zip(&runs) {
        let dir = args.out.join(&job.scenario.name);
        create_dir(&dir)?;
        trace.save(&dir.join(format!("seed-{}.{ext}", job.seed)))?;
        if args.record_latency {
            write_file(
                &dir.join(format!("seed-{}.latency", job.seed)),
                latency_text(latencies).as_bytes(),
            )?;
        }
        summary_row(&mut summary, &job.scenario.name, job.seed, filter_on, result);
    }
    create_dir(&args.out)?;
    write_file(&args.out.join("summary.csv"), summary.as_bytes())?;
    let sources: String = args
        .scenario
        .iter()
        .map(|p| format!("scenario = {:?}\n", p.display().to_string()))
        .collect();
    write_meta(&args.out, "run", &sources)?;

    let collided = runs.iter().filter(|r| r.1.collided).count();
    let succeeded = runs.iter().filter(|r| r.1.succeeded).count();
    println!(
        "{} episodes, {} collided, {} succeeded; summary in {}",
        runs.len(),
        collided,
        succeeded,
        args.out.join("summary.csv").display()
    );
    Ok(())
}

fn latency_text(latencies: &[Duration]) -> String {
    latencies
        .iter()
        .map(|d| format!("{:.3}\n", d.as_secs_f64() * 1e6))
        .collect()
}

/// Loads every `.toml` file of a directory, ordered by suite and then name.
fn load_suite_dir(dir: &Path) -> Result<Vec<Scenario>, CliError> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "toml") {
            paths.push(path);
        }
    }
    let mut scenarios: Vec<Scenario> = paths.iter().map(|p| Scenario::load(p)).collect::<Result<_, _>>()?;
    if scenarios.is_empty() {
        return Err(CliError::new(
            exit::SCENARIO_INVALID,
            format!("{}: no scenario files", dir.display()),
        ));
    }
    let rank = |s: &Scenario| SUITES.iter().position(|&x| x == s.suite).unwrap_or(SUITES.len());
    scenarios.sort_by(|a, b| (rank(a), &a.suite, &a.name).cmp(&(rank(b), &b.suite, &b.name)));
    Ok(scenarios)
}

fn cmd_bench(args: &BenchArgs) -> Result<(), CliError> {
    let scenarios = match &args.suite {
        Some(dir) => load_suite_dir(dir)?,
        None => bundled_suite()?,
    };
    let modes: &[bool] = match args.filter {
        Modes::On => &[true],
        Modes::Off => &[false],
        Modes::Both => &[true, false],
    };
    let mut blocks = Vec::with_capacity(modes.len());
    for &on in modes {
        let jobs: Vec<(&Scenario, u64)> = scenarios
            .iter()
            .flat_map(|sc| (0..args.seeds).map(move |i| (sc, sc.seed.wrapping_add(i))))
            .collect();
        let results = jobs
            .par_iter()
            .map(|&(sc, seed)| run_episode_for(sc, &sc.hazard_name, on, seed).map(|(_, r, _)| (sc.suite.clone(), r)))
            .collect::<Result<Vec<_>, _>>()?;
        blocks.push(method_block(method_name(on), &results)?);
    }
    let table = SuiteTable {
        suites: suite_order(&scenarios),
        blocks,
    };
    print!("{}", table.render());
    create_dir(&args.out)?;
    let csv = args.out.join("bench.csv");
    write_file(&csv, table.to_csv().as_bytes())?;
    let source = match &args.suite {
        Some(dir) => format!("suite = {:?}\n", dir.display().to_string()),
        None => "suite = \"bundled\"\n".to_string(),
    };
    write_meta(&args.out, "bench", &format!("{source}seeds = {}\n", args.seeds))?;
    println!("table written to {}", csv.display());
    Ok(())
}

fn cmd_fit_mvee(args: &FitArgs) -> Result<(), CliError> {
    let cloud = load_cloud(&args.input)?;
    let mut config = MveeConfig::default().with_tolerance(args.tolerance);
    if let Some(floor) = args.inflate {
        config = config.with_inflation(floor);
    }
    let e = fit_mvee(&cloud, &config).map_err(|e| {
        let mut err = CliError::from(e.clone());
        if matches!(e, GeometryError::DegenerateInput { .. }) && args.inflate.is_none() {
            err.message.push_str(&format!(
                "\nhint: the points do not span 3-D space; rerun with --inflate (floor {DEFAULT_INFLATION_FLOOR} m) or --inflate FLOOR"
            ));
        }
        err
    })?;
    save_ellipsoid(&args.output, &e)?;
    let c = e.center();
    let a = e.semi_axes();
    println!("points:    {}", cloud.len());
    println!("center:    {:.6} {:.6} {:.6}", c.x, c.y, c.z);
    println!("semi-axes: {:.6} {:.6} {:.6}", a.x, a.y, a.z);
    println!("volume:    {:.6e}", e.volume());
    Ok(())
}

fn cmd_trace_plot(args: &PlotArgs) -> Result<(), CliError> {
    if args.latency {
        return plot_latency(args);
    }
    let trace = Trace::load(&args.trace)?;
    if trace.steps.is_empty() {
        return Err(CliError::new(
            exit::PARSE,
            format!("{}: trace has no steps", args.trace.display()),
        ));
    }
    let min_h = trace.min_h();
    if args.ascii {
        let hs: Vec<f64> = trace.steps.iter().map(|s| s.h).collect();
        println!("{}", plot::sparkline(&hs, 72));
        println!("min h = {min_h:e} over {} steps", trace.steps.len());
        return Ok(());
    }
    let points: Vec<(f64, f64)> = trace.steps.iter().map(|s| (s.t as f64, s.h)).collect();
    let title = format!(
        "{} seed {} filter {}",
        trace.scenario,
        trace.seed,
        if trace.filter_on { "on" } else { "off" }
    );
    let out = args.output.clone().unwrap_or_else(|| args.trace.with_extension("svg"));
    write_file(&out, plot::h_curve_svg(&title, &points).as_bytes())?;
    println!("min h = {min_h:e}; plot written to {}", out.display());
    Ok(())
}

fn plot_latency(args: &PlotArgs) -> Result<(), CliError> {
    let path = args.trace.with_extension("latency");
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let mut micros = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let v: f64 = line
            .trim()
            .parse()
            .map_err(|e| CliError::new(exit::PARSE, format!("{}: line {}: {e}", path.display(), i + 1)))?;
        micros.push(v);
    }
    if micros.is_empty() {
        return Err(CliError::new(
            exit::PARSE,
            format!("{}: no latency samples", path.display()),
        ));
    }
    let mut sorted = micros.clone();
    sorted.sort_by(f64::total_cmp);
    let median = plot::median(&sorted);
    if args.ascii {
        println!("{}", plot::sparkline(&micros, 72));
        println!("median latency = {median:.3} µs over {} steps", micros.len());
        return Ok(());
    }
    let out = args
        .output
        .clone()
        .unwrap_or_else(|| args.trace.with_extension("latency.svg"));
    write_file(&out, plot::latency_svg("filter step latency", &micros, 30).as_bytes())?;
    println!(
        "median latency = {median:.3} µs; histogram written to {}",
        out.display()
    );
    Ok(())
}
