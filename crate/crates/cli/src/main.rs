//! `lleap` command-line driver.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use lleap::bucket_engine::{run_pull, run_push, Trajectory};
use lleap::des_oracle::{run_oracle, OracleConfig};
use lleap::lleap_engine::{run_lleap, RngStream, StreamId};
use lleap::model::{Mode, SimConfig};
use lleap::scenario_io::{builtin_names, resolve, Scenario, SCHEMA_VERSION};
use lleap::uq::{
    bias_level, evaluate_qoi, mc_estimate, mlmc_estimate, screen, write_levels_csv, write_mc_report, write_mlmc_report,
    McConfig, MlmcConfig, QoiSpec, Tolerances,
};
use lleap::Error;

const GIT_REV: &str = env!("LLEAP_GIT_REV");

#[derive(Parser, Debug)]
#[command(
    name = "lleap",
    version,
    about = "Time-bucket and L-leap supply chain simulation with multilevel Monte Carlo"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one scenario and write its trajectory.
    Simulate(SimulateArgs),
    /// Sweep the bucket size against the event-resolving reference.
    Convergence(ConvergenceArgs),
    /// Single-level Monte Carlo estimate of a scenario QoI.
    EstimateMc(EstimateArgs),
    /// Multilevel Monte Carlo estimate of a scenario QoI.
    EstimateMlmc(EstimateArgs),
    /// List the built-in scenarios.
    ListScenarios,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Built-in scenario name or path to a scenario file.
    #[arg(long)]
    scenario: String,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Named QoI of the scenario's [uq] block.
    #[arg(long)]
    qoi: Option<String>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Worker threads; defaults to the available cores.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    workers: Option<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    /// Write every output file under --out and print the summary.
    Csv,
    /// Print the summary only.
    Summary,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// Bucket size in days.
    #[arg(long, value_parser = positive)]
    dt: Option<f64>,
    /// Poisson and binomial buckets instead of deterministic ones.
    #[arg(long)]
    stochastic: bool,
    /// Ensemble size of a stochastic run.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    samples: Option<u64>,
}

#[derive(Args, Debug)]
struct ConvergenceArgs {
    #[command(flatten)]
    common: Common,
    /// Bucket sizes, comma separated.
    #[arg(long, value_delimiter = ',', value_parser = positive, default_value = "32,16,8,4,2,1")]
    ladder: Vec<f64>,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    #[command(flatten)]
    common: Common,
    /// Total tolerance; defaults to the QoI's tolerance.
    #[arg(long, value_parser = positive)]
    tol: Option<f64>,
    /// Confidence level of the statistical error bound.
    #[arg(long, value_parser = probability)]
    confidence: Option<f64>,
    /// Pilot samples (mc) or screening samples per level (mlmc).
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
    samples: Option<u64>,
    /// Overrides the coarsest bucket size of the level ladder.
    #[arg(long, value_parser = positive)]
    dt: Option<f64>,
    /// Level of a single-level run; defaults to the bias-limited level.
    #[arg(long)]
    level: Option<u32>,
}

fn positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{s} must be a positive number"))
    }
}

fn probability(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("{s} must lie strictly between 0 and 1"))
    }
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(Error::Io(e))
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("usage: lleap <simulate|convergence|estimate-mc|estimate-mlmc|list-scenarios> --scenario <NAME|PATH> [OPTIONS]");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            if let Error::DegenerateFit { residuals, .. } = &e {
                let r: Vec<String> = residuals.iter().map(|v| format!("{v}")).collect();
                eprintln!("fit residuals: {}", r.join(","));
            }
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Convergence(a) => convergence(a),
        Command::EstimateMc(a) => estimate(a, Method::Mc),
        Command::EstimateMlmc(a) => estimate(a, Method::Mlmc),
        Command::ListScenarios => {
            for name in builtin_names() {
                let s = resolve(name)?;
                println!("{name}\t{}", s.file.description);
            }
            Ok(())
        }
    }
}

/// Loads the scenario and sets up the thread pool and output directory.
fn prepare(common: &Common) -> Result<Scenario, Failure> {
    let scenario = match resolve(&common.scenario) {
        Ok(s) => s,
        Err(Error::Io(e)) => {
            return Err(Failure::Usage(format!(
                "scenario {} is neither a built-in ({}) nor a readable file: {e}",
                common.scenario,
                builtin_names().join(", ")
            )))
        }
        Err(e) => return Err(e.into()),
    };
    if let Some(k) = common.workers {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(k as usize).build_global();
    }
    if common.format == Format::Csv {
        fs::create_dir_all(&common.out)?;
    }
    Ok(scenario)
}

fn create(dir: &Path, name: &str) -> std::io::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn qoi_for(scenario: &Scenario, name: Option<&str>) -> Result<(String, QoiSpec), Failure> {
    match name {
        Some(n) => Ok((n.to_string(), scenario.qoi(Some(n))?.spec)),
        None => match scenario.qoi(None) {
            Ok(q) => Ok((q.name.clone(), q.spec)),
            Err(_) => Ok(("default".to_string(), scenario.default_qoi())),
        },
    }
}

fn write_manifest(common: &Common, command: &str, extra: &[(&str, String)], seed: u64) -> std::io::Result<()> {
    if common.format != Format::Csv {
        return Ok(());
    }
    let mut out = create(&common.out, "run_manifest.txt")?;
    writeln!(out, "command = {command}")?;
    writeln!(out, "scenario = {}", common.scenario)?;
    writeln!(out, "seed = {seed}")?;
    writeln!(out, "qoi = {}", common.qoi.as_deref().unwrap_or(""))?;
    writeln!(out, "workers = {}", opt(&common.workers))?;
    for (k, v) in extra {
        writeln!(out, "{k} = {v}")?;
    }
    writeln!(out, "schema_version = {SCHEMA_VERSION}")?;
    writeln!(out, "git_revision = {GIT_REV}")?;
    writeln!(out, "version = {}", env!("CARGO_PKG_VERSION"))?;
    out.flush()
}

fn opt<T: std::fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map(|v| v.to_string()).unwrap_or_default()
}

fn simulate(a: SimulateArgs) -> Outcome {
    let scenario = prepare(&a.common)?;
    if a.samples.is_some() && !a.stochastic && !scenario.config.stochastic {
        return Err(Failure::Usage("--samples needs a stochastic run (--stochastic)".into()));
    }
    let seed = a.common.seed.unwrap_or(scenario.config.seed);
    let config = SimConfig {
        dt: a.dt.unwrap_or(scenario.config.dt),
        stochastic: a.stochastic || scenario.config.stochastic,
        seed,
        ..scenario.config.clone()
    };
    config.validate()?;
    let (qoi_name, qoi) = qoi_for(&scenario, a.common.qoi.as_deref())?;
    let run_one = |sample: u64| -> lleap::Result<Trajectory> {
        if config.stochastic {
            let rng = RngStream::new(seed, StreamId::new(0, sample, 0));
            run_lleap(&scenario.network, &config, scenario.policy.as_ref(), scenario.orders.as_ref(), rng)
        } else {
            match config.mode {
                Mode::Push => run_push(&scenario.network, &config, scenario.policy.as_ref()),
                Mode::Pull => run_pull(
                    &scenario.network,
                    &config,
                    scenario.policy.as_ref(),
                    scenario.orders.as_ref().unwrap_or(&Default::default()),
                ),
            }
        }
    };
    let trajectory = run_one(0)?;
    let value = evaluate_qoi(&trajectory, &qoi);
    let ensemble = match a.samples {
        Some(k) => {
            use rayon::prelude::*;
            let values = (0..k)
                .into_par_iter()
                .map(|i| run_one(i).map(|t| evaluate_qoi(&t, &qoi)))
                .collect::<lleap::Result<Vec<f64>>>()?;
            Some(values)
        }
        None => None,
    };

    let mut summary = Vec::new();
    writeln!(summary, "scenario = {}", scenario.name())?;
    writeln!(summary, "mode = {:?}", config.mode)?;
    writeln!(summary, "stochastic = {}", config.stochastic)?;
    writeln!(summary, "dt = {}", config.dt)?;
    writeln!(summary, "horizon = {}", config.horizon)?;
    writeln!(summary, "qoi_name = {qoi_name}")?;
    writeln!(summary, "qoi_part = {}", scenario.network.part_name(qoi.part))?;
    writeln!(summary, "qoi = {value}")?;
    if let Some(values) = &ensemble {
        let (m, v) = lleap::uq::stats::mean_var(values);
        writeln!(summary, "samples = {}", values.len())?;
        writeln!(summary, "ensemble_mean = {m}")?;
        writeln!(summary, "ensemble_variance = {v}")?;
    }
    let last = trajectory.last();
    for (p, name) in scenario.network.part_names().iter().enumerate() {
        writeln!(summary, "final_{name} = {}", last.x[p])?;
    }
    print!("{}", String::from_utf8_lossy(&summary));

    if a.common.format == Format::Csv {
        let dir = &a.common.out;
        let mut t = create(dir, "trajectory.csv")?;
        trajectory.write_csv(&mut t)?;
        t.flush()?;
        create(dir, "summary.txt")?.write_all(&summary)?;
        if let Some(values) = &ensemble {
            let mut e = create(dir, "ensemble.csv")?;
            writeln!(e, "sample,seed,qoi")?;
            for (i, v) in values.iter().enumerate() {
                writeln!(e, "{i},{seed},{v}")?;
            }
            e.flush()?;
        }
        write_manifest(
            &a.common,
            "simulate",
            &[
                ("dt", config.dt.to_string()),
                ("stochastic", config.stochastic.to_string()),
                ("samples", opt(&a.samples)),
            ],
            seed,
        )?;
    }
    Ok(())
}

fn convergence(a: ConvergenceArgs) -> Outcome {
    let scenario = prepare(&a.common)?;
    let config = SimConfig { stochastic: false, ..scenario.config.clone() };
    let (qoi_name, qoi) = qoi_for(&scenario, a.common.qoi.as_deref())?;
    let oracle = run_oracle(
        &scenario.network,
        &config,
        scenario.policy.as_ref(),
        scenario.orders.as_ref(),
        &qoi,
        &OracleConfig::for_qoi(&qoi),
    )?;
    let mut rows = Vec::new();
    for &dt in &a.ladder {
        let cfg = SimConfig { dt, ..config.clone() };
        let start = Instant::now();
        let traj = match cfg.mode {
            Mode::Push => run_push(&scenario.network, &cfg, scenario.policy.as_ref())?,
            Mode::Pull => run_pull(
                &scenario.network,
                &cfg,
                scenario.policy.as_ref(),
                scenario.orders.as_ref().unwrap_or(&Default::default()),
            )?,
        };
        let secs = start.elapsed().as_secs_f64();
        let q = evaluate_qoi(&traj, &qoi);
        rows.push((dt, q, (q - oracle.qoi).abs(), secs));
    }
    println!("qoi = {qoi_name}");
    println!("reference = {}", oracle.qoi);
    println!("reference_dt = {}", oracle.dt());
    println!("richardson = {}", oracle.richardson);
    println!("dt,qoi,abs_error");
    for (dt, q, e, _) in &rows {
        println!("{dt},{q},{e}");
    }
    if a.common.format == Format::Csv {
        let dir = &a.common.out;
        let mut out = create(dir, "convergence.csv")?;
        writeln!(out, "dt,qoi,abs_error,cpu_seconds")?;
        for (dt, q, e, s) in &rows {
            writeln!(out, "{dt},{q},{e},{s}")?;
        }
        out.flush()?;
        let mut l = create(dir, "oracle_ladder.csv")?;
        oracle.write_ladder_csv(&mut l)?;
        l.flush()?;
        let mut s = create(dir, "summary.txt")?;
        writeln!(s, "scenario = {}", scenario.name())?;
        writeln!(s, "qoi_name = {qoi_name}")?;
        writeln!(s, "reference = {}", oracle.qoi)?;
        writeln!(s, "reference_dt = {}", oracle.dt())?;
        writeln!(s, "richardson = {}", oracle.richardson)?;
        s.flush()?;
        let ladder: Vec<String> = a.ladder.iter().map(f64::to_string).collect();
        write_manifest(&a.common, "convergence", &[("ladder", ladder.join(","))], scenario.config.seed)?;
    }
    Ok(())
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Method {
    Mc,
    Mlmc,
}

fn estimate(a: EstimateArgs, method: Method) -> Outcome {
    let scenario = prepare(&a.common)?;
    let uq = scenario
        .uq
        .as_ref()
        .ok_or_else(|| Failure::Usage(format!("scenario {} has no [uq] block", scenario.name())))?;
    let seed = a.common.seed.unwrap_or(scenario.config.seed);
    let named = scenario.qoi(a.common.qoi.as_deref()).map_err(|e| Failure::Usage(e.to_string()))?;
    let mut sampler = scenario.sampler(Some(&named.name), seed)?;
    if let Some(dt) = a.dt {
        sampler.dt0 = dt;
    }
    let tolerances = Tolerances::new(
        a.tol.unwrap_or(named.tol),
        uq.tolerances.split,
        a.confidence.unwrap_or(uq.tolerances.confidence),
    )?;
    let dir = &a.common.out;
    let csv = a.common.format == Format::Csv;
    let mut report = Vec::new();
    writeln!(report, "scenario = {}", scenario.name())?;
    writeln!(report, "qoi_name = {}", named.name)?;
    writeln!(report, "dt0 = {}", sampler.dt0)?;
    writeln!(report, "seed = {seed}")?;
    match method {
        Method::Mlmc => {
            let cfg = MlmcConfig { screening_samples: a.samples.unwrap_or(200), ..MlmcConfig::default() };
            let r = mlmc_estimate(&sampler, &tolerances, &cfg)?;
            write_mlmc_report(&mut report, &r, true)?;
            if csv {
                let mut l = create(dir, "levels.csv")?;
                write_levels_csv(&mut l, &r.levels, true)?;
                l.flush()?;
                let mut s = create(dir, "screening.csv")?;
                write_levels_csv(&mut s, &r.screening, true)?;
                s.flush()?;
            }
        }
        Method::Mc => {
            let cfg = MlmcConfig::default();
            let level = match a.level {
                Some(l) => l,
                None => {
                    let (screening, rates) = screen(&sampler, &cfg)?;
                    if csv {
                        let mut s = create(dir, "screening.csv")?;
                        write_levels_csv(&mut s, &screening, true)?;
                        s.flush()?;
                    }
                    bias_level(&rates, &tolerances, &cfg)
                }
            };
            let r = mc_estimate(
                &sampler,
                level,
                &tolerances,
                &McConfig { pilot: a.samples.unwrap_or(100), sample_cap: None },
            )?;
            write_mc_report(&mut report, &r, &tolerances, true)?;
        }
    }
    print!("{}", String::from_utf8_lossy(&report));
    if csv {
        create(dir, "report.txt")?.write_all(&report)?;
        let command = if method == Method::Mc { "estimate-mc" } else { "estimate-mlmc" };
        write_manifest(
            &a.common,
            command,
            &[
                ("tol", tolerances.tol.to_string()),
                ("confidence", tolerances.confidence.to_string()),
                ("samples", opt(&a.samples)),
                ("dt", opt(&a.dt)),
                ("level", opt(&a.level)),
            ],
            seed,
        )?;
    }
    Ok(())
}
