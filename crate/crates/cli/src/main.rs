use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use aoi_core::analytic;
use aoi_core::optimizer;
use aoi_core::quadrature::Tolerance;
use aoi_core::simulator;
use aoi_core::validation::{self, Level};
use aoi_core::{AoiError, Objective, ServiceDistribution, SimConfig, SystemConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = "aoi", version, about = "Age of information in the M/G/1/1 queue with probabilistic preemption")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form averages and transform moments.
    Analyze(AnalyzeArgs),
    /// Discrete-event simulation.
    Simulate(SimulateArgs),
    /// Averages over a uniform θ grid, written as CSV.
    Sweep(SweepArgs),
    /// Minimize the average AoI or peak AoI over θ.
    Optimize(OptimizeArgs),
    /// Run the analytic and simulation consistency checks.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct SystemArgs {
    /// Arrival rate λ.
    #[arg(long)]
    lambda: f64,
    /// Preemption probability θ in [0, 1].
    #[arg(long)]
    theta: f64,
    /// Service law, e.g. `exp:rate=1` or `lognormal:alpha=0.75,omega=0.75`.
    #[arg(long)]
    dist: ServiceDistribution,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    system: SystemArgs,
    /// Also report raw moments 1..=m of the AoI and peak AoI (m ≤ 3).
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=3))]
    moments: Option<u32>,
    #[arg(long, conflicts_with = "csv")]
    json: bool,
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    system: SystemArgs,
    #[arg(long, default_value_t = 1_000_000)]
    deliveries: u64,
    /// Deliveries discarded before estimates are collected.
    #[arg(long, default_value_t = 1_000)]
    warmup: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    reps: u32,
    /// Write per-delivery records of replication 0 to this CSV file.
    #[arg(long)]
    dump: Option<PathBuf>,
    #[arg(long, conflicts_with = "csv")]
    json: bool,
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    lambda: f64,
    #[arg(long)]
    dist: ServiceDistribution,
    /// Number of equally spaced θ values, endpoints included.
    #[arg(long, default_value_t = 101)]
    grid: usize,
    /// Add simulated columns.
    #[arg(long)]
    with_sim: bool,
    /// Deliveries per simulated grid point.
    #[arg(long, default_value_t = 100_000)]
    deliveries: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output file (stdout when omitted).
    #[arg(short = 'o', long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct OptimizeArgs {
    #[arg(long)]
    lambda: f64,
    #[arg(long)]
    dist: ServiceDistribution,
    #[arg(long, default_value = "aoi")]
    objective: Objective,
}

#[derive(Clone, Copy, ValueEnum)]
enum LevelArg {
    Quick,
    Full,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long, value_enum, default_value = "quick")]
    level: LevelArg,
    /// Multiplies every check tolerance; used to exercise the failure path.
    #[arg(long, hide = true, default_value_t = 1.0)]
    tolerance_scale: f64,
}

enum Failure {
    Usage(String),
    Numeric(String),
    Validation(String),
    Io(io::Error),
}

impl From<AoiError> for Failure {
    fn from(e: AoiError) -> Self {
        match e {
            AoiError::InvalidParameter { .. } | AoiError::Parse { .. } | AoiError::ConfigMismatch(_) => {
                Failure::Usage(e.to_string())
            }
            _ => Failure::Numeric(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e)
    }
}

type CliResult = std::result::Result<(), Failure>;

/// Defaults that the environment may override.
struct Defaults {
    quad_tol: Tolerance,
    batches: usize,
}

impl Defaults {
    fn from_env() -> Result<Self, Failure> {
        let mut d = Defaults {
            quad_tol: Tolerance::default(),
            batches: aoi_core::stats::DEFAULT_BATCHES,
        };
        if let Ok(v) = std::env::var("AOI_QUAD_TOL") {
            let tol: f64 = v
                .parse()
                .ok()
                .filter(|t: &f64| *t > 0.0 && t.is_finite())
                .ok_or_else(|| Failure::Usage(format!("AOI_QUAD_TOL={v:?} is not a positive number")))?;
            d.quad_tol = Tolerance::new(tol, tol);
        }
        if let Ok(v) = std::env::var("AOI_SE_BATCHES") {
            d.batches = v
                .parse()
                .ok()
                .filter(|b: &usize| *b >= 2)
                .ok_or_else(|| Failure::Usage(format!("AOI_SE_BATCHES={v:?} must be an integer ≥ 2")))?;
        }
        Ok(d)
    }

    fn system(&self, lambda: f64, theta: f64, dist: ServiceDistribution) -> Result<SystemConfig, Failure> {
        Ok(SystemConfig::new(lambda, theta, dist)?.with_quad_tol(self.quad_tol))
    }
}

/// Rounds to 12 significant digits.
fn sig12(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

fn round_json(v: Value) -> Value {
    match v {
        Value::Number(n) if !(n.is_i64() || n.is_u64()) => n.as_f64().map(|x| json!(sig12(x))).unwrap_or(Value::Number(n)),
        Value::Array(a) => Value::Array(a.into_iter().map(round_json).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_json(v))).collect()),
        other => other,
    }
}

fn csv_num(x: f64) -> String {
    if x.is_finite() {
        format!("{}", sig12(x))
    } else {
        "NaN".into()
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn record(command: &str, config: Value, results: Value) -> Value {
    round_json(json!({
        "command": command,
        "version": VERSION,
        "config": config,
        "results": results,
    }))
}

fn print_json(v: &Value) -> CliResult {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v).map_err(io::Error::other)?;
    writeln!(out)?;
    Ok(())
}

/// Prints a flattened record as a two-line CSV.
fn print_csv_row(fields: &[(&str, String)]) -> CliResult {
    let mut out = io::stdout().lock();
    let header: Vec<&str> = fields.iter().map(|(k, _)| *k).collect();
    writeln!(out, "{}", header.join(","))?;
    let row: Vec<String> = fields.iter().map(|(_, v)| csv_field(v)).collect();
    writeln!(out, "{}", row.join(","))?;
    Ok(())
}

fn system_echo(cfg: &SystemConfig) -> Value {
    json!({
        "lambda": cfg.lambda(),
        "theta": cfg.theta(),
        "dist": cfg.service().to_string(),
        "quad_tol": cfg.quad_tol(),
    })
}

#[derive(Serialize)]
struct AnalyzeResults {
    avg_aoi: f64,
    avg_paoi: f64,
    mean_interdeparture: f64,
    delivery_prob: f64,
    mean_system_time: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    aoi_moments: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    paoi_moments: Vec<f64>,
}

fn with_quantity<T>(quantity: &str, r: aoi_core::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| match Failure::from(e) {
        Failure::Numeric(m) => Failure::Numeric(format!("{quantity}: {m}")),
        other => other,
    })
}

fn analyze(args: AnalyzeArgs, defaults: &Defaults) -> CliResult {
    let s = &args.system;
    let cfg = defaults.system(s.lambda, s.theta, s.dist)?;
    let mut res = AnalyzeResults {
        avg_aoi: with_quantity("avg_aoi", analytic::average_aoi(&cfg))?,
        avg_paoi: with_quantity("avg_paoi", analytic::average_paoi(&cfg))?,
        mean_interdeparture: with_quantity("mean_interdeparture", analytic::mean_interdeparture(&cfg))?,
        delivery_prob: with_quantity("delivery_prob", analytic::delivery_prob(&cfg))?,
        mean_system_time: with_quantity("mean_system_time", analytic::mean_system_time(&cfg))?,
        aoi_moments: Vec::new(),
        paoi_moments: Vec::new(),
    };
    for m in 1..=args.moments.unwrap_or(0) {
        res.aoi_moments.push(with_quantity(&format!("aoi_moment({m})"), analytic::aoi_moment(&cfg, m))?);
        res.paoi_moments.push(with_quantity(&format!("paoi_moment({m})"), analytic::paoi_moment(&cfg, m))?);
    }
    if args.csv {
        let mut fields = vec![
            ("lambda", csv_num(cfg.lambda())),
            ("theta", csv_num(cfg.theta())),
            ("dist", cfg.service().to_string()),
            ("avg_aoi", csv_num(res.avg_aoi)),
            ("avg_paoi", csv_num(res.avg_paoi)),
            ("mean_interdeparture", csv_num(res.mean_interdeparture)),
            ("delivery_prob", csv_num(res.delivery_prob)),
            ("mean_system_time", csv_num(res.mean_system_time)),
        ];
        const AOI: [&str; 3] = ["aoi_moment_1", "aoi_moment_2", "aoi_moment_3"];
        const PAOI: [&str; 3] = ["paoi_moment_1", "paoi_moment_2", "paoi_moment_3"];
        for (k, (a, p)) in res.aoi_moments.iter().zip(&res.paoi_moments).enumerate() {
            fields.push((AOI[k], csv_num(*a)));
            fields.push((PAOI[k], csv_num(*p)));
        }
        return print_csv_row(&fields);
    }
    let results = serde_json::to_value(&res).map_err(io::Error::other)?;
    print_json(&record("analyze", system_echo(&cfg), results))
}

fn simulate(args: SimulateArgs, defaults: &Defaults) -> CliResult {
    let s = &args.system;
    let system = defaults.system(s.lambda, s.theta, s.dist)?;
    let mut sim = SimConfig::new(system)
        .deliveries(args.deliveries)
        .warmup(args.warmup)
        .seed(args.seed)
        .replications(args.reps);
    sim.batches = defaults.batches;
    sim.validate()?;

    let summary = match &args.dump {
        Some(path) => {
            let (first, traj) = simulator::run_with_trajectory(&sim)?;
            let mut out = BufWriter::new(File::create(path)?);
            simulator::write_records_csv(&traj.records, &mut out)?;
            out.flush()?;
            if args.reps == 1 {
                first
            } else {
                simulator::run(&sim)?
            }
        }
        None => simulator::run(&sim)?,
    };

    let config = json!({
        "lambda": system.lambda(),
        "theta": system.theta(),
        "dist": system.service().to_string(),
        "quad_tol": system.quad_tol(),
        "deliveries": sim.deliveries,
        "warmup": sim.warmup_deliveries,
        "seed": sim.seed,
        "reps": sim.replications,
        "batches": sim.batches,
        "seeds": summary.seeds,
    });
    if args.csv {
        let fields = vec![
            ("lambda", csv_num(system.lambda())),
            ("theta", csv_num(system.theta())),
            ("dist", system.service().to_string()),
            ("seed", sim.seed.to_string()),
            ("reps", sim.replications.to_string()),
            ("avg_aoi", csv_num(summary.avg_aoi)),
            ("se_avg_aoi", csv_num(summary.se_avg_aoi)),
            ("avg_paoi", csv_num(summary.avg_paoi)),
            ("se_avg_paoi", csv_num(summary.se_avg_paoi)),
            ("mean_y", csv_num(summary.mean_y)),
            ("se_mean_y", csv_num(summary.se_mean_y)),
            ("delivery_prob", csv_num(summary.delivery_prob_hat)),
            ("se_delivery_prob", csv_num(summary.se_delivery_prob)),
        ];
        return print_csv_row(&fields);
    }
    let results = json!({
        "avg_aoi": summary.avg_aoi,
        "se_avg_aoi": summary.se_avg_aoi,
        "aoi_second_moment": summary.aoi_second_moment,
        "se_aoi_second_moment": summary.se_aoi_second_moment,
        "avg_paoi": summary.avg_paoi,
        "se_avg_paoi": summary.se_avg_paoi,
        "paoi_second_moment": summary.paoi_second_moment,
        "se_paoi_second_moment": summary.se_paoi_second_moment,
        "mean_y": summary.mean_y,
        "se_mean_y": summary.se_mean_y,
        "mean_t": summary.mean_t,
        "se_mean_t": summary.se_mean_t,
        "delivery_prob": summary.delivery_prob_hat,
        "se_delivery_prob": summary.se_delivery_prob,
        "counts": summary.counts,
        "cycles": summary.cycles,
        "observation_time": summary.observation_time,
    });
    print_json(&record("simulate", config, results))
}

fn sweep(args: SweepArgs, defaults: &Defaults) -> CliResult {
    let base = defaults.system(args.lambda, 0.0, args.dist)?;
    let grid = optimizer::theta_grid(args.grid)?;
    let sim = args.with_sim.then(|| {
        let mut s = SimConfig::new(base).deliveries(args.deliveries).seed(args.seed);
        s.batches = defaults.batches;
        s
    });
    if let Some(s) = &sim {
        s.validate()?;
    }
    let rows = optimizer::sweep_theta_with(&base, &grid, sim.as_ref())?;

    let out: Box<dyn Write> = match &args.output {
        Some(p) => Box::new(File::create(p)?),
        None => Box::new(io::stdout().lock()),
    };
    let mut out = BufWriter::new(out);
    if args.with_sim {
        writeln!(out, "theta,avg_aoi,avg_paoi,sim_avg_aoi,sim_avg_paoi,sim_se_aoi,sim_se_paoi")?;
    } else {
        writeln!(out, "theta,avg_aoi,avg_paoi")?;
    }
    let opt = |x: Option<f64>| csv_num(x.unwrap_or(f64::NAN));
    for r in &rows {
        write!(out, "{},{},{}", csv_num(r.theta), csv_num(r.avg_aoi), csv_num(r.avg_paoi))?;
        if args.with_sim {
            write!(
                out,
                ",{},{},{},{}",
                opt(r.sim_avg_aoi),
                opt(r.sim_avg_paoi),
                opt(r.sim_se_aoi),
                opt(r.sim_se_paoi)
            )?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    if let Some(bad) = rows.iter().find(|r| r.failed()) {
        return Err(Failure::Numeric(format!(
            "theta={}: {}",
            bad.theta,
            bad.error.as_deref().unwrap_or("")
        )));
    }
    Ok(())
}

fn optimize(args: OptimizeArgs, defaults: &Defaults) -> CliResult {
    let base = defaults.system(args.lambda, 0.0, args.dist)?;
    let o = optimizer::optimize_theta_with(&base, args.objective)?;
    let config = json!({
        "lambda": base.lambda(),
        "dist": base.service().to_string(),
        "objective": args.objective.to_string(),
        "quad_tol": base.quad_tol(),
    });
    let results = json!({
        "theta_star": o.theta_star,
        "objective_value": o.objective_value,
        "grid_resolution": o.grid_resolution,
        "refine_tolerance": o.refine_tolerance,
    });
    print_json(&record("optimize", config, results))
}

fn validate(args: ValidateArgs) -> CliResult {
    if args.tolerance_scale.is_nan() || args.tolerance_scale < 0.0 {
        return Err(Failure::Usage("tolerance scale must be non-negative".into()));
    }
    let level = match args.level {
        LevelArg::Quick => Level::Quick,
        LevelArg::Full => Level::Full,
    };
    let checks = validation::run(level, args.tolerance_scale);
    let mut out = io::stdout().lock();
    for c in &checks {
        writeln!(out, "{c}")?;
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    writeln!(out, "{} checks, {} failed", checks.len(), failed)?;
    match checks.iter().find(|c| !c.passed) {
        Some(first) => Err(Failure::Validation(format!("first failure: {first}"))),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = Defaults::from_env().and_then(|d| match cli.command {
        Command::Analyze(a) => analyze(a, &d),
        Command::Simulate(a) => simulate(a, &d),
        Command::Sweep(a) => sweep(a, &d),
        Command::Optimize(a) => optimize(a, &d),
        Command::Validate(a) => validate(a),
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(m)) => {
            eprintln!("aoi: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(m)) => {
            eprintln!("aoi: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Numeric(m)) => {
            eprintln!("aoi: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(Failure::Io(e)) => {
            eprintln!("aoi: {e}");
            ExitCode::from(2)
        }
    }
}
