mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use isp_core::experiment::{
    bench, cond_study, median_errors, run_example, write_csv, write_csv_file, BenchConfig, BetaRule, CsvRecord,
    DataScheme, ExampleSpec, ExperimentConfig, Source, TimeProfile,
};
use isp_core::timedisc::Method;

use config::{parse_seeds, FileConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("every row failed")]
    AllFailed,
    #[error(transparent)]
    Core(isp_core::Error),
}

impl From<isp_core::Error> for CliError {
    fn from(e: isp_core::Error) -> Self {
        use isp_core::Error as E;
        match e {
            E::Config(msg) => CliError::Config(msg),
            e @ (E::InvalidGrid(_) | E::InvalidTimeGrid(_) | E::InvalidParameter(_)) => CliError::Config(e.to_string()),
            e => CliError::Core(e),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::AllFailed => 3,
            CliError::Core(_) => 1,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "isp", version, about = "Inverse heat source reconstruction experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Reconstruct f over an (epsilon × seed) sweep and write one CSV row per point.
    Run(RunArgs),
    /// Condition number κ₁(V) of the time-matrix eigenvectors over n × delta.
    Cond(CondArgs),
    /// Time PinT (serial, parallel) against the sparse direct solver.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct ProblemArgs {
    /// Preset 1..5, or `custom` (then --dim/--source/--q/--t-final apply).
    #[arg(long)]
    example: Option<String>,
    #[arg(long)]
    dim: Option<usize>,
    /// smooth | hat | indicator | product2d | sine
    #[arg(long)]
    source: Option<String>,
    /// Time profile: one | mixed
    #[arg(long)]
    q: Option<String>,
    #[arg(long)]
    t_final: Option<f64>,
    /// qbvm | mqbvm | pqbvm
    #[arg(long)]
    method: Option<String>,
    /// Interior points per direction.
    #[arg(long)]
    m: Option<usize>,
    /// Time steps.
    #[arg(long)]
    n: Option<usize>,
    /// Noise levels, comma separated.
    #[arg(long)]
    eps: Option<String>,
    /// Seeds, comma separated or a half-open range `a..b`.
    #[arg(long)]
    seeds: Option<String>,
    /// delta_sqrt | delta | tau_delta_sqrt | delta_two_thirds | explicit:VALUE
    #[arg(long)]
    beta: Option<String>,
    /// Worker threads for the PinT shifted solves.
    #[arg(long)]
    threads: Option<usize>,
    /// Synthetic data scheme: cn (Crank–Nicolson) | be (backward Euler).
    #[arg(long)]
    data: Option<String>,
    /// key=value file; flags win on conflict.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output CSV (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Also emit error relative to ‖f‖.
    #[arg(long)]
    relative: bool,
}

#[derive(Args, Debug)]
struct CondArgs {
    /// Time-step counts, comma separated.
    #[arg(long)]
    n: Option<String>,
    /// Noise levels δ, comma separated.
    #[arg(long)]
    delta: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Skip the sparse direct path above this many unknowns m^dim·(n+1).
    #[arg(long)]
    ceiling: Option<usize>,
    /// PinT timings are the minimum over this many repeats.
    #[arg(long)]
    repeats: Option<usize>,
}

const PROBLEM_KEYS: &[&str] = &[
    "example", "dim", "source", "q", "t-final", "method", "m", "n", "eps", "seeds", "beta", "threads", "data", "out",
];

fn parse_with<T>(s: &str, what: &str) -> Result<T, CliError>
where
    T: std::str::FromStr,
    T::Err: std::fmt::Display,
{
    s.parse::<T>().map_err(|e| {
        let e = e.to_string();
        CliError::Config(format!("{what}: {}", e.trim_start_matches("configuration error: ")))
    })
}

fn required<T>(v: Option<T>, key: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Config(format!("missing --{key}")))
}

fn example_spec(a: &ProblemArgs, file: &FileConfig) -> Result<ExampleSpec, CliError> {
    let example = required(file.pick(a.example.clone(), "example")?, "example")?;
    let dim = file.pick(a.dim, "dim")?;
    let source = file.pick(a.source.clone(), "source")?;
    let q = file.pick(a.q.clone(), "q")?;
    let t_final = file.pick(a.t_final, "t-final")?;
    if example == "custom" {
        let source: Source = parse_with(&required(source, "source")?, "source")?;
        let q: TimeProfile = q.map(|s| parse_with(&s, "q")).transpose()?.unwrap_or(TimeProfile::One);
        Ok(ExampleSpec::custom(dim.unwrap_or(1), t_final.unwrap_or(1.0), source, q)?)
    } else {
        if dim.is_some() || source.is_some() || q.is_some() || t_final.is_some() {
            return Err(CliError::Config("--dim/--source/--q/--t-final only apply to --example custom".into()));
        }
        let id: u32 = parse_with(&example, "example")?;
        Ok(ExampleSpec::preset(id)?)
    }
}

fn experiment(a: &ProblemArgs, file: &FileConfig, default_method: Option<Method>) -> Result<ExperimentConfig, CliError> {
    let example = example_spec(a, file)?;
    let method = match file.pick(a.method.clone(), "method")? {
        Some(s) => parse_with::<Method>(&s, "method")?,
        None => required(default_method, "method")?,
    };
    let m = required(file.pick(a.m, "m")?, "m")?;
    let n = required(file.pick(a.n, "n")?, "n")?;
    let mut cfg = ExperimentConfig::new(example, method, m, n);
    if let Some(eps) = file.pick_list::<f64>(a.eps.as_deref(), "eps")? {
        cfg.epsilons = eps;
    }
    if let Some(s) = a.seeds.as_deref().or_else(|| file.raw("seeds")) {
        cfg.seeds = parse_seeds(s).map_err(|e| CliError::Config(format!("seeds: {e}")))?;
    }
    cfg.beta_rule = file.pick(a.beta.clone(), "beta")?.map(|s| parse_with::<BetaRule>(&s, "beta")).transpose()?;
    cfg.threads = file.pick(a.threads, "threads")?;
    cfg.data = match file.pick(a.data.clone(), "data")?.as_deref() {
        None | Some("cn") => DataScheme::CrankNicolson,
        Some("be") => DataScheme::BackwardEuler,
        Some(other) => return Err(CliError::Config(format!("data: unknown scheme '{other}' (cn | be)"))),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn emit<R: CsvRecord>(rows: &[R], out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(p) => write_csv_file(rows, p)?,
        None => write_csv(rows, std::io::stdout().lock())?,
    }
    Ok(())
}

fn out_path(flag: &Option<PathBuf>, file: &FileConfig) -> Option<PathBuf> {
    flag.clone().or_else(|| file.raw("out").map(PathBuf::from))
}

fn cmd_run(a: &RunArgs) -> Result<(), CliError> {
    let file = FileConfig::load(a.problem.config.as_deref())?;
    let mut keys = PROBLEM_KEYS.to_vec();
    keys.push("relative");
    file.check_keys(&keys)?;
    let mut cfg = experiment(&a.problem, &file, None)?;
    cfg.relative = file.pick_flag(a.relative, "relative")?;
    let rows = run_example(&cfg)?;
    emit(&rows, out_path(&a.problem.out, &file).as_deref())?;
    for (eps, med) in median_errors(&rows) {
        match med {
            Some(e) => eprintln!("eps={eps:e}: median error {e:.3e}"),
            None => eprintln!("eps={eps:e}: no successful rows"),
        }
    }
    if rows.iter().all(|r| !r.ok()) {
        return Err(CliError::AllFailed);
    }
    Ok(())
}

fn cmd_cond(a: &CondArgs) -> Result<(), CliError> {
    let file = FileConfig::load(a.config.as_deref())?;
    file.check_keys(&["n", "delta", "out"])?;
    let ns: Vec<usize> = required(file.pick_list(a.n.as_deref(), "n")?, "n")?;
    let deltas: Vec<f64> = required(file.pick_list(a.delta.as_deref(), "delta")?, "delta")?;
    let rows = cond_study(&ns, &deltas)?;
    emit(&rows, out_path(&a.out, &file).as_deref())?;
    if rows.iter().all(|r| r.status != "ok") {
        return Err(CliError::AllFailed);
    }
    Ok(())
}

fn cmd_bench(a: &BenchArgs) -> Result<(), CliError> {
    let file = FileConfig::load(a.problem.config.as_deref())?;
    let mut keys = PROBLEM_KEYS.to_vec();
    keys.extend(["ceiling", "repeats"]);
    file.check_keys(&keys)?;
    let run = experiment(&a.problem, &file, Some(Method::Pqbvm))?;
    let mut cfg = BenchConfig::new(run);
    if let Some(c) = file.pick(a.ceiling, "ceiling")? {
        cfg.ceiling = c;
    }
    if let Some(r) = file.pick(a.repeats, "repeats")? {
        if r == 0 {
            return Err(CliError::Config("repeats must be positive".into()));
        }
        cfg.repeats = r;
    }
    let rows = bench(&cfg)?;
    emit(&rows, out_path(&a.problem.out, &file).as_deref())?;
    for r in &rows {
        eprintln!("{:<14} {:>12.4e} s  {}", r.path.as_str(), r.seconds, r.status);
    }
    if rows.iter().all(|r| r.status.starts_with("failed")) {
        return Err(CliError::AllFailed);
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Cond(a) => cmd_cond(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("isp: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
