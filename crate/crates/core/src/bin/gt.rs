//! `gt`: run group testing experiments, emit bound curves, or enumerate small
//! instances exactly.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use grouptest::bounds::sum_set_bounds;
use grouptest::codetree::LengthRule;
use grouptest::harness::{
    aggregate_cdf, bound_curves, bounds_csv, bounds_rows, cdf_csv, default_theta_grid, run_experiment_detailed,
    testlog_csv, trials_csv, write_text, BudgetMode, CdfKey, ExperimentConfig, ExperimentOutput, PriorMode,
    ThresholdSpec,
};
use grouptest::priors::sample_dirichlet_priors;
use grouptest::search::{expected_tests_enumeration, GammaRule, ThresholdRule};
use grouptest::{seed, Error, Population, SearchConfig, SearchPlan, Strategy, TruthOracle};

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

const THRESHOLD_KEYS: [&str; 3] = ["theta", "theta-grid", "pe"];

#[derive(Parser, Debug)]
#[command(
    name = "gt",
    version,
    about = "Adaptive group testing with non-identical priors",
    args_override_self = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a Monte Carlo sweep and write CSV results.
    Run(RunArgs),
    /// Emit bound curves for the sweep without simulating.
    Bounds(BoundsArgs),
    /// Exact expected test counts and exhaustive recovery checks on small instances.
    Enumerate(EnumerateArgs),
}

#[derive(Args, Debug, Clone)]
struct ExperimentArgs {
    /// Plain key=value file; keys are long option names. Command-line options win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 500)]
    n: usize,
    #[arg(long, default_value_t = 8.0)]
    mu: f64,
    /// Dirichlet concentration; a comma-separated list sweeps alpha.
    #[arg(long, value_delimiter = ',', default_value = "1.0")]
    alpha: Vec<f64>,
    #[arg(long, group = "threshold")]
    theta: Option<f64>,
    #[arg(long, value_delimiter = ',', group = "threshold")]
    theta_grid: Option<Vec<f64>>,
    /// Derive theta from a target truncation error instead.
    #[arg(long, group = "threshold")]
    pe: Option<f64>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// merged-pruning, explicit-confirm or laminar.
    #[arg(long, default_value = "merged-pruning")]
    strategy: Strategy,
    /// `auto` or a ratio bound above 1.
    #[arg(long, default_value = "auto")]
    gamma: String,
    #[arg(long, default_value_t = 0.5)]
    fullness: f64,
    #[arg(long)]
    huffman: bool,
    /// Read priors from a file (one probability per line) instead of drawing them.
    #[arg(long)]
    priors: Option<PathBuf>,
    #[arg(long, default_value = "fixed")]
    prior_mode: PriorMode,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    /// unlimited, tnec, a test count, or a multiple of the entropy such as 0.5H.
    #[arg(long, default_value = "unlimited")]
    budget: BudgetMode,
    #[arg(long)]
    threads: Option<usize>,
    /// Write each cell's partition as CSV.
    #[arg(long)]
    dump_partition: bool,
    /// Write every pooled test and its outcome.
    #[arg(long)]
    dump_testlog: bool,
    /// Write each cell's search trees as text.
    #[arg(long)]
    dump_trees: bool,
}

#[derive(Args, Debug)]
struct BoundsArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
}

#[derive(Args, Debug)]
struct EnumerateArgs {
    #[arg(long, default_value_t = 12)]
    max_items: usize,
    /// Items per instance; defaults to --max-items.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 2.0)]
    mu: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 0.001)]
    theta: f64,
    #[arg(long, default_value = "auto")]
    gamma: String,
    #[arg(long, default_value_t = 0.5)]
    fullness: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    instances: usize,
    /// Restrict to one strategy.
    #[arg(long)]
    strategy: Option<Strategy>,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl Failure {
    fn runtime(e: Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn config_err(e: impl ToString) -> Failure {
    Failure::Config(e.to_string())
}

fn parse_gamma(s: &str) -> Result<GammaRule, Failure> {
    if s == "auto" {
        return Ok(GammaRule::Auto);
    }
    let g: f64 = s.parse().map_err(|_| config_err(format!("cannot parse gamma {s:?}")))?;
    Ok(GammaRule::Fixed(g))
}

/// Splice `--config` file entries in front of the command-line options so
/// that explicit options take precedence.
fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>, Failure> {
    let mut path = None;
    let mut rest = Vec::with_capacity(args.len());
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy().into_owned();
        if s == "--config" {
            path = Some(it.next().ok_or_else(|| config_err("--config needs a file"))?);
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(OsString::from(p));
        } else {
            rest.push(a);
        }
    }
    let Some(path) = path else {
        return Ok(rest);
    };
    if rest.len() < 2 {
        return Ok(rest);
    }
    let path = PathBuf::from(path);
    let text = std::fs::read_to_string(&path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let explicit_threshold = rest.iter().any(|a| {
        let s = a.to_string_lossy();
        THRESHOLD_KEYS
            .iter()
            .any(|k| s == format!("--{k}") || s.starts_with(&format!("--{k}=")))
    });

    let mut spliced = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| config_err(format!("{}:{}: expected key=value", path.display(), lineno + 1)))?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        if explicit_threshold && THRESHOLD_KEYS.contains(&key.as_str()) {
            continue;
        }
        match value {
            "true" => spliced.push(OsString::from(format!("--{key}"))),
            "false" => {}
            _ => {
                spliced.push(OsString::from(format!("--{key}")));
                spliced.push(OsString::from(value));
            }
        }
    }
    let mut out: Vec<OsString> = rest.drain(..2).collect();
    out.extend(spliced);
    out.extend(rest);
    Ok(out)
}

fn experiment_config(exp: &ExperimentArgs) -> Result<ExperimentConfig, Failure> {
    let threshold = match (&exp.theta, &exp.theta_grid, &exp.pe) {
        (Some(t), _, _) => ThresholdSpec::Grid(vec![*t]),
        (_, Some(g), _) => ThresholdSpec::Grid(g.clone()),
        (_, _, Some(pe)) => ThresholdSpec::TargetError(*pe),
        _ => ThresholdSpec::Grid(default_theta_grid()),
    };
    let priors = match &exp.priors {
        Some(p) => Some(Population::from_file(p).map_err(config_err)?),
        None => None,
    };
    let config = ExperimentConfig {
        n: priors.as_ref().map_or(exp.n, Population::len),
        mu: exp.mu,
        alpha_grid: exp.alpha.clone(),
        threshold,
        master_seed: exp.seed,
        strategy: exp.strategy,
        fullness: exp.fullness,
        gamma: parse_gamma(&exp.gamma)?,
        prior_mode: exp.prior_mode,
        priors,
        lengths: if exp.huffman {
            LengthRule::Huffman
        } else {
            LengthRule::ShannonFano
        },
        ..Default::default()
    };
    Ok(config)
}

fn out_dir(exp: &ExperimentArgs, default: &str) -> Result<PathBuf, Failure> {
    let dir = exp.out.clone().unwrap_or_else(|| PathBuf::from(default));
    std::fs::create_dir_all(&dir).map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn write(dir: &Path, name: &str, text: &str) -> Result<(), Failure> {
    write_text(&dir.join(name), text).map_err(Failure::runtime)
}

fn cdf_tables(output: &ExperimentOutput) -> Result<String, Failure> {
    let mut tables = aggregate_cdf(&output.records, CdfKey::Theta).map_err(Failure::runtime)?;
    tables.extend(aggregate_cdf(&output.records, CdfKey::Alpha).map_err(Failure::runtime)?);
    Ok(cdf_csv(&tables))
}

fn cmd_run(args: &RunArgs) -> Result<(), Failure> {
    let mut config = experiment_config(&args.exp)?;
    config.trials = args.trials;
    config.budget = args.budget;
    config.threads = args.threads;
    config.keep_logs = args.dump_testlog;
    config.validate().map_err(config_err)?;
    let dir = out_dir(&args.exp, "results")?;

    let output = run_experiment_detailed(&config).map_err(Failure::runtime)?;
    let rows = bounds_rows(&output);
    write(&dir, "trials.csv", &trials_csv(&output.records))?;
    write(&dir, "bounds.csv", &bounds_csv(&rows))?;
    write(&dir, "cdf.csv", &cdf_tables(&output)?)?;

    for cell in &output.cells {
        let Some(inst) = &cell.instance else {
            continue;
        };
        if args.dump_partition {
            write(
                &dir,
                &format!("partition_cell{}.csv", cell.index),
                &inst.plan.partition.to_csv(),
            )?;
        }
        if args.dump_trees {
            let text: String = inst.plan.trees.iter().map(|t| t.dump()).collect();
            write(&dir, &format!("trees_cell{}.txt", cell.index), &text)?;
        }
    }
    if args.dump_testlog {
        for cell in &output.cells {
            let logs: Vec<_> = output.logs.iter().filter(|l| l.cell == cell.index).cloned().collect();
            write(&dir, &format!("testlog_cell{}.csv", cell.index), &testlog_csv(&logs))?;
        }
    }

    println!("cell,alpha,theta,success_rate,mean_tests,t_bd,t_nec");
    for r in &rows {
        println!(
            "{},{},{},{:.4},{:.2},{:.2},{:.2}",
            r.cell,
            r.alpha,
            r.theta,
            r.success_rate.unwrap_or(f64::NAN),
            r.empirical_mean.unwrap_or(f64::NAN),
            r.t_bd,
            r.t_nec
        );
    }
    eprintln!("wrote {}", dir.display());
    Ok(())
}

fn cmd_bounds(args: &BoundsArgs) -> Result<(), Failure> {
    let config = experiment_config(&args.exp)?;
    config.validate().map_err(config_err)?;
    let output = bound_curves(&config).map_err(Failure::runtime)?;
    let csv = bounds_csv(&bounds_rows(&output));
    match &args.exp.out {
        Some(_) => {
            let dir = out_dir(&args.exp, ".")?;
            write(&dir, "bounds.csv", &csv)
        }
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn cmd_enumerate(args: &EnumerateArgs) -> Result<(), Failure> {
    let n = args.n.unwrap_or(args.max_items);
    if n == 0 || n > args.max_items {
        return Err(config_err(format!("n must lie in 1..={}, got {n}", args.max_items)));
    }
    if args.instances == 0 {
        return Err(config_err("instances must be at least 1"));
    }
    let search = SearchConfig {
        threshold: ThresholdRule::Theta(args.theta),
        gamma: parse_gamma(&args.gamma)?,
        fullness: args.fullness,
        ..Default::default()
    };
    let strategies: Vec<Strategy> = match args.strategy {
        Some(s) => vec![s],
        None => Strategy::ALL.to_vec(),
    };

    let mut out = String::from("instance,strategy,items,retained,sets,expected_tests,set_bound_sum,exhaustive_ok\n");
    for k in 0..args.instances {
        let pop = sample_dirichlet_priors(n, args.mu, args.alpha, seed::derive(args.seed, &[k as u64]))
            .map_err(config_err)?
            .population;
        let plan = SearchPlan::build(&pop, &search).map_err(config_err)?;
        let bound = sum_set_bounds(&plan).unwrap_or(f64::NAN);
        for &strategy in &strategies {
            let expected = expected_tests_enumeration(&plan, strategy).map_err(Failure::runtime)?;
            let ok = exhaustive_recovery(&plan, n, strategy).map_err(Failure::runtime)?;
            let _ = writeln!(
                out,
                "{k},{strategy},{n},{},{},{expected},{bound},{}",
                plan.retained_items(),
                plan.partition.set_count(),
                ok as u8
            );
        }
    }
    print!("{out}");
    Ok(())
}

/// Whether every truth vector over `n` items is recovered on the retained items.
fn exhaustive_recovery(plan: &SearchPlan, n: usize, strategy: Strategy) -> grouptest::Result<bool> {
    let retained: Vec<bool> = {
        let mut r = vec![false; n];
        for &i in &plan.truncation.kept {
            r[i] = true;
        }
        r
    };
    for mask in 0u64..(1u64 << n) {
        let bits: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
        let expected: Vec<usize> = (0..n).filter(|&i| bits[i] && retained[i]).collect();
        let mut oracle = TruthOracle::from_bits(bits);
        let run = plan.execute(&mut oracle, strategy)?;
        if run.found != expected {
            return Ok(false);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let args = match expand_config(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(Failure::Config(m) | Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Bounds(a) => cmd_bounds(a),
        Command::Enumerate(a) => cmd_enumerate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
