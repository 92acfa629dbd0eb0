//! `mc2`: run campaigns, compare strategies, and inspect preprocessing.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mc2_core::bench::{bench, BenchConfig, Strategy};
use mc2_core::campaign::{campaign, CampaignConfig, OrderMode};
use mc2_core::counting_oracle::OracleConfig;
use mc2_core::input_space::{ByteInput, InputRegion};
use mc2_core::prep::{assign_total_order, bootstrap_paths, OrderConfig};
use mc2_core::search::SplitWeight;
use mc2_core::target_model::{load_program, TargetProgram};
use mc2_core::Error;

const EXIT_FOUND: u8 = 0;
const EXIT_ERROR: u8 = 1;
const EXIT_EXHAUSTED: u8 = 2;
const EXIT_USAGE: u8 = 64;
const EXIT_FILE: u8 = 66;

#[derive(Parser)]
#[command(name = "mc2", version, about = "Directed greybox fuzzing by noisy binary search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one campaign against a program.
    Run(RunArgs),
    /// Compare strategies over a directory of programs and emit CSV.
    Bench(BenchArgs),
    /// Print the learned byte priority.
    Order(PrepArgs),
    /// Print bootstrapped target-reaching paths, one per line.
    Paths(PrepArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum OrderArg {
    Lex,
    Learned,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Proportional,
    Verbatim,
}

#[derive(Args)]
struct Knobs {
    /// Inputs per Monte Carlo batch.
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Oracle failure probability assumed by the weight update.
    #[arg(long, default_value_t = 0.01)]
    p: f64,
    #[arg(long, default_value_t = 8)]
    n_paths: usize,
    /// Total program executions allowed.
    #[arg(long, default_value_t = 1_000_000)]
    budget: u64,
    #[arg(long, env = "MC2_RNG_SEED", default_value_t = 0)]
    rng_seed: u64,
    #[arg(long, value_enum, default_value = "learned")]
    order: OrderArg,
    #[arg(long, value_enum, default_value = "proportional")]
    split_weight: SplitArg,
}

impl Knobs {
    fn config(&self) -> CampaignConfig {
        CampaignConfig {
            k: self.k,
            p: self.p,
            n_paths: self.n_paths,
            budget: self.budget,
            order: match self.order {
                OrderArg::Lex => OrderMode::Lex,
                OrderArg::Learned => OrderMode::Learned,
            },
            split: match self.split_weight {
                SplitArg::Proportional => SplitWeight::Proportional,
                SplitArg::Verbatim => SplitWeight::Verbatim,
            },
            rng_seed: self.rng_seed,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    program: PathBuf,
    /// Comma-separated decimal bytes; all zeros when omitted.
    #[arg(long, value_delimiter = ',')]
    seed_bytes: Option<Vec<u8>>,
    #[command(flatten)]
    knobs: Knobs,
    /// Where to write the JSON report; stdout when omitted.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Directory of program files (`*.json`).
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_delimiter = ',')]
    seed_bytes: Option<Vec<u8>>,
    #[command(flatten)]
    knobs: Knobs,
    #[arg(long, value_delimiter = ',', value_parser = parse_strategy,
          default_value = "mc2,deterministic,majority-vote,blackbox")]
    strategies: Vec<Strategy>,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    /// Where to write the CSV; stdout when omitted.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct PrepArgs {
    #[arg(long)]
    program: PathBuf,
    #[arg(long, value_delimiter = ',')]
    seed_bytes: Option<Vec<u8>>,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 8)]
    n_paths: usize,
    #[arg(long, env = "MC2_RNG_SEED", default_value_t = 0)]
    rng_seed: u64,
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// A failure together with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure { code: EXIT_USAGE, message: message.into() }
    }

    fn file(path: &Path, err: impl std::fmt::Display) -> Self {
        Failure { code: EXIT_FILE, message: format!("{}: {err}", path.display()) }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidParameter(_) => EXIT_USAGE,
            _ => EXIT_ERROR,
        };
        Failure { code, message: e.to_string() }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_FOUND });
        }
    };
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Bench(args) => bench_cmd(args),
        Command::Order(args) => order_cmd(args),
        Command::Paths(args) => paths_cmd(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("mc2: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load(path: &Path) -> Result<TargetProgram, Failure> {
    load_program(path).map_err(|e| Failure::file(path, e))
}

fn seed_for(program: &TargetProgram, bytes: Option<Vec<u8>>) -> Result<ByteInput, Failure> {
    let d = program.input_length();
    match bytes {
        None => Ok(ByteInput(vec![0; d])),
        Some(b) if b.len() == d => Ok(ByteInput(b)),
        Some(b) => Err(Failure::usage(format!("--seed-bytes has {} bytes, program takes {d}", b.len()))),
    }
}

fn check_knobs(config: &CampaignConfig) -> Result<(), Failure> {
    OracleConfig { k: config.k, p: config.p }.validate()?;
    if config.n_paths == 0 {
        return Err(Failure::usage("--n-paths must be at least 1"));
    }
    Ok(())
}

fn emit(report: Option<&Path>, text: &str) -> Result<(), Failure> {
    match report {
        Some(path) => fs::write(path, text).map_err(|e| Failure::file(path, e)),
        None => {
            io::stdout().write_all(text.as_bytes()).map_err(|e| Failure { code: EXIT_ERROR, message: e.to_string() })
        }
    }
}

fn run(args: RunArgs) -> Result<u8, Failure> {
    let config = args.knobs.config();
    check_knobs(&config)?;
    let program = load(&args.program)?;
    let seed = seed_for(&program, args.seed_bytes)?;
    let report = campaign(&program, &seed, &config)?;
    let mut json = serde_json::to_string_pretty(&report).map_err(Error::from)?;
    json.push('\n');
    emit(args.report.as_deref(), &json)?;
    Ok(if report.success { EXIT_FOUND } else { EXIT_EXHAUSTED })
}

fn bench_cmd(args: BenchArgs) -> Result<u8, Failure> {
    let config = args.knobs.config();
    check_knobs(&config)?;
    if args.trials == 0 {
        return Err(Failure::usage("--trials must be at least 1"));
    }
    let mut files: Vec<PathBuf> = fs::read_dir(&args.corpus)
        .map_err(|e| Failure::file(&args.corpus, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Failure::file(&args.corpus, "no *.json program files"));
    }
    let mut programs = Vec::with_capacity(files.len());
    for path in &files {
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        programs.push((name, load(path)?));
    }

    let cfg = BenchConfig {
        campaign: config,
        strategies: args.strategies,
        trials: args.trials,
        seed: args.seed_bytes.map(ByteInput),
        ..BenchConfig::default()
    };
    let rows = bench(&programs, &cfg)?;
    let mut out = csv::Writer::from_writer(Vec::new());
    for row in &rows {
        out.serialize(row).map_err(|e| Failure { code: EXIT_ERROR, message: e.to_string() })?;
    }
    let bytes = out.into_inner().map_err(|e| Failure { code: EXIT_ERROR, message: e.to_string() })?;
    emit(args.report.as_deref(), &String::from_utf8_lossy(&bytes))?;
    Ok(EXIT_FOUND)
}

fn order_cmd(args: PrepArgs) -> Result<u8, Failure> {
    let program = load(&args.program)?;
    let seed = seed_for(&program, args.seed_bytes.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.rng_seed);
    let paths = prep_paths(&program, &seed, &args, &mut rng)?;
    let config = OrderConfig { k: args.k, ..OrderConfig::default() };
    let order = assign_total_order(
        &program,
        &paths,
        &InputRegion::full(program.input_length()),
        Some(&seed),
        config,
        &mut rng,
    )?;
    emit(None, &format!("{order}\n"))?;
    Ok(EXIT_FOUND)
}

fn paths_cmd(args: PrepArgs) -> Result<u8, Failure> {
    let program = load(&args.program)?;
    let seed = seed_for(&program, args.seed_bytes.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.rng_seed);
    let mut text = String::new();
    for path in prep_paths(&program, &seed, &args, &mut rng)? {
        text.push_str(&path.label(&program));
        text.push('\n');
    }
    emit(None, &text)?;
    Ok(EXIT_FOUND)
}

/// Bootstrapped paths; empty when none turned up or none were asked for.
fn prep_paths(
    program: &TargetProgram,
    seed: &ByteInput,
    args: &PrepArgs,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<mc2_core::mc_execution::PathDirectives>, Failure> {
    if args.k == 0 {
        return Err(Failure::usage("--k must be at least 1"));
    }
    if args.n_paths == 0 {
        return Ok(Vec::new());
    }
    match bootstrap_paths(program, seed, args.n_paths, rng) {
        Ok(paths) => Ok(paths),
        Err(Error::NoPathsFound { attempts }) => {
            eprintln!("mc2: no target-reaching path after {attempts} attempts");
            Ok(Vec::new())
        }
        Err(e) => Err(e.into()),
    }
}
