//! Command-line front end. Exit codes: 0 success, 1 validation failure or
//! invalid prior, 2 parse error, 3 usage or runtime error.

use std::io::{Read, Write};

use clap::{Parser, Subcommand, ValueEnum};

use crate::builtin;
use crate::dsl::{emit_scenario, parse_prior, parse_scenario, PriorFileError};
use crate::engine::{exact_distribution_with, mixture_distribution, EngineError};
use crate::exec::Execution;
use crate::inference::{estimate_em, estimate_ls, InferenceError, ModelMatrix, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::sampler::{parse_jsonl, to_jsonl, uniformize_blanks_with, SampleError, Sampler, SeededGenerator};
use crate::scenario::{Partition, PartitionPrior, Scenario};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "obspart", version, about = "Observer-partition measurement chains")]
struct Cli {
    /// Worker threads; 1 runs sequentially, 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a scenario file (`-` reads standard input).
    Validate { scenario: String },
    /// Exact outcome distribution as TSV.
    Exact {
        scenario: String,
        /// Merged steps, e.g. `I,II`; `none` for the empty partition.
        #[arg(long, conflicts_with = "prior", required_unless_present = "prior")]
        partition: Option<String>,
        #[arg(long)]
        prior: Option<String>,
    },
    /// Seeded rounds as JSON lines.
    Sample {
        scenario: String,
        #[arg(long)]
        prior: String,
        #[arg(long)]
        rounds: u64,
        #[arg(long)]
        seed: u64,
        /// Replace blanks with uniformly drawn outcomes.
        #[arg(long)]
        uniformize: bool,
        /// Include the drawn partition in each record.
        #[arg(long)]
        record_partition: bool,
    },
    /// Repeat rounds until the halting condition holds.
    Halt {
        scenario: String,
        #[arg(long)]
        prior: String,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        max_rounds: u64,
        #[arg(long, default_value_t = 1)]
        trials: u64,
    },
    /// Estimate partition weights from blank-free records.
    Infer {
        scenario: String,
        #[arg(long)]
        data: String,
        /// Semicolon-separated partitions, e.g. `none;I;II;I,II`. Defaults
        /// to every subset of the mergeable steps.
        #[arg(long)]
        partitions: Option<String>,
        #[arg(long, value_enum, default_value_t = Method::Em)]
        method: Method,
    },
    /// Print a built-in scenario.
    Builtin { name: String },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Method {
    Em,
    Ls,
}

struct Failure {
    code: i32,
    message: String,
}

fn fail(code: i32, message: impl Into<String>) -> Failure {
    Failure {
        code,
        message: message.into(),
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::InvalidScenario(_) => fail(EXIT_INVALID, e.to_string()),
            _ => fail(EXIT_RUNTIME, e.to_string()),
        }
    }
}

impl From<SampleError> for Failure {
    fn from(e: SampleError) -> Self {
        match e {
            SampleError::Engine(e) => e.into(),
            e => fail(EXIT_RUNTIME, e.to_string()),
        }
    }
}

impl From<InferenceError> for Failure {
    fn from(e: InferenceError) -> Self {
        match e {
            InferenceError::Engine(e) => e.into(),
            e => fail(EXIT_RUNTIME, e.to_string()),
        }
    }
}

struct Io {
    /// Standard input, read up front when any argument is `-`.
    stdin: Option<String>,
}

impl Io {
    fn read(&mut self, path: &str) -> Result<String, Failure> {
        if path == "-" {
            self.stdin
                .take()
                .ok_or_else(|| fail(EXIT_RUNTIME, "standard input can be read only once"))
        } else {
            std::fs::read_to_string(path).map_err(|e| fail(EXIT_RUNTIME, format!("{path}: {e}")))
        }
    }

    fn scenario(&mut self, path: &str) -> Result<Scenario, Failure> {
        let text = self.read(path)?;
        parse_scenario(&text).map_err(|e| fail(EXIT_PARSE, format!("{}:{e}", display_path(path))))
    }

    fn prior(&mut self, path: &str) -> Result<PartitionPrior, Failure> {
        let text = self.read(path)?;
        parse_prior(&text).map_err(|e| match e {
            PriorFileError::Syntax(e) => fail(EXIT_PARSE, format!("{}:{e}", display_path(path))),
            PriorFileError::Invalid(e) => fail(EXIT_INVALID, format!("{}: {e}", display_path(path))),
        })
    }
}

fn display_path(path: &str) -> &str {
    if path == "-" {
        "<stdin>"
    } else {
        path
    }
}

fn checked_prior(s: &Scenario, prior: PartitionPrior) -> Result<PartitionPrior, Failure> {
    prior
        .check_against(s)
        .map_err(|e| fail(EXIT_INVALID, format!("prior: {e}")))?;
    Ok(prior)
}

/// Runs one command line. `args` includes the program name.
pub fn run<I, T>(args: I, stdin: &mut dyn Read, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args: Vec<std::ffi::OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let informational = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let text = e.render().to_string();
            if informational {
                let _ = stdout.write_all(text.as_bytes());
                return EXIT_OK;
            }
            let _ = stderr.write_all(text.as_bytes());
            return EXIT_RUNTIME;
        }
    };
    let mut io = Io { stdin: None };
    if args.iter().skip(1).any(|a| a == "-") {
        let mut text = String::new();
        if let Err(e) = stdin.read_to_string(&mut text) {
            let _ = writeln!(stderr, "error: <stdin>: {e}");
            return EXIT_RUNTIME;
        }
        io.stdin = Some(text);
    }
    let mut out = Vec::new();
    let mut diag = Vec::new();
    let result = with_threads(cli.threads, |exec| dispatch(cli.command, exec, &mut io, &mut out, &mut diag));
    let _ = stderr.write_all(&diag);
    match result {
        Ok(code) => {
            if let Err(e) = stdout.write_all(&out).and_then(|_| stdout.flush()) {
                let _ = writeln!(stderr, "error: writing output: {e}");
                return EXIT_RUNTIME;
            }
            code
        }
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            f.code
        }
    }
}

#[cfg(feature = "parallel")]
fn with_threads<R: Send>(threads: usize, f: impl FnOnce(Execution) -> Result<R, Failure> + Send) -> Result<R, Failure> {
    match threads {
        0 => f(Execution::Parallel),
        1 => f(Execution::Sequential),
        n => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| fail(EXIT_RUNTIME, e.to_string()))?;
            pool.install(|| f(Execution::Parallel))
        }
    }
}

#[cfg(not(feature = "parallel"))]
fn with_threads<R>(_threads: usize, f: impl FnOnce(Execution) -> Result<R, Failure>) -> Result<R, Failure> {
    f(Execution::Sequential)
}

fn write_out(out: &mut Vec<u8>, text: &str) -> Result<(), Failure> {
    out.extend_from_slice(text.as_bytes());
    Ok(())
}

fn dispatch(
    command: Command,
    exec: Execution,
    io: &mut Io,
    stdout: &mut Vec<u8>,
    stderr: &mut Vec<u8>,
) -> Result<i32, Failure> {
    match command {
        Command::Validate { scenario } => {
            let s = io.scenario(&scenario)?;
            let violations = s.validate();
            if violations.is_empty() {
                write_out(stdout, &format!("ok {}\n", s.name))?;
                return Ok(EXIT_OK);
            }
            for v in &violations {
                let _ = writeln!(stderr, "{v}");
            }
            Ok(EXIT_INVALID)
        }
        Command::Exact {
            scenario,
            partition,
            prior,
        } => {
            let s = io.scenario(&scenario)?;
            let dist = match (partition, prior) {
                (Some(p), _) => exact_distribution_with(&s, &Partition::parse(&p), exec)?,
                (None, Some(path)) => {
                    let prior = checked_prior(&s, io.prior(&path)?)?;
                    mixture_distribution(&s, &prior)?
                }
                (None, None) => return Err(fail(EXIT_RUNTIME, "one of --partition or --prior is required")),
            };
            write_out(stdout, &dist.to_tsv(&s))?;
            Ok(EXIT_OK)
        }
        Command::Sample {
            scenario,
            prior,
            rounds,
            seed,
            uniformize,
            record_partition,
        } => {
            if rounds == 0 {
                return Err(fail(EXIT_RUNTIME, "--rounds must be at least 1"));
            }
            let s = io.scenario(&scenario)?;
            let prior = checked_prior(&s, io.prior(&prior)?)?;
            let g = SeededGenerator::new(seed);
            let sampler = Sampler::new(&s, &prior)?.record_partition(record_partition);
            let mut records = sampler.sample_many(&g, rounds, exec)?;
            if uniformize {
                records = uniformize_blanks_with(&s, &records, &g, exec);
            }
            write_out(stdout, &to_jsonl(&s, &records))?;
            Ok(EXIT_OK)
        }
        Command::Halt {
            scenario,
            prior,
            seed,
            max_rounds,
            trials,
        } => {
            if max_rounds == 0 || trials == 0 {
                return Err(fail(EXIT_RUNTIME, "--max-rounds and --trials must be at least 1"));
            }
            let s = io.scenario(&scenario)?;
            let prior = checked_prior(&s, io.prior(&prior)?)?;
            let sampler = Sampler::new(&s, &prior)?;
            let results = sampler.halt_trials(&SeededGenerator::new(seed), max_rounds, trials, exec)?;
            write_out(stdout, &halt_summary(&results))?;
            Ok(EXIT_OK)
        }
        Command::Infer {
            scenario,
            data,
            partitions,
            method,
        } => {
            let s = io.scenario(&scenario)?;
            let partitions = match partitions {
                Some(list) => list.split(';').map(Partition::parse).collect(),
                None => s.all_partitions(),
            };
            for p in &partitions {
                s.check_partition(p).map_err(|e| fail(EXIT_RUNTIME, e.to_string()))?;
            }
            let text = io.read(&data)?;
            let records = parse_jsonl(&s, &text).map_err(|e| fail(EXIT_RUNTIME, format!("{}: {e}", display_path(&data))))?;
            let m = ModelMatrix::build(&s, &partitions)?;
            let counts = m.counts(&s, &records)?;
            let result = match method {
                Method::Em => estimate_em(&m, &counts, DEFAULT_TOL, DEFAULT_MAX_ITER)?,
                Method::Ls => estimate_ls(&m, &counts, DEFAULT_MAX_ITER)?,
            };
            if !result.identifiable {
                let _ = writeln!(
                    stderr,
                    "warning: model matrix has rank {} for {} partitions; weights are not identifiable",
                    m.rank,
                    m.cols()
                );
            }
            write_out(stdout, &(result.to_json() + "\n"))?;
            Ok(EXIT_OK)
        }
        Command::Builtin { name } => {
            let s = builtin::by_name(&name)
                .ok_or_else(|| fail(EXIT_RUNTIME, format!("unknown built-in `{name}`, expected frw or wigner")))?;
            write_out(stdout, &emit_scenario(&s))?;
            Ok(EXIT_OK)
        }
    }
}

/// `{"trials":T,"halted":H,"meanRounds":x|null,"rounds":[n|null,...]}`.
fn halt_summary(results: &[Option<u64>]) -> String {
    let halted: Vec<u64> = results.iter().flatten().copied().collect();
    let mean = if halted.is_empty() {
        "null".to_string()
    } else {
        let m = halted.iter().map(|&n| n as f64).sum::<f64>() / halted.len() as f64;
        serde_json::to_string(&m).expect("finite")
    };
    let rounds: Vec<String> = results
        .iter()
        .map(|r| r.map_or_else(|| "null".to_string(), |n| n.to_string()))
        .collect();
    format!(
        "{{\"trials\":{},\"halted\":{},\"meanRounds\":{},\"rounds\":[{}]}}\n",
        results.len(),
        halted.len(),
        mean,
        rounds.join(",")
    )
}
