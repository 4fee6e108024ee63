//! `soft`: sample, inspect and validate noisy Clifford+T circuits.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use soft_core::circuit::{compute_stats, parse_circuit, CircuitStats};
use soft_core::noise::apply_noise_model;
use soft_core::oracle::{crosscheck, suite_circuit, validate_random_suite, CrosscheckReport, RandomCircuitSpec};
use soft_core::sampler::{bench_csv, run_batch, throughput_bench, RunStats, SamplerConfig, Sweep};
use soft_core::{CircuitProgram, SimError};

const EXIT_VALIDATION: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_PARSE: u8 = 3;

#[derive(Parser)]
#[command(
    name = "soft",
    version,
    about = "Generalized-stabilizer Monte Carlo sampler for noisy Clifford+T circuits"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample shots and report discard and logical error statistics as JSON.
    Sample(SampleArgs),
    /// Print gate, measurement and T statistics of a circuit.
    Stats(StatsArgs),
    /// Cross-check the simulator against the dense reference.
    Validate(ValidateArgs),
    /// Measure throughput across a batch-size or noise sweep (CSV).
    Bench(BenchArgs),
    /// Generate random Clifford+T programs and cross-check each one.
    Fuzz(FuzzArgs),
}

#[derive(Args, Clone)]
struct RunFlags {
    #[arg(long, default_value_t = 1000)]
    shots: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads (0 = all cores).
    #[arg(long, env = "SOFT_THREADS", default_value_t = 0)]
    threads: usize,
    #[arg(long, default_value_t = 4096)]
    batch_size: usize,
    #[arg(long, default_value_t = soft_core::genstab::DEFAULT_CAPACITY)]
    entry_capacity: usize,
    /// Stop and discard a shot as soon as a detector fires.
    #[arg(long)]
    postselect: bool,
    /// Count overflowing shots instead of rerunning them with more capacity.
    #[arg(long)]
    no_rerun: bool,
}

impl RunFlags {
    fn config(&self) -> SamplerConfig {
        SamplerConfig {
            shots: self.shots,
            batch_size: self.batch_size,
            master_seed: self.seed,
            entry_capacity: self.entry_capacity,
            threads: self.threads,
            postselect: self.postselect,
            rerun_on_overflow: !self.no_rerun,
        }
    }
}

#[derive(Args)]
struct SampleArgs {
    circuit: PathBuf,
    #[command(flatten)]
    run: RunFlags,
    /// Insert uniform depolarizing noise of this strength (circuit must be noiseless).
    #[arg(long)]
    noise: Option<f64>,
    /// Write the JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum StatsFormat {
    Both,
    Text,
    Json,
}

#[derive(Args)]
struct StatsArgs {
    circuit: PathBuf,
    #[arg(long, value_enum, default_value_t = StatsFormat::Both)]
    format: StatsFormat,
}

#[derive(Args, Clone)]
struct RandomFlags {
    #[arg(long, default_value_t = 2)]
    min_qubits: usize,
    #[arg(long, default_value_t = 10)]
    max_qubits: usize,
    #[arg(long, default_value_t = 40)]
    max_gates: usize,
    #[arg(long, default_value_t = 8)]
    max_t: usize,
    /// Depolarizing strength for generated circuits.
    #[arg(long = "random-noise", default_value_t = 0.05)]
    noise: f64,
}

impl RandomFlags {
    fn spec(&self) -> Result<RandomCircuitSpec, String> {
        if self.min_qubits == 0 || self.min_qubits > self.max_qubits || self.max_qubits > 14 {
            return Err("need 1 <= min-qubits <= max-qubits <= 14".into());
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err("random-noise must lie in [0, 1]".into());
        }
        Ok(RandomCircuitSpec {
            min_qubits: self.min_qubits,
            max_qubits: self.max_qubits,
            max_gates: self.max_gates,
            max_t: self.max_t,
            noise: self.noise,
            measurements: true,
            feedback: true,
        })
    }
}

#[derive(Args)]
struct ValidateArgs {
    /// Circuit to cross-check (at most 14 qubits).
    #[arg(required_unless_present = "random_suite", conflicts_with = "random_suite")]
    circuit: Option<PathBuf>,
    /// Cross-check this many generated random circuits instead.
    #[arg(long)]
    random_suite: Option<usize>,
    /// Trajectories per circuit.
    #[arg(long, default_value_t = 10)]
    shots: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    random: RandomFlags,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    circuit: PathBuf,
    /// `batch-size` or `noise`, followed by comma-separated values.
    #[arg(long, num_args = 2, value_names = ["KIND", "VALUES"], required = true)]
    sweep: Vec<String>,
    #[command(flatten)]
    run: RunFlags,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FuzzArgs {
    /// Number of random programs.
    #[arg(long, default_value_t = 100)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Trajectories per program.
    #[arg(long, default_value_t = 3)]
    shots: u64,
    #[command(flatten)]
    random: RandomFlags,
    /// Save every generated program here; failing ones get a `FAIL_` prefix.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

/// A failure carrying its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        Failure::usage(e.to_string())
    }
}

type CmdResult = Result<u8, Failure>;

fn load(path: &Path) -> Result<CircuitProgram, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    parse_circuit(&text).map_err(|e| Failure {
        code: EXIT_PARSE,
        message: format!("{}: {e}", path.display()),
    })
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::usage(format!("{}: {e}", p.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| Failure::usage(format!("stdout: {e}")))
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

fn summary_line(s: &RunStats) -> String {
    format!(
        "shots {} | preserved {} | discard rate {:.4}% | logical errors {} | LER {:.3e} | Bayes-1000 interval [{:.3e}, {:.3e}] | overflow {} | failed {}",
        s.total_shots,
        s.preserved_shots,
        100.0 * s.discard_rate,
        s.logical_error_shots,
        s.logical_error_rate,
        s.bayes_lo,
        s.bayes_hi,
        s.overflow_count,
        s.failed_shots,
    )
}

fn prepare(path: &Path, noise: Option<f64>) -> Result<CircuitProgram, Failure> {
    let prog = load(path)?;
    match noise {
        Some(p) => apply_noise_model(&prog, p).map_err(|e| Failure::usage(e.to_string())),
        None => Ok(prog),
    }
}

fn cmd_sample(a: SampleArgs) -> CmdResult {
    let prog = prepare(&a.circuit, a.noise)?;
    let stats = run_batch(&prog, &a.run.config())?;
    emit(a.out.as_deref(), &to_json(&stats))?;
    if a.out.is_some() {
        println!("{}", summary_line(&stats));
    } else {
        eprintln!("{}", summary_line(&stats));
    }
    Ok(0)
}

fn stats_table(s: &CircuitStats) -> String {
    let cols = [
        ("Total Qubits", s.total_qubits.to_string()),
        ("Total Gates", s.total_gates.to_string()),
        ("Circuit Depth", s.depth.to_string()),
        ("Two-Qubit Gates", s.two_qubit_gates.to_string()),
        ("Measurements", s.measurements.to_string()),
        ("T/T_DAG Count", s.t_count.to_string()),
        ("T Support Size", s.t_support_size.to_string()),
        ("T Depth", s.t_depth.to_string()),
    ];
    let mut out = String::new();
    for (name, value) in cols {
        out.push_str(&format!("{name:<16} {value:>8}\n"));
    }
    out.push_str("(depth counts non-empty TICK-delimited layers; T depth counts layers containing T/T_DAG)\n");
    out
}

fn cmd_stats(a: StatsArgs) -> CmdResult {
    let stats = compute_stats(&load(&a.circuit)?);
    let text = match a.format {
        StatsFormat::Text => stats_table(&stats),
        StatsFormat::Json => to_json(&stats),
        StatsFormat::Both => format!("{}\n{}", stats_table(&stats), to_json(&stats)),
    };
    emit(None, &text)?;
    Ok(0)
}

fn report_exit(report: &CrosscheckReport, out: Option<&Path>) -> CmdResult {
    emit(out, &to_json(report))?;
    if report.passed() {
        Ok(0)
    } else {
        for f in report.failures.iter().take(10) {
            eprintln!("circuit {} shot {} op {}: {}", f.circuit, f.shot, f.step, f.message);
        }
        Ok(EXIT_VALIDATION)
    }
}

fn cmd_validate(a: ValidateArgs) -> CmdResult {
    let report = match (a.random_suite, &a.circuit) {
        (Some(count), _) => {
            let spec = a.random.spec().map_err(Failure::usage)?;
            validate_random_suite(count, a.shots, a.seed, &spec)?
        }
        (None, Some(path)) => crosscheck(&load(path)?, a.shots, a.seed)?,
        (None, None) => return Err(Failure::usage("give a circuit or --random-suite N")),
    };
    report_exit(&report, a.out.as_deref())
}

fn parse_sweep(kind: &str, values: &str) -> Result<Sweep, Failure> {
    let bad = || Failure::usage(format!("invalid sweep values {values:?}"));
    let sweep = match kind {
        "batch-size" => Sweep::BatchSize(
            values
                .split(',')
                .map(|v| v.trim().parse::<usize>().ok().filter(|&b| b >= 1).ok_or_else(bad))
                .collect::<Result<_, _>>()?,
        ),
        "noise" => Sweep::Noise(
            values
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .ok()
                        .filter(|p| (0.0..=1.0).contains(p))
                        .ok_or_else(bad)
                })
                .collect::<Result<_, _>>()?,
        ),
        other => {
            return Err(Failure::usage(format!(
                "unknown sweep {other:?} (use batch-size or noise)"
            )))
        }
    };
    Ok(sweep)
}

fn cmd_bench(a: BenchArgs) -> CmdResult {
    let sweep = parse_sweep(&a.sweep[0], &a.sweep[1])?;
    let prog = load(&a.circuit)?;
    if matches!(sweep, Sweep::Noise(_)) && prog.has_noise() {
        return Err(Failure::usage("noise sweeps need a noiseless circuit"));
    }
    let rows = throughput_bench(&prog, &a.run.config(), &sweep)?;
    emit(a.out.as_deref(), &bench_csv(sweep.parameter(), &rows))?;
    Ok(0)
}

fn cmd_fuzz(a: FuzzArgs) -> CmdResult {
    let spec = a.random.spec().map_err(Failure::usage)?;
    if let Some(dir) = &a.out_dir {
        fs::create_dir_all(dir).map_err(|e| Failure::usage(format!("{}: {e}", dir.display())))?;
    }
    let mut total = CrosscheckReport::default();
    for i in 0..a.count {
        let prog = suite_circuit(&spec, a.seed, i);
        let mut r = crosscheck(&prog, a.shots, a.seed ^ i as u64)?;
        for f in &mut r.failures {
            f.circuit = i;
        }
        if let Some(dir) = &a.out_dir {
            let prefix = if r.passed() { "" } else { "FAIL_" };
            let path = dir.join(format!("{prefix}fuzz_{i:05}.stim"));
            fs::write(&path, prog.to_string()).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
        }
        total = total.merge(r);
    }
    report_exit(&total, None)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Sample(a) => cmd_sample(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Fuzz(a) => cmd_fuzz(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
