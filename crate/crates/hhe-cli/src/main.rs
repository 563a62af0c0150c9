//! `hhe`: asymptotics and simulation of SIR epidemics in populations
//! partitioned into equal-sized households.
//!
//! Four subcommands cover the pipeline: `asymptotics` evaluates one
//! parameter cell in the many-households limit, `sweep` evaluates a grid and
//! reports monotonicity, `simulate` runs a seeded batch of finite-population
//! epidemics and estimates outbreak statistics, and `verify` replays the
//! built-in check suite. Summaries are JSON, tabular output is CSV, and
//! every command is deterministic given its flags.

use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use hhe_core::asymptotics::{self, write_sweep_csv};
use hhe_core::contact::parse_model_spec;
use hhe_core::simulator::{run_batch, write_runs_csv};
use hhe_core::stats::{classify_and_estimate, ks_statistic, major_fractions};
use hhe_core::verify::{all_passed, is_known_block, run_verify, VerifyOptions, BLOCKS};
use hhe_core::{
    ContactModel, Error as CoreError, GlobalMixing, LocalMixing, MajorCutoff, MixingLaw,
    PopulationSpec,
};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads(cli.threads)?;
    match cli.command {
        Command::Asymptotics(cmd) => cmd_asymptotics(cmd),
        Command::Sweep(cmd) => cmd_sweep(cmd),
        Command::Simulate(cmd) => cmd_simulate(cmd),
        Command::Verify(cmd) => cmd_verify(cmd),
    }
}

#[derive(Debug)]
enum CliError {
    /// Bad flags, unreadable files, or invalid model/run configuration.
    Config(String),
    Core(CoreError),
    /// At least one verification check failed; the report was already printed.
    VerifyFailed,
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(CoreError::NumericInstability(_)) => 3,
            CliError::VerifyFailed => 4,
            _ => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => f.write_str(msg),
            CliError::Core(e) => e.fmt(f),
            CliError::VerifyFailed => f.write_str("verification checks failed"),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError::Core(e)
    }
}

/// Asymptotic analysis and finite-population simulation of SIR epidemics in
/// populations of equal-sized households.
#[derive(Parser)]
#[command(name = "hhe", version, about)]
struct Cli {
    /// Worker threads for parallel batches and sweeps; falls back to the
    /// HHE_THREADS environment variable, then to all cores.
    #[arg(long, global = true, value_name = "COUNT")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Outbreak probability, final size, and variance in the many-households limit.
    Asymptotics(AsymptoticsCmd),
    /// Asymptotic quantities over an (h, p) grid: CSV plus a monotonicity report.
    Sweep(SweepCmd),
    /// Seeded batch of finite-population epidemics with outbreak statistics.
    Simulate(SimulateCmd),
    /// Built-in checks against recorded values, oracles, and Monte Carlo.
    Verify(VerifyCmd),
}

/// Contact model selection, either from family-specific flags or a JSON file.
#[derive(Args)]
struct ModelArgs {
    /// Model family: constant | poisson | binomial | mixed.
    #[arg(long, value_name = "FAMILY")]
    model: Option<String>,
    /// JSON model description; an alternative to --model that also covers
    /// joint tables and an optional top-level swap probability.
    #[arg(long, value_name = "PATH", conflicts_with = "model")]
    model_file: Option<PathBuf>,
    /// Global contacts per infective (constant).
    #[arg(long, value_name = "COUNT")]
    g: Option<u32>,
    /// Local contacts per infective (constant).
    #[arg(long, value_name = "COUNT")]
    l: Option<u32>,
    /// Mean global contacts (poisson).
    #[arg(long, value_name = "MEAN")]
    lambda_g: Option<f64>,
    /// Mean local contacts (poisson).
    #[arg(long, value_name = "MEAN")]
    lambda_l: Option<f64>,
    /// Global trial count (binomial).
    #[arg(long, value_name = "N")]
    n_g: Option<u32>,
    /// Global success probability (binomial).
    #[arg(long, value_name = "PROB")]
    q_g: Option<f64>,
    /// Local trial count (binomial).
    #[arg(long, value_name = "N")]
    n_l: Option<u32>,
    /// Local success probability (binomial).
    #[arg(long, value_name = "PROB")]
    q_l: Option<f64>,
    /// Global rate multiplier (mixed).
    #[arg(long, value_name = "RATE")]
    beta_g: Option<f64>,
    /// Local rate multiplier (mixed).
    #[arg(long, value_name = "RATE")]
    beta_l: Option<f64>,
    /// Mixing law for the shared rate (mixed):
    /// gamma:SHAPE:RATE | exp:RATE | point:VALUE.
    #[arg(long, value_name = "LAW")]
    mixing: Option<String>,
}

impl ModelArgs {
    /// Returns the validated model plus the swap probability from the model
    /// file, if one was given there.
    fn build(&self) -> Result<(ContactModel, Option<f64>), CliError> {
        if let Some(path) = &self.model_file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            return Ok(parse_model_spec(&text)?);
        }
        let family = self
            .model
            .as_deref()
            .ok_or_else(|| CliError::Config("--model or --model-file is required".into()))?;
        let model = match family {
            "constant" => ContactModel::Constant { g: req(self.g, "--g")?, l: req(self.l, "--l")? },
            "poisson" => ContactModel::IndependentPoisson {
                lambda_g: req(self.lambda_g, "--lambda-g")?,
                lambda_l: req(self.lambda_l, "--lambda-l")?,
            },
            "binomial" => ContactModel::IndependentBinomial {
                n_g: req(self.n_g, "--n-g")?,
                q_g: req(self.q_g, "--q-g")?,
                n_l: req(self.n_l, "--n-l")?,
                q_l: req(self.q_l, "--q-l")?,
            },
            "mixed" => {
                let law = self.mixing.as_deref().ok_or_else(|| {
                    CliError::Config("--mixing is required for --model mixed".into())
                })?;
                ContactModel::MixedPoisson {
                    beta_g: req(self.beta_g, "--beta-g")?,
                    beta_l: req(self.beta_l, "--beta-l")?,
                    mixing: parse_mixing(law)?,
                }
            }
            other => {
                return Err(CliError::Config(format!(
                    "unknown model family {other:?}; expected constant, poisson, binomial, or mixed"
                )))
            }
        };
        model.validate()?;
        Ok((model, None))
    }
}

fn req<T: Copy>(value: Option<T>, flag: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::Config(format!("{flag} is required for this model family")))
}

fn parse_mixing(s: &str) -> Result<MixingLaw, CliError> {
    let num = |t: &str| {
        t.parse::<f64>()
            .map_err(|_| CliError::Config(format!("bad number {t:?} in --mixing {s:?}")))
    };
    match s.split(':').collect::<Vec<_>>().as_slice() {
        ["gamma", shape, rate] => Ok(MixingLaw::Gamma { shape: num(shape)?, rate: num(rate)? }),
        ["exp", rate] => Ok(MixingLaw::Exponential { rate: num(rate)? }),
        ["point", value] => Ok(MixingLaw::PointMass { value: num(value)? }),
        _ => Err(CliError::Config(format!(
            "bad --mixing {s:?}; expected gamma:SHAPE:RATE, exp:RATE, or point:VALUE"
        ))),
    }
}

fn parse_local_mode(s: &str) -> Result<LocalMixing, String> {
    match s {
        "with-replacement" => Ok(LocalMixing::WithReplacement),
        "without-replacement" => Ok(LocalMixing::WithoutReplacement),
        _ => Err(format!("expected with-replacement or without-replacement, got {s:?}")),
    }
}

fn parse_global_mode(s: &str) -> Result<GlobalMixing, String> {
    match s {
        "with-replacement" => Ok(GlobalMixing::WithReplacement),
        "without-replacement" => Ok(GlobalMixing::WithoutReplacement),
        _ => Err(format!("expected with-replacement or without-replacement, got {s:?}")),
    }
}

fn parse_cutoff(s: &str) -> Result<MajorCutoff, CliError> {
    let cutoff = match s.split_once(':') {
        Some(("frac", x)) => {
            let x = x
                .parse::<f64>()
                .map_err(|_| CliError::Config(format!("bad fraction in --cutoff {s:?}")))?;
            MajorCutoff::Fraction(x)
        }
        Some(("households", "log")) => MajorCutoff::Households,
        _ => {
            return Err(CliError::Config(format!(
                "bad --cutoff {s:?}; expected frac:<x> or households:log"
            )))
        }
    };
    cutoff.validate()?;
    Ok(cutoff)
}

/// Household sizes: one value, a comma list (2,3,4), or a range (2..6).
fn parse_h_list(s: &str) -> Result<Vec<u32>, CliError> {
    if let Some((lo, hi)) = s.split_once("..") {
        return match (lo.trim().parse::<u32>(), hi.trim().parse::<u32>()) {
            (Ok(lo), Ok(hi)) if lo <= hi => Ok((lo..=hi).collect()),
            _ => Err(CliError::Config(format!("bad household range {s:?}; expected LO..HI"))),
        };
    }
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<u32>()
                .map_err(|_| CliError::Config(format!("bad household size {t:?}")))
        })
        .collect()
}

/// Swap probabilities: one value, a comma list, or START:STEP:END (END
/// included when it sits on the step grid).
fn parse_p_grid(s: &str) -> Result<Vec<f64>, CliError> {
    let num = |t: &str| {
        t.trim()
            .parse::<f64>()
            .map_err(|_| CliError::Config(format!("bad probability {t:?} in {s:?}")))
    };
    if let [start, step, end] = s.split(':').collect::<Vec<_>>().as_slice() {
        let (start, step, end) = (num(start)?, num(step)?, num(end)?);
        if ![start, step, end].iter().all(|v| v.is_finite()) || step <= 0.0 || end < start {
            return Err(CliError::Config(format!(
                "bad grid {s:?}; need finite bounds, STEP > 0, and END >= START"
            )));
        }
        let count = ((end - start) / step + 1e-9).floor() as usize;
        return Ok((0..=count)
            .map(|i| {
                let v = step.mul_add(i as f64, start);
                // Snap accumulated rounding so END comes out exact.
                if (v - end).abs() < step * 1e-6 {
                    end
                } else {
                    v
                }
            })
            .collect());
    }
    s.split(',').map(num).collect()
}

/// When set (flag or HHE_THREADS), pins the global worker pool size.
fn configure_threads(flag: Option<usize>) -> Result<(), CliError> {
    let threads = match flag {
        Some(t) => Some(t),
        None => match std::env::var("HHE_THREADS") {
            Ok(v) => Some(v.parse::<usize>().map_err(|_| {
                CliError::Config(format!("HHE_THREADS must be a positive integer, got {v:?}"))
            })?),
            Err(_) => None,
        },
    };
    let Some(threads) = threads else { return Ok(()) };
    if threads == 0 {
        return Err(CliError::Config("--threads must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("reports serialize");
    match out {
        Some(path) => write_file(path, |w| writeln!(w, "{text}")),
        None => stdout_or_exit(|w| writeln!(w, "{text}")),
    }
}

/// Writes to stdout, exiting quietly if the read end has gone away (the
/// normal fate of a filter piped into `head`).
fn stdout_or_exit(
    body: impl FnOnce(&mut io::StdoutLock) -> io::Result<()>,
) -> Result<(), CliError> {
    let mut w = io::stdout().lock();
    match body(&mut w).and_then(|()| w.flush()) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => std::process::exit(0),
        Err(e) => Err(CliError::Config(format!("stdout: {e}"))),
    }
}

fn write_file(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>,
) -> Result<(), CliError> {
    let file =
        File::create(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    body(&mut w)
        .and_then(|()| w.flush())
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

#[derive(Args)]
struct AsymptoticsCmd {
    #[command(flatten)]
    model: ModelArgs,
    /// Household size.
    #[arg(long)]
    h: u32,
    /// Probability that each local contact is redirected to a uniformly
    /// chosen global target [default: 0, or the model file's swap_p].
    #[arg(long, visible_alias = "swap-p")]
    p: Option<f64>,
    /// Number of initial infectives.
    #[arg(long, default_value_t = 1)]
    m: u32,
    /// Local contact targeting: with-replacement | without-replacement.
    #[arg(long, default_value = "with-replacement", value_parser = parse_local_mode)]
    local_mode: LocalMixing,
    /// Write the summary JSON here instead of stdout.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

fn cmd_asymptotics(cmd: AsymptoticsCmd) -> Result<(), CliError> {
    let (model, file_swap) = cmd.model.build()?;
    let p = cmd.p.or(file_swap).unwrap_or(0.0);
    let summary = asymptotics::summary(&model, cmd.h, p, cmd.m, cmd.local_mode)?;
    emit_json(cmd.out.as_deref(), &summary)
}

#[derive(Args)]
struct SweepCmd {
    #[command(flatten)]
    model: ModelArgs,
    /// Household sizes: one value, a comma list (2,3,4), or a range (2..6).
    #[arg(long, value_name = "LIST")]
    h: String,
    /// Swap probabilities: one value, a comma list, or START:STEP:END.
    #[arg(long, visible_alias = "swap-p", value_name = "GRID", default_value = "0")]
    p: String,
    /// Number of initial infectives.
    #[arg(long, default_value_t = 1)]
    m: u32,
    /// Local contact targeting: with-replacement | without-replacement.
    #[arg(long, default_value = "with-replacement", value_parser = parse_local_mode)]
    local_mode: LocalMixing,
    /// Write the grid CSV here; the monotonicity report always goes to stdout.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

fn cmd_sweep(cmd: SweepCmd) -> Result<(), CliError> {
    let (model, _) = cmd.model.build()?;
    let hs = parse_h_list(&cmd.h)?;
    let ps = parse_p_grid(&cmd.p)?;
    let (rows, report) = asymptotics::sweep(&model, &hs, &ps, cmd.m, cmd.local_mode)?;
    match &cmd.out {
        Some(path) => write_file(path, |w| write_sweep_csv(w, &rows))?,
        None => stdout_or_exit(|w| write_sweep_csv(w, &rows))?,
    }
    emit_json(None, &report)
}

#[derive(Args)]
struct SimulateCmd {
    #[command(flatten)]
    model: ModelArgs,
    /// Household size.
    #[arg(long)]
    h: u32,
    /// Probability that each local contact is redirected to a uniformly
    /// chosen global target [default: 0, or the model file's swap_p].
    #[arg(long, visible_alias = "swap-p")]
    p: Option<f64>,
    /// Number of initial infectives.
    #[arg(long, default_value_t = 1)]
    m: u32,
    /// Number of households.
    #[arg(long, visible_alias = "n")]
    households: u32,
    /// Number of independent runs.
    #[arg(long)]
    runs: u64,
    /// Base seed; run i draws from an independent stream derived from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Major-outbreak rule: frac:<x> (fraction infected exceeds x) or
    /// households:log (households hit reach floor(ln n)).
    #[arg(long, default_value = "frac:0.2")]
    cutoff: String,
    /// Local contact targeting: with-replacement | without-replacement.
    #[arg(long, default_value = "with-replacement", value_parser = parse_local_mode)]
    local_mode: LocalMixing,
    /// Global contact targeting: with-replacement | without-replacement.
    #[arg(long, default_value = "with-replacement", value_parser = parse_global_mode)]
    global_mode: GlobalMixing,
    /// Write per-run results (run,Z,V,global_contacts CSV) here.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Also report the distance between major-run final-size fractions and
    /// the asymptotic normal law (needs a supercritical model and at least
    /// one major run).
    #[arg(long)]
    ks: bool,
}

fn cmd_simulate(cmd: SimulateCmd) -> Result<(), CliError> {
    let (model, file_swap) = cmd.model.build()?;
    let p = cmd.p.or(file_swap).unwrap_or(0.0);
    let cutoff = parse_cutoff(&cmd.cutoff)?;
    let spec = PopulationSpec {
        model,
        n: cmd.households,
        h: cmd.h,
        p,
        m: cmd.m,
        local_mode: cmd.local_mode,
        global_mode: cmd.global_mode,
        seed: cmd.seed,
    };
    let outcomes = run_batch(&spec, cmd.runs)?;
    let mut summary = classify_and_estimate(&outcomes, spec.n, spec.h, cutoff)?;
    if cmd.ks && !summary.no_major_outbreaks {
        let limit = asymptotics::summary(&spec.model, spec.h, spec.p, spec.m, spec.local_mode)?;
        if let Some(sigma2) = limit.sigma2 {
            let fractions = major_fractions(&outcomes, spec.n, spec.h, cutoff);
            summary.ks_d = Some(ks_statistic(&fractions, limit.z, sigma2, spec.population())?);
        }
    }
    if let Some(path) = &cmd.out {
        write_file(path, |w| write_runs_csv(w, &outcomes))?;
    }
    emit_json(None, &summary)
}

#[derive(Args)]
struct VerifyCmd {
    /// Run only the named check blocks (comma list). Known blocks: table1,
    /// counterexamples, monotonicity, swapsign, homogenization, sigma,
    /// oracles, simulation, ks, full.
    #[arg(long, value_delimiter = ',', value_name = "BLOCKS")]
    only: Vec<String>,
    /// Add the large finite-population reproduction block (slow).
    #[arg(long)]
    full: bool,
    /// Write the JSON report here instead of stdout.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct VerifyReport {
    all_passed: bool,
    checks: Vec<hhe_core::verify::CheckResult>,
}

fn cmd_verify(cmd: VerifyCmd) -> Result<(), CliError> {
    for block in &cmd.only {
        if !is_known_block(block) {
            return Err(CliError::Config(format!(
                "unknown block {block:?}; known blocks: {}, full",
                BLOCKS.join(", ")
            )));
        }
    }
    let checks = run_verify(&VerifyOptions { only: cmd.only, full: cmd.full });
    let report = VerifyReport { all_passed: all_passed(&checks), checks };
    for check in report.checks.iter().filter(|c| !c.pass) {
        eprintln!(
            "FAIL [{}] {}: expected {}, got {} (tol {})",
            check.block, check.check, check.expected, check.got, check.tolerance
        );
        if let Some(detail) = &check.detail {
            eprintln!("     {detail}");
        }
    }
    emit_json(cmd.out.as_deref(), &report)?;
    if report.all_passed {
        Ok(())
    } else {
        Err(CliError::VerifyFailed)
    }
}
