//! `faultline` command-line frontend.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use faultline::analysis::build_report;
use faultline::asm::{assemble_named, format_listing, Program};
use faultline::bundle::{self, emit_campaign, emit_report, load_campaign};
use faultline::campaign::{
    reference_value, CampaignConfig, CampaignResult, Mode, OutcomeClass, TrialRecord,
};
use faultline::injector::{injected_run, profile_all, FaultSpec};
use faultline::kernels::{self, build_kernel, KernelParams};
use faultline::mpsim::{run_group, GroupKind};
use faultline::{Error, OpcodeClass};

const SEED_ENV: &str = "FAULTLINE_SEED";

#[derive(Parser)]
#[command(
    name = "faultline",
    version,
    about = "Single-bit fault injection into serial and message-passing kernels"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Assemble a .fasm file and print its listing.
    Assemble {
        file: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a program fault-free and print rank 0's verification value.
    Run(RunArgs),
    /// Count dynamic instances of each injectable class per rank.
    Profile(RunArgs),
    /// Run one injection at an explicit fault site.
    Inject(InjectArgs),
    /// Run a sampled fault-injection campaign.
    Campaign(CampaignArgs),
    /// Inject at every (rank, k, bit) site.
    Exhaustive(ExhaustiveArgs),
    /// Compare the faulty-pc distributions of a serial and a parallel campaign.
    Analyze(AnalyzeArgs),
}

#[derive(Args, Clone, Default)]
struct Target {
    /// Bundled kernel: cg, ft or bt.
    #[arg(long, conflicts_with = "program")]
    kernel: Option<String>,
    /// Path to a .fasm program.
    #[arg(long)]
    program: Option<PathBuf>,
    /// Kernel problem size (cg grid side).
    #[arg(long)]
    size: Option<u32>,
    /// Kernel iteration count.
    #[arg(long)]
    iterations: Option<u32>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    target: Target,
    #[arg(long, default_value_t = 1)]
    nranks: u32,
    #[arg(long)]
    budget: Option<u64>,
}

#[derive(Args)]
struct InjectArgs {
    #[command(flatten)]
    target: Target,
    #[arg(long, default_value_t = 1)]
    nranks: u32,
    #[arg(long, default_value = "fadd")]
    class: OpcodeClass,
    #[arg(long, default_value_t = 0)]
    rank: u32,
    /// 1-based dynamic instance on the chosen rank.
    #[arg(long)]
    k: u64,
    #[arg(long)]
    bit: u32,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CampaignArgs {
    #[command(flatten)]
    target: Target,
    /// TOML file with the same keys as the flags; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    nranks: Option<u32>,
    #[arg(long)]
    class: Option<OpcodeClass>,
    #[arg(long)]
    trials: Option<u64>,
    /// Falls back to the FAULTLINE_SEED environment variable, then 0.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    interval: Option<u64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long)]
    jobs: Option<usize>,
    /// Campaign JSON path; trials and rates tables are written beside it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExhaustiveArgs {
    #[command(flatten)]
    target: Target,
    #[arg(long, default_value = "serial")]
    mode: Mode,
    #[arg(long)]
    nranks: Option<u32>,
    #[arg(long, default_value = "fadd")]
    class: OpcodeClass,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    budget: Option<u64>,
    /// Largest number of sites to visit.
    #[arg(long, default_value_t = faultline::campaign::DEFAULT_EXHAUSTIVE_CAP)]
    cap: u64,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    serial: PathBuf,
    parallel: PathBuf,
    /// Program for source annotations when the campaigns ran a .fasm file.
    #[arg(long)]
    program: Option<PathBuf>,
    /// Kernel size the campaigns used, if not the default.
    #[arg(long, conflicts_with = "program")]
    size: Option<u32>,
    /// Kernel iteration count the campaigns used, if not the default.
    #[arg(long, conflicts_with = "program")]
    iterations: Option<u32>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory for one SVG chart per histogram.
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct FileConfig {
    kernel: Option<String>,
    program: Option<PathBuf>,
    size: Option<u32>,
    iterations: Option<u32>,
    mode: Option<Mode>,
    nranks: Option<u32>,
    class: Option<OpcodeClass>,
    trials: Option<u64>,
    seed: Option<u64>,
    interval: Option<u64>,
    tol: Option<f64>,
    window: Option<usize>,
    epsilon: Option<f64>,
    budget: Option<u64>,
    jobs: Option<usize>,
    out: Option<PathBuf>,
}

/// A failure and the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Argument(_) => 2,
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("faultline: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(command: Command) -> CliResult {
    match command {
        Command::Assemble { file, out } => assemble(&file, out.as_deref()),
        Command::Run(a) => run(a),
        Command::Profile(a) => profile(a),
        Command::Inject(a) => inject(a),
        Command::Campaign(a) => campaign(a),
        Command::Exhaustive(a) => exhaustive(a),
        Command::Analyze(a) => analyze(a),
    }
}

fn read_program(path: &Path) -> CliResult<Program> {
    let text = fs::read_to_string(path).map_err(|source| {
        Failure::from(Error::Io {
            path: path.display().to_string(),
            source,
        })
    })?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    assemble_named(&name, &text).map_err(|e| Failure {
        code: 1,
        message: format!("{}: {e}", path.display()),
    })
}

/// The program and the name recorded for it in campaign files.
fn load_target(t: &Target) -> CliResult<(Program, String)> {
    match (&t.kernel, &t.program) {
        (Some(k), None) => {
            let (p, _) = build_kernel(
                k,
                KernelParams {
                    size: t.size,
                    iterations: t.iterations,
                },
            )?;
            Ok((p, k.clone()))
        }
        (None, Some(path)) => {
            if t.size.is_some() || t.iterations.is_some() {
                return Err(usage(
                    "--size and --iterations apply to bundled kernels only",
                ));
            }
            Ok((read_program(path)?, path.display().to_string()))
        }
        (None, None) => Err(usage("one of --kernel or --program is required")),
        (Some(_), Some(_)) => Err(usage("--kernel and --program are mutually exclusive")),
    }
}

fn write_out(out: Option<&Path>, text: &str) -> CliResult {
    match out {
        Some(path) => bundle::write_file(path, text.as_bytes()).map_err(Failure::from),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes()).map_err(|source| {
                Failure::from(Error::Io {
                    path: "<stdout>".into(),
                    source,
                })
            })
        }
    }
}

fn assemble(file: &Path, out: Option<&Path>) -> CliResult {
    let program = read_program(file)?;
    write_out(out, &format_listing(&program))
}

fn run(a: RunArgs) -> CliResult {
    let (program, _) = load_target(&a.target)?;
    let budget = a.budget.unwrap_or(CampaignConfig::DEFAULT_BUDGET);
    if a.nranks < 1 {
        return Err(usage("--nranks must be >= 1"));
    }
    let out = run_group(&program, a.nranks, None, budget);
    match out.kind {
        GroupKind::Completed(states) => {
            let mut text = format!("status    completed\nsteps     {}\n", out.total_steps);
            if let Some(v) = program.verify {
                let value = states[0].freg(v.register);
                text += &format!("checksum  {value:?}\n");
            }
            write_out(None, &text)
        }
        GroupKind::Crashed(kind) => Err(Failure {
            code: 1,
            message: format!("run crashed: {kind}"),
        }),
    }
}

fn profile(a: RunArgs) -> CliResult {
    let (program, _) = load_target(&a.target)?;
    let budget = a.budget.unwrap_or(CampaignConfig::DEFAULT_BUDGET);
    if a.nranks < 1 {
        return Err(usage("--nranks must be >= 1"));
    }
    let profiles = profile_all(&program, a.nranks, budget)?;
    let mut text = String::from("class  rank  count\n");
    for p in &profiles {
        for (rank, c) in p.per_rank_counts.iter().enumerate() {
            text += &format!("{:<6} {:>4}  {}\n", p.opcode_class.name(), rank, c);
        }
    }
    write_out(None, &text)
}

fn inject(a: InjectArgs) -> CliResult {
    let (program, _) = load_target(&a.target)?;
    let budget = a.budget.unwrap_or(CampaignConfig::DEFAULT_BUDGET);
    let epsilon = a
        .epsilon
        .or(program.verify.map(|v| v.epsilon))
        .unwrap_or(CampaignConfig::DEFAULT_EPSILON);
    let golden = reference_value(&program, a.nranks, budget)?;
    let spec = FaultSpec {
        rank: a.rank,
        opcode_class: a.class,
        k: a.k,
        bit: a.bit,
    };
    let inj = injected_run(&program, a.nranks, spec, budget)?;
    let record = TrialRecord::from_injection(0, inj, golden, epsilon);
    write_out(a.out.as_deref(), &bundle::to_json(&record))
}

fn merged_config(a: &CampaignArgs) -> CliResult<(FileConfig, Target)> {
    let file: FileConfig = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|source| {
                Failure::from(Error::Io {
                    path: path.display().to_string(),
                    source,
                })
            })?;
            toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?
        }
        None => FileConfig::default(),
    };
    let target = if a.target.kernel.is_some() || a.target.program.is_some() {
        Target {
            size: a.target.size.or(file.size),
            iterations: a.target.iterations.or(file.iterations),
            ..a.target.clone()
        }
    } else {
        Target {
            kernel: file.kernel.clone(),
            program: file.program.clone(),
            size: a.target.size.or(file.size),
            iterations: a.target.iterations.or(file.iterations),
        }
    };
    Ok((file, target))
}

fn env_seed() -> CliResult<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| usage(format!("{SEED_ENV}={s} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

fn campaign(a: CampaignArgs) -> CliResult {
    let (file, target) = merged_config(&a)?;
    let (program, name) = load_target(&target)?;
    let mode = a.mode.or(file.mode).unwrap_or(Mode::Serial);
    let class = a.class.or(file.class).unwrap_or(OpcodeClass::Fadd);
    let mut config = CampaignConfig::new(name, mode, class);
    config.nranks = match mode {
        Mode::Serial => a.nranks.or(file.nranks).unwrap_or(1),
        Mode::Parallel => a
            .nranks
            .or(file.nranks)
            .unwrap_or(if program.nranks_default > 1 {
                program.nranks_default
            } else {
                CampaignConfig::DEFAULT_PARALLEL_RANKS
            }),
    };
    config.trials = a.trials.or(file.trials).unwrap_or(config.trials);
    config.seed = match a.seed.or(file.seed) {
        Some(s) => s,
        None => env_seed()?.unwrap_or(0),
    };
    config.checkpoint_interval = a
        .interval
        .or(file.interval)
        .unwrap_or(config.checkpoint_interval);
    config.convergence_tol = a.tol.or(file.tol).unwrap_or(config.convergence_tol);
    config.convergence_window = a
        .window
        .or(file.window)
        .unwrap_or(config.convergence_window);
    config.epsilon = a.epsilon.or(file.epsilon).unwrap_or(config.epsilon);
    config.step_budget = a.budget.or(file.budget).unwrap_or(config.step_budget);
    let jobs = a.jobs.or(file.jobs).unwrap_or(1);
    if jobs < 1 {
        return Err(usage("--jobs must be >= 1"));
    }
    let out = a.out.clone().or(file.out);

    let result = faultline::run_campaign(&program, &config, jobs)?;
    match out {
        Some(path) => {
            emit_campaign(&result, &path)?;
            write_out(None, &summary(&result))
        }
        None => write_out(None, &bundle::campaign_json(&result)),
    }
}

fn summary(r: &CampaignResult) -> String {
    let n = r.records.len();
    let benign = r.count(|o| o == OutcomeClass::Benign);
    let sdc = r.count(OutcomeClass::is_sdc);
    let crash = r.count(OutcomeClass::is_crash);
    let converged = match r.converged_at {
        Some(j) => format!("yes, from checkpoint {}", j + 1),
        None => "no".into(),
    };
    format!(
        "kernel    {}\nmode      {}\nranks     {}\nclass     {}\ntrials    {n}\nbenign    {benign}\nsdc       {sdc}\ncrash     {crash}\nsdc rate  {:.4}\nconverged {converged}\n",
        r.config.kernel, r.config.mode, r.config.nranks, r.config.opcode_class, r.sdc_rate()
    )
}

fn exhaustive(a: ExhaustiveArgs) -> CliResult {
    let (program, name) = load_target(&a.target)?;
    let nranks = match a.mode {
        Mode::Serial => 1,
        Mode::Parallel => a.nranks.unwrap_or(CampaignConfig::DEFAULT_PARALLEL_RANKS),
    };
    if a.mode == Mode::Serial && a.nranks.is_some_and(|n| n != 1) {
        return Err(usage("serial mode runs one rank"));
    }
    let budget = a.budget.unwrap_or(CampaignConfig::DEFAULT_BUDGET);
    let epsilon = a.epsilon.unwrap_or(CampaignConfig::DEFAULT_EPSILON);
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(usage(format!("epsilon {epsilon} outside (0, 1)")));
    }
    if a.jobs < 1 {
        return Err(usage("--jobs must be >= 1"));
    }
    let records =
        faultline::run_exhaustive(&program, nranks, a.class, epsilon, budget, a.cap, a.jobs)?;
    let sdc = records.iter().filter(|r| r.outcome.is_sdc()).count();
    let crash = records.iter().filter(|r| r.outcome.is_crash()).count();
    let rate = sdc as f64 / records.len() as f64;
    if let Some(path) = &a.out {
        let doc = serde_json::json!({
            "kernel": name,
            "mode": a.mode,
            "nranks": nranks,
            "class": a.class,
            "epsilon": epsilon,
            "sites": records.len(),
            "sdc_rate": rate,
            "records": records,
        });
        bundle::write_file(path, bundle::to_json(&doc).as_bytes())?;
    }
    write_out(
        None,
        &format!(
            "sites     {}\nbenign    {}\nsdc       {sdc}\ncrash     {crash}\nsdc rate  {rate:.6}\n",
            records.len(),
            records.len() - sdc - crash
        ),
    )
}

fn analyze(a: AnalyzeArgs) -> CliResult {
    let serial = load_campaign(&a.serial)?;
    let parallel = load_campaign(&a.parallel)?;
    let program = match &a.program {
        Some(path) => read_program(path)?,
        None if kernels::NAMES.contains(&serial.config.kernel.as_str()) => {
            let params = KernelParams {
                size: a.size,
                iterations: a.iterations,
            };
            build_kernel(&serial.config.kernel, params)?.0
        }
        None => read_program(Path::new(&serial.config.kernel))?,
    };
    let report = build_report(&serial, &parallel, &program)?;
    if a.out.is_some() || a.svg.is_some() {
        emit_report(&report, a.out.as_deref(), a.svg.as_deref())?;
    }
    if a.out.is_none() {
        write_out(None, &bundle::to_json(&report))?;
    }
    Ok(())
}
