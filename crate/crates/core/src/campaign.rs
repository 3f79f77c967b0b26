//! Fault-injection campaigns: sampled runs, exhaustive sweeps, outcome
//! classification, and SDC-rate convergence.

use std::fmt;
use std::str::FromStr;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asm::{Golden, Program, SourceLoc};
use crate::error::{Error, Result};
use crate::injector::{draw_fault, injected_run, profile_all, Completion, FaultSpec, Injection};
use crate::isa::{OpcodeClass, Pc};
use crate::mpsim::{run_group, CrashKind, GroupKind};
use crate::serde_bits::{f64_repr, hex_u64, opt_f64_repr};

/// Default cap on the number of sites an exhaustive sweep may visit.
pub const DEFAULT_EXHAUSTIVE_CAP: u64 = 1 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Serial,
    Parallel,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Serial => "serial",
            Mode::Parallel => "parallel",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "serial" => Ok(Mode::Serial),
            "parallel" => Ok(Mode::Parallel),
            other => Err(Error::Argument(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CrashReason {
    Trap,
    Deadlock,
    BudgetExceeded,
}

impl From<&CrashKind> for CrashReason {
    fn from(kind: &CrashKind) -> Self {
        match kind {
            CrashKind::Trap { .. } => CrashReason::Trap,
            CrashKind::Deadlock => CrashReason::Deadlock,
            CrashKind::BudgetExceeded => CrashReason::BudgetExceeded,
        }
    }
}

/// Outcome of one trial. Serialized as `benign`, `sdc`, `crash:trap`,
/// `crash:deadlock` or `crash:budget`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OutcomeClass {
    Benign,
    Sdc,
    Crash(CrashReason),
}

impl OutcomeClass {
    pub fn is_sdc(self) -> bool {
        self == OutcomeClass::Sdc
    }

    pub fn is_crash(self) -> bool {
        matches!(self, OutcomeClass::Crash(_))
    }
}

impl fmt::Display for OutcomeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutcomeClass::Benign => "benign",
            OutcomeClass::Sdc => "sdc",
            OutcomeClass::Crash(CrashReason::Trap) => "crash:trap",
            OutcomeClass::Crash(CrashReason::Deadlock) => "crash:deadlock",
            OutcomeClass::Crash(CrashReason::BudgetExceeded) => "crash:budget",
        })
    }
}

impl FromStr for OutcomeClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "benign" => OutcomeClass::Benign,
            "sdc" => OutcomeClass::Sdc,
            "crash:trap" => OutcomeClass::Crash(CrashReason::Trap),
            "crash:deadlock" => OutcomeClass::Crash(CrashReason::Deadlock),
            "crash:budget" => OutcomeClass::Crash(CrashReason::BudgetExceeded),
            other => return Err(Error::Format(format!("unknown outcome `{other}`"))),
        })
    }
}

impl Serialize for OutcomeClass {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for OutcomeClass {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: u64,
    pub spec: FaultSpec,
    pub faulted_pc: Pc,
    pub faulted_loc: SourceLoc,
    #[serde(with = "hex_u64")]
    pub original_bits: u64,
    #[serde(with = "hex_u64")]
    pub corrupted_bits: u64,
    pub outcome: OutcomeClass,
    #[serde(with = "opt_f64_repr")]
    pub checksum: Option<f64>,
    pub steps: u64,
}

impl TrialRecord {
    pub fn from_injection(trial: u64, inj: Injection, golden: f64, epsilon: f64) -> Self {
        let outcome = classify(&inj.completion, golden, epsilon);
        let checksum = match inj.completion {
            Completion::Completed { checksum } => Some(checksum),
            Completion::Crashed(_) => None,
        };
        TrialRecord {
            trial,
            spec: inj.spec,
            faulted_pc: inj.faulted_pc,
            faulted_loc: inj.faulted_loc,
            original_bits: inj.original_bits,
            corrupted_bits: inj.corrupted_bits,
            outcome,
            checksum,
            steps: inj.steps,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub kernel: String,
    pub mode: Mode,
    pub nranks: u32,
    #[serde(rename = "class")]
    pub opcode_class: OpcodeClass,
    pub trials: u64,
    pub seed: u64,
    pub checkpoint_interval: u64,
    pub convergence_tol: f64,
    pub convergence_window: usize,
    pub epsilon: f64,
    pub step_budget: u64,
}

impl CampaignConfig {
    pub const DEFAULT_TRIALS: u64 = 10_000;
    pub const DEFAULT_INTERVAL: u64 = 1000;
    pub const DEFAULT_TOL: f64 = 0.01;
    pub const DEFAULT_WINDOW: usize = 4;
    pub const DEFAULT_EPSILON: f64 = 1e-8;
    pub const DEFAULT_BUDGET: u64 = 20_000_000;
    pub const DEFAULT_PARALLEL_RANKS: u32 = 4;

    pub fn new(kernel: impl Into<String>, mode: Mode, opcode_class: OpcodeClass) -> Self {
        CampaignConfig {
            kernel: kernel.into(),
            mode,
            nranks: match mode {
                Mode::Serial => 1,
                Mode::Parallel => Self::DEFAULT_PARALLEL_RANKS,
            },
            opcode_class,
            trials: Self::DEFAULT_TRIALS,
            seed: 0,
            checkpoint_interval: Self::DEFAULT_INTERVAL,
            convergence_tol: Self::DEFAULT_TOL,
            convergence_window: Self::DEFAULT_WINDOW,
            epsilon: Self::DEFAULT_EPSILON,
            step_budget: Self::DEFAULT_BUDGET,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Argument(m));
        if self.trials < 1 {
            return bad("trials must be >= 1".into());
        }
        if self.checkpoint_interval < 1 {
            return bad("checkpoint interval must be >= 1".into());
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad(format!("epsilon {} outside (0, 1)", self.epsilon));
        }
        if self.nranks < 1 {
            return bad("nranks must be >= 1".into());
        }
        if self.mode == Mode::Serial && self.nranks != 1 {
            return bad(format!("serial mode runs one rank, not {}", self.nranks));
        }
        if self.convergence_window < 2 {
            return bad("convergence window must be >= 2".into());
        }
        if self.convergence_tol.is_nan() || self.convergence_tol < 0.0 {
            return bad("convergence tolerance must be >= 0".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignResult {
    pub config: CampaignConfig,
    #[serde(with = "f64_repr")]
    pub golden: f64,
    /// Fault-free dynamic counts of the campaign's class, per rank.
    pub profile: Vec<u64>,
    pub records: Vec<TrialRecord>,
    pub rate_series: Vec<f64>,
    pub converged: bool,
    pub converged_at: Option<usize>,
}

impl CampaignResult {
    pub fn outcomes(&self) -> Vec<OutcomeClass> {
        self.records.iter().map(|r| r.outcome).collect()
    }

    pub fn count(&self, pred: impl Fn(OutcomeClass) -> bool) -> usize {
        self.records.iter().filter(|r| pred(r.outcome)).count()
    }

    pub fn sdc_rate(&self) -> f64 {
        self.count(OutcomeClass::is_sdc) as f64 / self.records.len() as f64
    }
}

/// Fault-free value of the verification register on rank 0.
pub fn golden_checksum(program: &Program, nranks: u32, step_budget: u64) -> Result<f64> {
    let verify = program.verify.ok_or(Error::NoVerify)?;
    let out = run_group(program, nranks, None, step_budget);
    match out.kind {
        GroupKind::Completed(states) => Ok(states[0].freg(verify.register)),
        GroupKind::Crashed(kind) => Err(Error::KernelDefect(kind)),
    }
}

/// The reference a trial's checksum is compared against: the explicit
/// `.verify` value, or the fault-free checksum for `AUTO`.
pub fn reference_value(program: &Program, nranks: u32, step_budget: u64) -> Result<f64> {
    match program.verify.ok_or(Error::NoVerify)?.golden {
        Golden::Value(v) => Ok(v),
        Golden::Auto => golden_checksum(program, nranks, step_budget),
    }
}

/// Verification phase: Benign iff the checksum lies within `epsilon`
/// relative of `golden` (absolute when `golden` is zero).
pub fn classify(completion: &Completion, golden: f64, epsilon: f64) -> OutcomeClass {
    match completion {
        Completion::Crashed(kind) => OutcomeClass::Crash(kind.into()),
        Completion::Completed { checksum } => {
            let tolerance = if golden == 0.0 {
                epsilon
            } else {
                epsilon * golden.abs()
            };
            if !checksum.is_nan() && (checksum - golden).abs() <= tolerance {
                OutcomeClass::Benign
            } else {
                OutcomeClass::Sdc
            }
        }
    }
}

/// Per-trial generator seed: SplitMix64 finalizer applied to
/// `seed + (trial + 1) * 0x9E3779B97F4A7C15` (wrapping).
pub fn trial_seed(seed: u64, trial: u64) -> u64 {
    let mut z = seed.wrapping_add(trial.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The generator trial `trial` draws its fault site from.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(trial_seed(seed, trial))
}

/// Evaluate `f` over `0..n` on `jobs` worker threads, preserving index order.
fn map_indexed<T: Send>(
    n: u64,
    jobs: usize,
    f: impl Fn(u64) -> Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    if jobs <= 1 {
        return (0..n).map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Argument(format!("cannot start {jobs} workers: {e}")))?;
    pool.install(|| (0..n).into_par_iter().map(f).collect())
}

/// Run a sampled campaign of `config.trials` injections into `program`.
pub fn run_campaign(
    program: &Program,
    config: &CampaignConfig,
    jobs: usize,
) -> Result<CampaignResult> {
    config.validate()?;
    let nranks = config.nranks;
    let golden = reference_value(program, nranks, config.step_budget)?;
    let profile = profile_all(program, nranks, config.step_budget)?
        .into_iter()
        .nth(config.opcode_class.index())
        .expect("one profile per class");
    if profile.total() == 0 {
        return Err(Error::NoTarget(config.opcode_class));
    }

    let records = map_indexed(config.trials, jobs, |i| {
        let mut rng = trial_rng(config.seed, i);
        let spec = draw_fault(&mut rng, &profile)?;
        let inj = injected_run(program, nranks, spec, config.step_budget)?;
        Ok(TrialRecord::from_injection(i, inj, golden, config.epsilon))
    })?;

    let outcomes: Vec<_> = records.iter().map(|r| r.outcome).collect();
    let rate_series = rolling_rates(&outcomes, config.checkpoint_interval);
    let (converged, converged_at) = is_converged(
        &rate_series,
        config.convergence_tol,
        config.convergence_window,
    );
    Ok(CampaignResult {
        config: config.clone(),
        golden,
        profile: profile.per_rank_counts,
        records,
        rate_series,
        converged,
        converged_at,
    })
}

/// Inject at every (rank, k, bit) site, in that order.
pub fn run_exhaustive(
    program: &Program,
    nranks: u32,
    opcode_class: OpcodeClass,
    epsilon: f64,
    step_budget: u64,
    cap: u64,
    jobs: usize,
) -> Result<Vec<TrialRecord>> {
    let golden = reference_value(program, nranks, step_budget)?;
    let profile = profile_all(program, nranks, step_budget)?
        .into_iter()
        .nth(opcode_class.index())
        .expect("one profile per class");
    let size = profile.total().saturating_mul(64);
    if size > cap {
        return Err(Error::SpaceTooLarge { size, cap });
    }
    let mut offsets = Vec::with_capacity(profile.per_rank_counts.len());
    let mut acc = 0u64;
    for &c in &profile.per_rank_counts {
        offsets.push(acc);
        acc += c * 64;
    }
    map_indexed(size, jobs, |i| {
        let rank = offsets.partition_point(|&o| o <= i) - 1;
        let local = i - offsets[rank];
        let spec = FaultSpec {
            rank: rank as u32,
            opcode_class,
            k: local / 64 + 1,
            bit: (local % 64) as u32,
        };
        let inj = injected_run(program, nranks, spec, step_budget)?;
        Ok(TrialRecord::from_injection(i, inj, golden, epsilon))
    })
}

/// Cumulative SDC fraction after every `interval` trials, plus a final
/// partial checkpoint when the length is not a multiple of `interval`.
pub fn rolling_rates(outcomes: &[OutcomeClass], interval: u64) -> Vec<f64> {
    assert!(interval >= 1, "checkpoint interval must be >= 1");
    let interval = interval as usize;
    let mut series = Vec::with_capacity(outcomes.len() / interval + 1);
    let mut sdc = 0usize;
    for (i, o) in outcomes.iter().enumerate() {
        sdc += o.is_sdc() as usize;
        let n = i + 1;
        if n % interval == 0 || n == outcomes.len() {
            series.push(sdc as f64 / n as f64);
        }
    }
    series
}

/// Smallest checkpoint index `j` such that every checkpoint from `j` to
/// the end lies within `tol` of the last one and at least `window`
/// checkpoints remain.
pub fn is_converged(series: &[f64], tol: f64, window: usize) -> (bool, Option<usize>) {
    assert!(window >= 2, "convergence window must be >= 2");
    if series.len() < window {
        return (false, None);
    }
    let last = series[series.len() - 1];
    // Walk back from the end while points stay inside the band.
    let mut j = series.len();
    while j > 0 && (series[j - 1] - last).abs() <= tol {
        j -= 1;
    }
    if series.len() - j >= window {
        (true, Some(j))
    } else {
        (false, None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asm::assemble;
    use OutcomeClass::{Benign, Sdc};

    #[test]
    fn classify_cases() {
        let crash = Completion::Crashed(CrashKind::Deadlock);
        assert_eq!(
            classify(&crash, 1.0, 1e-8),
            OutcomeClass::Crash(CrashReason::Deadlock)
        );
        assert_eq!(
            classify(
                &Completion::Completed {
                    checksum: 1.0 + 1e-12
                },
                1.0,
                1e-8
            ),
            Benign
        );
        assert_eq!(
            classify(&Completion::Completed { checksum: f64::NAN }, 1.0, 1e-8),
            Sdc
        );
        assert_eq!(
            classify(
                &Completion::Completed {
                    checksum: 1.0 + 1e-7
                },
                1.0,
                1e-8
            ),
            Sdc
        );
        assert_eq!(
            classify(&Completion::Completed { checksum: 5e-9 }, 0.0, 1e-8),
            Benign
        );
        assert_eq!(
            classify(&Completion::Completed { checksum: 2e-8 }, 0.0, 1e-8),
            Sdc
        );
        assert_eq!(
            classify(
                &Completion::Completed {
                    checksum: f64::INFINITY
                },
                1.0,
                1e-8
            ),
            Sdc
        );
    }

    #[test]
    fn rolling_rate_examples() {
        assert_eq!(
            rolling_rates(&[Sdc, Benign, Benign, Benign], 2),
            vec![0.5, 0.25]
        );
        assert_eq!(rolling_rates(&[Benign; 7], 3), vec![0.0, 0.0, 0.0]);
        let mut v = vec![Sdc; 1000];
        v.extend(vec![Benign; 1000]);
        assert_eq!(rolling_rates(&v, 1000), vec![1.0, 0.5]);
        assert!(rolling_rates(&[], 10).is_empty());
        assert_eq!(rolling_rates(&[Sdc, Benign, Sdc], 2), vec![0.5, 2.0 / 3.0]);
    }

    #[test]
    fn convergence_examples() {
        // Every point of this series is already within 0.02 of the last.
        assert_eq!(
            is_converged(&[0.30, 0.31, 0.305, 0.304], 0.02, 3),
            (true, Some(0))
        );
        assert_eq!(
            is_converged(&[0.30, 0.40, 0.305, 0.304], 0.02, 3),
            (false, None)
        );
        assert_eq!(
            is_converged(&[0.50, 0.30, 0.31, 0.305, 0.304], 0.02, 3),
            (true, Some(1))
        );
        assert_eq!(is_converged(&[0.1, 0.5, 0.1, 0.5], 0.01, 2), (false, None));
        assert_eq!(is_converged(&[0.2; 5], 1e-9, 5), (true, Some(0)));
        assert_eq!(is_converged(&[0.2; 3], 0.1, 4), (false, None));
    }

    #[test]
    fn trial_seeds_differ_and_repeat() {
        assert_eq!(trial_seed(7, 3), trial_seed(7, 3));
        assert_ne!(trial_seed(7, 3), trial_seed(7, 4));
        assert_ne!(trial_seed(7, 3), trial_seed(8, 3));
    }

    #[test]
    fn golden_of_constant_program() {
        let p = assemble(".verify f0 AUTO 1e-8\nfmovi f0, 2.0\nhalt").unwrap();
        assert_eq!(golden_checksum(&p, 1, 100).unwrap(), 2.0);
        let p = assemble(".verify f0 3.0 1e-8\nfmovi f0, 2.0\nhalt").unwrap();
        assert_eq!(reference_value(&p, 1, 100).unwrap(), 3.0);
        let p = assemble("fmovi f0, 2.0\nhalt").unwrap();
        assert!(matches!(golden_checksum(&p, 1, 100), Err(Error::NoVerify)));
    }

    #[test]
    fn config_validation() {
        let mut c = CampaignConfig::new("cg", Mode::Serial, OpcodeClass::Fadd);
        assert!(c.validate().is_ok());
        c.nranks = 4;
        assert!(c.validate().is_err());
        let mut c = CampaignConfig::new("cg", Mode::Parallel, OpcodeClass::Fadd);
        assert_eq!(c.nranks, 4);
        c.epsilon = 1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn outcome_strings_round_trip() {
        for o in [
            Benign,
            Sdc,
            OutcomeClass::Crash(CrashReason::Trap),
            OutcomeClass::Crash(CrashReason::Deadlock),
            OutcomeClass::Crash(CrashReason::BudgetExceeded),
        ] {
            assert_eq!(o.to_string().parse::<OutcomeClass>().unwrap(), o);
        }
    }
}
