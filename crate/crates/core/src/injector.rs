//! Two-pass fault model: profile the fault-free run, draw a uniform fault
//! site, then replay with exactly one result bit flipped.

use rand_core::RngCore;
use serde::{Deserialize, Serialize};

use crate::asm::{Program, SourceLoc};
use crate::error::{Error, Result};
use crate::isa::{OpcodeClass, Pc};
use crate::mpsim::{run_group, CrashKind, GroupKind, RankHook};
use crate::vm::InjectionHook;

/// Fault-free dynamic instance counts of one class, per rank.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Profile {
    pub opcode_class: OpcodeClass,
    pub per_rank_counts: Vec<u64>,
}

impl Profile {
    pub fn nranks(&self) -> u32 {
        self.per_rank_counts.len() as u32
    }

    pub fn total(&self) -> u64 {
        self.per_rank_counts.iter().sum()
    }
}

/// One injection site.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FaultSpec {
    pub rank: u32,
    #[serde(rename = "class")]
    pub opcode_class: OpcodeClass,
    /// 1-based dynamic instance on `rank`.
    pub k: u64,
    pub bit: u32,
}

/// How an injected run ended.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Completion {
    /// Rank 0's verification register at halt.
    Completed {
        checksum: f64,
    },
    Crashed(CrashKind),
}

/// An injected run before classification.
#[derive(Clone, Debug, PartialEq)]
pub struct Injection {
    pub spec: FaultSpec,
    pub faulted_pc: Pc,
    pub faulted_loc: SourceLoc,
    pub original_bits: u64,
    pub corrupted_bits: u64,
    pub completion: Completion,
    pub steps: u64,
}

/// Profile all four classes in a single fault-free run.
pub fn profile_all(program: &Program, nranks: u32, step_budget: u64) -> Result<[Profile; 4]> {
    let out = run_group(program, nranks, None, step_budget);
    let states = match out.kind {
        GroupKind::Completed(states) => states,
        GroupKind::Crashed(kind) => return Err(Error::KernelDefect(kind)),
    };
    Ok(OpcodeClass::ALL.map(|class| Profile {
        opcode_class: class,
        per_rank_counts: states.iter().map(|s| s.counter(class)).collect(),
    }))
}

pub fn profile(
    program: &Program,
    nranks: u32,
    opcode_class: OpcodeClass,
    step_budget: u64,
) -> Result<Profile> {
    let all = profile_all(program, nranks, step_budget)?;
    Ok(all
        .into_iter()
        .nth(opcode_class.index())
        .expect("one profile per class"))
}

/// Map a uniform 64-bit draw onto `0..n` by multiply-high. One draw per
/// call; the bias is below `n / 2^64`.
fn below(rng: &mut impl RngCore, n: u64) -> u64 {
    ((rng.next_u64() as u128 * n as u128) >> 64) as u64
}

/// Draw a fault site uniformly: a rank among those with at least one
/// instance, then `k` in `1..=count`, then a bit in `0..64`.
///
/// Consumes exactly three `next_u64` calls from `rng`.
pub fn draw_fault(rng: &mut impl RngCore, profile: &Profile) -> Result<FaultSpec> {
    let eligible: Vec<u32> = profile
        .per_rank_counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(r, _)| r as u32)
        .collect();
    if eligible.is_empty() {
        return Err(Error::NoTarget(profile.opcode_class));
    }
    let rank = eligible[below(rng, eligible.len() as u64) as usize];
    let count = profile.per_rank_counts[rank as usize];
    let k = 1 + below(rng, count);
    let bit = below(rng, 64) as u32;
    Ok(FaultSpec {
        rank,
        opcode_class: profile.opcode_class,
        k,
        bit,
    })
}

/// Replay `program` on `nranks` ranks with the fault in `spec`.
pub fn injected_run(
    program: &Program,
    nranks: u32,
    spec: FaultSpec,
    step_budget: u64,
) -> Result<Injection> {
    let verify = program.verify.ok_or(Error::NoVerify)?;
    if spec.rank >= nranks {
        return Err(Error::Precondition(format!(
            "rank {} outside group of {nranks}",
            spec.rank
        )));
    }
    if spec.k == 0 || spec.bit > 63 {
        return Err(Error::Precondition(format!(
            "invalid fault site k={} bit={}",
            spec.k, spec.bit
        )));
    }
    let mut hook = RankHook {
        rank: spec.rank,
        hook: InjectionHook::new(spec.opcode_class, spec.k, spec.bit),
    };
    let out = run_group(program, nranks, Some(&mut hook), step_budget);
    let Some(fire) = hook.hook.fired else {
        return Err(Error::Precondition(format!(
            "rank {} executes fewer than {} {} instructions",
            spec.rank, spec.k, spec.opcode_class
        )));
    };
    debug_assert_eq!(hook.hook.fire_count, 1);
    let completion = match &out.kind {
        GroupKind::Completed(states) => Completion::Completed {
            checksum: states[0].freg(verify.register),
        },
        GroupKind::Crashed(kind) => Completion::Crashed(*kind),
    };
    Ok(Injection {
        spec,
        faulted_pc: fire.pc,
        faulted_loc: program.debug[fire.pc.index()].clone(),
        original_bits: fire.original_bits,
        corrupted_bits: fire.corrupted_bits,
        completion,
        steps: out.total_steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asm::assemble;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const ONE_FADD: &str =
        ".verify f0 AUTO 1e-8\nfmovi f1, 1.0\nfmovi f2, 0.0\nfadd f0, f1, f2\nhalt";

    #[test]
    fn loop_profile_counts() {
        let p =
            assemble("li r1, 5\nl: fadd f0, f0, f1\naddi r1, r1, -1\nblt r0, r1, l\nhalt").unwrap();
        assert_eq!(
            profile(&p, 1, OpcodeClass::Fadd, 1000)
                .unwrap()
                .per_rank_counts,
            vec![5]
        );
        assert_eq!(
            profile(&p, 1, OpcodeClass::Fmul, 1000)
                .unwrap()
                .per_rank_counts,
            vec![0]
        );
    }

    #[test]
    fn crashing_profile_is_a_kernel_defect() {
        let p = assemble("L: jmp L").unwrap();
        assert!(matches!(
            profile(&p, 1, OpcodeClass::Fadd, 100),
            Err(Error::KernelDefect(CrashKind::BudgetExceeded))
        ));
    }

    #[test]
    fn degenerate_space() {
        let prof = Profile {
            opcode_class: OpcodeClass::Fadd,
            per_rank_counts: vec![1],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut bits = [false; 64];
        for _ in 0..2000 {
            let s = draw_fault(&mut rng, &prof).unwrap();
            assert_eq!((s.rank, s.k), (0, 1));
            bits[s.bit as usize] = true;
        }
        assert!(bits.iter().all(|&b| b));
    }

    #[test]
    fn zero_count_ranks_are_never_chosen() {
        let prof = Profile {
            opcode_class: OpcodeClass::Fadd,
            per_rank_counts: vec![10, 0, 0, 0],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let s = draw_fault(&mut rng, &prof).unwrap();
            assert_eq!(s.rank, 0);
            assert!((1..=10).contains(&s.k));
        }
        let prof = Profile {
            opcode_class: OpcodeClass::Fadd,
            per_rank_counts: vec![0, 0, 7, 0],
        };
        assert!(draw_fault(&mut rng, &prof).unwrap().rank == 2);
    }

    #[test]
    fn empty_profile_has_no_target() {
        let prof = Profile {
            opcode_class: OpcodeClass::Fdiv,
            per_rank_counts: vec![0, 0],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(matches!(
            draw_fault(&mut rng, &prof),
            Err(Error::NoTarget(OpcodeClass::Fdiv))
        ));
    }

    #[test]
    fn draw_consumes_three_words() {
        let prof = Profile {
            opcode_class: OpcodeClass::Fadd,
            per_rank_counts: vec![3, 5],
        };
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = ChaCha8Rng::seed_from_u64(9);
        draw_fault(&mut a, &prof).unwrap();
        for _ in 0..3 {
            b.next_u64();
        }
        assert_eq!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn sign_flip_injection() {
        let p = assemble(ONE_FADD).unwrap();
        let spec = FaultSpec {
            rank: 0,
            opcode_class: OpcodeClass::Fadd,
            k: 1,
            bit: 63,
        };
        let inj = injected_run(&p, 1, spec, 100).unwrap();
        assert_eq!(inj.faulted_pc, Pc(2));
        assert_eq!(f64::from_bits(inj.corrupted_bits), -1.0);
        assert_eq!(inj.completion, Completion::Completed { checksum: -1.0 });
        assert_eq!(inj, injected_run(&p, 1, spec, 100).unwrap());
    }

    #[test]
    fn mantissa_lsb_injection() {
        let p = assemble(ONE_FADD).unwrap();
        let spec = FaultSpec {
            rank: 0,
            opcode_class: OpcodeClass::Fadd,
            k: 1,
            bit: 0,
        };
        let inj = injected_run(&p, 1, spec, 100).unwrap();
        // 1 + 2^-52, the next binary64 after 1.0.
        let expected = 1.0 + f64::EPSILON;
        assert_eq!(expected, 1.0000000000000002);
        assert_eq!(inj.completion, Completion::Completed { checksum: expected });
    }

    #[test]
    fn k_beyond_profile_is_rejected() {
        let p = assemble(ONE_FADD).unwrap();
        let spec = FaultSpec {
            rank: 0,
            opcode_class: OpcodeClass::Fadd,
            k: 2,
            bit: 0,
        };
        assert!(matches!(
            injected_run(&p, 1, spec, 100),
            Err(Error::Precondition(_))
        ));
    }
}
