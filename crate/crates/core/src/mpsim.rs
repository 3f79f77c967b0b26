//! Deterministic multi-rank execution.
//!
//! Ranks are scheduled strict round-robin by rank id, one instruction per
//! turn. Sends are eager into unbounded FIFO channels, one per (src, dst)
//! pair. Collectives complete once every rank has arrived; the allreduce sum
//! is accumulated in ascending rank order starting from `0.0`.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::asm::Program;
use crate::isa::Pc;
use crate::vm::{step, CollectiveKind, InjectionHook, Status, StepEvent, TrapKind, VmState};

/// Why a group did not run to completion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CrashKind {
    Trap { rank: u32, pc: Pc, trap: TrapKind },
    Deadlock,
    BudgetExceeded,
}

impl fmt::Display for CrashKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CrashKind::Trap { rank, pc, trap } => write!(f, "rank {rank} trapped ({trap}) at {pc}"),
            CrashKind::Deadlock => f.write_str("deadlock"),
            CrashKind::BudgetExceeded => f.write_str("step budget exceeded"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum GroupKind {
    Completed(Vec<VmState>),
    Crashed(CrashKind),
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroupOutcome {
    pub kind: GroupKind,
    pub total_steps: u64,
    /// Messages still sitting in channels when the run ended.
    pub undelivered: usize,
}

impl GroupOutcome {
    pub fn is_completed(&self) -> bool {
        matches!(self.kind, GroupKind::Completed(_))
    }

    pub fn states(&self) -> Option<&[VmState]> {
        match &self.kind {
            GroupKind::Completed(s) => Some(s),
            GroupKind::Crashed(_) => None,
        }
    }
}

/// An injection hook bound to one rank.
#[derive(Clone, Copy, Debug)]
pub struct RankHook {
    pub rank: u32,
    pub hook: InjectionHook,
}

pub fn run_group(
    program: &Program,
    nranks: u32,
    hook: Option<&mut RankHook>,
    step_budget: u64,
) -> GroupOutcome {
    run_group_observed(program, nranks, hook, step_budget, |_, _| {})
}

/// As [`run_group`], calling `observe(rank, pc)` before each instruction a
/// rank executes.
pub fn run_group_observed(
    program: &Program,
    nranks: u32,
    mut hook: Option<&mut RankHook>,
    step_budget: u64,
    mut observe: impl FnMut(u32, Pc),
) -> GroupOutcome {
    assert!(nranks >= 1, "a group needs at least one rank");
    if let Some(h) = &hook {
        assert!(h.rank < nranks, "hook targets rank {} of {nranks}", h.rank);
    }
    let n = nranks as usize;
    let mut states: Vec<VmState> = (0..nranks)
        .map(|r| VmState::new(program, r, nranks))
        .collect();
    // channels[src * n + dst]
    let mut channels: Vec<VecDeque<f64>> = vec![VecDeque::new(); n * n];
    let mut arrivals: Vec<Option<(CollectiveKind, f64)>> = vec![None; n];
    let mut arrived = 0usize;

    let total = |states: &[VmState]| states.iter().map(|s| s.steps).sum::<u64>();
    let pending = |channels: &[VecDeque<f64>]| channels.iter().map(VecDeque::len).sum::<usize>();
    let crash = |states: &[VmState], channels: &[VecDeque<f64>], kind: CrashKind| GroupOutcome {
        kind: GroupKind::Crashed(kind),
        total_steps: total(states),
        undelivered: pending(channels),
    };

    for (rank, s) in states.iter().enumerate() {
        if let Status::Trapped(trap) = s.status {
            return crash(
                &states,
                &channels,
                CrashKind::Trap {
                    rank: rank as u32,
                    pc: s.pc,
                    trap,
                },
            );
        }
    }

    loop {
        for r in 0..n {
            if states[r].status != Status::Running {
                continue;
            }
            if states[r].steps >= step_budget {
                return crash(&states, &channels, CrashKind::BudgetExceeded);
            }
            let pc = states[r].pc;
            observe(r as u32, pc);
            let rank_hook = match hook.as_deref_mut() {
                Some(h) if h.rank as usize == r => Some(&mut h.hook),
                _ => None,
            };
            match step(&mut states[r], program, rank_hook) {
                StepEvent::Retired | StepEvent::Halted => {}
                StepEvent::Trapped(trap) => {
                    return crash(
                        &states,
                        &channels,
                        CrashKind::Trap {
                            rank: r as u32,
                            pc,
                            trap,
                        },
                    );
                }
                StepEvent::WantsSend { dst, value } => {
                    let dst = dst as usize;
                    if states[dst].status == Status::BlockedOnRecv(r as u32) {
                        // The receiver's channel from `r` must be empty, or it would not be blocked.
                        let dest = blocked_dest(&states[dst], program);
                        states[dst].complete_recv(dest, value);
                    } else {
                        channels[r * n + dst].push_back(value);
                    }
                }
                StepEvent::WantsRecv { src, dest } => {
                    match channels[src as usize * n + r].pop_front() {
                        Some(value) => states[r].complete_recv(dest, value),
                        None => states[r].status = Status::BlockedOnRecv(src),
                    }
                }
                StepEvent::WantsCollective { kind, value } => {
                    states[r].status = Status::BlockedOnCollective;
                    arrivals[r] = Some((kind, value));
                    arrived += 1;
                    if arrived == n {
                        let first = arrivals[0].expect("all ranks arrived").0;
                        if arrivals
                            .iter()
                            .any(|a| !a.expect("all ranks arrived").0.same_op(&first))
                        {
                            return crash(&states, &channels, CrashKind::Deadlock);
                        }
                        let mut sum = 0.0f64;
                        for a in &arrivals {
                            sum += a.expect("all ranks arrived").1;
                        }
                        for (s, a) in states.iter_mut().zip(arrivals.iter_mut()) {
                            let (kind, _) = a.take().expect("all ranks arrived");
                            s.complete_collective(kind, sum);
                        }
                        arrived = 0;
                    }
                }
            }
        }

        if states.iter().all(|s| s.status == Status::Halted) {
            return GroupOutcome {
                total_steps: total(&states),
                undelivered: pending(&channels),
                kind: GroupKind::Completed(states),
            };
        }
        if !states.iter().any(|s| s.status == Status::Running) {
            return crash(&states, &channels, CrashKind::Deadlock);
        }
    }
}

fn blocked_dest(state: &VmState, program: &Program) -> crate::isa::FReg {
    match program.instructions[state.pc.index()] {
        crate::isa::Instr::Recv { fd, .. } => fd,
        other => unreachable!("rank blocked on recv is parked at {other:?}"),
    }
}
