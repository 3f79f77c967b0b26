//! Single-rank interpreter with per-class dynamic counters and a
//! result-bit-flip hook.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::asm::Program;
use crate::isa::{apply_bitflip, FReg, Instr, MemRef, OpcodeClass, Pc, NUM_FREGS, NUM_IREGS};

/// Call depth beyond which `call` traps.
pub const MAX_CALL_DEPTH: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrapKind {
    /// Memory, instruction fetch, call stack, or peer rank out of range.
    OutOfBounds,
    IntDivZero,
}

impl fmt::Display for TrapKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrapKind::OutOfBounds => "out-of-bounds",
            TrapKind::IntDivZero => "int-div-zero",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CollectiveKind {
    AllreduceSum { dest: FReg },
    Barrier,
}

impl CollectiveKind {
    /// Two arrivals are compatible when they are the same collective.
    pub fn same_op(&self, other: &CollectiveKind) -> bool {
        matches!(
            (self, other),
            (
                CollectiveKind::AllreduceSum { .. },
                CollectiveKind::AllreduceSum { .. }
            ) | (CollectiveKind::Barrier, CollectiveKind::Barrier)
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Running,
    Halted,
    Trapped(TrapKind),
    BlockedOnRecv(u32),
    BlockedOnCollective,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepEvent {
    Retired,
    Halted,
    Trapped(TrapKind),
    /// The send has retired; the driver must enqueue `value` for `dst`.
    WantsSend {
        dst: u32,
        value: f64,
    },
    /// Not retired until the driver calls [`VmState::complete_recv`].
    WantsRecv {
        src: u32,
        dest: FReg,
    },
    /// Not retired until the driver calls [`VmState::complete_collective`].
    WantsCollective {
        kind: CollectiveKind,
        value: f64,
    },
}

/// What the hook observed when it fired.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HookFire {
    pub pc: Pc,
    pub original_bits: u64,
    pub corrupted_bits: u64,
}

/// Flips bit `bit` of the result of the `k`-th (1-based) dynamic instance of
/// `class`, before it is written back.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InjectionHook {
    pub class: OpcodeClass,
    pub k: u64,
    pub bit: u32,
    pub fired: Option<HookFire>,
    pub fire_count: u32,
}

impl InjectionHook {
    pub fn new(class: OpcodeClass, k: u64, bit: u32) -> Self {
        assert!(bit < 64, "bit index {bit} out of range");
        InjectionHook {
            class,
            k,
            bit,
            fired: None,
            fire_count: 0,
        }
    }
}

/// Architectural state of one rank.
#[derive(Clone, Debug)]
pub struct VmState {
    pub fregs: [f64; NUM_FREGS],
    pub iregs: [i64; NUM_IREGS],
    pub mem: Vec<u64>,
    pub pc: Pc,
    pub steps: u64,
    pub class_counters: [u64; 4],
    pub rank: u32,
    pub nranks: u32,
    pub status: Status,
    pub call_stack: Vec<Pc>,
}

impl PartialEq for VmState {
    /// Bitwise equality; NaN registers compare by payload.
    fn eq(&self, other: &Self) -> bool {
        self.fregs
            .iter()
            .zip(&other.fregs)
            .all(|(a, b)| a.to_bits() == b.to_bits())
            && self.iregs == other.iregs
            && self.mem == other.mem
            && self.pc == other.pc
            && self.steps == other.steps
            && self.class_counters == other.class_counters
            && self.rank == other.rank
            && self.nranks == other.nranks
            && self.status == other.status
            && self.call_stack == other.call_stack
    }
}

impl VmState {
    pub fn new(program: &Program, rank: u32, nranks: u32) -> Self {
        VmState {
            fregs: [0.0; NUM_FREGS],
            iregs: [0; NUM_IREGS],
            mem: program.initial_memory(),
            pc: program.entry,
            steps: 0,
            class_counters: [0; 4],
            rank,
            nranks,
            status: if program.is_empty() {
                Status::Trapped(TrapKind::OutOfBounds)
            } else {
                Status::Running
            },
            call_stack: Vec::new(),
        }
    }

    pub fn freg(&self, r: FReg) -> f64 {
        self.fregs[r.0 as usize]
    }

    pub fn counter(&self, class: OpcodeClass) -> u64 {
        self.class_counters[class.index()]
    }

    #[inline]
    fn address(&self, m: MemRef) -> Option<usize> {
        let base = m.base.map_or(0, |b| self.iregs[b.0 as usize]);
        let addr = base.wrapping_add(m.offset);
        (addr >= 0 && (addr as u64) < self.mem.len() as u64).then_some(addr as usize)
    }

    #[inline]
    fn retire(&mut self) {
        self.pc.0 += 1;
        self.steps += 1;
    }

    fn trap(&mut self, kind: TrapKind) -> StepEvent {
        self.status = Status::Trapped(kind);
        StepEvent::Trapped(kind)
    }

    fn peer(&self, reg: crate::isa::IReg) -> Option<u32> {
        let v = self.iregs[reg.0 as usize];
        (v >= 0 && v < self.nranks as i64).then_some(v as u32)
    }

    /// Retire a pending `recv`, writing the delivered value.
    pub fn complete_recv(&mut self, dest: FReg, value: f64) {
        self.fregs[dest.0 as usize] = value;
        self.status = Status::Running;
        self.retire();
    }

    /// Retire a pending collective with the reduced value.
    pub fn complete_collective(&mut self, kind: CollectiveKind, value: f64) {
        if let CollectiveKind::AllreduceSum { dest } = kind {
            self.fregs[dest.0 as usize] = value;
        }
        self.status = Status::Running;
        self.retire();
    }

    #[inline]
    fn float_op(
        &mut self,
        class: OpcodeClass,
        fd: FReg,
        result: f64,
        hook: &mut Option<&mut InjectionHook>,
    ) -> StepEvent {
        let count = &mut self.class_counters[class.index()];
        *count += 1;
        let mut value = result;
        if let Some(h) = hook {
            if h.class == class && h.k == *count {
                let original = result.to_bits();
                let corrupted =
                    apply_bitflip(original, h.bit).expect("hook bit validated at construction");
                h.fire_count += 1;
                h.fired = Some(HookFire {
                    pc: self.pc,
                    original_bits: original,
                    corrupted_bits: corrupted,
                });
                value = f64::from_bits(corrupted);
            }
        }
        self.fregs[fd.0 as usize] = value;
        self.retire();
        StepEvent::Retired
    }
}

/// Decode and retire one instruction, or turn it into a messaging request.
pub fn step(
    state: &mut VmState,
    program: &Program,
    mut hook: Option<&mut InjectionHook>,
) -> StepEvent {
    debug_assert_eq!(state.status, Status::Running);
    let Some(&instr) = program.instructions.get(state.pc.index()) else {
        return state.trap(TrapKind::OutOfBounds);
    };
    let ir = |s: &VmState, r: crate::isa::IReg| s.iregs[r.0 as usize];
    let fr = |s: &VmState, r: FReg| s.fregs[r.0 as usize];
    match instr {
        Instr::Add { rd, ra, rb } => {
            state.iregs[rd.0 as usize] = ir(state, ra).wrapping_add(ir(state, rb));
        }
        Instr::Sub { rd, ra, rb } => {
            state.iregs[rd.0 as usize] = ir(state, ra).wrapping_sub(ir(state, rb));
        }
        Instr::Mul { rd, ra, rb } => {
            state.iregs[rd.0 as usize] = ir(state, ra).wrapping_mul(ir(state, rb));
        }
        Instr::Div { rd, ra, rb } => {
            let d = ir(state, rb);
            if d == 0 {
                return state.trap(TrapKind::IntDivZero);
            }
            state.iregs[rd.0 as usize] = ir(state, ra).wrapping_div(d);
        }
        Instr::Addi { rd, ra, imm } => {
            state.iregs[rd.0 as usize] = ir(state, ra).wrapping_add(imm);
        }
        Instr::Ld { rd, addr } => {
            let Some(a) = state.address(addr) else {
                return state.trap(TrapKind::OutOfBounds);
            };
            state.iregs[rd.0 as usize] = state.mem[a] as i64;
        }
        Instr::St { rs, addr } => {
            let Some(a) = state.address(addr) else {
                return state.trap(TrapKind::OutOfBounds);
            };
            state.mem[a] = ir(state, rs) as u64;
        }
        Instr::Mov { rd, ra } => {
            state.iregs[rd.0 as usize] = ir(state, ra);
        }
        Instr::Li { rd, imm } => {
            state.iregs[rd.0 as usize] = imm;
        }
        Instr::Fadd { fd, fa, fb } => {
            let r = fr(state, fa) + fr(state, fb);
            return state.float_op(OpcodeClass::Fadd, fd, r, &mut hook);
        }
        Instr::Fmul { fd, fa, fb } => {
            let r = fr(state, fa) * fr(state, fb);
            return state.float_op(OpcodeClass::Fmul, fd, r, &mut hook);
        }
        Instr::Fsub { fd, fa, fb } => {
            let r = fr(state, fa) - fr(state, fb);
            return state.float_op(OpcodeClass::Fsub, fd, r, &mut hook);
        }
        Instr::Fdiv { fd, fa, fb } => {
            let r = fr(state, fa) / fr(state, fb);
            return state.float_op(OpcodeClass::Fdiv, fd, r, &mut hook);
        }
        Instr::Fld { fd, addr } => {
            let Some(a) = state.address(addr) else {
                return state.trap(TrapKind::OutOfBounds);
            };
            state.fregs[fd.0 as usize] = f64::from_bits(state.mem[a]);
        }
        Instr::Fst { fs, addr } => {
            let Some(a) = state.address(addr) else {
                return state.trap(TrapKind::OutOfBounds);
            };
            state.mem[a] = fr(state, fs).to_bits();
        }
        Instr::Fmovi { fd, bits } => {
            state.fregs[fd.0 as usize] = f64::from_bits(bits);
        }
        Instr::Beq { ra, rb, target } => {
            return branch(state, ir(state, ra) == ir(state, rb), target)
        }
        Instr::Bne { ra, rb, target } => {
            return branch(state, ir(state, ra) != ir(state, rb), target)
        }
        Instr::Blt { ra, rb, target } => {
            return branch(state, ir(state, ra) < ir(state, rb), target)
        }
        Instr::Bge { ra, rb, target } => {
            return branch(state, ir(state, ra) >= ir(state, rb), target)
        }
        Instr::Jmp { target } => return branch(state, true, target),
        Instr::Call { target } => {
            if state.call_stack.len() >= MAX_CALL_DEPTH {
                return state.trap(TrapKind::OutOfBounds);
            }
            state.call_stack.push(Pc(state.pc.0 + 1));
            return branch(state, true, target);
        }
        Instr::Ret => {
            let Some(ret) = state.call_stack.pop() else {
                return state.trap(TrapKind::OutOfBounds);
            };
            state.pc = ret;
            state.steps += 1;
            return StepEvent::Retired;
        }
        Instr::Halt => {
            state.steps += 1;
            state.status = Status::Halted;
            return StepEvent::Halted;
        }
        Instr::Send { dst, value } => {
            let Some(dst) = state.peer(dst) else {
                return state.trap(TrapKind::OutOfBounds);
            };
            let value = fr(state, value);
            state.retire();
            return StepEvent::WantsSend { dst, value };
        }
        Instr::Recv { fd, src } => {
            let Some(src) = state.peer(src) else {
                return state.trap(TrapKind::OutOfBounds);
            };
            return StepEvent::WantsRecv { src, dest: fd };
        }
        Instr::AllreduceSum { fd, fa } => {
            return StepEvent::WantsCollective {
                kind: CollectiveKind::AllreduceSum { dest: fd },
                value: fr(state, fa),
            };
        }
        Instr::Barrier => {
            return StepEvent::WantsCollective {
                kind: CollectiveKind::Barrier,
                value: 0.0,
            };
        }
        Instr::Rank { rd } => {
            state.iregs[rd.0 as usize] = state.rank as i64;
        }
        Instr::Nranks { rd } => {
            state.iregs[rd.0 as usize] = state.nranks as i64;
        }
    }
    state.retire();
    StepEvent::Retired
}

#[inline]
fn branch(state: &mut VmState, taken: bool, target: Pc) -> StepEvent {
    state.steps += 1;
    state.pc = if taken { target } else { Pc(state.pc.0 + 1) };
    StepEvent::Retired
}

#[derive(Clone, Debug, PartialEq)]
pub enum RankOutcome {
    Halted(Box<VmState>),
    Trapped { kind: TrapKind, pc: Pc },
    BudgetExceeded,
}

/// Run one rank alone. Collectives are the identity; point-to-point
/// messages have no peer and trap.
pub fn run_single(
    program: &Program,
    step_budget: u64,
    hook: Option<&mut InjectionHook>,
) -> RankOutcome {
    run_single_observed(program, step_budget, hook, |_| {})
}

/// As [`run_single`], calling `observe` with the pc of every instruction
/// before it executes.
pub fn run_single_observed(
    program: &Program,
    step_budget: u64,
    mut hook: Option<&mut InjectionHook>,
    mut observe: impl FnMut(Pc),
) -> RankOutcome {
    let mut state = VmState::new(program, 0, 1);
    if let Status::Trapped(kind) = state.status {
        return RankOutcome::Trapped { kind, pc: state.pc };
    }
    loop {
        if state.steps >= step_budget {
            return RankOutcome::BudgetExceeded;
        }
        let pc = state.pc;
        observe(pc);
        match step(&mut state, program, hook.as_deref_mut()) {
            StepEvent::Retired => {}
            StepEvent::Halted => return RankOutcome::Halted(Box::new(state)),
            StepEvent::Trapped(kind) => return RankOutcome::Trapped { kind, pc },
            StepEvent::WantsSend { .. } | StepEvent::WantsRecv { .. } => {
                state.status = Status::Trapped(TrapKind::OutOfBounds);
                return RankOutcome::Trapped {
                    kind: TrapKind::OutOfBounds,
                    pc,
                };
            }
            StepEvent::WantsCollective { kind, value } => state.complete_collective(kind, value),
        }
    }
}
