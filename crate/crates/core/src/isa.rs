//! Instruction set of the simulated rank.
//!
//! The ISA is deliberately small: a word-addressed load/store machine with 32
//! binary64 registers, 16 signed 64-bit integer registers, a call stack, and a
//! handful of message-passing instructions. Floating-point values never feed
//! addresses or branch conditions; there are no float compares or
//! float-to-integer conversions.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Number of floating-point registers.
pub const NUM_FREGS: usize = 32;
/// Number of integer registers.
pub const NUM_IREGS: usize = 16;

/// Program address: the 0-based index of an instruction. Serialized as a
/// `0x%08X` string.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pc(pub u32);

impl FromStr for Pc {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let hex = s
            .strip_prefix("0x")
            .or_else(|| s.strip_prefix("0X"))
            .ok_or_else(|| Error::Format(format!("pc `{s}` is not a 0x-prefixed hex literal")))?;
        u32::from_str_radix(hex, 16)
            .map(Pc)
            .map_err(|e| Error::Format(format!("pc `{s}`: {e}")))
    }
}

impl Serialize for Pc {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Pc {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl Pc {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for Pc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{:08X}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FReg(pub u8);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct IReg(pub u8);

impl fmt::Display for FReg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "f{}", self.0)
    }
}

impl fmt::Display for IReg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

/// Memory operand `[base+offset]`; `base` is absent for absolute addresses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MemRef {
    pub base: Option<IReg>,
    pub offset: i64,
}

impl fmt::Display for MemRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.base, self.offset) {
            (None, off) => write!(f, "[{off}]"),
            (Some(b), 0) => write!(f, "[{b}]"),
            (Some(b), off) if off < 0 => write!(f, "[{b}{off}]"),
            (Some(b), off) => write!(f, "[{b}+{off}]"),
        }
    }
}

/// Injectable floating-point instruction families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpcodeClass {
    Fadd,
    Fmul,
    Fsub,
    Fdiv,
}

impl OpcodeClass {
    pub const ALL: [OpcodeClass; 4] = [Self::Fadd, Self::Fmul, Self::Fsub, Self::Fdiv];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Fadd => "fadd",
            Self::Fmul => "fmul",
            Self::Fsub => "fsub",
            Self::Fdiv => "fdiv",
        }
    }
}

impl fmt::Display for OpcodeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OpcodeClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fadd" => Ok(Self::Fadd),
            "fmul" => Ok(Self::Fmul),
            "fsub" => Ok(Self::Fsub),
            "fdiv" => Ok(Self::Fdiv),
            other => Err(Error::Argument(format!("unknown opcode class `{other}`"))),
        }
    }
}

/// One decoded instruction. Branch and call targets are resolved program
/// addresses.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Instr {
    Add {
        rd: IReg,
        ra: IReg,
        rb: IReg,
    },
    Sub {
        rd: IReg,
        ra: IReg,
        rb: IReg,
    },
    Mul {
        rd: IReg,
        ra: IReg,
        rb: IReg,
    },
    Div {
        rd: IReg,
        ra: IReg,
        rb: IReg,
    },
    Addi {
        rd: IReg,
        ra: IReg,
        imm: i64,
    },
    Ld {
        rd: IReg,
        addr: MemRef,
    },
    St {
        rs: IReg,
        addr: MemRef,
    },
    Mov {
        rd: IReg,
        ra: IReg,
    },
    Li {
        rd: IReg,
        imm: i64,
    },

    Fadd {
        fd: FReg,
        fa: FReg,
        fb: FReg,
    },
    Fmul {
        fd: FReg,
        fa: FReg,
        fb: FReg,
    },
    Fsub {
        fd: FReg,
        fa: FReg,
        fb: FReg,
    },
    Fdiv {
        fd: FReg,
        fa: FReg,
        fb: FReg,
    },
    Fld {
        fd: FReg,
        addr: MemRef,
    },
    Fst {
        fs: FReg,
        addr: MemRef,
    },
    /// Load a binary64 immediate, kept as raw bits so NaN payloads survive.
    Fmovi {
        fd: FReg,
        bits: u64,
    },

    Beq {
        ra: IReg,
        rb: IReg,
        target: Pc,
    },
    Bne {
        ra: IReg,
        rb: IReg,
        target: Pc,
    },
    Blt {
        ra: IReg,
        rb: IReg,
        target: Pc,
    },
    Bge {
        ra: IReg,
        rb: IReg,
        target: Pc,
    },
    Jmp {
        target: Pc,
    },
    Call {
        target: Pc,
    },
    Ret,
    Halt,

    /// Send `value` to the rank held in `dst`.
    Send {
        dst: IReg,
        value: FReg,
    },
    /// Receive into `fd` from the rank held in `src`.
    Recv {
        fd: FReg,
        src: IReg,
    },
    AllreduceSum {
        fd: FReg,
        fa: FReg,
    },
    Barrier,
    Rank {
        rd: IReg,
    },
    Nranks {
        rd: IReg,
    },
}

impl Instr {
    pub fn mnemonic(&self) -> &'static str {
        match self {
            Instr::Add { .. } => "add",
            Instr::Sub { .. } => "sub",
            Instr::Mul { .. } => "mul",
            Instr::Div { .. } => "div",
            Instr::Addi { .. } => "addi",
            Instr::Ld { .. } => "ld",
            Instr::St { .. } => "st",
            Instr::Mov { .. } => "mov",
            Instr::Li { .. } => "li",
            Instr::Fadd { .. } => "fadd",
            Instr::Fmul { .. } => "fmul",
            Instr::Fsub { .. } => "fsub",
            Instr::Fdiv { .. } => "fdiv",
            Instr::Fld { .. } => "fld",
            Instr::Fst { .. } => "fst",
            Instr::Fmovi { .. } => "fmovi",
            Instr::Beq { .. } => "beq",
            Instr::Bne { .. } => "bne",
            Instr::Blt { .. } => "blt",
            Instr::Bge { .. } => "bge",
            Instr::Jmp { .. } => "jmp",
            Instr::Call { .. } => "call",
            Instr::Ret => "ret",
            Instr::Halt => "halt",
            Instr::Send { .. } => "send",
            Instr::Recv { .. } => "recv",
            Instr::AllreduceSum { .. } => "allreduce_sum",
            Instr::Barrier => "barrier",
            Instr::Rank { .. } => "rank",
            Instr::Nranks { .. } => "nranks",
        }
    }

    /// The injectable class of this instruction, if any.
    pub fn class(&self) -> Option<OpcodeClass> {
        match self {
            Instr::Fadd { .. } => Some(OpcodeClass::Fadd),
            Instr::Fmul { .. } => Some(OpcodeClass::Fmul),
            Instr::Fsub { .. } => Some(OpcodeClass::Fsub),
            Instr::Fdiv { .. } => Some(OpcodeClass::Fdiv),
            _ => None,
        }
    }

    /// Control-flow target, if the instruction has one.
    pub fn target(&self) -> Option<Pc> {
        match *self {
            Instr::Beq { target, .. }
            | Instr::Bne { target, .. }
            | Instr::Blt { target, .. }
            | Instr::Bge { target, .. }
            | Instr::Jmp { target }
            | Instr::Call { target } => Some(target),
            _ => None,
        }
    }

    /// Operands rendered in assembler syntax, branch targets as hex pcs.
    pub fn operands(&self) -> String {
        match *self {
            Instr::Add { rd, ra, rb }
            | Instr::Sub { rd, ra, rb }
            | Instr::Mul { rd, ra, rb }
            | Instr::Div { rd, ra, rb } => format!("{rd}, {ra}, {rb}"),
            Instr::Addi { rd, ra, imm } => format!("{rd}, {ra}, {imm}"),
            Instr::Ld { rd, addr } => format!("{rd}, {addr}"),
            Instr::St { rs, addr } => format!("{rs}, {addr}"),
            Instr::Mov { rd, ra } => format!("{rd}, {ra}"),
            Instr::Li { rd, imm } => format!("{rd}, {imm}"),
            Instr::Fadd { fd, fa, fb }
            | Instr::Fmul { fd, fa, fb }
            | Instr::Fsub { fd, fa, fb }
            | Instr::Fdiv { fd, fa, fb } => format!("{fd}, {fa}, {fb}"),
            Instr::Fld { fd, addr } => format!("{fd}, {addr}"),
            Instr::Fst { fs, addr } => format!("{fs}, {addr}"),
            Instr::Fmovi { fd, bits } => format!("{fd}, {}", format_float_imm(bits)),
            Instr::Beq { ra, rb, target }
            | Instr::Bne { ra, rb, target }
            | Instr::Blt { ra, rb, target }
            | Instr::Bge { ra, rb, target } => format!("{ra}, {rb}, {target}"),
            Instr::Jmp { target } | Instr::Call { target } => target.to_string(),
            Instr::Ret | Instr::Halt | Instr::Barrier => String::new(),
            Instr::Send { dst, value } => format!("{dst}, {value}"),
            Instr::Recv { fd, src } => format!("{fd}, {src}"),
            Instr::AllreduceSum { fd, fa } => format!("{fd}, {fa}"),
            Instr::Rank { rd } | Instr::Nranks { rd } => rd.to_string(),
        }
    }
}

/// Finite values print in shortest round-trip decimal; everything else as
/// raw bits so the text re-assembles to the same pattern.
pub fn format_float_imm(bits: u64) -> String {
    let v = f64::from_bits(bits);
    if v.is_finite() {
        format!("{v:?}")
    } else {
        format!("0x{bits:016X}")
    }
}

/// Flip bit `bit` (0 = mantissa LSB, 63 = sign) of a binary64 pattern.
pub fn apply_bitflip(bits: u64, bit: u32) -> Result<u64, Error> {
    if bit > 63 {
        return Err(Error::Argument(format!(
            "bit index {bit} out of range 0..=63"
        )));
    }
    Ok(bits ^ (1u64 << bit))
}
