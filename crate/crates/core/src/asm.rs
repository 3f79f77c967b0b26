//! Assembler for the `.fasm` text format.
//!
//! The grammar is line oriented. Everything after `;` is a comment. A line may
//! start with `label:`, and may then carry one instruction or one directive:
//!
//! ```text
//! .mem    <words>                      memory size in 64-bit words
//! .data   <addr> <word>...             initial memory image
//! .loc    <file> <line>                source location of following instructions
//! .verify <freg> <golden|AUTO> <eps>   verification register and tolerance
//! .entry  <label>                      entry point (default pc 0)
//! .nranks <n>                          preferred rank count for parallel runs
//! ```
//!
//! Lines produced by [`format_listing`] are accepted as well: a leading hex
//! address is ignored and a trailing `file:line` token acts as a `.loc` for
//! that single instruction.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::isa::{FReg, IReg, Instr, MemRef, Pc, NUM_FREGS, NUM_IREGS};

/// Memory size used when a program has no `.mem` directive.
pub const DEFAULT_MEM_WORDS: usize = 4096;

const MAX_MEM_WORDS: usize = 1 << 24;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SourceLoc {
    pub file: String,
    pub line: u32,
}

impl fmt::Display for SourceLoc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.file, self.line)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Golden {
    /// Use the fault-free run's value.
    Auto,
    Value(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VerifySpec {
    pub register: FReg,
    pub golden: Golden,
    /// Relative tolerance of the verification phase.
    pub epsilon: f64,
}

/// An assembled program: code, initial memory image, and debug table.
#[derive(Clone, Debug, PartialEq)]
pub struct Program {
    /// Name used for default source locations.
    pub name: String,
    pub instructions: Vec<Instr>,
    pub data: BTreeMap<u64, u64>,
    pub mem_words: usize,
    pub entry: Pc,
    /// One entry per instruction.
    pub debug: Vec<SourceLoc>,
    pub labels: BTreeMap<String, Pc>,
    pub nranks_default: u32,
    pub verify: Option<VerifySpec>,
}

impl Program {
    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    pub fn label(&self, name: &str) -> Option<Pc> {
        self.labels.get(name).copied()
    }

    /// Initial memory image of one rank.
    pub fn initial_memory(&self) -> Vec<u64> {
        let mut mem = vec![0u64; self.mem_words];
        for (&addr, &word) in &self.data {
            mem[addr as usize] = word;
        }
        mem
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("line {line}: {kind}")]
pub struct AsmError {
    pub line: usize,
    pub kind: AsmErrorKind,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum AsmErrorKind {
    #[error("unknown mnemonic `{0}`")]
    UnknownMnemonic(String),
    #[error("`{mnemonic}` takes {expected} operand(s), found {found}")]
    Arity {
        mnemonic: String,
        expected: usize,
        found: usize,
    },
    #[error("bad operand `{0}`: {1}")]
    BadOperand(String, &'static str),
    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),
    #[error("undefined label `{0}`")]
    UndefinedLabel(String),
    #[error("target {0} is outside the program")]
    TargetOutOfRange(String),
    #[error("duplicate .verify directive")]
    DuplicateVerify,
    #[error("unknown directive `{0}`")]
    UnknownDirective(String),
    #[error("malformed directive: {0}")]
    BadDirective(String),
    #[error("data address {0} is outside memory of {1} words")]
    DataOutOfRange(u64, usize),
}

fn err(line: usize, kind: AsmErrorKind) -> AsmError {
    AsmError { line, kind }
}

/// Assemble `source`, naming it `<source>` in default source locations.
pub fn assemble(source: &str) -> Result<Program, AsmError> {
    assemble_named("<source>", source)
}

/// Assemble `source`; instructions without a `.loc` are attributed to
/// `name` at their physical line.
pub fn assemble_named(name: &str, source: &str) -> Result<Program, AsmError> {
    Assembler::new(name).run(source)
}

enum Target {
    Resolved(Pc),
    Label(String),
}

struct Fixup {
    pc: usize,
    label: String,
    line: usize,
}

struct Assembler {
    name: String,
    instructions: Vec<Instr>,
    debug: Vec<SourceLoc>,
    labels: BTreeMap<String, Pc>,
    fixups: Vec<Fixup>,
    data: BTreeMap<u64, u64>,
    data_lines: Vec<(u64, usize)>,
    mem_words: Option<usize>,
    loc: Option<SourceLoc>,
    verify: Option<VerifySpec>,
    entry: Option<(String, usize)>,
    nranks_default: u32,
}

impl Assembler {
    fn new(name: &str) -> Self {
        Assembler {
            name: name.to_string(),
            instructions: Vec::new(),
            debug: Vec::new(),
            labels: BTreeMap::new(),
            fixups: Vec::new(),
            data: BTreeMap::new(),
            data_lines: Vec::new(),
            mem_words: None,
            loc: None,
            verify: None,
            entry: None,
            nranks_default: 1,
        }
    }

    fn run(mut self, source: &str) -> Result<Program, AsmError> {
        for (idx, raw) in source.lines().enumerate() {
            self.line(idx + 1, raw)?;
        }
        self.finish()
    }

    fn line(&mut self, lineno: usize, raw: &str) -> Result<(), AsmError> {
        let mut text = raw.split(';').next().unwrap_or("").trim();
        if text.is_empty() {
            return Ok(());
        }

        // Listing form: `0x0000001F  mnemonic ops  file:line`.
        let mut listing_loc = None;
        if let Some((first, rest)) = split_first_token(text) {
            if is_hex_literal(first) && !rest.is_empty() {
                text = rest;
                if let Some((body, last)) = text.rsplit_once(char::is_whitespace) {
                    if let Some(loc) = parse_loc_token(last) {
                        listing_loc = Some(loc);
                        text = body.trim_end();
                    }
                } else if let Some(loc) = parse_loc_token(text) {
                    return Err(err(
                        lineno,
                        AsmErrorKind::BadOperand(loc.to_string(), "missing mnemonic"),
                    ));
                }
            }
        }

        if let Some((label, rest)) = split_label(text) {
            let pc = Pc(self.instructions.len() as u32);
            if self.labels.insert(label.to_string(), pc).is_some() {
                return Err(err(lineno, AsmErrorKind::DuplicateLabel(label.to_string())));
            }
            text = rest.trim();
            if text.is_empty() {
                return Ok(());
            }
        }

        if text.starts_with('.') {
            return self.directive(lineno, text);
        }

        let (mnemonic, ops) = match split_first_token(text) {
            Some((m, rest)) => (m, rest),
            None => (text, ""),
        };
        let operands: Vec<&str> = if ops.trim().is_empty() {
            Vec::new()
        } else {
            ops.split(',').map(str::trim).collect()
        };
        let instr = self.instruction(lineno, mnemonic, &operands)?;
        let loc = listing_loc
            .or_else(|| self.loc.clone())
            .unwrap_or_else(|| SourceLoc {
                file: self.name.clone(),
                line: lineno as u32,
            });
        self.instructions.push(instr);
        self.debug.push(loc);
        Ok(())
    }

    fn directive(&mut self, lineno: usize, text: &str) -> Result<(), AsmError> {
        let mut parts = text.split_whitespace();
        let name = parts.next().unwrap_or_default();
        let args: Vec<&str> = parts.collect();
        let bad = |msg: &str| err(lineno, AsmErrorKind::BadDirective(format!("{name}: {msg}")));
        match name {
            ".loc" => {
                let [file, line] = args[..] else {
                    return Err(bad("expected <file> <line>"));
                };
                let line: u32 = line
                    .parse()
                    .map_err(|_| bad("line must be a positive integer"))?;
                if line == 0 {
                    return Err(bad("line must be >= 1"));
                }
                self.loc = Some(SourceLoc {
                    file: file.to_string(),
                    line,
                });
            }
            ".mem" => {
                let [words] = args[..] else {
                    return Err(bad("expected <words>"));
                };
                let words = parse_int(words)
                    .filter(|&w| w > 0 && (w as usize) <= MAX_MEM_WORDS)
                    .ok_or_else(|| bad("size must be in 1..=2^24"))?;
                self.mem_words = Some(words as usize);
            }
            ".data" => {
                let Some((addr, words)) = args.split_first() else {
                    return Err(bad("expected <addr> <word>..."));
                };
                let addr = parse_int(addr)
                    .filter(|&a| a >= 0)
                    .ok_or_else(|| bad("address must be a non-negative integer"))?
                    as u64;
                for (i, w) in words.iter().enumerate() {
                    let word = parse_data_word(w).ok_or_else(|| {
                        err(
                            lineno,
                            AsmErrorKind::BadOperand(w.to_string(), "expected data word"),
                        )
                    })?;
                    self.data.insert(addr + i as u64, word);
                }
                if !words.is_empty() {
                    self.data_lines
                        .push((addr + words.len() as u64 - 1, lineno));
                }
            }
            ".verify" => {
                if self.verify.is_some() {
                    return Err(err(lineno, AsmErrorKind::DuplicateVerify));
                }
                let [reg, golden, eps] = args[..] else {
                    return Err(bad("expected <freg> <golden|AUTO> <eps>"));
                };
                let register = parse_freg(reg).ok_or_else(|| bad("expected a float register"))?;
                let golden = if golden.eq_ignore_ascii_case("auto") {
                    Golden::Auto
                } else {
                    Golden::Value(
                        parse_float_imm(golden)
                            .map(f64::from_bits)
                            .ok_or_else(|| bad("golden must be AUTO or a number"))?,
                    )
                };
                let epsilon: f64 = eps.parse().map_err(|_| bad("epsilon must be a number"))?;
                if !(epsilon > 0.0 && epsilon < 1.0) {
                    return Err(bad("epsilon must lie in (0, 1)"));
                }
                self.verify = Some(VerifySpec {
                    register,
                    golden,
                    epsilon,
                });
            }
            ".entry" => {
                let [label] = args[..] else {
                    return Err(bad("expected <label>"));
                };
                self.entry = Some((label.to_string(), lineno));
            }
            ".nranks" => {
                let [n] = args[..] else {
                    return Err(bad("expected <count>"));
                };
                self.nranks_default = parse_int(n)
                    .filter(|&n| n >= 1 && n <= u32::MAX as i64)
                    .ok_or_else(|| bad("count must be >= 1"))?
                    as u32;
            }
            other => {
                return Err(err(
                    lineno,
                    AsmErrorKind::UnknownDirective(other.to_string()),
                ))
            }
        }
        Ok(())
    }

    fn instruction(
        &mut self,
        lineno: usize,
        mnemonic: &str,
        ops: &[&str],
    ) -> Result<Instr, AsmError> {
        let arity = match mnemonic {
            "add" | "sub" | "mul" | "div" | "addi" | "fadd" | "fmul" | "fsub" | "fdiv" | "beq"
            | "bne" | "blt" | "bge" => 3,
            "ld" | "st" | "mov" | "li" | "fld" | "fst" | "fmovi" | "send" | "recv"
            | "allreduce_sum" => 2,
            "jmp" | "call" | "rank" | "nranks" => 1,
            "ret" | "halt" | "barrier" => 0,
            _ => {
                return Err(err(
                    lineno,
                    AsmErrorKind::UnknownMnemonic(mnemonic.to_string()),
                ))
            }
        };
        if ops.len() != arity {
            return Err(err(
                lineno,
                AsmErrorKind::Arity {
                    mnemonic: mnemonic.to_string(),
                    expected: arity,
                    found: ops.len(),
                },
            ));
        }
        let ireg = |s: &str| {
            parse_ireg(s).ok_or_else(|| {
                err(
                    lineno,
                    AsmErrorKind::BadOperand(s.into(), "expected r0-r15"),
                )
            })
        };
        let freg = |s: &str| {
            parse_freg(s).ok_or_else(|| {
                err(
                    lineno,
                    AsmErrorKind::BadOperand(s.into(), "expected f0-f31"),
                )
            })
        };
        let int = |s: &str| {
            parse_int(s).ok_or_else(|| {
                err(
                    lineno,
                    AsmErrorKind::BadOperand(s.into(), "expected integer"),
                )
            })
        };
        let mem = |s: &str| {
            parse_mem(s).ok_or_else(|| {
                err(
                    lineno,
                    AsmErrorKind::BadOperand(s.into(), "expected [reg+offset]"),
                )
            })
        };
        let target = |s: &str| {
            parse_target(s).ok_or_else(|| {
                err(
                    lineno,
                    AsmErrorKind::BadOperand(s.into(), "expected label or pc"),
                )
            })
        };

        let pc = self.instructions.len();
        let mut resolve = |t: Target| -> Pc {
            match t {
                Target::Resolved(pc) => pc,
                Target::Label(label) => {
                    self.fixups.push(Fixup {
                        pc,
                        label,
                        line: lineno,
                    });
                    Pc(u32::MAX)
                }
            }
        };

        let instr = match mnemonic {
            "add" => Instr::Add {
                rd: ireg(ops[0])?,
                ra: ireg(ops[1])?,
                rb: ireg(ops[2])?,
            },
            "sub" => Instr::Sub {
                rd: ireg(ops[0])?,
                ra: ireg(ops[1])?,
                rb: ireg(ops[2])?,
            },
            "mul" => Instr::Mul {
                rd: ireg(ops[0])?,
                ra: ireg(ops[1])?,
                rb: ireg(ops[2])?,
            },
            "div" => Instr::Div {
                rd: ireg(ops[0])?,
                ra: ireg(ops[1])?,
                rb: ireg(ops[2])?,
            },
            "addi" => Instr::Addi {
                rd: ireg(ops[0])?,
                ra: ireg(ops[1])?,
                imm: int(ops[2])?,
            },
            "ld" => Instr::Ld {
                rd: ireg(ops[0])?,
                addr: mem(ops[1])?,
            },
            "st" => Instr::St {
                rs: ireg(ops[0])?,
                addr: mem(ops[1])?,
            },
            "mov" => Instr::Mov {
                rd: ireg(ops[0])?,
                ra: ireg(ops[1])?,
            },
            "li" => Instr::Li {
                rd: ireg(ops[0])?,
                imm: int(ops[1])?,
            },
            "fadd" => Instr::Fadd {
                fd: freg(ops[0])?,
                fa: freg(ops[1])?,
                fb: freg(ops[2])?,
            },
            "fmul" => Instr::Fmul {
                fd: freg(ops[0])?,
                fa: freg(ops[1])?,
                fb: freg(ops[2])?,
            },
            "fsub" => Instr::Fsub {
                fd: freg(ops[0])?,
                fa: freg(ops[1])?,
                fb: freg(ops[2])?,
            },
            "fdiv" => Instr::Fdiv {
                fd: freg(ops[0])?,
                fa: freg(ops[1])?,
                fb: freg(ops[2])?,
            },
            "fld" => Instr::Fld {
                fd: freg(ops[0])?,
                addr: mem(ops[1])?,
            },
            "fst" => Instr::Fst {
                fs: freg(ops[0])?,
                addr: mem(ops[1])?,
            },
            "fmovi" => Instr::Fmovi {
                fd: freg(ops[0])?,
                bits: parse_float_imm(ops[1]).ok_or_else(|| {
                    err(
                        lineno,
                        AsmErrorKind::BadOperand(ops[1].into(), "expected float immediate"),
                    )
                })?,
            },
            "beq" => Instr::Beq {
                ra: ireg(ops[0])?,
                rb: ireg(ops[1])?,
                target: resolve(target(ops[2])?),
            },
            "bne" => Instr::Bne {
                ra: ireg(ops[0])?,
                rb: ireg(ops[1])?,
                target: resolve(target(ops[2])?),
            },
            "blt" => Instr::Blt {
                ra: ireg(ops[0])?,
                rb: ireg(ops[1])?,
                target: resolve(target(ops[2])?),
            },
            "bge" => Instr::Bge {
                ra: ireg(ops[0])?,
                rb: ireg(ops[1])?,
                target: resolve(target(ops[2])?),
            },
            "jmp" => Instr::Jmp {
                target: resolve(target(ops[0])?),
            },
            "call" => Instr::Call {
                target: resolve(target(ops[0])?),
            },
            "ret" => Instr::Ret,
            "halt" => Instr::Halt,
            "send" => Instr::Send {
                dst: ireg(ops[0])?,
                value: freg(ops[1])?,
            },
            "recv" => Instr::Recv {
                fd: freg(ops[0])?,
                src: ireg(ops[1])?,
            },
            "allreduce_sum" => Instr::AllreduceSum {
                fd: freg(ops[0])?,
                fa: freg(ops[1])?,
            },
            "barrier" => Instr::Barrier,
            "rank" => Instr::Rank { rd: ireg(ops[0])? },
            "nranks" => Instr::Nranks { rd: ireg(ops[0])? },
            _ => unreachable!("arity table covers every mnemonic"),
        };
        Ok(instr)
    }

    fn finish(mut self) -> Result<Program, AsmError> {
        let len = self.instructions.len();
        for fix in std::mem::take(&mut self.fixups) {
            let pc = *self
                .labels
                .get(&fix.label)
                .ok_or_else(|| err(fix.line, AsmErrorKind::UndefinedLabel(fix.label.clone())))?;
            set_target(&mut self.instructions[fix.pc], pc);
        }
        // Every target, including numeric ones, must name an instruction.
        for (pc, instr) in self.instructions.iter().enumerate() {
            if let Some(t) = instr.target() {
                if t.index() >= len {
                    let line = self.line_of(pc);
                    return Err(err(line, AsmErrorKind::TargetOutOfRange(t.to_string())));
                }
            }
        }

        let mem_words = self.mem_words.unwrap_or(DEFAULT_MEM_WORDS);
        for &(last, line) in &self.data_lines {
            if last >= mem_words as u64 {
                return Err(err(line, AsmErrorKind::DataOutOfRange(last, mem_words)));
            }
        }

        let entry = match &self.entry {
            None => Pc(0),
            Some((label, line)) => {
                let pc = *self
                    .labels
                    .get(label)
                    .ok_or_else(|| err(*line, AsmErrorKind::UndefinedLabel(label.clone())))?;
                if pc.index() >= len {
                    return Err(err(*line, AsmErrorKind::TargetOutOfRange(label.clone())));
                }
                pc
            }
        };

        Ok(Program {
            name: self.name,
            instructions: self.instructions,
            data: self.data,
            mem_words,
            entry,
            debug: self.debug,
            labels: self.labels,
            nranks_default: self.nranks_default,
            verify: self.verify,
        })
    }

    fn line_of(&self, pc: usize) -> usize {
        // Only used for diagnostics on numeric targets; the debug table may
        // point at a `.loc` file, in which case fall back to the pc itself.
        match &self.debug[pc] {
            loc if loc.file == self.name => loc.line as usize,
            _ => pc + 1,
        }
    }
}

fn set_target(instr: &mut Instr, pc: Pc) {
    match instr {
        Instr::Beq { target, .. }
        | Instr::Bne { target, .. }
        | Instr::Blt { target, .. }
        | Instr::Bge { target, .. }
        | Instr::Jmp { target }
        | Instr::Call { target } => *target = pc,
        _ => unreachable!("fixups are only recorded for control-flow instructions"),
    }
}

fn split_first_token(text: &str) -> Option<(&str, &str)> {
    let text = text.trim_start();
    let end = text.find(char::is_whitespace)?;
    Some((&text[..end], text[end..].trim_start()))
}

fn split_label(text: &str) -> Option<(&str, &str)> {
    let mut chars = text.char_indices();
    let (_, first) = chars.next()?;
    if !(first.is_ascii_alphabetic() || first == '_') {
        return None;
    }
    for (i, c) in chars {
        if c == ':' {
            return Some((&text[..i], &text[i + 1..]));
        }
        if !(c.is_ascii_alphanumeric() || c == '_' || c == '.') {
            return None;
        }
    }
    None
}

fn is_hex_literal(s: &str) -> bool {
    s.strip_prefix("0x")
        .or_else(|| s.strip_prefix("0X"))
        .is_some_and(|h| !h.is_empty() && h.chars().all(|c| c.is_ascii_hexdigit()))
}

fn parse_loc_token(tok: &str) -> Option<SourceLoc> {
    let (file, line) = tok.rsplit_once(':')?;
    if file.is_empty() {
        return None;
    }
    let line: u32 = line.parse().ok()?;
    (line >= 1).then(|| SourceLoc {
        file: file.to_string(),
        line,
    })
}

fn parse_reg(s: &str, prefix: char, count: usize) -> Option<u8> {
    let rest = s.strip_prefix(prefix)?;
    if rest.is_empty() || (rest.len() > 1 && rest.starts_with('0')) {
        return None;
    }
    let n: usize = rest.parse().ok()?;
    (n < count).then_some(n as u8)
}

fn parse_freg(s: &str) -> Option<FReg> {
    parse_reg(s, 'f', NUM_FREGS).map(FReg)
}

fn parse_ireg(s: &str) -> Option<IReg> {
    parse_reg(s, 'r', NUM_IREGS).map(IReg)
}

fn parse_int(s: &str) -> Option<i64> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(b) => (true, b),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let magnitude = if let Some(hex) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        u64::from_str_radix(hex, 16).ok()? as i64
    } else {
        if body.is_empty() || !body.chars().all(|c| c.is_ascii_digit()) {
            return None;
        }
        body.parse::<i64>().ok()?
    };
    Some(if neg {
        magnitude.wrapping_neg()
    } else {
        magnitude
    })
}

fn looks_like_float(s: &str) -> bool {
    let lower = s.to_ascii_lowercase();
    let body = lower.trim_start_matches(['+', '-']);
    body == "inf" || body == "infinity" || body == "nan" || body.contains('.') || body.contains('e')
}

/// Float immediate: decimal, `inf`/`nan`, or `0x...` raw bits.
fn parse_float_imm(s: &str) -> Option<u64> {
    if let Some(hex) = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        return u64::from_str_radix(hex, 16).ok();
    }
    if s.is_empty() || s.chars().any(|c| c.is_whitespace()) {
        return None;
    }
    s.parse::<f64>().ok().map(f64::to_bits)
}

/// `.data` word: raw `0x` bits, a float (has `.`, `e`, inf or nan), or an integer.
fn parse_data_word(s: &str) -> Option<u64> {
    if is_hex_literal(s) {
        return parse_float_imm(s);
    }
    if looks_like_float(s) {
        parse_float_imm(s)
    } else {
        parse_int(s).map(|v| v as u64)
    }
}

fn parse_mem(s: &str) -> Option<MemRef> {
    let inner = s.strip_prefix('[')?.strip_suffix(']')?.trim();
    if inner.is_empty() {
        return None;
    }
    let split = inner
        .char_indices()
        .skip(1)
        .find(|&(_, c)| c == '+' || c == '-')
        .map(|(i, _)| i);
    let (head, tail) = match split {
        Some(i) => (inner[..i].trim(), Some(inner[i..].trim())),
        None => (inner, None),
    };
    match parse_ireg(head) {
        Some(base) => {
            let offset = match tail {
                None => 0,
                Some(t) => {
                    let (sign, num) = t.split_at(1);
                    let v = parse_int(num.trim())?;
                    if sign == "-" {
                        v.wrapping_neg()
                    } else {
                        v
                    }
                }
            };
            Some(MemRef {
                base: Some(base),
                offset,
            })
        }
        None if tail.is_none() => Some(MemRef {
            base: None,
            offset: parse_int(head)?,
        }),
        None => None,
    }
}

fn parse_target(s: &str) -> Option<Target> {
    if is_hex_literal(s) {
        let v = u64::from_str_radix(&s[2..], 16).ok()?;
        return Some(Target::Resolved(Pc(u32::try_from(v).ok()?)));
    }
    let mut chars = s.chars();
    let first = chars.next()?;
    if (first.is_ascii_alphabetic() || first == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
    {
        Some(Target::Label(s.to_string()))
    } else {
        None
    }
}

/// One line per instruction: hex pc, mnemonic, operands, source location.
pub fn format_listing(program: &Program) -> String {
    let mut out = String::new();
    for (pc, (instr, loc)) in program.instructions.iter().zip(&program.debug).enumerate() {
        let ops = instr.operands();
        let head = format!("{}  {:<7} ", Pc(pc as u32), instr.mnemonic());
        if ops.is_empty() {
            out.push_str(&format!("{head}{loc}\n"));
        } else {
            out.push_str(&format!("{head}{ops}  {loc}\n"));
        }
    }
    out
}
