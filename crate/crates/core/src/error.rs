use thiserror::Error;

use crate::asm::AsmError;
use crate::mpsim::CrashKind;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Asm(#[from] AsmError),

    /// Invalid argument to an otherwise well-formed call.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// The fault-free run of a program did not complete.
    #[error("kernel defect: fault-free run crashed ({0})")]
    KernelDefect(CrashKind),

    #[error("no injection targets: no rank executes any {0} instruction")]
    NoTarget(crate::isa::OpcodeClass),

    /// A fault spec that lies outside the program's fault-free profile.
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("program has no .verify directive")]
    NoVerify,

    #[error("fault space of {size} sites exceeds the cap of {cap}")]
    SpaceTooLarge { size: u64, cap: u64 },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Format(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
