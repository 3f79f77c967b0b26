//! Instruction-level soft-error injection for a small message-passing VM.
//!
//! Programs are written in a compact assembly, executed on one or more
//! simulated ranks, and subjected to single-bit flips in the results of
//! floating-point instructions. Campaigns classify each run as benign,
//! silent data corruption, or crash, and the analysis layer compares
//! where the faults landed across serial and parallel execution.

pub mod analysis;
pub mod asm;
pub mod bundle;
pub mod campaign;
pub mod error;
pub mod injector;
pub mod isa;
pub mod kernels;
pub mod mpsim;
pub mod serde_bits;
pub mod vm;

pub use asm::{assemble, assemble_named, format_listing, Program, SourceLoc};
pub use campaign::{
    run_campaign, run_exhaustive, CampaignConfig, CampaignResult, Mode, OutcomeClass,
};
pub use error::{Error, Result};
pub use isa::{apply_bitflip, OpcodeClass, Pc};
pub use kernels::{build_kernel, KernelParams, KernelSpec};
