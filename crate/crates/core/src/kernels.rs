//! The bundled benchmark kernels.
//!
//! | name | computation | FADD structure |
//! |------|-------------|----------------|
//! | `cg` | conjugate gradient, five-point Laplacian, row blocks per rank | one matvec accumulate dominates; a partial-sum combine runs only when `nranks > 1` |
//! | `ft` | 64-point complex FFT over 4 batches, batches dealt to ranks | identical per-batch code in every mode |
//! | `bt` | block tridiagonal solves, 5x5 blocks, lines dealt to ranks | spread over fifteen unrolled sites |
//!
//! Floating-point values never reach an address, a loop bound, or a branch,
//! so a flipped result bit cannot trap or hang any of them.

use std::ops::Range;

use crate::asm::{assemble_named, Program};
use crate::error::{Error, Result};
use crate::isa::Pc;

pub const NAMES: [&str; 3] = ["cg", "ft", "bt"];

const CG_SRC: &str = include_str!("../kernels/cg.fasm");
const FT_SRC: &str = include_str!("../kernels/ft.fasm");
const BT_SRC: &str = include_str!("../kernels/bt.fasm");

/// Problem-size overrides. `None` keeps the kernel default.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct KernelParams {
    /// Grid side for `cg` (matrix order side^2). Fixed for `ft` and `bt`.
    pub size: Option<u32>,
    pub iterations: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KernelSpec {
    pub name: &'static str,
    pub source: &'static str,
    pub size: u32,
    pub iterations: u32,
    /// Pcs expected to dominate the FADD profile.
    pub dominant_pcs: Vec<Pc>,
    /// Half-open pc ranges executed only when `nranks > 1`.
    pub guarded_ranges: Vec<Range<u32>>,
}

impl KernelSpec {
    pub fn is_guarded(&self, pc: Pc) -> bool {
        self.guarded_ranges.iter().any(|r| r.contains(&pc.0))
    }
}

struct Layout {
    source: &'static str,
    default_size: u32,
    sizes: Range<u32>,
    default_iterations: u32,
    iterations: Range<u32>,
    /// Header words holding (size, iterations); size is absent when fixed.
    size_word: Option<u64>,
    iterations_word: u64,
    dominant: &'static [&'static str],
}

fn layout(name: &str) -> Result<(&'static str, Layout)> {
    Ok(match name {
        "cg" => (
            "cg",
            Layout {
                source: CG_SRC,
                default_size: 16,
                sizes: 4..33,
                default_iterations: 15,
                iterations: 1..101,
                size_word: Some(0),
                iterations_word: 1,
                dominant: &["matvec_acc"],
            },
        ),
        "ft" => (
            "ft",
            Layout {
                source: FT_SRC,
                default_size: 64,
                sizes: 64..65,
                default_iterations: 2,
                iterations: 1..21,
                size_word: None,
                iterations_word: 0,
                dominant: &["bfly_ti", "bfly_re", "bfly_im"],
            },
        ),
        "bt" => (
            "bt",
            Layout {
                source: BT_SRC,
                default_size: 4,
                sizes: 4..5,
                default_iterations: 2,
                iterations: 1..21,
                size_word: None,
                iterations_word: 0,
                dominant: &[],
            },
        ),
        other => {
            return Err(Error::Argument(format!(
                "unknown kernel `{other}` (expected one of cg, ft, bt)"
            )));
        }
    })
}

fn check(what: &str, v: u32, range: &Range<u32>) -> Result<()> {
    if range.contains(&v) {
        Ok(())
    } else {
        Err(Error::Argument(format!(
            "{what} {v} outside {}..={}",
            range.start,
            range.end - 1
        )))
    }
}

/// Label pairs `<x>_guard_begin` / `<x>_guard_end` delimit code reachable
/// only in multi-rank runs.
fn guarded_ranges(program: &Program) -> Vec<Range<u32>> {
    program
        .labels
        .iter()
        .filter_map(|(name, begin)| {
            let stem = name.strip_suffix("_guard_begin")?;
            let end = program.label(&format!("{stem}_guard_end"))?;
            Some(begin.0..end.0)
        })
        .collect()
}

pub fn build_kernel(name: &str, params: KernelParams) -> Result<(Program, KernelSpec)> {
    let (name, l) = layout(name)?;
    let size = params.size.unwrap_or(l.default_size);
    let iterations = params.iterations.unwrap_or(l.default_iterations);
    check("size", size, &l.sizes)?;
    check("iterations", iterations, &l.iterations)?;

    let mut program =
        assemble_named(&format!("{name}.fasm"), l.source).expect("bundled kernel assembles");
    if let Some(w) = l.size_word {
        program.data.insert(w, u64::from(size));
    }
    program
        .data
        .insert(l.iterations_word, u64::from(iterations));

    let dominant_pcs = l
        .dominant
        .iter()
        .map(|lbl| program.label(lbl).expect("dominant label exists"))
        .collect();
    let spec = KernelSpec {
        name,
        source: l.source,
        size,
        iterations,
        dominant_pcs,
        guarded_ranges: guarded_ranges(&program),
    };
    Ok((program, spec))
}

/// The pseudo-source file a kernel's `.loc` lines refer to.
pub fn listing_source(name: &str) -> Option<&'static str> {
    match name {
        "cg" => Some(include_str!("../kernels/cg.f")),
        "ft" => Some(include_str!("../kernels/ft.f")),
        "bt" => Some(include_str!("../kernels/bt.f")),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_kernels_assemble() {
        for name in NAMES {
            let (p, spec) = build_kernel(name, KernelParams::default()).unwrap();
            assert!(p.verify.is_some(), "{name}");
            assert_eq!(p.nranks_default, 4);
            assert!(listing_source(name).is_some());
            assert_eq!(spec.name, name);
        }
    }

    #[test]
    fn cg_guards() {
        let (p, spec) = build_kernel("cg", KernelParams::default()).unwrap();
        assert_eq!(spec.guarded_ranges.len(), 2);
        let combine = p.label("combine_acc").unwrap();
        assert!(spec.is_guarded(combine));
        assert!(!spec.is_guarded(p.label("matvec_acc").unwrap()));
        assert_eq!(spec.dominant_pcs, vec![p.label("matvec_acc").unwrap()]);
    }

    #[test]
    fn parameter_ranges() {
        assert!(build_kernel("mg", KernelParams::default()).is_err());
        assert!(build_kernel(
            "cg",
            KernelParams {
                size: Some(3),
                iterations: None
            }
        )
        .is_err());
        assert!(build_kernel(
            "cg",
            KernelParams {
                size: Some(33),
                iterations: None
            }
        )
        .is_err());
        assert!(build_kernel(
            "ft",
            KernelParams {
                size: Some(128),
                iterations: None
            }
        )
        .is_err());
        assert!(build_kernel(
            "bt",
            KernelParams {
                size: None,
                iterations: Some(0)
            }
        )
        .is_err());
        let (p, spec) = build_kernel(
            "cg",
            KernelParams {
                size: Some(8),
                iterations: Some(3),
            },
        )
        .unwrap();
        assert_eq!((spec.size, spec.iterations), (8, 3));
        assert_eq!(p.data[&0], 8);
        assert_eq!(p.data[&1], 3);
    }
}
