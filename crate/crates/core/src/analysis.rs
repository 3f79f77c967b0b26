//! Faulty-pc histograms and distribution comparison.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::asm::{Program, SourceLoc};
use crate::campaign::{CampaignResult, Mode, OutcomeClass};
use crate::error::{Error, Result};
use crate::isa::Pc;

/// Outcome cell of a histogram. `Completed` pools benign and SDC trials.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cell {
    Benign,
    Sdc,
    Crash,
    Completed,
}

impl Cell {
    pub const CELLS: [Cell; 3] = [Cell::Benign, Cell::Sdc, Cell::Crash];

    pub fn admits(self, outcome: OutcomeClass) -> bool {
        match self {
            Cell::Benign => outcome == OutcomeClass::Benign,
            Cell::Sdc => outcome == OutcomeClass::Sdc,
            Cell::Crash => outcome.is_crash(),
            Cell::Completed => !outcome.is_crash(),
        }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Cell::Benign => "benign",
            Cell::Sdc => "sdc",
            Cell::Crash => "crash",
            Cell::Completed => "completed",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PcHistogram {
    pub mode: Mode,
    pub outcome: Cell,
    pub counts: BTreeMap<Pc, u64>,
    pub total: u64,
}

impl PcHistogram {
    pub fn new(mode: Mode, outcome: Cell) -> Self {
        PcHistogram {
            mode,
            outcome,
            counts: BTreeMap::new(),
            total: 0,
        }
    }

    pub fn from_counts(
        mode: Mode,
        outcome: Cell,
        counts: impl IntoIterator<Item = (Pc, u64)>,
    ) -> Self {
        let mut h = PcHistogram::new(mode, outcome);
        for (pc, c) in counts {
            h.add(pc, c);
        }
        h
    }

    /// Tally of `result`'s trials falling in `outcome`.
    pub fn from_campaign(result: &CampaignResult, outcome: Cell) -> Self {
        let mut h = PcHistogram::new(result.config.mode, outcome);
        for r in result.records.iter().filter(|r| outcome.admits(r.outcome)) {
            h.add(r.faulted_pc, 1);
        }
        h
    }

    pub fn add(&mut self, pc: Pc, count: u64) {
        if count > 0 {
            *self.counts.entry(pc).or_insert(0) += count;
            self.total += count;
        }
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn support(&self) -> BTreeSet<Pc> {
        self.counts.keys().copied().collect()
    }

    pub fn share(&self, pc: Pc) -> f64 {
        self.counts
            .get(&pc)
            .map_or(0.0, |&c| c as f64 / self.total as f64)
    }

    /// Most frequent pc; ties go to the lowest address.
    pub fn argmax(&self) -> Option<Pc> {
        let mut best: Option<(Pc, u64)> = None;
        for (&pc, &c) in &self.counts {
            if best.is_none_or(|(_, b)| c > b) {
                best = Some((pc, c));
            }
        }
        best.map(|(pc, _)| pc)
    }

    pub fn max_share(&self) -> f64 {
        self.counts
            .values()
            .max()
            .map_or(0.0, |&m| m as f64 / self.total as f64)
    }

    pub fn label(&self) -> String {
        format!("{}-{}", self.mode, self.outcome)
    }
}

pub fn pc_to_source(program: &Program, pc: Pc) -> Result<SourceLoc> {
    program.debug.get(pc.index()).cloned().ok_or_else(|| {
        Error::Argument(format!(
            "pc {pc} outside program of {} instructions",
            program.len()
        ))
    })
}

fn nonempty(p: &PcHistogram, q: &PcHistogram) -> Result<()> {
    if p.is_empty() || q.is_empty() {
        return Err(Error::Argument(
            "distribution metrics need nonempty histograms".into(),
        ));
    }
    Ok(())
}

/// Pairs of normalized masses over the union of supports.
fn masses<'a>(p: &'a PcHistogram, q: &'a PcHistogram) -> impl Iterator<Item = (f64, f64)> + 'a {
    let union: BTreeSet<Pc> = p.counts.keys().chain(q.counts.keys()).copied().collect();
    union.into_iter().map(|pc| (p.share(pc), q.share(pc)))
}

pub fn total_variation(p: &PcHistogram, q: &PcHistogram) -> Result<f64> {
    nonempty(p, q)?;
    // Exact numerator: sum |a*Q - b*P| over the union, then one division.
    let (tp, tq) = (p.total as u128, q.total as u128);
    let union: BTreeSet<Pc> = p.counts.keys().chain(q.counts.keys()).copied().collect();
    let num: u128 = union
        .into_iter()
        .map(|pc| {
            let a = *p.counts.get(&pc).unwrap_or(&0) as u128 * tq;
            let b = *q.counts.get(&pc).unwrap_or(&0) as u128 * tp;
            a.abs_diff(b)
        })
        .sum();
    Ok((num as f64 / (2 * tp * tq) as f64).clamp(0.0, 1.0))
}

/// Jensen-Shannon divergence in bits.
pub fn js_divergence(p: &PcHistogram, q: &PcHistogram) -> Result<f64> {
    nonempty(p, q)?;
    let term = |a: f64, m: f64| if a > 0.0 { a * (a / m).log2() } else { 0.0 };
    let js = masses(p, q)
        .map(|(a, b)| {
            let m = 0.5 * (a + b);
            0.5 * term(a, m) + 0.5 * term(b, m)
        })
        .sum::<f64>();
    Ok(js.clamp(0.0, 1.0))
}

pub fn jaccard_support(p: &PcHistogram, q: &PcHistogram) -> Result<f64> {
    nonempty(p, q)?;
    let inter = p
        .counts
        .keys()
        .filter(|pc| q.counts.contains_key(pc))
        .count();
    let union = p.counts.len() + q.counts.len() - inter;
    Ok(inter as f64 / union as f64)
}

pub fn exclusive_pcs(a: &PcHistogram, b: &PcHistogram) -> BTreeSet<Pc> {
    a.counts
        .keys()
        .filter(|pc| !b.counts.contains_key(pc))
        .copied()
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairMetrics {
    pub a: String,
    pub b: String,
    pub total_variation: f64,
    pub js_divergence: f64,
    pub jaccard: f64,
    /// Pcs in `a` but not in `b`.
    pub a_only: BTreeSet<Pc>,
    /// Pcs in `b` but not in `a`.
    pub b_only: BTreeSet<Pc>,
}

impl PairMetrics {
    pub fn compute(a: &PcHistogram, b: &PcHistogram) -> Result<Self> {
        Ok(PairMetrics {
            a: a.label(),
            b: b.label(),
            total_variation: total_variation(a, b)?,
            js_divergence: js_divergence(a, b)?,
            jaccard: jaccard_support(a, b)?,
            a_only: exclusive_pcs(a, b),
            b_only: exclusive_pcs(b, a),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcAnnotation {
    pub loc: SourceLoc,
    pub mnemonic: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceCount {
    pub loc: SourceLoc,
    pub count: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionReport {
    pub kernel: String,
    pub opcode_class: crate::isa::OpcodeClass,
    /// Nonempty (mode, outcome) cells, serial first.
    pub histograms: Vec<PcHistogram>,
    /// Benign and SDC pooled per mode, when nonempty.
    pub completed: Vec<PcHistogram>,
    pub annotations: BTreeMap<Pc, PcAnnotation>,
    /// Per-histogram counts aggregated by source line, keyed by label.
    pub by_source: BTreeMap<String, Vec<SourceCount>>,
    pub argmax: BTreeMap<String, Pc>,
    pub metrics: Vec<PairMetrics>,
}

impl DistributionReport {
    pub fn histogram(&self, mode: Mode, outcome: Cell) -> Option<&PcHistogram> {
        self.histograms
            .iter()
            .chain(&self.completed)
            .find(|h| h.mode == mode && h.outcome == outcome)
    }

    pub fn metric(&self, a: &str, b: &str) -> Option<&PairMetrics> {
        self.metrics.iter().find(|m| m.a == a && m.b == b)
    }
}

pub fn build_report(
    serial: &CampaignResult,
    parallel: &CampaignResult,
    program: &Program,
) -> Result<DistributionReport> {
    if serial.config.mode != Mode::Serial || parallel.config.mode != Mode::Parallel {
        return Err(Error::Argument(
            "expected one serial and one parallel campaign".into(),
        ));
    }
    if serial.config.kernel != parallel.config.kernel {
        return Err(Error::Argument(format!(
            "campaigns are for different kernels ({} vs {})",
            serial.config.kernel, parallel.config.kernel
        )));
    }
    if serial.config.opcode_class != parallel.config.opcode_class {
        return Err(Error::Argument(format!(
            "campaigns inject different classes ({} vs {})",
            serial.config.opcode_class, parallel.config.opcode_class
        )));
    }

    let mut histograms = Vec::new();
    let mut completed = Vec::new();
    for result in [serial, parallel] {
        for cell in Cell::CELLS {
            let h = PcHistogram::from_campaign(result, cell);
            if !h.is_empty() {
                histograms.push(h);
            }
        }
        let h = PcHistogram::from_campaign(result, Cell::Completed);
        if !h.is_empty() {
            completed.push(h);
        }
    }

    let mut annotations = BTreeMap::new();
    let mut by_source = BTreeMap::new();
    let mut argmax = BTreeMap::new();
    for h in histograms.iter().chain(&completed) {
        let mut per_loc: BTreeMap<SourceLoc, u64> = BTreeMap::new();
        for (&pc, &c) in &h.counts {
            let loc = pc_to_source(program, pc)?;
            *per_loc.entry(loc.clone()).or_insert(0) += c;
            annotations.entry(pc).or_insert_with(|| PcAnnotation {
                loc,
                mnemonic: program.instructions[pc.index()].mnemonic().to_string(),
            });
        }
        let mut rows: Vec<SourceCount> = per_loc
            .into_iter()
            .map(|(loc, count)| SourceCount { loc, count })
            .collect();
        rows.sort_by(|x, y| y.count.cmp(&x.count).then_with(|| x.loc.cmp(&y.loc)));
        by_source.insert(h.label(), rows);
        if let Some(pc) = h.argmax() {
            argmax.insert(h.label(), pc);
        }
    }

    let mut metrics = Vec::new();
    for (i, a) in histograms.iter().enumerate() {
        for b in &histograms[i + 1..] {
            metrics.push(PairMetrics::compute(a, b)?);
        }
    }
    if let [s, p] = completed.as_slice() {
        metrics.push(PairMetrics::compute(s, p)?);
    }

    Ok(DistributionReport {
        kernel: serial.config.kernel.clone(),
        opcode_class: serial.config.opcode_class,
        histograms,
        completed,
        annotations,
        by_source,
        argmax,
        metrics,
    })
}
