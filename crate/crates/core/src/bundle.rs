//! On-disk artifacts: campaign JSON, trial and rate tables, reports, and
//! SVG bar charts.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::analysis::{DistributionReport, PcHistogram};
use crate::campaign::CampaignResult;
use crate::error::{Error, Result};

pub const TRIALS_HEADER: [&str; 11] = [
    "trial", "rank", "class", "k", "bit", "pc", "file", "line", "outcome", "checksum", "steps",
];
pub const RATES_HEADER: [&str; 3] = ["checkpoint", "trials", "sdc_rate"];

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.display().to_string(),
        source: e.into(),
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(io_err(path))
}

pub fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("in-memory serialization cannot fail");
    s.push('\n');
    s
}

pub fn campaign_json(result: &CampaignResult) -> String {
    to_json(result)
}

pub fn parse_campaign(text: &str) -> Result<CampaignResult> {
    serde_json::from_str(text).map_err(|e| Error::Format(format!("campaign file: {e}")))
}

pub fn load_campaign(path: &Path) -> Result<CampaignResult> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_campaign(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Finite values in shortest round-trip form, others as `0x%016X` bits.
fn float_cell(v: f64) -> String {
    crate::isa::format_float_imm(v.to_bits())
}

pub fn write_trials_csv<W: Write>(result: &CampaignResult, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRIALS_HEADER)?;
    for r in &result.records {
        w.write_record([
            r.trial.to_string(),
            r.spec.rank.to_string(),
            r.spec.opcode_class.to_string(),
            r.spec.k.to_string(),
            r.spec.bit.to_string(),
            r.faulted_pc.to_string(),
            r.faulted_loc.file.clone(),
            r.faulted_loc.line.to_string(),
            r.outcome.to_string(),
            r.checksum.map(float_cell).unwrap_or_default(),
            r.steps.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_rates_csv<W: Write>(result: &CampaignResult, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RATES_HEADER)?;
    let interval = result.config.checkpoint_interval;
    let n = result.records.len() as u64;
    for (i, rate) in result.rate_series.iter().enumerate() {
        let trials = ((i as u64 + 1) * interval).min(n);
        w.write_record([(i + 1).to_string(), trials.to_string(), float_cell(*rate)])?;
    }
    w.flush()?;
    Ok(())
}

/// Sibling path `<stem>.<suffix>` next to `path`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

/// Write `path` (campaign JSON) plus `<stem>.trials.csv` and
/// `<stem>.rates.csv` beside it. Returns every path written.
pub fn emit_campaign(result: &CampaignResult, path: &Path) -> Result<Vec<PathBuf>> {
    write_file(path, campaign_json(result).as_bytes())?;
    let trials = sibling(path, "trials.csv");
    let file = fs::File::create(&trials).map_err(io_err(&trials))?;
    write_trials_csv(result, file).map_err(csv_err(&trials))?;
    let rates = sibling(path, "rates.csv");
    let file = fs::File::create(&rates).map_err(io_err(&rates))?;
    write_rates_csv(result, file).map_err(csv_err(&rates))?;
    Ok(vec![path.to_path_buf(), trials, rates])
}

/// Write the report JSON and, with `svg_dir`, one chart per histogram cell.
pub fn emit_report(
    report: &DistributionReport,
    path: Option<&Path>,
    svg_dir: Option<&Path>,
) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    if let Some(path) = path {
        write_file(path, to_json(report).as_bytes())?;
        written.push(path.to_path_buf());
    }
    if let Some(dir) = svg_dir {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        for h in &report.histograms {
            let file = dir.join(format!("{}-{}-{}.svg", report.kernel, h.mode, h.outcome));
            let title = format!(
                "{} {} {} ({} trials)",
                report.kernel, h.mode, h.outcome, h.total
            );
            write_file(&file, svg_histogram(h, &title).as_bytes())?;
            written.push(file);
        }
    }
    Ok(written)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Vertical bar chart: one bar per pc in address order, rotated hex labels.
pub fn svg_histogram(h: &PcHistogram, title: &str) -> String {
    const BAR: f64 = 14.0;
    const GAP: f64 = 4.0;
    const LEFT: f64 = 56.0;
    const TOP: f64 = 36.0;
    const PLOT_H: f64 = 220.0;
    const BOTTOM: f64 = 90.0;

    let n = h.counts.len().max(1) as f64;
    let width = LEFT + n * (BAR + GAP) + 24.0;
    let height = TOP + PLOT_H + BOTTOM;
    let max = h.counts.values().copied().max().unwrap_or(1).max(1) as f64;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" font-family="monospace" font-size="10">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{LEFT}" y="20" font-size="13">{}</text>"#,
        xml_escape(title)
    );
    let axis_y = TOP + PLOT_H;
    let _ = writeln!(
        s,
        r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{axis_y}" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<line x1="{LEFT}" y1="{axis_y}" x2="{:.1}" y2="{axis_y}" stroke="black"/>"#,
        width - 12.0
    );
    for frac in [0.0, 0.5, 1.0] {
        let y = axis_y - frac * PLOT_H;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{:.0}</text>"#,
            LEFT - 4.0,
            y + 3.0,
            frac * max
        );
    }
    for (i, (pc, &c)) in h.counts.iter().enumerate() {
        let x = LEFT + GAP + i as f64 * (BAR + GAP);
        let bh = c as f64 / max * PLOT_H;
        let _ = writeln!(
            s,
            r#"<rect x="{x:.1}" y="{:.1}" width="{BAR}" height="{bh:.1}" fill="steelblue"><title>{pc}: {c}</title></rect>"#,
            axis_y - bh
        );
        let lx = x + BAR / 2.0 + 3.0;
        let ly = axis_y + 6.0;
        let _ = writeln!(
            s,
            r#"<text x="{lx:.1}" y="{ly:.1}" transform="rotate(90 {lx:.1} {ly:.1})">{pc}</text>"#
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::Cell;
    use crate::campaign::Mode;
    use crate::isa::Pc;

    #[test]
    fn sibling_paths() {
        assert_eq!(
            sibling(Path::new("out/cg.json"), "trials.csv"),
            PathBuf::from("out/cg.trials.csv")
        );
        assert_eq!(
            sibling(Path::new("cg"), "rates.csv"),
            PathBuf::from("cg.rates.csv")
        );
    }

    #[test]
    fn svg_has_one_bar_per_pc() {
        let h = PcHistogram::from_counts(Mode::Serial, Cell::Sdc, [(Pc(3), 5), (Pc(9), 1)]);
        let svg = svg_histogram(&h, "a<b");
        assert_eq!(svg.matches("fill=\"steelblue\"").count(), 2);
        assert!(svg.contains("0x00000009"));
        assert!(svg.contains("a&lt;b"));
    }
}
