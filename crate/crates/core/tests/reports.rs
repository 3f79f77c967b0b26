use std::fs;

use faultline::analysis::{build_report, js_divergence, total_variation, Cell, PcHistogram};
use faultline::bundle::{emit_campaign, emit_report, load_campaign, RATES_HEADER, TRIALS_HEADER};
use faultline::campaign::{run_campaign, CampaignConfig, CampaignResult, Mode};
use faultline::serde_bits::parse_hex_u64;
use faultline::{build_kernel, Error, KernelParams, OpcodeClass, Program};

fn small_cg() -> Program {
    build_kernel(
        "cg",
        KernelParams {
            size: Some(4),
            iterations: Some(4),
        },
    )
    .unwrap()
    .0
}

fn campaign(p: &Program, mode: Mode, class: OpcodeClass, trials: u64) -> CampaignResult {
    let mut c = CampaignConfig::new("cg", mode, class);
    c.trials = trials;
    c.seed = 17;
    c.checkpoint_interval = 64;
    c.nranks = if mode == Mode::Serial { 1 } else { 4 };
    run_campaign(p, &c, 1).unwrap()
}

/// Equality that treats identical NaN payloads as equal.
fn same(a: &CampaignResult, b: &CampaignResult) -> bool {
    let bits = |r: &CampaignResult| {
        r.records
            .iter()
            .map(|x| x.checksum.map(f64::to_bits))
            .collect::<Vec<_>>()
    };
    let strip = |r: &CampaignResult| {
        let mut r = r.clone();
        r.records.iter_mut().for_each(|x| x.checksum = None);
        r
    };
    bits(a) == bits(b) && a.golden.to_bits() == b.golden.to_bits() && strip(a) == strip(b)
}

fn pair() -> (Program, CampaignResult, CampaignResult) {
    let p = small_cg();
    let s = campaign(&p, Mode::Serial, OpcodeClass::Fadd, 300);
    let q = campaign(&p, Mode::Parallel, OpcodeClass::Fadd, 300);
    (p, s, q)
}

#[test]
fn report_conserves_trial_counts() {
    let (p, s, q) = pair();
    let r = build_report(&s, &q, &p).unwrap();
    for (mode, res) in [(Mode::Serial, &s), (Mode::Parallel, &q)] {
        let sum: u64 = r
            .histograms
            .iter()
            .filter(|h| h.mode == mode)
            .map(|h| h.total)
            .sum();
        assert_eq!(sum, 300);
        let done = res.records.iter().filter(|x| !x.outcome.is_crash()).count() as u64;
        assert_eq!(
            r.histogram(mode, Cell::Completed).map_or(0, |h| h.total),
            done
        );
    }
    assert!(r.histograms.iter().all(|h| !h.is_empty()));
    let first_parallel = r
        .histograms
        .iter()
        .position(|h| h.mode == Mode::Parallel)
        .unwrap();
    assert!(r.histograms[first_parallel..]
        .iter()
        .all(|h| h.mode == Mode::Parallel));
}

#[test]
fn report_annotations_and_sources_are_consistent() {
    let (p, s, q) = pair();
    let r = build_report(&s, &q, &p).unwrap();
    for h in r.histograms.iter().chain(&r.completed) {
        for pc in h.counts.keys() {
            let a = &r.annotations[pc];
            assert_eq!(a.mnemonic, "fadd");
            assert_eq!(a.loc.file, "cg.f");
        }
        let rows = &r.by_source[&h.label()];
        assert_eq!(rows.iter().map(|x| x.count).sum::<u64>(), h.total);
        assert!(rows.windows(2).all(|w| w[0].count >= w[1].count));
        assert_eq!(r.argmax[&h.label()], h.argmax().unwrap());
    }
}

#[test]
fn report_metrics_match_direct_computation() {
    let (p, s, q) = pair();
    let r = build_report(&s, &q, &p).unwrap();
    let n = r.histograms.len();
    let pooled = usize::from(r.completed.len() == 2);
    assert_eq!(r.metrics.len(), n * (n - 1) / 2 + pooled);
    let a = PcHistogram::from_campaign(&s, Cell::Benign);
    let b = PcHistogram::from_campaign(&q, Cell::Benign);
    let m = r.metric("serial-benign", "parallel-benign").unwrap();
    assert_eq!(m.total_variation, total_variation(&a, &b).unwrap());
    assert_eq!(m.js_divergence, js_divergence(&a, &b).unwrap());
    let last = r.metrics.last().unwrap();
    assert_eq!(
        (last.a.as_str(), last.b.as_str()),
        ("serial-completed", "parallel-completed")
    );
}

#[test]
fn mismatched_campaigns_are_rejected() {
    let (p, s, q) = pair();
    assert!(matches!(build_report(&q, &s, &p), Err(Error::Argument(_))));
    let fmul = campaign(&p, Mode::Parallel, OpcodeClass::Fmul, 20);
    assert!(matches!(
        build_report(&s, &fmul, &p),
        Err(Error::Argument(_))
    ));
    let mut other = q.clone();
    other.config.kernel = "ft".into();
    assert!(matches!(
        build_report(&s, &other, &p),
        Err(Error::Argument(_))
    ));
}

#[test]
fn campaign_bundle_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let (_, s, _) = pair();
    let path = dir.path().join("serial.json");
    let written = emit_campaign(&s, &path).unwrap();
    assert_eq!(written.len(), 3);
    assert!(same(&load_campaign(&path).unwrap(), &s));

    let bytes: Vec<Vec<u8>> = written.iter().map(|f| fs::read(f).unwrap()).collect();
    let again = dir.path().join("again.json");
    let rewritten = emit_campaign(&load_campaign(&path).unwrap(), &again).unwrap();
    for (a, b) in bytes.iter().zip(&rewritten) {
        assert_eq!(a, &fs::read(b).unwrap());
    }

    let mut trials = csv::Reader::from_path(&written[1]).unwrap();
    assert_eq!(
        trials.headers().unwrap().iter().collect::<Vec<_>>(),
        TRIALS_HEADER
    );
    let rows: Vec<_> = trials.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 300);
    for (row, rec) in rows.iter().zip(&s.records) {
        assert_eq!(row[0].parse::<u64>().unwrap(), rec.trial);
        assert_eq!(&row[8], rec.outcome.to_string());
        match rec.checksum {
            Some(c) if c.is_finite() => assert_eq!(row[9].parse::<f64>().unwrap(), c),
            Some(c) => assert_eq!(parse_hex_u64(&row[9]).unwrap(), c.to_bits()),
            None => assert!(row[9].is_empty()),
        }
    }

    let mut rates = csv::Reader::from_path(&written[2]).unwrap();
    assert_eq!(
        rates.headers().unwrap().iter().collect::<Vec<_>>(),
        RATES_HEADER
    );
    let counts: Vec<u64> = rates
        .records()
        .map(|r| r.unwrap()[1].parse().unwrap())
        .collect();
    assert_eq!(counts, vec![64, 128, 192, 256, 300]);
}

#[test]
fn non_finite_values_survive_serialization() {
    let (_, mut s, _) = pair();
    let nan = f64::from_bits(0x7FF8_0000_0000_0ABC);
    s.records[0].checksum = Some(nan);
    s.records[1].checksum = Some(f64::NEG_INFINITY);
    let text = faultline::bundle::campaign_json(&s);
    assert!(text.contains("\"0x7FF8000000000ABC\""));
    let back = faultline::bundle::parse_campaign(&text).unwrap();
    assert_eq!(back.records[0].checksum.unwrap().to_bits(), nan.to_bits());
    assert_eq!(back.records[1].checksum, Some(f64::NEG_INFINITY));
    assert!(same(&back, &s));
}

#[test]
fn report_charts_cover_every_histogram() {
    let dir = tempfile::tempdir().unwrap();
    let (p, s, q) = pair();
    let r = build_report(&s, &q, &p).unwrap();
    let svg = dir.path().join("svg");
    let json = dir.path().join("report.json");
    let written = emit_report(&r, Some(&json), Some(&svg)).unwrap();
    assert_eq!(written.len(), 1 + r.histograms.len());
    let charts: Vec<_> = fs::read_dir(&svg)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    assert_eq!(charts.len(), r.histograms.len());
    for c in charts {
        let text = fs::read_to_string(&c).unwrap();
        assert!(
            text.starts_with("<svg") && text.trim_end().ends_with("</svg>"),
            "{}",
            c.display()
        );
    }
    assert!(svg.join("cg-serial-benign.svg").exists());
    let back: faultline::analysis::DistributionReport =
        serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(back, r);
}
