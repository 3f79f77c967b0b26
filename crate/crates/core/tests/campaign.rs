use faultline::asm::assemble;
use faultline::campaign::{
    run_campaign, run_exhaustive, trial_rng, CampaignConfig, CrashReason, Mode, OutcomeClass,
    TrialRecord,
};
use faultline::injector::{draw_fault, profile};
use faultline::{Error, OpcodeClass, Program};

const ONE_FADD: &str = ".verify f0 AUTO 1e-8\nfmovi f1, 1.0\nfmovi f2, 0.0\nfadd f0, f1, f2\nhalt";
const DEAD_FADD: &str = ".verify f0 AUTO 1e-8\nfmovi f1, 1.0\nfadd f0, f1, f1\nfmovi f0, 3.0\nhalt";

/// Four ranks each add their share of a sum, then reduce.
const REDUCE: &str = "\
.verify f0 AUTO 1e-8
        rank r1
        fmovi f1, 0.25
        fmovi f2, 0.0
        li r3, 0
        addi r4, r1, 1
loop:   bge r3, r4, done
        fadd f2, f2, f1
        fmul f3, f2, f1
        addi r3, r3, 1
        jmp loop
done:   allreduce_sum f0, f2
        halt
";

/// A short serial loop with a product chain.
const CHAIN: &str = "\
.verify f0 AUTO 1e-8
        fmovi f1, 1.5
        fmovi f0, 1.0
        li r1, 0
        li r2, 6
l:      fmul f0, f0, f1
        fadd f0, f0, f1
        addi r1, r1, 1
        blt r1, r2, l
        halt
";

fn config(kernel: &str, mode: Mode, class: OpcodeClass, trials: u64, seed: u64) -> CampaignConfig {
    let mut c = CampaignConfig::new(kernel, mode, class);
    c.trials = trials;
    c.seed = seed;
    c.checkpoint_interval = 100;
    c.step_budget = 100_000;
    c
}

/// Benign iff the flip moves 1.0 by at most 1e-8 relative.
fn one_fadd_oracle(bit: u32) -> OutcomeClass {
    let flipped = f64::from_bits(1.0f64.to_bits() ^ (1u64 << bit));
    if (flipped - 1.0).abs() <= 1e-8 {
        OutcomeClass::Benign
    } else {
        OutcomeClass::Sdc
    }
}

#[test]
fn exhaustive_one_fadd_splits_at_bit_26() {
    let p = assemble(ONE_FADD).unwrap();
    let recs = run_exhaustive(&p, 1, OpcodeClass::Fadd, 1e-8, 100, 1 << 20, 1).unwrap();
    assert_eq!(recs.len(), 64);
    for r in &recs {
        assert_eq!(r.outcome, one_fadd_oracle(r.spec.bit), "bit {}", r.spec.bit);
        let expect = if r.spec.bit < 26 {
            OutcomeClass::Benign
        } else {
            OutcomeClass::Sdc
        };
        assert_eq!(r.outcome, expect);
    }
}

#[test]
fn exhaustive_dead_value_is_all_benign() {
    let p = assemble(DEAD_FADD).unwrap();
    let recs = run_exhaustive(&p, 1, OpcodeClass::Fadd, 1e-8, 100, 1 << 20, 1).unwrap();
    assert_eq!(recs.len(), 64);
    assert!(recs.iter().all(|r| r.outcome == OutcomeClass::Benign));
}

#[test]
fn exhaustive_refuses_large_spaces() {
    let p = assemble(REDUCE).unwrap();
    let err = run_exhaustive(&p, 4, OpcodeClass::Fadd, 1e-8, 1000, 100, 1).unwrap_err();
    assert!(matches!(
        err,
        Error::SpaceTooLarge {
            size: 640,
            cap: 100
        }
    ));
}

#[test]
fn exhaustive_site_order_is_rank_k_bit() {
    let p = assemble(REDUCE).unwrap();
    let recs = run_exhaustive(&p, 4, OpcodeClass::Fadd, 1e-8, 1000, 1 << 20, 1).unwrap();
    // Rank r executes r + 1 fadds.
    assert_eq!(recs.len(), (1 + 2 + 3 + 4) * 64);
    let sites: Vec<_> = recs
        .iter()
        .map(|r| (r.spec.rank, r.spec.k, r.spec.bit))
        .collect();
    let mut sorted = sites.clone();
    sorted.sort();
    assert_eq!(sites, sorted);
    assert_eq!(
        recs.iter().map(|r| r.trial).collect::<Vec<_>>(),
        (0..recs.len() as u64).collect::<Vec<_>>()
    );
}

fn check_oracle(src: &str, mode: Mode, nranks: u32, class: OpcodeClass) {
    let p = assemble(src).unwrap();
    let exhaustive = run_exhaustive(&p, nranks, class, 1e-8, 100_000, 10_000, 1).unwrap();
    let find = |r: &TrialRecord| {
        exhaustive
            .iter()
            .find(|e| e.spec == r.spec)
            .unwrap_or_else(|| panic!("site {:?} missing from sweep", r.spec))
    };
    let mut c = config("micro", mode, class, 300, 11);
    c.nranks = nranks;
    let sampled = run_campaign(&p, &c, 1).unwrap();
    for r in &sampled.records {
        let e = find(r);
        assert_eq!(r.outcome, e.outcome);
        assert_eq!(r.faulted_pc, e.faulted_pc);
        assert_eq!(r.checksum.map(f64::to_bits), e.checksum.map(f64::to_bits));
    }
}

#[test]
fn sampled_trials_agree_with_the_sweep() {
    check_oracle(ONE_FADD, Mode::Serial, 1, OpcodeClass::Fadd);
    check_oracle(CHAIN, Mode::Serial, 1, OpcodeClass::Fadd);
    check_oracle(CHAIN, Mode::Serial, 1, OpcodeClass::Fmul);
    check_oracle(REDUCE, Mode::Parallel, 4, OpcodeClass::Fadd);
}

#[test]
fn single_trial_matches_the_sweep_entry() {
    let p = assemble(ONE_FADD).unwrap();
    for seed in 0..20 {
        let r = run_campaign(
            &p,
            &config("one", Mode::Serial, OpcodeClass::Fadd, 1, seed),
            1,
        )
        .unwrap();
        assert_eq!(r.records.len(), 1);
        assert_eq!(r.records[0].outcome, one_fadd_oracle(r.records[0].spec.bit));
    }
}

#[test]
fn sampled_rate_is_close_to_the_exact_rate() {
    let p = assemble(CHAIN).unwrap();
    let exact = run_exhaustive(&p, 1, OpcodeClass::Fadd, 1e-8, 100_000, 1 << 20, 1).unwrap();
    let q = exact.iter().filter(|r| r.outcome.is_sdc()).count() as f64 / exact.len() as f64;
    let sampled = run_campaign(
        &p,
        &config("chain", Mode::Serial, OpcodeClass::Fadd, 10_000, 5),
        1,
    )
    .unwrap();
    let se = (q * (1.0 - q) / 10_000.0).sqrt();
    assert!(
        (sampled.sdc_rate() - q).abs() <= 3.0 * se,
        "{} vs {q}",
        sampled.sdc_rate()
    );
}

#[test]
fn trials_replay_in_isolation() {
    let p = assemble(REDUCE).unwrap();
    let mut c = config("reduce", Mode::Parallel, OpcodeClass::Fadd, 50, 99);
    c.nranks = 4;
    let r = run_campaign(&p, &c, 1).unwrap();
    let prof = profile(&p, 4, OpcodeClass::Fadd, c.step_budget).unwrap();
    for rec in &r.records {
        let spec = draw_fault(&mut trial_rng(c.seed, rec.trial), &prof).unwrap();
        assert_eq!(spec, rec.spec);
    }
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let p = assemble(REDUCE).unwrap();
    let mut c = config("reduce", Mode::Parallel, OpcodeClass::Fadd, 400, 3);
    c.nranks = 4;
    let a = run_campaign(&p, &c, 1).unwrap();
    let b = run_campaign(&p, &c, 3).unwrap();
    let again = run_campaign(&p, &c, 1).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, again);
}

#[test]
fn result_invariants() {
    let p = assemble(CHAIN).unwrap();
    let r = run_campaign(
        &p,
        &config("chain", Mode::Serial, OpcodeClass::Fadd, 250, 8),
        1,
    )
    .unwrap();
    assert_eq!(r.records.len(), 250);
    let benign = r.count(|o| o == OutcomeClass::Benign);
    assert_eq!(
        benign + r.count(OutcomeClass::is_sdc) + r.count(OutcomeClass::is_crash),
        250
    );
    assert_eq!(r.rate_series.len(), 3);
    let sdc_first_200 = r.records[..200]
        .iter()
        .filter(|x| x.outcome.is_sdc())
        .count();
    assert_eq!(r.rate_series[1], sdc_first_200 as f64 / 200.0);
    assert_eq!(r.profile, vec![6]);
}

#[test]
fn campaign_errors() {
    let p = assemble(ONE_FADD).unwrap();
    let c = config("one", Mode::Serial, OpcodeClass::Fdiv, 10, 0);
    assert!(matches!(
        run_campaign(&p, &c, 1),
        Err(Error::NoTarget(OpcodeClass::Fdiv))
    ));
    let mut c = config("one", Mode::Serial, OpcodeClass::Fadd, 0, 0);
    assert!(matches!(run_campaign(&p, &c, 1), Err(Error::Argument(_))));
    c.trials = 1;
    c.nranks = 2;
    assert!(matches!(run_campaign(&p, &c, 1), Err(Error::Argument(_))));
    let hang: Program = assemble(".verify f0 AUTO 1e-8\nL: jmp L").unwrap();
    let c = config("hang", Mode::Serial, OpcodeClass::Fadd, 1, 0);
    assert!(matches!(
        run_campaign(&hang, &c, 1),
        Err(Error::KernelDefect(_))
    ));
}

#[test]
fn fault_free_deadlock_is_a_kernel_defect() {
    let src = ".verify f0 AUTO 1e-8\nrank r1\nfmovi f1, 1.0\nfadd f0, f1, f1\nbeq r1, r0, out\nli r2, 0\nrecv f3, r2\nout: halt";
    let p = assemble(src).unwrap();
    let mut c = config("x", Mode::Parallel, OpcodeClass::Fadd, 5, 0);
    c.nranks = 2;
    assert!(matches!(
        run_campaign(&p, &c, 1),
        Err(Error::KernelDefect(_))
    ));
}

#[test]
fn corrupted_addresses_trap() {
    // The sum's bit pattern is reused as a load address.
    let src = "\
.mem 64
.verify f0 AUTO 1e-8
        fmovi f1, 0x0000000000000005
        fmovi f2, 0.0
        fadd f3, f1, f2
        fst f3, [0]
        ld r1, [0]
        fld f0, [r1]
        fmovi f4, 1.0
        fadd f0, f0, f4
        halt
";
    let p = assemble(src).unwrap();
    let recs = run_exhaustive(&p, 1, OpcodeClass::Fadd, 1e-8, 1000, 1 << 20, 1).unwrap();
    let first: Vec<_> = recs.iter().filter(|r| r.spec.k == 1).collect();
    assert_eq!(first.len(), 64);
    for r in first {
        let addr = 5u64 ^ (1 << r.spec.bit);
        if addr >= 64 {
            assert_eq!(
                r.outcome,
                OutcomeClass::Crash(CrashReason::Trap),
                "bit {}",
                r.spec.bit
            );
            assert_eq!(r.checksum, None);
        } else {
            assert!(!r.outcome.is_crash());
        }
    }
}
