//! Every experiment at full size. Each test prints one PASS/FAIL line and,
//! on failure, the criteria that missed.
//!
//! These are slow; run them alone with
//! `cargo test --release --test acceptance -- --nocapture --test-threads 1`.

use stablecond::verify::{
    replay, ClosestReachCheck, DualityCheck, ExperimentConfig, ExperimentReport, HMinusCheck, HitdistCheck,
    MartingaleCheck, RbzCheck, SamplerCheck, Theorem1Check,
};

fn verdict(label: &str, report: &ExperimentReport) {
    let ok = report.passed();
    println!("{label:<28} {:>4}  ({:.1} s)", if ok { "PASS" } else { "FAIL" }, report.runtime);
    for c in report.criteria.iter().filter(|c| !c.passed()) {
        println!(
            "    {}: estimate {:.6e} stderr {:.3e} reference {:.6e} tolerance {:.3e}",
            c.name, c.estimate, c.stderr, c.reference, c.tolerance
        );
    }
    for n in &report.notes {
        println!("    note: {n}");
    }
    assert!(ok, "{label} failed:\n{}", report.summary());
}

fn run(name: &str) -> ExperimentReport {
    ExperimentConfig::by_name(name).unwrap().run().unwrap()
}

#[test]
fn sampler_characteristic_function() {
    verdict("sampler", &run("sampler"));
}

#[test]
fn poisson_identity() {
    verdict("poisson", &run("poisson"));
}

#[test]
fn hypergeometric_identity() {
    verdict("hypergeometric", &run("hypergeometric"));
}

#[test]
fn h_minus_forms_and_survival() {
    verdict("h_minus", &run("h_minus"));
}

#[test]
fn closest_reach_law() {
    verdict("closest_reach", &run("closest_reach"));
}

#[test]
fn joint_reach_exit_law() {
    verdict("joint_reach", &run("joint_reach"));
}

#[test]
fn epsilon_limits() {
    verdict("theorem1", &run("theorem1"));
}

#[test]
fn hitting_distribution() {
    verdict("hitdist", &run("hitdist"));
}

#[test]
fn martingale_normalisation() {
    verdict("martingale", &run("martingale"));
}

#[test]
fn inversion_in_law() {
    verdict("rbz", &run("rbz"));
}

#[test]
fn duality_of_reversed_paths() {
    verdict("duality", &run("duality"));
}

#[test]
fn boundary_continuity() {
    verdict("boundary_continuity", &run("boundary_continuity"));
}

/// Reduced-size runs of every experiment: each replays bit for bit, and the
/// report does not depend on the size of the thread pool.
#[test]
fn determinism() {
    let configs = vec![
        ExperimentConfig::Sampler(SamplerCheck { n: 20_000, ..Default::default() }),
        ExperimentConfig::by_name("poisson").unwrap(),
        ExperimentConfig::by_name("hypergeometric").unwrap(),
        ExperimentConfig::HMinus(HMinusCheck { n: 2_000, ..Default::default() }),
        ExperimentConfig::ClosestReach(ClosestReachCheck { n: 2_000, ..Default::default() }),
        ExperimentConfig::Theorem1(Theorem1Check { n_eps: 20_000, n_h: 2_000, include_vee_alt: false, ..Default::default() }),
        ExperimentConfig::Hitdist(HitdistCheck {
            cases: HitdistCheck::default().cases[..1].to_vec(),
            eps: 0.1,
            n: 20_000,
            ..Default::default()
        }),
        ExperimentConfig::Martingale(MartingaleCheck { params: vec![(1.0, 2)], n: 500, ..Default::default() }),
        ExperimentConfig::Rbz(RbzCheck { n: 1_000, ..Default::default() }),
        ExperimentConfig::Duality(DualityCheck { n: 5_000, halving: false, min_pairs: 10, ..Default::default() }),
        ExperimentConfig::by_name("boundary_continuity").unwrap(),
    ];
    let pool = |k: usize| rayon::ThreadPoolBuilder::new().num_threads(k).build().unwrap();
    let mut all = true;
    for cfg in configs {
        let first = pool(1).install(|| cfg.run()).unwrap();
        // through the same JSON a report file holds
        let stored: ExperimentReport = serde_json::from_str(&serde_json::to_string_pretty(&first).unwrap()).unwrap();
        assert_eq!(stored, first);
        let (again, same) = pool(3).install(|| replay(&stored)).unwrap();
        let verdicts_match = first.verdicts() == again.verdicts();
        let ok = same && verdicts_match;
        println!("determinism[{}] {}", first.name, if ok { "PASS" } else { "FAIL" });
        all &= ok;
    }
    println!("{:<28} {:>4}", "determinism", if all { "PASS" } else { "FAIL" });
    assert!(all);
}
