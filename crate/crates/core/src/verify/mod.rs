//! Experiment reports and the end-to-end checks that produce them.
//!
//! Each experiment is a plain config struct with a `run` method. Configs
//! serialise to JSON and are embedded in the report, which is all
//! [`replay`] needs to reproduce a verdict.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::Result;

mod analytic;
mod duality;
mod limits;
mod rbz;
mod reach;
pub mod stats;

pub use analytic::{BoundaryContinuity, HMinusCheck, HypergeometricGrid, PoissonGrid, SamplerCheck};
pub use duality::{DualityCheck, DualitySide};
pub use limits::{HitCase, HitdistCheck, MartingaleCheck, Theorem1Check};
pub use rbz::{rbz_conditioned_check, RbzCheck};
pub use reach::{ClosestReachCheck, JointReachCheck};

/// Significance level of every permutation and goodness-of-fit test.
pub const LEVEL: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

/// One checked quantity: an estimate, what it is compared with and how.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    pub name: String,
    pub estimate: f64,
    pub stderr: f64,
    pub reference: f64,
    /// Where the reference comes from.
    pub provenance: String,
    pub tolerance: f64,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub detail: serde_json::Value,
}

impl Criterion {
    /// Passes when `|estimate - reference| <= tolerance`.
    pub fn close(name: impl Into<String>, estimate: f64, stderr: f64, reference: f64, provenance: &str, tolerance: f64) -> Self {
        let ok = (estimate - reference).abs() <= tolerance;
        Criterion {
            name: name.into(),
            estimate,
            stderr,
            reference,
            provenance: provenance.into(),
            tolerance,
            verdict: if ok { Verdict::Pass } else { Verdict::Fail },
            detail: serde_json::Value::Null,
        }
    }

    /// Passes when `estimate >= reference`; used for p-values against the level.
    pub fn at_least(name: impl Into<String>, estimate: f64, reference: f64, provenance: &str) -> Self {
        Criterion {
            name: name.into(),
            estimate,
            stderr: 0.0,
            reference,
            provenance: provenance.into(),
            tolerance: 0.0,
            verdict: if estimate >= reference { Verdict::Pass } else { Verdict::Fail },
            detail: serde_json::Value::Null,
        }
    }

    /// Passes when `estimate <= reference`.
    pub fn at_most(name: impl Into<String>, estimate: f64, reference: f64, provenance: &str) -> Self {
        Criterion {
            name: name.into(),
            estimate,
            stderr: 0.0,
            reference,
            provenance: provenance.into(),
            tolerance: 0.0,
            verdict: if estimate <= reference { Verdict::Pass } else { Verdict::Fail },
            detail: serde_json::Value::Null,
        }
    }

    pub fn with_detail(mut self, detail: serde_json::Value) -> Self {
        self.detail = detail;
        self
    }

    pub fn with_stderr(mut self, stderr: f64) -> Self {
        self.stderr = stderr;
        self
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

/// Binned estimate against a reference, for the SVG overlays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub name: String,
    pub edges: Vec<f64>,
    /// Mass per bin from the simulation.
    pub estimate: Vec<f64>,
    /// Mass per bin from the reference.
    pub reference: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub config: ExperimentConfig,
    pub criteria: Vec<Criterion>,
    #[serde(default)]
    pub histograms: Vec<Histogram>,
    #[serde(default)]
    pub notes: Vec<String>,
    /// Wall-clock seconds; the only field allowed to differ between replays.
    pub runtime: f64,
}

impl ExperimentReport {
    fn new(config: &ExperimentConfig) -> Self {
        ExperimentReport {
            name: config.name().into(),
            config: config.clone(),
            criteria: vec![],
            histograms: vec![],
            notes: vec![],
            runtime: 0.0,
        }
    }

    pub fn push(&mut self, c: Criterion) {
        self.criteria.push(c);
    }

    pub fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }

    pub fn passed(&self) -> bool {
        self.criteria.iter().all(Criterion::passed)
    }

    pub fn verdicts(&self) -> Vec<(String, Verdict)> {
        self.criteria.iter().map(|c| (c.name.clone(), c.verdict)).collect()
    }

    /// The report with its runtime zeroed, for bit-for-bit comparison.
    pub fn without_runtime(&self) -> Self {
        ExperimentReport { runtime: 0.0, ..self.clone() }
    }

    /// Aligned plain-text summary.
    pub fn summary(&self) -> String {
        let w = self.criteria.iter().map(|c| c.name.len()).max().unwrap_or(4).max(4);
        let mut s = format!("{} ({:.1} s)\n", self.name, self.runtime);
        s += &format!(
            "  {:<w$}  {:>13}  {:>10}  {:>13}  {:>10}  {:<18}  verdict\n",
            "name", "estimate", "stderr", "reference", "tolerance", "provenance"
        );
        for c in &self.criteria {
            s += &format!(
                "  {:<w$}  {:>13.6e}  {:>10.3e}  {:>13.6e}  {:>10.3e}  {:<18}  {:?}\n",
                c.name, c.estimate, c.stderr, c.reference, c.tolerance, c.provenance, c.verdict
            );
        }
        for n in &self.notes {
            s += &format!("  note: {n}\n");
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "snake_case")]
pub enum ExperimentConfig {
    Sampler(SamplerCheck),
    Poisson(PoissonGrid),
    Hypergeometric(HypergeometricGrid),
    HMinus(HMinusCheck),
    ClosestReach(ClosestReachCheck),
    JointReach(JointReachCheck),
    Theorem1(Theorem1Check),
    Hitdist(HitdistCheck),
    Martingale(MartingaleCheck),
    Rbz(RbzCheck),
    Duality(DualityCheck),
    BoundaryContinuity(BoundaryContinuity),
}

impl ExperimentConfig {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentConfig::Sampler(_) => "sampler",
            ExperimentConfig::Poisson(_) => "poisson",
            ExperimentConfig::Hypergeometric(_) => "hypergeometric",
            ExperimentConfig::HMinus(_) => "h_minus",
            ExperimentConfig::ClosestReach(_) => "closest_reach",
            ExperimentConfig::JointReach(_) => "joint_reach",
            ExperimentConfig::Theorem1(_) => "theorem1",
            ExperimentConfig::Hitdist(_) => "hitdist",
            ExperimentConfig::Martingale(_) => "martingale",
            ExperimentConfig::Rbz(_) => "rbz",
            ExperimentConfig::Duality(_) => "duality",
            ExperimentConfig::BoundaryContinuity(_) => "boundary_continuity",
        }
    }

    /// The default config of the named experiment.
    pub fn by_name(name: &str) -> Option<Self> {
        Some(match name {
            "sampler" => ExperimentConfig::Sampler(Default::default()),
            "poisson" => ExperimentConfig::Poisson(Default::default()),
            "hypergeometric" => ExperimentConfig::Hypergeometric(Default::default()),
            "h_minus" => ExperimentConfig::HMinus(Default::default()),
            "closest_reach" => ExperimentConfig::ClosestReach(Default::default()),
            "joint_reach" => ExperimentConfig::JointReach(Default::default()),
            "theorem1" => ExperimentConfig::Theorem1(Default::default()),
            "hitdist" => ExperimentConfig::Hitdist(Default::default()),
            "martingale" => ExperimentConfig::Martingale(Default::default()),
            "rbz" => ExperimentConfig::Rbz(Default::default()),
            "duality" => ExperimentConfig::Duality(Default::default()),
            "boundary_continuity" => ExperimentConfig::BoundaryContinuity(Default::default()),
            _ => return None,
        })
    }

    pub const NAMES: [&'static str; 12] = [
        "sampler",
        "poisson",
        "hypergeometric",
        "h_minus",
        "closest_reach",
        "joint_reach",
        "theorem1",
        "hitdist",
        "martingale",
        "rbz",
        "duality",
        "boundary_continuity",
    ];

    pub fn seed(&self) -> Option<u64> {
        match self {
            ExperimentConfig::Sampler(c) => Some(c.seed),
            ExperimentConfig::HMinus(c) => Some(c.seed),
            ExperimentConfig::ClosestReach(c) => Some(c.seed),
            ExperimentConfig::JointReach(c) => Some(c.seed),
            ExperimentConfig::Theorem1(c) => Some(c.seed),
            ExperimentConfig::Hitdist(c) => Some(c.seed),
            ExperimentConfig::Martingale(c) => Some(c.seed),
            ExperimentConfig::Rbz(c) => Some(c.seed),
            ExperimentConfig::Duality(c) => Some(c.seed),
            ExperimentConfig::Poisson(_) | ExperimentConfig::Hypergeometric(_) | ExperimentConfig::BoundaryContinuity(_) => {
                None
            }
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        match self {
            ExperimentConfig::Sampler(c) => c.seed = seed,
            ExperimentConfig::HMinus(c) => c.seed = seed,
            ExperimentConfig::ClosestReach(c) => c.seed = seed,
            ExperimentConfig::JointReach(c) => c.seed = seed,
            ExperimentConfig::Theorem1(c) => c.seed = seed,
            ExperimentConfig::Hitdist(c) => c.seed = seed,
            ExperimentConfig::Martingale(c) => c.seed = seed,
            ExperimentConfig::Rbz(c) => c.seed = seed,
            ExperimentConfig::Duality(c) => c.seed = seed,
            ExperimentConfig::Poisson(_) | ExperimentConfig::Hypergeometric(_) | ExperimentConfig::BoundaryContinuity(_) => {}
        }
    }

    /// Checks preconditions before any simulation starts.
    pub fn validate(&self) -> Result<()> {
        match self {
            ExperimentConfig::Sampler(c) => c.validate(),
            ExperimentConfig::Poisson(c) => c.validate(),
            ExperimentConfig::Hypergeometric(c) => c.validate(),
            ExperimentConfig::HMinus(c) => c.validate(),
            ExperimentConfig::ClosestReach(c) => c.validate(),
            ExperimentConfig::JointReach(c) => c.validate(),
            ExperimentConfig::Theorem1(c) => c.validate(),
            ExperimentConfig::Hitdist(c) => c.validate(),
            ExperimentConfig::Martingale(c) => c.validate(),
            ExperimentConfig::Rbz(c) => c.validate(),
            ExperimentConfig::Duality(c) => c.validate(),
            ExperimentConfig::BoundaryContinuity(c) => c.validate(),
        }
    }

    pub fn run(&self) -> Result<ExperimentReport> {
        self.validate()?;
        let start = Instant::now();
        let mut report = ExperimentReport::new(self);
        match self {
            ExperimentConfig::Sampler(c) => c.run(&mut report)?,
            ExperimentConfig::Poisson(c) => c.run(&mut report)?,
            ExperimentConfig::Hypergeometric(c) => c.run(&mut report)?,
            ExperimentConfig::HMinus(c) => c.run(&mut report)?,
            ExperimentConfig::ClosestReach(c) => c.run(&mut report)?,
            ExperimentConfig::JointReach(c) => c.run(&mut report)?,
            ExperimentConfig::Theorem1(c) => c.run(&mut report)?,
            ExperimentConfig::Hitdist(c) => c.run(&mut report)?,
            ExperimentConfig::Martingale(c) => c.run(&mut report)?,
            ExperimentConfig::Rbz(c) => c.run(&mut report)?,
            ExperimentConfig::Duality(c) => c.run(&mut report)?,
            ExperimentConfig::BoundaryContinuity(c) => c.run(&mut report)?,
        }
        report.runtime = start.elapsed().as_secs_f64();
        Ok(report)
    }
}

/// Re-runs the config embedded in `report` and returns the fresh report
/// together with whether every verdict, and every number, matched.
pub fn replay(report: &ExperimentReport) -> Result<(ExperimentReport, bool)> {
    let fresh = report.config.run()?;
    let same = fresh.without_runtime() == report.without_runtime();
    Ok((fresh, same))
}
