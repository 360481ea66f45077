use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use stablecond::conditioned::{default_policy, sample_conditioned_paths, start_point, ConditionedLaw, LawKind};
use stablecond::geometry::{Point, SphereRegion, StableParams};
use stablecond::sampling::{simulate_path, write_csv, write_ensemble, EnsembleHeader, RngStream, StepPolicy, StopRule};
use stablecond::{Error, Result};

use super::{read_json, write_atomic};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LawSpec {
    pub kind: LawKind,
    #[serde(default)]
    pub region: Option<SphereRegion>,
    /// Checkpoints of the particle system.
    #[serde(default = "default_steps")]
    pub steps: usize,
}

fn default_steps() -> usize {
    20
}

fn default_h() -> f64 {
    1e-3
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub alpha: f64,
    pub dim: usize,
    pub x0: Vec<f64>,
    pub n: usize,
    pub horizon: f64,
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default)]
    pub seed: u64,
    /// Extra stopping rule for free paths, combined with the horizon.
    #[serde(default)]
    pub stop: Option<StopRule>,
    /// Conditioned law; free paths when absent.
    #[serde(default)]
    pub law: Option<LawSpec>,
    #[serde(default)]
    pub policy: Option<StepPolicy>,
    /// Also write a CSV of all nodes.
    #[serde(default = "yes")]
    pub csv: bool,
}

fn yes() -> bool {
    true
}

pub fn run(config: &Path, out: &Path, seed: Option<u64>) -> Result<bool> {
    let mut cfg: SimulateConfig = read_json(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let p = StableParams::new(cfg.alpha, cfg.dim)?;
    let x0 = Point::new(cfg.x0.clone())?;
    if x0.dim() != cfg.dim {
        return Err(Error::Config("x0 dimension differs from dim".into()));
    }
    if cfg.n == 0 || !(cfg.horizon > 0.0) {
        return Err(Error::Config("need n >= 1 and horizon > 0".into()));
    }
    let policy = cfg.policy.unwrap_or_else(|| default_policy(cfg.h));
    policy.validate()?;
    let (paths, weights, provenance, extra) = match &cfg.law {
        None => {
            let stop = match &cfg.stop {
                Some(s) => StopRule::First(vec![s.clone(), StopRule::Horizon(cfg.horizon)]),
                None => StopRule::Horizon(cfg.horizon),
            };
            let paths = (0..cfg.n)
                .into_par_iter()
                .map(|i| simulate_path(&p, &x0, &policy, &stop, &mut RngStream::new(cfg.seed, i as u64)))
                .collect::<Result<Vec<_>>>()?;
            (paths, None, "free".to_string(), String::new())
        }
        Some(l) => {
            let law = ConditionedLaw::new(l.kind, l.region.clone(), p)?;
            let x = start_point(&law, &x0)?;
            let e = sample_conditioned_paths(&law, &x, cfg.horizon, l.steps, cfg.n, &policy, cfg.seed)?;
            let extra = format!("ess {:.1}\nmass {:.6e}\nresamplings {}\n", e.ess, e.mass, e.resamplings);
            (e.paths, Some(e.weights), format!("{:?} by sequential importance resampling", l.kind), extra)
        }
    };
    let header = EnsembleHeader { alpha: cfg.alpha, dim: cfg.dim, seed: cfg.seed, policy, provenance };
    let mut bin = Vec::new();
    write_ensemble(&mut bin, &header, &paths, weights.as_deref())?;
    write_atomic(&out.join("ensemble.stbl"), &bin)?;
    if cfg.csv {
        let mut csv = Vec::new();
        write_csv(&mut csv, &paths, weights.as_deref())?;
        write_atomic(&out.join("ensemble.csv"), &csv)?;
    }
    let mut stops: BTreeMap<String, usize> = BTreeMap::new();
    for q in &paths {
        *stops.entry(format!("{:?}", q.stop)).or_default() += 1;
    }
    let nodes: usize = paths.iter().map(|q| q.len()).sum();
    let mut summary = format!("paths {}\nnodes {nodes}\n", paths.len());
    for (k, v) in stops {
        summary += &format!("stop {k} {v}\n");
    }
    summary += &extra;
    print!("{summary}");
    write_atomic(&out.join("summary.txt"), summary.as_bytes())?;
    Ok(true)
}
