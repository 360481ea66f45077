use std::path::Path;

use stablecond::verify::{replay as rerun, ExperimentConfig, ExperimentReport};
use stablecond::{Error, Result};

use super::{read_json, svg, write_atomic};

fn write_report(report: &ExperimentReport, out: &Path, stem: &str) -> Result<()> {
    write_atomic(&out.join(format!("{stem}.json")), &serde_json::to_vec_pretty(report)?)?;
    write_atomic(&out.join(format!("{stem}.txt")), report.summary().as_bytes())?;
    for h in &report.histograms {
        let name: String = h.name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' }).collect();
        write_atomic(&out.join(format!("{stem}_{name}.svg")), svg::overlay(h).as_bytes())?;
    }
    Ok(())
}

pub fn run(config: Option<&Path>, experiment: Option<&str>, out: &Path, seed: Option<u64>) -> Result<bool> {
    let mut cfg: ExperimentConfig = match (config, experiment) {
        (Some(p), _) => read_json(p)?,
        (None, Some(name)) => ExperimentConfig::by_name(name).ok_or_else(|| {
            Error::Config(format!("unknown experiment {name:?}; known: {}", ExperimentConfig::NAMES.join(", ")))
        })?,
        (None, None) => return Err(Error::Config("give --config or an experiment name".into())),
    };
    if let Some(s) = seed {
        if cfg.seed().is_none() {
            return Err(Error::Config(format!("experiment {} takes no seed", cfg.name())));
        }
        cfg.set_seed(s);
    }
    cfg.validate()?;
    let report = cfg.run()?;
    print!("{}", report.summary());
    write_report(&report, out, cfg.name())?;
    Ok(report.passed())
}

pub fn replay(path: &Path, out: &Path) -> Result<bool> {
    let old: ExperimentReport = read_json(path)?;
    let (fresh, same) = rerun(&old)?;
    print!("{}", fresh.summary());
    let stem = format!("{}_replay", fresh.name);
    write_report(&fresh, out, &stem)?;
    if same {
        println!("replay: identical to {}", path.display());
    } else {
        println!("replay: differs from {}", path.display());
        for ((n, a), (_, b)) in old.verdicts().iter().zip(fresh.verdicts()) {
            if *a != b {
                println!("  {n}: {a:?} -> {b:?}");
            }
        }
    }
    Ok(same)
}
