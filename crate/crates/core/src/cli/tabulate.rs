use std::path::Path;

use serde::{Deserialize, Serialize};
use stablecond::geometry::{Point, SphereRegion, StableParams};
use stablecond::harmonic::{
    closest_reach_density, furthest_reach_density, h_in_radius, h_out_radius, h_s_fast, resolvent_conditioned,
    resolvent_exterior,
};
use stablecond::specfun::QuadratureSpec;
use stablecond::{Error, Result};

use super::{read_json, write_atomic};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Function {
    /// Probability of hitting `S` continuously.
    HS,
    HOut,
    HIn,
    /// `|y|^{alpha - d}`.
    HOrigin,
    /// Closest-reach density at `y` from `x`.
    ClosestReach,
    /// Furthest reach before exit at `y` from `x`.
    FurthestReach,
    ResolventExterior,
    ResolventConditioned,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub from: f64,
    pub to: f64,
    pub count: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabulateConfig {
    pub function: Function,
    pub alpha: f64,
    pub dim: usize,
    #[serde(default)]
    pub region: Option<SphereRegion>,
    /// Fixed start for densities and resolvents.
    #[serde(default)]
    pub x: Option<Vec<f64>>,
    /// The grid runs along this direction (default: first axis).
    #[serde(default)]
    pub direction: Option<Vec<f64>>,
    pub radii: Grid,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub file: Option<String>,
}

fn default_tol() -> f64 {
    1e-10
}

pub fn run(config: &Path, out: &Path) -> Result<bool> {
    let cfg: TabulateConfig = read_json(config)?;
    let p = StableParams::new(cfg.alpha, cfg.dim)?;
    let g = &cfg.radii;
    if g.count < 1 || !(g.from <= g.to) || !(g.from > 0.0) {
        return Err(Error::Config("radii need 0 < from <= to and count >= 1".into()));
    }
    let dir = match &cfg.direction {
        Some(d) => Point::new(d.clone())?.normalized()?,
        None => Point::basis(cfg.dim, 0),
    };
    if dir.dim() != cfg.dim {
        return Err(Error::Config("direction dimension differs from dim".into()));
    }
    let quad = QuadratureSpec::adaptive(cfg.tol);
    let region = || cfg.region.as_ref().ok_or_else(|| Error::Config(format!("{:?} needs a region", cfg.function)));
    let x = || -> Result<Point> {
        let v = cfg.x.clone().ok_or_else(|| Error::Config(format!("{:?} needs a start x", cfg.function)))?;
        Point::new(v)
    };
    let mut csv = String::from("r,value\n");
    for i in 0..g.count {
        let r = if g.count == 1 { g.from } else { g.from + (g.to - g.from) * i as f64 / (g.count - 1) as f64 };
        let y = dir.scale(r);
        let v = match cfg.function {
            Function::HS => h_s_fast(y.coords(), region()?, &p, &quad)?,
            Function::HOut => h_out_radius(r, &p)?,
            Function::HIn => h_in_radius(r, &p)?,
            Function::HOrigin => r.powf(p.alpha() - p.d()),
            Function::ClosestReach => closest_reach_density(&y, &x()?, &p)?,
            Function::FurthestReach => furthest_reach_density(&y, &x()?, &p)?,
            Function::ResolventExterior => resolvent_exterior(&x()?, &y, &p)?,
            Function::ResolventConditioned => resolvent_conditioned(&x()?, &y, region()?, &p, &quad)?,
        };
        csv += &format!("{r},{v:e}\n");
    }
    let name = cfg.file.clone().unwrap_or_else(|| {
        serde_json::to_value(cfg.function).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_else(|| "table".into())
    });
    write_atomic(&out.join(format!("{name}.csv")), csv.as_bytes())?;
    print!("{csv}");
    Ok(true)
}
