//! Checks whose references are closed forms or quadratures.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Criterion, ExperimentReport};
use crate::conditioned::{default_policy, Estimate};
use crate::error::{domain, Result};
use crate::geometry::{norm_sq, Cap, Point, SphereRegion, StableParams};
use crate::harmonic::{h_out_quadrature, h_out_radius, poisson_identity, resolvent_conditioned};
use crate::sampling::{stable_increment, walk, RngStream, StopReason, StopRule, Visit};
use crate::specfun::{hyp_identity_check, QuadratureSpec};

fn params(alpha: f64, dim: usize) -> Result<StableParams> {
    StableParams::new(alpha, dim)
}

// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerCase {
    pub alpha: f64,
    pub theta: Vec<f64>,
    pub h: f64,
}

/// Empirical characteristic function of the increment against `exp(-h |theta|^alpha)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerCheck {
    pub cases: Vec<SamplerCase>,
    pub n: usize,
    pub seed: u64,
    pub sigmas: f64,
}

impl Default for SamplerCheck {
    fn default() -> Self {
        let case = |alpha, theta: &[f64], h| SamplerCase { alpha, theta: theta.to_vec(), h };
        SamplerCheck {
            cases: vec![
                case(0.8, &[1.0, 0.0], 1.0),
                case(1.0, &[0.5, 0.5], 1.0),
                case(1.5, &[2.0, 0.0], 0.25),
                case(1.0, &[0.0, 0.0, 1.0], 0.5),
                case(1.5, &[1.0, 1.0, 0.0], 1.0),
                case(0.8, &[0.0, 2.0, 0.0], 0.1),
            ],
            n: 1_000_000,
            seed: 1,
            sigmas: 4.0,
        }
    }
}

impl SamplerCheck {
    pub fn validate(&self) -> Result<()> {
        for c in &self.cases {
            params(c.alpha, c.theta.len())?;
            if !(c.h > 0.0) {
                return domain("sampler check needs h > 0");
            }
        }
        if self.n < 100 {
            return domain("sampler check needs n >= 100");
        }
        Ok(())
    }

    pub fn run(&self, report: &mut ExperimentReport) -> Result<()> {
        const CHUNK: usize = 10_000;
        for (k, c) in self.cases.iter().enumerate() {
            let p = params(c.alpha, c.theta.len())?;
            let chunks = self.n.div_ceil(CHUNK);
            let sums: Vec<Result<(f64, f64, f64)>> = (0..chunks)
                .into_par_iter()
                .map(|j| {
                    let mut rng = RngStream::new(self.seed, ((k as u64) << 32) | j as u64);
                    let m = CHUNK.min(self.n - j * CHUNK);
                    let (mut s, mut s2, mut si) = (0.0, 0.0, 0.0);
                    for _ in 0..m {
                        let x = stable_increment(&p, c.h, &mut rng)?;
                        let arg: f64 = x.coords().iter().zip(&c.theta).map(|(a, b)| a * b).sum();
                        let v = arg.cos();
                        s += v;
                        s2 += v * v;
                        si += arg.sin();
                    }
                    Ok((s, s2, si))
                })
                .collect();
            let (mut s, mut s2, mut si) = (0.0, 0.0, 0.0);
            for r in sums {
                let (a, b, c) = r?;
                s += a;
                s2 += b;
                si += c;
            }
            let n = self.n as f64;
            let mean = s / n;
            let se = ((s2 / n - mean * mean) / n).sqrt();
            let reference = (-c.h * norm_sq(&c.theta).sqrt().powf(c.alpha)).exp();
            report.push(
                Criterion::close(
                    format!("charfn[a={},d={},|theta|={:.3},h={}]", c.alpha, c.theta.len(), norm_sq(&c.theta).sqrt(), c.h),
                    mean,
                    se,
                    reference,
                    "closed form",
                    self.sigmas * se,
                )
                .with_detail(serde_json::json!({ "imaginary_part": si / n })),
            );
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------

/// Poisson formula on a grid of interior points, radii and dimensions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoissonGrid {
    pub z_radii: Vec<f64>,
    pub radii: Vec<f64>,
    pub dims: Vec<usize>,
    pub tol: f64,
}

impl Default for PoissonGrid {
    fn default() -> Self {
        PoissonGrid { z_radii: vec![0.0, 0.3, 0.7], radii: vec![1.2, 1.5, 3.0], dims: vec![2, 3], tol: 1e-8 }
    }
}

impl PoissonGrid {
    pub fn validate(&self) -> Result<()> {
        if self.z_radii.iter().any(|z| !(*z >= 0.0 && *z < 1.0)) || self.radii.iter().any(|r| !(*r > 1.0)) {
            return domain("Poisson grid needs |z| < 1 < r");
        }
        if self.dims.iter().any(|d| *d < 2) {
            return domain("Poisson grid needs d >= 2");
        }
        Ok(())
    }

    pub fn run(&self, report: &mut ExperimentReport) -> Result<()> {
        let quad = QuadratureSpec::adaptive(1e-12);
        for &d in &self.dims {
            let dir = vec![1.0 / (d as f64).sqrt(); d];
            for &rz in &self.z_radii {
                for &r in &self.radii {
                    let z = Point::new(dir.iter().map(|c| c * rz).collect())?;
                    let v = poisson_identity(&z, r, &quad)?;
                    report.push(Criterion::close(format!("poisson[d={d},|z|={rz},r={r}]"), v, 0.0, 1.0, "exact", self.tol));
                }
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------

/// The Gegenbauer-type integral against its hypergeometric closed form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HypergeometricGrid {
    pub ratios: Vec<f64>,
    pub nus: Vec<f64>,
    pub dims: Vec<usize>,
    pub r: f64,
    pub tol: f64,
}

impl Default for HypergeometricGrid {
    fn default() -> Self {
        HypergeometricGrid {
            ratios: vec![0.1, 0.3, 0.5, 0.7, 0.9],
            nus: vec![0.25, 0.5, 1.0, 1.5, 2.5],
            dims: vec![2, 3, 4],
            r: 2.0,
            tol: 1e-8,
        }
    }
}

impl HypergeometricGrid {
    pub fn validate(&self) -> Result<()> {
        if self.ratios.iter().any(|q| !(q.abs() > 0.0 && q.abs() < 1.0)) || self.nus.iter().any(|n| !(*n > 0.0)) {
            return domain("hypergeometric grid needs 0 < |a/r| < 1 and nu > 0");
        }
        if !(self.r > 0.0) || self.dims.iter().any(|d| *d < 2) {
            return domain("hypergeometric grid needs r > 0 and d >= 2");
        }
        Ok(())
    }

    pub fn run(&self, report: &mut ExperimentReport) -> Result<()> {
        let quad = QuadratureSpec::adaptive(1e-13);
        for &d in &self.dims {
            for &q in &self.ratios {
                for &nu in &self.nus {
                    let (lhs, rhs) = hyp_identity_check(q * self.r, self.r, nu, d, &quad)?;
                    report.push(Criterion::close(format!("hyp[d={d},a/r={q},nu={nu}]"), lhs, 0.0, rhs, "series", self.tol));
                }
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------

/// The probability of never entering the ball: incomplete beta against
/// quadrature, and against simulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HMinusCheck {
    /// `(alpha, d)` pairs for the two deterministic evaluations.
    pub quad_params: Vec<(f64, usize)>,
    pub radii: Vec<f64>,
    pub quad_tol: f64,
    pub alpha: f64,
    pub dim: usize,
    pub x_radius: f64,
    pub n: usize,
    pub h: f64,
    pub far: f64,
    pub seed: u64,
}

impl Default for HMinusCheck {
    fn default() -> Self {
        HMinusCheck {
            quad_params: vec![(1.0, 2), (1.5, 2), (0.8, 3)],
            radii: vec![1.1, std::f64::consts::SQRT_2, 2.0, 5.0],
            quad_tol: 1e-10,
            alpha: 1.0,
            dim: 2,
            x_radius: 2.0,
            n: 100_000,
            h: 1e-3,
            far: 1e3,
            seed: 4,
        }
    }
}

impl HMinusCheck {
    pub fn validate(&self) -> Result<()> {
        for &(a, d) in &self.quad_params {
            params(a, d)?;
        }
        params(self.alpha, self.dim)?;
        if self.radii.iter().any(|r| !(*r > 1.0)) || !(self.x_radius > 1.0) || !(self.far > self.x_radius) {
            return domain("H_out check needs radii > 1 and far > |x|");
        }
        if self.n < 100 || !(self.h > 0.0) {
            return domain("H_out check needs n >= 100 and h > 0");
        }
        Ok(())
    }

    pub fn run(&self, report: &mut ExperimentReport) -> Result<()> {
        for &(a, d) in &self.quad_params {
            let p = params(a, d)?;
            for &r in &self.radii {
                let beta_form = h_out_radius(r, &p)?;
                let quad = h_out_quadrature(r, &p, 1e-13)?;
                report.push(Criterion::close(
                    format!("h_out_forms[a={a},d={d},|x|={r:.4}]"),
                    beta_form,
                    0.0,
                    quad,
                    "quadrature",
                    self.quad_tol,
                ));
            }
        }

        // one walk on the h/2 grid; the h estimate reads only its even nodes
        let p = params(self.alpha, self.dim)?;
        let policy = default_policy(self.h / 2.0);
        let mut x0 = vec![0.0; self.dim];
        x0[0] = self.x_radius;
        let stop = StopRule::FarField(self.far);
        let rows: Vec<Result<(f64, f64, bool, bool)>> = (0..self.n)
            .into_par_iter()
            .map(|i| {
                let mut rng = RngStream::new(self.seed, i as u64);
                let (mut fine, mut coarse) = (false, false);
                let end = walk(&p, &x0, &policy, &stop, &[], &mut rng, |idx, _, y| {
                    if norm_sq(y) < 1.0 {
                        fine = true;
                        coarse |= idx % 2 == 0;
                    }
                    if coarse {
                        Visit::Stop
                    } else {
                        Visit::Continue
                    }
                })?;
                let w = if end.reason == StopReason::FarField { h_out_radius(norm_sq(&end.x).sqrt(), &p)? } else { 0.0 };
                let survived = end.reason == StopReason::FarField && !fine;
                Ok((if coarse { 0.0 } else { w }, if fine { 0.0 } else { w }, survived, end.unresolved))
            })
            .collect();
        let (mut c, mut f, mut diff) = (vec![], vec![], vec![]);
        let (mut raw, mut unresolved) = (0usize, 0usize);
        for r in rows {
            let (a, b, s, u) = r?;
            c.push(a);
            f.push(b);
            diff.push(a - b);
            raw += s as usize;
            unresolved += u as usize;
        }
        let (ec, ef, ed) = (Estimate::from_values(&c), Estimate::from_values(&f), Estimate::from_values(&diff));
        let reference = h_out_radius(self.x_radius, &p)?;
        report.push(
            Criterion::close("h_out_mc", ec.estimate, ec.stderr, reference, "incomplete beta", 3.0 * ec.stderr + ed.estimate.abs())
                .with_detail(serde_json::json!({
                    "halved_h_estimate": ef.estimate,
                    "halved_h_stderr": ef.stderr,
                    "raw_survival_fraction": raw as f64 / self.n as f64,
                    "unresolved_paths": unresolved,
                })),
        );
        report.push(
            Criterion::at_most("h_out_bias_budget", ed.estimate.abs(), ec.stderr, "halved step")
                .with_stderr(ed.stderr),
        );
        report.note(format!("{unresolved} of {} paths had a sphere crossing on a floored step", self.n));
        Ok(())
    }
}

// ---------------------------------------------------------------------------

/// `rho((1 + delta) theta, y) -> rho(theta, y)` at first order in `delta`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundaryContinuity {
    pub alpha: f64,
    pub dim: usize,
    pub region: SphereRegion,
    /// Pairs `(theta, y)` with `theta` on the sphere outside the closure of `S`.
    pub points: Vec<(Vec<f64>, Vec<f64>)>,
    pub deltas: Vec<f64>,
    pub order_tol: f64,
}

impl Default for BoundaryContinuity {
    fn default() -> Self {
        let arc = SphereRegion::CapUnion(vec![Cap::new(Point::basis(2, 0), std::f64::consts::FRAC_PI_4).expect("valid cap")]);
        let dir = |a: f64| vec![a.cos(), a.sin()];
        BoundaryContinuity {
            alpha: 1.0,
            dim: 2,
            region: arc,
            points: vec![
                (dir(std::f64::consts::PI), vec![0.0, 2.0]),
                (dir(2.5), vec![-1.5, 0.5]),
                (dir(-2.0), vec![0.3, -1.8]),
                (dir(1.9), vec![-2.0, -2.0]),
                (dir(-1.2), vec![1.2, 1.2]),
            ],
            deltas: vec![1e-1, 1e-2, 1e-3],
            order_tol: 0.25,
        }
    }
}

impl BoundaryContinuity {
    pub fn validate(&self) -> Result<()> {
        params(self.alpha, self.dim)?;
        if self.region.dim() != self.dim {
            return domain("region dimension differs from d");
        }
        if self.deltas.len() < 2 || self.deltas.iter().any(|d| !(*d > 0.0)) {
            return domain("need at least two positive deltas");
        }
        for (th, y) in &self.points {
            if th.len() != self.dim || y.len() != self.dim || (norm_sq(th).sqrt() - 1.0).abs() > 1e-12 || !(norm_sq(y) > 1.0) {
                return domain("need unit theta and |y| > 1 of dimension d");
            }
            if self.region.angular_gap(th) <= 0.0 {
                return domain("theta must lie outside the closure of S");
            }
        }
        Ok(())
    }

    pub fn run(&self, report: &mut ExperimentReport) -> Result<()> {
        let p = params(self.alpha, self.dim)?;
        let quad = QuadratureSpec::adaptive(1e-13);
        for (k, (th, y)) in self.points.iter().enumerate() {
            let yp = Point::new(y.clone())?;
            let limit = resolvent_conditioned(&Point::new(th.clone())?, &yp, &self.region, &p, &quad)?;
            let mut errs = vec![];
            for &d in &self.deltas {
                let x = Point::new(th.iter().map(|c| c * (1.0 + d)).collect())?;
                errs.push((resolvent_conditioned(&x, &yp, &self.region, &p, &quad)? - limit).abs());
            }
            // least-squares slope of log error against log delta
            let lx: Vec<f64> = self.deltas.iter().map(|d| d.ln()).collect();
            let ly: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
            let (mx, my) = (lx.iter().sum::<f64>() / lx.len() as f64, ly.iter().sum::<f64>() / ly.len() as f64);
            let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
            let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
            let order = sxy / sxx;
            report.push(
                Criterion::close(format!("order[point {k}]"), order, 0.0, 1.0, "first-order expansion", self.order_tol)
                    .with_detail(serde_json::json!({ "limit": limit, "errors": errs })),
            );
        }
        Ok(())
    }
}
