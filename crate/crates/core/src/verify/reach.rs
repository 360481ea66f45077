//! Laws of radial records: the closest reach of a transient path and the
//! furthest pre-exit point together with the exit point.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use super::stats::{chi2_gof, ks_radial_cdf, Sample};
use super::{Criterion, ExperimentReport, Histogram, LEVEL};
use crate::conditioned::record_cap;
use crate::error::{domain, Error, Result};
use crate::geometry::{norm_sq, Point, StableParams};
use crate::harmonic::{furthest_reach_density, joint_reach_exit_density, sphere_area, Constants};
use crate::sampling::{walk, Growth, GrowthReference, RngStream, StepPolicy, StopReason, StopRule, Visit};
use crate::specfun::{integrate, QuadratureSpec};

/// `int_{phi_lo}^{phi_hi} dphi / |rho e(phi) - r e(0)|^2` in closed form
/// (planar), as `2 / |rho^2 - r^2|` times the returned bracket.
fn angular_bracket(rho: f64, r: f64, phi: (f64, f64)) -> f64 {
    let k = (rho + r) / (rho - r).abs();
    let g = |p: f64| (k * (0.5 * p).tan()).atan();
    g(phi.1) - g(phi.0)
}

/// `int_{u0}^{u1} f(u) u^{a-1} (1-u)^{b-1} du`, substituting away the power
/// at an end that touches 0 or 1.
fn beta_cell<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, u0: f64, u1: f64, tol: f64) -> Result<f64> {
    let q = QuadratureSpec::adaptive(tol);
    let m = 0.5 * (u0 + u1);
    let left = if u0 == 0.0 {
        integrate(|s| {
            let u = s.powf(1.0 / a);
            f(u) * (1.0 - u).powf(b - 1.0) / a
        }, 0.0, m.powf(a), &q)?
    } else {
        integrate(|u| f(u) * u.powf(a - 1.0) * (1.0 - u).powf(b - 1.0), u0, m, &q)?
    };
    let right = if u1 == 1.0 {
        integrate(|s| {
            let u = 1.0 - s.powf(1.0 / b);
            f(u) * u.powf(a - 1.0) / b
        }, 0.0, (1.0 - m).powf(b), &q)?
    } else {
        integrate(|u| f(u) * u.powf(a - 1.0) * (1.0 - u).powf(b - 1.0), m, u1, &q)?
    };
    Ok(left.value + right.value)
}

fn angle(y: &[f64]) -> f64 {
    y[1].atan2(y[0])
}

fn phi_edges(bins: usize) -> Vec<f64> {
    (0..=bins).map(|k| -PI + 2.0 * PI * k as f64 / bins as f64).collect()
}

fn bin_of(edges: &[f64], v: f64) -> Option<usize> {
    if v < edges[0] || v > edges[edges.len() - 1] {
        return None;
    }
    Some(edges.partition_point(|e| *e <= v).clamp(1, edges.len() - 1) - 1)
}

// ---------------------------------------------------------------------------

/// Closest reach of a path from `x` run out to the far field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClosestReachCheck {
    pub alpha: f64,
    pub x: Vec<f64>,
    pub n: usize,
    pub radial_bins: usize,
    pub angle_bins: usize,
    pub h: f64,
    pub record_kappa: f64,
    pub far: f64,
    pub norm_tol: f64,
    pub seed: u64,
}

impl Default for ClosestReachCheck {
    fn default() -> Self {
        ClosestReachCheck {
            alpha: 1.0,
            x: vec![2.0, 0.0],
            n: 100_000,
            radial_bins: 20,
            angle_bins: 20,
            h: 1e-3,
            record_kappa: 0.005,
            far: 1e3,
            norm_tol: 1e-6,
            seed: 5,
        }
    }
}

/// Step policy for record experiments: no refinement at the unit sphere,
/// steps growing with the distance to the origin.
fn record_policy(h: f64) -> StepPolicy {
    StepPolicy { band: 0.0, min_step: 1e-9, ..StepPolicy::default() }.with_h(h).with_growth(Growth {
        reference: GrowthReference::Origin,
        from: 0.0,
        kappa: 0.01,
        power: None,
        max_step: 1e6,
    })
}

impl ClosestReachCheck {
    pub fn validate(&self) -> Result<()> {
        if self.x.len() != 2 {
            return domain("closest reach check is planar (d = 2)");
        }
        StableParams::new(self.alpha, 2)?;
        let rx = norm_sq(&self.x).sqrt();
        if !(rx > 0.0 && self.far > rx) || self.n < 100 || self.radial_bins < 2 || self.angle_bins < 2 {
            return domain("closest reach check needs 0 < |x| < far, n >= 100 and at least two bins per axis");
        }
        if !(self.record_kappa > 0.0 && self.h > 0.0) {
            return domain("closest reach check needs positive h and record kappa");
        }
        Ok(())
    }

    pub fn run(&self, report: &mut ExperimentReport) -> Result<()> {
        let p = StableParams::new(self.alpha, 2)?;
        let a = self.alpha;
        let rx = norm_sq(&self.x).sqrt();
        let phi0 = angle(&self.x);
        // |z|^2 / |x|^2 is Beta((d - alpha)/2, alpha/2) after the angular Poisson average
        let radial = Beta::new((2.0 - a) / 2.0, a / 2.0).map_err(|e| Error::Domain(e.to_string()))?;
        let rho_edges: Vec<f64> = (0..=self.radial_bins)
            .map(|k| match k {
                0 => 0.0,
                k if k == self.radial_bins => rx,
                k => rx * radial.inverse_cdf(k as f64 / self.radial_bins as f64).sqrt(),
            })
            .collect();
        let phis = phi_edges(self.angle_bins);
        let floor = 0.5 * rho_edges.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);

        // expected cell masses: the angle integrates in closed form, leaving
        // c * bracket(u) against u^{-alpha/2} (1-u)^{alpha/2-1} in u = |z|^2 / |x|^2
        let c = Constants::new(&p)?.c_closest;
        let u_edges: Vec<f64> = rho_edges.iter().map(|r| if *r == rx { 1.0 } else { (r / rx).powi(2) }).collect();
        let cells: Vec<(usize, usize)> =
            (0..self.radial_bins).flat_map(|i| (0..self.angle_bins).map(move |j| (i, j))).collect();
        let expected: Vec<Result<f64>> = cells
            .par_iter()
            .map(|&(i, j)| {
                let f = |u: f64| c * angular_bracket(rx * u.sqrt(), rx, (phis[j], phis[j + 1]));
                beta_cell(f, 1.0 - a / 2.0, a / 2.0, u_edges[i], u_edges[i + 1], 1e-13)
            })
            .collect();
        let expected = expected.into_iter().collect::<Result<Vec<f64>>>()?;
        let total: f64 = expected.iter().sum();
        report.push(Criterion::close("density_normalisation", total, 0.0, 1.0, "quadrature", self.norm_tol));

        // simulation
        let policy = record_policy(self.h);
        let stop = StopRule::FarField(self.far);
        let kappa = self.record_kappa;
        let reach: Vec<Result<Option<Vec<f64>>>> = (0..self.n)
            .into_par_iter()
            .map(|i| {
                let mut rng = RngStream::new(self.seed, i as u64);
                let mut best = f64::INFINITY;
                let mut z = self.x.clone();
                let end = walk(&p, &self.x, &policy, &stop, &[], &mut rng, |idx, _, y| {
                    let r = norm_sq(y).sqrt();
                    if idx == 0 {
                        return Visit::Cap(record_cap(a, kappa, 0.0, floor));
                    }
                    if r < best {
                        best = r;
                        z.copy_from_slice(y);
                    }
                    Visit::Cap(record_cap(a, kappa, r - best, (rx - best).min(best).max(floor)))
                })?;
                Ok((end.reason == StopReason::FarField).then_some(z))
            })
            .collect();
        let mut observed = vec![0.0; cells.len()];
        let mut sample = Sample::new(2);
        let mut lost = 0usize;
        for z in reach {
            match z? {
                Some(z) => {
                    let rho = norm_sq(&z).sqrt();
                    let mut ph = angle(&z) - phi0;
                    if ph <= -PI {
                        ph += 2.0 * PI;
                    } else if ph > PI {
                        ph -= 2.0 * PI;
                    }
                    if let (Some(i), Some(j)) = (bin_of(&rho_edges, rho), bin_of(&phis, ph)) {
                        observed[i * self.angle_bins + j] += 1.0;
                    }
                    sample.push(&z, 1.0);
                }
                None => lost += 1,
            }
        }
        let m = sample.len() as f64;
        let exp_counts: Vec<f64> = expected.iter().map(|e| e / total * m).collect();
        let chi = chi2_gof(&observed, &exp_counts, 5.0, 0)?;
        report.push(
            Criterion::at_least("chi2_20x20", chi.p_value, LEVEL, "density quadrature")
                .with_detail(serde_json::to_value(&chi)?),
        );
        let ks = ks_radial_cdf(&sample, |r| radial.cdf((r / rx).powi(2).min(1.0)))?;
        report.push(Criterion::at_least("ks_radius", ks.p_value, LEVEL, "beta law").with_detail(serde_json::to_value(ks)?));
        let est: Vec<f64> = (0..self.radial_bins)
            .map(|i| observed[i * self.angle_bins..(i + 1) * self.angle_bins].iter().sum::<f64>() / m)
            .collect();
        report.histograms.push(Histogram {
            name: "closest_reach_radius".into(),
            edges: rho_edges.clone(),
            estimate: est,
            reference: vec![1.0 / self.radial_bins as f64; self.radial_bins],
        });
        if lost > 0 {
            report.note(format!("{lost} paths stopped before the far field"));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------

/// Joint law of the furthest point before first exit and the exit point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JointReachCheck {
    pub alpha: f64,
    pub x: Vec<f64>,
    pub n: usize,
    pub z_bins: usize,
    pub v_edges: Vec<f64>,
    pub angle_bins: usize,
    pub h: f64,
    pub record_kappa: f64,
    /// Points at which the numerically collapsed joint density is compared
    /// with the closed-form marginal.
    pub collapse_points: Vec<Vec<f64>>,
    pub shape_tol: f64,
    pub seed: u64,
}

impl Default for JointReachCheck {
    fn default() -> Self {
        JointReachCheck {
            alpha: 1.0,
            x: vec![0.3, 0.0],
            n: 100_000,
            z_bins: 4,
            v_edges: vec![1.0, 1.05, 1.3],
            angle_bins: 4,
            h: 1e-3,
            record_kappa: 0.005,
            collapse_points: vec![
                vec![0.5, 0.0],
                vec![0.0, 0.6],
                vec![-0.7, 0.1],
                vec![0.4, -0.5],
                vec![-0.2, -0.85],
                vec![0.9, 0.05],
            ],
            shape_tol: 1e-3,
            seed: 6,
        }
    }
}

impl JointReachCheck {
    pub fn validate(&self) -> Result<()> {
        if self.x.len() != 2 {
            return domain("joint reach check is planar (d = 2)");
        }
        StableParams::new(self.alpha, 2)?;
        let rx = norm_sq(&self.x).sqrt();
        if !(rx > 0.0 && rx < 1.0) {
            return domain("joint reach check needs 0 < |x| < 1");
        }
        if self.v_edges.len() < 2 || self.v_edges[0] != 1.0 || self.v_edges.windows(2).any(|w| !(w[1] > w[0])) {
            return domain("v edges must start at 1 and increase");
        }
        if self.collapse_points.iter().any(|z| z.len() != 2 || !(norm_sq(z).sqrt() > rx && norm_sq(z) < 1.0)) {
            return domain("collapse points need |x| < |z| < 1");
        }
        if self.n < 100 || self.z_bins < 1 || self.angle_bins < 1 || !(self.h > 0.0 && self.record_kappa > 0.0) {
            return domain("joint reach check needs n >= 100, bins >= 1, h > 0 and kappa > 0");
        }
        Ok(())
    }

    pub fn run(&self, report: &mut ExperimentReport) -> Result<()> {
        let p = StableParams::new(self.alpha, 2)?;
        let a = self.alpha;
        let rx = norm_sq(&self.x).sqrt();
        let phi0 = angle(&self.x);
        let xp = Point::new(self.x.clone())?;

        // collapse: integrate the exit point out numerically and compare shapes
        let quad = QuadratureSpec::adaptive(1e-12);
        let mut ratios = vec![];
        for z in &self.collapse_points {
            let zp = Point::new(z.clone())?;
            let mut failed = None;
            // |v| = 1 + t / (1 - t)
            let v = integrate(
                |t| {
                    if t >= 1.0 {
                        return 0.0;
                    }
                    let r = 1.0 + t / (1.0 - t);
                    let jac = 1.0 / ((1.0 - t) * (1.0 - t));
                    let inner = integrate(
                        |ph| {
                            let v = Point::from_slice(&[r * ph.cos(), r * ph.sin()]);
                            joint_reach_exit_density(&zp, &v, &xp, &p).unwrap_or(0.0)
                        },
                        -PI,
                        PI,
                        &quad,
                    );
                    match inner {
                        Ok(q) => q.value * r * jac,
                        Err(e) => {
                            failed.get_or_insert(e);
                            0.0
                        }
                    }
                },
                0.0,
                1.0,
                &quad,
            )?;
            if let Some(e) = failed {
                return Err(e);
            }
            ratios.push(v.value / furthest_reach_density(&zp, &xp, &p)?);
        }
        let fitted = ratios.iter().sum::<f64>() / ratios.len() as f64;
        let shape = ratios.iter().map(|r| (r / fitted - 1.0).abs()).fold(0.0, f64::max);
        report.push(
            Criterion::at_most("collapse_shape", shape, self.shape_tol, "exit point integrated out")
                .with_detail(serde_json::json!({ "fitted_constant": fitted, "ratios": ratios })),
        );

        // cells in (|z|, |v|, angle of z)
        let w_law = Beta::new(a / 2.0, 1.0 - a / 2.0).map_err(|e| Error::Domain(e.to_string()))?;
        let z_edges: Vec<f64> = (0..=self.z_bins)
            .map(|k| match k {
                0 => rx,
                k if k == self.z_bins => 1.0,
                k => (rx * rx + (1.0 - rx * rx) * w_law.inverse_cdf(k as f64 / self.z_bins as f64)).sqrt(),
            })
            .collect();
        let floor = 0.5 * z_edges.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        let w_edges: Vec<f64> = (0..=self.z_bins)
            .map(|k| match k {
                0 => 0.0,
                k if k == self.z_bins => 1.0,
                k => w_law.inverse_cdf(k as f64 / self.z_bins as f64),
            })
            .collect();
        let mut v_edges = self.v_edges.clone();
        v_edges.push(f64::INFINITY);
        let phis = phi_edges(self.angle_bins);
        let c_joint = Constants::new(&p)?.c_joint;
        let omega = sphere_area(2);
        let shell = move |rz: f64, lo: f64, hi: f64| {
            let tail = |b: f64| if b.is_infinite() { 0.0 } else { (b * b - rz * rz).powf(-a / 2.0) };
            omega / a * (tail(lo) - tail(hi))
        };
        let nv = v_edges.len() - 1;
        let cells: Vec<(usize, usize, usize)> = (0..self.z_bins)
            .flat_map(|i| (0..nv).flat_map(move |k| (0..self.angle_bins).map(move |j| (i, k, j))))
            .collect();
        let expected: Vec<Result<f64>> = cells
            .par_iter()
            .map(|&(i, k, j)| {
                // w = (|z|^2 - |x|^2) / (1 - |x|^2); the angle of z integrates in closed form
                let s2 = 1.0 - rx * rx;
                let f = |w: f64| {
                    let rho = (rx * rx + s2 * w).sqrt();
                    let tail = shell(rho, v_edges[k], v_edges[k + 1]) * (1.0 - w).powf(a / 2.0);
                    c_joint * s2.powf(a / 2.0) * tail * angular_bracket(rho, rx, (phis[j], phis[j + 1]))
                };
                beta_cell(f, a / 2.0, 1.0 - a / 2.0, w_edges[i], w_edges[i + 1], 1e-13)
            })
            .collect();
        let expected = expected.into_iter().collect::<Result<Vec<f64>>>()?;
        let total: f64 = expected.iter().sum();

        let policy = StepPolicy::default().with_h(self.h);
        let stop = StopRule::ExitBall(1.0);
        let kappa = self.record_kappa;
        let rows: Vec<Result<(Vec<f64>, Vec<f64>, bool)>> = (0..self.n)
            .into_par_iter()
            .map(|i| {
                let mut rng = RngStream::new(self.seed, i as u64);
                let mut best = f64::NEG_INFINITY;
                let mut z = self.x.clone();
                // the start node is left out: the supremum is never attained at time 0
                let end = walk(&p, &self.x, &policy, &stop, &[], &mut rng, |idx, _, y| {
                    let r = norm_sq(y).sqrt();
                    if idx == 0 {
                        return Visit::Cap(record_cap(a, kappa, 0.0, floor));
                    }
                    if r > 1.0 {
                        return Visit::Continue;
                    }
                    if r > best {
                        best = r;
                        z.copy_from_slice(y);
                    }
                    Visit::Cap(record_cap(a, kappa, best - r, (best - rx).min(1.0 - best).max(floor)))
                })?;
                Ok((z, end.x, end.unresolved))
            })
            .collect();
        let mut observed = vec![0.0; cells.len()];
        let mut unresolved = 0;
        for row in rows {
            let (z, v, u) = row?;
            unresolved += u as usize;
            let mut ph = angle(&z) - phi0;
            if ph <= -PI {
                ph += 2.0 * PI;
            } else if ph > PI {
                ph -= 2.0 * PI;
            }
            let cell = (
                bin_of(&z_edges, norm_sq(&z).sqrt()),
                bin_of(&v_edges[..nv], norm_sq(&v).sqrt()).or(Some(nv - 1)),
                bin_of(&phis, ph),
            );
            if let (Some(i), Some(k), Some(j)) = cell {
                observed[(i * nv + k) * self.angle_bins + j] += 1.0;
            }
        }
        let m: f64 = self.n as f64;
        let exp_counts: Vec<f64> = expected.iter().map(|e| e / total * m).collect();
        let chi = chi2_gof(&observed, &exp_counts, 5.0, 0)?;
        report.histograms.push(Histogram {
            name: "joint_reach_cells".into(),
            edges: (0..=cells.len()).map(|i| i as f64).collect(),
            estimate: observed.iter().map(|o| o / m).collect(),
            reference: expected.iter().map(|e| e / total).collect(),
        });
        report.push(
            Criterion::at_least("chi2_cells", chi.p_value, LEVEL, "closed-form shell integral")
                .with_detail(serde_json::json!({ "chi2": chi, "cell_mass_total": total })),
        );
        report.note(format!("{unresolved} of {} paths had a sphere crossing on a floored step", self.n));
        Ok(())
    }
}
