//! Limits of epsilon-conditioning, the hitting distribution, and the
//! normalisation of the weighted estimators.

use serde::{Deserialize, Serialize};

use super::stats::tv_distance;
use super::{Criterion, ExperimentReport, Histogram};
use crate::conditioned::{
    default_policy, h_expectation, h_weighted_sample, hitting_fraction, ConditionedLaw, EpsKind, EpsRun, EpsilonSummary,
    Estimate, LawKind, WeightedSample, RECORD_KAPPA,
};
use crate::error::{domain, Error, Result};
use crate::geometry::{norm_sq, Point, SphereRegion, StableParams};
use crate::harmonic::{closest_reach_density, hitting_distribution};
use crate::specfun::{cap_integral_with_pole, integrate, QuadratureSpec};

/// Coarse cells for a marginal at a fixed time: radius bands times angle
/// sectors about the start direction (planar), plus one cell for killed mass.
#[derive(Clone, Debug)]
struct Cells {
    radii: Vec<f64>,
    sectors: usize,
    axis: Vec<f64>,
}

impl Cells {
    fn count(&self) -> usize {
        (self.radii.len() + 1) * self.sectors + 1
    }

    fn dead(&self) -> usize {
        self.count() - 1
    }

    fn index(&self, y: &[f64]) -> usize {
        let r = norm_sq(y).sqrt();
        let ri = self.radii.partition_point(|e| *e <= r);
        let c: f64 = y.iter().zip(&self.axis).map(|(a, b)| a * b).sum::<f64>() / r.max(1e-300);
        let ang = c.clamp(-1.0, 1.0).acos();
        let si = ((ang / std::f64::consts::PI * self.sectors as f64) as usize).min(self.sectors - 1);
        ri * self.sectors + si
    }

    /// Sub-probability masses of the weighted h-transform sample.
    fn from_weighted(&self, s: &WeightedSample) -> Vec<f64> {
        let mut m = vec![0.0; self.count()];
        let n = s.len() as f64;
        for i in 0..s.len() {
            if s.weights[i] > 0.0 {
                m[self.index(s.point(i))] += s.weights[i] / n;
            }
        }
        let alive: f64 = m.iter().sum();
        m[self.dead()] = 1.0 - alive;
        m
    }

    fn from_eps(&self, s: &EpsilonSummary, dim: usize) -> Vec<f64> {
        let mut m = vec![0.0; self.count()];
        let acc = s.accepted as f64;
        for y in s.alive_points.chunks(dim) {
            m[self.index(y)] += 1.0 / acc;
        }
        m[self.dead()] = s.dead as f64 / acc;
        m
    }
}

fn on_axis(dim: usize, r: f64) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[0] = r;
    v
}

// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Theorem1Check {
    pub alpha: f64,
    pub dim: usize,
    pub region: SphereRegion,
    pub x_out: f64,
    pub x_in: f64,
    pub t: f64,
    /// Decreasing; the marginals are compared at each of these.
    pub eps: Vec<f64>,
    /// Decreasing pair for the rate ratios.
    pub rate_eps: (f64, f64),
    pub n_eps: usize,
    pub n_h: usize,
    pub h: f64,
    pub record_kappa: f64,
    pub tv_max: f64,
    pub rate_tol: f64,
    pub include_vee_alt: bool,
    pub seed: u64,
}

impl Default for Theorem1Check {
    fn default() -> Self {
        Theorem1Check {
            alpha: 1.0,
            dim: 2,
            region: SphereRegion::full(2),
            x_out: 2.0,
            x_in: 0.5,
            t: 0.5,
            eps: vec![0.4, 0.2, 0.1],
            rate_eps: (0.1, 0.05),
            n_eps: 200_000,
            n_h: 100_000,
            h: 1e-3,
            record_kappa: RECORD_KAPPA,
            tv_max: 0.05,
            rate_tol: 0.1,
            include_vee_alt: true,
            seed: 7,
        }
    }
}

impl Theorem1Check {
    pub fn validate(&self) -> Result<()> {
        StableParams::new(self.alpha, self.dim)?;
        if self.region.dim() != self.dim {
            return domain("region dimension differs from d");
        }
        if !(self.x_out > 1.0 && self.x_in > 0.0 && self.x_in < 1.0 && self.t > 0.0) {
            return domain("need |x_out| > 1, 0 < |x_in| < 1 and t > 0");
        }
        if self.eps.len() < 2 || self.eps.windows(2).any(|w| !(w[1] < w[0])) || !(self.rate_eps.1 < self.rate_eps.0) {
            return domain("eps lists must decrease");
        }
        Ok(())
    }

    fn cells(&self, r: f64) -> Cells {
        let radii = if r > 1.0 { vec![1.25, 1.5, 2.0, 2.5, 3.0, 4.0] } else { vec![0.25, 0.5, 0.75, 0.9] };
        Cells { radii, sectors: 4, axis: on_axis(self.dim, 1.0) }
    }

    pub fn run(&self, report: &mut ExperimentReport) -> Result<()> {
        let p = StableParams::new(self.alpha, self.dim)?;
        let policy = default_policy(self.h);
        let mut all_eps = self.eps.clone();
        all_eps.extend([self.rate_eps.0, self.rate_eps.1]);
        all_eps.sort_by(|a, b| b.total_cmp(a));
        all_eps.dedup();
        let find = |v: &[EpsilonSummary], e: f64| v.iter().find(|s| s.eps == e).cloned().expect("eps simulated");

        let mut kinds = vec![(EpsKind::Vee, LawKind::AttractOutside, self.x_out), (EpsKind::Wedge, LawKind::AttractInside, self.x_in)];
        if self.include_vee_alt {
            kinds.push((EpsKind::VeeAlt, LawKind::AttractOutside, self.x_out));
        }
        for (k, (kind, law_kind, r)) in kinds.into_iter().enumerate() {
            let tag = format!("{kind:?}").to_lowercase();
            let x = on_axis(self.dim, r);
            let run = EpsRun {
                kind,
                region: &self.region,
                params: &p,
                x: &x,
                t_marg: self.t,
                n: self.n_eps,
                policy: &policy,
                seed: self.seed.wrapping_add(k as u64),
                record_kappa: self.record_kappa,
            };
            let summaries = run.summaries(&all_eps)?;
            let law = ConditionedLaw::new(law_kind, Some(self.region.clone()), p)?;
            let hs = h_weighted_sample(&law, &x, self.t, self.n_h, &policy, self.seed.wrapping_add(100 + k as u64))?;
            let cells = self.cells(r);
            let reference = cells.from_weighted(&hs);
            let mut tvs = vec![];
            for &e in &self.eps {
                let s = find(&summaries, e);
                let est = cells.from_eps(&s, self.dim);
                tvs.push(tv_distance(&est, &reference));
                if e == *self.eps.last().expect("nonempty") {
                    report.histograms.push(Histogram {
                        name: format!("{tag}_cells_eps_{e}"),
                        edges: (0..=cells.count()).map(|i| i as f64).collect(),
                        estimate: est,
                        reference: reference.clone(),
                    });
                }
            }
            let monotone = tvs.windows(2).all(|w| w[1] < w[0]);
            report.push(Criterion {
                verdict: if monotone { super::Verdict::Pass } else { super::Verdict::Fail },
                ..Criterion::at_most(format!("{tag}_tv_decreasing"), tvs[tvs.len() - 1], tvs[tvs.len() - 2], "weighted h-transform")
            }
            .with_detail(serde_json::json!({ "eps": self.eps, "tv": tvs })));
            report.push(Criterion::at_most(format!("{tag}_tv_final"), tvs[tvs.len() - 1], self.tv_max, "weighted h-transform"));

            let (e0, e1) = self.rate_eps;
            let (s0, s1) = (find(&summaries, e0), find(&summaries, e1));
            let power = match kind {
                EpsKind::Vee => Some(self.alpha - self.dim as f64),
                EpsKind::Wedge => Some(self.alpha / 2.0 - 1.0),
                EpsKind::VeeAlt => None,
            };
            if let Some(q) = power {
                let (r0, r1) = (s0.selection.estimate * e0.powf(q), s1.selection.estimate * e1.powf(q));
                let ratio = r0 / r1;
                let rel = |s: &EpsilonSummary| s.selection.stderr / s.selection.estimate;
                let se = ratio * (rel(&s0).powi(2) + rel(&s1).powi(2)).sqrt();
                report.push(
                    Criterion::close(format!("{tag}_rate_ratio"), ratio, se, 1.0, "scaling limit", self.rate_tol)
                        .with_detail(serde_json::json!({
                            "power": q,
                            "scaled": [r0, r1],
                            "accepted": [s0.accepted, s1.accepted],
                        })),
                );
            }
            let unresolved = summaries.first().map(|s| s.unresolved).unwrap_or(0);
            report.note(format!("{tag}: {unresolved} of {} paths had a sphere crossing on a floored step", self.n_eps));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HitCase {
    pub alpha: f64,
    pub region: SphereRegion,
    pub sub: SphereRegion,
    pub x: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HitdistCheck {
    pub cases: Vec<HitCase>,
    pub eps: f64,
    pub n: usize,
    pub h: f64,
    pub record_kappa: f64,
    pub sigmas: f64,
    pub seed: u64,
}

impl Default for HitdistCheck {
    fn default() -> Self {
        use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_3, FRAC_PI_6};
        let arc = |angle: f64, half: f64| {
            SphereRegion::cap(Point::from_slice(&[angle.cos(), angle.sin()]), half).expect("valid arc")
        };
        let e3 = Point::basis(3, 2);
        HitdistCheck {
            cases: vec![
                HitCase { alpha: 1.0, region: SphereRegion::full(2), sub: arc(0.0, FRAC_PI_4), x: vec![2.0, 0.0] },
                HitCase { alpha: 1.5, region: arc(0.0, FRAC_PI_2), sub: arc(FRAC_PI_4, FRAC_PI_4), x: vec![-1.5, 0.5] },
                HitCase {
                    alpha: 0.8,
                    region: SphereRegion::cap(e3.clone(), FRAC_PI_3).expect("valid cap"),
                    sub: SphereRegion::cap(e3, FRAC_PI_6).expect("valid cap"),
                    x: vec![1.2, 0.0, 1.2],
                },
            ],
            eps: 0.02,
            n: 1_000_000,
            h: 1e-3,
            record_kappa: RECORD_KAPPA,
            sigmas: 3.0,
            seed: 8,
        }
    }
}

/// `P(z in A'_eps) / P(z in A_eps)` for the closest reach `z`, by quadrature.
pub(crate) fn finite_eps_fraction(case: &HitCase, eps: f64) -> Result<f64> {
    let dim = case.x.len();
    let p = StableParams::new(case.alpha, dim)?;
    let xp = Point::new(case.x.clone())?;
    let rx = xp.norm();
    let pole: Vec<f64> = case.x.iter().map(|c| c / rx).collect();
    let quad = QuadratureSpec::adaptive(1e-11);
    let mass = |region: &SphereRegion| -> Result<f64> {
        let mut failed = None;
        let v = integrate(
            |r| {
                let f = |th: &[f64]| {
                    let z = Point::from_slice(&th.iter().map(|c| c * r).collect::<Vec<_>>());
                    closest_reach_density(&z, &xp, &p).unwrap_or(0.0)
                };
                match cap_integral_with_pole(&f, region, &quad, Some(&pole)) {
                    Ok(v) => v * r.powi(dim as i32 - 1),
                    Err(e) => {
                        failed.get_or_insert(e);
                        0.0
                    }
                }
            },
            1.0,
            1.0 + eps,
            &quad,
        )?;
        match failed {
            Some(e) => Err(e),
            None => Ok(v.value),
        }
    };
    Ok(mass(&case.sub)? / mass(&case.region)?)
}

impl HitdistCheck {
    pub fn validate(&self) -> Result<()> {
        for c in &self.cases {
            let d = c.x.len();
            StableParams::new(c.alpha, d)?;
            if c.region.dim() != d || c.sub.dim() != d || !c.sub.is_subset_of(&c.region) || !(norm_sq(&c.x) > 1.0) {
                return domain("hitting cases need S' within S, matching dimensions and |x| > 1");
            }
        }
        if !(self.eps > 0.0 && self.eps < 1.0) || self.n < 100 {
            return domain("hitting check needs eps in (0, 1) and n >= 100");
        }
        Ok(())
    }

    pub fn run(&self, report: &mut ExperimentReport) -> Result<()> {
        let policy = default_policy(self.h);
        let quad = QuadratureSpec::adaptive(1e-11);
        for (k, c) in self.cases.iter().enumerate() {
            let p = StableParams::new(c.alpha, c.x.len())?;
            let run = EpsRun {
                kind: EpsKind::Vee,
                region: &c.region,
                params: &p,
                x: &c.x,
                t_marg: 0.0,
                n: self.n,
                policy: &policy,
                seed: self.seed.wrapping_add(k as u64),
                record_kappa: self.record_kappa,
            };
            let s = run.summaries(&[self.eps])?.remove(0);
            let est = hitting_fraction(&s, &c.region, &c.sub);
            let limit = hitting_distribution(&c.sub, &c.region, &Point::new(c.x.clone())?, &quad)?;
            let finite = finite_eps_fraction(c, self.eps)?;
            report.push(
                Criterion::close(format!("hitdist[{k}]"), est.estimate, est.stderr, limit, "kernel quadrature", self.sigmas * est.stderr)
                    .with_detail(serde_json::json!({ "accepted": s.accepted, "finite_eps_reference": finite })),
            );
            report.push(Criterion::close(
                format!("hitdist_finite_eps[{k}]"),
                est.estimate,
                est.stderr,
                finite,
                "closest-reach quadrature",
                self.sigmas * est.stderr,
            ));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MartingaleCheck {
    /// `(alpha, d)` pairs.
    pub params: Vec<(f64, usize)>,
    pub times: Vec<f64>,
    pub x_out: f64,
    pub x_in: f64,
    pub n: usize,
    pub h: f64,
    pub sigmas: f64,
    pub seed: u64,
}

impl Default for MartingaleCheck {
    fn default() -> Self {
        MartingaleCheck {
            params: vec![(1.0, 2), (1.5, 2), (0.8, 3)],
            times: vec![0.25, 1.0],
            x_out: 2.0,
            x_in: 0.5,
            n: 20_000,
            h: 1e-3,
            sigmas: 3.0,
            seed: 9,
        }
    }
}

impl MartingaleCheck {
    pub fn validate(&self) -> Result<()> {
        for &(a, d) in &self.params {
            StableParams::new(a, d)?;
        }
        if !(self.x_out > 1.0 && self.x_in > 0.0 && self.x_in < 1.0) || self.times.iter().any(|t| !(*t > 0.0)) {
            return domain("need |x_out| > 1, 0 < |x_in| < 1 and positive times");
        }
        Ok(())
    }

    pub fn run(&self, report: &mut ExperimentReport) -> Result<()> {
        let policy = default_policy(self.h);
        let mut jobs = vec![];
        for &(a, d) in &self.params {
            for kind in LawKind::ALL {
                for &t in &self.times {
                    jobs.push((a, d, kind, t));
                }
            }
        }
        for (j, &(a, d, kind, t)) in jobs.iter().enumerate() {
            let p = StableParams::new(a, d)?;
            let law = ConditionedLaw::new(kind, Some(SphereRegion::full(d)), p)?;
            let r = match kind {
                LawKind::AttractOutside | LawKind::RepelOutside => self.x_out,
                LawKind::AttractInside | LawKind::RepelInside | LawKind::AbsorbOrigin => self.x_in,
            };
            let x = on_axis(d, r);
            let e = match h_expectation(&law, &x, t, |_| 1.0, self.n, &policy, self.seed.wrapping_add(j as u64)) {
                Ok(e) => e,
                Err(Error::DegenerateEnsemble { .. }) => Estimate { estimate: 0.0, stderr: 0.0 },
                Err(err) => return Err(err),
            };
            report.push(Criterion::close(
                format!("normalisation[{kind:?},a={a},d={d},t={t}]"),
                e.estimate,
                e.stderr,
                1.0,
                "harmonic normaliser",
                self.sigmas * e.stderr,
            ));
        }
        Ok(())
    }
}
