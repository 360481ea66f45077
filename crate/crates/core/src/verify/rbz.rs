//! Inversion `x -> x / |x|^2` with the clock `int |X|^{-2 alpha}`, checked in
//! law against the origin-conditioned process and, for paths conditioned to
//! avoid the ball, against the process conditioned to stay inside it.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::stats::{energy_distance_test, ks_radial, Sample};
use super::{Criterion, ExperimentConfig, ExperimentReport, LEVEL};
use crate::conditioned::{default_policy, h_weighted_sample, ConditionedLaw, Estimate, LawKind, WeightedSample};
use crate::error::{domain, Result};
use crate::geometry::{invert_in_place, norm_sq, Point, StableParams};
use crate::harmonic::h_out_radius;
use crate::sampling::{walk, Growth, GrowthReference, RngStream, StepPolicy, StopReason, StopRule, Visit};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RbzCheck {
    pub alpha: f64,
    pub dim: usize,
    /// Start of the free paths; the weighted side starts from its inverse.
    pub x: Vec<f64>,
    /// Transformed time of the unconditioned comparison.
    pub time: f64,
    /// Transformed times of the conditioned comparison.
    pub cond_times: Vec<f64>,
    pub n: usize,
    pub h: f64,
    /// Largest clock increment per step.
    pub clock_step: f64,
    pub far: f64,
    pub permutations: usize,
    /// Skip the unconditioned comparison and the negative control.
    pub conditioned_only: bool,
    pub seed: u64,
}

impl Default for RbzCheck {
    fn default() -> Self {
        RbzCheck {
            alpha: 1.0,
            dim: 2,
            x: vec![2.0, 0.0],
            time: 0.5,
            cond_times: vec![0.25, 0.5],
            n: 100_000,
            h: 1e-3,
            clock_step: 1e-3,
            far: 1e4,
            permutations: 199,
            conditioned_only: false,
            seed: 10,
        }
    }
}

/// Inverted states of one path at the requested transformed times; `None`
/// once the clock has stopped short of the time.
struct ClockRead {
    states: Vec<Option<Vec<f64>>>,
    accepted: bool,
}

/// Two-sided normal p-value of a difference of independent estimates.
pub(super) fn mass_p(a: Estimate, b: Estimate) -> f64 {
    let se = (a.stderr * a.stderr + b.stderr * b.stderr).sqrt();
    if se == 0.0 {
        return if a.estimate == b.estimate { 1.0 } else { 0.0 };
    }
    erfc((a.estimate - b.estimate).abs() / se / std::f64::consts::SQRT_2)
}

fn proportion(k: usize, n: usize) -> Estimate {
    let p = k as f64 / n as f64;
    Estimate { estimate: p, stderr: (p * (1.0 - p) / n as f64).sqrt() }
}

fn alive_sample(s: &WeightedSample) -> Result<Sample> {
    let mut pts = vec![];
    let mut w = vec![];
    for i in 0..s.len() {
        if s.weights[i] > 0.0 {
            pts.extend_from_slice(s.point(i));
            w.push(s.weights[i]);
        }
    }
    Sample::weighted(s.dim, pts, w)
}

/// Cosine of the angle to the first axis, as a one-dimensional sample.
fn cosines(s: &Sample) -> Result<Sample> {
    let mut pts = Vec::with_capacity(s.len());
    for i in 0..s.len() {
        let y = s.point(i);
        pts.push(y[0] / norm_sq(y).sqrt());
    }
    Sample::weighted(1, pts, s.weights.clone())
}

impl RbzCheck {
    pub fn validate(&self) -> Result<()> {
        let p = StableParams::new(self.alpha, self.dim)?;
        if !(p.alpha() < p.d()) {
            return domain("inversion check needs alpha < d");
        }
        if self.x.len() != self.dim {
            return domain("start point dimension does not match dim");
        }
        let r = norm_sq(&self.x).sqrt();
        if !(r > 1.0) || !(self.far > r) {
            return domain("need |x| > 1 and far > |x|");
        }
        if !(self.time > 0.0) || self.cond_times.is_empty() || self.cond_times.iter().any(|t| !(*t > 0.0)) {
            return domain("transformed times must be positive");
        }
        if self.n < 200 || !(self.h > 0.0) || !(self.clock_step > 0.0) {
            return domain("need n >= 200, h > 0 and clock_step > 0");
        }
        Ok(())
    }

    fn policy(&self) -> StepPolicy {
        StepPolicy { band: 0.0, min_step: 1e-12, ..StepPolicy::fixed(self.h) }.with_growth(Growth {
            reference: GrowthReference::Origin,
            from: 0.0,
            kappa: 0.01,
            power: None,
            max_step: 1e6,
        })
    }

    /// Free path from `x`, read on the inverted clock. With `avoid`, the path
    /// is kept only if it never enters the ball and then survives a final
    /// coin with probability `H(X_far)`.
    fn read(&self, p: &StableParams, x: &[f64], times: &[f64], avoid: bool, rng: &mut RngStream) -> Result<ClockRead> {
        let a2 = 2.0 * p.alpha();
        let t_max = times.iter().copied().fold(0.0, f64::max);
        let mut states: Vec<Option<Vec<f64>>> = vec![None; times.len()];
        let mut clock = 0.0;
        let (mut prev_t, mut prev_rate) = (0.0, 0.0);
        let mut prev = x.to_vec();
        let stop = if avoid {
            StopRule::First(vec![StopRule::EnterBall(1.0), StopRule::FarField(self.far)])
        } else {
            StopRule::FarField(self.far)
        };
        let clock_step = self.clock_step;
        let end = walk(p, x, &self.policy(), &stop, &[], rng, |i, t, y| {
            let r2 = norm_sq(y);
            let rate = r2.powf(-p.alpha());
            if i > 0 {
                clock += 0.5 * (rate + prev_rate) * (t - prev_t);
            }
            for (k, &tk) in times.iter().enumerate() {
                if states[k].is_none() && clock > tk {
                    let mut z = prev.clone();
                    invert_in_place(&mut z);
                    states[k] = Some(z);
                }
            }
            prev_t = t;
            prev_rate = rate;
            prev.copy_from_slice(y);
            if !avoid && clock > t_max {
                return Visit::Stop;
            }
            Visit::Cap(clock_step * r2.powf(a2 / 2.0))
        })?;
        let accepted = match end.reason {
            StopReason::FarField if avoid => rng.gen::<f64>() < h_out_radius(norm_sq(&end.x).sqrt(), p)?,
            StopReason::FarField | StopReason::Visitor => true,
            _ => false,
        };
        Ok(ClockRead { states, accepted })
    }

    fn ensemble(&self, p: &StableParams, x: &[f64], times: &[f64], avoid: bool, seed: u64) -> Result<Vec<ClockRead>> {
        (0..self.n).into_par_iter().map(|i| self.read(p, x, times, avoid, &mut RngStream::new(seed, i as u64))).collect()
    }

    /// Alive inverted states at time index `k` of accepted reads, and the
    /// alive fraction among accepted reads.
    fn at(reads: &[ClockRead], k: usize, dim: usize) -> (Sample, Estimate) {
        let mut pts = vec![];
        let mut accepted = 0;
        for r in reads.iter().filter(|r| r.accepted) {
            accepted += 1;
            if let Some(z) = &r.states[k] {
                pts.extend_from_slice(z);
            }
        }
        let s = Sample::unweighted(dim, pts);
        let m = proportion(s.len(), accepted.max(1));
        (s, m)
    }

    pub fn run(&self, report: &mut ExperimentReport) -> Result<()> {
        let p = StableParams::new(self.alpha, self.dim)?;
        let x = self.x.clone();
        let mut kx = x.clone();
        invert_in_place(&mut kx);
        let wpolicy = default_policy(self.h);
        if self.conditioned_only {
            self.conditioned(&p, &x, &kx, report)?;
            return Ok(());
        }

        // unconditioned paths against the origin-conditioned law
        let free = self.ensemble(&p, &x, &[self.time], false, self.seed)?;
        let (fs, fm) = Self::at(&free, 0, self.dim);
        let origin = ConditionedLaw::new(LawKind::AbsorbOrigin, None, p)?;
        let ws = h_weighted_sample(&origin, &kx, self.time, self.n, &wpolicy, self.seed.wrapping_add(1))?;
        let wm = ws.expectation(|_| 1.0);
        let e = energy_distance_test(&fs, &alive_sample(&ws)?, self.permutations, LEVEL, self.seed.wrapping_add(2))?;
        report.push(
            Criterion::at_least("rbz_unconditioned_energy_p", e.p_value, LEVEL, "origin-conditioned weighting")
                .with_detail(serde_json::json!({ "statistic": e.statistic, "threshold": e.threshold })),
        );
        report.push(
            Criterion::at_least("rbz_unconditioned_mass_p", mass_p(fm, wm), LEVEL, "origin-conditioned weighting")
                .with_detail(serde_json::json!({ "transformed": fm.estimate, "weighted": wm.estimate })),
        );

        let control = self.conditioned(&p, &x, &kx, report)?;

        // inverted free paths are not the inside-conditioned law
        let wa = match control {
            Some(wa) => wa,
            None => {
                let inside = ConditionedLaw::new(LawKind::RepelInside, None, p)?;
                let ws = h_weighted_sample(&inside, &kx, self.time, self.n, &wpolicy, self.seed.wrapping_add(30))?;
                alive_sample(&ws)?
            }
        };
        let neg = energy_distance_test(&fs, &wa, self.permutations, LEVEL, self.seed.wrapping_add(31))?;
        report.push(
            Criterion::at_most("rbz_negative_control_p", neg.p_value, LEVEL, "mismatched pair")
                .with_detail(serde_json::json!({ "statistic": neg.statistic, "threshold": neg.threshold })),
        );
        Ok(())
    }

    /// Paths avoiding the ball against the law conditioned to stay inside.
    /// Returns the weighted sample at `self.time` if one was drawn.
    fn conditioned(&self, p: &StableParams, x: &[f64], kx: &[f64], report: &mut ExperimentReport) -> Result<Option<Sample>> {
        let p = *p;
        let wpolicy = default_policy(self.h);
        let avoid = self.ensemble(&p, x, &self.cond_times, true, self.seed.wrapping_add(3))?;
        let accepted = avoid.iter().filter(|r| r.accepted).count();
        report.note(format!("{accepted} of {} paths accepted as ball-avoiding", self.n));
        let inside = ConditionedLaw::new(LawKind::RepelInside, None, p)?;
        let mut control = None;
        for (k, &t) in self.cond_times.iter().enumerate() {
            let (cs, cm) = Self::at(&avoid, k, self.dim);
            let ws = h_weighted_sample(&inside, kx, t, self.n, &wpolicy, self.seed.wrapping_add(10 + k as u64))?;
            let wa = alive_sample(&ws)?;
            let wm = ws.expectation(|_| 1.0);
            let ks = ks_radial(&cs, &wa)?;
            report.push(
                Criterion::at_least(format!("rbz_conditioned_radial_p[t={t}]"), ks.p_value, LEVEL, "inside-conditioned weighting")
                    .with_detail(serde_json::json!({ "statistic": ks.statistic, "n_eff": ks.n_eff })),
            );
            let ang = energy_distance_test(&cosines(&cs)?, &cosines(&wa)?, self.permutations, LEVEL, self.seed.wrapping_add(20 + k as u64))?;
            report.push(
                Criterion::at_least(format!("rbz_conditioned_angular_p[t={t}]"), ang.p_value, LEVEL, "inside-conditioned weighting")
                    .with_detail(serde_json::json!({ "statistic": ang.statistic, "threshold": ang.threshold })),
            );
            report.push(
                Criterion::at_least(format!("rbz_conditioned_mass_p[t={t}]"), mass_p(cm, wm), LEVEL, "inside-conditioned weighting")
                    .with_detail(serde_json::json!({ "transformed": cm.estimate, "weighted": wm.estimate })),
            );
            if t == self.time {
                control = Some(wa);
            }
        }
        Ok(control)
    }
}

/// Inverted paths from `x` conditioned to avoid the ball, against the law
/// conditioned to stay inside it started from the inverse of `x`.
pub fn rbz_conditioned_check(params: &StableParams, x: &Point, n: usize, seed: u64) -> Result<ExperimentReport> {
    ExperimentConfig::Rbz(RbzCheck {
        alpha: params.alpha(),
        dim: params.dim(),
        x: x.coords().to_vec(),
        n,
        conditioned_only: true,
        seed,
        ..RbzCheck::default()
    })
    .run()
}
