//! Time reversal at a last exit, compared with the attracted laws through
//! binned one-step transition kernels.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rbz::mass_p;
use super::stats::{energy_distance_test, Sample};
use super::{Criterion, ExperimentReport, Verdict, LEVEL};
use crate::conditioned::{default_policy, h_weighted_endpoint, ConditionedLaw, Estimate, LawKind};
use crate::error::{domain, Error, Result};
use crate::geometry::{norm_sq, uniform_direction, SphereRegion, StableParams};
use crate::harmonic::h_out_radius;
use crate::sampling::{simulate_path, RngStream, StopReason, StopRule};
use crate::transforms::{rbz_transform, time_reverse, LTimeRule};

/// Which half of the duality: reversed ball-avoiding paths against the law
/// attracted from outside, or their inversions against the law attracted
/// from inside.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DualitySide {
    Exterior,
    Interior,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DualityCheck {
    pub alpha: f64,
    pub dim: usize,
    /// Only the full sphere is supported: pairs are rotated onto one axis.
    pub region: SphereRegion,
    /// Radius of the last-exit ball.
    pub radius: f64,
    pub delta: f64,
    /// Attempted paths per ensemble.
    pub n: usize,
    pub bins: usize,
    pub gaps: Vec<f64>,
    /// Pair start times are uniform on `[0, s_max]`, independent of the path.
    pub s_max: f64,
    pub far: f64,
    pub h: f64,
    pub permutations: usize,
    pub min_pairs: usize,
    pub pass_fraction: f64,
    pub sides: Vec<DualitySide>,
    /// Rerun with `delta / 2` and with `h / 2`.
    pub halving: bool,
    pub seed: u64,
}

impl Default for DualityCheck {
    fn default() -> Self {
        DualityCheck {
            alpha: 1.0,
            dim: 2,
            region: SphereRegion::full(2),
            radius: 3.0,
            delta: 1e-3,
            n: 100_000,
            bins: 12,
            gaps: vec![0.05, 0.2],
            s_max: 1.0,
            far: 1e3,
            h: 1e-3,
            permutations: 199,
            min_pairs: 100,
            pass_fraction: 0.8,
            sides: vec![DualitySide::Exterior, DualitySide::Interior],
            halving: true,
            seed: 11,
        }
    }
}

/// One reversed transition: the state at `s`, the state at `s + gap` (if the
/// reversed path still runs), and a draw of the attracted law from the same
/// state, all reflected so that the start lies on the first axis.
#[derive(Clone, Debug)]
struct Pair {
    side: DualitySide,
    gap: usize,
    bin: usize,
    end: Option<Vec<f64>>,
    reference: (Vec<f64>, f64),
}

/// Per-bin outcome.
#[derive(Clone, Debug, Serialize)]
struct BinResult {
    gap: f64,
    bin: usize,
    pairs: usize,
    energy_p: Option<f64>,
    mass_p: f64,
    verdict: Verdict,
}

/// Householder reflection taking `u / |u|` to the first axis.
fn reflector(u: &[f64]) -> impl Fn(&[f64]) -> Vec<f64> {
    let r = norm_sq(u).sqrt();
    let mut v: Vec<f64> = u.iter().map(|c| c / r).collect();
    v[0] -= 1.0;
    let vv = norm_sq(&v);
    move |x: &[f64]| {
        if vv < 1e-30 {
            return x.to_vec();
        }
        let c = 2.0 * x.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() / vv;
        x.iter().zip(&v).map(|(a, b)| a - c * b).collect()
    }
}

impl DualityCheck {
    pub fn validate(&self) -> Result<()> {
        let p = StableParams::new(self.alpha, self.dim)?;
        if !(p.alpha() < p.d()) {
            return domain("duality check needs alpha < d");
        }
        if !matches!(self.region, SphereRegion::FullSphere { .. }) || self.region.dim() != self.dim {
            return domain("duality check supports the full sphere only");
        }
        if !(self.radius > 1.0 + self.delta) || !(self.delta > 0.0) || !(self.far > self.radius) {
            return domain("need 0 < delta, 1 + delta < radius < far");
        }
        if self.bins == 0 || self.gaps.is_empty() || self.gaps.len() > 4 || self.gaps.iter().any(|g| !(*g > 0.0)) {
            return domain("need at least one bin and one to four positive gaps");
        }
        if !(self.s_max > 0.0) || !(self.h > 0.0) || self.sides.is_empty() {
            return domain("need s_max > 0, h > 0 and at least one side");
        }
        if !(self.pass_fraction > 0.0 && self.pass_fraction <= 1.0) {
            return domain("pass fraction must lie in (0, 1]");
        }
        Ok(())
    }

    fn edges(&self, side: DualitySide) -> (f64, f64) {
        match side {
            DualitySide::Exterior => (1.0, self.radius),
            DualitySide::Interior => (1.0 / self.radius, 1.0),
        }
    }

    fn bin_of(&self, side: DualitySide, r: f64) -> Option<usize> {
        let (lo, hi) = self.edges(side);
        if !(r > lo && r <= hi) {
            return None;
        }
        Some((((r - lo) / (hi - lo) * self.bins as f64) as usize).min(self.bins - 1))
    }

    /// Reversed pairs of one attempted path. With `condition`, the path is
    /// kept only if it avoids the ball and survives the far-field coin.
    #[allow(clippy::too_many_arguments)]
    fn path_pairs(
        &self,
        p: &StableParams,
        delta: f64,
        h: f64,
        condition: bool,
        sides: &[DualitySide],
        seed: u64,
        i: usize,
    ) -> Result<Vec<Pair>> {
        let mut rng = RngStream::new(seed, i as u64);
        let a = uniform_direction(self.dim, &mut rng);
        let x0 = a.scale(1.0 + delta);
        let policy = default_policy(h);
        let stop = if condition {
            StopRule::First(vec![StopRule::EnterBall(1.0), StopRule::FarField(self.far)])
        } else {
            StopRule::FarField(self.far)
        };
        let path = simulate_path(p, &x0, &policy, &stop, &mut rng)?;
        match path.stop {
            StopReason::FarField => {}
            StopReason::EnterBall => return Ok(vec![]),
            other => return Err(Error::Path(format!("duality path stopped by {other:?}"))),
        }
        if condition && rng.gen::<f64>() >= h_out_radius(path.radius(path.len() - 1), p)? {
            return Ok(vec![]);
        }
        let mut out = vec![];
        for (si, &side) in sides.iter().enumerate() {
            let rev = match side {
                DualitySide::Exterior => time_reverse(&path, LTimeRule::LastExitBall(self.radius))?,
                DualitySide::Interior => {
                    let k = rbz_transform(&path, p)?;
                    if k.stop == StopReason::Truncated {
                        continue;
                    }
                    time_reverse(&k, LTimeRule::LastOutsideBall(1.0 / self.radius))?
                }
            };
            let law = ConditionedLaw::new(
                match side {
                    DualitySide::Exterior => LawKind::AttractOutside,
                    DualitySide::Interior => LawKind::AttractInside,
                },
                Some(self.region.clone()),
                *p,
            )?;
            for (gi, &g) in self.gaps.iter().enumerate() {
                let s = rng.gen::<f64>() * self.s_max;
                if s > rev.end_time() {
                    continue;
                }
                let y = rev.point(rev.index_at(s).expect("s >= 0"));
                let Some(bin) = self.bin_of(side, norm_sq(y).sqrt()) else { continue };
                let reflect = reflector(y);
                let end = (s + g <= rev.end_time()).then(|| reflect(rev.point(rev.index_at(s + g).expect("positive"))));
                let y1 = reflect(y);
                let mut rrng = RngStream::new(seed.wrapping_add(0x9e37), ((i as u64) << 4) | ((si as u64) << 2) | gi as u64);
                let reference = h_weighted_endpoint(&law, &y1, g, &policy, &mut rrng)?;
                out.push(Pair { side, gap: gi, bin, end, reference });
            }
        }
        Ok(out)
    }

    fn pairs(&self, p: &StableParams, delta: f64, h: f64, condition: bool, sides: &[DualitySide], seed: u64) -> Result<(Vec<Pair>, usize)> {
        let per: Vec<Result<Vec<Pair>>> =
            (0..self.n).into_par_iter().map(|i| self.path_pairs(p, delta, h, condition, sides, seed, i)).collect();
        let mut all = vec![];
        let mut kept = 0;
        for r in per {
            let v = r?;
            kept += !v.is_empty() as usize;
            all.extend(v);
        }
        Ok((all, kept))
    }

    fn bin_results(&self, pairs: &[Pair], side: DualitySide, seed: u64) -> Result<Vec<BinResult>> {
        let mut out = vec![];
        for (gi, &g) in self.gaps.iter().enumerate() {
            for b in 0..self.bins {
                let cell: Vec<&Pair> = pairs.iter().filter(|q| q.side == side && q.gap == gi && q.bin == b).collect();
                let n = cell.len();
                if n < self.min_pairs {
                    out.push(BinResult { gap: g, bin: b, pairs: n, energy_p: None, mass_p: f64::NAN, verdict: Verdict::Inconclusive });
                    continue;
                }
                let mut rev = Sample::new(self.dim);
                let mut refs = Sample::new(self.dim);
                let mut w = vec![];
                for q in &cell {
                    if let Some(z) = &q.end {
                        rev.push(z, 1.0);
                    }
                    w.push(q.reference.1);
                    if q.reference.1 > 0.0 {
                        refs.push(&q.reference.0, q.reference.1);
                    }
                }
                let alive = rev.len();
                let mass_rev = Estimate { estimate: alive as f64 / n as f64, stderr: 0.0 };
                let mass_rev = Estimate {
                    stderr: (mass_rev.estimate * (1.0 - mass_rev.estimate) / n as f64).sqrt(),
                    ..mass_rev
                };
                let m = mass_p(mass_rev, Estimate::from_values(&w));
                let e = match energy_distance_test(&rev, &refs, self.permutations, LEVEL, seed.wrapping_add((gi * self.bins + b) as u64)) {
                    Ok(t) => Some(t.p_value),
                    Err(Error::SmallSample { .. }) => None,
                    Err(err) => return Err(err),
                };
                // two tests per bin share the level
                let ok = m >= LEVEL / 2.0 && e.map_or(true, |p| p >= LEVEL / 2.0);
                out.push(BinResult {
                    gap: g,
                    bin: b,
                    pairs: n,
                    energy_p: e,
                    mass_p: m,
                    verdict: if ok { Verdict::Pass } else { Verdict::Fail },
                });
            }
        }
        Ok(out)
    }

    fn push_side(&self, report: &mut ExperimentReport, name: &str, bins: &[BinResult], control: bool) {
        let conclusive = bins.iter().filter(|b| b.verdict != Verdict::Inconclusive).count();
        let passing = bins.iter().filter(|b| b.verdict == Verdict::Pass).count();
        let frac = if conclusive == 0 { 0.0 } else { passing as f64 / conclusive as f64 };
        let detail: Vec<serde_json::Value> = bins
            .iter()
            .map(|b| {
                serde_json::json!({
                    "gap": b.gap,
                    "bin": b.bin,
                    "pairs": b.pairs,
                    "energy_p": b.energy_p,
                    "mass_p": if b.mass_p.is_nan() { None } else { Some(b.mass_p) },
                    "verdict": b.verdict,
                })
            })
            .collect();
        let detail = serde_json::json!({ "conclusive": conclusive, "passing": passing, "bins": detail });
        let c = if control {
            let mut c = Criterion::at_most(name, frac, self.pass_fraction, "mismatched pair");
            if conclusive == 0 || frac >= self.pass_fraction {
                c.verdict = Verdict::Fail;
            }
            c
        } else {
            let mut c = Criterion::at_least(name, frac, self.pass_fraction, "attracted-law weighting");
            if conclusive == 0 {
                c.verdict = Verdict::Fail;
            }
            c
        };
        report.push(c.with_detail(detail));
    }

    pub fn run(&self, report: &mut ExperimentReport) -> Result<()> {
        let p = StableParams::new(self.alpha, self.dim)?;
        let tag = |s: DualitySide| format!("{s:?}").to_lowercase();
        let mut runs = vec![("", self.delta, self.h, 0u64)];
        if self.halving {
            runs.push(("[delta/2]", self.delta / 2.0, self.h, 1));
            runs.push(("[h/2]", self.delta, self.h / 2.0, 2));
        }
        for (suffix, delta, h, k) in runs {
            let seed = self.seed.wrapping_add(100 * k);
            let (pairs, kept) = self.pairs(&p, delta, h, true, &self.sides, seed)?;
            report.note(format!("duality{suffix}: {kept} of {} paths kept, {} pairs", self.n, pairs.len()));
            for &side in &self.sides {
                let bins = self.bin_results(&pairs, side, seed.wrapping_add(7))?;
                self.push_side(report, &format!("duality_{}_bins{suffix}", tag(side)), &bins, false);
            }
        }

        // reversed free paths do not follow the attracted law
        let seed = self.seed.wrapping_add(1000);
        let (pairs, _) = self.pairs(&p, self.delta, self.h, false, &[DualitySide::Exterior], seed)?;
        let bins = self.bin_results(&pairs, DualitySide::Exterior, seed.wrapping_add(7))?;
        self.push_side(report, "duality_negative_control", &bins, true);
        Ok(())
    }
}
