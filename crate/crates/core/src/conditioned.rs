//! Conditioned laws by h-transform weighting, and the direct
//! epsilon-conditioning they are the limits of.
//!
//! Every law here is a Doob transform of the free process killed on some
//! set, with the harmonic function taken from [`crate::harmonic`]. Weighted
//! estimators therefore carry no bias beyond the grid detection of the
//! killing time.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::geometry::{norm_sq, Point, SphereRegion, StableParams, UNIT_TOL};
use crate::harmonic::{h_in_radius, h_out_radius, h_s_fast};
use crate::sampling::{walk, Growth, GrowthReference, Path, RngStream, StepPolicy, StopReason, StopRule, Visit};
use crate::specfun::QuadratureSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LawKind {
    /// Attracted to `S` from outside the ball.
    AttractOutside,
    /// Attracted to `S` from inside the ball.
    AttractInside,
    /// Never enters the ball.
    RepelOutside,
    /// Never leaves the ball.
    RepelInside,
    /// Absorbed continuously at the origin.
    AbsorbOrigin,
}

impl LawKind {
    pub const ALL: [LawKind; 5] = [
        LawKind::AttractOutside,
        LawKind::AttractInside,
        LawKind::RepelOutside,
        LawKind::RepelInside,
        LawKind::AbsorbOrigin,
    ];
}

/// Default radius of the small ball around the origin that kills paths
/// under [`LawKind::AbsorbOrigin`].
pub const ORIGIN_EPS: f64 = 1e-4;

/// Offset used to move sphere starts just off the sphere.
pub const BOUNDARY_DELTA: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionedLaw {
    pub kind: LawKind,
    /// Required for the attracted kinds.
    pub region: Option<SphereRegion>,
    pub params: StableParams,
    #[serde(default = "default_origin_eps")]
    pub origin_eps: f64,
    #[serde(default)]
    pub quad: QuadratureSpec,
}

fn default_origin_eps() -> f64 {
    ORIGIN_EPS
}

impl ConditionedLaw {
    pub fn new(kind: LawKind, region: Option<SphereRegion>, params: StableParams) -> Result<Self> {
        let attract = matches!(kind, LawKind::AttractOutside | LawKind::AttractInside);
        match (&region, attract) {
            (None, true) => return domain("attracted laws need a target region S"),
            (Some(s), _) if s.dim() != params.dim() => return domain("region dimension differs from the process"),
            _ => {}
        }
        if !(params.alpha() < params.d()) {
            return domain("conditioned laws need alpha < d");
        }
        Ok(ConditionedLaw { kind, region, params, origin_eps: ORIGIN_EPS, quad: QuadratureSpec::adaptive(1e-10) })
    }

    /// Checks that `x` is an admissible start off the sphere.
    pub fn check_start(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.params.dim() {
            return domain("start dimension differs from the process");
        }
        let r = norm_sq(x).sqrt();
        let ok = match self.kind {
            LawKind::AttractOutside | LawKind::RepelOutside => r > 1.0 + UNIT_TOL,
            LawKind::AttractInside | LawKind::RepelInside => r > 0.0 && r < 1.0 - UNIT_TOL,
            LawKind::AbsorbOrigin => r > self.origin_eps,
        };
        if !ok {
            return domain(format!("start |x| = {r} is not admissible for {:?}", self.kind));
        }
        Ok(())
    }

    /// Moves a sphere start `theta` to `(1 +- delta) theta` on the side of the
    /// law; other starts are returned unchanged. Attracted laws reject
    /// sphere starts inside the closure of `S`.
    pub fn admissible_start(&self, x: &[f64], delta: f64) -> Result<Vec<f64>> {
        let r = norm_sq(x).sqrt();
        if (r - 1.0).abs() > UNIT_TOL || self.kind == LawKind::AbsorbOrigin {
            self.check_start(x)?;
            return Ok(x.to_vec());
        }
        if let Some(s) = &self.region {
            let th: Vec<f64> = x.iter().map(|c| c / r).collect();
            if s.angular_gap(&th) <= 1e-12 && matches!(self.kind, LawKind::AttractOutside | LawKind::AttractInside) {
                return domain("boundary starts must lie outside the closure of S");
            }
        }
        let f = match self.kind {
            LawKind::AttractOutside | LawKind::RepelOutside | LawKind::AbsorbOrigin => 1.0 + delta,
            LawKind::AttractInside | LawKind::RepelInside => 1.0 - delta,
        };
        Ok(x.iter().map(|c| c * f / r).collect())
    }

    /// The harmonic function of the transform.
    pub fn h(&self, x: &[f64]) -> Result<f64> {
        let r = norm_sq(x).sqrt();
        let p = &self.params;
        match self.kind {
            LawKind::AttractOutside | LawKind::AttractInside => {
                h_s_fast(x, self.region.as_ref().expect("checked in new"), p, &self.quad)
            }
            LawKind::RepelOutside => h_out_radius(r, p),
            LawKind::RepelInside => h_in_radius(r, p),
            LawKind::AbsorbOrigin => Ok(r.powf(p.alpha() - p.d())),
        }
    }

    /// Killing rule of the underlying free process.
    pub fn kill(&self) -> StopRule {
        match self.kind {
            LawKind::AttractOutside | LawKind::RepelOutside => StopRule::EnterBall(1.0),
            LawKind::AttractInside | LawKind::RepelInside => StopRule::ExitBall(1.0),
            LawKind::AbsorbOrigin => StopRule::EnterBall(self.origin_eps),
        }
    }

    fn killed_by(&self, reason: StopReason) -> bool {
        matches!(
            (self.kind, reason),
            (LawKind::AttractOutside | LawKind::RepelOutside | LawKind::AbsorbOrigin, StopReason::EnterBall)
                | (LawKind::AttractInside | LawKind::RepelInside, StopReason::ExitBall)
        )
    }
}

/// Step policy used by the conditioned samplers unless overridden: the
/// default band refinement, with steps growing with distance to the sphere.
pub fn default_policy(h: f64) -> StepPolicy {
    StepPolicy::default().with_h(h).with_growth(Growth {
        reference: GrowthReference::Sphere,
        from: 0.5,
        kappa: 0.01,
        power: None,
        max_step: 1e6,
    })
}

/// Mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub estimate: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0);
        Estimate { estimate: mean, stderr: (var / n).sqrt() }
    }

    /// `|estimate - reference|` in units of the standard error.
    pub fn z(&self, reference: f64) -> f64 {
        (self.estimate - reference).abs() / self.stderr.max(1e-300)
    }
}

/// Terminal states of `n` free paths under the law's killing, each with its
/// transform weight `H(X_t) / H(x)` (zero when killed).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedSample {
    pub dim: usize,
    /// Flattened terminal points of all paths (killed ones included).
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub alive: Vec<bool>,
    pub unresolved: usize,
}

impl WeightedSample {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn survival(&self) -> f64 {
        self.alive.iter().filter(|a| **a).count() as f64 / self.len() as f64
    }

    /// `E[f(X_t) H(X_t); t < kill] / H(x)` with its standard error.
    pub fn expectation<F: Fn(&[f64]) -> f64>(&self, f: F) -> Estimate {
        let vals: Vec<f64> = (0..self.len())
            .map(|i| if self.weights[i] > 0.0 { f(self.point(i)) * self.weights[i] } else { 0.0 })
            .collect();
        Estimate::from_values(&vals)
    }
}

/// Simulates the free process to time `t` under the law's killing.
pub fn h_weighted_sample(
    law: &ConditionedLaw,
    x: &[f64],
    t: f64,
    n: usize,
    policy: &StepPolicy,
    seed: u64,
) -> Result<WeightedSample> {
    law.check_start(x)?;
    if !(t > 0.0) {
        return domain("time must be positive");
    }
    if n < 2 {
        return domain("need at least two paths");
    }
    policy.validate()?;
    let hx = law.h(x)?;
    let stop = StopRule::First(vec![law.kill(), StopRule::Horizon(t)]);
    let outcomes: Vec<Result<(Vec<f64>, f64, bool, bool)>> = (0..n)
        .into_par_iter()
        .map(|i| weighted_endpoint(law, x, hx, &stop, policy, &mut RngStream::new(seed, i as u64)))
        .collect();
    let mut sample =
        WeightedSample { dim: x.len(), points: Vec::with_capacity(n * x.len()), weights: vec![], alive: vec![], unresolved: 0 };
    for o in outcomes {
        let (p, w, a, u) = o?;
        sample.points.extend_from_slice(&p);
        sample.weights.push(w);
        sample.alive.push(a);
        sample.unresolved += u as usize;
    }
    if !sample.alive.iter().any(|a| *a) {
        return Err(Error::DegenerateEnsemble { survival: 0.0 });
    }
    Ok(sample)
}

fn weighted_endpoint(
    law: &ConditionedLaw,
    x: &[f64],
    hx: f64,
    stop: &StopRule,
    policy: &StepPolicy,
    rng: &mut RngStream,
) -> Result<(Vec<f64>, f64, bool, bool)> {
    let end = walk(&law.params, x, policy, stop, &[], rng, |_, _, _| Visit::Continue)?;
    let alive = end.reason == StopReason::Horizon;
    if !alive && !law.killed_by(end.reason) {
        return Err(Error::Path(format!("path stopped by {:?} before the horizon", end.reason)));
    }
    let w = if alive { law.h(&end.x)? / hx } else { 0.0 };
    Ok((end.x, w, alive, end.unresolved))
}

/// One free path from `x` to time `t`: its end point and transform weight
/// (zero when killed first).
pub fn h_weighted_endpoint(
    law: &ConditionedLaw,
    x: &[f64],
    t: f64,
    policy: &StepPolicy,
    rng: &mut RngStream,
) -> Result<(Vec<f64>, f64)> {
    law.check_start(x)?;
    let stop = StopRule::First(vec![law.kill(), StopRule::Horizon(t)]);
    let (y, w, _, _) = weighted_endpoint(law, x, law.h(x)?, &stop, policy, rng)?;
    Ok((y, w))
}

/// `E_x[f(X_t); t < lifetime]` under the conditioned law, by weighting.
pub fn h_expectation<F: Fn(&[f64]) -> f64>(
    law: &ConditionedLaw,
    x: &[f64],
    t: f64,
    f: F,
    n: usize,
    policy: &StepPolicy,
    seed: u64,
) -> Result<Estimate> {
    Ok(h_weighted_sample(law, x, t, n, policy, seed)?.expectation(f))
}

// ---------------------------------------------------------------------------
// sequential importance resampling

/// Particle paths whose self-normalised weights target the conditioned path
/// law on `[0, horizon]` given survival; `mass` estimates the survival
/// probability so that `mass * sum(w f)` estimates `E[f; horizon < lifetime]`.
#[derive(Clone, Debug)]
pub struct WeightedEnsemble {
    pub paths: Vec<Path>,
    pub weights: Vec<f64>,
    pub law: ConditionedLaw,
    pub ess: f64,
    pub mass: f64,
    pub resamplings: usize,
}

impl WeightedEnsemble {
    /// `E[f(X_horizon); horizon < lifetime]` from the final particle states.
    pub fn expectation<F: Fn(&[f64]) -> f64>(&self, f: F) -> f64 {
        self.mass * self.paths.iter().zip(&self.weights).map(|(p, w)| w * f(p.last())).sum::<f64>()
    }
}

pub fn effective_sample_size(weights: &[f64]) -> f64 {
    let s: f64 = weights.iter().sum();
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    if s2 == 0.0 {
        0.0
    } else {
        s * s / s2
    }
}

/// Systematic resampling: ancestor indices for `n` offspring.
pub fn systematic_resample(weights: &[f64], u: f64) -> Vec<usize> {
    let n = weights.len();
    let total: f64 = weights.iter().sum();
    let mut out = Vec::with_capacity(n);
    let mut cum = 0.0;
    let mut j = 0;
    for k in 0..n {
        let target = (k as f64 + u) / n as f64 * total;
        while j + 1 < n && cum + weights[j] <= target {
            cum += weights[j];
            j += 1;
        }
        out.push(j);
    }
    out
}

/// Particle system on the checkpoint grid `k * horizon / steps`.
pub fn sample_conditioned_paths(
    law: &ConditionedLaw,
    x: &[f64],
    horizon: f64,
    steps: usize,
    n: usize,
    policy: &StepPolicy,
    seed: u64,
) -> Result<WeightedEnsemble> {
    law.check_start(x)?;
    if !(horizon > 0.0) || steps == 0 || n < 2 {
        return domain("need horizon > 0, steps >= 1 and n >= 2");
    }
    let dim = x.len();
    let dt = horizon / steps as f64;
    let mut states: Vec<Vec<f64>> = vec![x.to_vec(); n];
    let mut h_now: Vec<f64> = vec![law.h(x)?; n];
    let mut weights = vec![1.0 / n as f64; n];
    let mut histories: Vec<Vec<f64>> = vec![x.to_vec(); n];
    let mut mass = 1.0;
    let mut resamplings = 0;
    let stop = StopRule::First(vec![law.kill(), StopRule::Horizon(dt)]);
    for k in 0..steps {
        let moved: Vec<Result<(Vec<f64>, bool)>> = (0..n)
            .into_par_iter()
            .map(|i| {
                if weights[i] == 0.0 {
                    return Ok((states[i].clone(), false));
                }
                let mut rng = RngStream::new(seed, ((k as u64) << 32) | i as u64);
                let end = walk(&law.params, &states[i], policy, &stop, &[], &mut rng, |_, _, _| Visit::Continue)?;
                Ok((end.x, end.reason == StopReason::Horizon))
            })
            .collect();
        for (i, m) in moved.into_iter().enumerate() {
            let (xn, alive) = m?;
            if weights[i] == 0.0 {
                continue;
            }
            if alive {
                let hn = law.h(&xn)?;
                weights[i] *= hn / h_now[i];
                h_now[i] = hn;
                histories[i].extend_from_slice(&xn);
            } else {
                weights[i] = 0.0;
            }
            states[i] = xn;
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::WeightCollapse { time: (k + 1) as f64 * dt });
        }
        if effective_sample_size(&weights) < n as f64 / 2.0 && k + 1 < steps {
            let mut rng = RngStream::new(seed, u64::MAX - k as u64);
            let u: f64 = rand::Rng::gen(&mut rng);
            let anc = systematic_resample(&weights, u);
            mass *= total;
            states = anc.iter().map(|&a| states[a].clone()).collect();
            h_now = anc.iter().map(|&a| h_now[a]).collect();
            histories = anc.iter().map(|&a| histories[a].clone()).collect();
            weights = vec![1.0 / n as f64; n];
            resamplings += 1;
        }
    }
    let total: f64 = weights.iter().sum();
    mass *= total;
    let ess = effective_sample_size(&weights);
    let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let paths = histories
        .into_iter()
        .zip(&weights)
        .map(|(coords, w)| {
            let m = coords.len() / dim;
            let times: Vec<f64> = (0..m).map(|j| j as f64 * dt).collect();
            let stop = if *w > 0.0 { StopReason::Horizon } else { StopReason::Visitor };
            Path::from_nodes(dim, times, coords, stop)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(WeightedEnsemble { paths, weights, law: law.clone(), ess, mass, resamplings })
}

// ---------------------------------------------------------------------------
// epsilon-conditioning

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsKind {
    /// Closest reach lands in `{r theta : 1 < r < 1 + eps, theta in S}`.
    Vee,
    /// Furthest reach before first exit lands in `{r theta : 1 - eps < r < 1, theta in S}`.
    Wedge,
    /// First entry into the ball lands in `{r theta : 1 - eps < r < 1, theta in S}`.
    VeeAlt,
}

/// Minimum number of accepted paths for an epsilon-conditioned summary.
pub const MIN_ACCEPTED: usize = 100;

/// Far field used for closest-reach runs.
pub const R_FAR: f64 = 1e3;

/// What one unconditioned path contributes to every epsilon at once.
#[derive(Clone, Debug)]
struct EpsRecord {
    /// Radius and direction-bearing point of the selecting event.
    event_point: Vec<f64>,
    /// Time of the selecting event; the conditioned path is killed there.
    event_time: f64,
    /// State at the marginal time, when it precedes the event.
    marginal: Option<Vec<f64>>,
    valid: bool,
    unresolved: bool,
}

/// Empirical law of `X_t` on `t < event` among selected paths.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpsilonSummary {
    pub kind: EpsKind,
    pub eps: f64,
    pub n: usize,
    pub accepted: usize,
    pub selection: Estimate,
    /// Flattened states at the marginal time of accepted paths still alive.
    pub alive_points: Vec<f64>,
    /// Accepted paths whose event came before the marginal time.
    pub dead: usize,
    /// Event points of accepted paths (flattened).
    pub event_points: Vec<f64>,
    pub event_times: Vec<f64>,
    pub unresolved: usize,
}

fn selected(kind: EpsKind, region: &SphereRegion, z: &[f64], eps: f64) -> bool {
    let r = norm_sq(z).sqrt();
    let radial = match kind {
        EpsKind::Vee => r > 1.0 && r < 1.0 + eps,
        EpsKind::Wedge | EpsKind::VeeAlt => r < 1.0 && r > 1.0 - eps,
    };
    if !radial {
        return false;
    }
    match region {
        // ambient ball around the single direction
        SphereRegion::Singleton(p) => crate::geometry::dist(p.coords(), z) < eps,
        _ => {
            let th: Vec<f64> = z.iter().map(|c| c / r).collect();
            region.contains_unchecked(&th, 0.0)
        }
    }
}

/// Step cap that resolves a running record: with the current node at
/// distance `gap` from the record and `precision` the accuracy wanted at
/// the record itself, steps stay below `(kappa * max(gap, precision))^alpha`,
/// so the typical jump is a `kappa` fraction of that length. Callers floor
/// `precision` at half the narrowest bin (or the smallest `eps`), below which
/// the record position no longer matters.
pub fn record_cap(alpha: f64, kappa: f64, gap: f64, precision: f64) -> f64 {
    (kappa * gap.max(precision)).powf(alpha)
}

/// Default `kappa` of [`record_cap`] for the epsilon-conditioned walks.
pub const RECORD_KAPPA: f64 = 0.05;

fn eps_record(
    kind: EpsKind,
    params: &StableParams,
    x: &[f64],
    t_marg: f64,
    policy: &StepPolicy,
    kappa: f64,
    floor: f64,
    rng: &mut RngStream,
) -> Result<EpsRecord> {
    let alpha = params.alpha();
    let mut best_r = match kind {
        EpsKind::Vee => f64::INFINITY,
        _ => f64::NEG_INFINITY,
    };
    let mut best = x.to_vec();
    let mut best_t = 0.0;
    let mut at_marg: Option<Vec<f64>> = None;
    let stop = match kind {
        EpsKind::Vee => StopRule::FarField(R_FAR),
        EpsKind::Wedge => StopRule::ExitBall(1.0),
        EpsKind::VeeAlt => StopRule::First(vec![StopRule::EnterBall(1.0), StopRule::FarField(R_FAR)]),
    };
    let end = walk(params, x, policy, &stop, &[t_marg], rng, |_, t, y| {
        if t == t_marg {
            at_marg = Some(y.to_vec());
        }
        let r = norm_sq(y).sqrt();
        match kind {
            EpsKind::Vee => {
                if r < best_r {
                    best_r = r;
                    best.copy_from_slice(y);
                    best_t = t;
                }
                if best_r <= 1.0 {
                    // the closest reach is already inside: the path can never be selected
                    return if t >= t_marg { Visit::Stop } else { Visit::Continue };
                }
                Visit::Cap(record_cap(alpha, kappa, r - best_r, (best_r - 1.0).max(floor)))
            }
            // the exit node itself lies outside and never counts
            EpsKind::Wedge => {
                if r > 1.0 {
                    return Visit::Continue;
                }
                if r > best_r {
                    best_r = r;
                    best.copy_from_slice(y);
                    best_t = t;
                }
                Visit::Cap(record_cap(alpha, kappa, best_r - r, (1.0 - best_r).max(floor)))
            }
            EpsKind::VeeAlt => Visit::Continue,
        }
    })?;
    let (event_point, event_time, valid) = match kind {
        EpsKind::Vee => (best, best_t, end.reason == StopReason::FarField),
        EpsKind::Wedge => (best, best_t, end.reason == StopReason::ExitBall),
        EpsKind::VeeAlt => (end.x.clone(), end.t, end.reason == StopReason::EnterBall),
    };
    let marginal = if t_marg < event_time { at_marg } else { None };
    Ok(EpsRecord { event_point, event_time, marginal, valid, unresolved: end.unresolved })
}

/// Simulates `n` free paths once and summarises the conditioned laws for
/// every `eps` in `eps_list`.
#[allow(clippy::too_many_arguments)]
pub fn epsilon_conditioning_multi(
    kind: EpsKind,
    region: &SphereRegion,
    params: &StableParams,
    x: &[f64],
    eps_list: &[f64],
    t_marg: f64,
    n: usize,
    policy: &StepPolicy,
    seed: u64,
) -> Result<Vec<EpsilonSummary>> {
    EpsRun { kind, region, params, x, t_marg, n, policy, seed, record_kappa: RECORD_KAPPA }.summaries(eps_list)
}

/// All inputs of an epsilon-conditioning run except the list of `eps`.
#[derive(Clone, Copy, Debug)]
pub struct EpsRun<'a> {
    pub kind: EpsKind,
    pub region: &'a SphereRegion,
    pub params: &'a StableParams,
    pub x: &'a [f64],
    pub t_marg: f64,
    pub n: usize,
    pub policy: &'a StepPolicy,
    pub seed: u64,
    pub record_kappa: f64,
}

impl EpsRun<'_> {
    /// Simulates once and summarises every `eps` in `eps_list`.
    pub fn summaries(&self, eps_list: &[f64]) -> Result<Vec<EpsilonSummary>> {
        let EpsRun { kind, region, params, x, t_marg, n, policy, seed, record_kappa } = *self;
        let r = norm_sq(x).sqrt();
        match kind {
            EpsKind::Vee | EpsKind::VeeAlt if !(r > 1.0) => return domain("outside conditioning needs |x| > 1"),
            EpsKind::Wedge if !(r > 0.0 && r < 1.0) => return domain("inside conditioning needs 0 < |x| < 1"),
            _ => {}
        }
        if eps_list.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
            return domain("eps must lie in (0, 1)");
        }
        if region.dim() != params.dim() || x.len() != params.dim() {
            return domain("dimension mismatch");
        }
        policy.validate()?;
        if !(record_kappa > 0.0) {
            return domain("record kappa must be positive");
        }
        let widest = eps_list.iter().copied().fold(0.0, f64::max);
        let floor = 0.5 * eps_list.iter().copied().fold(f64::INFINITY, f64::min);
        let records: Vec<Result<(Option<EpsRecord>, bool)>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = RngStream::new(seed, i as u64);
                let rec = eps_record(kind, params, x, t_marg, policy, record_kappa, floor, &mut rng)?;
                let u = rec.unresolved;
                let keep = rec.valid && selected(kind, region, &rec.event_point, widest);
                Ok((keep.then_some(rec), u))
            })
            .collect();
        let mut kept = Vec::new();
        let mut unresolved = 0;
        for r in records {
            let (rec, u) = r?;
            unresolved += u as usize;
            kept.extend(rec);
        }
        let records = kept;
        let mut out = Vec::with_capacity(eps_list.len());
        for &eps in eps_list {
            let mut s = EpsilonSummary {
                kind,
                eps,
                n,
                accepted: 0,
                selection: Estimate { estimate: 0.0, stderr: 0.0 },
                alive_points: vec![],
                dead: 0,
                event_points: vec![],
                event_times: vec![],
                unresolved,
            };
            for rec in &records {
                if rec.valid && selected(kind, region, &rec.event_point, eps) {
                    s.accepted += 1;
                    s.event_points.extend_from_slice(&rec.event_point);
                    s.event_times.push(rec.event_time);
                    match &rec.marginal {
                        Some(p) => s.alive_points.extend_from_slice(p),
                        None => s.dead += 1,
                    }
                }
            }
            let p = s.accepted as f64 / n as f64;
            s.selection = Estimate { estimate: p, stderr: (p * (1.0 - p) / n as f64).sqrt() };
            if s.accepted < MIN_ACCEPTED {
                return Err(Error::TooFewAccepted { accepted: s.accepted, required: MIN_ACCEPTED });
            }
            out.push(s);
        }
        Ok(out)
    }
}

#[allow(clippy::too_many_arguments)]
pub fn epsilon_conditioning(
    kind: EpsKind,
    region: &SphereRegion,
    params: &StableParams,
    x: &[f64],
    eps: f64,
    t_marg: f64,
    n: usize,
    policy: &StepPolicy,
    seed: u64,
) -> Result<EpsilonSummary> {
    Ok(epsilon_conditioning_multi(kind, region, params, x, &[eps], t_marg, n, policy, seed)?.remove(0))
}

/// Fraction of epsilon-selected closest-reach points whose direction lies in `sub`.
#[allow(clippy::too_many_arguments)]
pub fn hitting_location_mc(
    region: &SphereRegion,
    sub: &SphereRegion,
    params: &StableParams,
    x: &[f64],
    eps: f64,
    n: usize,
    policy: &StepPolicy,
    seed: u64,
) -> Result<Estimate> {
    if !sub.is_subset_of(region) {
        return domain("S' must be contained in S");
    }
    let s = epsilon_conditioning(EpsKind::Vee, region, params, x, eps, 0.0, n, policy, seed)?;
    Ok(hitting_fraction(&s, region, sub))
}

/// Fraction of the summary's event points whose direction lies in `sub`.
pub fn hitting_fraction(s: &EpsilonSummary, region: &SphereRegion, sub: &SphereRegion) -> Estimate {
    let dim = region.dim();
    let hits = s
        .event_points
        .chunks(dim)
        .filter(|z| match sub {
            SphereRegion::Singleton(p) => crate::geometry::dist(p.coords(), z) < s.eps,
            _ => {
                let r = norm_sq(z).sqrt();
                let th: Vec<f64> = z.iter().map(|c| c / r).collect();
                sub.contains_unchecked(&th, 0.0)
            }
        })
        .count();
    let p = hits as f64 / s.accepted as f64;
    Estimate { estimate: p, stderr: (p * (1.0 - p) / s.accepted as f64).sqrt() }
}

/// Start point helper: `x` as a [`Point`] after law-specific admissibility.
pub fn start_point(law: &ConditionedLaw, x: &Point) -> Result<Vec<f64>> {
    law.admissible_start(x.coords(), BOUNDARY_DELTA)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(a: f64, d: usize) -> StableParams {
        StableParams::new(a, d).unwrap()
    }

    #[test]
    fn law_construction() {
        assert!(ConditionedLaw::new(LawKind::AttractOutside, None, p(1.0, 2)).is_err());
        let law = ConditionedLaw::new(LawKind::RepelOutside, None, p(1.0, 2)).unwrap();
        assert!(law.check_start(&[0.5, 0.0]).is_err());
        assert!(law.check_start(&[1.5, 0.0]).is_ok());
        let attract = ConditionedLaw::new(
            LawKind::AttractOutside,
            Some(SphereRegion::cap(Point::basis(2, 0), 0.5).unwrap()),
            p(1.0, 2),
        )
        .unwrap();
        assert!(attract.admissible_start(&[1.0, 0.0], 1e-3).is_err());
        let s = attract.admissible_start(&[-1.0, 0.0], 1e-3).unwrap();
        assert!((s[0] + 1.001).abs() < 1e-15);
    }

    #[test]
    fn systematic_resampling_counts() {
        let w = [0.1, 0.0, 0.6, 0.3];
        let anc = systematic_resample(&w, 0.5);
        assert_eq!(anc.len(), 4);
        assert!(!anc.contains(&1));
        let c2 = anc.iter().filter(|&&a| a == 2).count();
        assert!((2..=3).contains(&c2));
        assert_eq!(effective_sample_size(&[1.0, 1.0, 1.0]), 3.0);
        assert_eq!(effective_sample_size(&[1.0, 0.0, 0.0]), 1.0);
    }

    #[test]
    fn repel_outside_normalisation_small() {
        let law = ConditionedLaw::new(LawKind::RepelOutside, None, p(1.0, 2)).unwrap();
        let e = h_expectation(&law, &[2.0, 0.0], 0.25, |_| 1.0, 4000, &default_policy(1e-3), 3).unwrap();
        assert!(e.z(1.0) < 4.0, "{e:?}");
    }

    #[test]
    fn attract_outside_never_inside() {
        let law = ConditionedLaw::new(LawKind::AttractOutside, Some(SphereRegion::full(2)), p(1.0, 2)).unwrap();
        let ens = sample_conditioned_paths(&law, &[2.0, 0.0], 0.5, 5, 300, &default_policy(1e-3), 4).unwrap();
        for (path, w) in ens.paths.iter().zip(&ens.weights) {
            if *w > 0.0 {
                for i in 0..path.len() {
                    assert!(path.radius(i) >= 1.0);
                }
            }
        }
        assert!(ens.ess >= 1.0 && ens.ess <= 300.0 + 1e-9);
    }

    #[test]
    fn too_few_accepted_is_an_error() {
        let r = epsilon_conditioning(
            EpsKind::Vee,
            &SphereRegion::full(2),
            &p(1.0, 2),
            &[2.0, 0.0],
            1e-3,
            0.5,
            50,
            &default_policy(1e-3),
            1,
        );
        assert!(matches!(r, Err(Error::TooFewAccepted { .. })));
    }
}
