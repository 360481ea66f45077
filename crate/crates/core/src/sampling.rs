//! Exact-in-law simulation of isotropic stable increments and paths.
//!
//! Increments come from subordinating Brownian motion: with
//! `sigma = h^{2/alpha} S` for a positive `alpha/2`-stable `S`,
//! `sqrt(2 sigma) Z` has characteristic function `exp(-h |theta|^alpha)`.
//! Grid samples are therefore exact; only first-passage detection between
//! nodes is approximate, and the step policy refines the grid near the unit
//! sphere to keep that error small.

use std::f64::consts::PI;
use std::io::{Read, Write};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::geometry::{norm_sq, Point, StableParams};

/// One independent random stream, keyed by `(seed, stream)`.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        RngStream { seed, stream, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Number of 32-bit words consumed so far.
    pub fn counter(&self) -> u128 {
        self.inner.get_word_pos()
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.inner.try_fill_bytes(dest)
    }
}

/// A positive stable variable with `E exp(-lambda S) = exp(-lambda^index)`.
pub fn sample_positive_stable<R: Rng + ?Sized>(index: f64, rng: &mut R) -> Result<f64> {
    if !(index > 0.0 && index < 1.0) {
        return domain(format!("positive stable index must lie in (0,1), got {index}"));
    }
    Ok(positive_stable(index, rng))
}

// Kanter's representation.
#[inline]
fn positive_stable<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    loop {
        let u = PI * rng.gen::<f64>();
        if u <= 0.0 {
            continue;
        }
        let e: f64 = rng.sample(Exp1);
        let num = (a * u).sin().powf(a / (1.0 - a)) * ((1.0 - a) * u).sin();
        let den = u.sin().powf(1.0 / (1.0 - a));
        let s = (num / den / e).powf((1.0 - a) / a);
        if s > 0.0 && s.is_finite() {
            return s;
        }
    }
}

/// One draw of `X_h - X_0`.
pub fn stable_increment<R: Rng + ?Sized>(params: &StableParams, h: f64, rng: &mut R) -> Result<Point> {
    if !(h > 0.0) || !h.is_finite() {
        return domain(format!("time step must be positive, got {h}"));
    }
    let mut out = vec![0.0; params.dim()];
    add_increment(params.alpha(), h, rng, &mut out);
    Ok(Point::from_slice(&out))
}

#[inline]
pub(crate) fn add_increment<R: Rng + ?Sized>(alpha: f64, h: f64, rng: &mut R, x: &mut [f64]) {
    let sigma = h.powf(2.0 / alpha) * positive_stable(0.5 * alpha, rng);
    let scale = (2.0 * sigma).sqrt();
    for c in x.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *c += scale * z;
    }
}

// ---------------------------------------------------------------------------
// step policy and stopping

/// What the step size grows with away from the region of interest.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthReference {
    /// Distance to the unit sphere.
    Sphere,
    /// Distance to the origin.
    Origin,
}

/// Scale-adapted steps: `max(h, kappa * dist^power)` once `dist > from`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Growth {
    pub reference: GrowthReference,
    pub from: f64,
    pub kappa: f64,
    /// Defaults to `alpha`, which keeps the typical jump a fixed fraction of `dist`.
    #[serde(default)]
    pub power: Option<f64>,
    #[serde(default = "default_max_step")]
    pub max_step: f64,
}

fn default_max_step() -> f64 {
    1e6
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepPolicy {
    pub h: f64,
    /// Steps shrink while `| |X| - 1 | < band`.
    pub band: f64,
    pub shrink: f64,
    pub min_step: f64,
    #[serde(default)]
    pub growth: Option<Growth>,
    #[serde(default = "default_max_nodes")]
    pub max_nodes: usize,
}

fn default_max_nodes() -> usize {
    20_000_000
}

impl Default for StepPolicy {
    fn default() -> Self {
        StepPolicy { h: 1e-3, band: 0.05, shrink: 4.0, min_step: 1e-7, growth: None, max_nodes: default_max_nodes() }
    }
}

impl StepPolicy {
    /// Constant step, no refinement near the sphere.
    pub fn fixed(h: f64) -> Self {
        StepPolicy { h, band: 0.0, shrink: 4.0, min_step: h, growth: None, max_nodes: default_max_nodes() }
    }

    pub fn with_h(mut self, h: f64) -> Self {
        self.h = h;
        self
    }

    pub fn with_growth(mut self, growth: Growth) -> Self {
        self.growth = Some(growth);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return domain("step h must be positive");
        }
        if !(self.band >= 0.0) || !(self.shrink > 1.0) || !(self.min_step > 0.0) {
            return domain("band >= 0, shrink > 1 and min_step > 0 are required");
        }
        if let Some(g) = &self.growth {
            if !(g.kappa > 0.0) || !(g.from >= 0.0) || !(g.max_step > 0.0) {
                return domain("growth needs kappa > 0, from >= 0, max_step > 0");
            }
        }
        Ok(())
    }

    /// Step size at radius `r`, and whether it hit the `min_step` floor.
    #[inline]
    pub fn step(&self, r: f64, alpha: f64) -> (f64, bool) {
        let ds = (r - 1.0).abs();
        let mut dt = self.h;
        if let Some(g) = &self.growth {
            let dist = match g.reference {
                GrowthReference::Sphere => ds,
                GrowthReference::Origin => r,
            };
            if dist > g.from {
                dt = dt.max(g.kappa * dist.powf(g.power.unwrap_or(alpha))).min(g.max_step.max(self.h));
            }
        }
        if ds < self.band {
            // typical jump over dt is dt^{1/alpha}; keep it below the distance to the sphere
            let target = ds.powf(alpha);
            while dt > target && dt > self.min_step {
                dt /= self.shrink;
            }
            if dt < self.min_step {
                return (self.min_step, true);
            }
        }
        (dt, false)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", content = "value", rename_all = "snake_case")]
pub enum StopRule {
    /// First node with `|X| > r`.
    ExitBall(f64),
    /// First node with `|X| < r`.
    EnterBall(f64),
    /// First node with `|X| > R`.
    FarField(f64),
    /// Time `T`, hit exactly by the grid.
    Horizon(f64),
    /// Whichever of several rules fires first.
    First(Vec<StopRule>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    ExitBall,
    EnterBall,
    FarField,
    Horizon,
    /// Stopped by the node visitor.
    Visitor,
    /// Node budget exhausted before any rule fired.
    Truncated,
}

impl StopRule {
    fn fired(&self, t: f64, r: f64) -> Option<StopReason> {
        match self {
            StopRule::ExitBall(b) => (r > *b).then_some(StopReason::ExitBall),
            StopRule::EnterBall(b) => (r < *b).then_some(StopReason::EnterBall),
            StopRule::FarField(b) => (r > *b).then_some(StopReason::FarField),
            StopRule::Horizon(t_end) => (t >= *t_end).then_some(StopReason::Horizon),
            StopRule::First(rules) => rules.iter().find_map(|s| s.fired(t, r)),
        }
    }

    fn horizon(&self) -> Option<f64> {
        match self {
            StopRule::Horizon(t) => Some(*t),
            StopRule::First(rules) => rules.iter().filter_map(StopRule::horizon).reduce(f64::min),
            _ => None,
        }
    }

    /// Whether the rule can only fire through a horizon or a radius reachable
    /// from any start (used to reject obviously endless simulations).
    fn validate(&self) -> Result<()> {
        match self {
            StopRule::ExitBall(r) | StopRule::EnterBall(r) | StopRule::FarField(r) if !(*r > 0.0) => {
                domain("stop radius must be positive")
            }
            StopRule::Horizon(t) if !(*t >= 0.0) => domain("horizon must be nonnegative"),
            StopRule::First(rules) if rules.is_empty() => domain("empty stop rule list"),
            StopRule::First(rules) => rules.iter().try_for_each(StopRule::validate),
            _ => Ok(()),
        }
    }
}

/// Visitor verdict for a node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Visit {
    Continue,
    /// Continue, with the next step no longer than the given value.
    Cap(f64),
    Stop,
}

/// Summary of a walk.
#[derive(Clone, Debug)]
pub struct WalkEnd {
    pub reason: StopReason,
    pub t: f64,
    pub x: Vec<f64>,
    pub nodes: usize,
    /// Whether any sphere crossing happened on a step clamped at `min_step`.
    pub unresolved: bool,
    /// Grid steps on which `|X| - 1` changed sign.
    pub crossings: usize,
    pub unresolved_crossings: usize,
}

/// Runs one path node by node, calling `visit(index, t, x)` on every node
/// (including the start). Checkpoint times and the horizon are hit exactly.
pub fn walk<V>(
    params: &StableParams,
    x0: &[f64],
    policy: &StepPolicy,
    stop: &StopRule,
    checkpoints: &[f64],
    rng: &mut RngStream,
    mut visit: V,
) -> Result<WalkEnd>
where
    V: FnMut(usize, f64, &[f64]) -> Visit,
{
    if x0.len() != params.dim() {
        return domain("start point dimension does not match the process");
    }
    if norm_sq(x0) == 0.0 {
        return domain("paths must not start at the origin");
    }
    let alpha = params.alpha();
    let mut marks: Vec<f64> = checkpoints.iter().copied().filter(|c| *c > 0.0).collect();
    if let Some(t_end) = stop.horizon() {
        marks.push(t_end);
    }
    marks.sort_by(f64::total_cmp);
    marks.dedup();
    let mut next_mark = 0;

    let mut x = x0.to_vec();
    let mut t = 0.0;
    let mut idx = 0;
    let mut crossings = 0;
    let mut unresolved_crossings = 0;
    loop {
        let r = norm_sq(&x).sqrt();
        let cap = match visit(idx, t, &x) {
            Visit::Stop => return Ok(WalkEnd { reason: StopReason::Visitor, t, x, nodes: idx + 1, unresolved: unresolved_crossings > 0, crossings, unresolved_crossings }),
            Visit::Cap(c) => Some(c),
            Visit::Continue => None,
        };
        if let Some(reason) = stop.fired(t, r) {
            return Ok(WalkEnd { reason, t, x, nodes: idx + 1, unresolved: unresolved_crossings > 0, crossings, unresolved_crossings });
        }
        if idx + 1 >= policy.max_nodes {
            return Ok(WalkEnd { reason: StopReason::Truncated, t, x, nodes: idx + 1, unresolved: unresolved_crossings > 0, crossings, unresolved_crossings });
        }
        let (mut dt, floored) = policy.step(r, alpha);
        if let Some(c) = cap {
            dt = dt.min(c.max(policy.min_step));
        }
        while next_mark < marks.len() && marks[next_mark] <= t {
            next_mark += 1;
        }
        let mut t_next = t + dt;
        if next_mark < marks.len() {
            let m = marks[next_mark];
            if t_next >= m - 1e-9 * dt.min(1.0) {
                t_next = m;
                dt = m - t;
            }
        }
        add_increment(alpha, dt, rng, &mut x);
        if (norm_sq(&x) < 1.0) != (r < 1.0) {
            crossings += 1;
            // crossed on a step the policy wanted finer than min_step
            if floored {
                unresolved_crossings += 1;
            }
        }
        t = t_next;
        idx += 1;
    }
}

// ---------------------------------------------------------------------------
// stored paths

/// A sampled path on its grid with first-passage and radial-record indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Path {
    dim: usize,
    times: Vec<f64>,
    coords: Vec<f64>,
    /// First node with `|X| > 1`.
    pub tau_out_idx: Option<usize>,
    /// First node with `|X| < 1`.
    pub tau_in_idx: Option<usize>,
    pub run_min_idx: usize,
    pub run_max_idx: usize,
    pub stop: StopReason,
    pub unresolved: bool,
}

impl Path {
    /// Builds a path from flat coordinates and recomputes the record indices.
    pub fn from_nodes(dim: usize, times: Vec<f64>, coords: Vec<f64>, stop: StopReason) -> Result<Self> {
        if times.is_empty() || dim == 0 || coords.len() != times.len() * dim {
            return Err(Error::Path("need one point of the right dimension per time".into()));
        }
        if times[0] != 0.0 {
            return Err(Error::Path("times must start at 0".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Path("times must be strictly increasing".into()));
        }
        let mut p = Path {
            dim,
            times,
            coords,
            tau_out_idx: None,
            tau_in_idx: None,
            run_min_idx: 0,
            run_max_idx: 0,
            stop,
            unresolved: false,
        };
        p.recompute_records();
        Ok(p)
    }

    fn recompute_records(&mut self) {
        self.tau_out_idx = None;
        self.tau_in_idx = None;
        let (mut rmin, mut rmax) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..self.len() {
            let r = self.radius(i);
            if self.tau_out_idx.is_none() && r > 1.0 {
                self.tau_out_idx = Some(i);
            }
            if self.tau_in_idx.is_none() && r < 1.0 {
                self.tau_in_idx = Some(i);
            }
            if r < rmin {
                rmin = r;
                self.run_min_idx = i;
            }
            if r > rmax {
                rmax = r;
                self.run_max_idx = i;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn radius(&self, i: usize) -> f64 {
        norm_sq(self.point(i)).sqrt()
    }

    pub fn last(&self) -> &[f64] {
        self.point(self.len() - 1)
    }

    pub fn end_time(&self) -> f64 {
        self.times[self.len() - 1]
    }

    /// Index of the last node with time `<= t` (`None` if `t` is negative).
    pub fn index_at(&self, t: f64) -> Option<usize> {
        if t < 0.0 {
            return None;
        }
        Some(self.times.partition_point(|s| *s <= t).saturating_sub(1))
    }

    /// Checks the stated invariants; used by tests and on deserialisation.
    pub fn check(&self) -> Result<()> {
        let mut copy = self.clone();
        copy.recompute_records();
        let ok = copy.tau_out_idx == self.tau_out_idx
            && copy.tau_in_idx == self.tau_in_idx
            && self.radius(copy.run_min_idx) == self.radius(self.run_min_idx)
            && self.radius(copy.run_max_idx) == self.radius(self.run_max_idx);
        if !ok {
            return Err(Error::Path("record indices inconsistent with points".into()));
        }
        if self.times[0] != 0.0 || self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Path("times must start at 0 and increase strictly".into()));
        }
        Ok(())
    }
}

/// Simulates and stores a whole path.
pub fn simulate_path(
    params: &StableParams,
    x0: &Point,
    policy: &StepPolicy,
    stop: &StopRule,
    rng: &mut RngStream,
) -> Result<Path> {
    simulate_path_with_checkpoints(params, x0, policy, stop, &[], rng)
}

/// As [`simulate_path`], with grid nodes forced at the given times.
pub fn simulate_path_with_checkpoints(
    params: &StableParams,
    x0: &Point,
    policy: &StepPolicy,
    stop: &StopRule,
    checkpoints: &[f64],
    rng: &mut RngStream,
) -> Result<Path> {
    policy.validate()?;
    stop.validate()?;
    if x0.norm_sq() == 0.0 {
        return domain("x0 must differ from the origin");
    }
    let mut times = Vec::new();
    let mut coords = Vec::new();
    let end = walk(params, x0.coords(), policy, stop, checkpoints, rng, |_, t, x| {
        times.push(t);
        coords.extend_from_slice(x);
        Visit::Continue
    })?;
    let mut path = Path::from_nodes(params.dim(), times, coords, end.reason)?;
    path.unresolved = end.unresolved;
    Ok(path)
}

/// The grid point of smallest norm on a path run out to the far field.
pub fn closest_reach(path: &Path, params: &StableParams) -> Result<Point> {
    if path.dim() != params.dim() {
        return domain("path dimension does not match the process");
    }
    if path.stop != StopReason::FarField {
        return Err(Error::Path("closest reach needs a path run out to the far field".into()));
    }
    Ok(Point::from_slice(path.point(path.run_min_idx)))
}

/// `(argmax |X| strictly before the first exit node, X at that node)`.
pub fn furthest_reach_before_exit(path: &Path) -> Result<(Point, Point)> {
    let exit = match path.tau_out_idx {
        Some(i) if i > 0 => i,
        _ => return Err(Error::Path("exit not reached".into())),
    };
    let mut best = 0;
    for i in 0..exit {
        if path.radius(i) > path.radius(best) {
            best = i;
        }
    }
    Ok((Point::from_slice(path.point(best)), Point::from_slice(path.point(exit))))
}

// ---------------------------------------------------------------------------
// persistence

const MAGIC: &[u8; 5] = b"STBL1";

/// Header of a persisted ensemble.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleHeader {
    pub alpha: f64,
    pub dim: usize,
    pub seed: u64,
    pub policy: StepPolicy,
    /// Free text naming how the ensemble was produced (e.g. a transform chain).
    pub provenance: String,
}

const FLAG_UNRESOLVED: u8 = 1;
const FLAG_WEIGHTED: u8 = 2;

fn stop_code(s: StopReason) -> u8 {
    match s {
        StopReason::ExitBall => 0,
        StopReason::EnterBall => 1,
        StopReason::FarField => 2,
        StopReason::Horizon => 3,
        StopReason::Visitor => 4,
        StopReason::Truncated => 5,
    }
}

fn stop_from_code(c: u8) -> Result<StopReason> {
    Ok(match c {
        0 => StopReason::ExitBall,
        1 => StopReason::EnterBall,
        2 => StopReason::FarField,
        3 => StopReason::Horizon,
        4 => StopReason::Visitor,
        5 => StopReason::Truncated,
        _ => return Err(Error::Format(format!("unknown stop code {c}"))),
    })
}

/// Writes `STBL1`, the JSON header, then one record per path.
pub fn write_ensemble<W: Write>(
    mut w: W,
    header: &EnsembleHeader,
    paths: &[Path],
    weights: Option<&[f64]>,
) -> Result<()> {
    if let Some(ws) = weights {
        if ws.len() != paths.len() {
            return domain("one weight per path required");
        }
    }
    let head = serde_json::to_vec(header)?;
    w.write_all(MAGIC)?;
    w.write_all(&(head.len() as u64).to_le_bytes())?;
    w.write_all(&head)?;
    w.write_all(&(paths.len() as u64).to_le_bytes())?;
    for (i, p) in paths.iter().enumerate() {
        if p.dim() != header.dim {
            return domain("path dimension does not match the header");
        }
        let mut flags = 0u8;
        if p.unresolved {
            flags |= FLAG_UNRESOLVED;
        }
        if weights.is_some() {
            flags |= FLAG_WEIGHTED;
        }
        w.write_all(&[flags, stop_code(p.stop)])?;
        w.write_all(&(p.len() as u64).to_le_bytes())?;
        if let Some(ws) = weights {
            w.write_all(&ws[i].to_le_bytes())?;
        }
        for v in p.times.iter().chain(&p.coords) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Paths with optional weights, as read back from the container.
pub type Ensemble = (EnsembleHeader, Vec<Path>, Option<Vec<f64>>);

pub fn read_ensemble<R: Read>(mut r: R) -> Result<Ensemble> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not an STBL1 container".into()));
    }
    let head_len = read_u64(&mut r)? as usize;
    let mut head = vec![0u8; head_len];
    r.read_exact(&mut head)?;
    let header: EnsembleHeader = serde_json::from_slice(&head)?;
    let count = read_u64(&mut r)? as usize;
    let mut paths = Vec::with_capacity(count);
    let mut weights = Vec::new();
    let mut weighted = false;
    for _ in 0..count {
        let mut fb = [0u8; 2];
        r.read_exact(&mut fb)?;
        let n = read_u64(&mut r)? as usize;
        if fb[0] & FLAG_WEIGHTED != 0 {
            weighted = true;
            weights.push(read_f64(&mut r)?);
        }
        let times = (0..n).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
        let coords = (0..n * header.dim).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
        let mut p = Path::from_nodes(header.dim, times, coords, stop_from_code(fb[1])?)?;
        p.unresolved = fb[0] & FLAG_UNRESOLVED != 0;
        paths.push(p);
    }
    Ok((header, paths, weighted.then_some(weights)))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// Node flags in the CSV export.
pub const CSV_TAU_OUT: u8 = 1;
pub const CSV_TAU_IN: u8 = 2;
pub const CSV_RUN_MIN: u8 = 4;
pub const CSV_RUN_MAX: u8 = 8;
pub const CSV_UNRESOLVED: u8 = 16;

/// Columns `path_id,t,x_1..x_d,flags` (plus `weight` when given).
pub fn write_csv<W: Write>(mut w: W, paths: &[Path], weights: Option<&[f64]>) -> Result<()> {
    let dim = paths.first().map(Path::dim).unwrap_or(0);
    let mut head = String::from("path_id,t");
    for j in 1..=dim {
        head.push_str(&format!(",x_{j}"));
    }
    head.push_str(",flags");
    if weights.is_some() {
        head.push_str(",weight");
    }
    writeln!(w, "{head}")?;
    for (id, p) in paths.iter().enumerate() {
        for i in 0..p.len() {
            let mut flags = 0u8;
            if p.tau_out_idx == Some(i) {
                flags |= CSV_TAU_OUT;
            }
            if p.tau_in_idx == Some(i) {
                flags |= CSV_TAU_IN;
            }
            if p.run_min_idx == i {
                flags |= CSV_RUN_MIN;
            }
            if p.run_max_idx == i {
                flags |= CSV_RUN_MAX;
            }
            if p.unresolved {
                flags |= CSV_UNRESOLVED;
            }
            let mut line = format!("{id},{}", p.times[i]);
            for c in p.point(i) {
                line.push_str(&format!(",{c}"));
            }
            line.push_str(&format!(",{flags}"));
            if let Some(ws) = weights {
                line.push_str(&format!(",{}", ws[id]));
            }
            writeln!(w, "{line}")?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positive_stable_laplace_transforms() {
        let mut rng = RngStream::new(1, 0);
        let n = 200_000;
        let m: f64 = (0..n).map(|_| (-sample_positive_stable(0.5, &mut rng).unwrap()).exp()).sum::<f64>() / n as f64;
        assert!((m - (-1f64).exp()).abs() < 0.004, "{m}");
        let m: f64 =
            (0..n).map(|_| (-4.0 * sample_positive_stable(0.9, &mut rng).unwrap()).exp()).sum::<f64>() / n as f64;
        assert!((m - (-(4f64.powf(0.9))).exp()).abs() < 0.002, "{m}");
        assert!(sample_positive_stable(1.0, &mut rng).is_err());
        assert!(sample_positive_stable(0.0, &mut rng).is_err());
    }

    #[test]
    fn half_stable_is_inverse_gamma() {
        // for index 1/2, S = 1/(4 G) with G ~ Gamma(1/2, 1): E[S^{-1/2}] = 2 E[G^{1/2}] = 2 / sqrt(pi)
        let mut rng = RngStream::new(2, 0);
        let n = 200_000;
        let m: f64 = (0..n).map(|_| sample_positive_stable(0.5, &mut rng).unwrap().powf(-0.5)).sum::<f64>() / n as f64;
        assert!((m - 2.0 / PI.sqrt()).abs() < 0.01, "{m}");
    }

    #[test]
    fn streams_are_deterministic_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| RngStream::new(7, 3).next_u64()).collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
        assert_ne!(RngStream::new(7, 3).next_u64(), RngStream::new(7, 4).next_u64());
        assert_ne!(RngStream::new(7, 3).next_u64(), RngStream::new(8, 3).next_u64());
    }

    #[test]
    fn horizon_grid_has_101_nodes() {
        let p = StableParams::new(1.0, 2).unwrap();
        let mut rng = RngStream::new(3, 0);
        let path = simulate_path(&p, &Point::on_axis(2, 0.5), &StepPolicy::fixed(0.01), &StopRule::Horizon(1.0), &mut rng)
            .unwrap();
        assert_eq!(path.len(), 101);
        assert_eq!(path.end_time(), 1.0);
        path.check().unwrap();
    }

    #[test]
    fn stop_rules_hold_at_terminal_node() {
        let p = StableParams::new(1.0, 2).unwrap();
        for i in 0..50 {
            let mut rng = RngStream::new(4, i);
            let policy = StepPolicy::default().with_growth(Growth {
                reference: GrowthReference::Sphere,
                from: 0.5,
                kappa: 0.01,
                power: None,
                max_step: 1e6,
            });
            let stop = StopRule::First(vec![StopRule::EnterBall(1.0), StopRule::FarField(50.0)]);
            let path = simulate_path(&p, &Point::on_axis(2, 2.0), &policy, &stop, &mut rng).unwrap();
            let r = norm_sq(path.last()).sqrt();
            match path.stop {
                StopReason::FarField => assert!(r > 50.0),
                StopReason::EnterBall => assert!(r < 1.0),
                other => panic!("unexpected stop {other:?}"),
            }
            path.check().unwrap();
        }
    }

    #[test]
    fn furthest_reach_shapes() {
        let p = StableParams::new(1.0, 2).unwrap();
        for i in 0..20 {
            let mut rng = RngStream::new(5, i);
            let path =
                simulate_path(&p, &Point::on_axis(2, 0.2), &StepPolicy::default(), &StopRule::ExitBall(1.0), &mut rng)
                    .unwrap();
            let (z, v) = furthest_reach_before_exit(&path).unwrap();
            assert!(z.norm() < 1.0 && v.norm() > 1.0);
            assert!(z.norm() >= 0.2 - 1e-15);
        }
    }

    #[test]
    fn closest_reach_requires_far_field() {
        let p = StableParams::new(1.0, 2).unwrap();
        let mut rng = RngStream::new(6, 0);
        let path =
            simulate_path(&p, &Point::on_axis(2, 2.0), &StepPolicy::fixed(0.01), &StopRule::Horizon(0.1), &mut rng)
                .unwrap();
        assert!(closest_reach(&path, &p).is_err());
    }

    #[test]
    fn container_round_trip() {
        let p = StableParams::new(1.5, 3).unwrap();
        let paths: Vec<Path> = (0..5)
            .map(|i| {
                let mut rng = RngStream::new(9, i);
                simulate_path(&p, &Point::on_axis(3, 2.0), &StepPolicy::fixed(0.05), &StopRule::Horizon(0.5), &mut rng)
                    .unwrap()
            })
            .collect();
        let header = EnsembleHeader {
            alpha: 1.5,
            dim: 3,
            seed: 9,
            policy: StepPolicy::fixed(0.05),
            provenance: "test".into(),
        };
        let weights = vec![0.1, 0.2, 0.3, 0.2, 0.2];
        let mut buf = Vec::new();
        write_ensemble(&mut buf, &header, &paths, Some(&weights)).unwrap();
        let (h2, p2, w2) = read_ensemble(buf.as_slice()).unwrap();
        assert_eq!(h2, header);
        assert_eq!(p2, paths);
        assert_eq!(w2.unwrap(), weights);
        assert!(read_ensemble(&b"STBL2"[..]).is_err());

        let mut csv = Vec::new();
        write_csv(&mut csv, &paths[..1], None).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("path_id,t,x_1,x_2,x_3,flags\n"));
        assert_eq!(text.lines().count(), 1 + paths[0].len());
    }
}
