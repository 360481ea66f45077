//! Two-sample and goodness-of-fit statistics for weighted samples.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{domain, Error, Result};
use crate::geometry::{dot, norm_sq, uniform_direction};
use crate::sampling::RngStream;

/// Minimum effective sample size accepted by the tests.
pub const MIN_ESS: usize = 100;

/// Points in `R^d` with nonnegative weights.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub dim: usize,
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Sample {
    pub fn new(dim: usize) -> Self {
        Sample { dim, points: vec![], weights: vec![] }
    }

    pub fn unweighted(dim: usize, points: Vec<f64>) -> Self {
        let n = points.len() / dim;
        Sample { dim, points, weights: vec![1.0; n] }
    }

    pub fn weighted(dim: usize, points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() * dim {
            return domain("one weight per point is required");
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return domain("weights must be finite and nonnegative");
        }
        Ok(Sample { dim, points, weights })
    }

    pub fn push(&mut self, x: &[f64], w: f64) {
        self.points.extend_from_slice(x);
        self.weights.push(w);
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn ess(&self) -> f64 {
        let s2: f64 = self.weights.iter().map(|w| w * w).sum();
        if s2 == 0.0 {
            0.0
        } else {
            self.total_weight().powi(2) / s2
        }
    }

    fn require_ess(&self) -> Result<()> {
        let ess = self.ess();
        if ess < MIN_ESS as f64 {
            return Err(Error::SmallSample { ess, min: MIN_ESS });
        }
        Ok(())
    }

    /// Weighted mean of `f`.
    pub fn mean<F: Fn(&[f64]) -> f64>(&self, f: F) -> f64 {
        let s: f64 = (0..self.len()).map(|i| self.weights[i] * f(self.point(i))).sum();
        s / self.total_weight()
    }

    /// Multinomial resample of `n` equally weighted points.
    pub fn resample(&self, n: usize, rng: &mut RngStream) -> Sample {
        let total = self.total_weight();
        let mut cum = Vec::with_capacity(self.len());
        let mut acc = 0.0;
        for w in &self.weights {
            acc += w / total;
            cum.push(acc);
        }
        let mut out = Sample::new(self.dim);
        for _ in 0..n {
            let u: f64 = rng.gen();
            let i = cum.partition_point(|c| *c < u).min(self.len() - 1);
            out.push(self.point(i), 1.0);
        }
        out
    }

    /// Keeps the points with positive weight.
    pub fn alive(&self) -> Sample {
        let mut out = Sample::new(self.dim);
        for i in 0..self.len() {
            if self.weights[i] > 0.0 {
                out.push(self.point(i), self.weights[i]);
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Kolmogorov–Smirnov on radii

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ks {
    pub statistic: f64,
    pub p_value: f64,
    pub n_eff: f64,
}

/// Asymptotic Kolmogorov tail with the small-sample correction of Stephens.
pub fn kolmogorov_p(d: f64, n_eff: f64) -> f64 {
    let sn = n_eff.sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

fn sorted_radii(s: &Sample) -> Vec<(f64, f64)> {
    let total = s.total_weight();
    let mut v: Vec<(f64, f64)> = (0..s.len()).map(|i| (norm_sq(s.point(i)).sqrt(), s.weights[i] / total)).collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    v
}

/// Two-sample KS statistic on `|X|`, with weighted empirical CDFs.
pub fn ks_radial(a: &Sample, b: &Sample) -> Result<Ks> {
    a.require_ess()?;
    b.require_ess()?;
    let (ra, rb) = (sorted_radii(a), sorted_radii(b));
    let (mut i, mut j) = (0, 0);
    let (mut fa, mut fb) = (0.0, 0.0);
    let mut d: f64 = 0.0;
    while i < ra.len() || j < rb.len() {
        let x = match (ra.get(i), rb.get(j)) {
            (Some(p), Some(q)) => p.0.min(q.0),
            (Some(p), None) => p.0,
            (None, Some(q)) => q.0,
            (None, None) => unreachable!(),
        };
        while i < ra.len() && ra[i].0 == x {
            fa += ra[i].1;
            i += 1;
        }
        while j < rb.len() && rb[j].0 == x {
            fb += rb[j].1;
            j += 1;
        }
        d = d.max((fa - fb).abs());
    }
    let (ea, eb) = (a.ess(), b.ess());
    let n_eff = ea * eb / (ea + eb);
    Ok(Ks { statistic: d, p_value: kolmogorov_p(d, n_eff), n_eff })
}

/// One-sample KS of `|X|` against a radial CDF.
pub fn ks_radial_cdf<F: Fn(f64) -> f64>(a: &Sample, cdf: F) -> Result<Ks> {
    a.require_ess()?;
    let ra = sorted_radii(a);
    let mut f = 0.0;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < ra.len() {
        let x = ra[i].0;
        let c = cdf(x);
        d = d.max((f - c).abs());
        while i < ra.len() && ra[i].0 == x {
            f += ra[i].1;
            i += 1;
        }
        d = d.max((f - c).abs());
    }
    let n_eff = a.ess();
    Ok(Ks { statistic: d, p_value: kolmogorov_p(d, n_eff), n_eff })
}

// ---------------------------------------------------------------------------
// energy distance

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyTest {
    pub statistic: f64,
    /// Permutation quantile at `1 - level`.
    pub threshold: f64,
    pub p_value: f64,
    pub reject: bool,
    pub permutations: usize,
}

/// Weighted energy distance `2 E|X - Y| - E|X - X'| - E|Y - Y'|`, by
/// summing over all pairs.
pub fn energy_distance_exact(a: &Sample, b: &Sample) -> f64 {
    let mean_dist = |s: &Sample, t: &Sample| {
        let (ws, wt) = (s.total_weight(), t.total_weight());
        let mut acc = 0.0;
        for i in 0..s.len() {
            for j in 0..t.len() {
                let d2: f64 = s.point(i).iter().zip(t.point(j)).map(|(p, q)| (p - q) * (p - q)).sum();
                acc += s.weights[i] * t.weights[j] * d2.sqrt();
            }
        }
        acc / (ws * wt)
    };
    2.0 * mean_dist(a, b) - mean_dist(a, a) - mean_dist(b, b)
}

/// Projection directions used by the sliced statistic: evenly spaced on
/// the half circle in the plane, pseudo-random on higher spheres.
pub fn slice_directions(dim: usize, count: usize) -> Vec<Vec<f64>> {
    if dim == 2 {
        return (0..count)
            .map(|k| {
                let a = std::f64::consts::PI * k as f64 / count as f64;
                vec![a.cos(), a.sin()]
            })
            .collect();
    }
    let mut rng = RngStream::new(0x5eed, dim as u64);
    (0..count).map(|_| uniform_direction(dim, &mut rng).into_vec()).collect()
}

/// Pooled sample sorted along each slice, so that a relabelling costs
/// `O(n)` per direction.
struct Slices {
    order: Vec<Vec<u32>>,
    gaps: Vec<Vec<f64>>,
}

impl Slices {
    fn new(pooled: &Sample, dirs: &[Vec<f64>]) -> Self {
        let n = pooled.len();
        let mut order = Vec::with_capacity(dirs.len());
        let mut gaps = Vec::with_capacity(dirs.len());
        for u in dirs {
            let proj: Vec<f64> = (0..n).map(|i| dot(pooled.point(i), u)).collect();
            let mut idx: Vec<u32> = (0..n as u32).collect();
            idx.sort_by(|&i, &j| proj[i as usize].total_cmp(&proj[j as usize]));
            let g = idx.windows(2).map(|w| proj[w[1] as usize] - proj[w[0] as usize]).collect();
            order.push(idx);
            gaps.push(g);
        }
        Slices { order, gaps }
    }

    /// Mean over slices of `2 int (F_a - F_b)^2`, the one-dimensional energy distance.
    fn statistic(&self, weights: &[f64], in_a: &[bool]) -> f64 {
        let (mut wa, mut wb) = (0.0, 0.0);
        for (w, a) in weights.iter().zip(in_a) {
            if *a {
                wa += w;
            } else {
                wb += w;
            }
        }
        let mut total = 0.0;
        for (idx, gaps) in self.order.iter().zip(&self.gaps) {
            let (mut fa, mut fb) = (0.0, 0.0);
            let mut s = 0.0;
            for (k, &i) in idx[..idx.len() - 1].iter().enumerate() {
                let i = i as usize;
                if in_a[i] {
                    fa += weights[i] / wa;
                } else {
                    fb += weights[i] / wb;
                }
                let diff = fa - fb;
                s += diff * diff * gaps[k];
            }
            total += 2.0 * s;
        }
        total / self.order.len() as f64
    }
}

/// Sliced energy distance between two weighted samples.
pub fn sliced_energy_distance(a: &Sample, b: &Sample, dirs: &[Vec<f64>]) -> f64 {
    let (pooled, labels) = pool(a, b);
    Slices::new(&pooled, dirs).statistic(&pooled.weights, &labels)
}

fn pool(a: &Sample, b: &Sample) -> (Sample, Vec<bool>) {
    let mut pooled = Sample::new(a.dim);
    let (ta, tb) = (a.total_weight(), b.total_weight());
    for i in 0..a.len() {
        pooled.push(a.point(i), a.weights[i] / ta);
    }
    for i in 0..b.len() {
        pooled.push(b.point(i), b.weights[i] / tb);
    }
    let mut labels = vec![true; a.len()];
    labels.extend(std::iter::repeat(false).take(b.len()));
    (pooled, labels)
}

/// Number of slices used by [`energy_distance_test`].
pub fn default_slices(dim: usize) -> usize {
    if dim == 2 {
        16
    } else {
        24
    }
}

/// Permutation test on the sliced energy distance. Labels are permuted
/// with the points' weights attached; each group is renormalised.
pub fn energy_distance_test(a: &Sample, b: &Sample, permutations: usize, level: f64, seed: u64) -> Result<EnergyTest> {
    if a.dim != b.dim {
        return domain("samples live in different dimensions");
    }
    a.require_ess()?;
    b.require_ess()?;
    if permutations == 0 || !(level > 0.0 && level < 1.0) {
        return domain("need permutations > 0 and level in (0, 1)");
    }
    let dirs = slice_directions(a.dim, default_slices(a.dim));
    let (pooled, mut labels) = pool(a, b);
    let slices = Slices::new(&pooled, &dirs);
    let observed = slices.statistic(&pooled.weights, &labels);
    let mut rng = RngStream::new(seed, 0xe4e7);
    let mut null = Vec::with_capacity(permutations);
    for _ in 0..permutations {
        labels.shuffle(&mut rng);
        null.push(slices.statistic(&pooled.weights, &labels));
    }
    let exceed = null.iter().filter(|s| **s >= observed).count();
    let p_value = (1 + exceed) as f64 / (1 + permutations) as f64;
    null.sort_by(f64::total_cmp);
    let q = ((1.0 - level) * permutations as f64).ceil() as usize;
    let threshold = null[q.clamp(1, permutations) - 1];
    Ok(EnergyTest { statistic: observed, threshold, p_value, reject: p_value < level, permutations })
}

// ---------------------------------------------------------------------------
// chi-square and total variation

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Chi2 {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// Cells left after merging.
    pub cells: usize,
}

/// Pearson goodness of fit. Consecutive cells are merged until each
/// expected count reaches `min_expected`; `fitted` parameters are removed
/// from the degrees of freedom.
pub fn chi2_gof(observed: &[f64], expected: &[f64], min_expected: f64, fitted: usize) -> Result<Chi2> {
    if observed.len() != expected.len() || observed.is_empty() {
        return domain("observed and expected counts must have equal nonzero length");
    }
    let mut groups: Vec<(f64, f64)> = vec![];
    let mut cur = (0.0, 0.0);
    for (o, e) in observed.iter().zip(expected) {
        cur.0 += o;
        cur.1 += e;
        if cur.1 >= min_expected {
            groups.push(cur);
            cur = (0.0, 0.0);
        }
    }
    if cur.1 > 0.0 || cur.0 > 0.0 {
        match groups.last_mut() {
            Some(g) => {
                g.0 += cur.0;
                g.1 += cur.1;
            }
            None => groups.push(cur),
        }
    }
    if groups.len() < fitted + 2 {
        return domain("too few cells after merging");
    }
    let statistic: f64 = groups.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dof = groups.len() - 1 - fitted;
    let p_value = 1.0 - ChiSquared::new(dof as f64).map_err(|e| Error::Domain(e.to_string()))?.cdf(statistic);
    Ok(Chi2 { statistic, dof, p_value, cells: groups.len() })
}

/// `sum |p - q| / 2` for two vectors of cell masses.
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// `(a - b) / sqrt(sa^2 + sb^2)`.
pub fn z_score(a: f64, sa: f64, b: f64, sb: f64) -> f64 {
    (a - b) / (sa * sa + sb * sb).sqrt().max(1e-300)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::random_rotation;

    fn gaussian(n: usize, shift: f64, seed: u64) -> Sample {
        let mut rng = RngStream::new(seed, 0);
        let mut s = Sample::new(2);
        for _ in 0..n {
            let x: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
            let y: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
            s.push(&[x + shift, y], 1.0);
        }
        s
    }

    #[test]
    fn identical_samples() {
        let a = gaussian(500, 0.0, 1);
        assert_eq!(ks_radial(&a, &a).unwrap().statistic, 0.0);
        assert!(energy_distance_exact(&a, &a).abs() < 1e-12);
        assert!(sliced_energy_distance(&a, &a, &slice_directions(2, 8)).abs() < 1e-15);
    }

    #[test]
    fn disjoint_supports_reject() {
        let a = gaussian(400, 0.0, 1);
        let b = gaussian(400, 10.0, 2);
        assert!(energy_distance_test(&a, &b, 200, 0.01, 3).unwrap().reject);
    }

    #[test]
    fn rotated_isotropic_passes() {
        let a = gaussian(2000, 0.0, 4);
        let mut rng = RngStream::new(5, 0);
        let rot = random_rotation(2, &mut rng);
        let mut b = Sample::new(2);
        let c = gaussian(2000, 0.0, 6);
        for i in 0..c.len() {
            let p = crate::geometry::apply(&rot, &crate::geometry::Point::from_slice(c.point(i)));
            b.push(p.coords(), 1.0);
        }
        let t = energy_distance_test(&a, &b, 300, 0.01, 7).unwrap();
        assert!(!t.reject, "{t:?}");
    }

    #[test]
    fn sliced_matches_exact_in_one_dimension() {
        let mut a = Sample::new(2);
        let mut b = Sample::new(2);
        for i in 0..40 {
            a.push(&[i as f64 * 0.1, 0.0], 1.0 + (i % 3) as f64);
            b.push(&[i as f64 * 0.13 - 0.5, 0.0], 1.0);
        }
        let dirs = vec![vec![1.0, 0.0]];
        let s = sliced_energy_distance(&a, &b, &dirs);
        assert!((s - energy_distance_exact(&a, &b)).abs() < 1e-12);
    }

    #[test]
    fn weighted_ks_matches_resampled() {
        let mut rng = RngStream::new(8, 0);
        let mut a = Sample::new(2);
        for _ in 0..4000 {
            let r: f64 = rng.gen::<f64>() * 2.0;
            a.push(&[r, 0.0], 1.0 + r);
        }
        let b = gaussian(4000, 1.0, 9);
        let w = ks_radial(&a, &b).unwrap().statistic;
        let resampled = a.resample(40_000, &mut rng);
        let u = ks_radial(&resampled, &b).unwrap().statistic;
        assert!((w - u).abs() < 0.02, "{w} {u}");
    }

    #[test]
    fn small_samples_error() {
        let a = gaussian(50, 0.0, 1);
        assert!(matches!(ks_radial(&a, &a), Err(Error::SmallSample { .. })));
    }

    #[test]
    fn chi2_merges_and_scores() {
        let c = chi2_gof(&[10.0, 1.0, 2.0, 12.0], &[10.0, 1.5, 2.5, 11.0], 5.0, 0).unwrap();
        assert_eq!(c.cells, 2);
        assert!(c.p_value > 0.5);
        assert_eq!(tv_distance(&[0.5, 0.5], &[1.0, 0.0]), 0.5);
        assert!(kolmogorov_p(0.0, 100.0) == 1.0 && kolmogorov_p(0.5, 100.0) < 1e-9);
    }
}
