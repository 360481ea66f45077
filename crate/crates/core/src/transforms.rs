//! Path transforms: the Lamperti–Kiu split into log-radius and direction,
//! spatial inversion with its time change, and reversal at an L-time.
//!
//! Both time changes are accumulated with the trapezoidal rule along the
//! grid, so they are exact for constant-radius pieces and first order in
//! the step otherwise.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::geometry::{invert_in_place, StableParams};
use crate::sampling::{Path, StopReason};

pub use crate::verify::rbz_conditioned_check;

/// A path written as `exp(xi) theta` on its own clock.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapPath {
    pub dim: usize,
    /// Clock of the additive pair.
    pub times: Vec<f64>,
    pub xi: Vec<f64>,
    /// Flattened unit directions.
    pub theta: Vec<f64>,
    /// Stable time at each node.
    pub phi_grid: Vec<f64>,
    pub stop: StopReason,
}

impl MapPath {
    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }

    pub fn theta(&self, i: usize) -> &[f64] {
        &self.theta[i * self.dim..(i + 1) * self.dim]
    }
}

fn check_dim(path: &Path, params: &StableParams) -> Result<()> {
    if path.dim() != params.dim() {
        return domain("path dimension does not match the process");
    }
    Ok(())
}

pub fn lamperti_kiu_decompose(path: &Path, params: &StableParams) -> Result<MapPath> {
    check_dim(path, params)?;
    let a = params.alpha();
    let n = path.len();
    let mut m = MapPath {
        dim: path.dim(),
        times: Vec::with_capacity(n),
        xi: Vec::with_capacity(n),
        theta: Vec::with_capacity(n * path.dim()),
        phi_grid: path.times().to_vec(),
        stop: path.stop,
    };
    let mut s = 0.0;
    let mut prev_rate = 0.0;
    for i in 0..n {
        let r = path.radius(i);
        if r == 0.0 {
            return Err(Error::Path(format!("node {i} sits at the origin")));
        }
        let rate = r.powf(-a);
        if i > 0 {
            s += 0.5 * (rate + prev_rate) * (path.times()[i] - path.times()[i - 1]);
        }
        prev_rate = rate;
        m.times.push(s);
        m.xi.push(r.ln());
        m.theta.extend(path.point(i).iter().map(|c| c / r));
    }
    Ok(m)
}

pub fn lamperti_kiu_reconstruct(m: &MapPath, params: &StableParams) -> Result<Path> {
    if m.dim != params.dim() {
        return domain("map path dimension does not match the process");
    }
    if m.xi.len() != m.phi_grid.len() || m.theta.len() != m.xi.len() * m.dim {
        return Err(Error::Path("map path arrays have inconsistent lengths".into()));
    }
    let mut coords = Vec::with_capacity(m.theta.len());
    for i in 0..m.len() {
        let r = m.xi[i].exp();
        coords.extend(m.theta(i).iter().map(|c| r * c));
    }
    Path::from_nodes(m.dim, m.phi_grid.clone(), coords, m.stop)
}

/// Radius below which inversion is cut off.
pub const RBZ_CUTOFF: f64 = 1e-8;

/// Maps every node through `x -> x / |x|^2` and moves it to the clock
/// `A(t) = int_0^t |X_u|^{-2 alpha} du`. If a node comes within
/// [`RBZ_CUTOFF`] of the origin the image is cut there and marked
/// [`StopReason::Truncated`].
pub fn rbz_transform(path: &Path, params: &StableParams) -> Result<Path> {
    check_dim(path, params)?;
    let a2 = 2.0 * params.alpha();
    let d = path.dim();
    let mut times = Vec::with_capacity(path.len());
    let mut coords = Vec::with_capacity(path.coords().len());
    let mut stop = path.stop;
    let mut clock = 0.0;
    let mut prev_rate = 0.0;
    for i in 0..path.len() {
        let r = path.radius(i);
        let rate = r.powf(-a2);
        if r < RBZ_CUTOFF || !rate.is_finite() {
            if i == 0 {
                return domain("path starts at the inversion pole");
            }
            stop = StopReason::Truncated;
            break;
        }
        if i > 0 {
            let next = clock + 0.5 * (rate + prev_rate) * (path.times()[i] - path.times()[i - 1]);
            if !next.is_finite() {
                stop = StopReason::Truncated;
                break;
            }
            // rounding can swallow a step when the clock has grown huge
            if !(next > clock) {
                continue;
            }
            clock = next;
        }
        prev_rate = rate;
        times.push(clock);
        let start = coords.len();
        coords.extend_from_slice(path.point(i));
        invert_in_place(&mut coords[start..start + d]);
    }
    let mut out = Path::from_nodes(d, times, coords, stop)?;
    out.unresolved = path.unresolved;
    Ok(out)
}

/// Anchor of a time reversal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", content = "radius")]
pub enum LTimeRule {
    /// The last node of the path.
    PathEnd,
    /// Last node with `|X| <= R`.
    LastExitBall(f64),
    /// Last node with `|X| >= r`; the interior mirror of `LastExitBall`.
    LastOutsideBall(f64),
}

impl LTimeRule {
    /// Node index of the anchor on `path`.
    pub fn anchor(&self, path: &Path) -> Result<usize> {
        let n = path.len();
        let found = match *self {
            LTimeRule::PathEnd => Some(n - 1),
            LTimeRule::LastExitBall(r) => (0..n).rev().find(|&i| path.radius(i) <= r),
            LTimeRule::LastOutsideBall(r) => (0..n).rev().find(|&i| path.radius(i) >= r),
        };
        found.ok_or_else(|| Error::Path(format!("{self:?} is not defined on this path")))
    }
}

/// `t -> X_{k - t}` on `[0, k]`, with `k` the anchor time. Node values are
/// kept, which takes the value at a jump node as its own left limit.
pub fn time_reverse(path: &Path, rule: LTimeRule) -> Result<Path> {
    let l = rule.anchor(path)?;
    let k = path.times()[l];
    let d = path.dim();
    let mut times = Vec::with_capacity(l + 1);
    let mut coords = Vec::with_capacity((l + 1) * d);
    for i in (0..=l).rev() {
        times.push(k - path.times()[i]);
        coords.extend_from_slice(path.point(i));
    }
    times[0] = 0.0;
    let mut out = Path::from_nodes(d, times, coords, StopReason::Horizon)?;
    out.unresolved = path.unresolved;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;
    use crate::sampling::{simulate_path, RngStream, StepPolicy, StopRule};

    fn circle(r: f64, n: usize, dt: f64) -> Path {
        let mut times = vec![];
        let mut coords = vec![];
        for i in 0..n {
            let a = i as f64 * 0.3;
            times.push(i as f64 * dt);
            coords.extend_from_slice(&[r * a.cos(), r * a.sin()]);
        }
        Path::from_nodes(2, times, coords, StopReason::Horizon).unwrap()
    }

    fn random_path(seed: u64) -> (Path, StableParams) {
        let p = StableParams::new(1.3, 2).unwrap();
        let mut rng = RngStream::new(seed, 0);
        let path = simulate_path(&p, &Point::on_axis(2, 2.0), &StepPolicy::fixed(1e-3), &StopRule::Horizon(0.5), &mut rng)
            .unwrap();
        (path, p)
    }

    #[test]
    fn constant_radius_clock() {
        let p = StableParams::new(1.5, 2).unwrap();
        let path = circle(2.0, 50, 0.01);
        let m = lamperti_kiu_decompose(&path, &p).unwrap();
        for i in 0..m.len() {
            assert!((m.xi[i] - 2f64.ln()).abs() < 1e-15);
            let want = path.times()[i] * 2f64.powf(-1.5);
            assert!((m.times[i] - want).abs() < 1e-13);
        }
    }

    #[test]
    fn round_trip() {
        for seed in 0..5 {
            let (path, p) = random_path(seed);
            let back = lamperti_kiu_reconstruct(&lamperti_kiu_decompose(&path, &p).unwrap(), &p).unwrap();
            assert_eq!(back.times(), path.times());
            for (a, b) in back.coords().iter().zip(path.coords()) {
                assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn scaling_covariance() {
        let (path, p) = random_path(7);
        let c: f64 = 3.0;
        let times: Vec<f64> = path.times().iter().map(|t| t * c.powf(p.alpha())).collect();
        let coords: Vec<f64> = path.coords().iter().map(|x| c * x).collect();
        let scaled = Path::from_nodes(2, times, coords, path.stop).unwrap();
        let m0 = lamperti_kiu_decompose(&path, &p).unwrap();
        let m1 = lamperti_kiu_decompose(&scaled, &p).unwrap();
        for i in 0..m0.len() {
            assert!((m1.xi[i] - m0.xi[i] - c.ln()).abs() < 1e-12);
            assert!((m1.times[i] - m0.times[i]).abs() < 1e-9 * m0.times[i].max(1.0));
        }
    }

    #[test]
    fn inversion_radii() {
        let (path, p) = random_path(3);
        let k = rbz_transform(&path, &p).unwrap();
        assert_eq!(k.len(), path.len());
        for i in 0..k.len() {
            assert!((k.radius(i) * path.radius(i) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn inversion_twice_recovers_clock() {
        let (path, p) = random_path(11);
        let twice = rbz_transform(&rbz_transform(&path, &p).unwrap(), &p).unwrap();
        assert_eq!(twice.len(), path.len());
        let mut worst: f64 = 0.0;
        for i in 0..path.len() {
            for (a, b) in twice.point(i).iter().zip(path.point(i)) {
                assert!((a - b).abs() < 1e-12);
            }
            worst = worst.max((twice.times()[i] - path.times()[i]).abs());
        }
        assert!(worst < 0.05, "clock drift {worst}");
    }

    #[test]
    fn reversal() {
        let (path, _) = random_path(5);
        let r = time_reverse(&path, LTimeRule::PathEnd).unwrap();
        assert_eq!(r.point(0), path.last());
        let rr = time_reverse(&r, LTimeRule::PathEnd).unwrap();
        assert_eq!(rr.coords(), path.coords());
        for (a, b) in rr.times().iter().zip(path.times()) {
            assert!((a - b).abs() < 1e-12);
        }
        let far = circle(2.5, 10, 0.1);
        assert!(time_reverse(&far, LTimeRule::LastExitBall(2.0)).is_err());
        let l = LTimeRule::LastExitBall(2.1).anchor(&path).unwrap();
        assert!(((l + 1)..path.len()).all(|i| path.radius(i) > 2.1));
    }
}
