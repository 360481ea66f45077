//! Points in `R^d`, target regions on the unit sphere and the inversion map.
//!
//! A [`SphereRegion`] is a finite union of pairwise-disjoint geodesic caps,
//! the whole sphere, or a single direction. Surface measure is always the
//! normalised one (`sigma_1(S^{d-1}) = 1`).

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::specfun::reg_inc_beta;

/// Tolerance on `| |theta| - 1 |` for anything claimed to be a unit vector.
pub const UNIT_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return domain("point must have at least one coordinate");
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return domain("point coordinates must be finite");
        }
        Ok(Point(coords))
    }

    pub fn from_slice(coords: &[f64]) -> Self {
        Point(coords.to_vec())
    }

    pub fn zeros(dim: usize) -> Self {
        Point(vec![0.0; dim])
    }

    /// The `i`-th standard basis vector.
    pub fn basis(dim: usize, i: usize) -> Self {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        Point(v)
    }

    /// `r` times the first basis vector.
    pub fn on_axis(dim: usize, r: f64) -> Self {
        let mut v = vec![0.0; dim];
        v[0] = r;
        Point(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn norm_sq(&self) -> f64 {
        norm_sq(&self.0)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn dot(&self, other: &Point) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn dist(&self, other: &Point) -> f64 {
        dist(&self.0, &other.0)
    }

    pub fn scale(&self, c: f64) -> Point {
        Point(self.0.iter().map(|x| c * x).collect())
    }

    pub fn add(&self, other: &Point) -> Point {
        Point(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Point) -> Point {
        Point(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    /// `x / |x|`; errors on the origin.
    pub fn normalized(&self) -> Result<Point> {
        let n = self.norm();
        if n == 0.0 {
            return domain("cannot normalise the zero vector");
        }
        Ok(self.scale(1.0 / n))
    }

    pub fn is_unit(&self) -> bool {
        (self.norm() - 1.0).abs() <= UNIT_TOL
    }
}

pub(crate) fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub(crate) fn dist_sq(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

pub(crate) fn dist(x: &[f64], y: &[f64]) -> f64 {
    dist_sq(x, y).sqrt()
}

/// Angle between two unit vectors, robust near 0 and pi.
pub(crate) fn angle_between(u: &[f64], v: &[f64]) -> f64 {
    let s: f64 = dist(u, v);
    let a: f64 = u.iter().zip(v).map(|(a, b)| (a + b) * (a + b)).sum::<f64>().sqrt();
    2.0 * s.atan2(a)
}

/// Stability index and dimension.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct StableParams {
    alpha: f64,
    dim: usize,
}

#[derive(Deserialize)]
struct RawParams {
    alpha: f64,
    dim: usize,
}

impl TryFrom<RawParams> for StableParams {
    type Error = Error;
    fn try_from(raw: RawParams) -> Result<Self> {
        StableParams::new(raw.alpha, raw.dim)
    }
}

impl StableParams {
    pub fn new(alpha: f64, dim: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 2.0) {
            return domain(format!("stability index alpha must lie in (0,2), got {alpha}"));
        }
        if dim < 2 {
            return domain(format!("dimension must be at least 2, got {dim}"));
        }
        Ok(StableParams { alpha, dim })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn d(&self) -> f64 {
        self.dim as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cap {
    pub axis: Point,
    pub half_angle: f64,
}

impl Cap {
    pub fn new(axis: Point, half_angle: f64) -> Result<Self> {
        if !axis.is_unit() {
            return domain("cap axis must be a unit vector");
        }
        if !(half_angle > 0.0 && half_angle <= PI) {
            return domain(format!("cap half-angle must lie in (0, pi], got {half_angle}"));
        }
        Ok(Cap { axis, half_angle })
    }

    /// Normalised surface measure of the cap in `S^{d-1}`.
    pub fn measure(&self) -> f64 {
        let d = self.axis.dim() as f64;
        let t = (1.0 - self.half_angle.cos()) / 2.0;
        let m = (d - 1.0) / 2.0;
        reg_inc_beta(m, m, t.clamp(0.0, 1.0)).expect("valid beta arguments")
    }

    pub fn contains(&self, theta: &[f64], ang_tol: f64) -> bool {
        angle_between(self.axis.coords(), theta) <= self.half_angle + ang_tol
    }

    /// Contained in `other` (as closed caps).
    pub fn inside(&self, other: &Cap) -> bool {
        angle_between(self.axis.coords(), other.axis.coords()) + self.half_angle
            <= other.half_angle + 1e-12
    }
}

/// Target set `S` on the unit sphere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", try_from = "RawRegion", into = "RawRegion")]
pub enum SphereRegion {
    FullSphere { dim: usize },
    CapUnion(Vec<Cap>),
    Singleton(Point),
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum RawRegion {
    Full {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dim: Option<usize>,
    },
    CapUnion {
        caps: Vec<Cap>,
    },
    Point {
        direction: Point,
    },
}

impl TryFrom<RawRegion> for SphereRegion {
    type Error = Error;
    fn try_from(raw: RawRegion) -> Result<Self> {
        match raw {
            // the dimension of a full sphere is fixed later by the run parameters
            RawRegion::Full { dim } => Ok(SphereRegion::FullSphere { dim: dim.unwrap_or(0) }),
            RawRegion::CapUnion { caps } => {
                let caps = caps
                    .into_iter()
                    .map(|c| Cap::new(c.axis, c.half_angle))
                    .collect::<Result<Vec<_>>>()?;
                SphereRegion::cap_union(caps)
            }
            RawRegion::Point { direction } => SphereRegion::singleton(direction),
        }
    }
}

impl From<SphereRegion> for RawRegion {
    fn from(s: SphereRegion) -> Self {
        match s {
            SphereRegion::FullSphere { dim } => RawRegion::Full { dim: Some(dim) },
            SphereRegion::CapUnion(caps) => RawRegion::CapUnion { caps },
            SphereRegion::Singleton(direction) => RawRegion::Point { direction },
        }
    }
}

impl SphereRegion {
    pub fn full(dim: usize) -> Self {
        SphereRegion::FullSphere { dim }
    }

    pub fn cap(axis: Point, half_angle: f64) -> Result<Self> {
        SphereRegion::cap_union(vec![Cap::new(axis, half_angle)?])
    }

    pub fn cap_union(caps: Vec<Cap>) -> Result<Self> {
        if caps.is_empty() {
            return domain("cap union must contain at least one cap");
        }
        let dim = caps[0].axis.dim();
        if caps.iter().any(|c| c.axis.dim() != dim) {
            return domain("all cap axes must share one dimension");
        }
        for (i, a) in caps.iter().enumerate() {
            for b in &caps[i + 1..] {
                let sep = angle_between(a.axis.coords(), b.axis.coords());
                if sep < a.half_angle + b.half_angle - 1e-12 {
                    return domain("caps must be pairwise disjoint");
                }
            }
        }
        Ok(SphereRegion::CapUnion(caps))
    }

    pub fn singleton(direction: Point) -> Result<Self> {
        if !direction.is_unit() {
            return domain("singleton direction must be a unit vector");
        }
        Ok(SphereRegion::Singleton(direction))
    }

    /// Fixes the dimension of a `FullSphere` read from a config file.
    pub fn with_dim(self, dim: usize) -> Result<Self> {
        match self {
            SphereRegion::FullSphere { .. } => Ok(SphereRegion::FullSphere { dim }),
            other => {
                if other.dim() != dim {
                    return domain(format!(
                        "region has dimension {}, parameters have {dim}",
                        other.dim()
                    ));
                }
                Ok(other)
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            SphereRegion::FullSphere { dim } => *dim,
            SphereRegion::CapUnion(caps) => caps[0].axis.dim(),
            SphereRegion::Singleton(p) => p.dim(),
        }
    }

    pub fn is_singleton(&self) -> bool {
        matches!(self, SphereRegion::Singleton(_))
    }

    /// `sigma_1(S)`.
    pub fn measure(&self) -> f64 {
        match self {
            SphereRegion::FullSphere { .. } => 1.0,
            SphereRegion::CapUnion(caps) => caps.iter().map(Cap::measure).sum::<f64>().min(1.0),
            SphereRegion::Singleton(_) => 0.0,
        }
    }

    pub fn contains(&self, theta: &Point, ang_tol: f64) -> Result<bool> {
        if !theta.is_unit() {
            return domain("direction must be a unit vector");
        }
        if theta.dim() != self.dim() {
            return domain("direction dimension does not match the region");
        }
        Ok(self.contains_unchecked(theta.coords(), ang_tol))
    }

    pub(crate) fn contains_unchecked(&self, theta: &[f64], ang_tol: f64) -> bool {
        match self {
            SphereRegion::FullSphere { .. } => true,
            SphereRegion::CapUnion(caps) => caps.iter().any(|c| c.contains(theta, ang_tol)),
            // chordal ball, matching the ambient-metric sets of the singleton case
            SphereRegion::Singleton(p) => dist(p.coords(), theta) <= ang_tol,
        }
    }

    /// Whether every cap of `self` is contained in some cap of `other`.
    pub fn is_subset_of(&self, other: &SphereRegion) -> bool {
        match (self, other) {
            (_, SphereRegion::FullSphere { .. }) => true,
            (SphereRegion::FullSphere { .. }, _) => false,
            (SphereRegion::CapUnion(inner), SphereRegion::CapUnion(outer)) => {
                inner.iter().all(|c| outer.iter().any(|o| c.inside(o)))
            }
            (SphereRegion::Singleton(p), s) => s.contains_unchecked(p.coords(), 1e-12),
            (SphereRegion::CapUnion(_), SphereRegion::Singleton(_)) => false,
        }
    }

    /// Angular distance from a unit direction to the closed region (0 inside).
    pub fn angular_gap(&self, theta: &[f64]) -> f64 {
        match self {
            SphereRegion::FullSphere { .. } => 0.0,
            SphereRegion::CapUnion(caps) => caps
                .iter()
                .map(|c| (angle_between(c.axis.coords(), theta) - c.half_angle).max(0.0))
                .fold(f64::INFINITY, f64::min),
            SphereRegion::Singleton(p) => angle_between(p.coords(), theta),
        }
    }

    /// Applies an orthogonal map (row-major `d x d`) to every axis.
    pub fn rotated(&self, rot: &[f64]) -> SphereRegion {
        match self {
            SphereRegion::FullSphere { dim } => SphereRegion::FullSphere { dim: *dim },
            SphereRegion::CapUnion(caps) => SphereRegion::CapUnion(
                caps.iter()
                    .map(|c| Cap { axis: apply(rot, &c.axis), half_angle: c.half_angle })
                    .collect(),
            ),
            SphereRegion::Singleton(p) => SphereRegion::Singleton(apply(rot, p)),
        }
    }

    /// Draws a direction from the normalised surface measure restricted to the region.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        match self {
            SphereRegion::FullSphere { dim } => uniform_direction(*dim, rng),
            SphereRegion::Singleton(p) => p.clone(),
            SphereRegion::CapUnion(caps) => {
                let total: f64 = caps.iter().map(Cap::measure).sum();
                let mut u = rng.gen::<f64>() * total;
                let mut chosen = &caps[caps.len() - 1];
                for c in caps {
                    let m = c.measure();
                    if u < m {
                        chosen = c;
                        break;
                    }
                    u -= m;
                }
                loop {
                    let th = uniform_direction(chosen.axis.dim(), rng);
                    if chosen.contains(th.coords(), 0.0) {
                        return th;
                    }
                }
            }
        }
    }
}

/// Riesz inversion through the unit sphere, `Kx = x / |x|^2`.
pub fn invert(x: &Point) -> Result<Point> {
    let n2 = x.norm_sq();
    if n2 == 0.0 {
        return Err(Error::InversionPole);
    }
    Ok(x.scale(1.0 / n2))
}

pub(crate) fn invert_in_place(x: &mut [f64]) {
    let n2 = norm_sq(x);
    for v in x.iter_mut() {
        *v /= n2;
    }
}

pub fn uniform_direction<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Point {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm_sq(&v).sqrt();
        if n > 1e-300 {
            return Point(v.into_iter().map(|c| c / n).collect());
        }
    }
}

/// Haar-random orthogonal matrix, row-major.
pub fn random_rotation<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    // Gram-Schmidt on a Gaussian matrix
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(dim);
    while rows.len() < dim {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        for r in &rows {
            let p = dot(&v, r);
            for (a, b) in v.iter_mut().zip(r) {
                *a -= p * b;
            }
        }
        let n = norm_sq(&v).sqrt();
        if n > 1e-8 {
            rows.push(v.into_iter().map(|c| c / n).collect());
        }
    }
    rows.concat()
}

pub fn apply(rot: &[f64], x: &Point) -> Point {
    let d = x.dim();
    Point((0..d).map(|i| dot(&rot[i * d..(i + 1) * d], x.coords())).collect())
}

/// Rotation taking `e_1` to the unit vector `u` (a Householder reflection
/// composed with a sign flip keeps determinant irrelevant for isotropic use).
pub(crate) fn frame_from(u: &[f64]) -> Vec<f64> {
    let d = u.len();
    let mut w = u.to_vec();
    w[0] -= 1.0;
    let wn = norm_sq(&w);
    let mut m = vec![0.0; d * d];
    for i in 0..d {
        m[i * d + i] = 1.0;
    }
    if wn < 1e-30 {
        return m;
    }
    // H = I - 2 w w^T / |w|^2 maps e_1 to u
    for i in 0..d {
        for j in 0..d {
            m[i * d + j] -= 2.0 * w[i] * w[j] / wn;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn quad_cap_measure(gamma: f64, d: usize) -> f64 {
        // midpoint rule, plenty for a smooth integrand
        let n = 200_000;
        let f = |phi: f64| phi.sin().powi(d as i32 - 2);
        let int = |b: f64| (0..n).map(|k| f((k as f64 + 0.5) * b / n as f64)).sum::<f64>() * b / n as f64;
        int(gamma) / int(PI)
    }

    #[test]
    fn measure_examples() {
        assert_eq!(SphereRegion::full(3).measure(), 1.0);
        for d in 2..6 {
            let s = SphereRegion::cap(Point::basis(d, 0), PI / 2.0).unwrap();
            assert!((s.measure() - 0.5).abs() < 1e-13, "d={d}");
        }
        let s = SphereRegion::cap(Point::basis(3, 0), PI / 3.0).unwrap();
        assert!((s.measure() - 0.25).abs() < 1e-13);
        assert!((s.measure() - (1.0 - (PI / 3.0).cos()) / 2.0).abs() < 1e-13);
        for d in [2, 3, 4, 5] {
            let g = 0.7;
            let s = SphereRegion::cap(Point::basis(d, 0), g).unwrap();
            assert!((s.measure() - quad_cap_measure(g, d)).abs() < 1e-8, "d={d}");
        }
        let p = SphereRegion::singleton(Point::basis(2, 1)).unwrap();
        assert_eq!(p.measure(), 0.0);
    }

    #[test]
    fn overlapping_caps_rejected() {
        let a = Cap::new(Point::basis(2, 0), 1.0).unwrap();
        let b = Cap::new(Point::basis(2, 1), 1.0).unwrap();
        let err = SphereRegion::cap_union(vec![a.clone(), b]).unwrap_err();
        assert!(err.to_string().contains("caps must be pairwise disjoint"));
        let c = Cap::new(Point::new(vec![-1.0, 0.0]).unwrap(), 1.0).unwrap();
        let s = SphereRegion::cap_union(vec![a.clone(), c.clone()]).unwrap();
        let sum = a.measure() + c.measure();
        assert!((s.measure() - sum).abs() < 1e-14);
    }

    #[test]
    fn contains_examples() {
        let full = SphereRegion::full(2);
        assert!(full.contains(&Point::basis(2, 1), 0.0).unwrap());
        let cap = SphereRegion::cap(Point::basis(2, 0), PI / 4.0).unwrap();
        assert!(cap.contains(&Point::basis(2, 0), 0.0).unwrap());
        assert!(!cap.contains(&Point::basis(2, 1), 0.0).unwrap());
        assert!(cap.contains(&Point::new(vec![2.0, 0.0]).unwrap(), 0.0).is_err());
    }

    #[test]
    fn inversion() {
        let x = Point::new(vec![2.0, 0.0]).unwrap();
        assert_eq!(invert(&x).unwrap().coords(), &[0.5, 0.0]);
        let th = Point::new(vec![0.6, 0.8]).unwrap();
        let k = invert(&th).unwrap();
        assert!(k.dist(&th) < 1e-15);
        let y = Point::new(vec![0.3, -1.2]).unwrap();
        let back = invert(&invert(&y).unwrap()).unwrap();
        assert!(back.dist(&y) / y.norm() < 1e-12);
        assert!(matches!(invert(&Point::zeros(3)), Err(Error::InversionPole)));
    }

    #[test]
    fn rotation_equivariance_of_contains() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = SphereRegion::cap_union(vec![
            Cap::new(Point::basis(3, 0), 0.5).unwrap(),
            Cap::new(Point::basis(3, 2), 0.4).unwrap(),
        ])
        .unwrap();
        for _ in 0..200 {
            let rot = random_rotation(3, &mut rng);
            let th = uniform_direction(3, &mut rng);
            let rs = s.rotated(&rot);
            let rth = apply(&rot, &th);
            assert_eq!(
                s.contains(&th, 0.0).unwrap(),
                rs.contains(&rth, 0.0).unwrap()
            );
        }
    }

    #[test]
    fn frame_maps_e1() {
        let u = Point::new(vec![0.36, 0.48, 0.8]).unwrap();
        let m = frame_from(u.coords());
        let img = apply(&m, &Point::basis(3, 0));
        assert!(img.dist(&u) < 1e-14);
    }

    #[test]
    fn region_json_forms() {
        let s: SphereRegion = serde_json::from_str(
            r#"{"type":"cap_union","caps":[{"axis":[1.0,0.0],"half_angle":0.7854}]}"#,
        )
        .unwrap();
        assert!(matches!(s, SphereRegion::CapUnion(ref c) if c.len() == 1));
        let f: SphereRegion = serde_json::from_str(r#"{"type":"full"}"#).unwrap();
        assert_eq!(f.with_dim(3).unwrap().dim(), 3);
        let p: SphereRegion = serde_json::from_str(r#"{"type":"point","direction":[0.0,1.0]}"#).unwrap();
        assert!(p.is_singleton());
        let bad = serde_json::from_str::<SphereRegion>(r#"{"type":"point","direction":[0.0,2.0]}"#);
        assert!(bad.is_err());
        let round: SphereRegion = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(round, s);
    }
}
