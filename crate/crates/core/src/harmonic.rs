//! Harmonic functions, densities and resolvents in closed form.
//!
//! Every constant is pinned (see [`Constants`]); nothing here is defined
//! only up to proportionality. Surface integrals use the normalised measure
//! `sigma_1` on `S^{d-1}`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::geometry::{dist, dist_sq, norm_sq, Point, SphereRegion, StableParams, UNIT_TOL};
use crate::specfun::{beta, cap_integral_with_pole, gamma, integrate, reg_inc_beta, QuadratureSpec};

/// The six normalising constants, for one `(alpha, d)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    /// Law of the point of closest reach.
    pub c_closest: f64,
    /// Joint law of the furthest pre-exit point and the exit point.
    pub c_joint: f64,
    /// Resolvent of the process killed on entering the ball.
    pub c_resolvent: f64,
    /// Resolvent of the attracted process issued from the sphere.
    pub c_boundary: f64,
    /// Excursion occupation kernel.
    pub c_excursion: f64,
    /// Normaliser of the probability of never entering the ball.
    pub c_hminus: f64,
}

impl Constants {
    pub fn new(params: &StableParams) -> Result<Self> {
        let a = params.alpha();
        let d = params.d();
        if !(a < d) {
            return domain("constants need alpha < d");
        }
        let pi_d2 = PI.powf(d / 2.0);
        let g_d2 = gamma(d / 2.0);
        let g_a2 = gamma(a / 2.0);
        let g_da2 = gamma((d - a) / 2.0);
        let two_a = 2f64.powf(a);
        Ok(Constants {
            c_closest: g_d2 * g_d2 / (pi_d2 * g_da2 * g_a2),
            c_joint: g_d2 * g_d2 / (PI.powf(d) * gamma(-a / 2.0).abs() * g_a2),
            c_resolvent: g_d2 / (two_a * pi_d2 * g_a2 * g_a2),
            c_boundary: g_d2 / (two_a * pi_d2 * g_a2 * gamma(a / 2.0 + 1.0)),
            c_excursion: g_da2 / (two_a * pi_d2 * g_a2),
            c_hminus: g_d2 / (g_da2 * g_a2),
        })
    }
}

/// Surface area of `S^{d-1}`.
pub fn sphere_area(d: usize) -> f64 {
    let d = d as f64;
    2.0 * PI.powf(d / 2.0) / gamma(d / 2.0)
}

fn check_dim(x: &[f64], dim: usize) -> Result<()> {
    if x.len() != dim {
        return domain(format!("point has dimension {}, expected {dim}", x.len()));
    }
    Ok(())
}

fn on_sphere(r: f64) -> bool {
    (r - 1.0).abs() <= UNIT_TOL
}

/// `int_S |x - theta|^{-d} sigma_1(d theta)`; a point mass for a singleton.
pub fn h_kernel(x: &Point, region: &SphereRegion, quad: &QuadratureSpec) -> Result<f64> {
    let xs = x.coords();
    check_dim(xs, region.dim())?;
    check_kernel_finite(xs, region)?;
    let d = region.dim() as i32;
    match region {
        SphereRegion::Singleton(p) => Ok(dist(p.coords(), xs).powi(-d)),
        _ => {
            let r = x.norm();
            let pole: Option<Vec<f64>> = (r > 0.0).then(|| xs.iter().map(|c| c / r).collect());
            let f = |th: &[f64]| dist_sq(xs, th).powf(-0.5 * d as f64);
            cap_integral_with_pole(&f, region, quad, pole.as_deref())
        }
    }
}

fn check_kernel_finite(x: &[f64], region: &SphereRegion) -> Result<()> {
    let r = norm_sq(x).sqrt();
    if on_sphere(r) {
        let theta: Vec<f64> = x.iter().map(|c| c / r).collect();
        if region.angular_gap(&theta) <= 1e-12 {
            return Err(Error::KernelSingularity);
        }
    }
    Ok(())
}

/// The kernel by closed forms where they exist (whole sphere, singleton,
/// arcs of the circle) and by quadrature otherwise.
pub fn h_kernel_fast(x: &[f64], region: &SphereRegion, quad: &QuadratureSpec) -> Result<f64> {
    let dim = region.dim();
    check_dim(x, dim)?;
    check_kernel_finite(x, region)?;
    let r2 = norm_sq(x);
    match region {
        SphereRegion::FullSphere { .. } => {
            if r2 > 1.0 {
                Ok(r2.powf(1.0 - dim as f64 / 2.0) / (r2 - 1.0))
            } else {
                Ok(1.0 / (1.0 - r2))
            }
        }
        SphereRegion::Singleton(p) => Ok(dist(p.coords(), x).powi(-(dim as i32))),
        SphereRegion::CapUnion(caps) if dim == 2 => {
            Ok(caps.iter().map(|c| arc_kernel(x, c.axis.coords(), c.half_angle)).sum())
        }
        _ => h_kernel(&Point::from_slice(x), region, quad),
    }
}

/// `(1/2pi) int_{|t - phi0| < gamma} |x - e^{it}|^{-2} dt` in closed form.
fn arc_kernel(x: &[f64], axis: &[f64], gamma: f64) -> f64 {
    let rho = norm_sq(x).sqrt();
    let c = (rho * rho - 1.0).abs();
    let k = (rho + 1.0) / (rho - 1.0).abs();
    let psi = x[1].atan2(x[0]);
    let phi0 = axis[1].atan2(axis[0]);
    let mut mid = (phi0 - psi) % (2.0 * PI);
    if mid > PI {
        mid -= 2.0 * PI;
    } else if mid <= -PI {
        mid += 2.0 * PI;
    }
    // antiderivative of 1/(1 + rho^2 - 2 rho cos u), continuous on (-2pi, 2pi)
    let g = |u: f64| 2.0 / c * (k * (0.5 * u).sin()).atan2((0.5 * u).cos());
    (g(mid + gamma) - g(mid - gamma)) / (2.0 * PI)
}

/// `H_S(x) = | |x|^2 - 1 |^{alpha/2} h(x)`.
pub fn h_s(x: &Point, region: &SphereRegion, params: &StableParams, quad: &QuadratureSpec) -> Result<f64> {
    let r2 = x.norm_sq();
    if on_sphere(r2.sqrt()) {
        return domain("H_S is defined off the unit sphere");
    }
    Ok((r2 - 1.0).abs().powf(params.alpha() / 2.0) * h_kernel(x, region, quad)?)
}

/// `H_S` through [`h_kernel_fast`].
pub fn h_s_fast(x: &[f64], region: &SphereRegion, params: &StableParams, quad: &QuadratureSpec) -> Result<f64> {
    let r2 = norm_sq(x);
    if on_sphere(r2.sqrt()) {
        return domain("H_S is defined off the unit sphere");
    }
    Ok((r2 - 1.0).abs().powf(params.alpha() / 2.0) * h_kernel_fast(x, region, quad)?)
}

/// Probability of never entering the unit ball from `|x| > 1`.
pub fn h_out(x: &Point, params: &StableParams) -> Result<f64> {
    check_dim(x.coords(), params.dim())?;
    h_out_radius(x.norm(), params)
}

pub fn h_out_radius(r: f64, params: &StableParams) -> Result<f64> {
    if !(r > 1.0) {
        return domain(format!("H_out needs |x| > 1, got {r}"));
    }
    let a = params.alpha();
    if !(a < params.d()) {
        return domain("H_out needs alpha < d");
    }
    reg_inc_beta(a / 2.0, (params.d() - a) / 2.0, 1.0 - 1.0 / (r * r))
}

/// `c_hminus int_0^{|x|^2 - 1} (u+1)^{-d/2} u^{alpha/2 - 1} du` by quadrature
/// after `u = s^{2/alpha}`, independently of the incomplete beta function.
pub fn h_out_quadrature(r: f64, params: &StableParams, tol: f64) -> Result<f64> {
    if !(r > 1.0) {
        return domain(format!("H_out needs |x| > 1, got {r}"));
    }
    let a = params.alpha();
    let d = params.d();
    let c = Constants::new(params)?.c_hminus;
    let upper = (r * r - 1.0).powf(a / 2.0);
    let q = QuadratureSpec::adaptive(tol / c);
    let v = integrate(|s| (s.powf(2.0 / a) + 1.0).powf(-d / 2.0), 0.0, upper, &q)?;
    Ok(c * 2.0 / a * v.value)
}

/// `H_in(x) = |x|^{alpha - d} H_out(Kx)` for `0 < |x| < 1`.
pub fn h_in(x: &Point, params: &StableParams) -> Result<f64> {
    check_dim(x.coords(), params.dim())?;
    h_in_radius(x.norm(), params)
}

pub fn h_in_radius(r: f64, params: &StableParams) -> Result<f64> {
    if !(r > 0.0 && r < 1.0) {
        return domain(format!("H_in needs 0 < |x| < 1, got {r}"));
    }
    Ok(r.powf(params.alpha() - params.d()) * h_out_radius(1.0 / r, params)?)
}

/// Density of the point of closest reach to the origin.
pub fn closest_reach_density(z: &Point, x: &Point, params: &StableParams) -> Result<f64> {
    check_dim(z.coords(), params.dim())?;
    check_dim(x.coords(), params.dim())?;
    let (rz, rx) = (z.norm(), x.norm());
    if !(rz > 0.0 && rz < rx) {
        return domain("closest reach density needs 0 < |z| < |x|");
    }
    let a = params.alpha();
    let c = Constants::new(params)?.c_closest;
    Ok(c * (rx * rx - rz * rz).powf(a / 2.0) * rz.powf(-a) * z.dist(x).powf(-params.d()))
}

/// Joint density of (furthest point before first exit, exit point).
pub fn joint_reach_exit_density(z: &Point, v: &Point, x: &Point, params: &StableParams) -> Result<f64> {
    for p in [z, v, x] {
        check_dim(p.coords(), params.dim())?;
    }
    let (rz, rv, rx) = (z.norm(), v.norm(), x.norm());
    if !(rx < rz && rz < 1.0 && 1.0 < rv) {
        return domain("joint density needs |x| < |z| < 1 < |v|");
    }
    let a = params.alpha();
    let d = params.d();
    let c = Constants::new(params)?.c_joint;
    Ok(c * (rz * rz - rx * rx).powf(a / 2.0)
        / ((rv * rv - rz * rz).powf(a / 2.0) * z.dist(v).powf(d) * z.dist(x).powf(d)))
}

/// Marginal of the furthest pre-exit point after integrating out the exit
/// point with the Poisson formula: constant `c_joint * |S^{d-1}| / alpha`.
pub fn furthest_reach_density(z: &Point, x: &Point, params: &StableParams) -> Result<f64> {
    check_dim(z.coords(), params.dim())?;
    check_dim(x.coords(), params.dim())?;
    let (rz, rx) = (z.norm(), x.norm());
    if !(rx < rz && rz < 1.0) {
        return domain("furthest reach density needs |x| < |z| < 1");
    }
    let a = params.alpha();
    let c = Constants::new(params)?.c_joint * sphere_area(params.dim()) / a;
    Ok(c * (rz * rz - rx * rx).powf(a / 2.0) / ((1.0 - rz * rz).powf(a / 2.0) * z.dist(x).powf(params.d())))
}

/// `int r^{d-2} (r^2 - |z|^2) |z - theta|^{-d}` over the sphere of radius
/// `r` against its normalised surface measure. Equals one.
pub fn poisson_identity(z: &Point, r: f64, quad: &QuadratureSpec) -> Result<f64> {
    let rz = z.norm();
    if !(rz < 1.0 && 1.0 < r) {
        return domain("Poisson identity needs |z| < 1 < r");
    }
    let d = z.dim();
    if d < 2 {
        return domain("dimension must be at least 2");
    }
    let zs = z.coords();
    let pref = r.powi(d as i32 - 2) * (r * r - rz * rz);
    let f = |th: &[f64]| {
        let s: f64 = zs.iter().zip(th).map(|(a, b)| (a - r * b) * (a - r * b)).sum();
        pref * s.powf(-(d as f64) / 2.0)
    };
    let pole: Option<Vec<f64>> = (rz > 0.0).then(|| zs.iter().map(|c| c / rz).collect());
    cap_integral_with_pole(&f, &SphereRegion::full(d), quad, pole.as_deref())
}

/// Probability that the attracted process reaches `S'` given it reaches `S`.
pub fn hitting_distribution(
    sub: &SphereRegion,
    region: &SphereRegion,
    x: &Point,
    quad: &QuadratureSpec,
) -> Result<f64> {
    if !sub.is_subset_of(region) {
        return domain("S' must be contained in S");
    }
    if !(region.measure() > 0.0) {
        return domain("S must have positive measure");
    }
    if on_sphere(x.norm()) {
        return domain("hitting distribution needs |x| != 1");
    }
    let num = h_kernel(x, sub, quad)?;
    let den = h_kernel(x, region, quad)?;
    Ok((num / den).clamp(0.0, 1.0))
}

/// `zeta(x, y) = (|x|^2 - 1)(|y|^2 - 1) / |x - y|^2`.
fn zeta_plus(x: &[f64], y: &[f64]) -> f64 {
    (norm_sq(x) - 1.0) * (norm_sq(y) - 1.0) / dist_sq(x, y)
}

/// Resolvent density of the process killed on entering the unit ball.
pub fn resolvent_exterior(x: &Point, y: &Point, params: &StableParams) -> Result<f64> {
    check_dim(x.coords(), params.dim())?;
    check_dim(y.coords(), params.dim())?;
    if !(x.norm() > 1.0 && y.norm() > 1.0) {
        return domain("exterior resolvent needs |x| > 1 and |y| > 1");
    }
    if x == y {
        return domain("resolvent density is infinite on the diagonal");
    }
    let a = params.alpha();
    let d = params.d();
    let c = Constants::new(params)?.c_resolvent;
    let zeta = zeta_plus(x.coords(), y.coords());
    let (p, q) = (a / 2.0, (d - a) / 2.0);
    // int_0^zeta (u+1)^{-d/2} u^{a/2-1} du = B(p,q) I_{zeta/(1+zeta)}(p,q)
    let inner = beta(p, q) * reg_inc_beta(p, q, zeta / (1.0 + zeta))?;
    Ok(c * x.dist(y).powf(a - d) * inner)
}

/// Resolvent density of the process attracted to `S` from outside, for a
/// start off the sphere or on the sphere away from the closure of `S`.
pub fn resolvent_conditioned(
    x: &Point,
    y: &Point,
    region: &SphereRegion,
    params: &StableParams,
    quad: &QuadratureSpec,
) -> Result<f64> {
    check_dim(x.coords(), params.dim())?;
    check_dim(y.coords(), params.dim())?;
    if !(y.norm() > 1.0) {
        return domain("conditioned resolvent needs |y| > 1");
    }
    let rx = x.norm();
    if on_sphere(rx) {
        let hx = h_kernel(x, region, quad)?;
        let a = params.alpha();
        let c = Constants::new(params)?.c_boundary;
        let hy = h_s(y, region, params, quad)?;
        return Ok(c * (y.norm_sq() - 1.0).powf(a / 2.0) * x.dist(y).powf(-params.d()) * hy / hx);
    }
    if !(rx > 1.0) {
        return domain("conditioned resolvent needs |x| >= 1");
    }
    let hx = h_s(x, region, params, quad)?;
    let hy = h_s(y, region, params, quad)?;
    Ok(hy / hx * resolvent_exterior(x, y, params)?)
}

/// `c_excursion int g(z) (|z|^2 - |x|^2)^{alpha/2} / (|z|^alpha |x - z|^d) dz`
/// for `g` supported in the shell `r_lo <= |z| <= r_hi` with `r_lo >= |x|`.
pub fn excursion_occupation<G>(
    x: &Point,
    g: G,
    shell: (f64, f64),
    params: &StableParams,
    quad: &QuadratureSpec,
) -> Result<f64>
where
    G: Fn(&[f64]) -> f64,
{
    check_dim(x.coords(), params.dim())?;
    let rx = x.norm();
    let (lo, hi) = shell;
    if !(lo >= rx && hi >= lo && hi.is_finite()) {
        return domain("g must be supported in a bounded shell outside |x|");
    }
    let a = params.alpha();
    let dim = params.dim();
    let d = params.d();
    let c = Constants::new(params)?.c_excursion * sphere_area(dim);
    let xs = x.coords();
    let pole: Option<Vec<f64>> = (rx > 0.0).then(|| xs.iter().map(|v| v / rx).collect());
    let full = SphereRegion::full(dim);
    let mut failure = None;
    let radial = |rho: f64| {
        let f = |th: &[f64]| {
            let z: Vec<f64> = th.iter().map(|t| rho * t).collect();
            g(&z) * dist_sq(xs, &z).powf(-d / 2.0)
        };
        match cap_integral_with_pole(&f, &full, quad, pole.as_deref()) {
            Ok(v) => rho.powf(d - 1.0) * (rho * rho - rx * rx).powf(a / 2.0) * rho.powf(-a) * v,
            Err(e) => {
                failure = Some(e);
                f64::NAN
            }
        }
    };
    let result = integrate(radial, lo, hi, quad);
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(c * result?.value)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Exterior,
    Interior,
}

/// Occupation density of the repelled process issued from the sphere.
pub fn entry_law_density(x: &Point, y: &Point, side: Side, params: &StableParams) -> Result<f64> {
    check_dim(x.coords(), params.dim())?;
    check_dim(y.coords(), params.dim())?;
    if !x.is_unit() {
        return domain("entry laws are issued from the unit sphere");
    }
    let ry = y.norm();
    let a = params.alpha();
    let c = Constants::new(params)?.c_excursion;
    let kernel = |h: f64| h * c * (ry * ry - 1.0).abs().powf(a / 2.0) / (ry.powf(a) * x.dist(y).powf(params.d()));
    match side {
        Side::Exterior if ry > 1.0 => Ok(kernel(h_out_radius(ry, params)?)),
        Side::Interior if ry > 0.0 && ry < 1.0 => Ok(kernel(h_in_radius(ry, params)?)),
        _ => domain("exterior needs |y| > 1, interior needs 0 < |y| < 1"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Cap;
    use crate::specfun::adaptive_gl;

    fn p(a: f64, d: usize) -> StableParams {
        StableParams::new(a, d).unwrap()
    }

    fn q() -> QuadratureSpec {
        QuadratureSpec::adaptive(1e-11)
    }

    #[test]
    fn constants_positive_and_pinned() {
        for &(a, d) in &[(0.5, 2), (1.0, 2), (1.5, 2), (0.8, 3), (1.9, 3), (1.0, 4)] {
            let c = Constants::new(&p(a, d)).unwrap();
            for v in [c.c_closest, c.c_joint, c.c_resolvent, c.c_boundary, c.c_excursion, c.c_hminus] {
                assert!(v > 0.0 && v.is_finite());
            }
        }
        let c = Constants::new(&p(1.0, 2)).unwrap();
        assert!((c.c_closest - 1.0 / (PI * PI)).abs() < 1e-15);
        // Gamma(-1/2) = -2 sqrt(pi)
        assert!((c.c_joint - 1.0 / (PI * PI * 2.0 * PI.sqrt() * PI.sqrt())).abs() < 1e-15);
        assert!((c.c_hminus - 1.0 / PI).abs() < 1e-15);
    }

    #[test]
    fn kernel_examples() {
        let x = Point::on_axis(2, 2.0);
        let v = h_kernel(&x, &SphereRegion::full(2), &q()).unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-10);
        let s = SphereRegion::singleton(Point::basis(3, 0)).unwrap();
        assert_eq!(h_kernel(&Point::on_axis(3, 2.0), &s, &q()).unwrap(), 1.0);
        let on = Point::basis(2, 0);
        assert!(matches!(h_kernel(&on, &SphereRegion::full(2), &q()), Err(Error::KernelSingularity)));
    }

    #[test]
    fn kernel_additive_over_caps() {
        for d in [2, 3] {
            let c1 = Cap::new(Point::basis(d, 0), 0.5).unwrap();
            let c2 = Cap::new(Point::basis(d, 1), 0.4).unwrap();
            let s1 = SphereRegion::cap_union(vec![c1.clone()]).unwrap();
            let s2 = SphereRegion::cap_union(vec![c2.clone()]).unwrap();
            let s12 = SphereRegion::cap_union(vec![c1, c2]).unwrap();
            for x in [Point::new(vec![1.5; d]).unwrap(), Point::new(vec![0.2; d]).unwrap()] {
                let a = h_kernel(&x, &s1, &q()).unwrap();
                let b = h_kernel(&x, &s2, &q()).unwrap();
                let ab = h_kernel(&x, &s12, &q()).unwrap();
                assert!((a + b - ab).abs() < 1e-10, "d={d}");
            }
        }
    }

    #[test]
    fn closed_forms_match_quadrature() {
        let mut pts = vec![];
        for &r in &[0.1, 0.5, 0.93, 1.07, 1.5, 4.0] {
            for &ang in &[0.0, 0.4, 2.0, 3.0] {
                pts.push((r, ang));
            }
        }
        let arc = SphereRegion::cap(Point::new(vec![0.6, 0.8]).unwrap(), PI / 5.0).unwrap();
        let big = SphereRegion::cap(Point::basis(2, 0), 2.9).unwrap();
        for (r, ang) in pts {
            let x = Point::new(vec![r * f64::cos(ang), r * f64::sin(ang)]).unwrap();
            for s in [SphereRegion::full(2), arc.clone(), big.clone()] {
                let fast = h_kernel_fast(x.coords(), &s, &q()).unwrap();
                let slow = h_kernel(&x, &s, &q()).unwrap();
                assert!((fast - slow).abs() <= 1e-9 * slow.max(1.0), "r={r} ang={ang}: {fast} vs {slow}");
            }
        }
        for &r in &[0.3, 0.8, 1.2, 3.0] {
            let x = Point::new(vec![r * 0.6, 0.0, r * 0.8]).unwrap();
            let fast = h_kernel_fast(x.coords(), &SphereRegion::full(3), &q()).unwrap();
            let slow = h_kernel(&x, &SphereRegion::full(3), &q()).unwrap();
            assert!((fast - slow).abs() <= 1e-9 * slow, "d=3 r={r}");
        }
    }

    #[test]
    fn h_s_shape_laws() {
        let full = SphereRegion::full(2);
        for &(a, d) in &[(1.0, 2), (0.8, 3)] {
            let pr = p(a, d);
            let fs = SphereRegion::full(d);
            let shape_out = |r: f64| r.powf(a - d as f64) * (1.0 - r.powf(-2.0)).powf(a / 2.0 - 1.0);
            let ratios: Vec<f64> = [1.1, 2.0, 5.0, 10.0]
                .iter()
                .map(|&r| h_s(&Point::on_axis(d, r), &fs, &pr, &q()).unwrap() / shape_out(r))
                .collect();
            for w in ratios.windows(2) {
                assert!((w[0] / w[1] - 1.0).abs() < 1e-8, "{ratios:?}");
            }
            let shape_in = |r: f64| (1.0 - r * r).powf(a / 2.0 - 1.0);
            let ratios: Vec<f64> = [0.1, 0.5, 0.9]
                .iter()
                .map(|&r| h_s(&Point::on_axis(d, r), &fs, &pr, &q()).unwrap() / shape_in(r))
                .collect();
            for w in ratios.windows(2) {
                assert!((w[0] / w[1] - 1.0).abs() < 1e-8, "{ratios:?}");
            }
        }
        let s = SphereRegion::singleton(Point::basis(2, 0)).unwrap();
        let v = h_s(&Point::on_axis(2, 2.0), &s, &p(1.0, 2), &q()).unwrap();
        assert!((v - 3f64.sqrt()).abs() < 1e-14);
        assert!(h_s(&Point::on_axis(2, 1.0), &full, &p(1.0, 2), &q()).is_err());
    }

    #[test]
    fn h_out_examples() {
        let pr = p(1.0, 2);
        assert!((h_out_radius(2f64.sqrt(), &pr).unwrap() - 0.5).abs() < 1e-14);
        assert!((h_out_quadrature(2f64.sqrt(), &pr, 1e-12).unwrap() - 0.5).abs() < 1e-10);
        assert!(h_out_radius(1.0 + 1e-12, &pr).unwrap() < 1e-5);
        assert!(h_out_radius(1e8, &pr).unwrap() > 1.0 - 1e-7);
        assert!(h_out_radius(1.0, &pr).is_err());
        // d=2, alpha=1 closed form: (2/pi) arcsin(sqrt(1 - r^-2))
        let r = 2.0;
        let cf = 2.0 / PI * (1.0 - 1.0 / (r * r) as f64).sqrt().asin();
        assert!((h_out_radius(r, &pr).unwrap() - cf).abs() < 1e-14);
        assert!((cf - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn h_in_examples() {
        let pr = p(1.0, 2);
        let v = h_in_radius(0.5f64.sqrt(), &pr).unwrap();
        assert!((v - 2f64.sqrt() * 0.5).abs() < 1e-14);
        assert!(h_in_radius(1.0 - 1e-12, &pr).unwrap() < 1e-5);
        let a = h_in(&Point::new(vec![0.3, 0.4]).unwrap(), &pr).unwrap();
        let b = h_in(&Point::new(vec![0.0, -0.5]).unwrap(), &pr).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn closest_reach_examples() {
        let pr = p(1.0, 2);
        let v = closest_reach_density(&Point::on_axis(2, 1.0), &Point::on_axis(2, 2.0), &pr).unwrap();
        assert!((v - 3f64.sqrt() / (PI * PI)).abs() < 1e-15);
        // symmetric under reflection across the axis through x
        let a = closest_reach_density(&Point::new(vec![0.3, 0.7]).unwrap(), &Point::on_axis(2, 2.0), &pr).unwrap();
        let b = closest_reach_density(&Point::new(vec![0.3, -0.7]).unwrap(), &Point::on_axis(2, 2.0), &pr).unwrap();
        assert_eq!(a, b);
        assert!(closest_reach_density(&Point::on_axis(2, 2.5), &Point::on_axis(2, 2.0), &pr).is_err());
    }

    #[test]
    fn poisson_identity_examples() {
        let v = poisson_identity(&Point::new(vec![0.3, 0.0]).unwrap(), 1.5, &q()).unwrap();
        assert!((v - 1.0).abs() < 1e-8);
        assert!((poisson_identity(&Point::zeros(2), 1.5, &q()).unwrap() - 1.0).abs() < 1e-14);
        let v = poisson_identity(&Point::new(vec![0.0, 0.0, 0.7]).unwrap(), 2.0, &q()).unwrap();
        assert!((v - 1.0).abs() < 1e-8);
    }

    #[test]
    fn hitting_distribution_examples() {
        let x = Point::on_axis(2, 2.0);
        let full = SphereRegion::full(2);
        let arc = SphereRegion::cap(Point::basis(2, 0), PI / 4.0).unwrap();
        assert_eq!(hitting_distribution(&full, &full, &x, &q()).unwrap(), 1.0);
        let v = hitting_distribution(&arc, &full, &x, &q()).unwrap();
        // independent 1-D quadrature of |theta - x|^{-2} over the arc, divided by 1/3
        let num = adaptive_gl(|t| 1.0 / (5.0 - 4.0 * t.cos()), -PI / 4.0, PI / 4.0, 1e-14, 50).unwrap().value
            / (2.0 * PI);
        assert!((v - num * 3.0).abs() < 1e-10);
        let far = hitting_distribution(&arc, &full, &Point::on_axis(2, 1e6), &q()).unwrap();
        assert!((far - arc.measure()).abs() < 1e-5);
        assert!(hitting_distribution(&full, &arc, &x, &q()).is_err());
    }

    #[test]
    fn resolvent_examples() {
        let pr = p(1.0, 2);
        let x = Point::new(vec![1.7, 0.4]).unwrap();
        let y = Point::new(vec![-0.5, 2.2]).unwrap();
        let a = resolvent_exterior(&x, &y, &pr).unwrap();
        let b = resolvent_exterior(&y, &x, &pr).unwrap();
        assert!((a - b).abs() < 1e-15 * a);
        let near = resolvent_exterior(&Point::on_axis(2, 1.0 + 1e-10), &y, &pr).unwrap();
        assert!(near < 1e-4);
        // inner integral against direct quadrature after u = s^{2/alpha}
        let c = Constants::new(&pr).unwrap().c_resolvent;
        let zeta = zeta_plus(x.coords(), y.coords());
        let inner =
            adaptive_gl(|s: f64| 2.0 * (s * s + 1.0).powf(-1.0), 0.0, zeta.sqrt(), 1e-14, 50).unwrap().value;
        assert!((a - c * x.dist(&y).powf(-1.0) * inner).abs() < 1e-12);
    }

    #[test]
    fn conditioned_resolvent_factor_by_factor() {
        let pr = p(1.0, 2);
        let s = SphereRegion::cap(Point::basis(2, 0), PI / 4.0).unwrap();
        let x = Point::on_axis(2, -1.0);
        let y = Point::new(vec![0.0, 2.0]).unwrap();
        let v = resolvent_conditioned(&x, &y, &s, &pr, &q()).unwrap();
        // c_boundary = Gamma(1)/(2 pi Gamma(1/2) Gamma(3/2)) = 1/pi^2
        let cb = 1.0 / (PI * PI);
        let hy = 3f64.sqrt()
            * adaptive_gl(|t| 1.0 / (4.0 + 1.0 - 4.0 * (t - PI / 2.0).cos()), -PI / 4.0, PI / 4.0, 1e-14, 50)
                .unwrap()
                .value
            / (2.0 * PI);
        let hx = adaptive_gl(|t| 1.0 / (2.0 + 2.0 * t.cos()), -PI / 4.0, PI / 4.0, 1e-14, 50).unwrap().value
            / (2.0 * PI);
        let expected = cb * 3f64.sqrt() / 5.0 * hy / hx;
        assert!((v - expected).abs() < 1e-9 * expected, "{v} vs {expected}");
        assert!(v > 0.0);
        assert!(resolvent_conditioned(&Point::basis(2, 0), &y, &s, &pr, &q()).is_err());
    }

    #[test]
    fn excursion_occupation_thin_shell() {
        let pr = p(1.0, 2);
        let x = Point::on_axis(2, 0.5);
        let (lo, hi) = (1.2, 1.25);
        let v = excursion_occupation(&x, |z| if norm_sq(z).sqrt() <= hi { 1.0 } else { 0.0 }, (lo, hi), &pr, &q())
            .unwrap();
        let c = Constants::new(&pr).unwrap().c_excursion * sphere_area(2);
        let reduced = adaptive_gl(|rho| rho.powf(0.0) * (rho * rho - 0.25).powf(-0.5), lo, hi, 1e-14, 50)
            .unwrap()
            .value;
        assert!((v - c * reduced).abs() < 1e-8, "{v} vs {}", c * reduced);
        assert_eq!(excursion_occupation(&x, |_| 0.0, (lo, hi), &pr, &q()).unwrap(), 0.0);
        assert!(excursion_occupation(&x, |_| 1.0, (0.3, 1.0), &pr, &q()).is_err());
    }

    #[test]
    fn excursion_kernel_reproduces_boundary_resolvent() {
        // c_excursion kernel * |y|^alpha * H_S(y) / h(theta) is the boundary
        // resolvent up to the constant c_boundary / c_excursion
        for &(a, d) in &[(1.0, 2), (0.8, 3)] {
            let pr = p(a, d);
            let c = Constants::new(&pr).unwrap();
            let s = SphereRegion::full(d);
            let th = Point::basis(d, 0);
            let mut ratios = vec![];
            for y in [Point::on_axis(d, 1.5), Point::new(vec![0.3; d]).unwrap().scale(5.0)] {
                let exc = c.c_excursion * (y.norm_sq() - 1.0).powf(a / 2.0) / (y.norm().powf(a) * th.dist(&y).powf(d as f64));
                let hy = h_s(&y, &s, &pr, &q()).unwrap();
                let lhs = exc * y.norm().powf(a) * hy;
                let boundary = c.c_boundary * (y.norm_sq() - 1.0).powf(a / 2.0) * th.dist(&y).powf(-(d as f64)) * hy;
                ratios.push(boundary / lhs);
            }
            let expected = gamma(d as f64 / 2.0) / (gamma((d as f64 - a) / 2.0) * gamma(a / 2.0 + 1.0));
            for r in ratios {
                assert!((r - expected).abs() < 1e-12 * expected);
            }
            assert!((c.c_boundary / c.c_excursion - expected).abs() < 1e-12 * expected);
        }
    }

    #[test]
    fn entry_laws() {
        let pr = p(1.0, 2);
        let x = Point::basis(2, 0);
        let v = entry_law_density(&x, &Point::on_axis(2, 2.0), Side::Exterior, &pr).unwrap();
        let c = Constants::new(&pr).unwrap().c_excursion;
        let expected = h_out_radius(2.0, &pr).unwrap() * c * 3f64.sqrt() / 2.0;
        assert!((v - expected).abs() < 1e-15);
        let near = Point::new(vec![0.0, 1.0 + 1e-9]).unwrap();
        assert!(entry_law_density(&x, &near, Side::Exterior, &pr).unwrap() < 1e-8);
        let inner = entry_law_density(&x, &Point::new(vec![0.0, 1e-6]).unwrap(), Side::Interior, &pr).unwrap();
        assert!(inner.is_finite());
        assert!(entry_law_density(&x, &Point::on_axis(2, 2.0), Side::Interior, &pr).is_err());
    }
}
