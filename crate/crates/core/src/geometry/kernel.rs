//! Backend-agnostic geometry formulas, generic over [`Scalar`].
//!
//! Points on the hyperboloid are ambient coordinate slices with the time
//! coordinate at index 0 and the spatial components after it. Euclidean
//! helpers operate on raw coordinate slices. All functions here are total:
//! arguments that roundoff pushes outside a domain are clamped (with zero
//! derivative in the clamped region), so the training path never produces
//! NaNs. Contract validation and error reporting live in the public layer.

use crate::scalar::Scalar;

/// Floor for squared norms that appear inside divisions.
const SQ_NORM_FLOOR: f64 = 1e-24;

/// Floor for the `(kappa * <p,q>_L)^2 - 1` factor of the exterior angle.
const ANGLE_DENOM_FLOOR: f64 = 1e-15;

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = a[0] * b[0];
    for i in 1..a.len() {
        acc = acc + a[i] * b[i];
    }
    acc
}

pub fn sq_norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a)
}

pub fn norm<T: Scalar>(a: &[T]) -> T {
    sq_norm(a).sqrt()
}

/// Minkowski inner product `-p0*q0 + <spatial, spatial>`.
pub fn lorentz_inner<T: Scalar>(p: &[T], q: &[T]) -> T {
    debug_assert_eq!(p.len(), q.len());
    dot(&p[1..], &q[1..]) - p[0] * q[0]
}

/// Time coordinate completing `spatial` onto the hyperboloid of curvature
/// `-kappa`: `sqrt(1/kappa + ||spatial||^2)`.
pub fn lift_time<T: Scalar>(spatial: &[T], kappa: T) -> T {
    (kappa.recip() + sq_norm(spatial)).sqrt()
}

/// Ambient coordinates of the lifted point.
pub fn lift<T: Scalar>(spatial: &[T], kappa: T) -> Vec<T> {
    let mut out = Vec::with_capacity(spatial.len() + 1);
    out.push(lift_time(spatial, kappa));
    out.extend_from_slice(spatial);
    out
}

/// Geodesic distance `sqrt(1/kappa) * acosh(-kappa * <p,q>_L)`.
///
/// The `acosh` argument is clamped to `>= 1`, which absorbs roundoff for
/// coincident points.
pub fn lorentz_distance<T: Scalar>(p: &[T], q: &[T], kappa: T) -> T {
    let arg = -(kappa * lorentz_inner(p, q));
    kappa.recip().sqrt() * arg.acosh_clamped()
}

/// Exponential map at the hyperboloid origin.
///
/// `tangent` holds the spatial components of a tangent vector at the origin
/// (its time component is identically zero). Returns ambient coordinates.
pub fn exp_map_origin<T: Scalar>(tangent: &[T], kappa: T) -> Vec<T> {
    let r = (kappa * sq_norm(tangent)).sqrt();
    let time = r.cosh() * kappa.recip().sqrt();
    let radial = r.sinhc();
    let mut out = Vec::with_capacity(tangent.len() + 1);
    out.push(time);
    for &v in tangent {
        out.push(v * radial);
    }
    out
}

/// Logarithmic map at the origin; inverse of [`exp_map_origin`].
///
/// Evaluation-only (`f64`): the training path never differentiates through
/// it, and the zero-spatial branch has no useful derivative anyway.
pub fn log_map_origin(point: &[f64], kappa: f64) -> Vec<f64> {
    let spatial = &point[1..];
    let spatial_norm = norm(spatial);
    if spatial_norm < 1e-15 {
        return vec![0.0; spatial.len()];
    }
    let distance = kappa.sqrt().recip() * (kappa.sqrt() * point[0]).acosh_clamped();
    let scale = distance / spatial_norm;
    spatial.iter().map(|&x| x * scale).collect()
}

/// Half-aperture of the entailment cone at a point with spatial norm
/// `spatial_norm`: `asin(2K / (sqrt(kappa) * ||spatial||))`.
///
/// Inside the near-origin region (argument above 1) the aperture saturates
/// at `pi/2`, i.e. the cone covers the whole space.
pub fn half_aperture<T: Scalar>(spatial_norm: T, kappa: T, cone_k: f64) -> T {
    (kappa.sqrt() * spatial_norm)
        .clamp_min(SQ_NORM_FLOOR)
        .recip()
        .scale(2.0 * cone_k)
        .asin_clamped()
}

/// Exterior angle at the cone apex `apex` subtended by `inner`: the angle at
/// `apex` between the geodesic towards `inner` and the radial geodesic from
/// the origin through `apex`, measured so that points radially beyond the
/// apex give 0 and points towards the origin give `pi`.
pub fn exterior_angle<T: Scalar>(inner: &[T], apex: &[T], kappa: T) -> T {
    let ki = kappa * lorentz_inner(inner, apex);
    let num = inner[0] + apex[0] * ki;
    let apex_spatial = norm(&apex[1..]).clamp_min(SQ_NORM_FLOOR);
    let den = apex_spatial * (ki * ki).shift(-1.0).clamp_min(ANGLE_DENOM_FLOOR).sqrt();
    (num / den).acos_clamped()
}

pub fn euclidean_distance<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = (a[0] - b[0]) * (a[0] - b[0]);
    for i in 1..a.len() {
        let d = a[i] - b[i];
        acc = acc + d * d;
    }
    acc.clamp_min(SQ_NORM_FLOOR).sqrt()
}

/// Euclidean cone half-aperture `asin(K / ||q||)`, saturating at `pi/2`.
pub fn euclidean_half_aperture<T: Scalar>(apex_norm: T, cone_k: f64) -> T {
    apex_norm
        .clamp_min(SQ_NORM_FLOOR)
        .recip()
        .scale(cone_k)
        .asin_clamped()
}

/// Euclidean exterior angle at `apex`: the angle between `other - apex` and
/// the ray from the origin through `apex`.
pub fn euclidean_exterior_angle<T: Scalar>(apex: &[T], other: &[T]) -> T {
    debug_assert_eq!(apex.len(), other.len());
    let diff: Vec<T> = other
        .iter()
        .zip(apex.iter())
        .map(|(&o, &a)| o - a)
        .collect();
    let num = dot(&diff, apex);
    let den = sq_norm(&diff).clamp_min(SQ_NORM_FLOOR).sqrt()
        * sq_norm(apex).clamp_min(SQ_NORM_FLOOR).sqrt();
    (num / den).acos_clamped()
}
