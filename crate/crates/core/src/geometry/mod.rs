//! Lorentz (hyperboloid) model of hyperbolic space.
//!
//! Points live on the upper sheet of the two-sheeted hyperboloid in
//! (n+1)-dimensional Minkowski space: `<p,p>_L = -1/kappa` with time
//! coordinate `p0 = sqrt(1/kappa + ||spatial||^2) > 0`, where `kappa > 0`
//! is the curvature magnitude (the manifold's curvature is `-kappa`).
//!
//! [`LorentzPoint`] enforces the on-manifold constraint at construction, so
//! the operations below only have to validate cross-argument contracts
//! (matching dimension and curvature, non-degenerate cone apexes).

pub mod kernel;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// Absolute tolerance on the on-manifold constraint `<p,p>_L = -1/kappa`.
pub const MANIFOLD_TOL: f64 = 1e-6;

/// Tangent norms below this are treated as exactly zero by the exp map.
pub const EXP_MAP_ZERO_TOL: f64 = 1e-9;

/// Curvature clamp range used by the trainer.
pub const KAPPA_MIN: f64 = 0.1;
pub const KAPPA_MAX: f64 = 10.0;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("curvature mismatch: {0} vs {1}")]
    CurvatureMismatch(f64, f64),
    #[error("point violates the manifold constraint by {0:e}")]
    ManifoldViolation(f64),
    #[error("cone apex is degenerate (zero spatial part)")]
    DegenerateApex,
    #[error("exterior angle is undefined for coincident points")]
    DegeneratePair,
}

/// Positive curvature magnitude `kappa`; the manifold's curvature is `-kappa`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Curvature(f64);

impl Curvature {
    pub fn new(kappa: f64) -> Result<Self, GeometryError> {
        if !kappa.is_finite() || kappa <= 0.0 {
            return Err(GeometryError::InvalidInput(format!(
                "curvature must be positive and finite, got {kappa}"
            )));
        }
        Ok(Curvature(kappa))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// On-manifold point in ambient Minkowski coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LorentzPoint {
    time: f64,
    spatial: Vec<f64>,
    kappa: Curvature,
}

impl LorentzPoint {
    /// Lift spatial coordinates onto the hyperboloid; the on-manifold
    /// constraint holds by construction.
    pub fn lift(spatial: Vec<f64>, kappa: Curvature) -> Result<Self, GeometryError> {
        if spatial.iter().any(|x| !x.is_finite()) {
            return Err(GeometryError::InvalidInput(
                "spatial coordinates must be finite".into(),
            ));
        }
        let time = kernel::lift_time(&spatial, kappa.value());
        Ok(LorentzPoint {
            time,
            spatial,
            kappa,
        })
    }

    /// The hyperboloid origin `(sqrt(1/kappa), 0, ..., 0)`.
    pub fn origin(dim: usize, kappa: Curvature) -> Self {
        LorentzPoint {
            time: kappa.value().recip().sqrt(),
            spatial: vec![0.0; dim],
            kappa,
        }
    }

    /// Build a point from explicit ambient coordinates, validating the
    /// manifold constraint to [`MANIFOLD_TOL`].
    pub fn from_coords(
        time: f64,
        spatial: Vec<f64>,
        kappa: Curvature,
    ) -> Result<Self, GeometryError> {
        let point = Self::from_coords_unchecked(time, spatial, kappa);
        let violation = (kernel::lorentz_inner(&point.ambient(), &point.ambient())
            + 1.0 / kappa.value())
        .abs();
        if !violation.is_finite() || violation > MANIFOLD_TOL {
            return Err(GeometryError::ManifoldViolation(violation));
        }
        Ok(point)
    }

    /// Skip the manifold check; for coordinates already known to be valid.
    pub fn from_coords_unchecked(time: f64, spatial: Vec<f64>, kappa: Curvature) -> Self {
        LorentzPoint {
            time,
            spatial,
            kappa,
        }
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn spatial(&self) -> &[f64] {
        &self.spatial
    }

    pub fn spatial_norm(&self) -> f64 {
        kernel::norm(&self.spatial)
    }

    pub fn kappa(&self) -> Curvature {
        self.kappa
    }

    /// Spatial dimension `n` (the ambient representation has `n + 1` axes).
    pub fn dim(&self) -> usize {
        self.spatial.len()
    }

    /// Ambient coordinates `[time, spatial...]`.
    pub fn ambient(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.spatial.len() + 1);
        out.push(self.time);
        out.extend_from_slice(&self.spatial);
        out
    }

    pub fn is_origin(&self) -> bool {
        self.spatial.iter().all(|&x| x == 0.0)
    }

    fn check_compatible(&self, other: &LorentzPoint) -> Result<(), GeometryError> {
        if self.dim() != other.dim() {
            return Err(GeometryError::DimensionMismatch(self.dim(), other.dim()));
        }
        if self.kappa != other.kappa {
            return Err(GeometryError::CurvatureMismatch(
                self.kappa.value(),
                other.kappa.value(),
            ));
        }
        Ok(())
    }
}

/// Tangent vector at the hyperboloid origin. The time component of a tangent
/// vector at the origin is identically zero and is not stored, so its
/// Lorentzian norm equals the Euclidean norm of `spatial`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentVector {
    spatial: Vec<f64>,
    kappa: Curvature,
}

impl TangentVector {
    pub fn new(spatial: Vec<f64>, kappa: Curvature) -> Result<Self, GeometryError> {
        if spatial.iter().any(|x| !x.is_finite()) {
            return Err(GeometryError::InvalidInput(
                "tangent coordinates must be finite".into(),
            ));
        }
        Ok(TangentVector { spatial, kappa })
    }

    pub fn spatial(&self) -> &[f64] {
        &self.spatial
    }

    pub fn kappa(&self) -> Curvature {
        self.kappa
    }

    pub fn norm(&self) -> f64 {
        kernel::norm(&self.spatial)
    }
}

/// Minkowski inner product of two points sharing dimension and curvature.
pub fn lorentz_inner(p: &LorentzPoint, q: &LorentzPoint) -> Result<f64, GeometryError> {
    p.check_compatible(q)?;
    Ok(kernel::lorentz_inner(&p.ambient(), &q.ambient()))
}

/// Geodesic distance between two on-manifold points.
///
/// The `acosh` argument is clamped to `>= 1` to absorb roundoff; arguments
/// more than [`MANIFOLD_TOL`] below 1 indicate off-manifold inputs and are
/// reported as an error.
pub fn lorentz_dist(p: &LorentzPoint, q: &LorentzPoint) -> Result<f64, GeometryError> {
    p.check_compatible(q)?;
    if p == q {
        return Ok(0.0);
    }
    let kappa = p.kappa.value();
    let arg = -kappa * kernel::lorentz_inner(&p.ambient(), &q.ambient());
    if arg < 1.0 - MANIFOLD_TOL {
        return Err(GeometryError::ManifoldViolation(1.0 - arg));
    }
    Ok(kappa.recip().sqrt() * arg.acosh_clamped())
}

/// Project a tangent vector at the origin onto the hyperboloid.
///
/// Returns the origin exactly when the tangent norm is below
/// [`EXP_MAP_ZERO_TOL`]; otherwise evaluates
/// `cosh(sqrt(kappa)||v||) * origin + sinh(sqrt(kappa)||v||)/(sqrt(kappa)||v||) * v`
/// through a guarded `sinh(x)/x`.
pub fn exp_map_origin(v: &TangentVector) -> LorentzPoint {
    if v.norm() < EXP_MAP_ZERO_TOL {
        return LorentzPoint::origin(v.spatial.len(), v.kappa);
    }
    let ambient = kernel::exp_map_origin(&v.spatial, v.kappa.value());
    LorentzPoint {
        time: ambient[0],
        spatial: ambient[1..].to_vec(),
        kappa: v.kappa,
    }
}

/// Inverse of [`exp_map_origin`]; maps a point back to the tangent space at
/// the origin. Off-manifold inputs are rejected at [`LorentzPoint`]
/// construction, so this is total.
pub fn log_map_origin(p: &LorentzPoint) -> TangentVector {
    let spatial = kernel::log_map_origin(&p.ambient(), p.kappa.value());
    TangentVector {
        spatial,
        kappa: p.kappa,
    }
}

/// Half-aperture of the entailment cone anchored at `q`.
///
/// For spatial norms below `2K/sqrt(kappa)` the defining `asin` argument
/// exceeds 1; the aperture is clamped to `pi/2` (the cone covers everything)
/// and a warning is logged, since transiently near-origin points are normal
/// during training.
pub fn half_aperture(q: &LorentzPoint, cone_k: f64) -> f64 {
    let kappa = q.kappa.value();
    if q.spatial_norm() * kappa.sqrt() < 2.0 * cone_k {
        log::warn!(
            "half_aperture: spatial norm {:.3e} is inside the near-origin region; \
             clamping aperture to pi/2",
            q.spatial_norm()
        );
    }
    kernel::half_aperture(q.spatial_norm(), kappa, cone_k)
}

/// Exterior angle at the cone apex `q` subtended by `p`.
///
/// Zero when `p` lies radially beyond `q` on the same ray, `pi` when `p`
/// lies between `q` and the origin.
pub fn exterior_angle(p: &LorentzPoint, q: &LorentzPoint) -> Result<f64, GeometryError> {
    p.check_compatible(q)?;
    if q.spatial_norm() == 0.0 {
        return Err(GeometryError::DegenerateApex);
    }
    let kappa = p.kappa.value();
    let ki = kappa * kernel::lorentz_inner(&p.ambient(), &q.ambient());
    if ki * ki <= 1.0 + 1e-12 {
        return Err(GeometryError::DegeneratePair);
    }
    Ok(kernel::exterior_angle(&p.ambient(), &q.ambient(), kappa))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn k(v: f64) -> Curvature {
        Curvature::new(v).unwrap()
    }

    fn random_point(rng: &mut ChaCha8Rng, dim: usize, kappa: Curvature, radius: f64) -> LorentzPoint {
        let spatial: Vec<f64> = (0..dim).map(|_| rng.random_range(-radius..radius)).collect();
        LorentzPoint::lift(spatial, kappa).unwrap()
    }

    #[test]
    fn lift_zero_is_origin() {
        let p = LorentzPoint::lift(vec![0.0, 0.0], k(1.0)).unwrap();
        assert_eq!(p.time(), 1.0);
        assert!(p.is_origin());
    }

    #[test]
    fn lift_unit_spatial() {
        let p = LorentzPoint::lift(vec![0.6, 0.8], k(1.0)).unwrap();
        assert_abs_diff_eq!(p.time(), 2.0f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn lift_frozen_value() {
        // sqrt(1/4 + 9 + 16), high-precision evaluation of the lift formula
        let p = LorentzPoint::lift(vec![3.0, 4.0], k(4.0)).unwrap();
        assert_abs_diff_eq!(p.time(), 5.024937810560445, epsilon = 1e-12);
    }

    #[test]
    fn lift_rejects_non_finite() {
        assert!(matches!(
            LorentzPoint::lift(vec![f64::NAN, 0.0], k(1.0)),
            Err(GeometryError::InvalidInput(_))
        ));
        assert!(Curvature::new(0.0).is_err());
        assert!(Curvature::new(-1.0).is_err());
    }

    #[test]
    fn inner_product_cases() {
        let origin = LorentzPoint::origin(2, k(1.0));
        assert_abs_diff_eq!(lorentz_inner(&origin, &origin).unwrap(), -1.0, epsilon = 1e-12);

        let q = LorentzPoint::lift(vec![0.6, 0.8], k(1.0)).unwrap();
        assert_abs_diff_eq!(
            lorentz_inner(&origin, &q).unwrap(),
            -(2.0f64.sqrt()),
            epsilon = 1e-12
        );

        let p = LorentzPoint::lift(vec![1.0, 0.0], k(1.0)).unwrap();
        let q = LorentzPoint::lift(vec![0.0, 1.0], k(1.0)).unwrap();
        assert_abs_diff_eq!(lorentz_inner(&p, &q).unwrap(), -2.0, epsilon = 1e-12);
    }

    #[test]
    fn inner_product_contract_violations() {
        let p = LorentzPoint::origin(2, k(1.0));
        let q = LorentzPoint::origin(3, k(1.0));
        assert_eq!(
            lorentz_inner(&p, &q).unwrap_err(),
            GeometryError::DimensionMismatch(2, 3)
        );
        let r = LorentzPoint::origin(2, k(2.0));
        assert!(matches!(
            lorentz_inner(&p, &r).unwrap_err(),
            GeometryError::CurvatureMismatch(_, _)
        ));
    }

    #[test]
    fn distance_cases() {
        let p = LorentzPoint::lift(vec![1.0, 0.0], k(1.0)).unwrap();
        let q = LorentzPoint::lift(vec![0.0, 1.0], k(1.0)).unwrap();
        assert_eq!(lorentz_dist(&p, &p).unwrap(), 0.0);
        // acosh(2), frozen from high-precision evaluation
        assert_abs_diff_eq!(
            lorentz_dist(&p, &q).unwrap(),
            1.3169578969248166,
            epsilon = 1e-12
        );
    }

    #[test]
    fn distance_rejects_off_manifold() {
        // Time coordinate far too small: the acosh argument drops below 1.
        let bad = LorentzPoint::from_coords_unchecked(0.5, vec![0.1, 0.0], k(1.0));
        let origin = LorentzPoint::origin(2, k(1.0));
        assert!(matches!(
            lorentz_dist(&bad, &origin),
            Err(GeometryError::ManifoldViolation(_))
        ));
        assert!(matches!(
            LorentzPoint::from_coords(0.5, vec![0.1, 0.0], k(1.0)),
            Err(GeometryError::ManifoldViolation(_))
        ));
    }

    #[test]
    fn from_coords_accepts_valid() {
        let p = LorentzPoint::from_coords(2.0f64.sqrt(), vec![0.6, 0.8], k(1.0)).unwrap();
        assert_abs_diff_eq!(p.time(), 2.0f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn exp_map_cases() {
        let zero = TangentVector::new(vec![0.0, 0.0], k(1.0)).unwrap();
        let p = exp_map_origin(&zero);
        assert!(p.is_origin());
        assert_eq!(p.time(), 1.0);

        let v = TangentVector::new(vec![1.0, 0.0], k(1.0)).unwrap();
        let p = exp_map_origin(&v);
        // cosh(1), sinh(1) frozen from high-precision evaluation
        assert_abs_diff_eq!(p.time(), 1.5430806348152437, epsilon = 1e-12);
        assert_abs_diff_eq!(p.spatial()[0], 1.1752011936438014, epsilon = 1e-12);
        assert_abs_diff_eq!(p.spatial()[1], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn log_map_cases() {
        let origin = LorentzPoint::origin(2, k(1.0));
        assert_eq!(log_map_origin(&origin).spatial(), &[0.0, 0.0]);

        let v = TangentVector::new(vec![1.0, 0.0], k(1.0)).unwrap();
        let back = log_map_origin(&exp_map_origin(&v));
        assert_abs_diff_eq!(back.spatial()[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(back.spatial()[1], 0.0, epsilon = 1e-9);

        // Round-trip against exp: direction (0.6, 0.8), norm acosh(sqrt(2)).
        let p = LorentzPoint::lift(vec![0.6, 0.8], k(1.0)).unwrap();
        let t = log_map_origin(&p);
        assert_abs_diff_eq!(t.norm(), 0.8813735870195430, epsilon = 1e-12);
        let unit: Vec<f64> = t.spatial().iter().map(|x| x / t.norm()).collect();
        assert_abs_diff_eq!(unit[0], 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(unit[1], 0.8, epsilon = 1e-12);
    }

    #[test]
    fn half_aperture_cases() {
        let boundary = LorentzPoint::lift(vec![0.2, 0.0], k(1.0)).unwrap();
        assert_abs_diff_eq!(half_aperture(&boundary, 0.1), FRAC_PI_2, epsilon = 1e-12);

        let q = LorentzPoint::lift(vec![0.4, 0.0], k(1.0)).unwrap();
        assert_abs_diff_eq!(half_aperture(&q, 0.1), PI / 6.0, epsilon = 1e-12);

        // asin(0.1) frozen from high-precision evaluation
        let q = LorentzPoint::lift(vec![1.0, 0.0], k(4.0)).unwrap();
        assert_abs_diff_eq!(half_aperture(&q, 0.1), 0.10016742116155980, epsilon = 1e-12);

        // Inside the near-origin region: clamps to pi/2 instead of erroring.
        let near = LorentzPoint::lift(vec![0.05, 0.0], k(1.0)).unwrap();
        assert_eq!(half_aperture(&near, 0.1), FRAC_PI_2);
    }

    #[test]
    fn exterior_angle_axis_cases() {
        let kappa = k(1.0);
        let q = LorentzPoint::lift(vec![0.5, 0.5], kappa).unwrap();
        let beyond = LorentzPoint::lift(vec![1.5, 1.5], kappa).unwrap();
        let nearer = LorentzPoint::lift(vec![0.2, 0.2], kappa).unwrap();
        assert_abs_diff_eq!(exterior_angle(&beyond, &q).unwrap(), 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(exterior_angle(&nearer, &q).unwrap(), PI, epsilon = 1e-6);
    }

    #[test]
    fn exterior_angle_degenerate_cases() {
        let origin = LorentzPoint::origin(2, k(1.0));
        let p = LorentzPoint::lift(vec![1.0, 0.0], k(1.0)).unwrap();
        assert_eq!(
            exterior_angle(&p, &origin).unwrap_err(),
            GeometryError::DegenerateApex
        );
        assert_eq!(
            exterior_angle(&p, &p).unwrap_err(),
            GeometryError::DegeneratePair
        );
    }

    /// Interior angle at `q` in the geodesic triangle (origin, q, p) via the
    /// hyperbolic law of cosines; the exterior angle is its supplement.
    fn law_of_cosines_exterior(p: &LorentzPoint, q: &LorentzPoint) -> f64 {
        let sk = p.kappa().value().sqrt();
        let origin = LorentzPoint::origin(p.dim(), p.kappa());
        let a = sk * lorentz_dist(q, &origin).unwrap();
        let b = sk * lorentz_dist(q, p).unwrap();
        let c = sk * lorentz_dist(p, &origin).unwrap();
        let cos_interior = (a.cosh() * b.cosh() - c.cosh()) / (a.sinh() * b.sinh());
        PI - cos_interior.clamp(-1.0, 1.0).acos()
    }

    #[test]
    fn exterior_angle_matches_law_of_cosines_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut checked = 0;
        while checked < 1000 {
            let kappa = k(rng.random_range(0.1..10.0));
            let p = random_point(&mut rng, 2, kappa, 2.0);
            let q = random_point(&mut rng, 2, kappa, 2.0);
            if q.spatial_norm() < 0.05 || lorentz_dist(&p, &q).unwrap() < 0.05 {
                continue;
            }
            let got = exterior_angle(&p, &q).unwrap();
            let want = law_of_cosines_exterior(&p, &q);
            assert!(
                (got - want).abs() < 1e-5,
                "angle mismatch: {got} vs {want}"
            );
            checked += 1;
        }
    }

    #[test]
    fn manifold_invariant_on_random_lifts() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let kappa = k(rng.random_range(0.1..10.0));
            let dim = rng.random_range(2..8);
            let p = random_point(&mut rng, dim, kappa, 3.0);
            let self_inner = lorentz_inner(&p, &p).unwrap();
            assert!((self_inner + 1.0 / kappa.value()).abs() < 1e-6);
        }
    }

    #[test]
    fn exp_log_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..1000 {
            let kappa = k(rng.random_range(0.1..10.0));
            let dim = rng.random_range(2..6);
            let spatial: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
            let v = TangentVector::new(spatial, kappa).unwrap();
            if v.norm() > 5.0 {
                continue;
            }
            let back = log_map_origin(&exp_map_origin(&v));
            for (a, b) in v.spatial().iter().zip(back.spatial()) {
                assert!((a - b).abs() < 1e-6, "round trip drift: {a} vs {b}");
            }
        }
    }

    #[test]
    fn geodesic_norm_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let origin2 = |kappa| LorentzPoint::origin(3, kappa);
        for _ in 0..1000 {
            let kappa = k(rng.random_range(0.1..10.0));
            let spatial: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let v = TangentVector::new(spatial, kappa).unwrap();
            let d = lorentz_dist(&exp_map_origin(&v), &origin2(kappa)).unwrap();
            assert!((d - v.norm()).abs() < 1e-6);
        }
    }

    #[test]
    fn distance_symmetry_and_triangle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..1000 {
            let kappa = k(rng.random_range(0.1..10.0));
            let p = random_point(&mut rng, 3, kappa, 3.0);
            let q = random_point(&mut rng, 3, kappa, 3.0);
            let r = random_point(&mut rng, 3, kappa, 3.0);
            let pq = lorentz_dist(&p, &q).unwrap();
            let qp = lorentz_dist(&q, &p).unwrap();
            assert!((pq - qp).abs() < 1e-12);
            assert_eq!(lorentz_dist(&p, &p).unwrap(), 0.0);
            let pr = lorentz_dist(&p, &r).unwrap();
            let qr = lorentz_dist(&q, &r).unwrap();
            assert!(pr <= pq + qr + 1e-6);
        }
    }

    #[test]
    fn aperture_monotonicity() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            let kappa = k(rng.random_range(0.1..10.0));
            let lo = rng.random_range(0.25..2.0) / kappa.value().sqrt();
            let hi = lo * rng.random_range(1.01..3.0);
            let near = LorentzPoint::lift(vec![lo, 0.0], kappa).unwrap();
            let far = LorentzPoint::lift(vec![hi, 0.0], kappa).unwrap();
            assert!(half_aperture(&far, 0.1) < half_aperture(&near, 0.1));
        }
    }
}
