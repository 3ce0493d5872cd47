//! Loss formulas shared by the `f64` evaluation path and the autodiff
//! training path, generic over [`Scalar`].
//!
//! The public, validated API lives in the parent module; everything here
//! assumes well-formed inputs (equal lengths, matching backends).

use crate::geometry::kernel as geom;
use crate::scalar::Scalar;
use crate::ContentType;

use super::{LossConfig, SimilaritySign, TermToggles};

/// Geometry backend for loss evaluation. Hyperbolic points are ambient
/// Minkowski coordinates; Euclidean points are raw coordinate vectors.
pub enum GeomBackend<T> {
    Hyperbolic { kappa: T },
    Euclidean,
}

impl<T: Scalar> GeomBackend<T> {
    pub fn distance(&self, a: &[T], b: &[T]) -> T {
        match self {
            GeomBackend::Hyperbolic { kappa } => geom::lorentz_distance(a, b, *kappa),
            GeomBackend::Euclidean => geom::euclidean_distance(a, b),
        }
    }

    pub fn half_aperture(&self, apex: &[T], cone_k: f64) -> T {
        match self {
            GeomBackend::Hyperbolic { kappa } => {
                geom::half_aperture(geom::norm(&apex[1..]), *kappa, cone_k)
            }
            GeomBackend::Euclidean => geom::euclidean_half_aperture(geom::norm(apex), cone_k),
        }
    }

    /// Exterior angle at `apex` subtended by `inner`, under either backend's
    /// cone construction.
    pub fn exterior_angle(&self, inner: &[T], apex: &[T]) -> T {
        match self {
            GeomBackend::Hyperbolic { kappa } => geom::exterior_angle(inner, apex, *kappa),
            GeomBackend::Euclidean => geom::euclidean_exterior_angle(apex, inner),
        }
    }
}

/// One quadruplet's embeddings in [`ContentType`] order.
pub struct QuadPoints<T> {
    pub points: [Vec<T>; 4],
}

impl<T> QuadPoints<T> {
    pub fn get(&self, ct: ContentType) -> &[T] {
        &self.points[ct.index()]
    }
}

fn zero_like<T: Scalar>(template: T) -> T {
    template.scale(0.0)
}

/// `log(sum_j exp(vals[j]))`, optionally skipping one index, stabilised by
/// subtracting the running maximum (which leaves the gradient exact).
fn log_sum_exp<T: Scalar>(vals: &[T], skip: Option<usize>) -> T {
    let mut max = f64::NEG_INFINITY;
    for (i, v) in vals.iter().enumerate() {
        if skip != Some(i) && v.value() > max {
            max = v.value();
        }
    }
    let mut acc: Option<T> = None;
    for (i, &v) in vals.iter().enumerate() {
        if skip == Some(i) {
            continue;
        }
        let term = v.shift(-max).exp();
        acc = Some(match acc {
            Some(a) => a + term,
            None => term,
        });
    }
    acc.expect("log_sum_exp over empty set").ln().shift(max)
}

/// Symmetrised InfoNCE over one pair of embedding lists with same-index
/// positives. Each direction averages per-row cross-entropy over the batch;
/// the two directions are averaged.
pub fn pair_contrastive<T: Scalar>(
    geom: &GeomBackend<T>,
    side_a: &[&[T]],
    side_b: &[&[T]],
    inv_tau: T,
    include_positive: bool,
    sign: SimilaritySign,
) -> T {
    let n = side_a.len();
    debug_assert!(n >= 2 && side_b.len() == n);

    let mut logits: Vec<Vec<T>> = Vec::with_capacity(n);
    for a in side_a {
        let mut row = Vec::with_capacity(n);
        for b in side_b {
            let d = geom.distance(a, b);
            let s = match sign {
                SimilaritySign::NegativeDistance => -d,
                SimilaritySign::RawDistance => d,
            };
            row.push(s * inv_tau);
        }
        logits.push(row);
    }

    let skip = |i: usize| if include_positive { None } else { Some(i) };

    let mut a_to_b: Option<T> = None;
    for i in 0..n {
        let row_loss = log_sum_exp(&logits[i], skip(i)) - logits[i][i];
        a_to_b = Some(match a_to_b {
            Some(acc) => acc + row_loss,
            None => row_loss,
        });
    }

    let mut b_to_a: Option<T> = None;
    for j in 0..n {
        let column: Vec<T> = (0..n).map(|i| logits[i][j]).collect();
        let col_loss = log_sum_exp(&column, skip(j)) - logits[j][j];
        b_to_a = Some(match b_to_a {
            Some(acc) => acc + col_loss,
            None => col_loss,
        });
    }

    (a_to_b.unwrap() + b_to_a.unwrap()).scale(0.5 / n as f64)
}

/// Hinge on the angular violation of the cone membership test:
/// `max(0, exterior_angle(inner, apex) - eta * half_aperture(apex))`.
pub fn cone_violation<T: Scalar>(
    geom: &GeomBackend<T>,
    inner: &[T],
    apex: &[T],
    eta: f64,
    cone_k: f64,
) -> T {
    let angle = geom.exterior_angle(inner, apex);
    let aperture = geom.half_aperture(apex, cone_k);
    (angle - aperture.scale(eta)).relu()
}

fn role_list<'a, T>(batch: &'a [QuadPoints<T>], ct: ContentType) -> Vec<&'a [T]> {
    batch.iter().map(|q| q.get(ct)).collect()
}

/// The four-term contrastive objective over a batch: safe pairs, unsafe
/// pairs, and the two cross-safety pairings, each with same-index positives.
pub fn safety_contrastive<T: Scalar>(
    geom: &GeomBackend<T>,
    batch: &[QuadPoints<T>],
    inv_tau: T,
    cfg: &LossConfig,
) -> T {
    use ContentType::*;
    let include = cfg.include_positive_in_denominator;
    let sign = cfg.similarity_sign;
    let pairs: [(bool, ContentType, ContentType); 4] = [
        (cfg.terms.contrastive_safe, SafeImage, SafeText),
        (cfg.terms.contrastive_unsafe, UnsafeImage, UnsafeText),
        (cfg.terms.contrastive_cross_safe_image, SafeImage, UnsafeText),
        (cfg.terms.contrastive_cross_unsafe_image, UnsafeImage, SafeText),
    ];

    let mut total = zero_like(batch[0].points[0][0]);
    for (enabled, a, b) in pairs {
        if !enabled {
            continue;
        }
        total = total
            + pair_contrastive(
                geom,
                &role_list(batch, a),
                &role_list(batch, b),
                inv_tau,
                include,
                sign,
            );
    }
    total
}

fn active_entailment_terms(toggles: &TermToggles) -> Vec<(ContentType, ContentType)> {
    use ContentType::*;
    let mut terms = Vec::new();
    if toggles.entail_safe {
        terms.push((SafeImage, SafeText));
    }
    if toggles.entail_safety {
        terms.push((UnsafeText, SafeImage));
    }
    if toggles.entail_unsafe {
        terms.push((UnsafeImage, UnsafeText));
    }
    terms
}

/// Per-quadruplet sum of the active entailment terms, averaged over the
/// batch: safe image in the safe-text cone, unsafe text in the safe-image
/// cone (the safety term), unsafe image in the unsafe-text cone.
pub fn safety_entailment<T: Scalar>(
    geom: &GeomBackend<T>,
    batch: &[QuadPoints<T>],
    cfg: &LossConfig,
) -> T {
    let terms = active_entailment_terms(&cfg.terms);
    let mut total = zero_like(batch[0].points[0][0]);
    for quad in batch {
        for &(inner, apex) in &terms {
            total = total + cone_violation(geom, quad.get(inner), quad.get(apex), cfg.eta, cfg.cone_k);
        }
    }
    total.scale(1.0 / batch.len() as f64)
}

/// Combined objective: contrastive plus entailment.
pub fn total_loss<T: Scalar>(
    geom: &GeomBackend<T>,
    batch: &[QuadPoints<T>],
    inv_tau: T,
    cfg: &LossConfig,
) -> T {
    safety_contrastive(geom, batch, inv_tau, cfg) + safety_entailment(geom, batch, cfg)
}
