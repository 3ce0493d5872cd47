//! Training objective: a four-term contrastive loss over safe/unsafe
//! image-text pairs plus a three-term entailment-cone loss, with a Euclidean
//! cone backend for geometry ablations.
//!
//! Similarity is the negative geodesic distance by default
//! ([`SimilaritySign::NegativeDistance`]); the raw-distance sign exists only
//! so unit tests can pin the literal textbook form. Likewise the contrastive
//! denominator includes the positive by default (standard InfoNCE), with the
//! positive-excluded form selectable through
//! [`LossConfig::include_positive_in_denominator`].

pub mod kernel;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, Curvature, GeometryError, LorentzPoint};
use crate::ContentType;

use kernel::{GeomBackend, QuadPoints};

/// Minimum admissible softmax temperature.
pub const MIN_TEMPERATURE: f64 = 0.01;

/// Default cone-tightness constant limiting apertures near the origin.
pub const DEFAULT_CONE_K: f64 = 0.1;

#[derive(Debug, Error)]
pub enum LossError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("contrastive loss needs at least 2 rows, got {0} (the positive-excluded denominator is empty at batch size 1)")]
    BatchTooSmall(usize),
    #[error("query/target lists differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("embeddings mix backends or disagree with the configured backend")]
    BackendMismatch,
    #[error("batch is empty")]
    EmptyBatch,
    #[error("invalid loss config: {0}")]
    InvalidConfig(String),
}

/// Which geometry the objective runs in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    #[default]
    Hyperbolic,
    Euclidean,
}

/// Sign convention mapping distance to similarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SimilaritySign {
    /// Similarity is `-distance`; aligning a pair lowers the loss.
    #[default]
    NegativeDistance,
    /// Similarity is `+distance`; only for pinning the literal formula in tests.
    RawDistance,
}

/// Per-term switches for loss ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TermToggles {
    pub contrastive_safe: bool,
    pub contrastive_unsafe: bool,
    /// Cross term aligning safe images with unsafe texts.
    pub contrastive_cross_safe_image: bool,
    /// Cross term aligning unsafe images with safe texts.
    pub contrastive_cross_unsafe_image: bool,
    /// Safe image inside the safe-text cone.
    pub entail_safe: bool,
    /// Unsafe text inside the safe-image cone (the safety term).
    pub entail_safety: bool,
    /// Unsafe image inside the unsafe-text cone.
    pub entail_unsafe: bool,
}

impl Default for TermToggles {
    fn default() -> Self {
        TermToggles {
            contrastive_safe: true,
            contrastive_unsafe: true,
            contrastive_cross_safe_image: true,
            contrastive_cross_unsafe_image: true,
            entail_safe: true,
            entail_safety: true,
            entail_unsafe: true,
        }
    }
}

impl TermToggles {
    /// Contrastive terms only.
    pub fn without_entailment() -> Self {
        TermToggles {
            entail_safe: false,
            entail_safety: false,
            entail_unsafe: false,
            ..Default::default()
        }
    }

    /// Drop only the safety entailment term.
    pub fn without_safety_entailment() -> Self {
        TermToggles {
            entail_safety: false,
            ..Default::default()
        }
    }

    pub fn any_contrastive(&self) -> bool {
        self.contrastive_safe
            || self.contrastive_unsafe
            || self.contrastive_cross_safe_image
            || self.contrastive_cross_unsafe_image
    }
}

/// Objective hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    /// Softmax temperature used by the standalone `f64` entry points; the
    /// trainer substitutes its learnable temperature.
    pub temperature: f64,
    /// Half-aperture multiplier for the entailment hinge.
    pub eta: f64,
    /// Cone-tightness constant.
    pub cone_k: f64,
    pub backend: Backend,
    pub include_positive_in_denominator: bool,
    pub similarity_sign: SimilaritySign,
    pub terms: TermToggles,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            temperature: 0.07,
            eta: 1.0,
            cone_k: DEFAULT_CONE_K,
            backend: Backend::Hyperbolic,
            include_positive_in_denominator: true,
            similarity_sign: SimilaritySign::NegativeDistance,
            terms: TermToggles::default(),
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), LossError> {
        if !self.temperature.is_finite() || self.temperature < MIN_TEMPERATURE {
            return Err(LossError::InvalidConfig(format!(
                "temperature must be >= {MIN_TEMPERATURE}, got {}",
                self.temperature
            )));
        }
        if !self.eta.is_finite() || self.eta <= 0.0 {
            return Err(LossError::InvalidConfig(format!(
                "eta must be positive, got {}",
                self.eta
            )));
        }
        if !self.cone_k.is_finite() || self.cone_k <= 0.0 {
            return Err(LossError::InvalidConfig(format!(
                "cone_k must be positive, got {}",
                self.cone_k
            )));
        }
        Ok(())
    }

    pub fn inv_temperature(&self) -> f64 {
        1.0 / self.temperature
    }
}

/// A point in whichever space the backend selects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "space", rename_all = "snake_case")]
pub enum Embedding {
    Lorentz(LorentzPoint),
    Euclidean(Vec<f64>),
}

impl Embedding {
    pub fn backend(&self) -> Backend {
        match self {
            Embedding::Lorentz(_) => Backend::Hyperbolic,
            Embedding::Euclidean(_) => Backend::Euclidean,
        }
    }

    /// Spatial dimension (ambient minus time axis for hyperbolic points).
    pub fn dim(&self) -> usize {
        match self {
            Embedding::Lorentz(p) => p.dim(),
            Embedding::Euclidean(v) => v.len(),
        }
    }

    pub fn kappa(&self) -> Option<Curvature> {
        match self {
            Embedding::Lorentz(p) => Some(p.kappa()),
            Embedding::Euclidean(_) => None,
        }
    }

    /// Coordinates as consumed by the loss kernels: ambient Minkowski
    /// coordinates for hyperbolic points, raw coordinates otherwise.
    pub fn coords(&self) -> Vec<f64> {
        match self {
            Embedding::Lorentz(p) => p.ambient(),
            Embedding::Euclidean(v) => v.clone(),
        }
    }

    pub fn as_lorentz(&self) -> Option<&LorentzPoint> {
        match self {
            Embedding::Lorentz(p) => Some(p),
            Embedding::Euclidean(_) => None,
        }
    }

    /// Backend-appropriate distance between two embeddings.
    pub fn distance(&self, other: &Embedding) -> Result<f64, LossError> {
        match (self, other) {
            (Embedding::Lorentz(p), Embedding::Lorentz(q)) => {
                Ok(geometry::lorentz_dist(p, q)?)
            }
            (Embedding::Euclidean(a), Embedding::Euclidean(b)) => {
                if a.len() != b.len() {
                    return Err(LossError::LengthMismatch(a.len(), b.len()));
                }
                Ok(a.iter()
                    .zip(b)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt())
            }
            _ => Err(LossError::BackendMismatch),
        }
    }

    fn compatible_with(&self, other: &Embedding) -> bool {
        self.backend() == other.backend()
            && self.dim() == other.dim()
            && self.kappa().map(Curvature::value) == other.kappa().map(Curvature::value)
    }
}

/// One quadruplet after embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedQuadruplet {
    pub safe_text: Embedding,
    pub safe_image: Embedding,
    pub unsafe_text: Embedding,
    pub unsafe_image: Embedding,
}

impl EmbeddedQuadruplet {
    pub fn new(
        safe_text: Embedding,
        safe_image: Embedding,
        unsafe_text: Embedding,
        unsafe_image: Embedding,
    ) -> Result<Self, LossError> {
        let quad = EmbeddedQuadruplet {
            safe_text,
            safe_image,
            unsafe_text,
            unsafe_image,
        };
        for ct in &ContentType::ALL[1..] {
            if !quad.safe_text.compatible_with(quad.get(*ct)) {
                return Err(LossError::BackendMismatch);
            }
        }
        Ok(quad)
    }

    pub fn get(&self, ct: ContentType) -> &Embedding {
        match ct {
            ContentType::SafeText => &self.safe_text,
            ContentType::SafeImage => &self.safe_image,
            ContentType::UnsafeText => &self.unsafe_text,
            ContentType::UnsafeImage => &self.unsafe_image,
        }
    }

    fn to_points(&self) -> QuadPoints<f64> {
        QuadPoints {
            points: [
                self.safe_text.coords(),
                self.safe_image.coords(),
                self.unsafe_text.coords(),
                self.unsafe_image.coords(),
            ],
        }
    }
}

/// A non-empty batch of mutually compatible quadruplets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    quadruplets: Vec<EmbeddedQuadruplet>,
}

impl Batch {
    pub fn new(quadruplets: Vec<EmbeddedQuadruplet>) -> Result<Self, LossError> {
        let first = quadruplets.first().ok_or(LossError::EmptyBatch)?;
        if !quadruplets
            .iter()
            .all(|q| q.safe_text.compatible_with(&first.safe_text))
        {
            return Err(LossError::BackendMismatch);
        }
        Ok(Batch { quadruplets })
    }

    pub fn quadruplets(&self) -> &[EmbeddedQuadruplet] {
        &self.quadruplets
    }

    pub fn len(&self) -> usize {
        self.quadruplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.quadruplets.is_empty()
    }

    fn backend(&self) -> Backend {
        self.quadruplets[0].safe_text.backend()
    }

    fn geom(&self, cfg: &LossConfig) -> Result<(GeomBackend<f64>, Vec<QuadPoints<f64>>), LossError> {
        if self.backend() != cfg.backend {
            return Err(LossError::BackendMismatch);
        }
        let geom = match self.quadruplets[0].safe_text.kappa() {
            Some(kappa) => GeomBackend::Hyperbolic {
                kappa: kappa.value(),
            },
            None => GeomBackend::Euclidean,
        };
        Ok((geom, self.quadruplets.iter().map(|q| q.to_points()).collect()))
    }
}

fn embedding_lists_geom(
    embeddings: &[Embedding],
    cfg: &LossConfig,
) -> Result<GeomBackend<f64>, LossError> {
    let first = &embeddings[0];
    if first.backend() != cfg.backend || !embeddings.iter().all(|e| e.compatible_with(first)) {
        return Err(LossError::BackendMismatch);
    }
    Ok(match first.kappa() {
        Some(kappa) => GeomBackend::Hyperbolic {
            kappa: kappa.value(),
        },
        None => GeomBackend::Euclidean,
    })
}

/// Symmetrised contrastive loss over one query/target pairing with
/// same-index positives, averaged over rows and directions.
pub fn contrastive_pair_loss(
    queries: &[Embedding],
    targets: &[Embedding],
    cfg: &LossConfig,
) -> Result<f64, LossError> {
    cfg.validate()?;
    if queries.len() != targets.len() {
        return Err(LossError::LengthMismatch(queries.len(), targets.len()));
    }
    if queries.len() < 2 {
        return Err(LossError::BatchTooSmall(queries.len()));
    }
    let all: Vec<Embedding> = queries.iter().chain(targets).cloned().collect();
    let geom = embedding_lists_geom(&all, cfg)?;
    let q_coords: Vec<Vec<f64>> = queries.iter().map(Embedding::coords).collect();
    let t_coords: Vec<Vec<f64>> = targets.iter().map(Embedding::coords).collect();
    let q_refs: Vec<&[f64]> = q_coords.iter().map(Vec::as_slice).collect();
    let t_refs: Vec<&[f64]> = t_coords.iter().map(Vec::as_slice).collect();
    Ok(kernel::pair_contrastive(
        &geom,
        &q_refs,
        &t_refs,
        cfg.inv_temperature(),
        cfg.include_positive_in_denominator,
        cfg.similarity_sign,
    ))
}

/// Four-term contrastive objective over a batch of quadruplets.
pub fn safety_contrastive_loss(batch: &Batch, cfg: &LossConfig) -> Result<f64, LossError> {
    cfg.validate()?;
    if batch.len() < 2 {
        return Err(LossError::BatchTooSmall(batch.len()));
    }
    let (geom, points) = batch.geom(cfg)?;
    Ok(kernel::safety_contrastive(
        &geom,
        &points,
        cfg.inv_temperature(),
        cfg,
    ))
}

/// Angular violation of `inner` against the `eta`-scaled cone of `apex`:
/// zero exactly when `inner` lies inside the cone.
pub fn entailment_pair_loss(
    inner: &Embedding,
    apex: &Embedding,
    cfg: &LossConfig,
) -> Result<f64, LossError> {
    cfg.validate()?;
    if !inner.compatible_with(apex) || inner.backend() != cfg.backend {
        return Err(LossError::BackendMismatch);
    }
    let degenerate = match apex {
        Embedding::Lorentz(p) => p.spatial_norm() == 0.0,
        Embedding::Euclidean(v) => v.iter().all(|&x| x == 0.0),
    };
    if degenerate {
        return Err(GeometryError::DegenerateApex.into());
    }
    let geom = match apex.kappa() {
        Some(kappa) => GeomBackend::Hyperbolic {
            kappa: kappa.value(),
        },
        None => GeomBackend::Euclidean,
    };
    Ok(kernel::cone_violation(
        &geom,
        &inner.coords(),
        &apex.coords(),
        cfg.eta,
        cfg.cone_k,
    ))
}

/// Three-term entailment objective, averaged over the batch.
pub fn safety_entailment_loss(batch: &Batch, cfg: &LossConfig) -> Result<f64, LossError> {
    cfg.validate()?;
    let (geom, points) = batch.geom(cfg)?;
    Ok(kernel::safety_entailment(&geom, &points, cfg))
}

/// Combined objective: contrastive plus entailment.
pub fn total_loss(batch: &Batch, cfg: &LossConfig) -> Result<f64, LossError> {
    cfg.validate()?;
    if cfg.terms.any_contrastive() && batch.len() < 2 {
        return Err(LossError::BatchTooSmall(batch.len()));
    }
    let (geom, points) = batch.geom(cfg)?;
    Ok(kernel::total_loss(
        &geom,
        &points,
        cfg.inv_temperature(),
        cfg,
    ))
}

/// Euclidean cone half-aperture `asin(K/||q||)`, clamped to `pi/2` inside
/// the near-origin region (mirroring the hyperbolic policy).
pub fn euclidean_half_aperture(q: &[f64], cone_k: f64) -> Result<f64, LossError> {
    if q.iter().all(|&x| x == 0.0) {
        return Err(GeometryError::DegenerateApex.into());
    }
    let norm = q.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < cone_k {
        log::warn!(
            "euclidean_half_aperture: norm {norm:.3e} below K; clamping aperture to pi/2"
        );
    }
    Ok(crate::geometry::kernel::euclidean_half_aperture(norm, cone_k))
}

/// Euclidean exterior angle at `p` between `q - p` and the ray through `p`.
pub fn euclidean_exterior_angle(p: &[f64], q: &[f64]) -> Result<f64, LossError> {
    if p.len() != q.len() {
        return Err(LossError::LengthMismatch(p.len(), q.len()));
    }
    if p.iter().all(|&x| x == 0.0) {
        return Err(GeometryError::DegenerateApex.into());
    }
    if p == q {
        return Err(GeometryError::DegeneratePair.into());
    }
    Ok(crate::geometry::kernel::euclidean_exterior_angle(p, q))
}
