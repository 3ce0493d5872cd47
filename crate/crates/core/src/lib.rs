//! Safety-aware embedding learning in the Lorentz model of hyperbolic space.
//!
//! The crate trains a small two-tower model on synthetic quadruplets of
//! (safe text, safe image, unsafe text, unsafe image) features so that the
//! embedding space carries a radial hierarchy: safe content sits near the
//! origin of the hyperboloid, unsafe content farther out, and every member
//! of a quadruplet lies inside the entailment cone of its more general
//! neighbour. On top of the trained space it provides retrieval with safety
//! traversals (repositioning queries to a per-content-type radius before
//! nearest-neighbour search) and a norm-threshold safety classifier.
//!
//! Module map:
//! - [`geometry`]: Lorentz-model kernel (lift, inner product, distance,
//!   exp/log maps, cone apertures, exterior angles).
//! - [`loss`]: contrastive + entailment training objective, with a
//!   Euclidean-cone backend for ablations.
//! - [`autodiff`]: minimal reverse-mode tape used to differentiate the
//!   objective with respect to every learnable parameter.
//! - [`data`]: synthetic quadruplet generator and the learnable parameter
//!   store (affine encoders plus log-space scalars).
//! - [`train`]: optimizer loop, gradient checking, ablation grids.
//! - [`eval`]: traversal boundaries, retrieval metrics, the distance
//!   classifier, and distance-distribution export.

pub mod autodiff;
pub mod data;
pub mod eval;
pub mod geometry;
pub mod loss;
pub mod scalar;
pub mod train;

mod types;

pub use types::ContentType;
