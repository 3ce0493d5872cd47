//! Synthetic quadruplet corpora and the learnable parameter store.
//!
//! Each quadruplet carries raw feature vectors for the four content roles,
//! built from a shared concept vector, a per-concept unsafety direction, a
//! per-quadruplet latent (so counterpart retrieval is learnable), and
//! per-role isotropic noise. Safe and unsafe members of one quadruplet share
//! everything except the unsafety offset, which makes unsafe members
//! "specific versions" of the safe ones by construction.
//!
//! The parameter store mirrors a frozen two-tower setup at desk scale: one
//! affine text encoder, one affine image encoder, and four scalars learned
//! in log space (projection gains per modality, curvature, and inverse
//! temperature).

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{exp_map_origin, Curvature, TangentVector};
use crate::loss::{Backend, EmbeddedQuadruplet, Embedding};
use crate::ContentType;

pub const DEFAULT_EMBED_DIM: usize = 32;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("corpus parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("corpus record group for id {0} is incomplete")]
    IncompleteQuadruplet(u64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// Knobs of the synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub num_quadruplets: usize,
    pub feature_dim: usize,
    pub num_concepts: usize,
    /// Per-role isotropic noise scale.
    pub noise_scale: f64,
    /// Scale of the per-quadruplet latent shared by all four roles.
    pub quad_scale: f64,
    /// Length of the concept-specific offset separating unsafe from safe.
    pub unsafe_offset_scale: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            num_quadruplets: 500,
            feature_dim: 16,
            num_concepts: 5,
            noise_scale: 0.06,
            quad_scale: 0.3,
            unsafe_offset_scale: 3.0,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.num_quadruplets < 1 {
            return Err(DataError::Config("num_quadruplets must be >= 1".into()));
        }
        if self.feature_dim < 2 {
            return Err(DataError::Config("feature_dim must be >= 2".into()));
        }
        if self.num_concepts < 1 {
            return Err(DataError::Config("num_concepts must be >= 1".into()));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(DataError::Config("noise_scale must be non-negative".into()));
        }
        if !(self.quad_scale >= 0.0 && self.quad_scale.is_finite()) {
            return Err(DataError::Config("quad_scale must be non-negative".into()));
        }
        if !(self.unsafe_offset_scale > 0.0 && self.unsafe_offset_scale.is_finite()) {
            return Err(DataError::Config(
                "unsafe_offset_scale must be positive".into(),
            ));
        }
        if self.noise_scale >= self.unsafe_offset_scale {
            return Err(DataError::Config(
                "noise_scale must stay below unsafe_offset_scale or the safety structure is not recoverable".into(),
            ));
        }
        Ok(())
    }
}

/// One training record: raw features for all four roles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quadruplet {
    pub id: u64,
    pub concept_id: u32,
    /// Feature vectors in [`ContentType`] order.
    pub features: [Vec<f64>; 4],
}

impl Quadruplet {
    pub fn feature(&self, role: ContentType) -> &[f64] {
        &self.features[role.index()]
    }

    pub fn feature_dim(&self) -> usize {
        self.features[0].len()
    }
}

/// Deterministic corpus construction from a seeded config.
pub fn generate(config: &GeneratorConfig) -> Result<Vec<Quadruplet>, DataError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let draw = |rng: &mut ChaCha8Rng, n: usize, scale: f64| -> Vec<f64> {
        (0..n).map(|_| std_normal.sample(rng) * scale).collect()
    };

    let normalize = |v: Vec<f64>| -> Vec<f64> {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        v.into_iter().map(|x| x / norm).collect()
    };
    let concepts: Vec<Vec<f64>> = (0..config.num_concepts)
        .map(|_| draw(&mut rng, config.feature_dim, 1.0))
        .collect();
    // Per-concept unit unsafety directions. Two properties matter: the
    // directions share a common component (unsafety has one dominant axis
    // with concept-specific flavour), and each direction tilts against its
    // concept just enough that the offset preserves the feature norm, so
    // raw norms carry no safe/unsafe signal and the radial hierarchy has to
    // be learned rather than inherited from the data.
    let shared_dir = normalize(draw(&mut rng, config.feature_dim, 1.0));
    let unsafe_dirs: Vec<Vec<f64>> = concepts
        .iter()
        .map(|concept| {
            let flavour = draw(&mut rng, config.feature_dim, 0.7);
            let mixed: Vec<f64> = shared_dir.iter().zip(&flavour).map(|(g, x)| g + x).collect();
            let c_norm = concept.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            let c_hat: Vec<f64> = concept.iter().map(|x| x / c_norm).collect();
            let radial: f64 = mixed.iter().zip(&c_hat).map(|(m, c)| m * c).sum();
            let perp = normalize(
                mixed
                    .iter()
                    .zip(&c_hat)
                    .map(|(m, c)| m - radial * c)
                    .collect(),
            );
            // ||c + s*u|| = ||c|| requires the component along the concept
            // to be -s / (2||c||).
            let along = (-config.unsafe_offset_scale / (2.0 * c_norm)).max(-1.0);
            let across = (1.0 - along * along).sqrt();
            normalize(
                c_hat
                    .iter()
                    .zip(&perp)
                    .map(|(c, p)| along * c + across * p)
                    .collect(),
            )
        })
        .collect();

    let mut corpus = Vec::with_capacity(config.num_quadruplets);
    for k in 0..config.num_quadruplets {
        let concept_id = k % config.num_concepts;
        let latent = draw(&mut rng, config.feature_dim, config.quad_scale);
        let mut features: [Vec<f64>; 4] = Default::default();
        for role in ContentType::ALL {
            let noise = draw(&mut rng, config.feature_dim, config.noise_scale);
            let mut v = Vec::with_capacity(config.feature_dim);
            for d in 0..config.feature_dim {
                let mut x = concepts[concept_id][d] + latent[d] + noise[d];
                if role.is_unsafe() {
                    x += config.unsafe_offset_scale * unsafe_dirs[concept_id][d];
                }
                v.push(x);
            }
            features[role.index()] = v;
        }
        corpus.push(Quadruplet {
            id: k as u64,
            concept_id: concept_id as u32,
            features,
        });
    }
    Ok(corpus)
}

/// Deterministic head/tail split; the tail fraction is held out. Concepts
/// are assigned round-robin, so both sides stay concept-balanced.
pub fn split_corpus(
    corpus: &[Quadruplet],
    holdout_fraction: f64,
) -> (Vec<Quadruplet>, Vec<Quadruplet>) {
    assert!(
        (0.0..1.0).contains(&holdout_fraction),
        "holdout fraction must be in [0, 1)"
    );
    let holdout = ((corpus.len() as f64) * holdout_fraction).round() as usize;
    let cut = corpus.len() - holdout;
    (corpus[..cut].to_vec(), corpus[cut..].to_vec())
}

/// Affine map `x -> W x + b` with row-major weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl AffineMap {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        AffineMap {
            in_dim,
            out_dim,
            weight: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.in_dim);
        let mut out = Vec::with_capacity(self.out_dim);
        for row in 0..self.out_dim {
            let mut acc = self.bias[row];
            let base = row * self.in_dim;
            for (j, &xj) in x.iter().enumerate() {
                acc += self.weight[base + j] * xj;
            }
            out.push(acc);
        }
        out
    }
}

/// Learnable parameters: two affine encoders plus four log-space scalars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub text_encoder: AffineMap,
    pub image_encoder: AffineMap,
    pub log_alpha_txt: f64,
    pub log_alpha_img: f64,
    pub log_kappa: f64,
    /// `log(1/tau)`.
    pub log_inv_temperature: f64,
}

impl ModelParams {
    /// Initialisation: weights `N(0, 16/feature_dim)`, zero biases,
    /// projection gains `1/sqrt(512)`, curvature 1, temperature 0.07.
    ///
    /// The weight scale compensates for the small projection gains so that
    /// initial tangent norms land around 1, outside the near-origin region
    /// where cone apertures saturate and their gradients vanish.
    pub fn init(feature_dim: usize, embed_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weight_dist = Normal::new(0.0, 4.0 * (1.0 / feature_dim as f64).sqrt()).expect("normal");
        let encoder = |rng: &mut ChaCha8Rng| {
            let mut map = AffineMap::zeros(feature_dim, embed_dim);
            for w in map.weight.iter_mut() {
                *w = weight_dist.sample(rng);
            }
            map
        };
        ModelParams {
            text_encoder: encoder(&mut rng),
            image_encoder: encoder(&mut rng),
            log_alpha_txt: -(512f64).ln() / 2.0,
            log_alpha_img: -(512f64).ln() / 2.0,
            log_kappa: 0.0,
            log_inv_temperature: -(0.07f64).ln(),
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.text_encoder.in_dim
    }

    pub fn embed_dim(&self) -> usize {
        self.text_encoder.out_dim
    }

    pub fn alpha_txt(&self) -> f64 {
        self.log_alpha_txt.exp()
    }

    pub fn alpha_img(&self) -> f64 {
        self.log_alpha_img.exp()
    }

    pub fn kappa(&self) -> f64 {
        self.log_kappa.exp()
    }

    pub fn temperature(&self) -> f64 {
        (-self.log_inv_temperature).exp()
    }

    pub fn inv_temperature(&self) -> f64 {
        self.log_inv_temperature.exp()
    }

    /// Modality-gated encoder output: `alpha * (W x + b)`. This is the
    /// tangent vector fed to the exponential map under the hyperbolic
    /// backend, and the embedding itself under the Euclidean one.
    pub fn encode_tangent(&self, features: &[f64], role: ContentType) -> Vec<f64> {
        let (encoder, alpha) = if role.is_text() {
            (&self.text_encoder, self.alpha_txt())
        } else {
            (&self.image_encoder, self.alpha_img())
        };
        encoder.apply(features).into_iter().map(|x| x * alpha).collect()
    }

    pub fn embed_one(&self, features: &[f64], role: ContentType, backend: Backend) -> Embedding {
        let tangent = self.encode_tangent(features, role);
        match backend {
            Backend::Hyperbolic => {
                let kappa = Curvature::new(self.kappa()).expect("positive curvature");
                let v = TangentVector::new(tangent, kappa).expect("finite tangent");
                Embedding::Lorentz(exp_map_origin(&v))
            }
            Backend::Euclidean => Embedding::Euclidean(tangent),
        }
    }

    pub fn embed_quadruplet(&self, quad: &Quadruplet, backend: Backend) -> EmbeddedQuadruplet {
        let embed = |role| self.embed_one(quad.feature(role), role, backend);
        EmbeddedQuadruplet::new(
            embed(ContentType::SafeText),
            embed(ContentType::SafeImage),
            embed(ContentType::UnsafeText),
            embed(ContentType::UnsafeImage),
        )
        .expect("single-params embeddings are homogeneous")
    }

    pub fn embed_corpus(&self, corpus: &[Quadruplet], backend: Backend) -> Vec<EmbeddedQuadruplet> {
        corpus
            .iter()
            .map(|q| self.embed_quadruplet(q, backend))
            .collect()
    }
}

// Flat parameter layout used by the optimizer and the gradient checker:
// [text W, text b, image W, image b, log_alpha_txt, log_alpha_img,
//  log_kappa, log_inv_temperature].
impl ModelParams {
    pub fn flat_len(&self) -> usize {
        2 * (self.text_encoder.weight.len() + self.text_encoder.bias.len()) + 4
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.flat_len());
        out.extend_from_slice(&self.text_encoder.weight);
        out.extend_from_slice(&self.text_encoder.bias);
        out.extend_from_slice(&self.image_encoder.weight);
        out.extend_from_slice(&self.image_encoder.bias);
        out.push(self.log_alpha_txt);
        out.push(self.log_alpha_img);
        out.push(self.log_kappa);
        out.push(self.log_inv_temperature);
        out
    }

    pub fn set_from_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.flat_len());
        let w = self.text_encoder.weight.len();
        let b = self.text_encoder.bias.len();
        self.text_encoder.weight.copy_from_slice(&flat[..w]);
        self.text_encoder.bias.copy_from_slice(&flat[w..w + b]);
        let base = w + b;
        self.image_encoder.weight.copy_from_slice(&flat[base..base + w]);
        self.image_encoder.bias.copy_from_slice(&flat[base + w..base + w + b]);
        let s = 2 * (w + b);
        self.log_alpha_txt = flat[s];
        self.log_alpha_img = flat[s + 1];
        self.log_kappa = flat[s + 2];
        self.log_inv_temperature = flat[s + 3];
    }

    /// Whether the flat index addresses an encoder weight matrix entry.
    /// Weight decay applies only to those; gains, biases, and the log-space
    /// scalars are excluded.
    pub fn is_weight_index(&self, idx: usize) -> bool {
        let w = self.text_encoder.weight.len();
        let b = self.text_encoder.bias.len();
        idx < w || (w + b..2 * w + b).contains(&idx)
    }

    /// Flat indices of the four log-space scalars.
    pub fn scalar_indices(&self) -> [usize; 4] {
        let s = 2 * (self.text_encoder.weight.len() + self.text_encoder.bias.len());
        [s, s + 1, s + 2, s + 3]
    }

    pub fn param_label(&self, idx: usize) -> String {
        let w = self.text_encoder.weight.len();
        let b = self.text_encoder.bias.len();
        let in_dim = self.text_encoder.in_dim;
        if idx < w {
            return format!("text_encoder.weight[{}][{}]", idx / in_dim, idx % in_dim);
        }
        let idx = idx - w;
        if idx < b {
            return format!("text_encoder.bias[{idx}]");
        }
        let idx = idx - b;
        if idx < w {
            return format!("image_encoder.weight[{}][{}]", idx / in_dim, idx % in_dim);
        }
        let idx = idx - w;
        if idx < b {
            return format!("image_encoder.bias[{idx}]");
        }
        ["log_alpha_txt", "log_alpha_img", "log_kappa", "log_inv_temperature"][idx - b].to_string()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CorpusRecord {
    id: u64,
    concept_id: u32,
    role: ContentType,
    features: Vec<f64>,
}

/// Write a corpus as line-delimited JSON, one record per (quadruplet, role).
pub fn write_corpus<W: Write>(mut out: W, corpus: &[Quadruplet]) -> Result<(), DataError> {
    for quad in corpus {
        for role in ContentType::ALL {
            let record = CorpusRecord {
                id: quad.id,
                concept_id: quad.concept_id,
                role,
                features: quad.feature(role).to_vec(),
            };
            serde_json::to_writer(&mut out, &record)
                .map_err(|e| DataError::Parse { line: 0, message: e.to_string() })?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

pub fn save_corpus(path: &Path, corpus: &[Quadruplet]) -> Result<(), DataError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let file = fs::File::create(path)?;
    write_corpus(std::io::BufWriter::new(file), corpus)
}

/// Parse a line-delimited corpus; records may arrive in any order but every
/// id must carry exactly the four roles with consistent dimensions.
pub fn read_corpus<R: BufRead>(reader: R) -> Result<Vec<Quadruplet>, DataError> {
    use std::collections::BTreeMap;
    let mut groups: BTreeMap<u64, (u32, [Option<Vec<f64>>; 4])> = BTreeMap::new();
    let mut dim: Option<usize> = None;
    for (line_no, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: CorpusRecord =
            serde_json::from_str(&line).map_err(|e| DataError::Parse {
                line: line_no + 1,
                message: e.to_string(),
            })?;
        let expected = *dim.get_or_insert(record.features.len());
        if record.features.len() != expected {
            return Err(DataError::Dimension {
                expected,
                got: record.features.len(),
            });
        }
        let entry = groups
            .entry(record.id)
            .or_insert((record.concept_id, Default::default()));
        entry.1[record.role.index()] = Some(record.features);
    }
    let mut corpus = Vec::with_capacity(groups.len());
    for (id, (concept_id, roles)) in groups {
        let mut features: [Vec<f64>; 4] = Default::default();
        for (slot, role) in roles.into_iter().zip(ContentType::ALL) {
            features[role.index()] = slot.ok_or(DataError::IncompleteQuadruplet(id))?;
        }
        corpus.push(Quadruplet {
            id,
            concept_id,
            features,
        });
    }
    Ok(corpus)
}

pub fn load_corpus(path: &Path) -> Result<Vec<Quadruplet>, DataError> {
    let file = fs::File::open(path)?;
    read_corpus(BufReader::new(file))
}

pub fn save_params(path: &Path, params: &ModelParams) -> Result<(), DataError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let json = serde_json::to_string_pretty(params).expect("params serialize");
    fs::write(path, json)?;
    Ok(())
}

pub fn load_params(path: &Path) -> Result<ModelParams, DataError> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| DataError::Parse {
        line: 0,
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::lorentz_inner;

    #[test]
    fn generation_is_deterministic() {
        let cfg = GeneratorConfig {
            num_quadruplets: 20,
            ..Default::default()
        };
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        let other = GeneratorConfig {
            seed: 1,
            ..cfg.clone()
        };
        assert_ne!(generate(&cfg).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn zero_noise_collapses_modalities() {
        let cfg = GeneratorConfig {
            num_quadruplets: 10,
            noise_scale: 0.0,
            ..Default::default()
        };
        for quad in generate(&cfg).unwrap() {
            assert_eq!(quad.feature(ContentType::SafeText), quad.feature(ContentType::SafeImage));
            assert_eq!(
                quad.feature(ContentType::UnsafeText),
                quad.feature(ContentType::UnsafeImage)
            );
            assert_ne!(quad.feature(ContentType::SafeText), quad.feature(ContentType::UnsafeText));
        }
    }

    #[test]
    fn unsafe_offset_monte_carlo() {
        let cfg = GeneratorConfig {
            num_quadruplets: 1500,
            noise_scale: 0.03,
            unsafe_offset_scale: 3.0,
            ..Default::default()
        };
        let corpus = generate(&cfg).unwrap();
        let mut total = 0.0;
        let mut count = 0usize;
        for quad in &corpus {
            for safe in [ContentType::SafeText, ContentType::SafeImage] {
                for uns in [ContentType::UnsafeText, ContentType::UnsafeImage] {
                    let d: f64 = quad
                        .feature(safe)
                        .iter()
                        .zip(quad.feature(uns))
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    total += d;
                    count += 1;
                }
            }
        }
        let mean = total / count as f64;
        // Independent role noises inflate the offset slightly:
        // E||offset + eps - eps'|| ~= sqrt(offset^2 + 2 * dim * noise^2).
        let expected = (3.0f64.powi(2) + 2.0 * cfg.feature_dim as f64 * 0.01).sqrt();
        assert!((mean - 3.0).abs() < 0.15, "mean {mean}");
        assert!((mean - expected).abs() < 0.05, "mean {mean} vs {expected}");
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad = GeneratorConfig {
            noise_scale: 5.0,
            unsafe_offset_scale: 3.0,
            ..Default::default()
        };
        assert!(matches!(generate(&bad), Err(DataError::Config(_))));
        let bad = GeneratorConfig {
            feature_dim: 1,
            ..Default::default()
        };
        assert!(matches!(generate(&bad), Err(DataError::Config(_))));
    }

    #[test]
    fn zero_params_embed_to_origin() {
        let params = ModelParams {
            text_encoder: AffineMap::zeros(4, 6),
            image_encoder: AffineMap::zeros(4, 6),
            log_alpha_txt: 0.0,
            log_alpha_img: 0.0,
            log_kappa: 0.0,
            log_inv_temperature: 0.0,
        };
        let quad = Quadruplet {
            id: 0,
            concept_id: 0,
            features: [vec![1.0; 4], vec![2.0; 4], vec![3.0; 4], vec![4.0; 4]],
        };
        let embedded = params.embed_quadruplet(&quad, Backend::Hyperbolic);
        for ct in ContentType::ALL {
            let point = embedded.get(ct).as_lorentz().unwrap();
            assert!(point.is_origin());
            assert_eq!(point.time(), 1.0);
        }
    }

    #[test]
    fn doubling_alpha_doubles_tangent_norm() {
        let mut params = ModelParams::init(4, 6, 3);
        let features = vec![0.5, -1.0, 2.0, 0.25];
        let before: f64 = params
            .encode_tangent(&features, ContentType::SafeImage)
            .iter()
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt();
        params.log_alpha_img += std::f64::consts::LN_2;
        let after: f64 = params
            .encode_tangent(&features, ContentType::SafeImage)
            .iter()
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt();
        assert!((after - 2.0 * before).abs() < 1e-12);
    }

    #[test]
    fn embeddings_stay_on_manifold() {
        let cfg = GeneratorConfig {
            num_quadruplets: 30,
            ..Default::default()
        };
        let corpus = generate(&cfg).unwrap();
        let mut params = ModelParams::init(cfg.feature_dim, 12, 9);
        params.log_kappa = 0.4;
        for quad in &corpus {
            let embedded = params.embed_quadruplet(quad, Backend::Hyperbolic);
            for ct in ContentType::ALL {
                let p = embedded.get(ct).as_lorentz().unwrap();
                let inner = lorentz_inner(p, p).unwrap();
                assert!((inner + 1.0 / params.kappa()).abs() < 1e-6);
            }
        }
    }

    /// Plain logistic regression on raw features; the corpus must be
    /// linearly separable into safe and unsafe members for the downstream
    /// hierarchy criteria to be meaningful at all.
    #[test]
    fn linear_probe_separates_safe_from_unsafe() {
        let cfg = GeneratorConfig::default();
        let corpus = generate(&cfg).unwrap();
        let mut rows: Vec<(&[f64], f64)> = Vec::new();
        for quad in &corpus {
            for ct in ContentType::ALL {
                rows.push((quad.feature(ct), if ct.is_unsafe() { 1.0 } else { 0.0 }));
            }
        }

        let dim = cfg.feature_dim;
        let mut w = vec![0.0; dim + 1];
        let lr = 0.5;
        for _ in 0..400 {
            let mut grad = vec![0.0; dim + 1];
            for (x, y) in &rows {
                let z: f64 = w[dim] + x.iter().zip(&w[..dim]).map(|(a, b)| a * b).sum::<f64>();
                let p = 1.0 / (1.0 + (-z).exp());
                let err = p - y;
                for d in 0..dim {
                    grad[d] += err * x[d];
                }
                grad[dim] += err;
            }
            for d in 0..=dim {
                w[d] -= lr * grad[d] / rows.len() as f64;
            }
        }

        let correct = rows
            .iter()
            .filter(|(x, y)| {
                let z: f64 = w[dim] + x.iter().zip(&w[..dim]).map(|(a, b)| a * b).sum::<f64>();
                (z > 0.0) == (*y > 0.5)
            })
            .count();
        let accuracy = correct as f64 / rows.len() as f64;
        assert!(accuracy >= 0.99, "probe accuracy {accuracy}");
    }

    #[test]
    fn corpus_round_trips_through_jsonl() {
        let cfg = GeneratorConfig {
            num_quadruplets: 8,
            ..Default::default()
        };
        let corpus = generate(&cfg).unwrap();
        let mut buffer = Vec::new();
        write_corpus(&mut buffer, &corpus).unwrap();
        assert_eq!(buffer.iter().filter(|&&b| b == b'\n').count(), 32);
        let parsed = read_corpus(std::io::Cursor::new(buffer)).unwrap();
        assert_eq!(parsed, corpus);
    }

    #[test]
    fn incomplete_quadruplet_is_rejected() {
        let line = r#"{"id":0,"concept_id":0,"role":"safe_text","features":[1.0,2.0]}"#;
        let err = read_corpus(std::io::Cursor::new(format!("{line}\n"))).unwrap_err();
        assert!(matches!(err, DataError::IncompleteQuadruplet(0)));
    }

    #[test]
    fn params_round_trip_exactly() {
        let params = ModelParams::init(16, DEFAULT_EMBED_DIM, 1);
        let json = serde_json::to_string(&params).unwrap();
        let back: ModelParams = serde_json::from_str(&json).unwrap();
        assert_eq!(params, back);
    }

    #[test]
    fn flat_layout_round_trips() {
        let params = ModelParams::init(5, 7, 2);
        let flat = params.to_flat();
        assert_eq!(flat.len(), params.flat_len());
        let mut other = ModelParams::init(5, 7, 99);
        other.set_from_flat(&flat);
        assert_eq!(other, params);

        let [a, b, c, d] = params.scalar_indices();
        assert_eq!(flat[a], params.log_alpha_txt);
        assert_eq!(flat[b], params.log_alpha_img);
        assert_eq!(flat[c], params.log_kappa);
        assert_eq!(flat[d], params.log_inv_temperature);
        assert!(params.is_weight_index(0));
        assert!(!params.is_weight_index(params.text_encoder.weight.len()));
        assert!(!params.is_weight_index(a));
        assert_eq!(params.param_label(c), "log_kappa");
    }

    #[test]
    fn split_is_deterministic_and_balanced() {
        let cfg = GeneratorConfig {
            num_quadruplets: 100,
            ..Default::default()
        };
        let corpus = generate(&cfg).unwrap();
        let (train, held) = split_corpus(&corpus, 0.2);
        assert_eq!(train.len(), 80);
        assert_eq!(held.len(), 20);
        for c in 0..cfg.num_concepts as u32 {
            assert!(held.iter().filter(|q| q.concept_id == c).count() >= 1);
        }
    }
}
