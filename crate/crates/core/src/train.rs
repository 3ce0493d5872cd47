//! Optimization of the parameter store under the combined objective, with
//! gradient verification and ablation grids.
//!
//! The forward pass is written once over [`Scalar`] and instantiated twice:
//! with [`Var`] to obtain gradients through the reverse-mode tape, and with
//! plain `f64` for the finite-difference oracle in [`gradient_check`]. The
//! optimizer is AdamW-style (per-parameter adaptive steps, decoupled weight
//! decay applied to encoder weight matrices only), with a plain SGD mode
//! whose update is exactly `-lr * gradient`.

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Tape, Var};
use crate::data::{split_corpus, DataError, ModelParams, Quadruplet};
use crate::eval::{
    chain_satisfaction, estimate_boundaries, eval_retrieval_suite, mean_distances, root_feature,
    typed_embeddings, EvalError, RetrievalReport, DEFAULT_BOUNDARY_ALPHA,
};
use crate::geometry::kernel as geom;
use crate::geometry::{KAPPA_MAX, KAPPA_MIN};
use crate::loss::kernel::{self as loss_kernel, GeomBackend, QuadPoints};
use crate::loss::{Backend, LossConfig, LossError, TermToggles, MIN_TEMPERATURE};
use crate::scalar::Scalar;
use crate::ContentType;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid train config: {0}")]
    Config(String),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("training diverged at epoch {epoch}, step {step}: loss is not finite")]
    Diverged { epoch: usize, step: usize },
    #[error("unknown ablation variant: {0}")]
    UnknownVariant(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    /// Adam with decoupled weight decay, betas (0.9, 0.98).
    #[default]
    AdamW,
    /// Plain gradient descent; the parameter delta is exactly `-lr * grad`.
    Sgd,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.98;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Decoupled weight decay; never applied to gains, biases, or the
    /// log-space scalars.
    pub weight_decay: f64,
    pub loss: LossConfig,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub early_stop_patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 120,
            batch_size: 32,
            learning_rate: 1e-3,
            weight_decay: 0.2,
            loss: LossConfig::default(),
            optimizer: OptimizerKind::AdamW,
            seed: 0,
            early_stop_patience: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size < 2 {
            return Err(TrainError::Config(format!(
                "batch_size must be >= 2, got {}",
                self.batch_size
            )));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::Config("learning_rate must be >= 0".into()));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(TrainError::Config("weight_decay must be >= 0".into()));
        }
        self.loss.validate()?;
        Ok(())
    }
}

/// Training outcome: loss curves, final parameters, and the hierarchy
/// statistics of the training corpus under those parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub seed: u64,
    pub epochs_run: usize,
    pub epoch_losses: Vec<f64>,
    pub epoch_contrastive: Vec<f64>,
    pub epoch_entailment: Vec<f64>,
    /// Mean distance from the root per content type, in [`ContentType`] order.
    pub mean_distances: [f64; 4],
    /// Fraction of training quadruplets with strictly ordered radii.
    pub chain_satisfaction: f64,
    pub final_params: ModelParams,
}

/// Structured view over a flat parameter slice; `T` is either `f64` or a
/// tape variable.
struct ParamView<'a, T> {
    text_w: &'a [T],
    text_b: &'a [T],
    img_w: &'a [T],
    img_b: &'a [T],
    log_alpha_txt: T,
    log_alpha_img: T,
    log_kappa: T,
    log_inv_temperature: T,
    feature_dim: usize,
    embed_dim: usize,
}

impl<'a, T: Scalar> ParamView<'a, T> {
    fn from_flat(flat: &'a [T], feature_dim: usize, embed_dim: usize) -> Self {
        let w = feature_dim * embed_dim;
        let b = embed_dim;
        ParamView {
            text_w: &flat[..w],
            text_b: &flat[w..w + b],
            img_w: &flat[w + b..2 * w + b],
            img_b: &flat[2 * w + b..2 * (w + b)],
            log_alpha_txt: flat[2 * (w + b)],
            log_alpha_img: flat[2 * (w + b) + 1],
            log_kappa: flat[2 * (w + b) + 2],
            log_inv_temperature: flat[2 * (w + b) + 3],
            feature_dim,
            embed_dim,
        }
    }

    /// `alpha * (W x + b)` with the raw features entering as constants.
    fn encode(&self, features: &[f64], role: ContentType) -> Vec<T> {
        debug_assert_eq!(features.len(), self.feature_dim);
        let (w, b, alpha) = if role.is_text() {
            (self.text_w, self.text_b, self.log_alpha_txt.exp())
        } else {
            (self.img_w, self.img_b, self.log_alpha_img.exp())
        };
        let mut out = Vec::with_capacity(self.embed_dim);
        for row in 0..self.embed_dim {
            let base = row * self.feature_dim;
            let mut acc = b[row];
            for (j, &x) in features.iter().enumerate() {
                acc = acc + w[base + j].scale(x);
            }
            out.push(acc * alpha);
        }
        out
    }

    fn embed_quad(&self, quad: &Quadruplet, backend: Backend, kappa: T) -> QuadPoints<T> {
        let mut points: [Vec<T>; 4] = Default::default();
        for role in ContentType::ALL {
            let tangent = self.encode(quad.feature(role), role);
            points[role.index()] = match backend {
                Backend::Hyperbolic => geom::exp_map_origin(&tangent, kappa),
                Backend::Euclidean => tangent,
            };
        }
        QuadPoints { points }
    }
}

/// Contrastive and entailment loss values for one batch.
fn forward_parts<T: Scalar>(
    view: &ParamView<'_, T>,
    batch: &[&Quadruplet],
    cfg: &LossConfig,
) -> (T, T) {
    let kappa = view.log_kappa.exp();
    let inv_tau = view.log_inv_temperature.exp();
    let geom_backend = match cfg.backend {
        Backend::Hyperbolic => GeomBackend::Hyperbolic { kappa },
        Backend::Euclidean => GeomBackend::Euclidean,
    };
    let quads: Vec<QuadPoints<T>> = batch
        .iter()
        .map(|q| view.embed_quad(q, cfg.backend, kappa))
        .collect();
    let contrastive = loss_kernel::safety_contrastive(&geom_backend, &quads, inv_tau, cfg);
    let entailment = loss_kernel::safety_entailment(&geom_backend, &quads, cfg);
    (contrastive, entailment)
}

/// Total batch loss at plain `f64`; the finite-difference side of the
/// gradient check.
fn batch_loss_f64(params: &ModelParams, batch: &[&Quadruplet], cfg: &LossConfig) -> f64 {
    let flat = params.to_flat();
    let view = ParamView::from_flat(&flat, params.feature_dim(), params.embed_dim());
    let (c, e) = forward_parts(&view, batch, cfg);
    c + e
}

struct BatchStep {
    total: f64,
    contrastive: f64,
    entailment: f64,
    gradients: Vec<f64>,
}

/// One differentiated forward pass; gradients are in flat parameter order.
fn loss_and_gradients(params: &ModelParams, batch: &[&Quadruplet], cfg: &LossConfig) -> BatchStep {
    let flat = params.to_flat();
    let tape = Tape::with_capacity(1 << 20);
    let vars: Vec<Var<'_>> = flat.iter().map(|&v| tape.var(v)).collect();
    let view = ParamView::from_flat(&vars, params.feature_dim(), params.embed_dim());
    let (contrastive, entailment) = forward_parts(&view, batch, cfg);
    let total = contrastive + entailment;
    let grads = total.backward();
    BatchStep {
        total: total.value(),
        contrastive: contrastive.value(),
        entailment: entailment.value(),
        gradients: (0..flat.len()).map(|i| grads.by_index(i)).collect(),
    }
}

struct Optimizer {
    kind: OptimizerKind,
    learning_rate: f64,
    weight_decay: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: usize,
}

impl Optimizer {
    fn new(cfg: &TrainConfig, dim: usize) -> Self {
        Optimizer {
            kind: cfg.optimizer,
            learning_rate: cfg.learning_rate,
            weight_decay: cfg.weight_decay,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }

    fn step(&mut self, params: &ModelParams, flat: &mut [f64], grads: &[f64]) {
        let lr = self.learning_rate;
        match self.kind {
            OptimizerKind::Sgd => {
                for i in 0..flat.len() {
                    flat[i] -= lr * grads[i];
                    if self.weight_decay > 0.0 && params.is_weight_index(i) {
                        flat[i] -= lr * self.weight_decay * flat[i];
                    }
                }
            }
            OptimizerKind::AdamW => {
                self.t += 1;
                let bc1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
                let bc2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
                for i in 0..flat.len() {
                    let g = grads[i];
                    self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * g;
                    self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * g * g;
                    let m_hat = self.m[i] / bc1;
                    let v_hat = self.v[i] / bc2;
                    flat[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
                    if self.weight_decay > 0.0 && params.is_weight_index(i) {
                        flat[i] -= lr * self.weight_decay * flat[i];
                    }
                }
            }
        }
    }
}

/// Re-clamp the log-space scalars after an optimizer step: curvature stays
/// in `[KAPPA_MIN, KAPPA_MAX]`, temperature stays `>= MIN_TEMPERATURE`.
fn clamp_scalars(params: &ModelParams, flat: &mut [f64]) {
    let [_, _, kappa_idx, inv_tau_idx] = params.scalar_indices();
    flat[kappa_idx] = flat[kappa_idx].clamp(KAPPA_MIN.ln(), KAPPA_MAX.ln());
    flat[inv_tau_idx] = flat[inv_tau_idx].min((1.0 / MIN_TEMPERATURE).ln());
}

/// Train `params` on `corpus`, returning the loss curves and the final
/// hierarchy statistics of the training corpus.
pub fn train(
    corpus: &[Quadruplet],
    params: ModelParams,
    cfg: &TrainConfig,
) -> Result<TrainReport, TrainError> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(TrainError::Config("corpus is empty".into()));
    }
    let mut params = params;
    let mut flat = params.to_flat();
    let mut optimizer = Optimizer::new(cfg, flat.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut epoch_contrastive = Vec::with_capacity(cfg.epochs);
    let mut epoch_entailment = Vec::with_capacity(cfg.epochs);
    let mut best_loss = f64::INFINITY;
    let mut stale_epochs = 0usize;
    let mut epochs_run = 0usize;

    let mut indices: Vec<usize> = (0..corpus.len()).collect();
    for epoch in 0..cfg.epochs {
        indices.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut contrastive_sum = 0.0;
        let mut entailment_sum = 0.0;
        let mut examples = 0usize;
        for (step, chunk) in indices.chunks(cfg.batch_size).enumerate() {
            if chunk.len() < 2 && cfg.loss.terms.any_contrastive() {
                continue;
            }
            let batch: Vec<&Quadruplet> = chunk.iter().map(|&i| &corpus[i]).collect();
            let result = loss_and_gradients(&params, &batch, &cfg.loss);
            if !result.total.is_finite() {
                return Err(TrainError::Diverged { epoch, step });
            }
            optimizer.step(&params, &mut flat, &result.gradients);
            clamp_scalars(&params, &mut flat);
            params.set_from_flat(&flat);

            loss_sum += result.total * chunk.len() as f64;
            contrastive_sum += result.contrastive * chunk.len() as f64;
            entailment_sum += result.entailment * chunk.len() as f64;
            examples += chunk.len();
        }
        if examples == 0 {
            return Err(TrainError::Config(
                "no usable batches (corpus smaller than 2?)".into(),
            ));
        }
        let epoch_loss = loss_sum / examples as f64;
        epoch_losses.push(epoch_loss);
        epoch_contrastive.push(contrastive_sum / examples as f64);
        epoch_entailment.push(entailment_sum / examples as f64);
        epochs_run = epoch + 1;

        if let Some(patience) = cfg.early_stop_patience {
            if epoch_loss < best_loss - 1e-12 {
                best_loss = epoch_loss;
                stale_epochs = 0;
            } else {
                stale_epochs += 1;
                if stale_epochs > patience {
                    break;
                }
            }
        }
    }

    let embedded = params.embed_corpus(corpus, cfg.loss.backend);
    let typed = typed_embeddings(&embedded);
    let root = root_feature(&typed)?;
    let mu = mean_distances(&typed, &root)?;
    let chain = chain_satisfaction(&embedded, &root)?;

    Ok(TrainReport {
        seed: cfg.seed,
        epochs_run,
        epoch_losses,
        epoch_contrastive,
        epoch_entailment,
        mean_distances: mu,
        chain_satisfaction: chain,
        final_params: params,
    })
}

/// One parameter's analytic/numeric gradient comparison.
#[derive(Debug, Clone, Serialize)]
pub struct GradCheckEntry {
    pub label: String,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

/// Gradient check outcome over every learnable parameter.
#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub fd_step: f64,
    pub max_rel_error: f64,
    pub worst: String,
    pub entries: Vec<GradCheckEntry>,
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "gradient check: {} params, max rel error {:.3e} ({})",
            self.entries.len(),
            self.max_rel_error,
            self.worst
        )
    }
}

/// Denominator floor for the gradient-check relative error; gradient
/// differences below this scale are dominated by finite-difference roundoff.
const GRAD_CHECK_FLOOR: f64 = 1e-3;

/// Compare reverse-mode gradients of the total loss against central finite
/// differences for every parameter, including the log-space scalars.
pub fn gradient_check(
    params: &ModelParams,
    batch: &[&Quadruplet],
    cfg: &LossConfig,
    fd_step: f64,
) -> GradCheckReport {
    let analytic = loss_and_gradients(params, batch, cfg).gradients;
    let flat = params.to_flat();
    let mut entries = Vec::with_capacity(flat.len());
    let mut max_rel_error = 0.0;
    let mut worst = String::new();
    for i in 0..flat.len() {
        let mut perturbed = params.clone();
        let mut plus = flat.clone();
        plus[i] += fd_step;
        perturbed.set_from_flat(&plus);
        let up = batch_loss_f64(&perturbed, batch, cfg);
        let mut minus = flat.clone();
        minus[i] -= fd_step;
        perturbed.set_from_flat(&minus);
        let down = batch_loss_f64(&perturbed, batch, cfg);
        let numeric = (up - down) / (2.0 * fd_step);
        let rel_error = (analytic[i] - numeric).abs()
            / analytic[i].abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
        if rel_error > max_rel_error {
            max_rel_error = rel_error;
            worst = params.param_label(i);
        }
        entries.push(GradCheckEntry {
            label: params.param_label(i),
            analytic: analytic[i],
            numeric,
            rel_error,
        });
    }
    GradCheckReport {
        fd_step,
        max_rel_error,
        worst,
        entries,
    }
}

/// Named loss-term ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossVariant {
    Full,
    WithoutEntailment,
    WithoutSafetyEntailment,
}

impl LossVariant {
    /// Parse a variant name; accepts `full`, `wo-ent`, `wo-s-ent` and the
    /// spelled-out forms.
    pub fn from_name(name: &str) -> Result<Self, TrainError> {
        let canon = name
            .trim()
            .to_lowercase()
            .replace("w/o", "wo")
            .replace([' ', '_', '/'], "-");
        match canon.as_str() {
            "full" => Ok(LossVariant::Full),
            "wo-ent" | "without-entailment" => Ok(LossVariant::WithoutEntailment),
            "wo-s-ent" | "without-safety-entailment" => Ok(LossVariant::WithoutSafetyEntailment),
            _ => Err(TrainError::UnknownVariant(name.to_string())),
        }
    }

    pub fn toggles(self) -> TermToggles {
        match self {
            LossVariant::Full => TermToggles::default(),
            LossVariant::WithoutEntailment => TermToggles::without_entailment(),
            LossVariant::WithoutSafetyEntailment => TermToggles::without_safety_entailment(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LossVariant::Full => "full",
            LossVariant::WithoutEntailment => "wo-ent",
            LossVariant::WithoutSafetyEntailment => "wo-s-ent",
        }
    }
}

/// One row of an ablation grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationVariant {
    pub name: String,
    pub variant: LossVariant,
    pub eta: f64,
    pub backend: Backend,
    pub seed: u64,
}

impl AblationVariant {
    pub fn new(variant: LossVariant, eta: f64, backend: Backend, seed: u64) -> Self {
        let backend_tag = match backend {
            Backend::Hyperbolic => "hyp",
            Backend::Euclidean => "euc",
        };
        AblationVariant {
            name: format!("{}/eta={eta}/{backend_tag}/seed={seed}", variant.name()),
            variant,
            eta,
            backend,
            seed,
        }
    }
}

/// Summary of one ablation run: final hierarchy statistics plus the
/// retrieval table on the held-out split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub variant: LossVariant,
    pub eta: f64,
    pub backend: Backend,
    pub seed: u64,
    pub final_loss: f64,
    pub mean_distances: [f64; 4],
    pub chain_satisfaction: f64,
    pub retrieval: RetrievalReport,
}

/// Train and evaluate every variant on an identical corpus split and
/// budget; only the seeds and the varied loss settings differ.
pub fn ablation_grid(
    corpus: &[Quadruplet],
    embed_dim: usize,
    base: &TrainConfig,
    variants: &[AblationVariant],
    holdout_fraction: f64,
    ks: &[usize],
) -> Result<Vec<AblationRow>, TrainError> {
    base.validate()?;
    if corpus.is_empty() {
        return Err(TrainError::Config("corpus is empty".into()));
    }
    let (train_split, held_split) = split_corpus(corpus, holdout_fraction);
    let feature_dim = corpus[0].feature_dim();

    let mut rows = Vec::with_capacity(variants.len());
    for variant in variants {
        let mut cfg = base.clone();
        cfg.seed = variant.seed;
        cfg.loss.terms = variant.variant.toggles();
        cfg.loss.eta = variant.eta;
        cfg.loss.backend = variant.backend;

        let params = ModelParams::init(feature_dim, embed_dim, variant.seed);
        let report = train(&train_split, params, &cfg)?;

        let trained = &report.final_params;
        let train_embedded = trained.embed_corpus(&train_split, cfg.loss.backend);
        let boundaries = estimate_boundaries(
            &typed_embeddings(&train_embedded),
            DEFAULT_BOUNDARY_ALPHA,
            match cfg.loss.backend {
                Backend::Hyperbolic => trained.kappa(),
                Backend::Euclidean => 1.0,
            },
        )?;
        let retrieval =
            eval_retrieval_suite(trained, cfg.loss.backend, &held_split, &boundaries, ks)?;

        rows.push(AblationRow {
            name: variant.name.clone(),
            variant: variant.variant,
            eta: variant.eta,
            backend: variant.backend,
            seed: variant.seed,
            final_loss: *report.epoch_losses.last().expect("at least one epoch"),
            mean_distances: report.mean_distances,
            chain_satisfaction: report.chain_satisfaction,
            retrieval,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate, GeneratorConfig};

    fn tiny_corpus(n: usize, seed: u64) -> Vec<Quadruplet> {
        generate(&GeneratorConfig {
            num_quadruplets: n,
            feature_dim: 6,
            num_concepts: 2,
            seed,
            ..Default::default()
        })
        .unwrap()
    }

    fn tiny_config() -> TrainConfig {
        TrainConfig {
            epochs: 3,
            batch_size: 4,
            learning_rate: 5e-3,
            weight_decay: 0.2,
            ..Default::default()
        }
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let corpus = tiny_corpus(8, 1);
        let params = ModelParams::init(6, 8, 1);
        // One full batch per epoch, so the loss sees identical data each time.
        let cfg = TrainConfig {
            learning_rate: 0.0,
            weight_decay: 0.0,
            batch_size: 8,
            ..tiny_config()
        };
        let report = train(&corpus, params.clone(), &cfg).unwrap();
        assert_eq!(report.final_params, params);
        // Within-batch order still varies with the shuffle, which perturbs
        // the summation order by an ulp.
        for w in report.epoch_losses.windows(2) {
            assert!((w[0] - w[1]).abs() < 1e-12 * w[0].abs());
        }
    }

    #[test]
    fn sgd_step_is_exactly_lr_times_gradient() {
        let corpus = tiny_corpus(4, 2);
        let params = ModelParams::init(6, 8, 2);
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 4,
            learning_rate: 1e-3,
            weight_decay: 0.0,
            optimizer: OptimizerKind::Sgd,
            ..Default::default()
        };
        // The single epoch sees the whole corpus as one batch; the shuffle
        // does not change its contents.
        let batch: Vec<&Quadruplet> = corpus.iter().collect();
        let grads = loss_and_gradients(&params, &batch, &cfg.loss).gradients;
        let report = train(&corpus, params.clone(), &cfg).unwrap();
        let before = params.to_flat();
        let after = report.final_params.to_flat();
        let [_, _, kappa_idx, inv_tau_idx] = params.scalar_indices();
        for i in 0..before.len() {
            if i == kappa_idx || i == inv_tau_idx {
                continue; // may be clamped
            }
            let expected = before[i] - cfg.learning_rate * grads[i];
            assert!(
                (after[i] - expected).abs() < 1e-12,
                "param {i}: {} vs {}",
                after[i],
                expected
            );
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let corpus = tiny_corpus(4, 3);
        let batch: Vec<&Quadruplet> = corpus.iter().collect();
        let params = ModelParams::init(6, 8, 3);
        for cfg in [
            LossConfig::default(),
            LossConfig {
                backend: Backend::Euclidean,
                ..Default::default()
            },
        ] {
            let report = gradient_check(&params, &batch, &cfg, 1e-5);
            assert!(
                report.max_rel_error < 1e-4,
                "{report} (backend {:?})",
                cfg.backend
            );
        }
    }

    #[test]
    fn disabled_terms_give_zero_gradients() {
        let corpus = tiny_corpus(4, 4);
        let batch: Vec<&Quadruplet> = corpus.iter().collect();
        let params = ModelParams::init(6, 8, 4);
        let cfg = LossConfig {
            terms: TermToggles {
                contrastive_safe: false,
                contrastive_unsafe: false,
                contrastive_cross_safe_image: false,
                contrastive_cross_unsafe_image: false,
                entail_safe: false,
                entail_safety: false,
                entail_unsafe: false,
            },
            ..Default::default()
        };
        let step = loss_and_gradients(&params, &batch, &cfg);
        assert_eq!(step.total, 0.0);
        assert!(step.gradients.iter().all(|&g| g == 0.0));
        let report = gradient_check(&params, &batch, &cfg, 1e-5);
        assert_eq!(report.max_rel_error, 0.0);
    }

    #[test]
    fn clamped_curvature_stays_at_bound() {
        let params = ModelParams::init(4, 4, 5);
        let mut flat = params.to_flat();
        let [_, _, kappa_idx, inv_tau_idx] = params.scalar_indices();
        flat[kappa_idx] = KAPPA_MAX.ln();
        let mut grads = vec![0.0; flat.len()];
        grads[kappa_idx] = -1.0; // pushes log_kappa past the upper bound
        let cfg = TrainConfig {
            learning_rate: 0.5,
            weight_decay: 0.0,
            optimizer: OptimizerKind::Sgd,
            ..Default::default()
        };
        let mut optimizer = Optimizer::new(&cfg, flat.len());
        optimizer.step(&params, &mut flat, &grads);
        clamp_scalars(&params, &mut flat);
        assert_eq!(flat[kappa_idx], KAPPA_MAX.ln());

        // Temperature clamp: pushing inverse temperature above 1/MIN stops
        // exactly at the bound.
        flat[inv_tau_idx] = (1.0 / MIN_TEMPERATURE).ln() + 1.0;
        clamp_scalars(&params, &mut flat);
        assert_eq!(flat[inv_tau_idx], (1.0 / MIN_TEMPERATURE).ln());
    }

    #[test]
    fn weight_decay_skips_biases_and_scalars() {
        let params = ModelParams::init(4, 4, 6);
        let mut flat = params.to_flat();
        let before = flat.clone();
        let grads = vec![0.0; flat.len()];
        let cfg = TrainConfig {
            learning_rate: 0.1,
            weight_decay: 0.2,
            optimizer: OptimizerKind::Sgd,
            ..Default::default()
        };
        let mut optimizer = Optimizer::new(&cfg, flat.len());
        optimizer.step(&params, &mut flat, &grads);
        for i in 0..flat.len() {
            if params.is_weight_index(i) {
                assert!((flat[i] - before[i] * (1.0 - 0.1 * 0.2)).abs() < 1e-15);
            } else {
                assert_eq!(flat[i], before[i], "non-weight param {i} was decayed");
            }
        }
    }

    #[test]
    fn training_is_deterministic() {
        let corpus = tiny_corpus(12, 7);
        let cfg = tiny_config();
        let a = train(&corpus, ModelParams::init(6, 8, 7), &cfg).unwrap();
        let b = train(&corpus, ModelParams::init(6, 8, 7), &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn early_stopping_halts_on_stale_loss() {
        let corpus = tiny_corpus(8, 8);
        let cfg = TrainConfig {
            epochs: 10,
            learning_rate: 0.0,
            weight_decay: 0.0,
            early_stop_patience: Some(1),
            ..tiny_config()
        };
        let report = train(&corpus, ModelParams::init(6, 8, 8), &cfg).unwrap();
        assert!(report.epochs_run < 10, "ran {} epochs", report.epochs_run);
    }

    #[test]
    fn variant_names_parse() {
        assert_eq!(LossVariant::from_name("full").unwrap(), LossVariant::Full);
        assert_eq!(
            LossVariant::from_name("wo-ent").unwrap(),
            LossVariant::WithoutEntailment
        );
        assert_eq!(
            LossVariant::from_name("w/o S-Ent").unwrap(),
            LossVariant::WithoutSafetyEntailment
        );
        assert!(matches!(
            LossVariant::from_name("bogus"),
            Err(TrainError::UnknownVariant(_))
        ));
    }

    #[test]
    fn grid_of_one_reproduces_train() {
        let corpus = tiny_corpus(20, 9);
        let cfg = tiny_config();
        let variants = [AblationVariant::new(
            LossVariant::Full,
            1.0,
            Backend::Hyperbolic,
            cfg.seed,
        )];
        let rows = ablation_grid(&corpus, 8, &cfg, &variants, 0.25, &[1, 5]).unwrap();
        assert_eq!(rows.len(), 1);

        let (train_split, _) = split_corpus(&corpus, 0.25);
        let report = train(&train_split, ModelParams::init(6, 8, cfg.seed), &cfg).unwrap();
        assert_eq!(rows[0].final_loss, *report.epoch_losses.last().unwrap());
        assert_eq!(rows[0].mean_distances, report.mean_distances);
    }

    #[test]
    fn without_entailment_reports_zero_entailment_loss() {
        let corpus = tiny_corpus(8, 10);
        let mut cfg = tiny_config();
        cfg.loss.terms = LossVariant::WithoutEntailment.toggles();
        let report = train(&corpus, ModelParams::init(6, 8, 10), &cfg).unwrap();
        assert!(report.epoch_entailment.iter().all(|&e| e == 0.0));
        for (total, contrastive) in report.epoch_losses.iter().zip(&report.epoch_contrastive) {
            assert!((total - contrastive).abs() < 1e-12);
        }
    }
}
