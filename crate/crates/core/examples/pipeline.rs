//! End-to-end demo: generate a corpus, train, and print the hierarchy
//! statistics, retrieval table, and classifier metrics.
//!
//! ```bash
//! cargo run --release --example pipeline
//! ```

use std::time::Instant;

use hypersafe_core::data::{generate, split_corpus, GeneratorConfig, ModelParams};
use hypersafe_core::eval::{
    classifier_metrics, estimate_boundaries, eval_retrieval_suite, threshold_sweep,
    typed_embeddings, ClassifierConfig, SafetyLabel, DEFAULT_BOUNDARY_ALPHA,
};
use hypersafe_core::loss::Backend;
use hypersafe_core::train::{train, TrainConfig};
use hypersafe_core::ContentType;

fn main() {
    let env_f64 = |k: &str, d: f64| std::env::var(k).map(|v| v.parse().unwrap()).unwrap_or(d);
    let env_usize = |k: &str, d: usize| std::env::var(k).map(|v| v.parse().unwrap()).unwrap_or(d);

    let gen_cfg = GeneratorConfig {
        noise_scale: env_f64("NOISE", GeneratorConfig::default().noise_scale),
        quad_scale: env_f64("QUAD", GeneratorConfig::default().quad_scale),
        unsafe_offset_scale: env_f64("OFFSET", GeneratorConfig::default().unsafe_offset_scale),
        seed: env_usize("SEED", 0) as u64,
        ..Default::default()
    };
    let train_cfg = TrainConfig {
        epochs: env_usize("EPOCHS", TrainConfig::default().epochs),
        learning_rate: env_f64("LR", TrainConfig::default().learning_rate),
        batch_size: env_usize("BATCH", TrainConfig::default().batch_size),
        ..Default::default()
    };
    let embed_dim = hypersafe_core::data::DEFAULT_EMBED_DIM;

    let corpus = generate(&gen_cfg).unwrap();
    let (train_split, held_split) = split_corpus(&corpus, 0.2);
    println!(
        "corpus: {} quadruplets ({} train / {} held out), feature dim {}",
        corpus.len(),
        train_split.len(),
        held_split.len(),
        gen_cfg.feature_dim
    );

    let params = ModelParams::init(gen_cfg.feature_dim, embed_dim, train_cfg.seed);
    let start = Instant::now();
    let report = train(&train_split, params, &train_cfg).unwrap();
    println!(
        "trained {} epochs in {:.1}s; loss {:.4} -> {:.4}",
        report.epochs_run,
        start.elapsed().as_secs_f64(),
        report.epoch_losses.first().unwrap(),
        report.epoch_losses.last().unwrap()
    );
    for e in (0..report.epochs_run).step_by(5).chain([report.epochs_run - 1]) {
        println!(
            "  epoch {e:>3}: total {:.4}  contrastive {:.4}  entailment {:.4}",
            report.epoch_losses[e], report.epoch_contrastive[e], report.epoch_entailment[e]
        );
    }
    println!(
        "final scalars: kappa {:.4}, tau {:.4}, alpha_txt {:.5}, alpha_img {:.5}",
        report.final_params.kappa(),
        report.final_params.temperature(),
        report.final_params.alpha_txt(),
        report.final_params.alpha_img()
    );

    let mu = report.mean_distances;
    println!(
        "train mean distances: T {:.4}  I {:.4}  T* {:.4}  I* {:.4}  (chain {:.3})",
        mu[0], mu[1], mu[2], mu[3], report.chain_satisfaction
    );

    let trained = &report.final_params;
    let backend = train_cfg.loss.backend;
    let train_embedded = trained.embed_corpus(&train_split, backend);
    let boundaries = estimate_boundaries(
        &typed_embeddings(&train_embedded),
        DEFAULT_BOUNDARY_ALPHA,
        trained.kappa(),
    )
    .unwrap();
    println!("boundaries tau: {:?}", boundaries.tau);

    let held_embedded = trained.embed_corpus(&held_split, backend);
    let held_typed = typed_embeddings(&held_embedded);
    let held_chain =
        hypersafe_core::eval::chain_satisfaction(&held_embedded, &boundaries.root).unwrap();
    println!("held-out chain satisfaction: {held_chain:.3}");

    let retrieval =
        eval_retrieval_suite(trained, backend, &held_split, &boundaries, &[1, 5, 10]).unwrap();
    println!("\n{retrieval}");

    let labeled: Vec<_> = held_typed
        .iter()
        .map(|(e, ct)| {
            (
                e.clone(),
                if ct.is_unsafe() {
                    SafetyLabel::Unsafe
                } else {
                    SafetyLabel::Safe
                },
            )
        })
        .collect();
    let threshold = boundaries.midpoint_threshold();
    let metrics = classifier_metrics(
        &labeled,
        &boundaries.root,
        &ClassifierConfig::new(threshold).unwrap(),
    )
    .unwrap();
    println!("classifier at midpoint threshold {threshold:.4}: {metrics}");

    let safe_mu = (boundaries.mu_of(ContentType::SafeText) + boundaries.mu_of(ContentType::SafeImage)) / 2.0;
    let unsafe_mu =
        (boundaries.mu_of(ContentType::UnsafeText) + boundaries.mu_of(ContentType::UnsafeImage)) / 2.0;
    let gap = unsafe_mu - safe_mu;
    let thresholds: Vec<f64> = [-0.5, -0.25, 0.0, 0.25, 0.5]
        .iter()
        .map(|f| threshold + f * gap)
        .collect();
    println!("\nthreshold sweep:");
    for (t, m) in threshold_sweep(&labeled, &boundaries.root, &thresholds).unwrap() {
        println!("  {t:.4}: {m}");
    }
}
