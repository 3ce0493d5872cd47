//! Ablation grid demo: loss variants, geometry backends, and the aperture
//! scale sweep, evaluated on unsafe-to-safe redirection recall.
//!
//! ```bash
//! cargo run --release --example ablations
//! ```

use hypersafe_core::data::{generate, GeneratorConfig};
use hypersafe_core::loss::Backend;
use hypersafe_core::train::{ablation_grid, AblationVariant, LossVariant, TrainConfig};

fn main() {
    let env_usize = |k: &str, d: usize| std::env::var(k).map(|v| v.parse().unwrap()).unwrap_or(d);
    let quads = env_usize("QUADS", 300);
    let epochs = env_usize("EPOCHS", 80);

    let base = TrainConfig {
        epochs,
        ..Default::default()
    };

    println!("budget: {quads} quadruplets, {epochs} epochs\n");
    println!(
        "{:<34}{:>10}{:>10}{:>10}{:>10}",
        "variant", "T*->I+I*", "T*->I*", "chain", "loss"
    );
    for corpus_seed in [0u64, 1, 2] {
        let corpus = generate(&GeneratorConfig {
            num_quadruplets: quads,
            seed: corpus_seed,
            ..Default::default()
        })
        .unwrap();
        let variants = vec![
            AblationVariant::new(LossVariant::Full, 1.0, Backend::Hyperbolic, corpus_seed),
            AblationVariant::new(
                LossVariant::WithoutSafetyEntailment,
                1.0,
                Backend::Hyperbolic,
                corpus_seed,
            ),
            AblationVariant::new(LossVariant::WithoutEntailment, 1.0, Backend::Hyperbolic, corpus_seed),
            AblationVariant::new(LossVariant::Full, 1.0, Backend::Euclidean, corpus_seed),
        ];
        let rows = ablation_grid(&corpus, 32, &base, &variants, 0.2, &[1, 5, 10]).unwrap();
        for row in &rows {
            println!(
                "{:<34}{:>10.4}{:>10.4}{:>10.3}{:>10.4}",
                row.name,
                row.retrieval.recall("T*->I+I*", 10).unwrap(),
                row.retrieval.recall("T*->I*", 10).unwrap(),
                row.chain_satisfaction,
                row.final_loss
            );
        }
        println!();
    }

    println!("eta sweep (full, hyperbolic, seed 0):");
    let corpus = generate(&GeneratorConfig {
        num_quadruplets: quads,
        ..Default::default()
    })
    .unwrap();
    let variants: Vec<AblationVariant> = [0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75]
        .iter()
        .map(|&eta| AblationVariant::new(LossVariant::Full, eta, Backend::Hyperbolic, 0))
        .collect();
    let rows = ablation_grid(&corpus, 32, &base, &variants, 0.2, &[1, 5, 10]).unwrap();
    for row in &rows {
        println!(
            "{:<34}{:>10.4}{:>10.4}{:>10.3}{:>10.4}",
            row.name,
            row.retrieval.recall("T*->I+I*", 10).unwrap(),
            row.retrieval.recall("T*->I*", 10).unwrap(),
            row.chain_satisfaction,
            row.final_loss
        );
    }
}
