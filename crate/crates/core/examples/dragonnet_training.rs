//! Trains the three-headed network on synthetic posts and reports held-out
//! fit, the targeted effect estimate and the size of the deconfounded
//! representation.
//!
//! `cargo run --release --example dragonnet_training`

use std::collections::BTreeMap;

use polvis::corpus::{in_degree_centrality, FollowerGraph};
use polvis::dragonnet::{assemble_features, deconfounded_embeddings, targeted_cate, train, FeatureOptions, TrainConfig};
use polvis::labeling::{label_posts, DomainList};
use polvis::synthgen::{generate, SynthConfig};
use polvis::visibility::{overperforming, Thresholds};

fn main() -> polvis::Result<()> {
    let data = generate(&SynthConfig {
        n_authors: 150,
        ..SynthConfig::default()
    })?;
    let legs: BTreeMap<_, _> = data.legislators.iter().map(|l| (l.author_id.clone(), l.clone())).collect();
    let labels = label_posts(&data.posts, &DomainList::new(&data.low_credible_domains), 0.82);
    let outcomes = overperforming(&data.posts, 14, &Thresholds::default());
    let graph = FollowerGraph::new(legs.keys().cloned(), &data.edges)?;
    let centrality = in_degree_centrality(&graph);
    let features = assemble_features(
        &data.posts,
        &legs,
        &data.embeddings,
        &labels,
        &outcomes,
        Some(&centrality),
        &FeatureOptions::default(),
    )?;
    println!("{} samples, {} features", features.len(), features.dim());

    let cfg = TrainConfig {
        epochs: 5,
        ..TrainConfig::default()
    };
    for fold in train(&features, &cfg)? {
        let test = features.subset(&fold.test_idx);
        let tau = targeted_cate(&fold.params, &test.x, cfg.loss.pi_clamp)?;
        let phi = deconfounded_embeddings(&fold.params, &test.ids, &test.x)?;
        println!(
            "fold {}: auc {:.3}, loss {:.4}, targeted effect {:.3}, phi {} x {}",
            fold.fold,
            fold.metrics.auc.unwrap_or(f64::NAN),
            fold.metrics.final_loss,
            tau,
            phi.len(),
            phi.dim()
        );
    }
    println!("true effect {}", data.summary.tau);
    Ok(())
}
