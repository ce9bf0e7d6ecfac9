//! Simulates a corpus and runs every stage, as `polvis simulate` followed by
//! `polvis pipeline` would, then prints the subgroup effects.
//!
//! `cargo run --release --example causal_pipeline -- [work_dir]`

use std::path::PathBuf;

use polvis::config::PipelineConfig;
use polvis::pipeline::{read_cate, read_match_summary, run_pipeline, simulate};

fn main() -> polvis::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("polvis-example"));
    let mut cfg = PipelineConfig::default();
    let data = dir.join("data");
    cfg.paths.posts = data.join("posts.jsonl");
    cfg.paths.legislators = data.join("legislators.jsonl");
    cfg.paths.edges = Some(data.join("edges.csv"));
    cfg.paths.embeddings = Some(data.join("embeddings.bin"));
    cfg.paths.domains = data.join("domains.txt");
    cfg.paths.out_dir = dir.join("out");

    let truth = simulate(&cfg, None)?;
    let run = run_pipeline(&cfg)?;
    let (before, after, pairs) = read_match_summary(&cfg)?;
    println!("config {}, {} stages, artifacts in {}", &run.config_hash[..12], run.stages.len(), cfg.paths.out_dir.display());
    println!("{pairs} pairs, max |d| {before:.3} before and {after:.3} after matching");
    println!("true effect {:.3}, naive {:.3}", truth.tau, truth.naive);
    for row in read_cate(&cfg)? {
        match (row.cate, row.ci_low, row.ci_high) {
            (Some(c), Some(lo), Some(hi)) => println!("{:<11} n={:<5} {c:.3} [{lo:.3}, {hi:.3}]", row.subgroup, row.n_pairs),
            _ => println!("{:<11} n={:<5} withheld", row.subgroup, row.n_pairs),
        }
    }
    Ok(())
}
