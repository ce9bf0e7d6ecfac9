//! Generates a synthetic corpus with a known effect and prints its ground
//! truth next to the confounded naive estimate.
//!
//! `cargo run --release --example synthetic_corpus -- [out_dir]`

use polvis::synthgen::{generate, SynthConfig};

fn main() -> polvis::Result<()> {
    let cfg = SynthConfig {
        n_authors: 200,
        ..SynthConfig::default()
    };
    let data = generate(&cfg)?;
    let s = &data.summary;
    println!("{} posts from {} legislators, {} treated", s.n_posts, data.legislators.len(), s.n_treated);
    println!("true effect {:.3}, naive difference {:.3}", s.tau, s.naive);
    println!("{:<12} {:>7} {:>8} {:>8}", "subgroup", "posts", "cate", "att");
    for g in &s.subgroups {
        let f = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
        println!("{:<12} {:>7} {:>8} {:>8}", g.subgroup.as_str(), g.n_posts, f(g.cate), f(g.att));
    }
    if let Some(dir) = std::env::args().nth(1) {
        data.write_dir(&dir)?;
        println!("written to {dir}");
    }
    Ok(())
}
