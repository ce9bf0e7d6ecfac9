//! 1:1 caliper matching in a two-dimensional embedding, covariate balance
//! before and after, and the matched effect with a bootstrap interval.

use std::collections::BTreeMap;

use ndarray::Array2;
use polvis::corpus::EmbeddingMatrix;
use polvis::matching::{caliper_match, matched_cate, standardized_differences, Subgroup};
use polvis::stats::BootstrapConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> polvis::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut treated, mut control) = (EmbeddingMatrix::new(2)?, EmbeddingMatrix::new(2)?);
    let (mut ids, mut t, mut cov, mut y) = (Vec::new(), Vec::new(), Vec::new(), BTreeMap::new());
    for i in 0..2000 {
        let z: f64 = rng.gen_range(0.0..1.0);
        // treatment grows with z, so does the baseline outcome
        let is_t = rng.gen_bool(0.2 + 0.5 * z);
        let p = 0.2 + 0.4 * z + if is_t { 0.15 } else { 0.0 };
        let id = format!("p{i:04}");
        let row = [(z * 0.5) as f32, rng.gen_range(0.0..0.05f32)];
        if is_t { treated.push(id.clone(), &row)? } else { control.push(id.clone(), &row)? }
        ids.push(id.clone());
        t.push(is_t);
        cov.push(z);
        y.insert(id, rng.gen_bool(p));
    }
    let matches = caliper_match(&treated, &control, 0.01)?;
    println!("{} treated, {} pairs, {} unmatched", treated.len(), matches.len(), matches.unmatched_treated.len());

    let covariates = Array2::from_shape_vec((ids.len(), 1), cov).unwrap();
    let bal = standardized_differences(&ids, &t, &covariates, &["z".into()], &matches)?;
    for r in &bal.rows {
        println!("{}: d before {:.3}, after {:.3}", r.covariate, r.std_diff_before, r.std_diff_after);
    }
    let est = matched_cate(&matches, &y, Subgroup::All, |_| true, 30, &BootstrapConfig::default())?;
    println!(
        "matched effect {:.3} [{:.3}, {:.3}] (true 0.15)",
        est.cate.unwrap(),
        est.ci_low.unwrap(),
        est.ci_high.unwrap()
    );
    Ok(())
}
