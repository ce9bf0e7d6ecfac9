//! Mann-Whitney U with rank-biserial effect size, the two-sample KS test
//! and ECDF points on two skewed samples.

use polvis::stats::{ecdf, ks_two_sample, mann_whitney, significance_stars, BootstrapConfig, MannWhitneyOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};

fn main() -> polvis::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let dem: Vec<f64> = (0..120).map(|_| LogNormal::new(3.0, 1.0).unwrap().sample(&mut rng)).collect();
    let rep: Vec<f64> = (0..110).map(|_| LogNormal::new(3.4, 1.0).unwrap().sample(&mut rng)).collect();
    let opts = MannWhitneyOptions::default();
    let mw = mann_whitney(&rep, &dem, &opts)?;
    println!(
        "Mann-Whitney U {:.0}, p {:.2e}{}, r {:.3} [{:.3}, {:.3}]",
        mw.statistic,
        mw.p_value,
        significance_stars(mw.p_value),
        mw.effect_size,
        mw.ci_low,
        mw.ci_high
    );
    let ks = ks_two_sample(&rep, &dem, &BootstrapConfig::default())?;
    println!("KS D {:.3}, p {:.2e} [{:.3}, {:.3}]", ks.statistic, ks.p_value, ks.ci_low, ks.ci_high);

    let small = mann_whitney(&[1.0, 4.0, 6.0], &[2.0, 3.0, 5.0, 7.0], &opts)?;
    println!("exact p for n = 3, 4: {:.4}", small.p_exact.unwrap());

    let e = ecdf(&rep)?;
    for q in [10.0, 30.0, 100.0] {
        println!("F_rep({q}) = {:.3}", e.eval(q));
    }
    Ok(())
}
