//! Nonparametric tests, rank correlation, ECDFs and bootstrap intervals.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::corpus::{Ethnicity, Gender, LegislatorRecord, Party};
use crate::error::{Error, Result};
use crate::visibility::VisibilitySummary;

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance (n - 1 denominator); zero for fewer than two values.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Median of sorted values; even sizes average the two central values.
pub fn median_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "median of empty slice");
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    median_sorted(&v)
}

/// Percentile `q` in [0, 100] of sorted values by linear interpolation
/// between closest ranks.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "percentile of empty slice");
    let h = (n - 1) as f64 * q / 100.0;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Midranks (1-based); ties share the average rank.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && values[idx[j]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j + 1) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

pub fn normal_two_sided_p(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            resamples: 2000,
            seed: 0,
        }
    }
}

fn resample(rng: &mut ChaCha8Rng, xs: &[f64], buf: &mut Vec<f64>) {
    buf.clear();
    buf.extend((0..xs.len()).map(|_| xs[rng.gen_range(0..xs.len())]));
}

fn percentile_interval(mut stats: Vec<f64>) -> (f64, f64) {
    stats.sort_by(f64::total_cmp);
    (percentile_sorted(&stats, 2.5), percentile_sorted(&stats, 97.5))
}

/// 95% percentile bootstrap interval of `stat` over resamples of `sample`.
pub fn bootstrap_ci<F>(sample: &[f64], stat: F, cfg: &BootstrapConfig) -> Result<(f64, f64)>
where
    F: Fn(&[f64]) -> f64,
{
    if cfg.resamples < 100 {
        return Err(Error::InvalidInput("bootstrap needs at least 100 resamples".into()));
    }
    if sample.is_empty() {
        return Err(Error::InvalidInput("empty sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut buf = Vec::with_capacity(sample.len());
    let stats = (0..cfg.resamples)
        .map(|_| {
            resample(&mut rng, sample, &mut buf);
            stat(&buf)
        })
        .collect();
    Ok(percentile_interval(stats))
}

/// Two-sample variant; `x` and `y` are resampled independently.
pub fn bootstrap_ci2<F>(x: &[f64], y: &[f64], stat: F, cfg: &BootstrapConfig) -> Result<(f64, f64)>
where
    F: Fn(&[f64], &[f64]) -> f64,
{
    if cfg.resamples < 100 {
        return Err(Error::InvalidInput("bootstrap needs at least 100 resamples".into()));
    }
    if x.is_empty() || y.is_empty() {
        return Err(Error::InvalidInput("empty sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut bx, mut by) = (Vec::with_capacity(x.len()), Vec::with_capacity(y.len()));
    let stats = (0..cfg.resamples)
        .map(|_| {
            resample(&mut rng, x, &mut bx);
            resample(&mut rng, y, &mut by);
            stat(&bx, &by)
        })
        .collect();
    Ok(percentile_interval(stats))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    /// Exact p when available, otherwise the asymptotic one.
    pub p_value: f64,
    pub p_exact: Option<f64>,
    pub p_asymptotic: f64,
    pub effect_size: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n1: usize,
    pub n2: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitneyOptions {
    /// Exact p-values are computed when `n1 + n2` is at most this.
    pub exact_threshold: usize,
    pub bootstrap: BootstrapConfig,
}

impl Default for MannWhitneyOptions {
    fn default() -> Self {
        MannWhitneyOptions {
            exact_threshold: 16,
            bootstrap: BootstrapConfig::default(),
        }
    }
}

/// U statistic of `x`: pairs with x > y plus half the ties.
pub fn mann_whitney_u(x: &[f64], y: &[f64]) -> f64 {
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let ranks = midranks(&pooled);
    let n1 = x.len() as f64;
    ranks[..x.len()].iter().sum::<f64>() - n1 * (n1 + 1.0) / 2.0
}

pub fn rank_biserial(u: f64, n1: usize, n2: usize) -> f64 {
    2.0 * u / (n1 as f64 * n2 as f64) - 1.0
}

/// Two-sided exact p from the permutation distribution of the rank sum,
/// conditional on the observed ties. Counts subsets by dynamic programming
/// over doubled midranks, which are integers.
fn mann_whitney_exact_p(ranks: &[f64], n1: usize) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let n = doubled.len();
    let max_sum: usize = doubled.iter().sum();
    // counts[k][s]: subsets of size k with doubled rank sum s
    let mut counts = vec![vec![0f64; max_sum + 1]; n1 + 1];
    counts[0][0] = 1.0;
    for &r in &doubled {
        for k in (1..=n1).rev() {
            let (lower, upper) = counts.split_at_mut(k);
            let prev = &lower[k - 1];
            let cur = &mut upper[0];
            for s in (r..=max_sum).rev() {
                cur[s] += prev[s - r];
            }
        }
    }
    let observed: usize = doubled[..n1].iter().sum();
    let center = n1 * (n + 1);
    let dist = |s: usize| s.abs_diff(center);
    let d_obs = dist(observed);
    let total: f64 = counts[n1].iter().sum();
    let extreme: f64 = counts[n1]
        .iter()
        .enumerate()
        .filter(|(s, _)| dist(*s) >= d_obs)
        .map(|(_, c)| c)
        .sum();
    (extreme / total).min(1.0)
}

fn tie_term(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mut sum = 0.0;
    let mut i = 0;
    while i < v.len() {
        let mut j = i + 1;
        while j < v.len() && v[j] == v[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        sum += t * t * t - t;
        i = j;
    }
    sum
}

/// Normal approximation with tie correction and continuity correction.
fn mann_whitney_asymptotic_p(u: f64, n1: usize, n2: usize, pooled: &[f64]) -> f64 {
    let (a, b) = (n1 as f64, n2 as f64);
    let n = a + b;
    let var = a * b / 12.0 * ((n + 1.0) - tie_term(pooled) / (n * (n - 1.0)));
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((u - a * b / 2.0).abs() - 0.5).max(0.0) / var.sqrt();
    normal_two_sided_p(z)
}

/// Mann-Whitney U test of `x` against `y`. The effect size is the
/// rank-biserial correlation, positive when `x` tends to be larger.
pub fn mann_whitney(x: &[f64], y: &[f64], opts: &MannWhitneyOptions) -> Result<TestResult> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::InvalidInput("Mann-Whitney needs two non-empty samples".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite observation".into()));
    }
    let (n1, n2) = (x.len(), y.len());
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let ranks = midranks(&pooled);
    let u = ranks[..n1].iter().sum::<f64>() - (n1 * (n1 + 1)) as f64 / 2.0;
    let p_asymptotic = mann_whitney_asymptotic_p(u, n1, n2, &pooled);
    let p_exact = (n1 + n2 <= opts.exact_threshold).then(|| mann_whitney_exact_p(&ranks, n1));
    let r = rank_biserial(u, n1, n2);
    let (lo, hi) = bootstrap_ci2(
        x,
        y,
        |a, b| rank_biserial(mann_whitney_u(a, b), a.len(), b.len()),
        &opts.bootstrap,
    )?;
    Ok(TestResult {
        statistic: u,
        p_value: p_exact.unwrap_or(p_asymptotic),
        p_exact,
        p_asymptotic,
        effect_size: r,
        // percentile intervals need not cover the point estimate
        ci_low: lo.min(r),
        ci_high: hi.max(r),
        n1,
        n2,
    })
}

/// sup |F_x - F_y| over the pooled sample.
pub fn ks_statistic(x: &[f64], y: &[f64]) -> f64 {
    let mut a = x.to_vec();
    let mut b = y.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let t = a[i].min(b[j]);
        while i < a.len() && a[i] <= t {
            i += 1;
        }
        while j < b.len() && b[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / n1 - j as f64 / n2).abs());
    }
    d
}

/// Kolmogorov survival function Q(lambda) = 2 sum (-1)^(k-1) exp(-2 k^2 lambda^2).
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = sign * (-2.0 * kf * kf * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

pub fn ks_two_sample(x: &[f64], y: &[f64], boot: &BootstrapConfig) -> Result<TestResult> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::InvalidInput("KS test needs two non-empty samples".into()));
    }
    let d = ks_statistic(x, y);
    let (n1, n2) = (x.len() as f64, y.len() as f64);
    let en = (n1 * n2 / (n1 + n2)).sqrt();
    let p = kolmogorov_q((en + 0.12 + 0.11 / en) * d);
    let (lo, hi) = bootstrap_ci2(x, y, ks_statistic, boot)?;
    Ok(TestResult {
        statistic: d,
        p_value: p,
        p_exact: None,
        p_asymptotic: p,
        effect_size: d,
        ci_low: lo.min(d),
        ci_high: hi.max(d),
        n1: x.len(),
        n2: y.len(),
    })
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            actual: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::InvalidInput("correlation needs at least two pairs".into()));
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::InvalidInput("correlation of a constant sample".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Pearson correlation of midranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            actual: y.len(),
        });
    }
    pearson(&midranks(x), &midranks(y))
}

/// Right-continuous empirical CDF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ecdf {
    /// Distinct sample values, ascending.
    pub points: Vec<f64>,
    /// F at each point.
    pub cumulative: Vec<f64>,
}

impl Ecdf {
    pub fn eval(&self, t: f64) -> f64 {
        let k = self.points.partition_point(|&p| p <= t);
        if k == 0 {
            0.0
        } else {
            self.cumulative[k - 1]
        }
    }
}

pub fn ecdf(sample: &[f64]) -> Result<Ecdf> {
    if sample.is_empty() {
        return Err(Error::InvalidInput("ECDF of empty sample".into()));
    }
    let mut v = sample.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut points = Vec::new();
    let mut cumulative = Vec::new();
    for (i, &x) in v.iter().enumerate() {
        if i + 1 < v.len() && v[i + 1] == x {
            continue;
        }
        points.push(x);
        cumulative.push((i + 1) as f64 / n);
    }
    Ok(Ecdf { points, cumulative })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    Party,
    Gender,
    Ethnicity,
    PostingFreq,
}

impl Grouping {
    pub const ALL: [Grouping; 4] = [
        Grouping::Party,
        Grouping::Gender,
        Grouping::Ethnicity,
        Grouping::PostingFreq,
    ];

    /// Labels of the (x, y) groups; the effect is positive when x is higher.
    pub fn labels(self) -> (&'static str, &'static str) {
        match self {
            Grouping::Party => ("Rep", "Dem"),
            Grouping::Gender => ("Men", "Women"),
            Grouping::Ethnicity => ("White", "NonWhite"),
            Grouping::PostingFreq => ("high", "low"),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Grouping::Party => "party",
            Grouping::Gender => "gender",
            Grouping::Ethnicity => "ethnicity",
            Grouping::PostingFreq => "posting_freq",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VisibilityDv {
    /// Interactions per post.
    Vip,
    /// Interactions per follower.
    Vif,
    /// Interactions per post per follower.
    Vipf,
    P25,
    P50,
    P75,
}

impl VisibilityDv {
    pub const ALL: [VisibilityDv; 6] = [
        VisibilityDv::Vip,
        VisibilityDv::Vif,
        VisibilityDv::Vipf,
        VisibilityDv::P25,
        VisibilityDv::P50,
        VisibilityDv::P75,
    ];

    pub fn value(self, s: &VisibilitySummary) -> Option<f64> {
        match self {
            VisibilityDv::Vip => Some(s.v_ip),
            VisibilityDv::Vif => s.v_if,
            VisibilityDv::Vipf => s.v_ipf,
            VisibilityDv::P25 => Some(s.percentiles.p25),
            VisibilityDv::P50 => Some(s.percentiles.p50),
            VisibilityDv::P75 => Some(s.percentiles.p75),
        }
    }

    pub fn is_follower_normalized(self) -> bool {
        matches!(self, VisibilityDv::Vif | VisibilityDv::Vipf)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            VisibilityDv::Vip => "V_IP",
            VisibilityDv::Vif => "V_IF",
            VisibilityDv::Vipf => "V_IPF",
            VisibilityDv::P25 => "P25",
            VisibilityDv::P50 => "P50",
            VisibilityDv::P75 => "P75",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupComparison {
    pub grouping: Grouping,
    pub dv: VisibilityDv,
    pub result: TestResult,
}

/// Splits authors into the two groups of `grouping` and compares `dv`.
/// Authors with an unknown attribute or a missing DV are left out. The
/// posting-frequency split puts authors at or below the median post count in
/// the low group.
pub fn group_samples(
    summaries: &[VisibilitySummary],
    legislators: &BTreeMap<String, LegislatorRecord>,
    grouping: Grouping,
    dv: VisibilityDv,
) -> (Vec<f64>, Vec<f64>) {
    let counts: Vec<f64> = summaries.iter().map(|s| s.post_count as f64).collect();
    let median_posts = if counts.is_empty() { 0.0 } else { median(&counts) };
    let mut x = Vec::new();
    let mut y = Vec::new();
    for s in summaries {
        let Some(v) = dv.value(s) else { continue };
        let leg = legislators.get(&s.author_id);
        let side = match grouping {
            Grouping::PostingFreq => Some(s.post_count as f64 > median_posts),
            Grouping::Party => leg.and_then(|l| match l.party {
                Party::Rep => Some(true),
                Party::Dem => Some(false),
                Party::Other => None,
            }),
            Grouping::Gender => leg.and_then(|l| match l.gender {
                Gender::Men => Some(true),
                Gender::Women => Some(false),
                Gender::Unknown => None,
            }),
            Grouping::Ethnicity => leg.and_then(|l| match l.ethnicity {
                Ethnicity::White => Some(true),
                Ethnicity::NonWhite => Some(false),
                Ethnicity::Unknown => None,
            }),
        };
        match side {
            Some(true) => x.push(v),
            Some(false) => y.push(v),
            None => {}
        }
    }
    (x, y)
}

pub fn group_compare(
    summaries: &[VisibilitySummary],
    legislators: &BTreeMap<String, LegislatorRecord>,
    grouping: Grouping,
    dv: VisibilityDv,
    opts: &MannWhitneyOptions,
) -> Result<GroupComparison> {
    let (x, y) = group_samples(summaries, legislators, grouping, dv);
    if x.is_empty() || y.is_empty() {
        let (a, b) = grouping.labels();
        return Err(Error::InvalidInput(format!(
            "empty group for {}: {a}={}, {b}={}",
            grouping.as_str(),
            x.len(),
            y.len()
        )));
    }
    Ok(GroupComparison {
        grouping,
        dv,
        result: mann_whitney(&x, &y, opts)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Platform;
    use crate::visibility::Percentiles;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn opts() -> MannWhitneyOptions {
        MannWhitneyOptions {
            exact_threshold: 16,
            bootstrap: BootstrapConfig {
                resamples: 200,
                seed: 1,
            },
        }
    }

    #[test]
    fn identical_samples_zero_effect() {
        let x = [1.0, 2.0, 2.0, 5.0];
        let r = mann_whitney(&x, &x, &opts()).unwrap();
        assert_eq!(r.effect_size, 0.0);
        assert_eq!(r.p_exact, Some(1.0));
    }

    #[test]
    fn complete_separation() {
        let r = mann_whitney(&[1.0, 2.0, 3.0], &[10.0, 11.0, 12.0], &opts()).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.effect_size, -1.0);
        // two of the 20 assignments are this extreme
        assert!((r.p_exact.unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn empty_sample_errors() {
        assert!(mann_whitney(&[], &[1.0], &opts()).is_err());
        assert!(ks_two_sample(&[1.0], &[], &BootstrapConfig::default()).is_err());
    }

    /// Enumerates every assignment of the pooled values to the x group and
    /// counts U by direct pairwise comparison.
    fn permutation_p(x: &[f64], y: &[f64]) -> f64 {
        let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
        let (n, n1) = (pooled.len(), x.len());
        let u_of = |mask: u32| {
            let mut u = 0.0;
            for i in 0..n {
                if mask >> i & 1 == 0 {
                    continue;
                }
                for j in 0..n {
                    if mask >> j & 1 == 1 {
                        continue;
                    }
                    if pooled[i] > pooled[j] {
                        u += 1.0;
                    } else if pooled[i] == pooled[j] {
                        u += 0.5;
                    }
                }
            }
            u
        };
        let center = (n1 * (n - n1)) as f64 / 2.0;
        let obs = (u_of((1u32 << n1) - 1) - center).abs();
        let (mut hit, mut total) = (0.0, 0.0);
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != n1 {
                continue;
            }
            total += 1.0;
            if (u_of(mask) - center).abs() >= obs - 1e-9 {
                hit += 1.0;
            }
        }
        hit / total
    }

    #[test]
    fn exact_p_matches_enumeration_5_5() {
        let x = [0.31, 1.72, -0.4, 2.2, 0.05];
        let y = [1.1, 2.9, 3.3, 0.8, 1.9];
        let r = mann_whitney(&x, &y, &opts()).unwrap();
        assert!((r.p_exact.unwrap() - permutation_p(&x, &y)).abs() < 1e-12);
    }

    #[test]
    fn exact_p_with_ties_matches_enumeration() {
        let x = [1.0, 2.0, 2.0, 3.0, 5.0, 5.0];
        let y = [2.0, 3.0, 3.0, 4.0, 5.0, 6.0, 6.0];
        let r = mann_whitney(&x, &y, &opts()).unwrap();
        assert!((r.p_exact.unwrap() - permutation_p(&x, &y)).abs() < 1e-12);
    }

    #[test]
    fn asymptotic_close_to_exact_at_8_8() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let nrm = Normal::new(0.0, 1.0).unwrap();
        for _ in 0..20 {
            let x: Vec<f64> = (0..8).map(|_| nrm.sample(&mut rng)).collect();
            let y: Vec<f64> = (0..8).map(|_| nrm.sample(&mut rng) + 0.5).collect();
            let r = mann_whitney(&x, &y, &opts()).unwrap();
            assert!((r.p_exact.unwrap() - r.p_asymptotic).abs() < 0.02, "{r:?}");
        }
    }

    #[test]
    fn ks_examples() {
        assert_eq!(ks_statistic(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), 0.0);
        assert_eq!(ks_statistic(&[1.0, 2.0], &[5.0, 6.0, 7.0]), 1.0);
        let r = ks_two_sample(&[1.0, 2.0], &[5.0, 6.0, 7.0], &BootstrapConfig::default()).unwrap();
        assert!(r.p_value < 1.0);
    }

    fn brute_ks(x: &[f64], y: &[f64]) -> f64 {
        let f = |s: &[f64], t: f64| s.iter().filter(|&&v| v <= t).count() as f64 / s.len() as f64;
        x.iter()
            .chain(y)
            .map(|&t| (f(x, t) - f(y, t)).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn ks_matches_brute_force_with_ties() {
        let x = [0.0, 1.0, 1.0, 2.0, 4.0, 4.0, 4.5];
        let y = [1.0, 1.0, 3.0, 4.0, 6.0];
        assert!((ks_statistic(&x, &y) - brute_ks(&x, &y)).abs() < 1e-15);
    }

    #[test]
    fn spearman_examples() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert!((spearman(&x, &[2.0, 4.0, 9.0, 10.0, 100.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&x, &[5.0, 4.0, 3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        assert!(spearman(&x, &[1.0]).is_err());
    }

    #[test]
    fn spearman_ties_by_hand() {
        // x ranks: 1, 2.5, 2.5, 4 ; y ranks: 1.5, 1.5, 3, 4
        let x = [10.0, 20.0, 20.0, 30.0];
        let y = [5.0, 5.0, 6.0, 7.0];
        let rx = [1.0, 2.5, 2.5, 4.0];
        let ry = [1.5, 1.5, 3.0, 4.0];
        let m = 2.5;
        let sxy: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - m) * (b - m)).sum();
        let sxx: f64 = rx.iter().map(|a| (a - m) * (a - m)).sum();
        let syy: f64 = ry.iter().map(|b| (b - m) * (b - m)).sum();
        let expected = sxy / (sxx * syy).sqrt();
        assert!((spearman(&x, &y).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn ecdf_examples() {
        let e = ecdf(&[5.0]).unwrap();
        assert_eq!(e.eval(4.9), 0.0);
        assert_eq!(e.eval(5.0), 1.0);
        let e = ecdf(&[1.0, 1.0, 2.0]).unwrap();
        assert!((e.eval(1.0) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(e.eval(2.0), 1.0);
        assert!(ecdf(&[]).is_err());
    }

    #[test]
    fn bootstrap_constant_and_deterministic() {
        let cfg = BootstrapConfig {
            resamples: 500,
            seed: 7,
        };
        assert_eq!(bootstrap_ci(&[3.0; 10], mean, &cfg).unwrap(), (3.0, 3.0));
        let xs: Vec<f64> = (0..30).map(|i| (i * i % 17) as f64).collect();
        assert_eq!(bootstrap_ci(&xs, mean, &cfg).unwrap(), bootstrap_ci(&xs, mean, &cfg).unwrap());
        assert!(bootstrap_ci(&xs, mean, &BootstrapConfig { resamples: 99, seed: 0 }).is_err());
    }

    #[test]
    fn bootstrap_mean_coverage() {
        let mut covered = 0;
        for trial in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + trial);
            let xs: Vec<f64> = (0..60).map(|_| rng.gen::<f64>()).collect();
            let (lo, hi) = bootstrap_ci(
                &xs,
                mean,
                &BootstrapConfig {
                    resamples: 2000,
                    seed: trial,
                },
            )
            .unwrap();
            if lo <= 0.5 && 0.5 <= hi {
                covered += 1;
            }
        }
        assert!(covered >= 90, "coverage {covered}/100");
    }

    fn summary(id: &str, posts: usize, v: f64) -> VisibilitySummary {
        VisibilitySummary {
            author_id: id.into(),
            post_count: posts,
            total_interactions: (v * posts as f64) as u64,
            v_ip: v,
            v_if: None,
            v_ipf: None,
            percentiles: Percentiles {
                p25: v,
                p50: v,
                p75: v,
            },
        }
    }

    fn leg(id: &str, party: Party) -> (String, LegislatorRecord) {
        (
            id.to_string(),
            LegislatorRecord {
                author_id: id.into(),
                party,
                gender: Gender::Unknown,
                ethnicity: Ethnicity::White,
                state: "OH".into(),
                ideology: None,
                follower_count: None,
                accounts: [Platform::A].into(),
            },
        )
    }

    #[test]
    fn posting_freq_median_split() {
        let s: Vec<_> = (1..=5).map(|k| summary(&format!("a{k}"), k, k as f64)).collect();
        let (high, low) = group_samples(&s, &BTreeMap::new(), Grouping::PostingFreq, VisibilityDv::Vip);
        assert_eq!(low, [1.0, 2.0, 3.0]);
        assert_eq!(high, [4.0, 5.0]);
    }

    #[test]
    fn one_sided_grouping_errors() {
        let s = vec![summary("a", 1, 1.0), summary("b", 2, 2.0)];
        let legs: BTreeMap<_, _> = [leg("a", Party::Dem), leg("b", Party::Dem)].into();
        assert!(group_compare(&s, &legs, Grouping::Party, VisibilityDv::Vip, &opts()).is_err());
        // gender is unknown for everyone
        assert!(group_compare(&s, &legs, Grouping::Gender, VisibilityDv::Vip, &opts()).is_err());
    }

    #[test]
    fn shifted_groups_effect_sign() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let nrm = Normal::new(0.0, 1.0).unwrap();
        let mut s = Vec::new();
        let mut legs = BTreeMap::new();
        for i in 0..60 {
            let party = if i % 2 == 0 { Party::Rep } else { Party::Dem };
            let shift = if party == Party::Rep { 1.5 } else { 0.0 };
            let id = format!("a{i}");
            s.push(summary(&id, 3, 10.0 + nrm.sample(&mut rng) + shift));
            let (k, v) = leg(&id, party);
            legs.insert(k, v);
        }
        let c = group_compare(&s, &legs, Grouping::Party, VisibilityDv::Vip, &opts()).unwrap();
        assert!(c.result.effect_size > 0.0);
        assert!(c.result.p_value < 0.01);
    }

    proptest! {
        #[test]
        fn swap_negates_effect_and_keeps_p(
            x in prop::collection::vec(0i32..20, 1..8),
            y in prop::collection::vec(0i32..20, 1..8),
        ) {
            let x: Vec<f64> = x.into_iter().map(f64::from).collect();
            let y: Vec<f64> = y.into_iter().map(f64::from).collect();
            let a = mann_whitney(&x, &y, &opts()).unwrap();
            let b = mann_whitney(&y, &x, &opts()).unwrap();
            prop_assert!((a.effect_size + b.effect_size).abs() < 1e-12);
            prop_assert!((a.p_value - b.p_value).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&a.effect_size));
            prop_assert!(a.ci_low <= a.effect_size && a.effect_size <= a.ci_high);
            let separated = x.iter().all(|a| y.iter().all(|b| a > b)) || x.iter().all(|a| y.iter().all(|b| a < b));
            prop_assert_eq!(a.effect_size.abs() == 1.0, separated);
        }

        #[test]
        fn ks_bounded_and_transform_invariant(
            x in prop::collection::vec(-5.0f64..5.0, 1..30),
            y in prop::collection::vec(-5.0f64..5.0, 1..30),
        ) {
            let d = ks_statistic(&x, &y);
            prop_assert!((0.0..=1.0).contains(&d));
            let tx: Vec<f64> = x.iter().map(|v| v.exp()).collect();
            let ty: Vec<f64> = y.iter().map(|v| v.exp()).collect();
            prop_assert!((ks_statistic(&tx, &ty) - d).abs() < 1e-12);
            prop_assert!((d - brute_ks(&x, &y)).abs() < 1e-12);
        }

        #[test]
        fn ecdf_axioms(xs in prop::collection::vec(-100.0f64..100.0, 1..50)) {
            let e = ecdf(&xs).unwrap();
            prop_assert_eq!(*e.cumulative.last().unwrap(), 1.0);
            prop_assert!(e.cumulative.windows(2).all(|w| w[0] < w[1]));
            let max = xs.iter().copied().fold(f64::MIN, f64::max);
            prop_assert_eq!(e.eval(max), 1.0);
        }
    }
}
