//! Author-level visibility rates and the post-level overperforming outcome.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{LegislatorRecord, Platform, PostRecord};
use crate::stats::{median_sorted, percentile_sorted};

pub const SECONDS_PER_DAY: i64 = 86_400;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Percentiles {
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisibilitySummary {
    pub author_id: String,
    pub post_count: usize,
    pub total_interactions: u64,
    /// Interactions per post.
    pub v_ip: f64,
    /// Interactions per follower.
    pub v_if: Option<f64>,
    /// Interactions per post per follower.
    pub v_ipf: Option<f64>,
    pub percentiles: Percentiles,
}

/// Per-author aggregates. Follower-normalized rates are only produced for
/// platform A posts whose author has a positive follower count.
pub fn author_visibility(
    posts: &[PostRecord],
    legislators: &BTreeMap<String, LegislatorRecord>,
) -> Vec<VisibilitySummary> {
    let mut by_author: BTreeMap<&str, (Platform, Vec<u64>)> = BTreeMap::new();
    for p in posts {
        by_author
            .entry(p.author_id.as_str())
            .or_insert_with(|| (p.platform, Vec::new()))
            .1
            .push(p.total_interactions());
    }
    by_author
        .into_iter()
        .map(|(author, (platform, mut values))| {
            values.sort_unstable();
            let sorted: Vec<f64> = values.iter().map(|&v| v as f64).collect();
            let total: u64 = values.iter().sum();
            let n = values.len();
            let v_ip = total as f64 / n as f64;
            let followers = legislators
                .get(author)
                .and_then(|l| l.follower_count)
                .filter(|&f| f > 0 && platform == Platform::A);
            VisibilitySummary {
                author_id: author.to_string(),
                post_count: n,
                total_interactions: total,
                v_ip,
                v_if: followers.map(|f| total as f64 / f as f64),
                v_ipf: followers.map(|f| v_ip / f as f64),
                percentiles: Percentiles {
                    p25: percentile_sorted(&sorted, 25.0),
                    p50: percentile_sorted(&sorted, 50.0),
                    p75: percentile_sorted(&sorted, 75.0),
                },
            }
        })
        .collect()
}

/// Median of the values observed in `[t - window, t)` for every index.
///
/// `times` must be sorted ascending. Entries whose window is empty get 0.
pub fn rolling_window_medians(times: &[i64], values: &[u64], window_secs: i64) -> Vec<f64> {
    assert_eq!(times.len(), values.len());
    debug_assert!(times.windows(2).all(|w| w[0] <= w[1]));
    let mut out = Vec::with_capacity(times.len());
    let mut window: Vec<u64> = Vec::new();
    let (mut lo, mut hi) = (0usize, 0usize);
    for &t in times {
        while hi < times.len() && times[hi] < t {
            let pos = window.partition_point(|&v| v < values[hi]);
            window.insert(pos, values[hi]);
            hi += 1;
        }
        while lo < hi && times[lo] < t - window_secs {
            let pos = window.partition_point(|&v| v < values[lo]);
            window.remove(pos);
            lo += 1;
        }
        if window.is_empty() {
            out.push(0.0);
        } else {
            let w: Vec<f64> = window.iter().map(|&v| v as f64).collect();
            out.push(median_sorted(&w));
        }
    }
    out
}

/// Rolling median baseline of one author's posts over the previous
/// `window_days` days. The post itself never contributes to its own baseline,
/// nor do other posts with the same timestamp.
pub fn rolling_baseline(posts_of_author: &[PostRecord], window_days: u32) -> BTreeMap<String, f64> {
    let mut order: Vec<&PostRecord> = posts_of_author.iter().collect();
    order.sort_by(|a, b| (a.timestamp, &a.post_id).cmp(&(b.timestamp, &b.post_id)));
    let times: Vec<i64> = order.iter().map(|p| p.timestamp.timestamp()).collect();
    let values: Vec<u64> = order.iter().map(|p| p.total_interactions()).collect();
    let medians = rolling_window_medians(&times, &values, window_days as i64 * SECONDS_PER_DAY);
    order
        .iter()
        .zip(medians)
        .map(|(p, m)| (p.post_id.clone(), m))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub platform_a: f64,
    pub platform_b: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            platform_a: 10.0,
            platform_b: 100.0,
        }
    }
}

impl Thresholds {
    pub fn for_platform(&self, p: Platform) -> f64 {
        match p {
            Platform::A => self.platform_a,
            Platform::B => self.platform_b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverperformingOutcome {
    pub post_id: String,
    pub baseline: f64,
    pub score: f64,
    pub overperforms: bool,
}

pub fn overperforming_score(interactions: u64, baseline: f64, thres: f64) -> f64 {
    interactions as f64 / (baseline + thres)
}

/// Scores every post against its author's rolling baseline on the same
/// platform. Output follows the input order.
pub fn overperforming(
    posts: &[PostRecord],
    window_days: u32,
    thresholds: &Thresholds,
) -> Vec<OverperformingOutcome> {
    let mut groups: BTreeMap<(&str, Platform), Vec<usize>> = BTreeMap::new();
    for (i, p) in posts.iter().enumerate() {
        groups
            .entry((p.author_id.as_str(), p.platform))
            .or_default()
            .push(i);
    }
    let mut baselines = vec![0.0; posts.len()];
    for idx in groups.values_mut() {
        idx.sort_by(|&a, &b| {
            (posts[a].timestamp, &posts[a].post_id).cmp(&(posts[b].timestamp, &posts[b].post_id))
        });
        let times: Vec<i64> = idx.iter().map(|&i| posts[i].timestamp.timestamp()).collect();
        let values: Vec<u64> = idx.iter().map(|&i| posts[i].total_interactions()).collect();
        let med = rolling_window_medians(&times, &values, window_days as i64 * SECONDS_PER_DAY);
        for (&i, m) in idx.iter().zip(med) {
            baselines[i] = m;
        }
    }
    posts
        .iter()
        .zip(baselines)
        .map(|(p, baseline)| {
            let score = overperforming_score(
                p.total_interactions(),
                baseline,
                thresholds.for_platform(p.platform),
            );
            OverperformingOutcome {
                post_id: p.post_id.clone(),
                baseline,
                score,
                overperforms: score > 1.0,
            }
        })
        .collect()
}
