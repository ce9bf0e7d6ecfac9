//! Synthetic corpora with known treatment effects.
//!
//! Each post carries a latent topic vector `z`. Its first coordinate, shifted
//! by the author's party, drives both the chance of an uncivil post and the
//! baseline chance of overperforming. Effects use the risk-difference scale:
//! `p1 = p0 + tau_i` with `mean(tau_i) = tau`. The realized outcome is
//! encoded in interaction counts relative to the author's rolling median, so
//! the ordinary outcome computation recovers it exactly.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::{DateTime, Duration, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::corpus::{
    write_edges, write_legislators, write_posts, EmbeddingMatrix, Ethnicity, Gender, InteractionBreakdown,
    LegislatorRecord, Party, Platform, PostRecord, StudyWindow,
};
use crate::error::{Error, Result};
use crate::matching::{subgroup_masks, Subgroup};
use crate::stats::median;
use crate::visibility::Thresholds;

const P_MIN: f64 = 0.02;
const P_MAX: f64 = 0.98;
const STATES: [&str; 20] = [
    "CA", "TX", "NY", "FL", "PA", "OH", "IL", "GA", "NC", "MI", "NJ", "VA", "WA", "AZ", "MA", "TN", "IN", "MO", "MD", "WI",
];
const VOCAB: [&str; 24] = [
    "the", "bill", "vote", "today", "our", "people", "congress", "will", "families", "jobs", "health", "care", "tax",
    "border", "climate", "support", "act", "state", "county", "must", "protect", "plan", "economy", "rights",
];
const CREDIBLE: [&str; 6] = ["apnews.com", "reuters.com", "house.gov", "senate.gov", "npr.org", "pbs.org"];
const LOW_CREDIBLE: [&str; 5] = [
    "dailywire-example.com",
    "truthfeed-example.com",
    "patriotpost-example.net",
    "occupydem-example.com",
    "bipartisanreport-example.com",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_authors: usize,
    /// Posts per author follow a gamma-Poisson mixture with this mean.
    pub posts_per_author_mean: f64,
    pub posts_per_author_shape: f64,
    pub embedding_dim: usize,
    pub embedding_noise: f64,
    /// Confounder strength c.
    pub confounder_strength: f64,
    /// Average treatment effect tau on the risk-difference scale.
    pub true_cate: f64,
    pub treatment_base_rate: f64,
    /// tau_i = tau + asymmetry * (rep_i - mean rep).
    pub party_effect_asymmetry: f64,
    pub n_states: usize,
    pub other_party_rate: f64,
    pub url_rate: f64,
    pub low_credible_rate_dem: f64,
    pub low_credible_rate_rep: f64,
    pub mean_words: f64,
    pub sd_words: f64,
    pub overlap_rate: f64,
    pub author_effect_sd: f64,
    pub state_effect_sd: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_authors: 500,
            posts_per_author_mean: 40.0,
            posts_per_author_shape: 4.0,
            embedding_dim: 16,
            embedding_noise: 0.02,
            confounder_strength: 2.0,
            true_cate: 0.3,
            treatment_base_rate: 0.2,
            party_effect_asymmetry: 0.0,
            n_states: 10,
            other_party_rate: 0.02,
            url_rate: 0.3,
            low_credible_rate_dem: 0.05,
            low_credible_rate_rep: 0.15,
            mean_words: 20.0,
            sd_words: 6.0,
            overlap_rate: 0.6,
            author_effect_sd: 0.5,
            state_effect_sd: 0.3,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synth config: {m}")));
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if self.n_authors < 2 {
            return bad("n_authors must be at least 2");
        }
        if self.embedding_dim == 0 {
            return bad("embedding_dim must be at least 1");
        }
        if !(self.posts_per_author_mean > 0.0) || !(self.posts_per_author_shape > 0.0) {
            return bad("posts per author mean and shape must be positive");
        }
        if !(self.treatment_base_rate > 0.0 && self.treatment_base_rate < 1.0) {
            return bad("treatment_base_rate must lie in (0, 1)");
        }
        if !(self.confounder_strength >= 0.0) || !self.confounder_strength.is_finite() {
            return bad("confounder_strength must be finite and non-negative");
        }
        if !(self.embedding_noise >= 0.0) || !(self.sd_words >= 0.0) || !(self.mean_words > 0.0) {
            return bad("noise and word-count parameters must be non-negative");
        }
        if !(self.author_effect_sd >= 0.0) || !(self.state_effect_sd >= 0.0) {
            return bad("random-effect sds must be non-negative");
        }
        if self.n_states == 0 || self.n_states > STATES.len() {
            return bad(&format!("n_states must be in 1..={}", STATES.len()));
        }
        for (name, v) in [
            ("other_party_rate", self.other_party_rate),
            ("url_rate", self.url_rate),
            ("low_credible_rate_dem", self.low_credible_rate_dem),
            ("low_credible_rate_rep", self.low_credible_rate_rep),
            ("overlap_rate", self.overlap_rate),
        ] {
            if !unit(v) {
                return bad(&format!("{name} must lie in [0, 1]"));
            }
        }
        if !self.true_cate.is_finite() || !self.party_effect_asymmetry.is_finite() {
            return bad("effect parameters must be finite");
        }
        let spread = self.true_cate.abs() + self.party_effect_asymmetry.abs();
        if spread >= P_MAX - P_MIN {
            return bad("true_cate and asymmetry leave no room for valid probabilities");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub post_id: String,
    pub author_id: String,
    pub propensity: f64,
    pub p0: f64,
    pub p1: f64,
    pub tau: f64,
    pub t: bool,
    pub y: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupTruth {
    pub subgroup: Subgroup,
    pub n_posts: usize,
    pub n_treated: usize,
    /// Mean of p1 - p0 over the subgroup's posts.
    pub cate: Option<f64>,
    /// The same mean over treated posts only.
    pub att: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSummary {
    pub tau: f64,
    pub n_posts: usize,
    pub n_treated: usize,
    pub naive: f64,
    pub subgroups: Vec<SubgroupTruth>,
    pub config: SynthConfig,
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub posts: Vec<PostRecord>,
    pub legislators: Vec<LegislatorRecord>,
    pub edges: Vec<(String, String)>,
    pub embeddings: EmbeddingMatrix,
    pub low_credible_domains: Vec<String>,
    pub truth: Vec<TruthRecord>,
    pub summary: TruthSummary,
}

/// File names written by [`SynthDataset::write_dir`].
pub mod files {
    pub const POSTS: &str = "posts.jsonl";
    pub const LEGISLATORS: &str = "legislators.jsonl";
    pub const EDGES: &str = "edges.csv";
    pub const EMBEDDINGS: &str = "embeddings.bin";
    pub const DOMAINS: &str = "domains.txt";
    pub const TRUTH: &str = "truth.jsonl";
    pub const TRUTH_SUMMARY: &str = "truth_summary.json";
}

impl SynthDataset {
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_posts(dir.join(files::POSTS), &self.posts)?;
        write_legislators(dir.join(files::LEGISLATORS), &self.legislators)?;
        write_edges(dir.join(files::EDGES), &self.edges)?;
        self.embeddings.write_binary(dir.join(files::EMBEDDINGS))?;
        let domains = dir.join(files::DOMAINS);
        let mut text = String::from("# low-credibility domains\n");
        for d in &self.low_credible_domains {
            text.push_str(d);
            text.push('\n');
        }
        std::fs::write(&domains, text).map_err(|e| Error::io(&domains, e))?;
        let truth = dir.join(files::TRUTH);
        let mut lines = String::new();
        for r in &self.truth {
            lines.push_str(&serde_json::to_string(r)?);
            lines.push('\n');
        }
        std::fs::write(&truth, lines).map_err(|e| Error::io(&truth, e))?;
        let summary = dir.join(files::TRUTH_SUMMARY);
        let mut json = serde_json::to_string_pretty(&self.summary)?;
        json.push('\n');
        std::fs::write(&summary, json).map_err(|e| Error::io(&summary, e))
    }
}

pub fn load_truth(path: impl AsRef<Path>) -> Result<Vec<TruthRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::parse(path, i + 1, e.to_string())))
        .collect()
}

pub fn load_truth_summary(path: impl AsRef<Path>) -> Result<TruthSummary> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, 0, e.to_string()))
}

/// Difference in mean outcome between treated and untreated units.
pub fn naive_estimate(t: &[bool], y: &[bool]) -> Result<f64> {
    if t.len() != y.len() {
        return Err(Error::Dimension {
            expected: t.len(),
            actual: y.len(),
        });
    }
    let (mut s1, mut n1, mut s0, mut n0) = (0.0, 0usize, 0.0, 0usize);
    for (&ti, &yi) in t.iter().zip(y) {
        let v = if yi { 1.0 } else { 0.0 };
        if ti {
            s1 += v;
            n1 += 1;
        } else {
            s0 += v;
            n0 += 1;
        }
    }
    if n1 == 0 || n0 == 0 {
        return Err(Error::InvalidInput("naive estimate needs both treated and untreated units".into()));
    }
    Ok(s1 / n1 as f64 - s0 / n0 as f64)
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

struct Author {
    record: LegislatorRecord,
    rep: f64,
    effect: f64,
    n_posts: usize,
}

struct Draft {
    author: usize,
    time: DateTime<Utc>,
    z: Vec<f64>,
    words: usize,
    url: Option<String>,
}

fn pick<'a, T>(rng: &mut ChaCha8Rng, items: &'a [(T, f64)]) -> &'a T {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (v, w) in items {
        acc += w;
        if u < acc {
            return v;
        }
    }
    &items.last().expect("non-empty").0
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let window = StudyWindow::default();
    let span_secs = (window.end - window.start).num_seconds();
    let states = &STATES[..cfg.n_states];
    let state_effect: Vec<f64> = states.iter().map(|_| cfg.state_effect_sd * std_normal.sample(&mut rng)).collect();
    let gamma = Gamma::new(cfg.posts_per_author_shape, cfg.posts_per_author_mean / cfg.posts_per_author_shape)
        .map_err(|e| Error::Config(e.to_string()))?;

    let mut authors = Vec::with_capacity(cfg.n_authors);
    for a in 0..cfg.n_authors {
        let party = if rng.gen_bool(cfg.other_party_rate) {
            Party::Other
        } else if rng.gen_bool(0.5) {
            Party::Rep
        } else {
            Party::Dem
        };
        let (rep, ideology_mean) = match party {
            Party::Rep => (1.0, 0.8),
            Party::Dem => (0.0, -0.8),
            Party::Other => (0.5, 0.0),
        };
        let gender = *pick(&mut rng, &[(Gender::Men, 0.7), (Gender::Women, 0.28), (Gender::Unknown, 0.02)]);
        let ethnicity = *pick(&mut rng, &[(Ethnicity::White, 0.75), (Ethnicity::NonWhite, 0.23), (Ethnicity::Unknown, 0.02)]);
        let si = rng.gen_range(0..states.len());
        let ideology = ideology_mean + 0.3 * std_normal.sample(&mut rng);
        let followers = (9.0 + 1.2 * std_normal.sample(&mut rng)).exp().round() as u64;
        let mut accounts = BTreeSet::from([Platform::A]);
        if rng.gen_bool(cfg.overlap_rate) {
            accounts.insert(Platform::B);
        }
        let rate = gamma.sample(&mut rng).max(1e-9);
        let n_posts = (Poisson::new(rate).unwrap().sample(&mut rng) as usize).max(1);
        let effect = cfg.author_effect_sd * std_normal.sample(&mut rng) + state_effect[si];
        authors.push(Author {
            record: LegislatorRecord {
                author_id: format!("L{a:04}"),
                party,
                gender,
                ethnicity,
                state: states[si].to_string(),
                ideology: Some((ideology * 1e4).round() / 1e4),
                follower_count: Some(followers),
                accounts,
            },
            rep,
            effect,
            n_posts,
        });
    }

    let mut edges = Vec::new();
    let poisson_follows = Poisson::new(8.0).unwrap();
    for a in 0..authors.len() {
        let k = (1 + poisson_follows.sample(&mut rng) as usize).min(authors.len() - 1);
        let mut others: Vec<usize> = (0..authors.len()).filter(|&b| b != a).collect();
        others.shuffle(&mut rng);
        let mut picked: Vec<usize> = others[..k].to_vec();
        picked.sort();
        for b in picked {
            edges.push((authors[a].record.author_id.clone(), authors[b].record.author_id.clone()));
        }
    }

    let mut drafts = Vec::new();
    for (ai, a) in authors.iter().enumerate() {
        let mut times: Vec<i64> = (0..a.n_posts).map(|_| rng.gen_range(0..span_secs)).collect();
        times.sort();
        for off in times {
            let z: Vec<f64> = (0..cfg.embedding_dim).map(|_| std_normal.sample(&mut rng)).collect();
            let words = (cfg.mean_words + cfg.sd_words * std_normal.sample(&mut rng)).round().max(1.0) as usize;
            let url = if rng.gen_bool(cfg.url_rate) {
                let low_rate = match a.record.party {
                    Party::Rep => cfg.low_credible_rate_rep,
                    Party::Dem => cfg.low_credible_rate_dem,
                    Party::Other => (cfg.low_credible_rate_dem + cfg.low_credible_rate_rep) / 2.0,
                };
                let domain = if rng.gen_bool(low_rate) {
                    LOW_CREDIBLE.choose(&mut rng).unwrap()
                } else {
                    CREDIBLE.choose(&mut rng).unwrap()
                };
                Some(format!("https://www.{domain}/story/{}", rng.gen_range(100_000..999_999)))
            } else {
                None
            };
            drafts.push(Draft {
                author: ai,
                time: window.start + Duration::seconds(off),
                z,
                words,
                url,
            });
        }
    }

    let n = drafts.len();
    let rep_frac = drafts.iter().map(|d| authors[d.author].rep).sum::<f64>() / n as f64;
    let tau_i: Vec<f64> = drafts
        .iter()
        .map(|d| cfg.true_cate + cfg.party_effect_asymmetry * (authors[d.author].rep - rep_frac))
        .collect();
    let lo = P_MIN + tau_i.iter().fold(0.0f64, |m, &t| m.max(-t));
    let hi = P_MAX - tau_i.iter().fold(0.0f64, |m, &t| m.max(t));
    if hi <= lo {
        return Err(Error::Config("effect sizes leave no room for valid probabilities".into()));
    }
    let base_logit = (cfg.treatment_base_rate / (1.0 - cfg.treatment_base_rate)).ln();
    let c = cfg.confounder_strength;
    let thres = Thresholds::default().for_platform(Platform::A);
    let window_secs = 14 * 86_400;
    let noise = Normal::new(0.0, cfg.embedding_noise.max(0.0)).unwrap();

    let mut posts = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    let mut embeddings = EmbeddingMatrix::new(cfg.embedding_dim)?;
    let mut history: Vec<(i64, u64)> = Vec::new();
    let mut seq = 0;
    for (k, d) in drafts.iter().enumerate() {
        let author = &authors[d.author];
        if k == 0 || drafts[k - 1].author != d.author {
            history.clear();
            seq = 0;
        }
        let s = d.z[0] + 0.5 * (author.rep - 0.5);
        let propensity = logistic(base_logit + c * s);
        let p0 = lo + (hi - lo) * logistic(c * s);
        let p1 = p0 + tau_i[k];
        let t = rng.gen_bool(propensity);
        let y = rng.gen_bool(if t { p1 } else { p0 });

        let ts = d.time.timestamp();
        let recent: Vec<f64> = history
            .iter()
            .filter(|(h, _)| *h >= ts - window_secs && *h < ts)
            .map(|(_, v)| *v as f64)
            .collect();
        let baseline = if recent.is_empty() { 0.0 } else { median(&recent) };
        let cap = (baseline + thres).floor() as u64;
        let v = if y {
            let scale = thres * (author.effect).exp();
            let extra = (scale * -rng.gen::<f64>().max(1e-12).ln()).floor() as u64;
            cap + 1 + extra
        } else {
            rng.gen_range(0..=cap)
        };
        history.push((ts, v));

        let post_id = format!("{}-{seq:04}", author.record.author_id);
        seq += 1;
        let toxicity: f64 = if t { rng.gen_range(0.83..1.0) } else { rng.gen_range(0.0..0.8) };
        let text: Vec<&str> = (0..d.words).map(|_| *VOCAB.choose(&mut rng).unwrap()).collect();
        let emb: Vec<f32> = d.z.iter().map(|zi| (zi + noise.sample(&mut rng)) as f32).collect();
        embeddings.push(post_id.clone(), &emb)?;
        let comments = v / 10;
        let shares = v / 5;
        let quotes = v / 20;
        posts.push(PostRecord {
            post_id: post_id.clone(),
            author_id: author.record.author_id.clone(),
            platform: Platform::A,
            timestamp: d.time,
            text: text.join(" "),
            interactions: InteractionBreakdown {
                likes: v - comments - shares - quotes,
                shares,
                comments,
                quotes,
                extra_reactions: 0,
            },
            urls: d.url.iter().cloned().collect(),
            toxicity_score: Some((toxicity * 1e6).round() / 1e6),
            embedding_ref: Some(post_id.clone()),
        });
        truth.push(TruthRecord {
            post_id,
            author_id: author.record.author_id.clone(),
            propensity,
            p0,
            p1,
            tau: tau_i[k],
            t,
            y,
        });
    }

    let legislators: Vec<LegislatorRecord> = authors.into_iter().map(|a| a.record).collect();
    let summary = summarize(cfg, &legislators, &truth)?;
    Ok(SynthDataset {
        posts,
        legislators,
        edges,
        embeddings,
        low_credible_domains: LOW_CREDIBLE.iter().map(|s| s.to_string()).collect(),
        truth,
        summary,
    })
}

fn summarize(cfg: &SynthConfig, legislators: &[LegislatorRecord], truth: &[TruthRecord]) -> Result<TruthSummary> {
    let by_id: BTreeMap<String, LegislatorRecord> = legislators.iter().map(|l| (l.author_id.clone(), l.clone())).collect();
    let masks = subgroup_masks(&by_id);
    let subgroups = Subgroup::ALL
        .iter()
        .map(|g| {
            let rows: Vec<&TruthRecord> = truth.iter().filter(|r| masks[g].contains(&r.author_id)).collect();
            let avg = |it: &mut dyn Iterator<Item = &&TruthRecord>| {
                let (s, k) = it.fold((0.0, 0usize), |(s, k), r| (s + (r.p1 - r.p0), k + 1));
                (k > 0).then(|| s / k as f64)
            };
            SubgroupTruth {
                subgroup: *g,
                n_posts: rows.len(),
                n_treated: rows.iter().filter(|r| r.t).count(),
                cate: avg(&mut rows.iter()),
                att: avg(&mut rows.iter().filter(|r| r.t)),
            }
        })
        .collect();
    let t: Vec<bool> = truth.iter().map(|r| r.t).collect();
    let y: Vec<bool> = truth.iter().map(|r| r.y).collect();
    Ok(TruthSummary {
        tau: cfg.true_cate,
        n_posts: truth.len(),
        n_treated: t.iter().filter(|&&v| v).count(),
        naive: naive_estimate(&t, &y)?,
        subgroups,
        config: cfg.clone(),
    })
}

/// Generates a dataset and writes it to `dir`.
pub fn generate_to_dir(cfg: &SynthConfig, dir: impl AsRef<Path>) -> Result<TruthSummary> {
    let data = generate(cfg)?;
    data.write_dir(dir)?;
    Ok(data.summary)
}
