//! Treatment labels (incivility, low credibility), toxicity-cutoff
//! calibration from annotations, and text utilities.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::PostRecord;
use crate::error::{Error, Result};
use crate::stats::midranks;

pub const DEFAULT_TOXICITY_CUTOFF: f64 = 0.82;

/// Lowercased host of `url` with any leading `www.` removed. Scheme-less
/// inputs such as `example.com/page` are accepted.
pub fn extract_registrable_domain(raw: &str) -> Result<String> {
    let trimmed = raw.trim();
    if trimmed.is_empty() || trimmed.chars().any(char::is_whitespace) {
        return Err(Error::Url(raw.to_string()));
    }
    let parsed = match url::Url::parse(trimmed) {
        Ok(u) => u,
        Err(url::ParseError::RelativeUrlWithoutBase) if trimmed.contains('.') => {
            url::Url::parse(&format!("http://{trimmed}")).map_err(|_| Error::Url(raw.to_string()))?
        }
        Err(_) => return Err(Error::Url(raw.to_string())),
    };
    let host = match parsed.host() {
        Some(url::Host::Domain(d)) => d.to_ascii_lowercase(),
        _ => return Err(Error::Url(raw.to_string())),
    };
    let host = host.trim_end_matches('.');
    Ok(host.strip_prefix("www.").unwrap_or(host).to_string())
}

/// Set of low-credibility domains.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DomainList {
    domains: BTreeSet<String>,
}

impl DomainList {
    pub fn new<I, S>(domains: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        DomainList {
            domains: domains
                .into_iter()
                .map(|d| {
                    let d = d.as_ref().trim().to_ascii_lowercase();
                    d.strip_prefix("www.").map(str::to_string).unwrap_or(d)
                })
                .filter(|d| !d.is_empty())
                .collect(),
        }
    }

    /// One domain per line; blank lines and `#` comments are ignored.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut out = Vec::new();
        for line in std::io::BufReader::new(f).lines() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let content = line.split('#').next().unwrap_or("").trim();
            if !content.is_empty() {
                out.push(content.to_string());
            }
        }
        Ok(DomainList::new(out))
    }

    pub fn len(&self) -> usize {
        self.domains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.domains.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.domains.iter().map(String::as_str)
    }

    /// Exact match, or a dot-boundary suffix match (`blog.bad.com` matches
    /// `bad.com`). Returns the list entry that matched.
    pub fn matches(&self, domain: &str) -> Option<&str> {
        let mut rest = domain;
        loop {
            if let Some(hit) = self.domains.get(rest) {
                return Some(hit.as_str());
            }
            match rest.find('.') {
                Some(i) => rest = &rest[i + 1..],
                None => return None,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CredibilityLabel {
    pub post_id: String,
    pub low_credible: bool,
    pub matched_domain: Option<String>,
}

/// Unparseable URLs are ignored.
pub fn label_low_credible(posts: &[PostRecord], domains: &DomainList) -> Vec<CredibilityLabel> {
    posts
        .iter()
        .map(|p| {
            let matched = p
                .urls
                .iter()
                .filter_map(|u| extract_registrable_domain(u).ok())
                .find_map(|d| domains.matches(&d).map(str::to_string));
            CredibilityLabel {
                post_id: p.post_id.clone(),
                low_credible: matched.is_some(),
                matched_domain: matched,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CivilityLabel {
    pub post_id: String,
    /// `None` when the post has no toxicity score.
    pub uncivil: Option<bool>,
}

pub fn label_uncivil(posts: &[PostRecord], cutoff: f64) -> Vec<CivilityLabel> {
    posts
        .iter()
        .map(|p| CivilityLabel {
            post_id: p.post_id.clone(),
            uncivil: p.toxicity_score.map(|s| s > cutoff),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreatmentLabel {
    pub post_id: String,
    pub uncivil: Option<bool>,
    pub low_credible: bool,
    pub matched_domain: Option<String>,
}

pub fn label_posts(posts: &[PostRecord], domains: &DomainList, cutoff: f64) -> Vec<TreatmentLabel> {
    label_uncivil(posts, cutoff)
        .into_iter()
        .zip(label_low_credible(posts, domains))
        .map(|(c, l)| TreatmentLabel {
            post_id: c.post_id,
            uncivil: c.uncivil,
            low_credible: l.low_credible,
            matched_domain: l.matched_domain,
        })
        .collect()
}

/// Area under the ROC curve: P(score+ > score-) + P(tie)/2.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension {
            expected: scores.len(),
            actual: labels.len(),
        });
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InvalidInput("ROC needs both classes".into()));
    }
    let ranks = midranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffCalibration {
    pub cutoff: f64,
    pub auc: f64,
    pub youden_j: f64,
}

/// Picks the observed score maximizing Youden's J for the rule
/// `score > cutoff`. Ties go to the highest cutoff.
pub fn calibrate_toxicity_cutoff(scores: &[f64], labels: &[bool]) -> Result<CutoffCalibration> {
    let auc = roc_auc(scores, labels)?;
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidInput("non-finite score".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count() as f64;
    let n_neg = labels.len() as f64 - n_pos;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    // walk thresholds from the top; everything strictly above the current
    // distinct value is predicted positive
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut best = (f64::NEG_INFINITY, scores[order[0]]);
    let mut i = 0;
    while i < order.len() {
        let c = scores[order[i]];
        let j_stat = tp / n_pos - fp / n_neg;
        if j_stat > best.0 + 1e-15 {
            best = (j_stat, c);
        }
        while i < order.len() && scores[order[i]] == c {
            if labels[order[i]] {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
    }
    Ok(CutoffCalibration {
        cutoff: best.1,
        auc,
        youden_j: best.0,
    })
}

/// Binary labels from several annotators; every item has the same number of
/// labels.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationSet {
    items: BTreeMap<String, Vec<bool>>,
    annotators: usize,
}

impl AnnotationSet {
    pub fn new(items: BTreeMap<String, Vec<bool>>) -> Result<Self> {
        let annotators = items.values().next().map(Vec::len).unwrap_or(0);
        if annotators < 2 {
            return Err(Error::InvalidInput("need at least two annotators".into()));
        }
        if let Some((id, _)) = items.iter().find(|(_, v)| v.len() != annotators) {
            return Err(Error::InvalidInput(format!(
                "item `{id}` does not have {annotators} labels"
            )));
        }
        Ok(AnnotationSet { items, annotators })
    }

    pub fn annotators(&self) -> usize {
        self.annotators
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    /// Percent agreement for annotator pairs `(i, j)`, `i < j`.
    pub pairwise: BTreeMap<(usize, usize), f64>,
    pub majority: BTreeMap<String, bool>,
    /// Items with a tied vote; these resolve to `false` (civil).
    pub ties: Vec<String>,
}

pub fn annotation_agreement(ann: &AnnotationSet) -> AgreementReport {
    let k = ann.annotators;
    let n = ann.items.len() as f64;
    let mut pairwise = BTreeMap::new();
    for i in 0..k {
        for j in i + 1..k {
            let agree = ann.items.values().filter(|v| v[i] == v[j]).count() as f64;
            pairwise.insert((i, j), if n > 0.0 { 100.0 * agree / n } else { 0.0 });
        }
    }
    let mut majority = BTreeMap::new();
    let mut ties = Vec::new();
    for (id, v) in &ann.items {
        let yes = v.iter().filter(|&&b| b).count();
        let no = v.len() - yes;
        if yes == no {
            ties.push(id.clone());
        }
        majority.insert(id.clone(), yes > no);
    }
    AgreementReport {
        pairwise,
        majority,
        ties,
    }
}

/// Vowel groups (a, e, i, o, u, y), minus one for a silent trailing `e`,
/// at least one per word.
pub fn count_syllables(word: &str) -> usize {
    let w: Vec<char> = word
        .chars()
        .filter(|c| c.is_ascii_alphabetic())
        .map(|c| c.to_ascii_lowercase())
        .collect();
    let is_vowel = |c: char| matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y');
    let mut groups = 0;
    let mut prev = false;
    for &c in &w {
        let v = is_vowel(c);
        if v && !prev {
            groups += 1;
        }
        prev = v;
    }
    if w.last() == Some(&'e') && groups > 1 {
        groups -= 1;
    }
    groups.max(1)
}

pub fn flesch_kincaid_grade(text: &str) -> Result<f64> {
    let mut words = 0usize;
    let mut syllables = 0usize;
    let mut sentences = 0usize;
    for sentence in text.split(['.', '!', '?']) {
        let mut in_sentence = 0;
        for token in sentence.split_whitespace() {
            if token.chars().any(|c| c.is_alphanumeric()) {
                in_sentence += 1;
                syllables += count_syllables(token);
            }
        }
        if in_sentence > 0 {
            sentences += 1;
            words += in_sentence;
        }
    }
    if words == 0 {
        return Err(Error::InvalidInput("text has no words".into()));
    }
    Ok(0.39 * (words as f64 / sentences as f64) + 11.8 * (syllables as f64 / words as f64) - 15.59)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{InteractionBreakdown, Platform};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn post(id: &str, urls: &[&str], tox: Option<f64>) -> PostRecord {
        PostRecord {
            post_id: id.into(),
            author_id: "a".into(),
            platform: Platform::A,
            timestamp: chrono::Utc::now(),
            text: String::new(),
            interactions: InteractionBreakdown::default(),
            urls: urls.iter().map(|s| s.to_string()).collect(),
            toxicity_score: tox,
            embedding_ref: None,
        }
    }

    #[test]
    fn domain_normalization() {
        assert_eq!(extract_registrable_domain("https://www.Example.com/a?b=1").unwrap(), "example.com");
        assert_eq!(extract_registrable_domain("http://news.site.org/x").unwrap(), "news.site.org");
        assert_eq!(extract_registrable_domain("site.org/x").unwrap(), "site.org");
        assert!(extract_registrable_domain("not a url").is_err());
        assert!(extract_registrable_domain("").is_err());
    }

    #[test]
    fn low_credible_labels() {
        let list = DomainList::new(["badsite.com", "fake.news"]);
        let posts = [
            post("on", &["https://badsite.com/story"], None),
            post("none", &[], None),
            post("sub", &["https://blog.badsite.com/x"], None),
            post("lookalike", &["https://notbadsite.com/x"], None),
            post("case", &["HTTP://WWW.FAKE.NEWS/a"], None),
        ];
        let l = label_low_credible(&posts, &list);
        assert!(l[0].low_credible);
        assert_eq!(l[0].matched_domain.as_deref(), Some("badsite.com"));
        assert!(!l[1].low_credible);
        assert!(l[2].low_credible);
        assert!(!l[3].low_credible);
        assert!(l[4].low_credible);
    }

    #[test]
    fn suffix_rule_matches_oracle() {
        let list = ["bad.com", "x.y.org", "evil.net"];
        let dl = DomainList::new(list);
        let hosts = [
            "bad.com", "a.bad.com", "a.b.bad.com", "xbad.com", "bad.com.au", "y.org", "x.y.org",
            "z.x.y.org", "evil.net", "notevil.net", "net",
        ];
        for h in hosts {
            let oracle = list
                .iter()
                .any(|d| h == *d || h.ends_with(&format!(".{d}")));
            assert_eq!(dl.matches(h).is_some(), oracle, "{h}");
        }
    }

    #[test]
    fn domain_list_file_with_comments() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.txt");
        std::fs::write(&p, "# header\nBad.com\n\nfake.news # inline\n").unwrap();
        let dl = DomainList::load(&p).unwrap();
        assert_eq!(dl.iter().collect::<Vec<_>>(), ["bad.com", "fake.news"]);
    }

    #[test]
    fn uncivil_strict_cutoff() {
        let posts = [post("a", &[], Some(0.83)), post("b", &[], Some(0.82)), post("c", &[], None)];
        let l = label_uncivil(&posts, DEFAULT_TOXICITY_CUTOFF);
        assert_eq!(l[0].uncivil, Some(true));
        assert_eq!(l[1].uncivil, Some(false));
        assert_eq!(l[2].uncivil, None);
    }

    #[test]
    fn auc_separated_and_single_class() {
        let s = [0.1, 0.2, 0.3, 0.7, 0.8];
        let l = [false, false, false, true, true];
        assert_eq!(roc_auc(&s, &l).unwrap(), 1.0);
        assert!(calibrate_toxicity_cutoff(&s, &[true; 5]).is_err());
        let c = calibrate_toxicity_cutoff(&s, &l).unwrap();
        assert_eq!(c.cutoff, 0.3);
        assert_eq!(c.youden_j, 1.0);
    }

    fn brute_auc(s: &[f64], l: &[bool]) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..s.len() {
            for j in 0..s.len() {
                if l[i] && !l[j] {
                    den += 1.0;
                    if s[i] > s[j] {
                        num += 1.0;
                    } else if s[i] == s[j] {
                        num += 0.5;
                    }
                }
            }
        }
        num / den
    }

    #[test]
    fn auc_matches_pair_counting() {
        let s = [
            0.1, 0.4, 0.4, 0.35, 0.8, 0.7, 0.2, 0.9, 0.55, 0.4, 0.6, 0.6, 0.05, 0.3, 0.75, 0.2,
            0.95, 0.5, 0.5, 0.1,
        ];
        let l = [
            false, true, false, false, true, true, false, true, false, true, true, false, false,
            false, true, true, true, false, true, false,
        ];
        assert!((roc_auc(&s, &l).unwrap() - brute_auc(&s, &l)).abs() < 1e-12);
    }

    #[test]
    fn auc_chance_level() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s: Vec<f64> = (0..20_000).map(|_| rng.gen()).collect();
        let l: Vec<bool> = (0..20_000).map(|_| rng.gen_bool(0.3)).collect();
        assert!((roc_auc(&s, &l).unwrap() - 0.5).abs() < 0.02);
    }

    fn brute_youden(s: &[f64], l: &[bool]) -> f64 {
        let pos = l.iter().filter(|&&b| b).count() as f64;
        let neg = l.len() as f64 - pos;
        s.iter()
            .map(|&c| {
                let tp = s.iter().zip(l).filter(|(&x, &y)| y && x > c).count() as f64;
                let fp = s.iter().zip(l).filter(|(&x, &y)| !y && x > c).count() as f64;
                tp / pos - fp / neg
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    proptest! {
        #[test]
        fn auc_invariant_under_monotone_transform(
            data in prop::collection::vec((0.0f64..1.0, any::<bool>()), 2..60)
        ) {
            let (s, l): (Vec<f64>, Vec<bool>) = data.into_iter().unzip();
            prop_assume!(l.iter().any(|&b| b) && l.iter().any(|&b| !b));
            let t: Vec<f64> = s.iter().map(|x| (3.0 * x).exp() - 7.0).collect();
            prop_assert!((roc_auc(&s, &l).unwrap() - roc_auc(&t, &l).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn youden_cutoff_is_observed_and_optimal(
            data in prop::collection::vec((0u8..20, any::<bool>()), 2..60)
        ) {
            let (s, l): (Vec<f64>, Vec<bool>) = data.into_iter().map(|(a, b)| (a as f64 / 20.0, b)).unzip();
            prop_assume!(l.iter().any(|&b| b) && l.iter().any(|&b| !b));
            let c = calibrate_toxicity_cutoff(&s, &l).unwrap();
            prop_assert!(s.contains(&c.cutoff));
            prop_assert!((c.youden_j - brute_youden(&s, &l)).abs() < 1e-12);
        }
    }

    fn ann(rows: &[(&str, &[bool])]) -> AnnotationSet {
        AnnotationSet::new(rows.iter().map(|(k, v)| (k.to_string(), v.to_vec())).collect()).unwrap()
    }

    #[test]
    fn agreement_identical_and_majority() {
        let a = ann(&[("x", &[true, true, true]), ("y", &[false, false, false])]);
        let r = annotation_agreement(&a);
        assert!(r.pairwise.values().all(|&v| v == 100.0));
        assert_eq!(r.majority["x"], true);
        let b = ann(&[("z", &[true, true, false])]);
        assert_eq!(annotation_agreement(&b).majority["z"], true);
    }

    #[test]
    fn agreement_hand_count() {
        let rows: [(&str, &[bool]); 10] = [
            ("0", &[true, true, false]),
            ("1", &[true, false, false]),
            ("2", &[false, false, false]),
            ("3", &[true, true, true]),
            ("4", &[false, true, true]),
            ("5", &[false, false, true]),
            ("6", &[true, true, false]),
            ("7", &[true, false, true]),
            ("8", &[false, false, false]),
            ("9", &[true, true, true]),
        ];
        let r = annotation_agreement(&ann(&rows));
        // (0,1) agree on items 0,2,3,5,6,8,9
        assert_eq!(r.pairwise[&(0, 1)], 70.0);
        // (0,2) agree on items 2,3,7,8,9
        assert_eq!(r.pairwise[&(0, 2)], 50.0);
        // (1,2) agree on items 1,2,3,4,8,9
        assert_eq!(r.pairwise[&(1, 2)], 60.0);
        let yes: Vec<&str> = r.majority.iter().filter(|(_, &v)| v).map(|(k, _)| k.as_str()).collect();
        assert_eq!(yes, ["0", "3", "4", "6", "7", "9"]);
    }

    #[test]
    fn even_annotator_tie_is_civil() {
        let r = annotation_agreement(&ann(&[("t", &[true, false])]));
        assert_eq!(r.majority["t"], false);
        assert_eq!(r.ties, ["t"]);
    }

    #[test]
    fn annotation_set_validation() {
        assert!(AnnotationSet::new([("a".to_string(), vec![true])].into()).is_err());
        assert!(AnnotationSet::new(
            [("a".to_string(), vec![true, false]), ("b".to_string(), vec![true])].into()
        )
        .is_err());
    }

    #[test]
    fn flesch_kincaid_examples() {
        let g = flesch_kincaid_grade("The cat sat.").unwrap();
        assert!((g - (-2.62)).abs() < 1e-12, "{g}");
        let two = flesch_kincaid_grade("The cat sat. The cat sat.").unwrap();
        assert!((two - g).abs() < 1e-12);
        assert!(flesch_kincaid_grade("").is_err());
        assert!(flesch_kincaid_grade("... !!").is_err());
    }

    #[test]
    fn syllable_heuristic() {
        assert_eq!(count_syllables("the"), 1);
        assert_eq!(count_syllables("table"), 1);
        assert_eq!(count_syllables("legislator"), 4);
        assert_eq!(count_syllables("rhythm"), 1);
        assert_eq!(count_syllables("Queue"), 1);
    }
}
