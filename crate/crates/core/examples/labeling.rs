//! Incivility and low-credibility labels for a handful of posts.

use chrono::{TimeZone, Utc};
use polvis::corpus::{InteractionBreakdown, Platform, PostRecord};
use polvis::labeling::{label_posts, DomainList};

fn main() {
    let domains = DomainList::new(["hoaxwire.com", "fakenews.example"]);
    let cases: [(&str, Option<f64>, &[&str]); 5] = [
        ("a", Some(0.91), &[]),
        ("b", Some(0.82), &["https://www.hoaxwire.com/story/1"]),
        ("c", Some(0.20), &["https://news.fakenews.example/x"]),
        ("d", None, &["https://example.org/report"]),
        ("e", Some(0.83), &["https://notfakenews.example/"]),
    ];
    let posts: Vec<PostRecord> = cases
        .iter()
        .map(|(id, tox, urls)| PostRecord {
            post_id: id.to_string(),
            author_id: "L0001".into(),
            platform: Platform::A,
            timestamp: Utc.with_ymd_and_hms(2020, 6, 1, 0, 0, 0).unwrap(),
            text: String::new(),
            interactions: InteractionBreakdown::default(),
            urls: urls.iter().map(|u| u.to_string()).collect(),
            toxicity_score: *tox,
            embedding_ref: None,
        })
        .collect();
    for (p, l) in posts.iter().zip(label_posts(&posts, &domains, 0.82)) {
        println!(
            "{}: toxicity {:?} -> uncivil {:?}; low credible {} {}",
            p.post_id,
            p.toxicity_score,
            l.uncivil,
            l.low_credible,
            l.matched_domain.unwrap_or_default()
        );
    }
}
