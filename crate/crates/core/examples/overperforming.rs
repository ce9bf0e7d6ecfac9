//! Rolling 14-day baselines and overperforming scores for one author.

use chrono::{Duration, TimeZone, Utc};
use polvis::corpus::{InteractionBreakdown, Platform, PostRecord};
use polvis::visibility::{overperforming, Thresholds};

fn main() {
    let start = Utc.with_ymd_and_hms(2020, 3, 1, 12, 0, 0).unwrap();
    let history = [(0, 4), (2, 6), (5, 5), (9, 30), (16, 8), (20, 120), (40, 3)];
    let posts: Vec<PostRecord> = history
        .iter()
        .enumerate()
        .map(|(i, &(day, likes))| PostRecord {
            post_id: format!("p{i}"),
            author_id: "L0001".into(),
            platform: Platform::A,
            timestamp: start + Duration::days(day),
            text: String::new(),
            interactions: InteractionBreakdown {
                likes,
                ..Default::default()
            },
            urls: Vec::new(),
            toxicity_score: None,
            embedding_ref: None,
        })
        .collect();
    println!("{:<4} {:>4} {:>12} {:>9} {:>9} over", "post", "day", "interactions", "baseline", "score");
    for ((p, o), (day, _)) in posts.iter().zip(overperforming(&posts, 14, &Thresholds::default())).zip(history) {
        println!(
            "{:<4} {:>4} {:>12} {:>9.1} {:>9.3} {}",
            p.post_id,
            day,
            p.total_interactions(),
            o.baseline,
            o.score,
            o.overperforms
        );
    }
}
