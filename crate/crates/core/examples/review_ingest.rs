//! Parse a review dump, keep active users, and print dataset statistics.
//!
//! ```text
//! cargo run --example review_ingest -- [reviews.json]
//! ```
//! Without an argument a small generated dump is used.

use std::io::BufReader;

use pncf::corpus::{dataset_stats, filter_active, parse_reviews, FilterConfig, MalformedPolicy, ReviewRecord};

fn sample_dump() -> String {
    let long = "this album has warm vocals and the arrangement keeps surprising me with new ideas on every listen \
                which makes it one of the most creative records in my collection this year";
    let mut lines = Vec::new();
    for (user, reviews) in [("A1", 12), ("A2", 11), ("A3", 4)] {
        for i in 0..reviews {
            let rec = ReviewRecord {
                reviewer_id: user.into(),
                asin: format!("B{:04}", (i * 3 + user.len()) % 17),
                reviewer_name: None,
                review_text: long.into(),
                overall: 4.0,
                vote: None,
                style: None,
            };
            lines.push(rec.to_json());
        }
    }
    lines.push("{ broken line".into());
    lines.join("\n")
}

fn main() -> pncf::Result<()> {
    let text = match std::env::args().nth(1) {
        Some(path) => std::fs::read_to_string(&path).map_err(|e| pncf::Error::Config(format!("{path}: {e}")))?,
        None => sample_dump(),
    };
    let parsed = parse_reviews(BufReader::new(text.as_bytes()), MalformedPolicy::Skip)?;
    println!("parsed {} reviews, skipped lines {:?}", parsed.records.len(), parsed.skipped);

    let out = filter_active(&parsed.records, &FilterConfig::default());
    let r = &out.report;
    println!("users {} -> {}, reviews kept {}, dropped {}", r.users_before, r.users_after, r.reviews_kept, r.reviews_dropped());
    for doc in &out.documents {
        println!("  {}: {} qualifying reviews, {} words", doc.user_id, doc.qualifying_review_count, doc.total_words);
    }
    if out.interactions.n_users() > 0 {
        println!("{}", dataset_stats(&out.interactions, &out.documents)?);
    }
    Ok(())
}
