//! Score free text on the five OCEAN traits with the built-in lexicon.
//!
//! ```text
//! cargo run --example lexicon_scoring -- "text to score" ["more text" ...]
//! ```

use pncf::personality::{most_salient, soft_weights, Lexicon, LexiconScorer, Trait};

fn main() -> pncf::Result<()> {
    let mut texts: Vec<String> = std::env::args().skip(1).collect();
    if texts.is_empty() {
        texts = vec![
            "I love exploring new art, strange ideas and imaginative music".into(),
            "I planned every detail and finished the work early, carefully organized".into(),
            "Great party with friends, we talked and laughed all night".into(),
            "I was worried and disappointed, the finish is terrible and never calm".into(),
        ];
    }
    let scorer = LexiconScorer::new(Lexicon::builtin());
    println!("{:<48} {}", "text", Trait::ALL.map(|t| format!("{:>6}", t.abbreviation())).join(""));
    for text in &texts {
        let s = scorer.score(text);
        let w = soft_weights(&s, 10.0)?;
        let short: String = text.chars().take(46).collect();
        println!(
            "{short:<48} {}  salient {:<18} soft weight {:.3}",
            s.values().map(|v| format!("{v:>6.1}")).join(""),
            most_salient(&s).name(),
            w.get(most_salient(&s)),
        );
    }
    Ok(())
}
