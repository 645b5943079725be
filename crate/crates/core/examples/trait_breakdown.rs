//! Train one personality-aware model on synthetic data and break its
//! HR/NDCG@10 down by each user's most salient trait.
//!
//! ```text
//! cargo run --release --example trait_breakdown -- [seed]
//! ```

use pncf::corpus::{generate_synthetic, leave_one_out_split, HoldoutPolicy, SyntheticSpec};
use pncf::evaluation::{breakdown_by_trait, evaluate, EvalConfig};
use pncf::model::{FeatureContext, Hyperparams, PersonalityMode};
use pncf::training::{train, TrainConfig};

fn main() -> pncf::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let data = generate_synthetic(SyntheticSpec::new(300, 120, 15, 0.8), seed)?;
    let split = leave_one_out_split(&data.interactions, seed, HoldoutPolicy::Random);
    let mode = PersonalityMode::HardCoded;
    let ctx = FeatureContext::build(mode, split.train.user_ids(), Some(&data.personalities))?;
    let cfg = TrainConfig {
        seed,
        epochs: 10,
        ..TrainConfig::default()
    };
    let out = train(&split, &ctx, &Hyperparams::with_seed(seed), &cfg)?;
    let eval = evaluate(&out.params, &ctx, &split, &EvalConfig { seed, ..EvalConfig::default() })?;
    println!("{}", eval.report);
    let b = breakdown_by_trait(&eval.per_user, split.train.user_ids(), &data.personalities, 10)?;
    println!("{b}");
    let (hr, ndcg) = b.recombined();
    println!("recombined HR@10 {hr:.6} NDCG@10 {ndcg:.6}");
    Ok(())
}
