//! Train every personality mode on synthetic personality-correlated data and
//! print a HR/NDCG table averaged over several seeds.
//!
//! ```text
//! cargo run --release --example synthetic_experiment -- [seeds] [signal] [epochs] [lr] [user_temperature]
//! ```

use std::time::Instant;

use pncf::corpus::{generate_synthetic, leave_one_out_split, HoldoutPolicy, SyntheticSpec};
use pncf::evaluation::{evaluate, EvalConfig};
use pncf::numerics::AdamConfig;
use pncf::model::{FeatureContext, Hyperparams, PersonalityMode, DEFAULT_TEMPERATURE};
use pncf::personality::Trait;
use pncf::training::{train, TrainConfig};
use rayon::prelude::*;

fn modes(seed: u64) -> Vec<PersonalityMode> {
    vec![
        PersonalityMode::Plain,
        PersonalityMode::RandomLabel { seed },
        PersonalityMode::SameTrait(Trait::Openness),
        PersonalityMode::MostSalient,
        PersonalityMode::SoftLabeled {
            temperature: DEFAULT_TEMPERATURE,
        },
        PersonalityMode::HardCoded,
    ]
}

fn main() -> pncf::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let seeds: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let signal: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.8);
    let defaults = TrainConfig::default();
    let epochs: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(defaults.epochs);
    let lr: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(defaults.adam.learning_rate);
    let user_temperature: Option<f64> = args.get(5).and_then(|s| s.parse().ok());
    let started = Instant::now();

    let jobs: Vec<(u64, usize)> = (0..seeds).flat_map(|s| (0..6).map(move |m| (s, m))).collect();
    let results = jobs
        .par_iter()
        .map(|&(seed, m)| {
            let mut spec = SyntheticSpec::new(500, 200, 20, signal);
            if let Some(t) = user_temperature {
                spec.user_temperature = t;
            }
            let data = generate_synthetic(spec, seed)?;
            let split = leave_one_out_split(&data.interactions, seed, HoldoutPolicy::Random);
            let mode = modes(seed)[m];
            let ctx = FeatureContext::build(mode, split.train.user_ids(), Some(&data.personalities))?;
            let cfg = TrainConfig {
                seed,
                epochs,
                patience: defaults.patience.map(|p| p.min(epochs)),
                adam: AdamConfig {
                    learning_rate: lr,
                    ..AdamConfig::default()
                },
                ..TrainConfig::default()
            };
            let out = train(&split, &ctx, &Hyperparams::with_seed(seed), &cfg)?;
            let eval = EvalConfig {
                seed,
                ..EvalConfig::default()
            };
            Ok((m, evaluate(&out.params, &ctx, &split, &eval)?.report))
        })
        .collect::<pncf::Result<Vec<_>>>()?;

    println!("{:<18} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7}", "model", "HR@3", "HR@5", "HR@10", "N@3", "N@5", "N@10");
    let mut ndcg10 = [0.0; 6];
    for (m, mode) in modes(0).iter().enumerate() {
        let mut hr = [0.0; 3];
        let mut nd = [0.0; 3];
        for (_, r) in results.iter().filter(|(k, _)| *k == m) {
            for p in 0..3 {
                hr[p] += r.hr[p] / seeds as f64;
                nd[p] += r.ndcg[p] / seeds as f64;
            }
        }
        ndcg10[m] = nd[2];
        println!(
            "{:<18} {:>7.4} {:>7.4} {:>7.4} {:>7.4} {:>7.4} {:>7.4}",
            mode.label(),
            hr[0],
            hr[1],
            hr[2],
            nd[0],
            nd[1],
            nd[2]
        );
    }
    println!();
    println!("soft / same  NDCG@10 = {:.4}", ndcg10[4] / ndcg10[2]);
    println!("hard / same  NDCG@10 = {:.4}", ndcg10[5] / ndcg10[2]);
    println!("|same - random| / random = {:.4}", (ndcg10[2] - ndcg10[1]).abs() / ndcg10[1]);
    println!("{} seeds in {:.1}s", seeds, started.elapsed().as_secs_f64());
    Ok(())
}
