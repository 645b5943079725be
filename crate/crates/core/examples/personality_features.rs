//! Show the feature each personality mode feeds to the network for a few
//! example users with distinct, near-tied and flat profiles.
//!
//! ```text
//! cargo run --example personality_features
//! ```

use pncf::model::{init_params, personality_feature, FeatureContext, Hyperparams, PersonalityMode};
use pncf::personality::{hard_vector, most_salient, soft_weights, OceanScores, PersonalityTable, Provenance, Trait};

fn main() -> pncf::Result<()> {
    let users = [
        ("mixed", [30.0, 70.0, 50.0, 30.0, 20.0]),
        ("reviewer", [42.71, 34.87, 54.39, 54.05, 25.96]),
        ("flat", [50.0, 50.0, 50.0, 50.0, 50.0]),
    ];
    let mut table = PersonalityTable::new();
    for (id, s) in users {
        table.insert(id, OceanScores::new(s)?, Provenance::Imported)?;
    }
    let ids: Vec<String> = users.iter().map(|(id, _)| id.to_string()).collect();

    for (id, s) in users {
        let scores = OceanScores::new(s)?;
        println!("{id}: scores {s:?}");
        println!("  most salient  {}", most_salient(&scores).name());
        println!("  hard vector   {:?}", hard_vector(&scores).map(|v| (v * 1e4).round() / 1e4));
        for t in [1.0, 10.0, 100.0] {
            println!("  soft T={t:<5} {:?}", soft_weights(&scores, t)?.values().map(|w| (w * 1e4).round() / 1e4));
        }
    }

    println!();
    let modes = [
        PersonalityMode::Plain,
        PersonalityMode::RandomLabel { seed: 1 },
        PersonalityMode::SameTrait(Trait::Openness),
        PersonalityMode::MostSalient,
        PersonalityMode::SoftLabeled { temperature: 100.0 },
        PersonalityMode::HardCoded,
    ];
    for mode in modes {
        let ctx = FeatureContext::build(mode, &ids, Some(&table))?;
        let params = init_params(ids.len(), 1, mode, &Hyperparams::with_seed(1))?;
        let f = personality_feature(&params, &ctx, 0)?;
        println!(
            "{:<18} width {:>2}  input {:>2}  feature for `mixed`: {:?}",
            mode.label(),
            mode.feature_dim(),
            params.input_width(),
            f.iter().map(|v| (v * 1e4).round() / 1e4).collect::<Vec<_>>()
        );
    }
    Ok(())
}
