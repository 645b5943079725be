//! Compare backpropagated gradients against central finite differences, for
//! a bare MLP and for the full model in every personality mode.
//!
//! ```text
//! cargo run --release --example gradient_check
//! ```

use pncf::corpus::TrainExample;
use pncf::model::{check_batch_gradients, init_params, FeatureContext, Hyperparams, PersonalityMode};
use pncf::numerics::{grad_check, MlpParams};
use pncf::personality::{OceanScores, PersonalityTable, Provenance, Trait};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> pncf::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let net = MlpParams::glorot(&[10, 8, 4, 1], &mut rng)?;
    let input: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
    println!("bare MLP 10-8-4-1: worst relative error {:.2e}", grad_check(&net, &input, 1.0, 200, 1e-5, 7)?);

    let users = 4;
    let ids: Vec<String> = (0..users).map(|u| format!("u{u}")).collect();
    let mut table = PersonalityTable::new();
    for id in &ids {
        let s = [(); 5].map(|_| rng.random_range(0.0..100.0));
        table.insert(id.clone(), OceanScores::new(s)?, Provenance::Synthetic)?;
    }
    let batch: Vec<TrainExample> = (0..16)
        .map(|k| TrainExample {
            user: k % users,
            item: k % 3,
            label: (k % 2) as f64,
        })
        .collect();
    for mode in [
        PersonalityMode::Plain,
        PersonalityMode::RandomLabel { seed: 7 },
        PersonalityMode::SameTrait(Trait::Neuroticism),
        PersonalityMode::MostSalient,
        PersonalityMode::SoftLabeled { temperature: 100.0 },
        PersonalityMode::HardCoded,
    ] {
        let hyper = Hyperparams {
            hidden: vec![12, 8, 4],
            init_std: 0.5,
            seed: 7,
        };
        let mut params = init_params(users, 3, mode, &hyper)?;
        // nonzero biases keep every pre-activation off the rectifier kink
        for layer in params.mlp.layers_mut() {
            for b in &mut layer.bias {
                *b = rng.random_range(-0.2..0.2);
            }
        }
        let ctx = FeatureContext::build(mode, &ids, Some(&table))?;
        let err = check_batch_gradients(&params, &ctx, &batch, 300, 1e-5, 7)?;
        println!("{:<18} worst relative error {err:.2e}", mode.label());
    }
    Ok(())
}
