//! Save a trained model to the binary checkpoint format, reload it, and
//! check that evaluation is unchanged. A mismatched mode is rejected.
//!
//! ```text
//! cargo run --release --example checkpoint_roundtrip
//! ```

use pncf::corpus::{generate_synthetic, leave_one_out_split, HoldoutPolicy, SyntheticSpec};
use pncf::evaluation::{evaluate, EvalConfig};
use pncf::model::{FeatureContext, Hyperparams, PersonalityMode};
use pncf::training::{train, Checkpoint, TrainConfig};

fn main() -> pncf::Result<()> {
    let seed = 3;
    let data = generate_synthetic(SyntheticSpec::new(100, 50, 10, 0.8), seed)?;
    let split = leave_one_out_split(&data.interactions, seed, HoldoutPolicy::Random);
    let mode = PersonalityMode::SoftLabeled { temperature: 100.0 };
    let ctx = FeatureContext::build(mode, split.train.user_ids(), Some(&data.personalities))?;
    let cfg = TrainConfig {
        seed,
        epochs: 3,
        patience: None,
        ..TrainConfig::default()
    };
    let out = train(&split, &ctx, &Hyperparams::with_seed(seed), &cfg)?;
    let ckpt = Checkpoint {
        params: out.params,
        seed,
        epoch: out.epoch as u64,
    };

    let dir = std::env::temp_dir().join(format!("pncf-checkpoint-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| pncf::Error::Config(e.to_string()))?;
    let path = dir.join("model.pncf");
    ckpt.save(&path)?;
    let size = std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0);
    println!("wrote {} ({size} bytes, epoch {})", path.display(), ckpt.epoch);

    let back = Checkpoint::load(&path, Some("soft"))?;
    let eval = EvalConfig::default();
    let stored = Checkpoint::from_bytes(&ckpt.to_bytes())?;
    let a = evaluate(&stored.params, &ctx, &split, &eval)?.report;
    let b = evaluate(&back.params, &ctx, &split, &eval)?.report;
    println!("reloaded model evaluates identically: {}", a == b);
    match Checkpoint::load(&path, Some("plain")) {
        Err(e) => println!("loading as `plain`: {e} (exit code {})", e.exit_code()),
        Ok(_) => println!("unexpectedly loaded as plain"),
    }
    let _ = std::fs::remove_dir_all(&dir);
    Ok(())
}
