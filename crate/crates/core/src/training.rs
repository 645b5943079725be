//! Mini-batch training and the `PNCF` checkpoint format.
//!
//! Every epoch draws fresh negatives, shuffles with a stream keyed on
//! `(seed, epoch)`, takes one Adam step per batch and validates on the
//! held-out items. The returned parameters are those of the best validation
//! epoch unless `restore_best` is off.
//!
//! # Checkpoint layout
//!
//! All integers and reals little-endian.
//!
//! ```text
//! magic      "PNCF"
//! version    u32 (= 1)
//! mode       u8 tag (0 plain, 1 random, 2 same, 3 salient, 4 soft, 5 hard)
//!            + payload: random u64 seed | same u8 trait | soft f64 temperature
//! users      u64
//! items      u64
//! emb dim    u32 (= 16)
//! trait dim  u32 (= 4, 0 without a trait table)
//! layers     u32 count n, then n+1 u32 widths (input .. 1)
//! seed       u64 training seed
//! epoch      u64 epochs actually trained
//! tensors    f32: user_emb, item_emb, [trait_emb], then weight, bias per layer
//! ```

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;

use crate::corpus::{sample_train_negatives, LeaveOneOutSplit};
use crate::evaluation::{evaluate, EvalConfig};
use crate::model::{batch_gradients_into, init_params, FeatureContext, GradientBuffer, Hyperparams, NcfParams, PersonalityMode, EMBEDDING_DIM, TRAIT_DIM};
use crate::numerics::{adam_step, AdamConfig, AdamState, Layer, Matrix, MlpParams, Tensors};
use crate::personality::Trait;
use crate::rng::{domain, keyed_rng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub negatives: usize,
    pub adam: AdamConfig,
    /// Stop after this many epochs without a validation HR@10 improvement.
    pub patience: Option<usize>,
    /// Return the best validation epoch's parameters instead of the last.
    pub restore_best: bool,
    pub freeze_trait_emb: bool,
    pub seed: u64,
    /// Candidate pool and seed of the per-epoch validation ranking.
    pub eval: EvalConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 256,
            negatives: 4,
            adam: AdamConfig::default(),
            patience: Some(5),
            restore_best: true,
            freeze_trait_emb: false,
            seed: 0,
            eval: EvalConfig {
                ks: vec![10],
                ..EvalConfig::default()
            },
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.negatives == 0 {
            return Err(Error::Config("batch size and negatives per positive must be >= 1".into()));
        }
        if let Some(p) = self.patience {
            if p == 0 || (self.epochs > 0 && p > self.epochs) {
                return Err(Error::Config(format!("patience {p} must be in 1..={}", self.epochs)));
            }
        }
        let a = &self.adam;
        if !(a.learning_rate > 0.0) || !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.epsilon > 0.0) {
            return Err(Error::Config(format!("invalid Adam settings {a:?}")));
        }
        Ok(())
    }
}

/// One epoch's summary. `seconds` is informational and excluded from equality.
#[derive(Debug, Clone)]
pub struct EpochReport {
    /// 1-based.
    pub epoch: usize,
    pub loss: f64,
    /// `None` when the split has no held-out items.
    pub hr10: Option<f64>,
    pub ndcg10: Option<f64>,
    pub seconds: f64,
}

impl PartialEq for EpochReport {
    fn eq(&self, other: &Self) -> bool {
        self.epoch == other.epoch
            && self.loss.to_bits() == other.loss.to_bits()
            && self.hr10.map(f64::to_bits) == other.hr10.map(f64::to_bits)
            && self.ndcg10.map(f64::to_bits) == other.ndcg10.map(f64::to_bits)
    }
}

/// `epoch,loss,hr10,ndcg10` rows; timings are left out so logs are reproducible.
pub fn write_epoch_log<W: Write>(reports: &[EpochReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epoch", "loss", "hr10", "ndcg10"])?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    for r in reports {
        w.write_record([r.epoch.to_string(), format!("{:.6}", r.loss), opt(r.hr10), opt(r.ndcg10)])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: NcfParams,
    pub reports: Vec<EpochReport>,
    /// 1-based epoch whose parameters were returned; 0 for the initialisation.
    pub epoch: usize,
}

/// Train an NCF model of `ctx`'s mode on `split.train`.
pub fn train(split: &LeaveOneOutSplit, ctx: &FeatureContext, hyper: &Hyperparams, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut params = init_params(split.train.n_users(), split.train.n_items(), ctx.mode(), hyper)?;
    crate::model::Scorer::new(&params, ctx)?;
    if cfg.epochs == 0 {
        return Ok(TrainOutcome {
            params,
            reports: Vec::new(),
            epoch: 0,
        });
    }
    if split.train.n_interactions() == 0 {
        return Err(Error::EmptyDataset);
    }
    let validate = split.n_eligible() > 0;
    let mut eval_cfg = cfg.eval.clone();
    eval_cfg.ks = vec![10];

    let mut adam = AdamState::new(cfg.adam, &params);
    let mut buf = GradientBuffer::new(&params);
    let mut reports = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, NcfParams)> = None;
    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let mut examples = sample_train_negatives(split, cfg.negatives, cfg.seed, epoch as u64)?.examples;
        examples.shuffle(&mut keyed_rng(cfg.seed, &[domain::SHUFFLE, epoch as u64]));
        let mut total = 0.0;
        for (b, batch) in examples.chunks(cfg.batch_size).enumerate() {
            let loss = batch_gradients_into(&params, ctx, batch, &mut buf)?;
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    epoch: epoch + 1,
                    batch: b + 1,
                    loss,
                });
            }
            if cfg.freeze_trait_emb {
                if let Some(t) = &mut buf.grads.trait_emb {
                    t.fill(0.0);
                }
            }
            adam_step(&mut params, &buf.grads, &mut adam)?;
            total += loss * batch.len() as f64;
        }
        let (hr10, ndcg10) = if validate {
            let r = evaluate(&params, ctx, split, &eval_cfg)?.report;
            (r.hr_at(10), r.ndcg_at(10))
        } else {
            (None, None)
        };
        let report = EpochReport {
            epoch: epoch + 1,
            loss: total / examples.len() as f64,
            hr10,
            ndcg10,
            seconds: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {:>3}  loss {:.5}  hr@10 {}  ndcg@10 {}  ({:.2}s)",
            report.epoch,
            report.loss,
            hr10.map_or("-".into(), |v| format!("{v:.4}")),
            ndcg10.map_or("-".into(), |v| format!("{v:.4}")),
            report.seconds
        );
        reports.push(report);

        if let Some(h) = hr10 {
            if best.as_ref().is_none_or(|(bh, _, _)| h > *bh) {
                best = Some((h, epoch + 1, params.clone()));
            }
            let since = epoch + 1 - best.as_ref().map_or(0, |b| b.1);
            if cfg.patience.is_some_and(|p| since >= p) {
                log::info!("early stop after epoch {}", epoch + 1);
                break;
            }
        }
    }
    let last = reports.len();
    Ok(match best {
        Some((_, e, p)) if cfg.restore_best => TrainOutcome {
            params: p,
            reports,
            epoch: e,
        },
        _ => TrainOutcome {
            params,
            reports,
            epoch: last,
        },
    })
}

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"PNCF";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: NcfParams,
    pub seed: u64,
    pub epoch: u64,
}

fn mode_code(mode: &PersonalityMode) -> u8 {
    match mode {
        PersonalityMode::Plain => 0,
        PersonalityMode::RandomLabel { .. } => 1,
        PersonalityMode::SameTrait(_) => 2,
        PersonalityMode::MostSalient => 3,
        PersonalityMode::SoftLabeled { .. } => 4,
        PersonalityMode::HardCoded => 5,
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let p = &self.params;
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.push(mode_code(&p.mode));
        match p.mode {
            PersonalityMode::RandomLabel { seed } => out.extend_from_slice(&seed.to_le_bytes()),
            PersonalityMode::SameTrait(t) => out.push(t.index() as u8),
            PersonalityMode::SoftLabeled { temperature } => out.extend_from_slice(&temperature.to_le_bytes()),
            _ => {}
        }
        out.extend_from_slice(&(p.n_users() as u64).to_le_bytes());
        out.extend_from_slice(&(p.n_items() as u64).to_le_bytes());
        out.extend_from_slice(&(EMBEDDING_DIM as u32).to_le_bytes());
        let trait_dim = if p.trait_emb.is_some() { TRAIT_DIM } else { 0 };
        out.extend_from_slice(&(trait_dim as u32).to_le_bytes());
        let widths = p.mlp.widths();
        out.extend_from_slice(&((widths.len() - 1) as u32).to_le_bytes());
        for w in widths {
            out.extend_from_slice(&(w as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.epoch.to_le_bytes());
        for t in p.tensors() {
            for &v in t {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader { bytes, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::Format("bad magic bytes; not a PNCF checkpoint".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "unsupported version {version} (expected {CHECKPOINT_VERSION})"
            )));
        }
        let mode = match r.u8()? {
            0 => PersonalityMode::Plain,
            1 => PersonalityMode::RandomLabel { seed: r.u64()? },
            2 => {
                let t = r.u8()?;
                PersonalityMode::SameTrait(
                    Trait::from_index(t as usize).ok_or_else(|| Error::Format(format!("bad trait index {t}")))?,
                )
            }
            3 => PersonalityMode::MostSalient,
            4 => {
                let temperature = f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
                if !(temperature > 0.0 && temperature.is_finite()) {
                    return Err(Error::Format(format!("bad temperature {temperature}")));
                }
                PersonalityMode::SoftLabeled { temperature }
            }
            5 => PersonalityMode::HardCoded,
            t => return Err(Error::Format(format!("unknown mode tag {t}"))),
        };
        let users = r.u64()? as usize;
        let items = r.u64()? as usize;
        let emb = r.u32()? as usize;
        let trait_dim = r.u32()? as usize;
        if emb != EMBEDDING_DIM {
            return Err(Error::Format(format!("embedding width {emb}, expected {EMBEDDING_DIM}")));
        }
        let expected_trait = if mode.has_trait_emb() { TRAIT_DIM } else { 0 };
        if trait_dim != expected_trait {
            return Err(Error::Format(format!("trait width {trait_dim} invalid for mode {mode}")));
        }
        let n_layers = r.u32()? as usize;
        if n_layers == 0 || n_layers > 64 {
            return Err(Error::Format(format!("implausible layer count {n_layers}")));
        }
        let widths = (0..=n_layers).map(|_| r.u32().map(|w| w as usize)).collect::<Result<Vec<_>>>()?;
        if widths[0] != 2 * EMBEDDING_DIM + mode.feature_dim() || widths[n_layers] != 1 || widths.contains(&0) {
            return Err(Error::Format(format!("layer widths {widths:?} invalid for mode {mode}")));
        }
        let seed = r.u64()?;
        let epoch = r.u64()?;

        let mut lengths = vec![users.checked_mul(EMBEDDING_DIM), items.checked_mul(EMBEDDING_DIM)];
        if trait_dim > 0 {
            lengths.push(Some(5 * TRAIT_DIM));
        }
        for w in widths.windows(2) {
            lengths.push(w[0].checked_mul(w[1]));
            lengths.push(Some(w[1]));
        }
        let total = lengths
            .iter()
            .try_fold(0usize, |acc, l| l.and_then(|l| acc.checked_add(l)))
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::Format("dimension header overflows".into()))?;
        let data = r.take(total)?;
        if r.pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        let mut values = data
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64);
        let mut next = |n: usize| -> Vec<f64> { values.by_ref().take(n).collect() };
        let user_emb = Matrix::from_vec(users, EMBEDDING_DIM, next(users * EMBEDDING_DIM));
        let item_emb = Matrix::from_vec(items, EMBEDDING_DIM, next(items * EMBEDDING_DIM));
        let trait_emb = if trait_dim > 0 {
            Some(Matrix::from_vec(5, TRAIT_DIM, next(5 * TRAIT_DIM)).map_err(non_finite)?)
        } else {
            None
        };
        let layers = widths
            .windows(2)
            .map(|w| {
                Ok(Layer {
                    weight: Matrix::from_vec(w[0], w[1], next(w[0] * w[1])).map_err(non_finite)?,
                    bias: next(w[1]),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let params = NcfParams {
            mode,
            user_emb: user_emb.map_err(non_finite)?,
            item_emb: item_emb.map_err(non_finite)?,
            trait_emb,
            mlp: MlpParams::new(layers)?,
        };
        params.validate().map_err(non_finite)?;
        Ok(Checkpoint { params, seed, epoch })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    /// Load a checkpoint; with `requested` set, its mode tag must match.
    pub fn load(path: &Path, requested: Option<&str>) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let ck = Checkpoint::from_bytes(&bytes)?;
        if let Some(tag) = requested {
            if ck.params.mode.tag() != tag {
                return Err(Error::ModeMismatch {
                    found: ck.params.mode.tag().to_string(),
                    requested: tag.to_string(),
                });
            }
        }
        Ok(ck)
    }
}

fn non_finite(e: Error) -> Error {
    Error::Format(format!("invalid parameter data: {e}"))
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(Error::Truncated {
            needed: self.pos.saturating_add(n),
            available: self.bytes.len(),
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
