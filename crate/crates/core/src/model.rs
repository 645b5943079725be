//! The NCF scorer and its personality features.
//!
//! A prediction is `MLP([user_emb[u] ‖ item_emb[i] ‖ feature(u)])` through a
//! logistic output. The feature depends on the [`PersonalityMode`]:
//!
//! | mode          | width | feature                                   |
//! |---------------|-------|-------------------------------------------|
//! | `Plain`       | 0     | none                                      |
//! | `RandomLabel` | 4     | trait-embedding row of a random label     |
//! | `SameTrait`   | 4     | trait-embedding row of one fixed trait    |
//! | `MostSalient` | 4     | trait-embedding row of the top trait      |
//! | `SoftLabeled` | 4     | softmax-weighted sum of all five rows     |
//! | `HardCoded`   | 5     | scores / 100, not learnable               |

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::corpus::TrainExample;
use crate::numerics::{bce_logit_grad, bce_loss, relative_error, Matrix, MlpParams, MlpWorkspace, Tensors};
use crate::personality::{
    assign_baseline_labels, hard_vector, most_salient, soft_weights, BaselineLabels, PersonalityTable, Trait,
};
use crate::rng::{domain, keyed_rng};
use crate::{Error, Result};

pub const EMBEDDING_DIM: usize = 16;
pub const TRAIT_DIM: usize = 4;
pub const DEFAULT_TEMPERATURE: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PersonalityMode {
    Plain,
    RandomLabel { seed: u64 },
    SameTrait(Trait),
    MostSalient,
    SoftLabeled { temperature: f64 },
    HardCoded,
}

impl PersonalityMode {
    pub const TAGS: [&'static str; 6] = ["plain", "random", "same", "salient", "soft", "hard"];

    pub fn feature_dim(&self) -> usize {
        match self {
            PersonalityMode::Plain => 0,
            PersonalityMode::HardCoded => 5,
            _ => TRAIT_DIM,
        }
    }

    pub fn has_trait_emb(&self) -> bool {
        !matches!(self, PersonalityMode::Plain | PersonalityMode::HardCoded)
    }

    pub fn needs_scores(&self) -> bool {
        matches!(
            self,
            PersonalityMode::MostSalient | PersonalityMode::SoftLabeled { .. } | PersonalityMode::HardCoded
        )
    }

    pub fn tag(&self) -> &'static str {
        match self {
            PersonalityMode::Plain => "plain",
            PersonalityMode::RandomLabel { .. } => "random",
            PersonalityMode::SameTrait(_) => "same",
            PersonalityMode::MostSalient => "salient",
            PersonalityMode::SoftLabeled { .. } => "soft",
            PersonalityMode::HardCoded => "hard",
        }
    }

    /// Mode from its tag; `seed`, `trait_` and `temperature` fill the payload
    /// of the modes that carry one.
    pub fn from_tag(tag: &str, seed: u64, trait_: Trait, temperature: f64) -> Result<Self> {
        Ok(match tag {
            "plain" => PersonalityMode::Plain,
            "random" => PersonalityMode::RandomLabel { seed },
            "same" => PersonalityMode::SameTrait(trait_),
            "salient" => PersonalityMode::MostSalient,
            "soft" => {
                if !(temperature > 0.0 && temperature.is_finite()) {
                    return Err(Error::Config(format!("temperature must be > 0, got {temperature}")));
                }
                PersonalityMode::SoftLabeled { temperature }
            }
            "hard" => PersonalityMode::HardCoded,
            other => {
                return Err(Error::Config(format!(
                    "unknown mode `{other}`; expected one of {}",
                    Self::TAGS.join(", ")
                )))
            }
        })
    }

    /// Human-readable row label, e.g. `NCF+Soft-labeled`.
    pub fn label(&self) -> &'static str {
        match self {
            PersonalityMode::Plain => "NCF",
            PersonalityMode::RandomLabel { .. } => "NCF+Random",
            PersonalityMode::SameTrait(_) => "NCF+Same",
            PersonalityMode::MostSalient => "NCF+Most-salient",
            PersonalityMode::SoftLabeled { .. } => "NCF+Soft-labeled",
            PersonalityMode::HardCoded => "NCF+Hard-coded",
        }
    }
}

impl fmt::Display for PersonalityMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PersonalityMode::RandomLabel { seed } => write!(f, "random(seed={seed})"),
            PersonalityMode::SameTrait(t) => write!(f, "same({t})"),
            PersonalityMode::SoftLabeled { temperature } => write!(f, "soft(T={temperature})"),
            other => f.write_str(other.tag()),
        }
    }
}

/// What one user contributes to the MLP input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UserFeature {
    None,
    /// One trait-embedding row.
    Label(Trait),
    /// Weighted sum of trait-embedding rows.
    Mixture([f64; 5]),
    /// Constant input vector.
    Fixed([f64; 5]),
}

/// Per-user feature recipes for one mode, indexed like the interaction set.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureContext {
    mode: PersonalityMode,
    users: Vec<UserFeature>,
}

impl FeatureContext {
    /// Resolve every user's feature. Score-dependent modes require an entry
    /// for every user id.
    pub fn build(mode: PersonalityMode, user_ids: &[String], personalities: Option<&PersonalityTable>) -> Result<Self> {
        let users = match mode {
            PersonalityMode::Plain => vec![UserFeature::None; user_ids.len()],
            PersonalityMode::RandomLabel { seed } => {
                assign_baseline_labels(user_ids.len(), BaselineLabels::Random { seed })
                    .into_iter()
                    .map(UserFeature::Label)
                    .collect()
            }
            PersonalityMode::SameTrait(t) => vec![UserFeature::Label(t); user_ids.len()],
            _ => {
                let table = personalities.ok_or_else(|| {
                    Error::Config(format!(
                        "mode `{}` needs personality scores; pass a personality CSV or use plain/random/same",
                        mode.tag()
                    ))
                })?;
                user_ids
                    .iter()
                    .map(|id| {
                        let s = table.scores(id).ok_or_else(|| {
                            Error::Config(format!(
                                "mode `{}` needs scores for every user; `{id}` has none in the personality table",
                                mode.tag()
                            ))
                        })?;
                        Ok(match mode {
                            PersonalityMode::MostSalient => UserFeature::Label(most_salient(&s)),
                            PersonalityMode::SoftLabeled { temperature } => {
                                UserFeature::Mixture(soft_weights(&s, temperature)?.values())
                            }
                            _ => UserFeature::Fixed(hard_vector(&s)),
                        })
                    })
                    .collect::<Result<_>>()?
            }
        };
        Ok(FeatureContext { mode, users })
    }

    pub fn plain(users: usize) -> Self {
        FeatureContext {
            mode: PersonalityMode::Plain,
            users: vec![UserFeature::None; users],
        }
    }

    pub fn mode(&self) -> PersonalityMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn get(&self, u: usize) -> Option<&UserFeature> {
        self.users.get(u)
    }

    fn check(&self, params: &NcfParams) -> Result<()> {
        if self.mode != params.mode {
            return Err(Error::Config(format!(
                "feature context is for mode `{}` but the model was built for `{}`",
                self.mode, params.mode
            )));
        }
        if self.users.len() != params.n_users() {
            return Err(Error::Config(format!(
                "feature context covers {} users, model has {}",
                self.users.len(),
                params.n_users()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    pub hidden: Vec<usize>,
    /// Standard deviation of the embedding initialisation.
    pub init_std: f64,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            hidden: vec![64, 32, 16, 8],
            init_std: 0.01,
            seed: 0,
        }
    }
}

impl Hyperparams {
    pub fn with_seed(seed: u64) -> Self {
        Hyperparams {
            seed,
            ..Hyperparams::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NcfParams {
    pub mode: PersonalityMode,
    pub user_emb: Matrix,
    pub item_emb: Matrix,
    /// 5 × 4; present exactly when the mode has learnable trait vectors.
    pub trait_emb: Option<Matrix>,
    pub mlp: MlpParams,
}

fn normal_matrix(rows: usize, cols: usize, std: f64, seed: u64, key: u64) -> Result<Matrix> {
    let mut rng = keyed_rng(seed, &[domain::INIT, key]);
    let normal = Normal::new(0.0, std).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| normal.sample(&mut rng)).collect())
}

pub fn init_params(users: usize, items: usize, mode: PersonalityMode, hyper: &Hyperparams) -> Result<NcfParams> {
    if users == 0 || items == 0 {
        return Err(Error::InvalidArgument("model needs at least one user and one item".into()));
    }
    let mut widths = vec![2 * EMBEDDING_DIM + mode.feature_dim()];
    widths.extend_from_slice(&hyper.hidden);
    widths.push(1);
    let mut rng = keyed_rng(hyper.seed, &[domain::INIT, 0]);
    Ok(NcfParams {
        mode,
        user_emb: normal_matrix(users, EMBEDDING_DIM, hyper.init_std, hyper.seed, 1)?,
        item_emb: normal_matrix(items, EMBEDDING_DIM, hyper.init_std, hyper.seed, 2)?,
        trait_emb: if mode.has_trait_emb() {
            Some(normal_matrix(5, TRAIT_DIM, hyper.init_std, hyper.seed, 3)?)
        } else {
            None
        },
        mlp: MlpParams::glorot(&widths, &mut rng)?,
    })
}

impl NcfParams {
    pub fn n_users(&self) -> usize {
        self.user_emb.rows()
    }

    pub fn n_items(&self) -> usize {
        self.item_emb.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.mode.feature_dim()
    }

    pub fn input_width(&self) -> usize {
        2 * EMBEDDING_DIM + self.feature_dim()
    }

    pub fn zeros_like(&self) -> Self {
        NcfParams {
            mode: self.mode,
            user_emb: Matrix::zeros(self.user_emb.rows(), EMBEDDING_DIM),
            item_emb: Matrix::zeros(self.item_emb.rows(), EMBEDDING_DIM),
            trait_emb: self.trait_emb.as_ref().map(|_| Matrix::zeros(5, TRAIT_DIM)),
            mlp: self.mlp.zeros_like(),
        }
    }

    /// Check the structural contract (widths, trait table presence, finiteness).
    pub fn validate(&self) -> Result<()> {
        if self.user_emb.cols() != EMBEDDING_DIM || self.item_emb.cols() != EMBEDDING_DIM {
            return Err(Error::shape(
                format!("embeddings {} / {}", self.user_emb.shape_str(), self.item_emb.shape_str()),
                format!("width {EMBEDDING_DIM}"),
            ));
        }
        match (&self.trait_emb, self.mode.has_trait_emb()) {
            (Some(t), true) if t.shape() == (5, TRAIT_DIM) => {}
            (None, false) => {}
            (t, _) => {
                return Err(Error::shape(
                    format!("trait table {:?}", t.as_ref().map(Matrix::shape)),
                    format!("mode {}", self.mode),
                ))
            }
        }
        if self.mlp.input_width() != self.input_width() {
            return Err(Error::shape(
                format!("mlp input {}", self.mlp.input_width()),
                format!("{}", self.input_width()),
            ));
        }
        if self.tensors().iter().any(|t| t.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidArgument("non-finite parameter".into()));
        }
        Ok(())
    }

    fn check_indices(&self, u: usize, i: usize) -> Result<()> {
        if u >= self.n_users() {
            return Err(Error::Index {
                what: "user",
                index: u,
                len: self.n_users(),
            });
        }
        if i >= self.n_items() {
            return Err(Error::Index {
                what: "item",
                index: i,
                len: self.n_items(),
            });
        }
        Ok(())
    }

    fn write_feature(&self, f: &UserFeature, out: &mut [f64]) {
        match f {
            UserFeature::None => {}
            UserFeature::Label(t) => {
                out.copy_from_slice(self.trait_emb.as_ref().expect("label mode has trait table").row(t.index()))
            }
            UserFeature::Mixture(w) => {
                let table = self.trait_emb.as_ref().expect("mixture mode has trait table");
                out.fill(0.0);
                for (t, &wt) in w.iter().enumerate() {
                    for (o, &e) in out.iter_mut().zip(table.row(t)) {
                        *o += wt * e;
                    }
                }
            }
            UserFeature::Fixed(v) => out.copy_from_slice(v),
        }
    }

    /// Probability that user `u` interacts with item `i`.
    pub fn predict(&self, u: usize, i: usize, feature: &[f64]) -> Result<f64> {
        self.check_indices(u, i)?;
        if feature.len() != self.feature_dim() {
            return Err(Error::shape(
                format!("feature len {}", feature.len()),
                format!("mode {} width {}", self.mode, self.feature_dim()),
            ));
        }
        Ok(self.mlp.forward(&self.assemble(u, i, feature))?)
    }

    /// `[user_emb[u] ‖ item_emb[i] ‖ feature]`
    pub fn assemble(&self, u: usize, i: usize, feature: &[f64]) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.input_width());
        x.extend_from_slice(self.user_emb.row(u));
        x.extend_from_slice(self.item_emb.row(i));
        x.extend_from_slice(feature);
        x
    }
}

impl Tensors for NcfParams {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut v = vec![self.user_emb.as_slice(), self.item_emb.as_slice()];
        if let Some(t) = &self.trait_emb {
            v.push(t.as_slice());
        }
        v.extend(self.mlp.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = vec![self.user_emb.as_mut_slice(), self.item_emb.as_mut_slice()];
        if let Some(t) = &mut self.trait_emb {
            v.push(t.as_mut_slice());
        }
        v.extend(self.mlp.tensors_mut());
        v
    }
}

/// The personality feature of user `u` under the context's mode.
pub fn personality_feature(params: &NcfParams, ctx: &FeatureContext, u: usize) -> Result<Vec<f64>> {
    ctx.check(params)?;
    let f = ctx.get(u).ok_or(Error::Index {
        what: "user",
        index: u,
        len: ctx.len(),
    })?;
    let mut out = vec![0.0; params.feature_dim()];
    params.write_feature(f, &mut out);
    Ok(out)
}

/// Reusable buffers for scoring many items of one user.
#[derive(Debug)]
pub struct Scorer<'a> {
    params: &'a NcfParams,
    ctx: &'a FeatureContext,
    ws: MlpWorkspace,
    input: Vec<f64>,
}

impl<'a> Scorer<'a> {
    pub fn new(params: &'a NcfParams, ctx: &'a FeatureContext) -> Result<Self> {
        ctx.check(params)?;
        Ok(Scorer {
            params,
            ctx,
            ws: params.mlp.workspace(),
            input: vec![0.0; params.input_width()],
        })
    }

    /// Scores of `items` for user `u`, in the same order.
    pub fn score_items(&mut self, u: usize, items: &[usize]) -> Result<Vec<f64>> {
        let p = self.params;
        p.check_indices(u, 0)?;
        let d = EMBEDDING_DIM;
        self.input[..d].copy_from_slice(p.user_emb.row(u));
        p.write_feature(&self.ctx.users[u], &mut self.input[2 * d..]);
        items
            .iter()
            .map(|&i| {
                p.check_indices(u, i)?;
                self.input[d..2 * d].copy_from_slice(p.item_emb.row(i));
                Ok(p.mlp.forward_with(&self.input, &mut self.ws))
            })
            .collect()
    }
}

/// Gradient accumulator reused across batches.
#[derive(Debug, Clone)]
pub struct GradientBuffer {
    pub grads: NcfParams,
    ws: MlpWorkspace,
    input: Vec<f64>,
    d_input: Vec<f64>,
}

impl GradientBuffer {
    pub fn new(params: &NcfParams) -> Self {
        GradientBuffer {
            grads: params.zeros_like(),
            ws: params.mlp.workspace(),
            input: vec![0.0; params.input_width()],
            d_input: vec![0.0; params.input_width()],
        }
    }
}

fn validate_batch(params: &NcfParams, ctx: &FeatureContext, batch: &[TrainExample]) -> Result<()> {
    ctx.check(params)?;
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    for ex in batch {
        params.check_indices(ex.user, ex.item)?;
    }
    Ok(())
}

/// Mean BCE loss of a batch and its gradients with respect to every
/// parameter, written into `buf.grads` (previous contents are discarded).
///
/// Embedding rows not referenced by the batch get exactly zero gradient; the
/// hard-coded feature is input and receives none.
pub fn batch_gradients_into(
    params: &NcfParams,
    ctx: &FeatureContext,
    batch: &[TrainExample],
    buf: &mut GradientBuffer,
) -> Result<f64> {
    validate_batch(params, ctx, batch)?;
    for t in buf.grads.tensors_mut() {
        t.fill(0.0);
    }
    let d = EMBEDDING_DIM;
    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    for ex in batch {
        let feature = &ctx.users[ex.user];
        buf.input[..d].copy_from_slice(params.user_emb.row(ex.user));
        buf.input[d..2 * d].copy_from_slice(params.item_emb.row(ex.item));
        params.write_feature(feature, &mut buf.input[2 * d..]);
        let p = params.mlp.forward_with(&buf.input, &mut buf.ws);
        total += bce_loss(p, ex.label)?.0;
        params.mlp.backward_with(
            &mut buf.ws,
            bce_logit_grad(p, ex.label) * scale,
            &mut buf.grads.mlp,
            &mut buf.d_input,
        );
        for (g, &di) in buf.grads.user_emb.row_mut(ex.user).iter_mut().zip(&buf.d_input[..d]) {
            *g += di;
        }
        for (g, &di) in buf.grads.item_emb.row_mut(ex.item).iter_mut().zip(&buf.d_input[d..2 * d]) {
            *g += di;
        }
        let df = &buf.d_input[2 * d..];
        match feature {
            UserFeature::Label(t) => {
                let table = buf.grads.trait_emb.as_mut().expect("label mode has trait table");
                for (g, &di) in table.row_mut(t.index()).iter_mut().zip(df) {
                    *g += di;
                }
            }
            UserFeature::Mixture(w) => {
                let table = buf.grads.trait_emb.as_mut().expect("mixture mode has trait table");
                for (t, &wt) in w.iter().enumerate() {
                    for (g, &di) in table.row_mut(t).iter_mut().zip(df) {
                        *g += wt * di;
                    }
                }
            }
            UserFeature::None | UserFeature::Fixed(_) => {}
        }
    }
    Ok(total * scale)
}

/// Allocating convenience form of [`batch_gradients_into`].
pub fn batch_gradients(params: &NcfParams, ctx: &FeatureContext, batch: &[TrainExample]) -> Result<(f64, NcfParams)> {
    let mut buf = GradientBuffer::new(params);
    let loss = batch_gradients_into(params, ctx, batch, &mut buf)?;
    Ok((loss, buf.grads))
}

/// Mean BCE loss of a batch.
pub fn batch_loss(params: &NcfParams, ctx: &FeatureContext, batch: &[TrainExample]) -> Result<f64> {
    validate_batch(params, ctx, batch)?;
    let mut ws = params.mlp.workspace();
    let mut input = vec![0.0; params.input_width()];
    let d = EMBEDDING_DIM;
    let mut total = 0.0;
    for ex in batch {
        input[..d].copy_from_slice(params.user_emb.row(ex.user));
        input[d..2 * d].copy_from_slice(params.item_emb.row(ex.item));
        params.write_feature(&ctx.users[ex.user], &mut input[2 * d..]);
        total += bce_loss(params.mlp.forward_with(&input, &mut ws), ex.label)?.0;
    }
    Ok(total / batch.len() as f64)
}

/// Worst relative error between [`batch_gradients`] and central finite
/// differences of [`batch_loss`] over `samples` randomly chosen parameters.
pub fn check_batch_gradients(
    params: &NcfParams,
    ctx: &FeatureContext,
    batch: &[TrainExample],
    samples: usize,
    h: f64,
    seed: u64,
) -> Result<f64> {
    if !(h > 0.0 && h.is_finite()) || samples == 0 {
        return Err(Error::InvalidArgument("need h > 0 and at least one sample".into()));
    }
    let (_, analytic) = batch_gradients(params, ctx, batch)?;
    let lengths = params.tensor_lengths();
    let total: usize = lengths.iter().sum();
    let mut rng = keyed_rng(seed, &[domain::GRAD_CHECK]);
    let mut probe = params.clone();
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let (t, j) = crate::numerics::locate(&lengths, rng.random_range(0..total));
        let orig = probe.tensors()[t][j];
        probe.tensors_mut()[t][j] = orig + h;
        let up = batch_loss(&probe, ctx, batch)?;
        probe.tensors_mut()[t][j] = orig - h;
        let down = batch_loss(&probe, ctx, batch)?;
        probe.tensors_mut()[t][j] = orig;
        worst = worst.max(relative_error(analytic.tensors()[t][j], (up - down) / (2.0 * h)));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::mlp_forward_backward;
    use crate::personality::{OceanScores, Provenance};
    use proptest::prelude::*;
    use rand::Rng;

    const ALL_MODES: [PersonalityMode; 6] = [
        PersonalityMode::Plain,
        PersonalityMode::RandomLabel { seed: 4 },
        PersonalityMode::SameTrait(Trait::Openness),
        PersonalityMode::MostSalient,
        PersonalityMode::SoftLabeled { temperature: 100.0 },
        PersonalityMode::HardCoded,
    ];

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|u| format!("u{u}")).collect()
    }

    fn table(scores: &[[f64; 5]]) -> PersonalityTable {
        let mut t = PersonalityTable::new();
        for (u, s) in scores.iter().enumerate() {
            t.insert(format!("u{u}"), OceanScores::new(*s).unwrap(), Provenance::Imported)
                .unwrap();
        }
        t
    }

    fn toy(mode: PersonalityMode, users: usize, seed: u64, std: f64) -> (NcfParams, FeatureContext) {
        let scores: Vec<[f64; 5]> = (0..users)
            .map(|u| {
                let mut r = keyed_rng(seed, &[99, u as u64]);
                [(); 5].map(|_| r.random_range(0.0..100.0))
            })
            .collect();
        let hyper = Hyperparams {
            hidden: vec![8, 6, 4, 3],
            init_std: std,
            seed,
        };
        let mut p = init_params(users, 3, mode, &hyper).unwrap();
        // nonzero biases keep every pre-activation off the rectifier kink
        let mut r = keyed_rng(seed, &[98]);
        for l in p.mlp.layers_mut() {
            for b in &mut l.bias {
                *b = r.random_range(-0.2..0.2);
            }
        }
        let ctx = FeatureContext::build(mode, &ids(users), Some(&table(&scores))).unwrap();
        (p, ctx)
    }

    fn ex(user: usize, item: usize, label: f64) -> TrainExample {
        TrainExample { user, item, label }
    }

    #[test]
    fn dimension_contract() {
        for mode in ALL_MODES {
            let p = init_params(4, 5, mode, &Hyperparams::default()).unwrap();
            let expected = match mode {
                PersonalityMode::Plain => 32,
                PersonalityMode::HardCoded => 37,
                _ => 36,
            };
            assert_eq!(p.mlp.input_width(), expected, "{mode}");
            assert_eq!(p.mlp.widths(), vec![expected, 64, 32, 16, 8, 1]);
            assert_eq!(p.trait_emb.is_some(), mode.has_trait_emb());
            p.validate().unwrap();
        }
    }

    #[test]
    fn init_is_deterministic_and_scaled() {
        let h = Hyperparams::with_seed(11);
        let a = init_params(3000, 3250, PersonalityMode::MostSalient, &h).unwrap();
        assert_eq!(a, init_params(3000, 3250, PersonalityMode::MostSalient, &h).unwrap());
        assert_ne!(a, init_params(3000, 3250, PersonalityMode::MostSalient, &Hyperparams::with_seed(12)).unwrap());
        let draws: Vec<f64> = a.user_emb.as_slice().iter().chain(a.item_emb.as_slice()).copied().collect();
        assert!(draws.len() >= 100_000);
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let std = (draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!((std - 0.01).abs() < 0.0005, "{std}");
        for l in a.mlp.layers() {
            let bound = (6.0 / (l.n_in() + l.n_out()) as f64).sqrt();
            assert!(l.weight.as_slice().iter().all(|w| w.abs() <= bound));
            assert!(l.bias.iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn features_per_mode() {
        let mixed_scores = [30.0, 70.0, 50.0, 30.0, 20.0];
        let reviewer_scores = [42.71, 34.87, 54.39, 54.05, 25.96];
        let users = ids(2);
        let t = table(&[mixed_scores, reviewer_scores]);
        let hard = init_params(2, 2, PersonalityMode::HardCoded, &Hyperparams::default()).unwrap();
        let ctx = FeatureContext::build(PersonalityMode::HardCoded, &users, Some(&t)).unwrap();
        assert_eq!(personality_feature(&hard, &ctx, 0).unwrap(), vec![0.3, 0.7, 0.5, 0.3, 0.2]);

        let sal = init_params(2, 2, PersonalityMode::MostSalient, &Hyperparams::default()).unwrap();
        let ctx = FeatureContext::build(PersonalityMode::MostSalient, &users, Some(&t)).unwrap();
        let row = sal.trait_emb.as_ref().unwrap().row(Trait::Extroversion.index()).to_vec();
        assert_eq!(personality_feature(&sal, &ctx, 1).unwrap(), row);

        let plain = init_params(2, 2, PersonalityMode::Plain, &Hyperparams::default()).unwrap();
        assert!(personality_feature(&plain, &FeatureContext::plain(2), 0).unwrap().is_empty());
    }

    #[test]
    fn soft_uniform_scores_average_rows() {
        let mode = PersonalityMode::SoftLabeled { temperature: 100.0 };
        let p = init_params(1, 1, mode, &Hyperparams::with_seed(3)).unwrap();
        let ctx = FeatureContext::build(mode, &ids(1), Some(&table(&[[40.0; 5]]))).unwrap();
        let f = personality_feature(&p, &ctx, 0).unwrap();
        let table = p.trait_emb.as_ref().unwrap();
        for (c, v) in f.iter().enumerate() {
            let mean = (0..5).map(|t| table.get(t, c)).sum::<f64>() / 5.0;
            assert!((v - mean).abs() < 1e-15);
        }
    }

    #[test]
    fn soft_approaches_salient_at_low_temperature() {
        let scores = [[12.0, 80.0, 33.0, 79.5, 5.0]];
        let soft = PersonalityMode::SoftLabeled { temperature: 1e-3 };
        let mut p = init_params(1, 1, soft, &Hyperparams::with_seed(5)).unwrap();
        let f_soft = personality_feature(&p, &FeatureContext::build(soft, &ids(1), Some(&table(&scores))).unwrap(), 0).unwrap();
        p.mode = PersonalityMode::MostSalient;
        let ctx = FeatureContext::build(PersonalityMode::MostSalient, &ids(1), Some(&table(&scores))).unwrap();
        let f_sal = personality_feature(&p, &ctx, 0).unwrap();
        for (a, b) in f_soft.iter().zip(&f_sal) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn missing_context_is_config_error() {
        for mode in [PersonalityMode::MostSalient, PersonalityMode::HardCoded] {
            assert!(matches!(FeatureContext::build(mode, &ids(2), None), Err(Error::Config(_))));
            let partial = table(&[[1.0; 5]]);
            assert!(matches!(
                FeatureContext::build(mode, &ids(2), Some(&partial)),
                Err(Error::Config(_))
            ));
        }
        assert!(FeatureContext::build(PersonalityMode::SameTrait(Trait::Openness), &ids(2), None).is_ok());
        let p = init_params(2, 2, PersonalityMode::Plain, &Hyperparams::default()).unwrap();
        let wrong = FeatureContext::build(PersonalityMode::SameTrait(Trait::Openness), &ids(2), None).unwrap();
        assert!(matches!(personality_feature(&p, &wrong, 0), Err(Error::Config(_))));
    }

    #[test]
    fn zero_params_predict_half() {
        let mut p = init_params(3, 4, PersonalityMode::Plain, &Hyperparams::default()).unwrap();
        for t in p.tensors_mut() {
            t.fill(0.0);
        }
        for u in 0..3 {
            for i in 0..4 {
                assert_eq!(p.predict(u, i, &[]).unwrap(), 0.5);
            }
        }
        assert!(matches!(p.predict(3, 0, &[]), Err(Error::Index { what: "user", .. })));
        assert!(matches!(p.predict(0, 4, &[]), Err(Error::Index { what: "item", .. })));
    }

    #[test]
    fn final_bias_is_monotone() {
        let mut p = init_params(2, 2, PersonalityMode::Plain, &Hyperparams::with_seed(1)).unwrap();
        let mut last = p.predict(1, 1, &[]).unwrap();
        for _ in 0..5 {
            p.mlp.layers_mut().last_mut().unwrap().bias[0] += 0.25;
            let next = p.predict(1, 1, &[]).unwrap();
            assert!(next > last);
            last = next;
        }
    }

    #[test]
    fn predict_matches_mlp_cross_check() {
        for mode in ALL_MODES {
            let (p, ctx) = toy(mode, 3, 7, 0.3);
            let f = personality_feature(&p, &ctx, 2).unwrap();
            let x = p.assemble(2, 1, &f);
            let direct = mlp_forward_backward(&p.mlp, &x, 1.0).unwrap().prob;
            assert_eq!(p.predict(2, 1, &f).unwrap(), direct);
            let mut s = Scorer::new(&p, &ctx).unwrap();
            assert_eq!(s.score_items(2, &[1]).unwrap()[0], direct);
        }
    }

    #[test]
    fn gradient_sparsity_and_mode_contract() {
        for mode in ALL_MODES {
            let (p, ctx) = toy(mode, 5, 2, 0.3);
            let (_, g) = batch_gradients(&p, &ctx, &[ex(0, 1, 1.0), ex(1, 2, 0.0)]).unwrap();
            for u in 2..5 {
                assert!(g.user_emb.row(u).iter().all(|&v| v == 0.0));
            }
            assert!(g.item_emb.row(0).iter().all(|&v| v == 0.0));
            assert!(g.user_emb.row(0).iter().any(|&v| v != 0.0));
            match mode {
                PersonalityMode::Plain | PersonalityMode::HardCoded => assert!(g.trait_emb.is_none()),
                PersonalityMode::SameTrait(t) => {
                    let table = g.trait_emb.unwrap();
                    for r in Trait::ALL.iter().filter(|&&r| r != t) {
                        assert!(table.row(r.index()).iter().all(|&v| v == 0.0));
                    }
                }
                _ => {}
            }
        }
    }

    #[test]
    fn soft_gradient_is_weight_scaled() {
        let mode = PersonalityMode::SoftLabeled { temperature: 100.0 };
        let (p, ctx) = toy(mode, 1, 9, 0.3);
        let (_, g) = batch_gradients(&p, &ctx, &[ex(0, 0, 1.0)]).unwrap();
        let UserFeature::Mixture(w) = *ctx.get(0).unwrap() else { panic!() };
        let table = g.trait_emb.unwrap();
        for t in 1..5 {
            for c in 0..TRAIT_DIM {
                let ratio = table.get(t, c) / table.get(0, c);
                assert!((ratio - w[t] / w[0]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn finite_differences_all_modes() {
        let batch = [ex(0, 0, 1.0), ex(1, 2, 0.0), ex(2, 1, 1.0), ex(0, 2, 0.0)];
        for mode in ALL_MODES {
            let (p, ctx) = toy(mode, 3, 13, 0.5);
            let err = check_batch_gradients(&p, &ctx, &batch, 400, 1e-5, 1).unwrap();
            assert!(err < 1e-4, "{mode}: {err}");
        }
    }

    #[test]
    fn same_equals_salient_when_labels_agree() {
        let scores = [[10.0, 20.0, 90.0, 30.0, 40.0], [0.0, 5.0, 60.0, 50.0, 1.0]];
        let same = PersonalityMode::SameTrait(Trait::Extroversion);
        let p_same = init_params(2, 3, same, &Hyperparams::with_seed(2)).unwrap();
        let mut p_sal = p_same.clone();
        p_sal.mode = PersonalityMode::MostSalient;
        let c_same = FeatureContext::build(same, &ids(2), None).unwrap();
        let c_sal = FeatureContext::build(PersonalityMode::MostSalient, &ids(2), Some(&table(&scores))).unwrap();
        for u in 0..2 {
            let a = Scorer::new(&p_same, &c_same).unwrap().score_items(u, &[0, 1, 2]).unwrap();
            let b = Scorer::new(&p_sal, &c_sal).unwrap().score_items(u, &[0, 1, 2]).unwrap();
            assert_eq!(a, b);
        }
    }

    proptest! {
        #[test]
        fn predictions_are_probabilities(seed in 0u64..500, mode_ix in 0usize..6, u in 0usize..3, i in 0usize..3) {
            let (p, ctx) = toy(ALL_MODES[mode_ix], 3, seed, 0.5);
            let f = personality_feature(&p, &ctx, u).unwrap();
            let prob = p.predict(u, i, &f).unwrap();
            prop_assert!(prob > 0.0 && prob < 1.0);
            prop_assert_eq!(prob, p.predict(u, i, &f).unwrap());
        }
    }
}
