//! Leave-one-out ranking metrics, the per-trait breakdown and annotation agreement.
//!
//! Each eligible user's held-out item is ranked against sampled unobserved
//! items by predicted probability, descending; equal scores rank the lower
//! item index first.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;

use crate::corpus::{InteractionSet, LeaveOneOutSplit};
use crate::model::{FeatureContext, NcfParams, Scorer};
use crate::personality::{most_salient, PersonalityTable, Trait};
use crate::rng::{domain, keyed_rng};
use crate::{Error, Result};

pub const DEFAULT_KS: [usize; 3] = [3, 5, 10];

/// Which unobserved items compete with the held-out item.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CandidatePool {
    /// Up to this many sampled unobserved items (all of them if fewer exist).
    Sampled(usize),
    All,
}

impl FromStr for CandidatePool {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "all" => Ok(CandidatePool::All),
            n => n
                .parse()
                .ok()
                .filter(|&n: &usize| n >= 1)
                .map(CandidatePool::Sampled)
                .ok_or_else(|| Error::Config(format!("eval negatives must be a positive count or `all`, got `{s}`"))),
        }
    }
}

impl fmt::Display for CandidatePool {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CandidatePool::Sampled(n) => write!(f, "{n}"),
            CandidatePool::All => f.write_str("all"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalConfig {
    pub candidates: CandidatePool,
    pub seed: u64,
    pub ks: Vec<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            candidates: CandidatePool::Sampled(99),
            seed: 0,
            ks: DEFAULT_KS.to_vec(),
        }
    }
}

impl EvalConfig {
    fn validate(&self) -> Result<()> {
        if self.ks.is_empty() || self.ks.contains(&0) {
            return Err(Error::Config("K values must be >= 1".into()));
        }
        if self.candidates == CandidatePool::Sampled(0) {
            return Err(Error::Config("need at least one sampled negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub user: usize,
    /// Candidates by score descending, ties by item index ascending.
    pub order: Vec<usize>,
    pub held_out: usize,
    /// 1-based.
    pub rank: usize,
}

/// 1-based rank of `target` among `items` under the tie rule, without sorting.
pub fn rank_of(items: &[usize], scores: &[f64], target: usize) -> Result<usize> {
    let pos = items
        .iter()
        .position(|&i| i == target)
        .ok_or_else(|| Error::Protocol(format!("item {target} is not among the candidates")))?;
    let s = scores[pos];
    Ok(1 + items
        .iter()
        .zip(scores)
        .filter(|&(&i, &c)| c > s || (c == s && i < target))
        .count())
}

/// Candidate order under the tie rule.
pub fn order_by_scores(items: &[usize], scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..items.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(items[a].cmp(&items[b])));
    idx.into_iter().map(|k| items[k]).collect()
}

fn check_candidates(split: &LeaveOneOutSplit, user: usize, held_out: usize, negatives: &[usize]) -> Result<()> {
    let mut seen = std::collections::HashSet::with_capacity(negatives.len());
    for &n in negatives {
        if split.is_observed(user, n) || n == held_out {
            return Err(Error::Protocol(format!(
                "negative item {n} overlaps the observed items of user {user}"
            )));
        }
        if !seen.insert(n) {
            return Err(Error::Protocol(format!("negative item {n} listed twice for user {user}")));
        }
    }
    Ok(())
}

/// Score the held-out item and `negatives` for `user` and rank them.
pub fn rank_candidates(
    params: &NcfParams,
    ctx: &FeatureContext,
    split: &LeaveOneOutSplit,
    user: usize,
    held_out: usize,
    negatives: &[usize],
) -> Result<RankedList> {
    check_candidates(split, user, held_out, negatives)?;
    let mut items = Vec::with_capacity(negatives.len() + 1);
    items.push(held_out);
    items.extend_from_slice(negatives);
    let scores = Scorer::new(params, ctx)?.score_items(user, &items)?;
    Ok(RankedList {
        user,
        rank: rank_of(&items, &scores, held_out)?,
        order: order_by_scores(&items, &scores),
        held_out,
    })
}

/// `(hr, ndcg)` for a single relevant item at 1-based `rank`.
pub fn metrics_at_k(rank: usize, k: usize) -> Result<(f64, f64)> {
    if k == 0 || rank == 0 {
        return Err(Error::InvalidArgument("rank and K must be >= 1".into()));
    }
    Ok(if rank <= k {
        (1.0, 1.0 / ((rank + 1) as f64).log2())
    } else {
        (0.0, 0.0)
    })
}

/// Unobserved items for `user`: all of them, or a keyed sample without replacement.
pub fn eval_negatives(split: &LeaveOneOutSplit, user: usize, pool: CandidatePool, seed: u64) -> Vec<usize> {
    let mut unseen: Vec<usize> = (0..split.train.n_items())
        .filter(|&i| !split.is_observed(user, i))
        .collect();
    if let CandidatePool::Sampled(n) = pool {
        if n < unseen.len() {
            let mut rng = keyed_rng(seed, &[domain::EVAL_NEGATIVES, user as u64]);
            for k in 0..n {
                let j = rng.random_range(k..unseen.len());
                unseen.swap(k, j);
            }
            unseen.truncate(n);
        }
    }
    unseen
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UserResult {
    pub user: usize,
    pub held_out: usize,
    pub rank: usize,
    pub candidates: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub ks: Vec<usize>,
    pub hr: Vec<f64>,
    pub ndcg: Vec<f64>,
    pub users: usize,
    pub seed: u64,
}

impl MetricReport {
    /// Means over `results` at each K, summed in user order.
    pub fn from_results(results: &[UserResult], ks: &[usize], seed: u64) -> Result<Self> {
        if results.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut ks = ks.to_vec();
        ks.sort_unstable();
        ks.dedup();
        let n = results.len() as f64;
        let mut hr = Vec::with_capacity(ks.len());
        let mut ndcg = Vec::with_capacity(ks.len());
        for &k in &ks {
            let (mut h, mut g) = (0.0, 0.0);
            for r in results {
                let (a, b) = metrics_at_k(r.rank, k)?;
                h += a;
                g += b;
            }
            hr.push(h / n);
            ndcg.push(g / n);
        }
        Ok(MetricReport {
            ks,
            hr,
            ndcg,
            users: results.len(),
            seed,
        })
    }

    pub fn hr_at(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|&x| x == k).map(|p| self.hr[p])
    }

    pub fn ndcg_at(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|&x| x == k).map(|p| self.ndcg[p])
    }

    /// `0 ≤ NDCG@K ≤ HR@K ≤ 1` and both non-decreasing in K.
    pub fn check_invariants(&self) -> Result<()> {
        for p in 0..self.ks.len() {
            let (h, g) = (self.hr[p], self.ndcg[p]);
            if !(0.0..=1.0).contains(&h) || !(0.0 <= g && g <= h) {
                return Err(Error::Protocol(format!("K={}: hr {h}, ndcg {g} out of order", self.ks[p])));
            }
            if p > 0 && (h < self.hr[p - 1] || g < self.ndcg[p - 1]) {
                return Err(Error::Protocol(format!("metrics decrease at K={}", self.ks[p])));
            }
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["metric", "K", "value"])?;
        for (name, vals) in [("HR", &self.hr), ("NDCG", &self.ndcg)] {
            for (k, v) in self.ks.iter().zip(vals.iter()) {
                w.write_record([name, &k.to_string(), &format!("{v:.6}")])?;
            }
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>4}  {:>8}  {:>8}", "K", "HR", "NDCG")?;
        for (p, k) in self.ks.iter().enumerate() {
            writeln!(f, "{k:>4}  {:>8.4}  {:>8.4}", self.hr[p], self.ndcg[p])?;
        }
        write!(f, "users={} seed={}", self.users, self.seed)
    }
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: MetricReport,
    pub per_user: Vec<UserResult>,
}

/// Rank every eligible user's held-out item. Users are scored in parallel and
/// collected in index order, so the result does not depend on thread count.
pub fn evaluate(params: &NcfParams, ctx: &FeatureContext, split: &LeaveOneOutSplit, cfg: &EvalConfig) -> Result<Evaluation> {
    cfg.validate()?;
    Scorer::new(params, ctx)?;
    let eligible: Vec<(usize, usize)> = split.eligible().collect();
    if eligible.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let per_user = eligible
        .par_iter()
        .map_init(
            || Scorer::new(params, ctx).expect("checked above"),
            |scorer, &(u, held)| {
                let mut items = vec![held];
                items.extend(eval_negatives(split, u, cfg.candidates, cfg.seed));
                let scores = scorer.score_items(u, &items)?;
                Ok(UserResult {
                    user: u,
                    held_out: held,
                    rank: rank_of(&items, &scores, held)?,
                    candidates: items.len(),
                })
            },
        )
        .collect::<Result<Vec<_>>>()?;
    let report = MetricReport::from_results(&per_user, &cfg.ks, cfg.seed)?;
    report.check_invariants()?;
    Ok(Evaluation { report, per_user })
}

/// Rank every *observed* interaction against the same sampled unobserved
/// items of its user. Measures how well training data was memorised.
pub fn evaluate_memorized(
    params: &NcfParams,
    ctx: &FeatureContext,
    interactions: &InteractionSet,
    cfg: &EvalConfig,
) -> Result<MetricReport> {
    cfg.validate()?;
    let split = LeaveOneOutSplit {
        train: interactions.clone(),
        held_out: vec![None; interactions.n_users()],
        seed: cfg.seed,
        policy: Default::default(),
    };
    let mut scorer = Scorer::new(params, ctx)?;
    let mut results = Vec::new();
    for u in 0..interactions.n_users() {
        let negatives = eval_negatives(&split, u, cfg.candidates, cfg.seed);
        let mut items = negatives.clone();
        items.extend_from_slice(interactions.items_of(u));
        let scores = scorer.score_items(u, &items)?;
        let n = negatives.len();
        for (k, &pos) in interactions.items_of(u).iter().enumerate() {
            let mut cand = negatives.clone();
            cand.push(pos);
            let mut sc = scores[..n].to_vec();
            sc.push(scores[n + k]);
            results.push(UserResult {
                user: u,
                held_out: pos,
                rank: rank_of(&cand, &sc, pos)?,
                candidates: cand.len(),
            });
        }
    }
    MetricReport::from_results(&results, &cfg.ks, cfg.seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraitRow {
    pub trait_: Trait,
    pub count: usize,
    /// `None` for an empty group.
    pub hr: Option<f64>,
    pub ndcg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraitBreakdown {
    pub k: usize,
    pub rows: Vec<TraitRow>,
}

impl TraitBreakdown {
    pub fn total_users(&self) -> usize {
        self.rows.iter().map(|r| r.count).sum()
    }

    /// `Σ count·metric / Σ count` over populated groups: `(hr, ndcg)`.
    pub fn recombined(&self) -> (f64, f64) {
        let n = self.total_users() as f64;
        let (h, g) = self.rows.iter().fold((0.0, 0.0), |(h, g), r| {
            let c = r.count as f64;
            (h + c * r.hr.unwrap_or(0.0), g + c * r.ndcg.unwrap_or(0.0))
        });
        (h / n, g / n)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["trait", "count", "hr", "ndcg"])?;
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        for r in &self.rows {
            w.write_record([r.trait_.name(), &r.count.to_string(), &fmt(r.hr), &fmt(r.ndcg)])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

impl fmt::Display for TraitBreakdown {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<6} {:>6} {:>9} {:>9}", "trait", "users", format!("HR@{}", self.k), format!("NDCG@{}", self.k))?;
        for r in &self.rows {
            let show = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
            writeln!(f, "{:<6} {:>6} {:>9} {:>9}", r.trait_.abbreviation(), r.count, show(r.hr), show(r.ndcg))?;
        }
        Ok(())
    }
}

/// Group per-user results by each user's most salient trait.
pub fn breakdown_by_trait(
    results: &[UserResult],
    user_ids: &[String],
    personalities: &PersonalityTable,
    k: usize,
) -> Result<TraitBreakdown> {
    let mut sums = [(0usize, 0.0f64, 0.0f64); 5];
    for r in results {
        let id = user_ids.get(r.user).ok_or(Error::Index {
            what: "user",
            index: r.user,
            len: user_ids.len(),
        })?;
        let s = personalities
            .scores(id)
            .ok_or_else(|| Error::Protocol(format!("evaluated user `{id}` has no personality scores")))?;
        let (h, g) = metrics_at_k(r.rank, k)?;
        let slot = &mut sums[most_salient(&s).index()];
        slot.0 += 1;
        slot.1 += h;
        slot.2 += g;
    }
    Ok(TraitBreakdown {
        k,
        rows: Trait::ALL
            .iter()
            .zip(sums)
            .map(|(&t, (c, h, g))| TraitRow {
                trait_: t,
                count: c,
                hr: (c > 0).then(|| h / c as f64),
                ndcg: (c > 0).then(|| g / c as f64),
            })
            .collect(),
    })
}

/// Annotator judgement on whether a text reflects a personality description.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Judgement {
    Yes,
    No,
    NotSure,
}

impl FromStr for Judgement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace(['-', ' '], "_").as_str() {
            "yes" | "y" => Ok(Judgement::Yes),
            "no" | "n" => Ok(Judgement::No),
            "not_sure" | "notsure" | "unsure" | "?" => Ok(Judgement::NotSure),
            other => Err(Error::InvalidArgument(format!("unknown judgement `{other}`"))),
        }
    }
}

/// Unweighted Cohen's kappa between two label sequences. When chance
/// agreement is 1 (both annotators constant and equal) kappa is defined as 1.
pub fn cohen_kappa<L: Ord>(a: &[L], b: &[L]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "annotation lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::InvalidArgument("no annotations".into()));
    }
    let n = a.len() as f64;
    let agree = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64;
    let mut ma: BTreeMap<&L, usize> = BTreeMap::new();
    let mut mb: BTreeMap<&L, usize> = BTreeMap::new();
    for (x, y) in a.iter().zip(b) {
        *ma.entry(x).or_default() += 1;
        *mb.entry(y).or_default() += 1;
    }
    let p_o = agree / n;
    let p_e: f64 = ma
        .iter()
        .map(|(l, &ca)| ca as f64 * *mb.get(l).unwrap_or(&0) as f64)
        .sum::<f64>()
        / (n * n);
    if p_e == 1.0 {
        return Ok(1.0);
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}
