//! Review ingestion and interaction data.
//!
//! Reviews arrive as Amazon-style JSON lines. The active-user filter keeps
//! reviewers whose 30–80 word reviews cover at least ten distinct items; their
//! qualifying review texts are concatenated into one [`UserDocument`] each,
//! and *all* their reviewed items become implicit-feedback interactions.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::personality::{soft_weights, OceanScores, PersonalityTable, Provenance};
use crate::rng::{domain, keyed_rng};
use crate::{Error, Result};

/// One parsed review line.
#[derive(Debug, Clone, PartialEq)]
pub struct ReviewRecord {
    pub reviewer_id: String,
    pub asin: String,
    pub reviewer_name: Option<String>,
    pub review_text: String,
    /// Star rating in `[1, 5]`. Kept for reference; training is implicit-feedback only.
    pub overall: f64,
    pub vote: Option<u64>,
    pub style: Option<String>,
}

#[derive(Deserialize)]
struct RawReview {
    #[serde(rename = "reviewerID")]
    reviewer_id: Option<String>,
    asin: Option<String>,
    #[serde(rename = "reviewerName")]
    reviewer_name: Option<String>,
    vote: Option<serde_json::Value>,
    style: Option<serde_json::Value>,
    #[serde(rename = "reviewText")]
    review_text: Option<String>,
    overall: Option<f64>,
}

#[derive(Serialize)]
struct RawReviewOut<'a> {
    #[serde(rename = "reviewerID")]
    reviewer_id: &'a str,
    asin: &'a str,
    #[serde(rename = "reviewerName", skip_serializing_if = "Option::is_none")]
    reviewer_name: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    vote: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    style: Option<&'a str>,
    #[serde(rename = "reviewText")]
    review_text: &'a str,
    overall: f64,
}

impl ReviewRecord {
    /// Parse one JSON line; `line` is the 1-based line number used in errors.
    pub fn from_json(text: &str, line: usize) -> Result<Self> {
        let raw: RawReview = serde_json::from_str(text).map_err(|e| Error::Record {
            line,
            message: e.to_string(),
        })?;
        let reviewer_id = raw.reviewer_id.ok_or(Error::MissingField {
            line,
            field: "reviewerID",
        })?;
        let asin = raw.asin.ok_or(Error::MissingField { line, field: "asin" })?;
        let review_text = raw.review_text.ok_or(Error::MissingField {
            line,
            field: "reviewText",
        })?;
        let overall = raw.overall.ok_or(Error::MissingField { line, field: "overall" })?;
        if reviewer_id.is_empty() || asin.is_empty() {
            return Err(Error::Record {
                line,
                message: "reviewerID and asin must be non-empty".into(),
            });
        }
        if !(1.0..=5.0).contains(&overall) {
            return Err(Error::Record {
                line,
                message: format!("overall rating {overall} outside [1, 5]"),
            });
        }
        let vote = match raw.vote {
            None | Some(serde_json::Value::Null) => None,
            Some(serde_json::Value::Number(n)) => Some(n.as_u64().ok_or_else(|| Error::Record {
                line,
                message: format!("vote `{n}` is not a nonnegative integer"),
            })?),
            Some(serde_json::Value::String(s)) => {
                let digits: String = s.chars().filter(|c| *c != ',').collect();
                Some(digits.trim().parse().map_err(|_| Error::Record {
                    line,
                    message: format!("vote `{s}` is not an integer"),
                })?)
            }
            Some(other) => {
                return Err(Error::Record {
                    line,
                    message: format!("vote has unexpected type: {other}"),
                })
            }
        };
        let style = match raw.style {
            None | Some(serde_json::Value::Null) => None,
            Some(serde_json::Value::String(s)) => Some(s),
            // {"Format:": " Hardcover"} → "Format:Hardcover"
            Some(serde_json::Value::Object(map)) => Some(
                map.iter()
                    .map(|(k, v)| match v {
                        serde_json::Value::String(s) => format!("{}{}", k.trim(), s.trim()),
                        other => format!("{}{}", k.trim(), other),
                    })
                    .collect::<Vec<_>>()
                    .join(", "),
            ),
            Some(other) => Some(other.to_string()),
        };
        Ok(ReviewRecord {
            reviewer_id,
            asin,
            reviewer_name: raw.reviewer_name,
            review_text,
            overall,
            vote,
            style,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&RawReviewOut {
            reviewer_id: &self.reviewer_id,
            asin: &self.asin,
            reviewer_name: self.reviewer_name.as_deref(),
            vote: self.vote,
            style: self.style.as_deref(),
            review_text: &self.review_text,
            overall: self.overall,
        })
        .expect("plain struct serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MalformedPolicy {
    #[default]
    Abort,
    Skip,
}

#[derive(Debug, Clone, Default)]
pub struct ParsedReviews {
    pub records: Vec<ReviewRecord>,
    /// Line numbers of skipped malformed lines (only under [`MalformedPolicy::Skip`]).
    pub skipped: Vec<usize>,
}

/// Parse JSON-lines reviews. Blank lines are ignored.
pub fn parse_reviews<R: BufRead>(source: R, policy: MalformedPolicy) -> Result<ParsedReviews> {
    let mut out = ParsedReviews::default();
    for (n, line) in source.lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(|e| Error::Record {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        match ReviewRecord::from_json(&line, line_no) {
            Ok(r) => out.records.push(r),
            Err(e) => match policy {
                MalformedPolicy::Abort => return Err(e),
                MalformedPolicy::Skip => {
                    log::warn!("skipping malformed review: {e}");
                    out.skipped.push(line_no);
                }
            },
        }
    }
    Ok(out)
}

/// Number of maximal non-whitespace runs; punctuation stays attached.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// One retained reviewer's qualifying text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserDocument {
    pub user_id: String,
    /// Qualifying reviews in input order, joined by single spaces.
    pub text: String,
    pub qualifying_review_count: usize,
    pub total_words: usize,
    /// Distinct items with a qualifying review, sorted.
    pub reviewed_items: Vec<String>,
}

/// Dense-indexed user–item interactions.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionSet {
    users: Vec<String>,
    items: Vec<String>,
    user_lookup: HashMap<String, usize>,
    item_lookup: HashMap<String, usize>,
    /// sorted, deduplicated
    per_user: Vec<Vec<usize>>,
    /// same items in first-seen order
    arrival: Vec<Vec<usize>>,
}

impl InteractionSet {
    pub fn builder() -> InteractionSetBuilder {
        InteractionSetBuilder::default()
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn n_interactions(&self) -> usize {
        self.per_user.iter().map(Vec::len).sum()
    }

    pub fn user_id(&self, u: usize) -> &str {
        &self.users[u]
    }

    pub fn item_id(&self, i: usize) -> &str {
        &self.items[i]
    }

    pub fn user_ids(&self) -> &[String] {
        &self.users
    }

    pub fn item_ids(&self) -> &[String] {
        &self.items
    }

    pub fn user_index(&self, id: &str) -> Option<usize> {
        self.user_lookup.get(id).copied()
    }

    pub fn item_index(&self, id: &str) -> Option<usize> {
        self.item_lookup.get(id).copied()
    }

    /// Sorted item indices of user `u`.
    pub fn items_of(&self, u: usize) -> &[usize] {
        &self.per_user[u]
    }

    /// Item indices of user `u` in first-seen order.
    pub fn arrival_of(&self, u: usize) -> &[usize] {
        &self.arrival[u]
    }

    pub fn contains(&self, u: usize, i: usize) -> bool {
        self.per_user[u].binary_search(&i).is_ok()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.per_user
            .iter()
            .enumerate()
            .flat_map(|(u, items)| items.iter().map(move |&i| (u, i)))
    }

    /// Same index maps, interactions replaced.
    fn with_interactions(&self, arrival: Vec<Vec<usize>>) -> Self {
        let per_user = arrival
            .iter()
            .map(|a| {
                let mut s = a.clone();
                s.sort_unstable();
                s
            })
            .collect();
        InteractionSet {
            users: self.users.clone(),
            items: self.items.clone(),
            user_lookup: self.user_lookup.clone(),
            item_lookup: self.item_lookup.clone(),
            per_user,
            arrival,
        }
    }

    /// `user_id,item_id` rows, users in index order, items in first-seen order.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["user_id", "item_id"])?;
        for (u, items) in self.arrival.iter().enumerate() {
            for &i in items {
                w.write_record([&self.users[u], &self.items[i]])?;
            }
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    /// Index sidecar: `kind,index,id` with kind `user` or `item`.
    pub fn write_index_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["kind", "index", "id"])?;
        for (k, id) in self.users.iter().enumerate() {
            w.write_record(["user", &k.to_string(), id])?;
        }
        for (k, id) in self.items.iter().enumerate() {
            w.write_record(["item", &k.to_string(), id])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    /// Read interactions, taking the index maps from the sidecar when given
    /// (otherwise indices follow first appearance).
    pub fn read_csv<R: Read, S: Read>(interactions: R, index: Option<S>) -> Result<Self> {
        let mut b = InteractionSet::builder();
        if let Some(index) = index {
            let mut rdr = csv::Reader::from_reader(index);
            let mut expected = (0usize, 0usize);
            for (n, rec) in rdr.records().enumerate() {
                let rec = rec?;
                let row = n + 1;
                let bad = |m: String| Error::Row { row, message: m };
                if rec.len() != 3 {
                    return Err(bad(format!("expected kind,index,id; got {} fields", rec.len())));
                }
                let k: usize = rec[1].parse().map_err(|_| bad(format!("bad index `{}`", &rec[1])))?;
                match &rec[0] {
                    "user" => {
                        if k != expected.0 || b.intern_user(&rec[2]) != k {
                            return Err(bad(format!("user index {k} out of sequence or duplicated")));
                        }
                        expected.0 += 1;
                    }
                    "item" => {
                        if k != expected.1 || b.intern_item(&rec[2]) != k {
                            return Err(bad(format!("item index {k} out of sequence or duplicated")));
                        }
                        expected.1 += 1;
                    }
                    other => return Err(bad(format!("unknown kind `{other}`"))),
                }
            }
        }
        let sealed = b.users.len() + b.items.len() > 0;
        let mut rdr = csv::Reader::from_reader(interactions);
        for (n, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = n + 1;
            if rec.len() != 2 {
                return Err(Error::Row {
                    row,
                    message: format!("expected user_id,item_id; got {} fields", rec.len()),
                });
            }
            if sealed && (b.user_lookup.get(&rec[0]).is_none() || b.item_lookup.get(&rec[1]).is_none()) {
                return Err(Error::Row {
                    row,
                    message: format!("`{}`/`{}` not in index sidecar", &rec[0], &rec[1]),
                });
            }
            b.add(&rec[0], &rec[1]);
        }
        Ok(b.build())
    }

    pub fn save(&self, interactions_path: &Path, index_path: &Path) -> Result<()> {
        let f = std::fs::File::create(interactions_path).map_err(|e| Error::io(interactions_path, e))?;
        self.write_csv(std::io::BufWriter::new(f))?;
        let f = std::fs::File::create(index_path).map_err(|e| Error::io(index_path, e))?;
        self.write_index_csv(std::io::BufWriter::new(f))
    }

    pub fn load(interactions_path: &Path, index_path: Option<&Path>) -> Result<Self> {
        let f = std::fs::File::open(interactions_path).map_err(|e| Error::io(interactions_path, e))?;
        let idx = match index_path {
            Some(p) => Some(std::fs::File::open(p).map_err(|e| Error::io(p, e))?),
            None => None,
        };
        Self::read_csv(std::io::BufReader::new(f), idx.map(std::io::BufReader::new))
    }
}

#[derive(Debug, Default)]
pub struct InteractionSetBuilder {
    users: Vec<String>,
    items: Vec<String>,
    user_lookup: HashMap<String, usize>,
    item_lookup: HashMap<String, usize>,
    arrival: Vec<Vec<usize>>,
    seen: Vec<BTreeSet<usize>>,
}

impl InteractionSetBuilder {
    pub fn intern_user(&mut self, id: &str) -> usize {
        if let Some(&k) = self.user_lookup.get(id) {
            return k;
        }
        let k = self.users.len();
        self.users.push(id.to_string());
        self.user_lookup.insert(id.to_string(), k);
        self.arrival.push(Vec::new());
        self.seen.push(BTreeSet::new());
        k
    }

    pub fn intern_item(&mut self, id: &str) -> usize {
        if let Some(&k) = self.item_lookup.get(id) {
            return k;
        }
        let k = self.items.len();
        self.items.push(id.to_string());
        self.item_lookup.insert(id.to_string(), k);
        k
    }

    /// Record one interaction; duplicates collapse.
    pub fn add(&mut self, user: &str, item: &str) -> &mut Self {
        let u = self.intern_user(user);
        let i = self.intern_item(item);
        if self.seen[u].insert(i) {
            self.arrival[u].push(i);
        }
        self
    }

    pub fn build(self) -> InteractionSet {
        let per_user = self.seen.into_iter().map(|s| s.into_iter().collect()).collect();
        InteractionSet {
            users: self.users,
            items: self.items,
            user_lookup: self.user_lookup,
            item_lookup: self.item_lookup,
            per_user,
            arrival: self.arrival,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FilterConfig {
    pub min_items: usize,
    pub min_words: usize,
    pub max_words: usize,
    /// Retain a user only if *every* review of theirs is within the word window.
    pub all_reviews_must_qualify: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            min_items: 10,
            min_words: 30,
            max_words: 80,
            all_reviews_must_qualify: false,
        }
    }
}

impl FilterConfig {
    pub fn qualifies(&self, text: &str) -> bool {
        (self.min_words..=self.max_words).contains(&word_count(text))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FilterReport {
    pub users_before: usize,
    pub users_after: usize,
    pub reviews_total: usize,
    pub reviews_qualifying: usize,
    /// Qualifying reviews of retained users, i.e. the ones in the documents.
    pub reviews_kept: usize,
    pub interactions: usize,
}

impl FilterReport {
    pub fn reviews_dropped(&self) -> usize {
        self.reviews_total - self.reviews_kept
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["metric", "value"])?;
        for (k, v) in [
            ("users_before", self.users_before),
            ("users_after", self.users_after),
            ("reviews_total", self.reviews_total),
            ("reviews_qualifying", self.reviews_qualifying),
            ("reviews_kept", self.reviews_kept),
            ("reviews_dropped", self.reviews_dropped()),
            ("interactions", self.interactions),
        ] {
            w.write_record([k, &v.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FilterOutcome {
    pub documents: Vec<UserDocument>,
    pub interactions: InteractionSet,
    pub report: FilterReport,
}

/// Apply the active-user filter. Users and items are indexed in order of
/// first appearance.
pub fn filter_active(records: &[ReviewRecord], cfg: &FilterConfig) -> FilterOutcome {
    let mut order: Vec<&str> = Vec::new();
    let mut by_user: HashMap<&str, Vec<&ReviewRecord>> = HashMap::new();
    for r in records {
        by_user
            .entry(r.reviewer_id.as_str())
            .or_insert_with(|| {
                order.push(r.reviewer_id.as_str());
                Vec::new()
            })
            .push(r);
    }

    let mut report = FilterReport {
        users_before: order.len(),
        reviews_total: records.len(),
        ..FilterReport::default()
    };
    let mut retained: Vec<&str> = Vec::new();
    let mut documents = Vec::new();
    for &user in &order {
        let reviews = &by_user[user];
        let qualifying: Vec<&ReviewRecord> = reviews
            .iter()
            .copied()
            .filter(|r| cfg.qualifies(&r.review_text))
            .collect();
        report.reviews_qualifying += qualifying.len();
        let distinct: BTreeSet<&str> = qualifying.iter().map(|r| r.asin.as_str()).collect();
        let keep = distinct.len() >= cfg.min_items
            && (!cfg.all_reviews_must_qualify || qualifying.len() == reviews.len());
        if !keep {
            continue;
        }
        retained.push(user);
        report.reviews_kept += qualifying.len();
        documents.push(UserDocument {
            user_id: user.to_string(),
            text: qualifying
                .iter()
                .map(|r| r.review_text.as_str())
                .collect::<Vec<_>>()
                .join(" "),
            qualifying_review_count: qualifying.len(),
            total_words: qualifying.iter().map(|r| word_count(&r.review_text)).sum(),
            reviewed_items: distinct.into_iter().map(str::to_string).collect(),
        });
    }

    let keep: BTreeSet<&str> = retained.iter().copied().collect();
    let mut b = InteractionSet::builder();
    for &u in &retained {
        b.intern_user(u);
    }
    for r in records.iter().filter(|r| keep.contains(r.reviewer_id.as_str())) {
        b.add(&r.reviewer_id, &r.asin);
    }
    let interactions = b.build();
    report.users_after = retained.len();
    report.interactions = interactions.n_interactions();
    FilterOutcome {
        documents,
        interactions,
        report,
    }
}

pub fn write_documents<W: Write>(docs: &[UserDocument], mut out: W) -> Result<()> {
    for d in docs {
        serde_json::to_writer(&mut out, d)?;
        out.write_all(b"\n").map_err(|e| Error::io("<documents>", e))?;
    }
    out.flush().map_err(|e| Error::io("<documents>", e))
}

pub fn read_documents<R: BufRead>(input: R) -> Result<Vec<UserDocument>> {
    let mut docs = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<documents>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        docs.push(serde_json::from_str(&line).map_err(|e| Error::Record {
            line: n + 1,
            message: e.to_string(),
        })?);
    }
    Ok(docs)
}

/// `100 · ratings / (users · items)`
pub fn density_percent(users: usize, items: usize, ratings: usize) -> Result<f64> {
    if users == 0 || items == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(100.0 * ratings as f64 / (users as f64 * items as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetStats {
    pub items: usize,
    pub users: usize,
    pub ratings: usize,
    pub density_percent: f64,
    /// Absent when no user documents are available (e.g. synthetic data).
    pub avg_words_per_user: Option<f64>,
    pub avg_words_per_review: Option<f64>,
}

impl DatasetStats {
    pub fn from_counts(users: usize, items: usize, ratings: usize) -> Result<Self> {
        Ok(DatasetStats {
            items,
            users,
            ratings,
            density_percent: density_percent(users, items, ratings)?,
            avg_words_per_user: None,
            avg_words_per_review: None,
        })
    }

    fn rows(&self) -> Vec<(&'static str, String)> {
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.2}"));
        vec![
            ("items", self.items.to_string()),
            ("users", self.users.to_string()),
            ("ratings", self.ratings.to_string()),
            ("density_percent", format!("{:.2}", self.density_percent)),
            ("avg_words_per_user", opt(self.avg_words_per_user)),
            ("avg_words_per_review", opt(self.avg_words_per_review)),
        ]
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["statistic", "value"])?;
        for (k, v) in self.rows() {
            w.write_record([k, &v])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.rows() {
            writeln!(f, "{k:<22}{v:>14}")?;
        }
        Ok(())
    }
}

pub fn dataset_stats(interactions: &InteractionSet, docs: &[UserDocument]) -> Result<DatasetStats> {
    if interactions.n_interactions() == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut stats = DatasetStats::from_counts(
        interactions.n_users(),
        interactions.n_items(),
        interactions.n_interactions(),
    )?;
    if !docs.is_empty() {
        let words: usize = docs.iter().map(|d| d.total_words).sum();
        let reviews: usize = docs.iter().map(|d| d.qualifying_review_count).sum();
        stats.avg_words_per_user = Some(words as f64 / docs.len() as f64);
        if reviews > 0 {
            stats.avg_words_per_review = Some(words as f64 / reviews as f64);
        }
    }
    Ok(stats)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HoldoutPolicy {
    #[default]
    Random,
    /// The last item in first-seen (input) order.
    Last,
}

/// Per-user train / held-out partition sharing the original index maps.
#[derive(Debug, Clone, PartialEq)]
pub struct LeaveOneOutSplit {
    pub train: InteractionSet,
    /// `None` for users with fewer than two interactions; they stay train-only.
    pub held_out: Vec<Option<usize>>,
    pub seed: u64,
    pub policy: HoldoutPolicy,
}

impl LeaveOneOutSplit {
    /// Users that have a held-out item, with that item.
    pub fn eligible(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.held_out
            .iter()
            .enumerate()
            .filter_map(|(u, h)| h.map(|i| (u, i)))
    }

    pub fn n_eligible(&self) -> usize {
        self.held_out.iter().filter(|h| h.is_some()).count()
    }

    /// Whether `(u, i)` is observed in train or held out.
    pub fn is_observed(&self, u: usize, i: usize) -> bool {
        self.held_out[u] == Some(i) || self.train.contains(u, i)
    }
}

pub fn leave_one_out_split(interactions: &InteractionSet, seed: u64, policy: HoldoutPolicy) -> LeaveOneOutSplit {
    let mut held_out = Vec::with_capacity(interactions.n_users());
    let mut arrival = Vec::with_capacity(interactions.n_users());
    for u in 0..interactions.n_users() {
        let items = interactions.arrival_of(u);
        if items.len() < 2 {
            held_out.push(None);
            arrival.push(items.to_vec());
            continue;
        }
        let pick = match policy {
            HoldoutPolicy::Random => {
                let sorted = interactions.items_of(u);
                let mut rng = keyed_rng(seed, &[domain::SPLIT, u as u64]);
                sorted[rng.random_range(0..sorted.len())]
            }
            HoldoutPolicy::Last => *items.last().expect("len >= 2"),
        };
        held_out.push(Some(pick));
        arrival.push(items.iter().copied().filter(|&i| i != pick).collect());
    }
    LeaveOneOutSplit {
        train: interactions.with_interactions(arrival),
        held_out,
        seed,
        policy,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainExample {
    pub user: usize,
    pub item: usize,
    pub label: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainingSamples {
    /// Per user: positives then their negatives, users in index order.
    pub examples: Vec<TrainExample>,
    /// Users that had no unobserved item to draw from.
    pub skipped_users: usize,
}

/// Every train positive plus `ratio` uniformly drawn unobserved items per
/// positive. The stream is keyed on `(seed, epoch, user)`.
pub fn sample_train_negatives(split: &LeaveOneOutSplit, ratio: usize, seed: u64, epoch: u64) -> Result<TrainingSamples> {
    if ratio == 0 {
        return Err(Error::InvalidArgument("negative ratio must be >= 1".into()));
    }
    let n_items = split.train.n_items();
    let mut out = TrainingSamples::default();
    for u in 0..split.train.n_users() {
        let positives = split.train.items_of(u);
        out.examples
            .extend(positives.iter().map(|&i| TrainExample { user: u, item: i, label: 1.0 }));
        if positives.is_empty() {
            continue;
        }
        let observed = positives.len() + usize::from(split.held_out[u].is_some());
        if observed >= n_items {
            out.skipped_users += 1;
            continue;
        }
        let mut rng = keyed_rng(seed, &[domain::TRAIN_NEGATIVES, epoch, u as u64]);
        let wanted = positives.len() * ratio;
        if observed * 2 > n_items {
            let pool: Vec<usize> = (0..n_items).filter(|&i| !split.is_observed(u, i)).collect();
            for _ in 0..wanted {
                let item = pool[rng.random_range(0..pool.len())];
                out.examples.push(TrainExample { user: u, item, label: 0.0 });
            }
        } else {
            for _ in 0..wanted {
                let item = loop {
                    let i = rng.random_range(0..n_items);
                    if !split.is_observed(u, i) {
                        break i;
                    }
                };
                out.examples.push(TrainExample { user: u, item, label: 0.0 });
            }
        }
    }
    if out.skipped_users > 0 {
        log::warn!("{} users have no unobserved items; no negatives drawn for them", out.skipped_users);
    }
    Ok(out)
}

/// Parameters of the synthetic personality-correlated generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub users: usize,
    pub items: usize,
    pub interactions_per_user: usize,
    /// Mixing weight of the personality-driven component, in `[0, 1]`.
    pub signal_strength: f64,
    /// Dirichlet concentration of item trait affinities; small values make
    /// items specialise in one trait.
    pub item_concentration: f64,
    /// Softmax temperature turning a user's scores into trait weights.
    pub user_temperature: f64,
}

impl SyntheticSpec {
    pub fn new(users: usize, items: usize, interactions_per_user: usize, signal_strength: f64) -> Self {
        SyntheticSpec {
            users,
            items,
            interactions_per_user,
            signal_strength,
            item_concentration: 0.1,
            user_temperature: 10.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.users < 2 || self.items < 2 {
            return Err(Error::InvalidArgument("synthetic data needs at least 2 users and 2 items".into()));
        }
        if self.interactions_per_user == 0 || self.interactions_per_user > self.items {
            return Err(Error::InvalidArgument(format!(
                "interactions per user must be in 1..={}",
                self.items
            )));
        }
        if !(0.0..=1.0).contains(&self.signal_strength) {
            return Err(Error::InvalidArgument("signal strength must be in [0, 1]".into()));
        }
        if !(self.item_concentration > 0.0) || !(self.user_temperature > 0.0) {
            return Err(Error::InvalidArgument("concentration and temperature must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub spec: SyntheticSpec,
    pub interactions: InteractionSet,
    pub personalities: PersonalityTable,
    /// Per item, a point on the 5-simplex.
    pub item_affinity: Vec<[f64; 5]>,
    /// Per user, the trait weights that drove their sampling.
    pub user_weights: Vec<[f64; 5]>,
}

impl SyntheticDataset {
    /// Item sampling distribution for a user with trait weights `w`.
    pub fn interaction_distribution(&self, w: &[f64; 5]) -> Vec<f64> {
        let s = self.spec.signal_strength;
        let n = self.item_affinity.len() as f64;
        let fit: Vec<f64> = self
            .item_affinity
            .iter()
            .map(|a| a.iter().zip(w).map(|(x, y)| x * y).sum())
            .collect();
        let total: f64 = fit.iter().sum();
        fit.iter()
            .map(|f| {
                let signal = if total > 0.0 { f / total } else { 1.0 / n };
                (1.0 - s) / n + s * signal
            })
            .collect()
    }

    /// Draw `k` distinct items from the distribution for weights `w`.
    pub fn sample_items<R: Rng + ?Sized>(&self, w: &[f64; 5], k: usize, rng: &mut R) -> Vec<usize> {
        sample_without_replacement(self.interaction_distribution(w), k, rng)
    }
}

fn sample_without_replacement<R: Rng + ?Sized>(mut weights: Vec<f64>, k: usize, rng: &mut R) -> Vec<usize> {
    let mut chosen = Vec::with_capacity(k);
    for _ in 0..k.min(weights.len()) {
        let total: f64 = weights.iter().sum();
        let mut target = rng.random::<f64>() * total;
        let mut pick = None;
        for (i, &w) in weights.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            pick = Some(i);
            if target < w {
                break;
            }
            target -= w;
        }
        let i = pick.expect("positive weight remains");
        chosen.push(i);
        weights[i] = 0.0;
    }
    chosen
}

/// Round to 6 decimals so the value survives a trip through the score CSV.
fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

/// Users with random OCEAN scores and items with random trait affinities;
/// each user's interactions mix a uniform component with one proportional to
/// `⟨user trait weights, item affinity⟩`.
pub fn generate_synthetic(spec: SyntheticSpec, seed: u64) -> Result<SyntheticDataset> {
    spec.validate()?;
    let mut rng = keyed_rng(seed, &[domain::SYNTHETIC]);
    let gamma = Gamma::new(spec.item_concentration, 1.0).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let item_affinity: Vec<[f64; 5]> = (0..spec.items)
        .map(|_| {
            let g = [(); 5].map(|_| gamma.sample(&mut rng));
            let sum: f64 = g.iter().sum();
            if sum > 0.0 {
                g.map(|x| x / sum)
            } else {
                [0.2; 5]
            }
        })
        .collect();

    let mut scores = Vec::with_capacity(spec.users);
    let mut user_weights = Vec::with_capacity(spec.users);
    for _ in 0..spec.users {
        let s = OceanScores::new([(); 5].map(|_| round6(rng.random_range(0.0..=100.0))))?;
        user_weights.push(soft_weights(&s, spec.user_temperature)?.values());
        scores.push(s);
    }

    let mut data = SyntheticDataset {
        spec,
        interactions: InteractionSet::builder().build(),
        personalities: PersonalityTable::new(),
        item_affinity,
        user_weights,
    };

    let mut b = InteractionSet::builder();
    let user_ids: Vec<String> = (0..spec.users).map(|u| format!("u{u:05}")).collect();
    for id in &user_ids {
        b.intern_user(id);
    }
    let item_ids: Vec<String> = (0..spec.items).map(|i| format!("i{i:05}")).collect();
    for id in &item_ids {
        b.intern_item(id);
    }
    for (u, id) in user_ids.iter().enumerate() {
        let items = data.sample_items(&data.user_weights[u], spec.interactions_per_user, &mut rng);
        for i in items {
            b.add(id, &item_ids[i]);
        }
        data.personalities.insert(id.clone(), scores[u], Provenance::Synthetic)?;
    }
    data.interactions = b.build();
    Ok(data)
}
