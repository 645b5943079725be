//! OCEAN scores and the feature transforms built on them.
//!
//! Canonical trait order is Openness, Conscientiousness, Extroversion,
//! Agreeableness, Neuroticism everywhere: vector layouts, CSV columns and
//! checkpoint trait-embedding rows.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;

use crate::numerics::logistic;
use crate::rng::{domain, keyed_rng};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Trait {
    Openness = 0,
    Conscientiousness = 1,
    Extroversion = 2,
    Agreeableness = 3,
    Neuroticism = 4,
}

impl Trait {
    pub const ALL: [Trait; 5] = [
        Trait::Openness,
        Trait::Conscientiousness,
        Trait::Extroversion,
        Trait::Agreeableness,
        Trait::Neuroticism,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Trait> {
        Self::ALL.get(i).copied()
    }

    /// Lower-case full name, also the score CSV column name.
    pub fn name(self) -> &'static str {
        match self {
            Trait::Openness => "openness",
            Trait::Conscientiousness => "conscientiousness",
            Trait::Extroversion => "extroversion",
            Trait::Agreeableness => "agreeableness",
            Trait::Neuroticism => "neuroticism",
        }
    }

    pub fn abbreviation(self) -> &'static str {
        match self {
            Trait::Openness => "OPEN",
            Trait::Conscientiousness => "CON",
            Trait::Extroversion => "EXT",
            Trait::Agreeableness => "AGR",
            Trait::Neuroticism => "NEU",
        }
    }
}

impl fmt::Display for Trait {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Trait {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = match s.trim().to_ascii_lowercase().as_str() {
            "o" | "open" | "openness" => Trait::Openness,
            "c" | "con" | "conscientiousness" => Trait::Conscientiousness,
            "e" | "ext" | "extroversion" | "extraversion" => Trait::Extroversion,
            "a" | "agr" | "agreeableness" => Trait::Agreeableness,
            "n" | "neu" | "neuroticism" => Trait::Neuroticism,
            other => return Err(Error::InvalidArgument(format!("unknown trait `{other}`"))),
        };
        Ok(t)
    }
}

/// Five trait scores, each in `[0, 100]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OceanScores([f64; 5]);

impl OceanScores {
    pub const MIN: f64 = 0.0;
    pub const MAX: f64 = 100.0;

    pub fn new(values: [f64; 5]) -> Result<Self> {
        for (t, v) in Trait::ALL.iter().zip(values) {
            if !v.is_finite() || !(Self::MIN..=Self::MAX).contains(&v) {
                return Err(Error::InvalidArgument(format!(
                    "{t} score {v} outside [{}, {}]",
                    Self::MIN,
                    Self::MAX
                )));
            }
        }
        Ok(OceanScores(values))
    }

    pub fn neutral() -> Self {
        OceanScores([50.0; 5])
    }

    pub fn get(&self, t: Trait) -> f64 {
        self.0[t.index()]
    }

    pub fn values(&self) -> [f64; 5] {
        self.0
    }
}

/// A point on the 5-simplex in canonical trait order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraitWeights([f64; 5]);

impl TraitWeights {
    pub fn new(values: [f64; 5]) -> Result<Self> {
        let sum: f64 = values.iter().sum();
        if values.iter().any(|&w| !(w >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "trait weights must be nonnegative and sum to 1, got {values:?}"
            )));
        }
        Ok(TraitWeights(values))
    }

    pub fn get(&self, t: Trait) -> f64 {
        self.0[t.index()]
    }

    pub fn values(&self) -> [f64; 5] {
        self.0
    }
}

/// Highest-scoring trait; ties go to the lowest canonical index.
pub fn most_salient(scores: &OceanScores) -> Trait {
    let mut best = Trait::Openness;
    for t in Trait::ALL {
        if scores.get(t) > scores.get(best) {
            best = t;
        }
    }
    best
}

/// `softmax(score / temperature)` over the five traits.
pub fn soft_weights(scores: &OceanScores, temperature: f64) -> Result<TraitWeights> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "softmax temperature must be > 0, got {temperature}"
        )));
    }
    let scaled = scores.0.map(|s| s / temperature);
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps = scaled.map(|s| (s - max).exp());
    let sum: f64 = exps.iter().sum();
    Ok(TraitWeights(exps.map(|e| e / sum)))
}

/// Scores divided by 100, canonical order. Not renormalized.
pub fn hard_vector(scores: &OceanScores) -> [f64; 5] {
    scores.0.map(|s| s / 100.0)
}

/// [`hard_vector`] rescaled to sum to one; an all-zero vector stays zero.
pub fn hard_vector_normalized(scores: &OceanScores) -> [f64; 5] {
    let sum: f64 = scores.0.iter().sum();
    if sum == 0.0 {
        [0.0; 5]
    } else {
        scores.0.map(|s| s / sum)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Imported,
    Lexicon,
    Synthetic,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Imported => "imported",
            Provenance::Lexicon => "lexicon",
            Provenance::Synthetic => "synthetic",
        }
    }
}

impl FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "imported" => Ok(Provenance::Imported),
            "lexicon" => Ok(Provenance::Lexicon),
            "synthetic" => Ok(Provenance::Synthetic),
            other => Err(Error::InvalidArgument(format!("unknown provenance `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PersonalityEntry {
    pub scores: OceanScores,
    pub provenance: Provenance,
}

/// User id → scores, at most one entry per user, iterated in id order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PersonalityTable {
    entries: BTreeMap<String, PersonalityEntry>,
}

impl PersonalityTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, user: impl Into<String>, scores: OceanScores, provenance: Provenance) -> Result<()> {
        let user = user.into();
        if self.entries.contains_key(&user) {
            return Err(Error::DuplicateUser(user));
        }
        self.entries.insert(user, PersonalityEntry { scores, provenance });
        Ok(())
    }

    pub fn get(&self, user: &str) -> Option<&PersonalityEntry> {
        self.entries.get(user)
    }

    pub fn scores(&self, user: &str) -> Option<OceanScores> {
        self.entries.get(user).map(|e| e.scores)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &PersonalityEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Canonical score CSV with a trailing provenance column.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["user_id"];
        header.extend(Trait::ALL.iter().map(|t| t.name()));
        header.push("provenance");
        w.write_record(&header)?;
        for (user, e) in self.iter() {
            let mut row = vec![user.to_string()];
            row.extend(e.scores.values().iter().map(|v| format!("{v:.6}")));
            row.push(e.provenance.as_str().to_string());
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

/// Read a score CSV and affinely rescale `[low, high]` onto `[0, 100]`.
///
/// Columns are matched by header name (full trait names or the
/// OPEN/CON/EXT/AGR/NEU abbreviations) in any order. An optional
/// `provenance` column is preserved; otherwise rows are tagged `imported`.
pub fn import_scores_csv(path: &Path, source_range: (f64, f64)) -> Result<PersonalityTable> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_scores_csv(f, source_range)
}

pub fn read_scores_csv<R: Read>(input: R, (low, high): (f64, f64)) -> Result<PersonalityTable> {
    if !(low < high) || !low.is_finite() || !high.is_finite() {
        return Err(Error::InvalidArgument(format!("score range needs low < high, got ({low}, {high})")));
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = rdr.headers()?.clone();
    let mut user_col = None;
    let mut provenance_col = None;
    let mut trait_cols = [None; 5];
    for (i, h) in headers.iter().enumerate() {
        let key: String = h
            .chars()
            .filter(|c| !matches!(c, ' ' | '_'))
            .collect::<String>()
            .to_ascii_lowercase();
        match key.as_str() {
            "userid" | "user" | "reviewerid" => user_col = Some(i),
            "provenance" => provenance_col = Some(i),
            _ => {
                if let Ok(t) = key.parse::<Trait>() {
                    trait_cols[t.index()] = Some(i);
                }
            }
        }
    }
    let user_col = user_col.ok_or_else(|| Error::Row {
        row: 0,
        message: "header lacks a user_id column".into(),
    })?;
    let mut cols = [0usize; 5];
    for t in Trait::ALL {
        cols[t.index()] = trait_cols[t.index()].ok_or_else(|| Error::Row {
            row: 0,
            message: format!("header lacks a {t} column"),
        })?;
    }

    let identity = low == 0.0 && high == 100.0;
    let mut table = PersonalityTable::new();
    for (n, rec) in rdr.records().enumerate() {
        let row = n + 1;
        let rec = rec.map_err(|e| Error::Row {
            row,
            message: e.to_string(),
        })?;
        let field = |i: usize| rec.get(i).ok_or_else(|| Error::Row {
            row,
            message: format!("missing column {i}"),
        });
        let user = field(user_col)?.to_string();
        if user.is_empty() {
            return Err(Error::Row {
                row,
                message: "empty user id".into(),
            });
        }
        let mut values = [0.0; 5];
        for t in Trait::ALL {
            let raw = field(cols[t.index()])?;
            let x: f64 = raw.parse().map_err(|_| Error::Row {
                row,
                message: format!("{t} value `{raw}` is not a number"),
            })?;
            if !(low..=high).contains(&x) {
                return Err(Error::Row {
                    row,
                    message: format!("{t} score {x} outside source range [{low}, {high}]"),
                });
            }
            values[t.index()] = if identity {
                x
            } else {
                ((x - low) / (high - low) * 100.0).clamp(0.0, 100.0)
            };
        }
        let provenance = match provenance_col {
            Some(i) => field(i)?.parse().map_err(|e: Error| Error::Row {
                row,
                message: e.to_string(),
            })?,
            None => Provenance::Imported,
        };
        let scores = OceanScores::new(values).map_err(|e| Error::Row {
            row,
            message: e.to_string(),
        })?;
        table.insert(user, scores, provenance).map_err(|e| match e {
            Error::DuplicateUser(u) => Error::Row {
                row,
                message: format!("duplicate user id `{u}`"),
            },
            other => other,
        })?;
    }
    Ok(table)
}

/// Per-trait signed word weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Lexicon {
    /// word → weight per trait (canonical order)
    words: BTreeMap<String, [f64; 5]>,
}

const DEFAULT_LEXICON: &str = include_str!("../data/default_lexicon.csv");

impl Lexicon {
    pub fn from_entries<I, S>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Trait, S, f64)>,
        S: AsRef<str>,
    {
        let mut words: BTreeMap<String, [f64; 5]> = BTreeMap::new();
        let mut per_trait = [0usize; 5];
        for (t, word, weight) in entries {
            let word = word.as_ref().trim().to_lowercase();
            if word.is_empty() || !weight.is_finite() {
                return Err(Error::InvalidArgument(format!("bad lexicon entry `{word}` {weight}")));
            }
            words.entry(word).or_insert([0.0; 5])[t.index()] += weight;
            per_trait[t.index()] += 1;
        }
        if let Some(t) = Trait::ALL.iter().find(|t| per_trait[t.index()] == 0) {
            return Err(Error::InvalidArgument(format!("lexicon has no words for {t}")));
        }
        Ok(Lexicon { words })
    }

    /// `trait,word,weight` rows; `#` starts a comment line.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(input);
        let mut entries = Vec::new();
        for (n, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = n + 1;
            if rec.len() != 3 {
                return Err(Error::Row {
                    row,
                    message: format!("expected trait,word,weight; got {} fields", rec.len()),
                });
            }
            let t: Trait = rec[0].parse().map_err(|e: Error| Error::Row {
                row,
                message: e.to_string(),
            })?;
            let w: f64 = rec[2].parse().map_err(|_| Error::Row {
                row,
                message: format!("weight `{}` is not a number", &rec[2]),
            })?;
            entries.push((t, rec[1].to_string(), w));
        }
        Self::from_entries(entries)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(f)
    }

    /// The bundled word list. It only exists so the pipeline runs without an
    /// external scoring service; it has no psychometric validity.
    pub fn builtin() -> Self {
        Self::read_csv(DEFAULT_LEXICON.as_bytes()).expect("bundled lexicon parses")
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Word-count lexicon scorer.
///
/// Per trait, `raw = Σ matched weights / token count`, then
/// `score = 100 · logistic(squash · raw)`. Empty text scores 50 everywhere.
#[derive(Debug, Clone)]
pub struct LexiconScorer {
    pub lexicon: Lexicon,
    pub squash: f64,
}

impl LexiconScorer {
    pub const DEFAULT_SQUASH: f64 = 25.0;

    pub fn new(lexicon: Lexicon) -> Self {
        LexiconScorer {
            lexicon,
            squash: Self::DEFAULT_SQUASH,
        }
    }

    pub fn score(&self, text: &str) -> OceanScores {
        let mut counts: HashMap<String, u64> = HashMap::new();
        let mut total = 0u64;
        for tok in text.split_whitespace().filter_map(normalize_token) {
            total += 1;
            if self.lexicon.words.contains_key(&tok) {
                *counts.entry(tok).or_insert(0) += 1;
            }
        }
        if total == 0 {
            return OceanScores::neutral();
        }
        let mut sums = [0.0f64; 5];
        // BTreeMap order keeps the summation order fixed
        for (word, weights) in &self.lexicon.words {
            if let Some(&c) = counts.get(word) {
                for (s, w) in sums.iter_mut().zip(weights) {
                    *s += c as f64 * w;
                }
            }
        }
        let scores = sums.map(|s| 100.0 * logistic(self.squash * (s / total as f64)));
        OceanScores(scores)
    }
}

/// Shorthand for scoring with the given lexicon and the default squashing constant.
pub fn lexicon_score(text: &str, lexicon: &Lexicon) -> OceanScores {
    LexiconScorer::new(lexicon.clone()).score(text)
}

fn normalize_token(tok: &str) -> Option<String> {
    let t = tok.trim_matches(|c: char| !c.is_alphanumeric());
    (!t.is_empty()).then(|| t.to_lowercase())
}

/// How control-group labels are assigned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineLabels {
    Random { seed: u64 },
    Same(Trait),
}

/// One label per user index `0..users`.
pub fn assign_baseline_labels(users: usize, mode: BaselineLabels) -> Vec<Trait> {
    match mode {
        BaselineLabels::Same(t) => vec![t; users],
        BaselineLabels::Random { seed } => {
            let mut rng = keyed_rng(seed, &[domain::BASELINE_LABELS]);
            (0..users)
                .map(|_| Trait::ALL[rng.random_range(0..5)])
                .collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraitSummary {
    pub trait_: Trait,
    pub count: usize,
    /// Equal-width bins over `[0, 100]`; a score of exactly 100 lands in the last bin.
    pub histogram: Vec<usize>,
    /// Lower-middle value for even counts.
    pub median: f64,
    pub mean: f64,
}

impl TraitSummary {
    pub fn bin_width(&self) -> f64 {
        100.0 / self.histogram.len() as f64
    }
}

pub fn median_lower(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values[(values.len() - 1) / 2]
}

pub fn trait_distribution(table: &PersonalityTable, bins: usize) -> Result<Vec<TraitSummary>> {
    if table.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if bins == 0 {
        return Err(Error::InvalidArgument("need at least one bin".into()));
    }
    let width = 100.0 / bins as f64;
    Ok(Trait::ALL
        .iter()
        .map(|&t| {
            let mut values: Vec<f64> = table.iter().map(|(_, e)| e.scores.get(t)).collect();
            let mut histogram = vec![0usize; bins];
            for &v in &values {
                let b = ((v / width).floor() as usize).min(bins - 1);
                histogram[b] += 1;
            }
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let median = median_lower(&mut values);
            TraitSummary {
                trait_: t,
                count: values.len(),
                histogram,
                median,
                mean,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand_distr::{Distribution, Normal};

    fn reviewer_scores() -> OceanScores {
        OceanScores::new([42.71, 34.87, 54.39, 54.05, 25.96]).unwrap()
    }

    fn mixed_scores() -> OceanScores {
        OceanScores::new([30.0, 70.0, 50.0, 30.0, 20.0]).unwrap()
    }

    #[test]
    fn scores_range_enforced() {
        assert!(OceanScores::new([0.0, 100.0, 50.0, 1.0, 99.0]).is_ok());
        assert!(OceanScores::new([-0.1, 0.0, 0.0, 0.0, 0.0]).is_err());
        assert!(OceanScores::new([100.5, 0.0, 0.0, 0.0, 0.0]).is_err());
        assert!(OceanScores::new([f64::NAN, 0.0, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn salient_trait() {
        assert_eq!(most_salient(&reviewer_scores()), Trait::Extroversion);
        assert_eq!(most_salient(&OceanScores::new([40.0; 5]).unwrap()), Trait::Openness);
        assert_eq!(
            most_salient(&OceanScores::new([0.0, 0.0, 0.0, 0.0, 100.0]).unwrap()),
            Trait::Neuroticism
        );
        assert_eq!(most_salient(&mixed_scores()), Trait::Conscientiousness);
    }

    #[test]
    fn soft_weights_mixed_scores() {
        // independent evaluation: exp(s/100) normalized
        let e: Vec<f64> = [0.3f64, 0.7, 0.5, 0.3, 0.2].iter().map(|x| x.exp()).collect();
        let z: f64 = e.iter().sum();
        let expected = [0.17800, 0.26554, 0.21741, 0.17800, 0.16106];
        let w = soft_weights(&mixed_scores(), 100.0).unwrap().values();
        for i in 0..5 {
            assert!((w[i] - e[i] / z).abs() < 1e-15);
            assert!((w[i] - expected[i]).abs() < 5e-6, "{i}: {}", w[i]);
        }
    }

    #[test]
    fn soft_weights_uniform_and_cold() {
        let w = soft_weights(&OceanScores::new([63.0; 5]).unwrap(), 100.0).unwrap();
        for v in w.values() {
            assert!((v - 0.2).abs() < 1e-15);
        }
        let cold = soft_weights(&reviewer_scores(), 1e-3).unwrap();
        assert!(cold.get(Trait::Extroversion) > 1.0 - 1e-12);
        assert!(matches!(soft_weights(&reviewer_scores(), 0.0), Err(Error::InvalidArgument(_))));
        assert!(soft_weights(&reviewer_scores(), -1.0).is_err());
    }

    #[test]
    fn hard_vector_examples() {
        assert_eq!(hard_vector(&mixed_scores()), [0.3, 0.7, 0.5, 0.3, 0.2]);
        assert_eq!(hard_vector(&OceanScores::new([0.0; 5]).unwrap()), [0.0; 5]);
        let h = hard_vector(&reviewer_scores());
        let expected = [0.4271, 0.3487, 0.5439, 0.5405, 0.2596];
        for i in 0..5 {
            assert!((h[i] - expected[i]).abs() < 1e-15);
        }
        let n = hard_vector_normalized(&mixed_scores());
        assert!((n.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((n[1] - 0.35).abs() < 1e-12);
    }

    #[test]
    fn import_rescales() {
        let csv = "user_id,openness,conscientiousness,extroversion,agreeableness,neuroticism\n\
                   u1,4,1,7,2.5,5.5\n";
        let t = read_scores_csv(csv.as_bytes(), (1.0, 7.0)).unwrap();
        let s = t.scores("u1").unwrap().values();
        assert_eq!(s[0], 50.0);
        assert_eq!(s[1], 0.0);
        assert_eq!(s[2], 100.0);
        assert!((s[3] - 25.0).abs() < 1e-12);
        assert_eq!(t.get("u1").unwrap().provenance, Provenance::Imported);
    }

    #[test]
    fn import_remaps_display_order() {
        // AGR,CON,NEU,EXT,OPEN display order
        let csv = "User ID,AGR,CON,NEU,EXT,OPEN\nA2GBIFL43U1LKJ,54.05,34.87,25.96,54.39,42.71\n";
        let t = read_scores_csv(csv.as_bytes(), (0.0, 100.0)).unwrap();
        assert_eq!(t.scores("A2GBIFL43U1LKJ").unwrap(), reviewer_scores());
        let missing = "id,AGR,CON,NEU,EXT,OPEN\nx,1,2,3,4,5\n";
        assert!(matches!(read_scores_csv(missing.as_bytes(), (0.0, 100.0)), Err(Error::Row { row: 0, .. })));
    }

    #[test]
    fn import_errors() {
        let head = "user_id,openness,conscientiousness,extroversion,agreeableness,neuroticism\n";
        let out_of_range = format!("{head}a,1,2,3,4,5\nb,1,2,3,4,8\n");
        match read_scores_csv(out_of_range.as_bytes(), (1.0, 7.0)) {
            Err(Error::Row { row, .. }) => assert_eq!(row, 2),
            other => panic!("{other:?}"),
        }
        let dup = format!("{head}a,1,2,3,4,5\na,1,2,3,4,5\n");
        assert!(matches!(read_scores_csv(dup.as_bytes(), (1.0, 7.0)), Err(Error::Row { row: 2, .. })));
        assert!(read_scores_csv(head.as_bytes(), (7.0, 1.0)).is_err());
        let bad = format!("{head}a,1,x,3,4,5\n");
        assert!(matches!(read_scores_csv(bad.as_bytes(), (1.0, 7.0)), Err(Error::Row { row: 1, .. })));
    }

    #[test]
    fn csv_round_trip_is_stable() {
        let mut t = PersonalityTable::new();
        t.insert("b", reviewer_scores(), Provenance::Lexicon).unwrap();
        t.insert("a", mixed_scores(), Provenance::Imported).unwrap();
        assert!(t.insert("a", mixed_scores(), Provenance::Imported).is_err());
        let mut first = Vec::new();
        t.write_csv(&mut first).unwrap();
        let back = read_scores_csv(first.as_slice(), (0.0, 100.0)).unwrap();
        let mut second = Vec::new();
        back.write_csv(&mut second).unwrap();
        assert_eq!(first, second);
        assert_eq!(back.get("b").unwrap().provenance, Provenance::Lexicon);
    }

    fn tiny_lexicon() -> Lexicon {
        Lexicon::from_entries([
            (Trait::Openness, "novel", 1.0),
            (Trait::Conscientiousness, "careful", 1.0),
            (Trait::Extroversion, "party", 1.0),
            (Trait::Extroversion, "love", 0.5),
            (Trait::Agreeableness, "thanks", 1.0),
            (Trait::Neuroticism, "worse", 1.0),
        ])
        .unwrap()
    }

    #[test]
    fn lexicon_empty_text_is_neutral() {
        let lex = tiny_lexicon();
        assert_eq!(lexicon_score("", &lex), OceanScores::neutral());
        assert_eq!(lexicon_score("  !!! ", &lex), OceanScores::neutral());
    }

    #[test]
    fn lexicon_extroversion_words() {
        let s = lexicon_score("Party! LOVE party love", &tiny_lexicon());
        let e = s.get(Trait::Extroversion);
        assert!(e > 50.0);
        for t in Trait::ALL {
            if t != Trait::Extroversion {
                assert!(e > s.get(t));
            }
        }
        let builtin = lexicon_score("Love this! Amazing fun, friends love it!!!", &Lexicon::builtin());
        assert_eq!(most_salient(&builtin), Trait::Extroversion);
    }

    #[test]
    fn lexicon_requires_every_trait() {
        assert!(Lexicon::from_entries([(Trait::Openness, "x", 1.0)]).is_err());
        assert!(Lexicon::read_csv("trait,word,weight\nopenness,a\n".as_bytes()).is_err());
        assert!(Lexicon::builtin().len() > 50);
    }

    #[test]
    fn baseline_labels() {
        assert_eq!(
            assign_baseline_labels(3, BaselineLabels::Same(Trait::Openness)),
            vec![Trait::Openness; 3]
        );
        let a = assign_baseline_labels(1000, BaselineLabels::Random { seed: 4 });
        let b = assign_baseline_labels(1000, BaselineLabels::Random { seed: 4 });
        assert_eq!(a, b);
        assert_ne!(a, assign_baseline_labels(1000, BaselineLabels::Random { seed: 5 }));
    }

    #[test]
    fn baseline_labels_are_uniform() {
        let labels = assign_baseline_labels(100_000, BaselineLabels::Random { seed: 17 });
        let mut counts = [0usize; 5];
        for t in labels {
            counts[t.index()] += 1;
        }
        for c in counts {
            let f = c as f64 / 100_000.0;
            assert!((f - 0.2).abs() < 0.01, "{f}");
        }
    }

    fn table_from(values: &[[f64; 5]]) -> PersonalityTable {
        let mut t = PersonalityTable::new();
        for (i, v) in values.iter().enumerate() {
            t.insert(format!("u{i:05}"), OceanScores::new(*v).unwrap(), Provenance::Synthetic)
                .unwrap();
        }
        t
    }

    #[test]
    fn distribution_medians() {
        let one = table_from(&[[10.0, 20.0, 54.39, 30.0, 40.0]]);
        let d = trait_distribution(&one, 10).unwrap();
        assert_eq!(d[Trait::Extroversion.index()].median, 54.39);
        assert_eq!(d[2].histogram.iter().sum::<usize>(), 1);
        assert_eq!(d[2].histogram[5], 1);

        let two = table_from(&[[40.0; 5], [60.0; 5]]);
        let d = trait_distribution(&two, 4).unwrap();
        assert_eq!(d[0].median, 40.0);
        assert_eq!(d[0].mean, 50.0);

        let edge = table_from(&[[100.0, 0.0, 0.0, 0.0, 0.0]]);
        let d = trait_distribution(&edge, 4).unwrap();
        assert_eq!(d[0].histogram, vec![0, 0, 0, 1]);
        assert_eq!(d[1].histogram, vec![1, 0, 0, 0]);

        assert!(matches!(trait_distribution(&PersonalityTable::new(), 4), Err(Error::EmptyDataset)));
    }

    #[test]
    fn distribution_median_of_normal_sample() {
        let mut rng = keyed_rng(99, &[]);
        let normal = Normal::new(60.0, 10.0).unwrap();
        let rows: Vec<[f64; 5]> = (0..10_000)
            .map(|_| [(); 5].map(|_| Distribution::<f64>::sample(&normal, &mut rng).clamp(0.0, 100.0)))
            .collect();
        let d = trait_distribution(&table_from(&rows), 20).unwrap();
        for s in d {
            assert!((s.median - 60.0).abs() < 0.5, "{}", s.median);
        }
    }

    fn arb_scores() -> impl Strategy<Value = OceanScores> {
        prop::array::uniform5(0.0f64..=100.0).prop_map(|v| OceanScores::new(v).unwrap())
    }

    proptest! {
        #[test]
        fn soft_weights_on_simplex(s in arb_scores(), temp in 1e-3f64..1e4) {
            let w = soft_weights(&s, temp).unwrap().values();
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(w.iter().all(|&x| x >= 0.0));
        }

        #[test]
        fn soft_argmax_is_salient(s in arb_scores(), temp in 1e-2f64..1e3) {
            let v = s.values();
            let mut sorted = v;
            sorted.sort_by(f64::total_cmp);
            prop_assume!(sorted[4] - sorted[3] > 1e-9);
            let w = soft_weights(&s, temp).unwrap().values();
            let arg = (0..5).max_by(|&a, &b| w[a].total_cmp(&w[b])).unwrap();
            prop_assert_eq!(Trait::from_index(arg).unwrap(), most_salient(&s));
        }

        #[test]
        fn hard_vector_is_linear(s in arb_scores(), alpha in 0.0f64..=1.0) {
            let scaled = OceanScores::new(s.values().map(|x| alpha * x)).unwrap();
            let a = hard_vector(&scaled);
            let b = hard_vector(&s).map(|x| alpha * x);
            for i in 0..5 {
                prop_assert!((a[i] - b[i]).abs() < 1e-12);
            }
        }

        #[test]
        fn import_rescale_is_monotone(lo in -10.0f64..10.0, span in 0.5f64..50.0, a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let hi = lo + span;
            let head = "user_id,openness,conscientiousness,extroversion,agreeableness,neuroticism\n";
            let x = lo + a * span;
            let y = lo + b * span;
            let csv = format!("{head}u,{lo},{hi},{x},{y},{lo}\n");
            let t = read_scores_csv(csv.as_bytes(), (lo, hi)).unwrap();
            let s = t.scores("u").unwrap().values();
            prop_assert_eq!(s[0], 0.0);
            prop_assert_eq!(s[1], 100.0);
            prop_assert_eq!(x <= y, s[2] <= s[3]);
        }

        #[test]
        fn lexicon_duplication_invariant(words in prop::collection::vec("[a-z]{1,6}|love|party|worse|thanks|careful", 0..30)) {
            let text = words.join(" ");
            let lex = Lexicon::builtin();
            let once = lexicon_score(&text, &lex);
            let twice = lexicon_score(&format!("{text} {text}"), &lex);
            prop_assert_eq!(once, twice);
        }
    }
}
