//! Agreement metrics and recall against stereotype gold lists.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::tokenize;
use crate::regard::RegardLabel;
use crate::stats::BiasRanking;

/// Square count matrix; rows are the reference annotator, columns the other.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub labels: Vec<String>,
    pub matrix: Vec<Vec<u64>>,
}

impl ConfusionCounts {
    pub fn new(labels: Vec<String>, matrix: Vec<Vec<u64>>) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::domain("confusion matrix has no labels"));
        }
        if matrix.len() != n || matrix.iter().any(|r| r.len() != n) {
            return Err(Error::validation(
                "confusion matrix",
                format!("expected {n}x{n} counts"),
            ));
        }
        if labels.iter().collect::<HashSet<_>>().len() != n {
            return Err(Error::validation("confusion matrix", "duplicate label"));
        }
        Ok(ConfusionCounts { labels, matrix })
    }

    /// Labels named `0..n`.
    pub fn from_matrix(matrix: Vec<Vec<u64>>) -> Result<Self> {
        let labels = (0..matrix.len()).map(|i| i.to_string()).collect();
        Self::new(labels, matrix)
    }

    /// Tallies `(reference, other)` pairs. `labels` fixes the order; labels seen in the
    /// pairs but not listed are an error.
    pub fn from_pairs<S: AsRef<str>>(
        labels: &[S],
        pairs: impl IntoIterator<Item = (S, S)>,
    ) -> Result<Self> {
        let labels: Vec<String> = labels.iter().map(|l| l.as_ref().to_owned()).collect();
        let n = labels.len();
        let idx = |l: &str| {
            labels
                .iter()
                .position(|x| x == l)
                .ok_or_else(|| Error::validation("confusion pairs", format!("unknown label {l:?}")))
        };
        let mut matrix = vec![vec![0; n]; n];
        for (g, p) in pairs {
            matrix[idx(g.as_ref())?][idx(p.as_ref())?] += 1;
        }
        Self::new(labels, matrix)
    }

    /// CSV with header `gold,predicted`. Labels are the sorted union of both columns.
    pub fn from_pairs_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let mut pairs = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::parse("confusion pairs csv", e))?;
            if rec.len() != 2 {
                return Err(Error::parse("confusion pairs csv", "expected 2 columns"));
            }
            pairs.push((rec[0].trim().to_owned(), rec[1].trim().to_owned()));
        }
        let labels: BTreeSet<String> = pairs
            .iter()
            .flat_map(|(a, b)| [a.clone(), b.clone()])
            .collect();
        let labels: Vec<String> = labels.into_iter().collect();
        Self::from_pairs(&labels, pairs)
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn total(&self) -> u64 {
        self.matrix.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.size()).map(|i| self.matrix[i][i]).sum()
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        self.matrix[i].iter().sum()
    }

    pub fn col_sum(&self, j: usize) -> u64 {
        self.matrix.iter().map(|r| r[j]).sum()
    }

    fn nonempty_total(&self) -> Result<f64> {
        match self.total() {
            0 => Err(Error::domain("confusion matrix has zero total count")),
            t => Ok(t as f64),
        }
    }
}

/// Unweighted Cohen's kappa. Returns 1.0 when chance agreement is 1.
pub fn cohens_kappa(c: &ConfusionCounts) -> Result<f64> {
    c.nonempty_total()?;
    // (n·trace − Σ row·col) / (n² − Σ row·col) in integers, divided once at the end.
    let n = c.total() as u128;
    let chance: u128 = (0..c.size())
        .map(|i| c.row_sum(i) as u128 * c.col_sum(i) as u128)
        .sum();
    let den = n * n - chance;
    if den == 0 {
        return Ok(1.0);
    }
    let num = (n * c.trace() as u128) as i128 - chance as i128;
    Ok(num as f64 / den as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassF1 {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// The class occurs in neither row nor column; its F1 is 0 and it is left out of
    /// the macro average.
    pub absent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Scores {
    pub micro: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassF1>,
}

pub fn f1_scores(c: &ConfusionCounts) -> Result<F1Scores> {
    let total = c.nonempty_total()?;
    let ratio = |num: u64, den: u64| {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let per_class: Vec<ClassF1> = (0..c.size())
        .map(|i| {
            let tp = c.matrix[i][i];
            let (row, col) = (c.row_sum(i), c.col_sum(i));
            let precision = ratio(tp, col);
            let recall = ratio(tp, row);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassF1 {
                label: c.labels[i].clone(),
                precision,
                recall,
                f1,
                absent: row == 0 && col == 0,
            }
        })
        .collect();
    let present: Vec<f64> = per_class
        .iter()
        .filter(|x| !x.absent)
        .map(|x| x.f1)
        .collect();
    let macro_f1 = present.iter().sum::<f64>() / present.len() as f64;
    Ok(F1Scores {
        micro: c.trace() as f64 / total,
        macro_f1,
        per_class,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    /// Regard label whose combined score is compared against this polarity.
    pub fn regard(self) -> RegardLabel {
        match self {
            Polarity::Positive => RegardLabel::Positive,
            Polarity::Negative => RegardLabel::Negative,
        }
    }

    /// Positive iff the mean score is exactly -1; Negative iff it is at least 1.
    pub fn of_score(mean_offensiveness: f64) -> Option<Polarity> {
        if mean_offensiveness == -1.0 {
            Some(Polarity::Positive)
        } else if mean_offensiveness >= 1.0 {
            Some(Polarity::Negative)
        } else {
            None
        }
    }
}

impl std::str::FromStr for Polarity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "positive" => Ok(Polarity::Positive),
            "negative" => Ok(Polarity::Negative),
            _ => Err(format!("unknown polarity {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldEntry {
    pub attribute: String,
    pub word: String,
    pub mean_offensiveness: f64,
}

impl GoldEntry {
    pub fn polarity(&self) -> Option<Polarity> {
        Polarity::of_score(self.mean_offensiveness)
    }
}

/// Column names for reading a SeeGULL-style export.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeegullColumns {
    pub identity: String,
    pub attribute: String,
    pub score: String,
}

impl Default for SeegullColumns {
    fn default() -> Self {
        SeegullColumns {
            identity: "identity".into(),
            attribute: "attribute".into(),
            score: "mean_offensiveness".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StereotypeGold {
    entries: Vec<GoldEntry>,
}

impl StereotypeGold {
    /// Attributes and words are trimmed and lowercased; empty values are rejected.
    pub fn new(entries: Vec<GoldEntry>) -> Result<Self> {
        let entries = entries
            .into_iter()
            .enumerate()
            .map(|(i, e)| {
                let attribute = e.attribute.trim().to_lowercase();
                let word = e.word.trim().to_lowercase();
                if attribute.is_empty() || word.is_empty() {
                    return Err(Error::validation(
                        "gold entry",
                        format!("row {} has an empty field", i + 1),
                    ));
                }
                if !e.mean_offensiveness.is_finite() {
                    return Err(Error::validation(
                        "gold entry",
                        format!("row {} has a non-finite score", i + 1),
                    ));
                }
                Ok(GoldEntry {
                    attribute,
                    word,
                    mean_offensiveness: e.mean_offensiveness,
                })
            })
            .collect::<Result<_>>()?;
        Ok(StereotypeGold { entries })
    }

    /// CSV with header `attribute,word,mean_offensiveness`.
    pub fn from_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(input);
        let entries = rdr
            .deserialize::<GoldEntry>()
            .map(|r| r.map_err(|e| Error::parse("gold csv", e)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(entries)
    }

    /// Reads a SeeGULL-style export: the identity column becomes the attribute, the
    /// stereotype column the word (possibly a phrase).
    pub fn from_seegull_csv<R: Read>(input: R, columns: &SeegullColumns) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(input);
        let headers = rdr
            .headers()
            .map_err(|e| Error::parse("seegull csv", e))?
            .clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::parse("seegull csv", format!("missing column {name:?}")))
        };
        let (ci, ca, cs) = (
            col(&columns.identity)?,
            col(&columns.attribute)?,
            col(&columns.score)?,
        );
        let mut entries = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::parse("seegull csv", e))?;
            let field = |i: usize| rec.get(i).unwrap_or("");
            let score = field(cs)
                .parse::<f64>()
                .map_err(|e| Error::parse("seegull csv", format!("row {}: {e}", line + 1)))?;
            entries.push(GoldEntry {
                attribute: field(ci).to_owned(),
                word: field(ca).to_owned(),
                mean_offensiveness: score,
            });
        }
        Self::new(entries)
    }

    pub fn entries(&self) -> &[GoldEntry] {
        &self.entries
    }

    pub fn pairs(&self, polarity: Polarity) -> impl Iterator<Item = &GoldEntry> {
        self.entries
            .iter()
            .filter(move |e| e.polarity() == Some(polarity))
    }

    /// Attributes that are not keywords of the given set.
    pub fn unknown_attributes<'a>(&'a self, known: &HashSet<&str>) -> BTreeSet<&'a str> {
        self.entries
            .iter()
            .map(|e| e.attribute.as_str())
            .filter(|a| !known.contains(a))
            .collect()
    }

    pub fn attributes(&self) -> BTreeSet<&str> {
        self.entries.iter().map(|e| e.attribute.as_str()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    /// A phrase matches if any of its content words is in the top k.
    #[default]
    AnyContentWord,
    /// The whole gold string must be a ranked word.
    Exact,
}

const FUNCTION_WORDS: [&str; 22] = [
    "a", "an", "the", "of", "and", "or", "to", "in", "on", "at", "by", "for", "with", "is", "are",
    "be", "been", "being", "as", "their", "they", "very",
];

/// Content words of a gold phrase: tokens that contain a letter and are not function words.
pub fn content_words(phrase: &str) -> Vec<String> {
    tokenize(phrase)
        .into_iter()
        .filter(|t| t.chars().any(char::is_alphabetic) && !FUNCTION_WORDS.contains(&t.as_str()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallResult {
    pub percent: f64,
    pub hits: usize,
    pub considered: usize,
    /// Gold attributes with no ranking; their pairs are excluded from `considered`.
    pub missing_attributes: Vec<String>,
}

/// Percentage of gold pairs of `polarity` found in the top `k` of their attribute's
/// ranking. Use `usize::MAX` for an unbounded k.
pub fn recall_at_k(
    rankings: &BTreeMap<String, BiasRanking>,
    gold: &StereotypeGold,
    polarity: Polarity,
    k: usize,
    mode: MatchMode,
) -> Result<RecallResult> {
    if k < 1 {
        return Err(Error::domain("recall@k needs k >= 1"));
    }
    let mut top: BTreeMap<&str, HashSet<&str>> = BTreeMap::new();
    let mut missing = BTreeSet::new();
    let (mut hits, mut considered) = (0, 0);
    for e in gold.pairs(polarity) {
        let Some(ranking) = rankings.get(&e.attribute) else {
            missing.insert(e.attribute.clone());
            continue;
        };
        let set = top
            .entry(e.attribute.as_str())
            .or_insert_with(|| ranking.words().take(k).collect());
        considered += 1;
        let hit = match mode {
            MatchMode::Exact => set.contains(e.word.as_str()),
            MatchMode::AnyContentWord => content_words(&e.word)
                .iter()
                .any(|w| set.contains(w.as_str())),
        };
        if hit {
            hits += 1;
        }
    }
    if considered == 0 {
        return Err(Error::domain(format!(
            "no {polarity:?} gold pairs have a ranking"
        )));
    }
    Ok(RecallResult {
        percent: 100.0 * hits as f64 / considered as f64,
        hits,
        considered,
        missing_attributes: missing.into_iter().collect(),
    })
}

/// One line of a metrics file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub metric: String,
    pub value: f64,
    pub params: BTreeMap<String, serde_json::Value>,
}

impl MetricRecord {
    pub fn new(metric: impl Into<String>, value: f64) -> Self {
        MetricRecord {
            metric: metric.into(),
            value,
            params: BTreeMap::new(),
        }
    }

    pub fn param(mut self, key: &str, value: impl Into<serde_json::Value>) -> Self {
        self.params.insert(key.to_owned(), value.into());
        self
    }
}
