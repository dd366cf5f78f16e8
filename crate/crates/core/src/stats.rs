//! Sentence-level co-occurrence statistics and the two bias scores.
//!
//! For an attribute class `A`, attribute `a` and word `w`:
//!
//! * `p(w|a) = n(w,a) / n(a)`: the fraction of sentences labelled for `a` that contain `w`;
//! * frequency bias: `p(w|a) / mean_{a'∈A} p(w|a')`;
//! * regard term: `p(r|w,a) / mean_{r'∈R} p(r'|w,a)`, which equals `3·p(r|w,a)`;
//! * frequency+regard bias: the minimum of the two.
//!
//! Counts are binary per sentence. Only sentences where `a` was detected as a protected
//! attribute (i.e. has a regard label) contribute.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::tokenize;
use crate::regard::{AnnotatedSentence, RegardLabel};
use crate::taxonomy::AttributeClass;

pub const DEFAULT_VOCAB_K: usize = 20_000;

type RegardCounts = [u64; 3];

fn total(c: &RegardCounts) -> u64 {
    c.iter().sum()
}

#[derive(Debug, Clone, Default)]
pub struct TableOptions {
    /// Words never counted. Empty by default.
    pub stoplist: HashSet<String>,
    /// Restrict the analysis to these class keywords (e.g. the nationalities covered by a
    /// gold list). `None` uses every keyword of the class.
    pub attributes: Option<Vec<String>>,
}

/// Counts `n(a)`, `n(w,a)` and `n(w,a,r)` for one attribute class.
///
/// Attributes with no labelled sentence are left out, so every attribute in the table
/// has `n(a) > 0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CooccurrenceTable {
    class_name: String,
    attributes: Vec<String>,
    attr_index: HashMap<String, usize>,
    attr_counts: Vec<RegardCounts>,
    words: HashMap<String, HashMap<usize, RegardCounts>>,
}

#[derive(Debug, Clone)]
struct Partial {
    attr_counts: Vec<RegardCounts>,
    words: HashMap<String, HashMap<usize, RegardCounts>>,
}

impl Partial {
    fn new(n_attrs: usize) -> Self {
        Partial {
            attr_counts: vec![[0; 3]; n_attrs],
            words: HashMap::new(),
        }
    }

    fn add(
        &mut self,
        sentence: &AnnotatedSentence,
        attr_index: &HashMap<String, usize>,
        stoplist: &HashSet<String>,
    ) {
        let hits: Vec<(usize, RegardLabel)> = sentence
            .labels
            .iter()
            .filter_map(|(k, &r)| attr_index.get(k).map(|&i| (i, r)))
            .collect();
        if hits.is_empty() {
            return;
        }
        let tokens = tokenize(&sentence.text);
        let distinct: HashSet<&str> = tokens
            .iter()
            .map(String::as_str)
            .filter(|t| !stoplist.contains(*t))
            .collect();
        for &(a, r) in &hits {
            self.attr_counts[a][r.index()] += 1;
        }
        for w in distinct {
            let per_attr = match self.words.get_mut(w) {
                Some(m) => m,
                None => self.words.entry(w.to_owned()).or_default(),
            };
            for &(a, r) in &hits {
                per_attr.entry(a).or_insert([0; 3])[r.index()] += 1;
            }
        }
    }

    fn merge(mut self, other: Partial) -> Partial {
        for (a, c) in other.attr_counts.iter().enumerate() {
            for r in 0..3 {
                self.attr_counts[a][r] += c[r];
            }
        }
        for (w, m) in other.words {
            let mine = self.words.entry(w).or_default();
            for (a, c) in m {
                let slot = mine.entry(a).or_insert([0; 3]);
                for r in 0..3 {
                    slot[r] += c[r];
                }
            }
        }
        self
    }
}

pub fn build_table(annotated: &[AnnotatedSentence], class: &AttributeClass) -> CooccurrenceTable {
    build_table_with(annotated, class, &TableOptions::default())
}

/// Counts in parallel; partial tables are merged by addition, so the result does not
/// depend on how the corpus is split.
pub fn build_table_with(
    annotated: &[AnnotatedSentence],
    class: &AttributeClass,
    opts: &TableOptions,
) -> CooccurrenceTable {
    let candidates: Vec<String> = match &opts.attributes {
        Some(subset) => class
            .keyword_names()
            .filter(|k| subset.iter().any(|s| s == k))
            .map(str::to_owned)
            .collect(),
        None => class.keyword_names().map(str::to_owned).collect(),
    };
    let index: HashMap<String, usize> = candidates
        .iter()
        .enumerate()
        .map(|(i, k)| (k.clone(), i))
        .collect();
    let n = candidates.len();
    let partial = annotated
        .par_iter()
        .fold(
            || Partial::new(n),
            |mut acc, s| {
                acc.add(s, &index, &opts.stoplist);
                acc
            },
        )
        .reduce(|| Partial::new(n), Partial::merge);
    CooccurrenceTable::from_partial(&class.name, candidates, partial)
}

impl CooccurrenceTable {
    fn from_partial(class_name: &str, candidates: Vec<String>, partial: Partial) -> Self {
        // drop attributes that never occurred and renumber the rest
        let mut remap = vec![None; candidates.len()];
        let mut attributes = Vec::new();
        let mut attr_counts = Vec::new();
        for (old, name) in candidates.into_iter().enumerate() {
            if total(&partial.attr_counts[old]) > 0 {
                remap[old] = Some(attributes.len());
                attributes.push(name);
                attr_counts.push(partial.attr_counts[old]);
            }
        }
        let words = partial
            .words
            .into_iter()
            .map(|(w, m)| {
                let m = m
                    .into_iter()
                    .map(|(a, c)| (remap[a].expect("word counted for a present attribute"), c))
                    .collect();
                (w, m)
            })
            .collect();
        let attr_index = attributes
            .iter()
            .enumerate()
            .map(|(i, k)| (k.clone(), i))
            .collect();
        CooccurrenceTable {
            class_name: class_name.to_owned(),
            attributes,
            attr_index,
            attr_counts,
            words,
        }
    }

    pub fn class_name(&self) -> &str {
        &self.class_name
    }

    /// Attributes with at least one labelled sentence, in taxonomy order.
    pub fn attributes(&self) -> &[String] {
        &self.attributes
    }

    pub fn has_attribute(&self, a: &str) -> bool {
        self.attr_index.contains_key(a)
    }

    fn attr(&self, a: &str) -> Result<usize> {
        self.attr_index
            .get(a)
            .copied()
            .ok_or_else(|| Error::domain(format!("attribute {a:?} has no sentences in this table")))
    }

    /// n(a); 0 for attributes not in the table.
    pub fn n_attr(&self, a: &str) -> u64 {
        self.attr_index
            .get(a)
            .map_or(0, |&i| total(&self.attr_counts[i]))
    }

    /// Sentence counts of each regard label for `a`.
    pub fn attr_regard_counts(&self, a: &str) -> [u64; 3] {
        self.attr_index
            .get(a)
            .map_or([0; 3], |&i| self.attr_counts[i])
    }

    /// n(w,a).
    pub fn n_word(&self, w: &str, a: &str) -> u64 {
        self.word_counts(w, a).map_or(0, |c| total(&c))
    }

    /// n(w,a,r).
    pub fn n_word_regard(&self, w: &str, a: &str, r: RegardLabel) -> u64 {
        self.word_counts(w, a).map_or(0, |c| c[r.index()])
    }

    fn word_counts(&self, w: &str, a: &str) -> Option<RegardCounts> {
        let ai = *self.attr_index.get(a)?;
        self.words.get(w)?.get(&ai).copied()
    }

    /// p(w|a), or `None` when `a` has no sentences.
    pub fn p_word_given_attr(&self, w: &str, a: &str) -> Option<f64> {
        let n = self.n_attr(a);
        (n > 0).then(|| self.n_word(w, a) as f64 / n as f64)
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.words.keys().map(String::as_str)
    }

    pub fn word_count(&self) -> usize {
        self.words.len()
    }

    pub fn to_dump(&self) -> TableDump {
        let attributes = self
            .attributes
            .iter()
            .zip(&self.attr_counts)
            .map(|(name, c)| AttributeDump {
                name: name.clone(),
                sentences: total(c),
                regard: RegardDump::from(*c),
            })
            .collect();
        let words = self
            .words
            .iter()
            .map(|(w, m)| {
                let per = m
                    .iter()
                    .map(|(&a, &c)| (self.attributes[a].clone(), RegardDump::from(c)))
                    .collect();
                (w.clone(), per)
            })
            .collect();
        TableDump {
            class: self.class_name.clone(),
            attributes,
            words,
        }
    }
}

/// JSON form of a [`CooccurrenceTable`]; maps are ordered so output is stable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableDump {
    pub class: String,
    pub attributes: Vec<AttributeDump>,
    pub words: BTreeMap<String, BTreeMap<String, RegardDump>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeDump {
    pub name: String,
    pub sentences: u64,
    pub regard: RegardDump,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegardDump {
    pub positive: u64,
    pub negative: u64,
    pub neutral: u64,
}

impl From<RegardCounts> for RegardDump {
    fn from(c: RegardCounts) -> Self {
        RegardDump {
            positive: c[RegardLabel::Positive.index()],
            negative: c[RegardLabel::Negative.index()],
            neutral: c[RegardLabel::Neutral.index()],
        }
    }
}

/// The analysis vocabulary `V = ∩_a V_a`, where `V_a` holds the `k` words most often
/// co-occurring with `a`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Vocabulary {
    words: BTreeSet<String>,
    per_attribute: BTreeMap<String, BTreeSet<String>>,
}

impl Vocabulary {
    pub fn contains(&self, w: &str) -> bool {
        self.words.contains(w)
    }

    pub fn words(&self) -> &BTreeSet<String> {
        &self.words
    }

    pub fn per_attribute(&self) -> &BTreeMap<String, BTreeSet<String>> {
        &self.per_attribute
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// `V_a` is cut at exactly `k` after sorting by `(n(w,a) desc, word asc)`.
pub fn build_vocab(table: &CooccurrenceTable, per_attribute_k: usize) -> Vocabulary {
    let mut per_attribute = BTreeMap::new();
    for (ai, a) in table.attributes.iter().enumerate() {
        let mut ranked: Vec<(&str, u64)> = table
            .words
            .iter()
            .filter_map(|(w, m)| m.get(&ai).map(|c| (w.as_str(), total(c))))
            .filter(|&(_, n)| n > 0)
            .collect();
        ranked.sort_unstable_by(|x, y| y.1.cmp(&x.1).then_with(|| x.0.cmp(y.0)));
        ranked.truncate(per_attribute_k);
        per_attribute.insert(
            a.clone(),
            ranked
                .into_iter()
                .map(|(w, _)| w.to_owned())
                .collect::<BTreeSet<_>>(),
        );
    }
    let mut sets = per_attribute.values();
    let words = match sets.next() {
        Some(first) => sets.fold(first.clone(), |acc, s| &acc & s),
        None => BTreeSet::new(),
    };
    Vocabulary {
        words,
        per_attribute,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScoreKind {
    Frequency,
    FrequencyRegard(RegardLabel),
}

impl ScoreKind {
    pub const ALL: [ScoreKind; 4] = [
        ScoreKind::Frequency,
        ScoreKind::FrequencyRegard(RegardLabel::Positive),
        ScoreKind::FrequencyRegard(RegardLabel::Negative),
        ScoreKind::FrequencyRegard(RegardLabel::Neutral),
    ];
}

impl fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScoreKind::Frequency => f.write_str("frequency"),
            ScoreKind::FrequencyRegard(r) => write!(f, "frequency_regard:{r}"),
        }
    }
}

impl FromStr for ScoreKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "frequency" {
            return Ok(ScoreKind::Frequency);
        }
        match s.split_once(':') {
            Some(("frequency_regard", r)) => r.parse().map(ScoreKind::FrequencyRegard),
            _ => Err(format!("unknown score kind {s:?}")),
        }
    }
}

/// Words of one attribute in descending score order, ties broken by word.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasRanking {
    pub attribute: String,
    pub score_kind: ScoreKind,
    pub entries: Vec<(String, f64)>,
}

impl BiasRanking {
    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(w, _)| w.as_str())
    }

    /// 1-based rank of `w`, if present.
    pub fn rank_of(&self, w: &str) -> Option<usize> {
        self.entries.iter().position(|(x, _)| x == w).map(|i| i + 1)
    }
}

/// Sorts descending by score, then ascending by word, and keeps `top_n`.
pub fn sort_ranking(entries: &mut Vec<(String, f64)>, top_n: Option<usize>) {
    entries.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    if let Some(n) = top_n {
        entries.truncate(n);
    }
}

/// Scores words of a finished table against its vocabulary.
///
/// The optional exponents raise the frequency and regard terms before the minimum is
/// taken in the combined score; the default `(1, 1)` leaves both unscaled.
#[derive(Debug, Clone, Copy)]
pub struct BiasScorer<'t> {
    table: &'t CooccurrenceTable,
    vocab: &'t Vocabulary,
    exponents: (f64, f64),
}

impl<'t> BiasScorer<'t> {
    pub fn new(table: &'t CooccurrenceTable, vocab: &'t Vocabulary) -> Self {
        BiasScorer {
            table,
            vocab,
            exponents: (1.0, 1.0),
        }
    }

    pub fn with_exponents(mut self, frequency: f64, regard: f64) -> Self {
        self.exponents = (frequency, regard);
        self
    }

    pub fn table(&self) -> &'t CooccurrenceTable {
        self.table
    }

    pub fn vocab(&self) -> &'t Vocabulary {
        self.vocab
    }

    /// `p(w|a) / mean_{a'} p(w|a')`.
    pub fn frequency_bias(&self, w: &str, a: &str) -> Result<f64> {
        if !self.vocab.contains(w) {
            return Err(Error::domain(format!(
                "word {w:?} is not in the vocabulary"
            )));
        }
        let ai = self.table.attr(a)?;
        let m = self
            .table
            .words
            .get(w)
            .ok_or_else(|| Error::domain(format!("word {w:?} not in table")))?;
        let p = |i: usize| {
            let n = m.get(&i).map_or(0, total);
            n as f64 / total(&self.table.attr_counts[i]) as f64
        };
        let k = self.table.attributes.len();
        let mean = (0..k).map(p).sum::<f64>() / k as f64;
        if mean <= 0.0 {
            return Err(Error::domain(format!(
                "word {w:?} never co-occurs with the class"
            )));
        }
        Ok(p(ai) / mean)
    }

    /// `p(r|w,a) / mean_{r'} p(r'|w,a)`.
    pub fn regard_bias_term(&self, w: &str, a: &str, r: RegardLabel) -> Result<f64> {
        self.table.attr(a)?;
        let c = self
            .table
            .word_counts(w, a)
            .filter(|c| total(c) > 0)
            .ok_or_else(|| Error::domain(format!("n({w:?},{a:?}) = 0")))?;
        let n = total(&c) as f64;
        let p = |r: RegardLabel| c[r.index()] as f64 / n;
        let mean = RegardLabel::ALL.into_iter().map(p).sum::<f64>() / 3.0;
        Ok(p(r) / mean)
    }

    pub fn frequency_regard_bias(&self, w: &str, a: &str, r: RegardLabel) -> Result<f64> {
        let freq = pow(self.frequency_bias(w, a)?, self.exponents.0);
        let reg = pow(self.regard_bias_term(w, a, r)?, self.exponents.1);
        Ok(freq.min(reg))
    }

    pub fn score(&self, w: &str, a: &str, kind: ScoreKind) -> Result<f64> {
        match kind {
            ScoreKind::Frequency => self.frequency_bias(w, a),
            ScoreKind::FrequencyRegard(r) => self.frequency_regard_bias(w, a, r),
        }
    }

    /// Every vocabulary word ranked for `a`; `top_n` truncates.
    pub fn rank_words(
        &self,
        a: &str,
        kind: ScoreKind,
        top_n: Option<usize>,
    ) -> Result<BiasRanking> {
        self.table.attr(a)?;
        let mut entries = self
            .vocab
            .words
            .iter()
            .map(|w| Ok((w.clone(), self.score(w, a, kind)?)))
            .collect::<Result<Vec<_>>>()?;
        sort_ranking(&mut entries, top_n);
        Ok(BiasRanking {
            attribute: a.to_owned(),
            score_kind: kind,
            entries,
        })
    }

    /// Rankings for every attribute of the table under every score kind.
    pub fn rank_all(&self, top_n: Option<usize>) -> Result<Vec<BiasRanking>> {
        let jobs: Vec<(&str, ScoreKind)> = self
            .table
            .attributes
            .iter()
            .flat_map(|a| ScoreKind::ALL.into_iter().map(move |k| (a.as_str(), k)))
            .collect();
        jobs.into_par_iter()
            .map(|(a, k)| self.rank_words(a, k, top_n))
            .collect()
    }
}

fn pow(x: f64, e: f64) -> f64 {
    if e == 1.0 {
        x
    } else {
        x.powf(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegardDistribution {
    pub positive: f64,
    pub negative: f64,
    pub neutral: f64,
    pub sentences: u64,
}

/// Fractions of `a`'s per-sentence regard labels.
pub fn regard_distribution(a: &str, annotated: &[AnnotatedSentence]) -> Result<RegardDistribution> {
    let mut counts = [0u64; 3];
    for s in annotated {
        if let Some(r) = s.labels.get(a) {
            counts[r.index()] += 1;
        }
    }
    distribution_from_counts(a, counts)
}

pub fn distribution_from_counts(a: &str, counts: [u64; 3]) -> Result<RegardDistribution> {
    let n = total(&counts);
    if n == 0 {
        return Err(Error::domain(format!(
            "attribute {a:?} has no annotated sentences"
        )));
    }
    let f = |r: RegardLabel| counts[r.index()] as f64 / n as f64;
    Ok(RegardDistribution {
        positive: f(RegardLabel::Positive),
        negative: f(RegardLabel::Negative),
        neutral: f(RegardLabel::Neutral),
        sentences: n,
    })
}

/// Writes `attribute,score_kind,rank,word,score` rows with a header.
pub fn write_rankings_csv<W: Write>(out: W, rankings: &[BiasRanking]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::parse("rankings csv", e);
    w.write_record(["attribute", "score_kind", "rank", "word", "score"])
        .map_err(io)?;
    for r in rankings {
        let kind = r.score_kind.to_string();
        for (i, (word, score)) in r.entries.iter().enumerate() {
            w.write_record([
                r.attribute.as_str(),
                kind.as_str(),
                &(i + 1).to_string(),
                word,
                &format!("{score:.12}"),
            ])
            .map_err(io)?;
        }
    }
    w.flush().map_err(|e| Error::io("rankings csv", e))
}

/// Reads rankings written by [`write_rankings_csv`]. Lines starting with `#` are skipped.
pub fn read_rankings_csv<R: std::io::Read>(input: R) -> Result<Vec<BiasRanking>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(input);
    let mut by_key: BTreeMap<(String, String), Vec<(usize, String, f64)>> = BTreeMap::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse("rankings csv", e))?;
        let ctx = || format!("rankings csv row {}", line + 1);
        if rec.len() != 5 {
            return Err(Error::parse(ctx(), "expected 5 columns"));
        }
        let rank: usize = rec[2].parse().map_err(|e| Error::parse(ctx(), e))?;
        let score: f64 = rec[4].parse().map_err(|e| Error::parse(ctx(), e))?;
        by_key
            .entry((rec[0].to_owned(), rec[1].to_owned()))
            .or_default()
            .push((rank, rec[3].to_owned(), score));
    }
    by_key
        .into_iter()
        .map(|((attribute, kind), mut rows)| {
            rows.sort_by_key(|r| r.0);
            Ok(BiasRanking {
                attribute,
                score_kind: kind.parse().map_err(|e| Error::parse("rankings csv", e))?,
                entries: rows.into_iter().map(|(_, w, s)| (w, s)).collect(),
            })
        })
        .collect()
}
