//! Detection, annotation and analysis stages as library calls. The command-line tool
//! writes the outputs of each stage to disk; calling these in sequence gives the same
//! results without the files.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::{Classifier, DispatchOptions};
use crate::detect::{disambiguate, KeywordMatcher, Mention, MentionInContext, WsdLabel};
use crate::error::{Error, Result};
use crate::ingest::{cap_per_attribute, split_sentences, Document, Sentence};
use crate::regard::{aggregate_sentence_labels, classify_regard, AnnotatedSentence};
use crate::stats::{
    build_table_with, build_vocab, regard_distribution, BiasRanking, BiasScorer, CooccurrenceTable,
    RegardDistribution, TableOptions, Vocabulary, DEFAULT_VOCAB_K,
};
use crate::taxonomy::{AttributeClass, Taxonomy};

pub const DEFAULT_PER_ATTRIBUTE_CAP: usize = 100_000;

/// One keyword occurrence with its disambiguation decision; a line of the mentions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MentionRecord {
    pub sentence_id: String,
    pub text: String,
    pub keyword: String,
    pub class: String,
    pub token_index: usize,
    pub span: [usize; 2],
    pub label: WsdLabel,
    pub confidence: f64,
    pub source: String,
}

impl MentionRecord {
    pub fn mention(&self) -> Mention {
        Mention {
            sentence_id: self.sentence_id.clone(),
            keyword: self.keyword.clone(),
            token_index: self.token_index,
            char_span: (self.span[0], self.span[1]),
        }
    }
}

/// Splits, filters and matches documents, then disambiguates every mention. Records come
/// back in document, sentence and token order.
pub fn detect_documents(
    docs: &[Document],
    taxonomy: &Taxonomy,
    backend: &dyn Classifier,
    opts: DispatchOptions,
) -> Result<Vec<MentionRecord>> {
    let matcher = KeywordMatcher::new(taxonomy);
    let found: Vec<(Sentence, Vec<Mention>)> = docs
        .par_iter()
        .flat_map_iter(split_sentences)
        .map(|s| {
            let m = matcher.find_mentions(&s);
            (s, m)
        })
        .filter(|(_, m)| !m.is_empty())
        .collect();
    let items: Vec<MentionInContext<'_>> = found
        .iter()
        .flat_map(|(s, ms)| {
            ms.iter().map(|m| MentionInContext {
                mention: m,
                text: &s.text,
            })
        })
        .collect();
    let decisions = disambiguate(&items, taxonomy, backend, opts)?;
    Ok(items
        .iter()
        .zip(decisions)
        .map(|(item, d)| {
            let class = taxonomy
                .class_of(&d.mention.keyword)
                .map(|c| c.name.clone())
                .unwrap_or_default();
            MentionRecord {
                sentence_id: d.mention.sentence_id,
                text: item.text.to_owned(),
                keyword: d.mention.keyword,
                class,
                token_index: d.mention.token_index,
                span: [d.mention.char_span.0, d.mention.char_span.1],
                label: d.label,
                confidence: d.confidence,
                source: d.source,
            }
        })
        .collect())
}

/// Regard annotation of the protected mentions.
///
/// Each (sentence, attribute) pair is one unit for the per-attribute cap; the cap keeps a
/// seeded uniform sample of at most `cap` pairs per attribute. Every mention of a kept
/// pair is classified and the labels are aggregated per sentence by majority. Sentences
/// appear in the order of their first mention.
pub fn annotate_mentions(
    records: &[MentionRecord],
    taxonomy: &Taxonomy,
    backend: &dyn Classifier,
    cap: usize,
    seed: u64,
    opts: DispatchOptions,
) -> Result<Vec<AnnotatedSentence>> {
    let protected: Vec<&MentionRecord> = records
        .iter()
        .filter(|r| r.label == WsdLabel::Protected)
        .collect();

    let mut pairs: Vec<(&str, &str)> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for r in &protected {
        if seen.insert((r.sentence_id.as_str(), r.keyword.as_str())) {
            pairs.push((r.sentence_id.as_str(), r.keyword.as_str()));
        }
    }
    let kept: std::collections::HashSet<(&str, &str)> =
        cap_per_attribute(pairs, |p| p.1, cap, seed)?
            .into_iter()
            .collect();

    let chosen: Vec<&MentionRecord> = protected
        .into_iter()
        .filter(|r| kept.contains(&(r.sentence_id.as_str(), r.keyword.as_str())))
        .collect();
    let mentions: Vec<Mention> = chosen.iter().map(|r| r.mention()).collect();
    let items: Vec<MentionInContext<'_>> = chosen
        .iter()
        .zip(&mentions)
        .map(|(r, m)| MentionInContext {
            mention: m,
            text: &r.text,
        })
        .collect();
    let regard = classify_regard(&items, taxonomy, backend, opts)?;

    let mut order: Vec<&str> = Vec::new();
    let mut groups: HashMap<&str, Vec<_>> = HashMap::new();
    for (r, rec) in chosen.iter().zip(regard) {
        let g = groups.entry(r.sentence_id.as_str()).or_insert_with(|| {
            order.push(r.sentence_id.as_str());
            Vec::new()
        });
        g.push((r.text.as_str(), rec));
    }
    order
        .iter()
        .map(|id| {
            let group = &groups[id];
            let text = group[0].0;
            let recs: Vec<_> = group.iter().map(|(_, r)| r.clone()).collect();
            aggregate_sentence_labels(text, &recs)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct AnalyzeOptions {
    pub vocab_k: usize,
    pub table: TableOptions,
    pub exponents: (f64, f64),
    /// Truncate each ranking; `None` keeps every vocabulary word.
    pub top_n: Option<usize>,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        AnalyzeOptions {
            vocab_k: DEFAULT_VOCAB_K,
            table: TableOptions::default(),
            exponents: (1.0, 1.0),
            top_n: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub table: CooccurrenceTable,
    pub vocab: Vocabulary,
    /// Per attribute in table order: the frequency ranking then one per regard label.
    pub rankings: Vec<BiasRanking>,
    pub distributions: Vec<(String, RegardDistribution)>,
}

impl Analysis {
    /// Rankings of one score kind keyed by attribute.
    pub fn rankings_of(&self, kind: crate::stats::ScoreKind) -> BTreeMap<String, BiasRanking> {
        self.rankings
            .iter()
            .filter(|r| r.score_kind == kind)
            .map(|r| (r.attribute.clone(), r.clone()))
            .collect()
    }
}

pub fn analyze(
    annotated: &[AnnotatedSentence],
    class: &AttributeClass,
    opts: &AnalyzeOptions,
) -> Result<Analysis> {
    if opts.vocab_k == 0 {
        return Err(Error::domain("vocabulary size k must be at least 1"));
    }
    let table = build_table_with(annotated, class, &opts.table);
    let vocab = build_vocab(&table, opts.vocab_k);
    let scorer = BiasScorer::new(&table, &vocab).with_exponents(opts.exponents.0, opts.exponents.1);
    let rankings = scorer.rank_all(opts.top_n)?;
    let distributions = table
        .attributes()
        .iter()
        .map(|a| Ok((a.clone(), regard_distribution(a, annotated)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Analysis {
        table,
        vocab,
        rankings,
        distributions,
    })
}
