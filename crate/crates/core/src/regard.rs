//! Regard labelling of protected mentions and per-(sentence, attribute) aggregation.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backend::{dispatch, Classifier, DispatchOptions};
use crate::detect::{build_request, Mention, MentionInContext};
use crate::error::{Error, Result};
use crate::prompt::PromptTemplate;
use crate::protocol::{Label, Task};
use crate::taxonomy::{AttributeKeyword, Taxonomy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegardLabel {
    Positive,
    Negative,
    Neutral,
}

impl RegardLabel {
    pub const ALL: [RegardLabel; 3] = [
        RegardLabel::Positive,
        RegardLabel::Negative,
        RegardLabel::Neutral,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RegardLabel::Positive => "positive",
            RegardLabel::Negative => "negative",
            RegardLabel::Neutral => "neutral",
        }
    }

    /// Position in [`RegardLabel::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    // lower wins ties: Negative > Positive > Neutral
    fn tie_rank(self) -> u8 {
        match self {
            RegardLabel::Negative => 0,
            RegardLabel::Positive => 1,
            RegardLabel::Neutral => 2,
        }
    }
}

impl FromStr for RegardLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "positive" => Ok(RegardLabel::Positive),
            "negative" => Ok(RegardLabel::Negative),
            "neutral" => Ok(RegardLabel::Neutral),
            other => Err(format!("unknown regard label {other:?}")),
        }
    }
}

impl fmt::Display for RegardLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One line of an annotated corpus file: regard per protected attribute in a sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedSentence {
    pub sentence_id: String,
    pub text: String,
    pub labels: BTreeMap<String, RegardLabel>,
}

pub type AnnotatedCorpus = Vec<AnnotatedSentence>;

pub fn render_regard_prompt(keyword: &AttributeKeyword, sentence_text: &str) -> String {
    render_regard_prompt_with(&PromptTemplate::regard(), keyword, sentence_text)
}

pub fn render_regard_prompt_with(
    template: &PromptTemplate,
    keyword: &AttributeKeyword,
    sentence_text: &str,
) -> String {
    template.render(
        &keyword.keyword,
        keyword.gloss_continuation(),
        sentence_text,
    )
}

/// Reads the label a response starts with ("Negative. The text describes ...").
pub fn parse_regard_response(response: &str) -> Result<RegardLabel> {
    let first = response
        .split_whitespace()
        .next()
        .map(|w| {
            w.trim_matches(|c: char| !c.is_alphanumeric())
                .to_lowercase()
        })
        .unwrap_or_default();
    first
        .parse()
        .map_err(|e: String| Error::parse("llm regard answer", e))
}

#[derive(Debug, Deserialize)]
struct RegardLexiconFile {
    positive: Vec<String>,
    negative: Vec<String>,
}

const REGARD_LEXICON: &str = include_str!("../../../lexicons/regard_cues.json");

/// Sentiment-cue lexicon: the majority polarity of cue words in the sentence, Neutral
/// on a tie or when no cue is present.
#[derive(Debug, Clone)]
pub struct BaselineRegard {
    positive: HashSet<String>,
    negative: HashSet<String>,
}

impl BaselineRegard {
    pub fn bundled() -> Self {
        Self::from_json_str(REGARD_LEXICON).expect("bundled regard lexicon is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn from_json_str(json: &str) -> Result<Self> {
        let file: RegardLexiconFile =
            serde_json::from_str(json).map_err(|e| Error::parse("regard lexicon", e))?;
        Ok(BaselineRegard {
            positive: file.positive.into_iter().collect(),
            negative: file.negative.into_iter().collect(),
        })
    }

    pub fn decide(&self, tokens: &[&str]) -> (RegardLabel, f64) {
        let pos = tokens
            .iter()
            .filter(|t| self.positive.contains(**t))
            .count();
        let neg = tokens
            .iter()
            .filter(|t| self.negative.contains(**t))
            .count();
        let margin = pos.abs_diff(neg) as f64;
        let confidence = (0.5 + 0.1 * margin).min(0.95);
        match pos.cmp(&neg) {
            std::cmp::Ordering::Greater => (RegardLabel::Positive, confidence),
            std::cmp::Ordering::Less => (RegardLabel::Negative, confidence),
            std::cmp::Ordering::Equal => (RegardLabel::Neutral, 0.5),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegardRecord {
    pub mention: Mention,
    pub label: RegardLabel,
    pub confidence: f64,
}

/// One record per (protected) mention, in input order.
pub fn classify_regard(
    mentions: &[MentionInContext<'_>],
    taxonomy: &Taxonomy,
    backend: &dyn Classifier,
    opts: DispatchOptions,
) -> Result<Vec<RegardRecord>> {
    let requests = mentions
        .iter()
        .map(|m| build_request(Task::Regard, taxonomy, *m))
        .collect::<Result<Vec<_>>>()?;
    let responses = dispatch(backend, &requests, opts)?;
    mentions
        .iter()
        .zip(responses)
        .map(|(m, resp)| {
            let Label::Regard(label) = resp.interpret(Task::Regard)? else {
                unreachable!("interpret(Regard) yields a regard label")
            };
            Ok(RegardRecord {
                mention: m.mention.clone(),
                label,
                confidence: resp.confidence,
            })
        })
        .collect()
}

/// Majority label per attribute; ties go Negative, then Positive, then Neutral.
pub fn majority_label(labels: impl IntoIterator<Item = RegardLabel>) -> Option<RegardLabel> {
    let mut counts = [0usize; 3];
    for l in labels {
        counts[l.index()] += 1;
    }
    RegardLabel::ALL
        .into_iter()
        .filter(|l| counts[l.index()] > 0)
        .max_by(|a, b| {
            counts[a.index()]
                .cmp(&counts[b.index()])
                .then(b.tie_rank().cmp(&a.tie_rank()))
        })
}

pub fn aggregate_sentence_labels(
    text: &str,
    records: &[RegardRecord],
) -> Result<AnnotatedSentence> {
    let first = records
        .first()
        .ok_or_else(|| Error::domain("no regard records to aggregate"))?;
    let sentence_id = &first.mention.sentence_id;
    let mut per_attr: BTreeMap<&str, Vec<RegardLabel>> = BTreeMap::new();
    for r in records {
        if &r.mention.sentence_id != sentence_id {
            return Err(Error::validation(
                "regard records",
                format!(
                    "mixed sentence ids {:?} and {:?}",
                    sentence_id, r.mention.sentence_id
                ),
            ));
        }
        per_attr
            .entry(&r.mention.keyword)
            .or_default()
            .push(r.label);
    }
    let labels = per_attr
        .into_iter()
        .map(|(k, v)| (k.to_owned(), majority_label(v).expect("nonempty group")))
        .collect();
    Ok(AnnotatedSentence {
        sentence_id: sentence_id.clone(),
        text: text.to_owned(),
        labels,
    })
}
