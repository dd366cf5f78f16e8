//! Corpus ingestion: documents, sentence splitting, tokenization, the sentence length
//! filter and per-attribute sampling caps.
//!
//! Language identification, deduplication and boilerplate removal are expected to have
//! happened upstream. Input is assumed to be English.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sentences need more than 16 tokens...
pub const MIN_TOKENS: usize = 17;
/// ...and fewer than 128.
pub const MAX_TOKENS: usize = 127;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    /// Lowercased surface form.
    pub text: String,
    /// Byte offsets into the source text.
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub sentence_id: String,
    pub text: String,
    tokens: Vec<Token>,
}

impl Sentence {
    pub fn new(sentence_id: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        let tokens = tokenize_with_spans(&text);
        Sentence {
            sentence_id: sentence_id.into(),
            text,
            tokens,
        }
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn token_texts(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.text.as_str())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

fn is_punct(c: char) -> bool {
    !c.is_alphanumeric()
}

/// Whitespace tokenization with leading and trailing punctuation split off, one
/// character per punctuation token. Internal punctuation (hyphens, apostrophes) is kept.
pub fn tokenize_with_spans(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut push = |s: &str, start: usize| {
        out.push(Token {
            text: s.to_lowercase(),
            start,
            end: start + s.len(),
        })
    };
    let mut chunk_start = None;
    let flush = |start: usize, end: usize, push: &mut dyn FnMut(&str, usize)| {
        let chunk = &text[start..end];
        let core_start = chunk
            .char_indices()
            .find(|&(_, c)| !is_punct(c))
            .map(|(i, _)| i);
        let Some(core_start) = core_start else {
            for (i, c) in chunk.char_indices() {
                push(&chunk[i..i + c.len_utf8()], start + i);
            }
            return;
        };
        let core_end = chunk
            .char_indices()
            .rev()
            .find(|&(_, c)| !is_punct(c))
            .map(|(i, c)| i + c.len_utf8())
            .unwrap();
        for (i, c) in chunk[..core_start].char_indices() {
            push(&chunk[i..i + c.len_utf8()], start + i);
        }
        push(&chunk[core_start..core_end], start + core_start);
        for (i, c) in chunk[core_end..].char_indices() {
            let at = core_end + i;
            push(&chunk[at..at + c.len_utf8()], start + at);
        }
    };
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = chunk_start.take() {
                flush(s, i, &mut push);
            }
        } else if chunk_start.is_none() {
            chunk_start = Some(i);
        }
    }
    if let Some(s) = chunk_start {
        flush(s, text.len(), &mut push);
    }
    out
}

pub fn tokenize(text: &str) -> Vec<String> {
    tokenize_with_spans(text)
        .into_iter()
        .map(|t| t.text)
        .collect()
}

pub fn passes_length_filter(token_count: usize) -> bool {
    (MIN_TOKENS..=MAX_TOKENS).contains(&token_count)
}

/// Splits text after `.`, `!` or `?` when followed by whitespace and then an uppercase
/// letter, or by trailing whitespace up to the end of the text.
pub fn segment(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if !matches!(c, '.' | '!' | '?') {
            continue;
        }
        let end = i + c.len_utf8();
        let rest = &text[end..];
        let trimmed = rest.trim_start();
        if trimmed.len() == rest.len() {
            continue;
        }
        let boundary = match trimmed.chars().next() {
            None => true,
            Some(next) => next.is_uppercase(),
        };
        if boundary {
            let piece = text[start..end].trim();
            if !piece.is_empty() {
                out.push(piece);
            }
            start = text.len() - trimmed.len();
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

/// Segments a document and keeps only sentences that pass the length filter. Ordinals
/// count every segment, so ids stay stable when the filter bounds change.
pub fn split_sentences(doc: &Document) -> Vec<Sentence> {
    segment(&doc.text)
        .into_iter()
        .enumerate()
        .filter_map(|(ordinal, text)| {
            let sentence = Sentence::new(format!("{}#{ordinal}", doc.doc_id), text);
            passes_length_filter(sentence.len()).then_some(sentence)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusFormat {
    /// One `{"doc_id": ..., "text": ...}` object per line.
    #[default]
    Jsonl,
    /// One document per line; the 1-based line number is the id.
    PlainText,
}

/// Streams documents from a corpus file. Duplicate doc ids are reported as errors.
pub struct CorpusReader {
    path: PathBuf,
    format: CorpusFormat,
    lines: std::io::Lines<BufReader<File>>,
    line_no: usize,
    seen: HashSet<String>,
}

impl CorpusReader {
    pub fn open(path: impl AsRef<Path>, format: CorpusFormat) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        Ok(CorpusReader {
            lines: BufReader::new(file).lines(),
            path,
            format,
            line_no: 0,
            seen: HashSet::new(),
        })
    }
}

impl Iterator for CorpusReader {
    type Item = Result<Document>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(Error::io(&self.path, e))),
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            let context = || format!("{}:{}", self.path.display(), self.line_no);
            let doc = match self.format {
                CorpusFormat::PlainText => Document {
                    doc_id: self.line_no.to_string(),
                    text: line,
                },
                CorpusFormat::Jsonl => match serde_json::from_str::<Document>(&line) {
                    Ok(d) => d,
                    Err(e) => return Some(Err(Error::parse(context(), e))),
                },
            };
            if doc.doc_id.is_empty() {
                return Some(Err(Error::parse(context(), "empty doc_id")));
            }
            if !self.seen.insert(doc.doc_id.clone()) {
                return Some(Err(Error::parse(
                    context(),
                    format!("duplicate doc_id {:?}", doc.doc_id),
                )));
            }
            return Some(Ok(doc));
        }
    }
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

struct Reservoir<T> {
    rng: ChaCha8Rng,
    seen: usize,
    items: Vec<(usize, T)>,
}

/// Keeps at most `cap` records per attribute by reservoir sampling. Every attribute
/// draws from its own seeded stream, so the result depends only on the seed and on the
/// input order within each attribute. Retained records come back in input order.
pub fn cap_per_attribute<T, K, F>(
    records: impl IntoIterator<Item = T>,
    attribute_of: F,
    cap: usize,
    seed: u64,
) -> Result<Vec<T>>
where
    F: Fn(&T) -> K,
    K: AsRef<str>,
{
    if cap == 0 {
        return Err(Error::domain("per-attribute cap must be at least 1"));
    }
    let mut reservoirs: HashMap<String, Reservoir<T>> = HashMap::new();
    for (index, record) in records.into_iter().enumerate() {
        let key = attribute_of(&record);
        let key = key.as_ref();
        let res = match reservoirs.get_mut(key) {
            Some(r) => r,
            None => reservoirs
                .entry(key.to_owned())
                .or_insert_with(|| Reservoir {
                    rng: ChaCha8Rng::seed_from_u64(seed ^ fnv1a(key)),
                    seen: 0,
                    items: Vec::new(),
                }),
        };
        if res.items.len() < cap {
            res.items.push((index, record));
        } else {
            let j = res.rng.random_range(0..=res.seen);
            if j < cap {
                res.items[j] = (index, record);
            }
        }
        res.seen += 1;
    }
    let mut kept: Vec<(usize, T)> = reservoirs.into_values().flat_map(|r| r.items).collect();
    kept.sort_unstable_by_key(|(i, _)| *i);
    Ok(kept.into_iter().map(|(_, r)| r).collect())
}
