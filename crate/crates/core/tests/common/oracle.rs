//! Brute-force reference implementation of the co-occurrence statistics in exact
//! rational arithmetic, plus a generator of small random annotated corpora.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use bias_audit::ingest::tokenize;
use bias_audit::regard::{AnnotatedSentence, RegardLabel};
use bias_audit::taxonomy::{AttributeClass, AttributeKeyword};
use num_rational::Ratio;
use rand::{Rng, RngCore};

pub type Q = Ratio<i128>;

pub fn to_f64(q: Q) -> f64 {
    *q.numer() as f64 / *q.denom() as f64
}

pub fn class_of(names: &[&str]) -> AttributeClass {
    AttributeClass {
        name: "oracle".into(),
        keywords: names
            .iter()
            .map(|k| AttributeKeyword {
                keyword: (*k).into(),
                gloss: format!("who is {k}"),
                class_name: "oracle".into(),
                gloss_is_complete: false,
            })
            .collect(),
    }
}

const WORDS: [&str; 24] = [
    "alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel", "india", "juliet",
    "kilo", "lima", "mike", "november", "oscar", "papa", "quebec", "romeo", "sierra", "tango",
    "uniform", "victor", "whiskey", "xray",
];

const ATTRS: [&str; 5] = ["a1", "a2", "a3", "a4", "a5"];

/// A corpus over a 24-word vocabulary; some sentences belong to no attribute, some to two.
pub fn random_corpus(rng: &mut impl RngCore) -> (AttributeClass, Vec<AnnotatedSentence>) {
    let n_attr = rng.random_range(2..=ATTRS.len());
    let names = &ATTRS[..n_attr];
    let vocab = rng.random_range(4..=WORDS.len());
    let n = rng.random_range(5..=150);
    let sentences = (0..n)
        .map(|i| {
            let len = rng.random_range(1..=12);
            let mut toks: Vec<&str> = (0..len)
                .map(|_| WORDS[rng.random_range(0..vocab)])
                .collect();
            let mut labels = BTreeMap::new();
            let k = rng.random_range(0..=2);
            for _ in 0..k {
                let a = names[rng.random_range(0..n_attr)];
                let r = RegardLabel::ALL[rng.random_range(0..3)];
                labels.insert(a.to_string(), r);
                if rng.random_bool(0.5) {
                    toks.push(a);
                }
            }
            if rng.random_bool(0.2) {
                toks.push(",");
            }
            AnnotatedSentence {
                sentence_id: format!("r{i}"),
                text: toks.join(" "),
                labels,
            }
        })
        .collect();
    (class_of(names), sentences)
}

/// Counts straight from the definitions, one scan per query.
pub struct Oracle<'c> {
    pub class: &'c AttributeClass,
    pub corpus: &'c [AnnotatedSentence],
}

impl<'c> Oracle<'c> {
    fn has(&self, s: &AnnotatedSentence, w: &str) -> bool {
        tokenize(&s.text).iter().any(|t| t == w)
    }

    pub fn attributes(&self) -> Vec<String> {
        self.class
            .keywords
            .iter()
            .map(|k| k.keyword.clone())
            .filter(|k| self.n_attr(k) > 0)
            .collect()
    }

    pub fn n_attr(&self, a: &str) -> i128 {
        self.corpus
            .iter()
            .filter(|s| s.labels.contains_key(a))
            .count() as i128
    }

    pub fn n_word(&self, w: &str, a: &str) -> i128 {
        self.corpus
            .iter()
            .filter(|s| s.labels.contains_key(a) && self.has(s, w))
            .count() as i128
    }

    pub fn n_word_regard(&self, w: &str, a: &str, r: RegardLabel) -> i128 {
        self.corpus
            .iter()
            .filter(|s| s.labels.get(a) == Some(&r) && self.has(s, w))
            .count() as i128
    }

    pub fn all_words(&self) -> BTreeSet<String> {
        self.corpus.iter().flat_map(|s| tokenize(&s.text)).collect()
    }

    pub fn vocab(&self, k: usize) -> BTreeSet<String> {
        let words = self.all_words();
        let mut sets = self.attributes().into_iter().map(|a| {
            let mut v: Vec<(i128, String)> = words
                .iter()
                .map(|w| (self.n_word(w, &a), w.clone()))
                .filter(|(n, _)| *n > 0)
                .collect();
            v.sort_by(|x, y| y.0.cmp(&x.0).then(x.1.cmp(&y.1)));
            v.into_iter()
                .take(k)
                .map(|(_, w)| w)
                .collect::<BTreeSet<_>>()
        });
        let first = sets.next().unwrap_or_default();
        sets.fold(first, |acc, s| acc.intersection(&s).cloned().collect())
    }

    pub fn p(&self, w: &str, a: &str) -> Q {
        Q::new(self.n_word(w, a), self.n_attr(a))
    }

    pub fn frequency_bias(&self, w: &str, a: &str) -> Q {
        let attrs = self.attributes();
        let sum: Q = attrs.iter().map(|x| self.p(w, x)).sum();
        let mean = sum / Q::from_integer(attrs.len() as i128);
        self.p(w, a) / mean
    }

    pub fn regard_term(&self, w: &str, a: &str, r: RegardLabel) -> Q {
        let n = self.n_word(w, a);
        let p = |r| Q::new(self.n_word_regard(w, a, r), n);
        let mean: Q = RegardLabel::ALL.iter().map(|&r| p(r)).sum::<Q>() / Q::from_integer(3);
        p(r) / mean
    }

    pub fn frequency_regard_bias(&self, w: &str, a: &str, r: RegardLabel) -> Q {
        self.frequency_bias(w, a).min(self.regard_term(w, a, r))
    }
}
