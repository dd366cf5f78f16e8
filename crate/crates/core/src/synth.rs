//! Seeded annotated corpora with planted word–attribute associations, used to check that
//! the bias scores recover what was planted.
//!
//! Every sentence mentions one attribute (optionally a second) and a handful of filler
//! words. On top of that:
//!
//! * planted words appear `planted_boost`× more often with their attribute and make the
//!   sentence Negative with probability `planted_negative_rate`;
//! * topical distractors appear `distractor_boost`× more often with their attribute but
//!   carry background regard, so they dominate frequency-only rankings;
//! * neutral-pair words appear `planted_boost`× more often with their attribute in sentences
//!   that are always Neutral.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::evaluate::{GoldEntry, StereotypeGold};
use crate::regard::{AnnotatedSentence, RegardLabel};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub attributes: Vec<String>,
    pub sentences_per_attribute: usize,
    pub filler_words: usize,
    pub fillers_per_sentence: usize,
    pub planted_per_attribute: usize,
    pub distractors_per_attribute: usize,
    pub neutral_per_attribute: usize,
    /// Probability that a sentence of a different attribute contains a given special word.
    pub base_rate: f64,
    pub planted_boost: f64,
    pub distractor_boost: f64,
    pub planted_negative_rate: f64,
    /// Regard of sentences without an own planted word: (positive, negative).
    pub background: (f64, f64),
    /// Fraction of sentences that also mention a second attribute.
    pub second_attribute_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            attributes: ["african", "arab", "asian", "black", "white"]
                .map(String::from)
                .to_vec(),
            sentences_per_attribute: 2000,
            filler_words: 120,
            fillers_per_sentence: 10,
            planted_per_attribute: 2,
            distractors_per_attribute: 10,
            neutral_per_attribute: 1,
            base_rate: 0.01,
            planted_boost: 5.0,
            distractor_boost: 8.0,
            planted_negative_rate: 0.8,
            background: (0.2, 0.03),
            second_attribute_rate: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub sentences: Vec<AnnotatedSentence>,
    /// (word, attribute) pairs planted with negative regard.
    pub planted: Vec<(String, String)>,
    pub distractors: Vec<(String, String)>,
    /// (word, attribute) pairs whose co-occurrences are all Neutral.
    pub neutral: Vec<(String, String)>,
}

impl SynthCorpus {
    /// The planted pairs as a Negative gold list.
    pub fn gold(&self) -> StereotypeGold {
        StereotypeGold::new(
            self.planted
                .iter()
                .map(|(w, a)| GoldEntry {
                    attribute: a.clone(),
                    word: w.clone(),
                    mean_offensiveness: 2.0,
                })
                .collect(),
        )
        .expect("planted pairs are valid gold")
    }
}

struct Special {
    word: String,
    owner: usize,
    kind: Kind,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Kind {
    Planted,
    Distractor,
    Neutral,
}

fn background_label(rng: &mut ChaCha8Rng, (pos, neg): (f64, f64)) -> RegardLabel {
    let u: f64 = rng.random();
    if u < neg {
        RegardLabel::Negative
    } else if u < neg + pos {
        RegardLabel::Positive
    } else {
        RegardLabel::Neutral
    }
}

pub fn generate(cfg: &SynthConfig, seed: u64) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fillers: Vec<String> = (0..cfg.filler_words).map(|i| format!("fw{i:03}")).collect();
    let mut specials = Vec::new();
    let mut counter = [0usize; 3];
    for (owner, _) in cfg.attributes.iter().enumerate() {
        for (kind, n, prefix) in [
            (Kind::Planted, cfg.planted_per_attribute, "pw"),
            (Kind::Distractor, cfg.distractors_per_attribute, "dw"),
            (Kind::Neutral, cfg.neutral_per_attribute, "nw"),
        ] {
            for _ in 0..n {
                let c = &mut counter[kind as usize];
                specials.push(Special {
                    word: format!("{prefix}{c:02}"),
                    owner,
                    kind,
                });
                *c += 1;
            }
        }
    }
    let pairs = |kind: Kind| {
        specials
            .iter()
            .filter(|s| s.kind == kind)
            .map(|s| (s.word.clone(), cfg.attributes[s.owner].clone()))
            .collect::<Vec<_>>()
    };
    let (planted, distractors, neutral) = (
        pairs(Kind::Planted),
        pairs(Kind::Distractor),
        pairs(Kind::Neutral),
    );

    let n_attr = cfg.attributes.len();
    let mut sentences = Vec::with_capacity(n_attr * cfg.sentences_per_attribute);
    for (a, attr) in cfg.attributes.iter().enumerate() {
        for i in 0..cfg.sentences_per_attribute {
            let mut words: Vec<&str> = vec!["the", attr];
            let mut own_planted = false;
            let mut own_neutral = false;
            for s in &specials {
                let rate = match (s.owner == a, s.kind) {
                    (false, _) => cfg.base_rate,
                    (true, Kind::Distractor) => cfg.base_rate * cfg.distractor_boost,
                    (true, _) => cfg.base_rate * cfg.planted_boost,
                };
                let rate = rate.min(1.0);
                if rng.random_bool(rate) {
                    words.push(&s.word);
                    match (s.owner == a, s.kind) {
                        (true, Kind::Planted) => own_planted = true,
                        (true, Kind::Neutral) => own_neutral = true,
                        _ => {}
                    }
                }
            }
            if own_neutral && own_planted {
                // keep neutral pairs purely neutral
                words.retain(|w| {
                    !specials
                        .iter()
                        .any(|s| s.owner == a && s.kind == Kind::Planted && s.word == *w)
                });
                own_planted = false;
            }
            for _ in 0..cfg.fillers_per_sentence {
                words.push(fillers.choose(&mut rng).expect("fillers nonempty"));
            }
            let label = if own_neutral {
                RegardLabel::Neutral
            } else if own_planted {
                if rng.random_bool(cfg.planted_negative_rate) {
                    RegardLabel::Negative
                } else {
                    background_label(&mut rng, (cfg.background.0, 0.0))
                }
            } else {
                background_label(&mut rng, cfg.background)
            };
            let mut labels = BTreeMap::from([(attr.clone(), label)]);
            if n_attr > 1 && rng.random_bool(cfg.second_attribute_rate) {
                let other = (a + rng.random_range(1..n_attr)) % n_attr;
                words.push(&cfg.attributes[other]);
                labels.insert(
                    cfg.attributes[other].clone(),
                    background_label(&mut rng, cfg.background),
                );
            }
            words.push(".");
            let mut text = words.join(" ");
            text[..1].make_ascii_uppercase();
            sentences.push(AnnotatedSentence {
                sentence_id: format!("{attr}#{i}"),
                text,
                labels,
            });
        }
    }
    SynthCorpus {
        sentences,
        planted,
        distractors,
        neutral,
    }
}
