//! Negative-regard downsampling and before/after association reports.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regard::{AnnotatedSentence, RegardLabel};
use crate::stats::CooccurrenceTable;

pub const DEFAULT_TARGET: f64 = 0.01;

/// Sentence ids to drop so that every attribute's negative share is at most `target`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MitigationPlan {
    pub target: f64,
    pub seed: u64,
    pub iterations: usize,
    /// In corpus order.
    pub dropped: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Negative and total sentence counts of one attribute.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegativeCount {
    pub negative: u64,
    pub total: u64,
}

impl NegativeCount {
    /// `None` when the attribute has no sentences.
    pub fn ratio(self) -> Option<f64> {
        (self.total > 0).then(|| self.negative as f64 / self.total as f64)
    }

    fn within(self, target: f64) -> bool {
        self.ratio().is_none_or(|r| r <= target)
    }
}

/// Per-attribute negative counts over a corpus.
pub fn negative_counts(annotated: &[AnnotatedSentence]) -> BTreeMap<String, NegativeCount> {
    let mut out: BTreeMap<String, NegativeCount> = BTreeMap::new();
    for s in annotated {
        for (a, &r) in &s.labels {
            let c = out.entry(a.clone()).or_default();
            c.total += 1;
            if r == RegardLabel::Negative {
                c.negative += 1;
            }
        }
    }
    out
}

/// Smallest `d ≤ neg` with `(neg−d)/(total−d) ≤ target`. Reaching `d = neg` always
/// satisfies the cap (the ratio is 0, or the attribute is empty).
pub fn minimal_drop(negative: u64, total: u64, target: f64) -> u64 {
    let ok = |d: u64| {
        NegativeCount {
            negative: negative - d,
            total: total - d,
        }
        .within(target)
    };
    if ok(0) {
        return 0;
    }
    let estimate = if target >= 1.0 {
        0.0
    } else {
        ((negative as f64 - target * total as f64) / (1.0 - target)).floor() - 1.0
    };
    let mut d = (estimate.max(0.0) as u64).min(negative);
    while d > 0 && ok(d - 1) {
        d -= 1;
    }
    while !ok(d) {
        d += 1;
    }
    d
}

/// Iterates to a fixed point: each round picks the attribute with the largest excess over
/// `target` (ties by name), drops the minimal number of its Negative sentences, sampled
/// uniformly without replacement, and recounts every attribute the dropped sentences
/// mention.
pub fn plan_downsample(
    annotated: &[AnnotatedSentence],
    target: f64,
    seed: u64,
) -> Result<MitigationPlan> {
    if !(target > 0.0 && target <= 1.0) {
        return Err(Error::domain(format!("target {target} outside (0, 1]")));
    }
    let mut seen = HashSet::with_capacity(annotated.len());
    for s in annotated {
        if !seen.insert(s.sentence_id.as_str()) {
            return Err(Error::validation(
                "annotated corpus",
                format!("duplicate sentence id {:?}", s.sentence_id),
            ));
        }
    }

    let mut counts = negative_counts(annotated);
    let mut negatives: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, s) in annotated.iter().enumerate() {
        for (a, &r) in &s.labels {
            if r == RegardLabel::Negative {
                negatives.entry(a.as_str()).or_default().push(i);
            }
        }
    }
    let mut alive = vec![true; annotated.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut iterations = 0;
    let mut warnings = Vec::new();

    loop {
        // BTreeMap order makes max_by keep the lexicographically first on ties
        let worst = counts
            .iter()
            .filter_map(|(a, c)| c.ratio().map(|r| (a, r - target)))
            .filter(|&(_, excess)| excess > 0.0)
            .fold(None::<(&String, f64)>, |best, (a, ex)| match best {
                Some((_, b)) if b >= ex => best,
                _ => Some((a, ex)),
            });
        let Some((attr, _)) = worst else { break };
        let attr = attr.clone();
        let c = counts[&attr];
        let d = minimal_drop(c.negative, c.total, target) as usize;

        let pool: Vec<usize> = negatives[attr.as_str()]
            .iter()
            .copied()
            .filter(|&i| alive[i])
            .collect();
        debug_assert_eq!(pool.len() as u64, c.negative);
        let chosen = index::sample(&mut rng, pool.len(), d);
        for j in chosen.iter() {
            let i = pool[j];
            alive[i] = false;
            for (a, &r) in &annotated[i].labels {
                let c = counts.get_mut(a).expect("attribute counted");
                c.total -= 1;
                if r == RegardLabel::Negative {
                    c.negative -= 1;
                }
            }
        }
        iterations += 1;
        if counts[&attr].total == 0 {
            warnings.push(format!(
                "attribute {attr:?} has no sentences left after downsampling"
            ));
        }
    }

    let dropped = annotated
        .iter()
        .zip(&alive)
        .filter(|(_, &keep)| !keep)
        .map(|(s, _)| s.sentence_id.clone())
        .collect();
    Ok(MitigationPlan {
        target,
        seed,
        iterations,
        dropped,
        warnings,
    })
}

/// The corpus without the plan's sentences, order preserved.
pub fn apply_plan(
    annotated: &[AnnotatedSentence],
    plan: &MitigationPlan,
) -> Result<Vec<AnnotatedSentence>> {
    let drop: HashSet<&str> = plan.dropped.iter().map(String::as_str).collect();
    let ids: HashSet<&str> = annotated.iter().map(|s| s.sentence_id.as_str()).collect();
    if let Some(unknown) = plan.dropped.iter().find(|id| !ids.contains(id.as_str())) {
        return Err(Error::validation(
            "mitigation plan",
            format!("sentence id {unknown:?} not in corpus"),
        ));
    }
    Ok(annotated
        .par_iter()
        .filter(|s| !drop.contains(s.sentence_id.as_str()))
        .cloned()
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeRatios {
    pub attribute: String,
    pub neg_before: Option<f64>,
    pub neg_after: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Retention {
    pub word: String,
    pub attribute: String,
    /// `None` when `p(w|a)` or `p′(w|a)` is undefined or `p(w|a) = 0`.
    pub retention_percent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MitigationReport {
    pub ratios: Vec<AttributeRatios>,
    pub retention: Vec<Retention>,
}

/// `100·p′(w|a)/p(w|a)` for each watched pair, plus negative ratios for each attribute
/// of `before`.
pub fn retention_report(
    before: &CooccurrenceTable,
    after: &CooccurrenceTable,
    watchlist: &[(String, String)],
) -> MitigationReport {
    let neg = |t: &CooccurrenceTable, a: &str| {
        let c = t.attr_regard_counts(a);
        NegativeCount {
            negative: c[RegardLabel::Negative.index()],
            total: c.iter().sum(),
        }
        .ratio()
    };
    let ratios = before
        .attributes()
        .iter()
        .map(|a| AttributeRatios {
            attribute: a.clone(),
            neg_before: neg(before, a),
            neg_after: neg(after, a),
        })
        .collect();
    let retention = watchlist
        .iter()
        .map(|(w, a)| {
            let p = before.p_word_given_attr(w, a).filter(|&p| p > 0.0);
            let p2 = after.p_word_given_attr(w, a);
            Retention {
                word: w.clone(),
                attribute: a.clone(),
                retention_percent: p.zip(p2).map(|(p, p2)| 100.0 * p2 / p),
            }
        })
        .collect();
    MitigationReport { ratios, retention }
}

pub const UNDEFINED: &str = "undefined";

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| UNDEFINED.to_owned(), |v| format!("{v:.12}"))
}

/// `attribute,neg_before,neg_after`.
pub fn write_ratios_csv<W: Write>(out: W, ratios: &[AttributeRatios]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::parse("ratios csv", e);
    w.write_record(["attribute", "neg_before", "neg_after"])
        .map_err(err)?;
    for r in ratios {
        w.write_record([
            r.attribute.clone(),
            fmt_opt(r.neg_before),
            fmt_opt(r.neg_after),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io("ratios csv", e))
}

/// `word,attribute,retention_percent`.
pub fn write_retention_csv<W: Write>(out: W, retention: &[Retention]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::parse("retention csv", e);
    w.write_record(["word", "attribute", "retention_percent"])
        .map_err(err)?;
    for r in retention {
        w.write_record([
            r.word.clone(),
            r.attribute.clone(),
            fmt_opt(r.retention_percent),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io("retention csv", e))
}
