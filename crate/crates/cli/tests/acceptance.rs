//! Acceptance suite: one PASS/FAIL line per criterion. Exits nonzero when a gating
//! check fails; the throughput line is advisory.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::io::Write;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use bias_audit::artifact;
use bias_audit::backend::{Builtin, DispatchOptions};
use bias_audit::detect::{format_wsd_input, render_wsd_prompt};
use bias_audit::evaluate::{
    cohens_kappa, f1_scores, recall_at_k, ConfusionCounts, GoldEntry, MatchMode, Polarity,
    StereotypeGold,
};
use bias_audit::ingest::{
    passes_length_filter, split_sentences, tokenize, CorpusFormat, CorpusReader, Document, Sentence,
};
use bias_audit::mitigate::{apply_plan, minimal_drop, plan_downsample, retention_report};
use bias_audit::pipeline::{analyze, annotate_mentions, detect_documents, AnalyzeOptions};
use bias_audit::regard::{render_regard_prompt, AnnotatedSentence, RegardLabel};
use bias_audit::stats::{
    build_table, build_vocab, BiasRanking, BiasScorer, CooccurrenceTable, ScoreKind, Vocabulary,
};
use bias_audit::synth::{generate, SynthConfig};
use bias_audit::taxonomy::{AttributeClass, AttributeKeyword, Taxonomy};
use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Q = Ratio<i128>;
type Outcome = Result<String, String>;

fn q(x: Q) -> f64 {
    *x.numer() as f64 / *x.denom() as f64
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(rel)
}

// ---------------------------------------------------------------------------
// Oracle equivalence

struct RandomCorpus {
    class: AttributeClass,
    words: Vec<String>,
    /// Per sentence: which words occur.
    has: Vec<Vec<bool>>,
    /// Per sentence and attribute index: regard label index.
    labels: Vec<Vec<Option<usize>>>,
    sentences: Vec<AnnotatedSentence>,
}

fn class_of(names: &[String]) -> AttributeClass {
    AttributeClass {
        name: "oracle".into(),
        keywords: names
            .iter()
            .map(|k| AttributeKeyword {
                keyword: k.clone(),
                gloss: format!("who is {k}"),
                class_name: "oracle".into(),
                gloss_is_complete: false,
            })
            .collect(),
    }
}

fn random_corpus(rng: &mut ChaCha8Rng) -> RandomCorpus {
    let n_attr = rng.random_range(1..=5);
    let names: Vec<String> = (0..n_attr).map(|i| format!("attr{i}")).collect();
    let v = rng.random_range(10..=200);
    let words: Vec<String> = (0..v).map(|i| format!("w{i}")).collect();
    let n = rng.random_range(200..=1000);
    let mut has = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut sentences = Vec::with_capacity(n);
    for i in 0..n {
        let len = rng.random_range(1..=30);
        let mut h = vec![false; v];
        let mut toks = Vec::with_capacity(len);
        for _ in 0..len {
            let u: f64 = rng.random();
            let wi = ((u * u) * v as f64) as usize;
            h[wi.min(v - 1)] = true;
            toks.push(words[wi.min(v - 1)].as_str());
        }
        let mut lab = vec![None; n_attr];
        let mut map = BTreeMap::new();
        for _ in 0..rng.random_range(0..=2) {
            let a = rng.random_range(0..n_attr);
            let r = rng.random_range(0..3);
            lab[a] = Some(r);
            map.insert(names[a].clone(), RegardLabel::ALL[r]);
        }
        has.push(h);
        labels.push(lab);
        sentences.push(AnnotatedSentence {
            sentence_id: format!("s{i}"),
            text: toks.join(" "),
            labels: map,
        });
    }
    RandomCorpus {
        class: class_of(&names),
        words,
        has,
        labels,
        sentences,
    }
}

/// Nested-loop counts in rational arithmetic.
struct Brute<'c> {
    c: &'c RandomCorpus,
}

impl Brute<'_> {
    fn n_attr(&self, a: usize) -> i128 {
        self.c.labels.iter().filter(|l| l[a].is_some()).count() as i128
    }
    fn n_word(&self, w: usize, a: usize) -> i128 {
        (0..self.c.has.len())
            .filter(|&s| self.c.has[s][w] && self.c.labels[s][a].is_some())
            .count() as i128
    }
    fn n_word_regard(&self, w: usize, a: usize, r: usize) -> i128 {
        (0..self.c.has.len())
            .filter(|&s| self.c.has[s][w] && self.c.labels[s][a] == Some(r))
            .count() as i128
    }
    fn attributes(&self) -> Vec<usize> {
        (0..self.c.class.keywords.len())
            .filter(|&a| self.n_attr(a) > 0)
            .collect()
    }
    fn vocab(&self, k: usize) -> BTreeSet<String> {
        let mut acc: Option<BTreeSet<String>> = None;
        for a in self.attributes() {
            let mut v: Vec<(i128, &String)> = (0..self.c.words.len())
                .map(|w| (self.n_word(w, a), &self.c.words[w]))
                .filter(|(n, _)| *n > 0)
                .collect();
            v.sort_by(|x, y| y.0.cmp(&x.0).then(x.1.cmp(y.1)));
            let top: BTreeSet<String> = v.into_iter().take(k).map(|(_, w)| w.clone()).collect();
            acc = Some(match acc {
                None => top,
                Some(prev) => prev.intersection(&top).cloned().collect(),
            });
        }
        acc.unwrap_or_default()
    }
}

fn oracle_check(seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = random_corpus(&mut rng);
    let k = rng.random_range(5..=250);
    let brute = Brute { c: &c };
    let table = build_table(&c.sentences, &c.class);
    let vocab = build_vocab(&table, k);
    let attrs = brute.attributes();
    let names: Vec<String> = attrs
        .iter()
        .map(|&a| c.class.keywords[a].keyword.clone())
        .collect();
    ensure(table.attributes() == names.as_slice(), || {
        format!("seed {seed}: attribute set differs")
    })?;
    ensure(*vocab.words() == brute.vocab(k), || {
        format!("seed {seed}: vocabulary differs")
    })?;
    let scorer = BiasScorer::new(&table, &vocab);
    let index: BTreeMap<&str, usize> = c
        .words
        .iter()
        .enumerate()
        .map(|(i, w)| (w.as_str(), i))
        .collect();
    let mut compared = 0;
    for wname in vocab.words() {
        let w = index[wname.as_str()];
        let p: Vec<Q> = attrs
            .iter()
            .map(|&a| Q::new(brute.n_word(w, a), brute.n_attr(a)))
            .collect();
        let mean = p.iter().copied().sum::<Q>() / Q::from_integer(attrs.len() as i128);
        for (i, &a) in attrs.iter().enumerate() {
            let name = &names[i];
            let freq = p[i] / mean;
            let got = scorer
                .frequency_bias(wname, name)
                .map_err(|e| e.to_string())?;
            ensure((got - q(freq)).abs() <= 1e-12, || {
                format!("seed {seed}: freq({wname},{name}) {got} vs {}", q(freq))
            })?;
            let n = brute.n_word(w, a);
            for r in 0..3 {
                let label = RegardLabel::ALL[r];
                let term = Q::new(3 * brute.n_word_regard(w, a, r), n);
                let t = scorer
                    .regard_bias_term(wname, name, label)
                    .map_err(|e| e.to_string())?;
                ensure((t - q(term)).abs() <= 1e-12, || {
                    format!("seed {seed}: regard term differs")
                })?;
                let combined = freq.min(term);
                let b = scorer
                    .frequency_regard_bias(wname, name, label)
                    .map_err(|e| e.to_string())?;
                ensure((b - q(combined)).abs() <= 1e-12, || {
                    format!(
                        "seed {seed}: combined({wname},{name},{label:?}) {b} vs {}",
                        q(combined)
                    )
                })?;
                compared += 2;
            }
            compared += 1;
        }
    }
    Ok(compared)
}

fn check_oracle() -> Outcome {
    let start = Instant::now();
    let mut compared = 0;
    for seed in 0..100 {
        compared += oracle_check(seed)?;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 60.0, || format!("took {secs:.1} s"))?;
    Ok(format!(
        "100 corpora, {compared} scores within 1e-12, {secs:.1} s"
    ))
}

// ---------------------------------------------------------------------------
// Algebraic identities

fn identities_on(table: &CooccurrenceTable, vocab: &Vocabulary) -> Result<usize, String> {
    let scorer = BiasScorer::new(table, vocab);
    let attrs = table.attributes();
    let mut checked = 0;
    for w in vocab.words() {
        let mut sum = 0.0;
        for a in attrs {
            let f = scorer.frequency_bias(w, a).map_err(|e| e.to_string())?;
            sum += f;
            if table.n_word(w, a) == 0 {
                continue;
            }
            let mut terms = 0.0;
            for r in RegardLabel::ALL {
                let t = scorer
                    .regard_bias_term(w, a, r)
                    .map_err(|e| e.to_string())?;
                let b = scorer
                    .frequency_regard_bias(w, a, r)
                    .map_err(|e| e.to_string())?;
                ensure(b <= f && b <= t, || {
                    format!("combined({w},{a},{r:?}) = {b} exceeds a component")
                })?;
                terms += t;
            }
            ensure((terms - 3.0).abs() <= 1e-9, || {
                format!("regard terms of ({w},{a}) sum to {terms}")
            })?;
            checked += 1;
        }
        let mean = sum / attrs.len() as f64;
        ensure((mean - 1.0).abs() <= 1e-9, || {
            format!("mean frequency bias of {w} is {mean}")
        })?;
    }
    Ok(checked)
}

fn sample_annotated() -> Result<Vec<AnnotatedSentence>, String> {
    let tax = Taxonomy::bundled();
    let b = Builtin::default();
    let docs: Vec<Document> =
        CorpusReader::open(fixture("corpus/sample.jsonl"), CorpusFormat::Jsonl)
            .map_err(|e| e.to_string())?
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
    let o = DispatchOptions::default();
    let m = detect_documents(&docs, &tax, &b, o).map_err(|e| e.to_string())?;
    annotate_mentions(&m, &tax, &b, 100_000, 0, o).map_err(|e| e.to_string())
}

fn check_identities() -> Outcome {
    let tax = Taxonomy::bundled();
    let mut corpora: Vec<(AttributeClass, Vec<AnnotatedSentence>)> = Vec::new();
    let sample = sample_annotated()?;
    for class in tax.classes() {
        corpora.push((class.clone(), sample.clone()));
    }
    let race = tax.class("race/ethnicity").unwrap().clone();
    for seed in 0..3 {
        let cfg = SynthConfig {
            second_attribute_rate: 0.2 * seed as f64,
            ..SynthConfig::default()
        };
        corpora.push((race.clone(), generate(&cfg, seed).sentences));
    }
    for seed in 1000..1020 {
        let c = random_corpus(&mut ChaCha8Rng::seed_from_u64(seed));
        corpora.push((c.class, c.sentences));
    }
    let mut pairs = 0;
    let mut tables = 0;
    for (class, corpus) in &corpora {
        let table = build_table(corpus, class);
        if table.attributes().is_empty() {
            continue;
        }
        for k in [usize::MAX, 50] {
            pairs += identities_on(&table, &build_vocab(&table, k))?;
        }
        tables += 1;
    }
    Ok(format!("{tables} tables, {pairs} (w,a) pairs"))
}

// ---------------------------------------------------------------------------
// Planted recovery

fn check_planted() -> Outcome {
    let tax = Taxonomy::bundled();
    let class = tax.class("race/ethnicity").unwrap();
    let (mut sum2, mut sum1, mut better) = (0.0, 0.0, 0);
    for seed in 0..20 {
        let c = generate(&SynthConfig::default(), seed);
        let gold = c.gold();
        let a =
            analyze(&c.sentences, class, &AnalyzeOptions::default()).map_err(|e| e.to_string())?;
        let recall = |kind| {
            recall_at_k(
                &a.rankings_of(kind),
                &gold,
                Polarity::Negative,
                10,
                MatchMode::Exact,
            )
            .map(|r| r.percent / 100.0)
            .map_err(|e| e.to_string())
        };
        let r2 = recall(ScoreKind::FrequencyRegard(RegardLabel::Negative))?;
        let r1 = recall(ScoreKind::Frequency)?;
        sum2 += r2;
        sum1 += r1;
        if r2 > r1 {
            better += 1;
        }
    }
    let (m2, m1) = (sum2 / 20.0, sum1 / 20.0);
    let detail = format!(
        "mean recall@10 regard-aware {m2:.3}, frequency-only {m1:.3}; better in {better}/20 seeds"
    );
    ensure(m2 >= 0.9 && better >= 18, || detail.clone())?;
    Ok(detail)
}

// ---------------------------------------------------------------------------
// Mitigation through the command-line tool

fn write_annotated(path: &Path, sentences: &[AnnotatedSentence]) -> Result<(), String> {
    let mut f = fs::File::create(path).map_err(|e| e.to_string())?;
    for s in sentences {
        writeln!(f, "{}", serde_json::to_string(s).unwrap()).map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn run_mitigate(input: &Path, out: &Path, seed: u64) -> Result<(), String> {
    let o = Command::new(env!("CARGO_BIN_EXE_bias-audit"))
        .args(["--seed", &seed.to_string(), "--target", "0.01", "-o"])
        .arg(out)
        .args(["mitigate", "--watch-top", "2", "--annotated"])
        .arg(input)
        .env_remove("BIAS_AUDIT_BACKEND")
        .output()
        .map_err(|e| e.to_string())?;
    ensure(o.status.success(), || {
        String::from_utf8_lossy(&o.stderr).into_owned()
    })
}

fn check_mitigation() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let mut drops = 0;
    for seed in 0..5u64 {
        let cfg = SynthConfig {
            second_attribute_rate: if seed % 2 == 1 { 0.3 } else { 0.0 },
            ..SynthConfig::default()
        };
        let corpus = generate(&cfg, seed).sentences;
        let input = d.join(format!("in{seed}.jsonl"));
        write_annotated(&input, &corpus)?;
        let (a, b) = (d.join(format!("a{seed}")), d.join(format!("b{seed}")));
        run_mitigate(&input, &a, seed)?;
        run_mitigate(&input, &b, seed)?;
        let plan_a = fs::read(a.join("plan.json")).map_err(|e| e.to_string())?;
        let plan_b = fs::read(b.join("plan.json")).map_err(|e| e.to_string())?;
        ensure(plan_a == plan_b, || {
            format!("seed {seed}: plan differs between runs")
        })?;

        let (_, after): (_, Vec<AnnotatedSentence>) =
            artifact::read_jsonl(&a.join("annotated.mitigated.jsonl"))
                .map_err(|e| e.to_string())?;
        let mut counts: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
        for s in &after {
            for (k, r) in &s.labels {
                let c = counts.entry(k).or_default();
                c.1 += 1;
                if *r == RegardLabel::Negative {
                    c.0 += 1;
                }
            }
        }
        for (k, (neg, total)) in &counts {
            ensure(100 * neg <= *total, || {
                format!("seed {seed}: {k} keeps {neg}/{total} negative")
            })?;
        }
        let kept: HashSet<&str> = after.iter().map(|s| s.sentence_id.as_str()).collect();
        for s in &corpus {
            if !s.labels.values().any(|r| *r == RegardLabel::Negative) {
                ensure(kept.contains(s.sentence_id.as_str()), || {
                    format!("seed {seed}: {} was dropped", s.sentence_id)
                })?;
            }
        }
        drops += corpus.len() - after.len();
    }

    let out = d.join("fixture");
    run_mitigate(&fixture("mitigation/hundred_twenty.jsonl"), &out, 0)?;
    let plan: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("plan.json")).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    let n = plan["dropped"].as_array().map_or(0, Vec::len);
    ensure(n == 20 && minimal_drop(20, 100, 0.01) == 20, || {
        format!("100/20 fixture dropped {n}")
    })?;
    Ok(format!("5 planted corpora ({drops} drops) at or below 1%, non-negative sentences kept, plans reproduce; fixture drops {n}"))
}

// ---------------------------------------------------------------------------
// Retention

fn raw_retention(
    before: &[AnnotatedSentence],
    after: &[AnnotatedSentence],
    w: &str,
    a: &str,
) -> Option<f64> {
    let p = |c: &[AnnotatedSentence]| {
        let with_a: Vec<_> = c.iter().filter(|s| s.labels.contains_key(a)).collect();
        let n_w = with_a
            .iter()
            .filter(|s| tokenize(&s.text).iter().any(|t| t == w))
            .count();
        (n_w as f64, with_a.len() as f64)
    };
    let ((nw0, na0), (nw1, na1)) = (p(before), p(after));
    (nw0 > 0.0 && na1 > 0.0).then(|| 100.0 * (nw1 / na1) / (nw0 / na0))
}

fn check_retention() -> Outcome {
    let tax = Taxonomy::bundled();
    let class = tax.class("race/ethnicity").unwrap();
    let cfg = SynthConfig {
        planted_negative_rate: 1.0,
        ..SynthConfig::default()
    };
    let (mut lo, mut hi_min, mut hi_max) = (0.0f64, f64::INFINITY, 0.0f64);
    for seed in 0..5 {
        let c = generate(&cfg, seed);
        let plan = plan_downsample(&c.sentences, 0.01, seed).map_err(|e| e.to_string())?;
        let after = apply_plan(&c.sentences, &plan).map_err(|e| e.to_string())?;
        let t0 = build_table(&c.sentences, class);
        let t1 = build_table(&after, class);
        for (pairs, planted) in [(&c.planted, true), (&c.neutral, false)] {
            for r in retention_report(&t0, &t1, pairs).retention {
                let got = r
                    .retention_percent
                    .ok_or_else(|| format!("undefined retention for {}", r.word))?;
                let raw =
                    raw_retention(&c.sentences, &after, &r.word, &r.attribute).unwrap_or(f64::NAN);
                ensure((got - raw).abs() <= 1e-9, || {
                    format!("{}/{}: {got} vs recount {raw}", r.word, r.attribute)
                })?;
                if planted {
                    ensure(got < 50.0, || {
                        format!("planted {}/{} retains {got:.1}%", r.word, r.attribute)
                    })?;
                    lo = lo.max(got);
                } else {
                    ensure((95.0..=115.0).contains(&got), || {
                        format!("neutral {}/{} at {got:.1}%", r.word, r.attribute)
                    })?;
                    hi_min = hi_min.min(got);
                    hi_max = hi_max.max(got);
                }
            }
        }
    }
    Ok(format!(
        "planted pairs at most {lo:.1}%, neutral pairs in [{hi_min:.1}%, {hi_max:.1}%]"
    ))
}

// ---------------------------------------------------------------------------
// Metric oracles

fn brute_kappa(m: &[Vec<u64>]) -> Option<Q> {
    let n: i128 = m.iter().flatten().map(|&x| x as i128).sum();
    if n == 0 {
        return None;
    }
    let k = m.len();
    let agree: i128 = (0..k).map(|i| m[i][i] as i128).sum();
    let mut chance = Q::from_integer(0);
    for i in 0..k {
        let row: i128 = m[i].iter().map(|&x| x as i128).sum();
        let col: i128 = m.iter().map(|r| r[i] as i128).sum();
        chance += Q::new(row, n) * Q::new(col, n);
    }
    let po = Q::new(agree, n);
    if chance == Q::from_integer(1) {
        return Some(Q::from_integer(1));
    }
    Some((po - chance) / (Q::from_integer(1) - chance))
}

/// Per-class F1, then micro and macro (macro over classes seen in gold or predictions).
fn brute_f1(m: &[Vec<u64>]) -> (Vec<f64>, f64, f64) {
    let k = m.len();
    let mut per = Vec::new();
    let mut present = Vec::new();
    let (mut tp_all, mut n) = (0u64, 0u64);
    for i in 0..k {
        let tp = m[i][i];
        let (mut fn_, mut fp) = (0u64, 0u64);
        for j in 0..k {
            n += m[i][j];
            if j != i {
                fn_ += m[i][j];
                fp += m[j][i];
            }
        }
        tp_all += tp;
        let f = if 2 * tp + fp + fn_ == 0 {
            0.0
        } else {
            2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
        };
        per.push(f);
        if tp + fp + fn_ > 0 {
            present.push(f);
        }
    }
    let macro_f1 = present.iter().sum::<f64>() / present.len() as f64;
    (per, tp_all as f64 / n as f64, macro_f1)
}

fn check_metrics() -> Outcome {
    let c =
        ConfusionCounts::from_matrix(vec![vec![20, 5], vec![10, 15]]).map_err(|e| e.to_string())?;
    let k = cohens_kappa(&c).map_err(|e| e.to_string())?;
    ensure(k == 0.4, || format!("kappa of [[20,5],[10,15]] is {k:?}"))?;
    ensure(brute_kappa(&c.matrix) == Some(Q::new(2, 5)), || {
        "rational kappa is not 2/5".into()
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for size in 2..=6 {
        let m: Vec<Vec<u64>> = (0..size)
            .map(|i| {
                (0..size)
                    .map(|j| if i == j { rng.random_range(1..50) } else { 0 })
                    .collect()
            })
            .collect();
        let c = ConfusionCounts::from_matrix(m).map_err(|e| e.to_string())?;
        let f = f1_scores(&c).map_err(|e| e.to_string())?;
        let k = cohens_kappa(&c).map_err(|e| e.to_string())?;
        ensure(k == 1.0 && f.micro == 1.0 && f.macro_f1 == 1.0, || {
            format!("diagonal {size}x{size}: {k} {} {}", f.micro, f.macro_f1)
        })?;
    }

    for i in 0..1000 {
        let size = rng.random_range(2..=5);
        let m: Vec<Vec<u64>> = (0..size)
            .map(|_| {
                (0..size)
                    .map(|_| {
                        if rng.random_bool(0.2) {
                            0
                        } else {
                            rng.random_range(0..40)
                        }
                    })
                    .collect()
            })
            .collect();
        let Some(bk) = brute_kappa(&m) else { continue };
        let c = ConfusionCounts::from_matrix(m.clone()).map_err(|e| e.to_string())?;
        let k = cohens_kappa(&c).map_err(|e| e.to_string())?;
        ensure((k - q(bk)).abs() <= 1e-12, || {
            format!("matrix {i}: kappa {k} vs {}", q(bk))
        })?;
        let f = f1_scores(&c).map_err(|e| e.to_string())?;
        let (per, micro, macro_f1) = brute_f1(&m);
        ensure(
            (f.micro - micro).abs() <= 1e-12 && (f.macro_f1 - macro_f1).abs() <= 1e-12,
            || format!("matrix {i}: micro/macro differ"),
        )?;
        for (x, y) in f.per_class.iter().zip(&per) {
            ensure((x.f1 - y).abs() <= 1e-12, || {
                format!("matrix {i}: per-class F1 differs")
            })?;
        }
    }

    for round in 0..200 {
        let words: Vec<String> = (0..30).map(|i| format!("x{i}")).collect();
        let mut rankings = BTreeMap::new();
        let mut gold = Vec::new();
        for a in ["p", "q", "r"] {
            let mut ws = words.clone();
            ws.shuffle(&mut rng);
            let n = rng.random_range(0..=30);
            let entries = ws[..n]
                .iter()
                .enumerate()
                .map(|(i, w)| (w.clone(), (n - i) as f64))
                .collect();
            rankings.insert(
                a.to_string(),
                BiasRanking {
                    attribute: a.into(),
                    score_kind: ScoreKind::Frequency,
                    entries,
                },
            );
            for _ in 0..rng.random_range(1..6) {
                gold.push(GoldEntry {
                    attribute: a.into(),
                    word: words[rng.random_range(0..30)].clone(),
                    mean_offensiveness: 1.5,
                });
            }
        }
        let gold = StereotypeGold::new(gold).map_err(|e| e.to_string())?;
        let mut prev = -1.0;
        for k in 1..=32 {
            let r = recall_at_k(&rankings, &gold, Polarity::Negative, k, MatchMode::Exact)
                .map_err(|e| e.to_string())?;
            ensure(r.percent >= prev, || {
                format!("round {round}: recall fell at k={k}")
            })?;
            prev = r.percent;
        }
    }
    Ok(
        "kappa 0.4 exact, diagonal 1.0, 1000 random matrices within 1e-12, recall@k monotone"
            .into(),
    )
}

// ---------------------------------------------------------------------------
// Format conformance

fn check_formats() -> Outcome {
    let tax = Taxonomy::bundled();
    let asian = tax.lookup("asian").ok_or("asian missing from taxonomy")?;
    ensure(
        asian.full_gloss() == "a person of asian race/ethnicity",
        || format!("gloss is {:?}", asian.full_gloss()),
    )?;
    let rows = [
        (
            "I observed a group of Asian visitors ...",
            "[BOS] I observed a group of Asian visitors ... [SEP] asian; a person of asian race/ethnicity [EOS]",
        ),
        (
            "... and more traditional Asian cuisine.",
            "[BOS] ... and more traditional Asian cuisine. [SEP] asian; a person of asian race/ethnicity [EOS]",
        ),
    ];
    for (text, expected) in rows {
        let got = format_wsd_input(asian, text);
        ensure(got == expected, || format!("{got:?}"))?;
    }
    let mut rendered = 0;
    for kw in tax.keywords() {
        let text = format!("Some people said the {} neighbours were kind.", kw.keyword);
        for p in [
            render_wsd_prompt(kw, &text),
            render_regard_prompt(kw, &text),
        ] {
            for slot in ["{Keyword}", "{Gloss}", "{Text}"] {
                ensure(!p.contains(slot), || {
                    format!("{slot} left in prompt for {}", kw.keyword)
                })?;
            }
            ensure(p.contains(&format!("\"{}\"", kw.keyword)), || {
                format!("keyword missing for {}", kw.keyword)
            })?;
            ensure(p.contains(kw.gloss_continuation()), || {
                format!("gloss missing for {}", kw.keyword)
            })?;
            ensure(p.contains(&format!("Text: {text}\n")), || {
                format!("text line missing for {}", kw.keyword)
            })?;
            rendered += 1;
        }
    }
    Ok(format!(
        "2 input rows byte-exact, {rendered} prompts fully substituted"
    ))
}

// ---------------------------------------------------------------------------
// Length filter

fn sentence_of(n: usize) -> String {
    // n - 1 words and a final period.
    let mut s = String::from("Word");
    for i in 1..n - 1 {
        s.push_str(&format!(" w{i}"));
    }
    s.push('.');
    s
}

fn check_length_filter() -> Outcome {
    for n in 2..=140 {
        let s = Sentence::new("x", sentence_of(n));
        ensure(s.len() == n, || {
            format!("generated sentence has {} tokens, wanted {n}", s.len())
        })?;
        ensure(passes_length_filter(n) == (17..=127).contains(&n), || {
            format!("filter wrong at {n}")
        })?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for round in 0..50 {
        let mut counts = vec![15, 16, 17, 18, 126, 127, 128, 129];
        counts.shuffle(&mut rng);
        let text = counts
            .iter()
            .map(|&n| sentence_of(n))
            .collect::<Vec<_>>()
            .join(" ");
        let doc = Document {
            doc_id: format!("d{round}"),
            text,
        };
        let kept: Vec<usize> = split_sentences(&doc).iter().map(|s| s.len()).collect();
        let expected: Vec<usize> = counts
            .iter()
            .copied()
            .filter(|n| (17..=127).contains(n))
            .collect();
        ensure(kept == expected, || {
            format!("round {round}: kept {kept:?} from {counts:?}")
        })?;
    }
    Ok(
        "16 and 128 rejected, 17 and 127 accepted over 139 lengths and 50 shuffled documents"
            .into(),
    )
}

// ---------------------------------------------------------------------------
// Throughput (advisory)

fn check_throughput() -> Outcome {
    let tax = Taxonomy::bundled();
    let keywords: Vec<&str> = tax.keywords().map(|k| k.keyword.as_str()).collect();
    let filler = [
        "the", "people", "walked", "to", "a", "market", "near", "river", "and", "talked", "about",
        "weather", "with", "their", "friends", "before", "lunch", "in", "old", "town", "square",
        "while", "children", "played",
    ];
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (total, per_doc, chunk_docs) = (1_000_000usize, 10usize, 10_000usize);
    let b = Builtin::default();
    let mut mentions = 0;
    let mut elapsed = 0.0;
    let mut doc_id = 0;
    for _ in 0..total / (per_doc * chunk_docs) {
        let docs: Vec<Document> = (0..chunk_docs)
            .map(|_| {
                let text = (0..per_doc)
                    .map(|_| {
                        let mut ws: Vec<&str> = (0..19)
                            .map(|_| filler[rng.random_range(0..filler.len())])
                            .collect();
                        if rng.random_bool(0.3) {
                            ws[rng.random_range(1..19)] =
                                keywords[rng.random_range(0..keywords.len())];
                        }
                        format!("The {}.", ws.join(" "))
                    })
                    .collect::<Vec<_>>()
                    .join(" ");
                doc_id += 1;
                Document {
                    doc_id: format!("t{doc_id}"),
                    text,
                }
            })
            .collect();
        let start = Instant::now();
        let recs = pool
            .install(|| detect_documents(&docs, &tax, &b, DispatchOptions::default()))
            .map_err(|e| e.to_string())?;
        elapsed += start.elapsed().as_secs_f64();
        mentions += recs.len();
    }
    let detail = format!("{total} sentences, {mentions} mentions in {elapsed:.1} s on 4 threads");
    ensure(elapsed < 60.0, || detail.clone())?;
    Ok(detail)
}

// ---------------------------------------------------------------------------

fn main() {
    let checks: [(&str, bool, fn() -> Outcome); 9] = [
        ("oracle equivalence", true, check_oracle),
        ("algebraic identities", true, check_identities),
        ("planted stereotype recovery", true, check_planted),
        ("mitigation cap", true, check_mitigation),
        ("retention math", true, check_retention),
        ("metric oracles", true, check_metrics),
        ("format conformance", true, check_formats),
        ("length filter boundary", true, check_length_filter),
        ("detection throughput", false, check_throughput),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, gating, check) in checks {
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .unwrap_or_else(|| "panicked".into()))
        });
        let status = match (&outcome, gating) {
            (Ok(_), _) => "PASS",
            (Err(_), true) => {
                failed += 1;
                "FAIL"
            }
            (Err(_), false) => "FAIL (advisory)",
        };
        let detail = outcome.unwrap_or_else(|e| e);
        println!("{status} {name}: {detail}");
    }
    if failed > 0 {
        println!("{failed} gating check(s) failed");
        std::process::exit(1);
    }
}
