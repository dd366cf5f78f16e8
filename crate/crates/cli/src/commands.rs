use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use bias_audit::artifact::{self, RunMeta};
use bias_audit::evaluate::{
    cohens_kappa, f1_scores, recall_at_k, ConfusionCounts, MatchMode, MetricRecord, Polarity,
    SeegullColumns, StereotypeGold,
};
use bias_audit::ingest::{CorpusFormat, CorpusReader, Document};
use bias_audit::mitigate::{
    apply_plan, negative_counts, plan_downsample, retention_report, write_ratios_csv,
    write_retention_csv, AttributeRatios,
};
use bias_audit::pipeline::{self, AnalyzeOptions, MentionRecord};
use bias_audit::regard::{AnnotatedSentence, RegardLabel};
use bias_audit::report::{bias_table_markdown, distribution_markdown, examples_markdown, Example};
use bias_audit::stats::{
    build_table, build_vocab, distribution_from_counts, read_rankings_csv, write_rankings_csv,
    BiasRanking, BiasScorer, RegardDistribution, ScoreKind, TableDump, TableOptions,
};
use bias_audit::taxonomy::{AttributeClass, Taxonomy};
use log::{info, warn};
use serde::Serialize;

use crate::config::{slug, RunConfig};
use crate::error::CliError;
use crate::{
    AnalyzeArgs, AnnotateArgs, DetectArgs, EvaluateArgs, FormatArg, GoldFormat, MatchArg,
    MitigateArgs, ReportArgs,
};

type Result<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Internal(format!("{}: {e}", path.display()))
}

fn read_records<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    artifact::read_jsonl(path)
        .map(|(_, v)| v)
        .map_err(CliError::input)
}

fn find_class<'t>(tax: &'t Taxonomy, name: &str) -> Result<&'t AttributeClass> {
    tax.class(name).ok_or_else(|| {
        let names: Vec<&str> = tax.classes().iter().map(|c| c.name.as_str()).collect();
        CliError::Config(format!(
            "unknown class {name:?}; available: {}",
            names.join(", ")
        ))
    })
}

fn corpus_format(path: &Path, flag: Option<FormatArg>) -> CorpusFormat {
    match flag {
        Some(FormatArg::Jsonl) => CorpusFormat::Jsonl,
        Some(FormatArg::Text) => CorpusFormat::PlainText,
        None if path.extension().is_some_and(|e| e == "jsonl") => CorpusFormat::Jsonl,
        None => CorpusFormat::PlainText,
    }
}

pub fn detect(cfg: &RunConfig, args: &DetectArgs) -> Result<()> {
    let tax = cfg.taxonomy()?;
    if cfg.corpus_paths.is_empty() {
        return Err(CliError::Config(
            "no corpus given (use --corpus or corpus_paths)".into(),
        ));
    }
    let readers = cfg
        .corpus_paths
        .iter()
        .map(|p| CorpusReader::open(p, corpus_format(p, args.format)).map_err(CliError::input))
        .collect::<Result<Vec<_>>>()?;
    let backend = cfg.backend.connect()?;
    let out = cfg.out("mentions.jsonl");
    let partial = cfg.out("mentions.jsonl.partial");
    let mut w = artifact::create(&partial)?;
    writeln!(w, "{}", cfg.meta().header_line()).map_err(io_err(&partial))?;

    let mut doc_ids = HashSet::new();
    let mut tallies: BTreeMap<String, [u64; 2]> = BTreeMap::new();
    let (mut n_docs, mut n_mentions) = (0usize, 0usize);
    for reader in readers {
        let mut reader = reader.peekable();
        while reader.peek().is_some() {
            let chunk: Vec<Document> = reader
                .by_ref()
                .take(args.chunk_docs.max(1))
                .map(|d| d.map_err(CliError::input))
                .collect::<Result<_>>()?;
            for d in &chunk {
                if !doc_ids.insert(d.doc_id.clone()) {
                    return Err(CliError::Parse(format!(
                        "doc_id {:?} appears in more than one corpus file",
                        d.doc_id
                    )));
                }
            }
            n_docs += chunk.len();
            let records = pipeline::detect_documents(&chunk, &tax, backend.as_ref(), cfg.dispatch)?;
            for r in &records {
                let t = tallies.entry(r.keyword.clone()).or_default();
                t[usize::from(r.label != bias_audit::detect::WsdLabel::Protected)] += 1;
                let line =
                    serde_json::to_string(r).map_err(|e| CliError::Internal(e.to_string()))?;
                writeln!(w, "{line}").map_err(io_err(&partial))?;
            }
            n_mentions += records.len();
            info!("{n_docs} documents, {n_mentions} mentions");
        }
    }
    w.flush().map_err(io_err(&partial))?;
    drop(w);
    fs::rename(&partial, &out).map_err(io_err(&out))?;

    println!("attribute\tprotected\tnon_protected");
    for (k, [p, n]) in &tallies {
        println!("{k}\t{p}\t{n}");
    }
    println!(
        "{n_mentions} mentions in {n_docs} documents -> {}",
        out.display()
    );
    Ok(())
}

pub fn annotate(cfg: &RunConfig, args: &AnnotateArgs) -> Result<()> {
    let tax = cfg.taxonomy()?;
    let path = args
        .mentions
        .clone()
        .unwrap_or_else(|| cfg.out("mentions.jsonl"));
    let records: Vec<MentionRecord> = read_records(&path)?;
    let backend = cfg.backend.connect()?;
    let annotated = pipeline::annotate_mentions(
        &records,
        &tax,
        backend.as_ref(),
        cfg.per_attribute_cap,
        cfg.seed,
        cfg.dispatch,
    )?;
    let out = cfg.out("annotated.jsonl");
    artifact::write_jsonl(&out, &cfg.meta(), &annotated)?;

    let mut tallies: BTreeMap<&str, [u64; 3]> = BTreeMap::new();
    for s in &annotated {
        for (k, r) in &s.labels {
            tallies.entry(k).or_default()[r.index()] += 1;
        }
    }
    println!("attribute\tpositive\tnegative\tneutral");
    for (k, c) in &tallies {
        let at = |r: RegardLabel| c[r.index()];
        println!(
            "{k}\t{}\t{}\t{}",
            at(RegardLabel::Positive),
            at(RegardLabel::Negative),
            at(RegardLabel::Neutral)
        );
    }
    println!(
        "{} annotated sentences -> {}",
        annotated.len(),
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct TableFile<'a> {
    class: &'a str,
    vocab_k: usize,
    vocabulary: Vec<&'a str>,
    table: TableDump,
}

fn write_distribution_csv(
    path: &Path,
    meta: &RunMeta,
    rows: &[(String, RegardDistribution)],
) -> Result<()> {
    let w = artifact::create_csv(path, meta)?;
    let mut w = csv::Writer::from_writer(w);
    let err = |e: csv::Error| CliError::Internal(format!("{}: {e}", path.display()));
    w.write_record(["attribute", "sentences", "positive", "negative", "neutral"])
        .map_err(err)?;
    for (a, d) in rows {
        w.write_record([
            a.clone(),
            d.sentences.to_string(),
            format!("{:.12}", d.positive),
            format!("{:.12}", d.negative),
            format!("{:.12}", d.neutral),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(io_err(path))
}

fn write_markdown(path: &Path, meta: &RunMeta, body: &str) -> Result<()> {
    let mut w = artifact::create(path)?;
    let meta_json = serde_json::to_string(meta).map_err(|e| CliError::Internal(e.to_string()))?;
    write!(w, "<!-- {meta_json} -->\n\n{body}").map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

fn read_stoplist(path: &Path) -> Result<HashSet<String>> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(text
        .lines()
        .map(|l| l.trim().to_lowercase())
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect())
}

pub fn analyze(cfg: &RunConfig, args: &AnalyzeArgs) -> Result<()> {
    let tax = cfg.taxonomy()?;
    let class = find_class(&tax, &args.class)?;
    for a in &args.attributes {
        if !class.contains(a) {
            return Err(CliError::Config(format!(
                "{a:?} is not an attribute of {:?}",
                class.name
            )));
        }
    }
    let path = args
        .annotated
        .clone()
        .unwrap_or_else(|| cfg.out("annotated.jsonl"));
    let annotated: Vec<AnnotatedSentence> = read_records(&path)?;
    let stoplist = match &args.stoplist {
        Some(p) => read_stoplist(p)?,
        None => HashSet::new(),
    };
    let opts = AnalyzeOptions {
        vocab_k: cfg.vocab_k,
        table: TableOptions {
            stoplist,
            attributes: (!args.attributes.is_empty()).then(|| args.attributes.clone()),
        },
        exponents: (args.frequency_exponent, args.regard_exponent),
        top_n: (args.top > 0).then_some(args.top),
    };
    let analysis = pipeline::analyze(&annotated, class, &opts)?;
    if analysis.table.attributes().is_empty() {
        warn!("no annotated sentences for class {:?}", class.name);
    }

    let meta = cfg.meta();
    let s = slug(&class.name);
    let rankings_path = cfg.out(&format!("rankings_{s}.csv"));
    let w = artifact::create_csv(&rankings_path, &meta)?;
    write_rankings_csv(w, &analysis.rankings)?;
    let table_file = TableFile {
        class: &class.name,
        vocab_k: cfg.vocab_k,
        vocabulary: analysis.vocab.words().iter().map(String::as_str).collect(),
        table: analysis.table.to_dump(),
    };
    artifact::write_json(&cfg.out(&format!("table_{s}.json")), &meta, &table_file)?;
    write_distribution_csv(
        &cfg.out(&format!("regard_distribution_{s}.csv")),
        &meta,
        &analysis.distributions,
    )?;
    if args.report {
        let body = format!(
            "{}\n{}",
            bias_table_markdown(
                &class.name,
                analysis.table.attributes(),
                &analysis.rankings,
                args.per_cell
            ),
            distribution_markdown(&analysis.distributions)
        );
        write_markdown(&cfg.out(&format!("report_{s}.md")), &meta, &body)?;
    }
    println!(
        "{}: {} attributes, vocabulary of {} words -> {}",
        class.name,
        analysis.table.attributes().len(),
        analysis.vocab.len(),
        rankings_path.display()
    );
    Ok(())
}

fn parse_watch(tax: &Taxonomy, spec: &str) -> Result<(String, String)> {
    let (w, a) = spec
        .rsplit_once(':')
        .ok_or_else(|| CliError::Config(format!("--watch expects word:attribute, got {spec:?}")))?;
    let (w, a) = (w.trim().to_lowercase(), a.trim().to_lowercase());
    if w.is_empty() || tax.lookup(&a).is_none() {
        return Err(CliError::Config(format!(
            "--watch {spec:?}: unknown attribute or empty word"
        )));
    }
    Ok((w, a))
}

/// Top words of each attribute under the negative-regard score.
fn default_watchlist(
    tax: &Taxonomy,
    annotated: &[AnnotatedSentence],
    cfg: &RunConfig,
    top: usize,
) -> Result<Vec<(String, String)>> {
    let present: HashSet<&str> = annotated
        .iter()
        .flat_map(|s| s.labels.keys().map(String::as_str))
        .collect();
    let mut out = Vec::new();
    for class in tax.classes() {
        if !class.keyword_names().any(|k| present.contains(k)) {
            continue;
        }
        let table = build_table(annotated, class);
        let vocab = build_vocab(&table, cfg.vocab_k);
        let scorer = BiasScorer::new(&table, &vocab);
        for a in table.attributes() {
            let r = scorer.rank_words(
                a,
                ScoreKind::FrequencyRegard(RegardLabel::Negative),
                Some(top),
            )?;
            out.extend(r.words().map(|w| (w.to_owned(), a.clone())));
        }
    }
    Ok(out)
}

pub fn mitigate(cfg: &RunConfig, args: &MitigateArgs) -> Result<()> {
    let tax = cfg.taxonomy()?;
    let path = args
        .annotated
        .clone()
        .unwrap_or_else(|| cfg.out("annotated.jsonl"));
    let annotated: Vec<AnnotatedSentence> = read_records(&path)?;
    let plan = plan_downsample(&annotated, cfg.target, cfg.seed).map_err(CliError::input)?;
    for w in &plan.warnings {
        warn!("{w}");
    }
    let after = apply_plan(&annotated, &plan)?;
    let meta = cfg.meta();
    artifact::write_json(&cfg.out("plan.json"), &meta, &plan)?;
    artifact::write_jsonl(&cfg.out("annotated.mitigated.jsonl"), &meta, &after)?;

    let before_counts = negative_counts(&annotated);
    let after_counts = negative_counts(&after);
    let ratios: Vec<AttributeRatios> = before_counts
        .iter()
        .map(|(a, c)| AttributeRatios {
            attribute: a.clone(),
            neg_before: c.ratio(),
            neg_after: after_counts.get(a).and_then(|c| c.ratio()),
        })
        .collect();
    let ratios_path = cfg.out("mitigation_ratios.csv");
    write_ratios_csv(artifact::create_csv(&ratios_path, &meta)?, &ratios)?;

    let watch = if args.watch.is_empty() {
        default_watchlist(&tax, &annotated, cfg, args.watch_top)?
    } else {
        args.watch
            .iter()
            .map(|s| parse_watch(&tax, s))
            .collect::<Result<_>>()?
    };
    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, (_, a)) in watch.iter().enumerate() {
        let class = tax
            .class_of(a)
            .expect("watched attributes are taxonomy keywords");
        by_class.entry(class.name.as_str()).or_default().push(i);
    }
    let mut retention = vec![None; watch.len()];
    for (class_name, idx) in by_class {
        let class = find_class(&tax, class_name)?;
        let t0 = build_table(&annotated, class);
        let t1 = build_table(&after, class);
        let pairs: Vec<(String, String)> = idx.iter().map(|&i| watch[i].clone()).collect();
        for (&i, r) in idx.iter().zip(retention_report(&t0, &t1, &pairs).retention) {
            retention[i] = Some(r);
        }
    }
    let retention: Vec<_> = retention.into_iter().flatten().collect();
    write_retention_csv(
        artifact::create_csv(&cfg.out("retention.csv"), &meta)?,
        &retention,
    )?;

    println!(
        "dropped {} of {} sentences in {} iterations (target {})",
        plan.dropped.len(),
        annotated.len(),
        plan.iterations,
        plan.target
    );
    println!("attribute\tneg_before\tneg_after");
    for r in &ratios {
        let f = |x: Option<f64>| x.map_or_else(|| "undefined".into(), |v| format!("{v:.4}"));
        println!("{}\t{}\t{}", r.attribute, f(r.neg_before), f(r.neg_after));
    }
    Ok(())
}

fn load_confusion(path: &Path) -> Result<ConfusionCounts> {
    let open =
        || fs::File::open(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())));
    if path.extension().is_some_and(|e| e == "json") {
        let c: ConfusionCounts = serde_json::from_reader(open()?)
            .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
        ConfusionCounts::new(c.labels, c.matrix).map_err(CliError::input)
    } else {
        ConfusionCounts::from_pairs_csv(open()?).map_err(CliError::input)
    }
}

fn load_gold(path: &Path, args: &EvaluateArgs) -> Result<StereotypeGold> {
    let f =
        fs::File::open(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    match args.gold_format {
        GoldFormat::Generic => StereotypeGold::from_csv(f),
        GoldFormat::Seegull => StereotypeGold::from_seegull_csv(
            f,
            &SeegullColumns {
                identity: args.seegull_identity_column.clone(),
                attribute: args.seegull_attribute_column.clone(),
                score: args.seegull_score_column.clone(),
            },
        ),
    }
    .map_err(CliError::input)
}

fn confusion_metrics(path: &Path, c: &ConfusionCounts) -> Result<Vec<MetricRecord>> {
    let file = path.display().to_string();
    let kappa = cohens_kappa(c).map_err(CliError::input)?;
    let f1 = f1_scores(c).map_err(CliError::input)?;
    let mut out = vec![
        MetricRecord::new("cohens_kappa", kappa).param("file", file.clone()),
        MetricRecord::new("micro_f1", f1.micro).param("file", file.clone()),
        MetricRecord::new("macro_f1", f1.macro_f1).param("file", file.clone()),
    ];
    for cls in f1.per_class {
        out.push(
            MetricRecord::new("f1", cls.f1)
                .param("file", file.clone())
                .param("label", cls.label)
                .param("absent", cls.absent),
        );
    }
    Ok(out)
}

fn recall_metrics(
    rankings: &[BiasRanking],
    gold: &StereotypeGold,
    args: &EvaluateArgs,
) -> Result<Vec<MetricRecord>> {
    let mode = match args.match_mode {
        MatchArg::Any => MatchMode::AnyContentWord,
        MatchArg::Exact => MatchMode::Exact,
    };
    let mut out = Vec::new();
    let mut warned = HashSet::new();
    for polarity in [Polarity::Positive, Polarity::Negative] {
        if gold.pairs(polarity).next().is_none() {
            continue;
        }
        for kind in [
            ScoreKind::Frequency,
            ScoreKind::FrequencyRegard(polarity.regard()),
        ] {
            let by_attr: BTreeMap<String, BiasRanking> = rankings
                .iter()
                .filter(|r| r.score_kind == kind)
                .map(|r| (r.attribute.clone(), r.clone()))
                .collect();
            for &k in &args.k {
                let r = match recall_at_k(&by_attr, gold, polarity, k, mode) {
                    Ok(r) => r,
                    Err(bias_audit::Error::Domain(m)) if k >= 1 => {
                        warn!("{m}");
                        continue;
                    }
                    Err(e) => return Err(CliError::input(e)),
                };
                for a in &r.missing_attributes {
                    if warned.insert(a.clone()) {
                        warn!("gold attribute {a:?} has no ranking; its pairs are excluded");
                    }
                }
                out.push(
                    MetricRecord::new("recall_at_k", r.percent)
                        .param("k", k)
                        .param(
                            "polarity",
                            serde_json::to_value(polarity).expect("polarity serializes"),
                        )
                        .param("score_kind", kind.to_string())
                        .param("hits", r.hits)
                        .param("considered", r.considered)
                        .param(
                            "match",
                            match mode {
                                MatchMode::AnyContentWord => "any",
                                MatchMode::Exact => "exact",
                            },
                        ),
                );
            }
        }
    }
    Ok(out)
}

pub fn evaluate(cfg: &RunConfig, args: &EvaluateArgs) -> Result<()> {
    let mut records = Vec::new();
    for path in &args.confusion {
        records.extend(confusion_metrics(path, &load_confusion(path)?)?);
    }
    match (&args.rankings, &args.gold) {
        (Some(r), Some(g)) => {
            let f =
                fs::File::open(r).map_err(|e| CliError::Config(format!("{}: {e}", r.display())))?;
            let rankings = read_rankings_csv(f).map_err(CliError::input)?;
            let gold = load_gold(g, args)?;
            records.extend(recall_metrics(&rankings, &gold, args)?);
        }
        (None, None) => {}
        _ => return Err(CliError::Config("--rankings and --gold go together".into())),
    }
    if records.is_empty() && args.confusion.is_empty() && args.rankings.is_none() {
        return Err(CliError::Config(
            "nothing to evaluate: pass --confusion or --rankings with --gold".into(),
        ));
    }
    let out = args.out.clone().unwrap_or_else(|| cfg.out("metrics.jsonl"));
    artifact::write_jsonl(&out, &cfg.meta(), &records)?;
    for r in &records {
        println!(
            "{}",
            serde_json::to_string(r).map_err(|e| CliError::Internal(e.to_string()))?
        );
    }
    Ok(())
}

fn existing(explicit: &Option<PathBuf>, default: PathBuf) -> Option<PathBuf> {
    match explicit {
        Some(p) => Some(p.clone()),
        None => default.exists().then_some(default),
    }
}

pub fn report(cfg: &RunConfig, args: &ReportArgs) -> Result<()> {
    let tax = cfg.taxonomy()?;
    let class = find_class(&tax, &args.class)?;
    let s = slug(&class.name);
    let path = args
        .rankings
        .clone()
        .unwrap_or_else(|| cfg.out(&format!("rankings_{s}.csv")));
    let f =
        fs::File::open(&path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let rankings = read_rankings_csv(f).map_err(CliError::input)?;
    let ranked: HashSet<&str> = rankings.iter().map(|r| r.attribute.as_str()).collect();
    let attributes: Vec<String> = class
        .keyword_names()
        .filter(|k| ranked.contains(k))
        .map(str::to_owned)
        .collect();

    let mut body = format!("# Bias audit: {}\n\n", class.name);
    body.push_str(&bias_table_markdown(
        &class.name,
        &attributes,
        &rankings,
        args.per_cell,
    ));

    if let Some(p) = existing(&args.annotated, cfg.out("annotated.jsonl")) {
        let annotated: Vec<AnnotatedSentence> = read_records(&p)?;
        let mut counts: HashMap<&str, [u64; 3]> = HashMap::new();
        let mut examples = Vec::new();
        for s in &annotated {
            for (k, r) in &s.labels {
                if class.contains(k) {
                    counts.entry(k.as_str()).or_default()[r.index()] += 1;
                    examples.push(Example::locate(&s.text, k, r.as_str()));
                }
            }
        }
        let rows: Vec<(String, RegardDistribution)> = class
            .keyword_names()
            .filter_map(|k| {
                let c = counts.get(k)?;
                distribution_from_counts(k, *c)
                    .ok()
                    .map(|d| (k.to_owned(), d))
            })
            .collect();
        body.push('\n');
        body.push_str(&distribution_markdown(&rows));
        body.push('\n');
        body.push_str(&examples_markdown(
            "Regard examples",
            &examples,
            &["positive", "neutral", "negative"],
            args.examples,
        ));
    }
    if let Some(p) = existing(&args.mentions, cfg.out("mentions.jsonl")) {
        let mentions: Vec<MentionRecord> = read_records(&p)?;
        let examples: Vec<Example> = mentions
            .iter()
            .filter(|m| m.class == class.name)
            .map(|m| Example {
                text: m.text.clone(),
                span: Some((m.span[0], m.span[1])),
                prediction: m.label.as_str().to_owned(),
            })
            .collect();
        body.push('\n');
        body.push_str(&examples_markdown(
            "Protected attribute detection examples",
            &examples,
            &["protected", "non_protected"],
            args.examples,
        ));
    }
    let out = cfg.out(&format!("audit_{s}.md"));
    write_markdown(&out, &cfg.meta(), &body)?;
    println!("report -> {}", out.display());
    Ok(())
}
