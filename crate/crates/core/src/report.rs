//! Markdown tables for human review.

use std::fmt::Write;

use crate::ingest::tokenize_with_spans;
use crate::regard::RegardLabel;
use crate::stats::{BiasRanking, RegardDistribution, ScoreKind};

const SCORE_COLUMNS: [(ScoreKind, &str); 4] = [
    (ScoreKind::Frequency, "Frequency Bias"),
    (
        ScoreKind::FrequencyRegard(RegardLabel::Positive),
        "r = Positive",
    ),
    (
        ScoreKind::FrequencyRegard(RegardLabel::Negative),
        "r = Negative",
    ),
    (
        ScoreKind::FrequencyRegard(RegardLabel::Neutral),
        "r = Neutral",
    ),
];

fn escape(cell: &str) -> String {
    cell.replace('|', "\\|").replace('\n', " ")
}

/// One row per attribute: the top words under the frequency score and under the
/// frequency+regard score for each regard label.
pub fn bias_table_markdown(
    class_name: &str,
    attributes: &[String],
    rankings: &[BiasRanking],
    per_cell: usize,
) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "### Bias analysis: {}\n", escape(class_name));
    out.push_str("| Protected Attribute |");
    for (_, title) in SCORE_COLUMNS {
        let _ = write!(out, " {title} |");
    }
    out.push_str("\n|---|---|---|---|---|\n");
    for a in attributes {
        let _ = write!(out, "| {} |", escape(a));
        for (kind, _) in SCORE_COLUMNS {
            let cell = rankings
                .iter()
                .find(|r| &r.attribute == a && r.score_kind == kind)
                .map(|r| {
                    let words: Vec<String> = r.words().take(per_cell).map(escape).collect();
                    let more = if r.entries.len() > per_cell {
                        ", ..."
                    } else {
                        ""
                    };
                    format!("{}{more}", words.join(", "))
                })
                .unwrap_or_default();
            let _ = write!(out, " {cell} |");
        }
        out.push('\n');
    }
    out
}

/// Regard distribution per attribute as percentages.
pub fn distribution_markdown(rows: &[(String, RegardDistribution)]) -> String {
    let mut out = String::from("### Regard distribution\n\n| Attribute | Sentences | Positive | Negative | Neutral |\n|---|---|---|---|---|\n");
    for (a, d) in rows {
        let _ = writeln!(
            out,
            "| {} | {} | {:.1}% | {:.1}% | {:.1}% |",
            escape(a),
            d.sentences,
            100.0 * d.positive,
            100.0 * d.negative,
            100.0 * d.neutral
        );
    }
    out
}

/// An example row: sentence text, byte span of the keyword, predicted label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub text: String,
    pub span: Option<(usize, usize)>,
    pub prediction: String,
}

impl Example {
    /// Locates the first token equal to `keyword` when no span is known.
    pub fn locate(text: &str, keyword: &str, prediction: impl Into<String>) -> Self {
        let span = tokenize_with_spans(text)
            .into_iter()
            .find(|t| t.text == keyword)
            .map(|t| (t.start, t.end));
        Example {
            text: text.to_owned(),
            span,
            prediction: prediction.into(),
        }
    }

    fn highlighted(&self) -> String {
        match self.span {
            Some((s, e)) if s < e && e <= self.text.len() => format!(
                "{}**{}**{}",
                escape(&self.text[..s]),
                escape(&self.text[s..e]),
                escape(&self.text[e..])
            ),
            _ => escape(&self.text),
        }
    }
}

/// Example sentences with the keyword in bold, grouped by prediction in the given order.
pub fn examples_markdown(
    title: &str,
    examples: &[Example],
    order: &[&str],
    per_label: usize,
) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "### {}\n", escape(title));
    out.push_str("| Example Sentence (Keyword in **bold**) | Prediction |\n|---|---|\n");
    for label in order {
        for ex in examples
            .iter()
            .filter(|e| e.prediction == *label)
            .take(per_label)
        {
            let _ = writeln!(out, "| {} | {} |", ex.highlighted(), escape(label));
        }
    }
    out
}
