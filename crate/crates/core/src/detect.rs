//! Protected-attribute detection: keyword matching, disambiguation inputs and prompts,
//! and resolution of each mention to protected / non-protected.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backend::{dispatch, Classifier, DispatchOptions};
use crate::error::{Error, Result};
use crate::ingest::Sentence;
use crate::prompt::PromptTemplate;
use crate::protocol::{Label, ProtocolRequest, Task};
use crate::taxonomy::{AttributeKeyword, Taxonomy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WsdLabel {
    Protected,
    NonProtected,
}

impl WsdLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            WsdLabel::Protected => "protected",
            WsdLabel::NonProtected => "non_protected",
        }
    }
}

impl FromStr for WsdLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "protected" => Ok(WsdLabel::Protected),
            "non_protected" => Ok(WsdLabel::NonProtected),
            other => Err(format!("unknown wsd label {other:?}")),
        }
    }
}

impl fmt::Display for WsdLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A keyword occurrence in a sentence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Mention {
    pub sentence_id: String,
    pub keyword: String,
    pub token_index: usize,
    /// Byte offsets into the sentence text.
    pub char_span: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WsdDecision {
    pub mention: Mention,
    pub label: WsdLabel,
    pub confidence: f64,
    pub source: String,
}

/// Exact-token, case-insensitive matcher over every taxonomy keyword. One hash lookup
/// per token, so a sentence is scanned once regardless of taxonomy size.
#[derive(Debug, Clone)]
pub struct KeywordMatcher {
    keywords: HashSet<String>,
}

impl KeywordMatcher {
    pub fn new(taxonomy: &Taxonomy) -> Self {
        KeywordMatcher {
            keywords: taxonomy.keywords().map(|k| k.keyword.clone()).collect(),
        }
    }

    pub fn find_mentions(&self, sentence: &Sentence) -> Vec<Mention> {
        sentence
            .tokens()
            .iter()
            .enumerate()
            .filter(|(_, t)| self.keywords.contains(t.text.as_str()))
            .map(|(token_index, t)| Mention {
                sentence_id: sentence.sentence_id.clone(),
                keyword: t.text.clone(),
                token_index,
                char_span: (t.start, t.end),
            })
            .collect()
    }
}

pub fn find_mentions(sentence: &Sentence, taxonomy: &Taxonomy) -> Vec<Mention> {
    KeywordMatcher::new(taxonomy).find_mentions(sentence)
}

/// `[BOS] {Text} [SEP] {Keyword}; {Gloss} [EOS]` with the full "a person ..." gloss.
pub fn format_wsd_input(keyword: &AttributeKeyword, sentence_text: &str) -> String {
    format!(
        "[BOS] {sentence_text} [SEP] {}; {} [EOS]",
        keyword.keyword,
        keyword.full_gloss()
    )
}

/// Inverse of [`format_wsd_input`]: `(text, keyword, gloss)`. Splits on the last
/// `[SEP]`, so texts that themselves contain the marker are still recovered.
pub fn parse_wsd_input(input: &str) -> Option<(&str, &str, &str)> {
    let body = input.strip_prefix("[BOS] ")?.strip_suffix(" [EOS]")?;
    let (text, pair) = body.rsplit_once(" [SEP] ")?;
    let (keyword, gloss) = pair.split_once("; ")?;
    Some((text, keyword, gloss))
}

pub fn render_wsd_prompt(keyword: &AttributeKeyword, sentence_text: &str) -> String {
    render_wsd_prompt_with(&PromptTemplate::wsd(), keyword, sentence_text)
}

pub fn render_wsd_prompt_with(
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

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LlmAnswer {
    Yes,
    No,
    Unsure,
}

impl FromStr for LlmAnswer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let word = s
            .trim()
            .trim_matches(|c: char| !c.is_alphanumeric())
            .to_lowercase();
        match word.as_str() {
            "yes" => Ok(LlmAnswer::Yes),
            "no" => Ok(LlmAnswer::No),
            "unsure" => Ok(LlmAnswer::Unsure),
            _ => Err(Error::parse(
                "llm answer",
                format!("{s:?} is not yes/no/unsure"),
            )),
        }
    }
}

/// Only a definite "yes" counts as a protected-attribute reference.
pub fn map_llm_answer(answer: LlmAnswer) -> WsdLabel {
    match answer {
        LlmAnswer::Yes => WsdLabel::Protected,
        LlmAnswer::No | LlmAnswer::Unsure => WsdLabel::NonProtected,
    }
}

/// Extracts the answer from a response concluding with "Therefore, the answer is ...".
/// A bare one-word response is also accepted.
pub fn parse_wsd_response(response: &str) -> Result<LlmAnswer> {
    const MARKER: &str = "the answer is";
    let lower = response.to_lowercase();
    let tail = match lower.rfind(MARKER) {
        Some(pos) => &lower[pos + MARKER.len()..],
        None => lower.as_str(),
    };
    let word = tail
        .split_whitespace()
        .next()
        .ok_or_else(|| Error::parse("llm answer", "empty response"))?;
    if lower.rfind(MARKER).is_none() && lower.split_whitespace().count() > 1 {
        return Err(Error::parse(
            "llm answer",
            "response has no concluding \"the answer is\" sentence",
        ));
    }
    word.parse()
}

#[derive(Debug, Clone, Default, Deserialize)]
struct KeywordCues {
    #[serde(default)]
    allow: Vec<String>,
    #[serde(default)]
    deny: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct WsdLexiconFile {
    human_cues: Vec<String>,
    determiners: Vec<String>,
    non_human_heads: Vec<String>,
    #[serde(default)]
    keywords: HashMap<String, KeywordCues>,
}

const WSD_LEXICON: &str = include_str!("../../../lexicons/wsd_cues.json");

/// Half-width of the context window inspected around a mention.
pub const CUE_WINDOW: usize = 3;

/// Heuristic disambiguator. Looks for person-denoting words within ±3 tokens, a
/// non-human head noun right after the keyword, per-keyword allow/deny cues, and the
/// nominal pattern "the blind and ...".
#[derive(Debug, Clone)]
pub struct BaselineWsd {
    human: HashSet<String>,
    determiners: HashSet<String>,
    non_human_heads: HashSet<String>,
    allow: HashMap<String, HashSet<String>>,
    deny: HashMap<String, HashSet<String>>,
}

impl BaselineWsd {
    pub fn bundled() -> Self {
        Self::from_json_str(WSD_LEXICON).expect("bundled wsd lexicon is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn from_json_str(json: &str) -> Result<Self> {
        let file: WsdLexiconFile =
            serde_json::from_str(json).map_err(|e| Error::parse("wsd lexicon", e))?;
        let set = |v: Vec<String>| v.into_iter().collect::<HashSet<_>>();
        let mut allow = HashMap::new();
        let mut deny = HashMap::new();
        for (kw, cues) in file.keywords {
            allow.insert(kw.clone(), set(cues.allow));
            deny.insert(kw, set(cues.deny));
        }
        Ok(BaselineWsd {
            human: set(file.human_cues),
            determiners: set(file.determiners),
            non_human_heads: set(file.non_human_heads),
            allow,
            deny,
        })
    }

    /// `tokens` are lowercased; `index` is the keyword position.
    pub fn decide(&self, tokens: &[&str], index: usize, keyword: &str) -> (WsdLabel, f64) {
        let lo = index.saturating_sub(CUE_WINDOW);
        let hi = (index + CUE_WINDOW + 1).min(tokens.len());
        let window = || {
            tokens[lo..hi]
                .iter()
                .enumerate()
                .filter(move |(i, _)| lo + i != index)
                .map(|(_, t)| *t)
        };
        let next = tokens.get(index + 1).copied();
        let prev = index.checked_sub(1).map(|i| tokens[i]);

        let deny = self.deny.get(keyword);
        if let Some(deny) = deny {
            if window().any(|t| deny.contains(t)) {
                return (WsdLabel::NonProtected, 0.8);
            }
        }
        if next.is_some_and(|t| self.non_human_heads.contains(t)) {
            return (WsdLabel::NonProtected, 0.8);
        }

        let allow = self.allow.get(keyword);
        let cues = window()
            .filter(|t| self.human.contains(*t) || allow.is_some_and(|a| a.contains(*t)))
            .count();
        if cues > 0 {
            return (WsdLabel::Protected, (0.6 + 0.1 * cues as f64).min(0.95));
        }

        let nominal = prev.is_some_and(|p| self.determiners.contains(p))
            && next
                .is_none_or(|n| n == "and" || n == "or" || n.chars().all(|c| !c.is_alphanumeric()));
        if nominal {
            return (WsdLabel::Protected, 0.6);
        }
        (WsdLabel::NonProtected, 0.6)
    }
}

/// A mention together with the text of its sentence.
#[derive(Debug, Clone, Copy)]
pub struct MentionInContext<'a> {
    pub mention: &'a Mention,
    pub text: &'a str,
}

pub(crate) fn build_request(
    task: Task,
    taxonomy: &Taxonomy,
    item: MentionInContext<'_>,
) -> Result<ProtocolRequest> {
    let kw = taxonomy.lookup(&item.mention.keyword).ok_or_else(|| {
        Error::validation(
            "mention",
            format!("keyword {:?} not in taxonomy", item.mention.keyword),
        )
    })?;
    Ok(ProtocolRequest {
        task,
        text: item.text.to_owned(),
        keyword: kw.keyword.clone(),
        gloss: kw.full_gloss(),
        span: [item.mention.char_span.0, item.mention.char_span.1],
    })
}

/// One decision per mention, in input order.
pub fn disambiguate(
    mentions: &[MentionInContext<'_>],
    taxonomy: &Taxonomy,
    backend: &dyn Classifier,
    opts: DispatchOptions,
) -> Result<Vec<WsdDecision>> {
    let requests = mentions
        .iter()
        .map(|m| build_request(Task::Wsd, taxonomy, *m))
        .collect::<Result<Vec<_>>>()?;
    let responses = dispatch(backend, &requests, opts)?;
    mentions
        .iter()
        .zip(responses)
        .map(|(m, resp)| {
            let Label::Wsd(label) = resp.interpret(Task::Wsd)? else {
                unreachable!("interpret(Wsd) yields a wsd label")
            };
            Ok(WsdDecision {
                mention: m.mention.clone(),
                label,
                confidence: resp.confidence,
                source: backend.id().to_owned(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{Builtin, FixedBackend};
    use crate::regard::RegardLabel;

    fn sentence(text: &str) -> Sentence {
        Sentence::new("s#0", text)
    }

    fn baseline_label(text: &str, keyword: &str) -> WsdLabel {
        let s = sentence(text);
        let tax = Taxonomy::bundled();
        let m = find_mentions(&s, &tax)
            .into_iter()
            .find(|m| m.keyword == keyword)
            .unwrap();
        let items = [MentionInContext {
            mention: &m,
            text: &s.text,
        }];
        disambiguate(
            &items,
            &tax,
            &Builtin::default(),
            DispatchOptions::default(),
        )
        .unwrap()[0]
            .label
    }

    #[test]
    fn finds_mentions_in_token_order() {
        let tax = Taxonomy::bundled();
        let s = sentence("I observed a group of Asian visitors at the museum enjoying the exhibits together today with friends.");
        let m = find_mentions(&s, &tax);
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].keyword, "asian");
        assert_eq!(&s.text[m[0].char_span.0..m[0].char_span.1], "Asian");

        assert!(find_mentions(&sentence("Nothing relevant here at all."), &tax).is_empty());

        let s = sentence("The poor rural vegan spoke about the harvest.");
        let kws: Vec<_> = find_mentions(&s, &tax)
            .into_iter()
            .map(|m| m.keyword)
            .collect();
        assert_eq!(kws, ["poor", "rural", "vegan"]);
    }

    #[test]
    fn no_stemming() {
        let tax = Taxonomy::bundled();
        assert!(find_mentions(&sentence("Arabs and vegans"), &tax).is_empty());
    }

    #[test]
    fn wsd_input_table_rows() {
        let tax = Taxonomy::bundled();
        let asian = tax.lookup("asian").unwrap();
        assert_eq!(
            format_wsd_input(asian, "... and more traditional Asian cuisine."),
            "[BOS] ... and more traditional Asian cuisine. [SEP] asian; a person of asian race/ethnicity [EOS]"
        );
        let k = AttributeKeyword {
            keyword: "k".into(),
            gloss: "a person who is k".into(),
            class_name: "c".into(),
            gloss_is_complete: true,
        };
        let out = format_wsd_input(&k, "t");
        assert_eq!(out, "[BOS] t [SEP] k; a person who is k [EOS]");
        assert_eq!(parse_wsd_input(&out), Some(("t", "k", "a person who is k")));
    }

    #[test]
    fn wsd_prompt_slots() {
        let tax = Taxonomy::bundled();
        let blind = tax.lookup("blind").unwrap();
        let text = "We're all blind to our own mistakes.";
        let p = render_wsd_prompt(blind, text);
        assert!(p.lines().any(|l| l == format!("Text: {text}")));
        let first_sentence = p.split(". ").next().unwrap();
        assert!(first_sentence.contains("\"blind\""), "{first_sentence}");
        assert!(p.contains("a person (or people) who is blind."));
        assert_eq!(p, render_wsd_prompt(blind, text));
        assert!(!p.contains('{'));
    }

    #[test]
    fn llm_answer_mapping() {
        assert_eq!(map_llm_answer("yes".parse().unwrap()), WsdLabel::Protected);
        assert_eq!(
            map_llm_answer("no".parse().unwrap()),
            WsdLabel::NonProtected
        );
        assert_eq!(
            map_llm_answer("Unsure".parse().unwrap()),
            WsdLabel::NonProtected
        );
        assert!("maybe".parse::<LlmAnswer>().is_err());

        assert_eq!(
            parse_wsd_response("The keyword refers to a diner. Therefore, the answer is yes.")
                .unwrap(),
            LlmAnswer::Yes
        );
        assert_eq!(
            parse_wsd_response("Therefore, the answer is \"unsure\".").unwrap(),
            LlmAnswer::Unsure
        );
        assert_eq!(parse_wsd_response("No").unwrap(), LlmAnswer::No);
        assert!(parse_wsd_response("I think it could be a person").is_err());
        assert!(parse_wsd_response("Therefore, the answer is maybe.").is_err());
        assert!(parse_wsd_response("").is_err());
    }

    #[test]
    fn baseline_on_reference_sentences() {
        use WsdLabel::*;
        let cases = [
            ("My wife is vegan so we went to this place and she really loved the food.", "vegan", Protected),
            ("I know that the advocates for the blind and visually impaired will continue his work.", "blind", Protected),
            ("Our aim is to help the poor and marginalized communities in Ghana to have access to education.", "poor", Protected),
            ("She is thought to be the youngest certified female yoga instructor in the United States.", "female", Protected),
            ("To be alone in secret with the Father should become one of the highest joys for a Christian.", "christian", Protected),
            ("But rural children in particular are more likely to be driven to school or other activities.", "rural", Protected),
            ("This water-based, non-toxic, vegan nail color has been formulated especially for kids.", "vegan", NonProtected),
            ("We're all blind to our own mistakes, and a fresh pair of eyes can do wonders for our manuscripts.", "blind", NonProtected),
            ("It has received poor reviews from critics and viewers, who have given it an IMDb score of 6.1.", "poor", NonProtected),
            ("Did you know that female fireflies can't fly?", "female", NonProtected),
            ("Road connectivity of rural areas to urban areas is yet to be accomplished.", "rural", NonProtected),
            ("I observed a group of Asian visitors at the museum.", "asian", Protected),
            ("It has lots of rice and more traditional Asian cuisine.", "asian", NonProtected),
        ];
        for (text, kw, expected) in cases {
            assert_eq!(baseline_label(text, kw), expected, "{text}");
        }
    }

    #[test]
    fn fixed_backend_passes_through() {
        let tax = Taxonomy::bundled();
        let s = sentence("A vegan nail color and a blind date.");
        let mentions = find_mentions(&s, &tax);
        let items: Vec<_> = mentions
            .iter()
            .map(|m| MentionInContext {
                mention: m,
                text: &s.text,
            })
            .collect();
        let backend = FixedBackend {
            wsd: WsdLabel::Protected,
            regard: RegardLabel::Neutral,
        };
        let out = disambiguate(&items, &tax, &backend, DispatchOptions::default()).unwrap();
        assert_eq!(out.len(), 2);
        assert!(out
            .iter()
            .all(|d| d.label == WsdLabel::Protected && d.source == "fixed"));
        assert_eq!(out[0].mention, mentions[0]);
        assert_eq!(out[1].mention, mentions[1]);
    }
}
