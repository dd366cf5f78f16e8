//! Protected-attribute taxonomy: attribute classes, their keywords and glosses.
//!
//! The taxonomy is a data file (`taxonomy/default.json` is bundled) with the shape
//! `{version, classes: [{name, keywords: [{keyword, gloss, gloss_is_complete?}]}]}`.
//! Glosses are stored as continuations of the phrase "a person ...", e.g. `who is a vegan`,
//! unless `gloss_is_complete` is set.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::tokenize;

const DEFAULT_TAXONOMY: &str = include_str!("../../../taxonomy/default.json");

const GLOSS_PREFIX: &str = "a person ";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeKeyword {
    pub keyword: String,
    pub gloss: String,
    pub class_name: String,
    pub gloss_is_complete: bool,
}

impl AttributeKeyword {
    /// The gloss as it appears in a disambiguation input: `a person who is a vegan`.
    pub fn full_gloss(&self) -> String {
        if self.gloss_is_complete {
            self.gloss.clone()
        } else {
            format!("{GLOSS_PREFIX}{}", self.gloss)
        }
    }

    /// The gloss without the leading "a person", for templates that already say
    /// "a person (or people) {Gloss}".
    pub fn gloss_continuation(&self) -> &str {
        if self.gloss_is_complete {
            self.gloss.strip_prefix(GLOSS_PREFIX).unwrap_or(&self.gloss)
        } else {
            &self.gloss
        }
    }
}

pub fn full_gloss(kw: &AttributeKeyword) -> String {
    kw.full_gloss()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeClass {
    pub name: String,
    pub keywords: Vec<AttributeKeyword>,
}

impl AttributeClass {
    pub fn keyword_names(&self) -> impl Iterator<Item = &str> {
        self.keywords.iter().map(|k| k.keyword.as_str())
    }

    pub fn contains(&self, keyword: &str) -> bool {
        self.keywords.iter().any(|k| k.keyword == keyword)
    }
}

/// Immutable after construction; share freely across threads.
#[derive(Debug, Clone)]
pub struct Taxonomy {
    version: String,
    note: Option<String>,
    classes: Vec<AttributeClass>,
    // keyword -> (class index, keyword index)
    index: HashMap<String, (usize, usize)>,
}

impl PartialEq for Taxonomy {
    fn eq(&self, other: &Self) -> bool {
        self.version == other.version && self.note == other.note && self.classes == other.classes
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaxonomyFile {
    version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    note: Option<String>,
    classes: Vec<ClassEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassEntry {
    name: String,
    keywords: Vec<KeywordEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KeywordEntry {
    keyword: String,
    gloss: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    gloss_is_complete: bool,
}

impl Taxonomy {
    /// The bundled 10-class, 97-keyword taxonomy.
    pub fn bundled() -> Self {
        Self::from_json_str(DEFAULT_TAXONOMY).expect("bundled taxonomy is valid")
    }

    pub fn from_json_str(json: &str) -> Result<Self> {
        let file: TaxonomyFile =
            serde_json::from_str(json).map_err(|e| Error::parse("taxonomy", e))?;
        let classes = file
            .classes
            .into_iter()
            .map(|c| AttributeClass {
                keywords: c
                    .keywords
                    .into_iter()
                    .map(|k| AttributeKeyword {
                        keyword: k.keyword,
                        gloss: k.gloss,
                        class_name: c.name.clone(),
                        gloss_is_complete: k.gloss_is_complete,
                    })
                    .collect(),
                name: c.name,
            })
            .collect();
        Ok(Self::new(file.version, classes)?.with_note(file.note))
    }

    /// Validates and indexes the given classes.
    pub fn new(version: impl Into<String>, classes: Vec<AttributeClass>) -> Result<Self> {
        let mut names = HashSet::new();
        let mut index = HashMap::new();
        for (ci, class) in classes.iter().enumerate() {
            if class.name.trim().is_empty() {
                return Err(Error::validation("taxonomy", "class with empty name"));
            }
            if !names.insert(class.name.as_str()) {
                return Err(Error::validation(
                    "taxonomy",
                    format!("duplicate class name {:?}", class.name),
                ));
            }
            if class.keywords.is_empty() {
                return Err(Error::validation(
                    "taxonomy",
                    format!("class {:?} has no keywords", class.name),
                ));
            }
            for (ki, kw) in class.keywords.iter().enumerate() {
                validate_keyword(kw)?;
                if kw.class_name != class.name {
                    return Err(Error::validation(
                        "taxonomy",
                        format!(
                            "keyword {:?} claims class {:?} but is listed under {:?}",
                            kw.keyword, kw.class_name, class.name
                        ),
                    ));
                }
                if index.insert(kw.keyword.clone(), (ci, ki)).is_some() {
                    return Err(Error::validation(
                        "taxonomy",
                        format!("duplicate keyword {:?}", kw.keyword),
                    ));
                }
            }
        }
        if index.is_empty() {
            return Err(Error::validation("taxonomy", "no keywords"));
        }
        Ok(Taxonomy {
            version: version.into(),
            note: None,
            classes,
            index,
        })
    }

    pub fn to_json_string(&self) -> String {
        let file = TaxonomyFile {
            version: self.version.clone(),
            note: self.note.clone(),
            classes: self
                .classes
                .iter()
                .map(|c| ClassEntry {
                    name: c.name.clone(),
                    keywords: c
                        .keywords
                        .iter()
                        .map(|k| KeywordEntry {
                            keyword: k.keyword.clone(),
                            gloss: k.gloss.clone(),
                            gloss_is_complete: k.gloss_is_complete,
                        })
                        .collect(),
                })
                .collect(),
        };
        let mut out = serde_json::to_string_pretty(&file).expect("taxonomy serializes");
        out.push('\n');
        out
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    /// Free-text remark on the file's provenance or completeness.
    pub fn note(&self) -> Option<&str> {
        self.note.as_deref()
    }

    pub fn with_note(mut self, note: Option<String>) -> Self {
        self.note = note;
        self
    }

    pub fn classes(&self) -> &[AttributeClass] {
        &self.classes
    }

    pub fn class(&self, name: &str) -> Option<&AttributeClass> {
        self.classes.iter().find(|c| c.name == name)
    }

    pub fn lookup(&self, keyword: &str) -> Option<&AttributeKeyword> {
        self.index
            .get(keyword)
            .map(|&(ci, ki)| &self.classes[ci].keywords[ki])
    }

    pub fn class_of(&self, keyword: &str) -> Option<&AttributeClass> {
        self.index.get(keyword).map(|&(ci, _)| &self.classes[ci])
    }

    /// All keywords in file order.
    pub fn keywords(&self) -> impl Iterator<Item = &AttributeKeyword> {
        self.classes.iter().flat_map(|c| c.keywords.iter())
    }

    pub fn keyword_count(&self) -> usize {
        self.index.len()
    }
}

fn validate_keyword(kw: &AttributeKeyword) -> Result<()> {
    let bad = |msg: &str| Error::validation("taxonomy", format!("keyword {:?}: {msg}", kw.keyword));
    if kw.keyword.is_empty() {
        return Err(bad("empty keyword"));
    }
    if kw.keyword.chars().any(char::is_whitespace) {
        return Err(bad("multi-token keywords are not supported"));
    }
    if kw.keyword.to_lowercase() != kw.keyword {
        return Err(bad("keyword must be lowercase"));
    }
    if tokenize(&kw.keyword) != [kw.keyword.as_str()] {
        return Err(bad("keyword does not form a single token"));
    }
    if kw.gloss.trim().is_empty() {
        return Err(bad("empty gloss"));
    }
    Ok(())
}

pub fn load_taxonomy(path: impl AsRef<Path>) -> Result<Taxonomy> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Taxonomy::from_json_str(&text).map_err(|e| match e {
        Error::Parse { message, .. } => Error::parse(path.display().to_string(), message),
        other => other,
    })
}

pub fn save_taxonomy(taxonomy: &Taxonomy, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, taxonomy.to_json_string()).map_err(|e| Error::io(path, e))
}
