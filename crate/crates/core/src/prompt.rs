//! Annotation prompt templates with `{Keyword}`, `{Gloss}` and `{Text}` slots.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

const WSD_TEMPLATE: &str = include_str!("../../../prompts/wsd.txt");
const REGARD_TEMPLATE: &str = include_str!("../../../prompts/regard.txt");

pub const SLOTS: [&str; 3] = ["{Keyword}", "{Gloss}", "{Text}"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    template: String,
}

impl PromptTemplate {
    pub fn new(template: impl Into<String>) -> Self {
        let mut template = template.into();
        let trimmed = template.trim_end().len();
        template.truncate(trimmed);
        PromptTemplate { template }
    }

    pub fn wsd() -> Self {
        Self::new(WSD_TEMPLATE)
    }

    pub fn regard() -> Self {
        Self::new(REGARD_TEMPLATE)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        fs::read_to_string(path)
            .map(Self::new)
            .map_err(|e| Error::io(path, e))
    }

    pub fn as_str(&self) -> &str {
        &self.template
    }

    /// Single-pass substitution: slot markers inside the substituted values are left
    /// alone.
    pub fn render(&self, keyword: &str, gloss: &str, text: &str) -> String {
        let mut out = String::with_capacity(self.template.len() + text.len() + 64);
        let mut rest = self.template.as_str();
        while let Some(pos) = rest.find('{') {
            out.push_str(&rest[..pos]);
            let tail = &rest[pos..];
            let (value, len) = if tail.starts_with(SLOTS[0]) {
                (keyword, SLOTS[0].len())
            } else if tail.starts_with(SLOTS[1]) {
                (gloss, SLOTS[1].len())
            } else if tail.starts_with(SLOTS[2]) {
                (text, SLOTS[2].len())
            } else {
                ("{", 1)
            };
            out.push_str(value);
            rest = &tail[len..];
        }
        out.push_str(rest);
        out
    }
}
