use std::path::Path;

use regex::Regex;

use super::{Corpus, Style};
use crate::error::{Error, Result};

/// Overt-slur lexicon driving the explicit/implicit heuristic. The file
/// format is one token per line; blank lines and `#` comments (for a version
/// header) are ignored.
#[derive(Debug, Clone)]
pub struct Lexicon {
    tokens: Vec<String>,
    pattern: Regex,
}

impl Lexicon {
    pub fn new<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let tokens: Vec<String> = tokens
            .into_iter()
            .map(|t| t.as_ref().trim().to_string())
            .filter(|t| !t.is_empty())
            .collect();
        if tokens.is_empty() {
            return Err(Error::invalid("style lexicon is empty"));
        }
        let alternation = tokens
            .iter()
            .map(|t| regex::escape(t))
            .collect::<Vec<_>>()
            .join("|");
        let pattern = Regex::new(&format!(r"(?i)\b(?:{alternation})\b"))
            .map_err(|e| Error::invalid(format!("lexicon pattern: {e}")))?;
        Ok(Self { tokens, pattern })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::new(text.lines().filter(|l| !l.trim_start().starts_with('#')))
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn matches(&self, text: &str) -> bool {
        self.pattern.is_match(text)
    }
}

/// Tags records containing a lexicon word as explicit and all others as
/// implicit. Existing styles are kept unless `force` is set.
pub fn heuristic_style_tag(corpus: &Corpus, lexicon: &Lexicon, force: bool) -> Result<Corpus> {
    let records = corpus
        .records()
        .iter()
        .map(|r| {
            let mut r = r.clone();
            if force || r.s.is_none() {
                r.s = Some(if lexicon.matches(&r.text) {
                    Style::Explicit
                } else {
                    Style::Implicit
                });
            }
            r
        })
        .collect();
    Corpus::new(records, corpus.target_names().to_vec())
}
