//! Token vocabulary: `UNK`, one entry per number mask, then frequent words.

use std::collections::{BTreeMap, HashMap};

use mtree_core::dataset::mask_token;
use serde::{Deserialize, Serialize};

pub const UNK: &str = "UNK";

#[derive(Debug, Clone, PartialEq)]
pub struct TokenVocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl TokenVocab {
    /// Keeps the `max_words` most frequent non-mask tokens (ties broken
    /// lexicographically) plus `NUM_0..NUM_{masks-1}`.
    pub fn build<'a>(
        sequences: impl IntoIterator<Item = &'a [String]>,
        masks: usize,
        max_words: usize,
    ) -> Self {
        let mask_set: Vec<String> = (0..masks).map(mask_token).collect();
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for seq in sequences {
            for tok in seq {
                if !tok.starts_with("NUM_") {
                    *counts.entry(tok.as_str()).or_default() += 1;
                }
            }
        }
        let mut words: Vec<(&str, usize)> = counts.into_iter().collect();
        words.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let tokens = std::iter::once(UNK.to_string())
            .chain(mask_set)
            .chain(
                words
                    .into_iter()
                    .take(max_words)
                    .map(|(w, _)| w.to_string()),
            )
            .collect();
        Self::from_tokens(tokens)
    }

    fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(0)
    }

    pub fn ids(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }
}

impl Serialize for TokenVocab {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.tokens.serialize(s)
    }
}

impl<'de> Deserialize<'de> for TokenVocab {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let tokens = Vec::<String>::deserialize(d)?;
        if tokens.first().map(String::as_str) != Some(UNK) {
            return Err(serde::de::Error::custom(
                "token vocabulary must start with UNK",
            ));
        }
        Ok(Self::from_tokens(tokens))
    }
}
