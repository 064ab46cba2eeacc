//! Word-level tokenizer for the toy model.
//!
//! Text is split into tokens made of any leading whitespace plus either a run
//! of word characters or a single punctuation character, so the tokens tile
//! the text exactly. Each token's word is lowercased and looked up in a fixed
//! table; every vignette word is exactly one token.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Words of the vignette frame, most frequent first. Ids follow this order,
/// which places them at the head of the corpus' Zipf distribution.
pub const FRAME_WORDS: &[&str] = &[
    ",", ".", "the", "a", "of", "and", "she", ":", "had", "read", "when", "after", "list",
    "words", "again", "back", "got", "took", "mary", "meeting", "break", "cup", "coffee",
];

/// First id assigned to nouns in the built-in table.
pub const NOUN_BASE_ID: u32 = 96;

const BUILTIN_NOUNS: &str = include_str!("../../data/toy_nouns.txt");

/// Nouns known to the built-in toy table, in id order.
pub fn builtin_nouns() -> Vec<&'static str> {
    BUILTIN_NOUNS
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToyVocab {
    words: BTreeMap<String, u32>,
}

/// One token of split text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Piece<'a> {
    pub start: usize,
    pub end: usize,
    /// The token without its leading whitespace.
    pub word: &'a str,
}

impl ToyVocab {
    pub fn new(words: BTreeMap<String, u32>) -> Self {
        Self { words }
    }

    /// Frame words at ids `0..`, built-in nouns from [`NOUN_BASE_ID`]; nouns
    /// whose id would not fit in `vocab_size` are left out.
    pub fn builtin(vocab_size: usize) -> Result<Self> {
        if vocab_size < FRAME_WORDS.len() {
            return Err(Error::Toy(format!(
                "vocab of {vocab_size} cannot hold the {} frame words",
                FRAME_WORDS.len()
            )));
        }
        let mut words = BTreeMap::new();
        for (i, w) in FRAME_WORDS.iter().enumerate() {
            words.insert(w.to_string(), i as u32);
        }
        for (i, w) in builtin_nouns().into_iter().enumerate() {
            let id = NOUN_BASE_ID + i as u32;
            if (id as usize) < vocab_size {
                words.insert(w.to_string(), id);
            }
        }
        Ok(Self { words })
    }

    pub fn id(&self, word: &str) -> Option<u32> {
        self.words.get(&word.to_lowercase()).copied()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.id(word).is_some()
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Nouns in the table (everything except frame words), in id order.
    pub fn nouns(&self) -> Vec<String> {
        let mut v: Vec<(&String, &u32)> = self
            .words
            .iter()
            .filter(|(w, _)| !FRAME_WORDS.contains(&w.as_str()))
            .collect();
        v.sort_by_key(|(_, &id)| id);
        v.into_iter().map(|(w, _)| w.clone()).collect()
    }

    /// Splits and maps `text` to ids. Fails on the first unknown word.
    pub fn encode<'a>(&self, text: &'a str) -> Result<Vec<(u32, Piece<'a>)>> {
        split(text)?
            .into_iter()
            .map(|p| {
                self.id(p.word)
                    .map(|id| (id, p.clone()))
                    .ok_or_else(|| Error::Toy(format!("out-of-vocabulary word {:?}", p.word)))
            })
            .collect()
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '\'' || c == '-' || c == '_'
}

/// Splits `text` into tiling pieces. Trailing whitespace joins the last piece.
pub fn split(text: &str) -> Result<Vec<Piece<'_>>> {
    let mut pieces = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some(&(start, _)) = chars.peek() {
        while chars.peek().is_some_and(|&(_, c)| c.is_whitespace()) {
            chars.next();
        }
        let Some(&(word_start, c)) = chars.peek() else {
            match pieces.last_mut() {
                Some(Piece { end, .. }) => *end = text.len(),
                None => return Err(Error::Toy("text contains no tokens".into())),
            }
            break;
        };
        chars.next();
        if is_word_char(c) {
            while chars.peek().is_some_and(|&(_, c)| is_word_char(c)) {
                chars.next();
            }
        }
        let end = chars.peek().map_or(text.len(), |&(i, _)| i);
        pieces.push(Piece {
            start,
            end,
            word: &text[word_start..end],
        });
    }
    if pieces.is_empty() {
        return Err(Error::Toy("text contains no tokens".into()));
    }
    Ok(pieces)
}
