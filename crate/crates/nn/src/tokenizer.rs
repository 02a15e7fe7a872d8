//! Tokenizers mapping text to vocabulary ids with reserved special tokens.

use std::collections::HashMap;
use std::path::Path;

use argqual_core::text::word_tokens;

use crate::error::{NnError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpecialIds {
    pub pad: u32,
    pub unk: u32,
    pub cls: u32,
    pub sep: u32,
}

pub trait Tokenizer: Send + Sync {
    fn encode(&self, text: &str) -> Vec<u32>;
    fn vocab_size(&self) -> usize;
    fn special(&self) -> SpecialIds;
}

/// Word tokens hashed (FNV-1a) into a fixed vocabulary; ids 0..4 are PAD, UNK, CLS, SEP.
#[derive(Debug, Clone)]
pub struct HashingTokenizer {
    vocab_size: usize,
}

const RESERVED: u32 = 4;

impl HashingTokenizer {
    pub fn new(vocab_size: usize) -> Result<Self> {
        if vocab_size <= RESERVED as usize {
            return Err(NnError::Config(format!("hashing vocabulary of {vocab_size} leaves no room for words")));
        }
        Ok(Self { vocab_size })
    }
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

impl Tokenizer for HashingTokenizer {
    fn encode(&self, text: &str) -> Vec<u32> {
        let buckets = (self.vocab_size as u64) - RESERVED as u64;
        word_tokens(text).map(|w| RESERVED + (fnv1a(&w) % buckets) as u32).collect()
    }

    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn special(&self) -> SpecialIds {
        SpecialIds { pad: 0, unk: 1, cls: 2, sep: 3 }
    }
}

/// Greedy longest-match WordPiece over a BERT `vocab.txt`.
#[derive(Debug, Clone)]
pub struct WordPieceTokenizer {
    vocab: HashMap<String, u32>,
    special: SpecialIds,
    lowercase: bool,
    max_chars_per_word: usize,
}

impl WordPieceTokenizer {
    pub fn from_vocab_file(path: &Path, lowercase: bool) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_vocab(text.lines().map(str::to_string), lowercase)
    }

    pub fn from_vocab(tokens: impl IntoIterator<Item = String>, lowercase: bool) -> Result<Self> {
        let vocab: HashMap<String, u32> = tokens.into_iter().enumerate().map(|(i, t)| (t, i as u32)).collect();
        let id = |t: &str| {
            vocab.get(t).copied().ok_or_else(|| NnError::Config(format!("vocabulary lacks {t}")))
        };
        let special = SpecialIds { pad: id("[PAD]")?, unk: id("[UNK]")?, cls: id("[CLS]")?, sep: id("[SEP]")? };
        Ok(Self { vocab, special, lowercase, max_chars_per_word: 100 })
    }

    fn basic_tokens(&self, text: &str) -> Vec<String> {
        let text = if self.lowercase { text.to_lowercase() } else { text.to_string() };
        let mut out = Vec::new();
        for chunk in text.split_whitespace() {
            let mut word = String::new();
            for c in chunk.chars() {
                if c.is_ascii_punctuation() || (!c.is_alphanumeric() && !c.is_whitespace()) {
                    if !word.is_empty() {
                        out.push(std::mem::take(&mut word));
                    }
                    out.push(c.to_string());
                } else {
                    word.push(c);
                }
            }
            if !word.is_empty() {
                out.push(word);
            }
        }
        out
    }

    fn word_pieces(&self, word: &str, out: &mut Vec<u32>) {
        let chars: Vec<char> = word.chars().collect();
        if chars.len() > self.max_chars_per_word {
            out.push(self.special.unk);
            return;
        }
        let mut pieces = Vec::new();
        let mut start = 0;
        while start < chars.len() {
            let mut end = chars.len();
            let mut found = None;
            while start < end {
                let mut piece: String = chars[start..end].iter().collect();
                if start > 0 {
                    piece.insert_str(0, "##");
                }
                if let Some(&id) = self.vocab.get(&piece) {
                    found = Some(id);
                    break;
                }
                end -= 1;
            }
            match found {
                Some(id) => {
                    pieces.push(id);
                    start = end;
                }
                None => {
                    out.push(self.special.unk);
                    return;
                }
            }
        }
        out.extend(pieces);
    }
}

impl Tokenizer for WordPieceTokenizer {
    fn encode(&self, text: &str) -> Vec<u32> {
        let mut ids = Vec::new();
        for w in self.basic_tokens(text) {
            self.word_pieces(&w, &mut ids);
        }
        ids
    }

    fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    fn special(&self) -> SpecialIds {
        self.special
    }
}
