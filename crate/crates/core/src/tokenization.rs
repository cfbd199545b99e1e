//! WordPiece vocabulary, greedy longest-match-first segmentation, and
//! tokenization-scheme classification of plural nouns.
//!
//! A plural is *morphemic* when its token sequence has a boundary exactly at
//! the lemma/affix split and the affix is one continuation piece
//! (`naranja ##s`). Multi-piece lemma portions are allowed
//! (`patr ##ono ##s`). Any other multi-token split is *non-morphemic*
//! (`neuro ##nas`).

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::digest::sha256_hex;
use crate::lexicon::NounEntry;

pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const MASK: &str = "[MASK]";
pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const SPECIAL_PIECES: [&str; 5] = [CLS, SEP, MASK, PAD, UNK];

pub const DEFAULT_CONTINUATION_PREFIX: &str = "##";
pub const DEFAULT_MAX_WORD_CHARS: usize = 100;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum TokenizationError {
    #[error("duplicate vocabulary piece {piece:?} on line {line}")]
    DuplicatePiece { piece: String, line: usize },
    #[error("vocabulary is missing special piece {0}")]
    MissingSpecial(String),
    #[error("empty vocabulary piece on line {0}")]
    EmptyPiece(usize),
    #[error("vocabulary has no affix piece {0:?}")]
    MissingAffixPiece(String),
    #[error("lemma {0:?} tokenizes to the unknown piece")]
    UnkLemma(String),
}

/// Token inventory. Line order in the vocab file is the id order.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    pieces: Vec<String>,
    ids: HashMap<String, u32>,
    continuation_prefix: String,
    unk_piece: String,
    max_word_chars: usize,
    max_piece_chars: usize,
    digest: String,
}

impl Vocabulary {
    pub fn from_pieces<I, S>(pieces: I) -> Result<Self, TokenizationError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let pieces: Vec<String> = pieces.into_iter().map(Into::into).collect();
        let mut ids = HashMap::with_capacity(pieces.len());
        for (i, p) in pieces.iter().enumerate() {
            if p.is_empty() {
                return Err(TokenizationError::EmptyPiece(i + 1));
            }
            if ids.insert(p.clone(), i as u32).is_some() {
                return Err(TokenizationError::DuplicatePiece {
                    piece: p.clone(),
                    line: i + 1,
                });
            }
        }
        for special in SPECIAL_PIECES {
            if !ids.contains_key(special) {
                return Err(TokenizationError::MissingSpecial(special.to_string()));
            }
        }
        let max_piece_chars = pieces.iter().map(|p| p.chars().count()).max().unwrap_or(0);
        let mut canonical = String::new();
        for p in &pieces {
            canonical.push_str(p);
            canonical.push('\n');
        }
        Ok(Vocabulary {
            digest: sha256_hex(canonical.as_bytes()),
            pieces,
            ids,
            continuation_prefix: DEFAULT_CONTINUATION_PREFIX.to_string(),
            unk_piece: UNK.to_string(),
            max_word_chars: DEFAULT_MAX_WORD_CHARS,
            max_piece_chars,
        })
    }

    pub fn with_max_word_chars(mut self, n: usize) -> Self {
        self.max_word_chars = n;
        self
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn id(&self, piece: &str) -> Option<u32> {
        self.ids.get(piece).copied()
    }

    pub fn piece(&self, id: u32) -> Option<&str> {
        self.pieces.get(id as usize).map(String::as_str)
    }

    pub fn contains(&self, piece: &str) -> bool {
        self.ids.contains_key(piece)
    }

    pub fn pieces(&self) -> &[String] {
        &self.pieces
    }

    pub fn continuation_prefix(&self) -> &str {
        &self.continuation_prefix
    }

    pub fn unk_piece(&self) -> &str {
        &self.unk_piece
    }

    pub fn max_word_chars(&self) -> usize {
        self.max_word_chars
    }

    pub fn is_special(&self, piece: &str) -> bool {
        SPECIAL_PIECES.contains(&piece)
    }

    /// SHA-256 over the pieces, each followed by `\n`. A vocab file with a
    /// trailing newline hashes to the same value as the file itself.
    pub fn digest(&self) -> &str {
        &self.digest
    }

    /// Piece text with the continuation prefix removed, if present.
    pub fn strip_continuation<'a>(&self, piece: &'a str) -> &'a str {
        piece
            .strip_prefix(self.continuation_prefix.as_str())
            .unwrap_or(piece)
    }

    /// Reassembles a word: the first token as-is, later tokens without
    /// their continuation prefix.
    pub fn surfaces<S: AsRef<str>>(&self, tokens: &[S]) -> String {
        let mut out = String::new();
        for (i, t) in tokens.iter().enumerate() {
            let t = t.as_ref();
            out.push_str(if i == 0 {
                t
            } else {
                self.strip_continuation(t)
            });
        }
        out
    }

    pub fn ids_of<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<u32> {
        tokens
            .iter()
            .map(|t| {
                self.id(t.as_ref())
                    .or_else(|| self.id(&self.unk_piece))
                    .expect("unk piece present")
            })
            .collect()
    }
}

pub fn load_vocab(text: &str) -> Result<Vocabulary, TokenizationError> {
    Vocabulary::from_pieces(text.lines().map(|l| l.strip_suffix('\r').unwrap_or(l)))
}

/// Greedy longest-match-first WordPiece segmentation of one word.
///
/// If no piece matches at some position the whole word becomes the unknown
/// piece, as does any word longer than `max_word_chars`.
pub fn tokenize(word: &str, vocab: &Vocabulary) -> Vec<String> {
    let chars: Vec<(usize, char)> = word.char_indices().collect();
    if chars.is_empty() || chars.len() > vocab.max_word_chars {
        return vec![vocab.unk_piece.clone()];
    }
    let byte_at = |i: usize| chars.get(i).map_or(word.len(), |(b, _)| *b);

    let mut tokens = Vec::new();
    let mut start = 0;
    let mut candidate = String::new();
    while start < chars.len() {
        let mut end = chars.len().min(start + vocab.max_piece_chars);
        let mut found = None;
        while end > start {
            candidate.clear();
            if start > 0 {
                candidate.push_str(&vocab.continuation_prefix);
            }
            candidate.push_str(&word[byte_at(start)..byte_at(end)]);
            if vocab.ids.contains_key(&candidate) {
                found = Some(candidate.clone());
                break;
            }
            end -= 1;
        }
        match found {
            Some(piece) => {
                tokens.push(piece);
                start = end;
            }
            None => return vec![vocab.unk_piece.clone()],
        }
    }
    tokens
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    SingleToken,
    Morphemic,
    NonMorphemic,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::SingleToken, Scheme::Morphemic, Scheme::NonMorphemic];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::SingleToken => "single_token",
            Scheme::Morphemic => "morphemic",
            Scheme::NonMorphemic => "non_morphemic",
        }
    }

    pub fn parse(s: &str) -> Option<Scheme> {
        Scheme::ALL.into_iter().find(|v| v.as_str() == s)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Original,
    Artificial,
}

impl Variant {
    pub const ALL: [Variant; 2] = [Variant::Original, Variant::Artificial];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Original => "original",
            Variant::Artificial => "artificial",
        }
    }

    pub fn parse(s: &str) -> Option<Variant> {
        Variant::ALL.into_iter().find(|v| v.as_str() == s)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizationRecord {
    pub word: String,
    pub tokens: Vec<String>,
    pub token_ids: Vec<u32>,
    pub scheme: Scheme,
    pub variant: Variant,
    pub contains_unk: bool,
}

impl TokenizationRecord {
    pub fn joined_tokens(&self) -> String {
        self.tokens.join("|")
    }
}

/// Tokenizes `entry.plural` and labels the split.
pub fn classify_scheme(entry: &NounEntry, vocab: &Vocabulary) -> TokenizationRecord {
    let tokens = tokenize(&entry.plural, vocab);
    let contains_unk = tokens.iter().any(|t| t == vocab.unk_piece());
    let scheme = if tokens.len() == 1 && !contains_unk {
        Scheme::SingleToken
    } else if !contains_unk && is_morphemic_split(&tokens, entry, vocab) {
        Scheme::Morphemic
    } else {
        Scheme::NonMorphemic
    };
    TokenizationRecord {
        word: entry.plural.clone(),
        token_ids: vocab.ids_of(&tokens),
        tokens,
        scheme,
        variant: Variant::Original,
        contains_unk,
    }
}

fn is_morphemic_split(tokens: &[String], entry: &NounEntry, vocab: &Vocabulary) -> bool {
    let Some((last, lemma_part)) = tokens.split_last() else {
        return false;
    };
    if lemma_part.is_empty() {
        return false;
    }
    let affix_piece = format!("{}{}", vocab.continuation_prefix(), entry.affix.surface());
    *last == affix_piece && vocab.surfaces(lemma_part) == entry.lemma
}

/// Lemma tokens followed by the affix continuation piece (`mujer ##es`).
pub fn artificial_tokenize(
    entry: &NounEntry,
    vocab: &Vocabulary,
) -> Result<TokenizationRecord, TokenizationError> {
    let affix_piece = format!("{}{}", vocab.continuation_prefix(), entry.affix.surface());
    if !vocab.contains(&affix_piece) {
        return Err(TokenizationError::MissingAffixPiece(affix_piece));
    }
    let mut tokens = tokenize(&entry.lemma, vocab);
    if tokens.iter().any(|t| t == vocab.unk_piece()) {
        return Err(TokenizationError::UnkLemma(entry.lemma.clone()));
    }
    tokens.push(affix_piece);
    Ok(TokenizationRecord {
        word: entry.plural.clone(),
        token_ids: vocab.ids_of(&tokens),
        tokens,
        scheme: Scheme::Morphemic,
        variant: Variant::Artificial,
        contains_unk: false,
    })
}
