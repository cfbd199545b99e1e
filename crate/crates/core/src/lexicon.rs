//! Annotated noun lexicon and the Spanish plural affix rule.
//!
//! The lexicon is a TSV file with the header
//! `lemma plural gender affix log_frequency` (tab-separated). Every row is lowercased and
//! NFC-normalized, then checked against the regular affix rule: vowel-final
//! lemmas take `-s`, everything else takes `-es`. Rows that break the rule
//! (stem alternations such as `luz`/`luces`) or are badly shaped are not
//! fatal; they are returned on a rejects list with their line number.

use std::collections::HashSet;
use std::fmt;
use std::io;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::digest::sha256_hex;

pub const LEXICON_HEADER: [&str; 5] = ["lemma", "plural", "gender", "affix", "log_frequency"];

#[derive(Debug, thiserror::Error)]
pub enum LexiconError {
    #[error("invalid lemma {0:?}: final character is not a letter")]
    InvalidLemma(String),
    #[error("lexicon format error: {0}")]
    FormatError(String),
    #[error("duplicate entry ({lemma}, {plural}) on line {line}")]
    DuplicateEntry {
        lemma: String,
        plural: String,
        line: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Masculine,
    Feminine,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Masculine => "m",
            Gender::Feminine => "f",
        }
    }

    fn parse(s: &str) -> Option<Gender> {
        match s.to_lowercase().as_str() {
            "m" | "masc" | "masculine" => Some(Gender::Masculine),
            "f" | "fem" | "feminine" => Some(Gender::Feminine),
            _ => None,
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Plural suffix class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Affix {
    S,
    ES,
}

impl Affix {
    /// Surface string appended to the lemma.
    pub fn surface(self) -> &'static str {
        match self {
            Affix::S => "s",
            Affix::ES => "es",
        }
    }

    fn parse(s: &str) -> Option<Affix> {
        match s.to_lowercase().as_str() {
            "s" | "-s" => Some(Affix::S),
            "es" | "-es" => Some(Affix::ES),
            _ => None,
        }
    }
}

impl fmt::Display for Affix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.surface())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NounEntry {
    pub lemma: String,
    pub plural: String,
    pub gender: Gender,
    pub affix: Affix,
    /// log10 occurrences per million, if known.
    pub log_frequency: Option<f64>,
}

impl NounEntry {
    pub fn new(lemma: &str, plural: &str, gender: Gender, affix: Affix) -> Self {
        NounEntry {
            lemma: lemma.to_string(),
            plural: plural.to_string(),
            gender,
            affix,
            log_frequency: None,
        }
    }

    pub fn with_log_frequency(mut self, log_frequency: f64) -> Self {
        self.log_frequency = Some(log_frequency);
        self
    }
}

/// Vowels for the affix rule. Accented vowels and `ü` count.
pub fn is_vowel(c: char) -> bool {
    matches!(
        c,
        'a' | 'e' | 'i' | 'o' | 'u' | 'á' | 'é' | 'í' | 'ó' | 'ú' | 'ü'
    )
}

/// The regular plural affix for `lemma`: `S` after a vowel, `ES` otherwise.
pub fn expected_affix(lemma: &str) -> Result<Affix, LexiconError> {
    let last = lemma
        .nfc()
        .flat_map(char::to_lowercase)
        .last()
        .ok_or_else(|| LexiconError::InvalidLemma(lemma.to_string()))?;
    if !last.is_alphabetic() {
        return Err(LexiconError::InvalidLemma(lemma.to_string()));
    }
    Ok(if is_vowel(last) { Affix::S } else { Affix::ES })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Validation {
    Ok,
    Irregular(String),
    Malformed(String),
}

impl Validation {
    pub fn is_ok(&self) -> bool {
        matches!(self, Validation::Ok)
    }
}

pub fn validate_entry(entry: &NounEntry) -> Validation {
    for (name, value) in [("lemma", &entry.lemma), ("plural", &entry.plural)] {
        if value.is_empty() {
            return Validation::Malformed(format!("empty {name}"));
        }
        if value.chars().any(char::is_whitespace) {
            return Validation::Malformed(format!("whitespace in {name}"));
        }
    }
    if !entry.lemma.chars().all(char::is_alphabetic) {
        return Validation::Malformed("lemma contains non-letters".to_string());
    }
    let regular = format!("{}{}", entry.lemma, entry.affix.surface());
    if regular != entry.plural {
        return Validation::Irregular(format!(
            "{} + {} != {}",
            entry.lemma, entry.affix, entry.plural
        ));
    }
    match expected_affix(&entry.lemma) {
        Ok(affix) if affix == entry.affix => Validation::Ok,
        Ok(affix) => Validation::Irregular(format!(
            "annotated affix -{} but rule gives -{}",
            entry.affix, affix
        )),
        Err(e) => Validation::Malformed(e.to_string()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lexicon {
    pub entries: Vec<NounEntry>,
    pub source_digest: String,
}

impl Lexicon {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, NounEntry> {
        self.entries.iter()
    }

    pub fn has_frequencies(&self) -> bool {
        self.entries.iter().any(|e| e.log_frequency.is_some())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectKind {
    Irregular,
    Malformed,
}

impl RejectKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectKind::Irregular => "irregular",
            RejectKind::Malformed => "malformed",
        }
    }
}

/// A row that did not make it into the lexicon.
#[derive(Debug, Clone, PartialEq)]
pub struct Reject {
    /// 1-based line number in the input file (the header is line 1).
    pub row: usize,
    pub lemma: String,
    pub plural: String,
    pub kind: RejectKind,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct ParsedLexicon {
    pub lexicon: Lexicon,
    pub rejects: Vec<Reject>,
}

fn normalize(field: &str) -> String {
    field.nfc().flat_map(char::to_lowercase).collect()
}

pub fn parse_lexicon(text: &str) -> Result<ParsedLexicon, LexiconError> {
    let source_digest = sha256_hex(text.as_bytes());
    let mut lines = text.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, l)) if l.trim().is_empty() => continue,
            Some((_, l)) => break l.trim_end_matches('\r'),
            None => return Err(LexiconError::FormatError("missing header".into())),
        }
    };
    let cols: Vec<&str> = header.split('\t').map(str::trim).collect();
    // the frequency column is optional
    if cols != LEXICON_HEADER && cols != LEXICON_HEADER[..4] {
        return Err(LexiconError::FormatError(format!(
            "expected header {:?}, found {:?}",
            LEXICON_HEADER.join("\t"),
            header
        )));
    }

    let mut entries = Vec::new();
    let mut rejects = Vec::new();
    let mut seen = HashSet::new();
    for (idx, raw) in lines {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            continue;
        }
        let row = idx + 1;
        let fields: Vec<&str> = line.split('\t').collect();
        let lemma = normalize(fields[0]);
        let plural = fields.get(1).map(|s| normalize(s)).unwrap_or_default();
        let mut reject = |kind, detail: String| {
            rejects.push(Reject {
                row,
                lemma: lemma.clone(),
                plural: plural.clone(),
                kind,
                detail,
            })
        };
        if fields.len() != 4 && fields.len() != 5 {
            reject(
                RejectKind::Malformed,
                format!("expected 5 columns, found {}", fields.len()),
            );
            continue;
        }
        let Some(gender) = Gender::parse(fields[2].trim()) else {
            reject(RejectKind::Malformed, format!("bad gender {:?}", fields[2]));
            continue;
        };
        let Some(affix) = Affix::parse(fields[3].trim()) else {
            reject(RejectKind::Malformed, format!("bad affix {:?}", fields[3]));
            continue;
        };
        let freq_field = fields.get(4).map(|s| s.trim()).unwrap_or("");
        let log_frequency = if freq_field.is_empty() || freq_field.eq_ignore_ascii_case("na") {
            None
        } else {
            match freq_field.parse::<f64>() {
                Ok(v) if v.is_finite() => Some(v),
                _ => {
                    reject(
                        RejectKind::Malformed,
                        format!("bad log_frequency {freq_field:?}"),
                    );
                    continue;
                }
            }
        };
        let entry = NounEntry {
            lemma: lemma.clone(),
            plural: plural.clone(),
            gender,
            affix,
            log_frequency,
        };
        match validate_entry(&entry) {
            Validation::Ok => {
                if !seen.insert((lemma.clone(), plural.clone())) {
                    return Err(LexiconError::DuplicateEntry {
                        lemma,
                        plural,
                        line: row,
                    });
                }
                entries.push(entry);
            }
            Validation::Irregular(d) => reject(RejectKind::Irregular, d),
            Validation::Malformed(d) => reject(RejectKind::Malformed, d),
        }
    }

    Ok(ParsedLexicon {
        lexicon: Lexicon {
            entries,
            source_digest,
        },
        rejects,
    })
}

/// Writes rejects as CSV `row,lemma,plural,reason`.
pub fn write_rejects<W: io::Write>(rejects: &[Reject], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["row", "lemma", "plural", "reason"])?;
    for r in rejects {
        w.write_record([
            r.row.to_string(),
            r.lemma.clone(),
            r.plural.clone(),
            format!("{}: {}", r.kind.as_str(), r.detail),
        ])?;
    }
    w.flush()?;
    Ok(())
}
