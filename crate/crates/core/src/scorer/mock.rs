//! Deterministic in-process scorer.
//!
//! Every vocabulary piece gets a logit made of seeded hash noise keyed on
//! (frame, piece) plus an additive bias. Bias rules are keyed on the suffix
//! of the last noun token of the frame and on the candidate piece, so a
//! test can build a scorer whose preferences are known in advance.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{HiddenStatesRequest, HiddenStatesResponse, MaskQuery, MaskResponse, ScorerInfo};
use crate::tokenization::Vocabulary;

pub const MOCK_DEPTH: usize = 12;
pub const MOCK_DIMENSION: usize = 16;

/// Which last-noun-token suffixes a rule applies to. The continuation
/// prefix is stripped before matching.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum SuffixPattern {
    Any,
    EndsWith(String),
    NotEndsWith(String),
}

impl SuffixPattern {
    fn matches(&self, token: Option<&str>) -> bool {
        match (self, token) {
            (SuffixPattern::Any, _) => true,
            (SuffixPattern::EndsWith(s), Some(t)) => t.ends_with(s.as_str()),
            (SuffixPattern::NotEndsWith(s), Some(t)) => !t.ends_with(s.as_str()),
            (_, None) => false,
        }
    }
}

impl fmt::Display for SuffixPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SuffixPattern::Any => f.write_str("*"),
            SuffixPattern::EndsWith(s) => f.write_str(s),
            SuffixPattern::NotEndsWith(s) => write!(f, "!{s}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasRule {
    pub suffix: SuffixPattern,
    pub candidate: String,
    pub delta: f64,
}

/// Noise amplitude plus additive bias rules.
///
/// Textual form (used by `--mock-bias`): comma-separated items, each one of
/// `noise=F`, `PATTERN:PIECE=DELTA` (PATTERN is `*`, a suffix such as `s`,
/// or `!s` for "does not end in s"), or a preset name: `uniform` (no noise,
/// no rules) or `agreement` (+4 to plural articles after tokens ending in
/// `s`, +4 to singular articles otherwise).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasTable {
    pub noise: f64,
    pub rules: Vec<BiasRule>,
}

impl Default for BiasTable {
    fn default() -> Self {
        BiasTable {
            noise: 1.0,
            rules: Vec::new(),
        }
    }
}

const PLURAL_ARTICLES: [&str; 4] = ["los", "las", "unos", "unas"];
const SINGULAR_ARTICLES: [&str; 4] = ["el", "la", "un", "una"];
const AGREEMENT_DELTA: f64 = 4.0;

impl BiasTable {
    /// Zero noise and no rules: every piece gets logit 0.
    pub fn uniform() -> Self {
        BiasTable {
            noise: 0.0,
            rules: Vec::new(),
        }
    }

    /// Unit noise, plural articles boosted after `-s` tokens and singular
    /// articles boosted elsewhere. The boost exceeds the noise range, so
    /// every frame is scored "correctly".
    pub fn agreement() -> Self {
        let mut table = BiasTable::default();
        table.push_agreement_rules();
        table
    }

    fn push_agreement_rules(&mut self) {
        for art in PLURAL_ARTICLES {
            self.rules.push(BiasRule {
                suffix: SuffixPattern::EndsWith("s".into()),
                candidate: art.into(),
                delta: AGREEMENT_DELTA,
            });
        }
        for art in SINGULAR_ARTICLES {
            self.rules.push(BiasRule {
                suffix: SuffixPattern::NotEndsWith("s".into()),
                candidate: art.into(),
                delta: AGREEMENT_DELTA,
            });
        }
    }

    pub fn with_rule(mut self, suffix: SuffixPattern, candidate: &str, delta: f64) -> Self {
        self.rules.push(BiasRule {
            suffix,
            candidate: candidate.into(),
            delta,
        });
        self
    }

    fn bias(&self, last_noun: Option<&str>, piece: &str) -> f64 {
        self.rules
            .iter()
            .filter(|r| r.candidate == piece && r.suffix.matches(last_noun))
            .map(|r| r.delta)
            .sum()
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("bad bias spec item {item:?}: {reason}")]
pub struct BiasSpecError {
    pub item: String,
    pub reason: &'static str,
}

impl FromStr for BiasTable {
    type Err = BiasSpecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut table = BiasTable::default();
        for item in s.split(',').map(str::trim).filter(|i| !i.is_empty()) {
            let err = |reason| BiasSpecError {
                item: item.to_string(),
                reason,
            };
            match item {
                "uniform" => table.noise = 0.0,
                "agreement" => table.push_agreement_rules(),
                _ => {
                    let (lhs, value) = item.rsplit_once('=').ok_or_else(|| err("missing '='"))?;
                    let value: f64 = value.trim().parse().map_err(|_| err("bad number"))?;
                    if !value.is_finite() {
                        return Err(err("non-finite number"));
                    }
                    if lhs.trim() == "noise" {
                        if value < 0.0 {
                            return Err(err("negative noise"));
                        }
                        table.noise = value;
                        continue;
                    }
                    let (pattern, candidate) = lhs
                        .split_once(':')
                        .ok_or_else(|| err("expected PATTERN:PIECE"))?;
                    let candidate = candidate.trim();
                    if candidate.is_empty() {
                        return Err(err("empty piece"));
                    }
                    let suffix = match pattern.trim() {
                        "*" | "" => SuffixPattern::Any,
                        p => match p.strip_prefix('!') {
                            Some(neg) => SuffixPattern::NotEndsWith(neg.into()),
                            None => SuffixPattern::EndsWith(p.into()),
                        },
                    };
                    table.rules.push(BiasRule {
                        suffix,
                        candidate: candidate.into(),
                        delta: value,
                    });
                }
            }
        }
        Ok(table)
    }
}

impl fmt::Display for BiasTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "noise={}", self.noise)?;
        for r in &self.rules {
            write!(f, ",{}:{}={}", r.suffix, r.candidate, r.delta)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockConfig {
    pub seed: u64,
    pub bias: BiasTable,
    pub depth: usize,
    pub dimension: usize,
    /// Reported instead of the real vocabulary digest, to exercise the
    /// handshake mismatch path.
    pub digest_override: Option<String>,
}

impl MockConfig {
    pub fn new(seed: u64) -> Self {
        MockConfig {
            seed,
            bias: BiasTable::default(),
            depth: MOCK_DEPTH,
            dimension: MOCK_DIMENSION,
            digest_override: None,
        }
    }

    pub fn with_bias(mut self, bias: BiasTable) -> Self {
        self.bias = bias;
        self
    }
}

pub struct MockScorer {
    vocab: Arc<Vocabulary>,
    config: MockConfig,
}

// FNV-1a over the frame, with a separator byte between tokens.
fn hash_tokens<S: AsRef<str>>(tokens: &[S]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for t in tokens {
        for &b in t.as_ref().as_bytes().iter().chain(std::iter::once(&0xff)) {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

// Uniform in [-1, 1).
fn unit(key: u64) -> f64 {
    (splitmix(key) >> 11) as f64 / (1u64 << 52) as f64 - 1.0
}

impl MockScorer {
    pub fn new(vocab: Arc<Vocabulary>, config: MockConfig) -> Self {
        MockScorer { vocab, config }
    }

    pub fn config(&self) -> &MockConfig {
        &self.config
    }

    pub fn info(&self) -> ScorerInfo {
        ScorerInfo {
            vocab_digest: self
                .config
                .digest_override
                .clone()
                .unwrap_or_else(|| self.vocab.digest().to_string()),
            depth: self.config.depth,
            dimension: self.config.dimension,
        }
    }

    fn last_noun_token<'a>(&self, query: &'a MaskQuery) -> Option<&'a str> {
        query
            .tokens
            .iter()
            .rev()
            .find(|t| !self.vocab.is_special(t))
            .map(|t| self.vocab.strip_continuation(t))
    }

    fn logit(&self, frame_key: u64, id: u32, piece: &str, last_noun: Option<&str>) -> f64 {
        let noise = if self.config.bias.noise == 0.0 {
            0.0
        } else {
            self.config.bias.noise * unit(frame_key ^ splitmix(u64::from(id)))
        };
        noise + self.config.bias.bias(last_noun, piece)
    }

    pub fn mask_predict(&self, query: &MaskQuery) -> MaskResponse {
        let frame_key = splitmix(self.config.seed) ^ hash_tokens(&query.tokens);
        let last_noun = self.last_noun_token(query);
        let all: Vec<f64> = self
            .vocab
            .pieces()
            .iter()
            .enumerate()
            .map(|(id, piece)| self.logit(frame_key, id as u32, piece, last_noun))
            .collect();
        let max = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_z = max + all.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        let logits: Vec<f64> = query
            .candidates
            .iter()
            .map(|c| all[self.vocab.id(c).expect("candidate checked by handle") as usize])
            .collect();
        let probabilities = logits.iter().map(|l| (l - log_z).exp()).collect();
        MaskResponse {
            logits,
            probabilities,
        }
    }

    /// States are a seeded function of (token, layer) only.
    pub fn hidden_states(&self, request: &HiddenStatesRequest) -> HiddenStatesResponse {
        let seed = splitmix(self.config.seed.wrapping_add(0x5151));
        let states = request
            .layers
            .iter()
            .map(|&layer| {
                request
                    .tokens
                    .iter()
                    .map(|tok| {
                        let key =
                            seed ^ hash_tokens(&[tok]) ^ splitmix(layer as u64).rotate_left(17);
                        (0..self.config.dimension)
                            .map(|d| unit(key ^ splitmix(d as u64 + 1)))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        HiddenStatesResponse {
            states,
            layers: request.layers.clone(),
            dimension: self.config.dimension,
        }
    }
}
