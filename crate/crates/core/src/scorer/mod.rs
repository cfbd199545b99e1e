//! Masked-LM scoring: a JSON-over-HTTP client for an external scorer and a
//! deterministic in-process mock with the same contract.
//!
//! Both backends sit behind [`ScorerHandle`], which owns the vocabulary the
//! frames were tokenized with, verifies the scorer's vocabulary digest on
//! first use, and validates queries and responses.

mod mock;
mod remote;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::tokenization::{Vocabulary, MASK};

pub use mock::{BiasRule, BiasTable, MockConfig, MockScorer, SuffixPattern};
pub use remote::{RemoteConfig, RemoteScorer};

pub const DEFAULT_CONCURRENCY: usize = 8;

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum ScorerError {
    #[error("scorer unavailable: {0}")]
    ScorerUnavailable(String),
    #[error("vocabulary digest mismatch: local {local}, scorer {remote}")]
    VocabMismatch { local: String, remote: String },
    #[error("candidate {0:?} is not a vocabulary piece")]
    UnknownCandidate(String),
    #[error("layer {layer} outside [1, {depth}]")]
    BadLayer { layer: usize, depth: usize },
    #[error("invalid query: {0}")]
    BadQuery(String),
    #[error("scorer rejected request (HTTP {status}): {message}")]
    Rejected { status: u16, message: String },
    #[error("malformed scorer response: {0}")]
    Protocol(String),
}

/// A pre-tokenized frame with one masked position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskQuery {
    pub tokens: Vec<String>,
    pub mask_index: usize,
    pub candidates: Vec<String>,
}

/// Candidate logits and full-vocabulary softmax probabilities, aligned with
/// the query's candidates. Probabilities are not renormalized over the
/// candidates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskResponse {
    pub logits: Vec<f64>,
    pub probabilities: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenStatesRequest {
    pub tokens: Vec<String>,
    pub layers: Vec<usize>,
}

/// `states[layer][position][dim]`; `layers` holds the 1-based layer indices
/// in the same order as the first axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenStatesResponse {
    pub states: Vec<Vec<Vec<f64>>>,
    #[serde(default)]
    pub layers: Vec<usize>,
    pub dimension: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScorerInfo {
    pub vocab_digest: String,
    pub depth: usize,
    pub dimension: usize,
}

pub enum ScorerKind {
    Remote(RemoteScorer),
    Mock(MockScorer),
}

impl ScorerKind {
    fn info(&self) -> Result<ScorerInfo, ScorerError> {
        match self {
            ScorerKind::Remote(r) => r.info(),
            ScorerKind::Mock(m) => Ok(m.info()),
        }
    }

    fn mask_predict(&self, query: &MaskQuery) -> Result<MaskResponse, ScorerError> {
        match self {
            ScorerKind::Remote(r) => r.mask_predict(query),
            ScorerKind::Mock(m) => Ok(m.mask_predict(query)),
        }
    }

    fn hidden_states(
        &self,
        request: &HiddenStatesRequest,
    ) -> Result<HiddenStatesResponse, ScorerError> {
        match self {
            ScorerKind::Remote(r) => r.hidden_states(request),
            ScorerKind::Mock(m) => Ok(m.hidden_states(request)),
        }
    }
}

/// Once any call in a batch has failed, later calls return that failure
/// instead of going out (and waiting through their own retries).
fn fail_fast<T>(
    first_failure: &OnceLock<ScorerError>,
    call: impl FnOnce() -> Result<T, ScorerError>,
) -> Result<T, ScorerError> {
    if let Some(e) = first_failure.get() {
        return Err(e.clone());
    }
    call().inspect_err(|e| {
        let _ = first_failure.set(e.clone());
    })
}

pub struct ScorerHandle {
    kind: ScorerKind,
    vocab: Arc<Vocabulary>,
    info: OnceLock<ScorerInfo>,
    concurrency: usize,
}

impl ScorerHandle {
    pub fn mock(vocab: Arc<Vocabulary>, config: MockConfig) -> Self {
        let scorer = MockScorer::new(Arc::clone(&vocab), config);
        Self::new(ScorerKind::Mock(scorer), vocab)
    }

    pub fn remote(vocab: Arc<Vocabulary>, config: RemoteConfig) -> Self {
        Self::new(ScorerKind::Remote(RemoteScorer::new(config)), vocab)
    }

    pub fn new(kind: ScorerKind, vocab: Arc<Vocabulary>) -> Self {
        ScorerHandle {
            kind,
            vocab,
            info: OnceLock::new(),
            concurrency: DEFAULT_CONCURRENCY,
        }
    }

    pub fn with_concurrency(mut self, n: usize) -> Self {
        self.concurrency = n.max(1);
        self
    }

    pub fn kind(&self) -> &ScorerKind {
        &self.kind
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn vocab_digest(&self) -> &str {
        self.vocab.digest()
    }

    /// Fetches scorer metadata and checks its vocabulary digest against the
    /// local vocabulary. The result is cached after the first success.
    pub fn handshake(&self) -> Result<ScorerInfo, ScorerError> {
        if let Some(info) = self.info.get() {
            return Ok(info.clone());
        }
        let info = self.kind.info()?;
        if info.vocab_digest != self.vocab.digest() {
            return Err(ScorerError::VocabMismatch {
                local: self.vocab.digest().to_string(),
                remote: info.vocab_digest,
            });
        }
        Ok(self.info.get_or_init(|| info).clone())
    }

    fn check_query(&self, query: &MaskQuery) -> Result<(), ScorerError> {
        if query.tokens.get(query.mask_index).map(String::as_str) != Some(MASK) {
            return Err(ScorerError::BadQuery(format!(
                "position {} is not {MASK}",
                query.mask_index
            )));
        }
        if query.candidates.is_empty() {
            return Err(ScorerError::BadQuery("no candidates".into()));
        }
        if let Some(c) = query.candidates.iter().find(|c| !self.vocab.contains(c)) {
            return Err(ScorerError::UnknownCandidate(c.clone()));
        }
        if let Some(t) = query.tokens.iter().find(|t| !self.vocab.contains(t)) {
            return Err(ScorerError::BadQuery(format!(
                "token {t:?} not in vocabulary"
            )));
        }
        Ok(())
    }

    pub fn score_masked(&self, query: &MaskQuery) -> Result<MaskResponse, ScorerError> {
        self.handshake()?;
        self.check_query(query)?;
        let response = self.kind.mask_predict(query)?;
        let n = query.candidates.len();
        if response.logits.len() != n || response.probabilities.len() != n {
            return Err(ScorerError::Protocol(format!(
                "expected {n} logits and probabilities, got {} and {}",
                response.logits.len(),
                response.probabilities.len()
            )));
        }
        if response
            .logits
            .iter()
            .chain(&response.probabilities)
            .any(|v| !v.is_finite())
        {
            return Err(ScorerError::Protocol("non-finite value".into()));
        }
        Ok(response)
    }

    /// Runs `f` over `items` with up to `concurrency` calls in flight.
    /// Output order matches input order.
    fn parallel_map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync,
    {
        let workers = self.concurrency.min(items.len());
        if workers <= 1 {
            return items.iter().map(f).collect();
        }
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(item) = items.get(i) else { break };
                    let r = f(item);
                    slots.lock().unwrap()[i] = Some(r);
                });
            }
        });
        slots
            .into_inner()
            .unwrap()
            .into_iter()
            .map(|r| r.expect("every slot filled"))
            .collect()
    }

    /// Scores every query, up to `concurrency` in flight at once. Results
    /// come back in submission order.
    pub fn score_batch(&self, queries: &[MaskQuery]) -> Vec<Result<MaskResponse, ScorerError>> {
        if let Err(e) = self.handshake() {
            return queries.iter().map(|_| Err(e.clone())).collect();
        }
        let first_failure = OnceLock::new();
        self.parallel_map(queries, |q| {
            fail_fast(&first_failure, || self.score_masked(q))
        })
    }

    pub fn fetch_hidden_states_batch(
        &self,
        frames: &[Vec<String>],
        layers: &[usize],
    ) -> Vec<Result<HiddenStatesResponse, ScorerError>> {
        if let Err(e) = self.handshake() {
            return frames.iter().map(|_| Err(e.clone())).collect();
        }
        let first_failure = OnceLock::new();
        self.parallel_map(frames, |t| {
            fail_fast(&first_failure, || self.fetch_hidden_states(t, layers))
        })
    }

    pub fn fetch_hidden_states(
        &self,
        tokens: &[String],
        layers: &[usize],
    ) -> Result<HiddenStatesResponse, ScorerError> {
        let info = self.handshake()?;
        if layers.is_empty() {
            return Err(ScorerError::BadQuery("no layers requested".into()));
        }
        if let Some(&layer) = layers.iter().find(|&&l| l == 0 || l > info.depth) {
            return Err(ScorerError::BadLayer {
                layer,
                depth: info.depth,
            });
        }
        if let Some(t) = tokens.iter().find(|t| !self.vocab.contains(t)) {
            return Err(ScorerError::BadQuery(format!(
                "token {t:?} not in vocabulary"
            )));
        }
        let request = HiddenStatesRequest {
            tokens: tokens.to_vec(),
            layers: layers.to_vec(),
        };
        let mut response = self.kind.hidden_states(&request)?;
        response.layers = layers.to_vec();
        let shape_ok = response.states.len() == layers.len()
            && response.states.iter().all(|layer| {
                layer.len() == tokens.len() && layer.iter().all(|v| v.len() == response.dimension)
            });
        if !shape_ok {
            return Err(ScorerError::Protocol(format!(
                "hidden states do not have shape {}x{}x{}",
                layers.len(),
                tokens.len(),
                response.dimension
            )));
        }
        Ok(response)
    }
}
