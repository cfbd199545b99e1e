//! Measures how subword tokenization of plural nouns relates to a masked
//! language model's number agreement.
//!
//! The crate classifies plural tokenizations (single-token, morphemic,
//! non-morphemic), builds artificial morpheme-aligned tokenizations, scores
//! masked-article frames through a scorer backend, and analyzes the results
//! with OLS and regularized LDA.

pub mod analysis;
pub mod digest;
pub mod lexicon;
pub mod linalg;
pub mod pipeline;
pub mod probe;
pub mod scorer;
pub mod tokenization;

pub use analysis::{
    freq_by_scheme, grouped_summary, lda_fit, lda_project, logodds_regression, mean_embedding,
    ols_fit, AnalysisError, Design, EmbeddingRecord, GroupKey, LdaModel, RegressionSummary,
    SummaryStats,
};
pub use lexicon::{
    expected_affix, parse_lexicon, validate_entry, Affix, Gender, Lexicon, LexiconError, NounEntry,
    Validation,
};
pub use probe::{
    accuracy_table, build_frame, log_odds, run_probe, AccuracyTable, ArticleSet, ArticleType,
    Number, ProbeError, ProbeOptions, ProbeResult,
};
pub use scorer::{
    BiasTable, HiddenStatesResponse, MaskQuery, MaskResponse, MockConfig, RemoteConfig,
    ScorerError, ScorerHandle, ScorerInfo,
};
pub use tokenization::{
    artificial_tokenize, classify_scheme, load_vocab, tokenize, Scheme, TokenizationError,
    TokenizationRecord, Variant, Vocabulary,
};
