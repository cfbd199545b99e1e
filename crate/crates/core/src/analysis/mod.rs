//! Numerical analyses over probe results and noun embeddings.

pub mod embedding;
pub mod lda;
pub mod ols;
pub mod stats;

use std::io;

pub use embedding::{mean_embedding, EmbeddingRecord};
pub use lda::{lda_fit, lda_project, LdaModel};
pub use ols::{freq_by_scheme, logodds_regression, ols_fit, Design, RegressionSummary};
pub use stats::{grouped_summary, GroupKey, SummaryStats};

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("degenerate classes: {0}")]
    DegenerateClasses(String),
    #[error("bad input: {0}")]
    BadInput(String),
    #[error("within-class scatter is singular; use a positive shrinkage")]
    SingularScatter,
    #[error("design is rank deficient at term {0:?}")]
    RankDeficient(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("no frequency data")]
    NoFrequencyData,
    #[error("empty position selection")]
    EmptySelection,
    #[error("bad embedding store: {0}")]
    BadStore(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl AnalysisError {
    /// True for errors that come from the data's statistics rather than
    /// from malformed input or I/O.
    pub fn is_degenerate(&self) -> bool {
        matches!(
            self,
            AnalysisError::DegenerateClasses(_)
                | AnalysisError::SingularScatter
                | AnalysisError::RankDeficient(_)
                | AnalysisError::InsufficientData(_)
                | AnalysisError::NoFrequencyData
        )
    }
}
