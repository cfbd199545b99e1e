use std::fmt;
use std::process::ExitCode;

use morphoprobe::pipeline::EmbedError;
use morphoprobe::{AnalysisError, LexiconError, ProbeError, ScorerError, TokenizationError};

/// Exit status classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Class {
    /// Bad flags, config, or input files.
    Input,
    /// Scorer unreachable or misbehaving.
    Scorer,
    /// The data do not support the requested statistic.
    Degenerate,
}

#[derive(Debug)]
pub struct CliError {
    pub class: Class,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        CliError {
            class: Class::Input,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self.class {
            Class::Input => 2,
            Class::Scorer => 3,
            Class::Degenerate => 4,
        })
    }

    /// Prefixes the message with what was being done.
    pub fn context(mut self, what: impl fmt::Display) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn with_class(class: Class, e: impl fmt::Display) -> CliError {
    CliError {
        class,
        message: e.to_string(),
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        with_class(Class::Input, e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        with_class(Class::Input, e)
    }
}

impl From<LexiconError> for CliError {
    fn from(e: LexiconError) -> Self {
        with_class(Class::Input, e)
    }
}

impl From<TokenizationError> for CliError {
    fn from(e: TokenizationError) -> Self {
        with_class(Class::Input, e)
    }
}

impl From<ScorerError> for CliError {
    fn from(e: ScorerError) -> Self {
        let class = match e {
            ScorerError::ScorerUnavailable(_)
            | ScorerError::Rejected { .. }
            | ScorerError::Protocol(_) => Class::Scorer,
            // the local vocabulary or flags are wrong, not the transport
            ScorerError::VocabMismatch { .. }
            | ScorerError::UnknownCandidate(_)
            | ScorerError::BadLayer { .. }
            | ScorerError::BadQuery(_) => Class::Input,
        };
        with_class(class, e)
    }
}

impl From<ProbeError> for CliError {
    fn from(e: ProbeError) -> Self {
        match e {
            ProbeError::Scorer { source, completed } => {
                CliError::from(source).context(format!("after {completed} probes"))
            }
            ProbeError::DegenerateDistribution(_) => with_class(Class::Scorer, e),
            ProbeError::NoResults => with_class(Class::Degenerate, e),
            _ => with_class(Class::Input, e),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        let class = if e.is_degenerate() {
            Class::Degenerate
        } else {
            Class::Input
        };
        with_class(class, e)
    }
}

impl From<EmbedError> for CliError {
    fn from(e: EmbedError) -> Self {
        match e {
            EmbedError::Probe(e) => e.into(),
            EmbedError::Scorer(e) => e.into(),
            EmbedError::Analysis(e) => e.into(),
        }
    }
}
