//! Flags, the optional TOML config file, and their merge.
//!
//! Every flag is optional at the clap level so that a value given in the
//! config file can be told apart from a default. Precedence is flag, then
//! config file, then built-in default.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use morphoprobe::digest::sha256_hex;
use morphoprobe::{ArticleType, BiasTable, Variant};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const DEFAULT_LAYERS: [usize; 4] = [9, 10, 11, 12];
pub const DEFAULT_OUT: &str = "morphoprobe_out";

#[derive(Debug, Parser)]
#[command(
    name = "morphoprobe",
    version,
    about = "Tokenization schemes vs. number agreement in masked LMs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Tokenize every plural and label its scheme.
    Classify,
    /// Score article agreement for every noun presentation.
    Probe,
    /// Collect mean noun embeddings for LDA.
    Embed,
    /// Fit regularized LDA to an embedding store and project it.
    Lda,
    /// Regress log frequency on tokenization scheme.
    Freq,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Classify => "classify",
            Command::Probe => "probe",
            Command::Embed => "embed",
            Command::Lda => "lda",
            Command::Freq => "freq",
        }
    }
}

#[derive(Debug, Default, Args)]
pub struct Flags {
    /// WordPiece vocabulary, one piece per line.
    #[arg(long, global = true)]
    pub vocab: Option<PathBuf>,
    /// Noun lexicon TSV.
    #[arg(long, global = true)]
    pub lexicon: Option<PathBuf>,
    /// Base URL of a scorer server.
    #[arg(long, global = true, conflicts_with = "mock_seed")]
    pub scorer_url: Option<String>,
    /// Use the in-process mock scorer with this seed.
    #[arg(long, global = true)]
    pub mock_seed: Option<u64>,
    /// Mock bias spec, e.g. `agreement` or `noise=0.5,s:los=2`.
    #[arg(long, global = true)]
    pub mock_bias: Option<String>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub variants: Option<Vec<String>>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub articles: Option<Vec<String>>,
    /// 1-based encoder layers to average.
    #[arg(long, global = true, value_delimiter = ',')]
    pub layers: Option<Vec<usize>>,
    #[arg(long, global = true)]
    pub shrinkage: Option<f64>,
    /// Scorer requests in flight at once.
    #[arg(long, global = true)]
    pub concurrency: Option<usize>,
    /// Logarithm base for frequencies (input is log10).
    #[arg(long, global = true)]
    pub log_base: Option<f64>,
    /// Embedding store for `lda` (`.bin`, or `.csv`).
    #[arg(long, global = true)]
    pub store: Option<PathBuf>,
    /// Class labels to keep for `lda`.
    #[arg(long, global = true, value_delimiter = ',')]
    pub classes: Option<Vec<String>>,
    /// TOML file with any of the above as `key = value`.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

/// Config file contents. Keys use snake_case flag names.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub vocab: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub scorer_url: Option<String>,
    pub mock_seed: Option<u64>,
    pub mock_bias: Option<String>,
    pub out: Option<PathBuf>,
    pub variants: Option<Vec<String>>,
    pub articles: Option<Vec<String>>,
    pub layers: Option<Vec<usize>>,
    pub shrinkage: Option<f64>,
    pub concurrency: Option<usize>,
    pub log_base: Option<f64>,
    pub store: Option<PathBuf>,
    pub classes: Option<Vec<String>>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        let mut config: FileConfig = toml::from_str(&text)
            .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        // relative paths in the file are relative to the file
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut config.vocab,
            &mut config.lexicon,
            &mut config.out,
            &mut config.store,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScorerChoice {
    Remote { url: String },
    Mock { seed: u64, bias: String },
}

/// Fully resolved run settings.
#[derive(Debug, Clone)]
pub struct Settings {
    pub command: Command,
    pub vocab: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub scorer: Option<ScorerChoice>,
    pub out: PathBuf,
    pub variants: Vec<Variant>,
    pub articles: Vec<ArticleType>,
    pub layers: Vec<usize>,
    pub shrinkage: f64,
    pub concurrency: usize,
    pub log_base: f64,
    pub store: Option<PathBuf>,
    pub classes: Option<Vec<String>>,
}

fn parse_list<T>(
    values: Vec<String>,
    what: &str,
    parse: fn(&str) -> Option<T>,
) -> Result<Vec<T>, CliError> {
    let parsed = values
        .iter()
        .map(|v| parse(v.trim()).ok_or_else(|| CliError::input(format!("unknown {what} {v:?}"))))
        .collect::<Result<Vec<T>, _>>()?;
    if parsed.is_empty() {
        return Err(CliError::input(format!("empty {what} list")));
    }
    Ok(parsed)
}

impl Settings {
    pub fn resolve(command: Command, flags: Flags) -> Result<Self, CliError> {
        let file = match &flags.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        macro_rules! pick {
            ($field:ident) => {
                flags.$field.or(file.$field)
            };
        }

        let mock_bias = pick!(mock_bias);
        let scorer = match (
            flags.scorer_url,
            flags.mock_seed,
            file.scorer_url,
            file.mock_seed,
        ) {
            (Some(url), _, _, _) => Some(ScorerChoice::Remote { url }),
            (None, Some(seed), _, _) => Some(mock_choice(seed, mock_bias)?),
            (None, None, Some(_), Some(_)) => {
                return Err(CliError::input(
                    "config gives both scorer_url and mock_seed; keep one",
                ))
            }
            (None, None, Some(url), None) => Some(ScorerChoice::Remote { url }),
            (None, None, None, Some(seed)) => Some(mock_choice(seed, mock_bias)?),
            (None, None, None, None) => None,
        };

        let variants = match pick!(variants) {
            Some(v) => parse_list(v, "variant", Variant::parse)?,
            None => Variant::ALL.to_vec(),
        };
        let articles = match pick!(articles) {
            Some(v) => parse_list(v, "article type", ArticleType::parse)?,
            None => ArticleType::ALL.to_vec(),
        };
        let layers = pick!(layers).unwrap_or_else(|| DEFAULT_LAYERS.to_vec());
        if layers.is_empty() {
            return Err(CliError::input("empty layer list"));
        }
        let shrinkage = pick!(shrinkage).unwrap_or(morphoprobe::analysis::lda::DEFAULT_SHRINKAGE);
        if !(shrinkage.is_finite() && shrinkage >= 0.0) {
            return Err(CliError::input(format!(
                "shrinkage must be >= 0, got {shrinkage}"
            )));
        }
        let log_base = pick!(log_base).unwrap_or(10.0);
        if !(log_base.is_finite() && log_base > 0.0 && log_base != 1.0) {
            return Err(CliError::input(format!("bad log base {log_base}")));
        }
        let concurrency = pick!(concurrency).unwrap_or(morphoprobe::scorer::DEFAULT_CONCURRENCY);
        if concurrency == 0 {
            return Err(CliError::input("concurrency must be at least 1"));
        }

        Ok(Settings {
            command,
            vocab: pick!(vocab),
            lexicon: pick!(lexicon),
            scorer,
            out: pick!(out).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
            variants,
            articles,
            layers,
            shrinkage,
            concurrency,
            log_base,
            store: pick!(store),
            classes: pick!(classes),
        })
    }

    pub fn vocab_path(&self) -> Result<&Path, CliError> {
        self.vocab
            .as_deref()
            .ok_or_else(|| CliError::input(format!("{} needs --vocab", self.command.name())))
    }

    pub fn lexicon_path(&self) -> Result<&Path, CliError> {
        self.lexicon
            .as_deref()
            .ok_or_else(|| CliError::input(format!("{} needs --lexicon", self.command.name())))
    }

    pub fn store_path(&self) -> Result<&Path, CliError> {
        self.store
            .as_deref()
            .ok_or_else(|| CliError::input("lda needs --store"))
    }

    pub fn scorer_choice(&self) -> Result<&ScorerChoice, CliError> {
        self.scorer.as_ref().ok_or_else(|| {
            CliError::input(format!(
                "{} needs a scorer: --scorer-url or --mock-seed",
                self.command.name()
            ))
        })
    }

    /// Digest of everything that can change the numbers in the outputs.
    /// Inputs enter through their content digests; the output directory and
    /// concurrency are left out.
    pub fn digest(&self, input_digests: &[(&str, &str)]) -> String {
        let mut inputs = serde_json::Map::new();
        for (name, d) in input_digests {
            inputs.insert(name.to_string(), (*d).into());
        }
        let canonical = serde_json::json!({
            "command": self.command.name(),
            "inputs": inputs,
            "scorer": self.scorer,
            "variants": self.variants.iter().map(|v| v.as_str()).collect::<Vec<_>>(),
            "articles": self.articles.iter().map(|a| a.as_str()).collect::<Vec<_>>(),
            "layers": self.layers,
            "shrinkage": self.shrinkage,
            "log_base": self.log_base,
            "classes": self.classes,
        });
        sha256_hex(canonical.to_string().as_bytes())
    }
}

fn mock_choice(seed: u64, bias: Option<String>) -> Result<ScorerChoice, CliError> {
    let table: BiasTable = match bias {
        Some(spec) => spec.parse().map_err(|e| CliError::input(format!("{e}")))?,
        None => BiasTable::default(),
    };
    Ok(ScorerChoice::Mock {
        seed,
        bias: table.to_string(),
    })
}
