//! Masked-article probing.
//!
//! Each noun wordform is placed in the frame `[CLS] [MASK] noun… [SEP]` and
//! the scorer is asked for the plural and singular article of the noun's
//! gender at the mask. The log-odds `ln P(plural) − ln P(singular)` is
//! positive when the model leans plural.

use std::collections::BTreeSet;
use std::fmt;
use std::io;

use serde::{Deserialize, Serialize};

use crate::analysis::stats::mean_sd;
use crate::lexicon::{Gender, Lexicon, NounEntry};
use crate::scorer::{MaskQuery, MaskResponse, ScorerError, ScorerHandle};
use crate::tokenization::{
    artificial_tokenize, classify_scheme, tokenize, Scheme, TokenizationError, Variant, Vocabulary,
    CLS, MASK, SEP,
};

/// Results are handed to the sink in chunks of this many probes.
pub const FLUSH_EVERY: usize = 500;

pub const RESULTS_HEADER: [&str; 8] = [
    "lemma",
    "wordform",
    "number",
    "scheme",
    "variant",
    "article_type",
    "log_odds",
    "correct",
];

#[derive(Debug, thiserror::Error)]
pub enum ProbeError {
    #[error("noun tokens are empty or contain a special piece: {0:?}")]
    BadNounTokens(Vec<String>),
    #[error("non-positive probability {0} in scorer response")]
    DegenerateDistribution(f64),
    #[error("index {0} out of range for response")]
    BadIndex(usize),
    #[error("article {0:?} is not a single vocabulary piece")]
    MissingArticle(String),
    #[error("no probe results")]
    NoResults,
    #[error("scorer failed after {completed} probes: {source}")]
    Scorer {
        completed: usize,
        #[source]
        source: ScorerError,
    },
    #[error(transparent)]
    Tokenization(#[from] TokenizationError),
    #[error("results I/O: {0}")]
    Io(#[from] io::Error),
    #[error("results CSV: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArticleType {
    Definite,
    Indefinite,
}

impl ArticleType {
    pub const ALL: [ArticleType; 2] = [ArticleType::Definite, ArticleType::Indefinite];

    pub fn as_str(self) -> &'static str {
        match self {
            ArticleType::Definite => "definite",
            ArticleType::Indefinite => "indefinite",
        }
    }

    pub fn parse(s: &str) -> Option<ArticleType> {
        ArticleType::ALL.into_iter().find(|a| a.as_str() == s)
    }
}

impl fmt::Display for ArticleType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Number {
    Singular,
    Plural,
}

impl Number {
    pub fn as_str(self) -> &'static str {
        match self {
            Number::Singular => "singular",
            Number::Plural => "plural",
        }
    }

    pub fn parse(s: &str) -> Option<Number> {
        match s {
            "singular" => Some(Number::Singular),
            "plural" => Some(Number::Plural),
            _ => None,
        }
    }
}

impl fmt::Display for Number {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArticleSet {
    pub gender: Gender,
    pub article_type: ArticleType,
    pub singular: &'static str,
    pub plural: &'static str,
}

impl ArticleSet {
    pub fn new(gender: Gender, article_type: ArticleType) -> Self {
        let (singular, plural) = match (gender, article_type) {
            (Gender::Masculine, ArticleType::Definite) => ("el", "los"),
            (Gender::Feminine, ArticleType::Definite) => ("la", "las"),
            (Gender::Masculine, ArticleType::Indefinite) => ("un", "unos"),
            (Gender::Feminine, ArticleType::Indefinite) => ("una", "unas"),
        };
        ArticleSet {
            gender,
            article_type,
            singular,
            plural,
        }
    }

    pub fn check(&self, vocab: &Vocabulary) -> Result<(), ProbeError> {
        for a in [self.singular, self.plural] {
            if !vocab.contains(a) {
                return Err(ProbeError::MissingArticle(a.to_string()));
            }
        }
        Ok(())
    }
}

/// `[CLS] [MASK] noun… [SEP]` with the mask at position 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub tokens: Vec<String>,
    pub mask_index: usize,
}

impl Frame {
    /// Positions of the noun tokens inside the frame.
    pub fn noun_positions(&self) -> std::ops::Range<usize> {
        self.mask_index + 1..self.tokens.len() - 1
    }

    /// Query with candidates `[plural, singular]`.
    pub fn query(&self, articles: &ArticleSet) -> MaskQuery {
        MaskQuery {
            tokens: self.tokens.clone(),
            mask_index: self.mask_index,
            candidates: vec![articles.plural.to_string(), articles.singular.to_string()],
        }
    }
}

pub fn build_frame<S: AsRef<str>>(noun_tokens: &[S]) -> Result<Frame, ProbeError> {
    let specials = [CLS, SEP, MASK, "[PAD]", "[UNK]"];
    if noun_tokens.is_empty() || noun_tokens.iter().any(|t| specials.contains(&t.as_ref())) {
        return Err(ProbeError::BadNounTokens(
            noun_tokens.iter().map(|t| t.as_ref().to_string()).collect(),
        ));
    }
    let mut tokens = Vec::with_capacity(noun_tokens.len() + 3);
    tokens.push(CLS.to_string());
    tokens.push(MASK.to_string());
    tokens.extend(noun_tokens.iter().map(|t| t.as_ref().to_string()));
    tokens.push(SEP.to_string());
    Ok(Frame {
        tokens,
        mask_index: 1,
    })
}

/// `ln P[plural_idx] − ln P[singular_idx]`.
pub fn log_odds(
    response: &MaskResponse,
    plural_idx: usize,
    singular_idx: usize,
) -> Result<f64, ProbeError> {
    let p = |i: usize| {
        let v = *response
            .probabilities
            .get(i)
            .ok_or(ProbeError::BadIndex(i))?;
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(ProbeError::DegenerateDistribution(v))
        }
    };
    Ok(p(plural_idx)?.ln() - p(singular_idx)?.ln())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub lemma: String,
    pub wordform: String,
    pub number: Number,
    /// Scheme of the entry's original plural tokenization, also on the
    /// singular and artificial rows.
    pub scheme: Scheme,
    pub variant: Variant,
    pub article_type: ArticleType,
    pub log_odds: f64,
    pub correct: bool,
    #[serde(skip)]
    pub gender: Option<Gender>,
    #[serde(skip)]
    pub tokens: Vec<String>,
}

/// Ties count as incorrect.
pub fn is_correct(number: Number, log_odds: f64) -> bool {
    match number {
        Number::Plural => log_odds > 0.0,
        Number::Singular => log_odds < 0.0,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeOptions {
    pub variants: BTreeSet<Variant>,
    pub article_types: BTreeSet<ArticleType>,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions {
            variants: Variant::ALL.into_iter().collect(),
            article_types: ArticleType::ALL.into_iter().collect(),
        }
    }
}

/// One wordform presentation of an entry.
#[derive(Debug, Clone)]
pub struct Presentation {
    pub number: Number,
    pub wordform: String,
    pub tokens: Vec<String>,
    pub variant: Variant,
}

/// The wordforms probed for one entry, in probe order: the singular, then
/// the original plural, then the artificial plural. `None` when the plural
/// or the lemma tokenizes to the unknown piece.
pub fn presentations(
    entry: &NounEntry,
    vocab: &Vocabulary,
    variants: &BTreeSet<Variant>,
) -> Result<Option<(Scheme, Vec<Presentation>)>, TokenizationError> {
    let original = classify_scheme(entry, vocab);
    let singular_tokens = tokenize(&entry.lemma, vocab);
    if original.contains_unk || singular_tokens.iter().any(|t| t == vocab.unk_piece()) {
        return Ok(None);
    }
    let mut out = vec![Presentation {
        number: Number::Singular,
        wordform: entry.lemma.clone(),
        tokens: singular_tokens,
        variant: Variant::Original,
    }];
    if variants.contains(&Variant::Original) {
        out.push(Presentation {
            number: Number::Plural,
            wordform: entry.plural.clone(),
            tokens: original.tokens.clone(),
            variant: Variant::Original,
        });
    }
    if variants.contains(&Variant::Artificial) && original.scheme != Scheme::Morphemic {
        let artificial = artificial_tokenize(entry, vocab)?;
        out.push(Presentation {
            number: Number::Plural,
            wordform: entry.plural.clone(),
            tokens: artificial.tokens,
            variant: Variant::Artificial,
        });
    }
    Ok(Some((original.scheme, out)))
}

struct Job<'a> {
    entry: &'a NounEntry,
    scheme: Scheme,
    presentation: Presentation,
    articles: ArticleSet,
    query: MaskQuery,
}

fn plan<'a>(
    lexicon: &'a Lexicon,
    vocab: &Vocabulary,
    options: &ProbeOptions,
) -> Result<Vec<Job<'a>>, ProbeError> {
    let mut jobs = Vec::new();
    for entry in lexicon.iter() {
        let Some((scheme, forms)) = presentations(entry, vocab, &options.variants)? else {
            log::debug!("skipping {}: unknown piece in tokenization", entry.plural);
            continue;
        };
        for presentation in forms {
            let frame = build_frame(&presentation.tokens)?;
            for &article_type in &options.article_types {
                let articles = ArticleSet::new(entry.gender, article_type);
                articles.check(vocab)?;
                jobs.push(Job {
                    entry,
                    scheme,
                    query: frame.query(&articles),
                    presentation: presentation.clone(),
                    articles,
                });
            }
        }
    }
    Ok(jobs)
}

/// Number of results `run_probe` will produce for this lexicon.
pub fn expected_result_count(
    lexicon: &Lexicon,
    vocab: &Vocabulary,
    options: &ProbeOptions,
) -> Result<usize, ProbeError> {
    Ok(plan(lexicon, vocab, options)?.len())
}

pub fn run_probe(
    lexicon: &Lexicon,
    handle: &ScorerHandle,
    options: &ProbeOptions,
) -> Result<Vec<ProbeResult>, ProbeError> {
    run_probe_with_sink(lexicon, handle, options, |_| Ok(()))
}

/// Runs every probe, handing results to `sink` in chunks of
/// [`FLUSH_EVERY`]. On a scorer failure the results completed before it
/// are still handed to the sink before the error is returned.
pub fn run_probe_with_sink<F>(
    lexicon: &Lexicon,
    handle: &ScorerHandle,
    options: &ProbeOptions,
    mut sink: F,
) -> Result<Vec<ProbeResult>, ProbeError>
where
    F: FnMut(&[ProbeResult]) -> Result<(), ProbeError>,
{
    let jobs = plan(lexicon, handle.vocab(), options)?;
    handle.handshake().map_err(|source| ProbeError::Scorer {
        completed: 0,
        source,
    })?;
    let mut results = Vec::with_capacity(jobs.len());
    for chunk in jobs.chunks(FLUSH_EVERY) {
        let queries: Vec<MaskQuery> = chunk.iter().map(|j| j.query.clone()).collect();
        let start = results.len();
        let mut failure = None;
        for (job, response) in chunk.iter().zip(handle.score_batch(&queries)) {
            let response = match response {
                Ok(r) => r,
                Err(source) => {
                    failure = Some(source);
                    break;
                }
            };
            let lo = log_odds(&response, 0, 1)?;
            results.push(ProbeResult {
                lemma: job.entry.lemma.clone(),
                wordform: job.presentation.wordform.clone(),
                number: job.presentation.number,
                scheme: job.scheme,
                variant: job.presentation.variant,
                article_type: job.articles.article_type,
                log_odds: lo,
                correct: is_correct(job.presentation.number, lo),
                gender: Some(job.entry.gender),
                tokens: job.presentation.tokens.clone(),
            });
        }
        sink(&results[start..])?;
        if let Some(source) = failure {
            return Err(ProbeError::Scorer {
                completed: results.len(),
                source,
            });
        }
    }
    Ok(results)
}

/// Incremental writer for the results CSV. An optional comment line
/// (prefixed with `#`) precedes the header.
pub struct ResultsWriter<W: io::Write> {
    inner: csv::Writer<W>,
}

impl<W: io::Write> ResultsWriter<W> {
    pub fn new(mut out: W, comment: Option<&str>) -> Result<Self, ProbeError> {
        if let Some(c) = comment {
            writeln!(out, "# {c}")?;
        }
        let mut inner = csv::Writer::from_writer(out);
        inner.write_record(RESULTS_HEADER)?;
        Ok(ResultsWriter { inner })
    }

    pub fn write(&mut self, results: &[ProbeResult]) -> Result<(), ProbeError> {
        for r in results {
            self.inner.write_record([
                r.lemma.as_str(),
                r.wordform.as_str(),
                r.number.as_str(),
                r.scheme.as_str(),
                r.variant.as_str(),
                r.article_type.as_str(),
                &r.log_odds.to_string(),
                if r.correct { "true" } else { "false" },
            ])?;
        }
        self.inner.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> Result<W, ProbeError> {
        self.inner
            .into_inner()
            .map_err(|e| ProbeError::Io(io::Error::other(e.to_string())))
    }
}

pub fn read_results<R: io::Read>(input: R) -> Result<Vec<ProbeResult>, ProbeError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(input);
    let bad = |what: &str, v: &str| {
        ProbeError::Csv(csv::Error::from(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("bad {what} {v:?}"),
        )))
    };
    let mut out = Vec::new();
    for record in reader.records() {
        let r = record?;
        if r.len() != RESULTS_HEADER.len() {
            return Err(bad("row", &format!("{r:?}")));
        }
        let number = Number::parse(&r[2]).ok_or_else(|| bad("number", &r[2]))?;
        let log_odds: f64 = r[6].parse().map_err(|_| bad("log_odds", &r[6]))?;
        out.push(ProbeResult {
            lemma: r[0].to_string(),
            wordform: r[1].to_string(),
            number,
            scheme: Scheme::parse(&r[3]).ok_or_else(|| bad("scheme", &r[3]))?,
            variant: Variant::parse(&r[4]).ok_or_else(|| bad("variant", &r[4]))?,
            article_type: ArticleType::parse(&r[5]).ok_or_else(|| bad("article_type", &r[5]))?,
            log_odds,
            correct: match &r[7] {
                "true" => true,
                "false" => false,
                v => return Err(bad("correct", v)),
            },
            gender: None,
            tokens: Vec::new(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyCell {
    pub scheme: Scheme,
    pub variant: Variant,
    pub n: usize,
    pub correct: usize,
    pub accuracy: Option<f64>,
    pub mean_log_odds: Option<f64>,
    pub sd_log_odds: Option<f64>,
}

/// Plural-only accuracy keyed by (original scheme, variant). Empty cells
/// carry `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTable {
    pub cells: Vec<AccuracyCell>,
}

impl AccuracyTable {
    pub fn cell(&self, scheme: Scheme, variant: Variant) -> &AccuracyCell {
        self.cells
            .iter()
            .find(|c| c.scheme == scheme && c.variant == variant)
            .expect("table holds every (scheme, variant) pair")
    }
}

pub fn accuracy_table(results: &[ProbeResult]) -> Result<AccuracyTable, ProbeError> {
    if results.is_empty() {
        return Err(ProbeError::NoResults);
    }
    let mut cells = Vec::new();
    for scheme in Scheme::ALL {
        for variant in Variant::ALL {
            let rows: Vec<&ProbeResult> = results
                .iter()
                .filter(|r| {
                    r.number == Number::Plural && r.scheme == scheme && r.variant == variant
                })
                .collect();
            let n = rows.len();
            let correct = rows.iter().filter(|r| r.correct).count();
            let values: Vec<f64> = rows.iter().map(|r| r.log_odds).collect();
            let stats = mean_sd(&values);
            cells.push(AccuracyCell {
                scheme,
                variant,
                n,
                correct,
                accuracy: (n > 0).then(|| correct as f64 / n as f64),
                mean_log_odds: stats.map(|s| s.0),
                sd_log_odds: stats.map(|s| s.1),
            });
        }
    }
    Ok(AccuracyTable { cells })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn response(p_pl: f64, p_sg: f64) -> MaskResponse {
        MaskResponse {
            logits: vec![p_pl.ln(), p_sg.ln()],
            probabilities: vec![p_pl, p_sg],
        }
    }

    fn result(number: Number, scheme: Scheme, variant: Variant, lo: f64) -> ProbeResult {
        ProbeResult {
            lemma: "x".into(),
            wordform: "xs".into(),
            number,
            scheme,
            variant,
            article_type: ArticleType::Definite,
            log_odds: lo,
            correct: is_correct(number, lo),
            gender: None,
            tokens: vec![],
        }
    }

    #[test]
    fn frames() {
        let f = build_frame(&["mujeres"]).unwrap();
        assert_eq!(f.tokens, ["[CLS]", "[MASK]", "mujeres", "[SEP]"]);
        assert_eq!(f.mask_index, 1);
        assert_eq!(f.noun_positions(), 2..3);
        let f = build_frame(&["patr", "##ono", "##s"]).unwrap();
        assert_eq!(
            f.tokens,
            ["[CLS]", "[MASK]", "patr", "##ono", "##s", "[SEP]"]
        );
        assert_eq!(build_frame(&["naranja", "##s"]).unwrap().tokens.len(), 5);
        assert!(matches!(
            build_frame(&["[MASK]"]),
            Err(ProbeError::BadNounTokens(_))
        ));
        assert!(build_frame::<&str>(&[]).is_err());
    }

    #[test]
    fn log_odds_examples() {
        let r = response(0.2, 0.1);
        assert!((log_odds(&r, 0, 1).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(log_odds(&response(0.3, 0.3), 0, 1).unwrap(), 0.0);
        assert_eq!(log_odds(&r, 1, 0).unwrap(), -log_odds(&r, 0, 1).unwrap());
        assert!(matches!(
            log_odds(&response(0.0, 0.1), 0, 1),
            Err(ProbeError::DegenerateDistribution(_))
        ));
        assert!(matches!(log_odds(&r, 0, 5), Err(ProbeError::BadIndex(5))));
    }

    #[test]
    fn correctness_rule() {
        assert!(is_correct(Number::Plural, 0.1));
        assert!(!is_correct(Number::Plural, 0.0));
        assert!(is_correct(Number::Singular, -0.1));
        assert!(!is_correct(Number::Singular, 0.0));
    }

    #[test]
    fn article_sets() {
        let a = ArticleSet::new(Gender::Feminine, ArticleType::Definite);
        assert_eq!((a.singular, a.plural), ("la", "las"));
        let a = ArticleSet::new(Gender::Masculine, ArticleType::Indefinite);
        assert_eq!((a.singular, a.plural), ("un", "unos"));
    }

    #[test]
    fn accuracy_cells() {
        let mut rs = vec![
            result(Number::Plural, Scheme::NonMorphemic, Variant::Original, 1.0),
            result(Number::Plural, Scheme::NonMorphemic, Variant::Original, 2.0),
            result(Number::Plural, Scheme::NonMorphemic, Variant::Original, 3.0),
            result(
                Number::Plural,
                Scheme::NonMorphemic,
                Variant::Original,
                -1.0,
            ),
        ];
        rs.push(result(
            Number::Singular,
            Scheme::NonMorphemic,
            Variant::Original,
            5.0,
        ));
        let t = accuracy_table(&rs).unwrap();
        let c = t.cell(Scheme::NonMorphemic, Variant::Original);
        assert_eq!(c.accuracy, Some(0.75));
        assert_eq!(c.n, 4);
        assert_eq!(c.mean_log_odds, Some(1.25));
        assert!(t
            .cell(Scheme::Morphemic, Variant::Artificial)
            .accuracy
            .is_none());
        assert_eq!(t.cells.len(), 6);
        assert!(matches!(accuracy_table(&[]), Err(ProbeError::NoResults)));
    }

    #[test]
    fn csv_round_trip() {
        let rs = vec![
            result(
                Number::Plural,
                Scheme::SingleToken,
                Variant::Artificial,
                0.125,
            ),
            result(Number::Singular, Scheme::Morphemic, Variant::Original, -3.5),
        ];
        let mut w = ResultsWriter::new(Vec::new(), Some("config_digest=abc")).unwrap();
        w.write(&rs).unwrap();
        let bytes = w.into_inner().unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.starts_with("# config_digest=abc\nlemma,wordform,number,"));
        let back = read_results(bytes.as_slice()).unwrap();
        assert_eq!(back, rs);
    }
}
