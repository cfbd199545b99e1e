//! Whole-lexicon passes shared by the CLI commands: scheme classification
//! with its CSV export, and embedding collection for LDA.

use std::collections::{BTreeMap, BTreeSet};
use std::io;

use serde::{Deserialize, Serialize};

use crate::analysis::embedding::{
    mean_embedding, EmbeddingRecord, LABEL_ARTIFICIAL, LABEL_MORPHEMIC, LABEL_NON_MORPHEMIC,
    LABEL_SINGLE_TOKEN, LABEL_SINGULAR,
};
use crate::analysis::{AnalysisError, LdaModel};
use crate::lexicon::Lexicon;
use crate::probe::{build_frame, presentations, Number, ProbeError};
use crate::scorer::{ScorerError, ScorerHandle};
use crate::tokenization::{
    artificial_tokenize, classify_scheme, Scheme, TokenizationRecord, Variant, Vocabulary,
};

pub const CLASSIFICATION_HEADER: [&str; 8] = [
    "lemma",
    "plural",
    "gender",
    "affix",
    "variant",
    "scheme",
    "tokens",
    "contains_unk",
];

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemeCounts {
    pub single_token: usize,
    pub morphemic: usize,
    pub non_morphemic: usize,
    pub excluded_unk: usize,
}

/// Original-tokenization record for every entry, in lexicon order.
pub fn classify_lexicon(lexicon: &Lexicon, vocab: &Vocabulary) -> Vec<TokenizationRecord> {
    lexicon.iter().map(|e| classify_scheme(e, vocab)).collect()
}

pub fn scheme_counts(records: &[TokenizationRecord]) -> SchemeCounts {
    let mut c = SchemeCounts::default();
    for r in records {
        match (r.contains_unk, r.scheme) {
            (true, _) => c.excluded_unk += 1,
            (false, Scheme::SingleToken) => c.single_token += 1,
            (false, Scheme::Morphemic) => c.morphemic += 1,
            (false, Scheme::NonMorphemic) => c.non_morphemic += 1,
        }
    }
    c
}

/// Writes the classification CSV: each entry's original tokenization and,
/// for single-token and non-morphemic entries, its artificial one.
pub fn write_classification<W: io::Write>(
    lexicon: &Lexicon,
    records: &[TokenizationRecord],
    vocab: &Vocabulary,
    comment: Option<&str>,
    mut out: W,
) -> Result<(), ProbeError> {
    if let Some(c) = comment {
        writeln!(out, "# {c}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CLASSIFICATION_HEADER)?;
    for (entry, original) in lexicon.iter().zip(records) {
        let mut rows = vec![original.clone()];
        if !original.contains_unk && original.scheme != Scheme::Morphemic {
            match artificial_tokenize(entry, vocab) {
                Ok(r) => rows.push(r),
                Err(e) => log::warn!("no artificial tokenization for {}: {e}", entry.plural),
            }
        }
        for r in rows {
            w.write_record([
                entry.lemma.as_str(),
                entry.plural.as_str(),
                entry.gender.as_str(),
                entry.affix.surface(),
                r.variant.as_str(),
                r.scheme.as_str(),
                &r.joined_tokens(),
                if r.contains_unk { "true" } else { "false" },
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error(transparent)]
    Probe(#[from] ProbeError),
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

/// Per-label counts of embeddings kept and dropped by the token-count
/// filter.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub kept: BTreeMap<String, usize>,
    /// Multi-token classes keep only two-token forms; singulars keep only
    /// single-token lemmas.
    pub excluded_token_count: BTreeMap<String, usize>,
    pub excluded_unk: usize,
}

fn class_label(number: Number, variant: Variant, scheme: Scheme) -> &'static str {
    match (number, variant, scheme) {
        (Number::Singular, _, _) => LABEL_SINGULAR,
        (Number::Plural, Variant::Artificial, _) => LABEL_ARTIFICIAL,
        (Number::Plural, Variant::Original, Scheme::SingleToken) => LABEL_SINGLE_TOKEN,
        (Number::Plural, Variant::Original, Scheme::Morphemic) => LABEL_MORPHEMIC,
        (Number::Plural, Variant::Original, Scheme::NonMorphemic) => LABEL_NON_MORPHEMIC,
    }
}

fn required_tokens(label: &str) -> usize {
    if label == LABEL_SINGULAR || label == LABEL_SINGLE_TOKEN {
        1
    } else {
        2
    }
}

/// One mean embedding per (entry, class label) over the `[CLS] [MASK]
/// noun [SEP]` frame, averaged across `layers` and the noun positions.
pub fn collect_embeddings(
    lexicon: &Lexicon,
    handle: &ScorerHandle,
    layers: &[usize],
) -> Result<(Vec<EmbeddingRecord>, FilterReport), EmbedError> {
    let vocab = handle.vocab();
    let variants: BTreeSet<Variant> = Variant::ALL.into_iter().collect();
    let mut report = FilterReport::default();
    let mut jobs = Vec::new();
    for entry in lexicon.iter() {
        let forms = presentations(entry, vocab, &variants).map_err(ProbeError::from)?;
        let Some((scheme, forms)) = forms else {
            report.excluded_unk += 1;
            continue;
        };
        for p in forms {
            let label = class_label(p.number, p.variant, scheme);
            if p.tokens.len() != required_tokens(label) {
                *report
                    .excluded_token_count
                    .entry(label.to_string())
                    .or_default() += 1;
                continue;
            }
            *report.kept.entry(label.to_string()).or_default() += 1;
            jobs.push((label, p));
        }
    }
    let frames = jobs
        .iter()
        .map(|(_, p)| build_frame(&p.tokens))
        .collect::<Result<Vec<_>, _>>()?;
    let requests: Vec<Vec<String>> = frames.iter().map(|f| f.tokens.clone()).collect();
    let states = handle.fetch_hidden_states_batch(&requests, layers);

    let mut records = Vec::with_capacity(jobs.len());
    for (((label, p), frame), state) in jobs.into_iter().zip(&frames).zip(states) {
        let positions: Vec<usize> = frame.noun_positions().collect();
        records.push(EmbeddingRecord {
            wordform: p.wordform,
            class_label: label.to_string(),
            vector: mean_embedding(&state?, &positions)?,
        });
    }
    Ok((records, report))
}

/// Writes `wordform,class_label,axis0[,axis1,…]`.
pub fn write_projections<W: io::Write>(
    model: &LdaModel,
    records: &[EmbeddingRecord],
    comment: Option<&str>,
    mut out: W,
) -> Result<(), AnalysisError> {
    let axes: Vec<usize> = (0..model.axes.len()).collect();
    let coords = crate::analysis::lda_project(model, records, &axes)?;
    if let Some(c) = comment {
        writeln!(out, "# {c}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["wordform".to_string(), "class_label".to_string()];
    header.extend(axes.iter().map(|k| format!("axis{k}")));
    w.write_record(&header)?;
    for (r, c) in records.iter().zip(coords) {
        let mut row = vec![r.wordform.clone(), r.class_label.clone()];
        row.extend(c.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
