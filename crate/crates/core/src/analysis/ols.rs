//! Ordinary least squares via Householder QR, plus the two fixed-effects
//! models built on it: log frequency by tokenization scheme, and article
//! log-odds by article type, number, scheme and frequency.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::stats::regression_p_value;
use super::AnalysisError;
use crate::lexicon::NounEntry;
use crate::linalg::{invert_upper, solve_upper, Matrix, Qr};
use crate::probe::{ArticleType, Number, ProbeResult};
use crate::tokenization::{Scheme, TokenizationRecord, Variant};

pub const INTERCEPT: &str = "intercept";

/// Relative size below which a diagonal entry of R counts as zero.
const RANK_TOL: f64 = 1e-10;

/// Named design columns, row-major.
#[derive(Debug, Clone)]
pub struct Design {
    pub terms: Vec<String>,
    pub x: Matrix,
}

impl Design {
    pub fn new(terms: Vec<String>, rows: &[Vec<f64>]) -> Result<Self, AnalysisError> {
        if rows.iter().any(|r| r.len() != terms.len()) {
            return Err(AnalysisError::BadInput(format!(
                "design rows must have {} columns",
                terms.len()
            )));
        }
        Ok(Design {
            x: if rows.is_empty() {
                Matrix::zeros(0, terms.len())
            } else {
                Matrix::from_rows(rows)
            },
            terms,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub term: String,
    pub beta: f64,
    pub se: f64,
    pub t: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionSummary {
    pub terms: Vec<Coefficient>,
    pub r_squared: f64,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    #[serde(skip)]
    pub residuals: Vec<f64>,
}

impl RegressionSummary {
    pub fn coefficient(&self, term: &str) -> Option<&Coefficient> {
        self.terms.iter().find(|c| c.term == term)
    }

    pub fn beta(&self, term: &str) -> Option<f64> {
        self.coefficient(term).map(|c| c.beta)
    }
}

pub fn ols_fit(design: &Design, y: &[f64]) -> Result<RegressionSummary, AnalysisError> {
    let n = design.x.rows();
    let p = design.terms.len();
    if y.len() != n {
        return Err(AnalysisError::BadInput(format!(
            "{} responses for {n} design rows",
            y.len()
        )));
    }
    if n <= p {
        return Err(AnalysisError::InsufficientData(format!(
            "{n} observations for {p} terms"
        )));
    }
    if y.iter()
        .chain(design.x.to_rows().iter().flatten())
        .any(|v| !v.is_finite())
    {
        return Err(AnalysisError::BadInput(
            "non-finite value in regression input".into(),
        ));
    }

    let qr = Qr::new(&design.x);
    let diag = qr.r_diagonal();
    let max = diag.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    if let Some(k) = diag
        .iter()
        .position(|d| d.is_nan() || d.abs() <= RANK_TOL * max)
    {
        return Err(AnalysisError::RankDeficient(design.terms[k].clone()));
    }
    let r = qr.r();
    let beta = solve_upper(&r, &qr.qt_mul(y));

    let fitted = design.x.matvec(&beta);
    let residuals: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    let rss: f64 = residuals.iter().map(|e| e * e).sum();
    let mean_y = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - mean_y) * (v - mean_y)).sum();
    let r_squared = if tss > 0.0 {
        (1.0 - rss / tss).clamp(0.0, 1.0)
    } else {
        0.0
    };

    let df = (n - p) as f64;
    let sigma2 = rss / df;
    // (XᵀX)⁻¹ = R⁻¹ R⁻ᵀ; only the diagonal is needed
    let r_inv = invert_upper(&r);
    let terms = design
        .terms
        .iter()
        .enumerate()
        .map(|(i, term)| {
            let var: f64 = (i..p).map(|j| r_inv[(i, j)] * r_inv[(i, j)]).sum();
            let se = (sigma2 * var).sqrt();
            let t = beta[i] / se;
            Coefficient {
                term: term.clone(),
                beta: beta[i],
                se,
                t,
                p: regression_p_value(t, n, df),
            }
        })
        .collect();

    Ok(RegressionSummary {
        terms,
        r_squared,
        n,
        reference: None,
        residuals,
    })
}

pub fn scheme_term(s: Scheme) -> String {
    format!("scheme[{}]", s.as_str())
}

/// Converts a stored log10 frequency to another logarithm base.
pub fn rebase_log10(value: f64, base: f64) -> f64 {
    if base == 10.0 {
        value
    } else {
        value * std::f64::consts::LN_10 / base.ln()
    }
}

/// Log frequency regressed on scheme dummies. Morphemic is the reference
/// level when present; otherwise the first present scheme in
/// single-token, non-morphemic order. Entries without a frequency or with
/// an unknown piece in their tokenization are left out.
pub fn freq_by_scheme(
    entries: &[NounEntry],
    records: &[TokenizationRecord],
    log_base: f64,
) -> Result<RegressionSummary, AnalysisError> {
    if entries.len() != records.len() {
        return Err(AnalysisError::BadInput(
            "entries and tokenization records differ in length".into(),
        ));
    }
    if !(log_base > 0.0 && log_base != 1.0 && log_base.is_finite()) {
        return Err(AnalysisError::BadInput(format!("bad log base {log_base}")));
    }
    let rows: Vec<(Scheme, f64)> = entries
        .iter()
        .zip(records)
        .filter(|(_, r)| !r.contains_unk)
        .filter_map(|(e, r)| {
            e.log_frequency
                .map(|f| (r.scheme, rebase_log10(f, log_base)))
        })
        .collect();
    if rows.is_empty() {
        return Err(AnalysisError::NoFrequencyData);
    }
    let present: Vec<Scheme> = [Scheme::Morphemic, Scheme::SingleToken, Scheme::NonMorphemic]
        .into_iter()
        .filter(|s| rows.iter().any(|(r, _)| r == s))
        .collect();
    if present.len() < 2 {
        return Err(AnalysisError::DegenerateClasses(format!(
            "frequency data covers {} scheme(s); need at least 2",
            present.len()
        )));
    }
    let reference = present[0];
    let dummies = &present[1..];
    let mut terms = vec![INTERCEPT.to_string()];
    terms.extend(dummies.iter().map(|&s| scheme_term(s)));
    let x: Vec<Vec<f64>> = rows
        .iter()
        .map(|(s, _)| {
            std::iter::once(1.0)
                .chain(dummies.iter().map(|d| f64::from(u8::from(d == s))))
                .collect()
        })
        .collect();
    let y: Vec<f64> = rows.iter().map(|(_, f)| *f).collect();
    let mut summary = ols_fit(&Design::new(terms, &x)?, &y)?;
    summary.reference = Some(reference.as_str().to_string());
    Ok(summary)
}

pub const TERM_INDEFINITE: &str = "article_type[indefinite]";
pub const TERM_SINGULAR: &str = "number[singular]";
pub const TERM_LOG_FREQUENCY: &str = "log_frequency";

/// Fixed-effects model of article log-odds over original-tokenization
/// rows: article type, number, scheme, log frequency, number × scheme and
/// number × log frequency. References: definite, plural, morphemic.
///
/// `log_frequency` maps lemmas to their frequency. When no row has one,
/// the frequency terms are dropped with a warning; otherwise rows without a
/// frequency are left out.
pub fn logodds_regression(
    results: &[ProbeResult],
    log_frequency: &HashMap<String, f64>,
) -> Result<RegressionSummary, AnalysisError> {
    let rows: Vec<&ProbeResult> = results
        .iter()
        .filter(|r| r.variant == Variant::Original)
        .collect();
    let has_sg = rows.iter().any(|r| r.number == Number::Singular);
    let has_pl = rows.iter().any(|r| r.number == Number::Plural);
    if !(has_sg && has_pl) {
        return Err(AnalysisError::InsufficientData(
            "need both singular and plural rows".into(),
        ));
    }
    let with_freq = rows.iter().any(|r| log_frequency.contains_key(&r.lemma));
    if !with_freq {
        log::warn!("no frequency data joined to probe results; dropping log_frequency terms");
    }
    let singular_x = |s: Scheme| format!("{TERM_SINGULAR}:{}", scheme_term(s));
    let mut terms: Vec<String> = vec![
        INTERCEPT.into(),
        TERM_INDEFINITE.into(),
        TERM_SINGULAR.into(),
        scheme_term(Scheme::SingleToken),
        scheme_term(Scheme::NonMorphemic),
    ];
    if with_freq {
        terms.push(TERM_LOG_FREQUENCY.into());
    }
    terms.push(singular_x(Scheme::SingleToken));
    terms.push(singular_x(Scheme::NonMorphemic));
    if with_freq {
        terms.push(format!("{TERM_SINGULAR}:{TERM_LOG_FREQUENCY}"));
    }

    let mut x = Vec::new();
    let mut y = Vec::new();
    for r in rows {
        let freq = log_frequency.get(&r.lemma).copied();
        if with_freq && freq.is_none() {
            continue;
        }
        let ind = |b: bool| f64::from(u8::from(b));
        let sg = ind(r.number == Number::Singular);
        let st = ind(r.scheme == Scheme::SingleToken);
        let nm = ind(r.scheme == Scheme::NonMorphemic);
        let mut row = vec![
            1.0,
            ind(r.article_type == ArticleType::Indefinite),
            sg,
            st,
            nm,
        ];
        if let Some(f) = freq {
            row.push(f);
        }
        row.push(sg * st);
        row.push(sg * nm);
        if let Some(f) = freq {
            row.push(sg * f);
        }
        x.push(row);
        y.push(r.log_odds);
    }
    let mut summary = ols_fit(&Design::new(terms, &x)?, &y)?;
    summary.reference = Some("article_type=definite, number=plural, scheme=morphemic".into());
    Ok(summary)
}
