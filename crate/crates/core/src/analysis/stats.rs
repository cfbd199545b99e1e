//! Grouped summaries and the t / normal tail probabilities used for
//! regression p-values.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::probe::ProbeResult;

/// Sample mean and standard deviation (n − 1 denominator). A single value
/// has SD 0. `None` for empty input.
pub fn mean_sd(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Some((mean, 0.0));
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    Some((mean, (ss / (n - 1.0)).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKey {
    Number,
    Scheme,
    Variant,
    ArticleType,
}

impl GroupKey {
    pub fn as_str(self) -> &'static str {
        match self {
            GroupKey::Number => "number",
            GroupKey::Scheme => "scheme",
            GroupKey::Variant => "variant",
            GroupKey::ArticleType => "article_type",
        }
    }

    fn value(self, r: &ProbeResult) -> &'static str {
        match self {
            GroupKey::Number => r.number.as_str(),
            GroupKey::Scheme => r.scheme.as_str(),
            GroupKey::Variant => r.variant.as_str(),
            GroupKey::ArticleType => r.article_type.as_str(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub group: BTreeMap<String, String>,
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

/// Log-odds mean and SD per group, groups in lexicographic key order.
pub fn grouped_summary(results: &[ProbeResult], keys: &[GroupKey]) -> Vec<SummaryStats> {
    let mut groups: BTreeMap<Vec<&'static str>, Vec<f64>> = BTreeMap::new();
    for r in results {
        let key = keys.iter().map(|k| k.value(r)).collect();
        groups.entry(key).or_default().push(r.log_odds);
    }
    groups
        .into_iter()
        .map(|(key, values)| {
            let (mean, sd) = mean_sd(&values).expect("groups are non-empty");
            SummaryStats {
                group: keys
                    .iter()
                    .zip(key)
                    .map(|(k, v)| (k.as_str().to_string(), v.to_string()))
                    .collect(),
                mean,
                sd,
                n: values.len(),
            }
        })
        .collect()
}

/// Two-sided normal tail probability `P(|Z| > |z|)`.
pub fn normal_two_sided_p(z: f64) -> f64 {
    libm::erfc(z.abs() / std::f64::consts::SQRT_2)
}

/// Two-sided Student-t tail probability `P(|T| > |t|)` with `df` degrees
/// of freedom, via the regularized incomplete beta function.
pub fn student_t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    regularized_incomplete_beta(x, df / 2.0, 0.5)
}

/// Above this many observations, p-values use the normal approximation.
pub const NORMAL_APPROX_MIN_N: usize = 200;

pub fn regression_p_value(t: f64, n: usize, df: f64) -> f64 {
    if n > NORMAL_APPROX_MIN_N {
        normal_two_sided_p(t)
    } else {
        student_t_two_sided_p(t, df)
    }
}

fn ln_beta(a: f64, b: f64) -> f64 {
    libm::lgamma(a) + libm::lgamma(b) - libm::lgamma(a + b)
}

/// `I_x(a, b)`, evaluated with Lentz's continued fraction.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let front = (a * x.ln() + b * (1.0 - x).ln() - ln_beta(a, b)).exp();
    // the fraction converges fastest for x < (a+1)/(a+b+2)
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(x, a, b) / a
    } else {
        1.0 - front * beta_continued_fraction(1.0 - x, b, a) / b
    }
}

fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..1000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}
