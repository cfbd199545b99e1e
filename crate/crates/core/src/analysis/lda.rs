//! Regularized linear discriminant analysis.
//!
//! Axes are the leading generalized eigenvectors of
//! `S_b w = λ (S_w + λ_eff I) w`, found by Cholesky whitening
//! `S_w + λ_eff I = L Lᵀ`, a symmetric eigendecomposition of
//! `L⁻¹ S_b L⁻ᵀ`, and back-transformation `w = L⁻ᵀ v`. Each axis is
//! normalized to unit length with its first nonzero component positive.
//!
//! `S_b = B Bᵀ` with one column `√n_c (μ_c − μ)` per class, so the whitened
//! matrix is `G Gᵀ` with `G = L⁻¹ B` (D × C). Its nonzero eigenpairs come
//! from the C × C matrix `Gᵀ G`: `Gᵀ G u = λ u` gives `v = G u / √λ`. The
//! full D × D decomposition is only needed when a wanted eigenvalue is
//! numerically zero.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::embedding::EmbeddingRecord;
use super::AnalysisError;
use crate::linalg::{
    cholesky, dot, norm, solve_lower, solve_lower_transpose, symmetric_eigen, Matrix,
};

pub const DEFAULT_SHRINKAGE: f64 = 1e-3;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LdaModel {
    pub labels: Vec<String>,
    pub class_means: BTreeMap<String, Vec<f64>>,
    pub class_counts: BTreeMap<String, usize>,
    pub global_mean: Vec<f64>,
    #[serde(skip)]
    pub within_scatter: Option<Matrix>,
    #[serde(skip)]
    pub between_scatter: Option<Matrix>,
    pub shrinkage: f64,
    /// `shrinkage × trace(S_w) / D`.
    pub lambda_eff: f64,
    /// Descending, one per axis.
    pub eigenvalues: Vec<f64>,
    pub axes: Vec<Vec<f64>>,
    pub dimension: usize,
}

fn sign_fix(v: &mut [f64]) {
    let n = norm(v);
    for x in v.iter_mut() {
        *x /= n;
    }
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Fits LDA on `records`. Classes are the distinct labels, in sorted
/// order.
pub fn lda_fit(records: &[EmbeddingRecord], shrinkage: f64) -> Result<LdaModel, AnalysisError> {
    if !(shrinkage >= 0.0 && shrinkage.is_finite()) {
        return Err(AnalysisError::BadInput(format!(
            "bad shrinkage {shrinkage}"
        )));
    }
    let dim = super::embedding::check_records(records)?;

    let mut classes: BTreeMap<&str, Vec<&[f64]>> = BTreeMap::new();
    for r in records {
        classes.entry(&r.class_label).or_default().push(&r.vector);
    }
    if classes.len() < 2 {
        return Err(AnalysisError::DegenerateClasses(format!(
            "{} class(es); need at least 2",
            classes.len()
        )));
    }
    if let Some((label, members)) = classes.iter().find(|(_, m)| m.len() < 2) {
        return Err(AnalysisError::DegenerateClasses(format!(
            "class {label:?} has {} record(s); need at least 2",
            members.len()
        )));
    }

    let mean_of = |vs: &[&[f64]]| -> Vec<f64> {
        let mut m = vec![0.0; dim];
        for v in vs {
            for (a, b) in m.iter_mut().zip(v.iter()) {
                *a += b;
            }
        }
        m.iter_mut().for_each(|a| *a /= vs.len() as f64);
        m
    };
    let all: Vec<&[f64]> = records.iter().map(|r| r.vector.as_slice()).collect();
    let global_mean = mean_of(&all);

    let mut within = Matrix::zeros(dim, dim);
    let mut between = Matrix::zeros(dim, dim);
    let mut offsets = Vec::with_capacity(classes.len());
    let mut class_means = BTreeMap::new();
    let mut class_counts = BTreeMap::new();
    for (label, members) in &classes {
        let mu = mean_of(members);
        for x in members {
            let d: Vec<f64> = x.iter().zip(&mu).map(|(a, b)| a - b).collect();
            within.add_outer(&d, 1.0);
        }
        let d: Vec<f64> = mu.iter().zip(&global_mean).map(|(a, b)| a - b).collect();
        between.add_outer(&d, members.len() as f64);
        let w = (members.len() as f64).sqrt();
        offsets.push(d.iter().map(|x| x * w).collect::<Vec<f64>>());
        class_means.insert(label.to_string(), mu);
        class_counts.insert(label.to_string(), members.len());
    }

    let lambda_eff = shrinkage * within.trace() / dim as f64;
    let mut regularized = within.clone();
    regularized.add_diagonal(lambda_eff);
    let l = cholesky(&regularized).ok_or(AnalysisError::SingularScatter)?;

    let k = (classes.len() - 1).min(dim);
    let whitened_axes = match low_rank_eigen(&l, &offsets, k) {
        Some(pairs) => pairs,
        None => {
            log::debug!("LDA: near-zero discriminant eigenvalue, using the full decomposition");
            full_eigen(&l, &between, k)
        }
    };
    let mut axes = Vec::with_capacity(k);
    let mut eigenvalues = Vec::with_capacity(k);
    for (value, v) in whitened_axes {
        let mut w = solve_lower_transpose(&l, &v);
        sign_fix(&mut w);
        axes.push(w);
        eigenvalues.push(value.max(0.0));
    }

    Ok(LdaModel {
        labels: class_means.keys().cloned().collect(),
        class_means,
        class_counts,
        global_mean,
        within_scatter: Some(within),
        between_scatter: Some(between),
        shrinkage,
        lambda_eff,
        eigenvalues,
        axes,
        dimension: dim,
    })
}

/// Leading `k` eigenpairs of `G Gᵀ` through the Gram matrix `Gᵀ G`.
/// `None` if one of them has a numerically zero eigenvalue.
fn low_rank_eigen(l: &Matrix, offsets: &[Vec<f64>], k: usize) -> Option<Vec<(f64, Vec<f64>)>> {
    let g: Vec<Vec<f64>> = offsets.iter().map(|b| solve_lower(l, b)).collect();
    let c = g.len();
    let mut gram = Matrix::zeros(c, c);
    for i in 0..c {
        for j in 0..=i {
            let v = dot(&g[i], &g[j]);
            gram[(i, j)] = v;
            gram[(j, i)] = v;
        }
    }
    let eig = symmetric_eigen(&gram);
    let top = eig.values.first().copied().unwrap_or(0.0);
    let mut out = Vec::with_capacity(k);
    for (value, u) in eig.values.iter().zip(&eig.vectors).take(k) {
        if !(top > 0.0 && *value > top * 1e-10) {
            return None;
        }
        let mut v = vec![0.0; l.rows()];
        for (gc, uc) in g.iter().zip(u) {
            for (a, b) in v.iter_mut().zip(gc) {
                *a += uc * b;
            }
        }
        let scale = value.sqrt();
        v.iter_mut().for_each(|a| *a /= scale);
        out.push((*value, v));
    }
    Some(out)
}

/// Leading `k` eigenpairs of `L⁻¹ S_b L⁻ᵀ` from the full decomposition.
fn full_eigen(l: &Matrix, between: &Matrix, k: usize) -> Vec<(f64, Vec<f64>)> {
    let dim = l.rows();
    // L⁻¹ S_b, column by column
    let mut half = Matrix::zeros(dim, dim);
    for j in 0..dim {
        let col = solve_lower(l, &between.column(j));
        for i in 0..dim {
            half[(i, j)] = col[i];
        }
    }
    let mut whitened = Matrix::zeros(dim, dim);
    for i in 0..dim {
        let row = solve_lower(l, half.row(i));
        for j in 0..dim {
            whitened[(i, j)] = row[j];
        }
    }
    let eig = symmetric_eigen(&whitened);
    eig.values.into_iter().zip(eig.vectors).take(k).collect()
}

impl LdaModel {
    pub fn project_vector(&self, v: &[f64], axis_indices: &[usize]) -> Vec<f64> {
        let centered: Vec<f64> = v
            .iter()
            .zip(&self.global_mean)
            .map(|(a, b)| a - b)
            .collect();
        axis_indices
            .iter()
            .map(|&k| dot(&centered, &self.axes[k]))
            .collect()
    }
}

/// Coordinates `(x − global mean) · axis` for each record and selected axis.
pub fn lda_project(
    model: &LdaModel,
    records: &[EmbeddingRecord],
    axis_indices: &[usize],
) -> Result<Vec<Vec<f64>>, AnalysisError> {
    if let Some(&k) = axis_indices.iter().find(|&&k| k >= model.axes.len()) {
        return Err(AnalysisError::BadInput(format!(
            "axis {k} out of range; model has {}",
            model.axes.len()
        )));
    }
    records
        .iter()
        .map(|r| {
            if r.vector.len() != model.dimension {
                return Err(AnalysisError::BadInput(format!(
                    "record {:?} has dimension {}, model has {}",
                    r.wordform,
                    r.vector.len(),
                    model.dimension
                )));
            }
            Ok(model.project_vector(&r.vector, axis_indices))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(label: &str, v: &[f64]) -> EmbeddingRecord {
        EmbeddingRecord {
            wordform: format!("{label}{v:?}"),
            class_label: label.into(),
            vector: v.to_vec(),
        }
    }

    #[test]
    fn identity_within_scatter_axis() {
        // each class: mean ± e1, mean ± e2 → within scatter = 2·I per class
        let mut rs = Vec::new();
        for (label, cx) in [("a", 0.0), ("b", 1.0)] {
            for (dx, dy) in [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)] {
                rs.push(rec(label, &[cx + dx, dy]));
            }
        }
        let m = lda_fit(&rs, 0.0).unwrap();
        assert_eq!(m.axes.len(), 1);
        assert!((m.axes[0][0] - 1.0).abs() < 1e-12);
        assert!(m.axes[0][1].abs() < 1e-12);
        assert_eq!(m.lambda_eff, 0.0);
    }

    #[test]
    fn four_classes_three_axes() {
        let mut rs = Vec::new();
        let centers = [
            [0.0, 0.0, 0.0],
            [3.0, 0.0, 1.0],
            [0.0, 2.0, 0.0],
            [1.0, 1.0, 4.0],
        ];
        for (c, center) in centers.iter().enumerate() {
            for i in 0..5 {
                let j = i as f64;
                rs.push(rec(
                    &format!("c{c}"),
                    &[
                        center[0] + 0.1 * j,
                        center[1] - 0.05 * j * j,
                        center[2] + (j * 1.3).sin(),
                    ],
                ));
            }
        }
        let m = lda_fit(&rs, DEFAULT_SHRINKAGE).unwrap();
        assert_eq!(m.axes.len(), 3);
        for a in &m.axes {
            assert!((norm(a) - 1.0).abs() < 1e-12);
            assert!(a.iter().find(|x| x.abs() > 1e-12).unwrap() > &0.0);
        }
        assert!(m.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn class_means_project_to_opposite_sides() {
        let rs = vec![
            rec("sg", &[0.0, 0.1]),
            rec("sg", &[0.2, -0.1]),
            rec("sg", &[-0.1, 0.0]),
            rec("pl", &[2.0, 0.3]),
            rec("pl", &[2.2, 0.0]),
            rec("pl", &[1.9, -0.2]),
        ];
        let m = lda_fit(&rs, DEFAULT_SHRINKAGE).unwrap();
        let a = m.project_vector(&m.class_means["sg"], &[0])[0];
        let b = m.project_vector(&m.class_means["pl"], &[0])[0];
        assert!(a * b < 0.0);
    }

    #[test]
    fn errors() {
        let one = vec![rec("a", &[0.0]), rec("a", &[1.0])];
        assert!(matches!(
            lda_fit(&one, 0.0),
            Err(AnalysisError::DegenerateClasses(_))
        ));
        let thin = vec![rec("a", &[0.0]), rec("a", &[1.0]), rec("b", &[2.0])];
        assert!(matches!(
            lda_fit(&thin, 0.0),
            Err(AnalysisError::DegenerateClasses(_))
        ));
        // rank-deficient: second coordinate constant
        let flat = vec![
            rec("a", &[0.0, 1.0]),
            rec("a", &[1.0, 1.0]),
            rec("b", &[2.0, 1.0]),
            rec("b", &[3.0, 1.0]),
        ];
        assert!(matches!(
            lda_fit(&flat, 0.0),
            Err(AnalysisError::SingularScatter)
        ));
        assert!(lda_fit(&flat, 0.01).is_ok());
        let nan = vec![
            rec("a", &[f64::NAN]),
            rec("a", &[1.0]),
            rec("b", &[2.0]),
            rec("b", &[3.0]),
        ];
        assert!(matches!(
            lda_fit(&nan, 0.0),
            Err(AnalysisError::BadInput(_))
        ));
        assert!(matches!(
            lda_fit(&flat, -1.0),
            Err(AnalysisError::BadInput(_))
        ));
    }

    #[test]
    fn projection_checks() {
        let rs = vec![
            rec("a", &[0.0, 0.3]),
            rec("a", &[1.0, 0.0]),
            rec("b", &[3.0, 0.1]),
            rec("b", &[4.0, 0.5]),
        ];
        let m = lda_fit(&rs, 0.0).unwrap();
        assert!(lda_project(&m, &rs, &[1]).is_err());
        assert!(lda_project(&m, &[rec("a", &[1.0])], &[0]).is_err());
        assert_eq!(lda_project(&m, &rs, &[0]).unwrap().len(), 4);
    }

    fn scatter_parts(rs: &[EmbeddingRecord], shrinkage: f64) -> (Matrix, Vec<Vec<f64>>, usize) {
        let m = lda_fit(rs, shrinkage).unwrap();
        let mut reg = m.within_scatter.clone().unwrap();
        reg.add_diagonal(m.lambda_eff);
        let l = cholesky(&reg).unwrap();
        let offsets = m
            .class_means
            .iter()
            .map(|(label, mu)| {
                let w = (m.class_counts[label] as f64).sqrt();
                mu.iter()
                    .zip(&m.global_mean)
                    .map(|(a, b)| (a - b) * w)
                    .collect()
            })
            .collect();
        (l, offsets, m.labels.len() - 1)
    }

    #[test]
    fn low_rank_path_matches_full_decomposition() {
        let mut rs = Vec::new();
        for c in 0..4 {
            for i in 0..7 {
                let x = (i * 7 + c * 3) as f64;
                rs.push(rec(
                    &format!("c{c}"),
                    &[
                        x.sin() + c as f64,
                        (1.7 * x).cos(),
                        (0.3 * x).sin() * c as f64,
                        x.cos() - 0.5 * c as f64,
                        (2.1 * x).sin(),
                    ],
                ));
            }
        }
        let (l, offsets, k) = scatter_parts(&rs, 1e-3);
        let model = lda_fit(&rs, 1e-3).unwrap();
        let fast = low_rank_eigen(&l, &offsets, k).unwrap();
        let full = full_eigen(&l, model.between_scatter.as_ref().unwrap(), k);
        for ((a, u), (b, v)) in fast.iter().zip(&full) {
            assert!((a - b).abs() < 1e-9 * b.abs().max(1.0));
            let same = u.iter().zip(v).all(|(x, y)| (x - y).abs() < 1e-8);
            let flipped = u.iter().zip(v).all(|(x, y)| (x + y).abs() < 1e-8);
            assert!(same || flipped);
        }
    }

    #[test]
    fn coincident_means_fall_back() {
        // classes b and c share a mean, so the second eigenvalue is zero
        let mut rs = Vec::new();
        for (label, cx) in [("a", 4.0), ("b", 0.0), ("c", 0.0)] {
            for (dx, dy) in [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)] {
                rs.push(rec(label, &[cx + dx, dy]));
            }
        }
        let (l, offsets, k) = scatter_parts(&rs, 1e-3);
        assert!(low_rank_eigen(&l, &offsets, k).is_none());
        let m = lda_fit(&rs, 1e-3).unwrap();
        assert_eq!(m.axes.len(), 2);
        assert!(m.eigenvalues[1].abs() < 1e-9);
        for a in &m.axes {
            assert!((norm(a) - 1.0).abs() < 1e-12);
        }
    }
}
