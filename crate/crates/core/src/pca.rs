//! Principal-component models of the auxiliary variables.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::matrixops::{regress_residuals, sym_eigen, weighted_covariance, DataMatrix};

/// Where the covariance behind a model came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcaSource {
    /// Full population auxiliary data, unit weights.
    Population,
    /// Sample rows weighted by design weights.
    DesignWeightedSample,
}

/// Orthonormal loadings (columns) with descending, nonnegative eigenvalues
/// and the standardization that maps original-unit rows onto the model.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub loadings: Array2<f64>,
    pub eigenvalues: Array1<f64>,
    pub col_means: Vec<f64>,
    pub col_sds: Vec<f64>,
    pub source: PcaSource,
}

impl PcaModel {
    fn from_covariance(
        cov: ArrayView2<'_, f64>,
        col_means: Vec<f64>,
        col_sds: Vec<f64>,
        source: PcaSource,
    ) -> Result<Self> {
        let eig = sym_eigen(cov)?;
        // tiny negative eigenvalues are round-off on a PSD matrix
        let eigenvalues = eig.eigenvalues.mapv(|l| l.max(0.0));
        Ok(Self {
            loadings: eig.eigenvectors,
            eigenvalues,
            col_means,
            col_sds,
            source,
        })
    }

    pub fn n_components(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Maps original-unit rows to standardized rows.
    pub fn standardize_rows(&self, rows: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let q = self.n_components();
        if rows.ncols() != q {
            return Err(Error::DimensionMismatch {
                expected: q,
                got: rows.ncols(),
                context: "score rows",
            });
        }
        let mut z = rows.to_owned();
        for (j, mut col) in z.columns_mut().into_iter().enumerate() {
            let (m, s) = (self.col_means[j], self.col_sds[j]);
            col.mapv_inplace(|v| (v - m) / s);
        }
        Ok(z)
    }

    /// Component scores `((rows − means) / sds) · V`. Row k is z_k, column j
    /// is the component Z_j.
    pub fn scores(&self, rows: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Ok(self.standardize_rows(rows)?.dot(&self.loadings))
    }

    /// Share of the total variance carried by the first `c` components.
    pub fn explained_variance(&self, c: usize) -> Result<f64> {
        explained_variance(self.eigenvalues.view(), c)
    }

    /// Converts original-unit population totals of X into standardized
    /// totals, `(t_x − N·mean) / sd`.
    pub fn standardized_totals(&self, original_totals: &[f64], population_size: f64) -> Result<Array1<f64>> {
        let q = self.n_components();
        if original_totals.len() != q {
            return Err(Error::DimensionMismatch {
                expected: q,
                got: original_totals.len(),
                context: "auxiliary totals",
            });
        }
        Ok(Array1::from_iter((0..q).map(|j| {
            (original_totals[j] - population_size * self.col_means[j]) / self.col_sds[j]
        })))
    }

    /// Component totals `t_z = Vᵀ t_x` from standardized totals.
    pub fn component_totals(&self, standardized_totals: ArrayView1<'_, f64>) -> Array1<f64> {
        self.loadings.t().dot(&standardized_totals)
    }
}

/// `Σ_{j<c} λ_j / Σ_j λ_j`.
pub fn explained_variance(eigenvalues: ArrayView1<'_, f64>, c: usize) -> Result<f64> {
    let q = eigenvalues.len();
    if c < 1 || c > q {
        return Err(Error::out_of_range("c", c as f64, format!("must lie in 1..={q}")));
    }
    let total = eigenvalues.sum();
    if total <= 0.0 {
        return Err(Error::out_of_range("eigenvalue sum", total, "must be positive"));
    }
    Ok(eigenvalues.iter().take(c).sum::<f64>() / total)
}

/// PCA of a standardized population matrix (unit-weight covariance).
pub fn fit_pca(x: &DataMatrix) -> Result<PcaModel> {
    if !x.is_standardized() {
        return Err(Error::InvalidConfig("fit_pca needs a standardized matrix".into()));
    }
    if x.nrows() < 2 {
        return Err(Error::out_of_range("rows", x.nrows() as f64, "need at least 2 rows"));
    }
    let cov = weighted_covariance(x.values(), &vec![1.0; x.nrows()])?;
    PcaModel::from_covariance(
        cov.view(),
        x.col_means().to_vec(),
        x.col_sds().to_vec(),
        PcaSource::Population,
    )
}

/// PCA estimated from sample rows in original units, weighting each row by
/// its design weight. Without explicit standardization, design-weighted
/// means and standard deviations (divisor Σ d_k) are used.
pub fn fit_pca_from_sample(
    sample_rows: ArrayView2<'_, f64>,
    design_weights: &[f64],
    standardization: Option<(&[f64], &[f64])>,
) -> Result<PcaModel> {
    let (n, q) = sample_rows.dim();
    if design_weights.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: design_weights.len(),
            context: "design weights",
        });
    }
    if n < 2 || design_weights.iter().filter(|&&d| d > 0.0).count() < 2 {
        return Err(Error::DegenerateWeights);
    }
    let (means, sds) = match standardization {
        Some((m, s)) => {
            if m.len() != q || s.len() != q {
                return Err(Error::DimensionMismatch {
                    expected: q,
                    got: m.len().min(s.len()),
                    context: "standardization metadata",
                });
            }
            (m.to_vec(), s.to_vec())
        }
        None => weighted_moments(sample_rows, design_weights)?,
    };
    let mut z = sample_rows.to_owned();
    for (j, mut col) in z.columns_mut().into_iter().enumerate() {
        col.mapv_inplace(|v| (v - means[j]) / sds[j]);
    }
    let cov = weighted_covariance(z.view(), design_weights)?;
    PcaModel::from_covariance(cov.view(), means, sds, PcaSource::DesignWeightedSample)
}

/// Design-weighted column means and standard deviations (divisor Σ d_k).
pub fn weighted_moments(rows: ArrayView2<'_, f64>, weights: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let total: f64 = weights.iter().sum();
    let mut means = Vec::with_capacity(rows.ncols());
    let mut sds = Vec::with_capacity(rows.ncols());
    for (j, col) in rows.columns().into_iter().enumerate() {
        let m = col.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / total;
        let var = col
            .iter()
            .zip(weights)
            .map(|(v, w)| w * (v - m) * (v - m))
            .sum::<f64>()
            / total;
        let sd = var.sqrt();
        if !(sd > 1e-12 * m.abs().max(1.0)) {
            return Err(Error::ZeroVarianceColumn { index: j });
        }
        means.push(m);
        sds.push(sd);
    }
    Ok((means, sds))
}

/// Important columns kept as-is plus a PCA of the remaining columns'
/// residuals after regressing them (with intercept) on the important ones.
#[derive(Debug, Clone)]
pub struct ResidualPca {
    pub important: Vec<usize>,
    pub remaining: Vec<usize>,
    /// N × c₁ standardized values of the important columns.
    pub important_block: Array2<f64>,
    /// PCA of the residual block. Residuals are already centered and are
    /// not rescaled, so the stored standardization is the identity.
    pub model: PcaModel,
    /// N × (q − c₁) residual component scores.
    pub residual_scores: Array2<f64>,
}

pub fn residual_pca(x: &DataMatrix, important: &[usize]) -> Result<ResidualPca> {
    if !x.is_standardized() {
        return Err(Error::InvalidConfig("residual_pca needs a standardized matrix".into()));
    }
    let q = x.ncols();
    if important.is_empty() || important.len() >= q {
        return Err(Error::out_of_range(
            "c1",
            important.len() as f64,
            format!("need 0 < c1 < q = {q}"),
        ));
    }
    let mut seen = vec![false; q];
    for &j in important {
        if j >= q || seen[j] {
            return Err(Error::out_of_range(
                "important index",
                j as f64,
                format!("indices must be distinct and below {q}"),
            ));
        }
        seen[j] = true;
    }
    let remaining: Vec<usize> = (0..q).filter(|&j| !seen[j]).collect();
    let values = x.values();
    let important_block = values.select(Axis(1), important);
    let rest = values.select(Axis(1), &remaining);
    let residuals = regress_residuals(rest.view(), important_block.view())?;
    let cov = weighted_covariance(residuals.view(), &vec![1.0; x.nrows()])?;
    let r = remaining.len();
    let model = PcaModel::from_covariance(cov.view(), vec![0.0; r], vec![1.0; r], PcaSource::Population)?;
    let residual_scores = residuals.dot(&model.loadings);
    Ok(ResidualPca {
        important: important.to_vec(),
        remaining,
        important_block,
        model,
        residual_scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrixops::standardize_columns;
    use crate::rng::{stream, Purpose};
    use crate::varsampling::srswor;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn names(q: usize) -> Vec<String> {
        (0..q).map(|j| format!("x{j}")).collect()
    }

    fn random_standardized(seed: u64, n: usize, q: usize) -> DataMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = Array2::from_shape_fn((n, q), |_| rng.sample::<f64, _>(StandardNormal));
        standardize_columns(raw.view(), names(q)).unwrap()
    }

    #[test]
    fn perfectly_correlated_pair() {
        let raw = array![[1.0, 2.0], [2.0, 4.0], [4.0, 8.0], [-1.0, -2.0]];
        let x = standardize_columns(raw.view(), names(2)).unwrap();
        let m = fit_pca(&x).unwrap();
        assert!((m.eigenvalues[0] - 2.0).abs() < 1e-12);
        assert!(m.eigenvalues[1].abs() < 1e-12);
        assert!(m.eigenvalues[1] >= 0.0);
    }

    #[test]
    fn uncorrelated_columns_have_unit_eigenvalues() {
        let raw = array![[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]];
        let x = standardize_columns(raw.view(), names(2)).unwrap();
        let m = fit_pca(&x).unwrap();
        assert!(m.eigenvalues.iter().all(|l| (l - 1.0).abs() < 1e-12));
        // identity loadings → scores are the standardized inputs
        let s = m.scores(raw.view()).unwrap();
        for (a, b) in s.iter().zip(x.values().iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn reconstruction_of_random_covariance() {
        let x = random_standardized(2, 50, 5);
        let m = fit_pca(&x).unwrap();
        let cov = weighted_covariance(x.values(), &[1.0; 50]).unwrap();
        let rec = (&m.loadings * &m.eigenvalues.view().insert_axis(Axis(0))).dot(&m.loadings.t());
        for (a, b) in rec.iter().zip(cov.iter()) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn population_scores_are_centered_with_variance_lambda() {
        let x = random_standardized(4, 60, 6);
        let m = fit_pca(&x).unwrap();
        let s = m.scores(x.original_values().view()).unwrap();
        for (j, col) in s.columns().into_iter().enumerate() {
            let mean = col.sum() / 60.0;
            assert!(mean.abs() < 1e-8);
            let var = col.iter().map(|v| v * v).sum::<f64>() / 60.0;
            assert!((var - m.eigenvalues[j]).abs() < 1e-6);
        }
    }

    #[test]
    fn scores_invert_through_loadings() {
        let x = random_standardized(9, 20, 4);
        let m = fit_pca(&x).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let rows = Array2::from_shape_fn((7, 4), |_| rng.random_range(-3.0..3.0));
        let s = m.scores(rows.view()).unwrap();
        let back = s.dot(&m.loadings.t());
        let want = m.standardize_rows(rows.view()).unwrap();
        for (a, b) in back.iter().zip(want.iter()) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!(matches!(
            m.scores(Array2::zeros((2, 3)).view()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn explained_variance_cases() {
        assert_eq!(explained_variance(array![3.0, 1.0].view(), 1).unwrap(), 0.75);
        assert_eq!(explained_variance(array![3.0, 1.0].view(), 2).unwrap(), 1.0);
        assert!(matches!(
            explained_variance(array![3.0, 1.0].view(), 0),
            Err(Error::OutOfRange { .. })
        ));
        assert!(matches!(
            explained_variance(array![3.0, 1.0].view(), 3),
            Err(Error::OutOfRange { .. })
        ));
        // 87 standardized variables (eigenvalue sum 87) with λ₁ = 7.14
        let mut l = vec![(87.0 - 7.14) / 86.0; 87];
        l[0] = 7.14;
        let f = explained_variance(Array1::from(l).view(), 1).unwrap();
        assert!((f - 7.14 / 87.0).abs() < 1e-12);
        assert!((f - 0.0821).abs() < 1e-4);
    }

    #[test]
    fn census_sample_reproduces_population_model() {
        let x = random_standardized(12, 40, 5);
        let pop = fit_pca(&x).unwrap();
        let raw = x.original_values();
        let smp = fit_pca_from_sample(raw.view(), &[1.0; 40], None).unwrap();
        assert_eq!(smp.source, PcaSource::DesignWeightedSample);
        for (a, b) in pop.eigenvalues.iter().zip(smp.eigenvalues.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn weight_two_equals_duplicated_row() {
        let raw = array![[1.0, 2.0], [3.0, -1.0], [0.5, 0.0], [2.0, 2.5]];
        let weighted = fit_pca_from_sample(raw.view(), &[2.0, 1.0, 1.0, 1.0], None).unwrap();
        let dup = array![[1.0, 2.0], [1.0, 2.0], [3.0, -1.0], [0.5, 0.0], [2.0, 2.5]];
        let physical = fit_pca_from_sample(dup.view(), &[1.0; 5], None).unwrap();
        for (a, b) in weighted.eigenvalues.iter().zip(physical.eigenvalues.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in weighted.loadings.iter().zip(physical.loadings.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn sample_estimate_of_leading_eigenvalue_is_consistent() {
        // three variables driven by one strong factor
        let big_n = 2000;
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let raw = Array2::from_shape_fn((big_n, 3), |_| 0.0);
        let mut raw = raw;
        for k in 0..big_n {
            let f: f64 = rng.sample(StandardNormal);
            for j in 0..3 {
                let e: f64 = rng.sample(StandardNormal);
                raw[[k, j]] = f + 0.6 * e;
            }
        }
        let x = standardize_columns(raw.view(), names(3)).unwrap();
        let lambda1 = fit_pca(&x).unwrap().eigenvalues[0];

        let reps = 2000;
        let n = big_n / 2;
        let estimates: Vec<f64> = (0..reps)
            .map(|r| {
                let design = srswor(big_n, n, &mut stream(5, Purpose::Adhoc, r as u64)).unwrap();
                let rows = raw.select(Axis(0), design.sample_indices());
                let d = design.sample_design_weights();
                fit_pca_from_sample(rows.view(), &d, None).unwrap().eigenvalues[0]
            })
            .collect();
        let mean = estimates.iter().sum::<f64>() / reps as f64;
        let sd = (estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
        let se = sd / (reps as f64).sqrt();
        assert!((mean - lambda1).abs() <= 3.0 * se, "mean {mean} vs {lambda1}, se {se}");
    }

    #[test]
    fn residual_of_copied_column_is_a_zero_eigenvalue() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut raw = Array2::from_shape_fn((30, 4), |_| rng.sample::<f64, _>(StandardNormal));
        let c0 = raw.column(0).to_owned();
        raw.column_mut(3).assign(&c0);
        let x = standardize_columns(raw.view(), names(4)).unwrap();
        let rp = residual_pca(&x, &[0]).unwrap();
        assert_eq!(rp.remaining, vec![1, 2, 3]);
        assert!(rp.model.eigenvalues[2].abs() < 1e-12);
    }

    #[test]
    fn orthogonal_important_column_leaves_plain_pca() {
        // column 0 is orthogonal to (and uncorrelated with) the others
        let raw = array![
            [1.0, 1.0, 2.0],
            [-1.0, 1.0, 2.0],
            [1.0, -1.0, 0.0],
            [-1.0, -1.0, 0.0],
            [1.0, 2.0, -1.0],
            [-1.0, 2.0, -1.0],
        ];
        let x = standardize_columns(raw.view(), names(3)).unwrap();
        let rp = residual_pca(&x, &[0]).unwrap();
        let plain = fit_pca(&x.select_columns(&[1, 2]).unwrap()).unwrap();
        for (a, b) in rp.model.eigenvalues.iter().zip(plain.eigenvalues.iter()) {
            assert!((a - b).abs() < 1e-8);
        }
        for (a, b) in rp.model.loadings.iter().zip(plain.loadings.iter()) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn residual_components_are_orthogonal_to_important_columns() {
        let x = random_standardized(31, 40, 6);
        let rp = residual_pca(&x, &[1, 4]).unwrap();
        assert_eq!(rp.residual_scores.ncols(), 4);
        let cross = rp.important_block.t().dot(&rp.residual_scores);
        assert!(cross.iter().all(|v| v.abs() <= 1e-6));
        // and to the intercept
        let sums = rp.residual_scores.sum_axis(Axis(0));
        assert!(sums.iter().all(|v| v.abs() <= 1e-8));
    }

    #[test]
    fn residual_pca_rejects_bad_indices() {
        let x = random_standardized(1, 10, 3);
        assert!(residual_pca(&x, &[]).is_err());
        assert!(residual_pca(&x, &[0, 1, 2]).is_err());
        assert!(residual_pca(&x, &[5]).is_err());
        assert!(residual_pca(&x, &[1, 1]).is_err());
    }

    #[test]
    fn component_totals_map_linearly() {
        let x = random_standardized(6, 25, 3);
        let m = fit_pca(&x).unwrap();
        let raw = x.original_values();
        let t_x = raw.sum_axis(Axis(0));
        let std_t = m.standardized_totals(t_x.as_slice().unwrap(), 25.0).unwrap();
        let tz = m.component_totals(std_t.view());
        assert!(tz.iter().all(|v| v.abs() < 1e-10));
        let s = m.scores(raw.view()).unwrap().sum_axis(Axis(0));
        for (a, b) in s.iter().zip(tz.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}
