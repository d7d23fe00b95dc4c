//! Linear (chi-square distance) calibration.
//!
//! For design weights `d_k`, unit scales `q_k` and calibration rows `z_k`,
//! the weights `w_k = d_k g_k` minimizing `Σ (w_k − d_k)² / (q_k d_k)`
//! subject to `Σ_S w_k z_k = t_z` are
//!
//! ```text
//! g_k = 1 + q_k z_kᵀ T⁻¹ (t_z − Σ_S d_k z_k),   T = Σ_S d_k q_k z_k z_kᵀ.
//! ```

use std::fmt;

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrixops::{sym_eigen, PivotedQr};

/// Calibration distance. Only the chi-square distance has a closed form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distance {
    #[default]
    ChiSquared,
}

/// What to do when `T` is rank deficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SingularityPolicy {
    #[default]
    Error,
    /// Minimum-norm solution through the pseudo-inverse of `T`.
    PseudoInverse,
}

impl std::str::FromStr for SingularityPolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "error" => Ok(SingularityPolicy::Error),
            "pseudo-inverse" | "pseudo_inverse" | "pinv" => Ok(SingularityPolicy::PseudoInverse),
            other => Err(Error::InvalidConfig(format!("unknown singularity policy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSpec {
    pub distance: Distance,
    /// Per-unit `q_k`; `None` means all ones.
    pub unit_scale: Option<Vec<f64>>,
    /// Append a constant variable whose total is the population size.
    pub include_intercept: bool,
    pub singularity_policy: SingularityPolicy,
    /// Relative eigenvalue threshold on `T` below which a direction counts
    /// as singular.
    pub pivot_tolerance: f64,
}

impl Default for CalibrationSpec {
    fn default() -> Self {
        Self {
            distance: Distance::ChiSquared,
            unit_scale: None,
            include_intercept: true,
            singularity_policy: SingularityPolicy::Error,
            pivot_tolerance: 1e-10,
        }
    }
}

impl CalibrationSpec {
    pub fn with_policy(mut self, policy: SingularityPolicy) -> Self {
        self.singularity_policy = policy;
        self
    }

    pub fn without_intercept(mut self) -> Self {
        self.include_intercept = false;
        self
    }

    fn scale_for(&self, n: usize) -> Result<Vec<f64>> {
        match &self.unit_scale {
            None => Ok(vec![1.0; n]),
            Some(q) => {
                if q.len() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        got: q.len(),
                        context: "unit scales q_k",
                    });
                }
                if let Some(&v) = q.iter().find(|&&v| !(v > 0.0)) {
                    return Err(Error::out_of_range("q_k", v, "must be positive"));
                }
                Ok(q.clone())
            }
        }
    }
}

/// Which estimator produced a weight system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EstimatorKind {
    #[serde(rename = "CAL")]
    Cal,
    #[serde(rename = "PCA")]
    Pca,
    #[serde(rename = "BAG")]
    Bag,
    #[serde(rename = "BAG+PCA")]
    BagPca,
    #[serde(rename = "HT")]
    Ht,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 5] = [
        EstimatorKind::Cal,
        EstimatorKind::Pca,
        EstimatorKind::Bag,
        EstimatorKind::BagPca,
        EstimatorKind::Ht,
    ];

    pub fn label(self) -> &'static str {
        match self {
            EstimatorKind::Cal => "CAL",
            EstimatorKind::Pca => "PCA",
            EstimatorKind::Bag => "BAG",
            EstimatorKind::BagPca => "BAG+PCA",
            EstimatorKind::Ht => "HT",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "CAL" => Ok(EstimatorKind::Cal),
            "PCA" => Ok(EstimatorKind::Pca),
            "BAG" => Ok(EstimatorKind::Bag),
            "BAG+PCA" | "BAGPCA" | "BAG-PCA" => Ok(EstimatorKind::BagPca),
            "HT" => Ok(EstimatorKind::Ht),
            other => Err(Error::InvalidConfig(format!("unknown estimator `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub estimator: EstimatorKind,
    /// Bagging iterations B (1 for a single calibration, 0 for HT).
    pub iterations: usize,
    pub c: Option<usize>,
    pub alpha: Option<f64>,
    pub seed: Option<u64>,
    pub calibrated_exactly_on: Vec<String>,
    /// Number of calibrations that fell back to the pseudo-inverse.
    pub rank_deficient: usize,
    /// Bagging iterations dropped because their system was singular.
    pub failed_iterations: usize,
}

impl Provenance {
    pub fn new(estimator: EstimatorKind) -> Self {
        Self {
            estimator,
            iterations: 0,
            c: None,
            alpha: None,
            seed: None,
            calibrated_exactly_on: Vec::new(),
            rank_deficient: 0,
            failed_iterations: 0,
        }
    }
}

/// Final weights `w_k = d_k g_k` for the sampled units.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSystem {
    /// Row positions of the units in the caller's sample frame.
    pub unit_ids: Vec<usize>,
    pub design_weights: Vec<f64>,
    pub g: Vec<f64>,
    pub w: Vec<f64>,
    pub provenance: Provenance,
}

impl WeightSystem {
    pub fn new(unit_ids: Vec<usize>, design_weights: Vec<f64>, g: Vec<f64>, provenance: Provenance) -> Result<Self> {
        let n = design_weights.len();
        for (len, context) in [(unit_ids.len(), "unit ids"), (g.len(), "g-weights")] {
            if len != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: len,
                    context,
                });
            }
        }
        let w = design_weights.iter().zip(&g).map(|(d, g)| d * g).collect();
        Ok(Self {
            unit_ids,
            design_weights,
            g,
            w,
            provenance,
        })
    }

    /// Horvitz–Thompson weights (`g ≡ 1`).
    pub fn horvitz_thompson(design_weights: Vec<f64>) -> Self {
        let n = design_weights.len();
        let mut p = Provenance::new(EstimatorKind::Ht);
        p.iterations = 0;
        Self::new((0..n).collect(), design_weights, vec![1.0; n], p).expect("consistent lengths")
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    /// `Σ_S w_k y_k`.
    pub fn total(&self, y: &[f64]) -> Result<f64> {
        if y.len() != self.w.len() {
            return Err(Error::DimensionMismatch {
                expected: self.w.len(),
                got: y.len(),
                context: "response values",
            });
        }
        Ok(self.w.iter().zip(y).map(|(w, y)| w * y).sum())
    }
}

/// Factorization of `T = Σ d_k q_k z_k z_kᵀ` reused for several right-hand sides.
pub(crate) struct GramSolver {
    kind: SolverKind,
    pub(crate) rank_deficient: bool,
}

enum SolverKind {
    Empty,
    Qr(PivotedQr),
    Pinv { vectors: Array2<f64>, inv_values: Vec<f64> },
}

impl GramSolver {
    /// `z` is n × p (intercept already included), `dq` holds `d_k q_k`.
    pub(crate) fn new(z: ArrayView2<'_, f64>, dq: &[f64], spec: &CalibrationSpec) -> Result<Self> {
        let (n, p) = z.dim();
        if p == 0 {
            return Ok(Self {
                kind: SolverKind::Empty,
                rank_deficient: false,
            });
        }
        let mut weighted = z.to_owned();
        for (mut row, &s) in weighted.rows_mut().into_iter().zip(dq) {
            let r = s.sqrt();
            row.mapv_inplace(|v| v * r);
        }
        // pivots of R are square roots of the Gram scale
        let qr = PivotedQr::new(weighted.view(), spec.pivot_tolerance.sqrt());
        if qr.rank() == p {
            return Ok(Self {
                kind: SolverKind::Qr(qr),
                rank_deficient: false,
            });
        }
        match spec.singularity_policy {
            SingularityPolicy::Error => Err(Error::SingularSystem { rank: qr.rank(), dim: p }),
            SingularityPolicy::PseudoInverse => {
                let _ = n;
                let gram = weighted.t().dot(&weighted);
                let eig = sym_eigen(gram.view())?;
                let top = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
                let cut = spec.pivot_tolerance * top;
                let inv_values = eig
                    .eigenvalues
                    .iter()
                    .map(|&l| if l > cut && l > 0.0 { 1.0 / l } else { 0.0 })
                    .collect();
                Ok(Self {
                    kind: SolverKind::Pinv {
                        vectors: eig.eigenvectors,
                        inv_values,
                    },
                    rank_deficient: true,
                })
            }
        }
    }

    pub(crate) fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        match &self.kind {
            SolverKind::Empty => Vec::new(),
            SolverKind::Qr(qr) => qr.solve_gram(rhs),
            SolverKind::Pinv { vectors, inv_values } => {
                let p = rhs.len();
                let mut out = vec![0.0; p];
                for (i, &inv) in inv_values.iter().enumerate() {
                    if inv == 0.0 {
                        continue;
                    }
                    let proj: f64 = (0..p).map(|k| vectors[[k, i]] * rhs[k]).sum::<f64>() * inv;
                    for (k, o) in out.iter_mut().enumerate() {
                        *o += vectors[[k, i]] * proj;
                    }
                }
                out
            }
        }
    }
}

/// Result of one calibration on an explicit variable matrix.
#[derive(Debug, Clone)]
pub(crate) struct GSolution {
    pub g: Vec<f64>,
    pub rank_deficient: bool,
}

/// Core solve on a matrix that already contains every calibration variable.
pub(crate) fn calibrate_g(
    z: ArrayView2<'_, f64>,
    d: &[f64],
    totals: &[f64],
    spec: &CalibrationSpec,
) -> Result<GSolution> {
    let (n, p) = z.dim();
    if d.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: d.len(),
            context: "design weights",
        });
    }
    if totals.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: totals.len(),
            context: "calibration totals",
        });
    }
    if let Some(&v) = d.iter().find(|&&v| !(v > 0.0)) {
        return Err(Error::out_of_range("design weight", v, "must be positive"));
    }
    let q = spec.scale_for(n)?;
    let dq: Vec<f64> = d.iter().zip(&q).map(|(d, q)| d * q).collect();
    let solver = GramSolver::new(z, &dq, spec)?;
    let mut rhs = totals.to_vec();
    for (row, &dk) in z.rows().into_iter().zip(d) {
        for (r, &v) in rhs.iter_mut().zip(row.iter()) {
            *r -= dk * v;
        }
    }
    let lambda = solver.solve(&rhs);
    let g = z
        .rows()
        .into_iter()
        .zip(&q)
        .map(|(row, &qk)| 1.0 + qk * row.iter().zip(&lambda).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    Ok(GSolution {
        g,
        rank_deficient: solver.rank_deficient,
    })
}

/// Appends a column of ones (and the population size to the totals) when
/// `spec.include_intercept` is set.
pub(crate) fn calibration_inputs(
    z_s: ArrayView2<'_, f64>,
    totals: &[f64],
    population_size: f64,
    spec: &CalibrationSpec,
) -> (Array2<f64>, Vec<f64>) {
    if !spec.include_intercept {
        return (z_s.to_owned(), totals.to_vec());
    }
    let (n, p) = z_s.dim();
    let mut z = Array2::ones((n, p + 1));
    z.slice_mut(ndarray::s![.., ..p]).assign(&z_s);
    let mut t = totals.to_vec();
    t.push(population_size);
    (z, t)
}

/// Chi-square calibration of the design weights `d` on the rows of `z_s`.
///
/// With `spec.include_intercept` a constant variable with total
/// `population_size` is appended; otherwise `population_size` is unused.
pub fn chi2_calibrate(
    z_s: ArrayView2<'_, f64>,
    d: &[f64],
    totals: &[f64],
    population_size: f64,
    spec: &CalibrationSpec,
) -> Result<WeightSystem> {
    if totals.len() != z_s.ncols() {
        return Err(Error::DimensionMismatch {
            expected: z_s.ncols(),
            got: totals.len(),
            context: "calibration totals",
        });
    }
    let (z, t) = calibration_inputs(z_s, totals, population_size, spec);
    let sol = calibrate_g(z.view(), d, &t, spec)?;
    let mut prov = Provenance::new(EstimatorKind::Cal);
    prov.iterations = 1;
    prov.rank_deficient = usize::from(sol.rank_deficient);
    WeightSystem::new((0..d.len()).collect(), d.to_vec(), sol.g, prov)
}

/// `max_j |Σ_k w_k z_kj − t_j| / max(1, |t_j|)`.
pub fn calibration_residual(z_s: ArrayView2<'_, f64>, w: &[f64], totals: &[f64]) -> Result<f64> {
    let (n, p) = z_s.dim();
    if w.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: w.len(),
            context: "weights",
        });
    }
    if totals.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: totals.len(),
            context: "calibration totals",
        });
    }
    let est = z_s.t().dot(&Array1::from(w.to_vec()));
    Ok(est
        .iter()
        .zip(totals)
        .map(|(e, t)| (e - t).abs() / t.abs().max(1.0))
        .fold(0.0, f64::max))
}

/// Coefficient of variation of g-weights: sample sd (divisor n − 1) over mean.
pub fn weight_cv(g: &[f64]) -> Result<f64> {
    let n = g.len();
    if n < 2 {
        return Err(Error::out_of_range("n", n as f64, "need at least 2 weights"));
    }
    let mean = g.iter().sum::<f64>() / n as f64;
    if mean == 0.0 {
        return Err(Error::ZeroMean);
    }
    let var = g.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    Ok(var.sqrt() / mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Dense Gaussian elimination with partial pivoting.
    fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for col in 0..n {
            let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
            a.swap(col, piv);
            b.swap(col, piv);
            for row in (col + 1)..n {
                let f = a[row][col] / a[col][col];
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = ((i + 1)..n).map(|k| a[i][k] * x[k]).sum();
            x[i] = (b[i] - s) / a[i][i];
        }
        x
    }

    /// Weights from the KKT system of min Σ (w−d)²/(q d) s.t. Zᵀw = t.
    fn kkt_weights(z: &Array2<f64>, d: &[f64], q: &[f64], t: &[f64]) -> Vec<f64> {
        let (n, p) = z.dim();
        let dim = n + p;
        let mut a = vec![vec![0.0; dim]; dim];
        let mut b = vec![0.0; dim];
        for k in 0..n {
            a[k][k] = 2.0 / (q[k] * d[k]);
            for j in 0..p {
                a[k][n + j] = -z[[k, j]];
                a[n + j][k] = z[[k, j]];
            }
            b[k] = 2.0 / q[k];
        }
        b[n..].copy_from_slice(t);
        gauss_solve(a, b)[..n].to_vec()
    }

    fn random_instance(seed: u64, n: usize, p: usize) -> (Array2<f64>, Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = Array2::from_shape_fn((n, p), |_| rng.random_range(-2.0..2.0));
        let d: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..5.0)).collect();
        let t: Vec<f64> = (0..p).map(|_| rng.random_range(-10.0..10.0)).collect();
        (z, d, t)
    }

    #[test]
    fn one_constant_variable() {
        let z = array![[1.0], [1.0]];
        let spec = CalibrationSpec::default().without_intercept();
        let ws = chi2_calibrate(z.view(), &[2.0, 3.0], &[10.0], 10.0, &spec).unwrap();
        assert!((ws.g[0] - 2.0).abs() < 1e-14 && (ws.g[1] - 2.0).abs() < 1e-14);
        assert!((ws.w[0] - 4.0).abs() < 1e-14 && (ws.w[1] - 6.0).abs() < 1e-14);
        // the same through the injected intercept alone
        let empty = Array2::<f64>::zeros((2, 0));
        let ws2 = chi2_calibrate(empty.view(), &[2.0, 3.0], &[], 10.0, &CalibrationSpec::default()).unwrap();
        assert_eq!(ws.g, ws2.g);
        assert!((ws2.w.iter().sum::<f64>() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn census_leaves_weights_alone() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z = Array2::from_shape_fn((12, 3), |_| rng.random_range(-1.0..1.0));
        let totals: Vec<f64> = z.sum_axis(ndarray::Axis(0)).to_vec();
        let ws = chi2_calibrate(z.view(), &[1.0; 12], &totals, 12.0, &CalibrationSpec::default()).unwrap();
        assert!(ws.g.iter().all(|g| (g - 1.0).abs() < 1e-12));
    }

    #[test]
    fn matches_kkt_oracle() {
        let (z, d, t) = random_instance(7, 20, 4);
        let spec = CalibrationSpec::default().without_intercept();
        let ws = chi2_calibrate(z.view(), &d, &t, 0.0, &spec).unwrap();
        let want = kkt_weights(&z, &d, &[1.0; 20], &t);
        for (a, b) in ws.w.iter().zip(&want) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!(calibration_residual(z.view(), &ws.w, &t).unwrap() <= 1e-8);
    }

    #[test]
    fn unit_scales_enter_the_kkt_system() {
        let (z, d, t) = random_instance(17, 15, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q: Vec<f64> = (0..15).map(|_| rng.random_range(0.5..2.0)).collect();
        let spec = CalibrationSpec {
            unit_scale: Some(q.clone()),
            ..CalibrationSpec::default().without_intercept()
        };
        let ws = chi2_calibrate(z.view(), &d, &t, 0.0, &spec).unwrap();
        let want = kkt_weights(&z, &d, &q, &t);
        for (a, b) in ws.w.iter().zip(&want) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn singular_system_policies() {
        let z = array![[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]];
        let spec = CalibrationSpec::default().without_intercept();
        assert_eq!(
            chi2_calibrate(z.view(), &[1.0; 3], &[7.0, 14.0], 0.0, &spec),
            Err(Error::SingularSystem { rank: 1, dim: 2 })
        );
        let ws = chi2_calibrate(
            z.view(),
            &[1.0; 3],
            &[7.0, 14.0],
            0.0,
            &spec.with_policy(SingularityPolicy::PseudoInverse),
        )
        .unwrap();
        assert_eq!(ws.provenance.rank_deficient, 1);
        // consistent constraints are still met exactly
        assert!(calibration_residual(z.view(), &ws.w, &[7.0, 14.0]).unwrap() < 1e-10);
    }

    #[test]
    fn residual_diagnostics() {
        let z = array![[1.0], [1.0]];
        assert_eq!(calibration_residual(z.view(), &[4.0, 6.0], &[10.0]).unwrap(), 0.0);
        // HT weights on a centered variable with total 0
        let z = array![[1.0], [-0.5], [2.0]];
        let r = calibration_residual(z.view(), &[2.0, 2.0, 2.0], &[0.0]).unwrap();
        assert!((r - 5.0).abs() < 1e-14);
        assert!(calibration_residual(z.view(), &[1.0], &[0.0]).is_err());
    }

    #[test]
    fn cv_examples() {
        assert_eq!(weight_cv(&[1.0, 1.0, 1.0]).unwrap(), 0.0);
        assert!((weight_cv(&[1.0, 3.0]).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(weight_cv(&[-1.0, 1.0]), Err(Error::ZeroMean));
    }

    #[test]
    fn rejects_bad_unit_scales() {
        let z = array![[1.0], [2.0]];
        let spec = CalibrationSpec {
            unit_scale: Some(vec![1.0, 0.0]),
            ..CalibrationSpec::default()
        };
        assert!(chi2_calibrate(z.view(), &[1.0, 1.0], &[3.0], 2.0, &spec).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn span_invariance(seed in any::<u64>(), p in 1usize..6) {
                let (z, d, t) = random_instance(seed, 25, p);
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
                // diagonally dominant → invertible
                let m = Array2::from_shape_fn((p, p), |(i, j)| {
                    if i == j { 3.0 + rng.random_range(0.0..1.0) } else { rng.random_range(-0.5..0.5) }
                });
                let zm = z.dot(&m);
                let tm = Array1::from(t.clone()).dot(&m).to_vec();
                let spec = CalibrationSpec::default();
                let a = chi2_calibrate(z.view(), &d, &t, 60.0, &spec).unwrap();
                let b = chi2_calibrate(zm.view(), &d, &tm, 60.0, &spec).unwrap();
                for (x, y) in a.g.iter().zip(&b.g) {
                    prop_assert!((x - y).abs() <= 1e-8 * x.abs().max(1.0));
                }
            }

            #[test]
            fn exact_and_optimal(seed in any::<u64>(), p in 1usize..8) {
                let (z, d, t) = random_instance(seed, 30, p);
                let spec = CalibrationSpec::default().without_intercept();
                let ws = chi2_calibrate(z.view(), &d, &t, 0.0, &spec).unwrap();
                prop_assert!(calibration_residual(z.view(), &ws.w, &t).unwrap() <= 1e-8);
                // gradient 2(w − d)/d must lie in the column space of Z
                let grad: Vec<f64> = ws.w.iter().zip(&d).map(|(w, d)| 2.0 * (w - d) / d).collect();
                let qr = PivotedQr::new(z.view(), 1e-12);
                let r = qr.residual(Array1::from(grad.clone()).view());
                let scale = grad.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
                prop_assert!(r.iter().all(|v| v.abs() <= 1e-8 * scale));
            }

            #[test]
            fn feasible_start_is_a_fixed_point(seed in any::<u64>(), p in 1usize..5) {
                let (z, d, _) = random_instance(seed, 20, p);
                let t: Vec<f64> = z.t().dot(&Array1::from(d.clone())).to_vec();
                let big_n: f64 = d.iter().sum();
                let ws = chi2_calibrate(z.view(), &d, &t, big_n, &CalibrationSpec::default()).unwrap();
                prop_assert!(ws.g.iter().all(|g| (g - 1.0).abs() <= 1e-10));
            }
        }
    }
}
