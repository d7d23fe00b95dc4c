//! Dense real linear algebra: column standardization, weighted covariance,
//! a cyclic Jacobi eigensolver for symmetric matrices and column-pivoted
//! Householder QR for least squares.
//!
//! Matrices are `ndarray::Array2<f64>` with one row per unit and one column
//! per variable. Variances use the population divisor (N, or the weight
//! total), so a standardized matrix has a correlation matrix whose trace is
//! exactly the number of columns.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Sweep cap for the Jacobi solver.
pub const JACOBI_MAX_SWEEPS: usize = 100;
/// Convergence threshold: off-diagonal Frobenius norm relative to the trace.
pub const JACOBI_REL_TOL: f64 = 1e-12;
/// Asymmetry tolerated (and symmetrized away) by [`sym_eigen`].
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Relative pivot threshold on `|R_kk| / |R_00|` for least-squares fits.
pub const LSQ_RANK_TOL: f64 = 1e-10;

/// Auxiliary data: one row per unit, one column per variable.
///
/// When `standardized` is set, `values` are `(raw - col_means) / col_sds`
/// and the means and standard deviations are kept in original units.
/// A raw matrix stores the identity transform (means 0, sds 1).
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: Array2<f64>,
    column_names: Vec<String>,
    standardized: bool,
    col_means: Vec<f64>,
    col_sds: Vec<f64>,
}

impl DataMatrix {
    /// Wraps raw values without transforming them.
    pub fn raw(values: Array2<f64>, column_names: Vec<String>) -> Result<Self> {
        let q = values.ncols();
        if column_names.len() != q {
            return Err(Error::DimensionMismatch {
                expected: q,
                got: column_names.len(),
                context: "column names",
            });
        }
        Ok(Self {
            values,
            column_names,
            standardized: false,
            col_means: vec![0.0; q],
            col_sds: vec![1.0; q],
        })
    }

    /// Standardized copy of a raw matrix. Standardizing an already
    /// standardized matrix returns it unchanged.
    pub fn standardize(&self) -> Result<Self> {
        if self.standardized {
            return Ok(self.clone());
        }
        standardize_columns(self.values.view(), self.column_names.clone())
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    pub fn col_means(&self) -> &[f64] {
        &self.col_means
    }

    pub fn col_sds(&self) -> &[f64] {
        &self.col_sds
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    /// Column totals in the units of `values`.
    pub fn column_totals(&self) -> Array1<f64> {
        self.values.sum_axis(Axis(0))
    }

    /// Column totals in original units.
    pub fn original_totals(&self) -> Array1<f64> {
        let n = self.nrows() as f64;
        let t = self.column_totals();
        Array1::from_iter(
            t.iter()
                .zip(self.col_means.iter().zip(&self.col_sds))
                .map(|(&t, (&m, &s))| t * s + n * m),
        )
    }

    /// Rows mapped back to original units.
    pub fn original_values(&self) -> Array2<f64> {
        let mut out = self.values.clone();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            let (m, s) = (self.col_means[j], self.col_sds[j]);
            col.mapv_inplace(|v| v * s + m);
        }
        out
    }

    /// Submatrix of the given columns (metadata carried along).
    pub fn select_columns(&self, indices: &[usize]) -> Result<Self> {
        for &j in indices {
            if j >= self.ncols() {
                return Err(Error::out_of_range(
                    "column index",
                    j as f64,
                    format!("matrix has {} columns", self.ncols()),
                ));
            }
        }
        Ok(Self {
            values: self.values.select(Axis(1), indices),
            column_names: indices.iter().map(|&j| self.column_names[j].clone()).collect(),
            standardized: self.standardized,
            col_means: indices.iter().map(|&j| self.col_means[j]).collect(),
            col_sds: indices.iter().map(|&j| self.col_sds[j]).collect(),
        })
    }
}

/// Centers and scales every column (divisor N).
pub fn standardize_columns(raw: ArrayView2<'_, f64>, names: Vec<String>) -> Result<DataMatrix> {
    let (n, q) = raw.dim();
    if names.len() != q {
        return Err(Error::DimensionMismatch {
            expected: q,
            got: names.len(),
            context: "column names",
        });
    }
    if n < 2 {
        return Err(Error::out_of_range("rows", n as f64, "need at least 2 rows"));
    }
    let mut values = raw.to_owned();
    let mut col_means = Vec::with_capacity(q);
    let mut col_sds = Vec::with_capacity(q);
    for (j, mut col) in values.columns_mut().into_iter().enumerate() {
        let mean = col.sum() / n as f64;
        let var = col.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let sd = var.sqrt();
        if !(sd > 1e-12 * mean.abs().max(1.0)) {
            return Err(Error::ZeroVarianceColumn { index: j });
        }
        col.mapv_inplace(|v| (v - mean) / sd);
        col_means.push(mean);
        col_sds.push(sd);
    }
    Ok(DataMatrix {
        values,
        column_names: names,
        standardized: true,
        col_means,
        col_sds,
    })
}

/// Weighted covariance `Σ ω_k (x_k − x̄)(x_k − x̄)ᵀ / Σ ω_k` with the
/// ω-weighted mean. Unit weights give the population covariance (divisor N).
pub fn weighted_covariance(x: ArrayView2<'_, f64>, weights: &[f64]) -> Result<Array2<f64>> {
    let (n, q) = x.dim();
    if weights.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: weights.len(),
            context: "covariance weights",
        });
    }
    if let Some(&w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
        return Err(Error::out_of_range("weight", w, "weights must be finite and nonnegative"));
    }
    if weights.iter().filter(|&&w| w > 0.0).count() < 2 {
        return Err(Error::DegenerateWeights);
    }
    let total: f64 = weights.iter().sum();
    let mut mean = vec![0.0; q];
    for (row, &w) in x.rows().into_iter().zip(weights) {
        for (m, &v) in mean.iter_mut().zip(row.iter()) {
            *m += w * v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= total);

    let mut cov = Array2::<f64>::zeros((q, q));
    let mut centered = vec![0.0; q];
    for (row, &w) in x.rows().into_iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        for ((c, &v), &m) in centered.iter_mut().zip(row.iter()).zip(&mean) {
            *c = v - m;
        }
        for i in 0..q {
            let wi = w * centered[i];
            for j in i..q {
                cov[[i, j]] += wi * centered[j];
            }
        }
    }
    for i in 0..q {
        for j in i..q {
            let v = cov[[i, j]] / total;
            cov[[i, j]] = v;
            cov[[j, i]] = v;
        }
    }
    Ok(cov)
}

/// Eigenpairs of a symmetric matrix, eigenvalues descending and column `j`
/// of `eigenvectors` paired with `eigenvalues[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymEigen {
    pub eigenvalues: Array1<f64>,
    pub eigenvectors: Array2<f64>,
}

impl SymEigen {
    /// `V diag(λ) Vᵀ`.
    pub fn reconstruct(&self) -> Array2<f64> {
        let scaled = &self.eigenvectors * &self.eigenvalues.view().insert_axis(Axis(0));
        scaled.dot(&self.eigenvectors.t())
    }
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Converges when the off-diagonal Frobenius norm drops below
/// `1e-12 · max(|trace|, ‖A‖_F)`. Each eigenvector is signed so that its
/// largest-magnitude entry (lowest index on ties) is positive.
pub fn sym_eigen(a: ArrayView2<'_, f64>) -> Result<SymEigen> {
    let (n, m) = a.dim();
    if n != m {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: m,
            context: "square matrix",
        });
    }
    let mut max_asym = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            max_asym = max_asym.max((a[[i, j]] - a[[j, i]]).abs());
        }
    }
    if max_asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric {
            max_asymmetry: max_asym,
        });
    }

    // row-major working copies
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            w[i * n + j] = 0.5 * (a[[i, j]] + a[[j, i]]);
        }
    }
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    let trace: f64 = (0..n).map(|i| w[i * n + i]).sum();
    let fro = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = JACOBI_REL_TOL * trace.abs().max(fro);

    let mut converged = fro == 0.0;
    for _ in 0..JACOBI_MAX_SWEEPS {
        if converged {
            break;
        }
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += 2.0 * w[p * n + q] * w[p * n + q];
            }
        }
        if off.sqrt() <= tol {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = w[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let tau = (w[q * n + q] - w[p * n + p]) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // A ← A J
                for k in 0..n {
                    let akp = w[k * n + p];
                    let akq = w[k * n + q];
                    w[k * n + p] = c * akp - s * akq;
                    w[k * n + q] = s * akp + c * akq;
                }
                // A ← Jᵀ A
                for k in 0..n {
                    let apk = w[p * n + k];
                    let aqk = w[q * n + k];
                    w[p * n + k] = c * apk - s * aqk;
                    w[q * n + k] = s * apk + c * aqk;
                }
                w[p * n + q] = 0.0;
                w[q * n + p] = 0.0;
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += 2.0 * w[p * n + q] * w[p * n + q];
            }
        }
        if off.sqrt() > tol {
            return Err(Error::NoConvergence {
                sweeps: JACOBI_MAX_SWEEPS,
            });
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    // stable sort keeps the lower index first on ties
    order.sort_by(|&i, &j| w[j * n + j].total_cmp(&w[i * n + i]));

    let mut eigenvalues = Array1::zeros(n);
    let mut eigenvectors = Array2::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        eigenvalues[dst] = w[src * n + src];
        let mut pivot = 0;
        for k in 0..n {
            if v[k * n + src].abs() > v[pivot * n + src].abs() {
                pivot = k;
            }
        }
        let sign = if v[pivot * n + src] < 0.0 { -1.0 } else { 1.0 };
        for k in 0..n {
            eigenvectors[[k, dst]] = sign * v[k * n + src];
        }
    }
    Ok(SymEigen {
        eigenvalues,
        eigenvectors,
    })
}

/// Householder QR with column pivoting, `A P = Q R`.
///
/// Factorization stops at the first pivot with `|R_kk| <= rel_tol · |R_00|`;
/// that step count is the numerical rank.
#[derive(Debug, Clone)]
pub struct PivotedQr {
    r: Array2<f64>,
    reflectors: Vec<(Vec<f64>, f64)>,
    perm: Vec<usize>,
    rank: usize,
}

impl PivotedQr {
    pub fn new(a: ArrayView2<'_, f64>, rel_tol: f64) -> Self {
        let (m, n) = a.dim();
        let mut r = a.to_owned();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut reflectors = Vec::new();
        let steps = m.min(n);
        let mut lead = 0.0_f64;
        let mut rank = 0;
        for k in 0..steps {
            // pivot on the largest remaining column norm
            let mut best = k;
            let mut best_norm = -1.0;
            for j in k..n {
                let s: f64 = (k..m).map(|i| r[[i, j]] * r[[i, j]]).sum();
                if s > best_norm {
                    best_norm = s;
                    best = j;
                }
            }
            if best != k {
                for i in 0..m {
                    r.swap([i, k], [i, best]);
                }
                perm.swap(k, best);
            }
            let norm = best_norm.max(0.0).sqrt();
            if k == 0 {
                lead = norm;
            }
            if norm == 0.0 || norm <= rel_tol * lead {
                break;
            }
            let x0 = r[[k, k]];
            let alpha = if x0 >= 0.0 { -norm } else { norm };
            let mut vk: Vec<f64> = (k..m).map(|i| r[[i, k]]).collect();
            vk[0] -= alpha;
            let vnorm2: f64 = vk.iter().map(|x| x * x).sum();
            let beta = if vnorm2 > 0.0 { 2.0 / vnorm2 } else { 0.0 };
            for j in k..n {
                let dot: f64 = vk.iter().enumerate().map(|(t, &vi)| vi * r[[k + t, j]]).sum();
                let f = beta * dot;
                if f != 0.0 {
                    for (t, &vi) in vk.iter().enumerate() {
                        r[[k + t, j]] -= f * vi;
                    }
                }
            }
            r[[k, k]] = alpha;
            for i in (k + 1)..m {
                r[[i, k]] = 0.0;
            }
            reflectors.push((vk, beta));
            rank = k + 1;
        }
        Self {
            r,
            reflectors,
            perm,
            rank,
        }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn ncols(&self) -> usize {
        self.perm.len()
    }

    /// `y ← Qᵀ y`.
    fn apply_qt(&self, y: &mut [f64]) {
        for (k, (vk, beta)) in self.reflectors.iter().enumerate() {
            let dot: f64 = vk.iter().zip(&y[k..]).map(|(a, b)| a * b).sum();
            let f = beta * dot;
            for (yi, &vi) in y[k..].iter_mut().zip(vk) {
                *yi -= f * vi;
            }
        }
    }

    /// `y ← Q y`.
    fn apply_q(&self, y: &mut [f64]) {
        for (k, (vk, beta)) in self.reflectors.iter().enumerate().rev() {
            let dot: f64 = vk.iter().zip(&y[k..]).map(|(a, b)| a * b).sum();
            let f = beta * dot;
            for (yi, &vi) in y[k..].iter_mut().zip(vk) {
                *yi -= f * vi;
            }
        }
    }

    /// Component of `y` orthogonal to the retained column space.
    pub fn residual(&self, y: ArrayView1<'_, f64>) -> Array1<f64> {
        let mut z = y.to_vec();
        self.apply_qt(&mut z);
        z[..self.rank].iter_mut().for_each(|v| *v = 0.0);
        self.apply_q(&mut z);
        Array1::from(z)
    }

    /// Solves `(AᵀA) x = b` through `Rᵀ R`; only meaningful at full rank.
    pub fn solve_gram(&self, b: &[f64]) -> Vec<f64> {
        let n = self.ncols();
        debug_assert_eq!(self.rank, n);
        let bp: Vec<f64> = self.perm.iter().map(|&j| b[j]).collect();
        // Rᵀ y = bp
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = bp[i];
            for k in 0..i {
                s -= self.r[[k, i]] * y[k];
            }
            y[i] = s / self.r[[i, i]];
        }
        // R x = y
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= self.r[[i, k]] * x[k];
            }
            x[i] = s / self.r[[i, i]];
        }
        let mut out = vec![0.0; n];
        for (k, &j) in self.perm.iter().enumerate() {
            out[j] = x[k];
        }
        out
    }
}

/// Residuals of the least-squares regression of each target column on the
/// predictors plus an intercept column (always prepended).
pub fn regress_residuals(
    targets: ArrayView2<'_, f64>,
    predictors: ArrayView2<'_, f64>,
) -> Result<Array2<f64>> {
    let n = targets.nrows();
    if predictors.nrows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: predictors.nrows(),
            context: "regression rows",
        });
    }
    let design = with_intercept(predictors);
    let qr = PivotedQr::new(design.view(), LSQ_RANK_TOL);
    let mut out = Array2::zeros(targets.raw_dim());
    for (j, col) in targets.columns().into_iter().enumerate() {
        out.column_mut(j).assign(&qr.residual(col));
    }
    Ok(out)
}

/// `[1 | x]`.
pub(crate) fn with_intercept(x: ArrayView2<'_, f64>) -> Array2<f64> {
    let (n, p) = x.dim();
    let mut out = Array2::ones((n, p + 1));
    out.slice_mut(ndarray::s![.., 1..]).assign(&x);
    out
}

/// Coefficient of determination of `y` regressed on `[1 | x]`.
pub fn r_squared(y: ArrayView1<'_, f64>, x: ArrayView2<'_, f64>) -> Result<f64> {
    let n = y.len();
    let resid = regress_residuals(y.insert_axis(Axis(1)), x)?;
    let mean = y.sum() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    if tss == 0.0 {
        return Ok(0.0);
    }
    let rss: f64 = resid.iter().map(|v| v * v).sum();
    Ok(1.0 - rss / tss)
}
