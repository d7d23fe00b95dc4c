//! Bagged calibration over randomly sampled principal components.
//!
//! Each iteration draws `c` components with probabilities proportional to
//! `λ_j^α`, calibrates the design weights on them (plus an intercept) and
//! records the g-weights. The final weights are the plain average over
//! iterations.

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{calibrate_g, CalibrationSpec, EstimatorKind, GramSolver, Provenance, WeightSystem};
use crate::error::{Error, Result};
use crate::matrixops::DataMatrix;
use crate::pca::{residual_pca, PcaModel, PcaSource, ResidualPca};
use crate::rng::{stream, Purpose};
use crate::varsampling::{component_inclusion_probs, ComponentSelection, Sampler, SamplingDesign};

pub const INTERCEPT_NAME: &str = "(intercept)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaggingConfig {
    /// Number of iterations B.
    pub iterations: usize,
    /// Components per iteration; `None` means `round(√n)`.
    pub c: Option<usize>,
    pub alpha: f64,
    pub seed: u64,
    /// Variables calibrated exactly in every iteration.
    pub exact_vars: Vec<usize>,
    pub retain_iterations: bool,
    pub sampler: Sampler,
}

impl Default for BaggingConfig {
    fn default() -> Self {
        Self {
            iterations: 500,
            c: None,
            alpha: 0.5,
            seed: 0,
            exact_vars: Vec::new(),
            retain_iterations: false,
            sampler: Sampler::default(),
        }
    }
}

/// `round(√n)`, at least 1.
pub fn default_c(n: usize) -> usize {
    ((n as f64).sqrt().round() as usize).max(1)
}

impl BaggingConfig {
    pub fn resolved_c(&self, n: usize) -> usize {
        self.c.unwrap_or_else(|| default_c(n))
    }

    fn validate(&self, c: usize, q: usize) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::out_of_range("B", 0.0, "need at least one iteration"));
        }
        if c == 0 || c > q {
            return Err(Error::out_of_range("c", c as f64, format!("must lie in 1..={q}")));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::out_of_range("alpha", self.alpha, "must be finite and nonnegative"));
        }
        Ok(())
    }
}

/// Calibration variables for the sampled units with their population totals.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreContext {
    /// n × p, row k belongs to the k-th sampled unit.
    pub sample_scores: Array2<f64>,
    pub totals: Vec<f64>,
    pub names: Vec<String>,
}

impl ScoreContext {
    pub fn new(sample_scores: Array2<f64>, totals: Vec<f64>, names: Vec<String>) -> Result<Self> {
        let p = sample_scores.ncols();
        for (len, context) in [(totals.len(), "context totals"), (names.len(), "context names")] {
            if len != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    got: len,
                    context,
                });
            }
        }
        Ok(Self {
            sample_scores,
            totals,
            names,
        })
    }

    /// Component scores of the sampled rows of a population matrix given in
    /// original units. For a population-source model the totals are exactly
    /// zero; otherwise they are computed from the population rows.
    pub fn from_population(pca: &PcaModel, population_rows: ArrayView2<'_, f64>, design: &SamplingDesign) -> Result<Self> {
        check_rows(population_rows.nrows(), design.population_size(), "population rows")?;
        let sample_rows = population_rows.select(Axis(0), design.sample_indices());
        let sample_scores = pca.scores(sample_rows.view())?;
        let q = pca.n_components();
        let totals = match pca.source {
            PcaSource::Population => vec![0.0; q],
            PcaSource::DesignWeightedSample => pca.scores(population_rows)?.sum_axis(Axis(0)).to_vec(),
        };
        Self::new(sample_scores, totals, component_names(q))
    }

    /// Component scores of sample rows (original units) with totals mapped
    /// from known auxiliary totals, `t_z = Vᵀ t_x` on the standardized scale.
    pub fn from_sample(
        pca: &PcaModel,
        sample_rows: ArrayView2<'_, f64>,
        original_totals: &[f64],
        population_size: f64,
    ) -> Result<Self> {
        let sample_scores = pca.scores(sample_rows)?;
        let std_totals = pca.standardized_totals(original_totals, population_size)?;
        let totals = pca.component_totals(std_totals.view()).to_vec();
        Self::new(sample_scores, totals, component_names(pca.n_components()))
    }

    /// The standardized variables themselves (no rotation), for plain bagging.
    pub fn from_variables(x: &DataMatrix, design: &SamplingDesign) -> Result<Self> {
        check_rows(x.nrows(), design.population_size(), "population rows")?;
        let sample_scores = x.values().select(Axis(0), design.sample_indices());
        Self::new(sample_scores, x.column_totals().to_vec(), x.column_names().to_vec())
    }

    pub fn n_columns(&self) -> usize {
        self.totals.len()
    }
}

fn component_names(q: usize) -> Vec<String> {
    (1..=q).map(|j| format!("PC{j}")).collect()
}

fn check_rows(got: usize, expected: usize, context: &'static str) -> Result<()> {
    if got != expected {
        return Err(Error::DimensionMismatch { expected, got, context });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub b: usize,
    /// Context columns calibrated on (forced columns first), without the intercept.
    pub selected: Vec<usize>,
    pub g: Vec<f64>,
    pub rank_deficient: bool,
}

impl IterationRecord {
    /// `B̂ = T⁻¹ Σ_S d_k q_k z_k y_k` on this iteration's variables, intercept last.
    pub fn regression_coeffs(
        &self,
        ctx: &ScoreContext,
        design: &SamplingDesign,
        y_s: &[f64],
        spec: &CalibrationSpec,
    ) -> Result<Vec<f64>> {
        let d = design.sample_design_weights();
        let q = unit_scale(spec, d.len())?;
        let dq: Vec<f64> = d.iter().zip(&q).map(|(d, q)| d * q).collect();
        let z = iteration_matrix(ctx, &self.selected);
        let solver = GramSolver::new(z.view(), &dq, spec)?;
        let mut rhs = vec![0.0; z.ncols()];
        for ((row, &w), &y) in z.rows().into_iter().zip(&dq).zip(y_s) {
            for (r, &v) in rhs.iter_mut().zip(row.iter()) {
                *r += w * v * y;
            }
        }
        Ok(solver.solve(&rhs))
    }
}

fn unit_scale(spec: &CalibrationSpec, n: usize) -> Result<Vec<f64>> {
    match &spec.unit_scale {
        None => Ok(vec![1.0; n]),
        Some(q) if q.len() == n => Ok(q.clone()),
        Some(q) => Err(Error::DimensionMismatch {
            expected: n,
            got: q.len(),
            context: "unit scales q_k",
        }),
    }
}

#[derive(Debug, Clone)]
pub struct BaggingOutput {
    pub weights: WeightSystem,
    pub iterations: Option<Vec<IterationRecord>>,
}

/// `[selected columns | 1]`.
fn iteration_matrix(ctx: &ScoreContext, selected: &[usize]) -> Array2<f64> {
    let n = ctx.sample_scores.nrows();
    let mut z = Array2::ones((n, selected.len() + 1));
    for (dst, &src) in selected.iter().enumerate() {
        z.column_mut(dst).assign(&ctx.sample_scores.column(src));
    }
    z
}

/// Shared loop. `forced` columns enter every iteration; the selection draws
/// among the columns starting at `offset`.
#[allow(clippy::too_many_arguments)]
fn bag(
    ctx: &ScoreContext,
    forced: &[usize],
    offset: usize,
    selection: &ComponentSelection,
    design: &SamplingDesign,
    cfg: &BaggingConfig,
    spec: &CalibrationSpec,
    kind: EstimatorKind,
) -> Result<BaggingOutput> {
    let n = design.sample_size();
    check_rows(ctx.sample_scores.nrows(), n, "sample scores")?;
    let d = design.sample_design_weights();
    let big_n = design.population_size() as f64;
    let mut spec = spec.clone();
    // the intercept is part of every iteration matrix already
    spec.include_intercept = false;

    let outcomes: Vec<Result<Option<IterationRecord>>> = (0..cfg.iterations)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(cfg.seed, Purpose::Bag, b as u64);
            let mut selected = forced.to_vec();
            selected.extend(selection.sample(&mut rng).into_iter().map(|j| j + offset));
            let z = iteration_matrix(ctx, &selected);
            let mut totals: Vec<f64> = selected.iter().map(|&j| ctx.totals[j]).collect();
            totals.push(big_n);
            match calibrate_g(z.view(), &d, &totals, &spec) {
                Ok(sol) => Ok(Some(IterationRecord {
                    b,
                    selected,
                    g: sol.g,
                    rank_deficient: sol.rank_deficient,
                })),
                Err(Error::SingularSystem { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();

    let mut records = Vec::with_capacity(cfg.iterations);
    let mut failed = 0;
    for o in outcomes {
        match o? {
            Some(r) => records.push(r),
            None => failed += 1,
        }
    }
    if records.is_empty() {
        return Err(Error::AllIterationsFailed {
            iterations: cfg.iterations,
        });
    }
    let mut g_hat = vec![0.0; n];
    for r in &records {
        for (acc, g) in g_hat.iter_mut().zip(&r.g) {
            *acc += g;
        }
    }
    let used = records.len() as f64;
    g_hat.iter_mut().for_each(|g| *g /= used);

    let mut prov = Provenance::new(kind);
    prov.iterations = records.len();
    prov.c = Some(forced.len() + selection.c);
    prov.alpha = Some(selection.alpha);
    prov.seed = Some(cfg.seed);
    prov.rank_deficient = records.iter().filter(|r| r.rank_deficient).count();
    prov.failed_iterations = failed;
    prov.calibrated_exactly_on = forced.iter().map(|&j| ctx.names[j].clone()).collect();
    prov.calibrated_exactly_on.push(INTERCEPT_NAME.to_string());

    let weights = WeightSystem::new(design.sample_indices().to_vec(), d, g_hat, prov)?;
    Ok(BaggingOutput {
        weights,
        iterations: cfg.retain_iterations.then_some(records),
    })
}

/// Bagged calibration on principal components drawn with probabilities
/// proportional to `λ_j^α`.
pub fn run_bagging(
    pca: &PcaModel,
    ctx: &ScoreContext,
    design: &SamplingDesign,
    cfg: &BaggingConfig,
    spec: &CalibrationSpec,
) -> Result<BaggingOutput> {
    let q = pca.n_components();
    check_rows(ctx.n_columns(), q, "context columns")?;
    let c = cfg.resolved_c(design.sample_size());
    cfg.validate(c, q)?;
    let eig = pca.eigenvalues.to_vec();
    let selection = component_inclusion_probs(&eig, cfg.alpha, c)?.with_sampler(cfg.sampler)?;
    bag(ctx, &[], 0, &selection, design, cfg, spec, EstimatorKind::BagPca)
}

/// Plain bagging: `c` of the context's columns drawn with equal probabilities.
pub fn run_bagging_variables(
    ctx: &ScoreContext,
    design: &SamplingDesign,
    cfg: &BaggingConfig,
    spec: &CalibrationSpec,
) -> Result<BaggingOutput> {
    let q = ctx.n_columns();
    let c = cfg.resolved_c(design.sample_size());
    cfg.validate(c, q)?;
    let selection = component_inclusion_probs(&vec![1.0; q], 0.0, c)?.with_sampler(cfg.sampler)?;
    bag(ctx, &[], 0, &selection, design, cfg, spec, EstimatorKind::Bag)
}

/// Context for exact calibration: the important standardized columns
/// followed by the residual component scores.
pub fn exact_context(x: &DataMatrix, rp: &ResidualPca, design: &SamplingDesign) -> Result<ScoreContext> {
    check_rows(x.nrows(), design.population_size(), "population rows")?;
    let population = exact_population_columns(rp);
    let sample_scores = population.select(Axis(0), design.sample_indices());
    let mut totals = rp.important_block.sum_axis(Axis(0)).to_vec();
    // residuals of a regression with intercept are centered
    totals.extend(std::iter::repeat_n(0.0, rp.remaining.len()));
    let mut names: Vec<String> = rp.important.iter().map(|&j| x.column_names()[j].clone()).collect();
    names.extend((1..=rp.remaining.len()).map(|j| format!("RPC{j}")));
    ScoreContext::new(sample_scores, totals, names)
}

/// N × q population layout matching [`exact_context`].
pub fn exact_population_columns(rp: &ResidualPca) -> Array2<f64> {
    concatenate(Axis(1), &[rp.important_block.view(), rp.residual_scores.view()]).expect("row counts agree")
}

/// Bagged calibration that reproduces the totals of the `important`
/// variables exactly: every iteration calibrates on those variables plus
/// `c − c₁` residual components.
pub fn run_bagging_exact(
    x: &DataMatrix,
    important: &[usize],
    design: &SamplingDesign,
    cfg: &BaggingConfig,
    spec: &CalibrationSpec,
) -> Result<BaggingOutput> {
    let q = x.ncols();
    let c = cfg.resolved_c(design.sample_size());
    cfg.validate(c, q)?;
    let c1 = important.len();
    if c1 == 0 || c1 >= c || c >= q {
        return Err(Error::out_of_range(
            "c",
            c as f64,
            format!("need 0 < c1 = {c1} < c < q = {q}"),
        ));
    }
    let rp = residual_pca(x, important)?;
    let ctx = exact_context(x, &rp, design)?;
    let eig = rp.model.eigenvalues.to_vec();
    let selection = component_inclusion_probs(&eig, cfg.alpha, c - c1)?.with_sampler(cfg.sampler)?;
    let forced: Vec<usize> = (0..c1).collect();
    bag(&ctx, &forced, c1, &selection, design, cfg, spec, EstimatorKind::BagPca)
}

/// `Σ_S ŵ_k y_k`.
pub fn bp_total(ws: &WeightSystem, y_s: &[f64]) -> Result<f64> {
    ws.total(y_s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelAssisted {
    /// `m̂(z_k)` for every population unit.
    pub population_predictions: Vec<f64>,
    pub prediction_total: f64,
    /// `Σ_S d_k (y_k − m̂(z_k))`.
    pub correction: f64,
    pub total: f64,
}

/// Prediction-plus-correction form of the bagged estimator. Requires the
/// population values of the context columns (`population_scores`, N × p,
/// same column layout as `ctx`).
pub fn model_assisted_decomposition(
    records: &[IterationRecord],
    ctx: &ScoreContext,
    population_scores: ArrayView2<'_, f64>,
    design: &SamplingDesign,
    y_s: &[f64],
    spec: &CalibrationSpec,
) -> Result<ModelAssisted> {
    if records.is_empty() {
        return Err(Error::InvalidConfig("no retained iterations".into()));
    }
    let n = design.sample_size();
    check_rows(y_s.len(), n, "sample responses")?;
    check_rows(population_scores.nrows(), design.population_size(), "population scores")?;
    check_rows(population_scores.ncols(), ctx.n_columns(), "population score columns")?;
    let mut spec = spec.clone();
    spec.include_intercept = false;

    let per_iter: Vec<Result<Vec<f64>>> = records
        .par_iter()
        .map(|r| {
            let beta = r.regression_coeffs(ctx, design, y_s, &spec)?;
            let (intercept, slopes) = beta.split_last().expect("intercept present");
            Ok(population_scores
                .rows()
                .into_iter()
                .map(|row| intercept + r.selected.iter().zip(slopes).map(|(&j, b)| row[j] * b).sum::<f64>())
                .collect())
        })
        .collect();

    let big_n = design.population_size();
    let mut m_hat = vec![0.0; big_n];
    for p in per_iter {
        for (acc, v) in m_hat.iter_mut().zip(p?) {
            *acc += v;
        }
    }
    let b = records.len() as f64;
    m_hat.iter_mut().for_each(|v| *v /= b);

    let d = design.sample_design_weights();
    let prediction_total: f64 = m_hat.iter().sum();
    let correction: f64 = design
        .sample_indices()
        .iter()
        .zip(&d)
        .zip(y_s)
        .map(|((&k, d), y)| d * (y - m_hat[k]))
        .sum();
    Ok(ModelAssisted {
        population_predictions: m_hat,
        prediction_total,
        correction,
        total: prediction_total + correction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::{calibration_residual, chi2_calibrate, SingularityPolicy};
    use crate::matrixops::standardize_columns;
    use crate::pca::fit_pca;
    use crate::varsampling::srswor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn population(seed: u64, big_n: usize, q: usize) -> DataMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = Array2::from_shape_fn((big_n, 2), |_| rng.sample::<f64, _>(StandardNormal));
        let raw = Array2::from_shape_fn((big_n, q), |(i, j)| {
            f[[i, j % 2]] * (1.0 + j as f64 / q as f64) + rng.sample::<f64, _>(StandardNormal) + j as f64
        });
        standardize_columns(raw.view(), (0..q).map(|j| format!("x{j}")).collect()).unwrap()
    }

    fn setup(seed: u64, big_n: usize, q: usize, n: usize) -> (DataMatrix, PcaModel, SamplingDesign, ScoreContext) {
        let x = population(seed, big_n, q);
        let pca = fit_pca(&x).unwrap();
        let design = srswor(big_n, n, &mut ChaCha8Rng::seed_from_u64(seed + 1)).unwrap();
        let ctx = ScoreContext::from_population(&pca, x.original_values().view(), &design).unwrap();
        (x, pca, design, ctx)
    }

    fn cfg(b: usize, c: usize, seed: u64) -> BaggingConfig {
        BaggingConfig {
            iterations: b,
            c: Some(c),
            seed,
            ..BaggingConfig::default()
        }
    }

    #[test]
    fn all_components_once_equals_full_calibration() {
        let (x, pca, design, ctx) = setup(3, 120, 6, 30);
        let out = run_bagging(&pca, &ctx, &design, &cfg(1, 6, 9), &CalibrationSpec::default()).unwrap();
        let xs = x.values().select(Axis(0), design.sample_indices());
        let d = design.sample_design_weights();
        let cal = chi2_calibrate(xs.view(), &d, x.column_totals().as_slice().unwrap(), 120.0, &CalibrationSpec::default())
            .unwrap();
        for (a, b) in out.weights.w.iter().zip(&cal.w) {
            assert!((a - b).abs() <= 1e-8 * b.abs().max(1.0));
        }
    }

    #[test]
    fn census_gives_unit_g() {
        let x = population(5, 40, 5);
        let pca = fit_pca(&x).unwrap();
        let design = SamplingDesign::census(40);
        let ctx = ScoreContext::from_population(&pca, x.original_values().view(), &design).unwrap();
        let out = run_bagging(&pca, &ctx, &design, &cfg(7, 2, 1), &CalibrationSpec::default()).unwrap();
        assert!(out.weights.g.iter().all(|g| (g - 1.0).abs() < 1e-10));
    }

    #[test]
    fn bit_identical_across_thread_counts() {
        let (_, pca, design, ctx) = setup(11, 150, 8, 40);
        let c = cfg(50, 3, 77);
        let spec = CalibrationSpec::default();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_bagging(&pca, &ctx, &design, &c, &spec).unwrap().weights.w)
        };
        let one = run(1);
        assert_eq!(one, run(3));
        assert_eq!(one, run_bagging(&pca, &ctx, &design, &c, &spec).unwrap().weights.w);
        let other = run_bagging(&pca, &ctx, &design, &cfg(50, 3, 78), &spec).unwrap().weights.w;
        assert_ne!(one, other);
    }

    #[test]
    fn average_of_iteration_totals() {
        let (_, pca, design, ctx) = setup(13, 100, 7, 30);
        let mut c = cfg(20, 3, 5);
        c.retain_iterations = true;
        let out = run_bagging(&pca, &ctx, &design, &c, &CalibrationSpec::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let y: Vec<f64> = (0..30).map(|_| rng.random_range(0.0..10.0)).collect();
        let d = design.sample_design_weights();
        let recs = out.iterations.unwrap();
        let mean: f64 = recs
            .iter()
            .map(|r| r.g.iter().zip(&d).zip(&y).map(|((g, d), y)| g * d * y).sum::<f64>())
            .sum::<f64>()
            / recs.len() as f64;
        let bp = bp_total(&out.weights, &y).unwrap();
        assert!((bp - mean).abs() <= 1e-10 * bp.abs().max(1.0));
        assert_eq!(bp_total(&out.weights, &[0.0; 30]).unwrap(), 0.0);
        let ht = WeightSystem::horvitz_thompson(d.clone());
        let ht_total: f64 = d.iter().zip(&y).map(|(d, y)| d * y).sum();
        assert!((bp_total(&ht, &y).unwrap() - ht_total).abs() < 1e-12);
    }

    #[test]
    fn model_assisted_form_matches_weighted_form() {
        let (x, pca, design, ctx) = setup(17, 200, 12, 50);
        let mut c = cfg(25, 4, 3);
        c.retain_iterations = true;
        let spec = CalibrationSpec::default();
        let out = run_bagging(&pca, &ctx, &design, &c, &spec).unwrap();
        let pop_scores = pca.scores(x.original_values().view()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let y: Vec<f64> = design
            .sample_indices()
            .iter()
            .map(|&k| 5.0 + 2.0 * x.values()[[k, 0]] + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let ma = model_assisted_decomposition(out.iterations.as_ref().unwrap(), &ctx, pop_scores.view(), &design, &y, &spec)
            .unwrap();
        let bp = bp_total(&out.weights, &y).unwrap();
        assert!((ma.total - bp).abs() <= 1e-8 * bp.abs());
    }

    #[test]
    fn model_assisted_census_and_linear_response() {
        let x = population(19, 60, 5);
        let pca = fit_pca(&x).unwrap();
        let pop_scores = pca.scores(x.original_values().view()).unwrap();
        let spec = CalibrationSpec::default();
        let mut c = cfg(5, 5, 2);
        c.retain_iterations = true;

        let census = SamplingDesign::census(60);
        let ctx = ScoreContext::from_population(&pca, x.original_values().view(), &census).unwrap();
        let y: Vec<f64> = (0..60).map(|k| (k as f64).sin() + 3.0).collect();
        let out = run_bagging(&pca, &ctx, &census, &c, &spec).unwrap();
        let ma = model_assisted_decomposition(out.iterations.as_ref().unwrap(), &ctx, pop_scores.view(), &census, &y, &spec)
            .unwrap();
        let t: f64 = y.iter().sum();
        assert!((ma.total - t).abs() <= 1e-8 * t);

        let design = srswor(60, 20, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let ctx = ScoreContext::from_population(&pca, x.original_values().view(), &design).unwrap();
        let y_lin: Vec<f64> = ctx.sample_scores.rows().into_iter().map(|r| 1.0 + 2.0 * r[0] - r[3]).collect();
        let out = run_bagging(&pca, &ctx, &design, &c, &spec).unwrap();
        let ma = model_assisted_decomposition(out.iterations.as_ref().unwrap(), &ctx, pop_scores.view(), &design, &y_lin, &spec)
            .unwrap();
        assert!(ma.correction.abs() < 1e-8);
    }

    #[test]
    fn exact_mode_reproduces_important_totals() {
        let x = population(23, 300, 20);
        let design = srswor(300, 60, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let important = [2, 7, 11];
        let out = run_bagging_exact(&x, &important, &design, &cfg(30, 8, 4), &CalibrationSpec::default()).unwrap();
        let raw = x.original_values();
        let xs = raw.select(Axis(0), design.sample_indices());
        let totals = x.original_totals();
        let all: Vec<usize> = (0..20).collect();
        let resid = |cols: &[usize]| {
            calibration_residual(
                xs.select(Axis(1), cols).view(),
                &out.weights.w,
                &cols.iter().map(|&j| totals[j]).collect::<Vec<_>>(),
            )
            .unwrap()
        };
        assert!(resid(&important) <= 1e-8);
        assert!(resid(&all) > 1e-6);
        assert_eq!(out.weights.provenance.calibrated_exactly_on, vec!["x2", "x7", "x11", INTERCEPT_NAME]);
    }

    #[test]
    fn exact_mode_on_spanning_variables_is_full_calibration() {
        // columns 3..6 are combinations of columns 0..3
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let base = Array2::from_shape_fn((80, 3), |_| rng.sample::<f64, _>(StandardNormal));
        let mut raw = Array2::zeros((80, 6));
        raw.slice_mut(ndarray::s![.., ..3]).assign(&base);
        for k in 0..80 {
            raw[[k, 3]] = base[[k, 0]] + base[[k, 1]];
            raw[[k, 4]] = base[[k, 1]] - 2.0 * base[[k, 2]];
            raw[[k, 5]] = 0.5 * base[[k, 0]] + base[[k, 2]];
        }
        let x = standardize_columns(raw.view(), (0..6).map(|j| format!("x{j}")).collect()).unwrap();
        let design = srswor(80, 25, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let mut c = cfg(10, 5, 6);
        c.alpha = 0.0;
        let spec = CalibrationSpec::default().with_policy(SingularityPolicy::PseudoInverse);
        let out = run_bagging_exact(&x, &[0, 1, 2], &design, &c, &spec).unwrap();
        let xs = x.values().select(Axis(0), design.sample_indices());
        let d = design.sample_design_weights();
        let cal = chi2_calibrate(xs.slice(ndarray::s![.., ..3]), &d, &x.column_totals().to_vec()[..3], 80.0, &spec).unwrap();
        for (a, b) in out.weights.w.iter().zip(&cal.w) {
            assert!((a - b).abs() <= 1e-8 * b.abs().max(1.0));
        }
    }

    #[test]
    fn residual_block_is_orthogonal_to_important_block() {
        let x = population(29, 200, 10);
        let rp = residual_pca(&x, &[1, 4]).unwrap();
        let gram = rp.important_block.t().dot(&rp.residual_scores);
        assert!(gram.iter().all(|v| v.abs() <= 1e-6));
        let design = srswor(200, 50, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let ctx = exact_context(&x, &rp, &design).unwrap();
        assert_eq!(ctx.n_columns(), 10);
        assert!(ctx.totals[2..].iter().all(|&t| t == 0.0));
    }

    #[test]
    fn plain_bagging_and_config_checks() {
        let (x, _, design, _) = setup(37, 100, 6, 25);
        let ctx = ScoreContext::from_variables(&x, &design).unwrap();
        let out = run_bagging_variables(&ctx, &design, &cfg(10, 2, 1), &CalibrationSpec::default()).unwrap();
        assert_eq!(out.weights.provenance.estimator, EstimatorKind::Bag);
        assert_eq!(out.weights.provenance.iterations, 10);
        let zero_b = BaggingConfig {
            iterations: 0,
            ..cfg(1, 2, 1)
        };
        assert!(run_bagging_variables(&ctx, &design, &zero_b, &CalibrationSpec::default()).is_err());
        assert!(run_bagging_variables(&ctx, &design, &cfg(1, 7, 1), &CalibrationSpec::default()).is_err());
        assert_eq!(default_c(85), 9);
        assert_eq!(default_c(100), 10);
    }

    #[test]
    fn singular_iterations_under_error_policy() {
        // one column duplicated: any draw containing both is singular
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let mut raw = Array2::from_shape_fn((50, 3), |_| rng.sample::<f64, _>(StandardNormal));
        let col = raw.column(0).to_owned();
        raw.column_mut(1).assign(&col);
        let x = standardize_columns(raw.view(), vec!["a".into(), "b".into(), "c".into()]).unwrap();
        let design = srswor(50, 20, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let ctx = ScoreContext::from_variables(&x, &design).unwrap();
        let spec = CalibrationSpec::default();
        assert_eq!(
            run_bagging_variables(&ctx, &design, &cfg(4, 3, 1), &spec).unwrap_err(),
            Error::AllIterationsFailed { iterations: 4 }
        );
        let out = run_bagging_variables(&ctx, &design, &cfg(40, 2, 1), &spec).unwrap();
        let p = &out.weights.provenance;
        assert!(p.failed_iterations > 0 && p.iterations + p.failed_iterations == 40);
        let pinv = spec.with_policy(SingularityPolicy::PseudoInverse);
        let out = run_bagging_variables(&ctx, &design, &cfg(40, 2, 1), &pinv).unwrap();
        assert_eq!(out.weights.provenance.failed_iterations, 0);
        assert!(out.weights.provenance.rank_deficient > 0);
    }
}
