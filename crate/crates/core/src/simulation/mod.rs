//! Monte Carlo evaluation of the estimators on a fixed finite population.

pub mod metrics;
pub mod synthetic;

use std::collections::BTreeMap;

use ndarray::{s, Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bagcal::{run_bagging, run_bagging_variables, BaggingConfig, ScoreContext};
use crate::calibration::{chi2_calibrate, weight_cv, CalibrationSpec, EstimatorKind, SingularityPolicy, WeightSystem};
use crate::error::{Error, Result};
use crate::matrixops::DataMatrix;
use crate::pca::{fit_pca, PcaModel};
use crate::rng::{derive_seed, stream, Purpose, STREAM_SCHEME};
use crate::varsampling::{srswor, Sampler, SamplingDesign};

pub use metrics::{metric_rb, metric_rrmse, metric_rsd, metric_varrht, summarize, Summary};
pub use synthetic::{generate_population, AchievedR2, ResponseRecipe, SyntheticPopulation, SyntheticSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct Response {
    pub name: String,
    pub values: Vec<f64>,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    /// N × q auxiliary variables in original units.
    pub aux: DataMatrix,
    pub responses: Vec<Response>,
}

impl Population {
    pub fn new(aux: DataMatrix, responses: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let big_n = aux.nrows();
        let responses = responses
            .into_iter()
            .map(|(name, values)| {
                if values.len() != big_n {
                    return Err(Error::DimensionMismatch {
                        expected: big_n,
                        got: values.len(),
                        context: "response length",
                    });
                }
                let total = values.iter().sum();
                Ok(Response { name, values, total })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { aux, responses })
    }

    pub fn size(&self) -> usize {
        self.aux.nrows()
    }

    pub fn true_totals(&self) -> Vec<f64> {
        self.responses.iter().map(|r| r.total).collect()
    }

    pub fn response(&self, name: &str) -> Option<&Response> {
        self.responses.iter().find(|r| r.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub sample_size: usize,
    /// Number of simulation runs I.
    pub runs: usize,
    pub estimators: Vec<EstimatorKind>,
    /// Bagging iterations B.
    pub iterations: usize,
    /// Components (PCA, BAG+PCA) or variables (BAG) per calibration.
    pub c: usize,
    pub alpha: f64,
    pub sampler: Sampler,
    pub seed: u64,
    pub keep_estimates: bool,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            sample_size: 85,
            runs: 1000,
            estimators: EstimatorKind::ALL.to_vec(),
            iterations: 100,
            c: 10,
            alpha: 0.5,
            sampler: Sampler::default(),
            seed: 1,
            keep_estimates: false,
        }
    }
}

impl StudyConfig {
    fn validate(&self, big_n: usize, q: usize) -> Result<()> {
        if self.runs < 2 {
            return Err(Error::InsufficientRuns {
                required: 2,
                got: self.runs,
            });
        }
        if self.sample_size < 2 || self.sample_size > big_n {
            return Err(Error::out_of_range(
                "n",
                self.sample_size as f64,
                format!("need 2 <= n <= N = {big_n}"),
            ));
        }
        if self.estimators.is_empty() {
            return Err(Error::InvalidConfig("no estimators requested".into()));
        }
        let needs_c = self.estimators.iter().any(|e| !matches!(e, EstimatorKind::Ht | EstimatorKind::Cal));
        if needs_c && (self.c == 0 || self.c > q) {
            return Err(Error::out_of_range("c", self.c as f64, format!("must lie in 1..={q}")));
        }
        if self.iterations == 0 {
            return Err(Error::out_of_range("B", 0.0, "need at least one iteration"));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::out_of_range("alpha", self.alpha, "must be finite and nonnegative"));
        }
        Ok(())
    }

    /// Requested estimators, deduplicated, in canonical order.
    fn estimator_list(&self) -> Vec<EstimatorKind> {
        let mut v = self.estimators.clone();
        v.sort();
        v.dedup();
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyMetadata {
    pub population_size: usize,
    pub sample_size: usize,
    pub runs: usize,
    pub iterations: usize,
    pub c: usize,
    pub alpha: f64,
    pub sampler: Sampler,
    pub seed: u64,
    pub stream_scheme: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub estimator: EstimatorKind,
    pub response: String,
    pub rb: f64,
    pub rsd: f64,
    pub rrmse: f64,
    pub varrht: f64,
}

/// Per-run extremes of the g-weights, aggregated over runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightRow {
    pub estimator: EstimatorKind,
    pub cv: Summary,
    pub mean_min_g: f64,
    pub mean_max_g: f64,
    pub min_min_g: f64,
    pub max_max_g: f64,
    /// Mean over runs of `max ĝ − min ĝ`.
    pub mean_spread: f64,
    /// Mean over runs of the mean `|ĝ − 1|`.
    pub mean_abs_dev: f64,
    /// Calibrations that needed the pseudo-inverse, over all runs.
    pub rank_deficient: usize,
    /// Runs with at least one such calibration.
    pub rank_deficient_runs: usize,
    /// Bagging iterations dropped as singular, over all runs.
    pub failed_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub metadata: StudyMetadata,
    pub responses: Vec<String>,
    pub true_totals: Vec<f64>,
    pub metrics: Vec<MetricRow>,
    pub weights: Vec<WeightRow>,
    /// `estimates[estimator][response][run]` when requested.
    pub estimates: Option<BTreeMap<EstimatorKind, Vec<Vec<f64>>>>,
}

impl SimulationReport {
    pub fn metric(&self, estimator: EstimatorKind, response: &str) -> Option<&MetricRow> {
        self.metrics
            .iter()
            .find(|m| m.estimator == estimator && m.response == response)
    }

    pub fn weight_row(&self, estimator: EstimatorKind) -> Option<&WeightRow> {
        self.weights.iter().find(|w| w.estimator == estimator)
    }
}

/// Population quantities shared by every run.
struct StudyContext<'a> {
    pop: &'a Population,
    std: DataMatrix,
    std_totals: Vec<f64>,
    pca: PcaModel,
    pop_scores: Array2<f64>,
    responses: Array2<f64>,
}

impl<'a> StudyContext<'a> {
    fn new(pop: &'a Population) -> Result<Self> {
        let std = pop.aux.standardize()?;
        let pca = fit_pca(&std)?;
        let pop_scores = std.values().dot(&pca.loadings);
        let std_totals = std.column_totals().to_vec();
        let big_n = pop.size();
        let mut responses = Array2::zeros((big_n, pop.responses.len()));
        for (j, r) in pop.responses.iter().enumerate() {
            responses.column_mut(j).assign(&ndarray::ArrayView1::from(&r.values[..]));
        }
        Ok(Self {
            pop,
            std,
            std_totals,
            pca,
            pop_scores,
            responses,
        })
    }
}

struct EstimatorOutcome {
    totals: Vec<f64>,
    cv: f64,
    min_g: f64,
    max_g: f64,
    abs_dev: f64,
    rank_deficient: usize,
    failed_iterations: usize,
}

fn outcome(ws: &WeightSystem, y_s: &Array2<f64>) -> Result<EstimatorOutcome> {
    let w = ndarray::ArrayView1::from(&ws.w[..]);
    let totals = y_s.t().dot(&w).to_vec();
    let n = ws.g.len() as f64;
    Ok(EstimatorOutcome {
        totals,
        cv: weight_cv(&ws.g)?,
        min_g: ws.g.iter().cloned().fold(f64::INFINITY, f64::min),
        max_g: ws.g.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        abs_dev: ws.g.iter().map(|g| (g - 1.0).abs()).sum::<f64>() / n,
        rank_deficient: ws.provenance.rank_deficient,
        failed_iterations: ws.provenance.failed_iterations,
    })
}

fn weights_for(
    ctx: &StudyContext<'_>,
    cfg: &StudyConfig,
    kind: EstimatorKind,
    design: &SamplingDesign,
    run_seed: u64,
) -> Result<WeightSystem> {
    let spec = CalibrationSpec::default().with_policy(SingularityPolicy::PseudoInverse);
    let idx = design.sample_indices();
    let d = design.sample_design_weights();
    let big_n = design.population_size() as f64;
    let bag_cfg = |seed| BaggingConfig {
        iterations: cfg.iterations,
        c: Some(cfg.c),
        alpha: cfg.alpha,
        seed,
        exact_vars: Vec::new(),
        retain_iterations: false,
        sampler: cfg.sampler,
    };
    match kind {
        EstimatorKind::Ht => Ok(WeightSystem::horvitz_thompson(d)),
        EstimatorKind::Cal => {
            let xs = ctx.std.values().select(Axis(0), idx);
            chi2_calibrate(xs.view(), &d, &ctx.std_totals, big_n, &spec)
        }
        EstimatorKind::Pca => {
            let zs = ctx.pop_scores.slice(s![.., ..cfg.c]).select(Axis(0), idx);
            let mut ws = chi2_calibrate(zs.view(), &d, &vec![0.0; cfg.c], big_n, &spec)?;
            ws.provenance.estimator = EstimatorKind::Pca;
            ws.provenance.c = Some(cfg.c);
            Ok(ws)
        }
        EstimatorKind::Bag => {
            let xs = ctx.std.values().select(Axis(0), idx);
            let sc = ScoreContext::new(xs, ctx.std_totals.clone(), ctx.std.column_names().to_vec())?;
            let seed = derive_seed(run_seed, Purpose::Run, 1);
            Ok(run_bagging_variables(&sc, design, &bag_cfg(seed), &spec)?.weights)
        }
        EstimatorKind::BagPca => {
            let zs = ctx.pop_scores.select(Axis(0), idx);
            let q = zs.ncols();
            let names = (1..=q).map(|j| format!("PC{j}")).collect();
            let sc = ScoreContext::new(zs, vec![0.0; q], names)?;
            Ok(run_bagging(&ctx.pca, &sc, design, &bag_cfg(run_seed), &spec)?.weights)
        }
    }
}

struct RunOutcome {
    ht_totals: Vec<f64>,
    per_estimator: Vec<EstimatorOutcome>,
}

fn run_once(ctx: &StudyContext<'_>, cfg: &StudyConfig, kinds: &[EstimatorKind], i: usize) -> Result<RunOutcome> {
    let design = srswor(ctx.pop.size(), cfg.sample_size, &mut stream(cfg.seed, Purpose::Sample, i as u64))?;
    let run_seed = derive_seed(cfg.seed, Purpose::Run, i as u64);
    let y_s = ctx.responses.select(Axis(0), design.sample_indices());
    let ht = WeightSystem::horvitz_thompson(design.sample_design_weights());
    let ht_totals = outcome(&ht, &y_s)?.totals;
    let per_estimator = kinds
        .iter()
        .map(|&k| outcome(&weights_for(ctx, cfg, k, &design, run_seed)?, &y_s))
        .collect::<Result<Vec<_>>>()?;
    Ok(RunOutcome {
        ht_totals,
        per_estimator,
    })
}

/// Draws `cfg.runs` SRSWOR samples and evaluates every requested estimator
/// on each. HT is always computed as the variance reference.
pub fn run_study(pop: &Population, cfg: &StudyConfig) -> Result<SimulationReport> {
    cfg.validate(pop.size(), pop.aux.ncols())?;
    if pop.responses.is_empty() {
        return Err(Error::InvalidConfig("population has no responses".into()));
    }
    let ctx = StudyContext::new(pop)?;
    let kinds = cfg.estimator_list();
    let runs: Vec<RunOutcome> = (0..cfg.runs)
        .into_par_iter()
        .map(|i| run_once(&ctx, cfg, &kinds, i))
        .collect::<Result<Vec<_>>>()?;

    let n_resp = pop.responses.len();
    let series = |f: &dyn Fn(&RunOutcome) -> f64| -> Vec<f64> { runs.iter().map(f).collect() };
    let ht: Vec<Vec<f64>> = (0..n_resp).map(|r| series(&|o| o.ht_totals[r])).collect();

    let mut metrics_rows = Vec::new();
    let mut weight_rows = Vec::new();
    let mut estimates = BTreeMap::new();
    for (e, &kind) in kinds.iter().enumerate() {
        let mut per_resp = Vec::with_capacity(n_resp);
        for (r, resp) in pop.responses.iter().enumerate() {
            let est = series(&|o| o.per_estimator[e].totals[r]);
            metrics_rows.push(MetricRow {
                estimator: kind,
                response: resp.name.clone(),
                rb: metric_rb(&est, resp.total)?,
                rsd: metric_rsd(&est, resp.total)?,
                rrmse: metric_rrmse(&est, resp.total)?,
                varrht: if kind == EstimatorKind::Ht {
                    1.0
                } else {
                    metric_varrht(&est, &ht[r])?
                },
            });
            per_resp.push(est);
        }
        if cfg.keep_estimates {
            estimates.insert(kind, per_resp);
        }
        let mins = series(&|o| o.per_estimator[e].min_g);
        let maxs = series(&|o| o.per_estimator[e].max_g);
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let spread: Vec<f64> = mins.iter().zip(&maxs).map(|(a, b)| b - a).collect();
        weight_rows.push(WeightRow {
            estimator: kind,
            cv: summarize(&series(&|o| o.per_estimator[e].cv))?,
            mean_min_g: mean(&mins),
            mean_max_g: mean(&maxs),
            min_min_g: mins.iter().cloned().fold(f64::INFINITY, f64::min),
            max_max_g: maxs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            mean_spread: mean(&spread),
            mean_abs_dev: mean(&series(&|o| o.per_estimator[e].abs_dev)),
            rank_deficient: runs.iter().map(|o| o.per_estimator[e].rank_deficient).sum(),
            rank_deficient_runs: runs.iter().filter(|o| o.per_estimator[e].rank_deficient > 0).count(),
            failed_iterations: runs.iter().map(|o| o.per_estimator[e].failed_iterations).sum(),
        });
    }

    Ok(SimulationReport {
        metadata: StudyMetadata {
            population_size: pop.size(),
            sample_size: cfg.sample_size,
            runs: cfg.runs,
            iterations: cfg.iterations,
            c: cfg.c,
            alpha: cfg.alpha,
            sampler: cfg.sampler,
            seed: cfg.seed,
            stream_scheme: STREAM_SCHEME,
        },
        responses: pop.responses.iter().map(|r| r.name.clone()).collect(),
        true_totals: pop.true_totals(),
        metrics: metrics_rows,
        weights: weight_rows,
        estimates: cfg.keep_estimates.then_some(estimates),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    C,
    Alpha,
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "c" => Ok(SweepAxis::C),
            "alpha" => Ok(SweepAxis::Alpha),
            other => Err(Error::InvalidConfig(format!("unknown sweep axis `{other}`"))),
        }
    }
}

impl std::fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SweepAxis::C => "c",
            SweepAxis::Alpha => "alpha",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub report: SimulationReport,
}

/// One study per grid value, all sharing the base seed.
pub fn sweep(pop: &Population, base: &StudyConfig, axis: SweepAxis, grid: &[f64]) -> Result<Vec<SweepRow>> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("empty sweep grid".into()));
    }
    let mut rows = Vec::with_capacity(grid.len());
    for &value in grid {
        let mut cfg = base.clone();
        match axis {
            SweepAxis::C => {
                if !(value >= 1.0 && value.fract() == 0.0) {
                    return Err(Error::out_of_range("c", value, "must be a positive integer"));
                }
                cfg.c = value as usize;
            }
            SweepAxis::Alpha => cfg.alpha = value,
        }
        rows.push(SweepRow {
            value,
            report: run_study(pop, &cfg)?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_population() -> Population {
        let spec = SyntheticSpec {
            population_size: 120,
            q_binary: 8,
            q_continuous: 6,
            n_factors: 3,
            onehot_group: 3,
            rare_binary: 1,
            top_c: 3,
            responses: vec![
                ResponseRecipe::linear("a", 0.8, 0.5, 0.5),
                ResponseRecipe::linear("b", 0.3, 0.1, 1.0),
            ],
            seed: 3,
            ..SyntheticSpec::default()
        };
        generate_population(&spec).unwrap().population
    }

    fn small_cfg() -> StudyConfig {
        StudyConfig {
            sample_size: 30,
            runs: 40,
            iterations: 10,
            c: 3,
            seed: 9,
            ..StudyConfig::default()
        }
    }

    #[test]
    fn constant_response_under_ht() {
        let mut pop = small_population();
        pop.responses = vec![Response {
            name: "k".into(),
            values: vec![2.5; 120],
            total: 300.0,
        }];
        let cfg = StudyConfig {
            estimators: vec![EstimatorKind::Ht],
            ..small_cfg()
        };
        let rep = run_study(&pop, &StudyConfig { keep_estimates: true, ..cfg }).unwrap();
        let est = &rep.estimates.as_ref().unwrap()[&EstimatorKind::Ht][0];
        assert!(est.iter().all(|&e| (e - 300.0).abs() < 1e-9));
        let m = rep.metric(EstimatorKind::Ht, "k").unwrap();
        assert!(m.rb.abs() < 1e-12 && m.rsd.abs() < 1e-12);
        assert_eq!(rep.metrics.len(), 1);
    }

    #[test]
    fn single_run_is_rejected() {
        let pop = small_population();
        let cfg = StudyConfig { runs: 1, ..small_cfg() };
        assert_eq!(run_study(&pop, &cfg).unwrap_err(), Error::InsufficientRuns { required: 2, got: 1 });
    }

    #[test]
    fn complete_and_reproducible_report() {
        let pop = small_population();
        let cfg = small_cfg();
        let a = run_study(&pop, &cfg).unwrap();
        assert_eq!(a.metrics.len(), 5 * 2);
        assert_eq!(a.weights.len(), 5);
        for m in &a.metrics {
            assert!(m.rb.is_finite() && m.rsd.is_finite() && m.rrmse.is_finite() && m.varrht.is_finite());
            let i = cfg.runs as f64;
            let lhs = m.rrmse * m.rrmse;
            let rhs = m.rsd * m.rsd + m.rb * m.rb * i / (i - 1.0);
            assert!((lhs - rhs).abs() <= 1e-10 * lhs.max(1e-300) + 1e-15);
        }
        for r in &pop.responses {
            assert_eq!(a.metric(EstimatorKind::Ht, &r.name).unwrap().varrht, 1.0);
        }
        let ht_cv = a.weight_row(EstimatorKind::Ht).unwrap().cv;
        assert_eq!((ht_cv.min, ht_cv.max), (0.0, 0.0));
        assert_eq!(a, run_study(&pop, &cfg).unwrap());
    }

    #[test]
    fn one_value_sweep_matches_study() {
        let pop = small_population();
        let cfg = StudyConfig {
            estimators: vec![EstimatorKind::BagPca, EstimatorKind::Ht],
            ..small_cfg()
        };
        let rows = sweep(&pop, &cfg, SweepAxis::C, &[3.0]).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].report, run_study(&pop, &cfg).unwrap());
        assert!(sweep(&pop, &cfg, SweepAxis::C, &[]).is_err());
        assert!(sweep(&pop, &cfg, SweepAxis::C, &[2.5]).is_err());
    }

    #[test]
    fn population_totals() {
        let pop = small_population();
        for r in &pop.responses {
            let t: f64 = r.values.iter().sum();
            assert!((t - r.total).abs() <= 1e-10 * t.abs().max(1.0));
        }
        assert!(Population::new(pop.aux.clone(), vec![("z".into(), vec![1.0; 3])]).is_err());
    }
}
