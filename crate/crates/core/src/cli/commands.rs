//! The five subcommands. Each returns the paths it wrote.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use ndarray::{s, Array2, Axis};
use serde::Serialize;

use super::ingest::{ingest_csv, Dataset, Diagnostics};
use super::output::{num, Table};
use super::{invalid, CliError, RunConfig};
use crate::bagcal::{default_c, run_bagging, run_bagging_exact, run_bagging_variables, BaggingConfig, ScoreContext};
use crate::calibration::{chi2_calibrate, CalibrationSpec, EstimatorKind, Provenance, SingularityPolicy, WeightSystem};
use crate::error::Error;
use crate::matrixops::DataMatrix;
use crate::pca::{fit_pca, fit_pca_from_sample, PcaModel, PcaSource};
use crate::rng::{derive_seed, Purpose, STREAM_SCHEME, STREAM_SCHEME_VERSION};
use crate::simulation::{
    generate_population, run_study, sweep, AchievedR2, Population, SimulationReport, StudyConfig, SweepAxis,
};
use crate::varsampling::Sampler;
use crate::varsampling::SamplingDesign;

const DEFAULT_SEED: u64 = 1;
const DEFAULT_ALPHA: f64 = 0.5;
const DEFAULT_WEIGHT_ITERATIONS: usize = 500;
const DEFAULT_STUDY_ITERATIONS: usize = 100;
const DEFAULT_STUDY_C: usize = 10;
const DEFAULT_RUNS: usize = 1000;
const DEFAULT_SINGULARITY: SingularityPolicy = SingularityPolicy::PseudoInverse;

fn require<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
    p.as_deref().ok_or_else(|| invalid(format!("{flag} is required")))
}

fn policy_label(p: SingularityPolicy) -> &'static str {
    match p {
        SingularityPolicy::Error => "error",
        SingularityPolicy::PseudoInverse => "pseudo-inverse",
    }
}

fn sampler_label(s: Sampler) -> &'static str {
    match s {
        Sampler::Systematic => "systematic",
        Sampler::Rejective => "rejective",
    }
}

fn design_weights(pi: &[f64]) -> Result<Vec<f64>, CliError> {
    if let Some(&p) = pi.iter().find(|&&p| !(p > 0.0 && p <= 1.0)) {
        return Err(Error::out_of_range("inclusion probability", p, "must lie in (0, 1]").into());
    }
    Ok(pi.iter().map(|p| 1.0 / p).collect())
}

fn diag_meta(t: &mut Table, prefix: &str, d: &Diagnostics) {
    t.meta(&format!("{prefix}_rows"), d.rows);
    t.meta(&format!("{prefix}_aux_columns"), d.aux_columns);
    t.meta(&format!("{prefix}_response_columns"), d.response_columns);
    t.meta(&format!("{prefix}_binary_columns"), d.binary_columns.len());
}

fn write(t: &Table, cfg: &RunConfig, name: &str, out: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let path = cfg.out_dir.join(name);
    t.write(&path)?;
    out.push(path);
    Ok(())
}

pub fn cmd_pca(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let ds = ingest_csv(require(&cfg.input, "--input")?)?;
    let aux = ds.aux.as_ref().ok_or_else(|| invalid("input has no x_ columns"))?;
    let model = match &ds.pi {
        Some(pi) => fit_pca_from_sample(aux.values(), &design_weights(pi)?, None)?,
        None => fit_pca(&aux.standardize()?)?,
    };
    let seed = cfg.seed.unwrap_or(DEFAULT_SEED);
    let mut t = Table::new("pca", seed, &["component", "eigenvalue", "proportion", "cumulative"]);
    diag_meta(&mut t, "input", &ds.diagnostics);
    t.meta(
        "pca_source",
        match model.source {
            PcaSource::Population => "population",
            PcaSource::DesignWeightedSample => "design-weighted-sample",
        },
    );
    let total: f64 = model.eigenvalues.sum();
    let mut cum = 0.0;
    for (j, &l) in model.eigenvalues.iter().enumerate() {
        cum += l;
        t.row(vec![(j + 1).to_string(), num(l), num(l / total), num(cum / total)]);
    }
    let mut out = Vec::new();
    write(&t, cfg, "eigenvalues.csv", &mut out)?;
    Ok(out)
}

enum Aux {
    /// Full auxiliary frame available.
    Population { std: DataMatrix, pca: PcaModel },
    /// Only sample rows plus known totals.
    Totals {
        sample_std: Array2<f64>,
        std_totals: Vec<f64>,
        pca: PcaModel,
    },
}

/// Sample units in design order with everything needed to weight them.
struct Frame {
    ids: Vec<String>,
    design: SamplingDesign,
    responses: Vec<(String, Vec<f64>)>,
    names: Vec<String>,
    aux: Aux,
    mode: &'static str,
    sample_diag: Diagnostics,
}

impl Frame {
    fn q(&self) -> usize {
        self.names.len()
    }
}

fn reorder(v: &[f64], order: &[usize]) -> Vec<f64> {
    order.iter().map(|&k| v[k]).collect()
}

fn load_frame(cfg: &RunConfig) -> Result<Frame, CliError> {
    let sample = ingest_csv(require(&cfg.input, "--input")?)?;
    match (&cfg.population, &cfg.totals) {
        (Some(_), Some(_)) => Err(invalid("use either --population or --totals, not both")),
        (Some(p), None) => {
            let pop = ingest_csv(p)?;
            population_frame(sample, pop, "population")
        }
        (None, Some(t)) => totals_frame(sample, t),
        (None, None) => {
            let pop = sample.clone();
            population_frame(sample, pop, "self")
        }
    }
}

fn population_frame(sample: Dataset, pop: Dataset, mode: &'static str) -> Result<Frame, CliError> {
    let raw = pop.aux.ok_or_else(|| invalid("population has no x_ columns"))?;
    let big_n = raw.nrows();
    let index: HashMap<&str, usize> = pop.ids.iter().enumerate().map(|(k, id)| (id.as_str(), k)).collect();
    let mut pos = Vec::with_capacity(sample.ids.len());
    for id in &sample.ids {
        match index.get(id.as_str()) {
            Some(&k) => pos.push(k),
            None => return Err(invalid(format!("unit `{id}` is not in the population"))),
        }
    }
    let n = pos.len();
    let pi = match &sample.pi {
        Some(pi) => pi.clone(),
        None if n == big_n => vec![1.0; n],
        None => return Err(invalid("the sample needs a pi column")),
    };
    design_weights(&pi)?;
    // probabilities of unsampled units never enter the estimators
    let mut probs = pop.pi.clone().unwrap_or_else(|| vec![1.0; big_n]);
    for (&k, &p) in pos.iter().zip(&pi) {
        probs[k] = p;
    }
    let design = SamplingDesign::new(pos.clone(), probs)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| pos[i]);
    let std = raw.standardize()?;
    let pca = fit_pca(&std)?;
    Ok(Frame {
        ids: order.iter().map(|&i| sample.ids[i].clone()).collect(),
        design,
        responses: sample
            .responses
            .iter()
            .map(|(name, v)| (name.clone(), reorder(v, &order)))
            .collect(),
        names: raw.column_names().to_vec(),
        aux: Aux::Population { std, pca },
        mode,
        sample_diag: sample.diagnostics,
    })
}

/// `name,total` rows; the row named `N` gives the population size.
fn read_totals(path: &Path) -> Result<HashMap<String, f64>, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut out = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            column: 1,
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 2 {
            return Err(CliError::Parse {
                line,
                column: 1,
                message: "expected `name,total`".into(),
            });
        }
        let v: f64 = rec[1].parse().map_err(|_| CliError::NonNumericCell {
            line,
            column: 2,
            value: rec[1].to_string(),
        })?;
        if out.insert(rec[0].to_string(), v).is_some() {
            return Err(CliError::Parse {
                line,
                column: 1,
                message: format!("duplicate total `{}`", &rec[0]),
            });
        }
    }
    Ok(out)
}

fn totals_frame(sample: Dataset, path: &Path) -> Result<Frame, CliError> {
    let raw = sample.aux.as_ref().ok_or_else(|| invalid("sample has no x_ columns"))?;
    let pi = sample.pi.as_ref().ok_or_else(|| invalid("the sample needs a pi column"))?;
    let d = design_weights(pi)?;
    let known = read_totals(path)?;
    let n = sample.ids.len();
    let big_n = *known.get("N").ok_or_else(|| invalid("totals file has no `N` row"))?;
    if !(big_n.fract() == 0.0 && big_n >= n as f64) {
        return Err(Error::out_of_range("N", big_n, format!("must be an integer >= n = {n}")).into());
    }
    let names = raw.column_names().to_vec();
    let totals = names
        .iter()
        .map(|c| known.get(c).copied().ok_or_else(|| invalid(format!("no total for `{c}`"))))
        .collect::<Result<Vec<_>, _>>()?;
    let pca = fit_pca_from_sample(raw.values(), &d, None)?;
    let sample_std = pca.standardize_rows(raw.values())?;
    let std_totals = pca.standardized_totals(&totals, big_n)?.to_vec();
    // the sample occupies the first n slots of the frame
    let mut probs = pi.clone();
    probs.resize(big_n as usize, 1.0);
    let design = SamplingDesign::new((0..n).collect(), probs)?;
    Ok(Frame {
        ids: sample.ids.clone(),
        design,
        responses: sample.responses.clone(),
        names,
        aux: Aux::Totals {
            sample_std,
            std_totals,
            pca,
        },
        mode: "totals",
        sample_diag: sample.diagnostics,
    })
}

/// Weighting parameters after defaults; `defaulted` lists the ones not set.
#[derive(Debug, Clone, Serialize)]
struct WeightParams {
    #[serde(rename = "B")]
    iterations: usize,
    c: usize,
    alpha: f64,
    seed: u64,
    sampler: &'static str,
    singularity: &'static str,
    exact_vars: Vec<String>,
    defaulted: Vec<&'static str>,
    #[serde(skip)]
    policy: SingularityPolicy,
    #[serde(skip)]
    sampler_kind: Sampler,
    #[serde(skip)]
    exact_idx: Vec<usize>,
}

fn weight_params(cfg: &RunConfig, frame: &Frame) -> Result<WeightParams, CliError> {
    let mut defaulted = Vec::new();
    let mut pick = |name: &'static str, set: bool| {
        if !set {
            defaulted.push(name);
        }
    };
    pick("B", cfg.iterations.is_some());
    pick("c", cfg.c.is_some());
    pick("alpha", cfg.alpha.is_some());
    pick("seed", cfg.seed.is_some());
    pick("sampler", cfg.sampler.is_some());
    pick("singularity", cfg.singularity.is_some());
    let q = frame.q();
    // round(√n), capped at the number of auxiliary variables
    let c = cfg.c.unwrap_or_else(|| default_c(frame.design.sample_size()).min(q));
    if c > q {
        return Err(Error::out_of_range("c", c as f64, format!("must lie in 1..={q}")).into());
    }
    let mut exact_idx = Vec::new();
    for v in &cfg.exact_vars {
        let j = frame
            .names
            .iter()
            .position(|n| n == v || n.strip_prefix("x_") == Some(v.as_str()))
            .ok_or_else(|| invalid(format!("unknown exact variable `{v}`")))?;
        if exact_idx.contains(&j) {
            return Err(invalid(format!("exact variable `{v}` listed twice")));
        }
        exact_idx.push(j);
    }
    let policy = cfg.singularity.unwrap_or(DEFAULT_SINGULARITY);
    let sampler_kind = cfg.sampler.unwrap_or_default();
    Ok(WeightParams {
        iterations: cfg.iterations.unwrap_or(DEFAULT_WEIGHT_ITERATIONS),
        c,
        alpha: cfg.alpha.unwrap_or(DEFAULT_ALPHA),
        seed: cfg.seed.unwrap_or(DEFAULT_SEED),
        sampler: sampler_label(sampler_kind),
        singularity: policy_label(policy),
        exact_vars: exact_idx.iter().map(|&j| frame.names[j].clone()).collect(),
        defaulted,
        policy,
        sampler_kind,
        exact_idx,
    })
}

fn compute_weights(frame: &Frame, kind: EstimatorKind, p: &WeightParams) -> Result<WeightSystem, CliError> {
    let design = &frame.design;
    let d = design.sample_design_weights();
    let big_n = design.population_size() as f64;
    let idx = design.sample_indices();
    let spec = CalibrationSpec::default().with_policy(p.policy);
    let bag_cfg = |seed| BaggingConfig {
        iterations: p.iterations,
        c: Some(p.c),
        alpha: p.alpha,
        seed,
        exact_vars: p.exact_idx.clone(),
        retain_iterations: false,
        sampler: p.sampler_kind,
    };
    if !p.exact_idx.is_empty() && kind == EstimatorKind::BagPca {
        return match &frame.aux {
            Aux::Population { std, .. } => {
                Ok(run_bagging_exact(std, &p.exact_idx, design, &bag_cfg(p.seed), &spec)?.weights)
            }
            Aux::Totals { .. } => Err(invalid("--exact-vars needs --population data")),
        };
    }
    let (sample_std, std_totals): (Array2<f64>, Vec<f64>) = match &frame.aux {
        Aux::Population { std, .. } => (std.values().select(Axis(0), idx), std.column_totals().to_vec()),
        Aux::Totals {
            sample_std, std_totals, ..
        } => (sample_std.clone(), std_totals.clone()),
    };
    let pca = match &frame.aux {
        Aux::Population { pca, .. } | Aux::Totals { pca, .. } => pca,
    };
    // component scores of the sample rows and their known totals
    let scores = || -> (Array2<f64>, Vec<f64>) {
        let z = sample_std.dot(&pca.loadings);
        let t = match pca.source {
            PcaSource::Population => vec![0.0; z.ncols()],
            PcaSource::DesignWeightedSample => pca.component_totals(ndarray::ArrayView1::from(&std_totals[..])).to_vec(),
        };
        (z, t)
    };
    let ws = match kind {
        EstimatorKind::Ht => {
            let mut ws = WeightSystem::horvitz_thompson(d);
            ws.unit_ids = idx.to_vec();
            ws
        }
        EstimatorKind::Cal => {
            let mut ws = chi2_calibrate(sample_std.view(), &d, &std_totals, big_n, &spec)?;
            ws.unit_ids = idx.to_vec();
            ws
        }
        EstimatorKind::Pca => {
            let (z, t) = scores();
            let zc = z.slice(s![.., ..p.c]).to_owned();
            let mut ws = chi2_calibrate(zc.view(), &d, &t[..p.c], big_n, &spec)?;
            ws.unit_ids = idx.to_vec();
            ws.provenance.estimator = EstimatorKind::Pca;
            ws.provenance.c = Some(p.c);
            ws
        }
        EstimatorKind::Bag => {
            let ctx = ScoreContext::new(sample_std, std_totals, frame.names.clone())?;
            let seed = derive_seed(p.seed, Purpose::Run, 1);
            run_bagging_variables(&ctx, design, &bag_cfg(seed), &spec)?.weights
        }
        EstimatorKind::BagPca => {
            let (z, t) = scores();
            let names = (1..=z.ncols()).map(|j| format!("PC{j}")).collect();
            let ctx = ScoreContext::new(z, t, names)?;
            run_bagging(pca, &ctx, design, &bag_cfg(p.seed), &spec)?.weights
        }
    };
    Ok(ws)
}

fn frame_meta(t: &mut Table, frame: &Frame, p: &WeightParams) {
    t.meta("frame", frame.mode);
    t.meta("population_size", frame.design.population_size());
    t.meta("sample_size", frame.design.sample_size());
    diag_meta(t, "sample", &frame.sample_diag);
    t.meta("B", p.iterations);
    t.meta("c", p.c);
    t.meta("alpha", num(p.alpha));
    t.meta("sampler", p.sampler);
    t.meta("singularity", p.singularity);
    t.meta("exact_vars", p.exact_vars.join(";"));
    t.meta("defaulted", p.defaulted.join(";"));
}

#[derive(Serialize)]
struct Sidecar<'a> {
    tool: String,
    command: &'static str,
    seed: u64,
    stream_scheme: &'static str,
    stream_scheme_version: u64,
    frame: &'static str,
    population_size: usize,
    sample_size: usize,
    parameters: &'a WeightParams,
    provenance: &'a Provenance,
}

fn single_estimator(cfg: &RunConfig) -> Result<EstimatorKind, CliError> {
    match cfg.estimators.as_deref() {
        None => Ok(EstimatorKind::BagPca),
        Some([k]) => Ok(*k),
        Some(_) => Err(invalid("weights takes exactly one estimator")),
    }
}

pub fn cmd_weights(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let kind = single_estimator(cfg)?;
    let frame = load_frame(cfg)?;
    let p = weight_params(cfg, &frame)?;
    let ws = compute_weights(&frame, kind, &p)?;

    let mut t = Table::new("weights", p.seed, &["unit_id", "d", "g", "w"]);
    t.meta("estimator", kind);
    frame_meta(&mut t, &frame, &p);
    for (k, id) in frame.ids.iter().enumerate() {
        t.row(vec![id.clone(), num(ws.design_weights[k]), num(ws.g[k]), num(ws.w[k])]);
    }
    let mut out = Vec::new();
    write(&t, cfg, "weights.csv", &mut out)?;

    let sidecar = Sidecar {
        tool: format!("pcbag {}", env!("CARGO_PKG_VERSION")),
        command: "weights",
        seed: p.seed,
        stream_scheme: STREAM_SCHEME,
        stream_scheme_version: STREAM_SCHEME_VERSION,
        frame: frame.mode,
        population_size: frame.design.population_size(),
        sample_size: frame.design.sample_size(),
        parameters: &p,
        provenance: &ws.provenance,
    };
    let json = serde_json::to_string_pretty(&sidecar).map_err(|e| invalid(e.to_string()))? + "\n";
    let path = cfg.out_dir.join("weights.provenance.json");
    std::fs::write(&path, json).map_err(|e| CliError::io(&path, e))?;
    out.push(path);
    Ok(out)
}

fn estimator_list(cfg: &RunConfig, default: &[EstimatorKind]) -> Vec<EstimatorKind> {
    let mut v = cfg.estimators.clone().unwrap_or_else(|| default.to_vec());
    v.sort();
    v.dedup();
    v
}

pub fn cmd_estimate(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let frame = load_frame(cfg)?;
    if frame.responses.is_empty() {
        return Err(invalid("the sample has no y_ columns"));
    }
    let kinds = estimator_list(cfg, &EstimatorKind::ALL);
    let p = weight_params(cfg, &frame)?;
    let mut t = Table::new("estimate", p.seed, &["estimator", "response", "total"]);
    t.meta("estimators", kinds.iter().map(|k| k.label()).collect::<Vec<_>>().join(";"));
    frame_meta(&mut t, &frame, &p);
    for &kind in &kinds {
        let ws = compute_weights(&frame, kind, &p)?;
        for (name, y) in &frame.responses {
            t.row(vec![kind.to_string(), name.clone(), num(ws.total(y)?)]);
        }
    }
    let mut out = Vec::new();
    write(&t, cfg, "estimates.csv", &mut out)?;
    Ok(out)
}

/// Population file from `--input`, or the synthetic population.
fn study_population(cfg: &RunConfig) -> Result<(Population, Option<Vec<AchievedR2>>, &'static str), CliError> {
    match &cfg.input {
        Some(path) => {
            if cfg.synthetic.is_some() {
                return Err(invalid("`synthetic` settings conflict with --input"));
            }
            let ds = ingest_csv(path)?;
            let aux = ds.aux.ok_or_else(|| invalid("population has no x_ columns"))?;
            if ds.responses.is_empty() {
                return Err(invalid("population has no y_ columns"));
            }
            Ok((Population::new(aux, ds.responses)?, None, "file"))
        }
        None => {
            let spec = cfg.synthetic.clone().unwrap_or_default();
            let syn = generate_population(&spec)?;
            Ok((syn.population, Some(syn.achieved), "synthetic"))
        }
    }
}

fn study_config(
    cfg: &RunConfig,
    pop: &Population,
    default_estimators: &[EstimatorKind],
) -> Result<(StudyConfig, Vec<&'static str>), CliError> {
    if cfg.singularity == Some(SingularityPolicy::Error) {
        return Err(invalid("simulations always use the pseudo-inverse policy"));
    }
    if !cfg.exact_vars.is_empty() {
        return Err(invalid("--exact-vars is not available in simulations"));
    }
    let mut defaulted = Vec::new();
    for (name, set) in [
        ("n", cfg.n.is_some()),
        ("runs", cfg.runs.is_some()),
        ("B", cfg.iterations.is_some()),
        ("c", cfg.c.is_some()),
        ("alpha", cfg.alpha.is_some()),
        ("seed", cfg.seed.is_some()),
        ("sampler", cfg.sampler.is_some()),
        ("estimators", cfg.estimators.is_some()),
    ] {
        if !set {
            defaulted.push(name);
        }
    }
    let big_n = pop.size();
    let study = StudyConfig {
        // a 20% sample by default
        sample_size: cfg.n.unwrap_or(((big_n as f64) / 5.0).round() as usize),
        runs: cfg.runs.unwrap_or(DEFAULT_RUNS),
        estimators: estimator_list(cfg, default_estimators),
        iterations: cfg.iterations.unwrap_or(DEFAULT_STUDY_ITERATIONS),
        c: cfg.c.unwrap_or(DEFAULT_STUDY_C.min(pop.aux.ncols())),
        alpha: cfg.alpha.unwrap_or(DEFAULT_ALPHA),
        sampler: cfg.sampler.unwrap_or_default(),
        seed: cfg.seed.unwrap_or(DEFAULT_SEED),
        keep_estimates: false,
    };
    Ok((study, defaulted))
}

fn study_meta(t: &mut Table, source: &str, pop: &Population, study: &StudyConfig, defaulted: &[&str]) {
    t.meta("population", source);
    t.meta("population_size", pop.size());
    t.meta("aux_columns", pop.aux.ncols());
    t.meta("n", study.sample_size);
    t.meta("runs", study.runs);
    t.meta("B", study.iterations);
    t.meta("c", study.c);
    t.meta("alpha", num(study.alpha));
    t.meta("sampler", sampler_label(study.sampler));
    t.meta("singularity", policy_label(SingularityPolicy::PseudoInverse));
    t.meta("estimators", study.estimators.iter().map(|k| k.label()).collect::<Vec<_>>().join(";"));
    t.meta("defaulted", defaulted.join(";"));
}

const METRIC_HEADER: [&str; 6] = ["estimator", "response", "rb", "rsd", "rrmse", "varrht"];
const WEIGHT_HEADER: [&str; 16] = [
    "estimator",
    "cv_min",
    "cv_q1",
    "cv_median",
    "cv_mean",
    "cv_q3",
    "cv_max",
    "mean_min_g",
    "mean_max_g",
    "min_min_g",
    "max_max_g",
    "mean_spread",
    "mean_abs_dev",
    "rank_deficient",
    "rank_deficient_runs",
    "failed_iterations",
];

fn metric_rows(report: &SimulationReport) -> Vec<Vec<String>> {
    report
        .metrics
        .iter()
        .map(|m| {
            vec![
                m.estimator.to_string(),
                m.response.clone(),
                num(m.rb),
                num(m.rsd),
                num(m.rrmse),
                num(m.varrht),
            ]
        })
        .collect()
}

fn weight_rows(report: &SimulationReport) -> Vec<Vec<String>> {
    report
        .weights
        .iter()
        .map(|w| {
            vec![
                w.estimator.to_string(),
                num(w.cv.min),
                num(w.cv.q1),
                num(w.cv.median),
                num(w.cv.mean),
                num(w.cv.q3),
                num(w.cv.max),
                num(w.mean_min_g),
                num(w.mean_max_g),
                num(w.min_min_g),
                num(w.max_max_g),
                num(w.mean_spread),
                num(w.mean_abs_dev),
                w.rank_deficient.to_string(),
                w.rank_deficient_runs.to_string(),
                w.failed_iterations.to_string(),
            ]
        })
        .collect()
}

fn response_table(
    command: &str,
    seed: u64,
    pop: &Population,
    achieved: Option<&[AchievedR2]>,
) -> Table {
    let mut t = Table::new(command, seed, &["response", "total", "r2_full", "r2_top"]);
    for r in &pop.responses {
        let a = achieved.and_then(|a| a.iter().find(|a| a.name == r.name));
        t.row(vec![
            r.name.clone(),
            num(r.total),
            a.map_or(String::new(), |a| num(a.r2_full)),
            a.map_or(String::new(), |a| num(a.r2_top)),
        ]);
    }
    t
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let (pop, achieved, source) = study_population(cfg)?;
    let (study, defaulted) = study_config(cfg, &pop, &EstimatorKind::ALL)?;
    let report = run_study(&pop, &study)?;

    let mut out = Vec::new();
    let mut m = Table::new("simulate", study.seed, &METRIC_HEADER);
    study_meta(&mut m, source, &pop, &study, &defaulted);
    metric_rows(&report).into_iter().for_each(|r| m.row(r));
    write(&m, cfg, "simulation_metrics.csv", &mut out)?;

    let mut w = Table::new("simulate", study.seed, &WEIGHT_HEADER);
    study_meta(&mut w, source, &pop, &study, &defaulted);
    weight_rows(&report).into_iter().for_each(|r| w.row(r));
    write(&w, cfg, "simulation_weights.csv", &mut out)?;

    let mut r = response_table("simulate", study.seed, &pop, achieved.as_deref());
    study_meta(&mut r, source, &pop, &study, &defaulted);
    write(&r, cfg, "simulation_responses.csv", &mut out)?;
    Ok(out)
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let axis = cfg.axis.ok_or_else(|| invalid("--axis is required (c or alpha)"))?;
    let grid = match &cfg.grid {
        Some(g) => g.clone(),
        None => match axis {
            SweepAxis::C => vec![5.0, 20.0, 60.0],
            SweepAxis::Alpha => vec![0.0, 0.5, 1.0, 2.0, 4.0],
        },
    };
    let (pop, _, source) = study_population(cfg)?;
    let (study, mut defaulted) = study_config(cfg, &pop, &[EstimatorKind::BagPca])?;
    if cfg.grid.is_none() {
        defaulted.push("grid");
    }
    let rows = sweep(&pop, &study, axis, &grid)?;

    let grid_label = grid.iter().map(|v| num(*v)).collect::<Vec<_>>().join(";");
    let mut out = Vec::new();
    let mut header = vec![axis_label(axis)];
    header.extend(METRIC_HEADER);
    let mut m = Table::new("sweep", study.seed, &header);
    study_meta(&mut m, source, &pop, &study, &defaulted);
    m.meta("axis", axis).meta("grid", &grid_label);
    for row in &rows {
        for r in metric_rows(&row.report) {
            let mut v = vec![num(row.value)];
            v.extend(r);
            m.row(v);
        }
    }
    write(&m, cfg, "sweep_metrics.csv", &mut out)?;

    let mut header = vec![axis_label(axis)];
    header.extend(WEIGHT_HEADER);
    let mut w = Table::new("sweep", study.seed, &header);
    study_meta(&mut w, source, &pop, &study, &defaulted);
    w.meta("axis", axis).meta("grid", &grid_label);
    for row in &rows {
        for r in weight_rows(&row.report) {
            let mut v = vec![num(row.value)];
            v.extend(r);
            w.row(v);
        }
    }
    write(&w, cfg, "sweep_weights.csv", &mut out)?;
    Ok(out)
}

fn axis_label(axis: SweepAxis) -> &'static str {
    match axis {
        SweepAxis::C => "c",
        SweepAxis::Alpha => "alpha",
    }
}
