//! Synthetic household-survey style populations.
//!
//! Auxiliary variables come from a latent factor model: binary columns are
//! thresholded latent Gaussians (including one complete one-hot group and a
//! few rare dummies), continuous columns are factor combinations, some of
//! them exponentiated. Responses are built on the standardized population
//! principal components so that the full-model and top-component R² hit
//! their targets exactly.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::Population;
use crate::error::{Error, Result};
use crate::matrixops::{r_squared, regress_residuals, DataMatrix};
use crate::pca::fit_pca;
use crate::rng::{stream, Purpose, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResponseRecipe {
    /// Linear in the population components plus noise orthogonal to the
    /// auxiliary space.
    Linear {
        name: String,
        /// R² of the regression on all auxiliary variables.
        r2_full: f64,
        /// R² of the regression on the first `top_c` components.
        r2_top: f64,
        /// Log-scale sd of the noise before centering; 0 gives Gaussian
        /// noise, larger values a heavier right tail.
        tail: f64,
        location: f64,
        scale: f64,
    },
    /// Copy of another response whose values above the given quantile are
    /// replaced by draws (with replacement) from the values at or below it.
    TailReplaced { name: String, source: String, quantile: f64 },
}

impl ResponseRecipe {
    pub fn name(&self) -> &str {
        match self {
            ResponseRecipe::Linear { name, .. } | ResponseRecipe::TailReplaced { name, .. } => name,
        }
    }

    pub fn linear(name: &str, r2_full: f64, r2_top: f64, tail: f64) -> Self {
        ResponseRecipe::Linear {
            name: name.to_string(),
            r2_full,
            r2_top,
            tail,
            location: 100.0,
            scale: 60.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub population_size: usize,
    pub q_binary: usize,
    pub q_continuous: usize,
    pub n_factors: usize,
    /// Size of a complete one-hot group among the binary columns (0 = none).
    pub onehot_group: usize,
    /// Binary columns with prevalence around 2%.
    pub rare_binary: usize,
    /// Number of leading components for the top-component R².
    pub top_c: usize,
    /// Allowed deviation of achieved from target R².
    pub r2_tolerance: f64,
    pub responses: Vec<ResponseRecipe>,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            population_size: 425,
            q_binary: 64,
            q_continuous: 23,
            n_factors: 12,
            onehot_group: 5,
            rare_binary: 6,
            top_c: 10,
            r2_tolerance: 0.1,
            responses: vec![
                ResponseRecipe::linear("y1", 0.67, 0.23, 1.0),
                ResponseRecipe::linear("y2", 0.64, 0.31, 1.0),
                ResponseRecipe::TailReplaced {
                    name: "y3".into(),
                    source: "y1".into(),
                    quantile: 0.95,
                },
                ResponseRecipe::TailReplaced {
                    name: "y4".into(),
                    source: "y2".into(),
                    quantile: 0.95,
                },
                ResponseRecipe::linear("y_lin", 0.9, 0.6, 0.0),
            ],
            seed: 20240,
        }
    }
}

impl SyntheticSpec {
    pub fn q(&self) -> usize {
        self.q_binary + self.q_continuous
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InfeasibleSpec(m));
        if self.population_size < 10 {
            return bad(format!("population size {} is too small", self.population_size));
        }
        if self.q() == 0 {
            return bad("no auxiliary variables".into());
        }
        if self.onehot_group == 1 || self.onehot_group + self.rare_binary > self.q_binary {
            return bad("one-hot group and rare dummies do not fit among the binary columns".into());
        }
        if self.n_factors == 0 {
            return bad("need at least one latent factor".into());
        }
        for r in &self.responses {
            match r {
                ResponseRecipe::Linear {
                    name,
                    r2_full,
                    r2_top,
                    tail,
                    scale,
                    ..
                } => {
                    if !(0.0..=1.0).contains(r2_full) || !(0.0..=1.0).contains(r2_top) || r2_top > r2_full {
                        return bad(format!("{name}: need 0 <= r2_top <= r2_full <= 1"));
                    }
                    if !(*tail >= 0.0) || !(*scale > 0.0) {
                        return bad(format!("{name}: tail must be >= 0 and scale > 0"));
                    }
                }
                ResponseRecipe::TailReplaced { name, source, quantile } => {
                    if !(*quantile > 0.0 && *quantile < 1.0) {
                        return bad(format!("{name}: quantile must lie in (0, 1)"));
                    }
                    if !self.responses.iter().any(|o| o.name() == source) {
                        return bad(format!("{name}: unknown source response {source}"));
                    }
                }
            }
        }
        Ok(())
    }
}

/// R² values actually achieved by a generated response.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AchievedR2 {
    pub name: String,
    pub r2_full: f64,
    pub r2_top: f64,
}

#[derive(Debug, Clone)]
pub struct SyntheticPopulation {
    pub population: Population,
    pub achieved: Vec<AchievedR2>,
}

fn normal(rng: &mut Stream) -> f64 {
    rng.sample(StandardNormal)
}

/// Factor loadings: factor f has strength `0.9^f`, each variable loads on
/// a factor with probability 0.35.
fn loading_row(rng: &mut Stream, n_factors: usize) -> Vec<f64> {
    (0..n_factors)
        .map(|f| {
            if rng.random_bool(0.35) {
                1.1 * 0.9f64.powi(f as i32) * normal(rng)
            } else {
                0.0
            }
        })
        .collect()
}

fn latent_column(rng: &mut Stream, factors: &Array2<f64>, noise_sd: f64) -> Array1<f64> {
    let l = Array1::from(loading_row(rng, factors.ncols()));
    let mut col = factors.dot(&l);
    col.mapv_inplace(|v| v + noise_sd * normal(rng));
    col
}

/// Sets the `count` largest entries to 1 and the rest to 0.
fn threshold_top(latent: &Array1<f64>, count: usize) -> Array1<f64> {
    let mut order: Vec<usize> = (0..latent.len()).collect();
    order.sort_by(|&a, &b| latent[b].total_cmp(&latent[a]));
    let mut out = Array1::zeros(latent.len());
    for &k in &order[..count] {
        out[k] = 1.0;
    }
    out
}

fn auxiliary(spec: &SyntheticSpec) -> Result<DataMatrix> {
    let big_n = spec.population_size;
    let mut rng = stream(spec.seed, Purpose::Population, 0);
    let factors = Array2::from_shape_fn((big_n, spec.n_factors), |_| normal(&mut rng));
    let mut cols: Vec<Array1<f64>> = Vec::with_capacity(spec.q());
    let mut names = Vec::with_capacity(spec.q());

    if spec.onehot_group > 0 {
        let latent: Vec<Array1<f64>> = (0..spec.onehot_group)
            .map(|_| latent_column(&mut rng, &factors, 1.0))
            .collect();
        let mut group = vec![Array1::zeros(big_n); spec.onehot_group];
        for k in 0..big_n {
            let best = (0..spec.onehot_group)
                .max_by(|&a, &b| latent[a][k].total_cmp(&latent[b][k]))
                .expect("nonempty group");
            group[best][k] = 1.0;
        }
        for (g, col) in group.into_iter().enumerate() {
            cols.push(col);
            names.push(format!("region_{}", g + 1));
        }
    }
    for r in 0..spec.rare_binary {
        let count = ((0.015 + 0.002 * r as f64) * big_n as f64).round().max(2.0) as usize;
        let latent = latent_column(&mut rng, &factors, 1.0);
        cols.push(threshold_top(&latent, count));
        names.push(format!("rare_{}", r + 1));
    }
    let plain = spec.q_binary - spec.onehot_group - spec.rare_binary;
    for b in 0..plain {
        let prevalence = rng.random_range(0.08..0.5);
        let count = ((prevalence * big_n as f64).round() as usize).clamp(2, big_n - 2);
        let latent = latent_column(&mut rng, &factors, 1.0);
        cols.push(threshold_top(&latent, count));
        names.push(format!("dummy_{}", b + 1));
    }
    for c in 0..spec.q_continuous {
        let mut col = latent_column(&mut rng, &factors, 0.8);
        if c % 3 == 0 {
            // amount-like, right-skewed
            col.mapv_inplace(|v| (0.5 * v).exp());
        }
        cols.push(col);
        names.push(format!("cont_{}", c + 1));
    }

    let views: Vec<_> = cols.iter().map(|c| c.view().insert_axis(Axis(1))).collect();
    let values = ndarray::concatenate(Axis(1), &views).expect("equal lengths");
    DataMatrix::raw(values, names)
}

/// Unit-variance weights `β` over `count` components summing (in squares)
/// to `mass`, with random signs.
fn block_weights(rng: &mut Stream, count: usize, mass: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..count).map(|_| 0.3 + normal(rng).abs()).collect();
    let total: f64 = raw.iter().sum();
    raw.iter()
        .map(|a| {
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            sign * (mass * a / total).sqrt()
        })
        .collect()
}

fn population_variance(v: &Array1<f64>) -> f64 {
    let m = v.mean().unwrap_or(0.0);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
}

pub fn generate_population(spec: &SyntheticSpec) -> Result<SyntheticPopulation> {
    spec.validate()?;
    let aux = auxiliary(spec)?;
    let std = aux.standardize()?;
    let pca = fit_pca(&std)?;
    let big_n = spec.population_size;
    let lambda_max = pca.eigenvalues[0];
    let rank = pca.eigenvalues.iter().filter(|&&l| l > 1e-9 * lambda_max).count();
    let top = spec.top_c.min(rank);
    let scores = std.values().dot(&pca.loadings);
    // unit-variance components
    let mut units = Array2::zeros((big_n, rank));
    for j in 0..rank {
        let s = pca.eigenvalues[j].sqrt();
        units.column_mut(j).assign(&scores.column(j).mapv(|v| v / s));
    }
    let top_scores = scores.slice(ndarray::s![.., ..top]).to_owned();

    let mut values: Vec<(String, Array1<f64>)> = Vec::new();
    for (idx, recipe) in spec.responses.iter().enumerate() {
        let mut rng = stream(spec.seed, Purpose::Population, 1 + idx as u64);
        let y = match recipe {
            ResponseRecipe::Linear {
                name,
                r2_full,
                r2_top,
                tail,
                location,
                scale,
            } => {
                let rest_mass = r2_full - r2_top;
                if rest_mass > 0.0 && rank <= top {
                    return Err(Error::InfeasibleSpec(format!(
                        "{name}: no components beyond the first {top} to carry R² {rest_mass}"
                    )));
                }
                let mut beta = block_weights(&mut rng, top, *r2_top);
                beta.extend(block_weights(&mut rng, rank - top, rest_mass));
                let signal = units.dot(&Array1::from(beta));
                let mut y = signal;
                let noise_var = 1.0 - r2_full;
                if noise_var > 0.0 {
                    let raw = Array2::from_shape_fn((big_n, 1), |_| (tail * normal(&mut rng)).exp());
                    let e = regress_residuals(raw.view(), std.values())?.column(0).to_owned();
                    let v = population_variance(&e);
                    if !(v > 0.0) {
                        return Err(Error::InfeasibleSpec(format!(
                            "{name}: auxiliary variables span the whole population space"
                        )));
                    }
                    y = y + e.mapv(|x| x * (noise_var / v).sqrt());
                }
                y.mapv(|v| location + scale * v)
            }
            ResponseRecipe::TailReplaced { name, source, quantile } => {
                let src = &values
                    .iter()
                    .find(|(n, _)| n == source)
                    .ok_or_else(|| Error::InfeasibleSpec(format!("{name}: source {source} must come first")))?
                    .1;
                let mut sorted = src.to_vec();
                sorted.sort_by(f64::total_cmp);
                let cut = super::metrics::quantile_sorted(&sorted, *quantile);
                let keep: Vec<f64> = src.iter().copied().filter(|&v| v <= cut).collect();
                src.mapv(|v| if v > cut { keep[rng.random_range(0..keep.len())] } else { v })
            }
        };
        values.push((recipe.name().to_string(), y));
    }

    let mut achieved = Vec::new();
    for (recipe, (name, y)) in spec.responses.iter().zip(&values) {
        let r2_full_got = r_squared(y.view(), std.values())?;
        let r2_top_got = r_squared(y.view(), top_scores.view())?;
        if let ResponseRecipe::Linear { r2_full, r2_top, .. } = recipe {
            if (r2_full_got - r2_full).abs() > spec.r2_tolerance || (r2_top_got - r2_top).abs() > spec.r2_tolerance {
                return Err(Error::InfeasibleSpec(format!(
                    "{name}: achieved R² {r2_full_got:.4} / {r2_top_got:.4}, target {r2_full} / {r2_top}"
                )));
            }
        }
        achieved.push(AchievedR2 {
            name: name.clone(),
            r2_full: r2_full_got,
            r2_top: r2_top_got,
        });
    }

    let responses = values.into_iter().map(|(n, v)| (n, v.to_vec())).collect();
    Ok(SyntheticPopulation {
        population: Population::new(aux, responses)?,
        achieved,
    })
}
