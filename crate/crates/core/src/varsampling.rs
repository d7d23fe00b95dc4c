//! Sampling designs: simple random sampling of units, and fixed-size
//! unequal-probability sampling of principal components with inclusion
//! probabilities proportional to `λ_j^α`.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

/// Unit-level design: which units were drawn and with what probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingDesign {
    population_size: usize,
    sample_indices: Vec<usize>,
    inclusion_probs: Vec<f64>,
    design_weights: Vec<f64>,
}

impl SamplingDesign {
    /// Builds a design from sorted-or-not sample indices and the inclusion
    /// probabilities of every population unit.
    pub fn new(mut sample_indices: Vec<usize>, inclusion_probs: Vec<f64>) -> Result<Self> {
        let big_n = inclusion_probs.len();
        if let Some(&p) = inclusion_probs.iter().find(|&&p| !(p > 0.0 && p <= 1.0)) {
            return Err(Error::out_of_range("inclusion probability", p, "must lie in (0, 1]"));
        }
        sample_indices.sort_unstable();
        for w in sample_indices.windows(2) {
            if w[0] == w[1] {
                return Err(Error::out_of_range("sample index", w[0] as f64, "duplicate unit"));
            }
        }
        if let Some(&k) = sample_indices.last() {
            if k >= big_n {
                return Err(Error::out_of_range(
                    "sample index",
                    k as f64,
                    format!("population has {big_n} units"),
                ));
            }
        }
        let design_weights = inclusion_probs.iter().map(|p| 1.0 / p).collect();
        Ok(Self {
            population_size: big_n,
            sample_indices,
            inclusion_probs,
            design_weights,
        })
    }

    /// Every unit sampled with certainty.
    pub fn census(population_size: usize) -> Self {
        Self {
            population_size,
            sample_indices: (0..population_size).collect(),
            inclusion_probs: vec![1.0; population_size],
            design_weights: vec![1.0; population_size],
        }
    }

    pub fn population_size(&self) -> usize {
        self.population_size
    }

    pub fn sample_size(&self) -> usize {
        self.sample_indices.len()
    }

    pub fn sample_indices(&self) -> &[usize] {
        &self.sample_indices
    }

    pub fn inclusion_probs(&self) -> &[f64] {
        &self.inclusion_probs
    }

    pub fn design_weights(&self) -> &[f64] {
        &self.design_weights
    }

    /// Design weights of the sampled units, in sample order.
    pub fn sample_design_weights(&self) -> Vec<f64> {
        self.sample_indices.iter().map(|&k| self.design_weights[k]).collect()
    }
}

/// Simple random sampling without replacement of `n` out of `N` units.
pub fn srswor<R: Rng + ?Sized>(population_size: usize, n: usize, rng: &mut R) -> Result<SamplingDesign> {
    if n == 0 || n > population_size {
        return Err(Error::out_of_range(
            "n",
            n as f64,
            format!("need 0 < n <= N = {population_size}"),
        ));
    }
    let mut idx = rand::seq::index::sample(rng, population_size, n).into_vec();
    idx.sort_unstable();
    let pi = n as f64 / population_size as f64;
    let d = population_size as f64 / n as f64;
    Ok(SamplingDesign {
        population_size,
        sample_indices: idx,
        inclusion_probs: vec![pi; population_size],
        design_weights: vec![d; population_size],
    })
}

/// Fixed-size sampler used to draw component subsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampler {
    /// Random order, then systematic selection on the cumulated
    /// probabilities. Exact first-order inclusion probabilities.
    #[default]
    Systematic,
    /// Conditional Poisson (maximum entropy): Poisson draws with adjusted
    /// working probabilities, rejected until the size is right.
    Rejective,
}

impl std::str::FromStr for Sampler {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "systematic" => Ok(Sampler::Systematic),
            "rejective" => Ok(Sampler::Rejective),
            other => Err(Error::InvalidConfig(format!("unknown sampler `{other}`"))),
        }
    }
}

/// Component-level inclusion probabilities for one bagging configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentSelection {
    pub alpha: f64,
    pub c: usize,
    pub probs: Vec<f64>,
    pub sampler: Sampler,
    /// Conditional-Poisson working probabilities (rejective sampler only),
    /// indexed like `probs`; 0 or 1 where `probs` is.
    working: Option<Vec<f64>>,
}

const CERTAIN: f64 = 1.0;

/// Inclusion probabilities `π_j ∝ λ_j^α` summing to `c`, with any `π_j > 1`
/// capped at 1 and the remaining budget spread over the others.
///
/// With `α > 0`, components whose eigenvalue is 0 get probability 0. With
/// `α = 0` every component is eligible (`0^0 = 1`).
pub fn component_inclusion_probs(eigenvalues: &[f64], alpha: f64, c: usize) -> Result<ComponentSelection> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::out_of_range("alpha", alpha, "must be finite and >= 0"));
    }
    if let Some(&l) = eigenvalues.iter().find(|&&l| !(l >= 0.0)) {
        return Err(Error::out_of_range("eigenvalue", l, "must be >= 0"));
    }
    let raw: Vec<f64> = eigenvalues
        .iter()
        .map(|&l| if alpha == 0.0 { 1.0 } else { l.powf(alpha) })
        .collect();
    let eligible = raw.iter().filter(|&&r| r > 0.0).count();
    if c == 0 || c > eligible {
        return Err(Error::InfeasibleSize {
            requested: c,
            eligible,
        });
    }
    let probs = capped_proportional(&raw, c);
    Ok(ComponentSelection {
        alpha,
        c,
        probs,
        sampler: Sampler::Systematic,
        working: None,
    })
}

/// `c · r_j / Σ r` with iterative capping at 1.
fn capped_proportional(raw: &[f64], c: usize) -> Vec<f64> {
    let mut probs = vec![0.0; raw.len()];
    let mut capped = vec![false; raw.len()];
    loop {
        let n_capped = capped.iter().filter(|&&b| b).count();
        let budget = (c - n_capped) as f64;
        let sum: f64 = raw
            .iter()
            .zip(&capped)
            .filter(|(_, &cap)| !cap)
            .map(|(r, _)| r)
            .sum();
        let mut changed = false;
        for j in 0..raw.len() {
            if capped[j] {
                probs[j] = CERTAIN;
                continue;
            }
            let p = if sum > 0.0 { budget * raw[j] / sum } else { 0.0 };
            if p >= 1.0 {
                capped[j] = true;
                changed = true;
            }
            probs[j] = p;
        }
        if !changed {
            return probs;
        }
    }
}

impl ComponentSelection {
    /// Switches the sampler, computing conditional-Poisson working
    /// probabilities when the rejective sampler is requested.
    pub fn with_sampler(mut self, sampler: Sampler) -> Result<Self> {
        self.sampler = sampler;
        self.working = match sampler {
            Sampler::Systematic => None,
            Sampler::Rejective => Some(conditional_poisson_working_probs(&self.probs, self.c)?),
        };
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Draws `c` distinct component indices, returned sorted.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        sample_components(self, rng)
    }
}

/// Draws exactly `sel.c` distinct indices (sorted).
pub fn sample_components<R: Rng + ?Sized>(sel: &ComponentSelection, rng: &mut R) -> Vec<usize> {
    let mut chosen: Vec<usize> = (0..sel.probs.len()).filter(|&j| sel.probs[j] >= CERTAIN).collect();
    let remaining = sel.c - chosen.len();
    if remaining > 0 {
        let mut pool: Vec<usize> = (0..sel.probs.len())
            .filter(|&j| sel.probs[j] > 0.0 && sel.probs[j] < CERTAIN)
            .collect();
        match (&sel.sampler, &sel.working) {
            (Sampler::Rejective, Some(working)) => {
                chosen.extend(rejective_draw(&pool, working, remaining, rng));
            }
            _ => {
                pool.shuffle(rng);
                chosen.extend(systematic_draw(&pool, &sel.probs, remaining, rng));
            }
        }
    }
    chosen.sort_unstable();
    chosen
}

/// Systematic selection over `order`: points `u, u+1, …, u+m−1` on the
/// cumulated probabilities, each landing in a distinct item.
fn systematic_draw<R: Rng + ?Sized>(order: &[usize], probs: &[f64], m: usize, rng: &mut R) -> Vec<usize> {
    let mut cum = Vec::with_capacity(order.len());
    let mut acc = 0.0;
    for &j in order {
        acc += probs[j];
        cum.push(acc);
    }
    // absorb round-off so the last boundary is exactly m
    if let Some(last) = cum.last_mut() {
        *last = m as f64;
    }
    let u: f64 = rng.random();
    let mut out = Vec::with_capacity(m);
    let mut pos = 0;
    for i in 0..m {
        let point = u + i as f64;
        while pos + 1 < cum.len() && cum[pos] <= point {
            pos += 1;
        }
        // every interval is shorter than 1, so the next point lies further on
        out.push(order[pos]);
        pos += 1;
    }
    out
}

/// Poisson draws with the working probabilities until exactly `m` succeed.
fn rejective_draw<R: Rng + ?Sized>(pool: &[usize], working: &[f64], m: usize, rng: &mut R) -> Vec<usize> {
    let mut out = Vec::with_capacity(pool.len());
    loop {
        out.clear();
        for &j in pool {
            if rng.random::<f64>() < working[j] {
                out.push(j);
            }
        }
        if out.len() == m {
            return out;
        }
    }
}

/// Inclusion probabilities of the conditional Poisson design of size `m`
/// with odds `w`: `π_k = w_k e_{m−1}(w without k) / e_m(w)`, where `e_r` are
/// elementary symmetric polynomials. Prefix/suffix tables keep every term
/// positive.
pub(crate) fn conditional_poisson_inclusion(w: &[f64], m: usize) -> Vec<f64> {
    let n = w.len();
    // prefix[i][r] = e_r(w_0..w_{i-1}), suffix[i][r] = e_r(w_i..w_{n-1})
    let mut prefix = vec![vec![0.0; m + 1]; n + 1];
    let mut suffix = vec![vec![0.0; m + 1]; n + 1];
    prefix[0][0] = 1.0;
    for i in 0..n {
        prefix[i + 1][0] = 1.0;
        for r in 1..=m {
            prefix[i + 1][r] = prefix[i][r] + w[i] * prefix[i][r - 1];
        }
    }
    suffix[n][0] = 1.0;
    for i in (0..n).rev() {
        suffix[i][0] = 1.0;
        for r in 1..=m {
            suffix[i][r] = suffix[i + 1][r] + w[i] * suffix[i + 1][r - 1];
        }
    }
    let total = prefix[n][m];
    (0..n)
        .map(|k| {
            let without: f64 = (0..m).map(|a| prefix[k][a] * suffix[k + 1][m - 1 - a]).sum();
            w[k] * without / total
        })
        .collect()
}

/// Fixed-point search for Poisson working probabilities whose conditional
/// (size-`c`) design has the target first-order inclusion probabilities.
fn conditional_poisson_working_probs(probs: &[f64], c: usize) -> Result<Vec<f64>> {
    const MAX_ITER: usize = 10_000;
    const TOL: f64 = 1e-12;
    let pool: Vec<usize> = (0..probs.len()).filter(|&j| probs[j] > 0.0 && probs[j] < CERTAIN).collect();
    let n_certain = probs.iter().filter(|&&p| p >= CERTAIN).count();
    let m = c - n_certain;
    let mut working: Vec<f64> = probs.iter().map(|&p| if p >= CERTAIN { 1.0 } else { 0.0 }).collect();
    if m == 0 || pool.is_empty() {
        return Ok(working);
    }
    let target: Vec<f64> = pool.iter().map(|&j| probs[j]).collect();
    let mut pt = target.clone();
    for _ in 0..MAX_ITER {
        let mut w: Vec<f64> = pt.iter().map(|&p| p / (1.0 - p)).collect();
        let scale = w.iter().sum::<f64>() / w.len() as f64;
        w.iter_mut().for_each(|x| *x /= scale);
        let achieved = conditional_poisson_inclusion(&w, m);
        let mut worst = 0.0_f64;
        for ((p, &t), &a) in pt.iter_mut().zip(&target).zip(&achieved) {
            let delta = t - a;
            worst = worst.max(delta.abs());
            *p = (*p + delta).clamp(1e-12, 1.0 - 1e-12);
        }
        if worst < TOL {
            for (&j, &p) in pool.iter().zip(&pt) {
                working[j] = p;
            }
            return Ok(working);
        }
    }
    Err(Error::NoConvergence { sweeps: MAX_ITER })
}
