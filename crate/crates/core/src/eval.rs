//! Posterior predictive evaluation: choice distributions, total variation
//! distance, LPPD, WAIC and heterogeneity summaries.
//!
//! Every population-level summary here is a function of the mixture as a
//! whole (densities, simulated tastes), so component relabelling between
//! draws has no effect.

use std::collections::HashMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ChoiceDataset, ChoiceTask};
use crate::error::{Error, Result};
use crate::sampler::{BlockPopulation, ModelSpec, PosteriorDraws};
use crate::stats::{invert_cumulative, RandomStream};
use crate::utility::UtilitySpec;

pub const DEFAULT_TASTE_DRAWS: usize = 2000;
pub const PERCENTILES: [f64; 5] = [10.0, 25.0, 50.0, 75.0, 90.0];

/// Posterior predictive choice probabilities for a set of tasks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictiveChoiceDistribution {
    /// `(person_id, task_id)` per task.
    pub keys: Vec<(String, String)>,
    pub probabilities: Vec<Vec<f64>>,
    pub n_posterior_draws: usize,
    pub n_taste_draws: usize,
}

impl PredictiveChoiceDistribution {
    pub fn get(&self, person_id: &str, task_id: &str) -> Option<&[f64]> {
        self.keys
            .iter()
            .position(|(p, t)| p == person_id && t == task_id)
            .map(|i| self.probabilities[i].as_slice())
    }
}

fn decode_all(draws: &PosteriorDraws, row: &[f64]) -> Result<Vec<BlockPopulation>> {
    (0..draws.layout.blocks.len())
        .map(|b| draws.layout.population(row, b))
        .collect()
}

/// Draws one full parameter vector from the mixture implied by `pops`:
/// per block a component by its weight, then a normal draw.
fn draw_taste(
    draws: &PosteriorDraws,
    pops: &[BlockPopulation],
    rng: &mut RandomStream,
    z: &mut Vec<f64>,
    step: &mut Vec<f64>,
    out: &mut [f64],
) {
    for (bl, pop) in draws.layout.blocks.iter().zip(pops) {
        let k = if pop.weights.len() == 1 {
            0
        } else {
            let total: f64 = pop.weights.iter().sum();
            invert_cumulative(&pop.weights, total, rng.uniform())
        };
        z.clear();
        z.extend((0..bl.dim).map(|_| rng.standard_normal()));
        step.resize(bl.dim, 0.0);
        pop.omega[k].mul_chol(z, step);
        for (r, &i) in bl.indices.iter().enumerate() {
            out[i] = pop.zeta[k][r] + step[r];
        }
    }
}

/// Averages MNL probabilities over `n_taste_draws` simulated tastes per
/// retained posterior draw. The same simulated tastes are used for every
/// task. Posterior draw `s` uses stream `fork(s)` of `seed`, and per-draw
/// results are summed in draw order, so the output does not depend on the
/// thread schedule.
pub fn predictive_choice_distribution(
    draws: &PosteriorDraws,
    model: &ModelSpec,
    tasks: &ChoiceDataset,
    n_taste_draws: usize,
    seed: u64,
) -> Result<PredictiveChoiceDistribution> {
    draws.check_model(model)?;
    if draws.n_draws() == 0 {
        return Err(Error::InsufficientDraws { available: 0 });
    }
    if n_taste_draws == 0 {
        return Err(Error::Config("n_taste_draws must be at least 1".into()));
    }
    let width = tasks.n_attributes();
    model.utility.check(width)?;
    let flat: Vec<&ChoiceTask> = tasks.tasks().map(|(_, t)| t).collect();
    let keys: Vec<(String, String)> = tasks
        .tasks()
        .map(|(n, t)| (tasks.persons[n].person_id.clone(), t.task_id.clone()))
        .collect();
    let offsets: Vec<usize> = flat
        .iter()
        .scan(0, |acc, t| {
            let o = *acc;
            *acc += t.n_alternatives();
            Some(o)
        })
        .collect();
    let total_alts: usize = flat.iter().map(|t| t.n_alternatives()).sum();
    let root = RandomStream::new(seed);
    let rows: Vec<&[f64]> = draws.rows().map(|(_, r)| r).collect();
    let n_params = model.n_params();

    let partials = rows
        .par_iter()
        .enumerate()
        .map(|(s, row)| -> Result<Vec<f64>> {
            let pops = decode_all(draws, row)?;
            let mut rng = root.fork(s as u64);
            let mut acc = vec![0.0; total_alts];
            let mut beta = vec![0.0; n_params];
            let mut probs = Vec::new();
            let (mut z, mut step) = (Vec::new(), Vec::new());
            for _ in 0..n_taste_draws {
                draw_taste(draws, &pops, &mut rng, &mut z, &mut step, &mut beta);
                for (t, off) in flat.iter().zip(&offsets) {
                    let j = t.n_alternatives();
                    probs.resize(j, 0.0);
                    model.utility.probabilities_into(&beta, t, width, &mut probs);
                    for (a, p) in acc[*off..*off + j].iter_mut().zip(&probs) {
                        *a += p;
                    }
                }
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut total = vec![0.0; total_alts];
    for p in &partials {
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
    }
    let scale = 1.0 / (rows.len() * n_taste_draws) as f64;
    let probabilities = flat
        .iter()
        .zip(&offsets)
        .map(|(t, off)| {
            total[*off..*off + t.n_alternatives()]
                .iter()
                .map(|v| v * scale)
                .collect()
        })
        .collect();
    Ok(PredictiveChoiceDistribution {
        keys,
        probabilities,
        n_posterior_draws: rows.len(),
        n_taste_draws,
    })
}

/// Total variation distance `½ Σ |p − q|`.
pub fn tvd(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Shape(format!(
            "cannot compare simplices of sizes {} and {}",
            p.len(),
            q.len()
        )));
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Average TVD over tasks, pairing `truth[i]` with `predicted.probabilities[i]`.
pub fn tvd_mean(truth: &[Vec<f64>], predicted: &PredictiveChoiceDistribution) -> Result<f64> {
    if truth.len() != predicted.probabilities.len() || truth.is_empty() {
        return Err(Error::Shape(format!(
            "{} true distributions for {} predicted tasks",
            truth.len(),
            predicted.probabilities.len()
        )));
    }
    let mut sum = 0.0;
    for (t, p) in truth.iter().zip(&predicted.probabilities) {
        sum += tvd(t, p)?;
    }
    Ok(sum / truth.len() as f64)
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn check_data(draws: &PosteriorDraws, data: &ChoiceDataset) -> Result<()> {
    let ids = &draws.meta.person_ids;
    if ids.len() != data.n_persons()
        || ids.iter().zip(&data.persons).any(|(a, p)| *a != p.person_id)
    {
        return Err(Error::SpecMismatch(
            "draws and dataset cover different persons".into(),
        ));
    }
    draws.meta.model.utility.check(data.n_attributes())
}

/// Pointwise log-likelihood of every task at every retained draw, computed
/// per person: `out[n][t][s]`.
fn pointwise(draws: &PosteriorDraws, data: &ChoiceDataset) -> Vec<Vec<Vec<f64>>> {
    let utility: &UtilitySpec = &draws.meta.model.utility;
    let width = data.n_attributes();
    let rows: Vec<&[f64]> = draws.rows().map(|(_, r)| r).collect();
    data.persons
        .par_iter()
        .enumerate()
        .map(|(n, person)| {
            let mut per_task = vec![Vec::with_capacity(rows.len()); person.tasks.len()];
            let mut buf = Vec::new();
            for row in &rows {
                let beta = draws.layout.person(row, n);
                utility.pointwise_log_likelihood(beta, person, width, &mut buf);
                for (t, v) in per_task.iter_mut().zip(&buf) {
                    t.push(*v);
                }
            }
            per_task
        })
        .collect()
}

/// `Σ_n Σ_t ln(mean_s P(y_nt | β_n^(s)))` over the retained draws.
pub fn lppd_train(draws: &PosteriorDraws, data: &ChoiceDataset) -> Result<f64> {
    check_data(draws, data)?;
    let s = draws.n_draws();
    if s == 0 {
        return Err(Error::InsufficientDraws { available: 0 });
    }
    let ln_s = (s as f64).ln();
    Ok(pointwise(draws, data)
        .iter()
        .flatten()
        .map(|lp| log_sum_exp(lp) - ln_s)
        .sum())
}

/// `Σ ln P̂(observed choice)` over every validation task.
pub fn lppd_validation(
    predictive: &PredictiveChoiceDistribution,
    validation: &ChoiceDataset,
) -> Result<f64> {
    let index: HashMap<(&str, &str), usize> = predictive
        .keys
        .iter()
        .enumerate()
        .map(|(i, (p, t))| ((p.as_str(), t.as_str()), i))
        .collect();
    let mut sum = 0.0;
    for (n, task) in validation.tasks() {
        let pid = validation.persons[n].person_id.as_str();
        let i = index
            .get(&(pid, task.task_id.as_str()))
            .ok_or_else(|| Error::Coverage(format!("no prediction for person `{pid}`, task `{}`", task.task_id)))?;
        let probs = &predictive.probabilities[*i];
        if probs.len() != task.n_alternatives() {
            return Err(Error::Shape(format!(
                "prediction for person `{pid}`, task `{}` has {} alternatives, expected {}",
                task.task_id,
                probs.len(),
                task.n_alternatives()
            )));
        }
        sum += probs[task.chosen].ln();
    }
    Ok(sum)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Waic {
    pub lppd: f64,
    pub p_waic: f64,
    pub waic: f64,
}

impl Waic {
    /// Assembles the criterion from its parts: `waic = −2 (lppd − p_waic)`.
    pub fn from_parts(lppd: f64, p_waic: f64) -> Self {
        Self {
            lppd,
            p_waic,
            waic: -2.0 * (lppd - p_waic),
        }
    }
}

fn unbiased_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Training LPPD, `p_WAIC` (summed unbiased variances of the pointwise
/// log-likelihood) and WAIC.
pub fn waic(draws: &PosteriorDraws, data: &ChoiceDataset) -> Result<Waic> {
    check_data(draws, data)?;
    let s = draws.n_draws();
    if s < 2 {
        return Err(Error::InsufficientDraws { available: s });
    }
    let ln_s = (s as f64).ln();
    let (mut lppd, mut p) = (0.0, 0.0);
    for lp in pointwise(draws, data).iter().flatten() {
        lppd += log_sum_exp(lp) - ln_s;
        p += unbiased_variance(lp);
    }
    Ok(Waic::from_parts(lppd, p))
}

/// Posterior summary of a density evaluated on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityGrid {
    pub points: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Probability mass of the central band, e.g. 0.95.
    pub band: f64,
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Evaluates `Σ_k π_k φ(x | ζ_k, Ω_k)` of `block` at every grid point for
/// every retained draw; returns the posterior mean and a central `band`.
pub fn mixture_density_grid(
    draws: &PosteriorDraws,
    block: usize,
    grid: &[Vec<f64>],
    band: f64,
) -> Result<DensityGrid> {
    if grid.is_empty() {
        return Err(Error::Config("density grid must not be empty".into()));
    }
    let dim = draws
        .layout
        .blocks
        .get(block)
        .ok_or_else(|| Error::Config(format!("no parameter block {block}")))?
        .dim;
    if grid.iter().any(|p| p.len() != dim) {
        return Err(Error::Shape(format!("grid points must have dimension {dim}")));
    }
    let rows: Vec<&[f64]> = draws.rows().map(|(_, r)| r).collect();
    let per_draw = rows
        .par_iter()
        .map(|row| {
            let pop = draws.layout.population(row, block)?;
            Ok(grid.iter().map(|x| pop.density(x)).collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let s = per_draw.len();
    let tail = 0.5 * (1.0 - band);
    let mut mean = Vec::with_capacity(grid.len());
    let mut lower = Vec::with_capacity(grid.len());
    let mut upper = Vec::with_capacity(grid.len());
    let mut col = Vec::with_capacity(s);
    for g in 0..grid.len() {
        col.clear();
        col.extend(per_draw.iter().map(|d| d[g]));
        mean.push(col.iter().sum::<f64>() / s as f64);
        col.sort_by(f64::total_cmp);
        lower.push(quantile(&col, tail));
        upper.push(quantile(&col, 1.0 - tail));
    }
    Ok(DensityGrid {
        points: grid.to_vec(),
        mean,
        lower,
        upper,
        band,
    })
}

/// Summary of one parameter's posterior predictive distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    /// Values at [`PERCENTILES`].
    pub percentiles: Vec<f64>,
    /// Posterior mean of the population mean.
    pub mean: f64,
    /// Posterior standard deviation of the population mean.
    pub mean_sd: f64,
    /// Mean of the simulated tastes and its Monte-Carlo standard error.
    pub simulated_mean: f64,
    pub simulated_mean_se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeterogeneitySummary {
    pub params: Vec<ParamSummary>,
    pub n_posterior_draws: usize,
    pub n_taste_draws: usize,
}

/// Simulated tastes from the posterior predictive mixing distribution,
/// `n_taste_draws` per retained draw, in draw order.
pub fn predictive_tastes(
    draws: &PosteriorDraws,
    n_taste_draws: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let n_params = draws.layout.n_params;
    let root = RandomStream::new(seed);
    let rows: Vec<&[f64]> = draws.rows().map(|(_, r)| r).collect();
    let chunks = rows
        .par_iter()
        .enumerate()
        .map(|(s, row)| -> Result<Vec<Vec<f64>>> {
            let pops = decode_all(draws, row)?;
            let mut rng = root.fork(s as u64);
            let (mut z, mut step) = (Vec::new(), Vec::new());
            Ok((0..n_taste_draws)
                .map(|_| {
                    let mut beta = vec![0.0; n_params];
                    draw_taste(draws, &pops, &mut rng, &mut z, &mut step, &mut beta);
                    beta
                })
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

/// Percentiles and means of every parameter's posterior predictive
/// distribution, for any utility specification.
pub fn heterogeneity_summary(
    draws: &PosteriorDraws,
    model: &ModelSpec,
    n_taste_draws: usize,
    seed: u64,
) -> Result<HeterogeneitySummary> {
    draws.check_model(model)?;
    if draws.n_draws() < 2 {
        return Err(Error::InsufficientDraws {
            available: draws.n_draws(),
        });
    }
    if n_taste_draws == 0 {
        return Err(Error::Config("n_taste_draws must be at least 1".into()));
    }
    let tastes = predictive_tastes(draws, n_taste_draws, seed)?;
    let n_params = model.n_params();

    // population mean per retained draw: Σ_k π_k ζ_k per block
    let mut pop_means = Vec::with_capacity(draws.n_draws());
    for (_, row) in draws.rows() {
        let mut m = vec![0.0; n_params];
        for (b, bl) in draws.layout.blocks.iter().enumerate() {
            let pop = draws.layout.population(row, b)?;
            for (w, z) in pop.weights.iter().zip(&pop.zeta) {
                for (r, &i) in bl.indices.iter().enumerate() {
                    m[i] += w * z[r];
                }
            }
        }
        pop_means.push(m);
    }

    let names = &draws.meta.param_names;
    let s = draws.n_draws();
    let mut params = Vec::with_capacity(n_params);
    let mut col = Vec::with_capacity(tastes.len());
    for i in 0..n_params {
        col.clear();
        col.extend(tastes.iter().map(|t| t[i]));
        let sim_mean = col.iter().sum::<f64>() / col.len() as f64;
        // batch means per posterior draw absorb the within-draw correlation
        let batch: Vec<f64> = col
            .chunks(n_taste_draws)
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .collect();
        let sim_se = (unbiased_variance(&batch) / batch.len() as f64).sqrt();
        col.sort_by(f64::total_cmp);
        let means: Vec<f64> = pop_means.iter().map(|m| m[i]).collect();
        let mean = means.iter().sum::<f64>() / s as f64;
        params.push(ParamSummary {
            name: names.get(i).cloned().unwrap_or_else(|| format!("param{i}")),
            percentiles: PERCENTILES.iter().map(|p| quantile(&col, p / 100.0)).collect(),
            mean,
            mean_sd: unbiased_variance(&means).sqrt(),
            simulated_mean: sim_mean,
            simulated_mean_se: sim_se,
        });
    }
    Ok(HeterogeneitySummary {
        params,
        n_posterior_draws: s,
        n_taste_draws,
    })
}

/// Heterogeneity summary of a willingness-to-pay-space model.
pub fn wtp_summary(
    draws: &PosteriorDraws,
    model: &ModelSpec,
    n_taste_draws: usize,
    seed: u64,
) -> Result<HeterogeneitySummary> {
    if !matches!(model.utility, UtilitySpec::WtpSpace { .. }) {
        return Err(Error::SpecMismatch(
            "willingness-to-pay summaries need a WTP-space model".into(),
        ));
    }
    heterogeneity_summary(draws, model, n_taste_draws, seed)
}

/// Empirical CDF of `values` at each grid point.
pub fn empirical_cdf(values: &[f64], grid: &[f64]) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    grid.iter()
        .map(|x| sorted.partition_point(|v| v <= x) as f64 / n)
        .collect()
}

pub fn summary_to_csv(summary: &HeterogeneitySummary) -> String {
    let mut s = String::from("parameter,p10,p25,p50,p75,p90,mean,mean_sd,simulated_mean,simulated_mean_se\n");
    for p in &summary.params {
        let _ = write!(s, "{}", p.name);
        for v in &p.percentiles {
            let _ = write!(s, ",{v}");
        }
        let _ = writeln!(
            s,
            ",{},{},{},{}",
            p.mean, p.mean_sd, p.simulated_mean, p.simulated_mean_se
        );
    }
    s
}

pub fn density_grid_to_csv(grid: &DensityGrid) -> String {
    let dim = grid.points.first().map_or(0, |p| p.len());
    let mut s = String::new();
    for d in 0..dim {
        let _ = write!(s, "x{},", d + 1);
    }
    s.push_str("mean,lower,upper\n");
    for (i, p) in grid.points.iter().enumerate() {
        for v in p {
            let _ = write!(s, "{v},");
        }
        let _ = writeln!(s, "{},{},{}", grid.mean[i], grid.lower[i], grid.upper[i]);
    }
    s
}

/// CDF curves with one column per parameter.
pub fn cdf_to_csv(names: &[String], grid: &[f64], curves: &[Vec<f64>]) -> String {
    let mut s = String::from("x");
    for n in names {
        let _ = write!(s, ",{n}");
    }
    s.push('\n');
    for (g, x) in grid.iter().enumerate() {
        let _ = write!(s, "{x}");
        for c in curves {
            let _ = write!(s, ",{}", c[g]);
        }
        s.push('\n');
    }
    s
}
