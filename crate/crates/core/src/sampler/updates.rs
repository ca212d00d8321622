//! Conditional updates making up one Metropolis-within-Gibbs sweep.

use nalgebra::{DMatrix, DVector};

use crate::data::ChoiceDataset;
use crate::error::{Error, Result};
use crate::stats::{
    invert_cumulative, sample_beta, sample_dirichlet, sample_gamma, sample_inverse_wishart,
    sample_mvn, symmetrize, CovMatrix, GammaParam, RandomStream,
};
use crate::utility::UtilitySpec;

use super::{BlockModel, BlockState, GammaPrior, McmcConfig, SamplerState};

/// Upper clamp applied to sticks before taking `ln(1 − η)`.
const STICK_MAX: f64 = 1.0 - 1e-12;

/// Number of persons assigned to each of `k` components.
pub fn component_counts(assignments: &[usize], k: usize) -> Vec<usize> {
    let mut c = vec![0; k];
    for &q in assignments {
        c[q] += 1;
    }
    c
}

/// Draws every component mean from its conditional normal
/// `N(Σ_ζ (Σ₀⁻¹ μ₀ + Ω_k⁻¹ Σ_{q_n = k} β_n), Σ_ζ)` with
/// `Σ_ζ = (Σ₀⁻¹ + c_k Ω_k⁻¹)⁻¹`.
///
/// `values` holds the block parameters row-major, `persons × dim`.
pub fn update_zeta(
    state: &mut BlockState,
    model: &BlockModel,
    values: &[f64],
    rng: &mut RandomStream,
) -> Result<()> {
    let dim = model.dim();
    let k = state.components.len();
    let mut sums = vec![DVector::<f64>::zeros(dim); k];
    let mut counts = vec![0usize; k];
    for (row, &q) in values.chunks_exact(dim).zip(&state.assignments) {
        counts[q] += 1;
        for (s, v) in sums[q].iter_mut().zip(row) {
            *s += v;
        }
    }
    for (kk, comp) in state.components.iter_mut().enumerate() {
        let mut precision = model.sigma0_inv.clone();
        let mut shift = model.sigma0_inv_mu0.clone();
        if counts[kk] > 0 {
            let omega_inv = comp.omega.inverse();
            precision += &omega_inv * counts[kk] as f64;
            shift += &omega_inv * &sums[kk];
        }
        symmetrize(&mut precision);
        let precision = CovMatrix::named(precision, &format!("zeta[{kk}] conditional precision"))?;
        let cov = CovMatrix::named(
            precision.inverse(),
            &format!("zeta[{kk}] conditional covariance"),
        )?;
        let mean = cov.matrix() * shift;
        comp.zeta = sample_mvn(mean.as_slice(), &cov, rng)?;
    }
    Ok(())
}

/// Draws `a_kr ~ Gamma((ν + R)/2, rate = 1/A_r² + ν (Ω_k⁻¹)_rr)`.
pub fn update_a(state: &mut BlockState, model: &BlockModel, rng: &mut RandomStream) -> Result<()> {
    let dim = model.dim() as f64;
    let nu = model.hyper.nu;
    for comp in &mut state.components {
        let omega_inv = comp.omega.inverse();
        for (r, a) in comp.a.iter_mut().enumerate() {
            let scale = model.hyper.half_t_scale[r];
            let rate = 1.0 / (scale * scale) + nu * omega_inv[(r, r)];
            *a = sample_gamma(0.5 * (nu + dim), GammaParam::Rate(rate), rng)?;
        }
    }
    Ok(())
}

/// Draws `Ω_k ~ IW(ν + c_k + R − 1, 2ν diag(a_k) + Σ_{q_n = k} (β_n − ζ_k)(β_n − ζ_k)ᵀ)`.
pub fn update_omega(
    state: &mut BlockState,
    model: &BlockModel,
    values: &[f64],
    rng: &mut RandomStream,
) -> Result<()> {
    let dim = model.dim();
    let nu = model.hyper.nu;
    let k = state.components.len();
    let mut scatter = vec![DMatrix::<f64>::zeros(dim, dim); k];
    let mut counts = vec![0usize; k];
    for (row, &q) in values.chunks_exact(dim).zip(&state.assignments) {
        counts[q] += 1;
        let zeta = &state.components[q].zeta;
        let s = &mut scatter[q];
        for i in 0..dim {
            let di = row[i] - zeta[i];
            for j in 0..=i {
                s[(i, j)] += di * (row[j] - zeta[j]);
            }
        }
    }
    for (kk, comp) in state.components.iter_mut().enumerate() {
        let mut scale = std::mem::replace(&mut scatter[kk], DMatrix::zeros(0, 0));
        for i in 0..dim {
            for j in 0..i {
                scale[(j, i)] = scale[(i, j)];
            }
            scale[(i, i)] += 2.0 * nu * comp.a[i];
        }
        let scale = CovMatrix::named(scale, &format!("Omega[{kk}] conditional scale"))?;
        let df = nu + counts[kk] as f64 + dim as f64 - 1.0;
        comp.omega = sample_inverse_wishart(df, &scale, rng).map_err(|e| match e {
            Error::NonPositiveDefinite { .. } => Error::npd(format!("Omega[{kk}]")),
            other => other,
        })?;
    }
    Ok(())
}

/// Finite mixture weights: `π ~ Dirichlet(α + c_1, …, α + c_K)`.
pub fn update_pi_finite(state: &mut BlockState, alpha: f64, rng: &mut RandomStream) -> Result<()> {
    let k = state.components.len();
    let conc: Vec<f64> = component_counts(&state.assignments, k)
        .into_iter()
        .map(|c| alpha + c as f64)
        .collect();
    state.weights = sample_dirichlet(&conc, rng)?;
    Ok(())
}

/// DP concentration: `α ~ Gamma(shape + K − 1, rate − Σ_{k<K} ln(1 − η_k))`.
pub fn update_alpha_dp(
    state: &mut BlockState,
    prior: &GammaPrior,
    rng: &mut RandomStream,
) -> Result<()> {
    let k = state.sticks.len();
    let log_remaining: f64 = state.sticks[..k.saturating_sub(1)]
        .iter()
        .map(|&eta| (1.0 - eta.min(STICK_MAX)).ln())
        .sum();
    let shape = prior.shape + (k as f64 - 1.0);
    let rate = prior.rate - log_remaining;
    state.dp_alpha = sample_gamma(shape, GammaParam::Rate(rate), rng)?;
    Ok(())
}

/// Truncated stick-breaking update:
/// `η_k ~ Beta(1 + c_k, α + Σ_{j>k} c_j)` for `k < K`, `η_K = 1`, then
/// weights by the stick-breaking product.
pub fn update_sticks(state: &mut BlockState, rng: &mut RandomStream) -> Result<()> {
    let k = state.components.len();
    let counts = component_counts(&state.assignments, k);
    let mut tail: usize = counts.iter().sum();
    state.sticks.resize(k, 0.0);
    for i in 0..k - 1 {
        tail -= counts[i];
        state.sticks[i] = sample_beta(1.0 + counts[i] as f64, state.dp_alpha + tail as f64, rng)?;
    }
    state.sticks[k - 1] = 1.0;
    state.weights_from_sticks();
    Ok(())
}

/// Draws each assignment from `p_k ∝ π_k φ(β_n | ζ_k, Ω_k)`, evaluated in
/// log space with max-subtraction.
pub fn update_assignments(
    state: &mut BlockState,
    dim: usize,
    values: &[f64],
    rng: &mut RandomStream,
) -> Result<()> {
    let k = state.components.len();
    let log_w: Vec<f64> = state.weights.iter().map(|w| w.ln()).collect();
    let mut logp = vec![0.0; k];
    let mut probs = vec![0.0; k];
    for (n, row) in values.chunks_exact(dim).enumerate() {
        let mut max = f64::NEG_INFINITY;
        for (kk, comp) in state.components.iter().enumerate() {
            let lp = if log_w[kk] == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                log_w[kk] + comp.omega.log_density(row, &comp.zeta)
            };
            logp[kk] = lp;
            if lp > max {
                max = lp;
            }
        }
        if !max.is_finite() {
            let best = logp
                .iter()
                .enumerate()
                .filter(|(_, v)| !v.is_nan())
                .fold((state.assignments[n], f64::NEG_INFINITY), |acc, (i, &v)| {
                    if v > acc.1 {
                        (i, v)
                    } else {
                        acc
                    }
                })
                .0;
            log::warn!("assignment responsibilities underflowed for person {n}; using component {best}");
            state.assignments[n] = best;
            // keep the stream aligned with the regular path
            rng.uniform();
            continue;
        }
        let mut total = 0.0;
        for (p, lp) in probs.iter_mut().zip(&logp) {
            *p = (lp - max).exp();
            total += *p;
        }
        state.assignments[n] = invert_cumulative(&probs, total, rng.uniform());
    }
    Ok(())
}

/// Acceptance bookkeeping of one Metropolis pass over all persons.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MhStats {
    pub proposed: usize,
    pub accepted: usize,
    pub non_finite: usize,
}

impl MhStats {
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// Random-walk Metropolis update of every person's parameters.
///
/// All blocks move jointly: each block is perturbed by `√ρ · chol(Ω_{q_n}) z`
/// using its own assigned component, and the acceptance ratio includes the
/// likelihood and every block's normal prior density. A proposal is
/// accepted iff `u ≤ min(1, r)`.
pub fn update_beta_mh(
    state: &mut SamplerState,
    blocks: &[BlockModel],
    utility: &UtilitySpec,
    data: &ChoiceDataset,
    use_likelihood: bool,
    rng: &mut RandomStream,
) -> MhStats {
    let p = state.n_params;
    let width = data.n_attributes();
    let step = state.rho.sqrt();
    let mut stats = MhStats::default();
    let mut proposal = vec![0.0; p];
    let mut cur_block = Vec::new();
    let mut prop_block = Vec::new();
    let mut z = Vec::new();
    let mut shift = Vec::new();
    for n in 0..state.n_persons() {
        let current = state.person(n);
        proposal.copy_from_slice(current);
        let mut log_prior_cur = 0.0;
        let mut log_prior_prop = 0.0;
        for (b, block) in blocks.iter().enumerate() {
            let bs = &state.blocks[b];
            let comp = &bs.components[bs.assignments[n]];
            let dim = block.dim();
            z.clear();
            z.extend((0..dim).map(|_| rng.standard_normal()));
            shift.resize(dim, 0.0);
            comp.omega.mul_chol(&z, &mut shift);
            cur_block.clear();
            prop_block.clear();
            for (r, &i) in block.indices.iter().enumerate() {
                let moved = current[i] + step * shift[r];
                proposal[i] = moved;
                cur_block.push(current[i]);
                prop_block.push(moved);
            }
            log_prior_cur += comp.omega.log_density(&cur_block, &comp.zeta);
            log_prior_prop += comp.omega.log_density(&prop_block, &comp.zeta);
        }
        let u = rng.uniform();
        stats.proposed += 1;
        let ll_prop = if use_likelihood {
            utility.person_log_likelihood(&proposal, &data.persons[n], width)
        } else {
            0.0
        };
        if !ll_prop.is_finite() || !log_prior_prop.is_finite() {
            stats.non_finite += 1;
            log::debug!("person {n}: non-finite proposal rejected");
            continue;
        }
        let log_r = ll_prop + log_prior_prop - state.log_lik[n] - log_prior_cur;
        if u.ln() <= log_r {
            state.person_mut(n).copy_from_slice(&proposal);
            state.log_lik[n] = ll_prop;
            stats.accepted += 1;
        }
    }
    stats
}

/// Moves `ρ` by `rho_increment` towards the target acceptance rate, never
/// below `rho_min`; unchanged when the rate equals the target exactly.
pub fn adapt_step_size(rho: f64, mean_acceptance: f64, config: &McmcConfig) -> f64 {
    if mean_acceptance < config.target_acceptance {
        (rho - config.rho_increment).max(config.rho_min)
    } else if mean_acceptance > config.target_acceptance {
        rho + config.rho_increment
    } else {
        rho
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::{Component, HyperPriors, MixingSpec};
    use approx::assert_relative_eq;

    fn block(kind: MixingSpec, dim: usize) -> BlockModel {
        let hyper = HyperPriors::weakly_informative(dim);
        BlockModel::new((0..dim).collect(), kind, hyper).unwrap()
    }

    fn state_with(k: usize, dim: usize, assignments: Vec<usize>) -> BlockState {
        BlockState {
            components: (0..k)
                .map(|i| Component {
                    zeta: vec![i as f64 * 10.0; dim],
                    omega: CovMatrix::identity(dim),
                    a: vec![1.0; dim],
                })
                .collect(),
            weights: vec![1.0 / k as f64; k],
            sticks: vec![0.5; k],
            dp_alpha: 1.0,
            assignments,
        }
    }

    #[test]
    fn step_size_rule() {
        let c = McmcConfig::default();
        assert_relative_eq!(adapt_step_size(0.1, 0.29, &c), 0.099, epsilon = 1e-15);
        assert_relative_eq!(adapt_step_size(0.1, 0.31, &c), 0.101, epsilon = 1e-15);
        assert_eq!(adapt_step_size(0.1, 0.3, &c), 0.1);
        assert_eq!(adapt_step_size(150.0 / 500.0, 150.0 / 500.0, &c), 0.3);
        assert_eq!(adapt_step_size(1e-4, 0.0, &c), 1e-4);
    }

    #[test]
    fn sticks_close_the_simplex() {
        let mut s = state_with(6, 1, vec![0, 0, 2, 5, 1, 1]);
        let mut rng = RandomStream::new(8);
        for _ in 0..1000 {
            update_alpha_dp(&mut s, &GammaPrior { shape: 2.0, rate: 2.0 }, &mut rng).unwrap();
            update_sticks(&mut s, &mut rng).unwrap();
            assert_eq!(s.sticks[5], 1.0);
            assert!((s.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(s.weights.iter().all(|w| *w >= 0.0));
        }
    }

    #[test]
    fn identical_components_give_prior_responsibilities() {
        let mut s = state_with(2, 1, vec![0; 4000]);
        for c in &mut s.components {
            c.zeta = vec![0.0];
        }
        s.weights = vec![0.3, 0.7];
        let values: Vec<f64> = (0..4000).map(|i| (i as f64 / 1000.0) - 2.0).collect();
        let mut rng = RandomStream::new(2);
        update_assignments(&mut s, 1, &values, &mut rng).unwrap();
        let frac = s.assignments.iter().filter(|&&q| q == 0).count() as f64 / 4000.0;
        assert!((frac - 0.3).abs() < 0.03, "{frac}");
    }

    #[test]
    fn well_separated_component_wins() {
        let mut s = state_with(2, 2, vec![1; 100]);
        let values = vec![0.0; 200];
        let mut rng = RandomStream::new(2);
        update_assignments(&mut s, 2, &values, &mut rng).unwrap();
        assert!(s.assignments.iter().all(|&q| q == 0));
    }

    #[test]
    fn assignment_relabeling_equivariance() {
        let values: Vec<f64> = (0..300).map(|i| (i as f64 * 0.37).sin() * 8.0).collect();
        let mut s = state_with(2, 1, vec![0; 300]);
        s.components[1].zeta = vec![3.0];
        s.components[0].omega = CovMatrix::diagonal(&[4.0]).unwrap();
        s.weights = vec![0.4, 0.6];
        let mut swapped = s.clone();
        swapped.components.swap(0, 1);
        swapped.weights.swap(0, 1);
        let mut r1 = RandomStream::new(5);
        let mut r2 = RandomStream::new(5);
        update_assignments(&mut s, 1, &values, &mut r1).unwrap();
        update_assignments(&mut swapped, 1, &values, &mut r2).unwrap();
        // the same uniform inverts a permuted cumulative sum, so compare the
        // distribution of labels instead of individual draws
        let ones = s.assignments.iter().filter(|&&q| q == 1).count() as f64;
        let zeros = swapped.assignments.iter().filter(|&&q| q == 0).count() as f64;
        assert!((ones - zeros).abs() < 40.0, "{ones} vs {zeros}");
    }

    #[test]
    fn empty_component_refreshes_from_prior() {
        let model = block(MixingSpec::fmon(2), 1);
        let mut rng = RandomStream::new(1);
        let n = 20_000;
        let mut draws = Vec::with_capacity(n);
        for _ in 0..n {
            let mut s = state_with(2, 1, vec![0; 3]);
            update_zeta(&mut s, &model, &[1.0, 2.0, 3.0], &mut rng).unwrap();
            draws.push(s.components[1].zeta[0]);
        }
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 5.0 * (100.0 / n as f64).sqrt(), "{mean}");
        assert!((var / 100.0 - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn pi_finite_sums_to_one() {
        let mut s = state_with(3, 1, vec![0, 0, 1]);
        let mut rng = RandomStream::new(3);
        for _ in 0..100 {
            update_pi_finite(&mut s, 1.0, &mut rng).unwrap();
            assert!((s.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_step_always_accepts_and_stays() {
        use crate::data::tests::toy_dataset;
        let data = toy_dataset(5, 2);
        let utility = UtilitySpec::LinearPreference { attributes: vec![0, 1] };
        let blocks = vec![block(MixingSpec::mvn(), 2)];
        let mut rng = RandomStream::new(4);
        let mut state = crate::sampler::initial_state(&blocks, 2, 5, 0.0, &mut rng).unwrap();
        for n in 0..5 {
            state.log_lik[n] = utility.person_log_likelihood(state.person(n), &data.persons[n], 2);
        }
        let before = state.params.clone();
        let stats = update_beta_mh(&mut state, &blocks, &utility, &data, true, &mut rng);
        assert_eq!(stats.accepted, 5);
        assert_eq!(state.params, before);
    }
}
