use rayon::prelude::*;

use crate::data::ChoiceDataset;
use crate::error::{Error, Result};
use crate::stats::RandomStream;

use super::draws::{ChainDraws, DrawLayout, DrawsMeta, PosteriorDraws, TRACE_COLUMNS};
use super::state::{initial_state, SamplerState};
use super::updates::{
    adapt_step_size, update_a, update_alpha_dp, update_assignments, update_beta_mh, update_omega,
    update_pi_finite, update_sticks, update_zeta,
};
use super::{BlockModel, McmcConfig, MixingKind, ModelSpec};

/// Data and model of one estimation run.
#[derive(Clone, Copy, Debug)]
pub struct Problem<'a> {
    pub data: &'a ChoiceDataset,
    pub model: &'a ModelSpec,
}

/// Switches for diagnostic runs. All enabled in regular estimation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SweepOptions {
    /// When false the likelihood is treated as flat and the chain samples
    /// the prior.
    pub use_likelihood: bool,
    /// When false the population parameters and assignments stay at their
    /// initial values.
    pub update_population: bool,
    /// When false the DP concentration stays fixed.
    pub update_dp_alpha: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            use_likelihood: true,
            update_population: true,
            update_dp_alpha: true,
        }
    }
}

fn wrap(chain: usize, iteration: usize) -> impl Fn(Error) -> Error {
    move |e| Error::Sampler {
        chain,
        iteration,
        source: Box::new(e),
    }
}

fn refresh_log_lik(state: &mut SamplerState, problem: &Problem, use_likelihood: bool) {
    let width = problem.data.n_attributes();
    for n in 0..state.n_persons() {
        state.log_lik[n] = if use_likelihood {
            problem
                .model
                .utility
                .person_log_likelihood(state.person(n), &problem.data.persons[n], width)
        } else {
            0.0
        };
    }
}

fn population_sweep(
    state: &mut SamplerState,
    blocks: &[BlockModel],
    options: &SweepOptions,
    rng: &mut RandomStream,
) -> Result<()> {
    for (b, block) in blocks.iter().enumerate() {
        let values = state.block_values(block);
        let bs = &mut state.blocks[b];
        update_zeta(bs, block, &values, rng)?;
        update_a(bs, block, rng)?;
        update_omega(bs, block, &values, rng)?;
        match block.mixing.kind {
            MixingKind::Mvn => {}
            MixingKind::Fmon => update_pi_finite(bs, block.mixing.dirichlet_alpha, rng)?,
            MixingKind::Dpmon => {
                if options.update_dp_alpha {
                    update_alpha_dp(bs, &block.mixing.dp_alpha_prior, rng)?;
                }
                update_sticks(bs, rng)?;
            }
        }
        if block.mixing.is_mixture() {
            update_assignments(bs, block.dim(), &values, rng)?;
        }
    }
    Ok(())
}

/// Runs one chain from the standard initial state.
pub fn run_chain(
    problem: &Problem,
    config: &McmcConfig,
    options: &SweepOptions,
    chain: usize,
    rng: &mut RandomStream,
) -> Result<ChainDraws> {
    let blocks = problem.model.blocks()?;
    problem.model.utility.check(problem.data.n_attributes())?;
    let state = initial_state(
        &blocks,
        problem.model.n_params(),
        problem.data.n_persons(),
        config.rho0,
        rng,
    )
    .map_err(wrap(chain, 0))?;
    run_chain_from(problem, config, options, chain, state, rng).map(|(draws, _)| draws)
}

/// Runs one chain from a given state and also returns the final state.
pub fn run_chain_from(
    problem: &Problem,
    config: &McmcConfig,
    options: &SweepOptions,
    chain: usize,
    mut state: SamplerState,
    rng: &mut RandomStream,
) -> Result<(ChainDraws, SamplerState)> {
    config.check()?;
    let blocks = problem.model.blocks()?;
    let layout = DrawLayout::new(&blocks, problem.data.n_persons(), problem.model.n_params());
    refresh_log_lik(&mut state, problem, options.use_likelihood);

    let retained = config.retained_per_chain();
    let mut rows = Vec::with_capacity(retained * layout.width());
    let mut trace = Vec::with_capacity(config.iterations * TRACE_COLUMNS.len());
    for it in 0..config.iterations {
        if options.update_population {
            population_sweep(&mut state, &blocks, options, rng).map_err(wrap(chain, it))?;
        }
        let stats = update_beta_mh(
            &mut state,
            &blocks,
            &problem.model.utility,
            problem.data,
            options.use_likelihood,
            rng,
        );
        let acceptance = stats.acceptance_rate();
        let total = state.total_log_likelihood();
        trace.extend_from_slice(&[total, state.rho, acceptance]);
        if !(config.freeze_after_burnin && it >= config.burnin) {
            state.rho = adapt_step_size(state.rho, acceptance, config);
        }
        state.iteration = it + 1;
        if it >= config.burnin && (it - config.burnin + 1) % config.thinning == 0 {
            layout.push_row(&state, &mut rows);
        }
    }
    debug_assert_eq!(rows.len(), retained * layout.width());
    let draws = ChainDraws {
        chain,
        rows,
        trace,
        final_rho: state.rho,
    };
    Ok((draws, state))
}

/// Runs `config.chains` chains in parallel, chain `c` using stream
/// `fork(c)` of the configured seed.
pub fn run_estimation(problem: &Problem, config: &McmcConfig) -> Result<PosteriorDraws> {
    run_estimation_with(problem, config, &SweepOptions::default())
}

pub fn run_estimation_with(
    problem: &Problem,
    config: &McmcConfig,
    options: &SweepOptions,
) -> Result<PosteriorDraws> {
    config.check()?;
    let blocks = problem.model.blocks()?;
    problem.model.utility.check(problem.data.n_attributes())?;
    let root = RandomStream::new(config.seed);
    let chains = (0..config.chains)
        .into_par_iter()
        .map(|c| {
            let mut rng = root.fork(c as u64);
            run_chain(problem, config, options, c, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let layout = DrawLayout::new(&blocks, problem.data.n_persons(), problem.model.n_params());
    let meta = DrawsMeta::new(problem, config);
    Ok(PosteriorDraws {
        meta,
        layout,
        chains,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::tests::toy_dataset;
    use crate::sampler::MixingSpec;
    use crate::utility::UtilitySpec;

    fn spec(mixing: MixingSpec) -> ModelSpec {
        ModelSpec::new(
            UtilitySpec::LinearPreference {
                attributes: vec![0, 1],
            },
            mixing,
        )
    }

    fn short(iterations: usize, burnin: usize, thinning: usize) -> McmcConfig {
        McmcConfig {
            chains: 2,
            iterations,
            burnin,
            thinning,
            seed: 11,
            ..McmcConfig::default()
        }
    }

    #[test]
    fn retains_single_row() {
        let data = toy_dataset(6, 3);
        let model = spec(MixingSpec::mvn());
        let draws = run_estimation(&Problem { data: &data, model: &model }, &short(30, 20, 10)).unwrap();
        assert_eq!(draws.chains.len(), 2);
        for c in &draws.chains {
            assert_eq!(c.n_rows(draws.layout.width()), 1);
            assert_eq!(c.trace.len(), 30 * TRACE_COLUMNS.len());
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let data = toy_dataset(8, 3);
        let model = spec(MixingSpec::dpmon(5));
        let p = Problem { data: &data, model: &model };
        let a = run_estimation(&p, &short(60, 20, 5)).unwrap();
        let b = run_estimation(&p, &short(60, 20, 5)).unwrap();
        for (x, y) in a.chains.iter().zip(&b.chains) {
            assert_eq!(x.rows, y.rows);
            assert_eq!(x.trace, y.trace);
        }
        assert_ne!(a.chains[0].rows, a.chains[1].rows);
    }

    #[test]
    fn fmon_invariants_hold_each_draw() {
        let data = toy_dataset(10, 4);
        let model = spec(MixingSpec::fmon(3));
        let draws = run_estimation(&Problem { data: &data, model: &model }, &short(50, 10, 1)).unwrap();
        for (chain, row) in draws.rows() {
            let _ = chain;
            let pop = draws.layout.population(row, 0).unwrap();
            assert!((pop.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
