//! Fits a two-component mixture, saves the draws, reloads them and scores
//! the model in and out of sample: training LPPD, WAIC, validation LPPD
//! from the posterior predictive choice distribution, and TVD against the
//! true predictive distribution.
//!
//! ```text
//! cargo run --release --example predictive_evaluation -- [draws_dir]
//! ```

use std::path::PathBuf;

use mixlogit::eval::{lppd_train, lppd_validation, predictive_choice_distribution, tvd_mean, waic};
use mixlogit::sampler::{run_estimation, McmcConfig, MixingSpec, ModelSpec, PosteriorDraws, Problem};
use mixlogit::stats::RandomStream;
use mixlogit::synth::{generate_replication, linear_spec, true_predictive_distribution, Scenario, ScenarioSpec};

fn main() -> mixlogit::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("mixlogit_predictive_example"));

    let spec = ScenarioSpec::new(Scenario::MultiModalSkewed, 250, 8, 8);
    let rep = generate_replication(&spec, 50, 2)?;
    let model = ModelSpec::new(linear_spec(), MixingSpec::fmon(2));
    let mcmc = McmcConfig {
        iterations: 5000,
        burnin: 2500,
        thinning: 10,
        seed: 4,
        ..McmcConfig::default()
    };
    run_estimation(&Problem { data: &rep.train, model: &model }, &mcmc)?.save(&dir)?;
    let draws = PosteriorDraws::load(&dir)?;
    println!("loaded {} draws from {}", draws.n_draws(), dir.display());

    let w = waic(&draws, &rep.train)?;
    println!("training LPPD    {:.2}", lppd_train(&draws, &rep.train)?);
    println!("p_WAIC           {:.2}", w.p_waic);
    println!("WAIC             {:.2}", w.waic);

    let pred = predictive_choice_distribution(&draws, &model, &rep.validation, 2000, 1)?;
    println!("validation LPPD  {:.2}", lppd_validation(&pred, &rep.validation)?);

    let root = RandomStream::new(3);
    let truth = rep
        .validation
        .tasks()
        .enumerate()
        .map(|(i, (_, t))| {
            true_predictive_distribution(t, &linear_spec(), &spec.scenario, 10_000, &mut root.fork(i as u64))
        })
        .collect::<mixlogit::Result<Vec<_>>>()?;
    println!("mean TVD         {:.4}", tvd_mean(&truth, &pred)?);

    let (person, task) = &pred.keys[0];
    let p = pred.get(person, task).expect("first key");
    println!("\nperson {person}, task {task}: predicted shares {p:.3?}");
    println!("                 true shares      {:.3?}", truth[0]);
    Ok(())
}
