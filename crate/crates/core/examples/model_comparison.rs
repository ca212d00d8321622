//! Fits normal, two-component and Dirichlet-process mixing distributions to
//! one synthetic replication and compares out-of-sample TVD and WAIC.
//!
//! ```text
//! cargo run --release --example model_comparison -- [scenario] [persons] [iterations]
//! ```
//! Defaults: `multi-modal-skewed 200 4000`.

use std::time::Instant;

use mixlogit::eval::{predictive_choice_distribution, tvd_mean, waic};
use mixlogit::sampler::{run_estimation, McmcConfig, MixingSpec, ModelSpec, Problem};
use mixlogit::stats::RandomStream;
use mixlogit::synth::{generate_replication, linear_spec, true_predictive_distribution, Scenario, ScenarioSpec};

fn main() -> mixlogit::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let scenario: Scenario = args.first().map_or("multi-modal-skewed", |s| s).parse()?;
    let persons: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    let iterations: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(4000);

    let spec = ScenarioSpec::new(scenario, persons, 8, 2024);
    let rep = generate_replication(&spec, 25, 1)?;
    let root = RandomStream::new(99);
    let truth = rep
        .validation
        .tasks()
        .enumerate()
        .map(|(i, (_, t))| true_predictive_distribution(t, &linear_spec(), &scenario, 10_000, &mut root.fork(i as u64)))
        .collect::<mixlogit::Result<Vec<_>>>()?;

    let mcmc = McmcConfig {
        iterations,
        burnin: iterations / 2,
        thinning: 10,
        seed: 7,
        ..McmcConfig::default()
    };
    println!("{} scenario, {persons} persons, {iterations} iterations", scenario.name());
    println!("{:<8} {:>8} {:>11} {:>9} {:>8}", "model", "TVD", "WAIC", "p_WAIC", "seconds");
    for (name, mixing) in [
        ("MVN", MixingSpec::mvn()),
        ("2-F-MON", MixingSpec::fmon(2)),
        ("DP-MON", MixingSpec::dpmon(50)),
    ] {
        let model = ModelSpec::new(linear_spec(), mixing);
        let start = Instant::now();
        let draws = run_estimation(&Problem { data: &rep.train, model: &model }, &mcmc)?;
        let secs = start.elapsed().as_secs_f64();
        let pred = predictive_choice_distribution(&draws, &model, &rep.validation, 2000, 5)?;
        let w = waic(&draws, &rep.train)?;
        println!(
            "{name:<8} {:>8.4} {:>11.2} {:>9.2} {:>8.1}",
            tvd_mean(&truth, &pred)?,
            w.waic,
            w.p_waic,
            secs
        );
    }
    Ok(())
}
