//! Dirichlet-process mixing on the multi-modal scenario: how many
//! components the posterior actually uses, the concentration parameter, and
//! the estimated taste density along a line through the segment modes.
//!
//! ```text
//! cargo run --release --example dp_mixture -- [persons] [iterations] [truncation]
//! ```

use mixlogit::eval::mixture_density_grid;
use mixlogit::sampler::{run_estimation, McmcConfig, MixingSpec, ModelSpec, Problem};
use mixlogit::synth::{generate_dataset, generate_tastes, linear_spec, GenerateOptions, Scenario, ScenarioSpec};

fn main() -> mixlogit::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let persons: usize = args.first().and_then(|s| s.parse().ok()).unwrap_or(300);
    let iterations: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(6000);
    let truncation: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(30);

    let spec = ScenarioSpec::new(Scenario::MultiModalSkewed, persons, 8, 5);
    let tastes = generate_tastes(&spec)?;
    let data = generate_dataset(&spec, &tastes, GenerateOptions::default())?;
    let model = ModelSpec::new(linear_spec(), MixingSpec::dpmon(truncation));
    let mcmc = McmcConfig {
        iterations,
        burnin: iterations / 2,
        thinning: 10,
        seed: 2,
        ..McmcConfig::default()
    };
    let draws = run_estimation(&Problem { data: &data, model: &model }, &mcmc)?;

    // components holding at least 5% of the weight, per retained draw
    let mut used = Vec::new();
    let mut alpha = 0.0;
    for (_, row) in draws.rows() {
        let pop = draws.layout.population(row, 0)?;
        used.push(pop.weights.iter().filter(|w| **w >= 0.05).count());
        alpha += pop.dp_alpha.unwrap_or(f64::NAN);
    }
    used.sort_unstable();
    println!("retained draws            {}", draws.n_draws());
    println!("median components >= 5%   {}", used[used.len() / 2]);
    println!("posterior mean of alpha   {:.3}", alpha / draws.n_draws() as f64);

    // the true modes sit near (1, -2), (-2, -2) and (1, 1)
    let grid: Vec<Vec<f64>> = (0..=24).map(|i| {
        let x = -3.0 + 0.2 * i as f64;
        vec![x, x]
    }).collect();
    let d = mixture_density_grid(&draws, 0, &grid, 0.9)?;
    println!("\ndensity on the diagonal beta1 = beta2");
    println!("{:>6} {:>9} {:>9} {:>9}", "x", "mean", "5%", "95%");
    for (i, p) in grid.iter().enumerate() {
        println!("{:>6.1} {:>9.4} {:>9.4} {:>9.4}", p[0], d.mean[i], d.lower[i], d.upper[i]);
    }
    Ok(())
}
