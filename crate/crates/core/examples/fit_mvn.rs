//! Fits the normal mixing distribution to a skewed synthetic panel and
//! summarises the posterior: population mean and covariance, chain
//! diagnostics and percentiles of the predictive taste distribution.
//!
//! ```text
//! cargo run --release --example fit_mvn -- [persons] [iterations]
//! ```

use mixlogit::eval::heterogeneity_summary;
use mixlogit::sampler::{geweke_z, run_estimation, McmcConfig, MixingSpec, ModelSpec, Problem};
use mixlogit::synth::{generate_dataset, generate_tastes, linear_spec, GenerateOptions, Scenario, ScenarioSpec};

fn main() -> mixlogit::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let persons: usize = args.first().and_then(|s| s.parse().ok()).unwrap_or(300);
    let iterations: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(6000);

    let spec = ScenarioSpec::new(Scenario::Skewed, persons, 8, 3);
    let tastes = generate_tastes(&spec)?;
    let data = generate_dataset(&spec, &tastes, GenerateOptions::default())?;
    let model = ModelSpec::new(linear_spec(), MixingSpec::mvn());
    let mcmc = McmcConfig {
        iterations,
        burnin: iterations / 2,
        thinning: 5,
        seed: 1,
        ..McmcConfig::default()
    };
    let draws = run_estimation(&Problem { data: &data, model: &model }, &mcmc)?;

    for chain in &draws.chains {
        let acc = chain.trace_column(2);
        let tail = &acc[acc.len() / 2..];
        println!(
            "chain {}: final rho {:.4}, post-burn-in acceptance {:.3}",
            chain.chain,
            chain.final_rho,
            tail.iter().sum::<f64>() / tail.len() as f64
        );
    }

    let n = draws.n_draws() as f64;
    let mut zeta = [0.0; 2];
    let mut omega = [0.0; 3];
    let mut series = Vec::new();
    for (_, row) in draws.rows() {
        let pop = draws.layout.population(row, 0)?;
        let m = pop.omega[0].matrix();
        zeta[0] += pop.zeta[0][0] / n;
        zeta[1] += pop.zeta[0][1] / n;
        omega[0] += m[(0, 0)] / n;
        omega[1] += m[(1, 0)] / n;
        omega[2] += m[(1, 1)] / n;
        series.push(pop.zeta[0][0]);
    }
    println!("posterior mean of zeta   ({:.3}, {:.3})", zeta[0], zeta[1]);
    println!("posterior mean of Omega  [{:.3} {:.3}; {:.3} {:.3}]", omega[0], omega[1], omega[1], omega[2]);
    println!("Geweke z for zeta[0]     {:.2}", geweke_z(&series));

    let summary = heterogeneity_summary(&draws, &model, 200, 9)?;
    println!("\n{:<6} {:>8} {:>8} {:>8} {:>8} {:>8}", "param", "p10", "p25", "p50", "p75", "p90");
    for p in &summary.params {
        print!("{:<6}", p.name);
        for q in &p.percentiles {
            print!(" {q:>8.3}");
        }
        println!();
    }
    Ok(())
}
