//! Willingness-to-pay-space estimation: simulates choices from known WTP
//! distributions, fits a normal mixing distribution and prints the
//! posterior predictive WTP percentiles next to the truth.
//!
//! Variance components of weakly identified parameters can get stuck near
//! zero early in burn-in, so WTP-space chains need to be long.
//!
//! ```text
//! cargo run --release --example wtp_space -- [persons] [iterations]
//! ```

use mixlogit::data::{ChoiceDataset, ChoiceTask, PersonRecord};
use mixlogit::eval::wtp_summary;
use mixlogit::sampler::{run_estimation, McmcConfig, MixingSpec, ModelSpec, Problem, TRACE_COLUMNS};
use mixlogit::stats::{sample_gumbel, sample_mvn, CovMatrix, RandomStream};
use mixlogit::utility::UtilitySpec;

const TRUE_MEAN: [f64; 4] = [-0.5, -1.0, -12.0, 3.0];
const TRUE_SD: [f64; 4] = [0.5, 0.3, 4.0, 2.0];

fn simulate(persons: usize, tasks: usize, utility: &UtilitySpec, seed: u64) -> mixlogit::Result<ChoiceDataset> {
    let mut rng = RandomStream::new(seed);
    let law = CovMatrix::diagonal(&TRUE_SD.map(|s| s * s))?;
    let mut people = Vec::with_capacity(persons);
    for n in 0..persons {
        let beta = sample_mvn(&TRUE_MEAN, &law, &mut rng)?;
        let mut ts = Vec::with_capacity(tasks);
        for t in 0..tasks {
            let mut attributes = Vec::new();
            let mut best = (f64::NEG_INFINITY, 0);
            for a in 0..3 {
                // current mode, price in $, travel time in hours, comfort dummy
                let row = [
                    (a > 0) as u8 as f64,
                    rng.uniform_range(1.0, 15.0),
                    rng.uniform_range(0.0, 1.5),
                    (rng.uniform() < 0.5) as u8 as f64,
                ];
                let v = utility.representative_utility(&beta, &row)? + sample_gumbel(&mut rng);
                if v > best.0 {
                    best = (v, a);
                }
                attributes.extend_from_slice(&row);
            }
            ts.push(ChoiceTask {
                task_id: (t + 1).to_string(),
                alt_ids: vec!["current".into(), "a".into(), "b".into()],
                attributes,
                available: vec![true; 3],
                chosen: best.1,
            });
        }
        people.push(PersonRecord {
            person_id: format!("{:04}", n + 1),
            tasks: ts,
        });
    }
    ChoiceDataset::new(
        people,
        ["mod", "price", "time_h", "comfort"].map(String::from).to_vec(),
        None,
    )
}

fn main() -> mixlogit::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let persons = args.first().and_then(|s| s.parse().ok()).unwrap_or(500);
    let iterations: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(60_000);
    let utility = UtilitySpec::WtpSpace {
        mod_dummy: 0,
        price: 1,
        wtp_attributes: vec![2, 3],
    };
    let data = simulate(persons, 7, &utility, 909)?;
    let model = ModelSpec::new(utility, MixingSpec::mvn());
    let mcmc = McmcConfig {
        iterations,
        burnin: iterations / 2,
        thinning: 10,
        seed: 3,
        ..McmcConfig::default()
    };
    let draws = run_estimation(&Problem { data: &data, model: &model }, &mcmc)?;
    for c in &draws.chains {
        let acc = c.trace_column(2);
        let tail = &acc[acc.len() / 2..];
        println!(
            "chain {}: final step size {:.4}, mean acceptance {:.3} ({})",
            c.chain,
            c.final_rho,
            tail.iter().sum::<f64>() / tail.len() as f64,
            TRACE_COLUMNS[2]
        );
    }
    let summary = wtp_summary(&draws, &model, 200, 11)?;
    println!("{:<14} {:>8} {:>8} {:>8} {:>8} {:>8} {:>9} {:>7}", "parameter", "p10", "p25", "p50", "p75", "p90", "mean", "true");
    for (p, truth) in summary.params.iter().zip(TRUE_MEAN) {
        print!("{:<14}", p.name);
        for v in &p.percentiles {
            print!(" {v:>8.3}");
        }
        println!(" {:>9.3} {truth:>7.2}   (sd {:.3})", p.mean, p.mean_sd);
    }
    Ok(())
}
