//! Draws synthetic panels from both taste scenarios and prints segment
//! sizes, taste moments and how often choices depart from the
//! deterministic-utility argmax.
//!
//! ```text
//! cargo run --example simulate_scenarios -- [persons] [tasks] [out_dir]
//! ```
//! When `out_dir` is given, each panel and its taste sidecar are written
//! there as CSV.

use std::path::PathBuf;

use mixlogit::data::write_csv;
use mixlogit::synth::{deviation_rate, generate_dataset, generate_tastes, GenerateOptions, Scenario, ScenarioSpec};

fn main() -> mixlogit::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let persons: usize = args.first().and_then(|s| s.parse().ok()).unwrap_or(1000);
    let tasks: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(8);
    let out = args.get(2).map(PathBuf::from);

    for scenario in [Scenario::Skewed, Scenario::MultiModalSkewed] {
        let spec = ScenarioSpec::new(scenario, persons, tasks, 11);
        let tastes = generate_tastes(&spec)?;
        let data = generate_dataset(&spec, &tastes, GenerateOptions::default())?;

        let mut sizes = vec![0usize; scenario.segments().len()];
        let mut mean = [0.0; 2];
        for t in &tastes.rows {
            sizes[t.segment] += 1;
            mean[0] += t.beta[0] / persons as f64;
            mean[1] += t.beta[1] / persons as f64;
        }
        println!("{}", scenario.name());
        println!("  segment sizes   {sizes:?}");
        println!("  mean taste      ({:.3}, {:.3})", mean[0], mean[1]);
        println!("  choices         {}", data.n_tasks());
        println!("  deviation rate  {:.3}", deviation_rate(&data, &tastes));

        if let Some(dir) = &out {
            let ids: Vec<String> = data.persons.iter().map(|p| p.person_id.clone()).collect();
            write_csv(&data, dir.join(format!("{}.csv", scenario.name())))?;
            let sidecar = dir.join(format!("{}_tastes.csv", scenario.name()));
            mixlogit::io::write_atomic(&sidecar, tastes.to_csv_string(&ids).as_bytes())?;
            println!("  written to      {}", dir.display());
        }
    }
    Ok(())
}
