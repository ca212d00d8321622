//! Drives the same simulate, fit, evaluate and report stages as the
//! `mixlogit` binary from a TOML configuration, then prints the report.
//!
//! ```text
//! cargo run --release --example cli_pipeline -- [config.toml]
//! ```
//! Without an argument a small two-model configuration is written to a
//! temporary directory and used.

use std::path::PathBuf;

use mixlogit::cli::{run, Command};

const DEMO: &str = r#"
seed = 21
output_root = "out"

[simulate]
scenario = "multi-modal-skewed"
persons = 150
tasks = 8
replications = 2

[mcmc]
chains = 2
iterations = 3000
burnin = 1500
thinning = 10

[evaluate]
taste_draws = 500
true_draws = 5000

[[model]]
name = "mvn"
mixing = { kind = "mvn" }

[[model]]
name = "dp"
mixing = { kind = "dpmon", components = 20 }
"#;

fn main() -> mixlogit::Result<()> {
    let config = match std::env::args().nth(1) {
        Some(p) => PathBuf::from(p),
        None => {
            let dir = std::env::temp_dir().join("mixlogit_cli_example");
            std::fs::create_dir_all(&dir).map_err(|e| mixlogit::Error::io(&dir, e))?;
            let path = dir.join("run.toml");
            mixlogit::io::write_atomic(&path, DEMO.as_bytes())?;
            path
        }
    };
    let cfg = mixlogit::config::RunConfig::load(&config)?;
    let stages = if cfg.simulate.is_some() {
        vec![Command::Simulate, Command::Fit, Command::Evaluate, Command::Report]
    } else {
        vec![Command::Fit, Command::Evaluate, Command::Report]
    };
    for stage in stages {
        println!("running {stage:?}");
        run(stage, &config, None, None)?;
    }
    let report = cfg.output_root.join("report.csv");
    let text = std::fs::read_to_string(&report).map_err(|e| mixlogit::Error::io(&report, e))?;
    println!("\n{text}");
    Ok(())
}
