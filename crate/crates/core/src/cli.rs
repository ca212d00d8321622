//! The `simulate`, `fit`, `evaluate` and `report` commands.
//!
//! Output layout under `output_root`:
//!
//! ```text
//! rep_000/train.csv, validation.csv             simulated samples
//! rep_000/tastes_train.csv, tastes_validation.csv, scenario.json
//! rep_000/fits/<model>/                          draws directory
//! rep_000/fits/<model>.runtime.json              wall-clock seconds
//! metrics.csv                                    method,replication,metric,value
//! report.csv                                     method,metric,n,mean,std_err
//! wtp_<model>.csv                                WTP percentile tables
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::data::{load_csv, split_train_validation, to_csv_string, ChoiceDataset, CsvSchema};
use crate::error::{Error, Result};
use crate::eval::{
    lppd_validation, predictive_choice_distribution, summary_to_csv, tvd_mean, waic, wtp_summary,
};
use crate::io::write_atomic;
use crate::sampler::{run_estimation, PosteriorDraws, Problem};
use crate::stats::RandomStream;
use crate::synth::{generate_replication, true_predictive_distribution, ScenarioSpec};
use crate::utility::UtilitySpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Fit,
    Evaluate,
    Report,
}

/// Metric names in their output order.
pub const METRICS: [&str; 6] = ["tvd", "lppd_train", "lppd_validation", "p_waic", "waic", "runtime"];

/// Process exit code for an error: 3 for sampler failures, 2 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Sampler { .. } => 3,
        _ => 2,
    }
}

/// Child seed for a stage (`parts`) of a run with seed `base`.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(RandomStream::new(base), |s, p| s.fork(*p))
        .seed()
}

/// Loads the config, applies the seed override and runs `command` on a
/// pool of `jobs` threads.
pub fn run(command: Command, config: &Path, jobs: Option<usize>, seed: Option<u64>) -> Result<()> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        if j == 0 {
            return Err(Error::Config("--jobs must be at least 1".into()));
        }
        builder = builder.num_threads(j);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start thread pool: {e}")))?;
    pool.install(|| match command {
        Command::Simulate => cmd_simulate(&cfg).map(|_| ()),
        Command::Fit => cmd_fit(&cfg).map(|_| ()),
        Command::Evaluate => cmd_evaluate(&cfg).map(|_| ()),
        Command::Report => cmd_report(&cfg).map(|_| ()),
    })
}

/// Scenario descriptor stored next to simulated samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub train: ScenarioSpec,
    pub validation_persons: usize,
    pub validation_tasks: usize,
}

/// Writes training and validation samples with their true tastes for each
/// replication; replication `r` uses seed `seed + r`.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let sim = cfg
        .simulate
        .as_ref()
        .ok_or_else(|| Error::Config("`simulate` needs a [simulate] section".into()))?;
    (0..sim.replications)
        .into_par_iter()
        .map(|r| {
            let spec = ScenarioSpec {
                alternatives: sim.alternatives,
                ..ScenarioSpec::new(sim.scenario, sim.persons, sim.tasks, cfg.seed.wrapping_add(r as u64))
            };
            let rep = generate_replication(&spec, sim.validation_persons, sim.validation_tasks)?;
            let dir = cfg.replication_dir(r);
            let ids = |d: &ChoiceDataset| d.persons.iter().map(|p| p.person_id.clone()).collect::<Vec<_>>();
            let descriptor = ScenarioFile {
                train: spec,
                validation_persons: sim.validation_persons,
                validation_tasks: sim.validation_tasks,
            };
            write_atomic(&dir.join("scenario.json"), serde_json::to_string_pretty(&descriptor)?.as_bytes())?;
            write_atomic(&dir.join("train.csv"), to_csv_string(&rep.train).as_bytes())?;
            write_atomic(&dir.join("validation.csv"), to_csv_string(&rep.validation).as_bytes())?;
            write_atomic(
                &dir.join("tastes_train.csv"),
                rep.train_tastes.to_csv_string(&ids(&rep.train)).as_bytes(),
            )?;
            write_atomic(
                &dir.join("tastes_validation.csv"),
                rep.validation_tastes.to_csv_string(&ids(&rep.validation)).as_bytes(),
            )?;
            log::info!("replication {r}: wrote {}", dir.display());
            Ok(dir)
        })
        .collect()
}

/// Training and validation samples of one replication.
#[derive(Clone, Debug)]
pub struct ReplicationInputs {
    pub train: ChoiceDataset,
    pub validation: ChoiceDataset,
    /// Present for simulated data with a true-taste sidecar.
    pub scenario: Option<ScenarioFile>,
}

pub fn load_replication(cfg: &RunConfig, rep: usize) -> Result<ReplicationInputs> {
    if let Some(d) = &cfg.data {
        let schema = match &d.attributes {
            Some(a) => CsvSchema::standard(a.clone()),
            None => CsvSchema::infer(&d.path)?,
        };
        let all = load_csv(&d.path, &schema)?;
        let split = cfg.split_spec(rep).expect("data section present");
        let (train, validation) = split_train_validation(&all, &split)?;
        return Ok(ReplicationInputs {
            train,
            validation,
            scenario: None,
        });
    }
    let dir = cfg.replication_dir(rep);
    let read = |name: &str| -> Result<ChoiceDataset> {
        let p = dir.join(name);
        load_csv(&p, &CsvSchema::infer(&p)?)
    };
    let train = read("train.csv")?;
    let validation = read("validation.csv")?;
    let scenario = if dir.join("tastes_validation.csv").exists() {
        let p = dir.join("scenario.json");
        let text = std::fs::read(&p).map_err(|e| Error::io(&p, e))?;
        Some(serde_json::from_slice(&text)?)
    } else {
        log::warn!(
            "replication {rep}: no true-taste sidecar, TVD will be omitted"
        );
        None
    };
    Ok(ReplicationInputs {
        train,
        validation,
        scenario,
    })
}

pub fn fit_dir(cfg: &RunConfig, rep: usize, model: &str) -> PathBuf {
    cfg.replication_dir(rep).join("fits").join(model)
}

fn runtime_path(cfg: &RunConfig, rep: usize, model: &str) -> PathBuf {
    cfg.replication_dir(rep)
        .join("fits")
        .join(format!("{model}.runtime.json"))
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
struct Runtime {
    seconds: f64,
}

/// Fits every configured model to every replication. Model `m` on
/// replication `r` uses chain seed `derive_seed(seed, [1, r, m])`.
pub fn cmd_fit(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    if cfg.models.is_empty() {
        return Err(Error::Config("no [[model]] sections".into()));
    }
    let reps = cfg.replications();
    if reps == 0 {
        return Err(Error::Config("`fit` needs a [simulate] or [data] section".into()));
    }
    let inputs = (0..reps)
        .map(|r| load_replication(cfg, r))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> = (0..reps)
        .flat_map(|r| (0..cfg.models.len()).map(move |m| (r, m)))
        .collect();
    jobs.par_iter()
        .map(|&(r, m)| {
            let mc = &cfg.models[m];
            let data = &inputs[r].train;
            let model = mc.resolve(data)?;
            let mcmc = crate::sampler::McmcConfig {
                seed: derive_seed(cfg.seed, &[1, r as u64, m as u64]),
                ..cfg.mcmc.clone()
            };
            let start = Instant::now();
            let draws = run_estimation(&Problem { data, model: &model }, &mcmc)?;
            let seconds = start.elapsed().as_secs_f64();
            let dir = fit_dir(cfg, r, &mc.name);
            draws.save(&dir)?;
            write_atomic(
                &runtime_path(cfg, r, &mc.name),
                serde_json::to_string(&Runtime { seconds })?.as_bytes(),
            )?;
            log::info!("replication {r}, model {}: {:.1}s", mc.name, seconds);
            Ok(dir)
        })
        .collect()
}

/// One row of `metrics.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub method: String,
    pub replication: usize,
    pub metric: String,
    pub value: f64,
}

/// True predictive distribution of every validation task under the
/// scenario's taste law.
pub fn true_distributions(
    scenario: &ScenarioFile,
    validation: &ChoiceDataset,
    utility: &UtilitySpec,
    n_draws: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let root = RandomStream::new(seed);
    let tasks: Vec<_> = validation.tasks().map(|(_, t)| t).collect();
    tasks
        .par_iter()
        .enumerate()
        .map(|(i, t)| {
            let mut rng = root.fork(i as u64);
            true_predictive_distribution(t, utility, &scenario.train.scenario, n_draws, &mut rng)
        })
        .collect()
}

fn evaluate_one(
    cfg: &RunConfig,
    rep: usize,
    m: usize,
    inputs: &ReplicationInputs,
    truth: Option<&Vec<Vec<f64>>>,
) -> Result<Vec<MetricRow>> {
    let mc = &cfg.models[m];
    let draws = PosteriorDraws::load(&fit_dir(cfg, rep, &mc.name))?;
    let model = mc.resolve(&inputs.train)?;
    draws.check_model(&model)?;
    let predictive = predictive_choice_distribution(
        &draws,
        &model,
        &inputs.validation,
        cfg.evaluate.taste_draws,
        derive_seed(cfg.seed, &[2, rep as u64, m as u64]),
    )?;
    let w = waic(&draws, &inputs.train)?;
    let mut values = Vec::new();
    if let Some(t) = truth {
        values.push(("tvd", tvd_mean(t, &predictive)?));
    }
    values.push(("lppd_train", w.lppd));
    values.push(("lppd_validation", lppd_validation(&predictive, &inputs.validation)?));
    values.push(("p_waic", w.p_waic));
    values.push(("waic", w.waic));
    let rp = runtime_path(cfg, rep, &mc.name);
    match std::fs::read(&rp) {
        Ok(bytes) => values.push(("runtime", serde_json::from_slice::<Runtime>(&bytes)?.seconds)),
        Err(_) => log::warn!("{}: missing, runtime omitted", rp.display()),
    }
    Ok(values
        .into_iter()
        .map(|(metric, value)| MetricRow {
            method: mc.name.clone(),
            replication: rep,
            metric: metric.into(),
            value,
        })
        .collect())
}

pub fn metrics_to_csv(rows: &[MetricRow]) -> String {
    let mut s = String::from("method,replication,metric,value\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{}", r.method, r.replication, r.metric, r.value);
    }
    s
}

pub fn load_metrics(path: &Path) -> Result<Vec<MetricRow>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("").trim();
        let bad = || Error::Format(format!("{}: malformed metrics row {rec:?}", path.display()));
        out.push(MetricRow {
            method: field(0).to_string(),
            replication: field(1).parse().map_err(|_| bad())?,
            metric: field(2).to_string(),
            value: field(3).parse().map_err(|_| bad())?,
        });
    }
    Ok(out)
}

/// Computes TVD (synthetic data only), LPPD on both samples, `p_WAIC`,
/// WAIC and fit runtime for every fitted model; writes `metrics.csv`.
pub fn cmd_evaluate(cfg: &RunConfig) -> Result<Vec<MetricRow>> {
    let reps = cfg.replications();
    if reps == 0 || cfg.models.is_empty() {
        return Err(Error::Config(
            "`evaluate` needs data and at least one [[model]]".into(),
        ));
    }
    let mut rows = Vec::new();
    for r in 0..reps {
        let inputs = load_replication(cfg, r)?;
        let truth = match &inputs.scenario {
            Some(sc) => {
                let utility = cfg.models[0].resolve(&inputs.train)?.utility;
                Some(true_distributions(
                    sc,
                    &inputs.validation,
                    &utility,
                    cfg.evaluate.true_draws,
                    derive_seed(cfg.seed, &[3, r as u64]),
                )?)
            }
            None => None,
        };
        for m in 0..cfg.models.len() {
            rows.extend(evaluate_one(cfg, r, m, &inputs, truth.as_ref())?);
        }
    }
    write_atomic(&cfg.output_root.join("metrics.csv"), metrics_to_csv(&rows).as_bytes())?;
    Ok(rows)
}

/// Mean and standard error of one metric across replications.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub method: String,
    pub metric: String,
    pub n: usize,
    pub mean: f64,
    /// `None` with a single replication.
    pub std_err: Option<f64>,
}

pub fn aggregate(rows: &[MetricRow]) -> Vec<ReportRow> {
    let mut groups: BTreeMap<(&str, &str), Vec<f64>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.method.as_str(), r.metric.as_str()))
            .or_default()
            .push(r.value);
    }
    groups
        .into_iter()
        .map(|((method, metric), v)| {
            let n = v.len();
            let mean = v.iter().sum::<f64>() / n as f64;
            let std_err = (n > 1).then(|| {
                let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                (var / n as f64).sqrt()
            });
            ReportRow {
                method: method.into(),
                metric: metric.into(),
                n,
                mean,
                std_err,
            }
        })
        .collect()
}

pub fn report_to_csv(rows: &[ReportRow]) -> String {
    let mut s = String::from("method,metric,n,mean,std_err\n");
    for r in rows {
        let se = r.std_err.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{},{},{},{}", r.method, r.metric, r.n, r.mean, se);
    }
    s
}

/// Aggregates `metrics.csv` (plus any extra files in `[report]`) into
/// `report.csv`, and writes WTP percentile tables for WTP-space models
/// when `wtp_taste_draws > 0`.
pub fn cmd_report(cfg: &RunConfig) -> Result<Vec<ReportRow>> {
    let mut files = vec![cfg.output_root.join("metrics.csv")];
    files.extend(cfg.report.metrics.iter().cloned());
    let mut rows = Vec::new();
    for f in &files {
        if f.exists() {
            rows.extend(load_metrics(f)?);
        }
    }
    if rows.is_empty() {
        return Err(Error::Config("no metrics to report; run `evaluate` first".into()));
    }
    let report = aggregate(&rows);
    write_atomic(&cfg.output_root.join("report.csv"), report_to_csv(&report).as_bytes())?;

    if cfg.report.wtp_taste_draws > 0 {
        for (m, mc) in cfg.models.iter().enumerate() {
            if !matches!(mc.utility, crate::config::UtilityConfig::WtpSpace { .. }) {
                continue;
            }
            let mut table = String::new();
            for r in 0..cfg.replications() {
                let dir = fit_dir(cfg, r, &mc.name);
                if !dir.exists() {
                    continue;
                }
                let draws = PosteriorDraws::load(&dir)?;
                let model = draws.meta.model.clone();
                let summary = wtp_summary(
                    &draws,
                    &model,
                    cfg.report.wtp_taste_draws,
                    derive_seed(cfg.seed, &[4, r as u64, m as u64]),
                )?;
                for (i, line) in summary_to_csv(&summary).lines().enumerate() {
                    if i == 0 {
                        if table.is_empty() {
                            let _ = writeln!(table, "replication,{line}");
                        }
                    } else {
                        let _ = writeln!(table, "{r},{line}");
                    }
                }
            }
            if !table.is_empty() {
                write_atomic(&cfg.output_root.join(format!("wtp_{}.csv", mc.name)), table.as_bytes())?;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: &str, rep: usize, metric: &str, value: f64) -> MetricRow {
        MetricRow {
            method: method.into(),
            replication: rep,
            metric: metric.into(),
            value,
        }
    }

    #[test]
    fn aggregate_means_and_errors() {
        let rows = vec![
            row("mvn", 0, "waic", 10.0),
            row("dp", 0, "waic", 1.0),
            row("mvn", 1, "waic", 14.0),
            row("dp", 0, "tvd", 0.5),
        ];
        let rep = aggregate(&rows);
        assert_eq!(rep[0].method, "dp");
        assert_eq!(rep[0].metric, "tvd");
        assert_eq!(rep[0].std_err, None);
        let mvn = rep.iter().find(|r| r.method == "mvn").unwrap();
        assert_eq!(mvn.mean, 12.0);
        assert_eq!(mvn.std_err, Some(2.0));
        assert!(report_to_csv(&rep).contains("dp,tvd,1,0.5,\n"));
    }

    #[test]
    fn exit_codes() {
        let e = Error::Sampler {
            chain: 0,
            iteration: 5,
            source: Box::new(Error::npd("Omega[0]")),
        };
        assert_eq!(exit_code(&e), 3);
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, &[1, 0, 0]), derive_seed(1, &[1, 0, 1]));
        assert_eq!(derive_seed(1, &[2, 3]), derive_seed(1, &[2, 3]));
    }
}
