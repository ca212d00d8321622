//! Synthetic stated-choice data with skewed and multi-modal taste
//! distributions, plus the Monte-Carlo "true" predictive choice
//! distribution used as the oracle for out-of-sample accuracy.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{ChoiceDataset, ChoiceTask, PersonRecord};
use crate::error::{Error, Result};
use crate::stats::{sample_gumbel, sample_snl, RandomStream};
use crate::utility::UtilitySpec;

/// Skew-normal-logistic parameters `(mu, sigma, lambda)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Snl {
    pub mu: f64,
    pub sigma: f64,
    pub lambda: f64,
}

const fn snl(mu: f64, sigma: f64, lambda: f64) -> Snl {
    Snl { mu, sigma, lambda }
}

/// Segment of the taste population: share and per-coordinate marginals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub share: f64,
    pub marginals: [Snl; 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// Both tastes i.i.d. SNL(0, 1, 50).
    Skewed,
    /// Three segments (25% / 25% / 50%) with differently skewed modes.
    MultiModalSkewed,
}

const SKEWED: [Segment; 1] = [Segment {
    share: 1.0,
    marginals: [snl(0.0, 1.0, 50.0), snl(0.0, 1.0, 50.0)],
}];

const MULTI_MODAL: [Segment; 3] = [
    Segment {
        share: 0.25,
        marginals: [snl(1.0, 1.0, 40.0), snl(-2.0, 1.0, 80.0)],
    },
    Segment {
        share: 0.25,
        marginals: [snl(-2.0, 1.0, 70.0), snl(-2.0, 1.0, 70.0)],
    },
    Segment {
        share: 0.5,
        marginals: [snl(1.0, 1.0, -50.0), snl(1.0, 1.0, -50.0)],
    },
];

impl Scenario {
    pub fn segments(self) -> &'static [Segment] {
        match self {
            Scenario::Skewed => &SKEWED,
            Scenario::MultiModalSkewed => &MULTI_MODAL,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Skewed => "skewed",
            Scenario::MultiModalSkewed => "multi-modal-skewed",
        }
    }

    /// Segment sizes for `n` persons: floor of each share for all but the
    /// last segment, which takes the remainder.
    pub fn segment_counts(self, n: usize) -> Vec<usize> {
        let segs = self.segments();
        let mut counts: Vec<usize> = segs[..segs.len() - 1]
            .iter()
            .map(|s| (s.share * n as f64).floor() as usize)
            .collect();
        counts.push(n - counts.iter().sum::<usize>());
        counts
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "skewed" | "1" => Ok(Scenario::Skewed),
            "multi-modal-skewed" | "multimodal-skewed" | "2" => Ok(Scenario::MultiModalSkewed),
            other => Err(Error::Config(format!("unknown scenario `{other}`"))),
        }
    }
}

/// Source of taste vectors for Monte-Carlo integration.
pub trait TasteSampler {
    fn sample_taste(&self, rng: &mut RandomStream) -> Vec<f64>;
}

impl TasteSampler for Scenario {
    fn sample_taste(&self, rng: &mut RandomStream) -> Vec<f64> {
        let segs = self.segments();
        let u = rng.uniform();
        let mut acc = 0.0;
        let mut seg = &segs[segs.len() - 1];
        for s in segs {
            acc += s.share;
            if u < acc {
                seg = s;
                break;
            }
        }
        draw_segment(seg, rng).to_vec()
    }
}

/// Degenerate taste distribution concentrated on one vector.
#[derive(Clone, Debug, PartialEq)]
pub struct PointMass(pub Vec<f64>);

impl TasteSampler for PointMass {
    fn sample_taste(&self, _rng: &mut RandomStream) -> Vec<f64> {
        self.0.clone()
    }
}

fn draw_segment(seg: &Segment, rng: &mut RandomStream) -> [f64; 2] {
    let m = seg.marginals;
    [
        sample_snl(m[0].mu, m[0].sigma, m[0].lambda, rng).expect("sigma > 0"),
        sample_snl(m[1].mu, m[1].sigma, m[1].lambda, rng).expect("sigma > 0"),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub persons: usize,
    pub tasks: usize,
    #[serde(default = "default_alternatives")]
    pub alternatives: usize,
    #[serde(default = "default_range")]
    pub attribute_range: (f64, f64),
    pub seed: u64,
}

fn default_alternatives() -> usize {
    5
}

fn default_range() -> (f64, f64) {
    (-5.0, 5.0)
}

impl ScenarioSpec {
    pub fn new(scenario: Scenario, persons: usize, tasks: usize, seed: u64) -> Self {
        Self {
            scenario,
            persons,
            tasks,
            alternatives: default_alternatives(),
            attribute_range: default_range(),
            seed,
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.persons == 0 || self.tasks == 0 || self.alternatives == 0 {
            return Err(Error::Config("persons, tasks and alternatives must be ≥ 1".into()));
        }
        let (lo, hi) = self.attribute_range;
        if !(lo < hi) {
            return Err(Error::Config(format!("attribute range ({lo}, {hi}) is empty")));
        }
        Ok(())
    }

    fn stream(&self) -> RandomStream {
        RandomStream::new(self.seed)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrueTaste {
    pub beta: [f64; 2],
    pub segment: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrueTasteTable {
    pub rows: Vec<TrueTaste>,
}

impl TrueTasteTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Sidecar CSV: `person_id, beta1, beta2, segment`.
    pub fn to_csv_string(&self, person_ids: &[String]) -> String {
        let mut out = String::from("person_id,beta1,beta2,segment\n");
        for (id, row) in person_ids.iter().zip(&self.rows) {
            let _ = writeln!(out, "{id},{:?},{:?},{}", row.beta[0], row.beta[1], row.segment);
        }
        out
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path.as_ref())?;
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| Error::Format(format!("bad taste row {rec:?}")))
            };
            rows.push(TrueTaste {
                beta: [num(1)?, num(2)?],
                segment: num(3)? as usize,
            });
        }
        Ok(Self { rows })
    }
}

/// Draws the true tastes of every person.
///
/// Segment membership is assigned in deterministic blocks after a seeded
/// shuffle of person indices, so segment sizes are exact.
pub fn generate_tastes(spec: &ScenarioSpec) -> Result<TrueTasteTable> {
    spec.check()?;
    let root = spec.stream();
    let mut shuffle = root.fork(0);
    let mut draws = root.fork(1);
    let mut order: Vec<usize> = (0..spec.persons).collect();
    shuffle.shuffle(&mut order);
    let mut segment_of = vec![0; spec.persons];
    let mut start = 0;
    for (s, count) in spec.scenario.segment_counts(spec.persons).into_iter().enumerate() {
        for &p in &order[start..start + count] {
            segment_of[p] = s;
        }
        start += count;
    }
    let segs = spec.scenario.segments();
    let rows = segment_of
        .into_iter()
        .map(|s| TrueTaste {
            beta: draw_segment(&segs[s], &mut draws),
            segment: s,
        })
        .collect();
    Ok(TrueTasteTable { rows })
}

pub const ATTRIBUTE_NAMES: [&str; 2] = ["x1", "x2"];

pub fn linear_spec() -> UtilitySpec {
    UtilitySpec::LinearPreference {
        attributes: vec![0, 1],
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GenerateOptions {
    /// Drop the Gumbel disturbance so choices are deterministic argmaxes.
    pub noiseless: bool,
}

/// Simulates choices `argmax_j (x_j · β_n + ε_j)` with i.i.d. uniform
/// attributes and Gumbel disturbances.
pub fn generate_dataset(
    spec: &ScenarioSpec,
    tastes: &TrueTasteTable,
    options: GenerateOptions,
) -> Result<ChoiceDataset> {
    spec.check()?;
    if tastes.len() != spec.persons {
        return Err(Error::Shape(format!(
            "taste table has {} rows but the scenario has {} persons",
            tastes.len(),
            spec.persons
        )));
    }
    let (lo, hi) = spec.attribute_range;
    let j = spec.alternatives;
    let mut rng = spec.stream().fork(2);
    let alt_ids: Vec<String> = (1..=j).map(|a| a.to_string()).collect();
    let mut persons = Vec::with_capacity(spec.persons);
    for (n, taste) in tastes.rows.iter().enumerate() {
        let mut tasks = Vec::with_capacity(spec.tasks);
        for t in 0..spec.tasks {
            let mut attributes = Vec::with_capacity(2 * j);
            let mut best = (f64::NEG_INFINITY, 0);
            for a in 0..j {
                let x1 = rng.uniform_range(lo, hi);
                let x2 = rng.uniform_range(lo, hi);
                attributes.push(x1);
                attributes.push(x2);
                let noise = if options.noiseless { 0.0 } else { sample_gumbel(&mut rng) };
                let u = x1 * taste.beta[0] + x2 * taste.beta[1] + noise;
                if u > best.0 {
                    best = (u, a);
                }
            }
            tasks.push(ChoiceTask {
                task_id: (t + 1).to_string(),
                alt_ids: alt_ids.clone(),
                attributes,
                available: vec![true; j],
                chosen: best.1,
            });
        }
        persons.push(PersonRecord {
            person_id: format!("{:05}", n + 1),
            tasks,
        });
    }
    ChoiceDataset::new(
        persons,
        ATTRIBUTE_NAMES.iter().map(|s| s.to_string()).collect(),
        None,
    )
}

/// Fraction of choices that differ from the deterministic-utility argmax.
pub fn deviation_rate(ds: &ChoiceDataset, tastes: &TrueTasteTable) -> f64 {
    let width = ds.n_attributes();
    let mut deviations = 0usize;
    let mut total = 0usize;
    for (person, taste) in ds.persons.iter().zip(&tastes.rows) {
        for t in &person.tasks {
            let best = (0..t.n_alternatives())
                .map(|a| {
                    let row = t.row(a, width);
                    row[0] * taste.beta[0] + row[1] * taste.beta[1]
                })
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (a, v)| if v > acc.1 { (a, v) } else { acc })
                .0;
            deviations += usize::from(best != t.chosen);
            total += 1;
        }
    }
    deviations as f64 / total as f64
}

/// Monte-Carlo average of MNL probabilities over `n_draws` tastes drawn from
/// `law`.
pub fn true_predictive_distribution(
    task: &ChoiceTask,
    utility: &UtilitySpec,
    law: &dyn TasteSampler,
    n_draws: usize,
    rng: &mut RandomStream,
) -> Result<Vec<f64>> {
    if n_draws == 0 {
        return Err(Error::Config("n_draws must be at least 1".into()));
    }
    let j = task.n_alternatives();
    let width = task.attributes.len() / j.max(1);
    let mut acc = vec![0.0; j];
    let mut probs = vec![0.0; j];
    for _ in 0..n_draws {
        let beta = law.sample_taste(rng);
        if beta.len() != utility.n_params() {
            return Err(Error::Shape(format!(
                "taste law yields {} parameters, utility expects {}",
                beta.len(),
                utility.n_params()
            )));
        }
        utility.probabilities_into(&beta, task, width, &mut probs);
        for (a, p) in acc.iter_mut().zip(&probs) {
            *a += p;
        }
    }
    let scale = 1.0 / n_draws as f64;
    for a in &mut acc {
        *a *= scale;
    }
    Ok(acc)
}

/// One synthetic replication: training and validation samples with their
/// true tastes.
#[derive(Clone, Debug)]
pub struct Replication {
    pub train: ChoiceDataset,
    pub train_tastes: TrueTasteTable,
    pub validation: ChoiceDataset,
    pub validation_tastes: TrueTasteTable,
}

/// Generates a training sample from `spec` and a validation sample from the
/// same process with fresh tastes (`validation_persons × validation_tasks`).
pub fn generate_replication(
    spec: &ScenarioSpec,
    validation_persons: usize,
    validation_tasks: usize,
) -> Result<Replication> {
    let train_tastes = generate_tastes(spec)?;
    let train = generate_dataset(spec, &train_tastes, GenerateOptions::default())?;
    let vspec = ScenarioSpec {
        persons: validation_persons,
        tasks: validation_tasks,
        seed: spec.stream().fork(3).seed(),
        ..spec.clone()
    };
    let validation_tastes = generate_tastes(&vspec)?;
    let validation = generate_dataset(&vspec, &validation_tastes, GenerateOptions::default())?;
    Ok(Replication {
        train,
        train_tastes,
        validation,
        validation_tastes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn segment_counts_exact() {
        assert_eq!(Scenario::MultiModalSkewed.segment_counts(1000), vec![250, 250, 500]);
        assert_eq!(Scenario::MultiModalSkewed.segment_counts(10), vec![2, 2, 6]);
        assert_eq!(Scenario::Skewed.segment_counts(7), vec![7]);
        let spec = ScenarioSpec::new(Scenario::MultiModalSkewed, 1000, 1, 4);
        let tastes = generate_tastes(&spec).unwrap();
        let mut counts = [0; 3];
        for r in &tastes.rows {
            counts[r.segment] += 1;
        }
        assert_eq!(counts, [250, 250, 500]);
    }

    #[test]
    fn noiseless_choices_are_argmax() {
        let spec = ScenarioSpec::new(Scenario::Skewed, 50, 4, 9);
        let tastes = generate_tastes(&spec).unwrap();
        let ds = generate_dataset(&spec, &tastes, GenerateOptions { noiseless: true }).unwrap();
        assert_eq!(deviation_rate(&ds, &tastes), 0.0);
        assert!(ds.validate().is_empty());
    }

    #[test]
    fn single_alternative_rejected() {
        let mut spec = ScenarioSpec::new(Scenario::Skewed, 3, 2, 1);
        spec.alternatives = 1;
        let tastes = generate_tastes(&spec).unwrap();
        assert!(matches!(
            generate_dataset(&spec, &tastes, GenerateOptions::default()),
            Err(Error::Integrity { .. })
        ));
    }

    #[test]
    fn reproducible_under_seed() {
        let spec = ScenarioSpec::new(Scenario::MultiModalSkewed, 30, 3, 77);
        let a = generate_replication(&spec, 5, 1).unwrap();
        let b = generate_replication(&spec, 5, 1).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.validation, b.validation);
        assert_eq!(a.train_tastes, b.train_tastes);
        assert_ne!(a.train_tastes.rows[0].beta, a.validation_tastes.rows[0].beta);
    }

    #[test]
    fn point_mass_predictive_is_single_mnl() {
        let spec = ScenarioSpec::new(Scenario::Skewed, 1, 1, 2);
        let tastes = generate_tastes(&spec).unwrap();
        let ds = generate_dataset(&spec, &tastes, GenerateOptions::default()).unwrap();
        let task = &ds.persons[0].tasks[0];
        let u = linear_spec();
        let law = PointMass(vec![0.4, -1.1]);
        let mut rng = RandomStream::new(0);
        let p = true_predictive_distribution(task, &u, &law, 17, &mut rng).unwrap();
        let q = u.mnl_probabilities(&[0.4, -1.1], task).unwrap();
        for (a, b) in p.iter().zip(&q) {
            assert_relative_eq!(a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn zero_attributes_give_uniform_prediction() {
        let task = ChoiceTask {
            task_id: "1".into(),
            alt_ids: (0..5).map(|a| a.to_string()).collect(),
            attributes: vec![0.0; 10],
            available: vec![true; 5],
            chosen: 0,
        };
        let mut rng = RandomStream::new(3);
        let p = true_predictive_distribution(&task, &linear_spec(), &Scenario::MultiModalSkewed, 1000, &mut rng)
            .unwrap();
        for v in &p {
            assert_relative_eq!(*v, 0.2, epsilon = 1e-12);
        }
        assert_relative_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn taste_sidecar_round_trip() {
        let spec = ScenarioSpec::new(Scenario::MultiModalSkewed, 12, 1, 5);
        let tastes = generate_tastes(&spec).unwrap();
        let ids: Vec<String> = (0..12).map(|i| format!("{i}")).collect();
        let f = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(f.path(), tastes.to_csv_string(&ids)).unwrap();
        assert_eq!(TrueTasteTable::load_csv(f.path()).unwrap(), tastes);
    }

    #[test]
    fn scenario_names_parse() {
        assert_eq!("skewed".parse::<Scenario>().unwrap(), Scenario::Skewed);
        assert_eq!("2".parse::<Scenario>().unwrap(), Scenario::MultiModalSkewed);
        assert!("bimodal".parse::<Scenario>().is_err());
    }
}
