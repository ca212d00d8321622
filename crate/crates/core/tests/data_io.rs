use std::collections::HashSet;

use mixlogit::data::{
    load_csv, split_train_validation, write_csv, ChoiceDataset, ChoiceTask, CsvSchema,
    PersonRecord, SplitSpec,
};
use mixlogit::synth::{generate_dataset, generate_tastes, GenerateOptions, Scenario, ScenarioSpec};
use mixlogit::Error;

fn people(n: usize, tasks: usize) -> ChoiceDataset {
    let persons = (0..n)
        .map(|p| PersonRecord {
            person_id: format!("p{p}"),
            tasks: (0..tasks)
                .map(|t| ChoiceTask {
                    task_id: format!("t{t}"),
                    alt_ids: vec!["a".into(), "b".into()],
                    attributes: vec![p as f64, t as f64, 0.5, -1.0],
                    available: vec![true, true],
                    chosen: (p + t) % 2,
                })
                .collect(),
        })
        .collect();
    ChoiceDataset::new(persons, vec!["x1".into(), "x2".into()], None).unwrap()
}

#[test]
fn csv_round_trip_preserves_everything() {
    let spec = ScenarioSpec::new(Scenario::MultiModalSkewed, 40, 6, 11);
    let tastes = generate_tastes(&spec).unwrap();
    let ds = generate_dataset(&spec, &tastes, GenerateOptions::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("choices.csv");
    write_csv(&ds, &path).unwrap();
    let back = load_csv(&path, &CsvSchema::standard(ds.attribute_names.clone())).unwrap();
    assert_eq!(back.persons, ds.persons);
    assert_eq!(back.attribute_names, ds.attribute_names);
}

#[test]
fn inferred_schema_matches_standard_layout() {
    let ds = people(3, 2);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    write_csv(&ds, &path).unwrap();
    let schema = CsvSchema::infer(&path).unwrap();
    let back = load_csv(&path, &schema).unwrap();
    assert_eq!(back.persons, ds.persons);
}

#[test]
fn missing_attribute_column_is_a_schema_error() {
    let ds = people(2, 1);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    write_csv(&ds, &path).unwrap();
    let schema = CsvSchema::standard(vec!["x1".into(), "price".into()]);
    match load_csv(&path, &schema) {
        Err(Error::Schema { column }) => assert_eq!(column, "price"),
        other => panic!("expected schema error, got {other:?}"),
    }
}

#[test]
fn task_with_two_chosen_rows_is_rejected() {
    let csv = "person_id,task_id,alt_id,chosen,x1\n\
               p,t,a,1,0.0\n\
               p,t,b,1,1.0\n";
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, csv).unwrap();
    let err = load_csv(&path, &CsvSchema::standard(vec!["x1".into()])).unwrap_err();
    assert!(matches!(err, Error::Integrity { .. }), "{err:?}");
}

#[test]
fn split_of_1507_persons_at_eighty_percent() {
    let ds = people(1507, 3);
    let spec = SplitSpec {
        train_fraction: 0.8,
        validation_tasks_per_person: 1,
        seed: 5,
    };
    let (train, valid) = split_train_validation(&ds, &spec).unwrap();
    assert_eq!(train.n_persons(), 1205);
    assert_eq!(valid.n_persons(), 302);
}

#[test]
fn split_of_1507_persons_at_exact_fraction() {
    let ds = people(1507, 3);
    let spec = SplitSpec {
        train_fraction: 1207.0 / 1507.0,
        validation_tasks_per_person: 1,
        seed: 5,
    };
    let (train, valid) = split_train_validation(&ds, &spec).unwrap();
    assert_eq!(train.n_persons(), 1207);
    assert_eq!(valid.n_persons(), 300);

    let train_ids: HashSet<_> = train.persons.iter().map(|p| &p.person_id).collect();
    assert!(valid.persons.iter().all(|p| !train_ids.contains(&p.person_id)));
    assert!(valid.persons.iter().all(|p| p.tasks.len() == 1));
    assert!(train.persons.iter().all(|p| p.tasks.len() == 3));
}

#[test]
fn split_depends_on_seed_only() {
    let ds = people(50, 4);
    let spec = |seed| SplitSpec {
        train_fraction: 0.6,
        validation_tasks_per_person: 2,
        seed,
    };
    let a = split_train_validation(&ds, &spec(1)).unwrap();
    let b = split_train_validation(&ds, &spec(1)).unwrap();
    let c = split_train_validation(&ds, &spec(2)).unwrap();
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
    assert_ne!(a.1, c.1);
}

#[test]
fn split_rejects_fractions_outside_unit_interval() {
    let ds = people(10, 2);
    for f in [0.0, 1.0, -0.2, 1.5] {
        let spec = SplitSpec {
            train_fraction: f,
            validation_tasks_per_person: 1,
            seed: 0,
        };
        assert!(matches!(split_train_validation(&ds, &spec), Err(Error::Config(_))));
    }
}
