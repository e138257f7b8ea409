use housebench::ann::NetworkConfig;
use housebench::data::{split, ColumnData, SplitFractions};
use housebench::eval::{run_experiment, ExperimentPlan, Partition};
use housebench::forest::ForestConfig;
use housebench::knn::KnnConfig;
use housebench::model::{ModelArtifact, ModelKind, ModelSpec};
use housebench::preprocess::{Coding, PipelineFit, PreprocessOptions, INTERCEPT};
use housebench::synth::{self, GeneratorConfig, SyntheticData};

fn data(n: usize, seed: u64) -> SyntheticData {
    synth::generate(&GeneratorConfig {
        n,
        seed,
        ..GeneratorConfig::default()
    })
    .unwrap()
}

#[test]
fn pipeline_ignores_non_training_rows() {
    let d = data(300, 1);
    let ds = &d.dataset;
    let s = split(ds.n_rows(), SplitFractions::default(), 4).unwrap();
    let opts = PreprocessOptions::default();
    let before = PipelineFit::fit(ds, &s.train, &opts).unwrap();

    let col = ds.schema().index_of(synth::LIVING_AREA).unwrap();
    let mut v = ds.column(col).as_numeric().unwrap().to_vec();
    for &r in s.test.iter().chain(&s.validation) {
        v[r] = Some(1e7);
    }
    let poisoned = ds.with_column(col, ColumnData::Numeric(v)).unwrap();
    let after = PipelineFit::fit(&poisoned, &s.train, &opts).unwrap();
    assert_eq!(before.to_json().unwrap(), after.to_json().unwrap());
}

#[test]
fn codings_differ_by_intercept_and_reference_levels() {
    let d = data(300, 2);
    let ds = &d.dataset;
    let s = split(ds.n_rows(), SplitFractions::default(), 0).unwrap();
    let pf = PipelineFit::fit(ds, &s.train, &PreprocessOptions::default()).unwrap();
    let full = pf.transform(ds, &s.test, Coding::Full).unwrap();
    let reference = pf.transform(ds, &s.test, Coding::Reference).unwrap();
    assert_eq!(full.n_rows(), s.test.len());
    assert_eq!(reference.labels()[0], INTERCEPT);
    assert!(!full.labels().iter().any(|l| l == INTERCEPT));

    let groups = full.feature_groups();
    let categorical: Vec<&Vec<usize>> = groups.iter().filter(|(_, c)| c.len() > 1).map(|(_, c)| c).collect();
    assert!(!categorical.is_empty());
    assert_eq!(reference.n_cols(), full.n_cols() - categorical.len() + 1);
    // one-hot blocks sum to one on every row
    for cols in categorical {
        for i in 0..full.n_rows() {
            assert_eq!(cols.iter().map(|&j| full.x[(i, j)]).sum::<f64>(), 1.0);
        }
    }
    assert!(full.x.is_finite() && reference.x.is_finite());
}

#[test]
fn pipeline_json_roundtrip_transforms_identically() {
    let d = data(250, 3);
    let ds = &d.dataset;
    let s = split(ds.n_rows(), SplitFractions::default(), 9).unwrap();
    let pf = PipelineFit::fit(ds, &s.train, &PreprocessOptions::default()).unwrap();
    let back = PipelineFit::from_json(&pf.to_json().unwrap()).unwrap();
    let a = pf.transform(ds, &s.validation, Coding::Full).unwrap();
    let b = back.transform(ds, &s.validation, Coding::Full).unwrap();
    assert_eq!(a.x, b.x);
    assert_eq!(a.y, b.y);
}

#[test]
fn hedonic_only_experiment_bookkeeping() {
    let d = data(200, 4);
    let plan = ExperimentPlan {
        models: vec![ModelKind::Hp],
        repeats: 2,
        ..ExperimentPlan::default()
    };
    let out = run_experiment(&plan, &d.dataset, &PreprocessOptions::default()).unwrap();
    let runs = &out.report.tuned.runs;
    assert_eq!(runs.len(), 2);
    assert_eq!(runs.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![plan.base_seed, plan.base_seed + 1]);
    let agg = out.report.aggregate(ModelKind::Hp).unwrap();
    for p in Partition::ALL {
        let mean = runs.iter().map(|r| r.metrics(p).rmse).sum::<f64>() / 2.0;
        let got = match p {
            Partition::Train => agg.train.rmse.mean,
            Partition::Validation => agg.validation.rmse.mean,
            Partition::Test => agg.test.rmse.mean,
        };
        assert!((got - mean).abs() <= 1e-12);
    }
    // one model, so no pairs to test
    assert!(out.report.tuned.paired_tests.is_empty());
}

#[test]
fn artifacts_roundtrip_through_json() {
    let d = data(240, 5);
    let ds = &d.dataset;
    let s = split(ds.n_rows(), SplitFractions::default(), 1).unwrap();
    let pf = PipelineFit::fit(ds, &s.train, &PreprocessOptions::default()).unwrap();
    let specs = [
        ModelSpec::Hp,
        ModelSpec::Ann(NetworkConfig {
            hidden_layers: 1,
            units_per_layer: 8,
            max_epochs: 30,
            ..NetworkConfig::default()
        }),
        ModelSpec::Rf(ForestConfig {
            n_trees: 10,
            mtry: Some(4),
            ..ForestConfig::default()
        }),
        ModelSpec::Knn(KnnConfig::default()),
    ];
    for spec in specs {
        let coding = spec.kind().coding();
        let tr = pf.transform(ds, &s.train, coding).unwrap();
        let va = pf.transform(ds, &s.validation, coding).unwrap();
        let te = pf.transform(ds, &s.test, coding).unwrap();
        let fit = spec.fit(&tr, &va).unwrap();
        let back = ModelArtifact::from_json(&fit.to_json().unwrap()).unwrap();
        assert_eq!(back.kind(), spec.kind());
        assert_eq!(fit.predict(&te.x).unwrap(), back.predict(&te.x).unwrap(), "{}", spec.kind());
    }
}
