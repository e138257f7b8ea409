use housebench::data::{split, Dataset, SplitFractions};
use housebench::forest::{permutation_importance, ForestConfig, ForestFit};
use housebench::preprocess::{Coding, PipelineFit, PreprocessOptions};
use housebench::synth::{self, GeneratorConfig};

fn cfg(n: usize, seed: u64) -> GeneratorConfig {
    GeneratorConfig {
        n,
        seed,
        ..GeneratorConfig::default()
    }
}

#[test]
fn generation_is_seeded() {
    let a = synth::generate(&cfg(150, 11)).unwrap();
    let b = synth::generate(&cfg(150, 11)).unwrap();
    let c = synth::generate(&cfg(150, 12)).unwrap();
    assert_eq!(a.clean_log_price, b.clean_log_price);
    assert_ne!(a.clean_log_price, c.clean_log_price);
}

#[test]
fn csv_roundtrip_preserves_the_dataset() {
    let d = synth::generate(&cfg(120, 3)).unwrap();
    let mut buf = Vec::new();
    d.dataset.write_csv(&mut buf).unwrap();
    let back = Dataset::read_csv(buf.as_slice(), d.dataset.schema().clone()).unwrap();
    assert_eq!(back.n_rows(), 120);
    assert_eq!(back.columns(), d.dataset.columns());
}

#[test]
fn noise_free_prices_follow_the_surface() {
    let d = synth::generate(&GeneratorConfig {
        noise_std: 0.0,
        ..cfg(80, 4)
    })
    .unwrap();
    let y = d.dataset.target().unwrap();
    for (r, clean) in d.clean_log_price.iter().enumerate() {
        assert!((d.truth.log_price_at(&d.dataset, r).unwrap() - clean).abs() < 1e-12);
        assert!((y[r].ln() - clean).abs() < 1e-9);
    }
}

#[test]
fn living_area_ranks_among_top_three_features() {
    let d = synth::generate(&cfg(600, 8)).unwrap();
    let ds = &d.dataset;
    let s = split(ds.n_rows(), SplitFractions::default(), 1).unwrap();
    let pf = PipelineFit::fit(ds, &s.train, &PreprocessOptions::default()).unwrap();
    let tr = pf.transform(ds, &s.train, Coding::Full).unwrap();
    let te = pf.transform(ds, &s.test, Coding::Full).unwrap();
    let f = ForestFit::fit(
        ForestConfig {
            n_trees: 100,
            mtry: Some(12),
            min_leaf: 3,
            seed: 2,
            ..ForestConfig::default()
        },
        &tr.x,
        &tr.y,
    )
    .unwrap();
    let imp = permutation_importance(|x| f.predict(x), &te.x, &te.y, &te.feature_groups(), 5, 0).unwrap();
    let top: Vec<&str> = imp.iter().take(3).map(|i| i.feature.as_str()).collect();
    assert!(top.contains(&synth::LIVING_AREA), "top three: {top:?}");
}
