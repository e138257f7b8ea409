//! Metrics, hyperparameter search, repeated train/validation/test
//! experiments, paired t-tests and report assembly.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ann::{BatchSize, NetworkConfig};
use crate::data::{split, Dataset, SplitFractions};
use crate::error::{Error, Result};
use crate::forest::ForestConfig;
use crate::knn::{Distance, KnnConfig};
use crate::model::{ModelArtifact, ModelKind, ModelSpec};
use crate::preprocess::{Coding, DesignMatrix, PipelineFit, PreprocessOptions};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub rmse: f64,
    pub mae: f64,
    /// Percent.
    pub mape: f64,
    pub r2: f64,
}

fn check_lengths(y: &[f64], y_hat: &[f64]) -> Result<()> {
    if y.len() != y_hat.len() {
        return Err(Error::Dimension {
            expected: y.len(),
            got: y_hat.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::Data("metrics need at least one observation".into()));
    }
    Ok(())
}

pub fn mse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_lengths(y, y_hat)?;
    Ok(y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64)
}

pub fn rmse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    Ok(mse(y, y_hat)?.sqrt())
}

pub fn mae(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_lengths(y, y_hat)?;
    Ok(y.iter().zip(y_hat).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64)
}

pub fn mape(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_lengths(y, y_hat)?;
    if let Some(i) = y.iter().position(|&v| v == 0.0) {
        return Err(Error::Data(format!("MAPE undefined: target is zero at position {i}")));
    }
    Ok(100.0 * y.iter().zip(y_hat).map(|(a, b)| ((a - b) / a).abs()).sum::<f64>() / y.len() as f64)
}

pub fn r2(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_lengths(y, y_hat)?;
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let sst: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    if sst == 0.0 {
        return Err(Error::Data("R² undefined: target has zero variance".into()));
    }
    let sse: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(1.0 - sse / sst)
}

pub fn metrics(y: &[f64], y_hat: &[f64]) -> Result<MetricSet> {
    Ok(MetricSet {
        rmse: rmse(y, y_hat)?,
        mae: mae(y, y_hat)?,
        mape: mape(y, y_hat)?,
        r2: r2(y, y_hat)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedTest {
    pub t: f64,
    pub p_value: f64,
    pub df: usize,
    pub mean_difference: f64,
    /// Differences have zero spread but non-zero mean.
    pub degenerate: bool,
}

/// Paired t-test on `a − b`, two-sided against Student t with m − 1 df.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<PairedTest> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            got: b.len(),
        });
    }
    let m = a.len();
    if m < 2 {
        return Err(Error::Data("paired t-test needs at least two pairs".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / m as f64;
    let sd = (d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1) as f64).sqrt();
    let df = m - 1;
    if sd == 0.0 {
        return Ok(if mean == 0.0 {
            PairedTest {
                t: 0.0,
                p_value: 1.0,
                df,
                mean_difference: 0.0,
                degenerate: false,
            }
        } else {
            PairedTest {
                t: f64::INFINITY.copysign(mean),
                p_value: 0.0,
                df,
                mean_difference: mean,
                degenerate: true,
            }
        });
    }
    let t = mean / (sd / (m as f64).sqrt());
    Ok(PairedTest {
        t,
        p_value: stats::t_two_sided_p(t, df as f64),
        df,
        mean_difference: mean,
        degenerate: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub hyperparameters: BTreeMap<String, f64>,
    pub validation_mse: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub best_index: usize,
    pub best: ModelSpec,
    pub validation_mse: f64,
    pub artifact: ModelArtifact,
    pub evaluated: Vec<GridPoint>,
}

/// Fits every grid point and keeps the lowest validation MSE (first wins on
/// ties). Failing points are skipped with a warning.
pub fn grid_search(grid: &[ModelSpec], train: &DesignMatrix, validation: &DesignMatrix) -> Result<SearchResult> {
    if grid.is_empty() {
        return Err(Error::Config("hyperparameter grid is empty".into()));
    }
    let mut best: Option<(usize, f64, ModelArtifact)> = None;
    let mut evaluated = Vec::with_capacity(grid.len());
    for (i, spec) in grid.iter().enumerate() {
        let outcome = spec.fit(train, validation).and_then(|a| {
            let p = a.predict(&validation.x)?;
            Ok((mse(&validation.y, &p)?, a))
        });
        match outcome {
            Ok((v, artifact)) => {
                evaluated.push(GridPoint {
                    hyperparameters: spec.hyperparameters(),
                    validation_mse: Some(v),
                    error: None,
                });
                if best.as_ref().is_none_or(|b| v < b.1) {
                    best = Some((i, v, artifact));
                }
            }
            Err(e) => {
                log::warn!("{} grid point {i} skipped: {e}", spec.kind());
                evaluated.push(GridPoint {
                    hyperparameters: spec.hyperparameters(),
                    validation_mse: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    let (best_index, validation_mse, artifact) = best.ok_or_else(|| {
        let first = evaluated.iter().find_map(|g| g.error.clone()).unwrap_or_default();
        Error::Model(format!("every grid point failed ({first})"))
    })?;
    Ok(SearchResult {
        best_index,
        best: grid[best_index].clone(),
        validation_mse,
        artifact,
        evaluated,
    })
}

/// Grid search over a seeded random subset of `samples` grid points (kept in
/// grid order).
pub fn random_search(grid: &[ModelSpec], samples: usize, seed: u64, train: &DesignMatrix, validation: &DesignMatrix) -> Result<SearchResult> {
    if samples >= grid.len() {
        return grid_search(grid, train, validation);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pick = index::sample(&mut rng, grid.len(), samples.max(1)).into_vec();
    pick.sort_unstable();
    let sub: Vec<ModelSpec> = pick.iter().map(|&i| grid[i].clone()).collect();
    let mut r = grid_search(&sub, train, validation)?;
    r.best_index = pick[r.best_index];
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum Tuner {
    #[default]
    Grid,
    Random {
        samples: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnGrid {
    pub hidden_layers: Vec<usize>,
    pub units_per_layer: Vec<usize>,
    pub l2_lambda: Vec<f64>,
    pub learning_rate: Vec<f64>,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub batch_size: BatchSize,
}

impl Default for AnnGrid {
    fn default() -> Self {
        AnnGrid {
            hidden_layers: vec![1, 2],
            units_per_layer: vec![32, 64],
            l2_lambda: vec![0.001],
            learning_rate: vec![0.01],
            max_epochs: 400,
            early_stop_patience: 25,
            batch_size: BatchSize::Full,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestGrid {
    pub n_trees: Vec<usize>,
    pub mtry: Vec<usize>,
    pub min_leaf: Vec<usize>,
    pub max_depth: Option<usize>,
}

impl Default for ForestGrid {
    fn default() -> Self {
        ForestGrid {
            n_trees: vec![250],
            mtry: vec![7, 14, 28],
            min_leaf: vec![2, 5],
            max_depth: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnnGrid {
    pub k: Vec<usize>,
    pub distance: Distance,
}

impl Default for KnnGrid {
    fn default() -> Self {
        KnnGrid {
            k: vec![3, 5, 7, 9, 11],
            distance: Distance::Euclidean,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grids {
    pub ann: AnnGrid,
    pub rf: ForestGrid,
    pub knn: KnnGrid,
}

impl Grids {
    /// Grid points for one model family, in nested-loop order of the fields
    /// as declared (last field varies fastest).
    pub fn expand(&self, kind: ModelKind, seed: u64) -> Vec<ModelSpec> {
        let mut out = Vec::new();
        match kind {
            ModelKind::Hp => out.push(ModelSpec::Hp),
            ModelKind::Ann => {
                let g = &self.ann;
                for &h in &g.hidden_layers {
                    for &u in &g.units_per_layer {
                        for &l2 in &g.l2_lambda {
                            for &lr in &g.learning_rate {
                                out.push(ModelSpec::Ann(NetworkConfig {
                                    hidden_layers: h,
                                    units_per_layer: u,
                                    l2_lambda: l2,
                                    learning_rate: lr,
                                    max_epochs: g.max_epochs,
                                    batch_size: g.batch_size,
                                    early_stop_patience: g.early_stop_patience,
                                    seed,
                                }));
                            }
                        }
                    }
                }
            }
            ModelKind::Rf => {
                let g = &self.rf;
                for &t in &g.n_trees {
                    for &m in &g.mtry {
                        for &l in &g.min_leaf {
                            out.push(ModelSpec::Rf(ForestConfig {
                                n_trees: t,
                                mtry: Some(m),
                                max_depth: g.max_depth,
                                min_leaf: l,
                                bootstrap: true,
                                seed,
                            }));
                        }
                    }
                }
            }
            ModelKind::Knn => {
                for &k in &self.knn.k {
                    out.push(ModelSpec::Knn(KnnConfig {
                        k,
                        distance: self.knn.distance,
                    }));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentPlan {
    pub models: Vec<ModelKind>,
    pub repeats: usize,
    pub base_seed: u64,
    pub fractions: SplitFractions,
    pub tuner: Tuner,
    pub grids: Grids,
    /// Also rerun every repeat with the across-repeat average hyperparameters.
    pub fixed_structure_rerun: bool,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        ExperimentPlan {
            models: ModelKind::ALL.to_vec(),
            repeats: 20,
            base_seed: 2019,
            fractions: SplitFractions::default(),
            tuner: Tuner::Grid,
            grids: Grids::default(),
            fixed_structure_rerun: false,
        }
    }
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::Config("experiment needs at least one model".into()));
        }
        let mut seen = self.models.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.models.len() {
            return Err(Error::Config("model roster lists a model twice".into()));
        }
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be >= 1".into()));
        }
        if let Tuner::Random { samples: 0 } = self.tuner {
            return Err(Error::Config("random search needs samples >= 1".into()));
        }
        for &m in &self.models {
            if self.grids.expand(m, 0).is_empty() {
                return Err(Error::Config(format!("hyperparameter grid for {m} is empty")));
            }
        }
        Ok(())
    }

    pub fn repeat_seed(&self, r: usize) -> u64 {
        self.base_seed.wrapping_add(r as u64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Validation,
    Test,
}

impl Partition {
    pub const ALL: [Partition; 3] = [Partition::Train, Partition::Validation, Partition::Test];

    pub fn label(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Validation => "validation",
            Partition::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub repeat: usize,
    pub seed: u64,
    pub model: ModelKind,
    pub hyperparameters: BTreeMap<String, f64>,
    pub validation_mse: f64,
    pub train: MetricSet,
    pub validation: MetricSet,
    pub test: MetricSet,
    /// Every grid point tried in this repeat (empty for fixed-structure runs).
    #[serde(default)]
    pub grid: Vec<GridPoint>,
}

impl RunRecord {
    pub fn metrics(&self, p: Partition) -> &MetricSet {
        match p {
            Partition::Train => &self.train,
            Partition::Validation => &self.validation,
            Partition::Test => &self.test,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    /// Arithmetic mean and sample standard deviation (0 for one value).
    pub fn of(v: &[f64]) -> Summary {
        let m = v.len() as f64;
        let mean = v.iter().sum::<f64>() / m;
        let std = if v.len() > 1 {
            (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (m - 1.0)).sqrt()
        } else {
            0.0
        };
        Summary { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub rmse: Summary,
    pub mae: Summary,
    pub mape: Summary,
    pub r2: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelAggregate {
    pub model: ModelKind,
    pub train: MetricSummary,
    pub validation: MetricSummary,
    pub test: MetricSummary,
    /// Across-repeat mean of each tuned hyperparameter.
    pub mean_hyperparameters: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTest {
    pub a: ModelKind,
    pub b: ModelKind,
    pub metric: String,
    pub partition: Partition,
    #[serde(flatten)]
    pub test: PairedTest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultSection {
    pub runs: Vec<RunRecord>,
    pub aggregates: Vec<ModelAggregate>,
    pub paired_tests: Vec<PairwiseTest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub format_version: u32,
    pub plan: ExperimentPlan,
    pub preprocess: PreprocessOptions,
    pub n_rows: usize,
    pub tuned: ResultSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_structure: Option<ResultSection>,
}

/// Everything fitted in one repeat, kept for plots and diagnostics.
#[derive(Debug, Clone)]
pub struct RepeatDetail {
    pub repeat: usize,
    pub seed: u64,
    pub pipeline: PipelineFit,
    pub train: DesignMatrix,
    pub validation: DesignMatrix,
    pub test: DesignMatrix,
    pub models: Vec<(ModelKind, ModelArtifact, Vec<f64>)>,
}

impl RepeatDetail {
    pub fn artifact(&self, kind: ModelKind) -> Option<&ModelArtifact> {
        self.models.iter().find(|m| m.0 == kind).map(|m| &m.1)
    }

    /// Test-set predictions of one model.
    pub fn test_predictions(&self, kind: ModelKind) -> Option<&[f64]> {
        self.models.iter().find(|m| m.0 == kind).map(|m| m.2.as_slice())
    }
}

pub struct ExperimentOutcome {
    pub report: ComparisonReport,
    /// Details of repeat 0 of the tuned run.
    pub first_repeat: RepeatDetail,
}

struct Designs {
    pipeline: PipelineFit,
    full: [DesignMatrix; 3],
    reference: [DesignMatrix; 3],
}

fn build_designs(ds: &Dataset, plan: &ExperimentPlan, opts: &PreprocessOptions, seed: u64) -> Result<Designs> {
    let s = split(ds.n_rows(), plan.fractions, seed)?;
    let pipeline = PipelineFit::fit(ds, &s.train, opts)?;
    let parts = [&s.train, &s.validation, &s.test];
    let make = |coding: Coding| -> Result<[DesignMatrix; 3]> {
        Ok([
            pipeline.transform(ds, parts[0], coding)?,
            pipeline.transform(ds, parts[1], coding)?,
            pipeline.transform(ds, parts[2], coding)?,
        ])
    };
    let needs_full = plan.models.iter().any(|m| m.coding() == Coding::Full);
    let needs_ref = plan.models.contains(&ModelKind::Hp);
    let full = if needs_full { make(Coding::Full)? } else { make(Coding::Reference)? };
    let reference = if needs_ref { make(Coding::Reference)? } else { full.clone() };
    Ok(Designs { pipeline, full, reference })
}

fn run_repeat(
    ds: &Dataset,
    plan: &ExperimentPlan,
    opts: &PreprocessOptions,
    r: usize,
    fixed: Option<&BTreeMap<ModelKind, ModelSpec>>,
    keep_detail: bool,
) -> Result<(Vec<RunRecord>, Option<RepeatDetail>)> {
    let seed = plan.repeat_seed(r);
    let ctx = |e: Error| match e {
        Error::Model(m) => Error::Model(format!("repeat {r} (seed {seed}): {m}")),
        other => other,
    };
    let d = build_designs(ds, plan, opts, seed).map_err(ctx)?;
    let mut records = Vec::new();
    let mut models = Vec::new();
    for &kind in &plan.models {
        let [tr, va, te] = match kind.coding() {
            Coding::Full => &d.full,
            Coding::Reference => &d.reference,
        };
        let (spec, val_mse, artifact, grid_points) = match fixed {
            Some(specs) => {
                let spec = specs[&kind].with_seed(seed);
                let a = spec.fit(tr, va).map_err(|e| ctx(Error::Model(format!("{kind}: {e}"))))?;
                let v = mse(&va.y, &a.predict(&va.x)?)?;
                (spec, v, a, Vec::new())
            }
            None => {
                let grid = plan.grids.expand(kind, seed);
                let res = match plan.tuner {
                    Tuner::Grid => grid_search(&grid, tr, va),
                    Tuner::Random { samples } => random_search(&grid, samples, seed, tr, va),
                }
                .map_err(|e| ctx(Error::Model(format!("{kind}: {e}"))))?;
                (res.best, res.validation_mse, res.artifact, res.evaluated)
            }
        };
        let eval = |dm: &DesignMatrix| -> Result<(MetricSet, Vec<f64>)> {
            let p = artifact.predict(&dm.x)?;
            Ok((metrics(&dm.y, &p)?, p))
        };
        let (m_tr, _) = eval(tr)?;
        let (m_va, _) = eval(va)?;
        let (m_te, p_te) = eval(te)?;
        records.push(RunRecord {
            repeat: r,
            seed,
            model: kind,
            hyperparameters: spec.hyperparameters(),
            validation_mse: val_mse,
            train: m_tr,
            validation: m_va,
            test: m_te,
            grid: grid_points,
        });
        if keep_detail {
            models.push((kind, artifact, p_te));
        }
    }
    let detail = keep_detail.then(|| {
        let [train, validation, test] = d.full;
        RepeatDetail {
            repeat: r,
            seed,
            pipeline: d.pipeline,
            train,
            validation,
            test,
            models,
        }
    });
    Ok((records, detail))
}

fn run_section(
    ds: &Dataset,
    plan: &ExperimentPlan,
    opts: &PreprocessOptions,
    fixed: Option<&BTreeMap<ModelKind, ModelSpec>>,
) -> Result<(ResultSection, RepeatDetail)> {
    let results: Vec<Result<(Vec<RunRecord>, Option<RepeatDetail>)>> = (0..plan.repeats)
        .into_par_iter()
        .map(|r| run_repeat(ds, plan, opts, r, fixed, r == 0))
        .collect();
    let mut runs = Vec::new();
    let mut first = None;
    for res in results {
        let (recs, detail) = res?;
        runs.extend(recs);
        if detail.is_some() {
            first = detail;
        }
    }
    let section = assemble(plan, runs)?;
    Ok((section, first.expect("repeat 0 detail")))
}

fn summarize(runs: &[&RunRecord], p: Partition) -> MetricSummary {
    let pick = |f: fn(&MetricSet) -> f64| Summary::of(&runs.iter().map(|r| f(r.metrics(p))).collect::<Vec<_>>());
    MetricSummary {
        rmse: pick(|m| m.rmse),
        mae: pick(|m| m.mae),
        mape: pick(|m| m.mape),
        r2: pick(|m| m.r2),
    }
}

pub const METRIC_NAMES: [&str; 4] = ["rmse", "mae", "mape", "r2"];

fn metric_value(m: &MetricSet, name: &str) -> f64 {
    match name {
        "rmse" => m.rmse,
        "mae" => m.mae,
        "mape" => m.mape,
        _ => m.r2,
    }
}

fn assemble(plan: &ExperimentPlan, runs: Vec<RunRecord>) -> Result<ResultSection> {
    let by_model = |k: ModelKind| -> Vec<&RunRecord> {
        let mut v: Vec<&RunRecord> = runs.iter().filter(|r| r.model == k).collect();
        v.sort_by_key(|r| r.repeat);
        v
    };
    let aggregates = plan
        .models
        .iter()
        .map(|&k| {
            let rs = by_model(k);
            let mut mean_h: BTreeMap<String, f64> = BTreeMap::new();
            for r in &rs {
                for (name, v) in &r.hyperparameters {
                    *mean_h.entry(name.clone()).or_default() += v;
                }
            }
            mean_h.values_mut().for_each(|v| *v /= rs.len() as f64);
            ModelAggregate {
                model: k,
                train: summarize(&rs, Partition::Train),
                validation: summarize(&rs, Partition::Validation),
                test: summarize(&rs, Partition::Test),
                mean_hyperparameters: mean_h,
            }
        })
        .collect();
    let mut paired_tests = Vec::new();
    if plan.repeats >= 2 {
        for (i, &a) in plan.models.iter().enumerate() {
            for &b in &plan.models[i + 1..] {
                let (ra, rb) = (by_model(a), by_model(b));
                for name in METRIC_NAMES {
                    let va: Vec<f64> = ra.iter().map(|r| metric_value(&r.test, name)).collect();
                    let vb: Vec<f64> = rb.iter().map(|r| metric_value(&r.test, name)).collect();
                    paired_tests.push(PairwiseTest {
                        a,
                        b,
                        metric: name.to_string(),
                        partition: Partition::Test,
                        test: paired_t_test(&va, &vb)?,
                    });
                }
            }
        }
    }
    let mut runs = runs;
    runs.sort_by_key(|r| (r.repeat, plan.models.iter().position(|&m| m == r.model)));
    Ok(ResultSection {
        runs,
        aggregates,
        paired_tests,
    })
}

pub const REPORT_FORMAT_VERSION: u32 = 1;

/// Runs the repeated comparison. Repeat `r` splits with seed
/// `base_seed + r`, refits preprocessing on its training rows and tunes each
/// model on its validation rows.
pub fn run_experiment(plan: &ExperimentPlan, ds: &Dataset, opts: &PreprocessOptions) -> Result<ExperimentOutcome> {
    plan.validate()?;
    let (tuned, first_repeat) = run_section(ds, plan, opts, None)?;
    let fixed_structure = if plan.fixed_structure_rerun {
        let specs: BTreeMap<ModelKind, ModelSpec> = tuned
            .aggregates
            .iter()
            .map(|a| {
                let template = plan.grids.expand(a.model, 0).remove(0);
                (a.model, template.with_hyperparameters(&a.mean_hyperparameters))
            })
            .collect();
        Some(run_section(ds, plan, opts, Some(&specs))?.0)
    } else {
        None
    };
    Ok(ExperimentOutcome {
        report: ComparisonReport {
            format_version: REPORT_FORMAT_VERSION,
            plan: plan.clone(),
            preprocess: opts.clone(),
            n_rows: ds.n_rows(),
            tuned,
            fixed_structure,
        },
        first_repeat,
    })
}

impl ComparisonReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn aggregate(&self, kind: ModelKind) -> Option<&ModelAggregate> {
        self.tuned.aggregates.iter().find(|a| a.model == kind)
    }

    pub fn paired(&self, a: ModelKind, b: ModelKind, metric: &str) -> Option<&PairwiseTest> {
        self.tuned
            .paired_tests
            .iter()
            .find(|t| t.a == a && t.b == b && t.metric == metric)
    }

    /// Models ordered by mean test RMSE, best first.
    pub fn ranking(&self) -> Vec<ModelKind> {
        let mut v: Vec<&ModelAggregate> = self.tuned.aggregates.iter().collect();
        v.sort_by(|a, b| a.test.rmse.mean.total_cmp(&b.test.rmse.mean));
        v.into_iter().map(|a| a.model).collect()
    }

    /// Metrics by model and partition, each cell `mean (std)`.
    pub fn table_csv(&self) -> String {
        section_table_csv(&self.tuned)
    }
}

pub fn section_table_csv(section: &ResultSection) -> String {
    let mut out = String::from("measurement");
    for a in &section.aggregates {
        for p in Partition::ALL {
            let _ = write!(out, ",{} {}", a.model, p.label());
        }
    }
    out.push('\n');
    for (label, name) in [("RMSE", "rmse"), ("MAE", "mae"), ("MAPE (%)", "mape"), ("R2", "r2")] {
        out.push_str(label);
        for a in &section.aggregates {
            for s in [&a.train, &a.validation, &a.test] {
                let v = match name {
                    "rmse" => s.rmse,
                    "mae" => s.mae,
                    "mape" => s.mape,
                    _ => s.r2,
                };
                let _ = write!(out, ",{:.4} ({:.4})", v.mean, v.std);
            }
        }
        out.push('\n');
    }
    out
}

pub fn paired_tests_csv(section: &ResultSection) -> String {
    let mut out = String::from("model_a,model_b,metric,partition,mean_difference,t,df,p_value,degenerate\n");
    for t in &section.paired_tests {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            t.a,
            t.b,
            t.metric,
            t.partition.label(),
            t.test.mean_difference,
            t.test.t,
            t.test.df,
            t.test.p_value,
            t.test.degenerate
        );
    }
    out
}
