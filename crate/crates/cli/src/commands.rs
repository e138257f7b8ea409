//! Subcommand implementations. Each returns the text destined for standard
//! output; files are written under the configured output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use housebench::data::{describe, split};
use housebench::eval::{self, run_experiment, ComparisonReport, ExperimentOutcome, ExperimentPlan, Partition};
use housebench::forest::{self, linear_grid, partial_dependence, Importance, PdPoint};
use housebench::hedonic::{self, HcType};
use housebench::model::{ModelArtifact, ModelKind};
use housebench::preprocess::{feature_correlations, Coding, DesignMatrix, PipelineFit};
use housebench::{Error, Result};

use crate::config::{ImportanceMode, RunConfig, Source};
use crate::svg::{self, Series};

pub struct Output {
    pub stdout: String,
    pub files: Vec<PathBuf>,
}

struct Writer {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Writer {
    fn new(dir: PathBuf) -> Result<Writer> {
        fs::create_dir_all(&dir).map_err(|e| Error::Io {
            path: dir.clone(),
            source: e,
        })?;
        Ok(Writer { dir, files: Vec::new() })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        self.files.push(path);
        Ok(())
    }

    fn finish(self, stdout: String) -> Output {
        Output { stdout, files: self.files }
    }
}

fn csv_text(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let ser = |e: csv::Error| Error::Serde(e.to_string());
    w.write_record(header).map_err(ser)?;
    for r in rows {
        w.write_record(&r).map_err(ser)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Serde(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv writer emits utf-8"))
}

fn slug(name: &str) -> String {
    let mut s: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect();
    while s.contains("__") {
        s = s.replace("__", "_");
    }
    s.trim_matches('_').to_string()
}

pub fn synthesize(cfg: &RunConfig) -> Result<Output> {
    let gen = cfg
        .synth
        .as_ref()
        .ok_or_else(|| Error::Config("synthesize needs a [synth] section".into()))?;
    let data = housebench::synth::generate(gen)?;
    let mut w = Writer::new(cfg.out_dir())?;
    let mut buf = Vec::new();
    data.dataset.write_csv(&mut buf)?;
    w.write("synthetic.csv", &String::from_utf8(buf).expect("utf-8 csv"))?;
    w.write("synthetic_schema.toml", &data.dataset.schema().to_toml_string())?;
    w.write("synthetic_truth.json", &(serde_json::to_string_pretty(&data.descriptor())? + "\n"))?;
    let msg = format!(
        "generated {} rows (seed {}, noise_std {})\n",
        data.dataset.n_rows(),
        gen.seed,
        gen.noise_std
    );
    Ok(w.finish(msg))
}

pub fn describe_cmd(cfg: &RunConfig) -> Result<Output> {
    let src = cfg.load_source()?;
    let stats = describe(src.dataset());
    let mut w = Writer::new(cfg.out_dir())?;
    let numeric = stats.numeric_csv();
    let categorical = stats.categorical_csv();
    w.write("describe_numeric.csv", &numeric)?;
    w.write("describe_categorical.csv", &categorical)?;
    let out = format!("rows: {}\n\n{numeric}\n{categorical}", stats.n_rows);
    Ok(w.finish(out))
}

fn design_csv(dm: &DesignMatrix, target: &str) -> Result<String> {
    let mut header = vec!["row".to_string()];
    header.extend(dm.labels());
    header.push(target.to_string());
    let rows = (0..dm.n_rows()).map(|i| {
        let mut r = vec![dm.row_ids[i].to_string()];
        r.extend(dm.x.row(i).iter().map(|v| v.to_string()));
        r.push(dm.y[i].to_string());
        r
    });
    csv_text(&header, rows)
}

pub fn prepare(cfg: &RunConfig) -> Result<Output> {
    let src = cfg.load_source()?;
    let ds = src.dataset();
    let seed = cfg.plan.repeat_seed(0);
    let s = split(ds.n_rows(), cfg.plan.fractions, seed)?;
    let pf = PipelineFit::fit(ds, &s.train, &cfg.preprocess)?;
    let mut w = Writer::new(cfg.out_dir())?;
    w.write("pipeline.json", &(pf.to_json()? + "\n"))?;
    let target = format!("ln({})", pf.target);
    for (name, rows) in [("train", &s.train), ("validation", &s.validation), ("test", &s.test)] {
        let dm = pf.transform(ds, rows, Coding::Full)?;
        w.write(&format!("design_{name}.csv"), &design_csv(&dm, &target)?)?;
    }
    let screening = csv_text(
        &["feature".into(), "reason".into(), "detail".into()],
        pf.dropped_features.iter().map(|d| {
            let v = serde_json::to_value(&d.reason).unwrap_or_default();
            let reason = v.get("reason").and_then(|r| r.as_str()).unwrap_or("").to_string();
            let mut detail = v;
            if let Some(o) = detail.as_object_mut() {
                o.remove("reason");
            }
            vec![d.name.clone(), reason, detail.to_string()]
        }),
    )?;
    w.write("screening.csv", &screening)?;
    let (names, corr) = feature_correlations(ds, &s.train, cfg.preprocess.winsorization)?;
    let mut header = vec!["feature".to_string()];
    header.extend(names.iter().cloned());
    let rows = names.iter().enumerate().map(|(i, n)| {
        let mut r = vec![n.clone()];
        r.extend((0..names.len()).map(|j| {
            let v = corr.values[(i, j)];
            if v.is_nan() {
                String::new()
            } else {
                format!("{v:.6}")
            }
        }));
        r
    });
    w.write("correlations.csv", &csv_text(&header, rows)?)?;

    let mut out = format!(
        "split seed {seed}: {} train / {} validation / {} test rows\n{} features kept, {} dropped\n",
        s.train.len(),
        s.validation.len(),
        s.test.len(),
        pf.features.len(),
        pf.dropped_features.len()
    );
    for d in &pf.dropped_features {
        let _ = writeln!(out, "  dropped {}: {:?}", d.name, d.reason);
    }
    Ok(w.finish(out))
}

fn runs_csv(report: &ComparisonReport) -> Result<String> {
    let header: Vec<String> = ["repeat", "seed", "model", "partition", "rmse", "mae", "mape", "r2"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut rows = Vec::new();
    for r in &report.tuned.runs {
        for p in Partition::ALL {
            let m = r.metrics(p);
            rows.push(vec![
                r.repeat.to_string(),
                r.seed.to_string(),
                r.model.to_string(),
                p.label().to_string(),
                m.rmse.to_string(),
                m.mae.to_string(),
                m.mape.to_string(),
                m.r2.to_string(),
            ]);
        }
    }
    csv_text(&header, rows)
}

fn summary_text(report: &ComparisonReport) -> String {
    let mut out = format!(
        "{} repeats, {} rows; test-fold metrics, mean (std)\n{:<6}{:>20}{:>20}{:>20}{:>20}\n",
        report.plan.repeats, report.n_rows, "model", "RMSE", "MAE", "MAPE %", "R2"
    );
    for a in &report.tuned.aggregates {
        let cell = |s: eval::Summary| format!("{:.4} ({:.4})", s.mean, s.std);
        let _ = writeln!(
            out,
            "{:<6}{:>20}{:>20}{:>20}{:>20}",
            a.model.label(),
            cell(a.test.rmse),
            cell(a.test.mae),
            cell(a.test.mape),
            cell(a.test.r2)
        );
    }
    let ranking: Vec<&str> = report.ranking().iter().map(|m| m.label()).collect();
    let _ = writeln!(out, "ranking by mean test RMSE: {}", ranking.join(" < "));
    for t in report.tuned.paired_tests.iter().filter(|t| t.metric == "rmse") {
        let _ = writeln!(
            out,
            "paired t (test RMSE) {} vs {}: t = {:.3}, p = {:.3e}{}",
            t.a,
            t.b,
            t.test.t,
            t.test.p_value,
            if t.test.degenerate { " (degenerate)" } else { "" }
        );
    }
    out
}

fn numeric_columns(dm: &DesignMatrix, pf: &PipelineFit) -> Vec<(String, usize)> {
    let numeric = pf.numeric_features();
    dm.feature_groups()
        .into_iter()
        .filter(|(name, cols)| cols.len() == 1 && numeric.contains(name))
        .map(|(name, cols)| (name, cols[0]))
        .collect()
}

fn importance_for(cfg: &RunConfig, outcome: &ExperimentOutcome, mode: ImportanceMode) -> Result<Vec<Importance>> {
    let d = &outcome.first_repeat;
    let rf = d
        .artifact(ModelKind::Rf)
        .ok_or_else(|| Error::Config("the model roster must include RF".into()))?;
    let groups = d.validation.feature_groups();
    let opt = &cfg.importance;
    match (mode, rf) {
        (ImportanceMode::Oob, ModelArtifact::Forest(f)) => {
            f.oob_permutation_importance(&d.train.x, &d.train.y, &groups, opt.repeats, opt.seed)
        }
        _ => forest::permutation_importance(
            |x| rf.predict(x),
            &d.validation.x,
            &d.validation.y,
            &groups,
            opt.repeats,
            opt.seed,
        ),
    }
}

struct Curve {
    feature: String,
    points: Vec<PdPoint>,
}

fn pdp_curves(cfg: &RunConfig, outcome: &ExperimentOutcome, ranking: &[Importance]) -> Result<Vec<Curve>> {
    let d = &outcome.first_repeat;
    let rf = d
        .artifact(ModelKind::Rf)
        .ok_or_else(|| Error::Config("the model roster must include RF".into()))?;
    let numeric = numeric_columns(&d.train, &d.pipeline);
    let features: Vec<String> = match &cfg.pdp.features {
        Some(f) => f.clone(),
        None => ranking
            .iter()
            .filter(|i| numeric.iter().any(|(n, _)| *n == i.feature))
            .take(cfg.pdp.top)
            .map(|i| i.feature.clone())
            .collect(),
    };
    let mut curves = Vec::new();
    for name in features {
        let col = numeric
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, c)| *c)
            .ok_or_else(|| Error::Config(format!("'{name}' is not a numeric feature of the fitted design")))?;
        let grid = match &cfg.pdp.grid {
            Some(g) => g
                .iter()
                .map(|&v| d.pipeline.to_design_scale(&name, v).expect("numeric feature has a scale"))
                .collect(),
            None => {
                let v = d.train.x.column(col);
                let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                linear_grid(lo, hi, cfg.pdp.points)
            }
        };
        let pts = partial_dependence(|x| rf.predict(x), &d.train.x, col, &grid).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("partial dependence of '{name}': {m}")),
            other => other,
        })?;
        let points = pts
            .into_iter()
            .map(|p| PdPoint {
                value: d.pipeline.to_original_scale(&name, p.value).expect("numeric feature has a scale"),
                mean_prediction: p.mean_prediction,
            })
            .collect();
        curves.push(Curve { feature: name, points });
    }
    Ok(curves)
}

fn pdp_csv(curves: &[Curve]) -> Result<String> {
    let header: Vec<String> = ["feature", "value", "mean_prediction"].iter().map(|s| s.to_string()).collect();
    csv_text(
        &header,
        curves.iter().flat_map(|c| {
            c.points
                .iter()
                .map(|p| vec![c.feature.clone(), p.value.to_string(), p.mean_prediction.to_string()])
        }),
    )
}

fn write_importance_plot(w: &mut Writer, ranking: &[Importance]) -> Result<()> {
    let bars: Vec<(String, f64)> = ranking.iter().map(|i| (i.feature.clone(), i.importance)).collect();
    w.write(
        "importance.svg",
        &svg::bar_chart("Permutation importance (RF)", "increase in MSE", &bars),
    )
}

fn write_pdp_plots(w: &mut Writer, curves: &[Curve]) -> Result<()> {
    for c in curves {
        let svg = svg::line_chart(
            &format!("Marginal effect: {}", c.feature),
            &c.feature,
            "mean predicted ln(price)",
            &[Series {
                name: "RF".into(),
                points: c.points.iter().map(|p| (p.value, p.mean_prediction)).collect(),
            }],
        );
        w.write(&format!("pdp_{}.svg", slug(&c.feature)), &svg)?;
    }
    Ok(())
}

fn hedonic_outputs(w: &mut Writer, src: &Source, outcome: &ExperimentOutcome) -> Result<String> {
    let d = &outcome.first_repeat;
    let Some(ModelArtifact::Hedonic(fit)) = d.artifact(ModelKind::Hp) else {
        return Ok(String::new());
    };
    let dm = d.pipeline.transform(src.dataset(), &d.train.row_ids, Coding::Reference)?;
    let robust = hedonic::white_covariance(fit, &dm, HcType::Hc0)?;
    let white = hedonic::white_test(fit, &dm)?;
    w.write("hedonic_coefficients.csv", &hedonic::coefficient_table_csv(fit, &robust))?;
    w.write("hedonic_white_test.json", &(serde_json::to_string_pretty(&white)? + "\n"))?;
    Ok(format!(
        "White test (repeat 0): n R^2 = {:.3}, df = {}, p = {:.3e}\n",
        white.statistic, white.df, white.p_value
    ))
}

fn comparison_plots(w: &mut Writer, outcome: &ExperimentOutcome) -> Result<()> {
    let d = &outcome.first_repeat;
    let k = d.test.n_rows().min(20);
    let mut series = vec![Series {
        name: "Actual".into(),
        points: (0..k).map(|i| ((i + 1) as f64, d.test.y[i])).collect(),
    }];
    for (kind, _, pred) in &d.models {
        series.push(Series {
            name: kind.label().into(),
            points: (0..k).map(|i| ((i + 1) as f64, pred[i])).collect(),
        });
    }
    w.write(
        "predicted_vs_actual.svg",
        &svg::line_chart("Predicted vs actual, first 20 test properties", "property", "ln(price)", &series),
    )?;
    if let Some(ModelArtifact::Ann(a)) = d.artifact(ModelKind::Ann) {
        let h = &a.state.history;
        let svg = svg::line_chart(
            "Network loss by epoch",
            "epoch",
            "loss (standardized target)",
            &[
                Series {
                    name: "train".into(),
                    points: h.iter().map(|r| (r.epoch as f64, r.train_loss)).collect(),
                },
                Series {
                    name: "validation".into(),
                    points: h.iter().map(|r| (r.epoch as f64, r.validation_loss)).collect(),
                },
            ],
        );
        w.write("ann_loss.svg", &svg)?;
    }
    Ok(())
}

pub fn compare(cfg: &RunConfig) -> Result<Output> {
    let src = cfg.load_source()?;
    let outcome = run_experiment(&cfg.plan, src.dataset(), &cfg.preprocess)?;
    let report = &outcome.report;
    let mut w = Writer::new(cfg.out_dir())?;
    w.write("report.json", &report.to_json()?)?;
    w.write("comparison_table.csv", &report.table_csv())?;
    w.write("paired_tests.csv", &eval::paired_tests_csv(&report.tuned))?;
    w.write("runs.csv", &runs_csv(report)?)?;
    if let Some(fixed) = &report.fixed_structure {
        w.write("fixed_structure_table.csv", &eval::section_table_csv(fixed))?;
    }
    let mut out = summary_text(report);
    out.push_str(&hedonic_outputs(&mut w, &src, &outcome)?);
    if let Some(ModelArtifact::Ann(a)) = outcome.first_repeat.artifact(ModelKind::Ann) {
        w.write("ann_history.csv", &a.state.history_csv())?;
    }
    if cfg.plots {
        comparison_plots(&mut w, &outcome)?;
    }
    // importance and marginal-effect tables come from repeat 0's forest
    if cfg.plan.models.contains(&ModelKind::Rf) {
        let ranking = importance_for(cfg, &outcome, cfg.importance.mode)?;
        let curves = pdp_curves(cfg, &outcome, &ranking)?;
        w.write("importance.csv", &forest::importance_csv(&ranking))?;
        w.write("pdp.csv", &pdp_csv(&curves)?)?;
        if cfg.plots {
            write_importance_plot(&mut w, &ranking)?;
            write_pdp_plots(&mut w, &curves)?;
        }
    }
    Ok(w.finish(out))
}

/// Single tuned RF repeat used by the importance and PDP commands.
fn forest_run(cfg: &RunConfig) -> Result<(Source, ExperimentOutcome)> {
    if !cfg.plan.models.contains(&ModelKind::Rf) {
        return Err(Error::Config("this command needs RF in plan.models".into()));
    }
    let src = cfg.load_source()?;
    let plan = ExperimentPlan {
        models: vec![ModelKind::Rf],
        repeats: 1,
        fixed_structure_rerun: false,
        ..cfg.plan.clone()
    };
    let outcome = run_experiment(&plan, src.dataset(), &cfg.preprocess)?;
    Ok((src, outcome))
}

pub fn importance(cfg: &RunConfig) -> Result<Output> {
    let (_, outcome) = forest_run(cfg)?;
    let ranking = importance_for(cfg, &outcome, cfg.importance.mode)?;
    let mut w = Writer::new(cfg.out_dir())?;
    w.write("importance.csv", &forest::importance_csv(&ranking))?;
    if cfg.plots {
        write_importance_plot(&mut w, &ranking)?;
    }
    let mut out = String::from("feature importance (increase in MSE), RF, repeat 0\n");
    for (rank, i) in ranking.iter().enumerate() {
        let _ = writeln!(out, "{:>3}. {:<36} {:>12.6} ({:.6})", rank + 1, i.feature, i.importance, i.std);
    }
    Ok(w.finish(out))
}

pub fn pdp(cfg: &RunConfig) -> Result<Output> {
    let (_, outcome) = forest_run(cfg)?;
    let ranking = importance_for(cfg, &outcome, cfg.importance.mode)?;
    let curves = pdp_curves(cfg, &outcome, &ranking)?;
    let mut w = Writer::new(cfg.out_dir())?;
    w.write("pdp.csv", &pdp_csv(&curves)?)?;
    if cfg.plots {
        write_pdp_plots(&mut w, &curves)?;
    }
    let mut out = String::new();
    for c in &curves {
        let _ = writeln!(out, "{}: {} grid points", c.feature, c.points.len());
    }
    Ok(w.finish(out))
}

/// Re-renders tables from an existing `report.json` in the output directory.
pub fn report(cfg: &RunConfig) -> Result<Output> {
    let dir = cfg.out_dir();
    let path = dir.join("report.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })?;
    let report = ComparisonReport::from_json(&text)?;
    let mut w = Writer::new(dir)?;
    w.write("comparison_table.csv", &report.table_csv())?;
    w.write("paired_tests.csv", &eval::paired_tests_csv(&report.tuned))?;
    Ok(w.finish(summary_text(&report)))
}

pub fn relative_to(p: &Path, base: &Path) -> String {
    p.strip_prefix(base).unwrap_or(p).display().to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slugs() {
        assert_eq!(slug("Age"), "age");
        assert_eq!(slug("Pool, Bath tub, Sauna, or Jacuzzi"), "pool_bath_tub_sauna_or_jacuzzi");
        assert_eq!(slug("Neighborhood's Population"), "neighborhood_s_population");
    }

    #[test]
    fn csv_quoting() {
        let s = csv_text(&["a,b".into(), "c".into()], vec![vec!["1".into(), "x\"y".into()]]).unwrap();
        assert_eq!(s, "\"a,b\",c\n1,\"x\"\"y\"\n");
    }
}
