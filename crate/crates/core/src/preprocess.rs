//! Preprocessing pipeline: imputation, winsorization, multicollinearity
//! screening, standardization, categorical encoding and the log-price target.
//!
//! Every statistic is estimated on training rows only ([`PipelineFit::fit`])
//! and then applied unchanged to any row set ([`PipelineFit::transform`]).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{level_counts, ColumnData, ColumnKind, ColumnRole, Dataset};
use crate::error::{Error, Result};
use crate::linalg::{determinant, Matrix};

/// Quantile with linear interpolation between order statistics
/// (`h = (n - 1) q`). `sorted` must be ascending and non-empty.
pub fn quantile_linear(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted_present(values: &[Option<f64>], rows: &[usize]) -> Vec<f64> {
    let mut v: Vec<f64> = rows.iter().filter_map(|&r| values[r]).collect();
    v.sort_by(f64::total_cmp);
    v
}

// ---------------------------------------------------------------------------
// imputation

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FillValue {
    Number(f64),
    Level(usize),
}

/// Mode over training rows; ties go to the lexicographically smallest level name.
fn categorical_mode(col: &[Option<usize>], rows: &[usize], levels: &[String]) -> Option<usize> {
    let counts = level_counts(col, rows);
    let best = *counts.values().max()?;
    counts
        .iter()
        .filter(|(_, &c)| c == best)
        .map(|(&l, _)| l)
        .min_by(|&a, &b| levels[a].cmp(&levels[b]))
}

fn binary_mode(col: &[Option<f64>], rows: &[usize]) -> Option<f64> {
    let (mut zeros, mut ones) = (0usize, 0usize);
    for &r in rows {
        match col[r] {
            Some(0.0) => zeros += 1,
            Some(_) => ones += 1,
            None => {}
        }
    }
    match (zeros, ones) {
        (0, 0) => None,
        // "0" < "1" lexicographically
        (z, o) if z >= o => Some(0.0),
        _ => Some(1.0),
    }
}

/// Imputation value for feature column `col` estimated on `train`.
pub fn fit_fill_value(ds: &Dataset, col: usize, train: &[usize]) -> Result<FillValue> {
    let schema = &ds.schema().columns[col];
    let none = || Error::Data(format!("column '{}' is entirely missing on the training rows", schema.name));
    match (schema.kind, ds.column(col)) {
        (ColumnKind::Numeric, ColumnData::Numeric(v)) => {
            let present: Vec<f64> = train.iter().filter_map(|&r| v[r]).collect();
            if present.is_empty() {
                return Err(none());
            }
            Ok(FillValue::Number(present.iter().sum::<f64>() / present.len() as f64))
        }
        (ColumnKind::Binary, ColumnData::Numeric(v)) => binary_mode(v, train).map(FillValue::Number).ok_or_else(none),
        (_, ColumnData::Categorical(v)) => categorical_mode(v, train, &schema.levels)
            .map(FillValue::Level)
            .ok_or_else(none),
        _ => unreachable!("validated dataset"),
    }
}

fn fill_column(data: &ColumnData, fill: FillValue) -> ColumnData {
    match (data, fill) {
        (ColumnData::Numeric(v), FillValue::Number(x)) => ColumnData::Numeric(v.iter().map(|c| Some(c.unwrap_or(x))).collect()),
        (ColumnData::Categorical(v), FillValue::Level(l)) => {
            ColumnData::Categorical(v.iter().map(|c| Some(c.unwrap_or(l))).collect())
        }
        _ => unreachable!("fill value matches column storage"),
    }
}

/// Fills missing feature cells: numeric with the training mean, binary and
/// categorical with the training mode.
pub fn impute(ds: &Dataset, train: &[usize]) -> Result<Dataset> {
    if train.is_empty() {
        return Err(Error::Data("imputation needs at least one training row".into()));
    }
    let mut out = ds.clone();
    for col in ds.schema().feature_indices() {
        let fill = fit_fill_value(ds, col, train)?;
        out = out.with_column(col, fill_column(ds.column(col), fill))?;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// winsorization

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Winsorization {
    Off,
    /// Cap values above the `upper` training quantile.
    OneSided { upper: f64 },
    /// Cap both tails at the `lower` / `upper` training quantiles.
    TwoSided { lower: f64, upper: f64 },
}

impl Default for Winsorization {
    fn default() -> Self {
        Winsorization::OneSided { upper: 0.95 }
    }
}

/// Caps `(lower, upper)` for one column under the given mode.
pub fn winsor_limits(values: &[Option<f64>], train: &[usize], mode: Winsorization) -> Option<(Option<f64>, Option<f64>)> {
    let sorted = sorted_present(values, train);
    if sorted.is_empty() {
        return None;
    }
    Some(match mode {
        Winsorization::Off => (None, None),
        Winsorization::OneSided { upper } => (None, Some(quantile_linear(&sorted, upper))),
        Winsorization::TwoSided { lower, upper } => (
            Some(quantile_linear(&sorted, lower)),
            Some(quantile_linear(&sorted, upper)),
        ),
    })
}

fn clip(x: f64, (lo, hi): (Option<f64>, Option<f64>)) -> f64 {
    let x = lo.map_or(x, |lo| x.max(lo));
    hi.map_or(x, |hi| x.min(hi))
}

/// Winsorizes every numeric feature column at training-quantile caps.
/// Values equal to a cap are left unchanged; missing cells stay missing.
pub fn winsorize(ds: &Dataset, train: &[usize], mode: Winsorization) -> Result<Dataset> {
    let mut out = ds.clone();
    for col in ds.schema().feature_indices() {
        if ds.schema().columns[col].kind != ColumnKind::Numeric {
            continue;
        }
        let v = ds.column(col).as_numeric().expect("numeric storage");
        if let Some(lim) = winsor_limits(v, train, mode) {
            let capped = v.iter().map(|c| c.map(|x| clip(x, lim))).collect();
            out = out.with_column(col, ColumnData::Numeric(capped))?;
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// correlation and multicollinearity

pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Pearson correlation matrix of the given columns. Entries involving a
/// constant column are NaN and the column is flagged in `constant`.
#[derive(Debug, Clone)]
pub struct CorrelationMatrix {
    pub values: Matrix,
    pub constant: Vec<bool>,
}

pub fn correlation_matrix(columns: &[Vec<f64>]) -> Result<CorrelationMatrix> {
    let k = columns.len();
    let n = columns.first().map_or(0, Vec::len);
    if n < 2 {
        return Err(Error::Data("correlation needs at least two rows".into()));
    }
    if let Some(c) = columns.iter().find(|c| c.len() != n) {
        return Err(Error::Dimension { expected: n, got: c.len() });
    }
    let constant: Vec<bool> = columns.iter().map(|c| c.iter().all(|&x| x == c[0])).collect();
    let mut values = Matrix::zeros(k, k);
    for i in 0..k {
        values[(i, i)] = if constant[i] { f64::NAN } else { 1.0 };
        for j in 0..i {
            let r = pearson(&columns[i], &columns[j]).unwrap_or(f64::NAN);
            values[(i, j)] = r;
            values[(j, i)] = r;
        }
    }
    Ok(CorrelationMatrix { values, constant })
}

/// One predictor as seen by the collinearity screen: a numeric column or
/// the reference-coded indicator block of a categorical feature.
#[derive(Debug, Clone)]
pub struct Predictor {
    pub name: String,
    /// Training-row values, one vector per design column.
    pub columns: Vec<Vec<f64>>,
    /// Enters the pairwise correlation screen (numeric and binary features).
    pub scalar: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum DropReason {
    /// No variation on the training rows.
    Constant,
    /// Exact linear dependence on earlier predictors.
    Singular,
    Correlation { partner: String, r: f64 },
    Gvif { gvif: f64, adjusted: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedFeature {
    pub name: String,
    #[serde(flatten)]
    pub reason: DropReason,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScreenOptions {
    pub correlation_threshold: f64,
    /// Cutoff on GVIF^(1 / (2 df)).
    pub gvif_cutoff: f64,
}

impl Default for ScreenOptions {
    fn default() -> Self {
        ScreenOptions {
            correlation_threshold: 0.8,
            gvif_cutoff: 2.24,
        }
    }
}

fn standardized(col: &[f64]) -> Vec<f64> {
    let n = col.len() as f64;
    let m = col.iter().sum::<f64>() / n;
    let ss = col.iter().map(|x| (x - m) * (x - m)).sum::<f64>().sqrt();
    col.iter().map(|x| (x - m) / ss).collect()
}

/// Predictors whose centered columns are exactly spanned by earlier ones.
fn singular_predictors(preds: &[Predictor], active: &[bool]) -> Vec<usize> {
    const TOL: f64 = 1e-10;
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut out = Vec::new();
    for (i, p) in preds.iter().enumerate() {
        if !active[i] {
            continue;
        }
        let mut added = Vec::new();
        let mut dependent = false;
        for col in &p.columns {
            let mut v = standardized(col);
            // two passes of modified Gram-Schmidt for stability
            for _ in 0..2 {
                for b in basis.iter().chain(&added) {
                    let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                    v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
                }
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < TOL {
                dependent = true;
                break;
            }
            v.iter_mut().for_each(|x| *x /= norm);
            added.push(v);
        }
        if dependent {
            out.push(i);
        } else {
            basis.extend(added);
        }
    }
    out
}

/// Generalized variance inflation factors, determinant-ratio form:
/// `GVIF_j = det(R_jj) det(R_-j) / det(R)`. Equals `1 / (1 - R²_j)` for a
/// single column. Returns `(gvif, df)` per active predictor (None if inactive).
pub fn gvif(preds: &[Predictor], active: &[bool]) -> Vec<Option<(f64, usize)>> {
    let mut cols: Vec<&Vec<f64>> = Vec::new();
    let mut owner = Vec::new();
    for (i, p) in preds.iter().enumerate() {
        if active[i] {
            for c in &p.columns {
                cols.push(c);
                owner.push(i);
            }
        }
    }
    let k = cols.len();
    let std_cols: Vec<Vec<f64>> = cols.iter().map(|c| standardized(c)).collect();
    let r = Matrix::from_fn(k, k, |a, b| std_cols[a].iter().zip(&std_cols[b]).map(|(x, y)| x * y).sum());
    let det_all = determinant(&r);
    preds
        .iter()
        .enumerate()
        .map(|(i, _)| {
            if !active[i] {
                return None;
            }
            let inside: Vec<usize> = (0..k).filter(|&c| owner[c] == i).collect();
            let outside: Vec<usize> = (0..k).filter(|&c| owner[c] != i).collect();
            let d_in = determinant(&r.select_rows(&inside).select_columns(&inside));
            let d_out = determinant(&r.select_rows(&outside).select_columns(&outside));
            let g = if det_all > 0.0 { d_in * d_out / det_all } else { f64::INFINITY };
            Some((g, inside.len()))
        })
        .collect()
}

/// Screens predictors in order: constant, singular, pairwise |r| above the
/// threshold (dropping the member with larger mean |r| to the others, ties to
/// the later one), then iterated GVIF^(1/(2 df)) above the cutoff.
pub fn screen_multicollinearity(preds: &[Predictor], opts: ScreenOptions) -> Vec<DroppedFeature> {
    let mut active = vec![true; preds.len()];
    let mut dropped = Vec::new();

    for (i, p) in preds.iter().enumerate() {
        let constant = p.columns.is_empty() || p.columns.iter().all(|c| c.iter().all(|&x| x == c[0]));
        if constant {
            active[i] = false;
            dropped.push(DroppedFeature {
                name: p.name.clone(),
                reason: DropReason::Constant,
            });
        }
    }

    for i in singular_predictors(preds, &active) {
        active[i] = false;
        dropped.push(DroppedFeature {
            name: preds[i].name.clone(),
            reason: DropReason::Singular,
        });
    }

    // pairwise correlation screen over scalar predictors
    let scalar: Vec<usize> = (0..preds.len()).filter(|&i| preds[i].scalar && active[i]).collect();
    if scalar.len() >= 2 {
        let cols: Vec<Vec<f64>> = scalar.iter().map(|&i| preds[i].columns[0].clone()).collect();
        let corr = correlation_matrix(&cols).expect("scalar predictors share length").values;
        let mut alive = vec![true; scalar.len()];
        loop {
            let mut worst: Option<(usize, usize, f64)> = None;
            for a in 0..scalar.len() {
                for b in a + 1..scalar.len() {
                    let r = corr[(a, b)];
                    if alive[a] && alive[b] && r.abs() > opts.correlation_threshold && worst.is_none_or(|w| r.abs() > w.2.abs()) {
                        worst = Some((a, b, r));
                    }
                }
            }
            let Some((a, b, r)) = worst else { break };
            let mean_abs = |x: usize| {
                let others: Vec<f64> = (0..scalar.len())
                    .filter(|&o| o != x && alive[o])
                    .map(|o| corr[(x, o)].abs())
                    .collect();
                others.iter().sum::<f64>() / others.len() as f64
            };
            let (victim, partner) = if mean_abs(a) > mean_abs(b) { (a, b) } else { (b, a) };
            alive[victim] = false;
            active[scalar[victim]] = false;
            dropped.push(DroppedFeature {
                name: preds[scalar[victim]].name.clone(),
                reason: DropReason::Correlation {
                    partner: preds[scalar[partner]].name.clone(),
                    r,
                },
            });
        }
    }

    // iterated GVIF screen
    loop {
        if active.iter().filter(|a| **a).count() < 2 {
            break;
        }
        let scores = gvif(preds, &active);
        let mut worst: Option<(usize, f64, f64)> = None;
        for (i, s) in scores.iter().enumerate() {
            if let Some((g, df)) = *s {
                let adj = g.powf(1.0 / (2.0 * df as f64));
                if adj > opts.gvif_cutoff && worst.is_none_or(|w| adj >= w.2) {
                    worst = Some((i, g, adj));
                }
            }
        }
        let Some((i, g, adj)) = worst else { break };
        active[i] = false;
        dropped.push(DroppedFeature {
            name: preds[i].name.clone(),
            reason: DropReason::Gvif { gvif: g, adjusted: adj },
        });
    }
    dropped
}

// ---------------------------------------------------------------------------
// pipeline fit

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetTransform {
    Log,
    None,
}

/// How categorical features are encoded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coding {
    /// One indicator per training-observed level; no intercept column.
    /// Used by the neural network, forest and kNN.
    Full,
    /// Intercept plus indicators for all but the first observed level;
    /// configured features log-transformed. Used by the hedonic regression.
    Reference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessOptions {
    #[serde(default)]
    pub winsorization: Winsorization,
    #[serde(default = "default_corr")]
    pub correlation_threshold: f64,
    #[serde(default = "default_gvif")]
    pub gvif_cutoff: f64,
    /// Skip the multicollinearity screen entirely.
    #[serde(default)]
    pub skip_screen: bool,
    /// Numeric features entered as ln(1 + x) in the hedonic design.
    #[serde(default = "default_log_features")]
    pub hedonic_log_features: Vec<String>,
    #[serde(default = "default_target_transform")]
    pub target_transform: TargetTransform,
}

fn default_corr() -> f64 {
    0.8
}
fn default_gvif() -> f64 {
    2.24
}
fn default_log_features() -> Vec<String> {
    vec!["Lot Area".into(), "Living Area".into()]
}
fn default_target_transform() -> TargetTransform {
    TargetTransform::Log
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        PreprocessOptions {
            winsorization: Winsorization::default(),
            correlation_threshold: default_corr(),
            gvif_cutoff: default_gvif(),
            skip_screen: false,
            hedonic_log_features: default_log_features(),
            target_transform: default_target_transform(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: f64,
    pub std: f64,
}

impl Standardizer {
    fn fit(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Standardizer { mean, std: var.sqrt() }
    }

    pub fn apply(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureFit {
    pub name: String,
    /// Index into the dataset schema.
    pub column: usize,
    pub kind: ColumnKind,
    pub fill: FillValue,
    /// Winsorization caps (numeric only).
    #[serde(default)]
    pub caps: Option<(Option<f64>, Option<f64>)>,
    /// Standardization for full coding (numeric only).
    #[serde(default)]
    pub scale: Option<Standardizer>,
    /// Standardization for reference coding, after the optional log.
    #[serde(default)]
    pub hedonic_scale: Option<Standardizer>,
    #[serde(default)]
    pub hedonic_log: bool,
    /// Levels observed on training rows, in schema order (categorical only).
    #[serde(default)]
    pub levels: Vec<usize>,
    /// Level names matching `levels`.
    #[serde(default)]
    pub level_names: Vec<String>,
}

/// Everything estimated on the training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineFit {
    pub options: PreprocessOptions,
    /// Retained features in schema order.
    pub features: Vec<FeatureFit>,
    pub dropped_features: Vec<DroppedFeature>,
    pub target: String,
    pub target_column: usize,
    pub target_transform: TargetTransform,
    pub n_train: usize,
}

/// Which original feature (and level) a design column comes from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnProvenance {
    pub feature: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<String>,
}

impl ColumnProvenance {
    pub fn label(&self) -> String {
        match &self.level {
            Some(l) => format!("{}={}", self.feature, l),
            None => self.feature.clone(),
        }
    }
}

pub const INTERCEPT: &str = "(Intercept)";

/// Dense model input: features, target and per-column provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    pub x: Matrix,
    pub y: Vec<f64>,
    pub columns: Vec<ColumnProvenance>,
    pub intercept: bool,
    /// Dataset row index of each design row.
    pub row_ids: Vec<usize>,
}

impl DesignMatrix {
    pub fn new(x: Matrix, y: Vec<f64>, columns: Vec<ColumnProvenance>, intercept: bool) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::Dimension { expected: x.nrows(), got: y.len() });
        }
        if x.ncols() != columns.len() {
            return Err(Error::Dimension {
                expected: x.ncols(),
                got: columns.len(),
            });
        }
        if !x.is_finite() || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("design matrix contains non-finite values".into()));
        }
        let row_ids = (0..y.len()).collect();
        Ok(DesignMatrix {
            x,
            y,
            columns,
            intercept,
            row_ids,
        })
    }

    /// Unnamed design from raw columns; column `j` is labelled `x{j}`.
    pub fn from_xy(x: Matrix, y: Vec<f64>) -> Result<Self> {
        let columns = (0..x.ncols())
            .map(|j| ColumnProvenance {
                feature: format!("x{j}"),
                level: None,
            })
            .collect();
        Self::new(x, y, columns, false)
    }

    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.x.ncols()
    }

    pub fn select_rows(&self, rows: &[usize]) -> DesignMatrix {
        DesignMatrix {
            x: self.x.select_rows(rows),
            y: rows.iter().map(|&r| self.y[r]).collect(),
            columns: self.columns.clone(),
            intercept: self.intercept,
            row_ids: rows.iter().map(|&r| self.row_ids[r]).collect(),
        }
    }

    /// Original features and their design columns, in column order; the
    /// intercept is excluded.
    pub fn feature_groups(&self) -> Vec<(String, Vec<usize>)> {
        let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
        for (j, c) in self.columns.iter().enumerate() {
            if c.feature == INTERCEPT {
                continue;
            }
            match groups.iter_mut().find(|(f, _)| *f == c.feature) {
                Some((_, cols)) => cols.push(j),
                None => groups.push((c.feature.clone(), vec![j])),
            }
        }
        groups
    }

    pub fn labels(&self) -> Vec<String> {
        self.columns.iter().map(ColumnProvenance::label).collect()
    }
}

fn ln1p_checked(x: f64, name: &str) -> Result<f64> {
    if x <= -1.0 {
        return Err(Error::Data(format!("cannot log-transform value {x} of '{name}'")));
    }
    Ok(x.ln_1p())
}

impl PipelineFit {
    /// Estimates every preprocessing statistic from `train` rows.
    pub fn fit(ds: &Dataset, train: &[usize], options: &PreprocessOptions) -> Result<PipelineFit> {
        if train.is_empty() {
            return Err(Error::Data("pipeline fit needs at least one training row".into()));
        }
        let schema = ds.schema();
        let target_column = schema.target_index();
        let mut features = Vec::new();
        for col in schema.feature_indices() {
            let cs = &schema.columns[col];
            let fill = fit_fill_value(ds, col, train)?;
            let mut f = FeatureFit {
                name: cs.name.clone(),
                column: col,
                kind: cs.kind,
                fill,
                caps: None,
                scale: None,
                hedonic_scale: None,
                hedonic_log: false,
                levels: Vec::new(),
                level_names: Vec::new(),
            };
            match ds.column(col) {
                ColumnData::Numeric(v) => {
                    let FillValue::Number(fv) = fill else { unreachable!() };
                    let filled: Vec<Option<f64>> = v.iter().map(|c| Some(c.unwrap_or(fv))).collect();
                    if cs.kind == ColumnKind::Numeric {
                        let caps = winsor_limits(&filled, train, options.winsorization).expect("filled column");
                        let train_vals: Vec<f64> = train.iter().map(|&r| clip(filled[r].unwrap(), caps)).collect();
                        f.caps = Some(caps);
                        f.scale = Some(Standardizer::fit(&train_vals));
                        f.hedonic_log = options.hedonic_log_features.contains(&cs.name);
                        let hed_vals = if f.hedonic_log {
                            train_vals.iter().map(|&x| ln1p_checked(x, &cs.name)).collect::<Result<Vec<_>>>()?
                        } else {
                            train_vals
                        };
                        f.hedonic_scale = Some(Standardizer::fit(&hed_vals));
                    }
                }
                ColumnData::Categorical(v) => {
                    let FillValue::Level(fl) = fill else { unreachable!() };
                    let filled: Vec<Option<usize>> = v.iter().map(|c| Some(c.unwrap_or(fl))).collect();
                    f.levels = level_counts(&filled, train).into_keys().collect();
                    f.level_names = f.levels.iter().map(|&l| cs.levels[l].clone()).collect();
                }
            }
            features.push(f);
        }

        let mut fit = PipelineFit {
            options: options.clone(),
            features,
            dropped_features: Vec::new(),
            target: schema.columns[target_column].name.clone(),
            target_column,
            target_transform: options.target_transform,
            n_train: train.len(),
        };

        if !options.skip_screen {
            let preds = fit.screen_predictors(ds, train);
            let dropped = screen_multicollinearity(
                &preds,
                ScreenOptions {
                    correlation_threshold: options.correlation_threshold,
                    gvif_cutoff: options.gvif_cutoff,
                },
            );
            fit.features.retain(|f| !dropped.iter().any(|d| d.name == f.name));
            fit.dropped_features = dropped;
        }
        Ok(fit)
    }

    /// Imputed and winsorized training values of every feature, with
    /// categoricals in reference coding.
    fn screen_predictors(&self, ds: &Dataset, train: &[usize]) -> Vec<Predictor> {
        self.features
            .iter()
            .map(|f| {
                let columns = match ds.column(f.column) {
                    ColumnData::Numeric(v) => {
                        let FillValue::Number(fv) = f.fill else { unreachable!() };
                        let caps = f.caps.unwrap_or((None, None));
                        vec![train.iter().map(|&r| clip(v[r].unwrap_or(fv), caps)).collect()]
                    }
                    ColumnData::Categorical(v) => {
                        let FillValue::Level(fl) = f.fill else { unreachable!() };
                        f.levels
                            .iter()
                            .skip(1)
                            .map(|&l| train.iter().map(|&r| f64::from(u8::from(v[r].unwrap_or(fl) == l))).collect())
                            .collect()
                    }
                };
                Predictor {
                    name: f.name.clone(),
                    columns,
                    scalar: f.kind != ColumnKind::Categorical,
                }
            })
            .collect()
    }

    pub fn feature(&self, name: &str) -> Option<&FeatureFit> {
        self.features.iter().find(|f| f.name == name)
    }

    /// Column layout of a design under `coding`.
    pub fn provenance(&self, coding: Coding) -> Vec<ColumnProvenance> {
        let mut cols = Vec::new();
        if coding == Coding::Reference {
            cols.push(ColumnProvenance {
                feature: INTERCEPT.into(),
                level: None,
            });
        }
        for f in &self.features {
            match f.kind {
                ColumnKind::Categorical => {
                    let skip = usize::from(coding == Coding::Reference);
                    for name in f.level_names.iter().skip(skip) {
                        cols.push(ColumnProvenance {
                            feature: f.name.clone(),
                            level: Some(name.clone()),
                        });
                    }
                }
                _ => cols.push(ColumnProvenance {
                    feature: f.name.clone(),
                    level: None,
                }),
            }
        }
        cols
    }

    /// Builds the design matrix for `rows` of `ds` using fitted statistics only.
    pub fn transform(&self, ds: &Dataset, rows: &[usize], coding: Coding) -> Result<DesignMatrix> {
        let schema = ds.schema();
        if schema.target_index() != self.target_column || schema.columns[self.target_column].name != self.target {
            return Err(Error::Data("dataset schema does not match the pipeline fit".into()));
        }
        let columns = self.provenance(coding);
        let p = columns.len();
        let mut x = Matrix::zeros(rows.len(), p);
        let mut j = 0;
        if coding == Coding::Reference {
            for i in 0..rows.len() {
                x[(i, 0)] = 1.0;
            }
            j = 1;
        }
        for f in &self.features {
            if schema.columns.get(f.column).map(|c| &c.name) != Some(&f.name) {
                return Err(Error::Data(format!("feature '{}' not found at its fitted position", f.name)));
            }
            match (f.kind, ds.column(f.column)) {
                (ColumnKind::Numeric, ColumnData::Numeric(v)) => {
                    let FillValue::Number(fv) = f.fill else { unreachable!() };
                    let (scale, log) = match coding {
                        Coding::Full => (f.scale.expect("numeric scale"), false),
                        Coding::Reference => (f.hedonic_scale.expect("numeric scale"), f.hedonic_log),
                    };
                    if scale.std == 0.0 || !scale.std.is_finite() {
                        return Err(Error::Data(format!("feature '{}' has zero training variance", f.name)));
                    }
                    for (i, &r) in rows.iter().enumerate() {
                        let mut val = clip(v[r].unwrap_or(fv), f.caps.unwrap_or((None, None)));
                        if log {
                            val = ln1p_checked(val, &f.name)?;
                        }
                        x[(i, j)] = scale.apply(val);
                    }
                    j += 1;
                }
                (ColumnKind::Binary, ColumnData::Numeric(v)) => {
                    let FillValue::Number(fv) = f.fill else { unreachable!() };
                    for (i, &r) in rows.iter().enumerate() {
                        x[(i, j)] = v[r].unwrap_or(fv);
                    }
                    j += 1;
                }
                (ColumnKind::Categorical, ColumnData::Categorical(v)) => {
                    let FillValue::Level(fl) = f.fill else { unreachable!() };
                    let skip = usize::from(coding == Coding::Reference);
                    let coded = &f.levels[skip.min(f.levels.len())..];
                    for (i, &r) in rows.iter().enumerate() {
                        let l = v[r].unwrap_or(fl);
                        // unseen levels leave the whole block at zero
                        if let Some(k) = coded.iter().position(|&c| c == l) {
                            x[(i, j + k)] = 1.0;
                        }
                    }
                    j += coded.len();
                }
                _ => return Err(Error::Data(format!("feature '{}' storage changed kind", f.name))),
            }
        }
        debug_assert_eq!(j, p);

        let raw_y = ds.column(self.target_column).as_numeric().expect("numeric target");
        let mut y = Vec::with_capacity(rows.len());
        for &r in rows {
            let v = raw_y[r].ok_or_else(|| Error::Cell {
                row: r + 1,
                column: self.target.clone(),
                message: "missing target value".into(),
            })?;
            y.push(match self.target_transform {
                TargetTransform::Log if v <= 0.0 => {
                    return Err(Error::Cell {
                        row: r + 1,
                        column: self.target.clone(),
                        message: format!("non-positive price {v} under log transform"),
                    })
                }
                TargetTransform::Log => v.ln(),
                TargetTransform::None => v,
            });
        }
        let mut dm = DesignMatrix::new(x, y, columns, coding == Coding::Reference)?;
        dm.row_ids = rows.to_vec();
        Ok(dm)
    }

    /// Converts a value on the original scale of numeric feature `name` to
    /// its full-coding design value.
    pub fn to_design_scale(&self, name: &str, value: f64) -> Option<f64> {
        let f = self.feature(name)?;
        f.scale.map(|s| s.apply(value))
    }

    /// Inverse of [`Self::to_design_scale`].
    pub fn to_original_scale(&self, name: &str, z: f64) -> Option<f64> {
        let f = self.feature(name)?;
        f.scale.map(|s| s.invert(z))
    }

    /// Names of numeric features still present after screening.
    pub fn numeric_features(&self) -> Vec<String> {
        self.features
            .iter()
            .filter(|f| f.kind == ColumnKind::Numeric)
            .map(|f| f.name.clone())
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

/// Correlation matrix of numeric and binary features over training rows
/// after imputation and winsorization, with feature names.
pub fn feature_correlations(ds: &Dataset, train: &[usize], winsor: Winsorization) -> Result<(Vec<String>, CorrelationMatrix)> {
    let imputed = winsorize(&impute(ds, train)?, train, winsor)?;
    let mut names = Vec::new();
    let mut cols = Vec::new();
    for col in imputed.schema().feature_indices() {
        let cs = &imputed.schema().columns[col];
        if let ColumnData::Numeric(v) = imputed.column(col) {
            names.push(cs.name.clone());
            cols.push(train.iter().map(|&r| v[r].expect("imputed")).collect());
        }
    }
    Ok((names, correlation_matrix(&cols)?))
}

/// Level frequencies over rows, by level name; convenience for reports.
pub fn level_frequencies(ds: &Dataset, col: usize, rows: &[usize]) -> BTreeMap<String, usize> {
    let cs = &ds.schema().columns[col];
    match (cs.role, ds.column(col)) {
        (ColumnRole::Feature, ColumnData::Categorical(v)) => level_counts(v, rows)
            .into_iter()
            .map(|(l, c)| (cs.levels[l].clone(), c))
            .collect(),
        _ => BTreeMap::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ColumnSchema, Schema};

    fn ds_from(cols: Vec<(ColumnSchema, ColumnData)>) -> Dataset {
        let (schema, data): (Vec<_>, Vec<_>) = cols.into_iter().unzip();
        Dataset::new(Schema::new(schema).unwrap(), data).unwrap()
    }

    fn target(n: usize) -> (ColumnSchema, ColumnData) {
        (
            ColumnSchema::numeric("price", ColumnRole::Target, ""),
            ColumnData::Numeric((0..n).map(|i| Some(100.0 + i as f64)).collect()),
        )
    }

    #[test]
    fn mean_imputation() {
        let ds = ds_from(vec![
            target(3),
            (
                ColumnSchema::numeric("a", ColumnRole::Feature, ""),
                ColumnData::Numeric(vec![Some(2.0), None, Some(4.0)]),
            ),
        ]);
        let out = impute(&ds, &[0, 1, 2]).unwrap();
        assert_eq!(out.column(1).as_numeric().unwrap(), &[Some(2.0), Some(3.0), Some(4.0)]);
        assert!(!out.has_missing());
    }

    #[test]
    fn binary_mode_imputation() {
        let ds = ds_from(vec![
            target(4),
            (
                ColumnSchema::binary("pool"),
                ColumnData::Numeric(vec![Some(1.0), Some(1.0), Some(0.0), None]),
            ),
        ]);
        let out = impute(&ds, &[0, 1, 2, 3]).unwrap();
        assert_eq!(out.column(1).as_numeric().unwrap()[3], Some(1.0));
    }

    #[test]
    fn mode_tie_goes_to_smallest_level_name() {
        // levels declared out of lexicographic order so schema order != name order
        let ds = ds_from(vec![
            target(5),
            (
                ColumnSchema::categorical("c", &["B", "A"]),
                ColumnData::Categorical(vec![Some(0), Some(0), Some(1), Some(1), None]),
            ),
        ]);
        // exhaustive frequency count
        let mut freq = BTreeMap::new();
        for l in [Some(0), Some(0), Some(1), Some(1)].into_iter().flatten() {
            *freq.entry(["B", "A"][l]).or_insert(0) += 1;
        }
        assert_eq!(freq["A"], freq["B"]);
        let out = impute(&ds, &[0, 1, 2, 3, 4]).unwrap();
        assert_eq!(out.column(1).as_categorical().unwrap()[4], Some(1)); // "A"
    }

    #[test]
    fn all_missing_on_train_is_an_error() {
        let ds = ds_from(vec![
            target(3),
            (
                ColumnSchema::numeric("lot", ColumnRole::Feature, ""),
                ColumnData::Numeric(vec![None, None, Some(1.0)]),
            ),
        ]);
        let err = impute(&ds, &[0, 1]).unwrap_err();
        assert!(err.to_string().contains("lot"));
    }

    #[test]
    fn quantile_and_winsorization() {
        let sorted: Vec<f64> = (1..=20).map(f64::from).collect();
        assert!((quantile_linear(&sorted, 0.95) - 19.05).abs() < 1e-12);

        let ds = ds_from(vec![
            target(20),
            (
                ColumnSchema::numeric("a", ColumnRole::Feature, ""),
                ColumnData::Numeric((1..=20).map(|i| Some(f64::from(i))).collect()),
            ),
        ]);
        let rows: Vec<usize> = (0..20).collect();
        let w = winsorize(&ds, &rows, Winsorization::default()).unwrap();
        let v = w.column(1).as_numeric().unwrap();
        assert!((v[19].unwrap() - 19.05).abs() < 1e-12);
        assert_eq!(v[18], Some(19.0));
        assert_eq!(v[0], Some(1.0));
    }

    #[test]
    fn winsorization_degenerate_and_boundary() {
        let flat = vec![Some(3.0); 10];
        let rows: Vec<usize> = (0..10).collect();
        let lim = winsor_limits(&flat, &rows, Winsorization::default()).unwrap();
        assert_eq!(clip(3.0, lim), 3.0);
        // a value exactly at the cap stays put
        let vals: Vec<Option<f64>> = [1.0, 2.0, 3.0, 3.0, 3.0].iter().map(|&x| Some(x)).collect();
        let lim = winsor_limits(&vals, &[0, 1, 2, 3, 4], Winsorization::default()).unwrap();
        assert_eq!(lim.1, Some(3.0));
        assert_eq!(clip(3.0, lim), 3.0);
    }

    #[test]
    fn two_sided_winsorization() {
        let vals: Vec<Option<f64>> = (1..=20).map(|i| Some(f64::from(i))).collect();
        let rows: Vec<usize> = (0..20).collect();
        let lim = winsor_limits(&vals, &rows, Winsorization::TwoSided { lower: 0.05, upper: 0.95 }).unwrap();
        assert!((lim.0.unwrap() - 1.95).abs() < 1e-12);
        assert_eq!(clip(1.0, lim), lim.0.unwrap());
    }

    #[test]
    fn correlation_examples() {
        let c = correlation_matrix(&[vec![1.0, 2.0, 3.0], vec![3.0, 2.0, 1.0]]).unwrap();
        assert_eq!(c.values[(0, 0)], 1.0);
        assert!((c.values[(0, 1)] + 1.0).abs() < 1e-15);
        // by hand: dx = (-1.5,-.5,.5,1.5), dy = (-1.5,.5,-.5,1.5); sxy = 4, sxx = syy = 5
        let d = correlation_matrix(&[vec![1.0, 2.0, 3.0, 4.0], vec![1.0, 3.0, 2.0, 4.0]]).unwrap();
        assert!((d.values[(0, 1)] - 0.8).abs() < 1e-15);
        let k = correlation_matrix(&[vec![1.0, 1.0, 1.0], vec![1.0, 2.0, 3.0]]).unwrap();
        assert!(k.constant[0] && !k.constant[1]);
        assert!(k.values[(0, 1)].is_nan());
    }

    fn scalar(name: &str, v: Vec<f64>) -> Predictor {
        Predictor {
            name: name.into(),
            columns: vec![v],
            scalar: true,
        }
    }

    #[test]
    fn orthogonal_predictors_have_unit_vif() {
        let preds = [
            scalar("a", vec![1.0, -1.0, 1.0, -1.0]),
            scalar("b", vec![1.0, 1.0, -1.0, -1.0]),
        ];
        let g = gvif(&preds, &[true, true]);
        assert!((g[0].unwrap().0 - 1.0).abs() < 1e-12);
        assert!((g[1].unwrap().0 - 1.0).abs() < 1e-12);
        assert!(screen_multicollinearity(&preds, ScreenOptions::default()).is_empty());
    }

    #[test]
    fn duplicated_predictor_dropped_as_singular() {
        let a = vec![1.0, 4.0, 2.0, 8.0, 5.0];
        let preds = [scalar("a", a.clone()), scalar("b", vec![3.0, 1.0, 4.0, 1.0, 5.0]), scalar("a copy", a)];
        let d = screen_multicollinearity(&preds, ScreenOptions::default());
        assert_eq!(
            d,
            vec![DroppedFeature {
                name: "a copy".into(),
                reason: DropReason::Singular
            }]
        );
    }

    #[test]
    fn moderate_correlation_vif() {
        // construct two columns with r = 0.6 exactly: y = 0.6 x + 0.8 z, x ⟂ z, unit norm, centered
        let x = [1.0, -1.0, 1.0, -1.0];
        let z = [1.0, 1.0, -1.0, -1.0];
        let y: Vec<f64> = x.iter().zip(&z).map(|(a, b)| 0.6 * a + 0.8 * b).collect();
        assert!((pearson(&x, &y).unwrap() - 0.6).abs() < 1e-12);
        let preds = [scalar("x", x.to_vec()), scalar("y", y)];
        let g = gvif(&preds, &[true, true]);
        for s in g {
            assert!((s.unwrap().0 - 1.5625).abs() < 1e-12);
        }
        assert!(screen_multicollinearity(&preds, ScreenOptions::default()).is_empty());
    }

    #[test]
    fn high_correlation_drops_the_more_connected_member() {
        // a and b correlate strongly; b also correlates with c, so b goes
        let a = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];
        let b = vec![1.2, 1.9, 3.3, 3.8, 5.1, 6.3, 6.8, 8.1];
        let c = vec![2.0, 1.0, 4.0, 3.0, 6.0, 5.0, 8.0, 7.0];
        let preds = [scalar("a", a), scalar("b", b), scalar("c", c)];
        let d = screen_multicollinearity(
            &preds,
            ScreenOptions {
                correlation_threshold: 0.8,
                gvif_cutoff: 1e9,
            },
        );
        assert!(!d.is_empty());
        assert!(matches!(d[0].reason, DropReason::Correlation { .. }));
    }

    #[test]
    fn categorical_gvif_matches_vif_for_two_levels() {
        // a two-level categorical has one dummy column; GVIF reduces to VIF
        let dummy = vec![0.0, 1.0, 0.0, 1.0, 1.0, 0.0];
        let num = vec![0.5, 1.7, 0.2, 1.1, 2.0, 0.9];
        let preds = [
            Predictor {
                name: "cat".into(),
                columns: vec![dummy.clone()],
                scalar: false,
            },
            scalar("num", num.clone()),
        ];
        let r = pearson(&dummy, &num).unwrap();
        let g = gvif(&preds, &[true, true]);
        assert!((g[0].unwrap().0 - 1.0 / (1.0 - r * r)).abs() < 1e-10);
    }

    fn region_ds() -> Dataset {
        ds_from(vec![
            (
                ColumnSchema::numeric("price", ColumnRole::Target, ""),
                ColumnData::Numeric(vec![Some(896_332.0), Some(500_000.0), Some(700_000.0)]),
            ),
            (
                ColumnSchema::numeric("x", ColumnRole::Feature, ""),
                ColumnData::Numeric(vec![Some(1.0), Some(2.0), Some(3.0)]),
            ),
            (
                ColumnSchema::categorical("Region", &["Central", "North", "South", "East", "Gunbarrel", "Rural"]),
                ColumnData::Categorical(vec![Some(1), Some(0), Some(2)]),
            ),
        ])
    }

    fn no_screen() -> PreprocessOptions {
        PreprocessOptions {
            winsorization: Winsorization::Off,
            skip_screen: true,
            hedonic_log_features: vec![],
            ..PreprocessOptions::default()
        }
    }

    #[test]
    fn zscores_onehot_and_log_target() {
        let ds = region_ds();
        let fit = PipelineFit::fit(&ds, &[0, 1, 2], &no_screen()).unwrap();
        let dm = fit.transform(&ds, &[0, 1, 2], Coding::Full).unwrap();
        assert_eq!(dm.x.column(0), vec![-1.0, 0.0, 1.0]);
        assert_eq!(dm.x.row(0)[1..].to_vec(), vec![0.0, 1.0, 0.0]);
        assert!((dm.y[0] - 896_332f64.ln()).abs() < 1e-12);
        assert!((dm.y[0] - 13.706).abs() < 5e-4);

        let href = fit.transform(&ds, &[0], Coding::Reference).unwrap();
        assert_eq!(href.columns[0].feature, INTERCEPT);
        assert_eq!(href.x.row(0), &[1.0, -1.0, 1.0, 0.0]);
    }

    #[test]
    fn full_region_level_set_coding() {
        // all six levels observed: North → (0,1,0,0,0,0); reference drops Central
        let ds = ds_from(vec![
            (
                ColumnSchema::numeric("price", ColumnRole::Target, ""),
                ColumnData::Numeric((0..6).map(|i| Some(1.0 + i as f64)).collect()),
            ),
            (
                ColumnSchema::categorical("Region", &["Central", "North", "South", "East", "Gunbarrel", "Rural"]),
                ColumnData::Categorical((0..6).map(Some).collect()),
            ),
        ]);
        let rows: Vec<usize> = (0..6).collect();
        let fit = PipelineFit::fit(&ds, &rows, &no_screen()).unwrap();
        let full = fit.transform(&ds, &[1], Coding::Full).unwrap();
        assert_eq!(full.x.row(0), &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let reference = fit.transform(&ds, &[1], Coding::Reference).unwrap();
        assert_eq!(reference.x.row(0), &[1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(reference.columns[1].level.as_deref(), Some("North"));
    }

    #[test]
    fn zero_variance_and_bad_price_errors() {
        let ds = ds_from(vec![
            (
                ColumnSchema::numeric("price", ColumnRole::Target, ""),
                ColumnData::Numeric(vec![Some(1.0), Some(-2.0), Some(3.0)]),
            ),
            (
                ColumnSchema::numeric("x", ColumnRole::Feature, ""),
                ColumnData::Numeric(vec![Some(1.0), Some(1.0), Some(2.0)]),
            ),
        ]);
        let fit = PipelineFit::fit(&ds, &[0, 1], &no_screen()).unwrap();
        assert!(fit.transform(&ds, &[0], Coding::Full).unwrap_err().to_string().contains("variance"));
        let fit = PipelineFit::fit(&ds, &[0, 1, 2], &no_screen()).unwrap();
        assert!(fit.transform(&ds, &[1], Coding::Full).unwrap_err().to_string().contains("non-positive"));
    }
}
