//! Typed tabular dataset: schema, column storage with missing values,
//! CSV ingestion, descriptive statistics and seeded splitting.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
    /// Numeric 0/1 indicator.
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnRole {
    Feature,
    Target,
    Identifier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default = "default_role")]
    pub role: ColumnRole,
    /// Ordered level names; categorical columns only. The first level is the
    /// reference (base) level in reference coding.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<String>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub units: String,
}

fn default_role() -> ColumnRole {
    ColumnRole::Feature
}

impl ColumnSchema {
    pub fn numeric(name: &str, role: ColumnRole, units: &str) -> Self {
        ColumnSchema {
            name: name.to_string(),
            kind: ColumnKind::Numeric,
            role,
            levels: Vec::new(),
            units: units.to_string(),
        }
    }

    pub fn binary(name: &str) -> Self {
        ColumnSchema {
            name: name.to_string(),
            kind: ColumnKind::Binary,
            role: ColumnRole::Feature,
            levels: Vec::new(),
            units: String::new(),
        }
    }

    pub fn categorical(name: &str, levels: &[&str]) -> Self {
        ColumnSchema {
            name: name.to_string(),
            kind: ColumnKind::Categorical,
            role: ColumnRole::Feature,
            levels: levels.iter().map(|s| s.to_string()).collect(),
            units: String::new(),
        }
    }
}

/// Ordered list of column descriptions. Serialized as the schema sidecar:
///
/// ```toml
/// [[columns]]
/// name = "Region"
/// kind = "categorical"      # numeric | categorical | binary
/// role = "feature"          # feature | target | identifier (default feature)
/// levels = ["Central", "North"]
/// units = ""                # optional
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    pub columns: Vec<ColumnSchema>,
}

impl Schema {
    pub fn new(columns: Vec<ColumnSchema>) -> Result<Self> {
        let s = Schema { columns };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for c in &self.columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column name '{}'", c.name)));
            }
            match c.kind {
                ColumnKind::Categorical => {
                    if c.levels.is_empty() {
                        return Err(Error::Schema(format!("categorical column '{}' declares no levels", c.name)));
                    }
                    let mut lv = HashSet::new();
                    for l in &c.levels {
                        if !lv.insert(l.as_str()) {
                            return Err(Error::Schema(format!("column '{}' repeats level '{l}'", c.name)));
                        }
                    }
                }
                _ if !c.levels.is_empty() => {
                    return Err(Error::Schema(format!("non-categorical column '{}' declares levels", c.name)));
                }
                _ => {}
            }
        }
        let targets: Vec<_> = self.columns.iter().filter(|c| c.role == ColumnRole::Target).collect();
        match targets.as_slice() {
            [t] if t.kind == ColumnKind::Numeric => Ok(()),
            [t] => Err(Error::Schema(format!("target column '{}' must be numeric", t.name))),
            [] => Err(Error::Schema("schema has no target column".into())),
            _ => Err(Error::Schema("schema has more than one target column".into())),
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let schema: Schema = toml::from_str(s).map_err(|e| Error::Schema(e.to_string()))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("schema serializes")
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn target_index(&self) -> usize {
        self.columns
            .iter()
            .position(|c| c.role == ColumnRole::Target)
            .expect("validated schema has a target")
    }

    /// Indices of feature-role columns in schema order.
    pub fn feature_indices(&self) -> Vec<usize> {
        (0..self.columns.len())
            .filter(|&i| self.columns[i].role == ColumnRole::Feature)
            .collect()
    }
}

/// Column storage; `None` marks a missing cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ColumnData {
    /// Numeric and binary columns.
    Numeric(Vec<Option<f64>>),
    /// Level indices into the schema's `levels`.
    Categorical(Vec<Option<usize>>),
}

impl ColumnData {
    pub fn len(&self) -> usize {
        match self {
            ColumnData::Numeric(v) => v.len(),
            ColumnData::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_missing(&self, row: usize) -> bool {
        match self {
            ColumnData::Numeric(v) => v[row].is_none(),
            ColumnData::Categorical(v) => v[row].is_none(),
        }
    }

    pub fn as_numeric(&self) -> Option<&[Option<f64>]> {
        match self {
            ColumnData::Numeric(v) => Some(v),
            ColumnData::Categorical(_) => None,
        }
    }

    pub fn as_categorical(&self) -> Option<&[Option<usize>]> {
        match self {
            ColumnData::Categorical(v) => Some(v),
            ColumnData::Numeric(_) => None,
        }
    }

    fn select(&self, rows: &[usize]) -> ColumnData {
        match self {
            ColumnData::Numeric(v) => ColumnData::Numeric(rows.iter().map(|&i| v[i]).collect()),
            ColumnData::Categorical(v) => ColumnData::Categorical(rows.iter().map(|&i| v[i]).collect()),
        }
    }
}

/// A single cell value, as seen through [`Dataset::cell`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Missing,
    Number(f64),
    Level(usize),
}

/// Immutable typed table: schema plus one column of cells per schema entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    schema: Schema,
    columns: Vec<ColumnData>,
    n_rows: usize,
}

impl Dataset {
    pub fn new(schema: Schema, columns: Vec<ColumnData>) -> Result<Self> {
        schema.validate()?;
        if columns.len() != schema.columns.len() {
            return Err(Error::Data(format!(
                "{} columns supplied for a schema of {}",
                columns.len(),
                schema.columns.len()
            )));
        }
        let n_rows = columns.first().map_or(0, ColumnData::len);
        if n_rows == 0 {
            return Err(Error::Data("dataset has no rows".into()));
        }
        for (c, data) in schema.columns.iter().zip(&columns) {
            if data.len() != n_rows {
                return Err(Error::Data(format!("column '{}' has {} cells, expected {n_rows}", c.name, data.len())));
            }
            match (c.kind, data) {
                (ColumnKind::Numeric, ColumnData::Numeric(v)) => {
                    if let Some(row) = v.iter().position(|x| matches!(x, Some(x) if !x.is_finite())) {
                        return Err(Error::Cell {
                            row: row + 1,
                            column: c.name.clone(),
                            message: "non-finite value".into(),
                        });
                    }
                }
                (ColumnKind::Binary, ColumnData::Numeric(v)) => {
                    if let Some(row) = v.iter().position(|x| matches!(x, Some(x) if *x != 0.0 && *x != 1.0)) {
                        return Err(Error::Cell {
                            row: row + 1,
                            column: c.name.clone(),
                            message: "binary column holds a value other than 0 or 1".into(),
                        });
                    }
                }
                (ColumnKind::Categorical, ColumnData::Categorical(v)) => {
                    if let Some(row) = v.iter().position(|x| matches!(x, Some(l) if *l >= c.levels.len())) {
                        return Err(Error::Cell {
                            row: row + 1,
                            column: c.name.clone(),
                            message: "level index out of range".into(),
                        });
                    }
                }
                _ => {
                    return Err(Error::Data(format!("column '{}' storage does not match its kind", c.name)));
                }
            }
        }
        Ok(Dataset {
            schema,
            columns,
            n_rows,
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn column(&self, idx: usize) -> &ColumnData {
        &self.columns[idx]
    }

    pub fn column_by_name(&self, name: &str) -> Option<&ColumnData> {
        self.schema.index_of(name).map(|i| &self.columns[i])
    }

    pub fn columns(&self) -> &[ColumnData] {
        &self.columns
    }

    pub fn cell(&self, row: usize, col: usize) -> Cell {
        match &self.columns[col] {
            ColumnData::Numeric(v) => v[row].map_or(Cell::Missing, Cell::Number),
            ColumnData::Categorical(v) => v[row].map_or(Cell::Missing, Cell::Level),
        }
    }

    /// Per-column missing flags, `mask[col][row]`.
    pub fn missing_mask(&self) -> Vec<Vec<bool>> {
        self.columns
            .iter()
            .map(|c| (0..self.n_rows).map(|r| c.is_missing(r)).collect())
            .collect()
    }

    pub fn has_missing(&self) -> bool {
        self.columns.iter().any(|c| (0..self.n_rows).any(|r| c.is_missing(r)))
    }

    /// Target column values; errors if any target cell is missing.
    pub fn target(&self) -> Result<Vec<f64>> {
        let t = self.schema.target_index();
        let name = &self.schema.columns[t].name;
        self.columns[t]
            .as_numeric()
            .expect("target is numeric")
            .iter()
            .enumerate()
            .map(|(r, v)| {
                v.ok_or_else(|| Error::Cell {
                    row: r + 1,
                    column: name.clone(),
                    message: "missing target value".into(),
                })
            })
            .collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Result<Dataset> {
        Dataset::new(self.schema.clone(), self.columns.iter().map(|c| c.select(rows)).collect())
    }

    /// Copy with one column's storage replaced.
    pub fn with_column(&self, idx: usize, data: ColumnData) -> Result<Dataset> {
        let mut cols = self.columns.clone();
        cols[idx] = data;
        Dataset::new(self.schema.clone(), cols)
    }

    /// Reads a CSV file against a schema sidecar.
    pub fn load_csv(path: &Path, schema_path: &Path) -> Result<Dataset> {
        let schema = Schema::load(schema_path)?;
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file, schema)
    }

    /// Parses CSV text from any reader. Empty cells and `NA` are missing.
    pub fn read_csv<R: std::io::Read>(reader: R, schema: Schema) -> Result<Dataset> {
        schema.validate()?;
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers().map_err(|e| Error::Data(e.to_string()))?.clone();

        let mut seen = HashSet::new();
        let mut col_of_field = Vec::with_capacity(headers.len());
        for h in headers.iter() {
            let h = h.trim();
            if !seen.insert(h.to_string()) {
                return Err(Error::Cell {
                    row: 0,
                    column: h.to_string(),
                    message: "duplicate header".into(),
                });
            }
            let idx = schema.index_of(h).ok_or_else(|| Error::Cell {
                row: 0,
                column: h.to_string(),
                message: "column not declared in schema".into(),
            })?;
            col_of_field.push(idx);
        }
        if let Some(c) = schema.columns.iter().find(|c| !seen.contains(&c.name)) {
            return Err(Error::Cell {
                row: 0,
                column: c.name.clone(),
                message: "schema column absent from CSV header".into(),
            });
        }

        let level_maps: Vec<HashMap<&str, usize>> = schema
            .columns
            .iter()
            .map(|c| c.levels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect())
            .collect();
        let mut columns: Vec<ColumnData> = schema
            .columns
            .iter()
            .map(|c| match c.kind {
                ColumnKind::Categorical => ColumnData::Categorical(Vec::new()),
                _ => ColumnData::Numeric(Vec::new()),
            })
            .collect();

        for (r, record) in rdr.records().enumerate() {
            let row = r + 1;
            let record = record.map_err(|e| Error::Data(format!("row {row}: {e}")))?;
            if record.len() != col_of_field.len() {
                return Err(Error::Data(format!(
                    "row {row}: {} fields, header has {}",
                    record.len(),
                    col_of_field.len()
                )));
            }
            for (field, &ci) in record.iter().zip(&col_of_field) {
                let raw = field.trim();
                let missing = raw.is_empty() || raw == "NA";
                let c = &schema.columns[ci];
                match &mut columns[ci] {
                    ColumnData::Numeric(v) => {
                        if missing {
                            v.push(None);
                            continue;
                        }
                        let x: f64 = raw.parse().map_err(|_| Error::Cell {
                            row,
                            column: c.name.clone(),
                            message: format!("unparseable numeric value '{raw}'"),
                        })?;
                        if !x.is_finite() {
                            return Err(Error::Cell {
                                row,
                                column: c.name.clone(),
                                message: format!("non-finite value '{raw}'"),
                            });
                        }
                        v.push(Some(x));
                    }
                    ColumnData::Categorical(v) => {
                        if missing {
                            v.push(None);
                            continue;
                        }
                        let l = level_maps[ci].get(raw).ok_or_else(|| Error::Cell {
                            row,
                            column: c.name.clone(),
                            message: format!("value '{raw}' is not one of the declared levels {:?}", c.levels),
                        })?;
                        v.push(Some(*l));
                    }
                }
            }
        }
        Dataset::new(schema, columns)
    }

    /// Writes the dataset as CSV (header = schema names, missing = empty cell).
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let err = |e: csv::Error| Error::Data(e.to_string());
        w.write_record(self.schema.columns.iter().map(|c| c.name.as_str())).map_err(err)?;
        for r in 0..self.n_rows {
            let rec: Vec<String> = (0..self.columns.len())
                .map(|c| match self.cell(r, c) {
                    Cell::Missing => String::new(),
                    Cell::Number(x) => format!("{x}"),
                    Cell::Level(l) => self.schema.columns[c].levels[l].clone(),
                })
                .collect();
            w.write_record(&rec).map_err(err)?;
        }
        w.flush().map_err(|e| Error::Data(e.to_string()))?;
        Ok(())
    }

    pub fn save(&self, csv_path: &Path, schema_path: &Path) -> Result<()> {
        let f = fs::File::create(csv_path).map_err(|e| Error::io(csv_path, e))?;
        self.write_csv(std::io::BufWriter::new(f))?;
        fs::write(schema_path, self.schema.to_toml_string()).map_err(|e| Error::io(schema_path, e))
    }
}

// ---------------------------------------------------------------------------
// descriptive statistics

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericSummary {
    pub name: String,
    pub count: usize,
    pub missing: usize,
    /// `None` when every cell is missing.
    pub mean: Option<f64>,
    /// Sample standard deviation (n − 1 denominator); `None` below two values.
    pub std: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    /// `std / mean`, only when the mean is non-zero.
    pub cv: Option<f64>,
}

impl NumericSummary {
    /// CV as a whole-number percentage, e.g. `"76%"`.
    pub fn cv_percent(&self) -> Option<String> {
        self.cv.map(|cv| format!("{:.0}%", cv * 100.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelFrequency {
    pub level: String,
    pub frequency: usize,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalSummary {
    pub name: String,
    pub count: usize,
    pub missing: usize,
    pub levels: Vec<LevelFrequency>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptiveStats {
    pub n_rows: usize,
    pub numeric: Vec<NumericSummary>,
    pub categorical: Vec<CategoricalSummary>,
}

pub fn summarize_numeric(name: &str, values: impl IntoIterator<Item = Option<f64>>) -> NumericSummary {
    let mut present = Vec::new();
    let mut missing = 0;
    for v in values {
        match v {
            Some(x) => present.push(x),
            None => missing += 1,
        }
    }
    let n = present.len();
    let mean = (n > 0).then(|| present.iter().sum::<f64>() / n as f64);
    let std = mean.filter(|_| n > 1).map(|m| {
        let ss: f64 = present.iter().map(|x| (x - m) * (x - m)).sum();
        (ss / (n - 1) as f64).sqrt()
    });
    let min = present.iter().copied().reduce(f64::min);
    let max = present.iter().copied().reduce(f64::max);
    let cv = match (mean, std) {
        (Some(m), Some(s)) if m != 0.0 => Some(s / m),
        _ => None,
    };
    NumericSummary {
        name: name.to_string(),
        count: n,
        missing,
        mean,
        std,
        min,
        max,
        cv,
    }
}

/// Statistics over non-missing cells of every non-identifier column.
/// Binary columns are summarised as two-level categoricals ("0"/"1").
pub fn describe(ds: &Dataset) -> DescriptiveStats {
    let mut numeric = Vec::new();
    let mut categorical = Vec::new();
    for (c, data) in ds.schema().columns.iter().zip(ds.columns()) {
        if c.role == ColumnRole::Identifier {
            continue;
        }
        match (c.kind, data) {
            (ColumnKind::Numeric, ColumnData::Numeric(v)) => {
                numeric.push(summarize_numeric(&c.name, v.iter().copied()));
            }
            (ColumnKind::Binary, ColumnData::Numeric(v)) => {
                let codes = v.iter().map(|x| x.map(|x| x as usize));
                categorical.push(summarize_levels(&c.name, &["0".into(), "1".into()], codes));
            }
            (_, ColumnData::Categorical(v)) => {
                categorical.push(summarize_levels(&c.name, &c.levels, v.iter().copied()));
            }
            _ => unreachable!("validated dataset"),
        }
    }
    DescriptiveStats {
        n_rows: ds.n_rows(),
        numeric,
        categorical,
    }
}

fn summarize_levels(name: &str, levels: &[String], codes: impl Iterator<Item = Option<usize>>) -> CategoricalSummary {
    let mut counts = vec![0usize; levels.len()];
    let mut missing = 0;
    for c in codes {
        match c {
            Some(l) => counts[l] += 1,
            None => missing += 1,
        }
    }
    let total: usize = counts.iter().sum();
    CategoricalSummary {
        name: name.to_string(),
        count: total,
        missing,
        levels: levels
            .iter()
            .zip(&counts)
            .map(|(l, &f)| LevelFrequency {
                level: l.clone(),
                frequency: f,
                percent: if total == 0 { 0.0 } else { 100.0 * f as f64 / total as f64 },
            })
            .collect(),
    }
}

impl DescriptiveStats {
    /// Numeric table as CSV text.
    pub fn numeric_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x:.6}"));
        let mut out = String::from("variable,count,missing,mean,std,min,max,cv\n");
        for s in &self.numeric {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                csv_field(&s.name),
                s.count,
                s.missing,
                opt(s.mean),
                opt(s.std),
                opt(s.min),
                opt(s.max),
                s.cv_percent().unwrap_or_default()
            ));
        }
        out
    }

    /// Categorical table as CSV text.
    pub fn categorical_csv(&self) -> String {
        let mut out = String::from("variable,level,frequency,percent\n");
        for s in &self.categorical {
            for l in &s.levels {
                out.push_str(&format!(
                    "{},{},{},{:.2}\n",
                    csv_field(&s.name),
                    csv_field(&l.level),
                    l.frequency,
                    l.percent
                ));
            }
        }
        out
    }
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

// ---------------------------------------------------------------------------
// splitting

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.8,
            validation: 0.1,
            test: 0.1,
        }
    }
}

/// Partition sizes: train gets `floor(n * f_train)`, the rest is halved with
/// validation taking the odd element.
pub fn split_sizes(n: usize, fractions: SplitFractions) -> Result<(usize, usize, usize)> {
    let SplitFractions {
        train,
        validation,
        test,
    } = fractions;
    let ok = [train, validation, test].iter().all(|f| f.is_finite() && *f > 0.0);
    if !ok || ((train + validation + test) - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split fractions must be positive and sum to 1, got ({train}, {validation}, {test})"
        )));
    }
    // guard against 0.8 * 1018 = 814.4000000000001 style noise
    let n_train = ((n as f64) * train + 1e-9).floor() as usize;
    let rest = n.saturating_sub(n_train);
    let n_test = rest / 2;
    let n_val = rest - n_test;
    if n_train == 0 || n_val == 0 || n_test == 0 {
        return Err(Error::Data(format!(
            "split of {n} rows gives an empty partition ({n_train}/{n_val}/{n_test})"
        )));
    }
    Ok((n_train, n_val, n_test))
}

/// Seeded shuffle split of `0..n` into train/validation/test.
pub fn split(n: usize, fractions: SplitFractions, seed: u64) -> Result<SplitIndices> {
    let (n_train, n_val, _) = split_sizes(n, fractions)?;
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let test = idx.split_off(n_train + n_val);
    let validation = idx.split_off(n_train);
    Ok(SplitIndices {
        train: idx,
        validation,
        test,
        seed,
    })
}

/// Counts per level, keyed by level index, over the given rows.
pub(crate) fn level_counts(col: &[Option<usize>], rows: &[usize]) -> BTreeMap<usize, usize> {
    let mut m = BTreeMap::new();
    for &r in rows {
        if let Some(l) = col[r] {
            *m.entry(l).or_insert(0) += 1;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn region_schema() -> Schema {
        Schema::new(vec![
            ColumnSchema::numeric("Price", ColumnRole::Target, "USD"),
            ColumnSchema::numeric("Lot Area", ColumnRole::Feature, "SqFt"),
            ColumnSchema::categorical("Region", &["Central", "North", "South", "East", "Gunbarrel", "Rural"]),
        ])
        .unwrap()
    }

    #[test]
    fn empty_cell_is_flagged_missing() {
        let text = "Price,Lot Area,Region\n100,5000,Central\n200,,North\n300,7000,NA\n";
        let ds = Dataset::read_csv(text.as_bytes(), region_schema()).unwrap();
        let mask = ds.missing_mask();
        assert_eq!(mask[1], vec![false, true, false]);
        assert_eq!(mask[0], vec![false, false, false]);
        assert_eq!(mask[2], vec![false, false, true]);
    }

    #[test]
    fn out_of_level_value_is_rejected() {
        let text = "Price,Lot Area,Region\n100,5000,Westside\n";
        let err = Dataset::read_csv(text.as_bytes(), region_schema()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("Westside"), "{msg}");
        assert!(msg.contains("row 1"), "{msg}");
    }

    #[test]
    fn header_errors() {
        let dup = "Price,Price,Region\n1,2,North\n";
        assert!(Dataset::read_csv(dup.as_bytes(), region_schema()).unwrap_err().to_string().contains("duplicate"));
        let unknown = "Price,Lot Area,Region,Color\n1,2,North,red\n";
        assert!(Dataset::read_csv(unknown.as_bytes(), region_schema()).unwrap_err().to_string().contains("Color"));
        let bad_num = "Price,Lot Area,Region\n1,abc,North\n";
        let e = Dataset::read_csv(bad_num.as_bytes(), region_schema()).unwrap_err();
        assert!(matches!(e, Error::Cell { row: 1, ref column, .. } if column == "Lot Area"));
    }

    #[test]
    fn schema_rejects_bad_targets() {
        let two = Schema::new(vec![
            ColumnSchema::numeric("a", ColumnRole::Target, ""),
            ColumnSchema::numeric("b", ColumnRole::Target, ""),
        ]);
        assert!(two.is_err());
        let mut cat = ColumnSchema::categorical("a", &["x"]);
        cat.role = ColumnRole::Target;
        assert!(Schema::new(vec![cat]).is_err());
        let dup = Schema::new(vec![
            ColumnSchema::numeric("a", ColumnRole::Target, ""),
            ColumnSchema::numeric("a", ColumnRole::Feature, ""),
        ]);
        assert!(dup.is_err());
    }

    #[test]
    fn schema_toml_roundtrip() {
        let s = region_schema();
        assert_eq!(Schema::from_toml_str(&s.to_toml_string()).unwrap(), s);
        assert!(Schema::from_toml_str("[[columns]]\nname='a'\nkind='numeric'\nrole='target'\ncolour='x'\n").is_err());
    }

    #[test]
    fn describe_small_columns() {
        let s = summarize_numeric("x", [Some(1.0), Some(2.0), Some(3.0)]);
        assert_eq!(s.mean, Some(2.0));
        assert_eq!(s.std, Some(1.0));
        assert_eq!(s.cv, Some(0.5));

        let c = summarize_numeric("c", [Some(5.0); 3]);
        assert_eq!(c.std, Some(0.0));
        assert_eq!(c.cv, Some(0.0));

        let z = summarize_numeric("z", [Some(-1.0), Some(1.0)]);
        assert_eq!(z.cv, None);

        let m = summarize_numeric("m", [None, None]);
        assert_eq!((m.mean, m.std, m.cv), (None, None, None));
    }

    #[test]
    fn house_price_cv_renders_as_whole_percent() {
        let s = NumericSummary {
            name: "House Price".into(),
            count: 1018,
            missing: 0,
            mean: Some(896_332.0),
            std: Some(679_195.8),
            min: None,
            max: None,
            cv: Some(679_195.8 / 896_332.0),
        };
        assert!((s.cv.unwrap() - 0.758).abs() < 5e-4);
        assert_eq!(s.cv_percent().unwrap(), "76%");
    }

    #[test]
    fn categorical_percentages_sum_to_100() {
        let text = "Price,Lot Area,Region\n1,1,Central\n2,1,North\n3,1,North\n4,1,Rural\n5,1,East\n6,1,East\n7,1,East\n";
        let ds = Dataset::read_csv(text.as_bytes(), region_schema()).unwrap();
        let st = describe(&ds);
        let total: f64 = st.categorical[0].levels.iter().map(|l| l.percent).sum();
        assert!((total - 100.0).abs() < 0.01);
    }

    #[test]
    fn split_sizes_follow_floor_rule() {
        assert_eq!(split_sizes(1018, SplitFractions::default()).unwrap(), (814, 102, 102));
        assert_eq!(split_sizes(1000, SplitFractions::default()).unwrap(), (800, 100, 100));
        assert_eq!(split_sizes(11, SplitFractions::default()).unwrap(), (8, 2, 1));
        assert!(split_sizes(5, SplitFractions::default()).is_err());
        let bad = SplitFractions {
            train: 0.7,
            validation: 0.1,
            test: 0.1,
        };
        assert!(matches!(split_sizes(100, bad), Err(Error::Config(_))));
    }

    #[test]
    fn split_is_deterministic() {
        let a = split(10, SplitFractions::default(), 42).unwrap();
        let b = split(10, SplitFractions::default(), 42).unwrap();
        assert_eq!(a, b);
    }
}
