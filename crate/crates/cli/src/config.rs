//! Run configuration: one TOML document, unknown keys rejected.

use std::fs;
use std::path::{Path, PathBuf};

use housebench::data::Dataset;
use housebench::eval::ExperimentPlan;
use housebench::preprocess::PreprocessOptions;
use housebench::synth::{self, GeneratorConfig, SyntheticData};
use housebench::{Error, Result};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileSource {
    pub csv: PathBuf,
    pub schema: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImportanceMode {
    /// Permute on the validation fold (any model).
    #[default]
    Validation,
    /// Permute among each tree's out-of-bag rows.
    Oob,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImportanceOptions {
    pub repeats: usize,
    pub seed: u64,
    pub mode: ImportanceMode,
}

impl Default for ImportanceOptions {
    fn default() -> Self {
        ImportanceOptions {
            repeats: 10,
            seed: 0,
            mode: ImportanceMode::Validation,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdpOptions {
    /// Grid size when no explicit grid is given.
    pub points: usize,
    /// How many top-ranked numeric features to plot.
    pub top: usize,
    /// Explicit features; overrides the importance ranking.
    pub features: Option<Vec<String>>,
    /// Explicit grid on the original feature scale.
    pub grid: Option<Vec<f64>>,
}

impl Default for PdpOptions {
    fn default() -> Self {
        PdpOptions {
            points: 20,
            top: 3,
            features: None,
            grid: None,
        }
    }
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    #[serde(default = "yes")]
    pub plots: bool,
    pub data: Option<FileSource>,
    pub synth: Option<GeneratorConfig>,
    #[serde(default)]
    pub preprocess: PreprocessOptions,
    #[serde(default)]
    pub plan: ExperimentPlan,
    #[serde(default)]
    pub importance: ImportanceOptions,
    #[serde(default)]
    pub pdp: PdpOptions,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

pub enum Source {
    File(Dataset),
    Synthetic(SyntheticData),
}

impl Source {
    pub fn dataset(&self) -> &Dataset {
        match self {
            Source::File(d) => d,
            Source::Synthetic(s) => &s.dataset,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml_str(&s, &base).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.data, &self.synth) {
            (Some(_), Some(_)) => return Err(Error::Config("give either [data] or [synth], not both".into())),
            (None, None) => return Err(Error::Config("no data source: add a [data] or [synth] section".into())),
            _ => {}
        }
        if let Some(s) = &self.synth {
            s.validate()?;
        }
        self.plan.validate()
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.resolve(&self.out_dir)
    }

    pub fn load_source(&self) -> Result<Source> {
        match (&self.data, &self.synth) {
            (Some(f), None) => Ok(Source::File(Dataset::load_csv(&self.resolve(&f.csv), &self.resolve(&f.schema))?)),
            (None, Some(g)) => Ok(Source::Synthetic(synth::generate(g)?)),
            _ => Err(Error::Config("exactly one data source is required".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_synthetic_config() {
        let c = RunConfig::from_toml_str("[synth]\nn = 100\nseed = 3\n", Path::new(".")).unwrap();
        assert_eq!(c.plan.repeats, 20);
        assert!(c.plots);
        assert_eq!(c.out_dir, PathBuf::from("out"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = RunConfig::from_toml_str("[synth]\nn = 100\nseed = 3\nbogus = 1\n", Path::new(".")).unwrap_err();
        assert!(e.to_string().contains("bogus"), "{e}");
        assert!(RunConfig::from_toml_str("colour = 1\n[synth]\nn = 100\nseed = 3\n", Path::new(".")).is_err());
    }

    #[test]
    fn exactly_one_source() {
        assert!(RunConfig::from_toml_str("plots = false\n", Path::new(".")).is_err());
        let both = "[synth]\nn = 100\nseed = 3\n[data]\ncsv = \"a.csv\"\nschema = \"a.toml\"\n";
        assert!(RunConfig::from_toml_str(both, Path::new(".")).is_err());
    }

    #[test]
    fn plan_and_grids_parse() {
        let s = r#"
[synth]
n = 200
seed = 1

[plan]
models = ["hp", "knn"]
repeats = 2
tuner = { mode = "random", samples = 2 }

[plan.grids.knn]
k = [1, 3, 5]
distance = { metric = "minkowski", p = 3.0 }
"#;
        let c = RunConfig::from_toml_str(s, Path::new("/tmp")).unwrap();
        assert_eq!(c.plan.repeats, 2);
        assert_eq!(c.plan.grids.knn.k, vec![1, 3, 5]);
        assert_eq!(c.resolve(Path::new("x.csv")), PathBuf::from("/tmp/x.csv"));
    }
}
