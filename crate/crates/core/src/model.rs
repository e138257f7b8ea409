//! Uniform fit/predict surface over the four model families.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ann::{AnnRegressor, NetworkConfig};
use crate::error::{Error, Result};
use crate::forest::{ForestConfig, ForestFit};
use crate::hedonic::{self, OlsFit};
use crate::knn::{KnnConfig, KnnFit};
use crate::linalg::Matrix;
use crate::preprocess::{Coding, DesignMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Hp,
    Ann,
    Rf,
    Knn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Hp, ModelKind::Ann, ModelKind::Rf, ModelKind::Knn];

    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Hp => "HP",
            ModelKind::Ann => "ANN",
            ModelKind::Rf => "RF",
            ModelKind::Knn => "kNN",
        }
    }

    /// Hedonic regression uses reference coding with an intercept; the
    /// learners take the full one-hot design.
    pub fn coding(self) -> Coding {
        match self {
            ModelKind::Hp => Coding::Reference,
            _ => Coding::Full,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One fully specified model (a single grid point).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum ModelSpec {
    Hp,
    Ann(NetworkConfig),
    Rf(ForestConfig),
    Knn(KnnConfig),
}

impl ModelSpec {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelSpec::Hp => ModelKind::Hp,
            ModelSpec::Ann(_) => ModelKind::Ann,
            ModelSpec::Rf(_) => ModelKind::Rf,
            ModelSpec::Knn(_) => ModelKind::Knn,
        }
    }

    /// Tunable hyperparameters as numbers, for reporting and averaging.
    pub fn hyperparameters(&self) -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        match self {
            ModelSpec::Hp => {}
            ModelSpec::Ann(c) => {
                m.insert("hidden_layers".into(), c.hidden_layers as f64);
                m.insert("units_per_layer".into(), c.units_per_layer as f64);
                m.insert("l2_lambda".into(), c.l2_lambda);
                m.insert("learning_rate".into(), c.learning_rate);
            }
            ModelSpec::Rf(c) => {
                m.insert("n_trees".into(), c.n_trees as f64);
                if let Some(mtry) = c.mtry {
                    m.insert("mtry".into(), mtry as f64);
                }
                m.insert("min_leaf".into(), c.min_leaf as f64);
            }
            ModelSpec::Knn(c) => {
                m.insert("k".into(), c.k as f64);
            }
        }
        m
    }

    /// Copy of this spec with hyperparameters replaced by (rounded where
    /// integral) values from `h`; missing keys keep their current values.
    pub fn with_hyperparameters(&self, h: &BTreeMap<String, f64>) -> ModelSpec {
        let int = |key: &str, cur: usize| h.get(key).map_or(cur, |v| v.round().max(1.0) as usize);
        let real = |key: &str, cur: f64| h.get(key).copied().unwrap_or(cur);
        match self {
            ModelSpec::Hp => ModelSpec::Hp,
            ModelSpec::Ann(c) => ModelSpec::Ann(NetworkConfig {
                hidden_layers: h.get("hidden_layers").map_or(c.hidden_layers, |v| v.round().max(0.0) as usize),
                units_per_layer: int("units_per_layer", c.units_per_layer),
                l2_lambda: real("l2_lambda", c.l2_lambda),
                learning_rate: real("learning_rate", c.learning_rate),
                ..c.clone()
            }),
            ModelSpec::Rf(c) => ModelSpec::Rf(ForestConfig {
                n_trees: int("n_trees", c.n_trees),
                mtry: c.mtry.map(|m| int("mtry", m)),
                min_leaf: int("min_leaf", c.min_leaf),
                ..*c
            }),
            ModelSpec::Knn(c) => ModelSpec::Knn(KnnConfig { k: int("k", c.k), ..*c }),
        }
    }

    /// Replaces the model's RNG seed (no-op for deterministic families).
    pub fn with_seed(&self, seed: u64) -> ModelSpec {
        match self {
            ModelSpec::Ann(c) => ModelSpec::Ann(NetworkConfig { seed, ..c.clone() }),
            ModelSpec::Rf(c) => ModelSpec::Rf(ForestConfig { seed, ..*c }),
            other => other.clone(),
        }
    }

    /// Fits on `train`; the network also uses `validation` for early stopping.
    pub fn fit(&self, train: &DesignMatrix, validation: &DesignMatrix) -> Result<ModelArtifact> {
        match self {
            ModelSpec::Hp => Ok(ModelArtifact::Hedonic(hedonic::fit_ols(train)?)),
            ModelSpec::Ann(c) => Ok(ModelArtifact::Ann(AnnRegressor::fit(c, &train.x, &train.y, &validation.x, &validation.y)?)),
            ModelSpec::Rf(c) => Ok(ModelArtifact::Forest(ForestFit::fit(*c, &train.x, &train.y)?)),
            ModelSpec::Knn(c) => Ok(ModelArtifact::Knn(KnnFit::fit(*c, &train.x, &train.y)?)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum ModelArtifact {
    Hedonic(OlsFit),
    Ann(AnnRegressor),
    Forest(ForestFit),
    Knn(KnnFit),
}

impl ModelArtifact {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelArtifact::Hedonic(_) => ModelKind::Hp,
            ModelArtifact::Ann(_) => ModelKind::Ann,
            ModelArtifact::Forest(_) => ModelKind::Rf,
            ModelArtifact::Knn(_) => ModelKind::Knn,
        }
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        let out = match self {
            ModelArtifact::Hedonic(f) => f.predict(x)?,
            ModelArtifact::Ann(a) => a.predict(x)?,
            ModelArtifact::Forest(f) => f.predict(x)?,
            ModelArtifact::Knn(k) => k.predict(x)?,
        };
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Model(format!("{} produced non-finite predictions", self.kind())));
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}
