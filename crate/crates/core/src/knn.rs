//! Exact k-nearest-neighbours regression by brute-force scan.
//!
//! Cost is O(n_train · n_query · p); there is no index structure.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "metric", rename_all = "lowercase")]
pub enum Distance {
    #[default]
    Euclidean,
    Manhattan,
    Minkowski {
        p: f64,
    },
    Chebyshev,
}

impl Distance {
    pub fn validate(&self) -> Result<()> {
        if let Distance::Minkowski { p } = *self {
            if !(p > 0.0 && p.is_finite()) {
                return Err(Error::Config(format!("minkowski exponent must be positive, got {p}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnnConfig {
    pub k: usize,
    #[serde(default)]
    pub distance: Distance,
}

impl Default for KnnConfig {
    fn default() -> Self {
        KnnConfig {
            k: 7,
            distance: Distance::Euclidean,
        }
    }
}

pub fn distance(a: &[f64], b: &[f64], metric: Distance) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(distance_unchecked(a, b, metric))
}

fn distance_unchecked(a: &[f64], b: &[f64], metric: Distance) -> f64 {
    let diffs = a.iter().zip(b).map(|(x, y)| (x - y).abs());
    match metric {
        Distance::Euclidean => diffs.map(|d| d * d).sum::<f64>().sqrt(),
        Distance::Manhattan => diffs.sum(),
        Distance::Minkowski { p } => diffs.map(|d| d.powf(p)).sum::<f64>().powf(1.0 / p),
        Distance::Chebyshev => diffs.fold(0.0, f64::max),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnFit {
    pub config: KnnConfig,
    x_train: Matrix,
    y_train: Vec<f64>,
}

impl KnnFit {
    /// Stores owned copies of the training data.
    pub fn fit(cfg: KnnConfig, x: &Matrix, y: &[f64]) -> Result<KnnFit> {
        cfg.distance.validate()?;
        if x.nrows() != y.len() {
            return Err(Error::Dimension {
                expected: x.nrows(),
                got: y.len(),
            });
        }
        if cfg.k == 0 || cfg.k > y.len() {
            return Err(Error::Model(format!(
                "k = {} must be between 1 and the number of training rows ({})",
                cfg.k,
                y.len()
            )));
        }
        Ok(KnnFit {
            config: cfg,
            x_train: x.clone(),
            y_train: y.to_vec(),
        })
    }

    pub fn n_train(&self) -> usize {
        self.y_train.len()
    }

    /// Indices of the k nearest training rows, nearest first; equal
    /// distances are ordered by training index.
    pub fn neighbors(&self, query: &[f64]) -> Result<Vec<usize>> {
        if query.len() != self.x_train.ncols() {
            return Err(Error::Dimension {
                expected: self.x_train.ncols(),
                got: query.len(),
            });
        }
        let mut d: Vec<(f64, usize)> = self
            .x_train
            .rows()
            .enumerate()
            .map(|(i, r)| (distance_unchecked(r, query, self.config.distance), i))
            .collect();
        let k = self.config.k;
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < d.len() {
            d.select_nth_unstable_by(k - 1, cmp);
            d.truncate(k);
        }
        d.sort_unstable_by(cmp);
        Ok(d.into_iter().map(|(_, i)| i).collect())
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        x.rows()
            .map(|q| {
                let nb = self.neighbors(q)?;
                Ok(nb.iter().map(|&i| self.y_train[i]).sum::<f64>() / nb.len() as f64)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_distances() {
        let (a, b) = ([0.0, 0.0], [3.0, 4.0]);
        assert_eq!(distance(&a, &b, Distance::Euclidean).unwrap(), 5.0);
        assert_eq!(distance(&a, &b, Distance::Manhattan).unwrap(), 7.0);
        assert_eq!(distance(&a, &b, Distance::Chebyshev).unwrap(), 4.0);
        let m = distance(&[0.0, 0.0], &[1.0, 1.0], Distance::Minkowski { p: 3.0 }).unwrap();
        assert!((m - 2f64.powf(1.0 / 3.0)).abs() < 1e-15);
        for metric in [Distance::Euclidean, Distance::Manhattan, Distance::Chebyshev, Distance::Minkowski { p: 1.5 }] {
            assert_eq!(distance(&b, &b, metric).unwrap(), 0.0);
        }
        assert!(distance(&[1.0], &[1.0, 2.0], Distance::Euclidean).is_err());
    }

    #[test]
    fn k_one_on_training_row_returns_its_target() {
        let x = Matrix::from_rows(&[[0.0, 0.0], [1.0, 0.0], [5.0, 5.0]]);
        let fit = KnnFit::fit(KnnConfig { k: 1, ..Default::default() }, &x, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(fit.predict(&Matrix::from_rows(&[[5.0, 5.0]])).unwrap(), vec![3.0]);
    }

    #[test]
    fn k_equal_n_gives_global_mean() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [4.0], [9.0]]);
        let y = [1.0, 2.0, 3.0, 10.0];
        let fit = KnnFit::fit(KnnConfig { k: 4, ..Default::default() }, &x, &y).unwrap();
        for p in fit.predict(&Matrix::from_rows(&[[-100.0], [3.3]])).unwrap() {
            assert_eq!(p, 4.0);
        }
    }

    #[test]
    fn ties_go_to_lower_index() {
        // rows 1 and 2 are equidistant from the query
        let x = Matrix::from_rows(&[[10.0], [1.0], [-1.0]]);
        let fit = KnnFit::fit(KnnConfig { k: 1, ..Default::default() }, &x, &[0.0, 5.0, 7.0]).unwrap();
        assert_eq!(fit.neighbors(&[0.0]).unwrap(), vec![1]);
    }

    #[test]
    fn k_larger_than_training_set_is_an_error() {
        let x = Matrix::from_rows(&[[0.0], [1.0]]);
        assert!(KnnFit::fit(KnnConfig { k: 3, ..Default::default() }, &x, &[1.0, 2.0]).is_err());
        assert!(KnnFit::fit(KnnConfig { k: 0, ..Default::default() }, &x, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn stored_copy_is_independent_of_source() {
        let mut x = Matrix::from_rows(&[[0.0], [1.0]]);
        let fit = KnnFit::fit(KnnConfig { k: 1, ..Default::default() }, &x, &[1.0, 2.0]).unwrap();
        x.as_mut_slice().fill(100.0);
        assert_eq!(fit.predict(&Matrix::from_rows(&[[0.1]])).unwrap(), vec![1.0]);
    }
}
