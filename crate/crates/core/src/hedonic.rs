//! Hedonic price regression: OLS with White heteroskedasticity-consistent
//! inference and White's test for heteroskedasticity.

use serde::{Deserialize, Serialize};

use crate::data::csv_field;
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Qr};
use crate::preprocess::{DesignMatrix, INTERCEPT};
use crate::stats;

/// Relative tolerance on |R_kk| for declaring a design column dependent.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub beta: Vec<f64>,
    pub residuals: Vec<f64>,
    pub fitted: Vec<f64>,
    pub xtx_inverse: Matrix,
    pub df_resid: usize,
    /// Column labels of the design the fit came from.
    pub labels: Vec<String>,
}

/// Least squares via Householder QR; `(X'X)⁻¹` is recovered from R.
pub fn fit_ols(dm: &DesignMatrix) -> Result<OlsFit> {
    let (n, p) = (dm.n_rows(), dm.n_cols());
    if n <= p {
        return Err(Error::Model(format!("OLS needs more rows than columns ({n} <= {p})")));
    }
    let qr = Qr::new(&dm.x, RANK_TOL)?;
    if !qr.is_full_rank() {
        let labels = dm.labels();
        return Err(Error::RankDeficient(
            qr.dependent_columns().iter().map(|&j| labels[j].clone()).collect(),
        ));
    }
    let beta = qr.solve(&dm.y)?;
    let fitted = dm.x.matvec(&beta)?;
    let residuals = dm.y.iter().zip(&fitted).map(|(y, f)| y - f).collect();
    Ok(OlsFit {
        beta,
        residuals,
        fitted,
        xtx_inverse: qr.gram_inverse()?,
        df_resid: n - p,
        labels: dm.labels(),
    })
}

impl OlsFit {
    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.ncols() != self.beta.len() {
            return Err(Error::Dimension {
                expected: self.beta.len(),
                got: x.ncols(),
            });
        }
        x.matvec(&self.beta)
    }

    /// Classical (homoskedastic) covariance `s² (X'X)⁻¹`.
    pub fn classical_covariance(&self) -> Matrix {
        let s2 = self.residuals.iter().map(|e| e * e).sum::<f64>() / self.df_resid as f64;
        let mut c = self.xtx_inverse.clone();
        c.as_mut_slice().iter_mut().for_each(|v| *v *= s2);
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HcType {
    /// `ω_i = e_i²`
    #[default]
    Hc0,
    /// `ω_i = n / (n - p) · e_i²`
    Hc1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustInference {
    pub hc_type: HcType,
    pub covariance: Matrix,
    pub std_errors: Vec<f64>,
    pub t_stats: Vec<f64>,
    /// Two-sided, standard normal reference.
    pub p_values: Vec<f64>,
}

/// White sandwich `(X'X)⁻¹ X' diag(ω) X (X'X)⁻¹`.
pub fn white_covariance(fit: &OlsFit, dm: &DesignMatrix, hc: HcType) -> Result<RobustInference> {
    let (n, p) = (dm.n_rows(), dm.n_cols());
    if fit.residuals.len() != n || fit.beta.len() != p {
        return Err(Error::Dimension {
            expected: fit.residuals.len(),
            got: n,
        });
    }
    let scale = match hc {
        HcType::Hc0 => 1.0,
        HcType::Hc1 => n as f64 / (n - p) as f64,
    };
    let omega: Vec<f64> = fit.residuals.iter().map(|e| scale * e * e).collect();
    let meat = dm.x.weighted_gram(Some(&omega));
    let bread = &fit.xtx_inverse;
    let mut cov = bread.matmul(&meat)?.matmul(bread)?;
    // symmetrize away rounding asymmetry
    for i in 0..p {
        for j in 0..i {
            let m = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov[(i, j)] = m;
            cov[(j, i)] = m;
        }
    }
    let std_errors: Vec<f64> = (0..p).map(|j| cov[(j, j)].max(0.0).sqrt()).collect();
    let t_stats: Vec<f64> = fit.beta.iter().zip(&std_errors).map(|(b, s)| b / s).collect();
    let p_values = t_stats.iter().map(|&t| stats::normal_two_sided_p(t)).collect();
    Ok(RobustInference {
        hc_type: hc,
        covariance: cov,
        std_errors,
        t_stats,
        p_values,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhiteTest {
    /// `n · R²` of the auxiliary regression.
    pub statistic: f64,
    pub p_value: f64,
    pub df: usize,
    /// Auxiliary terms removed for being constant or collinear.
    pub dropped_terms: Vec<String>,
}

/// Regressors entering cross-products in the auxiliary regression.
pub const WHITE_MAX_CROSS: usize = 10;

fn variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n
}

/// White's test: regress e² on levels, squares and (capped) cross-products of
/// the non-intercept regressors; statistic `n R²` against χ²(p_aux − 1).
pub fn white_test(fit: &OlsFit, dm: &DesignMatrix) -> Result<WhiteTest> {
    let n = dm.n_rows();
    let labels = dm.labels();
    let regressors: Vec<usize> = (0..dm.n_cols())
        .filter(|&j| dm.columns[j].feature != INTERCEPT)
        .filter(|&j| variance(&dm.x.column(j)) > 0.0)
        .collect();
    let cols: Vec<Vec<f64>> = regressors.iter().map(|&j| dm.x.column(j)).collect();

    let mut terms: Vec<(String, Vec<f64>)> = vec![("1".into(), vec![1.0; n])];
    for (k, c) in cols.iter().enumerate() {
        terms.push((labels[regressors[k]].clone(), c.clone()));
    }
    for (k, c) in cols.iter().enumerate() {
        terms.push((format!("{}^2", labels[regressors[k]]), c.iter().map(|x| x * x).collect()));
    }
    let mut by_var: Vec<usize> = (0..cols.len()).collect();
    by_var.sort_by(|&a, &b| variance(&cols[b]).total_cmp(&variance(&cols[a])).then(a.cmp(&b)));
    by_var.truncate(WHITE_MAX_CROSS);
    by_var.sort_unstable();
    for (ai, &a) in by_var.iter().enumerate() {
        for &b in &by_var[ai + 1..] {
            terms.push((
                format!("{}*{}", labels[regressors[a]], labels[regressors[b]]),
                cols[a].iter().zip(&cols[b]).map(|(x, y)| x * y).collect(),
            ));
        }
    }

    // greedily keep terms that add rank (indicator squares duplicate levels, etc.)
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut kept: Vec<usize> = Vec::new();
    let mut dropped_terms = Vec::new();
    for (t, (name, col)) in terms.iter().enumerate() {
        let norm0 = col.iter().map(|x| x * x).sum::<f64>().sqrt();
        if kept.len() + 1 >= n || norm0 == 0.0 {
            dropped_terms.push(name.clone());
            continue;
        }
        let mut v = col.clone();
        for _ in 0..2 {
            for b in &basis {
                let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm <= 1e-9 * norm0 {
            dropped_terms.push(name.clone());
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        basis.push(v);
        kept.push(t);
    }
    // fitted values = projection of e² onto the orthonormal auxiliary basis
    let e2: Vec<f64> = fit.residuals.iter().map(|e| e * e).collect();
    let mut pred = vec![0.0; n];
    for b in &basis {
        let d: f64 = e2.iter().zip(b).map(|(x, y)| x * y).sum();
        pred.iter_mut().zip(b).for_each(|(p, y)| *p += d * y);
    }
    let mean = e2.iter().sum::<f64>() / n as f64;
    let sst: f64 = e2.iter().map(|v| (v - mean) * (v - mean)).sum();
    let sse: f64 = e2.iter().zip(&pred).map(|(v, f)| (v - f) * (v - f)).sum();
    // a constant response has no variation to explain
    let r2 = if sst <= 1e-24 * (1.0 + mean * mean) * n as f64 {
        0.0
    } else {
        (1.0 - sse / sst).max(0.0)
    };
    let df = kept.len() - 1;
    let statistic = n as f64 * r2;
    let p_value = if df == 0 { 1.0 } else { stats::chi2_sf(statistic, df as f64) };
    Ok(WhiteTest {
        statistic,
        p_value,
        df,
        dropped_terms,
    })
}

/// Significance stars: *** p < 0.01, ** p < 0.05, * p < 0.1.
pub fn stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.1 {
        "*"
    } else {
        ""
    }
}

/// Coefficient table (`variable,coefficient,robust_se,t,p,stars`) as CSV text.
pub fn coefficient_table_csv(fit: &OlsFit, inf: &RobustInference) -> String {
    let mut out = String::from("variable,coefficient,robust_se,t,p_value,stars\n");
    for j in 0..fit.beta.len() {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.4},{:.6},{}\n",
            csv_field(&fit.labels[j]),
            fit.beta[j],
            inf.std_errors[j],
            inf.t_stats[j],
            inf.p_values[j],
            stars(inf.p_values[j])
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn design(rows: &[&[f64]], y: &[f64]) -> DesignMatrix {
        DesignMatrix::from_xy(Matrix::from_rows(rows), y.to_vec()).unwrap()
    }

    #[test]
    fn exact_line() {
        let dm = design(&[&[1.0, 0.0], &[1.0, 1.0], &[1.0, 2.0]], &[1.0, 3.0, 5.0]);
        let fit = fit_ols(&dm).unwrap();
        assert!((fit.beta[0] - 1.0).abs() < 1e-12 && (fit.beta[1] - 2.0).abs() < 1e-12);
        assert!(fit.residuals.iter().all(|e| e.abs() < 1e-12));
    }

    #[test]
    fn slope_zero_when_y_orthogonal() {
        // centered x, y constant except along a direction orthogonal to x
        let dm = design(&[&[1.0, -1.0], &[1.0, 0.0], &[1.0, 1.0], &[1.0, 0.0]], &[2.0, 1.0, 2.0, 3.0]);
        let fit = fit_ols(&dm).unwrap();
        assert!(fit.beta[1].abs() < 1e-12);
    }

    #[test]
    fn rank_deficiency_names_columns() {
        let x = Matrix::from_rows(&[[1.0, 2.0, 4.0], [1.0, 3.0, 6.0], [1.0, 5.0, 10.0], [1.0, 1.0, 2.0]]);
        let dm = DesignMatrix::from_xy(x, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        match fit_ols(&dm) {
            Err(Error::RankDeficient(cols)) => assert_eq!(cols, vec!["x2".to_string()]),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn zero_residuals_give_zero_covariance() {
        let dm = design(&[&[1.0, 0.0], &[1.0, 1.0], &[1.0, 2.0]], &[1.0, 3.0, 5.0]);
        let mut fit = fit_ols(&dm).unwrap();
        fit.residuals = vec![0.0; 3];
        let inf = white_covariance(&fit, &dm, HcType::Hc0).unwrap();
        assert!(inf.covariance.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn orthonormal_unit_residuals_reduce_to_bread() {
        // X columns orthonormal (X'X = I), residuals ±1 ⇒ X' diag(1) X = I ⇒ cov = I
        let h = 0.5;
        let x = Matrix::from_rows(&[[h, h], [h, -h], [h, h], [h, -h]]);
        let dm = DesignMatrix::from_xy(x, vec![0.0; 4]).unwrap();
        let mut fit = fit_ols(&dm).unwrap();
        fit.residuals = vec![1.0, -1.0, 1.0, -1.0];
        let inf = white_covariance(&fit, &dm, HcType::Hc0).unwrap();
        assert!(inf.covariance.max_abs_diff(&fit.xtx_inverse) < 1e-14);
        assert!(inf.covariance.max_abs_diff(&Matrix::identity(2)) < 1e-14);
    }

    #[test]
    fn hc1_scales_hc0() {
        let dm = design(&[&[1.0, 0.1], &[1.0, 1.3], &[1.0, 2.2], &[1.0, 2.9], &[1.0, 4.4]], &[1.0, 2.9, 5.3, 5.8, 9.7]);
        let fit = fit_ols(&dm).unwrap();
        let h0 = white_covariance(&fit, &dm, HcType::Hc0).unwrap();
        let h1 = white_covariance(&fit, &dm, HcType::Hc1).unwrap();
        let f = 5.0 / 3.0;
        for (a, b) in h0.covariance.as_slice().iter().zip(h1.covariance.as_slice()) {
            assert!((a * f - b).abs() < 1e-14);
        }
    }

    #[test]
    fn predict_examples() {
        let dm = design(&[&[1.0, 0.0], &[1.0, 1.0], &[1.0, 2.0], &[1.0, 4.0]], &[1.0, 3.2, 4.9, 9.1]);
        let fit = fit_ols(&dm).unwrap();
        let again = fit.predict(&dm.x).unwrap();
        assert_eq!(again, fit.fitted);
        let base = fit.predict(&Matrix::from_rows(&[[1.0, 0.0]])).unwrap();
        assert_eq!(base[0], fit.beta[0]);
        let one = fit.predict(&Matrix::from_rows(&[[1.0, 2.5]])).unwrap();
        assert!((one[0] - (fit.beta[0] + 2.5 * fit.beta[1])).abs() < 1e-12);
        assert!(fit.predict(&Matrix::from_rows(&[[1.0, 2.0, 3.0]])).is_err());
    }

    #[test]
    fn constant_squared_residuals_give_zero_statistic() {
        let n = 40;
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![1.0, (i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()]).collect();
        let dm = DesignMatrix::from_xy(Matrix::from_rows(&rows), vec![0.0; n]).unwrap();
        let mut fit = fit_ols(&dm).unwrap();
        fit.residuals = (0..n).map(|i| if i % 2 == 0 { 0.5 } else { -0.5 }).collect();
        let mut dm = dm;
        dm.columns[0].feature = INTERCEPT.into();
        let w = white_test(&fit, &dm).unwrap();
        assert_eq!(w.statistic, 0.0);
        assert_eq!(w.p_value, 1.0);
    }

    #[test]
    fn stars_thresholds() {
        assert_eq!(stars(0.009), "***");
        assert_eq!(stars(0.03), "**");
        assert_eq!(stars(0.07), "*");
        assert_eq!(stars(0.2), "");
    }
}
