use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::dist::{chi2_sf, t_sf, t_two_sided};

/// Ordinary least squares results. Index 0 of the coefficient vectors is
/// the intercept.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub coefficients: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub t_stats: Vec<f64>,
    /// Two-sided.
    pub p_values: Vec<f64>,
    pub r2: f64,
    pub adj_r2: f64,
    pub log_likelihood: f64,
    pub residuals: Vec<f64>,
    pub n: usize,
    pub rss: f64,
}

impl RegressionFit {
    /// Number of predictors, intercept excluded.
    pub fn predictors(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn df_resid(&self) -> usize {
        self.n - self.coefficients.len()
    }

    pub fn beta1(&self) -> f64 {
        self.coefficients[1]
    }

    pub fn p_beta1(&self) -> f64 {
        self.p_values[1]
    }
}

/// Fits `y = X β + ε` by Householder QR. `x` must contain the intercept
/// column.
pub fn ols_fit(y: &[f64], x: &DMatrix<f64>) -> Result<RegressionFit> {
    let n = y.len();
    let cols = x.ncols();
    if x.nrows() != n {
        return Err(Error::Shape(format!("design has {} rows for {n} responses", x.nrows())));
    }
    if n <= cols {
        return Err(Error::InsufficientData { n, params: cols });
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let scale = (0..cols).map(|j| x.column(j).norm()).fold(0.0, f64::max);
    if (0..cols).any(|j| r[(j, j)].abs() <= 1e-10 * scale.max(f64::MIN_POSITIVE)) {
        return Err(Error::SingularDesign);
    }
    let yv = DVector::from_column_slice(y);
    let qty = qr.q().transpose() * &yv;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or(Error::SingularDesign)?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(cols, cols))
        .ok_or(Error::SingularDesign)?;
    let xtx_inv = &r_inv * r_inv.transpose();

    let residuals: Vec<f64> = (&yv - x * &beta).iter().copied().collect();
    let rss: f64 = residuals.iter().map(|e| e * e).sum();
    let mean = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let df = (n - cols) as f64;
    let sigma2 = rss / df;

    let coefficients: Vec<f64> = beta.iter().copied().collect();
    let standard_errors: Vec<f64> = (0..cols).map(|j| (sigma2 * xtx_inv[(j, j)]).sqrt()).collect();
    let t_stats: Vec<f64> = coefficients
        .iter()
        .zip(&standard_errors)
        .map(|(b, se)| {
            if *se > 0.0 {
                b / se
            } else if *b == 0.0 {
                0.0
            } else {
                b.signum() * f64::INFINITY
            }
        })
        .collect();
    let p_values = t_stats.iter().map(|t| t_two_sided(*t, df)).collect();

    let r2 = if tss > 0.0 { 1.0 - rss / tss } else { 0.0 };
    let adj_r2 = 1.0 - (1.0 - r2) * (n as f64 - 1.0) / df;
    let nf = n as f64;
    let log_likelihood = -0.5 * nf * ((2.0 * std::f64::consts::PI).ln() + (rss / nf).ln() + 1.0);

    Ok(RegressionFit {
        coefficients,
        standard_errors,
        t_stats,
        p_values,
        r2,
        adj_r2,
        log_likelihood,
        residuals,
        n,
        rss,
    })
}

/// Design matrix with an intercept column followed by the given predictors.
pub fn design(predictors: &[&[f64]]) -> DMatrix<f64> {
    let n = predictors.first().map_or(0, |p| p.len());
    DMatrix::from_fn(n, predictors.len() + 1, |i, j| if j == 0 { 1.0 } else { predictors[j - 1][i] })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrtResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Likelihood-ratio test of a reduced model nested in a full one.
///
/// The statistic is clipped at 0, so `p ∈ (0, 1]`.
pub fn lrt(reduced: &RegressionFit, full: &RegressionFit) -> Result<LrtResult> {
    if full.n != reduced.n {
        return Err(Error::NotNested(format!("{} vs {} observations", reduced.n, full.n)));
    }
    if full.coefficients.len() <= reduced.coefficients.len() {
        return Err(Error::NotNested(format!(
            "full model has {} columns, reduced {}",
            full.coefficients.len(),
            reduced.coefficients.len()
        )));
    }
    let df = full.coefficients.len() - reduced.coefficients.len();
    let statistic = (2.0 * (full.log_likelihood - reduced.log_likelihood)).max(0.0);
    Ok(LrtResult {
        statistic,
        df,
        p_value: chi2_sf(statistic, df as f64),
    })
}

/// Step-down Holm–Bonferroni adjustment, returned in input order.
pub fn holm_bonferroni(p_values: &[f64]) -> Result<Vec<f64>> {
    if let Some(&bad) = p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidPValue(bad));
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]).then(a.cmp(&b)));
    let mut out = vec![0.0; m];
    let mut running: f64 = 0.0;
    for (rank, &k) in order.iter().enumerate() {
        running = running.max(((m - rank) as f64 * p_values[k]).min(1.0));
        out[k] = running;
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WelchTest {
    pub t: f64,
    pub df: f64,
    /// One-sided, alternative `mean(a) > mean(b)`.
    pub p_value: f64,
}

/// Welch two-sample t-test with the one-sided alternative `mean(a) > mean(b)`.
///
/// `None` when a sample has fewer than two values or both variances are 0.
pub fn welch_ttest_greater(a: &[f64], b: &[f64]) -> Option<WelchTest> {
    if a.len() < 2 || b.len() < 2 {
        return None;
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let sa = va / a.len() as f64;
    let sb = vb / b.len() as f64;
    let se2 = sa + sb;
    if se2 <= 0.0 {
        return None;
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (a.len() as f64 - 1.0) + sb * sb / (b.len() as f64 - 1.0));
    Some(WelchTest {
        t,
        df,
        p_value: t_sf(t, df),
    })
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
}
