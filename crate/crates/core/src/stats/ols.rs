use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{Result, StatsError};
use crate::mechanisms::MechanismKind;
use crate::metrics::EvalRecord;

pub const DESIGN_COLUMNS: [&str; 7] =
    ["constant", "log_size", "avg_words", "mechanism", "epsilon_level", "util_labels", "log_priv_labels"];

/// Label-set cardinalities of one dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSupport {
    pub utility: usize,
    pub privacy: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    /// Row-major, first column is the intercept.
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub column_names: Vec<String>,
}

impl DesignMatrix {
    pub fn new(x: Vec<Vec<f64>>, y: Vec<f64>, column_names: Vec<String>) -> Self {
        Self { x, y, column_names }
    }

    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn n_columns(&self) -> usize {
        self.column_names.len()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.x.iter().map(|r| r[j]).collect()
    }

    /// Removes non-intercept columns whose value never varies and returns
    /// their names.
    pub fn drop_constant_columns(&mut self) -> Vec<String> {
        let keep: Vec<bool> = (0..self.n_columns())
            .map(|j| j == 0 || self.x.iter().any(|r| r[j] != self.x[0][j]))
            .collect();
        let dropped = self
            .column_names
            .iter()
            .zip(&keep)
            .filter(|(_, k)| !**k)
            .map(|(n, _)| n.clone())
            .collect();
        for row in &mut self.x {
            let mut j = 0;
            row.retain(|_| {
                j += 1;
                keep[j - 1]
            });
        }
        let mut j = 0;
        self.column_names.retain(|_| {
            j += 1;
            keep[j - 1]
        });
        dropped
    }
}

/// Builds the regression design from non-baseline records. The target is the
/// average of the static and adaptive gains.
pub fn encode_design(records: &[EvalRecord], supports: &BTreeMap<String, LabelSupport>) -> Result<DesignMatrix> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for r in records.iter().filter(|r| !r.is_baseline()) {
        let support = supports.get(&r.dataset).ok_or_else(|| StatsError::UnknownDataset(r.dataset.clone()))?;
        let kind = MechanismKind::from_tag(&r.mechanism).ok_or_else(|| StatsError::UnknownMechanism(r.mechanism.clone()))?;
        if r.size == 0 {
            return Err(StatsError::NonPositiveLog { what: "size", value: 0.0 });
        }
        if support.privacy == 0 {
            return Err(StatsError::NonPositiveLog { what: "privacy label count", value: 0.0 });
        }
        let row = vec![
            1.0,
            (r.size as f64).ln(),
            r.avg_words,
            f64::from(kind.code()),
            f64::from(r.epsilon_level),
            support.utility as f64,
            (support.privacy as f64).ln(),
        ];
        let target = r.average_gamma();
        if row.iter().any(|v| !v.is_finite()) || !target.is_finite() {
            return Err(StatsError::NonFinite("design row"));
        }
        x.push(row);
        y.push(target);
    }
    Ok(DesignMatrix::new(x, y, DESIGN_COLUMNS.iter().map(|s| s.to_string()).collect()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub coef: f64,
    pub std_err: f64,
    pub t: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionSummary {
    pub coefficients: Vec<Coefficient>,
    pub r_squared: f64,
    pub n_obs: usize,
    pub df_resid: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dropped_columns: Vec<String>,
}

impl RegressionSummary {
    pub fn coef(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }

    pub fn to_table(&self) -> String {
        let width = self.coefficients.iter().map(|c| c.name.len()).max().unwrap_or(0).max(12);
        let mut out = String::new();
        let head = format!("R^2={:.3}", self.r_squared);
        let _ = writeln!(out, "{head:<width$} {:>10} {:>10} {:>10} {:>8}", "coef.", "std err", "t", "P>|t|");
        for c in &self.coefficients {
            let _ = writeln!(out, "{:<width$} {:>10.4} {:>10.3} {:>10.3} {:>8.3}", c.name, c.coef, c.std_err, c.t, c.p);
        }
        for d in &self.dropped_columns {
            let _ = writeln!(out, "(dropped constant column {d})");
        }
        out
    }
}

/// Ordinary least squares via QR. Standard errors use the unbiased residual
/// variance RSS/(n - k) where k counts the intercept. A saturated design
/// (n == k) still yields coefficients; its inference columns are NaN.
pub fn ols_fit(d: &DesignMatrix) -> Result<RegressionSummary> {
    let n = d.n_rows();
    let k = d.n_columns();
    if n < k || k == 0 {
        return Err(StatsError::TooFewObservations { n, columns: k });
    }
    if d.x.iter().flatten().chain(&d.y).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite("design matrix"));
    }
    let x = DMatrix::from_fn(n, k, |i, j| d.x[i][j]);
    let y = DVector::from_column_slice(&d.y);

    let qr = x.clone().qr();
    let r = qr.r();
    let dependent: Vec<String> = (0..k)
        .filter(|&j| {
            let norm = x.column(j).norm();
            norm == 0.0 || r[(j, j)].abs() <= 1e-10 * norm
        })
        .map(|j| d.column_names[j].clone())
        .collect();
    if !dependent.is_empty() {
        return Err(StatsError::RankDeficient(dependent));
    }
    let qty = qr.q().transpose() * &y;
    let beta = r.solve_upper_triangular(&qty).ok_or_else(|| StatsError::RankDeficient(d.column_names.clone()))?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or_else(|| StatsError::RankDeficient(d.column_names.clone()))?;
    let cov_unscaled = &r_inv * r_inv.transpose();

    let residuals = &y - &x * &beta;
    let rss = residuals.norm_squared();
    let mean = y.mean();
    let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let df = n - k;
    let sigma2 = if df > 0 { rss / df as f64 } else { f64::NAN };
    let r_squared = if tss > 0.0 { 1.0 - rss / tss } else { 1.0 };
    let dist = StudentsT::new(0.0, 1.0, df.max(1) as f64).expect("df >= 1");

    let coefficients = (0..k)
        .map(|j| {
            let coef = beta[j];
            let std_err = (sigma2 * cov_unscaled[(j, j)]).sqrt();
            let t = coef / std_err;
            let p = if t.is_nan() { f64::NAN } else { 2.0 * dist.sf(t.abs()) };
            Coefficient { name: d.column_names[j].clone(), coef, std_err, t, p }
        })
        .collect();
    Ok(RegressionSummary { coefficients, r_squared, n_obs: n, df_resid: df, dropped_columns: Vec::new() })
}
