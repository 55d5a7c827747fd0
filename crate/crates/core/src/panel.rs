//! The estimator panel and the precision-weighted empirical Bayes combiner.
//!
//! A panel holds `J` estimates `psi_hat_j` of the same scalar target, their
//! variances `v_j`, and optionally an `n x J` matrix of per-observation
//! influence values (row `i` = observation `i`, column `j` = functional `j`).
//! The combiner computes weights `W_j ∝ 1/(v_j + tau2)` and the pooled
//! estimate `psi_eb = Σ_j W_j psi_hat_j`.

use serde::{Deserialize, Serialize};

use crate::stats::{mean, pop_var};
use crate::{Error, Result};

/// How the heterogeneity hyperparameter `tau2` was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Tau2Method {
    /// Closed-form average of squared pairwise differences.
    Pairwise,
    /// Root of the profiled marginal-likelihood score equation.
    MmleScore,
    /// Paule-Mandel moment iteration.
    PauleMandel,
    /// Supplied by the caller.
    Fixed,
}

/// Per-observation influence values, stored column-major: one column of
/// length `n_rows` per functional.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceMatrix {
    n_rows: usize,
    columns: Vec<Vec<f64>>,
}

impl InfluenceMatrix {
    pub fn from_columns(columns: Vec<Vec<f64>>) -> Result<Self> {
        let n_rows = columns.first().map(Vec::len).unwrap_or(0);
        if n_rows == 0 {
            return Err(Error::InvalidArgument(
                "influence matrix needs at least one row".into(),
            ));
        }
        if columns.iter().any(|c| c.len() != n_rows) {
            return Err(Error::LengthMismatch(
                "influence columns have unequal lengths".into(),
            ));
        }
        Ok(Self { n_rows, columns })
    }

    /// Build from row-major nested arrays (the JSON wire layout).
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_rows = rows.len();
        let j = rows.first().map(Vec::len).unwrap_or(0);
        if n_rows == 0 || j == 0 {
            return Err(Error::InvalidArgument(
                "influence matrix needs at least one row and one column".into(),
            ));
        }
        if rows.iter().any(|r| r.len() != j) {
            return Err(Error::LengthMismatch(
                "influence rows have unequal lengths".into(),
            ));
        }
        let mut columns = vec![vec![0.0; n_rows]; j];
        for (i, row) in rows.iter().enumerate() {
            for (col, &x) in columns.iter_mut().zip(row.iter()) {
                col[i] = x;
            }
        }
        Ok(Self { n_rows, columns })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    /// Row-major copy, for serialization.
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n_rows)
            .map(|i| self.columns.iter().map(|c| c[i]).collect())
            .collect()
    }
}

/// Advisory findings from the influence-matrix self-consistency checks.
///
/// These are warnings, not errors: plug-in nuisance estimation can
/// legitimately degrade the match at small n.
#[derive(Debug, Clone, Serialize)]
pub enum PanelWarning {
    /// Column mean further from zero than 10 * std / sqrt(n).
    InfluenceNotCentered { label: String, mean: f64, bound: f64 },
    /// Column variance / n disagrees with the reported v_j by more than 20%.
    VarianceMismatch {
        label: String,
        from_influence: f64,
        reported: f64,
    },
}

/// A panel of `J` estimators of the same scalar causal target.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorPanel {
    labels: Vec<String>,
    estimates: Vec<f64>,
    variances: Vec<f64>,
    influence: Option<InfluenceMatrix>,
}

impl EstimatorPanel {
    /// Build a panel without an influence matrix.
    pub fn new(labels: Vec<String>, estimates: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        Self::with_influence(labels, estimates, variances, None)
    }

    /// Build a panel, validating lengths and strict variance positivity.
    ///
    /// Variances are required inputs; the panel never infers them from the
    /// influence matrix, it only cross-checks (see
    /// [`influence_diagnostics`](Self::influence_diagnostics)).
    pub fn with_influence(
        labels: Vec<String>,
        estimates: Vec<f64>,
        variances: Vec<f64>,
        influence: Option<InfluenceMatrix>,
    ) -> Result<Self> {
        let j = estimates.len();
        if j == 0 {
            return Err(Error::EmptyPanel);
        }
        if labels.len() != j || variances.len() != j {
            return Err(Error::LengthMismatch(format!(
                "labels ({}), estimates ({}), variances ({})",
                labels.len(),
                j,
                variances.len()
            )));
        }
        for (index, &v) in variances.iter().enumerate() {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::NonPositiveVariance { index, value: v });
            }
        }
        if let Some(m) = &influence {
            if m.n_cols() != j {
                return Err(Error::LengthMismatch(format!(
                    "influence has {} columns for {} estimators",
                    m.n_cols(),
                    j
                )));
            }
        }
        Ok(Self {
            labels,
            estimates,
            variances,
            influence,
        })
    }

    pub fn len(&self) -> usize {
        self.estimates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.estimates.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn estimates(&self) -> &[f64] {
        &self.estimates
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn influence(&self) -> Option<&InfluenceMatrix> {
        self.influence.as_ref()
    }

    /// Sample size backing the influence matrix, when present.
    pub fn n(&self) -> Option<usize> {
        self.influence.as_ref().map(InfluenceMatrix::n_rows)
    }

    /// Sub-panel at the given estimator indices (influence columns follow).
    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        let labels = idx.iter().map(|&j| self.labels[j].clone()).collect();
        let estimates = idx.iter().map(|&j| self.estimates[j]).collect();
        let variances = idx.iter().map(|&j| self.variances[j]).collect();
        let influence = match &self.influence {
            Some(m) => Some(InfluenceMatrix::from_columns(
                idx.iter().map(|&j| m.column(j).to_vec()).collect(),
            )?),
            None => None,
        };
        Self::with_influence(labels, estimates, variances, influence)
    }

    /// Advisory self-consistency checks on the influence matrix: columns
    /// should be mean-zero up to sampling error, and column variance / n
    /// should reproduce the reported v_j within 20% relative tolerance.
    pub fn influence_diagnostics(&self) -> Vec<PanelWarning> {
        let mut warnings = Vec::new();
        let Some(m) = &self.influence else {
            return warnings;
        };
        let n = m.n_rows() as f64;
        for (j, col) in m.columns().iter().enumerate() {
            let mu = mean(col);
            let var = pop_var(col);
            let bound = 10.0 * var.sqrt() / n.sqrt();
            if mu.abs() > bound {
                warnings.push(PanelWarning::InfluenceNotCentered {
                    label: self.labels[j].clone(),
                    mean: mu,
                    bound,
                });
            }
            let from_influence = var / n;
            let reported = self.variances[j];
            if (from_influence - reported).abs() > 0.20 * reported {
                warnings.push(PanelWarning::VarianceMismatch {
                    label: self.labels[j].clone(),
                    from_influence,
                    reported,
                });
            }
        }
        warnings
    }
}

/// A fitted empirical Bayes combination.
#[derive(Debug, Clone, Serialize)]
pub struct EbFit {
    /// Precision-weighted pooled estimate.
    pub psi_eb: f64,
    /// Heterogeneity value the weights were computed at.
    pub tau2: f64,
    /// Convex weights, `W_j ∝ 1/(v_j + tau2)`.
    pub weights: Vec<f64>,
    /// Provenance of `tau2`.
    pub tau2_method: Tau2Method,
}

/// Precision weights `W_j = (v_j + tau2)^{-1} / Σ_k (v_k + tau2)^{-1}`.
///
/// Nonnegative and summing to one for any `tau2 >= 0`.
pub fn precision_weights(variances: &[f64], tau2: f64) -> Result<Vec<f64>> {
    if variances.is_empty() {
        return Err(Error::EmptyPanel);
    }
    if tau2 < 0.0 || !tau2.is_finite() {
        return Err(Error::NegativeTau2(tau2));
    }
    for (index, &v) in variances.iter().enumerate() {
        if !(v > 0.0) {
            return Err(Error::NonPositiveVariance { index, value: v });
        }
    }
    let raw: Vec<f64> = variances.iter().map(|&v| 1.0 / (v + tau2)).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / total).collect())
}

/// Pool a panel at a given `tau2`: weights from [`precision_weights`],
/// `psi_eb` the weighted mean of the estimates.
pub fn eb_combine(panel: &EstimatorPanel, tau2: f64, method: Tau2Method) -> Result<EbFit> {
    let weights = precision_weights(panel.variances(), tau2)?;
    let psi_eb = weights
        .iter()
        .zip(panel.estimates())
        .map(|(w, psi)| w * psi)
        .sum();
    Ok(EbFit {
        psi_eb,
        tau2,
        weights,
        tau2_method: method,
    })
}

/// Largest precision weight; the non-dominance diagnostic. Callers compare
/// it against their own threshold.
pub fn max_weight(fit: &EbFit) -> f64 {
    fit.weights.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Cross-partial of the working log-likelihood in `(psi, tau2)` evaluated at
/// `psi`: `-Σ_j (psi_hat_j - psi) / (v_j + tau2)^2`.
///
/// Near-zero values are evidence consistent with every functional sharing
/// the target `psi` exactly.
pub fn orthogonality_gap(panel: &EstimatorPanel, psi: f64, tau2: f64) -> Result<f64> {
    if tau2 < 0.0 || !tau2.is_finite() {
        return Err(Error::NegativeTau2(tau2));
    }
    Ok(-panel
        .estimates()
        .iter()
        .zip(panel.variances())
        .map(|(&e, &v)| (e - psi) / ((v + tau2) * (v + tau2)))
        .sum::<f64>())
}
