//! Estimator constructors: one `(estimate, variance, influence column)`
//! triple per identifying functional, built from raw tabular data.
//!
//! Variance convention: every `variance` is a finite-sample plug-in of the
//! asymptotic variance divided by `n`, so that panels mixing designs stay
//! coherent (`v_j = Var{D_j}/n`). Influence columns run over the full input
//! dataset, are zero outside the rows the functional touches, and are
//! explicitly centered.

mod ate;
mod datasets;
mod did;
mod iv;
mod rdd;

pub use ate::{ipw_ate, or_ate};
pub use datasets::{Cohort, CovariateDataset, EnvDataset, RddDataset, StaggeredPanel, TwoPeriodPanel};
pub use did::{did_controls, did_group_time};
pub use iv::{
    build_iv_panel, rct_difference, tsls_subset, wald_ratio, Exclusion, IvPanelBuild,
    IvPanelOptions, DEFAULT_MIN_FIRST_STAGE,
};
pub use rdd::{rdd_fuzzy, rdd_sharp};

use crate::panel::{EstimatorPanel, InfluenceMatrix};
use crate::stats::pop_var;
use crate::Result;

/// One fitted identifying functional.
#[derive(Debug, Clone)]
pub struct FunctionalEstimate {
    pub label: String,
    pub estimate: f64,
    /// Plug-in variance of the estimate (asymptotic variance / n).
    pub variance: f64,
    /// Per-observation influence values over the full dataset, mean-zero.
    pub influence: Vec<f64>,
}

impl FunctionalEstimate {
    /// Heteroskedasticity-robust variance reading taken from the influence
    /// column instead of the model-based formula.
    pub fn robust_variance(&self) -> f64 {
        pop_var(&self.influence) / self.influence.len() as f64
    }
}

/// Subtract the column mean in place; influence columns are mean-zero by
/// construction but this removes the residual float rounding.
pub(crate) fn center(column: &mut [f64]) {
    let m = crate::stats::mean(column);
    for x in column.iter_mut() {
        *x -= m;
    }
}

/// Assemble a panel from fitted functionals (all influence columns must
/// have equal length).
pub fn panel_from_functionals(
    functionals: &[FunctionalEstimate],
    with_influence: bool,
) -> Result<EstimatorPanel> {
    let labels = functionals.iter().map(|f| f.label.clone()).collect();
    let estimates = functionals.iter().map(|f| f.estimate).collect();
    let variances = functionals.iter().map(|f| f.variance).collect();
    let influence = if with_influence {
        Some(InfluenceMatrix::from_columns(
            functionals.iter().map(|f| f.influence.clone()).collect(),
        )?)
    } else {
        None
    };
    EstimatorPanel::with_influence(labels, estimates, variances, influence)
}
