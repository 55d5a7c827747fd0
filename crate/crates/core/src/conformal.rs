//! Split conformal prediction for the latent target of a new identifying
//! functional: fit the hyperparameters on a random half of the panel,
//! calibrate standardized scores on the other half, and invert the score
//! quantile for a new `(psi_hat, v)` pair.

use rand::seq::SliceRandom;
use serde::Serialize;

use crate::dgp::{stream_rng, StreamPurpose};
use crate::heterogeneity::tau2_pairwise;
use crate::inference::{ConformalMode, IntervalMeta, IntervalMethod, IntervalReport};
use crate::panel::{eb_combine, EstimatorPanel, Tau2Method};
use crate::stats::quantile_type1;
use crate::{Error, Result};

/// A train/calibration partition of panel indices (0-based).
#[derive(Debug, Clone, Serialize)]
pub struct SplitPlan {
    pub train_idx: Vec<usize>,
    pub cal_idx: Vec<usize>,
    pub seed: u64,
}

/// Uniform random partition with `|train| = floor(J/2)`, deterministic in
/// the seed. The split RNG stream is independent of any data-generation
/// stream.
pub fn split_panel(panel: &EstimatorPanel, seed: u64) -> Result<SplitPlan> {
    let j = panel.len();
    if j < 4 {
        return Err(Error::PanelTooSmall { j, needed: 4 });
    }
    let mut rng = stream_rng(seed, StreamPurpose::Split, 0);
    let mut idx: Vec<usize> = (0..j).collect();
    idx.shuffle(&mut rng);
    let j_train = j / 2;
    let mut train_idx = idx[..j_train].to_vec();
    let mut cal_idx = idx[j_train..].to_vec();
    train_idx.sort_unstable();
    cal_idx.sort_unstable();
    Ok(SplitPlan {
        train_idx,
        cal_idx,
        seed,
    })
}

/// A fitted split conformal calibration.
#[derive(Debug, Clone, Serialize)]
pub struct ConformalFit {
    /// Training-half pooled estimate.
    pub psi_train: f64,
    /// Training-half pairwise heterogeneity estimate.
    pub tau2_train: f64,
    /// Standardized calibration scores, in calibration-index order
    /// (kept raw for audit).
    pub cal_scores: Vec<f64>,
    pub alpha: f64,
    /// Smallest score s with empirical CDF >= 1 - alpha.
    pub q_hat: f64,
    /// Recorded diagnostics, e.g. the noise-dominance flag.
    pub warnings: Vec<String>,
}

fn validate_plan(panel: &EstimatorPanel, plan: &SplitPlan) -> Result<()> {
    let j = panel.len();
    let mut seen = vec![false; j];
    for &i in plan.train_idx.iter().chain(&plan.cal_idx) {
        if i >= j {
            return Err(Error::InvalidArgument(format!(
                "split index {i} out of range for J = {j}"
            )));
        }
        if seen[i] {
            return Err(Error::InvalidArgument(format!(
                "split index {i} appears twice"
            )));
        }
        seen[i] = true;
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::InvalidArgument(
            "split does not cover every panel index".into(),
        ));
    }
    if plan.train_idx.len() != j / 2 {
        return Err(Error::InvalidArgument(format!(
            "training half must have floor(J/2) = {} indices, got {}",
            j / 2,
            plan.train_idx.len()
        )));
    }
    Ok(())
}

/// Fit the training half and calibrate scores
/// `(psi_hat_j - psi_train) / sqrt(tau2_train + v_j)` on the other half.
pub fn conformal_fit(
    panel: &EstimatorPanel,
    plan: &SplitPlan,
    alpha: f64,
) -> Result<ConformalFit> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must lie in (0,1), got {alpha}"
        )));
    }
    validate_plan(panel, plan)?;
    let j_cal = plan.cal_idx.len();
    let needed = ((1.0 - alpha) * (j_cal as f64 + 1.0)).ceil() as usize;
    if needed > j_cal {
        return Err(Error::QuantileInfeasible {
            needed,
            available: j_cal,
        });
    }

    // training step on the training half alone
    let train_labels = plan
        .train_idx
        .iter()
        .map(|&i| panel.labels()[i].clone())
        .collect();
    let train_est: Vec<f64> = plan.train_idx.iter().map(|&i| panel.estimates()[i]).collect();
    let train_var: Vec<f64> = plan.train_idx.iter().map(|&i| panel.variances()[i]).collect();
    let train_panel = EstimatorPanel::new(train_labels, train_est, train_var)?;
    let tau2_train = tau2_pairwise(&train_panel)?.tau2;
    let psi_train = eb_combine(&train_panel, tau2_train, Tau2Method::Pairwise)?.psi_eb;

    // calibration scores
    let cal_scores: Vec<f64> = plan
        .cal_idx
        .iter()
        .map(|&i| {
            (panel.estimates()[i] - psi_train) / (tau2_train + panel.variances()[i]).sqrt()
        })
        .collect();
    let q_hat = quantile_type1(&cal_scores, 1.0 - alpha);

    let mut warnings = Vec::new();
    if tau2_train > 0.0 {
        let diag = panel
            .variances()
            .iter()
            .map(|&v| (v / tau2_train).sqrt())
            .fold(f64::NEG_INFINITY, f64::max);
        if diag > 1.0 {
            warnings.push(format!(
                "noise_dominance_diag = {diag:.3} > 1: sampling noise is not dominated by heterogeneity; conformal validity is unsupported in this regime"
            ));
        }
    } else {
        warnings.push(
            "tau2_train = 0 (boundary): calibration scores are pure correlated sampling noise; conformal validity is unsupported in this regime"
                .into(),
        );
    }

    Ok(ConformalFit {
        psi_train,
        tau2_train,
        cal_scores,
        alpha,
        q_hat,
        warnings,
    })
}

/// Prediction interval for the latent target of a new functional with
/// estimate `psi_hat_new` and variance `v_new`.
///
/// `SignedLower` returns the half-line `[psi_hat_new - q_hat * s, +inf)`
/// that the score set defines; `TwoSidedAbs` recalibrates the quantile on
/// absolute scores and returns a symmetric interval.
pub fn conformal_interval(
    fit: &ConformalFit,
    psi_hat_new: f64,
    v_new: f64,
    mode: ConformalMode,
) -> Result<IntervalReport> {
    if !(v_new > 0.0) {
        return Err(Error::NonPositiveVariance {
            index: 0,
            value: v_new,
        });
    }
    let scale = (fit.tau2_train + v_new).sqrt();
    let (lo, hi, q_used) = match mode {
        ConformalMode::SignedLower => {
            (psi_hat_new - fit.q_hat * scale, f64::INFINITY, fit.q_hat)
        }
        ConformalMode::TwoSidedAbs => {
            let abs_scores: Vec<f64> = fit.cal_scores.iter().map(|s| s.abs()).collect();
            let q_abs = quantile_type1(&abs_scores, 1.0 - fit.alpha);
            (psi_hat_new - q_abs * scale, psi_hat_new + q_abs * scale, q_abs)
        }
    };
    Ok(IntervalReport {
        point: psi_hat_new,
        lo,
        hi,
        level: 1.0 - fit.alpha,
        method: IntervalMethod::Conformal,
        meta: IntervalMeta {
            mode: Some(mode),
            q_hat: Some(q_used),
            tau2: Some(fit.tau2_train),
            ..Default::default()
        },
    })
}

/// DKW band half-width `sqrt(log(2/beta) / (2 j_cal))` used in the PAC
/// training-conditional coverage statement.
pub fn dkw_band(j_cal: usize, beta: f64) -> Result<f64> {
    if j_cal == 0 {
        return Err(Error::InvalidArgument("j_cal must be positive".into()));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "beta must lie in (0,1), got {beta}"
        )));
    }
    Ok(((2.0 / beta).ln() / (2.0 * j_cal as f64)).sqrt())
}

/// Noise-to-heterogeneity proxy `max_j sqrt(v_j) / sqrt(tau2)`. Values well
/// below 1 support the conformal regime; values at or above 1 flag the
/// boundary phase where no dominance argument is available.
pub fn noise_dominance_diag(panel: &EstimatorPanel, tau2: f64) -> Result<f64> {
    if panel.influence().is_none() {
        return Err(Error::MissingInfluence);
    }
    if !(tau2 > 0.0) {
        return Err(Error::NonPositiveTau2(tau2));
    }
    Ok(panel
        .variances()
        .iter()
        .map(|&v| (v / tau2).sqrt())
        .fold(f64::NEG_INFINITY, f64::max))
}
