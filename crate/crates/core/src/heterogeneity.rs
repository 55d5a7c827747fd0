//! Estimators of the heterogeneity hyperparameter `tau2`.
//!
//! Three routes are exposed and never silently substituted for one another:
//! the closed-form pairwise-difference moment estimator, the root of the
//! profiled marginal-likelihood score, and the Paule-Mandel moment equation
//! `Q(tau2) = J - 1`. The implicit equations admit no closed form, so both
//! are solved by bracketing plus bisection, which is robust to the kink at
//! the `tau2 = 0` boundary.

use serde::Serialize;

use crate::panel::{eb_combine, EstimatorPanel, Tau2Method};
use crate::{Error, Result};

/// Default absolute tolerance on the solver residual.
pub const DEFAULT_TOL: f64 = 1e-10;
/// Default iteration cap for the bisection solvers.
pub const DEFAULT_MAX_ITER: usize = 200;

/// Hard cap on the upper bracket before giving up.
const BRACKET_CAP: f64 = 1e12;

/// Result of a heterogeneity fit.
#[derive(Debug, Clone, Serialize)]
pub struct Tau2Result {
    /// The truncated estimate, always nonnegative.
    pub tau2: f64,
    pub method: Tau2Method,
    /// True when truncation at 0 was active or the root search terminated
    /// at 0; implies `tau2 == 0`.
    pub boundary: bool,
    pub iterations: usize,
    /// Final score/moment residual at `tau2`. For the pairwise estimator
    /// this is `raw - tau2`, so the untruncated raw value is always
    /// recoverable as `tau2 + residual`.
    pub residual: f64,
}

/// Pairwise-difference estimator:
/// `max{ (1 / (2 C(J,2))) Σ_{j<k} [(psi_j - psi_k)^2 - (v_j + v_k)], 0 }`.
pub fn tau2_pairwise(panel: &EstimatorPanel) -> Result<Tau2Result> {
    let raw = pairwise_raw(panel)?;
    let tau2 = raw.max(0.0);
    Ok(Tau2Result {
        tau2,
        method: Tau2Method::Pairwise,
        boundary: raw <= 0.0,
        iterations: 0,
        residual: raw - tau2,
    })
}

/// Untruncated pairwise moment value.
pub fn pairwise_raw(panel: &EstimatorPanel) -> Result<f64> {
    let j = panel.len();
    if j < 2 {
        return Err(Error::NeedsTwoEstimators(j));
    }
    let est = panel.estimates();
    let var = panel.variances();
    let mut sum = 0.0;
    for a in 0..j {
        for b in (a + 1)..j {
            let d = est[a] - est[b];
            sum += d * d - (var[a] + var[b]);
        }
    }
    let pairs = (j * (j - 1) / 2) as f64;
    Ok(sum / (2.0 * pairs))
}

/// Profiled marginal-likelihood score at `tau2`, normalized by the sum of
/// squared precisions so its scale matches the squared target units:
/// roots coincide with those of
/// `Σ_j [(psi_j - psi_eb)^2 - (v_j + tau2)] / (v_j + tau2)^2`.
fn mmle_score(panel: &EstimatorPanel, tau2: f64) -> f64 {
    let fit = eb_combine(panel, tau2, Tau2Method::MmleScore).expect("validated panel");
    let mut num = 0.0;
    let mut den = 0.0;
    for (&e, &v) in panel.estimates().iter().zip(panel.variances()) {
        let u = 1.0 / (v + tau2);
        let d = e - fit.psi_eb;
        num += u * u * (d * d - (v + tau2));
        den += u * u;
    }
    num / den
}

/// Paule-Mandel statistic `Q(tau2) = Σ_j (psi_j - psi_bar(tau2))^2 / (v_j + tau2)`
/// with `psi_bar` the precision-weighted mean; nonincreasing in `tau2`.
fn pm_statistic(panel: &EstimatorPanel, tau2: f64) -> f64 {
    let fit = eb_combine(panel, tau2, Tau2Method::PauleMandel).expect("validated panel");
    panel
        .estimates()
        .iter()
        .zip(panel.variances())
        .map(|(&e, &v)| {
            let d = e - fit.psi_eb;
            d * d / (v + tau2)
        })
        .sum()
}

/// Initial upper bracket: cheap, scale-aware, always finite.
fn initial_bracket(panel: &EstimatorPanel) -> f64 {
    let raw = pairwise_raw(panel).unwrap_or(0.0);
    let max_v = panel
        .variances()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    (4.0 * raw).max(10.0 * max_v).max(1.0)
}

/// Bracket + bisect a decreasing-through-zero residual function.
///
/// `f` must be positive at 0 (checked by the caller) and eventually
/// negative; returns the located root.
fn bisect_root<F: Fn(f64) -> f64>(
    f: F,
    mut upper: f64,
    tol: f64,
    max_iter: usize,
    what: &'static str,
) -> Result<(f64, f64, usize)> {
    let mut iterations = 0usize;
    while f(upper) > 0.0 {
        upper *= 2.0;
        iterations += 1;
        if upper > BRACKET_CAP || iterations > max_iter {
            return Err(Error::NoConvergence { what, iterations });
        }
    }
    let mut lo = 0.0;
    let mut hi = upper;
    for it in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        let r = f(mid);
        if r.abs() <= tol {
            return Ok((mid, r, iterations + it + 1));
        }
        if r > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NoConvergence {
        what,
        iterations: max_iter,
    })
}

/// Maximum marginal likelihood estimate of `tau2` by root-finding the
/// profiled score equation, with `psi` profiled out through the combiner at
/// each candidate value.
///
/// The score is evaluated at the boundary first: when it is already
/// nonpositive at `tau2 = 0`, the constrained maximizer is the boundary and
/// no iteration is performed.
pub fn tau2_mmle(panel: &EstimatorPanel, tol: f64, max_iter: usize) -> Result<Tau2Result> {
    if panel.len() < 2 {
        return Err(Error::NeedsTwoEstimators(panel.len()));
    }
    validate_solver_args(tol, max_iter)?;
    let s0 = mmle_score(panel, 0.0);
    if s0 <= tol {
        return Ok(Tau2Result {
            tau2: 0.0,
            method: Tau2Method::MmleScore,
            boundary: true,
            iterations: 0,
            residual: s0,
        });
    }
    let (tau2, residual, iterations) = bisect_root(
        |t| mmle_score(panel, t),
        initial_bracket(panel),
        tol,
        max_iter,
        "mmle score root search",
    )?;
    Ok(Tau2Result {
        tau2,
        method: Tau2Method::MmleScore,
        boundary: false,
        iterations,
        residual,
    })
}

/// Paule-Mandel estimate: the `tau2 >= 0` solving `Q(tau2) = J - 1`, by
/// monotone bisection; returns 0 with `boundary = true` when
/// `Q(0) <= J - 1`.
pub fn tau2_paule_mandel(panel: &EstimatorPanel, tol: f64, max_iter: usize) -> Result<Tau2Result> {
    let j = panel.len();
    if j < 2 {
        return Err(Error::NeedsTwoEstimators(j));
    }
    validate_solver_args(tol, max_iter)?;
    let target = (j - 1) as f64;
    let r0 = pm_statistic(panel, 0.0) - target;
    if r0 <= tol {
        return Ok(Tau2Result {
            tau2: 0.0,
            method: Tau2Method::PauleMandel,
            boundary: true,
            iterations: 0,
            residual: r0,
        });
    }
    let (tau2, residual, iterations) = bisect_root(
        |t| pm_statistic(panel, t) - target,
        initial_bracket(panel),
        tol,
        max_iter,
        "paule-mandel moment search",
    )?;
    Ok(Tau2Result {
        tau2,
        method: Tau2Method::PauleMandel,
        boundary: false,
        iterations,
        residual,
    })
}

fn validate_solver_args(tol: f64, max_iter: usize) -> Result<()> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "solver tolerance must be positive, got {tol}"
        )));
    }
    if max_iter == 0 {
        return Err(Error::InvalidArgument("max_iter must be positive".into()));
    }
    Ok(())
}
