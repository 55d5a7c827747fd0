//! Frequentist confidence intervals for the pooled target: the
//! influence-curve sandwich Wald interval, a boundary-robust subsampling
//! interval, the RCT-only comparator, and squared-length ratios.

use rayon::prelude::*;
use serde::Serialize;

use crate::dgp::{stream_rng, StreamPurpose};
use crate::functionals::{rct_difference, EnvDataset};
use crate::panel::{EbFit, EstimatorPanel};
use crate::stats::{quantile_type1_sorted, z_two_sided};
use crate::{Error, Result};

/// How an interval was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum IntervalMethod {
    SandwichWald,
    Subsampling,
    RctOnly,
    Conformal,
}

/// One-sided/two-sided flavor of a conformal interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ConformalMode {
    /// The half-line the score set defines; `hi` is +inf.
    SignedLower,
    /// Symmetric interval calibrated on absolute scores.
    TwoSidedAbs,
}

/// Method-specific metadata carried alongside an interval.
#[derive(Debug, Clone, Default, Serialize)]
pub struct IntervalMeta {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a_hat: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_hat: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_hat: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replicates: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failed_replicates: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<ConformalMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_hat: Option<f64>,
}

/// A point estimate with an interval at a nominal level.
#[derive(Debug, Clone, Serialize)]
pub struct IntervalReport {
    pub point: f64,
    pub lo: f64,
    pub hi: f64,
    /// Nominal coverage, `1 - alpha`.
    pub level: f64,
    pub method: IntervalMethod,
    pub meta: IntervalMeta,
}

impl IntervalReport {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lo <= value && value <= self.hi
    }
}

fn validate_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must lie in (0,1), got {alpha}"
        )));
    }
    Ok(())
}

/// Sandwich components from the observation-level influence matrix:
/// `A_hat = Σ_j 1/(v_j + tau2)`,
/// `B_hat = (1/n) Σ_i (Σ_j D_j(O_i)/(v_j + tau2))^2`,
/// `V_hat = B_hat / A_hat^2`.
pub fn sandwich_variance(panel: &EstimatorPanel, tau2: f64) -> Result<(f64, f64, f64)> {
    if tau2 < 0.0 || !tau2.is_finite() {
        return Err(Error::NegativeTau2(tau2));
    }
    let influence = panel.influence().ok_or(Error::MissingInfluence)?;
    let n = influence.n_rows();
    if n < 2 {
        return Err(Error::InvalidArgument(
            "sandwich needs at least 2 observations".into(),
        ));
    }
    let weights: Vec<f64> = panel.variances().iter().map(|&v| 1.0 / (v + tau2)).collect();
    let a_hat: f64 = weights.iter().sum();

    let mut b_hat = 0.0;
    let mut row_sums = vec![0.0f64; n];
    for (col, &w) in influence.columns().iter().zip(&weights) {
        for (acc, &d) in row_sums.iter_mut().zip(col) {
            *acc += w * d;
        }
    }
    for g in &row_sums {
        b_hat += g * g;
    }
    b_hat /= n as f64;
    Ok((a_hat, b_hat, b_hat / (a_hat * a_hat)))
}

/// Wald interval around the pooled estimate with half-width
/// `z_{1-alpha/2} * sqrt(V_hat / n)`.
pub fn sandwich_interval(
    panel: &EstimatorPanel,
    fit: &EbFit,
    alpha: f64,
) -> Result<IntervalReport> {
    validate_alpha(alpha)?;
    let (a_hat, b_hat, v_hat) = sandwich_variance(panel, fit.tau2)?;
    let n = panel.n().expect("influence checked by sandwich_variance");
    let z = z_two_sided(alpha)?;
    let half = z * (v_hat / n as f64).sqrt();
    Ok(IntervalReport {
        point: fit.psi_eb,
        lo: fit.psi_eb - half,
        hi: fit.psi_eb + half,
        level: 1.0 - alpha,
        method: IntervalMethod::SandwichWald,
        meta: IntervalMeta {
            a_hat: Some(a_hat),
            b_hat: Some(b_hat),
            v_hat: Some(v_hat),
            tau2: Some(fit.tau2),
            n: Some(n),
            ..Default::default()
        },
    })
}

/// Subsample row indices for replicate `b`: `m` draws without replacement
/// from `0..n`, on the ChaCha stream addressed by `(seed, Subsample, b)` so
/// results are identical regardless of scheduling.
pub fn subsample_indices(n: usize, m: usize, seed: u64, replicate: u64) -> Vec<usize> {
    let mut rng = stream_rng(seed, StreamPurpose::Subsample, replicate);
    let mut idx = rand::seq::index::sample(&mut rng, n, m).into_vec();
    idx.sort_unstable();
    idx
}

/// Per-replicate outputs of a subsampling run.
#[derive(Debug, Clone)]
pub struct SubsamplingRun<T> {
    /// Successful replicates, `(replicate index, value)`, sorted by index.
    pub values: Vec<(usize, T)>,
    /// Failed replicates, `(replicate index, message)`.
    pub failures: Vec<(usize, String)>,
}

/// Run `pipeline` on `b` subsamples of size `m` in parallel. The pipeline
/// receives sorted row indices into the caller's dataset.
pub fn subsampling_replicates<T, F>(
    n: usize,
    m: usize,
    b: usize,
    seed: u64,
    pipeline: F,
) -> Result<SubsamplingRun<T>>
where
    T: Send,
    F: Fn(&[usize]) -> Result<T> + Sync,
{
    if !(2 <= m && m < n) {
        return Err(Error::InvalidArgument(format!(
            "subsample size must satisfy 2 <= m < n, got m = {m}, n = {n}"
        )));
    }
    if b < 50 {
        return Err(Error::InvalidArgument(format!(
            "need at least 50 subsample replicates, got {b}"
        )));
    }
    let outcomes: Vec<(usize, std::result::Result<T, String>)> = (0..b)
        .into_par_iter()
        .map(|rep| {
            let idx = subsample_indices(n, m, seed, rep as u64);
            (rep, pipeline(&idx).map_err(|e| e.to_string()))
        })
        .collect();
    let mut values = Vec::with_capacity(b);
    let mut failures = Vec::new();
    for (rep, res) in outcomes {
        match res {
            Ok(v) => values.push((rep, v)),
            Err(msg) => failures.push((rep, msg)),
        }
    }
    values.sort_by_key(|(rep, _)| *rep);
    failures.sort_by_key(|(rep, _)| *rep);
    Ok(SubsamplingRun { values, failures })
}

/// Default subsample size `floor(n^{2/3})`, satisfying `m -> inf`,
/// `m/n -> 0`.
pub fn default_subsample_size(n: usize) -> usize {
    (n as f64).powf(2.0 / 3.0).floor() as usize
}

/// Assemble the subsampling interval from replicate estimates:
/// `d_b = sqrt(m) (psi_b - psi_full) / sqrt(1 - m/n)` and
/// `[psi - q_{1-a/2}(d)/sqrt(n), psi - q_{a/2}(d)/sqrt(n)]`.
///
/// The `1 - m/n` factor is the finite-population correction for draws
/// without replacement: conditional on the data, `psi_b - psi_full` is
/// deflated by exactly that factor, which matters at desk-scale `m/n`.
pub fn subsampling_interval_from_replicates(
    n: usize,
    m: usize,
    psi_full: f64,
    replicate_psis: &[f64],
    total_replicates: usize,
    alpha: f64,
    seed: u64,
) -> Result<IntervalReport> {
    validate_alpha(alpha)?;
    let failed = total_replicates - replicate_psis.len();
    if replicate_psis.is_empty() || failed * 10 > total_replicates {
        return Err(Error::SubsampleInstability {
            failed,
            total: total_replicates,
        });
    }
    let scale = (m as f64 / (1.0 - m as f64 / n as f64)).sqrt();
    let mut d: Vec<f64> = replicate_psis
        .iter()
        .map(|psi_b| scale * (psi_b - psi_full))
        .collect();
    d.sort_by(|a, b| a.partial_cmp(b).expect("NaN in subsampling replicate"));
    let root_n = (n as f64).sqrt();
    let q_hi = quantile_type1_sorted(&d, 1.0 - alpha / 2.0);
    let q_lo = quantile_type1_sorted(&d, alpha / 2.0);
    Ok(IntervalReport {
        point: psi_full,
        lo: psi_full - q_hi / root_n,
        hi: psi_full - q_lo / root_n,
        level: 1.0 - alpha,
        method: IntervalMethod::Subsampling,
        meta: IntervalMeta {
            n: Some(n),
            m: Some(m),
            replicates: Some(total_replicates),
            failed_replicates: Some(failed),
            seed: Some(seed),
            ..Default::default()
        },
    })
}

/// Boundary-robust subsampling interval: recompute `pipeline` on `b`
/// subsamples of size `m` drawn without replacement, and invert the
/// empirical law of `sqrt(m) (psi_b - psi_full)`.
///
/// The pipeline must recompute the full estimation chain (panel
/// construction, heterogeneity fit, combiner) so boundary randomness in the
/// heterogeneity estimate propagates into the replicates.
pub fn subsampling_interval<F>(
    n: usize,
    m: usize,
    b: usize,
    alpha: f64,
    seed: u64,
    pipeline: F,
) -> Result<IntervalReport>
where
    F: Fn(&[usize]) -> Result<f64> + Sync,
{
    validate_alpha(alpha)?;
    let all: Vec<usize> = (0..n).collect();
    let psi_full = pipeline(&all).map_err(|e| Error::PipelineFailure {
        replicate: usize::MAX,
        message: format!("full-sample pass: {e}"),
    })?;
    let run = subsampling_replicates(n, m, b, seed, pipeline)?;
    let psis: Vec<f64> = run.values.iter().map(|(_, v)| *v).collect();
    subsampling_interval_from_replicates(n, m, psi_full, &psis, b, alpha, seed)
}

/// Wald interval for the difference of arm means inside the randomized
/// environment only.
pub fn rct_only_interval(data: &EnvDataset, alpha: f64) -> Result<IntervalReport> {
    validate_alpha(alpha)?;
    let f = rct_difference(data)?;
    let z = z_two_sided(alpha)?;
    let half = z * f.variance.sqrt();
    Ok(IntervalReport {
        point: f.estimate,
        lo: f.estimate - half,
        hi: f.estimate + half,
        level: 1.0 - alpha,
        method: IntervalMethod::RctOnly,
        meta: IntervalMeta {
            v_hat: Some(f.variance),
            n: Some(data.len()),
            ..Default::default()
        },
    })
}

/// Squared-length ratio `((a.hi - a.lo) / (b.hi - b.lo))^2`. Its reciprocal
/// is the effective sample-size gain of `a` over `b`.
pub fn squared_length_ratio(a: &IntervalReport, b: &IntervalReport) -> Result<f64> {
    let wa = a.width();
    let wb = b.width();
    if !(wa > 0.0) || !(wb > 0.0) || !wa.is_finite() || !wb.is_finite() {
        return Err(Error::ZeroWidth);
    }
    Ok((wa / wb) * (wa / wb))
}
