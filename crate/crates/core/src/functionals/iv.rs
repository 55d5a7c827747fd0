//! Subset-indexed 2SLS over multi-environment data, the Wald ratio special
//! case, the RCT difference of arm means, and the full panel builder.
//!
//! Because the instruments are the one-hot environment indicators, every
//! 2SLS quantity reduces to within-subset conditional moments of `(A, Y)`,
//! so estimates, homoskedastic variances, and weak-instrument checks are
//! all computed from per-environment sufficient statistics in one pass.

use super::datasets::EnvDataset;
use super::{center, panel_from_functionals, FunctionalEstimate};
use crate::panel::EstimatorPanel;
use crate::{Error, Result};

/// Default weak-instrument threshold in propensity-difference units.
pub const DEFAULT_MIN_FIRST_STAGE: f64 = 0.02;

/// Gram determinant threshold, relative to the product of within-subset
/// environment probabilities.
const GRAM_REL_THRESHOLD: f64 = 1e-8;

/// Noise-awareness factor for the Gram determinant: the measured
/// between-environment variation of the propensities must exceed this
/// multiple of its own expected sampling inflation
/// `sum_s p_s (1 - p_s) * abar_s (1 - abar_s) / n_s`, at any sample size.
/// Keeps subsets whose first stage is indistinguishable from noise out of
/// the panel, which also keeps resampled replicas of the chain comparable
/// across sample sizes.
const GRAM_NOISE_FACTOR: f64 = 1.0;

/// Per-environment sufficient statistics.
#[derive(Debug, Clone, Copy, Default)]
struct EnvStats {
    count: f64,
    sum_a: f64,
    sum_y: f64,
    sum_y2: f64,
    sum_ay: f64,
}

impl EnvStats {
    fn mean_a(&self) -> f64 {
        self.sum_a / self.count
    }

    fn mean_y(&self) -> f64 {
        self.sum_y / self.count
    }
}

fn env_stats(data: &EnvDataset) -> Vec<EnvStats> {
    let mut stats = vec![EnvStats::default(); data.q()];
    for ((&z, &a), &y) in data.z().iter().zip(data.a()).zip(data.y()) {
        let s = &mut stats[z];
        s.count += 1.0;
        s.sum_a += a as f64;
        s.sum_y += y;
        s.sum_y2 += y * y;
        s.sum_ay += a as f64 * y;
    }
    stats
}

fn subset_label(subset: &[usize]) -> String {
    let ids: Vec<String> = subset.iter().map(usize::to_string).collect();
    format!("iv_{}", ids.join("_"))
}

/// Fitted 2SLS pieces needed for the variance and the influence column.
struct SubsetFit {
    psi: f64,
    intercept: f64,
    variance: f64,
    det: f64,
    /// within-subset mean of A
    a_bar: f64,
    n_subset: f64,
}

fn subset_fit(
    stats: &[EnvStats],
    subset: &[usize],
    min_first_stage: f64,
    label: &str,
) -> Result<SubsetFit> {
    if subset.len() < 2 {
        return Err(Error::InvalidArgument(
            "IV subset needs at least 2 environments".into(),
        ));
    }
    for &s in subset {
        if s >= stats.len() {
            return Err(Error::InvalidArgument(format!(
                "environment {s} out of range"
            )));
        }
        if stats[s].count < 2.0 {
            return Err(Error::EmptyEnvironment(s));
        }
    }
    let n_subset: f64 = subset.iter().map(|&s| stats[s].count).sum();

    // within-subset moments of the conditional means
    let mut a_bar = 0.0;
    let mut m2 = 0.0;
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    let mut prob_product = 1.0;
    let mut noise_floor = 0.0;
    let mut a_min = f64::INFINITY;
    let mut a_max = f64::NEG_INFINITY;
    for &s in subset {
        let st = &stats[s];
        let p = st.count / n_subset;
        let ma = st.mean_a();
        let my = st.mean_y();
        a_bar += p * ma;
        m2 += p * ma * ma;
        b1 += p * my;
        b2 += p * ma * my;
        prob_product *= p;
        noise_floor += p * (1.0 - p) * ma * (1.0 - ma) / st.count;
        a_min = a_min.min(ma);
        a_max = a_max.max(ma);
    }
    if a_max - a_min < min_first_stage {
        return Err(Error::WeakInstrument {
            context: label.to_string(),
            value: a_max - a_min,
            threshold: min_first_stage,
        });
    }
    let det = m2 - a_bar * a_bar;
    let det_threshold = (GRAM_REL_THRESHOLD * prob_product).max(GRAM_NOISE_FACTOR * noise_floor);
    if det <= det_threshold {
        return Err(Error::WeakInstrument {
            context: label.to_string(),
            value: det,
            threshold: det_threshold,
        });
    }
    let psi = (b2 - a_bar * b1) / det;
    let intercept = (m2 * b1 - a_bar * b2) / det;

    // within-subset residual variance of Y - intercept - psi * A
    // (uses A^2 = A for binary treatment)
    let mut rss = 0.0;
    for &s in subset {
        let st = &stats[s];
        rss += st.sum_y2 - 2.0 * intercept * st.sum_y - 2.0 * psi * st.sum_ay
            + intercept * intercept * st.count
            + 2.0 * intercept * psi * st.sum_a
            + psi * psi * st.sum_a;
    }
    let sigma2 = rss / n_subset;
    // debiased determinant in the variance: the raw determinant is
    // inflated by exactly noise_floor in expectation, which would hand
    // spurious precision to weak subsets
    let variance = sigma2 / (n_subset * (det - noise_floor));
    Ok(SubsetFit {
        psi,
        intercept,
        variance,
        det,
        a_bar,
        n_subset,
    })
}

/// Influence column of a fitted subset: the estimating-equation
/// linearization `[G^{-1} m_z]_2 * residual`, rescaled to the full sample
/// and zero outside the subset.
fn subset_influence(
    data: &EnvDataset,
    stats: &[EnvStats],
    subset: &[usize],
    fit: &SubsetFit,
) -> Vec<f64> {
    let n = data.len() as f64;
    let scale = n / fit.n_subset;
    let mut in_subset = vec![false; data.q()];
    for &s in subset {
        in_subset[s] = true;
    }
    let mut column = vec![0.0; data.len()];
    for (i, ((&z, &a), &y)) in data.z().iter().zip(data.a()).zip(data.y()).enumerate() {
        if !in_subset[z] {
            continue;
        }
        let residual = y - fit.intercept - fit.psi * a as f64;
        let proj = (stats[z].mean_a() - fit.a_bar) / fit.det;
        column[i] = scale * proj * residual;
    }
    center(&mut column);
    column
}

/// 2SLS over the environments in `subset`, instrumenting treatment with the
/// one-hot environment indicator.
pub fn tsls_subset(
    data: &EnvDataset,
    subset: &[usize],
    min_first_stage: f64,
) -> Result<FunctionalEstimate> {
    let mut sorted: Vec<usize> = subset.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != subset.len() {
        return Err(Error::InvalidArgument("subset has repeated environments".into()));
    }
    let label = subset_label(&sorted);
    let stats = env_stats(data);
    let fit = subset_fit(&stats, &sorted, min_first_stage, &label)?;
    let influence = subset_influence(data, &stats, &sorted, &fit);
    Ok(FunctionalEstimate {
        label,
        estimate: fit.psi,
        variance: fit.variance,
        influence,
    })
}

/// Wald ratio between two environments:
/// `(E[Y|s1] - E[Y|s2]) / (E[A|s1] - E[A|s2])`, with delta-method variance
/// over the four sample means.
pub fn wald_ratio(
    data: &EnvDataset,
    s1: usize,
    s2: usize,
    min_first_stage: f64,
) -> Result<FunctionalEstimate> {
    if s1 == s2 {
        return Err(Error::InvalidArgument(
            "wald ratio needs two distinct environments".into(),
        ));
    }
    let stats = env_stats(data);
    for &s in &[s1, s2] {
        if s >= stats.len() {
            return Err(Error::InvalidArgument(format!(
                "environment {s} out of range"
            )));
        }
        if stats[s].count < 2.0 {
            return Err(Error::EmptyEnvironment(s));
        }
    }
    let label = format!("wald_{s1}_{s2}");
    let (st1, st2) = (&stats[s1], &stats[s2]);
    let denom = st1.mean_a() - st2.mean_a();
    if denom.abs() < min_first_stage {
        return Err(Error::WeakInstrument {
            context: label,
            value: denom.abs(),
            threshold: min_first_stage,
        });
    }
    let psi = (st1.mean_y() - st2.mean_y()) / denom;

    // per-observation linearization of the four-mean delta method
    let n = data.len() as f64;
    let mut column = vec![0.0; data.len()];
    for (i, ((&z, &a), &y)) in data.z().iter().zip(data.a()).zip(data.y()).enumerate() {
        if z == s1 {
            let r = (y - st1.mean_y()) - psi * (a as f64 - st1.mean_a());
            column[i] = (n / st1.count) * r / denom;
        } else if z == s2 {
            let r = (y - st2.mean_y()) - psi * (a as f64 - st2.mean_a());
            column[i] = -(n / st2.count) * r / denom;
        }
    }
    center(&mut column);
    let variance = crate::stats::pop_var(&column) / n;
    Ok(FunctionalEstimate {
        label: format!("wald_{s1}_{s2}"),
        estimate: psi,
        variance,
        influence: column,
    })
}

/// Difference of arm means inside the randomized environment `z = 0`.
pub fn rct_difference(data: &EnvDataset) -> Result<FunctionalEstimate> {
    let mut sums = [(0.0f64, 0.0f64); 2]; // (count, sum_y) per arm
    for ((&z, &a), &y) in data.z().iter().zip(data.a()).zip(data.y()) {
        if z == 0 {
            sums[a as usize].0 += 1.0;
            sums[a as usize].1 += y;
        }
    }
    for arm in 0..2u8 {
        if sums[arm as usize].0 < 2.0 {
            return Err(Error::EmptyArm { env: 0, arm });
        }
    }
    let mean1 = sums[1].1 / sums[1].0;
    let mean0 = sums[0].1 / sums[0].0;
    let estimate = mean1 - mean0;

    let n = data.len() as f64;
    let mut column = vec![0.0; data.len()];
    for (i, ((&z, &a), &y)) in data.z().iter().zip(data.a()).zip(data.y()).enumerate() {
        if z == 0 {
            let (count, sum) = sums[a as usize];
            let dev = y - sum / count;
            let sign = if a == 1 { 1.0 } else { -1.0 };
            column[i] = sign * (n / count) * dev;
        }
    }
    center(&mut column);
    let variance = crate::stats::pop_var(&column) / n;
    Ok(FunctionalEstimate {
        label: "rct".into(),
        estimate,
        variance,
        influence: column,
    })
}

/// Options for [`build_iv_panel`].
#[derive(Debug, Clone)]
pub struct IvPanelOptions {
    /// Prepend the RCT difference-of-means functional.
    pub include_rct: bool,
    /// Weak-instrument threshold in propensity-difference units.
    pub min_first_stage: f64,
    /// Materialize the n x J influence matrix. Skipping it makes panel
    /// construction a pure sufficient-statistics pass, which resampling
    /// pipelines rely on.
    pub with_influence: bool,
}

impl Default for IvPanelOptions {
    fn default() -> Self {
        Self {
            include_rct: true,
            min_first_stage: DEFAULT_MIN_FIRST_STAGE,
            with_influence: true,
        }
    }
}

/// A functional dropped during panel construction, with the reason.
#[derive(Debug, Clone)]
pub struct Exclusion {
    pub label: String,
    pub reason: String,
}

/// Output of [`build_iv_panel`].
#[derive(Debug, Clone)]
pub struct IvPanelBuild {
    pub panel: EstimatorPanel,
    /// Functionals dropped as weak or degenerate; never silent.
    pub excluded: Vec<Exclusion>,
}

/// Enumerate all environment subsets with `|S| >= 2` (`2^q - q - 1` of
/// them), fit each by 2SLS, optionally prepend the RCT functional, and
/// assemble the panel. Weak or degenerate functionals are dropped and
/// recorded in the exclusion list.
pub fn build_iv_panel(data: &EnvDataset, options: &IvPanelOptions) -> Result<IvPanelBuild> {
    let q = data.q();
    if q < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 environments, got {q}"
        )));
    }
    if q > 20 {
        return Err(Error::InvalidArgument(format!(
            "2^{q} subsets is not a tractable panel; q must be <= 20"
        )));
    }
    let stats = env_stats(data);
    let mut functionals: Vec<FunctionalEstimate> = Vec::new();
    let mut excluded = Vec::new();

    if options.include_rct {
        match rct_difference(data) {
            Ok(f) => functionals.push(f),
            Err(e) => excluded.push(Exclusion {
                label: "rct".into(),
                reason: e.to_string(),
            }),
        }
    }

    let mut n_iv = 0usize;
    for mask in 0u32..(1u32 << q) {
        if mask.count_ones() < 2 {
            continue;
        }
        let subset: Vec<usize> = (0..q).filter(|&s| mask & (1 << s) != 0).collect();
        let label = subset_label(&subset);
        match subset_fit(&stats, &subset, options.min_first_stage, &label) {
            Ok(fit) => {
                if !(fit.variance > 0.0) || !fit.variance.is_finite() {
                    excluded.push(Exclusion {
                        label,
                        reason: format!("degenerate variance {}", fit.variance),
                    });
                    continue;
                }
                let influence = if options.with_influence {
                    subset_influence(data, &stats, &subset, &fit)
                } else {
                    Vec::new()
                };
                functionals.push(FunctionalEstimate {
                    label,
                    estimate: fit.psi,
                    variance: fit.variance,
                    influence,
                });
                n_iv += 1;
            }
            Err(e) => excluded.push(Exclusion {
                label,
                reason: e.to_string(),
            }),
        }
    }

    if n_iv == 0 {
        return Err(Error::AllSubsetsWeak);
    }
    let panel = panel_from_functionals(&functionals, options.with_influence)?;
    Ok(IvPanelBuild { panel, excluded })
}
