//! Replicated runs of the full estimation chains, used by the CLI coverage
//! command and the acceptance suite. Replicates run in parallel on derived
//! seeds, so results do not depend on thread count.

use rayon::prelude::*;
use serde::Serialize;

use crate::conformal::{conformal_fit, conformal_interval, dkw_band, split_panel};
use crate::dgp::{child_seed, gen_iv_environments, gen_meta_panel, MetaConfig, SimConfig};
use crate::functionals::{build_iv_panel, EnvDataset, Exclusion, IvPanelOptions};
use crate::heterogeneity::{
    tau2_paule_mandel, tau2_pairwise, Tau2Result, DEFAULT_MAX_ITER, DEFAULT_TOL,
};
use crate::inference::{
    default_subsample_size, rct_only_interval, sandwich_interval,
    subsampling_interval_from_replicates, subsampling_replicates, ConformalMode, IntervalReport,
};
use crate::panel::{eb_combine, max_weight, orthogonality_gap, EstimatorPanel, Tau2Method};
use crate::{Error, Result};

/// Subsampling settings for a scenario run.
#[derive(Debug, Clone, Serialize)]
pub struct SubsampleSettings {
    /// Subsample size; `None` means `floor(n^{2/3})`.
    pub m: Option<usize>,
    /// Number of subsample replicates.
    pub b: usize,
}

/// What to compute in one IV-environments run.
#[derive(Debug, Clone)]
pub struct IvRunSpec {
    pub alpha: f64,
    pub include_rct: bool,
    pub min_first_stage: f64,
    /// Build the influence matrix and the sandwich interval.
    pub sandwich: bool,
    pub subsample: Option<SubsampleSettings>,
    pub rct_interval: bool,
    pub paule_mandel: bool,
}

impl Default for IvRunSpec {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            include_rct: true,
            min_first_stage: crate::functionals::DEFAULT_MIN_FIRST_STAGE,
            sandwich: true,
            subsample: None,
            rct_interval: true,
            paule_mandel: true,
        }
    }
}

/// One subsampling replicate of the full chain.
#[derive(Debug, Clone, Serialize)]
pub struct SubsampleRecord {
    pub replicate: usize,
    pub psi_b: f64,
    pub tau2_b: f64,
    /// `sqrt(m) * (psi_b - psi_eb)`.
    pub d: f64,
}

/// Output of one IV-environments run.
#[derive(Debug, Clone)]
pub struct IvRunOutcome {
    pub seed: u64,
    pub n: usize,
    /// Panel without its influence matrix, for reporting.
    pub panel: EstimatorPanel,
    pub psi_eb: f64,
    pub tau2: Tau2Result,
    pub tau2_pm: Option<Tau2Result>,
    pub max_weight: f64,
    pub orthogonality_gap: f64,
    pub sandwich: Option<IntervalReport>,
    pub subsampling: Option<IntervalReport>,
    pub subsample_records: Vec<SubsampleRecord>,
    pub subsample_failures: Vec<(usize, String)>,
    pub rct_only: Option<IntervalReport>,
    pub excluded: Vec<Exclusion>,
    pub clamp_rate: f64,
}

/// The point-estimation chain on its own: panel (no influence), pairwise
/// heterogeneity, combiner. This is what subsampling replays per subsample.
pub fn iv_point_pipeline(
    data: &EnvDataset,
    include_rct: bool,
    min_first_stage: f64,
) -> Result<(f64, f64)> {
    let built = build_iv_panel(
        data,
        &IvPanelOptions {
            include_rct,
            min_first_stage,
            with_influence: false,
        },
    )?;
    let tau2 = if built.panel.len() >= 2 {
        tau2_pairwise(&built.panel)?.tau2
    } else {
        0.0
    };
    let fit = eb_combine(&built.panel, tau2, Tau2Method::Pairwise)?;
    Ok((fit.psi_eb, tau2))
}

/// Generate one dataset from `cfg` and run the full chain per `spec`.
pub fn run_iv_once(cfg: &SimConfig, spec: &IvRunSpec) -> Result<IvRunOutcome> {
    let generated = gen_iv_environments(cfg)?;
    let data = &generated.data;
    let n = data.len();

    let built = build_iv_panel(
        data,
        &IvPanelOptions {
            include_rct: spec.include_rct,
            min_first_stage: spec.min_first_stage,
            with_influence: spec.sandwich,
        },
    )?;
    let panel = built.panel;

    let tau2 = if panel.len() >= 2 {
        tau2_pairwise(&panel)?
    } else {
        Tau2Result {
            tau2: 0.0,
            method: Tau2Method::Pairwise,
            boundary: true,
            iterations: 0,
            residual: 0.0,
        }
    };
    let fit = eb_combine(&panel, tau2.tau2, Tau2Method::Pairwise)?;
    let tau2_pm = if spec.paule_mandel && panel.len() >= 2 {
        Some(tau2_paule_mandel(&panel, DEFAULT_TOL, DEFAULT_MAX_ITER)?)
    } else {
        None
    };

    let sandwich = if spec.sandwich {
        Some(sandwich_interval(&panel, &fit, spec.alpha)?)
    } else {
        None
    };

    let (subsampling, subsample_records, subsample_failures) = match &spec.subsample {
        Some(settings) => {
            let m = settings.m.unwrap_or_else(|| default_subsample_size(n));
            let run = subsampling_replicates(n, m, settings.b, cfg.seed, |idx| {
                let sub = data.select(idx);
                iv_point_pipeline(&sub, spec.include_rct, spec.min_first_stage)
            })?;
            let psis: Vec<f64> = run.values.iter().map(|(_, (psi, _))| *psi).collect();
            let interval = subsampling_interval_from_replicates(
                n,
                m,
                fit.psi_eb,
                &psis,
                settings.b,
                spec.alpha,
                cfg.seed,
            )?;
            let scale = (m as f64 / (1.0 - m as f64 / n as f64)).sqrt();
            let records = run
                .values
                .iter()
                .map(|&(replicate, (psi_b, tau2_b))| SubsampleRecord {
                    replicate,
                    psi_b,
                    tau2_b,
                    d: scale * (psi_b - fit.psi_eb),
                })
                .collect();
            (Some(interval), records, run.failures)
        }
        None => (None, Vec::new(), Vec::new()),
    };

    let rct_only = if spec.rct_interval {
        Some(rct_only_interval(data, spec.alpha)?)
    } else {
        None
    };

    let gap = orthogonality_gap(&panel, fit.psi_eb, tau2.tau2)?;
    let light_panel = EstimatorPanel::new(
        panel.labels().to_vec(),
        panel.estimates().to_vec(),
        panel.variances().to_vec(),
    )?;
    Ok(IvRunOutcome {
        seed: cfg.seed,
        n,
        panel: light_panel,
        psi_eb: fit.psi_eb,
        tau2,
        tau2_pm,
        max_weight: max_weight(&fit),
        orthogonality_gap: gap,
        sandwich,
        subsampling,
        subsample_records,
        subsample_failures,
        rct_only,
        excluded: built.excluded,
        clamp_rate: generated.clamp_rate,
    })
}

/// Parallel replicates on derived seeds; returns `(seed, outcome)` pairs in
/// replicate order.
pub fn run_iv_replicates(
    cfg: &SimConfig,
    spec: &IvRunSpec,
    reps: usize,
) -> Vec<(u64, Result<IvRunOutcome>)> {
    (0..reps)
        .into_par_iter()
        .map(|rep| {
            let seed = child_seed(cfg.seed, rep as u64);
            let rep_cfg = SimConfig { seed, ..cfg.clone() };
            (seed, run_iv_once(&rep_cfg, spec))
        })
        .collect()
}

/// Output of one meta-level conformal run.
///
/// Two coverage readings are recorded. `covered_*` is the event the
/// conformal argument actually calibrates: the interval captures the
/// mixing center (`psi_star`), equivalently the new functional's split
/// score falls below the calibrated quantile up to training error. The
/// `latent_in_*` flags record the literal "latent draw inside the
/// interval" event, which is structurally conservative whenever the
/// sampling noise is small relative to the heterogeneity (the center
/// already contains the latent deviation), and coincides with `covered_*`
/// in the boundary phase where the latent target degenerates to
/// `psi_star`.
#[derive(Debug, Clone)]
pub struct ConformalRepOutcome {
    pub seed: u64,
    pub tau2_train: f64,
    pub psi_train: f64,
    pub q_hat: f64,
    pub j_cal: usize,
    pub two_sided: IntervalReport,
    pub signed: IntervalReport,
    /// Latent target of the held-out functional.
    pub new_psi: f64,
    pub new_psi_hat: f64,
    pub new_v: f64,
    pub covered_two_sided: bool,
    pub covered_signed: bool,
    pub latent_in_two_sided: bool,
    pub latent_in_signed: bool,
    pub warnings: Vec<String>,
    /// DKW band at beta = 0.05 for the realized calibration size.
    pub dkw_band_05: f64,
}

/// One meta-level draw, split, fit, and both prediction intervals for the
/// held-out functional. The split seed shares the config seed but lives on
/// its own stream.
pub fn run_conformal_once(cfg: &MetaConfig, alpha: f64) -> Result<ConformalRepOutcome> {
    let draw = gen_meta_panel(cfg)?;
    let plan = split_panel(&draw.panel, cfg.seed)?;
    let fit = conformal_fit(&draw.panel, &plan, alpha)?;
    let two_sided =
        conformal_interval(&fit, draw.new_psi_hat, draw.new_v, ConformalMode::TwoSidedAbs)?;
    let signed =
        conformal_interval(&fit, draw.new_psi_hat, draw.new_v, ConformalMode::SignedLower)?;
    Ok(ConformalRepOutcome {
        seed: cfg.seed,
        tau2_train: fit.tau2_train,
        psi_train: fit.psi_train,
        q_hat: fit.q_hat,
        j_cal: plan.cal_idx.len(),
        covered_two_sided: two_sided.contains(cfg.psi_star),
        covered_signed: signed.contains(cfg.psi_star),
        latent_in_two_sided: two_sided.contains(draw.new_psi),
        latent_in_signed: signed.contains(draw.new_psi),
        two_sided,
        signed,
        new_psi: draw.new_psi,
        new_psi_hat: draw.new_psi_hat,
        new_v: draw.new_v,
        warnings: fit.warnings,
        dkw_band_05: dkw_band(plan.cal_idx.len(), 0.05)?,
    })
}

/// Parallel conformal replicates on derived seeds.
pub fn run_conformal_replicates(
    cfg: &MetaConfig,
    alpha: f64,
    reps: usize,
) -> Vec<(u64, Result<ConformalRepOutcome>)> {
    (0..reps)
        .into_par_iter()
        .map(|rep| {
            let seed = child_seed(cfg.seed, rep as u64);
            let rep_cfg = MetaConfig { seed, ..cfg.clone() };
            (seed, run_conformal_once(&rep_cfg, alpha))
        })
        .collect()
}

/// Coverage summary over replicates of one method in one scenario.
#[derive(Debug, Clone, Serialize)]
pub struct CoverageRow {
    pub scenario: String,
    pub method: String,
    pub reps: usize,
    pub failures: usize,
    pub coverage: f64,
    pub mean_width: f64,
}

/// Aggregate coverage of a target value over interval replicates.
pub fn summarize_coverage(
    scenario: &str,
    method: &str,
    target: f64,
    reports: &[Option<&IntervalReport>],
) -> CoverageRow {
    let mut covered = 0usize;
    let mut widths = 0.0;
    let mut ok = 0usize;
    for r in reports.iter().flatten() {
        ok += 1;
        if r.contains(target) {
            covered += 1;
        }
        if r.width().is_finite() {
            widths += r.width();
        }
    }
    CoverageRow {
        scenario: scenario.into(),
        method: method.into(),
        reps: reports.len(),
        failures: reports.len() - ok,
        coverage: if ok == 0 { f64::NAN } else { covered as f64 / ok as f64 },
        mean_width: if ok == 0 { f64::NAN } else { widths / ok as f64 },
    }
}

/// Convenience wrapper returning `Err` only on configuration problems;
/// per-replicate failures are embedded.
pub fn check_reps(outcomes: &[(u64, Result<IvRunOutcome>)]) -> Result<()> {
    if outcomes.iter().all(|(_, r)| r.is_err()) {
        if let Some((_, Err(e))) = outcomes.first() {
            return Err(Error::InvalidArgument(format!(
                "every replicate failed; first error: {e}"
            )));
        }
    }
    Ok(())
}
