//! `conformal`: one meta-level draw, split, fit, and prediction intervals
//! for the held-out functional, with diagnostics.

use std::path::Path;

use ebpool::conformal::{
    conformal_fit, conformal_interval, dkw_band, noise_dominance_diag, split_panel, ConformalFit,
    SplitPlan,
};
use ebpool::dgp::gen_meta_panel;
use ebpool::inference::{ConformalMode, IntervalReport};
use ebpool::{Error, Result};
use serde::Serialize;

use crate::config::Scenario;
use crate::manifest::{emit, RunManifest};

#[derive(Serialize)]
struct Diagnostics {
    /// DKW band half-width at beta = 0.05 for the realized calibration size.
    dkw_band_beta05: f64,
    /// max_j sqrt(v_j / tau2_train); absent at the tau2 = 0 boundary or
    /// when the panel carries no influence matrix.
    #[serde(skip_serializing_if = "Option::is_none")]
    noise_dominance: Option<f64>,
    warnings: Vec<String>,
}

#[derive(Serialize)]
struct HeldOut {
    psi_hat: f64,
    v: f64,
    /// Latent target of the held-out functional (known in simulation).
    latent_psi: f64,
}

#[derive(Serialize)]
struct IntervalsOut {
    /// The half-line the score set defines (hi serializes as null = +inf).
    signed: IntervalReport,
    two_sided: IntervalReport,
}

#[derive(Serialize)]
struct ConformalOut<'a> {
    split: &'a SplitPlan,
    fit: &'a ConformalFit,
    intervals: IntervalsOut,
    held_out: HeldOut,
    diagnostics: Diagnostics,
    seed: u64,
    config: &'a Scenario,
}

pub fn run(scenario: &Scenario, out_dir: &Path) -> Result<()> {
    let meta = scenario.require_meta()?;
    let alpha = scenario.alpha();
    let draw = gen_meta_panel(meta)?;
    let plan = split_panel(&draw.panel, meta.seed)?;
    let fit = conformal_fit(&draw.panel, &plan, alpha)?;
    let signed = conformal_interval(&fit, draw.new_psi_hat, draw.new_v, ConformalMode::SignedLower)?;
    let two_sided =
        conformal_interval(&fit, draw.new_psi_hat, draw.new_v, ConformalMode::TwoSidedAbs)?;

    let noise_dominance = if fit.tau2_train > 0.0 {
        match noise_dominance_diag(&draw.panel, fit.tau2_train) {
            Ok(d) => Some(d),
            Err(Error::MissingInfluence) => None,
            Err(e) => return Err(e),
        }
    } else {
        None
    };

    let out = ConformalOut {
        split: &plan,
        fit: &fit,
        intervals: IntervalsOut {
            signed: signed.clone(),
            two_sided: two_sided.clone(),
        },
        held_out: HeldOut {
            psi_hat: draw.new_psi_hat,
            v: draw.new_v,
            latent_psi: draw.new_psi,
        },
        diagnostics: Diagnostics {
            dkw_band_beta05: dkw_band(plan.cal_idx.len(), 0.05)?,
            noise_dominance,
            warnings: fit.warnings.clone(),
        },
        seed: meta.seed,
        config: scenario,
    };

    let mut manifest = RunManifest::new("conformal", scenario, Some(meta.seed));
    emit(
        &mut manifest,
        out_dir,
        "conformal.json",
        &serde_json::to_string_pretty(&out)?,
    )?;
    manifest.write(out_dir)?;

    println!(
        "conformal: tau2_train = {:.6}, q_hat = {:.4}, J_cal = {}",
        fit.tau2_train,
        fit.q_hat,
        plan.cal_idx.len()
    );
    super::single_run::print_interval_table(&[&signed, &two_sided]);
    for w in &fit.warnings {
        println!("warning: {w}");
    }
    Ok(())
}
