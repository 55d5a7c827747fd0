//! `single-run`: one dataset from the IV-environments design, the full
//! pooling chain, and all three intervals.

use std::path::Path;

use ebpool::heterogeneity::Tau2Result;
use ebpool::inference::{squared_length_ratio, IntervalReport};
use ebpool::io::panel_to_csv;
use ebpool::scenarios::{run_iv_once, IvRunSpec, SubsampleSettings};
use ebpool::Result;
use serde::Serialize;

use crate::config::Scenario;
use crate::manifest::{emit, RunManifest};

#[derive(Serialize)]
struct Intervals<'a> {
    sandwich: &'a IntervalReport,
    subsampling: &'a IntervalReport,
    rct_only: &'a IntervalReport,
}

#[derive(Serialize)]
struct Summary<'a> {
    n: usize,
    j: usize,
    psi_eb: f64,
    tau2_pairwise: &'a Tau2Result,
    tau2_paule_mandel: &'a Tau2Result,
    max_weight: f64,
    orthogonality_gap: f64,
    intervals: Intervals<'a>,
    squared_length_ratio_subsampling_vs_rct: f64,
    effective_sample_size_gain: f64,
    excluded: Vec<ExcludedOut<'a>>,
    propensity_clamp_rate: f64,
    seed: u64,
    config: &'a Scenario,
}

#[derive(Serialize)]
struct ExcludedOut<'a> {
    label: &'a str,
    reason: &'a str,
}

fn histogram_csv(records: &[(String, Vec<f64>)]) -> String {
    const BINS: usize = 30;
    let mut out = String::from("metric,bin_lo,bin_hi,count\n");
    for (metric, values) in records {
        if values.is_empty() {
            continue;
        }
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = (hi - lo).max(1e-12);
        let mut counts = [0usize; BINS];
        for &v in values {
            let k = (((v - lo) / span) * BINS as f64) as usize;
            counts[k.min(BINS - 1)] += 1;
        }
        for (k, count) in counts.iter().enumerate() {
            let b_lo = lo + span * k as f64 / BINS as f64;
            let b_hi = lo + span * (k + 1) as f64 / BINS as f64;
            out.push_str(&format!("{metric},{b_lo},{b_hi},{count}\n"));
        }
    }
    out
}

pub fn run(scenario: &Scenario, out_dir: &Path) -> Result<()> {
    let sim = scenario.require_sim()?;
    let panel_cfg = scenario.panel.clone().unwrap_or_default();
    let sub_cfg = scenario.subsample.clone().unwrap_or(crate::config::SubsampleSection {
        m: None,
        b: 500,
    });
    let spec = IvRunSpec {
        alpha: scenario.alpha(),
        include_rct: panel_cfg.include_rct,
        min_first_stage: panel_cfg.min_first_stage,
        sandwich: true,
        subsample: Some(SubsampleSettings {
            m: sub_cfg.m,
            b: sub_cfg.b,
        }),
        rct_interval: true,
        paule_mandel: true,
    };
    let outcome = run_iv_once(sim, &spec)?;

    let sandwich = outcome.sandwich.as_ref().expect("requested");
    let subsampling = outcome.subsampling.as_ref().expect("requested");
    let rct_only = outcome.rct_only.as_ref().expect("requested");
    let ratio = squared_length_ratio(subsampling, rct_only)?;

    let summary = Summary {
        n: outcome.n,
        j: outcome.panel.len(),
        psi_eb: outcome.psi_eb,
        tau2_pairwise: &outcome.tau2,
        tau2_paule_mandel: outcome.tau2_pm.as_ref().expect("requested"),
        max_weight: outcome.max_weight,
        orthogonality_gap: outcome.orthogonality_gap,
        intervals: Intervals {
            sandwich,
            subsampling,
            rct_only,
        },
        squared_length_ratio_subsampling_vs_rct: ratio,
        effective_sample_size_gain: 1.0 / ratio,
        excluded: outcome
            .excluded
            .iter()
            .map(|e| ExcludedOut {
                label: &e.label,
                reason: &e.reason,
            })
            .collect(),
        propensity_clamp_rate: outcome.clamp_rate,
        seed: sim.seed,
        config: scenario,
    };

    let mut manifest = RunManifest::new("single-run", scenario, Some(sim.seed));
    emit(
        &mut manifest,
        out_dir,
        "summary.json",
        &serde_json::to_string_pretty(&summary)?,
    )?;
    emit(&mut manifest, out_dir, "panel.csv", &panel_to_csv(&outcome.panel)?)?;

    let mut replicates = String::from("replicate,psi_b,tau2_b,d\n");
    for r in &outcome.subsample_records {
        replicates.push_str(&format!("{},{},{},{}\n", r.replicate, r.psi_b, r.tau2_b, r.d));
    }
    emit(&mut manifest, out_dir, "replicates.csv", &replicates)?;

    let hist = histogram_csv(&[
        (
            "psi_b".into(),
            outcome.subsample_records.iter().map(|r| r.psi_b).collect(),
        ),
        (
            "log_tau2_b_plus_1".into(),
            outcome
                .subsample_records
                .iter()
                .map(|r| (r.tau2_b + 1.0).ln())
                .collect(),
        ),
    ]);
    emit(&mut manifest, out_dir, "histograms.csv", &hist)?;
    manifest.write(out_dir)?;

    println!("single-run: psi_eb = {:.6}, tau2 = {:.6}", outcome.psi_eb, outcome.tau2.tau2);
    print_interval_table(&[sandwich, subsampling, rct_only]);
    println!(
        "squared-length ratio (subsampling / rct-only): {ratio:.4} (effective sample-size gain {:.1})",
        1.0 / ratio
    );
    if !outcome.subsample_failures.is_empty() {
        println!(
            "note: {} of {} subsample replicates failed",
            outcome.subsample_failures.len(),
            sub_cfg.b
        );
    }
    Ok(())
}

pub fn print_interval_table(reports: &[&IntervalReport]) {
    println!(
        "{:<14} {:>12} {:>12} {:>12} {:>8}",
        "method", "point", "lo", "hi", "level"
    );
    for r in reports {
        println!(
            "{:<14} {:>12.6} {:>12.6} {:>12.6} {:>8.2}",
            format!("{:?}", r.method),
            r.point,
            r.lo,
            r.hi,
            r.level
        );
    }
}
