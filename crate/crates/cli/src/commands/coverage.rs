//! `coverage`: replicated Monte Carlo evaluation of interval coverage for
//! a named scenario, one CSV row per (method, scenario).

use std::path::Path;

use ebpool::scenarios::{
    run_conformal_replicates, run_iv_replicates, summarize_coverage, CoverageRow, IvRunSpec,
    SubsampleSettings,
};
use ebpool::{Error, Result};

use crate::config::Scenario;
use crate::manifest::{emit, RunManifest};

fn rows_to_csv(rows: &[CoverageRow]) -> String {
    let mut out = String::from("scenario,method,reps,failures,coverage,mean_width\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.scenario, r.method, r.reps, r.failures, r.coverage, r.mean_width
        ));
    }
    out
}

pub fn run(scenario: &Scenario, out_dir: &Path) -> Result<()> {
    let reps = scenario.reps.unwrap_or(100);
    if reps < 100 {
        return Err(Error::InvalidArgument(format!(
            "coverage needs at least 100 replications, got {reps}"
        )));
    }
    let alpha = scenario.alpha();
    let rows = match scenario.kind.as_str() {
        "iv-exact" => iv_exact(scenario, reps, alpha)?,
        "meta-tau2-positive" | "meta-tau2-zero" => meta_conformal(scenario, reps, alpha)?,
        "smoke-constant" => smoke(scenario, reps)?,
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown coverage scenario kind {other:?}"
            )))
        }
    };

    let mut manifest = RunManifest::new("coverage", scenario, scenario.seed);
    emit(&mut manifest, out_dir, "coverage.csv", &rows_to_csv(&rows))?;
    manifest.write(out_dir)?;
    for r in &rows {
        println!(
            "{:<22} {:<28} coverage {:.4} (reps {}, failures {}, mean width {:.4})",
            r.scenario, r.method, r.coverage, r.reps, r.failures, r.mean_width
        );
    }
    Ok(())
}

fn iv_exact(scenario: &Scenario, reps: usize, alpha: f64) -> Result<Vec<CoverageRow>> {
    let sim = scenario.require_sim()?;
    let panel_cfg = scenario.panel.clone().unwrap_or_default();
    let spec = IvRunSpec {
        alpha,
        include_rct: panel_cfg.include_rct,
        min_first_stage: panel_cfg.min_first_stage,
        sandwich: true,
        subsample: scenario.subsample.as_ref().map(|s| SubsampleSettings {
            m: s.m,
            b: s.b,
        }),
        rct_interval: true,
        paule_mandel: false,
    };
    let outcomes = run_iv_replicates(sim, &spec, reps);
    ebpool::scenarios::check_reps(&outcomes)?;

    let sandwich: Vec<_> = outcomes
        .iter()
        .map(|(_, r)| r.as_ref().ok().and_then(|o| o.sandwich.as_ref()))
        .collect();
    let rct: Vec<_> = outcomes
        .iter()
        .map(|(_, r)| r.as_ref().ok().and_then(|o| o.rct_only.as_ref()))
        .collect();
    let mut rows = vec![
        summarize_coverage("iv-exact", "sandwich", sim.psi_star, &sandwich),
        summarize_coverage("iv-exact", "rct-only", sim.psi_star, &rct),
    ];
    if spec.subsample.is_some() {
        let sub: Vec<_> = outcomes
            .iter()
            .map(|(_, r)| r.as_ref().ok().and_then(|o| o.subsampling.as_ref()))
            .collect();
        rows.push(summarize_coverage("iv-exact", "subsampling", sim.psi_star, &sub));
    }
    Ok(rows)
}

fn meta_conformal(scenario: &Scenario, reps: usize, alpha: f64) -> Result<Vec<CoverageRow>> {
    let mut meta = scenario.require_meta()?.clone();
    if scenario.kind == "meta-tau2-zero" {
        meta.tau2 = 0.0;
    }
    meta.synth_influence = false;
    let outcomes = run_conformal_replicates(&meta, alpha, reps);
    let name = scenario.kind.clone();

    let mut rows = Vec::new();
    let mut push = |method: &str, pick: &dyn Fn(&ebpool::scenarios::ConformalRepOutcome) -> (bool, f64)| {
        let mut covered = 0usize;
        let mut width = 0.0;
        let mut ok = 0usize;
        for (_, r) in &outcomes {
            if let Ok(o) = r {
                ok += 1;
                let (c, w) = pick(o);
                covered += c as usize;
                if w.is_finite() {
                    width += w;
                }
            }
        }
        rows.push(CoverageRow {
            scenario: name.clone(),
            method: method.into(),
            reps,
            failures: reps - ok,
            coverage: covered as f64 / ok.max(1) as f64,
            mean_width: width / ok.max(1) as f64,
        });
    };
    push("conformal-two-sided", &|o| {
        (o.covered_two_sided, o.two_sided.width())
    });
    push("conformal-signed", &|o| (o.covered_signed, o.signed.width()));
    push("conformal-two-sided-latent", &|o| {
        (o.latent_in_two_sided, o.two_sided.width())
    });
    push("conformal-signed-latent", &|o| {
        (o.latent_in_signed, o.signed.width())
    });
    Ok(rows)
}

/// Degenerate smoke scenario: a constant pipeline yields a point interval,
/// so the coverage column is exactly 0 or 1.
fn smoke(scenario: &Scenario, reps: usize) -> Result<Vec<CoverageRow>> {
    let constant = scenario.constant.unwrap_or(0.0);
    let target = scenario.target.unwrap_or(constant);
    let covered = (constant == target) as usize * reps;
    Ok(vec![CoverageRow {
        scenario: "smoke-constant".into(),
        method: "constant".into(),
        reps,
        failures: 0,
        coverage: covered as f64 / reps as f64,
        mean_width: 0.0,
    }])
}
