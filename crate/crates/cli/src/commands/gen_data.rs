//! `gen-data`: write one generated dataset in its design's CSV format.

use std::path::Path;

use ebpool::dgp::{
    gen_covariate_data, gen_iv_environments, gen_rdd, gen_staggered, gen_two_period,
};
use ebpool::io;
use ebpool::{Error, Result};

use crate::config::Scenario;
use crate::manifest::{emit, RunManifest};

pub fn run(scenario: &Scenario, out_dir: &Path) -> Result<()> {
    let name = scenario.out_file.clone().unwrap_or_else(|| "data.csv".into());
    let (csv, seed) = match scenario.kind.as_str() {
        "iv-environments" => {
            let cfg = scenario.require_sim()?;
            let generated = gen_iv_environments(cfg)?;
            println!(
                "propensities: {:?} (clamp rate {:.4})",
                generated.propensities, generated.clamp_rate
            );
            (io::env_to_csv(&generated.data), cfg.seed)
        }
        "covariate" => {
            let cfg = scenario.covariate.as_ref().ok_or_else(|| {
                Error::InvalidArgument("[scenario.covariate] table is required".into())
            })?;
            (io::covariate_to_csv(&gen_covariate_data(cfg)?), cfg.seed)
        }
        "two-period" => {
            let cfg = scenario.two_period.as_ref().ok_or_else(|| {
                Error::InvalidArgument("[scenario.two_period] table is required".into())
            })?;
            (io::two_period_to_csv(&gen_two_period(cfg)?), cfg.seed)
        }
        "staggered" => {
            let cfg = scenario.staggered.as_ref().ok_or_else(|| {
                Error::InvalidArgument("[scenario.staggered] table is required".into())
            })?;
            (io::staggered_to_csv(&gen_staggered(cfg)?), cfg.seed)
        }
        "rdd" => {
            let cfg = scenario
                .rdd
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("[scenario.rdd] table is required".into()))?;
            (io::rdd_to_csv(&gen_rdd(cfg)?), cfg.seed)
        }
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown gen-data design {other:?}"
            )))
        }
    };

    let mut manifest = RunManifest::new("gen-data", scenario, Some(seed));
    let path = emit(&mut manifest, out_dir, &name, &csv)?;
    manifest.write(out_dir)?;
    println!("wrote {}", path.display());
    Ok(())
}
