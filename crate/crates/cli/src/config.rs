//! Run configuration: one TOML or JSON file per command with a `[scenario]`
//! table. CLI flags override file values (flag > file).

use ebpool::dgp::{
    CovariateConfig, MetaConfig, RddConfig, SimConfig, StaggeredConfig, TwoPeriodConfig,
};
use ebpool::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigFile {
    pub scenario: Scenario,
}

/// What a run does; `kind` selects the branch and the matching sub-table
/// supplies its parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub kind: String,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub reps: Option<usize>,
    /// Output file name for `gen-data`.
    #[serde(default)]
    pub out_file: Option<String>,
    /// Constant value and target for the smoke scenario.
    #[serde(default)]
    pub constant: Option<f64>,
    #[serde(default)]
    pub target: Option<f64>,
    #[serde(default)]
    pub sim: Option<SimConfig>,
    #[serde(default)]
    pub meta: Option<MetaConfig>,
    #[serde(default)]
    pub covariate: Option<CovariateConfig>,
    #[serde(default)]
    pub two_period: Option<TwoPeriodConfig>,
    #[serde(default)]
    pub staggered: Option<StaggeredConfig>,
    #[serde(default)]
    pub rdd: Option<RddConfig>,
    #[serde(default)]
    pub panel: Option<PanelSection>,
    #[serde(default)]
    pub subsample: Option<SubsampleSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PanelSection {
    #[serde(default = "default_true")]
    pub include_rct: bool,
    #[serde(default = "default_min_first_stage")]
    pub min_first_stage: f64,
}

impl Default for PanelSection {
    fn default() -> Self {
        Self {
            include_rct: true,
            min_first_stage: ebpool::functionals::DEFAULT_MIN_FIRST_STAGE,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubsampleSection {
    /// Subsample size; omitted means floor(n^{2/3}).
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default = "default_b")]
    pub b: usize,
}

fn default_true() -> bool {
    true
}

fn default_min_first_stage() -> f64 {
    ebpool::functionals::DEFAULT_MIN_FIRST_STAGE
}

fn default_b() -> usize {
    500
}

/// Load a config file; the format is chosen by extension (`.json` is JSON,
/// anything else parses as TOML).
pub fn load(path: &Path) -> Result<ConfigFile> {
    let text = std::fs::read_to_string(path)?;
    if path.extension().and_then(|e| e.to_str()) == Some("json") {
        Ok(serde_json::from_str(&text)?)
    } else {
        toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }
}

impl Scenario {
    /// Flag-over-file precedence for the run seed.
    pub fn apply_overrides(&mut self, seed: Option<u64>, reps: Option<usize>) {
        if let Some(s) = seed {
            self.seed = Some(s);
            if let Some(sim) = &mut self.sim {
                sim.seed = s;
            }
            if let Some(meta) = &mut self.meta {
                meta.seed = s;
            }
            if let Some(c) = &mut self.covariate {
                c.seed = s;
            }
            if let Some(t) = &mut self.two_period {
                t.seed = s;
            }
            if let Some(st) = &mut self.staggered {
                st.seed = s;
            }
            if let Some(r) = &mut self.rdd {
                r.seed = s;
            }
        } else if let Some(s) = self.seed {
            // scenario-level seed flows into the design table when the
            // table did not set its own
            if let Some(sim) = &mut self.sim {
                if sim.seed == 0 {
                    sim.seed = s;
                }
            }
            if let Some(meta) = &mut self.meta {
                if meta.seed == 0 {
                    meta.seed = s;
                }
            }
        }
        if let Some(r) = reps {
            self.reps = Some(r);
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(0.1)
    }

    pub fn require_sim(&self) -> Result<&SimConfig> {
        self.sim
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("[scenario.sim] table is required".into()))
    }

    pub fn require_meta(&self) -> Result<&MetaConfig> {
        self.meta
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("[scenario.meta] table is required".into()))
    }
}
