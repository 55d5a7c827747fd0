//! Seedable data generators for every design, plus the RNG stream
//! discipline used across the crate.
//!
//! All randomness comes from ChaCha8, a counter-based stream cipher RNG,
//! keyed by a 64-bit seed. Independent draws for different purposes (and
//! for parallel replicates) come from distinct 64-bit ChaCha streams with
//! the published layout `purpose << 48 | index`, so identical seeds yield
//! bit-identical output regardless of scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::functionals::{
    Cohort, CovariateDataset, EnvDataset, RddDataset, StaggeredPanel, TwoPeriodPanel,
};
use crate::panel::{EstimatorPanel, InfluenceMatrix};
use crate::{Error, Result};

/// Stream purposes; the high 16 bits of a ChaCha stream id.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub enum StreamPurpose {
    Propensity = 1,
    EnvData = 2,
    MetaLatent = 3,
    MetaNoise = 4,
    MetaInfluence = 5,
    Covariate = 6,
    TwoPeriod = 7,
    Staggered = 8,
    Rdd = 9,
    Replicate = 10,
    Subsample = 11,
    Split = 12,
}

/// ChaCha8 generator on the stream `(purpose, index)` of `seed`.
pub fn stream_rng(seed: u64, purpose: StreamPurpose, index: u64) -> ChaCha8Rng {
    debug_assert!(index < 1 << 48);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 48) | index);
    rng
}

/// Derived seed for replicate `index`, for parallel Monte Carlo loops.
pub fn child_seed(seed: u64, index: u64) -> u64 {
    stream_rng(seed, StreamPurpose::Replicate, index).random()
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

// ---------------------------------------------------------------------------
// IV environments design
// ---------------------------------------------------------------------------

/// Configuration of the IV-environments generator. Environment 0 is a
/// randomized study with propensity 1/2; environments `1..q` are
/// observational with propensities drawn uniformly from
/// `(propensity_lo, propensity_hi)` and treatment tilted by a latent
/// confounder that also enters the outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub q: usize,
    pub n_rct: usize,
    pub n_obs: usize,
    pub psi_star: f64,
    pub propensity_lo: f64,
    pub propensity_hi: f64,
    /// Strength of the latent confounder in both treatment and outcome.
    pub confounding: f64,
    pub outcome_sd: f64,
    /// Unit-level effect heterogeneity, independent of everything else, so
    /// every subset functional still targets `psi_star` exactly.
    #[serde(default)]
    pub effect_heterogeneity_sd: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SimConfig {
    /// The single-run illustration design: `q = 7`, 50 randomized units,
    /// 1000 per observational environment, propensity prior `U(0.2, 0.8)`.
    pub fn paper_design(seed: u64) -> Self {
        Self {
            q: 7,
            n_rct: 50,
            n_obs: 1000,
            psi_star: 1.5,
            propensity_lo: 0.2,
            propensity_hi: 0.8,
            confounding: 1.0,
            outcome_sd: 1.0,
            effect_heterogeneity_sd: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.q < 2 {
            return Err(Error::InvalidArgument("q must be at least 2".into()));
        }
        if self.n_rct < 2 || self.n_obs < 2 {
            return Err(Error::InvalidArgument(
                "environment sizes must be at least 2".into(),
            ));
        }
        if !(self.propensity_lo > 0.0
            && self.propensity_lo < self.propensity_hi
            && self.propensity_hi < 1.0)
        {
            return Err(Error::InvalidArgument(format!(
                "propensity bounds must satisfy 0 < lo < hi < 1, got ({}, {})",
                self.propensity_lo, self.propensity_hi
            )));
        }
        if self.confounding < 0.0 {
            return Err(Error::InvalidArgument("confounding must be >= 0".into()));
        }
        if !(self.outcome_sd > 0.0) {
            return Err(Error::InvalidArgument("outcome_sd must be > 0".into()));
        }
        if self.effect_heterogeneity_sd < 0.0 {
            return Err(Error::InvalidArgument(
                "effect_heterogeneity_sd must be >= 0".into(),
            ));
        }
        Ok(())
    }

    pub fn total_n(&self) -> usize {
        self.n_rct + (self.q - 1) * self.n_obs
    }
}

/// Generated IV-environments data plus the realized design quantities.
#[derive(Debug, Clone)]
pub struct IvEnvironments {
    pub data: EnvDataset,
    /// Realized propensities per environment (index 0 is the RCT's 0.5).
    pub propensities: Vec<f64>,
    /// Confounder-to-treatment tilt, sized so clamping stays rare.
    pub kappa: f64,
    /// Fraction of observational draws whose treatment probability was
    /// clamped into [0.01, 0.99].
    pub clamp_rate: f64,
}

/// Treatment probabilities are clamped into this range.
const PROPENSITY_CLAMP: (f64, f64) = (0.01, 0.99);

/// Generate one dataset from the IV-environments design.
///
/// Outcome model: `Y = psi_i A + confounding * U + outcome_sd * eps` with
/// `U ~ N(0,1)` latent, `psi_i = psi_star + effect_heterogeneity_sd * h_i`
/// independent of everything, which keeps every subset functional centered
/// on `psi_star` while the pooled naive contrast is confounded.
pub fn gen_iv_environments(cfg: &SimConfig) -> Result<IvEnvironments> {
    cfg.validate()?;
    let mut prop_rng = stream_rng(cfg.seed, StreamPurpose::Propensity, 0);
    let mut propensities = vec![0.5];
    for _ in 1..cfg.q {
        let u: f64 = prop_rng.random();
        propensities.push(cfg.propensity_lo + (cfg.propensity_hi - cfg.propensity_lo) * u);
    }

    // tilt scale: keeps P(clamp) below ~0.5% per draw at the tightest margin
    let kappa = if cfg.confounding > 0.0 {
        let margin = propensities[1..]
            .iter()
            .map(|&p| (p - PROPENSITY_CLAMP.0).min(PROPENSITY_CLAMP.1 - p))
            .fold(f64::INFINITY, f64::min);
        margin / (2.807 * cfg.confounding)
    } else {
        0.0
    };

    let total = cfg.total_n();
    let mut z = Vec::with_capacity(total);
    let mut a = Vec::with_capacity(total);
    let mut y = Vec::with_capacity(total);
    let mut clamped = 0usize;
    let mut obs_draws = 0usize;

    for env in 0..cfg.q {
        let n_env = if env == 0 { cfg.n_rct } else { cfg.n_obs };
        let mut rng = stream_rng(cfg.seed, StreamPurpose::EnvData, env as u64);
        for _ in 0..n_env {
            let u = normal(&mut rng);
            let coin: f64 = rng.random();
            let h = normal(&mut rng);
            let eps = normal(&mut rng);

            let treated = if env == 0 {
                coin < 0.5
            } else {
                obs_draws += 1;
                let raw = propensities[env] + cfg.confounding * kappa * u;
                let p = raw.clamp(PROPENSITY_CLAMP.0, PROPENSITY_CLAMP.1);
                if p != raw {
                    clamped += 1;
                }
                coin < p
            };
            let psi_i = cfg.psi_star + cfg.effect_heterogeneity_sd * h;
            let outcome =
                psi_i * treated as u8 as f64 + cfg.confounding * u + cfg.outcome_sd * eps;
            z.push(env);
            a.push(treated as u8);
            y.push(outcome);
        }
    }

    let data = EnvDataset::new(cfg.q, z, a, y)?;
    Ok(IvEnvironments {
        data,
        propensities,
        kappa,
        clamp_rate: if obs_draws == 0 {
            0.0
        } else {
            clamped as f64 / obs_draws as f64
        },
    })
}

// ---------------------------------------------------------------------------
// Meta-level working-model generator
// ---------------------------------------------------------------------------

/// Sampling-variance scheme for the meta-level generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VarianceScheme {
    Constant { v: f64 },
    Uniform { lo: f64, hi: f64 },
    /// One value per functional plus a final entry for the held-out one.
    Explicit { values: Vec<f64> },
}

/// Configuration of the meta-level generator: panels drawn directly from
/// the hierarchical working model with equicorrelated sampling noise.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetaConfig {
    pub j: usize,
    pub psi_star: f64,
    pub tau2: f64,
    pub v: VarianceScheme,
    /// Equicorrelation of the sampling noise across functionals.
    pub rho: f64,
    /// Rows of the synthesized influence matrix (variances scale as Var/n).
    pub n_effective: usize,
    /// Skip influence synthesis for coverage loops that do not need it.
    #[serde(default = "default_true")]
    pub synth_influence: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_true() -> bool {
    true
}

impl MetaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.j < 2 {
            return Err(Error::InvalidArgument("J must be at least 2".into()));
        }
        if self.tau2 < 0.0 {
            return Err(Error::NegativeTau2(self.tau2));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::InvalidArgument(format!(
                "rho must lie in [0,1), got {}",
                self.rho
            )));
        }
        if self.n_effective == 0 {
            return Err(Error::InvalidArgument("n_effective must be positive".into()));
        }
        match &self.v {
            VarianceScheme::Constant { v } if !(*v > 0.0) => Err(Error::InvalidArgument(
                "variance scheme must be positive".into(),
            )),
            VarianceScheme::Uniform { lo, hi } if !(*lo > 0.0 && lo < hi) => {
                Err(Error::InvalidArgument(
                    "variance scheme bounds must satisfy 0 < lo < hi".into(),
                ))
            }
            VarianceScheme::Explicit { values } if values.len() != self.j + 1 => {
                Err(Error::InvalidArgument(format!(
                    "explicit variance scheme needs J + 1 = {} values (last = held-out), got {}",
                    self.j + 1,
                    values.len()
                )))
            }
            _ => Ok(()),
        }
    }
}

/// One draw from the meta-level generator.
#[derive(Debug, Clone)]
pub struct MetaDraw {
    pub panel: EstimatorPanel,
    /// Latent targets `psi_j = psi_star + eps_j` of the panel functionals.
    pub latent: Vec<f64>,
    /// Latent target of the held-out functional (the prediction target).
    pub new_psi: f64,
    /// Its observed estimate and variance.
    pub new_psi_hat: f64,
    pub new_v: f64,
}

/// Draw a panel from the working model: latent targets
/// `psi_j = psi_star + eps_j`, `eps_j ~ N(0, tau2)` i.i.d., and estimates
/// `psi_hat_j = psi_j + xi_j` with equicorrelated noise
/// `xi = sqrt(v) .* (sqrt(rho) g 1 + sqrt(1-rho) e)`.
///
/// A held-out functional indexed `J+1` is drawn from the same law for
/// conformal evaluation. When requested, an influence matrix with
/// `n_effective` i.i.d. rows realizing the same `(v, rho)` structure is
/// synthesized alongside.
pub fn gen_meta_panel(cfg: &MetaConfig) -> Result<MetaDraw> {
    cfg.validate()?;
    let j = cfg.j;
    let tau = cfg.tau2.sqrt();

    let mut latent_rng = stream_rng(cfg.seed, StreamPurpose::MetaLatent, 0);
    let eps: Vec<f64> = (0..=j).map(|_| tau * normal(&mut latent_rng)).collect();

    let mut noise_rng = stream_rng(cfg.seed, StreamPurpose::MetaNoise, 0);
    let variances: Vec<f64> = match &cfg.v {
        VarianceScheme::Constant { v } => vec![*v; j + 1],
        VarianceScheme::Uniform { lo, hi } => (0..=j)
            .map(|_| {
                let u: f64 = noise_rng.random();
                lo + (hi - lo) * u
            })
            .collect(),
        VarianceScheme::Explicit { values } => values.clone(),
    };
    let shared: f64 = normal(&mut noise_rng);
    let sqrt_rho = cfg.rho.sqrt();
    let sqrt_1m_rho = (1.0 - cfg.rho).sqrt();
    let psi_hats: Vec<f64> = (0..=j)
        .map(|k| {
            let e = normal(&mut noise_rng);
            let xi = variances[k].sqrt() * (sqrt_rho * shared + sqrt_1m_rho * e);
            cfg.psi_star + eps[k] + xi
        })
        .collect();

    let influence = if cfg.synth_influence {
        let mut infl_rng = stream_rng(cfg.seed, StreamPurpose::MetaInfluence, 0);
        let n = cfg.n_effective;
        let scale: Vec<f64> = variances[..j]
            .iter()
            .map(|&v| (n as f64 * v).sqrt())
            .collect();
        let mut columns = vec![Vec::with_capacity(n); j];
        for _ in 0..n {
            let g = normal(&mut infl_rng);
            for (col, s) in columns.iter_mut().zip(&scale) {
                let e = normal(&mut infl_rng);
                col.push(s * (sqrt_rho * g + sqrt_1m_rho * e));
            }
        }
        for col in &mut columns {
            let m = crate::stats::mean(col);
            for x in col.iter_mut() {
                *x -= m;
            }
        }
        Some(InfluenceMatrix::from_columns(columns)?)
    } else {
        None
    };

    let labels = (0..j).map(|k| format!("meta_{k}")).collect();
    let panel = EstimatorPanel::with_influence(
        labels,
        psi_hats[..j].to_vec(),
        variances[..j].to_vec(),
        influence,
    )?;
    let latent: Vec<f64> = eps[..j].iter().map(|e| cfg.psi_star + e).collect();
    Ok(MetaDraw {
        panel,
        latent,
        new_psi: cfg.psi_star + eps[j],
        new_psi_hat: psi_hats[j],
        new_v: variances[j],
    })
}

// ---------------------------------------------------------------------------
// Fixture generators for the remaining designs
// ---------------------------------------------------------------------------

/// Covariate-adjustment generator: `W ~ N(0,1)`,
/// `A ~ Bern(sigmoid(intercept + slope W))`,
/// `Y = ate * A + covariate_effect * W + outcome_sd * eps`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CovariateConfig {
    pub n: usize,
    pub ate: f64,
    pub covariate_effect: f64,
    pub propensity_intercept: f64,
    pub propensity_slope: f64,
    pub outcome_sd: f64,
    /// Attach the true propensities to the dataset (otherwise estimators
    /// fit them).
    pub known_propensity: bool,
    pub delta: f64,
    pub seed: u64,
}

pub fn gen_covariate_data(cfg: &CovariateConfig) -> Result<CovariateDataset> {
    if cfg.n < 4 {
        return Err(Error::InvalidArgument("n must be at least 4".into()));
    }
    let mut rng = stream_rng(cfg.seed, StreamPurpose::Covariate, 0);
    let mut w = Vec::with_capacity(cfg.n);
    let mut a = Vec::with_capacity(cfg.n);
    let mut y = Vec::with_capacity(cfg.n);
    let mut pi = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        let wi = normal(&mut rng);
        let eta = cfg.propensity_intercept + cfg.propensity_slope * wi;
        let p = 1.0 / (1.0 + (-eta).exp());
        let coin: f64 = rng.random();
        let eps = normal(&mut rng);
        let ai = (coin < p) as u8;
        w.push(wi);
        a.push(ai);
        y.push(cfg.ate * ai as f64 + cfg.covariate_effect * wi + cfg.outcome_sd * eps);
        pi.push(p);
    }
    CovariateDataset::new(1, w, a, y, cfg.known_propensity.then_some(pi), cfg.delta)
}

/// Two-period generator with exact parallel trends: every group shares the
/// common trend, and group 0 additionally receives `att` post-treatment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TwoPeriodConfig {
    pub n_treated: usize,
    pub n_controls: Vec<usize>,
    pub att: f64,
    pub common_trend: f64,
    /// Spread of time-invariant group levels (differenced away).
    pub group_level_sd: f64,
    pub noise_sd: f64,
    pub seed: u64,
}

pub fn gen_two_period(cfg: &TwoPeriodConfig) -> Result<TwoPeriodPanel> {
    if cfg.n_treated < 2 || cfg.n_controls.iter().any(|&n| n < 2) {
        return Err(Error::InvalidArgument(
            "each group needs at least 2 units".into(),
        ));
    }
    let mut rng = stream_rng(cfg.seed, StreamPurpose::TwoPeriod, 0);
    let k = cfg.n_controls.len();
    let levels: Vec<f64> = (0..=k).map(|_| cfg.group_level_sd * normal(&mut rng)).collect();
    let mut c = Vec::new();
    let mut y_pre = Vec::new();
    let mut y_post = Vec::new();
    for g in 0..=k {
        let size = if g == 0 { cfg.n_treated } else { cfg.n_controls[g - 1] };
        for _ in 0..size {
            let pre = levels[g] + cfg.noise_sd * normal(&mut rng);
            let post = levels[g]
                + cfg.common_trend
                + if g == 0 { cfg.att } else { 0.0 }
                + cfg.noise_sd * normal(&mut rng);
            c.push(g);
            y_pre.push(pre);
            y_post.push(post);
        }
    }
    TwoPeriodPanel::new(k, c, y_pre, y_post)
}

/// Treatment-effect profile for the staggered generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EffectProfile {
    Zero,
    Constant { att: f64 },
    /// `att(g, t) = scale * (t - g + 1)`.
    LinearRamp { scale: f64 },
}

impl EffectProfile {
    pub fn att(&self, g: usize, t: usize) -> f64 {
        if t < g {
            return 0.0;
        }
        match self {
            EffectProfile::Zero => 0.0,
            EffectProfile::Constant { att } => *att,
            EffectProfile::LinearRamp { scale } => scale * (t - g + 1) as f64,
        }
    }
}

/// Staggered-adoption generator with exact no-anticipation and parallel
/// trends: `Y_it = alpha_g + lambda_t + att(g,t) 1{t >= g} + noise`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StaggeredConfig {
    /// `(first treated period g >= 2, cohort size)` pairs.
    pub cohorts: Vec<(usize, usize)>,
    pub n_never: usize,
    pub t_max: usize,
    pub effect: EffectProfile,
    pub cohort_level_sd: f64,
    pub trend_sd: f64,
    pub noise_sd: f64,
    pub seed: u64,
}

pub fn gen_staggered(cfg: &StaggeredConfig) -> Result<StaggeredPanel> {
    if cfg.n_never < 2 || cfg.cohorts.iter().any(|&(_, size)| size < 2) {
        return Err(Error::InvalidArgument(
            "each cohort needs at least 2 units".into(),
        ));
    }
    let mut rng = stream_rng(cfg.seed, StreamPurpose::Staggered, 0);
    let trends: Vec<f64> = (0..cfg.t_max).map(|_| cfg.trend_sd * normal(&mut rng)).collect();
    let mut cohort = Vec::new();
    let mut y = Vec::new();
    let mut groups: Vec<(Cohort, usize)> = cfg
        .cohorts
        .iter()
        .map(|&(g, size)| (Cohort::Treated(g), size))
        .collect();
    groups.push((Cohort::Never, cfg.n_never));
    for (membership, size) in groups {
        let level = cfg.cohort_level_sd * normal(&mut rng);
        for _ in 0..size {
            cohort.push(membership);
            for t in 1..=cfg.t_max {
                let att = match membership {
                    Cohort::Treated(g) => cfg.effect.att(g, t),
                    Cohort::Never => 0.0,
                };
                y.push(level + trends[t - 1] + att + cfg.noise_sd * normal(&mut rng));
            }
        }
    }
    StaggeredPanel::new(cfg.t_max, cohort, y)
}

/// First-stage specification for fuzzy RDD data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FuzzyFirstStage {
    /// Treatment probability below the cutoff.
    pub base: f64,
    /// Jump in treatment probability at the cutoff.
    pub jump: f64,
}

/// RDD generator: running variable uniform around each cutoff, linear
/// baseline, a jump of `effect` at the cutoff (sharp) or a first-stage
/// probability jump with LATE `effect` (fuzzy).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RddConfig {
    pub n_per_site: usize,
    pub cutoffs: Vec<f64>,
    pub effect: f64,
    pub slope: f64,
    pub noise_sd: f64,
    pub x_halfwidth: f64,
    pub fuzzy: Option<FuzzyFirstStage>,
    pub seed: u64,
}

pub fn gen_rdd(cfg: &RddConfig) -> Result<RddDataset> {
    if cfg.n_per_site < 20 {
        return Err(Error::InvalidArgument(
            "need at least 20 units per site".into(),
        ));
    }
    if !(cfg.x_halfwidth > 0.0) {
        return Err(Error::InvalidArgument("x_halfwidth must be > 0".into()));
    }
    if let Some(fs) = &cfg.fuzzy {
        if !(fs.base >= 0.0 && fs.jump >= 0.0 && fs.base + fs.jump <= 1.0) {
            return Err(Error::InvalidArgument(
                "fuzzy first stage must keep probabilities in [0,1]".into(),
            ));
        }
    }
    let mut x = Vec::new();
    let mut site = Vec::new();
    let mut a = Vec::new();
    let mut y = Vec::new();
    for (k, &c) in cfg.cutoffs.iter().enumerate() {
        let mut rng = stream_rng(cfg.seed, StreamPurpose::Rdd, k as u64);
        for _ in 0..cfg.n_per_site {
            let u: f64 = rng.random();
            let xi = c - cfg.x_halfwidth + 2.0 * cfg.x_halfwidth * u;
            let crossed = xi >= c;
            let coin: f64 = rng.random();
            let eps = normal(&mut rng);
            let treated = match &cfg.fuzzy {
                None => crossed,
                Some(fs) => coin < fs.base + if crossed { fs.jump } else { 0.0 },
            };
            x.push(xi);
            site.push(k + 1);
            a.push(treated as u8);
            y.push(cfg.effect * treated as u8 as f64 + cfg.slope * (xi - c) + cfg.noise_sd * eps);
        }
    }
    RddDataset::new(cfg.cutoffs.clone(), x, site, Some(a), y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_seeds_give_identical_datasets() {
        let cfg = SimConfig::paper_design(99);
        let a = gen_iv_environments(&cfg).unwrap();
        let b = gen_iv_environments(&cfg).unwrap();
        assert_eq!(a.data, b.data);
        assert_eq!(a.propensities, b.propensities);

        let meta = MetaConfig {
            j: 12,
            psi_star: 1.0,
            tau2: 0.5,
            v: VarianceScheme::Uniform { lo: 0.01, hi: 0.05 },
            rho: 0.3,
            n_effective: 50,
            synth_influence: true,
            seed: 7,
        };
        let d1 = gen_meta_panel(&meta).unwrap();
        let d2 = gen_meta_panel(&meta).unwrap();
        assert_eq!(d1.panel, d2.panel);
        assert_eq!(d1.new_psi_hat, d2.new_psi_hat);
    }

    #[test]
    fn different_purposes_differ() {
        let mut a = stream_rng(5, StreamPurpose::MetaLatent, 0);
        let mut b = stream_rng(5, StreamPurpose::MetaNoise, 0);
        let xa: u64 = a.random();
        let xb: u64 = b.random();
        assert_ne!(xa, xb);
    }

    #[test]
    fn paper_design_panel_width() {
        let cfg = SimConfig::paper_design(3);
        let out = gen_iv_environments(&cfg).unwrap();
        assert_eq!(out.data.len(), 50 + 6 * 1000);
        assert_eq!(out.propensities.len(), 7);
        assert!(out.clamp_rate < 0.01, "clamp rate {}", out.clamp_rate);
        for &p in &out.propensities[1..] {
            assert!((0.2..=0.8).contains(&p));
        }
    }

    #[test]
    fn meta_panel_moments_match_scheme() {
        let cfg = MetaConfig {
            j: 10_000,
            psi_star: 0.0,
            tau2: 0.0,
            v: VarianceScheme::Constant { v: 0.01 },
            rho: 0.0,
            n_effective: 10,
            synth_influence: false,
            seed: 21,
        };
        let draw = gen_meta_panel(&cfg).unwrap();
        let var = crate::stats::pop_var(draw.panel.estimates());
        assert!(
            (var - 0.01).abs() < 0.001,
            "sample variance {var} should be near 0.01"
        );
    }

    #[test]
    fn shared_noise_cancels_in_pairwise_differences() {
        let cfg = MetaConfig {
            j: 2_000,
            psi_star: 0.0,
            tau2: 0.0,
            v: VarianceScheme::Constant { v: 0.01 },
            rho: 0.999,
            n_effective: 10,
            synth_influence: false,
            seed: 22,
        };
        let draw = gen_meta_panel(&cfg).unwrap();
        // Var(psi_hat_j - psi_hat_k) = 2 v (1 - rho): nearly zero
        let est = draw.panel.estimates();
        let mut acc = 0.0;
        let mut count = 0.0;
        for i in 0..est.len() - 1 {
            let d = est[i] - est[i + 1];
            acc += d * d / 2.0;
            count += 1.0;
        }
        let pair_var = acc / count;
        assert!(pair_var < 0.001, "shared noise should cancel, got {pair_var}");
    }

    #[test]
    fn meta_influence_realizes_correlation() {
        let cfg = MetaConfig {
            j: 6,
            psi_star: 0.0,
            tau2: 1.0,
            v: VarianceScheme::Constant { v: 0.01 },
            rho: 0.4,
            n_effective: 20_000,
            synth_influence: true,
            seed: 23,
        };
        let draw = gen_meta_panel(&cfg).unwrap();
        let m = draw.panel.influence().unwrap();
        let c0 = m.column(0);
        let c1 = m.column(1);
        let v0 = crate::stats::pop_var(c0);
        let v1 = crate::stats::pop_var(c1);
        let cov: f64 = c0.iter().zip(c1).map(|(a, b)| a * b).sum::<f64>() / c0.len() as f64;
        let corr = cov / (v0 * v1).sqrt();
        assert!((corr - 0.4).abs() < 0.05, "corr {corr}");
        // column variance / n reproduces v
        let implied = v0 / m.n_rows() as f64;
        assert!((implied - 0.01).abs() < 0.002, "implied v {implied}");
    }

    #[test]
    fn covariate_generator_randomized_case() {
        let cfg = CovariateConfig {
            n: 2_000,
            ate: 2.0,
            covariate_effect: 0.0,
            propensity_intercept: 0.0,
            propensity_slope: 0.0,
            outcome_sd: 1.0,
            known_propensity: true,
            delta: 0.01,
            seed: 31,
        };
        let ds = gen_covariate_data(&cfg).unwrap();
        assert_eq!(ds.known_propensity().unwrap()[0], 0.5);
    }
}
