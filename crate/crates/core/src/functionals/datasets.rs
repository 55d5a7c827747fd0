//! Tabular observed-data types for the designs with identification
//! multiplicity: IV environments, covariate adjustment, two-period and
//! staggered panels, and regression discontinuity.

use crate::{Error, Result};

/// Observations `(z, a, y)` with `z` an environment index in `0..q`.
/// Environment 0 is the randomized study; environments `z >= 1` are
/// observational.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvDataset {
    q: usize,
    z: Vec<usize>,
    a: Vec<u8>,
    y: Vec<f64>,
}

impl EnvDataset {
    /// Validated constructor: every environment must carry at least two
    /// rows and treatments must be 0/1.
    pub fn new(q: usize, z: Vec<usize>, a: Vec<u8>, y: Vec<f64>) -> Result<Self> {
        let ds = Self::from_parts_relaxed(q, z, a, y)?;
        let mut counts = vec![0usize; q];
        for &zi in &ds.z {
            counts[zi] += 1;
        }
        if let Some(env) = counts.iter().position(|&c| c < 2) {
            return Err(Error::EmptyEnvironment(env));
        }
        Ok(ds)
    }

    /// Domain-validated constructor that tolerates under-populated
    /// environments. Meant for resampling workflows, where per-environment
    /// counts are checked again by each estimator.
    pub fn from_parts_relaxed(q: usize, z: Vec<usize>, a: Vec<u8>, y: Vec<f64>) -> Result<Self> {
        if q < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 environments, got {q}"
            )));
        }
        let n = y.len();
        if z.len() != n || a.len() != n {
            return Err(Error::LengthMismatch("z, a, y".into()));
        }
        if n == 0 {
            return Err(Error::InvalidArgument("dataset is empty".into()));
        }
        if let Some(&bad) = z.iter().find(|&&zi| zi >= q) {
            return Err(Error::InvalidArgument(format!(
                "environment id {bad} out of range 0..{q}"
            )));
        }
        if a.iter().any(|&ai| ai > 1) {
            return Err(Error::InvalidArgument("treatment must be 0 or 1".into()));
        }
        Ok(Self { q, z, a, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn z(&self) -> &[usize] {
        &self.z
    }

    pub fn a(&self) -> &[u8] {
        &self.a
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Row subset (relaxed: environments may end up thin; estimators
    /// re-check counts).
    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            q: self.q,
            z: idx.iter().map(|&i| self.z[i]).collect(),
            a: idx.iter().map(|&i| self.a[i]).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
        }
    }
}

/// Observations `(w, a, y)` with optional known propensities `pi_1(w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateDataset {
    p: usize,
    w: Vec<f64>, // row-major, n x p
    a: Vec<u8>,
    y: Vec<f64>,
    propensity: Option<Vec<f64>>,
    delta: f64,
}

impl CovariateDataset {
    /// `w` is row-major with `p` covariates per row (`p = 0` is allowed and
    /// means intercept-only nuisance fits). `delta` is the positivity
    /// margin; estimators reject propensities outside `(delta, 1-delta)`.
    pub fn new(
        p: usize,
        w: Vec<f64>,
        a: Vec<u8>,
        y: Vec<f64>,
        propensity: Option<Vec<f64>>,
        delta: f64,
    ) -> Result<Self> {
        let n = y.len();
        if a.len() != n || w.len() != n * p {
            return Err(Error::LengthMismatch("w, a, y".into()));
        }
        if n == 0 {
            return Err(Error::InvalidArgument("dataset is empty".into()));
        }
        if a.iter().any(|&ai| ai > 1) {
            return Err(Error::InvalidArgument("treatment must be 0 or 1".into()));
        }
        if !(delta > 0.0 && delta < 0.5) {
            return Err(Error::InvalidArgument(format!(
                "positivity margin must lie in (0, 0.5), got {delta}"
            )));
        }
        if let Some(pi) = &propensity {
            if pi.len() != n {
                return Err(Error::LengthMismatch("propensity".into()));
            }
            if pi.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
                return Err(Error::InvalidArgument(
                    "known propensities must lie strictly inside (0, 1)".into(),
                ));
            }
        }
        Ok(Self {
            p,
            w,
            a,
            y,
            propensity,
            delta,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_covariates(&self) -> usize {
        self.p
    }

    pub fn covariates(&self, i: usize) -> &[f64] {
        &self.w[i * self.p..(i + 1) * self.p]
    }

    pub fn a(&self) -> &[u8] {
        &self.a
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn known_propensity(&self) -> Option<&[f64]> {
        self.propensity.as_deref()
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

/// Two-period panel with one treated group (`c = 0`) and `K` candidate
/// control groups (`c = 1..=K`).
#[derive(Debug, Clone, PartialEq)]
pub struct TwoPeriodPanel {
    k_max: usize,
    c: Vec<usize>,
    y_pre: Vec<f64>,
    y_post: Vec<f64>,
}

impl TwoPeriodPanel {
    pub fn new(k_max: usize, c: Vec<usize>, y_pre: Vec<f64>, y_post: Vec<f64>) -> Result<Self> {
        let n = c.len();
        if y_pre.len() != n || y_post.len() != n {
            return Err(Error::LengthMismatch("c, y_pre, y_post".into()));
        }
        if let Some(&bad) = c.iter().find(|&&ci| ci > k_max) {
            return Err(Error::InvalidArgument(format!(
                "group id {bad} out of range 0..={k_max}"
            )));
        }
        if !c.contains(&0) {
            return Err(Error::EmptyGroup("treated (c = 0)".into()));
        }
        Ok(Self {
            k_max,
            c,
            y_pre,
            y_post,
        })
    }

    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn group(&self) -> &[usize] {
        &self.c
    }

    pub fn y_pre(&self) -> &[f64] {
        &self.y_pre
    }

    pub fn y_post(&self) -> &[f64] {
        &self.y_post
    }

    /// First-differenced outcome per row.
    pub fn delta_y(&self) -> Vec<f64> {
        self.y_post
            .iter()
            .zip(&self.y_pre)
            .map(|(post, pre)| post - pre)
            .collect()
    }
}

/// Cohort membership in a staggered adoption design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cohort {
    /// First treated at period `g` (1-indexed, `g >= 2`).
    Treated(usize),
    /// Never treated.
    Never,
}

/// Staggered panel: per-unit cohort plus outcomes over periods `1..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct StaggeredPanel {
    t_max: usize,
    cohort: Vec<Cohort>,
    y: Vec<f64>, // row-major, n x t_max
}

impl StaggeredPanel {
    pub fn new(t_max: usize, cohort: Vec<Cohort>, y: Vec<f64>) -> Result<Self> {
        let n = cohort.len();
        if y.len() != n * t_max {
            return Err(Error::LengthMismatch("cohort, y".into()));
        }
        if t_max < 2 {
            return Err(Error::InvalidArgument(
                "staggered panel needs at least 2 periods".into(),
            ));
        }
        if !cohort.iter().any(|c| matches!(c, Cohort::Never)) {
            return Err(Error::EmptyGroup("never-treated".into()));
        }
        for c in &cohort {
            if let Cohort::Treated(g) = c {
                if *g < 2 {
                    return Err(Error::InvalidArgument(format!(
                        "treated cohort must have a pre-period (g >= 2), got g = {g}"
                    )));
                }
            }
        }
        Ok(Self { t_max, cohort, y })
    }

    pub fn len(&self) -> usize {
        self.cohort.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cohort.is_empty()
    }

    pub fn t_max(&self) -> usize {
        self.t_max
    }

    pub fn cohort(&self) -> &[Cohort] {
        &self.cohort
    }

    /// Outcome of unit `i` at 1-indexed period `t`.
    pub fn outcome(&self, i: usize, t: usize) -> f64 {
        self.y[i * self.t_max + (t - 1)]
    }
}

/// Regression discontinuity data across `K` sites with known cutoffs.
#[derive(Debug, Clone, PartialEq)]
pub struct RddDataset {
    cutoffs: Vec<f64>,
    x: Vec<f64>,
    site: Vec<usize>, // 1..=K
    a: Option<Vec<u8>>,
    y: Vec<f64>,
}

impl RddDataset {
    /// `a` is `None` for sharp designs. Cutoffs must be strictly
    /// increasing; site `k` uses `cutoffs[k - 1]`.
    pub fn new(
        cutoffs: Vec<f64>,
        x: Vec<f64>,
        site: Vec<usize>,
        a: Option<Vec<u8>>,
        y: Vec<f64>,
    ) -> Result<Self> {
        let n = y.len();
        if x.len() != n || site.len() != n {
            return Err(Error::LengthMismatch("x, site, y".into()));
        }
        if cutoffs.is_empty() {
            return Err(Error::InvalidArgument("no cutoffs".into()));
        }
        if cutoffs.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidArgument(
                "cutoffs must be strictly increasing".into(),
            ));
        }
        let k_max = cutoffs.len();
        if let Some(&bad) = site.iter().find(|&&s| s == 0 || s > k_max) {
            return Err(Error::InvalidArgument(format!(
                "site id {bad} out of range 1..={k_max}"
            )));
        }
        if let Some(av) = &a {
            if av.len() != n {
                return Err(Error::LengthMismatch("a".into()));
            }
            if av.iter().any(|&ai| ai > 1) {
                return Err(Error::InvalidArgument("treatment must be 0 or 1".into()));
            }
        }
        // every site must see the running variable on both sides of its cutoff
        for k in 1..=k_max {
            let c = cutoffs[k - 1];
            let mut below = false;
            let mut above = false;
            for (xi, si) in x.iter().zip(&site) {
                if *si == k {
                    if *xi < c {
                        below = true;
                    } else {
                        above = true;
                    }
                }
            }
            if !below || !above {
                return Err(Error::InsufficientLocalData {
                    site: k,
                    side: if below { "above" } else { "below" },
                    found: 0,
                    needed: 1,
                });
            }
        }
        Ok(Self {
            cutoffs,
            x,
            site,
            a,
            y,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_sites(&self) -> usize {
        self.cutoffs.len()
    }

    pub fn cutoff(&self, site: usize) -> f64 {
        self.cutoffs[site - 1]
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn site(&self) -> &[usize] {
        &self.site
    }

    pub fn a(&self) -> Option<&[u8]> {
        self.a.as_deref()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn env_dataset_rejects_thin_environment() {
        let err = EnvDataset::new(2, vec![0, 0, 1], vec![0, 1, 0], vec![1.0, 2.0, 3.0]);
        assert!(matches!(err, Err(Error::EmptyEnvironment(1))));
        let relaxed =
            EnvDataset::from_parts_relaxed(2, vec![0, 0, 1], vec![0, 1, 0], vec![1.0, 2.0, 3.0]);
        assert!(relaxed.is_ok());
    }

    #[test]
    fn env_dataset_rejects_bad_treatment() {
        let err = EnvDataset::new(2, vec![0, 0, 1, 1], vec![0, 2, 0, 1], vec![0.0; 4]);
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn env_select_keeps_q() {
        let ds = EnvDataset::new(
            2,
            vec![0, 0, 1, 1],
            vec![0, 1, 0, 1],
            vec![1.0, 2.0, 3.0, 4.0],
        )
        .unwrap();
        let sub = ds.select(&[0, 3]);
        assert_eq!(sub.q(), 2);
        assert_eq!(sub.y(), &[1.0, 4.0]);
    }

    #[test]
    fn rdd_requires_both_sides() {
        let err = RddDataset::new(
            vec![0.0],
            vec![0.1, 0.2, 0.3],
            vec![1, 1, 1],
            None,
            vec![0.0; 3],
        );
        assert!(matches!(err, Err(Error::InsufficientLocalData { .. })));
    }

    #[test]
    fn staggered_needs_never_treated_and_pre_period() {
        let err = StaggeredPanel::new(3, vec![Cohort::Treated(2)], vec![0.0; 3]);
        assert!(matches!(err, Err(Error::EmptyGroup(_))));
        let err = StaggeredPanel::new(
            3,
            vec![Cohort::Treated(1), Cohort::Never],
            vec![0.0; 6],
        );
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }
}
