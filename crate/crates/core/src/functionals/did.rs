//! Difference-in-differences contrasts: one functional per candidate
//! control group, and one per cohort-time cell in staggered designs.

use super::datasets::{Cohort, StaggeredPanel, TwoPeriodPanel};
use super::{center, FunctionalEstimate};
use crate::stats::pop_var;
use crate::{Error, Result};

/// Difference of group means with exact delta-method bookkeeping: the
/// influence column reproduces `variance` bit-for-bit as column variance
/// over n.
fn two_group_contrast(
    label: String,
    n: usize,
    treated_rows: &[usize],
    control_rows: &[usize],
    values: &[f64],
) -> FunctionalEstimate {
    let mean = |rows: &[usize]| rows.iter().map(|&i| values[i]).sum::<f64>() / rows.len() as f64;
    let m_treated = mean(treated_rows);
    let m_control = mean(control_rows);
    let estimate = m_treated - m_control;

    let nf = n as f64;
    let mut column = vec![0.0; n];
    for &i in treated_rows {
        column[i] = (nf / treated_rows.len() as f64) * (values[i] - m_treated);
    }
    for &i in control_rows {
        column[i] = -(nf / control_rows.len() as f64) * (values[i] - m_control);
    }
    center(&mut column);
    let variance = pop_var(&column) / nf;
    FunctionalEstimate {
        label,
        estimate,
        variance,
        influence: column,
    }
}

/// DiD against candidate control group `k`:
/// `E[dY | C = 0] - E[dY | C = k]`.
pub fn did_controls(data: &TwoPeriodPanel, k: usize) -> Result<FunctionalEstimate> {
    if k == 0 || k > data.k_max() {
        return Err(Error::InvalidArgument(format!(
            "control group must lie in 1..={}, got {k}",
            data.k_max()
        )));
    }
    let treated: Vec<usize> = (0..data.len()).filter(|&i| data.group()[i] == 0).collect();
    let control: Vec<usize> = (0..data.len()).filter(|&i| data.group()[i] == k).collect();
    if treated.len() < 2 {
        return Err(Error::EmptyGroup("treated (c = 0)".into()));
    }
    if control.len() < 2 {
        return Err(Error::EmptyGroup(format!("control (c = {k})")));
    }
    let delta_y = data.delta_y();
    Ok(two_group_contrast(
        format!("did_c{k}"),
        data.len(),
        &treated,
        &control,
        &delta_y,
    ))
}

/// Group-time ATT contrast for cohort `g` at period `t >= g`:
/// `E[Y_t - Y_{g-1} | G = g] - E[Y_t - Y_{g-1} | G = inf]`.
pub fn did_group_time(data: &StaggeredPanel, g: usize, t: usize) -> Result<FunctionalEstimate> {
    if g < 2 {
        return Err(Error::InvalidArgument(format!(
            "cohort must have a pre-period (g >= 2), got g = {g}"
        )));
    }
    if t < g || t > data.t_max() {
        return Err(Error::InvalidArgument(format!(
            "period t = {t} must satisfy g = {g} <= t <= T = {}",
            data.t_max()
        )));
    }
    let cohort_rows: Vec<usize> = (0..data.len())
        .filter(|&i| data.cohort()[i] == Cohort::Treated(g))
        .collect();
    let never_rows: Vec<usize> = (0..data.len())
        .filter(|&i| data.cohort()[i] == Cohort::Never)
        .collect();
    if cohort_rows.len() < 2 {
        return Err(Error::EmptyGroup(format!("cohort g = {g}")));
    }
    if never_rows.len() < 2 {
        return Err(Error::EmptyGroup("never-treated".into()));
    }
    let values: Vec<f64> = (0..data.len())
        .map(|i| data.outcome(i, t) - data.outcome(i, g - 1))
        .collect();
    Ok(two_group_contrast(
        format!("did_g{g}_t{t}"),
        data.len(),
        &cohort_rows,
        &never_rows,
        &values,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn did_controls_difference_of_trend_means() {
        // treated trend mean 3, control trend mean 1 -> 2
        let panel = TwoPeriodPanel::new(
            1,
            vec![0, 0, 1, 1],
            vec![0.0, 1.0, 0.0, 1.0],
            vec![3.5, 3.5, 1.2, 1.8],
        )
        .unwrap();
        let f = did_controls(&panel, 1).unwrap();
        assert!((f.estimate - 2.0).abs() < 1e-12);
        assert!(crate::stats::mean(&f.influence).abs() < 1e-12);
        assert!((f.robust_variance() - f.variance).abs() <= 1e-10 * f.variance.max(1e-300));
    }

    #[test]
    fn did_controls_identical_groups_give_zero() {
        let panel = TwoPeriodPanel::new(
            1,
            vec![0, 0, 1, 1],
            vec![1.0, 2.0, 1.0, 2.0],
            vec![2.0, 3.0, 2.0, 3.0],
        )
        .unwrap();
        let f = did_controls(&panel, 1).unwrap();
        assert_eq!(f.estimate, 0.0);
    }

    #[test]
    fn did_controls_empty_group_rejected() {
        let panel = TwoPeriodPanel::new(
            2,
            vec![0, 0, 1, 1],
            vec![0.0; 4],
            vec![1.0; 4],
        )
        .unwrap();
        assert!(matches!(
            did_controls(&panel, 2),
            Err(Error::EmptyGroup(_))
        ));
    }

    #[test]
    fn group_time_reduces_to_two_period_did() {
        // single cohort treated at t = 2, T = 2: the (g=2, t=2) cell is the
        // canonical pre/post contrast against never-treated
        let cohort = vec![
            Cohort::Treated(2),
            Cohort::Treated(2),
            Cohort::Never,
            Cohort::Never,
        ];
        let y = vec![
            0.0, 3.5, //
            1.0, 4.5, //
            0.0, 1.2, //
            1.0, 2.8,
        ];
        let staggered = StaggeredPanel::new(2, cohort, y).unwrap();
        let f = did_group_time(&staggered, 2, 2).unwrap();

        let two_period = TwoPeriodPanel::new(
            1,
            vec![0, 0, 1, 1],
            vec![0.0, 1.0, 0.0, 1.0],
            vec![3.5, 4.5, 1.2, 2.8],
        )
        .unwrap();
        let g = did_controls(&two_period, 1).unwrap();
        assert!((f.estimate - g.estimate).abs() < 1e-12);
        assert!((f.variance - g.variance).abs() < 1e-15);
    }

    #[test]
    fn group_time_validates_periods() {
        let cohort = vec![Cohort::Treated(2), Cohort::Treated(2), Cohort::Never, Cohort::Never];
        let y = vec![0.0; 12];
        let staggered = StaggeredPanel::new(3, cohort, y).unwrap();
        assert!(did_group_time(&staggered, 2, 1).is_err());
        assert!(did_group_time(&staggered, 2, 4).is_err());
        assert!(did_group_time(&staggered, 3, 3).is_err()); // no such cohort
    }
}
