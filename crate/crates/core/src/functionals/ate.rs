//! IPW and outcome-regression estimators of the ATE under no unmeasured
//! confounding. The two functionals differ in their plug-in but share the
//! same efficient influence curve, which supplies both variances.

use super::datasets::CovariateDataset;
use super::{center, FunctionalEstimate};
use crate::stats::pop_var;
use crate::{Error, Result};

/// Solve the symmetric positive system `M x = b` by Gaussian elimination
/// with partial pivoting. Returns `None` when the system is numerically
/// singular.
fn solve(mut m: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let d = b.len();
    let scale = m
        .iter()
        .flat_map(|row| row.iter().map(|x| x.abs()))
        .fold(0.0f64, f64::max)
        .max(1e-300);
    for col in 0..d {
        let pivot = (col..d).max_by(|&i, &j| {
            m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap()
        })?;
        if m[pivot][col].abs() < 1e-12 * scale {
            return None;
        }
        m.swap(col, pivot);
        b.swap(col, pivot);
        for row in (col + 1)..d {
            let f = m[row][col] / m[col][col];
            for k in col..d {
                m[row][k] -= f * m[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; d];
    for col in (0..d).rev() {
        let mut s = b[col];
        for k in (col + 1)..d {
            s -= m[col][k] * x[k];
        }
        x[col] = s / m[col][col];
    }
    Some(x)
}

/// Least squares of `y` on `[1, w]` over the rows flagged in `rows`.
/// Falls back to the intercept-only fit (the plain mean) when the design is
/// singular, e.g. a single covariate stratum.
fn arm_regression(data: &CovariateDataset, rows: &[usize]) -> Vec<f64> {
    let p = data.n_covariates();
    let d = p + 1;
    let mut gram = vec![vec![0.0; d]; d];
    let mut moment = vec![0.0; d];
    let mut x = vec![0.0; d];
    for &i in rows {
        x[0] = 1.0;
        x[1..].copy_from_slice(data.covariates(i));
        for r in 0..d {
            for c in 0..d {
                gram[r][c] += x[r] * x[c];
            }
            moment[r] += x[r] * data.y()[i];
        }
    }
    if let Some(beta) = solve(gram, moment) {
        return beta;
    }
    let mean = rows.iter().map(|&i| data.y()[i]).sum::<f64>() / rows.len().max(1) as f64;
    let mut beta = vec![0.0; d];
    beta[0] = mean;
    beta
}

fn predict(beta: &[f64], w: &[f64]) -> f64 {
    beta[0] + beta[1..].iter().zip(w).map(|(b, x)| b * x).sum::<f64>()
}

/// Logistic regression of treatment on `[1, w]` by IRLS; used when no
/// known propensities are supplied.
fn fit_propensities(data: &CovariateDataset) -> Vec<f64> {
    let n = data.len();
    let p = data.n_covariates();
    let d = p + 1;
    let mut beta = vec![0.0; d];
    let mut x = vec![0.0; d];
    for _ in 0..50 {
        let mut gram = vec![vec![0.0; d]; d];
        let mut score = vec![0.0; d];
        for i in 0..n {
            x[0] = 1.0;
            x[1..].copy_from_slice(data.covariates(i));
            let eta = predict(&beta, data.covariates(i));
            let mu = 1.0 / (1.0 + (-eta).exp());
            let wgt = (mu * (1.0 - mu)).max(1e-10);
            for r in 0..d {
                for c in 0..d {
                    gram[r][c] += wgt * x[r] * x[c];
                }
                score[r] += x[r] * (data.a()[i] as f64 - mu);
            }
        }
        let Some(step) = solve(gram, score) else {
            break;
        };
        let change: f64 = step.iter().map(|s| s.abs()).fold(0.0, f64::max);
        for (b, s) in beta.iter_mut().zip(&step) {
            *b += s;
        }
        if change < 1e-10 {
            break;
        }
    }
    (0..n)
        .map(|i| {
            let eta = predict(&beta, data.covariates(i));
            1.0 / (1.0 + (-eta).exp())
        })
        .collect()
}

struct Nuisances {
    propensity: Vec<f64>,
    mu1: Vec<f64>,
    mu0: Vec<f64>,
}

fn fit_nuisances(data: &CovariateDataset) -> Result<Nuisances> {
    let propensity = match data.known_propensity() {
        Some(pi) => pi.to_vec(),
        None => fit_propensities(data),
    };
    let delta = data.delta();
    for (index, &pi) in propensity.iter().enumerate() {
        if !(pi > delta && pi < 1.0 - delta) {
            return Err(Error::PositivityViolation {
                index,
                propensity: pi,
                delta,
                one_minus_delta: 1.0 - delta,
            });
        }
    }
    let treated: Vec<usize> = (0..data.len()).filter(|&i| data.a()[i] == 1).collect();
    let control: Vec<usize> = (0..data.len()).filter(|&i| data.a()[i] == 0).collect();
    if treated.is_empty() || control.is_empty() {
        return Err(Error::EmptyGroup(
            if treated.is_empty() { "treated" } else { "control" }.into(),
        ));
    }
    let beta1 = arm_regression(data, &treated);
    let beta0 = arm_regression(data, &control);
    let mu1 = (0..data.len())
        .map(|i| predict(&beta1, data.covariates(i)))
        .collect();
    let mu0 = (0..data.len())
        .map(|i| predict(&beta0, data.covariates(i)))
        .collect();
    Ok(Nuisances {
        propensity,
        mu1,
        mu0,
    })
}

/// Efficient influence curve shared by the IPW and OR functionals,
/// centered, plus the implied variance.
fn eic_column(data: &CovariateDataset, nuis: &Nuisances, psi: f64) -> (Vec<f64>, f64) {
    let n = data.len();
    let mut column = Vec::with_capacity(n);
    for i in 0..n {
        let a = data.a()[i] as f64;
        let y = data.y()[i];
        let pi = nuis.propensity[i];
        let d = a / pi * (y - nuis.mu1[i]) - (1.0 - a) / (1.0 - pi) * (y - nuis.mu0[i])
            + nuis.mu1[i]
            - nuis.mu0[i]
            - psi;
        column.push(d);
    }
    center(&mut column);
    let variance = pop_var(&column) / n as f64;
    (column, variance)
}

/// Inverse-probability-weighted ATE:
/// `mean[Y A / pi_1(W)] - mean[Y (1-A) / pi_0(W)]`.
pub fn ipw_ate(data: &CovariateDataset) -> Result<FunctionalEstimate> {
    let nuis = fit_nuisances(data)?;
    let n = data.len() as f64;
    let mut psi = 0.0;
    for i in 0..data.len() {
        let a = data.a()[i] as f64;
        let y = data.y()[i];
        let pi = nuis.propensity[i];
        psi += a * y / pi - (1.0 - a) * y / (1.0 - pi);
    }
    psi /= n;
    let (influence, variance) = eic_column(data, &nuis, psi);
    Ok(FunctionalEstimate {
        label: "ipw".into(),
        estimate: psi,
        variance,
        influence,
    })
}

/// Outcome-regression ATE: `mean[mu_1(W) - mu_0(W)]`.
pub fn or_ate(data: &CovariateDataset) -> Result<FunctionalEstimate> {
    let nuis = fit_nuisances(data)?;
    let n = data.len() as f64;
    let psi = nuis
        .mu1
        .iter()
        .zip(&nuis.mu0)
        .map(|(m1, m0)| m1 - m0)
        .sum::<f64>()
        / n;
    let (influence, variance) = eic_column(data, &nuis, psi);
    Ok(FunctionalEstimate {
        label: "or".into(),
        estimate: psi,
        variance,
        influence,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_row_ipw_arithmetic() {
        // rows: (A=1, Y=1, pi=0.5), (A=0, Y=0, pi=0.5) -> (1/0.5)/2 - 0 = 1
        let ds = CovariateDataset::new(
            0,
            vec![],
            vec![1, 0],
            vec![1.0, 0.0],
            Some(vec![0.5, 0.5]),
            0.01,
        )
        .unwrap();
        let f = ipw_ate(&ds).unwrap();
        assert!((f.estimate - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_outcomes_give_zero_estimate() {
        let ds = CovariateDataset::new(
            1,
            vec![0.3, -0.2, 0.8, 0.1],
            vec![1, 0, 1, 0],
            vec![0.0; 4],
            Some(vec![0.5; 4]),
            0.01,
        )
        .unwrap();
        assert_eq!(ipw_ate(&ds).unwrap().estimate, 0.0);
        assert_eq!(or_ate(&ds).unwrap().estimate, 0.0);
    }

    #[test]
    fn single_stratum_or_reduces_to_arm_means() {
        // constant covariate: the regression design is singular and the
        // fit falls back to arm means
        let ds = CovariateDataset::new(
            1,
            vec![1.0; 6],
            vec![1, 1, 1, 0, 0, 0],
            vec![3.0, 4.0, 5.0, 1.0, 2.0, 3.0],
            Some(vec![0.5; 6]),
            0.01,
        )
        .unwrap();
        let f = or_ate(&ds).unwrap();
        assert!((f.estimate - 2.0).abs() < 1e-12); // 4 - 2
    }

    #[test]
    fn treatment_free_outcome_has_null_or_estimate() {
        // Y = W exactly: both arm regressions recover the identity line,
        // so the OR contrast vanishes up to fit error
        let w: Vec<f64> = (0..30).map(|i| (i as f64) / 7.0 - 2.0).collect();
        let a: Vec<u8> = (0..30).map(|i| (i % 2) as u8).collect();
        let y = w.clone();
        let ds = CovariateDataset::new(1, w, a, y, Some(vec![0.5; 30]), 0.01).unwrap();
        let f = or_ate(&ds).unwrap();
        assert!(f.estimate.abs() < 1e-10, "got {}", f.estimate);
    }

    #[test]
    fn positivity_violation_detected() {
        let ds = CovariateDataset::new(
            0,
            vec![],
            vec![1, 0, 1, 0],
            vec![1.0, 0.0, 2.0, 0.5],
            Some(vec![0.5, 0.005, 0.5, 0.5]),
            0.01,
        )
        .unwrap();
        assert!(matches!(
            ipw_ate(&ds),
            Err(Error::PositivityViolation { index: 1, .. })
        ));
    }

    #[test]
    fn influence_column_is_centered() {
        let w: Vec<f64> = (0..40).map(|i| (i as f64) / 10.0 - 2.0).collect();
        let a: Vec<u8> = (0..40).map(|i| (i % 2) as u8).collect();
        let y: Vec<f64> = w
            .iter()
            .zip(&a)
            .map(|(wi, &ai)| 2.0 * ai as f64 + 0.5 * wi)
            .collect();
        let ds = CovariateDataset::new(1, w, a, y, Some(vec![0.5; 40]), 0.01).unwrap();
        for f in [ipw_ate(&ds).unwrap(), or_ate(&ds).unwrap()] {
            assert!(crate::stats::mean(&f.influence).abs() < 1e-10);
        }
    }
}
