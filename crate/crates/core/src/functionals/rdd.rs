//! Sharp and fuzzy regression discontinuity estimators: local-linear fits
//! with a rectangular kernel on each side of a site's cutoff, at a
//! user-supplied bandwidth.

use super::datasets::RddDataset;
use super::{center, FunctionalEstimate};
use crate::stats::pop_var;
use crate::{Error, Result};

const MIN_SIDE_OBS: usize = 10;

/// One-sided local-linear fit of `values` on the centered running variable.
struct SideFit {
    intercept: f64,
    slope: f64,
    /// Homoskedastic OLS variance of the intercept.
    intercept_variance: f64,
    /// (u_bar, u2_bar, det) of the normalized design Gram matrix.
    u_bar: f64,
    det: f64,
    u2_bar: f64,
}

fn side_fit(site: usize, side: &'static str, u: &[f64], values: &[f64]) -> Result<SideFit> {
    let m = u.len();
    if m < MIN_SIDE_OBS {
        return Err(Error::InsufficientLocalData {
            site,
            side,
            found: m,
            needed: MIN_SIDE_OBS,
        });
    }
    let mf = m as f64;
    let u_bar = u.iter().sum::<f64>() / mf;
    let u2_bar = u.iter().map(|x| x * x).sum::<f64>() / mf;
    let uv_bar = u.iter().zip(values).map(|(x, v)| x * v).sum::<f64>() / mf;
    let v_bar = values.iter().sum::<f64>() / mf;
    let det = u2_bar - u_bar * u_bar;
    if det <= 1e-12 * u2_bar.max(1e-300) {
        return Err(Error::InsufficientLocalData {
            site,
            side,
            found: m,
            needed: MIN_SIDE_OBS,
        });
    }
    let slope = (uv_bar - u_bar * v_bar) / det;
    let intercept = v_bar - slope * u_bar;
    let rss: f64 = u
        .iter()
        .zip(values)
        .map(|(x, v)| {
            let e = v - intercept - slope * x;
            e * e
        })
        .sum();
    let sigma2 = rss / (mf - 2.0);
    let intercept_variance = sigma2 * u2_bar / (mf * det);
    Ok(SideFit {
        intercept,
        slope,
        intercept_variance,
        u_bar,
        det,
        u2_bar,
    })
}

impl SideFit {
    /// Influence of observation `(u, value)` on the fitted intercept.
    fn intercept_influence(&self, u: f64, value: f64) -> f64 {
        let residual = value - self.intercept - self.slope * u;
        (self.u2_bar - self.u_bar * u) / self.det * residual
    }
}

/// Rows of `data` at `site` within `bandwidth` of the cutoff, split by side.
fn window(data: &RddDataset, site: usize, bandwidth: f64) -> Result<(Vec<usize>, Vec<usize>)> {
    if site == 0 || site > data.n_sites() {
        return Err(Error::InvalidArgument(format!(
            "site {site} out of range 1..={}",
            data.n_sites()
        )));
    }
    if !(bandwidth > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "bandwidth must be positive, got {bandwidth}"
        )));
    }
    let c = data.cutoff(site);
    let mut below = Vec::new();
    let mut above = Vec::new();
    for i in 0..data.len() {
        if data.site()[i] != site {
            continue;
        }
        let x = data.x()[i];
        if (x - c).abs() > bandwidth {
            continue;
        }
        if x >= c {
            above.push(i);
        } else {
            below.push(i);
        }
    }
    Ok((below, above))
}

fn centered_running(data: &RddDataset, rows: &[usize], site: usize) -> Vec<f64> {
    let c = data.cutoff(site);
    rows.iter().map(|&i| data.x()[i] - c).collect()
}

fn gather(values: &[f64], rows: &[usize]) -> Vec<f64> {
    rows.iter().map(|&i| values[i]).collect()
}

/// Sharp RDD at one site: difference of side-wise local-linear intercepts
/// at the cutoff.
pub fn rdd_sharp(data: &RddDataset, site: usize, bandwidth: f64) -> Result<FunctionalEstimate> {
    let (below, above) = window(data, site, bandwidth)?;
    let u_b = centered_running(data, &below, site);
    let u_a = centered_running(data, &above, site);
    let fit_b = side_fit(site, "below", &u_b, &gather(data.y(), &below))?;
    let fit_a = side_fit(site, "above", &u_a, &gather(data.y(), &above))?;

    let estimate = fit_a.intercept - fit_b.intercept;
    let variance = fit_a.intercept_variance + fit_b.intercept_variance;

    let n = data.len() as f64;
    let mut column = vec![0.0; data.len()];
    for (&i, &u) in above.iter().zip(&u_a) {
        column[i] = (n / above.len() as f64) * fit_a.intercept_influence(u, data.y()[i]);
    }
    for (&i, &u) in below.iter().zip(&u_b) {
        column[i] = -(n / below.len() as f64) * fit_b.intercept_influence(u, data.y()[i]);
    }
    center(&mut column);
    Ok(FunctionalEstimate {
        label: format!("rdd_s{site}_h{bandwidth}"),
        estimate,
        variance,
        influence: column,
    })
}

/// Fuzzy RDD at one site: outcome jump divided by the first-stage treatment
/// jump, with the four-jump delta-method variance taken from the combined
/// influence column.
pub fn rdd_fuzzy(
    data: &RddDataset,
    site: usize,
    bandwidth: f64,
    min_first_stage: f64,
) -> Result<FunctionalEstimate> {
    let Some(a) = data.a() else {
        return Err(Error::InvalidArgument(
            "fuzzy RDD needs a treatment column".into(),
        ));
    };
    let a_vals: Vec<f64> = a.iter().map(|&ai| ai as f64).collect();
    let (below, above) = window(data, site, bandwidth)?;
    let u_b = centered_running(data, &below, site);
    let u_a = centered_running(data, &above, site);

    let fit_yb = side_fit(site, "below", &u_b, &gather(data.y(), &below))?;
    let fit_ya = side_fit(site, "above", &u_a, &gather(data.y(), &above))?;
    let fit_ab = side_fit(site, "below", &u_b, &gather(&a_vals, &below))?;
    let fit_aa = side_fit(site, "above", &u_a, &gather(&a_vals, &above))?;

    let jump_y = fit_ya.intercept - fit_yb.intercept;
    let jump_a = fit_aa.intercept - fit_ab.intercept;
    let label = format!("rdd_fuzzy_s{site}_h{bandwidth}");
    if jump_a.abs() < min_first_stage {
        return Err(Error::WeakInstrument {
            context: label,
            value: jump_a.abs(),
            threshold: min_first_stage,
        });
    }
    let estimate = jump_y / jump_a;

    let n = data.len() as f64;
    let mut column = vec![0.0; data.len()];
    for (&i, &u) in above.iter().zip(&u_a) {
        let d = fit_ya.intercept_influence(u, data.y()[i])
            - estimate * fit_aa.intercept_influence(u, a_vals[i]);
        column[i] = (n / above.len() as f64) * d / jump_a;
    }
    for (&i, &u) in below.iter().zip(&u_b) {
        let d = fit_yb.intercept_influence(u, data.y()[i])
            - estimate * fit_ab.intercept_influence(u, a_vals[i]);
        column[i] = -(n / below.len() as f64) * d / jump_a;
    }
    center(&mut column);
    let variance = pop_var(&column) / n;
    Ok(FunctionalEstimate {
        label,
        estimate,
        variance,
        influence: column,
    })
}
