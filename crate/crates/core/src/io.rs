//! Wire formats: the column-oriented panel JSON document and the per-design
//! CSV layouts. Numbers are written with the shortest representation that
//! round-trips `f64` exactly.

use serde::{Deserialize, Serialize};

use crate::functionals::{
    Cohort, CovariateDataset, EnvDataset, RddDataset, StaggeredPanel, TwoPeriodPanel,
};
use crate::panel::{EstimatorPanel, InfluenceMatrix};
use crate::{Error, Result};

#[derive(Serialize, Deserialize)]
struct PanelDoc {
    labels: Vec<String>,
    estimates: Vec<f64>,
    variances: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    influence: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    n: Option<usize>,
}

/// Panel as a column-oriented JSON document; the influence matrix is
/// row-major nested arrays.
pub fn panel_to_json(panel: &EstimatorPanel) -> Result<String> {
    let doc = PanelDoc {
        labels: panel.labels().to_vec(),
        estimates: panel.estimates().to_vec(),
        variances: panel.variances().to_vec(),
        influence: panel.influence().map(InfluenceMatrix::to_rows),
        n: panel.n(),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn panel_from_json(text: &str) -> Result<EstimatorPanel> {
    let doc: PanelDoc = serde_json::from_str(text)?;
    let influence = match doc.influence {
        Some(rows) => {
            let m = InfluenceMatrix::from_rows(&rows)?;
            if let Some(n) = doc.n {
                if n != m.n_rows() {
                    return Err(Error::LengthMismatch(format!(
                        "declared n = {n} but influence has {} rows",
                        m.n_rows()
                    )));
                }
            }
            Some(m)
        }
        None => None,
    };
    EstimatorPanel::with_influence(doc.labels, doc.estimates, doc.variances, influence)
}

/// Panel CSV: header `label,estimate,variance`, one row per functional.
/// The influence matrix does not travel through CSV.
pub fn panel_to_csv(panel: &EstimatorPanel) -> Result<String> {
    let mut out = String::from("label,estimate,variance\n");
    for ((label, est), var) in panel
        .labels()
        .iter()
        .zip(panel.estimates())
        .zip(panel.variances())
    {
        if label.contains(',') || label.contains('\n') {
            return Err(Error::InvalidArgument(format!(
                "label {label:?} cannot be written to CSV"
            )));
        }
        out.push_str(&format!("{label},{est},{var}\n"));
    }
    Ok(out)
}

fn parse_f64(field: &str, line: usize) -> Result<f64> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}: bad number {field:?}")))
}

fn split_csv_line(line: &str) -> Vec<&str> {
    line.trim_end_matches('\r').split(',').collect()
}

pub fn panel_from_csv(text: &str) -> Result<EstimatorPanel> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Parse("empty panel CSV".into()))?;
    if split_csv_line(header) != ["label", "estimate", "variance"] {
        return Err(Error::Parse(format!(
            "expected header label,estimate,variance, got {header:?}"
        )));
    }
    let mut labels = Vec::new();
    let mut estimates = Vec::new();
    let mut variances = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields = split_csv_line(line);
        if fields.len() != 3 {
            return Err(Error::Parse(format!("line {}: expected 3 fields", i + 1)));
        }
        labels.push(fields[0].trim().to_string());
        estimates.push(parse_f64(fields[1], i + 1)?);
        variances.push(parse_f64(fields[2], i + 1)?);
    }
    EstimatorPanel::new(labels, estimates, variances)
}

/// EnvDataset CSV: header `z,a,y`. The number of environments is inferred
/// as `max(z) + 1` on read.
pub fn env_to_csv(data: &EnvDataset) -> String {
    let mut out = String::from("z,a,y\n");
    for ((&z, &a), &y) in data.z().iter().zip(data.a()).zip(data.y()) {
        out.push_str(&format!("{z},{a},{y}\n"));
    }
    out
}

pub fn env_from_csv(text: &str) -> Result<EnvDataset> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::Parse("empty CSV".into()))?;
    if split_csv_line(header) != ["z", "a", "y"] {
        return Err(Error::Parse(format!("expected header z,a,y, got {header:?}")));
    }
    let mut z = Vec::new();
    let mut a = Vec::new();
    let mut y = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields = split_csv_line(line);
        if fields.len() != 3 {
            return Err(Error::Parse(format!("line {}: expected 3 fields", i + 1)));
        }
        z.push(
            fields[0]
                .trim()
                .parse::<usize>()
                .map_err(|_| Error::Parse(format!("line {}: bad environment id", i + 1)))?,
        );
        a.push(parse_u01(fields[1], i + 1)?);
        y.push(parse_f64(fields[2], i + 1)?);
    }
    let q = z.iter().copied().max().map(|m| m + 1).unwrap_or(0);
    EnvDataset::new(q, z, a, y)
}

fn parse_u01(field: &str, line: usize) -> Result<u8> {
    match field.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(Error::Parse(format!(
            "line {line}: treatment must be 0 or 1, got {other:?}"
        ))),
    }
}

/// CovariateDataset CSV: header `w1,..,wp,a,y` or `w1,..,wp,a,y,pi`.
pub fn covariate_to_csv(data: &CovariateDataset) -> String {
    let p = data.n_covariates();
    let mut header: Vec<String> = (1..=p).map(|k| format!("w{k}")).collect();
    header.push("a".into());
    header.push("y".into());
    if data.known_propensity().is_some() {
        header.push("pi".into());
    }
    let mut out = header.join(",");
    out.push('\n');
    for i in 0..data.len() {
        let mut fields: Vec<String> = data.covariates(i).iter().map(f64::to_string).collect();
        fields.push(data.a()[i].to_string());
        fields.push(data.y()[i].to_string());
        if let Some(pi) = data.known_propensity() {
            fields.push(pi[i].to_string());
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// Read the covariate CSV; `delta` is the positivity margin to attach.
pub fn covariate_from_csv(text: &str, delta: f64) -> Result<CovariateDataset> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::Parse("empty CSV".into()))?;
    let cols = split_csv_line(header);
    let has_pi = cols.last() == Some(&"pi");
    let base = if has_pi { cols.len() - 1 } else { cols.len() };
    if base < 2 || cols[base - 2] != "a" || cols[base - 1] != "y" {
        return Err(Error::Parse(format!(
            "expected header w1..wp,a,y[,pi], got {header:?}"
        )));
    }
    let p = base - 2;
    for (k, col) in cols[..p].iter().enumerate() {
        if *col != format!("w{}", k + 1) {
            return Err(Error::Parse(format!("expected column w{}, got {col:?}", k + 1)));
        }
    }
    let mut w = Vec::new();
    let mut a = Vec::new();
    let mut y = Vec::new();
    let mut pi = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields = split_csv_line(line);
        if fields.len() != cols.len() {
            return Err(Error::Parse(format!(
                "line {}: expected {} fields",
                i + 1,
                cols.len()
            )));
        }
        for field in &fields[..p] {
            w.push(parse_f64(field, i + 1)?);
        }
        a.push(parse_u01(fields[p], i + 1)?);
        y.push(parse_f64(fields[p + 1], i + 1)?);
        if has_pi {
            pi.push(parse_f64(fields[p + 2], i + 1)?);
        }
    }
    CovariateDataset::new(p, w, a, y, has_pi.then_some(pi), delta)
}

/// TwoPeriodPanel CSV: header `c,y_pre,y_post`.
pub fn two_period_to_csv(data: &TwoPeriodPanel) -> String {
    let mut out = String::from("c,y_pre,y_post\n");
    for i in 0..data.len() {
        out.push_str(&format!(
            "{},{},{}\n",
            data.group()[i],
            data.y_pre()[i],
            data.y_post()[i]
        ));
    }
    out
}

pub fn two_period_from_csv(text: &str) -> Result<TwoPeriodPanel> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::Parse("empty CSV".into()))?;
    if split_csv_line(header) != ["c", "y_pre", "y_post"] {
        return Err(Error::Parse(format!(
            "expected header c,y_pre,y_post, got {header:?}"
        )));
    }
    let mut c = Vec::new();
    let mut pre = Vec::new();
    let mut post = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields = split_csv_line(line);
        if fields.len() != 3 {
            return Err(Error::Parse(format!("line {}: expected 3 fields", i + 1)));
        }
        c.push(
            fields[0]
                .trim()
                .parse::<usize>()
                .map_err(|_| Error::Parse(format!("line {}: bad group id", i + 1)))?,
        );
        pre.push(parse_f64(fields[1], i + 1)?);
        post.push(parse_f64(fields[2], i + 1)?);
    }
    let k_max = c.iter().copied().max().unwrap_or(0);
    TwoPeriodPanel::new(k_max, c, pre, post)
}

/// StaggeredPanel CSV: header `g,y1,..,yT`, with `g=inf` for never-treated.
pub fn staggered_to_csv(data: &StaggeredPanel) -> String {
    let t = data.t_max();
    let mut header = vec!["g".to_string()];
    header.extend((1..=t).map(|k| format!("y{k}")));
    let mut out = header.join(",");
    out.push('\n');
    for i in 0..data.len() {
        let g = match data.cohort()[i] {
            Cohort::Treated(g) => g.to_string(),
            Cohort::Never => "inf".into(),
        };
        let mut fields = vec![g];
        fields.extend((1..=t).map(|k| data.outcome(i, k).to_string()));
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn staggered_from_csv(text: &str) -> Result<StaggeredPanel> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::Parse("empty CSV".into()))?;
    let cols = split_csv_line(header);
    if cols.first() != Some(&"g") || cols.len() < 3 {
        return Err(Error::Parse(format!(
            "expected header g,y1..yT, got {header:?}"
        )));
    }
    let t_max = cols.len() - 1;
    for (k, col) in cols[1..].iter().enumerate() {
        if *col != format!("y{}", k + 1) {
            return Err(Error::Parse(format!("expected column y{}, got {col:?}", k + 1)));
        }
    }
    let mut cohort = Vec::new();
    let mut y = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields = split_csv_line(line);
        if fields.len() != t_max + 1 {
            return Err(Error::Parse(format!(
                "line {}: expected {} fields",
                i + 1,
                t_max + 1
            )));
        }
        cohort.push(match fields[0].trim() {
            "inf" => Cohort::Never,
            g => Cohort::Treated(
                g.parse::<usize>()
                    .map_err(|_| Error::Parse(format!("line {}: bad cohort {g:?}", i + 1)))?,
            ),
        });
        for field in &fields[1..] {
            y.push(parse_f64(field, i + 1)?);
        }
    }
    StaggeredPanel::new(t_max, cohort, y)
}

/// RddDataset CSV: header `x,site,a,y` with `a` left blank for sharp
/// designs. Cutoffs do not travel through CSV and must be supplied on read.
pub fn rdd_to_csv(data: &RddDataset) -> String {
    let mut out = String::from("x,site,a,y\n");
    for i in 0..data.len() {
        let a = data
            .a()
            .map(|col| col[i].to_string())
            .unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{}\n",
            data.x()[i],
            data.site()[i],
            a,
            data.y()[i]
        ));
    }
    out
}

pub fn rdd_from_csv(text: &str, cutoffs: Vec<f64>) -> Result<RddDataset> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::Parse("empty CSV".into()))?;
    if split_csv_line(header) != ["x", "site", "a", "y"] {
        return Err(Error::Parse(format!(
            "expected header x,site,a,y, got {header:?}"
        )));
    }
    let mut x = Vec::new();
    let mut site = Vec::new();
    let mut a = Vec::new();
    let mut y = Vec::new();
    let mut any_a = false;
    let mut all_a = true;
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields = split_csv_line(line);
        if fields.len() != 4 {
            return Err(Error::Parse(format!("line {}: expected 4 fields", i + 1)));
        }
        x.push(parse_f64(fields[0], i + 1)?);
        site.push(
            fields[1]
                .trim()
                .parse::<usize>()
                .map_err(|_| Error::Parse(format!("line {}: bad site id", i + 1)))?,
        );
        if fields[2].trim().is_empty() {
            all_a = false;
            a.push(0);
        } else {
            any_a = true;
            a.push(parse_u01(fields[2], i + 1)?);
        }
        y.push(parse_f64(fields[3], i + 1)?);
    }
    if any_a && !all_a {
        return Err(Error::Parse(
            "treatment column must be all blank (sharp) or fully populated (fuzzy)".into(),
        ));
    }
    RddDataset::new(cutoffs, x, site, any_a.then_some(a), y)
}
