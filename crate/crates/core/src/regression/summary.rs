//! Descriptive tables over influence scores: grouped summaries, a
//! correlation matrix, coefficient tables, and their CSV forms.

use std::collections::BTreeSet;
use std::path::Path;

use nalgebra::DMatrix;

use super::ols::RegressionFit;
use super::{venue_label, RegError, RegressionRow, SizeBucket};
use crate::market::venue_name;

/// Attribute to group scores by in a summary table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupAttr {
    Size,
    Year,
    Venue,
    Etf,
    Predicted,
}

impl GroupAttr {
    pub const ALL: [GroupAttr; 5] = [
        GroupAttr::Size,
        GroupAttr::Year,
        GroupAttr::Venue,
        GroupAttr::Etf,
        GroupAttr::Predicted,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            GroupAttr::Size => "size_bucket",
            GroupAttr::Year => "year",
            GroupAttr::Venue => "venue",
            GroupAttr::Etf => "is_etf",
            GroupAttr::Predicted => "predicted_label",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub group: String,
    pub count: usize,
    pub max: f64,
    pub min: f64,
    pub mean: f64,
    pub std: f64,
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryTable {
    pub attribute: String,
    /// One row per present group level, then an "overall" row.
    pub rows: Vec<SummaryRow>,
}

fn stat_row(group: &str, values: &[f64]) -> SummaryRow {
    let n = values.len();
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("scores are finite"));
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt()
    } else {
        0.0
    };
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    SummaryRow {
        group: group.to_string(),
        count: n,
        max: sorted[n - 1],
        min: sorted[0],
        mean,
        std,
        median,
    }
}

/// Distribution of scaled scores per level of one attribute. Levels
/// absent from the data get no row; the final row pools everything.
pub fn summarize_influence(rows: &[RegressionRow], attr: GroupAttr) -> Result<SummaryTable, RegError> {
    if rows.is_empty() {
        return Err(RegError::Empty("no rows to summarize".into()));
    }
    let collect = |pred: &dyn Fn(&RegressionRow) -> bool| -> Vec<f64> {
        rows.iter().filter(|r| pred(r)).map(|r| r.scaled_score).collect()
    };
    let mut groups: Vec<(String, Vec<f64>)> = Vec::new();
    match attr {
        GroupAttr::Size => {
            for b in SizeBucket::ALL {
                groups.push((b.label().to_string(), collect(&|r| r.size_bucket == b)));
            }
        }
        GroupAttr::Year => {
            let years: BTreeSet<u16> = rows.iter().map(|r| r.year).collect();
            for y in years {
                groups.push((y.to_string(), collect(&|r| r.year == y)));
            }
        }
        GroupAttr::Venue => {
            let venues: BTreeSet<u8> = rows.iter().map(|r| r.venue_id).collect();
            for v in venues {
                groups.push((venue_name(v).to_string(), collect(&|r| r.venue_id == v)));
            }
        }
        GroupAttr::Etf => {
            groups.push(("non_etf".into(), collect(&|r| !r.is_etf)));
            groups.push(("etf".into(), collect(&|r| r.is_etf)));
        }
        GroupAttr::Predicted => {
            groups.push(("predicted_negative".into(), collect(&|r| r.predicted_label == 0)));
            groups.push(("predicted_positive".into(), collect(&|r| r.predicted_label == 1)));
        }
    }
    let mut out = Vec::new();
    for (name, values) in groups {
        if !values.is_empty() {
            out.push(stat_row(&name, &values));
        }
    }
    let all: Vec<f64> = rows.iter().map(|r| r.scaled_score).collect();
    out.push(stat_row("overall", &all));
    Ok(SummaryTable { attribute: attr.label().to_string(), rows: out })
}

/// Variable block in the correlation matrix. Categorical variables
/// expand to dummies for every present level, reference included, so
/// complementary levels show their mechanical negative correlation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrVar {
    ScaledScore,
    Size,
    Year,
    Venue,
    Etf,
    TimeOfTrade,
    LogSinceLast,
    Predicted,
}

impl CorrVar {
    pub const ALL: [CorrVar; 8] = [
        CorrVar::ScaledScore,
        CorrVar::Size,
        CorrVar::Year,
        CorrVar::Venue,
        CorrVar::Etf,
        CorrVar::TimeOfTrade,
        CorrVar::LogSinceLast,
        CorrVar::Predicted,
    ];
}

#[derive(Debug, Clone)]
pub struct CorrelationTable {
    pub names: Vec<String>,
    pub matrix: DMatrix<f64>,
    /// Columns with no variation; their off-diagonal entries are 0.
    pub zero_variance: Vec<String>,
}

fn corr_columns(rows: &[RegressionRow], vars: &[CorrVar]) -> Vec<(String, Vec<f64>)> {
    let mut cols: Vec<(String, Vec<f64>)> = Vec::new();
    for var in vars {
        match var {
            CorrVar::ScaledScore => {
                cols.push(("scaled_score".into(), rows.iter().map(|r| r.scaled_score).collect()));
            }
            CorrVar::Size => {
                let present: BTreeSet<SizeBucket> = rows.iter().map(|r| r.size_bucket).collect();
                for b in SizeBucket::ALL.into_iter().filter(|b| present.contains(b)) {
                    let col = rows.iter().map(|r| f64::from(r.size_bucket == b)).collect();
                    cols.push((format!("size_{}", b.label()), col));
                }
            }
            CorrVar::Year => {
                let years: BTreeSet<u16> = rows.iter().map(|r| r.year).collect();
                for y in years {
                    cols.push((format!("year_{y}"), rows.iter().map(|r| f64::from(r.year == y)).collect()));
                }
            }
            CorrVar::Venue => {
                let venues: BTreeSet<u8> = rows.iter().map(|r| r.venue_id).collect();
                for v in venues {
                    cols.push((venue_label(v), rows.iter().map(|r| f64::from(r.venue_id == v)).collect()));
                }
            }
            CorrVar::Etf => {
                cols.push(("is_etf".into(), rows.iter().map(|r| f64::from(r.is_etf)).collect()));
            }
            CorrVar::TimeOfTrade => {
                cols.push(("time_of_trade".into(), rows.iter().map(|r| r.time_of_trade).collect()));
            }
            CorrVar::LogSinceLast => {
                cols.push(("log_since_last".into(), rows.iter().map(|r| r.log_since_last).collect()));
            }
            CorrVar::Predicted => {
                cols.push((
                    "predicted_positive".into(),
                    rows.iter().map(|r| f64::from(r.predicted_label == 1)).collect(),
                ));
            }
        }
    }
    cols
}

/// Pearson correlations over the expanded columns. The diagonal is
/// exactly 1; a zero-variance column correlates 0 with everything and
/// is reported in `zero_variance` instead of producing NaN.
pub fn correlation_matrix(rows: &[RegressionRow], vars: &[CorrVar]) -> Result<CorrelationTable, RegError> {
    if rows.len() < 2 {
        return Err(RegError::Empty(format!(
            "correlation needs at least 2 rows, got {}",
            rows.len()
        )));
    }
    let cols = corr_columns(rows, vars);
    let n = rows.len() as f64;
    let k = cols.len();
    let means: Vec<f64> = cols.iter().map(|(_, c)| c.iter().sum::<f64>() / n).collect();
    let sds: Vec<f64> = cols
        .iter()
        .zip(&means)
        .map(|((_, c), m)| (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
        .collect();
    let zero_variance: Vec<String> = cols
        .iter()
        .zip(&sds)
        .filter(|(_, sd)| **sd == 0.0)
        .map(|((name, _), _)| name.clone())
        .collect();
    let mut matrix = DMatrix::zeros(k, k);
    for i in 0..k {
        matrix[(i, i)] = 1.0;
        for j in i + 1..k {
            let r = if sds[i] == 0.0 || sds[j] == 0.0 {
                0.0
            } else {
                let cov: f64 = cols[i]
                    .1
                    .iter()
                    .zip(&cols[j].1)
                    .map(|(a, b)| (a - means[i]) * (b - means[j]))
                    .sum::<f64>()
                    / (n - 1.0);
                cov / (sds[i] * sds[j])
            };
            matrix[(i, j)] = r;
            matrix[(j, i)] = r;
        }
    }
    Ok(CorrelationTable {
        names: cols.into_iter().map(|(name, _)| name).collect(),
        matrix,
        zero_variance,
    })
}

fn stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

/// Plain-text coefficient table, one column per fit, standard errors
/// in parentheses under each coefficient.
pub fn render_regression_tables(fits: &[RegressionFit]) -> String {
    if fits.is_empty() {
        return "(no regression fits)\n".into();
    }
    let mut terms: Vec<String> = Vec::new();
    for f in fits {
        for t in &f.terms {
            if !terms.contains(t) {
                terms.push(t.clone());
            }
        }
    }

    let mut grid: Vec<Vec<String>> = Vec::new();
    let mut header = vec!["term".to_string()];
    header.extend(fits.iter().map(|f| f.subset.label().to_string()));
    grid.push(header);
    for t in &terms {
        let mut coef = vec![t.clone()];
        let mut se = vec![String::new()];
        for f in fits {
            match f.terms.iter().position(|x| x == t) {
                Some(j) => {
                    coef.push(format!("{:.4}{}", f.beta[j], stars(f.p[j])));
                    se.push(format!("({:.4})", f.se[j]));
                }
                None => {
                    coef.push(String::new());
                    se.push(String::new());
                }
            }
        }
        grid.push(coef);
        grid.push(se);
    }
    let footer_start = grid.len();
    let mut push_footer = |label: &str, cells: Vec<String>| {
        let mut row = vec![label.to_string()];
        row.extend(cells);
        grid.push(row);
    };
    push_footer("n_obs", fits.iter().map(|f| f.n_obs.to_string()).collect());
    push_footer("n_clusters", fits.iter().map(|f| f.n_clusters.to_string()).collect());
    push_footer("r_squared", fits.iter().map(|f| format!("{:.4}", f.r2)).collect());
    push_footer("adj_r_squared", fits.iter().map(|f| format!("{:.4}", f.adj_r2)).collect());

    let ncols = grid[0].len();
    let widths: Vec<usize> = (0..ncols)
        .map(|c| grid.iter().map(|row| row[c].len()).max().unwrap_or(0))
        .collect();
    let rule_len = widths.iter().sum::<usize>() + 2 * (ncols - 1);
    let mut out = String::new();
    for (i, row) in grid.iter().enumerate() {
        if i == 1 || i == footer_start {
            out.push_str(&"-".repeat(rule_len));
            out.push('\n');
        }
        for (c, cell) in row.iter().enumerate() {
            if c == 0 {
                out.push_str(&format!("{:<w$}", cell, w = widths[0]));
            } else {
                out.push_str(&format!("  {:>w$}", cell, w = widths[c]));
            }
        }
        while out.ends_with(' ') {
            out.pop();
        }
        out.push('\n');
    }
    out.push('\n');
    out.push_str("* p<0.05, ** p<0.01, *** p<0.001; clustered standard errors in parentheses.\n");
    for f in fits {
        if !f.pruned.is_empty() {
            out.push_str(&format!("pruned ({}): {}\n", f.subset.label(), f.pruned.join(", ")));
        }
    }
    out
}

/// Writes term, coefficient, clustered_se, t_stat, p_value rows.
/// Floats use shortest round-trip formatting, so identical fits write
/// identical bytes.
pub fn write_fit_csv(path: impl AsRef<Path>, fit: &RegressionFit) -> Result<(), RegError> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(["term", "coefficient", "clustered_se", "t_stat", "p_value"])?;
    for j in 0..fit.terms.len() {
        w.write_record([
            fit.terms[j].as_str(),
            &fit.beta[j].to_string(),
            &fit.se[j].to_string(),
            &fit.t[j].to_string(),
            &fit.p[j].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv(path: impl AsRef<Path>, table: &SummaryTable) -> Result<(), RegError> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record([table.attribute.as_str(), "count", "max", "min", "mean", "std", "median"])?;
    for r in &table.rows {
        w.write_record([
            r.group.as_str(),
            &r.count.to_string(),
            &r.max.to_string(),
            &r.min.to_string(),
            &r.mean.to_string(),
            &r.std.to_string(),
            &r.median.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_correlation_csv(path: impl AsRef<Path>, table: &CorrelationTable) -> Result<(), RegError> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    let mut header = vec!["variable".to_string()];
    header.extend(table.names.iter().cloned());
    w.write_record(&header)?;
    for (i, name) in table.names.iter().enumerate() {
        let mut row = vec![name.clone()];
        row.extend((0..table.names.len()).map(|j| table.matrix[(i, j)].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
