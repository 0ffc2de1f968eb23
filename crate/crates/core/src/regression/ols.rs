//! Least squares with cluster-robust covariance.
//!
//! Influence scores from the same window share one model evaluation, so
//! their regression errors co-move. Standard errors therefore cluster
//! on window id with the usual sandwich: (X'X)^-1 (sum_g s_g s_g')
//! (X'X)^-1 over per-cluster score sums s_g = sum u_i x_i.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use super::design::{build_design, Design, DesignSpec};
use super::{RegError, RegressionRow};

/// Small-sample correction on the sandwich.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmallSample {
    /// [G/(G-1)] * [(n-1)/(n-k)].
    Cr1,
    /// No correction.
    Cr0,
}

/// Reference distribution for coefficient p-values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueDist {
    Normal,
    /// Student t with G-1 degrees of freedom.
    StudentT,
}

#[derive(Debug, Clone)]
pub struct OlsSolution {
    pub beta: DVector<f64>,
    pub fitted: DVector<f64>,
    pub residuals: DVector<f64>,
}

/// Rank tolerance relative to the leading R diagonal.
const RANK_RTOL: f64 = 1e-10;

/// Householder QR solve. Rank deficiency is fatal and names the
/// trailing pivot columns so the caller can see what to drop.
pub fn ols_fit(x: &DMatrix<f64>, y: &DVector<f64>, names: &[String]) -> Result<OlsSolution, RegError> {
    let (n, k) = x.shape();
    if y.len() != n {
        return Err(RegError::Design(format!("{n} design rows but {} responses", y.len())));
    }
    if names.len() != k {
        return Err(RegError::Design(format!("{k} columns but {} names", names.len())));
    }
    if n <= k {
        return Err(RegError::Design(format!("{n} observations cannot identify {k} coefficients")));
    }

    let piv = x.clone().col_piv_qr();
    let rdiag = piv.r();
    let tol = rdiag[(0, 0)].abs() * RANK_RTOL * n.max(k) as f64;
    let rank = (0..k).take_while(|&j| rdiag[(j, j)].abs() > tol).count();
    if rank < k {
        // Marker row tracks where each original column landed under the
        // pivot permutation; positions past the rank are the dependents.
        let mut marker = DMatrix::from_fn(1, k, |_, j| j as f64);
        piv.p().permute_columns(&mut marker);
        let dependent = (rank..k)
            .map(|j| names[marker[(0, j)] as usize].clone())
            .collect();
        return Err(RegError::Collinear(dependent));
    }

    let qr = x.clone().qr();
    let r = qr.r();
    let qty = qr.q().transpose() * y;
    let mut beta = DVector::zeros(k);
    for i in (0..k).rev() {
        let mut s = qty[i];
        for j in i + 1..k {
            s -= r[(i, j)] * beta[j];
        }
        beta[i] = s / r[(i, i)];
    }
    let fitted = x * &beta;
    let residuals = y - &fitted;
    Ok(OlsSolution { beta, fitted, residuals })
}

#[derive(Debug, Clone)]
pub struct ClusteredCov {
    pub cov: DMatrix<f64>,
    pub se: Vec<f64>,
    pub n_clusters: usize,
    pub factor: f64,
}

/// Sandwich covariance with errors clustered by the given keys.
pub fn cluster_robust_se(
    x: &DMatrix<f64>,
    residuals: &DVector<f64>,
    clusters: &[u64],
    small_sample: SmallSample,
) -> Result<ClusteredCov, RegError> {
    let (n, k) = x.shape();
    if clusters.len() != n || residuals.len() != n {
        return Err(RegError::Cluster(format!(
            "{n} rows but {} cluster keys and {} residuals",
            clusters.len(),
            residuals.len()
        )));
    }
    let mut groups: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, c) in clusters.iter().enumerate() {
        groups.entry(*c).or_default().push(i);
    }
    let g = groups.len();
    if g < 2 {
        return Err(RegError::Cluster(format!(
            "{g} cluster(s); clustered errors need at least 2"
        )));
    }

    let xtx = x.transpose() * x;
    let bread = xtx
        .cholesky()
        .ok_or_else(|| RegError::Cluster("X'X is not positive definite".into()))?
        .inverse();

    let mut meat = DMatrix::zeros(k, k);
    for rows in groups.values() {
        let mut s = DVector::zeros(k);
        for &i in rows {
            s += residuals[i] * x.row(i).transpose();
        }
        meat += &s * s.transpose();
    }

    let factor = match small_sample {
        SmallSample::Cr1 => {
            (g as f64 / (g as f64 - 1.0)) * ((n as f64 - 1.0) / (n as f64 - k as f64))
        }
        SmallSample::Cr0 => 1.0,
    };
    let cov = &bread * meat * &bread * factor;
    let cov = (&cov + cov.transpose()) * 0.5;
    let se = (0..k).map(|j| cov[(j, j)].max(0.0).sqrt()).collect();
    Ok(ClusteredCov { cov, se, n_clusters: g, factor })
}

fn two_sided_p(t: f64, dist: PValueDist, n_clusters: usize) -> f64 {
    if t.is_nan() {
        return 1.0;
    }
    let tail = match dist {
        PValueDist::Normal => {
            let std = Normal::new(0.0, 1.0).expect("unit normal");
            1.0 - std.cdf(t.abs())
        }
        PValueDist::StudentT => {
            let df = (n_clusters.max(2) - 1) as f64;
            let st = StudentsT::new(0.0, 1.0, df).expect("positive dof");
            1.0 - st.cdf(t.abs())
        }
    };
    (2.0 * tail).clamp(0.0, 1.0)
}

/// Which rows a fit ran on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsetTag {
    All,
    PredictedPositive,
    PredictedNegative,
}

impl SubsetTag {
    pub fn label(&self) -> &'static str {
        match self {
            SubsetTag::All => "all",
            SubsetTag::PredictedPositive => "predicted_positive",
            SubsetTag::PredictedNegative => "predicted_negative",
        }
    }
}

/// One fitted regression: coefficients with clustered inference.
#[derive(Debug, Clone)]
pub struct RegressionFit {
    pub subset: SubsetTag,
    pub terms: Vec<String>,
    pub beta: Vec<f64>,
    pub se: Vec<f64>,
    pub t: Vec<f64>,
    pub p: Vec<f64>,
    pub cov: DMatrix<f64>,
    pub r2: f64,
    pub adj_r2: f64,
    pub n_obs: usize,
    pub n_clusters: usize,
    pub pruned: Vec<String>,
}

fn fit_design(design: &Design, spec: &DesignSpec, subset: SubsetTag) -> Result<RegressionFit, RegError> {
    let sol = ols_fit(&design.x, &design.y, &design.names)?;
    let cl = cluster_robust_se(&design.x, &sol.residuals, &design.clusters, spec.small_sample)?;

    let n = design.x.nrows() as f64;
    let k = design.x.ncols() as f64;
    let mean = design.y.mean();
    let sst: f64 = design.y.iter().map(|v| (v - mean).powi(2)).sum();
    let ssr: f64 = sol.residuals.iter().map(|v| v * v).sum();
    let r2 = if sst > 0.0 { 1.0 - ssr / sst } else { 0.0 };
    let adj_r2 = 1.0 - (1.0 - r2) * (n - 1.0) / (n - k);

    let t: Vec<f64> = sol
        .beta
        .iter()
        .zip(&cl.se)
        .map(|(b, s)| if *s > 0.0 { b / s } else { f64::INFINITY * b.signum() })
        .collect();
    let p = t.iter().map(|t| two_sided_p(*t, spec.pvalues, cl.n_clusters)).collect();

    Ok(RegressionFit {
        subset,
        terms: design.names.clone(),
        beta: sol.beta.iter().copied().collect(),
        se: cl.se.clone(),
        t,
        p,
        cov: cl.cov,
        r2,
        adj_r2,
        n_obs: design.x.nrows(),
        n_clusters: cl.n_clusters,
        pruned: design.pruned.clone(),
    })
}

/// Builds the design for one row subset and fits it.
pub fn fit_rows(rows: &[RegressionRow], spec: &DesignSpec, subset: SubsetTag) -> Result<RegressionFit, RegError> {
    fit_design(&build_design(rows, spec)?, spec, subset)
}

#[derive(Debug, Clone)]
pub struct SubsetRegressions {
    pub fits: Vec<RegressionFit>,
    /// Subsets that could not run, with the reason.
    pub skipped: Vec<(SubsetTag, String)>,
}

/// The three standard fits: all rows (with the predicted-positive
/// indicator; it prunes itself when only one class is present), then
/// the predicted-positive and predicted-negative subsets without it.
/// An empty subset is skipped with a diagnostic, not an error.
pub fn run_subset_regressions(rows: &[RegressionRow], spec: &DesignSpec) -> Result<SubsetRegressions, RegError> {
    let mut fits = Vec::new();
    let mut skipped = Vec::new();

    let mut all_spec = spec.clone();
    all_spec.include_predicted = true;
    fits.push(fit_rows(rows, &all_spec, SubsetTag::All)?);

    let mut sub_spec = spec.clone();
    sub_spec.include_predicted = false;
    for (tag, label) in [(SubsetTag::PredictedPositive, 1u8), (SubsetTag::PredictedNegative, 0u8)] {
        let subset: Vec<RegressionRow> = rows.iter().filter(|r| r.predicted_label == label).cloned().collect();
        if subset.is_empty() {
            skipped.push((tag, format!("no rows with predicted_label={label}")));
            continue;
        }
        fits.push(fit_rows(&subset, &sub_spec, tag)?);
    }
    Ok(SubsetRegressions { fits, skipped })
}
