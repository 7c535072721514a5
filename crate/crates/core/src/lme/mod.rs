//! Linear mixed-effects comparators fitted by maximum likelihood, and summary-statistic OLS.
//!
//! Random effects are subject-constant, so every subject's marginal covariance is
//! σ²(I + sᵢJ) with sᵢ = zᵢᵀDzᵢ and D = Σ_b/σ². Inverse and determinant are closed
//! form, β and σ² are profiled out, and only the log-Cholesky factor of D is searched.

pub mod simplex;
mod summary;

pub use summary::{fit_summary_ols, subject_summary, SummaryStatistic};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::PanelDataset;
use crate::design::{covariate_rows, DesignSpec};
use crate::error::FitError;
use crate::rng::{domain, substream};
use simplex::{minimize, SimplexOptions};

pub const COLLINEAR_THRESHOLD: f64 = 1e10;
const RESTARTS: u64 = 5;
const RESTART_SEED: u64 = 0x1E3E_5EED;
const LOG_DIAG_BOUNDS: (f64, f64) = (-20.0, 10.0);
const OFFDIAG_BOUND: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LmeVariant {
    Standard,
    /// Adds the number of strictly earlier measurements.
    Oa,
    /// Adds the number of strictly earlier visits, recorded or not.
    Va,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmeFit {
    pub variant: LmeVariant,
    pub beta_names: Vec<String>,
    pub beta: Vec<f64>,
    /// Lower Cholesky factor of Σ_b, row-major q×q.
    pub sigma_b_chol: Vec<f64>,
    pub q: usize,
    pub sigma_eps2: f64,
    pub loglik: f64,
    pub converged: bool,
    pub evaluations: usize,
    /// Log-Cholesky parameters of Σ_b/σ² at the optimum.
    pub theta: Vec<f64>,
}

impl LmeFit {
    pub fn sigma_b(&self) -> DMatrix<f64> {
        let l = DMatrix::from_row_slice(self.q, self.q, &self.sigma_b_chol);
        &l * l.transpose()
    }

    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.beta_names.iter().position(|n| n == name).map(|i| self.beta[i])
    }
}

/// Per-subject sufficient statistics.
#[derive(Debug, Clone)]
pub struct SubjectStats {
    pub m: f64,
    pub z: Vec<f64>,
    pub xtx: DMatrix<f64>,
    pub xt1: DVector<f64>,
    pub xty: DVector<f64>,
    pub y1: f64,
    pub yty: f64,
}

#[derive(Debug, Clone)]
pub struct LmeData {
    pub beta_names: Vec<String>,
    pub subjects: Vec<SubjectStats>,
    pub n_obs: usize,
    pub q: usize,
    /// Stacked fixed-effect design, kept for the rank check.
    pub design: DMatrix<f64>,
}

/// Counts of strictly earlier measurements and visits at each measurement of one subject.
pub fn prior_counts(visits: &[crate::data::VisitEvent]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut measured = 0usize;
    for (k, v) in visits.iter().enumerate() {
        if v.recorded {
            out.push((measured as f64, k as f64));
            measured += 1;
        }
    }
    out
}

pub fn build_data(dataset: &PanelDataset, design: &DesignSpec, variant: LmeVariant) -> Result<LmeData, FitError> {
    design.check(Some(dataset))?;
    let x = covariate_rows(dataset, &design.x_names, false)?;
    let z = covariate_rows(dataset, &design.z_names, design.z_intercept)?;
    let time = design.include_time_fixed_effect;
    let extra = variant != LmeVariant::Standard;
    let p = 1 + x.width() + usize::from(time) + usize::from(extra);
    let mut names = vec!["(intercept)".to_string()];
    names.extend(design.x_names.iter().cloned());
    if time {
        names.push("time".into());
    }
    match variant {
        LmeVariant::Oa => names.push("prior_measurements".into()),
        LmeVariant::Va => names.push("prior_visits".into()),
        LmeVariant::Standard => {}
    }
    let n_obs = dataset.total_measurements();
    let mut stacked = DMatrix::<f64>::zeros(n_obs, p);
    let mut subjects = Vec::new();
    let mut row_idx = 0;
    let mut row = vec![0.0; p];
    for (i, s) in dataset.subjects.iter().enumerate() {
        let m = s.measurement_count();
        if m == 0 {
            continue;
        }
        let counts = prior_counts(&s.visits);
        let mut st = SubjectStats {
            m: m as f64,
            z: z.row(i).to_vec(),
            xtx: DMatrix::zeros(p, p),
            xt1: DVector::zeros(p),
            xty: DVector::zeros(p),
            y1: 0.0,
            yty: 0.0,
        };
        for ((t, y), (prior_m, prior_v)) in s.measurements().zip(counts) {
            row[0] = 1.0;
            row[1..=x.width()].copy_from_slice(x.row(i));
            let mut k = 1 + x.width();
            if time {
                row[k] = t;
                k += 1;
            }
            match variant {
                LmeVariant::Oa => row[k] = prior_m,
                LmeVariant::Va => row[k] = prior_v,
                LmeVariant::Standard => {}
            }
            for a in 0..p {
                stacked[(row_idx, a)] = row[a];
                st.xt1[a] += row[a];
                st.xty[a] += row[a] * y;
                for b in 0..p {
                    st.xtx[(a, b)] += row[a] * row[b];
                }
            }
            st.y1 += y;
            st.yty += y * y;
            row_idx += 1;
        }
        subjects.push(st);
    }
    Ok(LmeData {
        beta_names: names,
        subjects,
        n_obs,
        q: z.width(),
        design: stacked,
    })
}

/// Condition number of the column-normalized stacked design.
pub fn design_condition(x: &DMatrix<f64>) -> f64 {
    let mut xn = x.clone();
    for mut col in xn.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        } else {
            return f64::INFINITY;
        }
    }
    crate::linalg::condition_number(&xn)
}

fn relative_cov(theta: &[f64], q: usize) -> DMatrix<f64> {
    let mut l = DMatrix::<f64>::zeros(q, q);
    let mut k = 0;
    for r in 0..q {
        for c in 0..=r {
            l[(r, c)] = if r == c { theta[k].exp() } else { theta[k] };
            k += 1;
        }
    }
    &l * l.transpose()
}

fn n_params(q: usize) -> usize {
    q * (q + 1) / 2
}

fn in_bounds(theta: &[f64], q: usize) -> bool {
    let mut k = 0;
    for r in 0..q {
        for c in 0..=r {
            let v = theta[k];
            let ok = if r == c {
                v >= LOG_DIAG_BOUNDS.0 && v <= LOG_DIAG_BOUNDS.1
            } else {
                v.abs() <= OFFDIAG_BOUND
            };
            if !ok {
                return false;
            }
            k += 1;
        }
    }
    true
}

#[derive(Debug, Clone)]
pub struct Profile {
    pub beta: DVector<f64>,
    pub sigma2: f64,
    pub loglik: f64,
}

/// GLS β̂, σ̂² and the profiled log-likelihood at relative covariance `d`.
pub fn profile_at(data: &LmeData, d: &DMatrix<f64>) -> Option<Profile> {
    let p = data.beta_names.len();
    let mut m = DMatrix::<f64>::zeros(p, p);
    let mut r = DVector::<f64>::zeros(p);
    let mut yvy = 0.0;
    let mut logdet = 0.0;
    for s in &data.subjects {
        let z = DVector::from_column_slice(&s.z);
        let si = (z.transpose() * d * &z)[(0, 0)];
        let c = si / (1.0 + s.m * si);
        m += &s.xtx - c * &s.xt1 * s.xt1.transpose();
        r += &s.xty - c * s.y1 * &s.xt1;
        yvy += s.yty - c * s.y1 * s.y1;
        logdet += (s.m * si).ln_1p();
    }
    let beta = m.cholesky()?.solve(&r);
    let rss = yvy - beta.dot(&r);
    let n = data.n_obs as f64;
    let sigma2 = rss / n;
    if !(sigma2 > 0.0) {
        return None;
    }
    let loglik = -0.5 * (n * (2.0 * std::f64::consts::PI).ln() + n * sigma2.ln() + logdet + n);
    Some(Profile { beta, sigma2, loglik })
}

/// Profiled log-likelihood as a function of the log-Cholesky parameters.
pub fn profiled_loglik(data: &LmeData, theta: &[f64]) -> f64 {
    if !in_bounds(theta, data.q) {
        return f64::NEG_INFINITY;
    }
    profile_at(data, &relative_cov(theta, data.q)).map_or(f64::NEG_INFINITY, |p| p.loglik)
}

pub fn fit_lme(dataset: &PanelDataset, design: &DesignSpec, variant: LmeVariant) -> Result<LmeFit, FitError> {
    let data = build_data(dataset, design, variant)?;
    let p = data.beta_names.len();
    if data.n_obs < 2 {
        return Err(FitError::NoMeasurements);
    }
    if data.subjects.len() < 2 || data.n_obs <= p {
        return Err(FitError::TooFewSubjects {
            subjects: data.subjects.len(),
            parameters: p,
        });
    }
    let cond = design_condition(&data.design);
    if !(cond <= COLLINEAR_THRESHOLD) {
        return Err(FitError::Collinear(cond));
    }
    let k = n_params(data.q);
    let opts = SimplexOptions::default();
    let objective = |th: &[f64]| -profiled_loglik(&data, th);
    let mut best: Option<simplex::SimplexResult> = None;
    let mut evaluations = 0;
    let mut rng = substream(RESTART_SEED, &[domain::OPTIMIZER]);
    for restart in 0..RESTARTS {
        // First a default start, then a polish from the incumbent, then perturbed incumbents.
        let start: Vec<f64> = match (&best, restart) {
            (None, _) => vec![0.0; k],
            (Some(b), 1) => b.x.clone(),
            (Some(b), _) => b.x.iter().map(|v| v + rng.sample::<f64, _>(StandardNormal)).collect(),
        };
        let r = minimize(objective, &start, opts);
        evaluations += r.evaluations;
        if best.as_ref().is_none_or(|b| r.value < b.value || (r.value == b.value && r.converged)) {
            best = Some(r);
        }
    }
    let best = best.expect("at least one restart");
    if !best.value.is_finite() {
        return Err(FitError::NotConverged {
            what: "LME simplex",
            iterations: evaluations,
            residual: best.value,
        });
    }
    let d = relative_cov(&best.x, data.q);
    let prof = profile_at(&data, &d).ok_or(FitError::NotConverged {
        what: "LME simplex",
        iterations: evaluations,
        residual: f64::NAN,
    })?;
    let sigma_b = prof.sigma2 * d;
    let chol = sigma_b
        .clone()
        .cholesky()
        .map(|c| c.l())
        .unwrap_or_else(|| DMatrix::zeros(data.q, data.q));
    let mut chol_rows = Vec::with_capacity(data.q * data.q);
    for r in 0..data.q {
        for c in 0..data.q {
            chol_rows.push(chol[(r, c)]);
        }
    }
    Ok(LmeFit {
        variant,
        beta_names: data.beta_names,
        beta: prof.beta.iter().copied().collect(),
        sigma_b_chol: chol_rows,
        q: data.q,
        sigma_eps2: prof.sigma2,
        loglik: prof.loglik,
        converged: best.converged,
        evaluations,
        theta: best.x,
    })
}
