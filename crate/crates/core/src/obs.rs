//! Logistic model for whether a biomarker is recorded at a visit.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{PanelDataset, SubjectBaseline};
use crate::design::{covariate_rows, Rows};
use crate::error::FitError;
use crate::linalg::{dot, logistic};

pub const SEPARATION_BOUND: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObsModelFit {
    /// Coefficient names in order; "(intercept)" first when present.
    pub names: Vec<String>,
    pub alpha: Vec<f64>,
    pub intercept: bool,
    pub converged: bool,
    pub iterations: usize,
}

impl ObsModelFit {
    pub fn linear_predictor(&self, baseline: &SubjectBaseline) -> f64 {
        let mut lp = 0.0;
        let mut coefs = self.alpha.iter();
        if self.intercept {
            lp += coefs.next().copied().unwrap_or(0.0);
        }
        for (name, a) in self.names.iter().skip(usize::from(self.intercept)).zip(coefs) {
            lp += a * baseline.covariates.get(name).copied().unwrap_or(f64::NAN);
        }
        lp
    }
}

/// ω̂ᵢ: probability that a visit by this subject records the biomarker.
pub fn omega(fit: &ObsModelFit, baseline: &SubjectBaseline) -> f64 {
    logistic(fit.linear_predictor(baseline))
}

/// Collapsed per-subject statistics: design row, visit count nᵢ, recorded count oᵢ.
pub struct Collapsed {
    pub v: Rows,
    pub visits: Vec<f64>,
    pub recorded: Vec<f64>,
}

impl Collapsed {
    pub fn from_dataset(dataset: &PanelDataset, v_names: &[String], intercept: bool) -> Result<Self, FitError> {
        Ok(Self {
            v: covariate_rows(dataset, v_names, intercept)?,
            visits: dataset.subjects.iter().map(|s| s.visit_count() as f64).collect(),
            recorded: dataset.subjects.iter().map(|s| s.measurement_count() as f64).collect(),
        })
    }

    fn score_information(&self, alpha: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let p = self.v.width();
        let mut u = DVector::<f64>::zeros(p);
        let mut info = DMatrix::<f64>::zeros(p, p);
        for i in 0..self.visits.len() {
            let n = self.visits[i];
            if n == 0.0 {
                continue;
            }
            let row = self.v.row(i);
            let w = logistic(dot(row, alpha));
            let r = self.recorded[i] - n * w;
            let h = n * w * (1.0 - w);
            for a in 0..p {
                u[a] += row[a] * r;
                for b in 0..p {
                    info[(a, b)] += h * row[a] * row[b];
                }
            }
        }
        (u, info)
    }
}

/// Newton solve of the logistic score over all visits, using (oᵢ, nᵢ) sufficient statistics.
pub fn estimate_alpha(
    dataset: &PanelDataset,
    v_names: &[String],
    intercept: bool,
    tol: f64,
    max_iter: usize,
) -> Result<ObsModelFit, FitError> {
    let total = dataset.total_visits();
    if total == 0 {
        return Err(FitError::NoEvents("observation"));
    }
    let recorded = dataset.total_measurements();
    if recorded == total {
        return Err(FitError::Degenerate("every visit has a recorded biomarker"));
    }
    if recorded == 0 {
        return Err(FitError::Degenerate("no visit has a recorded biomarker"));
    }
    let c = Collapsed::from_dataset(dataset, v_names, intercept)?;
    let mut names = Vec::new();
    if intercept {
        names.push("(intercept)".to_string());
    }
    names.extend(v_names.iter().cloned());
    let p = c.v.width();
    let mut alpha = vec![0.0; p];
    let target = tol * total as f64;
    for iter in 0..max_iter {
        let (u, info) = c.score_information(&alpha);
        let res = u.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if res <= target {
            return Ok(ObsModelFit {
                names,
                alpha,
                intercept,
                converged: true,
                iterations: iter,
            });
        }
        let step = info
            .clone()
            .cholesky()
            .map(|ch| ch.solve(&u))
            .or_else(|| info.full_piv_lu().solve(&u))
            .ok_or_else(|| FitError::Separation(SEPARATION_BOUND))?;
        for (a, s) in alpha.iter_mut().zip(step.iter()) {
            *a += s;
        }
        let norm = alpha.iter().map(|a| a * a).sum::<f64>().sqrt();
        if !(norm <= SEPARATION_BOUND) {
            return Err(FitError::Separation(SEPARATION_BOUND));
        }
    }
    let (u, _) = c.score_information(&alpha);
    Err(FitError::NotConverged {
        what: "observation-model Newton",
        iterations: max_iter,
        residual: u.iter().fold(0.0f64, |m, x| m.max(x.abs())),
    })
}
