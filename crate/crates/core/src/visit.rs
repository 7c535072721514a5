//! Proportional-rate visiting model with a multiplicative gamma frailty.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::PanelDataset;
use crate::design::{covariate_rows, Rows};
use crate::error::FitError;
use crate::linalg::dot;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 100;
const MAX_HALVINGS: usize = 30;

/// Right-continuous step function that is zero before its first jump.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StepFunction {
    jump_times: Vec<f64>,
    cumulative_values: Vec<f64>,
}

impl StepFunction {
    pub fn zero() -> Self {
        Self::default()
    }

    /// Builds from strictly increasing knots and nondecreasing values.
    pub fn from_knots(jump_times: Vec<f64>, cumulative_values: Vec<f64>) -> Self {
        assert_eq!(jump_times.len(), cumulative_values.len());
        debug_assert!(jump_times.windows(2).all(|w| w[0] < w[1]));
        Self {
            jump_times,
            cumulative_values,
        }
    }

    pub fn evaluate(&self, t: f64) -> f64 {
        let idx = self.jump_times.partition_point(|&s| s <= t);
        if idx == 0 {
            0.0
        } else {
            self.cumulative_values[idx - 1]
        }
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    pub fn cumulative_values(&self) -> &[f64] {
        &self.cumulative_values
    }

    /// Jump sizes in knot order.
    pub fn jumps(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.cumulative_values
            .iter()
            .map(|&v| {
                let j = v - prev;
                prev = v;
                j
            })
            .collect()
    }
}

/// Recurrent-event data in the shape the rate model needs.
#[derive(Debug, Clone)]
pub struct EventData {
    pub w: Rows,
    pub censoring: Vec<f64>,
    /// (time, subject) sorted by time ascending.
    pub events: Vec<(f64, usize)>,
}

impl EventData {
    pub fn from_dataset(dataset: &PanelDataset, w_names: &[String]) -> Result<Self, FitError> {
        let w = covariate_rows(dataset, w_names, false)?;
        Ok(Self::with_rows(dataset, w))
    }

    pub fn with_rows(dataset: &PanelDataset, w: Rows) -> Self {
        let censoring = dataset.subjects.iter().map(|s| s.censoring_time()).collect();
        let mut events: Vec<(f64, usize)> = dataset
            .subjects
            .iter()
            .enumerate()
            .flat_map(|(i, s)| s.visits.iter().map(move |v| (v.time, i)))
            .collect();
        events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        Self { w, censoring, events }
    }

    pub fn n_subjects(&self) -> usize {
        self.censoring.len()
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut n = vec![0; self.n_subjects()];
        for &(_, i) in &self.events {
            n[i] += 1;
        }
        n
    }

    fn linear_predictor(&self, gamma: &[f64]) -> Vec<f64> {
        (0..self.n_subjects()).map(|i| dot(self.w.row(i), gamma)).collect()
    }

    /// Subjects ordered by censoring time, latest first.
    fn by_censoring_desc(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.n_subjects()).collect();
        idx.sort_by(|&a, &b| self.censoring[b].total_cmp(&self.censoring[a]).then(a.cmp(&b)));
        idx
    }

    /// Score U(γ) and information I(γ) in one backward sweep over event times.
    pub fn score_information(&self, gamma: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let p = self.w.width();
        let eta = self.linear_predictor(gamma);
        let offset = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let order = self.by_censoring_desc();
        let mut s0 = 0.0;
        let mut s1 = DVector::<f64>::zeros(p);
        let mut s2 = DMatrix::<f64>::zeros(p, p);
        let mut u = DVector::<f64>::zeros(p);
        let mut info = DMatrix::<f64>::zeros(p, p);
        let mut k = 0;
        for &(t, i) in self.events.iter().rev() {
            while k < order.len() && self.censoring[order[k]] >= t {
                let j = order[k];
                let e = (eta[j] - offset).exp();
                let wj = self.w.row(j);
                s0 += e;
                for a in 0..p {
                    s1[a] += e * wj[a];
                    for b in 0..p {
                        s2[(a, b)] += e * wj[a] * wj[b];
                    }
                }
                k += 1;
            }
            let wi = self.w.row(i);
            for a in 0..p {
                u[a] += wi[a] - s1[a] / s0;
                for b in 0..p {
                    info[(a, b)] += s2[(a, b)] / s0 - s1[a] * s1[b] / (s0 * s0);
                }
            }
        }
        (u, info)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaFit {
    pub gamma: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

fn sup_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn newton_step(info: &DMatrix<f64>, u: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = info.clone().cholesky() {
        return Some(ch.solve(u));
    }
    info.clone().full_piv_lu().solve(u)
}

/// Damped Newton solve of the rate-model estimating equation.
pub fn solve_gamma(data: &EventData, tol: f64, max_iter: usize) -> Result<GammaFit, FitError> {
    if data.events.is_empty() {
        return Err(FitError::NoEvents("visiting"));
    }
    let p = data.w.width();
    if p == 0 {
        return Ok(GammaFit {
            gamma: Vec::new(),
            iterations: 0,
            residual: 0.0,
        });
    }
    let target = tol * data.events.len() as f64;
    let mut gamma = vec![0.0; p];
    let (mut u, mut info) = data.score_information(&gamma);
    let eig = info.clone().symmetric_eigen().eigenvalues;
    let scale = eig.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    if eig.iter().any(|&v| v <= 1e-10 * scale) {
        return Err(FitError::NonIdentifiable(
            "visiting covariates have no variation within the risk sets".into(),
        ));
    }
    let mut res = sup_norm(&u);
    for iter in 0..max_iter {
        if res <= target {
            return Ok(GammaFit {
                gamma,
                iterations: iter,
                residual: res,
            });
        }
        let step = newton_step(&info, &u).ok_or_else(|| FitError::NonIdentifiable("singular information matrix".into()))?;
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial: Vec<f64> = gamma.iter().zip(step.iter()).map(|(g, s)| g + lambda * s).collect();
            let (tu, ti) = data.score_information(&trial);
            let tr = sup_norm(&tu);
            if tr.is_finite() && tr < res {
                accepted = Some((trial, tu, ti, tr));
                break;
            }
            lambda *= 0.5;
        }
        match accepted {
            Some((g, tu, ti, tr)) => {
                gamma = g;
                u = tu;
                info = ti;
                res = tr;
            }
            None => {
                return Err(FitError::NotConverged {
                    what: "visiting-model Newton",
                    iterations: iter + 1,
                    residual: res,
                })
            }
        }
    }
    if res <= target {
        return Ok(GammaFit {
            gamma,
            iterations: max_iter,
            residual: res,
        });
    }
    Err(FitError::NotConverged {
        what: "visiting-model Newton",
        iterations: max_iter,
        residual: res,
    })
}

/// Aalen–Breslow estimator with ties aggregated at each distinct time.
pub fn breslow(data: &EventData, gamma: &[f64]) -> StepFunction {
    if data.events.is_empty() {
        return StepFunction::zero();
    }
    let risk: Vec<f64> = data.linear_predictor(gamma).iter().map(|e| e.exp()).collect();
    let order = data.by_censoring_desc();
    let mut times = Vec::new();
    let mut jumps = Vec::new();
    let mut s0 = 0.0;
    let mut k = 0;
    let mut idx = data.events.len();
    while idx > 0 {
        let t = data.events[idx - 1].0;
        let mut d = 0usize;
        while idx > 0 && data.events[idx - 1].0 == t {
            d += 1;
            idx -= 1;
        }
        while k < order.len() && data.censoring[order[k]] >= t {
            s0 += risk[order[k]];
            k += 1;
        }
        assert!(s0 > 0.0, "empty risk set at an event time");
        times.push(t);
        jumps.push(d as f64 / s0);
    }
    times.reverse();
    jumps.reverse();
    let mut acc = 0.0;
    let values = jumps
        .iter()
        .map(|j| {
            acc += j;
            acc
        })
        .collect();
    StepFunction::from_knots(times, values)
}

/// Moment estimator of the frailty variance from counts and expected counts, clamped at 0.
pub fn sigma_eta_from_exposure(counts: &[usize], expected: &[f64]) -> Result<f64, FitError> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (&n, &mu) in counts.iter().zip(expected) {
        let n = n as f64;
        num += n * n - n - mu * mu;
        den += mu * mu;
    }
    if !(den > 0.0) {
        return Err(FitError::ZeroExposure);
    }
    Ok((num / den).max(0.0))
}

/// E(η − 1 | n, C) under the gamma frailty: the scalar that multiplies Z in B̂.
pub fn frailty_multiplier(count: usize, expected: f64, sigma_eta2: f64) -> f64 {
    (count as f64 - expected) * sigma_eta2 / (1.0 + expected * sigma_eta2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisitModelFit {
    pub w_names: Vec<String>,
    pub gamma: Vec<f64>,
    pub baseline: StepFunction,
    pub sigma_eta2: f64,
    pub iterations: usize,
    pub converged: bool,
    /// exp(γ̂ᵀWᵢ)Λ̂₀(Cᵢ) per subject.
    pub expected_counts: Vec<f64>,
    pub counts: Vec<usize>,
}

impl VisitModelFit {
    pub fn multipliers(&self) -> Vec<f64> {
        self.counts
            .iter()
            .zip(&self.expected_counts)
            .map(|(&n, &mu)| frailty_multiplier(n, mu, self.sigma_eta2))
            .collect()
    }
}

pub fn fit_events(data: &EventData, w_names: &[String], tol: f64, max_iter: usize) -> Result<VisitModelFit, FitError> {
    let g = solve_gamma(data, tol, max_iter)?;
    let baseline = breslow(data, &g.gamma);
    let eta = data.linear_predictor(&g.gamma);
    let expected: Vec<f64> = eta
        .iter()
        .zip(&data.censoring)
        .map(|(e, &c)| e.exp() * baseline.evaluate(c))
        .collect();
    let counts = data.counts();
    let sigma_eta2 = sigma_eta_from_exposure(&counts, &expected)?;
    Ok(VisitModelFit {
        w_names: w_names.to_vec(),
        gamma: g.gamma,
        baseline,
        sigma_eta2,
        iterations: g.iterations,
        converged: true,
        expected_counts: expected,
        counts,
    })
}

/// γ̂, Λ̂₀ and σ̂²η from every visit in `dataset`.
pub fn fit_visit_model(dataset: &PanelDataset, w_names: &[String]) -> Result<VisitModelFit, FitError> {
    let data = EventData::from_dataset(dataset, w_names)?;
    fit_events(&data, w_names, DEFAULT_TOL, DEFAULT_MAX_ITER)
}

pub fn estimate_gamma(dataset: &PanelDataset, w_names: &[String], tol: f64, max_iter: usize) -> Result<GammaFit, FitError> {
    solve_gamma(&EventData::from_dataset(dataset, w_names)?, tol, max_iter)
}

pub fn breslow_baseline(dataset: &PanelDataset, w_names: &[String], gamma: &[f64]) -> Result<StepFunction, FitError> {
    Ok(breslow(&EventData::from_dataset(dataset, w_names)?, gamma))
}

pub fn estimate_sigma_eta(
    dataset: &PanelDataset,
    w_names: &[String],
    gamma: &[f64],
    baseline: &StepFunction,
) -> Result<f64, FitError> {
    let data = EventData::from_dataset(dataset, w_names)?;
    let expected: Vec<f64> = data
        .linear_predictor(gamma)
        .iter()
        .zip(&data.censoring)
        .map(|(e, &c)| e.exp() * baseline.evaluate(c))
        .collect();
    sigma_eta_from_exposure(&data.counts(), &expected)
}
