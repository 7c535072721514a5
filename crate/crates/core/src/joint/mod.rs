//! Estimating-equation longitudinal fitters.
//!
//! The Liang family (EHRJoint, JMVL-Liang, Adapted-Liang) share one assembly:
//! over recorded events, A = Σ (D − D̄(t)) Dᵀ and c = Σ (D − D̄(t)) Y with
//! D = (X, B̂) and D̄(t) the at-risk average weighted by ω̂ⱼ nⱼ / Λ̂₀(Cⱼ).

mod iirr;
mod ly;

pub use iirr::fit_iirr;
pub use ly::fit_jmvl_ly;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::PanelDataset;
use crate::design::{covariate_rows, DesignSpec, Rows};
use crate::error::FitError;
use crate::linalg::{solve_checked, SINGULAR_THRESHOLD};
use crate::method::Method;
use crate::obs::{estimate_alpha, omega, ObsModelFit};
use crate::visit::{fit_visit_model, VisitModelFit};

pub const OBS_TOL: f64 = 1e-10;
pub const OBS_MAX_ITER: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointFitResult {
    pub method: Method,
    pub beta_names: Vec<String>,
    pub beta: Vec<f64>,
    pub theta_names: Vec<String>,
    /// Absent when the frailty variance estimate is zero, or for methods without θ.
    pub theta: Option<Vec<f64>>,
    pub condition_number: f64,
    /// Number of terms summed in the estimating equation.
    pub residual_terms: usize,
    pub gamma: Vec<f64>,
    pub visit: Option<VisitModelFit>,
    pub obs: Option<ObsModelFit>,
    pub gamma_x: Option<Vec<f64>>,
}

impl JointFitResult {
    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.beta_names.iter().position(|n| n == name).map(|i| self.beta[i])
    }
}

/// Rejects a time fixed effect for methods whose centered equation annihilates it.
pub fn check_identifiable(design: &DesignSpec, method: Method) -> Result<(), FitError> {
    if design.include_time_fixed_effect && !method.supports_time_fixed_effect() {
        return Err(FitError::TimeNotIdentifiable(format!(
            "{}: the risk-set average of t at time t is t itself, so every term of the time equation is zero",
            method.label()
        )));
    }
    Ok(())
}

/// Per-subject (X, B̂) design and centering weights for the Liang family.
#[derive(Debug, Clone)]
pub struct LiangSystem {
    pub a: DMatrix<f64>,
    pub c: DVector<f64>,
    pub residual_terms: usize,
}

fn z_design(dataset: &PanelDataset, design: &DesignSpec) -> Result<Rows, FitError> {
    covariate_rows(dataset, &design.z_names, design.z_intercept)
}

/// Builds (A, c). `d` holds one row of (X, B̂) per subject, `weight` the centering weights.
pub fn assemble_liang(dataset: &PanelDataset, d: &Rows, weight: &[f64]) -> LiangSystem {
    let k = d.width();
    let mut order: Vec<usize> = (0..dataset.subjects.len()).collect();
    order.sort_by(|&a, &b| {
        dataset.subjects[b]
            .censoring_time()
            .total_cmp(&dataset.subjects[a].censoring_time())
            .then(a.cmp(&b))
    });
    let mut events: Vec<(f64, usize, f64)> = dataset
        .subjects
        .iter()
        .enumerate()
        .flat_map(|(i, s)| s.measurements().map(move |(t, y)| (t, i, y)))
        .collect();
    events.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let mut a = DMatrix::<f64>::zeros(k, k);
    let mut c = DVector::<f64>::zeros(k);
    let mut s0 = 0.0;
    let mut s1 = vec![0.0; k];
    let mut centered = vec![0.0; k];
    let mut next = 0;
    for &(t, i, y) in &events {
        while next < order.len() && dataset.subjects[order[next]].censoring_time() >= t {
            let j = order[next];
            let w = weight[j];
            if w != 0.0 {
                s0 += w;
                for (acc, x) in s1.iter_mut().zip(d.row(j)) {
                    *acc += w * x;
                }
            }
            next += 1;
        }
        let di = d.row(i);
        for r in 0..k {
            centered[r] = di[r] - s1[r] / s0;
        }
        for r in 0..k {
            for col in 0..k {
                a[(r, col)] += centered[r] * di[col];
            }
            c[r] += centered[r] * y;
        }
    }
    LiangSystem {
        a,
        c,
        residual_terms: events.len(),
    }
}

/// Subject weights ωⱼ nⱼ / Λ̂₀(Cⱼ), zero for subjects without visits.
pub fn centering_weights(dataset: &PanelDataset, visit: &VisitModelFit, omega: &[f64]) -> Vec<f64> {
    dataset
        .subjects
        .iter()
        .enumerate()
        .map(|(j, s)| {
            let n = visit.counts[j];
            if n == 0 {
                0.0
            } else {
                omega[j] * n as f64 / visit.baseline.evaluate(s.censoring_time())
            }
        })
        .collect()
}

/// Shared Liang-family pipeline on `counting`, whose visits define nᵢ and Λ̂₀.
fn fit_liang_family(
    counting: &PanelDataset,
    design: &DesignSpec,
    method: Method,
    omega_of: impl FnOnce(&PanelDataset) -> Result<(Vec<f64>, Option<ObsModelFit>), FitError>,
) -> Result<JointFitResult, FitError> {
    design.check(Some(counting))?;
    check_identifiable(design, method)?;
    if counting.total_measurements() == 0 {
        return Err(FitError::NoMeasurements);
    }
    let visit = fit_visit_model(counting, &design.w_names)?;
    let (omega, obs) = omega_of(counting)?;

    let x = covariate_rows(counting, &design.x_names, false)?;
    let with_theta = visit.sigma_eta2 > 0.0;
    let z = z_design(counting, design)?;
    let q = if with_theta { z.width() } else { 0 };
    let multipliers = visit.multipliers();
    let mut d = Rows::new(x.width() + q);
    let mut buf = Vec::with_capacity(x.width() + q);
    for (i, &m) in multipliers.iter().enumerate() {
        buf.clear();
        buf.extend_from_slice(x.row(i));
        if q > 0 {
            buf.extend(z.row(i).iter().map(|zv| m * zv));
        }
        d.push(&buf);
    }
    let weight = centering_weights(counting, &visit, &omega);
    let sys = assemble_liang(counting, &d, &weight);
    let (sol, cond) = solve_checked(&sys.a, &sys.c, SINGULAR_THRESHOLD)?;
    let p = x.width();
    let mut theta_names = Vec::new();
    if design.z_intercept {
        theta_names.push("(intercept)".to_string());
    }
    theta_names.extend(design.z_names.iter().cloned());
    Ok(JointFitResult {
        method,
        beta_names: design.x_names.clone(),
        beta: sol.iter().take(p).copied().collect(),
        theta_names,
        theta: (q > 0).then(|| sol.iter().skip(p).copied().collect()),
        condition_number: cond,
        residual_terms: sys.residual_terms,
        gamma: visit.gamma.clone(),
        visit: Some(visit),
        obs,
        gamma_x: None,
    })
}

/// Fitted ω̂ per subject; a dataset where every visit is recorded has ω̂ ≡ 1.
pub fn fitted_omega(dataset: &PanelDataset, design: &DesignSpec) -> Result<(Vec<f64>, Option<ObsModelFit>), FitError> {
    if dataset.total_visits() > 0 && dataset.total_measurements() == dataset.total_visits() {
        return Ok((vec![1.0; dataset.subjects.len()], None));
    }
    let fit = estimate_alpha(dataset, &design.v_names, design.obs_intercept, OBS_TOL, OBS_MAX_ITER)?;
    let w = dataset.subjects.iter().map(|s| omega(&fit, &s.baseline)).collect();
    Ok((w, Some(fit)))
}

/// EHRJoint: all visits drive the visiting model; ω̂ from the logistic observation model.
pub fn fit_ehrjoint(dataset: &PanelDataset, design: &DesignSpec) -> Result<JointFitResult, FitError> {
    fit_liang_family(dataset, design, Method::EhrJoint, |d| fitted_omega(d, design))
}

/// JMVL-Liang: the counting process is restricted to measurement events and ω ≡ 1.
pub fn fit_jmvl_liang(dataset: &PanelDataset, design: &DesignSpec) -> Result<JointFitResult, FitError> {
    let measured = dataset.measurements_only();
    fit_liang_family(&measured, design, Method::JmvlLiang, |d| Ok((vec![1.0; d.subjects.len()], None)))
}

/// Adapted-Liang: all visits enter the counting process, observation coefficients fixed at 0.
pub fn fit_adapted_liang(dataset: &PanelDataset, design: &DesignSpec) -> Result<JointFitResult, FitError> {
    fit_liang_family(dataset, design, Method::AdaptedLiang, |d| Ok((vec![0.5; d.subjects.len()], None)))
}

/// Number of subjects with Cⱼ ≥ t, given censoring times sorted ascending.
pub(crate) fn at_risk(sorted_censoring: &[f64], t: f64) -> usize {
    sorted_censoring.len() - sorted_censoring.partition_point(|&c| c < t)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::data::fixtures::subject;
    use crate::data::VisitEvent;

    /// Identical visit schedules for all subjects, a few times unrecorded for everyone,
    /// and Y = 0.5·A − 1.0·Z + 7 + 0.02·t exactly.
    pub(crate) fn noise_free() -> PanelDataset {
        let covs = [(1.0, 0.3), (0.0, -1.1), (1.0, 1.4), (0.0, 0.2), (1.0, -0.7), (0.0, 0.9)];
        let subjects = covs
            .iter()
            .enumerate()
            .map(|(i, &(a, z))| {
                let visits = (1..=8)
                    .map(|k| {
                        let t = 2.0 * k as f64;
                        if k % 3 == 0 {
                            VisitEvent::unrecorded(t)
                        } else {
                            VisitEvent::recorded(t, 0.5 * a - 1.0 * z + 7.0 + 0.02 * t)
                        }
                    })
                    .collect();
                subject(&format!("s{i}"), 20.0, &[("A", a), ("Z", z)], visits)
            })
            .collect();
        PanelDataset::new(0.0, subjects)
    }

    fn design() -> DesignSpec {
        DesignSpec::new(&["A", "Z"], &[], &["A", "Z"], &["A"])
    }

    fn assert_exact(fit: &JointFitResult) {
        assert!((fit.beta[0] - 0.5).abs() < 1e-10, "{:?}", fit.beta);
        assert!((fit.beta[1] + 1.0).abs() < 1e-10, "{:?}", fit.beta);
    }

    #[test]
    fn liang_family_recovers_noise_free_coefficients() {
        let d = noise_free();
        assert_exact(&fit_ehrjoint(&d, &design()).unwrap());
        assert_exact(&fit_jmvl_liang(&d, &design()).unwrap());
        assert_exact(&fit_adapted_liang(&d, &design()).unwrap());
    }

    #[test]
    fn time_guard_fires_before_assembly() {
        let d = noise_free();
        let with_time = design().with_time(true);
        for f in [fit_ehrjoint, fit_jmvl_liang, fit_adapted_liang, fit_jmvl_ly] {
            assert!(matches!(f(&d, &with_time), Err(FitError::TimeNotIdentifiable(_))));
        }
        assert!(check_identifiable(&with_time, Method::Iirr).is_ok());
        assert!(check_identifiable(&with_time, Method::StandardLme).is_ok());
        assert!(check_identifiable(&design(), Method::EhrJoint).is_ok());
    }

    #[test]
    fn time_column_yields_zero_row() {
        // Force t into D through a subject-constant stand-in: the centered row of a
        // column equal to the event time is identically zero when it is evaluated at t.
        let d = noise_free();
        let visit = fit_visit_model(&d, &design().w_names).unwrap();
        let weight = centering_weights(&d, &visit, &vec![1.0; d.subjects.len()]);
        let mut sorted: Vec<usize> = (0..d.subjects.len()).collect();
        sorted.sort_by(|&a, &b| d.subjects[b].censoring_time().total_cmp(&d.subjects[a].censoring_time()));
        for s in &d.subjects {
            for (t, _) in s.measurements() {
                let (mut num, mut den) = (0.0, 0.0);
                for (j, r) in d.subjects.iter().enumerate() {
                    if r.censoring_time() >= t {
                        num += weight[j] * t;
                        den += weight[j];
                    }
                }
                assert_eq!(t - num / den, 0.0);
            }
        }
    }

    #[test]
    fn adapted_liang_invariant_to_constant_omega() {
        let d = noise_free();
        let base = fit_adapted_liang(&d, &design()).unwrap();
        let other = fit_liang_family(&d, &design(), Method::AdaptedLiang, |d| Ok((vec![0.3; d.subjects.len()], None))).unwrap();
        for (a, b) in base.beta.iter().zip(&other.beta) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn no_measurements_is_an_error() {
        let mut d = noise_free();
        for s in &mut d.subjects {
            for v in &mut s.visits {
                *v = VisitEvent::unrecorded(v.time);
            }
        }
        assert!(matches!(fit_ehrjoint(&d, &design()), Err(FitError::NoMeasurements)));
    }

    #[test]
    fn at_risk_counts() {
        let c = [1.0, 2.0, 2.0, 5.0];
        assert_eq!(at_risk(&c, 0.5), 4);
        assert_eq!(at_risk(&c, 2.0), 3);
        assert_eq!(at_risk(&c, 2.5), 1);
        assert_eq!(at_risk(&c, 6.0), 0);
    }
}
