use crate::data::PanelDataset;
use crate::design::{covariate_rows, DesignSpec};
use crate::error::FitError;
use crate::linalg::{dot, solve_checked, SINGULAR_THRESHOLD};
use crate::method::Method;
use crate::visit::{solve_gamma, EventData, DEFAULT_MAX_ITER, DEFAULT_TOL};
use nalgebra::{DMatrix, DVector};

use super::{at_risk, check_identifiable, JointFitResult};

/// The measurement nearest to `t` in a time-sorted slice; ties go to the earlier one.
pub(crate) fn nearest(measurements: &[(f64, f64)], t: f64) -> Option<f64> {
    if measurements.is_empty() {
        return None;
    }
    let idx = measurements.partition_point(|&(s, _)| s < t);
    if idx == 0 {
        return Some(measurements[0].1);
    }
    if idx == measurements.len() {
        return Some(measurements[idx - 1].1);
    }
    let (before, after) = (measurements[idx - 1], measurements[idx]);
    if after.0 - t < t - before.0 {
        Some(after.1)
    } else {
        Some(before.1)
    }
}

/// JMVL-LY on measurement events: K(t)-weighted centered equation with Ȳ*(t).
pub fn fit_jmvl_ly(dataset: &PanelDataset, design: &DesignSpec) -> Result<JointFitResult, FitError> {
    design.check(Some(dataset))?;
    check_identifiable(design, Method::JmvlLy)?;
    if let Some(w) = design.w_names.iter().find(|w| !design.x_names.contains(w)) {
        return Err(FitError::InvalidDesign(format!(
            "JMVL-LY requires visiting covariates within x_names; '{w}' is not"
        )));
    }
    let data = dataset.measurements_only();
    if data.total_measurements() == 0 {
        return Err(FitError::NoMeasurements);
    }
    let events = EventData::from_dataset(&data, &design.w_names)?;
    let gamma = solve_gamma(&events, DEFAULT_TOL, DEFAULT_MAX_ITER)?.gamma;
    let x = covariate_rows(&data, &design.x_names, false)?;
    let p = x.width();
    let n = data.subjects.len();
    let risk: Vec<f64> = (0..n).map(|i| dot(events.w.row(i), &gamma).exp()).collect();
    let series: Vec<Vec<(f64, f64)>> = data.subjects.iter().map(|s| s.measurements().collect()).collect();
    let censoring: Vec<f64> = data.subjects.iter().map(|s| s.censoring_time()).collect();
    let mut sorted = censoring.clone();
    sorted.sort_by(f64::total_cmp);

    let mut a = DMatrix::<f64>::zeros(p, p);
    let mut c = DVector::<f64>::zeros(p);
    let mut xbar = vec![0.0; p];
    let mut dev = vec![0.0; p];
    let mut terms = 0;
    for (i, s) in series.iter().enumerate() {
        for &(t, y) in s {
            xbar.iter_mut().for_each(|v| *v = 0.0);
            let (mut s0, mut ys, mut ys0) = (0.0, 0.0, 0.0);
            for j in 0..n {
                if censoring[j] < t {
                    continue;
                }
                let r = risk[j];
                s0 += r;
                for (acc, xv) in xbar.iter_mut().zip(x.row(j)) {
                    *acc += r * xv;
                }
                if let Some(yj) = nearest(&series[j], t) {
                    ys += r * yj;
                    ys0 += r;
                }
            }
            let k = at_risk(&sorted, t) as f64;
            let ystar = ys / ys0;
            for r in 0..p {
                dev[r] = x.row(i)[r] - xbar[r] / s0;
            }
            for r in 0..p {
                for col in 0..p {
                    a[(r, col)] += k * dev[r] * dev[col];
                }
                c[r] += k * dev[r] * (y - ystar);
            }
            terms += 1;
        }
    }
    let (sol, cond) = solve_checked(&a, &c, SINGULAR_THRESHOLD)?;
    Ok(JointFitResult {
        method: Method::JmvlLy,
        beta_names: design.x_names.clone(),
        beta: sol.iter().copied().collect(),
        theta_names: Vec::new(),
        theta: None,
        condition_number: cond,
        residual_terms: terms,
        gamma,
        visit: None,
        obs: None,
        gamma_x: None,
    })
}
