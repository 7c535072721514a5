use nalgebra::{DMatrix, DVector};

use crate::data::PanelDataset;
use crate::design::{covariate_rows, DesignSpec};
use crate::error::FitError;
use crate::linalg::{dot, solve_checked, SINGULAR_THRESHOLD};
use crate::method::Method;
use crate::visit::{solve_gamma, EventData, DEFAULT_MAX_ITER, DEFAULT_TOL};

use super::{at_risk, check_identifiable, JointFitResult};

/// Inverse-intensity-rate-ratio weighted regression on measurement events.
///
/// The marginal model is β₀ + βᵀx (+ β_t t). Weights are K(t)/ρᵢ with
/// ρᵢ = exp(γ̂ᵀWᵢ)/h(Xᵢ); h ≡ 1 unless `stabilized`, then h = exp(γ̂ₓᵀxᵢ).
pub fn fit_iirr(dataset: &PanelDataset, design: &DesignSpec, stabilized: bool) -> Result<JointFitResult, FitError> {
    let method = if stabilized { Method::IirrStabilized } else { Method::Iirr };
    design.check(Some(dataset))?;
    check_identifiable(design, method)?;
    let data = dataset.measurements_only();
    if data.total_measurements() == 0 {
        return Err(FitError::NoMeasurements);
    }
    let events = EventData::from_dataset(&data, &design.w_names)?;
    let gamma = solve_gamma(&events, DEFAULT_TOL, DEFAULT_MAX_ITER)?.gamma;
    let x = covariate_rows(&data, &design.x_names, false)?;
    let gamma_x = if stabilized {
        let ex = EventData::with_rows(&data, x.clone());
        Some(solve_gamma(&ex, DEFAULT_TOL, DEFAULT_MAX_ITER)?.gamma)
    } else {
        None
    };
    let mut sorted: Vec<f64> = data.subjects.iter().map(|s| s.censoring_time()).collect();
    sorted.sort_by(f64::total_cmp);

    let time = design.include_time_fixed_effect;
    let p = 1 + x.width() + usize::from(time);
    let mut a = DMatrix::<f64>::zeros(p, p);
    let mut c = DVector::<f64>::zeros(p);
    let mut row = vec![0.0; p];
    let mut terms = 0;
    for (i, s) in data.subjects.iter().enumerate() {
        let mut log_rho = dot(events.w.row(i), &gamma);
        if let Some(gx) = &gamma_x {
            log_rho -= dot(x.row(i), gx);
        }
        let inv_rho = (-log_rho).exp();
        for (t, y) in s.measurements() {
            row[0] = 1.0;
            row[1..=x.width()].copy_from_slice(x.row(i));
            if time {
                row[p - 1] = t;
            }
            let w = at_risk(&sorted, t) as f64 * inv_rho;
            for r in 0..p {
                for col in 0..p {
                    a[(r, col)] += w * row[r] * row[col];
                }
                c[r] += w * row[r] * y;
            }
            terms += 1;
        }
    }
    let (sol, cond) = solve_checked(&a, &c, SINGULAR_THRESHOLD)?;
    let mut names = vec!["(intercept)".to_string()];
    names.extend(design.x_names.iter().cloned());
    if time {
        names.push("time".to_string());
    }
    Ok(JointFitResult {
        method,
        beta_names: names,
        beta: sol.iter().copied().collect(),
        theta_names: Vec::new(),
        theta: None,
        condition_number: cond,
        residual_terms: terms,
        gamma,
        visit: None,
        obs: None,
        gamma_x,
    })
}
