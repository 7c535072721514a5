use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::PanelDataset;
use crate::design::covariate_rows;
use crate::error::FitError;
use crate::linalg::{solve_checked, SINGULAR_THRESHOLD};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SummaryStatistic {
    Min,
    Mean,
    Median,
    Max,
}

/// Summary of one subject's outcomes; the median of an even count is the midpoint.
pub fn subject_summary(values: &[f64], statistic: SummaryStatistic) -> f64 {
    assert!(!values.is_empty());
    match statistic {
        SummaryStatistic::Min => values.iter().copied().fold(f64::INFINITY, f64::min),
        SummaryStatistic::Max => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        SummaryStatistic::Mean => values.iter().sum::<f64>() / values.len() as f64,
        SummaryStatistic::Median => {
            let mut v = values.to_vec();
            v.sort_by(f64::total_cmp);
            let h = v.len() / 2;
            if v.len() % 2 == 1 {
                v[h]
            } else {
                0.5 * (v[h - 1] + v[h])
            }
        }
    }
}

/// OLS of per-subject summaries on (1, x); subjects without measurements are skipped.
pub fn fit_summary_ols(
    dataset: &PanelDataset,
    statistic: SummaryStatistic,
    x_names: &[String],
) -> Result<(Vec<String>, Vec<f64>), FitError> {
    let x = covariate_rows(dataset, x_names, true)?;
    let p = x.width();
    let mut xtx = DMatrix::<f64>::zeros(p, p);
    let mut xty = DVector::<f64>::zeros(p);
    let mut used = 0;
    for (i, s) in dataset.subjects.iter().enumerate() {
        let ys: Vec<f64> = s.measurements().map(|(_, y)| y).collect();
        if ys.is_empty() {
            continue;
        }
        let y = subject_summary(&ys, statistic);
        let row = x.row(i);
        for a in 0..p {
            xty[a] += row[a] * y;
            for b in 0..p {
                xtx[(a, b)] += row[a] * row[b];
            }
        }
        used += 1;
    }
    if used < p {
        return Err(FitError::TooFewSubjects {
            subjects: used,
            parameters: p,
        });
    }
    let (beta, _) = solve_checked(&xtx, &xty, SINGULAR_THRESHOLD)?;
    let mut names = vec!["(intercept)".to_string()];
    names.extend(x_names.iter().cloned());
    Ok((names, beta.iter().copied().collect()))
}
