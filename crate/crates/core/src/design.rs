use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::data::PanelDataset;
use crate::error::FitError;

/// Which baseline covariates feed each sub-model.
///
/// `v_names` gets an implicit intercept unless `obs_intercept` is false, and the
/// random-effect design is `(1, z_names)` unless `z_intercept` is false.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSpec {
    pub w_names: Vec<String>,
    #[serde(default)]
    pub v_names: Vec<String>,
    pub x_names: Vec<String>,
    #[serde(default)]
    pub z_names: Vec<String>,
    #[serde(default)]
    pub include_time_fixed_effect: bool,
    #[serde(default = "yes")]
    pub obs_intercept: bool,
    #[serde(default = "yes")]
    pub z_intercept: bool,
}

fn yes() -> bool {
    true
}

fn strings(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

impl DesignSpec {
    pub fn new(w: &[&str], v: &[&str], x: &[&str], z: &[&str]) -> Self {
        Self {
            w_names: strings(w),
            v_names: strings(v),
            x_names: strings(x),
            z_names: strings(z),
            include_time_fixed_effect: false,
            obs_intercept: true,
            z_intercept: true,
        }
    }

    /// The design used throughout the simulation study: W = V = X = (A, Z), random slope on A.
    pub fn simulation_default() -> Self {
        Self::new(&["A", "Z"], &["A", "Z"], &["A", "Z"], &["A"])
    }

    pub fn with_time(mut self, include: bool) -> Self {
        self.include_time_fixed_effect = include;
        self
    }

    /// Checks the structural invariants; `dataset`, when given, is used to resolve names.
    pub fn check(&self, dataset: Option<&PanelDataset>) -> Result<(), FitError> {
        for (label, names) in [
            ("w_names", &self.w_names),
            ("v_names", &self.v_names),
            ("x_names", &self.x_names),
            ("z_names", &self.z_names),
        ] {
            let mut seen = HashSet::new();
            for n in names {
                if !seen.insert(n) {
                    return Err(FitError::InvalidDesign(format!("duplicate name '{n}' in {label}")));
                }
            }
        }
        if let Some(z) = self.z_names.iter().find(|z| !self.x_names.contains(z)) {
            return Err(FitError::InvalidDesign(format!("z_names entry '{z}' is not in x_names")));
        }
        if let Some(d) = dataset {
            let available = d.covariate_names();
            for n in self.w_names.iter().chain(&self.v_names).chain(&self.x_names) {
                if !available.contains(n) {
                    return Err(FitError::InvalidDesign(format!("covariate '{n}' not found in baselines")));
                }
            }
        }
        Ok(())
    }
}

/// Row-major per-subject covariate rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Rows {
    data: Vec<f64>,
    width: usize,
    len: usize,
}

impl Rows {
    pub fn new(width: usize) -> Self {
        Self {
            data: Vec::new(),
            width,
            len: 0,
        }
    }

    pub fn push(&mut self, row: &[f64]) {
        debug_assert_eq!(row.len(), self.width);
        self.data.extend_from_slice(row);
        self.len += 1;
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.width..(i + 1) * self.width]
    }
}

/// Extracts `names` from every subject's baselines, optionally preceded by a constant 1.
pub fn covariate_rows(dataset: &PanelDataset, names: &[String], intercept: bool) -> Result<Rows, FitError> {
    let width = names.len() + usize::from(intercept);
    let mut rows = Rows::new(width);
    let mut buf = Vec::with_capacity(width);
    for s in &dataset.subjects {
        buf.clear();
        if intercept {
            buf.push(1.0);
        }
        for n in names {
            let v = s
                .covariate(n)
                .ok_or_else(|| FitError::InvalidDesign(format!("subject {} lacks covariate '{n}'", s.id())))?;
            buf.push(v);
        }
        rows.push(&buf);
    }
    Ok(rows)
}
