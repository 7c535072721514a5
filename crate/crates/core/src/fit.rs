//! Uniform entry point over every estimator.

use serde::Serialize;

use crate::data::PanelDataset;
use crate::design::DesignSpec;
use crate::error::FitError;
use crate::joint::{fit_adapted_liang, fit_ehrjoint, fit_iirr, fit_jmvl_liang, fit_jmvl_ly, JointFitResult};
use crate::lme::{fit_lme, fit_summary_ols, LmeFit, LmeVariant, SummaryStatistic};
use crate::method::Method;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FitDetail {
    Joint(JointFitResult),
    Lme(LmeFit),
    Summary,
}

/// Longitudinal-model coefficients from one fit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimate {
    pub method: String,
    pub names: Vec<String>,
    pub values: Vec<f64>,
    pub converged: bool,
    pub detail: FitDetail,
}

impl Estimate {
    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i])
    }
}

/// Anything the bootstrap and replication harness can refit.
pub trait Estimator: Sync {
    fn name(&self) -> String;
    fn fit(&self, dataset: &PanelDataset, design: &DesignSpec) -> Result<Estimate, FitError>;
}

impl Estimator for Method {
    fn name(&self) -> String {
        Method::name(*self).to_string()
    }

    fn fit(&self, dataset: &PanelDataset, design: &DesignSpec) -> Result<Estimate, FitError> {
        fit_method(*self, dataset, design)
    }
}

fn joint(method: Method, r: JointFitResult) -> Estimate {
    Estimate {
        method: method.name().to_string(),
        names: r.beta_names.clone(),
        values: r.beta.clone(),
        converged: true,
        detail: FitDetail::Joint(r),
    }
}

pub fn fit_method(method: Method, dataset: &PanelDataset, design: &DesignSpec) -> Result<Estimate, FitError> {
    let summary = |stat| {
        design.check(Some(dataset))?;
        let (names, values) = fit_summary_ols(dataset, stat, &design.x_names)?;
        Ok(Estimate {
            method: method.name().to_string(),
            names,
            values,
            converged: true,
            detail: FitDetail::Summary,
        })
    };
    let lme = |variant| {
        let r = fit_lme(dataset, design, variant)?;
        Ok(Estimate {
            method: method.name().to_string(),
            names: r.beta_names.clone(),
            values: r.beta.clone(),
            converged: r.converged,
            detail: FitDetail::Lme(r),
        })
    };
    match method {
        Method::EhrJoint => fit_ehrjoint(dataset, design).map(|r| joint(method, r)),
        Method::JmvlLiang => fit_jmvl_liang(dataset, design).map(|r| joint(method, r)),
        Method::AdaptedLiang => fit_adapted_liang(dataset, design).map(|r| joint(method, r)),
        Method::JmvlLy => fit_jmvl_ly(dataset, design).map(|r| joint(method, r)),
        Method::Iirr => fit_iirr(dataset, design, false).map(|r| joint(method, r)),
        Method::IirrStabilized => fit_iirr(dataset, design, true).map(|r| joint(method, r)),
        Method::StandardLme => lme(LmeVariant::Standard),
        Method::OaLme => lme(LmeVariant::Oa),
        Method::VaLme => lme(LmeVariant::Va),
        Method::SummaryMin => summary(SummaryStatistic::Min),
        Method::SummaryMean => summary(SummaryStatistic::Mean),
        Method::SummaryMedian => summary(SummaryStatistic::Median),
        Method::SummaryMax => summary(SummaryStatistic::Max),
    }
}

/// `base` with the time fixed effect switched on exactly for estimators that model time.
pub fn design_for(method: Method, base: &DesignSpec) -> DesignSpec {
    base.clone().with_time(method.models_time())
}

/// A method paired with its own design, as used in simulation benchmarks.
#[derive(Debug, Clone)]
pub struct Configured {
    pub method: Method,
    pub design: DesignSpec,
}

impl Configured {
    pub fn benchmark(method: Method) -> Self {
        Self {
            method,
            design: design_for(method, &DesignSpec::simulation_default()),
        }
    }
}

impl Estimator for Configured {
    fn name(&self) -> String {
        self.method.name().to_string()
    }

    fn fit(&self, dataset: &PanelDataset, _design: &DesignSpec) -> Result<Estimate, FitError> {
        fit_method(self.method, dataset, &self.design)
    }
}
