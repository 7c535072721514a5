//! Subject-level bootstrap and the Monte Carlo replication harness.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{PanelDataset, Subject, SubjectId};
use crate::design::DesignSpec;
use crate::error::{FitError, InferenceError};
use crate::fit::{Configured, Estimate, Estimator};
use crate::linalg::quantile_sorted;
use crate::method::Method;
use crate::rng::{child_seed, domain, substream};
use crate::sim::{SimConfig, Simulator, Truth};

pub const MIN_BOOT: usize = 50;
pub const DEFAULT_N_BOOT: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub names: Vec<String>,
    pub point: Vec<f64>,
    pub se: Vec<f64>,
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
    pub n_boot: usize,
    pub n_failed: usize,
}

/// Resample `b` of `dataset`: subjects drawn with replacement, ids reindexed.
pub fn resample(dataset: &PanelDataset, seed: u64, b: usize) -> PanelDataset {
    let n = dataset.subjects.len();
    let mut rng = substream(seed, &[domain::BOOTSTRAP, b as u64]);
    let subjects: Vec<Subject> = (0..n)
        .map(|k| {
            let mut s = dataset.subjects[rng.random_range(0..n)].clone();
            s.baseline.subject_id = SubjectId(format!("b{:06}", k + 1));
            s
        })
        .collect();
    PanelDataset::new(dataset.study_origin, subjects)
}

fn sample_sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Percentile bootstrap over subjects, refitting the full pipeline on every resample.
pub fn bootstrap(
    dataset: &PanelDataset,
    estimator: &dyn Estimator,
    design: &DesignSpec,
    n_boot: usize,
    seed: u64,
) -> Result<BootstrapResult, InferenceError> {
    if n_boot < MIN_BOOT {
        return Err(InferenceError::TooFewBoot(n_boot));
    }
    let point = estimator.fit(dataset, design)?;
    let fits: Vec<Option<Vec<f64>>> = (0..n_boot)
        .into_par_iter()
        .map(|b| {
            let data = resample(dataset, seed, b);
            estimator
                .fit(&data, design)
                .ok()
                .filter(|e| e.names == point.names)
                .map(|e| e.values)
        })
        .collect();
    let ok: Vec<&Vec<f64>> = fits.iter().flatten().collect();
    if ok.is_empty() {
        return Err(InferenceError::AllResamplesFailed(n_boot));
    }
    let p = point.values.len();
    let (mut se, mut lo, mut hi) = (Vec::with_capacity(p), Vec::with_capacity(p), Vec::with_capacity(p));
    for k in 0..p {
        let mut col: Vec<f64> = ok.iter().map(|v| v[k]).collect();
        se.push(sample_sd(&col));
        col.sort_by(f64::total_cmp);
        lo.push(quantile_sorted(&col, 0.025));
        hi.push(quantile_sorted(&col, 0.975));
    }
    Ok(BootstrapResult {
        names: point.names,
        point: point.values,
        se,
        ci_lower: lo,
        ci_upper: hi,
        n_boot,
        n_failed: n_boot - ok.len(),
    })
}

/// Seed of replication `rep` under the harness seed.
pub fn replication_seed(seed: u64, rep: usize) -> u64 {
    child_seed(seed, &[domain::REPLICATION, rep as u64])
}

/// Runs `f` on each replicated dataset, collecting results in replication order.
pub fn replicate<T: Send>(
    config: &SimConfig,
    n_reps: usize,
    seed: u64,
    f: impl Fn(usize, &PanelDataset, &Truth) -> T + Sync,
) -> Result<Vec<T>, InferenceError> {
    let sim = Simulator::new(config)?;
    (0..n_reps)
        .into_par_iter()
        .map(|rep| {
            let (data, truth) = sim.generate_seeded(replication_seed(seed, rep))?;
            Ok(f(rep, &data, &truth))
        })
        .collect()
}

/// True value of a longitudinal coefficient, by name.
pub fn true_coefficient(config: &SimConfig, name: &str) -> Option<f64> {
    match name {
        "(intercept)" => Some(config.beta[0]),
        "A" => Some(config.beta[1]),
        "Z" => Some(config.beta[2]),
        "time" => Some(config.beta[3]),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub coefficient: String,
    pub truth: f64,
    pub mean: f64,
    pub bias: f64,
    pub sd: f64,
    pub rmse: f64,
    pub bias_x100: f64,
    pub sd_x100: f64,
    pub rmse_x100: f64,
    pub successes: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationReport {
    pub case_id: String,
    pub n_reps: usize,
    pub seed: u64,
    pub config: SimConfig,
    pub designs: BTreeMap<String, DesignSpec>,
    pub rows: Vec<ReportRow>,
    /// Per method, error kind → count.
    pub failure_kinds: BTreeMap<String, BTreeMap<String, usize>>,
}

impl ReplicationReport {
    pub fn row(&self, method: &str, coefficient: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.method == method && r.coefficient == coefficient)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,coefficient,bias_x100,sd_x100,rmse_x100,failures\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.method, r.coefficient, r.bias_x100, r.sd_x100, r.rmse_x100, r.failures
            ));
        }
        out
    }
}

/// Bias, SD and RMSE of `estimates` against `truth`.
pub fn summarize(estimates: &[f64], truth: f64) -> (f64, f64, f64, f64) {
    let r = estimates.len();
    if r == 0 {
        return (f64::NAN, f64::NAN, f64::NAN, f64::NAN);
    }
    let mean = estimates.iter().sum::<f64>() / r as f64;
    let sd = sample_sd(estimates);
    let rmse = (estimates.iter().map(|e| (e - truth).powi(2)).sum::<f64>() / r as f64).sqrt();
    (mean, mean - truth, sd, rmse)
}

/// Monte Carlo replications of each method with its benchmark design.
pub fn run_replications(
    config: &SimConfig,
    methods: &[Method],
    n_reps: usize,
    seed: u64,
) -> Result<ReplicationReport, InferenceError> {
    let configured: Vec<Configured> = methods.iter().map(|&m| Configured::benchmark(m)).collect();
    let refs: Vec<&dyn Estimator> = configured.iter().map(|c| c as &dyn Estimator).collect();
    let mut report = run_replications_with(config, &refs, &DesignSpec::simulation_default(), n_reps, seed)?;
    report.designs = configured.iter().map(|c| (c.method.name().to_string(), c.design.clone())).collect();
    Ok(report)
}

/// Monte Carlo replications of arbitrary estimators sharing `design`.
pub fn run_replications_with(
    config: &SimConfig,
    estimators: &[&dyn Estimator],
    design: &DesignSpec,
    n_reps: usize,
    seed: u64,
) -> Result<ReplicationReport, InferenceError> {
    if n_reps < 2 {
        return Err(InferenceError::TooFewReps(n_reps));
    }
    let per_rep: Vec<Vec<Result<Estimate, FitError>>> = replicate(config, n_reps, seed, |_, data, _| {
        estimators.iter().map(|e| e.fit(data, design)).collect()
    })?;
    let mut rows = Vec::new();
    let mut failure_kinds = BTreeMap::new();
    for (k, est) in estimators.iter().enumerate() {
        let name = est.name();
        let mut kinds: BTreeMap<String, usize> = BTreeMap::new();
        let mut coefs: Vec<String> = Vec::new();
        for rep in &per_rep {
            match &rep[k] {
                Ok(e) => {
                    for n in &e.names {
                        if !coefs.contains(n) {
                            coefs.push(n.clone());
                        }
                    }
                }
                Err(err) => *kinds.entry(err.kind().to_string()).or_default() += 1,
            }
        }
        let failures: usize = kinds.values().sum();
        for c in coefs {
            let Some(truth) = true_coefficient(config, &c) else {
                continue;
            };
            let values: Vec<f64> = per_rep
                .iter()
                .filter_map(|rep| rep[k].as_ref().ok().and_then(|e| e.coefficient(&c)))
                .collect();
            let (mean, bias, sd, rmse) = summarize(&values, truth);
            rows.push(ReportRow {
                method: name.clone(),
                coefficient: c,
                truth,
                mean,
                bias,
                sd,
                rmse,
                bias_x100: 100.0 * bias,
                sd_x100: 100.0 * sd,
                rmse_x100: 100.0 * rmse,
                successes: values.len(),
                failures: n_reps - values.len(),
            });
        }
        if failures == n_reps && !rows.iter().any(|r| r.method == name) {
            rows.push(ReportRow {
                method: name.clone(),
                coefficient: "A".into(),
                truth: config.beta[1],
                mean: f64::NAN,
                bias: f64::NAN,
                sd: f64::NAN,
                rmse: f64::NAN,
                bias_x100: f64::NAN,
                sd_x100: f64::NAN,
                rmse_x100: f64::NAN,
                successes: 0,
                failures,
            });
        }
        failure_kinds.insert(name, kinds);
    }
    Ok(ReplicationReport {
        case_id: config.case_id.clone(),
        n_reps,
        seed,
        config: config.clone(),
        designs: BTreeMap::new(),
        rows,
        failure_kinds,
    })
}
