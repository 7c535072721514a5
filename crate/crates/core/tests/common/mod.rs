//! Fixtures and brute-force oracles shared by the integration and acceptance tests.
//!
//! Every oracle here loops over subjects and events directly, with no sorting,
//! sweeping or sufficient statistics, so it shares no code path with the fitters.

#![allow(dead_code)]

use ehrjoint::data::{PanelDataset, Subject, SubjectBaseline, VisitEvent};
use ehrjoint::lme::{subject_summary, SummaryStatistic};
use ehrjoint::DesignSpec;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn subject(id: &str, c: f64, covs: &[(&str, f64)], visits: Vec<VisitEvent>) -> Subject {
    Subject {
        baseline: SubjectBaseline {
            subject_id: id.into(),
            covariates: covs.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            censoring_time: c,
        },
        visits,
    }
}

pub fn recorded(times: &[f64]) -> Vec<VisitEvent> {
    times.iter().map(|&t| VisitEvent::recorded(t, 0.0)).collect()
}

pub fn names(n: &[&str]) -> Vec<String> {
    n.iter().map(|s| s.to_string()).collect()
}

/// Four subjects with common C = 10 where the W = 1 pair visits exactly twice as often.
pub fn ln2_fixture() -> PanelDataset {
    PanelDataset::new(
        0.0,
        vec![
            subject("a", 10.0, &[("W", 0.0)], recorded(&[1.0, 4.0, 7.0])),
            subject("b", 10.0, &[("W", 0.0)], recorded(&[5.0])),
            subject("c", 10.0, &[("W", 1.0)], recorded(&[1.5, 2.0, 3.0, 6.0, 8.0])),
            subject("d", 10.0, &[("W", 1.0)], recorded(&[2.5, 9.0, 9.5])),
        ],
    )
}

/// Ten visits split 4/6 between two subjects, with 4 recorded in total.
pub fn logit_fixture() -> PanelDataset {
    let visits = |n: usize, rec: usize| {
        (0..n)
            .map(|k| {
                let t = (k + 1) as f64;
                if k < rec {
                    VisitEvent::recorded(t, 0.0)
                } else {
                    VisitEvent::unrecorded(t)
                }
            })
            .collect()
    };
    PanelDataset::new(
        0.0,
        vec![
            subject("a", 20.0, &[("V", 0.0)], visits(6, 3)),
            subject("b", 20.0, &[("V", 1.0)], visits(4, 1)),
        ],
    )
}

/// Staggered two-unit schedules with every third visit unrecorded and
/// Y = 0.5·A − Z + 7 + slope·t exactly.
pub fn noise_free(time_slope: f64) -> PanelDataset {
    let covs = [(1.0, 0.3), (0.0, -1.1), (1.0, 1.4), (0.0, 0.2), (1.0, -0.7), (0.0, 0.9)];
    let subjects = covs
        .iter()
        .enumerate()
        .map(|(i, &(a, z))| {
            let visits = (1..=8)
                .map(|k| {
                    let t = 2.0 * k as f64 + 0.25 * i as f64;
                    if k % 3 == 0 {
                        VisitEvent::unrecorded(t)
                    } else {
                        VisitEvent::recorded(t, 0.5 * a - z + 7.0 + time_slope * t)
                    }
                })
                .collect();
            subject(&format!("s{i}"), 20.0, &[("A", a), ("Z", z)], visits)
        })
        .collect();
    PanelDataset::new(0.0, subjects)
}

/// Design used on micro-datasets: visiting on Z, intercept-only recording, Zᵢ = (1, A).
pub fn micro_design() -> DesignSpec {
    DesignSpec::new(&["Z"], &[], &["A", "Z"], &["A"])
}

/// Five subjects with 1 to 6 visits each, irregular times and staggered censoring.
///
/// Every subject has a measurement at its first visit, so the five-subject risk
/// sets span all four (X, B̂) directions even after unrecorded visits are dropped.
pub fn micro_dataset(seed: u64) -> PanelDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 5;
    let subjects = (0..n)
        .map(|i| {
            let a = (i % 2) as f64;
            let z: f64 = rng.sample(StandardNormal);
            let c = rng.random_range(8.0..12.0);
            // Bimodal counts, so the frailty variance estimate is positive.
            let m = if i == 0 || rng.random_bool(0.5) {
                rng.random_range(5..=6)
            } else {
                rng.random_range(1..=2)
            };
            let mut times: Vec<f64> = (0..m).map(|_| rng.random_range(0.1..c)).collect();
            times.sort_by(f64::total_cmp);
            let visits = times
                .iter()
                .enumerate()
                .map(|(k, &t)| {
                    let e: f64 = rng.sample(StandardNormal);
                    let forced = match (i, k) {
                        (_, 0) => Some(true),
                        (0, 1) => Some(false),
                        _ => None,
                    };
                    if forced.unwrap_or_else(|| rng.random_bool(0.7)) {
                        VisitEvent::recorded(t, 1.0 + 0.5 * a - z + 0.1 * t + 0.5 * e)
                    } else {
                        VisitEvent::unrecorded(t)
                    }
                })
                .collect();
            subject(&format!("m{i}"), c, &[("A", a), ("Z", z)], visits)
        })
        .collect();
    PanelDataset::new(0.0, subjects)
}

/// Convergence contract of the nuisance Newton solvers: tolerance 1e-8 per event.
pub fn nuisance_tol(ds: &PanelDataset) -> f64 {
    1e-8 * ds.total_visits() as f64
}

pub fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn cov(s: &Subject, name: &str) -> f64 {
    s.baseline.covariates[name]
}

fn row(s: &Subject, names: &[String], intercept: bool) -> Vec<f64> {
    let mut r = Vec::new();
    if intercept {
        r.push(1.0);
    }
    r.extend(names.iter().map(|n| cov(s, n)));
    r
}

fn dotv(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn expit(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Σᵢ Σ_visits (Wᵢ − W̄(t)) with W̄ the exp(γᵀW)-weighted at-risk mean.
pub fn rate_score(ds: &PanelDataset, w: &[String], gamma: &[f64]) -> Vec<f64> {
    let p = w.len();
    let mut u = vec![0.0; p];
    for s in &ds.subjects {
        let wi = row(s, w, false);
        for v in &s.visits {
            let mut num = vec![0.0; p];
            let mut den = 0.0;
            for r in &ds.subjects {
                if r.baseline.censoring_time >= v.time {
                    let wr = row(r, w, false);
                    let e = dotv(&wr, gamma).exp();
                    den += e;
                    for k in 0..p {
                        num[k] += e * wr[k];
                    }
                }
            }
            for k in 0..p {
                u[k] += wi[k] - num[k] / den;
            }
        }
    }
    u
}

/// Λ̂₀(t) summed visit by visit.
pub fn breslow_at(ds: &PanelDataset, w: &[String], gamma: &[f64], t: f64) -> f64 {
    let mut total = 0.0;
    for s in &ds.subjects {
        for v in &s.visits {
            if v.time <= t {
                let den: f64 = ds
                    .subjects
                    .iter()
                    .filter(|r| r.baseline.censoring_time >= v.time)
                    .map(|r| dotv(&row(r, w, false), gamma).exp())
                    .sum();
                total += 1.0 / den;
            }
        }
    }
    total
}

pub fn expected_counts(ds: &PanelDataset, w: &[String], gamma: &[f64]) -> Vec<f64> {
    ds.subjects
        .iter()
        .map(|s| dotv(&row(s, w, false), gamma).exp() * breslow_at(ds, w, gamma, s.baseline.censoring_time))
        .collect()
}

pub fn sigma_eta2(ds: &PanelDataset, w: &[String], gamma: &[f64]) -> f64 {
    let mu = expected_counts(ds, w, gamma);
    let (mut num, mut den) = (0.0, 0.0);
    for (s, m) in ds.subjects.iter().zip(&mu) {
        let n = s.visits.len() as f64;
        num += n * n - n - m * m;
        den += m * m;
    }
    (num / den).max(0.0)
}

/// Σ over every visit of V (R − expit(αᵀV)).
pub fn logistic_score(ds: &PanelDataset, v: &[String], intercept: bool, alpha: &[f64]) -> Vec<f64> {
    let mut u = vec![0.0; alpha.len()];
    for s in &ds.subjects {
        let vi = row(s, v, intercept);
        let p = expit(dotv(&vi, alpha));
        for visit in &s.visits {
            let r = if visit.recorded { 1.0 } else { 0.0 };
            for k in 0..u.len() {
                u[k] += vi[k] * (r - p);
            }
        }
    }
    u
}

/// Nuisance quantities a Liang-family equation is evaluated at.
pub struct LiangInputs {
    pub gamma: Vec<f64>,
    pub omega: Vec<f64>,
}

/// Per-subject D = (X, B̂) and centering weight ωⱼ nⱼ / Λ̂₀(Cⱼ).
fn liang_rows(ds: &PanelDataset, design: &DesignSpec, inputs: &LiangInputs) -> (Vec<Vec<f64>>, Vec<f64>) {
    let w = &design.w_names;
    let s2 = sigma_eta2(ds, w, &inputs.gamma);
    let mu = expected_counts(ds, w, &inputs.gamma);
    let mut d = Vec::new();
    let mut weight = Vec::new();
    for (j, s) in ds.subjects.iter().enumerate() {
        let n = s.visits.len() as f64;
        let mut r = row(s, &design.x_names, false);
        if s2 > 0.0 {
            let m = (n - mu[j]) * s2 / (1.0 + mu[j] * s2);
            r.extend(row(s, &design.z_names, design.z_intercept).iter().map(|z| m * z));
        }
        d.push(r);
        let lambda = breslow_at(ds, w, &inputs.gamma, s.baseline.censoring_time);
        weight.push(if n == 0.0 { 0.0 } else { inputs.omega[j] * n / lambda });
    }
    (d, weight)
}

fn centered(d: &[Vec<f64>], weight: &[f64], ds: &PanelDataset, i: usize, t: f64) -> Vec<f64> {
    let k = d[i].len();
    let mut num = vec![0.0; k];
    let mut den = 0.0;
    for (j, r) in ds.subjects.iter().enumerate() {
        if r.baseline.censoring_time >= t {
            den += weight[j];
            for c in 0..k {
                num[c] += weight[j] * d[j][c];
            }
        }
    }
    (0..k).map(|c| d[i][c] - num[c] / den).collect()
}

/// Σ over recorded events of (D − D̄(t)) (Y − Dᵀ·solution).
pub fn liang_equation(ds: &PanelDataset, design: &DesignSpec, inputs: &LiangInputs, solution: &[f64]) -> Vec<f64> {
    let (d, weight) = liang_rows(ds, design, inputs);
    let mut u = vec![0.0; solution.len()];
    for (i, s) in ds.subjects.iter().enumerate() {
        for v in s.visits.iter().filter(|v| v.recorded) {
            let y = v.outcome.unwrap();
            let cen = centered(&d, &weight, ds, i, v.time);
            let r = y - dotv(&d[i], solution);
            for k in 0..u.len() {
                u[k] += cen[k] * r;
            }
        }
    }
    u
}

/// The Liang-family system solved by explicit inversion.
pub fn liang_inverse(ds: &PanelDataset, design: &DesignSpec, inputs: &LiangInputs) -> Vec<f64> {
    let (d, weight) = liang_rows(ds, design, inputs);
    let k = d[0].len();
    let mut a = DMatrix::<f64>::zeros(k, k);
    let mut c = DVector::<f64>::zeros(k);
    for (i, s) in ds.subjects.iter().enumerate() {
        for v in s.visits.iter().filter(|v| v.recorded) {
            let cen = centered(&d, &weight, ds, i, v.time);
            for r in 0..k {
                for q in 0..k {
                    a[(r, q)] += cen[r] * d[i][q];
                }
                c[r] += cen[r] * v.outcome.unwrap();
            }
        }
    }
    let inv = a.try_inverse().expect("invertible oracle system");
    (inv * c).iter().copied().collect()
}

fn at_risk(ds: &PanelDataset, t: f64) -> f64 {
    ds.subjects.iter().filter(|s| s.baseline.censoring_time >= t).count() as f64
}

/// Nearest measurement to t, scanning in time order and keeping the earlier one on ties.
fn nearest(s: &Subject, t: f64) -> Option<f64> {
    let mut best: Option<(f64, f64)> = None;
    for v in s.visits.iter().filter(|v| v.recorded) {
        let dist = (v.time - t).abs();
        if best.is_none_or(|(bd, _)| dist < bd) {
            best = Some((dist, v.outcome.unwrap()));
        }
    }
    best.map(|(_, y)| y)
}

/// Per-event (K, X − X̄, Y − Ȳ*) of the nearest-observation equation on measurement events.
fn ly_terms(ds: &PanelDataset, design: &DesignSpec, gamma: &[f64]) -> Vec<(f64, Vec<f64>, f64)> {
    let data = ds.measurements_only();
    let p = design.x_names.len();
    let mut out = Vec::new();
    for s in &data.subjects {
        let xi = row(s, &design.x_names, false);
        for v in &s.visits {
            let t = v.time;
            let mut xbar = vec![0.0; p];
            let (mut s0, mut ys, mut ys0) = (0.0, 0.0, 0.0);
            for r in &data.subjects {
                if r.baseline.censoring_time < t {
                    continue;
                }
                let e = dotv(&row(r, &design.w_names, false), gamma).exp();
                s0 += e;
                let xr = row(r, &design.x_names, false);
                for k in 0..p {
                    xbar[k] += e * xr[k];
                }
                if let Some(y) = nearest(r, t) {
                    ys += e * y;
                    ys0 += e;
                }
            }
            let dev = (0..p).map(|k| xi[k] - xbar[k] / s0).collect();
            out.push((at_risk(&data, t), dev, v.outcome.unwrap() - ys / ys0));
        }
    }
    out
}

pub fn ly_equation(ds: &PanelDataset, design: &DesignSpec, gamma: &[f64], beta: &[f64]) -> Vec<f64> {
    let mut u = vec![0.0; beta.len()];
    for (k, dev, r) in ly_terms(ds, design, gamma) {
        let res = r - dotv(&dev, beta);
        for c in 0..u.len() {
            u[c] += k * dev[c] * res;
        }
    }
    u
}

pub fn ly_inverse(ds: &PanelDataset, design: &DesignSpec, gamma: &[f64]) -> Vec<f64> {
    let p = design.x_names.len();
    let mut a = DMatrix::<f64>::zeros(p, p);
    let mut c = DVector::<f64>::zeros(p);
    for (k, dev, r) in ly_terms(ds, design, gamma) {
        for i in 0..p {
            for j in 0..p {
                a[(i, j)] += k * dev[i] * dev[j];
            }
            c[i] += k * dev[i] * r;
        }
    }
    (a.try_inverse().expect("invertible oracle system") * c).iter().copied().collect()
}

/// Weighted normal equations of the inverse-intensity regression on measurement events.
pub fn iirr_equation(
    ds: &PanelDataset,
    design: &DesignSpec,
    gamma: &[f64],
    gamma_x: Option<&[f64]>,
    beta: &[f64],
) -> Vec<f64> {
    let data = ds.measurements_only();
    let mut u = vec![0.0; beta.len()];
    for s in &data.subjects {
        let mut lr = dotv(&row(s, &design.w_names, false), gamma);
        if let Some(gx) = gamma_x {
            lr -= dotv(&row(s, &design.x_names, false), gx);
        }
        for v in &s.visits {
            let mut x = row(s, &design.x_names, true);
            if design.include_time_fixed_effect {
                x.push(v.time);
            }
            let w = at_risk(&data, v.time) / lr.exp();
            let r = v.outcome.unwrap() - dotv(&x, beta);
            for k in 0..u.len() {
                u[k] += w * x[k] * r;
            }
        }
    }
    u
}

/// Normal equations of OLS of the per-subject summary on (1, X).
pub fn summary_equation(ds: &PanelDataset, x_names: &[String], stat: SummaryStatistic, beta: &[f64]) -> Vec<f64> {
    let mut u = vec![0.0; beta.len()];
    for s in &ds.subjects {
        let ys: Vec<f64> = s.visits.iter().filter_map(|v| v.outcome).collect();
        if ys.is_empty() {
            continue;
        }
        let x = row(s, x_names, true);
        let r = subject_summary(&ys, stat) - dotv(&x, beta);
        for k in 0..u.len() {
            u[k] += x[k] * r;
        }
    }
    u
}
