//! Seeded generators for the fifteen simulation cases.

pub mod config;
pub mod threshold;

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{PanelDataset, Subject, SubjectBaseline, SubjectId, VisitEvent};
use crate::error::SimError;
use crate::linalg::logistic;
use crate::rng::{domain, substream};

pub use config::{FrailtyParametrization, Mechanism, Setting, SimConfig, CASE_IDS};
pub use threshold::outcome_threshold;

/// Per-subject latent draws, kept for diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentSubject {
    pub subject_id: String,
    pub a: f64,
    pub z: f64,
    /// Frailty linking b to the visit process; 1 in Setting A.
    pub eta: f64,
    /// Frailty of the latent-variable visit mechanism, when used.
    pub visit_eta: Option<f64>,
    pub b0: f64,
    pub b1: f64,
    pub mechanism: Mechanism,
    pub capped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub config: SimConfig,
    pub threshold: Option<f64>,
    pub subjects: Vec<LatentSubject>,
}

/// Exponential-gap renewal times on (t0, C]. `rate(j, previous)` gives the rate of gap j.
pub fn gen_visits_renewal(
    rng: &mut ChaCha8Rng,
    t0: f64,
    censoring: f64,
    cap: usize,
    mut rate: impl FnMut(usize, Option<f64>) -> f64,
    mut outcome: impl FnMut(&mut ChaCha8Rng, f64) -> f64,
) -> Result<(Vec<(f64, f64)>, bool), SimError> {
    let mut out: Vec<(f64, f64)> = Vec::new();
    let mut t = t0;
    loop {
        let r = rate(out.len(), out.last().map(|v| v.1));
        if r.is_nan() || r < 0.0 {
            return Err(SimError::InvalidConfig {
                field: "gamma".into(),
                message: format!("visit rate {r} is not positive"),
            });
        }
        if r == 0.0 {
            return Ok((out, false));
        }
        let gap: f64 = Exp1.sample(rng);
        t += gap / r;
        if !(t <= censoring) {
            return Ok((out, false));
        }
        if out.len() == cap {
            return Ok((out, true));
        }
        let y = outcome(rng, t);
        out.push((t, y));
    }
}

/// Grid times where the latent outcome path exceeds `threshold`, with the exceeding values.
pub fn gen_visits_threshold(
    rng: &mut ChaCha8Rng,
    grid: &[f64],
    threshold: f64,
    mut outcome: impl FnMut(&mut ChaCha8Rng, f64) -> f64,
) -> Vec<(f64, f64)> {
    grid.iter()
        .filter_map(|&t| {
            let y = outcome(rng, t);
            (y > threshold).then_some((t, y))
        })
        .collect()
}

/// Mean-one gamma draw with variance `var`; 1 when `var` is 0.
fn unit_gamma(rng: &mut ChaCha8Rng, var: f64) -> f64 {
    if var == 0.0 {
        1.0
    } else {
        Gamma::new(1.0 / var, var).expect("positive variance").sample(rng)
    }
}

fn latent_visit_frailty(rng: &mut ChaCha8Rng, cfg: &SimConfig, b1: f64) -> f64 {
    let p = &cfg.gamma.latent;
    let s2 = p.sigma_eta2;
    if s2 == 0.0 {
        return match p.parametrization {
            FrailtyParametrization::MeanScaled => (p.gamma_b * b1).exp(),
            FrailtyParametrization::ShapeScale => 1.0,
        };
    }
    let (shape, scale) = match p.parametrization {
        FrailtyParametrization::MeanScaled => (1.0 / s2, s2 * (p.gamma_b * b1).exp()),
        FrailtyParametrization::ShapeScale => ((-p.gamma_b * b1).exp(), s2),
    };
    Gamma::new(shape, scale).expect("positive shape and scale").sample(rng)
}

/// A prepared generator: the outcome threshold is computed once per configuration.
#[derive(Debug, Clone)]
pub struct Simulator {
    config: SimConfig,
    threshold: Option<f64>,
    grid: Vec<f64>,
}

impl Simulator {
    pub fn new(config: &SimConfig) -> Result<Self, SimError> {
        config.validate()?;
        let uses = config.uses_mechanism(Mechanism::Threshold);
        Ok(Self {
            threshold: uses.then(|| outcome_threshold(config)),
            grid: if uses {
                threshold::grid(config.t0, config.censoring_time, config.gamma.threshold.grid_step)
            } else {
                Vec::new()
            },
            config: config.clone(),
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn threshold(&self) -> Option<f64> {
        self.threshold
    }

    /// Dataset and latent truth under `seed`, overriding the configured seed.
    pub fn generate_seeded(&self, seed: u64) -> Result<(PanelDataset, Truth), SimError> {
        let results: Vec<Result<(Subject, LatentSubject), SimError>> = (0..self.config.n_subjects)
            .into_par_iter()
            .map(|i| self.subject(seed, i))
            .collect();
        let mut subjects = Vec::with_capacity(results.len());
        let mut latent = Vec::with_capacity(results.len());
        for r in results {
            let (s, l) = r?;
            subjects.push(s);
            latent.push(l);
        }
        let mut config = self.config.clone();
        config.seed = seed;
        Ok((
            PanelDataset::new(self.config.t0, subjects),
            Truth {
                config,
                threshold: self.threshold,
                subjects: latent,
            },
        ))
    }

    fn subject(&self, seed: u64, i: usize) -> Result<(Subject, LatentSubject), SimError> {
        let cfg = &self.config;
        let [beta0, beta_a, beta_z, beta_t] = cfg.beta;
        let mut base = substream(seed, &[domain::SUBJECT, i as u64, 0]);
        let a = if base.random_bool(0.5) { 1.0 } else { 0.0 };
        let z: f64 = base.sample(StandardNormal);
        let eta = if cfg.linked_random_effects() {
            unit_gamma(&mut base, cfg.gamma.frailty.sigma_eta2)
        } else {
            1.0
        };
        let n0: f64 = base.sample(StandardNormal);
        let n1: f64 = base.sample(StandardNormal);
        let (mut b0, mut b1) = (cfg.sigma_b_diag[0].sqrt() * n0, cfg.sigma_b_diag[1].sqrt() * n1);
        if cfg.linked_random_effects() {
            b0 += cfg.theta[0] * (eta - 1.0);
            b1 += cfg.theta[1] * (eta - 1.0);
        }
        let mechanism = match cfg.mechanism() {
            Some(m) => m,
            None => Mechanism::MIXTURE[base.random_range(0..Mechanism::MIXTURE.len())],
        };
        let visit_eta = (mechanism == Mechanism::Latent).then(|| latent_visit_frailty(&mut base, cfg, b1));

        let mean_part = beta0 + b0 + (beta_a + b1) * a + beta_z * z;
        let sd_eps = cfg.sigma_eps2.sqrt();
        let outcome = |rng: &mut ChaCha8Rng, t: f64| {
            let e: f64 = rng.sample(StandardNormal);
            mean_part + beta_t * t + sd_eps * e
        };
        let mut vis = substream(seed, &[domain::SUBJECT, i as u64, 1]);
        let (t0, c, cap) = (cfg.t0, cfg.censoring_time, cfg.gamma.max_visits_per_subject);
        let g = &cfg.gamma;
        let (series, capped) = match mechanism {
            Mechanism::Regular => {
                let mut v = Vec::new();
                let mut k = 1;
                loop {
                    let t = t0 + k as f64 * g.regular.c;
                    if t > c + 1e-9 * g.regular.c || v.len() == cap {
                        break;
                    }
                    v.push((t, outcome(&mut vis, t)));
                    k += 1;
                }
                (v, false)
            }
            Mechanism::Shared => {
                let r = (g.shared.gamma0 + g.shared.gamma_a * a + g.shared.gamma_z * z).exp();
                gen_visits_renewal(&mut vis, t0, c, cap, |_, _| r, outcome)?
            }
            Mechanism::Latent => {
                let p = &g.latent;
                let r = visit_eta.unwrap_or(1.0) * (p.gamma0 + p.gamma_a * a + p.gamma_z * z).exp();
                gen_visits_renewal(&mut vis, t0, c, cap, |_, _| r, outcome)?
            }
            Mechanism::PreviousOutcome => {
                let p = &g.previous_outcome;
                let lin = p.gamma0 + p.gamma_a * a + p.gamma_z * z;
                let start = mean_part + beta_t * t0;
                gen_visits_renewal(
                    &mut vis,
                    t0,
                    c,
                    cap,
                    |_, prev| (lin + p.gamma_y * prev.unwrap_or(start)).exp(),
                    outcome,
                )?
            }
            Mechanism::Threshold => {
                let q = self.threshold.expect("threshold prepared for threshold mechanism");
                let v = gen_visits_threshold(&mut vis, &self.grid, q, outcome);
                (v, false)
            }
            Mechanism::Frailty => {
                let p = &g.frailty;
                let r = eta * (p.gamma0 + p.gamma_a * a + p.gamma_z * z).exp();
                gen_visits_renewal(&mut vis, t0, c, cap, |_, _| r, outcome)?
            }
        };

        let mut obs = substream(seed, &[domain::SUBJECT, i as u64, 2]);
        let p_rec = logistic(cfg.alpha[0] + cfg.alpha[1] * a + cfg.alpha[2] * z);
        let visits = series
            .into_iter()
            .map(|(t, y)| {
                if cfg.records_all() || obs.random_bool(p_rec.clamp(0.0, 1.0)) {
                    VisitEvent::recorded(t, y)
                } else {
                    VisitEvent::unrecorded(t)
                }
            })
            .collect();
        let id = format!("s{:05}", i + 1);
        let mut covariates = BTreeMap::new();
        covariates.insert("A".to_string(), a);
        covariates.insert("Z".to_string(), z);
        let subject = Subject {
            baseline: SubjectBaseline {
                subject_id: SubjectId(id.clone()),
                covariates,
                censoring_time: c,
            },
            visits,
        };
        Ok((
            subject,
            LatentSubject {
                subject_id: id,
                a,
                z,
                eta,
                visit_eta,
                b0,
                b1,
                mechanism,
                capped,
            },
        ))
    }
}

pub fn generate(config: &SimConfig) -> Result<PanelDataset, SimError> {
    Ok(generate_with_truth(config)?.0)
}

pub fn generate_with_truth(config: &SimConfig) -> Result<(PanelDataset, Truth), SimError> {
    Simulator::new(config)?.generate_seeded(config.seed)
}
