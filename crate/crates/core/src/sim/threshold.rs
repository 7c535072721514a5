use statrs::distribution::{ContinuousCDF, Gamma, Normal};

use super::config::{SimConfig, Setting};

const FRAILTY_NODES: usize = 512;

/// Grid times t₀ + k·step, k ≥ 1, up to C.
pub fn grid(t0: f64, censoring: f64, step: f64) -> Vec<f64> {
    let n = ((censoring - t0) / step * (1.0 + 1e-12)).floor() as usize;
    (1..=n).map(|k| t0 + k as f64 * step).filter(|&t| t <= censoring + 1e-9 * step).collect()
}

/// Equal-probability quantile nodes of the mean-one gamma frailty.
pub(crate) fn frailty_nodes(sigma_eta2: f64) -> Vec<f64> {
    if sigma_eta2 == 0.0 {
        return vec![1.0];
    }
    let g = Gamma::new(1.0 / sigma_eta2, 1.0 / sigma_eta2).expect("positive shape and rate");
    (0..FRAILTY_NODES)
        .map(|k| g.inverse_cdf((k as f64 + 0.5) / FRAILTY_NODES as f64))
        .collect()
}

/// Mixture components (weight, mean without the time term, sd) of Y(t) − β_t t.
fn components(cfg: &SimConfig) -> Vec<(f64, f64, f64)> {
    let [b0, ba, bz, _] = cfg.beta;
    let etas = if cfg.linked_random_effects() {
        frailty_nodes(cfg.gamma.frailty.sigma_eta2)
    } else {
        vec![1.0]
    };
    let mut out = Vec::with_capacity(2 * etas.len());
    for a in [0.0, 1.0] {
        let var = bz * bz + cfg.sigma_b_diag[0] + a * a * cfg.sigma_b_diag[1] + cfg.sigma_eps2;
        for &eta in &etas {
            let shift = if cfg.setting == Setting::A {
                0.0
            } else {
                (cfg.theta[0] + cfg.theta[1] * a) * (eta - 1.0)
            };
            out.push((0.5 / etas.len() as f64, b0 + ba * a + shift, var.sqrt()));
        }
    }
    out
}

/// Marginal P(Y(t) ≤ q), averaged uniformly over the threshold grid.
pub fn marginal_cdf(cfg: &SimConfig, q: f64) -> f64 {
    let times = grid(cfg.t0, cfg.censoring_time, cfg.gamma.threshold.grid_step);
    marginal_cdf_with(&components(cfg), &times, cfg.beta[3], q)
}

fn marginal_cdf_with(comps: &[(f64, f64, f64)], times: &[f64], beta_t: f64, q: f64) -> f64 {
    let std = Normal::standard();
    let mut total = 0.0;
    for &t in times {
        for &(w, m, sd) in comps {
            let centre = m + beta_t * t;
            let p = if sd > 0.0 {
                std.cdf((q - centre) / sd)
            } else if q >= centre {
                1.0
            } else {
                0.0
            };
            total += w * p;
        }
    }
    total / times.len() as f64
}

/// The `quantile` point of the grid-averaged marginal outcome distribution, by bisection.
pub fn outcome_threshold(cfg: &SimConfig) -> f64 {
    let times = grid(cfg.t0, cfg.censoring_time, cfg.gamma.threshold.grid_step);
    let comps = components(cfg);
    let target = cfg.gamma.threshold.quantile;
    let beta_t = cfg.beta[3];
    let spread = comps.iter().map(|c| c.2).fold(0.0, f64::max) * 12.0 + 1.0;
    let ends = times
        .iter()
        .flat_map(|&t| comps.iter().map(move |c| c.1 + beta_t * t))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), m| (lo.min(m), hi.max(m)));
    let (mut lo, mut hi) = (ends.0 - spread, ends.1 + spread);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if marginal_cdf_with(&comps, &times, beta_t, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * (1.0 + mid.abs()) {
            break;
        }
    }
    0.5 * (lo + hi)
}
