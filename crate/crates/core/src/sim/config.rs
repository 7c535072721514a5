use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Setting {
    A,
    B,
    C,
}

/// How visits are generated for a subject.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    Regular,
    Shared,
    Latent,
    PreviousOutcome,
    Threshold,
    /// Gamma-frailty proportional rate, unit baseline intensity.
    Frailty,
}

impl Mechanism {
    /// The five patterns mixed in the mixed-pattern cases.
    pub const MIXTURE: [Mechanism; 5] = [
        Mechanism::Regular,
        Mechanism::Shared,
        Mechanism::Latent,
        Mechanism::PreviousOutcome,
        Mechanism::Threshold,
    ];
}

pub const CASE_IDS: [&str; 15] = [
    "1-1", "1-2", "1-3", "1-4", "1-5", "1-6", "2-1", "2-2", "2-3", "3-1", "3-2", "3-3", "3-4", "3-5", "3-6",
];

/// How the latent-variable case maps `Gamma(exp(γ_b b₁)⁻¹, σ²η)` onto shape and scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrailtyParametrization {
    /// Shape exp(−γ_b b₁), scale σ²η: the first argument read as the shape.
    ShapeScale,
    /// Mean exp(γ_b b₁), shape 1/σ²η.
    MeanScaled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularParams {
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SharedParams {
    pub gamma0: f64,
    pub gamma_a: f64,
    pub gamma_z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatentParams {
    pub gamma0: f64,
    pub gamma_a: f64,
    pub gamma_z: f64,
    pub gamma_b: f64,
    pub sigma_eta2: f64,
    pub parametrization: FrailtyParametrization,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreviousOutcomeParams {
    pub gamma0: f64,
    pub gamma_a: f64,
    pub gamma_z: f64,
    pub gamma_y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdParams {
    /// Fraction of the marginal outcome distribution below the threshold.
    pub quantile: f64,
    pub grid_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrailtyParams {
    pub gamma0: f64,
    pub gamma_a: f64,
    pub gamma_z: f64,
    pub sigma_eta2: f64,
}

/// Parameters of every visit mechanism; each case reads the blocks it uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VisitParams {
    pub regular: RegularParams,
    pub shared: SharedParams,
    pub latent: LatentParams,
    pub previous_outcome: PreviousOutcomeParams,
    pub threshold: ThresholdParams,
    pub frailty: FrailtyParams,
    /// Hard cap on visits per subject, guarding against runaway outcome-driven rates.
    pub max_visits_per_subject: usize,
}

impl Default for VisitParams {
    fn default() -> Self {
        Self {
            regular: RegularParams { c: 6.0 },
            shared: SharedParams {
                gamma0: -2.2,
                gamma_a: 0.5,
                gamma_z: 0.5,
            },
            latent: LatentParams {
                gamma0: -3.5,
                gamma_a: 1.0,
                gamma_z: 1.0,
                gamma_b: 0.2,
                sigma_eta2: 1.0,
                parametrization: FrailtyParametrization::ShapeScale,
            },
            previous_outcome: PreviousOutcomeParams {
                gamma0: -2.2,
                gamma_a: 0.0,
                gamma_z: 0.0,
                gamma_y: 1.0,
            },
            threshold: ThresholdParams {
                quantile: 0.8,
                grid_step: 0.1,
            },
            frailty: FrailtyParams {
                gamma0: 0.0,
                gamma_a: 0.5,
                gamma_z: 0.5,
                sigma_eta2: 1.0,
            },
            max_visits_per_subject: 5000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub setting: Setting,
    pub case_id: String,
    pub n_subjects: usize,
    /// (β₀, β_a, β_z, β_t).
    pub beta: [f64; 4],
    pub sigma_eps2: f64,
    pub sigma_b_diag: [f64; 2],
    /// E(b | η) = θ(η − 1); Settings B and C.
    pub theta: [f64; 2],
    pub gamma: VisitParams,
    /// (α₀, α_a, α_z); Settings B and C.
    pub alpha: [f64; 3],
    pub t0: f64,
    pub censoring_time: f64,
    pub seed: u64,
}

fn invalid(field: &str, message: impl Into<String>) -> SimError {
    SimError::InvalidConfig {
        field: field.to_string(),
        message: message.into(),
    }
}

impl SimConfig {
    /// Defaults for `case_id`, with `seed` 0.
    pub fn for_case(case_id: &str) -> Result<Self, SimError> {
        if !CASE_IDS.contains(&case_id) {
            return Err(invalid("case_id", format!("unknown case '{case_id}'")));
        }
        let setting = match &case_id[..1] {
            "1" => Setting::A,
            "2" => Setting::B,
            _ => Setting::C,
        };
        let alpha = match (setting, case_id) {
            (_, "2-1" | "2-2") => [0.0; 3],
            (Setting::B, _) => [-2.0, 2.0, 1.0],
            _ => [2.0, -2.0, -1.0],
        };
        let mut gamma = VisitParams::default();
        let mut beta = [-2.0, -0.5, 0.5, 0.1];
        if setting == Setting::B {
            // Unit baseline rate and time slope on a clock ten times coarser than the reported one.
            gamma.frailty.gamma0 = 0.1f64.ln();
            beta[3] = 0.01;
        }
        Ok(Self {
            setting,
            case_id: case_id.to_string(),
            n_subjects: 1000,
            beta,
            sigma_eps2: 1.0,
            sigma_b_diag: [1.0, 4.0],
            theta: [0.0, 1.0],
            gamma,
            alpha,
            t0: 0.0,
            censoring_time: 60.0,
            seed: 0,
        })
    }

    /// Parses a JSON object whose fields override the defaults of its `case_id`.
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let user: Value = serde_json::from_str(text)?;
        let Value::Object(obj) = &user else {
            return Err(invalid("(root)", "config must be a JSON object"));
        };
        let case = obj
            .get("case_id")
            .and_then(Value::as_str)
            .ok_or_else(|| invalid("case_id", "missing or not a string"))?;
        let mut merged = serde_json::to_value(Self::for_case(case)?)?;
        merge(&mut merged, &user);
        let cfg: SimConfig = serde_json::from_value(merged)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let expected = Self::for_case(&self.case_id)?.setting;
        if self.setting != expected {
            return Err(invalid(
                "setting",
                format!("case {} belongs to setting {:?}", self.case_id, expected),
            ));
        }
        if self.n_subjects == 0 {
            return Err(invalid("n_subjects", "must be positive"));
        }
        if !(self.censoring_time > self.t0) {
            return Err(invalid("censoring_time", "must exceed t0"));
        }
        let nonneg = [
            ("sigma_eps2", self.sigma_eps2),
            ("sigma_b_diag", self.sigma_b_diag[0]),
            ("sigma_b_diag", self.sigma_b_diag[1]),
            ("gamma.latent.sigma_eta2", self.gamma.latent.sigma_eta2),
            ("gamma.frailty.sigma_eta2", self.gamma.frailty.sigma_eta2),
        ];
        for (f, v) in nonneg {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(invalid(f, "must be a finite value >= 0"));
            }
        }
        if !(self.gamma.regular.c > 0.0) {
            return Err(invalid("gamma.regular.c", "must be positive"));
        }
        if !(self.gamma.threshold.grid_step > 0.0) {
            return Err(invalid("gamma.threshold.grid_step", "must be positive"));
        }
        let q = self.gamma.threshold.quantile;
        if !(q > 0.0 && q < 1.0) {
            return Err(invalid("gamma.threshold.quantile", "must lie in (0, 1)"));
        }
        if self.gamma.max_visits_per_subject == 0 {
            return Err(invalid("gamma.max_visits_per_subject", "must be positive"));
        }
        let finite = self
            .beta
            .iter()
            .chain(&self.theta)
            .chain(&self.alpha)
            .all(|v| v.is_finite());
        if !finite {
            return Err(invalid("beta/theta/alpha", "must be finite"));
        }
        Ok(())
    }

    /// Mechanism used for every subject, or `None` for the mixed-pattern cases.
    pub fn mechanism(&self) -> Option<Mechanism> {
        match &self.case_id[2..] {
            "1" if self.setting == Setting::B => Some(Mechanism::Regular),
            "2" | "3" if self.setting == Setting::B => Some(Mechanism::Frailty),
            "1" => Some(Mechanism::Regular),
            "2" => Some(Mechanism::Shared),
            "3" => Some(Mechanism::Latent),
            "4" => Some(Mechanism::PreviousOutcome),
            "5" => Some(Mechanism::Threshold),
            _ => None,
        }
    }

    pub fn uses_mechanism(&self, m: Mechanism) -> bool {
        match self.mechanism() {
            Some(x) => x == m,
            None => Mechanism::MIXTURE.contains(&m),
        }
    }

    /// Whether b carries the frailty-linked mean θ(η − 1).
    pub fn linked_random_effects(&self) -> bool {
        self.setting != Setting::A
    }

    pub fn records_all(&self) -> bool {
        self.setting == Setting::A
    }
}

/// Recursively overlays `patch` onto `base`.
fn merge(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, p) => *b = p.clone(),
    }
}
