use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Every estimator this crate implements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Method {
    EhrJoint,
    JmvlLiang,
    AdaptedLiang,
    JmvlLy,
    Iirr,
    IirrStabilized,
    StandardLme,
    OaLme,
    VaLme,
    SummaryMin,
    SummaryMean,
    SummaryMedian,
    SummaryMax,
}

impl Method {
    pub const ALL: [Method; 13] = [
        Method::StandardLme,
        Method::OaLme,
        Method::VaLme,
        Method::SummaryMin,
        Method::SummaryMean,
        Method::SummaryMedian,
        Method::SummaryMax,
        Method::Iirr,
        Method::IirrStabilized,
        Method::JmvlLy,
        Method::JmvlLiang,
        Method::AdaptedLiang,
        Method::EhrJoint,
    ];

    /// Command-line name.
    pub fn name(self) -> &'static str {
        match self {
            Method::EhrJoint => "ehrjoint",
            Method::JmvlLiang => "liang",
            Method::AdaptedLiang => "adapted-liang",
            Method::JmvlLy => "jmvl-ly",
            Method::Iirr => "iirr",
            Method::IirrStabilized => "iirr-stab",
            Method::StandardLme => "lme",
            Method::OaLme => "oa-lme",
            Method::VaLme => "va-lme",
            Method::SummaryMin => "summary:min",
            Method::SummaryMean => "summary:mean",
            Method::SummaryMedian => "summary:median",
            Method::SummaryMax => "summary:max",
        }
    }

    /// Table label.
    pub fn label(self) -> &'static str {
        match self {
            Method::EhrJoint => "EHRJoint",
            Method::JmvlLiang => "JMVL-Liang",
            Method::AdaptedLiang => "Adapted-Liang",
            Method::JmvlLy => "JMVL-LY",
            Method::Iirr => "IIRR-weighting",
            Method::IirrStabilized => "IIRR-weighting (stabilized)",
            Method::StandardLme => "Standard LME",
            Method::OaLme => "OA-LME",
            Method::VaLme => "VA-LME",
            Method::SummaryMin => "Min",
            Method::SummaryMean => "Mean",
            Method::SummaryMedian => "Median",
            Method::SummaryMax => "Max",
        }
    }

    /// Whether a time fixed effect is identifiable for this estimator.
    pub fn supports_time_fixed_effect(self) -> bool {
        !matches!(
            self,
            Method::EhrJoint | Method::JmvlLiang | Method::AdaptedLiang | Method::JmvlLy
        )
    }

    /// Whether the estimator's mean model naturally carries time when fitted to simulated data.
    pub fn models_time(self) -> bool {
        matches!(
            self,
            Method::Iirr | Method::IirrStabilized | Method::StandardLme | Method::OaLme | Method::VaLme
        )
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown method '{0}'")]
pub struct UnknownMethod(pub String);

impl FromStr for Method {
    type Err = UnknownMethod;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.name() == s)
            .ok_or_else(|| UnknownMethod(s.to_string()))
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.name().to_string()
    }
}

impl TryFrom<String> for Method {
    type Error = UnknownMethod;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}
