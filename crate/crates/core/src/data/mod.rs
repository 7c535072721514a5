//! Irregular longitudinal panel data: subjects with baseline covariates, an
//! administrative censoring time, and time-stamped visits that may or may not
//! carry a recorded biomarker value.
//!
//! A subject's at-risk indicator is `t <= censoring_time`; it is derived on
//! demand and never stored. Subjects with no visits are legal and are kept,
//! since they still enter every risk set up to their censoring time.

mod csv_io;

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

pub use csv_io::{export_csv, ingest_csv, read_csv, write_baselines, write_events};

/// Opaque subject identifier.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SubjectId(pub String);

impl fmt::Display for SubjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for SubjectId {
    fn from(s: &str) -> Self {
        SubjectId(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectBaseline {
    pub subject_id: SubjectId,
    /// Named time-invariant covariates.
    pub covariates: BTreeMap<String, f64>,
    pub censoring_time: f64,
}

/// One clinic visit. `outcome` must be present exactly when `recorded` is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisitEvent {
    pub time: f64,
    pub recorded: bool,
    pub outcome: Option<f64>,
}

impl VisitEvent {
    pub fn recorded(time: f64, outcome: f64) -> Self {
        VisitEvent {
            time,
            recorded: true,
            outcome: Some(outcome),
        }
    }

    pub fn unrecorded(time: f64) -> Self {
        VisitEvent {
            time,
            recorded: false,
            outcome: None,
        }
    }
}

/// A subject's baseline together with its visit history, sorted by time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    pub baseline: SubjectBaseline,
    pub visits: Vec<VisitEvent>,
}

impl Subject {
    pub fn id(&self) -> &SubjectId {
        &self.baseline.subject_id
    }

    pub fn censoring_time(&self) -> f64 {
        self.baseline.censoring_time
    }

    pub fn covariate(&self, name: &str) -> Option<f64> {
        self.baseline.covariates.get(name).copied()
    }

    /// Number of visits, recorded or not.
    pub fn visit_count(&self) -> usize {
        self.visits.len()
    }

    /// Number of visits with a recorded biomarker.
    pub fn measurement_count(&self) -> usize {
        self.visits.iter().filter(|v| v.recorded).count()
    }

    pub fn measurements(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.visits
            .iter()
            .filter(|v| v.recorded)
            .filter_map(|v| v.outcome.map(|y| (v.time, y)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelDataset {
    pub study_origin: f64,
    pub subjects: Vec<Subject>,
}

impl PanelDataset {
    pub fn new(study_origin: f64, subjects: Vec<Subject>) -> Self {
        PanelDataset {
            study_origin,
            subjects,
        }
    }

    /// Sorts each subject's visits by time. Subject order is preserved.
    pub fn normalized(mut self) -> Self {
        for s in &mut self.subjects {
            s.visits.sort_by(|a, b| a.time.total_cmp(&b.time));
        }
        self
    }

    /// Maximum follow-up over all subjects.
    pub fn tau(&self) -> f64 {
        self.subjects
            .iter()
            .map(|s| s.censoring_time())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn total_visits(&self) -> usize {
        self.subjects.iter().map(Subject::visit_count).sum()
    }

    pub fn total_measurements(&self) -> usize {
        self.subjects.iter().map(Subject::measurement_count).sum()
    }

    /// Covariate names of the first subject; `validate` guarantees all agree.
    pub fn covariate_names(&self) -> Vec<String> {
        self.subjects
            .first()
            .map(|s| s.baseline.covariates.keys().cloned().collect())
            .unwrap_or_default()
    }

    /// Copy of the dataset keeping only visits with a recorded biomarker.
    pub fn measurements_only(&self) -> PanelDataset {
        PanelDataset {
            study_origin: self.study_origin,
            subjects: self
                .subjects
                .iter()
                .map(|s| Subject {
                    baseline: s.baseline.clone(),
                    visits: s.visits.iter().filter(|v| v.recorded).copied().collect(),
                })
                .collect(),
        }
    }

    pub fn validate(&self) -> ValidationReport {
        validate(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ViolationKind {
    NoSubjects,
    DuplicateSubjectId,
    CensoringNotAfterOrigin,
    NonFiniteCovariate,
    CovariateSetMismatch,
    NonFiniteEventTime,
    EventNotAfterOrigin,
    EventAfterCensoring,
    SimultaneousVisits,
    EventsOutOfOrder,
    OutcomeMissingAtRecordedVisit,
    OutcomePresentAtUnrecordedVisit,
    NonFiniteOutcome,
}

impl ViolationKind {
    pub fn code(self) -> &'static str {
        match self {
            ViolationKind::NoSubjects => "no-subjects",
            ViolationKind::DuplicateSubjectId => "duplicate-subject-id",
            ViolationKind::CensoringNotAfterOrigin => "censoring-not-after-origin",
            ViolationKind::NonFiniteCovariate => "nonfinite-covariate",
            ViolationKind::CovariateSetMismatch => "covariate-set-mismatch",
            ViolationKind::NonFiniteEventTime => "nonfinite-event-time",
            ViolationKind::EventNotAfterOrigin => "event-not-after-origin",
            ViolationKind::EventAfterCensoring => "event-after-censoring",
            ViolationKind::SimultaneousVisits => "simultaneous-visits",
            ViolationKind::EventsOutOfOrder => "events-out-of-order",
            ViolationKind::OutcomeMissingAtRecordedVisit => "outcome-missing-at-recorded-visit",
            ViolationKind::OutcomePresentAtUnrecordedVisit => "outcome-present-at-unrecorded-visit",
            ViolationKind::NonFiniteOutcome => "nonfinite-outcome",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub subject_id: Option<SubjectId>,
    /// Zero-based visit index within the subject, when the violation is visit-level.
    pub visit_index: Option<usize>,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }

    fn push(
        &mut self,
        kind: ViolationKind,
        subject: Option<&SubjectId>,
        visit_index: Option<usize>,
        message: String,
    ) {
        self.violations.push(Violation {
            kind,
            subject_id: subject.cloned(),
            visit_index,
            message,
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return writeln!(f, "pass");
        }
        for v in &self.violations {
            write!(f, "{}", v.kind.code())?;
            if let Some(id) = &v.subject_id {
                write!(f, " subject={id}")?;
            }
            if let Some(j) = v.visit_index {
                write!(f, " visit={j}")?;
            }
            writeln!(f, ": {}", v.message)?;
        }
        Ok(())
    }
}

/// Checks every dataset invariant and reports all violations. Never panics on
/// malformed values.
pub fn validate(dataset: &PanelDataset) -> ValidationReport {
    use ViolationKind::*;
    let mut report = ValidationReport::default();
    if dataset.subjects.is_empty() {
        report.push(NoSubjects, None, None, "dataset has no subjects".into());
        return report;
    }
    let origin = dataset.study_origin;
    let reference: Vec<&String> = dataset.subjects[0].baseline.covariates.keys().collect();
    let mut seen = HashSet::new();

    for s in &dataset.subjects {
        let id = s.id();
        if !seen.insert(id) {
            report.push(DuplicateSubjectId, Some(id), None, "subject id appears more than once".into());
        }
        let c = s.censoring_time();
        if !(c > origin) {
            report.push(
                CensoringNotAfterOrigin,
                Some(id),
                None,
                format!("censoring time {c} is not after study origin {origin}"),
            );
        }
        for (name, value) in &s.baseline.covariates {
            if !value.is_finite() {
                report.push(NonFiniteCovariate, Some(id), None, format!("covariate {name} = {value}"));
            }
        }
        if !s.baseline.covariates.keys().eq(reference.iter().copied()) {
            report.push(
                CovariateSetMismatch,
                Some(id),
                None,
                "covariate names differ from the first subject".into(),
            );
        }

        let mut prev: Option<f64> = None;
        for (j, v) in s.visits.iter().enumerate() {
            let t = v.time;
            if !t.is_finite() {
                report.push(NonFiniteEventTime, Some(id), Some(j), format!("time = {t}"));
            } else {
                if !(t > origin) {
                    report.push(
                        EventNotAfterOrigin,
                        Some(id),
                        Some(j),
                        format!("event time {t} is not after study origin {origin}"),
                    );
                }
                if t > c {
                    report.push(
                        EventAfterCensoring,
                        Some(id),
                        Some(j),
                        format!("event time {t} exceeds censoring time {c}"),
                    );
                }
                if let Some(p) = prev {
                    if t == p {
                        report.push(SimultaneousVisits, Some(id), Some(j), format!("two visits at time {t}"));
                    } else if t < p {
                        report.push(
                            EventsOutOfOrder,
                            Some(id),
                            Some(j),
                            format!("event time {t} precedes previous time {p}"),
                        );
                    }
                }
                prev = Some(t);
            }
            match (v.recorded, v.outcome) {
                (true, None) => report.push(
                    OutcomeMissingAtRecordedVisit,
                    Some(id),
                    Some(j),
                    "recorded visit has no outcome".into(),
                ),
                (false, Some(_)) => report.push(
                    OutcomePresentAtUnrecordedVisit,
                    Some(id),
                    Some(j),
                    "unrecorded visit carries an outcome".into(),
                ),
                (true, Some(y)) if !y.is_finite() => {
                    report.push(NonFiniteOutcome, Some(id), Some(j), format!("outcome = {y}"))
                }
                _ => {}
            }
        }
    }
    report
}
