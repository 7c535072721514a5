//! Two-file CSV schema:
//!
//! ```text
//! baselines.csv  subject_id,censoring_time,<cov1>,<cov2>,...
//! events.csv     subject_id,time,recorded,outcome
//! ```
//!
//! `recorded` is `0` or `1`; `outcome` is empty when `recorded = 0`. Floats are
//! written in shortest round-trip form so that re-ingesting an export yields
//! bit-identical values. Rows are ordered by subject (baseline order), then time.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{PanelDataset, Subject, SubjectBaseline, SubjectId, VisitEvent};
use crate::error::DataError;

const EVENTS_HEADER: [&str; 4] = ["subject_id", "time", "recorded", "outcome"];

fn io_err(path: &Path, source: std::io::Error) -> DataError {
    DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(file: &str, e: csv::Error) -> DataError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => DataError::Io {
            path: file.to_string(),
            source,
        },
        kind => DataError::Parse {
            file: file.to_string(),
            line,
            message: format!("{kind:?}"),
        },
    }
}

fn parse_f64(file: &str, line: u64, column: &str, raw: &str) -> Result<f64, DataError> {
    raw.trim().parse::<f64>().map_err(|_| DataError::Parse {
        file: file.to_string(),
        line,
        message: format!("column {column}: cannot parse '{raw}' as a number"),
    })
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(r)
}

/// Reads the two-file schema from arbitrary readers. The result is validated.
pub fn read_csv<R1: Read, R2: Read>(baselines: R1, events: R2) -> Result<PanelDataset, DataError> {
    read_csv_with_origin(baselines, events, 0.0)
}

fn read_csv_with_origin<R1: Read, R2: Read>(
    baselines: R1,
    events: R2,
    study_origin: f64,
) -> Result<PanelDataset, DataError> {
    const BFILE: &str = "baselines.csv";
    const EFILE: &str = "events.csv";

    let mut rdr = reader(baselines);
    let header = rdr.headers().map_err(|e| csv_err(BFILE, e))?.clone();
    if header.len() < 2 || &header[0] != "subject_id" || &header[1] != "censoring_time" {
        return Err(DataError::Schema {
            file: BFILE.into(),
            message: "header must start with subject_id,censoring_time".into(),
        });
    }
    let cov_names: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
    {
        let mut seen = std::collections::HashSet::new();
        for n in &cov_names {
            if n.is_empty() || !seen.insert(n) {
                return Err(DataError::Schema {
                    file: BFILE.into(),
                    message: format!("empty or duplicate covariate column '{n}'"),
                });
            }
        }
    }

    let mut subjects = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(BFILE, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let id = rec[0].to_string();
        let censoring_time = parse_f64(BFILE, line, "censoring_time", &rec[1])?;
        let mut covariates = BTreeMap::new();
        for (name, raw) in cov_names.iter().zip(rec.iter().skip(2)) {
            covariates.insert(name.clone(), parse_f64(BFILE, line, name, raw)?);
        }
        // Duplicates are left for validation to report.
        index.entry(id.clone()).or_insert(subjects.len());
        subjects.push(Subject {
            baseline: SubjectBaseline {
                subject_id: SubjectId(id),
                covariates,
                censoring_time,
            },
            visits: Vec::new(),
        });
    }

    let mut rdr = reader(events);
    let header = rdr.headers().map_err(|e| csv_err(EFILE, e))?.clone();
    if !header.iter().eq(EVENTS_HEADER.iter().copied()) {
        return Err(DataError::Schema {
            file: EFILE.into(),
            message: format!("header must be exactly {}", EVENTS_HEADER.join(",")),
        });
    }
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(EFILE, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let id = &rec[0];
        let Some(&si) = index.get(id) else {
            return Err(DataError::UnknownSubject {
                line,
                subject_id: id.to_string(),
            });
        };
        let time = parse_f64(EFILE, line, "time", &rec[1])?;
        let recorded = match rec[2].trim() {
            "0" => false,
            "1" => true,
            other => {
                return Err(DataError::Parse {
                    file: EFILE.into(),
                    line,
                    message: format!("column recorded: expected 0 or 1, got '{other}'"),
                })
            }
        };
        let outcome = if rec[3].trim().is_empty() {
            None
        } else {
            Some(parse_f64(EFILE, line, "outcome", &rec[3])?)
        };
        subjects[si].visits.push(VisitEvent {
            time,
            recorded,
            outcome,
        });
    }

    let dataset = PanelDataset::new(study_origin, subjects).normalized();
    let report = dataset.validate();
    if !report.is_ok() {
        return Err(DataError::Invalid(report));
    }
    Ok(dataset)
}

/// Reads and validates `baselines.csv` / `events.csv`.
pub fn ingest_csv(baseline_path: &Path, events_path: &Path) -> Result<PanelDataset, DataError> {
    let b = File::open(baseline_path).map_err(|e| io_err(baseline_path, e))?;
    let e = File::open(events_path).map_err(|e| io_err(events_path, e))?;
    read_csv(b, e)
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

pub fn write_baselines<W: Write>(dataset: &PanelDataset, out: W) -> Result<(), DataError> {
    const F: &str = "baselines.csv";
    let names = dataset.covariate_names();
    let mut w = writer(out);
    let mut header = vec!["subject_id".to_string(), "censoring_time".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header).map_err(|e| csv_err(F, e))?;
    for s in &dataset.subjects {
        let mut row = vec![s.id().0.clone(), s.censoring_time().to_string()];
        for n in &names {
            row.push(s.covariate(n).map(|v| v.to_string()).unwrap_or_default());
        }
        w.write_record(&row).map_err(|e| csv_err(F, e))?;
    }
    w.flush().map_err(|e| io_err(Path::new(F), e))
}

pub fn write_events<W: Write>(dataset: &PanelDataset, out: W) -> Result<(), DataError> {
    const F: &str = "events.csv";
    let mut w = writer(out);
    w.write_record(EVENTS_HEADER).map_err(|e| csv_err(F, e))?;
    for s in &dataset.subjects {
        for v in &s.visits {
            let outcome = v.outcome.map(|y| y.to_string()).unwrap_or_default();
            w.write_record([
                s.id().0.as_str(),
                &v.time.to_string(),
                if v.recorded { "1" } else { "0" },
                &outcome,
            ])
            .map_err(|e| csv_err(F, e))?;
        }
    }
    w.flush().map_err(|e| io_err(Path::new(F), e))
}

/// Writes the two-file schema. Output is deterministic for a given dataset.
pub fn export_csv(dataset: &PanelDataset, baseline_path: &Path, events_path: &Path) -> Result<(), DataError> {
    let b = File::create(baseline_path).map_err(|e| io_err(baseline_path, e))?;
    write_baselines(dataset, std::io::BufWriter::new(b))?;
    let e = File::create(events_path).map_err(|e| io_err(events_path, e))?;
    write_events(dataset, std::io::BufWriter::new(e))
}
