use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ehrjoint::data::{export_csv, read_csv};
use ehrjoint::fit::FitDetail;
use ehrjoint::sim::{Setting, CASE_IDS};
use ehrjoint::{
    bootstrap, fit_method, generate_with_truth, run_replications, DataError, DesignSpec, Method, PanelDataset,
    ReplicationReport, SimConfig,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::CliError;
use crate::manifest::{ensure_dir, resolve_seed, write_file, write_json, ManifestBuilder, RunManifest, SEED_ENV};
use crate::table::{render_csv, render_text, TableBlock};

fn parse_json<T: for<'de> Deserialize<'de>>(path: &Path, bytes: &[u8]) -> Result<T, CliError> {
    serde_json::from_slice(bytes).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn utf8(path: &Path, bytes: Vec<u8>) -> Result<String, CliError> {
    String::from_utf8(bytes).map_err(|_| CliError::Usage(format!("{} is not UTF-8", path.display())))
}

fn record_env_seed(m: &mut ManifestBuilder, source: &str, seed: u64) {
    if source == "env" {
        m.input(SEED_ENV, seed.to_string());
    }
}

/// Reads `baselines.csv` and `events.csv` from `dir`, recording both as inputs.
pub fn load_dataset(m: &mut ManifestBuilder, dir: &Path) -> Result<PanelDataset, CliError> {
    let b = m.read(&dir.join("baselines.csv"))?;
    let e = m.read(&dir.join("events.csv"))?;
    Ok(read_csv(&b[..], &e[..])?)
}

pub struct SimulateArgs {
    pub config: Option<PathBuf>,
    pub case: Option<String>,
    pub out: PathBuf,
}

pub fn simulate(args: &SimulateArgs) -> Result<RunManifest, CliError> {
    let mut m = ManifestBuilder::new("simulate");
    let text = match (&args.config, &args.case) {
        (Some(path), None) => {
            let bytes = m.read(path)?;
            utf8(path, bytes)?
        }
        (None, Some(case)) => {
            let text = json!({ "case_id": case }).to_string();
            m.input("--case", text.clone());
            text
        }
        _ => return Err(CliError::Usage("give exactly one of --config or --case".into())),
    };
    let mut cfg = SimConfig::from_json(&text)?;
    let explicit = serde_json::from_str::<Value>(&text)
        .ok()
        .and_then(|v| v.get("seed").cloned())
        .is_some();
    let (seed, source) = resolve_seed(explicit.then_some(cfg.seed))?;
    record_env_seed(&mut m, source, seed);
    m.seed(seed, source);
    cfg.seed = seed;

    let (ds, truth) = generate_with_truth(&cfg)?;
    let out = ensure_dir(&args.out)?;
    let (b, e) = (out.join("baselines.csv"), out.join("events.csv"));
    export_csv(&ds, &b, &e)?;
    let t = out.join("truth.json");
    write_json(&t, &truth)?;
    for p in [&b, &e, &t] {
        m.output(p);
    }
    m.finish(&out)
}

pub struct FitArgs {
    pub data: PathBuf,
    pub design: PathBuf,
    pub method: Method,
    pub out: PathBuf,
    pub boot: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Serialize)]
struct BootSummary {
    n_boot: usize,
    n_failed: usize,
    seed: u64,
    interval: &'static str,
}

#[derive(Serialize)]
struct Diagnostics<'a> {
    method: &'a str,
    label: &'a str,
    converged: bool,
    design: &'a DesignSpec,
    n_subjects: usize,
    n_visits: usize,
    n_measurements: usize,
    fit: &'a FitDetail,
    bootstrap: Option<BootSummary>,
}

pub fn fit(args: &FitArgs) -> Result<RunManifest, CliError> {
    let mut m = ManifestBuilder::new("fit");
    let ds = load_dataset(&mut m, &args.data)?;
    let design: DesignSpec = parse_json(&args.design, &m.read(&args.design)?)?;
    design.check(Some(&ds))?;
    m.input("--method", args.method.name());
    let est = fit_method(args.method, &ds, &design)?;

    let boot = match args.boot {
        Some(n_boot) => {
            let (seed, source) = resolve_seed(args.seed)?;
            m.input("--boot", n_boot.to_string());
            m.input("bootstrap seed", seed.to_string());
            m.seed(seed, source);
            Some((bootstrap(&ds, &args.method, &design, n_boot, seed)?, seed))
        }
        None => None,
    };

    let mut csv = String::from("block,name,estimate");
    if boot.is_some() {
        csv.push_str(",se,ci_lower,ci_upper");
    }
    csv.push('\n');
    for (i, (name, value)) in est.names.iter().zip(&est.values).enumerate() {
        csv.push_str(&format!("beta,{name},{value}"));
        if let Some((b, _)) = &boot {
            csv.push_str(&format!(",{},{},{}", b.se[i], b.ci_lower[i], b.ci_upper[i]));
        }
        csv.push('\n');
    }
    if let FitDetail::Joint(j) = &est.detail {
        if let Some(theta) = &j.theta {
            for (name, value) in j.theta_names.iter().zip(theta) {
                csv.push_str(&format!("theta,{name},{value}"));
                if boot.is_some() {
                    csv.push_str(",,,");
                }
                csv.push('\n');
            }
        }
    }

    let out = ensure_dir(&args.out)?;
    let e = out.join("estimates.csv");
    write_file(&e, csv.as_bytes())?;
    let d = out.join("diagnostics.json");
    write_json(
        &d,
        &Diagnostics {
            method: args.method.name(),
            label: args.method.label(),
            converged: est.converged,
            design: &design,
            n_subjects: ds.n_subjects(),
            n_visits: ds.total_visits(),
            n_measurements: ds.total_measurements(),
            fit: &est.detail,
            bootstrap: boot.as_ref().map(|(b, seed)| BootSummary {
                n_boot: b.n_boot,
                n_failed: b.n_failed,
                seed: *seed,
                interval: "percentile 95%",
            }),
        },
    )?;
    m.output(&e);
    m.output(&d);
    m.finish(&out)
}

/// Benchmark configuration file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub setting: Option<Setting>,
    /// Defaults to every case of `setting`.
    #[serde(default)]
    pub cases: Vec<String>,
    /// Defaults to every method.
    #[serde(default)]
    pub methods: Vec<Method>,
    pub n_reps: usize,
    pub n_subjects: Option<usize>,
    pub seed: Option<u64>,
    /// Merged into every case's simulation config.
    #[serde(default)]
    pub overrides: Map<String, Value>,
    /// Per-case simulation overrides, applied after `overrides`.
    #[serde(default)]
    pub case_overrides: BTreeMap<String, Map<String, Value>>,
}

impl BenchmarkConfig {
    pub fn resolve_cases(&self) -> Result<Vec<String>, CliError> {
        if !self.cases.is_empty() {
            return Ok(self.cases.clone());
        }
        let Some(setting) = self.setting else {
            return Err(CliError::Usage("benchmark config needs 'cases' or 'setting'".into()));
        };
        Ok(CASE_IDS
            .iter()
            .filter(|c| SimConfig::for_case(c).map(|s| s.setting == setting).unwrap_or(false))
            .map(|c| c.to_string())
            .collect())
    }

    pub fn sim_config(&self, case: &str) -> Result<SimConfig, CliError> {
        let mut obj = self.overrides.clone();
        if let Some(extra) = self.case_overrides.get(case) {
            obj.extend(extra.clone());
        }
        obj.insert("case_id".into(), json!(case));
        if let Some(n) = self.n_subjects {
            obj.insert("n_subjects".into(), json!(n));
        }
        let cfg = SimConfig::from_json(&Value::Object(obj).to_string())?;
        if let Some(s) = self.setting {
            if cfg.setting != s {
                return Err(CliError::Usage(format!("case {case} is not in setting {s:?}")));
            }
        }
        Ok(cfg)
    }

    pub fn methods(&self) -> Vec<Method> {
        if self.methods.is_empty() {
            Method::ALL.to_vec()
        } else {
            self.methods.clone()
        }
    }
}

#[derive(Serialize)]
struct BenchmarkOutput<'a> {
    n_reps: usize,
    seed: u64,
    seed_source: &'a str,
    methods: Vec<&'static str>,
    reports: &'a [ReplicationReport],
}

pub struct BenchmarkArgs {
    pub config: PathBuf,
    pub out: PathBuf,
}

/// Replication reports for every case of `config` under `seed`.
pub fn run_benchmark(config: &BenchmarkConfig, seed: u64) -> Result<Vec<ReplicationReport>, CliError> {
    let methods = config.methods();
    config
        .resolve_cases()?
        .iter()
        .map(|case| {
            let cfg = config.sim_config(case)?;
            Ok(run_replications(&cfg, &methods, config.n_reps, seed)?)
        })
        .collect()
}

pub fn benchmark(args: &BenchmarkArgs) -> Result<RunManifest, CliError> {
    let mut m = ManifestBuilder::new("benchmark");
    let config: BenchmarkConfig = parse_json(&args.config, &m.read(&args.config)?)?;
    // Fail on a bad case before spending time on earlier ones.
    for case in config.resolve_cases()? {
        config.sim_config(&case)?;
    }
    let (seed, source) = resolve_seed(config.seed)?;
    record_env_seed(&mut m, source, seed);
    m.seed(seed, source);

    let reports = run_benchmark(&config, seed)?;
    let out = ensure_dir(&args.out)?;
    for r in &reports {
        let p = out.join(format!("report_{}.csv", r.case_id));
        write_file(&p, r.to_csv().as_bytes())?;
        m.output(&p);
    }
    let blocks = TableBlock::from_reports(&reports, "A");
    let t = out.join("table.csv");
    write_file(&t, render_csv(&blocks).as_bytes())?;
    m.output(&t);
    let tt = out.join("table.txt");
    write_file(&tt, render_text(&blocks, "A").as_bytes())?;
    m.output(&tt);
    let j = out.join("report.json");
    write_json(
        &j,
        &BenchmarkOutput {
            n_reps: config.n_reps,
            seed,
            seed_source: source,
            methods: config.methods().iter().map(|m| m.name()).collect(),
            reports: &reports,
        },
    )?;
    m.output(&j);
    m.finish(&out)
}

pub struct ReportArgs {
    pub input: PathBuf,
    pub coefficient: String,
    pub csv: bool,
}

/// Renders the method-by-case table of a finished benchmark to a string.
pub fn report(args: &ReportArgs) -> Result<String, CliError> {
    let path = args.input.join("report.json");
    let bytes = std::fs::read(&path).map_err(crate::error::io_err(&path))?;
    let value: Value = parse_json(&path, &bytes)?;
    let reports = value
        .get("reports")
        .and_then(Value::as_array)
        .ok_or_else(|| CliError::Usage(format!("{} has no 'reports' array", path.display())))?;
    let blocks = TableBlock::from_json(reports, &args.coefficient);
    if blocks.iter().all(|b| b.rows.is_empty()) {
        return Err(CliError::Usage(format!("no rows for coefficient '{}'", args.coefficient)));
    }
    Ok(if args.csv {
        render_csv(&blocks)
    } else {
        render_text(&blocks, &args.coefficient)
    })
}

pub struct ValidateArgs {
    pub data: Option<PathBuf>,
    pub config: Option<PathBuf>,
    pub design: Option<PathBuf>,
}

/// Checks whichever inputs are given; returns a human-readable summary.
pub fn validate(args: &ValidateArgs) -> Result<String, CliError> {
    if args.data.is_none() && args.config.is_none() && args.design.is_none() {
        return Err(CliError::Usage("give at least one of --data, --config, --design".into()));
    }
    let mut out = String::new();
    let mut scratch = ManifestBuilder::new("validate");
    let mut dataset = None;
    if let Some(dir) = &args.data {
        match load_dataset(&mut scratch, dir) {
            Ok(ds) => {
                out.push_str(&format!(
                    "data: pass ({} subjects, {} visits, {} measurements)\n",
                    ds.n_subjects(),
                    ds.total_visits(),
                    ds.total_measurements()
                ));
                dataset = Some(ds);
            }
            Err(CliError::Data(DataError::Invalid(report))) => {
                eprint!("{out}data: fail\n{report}");
                return Err(CliError::Invalid);
            }
            Err(e) => return Err(e),
        }
    }
    if let Some(path) = &args.config {
        let bytes = scratch.read(path)?;
        let value: Value = parse_json(path, &bytes)?;
        if value.get("case_id").is_some() {
            let cfg = SimConfig::from_json(&utf8(path, bytes)?)?;
            out.push_str(&format!("config: pass (simulation case {}, n = {})\n", cfg.case_id, cfg.n_subjects));
        } else {
            let bench: BenchmarkConfig = parse_json(path, &bytes)?;
            let cases = bench.resolve_cases()?;
            for c in &cases {
                bench.sim_config(c)?;
            }
            out.push_str(&format!(
                "config: pass (benchmark, cases {}, {} methods, {} replications)\n",
                cases.join(" "),
                bench.methods().len(),
                bench.n_reps
            ));
        }
    }
    if let Some(path) = &args.design {
        let design: DesignSpec = parse_json(path, &scratch.read(path)?)?;
        design.check(dataset.as_ref())?;
        out.push_str("design: pass\n");
    }
    Ok(out)
}
