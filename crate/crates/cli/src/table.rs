//! Method-by-case bias/SD/RMSE tables.

use ehrjoint::{Method, ReplicationReport};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub method: String,
    pub bias_x100: f64,
    pub sd_x100: f64,
    pub rmse_x100: f64,
    pub failures: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableBlock {
    pub case_id: String,
    pub rows: Vec<TableRow>,
}

fn num(v: &Value, key: &str) -> f64 {
    v.get(key).and_then(Value::as_f64).unwrap_or(f64::NAN)
}

impl TableBlock {
    /// Reads blocks from serialized reports; null statistics become NaN.
    pub fn from_json(reports: &[Value], coefficient: &str) -> Vec<TableBlock> {
        reports
            .iter()
            .map(|r| TableBlock {
                case_id: r.get("case_id").and_then(Value::as_str).unwrap_or("?").to_string(),
                rows: r
                    .get("rows")
                    .and_then(Value::as_array)
                    .into_iter()
                    .flatten()
                    .filter(|row| row.get("coefficient").and_then(Value::as_str) == Some(coefficient))
                    .map(|row| TableRow {
                        method: row.get("method").and_then(Value::as_str).unwrap_or("?").to_string(),
                        bias_x100: num(row, "bias_x100"),
                        sd_x100: num(row, "sd_x100"),
                        rmse_x100: num(row, "rmse_x100"),
                        failures: row.get("failures").and_then(Value::as_u64).unwrap_or(0),
                    })
                    .collect(),
            })
            .collect()
    }

    pub fn from_reports(reports: &[ReplicationReport], coefficient: &str) -> Vec<TableBlock> {
        let values: Vec<Value> = reports
            .iter()
            .map(|r| serde_json::to_value(r).expect("reports serialize"))
            .collect();
        Self::from_json(&values, coefficient)
    }
}

fn methods(blocks: &[TableBlock]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for b in blocks {
        for r in &b.rows {
            if !out.contains(&r.method) {
                out.push(r.method.clone());
            }
        }
    }
    out
}

fn label(method: &str) -> String {
    method.parse::<Method>().map(|m| m.label().to_string()).unwrap_or_else(|_| method.to_string())
}

/// Wide CSV: one row per method, four columns per case.
pub fn render_csv(blocks: &[TableBlock]) -> String {
    let mut out = String::from("method");
    for b in blocks {
        let c = &b.case_id;
        out.push_str(&format!(",{c}_bias_x100,{c}_sd_x100,{c}_rmse_x100,{c}_failures"));
    }
    out.push('\n');
    for m in methods(blocks) {
        out.push_str(&m);
        for b in blocks {
            match b.rows.iter().find(|r| r.method == m) {
                Some(r) => out.push_str(&format!(",{},{},{},{}", r.bias_x100, r.sd_x100, r.rmse_x100, r.failures)),
                None => out.push_str(",,,,"),
            }
        }
        out.push('\n');
    }
    out
}

fn cell(v: f64) -> String {
    if v.is_finite() {
        format!("{v:>7.1}")
    } else {
        format!("{:>7}", "-")
    }
}

/// Aligned text table with one Bias/SD/RMSE block per case.
pub fn render_text(blocks: &[TableBlock], coefficient: &str) -> String {
    let width = 28;
    let mut out = format!("Estimates of {coefficient}: bias, SD and RMSE x 100 (failed replications in brackets)\n\n");
    out.push_str(&format!("{:width$}", ""));
    for b in blocks {
        out.push_str(&format!(" | {:^28}", format!("Case {}", b.case_id)));
    }
    out.push('\n');
    out.push_str(&format!("{:width$}", "Method"));
    for _ in blocks {
        out.push_str(&format!(" | {:>7}{:>7}{:>7}{:>7}", "Bias", "SD", "RMSE", "Fail"));
    }
    out.push('\n');
    for m in methods(blocks) {
        out.push_str(&format!("{:width$}", label(&m)));
        for b in blocks {
            match b.rows.iter().find(|r| r.method == m) {
                Some(r) => out.push_str(&format!(
                    " | {}{}{}{:>7}",
                    cell(r.bias_x100),
                    cell(r.sd_x100),
                    cell(r.rmse_x100),
                    format!("[{}]", r.failures)
                )),
                None => out.push_str(&format!(" | {:28}", "")),
            }
        }
        out.push('\n');
    }
    out
}
