//! Estimate reports and Monte Carlo tables.

use minbo::analysis::AnalysisResult;
use minbo::simulation::{MonteCarloSummary, SummaryRow};
use minbo::variance::EstimateReport;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::format::{full, sig, to_json, TABLE_DIGITS};

/// One coefficient of one estimator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub estimator: String,
    pub coefficient: String,
    pub estimate: f64,
    pub ase: f64,
    pub ere: f64,
    pub odds_ratio: f64,
    pub ll: f64,
    pub ul: f64,
    pub or_ll: f64,
    pub or_ul: f64,
    pub p_value: f64,
}

pub const REPORT_COLUMNS: [&str; 11] = [
    "estimator",
    "coefficient",
    "estimate",
    "ase",
    "ere",
    "odds_ratio",
    "ll",
    "ul",
    "or_ll",
    "or_ul",
    "p_value",
];

fn push_rows(out: &mut Vec<ReportRow>, label: &str, names: &[String], r: &EstimateReport) {
    for (j, name) in names.iter().enumerate() {
        out.push(ReportRow {
            estimator: label.to_string(),
            coefficient: name.clone(),
            estimate: r.beta_hat[j],
            ase: r.ase[j],
            ere: r.ere.as_ref().map_or(1.0, |e| e[j]),
            odds_ratio: r.beta_hat[j].exp(),
            ll: r.ci_lower[j],
            ul: r.ci_upper[j],
            or_ll: r.ci_lower[j].exp(),
            or_ul: r.ci_upper[j].exp(),
            p_value: r.p_value[j],
        });
    }
}

/// Rows for the MLE followed by every scheme, in request order.
pub fn report_rows(result: &AnalysisResult, names: &[String]) -> Vec<ReportRow> {
    let mut rows = Vec::new();
    push_rows(&mut rows, "MLE", names, &result.mle);
    for s in &result.schemes {
        push_rows(&mut rows, &s.label, names, &s.report);
    }
    rows
}

pub fn report_json(rows: &[ReportRow]) -> Result<String, CliError> {
    to_json(&rows).map_err(|e| CliError::Config(e.to_string()))
}

pub fn report_csv(rows: &[ReportRow]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let to_err = |e: csv::Error| CliError::Config(e.to_string());
    w.write_record(REPORT_COLUMNS).map_err(to_err)?;
    for r in rows {
        let nums = [
            r.estimate, r.ase, r.ere, r.odds_ratio, r.ll, r.ul, r.or_ll, r.or_ul, r.p_value,
        ];
        let mut rec = vec![r.estimator.clone(), r.coefficient.clone()];
        rec.extend(nums.iter().map(|&v| full(v)));
        w.write_record(&rec).map_err(to_err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("CSV of UTF-8 fields"))
}

pub fn parse_report_csv(text: &str) -> Result<Vec<ReportRow>, CliError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize()
        .map(|row| row.map_err(|e| CliError::Config(format!("report CSV: {e}"))))
        .collect()
}

// ---------------------------------------------------------------------------
// Monte Carlo tables
// ---------------------------------------------------------------------------

/// Table row as printed: bias, MCSD and ASE multiplied by 100.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    #[serde(rename = "Estimator")]
    pub estimator: String,
    #[serde(rename = "Coefficient")]
    pub coefficient: String,
    #[serde(rename = "Bias")]
    pub bias: f64,
    #[serde(rename = "MCSD", default, skip_serializing_if = "Option::is_none")]
    pub mcsd: Option<f64>,
    #[serde(rename = "ASE")]
    pub ase: f64,
    #[serde(rename = "CP")]
    pub cp: f64,
    #[serde(rename = "ERE", default, skip_serializing_if = "Option::is_none")]
    pub ere: Option<f64>,
}

pub fn coefficient_label(j: usize) -> String {
    format!("beta{j}")
}

/// Rounds to the printed precision.
fn shown(x: f64) -> f64 {
    sig(x, TABLE_DIGITS).parse().expect("formatted float")
}

/// Table rows exactly as they appear in the CSV.
pub fn table_rows(summary: &MonteCarloSummary) -> Vec<TableRow> {
    summary.rows.iter().map(table_row).collect()
}

fn table_row(r: &SummaryRow) -> TableRow {
    TableRow {
        estimator: r.estimator.clone(),
        coefficient: coefficient_label(r.coefficient),
        bias: shown(100.0 * r.bias),
        mcsd: r.mcsd.map(|v| shown(100.0 * v)),
        ase: shown(100.0 * r.mean_ase),
        cp: shown(r.cp),
        ere: r.ere.map(shown),
    }
}

/// The human-facing table. Columns without values (single replicate) are dropped.
pub fn table_csv(summary: &MonteCarloSummary) -> String {
    let rows = table_rows(summary);
    let has_mcsd = rows.iter().all(|r| r.mcsd.is_some());
    let has_ere = rows.iter().all(|r| r.ere.is_some());
    let mut header = vec!["Estimator", "Coefficient", "Bias"];
    if has_mcsd {
        header.push("MCSD");
    }
    header.extend(["ASE", "CP"]);
    if has_ere {
        header.push("ERE");
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).expect("in-memory write");
    for r in &rows {
        let mut rec = vec![r.estimator.clone(), r.coefficient.clone(), sig(r.bias, TABLE_DIGITS)];
        if has_mcsd {
            rec.push(sig(r.mcsd.unwrap_or(f64::NAN), TABLE_DIGITS));
        }
        rec.push(sig(r.ase, TABLE_DIGITS));
        rec.push(sig(r.cp, TABLE_DIGITS));
        if has_ere {
            rec.push(sig(r.ere.unwrap_or(f64::NAN), TABLE_DIGITS));
        }
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("UTF-8")
}

pub fn parse_table_csv(text: &str) -> Result<Vec<TableRow>, CliError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize()
        .map(|row| row.map_err(|e| CliError::Config(format!("summary CSV: {e}"))))
        .collect()
}
