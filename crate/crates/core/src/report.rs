//! Policy tables: strategy, readmissions prevented with interval, total
//! interventions and NNT.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{format_count, PolicyImpact};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    Csv,
    TextTable,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "text-table" => Ok(ReportFormat::TextTable),
            other => Err(Error::argument(format!(
                "unknown report format {other:?} (expected csv or text-table)"
            ))),
        }
    }
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::TextTable => "txt",
        }
    }
}

const HEADER: [&str; 4] = ["Strategy", "Readmissions prevented (95% CI)", "Total interventions", "NNT"];

fn rounded(v: f64) -> String {
    format!("{}", v.round() as i64)
}

/// Render policy results. Counts are rounded to integers.
pub fn emit_report(results: &[PolicyImpact], format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Csv => {
            let mut out = csv::Writer::from_writer(Vec::new());
            out.write_record(["strategy", "prevented", "ci_lo", "ci_hi", "total_interventions", "nnt"])?;
            for r in results {
                let (lo, hi) = r
                    .ci95
                    .map_or((String::new(), String::new()), |(a, b)| (rounded(a), rounded(b)));
                out.write_record([
                    r.strategy.clone(),
                    rounded(r.prevented),
                    lo,
                    hi,
                    r.n_treated.to_string(),
                    r.nnt.map_or_else(String::new, |v| v.to_string()),
                ])?;
            }
            let bytes = out.into_inner().map_err(|e| Error::Io(e.into_error()))?;
            Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
        }
        ReportFormat::TextTable => {
            let rows: Vec<[String; 4]> = results
                .iter()
                .map(|r| {
                    [
                        r.strategy.clone(),
                        r.prevented_text(),
                        format_count(r.n_treated as f64),
                        r.nnt_text(),
                    ]
                })
                .collect();
            let mut widths = HEADER.map(str::len);
            for row in &rows {
                for (w, cell) in widths.iter_mut().zip(row) {
                    *w = (*w).max(cell.chars().count());
                }
            }
            let mut out = String::new();
            let line = |out: &mut String, cells: [&str; 4]| {
                let _ = writeln!(
                    out,
                    "{:<w0$}  {:>w1$}  {:>w2$}  {:>w3$}",
                    cells[0],
                    cells[1],
                    cells[2],
                    cells[3],
                    w0 = widths[0],
                    w1 = widths[1],
                    w2 = widths[2],
                    w3 = widths[3]
                );
            };
            line(&mut out, HEADER);
            let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
            line(&mut out, [&rule[0], &rule[1], &rule[2], &rule[3]]);
            for row in &rows {
                line(&mut out, [&row[0], &row[1], &row[2], &row[3]]);
            }
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row() -> PolicyImpact {
        PolicyImpact {
            strategy: "CATE top 20% per ventile".into(),
            treated_ids: vec![],
            n_treated: 39_648,
            prevented: 2478.2,
            raw_prevented: 2478.2,
            net_harm: false,
            ci95: Some((2262.0, 2694.4)),
            nnt: Some(16),
        }
    }

    #[test]
    fn empty_results_give_header_only() {
        let csv = emit_report(&[], ReportFormat::Csv).unwrap();
        assert_eq!(csv.lines().count(), 1);
        let txt = emit_report(&[], ReportFormat::TextTable).unwrap();
        assert_eq!(txt.lines().count(), 2);
    }

    #[test]
    fn renderings_agree() {
        let csv = emit_report(&[row()], ReportFormat::Csv).unwrap();
        assert!(csv.contains("CATE top 20% per ventile,2478,2262,2694,39648,16"));
        let txt = emit_report(&[row()], ReportFormat::TextTable).unwrap();
        assert!(txt.contains("2,478 (2,262-2,694)"));
        assert!(txt.contains("39,648"));
    }

    #[test]
    fn unknown_format() {
        assert!(matches!("pdf".parse::<ReportFormat>(), Err(Error::Argument(_))));
    }
}
