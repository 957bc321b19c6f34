//! Plain-text tables and the CSV schemas.
//!
//! Every CSV starts with a header row, and every row carries its schema tag
//! in the first column (`fcpd.<kind>.v<N>`) so that files from different
//! versions can be told apart after concatenation.

use std::io::Write;

use anyhow::Result;

use fcp_core::als::FitReport;
use fcp_core::experiment::ExperimentReport;
use fcp_core::fcp::FcpTrace;
use fcp_core::synth::SaeReport;

use crate::Format;

pub const RUNS_SCHEMA: &str = "fcpd.runs.v1";
pub const SAE_SCHEMA: &str = "fcpd.sae.v1";
pub const SUMMARY_SCHEMA: &str = "fcpd.summary.v1";
pub const DECOMPOSE_SCHEMA: &str = "fcpd.decompose.v1";

/// Left-aligned text table.
pub struct Table {
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<const N: usize>(header: [&str; N]) -> Self {
        Self { rows: vec![header.iter().map(|s| s.to_string()).collect()] }
    }

    pub fn row<const N: usize>(&mut self, cells: [String; N]) {
        self.rows.push(cells.to_vec());
    }

    pub fn render(&self) -> String {
        let cols = self.rows.iter().map(Vec::len).max().unwrap_or(0);
        let widths: Vec<usize> = (0..cols)
            .map(|c| self.rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (i, r) in self.rows.iter().enumerate() {
            let line: Vec<String> = r.iter().zip(&widths).map(|(s, &w)| format!("{s:<w$}")).collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
            if i == 0 {
                let total = widths.iter().sum::<usize>() + 2 * widths.len().saturating_sub(1);
                out.push_str(&"-".repeat(total));
                out.push('\n');
            }
        }
        out
    }

    pub fn print(&self) {
        print!("{}", self.render());
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn runs_csv(w: &mut impl Write, reports: &[ExperimentReport], timing: bool) -> Result<()> {
    let mut c = csv::Writer::from_writer(w);
    let mut header = vec![
        "schema",
        "experiment",
        "run",
        "seed",
        "method",
        "algorithm",
        "rule",
        "msae_db",
        "median_db",
        "refined_msae_db",
        "crib_db",
        "relative_error",
        "realized_snr_db",
    ];
    if timing {
        header.push("seconds");
    }
    c.write_record(&header)?;
    for (e, r) in reports.iter().flat_map(|e| e.records.iter().map(move |r| (e, r))) {
        let mut row = vec![
            RUNS_SCHEMA.to_string(),
            e.name.clone(),
            r.run.to_string(),
            r.seed.to_string(),
            r.method.clone(),
            r.algorithm.to_string(),
            r.rule.clone(),
            r.msae_db.to_string(),
            r.median_db.to_string(),
            opt(r.refined_msae_db),
            opt(r.crib_db),
            r.relative_error.to_string(),
            r.realized_snr_db.to_string(),
        ];
        if timing {
            row.push(r.seconds.to_string());
        }
        c.write_record(&row)?;
    }
    c.flush()?;
    Ok(())
}

pub fn sae_csv(w: &mut impl Write, reports: &[ExperimentReport]) -> Result<()> {
    let mut c = csv::Writer::from_writer(w);
    c.write_record(["schema", "experiment", "run", "method", "mode", "component", "alpha_sq"])?;
    for (e, r) in reports.iter().flat_map(|e| e.records.iter().map(move |r| (e, r))) {
        let Some(s) = &r.sae else { continue };
        for (n, row) in s.alpha_sq.iter().enumerate() {
            for (j, a) in row.iter().enumerate() {
                c.write_record([
                    SAE_SCHEMA.to_string(),
                    e.name.clone(),
                    r.run.to_string(),
                    r.method.clone(),
                    (n + 1).to_string(),
                    (j + 1).to_string(),
                    a.to_string(),
                ])?;
            }
        }
    }
    c.flush()?;
    Ok(())
}

/// Aggregate over runs, one row per method, in the requested format.
pub fn summary(reports: &[ExperimentReport], format: Format) -> Result<()> {
    match format {
        Format::Json => {
            serde_json::to_writer_pretty(std::io::stdout().lock(), reports)?;
            println!();
        }
        Format::Csv => {
            let mut c = csv::Writer::from_writer(std::io::stdout());
            c.write_record([
                "schema",
                "experiment",
                "method",
                "runs",
                "msae_db",
                "median_db",
                "refined_msae_db",
                "crib_db",
                "loss_db",
                "relative_error",
                "seconds",
            ])?;
            for e in reports {
                for s in &e.summary {
                    c.write_record([
                        SUMMARY_SCHEMA.to_string(),
                        e.name.clone(),
                        s.method.clone(),
                        s.runs.to_string(),
                        s.msae_db.to_string(),
                        s.median_db.to_string(),
                        opt(s.refined_msae_db),
                        opt(s.crib_db),
                        opt(s.loss_db),
                        s.relative_error.to_string(),
                        s.seconds.to_string(),
                    ])?;
                }
            }
            c.flush()?;
        }
        Format::Table => {
            let f = |x: Option<f64>| x.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into());
            let mut t = Table::new([
                "experiment",
                "method",
                "runs",
                "MSAE dB",
                "median dB",
                "CRIB dB",
                "loss dB",
                "rel. error",
                "s/run",
            ]);
            for e in reports {
                for s in &e.summary {
                    t.row([
                        e.name.clone(),
                        s.method.clone(),
                        s.runs.to_string(),
                        format!("{:.2}", s.msae_db),
                        format!("{:.2}", s.median_db),
                        f(s.crib_db),
                        f(s.loss_db),
                        format!("{:.4e}", s.relative_error),
                        format!("{:.3}", s.seconds),
                    ]);
                }
            }
            t.print();
        }
    }
    Ok(())
}

pub fn decompose_csv(
    algorithm: &str,
    rule: &str,
    fit: &FitReport,
    trace: Option<&FcpTrace>,
    sae: Option<&SaeReport>,
) -> Result<()> {
    let mut c = csv::Writer::from_writer(std::io::stdout());
    c.write_record([
        "schema",
        "algorithm",
        "rule",
        "relative_error",
        "iterations",
        "compression_seconds",
        "unfolded_cpd_seconds",
        "reconstruction_seconds",
        "refinement_seconds",
        "total_seconds",
        "msae_db",
        "median_db",
    ])?;
    let stage = |f: fn(&FcpTrace) -> f64| trace.map(|t| f(t).to_string()).unwrap_or_default();
    c.write_record([
        DECOMPOSE_SCHEMA.to_string(),
        algorithm.to_string(),
        rule.to_string(),
        fit.relative_error.to_string(),
        fit.iterations.to_string(),
        stage(|t| t.compression_seconds),
        stage(|t| t.unfolded_cpd_seconds),
        stage(|t| t.reconstruction_seconds),
        stage(|t| t.refinement_seconds),
        trace.map(|t| t.total_seconds).unwrap_or(fit.seconds).to_string(),
        opt(sae.map(|s| s.msae_db)),
        opt(sae.map(|s| s.median_db)),
    ])?;
    c.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_aligns_columns() {
        let mut t = Table::new(["a", "bbb"]);
        t.row(["xxxx".into(), "y".into()]);
        let s = t.render();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "a     bbb");
        assert_eq!(lines[1], "---------");
        assert_eq!(lines[2], "xxxx  y");
    }
}
