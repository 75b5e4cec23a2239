//! Serialisation of evaluation reports: JSON, per-cell CSV and Markdown tables.

use std::fmt::Write as _;
use std::path::Path;

use super::evaluate::{EvalReport, Family};
use crate::error::{invalid, Error, Result};

pub const CSV_COLUMNS: [&str; 9] = ["model", "ticker", "horizon", "n", "nll", "ci_lo", "ci_hi", "ks", "tail_energy"];

fn check(report: &EvalReport) -> Result<()> {
    if report.models.is_empty() || report.cells.is_empty() {
        return Err(invalid("report has no models"));
    }
    Ok(())
}

pub fn to_json(report: &EvalReport) -> Result<String> {
    check(report)?;
    Ok(serde_json::to_string_pretty(report)?)
}

pub fn from_json(text: &str) -> Result<EvalReport> {
    let r: EvalReport = serde_json::from_str(text)?;
    check(&r)?;
    Ok(r)
}

/// One row per (model, seed, ticker, horizon); an undefined tail energy is empty.
pub fn to_csv(report: &EvalReport) -> Result<String> {
    check(report)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| invalid(format!("csv: {e}"));
    w.write_record(CSV_COLUMNS).map_err(io)?;
    for c in &report.cells {
        w.write_record([
            c.model.clone(),
            c.ticker.clone(),
            c.horizon.to_string(),
            c.n.to_string(),
            c.nll.to_string(),
            c.ci_lo.to_string(),
            c.ci_hi.to_string(),
            c.ks.to_string(),
            c.tail_energy.map(|v| v.to_string()).unwrap_or_default(),
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| invalid(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| invalid(format!("csv: {e}")))
}

fn fmt_p(p: Option<f64>) -> String {
    match p {
        Some(p) if p < 1e-3 => format!("{p:.1e}"),
        Some(p) => format!("{p:.3}"),
        None => "n/a".into(),
    }
}

/// NLL table (mean and error bar per horizon), then the significance tests
/// and the collapse exponents.
pub fn to_markdown(report: &EvalReport) -> Result<String> {
    check(report)?;
    let mut s = String::new();
    let _ = write!(s, "| Model | Conv params |");
    for t in &report.horizons {
        let _ = write!(s, " NLL T={t} |");
    }
    s.push_str("\n|---|---:|");
    for _ in &report.horizons {
        s.push_str("---:|");
    }
    s.push('\n');
    for m in &report.models {
        let Some(first) = report.rows.iter().find(|r| &r.model == m) else {
            continue;
        };
        let _ = write!(s, "| {} | {} |", first.label, first.conv_params);
        for &t in &report.horizons {
            match report.row(m, t) {
                Some(r) => {
                    let _ = write!(s, " {:.4} ± {:.4} |", r.mean_nll, r.error_bar);
                }
                None => s.push_str(" n/a |"),
            }
        }
        s.push('\n');
    }

    if !report.comparisons.is_empty() {
        s.push_str("\n| Family | Reference | Candidate | T | ΔNLL | p | Holm p | Reject |\n");
        s.push_str("|---|---|---|---:|---:|---:|---:|---|\n");
        for c in &report.comparisons {
            let family = match c.family {
                Family::Comparison => "comparison",
                Family::Ablation => "ablation",
            };
            let _ = writeln!(
                s,
                "| {family} | {} | {} | {} | {:+.4} | {} | {} | {} |",
                c.reference,
                c.candidate,
                c.horizon,
                c.delta_nll,
                fmt_p(c.test.as_ref().map(|t| t.p_value)),
                fmt_p(c.holm_adjusted),
                if c.reject { "yes" } else { "no" }
            );
        }
    }

    if report.empirical_collapse.is_some() || !report.model_collapse.is_empty() {
        s.push_str("\n| Collapse | H* | C* |\n|---|---:|---:|\n");
        for r in report.empirical_collapse.iter().chain(&report.model_collapse) {
            let _ = writeln!(s, "| {} | {:.4} | {:.5} |", r.model, r.h_star, r.c_star);
        }
    }
    Ok(s)
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `report.json`, `cells.csv` and `report.md` into `dir`.
pub fn write_all(report: &EvalReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    write(&dir.join("report.json"), &to_json(report)?)?;
    write(&dir.join("cells.csv"), &to_csv(report)?)?;
    write(&dir.join("report.md"), &to_markdown(report)?)
}
