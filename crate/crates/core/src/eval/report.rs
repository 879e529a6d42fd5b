use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::matrix::{summarize, CellRecord, ExperimentResult, MarginalRow, Summary};

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub const CELLS_FILE: &str = "cells.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const SUMMARY_MD: &str = "summary.md";

pub fn cells_csv(cells: &[CellRecord]) -> Result<Vec<u8>, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for c in cells {
        w.serialize(c)?;
    }
    w.into_inner().map_err(|e| ReportError::Io(e.into_error()))
}

pub fn read_cells_csv(bytes: &[u8]) -> Result<Vec<CellRecord>, ReportError> {
    let mut r = csv::Reader::from_reader(bytes);
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

fn fmt_ratio(r: Option<f64>) -> String {
    r.map_or("n/a".into(), |r| format!("{r:.2}"))
}

fn table(out: &mut String, title: &str, rows: &[MarginalRow]) {
    let _ = writeln!(out, "## {title}\n");
    let _ = writeln!(out, "| | AVIL | baseline | ratio | trials |");
    let _ = writeln!(out, "|---|---|---|---|---|");
    for r in rows {
        let _ = writeln!(
            out,
            "| {} | {:.3} | {:.3} | {} | {} |",
            r.key,
            r.avil,
            r.baseline,
            fmt_ratio(r.ratio),
            r.trials
        );
    }
    out.push('\n');
}

pub fn summary_markdown(s: &Summary) -> String {
    let mut out = String::from("# Evaluation summary\n\n");
    let _ = writeln!(
        out,
        "{} cells per method. Marginals use the bare-table scene; means are over the remaining factors and trials.\n",
        s.cells_per_method
    );
    table(&mut out, "Overall", std::slice::from_ref(&s.overall));
    table(&mut out, "Per bowl", &s.per_bowl);
    table(&mut out, "Per food", &s.per_food);
    table(&mut out, "Per position", &s.per_position);
    table(&mut out, "Overall with distractors", std::slice::from_ref(&s.overall_distractors));
    let _ = writeln!(out, "## Distractors (AVIL, TG at P1)\n");
    let _ = writeln!(out, "| food | scene 1 | scene 2 | trials |");
    let _ = writeln!(out, "|---|---|---|---|");
    for r in &s.scene_comparison {
        let _ = writeln!(out, "| {} | {:.3} | {:.3} | {} |", r.food, r.scene1, r.scene2, r.trials);
    }
    out
}

/// Write `cells.csv`, `summary.json` and `summary.md` into `dir`.
pub fn write_report(result: &ExperimentResult, dir: &Path) -> Result<Summary, ReportError> {
    fs::create_dir_all(dir)?;
    let summary = summarize(&result.cells);
    fs::write(dir.join(CELLS_FILE), cells_csv(&result.cells)?)?;
    fs::write(dir.join(SUMMARY_JSON), serde_json::to_string_pretty(&summary)?)?;
    fs::write(dir.join(SUMMARY_MD), summary_markdown(&summary))?;
    Ok(summary)
}
