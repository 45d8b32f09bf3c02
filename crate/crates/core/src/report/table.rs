use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ContinuityReport, Provenance};
use crate::continuity::{ContinuityVerdict, Mode};
use crate::error::{Error, Result};
use crate::explain::ExplainerId;
use crate::image::write_atomic;
use crate::metrics::{CorrelationMethod, DistanceKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableCell {
    pub explainer: String,
    /// Three decimals, or "-" when p ≥ 0.05 or undefined.
    pub display: String,
    pub coefficient: Option<f64>,
    pub p_value: Option<f64>,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub method: CorrelationMethod,
    pub distance: DistanceKind,
    pub cells: Vec<TableCell>,
    /// Explainer holding the row's highest significant coefficient.
    pub highlight: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationTable {
    pub series_id: String,
    pub mode: Mode,
    pub explainers: Vec<String>,
    pub rows: Vec<TableRow>,
}

/// What the JSON table file holds: enough to rebuild the table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableDocument {
    pub provenance: Provenance,
    pub table: CorrelationTable,
    pub runs: Vec<ContinuityVerdict>,
}

fn display_name(key: &str) -> String {
    ExplainerId::parse(key).map(|e| e.display_name().to_string()).unwrap_or_else(|_| key.to_string())
}

/// Rows (method × distance) by columns (explainers) for one series and mode.
pub fn build_table(report: &ContinuityReport, series_id: &str, mode: Mode) -> Result<TableDocument> {
    let runs: Vec<ContinuityVerdict> = report.runs.iter().filter(|v| v.series_id == series_id && v.mode == mode).cloned().collect();
    if runs.is_empty() {
        return Err(Error::InvalidArgument(format!("no results for series `{series_id}` in {} mode", mode.key())));
    }
    let distances: Vec<DistanceKind> = DistanceKind::ALL.into_iter().filter(|d| runs.iter().any(|v| v.correlations.iter().any(|c| c.distance == *d))).collect();
    let mut rows = Vec::new();
    for method in CorrelationMethod::ALL {
        for &distance in &distances {
            let cells: Vec<TableCell> = runs
                .iter()
                .map(|v| {
                    let cell = v.cell(method, distance);
                    let result = cell.and_then(|c| c.result);
                    TableCell {
                        explainer: v.explainer_id.clone(),
                        display: cell.map_or_else(|| "-".to_string(), |c| c.display()),
                        coefficient: result.map(|r| r.coefficient),
                        p_value: result.map(|r| r.p_value),
                        significant: result.is_some_and(|r| r.significant),
                    }
                })
                .collect();
            let highlight = cells
                .iter()
                .filter(|c| c.significant)
                .fold(None::<&TableCell>, |best, c| match best {
                    Some(b) if b.coefficient >= c.coefficient => Some(b),
                    _ => Some(c),
                })
                .map(|c| c.explainer.clone());
            rows.push(TableRow { method, distance, cells, highlight });
        }
    }
    let table = CorrelationTable {
        series_id: series_id.to_string(),
        mode,
        explainers: runs.iter().map(|v| v.explainer_id.clone()).collect(),
        rows,
    };
    Ok(TableDocument { provenance: report.provenance.clone(), table, runs })
}

impl CorrelationTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("Correlation,Metric");
        for e in &self.explainers {
            out.push(',');
            out.push_str(&display_name(e));
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(row.method.name());
            out.push(',');
            out.push_str(row.distance.name());
            for c in &row.cells {
                out.push(',');
                out.push_str(&c.display);
            }
            out.push('\n');
        }
        out
    }
}

/// Writes `<stem>.csv` and `<stem>.json`.
pub fn emit_table(doc: &TableDocument, dir: &Path, stem: &str) -> Result<()> {
    if doc.table.rows.is_empty() || doc.table.explainers.is_empty() {
        return Err(Error::InvalidArgument("empty table".into()));
    }
    write_atomic(&dir.join(format!("{stem}.csv")), doc.table.to_csv().as_bytes())?;
    let mut json = serde_json::to_vec_pretty(doc)?;
    json.push(b'\n');
    write_atomic(&dir.join(format!("{stem}.json")), &json)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::continuity::{check_explainer_continuity, Direction, SeriesEvaluation, EVALUATION_FORMAT_VERSION};

    fn eval(explainer: &str, d: Vec<f64>) -> SeriesEvaluation {
        let n = d.len();
        let thetas: Vec<f64> = (0..n).map(|i| i as f64).collect();
        SeriesEvaluation {
            format_version: EVALUATION_FORMAT_VERSION,
            series_id: "rotation".into(),
            explainer_id: explainer.into(),
            confidences: thetas.iter().map(|t| 0.5 + t / 100.0).collect(),
            confidence_changes: thetas.iter().map(|t| t / 100.0).collect(),
            thetas,
            distances: DistanceKind::ALL.iter().map(|&k| (k, d.clone())).collect(),
            image_msd: vec![0.0; n],
            empty: vec![false; n],
            window: None,
            seed: Some(1),
            config: serde_json::json!({}),
        }
    }

    fn report() -> ContinuityReport {
        let up: Vec<f64> = (0..12).map(|i| (i as f64).powf(1.3)).collect();
        let runs = vec![
            check_explainer_continuity(&eval("gradcam", up.clone()), Mode::VariationIndexed, Direction::Increasing).unwrap(),
            check_explainer_continuity(&eval("rise", up.iter().map(|v| v * 0.5 + 0.1 * (v * 7.0).sin()).collect()), Mode::VariationIndexed, Direction::Increasing).unwrap(),
            check_explainer_continuity(&eval("lime", vec![0.0; 12]), Mode::VariationIndexed, Direction::Increasing).unwrap(),
        ];
        ContinuityReport { provenance: Provenance::new("abc", 1, serde_json::json!({"k": 1.5})), runs }
    }

    #[test]
    fn layout_and_dashes() {
        let doc = build_table(&report(), "rotation", Mode::VariationIndexed).unwrap();
        let csv = doc.table.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "Correlation,Metric,GradCAM,RISE,LIME");
        assert_eq!(lines.len(), 7);
        assert!(lines[1].starts_with("Kendall,Wasserstein,1.000,"));
        assert!(lines[1..].iter().all(|l| l.ends_with(",-")));
        assert!(lines[1..].iter().all(|l| l.split(',').nth(2) != Some("-")));
        assert!(doc.table.rows.iter().all(|r| r.highlight.as_deref() == Some("gradcam")));
    }

    #[test]
    fn dash_iff_not_significant() {
        let doc = build_table(&report(), "rotation", Mode::VariationIndexed).unwrap();
        for c in doc.table.rows.iter().flat_map(|r| &r.cells) {
            assert_eq!(c.display == "-", !c.significant);
        }
    }

    #[test]
    fn json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let doc = build_table(&report(), "rotation", Mode::VariationIndexed).unwrap();
        emit_table(&doc, dir.path(), "t").unwrap();
        let back: TableDocument = serde_json::from_slice(&std::fs::read(dir.path().join("t.json")).unwrap()).unwrap();
        assert_eq!(back, doc);
    }

    #[test]
    fn empty_report_is_an_error() {
        assert!(build_table(&report(), "contrast", Mode::VariationIndexed).is_err());
    }
}
