//! Runs an explainer over a variation series and turns the resulting
//! saliency distances into monotonicity verdicts.

use std::collections::BTreeMap;
use std::ops::RangeInclusive;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explain::{explain, normalize_map, ExplainerConfig, ExplainerId, ModelRef, SaliencyMap};
use crate::image::{read_file, write_atomic};
use crate::metrics::{kendall, CorrelationMethod, CorrelationResult, DistanceKind};
use crate::scalar::Scalar;
use crate::shapegen::VariationSeries;

pub const EVALUATION_FORMAT_VERSION: u32 = 1;

/// What the saliency distances are correlated against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    /// x = θ
    #[serde(rename = "variation")]
    VariationIndexed,
    /// x = |conf_i − conf_0|
    #[serde(rename = "confidence")]
    ConfidenceIndexed,
}

impl Mode {
    pub fn key(self) -> &'static str {
        match self {
            Mode::VariationIndexed => "variation",
            Mode::ConfidenceIndexed => "confidence",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "variation" | "variation_indexed" => Ok(Mode::VariationIndexed),
            "confidence" | "confidence_indexed" => Ok(Mode::ConfidenceIndexed),
            other => Err(Error::InvalidArgument(format!("unknown mode `{other}`"))),
        }
    }
}

/// Inclusive frame-index range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: usize,
    pub end: usize,
}

impl Window {
    /// Parses `A:B`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("window `{s}` is not of the form A:B"));
        let (a, b) = s.split_once(':').ok_or_else(bad)?;
        Ok(Self { start: a.trim().parse().map_err(|_| bad())?, end: b.trim().parse().map_err(|_| bad())? })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesEvaluation {
    pub format_version: u32,
    pub series_id: String,
    pub explainer_id: String,
    pub thetas: Vec<f64>,
    pub confidences: Vec<f64>,
    /// Distance of each frame's normalized map to frame 0's.
    pub distances: BTreeMap<DistanceKind, Vec<f64>>,
    pub confidence_changes: Vec<f64>,
    /// Pixel MSD of each frame to the reference image.
    pub image_msd: Vec<f64>,
    pub empty: Vec<bool>,
    pub window: Option<Window>,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
}

impl SeriesEvaluation {
    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    pub fn axis(&self, mode: Mode) -> &[f64] {
        match mode {
            Mode::VariationIndexed => &self.thetas,
            Mode::ConfidenceIndexed => &self.confidence_changes,
        }
    }

    pub fn empty_count(&self) -> usize {
        self.empty.iter().filter(|&&e| e).count()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        write_atomic(path, &bytes)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let eval: Self = serde_json::from_slice(&read_file(path)?).map_err(|e| Error::corrupt(path, e.to_string()))?;
        if eval.format_version != EVALUATION_FORMAT_VERSION {
            return Err(Error::Version(format!("evaluation version {}", eval.format_version)));
        }
        let n = eval.len();
        if eval.confidences.len() != n || eval.confidence_changes.len() != n || eval.distances.values().any(|d| d.len() != n) {
            return Err(Error::corrupt(path, "per-frame lists differ in length"));
        }
        Ok(eval)
    }
}

/// One saliency map per frame. A failing frame aborts with its index.
pub fn explain_series<S: Scalar>(model: ModelRef<'_, S>, series: &VariationSeries<S>, id: ExplainerId, cfg: &ExplainerConfig) -> Result<Vec<SaliencyMap<S>>> {
    series
        .frames()
        .par_iter()
        .enumerate()
        .map(|(i, frame)| explain(model, frame, id, cfg).map_err(|e| Error::Frame { frame: i, source: Box::new(e) }))
        .collect()
}

/// Assembles an evaluation from precomputed confidences and maps.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_maps<S: Scalar>(
    series_id: &str,
    id: ExplainerId,
    series: &VariationSeries<S>,
    confidences: Vec<f64>,
    maps: &[SaliencyMap<S>],
    kinds: &[DistanceKind],
    cfg: &ExplainerConfig,
) -> Result<SeriesEvaluation> {
    let n = series.len();
    if confidences.len() != n || maps.len() != n {
        return Err(Error::dims(format!("{n} frames"), format!("{} confidences, {} maps", confidences.len(), maps.len())));
    }
    let normalized = maps.iter().map(normalize_map).collect::<Result<Vec<_>>>()?;
    let mut distances = BTreeMap::new();
    for &kind in kinds {
        let d = normalized.iter().map(|m| kind.between(m, &normalized[0])).collect::<Result<Vec<_>>>()?;
        distances.insert(kind, d);
    }
    let c0 = confidences[0];
    Ok(SeriesEvaluation {
        format_version: EVALUATION_FORMAT_VERSION,
        series_id: series_id.to_string(),
        explainer_id: id.key().to_string(),
        thetas: series.thetas().to_vec(),
        confidence_changes: confidences.iter().map(|c| (c - c0).abs()).collect(),
        confidences,
        distances,
        image_msd: series.image_distances(),
        empty: maps.iter().map(|m| m.empty).collect(),
        window: None,
        seed: cfg.seed(id),
        config: cfg.echo(id),
    })
}

pub fn frame_confidences<S: Scalar>(model: ModelRef<'_, S>, series: &VariationSeries<S>) -> Result<Vec<f64>> {
    series.frames().par_iter().map(|f| model.confidence(f)).collect()
}

/// Confidences, maps and reference-anchored distances for every frame.
pub fn evaluate_series<S: Scalar>(
    model: ModelRef<'_, S>,
    series_id: &str,
    series: &VariationSeries<S>,
    id: ExplainerId,
    cfg: &ExplainerConfig,
    kinds: &[DistanceKind],
) -> Result<SeriesEvaluation> {
    let confidences = frame_confidences(model, series)?;
    let maps = explain_series(model, series, id, cfg)?;
    evaluate_maps(series_id, id, series, confidences, &maps, kinds, cfg)
}

/// Restricts to frames `range`, which must start at the reference frame 0.
pub fn apply_window(eval: &SeriesEvaluation, range: RangeInclusive<usize>) -> Result<SeriesEvaluation> {
    let (start, end) = (*range.start(), *range.end());
    if start != 0 {
        return Err(Error::InvalidArgument(format!("window {start}:{end} excludes the reference frame 0")));
    }
    if end >= eval.len() {
        return Err(Error::InvalidArgument(format!("window end {end} beyond the last frame {}", eval.len().saturating_sub(1))));
    }
    if end + 1 < 3 {
        return Err(Error::InvalidArgument(format!("window {start}:{end} has fewer than 3 frames")));
    }
    if end + 1 == eval.len() {
        return Ok(eval.clone());
    }
    let cut = |v: &[f64]| v[..=end].to_vec();
    Ok(SeriesEvaluation {
        thetas: cut(&eval.thetas),
        confidences: cut(&eval.confidences),
        distances: eval.distances.iter().map(|(k, v)| (*k, cut(v))).collect(),
        confidence_changes: cut(&eval.confidence_changes),
        image_msd: cut(&eval.image_msd),
        empty: eval.empty[..=end].to_vec(),
        window: Some(Window { start, end }),
        ..eval.clone()
    })
}

/// Direction in which confidence should move along the series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Increasing,
    Decreasing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorStatus {
    Continuous,
    NotContinuous,
    Indeterminate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorCheck {
    pub correlation: Option<CorrelationResult>,
    pub expected: Direction,
    pub status: PredictorStatus,
}

/// Kendall τ of confidence against θ; continuous when significant and in the
/// expected direction.
pub fn check_predictor_continuity(eval: &SeriesEvaluation, expected: Direction) -> Result<PredictorCheck> {
    match kendall(&eval.thetas, &eval.confidences) {
        Ok(r) => {
            let agrees = match expected {
                Direction::Increasing => r.coefficient > 0.0,
                Direction::Decreasing => r.coefficient < 0.0,
            };
            let status = if r.significant && agrees { PredictorStatus::Continuous } else { PredictorStatus::NotContinuous };
            Ok(PredictorCheck { correlation: Some(r), expected, status })
        }
        Err(Error::UndefinedCorrelation(_)) => Ok(PredictorCheck { correlation: None, expected, status: PredictorStatus::Indeterminate }),
        Err(e) => Err(e),
    }
}

/// A table cell: the correlation, or `None` when undefined (constant input).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationCell {
    pub method: CorrelationMethod,
    pub distance: DistanceKind,
    pub result: Option<CorrelationResult>,
}

impl CorrelationCell {
    /// Three-decimal coefficient, or "-" when undefined or p ≥ 0.05.
    pub fn display(&self) -> String {
        match &self.result {
            Some(r) if r.significant => format!("{:.3}", r.coefficient),
            _ => "-".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuityVerdict {
    pub mode: Mode,
    pub series_id: String,
    pub explainer_id: String,
    pub correlations: Vec<CorrelationCell>,
    /// Fraction of frame pairs whose distance order matches the x order.
    pub concordant_pairs: BTreeMap<DistanceKind, f64>,
    pub predictor: PredictorCheck,
    pub notes: Vec<String>,
    pub verdict: String,
}

impl ContinuityVerdict {
    pub fn cell(&self, method: CorrelationMethod, distance: DistanceKind) -> Option<&CorrelationCell> {
        self.correlations.iter().find(|c| c.method == method && c.distance == distance)
    }
}

/// Share of pairs (i, j) with x_i < x_j ⇒ d_i < d_j and x_i = x_j ⇒ d_i = d_j.
pub fn concordant_fraction(x: &[f64], d: &[f64]) -> f64 {
    let n = x.len().min(d.len());
    let (mut good, mut total) = (0usize, 0usize);
    for i in 0..n {
        for j in i + 1..n {
            total += 1;
            if x[i].partial_cmp(&x[j]) == d[i].partial_cmp(&d[j]) {
                good += 1;
            }
        }
    }
    if total == 0 {
        1.0
    } else {
        good as f64 / total as f64
    }
}

pub fn check_explainer_continuity(eval: &SeriesEvaluation, mode: Mode, expected: Direction) -> Result<ContinuityVerdict> {
    let x = eval.axis(mode);
    let mut correlations = Vec::new();
    let mut concordant_pairs = BTreeMap::new();
    let mut notes = Vec::new();
    for (&kind, d) in &eval.distances {
        if d.len() != x.len() {
            return Err(Error::dims(x.len(), d.len()));
        }
        concordant_pairs.insert(kind, concordant_fraction(x, d));
        if d.iter().all(|v| *v == d[0]) {
            notes.push(format!("{} distances are constant", kind.name()));
        }
    }
    for method in CorrelationMethod::ALL {
        for (&kind, d) in &eval.distances {
            let result = match method.compute(x, d) {
                Ok(r) => Some(r),
                Err(Error::UndefinedCorrelation(_)) => None,
                Err(e) => return Err(e),
            };
            correlations.push(CorrelationCell { method, distance: kind, result });
        }
    }
    let predictor = check_predictor_continuity(eval, expected)?;
    if predictor.status == PredictorStatus::Indeterminate {
        notes.push("confidence is constant".into());
    }
    if eval.empty_count() > 0 {
        notes.push(format!("{} empty explanations", eval.empty_count()));
    }
    if let Some(w) = eval.window {
        notes.push(format!("window {}:{}", w.start, w.end));
    }
    let positive = correlations.iter().filter(|c| c.result.is_some_and(|r| r.positive())).count();
    let name = ExplainerId::parse(&eval.explainer_id).map(|e| e.display_name()).unwrap_or(&eval.explainer_id);
    let verdict = if positive == 0 {
        format!("{name}: no significant positive monotonicity against {}", mode.key())
    } else {
        format!("{name}: {positive}/{} correlations significant and positive against {}", correlations.len(), mode.key())
    };
    Ok(ContinuityVerdict {
        mode,
        series_id: eval.series_id.clone(),
        explainer_id: eval.explainer_id.clone(),
        correlations,
        concordant_pairs,
        predictor,
        notes,
        verdict,
    })
}
