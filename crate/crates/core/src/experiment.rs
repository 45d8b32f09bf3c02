//! Full experiment runs driven by a TOML config.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::continuity::{apply_window, check_explainer_continuity, evaluate_maps, explain_series, frame_confidences, Direction, Mode, SeriesEvaluation, Window};
use crate::error::{Error, Result};
use crate::explain::{save_maps, ExplainerConfig, ExplainerId, MapArchive, ModelRef};
use crate::image::{read_file, write_atomic};
use crate::metrics::DistanceKind;
use crate::nn::{accuracy, encode_model, load_model, train, Architecture, EpochLog, ModelSnapshot, Optimizer, TrainConfig};
use crate::report::{build_table, emit_table, relational_plot, saliency_strip, ContinuityReport, PlotOptions, Provenance};
use crate::shapegen::{make_contrast_series, make_rotation_series, make_training_set, make_transition_series, save_labeled, save_series, SeriesKind, ShapeSpec, VariationSeries, CANVAS};

pub const MANIFEST_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub explainers: Vec<ExplainerId>,
    pub distances: Vec<DistanceKind>,
    pub modes: Vec<Mode>,
    /// Seed for every stochastic explainer.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_stride")]
    pub strip_stride: usize,
    pub model: ModelSection,
    #[serde(default)]
    pub explainer_settings: ExplainerConfig,
    pub series: Vec<SeriesSection>,
}

fn default_stride() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// Load this model instead of training; relative to the config file.
    pub path: Option<PathBuf>,
    pub n_per_class: usize,
    pub test_per_class: usize,
    pub data_seed: u64,
    pub test_seed: u64,
    pub init_seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub train_seed: u64,
    pub optimizer: Optimizer,
}

impl Default for ModelSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            path: None,
            n_per_class: 500,
            test_per_class: 50,
            data_seed: 1,
            test_seed: 1001,
            init_seed: 1,
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            train_seed: 1,
            optimizer: t.optimizer,
        }
    }
}

impl ModelSection {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { epochs: self.epochs, batch_size: self.batch_size, learning_rate: self.learning_rate, seed: self.train_seed, optimizer: self.optimizer }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaseShape {
    Triangle,
    Circle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesSection {
    pub id: String,
    pub kind: SeriesKind,
    /// Defaults to the circle for transitions and the triangle otherwise.
    #[serde(default)]
    pub shape: Option<BaseShape>,
    #[serde(default = "default_frames")]
    pub frames: usize,
    #[serde(default)]
    pub total_deg: Option<f64>,
    /// `A:B` frame range used for verdicts and tables.
    #[serde(default)]
    pub window: Option<String>,
    #[serde(default = "default_direction")]
    pub expected: Direction,
}

fn default_frames() -> usize {
    100
}

fn default_direction() -> Direction {
    Direction::Increasing
}

impl SeriesSection {
    pub fn generate(&self) -> Result<VariationSeries<f32>> {
        let shape = self.shape.unwrap_or(if self.kind == SeriesKind::Transition { BaseShape::Circle } else { BaseShape::Triangle });
        let base = match shape {
            BaseShape::Triangle => ShapeSpec::triangle(),
            BaseShape::Circle => ShapeSpec::circle(),
        };
        match self.kind {
            SeriesKind::Rotation => make_rotation_series(&base, self.frames, self.total_deg.unwrap_or(120.0)),
            SeriesKind::Contrast => make_contrast_series(&base, self.frames),
            SeriesKind::Transition => make_transition_series(&base, self.frames),
        }
    }

    pub fn window(&self) -> Result<Option<Window>> {
        self.window.as_deref().map(Window::parse).transpose()
    }
}

fn config_error(path: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::Config { path: path.into(), reason: reason.into() }
}

/// Deserializes TOML, reporting failures with the offending key path.
pub fn from_toml<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    serde_path_to_error::deserialize(toml::Deserializer::new(text)).map_err(|e| {
        let path = e.path().to_string();
        config_error(if path == "." { String::new() } else { path }, e.into_inner().message().trim().to_string())
    })
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = from_toml(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = read_file(path)?;
        let text = String::from_utf8(bytes).map_err(|_| Error::corrupt(path, "config is not UTF-8"))?;
        Self::parse(&text)
    }

    fn validate(&self) -> Result<()> {
        for (key, empty) in [("explainers", self.explainers.is_empty()), ("distances", self.distances.is_empty()), ("modes", self.modes.is_empty()), ("series", self.series.is_empty())] {
            if empty {
                return Err(config_error(key, "must not be empty"));
            }
        }
        if self.strip_stride == 0 {
            return Err(config_error("strip_stride", "must be at least 1"));
        }
        let mut ids = BTreeSet::new();
        for (i, s) in self.series.iter().enumerate() {
            if s.id.is_empty() || !s.id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
                return Err(config_error(format!("series[{i}].id"), "use letters, digits, '-' or '_'"));
            }
            if !ids.insert(&s.id) {
                return Err(config_error(format!("series[{i}].id"), format!("duplicate id `{}`", s.id)));
            }
            let w = s.window().map_err(|e| config_error(format!("series[{i}].window"), e.to_string()))?;
            if let Some(w) = w {
                if w.start != 0 || w.end < 2 || w.end >= s.frames {
                    return Err(config_error(format!("series[{i}].window"), "must start at 0, span at least 3 frames and stay within the series"));
                }
            }
        }
        Ok(())
    }

    pub fn explainer_config(&self) -> ExplainerConfig {
        self.explainer_settings.clone().with_seed(self.seed)
    }

    fn fingerprint(&self) -> Result<String> {
        Ok(hex(&Sha256::digest(serde_json::to_vec(self)?)))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelLog {
    pub epochs: Vec<EpochLog>,
    pub train_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub name: String,
    pub tool_version: String,
    pub config_sha256: String,
    pub model_sha256: String,
    pub explainer_seed: u64,
    pub created_unix: u64,
    pub outputs: Vec<String>,
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub up_to_date: bool,
    pub manifest: Manifest,
}

/// Progress lines for callers that want them.
pub trait Progress {
    fn step(&self, message: &str);
}

impl<F: Fn(&str)> Progress for F {
    fn step(&self, message: &str) {
        self(message)
    }
}

fn read_manifest(out: &Path) -> Option<Manifest> {
    serde_json::from_slice(&std::fs::read(out.join("manifest.json")).ok()?).ok()
}

/// Generates data, trains or loads the model, explains every series and
/// writes evaluations, tables, plots and strips under `out`. A complete run
/// with the same config is left untouched.
pub fn run_experiment(cfg: &ExperimentConfig, config_dir: &Path, out: &Path, progress: &dyn Progress) -> Result<RunSummary> {
    let fingerprint = cfg.fingerprint()?;
    if let Some(m) = read_manifest(out) {
        if m.complete && m.config_sha256 == fingerprint && m.outputs.iter().all(|p| out.join(p).exists()) {
            progress.step("outputs are up to date");
            return Ok(RunSummary { up_to_date: true, manifest: m });
        }
    }
    let _ = std::fs::remove_file(out.join("manifest.json"));
    let mut outputs = Vec::new();
    let mut record = |p: String| outputs.push(p);

    let (model, log) = prepare_model(cfg, config_dir, out, progress, &mut record)?;
    let model_bytes = encode_model(&model)?;
    let model_sha = hex(&Sha256::digest(&model_bytes));
    write_atomic(&out.join("model/model.scmn"), &model_bytes)?;
    record("model/model.scmn".into());
    write_json(&out.join("model/train_log.json"), &log)?;
    record("model/train_log.json".into());

    let ecfg = cfg.explainer_config();
    let provenance = Provenance::new(model_sha.clone(), cfg.seed, serde_json::to_value(cfg)?);
    let mut report = ContinuityReport { provenance, runs: Vec::new() };
    let mut plotted: Vec<(String, Vec<SeriesEvaluation>)> = Vec::new();

    for s in &cfg.series {
        progress.step(&format!("series {}: generating {} frames", s.id, s.frames));
        let series = s.generate()?;
        save_series(&series, &out.join("datasets").join(&s.id))?;
        record(format!("datasets/{}/manifest.json", s.id));
        let confidences = frame_confidences(ModelRef::Builtin(&model), &series)?;
        let mut evals = Vec::new();
        for &id in &cfg.explainers {
            progress.step(&format!("series {}: {}", s.id, id.display_name()));
            let maps = explain_series(ModelRef::Builtin(&model), &series, id, &ecfg)?;
            let archive = MapArchive { explainer_id: id.key().into(), config: ecfg.echo(id), seed: ecfg.seed(id), maps };
            let stem = id.key();
            save_maps(&out.join("saliency").join(&s.id), stem, &archive)?;
            record(format!("saliency/{}/{stem}.json", s.id));
            let strip = saliency_strip(&archive.maps, cfg.strip_stride)?;
            let strip_path = format!("strips/{}__{stem}.pgm", s.id);
            write_atomic(&out.join(&strip_path), &strip.to_pgm())?;
            record(strip_path);

            let eval = evaluate_maps(&s.id, id, &series, confidences.clone(), &archive.maps, &cfg.distances, &ecfg)?;
            let eval_path = format!("evaluations/{}__{stem}.json", s.id);
            eval.save(&out.join(&eval_path))?;
            record(eval_path);
            let windowed = match s.window()? {
                Some(w) => apply_window(&eval, w.start..=w.end)?,
                None => eval.clone(),
            };
            for &mode in &cfg.modes {
                report.runs.push(check_explainer_continuity(&windowed, mode, s.expected)?);
            }
            evals.push(eval);
        }
        plotted.push((s.id.clone(), evals));
    }

    for (series_id, evals) in &plotted {
        for &mode in &cfg.modes {
            let stem = format!("{series_id}__{}", mode.key());
            let doc = build_table(&report, series_id, mode)?;
            emit_table(&doc, &out.join("tables"), &stem)?;
            record(format!("tables/{stem}.csv"));
            record(format!("tables/{stem}.json"));
            let svg = relational_plot(evals, mode, &PlotOptions::default())?;
            write_atomic(&out.join(format!("plots/{stem}.svg")), svg.as_bytes())?;
            record(format!("plots/{stem}.svg"));
        }
    }
    write_json(&out.join("report.json"), &report)?;
    record("report.json".into());

    let created_unix = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let manifest = Manifest {
        format_version: MANIFEST_FORMAT_VERSION,
        name: cfg.name.clone(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_sha256: fingerprint,
        model_sha256: model_sha,
        explainer_seed: cfg.seed,
        created_unix,
        outputs,
        complete: true,
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    progress.step("done");
    Ok(RunSummary { up_to_date: false, manifest })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

fn prepare_model(cfg: &ExperimentConfig, config_dir: &Path, out: &Path, progress: &dyn Progress, record: &mut dyn FnMut(String)) -> Result<(ModelSnapshot<f32>, ModelLog)> {
    let m = &cfg.model;
    if let Some(path) = &m.path {
        let model = load_model(&config_dir.join(path))?;
        return Ok((model, ModelLog { epochs: Vec::new(), train_accuracy: None, test_accuracy: None }));
    }
    progress.step(&format!("generating {}+{} training shapes", m.n_per_class, m.n_per_class));
    let data = make_training_set::<f32>(m.n_per_class, m.data_seed)?;
    save_labeled(&data, &out.join("datasets/train"))?;
    record("datasets/train/manifest.json".into());
    let test = if m.test_per_class > 0 {
        let t = make_training_set::<f32>(m.test_per_class, m.test_seed)?;
        save_labeled(&t, &out.join("datasets/test"))?;
        record("datasets/test/manifest.json".into());
        Some(t)
    } else {
        None
    };
    progress.step("training");
    let init = ModelSnapshot::init(Architecture::new(CANVAS, CANVAS)?, m.init_seed);
    let outcome = train(&init, &data, &m.train_config())?;
    let test_accuracy = test.as_ref().map(|t| accuracy(&outcome.model, t)).transpose()?;
    if let Some(a) = test_accuracy {
        progress.step(&format!("held-out accuracy {:.3}", a));
    }
    Ok((outcome.model, ModelLog { epochs: outcome.log, train_accuracy: Some(outcome.final_accuracy), test_accuracy }))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
name = "small"
explainers = ["gradcam", "rise"]
distances = ["msd", "wasserstein"]
modes = ["variation", "confidence"]
seed = 3
strip_stride = 2

[model]
n_per_class = 10
test_per_class = 2
epochs = 2

[explainer_settings.rise]
n_masks = 10

[[series]]
id = "rot"
kind = "rotation"
frames = 6
window = "0:4"

[[series]]
id = "fade"
kind = "contrast"
frames = 5
expected = "decreasing"
"#;

    #[test]
    fn unknown_explainer_names_its_key() {
        let bad = SMALL.replace(r#"["gradcam", "rise"]"#, r#"["gradcam", "lrp"]"#);
        match ExperimentConfig::parse(&bad) {
            Err(Error::Config { path, reason }) => {
                assert_eq!(path, "explainers[1]");
                assert!(reason.contains("lrp"), "{reason}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected_with_path() {
        let bad = SMALL.replace("n_masks = 10", "n_masks = 10\nmask_count = 4");
        match ExperimentConfig::parse(&bad) {
            Err(Error::Config { path, reason }) => {
                assert_eq!(path, "explainer_settings.rise.mask_count");
                assert!(reason.contains("mask_count"), "{reason}");
            }
            other => panic!("{other:?}"),
        }
        let bad = SMALL.replace(r#"window = "0:4""#, r#"window = "1:4""#);
        assert!(matches!(ExperimentConfig::parse(&bad), Err(Error::Config { path, .. }) if path == "series[0].window"));
    }

    #[test]
    fn small_run_writes_outputs_and_reruns_as_no_op() {
        let cfg = ExperimentConfig::parse(SMALL).unwrap();
        assert_eq!(cfg.explainer_config().rise.n_masks, 10);
        assert_eq!(cfg.explainer_config().rise.seed, 3);
        let dir = tempfile::tempdir().unwrap();
        let first = run_experiment(&cfg, Path::new("."), dir.path(), &|_: &str| {}).unwrap();
        assert!(!first.up_to_date);
        for stem in ["rot__variation", "rot__confidence", "fade__variation"] {
            assert!(dir.path().join(format!("tables/{stem}.csv")).exists());
            assert!(dir.path().join(format!("plots/{stem}.svg")).exists());
        }
        let csv = std::fs::read_to_string(dir.path().join("tables/rot__variation.csv")).unwrap();
        assert!(csv.starts_with("Correlation,Metric,GradCAM,RISE\n"));
        let before = std::fs::read(dir.path().join("manifest.json")).unwrap();
        let again = run_experiment(&cfg, Path::new("."), dir.path(), &|_: &str| {}).unwrap();
        assert!(again.up_to_date);
        assert_eq!(std::fs::read(dir.path().join("manifest.json")).unwrap(), before);
    }
}
