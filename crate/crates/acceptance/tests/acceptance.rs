//! Prints one PASS/FAIL line per acceptance criterion and exits nonzero if
//! any criterion fails.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use semcont::continuity::{apply_window, check_explainer_continuity, ContinuityVerdict, Mode, SeriesEvaluation};
use semcont::experiment::{run_experiment, ExperimentConfig};
use semcont::metrics::{CorrelationMethod, CorrelationResult, DistanceKind};
use semcont::nn::{accuracy, train, Architecture, ModelSnapshot, TrainConfig};
use semcont::shapegen::{make_training_set, CANVAS};
use semcont_acceptance::cnn::gradient_suite;
use semcont_acceptance::shapley::shapley_suite;
use semcont_acceptance::stats::statistics_suite;
use semcont_acceptance::Check;

fn config_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/paper-repro.toml")
}

fn report(n: u32, title: &str, started: Instant, check: &Check) {
    let status = if check.passed { "PASS" } else { "FAIL" };
    println!("criterion {n} {status}: {title} ({}; {:.1}s)", check.detail, started.elapsed().as_secs_f64());
    let _ = std::io::stdout().flush();
}

fn failed(err: impl std::fmt::Display) -> Check {
    Check::new(false, format!("error: {err}"))
}

fn classifier_accuracy() -> Check {
    let mut accuracies = Vec::new();
    for seed in 1..=5u64 {
        let outcome = make_training_set::<f32>(500, seed).and_then(|data| {
            let init = ModelSnapshot::init(Architecture::new(CANVAS, CANVAS)?, seed);
            let model = train(&init, &data, &TrainConfig { seed, ..TrainConfig::default() })?.model;
            accuracy(&model, &make_training_set::<f32>(50, 1000 + seed)?)
        });
        match outcome {
            Ok(a) => accuracies.push(a),
            Err(e) => return failed(e),
        }
    }
    let listed: Vec<String> = accuracies.iter().map(|a| format!("{:.3}", a)).collect();
    Check::new(accuracies.iter().all(|&a| a >= 0.99), format!("held-out accuracy per seed [{}], need ≥ 0.99", listed.join(", ")))
}

struct Run {
    dir: tempfile::TempDir,
    cfg: ExperimentConfig,
}

impl Run {
    fn execute(cfg: &ExperimentConfig) -> semcont::Result<Run> {
        let dir = tempfile::tempdir().map_err(|e| semcont::Error::InvalidArgument(format!("temp dir: {e}")))?;
        let config_dir = config_path().parent().map(Path::to_path_buf).unwrap_or_default();
        run_experiment(cfg, &config_dir, dir.path(), &|msg: &str| eprintln!("  [run] {msg}"))?;
        Ok(Run { dir, cfg: cfg.clone() })
    }

    fn evaluation(&self, series: &str, explainer: &str) -> semcont::Result<SeriesEvaluation> {
        SeriesEvaluation::load(&self.dir.path().join(format!("evaluations/{series}__{explainer}.json")))
    }

    /// Variation-indexed verdict over the series window from the config.
    fn verdict(&self, series: &str, explainer: &str) -> semcont::Result<ContinuityVerdict> {
        let section = self
            .cfg
            .series
            .iter()
            .find(|s| s.id == series)
            .ok_or_else(|| semcont::Error::InvalidArgument(format!("config has no series `{series}`")))?;
        let eval = self.evaluation(series, explainer)?;
        let eval = match section.window()? {
            Some(w) => apply_window(&eval, w.start..=w.end)?,
            None => eval,
        };
        check_explainer_continuity(&eval, Mode::VariationIndexed, section.expected)
    }
}

fn cell(v: &ContinuityVerdict, method: CorrelationMethod, distance: DistanceKind) -> Option<CorrelationResult> {
    v.cell(method, distance).and_then(|c| c.result)
}

fn coefficient(v: &ContinuityVerdict, method: CorrelationMethod) -> f64 {
    cell(v, method, DistanceKind::Msd).map_or(f64::NAN, |r| r.coefficient)
}

fn rotation_trend(run: &Run) -> semcont::Result<Check> {
    let gradcam = coefficient(&run.verdict("rotation", "gradcam")?, CorrelationMethod::Kendall);
    let rise = coefficient(&run.verdict("rotation", "rise")?, CorrelationMethod::Kendall);
    let lime = run.verdict("rotation", "lime")?;
    let lime_cells: Vec<String> = lime.correlations.iter().map(|c| c.display()).collect();
    let lime_ok = lime.correlations.iter().all(|c| c.result.map_or(true, |r| !r.significant || r.coefficient.abs() < 0.1));
    Ok(Check::new(
        gradcam >= 0.8 && rise >= 0.6 && lime_ok,
        format!(
            "Kendall MSD on frames 0..=25: GradCAM {gradcam:.3} (need ≥ 0.8), RISE {rise:.3} (need ≥ 0.6); LIME cells [{}] (need non-significant or |coef| < 0.1)",
            lime_cells.join(", ")
        ),
    ))
}

fn contrast_trend(run: &Run) -> semcont::Result<Check> {
    let gradcam = run.verdict("contrast-triangle", "gradcam")?;
    let rise = run.verdict("contrast-triangle", "rise")?;
    let spearman = coefficient(&gradcam, CorrelationMethod::Spearman);
    let all_positive = [&gradcam, &rise].iter().all(|v| {
        v.correlations.len() == CorrelationMethod::ALL.len() * DistanceKind::ALL.len()
            && v.correlations.iter().all(|c| c.result.is_some_and(|r| r.significant && r.coefficient > 0.0))
    });
    let weakest = [&gradcam, &rise]
        .iter()
        .flat_map(|v| v.correlations.iter().filter_map(|c| c.result))
        .fold(f64::INFINITY, |m, r| m.min(r.coefficient));
    Ok(Check::new(
        spearman >= 0.9 && all_positive,
        format!("GradCAM Spearman MSD {spearman:.3} (need ≥ 0.9); GradCAM and RISE all significant positive: {all_positive} (weakest {weakest:.3})"),
    ))
}

fn transition_trend(run: &Run) -> semcont::Result<Check> {
    let rise = coefficient(&run.verdict("transition", "rise")?, CorrelationMethod::Kendall);
    Ok(Check::new(rise >= 0.7, format!("RISE Kendall MSD {rise:.3} (need ≥ 0.7)")))
}

fn rotation_period(run: &Run) -> semcont::Result<Check> {
    let eval = run.evaluation("rotation", "gradcam")?;
    let d = &eval.distances[&DistanceKind::Msd];
    let max = d.iter().copied().fold(0.0, f64::max);
    let last = *d.last().unwrap_or(&f64::NAN);
    let theta = *eval.thetas.last().unwrap_or(&f64::NAN);
    let ratio = last / max;
    Ok(Check::new(max > 0.0 && ratio < 0.05, format!("GradCAM MSD at θ={theta:.0}° is {:.2}% of the series maximum (need < 5%)", 100.0 * ratio)))
}

fn tree(dir: &Path, sub: &str) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir.join(sub))
        .map(|entries| {
            entries
                .filter_map(|e| e.ok())
                .map(|e| (format!("{sub}/{}", e.file_name().to_string_lossy()), std::fs::read(e.path()).unwrap_or_default()))
                .collect()
        })
        .unwrap_or_default();
    files.sort();
    files
}

fn determinism(a: &Run, b: &Run) -> Check {
    let (mut compared, mut differing) = (0, Vec::new());
    for sub in ["tables", "plots"] {
        let (left, right) = (tree(a.dir.path(), sub), tree(b.dir.path(), sub));
        if left.len() != right.len() || left.is_empty() {
            return Check::new(false, format!("{sub}: {} files vs {}", left.len(), right.len()));
        }
        for ((name, x), (other, y)) in left.iter().zip(&right) {
            compared += 1;
            if name != other || x != y {
                differing.push(name.clone());
            }
        }
    }
    Check::new(differing.is_empty(), format!("{compared} table and plot files compared, {} differ {:?}", differing.len(), differing))
}

fn main() -> ExitCode {
    let started = Instant::now();
    let mut outcomes = Vec::new();
    let mut record = |n: u32, title: &str, check: Check| {
        report(n, title, started, &check);
        outcomes.push((n, check.passed));
    };

    record(6, "statistics oracles", statistics_suite(20240601));
    record(7, "Shapley oracle", shapley_suite(77));
    record(8, "gradient check", gradient_suite(8));
    record(1, "shape classifier accuracy", classifier_accuracy());

    let cfg = match ExperimentConfig::load(&config_path()) {
        Ok(cfg) => cfg,
        Err(e) => {
            for (n, title) in [(2, "rotation trend"), (3, "contrast trend"), (4, "transition trend"), (5, "rotation periodicity"), (9, "determinism")] {
                record(n, title, failed(&e));
            }
            return ExitCode::FAILURE;
        }
    };
    let first = Run::execute(&cfg);
    match &first {
        Ok(run) => {
            record(2, "rotation trend", rotation_trend(run).unwrap_or_else(failed));
            record(3, "contrast trend", contrast_trend(run).unwrap_or_else(failed));
            record(4, "transition trend", transition_trend(run).unwrap_or_else(failed));
            record(5, "rotation periodicity", rotation_period(run).unwrap_or_else(failed));
        }
        Err(e) => {
            for (n, title) in [(2, "rotation trend"), (3, "contrast trend"), (4, "transition trend"), (5, "rotation periodicity")] {
                record(n, title, failed(e));
            }
        }
    }
    let second = Run::execute(&cfg);
    let check = match (&first, &second) {
        (Ok(a), Ok(b)) => determinism(a, b),
        (Err(e), _) | (_, Err(e)) => failed(e),
    };
    record(9, "determinism", check);

    outcomes.sort();
    let failures: Vec<String> = outcomes.iter().filter(|(_, ok)| !ok).map(|(n, _)| n.to_string()).collect();
    println!(
        "acceptance: {}/{} criteria passed{}",
        outcomes.len() - failures.len(),
        outcomes.len(),
        if failures.is_empty() { String::new() } else { format!("; failing: {}", failures.join(", ")) }
    );
    if failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
