use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use sha2::{Digest, Sha256};

use semcont::continuity::{apply_window, check_explainer_continuity, evaluate_maps, explain_series, frame_confidences, Direction, Mode, SeriesEvaluation, Window};
use semcont::experiment::{from_toml, run_experiment, BaseShape, ExperimentConfig, SeriesSection};
use semcont::explain::{load_maps, save_maps, serve_classifier, ExplainerConfig, ExplainerId, MapArchive, ModelRef, ProcessClassifier};
use semcont::image::{read_file, write_atomic};
use semcont::metrics::DistanceKind;
use semcont::nn::{accuracy, load_model, save_model, train, Architecture, ModelSnapshot, TrainConfig};
use semcont::report::{build_table, emit_table, relational_plot, ContinuityReport, PlotOptions, Provenance};
use semcont::shapegen::{load_labeled, load_series, make_training_set, save_labeled, save_series, SeriesKind, CANVAS};
use semcont::Error;

#[derive(Parser)]
#[command(name = "semcont", version, about = "Semantic continuity checks for saliency explainers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled training set or a variation series.
    #[command(subcommand)]
    Gen(Gen),
    /// Train the shape classifier.
    Train(TrainArgs),
    /// Explain every frame of a series.
    Explain(ExplainArgs),
    /// Compute saliency distances for saved maps.
    Eval(EvalArgs),
    /// Correlation table and relational plot from evaluations.
    Report(ReportArgs),
    /// Full experiment from a TOML config.
    Run(RunArgs),
    /// Answer classifier requests on stdin/stdout.
    Serve(ServeArgs),
}

#[derive(Subcommand)]
enum Gen {
    TrainSet {
        #[arg(long, default_value_t = 500)]
        n_per_class: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    Series {
        #[arg(long, value_parser = parse_key::<SeriesKind>)]
        kind: SeriesKind,
        #[arg(long, value_parser = parse_key::<BaseShape>)]
        shape: Option<BaseShape>,
        #[arg(long, default_value_t = 100)]
        frames: usize,
        #[arg(long)]
        total_deg: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Held-out set to report accuracy on.
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    init_seed: u64,
}

#[derive(Args)]
struct ModelArgs {
    /// Model file written by `train`.
    #[arg(long, required_unless_present = "blackbox", conflicts_with = "blackbox")]
    model: Option<PathBuf>,
    /// External classifier speaking the line-delimited JSON protocol.
    #[arg(long)]
    blackbox: Option<String>,
    #[arg(long = "blackbox-arg", allow_hyphen_values = true)]
    blackbox_args: Vec<String>,
}

enum LoadedModel {
    Builtin(ModelSnapshot<f32>),
    BlackBox(ProcessClassifier),
}

impl LoadedModel {
    fn open(args: &ModelArgs) -> anyhow::Result<Self> {
        Ok(match (&args.model, &args.blackbox) {
            (Some(path), _) => LoadedModel::Builtin(load_model(path)?),
            (None, Some(program)) => LoadedModel::BlackBox(ProcessClassifier::spawn(program, &args.blackbox_args)?),
            (None, None) => return Err(Error::InvalidArgument("either --model or --blackbox is required".into()).into()),
        })
    }

    fn as_ref(&self) -> ModelRef<'_, f32> {
        match self {
            LoadedModel::Builtin(m) => ModelRef::Builtin(m),
            LoadedModel::BlackBox(c) => ModelRef::BlackBox(c),
        }
    }
}

#[derive(Args)]
struct ExplainArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    series: PathBuf,
    #[arg(long, value_parser = parse_key::<ExplainerId>)]
    explainer: ExplainerId,
    /// TOML file with per-explainer settings.
    #[arg(long)]
    settings: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    series: PathBuf,
    /// Directory written by `explain`.
    #[arg(long)]
    maps: PathBuf,
    #[arg(long, value_parser = parse_key::<ExplainerId>)]
    explainer: ExplainerId,
    #[arg(long, value_delimiter = ',', default_value = "wasserstein,msd", value_parser = parse_key::<DistanceKind>)]
    distances: Vec<DistanceKind>,
    /// Series name recorded in the evaluation; defaults to the directory name.
    #[arg(long)]
    id: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long, num_args = 1.., required = true)]
    evals: Vec<PathBuf>,
    #[arg(long, default_value = "variation", value_parser = parse_key::<Mode>)]
    mode: Mode,
    /// `A:B` frame range for the table.
    #[arg(long)]
    window: Option<String>,
    #[arg(long, default_value = "increasing", value_parser = parse_key::<Direction>)]
    expected: Direction,
    /// Model file to fingerprint in the provenance block.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    model: PathBuf,
}

fn parse_key<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| dispatch(cli.command));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let mut message = String::new();
            for cause in err.chain().map(|c| c.to_string()) {
                if !message.contains(&cause) {
                    message = if message.is_empty() { cause } else { format!("{message}: {cause}") };
                }
            }
            eprintln!("error: {message}");
            let code = err.chain().find_map(|e| e.downcast_ref::<Error>()).map_or(3, Error::exit_code);
            ExitCode::from(code as u8)
        }
    }
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(value) = std::env::var("SEMCONT_THREADS") else { return Ok(()) };
    let n: usize = value.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| Error::InvalidArgument(format!("SEMCONT_THREADS=`{value}` is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")
}

fn dispatch(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Gen(Gen::TrainSet { n_per_class, seed, out }) => {
            let data = make_training_set::<f32>(n_per_class, seed)?;
            save_labeled(&data, &out)?;
            eprintln!("wrote {} images to {}", data.len(), out.display());
        }
        Command::Gen(Gen::Series { kind, shape, frames, total_deg, out }) => {
            let section = SeriesSection { id: "series".into(), kind, shape, frames, total_deg, window: None, expected: Direction::Increasing };
            save_series(&section.generate()?, &out)?;
            eprintln!("wrote {frames} frames to {}", out.display());
        }
        Command::Train(a) => train_cmd(a)?,
        Command::Explain(a) => {
            let model = LoadedModel::open(&a.model)?;
            let series = load_series::<f32>(&a.series)?;
            let settings: ExplainerConfig = match &a.settings {
                Some(path) => from_toml(&String::from_utf8_lossy(&read_file(path)?)).with_context(|| format!("in {}", path.display()))?,
                None => ExplainerConfig::default(),
            };
            let cfg = settings.with_seed(a.seed);
            let maps = explain_series(model.as_ref(), &series, a.explainer, &cfg)?;
            let archive = MapArchive { explainer_id: a.explainer.key().into(), config: cfg.echo(a.explainer), seed: cfg.seed(a.explainer), maps };
            save_maps(&a.out, a.explainer.key(), &archive)?;
            eprintln!("wrote {} {} maps to {}", archive.maps.len(), a.explainer.display_name(), a.out.display());
        }
        Command::Eval(a) => {
            let model = LoadedModel::open(&a.model)?;
            let series = load_series::<f32>(&a.series)?;
            let archive = load_maps::<f32>(&a.maps, a.explainer.key())?;
            let cfg: ExplainerConfig = serde_json::from_value(serde_json::json!({ a.explainer.key(): archive.config })).unwrap_or_default();
            let confidences = frame_confidences(model.as_ref(), &series)?;
            let id = a.id.unwrap_or_else(|| dir_name(&a.series));
            let eval = evaluate_maps(&id, a.explainer, &series, confidences, &archive.maps, &a.distances, &cfg)?;
            eval.save(&a.out)?;
            eprintln!("wrote {}", a.out.display());
        }
        Command::Report(a) => report_cmd(a)?,
        Command::Run(a) => {
            let cfg = ExperimentConfig::load(&a.config).with_context(|| format!("in {}", a.config.display()))?;
            let config_dir = a.config.parent().unwrap_or(Path::new("."));
            let summary = run_experiment(&cfg, config_dir, &a.out, &|msg: &str| eprintln!("[{}] {msg}", cfg.name))?;
            let mut out = std::io::stdout().lock();
            writeln!(out, "{}", a.out.join("manifest.json").display())?;
            if summary.up_to_date {
                eprintln!("nothing to do");
            }
        }
        Command::Serve(a) => {
            let model: ModelSnapshot<f32> = load_model(&a.model)?;
            serve_classifier(&model, std::io::stdin().lock(), std::io::stdout().lock())?;
        }
    }
    Ok(())
}

fn dir_name(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "series".into())
}

fn train_cmd(a: TrainArgs) -> anyhow::Result<()> {
    let data = load_labeled::<f32>(&a.data)?;
    let defaults = TrainConfig::default();
    let cfg = TrainConfig {
        epochs: a.epochs.unwrap_or(defaults.epochs),
        batch_size: a.batch_size.unwrap_or(defaults.batch_size),
        learning_rate: a.learning_rate.unwrap_or(defaults.learning_rate),
        seed: a.seed,
        optimizer: defaults.optimizer,
    };
    let init = ModelSnapshot::init(Architecture::new(CANVAS, CANVAS)?, a.init_seed);
    let outcome = train(&init, &data, &cfg)?;
    for e in &outcome.log {
        eprintln!("{}", serde_json::to_string(e)?);
    }
    save_model(&outcome.model, &a.out)?;
    println!("train accuracy {:.4}", outcome.final_accuracy);
    if let Some(test) = &a.test {
        println!("test accuracy {:.4}", accuracy(&outcome.model, &load_labeled::<f32>(test)?)?);
    }
    Ok(())
}

fn report_cmd(a: ReportArgs) -> anyhow::Result<()> {
    let evals = a.evals.iter().map(|p| SeriesEvaluation::load(p)).collect::<semcont::Result<Vec<_>>>()?;
    let window = a.window.as_deref().map(Window::parse).transpose()?;
    let model_sha256 = match &a.model {
        Some(p) => Sha256::digest(read_file(p)?).iter().map(|b| format!("{b:02x}")).collect(),
        None => "unknown".to_string(),
    };
    let mut runs = Vec::new();
    for e in &evals {
        let windowed = match window {
            Some(w) => apply_window(e, w.start..=w.end)?,
            None => e.clone(),
        };
        runs.push(check_explainer_continuity(&windowed, a.mode, a.expected)?);
    }
    let first = &evals[0];
    let config = serde_json::json!({ "evaluations": a.evals, "window": a.window, "expected": a.expected });
    let report = ContinuityReport { provenance: Provenance::new(model_sha256, first.seed.unwrap_or(0), config), runs };
    let stem = format!("{}__{}", first.series_id, a.mode.key());
    let doc = build_table(&report, &first.series_id, a.mode)?;
    emit_table(&doc, &a.out, &stem)?;
    let svg = relational_plot(&evals, a.mode, &PlotOptions::default())?;
    write_atomic(&a.out.join(format!("{stem}.svg")), svg.as_bytes())?;
    print!("{}", doc.table.to_csv());
    Ok(())
}
