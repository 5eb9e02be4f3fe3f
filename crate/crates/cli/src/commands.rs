use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use shotseg::attention::{
    attention_report as analyse, read_dump, render_mean_bars, render_sum_bars, AttentionError, SpanMap,
};
use shotseg::backend::{Backend, BackendError, HealthReport, HttpBackend};
use shotseg::decoding::PredictionDump;
use shotseg::metrics::{
    chapter_f1, evaluate as score, f1_sweep_svg, focus_positions, position_csv, pr_csv, pr_svg, tiou, ChapterReport,
    ChapterScore, EvalInput, EvalOptions, EvalReport,
};
use shotseg::model::{load_chapters, load_manifest, validate_movie, Chapter, ManifestError, Movie, ValidationMode};
use shotseg::pipeline::{chapter_movie, segment_movie, ChapterDump, PipelineError};
use shotseg::prompting::{FrameStore, PromptBuilder, PromptError, PromptTemplate};
use shotseg::simkit::{write_corpus, MockBackend};
use shotseg::windowing::WindowPlanConfig;
use tracing::info;

use crate::config::{BackendKind, RunConfig};

/// Failure classes, valued as process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Other = 1,
    Config = 2,
    Io = 3,
    Transport = 4,
    Protocol = 5,
    Evaluation = 6,
}

#[derive(Debug)]
pub struct CliError {
    pub class: ErrorClass,
    pub error: anyhow::Error,
}

impl CliError {
    pub fn new(class: ErrorClass, error: impl Into<anyhow::Error>) -> Self {
        CliError { class, error: error.into() }
    }

    pub fn msg(class: ErrorClass, message: impl Display) -> Self {
        CliError { class, error: anyhow::anyhow!("{message}") }
    }
}

fn io_err(path: &Path, e: impl Display) -> CliError {
    CliError::msg(ErrorClass::Io, format!("{}: {e}", path.display()))
}

fn backend_class(e: &BackendError) -> ErrorClass {
    match e {
        BackendError::Transport { .. } | BackendError::NoReply(_) => ErrorClass::Transport,
        BackendError::Protocol(_) | BackendError::BudgetExceeded { .. } => ErrorClass::Protocol,
        BackendError::ScopeMissing | BackendError::InvalidParams(_) => ErrorClass::Config,
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        let class = match &e {
            PipelineError::Backend { source, .. } => backend_class(source),
            PipelineError::Prompt(PromptError::MissingFrame { .. } | PromptError::ImageDecode { .. }) => {
                ErrorClass::Io
            }
            PipelineError::Prompt(_) | PipelineError::Config(_) | PipelineError::Window(_) => ErrorClass::Config,
            PipelineError::Partition(_) => ErrorClass::Other,
        };
        CliError::new(class, e)
    }
}

impl From<ManifestError> for CliError {
    fn from(e: ManifestError) -> Self {
        CliError::new(ErrorClass::Io, e)
    }
}

/// Expands directories to the files in them ending in `suffix`, sorted.
fn expand(paths: &[PathBuf], suffix: &str) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .map_err(|e| io_err(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with(suffix)))
                .collect();
            found.sort();
            out.extend(found);
        } else if p.exists() {
            out.push(p.clone());
        } else {
            return Err(io_err(p, "no such file or directory"));
        }
    }
    Ok(out)
}

struct Input {
    manifest: PathBuf,
    movie: Movie,
}

impl Input {
    fn dir(&self) -> &Path {
        self.manifest.parent().unwrap_or(Path::new("."))
    }

    /// Ground-truth chapters stored next to the manifest, if any.
    fn chapters(&self) -> Result<Option<Vec<Chapter>>, CliError> {
        let path = self.dir().join(format!("{}.chapters.json", self.movie.movie_id));
        if path.exists() {
            Ok(Some(load_chapters(&path)?))
        } else {
            Ok(None)
        }
    }
}

fn load_inputs(cfg: &RunConfig) -> Result<Vec<Input>, CliError> {
    if cfg.manifests.is_empty() {
        return Err(CliError::msg(ErrorClass::Config, "no manifests given (--manifest or \"manifests\")"));
    }
    let files = expand(&cfg.manifests, ".manifest.json")?;
    if files.is_empty() {
        return Err(CliError::msg(ErrorClass::Io, "no *.manifest.json files found"));
    }
    files
        .into_iter()
        .map(|manifest| {
            let movie = load_manifest(&manifest)?;
            Ok(Input { manifest, movie })
        })
        .collect()
}

fn out_dir(cfg: &RunConfig) -> Result<&Path, CliError> {
    let dir = cfg
        .out_dir
        .as_deref()
        .ok_or_else(|| CliError::msg(ErrorClass::Config, "no output directory (--out or \"out_dir\")"))?;
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    Ok(dir)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn runtime() -> Result<tokio::runtime::Runtime, CliError> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::new(ErrorClass::Other, e))
}

fn backend(cfg: &RunConfig, inputs: &[Input]) -> Result<Box<dyn Backend>, CliError> {
    match cfg.backend {
        BackendKind::Mock => {
            let mut mock = MockBackend::new(cfg.noise.clone());
            for i in inputs {
                mock.add_movie(&i.movie, i.chapters()?.unwrap_or_default());
            }
            Ok(Box::new(mock))
        }
        BackendKind::Http => {
            let http = HttpBackend::new(cfg.http.clone()).map_err(|e| CliError::new(backend_class(&e), e))?;
            Ok(Box::new(http))
        }
    }
}

fn builder(cfg: &RunConfig, template: &PromptTemplate, input: &Input) -> PromptBuilder {
    let mut frames = FrameStore::new(input.dir());
    if let Some(cache) = &cfg.frame_cache {
        frames = frames.with_cache_dir(cache);
    }
    PromptBuilder::new(template.clone(), cfg.prompt.clone(), frames)
}

fn template(cfg: &RunConfig) -> Result<PromptTemplate, CliError> {
    match &cfg.template {
        Some(p) => PromptTemplate::from_path(p).map_err(|e| CliError::new(ErrorClass::Config, e)),
        None => Ok(PromptTemplate::default()),
    }
}

pub fn synth(cfg: &RunConfig) -> Result<(), CliError> {
    let dir = out_dir(cfg)?;
    let manifests = write_corpus(&cfg.synth, dir).map_err(|e| match e {
        shotseg::simkit::SynthError::Config(_) => CliError::new(ErrorClass::Config, e),
        _ => CliError::new(ErrorClass::Io, e),
    })?;
    println!("wrote {} movies to {}", manifests.len(), dir.display());
    Ok(())
}

pub fn segment(cfg: &RunConfig) -> Result<(), CliError> {
    let inputs = load_inputs(cfg)?;
    let dir = out_dir(cfg)?;
    let backend = backend(cfg, &inputs)?;
    let template = template(cfg)?;
    let seg = cfg.segment_config();
    let rt = runtime()?;
    for input in &inputs {
        let b = builder(cfg, &template, input);
        let pred = rt.block_on(segment_movie(backend.as_ref(), &b, &input.movie, &seg))?;
        let dump = PredictionDump::new(&pred, seg.scheme.name(), seg.window.context_len, seg.window.focus_len);
        let path = dir.join(format!("{}.pred.json", pred.movie_id));
        write(&path, dump.to_json())?;
        let boundaries = pred.decisions().iter().filter(|d| **d).count();
        info!(movie = %pred.movie_id, shots = pred.num_shots(), boundaries, "segmented");
        println!(
            "{}: {} shots, {} boundaries, {} parse failures, {} defaulted",
            pred.movie_id,
            pred.num_shots(),
            boundaries,
            pred.failures.len(),
            pred.defaulted.len()
        );
    }
    Ok(())
}

pub fn chapters(cfg: &RunConfig) -> Result<(), CliError> {
    let inputs = load_inputs(cfg)?;
    let dir = out_dir(cfg)?;
    let backend = backend(cfg, &inputs)?;
    let template = template(cfg)?;
    let seg = cfg.segment_config();
    let rt = runtime()?;
    for input in &inputs {
        let b = builder(cfg, &template, input);
        let dump = rt.block_on(chapter_movie(backend.as_ref(), &b, &input.movie, &seg))?;
        write(&dir.join(format!("{}.chapters.pred.json", dump.movie_id)), dump.to_json())?;
        println!(
            "{}: {} chapters, {} parse failures",
            dump.movie_id,
            dump.chapters.len(),
            dump.failures.len()
        );
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct EvaluationOutput {
    #[serde(skip_serializing_if = "Option::is_none")]
    segmentation: Option<EvalReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    chaptering: Option<ChapterReport>,
}

enum Dump {
    Segments(PredictionDump),
    Chapters(ChapterDump),
}

fn read_prediction(path: &Path) -> Result<Dump, CliError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let value: serde_json::Value = serde_json::from_slice(&bytes).map_err(|e| io_err(path, e))?;
    let dump = if value.get("chapters").is_some() {
        serde_json::from_value(value).map(Dump::Chapters)
    } else {
        serde_json::from_value(value).map(Dump::Segments)
    };
    dump.map_err(|e| io_err(path, e))
}

fn eval_err(e: impl Into<anyhow::Error>) -> CliError {
    CliError::new(ErrorClass::Evaluation, e)
}

pub fn evaluate(cfg: &RunConfig, predictions: &[PathBuf], sweep: bool) -> Result<(), CliError> {
    let inputs = load_inputs(cfg)?;
    let by_id: BTreeMap<&str, &Input> = inputs.iter().map(|i| (i.movie.movie_id.as_str(), i)).collect();
    let files = expand(predictions, ".pred.json")?;
    if files.is_empty() {
        return Err(CliError::msg(ErrorClass::Io, "no *.pred.json files found"));
    }
    let mut seg_inputs = Vec::new();
    let mut focus_len = None;
    let mut chapter_scores = Vec::new();
    for path in &files {
        let dump = read_prediction(path)?;
        let movie_id = match &dump {
            Dump::Segments(d) => d.movie_id.clone(),
            Dump::Chapters(d) => d.movie_id.clone(),
        };
        let movie_id = movie_id.as_str();
        let input = by_id.get(movie_id).ok_or_else(|| {
            CliError::msg(ErrorClass::Evaluation, format!("movie {movie_id}: no manifest among the inputs"))
        })?;
        match dump {
            Dump::Segments(d) => {
                let labels = input.movie.labels().ok_or_else(|| {
                    CliError::msg(ErrorClass::Evaluation, format!("movie {movie_id}: manifest has no labels"))
                })?;
                if *focus_len.get_or_insert(d.focus_len) != d.focus_len {
                    return Err(CliError::msg(
                        ErrorClass::Evaluation,
                        format!("movie {movie_id}: dumps mix focus lengths"),
                    ));
                }
                let plan = WindowPlanConfig { context_len: d.context_len, focus_len: d.focus_len };
                let positions = (plan.validate().is_ok() && d.confidences.len() == labels.len())
                    .then(|| focus_positions(labels.len(), &plan));
                seg_inputs.push(EvalInput {
                    movie_id: d.movie_id,
                    confidences: d.confidences,
                    labels,
                    positions,
                });
            }
            Dump::Chapters(d) => {
                let gt = input.chapters()?.ok_or_else(|| {
                    CliError::msg(ErrorClass::Evaluation, format!("movie {movie_id}: no ground-truth chapters"))
                })?;
                let end = input.movie.end_s().ok_or_else(|| {
                    CliError::msg(ErrorClass::Evaluation, format!("movie {movie_id}: manifest has no timestamps"))
                })?;
                let movie_err = |e: shotseg::metrics::MetricsError| eval_err(e.for_movie(movie_id));
                chapter_scores.push(ChapterScore {
                    movie_id: d.movie_id.clone(),
                    chapter_f1: chapter_f1(&d.chapters, &gt, &cfg.chapter_tolerances_s).map_err(movie_err)?,
                    tiou: tiou(&d.chapters, &gt, end).map_err(movie_err)?,
                });
            }
        }
    }

    let segmentation = if seg_inputs.is_empty() {
        None
    } else {
        let opts = EvalOptions { focus_len, ..cfg.eval.clone() };
        Some(score(&seg_inputs, &opts).map_err(eval_err)?)
    };
    let chaptering = (!chapter_scores.is_empty()).then(|| ChapterReport::new(&cfg.chapter_tolerances_s, chapter_scores));
    let mut output = EvaluationOutput { segmentation, chaptering };

    if let Some(r) = &output.segmentation {
        println!(
            "segmentation: {} movies, {} shots, AP {:.4}, best F1 {:.4} at {:.4}, F1@{} {:.4} (P {:.4}, R {:.4})",
            r.num_movies, r.num_shots, r.ap, r.best_f1, r.best_threshold, r.threshold, r.f1, r.precision, r.recall
        );
        if !r.outlier_positions.is_empty() {
            println!("outlier focus positions: {:?}", r.outlier_positions);
        }
    }
    if let Some(c) = &output.chaptering {
        println!(
            "chaptering: {} movies, chapter F1 {:.4}, tIoU {:.4}",
            c.movies.len(),
            c.mean_chapter_f1,
            c.mean_tiou
        );
    }

    if sweep {
        let dir = out_dir(cfg)?;
        if let Some(r) = &output.segmentation {
            write(&dir.join("pr.csv"), pr_csv(&r.pr_points))?;
            write(&dir.join("pr.svg"), pr_svg(&r.pr_points))?;
            write(&dir.join("f1_threshold.svg"), f1_sweep_svg(&r.pr_points))?;
            if let Some(p) = &r.per_position {
                write(&dir.join("positions.csv"), position_csv(p))?;
            }
        }
        write(&dir.join("report.json"), json(&output))?;
    } else {
        if let Some(r) = &mut output.segmentation {
            r.pr_points.clear();
        }
        if let Some(dir) = &cfg.out_dir {
            fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
            write(&dir.join("report.json"), json(&output))?;
        }
    }
    Ok(())
}

fn json(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn attention_err(e: AttentionError) -> CliError {
    let class = match e {
        AttentionError::Io { .. } | AttentionError::Format(_) => ErrorClass::Io,
        _ => ErrorClass::Evaluation,
    };
    CliError::new(class, e)
}

pub fn attention_report(cfg: &RunConfig, dump: &Path, spans: Option<&Path>, row_tol: f64) -> Result<(), CliError> {
    let (dump, stored) = read_dump(dump).map_err(attention_err)?;
    let spans: SpanMap = match spans {
        Some(p) => {
            let bytes = fs::read(p).map_err(|e| io_err(p, e))?;
            serde_json::from_slice(&bytes).map_err(|e| io_err(p, e))?
        }
        None => stored,
    };
    let report = analyse(&dump, &spans, row_tol).map_err(attention_err)?;
    print!("{}", render_sum_bars(&report.sum));
    print!("{}", render_mean_bars(&report.mean));
    if let Some(dir) = &cfg.out_dir {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        write(&dir.join("attention.json"), json(&report))?;
        write(&dir.join("attention_shares.csv"), report.shares_csv())?;
        write(&dir.join("attention_per_shot.csv"), report.per_shot_csv())?;
    }
    Ok(())
}

pub fn validate(cfg: &RunConfig, mode: ValidationMode) -> Result<(), CliError> {
    if cfg.manifests.is_empty() {
        println!("config ok");
        return Ok(());
    }
    let files = expand(&cfg.manifests, ".manifest.json")?;
    let mut bad = 0;
    for path in &files {
        let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
        let issues = match serde_json::from_slice::<serde_json::Value>(&bytes) {
            Err(e) => vec![e.to_string()],
            Ok(_) => match load_manifest(path) {
                Ok(movie) => validate_movie(&movie, mode).iter().map(ToString::to_string).collect(),
                Err(ManifestError::Invariant(issue)) => vec![issue.to_string()],
                Err(e) => vec![e.to_string()],
            },
        };
        if issues.is_empty() {
            println!("{}: ok", path.display());
        } else {
            bad += 1;
            for i in issues {
                println!("{}: {i}", path.display());
            }
        }
    }
    if bad > 0 {
        return Err(CliError::msg(ErrorClass::Io, format!("{bad} of {} manifests are invalid", files.len())));
    }
    Ok(())
}

pub fn health(cfg: &RunConfig) -> Result<(), CliError> {
    let http = HttpBackend::new(cfg.http.clone()).map_err(|e| CliError::new(backend_class(&e), e))?;
    let report = runtime()?
        .block_on(http.health(cfg.decode.top_logprobs_k))
        .map_err(|e| CliError::new(backend_class(&e), e))?;
    match report {
        HealthReport::Healthy => {
            println!("{}: healthy", cfg.http.endpoint);
            Ok(())
        }
        HealthReport::Degraded(p) => Err(CliError::msg(
            ErrorClass::Protocol,
            format!("{}: degraded ({p})", cfg.http.endpoint),
        )),
    }
}
