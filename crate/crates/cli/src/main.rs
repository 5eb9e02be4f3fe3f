mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use shotseg::model::ValidationMode;
use shotseg::pipeline::SegmentScheme;

use crate::commands::{CliError, ErrorClass};
use crate::config::{BackendKind, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "shotseg", version, about = "Windowed scene-boundary inference and evaluation")]
struct Cli {
    /// JSON run config; flags override its values.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Repeat for more log output (info, debug, trace).
    #[arg(long, short, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SchemeArg {
    Comprehensive,
    Concise,
    ConciseSampled,
}

#[derive(Debug, Args, Default)]
struct Overrides {
    #[arg(long, global = true)]
    backend: Option<BackendKind>,
    /// Chat-completions URL of the model server.
    #[arg(long, env = "SHOTSEG_ENDPOINT", global = true)]
    endpoint: Option<String>,
    #[arg(long, env = "SHOTSEG_API_KEY", hide_env_values = true, global = true)]
    api_key: Option<String>,
    #[arg(long, global = true)]
    model: Option<String>,
    #[arg(long, global = true)]
    concurrency: Option<usize>,
    #[arg(long, global = true)]
    top_logprobs: Option<usize>,
    #[arg(long, global = true)]
    max_new_tokens: Option<usize>,
    #[arg(long, global = true)]
    context_len: Option<usize>,
    #[arg(long, global = true)]
    focus_len: Option<usize>,
    #[arg(long, global = true)]
    scheme: Option<SchemeArg>,
    /// Runs per window for the concise-sampled scheme.
    #[arg(long, global = true)]
    runs: Option<usize>,
    #[arg(long, global = true)]
    frames_per_shot: Option<usize>,
    #[arg(long, global = true)]
    no_subtitles: bool,
    #[arg(long, global = true)]
    no_actors: bool,
    #[arg(long, global = true)]
    no_markers: bool,
    /// Ask for rationales after boundary verdicts.
    #[arg(long, global = true)]
    explain: bool,
    #[arg(long, global = true)]
    template: Option<PathBuf>,
    #[arg(long, global = true)]
    frame_cache: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Mock backend flip probability.
    #[arg(long, global = true)]
    p_flip: Option<f64>,
    #[arg(long, global = true)]
    noise_seed: Option<u64>,
    /// Manifest file or directory; repeatable.
    #[arg(long = "manifest", short = 'm', global = true)]
    manifests: Vec<PathBuf>,
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    threshold: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic corpus: manifests, chapters and frames.
    Synth {
        #[arg(long)]
        num_movies: Option<usize>,
        #[arg(long)]
        shots_per_movie: Option<usize>,
        #[arg(long)]
        synth_seed: Option<u64>,
    },
    /// Predict scene boundaries; one `<movie>.pred.json` per movie.
    Segment,
    /// Predict chapters; one `<movie>.chapters.pred.json` per movie.
    Chapters,
    /// Score prediction dumps against labeled manifests.
    Evaluate {
        /// Prediction dump file or directory; repeatable.
        #[arg(long = "predictions", short = 'p', required = true)]
        predictions: Vec<PathBuf>,
    },
    /// Like evaluate, plus full threshold curves as CSV and SVG.
    Sweep {
        #[arg(long = "predictions", short = 'p', required = true)]
        predictions: Vec<PathBuf>,
    },
    /// Modality and per-shot attention shares of an attention dump.
    AttentionReport {
        #[arg(long)]
        dump: PathBuf,
        /// Span map JSON replacing the one stored in the dump.
        #[arg(long)]
        spans: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-3)]
        row_tol: f64,
    },
    /// Check the config and the manifests without running anything.
    Validate {
        #[arg(long, value_enum, default_value = "segmentation")]
        mode: ModeArg,
    },
    /// Probe the configured endpoint for logprob support.
    Health,
    /// Print the effective config as JSON.
    ShowConfig,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Segmentation,
    Chaptering,
}

impl From<ModeArg> for ValidationMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Segmentation => ValidationMode::Segmentation,
            ModeArg::Chaptering => ValidationMode::Chaptering,
        }
    }
}

/// Defaults, then the config file, then flags.
fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(|e| CliError::new(ErrorClass::Config, e))?,
        None => RunConfig::default(),
    };
    let o = &cli.overrides;
    if let Some(b) = o.backend {
        cfg.backend = b;
    }
    if let Some(e) = &o.endpoint {
        cfg.http.endpoint = e.clone();
    }
    if o.api_key.is_some() {
        cfg.http.auth_token = o.api_key.clone();
    }
    if let Some(m) = &o.model {
        cfg.http.model = m.clone();
    }
    macro_rules! set {
        ($flag:expr => $field:expr) => {
            if let Some(v) = $flag {
                $field = v;
            }
        };
    }
    set!(o.concurrency => cfg.concurrency);
    set!(o.top_logprobs => cfg.decode.top_logprobs_k);
    set!(o.max_new_tokens => cfg.decode.max_new_tokens);
    set!(o.context_len => cfg.window.context_len);
    set!(o.focus_len => cfg.window.focus_len);
    set!(o.frames_per_shot => cfg.prompt.frames_per_shot);
    set!(o.seed => cfg.seed);
    set!(o.p_flip => cfg.noise.p_flip);
    set!(o.noise_seed => cfg.noise.seed);
    set!(o.threshold => cfg.eval.threshold);
    let runs = match cfg.scheme {
        SegmentScheme::ConciseSampled { runs } => runs,
        _ => 5,
    };
    match (o.scheme, o.runs) {
        (Some(SchemeArg::Comprehensive), _) => cfg.scheme = SegmentScheme::Comprehensive,
        (Some(SchemeArg::Concise), _) => cfg.scheme = SegmentScheme::Concise,
        (Some(SchemeArg::ConciseSampled), r) => {
            cfg.scheme = SegmentScheme::ConciseSampled { runs: r.unwrap_or(runs) }
        }
        (None, Some(r)) => match cfg.scheme {
            SegmentScheme::ConciseSampled { .. } => cfg.scheme = SegmentScheme::ConciseSampled { runs: r },
            _ => return Err(CliError::msg(ErrorClass::Config, "--runs needs --scheme concise-sampled")),
        },
        (None, None) => {}
    }
    cfg.prompt.include_subtitles &= !o.no_subtitles;
    cfg.prompt.include_actors &= !o.no_actors;
    cfg.prompt.include_markers &= !o.no_markers;
    cfg.prompt.explain |= o.explain;
    if o.template.is_some() {
        cfg.template = o.template.clone();
    }
    if o.frame_cache.is_some() {
        cfg.frame_cache = o.frame_cache.clone();
    }
    if !o.manifests.is_empty() {
        cfg.manifests = o.manifests.clone();
    }
    if o.out.is_some() {
        cfg.out_dir = o.out.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = resolve(&cli)?;
    if let Command::Synth { num_movies, shots_per_movie, synth_seed } = &cli.command {
        if let Some(n) = num_movies {
            cfg.synth.num_movies = *n;
        }
        if let Some(n) = shots_per_movie {
            cfg.synth.shots_per_movie = *n;
        }
        if let Some(s) = synth_seed {
            cfg.synth.seed = *s;
        }
    }
    cfg.validate().map_err(|e| CliError::new(ErrorClass::Config, e))?;
    match cli.command {
        Command::Synth { .. } => commands::synth(&cfg),
        Command::Segment => commands::segment(&cfg),
        Command::Chapters => commands::chapters(&cfg),
        Command::Evaluate { predictions } => commands::evaluate(&cfg, &predictions, false),
        Command::Sweep { predictions } => commands::evaluate(&cfg, &predictions, true),
        Command::AttentionReport { dump, spans, row_tol } => {
            commands::attention_report(&cfg, &dump, spans.as_deref(), row_tol)
        }
        Command::Validate { mode } => commands::validate(&cfg, mode.into()),
        Command::Health => commands::health(&cfg),
        Command::ShowConfig => {
            print!("{}", cfg.to_json());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(level));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e.error);
            ExitCode::from(e.class as u8)
        }
    }
}
