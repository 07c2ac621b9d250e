use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use soundtrack_core::director::Strategy;
use soundtrack_core::metrics::{render_report, render_tables, EmbeddingKind};
use soundtrack_core::pipeline::{
    load_report, make_embedder, run_eval, run_generate, write_report, Overrides, PipelineError, RunConfig, RunManifest,
    MANIFEST_FILE, REPORT_JSON_FILE, TRACK_FILE,
};

/// Background music for tabletop role-playing sessions, driven by the players' transcript.
#[derive(Parser)]
#[command(name = "soundtrack", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a soundtrack from a subtitle transcript.
    Generate(GenerateArgs),
    /// Compute FAD, story-alignment KLD and transition KLD for a soundtrack.
    Eval(EvalArgs),
    /// Write an embedding file for a WAV file.
    Embed(EmbedArgs),
    /// Render comparison tables from report or manifest files.
    Report(ReportArgs),
}

#[derive(Args)]
struct Common {
    /// TOML or JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_strategy)]
    strategy: Option<Strategy>,
    #[arg(long)]
    window_s: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    campaign: Option<String>,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    transcript: Option<PathBuf>,
    /// Use the deterministic stand-in language model.
    #[arg(long)]
    mock_llm: bool,
    /// Use the deterministic stand-in music model.
    #[arg(long)]
    mock_music: bool,
    /// Bypass the response cache.
    #[arg(long)]
    no_cache: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    /// Generated soundtrack; defaults to the one in the output directory.
    #[arg(long)]
    track: Option<PathBuf>,
    /// Run manifest supplying transitions, campaign and strategy.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    reference_audio: Option<PathBuf>,
    #[arg(long)]
    reference_corpus: Option<PathBuf>,
    /// Use the built-in spectral embedder instead of the embedding service.
    #[arg(long)]
    mock_embed: bool,
}

#[derive(Args)]
struct EmbedArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Window length in seconds.
    #[arg(long, default_value_t = 10.0)]
    span_s: f64,
    #[arg(long, default_value = "logits", value_parser = parse_kind)]
    kind: EmbeddingKind,
    #[arg(long)]
    mock_embed: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Report files, or manifests carrying metrics.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Also write the tables to this file.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse().map_err(|_| format!("unknown strategy {s:?}; expected baseline, emotion, description or dc"))
}

fn parse_kind(s: &str) -> Result<EmbeddingKind, String> {
    match s.to_ascii_lowercase().as_str() {
        "embedding" => Ok(EmbeddingKind::Embedding),
        "logits" => Ok(EmbeddingKind::Logits),
        _ => Err(format!("unknown kind {s:?}; expected embedding or logits")),
    }
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            campaign_name: self.campaign.clone(),
            strategy: self.strategy,
            window_s: self.window_s,
            seed: self.seed,
            output_dir: self.output_dir.clone(),
            ..Overrides::default()
        }
    }
}

fn generate(args: GenerateArgs) -> Result<(), PipelineError> {
    let overrides = Overrides {
        transcript_path: args.transcript,
        mock_llm: args.mock_llm,
        mock_music: args.mock_music,
        no_cache: args.no_cache,
        ..args.common.overrides()
    };
    let cfg = RunConfig::resolve(args.common.config.as_deref(), &overrides)?;
    let manifest = run_generate(&cfg)?;
    let hits = manifest.cache_hits();
    println!(
        "{}: {} segments, {} transitions, {:.1} s, {hits} cache hits",
        cfg.output_dir.join(TRACK_FILE).display(),
        manifest.segments.len(),
        manifest.transitions.len(),
        manifest.track_duration_s.unwrap_or(0.0),
    );
    println!("manifest: {}", cfg.output_dir.join(MANIFEST_FILE).display());
    Ok(())
}

fn eval(args: EvalArgs) -> Result<(), PipelineError> {
    let overrides = Overrides {
        mock_embed: args.mock_embed,
        reference_audio_path: args.reference_audio,
        reference_corpus_path: args.reference_corpus,
        ..args.common.overrides()
    };
    let cfg = RunConfig::resolve(args.common.config.as_deref(), &overrides)?;
    let track = args.track.unwrap_or_else(|| cfg.output_dir.join(TRACK_FILE));
    if !track.is_file() {
        return Err(PipelineError::Config(format!("track {} does not exist", track.display())));
    }
    let manifest_path = args.manifest.or_else(|| {
        let beside = track.parent().unwrap_or(Path::new(".")).join(MANIFEST_FILE);
        beside.is_file().then_some(beside)
    });
    let mut manifest = manifest_path.as_deref().map(RunManifest::read).transpose()?;
    let report = run_eval(&cfg, &track, manifest.as_ref())?;
    write_report(&report, &cfg.output_dir)?;
    if let (Some(path), Some(m)) = (&manifest_path, manifest.as_mut()) {
        m.metrics = Some(report.clone());
        m.write(path)?;
    }
    print!("{}", render_report(&report));
    println!("report: {}", cfg.output_dir.join(REPORT_JSON_FILE).display());
    Ok(())
}

fn embed(args: EmbedArgs) -> Result<(), PipelineError> {
    let overrides = Overrides { mock_embed: args.mock_embed, ..Overrides::default() };
    let cfg = RunConfig::resolve(args.config.as_deref(), &overrides)?;
    if !(args.span_s > 0.0 && args.span_s.is_finite()) {
        return Err(PipelineError::Config(format!("span must be positive, got {}", args.span_s)));
    }
    let embedder = make_embedder(&cfg.embedding_source)?;
    let wav = soundtrack_core::assembler::read_wav(&args.input)?;
    let matrix = embedder
        .embed(&wav.samples, wav.sample_rate_hz, args.span_s, args.kind)
        .map_err(PipelineError::from)?;
    matrix.write(&args.output).map_err(PipelineError::from)?;
    println!("{}: {} x {} ({})", args.output.display(), matrix.n(), matrix.d(), matrix.source_tag);
    Ok(())
}

fn report(args: ReportArgs) -> Result<(), PipelineError> {
    let reports = args.inputs.iter().map(|p| load_report(p)).collect::<Result<Vec<_>, _>>()?;
    let tables = render_tables(&reports);
    print!("{tables}");
    if let Some(out) = &args.output {
        std::fs::write(out, &tables).map_err(|e| PipelineError::Io { path: out.clone(), source: e })?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Eval(a) => eval(a),
        Command::Embed(a) => embed(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
