mod config;
mod error;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use speechsim::corpus::{load_sequence, load_word_spans};
use speechsim::report::{grid_csv, grid_markdown, percent, sweep_csv, sweep_markdown, word_similarity, word_similarity_csv};
use speechsim::retrieval::{report_csv, report_json, retrieve_pair};
use speechsim::synth::{generate, IntRange};
use speechsim::{CorpusManifest, MetricSpec, ScoreOptions, SynthConfig};

use config::{resolve_workers, FileConfig, MetricArgs, Provenance};
use error::Failure;

#[derive(Parser)]
#[command(name = "speechsim", version, about = "Frame-sequence similarity and speech-to-speech retrieval")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Similarity between two ESEQ files
    Score(ScoreArgs),
    /// One retrieval direction over a manifest; writes JSON and CSV reports
    Retrieve(RetrieveArgs),
    /// R@1 for every ordered language pair
    Grid(GridArgs),
    /// Word-by-word cosine matrix of two utterances
    Wordsim(WordsimArgs),
    /// R@1 of one language pair across several manifests
    Sweep(SweepArgs),
    /// Generate a synthetic parallel corpus
    Synth(SynthArgs),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; command-line flags take precedence
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    metric: MetricArgs,
}

#[derive(Args)]
struct Parallel {
    /// Worker threads (results do not depend on this)
    #[arg(long, env = "SPEECHSIM_WORKERS")]
    workers: Option<usize>,
    /// Exclude queries whose scores fail instead of aborting
    #[arg(long)]
    permissive: bool,
}

#[derive(Clone, Copy, Debug, Default, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    #[default]
    Markdown,
    Csv,
}

#[derive(Args)]
struct ScoreArgs {
    file_x: PathBuf,
    file_y: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct RetrieveArgs {
    manifest: PathBuf,
    #[arg(long)]
    query_lang: String,
    #[arg(long)]
    cand_lang: String,
    /// Recall cut-offs; values above the candidate count are dropped
    #[arg(long, value_delimiter = ',', default_value = "1,5")]
    k: Vec<usize>,
    /// Output directory for the report files
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    parallel: Parallel,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct GridArgs {
    manifest: PathBuf,
    /// Comma-separated languages (default: all in the manifest)
    #[arg(long, value_delimiter = ',')]
    langs: Vec<String>,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
    /// Output file (default: standard output)
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    parallel: Parallel,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct WordsimArgs {
    file_x: PathBuf,
    spans_x: PathBuf,
    file_y: PathBuf,
    spans_y: PathBuf,
    #[arg(long, default_value_t = speechsim::corpus::DEFAULT_FRAME_RATE_HZ)]
    frame_rate: f64,
    /// Output CSV (default: standard output)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// LABEL=PATH pairs, reported in the order given
    #[arg(long, num_args = 1.., required = true, value_parser = parse_labeled)]
    manifests: Vec<(String, PathBuf)>,
    #[arg(long)]
    query_lang: String,
    #[arg(long)]
    cand_lang: String,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    parallel: Parallel,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct SynthArgs {
    /// Random seed (required so every corpus is reproducible)
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
    /// TOML file with a [synth] table; flags take precedence
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n_items: Option<usize>,
    /// Embedding dimension
    #[arg(long)]
    dim: Option<usize>,
    /// MIN,MAX
    #[arg(long, value_parser = parse_range)]
    words_per_item: Option<IntRange>,
    /// MIN,MAX
    #[arg(long, value_parser = parse_range)]
    frames_per_word: Option<IntRange>,
    #[arg(long)]
    noise_sigma: Option<f64>,
    #[arg(long)]
    shuffle_word_order: Option<bool>,
    #[arg(long)]
    n_languages: Option<usize>,
    #[arg(long)]
    frame_rate: Option<f64>,
}

fn parse_labeled(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((label, path)) if !label.is_empty() && !path.is_empty() => Ok((label.to_string(), PathBuf::from(path))),
        _ => Err(format!("expected LABEL=PATH, got {s:?}")),
    }
}

// Order is not checked here so that an empty range reaches config
// validation and gets a descriptive message.
fn parse_range(s: &str) -> Result<IntRange, String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected MIN,MAX, got {s:?}"))?;
    let num = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok(IntRange::new(num(a)?, num(b)?))
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure::write(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Failure::write(path, e))
}

fn emit(out: Option<&Path>, contents: &str) -> Result<(), Failure> {
    match out {
        Some(p) => write_file(p, contents),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn load_manifest(path: &Path) -> Result<CorpusManifest, Failure> {
    let m = CorpusManifest::load(path)?;
    m.validate()?;
    Ok(m)
}

fn cmd_score(args: ScoreArgs) -> Result<(), Failure> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    let spec = args.common.metric.resolve(&file)?;
    let x = load_sequence(&args.file_x)?.normalize_rows()?;
    let y = load_sequence(&args.file_y)?.normalize_rows()?;
    let value = speechsim::similarity(&x, &y, &spec)?;
    println!("{} {value:.6}", spec.kind);
    Ok(())
}

#[derive(Serialize)]
struct RetrieveConfig {
    manifest: String,
    query_language: String,
    candidate_language: String,
    metric: MetricSpec,
    ks: Vec<usize>,
    permissive: bool,
}

fn cmd_retrieve(args: RetrieveArgs) -> Result<(), Failure> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    let metric = args.common.metric.resolve(&file)?;
    let workers = resolve_workers(args.parallel.workers, &file)?;
    let manifest = load_manifest(&args.manifest)?;
    let n_candidates = manifest
        .items_with(&[args.query_lang.as_str(), args.cand_lang.as_str()])
        .len();
    let mut ks: Vec<usize> = args.k.iter().copied().filter(|&k| k <= n_candidates.max(1)).collect();
    ks.sort_unstable();
    ks.dedup();
    if ks.is_empty() || ks[0] == 0 {
        return Err(Failure::usage(format!("no usable k in {:?} for {n_candidates} candidates", args.k)));
    }
    let cfg = RetrieveConfig {
        manifest: display(&args.manifest),
        query_language: args.query_lang.clone(),
        candidate_language: args.cand_lang.clone(),
        metric,
        ks: ks.clone(),
        permissive: args.parallel.permissive,
    };
    let prov = Provenance::new("retrieve", &cfg);
    let options = ScoreOptions {
        workers,
        permissive: args.parallel.permissive,
    };
    let run = retrieve_pair(&manifest, &args.query_lang, &args.cand_lang, &metric, &options, &ks)?;
    let stem = format!("{}-{}.{}", args.query_lang, args.cand_lang, metric.kind);
    write_file(&args.out.join(format!("{stem}.json")), &report_json(&run.report, &prov.value()))?;
    write_file(&args.out.join(format!("{stem}.csv")), &report_csv(&run.report, &prov.lines()))?;

    let t = &run.throughput;
    eprintln!(
        "{} pairs in {:.2} s ({:.1} pairs/s, {:.2} GFLOP/s)",
        t.pairs,
        t.elapsed_s,
        t.pairs_per_sec,
        t.gflops_per_sec()
    );
    if !run.report.excluded.is_empty() {
        eprintln!("excluded {} queries after pair failures", run.report.excluded.len());
    }
    let summary: Vec<String> = ks
        .iter()
        .filter(|&&k| k == 1 || k == 5)
        .map(|&k| format!("R@{k} {}%", percent(run.report.r_at(k).unwrap_or(0.0))))
        .collect();
    println!("{}", summary.join("  "));
    Ok(())
}

#[derive(Serialize)]
struct GridConfig {
    manifest: String,
    languages: Vec<String>,
    metric: MetricSpec,
    permissive: bool,
    format: Format,
}

fn cmd_grid(args: GridArgs) -> Result<(), Failure> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    let metric = args.common.metric.resolve(&file)?;
    let workers = resolve_workers(args.parallel.workers, &file)?;
    let manifest = load_manifest(&args.manifest)?;
    let languages = if args.langs.is_empty() {
        manifest.languages.clone()
    } else {
        args.langs.clone()
    };
    let cfg = GridConfig {
        manifest: display(&args.manifest),
        languages: languages.clone(),
        metric,
        permissive: args.parallel.permissive,
        format: args.format,
    };
    let prov = Provenance::new("grid", &cfg);
    let options = ScoreOptions {
        workers,
        permissive: args.parallel.permissive,
    };
    let langs: Vec<&str> = languages.iter().map(String::as_str).collect();
    let grid = speechsim::grid(&manifest, &langs, &metric, &options, &[1])?;
    let text = match args.format {
        Format::Markdown => grid_markdown(&grid, &prov.lines()),
        Format::Csv => grid_csv(&grid, &prov.lines()),
    };
    emit(args.out.as_deref(), &text)
}

#[derive(Serialize)]
struct WordsimConfig {
    file_x: String,
    spans_x: String,
    file_y: String,
    spans_y: String,
    frame_rate_hz: f64,
}

fn cmd_wordsim(args: WordsimArgs) -> Result<(), Failure> {
    let cfg = WordsimConfig {
        file_x: display(&args.file_x),
        spans_x: display(&args.spans_x),
        file_y: display(&args.file_y),
        spans_y: display(&args.spans_y),
        frame_rate_hz: args.frame_rate,
    };
    let prov = Provenance::new("wordsim", &cfg);
    let words = |seq: &Path, spans: &Path| -> Result<Vec<(String, Vec<f64>)>, Failure> {
        let s = load_sequence(seq)?.normalize_rows()?;
        let spans = load_word_spans(spans)?;
        s.word_embeddings(&spans, args.frame_rate)
            .map_err(|e| Failure::from(e.in_file(seq)))
    };
    let wx = words(&args.file_x, &args.spans_x)?;
    let wy = words(&args.file_y, &args.spans_y)?;
    let sim = word_similarity(&wx, &wy)?;
    let labels = |w: &[(String, Vec<f64>)]| w.iter().map(|(l, _)| l.clone()).collect::<Vec<_>>();
    let text = word_similarity_csv(&labels(&wx), &labels(&wy), &sim, &prov.lines());
    emit(args.out.as_deref(), &text)
}

#[derive(Serialize)]
struct SweepConfig {
    manifests: Vec<(String, String)>,
    query_language: String,
    candidate_language: String,
    metric: MetricSpec,
    permissive: bool,
    format: Format,
}

fn cmd_sweep(args: SweepArgs) -> Result<(), Failure> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    let metric = args.common.metric.resolve(&file)?;
    let workers = resolve_workers(args.parallel.workers, &file)?;
    let cfg = SweepConfig {
        manifests: args.manifests.iter().map(|(l, p)| (l.clone(), display(p))).collect(),
        query_language: args.query_lang.clone(),
        candidate_language: args.cand_lang.clone(),
        metric,
        permissive: args.parallel.permissive,
        format: args.format,
    };
    let prov = Provenance::new("sweep", &cfg);
    let options = ScoreOptions {
        workers,
        permissive: args.parallel.permissive,
    };
    // A manifest that cannot even be loaded is recorded like any other
    // per-manifest failure.
    let mut entries = Vec::with_capacity(args.manifests.len());
    for (label, path) in &args.manifests {
        let entry = match load_manifest(path) {
            Ok(m) => speechsim::sweep(&[(label.clone(), m)], &args.query_lang, &args.cand_lang, &metric, &options)
                .remove(0),
            Err(e) => speechsim::retrieval::SweepEntry {
                label: label.clone(),
                r_at_1: None,
                error: Some(e.message),
            },
        };
        if let Some(err) = &entry.error {
            eprintln!("{label}: {err}");
        }
        entries.push(entry);
    }
    let text = match args.format {
        Format::Markdown => sweep_markdown(&entries, &prov.lines()),
        Format::Csv => sweep_csv(&entries, &prov.lines()),
    };
    emit(args.out.as_deref(), &text)
}

fn cmd_synth(args: SynthArgs) -> Result<(), Failure> {
    let file = FileConfig::load(args.config.as_deref())?;
    let mut cfg: SynthConfig = file.synth.unwrap_or_default();
    cfg.seed = args.seed;
    macro_rules! set {
        ($($flag:ident => $field:ident),*) => {
            $(if let Some(v) = args.$flag { cfg.$field = v; })*
        };
    }
    set!(n_items => n_items, dim => d, words_per_item => words_per_item, frames_per_word => frames_per_word,
        noise_sigma => noise_sigma, shuffle_word_order => shuffle_word_order, n_languages => n_languages,
        frame_rate => frame_rate_hz);
    cfg.validate()?;
    let manifest = generate(&cfg, &args.out_dir)?;
    eprintln!(
        "wrote {} items x {} languages to {}",
        manifest.items.len(),
        manifest.languages.len(),
        args.out_dir.display()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Score(a) => cmd_score(a),
        Command::Retrieve(a) => cmd_retrieve(a),
        Command::Grid(a) => cmd_grid(a),
        Command::Wordsim(a) => cmd_wordsim(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

fn main() -> ExitCode {
    // clap exits with code 2 on usage errors by itself.
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
