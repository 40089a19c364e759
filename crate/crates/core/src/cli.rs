//! Command-line front end. Every output file starts with a header naming the
//! tool version and the hash of the effective config.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use thiserror::Error;

use crate::analysis::{featurize, kmeans_scan, pca, report, synthetic_corpus, AnalysisError};
use crate::automaton::simulate as simulate_spec;
use crate::fit::{export_model, import_model, FitError, JumpModel};
use crate::framelog::{parse_log, write_log_with_header, ExperimentLog};
use crate::harness::{HarnessError, SyntheticGameSpec};
use crate::pipeline::{extract, fit_extraction, run_synthetic, segments_csv, tracks_csv, PipelineConfig, PipelineError};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
/// Extension of model files read by `analyze`.
pub const MODEL_EXTENSION: &str = "model";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Input {
        path: PathBuf,
        #[source]
        source: PipelineError,
    },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("{0}")]
    Usage(String),
}

impl From<FitError> for CliError {
    fn from(e: FitError) -> Self {
        CliError::Pipeline(e.into())
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        CliError::Pipeline(e.into())
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        CliError::Pipeline(e.into())
    }
}

#[derive(Debug, Parser)]
#[command(name = "jumpinfer", version, about = "Infer platformer jump automata from sprite-table logs")]
pub struct Cli {
    /// Key-value config file; absent keys keep their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for parallel stages.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Seed for every randomized stage; overrides `analysis.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Produce a frame log from a synthetic game or normalize an existing log.
    Run(RunArgs),
    /// Write the spec file of a built-in synthetic game.
    Template(TemplateArgs),
    /// Merge, track and segment a frame log; writes the segments CSV.
    Extract(ExtractArgs),
    /// Infer a jump model from one or more frame logs.
    Fit(FitArgs),
    /// Replay a model for chosen hold durations; writes a height CSV.
    Simulate(SimulateArgs),
    /// PCA and k-means over a directory of models.
    Analyze(AnalyzeArgs),
    /// Overlay the jump arcs of several models at one hold level.
    Compare(CompareArgs),
    /// Write the bundled synthetic model corpus.
    Corpus(CorpusArgs),
    /// Print the effective config after the file and flags are applied.
    Config(ConfigArgs),
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct RunSource {
    /// Synthetic game spec file.
    #[arg(long)]
    pub synthetic: Option<PathBuf>,
    /// Name of a built-in synthetic game.
    #[arg(long)]
    pub builtin: Option<String>,
    /// Existing frame log to validate and rewrite.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub source: RunSource,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TemplateArgs {
    /// One of the built-in names; `--list` prints them.
    pub name: Option<String>,
    #[arg(long)]
    pub list: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub log: PathBuf,
    /// Segments CSV; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write one line per merged sprite group.
    #[arg(long)]
    pub dump_groups: Option<PathBuf>,
    /// Also write every tracked point as CSV.
    #[arg(long)]
    pub dump_tracks: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Frame logs; several logs are fitted in parallel.
    #[arg(long, required = true, num_args = 1.., value_delimiter = ',')]
    pub log: Vec<PathBuf>,
    /// Model file for a single log, or a directory for several.
    #[arg(long)]
    pub out: PathBuf,
    /// Release year recorded in the model.
    #[arg(long)]
    pub year: Option<u32>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Hold duration in frames; repeatable.
    #[arg(long)]
    pub hold: Vec<u32>,
    /// Add the model's minimum hold.
    #[arg(long)]
    pub hold_min: bool,
    /// Add the midpoint of the model's hold range.
    #[arg(long)]
    pub hold_median: bool,
    /// Add the model's maximum hold.
    #[arg(long)]
    pub hold_max: bool,
    #[arg(long, default_value_t = 240)]
    pub frames: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Directory of `.model` files.
    #[arg(long)]
    pub models: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum HoldLevel {
    Min,
    Median,
    Max,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Model files.
    #[arg(long, required = true, num_args = 1.., value_delimiter = ',')]
    pub models: Vec<PathBuf>,
    #[arg(long, value_enum)]
    pub hold: HoldLevel,
    #[arg(long, default_value_t = 240)]
    pub frames: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    #[arg(long)]
    pub out: PathBuf,
}

/// Header line shared by every artifact.
pub fn header(config: &PipelineConfig) -> String {
    format!("jumpinfer {VERSION} config={}", config.hash())
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, data: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, data).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => write_file(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn input_error<E: Into<PipelineError>>(path: &Path) -> impl FnOnce(E) -> CliError + '_ {
    move |e| CliError::Input {
        path: path.to_path_buf(),
        source: e.into(),
    }
}

fn load_log(path: &Path) -> Result<ExperimentLog, CliError> {
    let bytes = fs::read(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_log(&bytes).map_err(input_error(path))
}

fn load_model(path: &Path) -> Result<JumpModel, CliError> {
    import_model(&read_text(path)?).map_err(input_error(path))
}

fn model_text(model: &JumpModel, head: &str) -> String {
    format!("# {head}\n{}", export_model(model))
}

fn csv_with_header(head: &str, body: &str) -> String {
    format!("# {head}\n{body}")
}

/// Resolves the effective config from the file and global flags.
pub fn effective_config(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::parse(&read_text(path)?).map_err(input_error(path))?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.analysis.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

/// Runs the parsed subcommand.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let config = effective_config(&cli)?;
    match cli.jobs {
        Some(0) => return Err(CliError::Usage("--jobs must be at least 1".into())),
        Some(n) => {
            // A second initialization in the same process keeps the first pool.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        None => {}
    }
    let head = header(&config);
    match &cli.command {
        Command::Run(args) => cmd_run(args, &config),
        Command::Template(args) => cmd_template(args),
        Command::Extract(args) => cmd_extract(args, &config, &head),
        Command::Fit(args) => cmd_fit(args, &config, &head),
        Command::Simulate(args) => cmd_simulate(args, &head),
        Command::Analyze(args) => cmd_analyze(args, &config, &head),
        Command::Compare(args) => cmd_compare(args, &head),
        Command::Corpus(args) => cmd_corpus(args, &config, &head),
        Command::Config(args) => emit(args.out.as_deref(), &csv_with_header(&head, &config.to_text())),
    }
}

fn cmd_run(args: &RunArgs, config: &PipelineConfig) -> Result<(), CliError> {
    let log = if let Some(path) = &args.source.synthetic {
        let spec = SyntheticGameSpec::parse(&read_text(path)?).map_err(input_error(path))?;
        run_synthetic(&spec, config)?
    } else if let Some(name) = &args.source.builtin {
        let spec = SyntheticGameSpec::builtin(name).ok_or_else(|| unknown_builtin(name))?;
        run_synthetic(&spec, config)?
    } else {
        let path = args.source.log.as_ref().expect("clap requires one source");
        load_log(path)?
    };
    let version = format!("jumpinfer-{VERSION}");
    let hash = config.hash();
    let bytes = write_log_with_header(&log, &[("tool", &version), ("config", &hash)]);
    write_file(&args.out, bytes)
}

fn unknown_builtin(name: &str) -> CliError {
    CliError::Usage(format!(
        "unknown built-in game {name:?}; expected one of {}",
        SyntheticGameSpec::BUILTIN_NAMES.join(", ")
    ))
}

fn cmd_template(args: &TemplateArgs) -> Result<(), CliError> {
    if args.list {
        let mut text = SyntheticGameSpec::BUILTIN_NAMES.join("\n");
        text.push('\n');
        return emit(args.out.as_deref(), &text);
    }
    let name = args
        .name
        .as_deref()
        .ok_or_else(|| CliError::Usage("template needs a built-in name or --list".into()))?;
    let spec = SyntheticGameSpec::builtin(name).ok_or_else(|| unknown_builtin(name))?;
    emit(args.out.as_deref(), &spec.to_text())
}

fn cmd_extract(args: &ExtractArgs, config: &PipelineConfig, head: &str) -> Result<(), CliError> {
    let log = load_log(&args.log)?;
    let extraction = extract(&log, config).map_err(|e| CliError::Input {
        path: args.log.clone(),
        source: e,
    })?;
    if let Some(path) = &args.dump_groups {
        write_file(path, csv_with_header(head, &extraction.merge_map.dump()))?;
    }
    if let Some(path) = &args.dump_tracks {
        write_file(path, csv_with_header(head, &tracks_csv(&extraction)))?;
    }
    emit(args.out.as_deref(), &csv_with_header(head, &segments_csv(&extraction)))
}

fn fit_one(path: &Path, config: &PipelineConfig, year: Option<u32>) -> Result<JumpModel, CliError> {
    let log = load_log(path)?;
    let wrap = |e: PipelineError| CliError::Input {
        path: path.to_path_buf(),
        source: e,
    };
    let extraction = extract(&log, config).map_err(wrap)?;
    let (_, mut model) = fit_extraction(&extraction, &log.game_id, &log.character_id, config).map_err(wrap)?;
    model.year = year;
    Ok(model)
}

fn cmd_fit(args: &FitArgs, config: &PipelineConfig, head: &str) -> Result<(), CliError> {
    if let [single] = args.log.as_slice() {
        let model = fit_one(single, config, args.year)?;
        return write_file(&args.out, model_text(&model, head));
    }
    let models: Vec<JumpModel> = args
        .log
        .par_iter()
        .map(|path| fit_one(path, config, args.year))
        .collect::<Result<_, _>>()?;
    create_dir(&args.out)?;
    let mut seen = std::collections::BTreeSet::new();
    for model in &models {
        let name = format!("{}_{}.{MODEL_EXTENSION}", model.game, model.character);
        if !seen.insert(name.clone()) {
            return Err(CliError::Usage(format!("two logs produce the same model name {name}")));
        }
        write_file(&args.out.join(name), model_text(model, head))?;
    }
    Ok(())
}

fn hold_for(model: &JumpModel, level: HoldLevel) -> u32 {
    match level {
        HoldLevel::Min => model.min_hold,
        HoldLevel::Median => (model.min_hold + model.max_hold) / 2,
        HoldLevel::Max => model.max_hold,
    }
}

fn arc_rows(out: &mut String, label: &str, model: &JumpModel, hold: u32, frames: usize) {
    let sim = simulate_spec(&model.to_spec(0), hold, frames);
    for (frame, h) in sim.heights.iter().enumerate() {
        writeln!(out, "{label}{hold},{frame},{h}").unwrap();
    }
}

fn cmd_simulate(args: &SimulateArgs, head: &str) -> Result<(), CliError> {
    let model = load_model(&args.model)?;
    let mut holds = args.hold.clone();
    for (flag, level) in [
        (args.hold_min, HoldLevel::Min),
        (args.hold_median, HoldLevel::Median),
        (args.hold_max, HoldLevel::Max),
    ] {
        if flag {
            holds.push(hold_for(&model, level));
        }
    }
    if holds.is_empty() {
        return Err(CliError::Usage(
            "simulate needs --hold, --hold-min, --hold-median or --hold-max".into(),
        ));
    }
    let mut body = String::from("hold,frame,height\n");
    for hold in holds {
        arc_rows(&mut body, "", &model, hold, args.frames);
    }
    emit(args.out.as_deref(), &csv_with_header(head, &body))
}

fn cmd_compare(args: &CompareArgs, head: &str) -> Result<(), CliError> {
    let mut body = String::from("game,character,hold,frame,height\n");
    for path in &args.models {
        let model = load_model(path)?;
        let label = format!("{},{},", model.game, model.character);
        arc_rows(&mut body, &label, &model, hold_for(&model, args.hold), args.frames);
    }
    emit(args.out.as_deref(), &csv_with_header(head, &body))
}

fn cmd_analyze(args: &AnalyzeArgs, config: &PipelineConfig, head: &str) -> Result<(), CliError> {
    let entries = fs::read_dir(&args.models).map_err(|source| CliError::Io {
        path: args.models.clone(),
        source,
    })?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry
            .map_err(|source| CliError::Io {
                path: args.models.clone(),
                source,
            })?
            .path();
        if path.extension().is_some_and(|e| e == MODEL_EXTENSION) {
            paths.push(path);
        }
    }
    if paths.is_empty() {
        return Err(CliError::Usage(format!(
            "{}: no .{MODEL_EXTENSION} files to analyze",
            args.models.display()
        )));
    }
    paths.sort();
    let models = paths.iter().map(|p| load_model(p)).collect::<Result<Vec<_>, _>>()?;
    let matrix = featurize(&models)?;
    let pca_result = pca(&matrix.standardized)?;
    let kmeans = kmeans_scan(&matrix.standardized, &config.analysis)?;
    create_dir(&args.out)?;
    for (name, text) in report(head, &matrix, &pca_result, &kmeans, &models) {
        write_file(&args.out.join(name), text)?;
    }
    Ok(())
}

fn cmd_corpus(args: &CorpusArgs, config: &PipelineConfig, head: &str) -> Result<(), CliError> {
    create_dir(&args.out)?;
    let mut labels = String::from("game,character,group\n");
    for (model, group) in synthetic_corpus(config.analysis.seed) {
        let name = format!("{}_{}.{MODEL_EXTENSION}", model.game, model.character);
        write_file(&args.out.join(name), model_text(&model, head))?;
        writeln!(labels, "{},{},{group}", model.game, model.character).unwrap();
    }
    write_file(&args.out.join("labels.csv"), csv_with_header(head, &labels))
}
