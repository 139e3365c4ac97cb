//! Command-line driver: dataset synthesis, KEP filtering, training,
//! evaluation and report conversion.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use neurododge::event::{read_stream, write_stream, ObjectKind};
use neurododge::harness::{
    emit_report, evaluate, make_dataset, read_report, render_report, run_training, save_training, EvalOptions,
    EvalReport, ExperimentConfig, LabeledScene, Lighting, Mode, ReportFormat, TestSet,
};
use neurododge::kep::{self, KepConfig};
use neurododge::snn::read_network;
use neurododge::Error;

#[derive(Parser)]
#[command(name = "neurododge", version, about = "Event-driven spiking perception for obstacle dodging")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesise labelled scenes as EVS1 files with a manifest.
    Gen(GenArgs),
    /// Run the key-event filter over streams and print event statistics.
    Kep(KepArgs),
    /// Train a network for one window and write the checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint and write a report.
    Eval(EvalArgs),
    /// Convert a JSON report to another format.
    Report(ReportArgs),
}

/// Overrides shared by every command that builds an experiment config.
#[derive(Args)]
struct ConfigArgs {
    /// TOML experiment config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    train_size: Option<usize>,
    #[arg(long)]
    test_size: Option<usize>,
    #[arg(long)]
    width: Option<u16>,
    #[arg(long)]
    height: Option<u16>,
    /// Lighting conditions to generate (normal, low-light); repeatable.
    #[arg(long = "lighting")]
    lighting: Vec<Lighting>,
    /// Objects for the test split (disk, tall-blob); repeatable.
    #[arg(long = "test-object")]
    test_objects: Vec<ObjectKind>,
    /// Fraction of scenes approaching from the left.
    #[arg(long)]
    direction_balance: Option<f64>,
    /// Background noise in normal light, events per pixel per second.
    #[arg(long)]
    noise_rate: Option<f64>,
}

impl ConfigArgs {
    fn load(&self, seed: Option<u64>) -> Result<ExperimentConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_toml(&fs::read_to_string(path)?)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = seed {
            cfg.seed = seed;
        }
        set(&mut cfg.train_size, self.train_size);
        set(&mut cfg.test_size, self.test_size);
        set(&mut cfg.width, self.width);
        set(&mut cfg.height, self.height);
        set(&mut cfg.scenes.direction_balance, self.direction_balance);
        set(&mut cfg.scenes.noise_rate, self.noise_rate);
        if !self.lighting.is_empty() {
            cfg.lighting = self.lighting.clone();
        }
        if !self.test_objects.is_empty() {
            cfg.test_objects = self.test_objects.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

#[derive(Args)]
struct KepFlags {
    /// Enable the key-event filter.
    #[arg(long)]
    kep: bool,
    /// Normalised distance threshold of the main stream.
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    /// Random candidate subsets scored per stream.
    #[arg(long)]
    trials: Option<usize>,
    /// Histogram cells per axis.
    #[arg(long = "cells", short = 'K')]
    cells: Option<usize>,
    #[arg(long)]
    kep_seed: Option<u64>,
}

impl KepFlags {
    fn apply(&self, cfg: &mut KepConfig) {
        set(&mut cfg.radius, self.radius);
        set(&mut cfg.lambda1, self.lambda1);
        set(&mut cfg.lambda2, self.lambda2);
        set(&mut cfg.trials, self.trials);
        set(&mut cfg.cells, self.cells);
        set(&mut cfg.seed, self.kep_seed);
    }
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    seed: u64,
    /// Output directory; `train/` and `test/` are created inside it.
    #[arg(long)]
    out: PathBuf,
    /// Windows to generate, milliseconds; defaults to the config's sweep.
    #[arg(long = "window")]
    windows: Vec<u32>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct KepArgs {
    /// EVS1 files or dataset directories containing a manifest.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Write each key stream here under the input's file name.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    kep: KepFlags,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    window: u32,
    /// Checkpoint path.
    #[arg(long)]
    out: PathBuf,
    /// Training history path; defaults to the checkpoint path with `.history.json`.
    #[arg(long)]
    history: Option<PathBuf>,
    /// Dataset directory written by `gen`; scenes are generated in-run otherwise.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Seed of the initial weights; defaults to the config value.
    #[arg(long)]
    init_seed: Option<u64>,
    #[command(flatten)]
    kep: KepFlags,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset directory written by `gen`; scenes are generated in-run otherwise.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Seed for in-run generation.
    #[arg(long)]
    seed: Option<u64>,
    /// async or ef-snn; repeatable, defaults to the config's modes.
    #[arg(long = "mode")]
    modes: Vec<Mode>,
    /// Quantize the checkpoint before evaluating.
    #[arg(long)]
    quantized: bool,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    units: Option<f64>,
    /// Record wall-clock time per inference.
    #[arg(long)]
    timing: bool,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "json")]
    format: ReportFormat,
    #[command(flatten)]
    kep: KepFlags,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct ReportArgs {
    /// JSON report written by `eval`.
    input: PathBuf,
    #[arg(long, default_value = "markdown")]
    format: ReportFormat,
    /// Output path; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// One line of a dataset manifest.
#[derive(Debug, Serialize, Deserialize)]
struct ManifestRow {
    file: String,
    label: usize,
    object: ObjectKind,
    condition: Lighting,
    window_ms: u32,
}

const MANIFEST: &str = "manifest.csv";

fn write_split(dir: &Path, scenes: &[&LabeledScene]) -> Result<(), Error> {
    fs::create_dir_all(dir)?;
    let mut manifest = csv::Writer::from_path(dir.join(MANIFEST))?;
    for (i, scene) in scenes.iter().enumerate() {
        let file = format!("{}-{}-{}ms-{:05}.evs", scene.object.name(), scene.lighting.name(), scene.window_ms, i);
        write_stream(&scene.stream, dir.join(&file))?;
        manifest.serialize(ManifestRow {
            file,
            label: scene.label,
            object: scene.object,
            condition: scene.lighting,
            window_ms: scene.window_ms,
        })?;
    }
    manifest.flush()?;
    Ok(())
}

/// Loads every stream listed in `dir/manifest.csv`. Generator tags are not
/// stored on disk, so loaded scenes carry none.
fn read_split(dir: &Path) -> Result<Vec<LabeledScene>, Error> {
    let mut reader = csv::Reader::from_path(dir.join(MANIFEST))?;
    let mut scenes = Vec::new();
    for row in reader.deserialize() {
        let row: ManifestRow = row?;
        scenes.push(LabeledScene {
            stream: read_stream(dir.join(&row.file))?,
            label: row.label,
            object: row.object,
            lighting: row.condition,
            window_ms: row.window_ms,
            is_object: Vec::new(),
        });
    }
    Ok(scenes)
}

fn group_test_sets(scenes: Vec<LabeledScene>) -> Vec<TestSet> {
    let mut groups: BTreeMap<(ObjectKind, Lighting, u32), Vec<LabeledScene>> = BTreeMap::new();
    for s in scenes {
        groups.entry((s.object, s.lighting, s.window_ms)).or_default().push(s);
    }
    groups
        .into_iter()
        .map(|((object, lighting, window_ms), scenes)| TestSet { object, lighting, window_ms, scenes })
        .collect()
}

fn gen(args: GenArgs) -> Result<(), Error> {
    let cfg = args.config.load(Some(args.seed))?;
    let windows = if args.windows.is_empty() { cfg.windows_ms.clone() } else { args.windows };
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut datasets = Vec::new();
    for &w in &windows {
        datasets.push(make_dataset(&cfg, w)?);
    }
    for d in &datasets {
        train.extend(d.train.iter());
        test.extend(d.test.iter().flat_map(|s| s.scenes.iter()));
    }
    write_split(&args.out.join("train"), &train)?;
    write_split(&args.out.join("test"), &test)?;
    fs::write(args.out.join("config.toml"), toml::to_string(&cfg).map_err(|e| Error::Config(e.to_string()))?)?;
    println!("wrote {} training and {} test streams to {}", train.len(), test.len(), args.out.display());
    Ok(())
}

fn kep_inputs(paths: &[PathBuf]) -> Result<Vec<PathBuf>, Error> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut reader = csv::Reader::from_path(p.join(MANIFEST))?;
            for row in reader.deserialize() {
                let row: ManifestRow = row?;
                files.push(p.join(row.file));
            }
        } else {
            files.push(p.clone());
        }
    }
    Ok(files)
}

fn kep_cmd(args: KepArgs) -> Result<(), Error> {
    let mut cfg = KepConfig::default();
    args.kep.apply(&mut cfg);
    cfg.validate()?;
    let files = kep_inputs(&args.inputs)?;
    if files.is_empty() {
        return Err(Error::Empty("stream list"));
    }
    if let Some(out) = &args.out {
        fs::create_dir_all(out)?;
    }
    let (mut raw, mut main, mut key) = (0usize, 0usize, 0usize);
    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    writeln!(w, "file,raw,main,key")?;
    for f in &files {
        let stream = read_stream(f)?;
        let result = kep::run(&stream, &cfg)?;
        let (m, k) = result.sizes();
        writeln!(w, "{},{},{},{}", f.display(), stream.len(), m, k)?;
        raw += stream.len();
        main += m;
        key += k;
        if let Some(out) = &args.out {
            let name =
                f.file_name().ok_or_else(|| Error::InvalidArgument(format!("{} has no file name", f.display())))?;
            write_stream(&result.key, out.join(name))?;
        }
    }
    let n = files.len() as f64;
    writeln!(w, "mean,{:.1},{:.1},{:.1}", raw as f64 / n, main as f64 / n, key as f64 / n)?;
    if raw > 0 {
        writeln!(w, "key/raw,{:.3}", key as f64 / raw as f64)?;
    }
    Ok(())
}

fn train(args: TrainArgs) -> Result<(), Error> {
    let mut cfg = args.config.load(Some(args.seed))?;
    cfg.train.seed = args.seed;
    set(&mut cfg.train.epochs, args.epochs);
    set(&mut cfg.train.batch_size, args.batch_size);
    set(&mut cfg.train.learning_rate, args.learning_rate);
    set(&mut cfg.init_seed, args.init_seed);
    cfg.kep |= args.kep.kep;
    args.kep.apply(&mut cfg.kep_config);
    cfg.validate()?;
    let scenes = match &args.data {
        Some(dir) => read_split(&dir.join("train"))?.into_iter().filter(|s| s.window_ms == args.window).collect(),
        None => make_dataset(&cfg, args.window)?.train,
    };
    if scenes.is_empty() {
        return Err(Error::Empty("training scenes for this window"));
    }
    let (net, history) = run_training(&cfg, &scenes, args.window)?;
    let history_path = args.history.unwrap_or_else(|| args.out.with_extension("history.json"));
    save_training(&net, &history, &args.out, &history_path)?;
    if let Some(last) = history.last() {
        println!("epoch {}: loss {:.5} accuracy {:.3}", last.epoch, last.loss, last.accuracy);
    }
    println!("checkpoint written to {}", args.out.display());
    Ok(())
}

fn eval(args: EvalArgs) -> Result<(), Error> {
    let mut cfg = args.config.load(args.seed)?;
    cfg.kep |= args.kep.kep;
    args.kep.apply(&mut cfg.kep_config);
    cfg.quantize |= args.quantized;
    cfg.timing |= args.timing;
    set(&mut cfg.sigma, args.sigma);
    set(&mut cfg.units, args.units);
    if !args.modes.is_empty() {
        cfg.modes = args.modes.clone();
    }
    cfg.validate()?;
    let net = read_network(&args.checkpoint)?;
    let window = net.steps as u32;
    let sets = match &args.data {
        Some(dir) => group_test_sets(read_split(&dir.join("test"))?),
        None => make_dataset(&cfg, window)?.test,
    };
    let sets: Vec<TestSet> = sets.into_iter().filter(|s| s.window_ms == window).collect();
    if sets.is_empty() {
        return Err(Error::Empty("test sets matching the checkpoint window"));
    }
    let mut report = EvalReport { config: Some(cfg.clone()), conditions: Vec::new() };
    for &mode in &cfg.modes {
        report.merge(evaluate(&net, &sets, &EvalOptions::from_config(&cfg, mode))?);
    }
    emit_report(&report, &args.out, args.format)?;
    print!("{}", render_report(&report, ReportFormat::Markdown)?);
    Ok(())
}

fn report(args: ReportArgs) -> Result<(), Error> {
    let report = read_report(&args.input)?;
    match &args.out {
        Some(path) => emit_report(&report, path, args.format),
        None => {
            print!("{}", render_report(&report, args.format)?);
            Ok(())
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidArgument(_) | Error::Config(_) => 1,
        Error::Numeric(_) | Error::MissingTraces => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Kep(a) => kep_cmd(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
