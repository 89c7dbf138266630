//! `porestack` command-line interface.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::connectivity::Connectivity;
use crate::error::{Error, Result};
use crate::image::{GrayImage, ImageStack, LabelMap};
use crate::io::{list_slices, read_image, read_labels, resolve_subdir, slice_name, write_image, write_labels, write_labels_rgb};
use crate::masks::{generate_training_masks, status_report};
use crate::metrics::{percent_porosity, MetricsReport};
use crate::nn::{build_dataset, build_model, loss_history_text, predict, train_with, weights_io, OptimizerKind};
use crate::phantom::{render_stack, PhantomSpec};
use crate::Class;

#[derive(Debug, Parser)]
#[command(name = "porestack", version, about = "Dual-pore segmentation and porosity of tomography slice stacks")]
pub struct Cli {
    /// Run configuration file (`key = value` lines).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Seed for every random choice.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for per-slice and per-sample work.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    pub threads: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render synthetic image and ground-truth label stacks.
    Phantom(PhantomArgs),
    /// Generate training labels with the classical pipeline.
    MakeMasks(MakeMasksArgs),
    /// Train the segmentation network on image/label pairs.
    Train(TrainArgs),
    /// Segment slices with trained weights.
    Predict(PredictArgs),
    /// Compare predicted label maps with ground truth.
    Evaluate(EvaluateArgs),
    /// Percent porosity per pore class.
    Porosity(PorosityArgs),
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    /// Output directory; receives `images/` and `labels/`.
    pub out: PathBuf,
    #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u64).range(1..))]
    pub slices: u64,
    /// Homogenization time in [0, 1]; repeat for several stacks.
    #[arg(long = "t", default_values_t = [0.0])]
    pub times: Vec<f64>,
    #[arg(long, default_value_t = 128, value_parser = clap::value_parser!(u64).range(16..))]
    pub canvas: u64,
    /// Gaussian noise standard deviation in grey levels.
    #[arg(long, default_value_t = 10.0)]
    pub noise: f64,
    /// Also write colour label renders to `labels_rgb/`.
    #[arg(long)]
    pub rgb: bool,
}

#[derive(Debug, Args)]
pub struct MakeMasksArgs {
    /// Slice directory (or a directory containing `images/`).
    pub input: PathBuf,
    /// Output pair directory; receives `images/`, `labels/` and `status.csv`.
    pub out: PathBuf,
    #[arg(long)]
    pub core_fraction: Option<f64>,
    #[arg(long)]
    pub connectivity: Option<u32>,
    #[arg(long)]
    pub rgb: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Pair directory with `images/` and `labels/` matched by file name.
    pub pairs: PathBuf,
    /// Weights file to write; the loss history goes beside it.
    pub weights: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub optimizer: Option<String>,
    #[arg(long = "lr")]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub input_size: Option<usize>,
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long)]
    pub base_channels: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub augment_copies: Option<usize>,
    /// Suppress per-epoch progress.
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    pub weights: PathBuf,
    /// Slice directory (or a directory containing `images/`).
    pub input: PathBuf,
    /// Output directory for label maps.
    pub out: PathBuf,
    #[arg(long)]
    pub rgb: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Predicted label maps (or a directory containing `labels/`).
    pub predicted: PathBuf,
    /// Ground-truth label maps (or a directory containing `labels/`).
    pub truth: PathBuf,
    /// Report file to write.
    pub report: PathBuf,
}

#[derive(Debug, Args)]
pub struct PorosityArgs {
    /// Label maps (or a directory containing `labels/`).
    pub labels: PathBuf,
    /// Report file to write.
    pub report: PathBuf,
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                2
            } else {
                1
            }
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.threads {
        cfg.threads = Some(t as usize);
    }
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli)?;
    let threads = cfg.threads;
    let mut job = move || match &cli.command {
        Command::Phantom(a) => cmd_phantom(a, &cfg),
        Command::MakeMasks(a) => {
            if let Some(f) = a.core_fraction {
                cfg.pipeline.core_fraction = f;
            }
            if let Some(c) = a.connectivity {
                cfg.pipeline.connectivity = Connectivity::from_number(c)
                    .ok_or_else(|| Error::Usage(format!("connectivity must be 4 or 8, got {c}")))?;
            }
            cfg.validate()?;
            cmd_make_masks(a, &cfg)
        }
        Command::Train(a) => {
            apply_train_overrides(&mut cfg, a)?;
            cmd_train(a, &cfg)
        }
        Command::Predict(a) => cmd_predict(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Porosity(a) => cmd_porosity(a),
    };
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {n} threads: {e}")))?
            .install(job),
        None => job(),
    }
}

fn apply_train_overrides(cfg: &mut RunConfig, a: &TrainArgs) -> Result<()> {
    if let Some(v) = a.epochs {
        cfg.train.epochs = v;
    }
    if let Some(v) = &a.optimizer {
        cfg.set("optimizer", v)?;
    }
    if let Some(v) = a.learning_rate {
        cfg.learning_rate = Some(v);
    }
    if let Some(v) = a.batch_size {
        cfg.train.batch_size = v;
    }
    if let Some(v) = a.input_size {
        cfg.model.input_size = v;
    }
    if let Some(v) = a.levels {
        cfg.model.levels = v;
    }
    if let Some(v) = a.base_channels {
        cfg.model.base_channels = v;
    }
    if let Some(v) = a.dropout {
        cfg.model.dropout_rate = v;
    }
    if let Some(v) = a.augment_copies {
        cfg.augment.copies = v;
    }
    cfg.validate()
}

fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

fn slices_in(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::Usage(format!("{} is not a directory", dir.display())));
    }
    let files = list_slices(dir)?;
    if files.is_empty() {
        return Err(Error::Usage(format!("no .pgm or .png slices in {}", dir.display())));
    }
    Ok(files)
}

fn read_all<T: Send>(files: &[PathBuf], read: impl Fn(&Path) -> Result<T> + Sync) -> Result<Vec<T>> {
    files
        .par_iter()
        .map(|p| read(p).map_err(|e| annotate(p, e)))
        .collect()
}

fn annotate(p: &Path, e: Error) -> Error {
    match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", p.display())),
        Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("{}: {io}", p.display()))),
        other => other,
    }
}

/// Pairs files of two directories by file stem; every file must have a partner.
fn match_by_stem(a: &[PathBuf], b: &[PathBuf]) -> Result<Vec<(PathBuf, PathBuf)>> {
    let mut out = Vec::with_capacity(a.len());
    for p in a {
        let s = stem(p);
        let q = b
            .iter()
            .find(|q| stem(q) == s)
            .ok_or_else(|| Error::Usage(format!("no counterpart for {}", file_name(p))))?;
        out.push((p.clone(), q.clone()));
    }
    if b.len() != a.len() {
        return Err(Error::Usage(format!("{} files on one side, {} on the other", a.len(), b.len())));
    }
    Ok(out)
}

fn cmd_phantom(a: &PhantomArgs, cfg: &RunConfig) -> Result<()> {
    if let Some(t) = a.times.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::Usage(format!("--t must be in [0, 1], got {t}")));
    }
    let spec = PhantomSpec::for_canvas(a.canvas as usize)
        .with_seed(cfg.seed)
        .with_noise(a.noise);
    spec.validate()?;
    let stacks = render_stack(&spec, a.slices as usize, &a.times)?;
    let mut summary = String::from("t,slices,pore_i_percent,pore_ii_percent\n");
    for stack in &stacks {
        let dir = if stacks.len() == 1 {
            a.out.clone()
        } else {
            a.out.join(format!("t_{}", stack.time))
        };
        let (img_dir, lab_dir) = (dir.join("images"), dir.join("labels"));
        ensure_dir(&img_dir)?;
        ensure_dir(&lab_dir)?;
        if a.rgb {
            ensure_dir(&dir.join("labels_rgb"))?;
        }
        for (i, (img, lab)) in stack.images.slices().iter().zip(&stack.labels).enumerate() {
            write_image(&img_dir.join(slice_name(i, "pgm")), img)?;
            write_labels(&lab_dir.join(slice_name(i, "pgm")), lab)?;
            if a.rgb {
                write_labels_rgb(&dir.join("labels_rgb").join(slice_name(i, "png")), lab)?;
            }
        }
        let (p1, p2) = stack.analytic_porosity();
        summary.push_str(&format!("{},{},{p1:.6},{p2:.6}\n", stack.time, a.slices));
        println!(
            "t={}: {} slices in {}; analytic porosity pore I {p1:.3}%, pore II {p2:.3}%",
            stack.time,
            a.slices,
            dir.display()
        );
    }
    ensure_dir(&a.out)?;
    fs::write(a.out.join("summary.csv"), summary)?;
    Ok(())
}

fn cmd_make_masks(a: &MakeMasksArgs, cfg: &RunConfig) -> Result<()> {
    let files = slices_in(&resolve_subdir(&a.input, "images"))?;
    let images = read_all(&files, read_image)?;
    let (w, h) = images[0].dims();
    if let Some((p, img)) = files.iter().zip(&images).find(|(_, i)| i.dims() != (w, h)) {
        return Err(Error::Usage(format!(
            "{} is {}x{}, expected {w}x{h}",
            file_name(p),
            img.width(),
            img.height()
        )));
    }
    let stack = ImageStack::new(file_name(&a.input), images)?;
    let outcomes = generate_training_masks(&stack, &cfg.pipeline);
    let (img_dir, lab_dir) = (a.out.join("images"), a.out.join("labels"));
    ensure_dir(&img_dir)?;
    ensure_dir(&lab_dir)?;
    if a.rgb {
        ensure_dir(&a.out.join("labels_rgb"))?;
    }
    let mut accepted = 0;
    for (o, file) in outcomes.iter().zip(&files) {
        if let Some(labels) = o.labels() {
            let name = format!("{}.pgm", stem(file));
            write_image(&img_dir.join(&name), &stack.slices()[o.index])?;
            write_labels(&lab_dir.join(&name), labels)?;
            if a.rgb {
                write_labels_rgb(&a.out.join("labels_rgb").join(format!("{}.png", stem(file))), labels)?;
            }
            accepted += 1;
        }
    }
    fs::write(a.out.join("status.csv"), status_report(&outcomes))?;
    println!("{accepted} of {} slices accepted; status in {}", outcomes.len(), a.out.join("status.csv").display());
    if accepted == 0 {
        return Err(Error::NoSample);
    }
    Ok(())
}

fn read_pairs(dir: &Path) -> Result<Vec<(GrayImage, LabelMap)>> {
    let images = slices_in(&dir.join("images"))?;
    let labels = slices_in(&dir.join("labels"))?;
    let matched = match_by_stem(&images, &labels)?;
    matched
        .par_iter()
        .map(|(ip, lp)| {
            let img = read_image(ip).map_err(|e| annotate(ip, e))?;
            let lab = read_labels(lp).map_err(|e| annotate(lp, e))?;
            if img.dims() != lab.dims() {
                return Err(Error::Usage(format!("{} and its labels differ in size", file_name(ip))));
            }
            Ok((img, lab))
        })
        .collect()
}

/// Loss history path beside the weights: `model.psnw` -> `model.loss.csv`.
pub fn history_path(weights: &Path) -> PathBuf {
    weights.with_file_name(format!("{}.loss.csv", stem(weights)))
}

fn cmd_train(a: &TrainArgs, cfg: &RunConfig) -> Result<()> {
    let pairs = read_pairs(&a.pairs)?;
    let data = build_dataset(&pairs, &cfg.augment, cfg.model.input_size, cfg.seed)?;
    let model = build_model::<f32>(&cfg.model, cfg.seed.wrapping_add(1))?;
    let tcfg = cfg.train_config();
    let kind: OptimizerKind = tcfg.optimizer;
    if !a.quiet {
        eprintln!(
            "training on {} samples ({} pairs) for {} epochs with {} (lr {})",
            data.len(),
            pairs.len(),
            tcfg.epochs,
            kind.name(),
            tcfg.learning_rate
        );
        let d = model.describe();
        eprintln!(
            "model: {} conv layers ({} 3x3, {} 1x1, {} transposed), {} parameters",
            d.conv_layers(),
            d.conv3x3,
            d.conv1x1,
            d.transposed,
            d.parameters
        );
    }
    let quiet = a.quiet;
    let out = train_with(model, &data, &tcfg, |e, l| {
        if !quiet {
            eprintln!("epoch {e}: loss {l:.6}");
        }
    })?;
    if let Some(dir) = a.weights.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    weights_io::save(&a.weights, &out.best)?;
    fs::write(history_path(&a.weights), loss_history_text(&out.history))?;
    match out.best_epoch {
        Some(e) => println!("best epoch {e} (loss {:.6}); weights in {}", out.history[e], a.weights.display()),
        None => println!("no epochs run; initial weights in {}", a.weights.display()),
    }
    Ok(())
}

fn cmd_predict(a: &PredictArgs) -> Result<()> {
    let model = weights_io::load(&a.weights).map_err(|e| match e {
        Error::Io(io) => Error::CorruptWeights(format!("cannot read {}: {io}", a.weights.display())),
        other => other,
    })?;
    let files = slices_in(&resolve_subdir(&a.input, "images"))?;
    let images = read_all(&files, read_image)?;
    let labels: Vec<LabelMap> = images.par_iter().map(|img| predict(&model, img)).collect::<Result<_>>()?;
    ensure_dir(&a.out)?;
    if a.rgb {
        ensure_dir(&a.out.join("rgb"))?;
    }
    for (f, l) in files.iter().zip(&labels) {
        write_labels(&a.out.join(format!("{}.pgm", stem(f))), l)?;
        if a.rgb {
            write_labels_rgb(&a.out.join("rgb").join(format!("{}.png", stem(f))), l)?;
        }
    }
    println!("{} slices segmented into {}", labels.len(), a.out.display());
    Ok(())
}

fn write_report(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    let pred = slices_in(&resolve_subdir(&a.predicted, "labels"))?;
    let truth = slices_in(&resolve_subdir(&a.truth, "labels"))?;
    let matched = match_by_stem(&pred, &truth)?;
    let pairs: Vec<(LabelMap, LabelMap)> = matched
        .par_iter()
        .map(|(p, t)| Ok((read_labels(p).map_err(|e| annotate(p, e))?, read_labels(t).map_err(|e| annotate(t, e))?)))
        .collect::<Result<_>>()?;
    let report = MetricsReport::evaluate(&pairs).map_err(|e| match e {
        Error::DimensionMismatch { expected, actual } => {
            Error::Usage(format!("label maps differ in size: {expected:?} vs {actual:?}"))
        }
        other => other,
    })?;
    write_report(&a.report, &report.to_text())?;
    for c in [Class::PoreI, Class::PoreII] {
        let m = report.total_for(c);
        println!(
            "{}: precision {:.4} recall {:.4} f1 {:.4}",
            c.name(),
            m.precision.value,
            m.recall.value,
            m.f1.value
        );
    }
    Ok(())
}

fn cmd_porosity(a: &PorosityArgs) -> Result<()> {
    let files = slices_in(&resolve_subdir(&a.labels, "labels"))?;
    let labels = read_all(&files, read_labels)?;
    let report = percent_porosity(&labels)?;
    write_report(&a.report, &report.to_text())?;
    println!(
        "pore I {:.4}%, pore II {:.4}%, total {:.4}%",
        report.percent(Class::PoreI),
        report.percent(Class::PoreII),
        report.percent_total()
    );
    Ok(())
}
