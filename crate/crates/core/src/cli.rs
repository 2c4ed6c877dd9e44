//! Command-line entry points. Every command writes under its `--out`
//! directory. Exit codes: 0 success, 1 usage, 2 data, 3 divergence.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use image::{ImageBuffer, Rgb};

use crate::error::{Error, Result};
use crate::lfdata::{
    load_lightfield, read_pfm, save_png16, synth_lightfield, write_manifest, write_pfm, DisparityMap, Manifest,
    SceneKind, SceneSpec,
};
use crate::loss::SelectionMode;
use crate::metrics::{profile_line, write_profile_csv, MetricsReport, DEFAULT_THRESHOLDS};
use crate::ndf::{load_checkpoint, save_checkpoint};
use crate::optim::{reconstruct_with, LogRecord, ReconstructionConfig};
use crate::par::Execution;

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;

/// Disparity reconstruction for 4D light fields with a coordinate network.
#[derive(Debug, Parser)]
#[command(name = "ndf", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic light field: views, ground truth and manifest.
    Synth(SynthArgs),
    /// Fit a disparity field to a light field.
    Reconstruct(ReconstructArgs),
    /// Render a checkpoint at any resolution.
    Render(RenderArgs),
    /// Compare a disparity map against ground truth.
    Eval(EvalArgs),
    /// Export one row of a disparity map as CSV.
    Profile(ProfileArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    #[value(alias = "constant_plane")]
    Constant,
    #[value(alias = "slanted_plane")]
    Slanted,
    #[value(alias = "step_occluder")]
    Step,
    #[value(name = "two_layer", alias = "two-layer")]
    TwoLayer,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Scene family.
    #[arg(long, value_enum)]
    pub kind: KindArg,
    /// Disparity at the image centre (constant, slanted).
    #[arg(long, default_value_t = 1.5, allow_negative_numbers = true)]
    pub d0: f64,
    /// Disparity change per pixel along columns (slanted).
    #[arg(long, default_value_t = 0.01, allow_negative_numbers = true)]
    pub gx: f64,
    /// Disparity change per pixel along rows (slanted).
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub gy: f64,
    /// Near-layer disparity (step).
    #[arg(long, default_value_t = 1.5, allow_negative_numbers = true)]
    pub near: f64,
    /// Far-layer disparity (step).
    #[arg(long, default_value_t = -0.5, allow_negative_numbers = true)]
    pub far: f64,
    /// Normalized column where the near layer starts (step).
    #[arg(long, default_value_t = 0.5)]
    pub edge: f64,
    /// Foreground disparity (two_layer).
    #[arg(long, default_value_t = 1.5, allow_negative_numbers = true)]
    pub foreground: f64,
    /// Background disparity (two_layer).
    #[arg(long, default_value_t = -0.5, allow_negative_numbers = true)]
    pub background: f64,
    /// Normalized foreground rectangle `x0,y0,x1,y1` (two_layer).
    #[arg(long, value_delimiter = ',', num_args = 4, default_values_t = [0.3, 0.3, 0.7, 0.7])]
    pub rect: Vec<f64>,
    /// Square view size; overridden by --height/--width.
    #[arg(long, default_value_t = 64)]
    pub hw: usize,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    /// Square, odd view grid; overridden by --rows/--cols.
    #[arg(long, default_value_t = 5)]
    pub grid: usize,
    #[arg(long)]
    pub rows: Option<usize>,
    #[arg(long)]
    pub cols: Option<usize>,
    /// Texture and noise seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Standard deviation of additive Gaussian view noise.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// 1 for gray, 3 for RGB views.
    #[arg(long, default_value_t = 1)]
    pub channels: usize,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    /// Manifest listing the views.
    #[arg(long)]
    pub manifest: PathBuf,
    /// `key = value` config file; unset keys keep their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Start from the small-scene preset instead of the full defaults.
    #[arg(long, conflicts_with = "config")]
    pub desk: bool,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `half` or `all`.
    #[arg(long)]
    pub selection: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Convert views to gray before fitting.
    #[arg(long)]
    pub grayscale: bool,
    /// Run on one thread.
    #[arg(long)]
    pub sequential: bool,
    /// Scene name recorded in metrics.json.
    #[arg(long)]
    pub scene: Option<String>,
    /// Suppress progress lines on stderr.
    #[arg(long, short)]
    pub quiet: bool,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Output size as `HxW`; defaults to the training resolution.
    #[arg(long)]
    pub res: Option<String>,
    /// Factor applied to rendered disparities.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub scale: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    /// BadPix thresholds, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_THRESHOLDS)]
    pub thresholds: Vec<f64>,
    #[arg(long, default_value = "scene")]
    pub scene: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    #[arg(long)]
    pub map: PathBuf,
    #[arg(long)]
    pub row: usize,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parse `std::env::args`, run, and return the process exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Divergence { .. } => EXIT_DIVERGENCE,
        Error::Config(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => synth(&a),
        Command::Reconstruct(a) => reconstruct(&a),
        Command::Render(a) => render(&a),
        Command::Eval(a) => eval(&a),
        Command::Profile(a) => profile(&a),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn synth(a: &SynthArgs) -> Result<()> {
    let kind = match a.kind {
        KindArg::Constant => SceneKind::ConstantPlane { d0: a.d0 },
        KindArg::Slanted => SceneKind::SlantedPlane {
            d0: a.d0,
            gx: a.gx,
            gy: a.gy,
        },
        KindArg::Step => SceneKind::StepOccluder {
            near: a.near,
            far: a.far,
            edge: a.edge,
        },
        KindArg::TwoLayer => SceneKind::TwoLayer {
            foreground: a.foreground,
            background: a.background,
            rect: [a.rect[0], a.rect[1], a.rect[2], a.rect[3]],
        },
    };
    let spec = SceneSpec {
        noise_sigma: a.noise,
        channels: a.channels,
        ..SceneSpec::new(kind).with_seed(a.seed)
    };
    let (h, w) = (a.height.unwrap_or(a.hw), a.width.unwrap_or(a.hw));
    let (rows, cols) = (a.rows.unwrap_or(a.grid), a.cols.unwrap_or(a.grid));
    let (lf, gt) = synth_lightfield(&spec, h, w, rows, cols)?;
    create_dir(&a.out)?;
    let mut names = Vec::with_capacity(lf.view_count());
    for vc in lf.coordinates() {
        let name = format!("view_{:02}_{:02}.png", vc.v, vc.u);
        save_png16(lf.view_image(vc)?, &a.out.join(&name))?;
        names.push(name);
    }
    write_pfm(&gt, &a.out.join("gt.pfm"))?;
    write_manifest(&a.out.join("manifest.txt"), rows, cols, &names, Some("gt.pfm"), 1.0)?;
    eprintln!(
        "{}: {} views of {w}x{h} in {}",
        spec.kind.name(),
        lf.view_count(),
        a.out.display()
    );
    Ok(())
}

fn resolve_config(a: &ReconstructArgs) -> Result<ReconstructionConfig> {
    let mut cfg = match &a.config {
        // A malformed config is a usage problem, not a data problem.
        Some(path) => ReconstructionConfig::from_file(path).map_err(|e| match e {
            Error::Parse { .. } => Error::Config(e.to_string()),
            other => other,
        })?,
        None if a.desk => ReconstructionConfig::desk(),
        None => ReconstructionConfig::default(),
    };
    if let Some(v) = a.iterations {
        cfg.iterations = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = &a.selection {
        cfg.selection = v.parse::<SelectionMode>().map_err(Error::Config)?;
    }
    if let Some(v) = a.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = a.beta {
        cfg.beta = v;
    }
    cfg.grayscale |= a.grayscale;
    cfg.validate()?;
    Ok(cfg)
}

fn reconstruct(a: &ReconstructArgs) -> Result<()> {
    let cfg = resolve_config(a)?;
    let manifest = Manifest::read(&a.manifest)?;
    let lf = load_lightfield(&a.manifest)?;
    let gt = manifest.load_ground_truth()?;
    create_dir(&a.out)?;
    cfg.write(&a.out.join("config.txt"))?;

    let log_path = a.out.join("log.csv");
    let file = File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let mut log = BufWriter::new(file);
    writeln!(log, "{}", LogRecord::CSV_HEADER).map_err(|e| Error::io(&log_path, e))?;
    let mut log_error = None;
    let exec = if a.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let result = reconstruct_with(&lf, &cfg, exec, |r| {
        if let Some(monitor_loss) = r.monitor_loss {
            let rec = LogRecord {
                step: r.step,
                train_loss: r.loss,
                monitor_loss,
                sigma: r.sigma,
                learning_rate: r.learning_rate,
            };
            if let Err(e) = writeln!(log, "{}", rec.csv_row()) {
                log_error.get_or_insert(e);
            }
            if !a.quiet {
                eprintln!(
                    "step {:>6}  loss {:.5}  monitor {:.5}  sigma {:.3e}  lr {:.3e}",
                    r.step, r.loss, monitor_loss, r.sigma, r.learning_rate
                );
            }
        }
    });
    log.flush().map_err(|e| Error::io(&log_path, e))?;
    if let Some(e) = log_error {
        return Err(Error::io(&log_path, e));
    }
    let rec = result?;

    let disparity = scaled(&rec.disparity, lf.disparity_scale)?;
    write_pfm(&disparity, &a.out.join("disparity.pfm"))?;
    save_checkpoint(&rec.model, &a.out.join("checkpoint.ndf"))?;
    save_preview(&disparity, &a.out.join("preview.png"))?;
    if let Some(gt) = gt {
        let scene = a.scene.clone().unwrap_or_else(|| {
            a.manifest
                .parent()
                .and_then(Path::file_name)
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "scene".into())
        });
        let mut report = MetricsReport::compute(&scene, &disparity, &gt, &DEFAULT_THRESHOLDS)?;
        report.config_hash = Some(cfg.hash());
        report.write(&a.out.join("metrics.json"))?;
        eprintln!(
            "mse100 {:.4}  badpix0.07 {:.3}%",
            report.mse100,
            report.badpix_at(0.07).unwrap_or(f64::NAN)
        );
    }
    Ok(())
}

fn scaled(map: &DisparityMap, scale: f64) -> Result<DisparityMap> {
    if scale == 1.0 {
        return Ok(map.clone());
    }
    DisparityMap::with_mask(
        map.width(),
        map.height(),
        map.values().iter().map(|v| v * scale).collect(),
        map.valid().to_vec(),
    )
}

/// `HxW`.
pub fn parse_resolution(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::Config(format!("resolution `{s}` is not of the form HxW"));
    let (h, w) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let h: usize = h.trim().parse().map_err(|_| bad())?;
    let w: usize = w.trim().parse().map_err(|_| bad())?;
    if h == 0 || w == 0 {
        return Err(bad());
    }
    Ok((h, w))
}

fn render(a: &RenderArgs) -> Result<()> {
    let model = load_checkpoint(&a.checkpoint)?;
    let (h, w) = match &a.res {
        Some(r) => parse_resolution(r)?,
        None => (model.domain.1, model.domain.0),
    };
    let map = scaled(&model.render_grid(h, w)?, a.scale)?;
    create_dir(&a.out)?;
    write_pfm(&map, &a.out.join(format!("disparity_{h}x{w}.pfm")))?;
    save_preview(&map, &a.out.join(format!("preview_{h}x{w}.png")))?;
    Ok(())
}

fn eval(a: &EvalArgs) -> Result<()> {
    let pred = read_pfm(&a.pred)?;
    let gt = read_pfm(&a.gt)?;
    let report = MetricsReport::compute(&a.scene, &pred, &gt, &a.thresholds)?;
    create_dir(&a.out)?;
    report.write(&a.out.join("metrics.json"))?;
    println!("{}", report.to_json());
    Ok(())
}

fn profile(a: &ProfileArgs) -> Result<()> {
    let map = read_pfm(&a.map)?;
    let line = profile_line(&map, a.row)?;
    create_dir(&a.out)?;
    let path = a.out.join(format!("profile_row{}.csv", a.row));
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut out = BufWriter::new(file);
    write_profile_csv(&line, &mut out)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(&path, e))
}

/// Control points of the preview colormap, dark blue through yellow.
const COLORMAP: [[f64; 3]; 5] = [
    [0.267, 0.005, 0.329],
    [0.231, 0.322, 0.545],
    [0.129, 0.569, 0.549],
    [0.369, 0.788, 0.384],
    [0.993, 0.906, 0.144],
];

pub fn colormap(t: f64) -> [u8; 3] {
    let t = t.clamp(0.0, 1.0) * (COLORMAP.len() - 1) as f64;
    let i = (t.floor() as usize).min(COLORMAP.len() - 2);
    let f = t - i as f64;
    let mut out = [0u8; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let v = (1.0 - f) * COLORMAP[i][c] + f * COLORMAP[i + 1][c];
        *o = (v * 255.0).round() as u8;
    }
    out
}

/// Min-max normalized colour preview; invalid pixels are black. The range
/// goes to stderr.
pub fn save_preview(map: &DisparityMap, path: &Path) -> Result<()> {
    let (lo, hi) = map.range().unwrap_or((0.0, 0.0));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let img = ImageBuffer::from_fn(map.width() as u32, map.height() as u32, |x, y| {
        let (c, r) = (x as usize, y as usize);
        if map.is_valid(c, r) {
            Rgb(colormap((map.get(c, r) - lo) / span))
        } else {
            Rgb([0, 0, 0])
        }
    });
    img.save(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    eprintln!("{}: disparity range [{lo:.4}, {hi:.4}]", path.display());
    Ok(())
}
