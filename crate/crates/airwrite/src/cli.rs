//! The `airwrite` command line.

use std::ffi::OsString;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use airwrite_core::calibrate::calibrate;
use airwrite_core::dataset::SplitName;
use airwrite_core::eval::{evaluate, run_regime, train_regime, RegimeSpec, Stage};
use airwrite_core::model::{CnnModel, Prediction, TrainOptions};
use airwrite_core::motion::{replay_observations, segment_stream, FinishedStroke, PenTracker, VelocityUnits, NOMINAL_HEIGHT, NOMINAL_WIDTH};
use airwrite_core::nn::OptimizerConfig;
use airwrite_core::raster::{Glyph, Provenance};
use airwrite_core::synth::{self, StreamSet};
use airwrite_core::vision::MarkerTracker;
use airwrite_core::GLYPH_SIDE;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{Overrides, RunConfig};
use crate::data;
use crate::error::{AppError, AppResult};
use crate::export;
use crate::io::{self, ManifestRow};
use crate::service;

pub const MODEL_NAME: &str = "model.awnn";

#[derive(Debug, Parser)]
#[command(name = "airwrite", version, about = "Air-written numeral recognition")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags every subcommand accepts.
#[derive(Debug, Clone, Args, Default)]
pub struct Shared {
    /// TOML run configuration; flags override its values
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Seed for weight init, shuffling and dropout (generation seed for `gen`)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Trained model file (.awnn)
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
    /// Training regime: 1 TS-A, 2 TS-B, 3 TS-A + TS-B, 4 TS-B then fine-tune on TS-A
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
    pub regime: Option<u8>,
    /// Velocity units: per_second or per_frame_avg
    #[arg(long, value_name = "UNITS")]
    pub velocity_units: Option<VelocityUnits>,
    /// Pen velocity threshold in the chosen units
    #[arg(long, value_name = "V")]
    pub v_threshold: Option<f64>,
}

#[derive(Debug, Clone, Args, Default)]
pub struct TrainFlags {
    /// Directory holding the MNIST IDX files
    #[arg(long, value_name = "DIR")]
    pub mnist_dir: Option<PathBuf>,
    /// Override the number of epochs
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model for a regime and save it
    Train {
        #[command(flatten)]
        shared: Shared,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Fine-tune a saved model on TS-A
    Finetune {
        #[command(flatten)]
        shared: Shared,
        #[command(flatten)]
        train: TrainFlags,
        /// Model to start from
        #[arg(long, value_name = "FILE")]
        from: PathBuf,
        /// Only update the dense layers
        #[arg(long)]
        freeze_features: bool,
    },
    /// Train per regime (or load --model) and evaluate on EVAL
    Eval {
        #[command(flatten)]
        shared: Shared,
        #[command(flatten)]
        train: TrainFlags,
        /// Number of misclassified glyphs to export
        #[arg(long, default_value_t = 20)]
        export_k: usize,
    },
    /// Track a marker through a frame sequence and extract glyphs
    Track {
        #[command(flatten)]
        shared: Shared,
        /// Directory of frame_%06d.ppm (or .png) files
        #[arg(long, value_name = "DIR")]
        frames: PathBuf,
        /// Frame manifest (default: <frames>/manifest.csv)
        #[arg(long, value_name = "FILE")]
        manifest: Option<PathBuf>,
        /// Image format for extracted glyphs
        #[arg(long, value_enum, default_value_t = GlyphFormat::Pgm)]
        glyph_format: GlyphFormat,
    },
    /// Replay a JSON-lines point stream and classify its glyphs
    Replay {
        #[command(flatten)]
        shared: Shared,
        /// Point stream, one {"t","x","y","found"} object per line
        stream: PathBuf,
    },
    /// Generate synthetic datasets, point streams or rendered frames
    Gen {
        #[command(flatten)]
        shared: Shared,
        #[arg(long, value_enum, default_value_t = GenKind::Idx)]
        kind: GenKind,
        #[arg(long, value_enum, default_value_t = GenSplit::TsA)]
        split: GenSplit,
        /// Items per digit class
        #[arg(long)]
        per_class: Option<usize>,
        /// Frame rate of generated streams
        #[arg(long)]
        fps: Option<f64>,
        /// Marker disc radius for rendered frames
        #[arg(long, default_value_t = 10)]
        radius: usize,
        /// Rendered frame size, WIDTHxHEIGHT
        #[arg(long, default_value = "640x480", value_parser = parse_resolution)]
        resolution: (usize, usize),
    },
    /// Suggest a velocity threshold from a "hold still, then write" stream
    Calibrate {
        #[command(flatten)]
        shared: Shared,
        stream: PathBuf,
    },
    /// Run the streaming recognition service
    Serve {
        #[command(flatten)]
        shared: Shared,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GlyphFormat {
    Pgm,
    Png,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GenKind {
    /// IDX image/label pair of rasterized glyphs
    Idx,
    /// JSON-lines point streams
    Streams,
    /// Rendered PPM frame sequences with manifests
    Frames,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GenSplit {
    TsA,
    Eval,
    /// Evaluation writers on a seed stream no dataset uses
    HeldOut,
}

fn parse_resolution(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s.split_once('x').ok_or("expected WIDTHxHEIGHT")?;
    let w: usize = w.parse().map_err(|_| "bad width")?;
    let h: usize = h.parse().map_err(|_| "bad height")?;
    if w < 8 || h < 8 {
        return Err("frames must be at least 8x8".into());
    }
    Ok((w, h))
}

impl Shared {
    fn load(&self, train: Option<&TrainFlags>) -> AppResult<RunConfig> {
        let overrides = Overrides {
            seed: self.seed,
            out: self.out.clone(),
            velocity_units: self.velocity_units,
            v_threshold: self.v_threshold,
            mnist_dir: train.and_then(|t| t.mnist_dir.clone()),
            epochs: train.and_then(|t| t.epochs),
        };
        RunConfig::load(self.config.as_deref(), &overrides)
    }

    fn require_model(&self, config: &RunConfig) -> AppResult<CnnModel> {
        let path = self
            .model
            .as_deref()
            .ok_or_else(|| AppError::Config("--model is required".into()))?;
        io::load_model_expecting(path, &config.classifier)
    }
}

/// Parses `args` (program name first) and runs the command. Output goes to
/// `out`, diagnostics to `err`; the return value is the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    0
                }
                _ => {
                    let _ = write!(err, "{text}");
                    2
                }
            };
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn w(out: &mut dyn Write, line: impl AsRef<str>) -> AppResult<()> {
    writeln!(out, "{}", line.as_ref()).map_err(|e| AppError::Runtime(format!("write failed: {e}")))
}

fn dispatch(command: Command, out: &mut dyn Write) -> AppResult<()> {
    match command {
        Command::Train { shared, train } => cmd_train(&shared, &train, out),
        Command::Finetune {
            shared,
            train,
            from,
            freeze_features,
        } => cmd_finetune(&shared, &train, &from, freeze_features, out),
        Command::Eval {
            shared,
            train,
            export_k,
        } => cmd_eval(&shared, &train, export_k, out),
        Command::Track {
            shared,
            frames,
            manifest,
            glyph_format,
        } => cmd_track(&shared, &frames, manifest.as_deref(), glyph_format, out),
        Command::Replay { shared, stream } => cmd_replay(&shared, &stream, out),
        Command::Gen {
            shared,
            kind,
            split,
            per_class,
            fps,
            radius,
            resolution,
        } => cmd_gen(&shared, kind, split, per_class, fps, radius, resolution, out),
        Command::Calibrate { shared, stream } => cmd_calibrate(&shared, &stream, out),
        Command::Serve { shared, addr } => cmd_serve(&shared, addr, out),
    }
}

fn epoch_line(stage: &str, m: &airwrite_core::model::EpochMetrics) -> String {
    format!(
        "{stage} epoch {:>2}: loss {:.4} train acc {:.4}",
        m.epoch, m.loss, m.train_accuracy
    )
}

fn cmd_train(shared: &Shared, train: &TrainFlags, out: &mut dyn Write) -> AppResult<()> {
    let config = shared.load(Some(train))?;
    let spec = RegimeSpec::standard(shared.regime.unwrap_or(4))?;
    let training = RegimeSpec {
        test_set: spec.pretrain_sets[0].clone(),
        ..spec.clone()
    };
    let splits = data::load_splits(&config, &training)?;
    let mut lines = Vec::new();
    let model = train_regime(&training, &splits, &config.classifier, &config.optimizer, config.seed, &mut |stage, m| {
        let name = match stage {
            Stage::Pretrain => "pretrain",
            Stage::FineTune => "fine-tune",
        };
        lines.push(epoch_line(name, m));
    })?;
    for l in lines {
        w(out, l)?;
    }
    let path = config.paths.out.join(MODEL_NAME);
    io::save_model(&path, &model)?;
    w(out, format!("regime {} model written to {}", spec.id, path.display()))
}

fn cmd_finetune(
    shared: &Shared,
    train: &TrainFlags,
    from: &Path,
    freeze_features: bool,
    out: &mut dyn Write,
) -> AppResult<()> {
    let config = shared.load(Some(train))?;
    let mut model = io::load_model_expecting(from, &config.classifier)?;
    let ts_a = data::load_air(&config, SplitName::TsA)?;
    let opt = OptimizerConfig::fine_tune_from(&config.optimizer);
    let mut lines = Vec::new();
    let mut cb = |m: &airwrite_core::model::EpochMetrics| lines.push(epoch_line("fine-tune", m));
    model.train_with(
        &ts_a,
        &opt,
        TrainOptions {
            freeze_features,
            stage: Some("fine_tune".into()),
            on_epoch: Some(&mut cb),
            ..TrainOptions::default()
        },
    )?;
    for l in lines {
        w(out, l)?;
    }
    let path = config.paths.out.join(MODEL_NAME);
    io::save_model(&path, &model)?;
    w(out, format!("fine-tuned model written to {}", path.display()))
}

fn cmd_eval(shared: &Shared, train: &TrainFlags, export_k: usize, out: &mut dyn Write) -> AppResult<()> {
    let config = shared.load(Some(train))?;
    let regime = shared.regime.unwrap_or(4);
    let spec = RegimeSpec::standard(regime)?;
    let out_dir = &config.paths.out;
    let (report, eval_set) = match &shared.model {
        Some(_) => {
            let model = shared.require_model(&config)?;
            let eval_set = data::load_air(&config, SplitName::Eval)?;
            (evaluate(&model, &eval_set, regime)?, eval_set)
        }
        None => {
            let mut splits = data::load_splits(&config, &spec)?;
            let (report, model) = run_regime(&spec, &splits, &config.classifier, &config.optimizer, config.seed)?;
            io::save_model(&out_dir.join(MODEL_NAME), &model)?;
            (report, splits.eval.take().expect("regime loads EVAL"))
        }
    };
    let (json, csv) = export::write_report(&report, out_dir)?;
    export::export_misclassifications(&report, &eval_set, export_k, &out_dir.join(export::MISCLASSIFIED_DIR))?;
    w(out, format!("regime {regime}: accuracy {:.4} on {} EVAL items", report.accuracy, report.total()))?;
    w(out, format!("report: {}", json.display()))?;
    w(out, format!("confusion: {}", csv.display()))
}

pub fn format_predictions(index: usize, top: &[Prediction]) -> String {
    let classes: Vec<String> = top
        .iter()
        .map(|p| format!("{} ({:.3})", p.class, p.confidence))
        .collect();
    format!("glyph {index}: {}", classes.join(" "))
}

/// Top-3 predictions for each stroke that produced a glyph.
fn classify_strokes(model: &CnnModel, strokes: &[FinishedStroke]) -> AppResult<Vec<(usize, Vec<Prediction>)>> {
    strokes
        .iter()
        .filter_map(|s| s.glyph.as_ref())
        .enumerate()
        .map(|(i, g)| Ok((i + 1, model.predict(g, service::TOP_K)?)))
        .collect()
}

fn cmd_replay(shared: &Shared, stream: &Path, out: &mut dyn Write) -> AppResult<()> {
    let config = shared.load(None)?;
    let model = shared.require_model(&config)?;
    let points = io::read_replay(stream)?;
    let (_, strokes) = segment_stream(&replay_observations(&points), config.motion, NOMINAL_HEIGHT, Provenance::Replay)?;
    let predictions = classify_strokes(&model, &strokes)?;
    if predictions.is_empty() {
        return w(out, "no glyph detected");
    }
    for (i, top) in &predictions {
        w(out, format_predictions(*i, top))?;
    }
    Ok(())
}

fn frame_files(dir: &Path) -> AppResult<usize> {
    let entries = std::fs::read_dir(dir).map_err(|e| AppError::data(dir, e))?;
    let mut n = 0;
    for entry in entries {
        let path = entry.map_err(|e| AppError::data(dir, e))?.path();
        let is_frame = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("ppm") || e.eq_ignore_ascii_case("png"));
        n += is_frame as usize;
    }
    Ok(n)
}

fn glyph_bytes(glyph: &Glyph, format: GlyphFormat) -> (Vec<u8>, &'static str) {
    match format {
        GlyphFormat::Pgm => (io::encode_pgm(GLYPH_SIDE, GLYPH_SIDE, glyph.pixels()), "pgm"),
        GlyphFormat::Png => (io::encode_png_gray(GLYPH_SIDE, GLYPH_SIDE, glyph.pixels()), "png"),
    }
}

fn cmd_track(
    shared: &Shared,
    frames_dir: &Path,
    manifest: Option<&Path>,
    glyph_format: GlyphFormat,
    out: &mut dyn Write,
) -> AppResult<()> {
    let config = shared.load(None)?;
    let model = shared.model.as_ref().map(|_| shared.require_model(&config)).transpose()?;
    let manifest_path = manifest.map(Path::to_path_buf).unwrap_or_else(|| frames_dir.join(io::MANIFEST_NAME));
    let rows = io::read_manifest(&manifest_path)?;
    let on_disk = frame_files(frames_dir)?;
    if on_disk != rows.len() {
        return Err(AppError::data(
            &manifest_path,
            format!("manifest lists {} frames but {} frame files exist", rows.len(), on_disk),
        ));
    }
    let mut marker = MarkerTracker::new(config.marker.spec(), config.marker.min_area)?;
    let mut pen: Option<PenTracker> = None;
    let mut size: Option<(usize, usize)> = None;
    let mut table = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| AppError::Runtime(e.to_string());
    table
        .write_record(["index", "found", "x", "y", "dx", "dy", "pen_state"])
        .map_err(csv_err)?;
    let mut strokes = Vec::new();
    for row in &rows {
        let path = frames_dir.join(&row.file);
        let frame = io::read_frame(&path, row.timestamp_ms)?;
        match size {
            None => size = Some((frame.width, frame.height)),
            Some(s) if s != (frame.width, frame.height) => {
                return Err(AppError::data(&path, format!("frame size {}x{} differs from {}x{}", frame.width, frame.height, s.0, s.1)));
            }
            Some(_) => {}
        }
        let obs = marker.observe(&frame).map_err(|e| AppError::data(&path, e))?;
        let tracker = match pen.as_mut() {
            Some(t) => t,
            None => pen.insert(PenTracker::new(config.motion, frame.height, Provenance::Live)?.with_stream(frames_dir.display().to_string())),
        };
        let mut step = tracker.observe(&obs).map_err(|e| AppError::data(&path, e))?;
        strokes.extend(step.stroke.take());
        let (x, y) = if obs.found {
            (format!("{:.2}", obs.x), format!("{:.2}", obs.y))
        } else {
            (String::new(), String::new())
        };
        table
            .write_record([
                row.index.to_string(),
                obs.found.to_string(),
                x,
                y,
                format!("{:.6}", step.dx),
                format!("{:.6}", step.dy),
                step.pen.as_str().to_string(),
            ])
            .map_err(csv_err)?;
    }
    if let Some(t) = pen.as_mut() {
        strokes.extend(t.finish().stroke);
    }
    let out_dir = &config.paths.out;
    io::write_file(
        &out_dir.join("observations.csv"),
        &table.into_inner().map_err(|e| AppError::Runtime(e.to_string()))?,
    )?;
    let glyphs: Vec<&Glyph> = strokes.iter().filter_map(|s| s.glyph.as_ref()).collect();
    for (i, g) in glyphs.iter().enumerate() {
        let (bytes, ext) = glyph_bytes(g, glyph_format);
        io::write_file(&out_dir.join(format!("glyph_{:03}.{ext}", i + 1)), &bytes)?;
    }
    w(out, format!("{} frames, {} glyphs", rows.len(), glyphs.len()))?;
    if let Some(model) = model {
        let predictions = classify_strokes(&model, &strokes)?;
        let mut csv = String::from("glyph,class,confidence\n");
        for (i, top) in &predictions {
            w(out, format_predictions(*i, top))?;
            csv.push_str(&format!("{i},{},{:.6}\n", top[0].class, top[0].confidence));
        }
        io::write_file(&out_dir.join("predictions.csv"), csv.as_bytes())?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_gen(
    shared: &Shared,
    kind: GenKind,
    split: GenSplit,
    per_class: Option<usize>,
    fps: Option<f64>,
    radius: usize,
    resolution: (usize, usize),
    out: &mut dyn Write,
) -> AppResult<()> {
    let config = shared.load(None)?;
    let seed = shared.seed.unwrap_or(config.data.synth_seed);
    let out_dir = &config.paths.out;
    let per_class = per_class.unwrap_or(match split {
        GenSplit::TsA => config.data.ts_a_per_class,
        GenSplit::Eval | GenSplit::HeldOut => config.data.eval_per_class,
    });
    if per_class == 0 {
        return Err(AppError::Config("--per-class must be >= 1".into()));
    }
    let (set, prefix) = match split {
        GenSplit::TsA => (StreamSet::TsA, "ts-a"),
        GenSplit::Eval => (StreamSet::Eval, "eval"),
        GenSplit::HeldOut => (StreamSet::HeldOut, "held-out"),
    };
    match kind {
        GenKind::Idx => {
            let name = match split {
                GenSplit::TsA => SplitName::TsA,
                GenSplit::Eval => SplitName::Eval,
                GenSplit::HeldOut => return Err(AppError::Config("IDX output is for ts-a or eval".into())),
            };
            if fps.is_some() {
                return Err(AppError::Config("--fps applies to streams and frames".into()));
            }
            let dataset = synth::air_split(name, per_class, &config.motion, seed)?;
            let images = out_dir.join(io::idx_images_name(prefix));
            let labels = io::write_idx_pair(&images, &dataset)?;
            w(out, format!("{} glyphs: {} + {}", dataset.len(), images.display(), labels.display()))
        }
        GenKind::Streams | GenKind::Frames => {
            let streams = synth::stream_set(set, per_class, seed, fps)?;
            let mut index = String::from("file,class,writer,seed\n");
            for (i, s) in streams.iter().enumerate() {
                let stem = format!("{prefix}_{i:05}_d{}", s.class);
                let file = match kind {
                    GenKind::Streams => {
                        let name = format!("{stem}.jsonl");
                        io::write_replay(&out_dir.join(&name), &s.points)?;
                        name
                    }
                    _ => {
                        let rendered = synth::render_synthetic_frames(&s.points, config.marker.rgb, radius, resolution);
                        let dir = out_dir.join(&stem);
                        let mut rows = Vec::with_capacity(rendered.len());
                        for (k, r) in rendered.iter().enumerate() {
                            let name = io::frame_file_name(k);
                            io::write_file(&dir.join(&name), &io::encode_ppm(&r.frame))?;
                            rows.push(ManifestRow {
                                index: k,
                                file: name,
                                timestamp_ms: r.frame.timestamp_ms,
                            });
                        }
                        io::write_manifest(&dir.join(io::MANIFEST_NAME), &rows)?;
                        stem
                    }
                };
                index.push_str(&format!("{file},{},{},{}\n", s.class, s.writer, s.seed));
            }
            io::write_file(&out_dir.join(format!("{prefix}-index.csv")), index.as_bytes())?;
            w(out, format!("{} streams written to {}", streams.len(), out_dir.display()))
        }
    }
}

fn cmd_calibrate(shared: &Shared, stream: &Path, out: &mut dyn Write) -> AppResult<()> {
    let config = shared.load(None)?;
    let points = io::read_replay(stream)?;
    let c = calibrate(&points, &config.motion).map_err(|e| AppError::data(stream, e))?;
    w(out, format!("v_threshold = {:.6} ({})", c.v_threshold, config.motion.velocity_units))?;
    w(
        out,
        format!(
            "static mode {:.6}, motion mode {:.6}, {} samples",
            c.static_speed, c.motion_speed, c.samples
        ),
    )
}

fn cmd_serve(shared: &Shared, addr: SocketAddr, out: &mut dyn Write) -> AppResult<()> {
    let config = shared.load(None)?;
    let model = shared.require_model(&config)?;
    let state = service::AppState::new(model, config.motion);
    let rt = tokio::runtime::Runtime::new().map_err(|e| AppError::Runtime(e.to_string()))?;
    rt.block_on(async {
        let listener = service::bind(addr)
            .await
            .map_err(|e| AppError::Runtime(format!("cannot bind {addr}: {e}")))?;
        let local = listener.local_addr().map_err(|e| AppError::Runtime(e.to_string()))?;
        w(out, format!("listening on http://{local} (frame {NOMINAL_WIDTH}x{NOMINAL_HEIGHT})"))?;
        out.flush().ok();
        service::serve(listener, state).await.map_err(|e| AppError::Runtime(e.to_string()))
    })
}
