//! Command-line front end of the ultrasound captioning pipeline.

pub mod config;
pub mod pipeline;
pub mod synth;

use std::ffi::OsString;
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use uucap_core::features::StreamLabel;
use uucap_core::model::Checkpoint;
use uucap_core::roi_crop::{CropAxis, DEFAULT_THRESHOLD};
use uucap_core::text::read_manifest;

use config::RunConfig;
use pipeline::{ComparisonRow, ComparisonTable};

#[derive(Debug, Parser)]
#[command(name = "uucap", version, about = "Ultrasound image captioning pipeline")]
pub struct Cli {
    /// Seed for every random choice; overrides the `seed` key of a config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Log progress to stderr; repeat for more detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AxisArg {
    Horizontal,
    Both,
}

impl From<AxisArg> for CropAxis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::Horizontal => CropAxis::Horizontal,
            AxisArg::Both => CropAxis::Both,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Crop the region of interest of every image and resize it to 224x224.
    Crop {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        #[arg(long, value_enum, default_value_t = AxisArg::Both)]
        crop_axis: AxisArg,
        /// Directory for per-image `column,mean_intensity` CSV profiles.
        #[arg(long)]
        emit_profiles: Option<PathBuf>,
    },
    /// Build a vocabulary file from a manifest.
    Vocab {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract grid-pooled toy features into a UFV1 file.
    Features {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        toy_dim: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a captioner and write a checkpoint plus a loss history.
    Train {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        feat_a: Option<PathBuf>,
        #[arg(long)]
        feat_b: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Defaults to the checkpoint path with a `.history.json` extension.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Print greedy captions, one `name<TAB>caption` line per image.
    Caption {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        feat_a: PathBuf,
        #[arg(long)]
        feat_b: PathBuf,
        /// Image name; every image in the stream A file when omitted.
        #[arg(long)]
        image: Vec<String>,
    },
    /// Score generated captions; several `--model` flags produce a comparison table.
    Evaluate {
        #[arg(long, required = true)]
        model: Vec<PathBuf>,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        feat_a: PathBuf,
        #[arg(long)]
        feat_b: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Generate a seeded synthetic corpus (images/ and manifest.csv).
    Synth {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn require(value: Option<PathBuf>, flag: &str) -> Result<PathBuf> {
    value.with_context(|| format!("missing --{flag} (or the matching config key)"))
}

pub fn execute(cli: Cli) -> Result<()> {
    let mut stdout = std::io::stdout().lock();
    match cli.command {
        Command::Crop {
            input,
            out,
            threshold,
            crop_axis,
            emit_profiles,
        } => {
            let records = pipeline::crop_directory(&input, &out, threshold, crop_axis.into(), emit_profiles.as_deref())?;
            for r in records {
                let b = r.detection.bounds;
                let flag = if r.detection.degenerate { " degenerate" } else { "" };
                writeln!(stdout, "{}\t{} {} {} {}{flag}", r.filename, b.x_left, b.x_right, b.y_top, b.y_bottom)?;
            }
        }
        Command::Vocab { manifest, out } => {
            let vocab = pipeline::build_vocabulary(&manifest)?;
            vocab.save(&out)?;
            writeln!(stdout, "{} words", vocab.size())?;
        }
        Command::Features {
            manifest,
            images,
            toy_dim,
            out,
        } => {
            let store = pipeline::extract_features(&manifest, &images, toy_dim, StreamLabel::A)?;
            pipeline::write_features(&store, &out)?;
            writeln!(stdout, "{} records of dimension {toy_dim}", store.len())?;
        }
        Command::Train {
            manifest,
            feat_a,
            feat_b,
            config,
            out,
            history,
        } => {
            let mut cfg = match &config {
                Some(path) => RunConfig::load(path)?,
                None => RunConfig::default(),
            };
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            let manifest = require(manifest.or(cfg.manifest.clone()), "manifest")?;
            let feat_a = require(feat_a.or(cfg.feat_a.clone()), "feat-a")?;
            let feat_b = require(feat_b.or(cfg.feat_b.clone()), "feat-b")?;
            let out = require(out.or(cfg.model.clone()), "out")?;
            let history = history
                .or(cfg.history.clone())
                .unwrap_or_else(|| out.with_extension("history.json"));
            let outcome = pipeline::train_files(&manifest, &feat_a, &feat_b, &cfg, &out, &history)?;
            let h = &outcome.history;
            let last = h.epochs.last().expect("at least one epoch");
            writeln!(stdout, 
                "stopped after epoch {} ({:?}); best epoch {} with val_loss {:.5}; final train_loss {:.5}",
                h.stopped_epoch, h.stop_reason, h.best_epoch, h.best_val_loss, last.train_loss
            )?;
        }
        Command::Caption {
            model,
            feat_a,
            feat_b,
            image,
        } => {
            let ckpt = Checkpoint::load(&model).with_context(|| model.display().to_string())?;
            let (a, b) = pipeline::load_streams(&feat_a, &feat_b)?;
            let names = if image.is_empty() {
                a.records().iter().map(|r| r.name.clone()).collect()
            } else {
                image
            };
            for (name, caption) in names.iter().zip(pipeline::caption_images(&ckpt, &a, &b, &names)?) {
                writeln!(stdout, "{name}\t{caption}")?;
            }
        }
        Command::Evaluate {
            model,
            manifest,
            feat_a,
            feat_b,
            report,
        } => {
            let rows = read_manifest(&manifest)?;
            let (a, b) = pipeline::load_streams(&feat_a, &feat_b)?;
            let mut table = ComparisonTable { rows: Vec::new() };
            let mut single = None;
            for path in &model {
                let ckpt = Checkpoint::load(path).with_context(|| path.display().to_string())?;
                let r = pipeline::evaluate_model(&ckpt, &rows, &a, &b)?;
                table.rows.push(ComparisonRow::new(path, &ckpt, &r));
                single = Some(r);
            }
            if model.len() == 1 {
                write_json(&report, &single.expect("one model evaluated"))?;
            } else {
                write_json(&report, &table)?;
            }
            write!(stdout, "{}", table.render())?;
        }
        Command::Synth { n, out } => {
            let rows = synth::generate_synthetic_corpus(n, cli.seed.unwrap_or(0), &out)?;
            writeln!(stdout, "{} images written to {}", rows.len(), out.display())?;
        }
    }
    Ok(())
}

/// Parses `argv` (program name first) and runs it. Usage errors return 2,
/// pipeline failures print a single `error: ...` line and return 1.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).try_init();
    match execute(cli) {
        Ok(()) => 0,
        Err(e) if is_broken_pipe(&e) => 0,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            1
        }
    }
}

fn is_broken_pipe(e: &anyhow::Error) -> bool {
    e.chain()
        .filter_map(|c| c.downcast_ref::<std::io::Error>())
        .any(|io| io.kind() == ErrorKind::BrokenPipe)
}
