use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thermoscope_core::eval::render_table;
use thermoscope_core::synth::SynthSpec;

use crate::config::{PipelineConfig, PipelineKind};
use crate::error::Result;
use crate::pipelines::*;
use crate::record::RunRecord;
use crate::tools::*;

#[derive(Debug, Parser)]
#[command(name = "thermoscope", version, about = "Style-consistent object detection for thermal imagery")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train on thermal, evaluate on thermal.
    Baseline(RunArgs),
    /// Train on thermal images restyled with visible style, evaluate on thermal.
    Odsc(RunArgs),
    /// Evaluate a thermal-trained detector on restyled thermal val images.
    SanitySwap(RunArgs),
    /// Train on visible, evaluate on thermal and on thermally-styled visible.
    Cdmt(RunArgs),
    /// Write VOC pseudo-labels for a directory of unlabeled images.
    WeakLabel(RunArgs),
    /// Measure inference throughput of a trained detector.
    Bench(RunArgs),
    /// Train a style generator.
    StyleTrain(RunArgs),
    /// Restyle a dataset with a generator.
    Stylize(RunArgs),
    /// Score a detections file.
    Eval(RunArgs),
    /// Convert a FLIR- or KAIST-style source tree into a manifest.
    Ingest(RunArgs),
    /// Generate a synthetic paired visible/thermal corpus.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `out_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Byte-stable logs and reports.
    #[arg(long)]
    pub deterministic: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub frames: usize,
    #[arg(long, default_value_t = 64)]
    pub width: u32,
    #[arg(long, default_value_t = 64)]
    pub height: u32,
    #[arg(long, default_value_t = 2)]
    pub max_objects: usize,
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl RunArgs {
    /// The config file with command-line overrides applied.
    pub fn load(&self) -> Result<PipelineConfig> {
        let mut config = PipelineConfig::load(&self.config)?;
        if let Some(out) = &self.out {
            config.out_dir = Some(out.clone());
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        config.deterministic |= self.deterministic;
        Ok(config)
    }
}

type Pipeline = fn(&PipelineConfig) -> Result<Vec<RunRecord>>;

fn pipeline(kind: PipelineKind) -> Pipeline {
    match kind {
        PipelineKind::Baseline => run_baseline,
        PipelineKind::Odsc => run_odsc,
        PipelineKind::SanitySwap => run_sanity_swap,
        PipelineKind::Cdmt => run_cdmt,
        PipelineKind::WeakLabel => run_weak_label,
        PipelineKind::Bench => run_bench,
        PipelineKind::StyleTrain => run_style_train,
        PipelineKind::Stylize => run_stylize,
        PipelineKind::Eval => run_eval,
        PipelineKind::Ingest => run_ingest,
    }
}

/// Runs one command and returns a human-readable summary.
pub fn execute(command: &Command) -> Result<String> {
    let (kind, args) = match command {
        Command::Baseline(a) => (PipelineKind::Baseline, a),
        Command::Odsc(a) => (PipelineKind::Odsc, a),
        Command::SanitySwap(a) => (PipelineKind::SanitySwap, a),
        Command::Cdmt(a) => (PipelineKind::Cdmt, a),
        Command::WeakLabel(a) => (PipelineKind::WeakLabel, a),
        Command::Bench(a) => (PipelineKind::Bench, a),
        Command::StyleTrain(a) => (PipelineKind::StyleTrain, a),
        Command::Stylize(a) => (PipelineKind::Stylize, a),
        Command::Eval(a) => (PipelineKind::Eval, a),
        Command::Ingest(a) => (PipelineKind::Ingest, a),
        Command::Synth(s) => {
            let spec = SynthSpec {
                frames: s.frames,
                width: s.width,
                height: s.height,
                max_objects: s.max_objects,
                train_fraction: s.train_fraction,
                seed: s.seed,
            };
            let m = synthesize(&spec, &s.out)?;
            return Ok(format!(
                "{} records written; manifest at {}\n",
                m.records.len(),
                s.out.join("manifest.json").display()
            ));
        }
    };
    let records = pipeline(kind)(&args.load()?)?;
    Ok(summarize(&records))
}

pub fn summarize(records: &[RunRecord]) -> String {
    let mut out = String::new();
    let reports: Vec<(&str, &thermoscope_core::EvalReport)> =
        records.iter().filter_map(|r| r.report.as_ref().map(|rep| (r.tag.as_str(), rep))).collect();
    if let Some((_, first)) = reports.first() {
        let classes: Vec<String> = first.classes.keys().cloned().collect();
        out.push_str(&render_table(&reports, &classes));
    }
    for r in records {
        if let Some(w) = &r.weak_label {
            let acc = w.accuracy.map_or("n/a".to_string(), |a| format!("{a:.4}"));
            let _ = writeln!(out, "{}: TP {} FP {} FN {} accuracy {acc}", r.tag, w.tp, w.fp, w.fn_);
        }
        if let Some(f) = &r.fps {
            let _ = writeln!(out, "{}: {:.2} ± {:.2} fps ({})", r.tag, f.mean_fps, f.std_fps, f.hardware);
        }
    }
    if let Some(r) = records.last() {
        let dir = r.artifacts.get("config").and_then(|p| p.parent()).map(|p| p.display().to_string());
        let _ = writeln!(out, "run records written to {}", dir.unwrap_or_default());
    }
    out
}

/// Parses `args`, runs the command and returns the process exit code: 0 on
/// success, 2 on configuration errors, 1 on runtime failures.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(summary) => {
            print!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
