use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use fallsentry_core::detector::{read_results, write_results, DetectorConfig};
use fallsentry_core::eval::{confuse, read_ground_truth, ConfusionMatrix, Level, MetricsReport};
use fallsentry_core::pipeline::{emit_curves, process_stream, RunReport};
use fallsentry_core::stream::{read_stream, write_stream_to, StreamHeader};
use fallsentry_core::synth::{perturb, synthesize, PatternRegistry, PerturbSpec, SynthSpec};

#[derive(Parser)]
#[command(name = "fallsentry", version, about = "Threshold fall detection on pose-landmark streams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the detector over one or more landmark streams
    Detect(DetectArgs),
    /// Score detector results against ground truth
    Eval(EvalArgs),
    /// Generate a synthetic landmark stream
    Synth(SynthArgs),
    /// Add coordinate noise and frame dropout to a stream
    Perturb(PerturbArgs),
    /// Check that a stream file parses cleanly
    Validate(ValidateArgs),
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long, num_args = 1.., required = true)]
    input: Vec<PathBuf>,
    #[arg(long, default_value_t = 95.0)]
    threshold: f64,
    #[arg(long, default_value_t = 0.5)]
    visibility_min: f64,
    /// Results file (one input) or directory (several inputs)
    #[arg(long)]
    output: Option<PathBuf>,
    /// Curve CSV file (one input) or directory (several inputs)
    #[arg(long)]
    curves: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, num_args = 1.., required = true)]
    pred: Vec<PathBuf>,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, value_parser = parse_level)]
    level: Level,
    /// Ground-truth stream id for a single --pred (default: file stem)
    #[arg(long)]
    stream_id: Option<String>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    pattern: String,
    #[arg(long)]
    frames: u64,
    #[arg(long, default_value_t = 0)]
    fall_start: u64,
    #[arg(long, default_value_t = 150.0)]
    drop_px: f64,
    #[arg(long, default_value_t = fallsentry_core::synth::DEFAULT_RAMP_FRAMES)]
    ramp_frames: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 640)]
    width: u32,
    #[arg(long, default_value_t = 480)]
    height: u32,
    #[arg(long, default_value_t = 30.0)]
    fps: f64,
    #[arg(short = 'o', long = "output")]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct PerturbArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    noise_sigma: f64,
    #[arg(long, default_value_t = 0.0)]
    dropout: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short = 'o', long = "output")]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    input: PathBuf,
}

fn parse_level(s: &str) -> Result<Level, String> {
    s.parse()
}

/// Bad flag combinations that clap cannot express; exit status 2.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let outcome = match cli.command {
        Command::Detect(args) => detect(args),
        Command::Eval(args) => eval(args),
        Command::Synth(args) => synth(args),
        Command::Perturb(args) => perturb_cmd(args),
        Command::Validate(args) => validate(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn stem(path: &Path) -> String {
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    name.strip_suffix(".results").map(str::to_owned).unwrap_or(name)
}

fn open(path: &Path) -> Result<File> {
    File::open(path).with_context(|| format!("cannot read {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(BufWriter::new(file))
}

struct DetectJob {
    input: PathBuf,
    stream_id: String,
    results: Option<PathBuf>,
    curves: Option<PathBuf>,
}

fn detect(args: DetectArgs) -> Result<()> {
    let config = DetectorConfig {
        threshold_px: args.threshold,
        visibility_min: args.visibility_min,
    };
    config.validate()?;
    if args.jobs == 0 {
        return Err(usage("--jobs must be at least 1"));
    }

    let jobs: Vec<DetectJob> = if args.input.len() == 1 {
        vec![DetectJob {
            stream_id: stem(&args.input[0]),
            input: args.input[0].clone(),
            results: args.output.clone(),
            curves: args.curves.clone(),
        }]
    } else {
        let Some(out_dir) = &args.output else {
            return Err(usage("several --input files need --output <directory>"));
        };
        let mut ids: Vec<String> = args.input.iter().map(|p| stem(p)).collect();
        ids.sort();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(usage(format!("two inputs share the stream id {:?}", w[0])));
        }
        fs::create_dir_all(out_dir).with_context(|| format!("cannot create {}", out_dir.display()))?;
        if let Some(dir) = &args.curves {
            fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        }
        args.input
            .iter()
            .map(|input| {
                let id = stem(input);
                DetectJob {
                    results: Some(out_dir.join(format!("{id}.results.jsonl"))),
                    curves: args.curves.as_ref().map(|d| d.join(format!("{id}.curves.csv"))),
                    input: input.clone(),
                    stream_id: id,
                }
            })
            .collect()
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs)
        .build()
        .context("cannot start worker pool")?;
    let reports: Vec<Result<RunReport>> =
        pool.install(|| jobs.par_iter().map(|job| detect_one(job, &config)).collect());

    let single = jobs.len() == 1;
    let mut failures = 0;
    for report in reports {
        match report {
            Ok(r) => eprintln!("{}", serde_json::to_string(&r)?),
            Err(e) if single => return Err(e),
            Err(e) => {
                eprintln!("error: {e:#}");
                failures += 1;
            }
        }
    }
    if failures > 0 {
        bail!("{failures} of {} streams failed", jobs.len());
    }
    Ok(())
}

fn detect_one(job: &DetectJob, config: &DetectorConfig) -> Result<RunReport> {
    let input = open(&job.input)?;
    let run = process_stream(input, &job.stream_id, config)
        .with_context(|| format!("{}", job.input.display()))?;
    let mut report = run.report;
    match &job.results {
        Some(path) => {
            write_results(create(path)?, &run.results)
                .with_context(|| format!("cannot write {}", path.display()))?;
            report.outputs.push(path.clone());
        }
        None => write_results(io::stdout().lock(), &run.results)?,
    }
    if let Some(path) = &job.curves {
        emit_curves(&run.results)
            .write_csv(create(path)?)
            .with_context(|| format!("cannot write {}", path.display()))?;
        report.outputs.push(path.clone());
    }
    Ok(report)
}

fn eval(args: EvalArgs) -> Result<()> {
    if args.stream_id.is_some() && args.pred.len() > 1 {
        return Err(usage("--stream-id applies to a single --pred file"));
    }
    let truth = read_ground_truth(open(&args.truth)?)
        .with_context(|| format!("{}", args.truth.display()))?;
    let at_level: Vec<_> = truth.iter().filter(|t| t.level() == args.level).collect();

    let mut total = ConfusionMatrix::default();
    let mut out = io::stdout().lock();
    for path in &args.pred {
        let results = read_results(open(path)?).with_context(|| format!("{}", path.display()))?;
        let id = args.stream_id.clone().unwrap_or_else(|| stem(path));
        let labels = match at_level.iter().find(|t| t.stream_id == id) {
            Some(t) => *t,
            None if args.pred.len() == 1 && args.stream_id.is_none() && at_level.len() == 1 => at_level[0],
            None => bail!("{} has no {} labels for stream {id:?}", args.truth.display(), args.level),
        };
        let cm = confuse(&results, labels).with_context(|| format!("{}", path.display()))?;
        total += cm;
        writeln!(out, "{}", MetricsReport::new(labels.stream_id.clone(), &cm)?.to_json_line())?;
    }
    if args.pred.len() > 1 {
        writeln!(out, "{}", MetricsReport::new("ALL", &total)?.to_json_line())?;
    }
    Ok(())
}

fn write_stream_out(path: Option<&Path>, header: &StreamHeader, frames: &[fallsentry_core::PoseFrame]) -> Result<()> {
    match path {
        Some(p) => write_stream_to(create(p)?, header, frames).with_context(|| format!("cannot write {}", p.display()))?,
        None => write_stream_to(io::stdout().lock(), header, frames)?,
    }
    Ok(())
}

fn synth(args: SynthArgs) -> Result<()> {
    let registry = PatternRegistry::with_builtins();
    if registry.get(&args.pattern).is_none() {
        let known: Vec<_> = registry.names().collect();
        return Err(usage(format!(
            "unknown pattern {:?}; expected one of {}",
            args.pattern,
            known.join(", ")
        )));
    }
    let spec = SynthSpec::new(args.pattern, args.frames, args.fall_start, args.drop_px, args.seed)
        .with_ramp(args.ramp_frames);
    let header = spec.header(&StreamHeader::new(args.width, args.height, args.fps, ""));
    let frames = synthesize(&spec, &header)?;
    write_stream_out(args.output.as_deref(), &header, &frames)
}

fn perturb_cmd(args: PerturbArgs) -> Result<()> {
    let spec = PerturbSpec::new(args.noise_sigma, args.dropout, args.seed)?;
    let (mut header, frames) =
        read_stream(open(&args.input)?).with_context(|| format!("{}", args.input.display()))?;
    let out = perturb(&frames, &spec);
    header.source = if header.source.is_empty() {
        spec.describe()
    } else {
        format!("{} | {}", header.source, spec.describe())
    };
    write_stream_out(args.output.as_deref(), &header, &out)
}

fn validate(args: ValidateArgs) -> Result<()> {
    let (header, frames) = read_stream(open(&args.input)?)
        .map_err(|e| anyhow!("{}: {e}", args.input.display()))?;
    let missing = frames.iter().filter(|f| !f.has_pose()).count();
    let summary = serde_json::json!({
        "input": args.input.display().to_string(),
        "width": header.width,
        "height": header.height,
        "fps": header.fps,
        "frames": frames.len(),
        "missing": missing,
        "first_index": frames.first().map(|f| f.index),
        "last_index": frames.last().map(|f| f.index),
    });
    println!("{summary}");
    Ok(())
}
