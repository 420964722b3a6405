//! `visdiag evaluate` writes the report bundle for a prediction file; `visdiag synth` turns a
//! ground-truth file into predictions with a known error census.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use visdiag::config::IouSweep;
use visdiag::dataset::{load_ground_truth, predictions_to_json, validate};
use visdiag::report::{build_bundle, terminal_table, write_files, Formats, Manifest};
use visdiag::synth::{perturb, PerturbSpec};
use visdiag::{
    analyze_with, Dataset, EvalConfig, EvalError, Evaluator, OverlapUnionMode, RangeBins,
    TemporalLengthMode,
};

#[derive(Parser)]
#[command(name = "visdiag", version, about = "Error analysis for video instance segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate predictions against ground truth and write the report bundle.
    Evaluate(EvaluateArgs),
    /// Inject a known population of errors into ground truth and write predictions.
    Synth(SynthArgs),
}

#[derive(Args)]
struct Workers {
    /// Worker threads; defaults to one per core.
    #[arg(long, env = "VISDIAG_THREADS")]
    threads: Option<usize>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Ground-truth annotation file.
    gt: PathBuf,
    /// Prediction file.
    pred: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    thr_f: f64,
    #[arg(long, default_value_t = 0.1)]
    thr_b: f64,
    #[arg(long, default_value_t = 0.1)]
    thr_spat: f64,
    #[arg(long, default_value_t = 0.7)]
    thr_temp: f64,
    /// IoU thresholds for mAP as lo:step:hi.
    #[arg(long, default_value = "0.5:0.05:0.95")]
    iou_sweep: String,
    #[arg(long, default_value_t = 100)]
    max_dets: usize,
    /// Lower edges of the temporal-length bins.
    #[arg(long, default_value = "1,16,32")]
    range_bins: String,
    /// visible or extent.
    #[arg(long, default_value = "visible")]
    temporal_length_mode: String,
    /// Denominator of the temporal overlap: visible or range.
    #[arg(long, default_value = "visible")]
    overlap_union: String,
    /// Extra IoU thresholds at which to measure the error weights, comma separated.
    #[arg(long, value_delimiter = ',')]
    weight_sweep: Vec<f64>,
    #[arg(long, default_value = "visdiag-report")]
    out: PathBuf,
    #[arg(long, default_value = "json,csv,svg")]
    format: String,
    /// Leave timestamps out of figures and skip timings.json.
    #[arg(long)]
    deterministic: bool,
    #[command(flatten)]
    workers: Workers,
}

#[derive(Args)]
struct SynthArgs {
    /// Ground-truth annotation file.
    gt: PathBuf,
    /// Perturbation spec (JSON).
    spec: PathBuf,
    /// Overrides the seed in the spec.
    #[arg(long)]
    seed: Option<u64>,
    /// Prediction file to write.
    #[arg(long, default_value = "predictions.json")]
    out: PathBuf,
    /// Census file; defaults to the prediction file with a `.census.json` suffix.
    #[arg(long)]
    census: Option<PathBuf>,
    #[command(flatten)]
    workers: Workers,
}

/// Exit 2 for anything wrong with the inputs, 1 for everything else.
enum Failure {
    Input(anyhow::Error),
    Internal(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Internal(e)
    }
}

fn input(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Input(e.into())
}

fn eval_failure(e: EvalError) -> Failure {
    match e {
        EvalError::Config(_) | EvalError::Dataset(_) | EvalError::Invalid(_) => input(e),
        other => Failure::Internal(other.into()),
    }
}

fn set_workers(w: &Workers) -> Result<(), Failure> {
    if let Some(n) = w.threads {
        if n == 0 {
            return Err(input(anyhow!("--threads must be positive")));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("starting worker pool")?;
    }
    Ok(())
}

fn config_from(a: &EvaluateArgs) -> Result<EvalConfig, Failure> {
    let overlap_union_mode = match a.overlap_union.as_str() {
        "visible" => OverlapUnionMode::Visible,
        "range" => OverlapUnionMode::Range,
        other => {
            return Err(input(anyhow!(
                "unknown overlap union {other:?} (visible|range)"
            )))
        }
    };
    let config = EvalConfig {
        thr_f: a.thr_f,
        thr_b: a.thr_b,
        thr_spat: a.thr_spat,
        thr_temp: a.thr_temp,
        iou_sweep: IouSweep::parse(&a.iou_sweep).map_err(input)?,
        max_dets: a.max_dets,
        range_bins: RangeBins::parse(&a.range_bins).map_err(input)?,
        temporal_length_mode: a
            .temporal_length_mode
            .parse::<TemporalLengthMode>()
            .map_err(input)?,
        overlap_union_mode,
        weight_sweep: a.weight_sweep.clone(),
    };
    config.validate().map_err(input)?;
    Ok(config)
}

fn seconds(t: Instant) -> f64 {
    (t.elapsed().as_secs_f64() * 1e3).round() / 1e3
}

fn evaluate(a: EvaluateArgs) -> Result<(), Failure> {
    let config = config_from(&a)?;
    let formats = Formats::parse(&a.format).map_err(|e| input(anyhow!(e)))?;
    set_workers(&a.workers)?;
    let mut timings = BTreeMap::new();

    let t = Instant::now();
    let dataset = Dataset::load(&a.gt, &a.pred).map_err(input)?;
    timings.insert("load", seconds(t));

    let t = Instant::now();
    let report = validate(&dataset);
    if !report.is_ok() {
        return Err(input(anyhow!("dataset failed validation:\n{report}")));
    }
    if !report.warnings.is_empty() {
        eprint!("{report}");
    }
    let evaluator = Evaluator::new(&dataset, &config).map_err(eval_failure)?;
    timings.insert("iou", seconds(t));

    let t = Instant::now();
    let analysis = analyze_with(&evaluator).map_err(eval_failure)?;
    timings.insert("analysis", seconds(t));

    let manifest = Manifest::new(&config, &[("ground_truth", &a.gt), ("predictions", &a.pred)])
        .context("hashing inputs")?;
    let timestamp = (!a.deterministic).then(|| {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs())
    });
    let mut files = build_bundle(&evaluator, &analysis, &manifest, formats, timestamp);
    if !a.deterministic {
        let threads = rayon::current_num_threads();
        let body = format!(
            "{{\n  \"threads\": {threads},\n  \"seconds\": {{{}\n  }}\n}}\n",
            timings
                .iter()
                .map(|(k, v)| format!("\n    \"{k}\": {v}"))
                .collect::<Vec<_>>()
                .join(",")
        );
        files.push(("timings.json".into(), body));
    }
    write_files(&a.out, &files)
        .with_context(|| format!("writing reports to {}", a.out.display()))?;
    print!("{}", terminal_table(&analysis));
    Ok(())
}

fn census_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map_or_else(|| "predictions".into(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}.census.json"))
}

fn synth(a: SynthArgs) -> Result<(), Failure> {
    set_workers(&a.workers)?;
    let (videos, categories, gt_tracks) = load_ground_truth(&a.gt).map_err(input)?;
    let dataset = Dataset {
        videos,
        categories,
        gt_tracks,
        predictions: Vec::new(),
    };
    let report = validate(&dataset);
    if !report.is_ok() {
        return Err(input(anyhow!("ground truth failed validation:\n{report}")));
    }
    let text = fs::read_to_string(&a.spec)
        .with_context(|| format!("reading {}", a.spec.display()))
        .map_err(input)?;
    let mut spec: PerturbSpec = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", a.spec.display()))
        .map_err(input)?;
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    let (predictions, census) = perturb(&dataset, &spec).map_err(input)?;

    let census_file = a.census.clone().unwrap_or_else(|| census_path(&a.out));
    let mut census_json = serde_json::to_string_pretty(&census).context("serializing census")?;
    census_json.push('\n');
    // both files land in their own directories; write each atomically
    for (path, body) in [
        (&a.out, predictions_to_json(&predictions)),
        (&census_file, census_json),
    ] {
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
        let name = path
            .file_name()
            .ok_or_else(|| input(anyhow!("{} is not a file path", path.display())))?;
        write_files(
            dir.unwrap_or(Path::new(".")),
            &[(name.to_string_lossy().into_owned(), body)],
        )
        .with_context(|| format!("writing {}", path.display()))?;
    }
    eprintln!(
        "wrote {} predictions to {} and the census to {}",
        predictions.len(),
        a.out.display(),
        census_file.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Evaluate(a) => evaluate(a),
        Command::Synth(a) => synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Internal(e)) => {
            eprintln!("internal error: {e:#}");
            ExitCode::from(1)
        }
    }
}
