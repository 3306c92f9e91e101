use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use eyoc::dataset::read_cloud_bin;
use eyoc::features::{read_checkpoint, Checkpoint, EmbeddingParams};
use eyoc::metrics::DistanceBuckets;
use eyoc::pipeline::{
    build_similarity_map, evaluate, load_corpus, prepare, register_frames, simulate_corpus, train, EvalReport,
    PipelineError, PreparedSequence, RunConfig, TrainOptions,
};
use eyoc::selflabel::{FilterMode, SimilarityMap};

#[derive(Parser)]
#[command(name = "eyoc", version, about = "Unsupervised registration of distant LiDAR scans")]
struct Cli {
    /// more log output (repeat for debug)
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Settings {
    /// `key = value` configuration file
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// per-key overrides: `--key value` or `--key=value`
    #[arg(allow_hyphen_values = true, trailing_var_arg = true, value_name = "--KEY VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus to `data`
    Simulate(Settings),
    /// Check that every sequence under `data` loads
    IngestCheck(Settings),
    /// Build the similarity map used by adaptive filtering
    BuildFilterMap(Settings),
    /// Train from unlabeled scans under `data`
    Train(Settings),
    /// Bucketed registration recall of `checkpoint` on `data`
    Evaluate(Settings),
    /// Register two scans with `checkpoint` and print the pose
    Register {
        src: PathBuf,
        dst: PathBuf,
        #[command(flatten)]
        settings: Settings,
    },
    /// Train and evaluate once per value of one configuration key
    Ablate {
        key: String,
        /// comma-separated values
        values: String,
        #[command(flatten)]
        settings: Settings,
    },
}

fn parse_overrides(args: &[String]) -> Result<Vec<(String, String)>, PipelineError> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let Some(flag) = a.strip_prefix("--") else {
            return Err(PipelineError::Config(format!("expected --key, got {a:?}")));
        };
        let (key, value) = match flag.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it.next().ok_or_else(|| PipelineError::Config(format!("--{flag} needs a value")))?;
                (flag.to_string(), v.clone())
            }
        };
        out.push((key.replace('-', "_"), value));
    }
    Ok(out)
}

fn load_config(s: &Settings) -> Result<RunConfig, PipelineError> {
    let mut cfg = match &s.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    for (k, v) in parse_overrides(&s.overrides)? {
        cfg.set(&k, &v)?;
    }
    Ok(cfg)
}

fn load_prepared(cfg: &RunConfig, keep_poses: bool) -> Result<Vec<PreparedSequence>, PipelineError> {
    load_corpus(&cfg.data, cfg.prep.stride)?
        .into_iter()
        .map(|s| prepare(if keep_poses { s } else { s.without_poses() }, &cfg.prep))
        .collect()
}

fn checkpoint_of(cfg: &RunConfig) -> Result<Checkpoint, PipelineError> {
    let path = cfg.checkpoint.as_ref().ok_or_else(|| PipelineError::Config("checkpoint is not set".into()))?;
    Ok(read_checkpoint(path)?)
}

fn load_map(cfg: &RunConfig) -> Result<Option<SimilarityMap>, PipelineError> {
    match (&cfg.filter.mode, &cfg.map) {
        (FilterMode::Adaptive, Some(p)) => Ok(Some(SimilarityMap::read(p)?)),
        _ => Ok(None),
    }
}

fn write(path: &Path, text: &str) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

fn simulate(cfg: &RunConfig) -> Result<(), PipelineError> {
    let dirs = simulate_corpus(&cfg.corpus, cfg.seed, &cfg.data)?;
    for d in dirs {
        println!("{}", d.display());
    }
    Ok(())
}

fn ingest_check(cfg: &RunConfig) -> Result<(), PipelineError> {
    for store in load_corpus(&cfg.data, cfg.prep.stride)? {
        let mut sizes = Vec::with_capacity(store.len());
        for i in 0..store.len() {
            sizes.push(store.load_frame(i)?.len());
        }
        let (lo, hi) = (sizes.iter().min().copied().unwrap_or(0), sizes.iter().max().copied().unwrap_or(0));
        println!(
            "{}: {} frames, {lo}..{hi} points, poses {}",
            store.source.display(),
            store.len(),
            if store.has_poses() { "present" } else { "absent" }
        );
    }
    Ok(())
}

fn build_filter_map(cfg: &RunConfig) -> Result<(), PipelineError> {
    let labeler = match &cfg.checkpoint {
        Some(_) => checkpoint_of(cfg)?.labeler,
        None => EmbeddingParams::random(cfg.k, cfg.seed),
    };
    let data = load_prepared(cfg, true)?;
    let map = build_similarity_map(&labeler, &data, cfg, cfg.pairs_per_epoch * data.len())?;
    let path = cfg.map.clone().unwrap_or_else(|| cfg.output.join("similarity_map.csv"));
    write(&path, &map.to_csv())?;
    println!("{}: {} populated cells", path.display(), map.populated());
    Ok(())
}

fn run_training(cfg: &RunConfig, output: &Path) -> Result<(), PipelineError> {
    cfg.validate()?;
    let data = load_prepared(cfg, false)?;
    let map = load_map(cfg)?;
    let init = match &cfg.checkpoint {
        Some(_) => Some(checkpoint_of(cfg)?),
        None => None,
    };
    write(&output.join("config.txt"), &cfg.to_text())?;
    let opts = TrainOptions { map: map.as_ref(), output: Some(output), init, ..Default::default() };
    train(cfg, &data, &opts)?;
    Ok(())
}

fn run_evaluation(cfg: &RunConfig, params: &EmbeddingParams<f64>, output: &Path) -> Result<EvalReport, PipelineError> {
    let data = load_prepared(cfg, true)?;
    let report = evaluate(params, &data, &DistanceBuckets::default(), &cfg.estimator_of(cfg.eval_estimator), cfg)?;
    write(&output.join("eval.json"), &report.to_json())?;
    write(&output.join("eval.csv"), &report.to_csv())?;
    Ok(report)
}

fn register(cfg: &RunConfig, src: &Path, dst: &Path) -> Result<(), PipelineError> {
    let student = checkpoint_of(cfg)?.student;
    let a = read_cloud_bin(src, cfg.prep.stride, 0)?;
    let b = read_cloud_bin(dst, cfg.prep.stride, 1)?;
    let reg = register_frames(a, b, &student, cfg)?;
    let row: Vec<String> = reg.pose.to_row_major_3x4().iter().map(|v| format!("{v:.6}")).collect();
    println!("{}", row.join(" "));
    println!("inliers {}", reg.inliers.len());
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_default()
}

fn ablate(base: &RunConfig, key: &str, values: &str) -> Result<(), PipelineError> {
    let mut rows = String::from("key,value,rr,mrr,rr_40_50,first_extended_labeler_ir,final_labeler_ir\n");
    let full = load_prepared(base, true)?;
    for value in values.split(',').map(str::trim).filter(|v| !v.is_empty()) {
        let mut cfg = base.clone();
        cfg.set(key, value)?;
        cfg.validate()?;
        let out = base.output.join(format!("{key}_{value}"));
        let map = load_map(&cfg)?;
        let poses: Vec<Vec<_>> =
            full.iter().map(|s| (0..s.len()).filter_map(|i| s.store.pose(i)).collect()).collect();
        let data: Vec<PreparedSequence> = full
            .iter()
            .map(|s| PreparedSequence { store: s.store.without_poses(), frames: s.frames.clone() })
            .collect();
        write(&out.join("config.txt"), &cfg.to_text())?;
        let opts = TrainOptions { map: map.as_ref(), diagnostic_poses: Some(&poses), output: Some(&out), init: None };
        let trained = train(&cfg, &data, &opts)?;
        let report = evaluate(&trained.student, &full, &DistanceBuckets::default(), &cfg.estimator_of(cfg.eval_estimator), &cfg)?;
        write(&out.join("eval.json"), &report.to_json())?;
        let first_ir = trained.reports.iter().find_map(|r| r.labeler_ir);
        let last_ir = trained.reports.iter().rev().find_map(|r| r.labeler_ir);
        let far = report.bucket(40.0, 50.0).and_then(|b| b.rr);
        let line = format!(
            "{key},{value},{},{},{},{},{}",
            fmt_opt(report.rr),
            fmt_opt(report.mrr),
            fmt_opt(far),
            fmt_opt(first_ir),
            fmt_opt(last_ir)
        );
        println!("{line}");
        rows.push_str(&line);
        rows.push('\n');
    }
    write(&base.output.join("ablation.csv"), &rows)?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Simulate(s) => simulate(&load_config(&s)?),
        Command::IngestCheck(s) => ingest_check(&load_config(&s)?),
        Command::BuildFilterMap(s) => build_filter_map(&load_config(&s)?),
        Command::Train(s) => {
            let cfg = load_config(&s)?;
            run_training(&cfg, &cfg.output)?;
            println!("{}", cfg.output.join("final.ckpt").display());
            Ok(())
        }
        Command::Evaluate(s) => {
            let cfg = load_config(&s)?;
            let student = checkpoint_of(&cfg)?.student;
            print!("{}", run_evaluation(&cfg, &student, &cfg.output)?.to_json());
            Ok(())
        }
        Command::Register { src, dst, settings } => register(&load_config(&settings)?, &src, &dst),
        Command::Ablate { key, values, settings } => ablate(&load_config(&settings)?, &key, &values),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
