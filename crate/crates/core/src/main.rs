use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use logkey::harness::{with_thread_policy, HarnessError, Mode, Pipeline, RunConfig};

#[derive(Parser)]
#[command(name = "logkey", version, about = "Log anomaly detection with a log-key language model")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; defaults apply to anything it leaves out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    mode: Option<Mode>,
    /// Overrides the configured run directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Single-threaded execution and no timings in the manifest.
    #[arg(long, global = true)]
    deterministic: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Mine templates and write the key-sequence corpus.
    Parse {
        /// Raw log files (replaces the configured paths).
        #[arg(long = "input")]
        inputs: Vec<PathBuf>,
        /// Log format: bgl, thunderbird, hdfs or synthetic.
        #[arg(long)]
        format: Option<String>,
        /// Session label CSV.
        #[arg(long)]
        label_file: Option<PathBuf>,
    },
    /// Generate a labeled synthetic log.
    Synth,
    /// Split the corpus and train the language model.
    Train,
    /// REINFORCE fine-tuning on the calibration split.
    Finetune,
    /// Flag anomalies in the test split.
    Detect,
    /// Score the detections.
    Eval,
    /// All stages in order.
    Run,
}

fn resolve(common: &Common) -> Result<RunConfig, HarnessError> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(mode) = common.mode {
        cfg.mode = mode;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<(), HarnessError> {
    let mut cfg = resolve(&cli.common)?;
    if let Command::Parse {
        inputs,
        format,
        label_file,
    } = &cli.command
    {
        if !inputs.is_empty() {
            cfg.dataset.paths = inputs.clone();
        }
        if let Some(f) = format {
            cfg.dataset.format = f.clone();
        }
        if label_file.is_some() {
            cfg.dataset.label_file = label_file.clone();
        }
    }
    let deterministic = cli.common.deterministic;
    with_thread_policy(deterministic, move || {
        let mut p = Pipeline::new(cfg, deterministic)?;
        match cli.command {
            Command::Parse { .. } => {
                let r = p.parse()?;
                println!(
                    "parsed {} records ({} malformed) into {} templates and {} sequences",
                    r.records, r.malformed_lines, r.templates, r.sequences
                );
            }
            Command::Synth => {
                let path = p.synth()?;
                println!("wrote {}", path.display());
            }
            Command::Train => {
                let r = p.train()?;
                println!("trained {} steps, final loss {:.6}", r.steps, r.final_loss().unwrap_or(f64::NAN));
            }
            Command::Finetune => match p.finetune()? {
                Some(reports) => {
                    let last = reports.last().map_or(f64::NAN, |r| r.mean_total_reward);
                    println!("{} policy updates, last mean episode reward {last:.4}", reports.len());
                }
                None => println!("finetune skipped (without_rl)"),
            },
            Command::Detect => {
                let results = p.detect()?;
                let flagged = results.iter().filter(|r| r.predicted_label).count();
                println!("flagged {flagged} of {} test sequences", results.len());
            }
            Command::Eval => print_metrics(&p.eval()?)?,
            Command::Run => print_metrics(&p.run()?)?,
        }
        Ok(())
    })
}

fn print_metrics(m: &logkey::detect::MetricsReport) -> Result<(), HarnessError> {
    println!("{}", serde_json::to_string_pretty(m)?);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
