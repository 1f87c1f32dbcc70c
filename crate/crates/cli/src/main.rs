//! `chef`: run the label-cleaning pipeline, generate synthetic data, serve
//! the annotation API or summarize a report.
//!
//! Exit codes: 0 on success, 2 for configuration or input errors, 3 for
//! runtime failures.

mod config;

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use chef_core::dataio::{
    gaussian_blobs, load_dataset, simulate_annotators, synth_probabilistic_labels, write_dataset, BlobSpec,
    FeatureFormat,
};
use chef_core::influence::write_influence_csv;
use chef_core::pipeline::{run_round, AnnotatorConfig, Report, Session};
use chef_core::rng::{derive_seed, Stream};
use chef_core::ChefError;
use chef_service::{AppState, ServiceOptions};

use config::CliConfig;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Runtime(m) => write!(f, "{m}"),
        }
    }
}

fn runtime(e: impl fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Parser)]
#[command(name = "chef", version, about = "Influence-guided cleaning of probabilistic training labels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Bin,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Run a full simulated session and write report.json plus one influence
    /// table per round.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides `out_dir` from the config file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a Gaussian-blob dataset with probabilistic labels and a
    /// simulated annotator pool.
    Synth {
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 10)]
        d: usize,
        #[arg(long, default_value_t = 2)]
        c: usize,
        /// Fraction of training labels replaced by random distributions.
        #[arg(long, default_value_t = 0.3)]
        noise: f64,
        /// Per-annotator error rate.
        #[arg(long, default_value_t = 0.05)]
        flip_rate: f64,
        #[arg(long, default_value_t = 3)]
        annotators: usize,
        #[arg(long, default_value_t = 0.15)]
        val_fraction: f64,
        #[arg(long, default_value_t = 0.15)]
        test_fraction: f64,
        #[arg(long, default_value_t = 1.0)]
        separation: f64,
        #[arg(long, value_enum, default_value_t = Format::Bin)]
        format: Format,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the annotation API for a session with `annotators.kind = service`.
    Serve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
        /// Seconds an advance request waits before answering 504.
        #[arg(long, default_value_t = 600)]
        advance_timeout: u64,
    },
    /// Summarize a report file, or the report in the config's output directory.
    Report {
        path: Option<PathBuf>,
        #[arg(long, conflicts_with = "path")]
        config: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("CHEF_LOG", "info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, seed, out } => cmd_run(&config, seed, out),
        Command::Synth {
            n,
            d,
            c,
            noise,
            flip_rate,
            annotators,
            val_fraction,
            test_fraction,
            separation,
            format,
            seed,
            out,
        } => {
            let spec = BlobSpec {
                separation,
                validation_fraction: val_fraction,
                test_fraction,
                ..BlobSpec::new(n, d, c, seed)
            };
            let format = match format {
                Format::Bin => FeatureFormat::Bin,
                Format::Csv => FeatureFormat::Csv,
            };
            cmd_synth(&spec, noise, flip_rate, annotators, format, &out)
        }
        Command::Serve {
            config,
            seed,
            bind,
            advance_timeout,
        } => cmd_serve(&config, seed, &bind, advance_timeout),
        Command::Report { path, config } => cmd_report(path, config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            eprintln!("chef: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn load_inputs(config: &Path, seed: Option<u64>) -> Result<(CliConfig, chef_core::dataio::Dataset), CliError> {
    let cfg = CliConfig::load(config, seed)?;
    if !cfg.manifest.exists() {
        return Err(CliError::Config(format!("manifest {} does not exist", cfg.manifest.display())));
    }
    let dataset = load_dataset(&cfg.manifest).map_err(|e| match e {
        ChefError::Io { .. } | ChefError::Format(_) | ChefError::Validation(_) | ChefError::Consistency(_) => {
            CliError::Config(format!("{}: {e}", cfg.manifest.display()))
        }
        other => runtime(other),
    })?;
    Ok((cfg, dataset))
}

fn create_file(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn cmd_run(config: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<(), CliError> {
    let (cfg, dataset) = load_inputs(config, seed)?;
    if cfg.pipeline.annotators == AnnotatorConfig::Service && cfg.pipeline.strategy.required_annotations() > 0 {
        return Err(CliError::Config(format!(
            "{}: `run` needs simulated annotators; use `serve` for service annotation",
            config.display()
        )));
    }
    let out = out.unwrap_or(cfg.out_dir);
    fs::create_dir_all(&out).map_err(|e| runtime(format!("{}: {e}", out.display())))?;

    let mut session = Session::new(cfg.pipeline, dataset).map_err(runtime)?;
    log::info!("initial val F1 {:.4}", session.metrics()[0].f1_val);
    while let Some(pending) = session.pending() {
        if let Some(table) = &pending.table {
            let path = out.join(format!("influence_round_{}.csv", pending.k));
            let mut w = create_file(&path)?;
            write_influence_csv(table, &mut w).map_err(runtime)?;
            w.flush().map_err(|e| runtime(format!("{}: {e}", path.display())))?;
        }
        let round = run_round(&mut session).map_err(runtime)?;
        log::info!("round {} val F1 {:.4}", round.k, round.f1_val);
    }
    let report = session.report();
    let path = out.join("report.json");
    fs::write(&path, report.to_json(true)).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    log::info!("{:?} after {} rounds, wrote {}", report.status, report.rounds.len(), path.display());
    Ok(())
}

fn cmd_synth(
    spec: &BlobSpec,
    noise: f64,
    flip_rate: f64,
    annotators: usize,
    format: FeatureFormat,
    out: &Path,
) -> Result<(), CliError> {
    if spec.n < 10 {
        return Err(CliError::Config("need n >= 10".into()));
    }
    if !(0.0..=1.0).contains(&noise) {
        return Err(CliError::Config("noise must lie in [0, 1]".into()));
    }
    let clean = gaussian_blobs(spec).map_err(|e| CliError::Config(e.to_string()))?;
    let dataset = if noise > 0.0 {
        synth_probabilistic_labels(&clean, noise, spec.seed).map_err(runtime)?
    } else {
        clean
    };
    let manifest = write_dataset(&dataset, out, format).map_err(runtime)?;
    if annotators > 0 {
        let pool = simulate_annotators(&dataset, annotators, flip_rate, derive_seed(spec.seed, Stream::Annotator, 0))
            .map_err(|e| CliError::Config(e.to_string()))?;
        let path = out.join("annotators.csv");
        let mut w = create_file(&path)?;
        let io = |e: std::io::Error| runtime(format!("{}: {e}", path.display()));
        writeln!(w, "annotator,sample_id,class").map_err(io)?;
        for (a, labels) in pool.annotators.iter().enumerate() {
            for (id, c) in labels {
                writeln!(w, "{a},{id},{}", c + 1).map_err(io)?;
            }
        }
        w.flush().map_err(io)?;
    }
    println!("{}", manifest.display());
    Ok(())
}

fn cmd_serve(config: &Path, seed: Option<u64>, bind: &str, advance_timeout: u64) -> Result<(), CliError> {
    let (cfg, dataset) = load_inputs(config, seed)?;
    if cfg.pipeline.annotators != AnnotatorConfig::Service {
        return Err(CliError::Config(format!(
            "{}: `serve` needs `annotators.kind = service`",
            config.display()
        )));
    }
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(runtime)?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(bind)
            .await
            .map_err(|e| runtime(format!("cannot bind {bind}: {e}")))?;
        let state = AppState::new(ServiceOptions {
            advance_timeout: std::time::Duration::from_secs(advance_timeout),
        });
        let init = state.clone();
        tokio::spawn(async move {
            if init.initialize(cfg.pipeline, dataset).await.is_ok() {
                log::info!("session ready");
            }
        });
        chef_service::serve(listener, state).await.map_err(runtime)
    })
}

fn cmd_report(path: Option<PathBuf>, config: Option<PathBuf>) -> Result<(), CliError> {
    let path = match (path, config) {
        (Some(p), _) => p,
        (None, Some(c)) => CliConfig::load(&c, None)?.out_dir.join("report.json"),
        (None, None) => return Err(CliError::Config("give a report path or --config".into())),
    };
    let text = fs::read_to_string(&path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let report: Report = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let cfg = &report.config_echo;
    println!(
        "seed {}  selector {:?}  strategy {:?}  updater {:?}  increm {}",
        report.seed, cfg.selector, cfg.strategy, cfg.updater, cfg.use_increm
    );
    println!("status {:?}  spent {}/{}  cleaned {}", report.status, report.spent, cfg.budget, report.cleaned);
    println!("{:>5} {:>8} {:>8} {:>10}", "round", "val_f1", "test_f1", "evals");
    let fmt_test = |t: Option<f64>| t.map_or("-".to_string(), |v| format!("{v:.4}"));
    println!("{:>5} {:>8.4} {:>8}", "init", report.initial.f1_val, fmt_test(report.initial.f1_test));
    for r in &report.rounds {
        println!(
            "{:>5} {:>8.4} {:>8} {:>10}",
            r.k,
            r.f1_val,
            fmt_test(r.f1_test),
            r.grad_evals.influence
        );
    }
    println!("final {:>8.4} {:>8}", report.final_f1_val, fmt_test(report.final_f1_test));
    Ok(())
}
