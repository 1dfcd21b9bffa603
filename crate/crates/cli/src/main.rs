use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fluency_core::classifier::{fluency, ModelArtifact};
use fluency_core::corpus::write_records;
use fluency_core::pipeline::{self, PipelineConfig, PipelineError, Stage};
use fluency_core::synth::{generate_corpus, SynthConfig};

#[derive(Parser)]
#[command(name = "fluency", version, about = "POS-based fluency scoring and length-controlled correlation analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline config file (`key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate the input corpus and print a summary.
    IngestCheck {
        #[arg(long, conflicts_with = "input")]
        config: Option<PathBuf>,
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Work dedupe, minimum length and guardrail filters.
    Filter(Common),
    /// Length-bin downsampling of the translated class.
    Sample(Common),
    /// Grouped cross-validation, metrics and the final model.
    TrainCv(Common),
    /// Stratified and headline correlations.
    Correlate(Common),
    /// Markdown summary of the other artifacts.
    Report(Common),
    /// Every stage in order, or only `--stage`.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        stage: Option<Stage>,
    },
    /// The weighting x sampling robustness grid.
    Grid(Common),
    /// Write a synthetic corpus.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Produce the small fixture corpus with exactly this many paragraphs.
        #[arg(long, conflicts_with = "seed")]
        fixture: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fluency of POS tag sequences, one space-separated sequence per line of stdin.
    Score {
        #[arg(long)]
        model: PathBuf,
    },
}

fn load(common: &Common) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = PipelineConfig::from_file(&common.config)?;
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    Ok(cfg)
}

fn stages(common: &Common, stages: &[Stage]) -> Result<(), PipelineError> {
    let cfg = load(common)?;
    let manifest = pipeline::run_stages(&cfg, stages)?;
    eprintln!(
        "completed {} -> {}",
        stages.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", "),
        cfg.output_dir.display()
    );
    for name in manifest.artifacts.keys() {
        eprintln!("  {name}");
    }
    Ok(())
}

fn data_err(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Data(e.to_string())
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::IngestCheck { config, input } => {
            let path = match (config, input) {
                (_, Some(input)) => input,
                (Some(config), None) => PipelineConfig::from_file(&config)?.input,
                (None, None) => return Err(data_err("pass --config or --input")),
            };
            let summary = pipeline::ingest_check(&path)?;
            println!("{}", serde_json::to_string_pretty(&summary).map_err(data_err)?);
            Ok(())
        }
        Command::Filter(c) => stages(&c, &[Stage::Filter]),
        Command::Sample(c) => stages(&c, &[Stage::Sample]),
        Command::TrainCv(c) => stages(&c, &[Stage::TrainCv]),
        Command::Correlate(c) => stages(&c, &[Stage::Correlate]),
        Command::Report(c) => stages(&c, &[Stage::Report]),
        Command::Run { common, stage } => match stage {
            Some(s) => stages(&common, &[s]),
            None => stages(&common, &Stage::ALL),
        },
        Command::Grid(c) => {
            let cfg = load(&c)?;
            let rows = pipeline::run_variant_grid(&cfg, &pipeline::DEFAULT_GRID)?;
            println!("weighting\tsampling\tn\tlength_fluency_rho\tpartial_rho");
            let show = |v: Option<f64>| v.map_or("-".to_owned(), |x| format!("{x:.4}"));
            for r in rows {
                println!(
                    "{}\t{}\t{}\t{}\t{}",
                    r.weighting,
                    r.sampling,
                    r.n,
                    show(r.length_fluency_rho),
                    show(r.partial_rho)
                );
            }
            Ok(())
        }
        Command::Synth { out, fixture, seed } => {
            let cfg = match fixture {
                Some(n) => SynthConfig::fixture(n),
                None => SynthConfig { seed: seed.unwrap_or(SynthConfig::default().seed), ..SynthConfig::default() },
            };
            let records = generate_corpus(&cfg);
            let file = fs::File::create(&out).map_err(data_err)?;
            let mut w = BufWriter::new(file);
            write_records(&mut w, &records).map_err(data_err)?;
            w.flush().map_err(data_err)?;
            eprintln!("wrote {} records to {}", records.len(), out.display());
            Ok(())
        }
        Command::Score { model } => {
            let file = fs::File::open(&model).map_err(data_err)?;
            let artifact = ModelArtifact::read(io::BufReader::new(file)).map_err(data_err)?;
            let stdout = io::stdout();
            let mut out = stdout.lock();
            for line in io::stdin().lines() {
                let line = line.map_err(data_err)?;
                let tags: Vec<&str> = line.split_whitespace().collect();
                if tags.is_empty() {
                    continue;
                }
                let f = fluency(artifact.score_tags(&tags)).map_err(data_err)?;
                writeln!(out, "{f}").map_err(data_err)?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Usage errors share the config exit code; 2 is reserved for bad data.
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
