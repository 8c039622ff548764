use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fedsust::assess::{self, ScoreOptions};
use fedsust::refdata::ReferenceData;
use fedsust::report::{write_atomic, PillarFixture, REPORT_FILE};
use fedsust::score::WeightConfig;
use fedsust::{Error, ErrorKind, FederationConfig};

const COMPARISON_FILE: &str = "comparison.json";

/// Sustainability and trust scoring for federated-learning setups.
///
/// Reference tables are bundled; set FEDSUST_DATA_DIR to a directory with
/// grid_intensity.csv, hardware.csv and locations.csv to replace them.
#[derive(Parser, Debug)]
#[command(name = "fedsust", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Score a scenario from its configuration alone.
    Score {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        scoring: Scoring,
        #[arg(long)]
        pillars: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run the federation, then write report, factsheet and emissions.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        scoring: Scoring,
        #[arg(long)]
        pillars: Option<PathBuf>,
        /// Replaces the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Score two scenarios and rank them.
    Compare {
        /// Exactly two scenarios.
        #[arg(long, num_args = 1, required = true)]
        config: Vec<PathBuf>,
        /// Pillar fixtures, one per scenario, in the same order.
        #[arg(long, num_args = 1)]
        pillars: Vec<PathBuf>,
        #[command(flatten)]
        scoring: Scoring,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Check scenarios without writing anything.
    Validate {
        #[arg(long, num_args = 1, required = true)]
        config: Vec<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct Scoring {
    /// Weight overrides (JSON).
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Renormalize over whatever is present instead of failing.
    #[arg(long)]
    allow_partial: bool,
}

fn kind_label(kind: ErrorKind) -> &'static str {
    match kind {
        ErrorKind::Validation => "validation",
        ErrorKind::Reference => "reference",
        ErrorKind::Io => "io",
    }
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Reference => 2,
        ErrorKind::Validation | ErrorKind::Io => 1,
    }
}

fn require_exists(paths: &[&Path]) -> Result<(), Error> {
    for p in paths {
        if !p.is_file() {
            return Err(Error::invalid(p.display().to_string(), "no such file"));
        }
    }
    Ok(())
}

fn load_options(scoring: &Scoring, pillars: Option<&Path>) -> Result<ScoreOptions, Error> {
    Ok(ScoreOptions {
        weights: scoring.weights.as_deref().map(WeightConfig::load).transpose()?,
        pillars: pillars.map(PillarFixture::load).transpose()?,
        allow_partial: scoring.allow_partial,
    })
}

fn scenario_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Score {
            config,
            scoring,
            pillars,
            out,
        } => {
            let mut paths = vec![config.as_path()];
            paths.extend(scoring.weights.as_deref());
            paths.extend(pillars.as_deref());
            require_exists(&paths)?;
            let refdata = ReferenceData::from_env()?;
            let cfg = FederationConfig::load(&config)?;
            let opts = load_options(&scoring, pillars.as_deref())?;
            let report = assess::score(&cfg, &refdata, &opts)?;
            let bytes = report.render();
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            write_atomic(&out.join(REPORT_FILE), &bytes)?;
            let sustainability = report.pillars.get("sustainability").map(|p| p.score);
            match sustainability {
                Some(s) => println!("trust {:.2}  sustainability {:.2}", report.trust_score, s),
                None => println!("trust {:.2}", report.trust_score),
            }
        }
        Command::Simulate {
            config,
            scoring,
            pillars,
            seed,
            out,
        } => {
            let mut paths = vec![config.as_path()];
            paths.extend(scoring.weights.as_deref());
            paths.extend(pillars.as_deref());
            require_exists(&paths)?;
            let refdata = ReferenceData::from_env()?;
            let mut cfg = FederationConfig::load(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let opts = load_options(&scoring, pillars.as_deref())?;
            let output = assess::run_federation(&cfg, &refdata, &opts)?;
            output.write(&out)?;
            let totals = output.outcome.state.emissions.totals();
            println!(
                "trust {:.2}  emissions {:.6} g CO2eq ({} records)  -> {}",
                output.report.trust_score,
                totals.co2eq_g,
                totals.records,
                out.display()
            );
        }
        Command::Compare {
            config,
            pillars,
            scoring,
            out,
        } => {
            if config.len() != 2 {
                return Err(Error::invalid("config", format!("compare needs 2 scenarios, got {}", config.len())));
            }
            if !pillars.is_empty() && pillars.len() != config.len() {
                return Err(Error::invalid(
                    "pillars",
                    format!("{} fixtures for {} scenarios", pillars.len(), config.len()),
                ));
            }
            let mut paths: Vec<&Path> = config.iter().map(PathBuf::as_path).collect();
            paths.extend(pillars.iter().map(PathBuf::as_path));
            paths.extend(scoring.weights.as_deref());
            require_exists(&paths)?;
            let refdata = ReferenceData::from_env()?;
            let weights = scoring.weights.as_deref().map(WeightConfig::load).transpose()?;
            let mut entries = Vec::with_capacity(config.len());
            for (i, path) in config.iter().enumerate() {
                let cfg = FederationConfig::load(path)?;
                let fixture = pillars.get(i).map(|p| PillarFixture::load(p)).transpose()?;
                entries.push((scenario_name(path), cfg, fixture));
            }
            let comparison = assess::compare(&entries, &refdata, weights.as_ref(), scoring.allow_partial)?;
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            write_atomic(&out.join(COMPARISON_FILE), &comparison.render())?;
            print!("{}", comparison.table());
        }
        Command::Validate { config } => {
            let paths: Vec<&Path> = config.iter().map(PathBuf::as_path).collect();
            require_exists(&paths)?;
            let refdata = ReferenceData::from_env()?;
            for path in &config {
                let cfg = FederationConfig::load(path)?;
                assess::validate(&cfg, &refdata)?;
                println!("ok {}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error[usage]: {first}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e.kind();
            let message = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {message}", kind_label(kind));
            ExitCode::from(exit_code(kind))
        }
    }
}
