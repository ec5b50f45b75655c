use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rsmimo::experiment::{crossvalidate, emit_plotdata, read_results, run_manifest, write_plotdata, Manifest, RunOptions};
use rsmimo::rmt::QVariant;
use rsmimo::{Engine, Error};

const OUT_DIR_ENV: &str = "RSMIMO_OUT_DIR";

const EXIT_USAGE: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_ENGINE: u8 = 3;

#[derive(Parser)]
#[command(name = "rsmimo", version, about = "Rate-splitting massive MISO downlink simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum EngineArg {
    Mc,
    De,
}

#[derive(Clone, Copy, ValueEnum)]
enum QArg {
    Derived,
    Literal,
}

#[derive(Subcommand)]
enum Command {
    /// Run every grid point of a manifest and write a result table.
    Run {
        manifest: PathBuf,
        #[arg(long, value_delimiter = ',')]
        engines: Option<Vec<EngineArg>>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: $RSMIMO_OUT_DIR, else ./results).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Check a manifest without running it.
    Validate { manifest: PathBuf },
    /// Compare the DE engine against Monte Carlo at every grid point.
    Xval {
        manifest: PathBuf,
        /// Tolerance in percent, overriding the manifest.
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        workers: Option<usize>,
        /// Interference-coefficient variant used by the DE engine.
        #[arg(long, value_enum)]
        q_variant: Option<QArg>,
    },
    /// Extract figure series from a result table.
    Plotdata {
        results: PathBuf,
        #[arg(long)]
        figure: String,
        /// Output file (default: next to the results).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(path: &Path) -> Result<Manifest, ExitCode> {
    let m = Manifest::from_path(path).map_err(|e| fail(EXIT_VALIDATION, &e))?;
    m.validate().map_err(|e| fail(EXIT_VALIDATION, &e))?;
    Ok(m)
}

fn fail(code: u8, e: &Error) -> ExitCode {
    eprintln!("rsmimo: {e}");
    ExitCode::from(code)
}

fn run(cli: Cli) -> Result<ExitCode, ExitCode> {
    match cli.command {
        Command::Validate { manifest } => {
            let m = load(&manifest)?;
            println!(
                "{}: {} grid points x {} variants x {} engines",
                m.name,
                m.points().len(),
                m.variants().len(),
                m.engines.len()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Run { manifest, engines, trials, seed, out, workers } => {
            let mut m = load(&manifest)?;
            if let Some(e) = engines {
                m.engines = e
                    .into_iter()
                    .map(|e| match e {
                        EngineArg::Mc => Engine::Mc,
                        EngineArg::De => Engine::De,
                    })
                    .collect();
            }
            if let Some(t) = trials {
                if t == 0 {
                    return Err(fail(EXIT_USAGE, &Error::Parse("--trials must be positive".into())));
                }
                m.trials = t;
            }
            if let Some(s) = seed {
                m.set_seed(s);
            }
            let dir = out
                .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("results"));
            let file = m
                .output
                .as_ref()
                .and_then(|p| p.file_name().map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from(format!("{}.tsv", m.name)));
            std::fs::create_dir_all(&dir).map_err(|e| fail(EXIT_USAGE, &e.into()))?;
            let path = dir.join(file);
            let f = File::create(&path).map_err(|e| fail(EXIT_USAGE, &e.into()))?;
            let mut w = BufWriter::new(f);
            let summary = run_manifest(&m, &RunOptions { workers }, &mut w).map_err(|e| fail(EXIT_ENGINE, &e))?;
            w.flush().map_err(|e| fail(EXIT_ENGINE, &e.into()))?;
            println!("{} rows written to {}", summary.rows.len(), path.display());
            if summary.failures > 0 {
                eprintln!("rsmimo: {} rows failed", summary.failures);
                return Ok(ExitCode::from(EXIT_ENGINE));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Xval { manifest, tol, workers, q_variant } => {
            let mut m = load(&manifest)?;
            if let Some(q) = q_variant {
                m.de.q_variant = match q {
                    QArg::Derived => QVariant::Derived,
                    QArg::Literal => QVariant::Literal,
                };
            }
            let report = crossvalidate(&m, tol, workers).map_err(|e| fail(EXIT_ENGINE, &e))?;
            print!("{}", report.render());
            Ok(if report.pass { ExitCode::SUCCESS } else { ExitCode::from(EXIT_ENGINE) })
        }
        Command::Plotdata { results, figure, out } => {
            let f = File::open(&results).map_err(|e| fail(EXIT_USAGE, &e.into()))?;
            let rows = read_results(BufReader::new(f)).map_err(|e| fail(EXIT_VALIDATION, &e))?;
            let plot = emit_plotdata(&rows, &figure).map_err(|e| fail(EXIT_USAGE, &e))?;
            let path = out.unwrap_or_else(|| results.with_extension(format!("{figure}.tsv")));
            let mut w = BufWriter::new(File::create(&path).map_err(|e| fail(EXIT_USAGE, &e.into()))?);
            write_plotdata(&plot, &mut w).map_err(|e| fail(EXIT_USAGE, &e))?;
            w.flush().map_err(|e| fail(EXIT_USAGE, &e.into()))?;
            println!("{} points written to {}", plot.len(), path.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    run(cli).unwrap_or_else(|code| code)
}
