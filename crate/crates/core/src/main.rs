use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tspvqa::encodings::{EncodingScheme, Scheme};
use tspvqa::metrics::DEFAULT_LANDSCAPE_RESOLUTION;
use tspvqa::runner::{self, AxesChoice, MatrixConfig, RunConfig, RunRecord, SummaryRow};
use tspvqa::tsp::{generate_instance, TspInstance};
use tspvqa::{Error, Result};

#[derive(Parser)]
#[command(
    version,
    about = "Variational TSP experiments on a state-vector simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a random instance in the 100 x 100 box.
    GenInstance {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the cost polynomial of an encoded instance.
    Encode {
        #[arg(long)]
        scheme: Scheme,
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        penalty: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one configuration.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the output directory of the config.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[arg(long)]
        allow_large: bool,
    },
    /// Run every valid scheme/algorithm cell for a list of instances.
    Matrix {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[arg(long)]
        allow_large: bool,
    },
    /// Scan the energy over two parameters of a stored restart.
    Landscape {
        #[arg(long)]
        record: PathBuf,
        #[arg(long, default_value_t = 0)]
        restart: usize,
        /// Two parameter indices, e.g. `0,1`.
        #[arg(long, value_parser = parse_axes, conflicts_with = "axes_seed")]
        axes: Option<(usize, usize)>,
        /// Seed for picking the two indices when `--axes` is absent.
        #[arg(long, default_value_t = 0)]
        axes_seed: u64,
        #[arg(long, default_value_t = DEFAULT_LANDSCAPE_RESOLUTION)]
        resolution: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_axes(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected `k1,k2`, got `{s}`"))?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("`{v}`: {e}"));
    Ok((parse(a)?, parse(b)?))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        }),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes()).map_err(|e| Error::Io {
                path: "<stdout>".into(),
                source: e,
            })
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

fn print_row(row: &SummaryRow) {
    println!(
        "n={} {:<11} {:<4}  r_f {} +- {}  r_ell {} +- {}  ({} restarts, {} failed)",
        row.n,
        row.scheme.as_str(),
        row.algorithm,
        fmt_opt(row.r_f_mean),
        fmt_opt(row.r_f_std),
        fmt_opt(row.r_ell_mean),
        fmt_opt(row.r_ell_std),
        row.restarts,
        row.failures
    );
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenInstance { n, seed, out } => {
            let inst = generate_instance(n, seed)?;
            let text = serde_json::to_string_pretty(&inst.to_file())? + "\n";
            emit(out.as_deref(), &text)
        }
        Command::Encode {
            scheme,
            instance,
            penalty,
            out,
        } => {
            let inst = TspInstance::load(&instance)?;
            let enc = EncodingScheme::new(
                scheme,
                inst.n(),
                penalty.unwrap_or(scheme.default_penalty()),
            )?;
            let poly = enc.polynomial(&inst)?.ok_or_else(|| {
                Error::InvalidArgument("the permutation encoding has no cost polynomial".into())
            })?;
            emit(out.as_deref(), &poly.dump())
        }
        Command::Run {
            config,
            output_dir,
            allow_large,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            cfg.output_dir = output_dir.or(cfg.output_dir);
            cfg.allow_large |= allow_large;
            let record = runner::run_experiment(&cfg)?;
            print_row(&SummaryRow::from_record(&record));
            if let Some(dir) = &cfg.output_dir {
                println!("wrote {}", dir.join(record.file_name()).display());
            }
            Ok(())
        }
        Command::Matrix {
            config,
            output_dir,
            allow_large,
        } => {
            let mut cfg = MatrixConfig::load(&config)?;
            cfg.output_dir = output_dir.or(cfg.output_dir);
            cfg.allow_large |= allow_large;
            let outcome = runner::run_matrix(&cfg)?;
            for row in outcome.summary() {
                print_row(&row);
            }
            for f in &outcome.failures {
                eprintln!(
                    "cell {} {} failed: {}",
                    f.scheme,
                    f.algorithm.label(),
                    f.error
                );
            }
            Ok(())
        }
        Command::Landscape {
            record,
            restart,
            axes,
            axes_seed,
            resolution,
            out,
        } => {
            let rec = RunRecord::load(&record)?;
            let choice = match axes {
                Some((a, b)) => AxesChoice::Explicit(a, b),
                None => AxesChoice::Seeded(axes_seed),
            };
            let land = runner::scan_landscape_cmd(&rec, restart, choice, resolution)?;
            let mut buf = Vec::new();
            land.write_csv(&mut buf).map_err(|e| Error::Io {
                path: "<buffer>".into(),
                source: e,
            })?;
            eprintln!("axes {},{}", land.axes.0, land.axes.1);
            emit(out.as_deref(), &String::from_utf8_lossy(&buf))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
