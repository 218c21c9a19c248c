//! `swlab`: run the verification suites from a config file and write reports.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use swlab_core::config::ExperimentConfig;
use swlab_core::harness::{self, emit_report, ReportFormat, SuiteReport};
use swlab_core::spectral::{write_spectrum_csv, write_symbol_scan_csv};
use swlab_core::{ck_dim_bound, sym_dim, tracefree_dim, Error};

/// Environment variable that overrides the default output directory.
const OUT_ENV: &str = "SWLAB_OUT";

#[derive(Parser)]
#[command(name = "swlab", version, about = "Numerical checks for gradients of trace-free symmetric tensor fields on tori")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print fiber dimensions and the conformal Killing bound.
    Info {
        /// Dimension or range such as `2-5` (2..=8).
        #[arg(long)]
        n: String,
        /// Rank or range such as `0-3` (0..=6).
        #[arg(long)]
        p: String,
    },
    /// Identity suite.
    Check(RunArgs),
    /// Kernel experiment.
    Kernel(RunArgs),
    /// Principal symbol scan.
    Symbol(RunArgs),
    /// Convergence study.
    Converge(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (default: $SWLAB_OUT, else `swlab-out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// `key=value`, applied after the config file; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn parse_range(s: &str, lo: usize, hi: usize, what: &str) -> Result<Vec<usize>, String> {
    let (a, b) = match s.split_once('-') {
        Some((a, b)) => (a.trim(), b.trim()),
        None => (s.trim(), s.trim()),
    };
    let parse = |v: &str| v.parse::<usize>().map_err(|_| format!("--{what}: `{v}` is not an integer"));
    let (a, b) = (parse(a)?, parse(b)?);
    if a > b || a < lo || b > hi {
        return Err(format!("--{what} must lie in {lo}..={hi} (got {s})"));
    }
    Ok((a..=b).collect())
}

fn info(n: &str, p: &str) -> Result<(), String> {
    let ns = parse_range(n, 2, 8, "n")?;
    let ps = parse_range(p, 0, 6, "p")?;
    println!("{:>3} {:>3} {:>10} {:>14} {:>14}", "n", "p", "sym_dim", "tracefree_dim", "ck_dim_bound");
    let mut footnote = false;
    for &n in &ns {
        for &p in &ps {
            let bound = if p == 0 {
                "-".to_string()
            } else {
                let b = ck_dim_bound(n, p).map_err(|e| e.to_string())?;
                footnote |= b.extrapolated;
                format!("{}{}", b.value, if b.extrapolated { "*" } else { "" })
            };
            println!("{n:>3} {p:>3} {:>10} {:>14} {bound:>14}", sym_dim(n, p), tracefree_dim(n, p));
        }
    }
    if footnote {
        println!("* extrapolated for n=2: the closed form is stated for n >= 3");
    }
    Ok(())
}

fn out_dir(args: &RunArgs) -> PathBuf {
    args.out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("swlab-out"))
}

fn load(args: &RunArgs) -> swlab_core::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    for o in &args.overrides {
        cfg.apply_override(o)?;
    }
    Ok(cfg)
}

fn write_all(report: &SuiteReport, dir: &Path, stem: &str) -> swlab_core::Result<()> {
    for f in [ReportFormat::Json, ReportFormat::Csv, ReportFormat::Markdown] {
        emit_report(report, f, &dir.join(format!("{stem}.{}", f.extension())))?;
    }
    Ok(())
}

fn run(cmd: &Command, args: &RunArgs) -> swlab_core::Result<SuiteReport> {
    let cfg = load(args)?;
    let dir = out_dir(args);
    log::info!("config:\n{}", cfg.to_config_string());
    std::fs::create_dir_all(&dir).map_err(|e| Error::Io {
        path: dir.display().to_string(),
        source: e,
    })?;
    let (stem, report) = match cmd {
        Command::Check(_) => ("check", harness::run_identity_suite(&cfg)?),
        Command::Kernel(_) => {
            let out = harness::kernel_experiment(&cfg)?;
            for s in &out.spectra {
                let sizes = s.sizes.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("x");
                write_spectrum_csv(s, &dir.join(format!("spectrum_{}_{sizes}.csv", s.operator)))?;
            }
            ("kernel", out.report)
        }
        Command::Symbol(_) => {
            let out = harness::symbol_experiment(&cfg)?;
            write_symbol_scan_csv(&out.rows, &dir.join("symbol_scan.csv"))?;
            ("symbol", out.report)
        }
        Command::Converge(_) => ("converge", harness::convergence_study(&cfg)?),
        Command::Info { .. } => unreachable!("handled before"),
    };
    write_all(&report, &dir, stem)?;
    Ok(report)
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let args = match &cli.command {
        Command::Info { n, p } => {
            return match info(n, p) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e}\nusage: swlab info --n <2..=8> --p <0..=6>");
                    ExitCode::from(2)
                }
            };
        }
        Command::Check(a) | Command::Kernel(a) | Command::Symbol(a) | Command::Converge(a) => a,
    };
    match run(&cli.command, args) {
        Ok(report) => {
            let md = report.to_markdown();
            for line in md.lines().take(3) {
                println!("{line}");
            }
            for c in report.checks.iter().filter(|c| c.mandatory && c.status != harness::Status::Pass) {
                println!("{} {}", c.status.label(), c.id);
            }
            println!("reports written to {}", out_dir(args).display());
            ExitCode::from(report.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::TooManyDofs { .. } = e {
                eprintln!("hint: reduce grid.sizes or ranks to stay under the dense cap");
            }
            ExitCode::from(2)
        }
    }
}
