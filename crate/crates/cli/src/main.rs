use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use selfmix_cli::config::parse_config;
use selfmix_cli::diagnose::{diagnose, DiagnoseOptions};
use selfmix_cli::portions_cmd::{portions, RegionSpec};
use selfmix_cli::simulate::{resolve_out_dir, simulate};
use selfmix_cli::CliError;

/// Phase-space simulator for fluid that mixes across velocity classes.
#[derive(Parser)]
#[command(name = "selfmix", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a config and write snapshots, moments, the mass ledger and a summary.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the config's `seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Track fluid portions seeded in regions and record their overlaps.
    Portions {
        #[arg(long)]
        config: PathBuf,
        /// `[name=]lo:hi[,lo:hi]` in domain coordinates, or `[name=]all`.
        #[arg(long = "region", required = true)]
        regions: Vec<RegionSpec>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Re-check a run directory and print one PASS/FAIL line per check.
    Diagnose {
        run_dir: PathBuf,
        /// Print the JSON report instead of text.
        #[arg(long)]
        json: bool,
        #[arg(long, hide = true)]
        inject_symmetric_defect: Option<f64>,
    },
}

fn execute(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::Simulate { config, out, seed } => {
            let cfg = parse_config(&config)?;
            let dir = resolve_out_dir(&cfg, out.as_deref());
            let seed = seed.unwrap_or(cfg.seed);
            let s = simulate(&cfg, &dir, seed)?;
            println!(
                "{} steps to t = {}, max mass drift {:e}, output in {}",
                s.steps,
                s.t_final,
                s.max_mass_drift,
                dir.display()
            );
            Ok(true)
        }
        Command::Portions {
            config,
            regions,
            out,
            seed,
        } => {
            let cfg = parse_config(&config)?;
            let dir = resolve_out_dir(&cfg, out.as_deref());
            let seed = seed.unwrap_or(cfg.seed);
            let s = portions(&cfg, &regions, &dir, seed)?;
            for p in &s.overlaps {
                match p.first_positive_t {
                    Some(t) => println!("{} & {}: overlap from t = {t}", p.a, p.b),
                    None => println!("{} & {}: no overlap", p.a, p.b),
                }
            }
            Ok(true)
        }
        Command::Diagnose {
            run_dir,
            json,
            inject_symmetric_defect,
        } => {
            let report = diagnose(&run_dir, &DiagnoseOptions { inject_symmetric_defect })?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
            } else {
                for c in &report.checks {
                    println!("{}", c.line());
                }
            }
            Ok(report.passed())
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
