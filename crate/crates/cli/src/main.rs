use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use htcontrol::closed_loop::RunMode;
use htcontrol_cli::commands::{cmd_certify, cmd_run, cmd_sweep, CertifyOptions};
use htcontrol_cli::config::{parse_config, parse_override, LoadedConfig};
use htcontrol_cli::selftest::run_selftest;
use htcontrol_cli::{CliError, CliResult};

/// Closed-loop spin-lattice control with hierarchical Tucker truncation.
#[derive(Parser)]
#[command(name = "htctl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON config file; keys override the preset values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in preset (only `paper-4x4`).
    #[arg(long)]
    preset: Option<String>,
    /// Inline override `key=value`; the value is parsed as JSON when possible.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory [default: `output_dir` from the config, else `out`].
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> CliResult<(LoadedConfig, PathBuf)> {
        let overrides = self
            .overrides
            .iter()
            .map(|o| parse_override(o))
            .collect::<CliResult<Vec<_>>>()?;
        let loaded = parse_config(self.preset.as_deref(), self.config.as_deref(), &overrides)?;
        let out = self
            .out
            .clone()
            .or_else(|| loaded.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        Ok((loaded, out))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one trajectory.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// nominal, surrogate or transfer.
        #[arg(long, default_value = "nominal")]
        mode: String,
        /// Uniform HT rank for surrogate and transfer runs.
        #[arg(long)]
        rank: Option<usize>,
    },
    /// Run the nominal loop plus one transfer run per configured rank.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        /// Sweep only this rank.
        #[arg(long)]
        rank: Option<usize>,
        /// Worker threads for independent ranks.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Fit decay constants and check the stability bounds on logged runs.
    Certify {
        /// CSV files or directories containing them.
        #[arg(required = true)]
        logs: Vec<PathBuf>,
        /// Target tube radius for the rank recommendation.
        #[arg(long)]
        eta: Option<f64>,
        /// Metric comparison constant.
        #[arg(long, default_value_t = 1.0)]
        m_star: f64,
        /// Use this contraction factor instead of estimating it.
        #[arg(long)]
        rho: Option<f64>,
        /// Share of each run excluded from the contraction estimate as tail.
        #[arg(long, default_value_t = 0.1)]
        tail_fraction: f64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Check the propagator, truncation and metric against small oracles.
    Selftest {
        /// Replace every check's tolerance.
        #[arg(long)]
        tolerance: Option<f64>,
    },
}

fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Run { config, mode, rank } => {
            let mode: RunMode = mode.parse()?;
            let (loaded, out) = config.load()?;
            let log = cmd_run(&loaded.config, mode, rank, &out)?;
            println!(
                "{mode} run: {} steps, final dist_to_target {:e}, max residual {:e}; wrote {}",
                log.steps(),
                log.final_dist(),
                log.max_residual(),
                out.display()
            );
        }
        Command::Sweep { mut config, rank, jobs } => {
            if let Some(rank) = rank {
                config.overrides.push(format!("ranks=[{rank}]"));
            }
            let (loaded, out) = config.load()?;
            let sweep = cmd_sweep(&loaded.config, jobs, &out)?;
            for entry in &sweep.entries {
                println!(
                    "rank {:>4}  tube {:e}  max residual {:e}",
                    entry.rank, entry.tube, entry.max_residual
                );
            }
            println!("wrote {}", out.display());
        }
        Command::Certify {
            logs,
            eta,
            m_star,
            rho,
            tail_fraction,
            out,
        } => {
            let options = CertifyOptions {
                eta,
                m_star,
                tail_fraction,
                rho,
            };
            let cert = cmd_certify(&logs, &options, &out)?;
            if let Some(rho) = cert.rho {
                println!("rho = {rho}");
            }
            if let Some(fit) = &cert.tube_decay {
                println!("tube fit: C2 = {:e}, c' = {}", fit.prefactor, fit.rate);
            }
            if let Some(r) = cert.recommended_rank {
                println!("recommended rank: {r}");
            }
            for note in &cert.notes {
                println!("note: {note}");
            }
            println!("wrote {}", out.join("certificate.json").display());
        }
        Command::Selftest { tolerance } => {
            let checks = run_selftest(tolerance)?;
            for check in &checks {
                println!("{check}");
            }
            let failed = checks.iter().filter(|c| !c.passed()).count();
            if failed > 0 {
                return Err(CliError::Failed(format!("{failed} of {} checks failed", checks.len())));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
