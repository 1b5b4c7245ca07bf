//! The four subcommands, callable without going through the binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use htcontrol::analysis::{
    check_practical_stability, check_transfer_bound, estimate_contraction, fit_spectral_decay, fit_tube_decay_points,
    rank_for_tolerance, CertificateReport, ContractionEstimate, DecayFit, DecayModel,
};
use htcontrol::closed_loop::{Experiment, RankSweepResult, RunMode, SpectraSnapshot, TrajectoryLog};
use htcontrol::model::named_state;
use htcontrol::propagate::splitting_error;
use htcontrol::StateVector;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::output::{read_csv, sweep_csv, write_file, write_json, write_log, LoadedCsv, SweepRow};

#[derive(Debug, Serialize)]
struct Versions {
    htctl: &'static str,
    htcontrol: &'static str,
}

const VERSIONS: Versions = Versions {
    htctl: env!("CARGO_PKG_VERSION"),
    htcontrol: htcontrol::VERSION,
};

#[derive(Debug, Serialize)]
struct Meta<'a> {
    config_fingerprint: String,
    command: &'static str,
    mode: Option<RunMode>,
    rank: Option<usize>,
    wall_time_seconds: f64,
    versions: Versions,
    /// `‖Π(ψ₀) − ψ₀‖` for truncated runs.
    initial_residual: Option<f64>,
    /// One-step splitting error against the dense propagator, when the
    /// lattice is small enough for `oracle_max_dim`.
    oracle_step_error: Option<f64>,
    sweep: Option<Vec<SweepSummary>>,
    config: &'a RunConfig,
}

#[derive(Debug, Serialize)]
struct SweepSummary {
    rank: usize,
    tube: f64,
    initial_residual: Option<f64>,
}

fn prepare(config: &RunConfig) -> CliResult<(Experiment, StateVector)> {
    config.validate()?;
    let experiment = Experiment::new(&config.lattice(), config.loop_options())?;
    let shape = experiment.drift().shape();
    let psi0 = named_state(&config.initial_state, shape, config.seed)?;
    Ok((experiment, psi0))
}

fn oracle_error(config: &RunConfig, experiment: &Experiment, psi0: &StateVector, u: f64) -> CliResult<Option<f64>> {
    if psi0.shape().dim() > config.oracle_max_dim {
        return Ok(None);
    }
    Ok(Some(splitting_error(
        psi0,
        experiment.drift(),
        experiment.control(),
        u,
        config.dt,
    )?))
}

fn stamp(log: &mut TrajectoryLog, config: &RunConfig, fingerprint: &str) {
    log.fingerprint = Some(fingerprint.to_string());
    log.seed = Some(config.seed);
}

/// Runs one trajectory and writes `trajectory.csv`, `spectra_<k>.csv` and
/// `meta.json` into `out`.
pub fn cmd_run(config: &RunConfig, mode: RunMode, rank: Option<usize>, out: &Path) -> CliResult<TrajectoryLog> {
    let start = Instant::now();
    let fingerprint = config.fingerprint();
    let (experiment, psi0) = prepare(config)?;
    let mut log = experiment.run(mode, &psi0, rank)?;
    stamp(&mut log, config, &fingerprint);
    let oracle_step_error = oracle_error(config, &experiment, &psi0, log.records[0].u)?;
    write_log(out, &log, &fingerprint)?;
    let meta = Meta {
        config_fingerprint: fingerprint,
        command: "run",
        mode: Some(mode),
        rank: log.rank,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        versions: VERSIONS,
        initial_residual: log.initial_residual,
        oracle_step_error,
        sweep: None,
        config,
    };
    write_json(&out.join("meta.json"), &meta)?;
    Ok(log)
}

/// Runs the nominal loop and one coupled run per configured rank. Writes
/// `nominal/`, `rank_<r>/` (trajectory and spectra files), `sweep.csv` and
/// `meta.json` into `out`.
pub fn cmd_sweep(config: &RunConfig, jobs: usize, out: &Path) -> CliResult<RankSweepResult> {
    let start = Instant::now();
    let fingerprint = config.fingerprint();
    let (experiment, psi0) = prepare(config)?;
    let mut sweep = experiment.run_rank_sweep(&psi0, jobs.max(1))?;
    stamp(&mut sweep.nominal, config, &fingerprint);
    for entry in &mut sweep.entries {
        stamp(&mut entry.log, config, &fingerprint);
    }
    write_log(&out.join("nominal"), &sweep.nominal, &fingerprint)?;
    for entry in &sweep.entries {
        write_log(&out.join(format!("rank_{}", entry.rank)), &entry.log, &fingerprint)?;
    }
    let rows: Vec<SweepRow> = sweep
        .entries
        .iter()
        .map(|e| SweepRow {
            rank: e.rank,
            tube: e.tube,
            final_dist: e.final_dist,
            max_residual: e.max_residual,
        })
        .collect();
    write_file(&out.join("sweep.csv"), &sweep_csv(&rows, &fingerprint))?;
    let oracle_step_error = oracle_error(config, &experiment, &psi0, sweep.nominal.records[0].u)?;
    let meta = Meta {
        config_fingerprint: fingerprint,
        command: "sweep",
        mode: Some(RunMode::Transfer),
        rank: None,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        versions: VERSIONS,
        initial_residual: None,
        oracle_step_error,
        sweep: Some(
            sweep
                .entries
                .iter()
                .map(|e| SweepSummary {
                    rank: e.rank,
                    tube: e.tube,
                    initial_residual: e.log.initial_residual,
                })
                .collect(),
        ),
        config,
    };
    write_json(&out.join("meta.json"), &meta)?;
    Ok(sweep)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertifyOptions {
    /// Target tube radius for the rank recommendation.
    pub eta: Option<f64>,
    pub m_star: f64,
    /// Share of the run treated as tail by the contraction estimate.
    pub tail_fraction: f64,
    /// Use this contraction factor instead of estimating one.
    pub rho: Option<f64>,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            eta: None,
            m_star: 1.0,
            tail_fraction: 0.1,
            rho: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryCertificate {
    pub path: String,
    pub mode: RunMode,
    pub rank: Option<usize>,
    pub report: Option<CertificateReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub config_fingerprint: String,
    pub inputs: Vec<String>,
    pub m_star: f64,
    pub tail_fraction: f64,
    pub eta: Option<f64>,
    pub rho: Option<f64>,
    pub contraction: Option<ContractionEstimate>,
    pub contraction_source: Option<String>,
    pub spectral_decay: Option<DecayFit>,
    pub spectral_decay_algebraic: Option<DecayFit>,
    pub tube_decay: Option<DecayFit>,
    pub recommended_rank: Option<usize>,
    pub trajectories: Vec<TrajectoryCertificate>,
    pub notes: Vec<String>,
}

fn collect_csv(path: &Path, found: &mut Vec<PathBuf>) -> CliResult<()> {
    let meta = fs::metadata(path).map_err(|e| CliError::io(path, e))?;
    if meta.is_dir() {
        let mut entries: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| CliError::io(path, e))?
            .map(|e| e.map(|e| e.path()).map_err(|err| CliError::io(path, err)))
            .collect::<CliResult<_>>()?;
        entries.sort();
        for entry in entries {
            if entry.is_dir() || entry.extension().is_some_and(|x| x == "csv") {
                collect_csv(&entry, found)?;
            }
        }
    } else {
        found.push(path.to_path_buf());
    }
    Ok(())
}

/// Certifies logged runs. `inputs` are CSV files or directories searched
/// recursively for CSV files; all of them must carry the same config
/// fingerprint. Writes `certificate.json` into `out`.
pub fn cmd_certify(inputs: &[PathBuf], options: &CertifyOptions, out: &Path) -> CliResult<Certificate> {
    if inputs.is_empty() {
        return Err(CliError::Usage(
            "certify needs at least one log file or directory".into(),
        ));
    }
    if !(options.m_star > 0.0) {
        return Err(CliError::Usage("M_star must be positive".into()));
    }
    if options.eta.is_some_and(|eta| !(eta > 0.0)) {
        return Err(CliError::Usage("eta must be positive".into()));
    }
    let mut paths = Vec::new();
    for input in inputs {
        collect_csv(input, &mut paths)?;
    }
    let files = paths.iter().map(|p| read_csv(p)).collect::<CliResult<Vec<_>>>()?;
    let Some(first) = files.first() else {
        return Err(CliError::Usage("no CSV files found in the given paths".into()));
    };
    for file in &files[1..] {
        if file.labels.fingerprint != first.labels.fingerprint {
            return Err(CliError::FingerprintMismatch {
                first: first.labels.fingerprint.clone(),
                first_path: first.path.clone(),
                second: file.labels.fingerprint.clone(),
                second_path: file.path.clone(),
            });
        }
    }

    let mut notes = Vec::new();
    let mut logs: Vec<(String, &TrajectoryLog)> = Vec::new();
    let mut spectra: Vec<&SpectraSnapshot> = Vec::new();
    let mut sweep: Option<&[SweepRow]> = None;
    for file in &files {
        match &file.content {
            LoadedCsv::Trajectory(log) => logs.push((file.path.display().to_string(), log)),
            LoadedCsv::Spectra(s) => spectra.push(s),
            LoadedCsv::Sweep(rows) => {
                if sweep.is_some() {
                    return Err(CliError::Usage("more than one sweep.csv among the inputs".into()));
                }
                sweep = Some(rows);
            }
        }
    }

    // The contraction factor belongs to the nominal loop; without a nominal
    // log the least-truncated run is the closest stand-in.
    let source = logs
        .iter()
        .find(|(_, log)| log.mode == RunMode::Nominal)
        .or_else(|| logs.iter().max_by_key(|(_, log)| log.rank));
    let mut contraction = None;
    let mut contraction_source = None;
    let rho = match (options.rho, source) {
        (Some(rho), _) => Some(rho),
        (None, Some((path, log))) => match estimate_contraction(log, options.tail_fraction) {
            Ok(est) => {
                contraction_source = Some(path.clone());
                let rho = est.rho;
                contraction = Some(est);
                Some(rho)
            }
            Err(e) => {
                notes.push(format!("contraction estimate from {path}: {e}"));
                None
            }
        },
        (None, None) => None,
    };

    let mut trajectories = Vec::new();
    for (path, log) in &logs {
        let report = match rho {
            Some(rho) => Some(match log.mode {
                RunMode::Transfer => check_transfer_bound(log, rho)?,
                RunMode::Nominal | RunMode::Surrogate => check_practical_stability(log, rho, options.m_star)?,
            }),
            None => None,
        };
        trajectories.push(TrajectoryCertificate {
            path: path.clone(),
            mode: log.mode,
            rank: log.rank,
            report,
        });
    }

    let pooled = || spectra.iter().flat_map(|s| s.spectra.values().map(Vec::as_slice));
    let mut fit_or_note = |model: DecayModel| match fit_spectral_decay(pooled(), model) {
        Ok(fit) => Some(fit),
        Err(e) => {
            notes.push(format!("{model:?} spectral fit: {e}"));
            None
        }
    };
    let spectral_decay = fit_or_note(DecayModel::Exponential);
    let spectral_decay_algebraic = fit_or_note(DecayModel::Algebraic);

    let tube_decay = match sweep {
        Some(rows) => {
            let ranks: Vec<usize> = rows.iter().map(|r| r.rank).collect();
            let tubes: Vec<f64> = rows.iter().map(|r| r.tube).collect();
            match fit_tube_decay_points(&ranks, &tubes) {
                Ok(fit) => Some(fit),
                Err(e) => {
                    notes.push(format!("tube fit: {e}"));
                    None
                }
            }
        }
        None => None,
    };

    let recommended_rank = match options.eta {
        None => None,
        Some(eta) => {
            if sweep.is_none() {
                return Err(CliError::Usage("--eta needs a sweep.csv among the inputs".into()));
            }
            let fit = tube_decay
                .as_ref()
                .ok_or_else(|| CliError::Failed("no tube fit available for the rank recommendation".into()))?;
            let rho = rho.ok_or_else(|| CliError::Failed("no contraction factor available".into()))?;
            Some(rank_for_tolerance(fit.prefactor, fit.rate, rho, options.m_star, eta)?)
        }
    };

    let certificate = Certificate {
        config_fingerprint: first.labels.fingerprint.clone(),
        inputs: paths.iter().map(|p| p.display().to_string()).collect(),
        m_star: options.m_star,
        tail_fraction: options.tail_fraction,
        eta: options.eta,
        rho,
        contraction,
        contraction_source,
        spectral_decay,
        spectral_decay_algebraic,
        tube_decay,
        recommended_rank,
        trajectories,
        notes,
    };
    write_json(&out.join("certificate.json"), &certificate)?;
    Ok(certificate)
}
