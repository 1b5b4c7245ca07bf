//! Closed-loop engines: nominal plant, HT-truncated surrogate, and the
//! coupled loop in which the surrogate's feedback drives the full plant.
//!
//! Every run logs `K + 1` records. Record `k` holds quantities of state `k`
//! (distance to target, feedback `u_k`, norm, plant–surrogate gap) and of
//! the transition `k → k+1` (truncation residual `‖e_k‖`, one-step transfer
//! error); the transition channels are empty on the last record.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ht::{hsvd_truncate_with, node_spectra, DimensionTree, NodeId, RankBudget, TruncationOptions};
use crate::model::{control_hamiltonian, feedback, heisenberg_drift, target_state, Hamiltonian, LatticeSpec, Metric};
use crate::propagate::StrangPropagator;
use crate::tensor::{distance, StateVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Nominal,
    Surrogate,
    Transfer,
}

impl std::fmt::Display for RunMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RunMode::Nominal => "nominal",
            RunMode::Surrogate => "surrogate",
            RunMode::Transfer => "transfer",
        })
    }
}

impl std::str::FromStr for RunMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nominal" => Ok(RunMode::Nominal),
            "surrogate" => Ok(RunMode::Surrogate),
            "transfer" => Ok(RunMode::Transfer),
            other => Err(Error::config("mode", format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub k: usize,
    /// Distance of the plant (nominal, transfer) or surrogate state to the target.
    pub dist_to_target: f64,
    pub u: f64,
    /// Norm of the state the feedback is evaluated on.
    pub surrogate_norm: f64,
    pub residual: Option<f64>,
    pub gap: Option<f64>,
    pub onestep_transfer_err: Option<f64>,
    /// Plant norm in coupled runs.
    pub plant_norm: Option<f64>,
    /// Surrogate distance to target in coupled runs.
    pub surrogate_dist: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectraSnapshot {
    pub k: usize,
    pub spectra: BTreeMap<NodeId, Vec<f64>>,
}

/// States kept by instrumented surrogate runs: `next = z + e`.
#[derive(Debug, Clone, PartialEq)]
pub struct InstrumentedStep {
    pub z: StateVector,
    pub e: StateVector,
    pub next: StateVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub mode: RunMode,
    pub rank: Option<usize>,
    pub seed: Option<u64>,
    pub fingerprint: Option<String>,
    /// `‖ψ₀ − Π(ψ₀)‖` for truncated runs.
    pub initial_residual: Option<f64>,
    pub records: Vec<StepRecord>,
    /// Pre-truncation spectra `Z_k` (surrogate and transfer runs) or state
    /// spectra (nominal runs).
    pub spectra: Vec<SpectraSnapshot>,
    #[serde(skip)]
    pub instrumented: Vec<InstrumentedStep>,
}

impl TrajectoryLog {
    /// An empty log.
    pub fn new(mode: RunMode, rank: Option<usize>) -> Self {
        Self {
            mode,
            rank,
            seed: None,
            fingerprint: None,
            initial_residual: None,
            records: Vec::new(),
            spectra: Vec::new(),
            instrumented: Vec::new(),
        }
    }

    pub fn steps(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn dists(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.dist_to_target).collect()
    }

    pub fn controls(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.u).collect()
    }

    /// `max_k ‖e_k‖`, zero when the channel is absent.
    pub fn max_residual(&self) -> f64 {
        self.records.iter().filter_map(|r| r.residual).fold(0.0, f64::max)
    }

    pub fn final_dist(&self) -> f64 {
        self.records.last().map(|r| r.dist_to_target).unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopOptions {
    /// Snapshot spectra every `stride` steps; `None` disables snapshots.
    pub spectra_stride: Option<usize>,
    pub renormalize_after_truncation: bool,
    pub metric: Metric,
    /// Keep `Z_k`, `e_k` and `Ψ_{k+1}^r` for every step (memory heavy).
    pub instrument: bool,
}

impl Default for LoopOptions {
    fn default() -> Self {
        Self {
            spectra_stride: Some(10),
            renormalize_after_truncation: false,
            metric: Metric::MinPhase,
            instrument: false,
        }
    }
}

/// A lattice, its Hamiltonians and the cached propagator.
#[derive(Debug, Clone)]
pub struct Experiment {
    spec: LatticeSpec,
    options: LoopOptions,
    h0: Hamiltonian,
    h1: Hamiltonian,
    target: StateVector,
    propagator: StrangPropagator,
    tree: DimensionTree,
}

impl Experiment {
    pub fn new(spec: &LatticeSpec, options: LoopOptions) -> Result<Self> {
        spec.validate()?;
        if options.spectra_stride == Some(0) {
            return Err(Error::config("spectra_snapshot_stride", "must be at least 1"));
        }
        let h0 = heisenberg_drift(spec.rows, spec.cols, spec.coupling, spec.periodic)?;
        let h1 = control_hamiltonian(spec.rows, spec.cols, &spec.control_sites)?;
        let target = target_state(&spec.target, h0.shape())?;
        let propagator = StrangPropagator::new(&h0, &h1, spec.dt)?;
        // Single-site lattices have no matricizations; use a trivial tree of
        // two modes only when possible.
        let tree = DimensionTree::balanced(spec.n_sites().max(2))?;
        Ok(Self {
            spec: spec.clone(),
            options,
            h0,
            h1,
            target,
            propagator,
            tree,
        })
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn drift(&self) -> &Hamiltonian {
        &self.h0
    }

    pub fn control(&self) -> &Hamiltonian {
        &self.h1
    }

    pub fn target(&self) -> &StateVector {
        &self.target
    }

    pub fn tree(&self) -> &DimensionTree {
        &self.tree
    }

    pub fn propagator(&self) -> &StrangPropagator {
        &self.propagator
    }

    fn check_initial(&self, psi0: &StateVector) -> Result<()> {
        if psi0.shape() != self.h0.shape() {
            return Err(Error::contract("initial state shape does not match the lattice"));
        }
        if (psi0.norm() - 1.0).abs() > 1e-10 {
            return Err(Error::contract("initial state must have unit norm"));
        }
        Ok(())
    }

    fn control_for(&self, state: &StateVector) -> Result<f64> {
        feedback(state, &self.target, &self.h1, self.spec.gamma, self.spec.u_max)
    }

    fn dist(&self, a: &StateVector, b: &StateVector) -> Result<f64> {
        self.options.metric.distance(a, b)
    }

    fn snapshot_due(&self, k: usize) -> bool {
        self.options.spectra_stride.is_some_and(|s| k.is_multiple_of(s))
    }

    fn truncate(
        &self,
        z: &StateVector,
        rank: usize,
        spectra: bool,
    ) -> Result<(StateVector, crate::ht::TruncationReport)> {
        self.require_tree()?;
        let options = TruncationOptions {
            renormalize: self.options.renormalize_after_truncation,
            spectra,
        };
        hsvd_truncate_with(z, &self.tree, &RankBudget::Uniform(rank), options)
    }

    fn require_tree(&self) -> Result<()> {
        if self.spec.n_sites() < 2 {
            Err(Error::contract("truncated runs need at least two sites"))
        } else {
            Ok(())
        }
    }

    /// `Ψ_{k+1} = F(Ψ_k, κ(Ψ_k))` on the full state.
    pub fn run_nominal(&self, psi0: &StateVector) -> Result<TrajectoryLog> {
        self.check_initial(psi0)?;
        let mut log = TrajectoryLog::new(RunMode::Nominal, None);
        let mut psi = psi0.clone();
        for k in 0..=self.spec.steps {
            let u = self.control_for(&psi)?;
            log.records.push(StepRecord {
                k,
                dist_to_target: self.dist(&psi, &self.target)?,
                u,
                surrogate_norm: psi.norm(),
                residual: None,
                gap: None,
                onestep_transfer_err: None,
                plant_norm: None,
                surrogate_dist: None,
            });
            if self.snapshot_due(k) && self.spec.n_sites() >= 2 {
                log.spectra.push(SpectraSnapshot {
                    k,
                    spectra: node_spectra(&psi, &self.tree)?,
                });
            }
            if k < self.spec.steps {
                psi = self.propagator.step(&psi, u)?;
            }
        }
        Ok(log)
    }

    /// `Ψ_{k+1}^r = Π_r(F(Ψ_k^r, κ(Ψ_k^r)))` starting from `Π_r(ψ₀)`.
    pub fn run_surrogate(&self, psi0: &StateVector, rank: usize) -> Result<TrajectoryLog> {
        self.check_initial(psi0)?;
        let mut log = TrajectoryLog::new(RunMode::Surrogate, Some(rank));
        let (mut psi, init) = self.truncate(psi0, rank, false)?;
        log.initial_residual = Some(init.residual);
        for k in 0..=self.spec.steps {
            let u = self.control_for(&psi)?;
            let mut record = StepRecord {
                k,
                dist_to_target: self.dist(&psi, &self.target)?,
                u,
                surrogate_norm: psi.norm(),
                residual: None,
                gap: None,
                onestep_transfer_err: None,
                plant_norm: None,
                surrogate_dist: None,
            };
            if k < self.spec.steps {
                let z = self.propagator.step(&psi, u)?;
                let snapshot = self.snapshot_due(k);
                let (next, report) = self.truncate(&z, rank, snapshot)?;
                record.residual = Some(report.residual);
                if snapshot {
                    log.spectra.push(SpectraSnapshot {
                        k,
                        spectra: report.per_node_spectra,
                    });
                }
                if self.options.instrument {
                    log.instrumented.push(InstrumentedStep {
                        e: next.sub(&z)?,
                        z,
                        next: next.clone(),
                    });
                }
                psi = next;
            }
            log.records.push(record);
        }
        Ok(log)
    }

    /// Coupled loop: the surrogate computes `u_k = κ(Ψ_k^r)` and both the
    /// surrogate and the untruncated plant advance with it.
    pub fn run_transfer(&self, psi0: &StateVector, rank: usize) -> Result<TrajectoryLog> {
        self.check_initial(psi0)?;
        let mut log = TrajectoryLog::new(RunMode::Transfer, Some(rank));
        let mut plant = psi0.clone();
        let (mut surrogate, init) = self.truncate(psi0, rank, false)?;
        log.initial_residual = Some(init.residual);
        for k in 0..=self.spec.steps {
            let u = self.control_for(&surrogate)?;
            let mut record = StepRecord {
                k,
                dist_to_target: self.dist(&plant, &self.target)?,
                u,
                surrogate_norm: surrogate.norm(),
                residual: None,
                gap: Some(self.dist(&surrogate, &plant)?),
                onestep_transfer_err: None,
                plant_norm: Some(plant.norm()),
                surrogate_dist: Some(self.dist(&surrogate, &self.target)?),
            };
            if k < self.spec.steps {
                let z = self.propagator.step(&surrogate, u)?;
                let snapshot = self.snapshot_due(k);
                let (next, report) = self.truncate(&z, rank, snapshot)?;
                plant = self.propagator.step(&plant, u)?;
                record.residual = Some(report.residual);
                record.onestep_transfer_err = Some(distance(&plant, &next)?);
                if snapshot {
                    log.spectra.push(SpectraSnapshot {
                        k,
                        spectra: report.per_node_spectra,
                    });
                }
                surrogate = next;
            }
            log.records.push(record);
        }
        Ok(log)
    }

    pub fn run(&self, mode: RunMode, psi0: &StateVector, rank: Option<usize>) -> Result<TrajectoryLog> {
        let need_rank = || rank.ok_or_else(|| Error::config("rank", format!("mode {mode} needs a rank")));
        match mode {
            RunMode::Nominal => self.run_nominal(psi0),
            RunMode::Surrogate => self.run_surrogate(psi0, need_rank()?),
            RunMode::Transfer => self.run_transfer(psi0, need_rank()?),
        }
    }

    /// One coupled run per configured rank plus one nominal run. With
    /// `jobs > 1` ranks are distributed over scoped threads; results do not
    /// depend on `jobs`.
    pub fn run_rank_sweep(&self, psi0: &StateVector, jobs: usize) -> Result<RankSweepResult> {
        if self.spec.ranks.is_empty() {
            return Err(Error::config("ranks", "sweep needs at least one rank"));
        }
        let nominal = self.run_nominal(psi0)?;
        let ranks = &self.spec.ranks;
        let jobs = jobs.clamp(1, ranks.len());
        let logs: Vec<Result<TrajectoryLog>> = if jobs == 1 {
            ranks.iter().map(|&r| self.run_transfer(psi0, r)).collect()
        } else {
            let mut slots: Vec<Option<Result<TrajectoryLog>>> = (0..ranks.len()).map(|_| None).collect();
            std::thread::scope(|scope| {
                let handles: Vec<_> = (0..jobs)
                    .map(|j| {
                        scope.spawn(move || {
                            (j..ranks.len())
                                .step_by(jobs)
                                .map(|i| (i, self.run_transfer(psi0, ranks[i])))
                                .collect::<Vec<_>>()
                        })
                    })
                    .collect();
                for handle in handles {
                    for (i, log) in handle.join().expect("sweep worker panicked") {
                        slots[i] = Some(log);
                    }
                }
            });
            slots.into_iter().map(|s| s.expect("every rank is assigned")).collect()
        };
        let mut entries = Vec::with_capacity(ranks.len());
        for (&rank, log) in ranks.iter().zip(logs) {
            let log = log?;
            entries.push(SweepEntry {
                rank,
                tube: compute_tube(&log, self.spec.tail_window)?,
                final_dist: log.final_dist(),
                max_residual: log.max_residual(),
                log,
            });
        }
        Ok(RankSweepResult { nominal, entries })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub rank: usize,
    pub tube: f64,
    pub final_dist: f64,
    pub max_residual: f64,
    pub log: TrajectoryLog,
}

/// Per-rank tube table with the shared nominal run. Entries follow the
/// configured rank order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankSweepResult {
    pub nominal: TrajectoryLog,
    pub entries: Vec<SweepEntry>,
}

impl RankSweepResult {
    pub fn entry(&self, rank: usize) -> Option<&SweepEntry> {
        self.entries.iter().find(|e| e.rank == rank)
    }

    pub fn ranks(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.rank).collect()
    }

    pub fn tubes(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.tube).collect()
    }
}

/// `Tube = (1/W) Σ_{k=K−W+1}^{K} gap_k`.
pub fn compute_tube(log: &TrajectoryLog, window: usize) -> Result<f64> {
    let steps = log.steps();
    if window == 0 || window > steps {
        return Err(Error::contract(format!("tail window {window} outside [1, {steps}]")));
    }
    let tail = &log.records[log.records.len() - window..];
    let mut sum = 0.0;
    for record in tail {
        sum += record
            .gap
            .ok_or_else(|| Error::contract(format!("record {} has no gap channel", record.k)))?;
    }
    Ok(sum / window as f64)
}
