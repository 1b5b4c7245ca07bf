//! Spin-lattice Hamiltonians, named states, the phase-invariant metric and
//! the sampled-data feedback law.
//!
//! Conventions: `σz = diag(1, −1)`, so basis label 0 is spin up; lattice
//! site `(i, j)` is mode `i·cols + j`; ħ = 1.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{kron, scale};
use crate::tensor::{apply_local_term, inner, CMatrix, LocalTerm, ModeShape, StateVector, C64};

pub mod pauli {
    use super::*;

    fn m(entries: [C64; 4]) -> CMatrix {
        crate::linalg::from_rows(2, 2, &entries)
    }

    const O: C64 = C64::new(0.0, 0.0);
    const ONE: C64 = C64::new(1.0, 0.0);
    const I: C64 = C64::new(0.0, 1.0);

    pub fn x() -> CMatrix {
        m([O, ONE, ONE, O])
    }

    pub fn y() -> CMatrix {
        m([O, -I, I, O])
    }

    pub fn z() -> CMatrix {
        m([ONE, O, O, -ONE])
    }
}

/// A lattice site `(row, col)`.
pub type Site = (usize, usize);

/// Physical and experiment parameters of a controlled spin lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub rows: usize,
    pub cols: usize,
    /// Heisenberg coupling `J`.
    pub coupling: f64,
    pub periodic: bool,
    pub control_sites: Vec<Site>,
    pub u_max: f64,
    /// Feedback gain `γ`.
    pub gamma: f64,
    /// Sampling step `Δt`.
    pub dt: f64,
    /// Named target state, see [`named_state`].
    pub target: String,
    /// Number of steps `K`.
    pub steps: usize,
    /// Uniform rank budgets for sweeps.
    pub ranks: Vec<usize>,
    /// Tail window `W` for the tube statistic.
    pub tail_window: usize,
}

impl LatticeSpec {
    /// The 4×4 Heisenberg experiment: `J = 0.25`, control `½(σx⁽⁰'⁰⁾ + σx⁽⁰'¹⁾)`,
    /// `Δt = 0.02`, `γ = 3`, `|u| ≤ 3`, `K = 220`, target `|1⟩^⊗16`.
    pub fn heisenberg_4x4() -> Self {
        Self {
            rows: 4,
            cols: 4,
            coupling: 0.25,
            periodic: false,
            control_sites: vec![(0, 0), (0, 1)],
            u_max: 3.0,
            gamma: 3.0,
            dt: 0.02,
            target: "all_ones".into(),
            steps: 220,
            ranks: vec![2, 4, 8, 12, 16, 24, 32, 64],
            tail_window: 20,
        }
    }

    pub fn n_sites(&self) -> usize {
        self.rows * self.cols
    }

    pub fn shape(&self) -> Result<ModeShape> {
        ModeShape::qubits(self.n_sites())
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 {
            return Err(Error::config("rows", "must be at least 1"));
        }
        if self.cols == 0 {
            return Err(Error::config("cols", "must be at least 1"));
        }
        if self.n_sites() > 30 {
            return Err(Error::config(
                "rows",
                "lattice larger than 30 sites is not supported densely",
            ));
        }
        if !self.coupling.is_finite() {
            return Err(Error::config("coupling", "must be finite"));
        }
        if !(self.u_max > 0.0 && self.u_max.is_finite()) {
            return Err(Error::config("u_max", "must be positive"));
        }
        if !self.gamma.is_finite() {
            return Err(Error::config("gamma", "must be finite"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config("dt", "must be positive"));
        }
        if self.steps < 1 {
            return Err(Error::config("steps", "must be at least 1"));
        }
        if self.tail_window < 1 || self.tail_window > self.steps {
            return Err(Error::config("tail_window", "must lie in [1, steps]"));
        }
        for (k, &(i, j)) in self.control_sites.iter().enumerate() {
            if i >= self.rows || j >= self.cols {
                return Err(Error::config(
                    "control_sites",
                    format!("site ({i},{j}) outside the lattice"),
                ));
            }
            if self.control_sites[..k].contains(&(i, j)) {
                return Err(Error::config("control_sites", format!("site ({i},{j}) listed twice")));
            }
        }
        if self.ranks.iter().any(|&r| r < 1) {
            return Err(Error::config("ranks", "every rank must be at least 1"));
        }
        if !is_known_state(&self.target) || self.target.starts_with("random") {
            return Err(Error::config(
                "target",
                format!("unknown target state `{}`", self.target),
            ));
        }
        Ok(())
    }
}

/// A sum of local Hermitian terms over one mode shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Hamiltonian {
    shape: ModeShape,
    terms: Vec<LocalTerm>,
}

impl Hamiltonian {
    pub fn new(shape: ModeShape, terms: Vec<LocalTerm>) -> Result<Self> {
        for term in &terms {
            if let Some(&bad) = term.support().iter().find(|&&m| m >= shape.n()) {
                return Err(Error::contract(format!("term support mode {bad} out of range")));
            }
        }
        Ok(Self { shape, terms })
    }

    pub fn shape(&self) -> ModeShape {
        self.shape
    }

    pub fn terms(&self) -> &[LocalTerm] {
        &self.terms
    }

    /// `Σ_ℓ h_ℓ ψ`.
    pub fn apply(&self, state: &StateVector) -> Result<StateVector> {
        let mut acc = StateVector::zeros(state.shape());
        for term in &self.terms {
            acc = acc.add(&apply_local_term(state, term)?)?;
        }
        Ok(acc)
    }

    /// Largest local operator norm `C_h`.
    pub fn max_term_norm(&self) -> f64 {
        self.terms.iter().map(|t| t.operator_norm()).fold(0.0, f64::max)
    }
}

/// Nearest-neighbour edges as mode pairs: horizontal edges row-major, then
/// vertical edges row-major.
pub fn lattice_edges(rows: usize, cols: usize, periodic: bool) -> Vec<(usize, usize)> {
    let site = |i: usize, j: usize| i * cols + j;
    let mut edges = Vec::new();
    for i in 0..rows {
        for j in 0..cols.saturating_sub(1) {
            edges.push((site(i, j), site(i, j + 1)));
        }
        if periodic && cols > 2 {
            edges.push((site(i, cols - 1), site(i, 0)));
        }
    }
    for i in 0..rows.saturating_sub(1) {
        for j in 0..cols {
            edges.push((site(i, j), site(i + 1, j)));
        }
    }
    if periodic && rows > 2 {
        for j in 0..cols {
            edges.push((site(rows - 1, j), site(0, j)));
        }
    }
    edges
}

/// The two-site Heisenberg exchange `J (X⊗X + Y⊗Y + Z⊗Z)`.
pub fn heisenberg_bond(coupling: f64) -> CMatrix {
    let (x, y, z) = (pauli::x(), pauli::y(), pauli::z());
    let sum = kron(&x, &x) + kron(&y, &y) + kron(&z, &z);
    scale(&sum, C64::new(coupling, 0.0))
}

/// Drift Hamiltonian `H₀ = J Σ_⟨p,q⟩ σ_p·σ_q`, one term per edge.
pub fn heisenberg_drift(rows: usize, cols: usize, coupling: f64, periodic: bool) -> Result<Hamiltonian> {
    if rows == 0 || cols == 0 {
        return Err(Error::contract("lattice dimensions must be at least 1"));
    }
    let shape = ModeShape::qubits(rows * cols)?;
    let bond = heisenberg_bond(coupling);
    let terms = lattice_edges(rows, cols, periodic)
        .into_iter()
        .map(|(p, q)| LocalTerm::new(vec![p, q], bond.clone(), 2))
        .collect::<Result<Vec<_>>>()?;
    Hamiltonian::new(shape, terms)
}

/// Control Hamiltonian `H₁ = ½ Σ_sites σx`, one term per site.
pub fn control_hamiltonian(rows: usize, cols: usize, sites: &[Site]) -> Result<Hamiltonian> {
    let shape = ModeShape::qubits(rows * cols)?;
    let half_x = scale(&pauli::x(), C64::new(0.5, 0.0));
    let mut terms = Vec::with_capacity(sites.len());
    for (k, &(i, j)) in sites.iter().enumerate() {
        if i >= rows || j >= cols {
            return Err(Error::contract(format!("control site ({i},{j}) outside the lattice")));
        }
        if sites[..k].contains(&(i, j)) {
            return Err(Error::contract(format!("duplicate control site ({i},{j})")));
        }
        terms.push(LocalTerm::new(vec![i * cols + j], half_x.clone(), 2)?);
    }
    Hamiltonian::new(shape, terms)
}

/// Whether [`named_state`] accepts `name`.
pub fn is_known_state(name: &str) -> bool {
    matches!(name, "all_ones" | "all_zeros" | "uniform_plus" | "neel" | "random")
        || name.strip_prefix("basis:").is_some_and(|i| i.parse::<usize>().is_ok())
        || name
            .strip_prefix("random_product:")
            .is_some_and(|t| t.parse::<f64>().is_ok_and(|t| t.is_finite() && t >= 0.0))
}

/// Unit state with i.i.d. complex Gaussian amplitudes.
pub fn random_state(shape: ModeShape, seed: u64) -> Result<StateVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amps = (0..shape.dim())
        .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    StateVector::new(shape, amps)?.normalized()
}

/// Deterministic target state by name: `all_ones`, `all_zeros`,
/// `uniform_plus`, `neel` or `basis:<index>`.
pub fn target_state(name: &str, shape: ModeShape) -> Result<StateVector> {
    if name.starts_with("random") {
        return Err(Error::config("target", "random states are not valid targets"));
    }
    named_state(name, shape, 0)
}

/// Any named state, including the seeded `random_product:<theta_max>`:
/// a product of single-site states `cos(θ/2)|1⟩ + e^{iφ} sin(θ/2)|0⟩` with
/// `θ ~ U[0, theta_max]`, `φ ~ U[0, 2π)` drawn per site from a ChaCha8
/// stream seeded with `seed`. `random` draws i.i.d. complex Gaussian
/// amplitudes from the same stream and normalizes them.
pub fn named_state(name: &str, shape: ModeShape, seed: u64) -> Result<StateVector> {
    let n = shape.n();
    let d = shape.d();
    let unit = |k: usize| {
        let mut v = vec![C64::new(0.0, 0.0); d];
        v[k] = C64::new(1.0, 0.0);
        v
    };
    let ones_index = (0..n).map(|m| d.pow(m as u32)).sum::<usize>();
    match name {
        "all_zeros" => StateVector::basis(shape, 0),
        "all_ones" => StateVector::basis(shape, ones_index),
        "uniform_plus" => {
            let amp = C64::new(1.0 / (shape.dim() as f64).sqrt(), 0.0);
            StateVector::new(shape, vec![amp; shape.dim()])
        }
        "random" => random_state(shape, seed),
        "neel" => {
            let factors: Vec<_> = (0..n).map(|m| unit(m % 2)).collect();
            StateVector::product(shape, &factors)
        }
        _ => {
            if let Some(index) = name.strip_prefix("basis:") {
                let index = index
                    .parse::<usize>()
                    .map_err(|_| Error::config("state", format!("bad basis index in `{name}`")))?;
                return StateVector::basis(shape, index).map_err(|e| Error::config("state", e.to_string()));
            }
            if let Some(theta_max) = name.strip_prefix("random_product:") {
                let theta_max = theta_max
                    .parse::<f64>()
                    .ok()
                    .filter(|t| t.is_finite() && *t >= 0.0)
                    .ok_or_else(|| Error::config("state", format!("bad angle in `{name}`")))?;
                if d != 2 {
                    return Err(Error::config("state", "random_product needs qubits"));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let factors: Vec<_> = (0..n)
                    .map(|_| {
                        let theta = rng.random::<f64>() * theta_max;
                        let phi = rng.random::<f64>() * 2.0 * PI;
                        vec![
                            C64::from_polar((theta / 2.0).sin(), phi),
                            C64::new((theta / 2.0).cos(), 0.0),
                        ]
                    })
                    .collect();
                return StateVector::product(shape, &factors);
            }
            Err(Error::config("state", format!("unknown state name `{name}`")))
        }
    }
}

/// Distance between two states on the quotient by global phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// `min_θ ‖a − e^{iθ} b‖`.
    #[default]
    MinPhase,
    /// `‖a a* − b b*‖_F`.
    Projector,
}

impl Metric {
    pub fn distance(self, a: &StateVector, b: &StateVector) -> Result<f64> {
        match self {
            Metric::MinPhase => dist_star(a, b),
            Metric::Projector => projector_distance(a, b),
        }
    }
}

/// `min_θ ‖a − e^{iθ} b‖ = sqrt(‖a‖² + ‖b‖² − 2|⟨b,a⟩|)`.
///
/// Evaluated as the norm of `a − e^{iθ*} b` at the optimal phase
/// `e^{iθ*} = ⟨b,a⟩/|⟨b,a⟩|`; the closed form loses half the digits near 0.
pub fn dist_star(a: &StateVector, b: &StateVector) -> Result<f64> {
    let overlap = inner(b, a)?;
    let phase = if overlap.norm() > 0.0 {
        overlap / overlap.norm()
    } else {
        C64::new(1.0, 0.0)
    };
    Ok(a.amplitudes()
        .iter()
        .zip(b.amplitudes())
        .map(|(x, y)| (x - phase * y).norm_sqr())
        .sum::<f64>()
        .sqrt())
}

/// Frobenius distance between the rank-one projectors `a a*` and `b b*`.
pub fn projector_distance(a: &StateVector, b: &StateVector) -> Result<f64> {
    let overlap = inner(a, b)?.norm_sqr();
    let (na, nb) = (a.norm_sqr(), b.norm_sqr());
    Ok((na * na + nb * nb - 2.0 * overlap).max(0.0).sqrt())
}

/// Raw feedback value `γ Im(⟨φ, H₁ψ⟩⟨ψ, φ⟩)` before saturation.
pub fn feedback_raw(state: &StateVector, target: &StateVector, h1: &Hamiltonian, gamma: f64) -> Result<f64> {
    let h1_state = h1.apply(state)?;
    Ok(gamma * (inner(target, &h1_state)? * inner(state, target)?).im)
}

/// Sampled-data feedback, saturated to `|u| ≤ u_max`.
pub fn feedback(state: &StateVector, target: &StateVector, h1: &Hamiltonian, gamma: f64, u_max: f64) -> Result<f64> {
    Ok(saturate(feedback_raw(state, target, h1, gamma)?, u_max))
}

pub fn saturate(u: f64, u_max: f64) -> f64 {
    u.clamp(-u_max, u_max)
}

/// `⟨ψ, Σ σz ψ⟩ / ‖ψ‖²`.
pub fn total_sz(state: &StateVector) -> Result<f64> {
    let shape = state.shape();
    if shape.d() != 2 {
        return Err(Error::contract("total_sz is defined for qubits only"));
    }
    let n = shape.n() as i64;
    let weighted: f64 = state
        .amplitudes()
        .iter()
        .enumerate()
        .map(|(idx, a)| a.norm_sqr() * (n - 2 * idx.count_ones() as i64) as f64)
        .sum();
    Ok(weighted / state.norm_sqr())
}
