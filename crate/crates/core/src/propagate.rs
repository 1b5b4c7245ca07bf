//! One-step propagators for `H₀ + u H₁` with `u` held over the step.
//!
//! [`StrangPropagator`] is the production path: a palindromic sweep of
//! local gates `exp(−i (Δt/2) h_ℓ)` over the drift terms followed by the
//! control terms, then the same list in reverse. Every gate is unitary, so
//! the step preserves the norm exactly up to rounding. [`exact_step`]
//! assembles the dense Hamiltonian and serves as the small-system oracle.

use crate::error::{Error, Result};
use crate::linalg::{eigh, expm_hermitian};
use crate::model::Hamiltonian;
use crate::tensor::{
    check_same_shape, hermitian_defect, CMatrix, LocalKernel, LocalTerm, ModeShape, StateVector, C64, HERMITIAN_TOL,
};

/// Default cap on the dense oracle dimension.
pub const DEFAULT_ORACLE_MAX_DIM: usize = 4096;

/// `exp(−i · coefficient · M)` for a local term.
pub fn term_exponential(term: &LocalTerm, coefficient: f64) -> Result<CMatrix> {
    matrix_exponential(term.matrix(), coefficient)
}

/// `exp(−i · coefficient · M)`, checking that `M` is Hermitian.
pub fn matrix_exponential(matrix: &CMatrix, coefficient: f64) -> Result<CMatrix> {
    if matrix.nrows() != matrix.ncols() || hermitian_defect(matrix) > HERMITIAN_TOL {
        return Err(Error::contract("exponential of a non-Hermitian matrix"));
    }
    expm_hermitian(matrix, coefficient)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TermSource {
    Drift,
    Control,
}

/// Order in which local terms are exponentiated within one half sweep.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    entries: Vec<(TermSource, usize)>,
}

impl SplitPlan {
    /// Drift terms in construction order, then control terms.
    pub fn new(h0: &Hamiltonian, h1: &Hamiltonian) -> Self {
        let entries = (0..h0.terms().len())
            .map(|i| (TermSource::Drift, i))
            .chain((0..h1.terms().len()).map(|i| (TermSource::Control, i)))
            .collect();
        Self { entries }
    }

    pub fn entries(&self) -> &[(TermSource, usize)] {
        &self.entries
    }
}

/// Strang splitting with cached drift gates.
#[derive(Debug, Clone)]
pub struct StrangPropagator {
    shape: ModeShape,
    plan: SplitPlan,
    drift_gates: Vec<LocalKernel>,
    control_terms: Vec<LocalTerm>,
    dt: f64,
}

impl StrangPropagator {
    /// Any finite `dt` is accepted here, including negative steps for
    /// backward sweeps.
    pub fn new(h0: &Hamiltonian, h1: &Hamiltonian, dt: f64) -> Result<Self> {
        if h0.shape() != h1.shape() {
            return Err(Error::contract("drift and control act on different shapes"));
        }
        if !dt.is_finite() {
            return Err(Error::contract("time step must be finite"));
        }
        let shape = h0.shape();
        let drift_gates = h0
            .terms()
            .iter()
            .map(|t| LocalKernel::new(shape, &term_exponential(t, dt / 2.0)?, t.support()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            shape,
            plan: SplitPlan::new(h0, h1),
            drift_gates,
            control_terms: h1.terms().to_vec(),
            dt,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn plan(&self) -> &SplitPlan {
        &self.plan
    }

    pub fn step(&self, state: &StateVector, u: f64) -> Result<StateVector> {
        if state.shape() != self.shape {
            return Err(Error::contract("state shape does not match the Hamiltonian"));
        }
        let control_gates = self
            .control_terms
            .iter()
            .map(|t| LocalKernel::new(self.shape, &term_exponential(t, u * self.dt / 2.0)?, t.support()))
            .collect::<Result<Vec<_>>>()?;
        let gate = |&(source, i): &(TermSource, usize)| match source {
            TermSource::Drift => &self.drift_gates[i],
            TermSource::Control => &control_gates[i],
        };
        let mut out = state.clone();
        let amps = out.amplitudes_mut();
        for entry in self.plan.entries() {
            gate(entry).apply(amps);
        }
        for entry in self.plan.entries().iter().rev() {
            gate(entry).apply(amps);
        }
        Ok(out)
    }
}

/// One Strang step `≈ exp(−i Δt (H₀ + u H₁)) ψ`.
pub fn strang_step(state: &StateVector, h0: &Hamiltonian, h1: &Hamiltonian, u: f64, dt: f64) -> Result<StateVector> {
    if !(dt > 0.0) {
        return Err(Error::contract("time step must be positive"));
    }
    StrangPropagator::new(h0, h1, dt)?.step(state, u)
}

/// Dense matrix of `Σ_ℓ c_ℓ h_ℓ` over the full space.
pub fn dense_hamiltonian(parts: &[(&Hamiltonian, f64)], max_dim: usize) -> Result<CMatrix> {
    let shape = parts
        .first()
        .map(|(h, _)| h.shape())
        .ok_or_else(|| Error::contract("no Hamiltonian given"))?;
    let dim = shape.dim();
    if dim > max_dim {
        return Err(Error::Capability(format!(
            "dense propagation needs dimension {dim} > cap {max_dim}"
        )));
    }
    let mut dense = CMatrix::zeros(dim, dim);
    for col in 0..dim {
        let basis = StateVector::basis(shape, col)?;
        for (h, coeff) in parts {
            if h.shape() != shape {
                return Err(Error::contract("Hamiltonians act on different shapes"));
            }
            let image = h.apply(&basis)?;
            for (row, a) in image.amplitudes().iter().enumerate() {
                dense[(row, col)] += a * *coeff;
            }
        }
    }
    Ok(dense)
}

/// Exact propagator `exp(−i Δt (H₀ + u H₁)) ψ` by dense eigendecomposition.
pub fn exact_step(state: &StateVector, h0: &Hamiltonian, h1: &Hamiltonian, u: f64, dt: f64) -> Result<StateVector> {
    exact_step_capped(state, h0, h1, u, dt, DEFAULT_ORACLE_MAX_DIM)
}

pub fn exact_step_capped(
    state: &StateVector,
    h0: &Hamiltonian,
    h1: &Hamiltonian,
    u: f64,
    dt: f64,
    max_dim: usize,
) -> Result<StateVector> {
    if state.shape() != h0.shape() {
        return Err(Error::contract("state shape does not match the Hamiltonian"));
    }
    let dense = dense_hamiltonian(&[(h0, 1.0), (h1, u)], max_dim)?;
    let (values, vectors) = eigh(&dense)?;
    let amps = state.amplitudes();
    let psi = CMatrix::from_fn(amps.len(), 1, |i, _| amps[i]);
    let mut coeffs = vectors.adjoint() * psi;
    for (k, &lambda) in values.iter().enumerate() {
        coeffs[(k, 0)] *= C64::from_polar(1.0, -dt * lambda);
    }
    let out = &vectors * coeffs;
    StateVector::new(state.shape(), (0..amps.len()).map(|i| out[(i, 0)]).collect())
}

/// One-step local error `‖S_Δt(u) ψ − exp(−i Δt (H₀ + u H₁)) ψ‖` of the
/// Strang step. Scales as `Δt³`.
pub fn splitting_error(state: &StateVector, h0: &Hamiltonian, h1: &Hamiltonian, u: f64, dt: f64) -> Result<f64> {
    let split = strang_step(state, h0, h1, u, dt)?;
    let exact = exact_step(state, h0, h1, u, dt)?;
    Ok(split.sub(&exact)?.norm())
}

/// `⟨ψ, H ψ⟩` (real part; `H` is Hermitian).
pub fn energy(state: &StateVector, h: &Hamiltonian) -> Result<f64> {
    let image = h.apply(state)?;
    check_same_shape(state, &image)?;
    Ok(crate::tensor::inner(state, &image)?.re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{from_rows, max_abs_diff, scale, unitarity_defect};
    use crate::model::{control_hamiltonian, dist_star, heisenberg_drift, named_state, pauli};
    use crate::tensor::distance;
    use approx::assert_abs_diff_eq;

    fn small_system() -> (Hamiltonian, Hamiltonian) {
        (
            heisenberg_drift(2, 2, 0.25, false).unwrap(),
            control_hamiltonian(2, 2, &[(0, 0), (0, 1)]).unwrap(),
        )
    }

    #[test]
    fn term_exponential_examples() {
        let sx = LocalTerm::new(vec![0], pauli::x(), 2).unwrap();
        assert_eq!(term_exponential(&sx, 0.0).unwrap(), CMatrix::identity(2, 2));
        let u = term_exponential(&sx, std::f64::consts::FRAC_PI_2).unwrap();
        let expect = scale(&pauli::x(), C64::new(0.0, -1.0));
        assert!(max_abs_diff(&u, &expect) < 1e-15);
        let bond = heisenberg_drift(1, 2, 0.7, false).unwrap();
        let g = term_exponential(&bond.terms()[0], 0.37).unwrap();
        assert!(unitarity_defect(&g) < 1e-12);
        let not_herm = from_rows(
            2,
            2,
            &[C64::new(0., 0.), C64::new(1., 0.), C64::new(0., 0.), C64::new(0., 0.)],
        );
        assert!(matrix_exponential(&not_herm, 1.0).is_err());
    }

    #[test]
    fn plan_covers_every_term_once() {
        let (h0, h1) = small_system();
        let plan = SplitPlan::new(&h0, &h1);
        assert_eq!(plan.entries().len(), 6);
        assert_eq!(plan.entries()[4], (TermSource::Control, 0));
    }

    #[test]
    fn strang_tiny_step_is_near_identity() {
        let (h0, h1) = small_system();
        let psi = named_state("random_product:2.0", h0.shape(), 5).unwrap();
        let out = strang_step(&psi, &h0, &h1, 0.3, 1e-8).unwrap();
        assert!(distance(&out, &psi).unwrap() <= 1e-6);
        assert!(strang_step(&psi, &h0, &h1, 0.3, 0.0).is_err());
    }

    #[test]
    fn strang_is_exact_for_commuting_terms() {
        let shape = ModeShape::qubits(3).unwrap();
        let terms = (0..3)
            .map(|m| LocalTerm::new(vec![m], scale(&pauli::z(), C64::new(0.3 + m as f64, 0.0)), 2).unwrap())
            .collect();
        let h0 = Hamiltonian::new(shape, terms).unwrap();
        let h1 = Hamiltonian::new(shape, vec![LocalTerm::new(vec![1], pauli::z(), 2).unwrap()]).unwrap();
        let psi = named_state("random_product:3.0", shape, 2).unwrap();
        let a = strang_step(&psi, &h0, &h1, 0.7, 0.4).unwrap();
        let b = exact_step(&psi, &h0, &h1, 0.7, 0.4).unwrap();
        assert!(distance(&a, &b).unwrap() < 1e-12);
    }

    #[test]
    fn exact_step_examples() {
        let (h0, h1) = small_system();
        let psi = named_state("random_product:2.5", h0.shape(), 9).unwrap();
        let same = exact_step(&psi, &h0, &h1, 1.7, 0.0).unwrap();
        assert!(distance(&same, &psi).unwrap() < 1e-12);

        let shape = ModeShape::qubits(1).unwrap();
        let hz = Hamiltonian::new(shape, vec![LocalTerm::new(vec![0], pauli::z(), 2).unwrap()]).unwrap();
        let none = Hamiltonian::new(shape, vec![]).unwrap();
        let zero = StateVector::basis(shape, 0).unwrap();
        let out = exact_step(&zero, &hz, &none, 0.0, std::f64::consts::PI).unwrap();
        assert!(dist_star(&out, &zero).unwrap() < 1e-12);

        let u = 0.4;
        let out = exact_step(&psi, &h0, &h1, u, 0.3).unwrap();
        let e = |s: &StateVector| energy(s, &h0).unwrap() + u * energy(s, &h1).unwrap();
        assert_abs_diff_eq!(e(&out), e(&psi), epsilon = 1e-10);
        assert_abs_diff_eq!(out.norm(), 1.0, epsilon = 1e-10);

        let big = heisenberg_drift(3, 5, 1.0, false).unwrap();
        let ctl = control_hamiltonian(3, 5, &[(0, 0)]).unwrap();
        let state = StateVector::basis(big.shape(), 0).unwrap();
        assert!(matches!(
            exact_step(&state, &big, &ctl, 0.0, 0.1),
            Err(Error::Capability(_))
        ));
    }
}
