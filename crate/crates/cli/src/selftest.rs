//! Oracle-equivalence checks on small lattices.

use std::f64::consts::SQRT_2;

use htcontrol::analysis::check_tail_bound;
use htcontrol::ht::{hsvd_truncate, DimensionTree, RankBudget};
use htcontrol::linalg::singular_values;
use htcontrol::model::{control_hamiltonian, dist_star, heisenberg_drift, random_state};
use htcontrol::propagate::{splitting_error, strang_step};
use htcontrol::tensor::matricize;
use htcontrol::{ModeShape, Result, C64};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    /// The measured quantity; the check passes when it is at most `tolerance`.
    pub value: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.value <= self.tolerance
    }
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {} value={:e} tolerance={:e}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.tolerance
        )
    }
}

/// Runs every check. `tolerance` replaces each check's own tolerance.
pub fn run_selftest(tolerance: Option<f64>) -> Result<Vec<Check>> {
    let tol = |default: f64| tolerance.unwrap_or(default);
    let shape = |n| ModeShape::qubits(n);
    let mut checks = Vec::new();

    // Strang against the dense propagator on a 2×2 lattice: local error ratio
    // under halving, distance from the Δt³ value 8.
    let h0 = heisenberg_drift(2, 2, 0.25, false)?;
    let h1 = control_hamiltonian(2, 2, &[(0, 0), (0, 1)])?;
    let psi = random_state(shape(4)?, 7)?;
    let errs = [0.08, 0.04, 0.02]
        .iter()
        .map(|&dt| splitting_error(&psi, &h0, &h1, 0.1, dt))
        .collect::<Result<Vec<_>>>()?;
    let worst = errs.windows(2).map(|w| (w[0] / w[1] - 8.0).abs()).fold(0.0, f64::max);
    checks.push(Check {
        name: "strang_second_order",
        value: worst,
        tolerance: tol(1.5),
    });
    let mut state = psi.clone();
    for _ in 0..100 {
        state = strang_step(&state, &h0, &h1, 0.7, 0.05)?;
    }
    checks.push(Check {
        name: "strang_norm_preservation",
        value: (state.norm() - 1.0).abs(),
        tolerance: tol(1e-12),
    });

    let mut tail_excess = f64::NEG_INFINITY;
    for case in 0..60u64 {
        let n = [4, 6, 8][case as usize % 3];
        let psi = random_state(shape(n)?, 100 + case)?;
        let tree = DimensionTree::balanced(n)?;
        let (_, report) = hsvd_truncate(&psi, &tree, &RankBudget::Uniform(1 + case as usize % 5))?;
        if !check_tail_bound(&report) {
            tail_excess = f64::INFINITY;
        }
        tail_excess = tail_excess.max(report.residual.powi(2) - report.total_tail());
    }
    checks.push(Check {
        name: "hsvd_tail_bound",
        value: tail_excess,
        tolerance: tol(1e-9),
    });

    let mut best_gap = 0.0f64;
    for case in 0..40u64 {
        let d = 2 + case as usize % 4;
        let r = 1 + case as usize % d;
        let psi = random_state(ModeShape::new(2, d)?, 200 + case)?;
        let (_, report) = hsvd_truncate(&psi, &DimensionTree::balanced(2)?, &RankBudget::Uniform(r))?;
        let sigma = singular_values(&matricize(&psi, &[0])?)?;
        let best = sigma[r..].iter().map(|s| s * s).sum::<f64>().sqrt();
        best_gap = best_gap.max((report.residual - best).abs());
    }
    checks.push(Check {
        name: "hsvd_two_mode_optimality",
        value: best_gap,
        tolerance: tol(1e-10),
    });

    let (mut phase_err, mut range_excess, mut triangle_excess) = (0.0f64, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for case in 0..200u64 {
        let n = 1 + case as usize % 5;
        let a = random_state(shape(n)?, 3 * case)?;
        let b = random_state(shape(n)?, 3 * case + 1)?;
        let c = random_state(shape(n)?, 3 * case + 2)?;
        let ab = dist_star(&a, &b)?;
        let rotated = dist_star(&a.scaled(C64::from_polar(1.0, 0.1 * case as f64)), &b)?;
        phase_err = phase_err.max((ab - rotated).abs());
        range_excess = range_excess.max((ab - SQRT_2).max(-ab));
        triangle_excess = triangle_excess.max(ab - dist_star(&a, &c)? - dist_star(&c, &b)?);
    }
    checks.push(Check {
        name: "dist_phase_invariance",
        value: phase_err,
        tolerance: tol(1e-12),
    });
    checks.push(Check {
        name: "dist_range",
        value: range_excess,
        tolerance: tol(1e-15),
    });
    checks.push(Check {
        name: "dist_triangle_inequality",
        value: triangle_excess,
        tolerance: tol(1e-10),
    });
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn passes_by_default_and_fails_at_zero_tolerance() {
        let checks = run_selftest(None).unwrap();
        assert!(checks.iter().all(Check::passed), "{checks:?}");
        let strict = run_selftest(Some(0.0)).unwrap();
        assert!(!strict.iter().all(Check::passed));
    }
}
