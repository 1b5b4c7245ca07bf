//! Post-hoc certification of closed-loop runs.
//!
//! Nothing here proves anything about the dynamics. The routines estimate
//! the constants that appear in the stability and transfer bounds (spectral
//! decay, contraction factor, tube decay) from logged data and then check
//! whether the logged trajectory is consistent with the bound evaluated at
//! those constants.

use serde::{Deserialize, Serialize};

use crate::closed_loop::{RankSweepResult, TrajectoryLog};
use crate::error::{Error, Result};
use crate::ht::TruncationReport;

/// Singular values below this fraction of their spectrum's largest value
/// are treated as numerical noise and left out of fits.
pub const SPECTRAL_FLOOR: f64 = 1e-12;

/// Slack used by all bound checks.
pub const BOUND_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayModel {
    /// `σ_α ≤ C e^{−c α}`.
    Exponential,
    /// `σ_α ≈ C α^{−β}`.
    Algebraic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub model: DecayModel,
    /// `C₁` (spectra), `C₂` (tubes) or the algebraic prefactor.
    pub prefactor: f64,
    /// `c`, `c′` or `β`.
    pub rate: f64,
    /// RMS residual of the least-squares line in log space.
    pub residual: f64,
    pub samples: usize,
}

impl DecayFit {
    pub fn predict(&self, x: f64) -> f64 {
        match self.model {
            DecayModel::Exponential => self.prefactor * (-self.rate * x).exp(),
            DecayModel::Algebraic => self.prefactor * x.powf(-self.rate),
        }
    }
}

/// Least-squares line `y = a + b x`, with the RMS residual.
fn line_fit(points: &[(f64, f64)]) -> Result<(f64, f64, f64)> {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("all abscissae coincide".into()));
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rms = (points
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok((intercept, slope, rms))
}

/// Fits pooled singular spectra. `α` is 1-based within each spectrum.
///
/// The exponential fit is returned as an upper envelope: the intercept is
/// raised until every pooled point lies on or below the line. The
/// algebraic fit is the plain log–log regression.
pub fn fit_spectral_decay<'a, I>(spectra: I, model: DecayModel) -> Result<DecayFit>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut points = Vec::new();
    for sigma in spectra {
        let top = sigma.iter().copied().fold(0.0f64, f64::max);
        if top <= 0.0 {
            continue;
        }
        for (i, &s) in sigma.iter().enumerate() {
            if s > SPECTRAL_FLOOR * top {
                let alpha = (i + 1) as f64;
                let x = match model {
                    DecayModel::Exponential => alpha,
                    DecayModel::Algebraic => alpha.ln(),
                };
                points.push((x, s.ln()));
            }
        }
    }
    if points.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} singular values above the floor, need 3",
            points.len()
        )));
    }
    let (mut intercept, slope, residual) = line_fit(&points)?;
    if model == DecayModel::Exponential {
        let lift = points
            .iter()
            .map(|p| p.1 - (intercept + slope * p.0))
            .fold(f64::NEG_INFINITY, f64::max);
        intercept += lift.max(0.0);
    }
    Ok(DecayFit {
        model,
        prefactor: intercept.exp(),
        rate: -slope,
        residual,
        samples: points.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionEstimate {
    /// Median one-step ratio `dist_{k+1}/dist_k`.
    pub rho: f64,
    pub lower_quartile: f64,
    pub upper_quartile: f64,
    pub samples: usize,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Median of one-step distance ratios over the transient phase.
///
/// The last `⌈tail_fraction · K⌉` steps form the tail and are skipped, as
/// are steps whose distance is at most `10 · max_k ‖e_k‖` (the tube region).
pub fn estimate_contraction(log: &TrajectoryLog, tail_fraction: f64) -> Result<ContractionEstimate> {
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(Error::contract("tail fraction must lie in (0, 1]"));
    }
    let dists = log.dists();
    let steps = log.steps();
    let tail = (tail_fraction * steps as f64).ceil() as usize;
    let floor = 10.0 * log.max_residual();
    let mut ratios: Vec<f64> = (0..steps.saturating_sub(tail))
        .filter(|&k| dists[k] > floor && dists[k] > 0.0)
        .map(|k| dists[k + 1] / dists[k])
        .collect();
    if ratios.is_empty() {
        return Err(Error::InsufficientData(
            "no transient steps above the tube floor".into(),
        ));
    }
    ratios.sort_by(f64::total_cmp);
    Ok(ContractionEstimate {
        rho: quantile(&ratios, 0.5),
        lower_quartile: quantile(&ratios, 0.25),
        upper_quartile: quantile(&ratios, 0.75),
        samples: ratios.len(),
    })
}

/// `ρ^k d₀ + (1 − ρ^k)/(1 − ρ) · b`: the k-fold unrolled affine recursion
/// `d_{k+1} = ρ d_k + b` in closed form.
pub fn geometric_bound(rho: f64, offset: f64, d0: f64, k: usize) -> f64 {
    let rk = rho.powi(k as i32);
    let sum = if rho == 1.0 { k as f64 } else { (1.0 - rk) / (1.0 - rho) };
    rk * d0 + sum * offset
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferTerms {
    /// `max_k` one-step transfer error.
    pub delta: f64,
    /// Initial plant–surrogate gap.
    pub delta0: f64,
    /// `(ρ δ⁽⁰⁾ + δ)/(1 − ρ)`.
    pub predicted_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub rho: f64,
    /// `max_k ‖e_k‖`.
    pub eps_bar: f64,
    pub m_star: f64,
    /// `M⋆ ε̄ / (1 − ρ)` (or the transfer radius for coupled runs).
    pub predicted_radius: f64,
    /// Largest distance to target over the tail (last tenth of the run).
    pub observed_limsup: f64,
    /// False when `ρ ∉ (0, 1)`; the bound checks are then skipped.
    pub applicable: bool,
    pub bound_satisfied: bool,
    /// Steps where the one-step recursion fails.
    pub recursion_violations: Vec<usize>,
    /// Steps where the closed-form bound fails.
    pub bound_violations: Vec<usize>,
    pub transfer: Option<TransferTerms>,
}

fn observed_limsup(dists: &[f64]) -> f64 {
    let steps = dists.len().saturating_sub(1);
    let tail = ((steps as f64) / 10.0).ceil().max(1.0) as usize;
    dists[dists.len().saturating_sub(tail)..]
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

/// Checks `dist_{k+1} ≤ ρ dist_k + M⋆ ε̄` and
/// `dist_k ≤ ρ^k dist_0 + M⋆ ε̄/(1 − ρ)` along a logged run.
pub fn check_practical_stability(log: &TrajectoryLog, rho: f64, m_star: f64) -> Result<CertificateReport> {
    if !(m_star > 0.0) {
        return Err(Error::contract("M_star must be positive"));
    }
    let dists = log.dists();
    if dists.is_empty() {
        return Err(Error::InsufficientData("empty log".into()));
    }
    let eps_bar = log.max_residual();
    let applicable = rho > 0.0 && rho < 1.0;
    let mut report = CertificateReport {
        rho,
        eps_bar,
        m_star,
        predicted_radius: if applicable {
            m_star * eps_bar / (1.0 - rho)
        } else {
            f64::INFINITY
        },
        observed_limsup: observed_limsup(&dists),
        applicable,
        bound_satisfied: false,
        recursion_violations: Vec::new(),
        bound_violations: Vec::new(),
        transfer: None,
    };
    if !applicable {
        return Ok(report);
    }
    let offset = m_star * eps_bar;
    for k in 0..dists.len() - 1 {
        if dists[k + 1] > rho * dists[k] + offset + BOUND_SLACK {
            report.recursion_violations.push(k);
        }
    }
    for (k, &d) in dists.iter().enumerate() {
        let bound = rho.powi(k as i32) * dists[0] + report.predicted_radius;
        if d > bound + BOUND_SLACK {
            report.bound_violations.push(k);
        }
    }
    report.bound_satisfied = report.recursion_violations.is_empty() && report.bound_violations.is_empty();
    Ok(report)
}

/// Checks the coupled-run bound
/// `dist_k ≤ ρ^k dist_0 + (1 − ρ^k)/(1 − ρ) (ρ δ⁽⁰⁾ + δ)` on the plant.
pub fn check_transfer_bound(log: &TrajectoryLog, rho: f64) -> Result<CertificateReport> {
    let dists = log.dists();
    let delta0 = log
        .records
        .first()
        .and_then(|r| r.gap)
        .ok_or_else(|| Error::contract("log has no plant–surrogate gap channel"))?;
    let transfer_errs: Vec<f64> = log.records.iter().filter_map(|r| r.onestep_transfer_err).collect();
    if transfer_errs.is_empty() {
        return Err(Error::contract("log has no one-step transfer error channel"));
    }
    let delta = transfer_errs.iter().copied().fold(0.0, f64::max);
    let applicable = rho > 0.0 && rho < 1.0;
    let offset = rho * delta0 + delta;
    let radius = if applicable {
        offset / (1.0 - rho)
    } else {
        f64::INFINITY
    };
    let mut report = CertificateReport {
        rho,
        eps_bar: log.max_residual(),
        m_star: 1.0,
        predicted_radius: radius,
        observed_limsup: observed_limsup(&dists),
        applicable,
        bound_satisfied: false,
        recursion_violations: Vec::new(),
        bound_violations: Vec::new(),
        transfer: Some(TransferTerms {
            delta,
            delta0,
            predicted_radius: radius,
        }),
    };
    if !applicable {
        return Ok(report);
    }
    for k in 0..dists.len() - 1 {
        if dists[k + 1] > rho * dists[k] + offset + BOUND_SLACK {
            report.recursion_violations.push(k);
        }
    }
    for (k, &d) in dists.iter().enumerate() {
        if d > geometric_bound(rho, offset, dists[0], k) + BOUND_SLACK {
            report.bound_violations.push(k);
        }
    }
    report.bound_satisfied = report.bound_violations.is_empty();
    Ok(report)
}

/// Log-linear fit `tube(r) ≈ C₂ e^{−c′ r}` over the ranks whose tube exceeds
/// ten times the smallest observed tube.
pub fn fit_tube_decay_points(ranks: &[usize], tubes: &[f64]) -> Result<DecayFit> {
    if ranks.len() != tubes.len() {
        return Err(Error::contract("ranks and tubes differ in length"));
    }
    let floor = tubes.iter().copied().filter(|t| *t > 0.0).fold(f64::INFINITY, f64::min);
    let points: Vec<(f64, f64)> = ranks
        .iter()
        .zip(tubes)
        .filter(|(_, &t)| t > 10.0 * floor)
        .map(|(&r, &t)| (r as f64, t.ln()))
        .collect();
    if points.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} ranks above the plateau, need 3",
            points.len()
        )));
    }
    let (intercept, slope, residual) = line_fit(&points)?;
    Ok(DecayFit {
        model: DecayModel::Exponential,
        prefactor: intercept.exp(),
        rate: -slope,
        residual,
        samples: points.len(),
    })
}

pub fn fit_tube_decay(sweep: &RankSweepResult) -> Result<DecayFit> {
    fit_tube_decay_points(&sweep.ranks(), &sweep.tubes())
}

/// Smallest integer `r ≥ (1/c′) log(M⋆ C₂ / ((1 − ρ) η))`, at least 1.
pub fn rank_for_tolerance(c2: f64, c_prime: f64, rho: f64, m_star: f64, eta: f64) -> Result<usize> {
    if !(c_prime > 0.0) {
        return Err(Error::contract("decay rate c' must be positive"));
    }
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::contract("contraction factor must lie in (0, 1)"));
    }
    if !(eta > 0.0) || !(c2 > 0.0) || !(m_star > 0.0) {
        return Err(Error::contract("C2, M_star and eta must be positive"));
    }
    let r = ((m_star * c2 / ((1.0 - rho) * eta)).ln() / c_prime).ceil();
    Ok(if r < 1.0 { 1 } else { r as usize })
}

/// `residual² ≤ Σ tails + 1e-9`.
pub fn check_tail_bound(report: &TruncationReport) -> bool {
    report.residual * report.residual <= report.total_tail() + BOUND_SLACK
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_loop::{RunMode, StepRecord};
    use approx::assert_abs_diff_eq;
    use std::collections::BTreeMap;

    fn log_from(dists: &[f64], residual: f64) -> TrajectoryLog {
        TrajectoryLog {
            mode: RunMode::Surrogate,
            rank: Some(1),
            seed: None,
            fingerprint: None,
            initial_residual: None,
            records: dists
                .iter()
                .enumerate()
                .map(|(k, &d)| StepRecord {
                    k,
                    dist_to_target: d,
                    u: 0.0,
                    surrogate_norm: 1.0,
                    residual: (k + 1 < dists.len()).then_some(residual),
                    gap: None,
                    onestep_transfer_err: None,
                    plant_norm: None,
                    surrogate_dist: None,
                })
                .collect(),
            spectra: Vec::new(),
            instrumented: Vec::new(),
        }
    }

    #[test]
    fn spectral_fit_examples() {
        let s1: Vec<f64> = (1..=10).map(|a| (-(a as f64)).exp()).collect();
        let fit = fit_spectral_decay([s1.as_slice()], DecayModel::Exponential).unwrap();
        assert_abs_diff_eq!(fit.rate, 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(fit.prefactor, 1.0, epsilon = 1e-6);

        let s2: Vec<f64> = (1..=10).map(|a| 2.0 * (-0.5 * a as f64).exp()).collect();
        let fit = fit_spectral_decay([s2.as_slice()], DecayModel::Exponential).unwrap();
        assert_abs_diff_eq!(fit.rate, 0.5, epsilon = 1e-6);
        assert_abs_diff_eq!(fit.prefactor, 2.0, epsilon = 1e-6);

        let s3: Vec<f64> = (1..=10).map(|a| (a as f64).powi(-2)).collect();
        let fit = fit_spectral_decay([s3.as_slice()], DecayModel::Algebraic).unwrap();
        assert_abs_diff_eq!(fit.rate, 2.0, epsilon = 1e-6);

        let few = [1.0, 0.5, 0.0, 0.0];
        assert!(matches!(
            fit_spectral_decay([few.as_slice()], DecayModel::Exponential),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn envelope_lies_above_noisy_points() {
        let noisy: Vec<f64> = (1..=12)
            .map(|a| (-(0.7 * a as f64)).exp() * (1.0 + 0.3 * ((a * 37 % 7) as f64 / 7.0 - 0.5)))
            .collect();
        let fit = fit_spectral_decay([noisy.as_slice()], DecayModel::Exponential).unwrap();
        for (i, s) in noisy.iter().enumerate() {
            assert!(*s <= fit.predict((i + 1) as f64) * (1.0 + 1e-12));
        }
        assert!(fit.residual > 0.0);
    }

    #[test]
    fn contraction_examples() {
        let geometric: Vec<f64> = (0..60).map(|k| 0.9f64.powi(k)).collect();
        let est = estimate_contraction(&log_from(&geometric, 0.0), 0.2).unwrap();
        assert_abs_diff_eq!(est.rho, 0.9, epsilon = 1e-9);

        let flat = vec![0.3; 40];
        let est = estimate_contraction(&log_from(&flat, 0.0), 0.2).unwrap();
        assert_eq!(est.rho, 1.0);

        // Deterministic pseudo-noise in [-1, 1].
        let noise = |k: usize| ((k * 7919 + 13) % 1000) as f64 / 500.0 - 1.0;
        let noisy: Vec<f64> = (0..50).map(|k| 0.8f64.powi(k as i32) + 1e-6 * noise(k)).collect();
        let est = estimate_contraction(&log_from(&noisy, 0.0), 0.2).unwrap();
        assert!((0.79..=0.81).contains(&est.rho), "rho = {}", est.rho);

        // Everything inside the tube floor.
        assert!(matches!(
            estimate_contraction(&log_from(&[1e-4; 10], 1e-4), 0.2),
            Err(Error::InsufficientData(_))
        ));
        assert!(estimate_contraction(&log_from(&geometric, 0.0), 0.0).is_err());
    }

    #[test]
    fn practical_stability_examples() {
        let geometric: Vec<f64> = (0..30).map(|k| 0.5f64.powi(k)).collect();
        let report = check_practical_stability(&log_from(&geometric, 0.0), 0.5, 1.0).unwrap();
        assert!(report.bound_satisfied);
        assert_eq!(report.predicted_radius, 0.0);

        let mut bad = geometric.clone();
        bad[10] = bad[9];
        let report = check_practical_stability(&log_from(&bad, 0.0), 0.5, 1.0).unwrap();
        assert!(!report.bound_satisfied);
        assert_eq!(report.recursion_violations, vec![9]);

        let report = check_practical_stability(&log_from(&geometric, 0.0), 1.2, 1.0).unwrap();
        assert!(!report.applicable);
        assert!(!report.bound_satisfied);
    }

    #[test]
    fn recursion_with_equality_flips_on_perturbation() {
        let (rho, eps) = (0.8, 1e-3);
        let mut d = vec![0.5];
        for k in 0..40 {
            d.push(rho * d[k] + eps);
        }
        assert!(
            check_practical_stability(&log_from(&d, eps), rho, 1.0)
                .unwrap()
                .bound_satisfied
        );
        d[20] += 1e-6;
        let report = check_practical_stability(&log_from(&d, eps), rho, 1.0).unwrap();
        assert!(!report.bound_satisfied);
        assert_eq!(report.recursion_violations, vec![19]);
    }

    #[test]
    fn transfer_examples() {
        let mut log = log_from(&(0..20).map(|k| 0.7f64.powi(k)).collect::<Vec<_>>(), 0.0);
        for (k, r) in log.records.iter_mut().enumerate() {
            r.gap = Some(if k == 0 { 0.01 } else { 0.0 });
            r.onestep_transfer_err = (k < 19).then_some(if k == 3 { 0.02 } else { 0.005 });
        }
        let report = check_transfer_bound(&log, 0.7).unwrap();
        let t = report.transfer.clone().unwrap();
        assert_eq!(t.delta, 0.02);
        assert_eq!(t.delta0, 0.01);
        assert_abs_diff_eq!(t.predicted_radius, (0.7 * 0.01 + 0.02) / 0.3, epsilon = 1e-15);
        assert!(report.bound_satisfied);

        log.records[5].dist_to_target = 2.0;
        assert!(!check_transfer_bound(&log, 0.7).unwrap().bound_satisfied);

        let nominal = log_from(&[1.0, 0.5], 0.0);
        assert!(check_transfer_bound(&nominal, 0.5).is_err());
    }

    #[test]
    fn tube_fit_examples() {
        let ranks = [2, 4, 8, 12, 16, 24, 32, 64];
        let tubes: Vec<f64> = ranks.iter().map(|&r| (-0.3 * r as f64).exp()).collect();
        let fit = fit_tube_decay_points(&ranks, &tubes).unwrap();
        assert_abs_diff_eq!(fit.rate, 0.3, epsilon = 1e-6);
        assert_abs_diff_eq!(fit.prefactor, 1.0, epsilon = 1e-6);
        assert_eq!(fit.samples, 7);
        assert!(matches!(
            fit_tube_decay_points(&[2, 4], &[0.1, 0.01]),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn rank_for_tolerance_examples() {
        assert_eq!(rank_for_tolerance(1.0, 1.0, 0.5, 1.0, 2.0).unwrap(), 1);
        // log(4 e^5) = 6.386..., so the smallest admissible integer is 7.
        let eta = (-5.0f64).exp() / 2.0;
        assert_eq!(rank_for_tolerance(1.0, 1.0, 0.5, 1.0, eta).unwrap(), 7);
        let c = 0.37;
        let r1 = rank_for_tolerance(3.0, c, 0.6, 1.0, 1e-4).unwrap() as i64;
        let r2 = rank_for_tolerance(3.0, c, 0.6, 1.0, 5e-5).unwrap() as i64;
        let step = (2f64.ln() / c).ceil() as i64;
        assert!((r2 - r1 - step).abs() <= 1);
        assert!(rank_for_tolerance(1.0, 0.0, 0.5, 1.0, 0.1).is_err());
        assert!(rank_for_tolerance(1.0, 1.0, 1.0, 1.0, 0.1).is_err());
    }

    #[test]
    fn tail_bound_examples() {
        let zero = TruncationReport {
            residual: 0.0,
            per_node_spectra: BTreeMap::new(),
            per_node_tail: BTreeMap::new(),
            achieved_ranks: BTreeMap::new(),
        };
        assert!(check_tail_bound(&zero));
        let tampered = TruncationReport {
            residual: 0.5,
            per_node_tail: BTreeMap::from([(1, 0.1), (2, 0.1)]),
            ..zero
        };
        assert!(!check_tail_bound(&tampered));
    }
}
