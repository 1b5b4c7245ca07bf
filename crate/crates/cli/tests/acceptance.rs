//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! Criteria 2 and 5 to 8 share one run of the full 4×4 rank sweep.

use std::f64::consts::SQRT_2;
use std::process::ExitCode;
use std::time::Instant;

use htcontrol::analysis::{
    check_practical_stability, check_tail_bound, check_transfer_bound, estimate_contraction, fit_spectral_decay,
    fit_tube_decay_points, geometric_bound, rank_for_tolerance, DecayModel,
};
use htcontrol::closed_loop::{RankSweepResult, RunMode, StepRecord, TrajectoryLog};
use htcontrol::ht::{hsvd_truncate, DimensionTree, RankBudget};
use htcontrol::linalg::singular_values;
use htcontrol::model::{control_hamiltonian, dist_star, heisenberg_drift, random_state};
use htcontrol::propagate::splitting_error;
use htcontrol::tensor::matricize;
use htcontrol::{ModeShape, C64};
use htcontrol_cli::commands::cmd_sweep;
use htcontrol_cli::config::{parse_config, PRESET_4X4};
use htcontrol_cli::output::{read_csv, LoadedCsv, SweepRow};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let h0 = heisenberg_drift(2, 2, 0.25, false).map_err(|e| e.to_string())?;
    let h1 = control_hamiltonian(2, 2, &[(0, 0), (0, 1)]).map_err(|e| e.to_string())?;
    let psi = random_state(ModeShape::qubits(4).unwrap(), 11).map_err(|e| e.to_string())?;
    let errs: Vec<f64> = [0.08, 0.04, 0.02]
        .iter()
        .map(|&dt| splitting_error(&psi, &h0, &h1, 0.1, dt).unwrap())
        .collect();
    let ratios: Vec<f64> = errs.windows(2).map(|w| w[0] / w[1]).collect();
    let elapsed = start.elapsed().as_secs_f64();
    let ok = ratios.iter().all(|r| (6.5..=9.5).contains(r)) && elapsed < 1.0;
    verdict(
        ok,
        format!("error ratios {ratios:?} (need [6.5, 9.5]), {elapsed:.3} s (need < 1 s)"),
    )
}

fn criterion_2(sweep: &RankSweepResult) -> Outcome {
    let dev = sweep
        .nominal
        .records
        .iter()
        .map(|r| (r.surrogate_norm - 1.0).abs())
        .fold(0.0, f64::max);
    let steps = sweep.nominal.steps();
    verdict(
        dev <= 1e-9 && steps == 220,
        format!("{steps}-step nominal run, max norm deviation {dev:e} (need <= 1e-9)"),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = f64::NEG_INFINITY;
    let mut failures = 0;
    for case in 0..200 {
        let n = [4, 6, 8][case % 3];
        let psi = random_state(ModeShape::qubits(n).unwrap(), rng.random()).unwrap();
        let r = rng.random_range(1..=1usize << (n / 2));
        let (_, report) = hsvd_truncate(&psi, &DimensionTree::balanced(n).unwrap(), &RankBudget::Uniform(r)).unwrap();
        worst = worst.max(report.residual.powi(2) - report.total_tail());
        if !check_tail_bound(&report) {
            failures += 1;
        }
    }
    verdict(
        failures == 0,
        format!("200 states, {failures} violations, max residual² − tails = {worst:e} (need <= 1e-9)"),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4048);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let d = rng.random_range(2..=6);
        let r = rng.random_range(1..=d);
        let psi = random_state(ModeShape::new(2, d).unwrap(), rng.random()).unwrap();
        let (_, report) = hsvd_truncate(&psi, &DimensionTree::balanced(2).unwrap(), &RankBudget::Uniform(r)).unwrap();
        let sigma = singular_values(&matricize(&psi, &[0]).unwrap()).unwrap();
        let best = sigma[r..].iter().map(|s| s * s).sum::<f64>().sqrt();
        worst = worst.max((report.residual - best).abs());
    }
    verdict(
        worst <= 1e-10,
        format!("100 states, max |HSVD − best rank-r| = {worst:e} (need <= 1e-10)"),
    )
}

fn criterion_5(rows: &[SweepRow]) -> Outcome {
    let tube = |r: usize| rows.iter().find(|row| row.rank == r).map(|row| row.tube);
    let (Some(t2), Some(t64)) = (tube(2), tube(64)) else {
        return Err("sweep.csv lacks rank 2 or 64".into());
    };
    verdict(
        rows.len() == 8 && (4.5e-2..=4.5e-1).contains(&t2) && t64 <= 2e-3,
        format!(
            "{} rows, tube(2) = {t2:e} (need [4.5e-2, 4.5e-1]), tube(64) = {t64:e} (need <= 2e-3)",
            rows.len()
        ),
    )
}

fn criterion_6(sweep: &RankSweepResult) -> Outcome {
    let tubes = sweep.tubes();
    let monotone = tubes.windows(2).all(|w| w[1] <= 1.1 * w[0]);
    let (Some(r8), Some(r64)) = (sweep.entry(8), sweep.entry(64)) else {
        return Err("sweep lacks rank 8 or 64".into());
    };
    let du = r8
        .log
        .controls()
        .iter()
        .zip(r64.log.controls())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let tubes: Vec<String> = tubes.iter().map(|t| format!("{t:.3e}")).collect();
    let tubes = tubes.join(", ");
    verdict(
        monotone && du <= 0.05,
        format!("tubes [{tubes}] non-increasing within 10%: {monotone}; max |u8 − u64| = {du:e} (need <= 0.05)"),
    )
}

fn criterion_7(sweep: &RankSweepResult) -> Outcome {
    let fit = fit_tube_decay_points(&sweep.ranks(), &sweep.tubes()).map_err(|e| format!("tube fit: {e}"))?;
    let rho = estimate_contraction(&sweep.nominal, 0.1).map_err(|e| format!("contraction: {e}"))?;
    let eta = sweep.entry(32).ok_or("sweep lacks rank 32")?.tube;
    let detail = format!(
        "C2 = {:e}, c' = {:.4} over {} ranks, rho = {:.6} (quartiles {:.6}, {:.6}), eta = tube(32) = {eta:e}",
        fit.prefactor, fit.rate, fit.samples, rho.rho, rho.lower_quartile, rho.upper_quartile
    );
    let r = rank_for_tolerance(fit.prefactor, fit.rate, rho.rho, 1.0, eta)
        .map_err(|e| format!("{detail}; rank rule: {e}"))?;
    verdict(
        fit.rate > 0.0 && r.abs_diff(32) <= 8,
        format!("{detail}; recommended rank {r} (need 32 ± 8)"),
    )
}

fn criterion_8(sweep: &RankSweepResult) -> Outcome {
    let log = &sweep.entry(64).ok_or("sweep lacks rank 64")?.log;
    let pooled = log.spectra.iter().flat_map(|s| s.spectra.values().map(Vec::as_slice));
    let fit = fit_spectral_decay(pooled, DecayModel::Exponential).map_err(|e| e.to_string())?;
    verdict(
        fit.rate > 0.0,
        format!(
            "{} snapshots, {} points, envelope C1 = {:e}, c = {:.4} (need > 0)",
            log.spectra.len(),
            fit.samples,
            fit.prefactor,
            fit.rate
        ),
    )
}

fn synthetic_log(dists: &[f64], residual: f64) -> TrajectoryLog {
    let mut log = TrajectoryLog::new(RunMode::Surrogate, Some(1));
    log.records = dists
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
        .collect();
    log
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let rho = rng.random_range(0.01..0.999);
        let b = rng.random_range(0.0..1.0);
        let d0 = rng.random_range(0.0..2.0);
        let k = rng.random_range(0..=100);
        let mut d = d0;
        for _ in 0..k {
            d = rho * d + b;
        }
        worst = worst.max((geometric_bound(rho, b, d0, k) - d).abs() / (1.0 + d.abs()));
    }

    let (rho, eps) = (0.8, 1e-3);
    let mut dists = vec![0.5];
    for k in 0..40 {
        dists.push(rho * dists[k] + eps);
    }
    let clean = check_practical_stability(&synthetic_log(&dists, eps), rho, 1.0).unwrap();
    dists[20] += 1e-6;
    let tampered = check_practical_stability(&synthetic_log(&dists, eps), rho, 1.0).unwrap();
    let stability_detected =
        clean.bound_satisfied && !tampered.bound_satisfied && tampered.recursion_violations == [19];

    let mut coupled = synthetic_log(&(0..30).map(|k| 0.7f64.powi(k)).collect::<Vec<_>>(), 0.0);
    for (k, r) in coupled.records.iter_mut().enumerate() {
        r.gap = Some(if k == 0 { 0.01 } else { 0.0 });
        r.onestep_transfer_err = (k < 29).then_some(0.002);
    }
    let transfer_clean = check_transfer_bound(&coupled, 0.7).unwrap();
    coupled.records[12].dist_to_target = 0.5;
    let transfer_tampered = check_transfer_bound(&coupled, 0.7).unwrap();
    let transfer_detected = transfer_clean.bound_satisfied
        && !transfer_tampered.bound_satisfied
        && transfer_tampered.bound_violations.contains(&12);

    verdict(
        worst <= 1e-12 && stability_detected && transfer_detected,
        format!(
            "1000 cases, max closed-form vs unrolled gap {worst:e} (need <= 1e-12); violation detected: stability {stability_detected}, transfer {transfer_detected}"
        ),
    )
}

fn criterion_10() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut phase, mut out_of_range, mut triangle) = (0.0f64, 0usize, f64::NEG_INFINITY);
    for _ in 0..1000 {
        let shape = ModeShape::qubits(rng.random_range(1..=6)).unwrap();
        let a = random_state(shape, rng.random()).unwrap();
        let b = random_state(shape, rng.random()).unwrap();
        let c = random_state(shape, rng.random()).unwrap();
        let ab = dist_star(&a, &b).unwrap();
        let twisted = dist_star(
            &a.scaled(C64::from_polar(1.0, rng.random_range(0.0..6.3))),
            &b.scaled(C64::from_polar(1.0, rng.random_range(0.0..6.3))),
        )
        .unwrap();
        phase = phase.max((ab - twisted).abs());
        if !(0.0..=SQRT_2).contains(&ab) {
            out_of_range += 1;
        }
        triangle = triangle.max(ab - dist_star(&a, &c).unwrap() - dist_star(&c, &b).unwrap());
    }
    verdict(
        phase <= 1e-12 && out_of_range == 0 && triangle <= 1e-10,
        format!(
            "1000 pairs, phase error {phase:e} (need <= 1e-12), {out_of_range} outside [0, √2], max triangle excess {triangle:e} (need <= 1e-10)"
        ),
    )
}

fn main() -> ExitCode {
    let mut results: Vec<(usize, Outcome)> = vec![
        (1, criterion_1()),
        (3, criterion_3()),
        (4, criterion_4()),
        (9, criterion_9()),
        (10, criterion_10()),
    ];

    let start = Instant::now();
    let dir = tempfile::tempdir().expect("temporary directory");
    let config = parse_config(Some(PRESET_4X4), None, &[]).expect("preset parses").config;
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    match cmd_sweep(&config, jobs, dir.path()) {
        Ok(sweep) => {
            eprintln!("paper-4x4 sweep took {:.1} s", start.elapsed().as_secs_f64());
            let rows = match read_csv(&dir.path().join("sweep.csv")) {
                Ok(file) => match file.content {
                    LoadedCsv::Sweep(rows) => Ok(rows),
                    _ => Err("sweep.csv has the wrong header".to_string()),
                },
                Err(e) => Err(e.to_string()),
            };
            results.push((2, criterion_2(&sweep)));
            results.push((5, rows.and_then(|rows| criterion_5(&rows))));
            results.push((6, criterion_6(&sweep)));
            results.push((7, criterion_7(&sweep)));
            results.push((8, criterion_8(&sweep)));
        }
        Err(e) => {
            for c in [2, 5, 6, 7, 8] {
                results.push((c, Err(format!("sweep failed: {e}"))));
            }
        }
    }

    results.sort_by_key(|(c, _)| *c);
    let mut failed = 0;
    for (c, outcome) in &results {
        match outcome {
            Ok(detail) => println!("criterion {c:>2}: PASS  {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {c:>2}: FAIL  {detail}");
            }
        }
    }
    println!("{} of {} criteria pass", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
