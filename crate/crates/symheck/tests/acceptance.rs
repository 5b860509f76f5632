//! Acceptance suite: one test per criterion, each printing a PASS line
//! with the measured numbers. Criterion 10 (byte-identical CLI
//! artifacts) lives in the CLI crate's acceptance target, next to the
//! binary it exercises.

use nalgebra::DVector;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use symheck::estimate::{fit, fit_from, FitOptions};
use symheck::selmodel::{
    cond_density, loglik, predictors, score, GeneratorFamily, Links, ModelSpec, NuMode,
    ParamVector, RowParams, SelectionDataset,
};
use symheck::simulate::{
    calibrate_threshold, derived_seed, generate_dataset, run_study, ScenarioConfig, SimKind,
    Threshold,
};
use symheck::symdist::quad::{integrate_real_line, QuadOptions};
use symheck::symdist::{DensityGenerator, GenericGenerator};
use symheck::{diagnose, initialize};

fn scenario1(n: usize, seed: u64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::preset(1).unwrap();
    cfg.n = n;
    cfg.seed = seed;
    cfg
}

fn simulate_dataset(cfg: &ScenarioConfig, rep: u64) -> SelectionDataset {
    let mut rng = ChaCha12Rng::seed_from_u64(derived_seed(cfg.seed, rep));
    generate_dataset(cfg, &mut rng).unwrap()
}

fn student_spec(data: &SelectionDataset) -> ModelSpec {
    ModelSpec::new(
        data,
        Links::default(),
        GeneratorFamily::StudentT(NuMode::free_default()),
    )
    .unwrap()
}

/// Central finite differences of the log-likelihood: the independent
/// oracle for the analytic score.
fn fd_gradient(spec: &ModelSpec, theta: &ParamVector, data: &SelectionDataset) -> DVector<f64> {
    let flat = theta.to_flat();
    let mut out = DVector::zeros(flat.len());
    for j in 0..flat.len() {
        let h = 1e-6 * flat[j].abs().max(1.0);
        let mut hi = flat.clone();
        hi[j] += h;
        let mut lo = flat.clone();
        lo[j] -= h;
        let fh = loglik(spec, &ParamVector::from_flat(spec, &hi).unwrap(), data).unwrap();
        let fl = loglik(spec, &ParamVector::from_flat(spec, &lo).unwrap(), data).unwrap();
        out[j] = (fh - fl) / (2.0 * h);
    }
    out
}

#[test]
fn criterion_01_gradient_correctness() {
    let started = std::time::Instant::now();
    let cfg = scenario1(200, 20260801);
    let data = simulate_dataset(&cfg, 0);
    let spec = student_spec(&data);
    let mut rng = ChaCha12Rng::seed_from_u64(77);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let jitter = |c: f64, rng: &mut ChaCha12Rng| c + rng.random_range(-0.15..0.15);
        let theta = ParamVector::new(
            cfg.params.beta.iter().map(|&c| jitter(c, &mut rng)).collect(),
            cfg.params.gamma.iter().map(|&c| jitter(c, &mut rng)).collect(),
            cfg.params.lambda.iter().map(|&c| jitter(c, &mut rng)).collect(),
            cfg.params.kappa.iter().map(|&c| jitter(c, &mut rng)).collect(),
            Some(4.0f64.ln() + rng.random_range(-0.3..0.3)),
        );
        let analytic = score(&spec, &theta, &data).unwrap();
        let fd = fd_gradient(&spec, &theta, &data);
        for j in 0..analytic.len() {
            let rel = (analytic[j] - fd[j]).abs() / analytic[j].abs().max(1.0);
            worst = worst.max(rel);
            assert!(
                rel < 1e-5,
                "coordinate {j}: analytic {} vs finite-difference {} (rel {rel:.2e})",
                analytic[j],
                fd[j]
            );
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 60, "runtime {elapsed:?} exceeds 1 min");
    println!(
        "acceptance criterion 1 (gradient correctness): PASS — 20 points, \
         worst rel err {worst:.2e}, {elapsed:?}"
    );
}

#[test]
fn criterion_02_density_normalization() {
    let started = std::time::Instant::now();
    let gens = [
        ("gaussian", DensityGenerator::gaussian()),
        ("t3", DensityGenerator::student_t(3.0).unwrap()),
        ("t4", DensityGenerator::student_t(4.0).unwrap()),
        ("t12", DensityGenerator::student_t(12.0).unwrap()),
    ];
    let opts = QuadOptions {
        abs_tol: 1e-12,
        rel_tol: 1e-9,
        max_subdivisions: 512,
    };
    let mut rng = ChaCha12Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for (label, gen) in &gens {
        for trial in 0..20 {
            let row = RowParams::new(
                rng.random_range(-1.5..1.5),
                rng.random_range(-1.5..1.5),
                rng.random_range(0.3..2.5),
                rng.random_range(-0.85..0.85),
            )
            .unwrap();
            let mass = integrate_real_line(
                |y| cond_density(y, row, gen).unwrap(),
                row.mu1,
                &opts,
                "acceptance mass",
            )
            .unwrap()
            .value;
            let err = (mass - 1.0).abs();
            worst = worst.max(err);
            assert!(
                err < 1e-6,
                "{label} trial {trial}: mass {mass} (err {err:.2e}) for {row:?}"
            );
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 60, "runtime {elapsed:?} exceeds 1 min");
    println!(
        "acceptance criterion 2 (density normalization): PASS — 80 configurations, \
         worst |mass-1| {worst:.2e}, {elapsed:?}"
    );
}

#[test]
fn criterion_03_oracle_equivalence() {
    let started = std::time::Instant::now();
    let pairs: [(&str, DensityGenerator, DensityGenerator); 2] = [
        (
            "gaussian",
            DensityGenerator::gaussian(),
            DensityGenerator::generic(GenericGenerator::new(
                |u| (-0.5 * u).exp(),
                f64::INFINITY,
            ))
            .unwrap(),
        ),
        (
            "t4",
            DensityGenerator::student_t(4.0).unwrap(),
            DensityGenerator::generic(GenericGenerator::new(
                |u| (1.0 + u / 4.0).powf(-3.0),
                f64::INFINITY,
            ))
            .unwrap(),
        ),
    ];
    let (mu1, sigma, mu2) = (0.2, 1.1, 0.6);
    let mut worst: f64 = 0.0;
    for (label, closed, generic) in &pairs {
        for i in 0..10 {
            let rho = -0.9 + 0.2 * i as f64; // ±0.9, ±0.7, ..., ±0.1
            for j in 0..10 {
                let y = -3.0 + 6.0 * (j as f64) / 9.0;
                let row = RowParams::new(mu1, mu2, sigma, rho).unwrap();
                let a = cond_density(y, row, closed).unwrap();
                let b = cond_density(y, row, generic).unwrap();
                let err = (a - b).abs();
                worst = worst.max(err);
                assert!(
                    err < 1e-7,
                    "{label} at (y={y}, rho={rho}): closed {a} vs generic {b}"
                );
            }
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 300, "runtime {elapsed:?} exceeds 5 min");
    println!(
        "acceptance criterion 3 (oracle equivalence): PASS — 10x10 grid x2 generators, \
         worst abs diff {worst:.2e}, {elapsed:?}"
    );
}

#[test]
fn criterion_04_degrees_of_freedom_limit() {
    // Gaussian data, n = 500: the nu = 1e6 Student model must agree with
    // the Gaussian model after fitting.
    let mut cfg = scenario1(500, 4242);
    cfg.distribution = SimKind::Gaussian;
    let data = simulate_dataset(&cfg, 0);
    let spec_g = ModelSpec::new(&data, Links::default(), GeneratorFamily::Gaussian).unwrap();
    let spec_t = ModelSpec::new(
        &data,
        Links::default(),
        GeneratorFamily::StudentT(NuMode::Fixed(1e6)),
    )
    .unwrap();
    let opts = FitOptions {
        skip_se: true,
        ..Default::default()
    };
    let res_g = fit(&spec_g, &data, &opts).unwrap();
    let res_t = fit(&spec_t, &data, &opts).unwrap();
    assert!(res_g.converged && res_t.converged);
    let ll_gap = (res_g.loglik - res_t.loglik).abs();
    assert!(ll_gap < 1e-3, "loglik gap {ll_gap}");
    let (a, b) = (res_g.theta.to_flat(), res_t.theta.to_flat());
    let mut worst: f64 = 0.0;
    for j in 0..a.len() {
        worst = worst.max((a[j] - b[j]).abs());
        assert!(
            (a[j] - b[j]).abs() < 1e-3,
            "estimate {j}: gaussian {} vs t(1e6) {}",
            a[j],
            b[j]
        );
    }
    println!(
        "acceptance criterion 4 (degrees-of-freedom limit): PASS — loglik gap {ll_gap:.2e}, \
         worst estimate gap {worst:.2e}"
    );
}

#[test]
fn criterion_05_monte_carlo_reproduction() {
    let started = std::time::Instant::now();
    // Scenario 1 at threshold 0 runs near the 31% censoring column of
    // the reference tables.
    let study = |n: usize| {
        let mut cfg = scenario1(n, 20260805);
        cfg.nrep = 200;
        run_study(&cfg).unwrap()
    };
    let s500 = study(500);
    let s1000 = study(1000);
    let s2000 = study(2000);

    assert!(
        (s1000.mean_censoring_pct - 31.0).abs() < 3.0,
        "censoring {}%",
        s1000.mean_censoring_pct
    );
    // Bias bounds for every beta and gamma coordinate at n = 1000.
    for row in &s1000.rows {
        if row.name.starts_with("beta") || row.name.starts_with("gamma") {
            assert!(
                row.bias.abs() <= 0.03,
                "{} bias {} exceeds 0.03",
                row.name,
                row.bias
            );
        }
    }
    let mse_beta2 = s1000
        .rows
        .iter()
        .find(|r| r.name == "beta2")
        .unwrap()
        .mse;
    assert!(
        (0.0002..=0.0025).contains(&mse_beta2),
        "MSE(beta2) {mse_beta2} outside [0.0002, 0.0025]"
    );
    // Consistency: every beta coordinate improves from n=500 to n=2000.
    for name in ["beta1", "beta2", "beta3"] {
        let at = |s: &symheck::MonteCarloSummary| {
            s.rows.iter().find(|r| r.name == name).unwrap().clone()
        };
        let (a, b) = (at(&s500), at(&s2000));
        assert!(
            b.bias.abs() < a.bias.abs(),
            "{name}: |bias| {} (n=2000) not below {} (n=500)",
            b.bias.abs(),
            a.bias.abs()
        );
        assert!(
            b.mse < a.mse,
            "{name}: MSE {} (n=2000) not below {} (n=500)",
            b.mse,
            a.mse
        );
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 2700, "runtime {elapsed:?} exceeds 45 min");
    println!(
        "acceptance criterion 5 (Monte Carlo reproduction): PASS — censoring {:.2}%, \
         MSE(beta2)@1000 = {:.5}, failures {}/{}/{}, {elapsed:?}",
        s1000.mean_censoring_pct, mse_beta2, s500.failures, s1000.failures, s2000.failures
    );
}

#[test]
fn criterion_06_censoring_calibration() {
    let realized = |cfg: &ScenarioConfig, reps: u64| -> f64 {
        let mut mean = 0.0;
        for rep in 0..reps {
            let data = simulate_dataset(cfg, rep);
            mean += 100.0 * data.censoring_fraction() / reps as f64;
        }
        mean
    };
    let mut s2 = ScenarioConfig::preset(2).unwrap();
    s2.n = 20_000;
    s2.seed = 61;
    let c2 = realized(&s2, 3);
    assert!((c2 - 31.017).abs() < 3.0, "scenario 2 censoring {c2}%");

    let mut s3 = ScenarioConfig::preset(3).unwrap();
    s3.n = 20_000;
    s3.seed = 62;
    let c3 = realized(&s3, 3);
    assert!((c3 - 49.8604).abs() < 3.0, "scenario 3 censoring {c3}%");

    // Scenario 1 with a threshold calibrated to 50% (the reference used
    // an unstated a > 0 yielding ~53-54%; the calibrated target governs).
    let mut s1 = scenario1(20_000, 63);
    let mut rng = ChaCha12Rng::seed_from_u64(64);
    let a = calibrate_threshold(&s1, 0.5, &mut rng).unwrap();
    s1.threshold = Threshold::Fixed(a);
    let c1 = realized(&s1, 3);
    assert!((c1 - 50.0).abs() < 3.0, "scenario 1 calibrated censoring {c1}%");
    println!(
        "acceptance criterion 6 (censoring calibration): PASS — scenario 2: {c2:.2}% \
         (target 31.017), scenario 3: {c3:.2}% (target 49.8604), scenario 1 calibrated: \
         {c1:.2}% at a = {a:.4}"
    );
}

#[test]
fn criterion_07_selection_probability_identity() {
    let mut rng = ChaCha12Rng::seed_from_u64(1007);
    let mut worst: f64 = 0.0;
    for trial in 0..10 {
        let rho: f64 = rng.random_range(-0.85..0.85);
        let mu2: f64 = rng.random_range(-1.2..1.2);
        let nu: f64 = rng.random_range(2.5..25.0);
        let cfg = ScenarioConfig {
            n: 100_000,
            params: symheck::TrueParams {
                beta: vec![0.0, 0.0, 0.0],
                gamma: vec![mu2, 0.0, 0.0, 0.0],
                lambda: vec![0.0, 0.0],
                kappa: vec![rho.atanh(), 0.0],
            },
            distribution: SimKind::StudentT { nu },
            threshold: Threshold::Fixed(0.0),
            nrep: 1,
            seed: 900 + trial,
        };
        let data = simulate_dataset(&cfg, 0);
        let p_emp = data.n_observed() as f64 / data.n() as f64;
        let h = symheck::symdist::h_function(
            mu2,
            rho,
            &DensityGenerator::student_t(nu).unwrap(),
        )
        .unwrap();
        let gap = (p_emp - h).abs();
        worst = worst.max(gap);
        assert!(gap < 0.005, "trial {trial}: empirical {p_emp} vs H {h}");
    }
    println!(
        "acceptance criterion 7 (selection probability identity): PASS — 10 configurations, \
         worst gap {worst:.4}"
    );
}

#[test]
fn criterion_08_residual_sanity() {
    // Worked examples reproduce exactly.
    let (_, r1) = diagnose::mt_residual_from_survival(true, (-1.0f64).exp());
    let (_, r2) = diagnose::mt_residual_from_survival(false, 1.0);
    let (_, r3) = diagnose::mt_residual_from_survival(true, 0.5);
    assert!(r1.abs() < 1e-5);
    assert!(r2.abs() < 1e-5);
    assert!((r3 - 0.34543).abs() < 1e-5);

    // Correctly specified Student-t data at n = 2000.
    let cfg = scenario1(2000, 808);
    let data = simulate_dataset(&cfg, 0);
    let spec = student_spec(&data);
    let res = fit(&spec, &data, &FitOptions::default()).unwrap();
    assert!(res.converged);
    let residuals = diagnose::mt_residuals(&res, &spec, &data).unwrap();
    let finite: Vec<f64> = residuals.finite_values().collect();
    assert!(finite.len() as f64 > 0.99 * data.n() as f64);
    let m = finite.len() as f64;
    let mean = finite.iter().sum::<f64>() / m;
    let var = finite.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0);
    assert!(
        (-0.15..0.15).contains(&mean),
        "residual mean {mean} outside (-0.15, 0.15)"
    );
    assert!(
        (0.7..1.3).contains(&var),
        "residual variance {var} outside (0.7, 1.3)"
    );
    println!(
        "acceptance criterion 8 (residual sanity): PASS — worked examples exact, \
         mean {mean:.4}, variance {var:.4} over {} finite residuals",
        finite.len()
    );
}

#[test]
fn criterion_09_model_selection_ordering() {
    let started = std::time::Instant::now();
    let cfg = scenario1(1000, 909);
    let opts = FitOptions {
        skip_se: true,
        ..Default::default()
    };
    let wins: usize = (0..50u64)
        .into_par_iter()
        .map(|rep| {
            let data = simulate_dataset(&cfg, rep);
            let spec_t = student_spec(&data);
            let spec_g =
                ModelSpec::new(&data, Links::default(), GeneratorFamily::Gaussian).unwrap();
            let res_t = fit(&spec_t, &data, &opts);
            let res_g = fit(&spec_g, &data, &opts);
            match (res_t, res_g) {
                (Ok(t), Ok(g)) => usize::from(t.aic < g.aic),
                _ => 0,
            }
        })
        .sum();
    let elapsed = started.elapsed();
    assert!(
        wins >= 45,
        "Student-t model won AIC in only {wins}/50 replicates"
    );
    println!(
        "acceptance criterion 9 (model-selection ordering): PASS — Student-t wins AIC \
         in {wins}/50 replicates, {elapsed:?}"
    );
}

/// Sanity companion to criterion 5: two-start agreement of the fitted
/// optimum (initialization vs truth) on one scenario-1 replicate.
#[test]
fn initialization_reaches_the_same_optimum_as_the_truth_start() {
    let cfg = scenario1(2000, 31337);
    let data = simulate_dataset(&cfg, 0);
    let spec = student_spec(&data);
    let opts = FitOptions {
        skip_se: true,
        ..Default::default()
    };
    let from_init = fit(&spec, &data, &opts).unwrap();
    let start = initialize(&spec, &data).unwrap();
    let l_init = loglik(&spec, &start, &data).unwrap();
    assert!(from_init.loglik >= l_init);
    let truth = ParamVector::new(
        cfg.params.beta.clone(),
        cfg.params.gamma.clone(),
        cfg.params.lambda.clone(),
        cfg.params.kappa.clone(),
        Some(4.0f64.ln()),
    );
    let from_truth = fit_from(&spec, &data, truth, &opts).unwrap();
    assert!(
        (from_init.loglik - from_truth.loglik).abs() < 1e-6,
        "two-start gap {}",
        (from_init.loglik - from_truth.loglik).abs()
    );
    // Predictors stay inside their domains across the sample.
    let pred = predictors(&spec, &from_init.theta, &data).unwrap();
    assert!(pred.sigma.iter().all(|&s| s > 0.0));
    assert!(pred.rho.iter().all(|&r| r.abs() < 1.0));
}
