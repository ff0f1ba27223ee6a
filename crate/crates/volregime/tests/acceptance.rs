//! Acceptance gate: ten end-to-end criteria, one pass/fail line each.
//! Every numeric target is checked against an oracle computed inside this
//! file (simulators, brute-force loops), never against the implementation.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use volregime::config::ExperimentConfig;
use volregime::runner::{self, Overrides};
use volregime_core::baselines::{fit_garch, fit_har};
use volregime_core::evaluator::compute_metrics;
use volregime_core::gateway::{MockBehavior, MockModel};
use volregime_core::marketdata::{build_windows, Date};
use volregime_core::pool::{build_pool, label_regime, DemoPool, Demonstration};
use volregime_core::promptcodec::{format_number, parse_forecast};
use volregime_core::sampler::{
    estimate_regime, sample_fixed_prior, sample_label_estimate, SamplerConfig, Strategy,
};
use volregime_core::{Regime, ReturnObservation, WindowSample};

fn check(n: u32, desc: &str, result: Result<(), String>) {
    match result {
        Ok(()) => println!("acceptance criterion {n}: PASS - {desc}"),
        Err(e) => {
            println!("acceptance criterion {n}: FAIL - {desc}: {e}");
            panic!("criterion {n} failed: {e}");
        }
    }
}

/// GJR-GARCH simulator; with gamma = 0 this is plain GARCH(1,1). This is
/// the oracle for the recovery criteria.
fn simulate_garch(n: usize, omega: f64, alpha: f64, beta: f64, gamma: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut sigma2 = omega / (1.0 - alpha - beta - gamma / 2.0);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let r = sigma2.sqrt() * normal.sample(&mut rng);
        out.push(r);
        let leverage = if r < 0.0 { gamma } else { 0.0 };
        sigma2 = omega + (alpha + leverage) * r * r + beta * sigma2;
    }
    out
}

#[test]
fn criterion_1_garch_parameter_recovery() {
    let desc = "GARCH(1,1) recovery on 10k simulated returns";
    let (omega, alpha, beta) = (1e-6, 0.10, 0.85);
    let returns = simulate_garch(10_000, omega, alpha, beta, 0.0, 42);
    let start = Instant::now();
    let (params, _) = fit_garch(&returns, false).expect("fit");
    let elapsed = start.elapsed();
    let result = (|| {
        if (params.alpha - alpha).abs() > 0.05 {
            return Err(format!("alpha {:.4} off by more than 0.05 from {alpha}", params.alpha));
        }
        if (params.beta - beta).abs() > 0.05 {
            return Err(format!("beta {:.4} off by more than 0.05 from {beta}", params.beta));
        }
        if params.omega < omega / 2.0 || params.omega > omega * 2.0 {
            return Err(format!("omega {:e} outside [{:e}, {:e}]", params.omega, omega / 2.0, omega * 2.0));
        }
        if elapsed.as_secs_f64() >= 10.0 {
            return Err(format!("fit took {:.1}s, budget is 10s", elapsed.as_secs_f64()));
        }
        Ok(())
    })();
    check(1, desc, result);
}

#[test]
fn criterion_2_gjr_asymmetry_detection() {
    let desc = "GJR leverage term detected on asymmetric data, absent on symmetric";
    let asym = simulate_garch(10_000, 1e-6, 0.05, 0.85, 0.10, 7);
    let sym = simulate_garch(10_000, 1e-6, 0.10, 0.85, 0.0, 8);
    let (p_asym, _) = fit_garch(&asym, true).expect("asymmetric fit");
    let (p_sym, _) = fit_garch(&sym, true).expect("symmetric fit");
    let result = (|| {
        if p_asym.gamma <= 0.02 {
            return Err(format!("gamma {:.4} on leveraged data should exceed 0.02", p_asym.gamma));
        }
        if p_sym.gamma >= 0.03 {
            return Err(format!("gamma {:.4} on symmetric data should stay below 0.03", p_sym.gamma));
        }
        Ok(())
    })();
    check(2, desc, result);
}

fn random_observations(rng: &mut ChaCha8Rng, len: usize) -> Vec<ReturnObservation> {
    // Log-variance random walk so the daily/weekly/monthly averages are
    // well spread and the design matrix is far from singular.
    let mut log_v: f64 = -9.0;
    (0..len)
        .map(|i| {
            log_v += rng.random_range(-0.6..0.6);
            let v = log_v.exp();
            ReturnObservation {
                date: Date { year: 2020, month: (i % 12 + 1) as u8, day: (i % 28 + 1) as u8 },
                log_return: v.sqrt(),
                realized_variance: v,
            }
        })
        .collect()
}

#[test]
fn criterion_3_har_satisfies_normal_equations() {
    let desc = "HAR coefficients satisfy the normal equations on 50 random datasets";
    let mut rng = ChaCha8Rng::seed_from_u64(3003);
    let floor = 1e-12;
    let result = (|| {
        for case in 0..50 {
            let len = rng.random_range(60..200);
            let obs = random_observations(&mut rng, len);
            let (params, _) = fit_har(&obs).map_err(|e| format!("case {case}: fit failed: {e}"))?;
            let beta = [params.intercept, params.beta_daily, params.beta_weekly, params.beta_monthly];

            // Independent design matrix: rows t in 21..len-1.
            let v: Vec<f64> = obs.iter().map(|o| o.realized_variance).collect();
            let mut xtx = [[0.0f64; 4]; 4];
            let mut xty = [0.0f64; 4];
            for t in 21..len - 1 {
                let daily = (v[t] + floor).ln();
                let weekly = (v[t - 4..=t].iter().sum::<f64>() / 5.0 + floor).ln();
                let monthly = (v[t - 21..=t].iter().sum::<f64>() / 22.0 + floor).ln();
                let x = [1.0, daily, weekly, monthly];
                let y = (v[t + 1] + floor).ln();
                for i in 0..4 {
                    for j in 0..4 {
                        xtx[i][j] += x[i] * x[j];
                    }
                    xty[i] += x[i] * y;
                }
            }
            let mut resid_sq = 0.0;
            let mut rhs_sq = 0.0;
            for i in 0..4 {
                let row: f64 = (0..4).map(|j| xtx[i][j] * beta[j]).sum();
                resid_sq += (row - xty[i]).powi(2);
                rhs_sq += xty[i].powi(2);
            }
            let rel = resid_sq.sqrt() / rhs_sq.sqrt();
            if rel > 1e-8 {
                return Err(format!("case {case}: residual norm {rel:e} exceeds 1e-8"));
            }
        }
        Ok(())
    })();
    check(3, desc, result);
}

#[test]
fn criterion_4_metrics_match_brute_force() {
    let desc = "compute_metrics matches brute-force loops on 100 random record sets";
    use volregime_core::evaluator::{ForecastRecord, RecordFlags};
    let mut rng = ChaCha8Rng::seed_from_u64(4004);
    let result = (|| {
        for case in 0..100 {
            let n = rng.random_range(1..60);
            let tau = rng.random_range(1e-5..5e-4);
            let records: Vec<ForecastRecord> = (0..n)
                .map(|i| {
                    let truth = rng.random_range(0.0..1e-3);
                    ForecastRecord {
                        end_index: i,
                        method: "m".into(),
                        prediction: rng.random_range(0.0..1e-3),
                        truth,
                        regime_true: label_regime(truth, tau),
                        flags: RecordFlags::default(),
                    }
                })
                .collect();
            let report = compute_metrics(&records, tau).map_err(|e| format!("case {case}: {e}"))?;

            let nf = n as f64;
            let mae: f64 = records.iter().map(|r| (r.prediction - r.truth).abs()).sum::<f64>() / nf;
            let rmse: f64 =
                (records.iter().map(|r| (r.prediction - r.truth).powi(2)).sum::<f64>() / nf).sqrt();
            let low: Vec<f64> = records
                .iter()
                .filter(|r| r.truth < tau)
                .map(|r| (r.prediction - r.truth).abs())
                .collect();
            let high: Vec<f64> = records
                .iter()
                .filter(|r| r.truth >= tau)
                .map(|r| (r.prediction - r.truth).abs())
                .collect();
            let agree = |a: f64, b: f64| (a - b).abs() <= 1e-12 * (1.0 + b.abs());
            if !agree(report.mae, mae) || !agree(report.rmse, rmse) {
                return Err(format!("case {case}: MAE/RMSE disagree with brute force"));
            }
            match (report.mae_low, low.is_empty()) {
                (None, true) => {}
                (Some(got), false) if agree(got, low.iter().sum::<f64>() / low.len() as f64) => {}
                _ => return Err(format!("case {case}: low-regime MAE disagrees")),
            }
            match (report.mae_high, high.is_empty()) {
                (None, true) => {}
                (Some(got), false) if agree(got, high.iter().sum::<f64>() / high.len() as f64) => {}
                _ => return Err(format!("case {case}: high-regime MAE disagrees")),
            }
            if report.n_low != low.len() || report.n_high != high.len() {
                return Err(format!("case {case}: partition counts disagree"));
            }
            if report.mae > report.rmse + 1e-15 {
                return Err(format!("case {case}: MAE {} exceeds RMSE {}", report.mae, report.rmse));
            }
        }
        Ok(())
    })();
    check(4, desc, result);
}

/// Synthetic daily closes with volatility clustering, deterministic.
fn write_price_fixture(path: &Path, days: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut sigma2: f64 = 1e-4;
    let mut price = 100.0f64;
    let mut rows = String::from("date,close\n");
    for day in 0..days {
        let r = sigma2.sqrt() * normal.sample(&mut rng);
        sigma2 = 2e-6 + 0.08 * r * r + 0.90 * sigma2;
        price *= r.exp();
        let year = 2015 + day / 360;
        let month = (day % 360) / 30 + 1;
        let dom = day % 30 + 1;
        rows.push_str(&format!("{year:04}-{month:02}-{dom:02},{price:.6}\n"));
    }
    std::fs::write(path, rows).unwrap();
}

fn pipeline_config(dir: &Path, days: usize, backend: &str) -> ExperimentConfig {
    let prices = dir.join("prices.csv");
    write_price_fixture(&prices, days, 55);
    let mut config: ExperimentConfig = toml::from_str(&format!(
        "[data]\npath = {:?}\ndataset_id = \"acceptance\"\n",
        prices.to_str().unwrap()
    ))
    .unwrap();
    config.output.dir = dir.join("out");
    config.pipeline.pool_size = 60;
    config.model.backend = backend.into();
    config
}

#[test]
fn criterion_5_cheating_oracle_pipeline_is_exact() {
    let desc = "full ICL backtest with the cheating-oracle mock scores MAE exactly 0 on 50 test samples";
    let dir = tempfile::tempdir().unwrap();
    // 174 closes -> 173 returns -> 166 windows -> 116 train / 50 test.
    let config = pipeline_config(dir.path(), 174, "mock:cheating_oracle");
    let overrides = Overrides::default();
    let start = Instant::now();
    let result = (|| {
        let derived = runner::cmd_ingest(&config).map_err(|e| e.to_string())?;
        if derived.n_test != 50 {
            return Err(format!("fixture yields {} test samples, wanted 50", derived.n_test));
        }
        runner::cmd_build_pool(&config, &overrides).map_err(|e| e.to_string())?;
        let outcome = runner::cmd_evaluate(&config, &overrides).map_err(|e| e.to_string())?;
        if !outcome.failures.is_empty() {
            return Err(format!("method failures: {:?}", outcome.failures));
        }
        for name in ["one_shot", "random", "fixed_prior", "label_estimate"] {
            let report = outcome
                .reports
                .iter()
                .find(|r| r.method == name)
                .ok_or_else(|| format!("missing report for {name}"))?;
            if report.mae != 0.0 || report.rmse != 0.0 {
                return Err(format!("{name}: MAE {:e} / RMSE {:e}, expected exactly 0", report.mae, report.rmse));
            }
        }
        let elapsed = start.elapsed().as_secs_f64();
        if elapsed >= 5.0 {
            return Err(format!("pipeline took {elapsed:.1}s, budget is 5s"));
        }
        Ok(())
    })();
    check(5, desc, result);
}

#[test]
fn criterion_6_refinement_contracts_error_eightfold() {
    let desc = "corrective refinement with J=3 leaves error/8 within 1 ulp at 6 significant digits";
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let returns: Vec<ReturnObservation> = (0..120)
        .map(|i| {
            let r: f64 = rng.random_range(-0.04..0.04);
            ReturnObservation {
                date: Date { year: 2021, month: (i % 12 + 1) as u8, day: (i % 28 + 1) as u8 },
                log_return: r,
                realized_variance: r * r,
            }
        })
        .collect();
    let windows = build_windows(&returns, 7).unwrap();
    let tau = 5e-4;
    let model = MockModel::new(MockBehavior::Corrective { seed: 0 });
    let result = (|| {
        let pool = build_pool(&windows, &model, 40, 3, tau, 9, "contraction")
            .map_err(|e| e.to_string())?;
        for demo in &pool.demonstrations {
            let sample = windows
                .iter()
                .find(|w| w.end_index == demo.source_index)
                .expect("demonstration points at a training window");
            // The initial prediction is the echoed last variance, as the
            // model saw it: rendered to 6 significant digits.
            let rendered = format_number(sample.history.last().unwrap().realized_variance);
            let initial = parse_forecast(&rendered).unwrap().value;
            let err_init = (initial - sample.target).abs();
            let err_final = (demo.refined_prediction - sample.target).abs();
            let tol = 2e-5 * sample.target.abs().max(initial) + 1e-18;
            if (err_final - err_init / 8.0).abs() > tol {
                return Err(format!(
                    "sample {}: final error {err_final:e} vs initial/8 {:e} (tol {tol:e})",
                    demo.source_index,
                    err_init / 8.0
                ));
            }
        }
        Ok(())
    })();
    check(6, desc, result);
}

#[test]
fn criterion_7_no_test_period_leakage() {
    let desc = "perturbing a test-period price leaves pool, tau, and regime estimates byte-identical";
    let dir = tempfile::tempdir().unwrap();
    let prices_path = dir.path().join("prices.csv");
    write_price_fixture(&prices_path, 220, 77);
    let baseline = std::fs::read_to_string(&prices_path).unwrap();

    let run = |csv_text: &str| -> (String, u64, Vec<(u64, Regime)>) {
        let prices = volregime::ingest::load_prices_from_reader(csv_text.as_bytes()).unwrap();
        let derived =
            volregime::ingest::DerivedData::derive(&prices, "leak", 7, 0.7, 0.8).unwrap();
        let (train, test) = derived.split_windows();
        let model = MockModel::new(MockBehavior::EchoLastVariance { seed: 0 });
        let pool = build_pool(&train, &model, 60, 3, derived.tau, 11, "leak").unwrap();
        let estimates: Vec<(u64, Regime)> = test
            .iter()
            .map(|w| {
                let e = estimate_regime(w, 3, derived.tau).unwrap();
                (e.signal.to_bits(), e.label)
            })
            .collect();
        (serde_json::to_string(&pool).unwrap(), derived.tau.to_bits(), estimates)
    };

    let result = (|| {
        let (pool_a, tau_a, est_a) = run(&baseline);

        // Perturb the final close: this only moves the last window's
        // target, never any history or training data.
        let mut lines: Vec<String> = baseline.lines().map(String::from).collect();
        let last = lines.last().unwrap().clone();
        let (date, close) = last.split_once(',').unwrap();
        let perturbed_last = format!("{date},{}", close.parse::<f64>().unwrap() * 1.5);
        *lines.last_mut().unwrap() = perturbed_last;
        let (pool_b, tau_b, est_b) = run(&(lines.join("\n") + "\n"));

        if pool_a != pool_b {
            return Err("pool bytes changed after perturbing the last test price".into());
        }
        if tau_a != tau_b {
            return Err("tau changed after perturbing the last test price".into());
        }
        if est_a != est_b {
            return Err("a regime estimate changed after perturbing the last test price".into());
        }

        // A mid-test-period perturbation must still leave the pool and tau
        // untouched (it legitimately changes later test windows).
        let mut lines: Vec<String> = baseline.lines().map(String::from).collect();
        let mid = lines.len() - 20;
        let (date, close) = lines[mid].clone().split_once(',').map(|(a, b)| (a.to_string(), b.to_string())).unwrap();
        lines[mid] = format!("{date},{}", close.parse::<f64>().unwrap() * 1.25);
        let (pool_c, tau_c, _) = run(&(lines.join("\n") + "\n"));
        if pool_a != pool_c || tau_a != tau_c {
            return Err("pool or tau changed after a mid-test-period perturbation".into());
        }
        Ok(())
    })();
    check(7, desc, result);
}

fn synthetic_pool(n_low: usize, n_high: usize) -> DemoPool {
    let tau = 1e-4;
    let demonstrations = (0..n_low + n_high)
        .map(|i| {
            let regime = if i < n_low { Regime::Low } else { Regime::High };
            Demonstration {
                prompt_text: format!("demo {i}"),
                refined_prediction: 1e-4,
                regime,
                source_index: i,
                iterations_run: 3,
                parse_fallbacks: 0,
            }
        })
        .collect();
    DemoPool { demonstrations, tau, created_from: "synthetic".into() }
}

fn count_regimes(pool: &DemoPool, indices: &[usize]) -> (usize, usize) {
    let low = indices.iter().filter(|&&i| pool.demonstrations[i].regime == Regime::Low).count();
    (low, indices.len() - low)
}

fn window_with_variances(variances: &[f64]) -> WindowSample {
    let history = variances
        .iter()
        .enumerate()
        .map(|(i, &v)| ReturnObservation {
            date: Date { year: 2022, month: 1, day: (i + 1) as u8 },
            log_return: v.sqrt(),
            realized_variance: v,
        })
        .collect();
    WindowSample { end_index: variances.len() - 1, history, target: 0.0 }
}

#[test]
fn criterion_8_sampler_count_law() {
    let desc = "fixed-prior draws contain exactly 2 low / 3 high over 1000 seeds; regime quotas switch exactly at tau-prime";
    let pool = synthetic_pool(40, 40);
    let result = (|| {
        for seed in 0..1000u64 {
            let selection = sample_fixed_prior(&pool, 5, 0.4, seed);
            if selection.shortfall != 0 {
                return Err(format!("seed {seed}: unexpected shortfall"));
            }
            let (low, high) = count_regimes(&pool, &selection.indices);
            if (low, high) != (2, 3) {
                return Err(format!("seed {seed}: drew {low} low / {high} high, expected 2/3"));
            }
        }

        let tau_prime = 2e-4;
        let config = SamplerConfig {
            strategy: Strategy::LabelEstimate,
            k: 5,
            alpha: 0.4,
            alpha_low: 0.8,
            alpha_high: 0.2,
            m: 3,
            tau_prime,
            seed: 0,
        };
        // Signal exactly at tau-prime counts as high; one ulp below is low.
        let at = window_with_variances(&[1e-4, 1e-4, tau_prime, tau_prime, tau_prime]);
        let below_v = f64::from_bits(tau_prime.to_bits() - 4);
        let below = window_with_variances(&[1e-4, 1e-4, below_v, below_v, below_v]);
        let (sel_at, est_at) = sample_label_estimate(&pool, &at, &config, 1).unwrap();
        let (sel_below, est_below) = sample_label_estimate(&pool, &below, &config, 1).unwrap();
        if est_at.label != Regime::High {
            return Err("signal equal to tau-prime must classify as high".into());
        }
        if est_below.label != Regime::Low {
            return Err("signal below tau-prime must classify as low".into());
        }
        let (low_at, _) = count_regimes(&pool, &sel_at.indices);
        let (low_below, _) = count_regimes(&pool, &sel_below.indices);
        if low_at != 1 {
            return Err(format!("high-regime draw used {low_at} low demos, expected floor(0.2*5)=1"));
        }
        if low_below != 4 {
            return Err(format!("low-regime draw used {low_below} low demos, expected floor(0.8*5)=4"));
        }
        Ok(())
    })();
    check(8, desc, result);
}

#[test]
fn criterion_9_live_backend_ordering() {
    let desc = "live-backend MAE_high ordering (one_shot > random > label_estimate)";
    if std::env::var("VOLREGIME_API_KEY").is_err() || std::env::var("ACCEPTANCE_LIVE").is_err() {
        println!(
            "acceptance criterion 9: SKIPPED - {desc}: requires a configured live backend \
             (set VOLREGIME_API_KEY and ACCEPTANCE_LIVE=1); not verifiable offline"
        );
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let config = pipeline_config(dir.path(), 400, "remote");
    let overrides = Overrides::default();
    let result = (|| {
        runner::cmd_ingest(&config).map_err(|e| e.to_string())?;
        runner::cmd_build_pool(&config, &overrides).map_err(|e| e.to_string())?;
        let outcome = runner::cmd_evaluate(&config, &overrides).map_err(|e| e.to_string())?;
        let high = |name: &str| -> Result<f64, String> {
            outcome
                .reports
                .iter()
                .find(|r| r.method == name)
                .and_then(|r| r.mae_high)
                .ok_or_else(|| format!("no high-regime MAE for {name}"))
        };
        let (one_shot, random, label) = (high("one_shot")?, high("random")?, high("label_estimate")?);
        if let Ok(gjr) = high("gjr_garch") {
            println!(
                "criterion 9 info: label_estimate vs gjr_garch MAE_high gap: {:.1}%",
                (label - gjr) / gjr * 100.0
            );
        }
        if !(one_shot > random && random > label) {
            return Err(format!(
                "ordering violated: one_shot {one_shot:e}, random {random:e}, label_estimate {label:e}"
            ));
        }
        Ok(())
    })();
    check(9, desc, result);
}

#[test]
fn criterion_10_classical_sanity_on_committed_daily_data() {
    let desc = "all four classical baselines complete on a 2520-row daily-close file; GJR high-regime MAE within 5% of GARCH or better";
    let fixture = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/synthetic_sp500.csv");
    let dir = tempfile::tempdir().unwrap();
    let mut config: ExperimentConfig = toml::from_str(&format!(
        "[data]\npath = {:?}\ndataset_id = \"synthetic_sp500\"\n",
        fixture.to_str().unwrap()
    ))
    .unwrap();
    config.output.dir = dir.path().join("out");
    config.methods.icl.clear();
    let result = (|| {
        runner::cmd_ingest(&config).map_err(|e| e.to_string())?;
        let outcome = runner::cmd_evaluate(&config, &Overrides::default()).map_err(|e| e.to_string())?;
        if !outcome.failures.is_empty() {
            return Err(format!("method failures: {:?}", outcome.failures));
        }
        let high = |name: &str| -> Result<f64, String> {
            outcome
                .reports
                .iter()
                .find(|r| r.method == name)
                .and_then(|r| r.mae_high)
                .ok_or_else(|| format!("no high-regime MAE for {name}"))
        };
        for name in ["rolling_mean", "har", "garch", "gjr_garch"] {
            if !outcome.reports.iter().any(|r| r.method == name) {
                return Err(format!("baseline {name} produced no report"));
            }
        }
        let garch = high("garch")?;
        let gjr = high("gjr_garch")?;
        if gjr > garch && (gjr - garch) / garch >= 0.05 {
            return Err(format!(
                "GJR high-regime MAE {gjr:e} worse than GARCH {garch:e} by {:.1}%",
                (gjr - garch) / garch * 100.0
            ));
        }
        Ok(())
    })();
    check(10, desc, result);
}
